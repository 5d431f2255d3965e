//! The `tucker` command-line front end.
//!
//! Every subcommand is a function from parsed arguments to an exit code, so
//! the binary is a one-line wrapper around [`run`].

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    benchmark_size, generate_synthetic, load_dataset, load_dataset_with, write_dataset,
    FilterIndex, Split, TripleStore, VocabMode, Vocabulary,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, with_threads, EvalReport};
use crate::expressiveness::{
    construct_full_expressive, random_world, verify_separation, MAX_ENUMERATED_TRIPLES,
};
use crate::model::{checkpoint, param_count, symmetry_score, ModelKind, TuckerModel};
use crate::tensor::DenseMatrix;
use crate::train::{fit, model_for_config, Preset, TrainConfig};
use crate::verify::{self, Suite, VerifyOptions};

/// `--data` value selecting the generated synthetic world.
pub const SYNTH: &str = "synth";
/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "TUCKER_LOG";

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "test_report.csv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(
    name = "tucker",
    version,
    about = "Tucker-decomposition knowledge-graph embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus per-epoch metrics.
    Train(TrainArgs),
    /// Filtered MRR and hits@k of a checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
    /// Run the built-in correctness suites.
    Verify(VerifyArgs),
    /// Write one relation's d_e × d_e matrix as CSV.
    ExportHeatmap(HeatmapArgs),
    /// Print the parameter count of a model configuration.
    ParamCount(ParamCountArgs),
    /// Write the synthetic world as a dataset directory.
    SynthGen(SynthGenArgs),
    /// Build the exact one-hot model of a world and check its separation.
    ConstructFull(ConstructFullArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset directory with train.txt, valid.txt and test.txt, or `synth`.
    #[arg(long)]
    pub data: String,
    /// Entities in the synthetic world.
    #[arg(long, default_value_t = 200)]
    pub synth_entities: usize,
    /// Seed of the synthetic world (independent of the model seed).
    #[arg(long, default_value_t = 0)]
    pub synth_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// fb15k, fb15k-237, wn18 or wn18rr; individual flags override it.
    #[arg(long, default_value = "wn18rr")]
    pub preset: String,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub de: Option<usize>,
    #[arg(long)]
    pub dr: Option<usize>,
    /// Input dropout.
    #[arg(long)]
    pub d1: Option<f64>,
    /// Relation-matrix dropout.
    #[arg(long)]
    pub d2: Option<f64>,
    /// Hidden dropout.
    #[arg(long)]
    pub d3: Option<f64>,
    /// Label smoothing.
    #[arg(long)]
    pub ls: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate on the validation split every N epochs (0: never).
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
    /// Cap on evaluation threads.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = "tucker-run")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// test or valid.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the metric report as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-query ranks as CSV here.
    #[arg(long)]
    pub ranks: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Run only this suite.
    #[arg(long)]
    pub suite: Option<String>,
    /// Random draws per equivalence suite.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negative control for the ComplEx suite.
    #[arg(long, hide = true)]
    pub corrupt_core: bool,
}

#[derive(Debug, Clone, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Relation name (a `_reverse` suffix selects the reciprocal) or numeric id.
    #[arg(long)]
    pub relation: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ParamCountArgs {
    /// tucker, distmult, complex, simple or rescal.
    #[arg(long, default_value = "tucker")]
    pub model: String,
    /// Preset supplying the dataset and default dimensions.
    #[arg(long)]
    pub preset: Option<String>,
    /// Benchmark dataset whose sizes to use.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub entities: Option<usize>,
    /// Raw relations (reciprocals are added).
    #[arg(long)]
    pub relations: Option<usize>,
    /// Entity dimension; the single dimension of non-Tucker models.
    #[arg(long)]
    pub de: Option<usize>,
    #[arg(long)]
    pub dr: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthGenArgs {
    #[arg(long, default_value_t = 200)]
    pub entities: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ConstructFullArgs {
    /// World to reproduce: a dataset directory (all splits are true facts).
    /// Without it a random world is drawn.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub entities: usize,
    #[arg(long, default_value_t = 2)]
    pub relations: usize,
    #[arg(long, default_value_t = 0.2)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives `checkpoint/` and, for random worlds, `world/`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::ExportHeatmap(a) => cmd_export_heatmap(&a),
        Command::ParamCount(a) => cmd_param_count(&a),
        Command::SynthGen(a) => cmd_synth_gen(&a),
        Command::ConstructFull(a) => cmd_construct_full(&a),
    }
}

/// Builds the training configuration: preset values, then flag overrides.
pub fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = a.preset.parse::<Preset>()?.config();
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.decay {
        cfg.decay = v;
    }
    if let Some(v) = a.de {
        cfg.d_e = v;
    }
    if let Some(v) = a.dr {
        cfg.d_r = v;
    }
    if let Some(v) = a.d1 {
        cfg.dropout.input = v;
    }
    if let Some(v) = a.d2 {
        cfg.dropout.relation = v;
    }
    if let Some(v) = a.d3 {
        cfg.dropout.hidden = v;
    }
    if let Some(v) = a.ls {
        cfg.label_smoothing = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    cfg.seed = a.seed;
    cfg.validate()?;
    Ok(cfg)
}

/// `key=value` lines describing a configuration.
pub fn config_to_text(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "lr={}", cfg.lr);
    let _ = writeln!(out, "decay={}", cfg.decay);
    let _ = writeln!(out, "d_e={}", cfg.d_e);
    let _ = writeln!(out, "d_r={}", cfg.d_r);
    let _ = writeln!(out, "d1={}", cfg.dropout.input);
    let _ = writeln!(out, "d2={}", cfg.dropout.relation);
    let _ = writeln!(out, "d3={}", cfg.dropout.hidden);
    let _ = writeln!(out, "label_smoothing={}", cfg.label_smoothing);
    let _ = writeln!(out, "batch_size={}", cfg.batch_size);
    let _ = writeln!(out, "epochs={}", cfg.epochs);
    let _ = writeln!(out, "seed={}", cfg.seed);
    out
}

fn load_data(args: &DataArgs, vocab: Option<&Vocabulary>) -> Result<(TripleStore, Vocabulary)> {
    if args.data == SYNTH {
        return generate_synthetic(args.synth_entities, args.synth_seed);
    }
    let dir = Path::new(&args.data);
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "dataset directory {} does not exist",
            dir.display()
        )));
    }
    match vocab {
        Some(v) => {
            let mut v = v.clone();
            let store = load_dataset_with(dir, &mut v, VocabMode::Reuse)?;
            Ok((store, v))
        }
        None => load_dataset(dir),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let cfg = resolve_config(a)?;
    let (store, vocab) = load_data(&a.data, None)?;
    let aug = store.augment_reciprocal()?;
    let filter = FilterIndex::build(&aug)?;
    let mut model = model_for_config(vocab.n_entities(), aug.n_relations_augmented(), &cfg)?;
    log::info!(
        "training on {} entities, {} relations, {} train triples",
        vocab.n_entities(),
        vocab.n_relations(),
        store.train.len()
    );

    let eval_every = a.eval_every;
    let has_valid = !aug.valid.is_empty();
    let train_log = with_threads(a.threads, || {
        fit(&mut model, &aug, &cfg, |epoch, m| {
            if eval_every > 0 && has_valid && (epoch + 1) % eval_every == 0 {
                evaluate(m, &aug, Split::Valid, &filter).map(Some)
            } else {
                Ok(None)
            }
        })
    })??;

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    checkpoint::save(&a.out.join(CHECKPOINT_DIR), &model, Some(&vocab))?;
    train_log.write_csv(&a.out.join(METRICS_FILE))?;
    write_file(&a.out.join(CONFIG_FILE), &config_to_text(&cfg))?;
    if let Some(last) = train_log.records.last() {
        println!("final train loss {:.6}", last.train_loss);
    }
    if !aug.test.is_empty() {
        let report = with_threads(a.threads, || evaluate(&model, &aug, Split::Test, &filter))??;
        print!("{}", report.to_table());
        write_file(&a.out.join(REPORT_FILE), &report.to_csv())?;
    }
    println!(
        "checkpoint written to {}",
        a.out.join(CHECKPOINT_DIR).display()
    );
    Ok(0)
}

fn parse_split(s: &str) -> Result<Split> {
    match s.to_ascii_lowercase().as_str() {
        "test" => Ok(Split::Test),
        "valid" | "validation" => Ok(Split::Valid),
        "train" => Ok(Split::Train),
        _ => Err(Error::UnknownName {
            what: "split",
            name: s.to_string(),
        }),
    }
}

fn check_compatible(model: &TuckerModel, store: &TripleStore, vocab: &Vocabulary) -> Result<()> {
    if model.n_entities() != vocab.n_entities()
        || model.n_relations() != store.n_relations_augmented()
    {
        return Err(Error::Config(format!(
            "checkpoint has {} entities and {} relations, dataset has {} and {}",
            model.n_entities(),
            model.n_relations(),
            vocab.n_entities(),
            store.n_relations_augmented()
        )));
    }
    Ok(())
}

pub fn evaluate_checkpoint(a: &EvaluateArgs) -> Result<EvalReport> {
    let (model, ckpt_vocab) = checkpoint::load(&a.checkpoint)?;
    let split = parse_split(&a.split)?;
    let (store, vocab) = load_data(&a.data, ckpt_vocab.as_ref())?;
    check_compatible(&model, &store, &vocab)?;
    let aug = store.augment_reciprocal()?;
    let filter = FilterIndex::build(&aug)?;
    with_threads(a.threads, || evaluate(&model, &aug, split, &filter))?
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<i32> {
    let report = evaluate_checkpoint(a)?;
    print!("{}", report.to_table());
    if let Some(path) = &a.out {
        write_file(path, &report.to_csv())?;
    }
    if let Some(path) = &a.ranks {
        write_file(path, &report.ranks_csv())?;
    }
    Ok(0)
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let opts = VerifyOptions {
        suite: a.suite.as_deref().map(str::parse::<Suite>).transpose()?,
        trials: a.trials,
        seed: a.seed,
        corrupt_core: a.corrupt_core,
    };
    let results = verify::run(&opts);
    for r in &results {
        println!("{r}");
    }
    Ok(if results.iter().all(|r| r.passed) {
        0
    } else {
        1
    })
}

/// One row per line, 17 significant digits, so values survive a text round trip.
pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows = Vec::new();
    for (lineno, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                path: PathBuf::from("<csv>"),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

fn resolve_relation(name: &str, vocab: Option<&Vocabulary>, n_r_aug: usize) -> Result<usize> {
    let id = vocab
        .and_then(|v| v.relation_id(name))
        .or_else(|| name.parse::<usize>().ok())
        .ok_or_else(|| Error::UnknownName {
            what: "relation",
            name: name.to_string(),
        })?;
    crate::error::check_index("relation", id, n_r_aug)?;
    Ok(id)
}

pub fn cmd_export_heatmap(a: &HeatmapArgs) -> Result<i32> {
    let (model, vocab) = checkpoint::load(&a.checkpoint)?;
    let r = resolve_relation(&a.relation, vocab.as_ref(), model.n_relations())?;
    let m = model.relation_matrix(r)?;
    let score = symmetry_score(&m)?;
    write_file(&a.out, &matrix_to_csv(&m))?;
    let score_path = a.out.with_extension("symmetry.txt");
    write_file(&score_path, &format!("symmetry_score={score}\n"))?;
    println!("symmetry_score={score}");
    println!(
        "wrote {}x{} matrix to {}",
        m.rows(),
        m.cols(),
        a.out.display()
    );
    Ok(0)
}

/// `9389260` → `"9,389,260"`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn resolve_param_count(a: &ParamCountArgs) -> Result<(ModelKind, usize, usize, usize)> {
    let preset = a.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    let dataset = a
        .dataset
        .clone()
        .or_else(|| preset.map(|p| p.name().to_string()));
    let bench = dataset
        .as_deref()
        .map(|d| {
            benchmark_size(d).ok_or_else(|| Error::UnknownName {
                what: "dataset",
                name: d.to_string(),
            })
        })
        .transpose()?;
    let n_e = a
        .entities
        .or(bench.map(|b| b.0))
        .ok_or_else(|| Error::Config("give --entities, --dataset or --preset".into()))?;
    let n_r = a
        .relations
        .or(bench.map(|b| b.1))
        .ok_or_else(|| Error::Config("give --relations, --dataset or --preset".into()))?;
    let preset_cfg = preset.map(Preset::config);
    let d_e = a.de.or(preset_cfg.as_ref().map(|c| c.d_e));
    let d_r = a.dr.or(preset_cfg.as_ref().map(|c| c.d_r));
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| Error::Config(format!("give {flag} or --preset")))
    };
    let kind = match a.model.to_ascii_lowercase().as_str() {
        "tucker" => ModelKind::Tucker {
            d_e: need(d_e, "--de")?,
            d_r: need(d_r, "--dr")?,
        },
        "distmult" => ModelKind::DistMult {
            d: need(d_e, "--de")?,
        },
        "complex" => ModelKind::ComplEx {
            d: need(d_e, "--de")?,
        },
        "simple" => ModelKind::SimplE {
            d: need(d_e, "--de")?,
        },
        "rescal" => ModelKind::Rescal {
            d: need(d_e, "--de")?,
        },
        other => {
            return Err(Error::UnknownName {
                what: "model",
                name: other.to_string(),
            })
        }
    };
    let n_r_aug = 2 * n_r;
    Ok((kind, n_e, n_r_aug, param_count(n_e, n_r_aug, kind)))
}

pub fn cmd_param_count(a: &ParamCountArgs) -> Result<i32> {
    let (kind, n_e, n_r_aug, count) = resolve_param_count(a)?;
    println!(
        "{} (n_e={n_e}, n_r={n_r_aug} with reciprocals, {kind:?}): {} parameters",
        kind.name(),
        group_thousands(count)
    );
    Ok(0)
}

pub fn cmd_synth_gen(a: &SynthGenArgs) -> Result<i32> {
    let (store, vocab) = generate_synthetic(a.entities, a.seed)?;
    write_dataset(&a.out, &store, &vocab)?;
    println!(
        "wrote {} entities, {} relations, {}/{}/{} train/valid/test triples to {}",
        vocab.n_entities(),
        vocab.n_relations(),
        store.train.len(),
        store.valid.len(),
        store.test.len(),
        a.out.display()
    );
    Ok(0)
}

pub fn cmd_construct_full(a: &ConstructFullArgs) -> Result<i32> {
    let (store, vocab) = match &a.data {
        Some(dir) => load_dataset(dir)?,
        None => {
            if !(0.0..=1.0).contains(&a.density) {
                return Err(Error::Config(format!(
                    "density must be in [0, 1], got {}",
                    a.density
                )));
            }
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(a.seed);
            let world = random_world(a.entities, a.relations, a.density, &mut rng);
            let vocab = Vocabulary::from_names(
                (0..a.entities).map(|i| format!("e{i}")).collect(),
                (0..a.relations).map(|i| format!("r{i}")).collect(),
            )?;
            // Every fact is both trained on and queried.
            let store = TripleStore::new(world.clone(), Vec::new(), world, a.relations);
            write_dataset(&a.out.join("world"), &store, &vocab)?;
            (store, vocab)
        }
    };
    let aug = store.augment_reciprocal()?;
    let n_e = vocab.n_entities();
    let n_r = aug.n_relations_augmented();
    let size = n_e.saturating_mul(n_e).saturating_mul(n_r);
    if size > MAX_ENUMERATED_TRIPLES {
        return Err(Error::WorldTooLarge {
            triples: size,
            limit: MAX_ENUMERATED_TRIPLES,
        });
    }
    let mut world: Vec<_> = aug.all_triples().copied().collect();
    world.sort_unstable();
    world.dedup();
    let model = construct_full_expressive(&world, n_e, n_r)?;
    let report = verify_separation(&model, &world, 0.5)?;
    checkpoint::save(&a.out.join(CHECKPOINT_DIR), &model, Some(&vocab))?;
    print!("{}", report.to_text());
    Ok(if report.is_exact() { 0 } else { 1 })
}
