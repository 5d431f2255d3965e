//! On-disk checkpoints.
//!
//! A checkpoint is a directory holding:
//! - `meta.txt`: `key=value` lines (format version, sizes, batch-norm and
//!   dropout settings, vocabulary file names);
//! - `entity.bin`, `relation.bin`, `core.bin` and, when batch normalization is
//!   enabled, `batchnorm.bin`;
//! - optionally `entities.tsv` / `relations.tsv` vocabulary dumps.
//!
//! Each `.bin` file is a 20-byte header (`b"TKER"`, little-endian `u32` rank,
//! three little-endian `u32` dimension slots with unused slots zero) followed
//! by the values as little-endian `f64` in row-major order. The core tensor
//! uses the `((i * d_r) + j) * d_e + k` layout of [`DenseTensor3`].
//! `batchnorm.bin` is an `8 × d_e` matrix with rows: input scale, shift,
//! running mean, running variance, then the same four for the hidden site.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{BatchNormState, DropoutRates, Trainable, TuckerModel};
use crate::data::{Vocabulary, ENTITY_VOCAB_FILE, RELATION_VOCAB_FILE};
use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, DenseTensor3};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &[u8; 4] = b"TKER";
pub const HEADER_LEN: usize = 20;
pub const META_FILE: &str = "meta.txt";

const ENTITY_FILE: &str = "entity.bin";
const RELATION_FILE: &str = "relation.bin";
const CORE_FILE: &str = "core.bin";
const BN_FILE: &str = "batchnorm.bin";

/// Serializes an array with the checkpoint header.
pub fn encode_array(dims: &[usize], data: &[f64]) -> Vec<u8> {
    assert!((1..=3).contains(&dims.len()), "rank must be 1..=3");
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for slot in 0..3 {
        let d = dims.get(slot).copied().unwrap_or(0) as u32;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an array written by [`encode_array`], returning its dims and values.
pub fn decode_array(bytes: &[u8]) -> std::result::Result<(Vec<usize>, Vec<f64>), String> {
    if bytes.len() < HEADER_LEN {
        return Err("file shorter than header".into());
    }
    if &bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let rank = word(1);
    if !(1..=3).contains(&rank) {
        return Err(format!("unsupported rank {rank}"));
    }
    let dims: Vec<usize> = (0..rank).map(|s| word(2 + s)).collect();
    let count: usize = dims.iter().product();
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * count {
        return Err(format!(
            "expected {} data bytes for dims {dims:?}, found {}",
            8 * count,
            body.len()
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_owned(),
        msg: msg.into(),
    }
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn read_array(dir: &Path, name: &str, rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let (dims, data) = decode_array(&bytes).map_err(|m| ckpt_err(&path, m))?;
    if dims.len() != rank {
        return Err(ckpt_err(
            &path,
            format!("expected rank {rank}, found {}", dims.len()),
        ));
    }
    Ok((dims, data))
}

/// Writes `model` (and `vocab`, if given) into `dir`, creating it if needed.
pub fn save(dir: &Path, model: &TuckerModel, vocab: Option<&Vocabulary>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d_e = model.entity_dim();
    let bn_params = model.bn_input.as_ref().zip(model.bn_hidden.as_ref());

    let mut meta = String::new();
    let mut kv = |k: &str, v: String| {
        meta.push_str(k);
        meta.push('=');
        meta.push_str(&v);
        meta.push('\n');
    };
    kv("format_version", FORMAT_VERSION.to_string());
    kv("n_e", model.n_entities().to_string());
    kv("n_r_aug", model.n_relations().to_string());
    kv("d_e", d_e.to_string());
    kv("d_r", model.relation_dim().to_string());
    kv("batch_norm", bn_params.is_some().to_string());
    if let Some((bn, _)) = bn_params {
        kv("bn_momentum", format!("{:?}", bn.momentum));
        kv("bn_epsilon", format!("{:?}", bn.epsilon));
    }
    kv("dropout_input", format!("{:?}", model.dropout.input));
    kv("dropout_relation", format!("{:?}", model.dropout.relation));
    kv("dropout_hidden", format!("{:?}", model.dropout.hidden));
    kv("trainable_relation", model.trainable.relation.to_string());
    kv("trainable_core", model.trainable.core.to_string());
    match vocab {
        Some(_) => {
            kv("entity_vocab", ENTITY_VOCAB_FILE.into());
            kv("relation_vocab", RELATION_VOCAB_FILE.into());
        }
        None => {
            kv("entity_vocab", "none".into());
            kv("relation_vocab", "none".into());
        }
    }
    write_file(dir.join(META_FILE), meta.as_bytes())?;

    let (n_e, n_r) = (model.n_entities(), model.n_relations());
    write_file(
        dir.join(ENTITY_FILE),
        &encode_array(&[n_e, d_e], model.entity.data()),
    )?;
    write_file(
        dir.join(RELATION_FILE),
        &encode_array(&[n_r, model.relation_dim()], model.relation.data()),
    )?;
    write_file(
        dir.join(CORE_FILE),
        &encode_array(&model.core.dims(), model.core.data()),
    )?;
    if let Some((a, b)) = bn_params {
        let mut rows = Vec::with_capacity(8 * d_e);
        for bn in [a, b] {
            rows.extend_from_slice(&bn.scale);
            rows.extend_from_slice(&bn.shift);
            rows.extend_from_slice(&bn.running_mean);
            rows.extend_from_slice(&bn.running_var);
        }
        write_file(dir.join(BN_FILE), &encode_array(&[8, d_e], &rows))?;
    }
    if let Some(vocab) = vocab {
        vocab.write_dir(dir)?;
    }
    Ok(())
}

fn parse_meta(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            msg: "expected key=value".into(),
        })?;
        map.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(map)
}

fn meta_value<T: std::str::FromStr>(
    meta: &BTreeMap<String, String>,
    path: &Path,
    key: &str,
) -> Result<T> {
    let raw = meta
        .get(key)
        .ok_or_else(|| ckpt_err(path, format!("missing key '{key}'")))?;
    raw.parse()
        .map_err(|_| ckpt_err(path, format!("bad value '{raw}' for '{key}'")))
}

/// Reads a checkpoint written by [`save`].
pub fn load(dir: &Path) -> Result<(TuckerModel, Option<Vocabulary>)> {
    let meta_path = dir.join(META_FILE);
    let meta = parse_meta(&meta_path)?;
    let version: u32 = meta_value(&meta, &meta_path, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(ckpt_err(
            &meta_path,
            format!("unsupported format version {version}"),
        ));
    }
    let n_e: usize = meta_value(&meta, &meta_path, "n_e")?;
    let n_r: usize = meta_value(&meta, &meta_path, "n_r_aug")?;
    let d_e: usize = meta_value(&meta, &meta_path, "d_e")?;
    let d_r: usize = meta_value(&meta, &meta_path, "d_r")?;

    let (dims, data) = read_array(dir, ENTITY_FILE, 2)?;
    if dims != [n_e, d_e] {
        return Err(ckpt_err(
            &dir.join(ENTITY_FILE),
            format!("dims {dims:?} disagree with meta"),
        ));
    }
    let entity = DenseMatrix::from_vec(n_e, d_e, data)?;
    let (dims, data) = read_array(dir, RELATION_FILE, 2)?;
    if dims != [n_r, d_r] {
        return Err(ckpt_err(
            &dir.join(RELATION_FILE),
            format!("dims {dims:?} disagree with meta"),
        ));
    }
    let relation = DenseMatrix::from_vec(n_r, d_r, data)?;
    let (dims, data) = read_array(dir, CORE_FILE, 3)?;
    let core = DenseTensor3::from_vec(dims[0], dims[1], dims[2], data)?;

    let mut model = TuckerModel::new(entity, relation, core)?;
    model.dropout = DropoutRates::new(
        meta_value(&meta, &meta_path, "dropout_input")?,
        meta_value(&meta, &meta_path, "dropout_relation")?,
        meta_value(&meta, &meta_path, "dropout_hidden")?,
    );
    model.trainable = Trainable {
        relation: meta_value(&meta, &meta_path, "trainable_relation")?,
        core: meta_value(&meta, &meta_path, "trainable_core")?,
    };
    if meta_value::<bool>(&meta, &meta_path, "batch_norm")? {
        let momentum: f64 = meta_value(&meta, &meta_path, "bn_momentum")?;
        let epsilon: f64 = meta_value(&meta, &meta_path, "bn_epsilon")?;
        let (dims, data) = read_array(dir, BN_FILE, 2)?;
        if dims != [8, d_e] {
            return Err(ckpt_err(
                &dir.join(BN_FILE),
                format!("dims {dims:?}, expected [8, {d_e}]"),
            ));
        }
        let row = |i: usize| data[i * d_e..(i + 1) * d_e].to_vec();
        let site = |base: usize| BatchNormState {
            scale: row(base),
            shift: row(base + 1),
            running_mean: row(base + 2),
            running_var: row(base + 3),
            momentum,
            epsilon,
        };
        model.bn_input = Some(site(0));
        model.bn_hidden = Some(site(4));
    }

    let vocab = match meta.get("entity_vocab").map(String::as_str) {
        None | Some("none") => None,
        Some(_) => {
            let vocab = Vocabulary::read_dir(dir)?;
            if vocab.n_entities() != n_e || vocab.n_relations_augmented() != n_r {
                return Err(ckpt_err(dir, "vocabulary sizes disagree with meta"));
            }
            Some(vocab)
        }
    };
    Ok((model, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_array(&[2, 3, 4], &[0.5; 24]);
        assert_eq!(&bytes[..4], b"TKER");
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &4u32.to_le_bytes());
        assert_eq!(&bytes[20..28], &0.5f64.to_le_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 24 * 8);

        let m = encode_array(&[5, 6], &vec![0.0; 30]);
        assert_eq!(&m[16..20], &0u32.to_le_bytes());
    }

    #[test]
    fn corrupt_arrays_are_rejected() {
        let mut bytes = encode_array(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert!(decode_array(&bytes[..10]).is_err());
        bytes.pop();
        assert!(decode_array(&bytes).is_err());
        let mut bad = encode_array(&[1], &[1.0]);
        bad[0] = b'X';
        assert!(decode_array(&bad).is_err());
    }

    #[test]
    fn model_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = init_model(9, 4, 5, 3, &mut rng)
            .unwrap()
            .with_dropout(DropoutRates::new(0.2, 0.1, 0.3));
        model.bn_hidden.as_mut().unwrap().running_var[2] = 0.123456789;
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &model, None).unwrap();
        let (back, vocab) = load(dir.path()).unwrap();
        assert_eq!(back, model);
        assert!(vocab.is_none());
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load(&dir.path().join("nope")).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn arrays_round_trip(d1 in 1usize..5, d2 in 1usize..5, d3 in 1usize..5, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..d1 * d2 * d3).map(|_| rng.random::<f64>() * 1e6 - 5e5).collect();
            let (dims, back) = decode_array(&encode_array(&[d1, d2, d3], &data)).unwrap();
            prop_assert_eq!(dims, vec![d1, d2, d3]);
            prop_assert_eq!(back, data);
        }
    }
}
