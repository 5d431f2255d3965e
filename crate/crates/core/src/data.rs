//! Triple files, vocabularies, reciprocal relations, filter indexes and
//! 1-N training batches.
//!
//! Datasets use the common `train.txt` / `valid.txt` / `test.txt` layout with
//! one `subject<TAB>relation<TAB>object` triple per line.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_index, Error, Result};
use crate::tensor::DenseMatrix;

/// `(subject, relation, object)` ids.
pub type Triple = (usize, usize, usize);

/// Suffix used to name reciprocal relations, e.g. `hypernym_reverse`.
pub const RECIPROCAL_SUFFIX: &str = "_reverse";

pub const SPLIT_FILES: [&str; 3] = ["train.txt", "valid.txt", "test.txt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => SPLIT_FILES[0],
            Split::Valid => SPLIT_FILES[1],
            Split::Test => SPLIT_FILES[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabMode {
    /// Unseen names get fresh ids.
    Build,
    /// Unseen names are an error.
    Reuse,
}

/// Bijective name ↔ id maps for entities and (raw) relations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    entities: Vec<String>,
    entity_ids: HashMap<String, usize>,
    relations: Vec<String>,
    relation_ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self> {
        let mut v = Vocabulary::new();
        for e in entities {
            if v.entity_ids.contains_key(&e) {
                return Err(Error::Config(format!("duplicate entity name '{e}'")));
            }
            v.intern_entity(&e);
        }
        for r in relations {
            if v.relation_ids.contains_key(&r) {
                return Err(Error::Config(format!("duplicate relation name '{r}'")));
            }
            v.intern_relation(&r);
        }
        Ok(v)
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn n_relations_augmented(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_ids.get(name).copied()
    }

    /// Resolves a raw relation name, or a reciprocal name ending in
    /// [`RECIPROCAL_SUFFIX`], to its augmented id.
    pub fn relation_id(&self, name: &str) -> Option<usize> {
        if let Some(&id) = self.relation_ids.get(name) {
            return Some(id);
        }
        name.strip_suffix(RECIPROCAL_SUFFIX)
            .and_then(|base| self.relation_ids.get(base))
            .map(|&id| id + self.relations.len())
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entities.get(id).map(String::as_str)
    }

    /// Name of an augmented relation id.
    pub fn relation_name(&self, id: usize) -> Option<String> {
        let n = self.relations.len();
        if id < n {
            Some(self.relations[id].clone())
        } else if id < 2 * n {
            Some(format!("{}{RECIPROCAL_SUFFIX}", self.relations[id - n]))
        } else {
            None
        }
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    fn intern_entity(&mut self, name: &str) -> usize {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entities.len();
        self.entities.push(name.to_owned());
        self.entity_ids.insert(name.to_owned(), id);
        id
    }

    fn intern_relation(&mut self, name: &str) -> usize {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = self.relations.len();
        self.relations.push(name.to_owned());
        self.relation_ids.insert(name.to_owned(), id);
        id
    }

    /// Writes `entities.tsv` and `relations.tsv` (`name<TAB>id`) into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        write_name_file(&dir.join(ENTITY_VOCAB_FILE), &self.entities)?;
        write_name_file(&dir.join(RELATION_VOCAB_FILE), &self.relations)
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let entities = read_name_file(&dir.join(ENTITY_VOCAB_FILE))?;
        let relations = read_name_file(&dir.join(RELATION_VOCAB_FILE))?;
        Vocabulary::from_names(entities, relations)
    }
}

pub const ENTITY_VOCAB_FILE: &str = "entities.tsv";
pub const RELATION_VOCAB_FILE: &str = "relations.tsv";

fn write_name_file(path: &Path, names: &[String]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, name) in names.iter().enumerate() {
        writeln!(w, "{name}\t{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_name_file(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut names = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_owned(),
            line: lineno + 1,
            msg,
        };
        let (name, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| parse_err("expected name<TAB>id".into()))?;
        let id: usize = id
            .parse()
            .map_err(|_| parse_err(format!("bad id '{id}'")))?;
        if id != names.len() {
            return Err(parse_err(format!(
                "expected id {}, found {id}",
                names.len()
            )));
        }
        names.push(name.to_owned());
    }
    Ok(names)
}

/// Id-encoded train/valid/test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleStore {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    /// Number of raw relations; reciprocal of `r` is `r + n_relations`.
    pub n_relations: usize,
    pub augmented: bool,
}

impl TripleStore {
    pub fn new(
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
        n_relations: usize,
    ) -> Self {
        TripleStore {
            train,
            valid,
            test,
            n_relations,
            augmented: false,
        }
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn n_relations_augmented(&self) -> usize {
        2 * self.n_relations
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Adds `(o, r + n_r, s)` for every `(s, r, o)` in every split.
    pub fn augment_reciprocal(&self) -> Result<TripleStore> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        let n_r = self.n_relations;
        let double = |split: &[Triple]| -> Vec<Triple> {
            let mut out = Vec::with_capacity(2 * split.len());
            out.extend_from_slice(split);
            out.extend(split.iter().map(|&(s, r, o)| (o, r + n_r, s)));
            out
        };
        Ok(TripleStore {
            train: double(&self.train),
            valid: double(&self.valid),
            test: double(&self.test),
            n_relations: n_r,
            augmented: true,
        })
    }

    /// Triples whose relation is not a reciprocal.
    pub fn raw_split(&self, split: Split) -> Vec<Triple> {
        let n_r = self.n_relations;
        self.split(split)
            .iter()
            .copied()
            .filter(|&(_, r, _)| r < n_r)
            .collect()
    }
}

fn dedup_in_order(triples: Vec<Triple>) -> (Vec<Triple>, usize) {
    let mut seen = HashSet::with_capacity(triples.len());
    let before = triples.len();
    let kept: Vec<Triple> = triples.into_iter().filter(|t| seen.insert(*t)).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Reads one triple file, interning names into `vocab`.
pub fn load_triples(path: &Path, vocab: &mut Vocabulary, mode: VocabMode) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut triples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let triple = match mode {
            VocabMode::Build => (
                vocab.intern_entity(fields[0]),
                vocab.intern_relation(fields[1]),
                vocab.intern_entity(fields[2]),
            ),
            VocabMode::Reuse => {
                let entity = |name: &str| {
                    vocab.entity_id(name).ok_or_else(|| Error::UnknownName {
                        what: "entity",
                        name: name.to_owned(),
                    })
                };
                let relation = vocab.relation_ids.get(fields[1]).copied().ok_or_else(|| {
                    Error::UnknownName {
                        what: "relation",
                        name: fields[1].to_owned(),
                    }
                })?;
                (entity(fields[0])?, relation, entity(fields[2])?)
            }
        };
        triples.push(triple);
    }
    let (triples, dropped) = dedup_in_order(triples);
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} duplicate triples", path.display());
    }
    Ok(triples)
}

/// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`. Ids are assigned
/// in order of first appearance across the three files.
pub fn load_dataset(dir: &Path) -> Result<(TripleStore, Vocabulary)> {
    let mut vocab = Vocabulary::new();
    let store = load_dataset_with(dir, &mut vocab, VocabMode::Build)?;
    Ok((store, vocab))
}

pub fn load_dataset_with(
    dir: &Path,
    vocab: &mut Vocabulary,
    mode: VocabMode,
) -> Result<TripleStore> {
    let mut splits = Vec::with_capacity(3);
    for split in Split::ALL {
        splits.push(load_triples(&dir.join(split.file_name()), vocab, mode)?);
    }
    let test = splits.pop().unwrap_or_default();
    let valid = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(TripleStore::new(train, valid, test, vocab.n_relations()))
}

/// Writes the raw (non-reciprocal) triples of each split as TSV, plus the
/// vocabulary dumps.
pub fn write_dataset(dir: &Path, store: &TripleStore, vocab: &Vocabulary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (s, r, o) in store.raw_split(split) {
            let name = |id: usize| {
                vocab.entity_name(id).ok_or(Error::Index {
                    what: "entity",
                    id,
                    len: vocab.n_entities(),
                })
            };
            let rel = vocab.relations().get(r).ok_or(Error::Index {
                what: "relation",
                id: r,
                len: vocab.n_relations(),
            })?;
            writeln!(w, "{}\t{}\t{}", name(s)?, rel, name(o)?).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    vocab.write_dir(dir)
}

/// All known objects per `(subject, relation)` across every split; used to
/// filter competing true answers out of rankings.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    map: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn build(store: &TripleStore) -> Result<FilterIndex> {
        if !store.augmented {
            return Err(Error::NotAugmented);
        }
        Ok(Self::from_triples(store.all_triples().copied()))
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> FilterIndex {
        let mut sets: HashMap<(usize, usize), BTreeSet<usize>> = HashMap::new();
        for (s, r, o) in triples {
            sets.entry((s, r)).or_default().insert(o);
        }
        FilterIndex {
            map: sets
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
        }
    }

    /// Sorted known objects for `(s, r)`; empty if the pair is unknown.
    pub fn objects(&self, s: usize, r: usize) -> &[usize] {
        self.map.get(&(s, r)).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, s: usize, r: usize, o: usize) -> bool {
        self.objects(s, r).binary_search(&o).is_ok()
    }

    pub fn n_pairs(&self) -> usize {
        self.map.len()
    }
}

/// One 1-N training batch: `(s, r)` pairs and their true training objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub pairs: Vec<(usize, usize)>,
    pub objects: Vec<Vec<usize>>,
    pub n_entities: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Binary label vector over all entities for pair `i`.
    pub fn label_vector(&self, i: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.n_entities];
        for &o in &self.objects[i] {
            y[o] = 1.0;
        }
        y
    }

    /// `len() × n_entities` label matrix.
    pub fn labels(&self) -> DenseMatrix {
        let mut y = DenseMatrix::zeros(self.len(), self.n_entities);
        for (i, objs) in self.objects.iter().enumerate() {
            let row = y.row_mut(i);
            for &o in objs {
                row[o] = 1.0;
            }
        }
        y
    }
}

/// Unique training `(s, r)` pairs with their true objects, in a fixed order.
#[derive(Debug, Clone)]
pub struct TrainingPairs {
    pairs: Vec<((usize, usize), Vec<usize>)>,
    n_entities: usize,
}

impl TrainingPairs {
    pub fn new(store: &TripleStore, n_entities: usize) -> Result<Self> {
        if !store.augmented {
            return Err(Error::NotAugmented);
        }
        let mut map: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for &(s, r, o) in &store.train {
            check_index("entity", s.max(o), n_entities)?;
            map.entry((s, r)).or_default().insert(o);
        }
        Ok(TrainingPairs {
            pairs: map
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            n_entities,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Shuffles the pairs with `rng` and chunks them into batches.
    pub fn batches<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<Batch> {
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(rng);
        order
            .chunks(batch_size.max(1))
            .map(|chunk| Batch {
                pairs: chunk.iter().map(|&i| self.pairs[i].0).collect(),
                objects: chunk.iter().map(|&i| self.pairs[i].1.clone()).collect(),
                n_entities: self.n_entities,
            })
            .collect()
    }
}

/// One epoch of shuffled 1-N batches over the training split.
pub fn make_1n_batches<R: Rng + ?Sized>(
    store: &TripleStore,
    n_entities: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Batch>> {
    Ok(TrainingPairs::new(store, n_entities)?.batches(batch_size, rng))
}

/// `(name, entities, relations)` of the standard benchmark datasets.
pub const BENCHMARKS: [(&str, usize, usize); 4] = [
    ("fb15k", 14_951, 1_345),
    ("fb15k-237", 14_541, 237),
    ("wn18", 40_943, 18),
    ("wn18rr", 40_943, 11),
];

/// Entity and raw relation counts of a benchmark dataset, by case-insensitive name.
pub fn benchmark_size(name: &str) -> Option<(usize, usize)> {
    BENCHMARKS
        .iter()
        .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
        .map(|&(_, e, r)| (e, r))
}

/// Relation names of the synthetic world, in id order.
pub const SYNTHETIC_RELATIONS: [&str; 5] =
    ["similar_to", "precedes", "maps_a", "maps_b", "maps_ab"];

/// Generates a small relational world with learnable regularities:
///
/// - `similar_to`: a sparse random undirected graph, stored in both directions;
/// - `precedes`: a strict total order over a hidden chain of `n_e / 4` entities;
/// - `maps_a`, `maps_b`: random maps between hidden groups of about ten
///   entities (`a maps_x b` iff `group(b) = f_x(group(a))`);
/// - `maps_ab`: their relational composition.
///
/// Facts are split 80/10/10, then valid/test facts mentioning an entity or
/// relation absent from train are moved into train. Ids follow first
/// appearance in train, valid, test, so writing and reloading the dataset
/// reproduces them.
pub fn generate_synthetic(n_entities: usize, seed: u64) -> Result<(TripleStore, Vocabulary)> {
    if n_entities < 20 {
        return Err(Error::Config(format!(
            "synthetic world needs at least 20 entities, got {n_entities}"
        )));
    }
    let n = n_entities;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world: Vec<Triple> = Vec::new();

    // similar_to
    let edge_p = 3.0 / n as f64;
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.random::<f64>() < edge_p {
                world.push((a, 0, b));
                world.push((b, 0, a));
            }
        }
    }

    // precedes
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let chain = &perm[..(n / 4).max(5)];
    for (i, &a) in chain.iter().enumerate() {
        for &b in &chain[i + 1..] {
            world.push((a, 1, b));
        }
    }

    // maps_a, maps_b, maps_ab
    let n_groups = (n / 10).max(2);
    perm.shuffle(&mut rng);
    let group: Vec<usize> = (0..n).map(|e| perm[e] % n_groups).collect();
    let mut members = vec![Vec::new(); n_groups];
    for (e, &g) in group.iter().enumerate() {
        members[g].push(e);
    }
    let map_a: Vec<usize> = (0..n_groups)
        .map(|_| rng.random_range(0..n_groups))
        .collect();
    let map_b: Vec<usize> = (0..n_groups)
        .map(|_| rng.random_range(0..n_groups))
        .collect();
    for (rel, target) in [
        (2, map_a.clone()),
        (3, map_b.clone()),
        (4, map_a.iter().map(|&g| map_b[g]).collect::<Vec<_>>()),
    ] {
        for a in 0..n {
            for &b in &members[target[group[a]]] {
                world.push((a, rel, b));
            }
        }
    }

    world.shuffle(&mut rng);
    let n_train = world.len() * 8 / 10;
    let n_valid = world.len() / 10;
    let mut train: Vec<Triple> = world[..n_train].to_vec();
    let mut held = [
        world[n_train..n_train + n_valid].to_vec(),
        world[n_train + n_valid..].to_vec(),
    ];

    let mut seen_e = vec![false; n];
    let mut seen_r = [false; 5];
    for &(s, r, o) in &train {
        seen_e[s] = true;
        seen_e[o] = true;
        seen_r[r] = true;
    }
    for split in held.iter_mut() {
        split.retain(|&(s, r, o)| {
            if seen_e[s] && seen_e[o] && seen_r[r] {
                true
            } else {
                seen_e[s] = true;
                seen_e[o] = true;
                seen_r[r] = true;
                train.push((s, r, o));
                false
            }
        });
    }
    let [valid, test] = held;

    // Renumber by first appearance so a TSV round trip is the identity.
    let mut vocab = Vocabulary::new();
    let mut remap = |split: &[Triple]| -> Vec<Triple> {
        split
            .iter()
            .map(|&(s, r, o)| {
                (
                    vocab.intern_entity(&format!("e{s:03}")),
                    vocab.intern_relation(SYNTHETIC_RELATIONS[r]),
                    vocab.intern_entity(&format!("e{o:03}")),
                )
            })
            .collect()
    };
    let train = remap(&train);
    let valid = remap(&valid);
    let test = remap(&test);
    let n_r = vocab.n_relations();
    Ok((TripleStore::new(train, valid, test, n_r), vocab))
}
