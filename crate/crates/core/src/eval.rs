//! Filtered ranking evaluation: MRR and hits@k.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{FilterIndex, Split, Triple, TripleStore};
use crate::error::{check_index, Error, Result};
use crate::model::TuckerModel;

pub const HITS_KS: [usize; 3] = [1, 3, 10];

/// Queries scored together per model call.
const QUERY_CHUNK: usize = 64;

/// Rank of `true_o` among all entities once every other known-true object
/// has been removed. Ties do not count against the true object.
pub fn filtered_rank(scores: &[f64], true_o: usize, known: &[usize]) -> Result<usize> {
    check_index("entity", true_o, scores.len())?;
    let target = scores[true_o];
    let mut better = scores.iter().filter(|&&v| v > target).count();
    for &o in known {
        if o != true_o && o < scores.len() && scores[o] > target {
            better -= 1;
        }
    }
    Ok(better + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub queries: Vec<Triple>,
    pub ranks: Vec<usize>,
}

impl EvalReport {
    pub fn from_ranks(queries: Vec<Triple>, ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::EmptySplit);
        }
        let n = ranks.len() as f64;
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        let hits = HITS_KS
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
            .collect();
        Ok(EvalReport {
            mrr,
            hits,
            queries,
            ranks,
        })
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k).copied().unwrap_or_else(|| {
            self.ranks.iter().filter(|&&r| r <= k).count() as f64 / self.ranks.len() as f64
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8}", "metric", "value");
        let _ = writeln!(out, "{:<10} {:>8.4}", "MRR", self.mrr);
        for k in HITS_KS {
            let _ = writeln!(out, "{:<10} {:>8.4}", format!("hits@{k}"), self.hits_at(k));
        }
        let _ = writeln!(out, "{:<10} {:>8}", "queries", self.ranks.len());
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "mrr,{}", self.mrr);
        for k in HITS_KS {
            let _ = writeln!(out, "hits@{k},{}", self.hits_at(k));
        }
        let _ = writeln!(out, "queries,{}", self.ranks.len());
        out
    }

    /// One line per query: `subject,relation,object,rank`.
    pub fn ranks_csv(&self) -> String {
        let mut out = String::from("subject,relation,object,rank\n");
        for (&(s, r, o), rank) in self.queries.iter().zip(&self.ranks) {
            let _ = writeln!(out, "{s},{r},{o},{rank}");
        }
        out
    }
}

/// Ranks every triple in `queries` as an object query `(s, r, ?)`.
///
/// With reciprocal triples present, subject queries appear as object
/// queries of the reciprocal relation. Chunks of queries are scored in
/// parallel; results are collected in query order.
pub fn evaluate_triples(
    model: &TuckerModel,
    queries: &[Triple],
    filter: &FilterIndex,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::EmptySplit);
    }
    let ranks: Vec<Vec<usize>> = queries
        .par_chunks(QUERY_CHUNK)
        .map(|chunk| -> Result<Vec<usize>> {
            let pairs: Vec<(usize, usize)> = chunk.iter().map(|&(s, r, _)| (s, r)).collect();
            let scores = model.score_queries(&pairs)?;
            chunk
                .iter()
                .enumerate()
                .map(|(i, &(s, r, o))| filtered_rank(scores.row(i), o, filter.objects(s, r)))
                .collect()
        })
        .collect::<Result<_>>()?;
    EvalReport::from_ranks(queries.to_vec(), ranks.into_iter().flatten().collect())
}

/// Evaluates one split of an augmented store.
pub fn evaluate(
    model: &TuckerModel,
    store: &TripleStore,
    split: Split,
    filter: &FilterIndex,
) -> Result<EvalReport> {
    if !store.augmented {
        return Err(Error::NotAugmented);
    }
    evaluate_triples(model, store.split(split), filter)
}

/// Runs `f` on a rayon pool capped at `threads` workers (all cores if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::model::init_model;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Sort-based oracle: drop filtered competitors, sort descending with the
    // true object first among equals, read off its position.
    fn sort_oracle(scores: &[f64], true_o: usize, filter: &[usize]) -> usize {
        let mut cands: Vec<usize> = (0..scores.len())
            .filter(|o| *o == true_o || !filter.contains(o))
            .collect();
        cands.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then_with(|| (b == true_o).cmp(&(a == true_o)))
        });
        cands.iter().position(|&o| o == true_o).unwrap() + 1
    }

    #[test]
    fn strict_maximum_ranks_first() {
        assert_eq!(filtered_rank(&[0.1, 5.0, 0.3], 1, &[1]).unwrap(), 1);
    }

    #[test]
    fn hand_computed_filtered_rank() {
        assert_eq!(filtered_rank(&[3.0, 2.0, 1.0], 2, &[1, 2]).unwrap(), 2);
        assert_eq!(filtered_rank(&[3.0, 2.0, 1.0], 2, &[2]).unwrap(), 3);
    }

    #[test]
    fn ties_do_not_worsen_rank() {
        assert_eq!(filtered_rank(&[1.0, 1.0, 1.0], 1, &[1]).unwrap(), 1);
    }

    #[test]
    fn out_of_range_true_object() {
        assert!(filtered_rank(&[1.0, 2.0], 2, &[]).is_err());
    }

    #[test]
    fn random_queries_match_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..10) as f64) * 0.5)
                .collect();
            let true_o = rng.random_range(0..n);
            let mut filter: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
            if !filter.contains(&true_o) {
                filter.push(true_o);
            }
            filter.sort_unstable();
            assert_eq!(
                filtered_rank(&scores, true_o, &filter).unwrap(),
                sort_oracle(&scores, true_o, &filter)
            );
        }
    }

    #[test]
    fn single_query_ranked_four() {
        let r = EvalReport::from_ranks(vec![(0, 0, 0)], vec![4]).unwrap();
        assert_eq!(r.mrr, 0.25);
        assert_eq!(r.hits_at(1), 0.0);
        assert_eq!(r.hits_at(3), 0.0);
        assert_eq!(r.hits_at(10), 1.0);
        assert!(matches!(
            EvalReport::from_ranks(vec![], vec![]),
            Err(Error::EmptySplit)
        ));
    }

    #[test]
    fn report_formats() {
        let r = EvalReport::from_ranks(vec![(0, 1, 2), (3, 1, 0)], vec![1, 2]).unwrap();
        assert_eq!(
            r.to_csv(),
            "metric,value\nmrr,0.75\nhits@1,0.5\nhits@3,1\nhits@10,1\nqueries,2\n"
        );
        assert_eq!(
            r.ranks_csv(),
            "subject,relation,object,rank\n0,1,2,1\n3,1,0,2\n"
        );
        assert!(r.to_table().contains("MRR"));
    }

    #[test]
    fn evaluation_is_deterministic_and_consistent() {
        let (store, vocab) = generate_synthetic(40, 4).unwrap();
        let aug = store.augment_reciprocal().unwrap();
        let fi = FilterIndex::build(&aug).unwrap();
        let model = init_model(
            vocab.n_entities(),
            aug.n_relations_augmented(),
            6,
            4,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let a = evaluate(&model, &aug, Split::Test, &fi).unwrap();
        let b = with_threads(Some(1), || evaluate(&model, &aug, Split::Test, &fi))
            .unwrap()
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ranks.len(), aug.test.len());
        assert!(a.hits_at(1) <= a.hits_at(3) && a.hits_at(3) <= a.hits_at(10));
        assert!(a.mrr >= a.hits_at(1) && a.mrr <= 1.0);
        // Each query agrees with per-triple scoring.
        for (i, &(s, r, o)) in aug.test.iter().enumerate().take(10) {
            let scores: Vec<f64> = (0..vocab.n_entities())
                .map(|x| model.score_triple(s, r, x).unwrap())
                .collect();
            assert_eq!(
                a.ranks[i],
                filtered_rank(&scores, o, fi.objects(s, r)).unwrap()
            );
        }
        assert!(matches!(
            evaluate(&model, &store, Split::Test, &fi),
            Err(Error::NotAugmented)
        ));
    }

    proptest! {
        #[test]
        fn adding_known_competitor_never_increases_rank(
            scores in prop::collection::vec(-5.0f64..5.0, 2..30),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = scores.len();
            let true_o = rng.random_range(0..n);
            let mut filter = vec![true_o];
            let before = filtered_rank(&scores, true_o, &filter).unwrap();
            let extra = rng.random_range(0..n);
            filter.push(extra);
            filter.sort_unstable();
            filter.dedup();
            prop_assert!(filtered_rank(&scores, true_o, &filter).unwrap() <= before);
        }

        #[test]
        fn constant_shift_preserves_rank(
            scores in prop::collection::vec(-5.0f64..5.0, 2..30),
            shift in -100.0f64..100.0,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = scores.len();
            let true_o = rng.random_range(0..n);
            let filter: Vec<usize> = (0..n).filter(|&o| o == true_o || rng.random_bool(0.2)).collect();
            // Quantize so that the shift cannot create or break ties through rounding.
            let q: Vec<f64> = scores.iter().map(|v| (v * 4.0).round() / 4.0).collect();
            let shifted: Vec<f64> = q.iter().map(|v| v + shift.round()).collect();
            prop_assert_eq!(
                filtered_rank(&q, true_o, &filter).unwrap(),
                filtered_rank(&shifted, true_o, &filter).unwrap()
            );
        }
    }
}
