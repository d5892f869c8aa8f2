use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;

/// Fold index for each of `n` positions: a seeded shuffle dealt round-robin,
/// so fold sizes differ by at most one and the larger folds come first.
pub(crate) fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds;
    }
    out
}

/// Seeded partition of `queries` into `folds` near-equal folds.
pub fn make_folds(queries: &[String], folds: usize, seed: u64) -> Result<BTreeMap<String, usize>> {
    if folds == 0 || queries.len() < folds {
        return Err(Error::TooFewQueries {
            n: queries.len(),
            folds,
        });
    }
    let mut sorted = queries.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != queries.len() {
        return Err(Error::InvalidArgument("query ids must be unique".into()));
    }
    let idx = fold_indices(sorted.len(), folds, seed);
    Ok(sorted.into_iter().zip(idx).collect())
}

/// Splits fold assignments into (train, test) id lists for fold `f`.
pub fn split(folds: &BTreeMap<String, usize>, f: usize) -> (Vec<String>, Vec<String>) {
    let (train, test): (Vec<_>, Vec<_>) = folds.iter().partition(|(_, &g)| g != f);
    let ids = |v: Vec<(&String, &usize)>| v.into_iter().map(|(q, _)| q.clone()).collect();
    (ids(train), ids(test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn queries(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("q{i:03}")).collect()
    }

    fn sizes(f: &BTreeMap<String, usize>, folds: usize) -> Vec<usize> {
        (0..folds).map(|k| f.values().filter(|&&v| v == k).count()).collect()
    }

    #[test]
    fn seventy_queries_split_evenly() {
        assert_eq!(sizes(&make_folds(&queries(70), 5, 3).unwrap(), 5), vec![14; 5]);
    }

    #[test]
    fn remainder_goes_to_first_folds() {
        assert_eq!(sizes(&make_folds(&queries(7), 5, 3).unwrap(), 5), vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn too_few_queries() {
        assert_eq!(make_folds(&queries(4), 5, 0).unwrap_err().code(), "TOO_FEW_QUERIES");
    }

    #[test]
    fn split_partitions() {
        let f = make_folds(&queries(12), 5, 9).unwrap();
        let (train, test) = split(&f, 2);
        assert_eq!(train.len() + test.len(), 12);
        assert!(test.iter().all(|q| f[q] == 2) && train.iter().all(|q| f[q] != 2));
    }

    proptest! {
        #[test]
        fn deterministic_and_input_order_free(n in 5usize..60, seed: u64) {
            let qs = queries(n);
            let mut rev = qs.clone();
            rev.reverse();
            let a = make_folds(&qs, 5, seed).unwrap();
            prop_assert_eq!(&a, &make_folds(&rev, 5, seed).unwrap());
            let s = sizes(&a, 5);
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }
    }
}
