//! Seeded fold assignment.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng;

/// Fold id per row. Rows are shuffled with a stream derived from `seed` and
/// dealt round-robin; with `strata`, each stratum is dealt separately so every
/// fold gets its share of each label.
pub fn assign(n: usize, k: usize, seed: u64, strata: Option<&[bool]>) -> Vec<usize> {
    assert!(k >= 1, "at least one fold");
    let mut r = rng::stream(seed, rng::streams::FOLDS);
    let mut fold = vec![0usize; n];
    let mut deal = |idx: &mut Vec<usize>, offset: usize| {
        idx.shuffle(&mut r);
        for (j, &i) in idx.iter().enumerate() {
            fold[i] = (j + offset) % k;
        }
        idx.len()
    };
    match strata {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            deal(&mut idx, 0);
        }
        Some(s) => {
            let mut pos: Vec<usize> = (0..n).filter(|&i| s[i]).collect();
            let mut neg: Vec<usize> = (0..n).filter(|&i| !s[i]).collect();
            let used = deal(&mut pos, 0);
            deal(&mut neg, used);
        }
    }
    fold
}

/// (train, test) row indices for fold `f`.
pub fn split(fold: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &g) in fold.iter().enumerate() {
        if g == f {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}
