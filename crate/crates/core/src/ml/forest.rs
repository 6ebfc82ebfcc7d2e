//! Random forests: bootstrap samples, unpruned trees, `mtry` features
//! sampled at every split.

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::tree::{self, Binned, Tree, TreeParams};
use super::Predictor;
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub mtry: usize,
    /// Nodes of at most this many rows become leaves.
    pub nodesize: usize,
}

impl ForestParams {
    /// 500 trees; ⌈d/3⌉ features and leaves of ≤ 5 rows for regression,
    /// ⌈√d⌉ features and pure leaves for classification.
    pub fn defaults(d: usize, classification: bool) -> Self {
        let d = d.max(1);
        if classification {
            Self {
                trees: 500,
                mtry: ((d as f64).sqrt().ceil() as usize).max(1),
                nodesize: 1,
            }
        } else {
            Self {
                trees: 500,
                mtry: d.div_ceil(3).max(1),
                nodesize: 5,
            }
        }
    }
}

/// Averages tree outputs. For 0/1 targets each leaf holds a class share, so
/// the average is a vote fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(x: &Matrix, y: &[f64], p: ForestParams, seed: u64) -> Self {
        let n = x.rows();
        let b = Binned::new(x, 255);
        let g: Vec<f64> = y.iter().map(|v| -v).collect();
        let h = vec![1.0; n];
        let params = TreeParams {
            max_depth: usize::MAX,
            lambda: 0.0,
            min_child_weight: 0.0,
            min_split_rows: p.nodesize + 1,
            mtry: Some(p.mtry),
            shrinkage: 1.0,
        };
        let mut r = rng::stream(seed, 0);
        let mut rows = vec![0u32; n];
        let trees = (0..p.trees)
            .map(|_| {
                for slot in rows.iter_mut() {
                    *slot = r.random_range(0..n as u32);
                }
                tree::grow(&b, &g, &h, &mut rows, params, &mut r)
            })
            .collect();
        Self { trees }
    }

    pub fn trees(&self) -> usize {
        self.trees.len()
    }
}

impl Predictor for Forest {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}
