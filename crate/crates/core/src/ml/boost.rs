//! Gradient boosting with second-order leaf weights.

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linear::sigmoid;
use super::tree::{self, Binned, Tree, TreeParams};
use super::Predictor;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Squared,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub loss: Loss,
}

impl BoostParams {
    pub fn new(loss: Loss, max_depth: usize, learning_rate: f64, rounds: usize) -> Self {
        Self {
            max_depth,
            learning_rate,
            rounds,
            lambda: 1.0,
            min_child_weight: 1.0,
            loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gbdt {
    base: f64,
    trees: Vec<Tree>,
    loss: Loss,
    /// Mean training loss after each round (index 0 is the base score).
    pub train_loss: Vec<f64>,
}

fn mean_loss(loss: Loss, f: &[f64], y: &[f64]) -> f64 {
    let s: f64 = f
        .iter()
        .zip(y)
        .map(|(&f, &y)| match loss {
            Loss::Squared => 0.5 * (f - y) * (f - y),
            Loss::Logistic => {
                // -y log σ(f) - (1-y) log(1-σ(f))
                let l1 = if f > 0.0 { (-f).exp().ln_1p() } else { -f + f.exp().ln_1p() };
                l1 + (1.0 - y) * f
            }
        })
        .sum();
    s / y.len().max(1) as f64
}

impl Gbdt {
    pub fn fit(x: &Matrix, y: &[f64], p: BoostParams) -> Self {
        let n = x.rows();
        let b = Binned::new(x, 255);
        let ybar = y.iter().sum::<f64>() / n.max(1) as f64;
        let base = match p.loss {
            Loss::Squared => ybar,
            Loss::Logistic => {
                let q = ybar.clamp(1e-6, 1.0 - 1e-6);
                (q / (1.0 - q)).ln()
            }
        };
        let mut f = vec![base; n];
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        let params = TreeParams {
            max_depth: p.max_depth,
            lambda: p.lambda,
            min_child_weight: p.min_child_weight,
            min_split_rows: 2,
            mtry: None,
            shrinkage: p.learning_rate,
        };
        // Trees here use every feature, so the generator is never drawn from.
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut rows: Vec<u32> = (0..n as u32).collect();
        let mut trees = Vec::with_capacity(p.rounds);
        let mut train_loss = vec![mean_loss(p.loss, &f, y)];
        for _ in 0..p.rounds {
            for i in 0..n {
                match p.loss {
                    Loss::Squared => {
                        g[i] = f[i] - y[i];
                        h[i] = 1.0;
                    }
                    Loss::Logistic => {
                        let q = sigmoid(f[i]);
                        g[i] = q - y[i];
                        h[i] = (q * (1.0 - q)).max(1e-16);
                    }
                }
            }
            let t = tree::grow(&b, &g, &h, &mut rows, params, &mut r);
            for i in 0..n {
                f[i] += t.predict_binned(&b, i);
            }
            train_loss.push(mean_loss(p.loss, &f, y));
            trees.push(t);
        }
        Self {
            base,
            trees,
            loss: p.loss,
            train_loss,
        }
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    fn link(&self, f: f64) -> f64 {
        match self.loss {
            Loss::Squared => f,
            Loss::Logistic => sigmoid(f),
        }
    }

    /// Predictions after each of the given round counts (ascending, at most
    /// the fitted number of rounds).
    pub fn staged_predict(&self, x: &Matrix, checkpoints: &[usize]) -> Vec<Vec<f64>> {
        let mut f = vec![self.base; x.rows()];
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut done = 0;
        for &c in checkpoints {
            let c = c.min(self.trees.len());
            for t in &self.trees[done..c] {
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += t.predict_row(x.row(i));
                }
            }
            done = done.max(c);
            out.push(f.iter().map(|&v| self.link(v)).collect());
        }
        out
    }
}

impl Predictor for Gbdt {
    fn predict_row(&self, x: &[f64]) -> f64 {
        // Same accumulation order as `staged_predict`.
        let f = self.trees.iter().fold(self.base, |f, t| f + t.predict_row(x));
        self.link(f)
    }
}
