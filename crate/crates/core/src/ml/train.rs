//! Cross-validated training over a hyperparameter grid.
//!
//! The caller supplies the fold assignment so paired comparisons (a feature
//! present or absent) share one partition. Every grid cell is scored by the
//! pooled held-out error over all folds; the best cell (first in grid order
//! on ties) is refitted on all rows.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::boost::{BoostParams, Gbdt, Loss};
use super::folds;
use super::forest::{Forest, ForestParams};
use super::linear::{Logistic, Ols, Standardizer};
use super::svm::{self, Gram, Svm, SvmKind};
use super::{misclassification, rmse, Predictor};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, streams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    /// 0/1 targets; error is the misclassification rate at ½.
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    RandomForest,
    GradientBoostedTrees,
    KernelSvm,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Linear,
        Family::RandomForest,
        Family::GradientBoostedTrees,
        Family::KernelSvm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::RandomForest => "random_forest",
            Family::GradientBoostedTrees => "gradient_boosted_trees",
            Family::KernelSvm => "kernel_svm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hyper {
    Linear,
    RandomForest { trees: usize, mtry: usize, nodesize: usize },
    GradientBoostedTrees { max_depth: usize, learning_rate: f64, rounds: usize },
    KernelSvm { cost: f64, gamma: f64 },
}

/// Bandwidth choice; `InverseDim` resolves to `1/d` for `d` features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    InverseDim,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub family: Family,
    pub seed: u64,
    pub boost_depths: Vec<usize>,
    pub boost_learning_rates: Vec<f64>,
    /// Round counts, ascending.
    pub boost_rounds: Vec<usize>,
    /// Costs, ascending (later costs warm-start from earlier ones).
    pub svm_costs: Vec<f64>,
    pub svm_gammas: Vec<Gamma>,
    pub svm_epsilon: f64,
    pub forest_trees: usize,
}

impl RegressorSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        Self {
            family,
            seed,
            boost_depths: vec![2, 4, 6],
            boost_learning_rates: vec![0.05, 0.1, 0.3],
            boost_rounds: vec![100, 300],
            svm_costs: vec![0.1, 1.0, 10.0],
            svm_gammas: vec![Gamma::InverseDim, Gamma::Fixed(0.1), Gamma::Fixed(1.0)],
            svm_epsilon: svm::DEFAULT_EPSILON,
            forest_trees: 500,
        }
    }

    /// Every grid cell, in selection order.
    pub fn grid(&self, d: usize, task: Task) -> Vec<Hyper> {
        match self.family {
            Family::Linear => vec![Hyper::Linear],
            Family::RandomForest => {
                let p = ForestParams::defaults(d, task == Task::Classification);
                vec![Hyper::RandomForest {
                    trees: self.forest_trees,
                    mtry: p.mtry,
                    nodesize: p.nodesize,
                }]
            }
            Family::GradientBoostedTrees => {
                let mut g = Vec::new();
                for &max_depth in &self.boost_depths {
                    for &learning_rate in &self.boost_learning_rates {
                        for &rounds in &self.boost_rounds {
                            g.push(Hyper::GradientBoostedTrees {
                                max_depth,
                                learning_rate,
                                rounds,
                            });
                        }
                    }
                }
                g
            }
            Family::KernelSvm => {
                let mut g = Vec::new();
                for gm in &self.svm_gammas {
                    let gamma = match *gm {
                        Gamma::InverseDim => 1.0 / d.max(1) as f64,
                        Gamma::Fixed(v) => v,
                    };
                    for &cost in &self.svm_costs {
                        g.push(Hyper::KernelSvm { cost, gamma });
                    }
                }
                g
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(Ols),
    Logistic(Logistic),
    Forest(Forest),
    Boost(Gbdt),
    Svm(Svm),
}

impl Predictor for Model {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict_row(x),
            Model::Logistic(m) => m.predict_row(x),
            Model::Forest(m) => m.predict_row(x),
            Model::Boost(m) => m.predict_row(x),
            Model::Svm(m) => m.predict_row(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Pooled held-out error of the chosen cell.
    pub cv_error: f64,
    /// Held-out error of the chosen cell within each fold.
    pub fold_errors: Vec<f64>,
    /// Held-out prediction for every row, at the chosen cell.
    pub heldout: Vec<f64>,
    pub chosen: Hyper,
    /// Pooled held-out error per grid cell.
    pub grid_errors: Vec<(Hyper, f64)>,
    /// Set when a least-squares fit fell back to the minimum-norm solution.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub cv_error: f64,
    pub fold_errors: Vec<f64>,
    pub heldout: Vec<f64>,
    pub chosen: Hyper,
    pub grid_errors: Vec<(Hyper, f64)>,
    /// Refitted on all rows with the chosen cell.
    pub model: Model,
    pub rank_deficient: bool,
}

fn take_rows(x: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), x.cols());
    for (k, &i) in idx.iter().enumerate() {
        out.row_mut(k).copy_from_slice(x.row(i));
    }
    out
}

fn take(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

fn error(task: Task, pred: &[f64], y: &[f64]) -> f64 {
    match task {
        Task::Regression => rmse(pred, y),
        Task::Classification => misclassification(pred, y),
    }
}

fn svm_kind(task: Task, epsilon: f64) -> SvmKind {
    match task {
        Task::Regression => SvmKind::Regression { epsilon },
        Task::Classification => SvmKind::Classification,
    }
}

type SvmCache = (Standardizer, Matrix, Vec<f32>);

/// Cross-validates `spec` over the folds in `fold` (values `0..k`, `k ≥ 2`),
/// then refits the best cell on all rows.
pub fn train_predict(spec: &RegressorSpec, x: &Matrix, y: &[f64], task: Task, fold: &[usize]) -> Result<TrainResult> {
    let (cv, svm_cache) = cross_validate_inner(spec, x, y, task, fold)?;
    let n = x.rows();
    let k = cv.fold_errors.len();
    let refit_seed = derive_seed(spec.seed, streams::TRAINING + k as u64);
    let model = match (cv.chosen, svm_cache) {
        (Hyper::KernelSvm { cost, gamma }, Some((st, z, d2))) => {
            let gram = Gram::rbf(&d2, n, gamma);
            let rows: Vec<usize> = (0..n).collect();
            let kind = svm_kind(task, spec.svm_epsilon);
            let sol = svm::solve_dual(&gram, y, kind, cost, None)?;
            Model::Svm(Svm::from_solution(st, &z, &rows, &sol, gamma, kind))
        }
        _ => fit_cell(cv.chosen, x, y, task, refit_seed)?,
    };
    let rank_deficient = cv.rank_deficient || matches!(&model, Model::Linear(ols) if ols.rank_deficient);
    Ok(TrainResult {
        cv_error: cv.cv_error,
        fold_errors: cv.fold_errors,
        heldout: cv.heldout,
        chosen: cv.chosen,
        grid_errors: cv.grid_errors,
        model,
        rank_deficient,
    })
}

/// [`train_predict`] without the final refit.
pub fn cross_validate(spec: &RegressorSpec, x: &Matrix, y: &[f64], task: Task, fold: &[usize]) -> Result<CvResult> {
    Ok(cross_validate_inner(spec, x, y, task, fold)?.0)
}

fn cross_validate_inner(
    spec: &RegressorSpec,
    x: &Matrix,
    y: &[f64],
    task: Task,
    fold: &[usize],
) -> Result<(CvResult, Option<SvmCache>)> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyCohort("training matrix"));
    }
    if y.len() != n || fold.len() != n {
        return Err(Error::Invalid("features, target and folds differ in length".into()));
    }
    let k = fold.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::Invalid("cross validation needs at least 2 folds".into()));
    }
    let d = x.cols();
    let grid = spec.grid(d, task);
    // heldout[cell][row]
    let mut heldout = vec![vec![0.0; n]; grid.len()];
    let mut rank_deficient = false;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k).map(|f| folds::split(fold, f)).collect();
    let mut svm_cache: Option<SvmCache> = None;

    match spec.family {
        Family::Linear | Family::RandomForest => {
            for (f, (tr, te)) in splits.iter().enumerate() {
                let (xt, yt) = (take_rows(x, tr), take(y, tr));
                let seed = derive_seed(spec.seed, streams::TRAINING + f as u64);
                let m = fit_cell(grid[0], &xt, &yt, task, seed)?;
                if let Model::Linear(ols) = &m {
                    rank_deficient |= ols.rank_deficient;
                }
                for &i in te {
                    heldout[0][i] = m.predict_row(x.row(i));
                }
            }
        }
        Family::GradientBoostedTrees => {
            let loss = match task {
                Task::Regression => Loss::Squared,
                Task::Classification => Loss::Logistic,
            };
            let rounds = &spec.boost_rounds;
            let max_rounds = rounds.iter().copied().max().unwrap_or(0);
            for (tr, te) in &splits {
                let (xt, yt) = (take_rows(x, tr), take(y, tr));
                let xe = take_rows(x, te);
                for (a, &depth) in spec.boost_depths.iter().enumerate() {
                    for (b, &lr) in spec.boost_learning_rates.iter().enumerate() {
                        let m = Gbdt::fit(&xt, &yt, BoostParams::new(loss, depth, lr, max_rounds));
                        let staged = m.staged_predict(&xe, rounds);
                        for (c, p) in staged.iter().enumerate() {
                            let cell = (a * spec.boost_learning_rates.len() + b) * rounds.len() + c;
                            for (&i, &v) in te.iter().zip(p) {
                                heldout[cell][i] = v;
                            }
                        }
                    }
                }
            }
        }
        Family::KernelSvm => {
            let st = Standardizer::fit_keep_indicators(x);
            let z = st.apply(x);
            let d2 = svm::sq_distances(&z);
            let kind = svm_kind(task, spec.svm_epsilon);
            let nc = spec.svm_costs.len();
            for g in 0..spec.svm_gammas.len() {
                let Hyper::KernelSvm { gamma, .. } = grid[g * nc] else { unreachable!() };
                let gram = Gram::rbf(&d2, n, gamma);
                for (tr, te) in &splits {
                    let yt = take(y, tr);
                    let sub = gram.restrict(tr);
                    let mut warm: Option<Vec<f64>> = None;
                    for (c, &cost) in spec.svm_costs.iter().enumerate() {
                        let sol = svm::solve_dual(&sub, &yt, kind, cost, warm.as_deref())?;
                        let dec = svm::decision_on(&gram, tr, &sol, te);
                        for (&i, &v) in te.iter().zip(&dec) {
                            heldout[g * nc + c][i] = match kind {
                                SvmKind::Classification => super::linear::sigmoid(v),
                                SvmKind::Regression { .. } => v,
                            };
                        }
                        warm = Some(sol.alpha);
                    }
                }
            }
            svm_cache = Some((st, z, d2));
        }
    }

    let grid_errors: Vec<(Hyper, f64)> = grid.iter().zip(&heldout).map(|(h, p)| (*h, error(task, p, y))).collect();
    let mut best = 0;
    for (c, (_, e)) in grid_errors.iter().enumerate() {
        if *e < grid_errors[best].1 {
            best = c;
        }
    }
    let chosen = grid[best];
    let pred = core::mem::take(&mut heldout[best]);
    let fold_errors = splits.iter().map(|(_, te)| error(task, &take(&pred, te), &take(y, te))).collect();
    let cv = CvResult {
        cv_error: grid_errors[best].1,
        fold_errors,
        heldout: pred,
        chosen,
        grid_errors,
        rank_deficient,
    };
    Ok((cv, svm_cache))
}

/// Fits one grid cell on all of `x`.
pub fn fit_cell(h: Hyper, x: &Matrix, y: &[f64], task: Task, seed: u64) -> Result<Model> {
    Ok(match h {
        Hyper::Linear => match task {
            Task::Regression => Model::Linear(Ols::fit(x, y)),
            Task::Classification => Model::Logistic(Logistic::fit(x, y)?),
        },
        Hyper::RandomForest { trees, mtry, nodesize } => Model::Forest(Forest::fit(x, y, ForestParams { trees, mtry, nodesize }, seed)),
        Hyper::GradientBoostedTrees {
            max_depth,
            learning_rate,
            rounds,
        } => {
            let loss = match task {
                Task::Regression => Loss::Squared,
                Task::Classification => Loss::Logistic,
            };
            Model::Boost(Gbdt::fit(x, y, BoostParams::new(loss, max_depth, learning_rate, rounds)))
        }
        Hyper::KernelSvm { cost, gamma } => Model::Svm(Svm::fit(x, y, svm_kind(task, svm::DEFAULT_EPSILON), cost, gamma)?),
    })
}
