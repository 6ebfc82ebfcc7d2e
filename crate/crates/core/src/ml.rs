//! Learners used by the ablation tables, written against [`Matrix`] rows.
//!
//! * [`linear`]: least squares (minimum-norm) and logistic regression by IRLS.
//! * [`tree`]: histogram regression trees on gradient statistics.
//! * [`forest`]: bagged trees with per-split feature sampling.
//! * [`boost`]: second-order gradient boosting (squared or logistic loss).
//! * [`svm`]: radial-basis C-SVC and ε-SVR trained by SMO.
//! * [`train`]: family/grid specification and cross-validated training.
//!
//! [`Matrix`]: crate::linalg::Matrix

pub mod boost;
pub mod folds;
pub mod forest;
pub mod linear;
pub mod svm;
pub mod train;
pub mod tree;

pub use train::{cross_validate, train_predict, CvResult, Family, Hyper, RegressorSpec, Task, TrainResult};

/// A fitted model. Regression models return values; classifiers return the
/// probability (or a score whose sign is the class) of the positive label.
pub trait Predictor {
    fn predict_row(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &crate::linalg::Matrix) -> alloc::vec::Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    #[allow(unused_imports)] // inherent when std is linked
    use num_traits::Float;
    let s: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    (s / y.len().max(1) as f64).sqrt()
}

/// Fraction of rows where `pred > 0.5` disagrees with `y > 0.5`.
pub fn misclassification(pred: &[f64], y: &[f64]) -> f64 {
    let wrong = pred.iter().zip(y).filter(|(p, t)| (**p > 0.5) != (**t > 0.5)).count();
    wrong as f64 / y.len().max(1) as f64
}
