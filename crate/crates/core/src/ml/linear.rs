//! Least squares and logistic regression.

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;


use super::Predictor;
use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// Column means and standard deviations; constant columns get scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                var[j] += (x[(i, j)] - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n.max(1) as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    /// As [`Standardizer::fit`], but columns holding only 0 and 1 are left
    /// as they are, so a rare indicator does not dominate distances.
    pub fn fit_keep_indicators(x: &Matrix) -> Self {
        let mut st = Self::fit(x);
        for j in 0..x.cols() {
            if (0..x.rows()).all(|i| x[(i, j)] == 0.0 || x[(i, j)] == 1.0) {
                st.mean[j] = 0.0;
                st.scale[j] = 1.0;
            }
        }
        st
    }

    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.mean[j]) / self.scale[j];
        }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.apply_row(x.row(i), z.row_mut(i));
        }
        z
    }
}

/// Ordinary least squares with an intercept. Rank-deficient designs get the
/// minimum-norm solution (in standardized coordinates) and set `rank_deficient`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ols {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub rank_deficient: bool,
}

impl Ols {
    pub fn fit(x: &Matrix, y: &[f64]) -> Self {
        let st = Standardizer::fit(x);
        let z = st.apply(x);
        let ybar = y.iter().sum::<f64>() / y.len().max(1) as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        let g = z.gram(None);
        let b = z.tmul_vec(&yc);
        let (beta, rank_deficient) = linalg::psd_pinv_solve(&g, &b, 1e-10);
        let coef: Vec<f64> = beta.iter().zip(&st.scale).map(|(b, s)| b / s).collect();
        let intercept = ybar - coef.iter().zip(&st.mean).map(|(c, m)| c * m).sum::<f64>();
        Self {
            intercept,
            coef,
            rank_deficient,
        }
    }
}

impl Predictor for Ols {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + linalg::dot(&self.coef, x)
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Σ y log p + (1 - y) log(1 - p) for p = σ(Xβ).
pub fn log_likelihood(x: &Matrix, y: &[f64], beta: &[f64]) -> f64 {
    (0..x.rows())
        .map(|i| {
            let t = linalg::dot(x.row(i), beta);
            // log σ(t) = -log(1 + e^{-t})
            let log1pexp = |u: f64| if u > 0.0 { u + (-u).exp().ln_1p() } else { u.exp().ln_1p() };
            y[i] * -log1pexp(-t) + (1.0 - y[i]) * -log1pexp(t)
        })
        .sum()
}

/// Gradient of [`log_likelihood`]: Xᵀ(y - p).
pub fn gradient(x: &Matrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = (0..x.rows())
        .map(|i| y[i] - sigmoid(linalg::dot(x.row(i), beta)))
        .collect();
    x.tmul_vec(&r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    pub beta: Vec<f64>,
    /// Inverse of XᵀWX (+ ridge) at the optimum.
    pub covariance: Matrix,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
    /// Every |y - p| below 1e-6, or some |β| above 50.
    pub separated: bool,
}

/// Newton-Raphson on the (optionally ridge-penalized) log-likelihood, with
/// step halving. The design is used as given: include an intercept column
/// if one is wanted. Stops when the gradient norm drops below `tol`.
pub fn irls(x: &Matrix, y: &[f64], ridge: f64, tol: f64, max_iter: usize) -> Result<IrlsFit> {
    let (n, d) = (x.rows(), x.cols());
    let mut beta = vec![0.0; d];
    let objective = |b: &[f64]| log_likelihood(x, y, b) - 0.5 * ridge * linalg::dot(b, b);
    let mut ll = objective(&beta);
    let mut iterations = 0;
    loop {
        let mut grad = gradient(x, y, &beta);
        for (g, b) in grad.iter_mut().zip(&beta) {
            *g -= ridge * b;
        }
        let gn = linalg::norm(&grad);
        let w: Vec<f64> = (0..n)
            .map(|i| {
                let p = sigmoid(linalg::dot(x.row(i), &beta));
                p * (1.0 - p)
            })
            .collect();
        let mut h = x.gram(Some(&w));
        for j in 0..d {
            h[(j, j)] += ridge;
        }
        let separated = beta.iter().any(|b| b.abs() > 50.0)
            || (0..n).all(|i| (y[i] - sigmoid(linalg::dot(x.row(i), &beta))).abs() < 1e-6);
        if gn < tol || separated {
            let covariance = match linalg::cholesky(&h) {
                Some(l) => linalg::cholesky_inverse(&l),
                None => Matrix::zeros(d, d),
            };
            return Ok(IrlsFit {
                beta,
                covariance,
                iterations,
                gradient_norm: gn,
                log_likelihood: ll,
                separated,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence { iterations });
        }
        let step = match linalg::cholesky(&h) {
            Some(l) => linalg::cholesky_solve(&l, &grad),
            None => linalg::psd_pinv_solve(&h, &grad, 1e-12).0,
        };
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let l2 = objective(&cand);
            if l2 >= ll - 1e-12 * (1.0 + ll.abs()) || t < 1e-10 {
                beta = cand;
                ll = l2;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
    }
}

/// Logistic regression with an intercept on standardized features and a
/// small ridge so separable folds still converge.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    st: Standardizer,
    beta: Vec<f64>,
}

impl Logistic {
    pub const RIDGE: f64 = 1e-4;

    pub fn fit(x: &Matrix, y: &[f64]) -> Result<Self> {
        let st = Standardizer::fit(x);
        let (n, d) = (x.rows(), x.cols());
        let mut z = Matrix::zeros(n, d + 1);
        for i in 0..n {
            let row = z.row_mut(i);
            row[0] = 1.0;
            st.apply_row(x.row(i), &mut row[1..]);
        }
        let fit = irls(&z, y, Self::RIDGE, 1e-8, 100)?;
        Ok(Self { st, beta: fit.beta })
    }
}

impl Predictor for Logistic {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; x.len()];
        self.st.apply_row(x, &mut z);
        sigmoid(self.beta[0] + linalg::dot(&self.beta[1..], &z))
    }
}
