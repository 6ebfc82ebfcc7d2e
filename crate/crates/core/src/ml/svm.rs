//! Radial-basis support vector machines (C-SVC and ε-SVR) trained by SMO
//! with second-order working-set selection.
//!
//! Both problems are solved in the common dual form
//! `min ½ αᵀQα + pᵀα` subject to `yᵀα = 0`, `0 ≤ α ≤ C`, with
//! `Q_st = y_s y_t K(x_s, x_t)`. Regression uses `2m` variables: the first
//! `m` carry `y = +1`, `p = ε − z`, the rest `y = −1`, `p = ε + z`.

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;


use super::linear::{sigmoid, Standardizer};
use super::Predictor;
use crate::linalg::Matrix;
use crate::{Error, Result};

const TAU: f64 = 1e-12;
/// Stopping tolerance on the maximal violating pair.
pub const EPS_STOP: f64 = 1e-3;
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvmKind {
    /// Labels are 0/1; class 1 is the positive side.
    Classification,
    Regression { epsilon: f64 },
}

/// Pairwise squared distances between rows, row-major `n × n`.
pub fn sq_distances(z: &Matrix) -> Vec<f32> {
    let n = z.rows();
    let mut d = vec![0f32; n * n];
    for i in 0..n {
        let zi = z.row(i);
        for j in 0..i {
            let s: f64 = zi.iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = s as f32;
            d[j * n + i] = s as f32;
        }
    }
    d
}

/// A precomputed kernel matrix over all rows of a dataset.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    k: Vec<f32>,
}

impl Gram {
    pub fn rbf(d2: &[f32], n: usize, gamma: f64) -> Self {
        let g = gamma as f32;
        Self {
            n,
            k: d2.iter().map(|&d| (-g * d).exp()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The kernel among `rows` only, in that order.
    pub fn restrict(&self, rows: &[usize]) -> Gram {
        let m = rows.len();
        let mut k = vec![0f32; m * m];
        for (a, &ra) in rows.iter().enumerate() {
            let src = self.row(ra);
            for (b, &rb) in rows.iter().enumerate() {
                k[a * m + b] = src[rb];
            }
        }
        Gram { n: m, k }
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.k[i * self.n..(i + 1) * self.n]
    }
}

/// Dual solution over the training rows `rows` of a [`Gram`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// Expansion coefficient per training row; decision is `Σ coef K − rho`.
    pub coef: Vec<f64>,
    pub rho: f64,
    /// Raw dual variables, reusable as a warm start for a larger `C`.
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

/// Solves the dual by SMO over all rows of `gram` (see [`Gram::restrict`]),
/// with LIBSVM-style shrinking. `warm` must be feasible for `c`, e.g. the
/// solution for a smaller `C`.
pub fn solve_dual(gram: &Gram, y: &[f64], kind: SvmKind, c: f64, warm: Option<&[f64]>) -> Result<DualSolution> {
    let m = gram.n;
    if m == 0 {
        return Err(Error::EmptyCohort("svm training rows"));
    }
    if y.len() != m {
        return Err(Error::Invalid("svm target length differs from kernel size".into()));
    }
    let (sign, p): (Vec<f64>, Vec<f64>) = match kind {
        SvmKind::Classification => {
            let s: Vec<f64> = y.iter().map(|&v| if v > 0.5 { 1.0 } else { -1.0 }).collect();
            (s, vec![-1.0; m])
        }
        SvmKind::Regression { epsilon } => {
            let mut s = vec![1.0; m];
            s.extend(core::iter::repeat_n(-1.0, m));
            let mut p: Vec<f64> = y.iter().map(|&v| epsilon - v).collect();
            p.extend(y.iter().map(|&v| epsilon + v));
            (s, p)
        }
    };
    let alpha0: Vec<f64> = match warm {
        Some(a) if a.len() == sign.len() => a.iter().map(|&v| v.clamp(0.0, c)).collect(),
        _ => vec![0.0; sign.len()],
    };
    let mut smo = Smo::new(gram, sign, p, alpha0, c);
    smo.run()?;
    let alpha = smo.alpha_in_original_order();
    let rho = smo.rho();
    let coef = (0..m)
        .map(|s| match kind {
            SvmKind::Classification => smo.sign_orig[s] * alpha[s],
            SvmKind::Regression { .. } => alpha[s] - alpha[s + m],
        })
        .collect();
    Ok(DualSolution {
        coef,
        rho,
        alpha,
        iterations: smo.iter,
    })
}

/// Working state; every per-variable array is kept in the current (shrunk)
/// permutation, with `perm` mapping back to the original order.
struct Smo<'a> {
    k: &'a Gram,
    c: f64,
    l: usize,
    active: usize,
    sign: Vec<f64>,
    sign_orig: Vec<f64>,
    p: Vec<f64>,
    alpha: Vec<f64>,
    g: Vec<f64>,
    /// Σ over variables at the upper bound of `C·Q_st`.
    g_bar: Vec<f64>,
    qd: Vec<f64>,
    /// Kernel row of each variable.
    ix: Vec<u32>,
    perm: Vec<usize>,
    unshrink: bool,
    iter: usize,
}

impl<'a> Smo<'a> {
    fn new(k: &'a Gram, sign: Vec<f64>, p: Vec<f64>, alpha: Vec<f64>, c: f64) -> Self {
        let l = sign.len();
        let m = k.n;
        let ix: Vec<u32> = (0..l).map(|t| (t % m) as u32).collect();
        let qd: Vec<f64> = ix.iter().map(|&r| k.row(r as usize)[r as usize] as f64).collect();
        let mut g = p.clone();
        let mut g_bar = vec![0.0; l];
        for s in 0..l {
            if alpha[s] > 0.0 {
                let ks = k.row(ix[s] as usize);
                let a = alpha[s] * sign[s];
                let upper = alpha[s] >= c;
                for t in 0..l {
                    let q = sign[t] * ks[ix[t] as usize] as f64;
                    g[t] += a * q;
                    if upper {
                        g_bar[t] += c * sign[s] * q;
                    }
                }
            }
        }
        Self {
            k,
            c,
            l,
            active: l,
            sign_orig: sign.clone(),
            sign,
            p,
            alpha,
            g,
            g_bar,
            qd,
            ix,
            perm: (0..l).collect(),
            unshrink: false,
            iter: 0,
        }
    }

    fn upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn lower(&self, t: usize) -> bool {
        self.alpha[t] <= 0.0
    }

    fn krow(&self, t: usize) -> &'a [f32] {
        self.k.row(self.ix[t] as usize)
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.sign.swap(a, b);
        self.p.swap(a, b);
        self.alpha.swap(a, b);
        self.g.swap(a, b);
        self.g_bar.swap(a, b);
        self.qd.swap(a, b);
        self.ix.swap(a, b);
        self.perm.swap(a, b);
    }

    /// Maximal violating pair with second-order choice of `j`, or `None`
    /// when the active set is optimal within [`EPS_STOP`].
    fn select(&self) -> Option<(usize, usize)> {
        let mut gmax = f64::NEG_INFINITY;
        let mut gi = usize::MAX;
        for t in 0..self.active {
            if self.sign[t] > 0.0 {
                if !self.upper(t) && -self.g[t] >= gmax {
                    gmax = -self.g[t];
                    gi = t;
                }
            } else if !self.lower(t) && self.g[t] >= gmax {
                gmax = self.g[t];
                gi = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut gj = usize::MAX;
        let mut best = f64::INFINITY;
        let ki = if gi != usize::MAX { Some(self.krow(gi)) } else { None };
        for t in 0..self.active {
            let (diff, up) = if self.sign[t] > 0.0 {
                if self.lower(t) {
                    continue;
                }
                (gmax + self.g[t], self.g[t])
            } else {
                if self.upper(t) {
                    continue;
                }
                (gmax - self.g[t], -self.g[t])
            };
            if up >= gmax2 {
                gmax2 = up;
            }
            if let Some(ki) = ki {
                if diff > 0.0 {
                    let quad = self.qd[gi] + self.qd[t] - 2.0 * ki[self.ix[t] as usize] as f64;
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best {
                        best = obj;
                        gj = t;
                    }
                }
            }
        }
        if gi == usize::MAX || gj == usize::MAX || gmax + gmax2 < EPS_STOP {
            None
        } else {
            Some((gi, gj))
        }
    }

    fn reconstruct_gradient(&mut self) {
        if self.active == self.l {
            return;
        }
        for t in self.active..self.l {
            self.g[t] = self.g_bar[t] + self.p[t];
        }
        for s in 0..self.active {
            if !self.upper(s) && !self.lower(s) {
                let ks = self.krow(s);
                let a = self.alpha[s] * self.sign[s];
                for t in self.active..self.l {
                    self.g[t] += a * self.sign[t] * ks[self.ix[t] as usize] as f64;
                }
            }
        }
    }

    fn shrunk(&self, t: usize, gmax1: f64, gmax2: f64) -> bool {
        if self.upper(t) {
            if self.sign[t] > 0.0 {
                -self.g[t] > gmax1
            } else {
                -self.g[t] > gmax2
            }
        } else if self.lower(t) {
            if self.sign[t] > 0.0 {
                self.g[t] > gmax2
            } else {
                self.g[t] > gmax1
            }
        } else {
            false
        }
    }

    fn shrink(&mut self) {
        let (mut gmax1, mut gmax2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for t in 0..self.active {
            let (up, down) = if self.sign[t] > 0.0 { (-self.g[t], self.g[t]) } else { (self.g[t], -self.g[t]) };
            if self.sign[t] > 0.0 {
                if !self.upper(t) {
                    gmax1 = gmax1.max(up);
                }
                if !self.lower(t) {
                    gmax2 = gmax2.max(down);
                }
            } else {
                if !self.upper(t) {
                    gmax2 = gmax2.max(down);
                }
                if !self.lower(t) {
                    gmax1 = gmax1.max(up);
                }
            }
        }
        if !self.unshrink && gmax1 + gmax2 <= EPS_STOP * 10.0 {
            self.unshrink = true;
            self.reconstruct_gradient();
            self.active = self.l;
        }
        let mut t = 0;
        while t < self.active {
            if self.shrunk(t, gmax1, gmax2) {
                self.active -= 1;
                while self.active > t {
                    if !self.shrunk(self.active, gmax1, gmax2) {
                        self.swap(t, self.active);
                        break;
                    }
                    self.active -= 1;
                }
            }
            t += 1;
        }
    }

    fn run(&mut self) -> Result<()> {
        let max_iter = (100 * self.l).max(10_000_000);
        let mut counter = self.l.min(1000) + 1;
        loop {
            counter -= 1;
            if counter == 0 {
                counter = self.l.min(1000);
                self.shrink();
            }
            let (i, j) = match self.select() {
                Some(pair) => pair,
                None => {
                    self.reconstruct_gradient();
                    self.active = self.l;
                    match self.select() {
                        Some(pair) => {
                            counter = 1;
                            pair
                        }
                        None => return Ok(()),
                    }
                }
            };
            self.iter += 1;
            if self.iter > max_iter {
                return Err(Error::NonConvergence { iterations: self.iter });
            }
            self.step(i, j);
        }
    }

    fn step(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (ki, kj) = (self.krow(i), self.krow(j));
        let kij = ki[self.ix[j] as usize] as f64;
        let quad = self.qd[i] + self.qd[j] - 2.0 * kij;
        let quad = if quad > 0.0 { quad } else { TAU };
        let (oi, oj) = (self.alpha[i], self.alpha[j]);
        let (ui, uj) = (self.upper(i), self.upper(j));
        let (g, alpha) = (&self.g, &mut self.alpha);
        if self.sign[i] != self.sign[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = (self.alpha[i] - oi) * self.sign[i];
        let dj = (self.alpha[j] - oj) * self.sign[j];
        for t in 0..self.active {
            let rt = self.ix[t] as usize;
            self.g[t] += self.sign[t] * (di * ki[rt] as f64 + dj * kj[rt] as f64);
        }
        for (v, was_upper, row) in [(i, ui, ki), (j, uj, kj)] {
            if was_upper != self.upper(v) {
                let w = if was_upper { -c } else { c } * self.sign[v];
                for t in 0..self.l {
                    self.g_bar[t] += w * self.sign[t] * row[self.ix[t] as usize] as f64;
                }
            }
        }
    }

    fn rho(&self) -> f64 {
        let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for t in 0..self.l {
            let yg = self.sign[t] * self.g[t];
            if self.upper(t) {
                if self.sign[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.lower(t) {
                if self.sign[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                sum_free += yg;
            }
        }
        if n_free > 0 {
            sum_free / n_free as f64
        } else {
            (ub + lb) / 2.0
        }
    }

    fn alpha_in_original_order(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.l];
        for (t, &o) in self.perm.iter().enumerate() {
            out[o] = self.alpha[t];
        }
        out
    }
}

/// Decision values for the Gram rows `targets`.
pub fn decision_on(gram: &Gram, rows: &[usize], sol: &DualSolution, targets: &[usize]) -> Vec<f64> {
    targets
        .iter()
        .map(|&t| {
            let kt = gram.row(t);
            rows.iter().zip(&sol.coef).filter(|(_, c)| **c != 0.0).map(|(&s, c)| c * kt[s] as f64).sum::<f64>() - sol.rho
        })
        .collect()
}

/// A fitted model holding its support vectors in standardized space.
/// Classifiers report `σ(decision)`, which exceeds ½ exactly on the positive
/// side; it is not a calibrated probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Svm {
    st: Standardizer,
    sv: Vec<Vec<f64>>,
    coef: Vec<f64>,
    rho: f64,
    gamma: f64,
    kind: SvmKind,
}

impl Svm {
    /// Packages a solution whose training rows index `z`, already
    /// standardized by `st`.
    pub fn from_solution(st: Standardizer, z: &Matrix, rows: &[usize], sol: &DualSolution, gamma: f64, kind: SvmKind) -> Self {
        let (sv, coef) = rows
            .iter()
            .zip(&sol.coef)
            .filter(|(_, c)| **c != 0.0)
            .map(|(&s, &c)| (z.row(s).to_vec(), c))
            .unzip();
        Self {
            st,
            sv,
            coef,
            rho: sol.rho,
            gamma,
            kind,
        }
    }

    pub fn fit(x: &Matrix, y: &[f64], kind: SvmKind, c: f64, gamma: f64) -> Result<Self> {
        let st = Standardizer::fit_keep_indicators(x);
        let z = st.apply(x);
        let gram = Gram::rbf(&sq_distances(&z), z.rows(), gamma);
        let rows: Vec<usize> = (0..z.rows()).collect();
        let sol = solve_dual(&gram, y, kind, c, None)?;
        Ok(Self::from_solution(st, &z, &rows, &sol, gamma, kind))
    }

    pub fn support_vectors(&self) -> usize {
        self.sv.len()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; x.len()];
        self.st.apply_row(x, &mut z);
        self.sv
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| {
                let d2: f64 = s.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                c * (-(self.gamma * d2) as f32).exp() as f64
            })
            .sum::<f64>()
            - self.rho
    }
}

impl Predictor for Svm {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let f = self.decision(x);
        match self.kind {
            SvmKind::Classification => sigmoid(f),
            SvmKind::Regression { .. } => f,
        }
    }
}
