//! Linear programs of the form
//!
//! ```text
//! maximize cᵀθ  subject to  Gθ ≤ h,  θ free
//! ```
//!
//! solved through the dual `minimize hᵀλ s.t. Gᵀλ = c, λ ≥ 0` with a dense
//! two-phase simplex. The dual has one row per primal variable, so the
//! tableau stays a handful of rows tall even with thousands of constraints.
//! The primal solution is read off the simplex multipliers of the optimal
//! dual basis.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use crate::linalg::Matrix;
use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub theta: Vec<f64>,
    pub objective: f64,
    /// Indices of constraints with a positive dual weight (binding rows).
    pub active: Vec<usize>,
}

struct Tableau {
    rows: usize,
    /// Structural columns (one per primal constraint) then one artificial per row.
    cols: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, j: usize) -> f64 {
        self.t[r * self.cols + j]
    }

    fn pivot(&mut self, pr: usize, pc: usize, d: &mut [f64], obj: &mut f64) {
        let cols = self.cols;
        let piv = self.t[pr * cols + pc];
        for j in 0..cols {
            self.t[pr * cols + j] /= piv;
        }
        self.rhs[pr] /= piv;
        let (before, rest) = self.t.split_at_mut(pr * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for (r, row) in before
            .chunks_mut(cols)
            .enumerate()
            .chain(after.chunks_mut(cols).enumerate().map(|(i, x)| (i + pr + 1, x)))
        {
            let f = row[pc];
            if f != 0.0 {
                for (x, &p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                self.rhs[r] -= f * self.rhs[pr];
            }
        }
        let f = d[pc];
        if f != 0.0 {
            for (x, &p) in d.iter_mut().zip(prow.iter()) {
                *x -= f * p;
            }
            *obj -= f * self.rhs[pr];
        }
        self.basis[pr] = pc;
    }

    /// Runs simplex iterations on reduced costs `d` until optimal. Only the
    /// first `enter_limit` columns may enter the basis.
    fn optimize(&mut self, d: &mut [f64], obj: &mut f64, enter_limit: usize) -> Result<()> {
        let max_iter = 50 * (self.cols + self.rows) + 1000;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate_run > 50;
            let mut pc = None;
            let mut best = -COST_TOL;
            for (j, &dj) in d.iter().enumerate().take(enter_limit) {
                if dj < best {
                    pc = Some(j);
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            let Some(pc) = pc else { return Ok(()) };
            let mut pr = None;
            let mut ratio = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let q = self.rhs[r].max(0.0) / a;
                    let better = match pr {
                        None => true,
                        Some(p) => {
                            q < ratio - 1e-12 || (q <= ratio + 1e-12 && self.basis[r] < self.basis[p])
                        }
                    };
                    if better {
                        ratio = q;
                        pr = Some(r);
                    }
                }
            }
            let Some(pr) = pr else {
                return Err(Error::Infeasible(
                    "dual unbounded: the constraints admit no solution".into(),
                ));
            };
            if ratio <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(pr, pc, d, obj);
        }
        Err(Error::NonConvergence {
            iterations: max_iter,
        })
    }
}

/// Solves `max cᵀθ s.t. Gθ ≤ h`. Fails with [`Error::Degenerate`] when the
/// objective is unbounded above, which happens when `c` is not a nonnegative
/// combination of the rows of `G`.
pub fn maximize_free(c: &[f64], g: &Matrix, h: &[f64]) -> Result<LpSolution> {
    let p = c.len();
    let m = g.rows();
    assert_eq!(g.cols(), p, "constraint matrix width must match objective");
    assert_eq!(h.len(), m, "one bound per constraint");
    let cols = m + p;
    let mut sign = vec![1.0; p];
    let mut t = vec![0.0; p * cols];
    let mut rhs = vec![0.0; p];
    for r in 0..p {
        if c[r] < 0.0 {
            sign[r] = -1.0;
        }
        rhs[r] = sign[r] * c[r];
        for j in 0..m {
            t[r * cols + j] = sign[r] * g[(j, r)];
        }
        t[r * cols + m + r] = 1.0;
    }
    let mut tab = Tableau {
        rows: p,
        cols,
        t,
        rhs,
        basis: (m..m + p).collect(),
    };

    // Phase 1: minimize the sum of artificials.
    let mut d = vec![0.0; cols];
    let mut obj = 0.0;
    for r in 0..p {
        for j in 0..m {
            d[j] -= tab.at(r, j);
        }
        obj -= tab.rhs[r];
    }
    tab.optimize(&mut d, &mut obj, m)?;
    let infeas: f64 = (0..p)
        .filter(|&r| tab.basis[r] >= m)
        .map(|r| tab.rhs[r])
        .sum();
    let scale = 1.0 + c.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if infeas > 1e-8 * scale {
        return Err(Error::Degenerate(format!(
            "objective unbounded (dual phase-one residual {infeas:.3e})"
        )));
    }
    // Drive zero-level artificials out where a structural pivot exists.
    for r in 0..p {
        if tab.basis[r] >= m {
            if let Some(j) = (0..m).find(|&j| tab.at(r, j).abs() > 1e-9) {
                let mut dummy = vec![0.0; cols];
                let mut o = 0.0;
                tab.pivot(r, j, &mut dummy, &mut o);
            }
        }
    }

    // Phase 2: minimize hᵀλ; artificials cost 0 and never re-enter.
    let cost = |j: usize| if j < m { h[j] } else { 0.0 };
    let mut d: Vec<f64> = (0..cols).map(cost).collect();
    let mut obj = 0.0;
    for r in 0..p {
        let cb = cost(tab.basis[r]);
        if cb != 0.0 {
            for j in 0..cols {
                d[j] -= cb * tab.at(r, j);
            }
            obj -= cb * tab.rhs[r];
        }
    }
    tab.optimize(&mut d, &mut obj, m)?;

    // Multipliers y' of the sign-flipped rows: reduced cost of artificial r is -y'_r.
    let theta: Vec<f64> = (0..p).map(|r| -d[m + r] * sign[r]).collect();
    let mut active: Vec<usize> = (0..p)
        .filter(|&r| tab.basis[r] < m && tab.rhs[r] > 0.0)
        .map(|r| tab.basis[r])
        .collect();
    active.sort_unstable();
    let objective = c.iter().zip(&theta).map(|(a, b)| a * b).sum();
    Ok(LpSolution {
        theta,
        objective,
        active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: &[f64], rows: &[&[f64]], h: &[f64]) -> Result<LpSolution> {
        let p = c.len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        maximize_free(c, &Matrix::from_rows(rows.len(), p, data), h)
    }

    #[test]
    fn two_variable_textbook_problem() {
        // max 3x + 2y s.t. x + y ≤ 4, x + 3y ≤ 6, x ≤ 3, -x ≤ 0, -y ≤ 0 → (3, 1), 11.
        let s = lp(
            &[3.0, 2.0],
            &[&[1.0, 1.0], &[1.0, 3.0], &[1.0, 0.0], &[-1.0, 0.0], &[0.0, -1.0]],
            &[4.0, 6.0, 3.0, 0.0, 0.0],
        )
        .unwrap();
        assert!((s.theta[0] - 3.0).abs() < 1e-9);
        assert!((s.theta[1] - 1.0).abs() < 1e-9);
        assert!((s.objective - 11.0).abs() < 1e-9);
    }

    #[test]
    fn negative_objective_component() {
        // max -x s.t. -x ≤ 2 → x = -2.
        let s = lp(&[-1.0], &[&[-1.0]], &[2.0]).unwrap();
        assert!((s.theta[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        // max x s.t. -x ≤ 0.
        assert!(matches!(lp(&[1.0], &[&[-1.0]], &[0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn lower_envelope_line() {
        // max Σ (a + b x_i) s.t. a + b x_i ≤ y_i on (0,1), (1,0), (2,1): best line is y = 0.
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 0.0, 1.0];
        let rows: Vec<[f64; 2]> = xs.iter().map(|&x| [1.0, x]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| &r[..]).collect();
        let s = lp(&[3.0, 3.0], &refs, &ys).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            assert!(s.theta[0] + s.theta[1] * x <= y + 1e-9);
        }
        assert!(s.objective.abs() < 1e-9);
        assert!((s.theta[0] + s.theta[1] - 0.0).abs() < 1e-9);
    }
}
