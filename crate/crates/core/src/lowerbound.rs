//! Reconstruction of the additive age component from the lower envelope of
//! the score-versus-age scatter.
//!
//! Two stages. A low-degree polynomial lower bound flags "age outliers"
//! (points far below the envelope that a curve should not chase). The
//! remaining candidates then get a continuous, decreasing, piecewise-linear
//! lower bound with knots found by exhaustive search.
//!
//! Every fit here solves `maximize Σ count·s(age)` subject to `s ≤ points`,
//! i.e. it minimizes the total vertical gap between the points and the curve.

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::lp::{self, LpSolution};
use crate::profile::ProfileRow;
use crate::records::ScoreKind;
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_C: f64 = 0.05;
pub const EPS_FIT: f64 = 1e-9;
pub const TOL_CONT: f64 = 0.05;
pub const AGE_MIN: f64 = 16.0;
pub const AGE_MAX: f64 = 100.0;
pub const MIN_KNOT_SPACING: f64 = 4.0;
/// Slopes are constrained to be at most `-SLOPE_MARGIN`.
pub const SLOPE_MARGIN: f64 = 1e-6;

pub fn default_degree(kind: ScoreKind) -> usize {
    match kind {
        ScoreKind::General => 2,
        ScoreKind::Violent => 4,
    }
}

pub fn default_segments(kind: ScoreKind) -> usize {
    match kind {
        ScoreKind::General => 3,
        ScoreKind::Violent => 4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub age: f64,
    pub raw_score: f64,
    pub assessment_id: String,
}

impl ScatterPoint {
    pub fn new(age: f64, raw_score: f64, assessment_id: impl Into<String>) -> Self {
        Self {
            age,
            raw_score,
            assessment_id: assessment_id.into(),
        }
    }
}

/// Rows of `kind` whose age equals their age at first arrest and whose
/// computable components for that score are all zero: the criminal
/// involvement items for the general score, the violence history and
/// noncompliance items for the violent score.
pub fn select_candidates(rows: &[ProfileRow], kind: ScoreKind) -> Result<Vec<ScatterPoint>> {
    let out: Vec<ScatterPoint> = rows
        .iter()
        .filter(|r| r.score_kind == kind && is_candidate(r))
        .map(|r| ScatterPoint::new(r.age as f64, r.raw_score, r.assessment_id.clone()))
        .collect();
    if out.is_empty() {
        return Err(Error::NoCandidates(kind));
    }
    Ok(out)
}

pub fn is_candidate(r: &ProfileRow) -> bool {
    let Some(v) = &r.subscales else { return false };
    if r.age_first != Some(r.age) {
        return false;
    }
    match r.score_kind {
        ScoreKind::General => {
            let c = &v.criminal_involvement;
            c.n_arrests == 0 && c.n_jail30 == 0 && c.n_prison == 0 && c.n_probation_sentences == 0
        }
        ScoreKind::Violent => {
            let n = &v.noncompliance;
            v.violence_history.to_array().iter().all(|&x| x == 0)
                && n.on_probation_at_offense == 0
                && n.n_charges_on_probation == 0
                && n.n_probation_violations == 0
        }
    }
}

/// All rows of `kind` as scatter points.
pub fn scatter(rows: &[ProfileRow], kind: ScoreKind) -> Vec<ScatterPoint> {
    rows.iter()
        .filter(|r| r.score_kind == kind)
        .map(|r| ScatterPoint::new(r.age as f64, r.raw_score, r.assessment_id.clone()))
        .collect()
}

/// Points collapsed per distinct age: minimum score and multiplicity.
#[derive(Debug, Clone)]
struct AgeGroups {
    ages: Vec<f64>,
    ymin: Vec<f64>,
    count: Vec<f64>,
}

impl AgeGroups {
    fn new<'a>(points: impl Iterator<Item = &'a ScatterPoint>) -> Self {
        let mut pts: Vec<(f64, f64)> = points.map(|p| (p.age, p.raw_score)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut g = AgeGroups {
            ages: Vec::new(),
            ymin: Vec::new(),
            count: Vec::new(),
        };
        for (x, y) in pts {
            if g.ages.last() == Some(&x) {
                let i = g.ages.len() - 1;
                g.ymin[i] = g.ymin[i].min(y);
                g.count[i] += 1.0;
            } else {
                g.ages.push(x);
                g.ymin.push(y);
                g.count.push(1.0);
            }
        }
        g
    }

    fn len(&self) -> usize {
        self.ages.len()
    }

    fn total(&self) -> f64 {
        self.count.iter().sum()
    }
}

/// Affine map of the age range onto [-1, 1].
#[derive(Debug, Clone, Copy)]
struct AgeScale {
    mid: f64,
    half: f64,
}

impl AgeScale {
    fn new(ages: &[f64]) -> Self {
        let lo = ages.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let half = ((hi - lo) / 2.0).max(0.5);
        Self {
            mid: (hi + lo) / 2.0,
            half,
        }
    }

    fn u(&self, x: f64) -> f64 {
        (x - self.mid) / self.half
    }
}

/// Polynomial lower bound, coefficients ascending in raw age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyBound {
    pub degree: usize,
    pub coefficients: Vec<f64>,
}

impl PolyBound {
    pub fn eval(&self, age: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * age + c)
    }
}

fn solve(c: &[f64], rows: &[Vec<f64>], h: &[f64]) -> Result<LpSolution> {
    let p = c.len();
    let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    lp::maximize_free(c, &Matrix::from_rows(rows.len(), p, data), h)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn fit_poly_groups(g: &AgeGroups, degree: usize) -> Result<PolyBound> {
    if g.len() < degree + 1 {
        return Err(Error::Degenerate(format!(
            "degree {degree} needs {} distinct ages, found {}",
            degree + 1,
            g.len()
        )));
    }
    let s = AgeScale::new(&g.ages);
    let n = g.total();
    let mut c = vec![0.0; degree + 1];
    let mut rows = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let u = s.u(g.ages[i]);
        let row: Vec<f64> = (0..=degree).map(|k| u.powi(k as i32)).collect();
        for k in 0..=degree {
            c[k] += g.count[i] * row[k] / n;
        }
        rows.push(row);
    }
    let sol = solve(&c, &rows, &g.ymin)?;
    // Σ θ_k ((x - m)/h)^k expanded into powers of x.
    let mut coef = vec![0.0; degree + 1];
    for (k, &t) in sol.theta.iter().enumerate() {
        let hk = s.half.powi(k as i32);
        for i in 0..=k {
            coef[i] += t / hk * binomial(k, i) * (-s.mid).powi((k - i) as i32);
        }
    }
    let mut bound = PolyBound {
        degree,
        coefficients: coef,
    };
    let viol = (0..g.len())
        .map(|i| bound.eval(g.ages[i]) - g.ymin[i])
        .fold(0.0f64, f64::max);
    bound.coefficients[0] -= viol;
    Ok(bound)
}

/// Polynomial of the given degree lying on or below every point and
/// minimizing the total gap.
pub fn fit_poly_lower_bound(points: &[ScatterPoint], degree: usize) -> Result<PolyBound> {
    fit_poly_groups(&AgeGroups::new(points.iter()), degree)
}

/// Outlier iff `raw_score < bound(age) - c`.
pub fn partition_age_outliers(
    points: &[ScatterPoint],
    bound: &PolyBound,
    c: f64,
) -> (Vec<ScatterPoint>, Vec<ScatterPoint>) {
    points
        .iter()
        .cloned()
        .partition(|p| !(p.raw_score < bound.eval(p.age) - c))
}

/// Stage-one result: the polynomial bound of the candidates after removing
/// age outliers, and the resulting partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub points: Vec<ScatterPoint>,
    pub inliers: Vec<ScatterPoint>,
    pub outliers: Vec<ScatterPoint>,
    pub bound: PolyBound,
    pub c: f64,
}

/// Stage one. A lower bound passes through its lowest points, so a point far
/// below the others cannot be "below the bound" of a fit that includes it.
/// Outliers are therefore found by peeling: for small sets `R` of points
/// touching the bound (at most `degree` of them), refit without `R`; if every
/// point of `R` then lies more than `c` below the refit, `R` is removed.
/// Smaller sets are preferred, then the one with the largest gap. Peeling
/// repeats until nothing is removed, and the final partition is taken against
/// the bound of the survivors.
pub fn stage_one(points: Vec<ScatterPoint>, degree: usize, c: f64) -> Result<CandidateSet> {
    let n = points.len();
    let mut kept = vec![true; n];
    let groups = |kept: &[bool]| AgeGroups::new(points.iter().zip(kept).filter(|(_, &k)| k).map(|(p, _)| p));
    let mut bound = fit_poly_groups(&groups(&kept), degree)?;
    if c.is_finite() {
        loop {
            // One touching point per age: its lowest score (first on ties).
            let mut lowest: BTreeMap<u64, usize> = BTreeMap::new();
            for i in (0..n).filter(|&i| kept[i]) {
                let key = points[i].age.to_bits();
                let e = lowest.entry(key).or_insert(i);
                if points[i].raw_score < points[*e].raw_score {
                    *e = i;
                }
            }
            let mut active: Vec<usize> = lowest
                .values()
                .copied()
                .filter(|&i| {
                    let p = &points[i];
                    p.raw_score - bound.eval(p.age) <= 1e-7 * (1.0 + p.raw_score.abs())
                })
                .collect();
            active.sort_by(|&a, &b| points[a].age.total_cmp(&points[b].age));
            let mut removal: Option<(Vec<usize>, PolyBound)> = None;
            'sizes: for size in 1..=degree.min(active.len()) {
                let mut best_gap = f64::NEG_INFINITY;
                for subset in combinations(active.len(), size) {
                    let r: Vec<usize> = subset.iter().map(|&j| active[j]).collect();
                    let mut trial = kept.clone();
                    for &i in &r {
                        trial[i] = false;
                    }
                    let Ok(refit) = fit_poly_groups(&groups(&trial), degree) else {
                        continue;
                    };
                    let gap = r
                        .iter()
                        .map(|&i| refit.eval(points[i].age) - points[i].raw_score)
                        .fold(f64::INFINITY, f64::min);
                    if gap > c && gap > best_gap {
                        best_gap = gap;
                        removal = Some((r, refit));
                    }
                }
                if removal.is_some() {
                    break 'sizes;
                }
            }
            match removal {
                Some((r, refit)) => {
                    for i in r {
                        kept[i] = false;
                    }
                    bound = refit;
                }
                None => break,
            }
        }
    }
    // Partition everything against the survivors' bound; refit until stable.
    let mut inlier_mask = kept.clone();
    for _ in 0..n + 1 {
        let next: Vec<bool> = points
            .iter()
            .map(|p| !(p.raw_score < bound.eval(p.age) - c))
            .collect();
        if next == inlier_mask {
            break;
        }
        inlier_mask = next;
        bound = fit_poly_groups(&groups(&inlier_mask), degree)?;
    }
    let (inliers, outliers) = points
        .iter()
        .zip(&inlier_mask)
        .fold((Vec::new(), Vec::new()), |(mut i, mut o), (p, &k)| {
            if k {
                i.push(p.clone());
            } else {
                o.push(p.clone());
            }
            (i, o)
        });
    Ok(CandidateSet {
        points,
        inliers,
        outliers,
        bound,
        c,
    })
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Continuous, decreasing, piecewise-linear function of age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineParts", into = "SplineParts")]
pub struct AgeSpline {
    knots: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineParts {
    pub knots: Vec<f64>,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl TryFrom<SplineParts> for AgeSpline {
    type Error = Error;
    fn try_from(p: SplineParts) -> Result<Self> {
        AgeSpline::new(p.knots, p.slopes, p.intercepts)
    }
}

impl From<AgeSpline> for SplineParts {
    fn from(s: AgeSpline) -> Self {
        SplineParts {
            knots: s.knots,
            slopes: s.slopes,
            intercepts: s.intercepts,
        }
    }
}

impl AgeSpline {
    /// Validates shape, strictly ascending knots, negative slopes and
    /// continuity within [`TOL_CONT`].
    pub fn new(knots: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64>) -> Result<Self> {
        let k = slopes.len();
        if k == 0 || intercepts.len() != k || knots.len() + 1 != k {
            return Err(Error::InvalidSpline(format!(
                "{} knots, {} slopes, {} intercepts",
                knots.len(),
                k,
                intercepts.len()
            )));
        }
        if knots.iter().chain(&slopes).chain(&intercepts).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpline("non-finite coefficient".to_string()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpline("knots must be strictly ascending".to_string()));
        }
        if let Some(s) = slopes.iter().find(|&&s| s >= 0.0) {
            return Err(Error::InvalidSpline(format!("slope {s} is not negative")));
        }
        for (j, &kn) in knots.iter().enumerate() {
            let left = intercepts[j] + slopes[j] * kn;
            let right = intercepts[j + 1] + slopes[j + 1] * kn;
            if (left - right).abs() > TOL_CONT {
                return Err(Error::InvalidSpline(format!(
                    "discontinuity {:.4} at knot {kn}",
                    (left - right).abs()
                )));
            }
        }
        Ok(Self {
            knots,
            slopes,
            intercepts,
        })
    }

    /// Exactly continuous spline from knots, slopes and the first intercept.
    pub fn from_knots_and_slopes(knots: Vec<f64>, slopes: Vec<f64>, first_intercept: f64) -> Result<Self> {
        if slopes.is_empty() || knots.len() + 1 != slopes.len() {
            return Err(Error::InvalidSpline(format!(
                "{} knots need {} slopes, got {}",
                knots.len(),
                knots.len() + 1,
                slopes.len()
            )));
        }
        let mut intercepts = vec![first_intercept];
        for (j, &kn) in knots.iter().enumerate() {
            let prev = intercepts[j];
            intercepts.push(prev + (slopes[j] - slopes[j + 1]) * kn);
        }
        Self::new(knots, slopes, intercepts)
    }

    /// Published general-score age pieces.
    pub fn published_general() -> Self {
        Self::new(
            vec![33.26, 50.02],
            vec![-0.056, -0.032, -0.021],
            vec![-0.179, -0.963, -1.541],
        )
        .expect("published pieces are valid")
    }

    /// Published violent-score age pieces.
    pub fn published_violent() -> Self {
        Self::new(
            vec![21.77, 34.58, 48.36],
            vec![-0.205, -0.070, -0.040, -0.025],
            vec![1.815, -1.113, -2.166, -2.882],
        )
        .expect("published pieces are valid")
    }

    /// Published knots and slopes made exactly continuous, anchored on the
    /// first published piece.
    pub fn published_continuous(kind: ScoreKind) -> Self {
        let p = match kind {
            ScoreKind::General => Self::published_general(),
            ScoreKind::Violent => Self::published_violent(),
        };
        Self::from_knots_and_slopes(p.knots, p.slopes, p.intercepts[0]).expect("valid")
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    fn segment(&self, age: f64) -> usize {
        self.knots.iter().position(|&k| age <= k).unwrap_or(self.knots.len())
    }

    /// Value on the active segment; an age exactly on a knot uses the left one.
    pub fn evaluate(&self, age: f64) -> Result<f64> {
        if !(AGE_MIN..=AGE_MAX).contains(&age) {
            return Err(Error::AgeOutOfRange(age));
        }
        Ok(self.eval_unchecked(age))
    }

    /// Evaluation without the domain check, extrapolating the end segments.
    pub fn eval_unchecked(&self, age: f64) -> f64 {
        let j = self.segment(age);
        self.intercepts[j] + self.slopes[j] * age
    }

    /// The same spline shifted vertically by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            knots: self.knots.clone(),
            slopes: self.slopes.clone(),
            intercepts: self.intercepts.iter().map(|b| b + delta).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineOptions {
    pub segments: usize,
    pub min_knot_spacing: f64,
    /// Distinct ages required in every segment.
    pub min_segment_ages: usize,
}

impl SplineOptions {
    pub fn new(segments: usize) -> Self {
        Self {
            segments,
            min_knot_spacing: MIN_KNOT_SPACING,
            min_segment_ages: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    pub spline: AgeSpline,
    /// Σ over points of `raw_score - s(age)`.
    pub total_gap: f64,
    pub mean_gap: f64,
    pub se_gap: f64,
    pub lp_solves: usize,
}

/// Stage two: continuous piecewise-linear lower bound with `segments` pieces.
pub fn fit_spline_lower_bound(points: &[ScatterPoint], segments: usize) -> Result<AgeSpline> {
    Ok(fit_spline_with(points, &SplineOptions::new(segments))?.spline)
}

/// Knot search in two phases. First every admissible placement of knots at
/// midpoints between consecutive distinct ages is solved as a hinge-basis LP.
/// Then the best placement is refined: each knot may sit anywhere between
/// the two ages around it (and the neighbouring gaps), with one line per
/// segment and the adjacent lines constrained to cross inside that gap. The
/// crossing becomes the knot, so the result is exactly continuous.
pub fn fit_spline_with(points: &[ScatterPoint], opts: &SplineOptions) -> Result<SplineFit> {
    let k = opts.segments;
    if k == 0 {
        return Err(Error::Invalid("at least one segment is required".to_string()));
    }
    let g = AgeGroups::new(points.iter());
    let m = g.len();
    let need = (k * opts.min_segment_ages).max(2);
    if m < need {
        return Err(Error::Infeasible(format!(
            "{k} segments need at least {need} distinct ages, found {m}"
        )));
    }
    let s = AgeScale::new(&g.ages);
    let us: Vec<f64> = g.ages.iter().map(|&x| s.u(x)).collect();
    let n = g.total();
    let margin = SLOPE_MARGIN * s.half;
    let mut solves = 0usize;

    // Phase one over gap indices t (knot between ages[t] and ages[t + 1]).
    let mid = |t: usize| (g.ages[t] + g.ages[t + 1]) / 2.0;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut cells = Vec::with_capacity(k - 1);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m + k);
    let mut h: Vec<f64> = Vec::with_capacity(m + k);
    let mut c = vec![0.0; k + 1];
    enumerate_cells(&g.ages, opts, &mut cells, &mut |cells: &[usize]| {
        let knots_u: Vec<f64> = cells.iter().map(|&t| s.u(mid(t))).collect();
        rows.clear();
        h.clear();
        c.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            let mut row = vec![1.0, us[i]];
            row.extend(knots_u.iter().map(|&kn| (us[i] - kn).max(0.0)));
            for (cj, rj) in c.iter_mut().zip(&row) {
                *cj += g.count[i] * rj / n;
            }
            rows.push(row);
            h.push(g.ymin[i]);
        }
        for j in 0..k {
            let mut row = vec![0.0; k + 1];
            row[1] = 1.0;
            for r in row.iter_mut().skip(2).take(j) {
                *r = 1.0;
            }
            rows.push(row);
            h.push(-margin);
        }
        solves += 1;
        if let Ok(sol) = solve(&c, &rows, &h) {
            let better = match &best {
                None => true,
                Some((b, _)) => sol.objective > b + 1e-12 * (1.0 + b.abs()),
            };
            if better {
                best = Some((sol.objective, cells.to_vec()));
            }
        }
    });
    let Some((_, base)) = best else {
        return Err(Error::Infeasible(format!(
            "no admissible placement of {} knots over {m} distinct ages",
            k - 1
        )));
    };

    // Phase two: shift each cell by -1/0/+1 and try both kink directions.
    let mut best2: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let shifts = 3usize.pow((k - 1) as u32);
    for code in 0..shifts {
        let mut cells = Vec::with_capacity(k - 1);
        let mut rem = code;
        let mut ok = true;
        for &t in &base {
            let d = (rem % 3) as isize - 1;
            rem /= 3;
            let tt = t as isize + d;
            if tt < 0 || tt as usize + 1 >= m {
                ok = false;
                break;
            }
            cells.push(tt as usize);
        }
        if !ok || !cells_admissible(&cells, m, opts.min_segment_ages) {
            continue;
        }
        for signs in 0..(1usize << (k - 1)) {
            solves += 1;
            if let Ok(sol) = solve_line_pairs(&g, &us, n, margin, &cells, signs) {
                let better = match &best2 {
                    None => true,
                    Some((b, _, _)) => sol.objective > b + 1e-12 * (1.0 + b.abs()),
                };
                if better {
                    best2 = Some((sol.objective, cells.clone(), sol.theta));
                }
            }
        }
    }
    let spline = match best2 {
        Some((_, cells, theta)) => {
            let slopes: Vec<f64> = (0..k).map(|j| theta[2 * j + 1] / s.half).collect();
            let intercepts: Vec<f64> = (0..k)
                .map(|j| theta[2 * j] - theta[2 * j + 1] * s.mid / s.half)
                .collect();
            let knots: Vec<f64> = cells
                .iter()
                .enumerate()
                .map(|(j, &t)| {
                    let (lo, hi) = (g.ages[t], g.ages[t + 1]);
                    let ds = slopes[j] - slopes[j + 1];
                    let x = if ds.abs() <= 1e-12 * (1.0 + slopes[j].abs()) {
                        (lo + hi) / 2.0
                    } else {
                        (intercepts[j + 1] - intercepts[j]) / ds
                    };
                    x.clamp(lo, hi)
                })
                .collect();
            build_feasible(knots, slopes, intercepts, &g)?
        }
        None => {
            return Err(Error::Infeasible("refinement found no feasible spline".to_string()));
        }
    };
    let gaps: Vec<f64> = points
        .iter()
        .map(|p| p.raw_score - spline.eval_unchecked(p.age))
        .collect();
    let total_gap: f64 = gaps.iter().sum();
    let mean_gap = total_gap / gaps.len() as f64;
    let var = gaps.iter().map(|x| (x - mean_gap).powi(2)).sum::<f64>() / (gaps.len().max(2) - 1) as f64;
    Ok(SplineFit {
        spline,
        total_gap,
        mean_gap,
        se_gap: (var / gaps.len() as f64).sqrt(),
        lp_solves: solves,
    })
}

/// Lowers every intercept by the largest violation so the spline lies on or
/// below all group minima, then validates.
fn build_feasible(knots: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64>, g: &AgeGroups) -> Result<AgeSpline> {
    // Pieces already cross at the knots up to rounding; rebuild them so
    // they meet exactly.
    let mut b = vec![intercepts[0]];
    for (j, &kn) in knots.iter().enumerate() {
        let prev = b[j];
        b.push(prev + (slopes[j] - slopes[j + 1]) * kn);
    }
    let mut spline = AgeSpline::new(knots, slopes, b)?;
    let viol = (0..g.len())
        .map(|i| spline.eval_unchecked(g.ages[i]) - g.ymin[i])
        .fold(0.0f64, f64::max);
    if viol > 0.0 {
        spline = spline.shifted(-viol);
    }
    Ok(spline)
}

fn cells_admissible(cells: &[usize], m: usize, min_ages: usize) -> bool {
    let mut prev_end = 0usize; // ages[prev_end..] not yet assigned
    for &t in cells {
        if t + 1 < prev_end + min_ages {
            return false;
        }
        prev_end = t + 1;
    }
    m >= prev_end + min_ages
}

/// Calls `f` on every admissible knot-cell vector in lexicographic order.
fn enumerate_cells(ages: &[f64], opts: &SplineOptions, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    let m = ages.len();
    let need = opts.segments - 1;
    if cur.len() == need {
        if m >= cur.last().map_or(0, |&t| t + 1) + opts.min_segment_ages {
            f(cur);
        }
        return;
    }
    let start = cur.last().map_or(0, |&t| t + 1);
    let mid = |t: usize| (ages[t] + ages[t + 1]) / 2.0;
    let remaining_after = need - cur.len() - 1;
    for t in start..m.saturating_sub(1) {
        if t + 1 < start + opts.min_segment_ages {
            continue;
        }
        // Leave room for the remaining segments.
        if t + 1 + (remaining_after + 1) * opts.min_segment_ages > m {
            break;
        }
        if let Some(&p) = cur.last() {
            if mid(t) - mid(p) < opts.min_knot_spacing {
                continue;
            }
        }
        cur.push(t);
        enumerate_cells(ages, opts, cur, f);
        cur.pop();
    }
}

/// One line per segment; bit `j` of `signs` set means the kink at knot `j` is
/// concave (slope decreases), clear means convex.
fn solve_line_pairs(g: &AgeGroups, us: &[f64], n: f64, margin: f64, cells: &[usize], signs: usize) -> Result<LpSolution> {
    let k = cells.len() + 1;
    let p = 2 * k;
    let mut rows = Vec::with_capacity(g.len() + 3 * k);
    let mut h = Vec::with_capacity(g.len() + 3 * k);
    let mut c = vec![0.0; p];
    let mut seg = 0usize;
    for i in 0..g.len() {
        while seg < cells.len() && i > cells[seg] {
            seg += 1;
        }
        let mut row = vec![0.0; p];
        row[2 * seg] = 1.0;
        row[2 * seg + 1] = us[i];
        c[2 * seg] += g.count[i] / n;
        c[2 * seg + 1] += g.count[i] * us[i] / n;
        rows.push(row);
        h.push(g.ymin[i]);
    }
    for j in 0..k {
        let mut row = vec![0.0; p];
        row[2 * j + 1] = 1.0;
        rows.push(row);
        h.push(-margin);
    }
    for (j, &t) in cells.iter().enumerate() {
        // d(x) = L_{j+1}(x) - L_j(x)
        let d = |x: f64, sgn: f64| {
            let mut row = vec![0.0; p];
            row[2 * j + 2] = sgn;
            row[2 * j + 3] = sgn * x;
            row[2 * j] = -sgn;
            row[2 * j + 1] = -sgn * x;
            row
        };
        let (lo, hi) = (us[t], us[t + 1]);
        let concave = signs >> j & 1 == 1;
        let s = if concave { -1.0 } else { 1.0 };
        rows.push(d(lo, s));
        h.push(0.0);
        rows.push(d(hi, -s));
        h.push(0.0);
    }
    solve(&c, &rows, &h)
}

/// Segment count by the one-standard-error rule on the mean gap: the
/// smallest `K` whose mean gap is within one standard error of the best.
pub fn fit_spline_auto(points: &[ScatterPoint], max_segments: usize) -> Result<(usize, SplineFit)> {
    let mut fits = Vec::new();
    for k in 1..=max_segments.max(1) {
        match fit_spline_with(points, &SplineOptions::new(k)) {
            Ok(f) => fits.push((k, f)),
            Err(e) if fits.is_empty() => return Err(e),
            Err(_) => break,
        }
    }
    let (_, best) = fits
        .iter()
        .min_by(|a, b| a.1.mean_gap.total_cmp(&b.1.mean_gap))
        .expect("at least one fit");
    let limit = best.mean_gap + best.se_gap;
    let pick = fits
        .iter()
        .position(|(_, f)| f.mean_gap <= limit + 1e-12)
        .expect("the best fit qualifies");
    Ok(fits.swap_remove(pick))
}

/// Nondecreasing contribution of an integer subscale sum, anchored at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    /// `values[s]` is g(s); sums beyond the end take the last value.
    values: Vec<f64>,
    /// Levels whose minimum sat above the envelope and were flattened.
    #[serde(default)]
    flagged: Vec<u32>,
}

impl StepFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return Err(Error::Invalid("g(0) must be 0".to_string()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Invalid("step values must be finite and nondecreasing".to_string()));
        }
        Ok(Self {
            values,
            flagged: Vec::new(),
        })
    }

    pub fn zero() -> Self {
        Self {
            values: vec![0.0],
            flagged: Vec::new(),
        }
    }

    pub fn eval(&self, sum: u32) -> f64 {
        let i = (sum as usize).min(self.values.len() - 1);
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flagged(&self) -> &[u32] {
        &self.flagged
    }

    /// Sums at which the value increases.
    pub fn breakpoints(&self) -> Vec<u32> {
        self.values
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0])
            .map(|(i, _)| i as u32 + 1)
            .collect()
    }
}

/// Largest nondecreasing function with g(0) = 0 lying on or below the minimum
/// remainder of every observed sum level, clamped below at 0.
pub fn fit_violence_history_step(pairs: &[(u32, f64)]) -> Result<StepFunction> {
    let mut minima: BTreeMap<u32, f64> = BTreeMap::new();
    for &(s, r) in pairs {
        let e = minima.entry(s).or_insert(f64::INFINITY);
        *e = e.min(r);
    }
    if !minima.contains_key(&0) {
        return Err(Error::NoAnchor);
    }
    let top = *minima.keys().next_back().expect("nonempty");
    let mut values = vec![0.0; top as usize + 1];
    let mut flagged = Vec::new();
    let mut running = f64::INFINITY;
    for s in (1..=top).rev() {
        if let Some(&m) = minima.get(&s) {
            if m > running {
                flagged.push(s);
            }
            running = running.min(m);
        }
        values[s as usize] = running.max(0.0);
    }
    flagged.reverse();
    Ok(StepFunction { values, flagged })
}

/// Candidate count for every integer age from `age_lo` to `age_hi`.
pub fn data_assumption_counts(candidates: &[ScatterPoint], age_lo: u32, age_hi: u32) -> Vec<(u32, usize)> {
    let mut counts: BTreeMap<u32, usize> = (age_lo..=age_hi).map(|a| (a, 0)).collect();
    for p in candidates {
        *counts.entry(p.age as u32).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportRow {
    pub age: f64,
    pub min_raw: f64,
    /// Candidates within 1e-9 of the minimum.
    pub count: usize,
}

pub fn support_summary(candidates: &[ScatterPoint]) -> Vec<SupportRow> {
    let g = AgeGroups::new(candidates.iter());
    (0..g.len())
        .map(|i| SupportRow {
            age: g.ages[i],
            min_raw: g.ymin[i],
            count: candidates
                .iter()
                .filter(|p| p.age == g.ages[i] && p.raw_score - g.ymin[i] <= 1e-9)
                .count(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleReport {
    pub original: AgeSpline,
    pub subsampled: AgeSpline,
    pub cap: usize,
    pub seed: u64,
    pub max_abs_deviation: f64,
}

/// Refits on at most `cap` points per age (sampled without replacement) and
/// reports the largest difference between the two splines on ages 18 to 70.
pub fn subsample_robustness(points: &[ScatterPoint], segments: usize, cap: usize, seed: u64) -> Result<SubsampleReport> {
    let original = fit_spline_lower_bound(points, segments)?;
    let mut by_age: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].age.total_cmp(&points[b].age));
    for i in order {
        by_age.entry(points[i].age.to_bits()).or_default().push(i);
    }
    let mut r = rng::stream(seed, rng::streams::SUBSAMPLE);
    let mut sample = Vec::new();
    for idx in by_age.values() {
        if idx.len() <= cap {
            sample.extend(idx.iter().map(|&i| points[i].clone()));
        } else {
            let mut pick = index::sample(&mut r, idx.len(), cap).into_vec();
            pick.sort_unstable();
            sample.extend(pick.into_iter().map(|j| points[idx[j]].clone()));
        }
    }
    let subsampled = fit_spline_lower_bound(&sample, segments)?;
    let max_abs_deviation = (0..=208)
        .map(|i| 18.0 + i as f64 * 0.25)
        .map(|a| (original.eval_unchecked(a) - subsampled.eval_unchecked(a)).abs())
        .fold(0.0, f64::max);
    Ok(SubsampleReport {
        original,
        subsampled,
        cap,
        seed,
        max_abs_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(xy: &[(f64, f64)]) -> Vec<ScatterPoint> {
        xy.iter()
            .enumerate()
            .map(|(i, &(x, y))| ScatterPoint::new(x, y, format!("{i}")))
            .collect()
    }

    #[test]
    fn collinear_points_give_the_line() {
        let p = pts(&[(20.0, 1.0), (30.0, 0.0), (40.0, -1.0)]);
        let b = fit_poly_lower_bound(&p, 1).unwrap();
        assert!((b.coefficients[0] - 3.0).abs() < 1e-9);
        assert!((b.coefficients[1] + 0.1).abs() < 1e-9);
    }

    #[test]
    fn single_age_is_degenerate() {
        let p = pts(&[(20.0, 1.0), (20.0, 0.0), (20.0, -1.0)]);
        assert!(matches!(fit_poly_lower_bound(&p, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn quadratic_recovered_from_noisy_points() {
        // q(x) = 0.5 - 0.3x + 0.2x² on [-2, 2] with many exact-boundary samples.
        let q = |x: f64| 0.5 - 0.3 * x + 0.2 * x * x;
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let mut xy = Vec::new();
        for i in 0..=40 {
            let x = -2.0 + i as f64 * 0.1;
            xy.push((x, q(x)));
            for _ in 0..20 {
                let e: f64 = r.random::<f64>();
                xy.push((x, q(x) + e * e * 0.5));
            }
        }
        let b = fit_poly_lower_bound(&pts(&xy), 2).unwrap();
        for (got, want) in b.coefficients.iter().zip([0.5, -0.3, 0.2]) {
            assert!((got - want).abs() < 0.01, "{:?}", b.coefficients);
        }
    }

    #[test]
    fn partition_threshold_is_strict() {
        let b = PolyBound {
            degree: 0,
            coefficients: vec![1.0],
        };
        let p = pts(&[(20.0, 1.0 - 0.06), (21.0, 1.0 - 0.05), (22.0, 1.0)]);
        let (inl, out) = partition_age_outliers(&p, &b, 0.05);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].assessment_id, "0");
        assert_eq!(inl.len(), 2);
        assert!(partition_age_outliers(&p, &b, f64::INFINITY).1.is_empty());
        let (_, out0) = partition_age_outliers(&p, &b, 0.0);
        assert_eq!(out0.len(), 2);
    }

    #[test]
    fn stage_one_peels_a_low_point() {
        let mut xy: Vec<(f64, f64)> = (18..=60)
            .flat_map(|a| {
                let y = -0.05 * a as f64;
                [(a as f64, y), (a as f64, y + 0.3)]
            })
            .collect();
        xy.push((30.0, -0.05 * 30.0 - 0.8));
        let set = stage_one(pts(&xy), 2, 0.05).unwrap();
        assert_eq!(set.outliers.len(), 1);
        assert_eq!(set.outliers[0].assessment_id, format!("{}", xy.len() - 1));
        assert!((set.bound.eval(40.0) + 2.0).abs() < 1e-6);
    }

    #[test]
    fn stage_one_keeps_clean_data() {
        let xy: Vec<(f64, f64)> = (18..=70).map(|a| (a as f64, 0.001 * (a as f64 - 40.0).powi(2))).collect();
        let set = stage_one(pts(&xy), 2, 0.05).unwrap();
        assert!(set.outliers.is_empty());
    }

    #[test]
    fn published_pieces_evaluate() {
        let g = AgeSpline::published_general();
        assert!((g.evaluate(20.0).unwrap() + 1.299).abs() < 1e-12);
        let v = AgeSpline::published_violent();
        assert!((v.evaluate(60.0).unwrap() + 4.382).abs() < 1e-12);
        assert!(g.evaluate(15.0).is_err());
        assert!(g.evaluate(101.0).is_err());
        let left = -0.056 * 33.26 - 0.179;
        let right = -0.032 * 33.26 - 0.963;
        assert!(((left - right) as f64).abs() <= TOL_CONT);
        assert_eq!(g.evaluate(33.26).unwrap(), left);
    }

    #[test]
    fn spline_rejects_bad_shapes() {
        assert!(AgeSpline::new(vec![30.0], vec![-0.1, 0.0], vec![0.0, -3.0]).is_err());
        assert!(AgeSpline::new(vec![30.0], vec![-0.1, -0.05], vec![0.0, 0.0]).is_err());
        assert!(AgeSpline::new(vec![40.0, 30.0], vec![-0.1; 3], vec![0.0; 3]).is_err());
        let s = AgeSpline::from_knots_and_slopes(vec![30.0], vec![-0.1, -0.05], 0.0).unwrap();
        assert!((s.intercepts()[1] + 1.5).abs() < 1e-12);
    }

    fn spline_points(s: &AgeSpline, lo: u32, hi: u32, extra: usize, seed: u64) -> Vec<ScatterPoint> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for a in lo..=hi {
            let f = s.eval_unchecked(a as f64);
            out.push(ScatterPoint::new(a as f64, f, format!("{a}")));
            for j in 0..extra {
                let e: f64 = r.random::<f64>();
                out.push(ScatterPoint::new(a as f64, f + e, format!("{a}-{j}")));
            }
        }
        out
    }

    #[test]
    fn noiseless_spline_is_recovered_exactly() {
        for kind in [ScoreKind::General, ScoreKind::Violent] {
            let truth = AgeSpline::published_continuous(kind);
            let p = spline_points(&truth, 18, 80, 3, 5);
            let fit = fit_spline_with(&p, &SplineOptions::new(default_segments(kind))).unwrap();
            for a in 18..=80 {
                let d = fit.spline.eval_unchecked(a as f64) - truth.eval_unchecked(a as f64);
                assert!(d.abs() < 1e-6, "{kind} age {a}: {d}");
            }
            for (x, y) in fit.spline.knots().iter().zip(truth.knots()) {
                assert!((x - y).abs() <= 1.0);
            }
            for (x, y) in fit.spline.slopes().iter().zip(truth.slopes()) {
                assert!((x - y).abs() <= 0.005);
            }
        }
    }

    #[test]
    fn too_many_segments_is_infeasible() {
        let p = pts(&[(20.0, 0.0), (21.0, -0.1), (22.0, -0.2)]);
        assert!(matches!(fit_spline_lower_bound(&p, 3), Err(Error::Infeasible(_))));
    }

    #[test]
    fn auto_k_picks_two_for_a_two_piece_truth() {
        let truth = AgeSpline::from_knots_and_slopes(vec![40.5], vec![-0.1, -0.01], 0.0).unwrap();
        let p = spline_points(&truth, 18, 70, 0, 1);
        let (k, _) = fit_spline_auto(&p, 4).unwrap();
        assert_eq!(k, 2);
    }

    #[test]
    fn step_function_rules() {
        assert!(matches!(fit_violence_history_step(&[(1, 0.3)]), Err(Error::NoAnchor)));
        let g = fit_violence_history_step(&[(0, 0.0), (1, 0.0), (2, 0.0)]).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        // g(s) = 0.2 s up to 2, then 0.1 per level.
        let truth = [0.0, 0.2, 0.4, 0.5, 0.6];
        let pairs: Vec<(u32, f64)> = truth
            .iter()
            .enumerate()
            .flat_map(|(s, &v)| [(s as u32, v), (s as u32, v + 0.7)])
            .collect();
        let g = fit_violence_history_step(&pairs).unwrap();
        assert_eq!(g.values(), &truth);
        assert!(g.flagged().is_empty());
        // Decreasing minima are flattened and flagged.
        let g = fit_violence_history_step(&[(0, 0.0), (1, 0.5), (2, 0.3), (3, 0.8)]).unwrap();
        assert_eq!(g.values(), &[0.0, 0.3, 0.3, 0.8]);
        assert_eq!(g.flagged(), &[1]);
        assert_eq!(g.eval(10), 0.8);
    }

    #[test]
    fn counts_and_support() {
        assert!(data_assumption_counts(&[], 18, 20).iter().all(|&(_, c)| c == 0));
        let p = pts(&[(25.0, -1.0), (25.0, -1.0), (25.0, -0.5), (26.0, -1.2)]);
        let counts = data_assumption_counts(&p, 18, 30);
        assert_eq!(counts.iter().find(|c| c.0 == 25).unwrap().1, 3);
        assert_eq!(counts.iter().map(|c| c.1).sum::<usize>(), 4);
        let s = support_summary(&p);
        assert_eq!(s[0].count, 2);
        assert_eq!(s[1].count, 1);
    }

    #[test]
    fn subsample_without_excess_is_identity() {
        let truth = AgeSpline::published_continuous(ScoreKind::General);
        let p = spline_points(&truth, 18, 70, 2, 3);
        let r = subsample_robustness(&p, 3, 150, 9).unwrap();
        assert_eq!(r.max_abs_deviation, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fits_lie_below_points_and_shift_equivariantly(
            seed in 0u64..1000,
            delta in -3.0f64..3.0,
        ) {
            let truth = AgeSpline::published_continuous(ScoreKind::General);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<ScatterPoint> = (0..300)
                .map(|i| {
                    let a = r.random_range(18..70) as f64;
                    let e: f64 = r.random::<f64>();
                    ScatterPoint::new(a, truth.eval_unchecked(a) + e * e, format!("{i}"))
                })
                .collect();
            let poly = fit_poly_lower_bound(&p, 2).unwrap();
            let sp = fit_spline_lower_bound(&p, 3).unwrap();
            for q in &p {
                prop_assert!(poly.eval(q.age) <= q.raw_score + EPS_FIT);
                prop_assert!(sp.eval_unchecked(q.age) <= q.raw_score + EPS_FIT);
            }
            let shifted: Vec<ScatterPoint> = p.iter().map(|q| ScatterPoint::new(q.age, q.raw_score + delta, q.assessment_id.clone())).collect();
            let sp2 = fit_spline_lower_bound(&shifted, 3).unwrap();
            for (a, b) in sp.knots().iter().zip(sp2.knots()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in sp.slopes().iter().zip(sp2.slopes()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in sp.intercepts().iter().zip(sp2.intercepts()) {
                prop_assert!((a + delta - b).abs() < 1e-9);
            }
        }
    }
}
