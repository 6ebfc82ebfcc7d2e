//! Histogram regression trees grown on per-row gradient statistics.
//!
//! A node with gradient sum G and hessian sum H has value -G / (H + λ) and
//! score G² / (H + λ). With g = -y, h = 1 and λ = 0 this is an ordinary
//! least-squares CART tree; with loss gradients it is a boosting tree.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::linalg::Matrix;

/// Features quantized to at most 256 bins; splits are `x <= threshold`.
#[derive(Debug, Clone)]
pub struct Binned {
    pub n: usize,
    pub d: usize,
    /// Row-major bin codes.
    codes: Vec<u8>,
    /// Per feature, the threshold between bin `b` and `b + 1`.
    thresholds: Vec<Vec<f64>>,
    /// Start of each feature's block in a flat histogram.
    offsets: Vec<usize>,
}

impl Binned {
    pub fn new(x: &Matrix, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let (n, d) = (x.rows(), x.cols());
        let mut codes = vec![0u8; n * d];
        let mut thresholds = Vec::with_capacity(d);
        for j in 0..d {
            let mut col: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
            col.sort_by(f64::total_cmp);
            let mut uniq = col.clone();
            uniq.dedup();
            let cuts: Vec<f64> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
            } else {
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|b| {
                        let q = col[b * n / max_bins];
                        // Cut just below q so equal values stay together.
                        let pos = uniq.partition_point(|&u| u < q);
                        if pos == 0 {
                            f64::NEG_INFINITY
                        } else {
                            (uniq[pos - 1] + uniq[pos]) / 2.0
                        }
                    })
                    .filter(|c| c.is_finite())
                    .collect();
                c.dedup();
                c
            };
            for i in 0..n {
                codes[i * d + j] = cuts.partition_point(|&c| c < x[(i, j)]) as u8;
            }
            thresholds.push(cuts);
        }
        let mut offsets = Vec::with_capacity(d + 1);
        let mut total = 0;
        offsets.push(0);
        for t in &thresholds {
            total += t.len() + 1;
            offsets.push(total);
        }
        Self {
            n,
            d,
            codes,
            thresholds,
            offsets,
        }
    }

    fn code(&self, i: usize, j: usize) -> usize {
        self.codes[i * self.d + j] as usize
    }

    fn row_codes(&self, i: usize) -> &[u8] {
        &self.codes[i * self.d..(i + 1) * self.d]
    }

    fn total_bins(&self) -> usize {
        self.offsets[self.d]
    }

    #[cfg(test)]
    fn bins(&self, j: usize) -> usize {
        self.thresholds[j].len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        /// Last bin code on the left.
        bin: u16,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0usize;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => k = if x[feature] <= threshold { left } else { right } as usize,
            }
        }
    }

    /// Leaf value for a training row, via its bin codes.
    pub fn predict_binned(&self, b: &Binned, i: usize) -> f64 {
        let mut k = 0usize;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => k = if b.code(i, feature) <= bin as usize { left } else { right } as usize,
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    /// Minimum hessian mass in each child.
    pub min_child_weight: f64,
    /// Nodes with fewer rows than this are not split.
    pub min_split_rows: usize,
    /// Features sampled per split; `None` uses all.
    pub mtry: Option<usize>,
    /// Multiplier applied to leaf values.
    pub shrinkage: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    g: f64,
    h: f64,
    n: u32,
}

struct Grower<'a, R: Rng> {
    b: &'a Binned,
    g: &'a [f64],
    h: &'a [f64],
    p: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    pool: Vec<Vec<Cell>>,
}

impl<R: Rng> Grower<'_, R> {
    fn leaf_value(&self, gs: f64, hs: f64) -> f64 {
        let v = -gs / (hs + self.p.lambda);
        if v.is_finite() {
            v * self.p.shrinkage
        } else {
            0.0
        }
    }

    fn can_split(&self, rows: usize, depth: usize) -> bool {
        depth < self.p.max_depth && rows >= self.p.min_split_rows.max(2)
    }

    /// Histogram of `rows` over `features`; blocks of other features are
    /// left stale.
    fn histogram(&mut self, rows: &[u32], features: Option<&[usize]>) -> Vec<Cell> {
        let b = self.b;
        let mut hist = self.pool.pop().unwrap_or_else(|| vec![Cell::default(); b.total_bins()]);
        match features {
            None => {
                hist.fill(Cell::default());
                for &i in rows {
                    let i = i as usize;
                    let (gi, hi) = (self.g[i], self.h[i]);
                    for (j, &c) in b.row_codes(i).iter().enumerate() {
                        let e = &mut hist[b.offsets[j] + c as usize];
                        e.g += gi;
                        e.h += hi;
                        e.n += 1;
                    }
                }
            }
            Some(fs) => {
                for &j in fs {
                    hist[b.offsets[j]..b.offsets[j + 1]].fill(Cell::default());
                }
                for &i in rows {
                    let i = i as usize;
                    let (gi, hi) = (self.g[i], self.h[i]);
                    let rc = b.row_codes(i);
                    for &j in fs {
                        let e = &mut hist[b.offsets[j] + rc[j] as usize];
                        e.g += gi;
                        e.h += hi;
                        e.n += 1;
                    }
                }
            }
        }
        hist
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize, hist: Option<Vec<Cell>>) -> u32 {
        let (mut gs, mut hs) = (0.0, 0.0);
        for &i in rows.iter() {
            gs += self.g[i as usize];
            hs += self.h[i as usize];
        }
        let me = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf(self.leaf_value(gs, hs)));
        if !self.can_split(rows.len(), depth) {
            self.pool.extend(hist);
            return me;
        }
        let d = self.b.d;
        let sampled: Option<Vec<usize>> = match self.p.mtry {
            Some(m) if m < d => {
                let mut f = index::sample(self.rng, d, m).into_vec();
                f.sort_unstable();
                Some(f)
            }
            _ => None,
        };
        let hist = match hist {
            Some(h) => h,
            None => self.histogram(rows, sampled.as_deref()),
        };
        let parent = gs * gs / (hs + self.p.lambda);
        let mut best: Option<(f64, usize, usize)> = None;
        let all: Vec<usize>;
        let features: &[usize] = match &sampled {
            Some(f) => f,
            None => {
                all = (0..d).collect();
                &all
            }
        };
        for &j in features {
            let block = &hist[self.b.offsets[j]..self.b.offsets[j + 1]];
            if block.len() < 2 {
                continue;
            }
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0u32);
            for (s, e) in block[..block.len() - 1].iter().enumerate() {
                gl += e.g;
                hl += e.h;
                nl += e.n;
                let (gr, hr) = (gs - gl, hs - hl);
                let nr = rows.len() as u32 - nl;
                if nl == 0 || nr == 0 {
                    continue;
                }
                if hl < self.p.min_child_weight || hr < self.p.min_child_weight {
                    continue;
                }
                let gain = gl * gl / (hl + self.p.lambda) + gr * gr / (hr + self.p.lambda) - parent;
                if gain > 1e-12 * (1.0 + parent.abs()) && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, j, s));
                }
            }
        }
        let Some((_, j, s)) = best else {
            self.pool.push(hist);
            return me;
        };
        let mut lo = 0usize;
        for k in 0..rows.len() {
            if self.b.code(rows[k] as usize, j) <= s {
                rows.swap(lo, k);
                lo += 1;
            }
        }
        let (l, r) = rows.split_at_mut(lo);
        // Without feature sampling, build the smaller child's histogram and
        // get the larger one by subtraction from the parent.
        let (hl, hr) = if sampled.is_none() && self.can_split(l.len(), depth + 1) && self.can_split(r.len(), depth + 1) {
            let left_small = l.len() <= r.len();
            let small = self.histogram(if left_small { l } else { r }, None);
            let mut large = hist;
            for (e, s) in large.iter_mut().zip(&small) {
                e.g -= s.g;
                e.h -= s.h;
                e.n -= s.n;
            }
            if left_small {
                (Some(small), Some(large))
            } else {
                (Some(large), Some(small))
            }
        } else {
            self.pool.push(hist);
            (None, None)
        };
        let left = self.grow(l, depth + 1, hl);
        let right = self.grow(r, depth + 1, hr);
        self.nodes[me as usize] = Node::Split {
            feature: j,
            threshold: self.b.thresholds[j][s],
            bin: s as u16,
            left,
            right,
        };
        me
    }
}

/// Grows one tree over `rows` (duplicates allowed, e.g. a bootstrap sample).
pub fn grow<R: Rng>(b: &Binned, g: &[f64], h: &[f64], rows: &mut [u32], p: TreeParams, rng: &mut R) -> Tree {
    let mut grower = Grower {
        b,
        g,
        h,
        p,
        rng,
        nodes: Vec::new(),
        pool: Vec::new(),
    };
    grower.grow(rows, 0, None);
    Tree { nodes: grower.nodes }
}
