//! Multi-kernel maximum mean discrepancy between two feature batches.
//!
//! The kernel is the equal-weight average of Gaussian kernels
//! `exp(−‖x − y‖² / (m · β))` over a ladder of multipliers `m`. The base
//! bandwidth `β` is either fixed or the median pairwise squared distance of
//! the pooled batch. The estimator is the biased one (diagonal terms kept).

use serde::{Deserialize, Serialize};

use crate::nn::matrix::squared_distance;
use crate::nn::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// Median pairwise squared distance over the pooled batch.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub multipliers: Vec<f64>,
    pub bandwidth: Bandwidth,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            multipliers: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            bandwidth: Bandwidth::Median,
        }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multipliers.is_empty() {
            return Err(Error::Empty("MMD kernel ladder".into()));
        }
        if let Some(m) = self.multipliers.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::invalid("mmd multiplier", m, "must be > 0"));
        }
        if let Bandwidth::Fixed(b) = self.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid("mmd bandwidth", b, "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Pairs `(i, j)` realising the median distance, with their weights.
type MedianPairs = Vec<((usize, usize), f64)>;

/// Pairwise geometry of the pooled batch `[a; b]`.
struct Pooled<'a> {
    points: Vec<&'a [f64]>,
    dist: Vec<f64>,
    n: usize,
    half: usize,
}

impl<'a> Pooled<'a> {
    fn new(a: &'a Matrix, b: &'a Matrix) -> Self {
        let points: Vec<&[f64]> = a.iter_rows().chain(b.iter_rows()).collect();
        let n = points.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = squared_distance(points[i], points[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Self {
            points,
            dist,
            n,
            half: a.rows(),
        }
    }

    #[inline]
    fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    #[inline]
    fn sign(&self, i: usize) -> f64 {
        if i < self.half {
            1.0
        } else {
            -1.0
        }
    }

    /// The median of the distinct-pair distances, with the pair(s) that realise it
    /// and their weights in the median.
    fn median(&self) -> (f64, MedianPairs) {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                pairs.push((self.d(i, j), i, j));
            }
        }
        if pairs.is_empty() {
            return (0.0, Vec::new());
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let m = pairs.len();
        if m % 2 == 1 {
            let (d, i, j) = pairs[m / 2];
            (d, vec![((i, j), 1.0)])
        } else {
            let (d0, i0, j0) = pairs[m / 2 - 1];
            let (d1, i1, j1) = pairs[m / 2];
            (0.5 * (d0 + d1), vec![((i0, j0), 0.5), ((i1, j1), 0.5)])
        }
    }
}

fn check(a: &Matrix, b: &Matrix, cfg: &MmdConfig) -> Result<()> {
    cfg.validate()?;
    if a.rows() != b.rows() {
        return Err(Error::dim("MMD batch size", a.rows(), b.rows()));
    }
    if a.cols() != b.cols() {
        return Err(Error::dim("MMD feature width", a.cols(), b.cols()));
    }
    if a.rows() == 0 {
        return Err(Error::Empty("MMD batch".into()));
    }
    Ok(())
}

/// Base bandwidth plus the pairs it was read from (empty when it is constant).
fn base_bandwidth(pooled: &Pooled<'_>, cfg: &MmdConfig) -> (f64, MedianPairs) {
    match cfg.bandwidth {
        Bandwidth::Fixed(b) => (b, Vec::new()),
        Bandwidth::Median => {
            let (m, pairs) = pooled.median();
            if m > 0.0 && m.is_finite() {
                (m, pairs)
            } else {
                // all points coincide: fall back to unit bandwidth
                (1.0, Vec::new())
            }
        }
    }
}

fn kernel(d: f64, base: f64, ladder: &[f64]) -> f64 {
    ladder.iter().map(|m| (-d / (m * base)).exp()).sum::<f64>() / ladder.len() as f64
}

/// Biased squared MMD between `a` and `b` with the configured kernel ladder.
pub fn mmd_loss(a: &Matrix, b: &Matrix, cfg: &MmdConfig) -> Result<f64> {
    check(a, b, cfg)?;
    let pooled = Pooled::new(a, b);
    let (base, _) = base_bandwidth(&pooled, cfg);
    let bsz = a.rows() as f64;
    let mut total = 0.0;
    for i in 0..pooled.n {
        for j in 0..pooled.n {
            total += pooled.sign(i) * pooled.sign(j) * kernel(pooled.d(i, j), base, &cfg.multipliers);
        }
    }
    Ok(total / (bsz * bsz))
}

/// [`mmd_loss`] and its gradient with respect to `a`. When the bandwidth is
/// the median heuristic, the gradient includes the path through the median pair.
pub(crate) fn mmd_loss_with_grad(a: &Matrix, b: &Matrix, cfg: &MmdConfig) -> Result<(f64, Matrix)> {
    check(a, b, cfg)?;
    let pooled = Pooled::new(a, b);
    let (base, median_pairs) = base_bandwidth(&pooled, cfg);
    let ladder = &cfg.multipliers;
    let k = ladder.len() as f64;
    let bsz = a.rows();
    let norm = 1.0 / (bsz * bsz) as f64;
    let d = a.cols();

    let mut loss = 0.0;
    let mut dl_dbase = 0.0;
    let mut grad = Matrix::zeros(bsz, d);
    for i in 0..pooled.n {
        for j in 0..pooled.n {
            let w = pooled.sign(i) * pooled.sign(j) * norm;
            let dist = pooled.d(i, j);
            let mut value = 0.0;
            // ∂K/∂D and ∂K/∂β
            let mut dk_dd = 0.0;
            let mut dk_dbase = 0.0;
            for m in ladder {
                let e = (-dist / (m * base)).exp();
                value += e;
                dk_dd -= e / (m * base);
                dk_dbase += e * dist / (m * base * base);
            }
            loss += w * value / k;
            dl_dbase += w * dk_dbase / k;
            // ∂D_ij/∂x_i = 2(x_i − x_j), ∂D_ij/∂x_j = 2(x_j − x_i)
            if i < bsz {
                let coeff = 2.0 * w * dk_dd / k;
                let (xi, xj) = (pooled.points[i], pooled.points[j]);
                for (g, (p, q)) in grad.row_mut(i).iter_mut().zip(xi.iter().zip(xj)) {
                    *g += coeff * (p - q);
                }
            }
            if j < bsz {
                let coeff = 2.0 * w * dk_dd / k;
                let (xj, xi) = (pooled.points[j], pooled.points[i]);
                for (g, (p, q)) in grad.row_mut(j).iter_mut().zip(xj.iter().zip(xi)) {
                    *g += coeff * (p - q);
                }
            }
        }
    }
    // β = median distance depends on the endpoints of the median pair(s)
    for ((p, q), weight) in median_pairs {
        let coeff = dl_dbase * weight * 2.0;
        let (xp, xq) = (pooled.points[p], pooled.points[q]);
        if p < bsz {
            for (g, (u, v)) in grad.row_mut(p).iter_mut().zip(xp.iter().zip(xq)) {
                *g += coeff * (u - v);
            }
        }
        if q < bsz {
            for (g, (u, v)) in grad.row_mut(q).iter_mut().zip(xq.iter().zip(xp)) {
                *g += coeff * (u - v);
            }
        }
    }
    Ok((loss, grad))
}
