use crate::nn::{FeatureBatch, Matrix};
use crate::{Error, Result};

use super::ScalingFactors;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-30;

/// Numerically stable softmax of one row, written into `out`.
pub(crate) fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(row) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log Σ exp(row)` with max subtraction.
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

fn check_finite(logits: &Matrix) -> Result<()> {
    if logits.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            block: "logits".into(),
        })
    }
}

pub fn softmax_probs(logits: &Matrix) -> Result<Matrix> {
    check_finite(logits)?;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        softmax_row(logits.row(r), out.row_mut(r));
    }
    Ok(out)
}

/// Applies the per-class scales to the logits, `α_c · z_c`.
pub fn scale_logits(logits: &Matrix, scales: &ScalingFactors) -> Result<Matrix> {
    if scales.len() != logits.cols() {
        return Err(Error::dim("scaling factors", logits.cols(), scales.len()));
    }
    let mut scaled = logits.clone();
    for r in 0..scaled.rows() {
        for (z, &a) in scaled.row_mut(r).iter_mut().zip(scales.alphas()) {
            *z *= a;
        }
    }
    Ok(scaled)
}

/// Restricted softmax: `p_c ∝ exp(α_c · z_c)`.
///
/// With every `α_c = 1` the output is bit-identical to [`softmax_probs`].
pub fn restricted_softmax_probs(logits: &Matrix, scales: &ScalingFactors) -> Result<Matrix> {
    check_finite(logits)?;
    softmax_probs(&scale_logits(logits, scales)?)
}

fn check_labels(rows: usize, cols: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::dim("labels", rows, labels.len()));
    }
    if rows == 0 {
        return Err(Error::Empty("batch".into()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= cols) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: cols,
        });
    }
    Ok(())
}

/// Mean over the batch of `−log p_{i, y_i}`.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(probs.rows(), probs.cols(), labels)?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.get(i, y);
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::invalid(
                "probs",
                p,
                format!("row {i} has an invalid probability for its label"),
            ));
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Cross-entropy on `probs` together with `∂L/∂z` for the logits that produced them
/// (mean reduction).
pub(crate) fn cross_entropy_with_grad(probs: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let loss = cross_entropy(probs, labels)?;
    let inv_b = 1.0 / labels.len() as f64;
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(i);
        row[y] -= 1.0;
        for g in row.iter_mut() {
            *g *= inv_b;
        }
    }
    Ok((loss, grad))
}

/// Pulling and pushing forces acting on proxy `class` (sum reduction):
/// `Σ_{y_i=c} (1 − p_{i,c}) h_i` and `−Σ_{y_i≠c} p_{i,c} h_i`.
pub fn force_decomposition(
    batch: &FeatureBatch,
    probs: &Matrix,
    class: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let features = batch.features();
    if probs.rows() != features.rows() {
        return Err(Error::dim("probability rows", features.rows(), probs.rows()));
    }
    if class >= probs.cols() {
        return Err(Error::LabelOutOfRange {
            label: class,
            classes: probs.cols(),
        });
    }
    let d = features.cols();
    let mut pulling = vec![0.0; d];
    let mut pushing = vec![0.0; d];
    for (i, &y) in batch.labels().iter().enumerate() {
        let p = probs.get(i, class);
        let h = features.row(i);
        if y == class {
            for (f, &x) in pulling.iter_mut().zip(h) {
                *f += (1.0 - p) * x;
            }
        } else {
            for (f, &x) in pushing.iter_mut().zip(h) {
                *f -= p * x;
            }
        }
    }
    Ok((pulling, pushing))
}
