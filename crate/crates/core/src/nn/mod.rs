//! Dense network engine: forward pass, exact analytic gradients for the
//! closed set of training objectives, and momentum SGD.

pub mod matrix;
mod optim;
mod params;

pub use matrix::Matrix;
pub use optim::{sgd_step, OptimizerState, SgdConfig};
pub use params::{interpolate, Activation, Architecture, BlockId, DenseLayer, GradientSet, ModelParams};

use crate::losses::{
    cross_entropy, cross_entropy_with_grad, kd_loss, kd_loss_with_grad, mmd_loss,
    mmd_loss_with_grad, restricted_softmax_probs, scale_logits, softmax_probs,
    total_personalization_loss, LossSpec, Transfer,
};
use crate::{Error, Result};

/// Extractor features paired with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    features: Matrix,
    labels: Vec<usize>,
}

impl FeatureBatch {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Empty("feature batch".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::dim("feature batch labels", features.rows(), labels.len()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Per-layer values kept from the forward pass.
struct Trace {
    /// Input to each layer; `layer_inputs[0]` is the batch itself.
    layer_inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
    features: Matrix,
}

fn forward_trace(params: &ModelParams, inputs: &Matrix) -> Result<Trace> {
    if inputs.rows() == 0 {
        return Err(Error::Empty("input batch".into()));
    }
    let mut layer_inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut current = inputs.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        if current.cols() != layer.in_dim() {
            return Err(Error::dim(format!("input to layer {i}"), layer.in_dim(), current.cols()));
        }
        let mut z = current.matmul_transposed(&layer.weights);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        let mut out = z.clone();
        for v in out.as_mut_slice() {
            *v = layer.activation.apply(*v);
        }
        layer_inputs.push(current);
        pre_activations.push(z);
        current = out;
    }
    if current.cols() != params.feature_dim() {
        return Err(Error::dim("classifier input", params.feature_dim(), current.cols()));
    }
    Ok(Trace {
        layer_inputs,
        pre_activations,
        features: current,
    })
}

/// Post-activation output of the last extractor layer, `B × d`.
pub fn forward_features(params: &ModelParams, inputs: &Matrix) -> Result<Matrix> {
    Ok(forward_trace(params, inputs)?.features)
}

/// Bias-free classifier logits `h_i · w_c`, `B × C`.
pub fn forward_logits(params: &ModelParams, features: &Matrix) -> Result<Matrix> {
    if features.cols() != params.proxies.cols() {
        return Err(Error::dim("classifier input", params.proxies.cols(), features.cols()));
    }
    Ok(features.matmul_transposed(&params.proxies))
}

/// Convenience: logits straight from raw inputs.
pub fn predict_logits(params: &ModelParams, inputs: &Matrix) -> Result<Matrix> {
    forward_logits(params, &forward_features(params, inputs)?)
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::dim("labels", rows, labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Value of the objective without gradients.
pub fn loss(params: &ModelParams, inputs: &Matrix, labels: &[usize], spec: LossSpec<'_>) -> Result<f64> {
    let features = forward_features(params, inputs)?;
    let logits = forward_logits(params, &features)?;
    check_labels(labels, logits.rows(), logits.cols())?;
    match spec {
        LossSpec::SoftmaxCe => cross_entropy(&softmax_probs(&logits)?, labels),
        LossSpec::RestrictedCe(scales) => {
            cross_entropy(&restricted_softmax_probs(&logits, scales)?, labels)
        }
        LossSpec::Personalization { lambda, transfer } => {
            let ce = cross_entropy(&softmax_probs(&logits)?, labels)?;
            let t = match transfer {
                Transfer::None => return Ok(ce),
                Transfer::Kd { teacher, tau } => {
                    kd_loss(&logits, &predict_logits(teacher, inputs)?, tau)?
                }
                Transfer::Mmd { teacher, cfg } => {
                    mmd_loss(&features, &forward_features(teacher, inputs)?, cfg)?
                }
            };
            total_personalization_loss(ce, t, lambda)
        }
    }
}

/// Mean-over-batch loss and its exact gradient with respect to every parameter.
pub fn backward(
    params: &ModelParams,
    inputs: &Matrix,
    labels: &[usize],
    spec: LossSpec<'_>,
) -> Result<(f64, GradientSet)> {
    let trace = forward_trace(params, inputs)?;
    let logits = forward_logits(params, &trace.features)?;
    check_labels(labels, logits.rows(), logits.cols())?;

    // gradient w.r.t. logits, plus any direct gradient w.r.t. features
    let (loss, d_logits, d_features_extra) = match spec {
        LossSpec::SoftmaxCe => {
            let (l, g) = cross_entropy_with_grad(&softmax_probs(&logits)?, labels)?;
            (l, g, None)
        }
        LossSpec::RestrictedCe(scales) => {
            let scaled = scale_logits(&logits, scales)?;
            let (l, mut g) = cross_entropy_with_grad(&softmax_probs(&scaled)?, labels)?;
            for r in 0..g.rows() {
                for (v, a) in g.row_mut(r).iter_mut().zip(scales.alphas()) {
                    *v *= a;
                }
            }
            (l, g, None)
        }
        LossSpec::Personalization { lambda, transfer } => {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::invalid("lambda", lambda, "must lie in [0, 1]"));
            }
            let (ce, g_ce) = cross_entropy_with_grad(&softmax_probs(&logits)?, labels)?;
            match transfer {
                Transfer::None => (ce, g_ce, None),
                Transfer::Kd { teacher, tau } => {
                    let teacher_logits = predict_logits(teacher, inputs)?;
                    let (kd, g_kd) = kd_loss_with_grad(&logits, &teacher_logits, tau)?;
                    let mut g = g_ce;
                    for (a, b) in g.as_mut_slice().iter_mut().zip(g_kd.as_slice()) {
                        *a = (1.0 - lambda) * *a + lambda * b;
                    }
                    (total_personalization_loss(ce, kd, lambda)?, g, None)
                }
                Transfer::Mmd { teacher, cfg } => {
                    let teacher_features = forward_features(teacher, inputs)?;
                    let (mmd, mut g_h) = mmd_loss_with_grad(&trace.features, &teacher_features, cfg)?;
                    let mut g = g_ce;
                    for a in g.as_mut_slice() {
                        *a *= 1.0 - lambda;
                    }
                    for v in g_h.as_mut_slice() {
                        *v *= lambda;
                    }
                    (total_personalization_loss(ce, mmd, lambda)?, g, Some(g_h))
                }
            }
        }
    };

    let mut grads = GradientSet::zeros_like(params);
    grads.proxies = d_logits.transposed_matmul(&trace.features);
    let mut d_out = d_logits.matmul(&params.proxies);
    if let Some(extra) = d_features_extra {
        for (a, b) in d_out.as_mut_slice().iter_mut().zip(extra.as_slice()) {
            *a += b;
        }
    }

    for (i, layer) in params.layers.iter().enumerate().rev() {
        let z = &trace.pre_activations[i];
        let mut d_z = d_out;
        for (g, &zz) in d_z.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *g *= layer.activation.derivative(zz);
        }
        let d_w = d_z.transposed_matmul(&trace.layer_inputs[i]);
        let mut d_b = vec![0.0; layer.out_dim()];
        for r in d_z.iter_rows() {
            for (b, g) in d_b.iter_mut().zip(r) {
                *b += g;
            }
        }
        grads.layers[i] = (d_w, d_b);
        d_out = if i > 0 {
            d_z.matmul(&layer.weights)
        } else {
            Matrix::zeros(0, 0)
        };
    }
    Ok((loss, grads))
}
