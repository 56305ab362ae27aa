use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative at the pre-activation `z`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Dense affine layer `activation(W x + b)`, `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Shape description used to build fresh parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Widths of the extractor layers. Empty means the raw input is the feature.
    pub hidden: Vec<usize>,
    /// Hidden layers before the last always use ReLU; this controls the last one.
    pub feature_relu: bool,
    pub classes: usize,
}

impl Architecture {
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim", 0, "must be > 0"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("classes", self.classes, "must be >= 2"));
        }
        if let Some(w) = self.hidden.iter().find(|&&w| w == 0) {
            return Err(Error::invalid("hidden", w, "layer widths must be > 0"));
        }
        Ok(())
    }
}

/// Identifies one contiguous parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockId {
    Weights(usize),
    Bias(usize),
    Proxies,
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockId::Weights(i) => write!(f, "layer {i} weights"),
            BlockId::Bias(i) => write!(f, "layer {i} bias"),
            BlockId::Proxies => write!(f, "classifier proxies"),
        }
    }
}

/// Extractor layers plus the bias-free classifier whose rows are the class proxies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<DenseLayer>,
    /// `C × d`, one row per class.
    pub proxies: Matrix,
}

/// Partial derivatives laid out exactly like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub proxies: Matrix,
}

impl ModelParams {
    /// Uniform(±√(1/fan_in)) initialisation for every weight, bias and proxy.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut layers = Vec::with_capacity(arch.hidden.len());
        let mut fan_in = arch.input_dim;
        for (i, &width) in arch.hidden.iter().enumerate() {
            let last = i + 1 == arch.hidden.len();
            let activation = if last && !arch.feature_relu {
                Activation::Identity
            } else {
                Activation::Relu
            };
            let dist = uniform_for(fan_in);
            let weights = Matrix::from_vec(
                width,
                fan_in,
                (0..width * fan_in).map(|_| dist.sample(rng)).collect(),
            )?;
            let bias = (0..width).map(|_| dist.sample(rng)).collect();
            layers.push(DenseLayer {
                weights,
                bias,
                activation,
            });
            fan_in = width;
        }
        let dist = uniform_for(fan_in);
        let proxies = Matrix::from_vec(
            arch.classes,
            fan_in,
            (0..arch.classes * fan_in).map(|_| dist.sample(rng)).collect(),
        )?;
        Ok(Self { layers, proxies })
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map_or(self.proxies.cols(), DenseLayer::in_dim)
    }

    pub fn feature_dim(&self) -> usize {
        self.proxies.cols()
    }

    pub fn classes(&self) -> usize {
        self.proxies.rows()
    }

    pub fn blocks(&self) -> Vec<(BlockId, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((BlockId::Weights(i), l.weights.as_slice()));
            out.push((BlockId::Bias(i), l.bias.as_slice()));
        }
        out.push((BlockId::Proxies, self.proxies.as_slice()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(BlockId, &mut [f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((BlockId::Weights(i), l.weights.as_mut_slice()));
            out.push((BlockId::Bias(i), l.bias.as_mut_slice()));
        }
        out.push((BlockId::Proxies, self.proxies.as_mut_slice()));
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Checks that `other` has identical block shapes.
    pub fn check_congruent(&self, other: &ModelParams) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::dim("layer count", self.layers.len(), other.layers.len()));
        }
        for (i, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if !a.weights.same_shape(&b.weights) {
                return Err(Error::dim(
                    format!("layer {i} weights"),
                    a.weights.as_slice().len(),
                    b.weights.as_slice().len(),
                ));
            }
            if a.bias.len() != b.bias.len() {
                return Err(Error::dim(format!("layer {i} bias"), a.bias.len(), b.bias.len()));
            }
        }
        if !self.proxies.same_shape(&other.proxies) {
            return Err(Error::dim(
                "classifier proxies",
                self.proxies.as_slice().len(),
                other.proxies.as_slice().len(),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    /// All parameters as one flat vector, block order as in [`Self::blocks`].
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.to_vec()).collect()
    }
}

fn uniform_for(fan_in: usize) -> Uniform<f64> {
    let limit = (1.0 / fan_in as f64).sqrt();
    Uniform::new_inclusive(-limit, limit).expect("finite positive bound")
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| {
                    (
                        Matrix::zeros(l.weights.rows(), l.weights.cols()),
                        vec![0.0; l.bias.len()],
                    )
                })
                .collect(),
            proxies: Matrix::zeros(params.proxies.rows(), params.proxies.cols()),
        }
    }

    pub fn blocks(&self) -> Vec<(BlockId, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for (i, (w, b)) in self.layers.iter().enumerate() {
            out.push((BlockId::Weights(i), w.as_slice()));
            out.push((BlockId::Bias(i), b.as_slice()));
        }
        out.push((BlockId::Proxies, self.proxies.as_slice()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(BlockId, &mut [f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for (i, (w, b)) in self.layers.iter_mut().enumerate() {
            out.push((BlockId::Weights(i), w.as_mut_slice()));
            out.push((BlockId::Bias(i), b.as_mut_slice()));
        }
        out.push((BlockId::Proxies, self.proxies.as_mut_slice()));
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.to_vec()).collect()
    }

    pub fn check_congruent(&self, params: &ModelParams) -> Result<()> {
        let ours = self.blocks();
        let theirs = params.blocks();
        if ours.len() != theirs.len() {
            return Err(Error::dim("parameter block count", theirs.len(), ours.len()));
        }
        for ((id, g), (_, p)) in ours.iter().zip(&theirs) {
            if g.len() != p.len() {
                return Err(Error::dim(id.to_string(), p.len(), g.len()));
            }
        }
        Ok(())
    }

    /// `self += other`, element-wise.
    pub fn accumulate(&mut self, other: &GradientSet) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Element-wise `(1 − mu)·a + mu·b`.
///
/// `mu = 0` returns `a` and `mu = 1` returns `b` exactly.
pub fn interpolate(a: &ModelParams, b: &ModelParams, mu: f64) -> Result<ModelParams> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::invalid("mu", mu, "must lie in [0, 1]"));
    }
    a.check_congruent(b)?;
    if mu == 0.0 {
        return Ok(a.clone());
    }
    if mu == 1.0 {
        return Ok(b.clone());
    }
    let mut out = a.clone();
    for ((_, o), (_, bb)) in out.blocks_mut().into_iter().zip(b.blocks()) {
        for (x, &y) in o.iter_mut().zip(bb) {
            // clamp absorbs the last-ulp rounding so the result never leaves [min, max]
            let (lo, hi) = if *x <= y { (*x, y) } else { (y, *x) };
            *x = ((1.0 - mu) * *x + mu * y).clamp(lo, hi);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn arch() -> Architecture {
        Architecture {
            input_dim: 3,
            hidden: vec![4, 2],
            feature_relu: true,
            classes: 3,
        }
    }

    fn scalar(v: f64) -> ModelParams {
        ModelParams {
            layers: vec![],
            proxies: Matrix::from_vec(1, 1, vec![v]).unwrap(),
        }
    }

    #[test]
    fn init_respects_fan_in_bound_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::init(&arch(), &mut rng).unwrap();
        assert_eq!(p.layers.len(), 2);
        assert_eq!(p.input_dim(), 3);
        assert_eq!(p.feature_dim(), 2);
        assert_eq!(p.classes(), 3);
        let bound = (1.0f64 / 3.0).sqrt();
        assert!(p.layers[0].weights.as_slice().iter().all(|w| w.abs() <= bound));
        let bound = (1.0f64 / 2.0).sqrt();
        assert!(p.proxies.as_slice().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ModelParams::init(&arch(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = ModelParams::init(&arch(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interpolate_endpoints_and_midpoint() {
        let a = scalar(2.0);
        let b = scalar(4.0);
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
        assert_eq!(interpolate(&a, &b, 0.5).unwrap().proxies.get(0, 0), 3.0);
    }

    #[test]
    fn interpolate_rejects_out_of_range_mu() {
        let a = scalar(1.0);
        assert!(interpolate(&a, &a, 1.5).is_err());
        assert!(interpolate(&a, &a, -0.1).is_err());
    }

    #[test]
    fn interpolate_rejects_incongruent_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = ModelParams::init(&arch(), &mut rng).unwrap();
        let mut other = arch();
        other.hidden = vec![5, 2];
        let b = ModelParams::init(&other, &mut rng).unwrap();
        assert!(interpolate(&a, &b, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn interpolate_stays_in_entrywise_envelope(seed in any::<u64>(), mu in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = ModelParams::init(&arch(), &mut rng).unwrap();
            let b = ModelParams::init(&arch(), &mut rng).unwrap();
            let m = interpolate(&a, &b, mu).unwrap();
            for ((x, y), z) in a.flatten().iter().zip(b.flatten()).zip(m.flatten()) {
                prop_assert!(z >= x.min(y) && z <= x.max(y));
            }
        }
    }
}
