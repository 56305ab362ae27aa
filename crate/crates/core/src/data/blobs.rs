use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::nn::Matrix;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Isotropic Gaussian blobs with class means on a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub classes: usize,
    pub dim: usize,
    /// Distance of every class mean from the origin.
    pub radius: f64,
    /// Per-coordinate standard deviation around the mean.
    pub noise: f64,
    pub samples_per_class: usize,
}

impl BlobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("classes", self.classes, "must be >= 2"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", self.dim, "must be >= 1"));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid("radius", self.radius, "must be >= 0"));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise", self.noise, "must be > 0"));
        }
        if self.samples_per_class < 2 {
            return Err(Error::invalid(
                "samples_per_class",
                self.samples_per_class,
                "must be >= 2",
            ));
        }
        Ok(())
    }
}

/// Samples `samples_per_class` points per class, class-major order.
pub fn generate_blobs(cfg: &BlobConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = stream(seed, Purpose::Data, 0);
    let mut means = Vec::with_capacity(cfg.classes);
    for _ in 0..cfg.classes {
        let mean = loop {
            let v: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm * cfg.radius).collect::<Vec<_>>();
            }
        };
        means.push(mean);
    }
    let n = cfg.classes * cfg.samples_per_class;
    let mut data = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..cfg.samples_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(m + cfg.noise * z);
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(n, cfg.dim, data)?, labels, cfg.classes)
}
