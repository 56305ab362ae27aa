//! Datasets and client partitioning.

mod blobs;
mod csv;
mod partition;

pub use self::csv::load_csv;
pub use blobs::{generate_blobs, BlobConfig};
pub use partition::{
    apportion, carve_global_test, global_test_set, partition_dirichlet, partition_label_skew,
    ClientShard, LabelSkew, PartitionSpec, LOCAL_TEST_FRACTION,
};

use crate::nn::Matrix;
use crate::{Error, Result};

/// Labelled samples; every class in `[0, classes)` has at least one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != inputs.rows() {
            return Err(Error::dim("dataset labels", inputs.rows(), labels.len()));
        }
        if labels.is_empty() {
            return Err(Error::Empty("dataset".into()));
        }
        let mut seen = vec![false; classes];
        for &l in &labels {
            if l >= classes {
                return Err(Error::LabelOutOfRange { label: l, classes });
            }
            seen[l] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::invalid("classes", classes, format!("class {c} has no samples")));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Inputs and labels for the given sample indices, in that order.
    pub fn gather(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Per-class sample counts over `indices`.
    pub fn class_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// Sample indices grouped by class, ascending within each class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_class_rejected() {
        let x = Matrix::zeros(2, 1);
        assert!(Dataset::new(x.clone(), vec![0, 0], 2).is_err());
        assert!(Dataset::new(x.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(x, vec![0, 1], 2).is_ok());
    }

    #[test]
    fn gather_and_counts() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let d = Dataset::new(x, vec![1, 0, 1], 2).unwrap();
        let (xs, ys) = d.gather(&[2, 1]);
        assert_eq!(xs.as_slice(), &[2.0, 1.0]);
        assert_eq!(ys, vec![1, 0]);
        assert_eq!(d.class_counts(&[0, 1, 2]), vec![1, 2]);
        assert_eq!(d.indices_by_class(), vec![vec![1], vec![0, 2]]);
    }
}
