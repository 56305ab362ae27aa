//! Evaluation and proxy diagnostics.
//!
//! Aggregation accuracy is measured on the server's held-out set after each
//! aggregation; personalization accuracy is the mean local-test accuracy of
//! the personalized models of the round's selected clients.

mod report;

pub use report::{
    write_clients_csv, write_distances_csv, write_metrics_csv, write_proxies_csv, CLIENTS_HEADER,
    DISTANCES_HEADER, METRICS_HEADER, PROXIES_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::nn::matrix::l2_norm;
use crate::nn::{predict_logits, Matrix, ModelParams};
use crate::{Error, Result};

/// Norms and mean pairwise distances of the classifier proxies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyDiagnostics {
    /// `‖w_c‖₂` per class.
    pub norms: Vec<f64>,
    /// Norm of the proxy gradient accumulated over one epoch, per class.
    pub grad_norms: Vec<f64>,
    /// Which classes count as observed.
    pub observed: Vec<bool>,
    pub oo: Option<f64>,
    pub om: Option<f64>,
    pub mm: Option<f64>,
}

/// One selected client's view of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub client: usize,
    /// Local test accuracy of the downloaded global model.
    pub acc_before: f64,
    /// Local test accuracy of the personalized model.
    pub acc_after: f64,
    /// Local test accuracy of the updated private model, when one exists.
    pub acc_hpm: Option<f64>,
    pub diagnostics: Option<ProxyDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    /// Accuracy of the newly aggregated global model on the global test set.
    pub agg_acc: f64,
    /// Mean of `acc_after` over the selected clients.
    pub mean_per_acc: f64,
    /// One record per selected client, ascending by id.
    pub clients: Vec<ClientRecord>,
}

impl RoundMetrics {
    pub fn new(round: usize, agg_acc: f64, clients: Vec<ClientRecord>) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::Empty(format!("round {round} has no client records")));
        }
        let mean_per_acc = clients.iter().map(|c| c.acc_after).sum::<f64>() / clients.len() as f64;
        Ok(Self {
            round,
            agg_acc,
            mean_per_acc,
            clients,
        })
    }

    pub fn n_selected(&self) -> usize {
        self.clients.len()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `indices` whose argmax logit equals the label.
pub fn evaluate_accuracy(params: &ModelParams, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Empty("evaluation slice".into()));
    }
    let (x, y) = data.gather(indices);
    let logits = predict_logits(params, &x)?;
    let correct = logits
        .iter_rows()
        .zip(&y)
        .filter(|(row, &label)| argmax(row) == label)
        .count();
    Ok(correct as f64 / indices.len() as f64)
}

/// Local test accuracy of the downloaded and of the personalized model.
pub fn degradation_track(
    data: &Dataset,
    local_test: &[usize],
    downloaded: &ModelParams,
    personalized: &ModelParams,
) -> Result<(f64, f64)> {
    if local_test.is_empty() {
        return Err(Error::Empty("local test set".into()));
    }
    Ok((
        evaluate_accuracy(downloaded, data, local_test)?,
        evaluate_accuracy(personalized, data, local_test)?,
    ))
}

fn mean_distance(proxies: &Matrix, a: &[usize], b: &[usize]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for &i in a {
        for &j in b {
            let d: f64 = proxies
                .row(i)
                .iter()
                .zip(proxies.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            sum += d.sqrt();
        }
    }
    Some(sum / (a.len() * b.len()) as f64)
}

/// Proxy norms, accumulated-gradient norms and the O-O, O-M and M-M mean
/// distances. Same-set means divide by `|O|²` or `|M|²`, counting the zero
/// `i = j` terms.
pub fn proxy_diagnostics(params: &ModelParams, grad_accum: &Matrix, observed: &[usize]) -> Result<ProxyDiagnostics> {
    let proxies = &params.proxies;
    let classes = proxies.rows();
    if !grad_accum.same_shape(proxies) {
        return Err(Error::dim("proxy gradient rows", classes, grad_accum.rows()));
    }
    let mut is_observed = vec![false; classes];
    for &c in observed {
        if c >= classes {
            return Err(Error::LabelOutOfRange { label: c, classes });
        }
        is_observed[c] = true;
    }
    let o: Vec<usize> = (0..classes).filter(|&c| is_observed[c]).collect();
    let m: Vec<usize> = (0..classes).filter(|&c| !is_observed[c]).collect();
    Ok(ProxyDiagnostics {
        norms: proxies.iter_rows().map(l2_norm).collect(),
        grad_norms: grad_accum.iter_rows().map(l2_norm).collect(),
        observed: is_observed,
        oo: mean_distance(proxies, &o, &o),
        om: mean_distance(proxies, &o, &m),
        mm: mean_distance(proxies, &m, &m),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{Architecture, DenseLayer, Activation};

    fn linear(proxies: Matrix) -> ModelParams {
        let d = proxies.cols();
        let mut w = Matrix::zeros(d, d);
        for i in 0..d {
            w.set(i, i, 1.0);
        }
        ModelParams {
            layers: vec![DenseLayer {
                weights: w,
                bias: vec![0.0; d],
                activation: Activation::Identity,
            }],
            proxies,
        }
    }

    fn dataset(rows: &[[f64; 2]], labels: &[usize], classes: usize) -> Dataset {
        Dataset::new(Matrix::from_rows(rows).unwrap(), labels.to_vec(), classes).unwrap()
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn zero_proxies_predict_class_zero() {
        let d = dataset(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.0]], &[0, 1, 2, 3], 4);
        let p = linear(Matrix::zeros(4, 2));
        assert_eq!(evaluate_accuracy(&p, &d, &[0, 1, 2, 3]).unwrap(), 0.25);
        assert_eq!(evaluate_accuracy(&p, &d, &[0]).unwrap(), 1.0);
        assert!(evaluate_accuracy(&p, &d, &[]).is_err());
    }

    #[test]
    fn accuracy_matches_naive_loop() {
        let arch = Architecture {
            input_dim: 2,
            hidden: vec![5],
            feature_relu: true,
            classes: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<[f64; 2]> = (0..40).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let d = dataset(&rows, &labels, 3);
        let p = ModelParams::init(&arch, &mut rng).unwrap();
        let idx: Vec<usize> = (0..40).collect();
        let acc = evaluate_accuracy(&p, &d, &idx).unwrap();

        let mut correct = 0;
        for (r, &l) in rows.iter().zip(&labels) {
            let mut h = [0.0; 5];
            let layer = &p.layers[0];
            for (o, hv) in h.iter_mut().enumerate() {
                let z = layer.bias[o] + layer.weights.get(o, 0) * r[0] + layer.weights.get(o, 1) * r[1];
                *hv = z.max(0.0);
            }
            let mut best = (0, f64::NEG_INFINITY);
            for c in 0..3 {
                let s: f64 = (0..5).map(|j| p.proxies.get(c, j) * h[j]).sum();
                if s > best.1 {
                    best = (c, s);
                }
            }
            if best.0 == l {
                correct += 1;
            }
        }
        assert_eq!(acc, correct as f64 / 40.0);
    }

    #[test]
    fn degradation_equal_models_equal_accuracies() {
        let d = dataset(&[[1.0, 0.0], [0.0, 1.0]], &[0, 1], 2);
        let p = linear(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
        let (a, b) = degradation_track(&d, &[0, 1], &p, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 1.0);
        assert!(degradation_track(&d, &[], &p, &p).is_err());
    }

    #[test]
    fn single_pair_distances() {
        let p = linear(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
        let diag = proxy_diagnostics(&p, &Matrix::zeros(2, 2), &[0]).unwrap();
        assert_eq!(diag.oo, Some(0.0));
        assert_eq!(diag.mm, Some(0.0));
        assert!((diag.om.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(diag.norms, vec![1.0, 1.0]);
    }

    #[test]
    fn identical_proxies_zero_distances() {
        let p = linear(Matrix::from_rows(&[[0.3, 0.4]; 4]).unwrap());
        let diag = proxy_diagnostics(&p, &Matrix::zeros(4, 2), &[0, 2]).unwrap();
        assert_eq!((diag.oo, diag.om, diag.mm), (Some(0.0), Some(0.0), Some(0.0)));
        assert!(diag.norms.iter().all(|n| (n - 0.5).abs() < 1e-15));
    }

    #[test]
    fn empty_missing_set_omits_fields() {
        let p = linear(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
        let diag = proxy_diagnostics(&p, &Matrix::zeros(2, 2), &[0, 1]).unwrap();
        assert!(diag.oo.is_some());
        assert_eq!(diag.om, None);
        assert_eq!(diag.mm, None);
        assert!(proxy_diagnostics(&p, &Matrix::zeros(2, 2), &[2]).is_err());
    }

    #[test]
    fn distances_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let p = ModelParams {
            layers: vec![],
            proxies: Matrix::from_rows(&rows).unwrap(),
        };
        let observed = [1, 4, 5];
        let missing = [0, 2, 3];
        let diag = proxy_diagnostics(&p, &Matrix::zeros(6, 3), &observed).unwrap();
        let dist = |i: usize, j: usize| -> f64 {
            rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let mean = |a: &[usize], b: &[usize]| {
            let mut s = 0.0;
            for &i in a {
                for &j in b {
                    s += dist(i, j);
                }
            }
            s / (a.len() * b.len()) as f64
        };
        assert!((diag.oo.unwrap() - mean(&observed, &observed)).abs() < 1e-14);
        assert!((diag.om.unwrap() - mean(&observed, &missing)).abs() < 1e-14);
        assert!((diag.mm.unwrap() - mean(&missing, &missing)).abs() < 1e-14);
        assert!(diag.grad_norms.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn round_mean_over_selected() {
        let rec = |client, acc_after| ClientRecord {
            client,
            acc_before: 0.0,
            acc_after,
            acc_hpm: None,
            diagnostics: None,
        };
        let r = RoundMetrics::new(1, 0.5, vec![rec(0, 0.2), rec(3, 0.6)]).unwrap();
        assert!((r.mean_per_acc - 0.4).abs() < 1e-15);
        assert_eq!(r.n_selected(), 2);
        assert!(RoundMetrics::new(1, 0.5, vec![]).is_err());
    }
}
