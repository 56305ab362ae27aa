//! Naive reference implementations shared by the integration tests. Each one
//! works row by row with plain loops and does not call into the crate's loss
//! or forward code.

#![allow(dead_code)]

use mapfl::data::{ClientShard, Dataset, PartitionSpec};
use mapfl::nn::{Activation, Architecture, Matrix, ModelParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    let data = (0..r * c).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(r, c, data).unwrap()
}

pub fn random_net(rng: &mut ChaCha8Rng, arch: &Architecture) -> ModelParams {
    let mut p = ModelParams::init(arch, rng).unwrap();
    // move away from the tiny init so every path carries signal
    for (_, block) in p.blocks_mut() {
        for v in block.iter_mut() {
            *v *= 2.0;
        }
    }
    p
}

pub fn naive_features(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for layer in &params.layers {
        let mut next = Vec::with_capacity(layer.bias.len());
        for o in 0..layer.bias.len() {
            let mut z = layer.bias[o];
            for (i, v) in cur.iter().enumerate() {
                z += layer.weights.get(o, i) * v;
            }
            next.push(match layer.activation {
                Activation::Relu => z.max(0.0),
                Activation::Identity => z,
            });
        }
        cur = next;
    }
    cur
}

pub fn naive_logits(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    let h = naive_features(params, x);
    (0..params.proxies.rows())
        .map(|c| (0..h.len()).map(|j| params.proxies.get(c, j) * h[j]).sum())
        .collect()
}

pub fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Mean cross-entropy of softmax over `α_c z_c`.
pub fn naive_ce(logits: &[Vec<f64>], labels: &[usize], alphas: &[f64]) -> f64 {
    let mut total = 0.0;
    for (z, &y) in logits.iter().zip(labels) {
        let scaled: Vec<f64> = z.iter().zip(alphas).map(|(v, a)| v * a).collect();
        total -= naive_softmax(&scaled)[y].ln();
    }
    total / labels.len() as f64
}

/// `τ² · mean KL(softmax(t/τ) ‖ softmax(s/τ))`.
pub fn naive_kd(student: &[Vec<f64>], teacher: &[Vec<f64>], tau: f64) -> f64 {
    let mut total = 0.0;
    for (s, t) in student.iter().zip(teacher) {
        let p = naive_softmax(&s.iter().map(|v| v / tau).collect::<Vec<_>>());
        let q = naive_softmax(&t.iter().map(|v| v / tau).collect::<Vec<_>>());
        for (qi, pi) in q.iter().zip(&p) {
            total += qi * (qi / pi).ln();
        }
    }
    tau * tau * total / student.len() as f64
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Biased MMD² with the multi-bandwidth Gaussian kernel. `bandwidth = None`
/// uses the median squared distance over distinct pairs of the pooled batch.
pub fn naive_mmd(a: &[Vec<f64>], b: &[Vec<f64>], ladder: &[f64], bandwidth: Option<f64>) -> f64 {
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let base = bandwidth.unwrap_or_else(|| {
        let mut d = Vec::new();
        for i in 0..pooled.len() {
            for j in i + 1..pooled.len() {
                d.push(sq(pooled[i], pooled[j]));
            }
        }
        d.sort_by(f64::total_cmp);
        let n = d.len();
        let m = if n % 2 == 1 { d[n / 2] } else { (d[n / 2 - 1] + d[n / 2]) / 2.0 };
        if m > 0.0 {
            m
        } else {
            1.0
        }
    });
    let k = |x: &[f64], y: &[f64]| {
        let d = sq(x, y);
        ladder.iter().map(|m| (-d / (m * base)).exp()).sum::<f64>() / ladder.len() as f64
    };
    let mean = |u: &[Vec<f64>], v: &[Vec<f64>]| {
        let mut s = 0.0;
        for x in u {
            for y in v {
                s += k(x, y);
            }
        }
        s / (u.len() * v.len()) as f64
    };
    mean(a, a) + mean(b, b) - 2.0 * mean(a, b)
}

/// Copy of `params` with flat entry `j` shifted by `delta`.
pub fn perturbed(params: &ModelParams, j: usize, delta: f64) -> ModelParams {
    let mut p = params.clone();
    let mut offset = 0;
    for (_, block) in p.blocks_mut() {
        if j < offset + block.len() {
            block[j - offset] += delta;
            break;
        }
        offset += block.len();
    }
    p
}

/// Central finite-difference gradient of `f` over every parameter.
pub fn numeric_gradient(params: &ModelParams, h: f64, f: impl Fn(&ModelParams) -> f64) -> Vec<f64> {
    (0..params.num_params())
        .map(|j| (f(&perturbed(params, j, h)) - f(&perturbed(params, j, -h))) / (2.0 * h))
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Every class listed in `groups[k]` goes to client `k`; each class pool is
/// split 80/20 into local train and test after `global_per_class` samples per
/// class are held out for the server.
pub fn disjoint_partition(data: &Dataset, groups: &[Vec<usize>], global_per_class: usize) -> PartitionSpec {
    let mut by_class = vec![Vec::new(); data.classes()];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut global_test = Vec::new();
    let mut clients = Vec::new();
    for pool in &by_class {
        global_test.extend_from_slice(&pool[..global_per_class]);
    }
    for observed in groups {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for &c in observed {
            for (n, &i) in by_class[c][global_per_class..].iter().enumerate() {
                if n % 5 == 0 {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
        }
        clients.push(ClientShard {
            observed: observed.clone(),
            train,
            test,
        });
    }
    global_test.sort_unstable();
    PartitionSpec { clients, global_test }
}
