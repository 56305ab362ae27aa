//! Client partitioners.
//!
//! Both partitioners first reserve a class-balanced global test set, then
//! distribute the remaining samples and finally split every client shard into
//! local train/test parts, stratified by class.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Share of every client's shard held out as its local test set.
pub const LOCAL_TEST_FRACTION: f64 = 0.2;

const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    /// Observed class set, ascending.
    pub observed: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl ClientShard {
    pub fn all_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.train.iter().chain(&self.test).copied()
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Classes not in the observed set, ascending.
    pub fn missing(&self, classes: usize) -> Vec<usize> {
        (0..classes).filter(|c| !self.observed.contains(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub clients: Vec<ClientShard>,
    pub global_test: Vec<usize>,
}

impl PartitionSpec {
    /// Checks the structural invariants against `data`.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let mut owner = vec![None; data.len()];
        let mut claim = |i: usize, who: String| -> Result<()> {
            if i >= owner.len() {
                return Err(Error::Partition(format!("{who} references sample {i} out of range")));
            }
            if let Some(prev) = &owner[i] {
                return Err(Error::Partition(format!("sample {i} assigned to both {prev} and {who}")));
            }
            owner[i] = Some(who);
            Ok(())
        };
        for &i in &self.global_test {
            claim(i, "the global test set".into())?;
        }
        let mut covered = vec![false; data.classes()];
        for (k, shard) in self.clients.iter().enumerate() {
            for i in shard.all_indices() {
                claim(i, format!("client {k}"))?;
                let y = data.labels()[i];
                if !shard.observed.contains(&y) {
                    return Err(Error::Partition(format!(
                        "client {k} holds label {y} outside its observed set"
                    )));
                }
            }
            for &c in &shard.observed {
                covered[c] = true;
            }
        }
        if let Some(c) = covered.iter().position(|c| !c) {
            return Err(Error::Partition(format!("class {c} is observed by no client")));
        }
        Ok(())
    }
}

/// Client count and per-client class-count range for label-skew partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSkew {
    pub clients: usize,
    pub min_classes: usize,
    pub max_classes: usize,
}

/// The global test indices of a partition.
pub fn global_test_set<'a>(_data: &Dataset, spec: &'a PartitionSpec) -> &'a [usize] {
    &spec.global_test
}

/// Reserves `per_class` samples of every class as the global test set.
///
/// Returns the sorted test indices and, per class, the remaining indices in
/// shuffled order.
pub fn carve_global_test(
    data: &Dataset,
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    let mut test = Vec::with_capacity(per_class * data.classes());
    let mut rest = Vec::with_capacity(data.classes());
    for (c, mut pool) in data.indices_by_class().into_iter().enumerate() {
        if pool.len() < per_class {
            return Err(Error::invalid(
                "global_test_per_class",
                per_class,
                format!("class {c} has only {} samples", pool.len()),
            ));
        }
        pool.shuffle(rng);
        test.extend_from_slice(&pool[..per_class]);
        rest.push(pool[per_class..].to_vec());
    }
    test.sort_unstable();
    Ok((test, rest))
}

/// Largest-remainder apportionment of `total` items by `weights`.
///
/// Ties in the fractional parts go to the lower index. All-zero weights put
/// everything on index 0.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if !(sum > 0.0 && sum.is_finite()) {
        let mut out = vec![0; weights.len()];
        out[0] = total;
        return out;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[k] += 1;
    }
    out
}

/// Splits one client's per-class sample lists into local train and test.
fn split_local(by_class: Vec<Vec<usize>>, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n: usize = by_class.iter().map(Vec::len).sum();
    let target = (n as f64 * LOCAL_TEST_FRACTION).round() as usize;
    let weights: Vec<f64> = by_class.iter().map(|v| v.len() as f64).collect();
    let quotas = if n == 0 { vec![0; by_class.len()] } else { apportion(target, &weights) };
    let mut train = Vec::with_capacity(n - target.min(n));
    let mut test = Vec::with_capacity(target);
    for (mut pool, q) in by_class.into_iter().zip(quotas) {
        pool.shuffle(rng);
        let q = q.min(pool.len());
        test.extend_from_slice(&pool[..q]);
        train.extend_from_slice(&pool[q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn build_shards(
    observed: Vec<Vec<usize>>,
    assigned: Vec<Vec<Vec<usize>>>,
    rng: &mut ChaCha8Rng,
) -> Vec<ClientShard> {
    observed
        .into_iter()
        .zip(assigned)
        .map(|(obs, by_class)| {
            let (train, test) = split_local(by_class, rng);
            ClientShard {
                observed: obs,
                train,
                test,
            }
        })
        .collect()
}

/// Each client draws a class count uniformly from the range and that many
/// distinct classes; each class's samples are dealt round-robin to its owners.
pub fn partition_label_skew(
    data: &Dataset,
    skew: &LabelSkew,
    global_test_per_class: usize,
    seed: u64,
) -> Result<PartitionSpec> {
    let c = data.classes();
    let LabelSkew {
        clients,
        min_classes,
        max_classes,
    } = *skew;
    if clients == 0 {
        return Err(Error::invalid("clients", clients, "must be >= 1"));
    }
    if !(2 <= min_classes && min_classes <= max_classes && max_classes <= c) {
        return Err(Error::invalid(
            "class_range",
            format!("[{min_classes}, {max_classes}]"),
            format!("need 2 <= min <= max <= {c}"),
        ));
    }
    let mut rng = stream(seed, Purpose::GlobalTest, 0);
    let (global_test, pools) = carve_global_test(data, global_test_per_class, &mut rng)?;

    let mut rng = stream(seed, Purpose::Partition, 0);
    let all: Vec<usize> = (0..c).collect();
    let mut observed = None;
    for _ in 0..MAX_REDRAWS {
        let draw: Vec<Vec<usize>> = (0..clients)
            .map(|_| {
                let count = rng.random_range(min_classes..=max_classes);
                let mut set: Vec<usize> = all.choose_multiple(&mut rng, count).copied().collect();
                set.sort_unstable();
                set
            })
            .collect();
        let mut covered = vec![false; c];
        for &cls in draw.iter().flatten() {
            covered[cls] = true;
        }
        if covered.iter().all(|&x| x) {
            observed = Some(draw);
            break;
        }
    }
    let observed = observed.ok_or_else(|| {
        Error::Partition(format!(
            "no class assignment covering all {c} classes within {MAX_REDRAWS} redraws"
        ))
    })?;

    let mut assigned = vec![vec![Vec::new(); c]; clients];
    for (cls, pool) in pools.iter().enumerate() {
        let owners: Vec<usize> = (0..clients).filter(|&k| observed[k].contains(&cls)).collect();
        for (j, &i) in pool.iter().enumerate() {
            assigned[owners[j % owners.len()]][cls].push(i);
        }
    }
    let clients = build_shards(observed, assigned, &mut rng);
    Ok(PartitionSpec {
        clients,
        global_test,
    })
}

/// Apportions each class across clients by a symmetric Dirichlet draw.
pub fn partition_dirichlet(
    data: &Dataset,
    clients: usize,
    concentration: f64,
    global_test_per_class: usize,
    seed: u64,
) -> Result<PartitionSpec> {
    if clients == 0 {
        return Err(Error::invalid("clients", clients, "must be >= 1"));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(Error::invalid("dirichlet_alpha", concentration, "must be > 0"));
    }
    let c = data.classes();
    let mut rng = stream(seed, Purpose::GlobalTest, 0);
    let (global_test, pools) = carve_global_test(data, global_test_per_class, &mut rng)?;

    let mut rng = stream(seed, Purpose::Partition, 0);
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::invalid("dirichlet_alpha", concentration, e.to_string()))?;
    let mut assigned = vec![vec![Vec::new(); c]; clients];
    for (cls, pool) in pools.iter().enumerate() {
        let weights: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
        let counts = apportion(pool.len(), &weights);
        let mut start = 0;
        for (k, n) in counts.into_iter().enumerate() {
            assigned[k][cls].extend_from_slice(&pool[start..start + n]);
            start += n;
        }
    }
    let observed: Vec<Vec<usize>> = assigned
        .iter()
        .map(|by_class| (0..c).filter(|&cls| !by_class[cls].is_empty()).collect())
        .collect();
    let clients = build_shards(observed, assigned, &mut rng);
    Ok(PartitionSpec {
        clients,
        global_test,
    })
}
