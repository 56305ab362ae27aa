use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::client::{client_procedure, ClientContext, ClientOutcome, ClientState};
use super::{aggregate_weighted, sample_clients, FederationConfig};
use crate::data::{Dataset, PartitionSpec};
use crate::metrics::{evaluate_accuracy, proxy_diagnostics, ClientRecord, RoundMetrics};
use crate::nn::{Architecture, ModelParams};
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Global model, round counter and the client-sampling stream.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub params: ModelParams,
    /// Completed rounds.
    pub round: usize,
    pub cfg: FederationConfig,
    sampler: ChaCha8Rng,
}

impl ServerState {
    pub fn new(params: ModelParams, cfg: FederationConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if !params.is_finite() {
            return Err(Error::NonFinite {
                block: "initial global model".into(),
            });
        }
        Ok(Self {
            params,
            round: 0,
            cfg,
            sampler: stream(seed, Purpose::Sampling, 0),
        })
    }

    /// Runs one round: sample, local procedures, aggregation, evaluation.
    pub fn step(&mut self, clients: &mut [ClientState], data: &Dataset, partition: &PartitionSpec) -> Result<RoundMetrics> {
        let round = self.round + 1;
        let selected = sample_clients(clients.len(), self.cfg.sample_ratio, &mut self.sampler)?;
        let ctx = ClientContext { data, cfg: &self.cfg };
        let global = &self.params;
        let diagnostics = self.cfg.diagnostics;

        // parallel over clients; collect keeps ascending id order
        let results: Vec<Result<(ClientOutcome, ClientRecord)>> = clients
            .par_iter_mut()
            .filter(|c| selected.binary_search(&c.id).is_ok())
            .map(|client| {
                let id = client.id;
                run_client(client, global, ctx, diagnostics).map_err(|e| Error::Client {
                    round,
                    client: id,
                    source: Box::new(e),
                })
            })
            .collect();

        let mut uploads = Vec::with_capacity(results.len());
        let mut weights = Vec::with_capacity(results.len());
        let mut records = Vec::with_capacity(results.len());
        for (res, &id) in results.into_iter().zip(&selected) {
            let (outcome, record) = res?;
            weights.push(if self.cfg.weighted_aggregation {
                clients[id].shard.train.len() as f64
            } else {
                1.0
            });
            uploads.push(outcome.upload);
            records.push(record);
        }
        let next = aggregate_weighted(&uploads, &weights)?;
        if !next.is_finite() {
            return Err(Error::NonFinite {
                block: format!("global model after round {round}"),
            });
        }
        self.params = next;
        self.round = round;
        let agg_acc = evaluate_accuracy(&self.params, data, &partition.global_test)?;
        RoundMetrics::new(round, agg_acc, records)
    }
}

fn run_client(
    client: &mut ClientState,
    global: &ModelParams,
    ctx: ClientContext<'_>,
    diagnostics: bool,
) -> Result<(ClientOutcome, ClientRecord)> {
    let outcome = client_procedure(client, global, ctx)?;
    let test = &client.shard.test;
    let acc_before = evaluate_accuracy(global, ctx.data, test)?;
    let acc_after = evaluate_accuracy(&outcome.personalized, ctx.data, test)?;
    let acc_hpm = match &client.hpm {
        Some(h) => Some(evaluate_accuracy(h, ctx.data, test)?),
        None => None,
    };
    let diagnostics = if diagnostics {
        Some(proxy_diagnostics(&outcome.upload, &outcome.proxy_grads, &client.shard.observed)?)
    } else {
        None
    };
    let record = ClientRecord {
        client: client.id,
        acc_before,
        acc_after,
        acc_hpm,
        diagnostics,
    };
    Ok((outcome, record))
}

/// Final state of a federation.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub global: ModelParams,
    /// Private model per client, `None` where none was ever built.
    pub hpms: Vec<Option<ModelParams>>,
    pub clients: Vec<ClientState>,
    pub rounds: Vec<RoundMetrics>,
}

/// Initializes the global model and one client per shard.
pub fn setup(
    arch: &Architecture,
    cfg: FederationConfig,
    data: &Dataset,
    partition: &PartitionSpec,
    seed: u64,
) -> Result<(ServerState, Vec<ClientState>)> {
    if arch.input_dim != data.dim() {
        return Err(Error::dim("model input", data.dim(), arch.input_dim));
    }
    if arch.classes != data.classes() {
        return Err(Error::dim("model classes", data.classes(), arch.classes));
    }
    partition.validate(data)?;
    if partition.global_test.is_empty() {
        return Err(Error::Empty("global test set".into()));
    }
    if partition.clients.is_empty() {
        return Err(Error::Empty("client list".into()));
    }
    for (k, shard) in partition.clients.iter().enumerate() {
        if shard.train.is_empty() || shard.test.is_empty() {
            return Err(Error::Partition(format!(
                "client {k} needs nonempty train and test shards (got {} / {})",
                shard.train.len(),
                shard.test.len()
            )));
        }
    }
    let params = ModelParams::init(arch, &mut stream(seed, Purpose::Init, 0))?;
    let server = ServerState::new(params, cfg, seed)?;
    let clients = partition
        .clients
        .iter()
        .enumerate()
        .map(|(k, shard)| ClientState::new(k, shard.clone(), seed))
        .collect();
    Ok((server, clients))
}

/// Runs the remaining rounds up to the configured `T`.
pub fn run_federation(
    mut server: ServerState,
    mut clients: Vec<ClientState>,
    data: &Dataset,
    partition: &PartitionSpec,
) -> Result<RunLog> {
    let mut rounds = Vec::with_capacity(server.cfg.rounds);
    while server.round < server.cfg.rounds {
        rounds.push(server.step(&mut clients, data, partition)?);
    }
    Ok(RunLog {
        global: server.params,
        hpms: clients.iter().map(|c| c.hpm.clone()).collect(),
        clients,
        rounds,
    })
}
