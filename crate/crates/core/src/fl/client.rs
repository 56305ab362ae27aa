use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mu_schedule, FederationConfig, StrategyKind};
use crate::data::{ClientShard, Dataset};
use crate::losses::{build_scaling, LossSpec, ScalingFactors, Transfer, TransferKind};
use crate::nn::{backward, interpolate, sgd_step, Matrix, ModelParams, OptimizerState};
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Everything a client keeps between selections.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub shard: ClientShard,
    /// Inherited private model: moving average of past personalized models.
    pub hpm: Option<ModelParams>,
    /// Number of completed selections `z`.
    pub selections: usize,
    /// Momentum used in the latest private-model update.
    pub mu: f64,
    rng: ChaCha8Rng,
}

impl ClientState {
    pub fn new(id: usize, shard: ClientShard, seed: u64) -> Self {
        Self {
            id,
            shard,
            hpm: None,
            selections: 0,
            mu: 0.0,
            rng: stream(seed, Purpose::Client, id as u64),
        }
    }
}

/// Read-only inputs shared by every client procedure in a run.
#[derive(Debug, Clone, Copy)]
pub struct ClientContext<'a> {
    pub data: &'a Dataset,
    pub cfg: &'a FederationConfig,
}

/// Result of one local procedure.
#[derive(Debug, Clone)]
pub struct ClientOutcome {
    /// Model sent to the server.
    pub upload: ModelParams,
    /// Model evaluated for personalization.
    pub personalized: ModelParams,
    /// Proxy gradients summed over the last epoch that produced the upload.
    pub proxy_grads: Matrix,
}

/// Epochs of the aggregation stage and the personalization stage; the first
/// stage gets the extra epoch when `E` is odd.
pub fn stage_epochs(local_epochs: usize) -> (usize, usize) {
    let first = local_epochs.div_ceil(2);
    (first, local_epochs - first)
}

struct LocalTrainer<'a> {
    data: &'a Dataset,
    train: &'a [usize],
    batch_size: usize,
    rng: ChaCha8Rng,
    opt: OptimizerState,
}

impl<'a> LocalTrainer<'a> {
    fn new(client: &'a mut ClientState, global: &ModelParams, ctx: ClientContext<'a>) -> Result<(Self, &'a ClientShard)> {
        if client.shard.train.is_empty() {
            return Err(Error::Empty(format!("client {} has no training samples", client.id)));
        }
        // one draw per selection keeps the stream aligned across strategies
        let rng = ChaCha8Rng::seed_from_u64(client.rng.next_u64());
        let opt = OptimizerState::new(ctx.cfg.sgd, global)?;
        let shard: &'a ClientShard = &client.shard;
        Ok((
            Self {
                data: ctx.data,
                train: &shard.train,
                batch_size: ctx.cfg.batch_size,
                rng,
                opt,
            },
            shard,
        ))
    }

    /// Runs `epochs` shuffled passes; returns the proxy gradient summed over the last one.
    fn run(&mut self, params: &mut ModelParams, epochs: usize, spec: LossSpec<'_>) -> Result<Matrix> {
        let mut order = self.train.to_vec();
        let mut acc = Matrix::zeros(params.proxies.rows(), params.proxies.cols());
        for epoch in 0..epochs {
            order.shuffle(&mut self.rng);
            let last = epoch + 1 == epochs;
            for batch in order.chunks(self.batch_size) {
                let (x, y) = self.data.gather(batch);
                let (_, grads) = backward(params, &x, &y, spec)?;
                if last {
                    for (a, g) in acc.as_mut_slice().iter_mut().zip(grads.proxies.as_slice()) {
                        *a += g;
                    }
                }
                sgd_step(params, &grads, &mut self.opt)?;
            }
        }
        Ok(acc)
    }
}

fn client_scaling(shard: &ClientShard, ctx: ClientContext<'_>) -> Result<ScalingFactors> {
    let counts = ctx.data.class_counts(&shard.train);
    let s = &ctx.cfg.strategy;
    build_scaling(s.scaling, s.alpha, &shard.observed, &counts)
}

/// Personalization objective against the stored private model, if any.
fn personalization_spec<'b>(hpm: Option<&'b ModelParams>, ctx: ClientContext<'b>) -> LossSpec<'b> {
    let s = &ctx.cfg.strategy;
    let transfer = match (hpm, s.transfer) {
        (Some(_), _) if s.lambda == 0.0 => Transfer::None,
        (Some(teacher), TransferKind::Kd) => Transfer::Kd { teacher, tau: s.tau },
        (Some(teacher), TransferKind::Mmd) => Transfer::Mmd {
            teacher,
            cfg: &s.mmd,
        },
        _ => Transfer::None,
    };
    LossSpec::Personalization {
        lambda: s.lambda,
        transfer,
    }
}

/// Counts the selection, recomputes `μ` and folds `personalized` into the private model.
fn update_private_model(client: &mut ClientState, personalized: &ModelParams, cfg: &FederationConfig) -> Result<()> {
    client.selections += 1;
    client.mu = mu_schedule(cfg.strategy.mu, client.selections, cfg.sample_ratio, cfg.rounds);
    client.hpm = Some(match client.hpm.take() {
        None => personalized.clone(),
        Some(prev) => interpolate(personalized, &prev, client.mu)?,
    });
    Ok(())
}

/// `E` epochs of softmax cross-entropy; the trained model is both upload and
/// personalized model.
pub fn client_procedure_fedavg(
    client: &mut ClientState,
    global: &ModelParams,
    ctx: ClientContext<'_>,
) -> Result<ClientOutcome> {
    let mut params = global.clone();
    let proxy_grads = {
        let (mut trainer, _) = LocalTrainer::new(client, global, ctx)?;
        trainer.run(&mut params, ctx.cfg.local_epochs, LossSpec::SoftmaxCe)?
    };
    client.selections += 1;
    Ok(ClientOutcome {
        upload: params.clone(),
        personalized: params,
        proxy_grads,
    })
}

/// `E` epochs of cross-entropy over restricted softmax.
pub fn client_procedure_fedrs(
    client: &mut ClientState,
    global: &ModelParams,
    ctx: ClientContext<'_>,
) -> Result<ClientOutcome> {
    let mut params = global.clone();
    let proxy_grads = {
        let (mut trainer, shard) = LocalTrainer::new(client, global, ctx)?;
        let scales = client_scaling(shard, ctx)?;
        trainer.run(&mut params, ctx.cfg.local_epochs, LossSpec::RestrictedCe(&scales))?
    };
    client.selections += 1;
    Ok(ClientOutcome {
        upload: params.clone(),
        personalized: params,
        proxy_grads,
    })
}

/// `E` epochs of the personalization loss against the private model, which is
/// then updated with the result. The personalized model is also the upload.
pub fn client_procedure_fedphp(
    client: &mut ClientState,
    global: &ModelParams,
    ctx: ClientContext<'_>,
) -> Result<ClientOutcome> {
    let mut params = global.clone();
    let hpm = client.hpm.clone();
    let proxy_grads = {
        let (mut trainer, _) = LocalTrainer::new(client, global, ctx)?;
        let spec = personalization_spec(hpm.as_ref(), ctx);
        trainer.run(&mut params, ctx.cfg.local_epochs, spec)?
    };
    update_private_model(client, &params, ctx.cfg)?;
    Ok(ClientOutcome {
        upload: params.clone(),
        personalized: params,
        proxy_grads,
    })
}

/// Two-stage procedure: restricted-softmax training produces the upload, then
/// training continues under the personalization loss and the result is folded
/// into the private model.
pub fn client_procedure_map(
    client: &mut ClientState,
    global: &ModelParams,
    ctx: ClientContext<'_>,
) -> Result<ClientOutcome> {
    let epochs = ctx.cfg.local_epochs;
    if epochs < 2 {
        return Err(Error::invalid("local_epochs", epochs, "MAP needs at least 2 epochs"));
    }
    let (first, second) = stage_epochs(epochs);
    let mut params = global.clone();
    let hpm = client.hpm.clone();
    let (upload, proxy_grads) = {
        let (mut trainer, shard) = LocalTrainer::new(client, global, ctx)?;
        let scales = client_scaling(shard, ctx)?;
        let grads = trainer.run(&mut params, first, LossSpec::RestrictedCe(&scales))?;
        let upload = params.clone();
        trainer.run(&mut params, second, personalization_spec(hpm.as_ref(), ctx))?;
        (upload, grads)
    };
    update_private_model(client, &params, ctx.cfg)?;
    Ok(ClientOutcome {
        upload,
        personalized: params,
        proxy_grads,
    })
}

/// Dispatches on the configured strategy.
pub fn client_procedure(
    client: &mut ClientState,
    global: &ModelParams,
    ctx: ClientContext<'_>,
) -> Result<ClientOutcome> {
    match ctx.cfg.strategy.kind {
        StrategyKind::FedAvg => client_procedure_fedavg(client, global, ctx),
        StrategyKind::FedRs => client_procedure_fedrs(client, global, ctx),
        StrategyKind::FedPhp => client_procedure_fedphp(client, global, ctx),
        StrategyKind::Map => client_procedure_map(client, global, ctx),
    }
}
