use std::fmt::Write as _;
use std::thread;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::data::{DatasetBundle, InteractionSequence};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalOptions};
use crate::numerics::{Adam, AdamConfig, Gradients, Graph, ParamStore, Precision};
use crate::seed::SeedStreams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Epochs without a better validation F1 before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub precision: Precision,
    /// Worker threads per batch; 1 is the bit-reproducible reference mode.
    pub threads: usize,
    pub early_stop_cutoff: usize,
    pub exclude_history: bool,
    /// Write wall-clock seconds into the log; off gives byte-identical logs.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            patience: 5,
            max_epochs: 100,
            adam: AdamConfig::default(),
            seed: 0,
            precision: Precision::F64,
            threads: 1,
            early_stop_cutoff: 20,
            exclude_history: false,
            record_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_cutoff == 0 {
            return Err(Error::Config("batch_size, max_epochs and early_stop_cutoff must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

pub const LOG_HEADER: &str = "epoch,train_nll,valid_f1@20,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub train_nll: f64,
    pub valid_f1: f64,
    pub seconds: f64,
}

impl LogRow {
    pub fn line(&self) -> String {
        format!("{},{:?},{:?},{:.3}", self.epoch, self.train_nll, self.valid_f1, self.seconds)
    }
}

pub fn format_log(rows: &[LogRow]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", r.line());
    }
    out
}

/// Early-stopping bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub best_epoch: usize,
    pub best_f1: f64,
    /// Validation NLL of the best snapshot, used to break F1 ties.
    pub best_nll: f64,
    pub since_improvement: usize,
    pub best: ParamStore,
}

impl TrainState {
    fn new(params: &ParamStore) -> Self {
        Self {
            epoch: 0,
            best_epoch: 0,
            best_f1: f64::NEG_INFINITY,
            best_nll: f64::INFINITY,
            since_improvement: 0,
            best: params.clone(),
        }
    }

    /// Records one epoch's validation result; true if it became the best.
    pub fn observe(&mut self, f1: f64, nll: f64, params: &ParamStore) -> bool {
        self.epoch += 1;
        let better = f1 > self.best_f1 || (f1 == self.best_f1 && nll < self.best_nll);
        if better {
            self.best_f1 = f1;
            self.best_nll = nll;
            self.best_epoch = self.epoch;
            self.since_improvement = 0;
            self.best = params.clone();
        } else {
            self.since_improvement += 1;
        }
        better
    }

    pub fn should_stop(&self, patience: usize) -> bool {
        self.since_improvement >= patience.max(1)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model restored to its best validation epoch.
    pub model: Model,
    pub log: Vec<LogRow>,
    pub state: TrainState,
}

/// Summed loss and gradients over `batch`. With several threads each worker
/// sums a contiguous chunk and chunks are added in order.
pub fn batch_gradients(
    model: &Model,
    batch: &[&InteractionSequence],
    e: &EmbeddingMatrix,
    threads: usize,
) -> Result<(f64, Gradients)> {
    let work = |part: &[&InteractionSequence]| -> Result<(f64, Gradients)> {
        let mut grads = model.params().zeros_like();
        let mut loss = 0.0;
        for seq in part {
            let mut g = Graph::new(model.params());
            let root = model.sequence_loss(&mut g, seq, e)?;
            let value = g.value(root).item();
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("loss {value} for user `{}`", seq.user),
                });
            }
            loss += value;
            grads.accumulate(&g.backward(root)?);
        }
        Ok((loss, grads))
    };
    let threads = threads.clamp(1, batch.len().max(1));
    if threads == 1 {
        return work(batch);
    }
    let chunk = batch.len().div_ceil(threads);
    thread::scope(|scope| {
        let handles: Vec<_> = batch.chunks(chunk).map(|part| scope.spawn(move || work(part))).collect();
        let mut total = 0.0;
        let mut grads = model.params().zeros_like();
        for h in handles {
            let (l, g) = h.join().expect("training worker panicked")?;
            total += l;
            grads.accumulate(&g);
        }
        Ok((total, grads))
    })
}

/// Shuffled mini-batches that never mix history lengths.
fn batches(train: &[InteractionSequence], size: usize, rng: &mut crate::seed::Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| train[i].history.len());
    let mut out = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let len = train[order[start]].history.len();
        let end = order[start..]
            .iter()
            .position(|&i| train[i].history.len() != len)
            .map_or(order.len(), |p| start + p);
        out.extend(order[start..end].chunks(size).map(<[usize]>::to_vec));
        start = end;
    }
    out.shuffle(rng);
    out
}

/// Trains a freshly initialized model; see [`train_model`].
pub fn train(
    config: &ModelConfig,
    bundle: &DatasetBundle,
    e: &EmbeddingMatrix,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    let streams = SeedStreams::new(train_config.seed);
    let model = Model::new(config.clone(), &mut streams.stream("init"))?;
    train_model(model, bundle, e, train_config)
}

/// Adam on shuffled mini-batches; after every epoch the validation F1 at
/// the early-stop cutoff decides whether the parameters become the new
/// best. Stops after `patience` epochs without improvement.
pub fn train_model(
    mut model: Model,
    bundle: &DatasetBundle,
    e: &EmbeddingMatrix,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !e.is_unit_norm() {
        return Err(Error::Config("item embeddings must be unit-normalized before training".into()));
    }
    if e.vocab_size() != bundle.vocab.len() {
        return Err(Error::Config(format!(
            "embedding matrix has {} rows for a vocabulary of {}",
            e.vocab_size(),
            bundle.vocab.len()
        )));
    }
    if bundle.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if bundle.valid.is_empty() {
        return Err(Error::Empty("validation split"));
    }

    let streams = SeedStreams::new(cfg.seed);
    let mut shuffle = streams.stream("shuffle");
    cfg.precision.apply(model.params_mut());
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut state = TrainState::new(model.params());
    let mut log = Vec::new();
    let eval = EvalOptions {
        cutoffs: vec![cfg.early_stop_cutoff],
        exclude_history: cfg.exclude_history,
        threads: cfg.threads,
    };

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut total = 0.0;
        for batch in batches(&bundle.train, cfg.batch_size, &mut shuffle) {
            let seqs: Vec<&InteractionSequence> = batch.iter().map(|&i| &bundle.train[i]).collect();
            let (loss, mut grads) = batch_gradients(&model, &seqs, e, cfg.threads).map_err(|err| match err {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("epoch {epoch}: {context}"),
                },
                other => other,
            })?;
            total += loss;
            grads.scale(1.0 / seqs.len() as f64);
            adam.step(model.params_mut(), &grads)?;
            cfg.precision.apply(model.params_mut());
        }
        let train_nll = total / bundle.train.len() as f64;
        let report = evaluate(&model.recommender(e), &bundle.valid, &eval)?;
        let valid_f1 = report.rows[0].f1;
        let valid_nll = -model.mean_log_likelihood(&bundle.valid, e)?;
        let improved = state.observe(valid_f1, valid_nll, model.params());
        let row = LogRow {
            epoch,
            train_nll,
            valid_f1,
            seconds: if cfg.record_time { started.elapsed().as_secs_f64() } else { 0.0 },
        };
        log::info!(
            "{} epoch {epoch}: train nll {train_nll:.4}, valid F1@{} {valid_f1:.4}, valid nll {valid_nll:.4}{}",
            model.name(),
            cfg.early_stop_cutoff,
            if improved { " *" } else { "" }
        );
        log.push(row);
        if state.should_stop(cfg.patience) {
            break;
        }
    }

    model.params_mut().load_from(&state.best)?;
    Ok(TrainOutcome { model, log, state })
}
