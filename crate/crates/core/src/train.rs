//! Relative L2 loss, Adam, step decay and the training loop.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Tape};
use crate::ctensor::{CTensor, C64};
use crate::error::{shape_err, Error, Result};
use crate::model::{ConoModel, ParamKind, ParamStore};

/// Mean over the leading axis of `‖pred_i - target_i‖ / ‖target_i‖`.
pub fn rel_l2(pred: &CTensor, target: &CTensor) -> Result<f64> {
    Ok(per_sample_rel_l2(pred, target)?.iter().sum::<f64>() / pred.shape()[0] as f64)
}

pub fn per_sample_rel_l2(pred: &CTensor, target: &CTensor) -> Result<Vec<f64>> {
    if pred.shape() != target.shape() || pred.rank() == 0 || pred.shape()[0] == 0 {
        return Err(shape_err!("rel_l2: {:?} vs {:?}", pred.shape(), target.shape()));
    }
    let b = pred.shape()[0];
    let per = pred.len() / b;
    (0..b)
        .map(|s| {
            let p = &pred.data()[s * per..(s + 1) * per];
            let t = &target.data()[s * per..(s + 1) * per];
            let tn = libm::sqrt(t.iter().map(|z| z.norm_sqr()).sum());
            if tn < 1e-14 {
                return Err(Error::ZeroTarget(s));
            }
            let dn = libm::sqrt(p.iter().zip(t).map(|(a, b)| (a - b).norm_sqr()).sum());
            Ok(dn / tn)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate factor for fractional orders.
    pub order_lr_multiplier: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            order_lr_multiplier: 1.0,
        }
    }
}

/// Moments per parameter slot. Real and imaginary parts are tracked as
/// independent real parameters: the second moment of the real part lives in
/// `v.re`, that of the imaginary part in `v.im`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub t: u64,
    m: Vec<Option<CTensor>>,
    v: Vec<Option<CTensor>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update of every trainable parameter with a gradient.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<()> {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    if state.m.len() < params.len() {
        state.m.resize(params.len(), None);
        state.v.resize(params.len(), None);
    }
    for (slot, g) in grads.iter() {
        let p = params.get_mut(slot);
        if !p.trainable {
            continue;
        }
        if g.shape() != p.value.shape() {
            return Err(shape_err!("gradient {:?} for parameter {}", g.shape(), p.name));
        }
        let step = if p.kind == ParamKind::Order {
            lr * cfg.order_lr_multiplier
        } else {
            lr
        };
        let m = state.m[slot].get_or_insert_with(|| CTensor::zeros(g.shape()));
        let v = state.v[slot].get_or_insert_with(|| CTensor::zeros(g.shape()));
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        for (((w, mi), vi), gi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *mi = *mi * b1 + *gi * (1.0 - b1);
            *vi = C64::new(
                b2 * vi.re + (1.0 - b2) * gi.re * gi.re,
                b2 * vi.im + (1.0 - b2) * gi.im * gi.im,
            );
            let dre = (mi.re / bc1) / (libm::sqrt(vi.re / bc2) + cfg.eps);
            let dim = (mi.im / bc1) / (libm::sqrt(vi.im / bc2) + cfg.eps);
            *w -= C64::new(step * dre, step * dim);
        }
    }
    Ok(())
}

/// `lr · gamma^⌊epoch / step_size⌋`, epochs counted from 0.
pub fn step_lr(base: f64, step_size: usize, gamma: f64, epoch: usize) -> f64 {
    base * libm::pow(gamma, (epoch / step_size.max(1)) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub step_size: usize,
    pub gamma: f64,
    pub seed: u64,
    pub alpha_lr_multiplier: f64,
    pub noise_gamma: f64,
    pub data_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 20,
            lr: 1e-3,
            step_size: 100,
            gamma: 0.5,
            seed: 0,
            alpha_lr_multiplier: 1.0,
            noise_gamma: 0.0,
            data_ratio: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.lr > 0.0
            && self.step_size > 0
            && self.gamma > 0.0
            && self.alpha_lr_multiplier > 0.0
            && self.noise_gamma >= 0.0
            && self.data_ratio > 0.0
            && self.data_ratio <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Paired real fields: inputs `[n, S.., c_in]`, outputs `[n, S.., c_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub inputs: CTensor,
    pub outputs: CTensor,
}

impl Samples {
    pub fn new(inputs: CTensor, outputs: CTensor) -> Result<Self> {
        if inputs.rank() < 2 || outputs.rank() < 2 || inputs.shape()[0] != outputs.shape()[0] {
            return Err(shape_err!("inputs {:?} and outputs {:?}", inputs.shape(), outputs.shape()));
        }
        Ok(Self { inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples `idx` stacked in order.
    pub fn gather(&self, idx: &[usize]) -> Result<Samples> {
        Samples::new(take_rows(&self.inputs, idx)?, take_rows(&self.outputs, idx)?)
    }

    pub fn range(&self, start: usize, end: usize) -> Result<Samples> {
        let idx: Vec<usize> = (start..end).collect();
        self.gather(&idx)
    }

    /// Leading `n - n/6` samples for training, the final sixth for testing.
    pub fn split_final_sixth(&self) -> Result<(Samples, Samples)> {
        let n = self.len();
        let test = (n / 6).max(1);
        if test >= n {
            return Err(Error::Config(format!("{n} samples are too few to split")));
        }
        Ok((self.range(0, n - test)?, self.range(n - test, n)?))
    }
}

fn take_rows(t: &CTensor, idx: &[usize]) -> Result<CTensor> {
    let n = t.shape()[0];
    let per = t.len() / n.max(1);
    let mut data = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        if i >= n {
            return Err(shape_err!("sample {i} out of {n}"));
        }
        data.extend_from_slice(&t.data()[i * per..(i + 1) * per]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    CTensor::new(shape, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_rel_l2: f64,
    pub test_rel_l2: f64,
    pub lr: f64,
    pub orders: Vec<f64>,
}

/// Per-epoch metrics. CSV columns: `epoch, train_rel_l2, test_rel_l2, lr`,
/// then one column per fractional order in parameter order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub order_names: Vec<String>,
    pub rows: Vec<EpochRow>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_rel_l2,test_rel_l2,lr");
        for name in &self.order_names {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{}", r.epoch, r.train_rel_l2, r.test_rel_l2, r.lr);
            for a in &r.orders {
                let _ = write!(s, ",{a}");
            }
            s.push('\n');
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }
}

/// Loss sum and gradients of one shard of a batch.
pub type ShardOutput = Result<(f64, Gradients)>;

/// Runs independent shard computations. Results must come back in index
/// order so that gradient merging is deterministic.
pub trait Executor: Sync {
    fn map(&self, count: usize, f: &(dyn Fn(usize) -> ShardOutput + Sync)) -> Vec<ShardOutput>;

    fn workers(&self) -> usize {
        1
    }
}

pub struct Sequential;

impl Executor for Sequential {
    fn map(&self, count: usize, f: &(dyn Fn(usize) -> ShardOutput + Sync)) -> Vec<ShardOutput> {
        (0..count).map(f).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: MetricsLog,
    /// Parameters at the epoch with the lowest test error.
    pub best: ParamStore,
    pub best_epoch: usize,
}

/// Test-set relative L2 of the current parameters.
pub fn evaluate(model: &ConoModel, data: &Samples, batch_size: usize) -> Result<f64> {
    let n = data.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size.max(1)).min(n);
        let chunk = data.range(start, end)?;
        let pred = model.forward(&chunk.inputs)?;
        total += per_sample_rel_l2(&pred, &chunk.outputs)?.iter().sum::<f64>();
        start = end;
    }
    Ok(total / n as f64)
}

/// Mean-loss gradient of one batch, split into `exec.workers()` shards.
fn batch_gradients(model: &ConoModel, batch: &Samples, exec: &dyn Executor) -> Result<(f64, Gradients)> {
    let b = batch.len();
    let shards = exec.workers().clamp(1, b);
    let bounds: Vec<(usize, usize)> = (0..shards).map(|s| (s * b / shards, (s + 1) * b / shards)).collect();
    let job = |s: usize| -> ShardOutput {
        let (lo, hi) = bounds[s];
        let part = batch.range(lo, hi)?;
        let mut tape = Tape::new();
        let vars = model.params().bind(&mut tape);
        let pred = model.forward_tape(&mut tape, &vars, &part.inputs)?;
        let loss = tape.rel_l2(pred, Arc::new(part.outputs))?;
        let weight = (hi - lo) as f64 / b as f64;
        let loss = tape.scale(loss, C64::new(weight, 0.0))?;
        let value = tape.value(loss).data()[0].re;
        Ok((value, tape.backward(loss)?))
    };
    let mut total = 0.0;
    let mut grads = Gradients::default();
    for r in exec.map(shards, &job) {
        let (l, g) = r?;
        total += l;
        grads.merge(g)?;
    }
    Ok((total, grads))
}

/// Trains in place. Batches are reshuffled every epoch from a stream derived
/// from `cfg.seed` that is independent of model initialization and data
/// generation. `on_epoch` sees every logged row as it is produced.
pub fn train_loop(
    model: &mut ConoModel,
    train: &Samples,
    test: &Samples,
    cfg: &TrainConfig,
    exec: &dyn Executor,
    on_epoch: &mut dyn FnMut(&EpochRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("empty training or test set".into()));
    }
    let mut spatial = train.inputs.shape()[1..train.inputs.rank() - 1].to_vec();
    model.ensure_plans(&spatial)?;
    spatial = test.inputs.shape()[1..test.inputs.rank() - 1].to_vec();
    model.ensure_plans(&spatial)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let adam = AdamConfig {
        order_lr_multiplier: cfg.alpha_lr_multiplier,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new();
    let mut log = MetricsLog {
        order_names: model.orders().into_iter().map(|(n, _)| n).collect(),
        rows: Vec::with_capacity(cfg.epochs),
    };
    let mut best = (f64::INFINITY, model.params().clone(), 0);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut last_good = None;

    for epoch in 0..cfg.epochs {
        let lr = step_lr(cfg.lr, cfg.step_size, cfg.gamma, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = train.gather(idx)?;
            let (loss, grads) = batch_gradients(model, &batch, exec)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, last_good });
            }
            loss_sum += loss * idx.len() as f64;
            adam_step(model.params_mut(), &grads, &mut state, &adam, lr)?;
        }
        let test_err = evaluate(model, test, cfg.batch_size)?;
        if !test_err.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, last_good });
        }
        let row = EpochRow {
            epoch,
            train_rel_l2: loss_sum / train.len() as f64,
            test_rel_l2: test_err,
            lr,
            orders: model.orders().into_iter().map(|(_, a)| a).collect(),
        };
        on_epoch(&row);
        log.rows.push(row);
        last_good = Some(epoch);
        if test_err < best.0 {
            best = (test_err, model.params().clone(), epoch);
        }
    }
    Ok(TrainOutcome {
        log,
        best: best.1,
        best_epoch: best.2,
    })
}
