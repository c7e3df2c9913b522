//! Adam training with a halving learning-rate schedule, and test-set
//! evaluation.
//!
//! The loop is plain: shuffled mini-batches per epoch (seeded), one Adam
//! step per batch, NaN abort instead of gradient clipping. Training is
//! fully deterministic in `(initial params, dataset, config)`; any internal
//! parallelism lives inside the tape primitives and never reorders a
//! reduction.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{Model, ModelParams};
use crate::rng::{split_seed, Stream};
use crate::tape::{Tape, Value};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn default_lr0() -> f64 {
    0.001
}

fn default_halve_every() -> usize {
    100
}

fn default_epochs() -> usize {
    500
}

fn default_batch_size() -> usize {
    100
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

/// Optimization settings. Defaults: initial rate 1e-3 halved every 100
/// epochs, 500 epochs of batches of 100 (ten batches per epoch at the
/// standard training-set size; five halvings overall).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    #[serde(default = "default_halve_every")]
    pub halve_every: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: default_lr0(),
            halve_every: default_halve_every(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Parameter(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if self.halve_every == 0 {
            return Err(Error::Parameter("halve_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Learning rate at a given epoch: `lr0 * 2^-(epoch / halve_every)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * 0.5f64.powi((epoch / cfg.halve_every) as i32)
}

/// First and second moment accumulators, keyed like the parameters.
pub struct AdamState {
    m: BTreeMap<String, Value>,
    v: BTreeMap<String, Value>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = |p: &ModelParams| -> BTreeMap<String, Value> {
            p.iter()
                .map(|(name, v)| (name.clone(), v.zeros_like()))
                .collect()
        };
        AdamState {
            m: zeros(params),
            v: zeros(params),
            t: 0,
        }
    }
}

/// One Adam update with bias correction. Complex parameters update their
/// real and imaginary planes as independent real coordinates.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Value>,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() || !grads.keys().eq(params.0.keys()) {
        return Err(Error::Contract(
            "gradient keys do not match parameter keys".into(),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, theta) in params.0.iter_mut() {
        let g = &grads[name];
        let m = state.m.get_mut(name).expect("state mirrors params");
        let v = state.v.get_mut(name).expect("state mirrors params");
        match (theta, g, m, v) {
            (Value::Real(theta), Value::Real(g), Value::Real(m), Value::Real(v)) => {
                adam_plane(
                    theta.data_mut(),
                    g.data(),
                    m.data_mut(),
                    v.data_mut(),
                    lr,
                    cfg,
                    bc1,
                    bc2,
                );
            }
            (Value::Complex(theta), Value::Complex(g), Value::Complex(m), Value::Complex(v)) => {
                let (tre, tim) = theta.planes_mut();
                let (mre, mim) = m.planes_mut();
                let (vre, vim) = v.planes_mut();
                adam_plane(tre, g.re(), mre, vre, lr, cfg, bc1, bc2);
                adam_plane(tim, g.im(), mim, vim, lr, cfg, bc1, bc2);
            }
            _ => {
                return Err(Error::Contract(format!(
                    "gradient kind mismatch for parameter {name}"
                )))
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn adam_plane(
    theta: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    cfg: &TrainConfig,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..theta.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Trains a model in place; returns the per-epoch mean training loss.
pub fn fit(model: &mut Model, train_set: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let n = train_set.len();
    let mut state = AdamState::new(&model.params);
    let shuffle_root = split_seed(cfg.seed, crate::rng::labels::SHUFFLE);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let mut stream = Stream::new(split_seed(shuffle_root, epoch as u64));
        order.sort_unstable();
        stream.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&crate::dataset::SamplePair> =
                chunk.iter().map(|&i| &train_set.pairs[i]).collect();
            let mut tape = Tape::new();
            let (loss, ids) = model.batch_loss(&mut tape, &batch)?;
            let loss_val = tape.real(loss)?.item()?;
            if !loss_val.is_finite() {
                return Err(Error::NanLoss {
                    epoch,
                    batch: batch_idx,
                    lr,
                });
            }
            let mut grads = tape.backward(loss)?;
            let grad_map: BTreeMap<String, Value> = ids
                .iter()
                .map(|(name, id)| {
                    let g = grads
                        .take(*id)
                        .unwrap_or_else(|| model.params.0[name].zeros_like());
                    (name.clone(), g)
                })
                .collect();
            adam_step(&mut model.params, &grad_map, &mut state, lr, cfg)?;
            epoch_loss += loss_val * chunk.len() as f64;
        }
        history.push(epoch_loss / n as f64);
    }
    Ok(history)
}

/// Test-set error: per sample the squared discrete L2 norm of the residual
/// (mean over grid points of squared error), averaged over samples.
pub fn evaluate(model: &Model, test_set: &Dataset) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::Contract("test set is empty".into()));
    }
    let mut total = 0.0;
    for chunk in test_set.pairs.chunks(64) {
        let inputs: Vec<&crate::grid::GridFunction> = chunk.iter().map(|p| &p.input).collect();
        let pred = model.predict(&inputs)?;
        for (row, pair) in chunk.iter().enumerate() {
            let target = pair.output.values.data();
            let l = target.len();
            let mut acc = 0.0;
            for j in 0..l {
                let d = pred.at2(row, j) - target[j];
                acc += d * d;
            }
            total += acc / l as f64;
        }
    }
    let v = total / test_set.len() as f64;
    if !v.is_finite() {
        return Err(Error::NonFinite("evaluate".into()));
    }
    Ok(v)
}

/// Squared discrete L2 error of a single prediction against a target.
pub fn sample_sq_error(pred: &[f64], target: &[f64]) -> f64 {
    let l = pred.len();
    let mut acc = 0.0;
    for j in 0..l {
        let d = pred[j] - target[j];
        acc += d * d;
    }
    acc / l as f64
}
