//! Neural operator architectures and their trainable parameters.

pub mod deeponet;
pub mod fno;

pub use deeponet::DeepOnetConfig;
pub use fno::FnoConfig;

use crate::dataset::SamplePair;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::rng::Stream;
use crate::tape::{NodeId, Tape, Value};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Storage class of one named parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Real,
    Complex,
}

/// One entry of an architecture's declared parameter manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn real(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
            kind: ParamKind::Real,
        }
    }

    pub fn complex(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
            kind: ParamKind::Complex,
        }
    }
}

/// All trainable weights of a model, keyed by name. BTreeMap keeps the
/// iteration order deterministic, which the optimizer and checkpoint
/// layouts rely on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelParams(pub BTreeMap<String, Value>);

impl ModelParams {
    pub fn get(&self, name: &str) -> Result<&Value> {
        self.0
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total count of real scalar coordinates across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.0.values().map(Value::scalar_count).sum()
    }

    /// Checks that exactly the manifest's names are present, each with the
    /// declared shape and kind.
    pub fn validate(&self, manifest: &[ParamSpec]) -> Result<()> {
        if self.0.len() != manifest.len() {
            return Err(Error::Contract(format!(
                "parameter count {} differs from manifest {}",
                self.0.len(),
                manifest.len()
            )));
        }
        for spec in manifest {
            let v = self.get(&spec.name)?;
            let (shape, kind) = match v {
                Value::Real(t) => (t.shape(), ParamKind::Real),
                Value::Complex(t) => (t.shape(), ParamKind::Complex),
            };
            if kind != spec.kind || shape != spec.shape.as_slice() {
                return Err(Error::Contract(format!(
                    "parameter {} has shape {shape:?} ({kind:?}), manifest says {:?} ({:?})",
                    spec.name, spec.shape, spec.kind
                )));
            }
        }
        Ok(())
    }

    /// Registers every parameter as a tape leaf; returns name -> node map.
    pub fn register(&self, tape: &mut Tape) -> BTreeMap<String, NodeId> {
        self.0
            .iter()
            .map(|(name, v)| (name.clone(), tape.leaf_value(v.clone())))
            .collect()
    }
}

/// Glorot-uniform init for a `[fan_in, fan_out]` weight matrix.
pub(crate) fn glorot(shape: [usize; 2], stream: &mut Stream) -> Tensor {
    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| stream.uniform(-bound, bound))
}

/// Which architecture plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelConfig {
    Deeponet(DeepOnetConfig),
    Fno(FnoConfig),
}

impl ModelConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelConfig::Deeponet(_) => "deeponet",
            ModelConfig::Fno(_) => "fno",
        }
    }

    pub fn manifest(&self) -> Result<Vec<ParamSpec>> {
        match self {
            ModelConfig::Deeponet(c) => c.manifest(),
            ModelConfig::Fno(c) => c.manifest(),
        }
    }
}

/// A neural operator: configuration plus current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Fresh parameters from a seed; deterministic.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model> {
        let params = match &config {
            ModelConfig::Deeponet(c) => c.init(seed)?,
            ModelConfig::Fno(c) => c.init(seed)?,
        };
        params.validate(&config.manifest()?)?;
        Ok(Model { config, params })
    }

    /// Wraps externally supplied parameters after manifest validation.
    pub fn with_params(config: ModelConfig, params: ModelParams) -> Result<Model> {
        params.validate(&config.manifest()?)?;
        Ok(Model { config, params })
    }

    pub fn kind_name(&self) -> &'static str {
        self.config.kind_name()
    }

    /// Builds the training loss (mean squared error over every sample and
    /// collocation point) for one mini-batch on the given tape. Returns the
    /// loss node and the parameter leaf map for gradient extraction.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        batch: &[&SamplePair],
    ) -> Result<(NodeId, BTreeMap<String, NodeId>)> {
        let first = batch
            .first()
            .ok_or_else(|| Error::Contract("empty batch".into()))?;
        let grid = first.grid();
        let ids = self.params.register(tape);
        let inputs = stack_values(batch.iter().map(|p| &p.input), grid)?;
        let pred = match &self.config {
            ModelConfig::Deeponet(c) => c.forward(tape, &ids, &inputs, grid)?,
            ModelConfig::Fno(c) => c.forward(tape, &ids, &inputs, grid)?,
        };
        let target_tensor = stack_values(batch.iter().map(|p| &p.output), grid)?;
        let target_shaped = target_tensor.reshaped(tape.real(pred)?.shape().to_vec())?;
        let target = tape.input(target_shaped);
        let loss = tape.mse(pred, target)?;
        Ok((loss, ids))
    }

    /// Forward pass over a batch of inputs; returns a
    /// `[batch, point_count]` prediction matrix. A pure function of
    /// `(params, inputs)`.
    pub fn predict(&self, inputs: &[&GridFunction]) -> Result<Tensor> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract("empty batch".into()))?;
        let grid = first.grid;
        let mut tape = Tape::new();
        let ids = self.params.register(&mut tape);
        let stacked = stack_values(inputs.iter().copied(), grid)?;
        let pred = match &self.config {
            ModelConfig::Deeponet(c) => c.forward(&mut tape, &ids, &stacked, grid)?,
            ModelConfig::Fno(c) => c.forward(&mut tape, &ids, &stacked, grid)?,
        };
        tape.real(pred)?
            .clone()
            .reshaped(vec![inputs.len(), grid.point_count()])
    }
}

/// Stacks per-sample grid values into a `[batch, point_count]` matrix.
fn stack_values<'a>(
    funcs: impl Iterator<Item = &'a GridFunction>,
    grid: GridSpec,
) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut count = 0;
    for f in funcs {
        if f.grid != grid {
            return Err(Error::Shape(format!(
                "batch mixes grids: {:?} vs {:?}",
                f.grid, grid
            )));
        }
        data.extend_from_slice(f.values.data());
        count += 1;
    }
    Tensor::new(vec![count, grid.point_count()], data)
}

/// Training-form mean squared error over all samples and points.
pub fn loss_mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "loss_mse: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let v = sum / n;
    if !v.is_finite() {
        return Err(Error::NonFinite("loss_mse".into()));
    }
    Ok(v)
}
