//! DeepONet: a branch net over sensor values paired with a trunk net over
//! query coordinates, combined by an inner product plus a scalar bias:
//! `out(v)(x) = sum_k b_k(v) t_k(x) + b0`.
//!
//! Both subnets are plain fully connected stacks of `depth` weight layers;
//! the hidden activation is applied after every layer except the last, so
//! the latent features are linear images of the final hidden state. Sensors
//! are the full training grid (flattened for 2D inputs) and the collocation
//! points are all grid points.

use super::{glorot, ModelParams, ParamSpec};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::rng::Stream;
use crate::tape::{Activation, NodeId, Tape, Value};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_coord_dim() -> usize {
    1
}

/// Sizes of the two subnets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepOnetConfig {
    /// Branch input size `m`: number of sensor locations (grid points).
    pub sensors: usize,
    /// Latent dimension `p` shared by branch and trunk outputs.
    pub latent: usize,
    /// Weight layers per subnet.
    pub depth: usize,
    /// Hidden width of both subnets.
    pub width: usize,
    /// Trunk input dimension (1 or 2).
    #[serde(default = "default_coord_dim")]
    pub coord_dim: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl DeepOnetConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("sensors", self.sensors),
            ("latent", self.latent),
            ("depth", self.depth),
            ("width", self.width),
        ] {
            if v == 0 {
                return Err(Error::Parameter(format!("{what} must be >= 1")));
            }
        }
        if !(self.coord_dim == 1 || self.coord_dim == 2) {
            return Err(Error::Parameter(format!(
                "coord_dim must be 1 or 2, got {}",
                self.coord_dim
            )));
        }
        Ok(())
    }

    /// Layer input/output sizes of one subnet with the given input size.
    fn layer_dims(&self, input: usize) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.depth + 1);
        sizes.push(input);
        for _ in 1..self.depth {
            sizes.push(self.width);
        }
        sizes.push(self.latent);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn manifest(&self) -> Result<Vec<ParamSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        for (prefix, input) in [("branch", self.sensors), ("trunk", self.coord_dim)] {
            for (i, (fan_in, fan_out)) in self.layer_dims(input).into_iter().enumerate() {
                out.push(ParamSpec::real(
                    format!("{prefix}.w{i}"),
                    vec![fan_in, fan_out],
                ));
                out.push(ParamSpec::real(format!("{prefix}.b{i}"), vec![fan_out]));
            }
        }
        out.push(ParamSpec::real("bias0", vec![1]));
        Ok(out)
    }

    /// Glorot-uniform weights, zero biases, zero output bias.
    pub fn init(&self, seed: u64) -> Result<ModelParams> {
        self.validate()?;
        let mut stream = Stream::new(seed);
        let mut params = ModelParams::default();
        for (prefix, input) in [("branch", self.sensors), ("trunk", self.coord_dim)] {
            for (i, (fan_in, fan_out)) in self.layer_dims(input).into_iter().enumerate() {
                params.0.insert(
                    format!("{prefix}.w{i}"),
                    Value::Real(glorot([fan_in, fan_out], &mut stream)),
                );
                params.0.insert(
                    format!("{prefix}.b{i}"),
                    Value::Real(Tensor::zeros(vec![fan_out])),
                );
            }
        }
        params
            .0
            .insert("bias0".into(), Value::Real(Tensor::scalar(0.0)));
        Ok(params)
    }

    fn subnet(
        &self,
        tape: &mut Tape,
        ids: &BTreeMap<String, NodeId>,
        prefix: &str,
        mut x: NodeId,
    ) -> Result<NodeId> {
        for i in 0..self.depth {
            let w = ids[&format!("{prefix}.w{i}")];
            let b = ids[&format!("{prefix}.b{i}")];
            let lin = tape.matmul(x, w)?;
            x = tape.add_row_bias(lin, b)?;
            if i + 1 < self.depth {
                x = tape.activation(x, self.activation)?;
            }
        }
        Ok(x)
    }

    /// `inputs` is a `[batch, sensors]` matrix of sampled input functions;
    /// output node is `[batch, point_count]` with the collocation points
    /// being all grid points.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ids: &BTreeMap<String, NodeId>,
        inputs: &Tensor,
        grid: GridSpec,
    ) -> Result<NodeId> {
        if inputs.cols() != self.sensors {
            return Err(Error::Shape(format!(
                "branch expects {} sensors, batch has {}",
                self.sensors,
                inputs.cols()
            )));
        }
        if grid.point_count() != self.sensors || grid.dim_count() != self.coord_dim {
            return Err(Error::Shape(format!(
                "grid {:?} incompatible with sensors {} / coord_dim {}",
                grid, self.sensors, self.coord_dim
            )));
        }
        let v = tape.input(inputs.clone());
        let branch = self.subnet(tape, ids, "branch", v)?;
        let x = tape.input(grid.coords());
        let trunk = self.subnet(tape, ids, "trunk", x)?;
        let combined = tape.matmul_nt(branch, trunk)?;
        tape.add_scalar(combined, ids["bias0"])
    }
}
