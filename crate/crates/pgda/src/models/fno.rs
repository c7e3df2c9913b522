//! Fourier Neural Operator: pointwise lift, iterated spectral-convolution
//! layers with truncated modes, pointwise projection.
//!
//! The lift input concatenates the grid coordinate(s) to the function value
//! (channels = 1 + dim) before a single linear layer; the coordinate channel
//! breaks translation symmetry, which boundary-value problems need. Each of
//! the `layers` steps computes `z <- act(spectral(z) + z W + b)` where the
//! spectral term multiplies the kept Fourier modes channel-wise by learned
//! complex weights (see [`crate::tape::ModeSpec`] for the exact mode
//! layout). The projection is a two-layer network of width `2 * d_v`.
//!
//! Because the discrete transforms are normalized on the inverse side, mode
//! amplitudes scale like Riemann sums: evaluating the same weights on a
//! finer grid with the same `modes` approximates the same operator, so a
//! trained FNO can be queried at resolutions it was never trained on.

use super::{glorot, ModelParams, ParamSpec};
use crate::error::{Error, Result};
use crate::grid::{GridDims, GridSpec};
use crate::rng::Stream;
use crate::tape::{Activation, ModeSpec, NodeId, Tape, Value};
use crate::tensor::{ComplexTensor, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn default_activation() -> Activation {
    Activation::Gelu
}

/// Width, retained modes, depth and dimensionality of an FNO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnoConfig {
    /// Lifted channel count `d_v`.
    pub width: usize,
    /// Retained Fourier modes per dimension (`k_max`).
    pub modes: usize,
    /// Number of Fourier layers.
    pub layers: usize,
    pub dims: GridDims,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl FnoConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("width", self.width),
            ("modes", self.modes),
            ("layers", self.layers),
        ] {
            if v == 0 {
                return Err(Error::Parameter(format!("{what} must be >= 1")));
            }
        }
        Ok(())
    }

    fn coord_dim(&self) -> usize {
        match self.dims {
            GridDims::One => 1,
            GridDims::Two => 2,
        }
    }

    fn spectral_shape(&self) -> Vec<usize> {
        match self.dims {
            GridDims::One => vec![self.modes, self.width, self.width],
            GridDims::Two => vec![self.modes, self.modes, self.width, self.width],
        }
    }

    pub fn manifest(&self) -> Result<Vec<ParamSpec>> {
        self.validate()?;
        let d = self.width;
        let mut out = vec![
            ParamSpec::real("lift.w", vec![1 + self.coord_dim(), d]),
            ParamSpec::real("lift.b", vec![d]),
        ];
        for t in 0..self.layers {
            out.push(ParamSpec::complex(
                format!("layer{t}.r"),
                self.spectral_shape(),
            ));
            out.push(ParamSpec::real(format!("layer{t}.w"), vec![d, d]));
            out.push(ParamSpec::real(format!("layer{t}.b"), vec![d]));
        }
        out.push(ParamSpec::real("proj.w1", vec![d, 2 * d]));
        out.push(ParamSpec::real("proj.b1", vec![2 * d]));
        out.push(ParamSpec::real("proj.w2", vec![2 * d, 1]));
        out.push(ParamSpec::real("proj.b2", vec![1]));
        Ok(out)
    }

    /// Glorot weights for the pointwise maps; spectral weights start small
    /// and uniform (`+-1/d_v^2` per plane), zero biases.
    pub fn init(&self, seed: u64) -> Result<ModelParams> {
        self.validate()?;
        let mut stream = Stream::new(seed);
        let d = self.width;
        let mut params = ModelParams::default();
        params.0.insert(
            "lift.w".into(),
            Value::Real(glorot([1 + self.coord_dim(), d], &mut stream)),
        );
        params
            .0
            .insert("lift.b".into(), Value::Real(Tensor::zeros(vec![d])));
        let r_bound = 1.0 / (d * d) as f64;
        let r_len: usize = self.spectral_shape().iter().product();
        for t in 0..self.layers {
            let re: Vec<f64> = (0..r_len).map(|_| stream.uniform(-r_bound, r_bound)).collect();
            let im: Vec<f64> = (0..r_len).map(|_| stream.uniform(-r_bound, r_bound)).collect();
            params.0.insert(
                format!("layer{t}.r"),
                Value::Complex(ComplexTensor::new(self.spectral_shape(), re, im)?),
            );
            params.0.insert(
                format!("layer{t}.w"),
                Value::Real(glorot([d, d], &mut stream)),
            );
            params
                .0
                .insert(format!("layer{t}.b"), Value::Real(Tensor::zeros(vec![d])));
        }
        params.0.insert(
            "proj.w1".into(),
            Value::Real(glorot([d, 2 * d], &mut stream)),
        );
        params
            .0
            .insert("proj.b1".into(), Value::Real(Tensor::zeros(vec![2 * d])));
        params.0.insert(
            "proj.w2".into(),
            Value::Real(glorot([2 * d, 1], &mut stream)),
        );
        params
            .0
            .insert("proj.b2".into(), Value::Real(Tensor::zeros(vec![1])));
        Ok(params)
    }

    fn mode_spec(&self, grid: GridSpec) -> Result<ModeSpec> {
        match self.dims {
            GridDims::One => ModeSpec::one_d(grid.n, self.modes, self.width, self.width),
            GridDims::Two => ModeSpec::two_d(grid.n, self.modes, self.width, self.width),
        }
    }

    /// Builds the `[batch * points, 1 + dim]` lift input: function value
    /// with the grid coordinates concatenated per point.
    pub fn features(&self, inputs: &Tensor, grid: GridSpec) -> Result<Tensor> {
        let b = inputs.rows();
        let l = grid.point_count();
        if inputs.cols() != l {
            return Err(Error::Shape(format!(
                "inputs have {} points, grid has {l}",
                inputs.cols()
            )));
        }
        let coords = grid.coords();
        let dim = grid.dim_count();
        let mut data = Vec::with_capacity(b * l * (1 + dim));
        for s in 0..b {
            for p in 0..l {
                data.push(inputs.at2(s, p));
                for d in 0..dim {
                    data.push(coords.at2(p, d));
                }
            }
        }
        Tensor::new(vec![b * l, 1 + dim], data)
    }

    /// Forward pass: `[batch, points]` inputs to a `[batch*points, 1]`
    /// prediction node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ids: &BTreeMap<String, NodeId>,
        inputs: &Tensor,
        grid: GridSpec,
    ) -> Result<NodeId> {
        if grid.dims != self.dims {
            return Err(Error::Shape(format!(
                "grid {:?} incompatible with model dims {:?}",
                grid, self.dims
            )));
        }
        let spec = self.mode_spec(grid)?;
        let features = self.features(inputs, grid)?;
        let feat = tape.input(features);
        let lifted = tape.matmul(feat, ids["lift.w"])?;
        let mut z = tape.add_row_bias(lifted, ids["lift.b"])?;
        for t in 0..self.layers {
            let spectral = spectral_conv_node(tape, z, ids[&format!("layer{t}.r")], grid, spec.clone())?;
            let local = tape.matmul(z, ids[&format!("layer{t}.w")])?;
            let local = tape.add_row_bias(local, ids[&format!("layer{t}.b")])?;
            let sum = tape.add(spectral, local)?;
            z = tape.activation(sum, self.activation)?;
        }
        let h = tape.matmul(z, ids["proj.w1"])?;
        let h = tape.add_row_bias(h, ids["proj.b1"])?;
        let h = tape.activation(h, self.activation)?;
        let out = tape.matmul(h, ids["proj.w2"])?;
        tape.add_row_bias(out, ids["proj.b2"])
    }
}

fn spectral_conv_node(
    tape: &mut Tape,
    z: NodeId,
    r: NodeId,
    grid: GridSpec,
    spec: ModeSpec,
) -> Result<NodeId> {
    match grid.dims {
        GridDims::One => {
            let zh = tape.rfft_cols(z, grid.n)?;
            let mixed = tape.mode_mix(zh, r, spec)?;
            tape.irfft_cols(mixed, grid.n)
        }
        GridDims::Two => {
            let zh = tape.rfft2_cols(z, grid.n)?;
            let mixed = tape.mode_mix(zh, r, spec)?;
            tape.irfft2_cols(mixed, grid.n)
        }
    }
}

/// Standalone spectral convolution: transform, multiply the kept modes by
/// `r`, zero the rest, transform back. `z` is `[batch*points, channels]`.
pub fn spectral_conv(
    tape: &mut Tape,
    z: NodeId,
    r: NodeId,
    grid: GridSpec,
    k_max: usize,
) -> Result<NodeId> {
    let c = tape.real(z)?.cols();
    let spec = match grid.dims {
        GridDims::One => ModeSpec::one_d(grid.n, k_max, c, c)?,
        GridDims::Two => ModeSpec::two_d(grid.n, k_max, c, c)?,
    };
    spectral_conv_node(tape, z, r, grid, spec)
}
