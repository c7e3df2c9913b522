//! Reverse-mode automatic differentiation over whole tensors.
//!
//! A [`Tape`] records one forward pass as an append-only list of primitive
//! operations (define-by-run; the graph is rebuilt every training step).
//! Nodes may only reference earlier nodes, so the graph is acyclic by
//! construction and [`Tape::backward`] is a single reverse sweep that visits
//! each node exactly once.
//!
//! Complex-valued nodes are differentiated by treating the real and
//! imaginary planes as independent real coordinates; the "gradient" of a
//! complex node packs `dL/dRe + i dL/dIm`, which makes the chain rule for a
//! complex product `w = u v` read `g_u = g conj(v)`, `g_v = g conj(u)`.
//! FFT nodes backpropagate through the adjoint transforms in [`crate::fft`]
//! rather than through individual butterflies.
//!
//! A tape is confined to one training step on one thread. Internal data
//! parallelism (rayon over batch samples or output rows) only ever writes
//! disjoint output slots and keeps every reduction in a fixed sequential
//! order, so results are bit-identical for any thread count.

use crate::error::{Error, Result};
use crate::fft;
use crate::tensor::{matmul_into, ComplexTensor, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeId(usize);

/// A tensor value flowing through the tape: real or complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Real(Tensor),
    Complex(ComplexTensor),
}

impl Value {
    pub fn as_real(&self) -> Result<&Tensor> {
        match self {
            Value::Real(t) => Ok(t),
            Value::Complex(_) => Err(Error::Contract("expected real tensor".into())),
        }
    }

    pub fn as_complex(&self) -> Result<&ComplexTensor> {
        match self {
            Value::Complex(t) => Ok(t),
            Value::Real(_) => Err(Error::Contract("expected complex tensor".into())),
        }
    }

    pub fn zeros_like(&self) -> Value {
        match self {
            Value::Real(t) => Value::Real(Tensor::zeros(t.shape().to_vec())),
            Value::Complex(t) => Value::Complex(ComplexTensor::zeros(t.shape().to_vec())),
        }
    }

    /// Number of real scalar coordinates (complex counts both planes).
    pub fn scalar_count(&self) -> usize {
        match self {
            Value::Real(t) => t.len(),
            Value::Complex(t) => 2 * t.len(),
        }
    }

    fn accumulate(&mut self, delta: &Value) {
        match (self, delta) {
            (Value::Real(a), Value::Real(b)) => {
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
            (Value::Complex(a), Value::Complex(b)) => {
                let (re, im) = a.planes_mut();
                for (x, y) in re.iter_mut().zip(b.re()) {
                    *x += y;
                }
                for (x, y) in im.iter_mut().zip(b.im()) {
                    *x += y;
                }
            }
            _ => unreachable!("gradient kind mismatch"),
        }
    }
}

/// Pointwise nonlinearities available to the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Gelu,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Gelu => x * gauss_cdf(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Gelu => x * gauss_pdf(x) + gauss_cdf(x),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Standard normal CDF via the error function.
pub fn gauss_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gauss_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Which Fourier modes a spectral mixing node keeps, and how they map onto
/// the slots of its weight tensor.
///
/// 1D (`grid n`, weight `[k_max, d_out, d_in]`): stored mode `k` maps to slot
/// `k` for `k < k_max`; everything else is truncated.
///
/// 2D (`grid n x n`, weight `[k_max, k_max, d_out, d_in]`): along the full
/// first axis the `k_max` lowest *signed* frequencies are kept -- slots
/// `0..=k_max/2` hold frequencies `0..=k_max/2` and the remaining slots hold
/// `-1, -2, ...` (stored at wrapped row indices `n-1, n-2, ...`); along the
/// half-spectrum second axis slots `0..k_max` hold modes `0..k_max`. Keeping
/// both signs of the first axis retains wave components of both diagonal
/// orientations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSpec {
    /// Rows per sample in the frequency-domain block.
    pub block: usize,
    /// `(row within block, weight slot)` pairs that survive truncation.
    pub kept: Vec<(usize, usize)>,
    pub d_in: usize,
    pub d_out: usize,
    /// Total weight slots (`k_max` in 1D, `k_max^2` in 2D).
    pub mode_count: usize,
}

impl ModeSpec {
    pub fn one_d(n: usize, k_max: usize, d_in: usize, d_out: usize) -> Result<Self> {
        if k_max == 0 || k_max > n / 2 {
            return Err(Error::Parameter(format!(
                "k_max {k_max} out of range for grid {n} (need 1..={})",
                n / 2
            )));
        }
        Ok(ModeSpec {
            block: fft::half_len(n),
            kept: (0..k_max).map(|k| (k, k)).collect(),
            d_in,
            d_out,
            mode_count: k_max,
        })
    }

    pub fn two_d(n: usize, k_max: usize, d_in: usize, d_out: usize) -> Result<Self> {
        if k_max == 0 || k_max > n / 2 {
            return Err(Error::Parameter(format!(
                "k_max {k_max} out of range for grid {n}x{n} (need 1..={})",
                n / 2
            )));
        }
        let h = fft::half_len(n);
        let mut kept = Vec::with_capacity(k_max * k_max);
        for s1 in 0..k_max {
            let signed = if s1 <= k_max / 2 {
                s1 as isize
            } else {
                s1 as isize - k_max as isize
            };
            let k1 = signed.rem_euclid(n as isize) as usize;
            for s2 in 0..k_max {
                kept.push((k1 * h + s2, s1 * k_max + s2));
            }
        }
        Ok(ModeSpec {
            block: n * h,
            kept,
            d_in,
            d_out,
            mode_count: k_max * k_max,
        })
    }
}

enum Op {
    Leaf,
    Input,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    Scale(NodeId, f64),
    Matmul(NodeId, NodeId),
    MatmulNT(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    AddScalar(NodeId, NodeId),
    Activation(NodeId, Activation),
    Mean(NodeId),
    RfftCols { x: NodeId, n: usize },
    IrfftCols { x: NodeId, n: usize },
    Rfft2Cols { x: NodeId, n: usize },
    Irfft2Cols { x: NodeId, n: usize },
    ModeMix { z: NodeId, weights: NodeId, spec: ModeSpec },
}

struct Node {
    value: Value,
    op: Op,
}

/// Gradients of the recorded scalar loss with respect to every leaf.
pub struct Gradients {
    grads: Vec<Option<Value>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Value> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Value> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// The recorded computation graph of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Work sizes below this run serially; above, rayon splits disjoint output
/// blocks. The cutoff only affects speed, never values.
const PAR_THRESHOLD: usize = 1 << 15;

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    pub fn real(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes[id.0].value.as_real()
    }

    fn push(&mut self, value: Value, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers a trainable parameter; its gradient is retained by backward.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(Value::Real(t), Op::Leaf)
    }

    pub fn leaf_complex(&mut self, t: ComplexTensor) -> NodeId {
        self.push(Value::Complex(t), Op::Leaf)
    }

    pub fn leaf_value(&mut self, v: Value) -> NodeId {
        self.push(v, Op::Leaf)
    }

    /// Registers a non-trainable input (batch data, coordinates).
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Value::Real(t), Op::Input)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.real(a)?.add(self.real(b)?)?;
        Ok(self.push(Value::Real(out), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.real(a)?.sub(self.real(b)?)?;
        Ok(self.push(Value::Real(out), Op::Sub(a, b)))
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.real(a)?.mul_elem(self.real(b)?)?;
        Ok(self.push(Value::Real(out), Op::MulElem(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let out = self.real(a)?.scale(c);
        Ok(self.push(Value::Real(out), Op::Scale(a, c)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.real(a)?, self.real(b)?);
        let out = par_matmul(av, bv)?;
        Ok(self.push(Value::Real(out), Op::Matmul(a, b)))
    }

    /// `a * b^T`; the contraction used to pair branch and trunk features.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.real(a)?.matmul_nt(self.real(b)?)?;
        Ok(self.push(Value::Real(out), Op::MatmulNT(a, b)))
    }

    /// Adds a `[c]` bias to every row of an `[r, c]` matrix.
    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.real(a)?, self.real(bias)?);
        if av.shape().len() != 2 || bv.len() != av.cols() {
            return Err(Error::Shape(format!(
                "add_row_bias: {:?} with bias {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let cols = av.cols();
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(cols) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(Value::Real(out), Op::AddRowBias(a, bias)))
    }

    /// Broadcasts a one-element node over every entry of `a`.
    pub fn add_scalar(&mut self, a: NodeId, scalar: NodeId) -> Result<NodeId> {
        let s = self.real(scalar)?.item()?;
        let out = self.real(a)?.add_scalar(s);
        Ok(self.push(Value::Real(out), Op::AddScalar(a, scalar)))
    }

    pub fn activation(&mut self, a: NodeId, kind: Activation) -> Result<NodeId> {
        let av = self.real(a)?;
        let out = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|&x| kind.apply(x)).collect(),
        )?;
        Ok(self.push(Value::Real(out), Op::Activation(a, kind)))
    }

    /// Mean over all entries; produces a scalar node.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.real(a)?;
        let m = av.sum() / av.len() as f64;
        if !m.is_finite() {
            return Err(Error::NonFinite("mean".into()));
        }
        Ok(self.push(Value::Real(Tensor::scalar(m)), Op::Mean(a)))
    }

    /// Mean squared error between two equally-shaped nodes.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let d = self.sub(pred, target)?;
        let sq = self.mul_elem(d, d)?;
        self.mean(sq)
    }

    /// Per-sample, per-channel forward real FFT along a grid of length `n`.
    /// Input `[b*n, c]`, output `[b*(n/2+1), c]` complex.
    pub fn rfft_cols(&mut self, x: NodeId, n: usize) -> Result<NodeId> {
        let xv = self.real(x)?;
        let (b, c) = split_rows(xv, n)?;
        let h = fft::half_len(n);
        let mut re = vec![0.0; b * h * c];
        let mut im = vec![0.0; b * h * c];
        batch_cols_1d(xv.data(), &mut re, &mut im, b, n, c, |col, scratch| {
            let (r, i) = fft::rfft(col).expect("n checked");
            scratch.0.copy_from_slice(&r);
            scratch.1.copy_from_slice(&i);
        });
        let out = ComplexTensor::new(vec![b * h, c], re, im)?;
        Ok(self.push(Value::Complex(out), Op::RfftCols { x, n }))
    }

    /// Inverse of [`Tape::rfft_cols`].
    pub fn irfft_cols(&mut self, x: NodeId, n: usize) -> Result<NodeId> {
        let xv = self.value(x).as_complex()?;
        let h = fft::half_len(n);
        let (rows, c) = (xv.shape()[0], xv.shape()[1]);
        if rows % h != 0 {
            return Err(Error::Shape(format!(
                "irfft_cols: {rows} rows not divisible by {h}"
            )));
        }
        let b = rows / h;
        let mut out = vec![0.0; b * n * c];
        batch_cols_1d_inv(xv.re(), xv.im(), &mut out, b, n, c, |re, im, dst| {
            dst.copy_from_slice(&fft::irfft(re, im, n).expect("n checked"));
        });
        let t = Tensor::new(vec![b * n, c], out)?;
        Ok(self.push(Value::Real(t), Op::IrfftCols { x, n }))
    }

    /// Per-sample, per-channel 2D real FFT over `n x n` grids.
    /// Input `[b*n*n, c]`, output `[b*n*(n/2+1), c]` complex.
    pub fn rfft2_cols(&mut self, x: NodeId, n: usize) -> Result<NodeId> {
        let xv = self.real(x)?;
        let (b, c) = split_rows(xv, n * n)?;
        let h = fft::half_len(n);
        let block = n * h;
        let mut re = vec![0.0; b * block * c];
        let mut im = vec![0.0; b * block * c];
        batch_cols_nd(
            xv.data(),
            &mut re,
            &mut im,
            b,
            n * n,
            block,
            c,
            |col, scratch| {
                let (r, i) = fft::rfft2(col, n).expect("n checked");
                scratch.0.copy_from_slice(&r);
                scratch.1.copy_from_slice(&i);
            },
        );
        let out = ComplexTensor::new(vec![b * block, c], re, im)?;
        Ok(self.push(Value::Complex(out), Op::Rfft2Cols { x, n }))
    }

    /// Inverse of [`Tape::rfft2_cols`].
    pub fn irfft2_cols(&mut self, x: NodeId, n: usize) -> Result<NodeId> {
        let xv = self.value(x).as_complex()?;
        let h = fft::half_len(n);
        let block = n * h;
        let (rows, c) = (xv.shape()[0], xv.shape()[1]);
        if rows % block != 0 {
            return Err(Error::Shape(format!(
                "irfft2_cols: {rows} rows not divisible by {block}"
            )));
        }
        let b = rows / block;
        let mut out = vec![0.0; b * n * n * c];
        batch_cols_nd_inv(xv.re(), xv.im(), &mut out, b, block, n * n, c, |re, im, dst| {
            dst.copy_from_slice(&fft::irfft2(re, im, n).expect("n checked"));
        });
        let t = Tensor::new(vec![b * n * n, c], out)?;
        Ok(self.push(Value::Real(t), Op::Irfft2Cols { x, n }))
    }

    /// Multiplies the kept Fourier modes channel-wise by complex weights and
    /// truncates the rest: `out[row] = W[slot] . z[row]` for kept rows,
    /// zero otherwise.
    pub fn mode_mix(&mut self, z: NodeId, weights: NodeId, spec: ModeSpec) -> Result<NodeId> {
        let zv = self.value(z).as_complex()?;
        let wv = self.value(weights).as_complex()?;
        let (rows, c) = (zv.shape()[0], zv.shape()[1]);
        if c != spec.d_in || rows % spec.block != 0 {
            return Err(Error::Shape(format!(
                "mode_mix: input [{rows}, {c}] vs block {} / d_in {}",
                spec.block, spec.d_in
            )));
        }
        if wv.len() != spec.mode_count * spec.d_out * spec.d_in {
            return Err(Error::Shape(format!(
                "mode_mix: weight count {} vs {} modes x {} x {}",
                wv.len(),
                spec.mode_count,
                spec.d_out,
                spec.d_in
            )));
        }
        let b = rows / spec.block;
        let mut out = ComplexTensor::zeros(vec![b * spec.block, spec.d_out]);
        {
            let block_out = spec.block * spec.d_out;
            let block_in = spec.block * spec.d_in;
            let (zre, zim) = (zv.re(), zv.im());
            let (wre, wim) = (wv.re(), wv.im());
            let (ore_all, oim_all) = out.planes_mut();
            ore_all
                .par_chunks_mut(block_out)
                .zip(oim_all.par_chunks_mut(block_out))
                .enumerate()
                .for_each(|(bi, (ore, oim))| {
                    let zre = &zre[bi * block_in..(bi + 1) * block_in];
                    let zim = &zim[bi * block_in..(bi + 1) * block_in];
                    for &(row, slot) in &spec.kept {
                        let zr = &zre[row * spec.d_in..(row + 1) * spec.d_in];
                        let zi = &zim[row * spec.d_in..(row + 1) * spec.d_in];
                        for i in 0..spec.d_out {
                            let wbase = (slot * spec.d_out + i) * spec.d_in;
                            let mut acc_re = 0.0;
                            let mut acc_im = 0.0;
                            for j in 0..spec.d_in {
                                let (wr, wi) = (wre[wbase + j], wim[wbase + j]);
                                acc_re += wr * zr[j] - wi * zi[j];
                                acc_im += wr * zi[j] + wi * zr[j];
                            }
                            ore[row * spec.d_out + i] = acc_re;
                            oim[row * spec.d_out + i] = acc_im;
                        }
                    }
                });
        }
        Ok(self.push(Value::Complex(out), Op::ModeMix { z, weights, spec }))
    }

    /// Reverse sweep from a scalar loss node. Returns gradients for every
    /// leaf; intermediate gradients are freed as soon as they are consumed.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        match self.real(loss) {
            Ok(t) if t.len() == 1 => {}
            _ => {
                return Err(Error::Contract(
                    "backward requires a scalar real loss node".into(),
                ))
            }
        }
        let mut grads: Vec<Option<Value>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Value::Real(Tensor::scalar(1.0)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let keep = matches!(node.op, Op::Leaf);
            let g = if keep {
                grads[idx].clone()
            } else {
                grads[idx].take()
            };
            let Some(g) = g else { continue };
            self.backward_one(idx, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn backward_one(&self, idx: usize, g: &Value, grads: &mut Vec<Option<Value>>) -> Result<()> {
        let acc = |grads: &mut Vec<Option<Value>>, id: NodeId, delta: Value| {
            match &mut grads[id.0] {
                Some(existing) => existing.accumulate(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[idx].op {
            Op::Leaf | Op::Input => {}
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, Value::Real(g.as_real()?.scale(-1.0)));
            }
            Op::MulElem(a, b) => {
                let gv = g.as_real()?;
                let (av, bv) = (self.real(*a)?, self.real(*b)?);
                acc(grads, *a, Value::Real(gv.mul_elem(bv)?));
                acc(grads, *b, Value::Real(gv.mul_elem(av)?));
            }
            Op::Scale(a, c) => {
                acc(grads, *a, Value::Real(g.as_real()?.scale(*c)));
            }
            Op::Matmul(a, b) => {
                let gv = g.as_real()?;
                let (av, bv) = (self.real(*a)?, self.real(*b)?);
                acc(grads, *a, Value::Real(gv.matmul_nt(bv)?));
                acc(grads, *b, Value::Real(av.matmul_tn(gv)?));
            }
            Op::MatmulNT(a, b) => {
                let gv = g.as_real()?;
                let (av, bv) = (self.real(*a)?, self.real(*b)?);
                acc(grads, *a, Value::Real(par_matmul(gv, bv)?));
                acc(grads, *b, Value::Real(gv.matmul_tn(av)?));
            }
            Op::AddRowBias(a, bias) => {
                let gv = g.as_real()?;
                let cols = gv.cols();
                let mut bg = Tensor::zeros(vec![cols]);
                for row in gv.data().chunks(cols) {
                    for (o, v) in bg.data_mut().iter_mut().zip(row) {
                        *o += v;
                    }
                }
                acc(grads, *a, g.clone());
                acc(grads, *bias, Value::Real(bg));
            }
            Op::AddScalar(a, s) => {
                let gv = g.as_real()?;
                acc(grads, *a, g.clone());
                acc(grads, *s, Value::Real(Tensor::scalar(gv.sum())));
            }
            Op::Activation(a, kind) => {
                let gv = g.as_real()?;
                let av = self.real(*a)?;
                let data: Vec<f64> = gv
                    .data()
                    .iter()
                    .zip(av.data())
                    .map(|(&go, &x)| go * kind.derivative(x))
                    .collect();
                acc(grads, *a, Value::Real(Tensor::new(av.shape().to_vec(), data)?));
            }
            Op::Mean(a) => {
                let gs = g.as_real()?.item()?;
                let av = self.real(*a)?;
                let v = gs / av.len() as f64;
                acc(
                    grads,
                    *a,
                    Value::Real(Tensor::filled(av.shape().to_vec(), v)),
                );
            }
            Op::RfftCols { x, n } => {
                let gv = g.as_complex()?;
                let xv = self.real(*x)?;
                let (b, c) = split_rows(xv, *n)?;
                let mut gx = vec![0.0; b * n * c];
                batch_cols_nd_inv(gv.re(), gv.im(), &mut gx, b, fft::half_len(*n), *n, c, |re, im, dst| {
                    dst.copy_from_slice(&fft::rfft_adjoint(re, im, *n));
                });
                acc(grads, *x, Value::Real(Tensor::new(vec![b * n, c], gx)?));
            }
            Op::IrfftCols { x, n } => {
                let gv = g.as_real()?;
                let h = fft::half_len(*n);
                let (rows, c) = (gv.rows(), gv.cols());
                let b = rows / n;
                let mut gre = vec![0.0; b * h * c];
                let mut gim = vec![0.0; b * h * c];
                batch_cols_1d(gv.data(), &mut gre, &mut gim, b, *n, c, |col, scratch| {
                    let (r, i) = fft::irfft_adjoint(col).expect("n checked");
                    scratch.0.copy_from_slice(&r);
                    scratch.1.copy_from_slice(&i);
                });
                acc(
                    grads,
                    *x,
                    Value::Complex(ComplexTensor::new(vec![b * h, c], gre, gim)?),
                );
            }
            Op::Rfft2Cols { x, n } => {
                let gv = g.as_complex()?;
                let xv = self.real(*x)?;
                let (b, c) = split_rows(xv, n * n)?;
                let h = fft::half_len(*n);
                let mut gx = vec![0.0; b * n * n * c];
                batch_cols_nd_inv(gv.re(), gv.im(), &mut gx, b, n * h, n * n, c, |re, im, dst| {
                    dst.copy_from_slice(&fft::rfft2_adjoint(re, im, *n));
                });
                acc(grads, *x, Value::Real(Tensor::new(vec![b * n * n, c], gx)?));
            }
            Op::Irfft2Cols { x, n } => {
                let gv = g.as_real()?;
                let h = fft::half_len(*n);
                let block = n * h;
                let (rows, c) = (gv.rows(), gv.cols());
                let b = rows / (n * n);
                let mut gre = vec![0.0; b * block * c];
                let mut gim = vec![0.0; b * block * c];
                batch_cols_nd(gv.data(), &mut gre, &mut gim, b, n * n, block, c, |col, scratch| {
                    let (r, i) = fft::irfft2_adjoint(col, *n).expect("n checked");
                    scratch.0.copy_from_slice(&r);
                    scratch.1.copy_from_slice(&i);
                });
                acc(
                    grads,
                    *x,
                    Value::Complex(ComplexTensor::new(vec![b * block, c], gre, gim)?),
                );
            }
            Op::ModeMix { z, weights, spec } => {
                let gv = g.as_complex()?;
                let zv = self.value(*z).as_complex()?;
                let wv = self.value(*weights).as_complex()?;
                let b = zv.shape()[0] / spec.block;
                let (gz, gw) = mode_mix_backward(gv, zv, wv, spec, b);
                acc(grads, *z, Value::Complex(gz));
                acc(grads, *weights, Value::Complex(gw));
            }
        }
        Ok(())
    }
}

fn split_rows(x: &Tensor, per_sample: usize) -> Result<(usize, usize)> {
    if x.shape().len() != 2 || x.rows() % per_sample != 0 {
        return Err(Error::Shape(format!(
            "expected [b*{per_sample}, c] matrix, got {:?}",
            x.shape()
        )));
    }
    Ok((x.rows() / per_sample, x.cols()))
}

fn par_matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "matmul: lhs {:?} x rhs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    if m * k * n < PAR_THRESHOLD {
        return a.matmul(b);
    }
    let mut out = Tensor::zeros(vec![m, n]);
    let rows_per_task = (m / (4 * rayon::current_num_threads().max(1))).max(1);
    out.data_mut()
        .par_chunks_mut(rows_per_task * n)
        .enumerate()
        .for_each(|(chunk, o)| {
            let r0 = chunk * rows_per_task;
            let rows = o.len() / n;
            matmul_into(&a.data()[r0 * k..(r0 + rows) * k], b.data(), o, rows, k, n);
        });
    out.check_finite("matmul")?;
    Ok(out)
}

/// Runs `f` over each (sample, channel) column of a `[b*n, c]` real matrix,
/// writing into per-column complex scratch that is scattered to `[b*h, c]`.
/// Samples are processed in parallel; each writes only its own block.
fn batch_cols_1d(
    x: &[f64],
    out_re: &mut [f64],
    out_im: &mut [f64],
    b: usize,
    n: usize,
    c: usize,
    f: impl Fn(&[f64], (&mut [f64], &mut [f64])) + Sync,
) {
    let h = out_re.len() / (b * c);
    out_re
        .par_chunks_mut(h * c)
        .zip(out_im.par_chunks_mut(h * c))
        .enumerate()
        .for_each(|(bi, (ore, oim))| {
            let block = &x[bi * n * c..(bi + 1) * n * c];
            let mut col = vec![0.0; n];
            let mut sre = vec![0.0; h];
            let mut sim = vec![0.0; h];
            for ch in 0..c {
                for j in 0..n {
                    col[j] = block[j * c + ch];
                }
                f(&col, (&mut sre, &mut sim));
                for k in 0..h {
                    ore[k * c + ch] = sre[k];
                    oim[k * c + ch] = sim[k];
                }
            }
        });
}

/// Complex-to-real counterpart of [`batch_cols_1d`].
fn batch_cols_1d_inv(
    re: &[f64],
    im: &[f64],
    out: &mut [f64],
    b: usize,
    n: usize,
    c: usize,
    f: impl Fn(&[f64], &[f64], &mut [f64]) + Sync,
) {
    let h = re.len() / (b * c);
    out.par_chunks_mut(n * c).enumerate().for_each(|(bi, o)| {
        let bre = &re[bi * h * c..(bi + 1) * h * c];
        let bim = &im[bi * h * c..(bi + 1) * h * c];
        let mut cre = vec![0.0; h];
        let mut cim = vec![0.0; h];
        let mut dst = vec![0.0; n];
        for ch in 0..c {
            for k in 0..h {
                cre[k] = bre[k * c + ch];
                cim[k] = bim[k * c + ch];
            }
            f(&cre, &cim, &mut dst);
            for j in 0..n {
                o[j * c + ch] = dst[j];
            }
        }
    });
}

/// Real input blocks of `in_block` rows to complex output blocks of
/// `out_block` rows, per sample and channel.
fn batch_cols_nd(
    x: &[f64],
    out_re: &mut [f64],
    out_im: &mut [f64],
    b: usize,
    in_block: usize,
    out_block: usize,
    c: usize,
    f: impl Fn(&[f64], (&mut [f64], &mut [f64])) + Sync,
) {
    debug_assert_eq!(x.len(), b * in_block * c);
    out_re
        .par_chunks_mut(out_block * c)
        .zip(out_im.par_chunks_mut(out_block * c))
        .enumerate()
        .for_each(|(bi, (ore, oim))| {
            let block = &x[bi * in_block * c..(bi + 1) * in_block * c];
            let mut col = vec![0.0; in_block];
            let mut sre = vec![0.0; out_block];
            let mut sim = vec![0.0; out_block];
            for ch in 0..c {
                for j in 0..in_block {
                    col[j] = block[j * c + ch];
                }
                f(&col, (&mut sre, &mut sim));
                for k in 0..out_block {
                    ore[k * c + ch] = sre[k];
                    oim[k * c + ch] = sim[k];
                }
            }
        });
}

/// Complex input blocks of `in_block` rows to real output blocks of
/// `out_block` rows, per sample and channel.
fn batch_cols_nd_inv(
    re: &[f64],
    im: &[f64],
    out: &mut [f64],
    b: usize,
    in_block: usize,
    out_block: usize,
    c: usize,
    f: impl Fn(&[f64], &[f64], &mut [f64]) + Sync,
) {
    debug_assert_eq!(re.len(), b * in_block * c);
    out.par_chunks_mut(out_block * c)
        .enumerate()
        .for_each(|(bi, o)| {
            let bre = &re[bi * in_block * c..(bi + 1) * in_block * c];
            let bim = &im[bi * in_block * c..(bi + 1) * in_block * c];
            let mut cre = vec![0.0; in_block];
            let mut cim = vec![0.0; in_block];
            let mut dst = vec![0.0; out_block];
            for ch in 0..c {
                for k in 0..in_block {
                    cre[k] = bre[k * c + ch];
                    cim[k] = bim[k * c + ch];
                }
                f(&cre, &cim, &mut dst);
                for j in 0..out_block {
                    o[j * c + ch] = dst[j];
                }
            }
        });
}

fn mode_mix_backward(
    g: &ComplexTensor,
    z: &ComplexTensor,
    w: &ComplexTensor,
    spec: &ModeSpec,
    b: usize,
) -> (ComplexTensor, ComplexTensor) {
    let block_in = spec.block * spec.d_in;
    let block_out = spec.block * spec.d_out;
    let mut gz = ComplexTensor::zeros(vec![b * spec.block, spec.d_in]);
    {
        let (gzre_all, gzim_all) = gz.planes_mut();
        gzre_all
            .par_chunks_mut(block_in)
            .zip(gzim_all.par_chunks_mut(block_in))
            .enumerate()
            .for_each(|(bi, (gzre, gzim))| {
                let gre = &g.re()[bi * block_out..(bi + 1) * block_out];
                let gim = &g.im()[bi * block_out..(bi + 1) * block_out];
                for &(row, slot) in &spec.kept {
                    for j in 0..spec.d_in {
                        let mut acc_re = 0.0;
                        let mut acc_im = 0.0;
                        for i in 0..spec.d_out {
                            let widx = (slot * spec.d_out + i) * spec.d_in + j;
                            let (wr, wi) = (w.re()[widx], w.im()[widx]);
                            let (gr, gi) = (gre[row * spec.d_out + i], gim[row * spec.d_out + i]);
                            // g * conj(w)
                            acc_re += gr * wr + gi * wi;
                            acc_im += gi * wr - gr * wi;
                        }
                        gzre[row * spec.d_in + j] = acc_re;
                        gzim[row * spec.d_in + j] = acc_im;
                    }
                }
            });
    }
    let mut gw = ComplexTensor::zeros(w.shape().to_vec());
    {
        let stride = spec.d_out * spec.d_in;
        let (gwre_all, gwim_all) = gw.planes_mut();
        // One task per kept mode slot; the sum over samples stays sequential
        // inside each task so results do not depend on thread count.
        let kept = &spec.kept;
        gwre_all
            .par_chunks_mut(stride)
            .zip(gwim_all.par_chunks_mut(stride))
            .enumerate()
            .for_each(|(slot, (gwre, gwim))| {
                let Some(&(row, _)) = kept.iter().find(|&&(_, s)| s == slot) else {
                    return;
                };
                for bi in 0..b {
                    let gre = &g.re()[bi * block_out..(bi + 1) * block_out];
                    let gim = &g.im()[bi * block_out..(bi + 1) * block_out];
                    let zre = &z.re()[bi * block_in..(bi + 1) * block_in];
                    let zim = &z.im()[bi * block_in..(bi + 1) * block_in];
                    for i in 0..spec.d_out {
                        let (gr, gi) = (gre[row * spec.d_out + i], gim[row * spec.d_out + i]);
                        for j in 0..spec.d_in {
                            let (zr, zi) = (zre[row * spec.d_in + j], zim[row * spec.d_in + j]);
                            // g * conj(z)
                            gwre[i * spec.d_in + j] += gr * zr + gi * zi;
                            gwim[i * spec.d_in + j] += gi * zr - gr * zi;
                        }
                    }
                }
            });
    }
    (gz, gw)
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

/// Compares tape gradients of `f` against central finite differences at
/// step `h`, coordinate by coordinate, for a single real parameter tensor.
/// Returns the largest relative error.
pub fn grad_check<F>(theta: &Tensor, h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    if h <= 0.0 {
        return Err(Error::Parameter("grad_check needs h > 0".into()));
    }
    let mut params = BTreeMap::new();
    params.insert("theta".to_string(), Value::Real(theta.clone()));
    grad_check_many(&params, h, |tape, ids| f(tape, ids["theta"]))
}

/// Multi-parameter version of [`grad_check`]; complex parameters are
/// perturbed on both planes.
pub fn grad_check_many<F>(params: &BTreeMap<String, Value>, h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &BTreeMap<String, NodeId>) -> Result<NodeId>,
{
    if h <= 0.0 {
        return Err(Error::Parameter("grad_check needs h > 0".into()));
    }
    let eval = |p: &BTreeMap<String, Value>| -> Result<(f64, BTreeMap<String, Value>)> {
        let mut tape = Tape::new();
        let mut ids = BTreeMap::new();
        for (name, v) in p {
            ids.insert(name.clone(), tape.leaf_value(v.clone()));
        }
        let loss = f(&mut tape, &ids)?;
        let value = tape.real(loss)?.item()?;
        let mut grads = tape.backward(loss)?;
        let mut out = BTreeMap::new();
        for (name, id) in &ids {
            out.insert(
                name.clone(),
                grads.take(*id).unwrap_or_else(|| p[name].zeros_like()),
            );
        }
        Ok((value, out))
    };

    let (_, analytic) = eval(params)?;
    let mut worst: f64 = 0.0;
    for (name, value) in params {
        let count = value.scalar_count();
        for coord in 0..count {
            let mut plus = params.clone();
            perturb(plus.get_mut(name).unwrap(), coord, h);
            let mut minus = params.clone();
            perturb(minus.get_mut(name).unwrap(), coord, -h);
            let (fp, _) = eval(&plus)?;
            let (fm, _) = eval(&minus)?;
            let numeric = (fp - fm) / (2.0 * h);
            let a = read_coord(&analytic[name], coord);
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

fn perturb(v: &mut Value, coord: usize, delta: f64) {
    match v {
        Value::Real(t) => t.data_mut()[coord] += delta,
        Value::Complex(t) => {
            let n = t.len();
            let (re, im) = t.planes_mut();
            if coord < n {
                re[coord] += delta;
            } else {
                im[coord - n] += delta;
            }
        }
    }
}

fn read_coord(v: &Value, coord: usize) -> f64 {
    match v {
        Value::Real(t) => t.data()[coord],
        Value::Complex(t) => {
            let n = t.len();
            if coord < n {
                t.re()[coord]
            } else {
                t.im()[coord - n]
            }
        }
    }
}
