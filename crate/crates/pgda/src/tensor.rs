//! Dense float64 tensors in row-major layout.
//!
//! Tensors are immutable values once constructed: every operation returns a
//! new tensor, so sharing across threads for reading is always safe. Values
//! are checked for finiteness at construction and after the operations that
//! can realistically overflow (matrix products, transcendental maps); an
//! overflow surfaces as [`Error::NonFinite`] instead of propagating `inf`
//! through a training run.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense real tensor: a shape plus row-major `f64` storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating the shape/data contract and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {len} values, got {}",
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.check_finite("Tensor::new")?;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
        }
    }

    /// A single-element tensor, used for scalar nodes (losses, biases).
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub(crate) fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} values) to {shape:?}",
                self.shape,
                self.data.len()
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    /// Elementwise sum; shapes must agree exactly.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul_elem", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v + c).collect(),
        }
    }

    /// Sum of `coeff * tensor` terms; all shapes must agree.
    pub fn linear_combination(terms: &[(f64, &Tensor)]) -> Result<Tensor> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Contract("linear_combination of no terms".into()))?;
        let mut out = Tensor::zeros(first.1.shape.clone());
        for &(c, t) in terms {
            if t.shape != out.shape {
                return Err(Error::Shape(format!(
                    "linear_combination: {:?} vs {:?}",
                    out.shape, t.shape
                )));
            }
            for (o, v) in out.data.iter_mut().zip(&t.data) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Matrix product of two rank-2 tensors. Inner extents must agree.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::Shape(format!(
                "matmul: lhs {:?} x rhs {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        let t = Tensor {
            shape: vec![m, n],
            data: out,
        };
        t.check_finite("matmul")?;
        Ok(t)
    }

    /// `self * other^T` for rank-2 tensors of shapes `[m,k]` and `[n,k]`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[1] {
            return Err(Error::Shape(format!(
                "matmul_nt: lhs {:?} x rhs^T {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[0]);
        let mut out = vec![0.0; m * n];
        matmul_nt_into(&self.data, &other.data, &mut out, m, k, n);
        let t = Tensor {
            shape: vec![m, n],
            data: out,
        };
        t.check_finite("matmul_nt")?;
        Ok(t)
    }

    /// `self^T * other` for rank-2 tensors of shapes `[k,m]` and `[k,n]`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[0] != other.shape[0] {
            return Err(Error::Shape(format!(
                "matmul_tn: lhs^T {:?} x rhs {:?}",
                self.shape, other.shape
            )));
        }
        let (k, m, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        // out[i,j] = sum_l a[l,i] * b[l,j]; accumulate row by row of the inputs.
        for l in 0..k {
            let arow = &self.data[l * m..(l + 1) * m];
            let brow = &other.data[l * n..(l + 1) * n];
            for (i, &a) in arow.iter().enumerate() {
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        let t = Tensor {
            shape: vec![m, n],
            data: out,
        };
        t.check_finite("matmul_tn")?;
        Ok(t)
    }
}

/// `out[m,n] += a[m,k] * b[k,n]`, cache-friendly ikj loop order.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m,n] += a[m,k] * b[n,k]^T`; dot products over contiguous rows.
pub(crate) fn matmul_nt_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// Dense complex tensor stored as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != re.len() || re.len() != im.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {len} values, got re {} / im {}",
                re.len(),
                im.len()
            )));
        }
        if !re.iter().chain(im.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ComplexTensor::new".into()));
        }
        Ok(ComplexTensor { shape, re, im })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        ComplexTensor {
            shape,
            re: vec![0.0; len],
            im: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub(crate) fn planes_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.re, &mut self.im)
    }

    pub fn max_abs_diff(&self, other: &ComplexTensor) -> f64 {
        let dre = self
            .re
            .iter()
            .zip(&other.re)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dim = self
            .im
            .iter()
            .zip(&other.im)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        dre.max(dim)
    }
}

impl Tensor {
    fn zip_with(&self, other: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}
