//! Gaussian random field sampling on equispaced grids.
//!
//! Input functions are drawn from a GRF with constant mean `A` and RBF
//! covariance `k_l(x1, x2) = exp(-|x1 - x2|^2 / (2 l^2))`; 2D grids use the
//! isotropic Euclidean distance. Sampling is exact: Cholesky of the full
//! kernel matrix (grids here are at most 64^2 points, so O(n^3) is cheap),
//! then `A + L z` with `z` standard normal from a seeded stream. The same
//! `(config, seed)` always reproduces a sample bit-exactly.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::rng::Stream;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Highest jitter tried before giving up on a factorization.
pub const MAX_JITTER: f64 = 1e-4;

fn default_jitter() -> f64 {
    1e-10
}

/// Mean, length-scale, grid and numerical jitter of one GRF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfConfig {
    /// Constant mean `A` of the field.
    pub mean: f64,
    /// RBF length-scale `l > 0`.
    pub length_scale: f64,
    pub grid: GridSpec,
    /// Added to the kernel diagonal before factorization; escalated x10 on
    /// failure up to [`MAX_JITTER`]. RBF kernels on small grids with large
    /// `l` are numerically near-singular.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl GrfConfig {
    pub fn new(mean: f64, length_scale: f64, grid: GridSpec) -> Result<Self> {
        let cfg = GrfConfig {
            mean,
            length_scale,
            grid,
            jitter: default_jitter(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0) {
            return Err(Error::Parameter(format!(
                "length_scale must be > 0, got {}",
                self.length_scale
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Parameter(format!(
                "jitter must be >= 0, got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// RBF kernel matrix over a set of points (rows of `points`, any dimension).
/// Symmetric with unit diagonal by construction.
pub fn kernel_matrix(points: &Tensor, length_scale: f64) -> Result<Tensor> {
    if !(length_scale > 0.0) {
        return Err(Error::Parameter(format!(
            "length_scale must be > 0, got {length_scale}"
        )));
    }
    let n = points.rows();
    let dim = points.cols();
    let inv = 1.0 / (2.0 * length_scale * length_scale);
    let mut k = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        k.data_mut()[i * n + i] = 1.0;
        for j in 0..i {
            let mut d2 = 0.0;
            for d in 0..dim {
                let diff = points.at2(i, d) - points.at2(j, d);
                d2 += diff * diff;
            }
            let v = (-d2 * inv).exp();
            k.data_mut()[i * n + j] = v;
            k.data_mut()[j * n + i] = v;
        }
    }
    Ok(k)
}

/// Lower Cholesky factor of `k + jitter I`. If a pivot fails, the jitter is
/// escalated x10 (from 1e-10 when starting at zero) up to [`MAX_JITTER`];
/// the error names the final jitter tried.
pub fn cholesky(k: &Tensor, jitter: f64) -> Result<Tensor> {
    let n = k.rows();
    if k.shape().len() != 2 || k.cols() != n {
        return Err(Error::Shape(format!(
            "cholesky needs a square matrix, got {:?}",
            k.shape()
        )));
    }
    for i in 0..n {
        for j in 0..i {
            if (k.at2(i, j) - k.at2(j, i)).abs() > 1e-12 {
                return Err(Error::Contract(format!(
                    "cholesky input not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut jit = jitter.max(0.0);
    loop {
        match try_cholesky(k, jit) {
            Some(l) => return Ok(l),
            None => {
                if jit >= MAX_JITTER {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite even at jitter {jit:e}"
                    )));
                }
                jit = if jit == 0.0 { 1e-10 } else { jit * 10.0 };
                jit = jit.min(MAX_JITTER);
            }
        }
    }
}

fn try_cholesky(k: &Tensor, jitter: f64) -> Option<Tensor> {
    let n = k.rows();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = k.at2(i, j);
            if i == j {
                sum += jitter;
            }
            for p in 0..j {
                sum -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Tensor::new(vec![n, n], l).ok()
}

/// A GRF with its kernel factorization cached, ready to draw samples.
pub struct GrfSampler {
    config: GrfConfig,
    chol: Tensor,
}

impl GrfSampler {
    pub fn new(config: GrfConfig) -> Result<Self> {
        config.validate()?;
        let points = config.grid.coords();
        let k = kernel_matrix(&points, config.length_scale)?;
        let chol = cholesky(&k, config.jitter)?;
        Ok(GrfSampler { config, chol })
    }

    pub fn config(&self) -> &GrfConfig {
        &self.config
    }

    /// Draws `mean + L z`; a pure function of `(config, seed)`.
    pub fn sample(&self, seed: u64) -> GridFunction {
        let n = self.config.grid.point_count();
        let mut z = vec![0.0; n];
        Stream::new(seed).fill_normal(&mut z);
        let l = self.chol.data();
        let mut values = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.config.mean;
            let row = &l[i * n..i * n + i + 1];
            for (lv, zv) in row.iter().zip(&z) {
                acc += lv * zv;
            }
            values[i] = acc;
        }
        GridFunction {
            grid: self.config.grid,
            values: Tensor::new(vec![n], values).expect("finite sample"),
        }
    }
}

/// One-shot sampling without keeping the factorization.
pub fn sample(config: &GrfConfig, seed: u64) -> Result<GridFunction> {
    Ok(GrfSampler::new(*config)?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn kernel_unit_diagonal_and_known_value() {
        let pts = Tensor::new(vec![2, 1], vec![0.0, 0.2]).unwrap();
        let k = kernel_matrix(&pts, 0.2).unwrap();
        assert_eq!(k.at2(0, 0), 1.0);
        assert_eq!(k.at2(1, 1), 1.0);
        // exp(-0.04 / (2 * 0.04)) = exp(-0.5)
        assert!((k.at2(0, 1) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((k.at2(0, 1) - 0.606_530_659_712_633_4).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_exactly_symmetric() {
        let grid = GridSpec::one_d(5).unwrap();
        let k = kernel_matrix(&grid.coords(), 0.3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(k.at2(i, j), k.at2(j, i));
            }
        }
    }

    #[test]
    fn kernel_rejects_bad_length_scale() {
        let pts = Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap();
        assert!(kernel_matrix(&pts, 0.0).is_err());
        assert!(kernel_matrix(&pts, -1.0).is_err());
    }

    #[test]
    fn cholesky_identity_and_hand_example() {
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let l = cholesky(&eye, 0.0).unwrap();
        assert!(l.max_abs_diff(&eye) < 1e-12);

        let k = Tensor::new(vec![2, 2], vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = cholesky(&k, 0.0).unwrap();
        assert!((l.at2(0, 0) - 2.0).abs() < 1e-12);
        assert!((l.at2(0, 1) - 0.0).abs() < 1e-12);
        assert!((l.at2(1, 0) - 1.0).abs() < 1e-12);
        assert!((l.at2(1, 1) - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs_kernel() {
        let grid = GridSpec::one_d(16).unwrap();
        let k = kernel_matrix(&grid.coords(), 0.2).unwrap();
        let jitter = 1e-10;
        let l = cholesky(&k, jitter).unwrap();
        let recon = l.matmul_nt(&l).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                let want = k.at2(i, j) + if i == j { jitter } else { 0.0 };
                worst = worst.max((recon.at2(i, j) - want).abs());
            }
        }
        assert!(worst < 1e-8, "reconstruction error {worst}");
    }

    #[test]
    fn long_length_scale_samples_are_near_constant() {
        let grid = GridSpec::one_d(32).unwrap();
        let cfg = GrfConfig::new(0.0, 100.0, grid).unwrap();
        let sampler = GrfSampler::new(cfg).unwrap();
        for seed in 0..100 {
            let s = sampler.sample(seed);
            let vals = s.values.data();
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max - min < 0.05, "seed {seed}: spread {}", max - min);
        }
    }

    #[test]
    fn empirical_mean_matches_config() {
        let grid = GridSpec::one_d(32).unwrap();
        let cfg = GrfConfig::new(10.0, 0.2, grid).unwrap();
        let sampler = GrfSampler::new(cfg).unwrap();
        let mut acc = 0.0;
        let count = 2000;
        for seed in 0..count {
            let s = sampler.sample(seed);
            acc += s.values.sum() / s.values.len() as f64;
        }
        let mean = acc / count as f64;
        assert!((mean - 10.0).abs() < 0.1, "empirical mean {mean}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let grid = GridSpec::one_d(16).unwrap();
        let cfg = GrfConfig::new(1.0, 0.5, grid).unwrap();
        let sampler = GrfSampler::new(cfg).unwrap();
        let a = sampler.sample(42);
        let b = sampler.sample(42);
        assert_eq!(a.values.data(), b.values.data());
        let c = sampler.sample(43);
        assert_ne!(a.values.data(), c.values.data());
    }

    #[test]
    fn two_d_sampler_works() {
        let grid = GridSpec::two_d(8).unwrap();
        let cfg = GrfConfig::new(0.0, 0.5, grid).unwrap();
        let sampler = GrfSampler::new(cfg).unwrap();
        let s = sampler.sample(7);
        assert_eq!(s.values.len(), 64);
    }
}
