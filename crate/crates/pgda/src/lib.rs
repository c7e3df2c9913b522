//! Learning solution operators of linear differential equations with
//! physics-guided data augmentation (PGDA).
//!
//! The library trains two neural operator families -- DeepONet and the
//! Fourier Neural Operator -- on input/solution pairs of linear ODEs/PDEs,
//! and augments training sets using the physics of the governing equation:
//! linear combinations of known pairs, translation against the
//! constant-input solution, and a scaling rule for Darcy-type problems.
//! Because the governing operators are linear, every augmented pair is an
//! exact solution pair, which makes the augmentation free of solver cost and
//! dramatically improves out-of-distribution generalization.
//!
//! Everything is built on a small float64 stack: dense tensors with
//! reverse-mode autodiff ([`tape`]), radix-2 real FFTs ([`fft`]), Gaussian
//! random field sampling ([`grf`]), high-accuracy reference solvers
//! ([`solver`]), the augmentation transforms ([`augment`]), Adam training
//! ([`train`]), and bit-exact persistence ([`datastore`]).

pub mod augment;
pub mod dataset;
pub mod datastore;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod grf;
pub mod grid;
pub mod models;
pub mod report;
pub mod rng;
pub mod solver;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use grid::{GridDims, GridFunction, GridSpec};
pub use tensor::{ComplexTensor, Tensor};

/// Installs a global rayon pool capped by the `PGDA_THREADS` environment
/// variable (or `cap` if given). Safe to call more than once; only the
/// first call takes effect. Thread count never changes computed values.
pub fn init_threads(cap: Option<usize>) {
    let threads = cap.or_else(|| {
        std::env::var("PGDA_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
}
