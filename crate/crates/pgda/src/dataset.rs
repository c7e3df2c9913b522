//! In-memory datasets: matched (input, solution) pairs plus provenance.

use crate::augment::AugmentProvenance;
use crate::error::{Error, Result};
use crate::grf::GrfConfig;
use crate::grid::{GridFunction, GridSpec};
use crate::solver::EquationSpec;
use serde::{Deserialize, Serialize};

/// One training or test example: an input function and its solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub input: GridFunction,
    pub output: GridFunction,
}

impl SamplePair {
    pub fn new(input: GridFunction, output: GridFunction) -> Result<Self> {
        if input.grid != output.grid {
            return Err(Error::Shape(format!(
                "pair grids differ: {:?} vs {:?}",
                input.grid, output.grid
            )));
        }
        Ok(SamplePair { input, output })
    }

    pub fn grid(&self) -> GridSpec {
        self.input.grid
    }
}

/// A set of sample pairs together with everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub equation: EquationSpec,
    /// Sampling distribution of the inputs, when GRF-generated.
    pub grf: Option<GrfConfig>,
    /// Set when the pairs include augmented samples.
    pub augmentation: Option<AugmentProvenance>,
    pub master_seed: u64,
    pub pairs: Vec<SamplePair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn grid(&self) -> GridSpec {
        self.equation.grid
    }
}
