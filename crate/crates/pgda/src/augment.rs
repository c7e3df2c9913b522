//! Physics-guided data augmentation.
//!
//! For a linear governing operator, new exact training pairs follow from old
//! ones by pure arithmetic: linear combinations `(c1 v_i + c2 v_j,
//! c1 u_i + c2 u_j)`, translation against the constant-input solution
//! `(v + 1, u + u0)`, and the combination `(c0 v0 + c1 v_i + c2 v_j, ...)`.
//! The nonlinear Darcy problem gets its own scaling rule
//! `(c0 a, u / c0)`. None of these touch a solver -- this module depends
//! only on the dataset types, and the base pair `(1, u0)` is supplied by the
//! caller -- so augmentation costs O(N) array arithmetic.
//!
//! Coefficient ranges default to `c0 ~ U[-10, 10]` and `c1, c2 ~ U[-2, 2]`:
//! the shifted test distributions and probe inputs used downstream have
//! means up to 10, so the augmentation support has to cover that regime.
//! Augmentation happens once, offline, on a persisted dataset; pairs are
//! appended after the originals and the draw is deterministic in the seed.

use crate::dataset::{Dataset, SamplePair};
use crate::error::{Error, Result};
use crate::rng::Stream;
use serde::{Deserialize, Serialize};

/// Which transform family to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    None,
    Linear,
    Translate,
    Combined,
}

fn default_c0_range() -> (f64, f64) {
    (-10.0, 10.0)
}

fn default_mix_range() -> (f64, f64) {
    (-2.0, 2.0)
}

fn default_multiplier() -> usize {
    3
}

/// Augmentation settings: mode, coefficient ranges, output volume, seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    /// Uniform range of the translation coefficient `c0`.
    #[serde(default = "default_c0_range")]
    pub c0_range: (f64, f64),
    /// Uniform range of the mixing coefficients `c1`, `c2`.
    #[serde(default = "default_mix_range")]
    pub mix_range: (f64, f64),
    /// Augmented pairs produced per original pair.
    #[serde(default = "default_multiplier")]
    pub multiplier: usize,
    pub seed: u64,
}

impl AugmentConfig {
    pub fn new(mode: AugmentMode, seed: u64) -> Self {
        AugmentConfig {
            mode,
            c0_range: default_c0_range(),
            mix_range: default_mix_range(),
            multiplier: default_multiplier(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.c0_range, self.mix_range] {
            if !(lo < hi) {
                return Err(Error::Parameter(format!(
                    "coefficient range [{lo}, {hi}] is empty"
                )));
            }
        }
        if self.multiplier == 0 {
            return Err(Error::Parameter("multiplier must be >= 1".into()));
        }
        Ok(())
    }
}

/// What augmentation produced a dataset; stored in its manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentProvenance {
    pub mode: AugmentMode,
    pub c0_range: (f64, f64),
    pub mix_range: (f64, f64),
    pub multiplier: usize,
    pub seed: u64,
    /// Pair count before augmentation.
    pub original_count: usize,
}

/// `(c1 v_i + c2 v_j, c1 u_i + c2 u_j)`.
pub fn linear_combine(p_i: &SamplePair, p_j: &SamplePair, c1: f64, c2: f64) -> Result<SamplePair> {
    SamplePair::new(
        p_i.input.linear_combination(c1, &p_j.input, c2)?,
        p_i.output.linear_combination(c1, &p_j.output, c2)?,
    )
}

fn check_base(base: &SamplePair) -> Result<()> {
    let off = base
        .input
        .values
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    if off > 1e-12 {
        return Err(Error::Contract(format!(
            "translation base input must be identically 1 (max deviation {off:e})"
        )));
    }
    Ok(())
}

/// Translation by the constant-input pair: `(v + 1, u + u0)`.
pub fn translate(p: &SamplePair, base: &SamplePair) -> Result<SamplePair> {
    check_base(base)?;
    linear_combine(p, base, 1.0, 1.0)
}

/// `(c0 v0 + c1 v_i + c2 v_j, c0 u0 + c1 u_i + c2 u_j)`.
pub fn combined(
    p_i: &SamplePair,
    p_j: &SamplePair,
    base: &SamplePair,
    c0: f64,
    c1: f64,
    c2: f64,
) -> Result<SamplePair> {
    check_base(base)?;
    let mixed = linear_combine(p_i, p_j, c1, c2)?;
    linear_combine(&mixed, base, 1.0, c0)
}

/// Darcy scaling rule: `(c0 a, u / c0)` with `c0 != 0`.
pub fn darcy_scale(p: &SamplePair, c0: f64) -> Result<SamplePair> {
    if c0 == 0.0 {
        return Err(Error::Parameter("darcy_scale needs c0 != 0".into()));
    }
    SamplePair::new(p.input.scale(c0), p.output.scale(1.0 / c0))
}

/// Appends `multiplier * N` augmented pairs to a dataset. Pair indices and
/// coefficients come from one seeded stream, so the result is a pure
/// function of `(dataset, base, config)`.
pub fn augment_dataset(d: &Dataset, base: &SamplePair, cfg: &AugmentConfig) -> Result<Dataset> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::Parameter("cannot augment an empty dataset".into()));
    }
    let provenance = AugmentProvenance {
        mode: cfg.mode,
        c0_range: cfg.c0_range,
        mix_range: cfg.mix_range,
        multiplier: cfg.multiplier,
        seed: cfg.seed,
        original_count: d.len(),
    };
    let mut out = d.clone();
    out.augmentation = Some(provenance);
    if cfg.mode == AugmentMode::None {
        return Ok(out);
    }
    if base.grid() != d.grid() {
        return Err(Error::Shape(format!(
            "base grid {:?} vs dataset grid {:?}",
            base.grid(),
            d.grid()
        )));
    }
    check_base(base)?;

    let n = d.len();
    let total = cfg.multiplier * n;
    let mut stream = Stream::new(cfg.seed);
    out.pairs.reserve(total);
    for _ in 0..total {
        let i = stream.index(n);
        let j = stream.index(n);
        let mut c0 = stream.uniform(cfg.c0_range.0, cfg.c0_range.1);
        let mut c1 = stream.uniform(cfg.mix_range.0, cfg.mix_range.1);
        let mut c2 = stream.uniform(cfg.mix_range.0, cfg.mix_range.1);
        match cfg.mode {
            AugmentMode::Linear => c0 = 0.0,
            AugmentMode::Translate => {
                c0 = 1.0;
                c1 = 1.0;
                c2 = 0.0;
            }
            AugmentMode::Combined => {}
            AugmentMode::None => unreachable!(),
        }
        out.pairs
            .push(combined(&d.pairs[i], &d.pairs[j], base, c0, c1, c2)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grf::GrfConfig;
    use crate::grid::{GridFunction, GridSpec};
    use crate::solver::{
        constant_input_solution, generate_dataset, solve_antiderivative, EquationSpec, RefSolver,
    };
    use std::f64::consts::PI;

    fn antideriv_pair(g: GridSpec, v: impl Fn(f64) -> f64) -> SamplePair {
        let input = GridFunction::sample_1d(g, v).unwrap();
        let output = solve_antiderivative(&input).unwrap();
        SamplePair::new(input, output).unwrap()
    }

    #[test]
    fn linear_combine_identity_and_annihilation() {
        let g = GridSpec::one_d(16).unwrap();
        let p = antideriv_pair(g, |x| x * x);
        let q = antideriv_pair(g, |x| (2.0 * x).sin());
        let id = linear_combine(&p, &q, 1.0, 0.0).unwrap();
        assert_eq!(id, p);
        let zero = linear_combine(&p, &q, 0.0, 0.0).unwrap();
        assert_eq!(zero.input.values.max_abs(), 0.0);
        assert_eq!(zero.output.values.max_abs(), 0.0);
    }

    #[test]
    fn linear_combine_matches_analytic_antiderivatives() {
        // (1, x) and (2x, x^2) with c1 = 3, c2 = -1 -> (3 - 2x, 3x - x^2)
        let g = GridSpec::one_d(32).unwrap();
        let p = antideriv_pair(g, |_| 1.0);
        let q = antideriv_pair(g, |x| 2.0 * x);
        let mix = linear_combine(&p, &q, 3.0, -1.0).unwrap();
        for i in 0..32 {
            let x = g.coord(i);
            assert!((mix.input.values.data()[i] - (3.0 - 2.0 * x)).abs() < 1e-9);
            assert!((mix.output.values.data()[i] - (3.0 * x - x * x)).abs() < 1e-9);
        }
        // and against the solver itself
        let resolved = solve_antiderivative(&mix.input).unwrap();
        assert!(resolved.max_abs_diff(&mix.output) < 1e-9);
    }

    #[test]
    fn linear_combine_rejects_grid_mismatch() {
        let p = antideriv_pair(GridSpec::one_d(16).unwrap(), |x| x);
        let q = antideriv_pair(GridSpec::one_d(32).unwrap(), |x| x);
        assert!(linear_combine(&p, &q, 1.0, 1.0).is_err());
    }

    #[test]
    fn translate_shifts_by_the_base() {
        let eq = EquationSpec::antiderivative(32).unwrap();
        let g = eq.grid;
        let base = constant_input_solution(&eq).unwrap();
        let p = antideriv_pair(g, |x| (PI * x).sin());
        let t = translate(&p, &base).unwrap();
        for i in 0..32 {
            let x = g.coord(i);
            assert!((t.input.values.data()[i] - ((PI * x).sin() + 1.0)).abs() < 1e-12);
            let want = (1.0 - (PI * x).cos()) / PI + x;
            assert!((t.output.values.data()[i] - want).abs() < 1e-5);
        }

        // zero pair translates to the base itself
        let zero = SamplePair::new(GridFunction::zero(g), GridFunction::zero(g)).unwrap();
        let t0 = translate(&zero, &base).unwrap();
        assert!(t0.input.max_abs_diff(&base.input) < 1e-15);
        assert!(t0.output.max_abs_diff(&base.output) < 1e-15);

        // translating twice matches the solver on v + 2
        let twice = translate(&t, &base).unwrap();
        let resolved = solve_antiderivative(&twice.input).unwrap();
        assert!(resolved.max_abs_diff(&twice.output) < 1e-7);
    }

    #[test]
    fn translate_requires_constant_one_base() {
        let g = GridSpec::one_d(16).unwrap();
        let p = antideriv_pair(g, |x| x);
        let bad_base = SamplePair::new(
            GridFunction::constant(g, 1.0 + 1e-6),
            GridFunction::zero(g),
        )
        .unwrap();
        assert!(matches!(
            translate(&p, &bad_base),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn combined_identity_and_probe() {
        let eq = EquationSpec::antiderivative(32).unwrap();
        let base = constant_input_solution(&eq).unwrap();
        let p = antideriv_pair(eq.grid, |x| (PI * x).sin());
        let q = antideriv_pair(eq.grid, |x| x);
        let id = combined(&p, &q, &base, 0.0, 1.0, 0.0).unwrap();
        assert!(id.input.max_abs_diff(&p.input) < 1e-15);
        assert!(id.output.max_abs_diff(&p.output) < 1e-15);

        // c0 = 10, c1 = 2: the "2 v0 + 10" probe input
        let probe = combined(&p, &q, &base, 10.0, 2.0, 0.0).unwrap();
        for i in 0..32 {
            let x = eq.grid.coord(i);
            let want = 2.0 * (PI * x).sin() + 10.0;
            assert!((probe.input.values.data()[i] - want).abs() < 1e-12);
        }
        let resolved = solve_antiderivative(&probe.input).unwrap();
        assert!(resolved.max_abs_diff(&probe.output) < 1e-6);
    }

    #[test]
    fn darcy_scaling_group_properties() {
        let g = GridSpec::one_d(32).unwrap();
        let a = GridFunction::constant(g, 1.0);
        let u = GridFunction::sample_1d(g, |x| (PI * x).sin()).unwrap();
        let p = SamplePair::new(a, u).unwrap();

        let id = darcy_scale(&p, 1.0).unwrap();
        assert_eq!(id, p);

        let roundtrip = darcy_scale(&darcy_scale(&p, 2.0).unwrap(), 0.5).unwrap();
        assert!(roundtrip.input.max_abs_diff(&p.input) < 1e-15);
        assert!(roundtrip.output.max_abs_diff(&p.output) < 1e-15);

        assert!(darcy_scale(&p, 0.0).is_err());
    }

    /// FD residual of -(a u')' = f on a uniform grid, harmonic-free simple
    /// midpoint-averaged permeability; used only to check the scaling rule.
    fn darcy_residual(pair: &SamplePair, f: &GridFunction) -> f64 {
        let n = pair.grid().n;
        let h = pair.grid().spacing();
        let a = pair.input.values.data();
        let u = pair.output.values.data();
        let mut worst: f64 = 0.0;
        for i in 1..n - 1 {
            let ap = 0.5 * (a[i] + a[i + 1]);
            let am = 0.5 * (a[i - 1] + a[i]);
            let flux = (ap * (u[i + 1] - u[i]) - am * (u[i] - u[i - 1])) / (h * h);
            worst = worst.max((-flux - f.values.data()[i]).abs());
        }
        worst
    }

    #[test]
    fn darcy_scale_preserves_the_equation() {
        // a = 1, u = sin(pi x)  =>  f = pi^2 sin(pi x)
        let g = GridSpec::one_d(64).unwrap();
        let a = GridFunction::constant(g, 1.0);
        let u = GridFunction::sample_1d(g, |x| (PI * x).sin()).unwrap();
        let f = GridFunction::sample_1d(g, |x| PI * PI * (PI * x).sin()).unwrap();
        let p = SamplePair::new(a, u).unwrap();
        let r0 = darcy_residual(&p, &f);
        let scaled = darcy_scale(&p, 3.0).unwrap();
        let r3 = darcy_residual(&scaled, &f);
        // the scaled pair satisfies the same equation up to the identical
        // FD truncation error
        assert!((r0 - r3).abs() < 1e-10, "residual drift {r0} vs {r3}");
        assert!(r3 < 0.01, "truncation unexpectedly large: {r3}");
    }

    #[test]
    fn augment_dataset_counts_and_determinism() {
        let eq = EquationSpec::antiderivative(16).unwrap();
        let grf = GrfConfig::new(0.0, 0.3, eq.grid).unwrap();
        let d = generate_dataset(&eq, &grf, 50, 3).unwrap();
        let base = constant_input_solution(&eq).unwrap();

        let cfg = AugmentConfig::new(AugmentMode::Combined, 11);
        let aug = augment_dataset(&d, &base, &cfg).unwrap();
        assert_eq!(aug.len(), 50 * (1 + cfg.multiplier));
        assert_eq!(aug.pairs[..50], d.pairs[..]);
        assert_eq!(aug.augmentation.unwrap().mode, AugmentMode::Combined);

        let again = augment_dataset(&d, &base, &cfg).unwrap();
        assert_eq!(aug, again);

        let one = AugmentConfig {
            multiplier: 1,
            ..cfg
        };
        assert_eq!(augment_dataset(&d, &base, &one).unwrap().len(), 100);

        let none = AugmentConfig::new(AugmentMode::None, 11);
        let unchanged = augment_dataset(&d, &base, &none).unwrap();
        assert_eq!(unchanged.pairs, d.pairs);
        assert!(unchanged.augmentation.is_some());
    }

    #[test]
    fn every_augmented_pair_satisfies_the_equation() {
        for eq in [
            EquationSpec::antiderivative(16).unwrap(),
            EquationSpec::sp_advdiff(16, 0.01).unwrap(),
        ] {
            let grf = GrfConfig::new(0.0, 0.3, eq.grid).unwrap();
            let d = generate_dataset(&eq, &grf, 20, 5).unwrap();
            let base = constant_input_solution(&eq).unwrap();
            let solver = RefSolver::new(&eq).unwrap();
            for mode in [AugmentMode::Linear, AugmentMode::Translate, AugmentMode::Combined] {
                let cfg = AugmentConfig {
                    multiplier: 2,
                    ..AugmentConfig::new(mode, 17)
                };
                let aug = augment_dataset(&d, &base, &cfg).unwrap();
                for pair in &aug.pairs {
                    let r = solver.residual(pair).unwrap();
                    assert!(r < 1e-8, "{mode:?} residual {r}");
                }
            }
        }
    }

    #[test]
    fn translate_mode_is_exactly_the_translation_rule() {
        let eq = EquationSpec::antiderivative(16).unwrap();
        let grf = GrfConfig::new(0.0, 0.3, eq.grid).unwrap();
        let d = generate_dataset(&eq, &grf, 5, 9).unwrap();
        let base = constant_input_solution(&eq).unwrap();
        let cfg = AugmentConfig {
            multiplier: 1,
            ..AugmentConfig::new(AugmentMode::Translate, 23)
        };
        let aug = augment_dataset(&d, &base, &cfg).unwrap();
        for pair in &aug.pairs[5..] {
            // every translated input is some original input plus one
            let matched = d.pairs.iter().any(|orig| {
                let shifted = orig.input.values.add_scalar(1.0);
                shifted.max_abs_diff(&pair.input.values) < 1e-12
            });
            assert!(matched, "translated pair does not match any original");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = AugmentConfig::new(AugmentMode::Combined, 0);
        cfg.multiplier = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = AugmentConfig::new(AugmentMode::Combined, 0);
        cfg.c0_range = (3.0, 3.0);
        assert!(cfg.validate().is_err());
    }
}
