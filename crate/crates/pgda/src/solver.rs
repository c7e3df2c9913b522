//! High-accuracy reference solvers for the three target equations.
//!
//! These manufacture the ground-truth (input, solution) pairs that the
//! operator models train on, and double as the linearity oracle that makes
//! the augmentation transforms exact:
//!
//! * antiderivative: `u(x) = int_0^x v`, `u(0) = 0`. The grid samples of `v`
//!   are interpolated with a natural cubic spline, integrated by cumulative
//!   trapezoid on a 64x refined grid, and restricted back (64x keeps the
//!   quadrature error near 2e-7 for the smooth fields used here).
//! * Poisson on the unit square: `-lap u = f`, `u = 0` on the boundary,
//!   5-point stencil solved directly by a banded Cholesky factorization.
//! * singularly perturbed advection-diffusion: `-eps u'' + u' = f` on (0,1),
//!   `u(0) = u(1) = 0`, central differences on an internal uniform mesh with
//!   `h <= eps/40` (well under the `eps/2` oscillation bound; the boundary
//!   layer needs the extra resolution), then restricted to the training grid.
//!
//! Every solver is linear in its input up to roundoff, which the tests and
//! the acceptance suite verify directly.

use crate::dataset::{Dataset, SamplePair};
use crate::error::{Error, Result};
use crate::grf::{GrfConfig, GrfSampler};
use crate::grid::{GridDims, GridFunction, GridSpec};
use crate::rng::split_seed;
use crate::tensor::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Refinement factor of the antiderivative quadrature grid.
const ANTIDERIV_REFINE: usize = 64;

/// The fine mesh of the singularly perturbed solver satisfies
/// `h <= epsilon / SP_POINTS_PER_EPS`.
const SP_POINTS_PER_EPS: f64 = 40.0;

/// Smallest epsilon the uniform fine mesh supports.
pub const SP_MIN_EPSILON: f64 = 2e-4;

/// Which equation a dataset or experiment is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    Antiderivative,
    Poisson2D,
    SingularAdvDiff,
}

/// An equation plus the grid its datasets are represented on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquationSpec {
    pub kind: EquationKind,
    /// Perturbation parameter; present exactly for `SingularAdvDiff`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub grid: GridSpec,
}

impl EquationSpec {
    pub fn antiderivative(n: usize) -> Result<Self> {
        let spec = EquationSpec {
            kind: EquationKind::Antiderivative,
            epsilon: None,
            grid: GridSpec::one_d(n)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn poisson2d(n: usize) -> Result<Self> {
        let spec = EquationSpec {
            kind: EquationKind::Poisson2D,
            epsilon: None,
            grid: GridSpec::two_d(n)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sp_advdiff(n: usize, epsilon: f64) -> Result<Self> {
        let spec = EquationSpec {
            kind: EquationKind::SingularAdvDiff,
            epsilon: Some(epsilon),
            grid: GridSpec::one_d(n)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.epsilon) {
            (EquationKind::SingularAdvDiff, Some(eps)) => {
                if !(eps > 0.0 && eps <= 0.1) {
                    return Err(Error::Parameter(format!(
                        "epsilon must be in (0, 0.1], got {eps}"
                    )));
                }
            }
            (EquationKind::SingularAdvDiff, None) => {
                return Err(Error::Parameter(
                    "singularly perturbed equation needs epsilon".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(Error::Parameter(
                    "epsilon is only meaningful for the singularly perturbed equation".into(),
                ))
            }
            _ => {}
        }
        let want = match self.kind {
            EquationKind::Poisson2D => GridDims::Two,
            _ => GridDims::One,
        };
        if self.grid.dims != want {
            return Err(Error::Shape(format!(
                "{:?} needs a {want:?}-dimensional grid",
                self.kind
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// natural cubic spline on an equispaced grid
// ---------------------------------------------------------------------------

/// Natural cubic spline through equispaced samples on [0, 1].
/// Construction is linear in the data, so spline-based solvers stay linear.
pub(crate) struct CubicSpline {
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots (natural: zero at the ends).
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn fit(y: &[f64]) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::Parameter("spline needs at least 2 points".into()));
        }
        let h = 1.0 / (n - 1) as f64;
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let sub = vec![h / 6.0; k - 1];
            let diag = vec![2.0 * h / 3.0; k];
            let sup = vec![h / 6.0; k - 1];
            let rhs: Vec<f64> = (1..n - 1)
                .map(|i| (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h)
                .collect();
            let interior = thomas_solve(&sub, &diag, &sup, &rhs)?;
            m[1..n - 1].copy_from_slice(&interior);
        }
        Ok(CubicSpline { h, y: y.to_vec(), m })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let fi = (x / self.h).floor();
        let i = (fi as usize).min(n - 2);
        let x0 = i as f64 * self.h;
        let x1 = x0 + self.h;
        let (a, b) = (x1 - x, x - x0);
        let h = self.h;
        self.m[i] * a * a * a / (6.0 * h)
            + self.m[i + 1] * b * b * b / (6.0 * h)
            + (self.y[i] / h - self.m[i] * h / 6.0) * a
            + (self.y[i + 1] / h - self.m[i + 1] * h / 6.0) * b
    }
}

/// Thomas algorithm for a general tridiagonal system.
pub(crate) fn thomas_solve(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n || (n > 1 && (sub.len() + 1 != n || sup.len() + 1 != n)) {
        return Err(Error::Shape("tridiagonal band lengths".into()));
    }
    let mut c = vec![0.0; n.saturating_sub(1)];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if !denom.is_finite() || denom.abs() < 1e-300 {
        return Err(Error::Numerical("tridiagonal pivot at 0".into()));
    }
    if n > 1 {
        c[0] = sup[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i - 1] * c[i - 1];
        if !denom.is_finite() || denom.abs() < 1e-300 {
            return Err(Error::Numerical(format!("tridiagonal pivot at {i}")));
        }
        if i < n - 1 {
            c[i] = sup[i] / denom;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// antiderivative
// ---------------------------------------------------------------------------

/// `u(x_j) = int_0^{x_j} v`, with `u(0) = 0` exactly.
pub fn solve_antiderivative(v: &GridFunction) -> Result<GridFunction> {
    if v.grid.dims != GridDims::One {
        return Err(Error::Shape("antiderivative needs a 1D grid".into()));
    }
    let n = v.grid.n;
    let spline = CubicSpline::fit(v.values.data())?;
    let r = ANTIDERIV_REFINE;
    let fine_n = (n - 1) * r + 1;
    let fine_h = 1.0 / (fine_n - 1) as f64;
    let mut acc = 0.0;
    let mut prev = spline.eval(0.0);
    let mut out = vec![0.0; n];
    for j in 1..fine_n {
        let cur = spline.eval(j as f64 * fine_h);
        acc += 0.5 * (prev + cur) * fine_h;
        prev = cur;
        if j % r == 0 {
            out[j / r] = acc;
        }
    }
    GridFunction::new(v.grid, Tensor::new(vec![n], out)?)
}

// ---------------------------------------------------------------------------
// Poisson on the unit square
// ---------------------------------------------------------------------------

/// Banded Cholesky factorization of the 5-point `-lap` stencil with
/// homogeneous Dirichlet boundary, reusable across right-hand sides.
pub struct PoissonSolver {
    grid: GridSpec,
    interior: usize,
    bandwidth: usize,
    /// Row-major `[n_unknowns x (bandwidth+1)]`; row `i` stores
    /// `L[i, i-bandwidth ..= i]`.
    factor: Vec<f64>,
}

impl PoissonSolver {
    pub fn new(grid: GridSpec) -> Result<Self> {
        if grid.dims != GridDims::Two {
            return Err(Error::Shape("Poisson solver needs a 2D grid".into()));
        }
        let m = grid.n - 2;
        if m == 0 {
            return Err(Error::Parameter("grid has no interior points".into()));
        }
        let nn = m * m;
        let bw = m;
        let h2inv = 1.0 / (grid.spacing() * grid.spacing());
        let width = bw + 1;
        let mut l = vec![0.0; nn * width];
        // Band entries of A: diag 4/h^2; -1/h^2 one step left (same row of
        // the grid, unless at a row boundary) and bw steps up.
        let a_entry = |i: usize, j: usize| -> f64 {
            if i == j {
                4.0 * h2inv
            } else if j + 1 == i && i % m != 0 {
                -h2inv
            } else if j + bw == i {
                -h2inv
            } else {
                0.0
            }
        };
        for i in 0..nn {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = a_entry(i, j);
                let p0 = lo.max(j.saturating_sub(bw));
                for p in p0..j {
                    sum -= l[i * width + (bw - (i - p))] * l[j * width + (bw - (j - p))];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::Numerical(format!(
                            "Poisson stencil factorization failed at row {i}"
                        )));
                    }
                    l[i * width + bw] = sum.sqrt();
                } else {
                    l[i * width + (bw - (i - j))] = sum / l[j * width + bw];
                }
            }
        }
        Ok(PoissonSolver {
            grid,
            interior: nn,
            bandwidth: bw,
            factor: l,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Solves `-lap u = f` for the interior, zero on the boundary.
    pub fn solve(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.grid != self.grid {
            return Err(Error::Shape(format!(
                "rhs grid {:?} vs solver grid {:?}",
                f.grid, self.grid
            )));
        }
        let n = self.grid.n;
        let m = n - 2;
        let bw = self.bandwidth;
        let width = bw + 1;
        // gather interior right-hand side
        let mut y = vec![0.0; self.interior];
        for ix in 0..m {
            for iy in 0..m {
                y[ix * m + iy] = f.values.data()[(ix + 1) * n + (iy + 1)];
            }
        }
        // forward substitution L y' = y
        for i in 0..self.interior {
            let lo = i.saturating_sub(bw);
            let mut acc = y[i];
            for p in lo..i {
                acc -= self.factor[i * width + (bw - (i - p))] * y[p];
            }
            y[i] = acc / self.factor[i * width + bw];
        }
        // back substitution L^T u = y'
        for i in (0..self.interior).rev() {
            let hi = (i + bw).min(self.interior - 1);
            let mut acc = y[i];
            for p in i + 1..=hi {
                acc -= self.factor[p * width + (bw - (p - i))] * y[p];
            }
            y[i] = acc / self.factor[i * width + bw];
        }
        let mut out = vec![0.0; n * n];
        for ix in 0..m {
            for iy in 0..m {
                out[(ix + 1) * n + (iy + 1)] = y[ix * m + iy];
            }
        }
        GridFunction::new(self.grid, Tensor::new(vec![n * n], out)?)
    }
}

/// One-shot Poisson solve (factors the stencil each call).
pub fn solve_poisson2d(f: &GridFunction) -> Result<GridFunction> {
    PoissonSolver::new(f.grid)?.solve(f)
}

/// Max-norm residual of the 5-point stencil plus boundary violation.
pub fn poisson_residual(pair: &SamplePair) -> Result<f64> {
    let grid = pair.grid();
    if grid.dims != GridDims::Two {
        return Err(Error::Shape("poisson_residual needs a 2D grid".into()));
    }
    let n = grid.n;
    let h2inv = 1.0 / (grid.spacing() * grid.spacing());
    let u = pair.output.values.data();
    let f = pair.input.values.data();
    let mut worst: f64 = 0.0;
    for ix in 0..n {
        for iy in 0..n {
            let idx = ix * n + iy;
            if ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1 {
                worst = worst.max(u[idx].abs());
            } else {
                let lap = (4.0 * u[idx] - u[idx - 1] - u[idx + 1] - u[idx - n] - u[idx + n])
                    * h2inv;
                worst = worst.max((lap - f[idx]).abs());
            }
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// singularly perturbed advection-diffusion
// ---------------------------------------------------------------------------

/// Central-difference solve of `-eps u'' + u' = f` on a uniform mesh of
/// `f.len()` points spanning [0, 1], with `u(0) = u(N) = 0`.
pub fn sp_solve_on_mesh(f: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let nf = f.len();
    if nf < 3 {
        return Err(Error::Parameter("mesh too small".into()));
    }
    let h = 1.0 / (nf - 1) as f64;
    let k = nf - 2;
    let sub = vec![-epsilon / (h * h) - 1.0 / (2.0 * h); k - 1];
    let diag = vec![2.0 * epsilon / (h * h); k];
    let sup = vec![-epsilon / (h * h) + 1.0 / (2.0 * h); k - 1];
    let interior = thomas_solve(&sub, &diag, &sup, &f[1..nf - 1])?;
    let mut u = vec![0.0; nf];
    u[1..nf - 1].copy_from_slice(&interior);
    Ok(u)
}

fn sp_refinement(n: usize, epsilon: f64) -> usize {
    let needed = SP_POINTS_PER_EPS / ((n - 1) as f64 * epsilon);
    (needed.ceil() as usize).max(1)
}

/// Solves the singularly perturbed equation for a grid-sampled forcing:
/// spline-interpolate `f` to the fine mesh, solve, restrict.
pub fn solve_sp_advdiff(f: &GridFunction, epsilon: f64) -> Result<GridFunction> {
    if f.grid.dims != GridDims::One {
        return Err(Error::Shape("advection-diffusion needs a 1D grid".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(Error::Parameter(format!(
            "epsilon must be in (0, 0.1], got {epsilon}"
        )));
    }
    if epsilon < SP_MIN_EPSILON {
        return Err(Error::Parameter(format!(
            "epsilon {epsilon} below {SP_MIN_EPSILON}: the uniform fine mesh would be \
             excessive; a Shishkin-mesh solver is needed for this regime"
        )));
    }
    let n = f.grid.n;
    let r = sp_refinement(n, epsilon);
    let fine_n = (n - 1) * r + 1;
    let spline = CubicSpline::fit(f.values.data())?;
    let fine_h = 1.0 / (fine_n - 1) as f64;
    let ff: Vec<f64> = (0..fine_n).map(|j| spline.eval(j as f64 * fine_h)).collect();
    let uf = sp_solve_on_mesh(&ff, epsilon)?;
    let coarse: Vec<f64> = (0..n).map(|j| uf[j * r]).collect();
    GridFunction::new(f.grid, Tensor::new(vec![n], coarse)?)
}

// ---------------------------------------------------------------------------
// uniform front-end
// ---------------------------------------------------------------------------

/// A reference solver with any reusable factorization already built.
pub enum RefSolver {
    Antiderivative { grid: GridSpec },
    Poisson(PoissonSolver),
    SpAdvDiff { grid: GridSpec, epsilon: f64 },
}

impl RefSolver {
    pub fn new(eq: &EquationSpec) -> Result<Self> {
        eq.validate()?;
        Ok(match eq.kind {
            EquationKind::Antiderivative => RefSolver::Antiderivative { grid: eq.grid },
            EquationKind::Poisson2D => RefSolver::Poisson(PoissonSolver::new(eq.grid)?),
            EquationKind::SingularAdvDiff => RefSolver::SpAdvDiff {
                grid: eq.grid,
                epsilon: eq.epsilon.expect("validated"),
            },
        })
    }

    pub fn grid(&self) -> GridSpec {
        match self {
            RefSolver::Antiderivative { grid } => *grid,
            RefSolver::Poisson(p) => p.grid(),
            RefSolver::SpAdvDiff { grid, .. } => *grid,
        }
    }

    pub fn solve(&self, v: &GridFunction) -> Result<GridFunction> {
        if v.grid != self.grid() {
            return Err(Error::Shape(format!(
                "input grid {:?} vs solver grid {:?}",
                v.grid,
                self.grid()
            )));
        }
        match self {
            RefSolver::Antiderivative { .. } => solve_antiderivative(v),
            RefSolver::Poisson(p) => p.solve(v),
            RefSolver::SpAdvDiff { epsilon, .. } => solve_sp_advdiff(v, *epsilon),
        }
    }

    /// How far a pair is from solving the equation. For the Poisson stencil
    /// this is the discrete residual; the quadrature/fine-mesh solvers have
    /// no stencil on the training grid, so their residual is defined as the
    /// max-norm distance to a fresh reference solve of the pair's input.
    pub fn residual(&self, pair: &SamplePair) -> Result<f64> {
        match self {
            RefSolver::Poisson(_) => poisson_residual(pair),
            _ => {
                let resolved = self.solve(&pair.input)?;
                Ok(resolved.max_abs_diff(&pair.output))
            }
        }
    }
}

/// The translation-base pair: constant input 1 and its solution.
pub fn constant_input_solution(eq: &EquationSpec) -> Result<SamplePair> {
    let solver = RefSolver::new(eq)?;
    let one = GridFunction::constant(eq.grid, 1.0);
    let solution = solver.solve(&one)?;
    SamplePair::new(one, solution)
}

/// Generates `count` (GRF draw, reference solution) pairs. Per-sample seeds
/// come from [`split_seed`], so generation parallelizes over samples with
/// results identical to a sequential run.
pub fn generate_dataset(
    eq: &EquationSpec,
    grf: &GrfConfig,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Parameter("dataset needs count >= 1".into()));
    }
    if grf.grid != eq.grid {
        return Err(Error::Shape(format!(
            "GRF grid {:?} vs equation grid {:?}",
            grf.grid, eq.grid
        )));
    }
    let solver = RefSolver::new(eq)?;
    let sampler = GrfSampler::new(*grf)?;
    let pairs: Result<Vec<SamplePair>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let input = sampler.sample(split_seed(seed, i as u64));
            let output = solver.solve(&input)?;
            SamplePair::new(input, output)
        })
        .collect();
    Ok(Dataset {
        equation: *eq,
        grf: Some(*grf),
        augmentation: None,
        master_seed: seed,
        pairs: pairs?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid1(n: usize) -> GridSpec {
        GridSpec::one_d(n).unwrap()
    }

    #[test]
    fn antiderivative_zero_and_constant() {
        let g = grid1(32);
        let zero = GridFunction::zero(g);
        let u = solve_antiderivative(&zero).unwrap();
        assert!(u.values.max_abs() == 0.0);

        let one = GridFunction::constant(g, 1.0);
        let u = solve_antiderivative(&one).unwrap();
        for i in 0..32 {
            assert!((u.values.data()[i] - g.coord(i)).abs() < 1e-12);
        }
        assert_eq!(u.values.data()[0], 0.0);
    }

    #[test]
    fn antiderivative_of_sine() {
        let g = grid1(32);
        let v = GridFunction::sample_1d(g, |x| (PI * x).sin()).unwrap();
        let u = solve_antiderivative(&v).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..32 {
            let want = (1.0 - (PI * g.coord(i)).cos()) / PI;
            worst = worst.max((u.values.data()[i] - want).abs());
        }
        assert!(worst < 1e-6, "antiderivative error {worst}");
    }

    #[test]
    fn antiderivative_rejects_2d() {
        let g = GridSpec::two_d(4).unwrap();
        assert!(solve_antiderivative(&GridFunction::zero(g)).is_err());
    }

    #[test]
    fn poisson_zero_input() {
        let g = GridSpec::two_d(16).unwrap();
        let u = solve_poisson2d(&GridFunction::zero(g)).unwrap();
        assert_eq!(u.values.max_abs(), 0.0);
    }

    fn poisson_manufactured_error(n: usize, kx: f64, ky: f64) -> f64 {
        let g = GridSpec::two_d(n).unwrap();
        let f = GridFunction::sample_2d(g, |x, y| {
            (kx * kx + ky * ky) * PI * PI * (kx * PI * x).sin() * (ky * PI * y).sin()
        })
        .unwrap();
        let u = solve_poisson2d(&f).unwrap();
        let want = GridFunction::sample_2d(g, |x, y| (kx * PI * x).sin() * (ky * PI * y).sin())
            .unwrap();
        u.max_abs_diff(&want)
    }

    #[test]
    fn poisson_manufactured_solutions_converge() {
        // u = sin(pi x) sin(pi y), f = 2 pi^2 u
        let e32 = poisson_manufactured_error(32, 1.0, 1.0);
        assert!(e32 < 5e-3, "n=32 error {e32}");
        let e17 = poisson_manufactured_error(17, 1.0, 1.0);
        let e33 = poisson_manufactured_error(33, 1.0, 1.0);
        let e65 = poisson_manufactured_error(65, 1.0, 1.0);
        let r1 = e17 / e33;
        let r2 = e33 / e65;
        assert!((3.5..=4.5).contains(&r1), "ratio {r1}");
        assert!((3.5..=4.5).contains(&r2), "ratio {r2}");

        // u = sin(pi x) sin(2 pi y), f = 5 pi^2 u
        let f17 = poisson_manufactured_error(17, 1.0, 2.0);
        let f33 = poisson_manufactured_error(33, 1.0, 2.0);
        let r = f17 / f33;
        assert!((3.5..=4.5).contains(&r), "ratio {r}");
    }

    #[test]
    fn poisson_boundary_is_exactly_zero() {
        let g = GridSpec::two_d(16).unwrap();
        let f = GridFunction::sample_2d(g, |x, y| (x + y).exp()).unwrap();
        let u = solve_poisson2d(&f).unwrap();
        let n = 16;
        for i in 0..n {
            assert_eq!(u.values.data()[i], 0.0);
            assert_eq!(u.values.data()[(n - 1) * n + i], 0.0);
            assert_eq!(u.values.data()[i * n], 0.0);
            assert_eq!(u.values.data()[i * n + n - 1], 0.0);
        }
    }

    #[test]
    fn poisson_residual_is_tiny() {
        let g = GridSpec::two_d(32).unwrap();
        let f = GridFunction::sample_2d(g, |x, y| (3.0 * x - y).sin() + 2.0).unwrap();
        let u = solve_poisson2d(&f).unwrap();
        let pair = SamplePair::new(f, u).unwrap();
        let r = poisson_residual(&pair).unwrap();
        assert!(r < 1e-10, "stencil residual {r}");
    }

    #[test]
    fn sp_zero_input() {
        let g = grid1(32);
        let u = solve_sp_advdiff(&GridFunction::zero(g), 0.01).unwrap();
        assert_eq!(u.values.max_abs(), 0.0);
    }

    #[test]
    fn sp_constant_forcing_closed_form() {
        // f = 1: u(x) = x - (e^{x/eps} - 1) / (e^{1/eps} - 1)
        let eps = 0.01;
        let g = grid1(32);
        let u = solve_sp_advdiff(&GridFunction::constant(g, 1.0), eps).unwrap();
        let exact = |x: f64| x - (f64::exp_m1(x / eps)) / (f64::exp_m1(1.0 / eps));
        let mut worst_all: f64 = 0.0;
        let mut worst_away: f64 = 0.0;
        for i in 0..32 {
            let x = g.coord(i);
            let err = (u.values.data()[i] - exact(x)).abs();
            worst_all = worst_all.max(err);
            if x < 1.0 - 5.0 * eps {
                worst_away = worst_away.max(err);
            }
        }
        assert!(worst_away < 1e-6, "away-from-layer error {worst_away}");
        assert!(worst_all < 1e-4, "boundary-layer error {worst_all}");
        assert_eq!(u.values.data()[0], 0.0);
        assert_eq!(u.values.data()[31], 0.0);
    }

    #[test]
    fn sp_manufactured_second_order_in_fine_h() {
        // u = sin(pi x)  =>  f = eps pi^2 sin(pi x) + pi cos(pi x)
        let eps = 0.05;
        let err_on = |nf: usize| {
            let h = 1.0 / (nf - 1) as f64;
            let f: Vec<f64> = (0..nf)
                .map(|j| {
                    let x = j as f64 * h;
                    eps * PI * PI * (PI * x).sin() + PI * (PI * x).cos()
                })
                .collect();
            let u = sp_solve_on_mesh(&f, eps).unwrap();
            (0..nf).fold(0.0f64, |m, j| {
                let x = j as f64 * h;
                m.max((u[j] - (PI * x).sin()).abs())
            })
        };
        let e1 = err_on(501);
        let e2 = err_on(1001);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn sp_epsilon_range_is_enforced() {
        let g = grid1(16);
        let f = GridFunction::constant(g, 1.0);
        assert!(solve_sp_advdiff(&f, 0.0).is_err());
        assert!(solve_sp_advdiff(&f, 0.2).is_err());
        let err = solve_sp_advdiff(&f, 1e-4).unwrap_err().to_string();
        assert!(err.contains("Shishkin"), "error was: {err}");
    }

    #[test]
    fn constant_input_solutions() {
        // antiderivative: (1, x)
        let eq = EquationSpec::antiderivative(32).unwrap();
        let base = constant_input_solution(&eq).unwrap();
        for i in 0..32 {
            assert!((base.output.values.data()[i] - eq.grid.coord(i)).abs() < 1e-12);
        }

        // singularly perturbed: closed form above
        let eq = EquationSpec::sp_advdiff(32, 0.01).unwrap();
        let base = constant_input_solution(&eq).unwrap();
        let exact = |x: f64| x - (f64::exp_m1(x / 0.01)) / (f64::exp_m1(1.0 / 0.01));
        let mut worst: f64 = 0.0;
        for i in 0..32 {
            worst = worst.max((base.output.values.data()[i] - exact(eq.grid.coord(i))).abs());
        }
        assert!(worst < 1e-4, "sp base error {worst}");
    }

    #[test]
    fn poisson_constant_input_center_against_fine_grid() {
        let eq = EquationSpec::poisson2d(32).unwrap();
        let base = constant_input_solution(&eq).unwrap();
        let fine_eq = EquationSpec::poisson2d(129).unwrap();
        let fine = constant_input_solution(&fine_eq).unwrap();
        let center = |g: GridSpec, u: &Tensor| {
            // bilinear interpolation at (0.5, 0.5)
            let pos = 0.5 * (g.n - 1) as f64;
            let i = pos.floor() as usize;
            let t = pos - i as f64;
            let n = g.n;
            let v = |a: usize, b: usize| u.data()[a * n + b];
            (1.0 - t) * (1.0 - t) * v(i, i)
                + t * (1.0 - t) * (v(i + 1, i) + v(i, i + 1))
                + t * t * v(i + 1, i + 1)
        };
        let c32 = center(eq.grid, &base.output.values);
        let c129 = center(fine_eq.grid, &fine.output.values);
        assert!((c32 - c129).abs() < 1e-3, "center {c32} vs fine {c129}");
    }

    #[test]
    fn solvers_are_linear() {
        let specs = [
            EquationSpec::antiderivative(32).unwrap(),
            EquationSpec::poisson2d(16).unwrap(),
            EquationSpec::sp_advdiff(32, 0.01).unwrap(),
        ];
        for eq in &specs {
            let solver = RefSolver::new(eq).unwrap();
            let cfg = GrfConfig::new(0.0, 0.4, eq.grid).unwrap();
            let sampler = GrfSampler::new(cfg).unwrap();
            for trial in 0..5 {
                let v1 = sampler.sample(100 + trial);
                let v2 = sampler.sample(200 + trial);
                let (c1, c2) = (3.7, -8.1);
                let mixed = v1.linear_combination(c1, &v2, c2).unwrap();
                let lhs = solver.solve(&mixed).unwrap();
                let rhs = solver
                    .solve(&v1)
                    .unwrap()
                    .linear_combination(c1, &solver.solve(&v2).unwrap(), c2)
                    .unwrap();
                let err = lhs.max_abs_diff(&rhs);
                assert!(err < 1e-8, "{:?} linearity error {err}", eq.kind);
            }
        }
    }

    #[test]
    fn dataset_generation_is_deterministic_and_seed_sensitive() {
        let eq = EquationSpec::antiderivative(16).unwrap();
        let grf = GrfConfig::new(0.0, 0.3, eq.grid).unwrap();
        let d1 = generate_dataset(&eq, &grf, 2, 7).unwrap();
        let d2 = generate_dataset(&eq, &grf, 2, 7).unwrap();
        assert_eq!(d1, d2);
        let d3 = generate_dataset(&eq, &grf, 2, 8).unwrap();
        assert_ne!(d1.pairs[0].input.values, d3.pairs[0].input.values);
        assert_ne!(
            d1.pairs[0].input.values.data(),
            d1.pairs[1].input.values.data()
        );
    }

    #[test]
    fn dataset_generation_rejects_empty() {
        let eq = EquationSpec::antiderivative(16).unwrap();
        let grf = GrfConfig::new(0.0, 0.3, eq.grid).unwrap();
        assert!(generate_dataset(&eq, &grf, 0, 7).is_err());
    }

    #[test]
    fn equation_spec_validation() {
        assert!(EquationSpec::sp_advdiff(16, 0.0).is_err());
        assert!(EquationSpec::sp_advdiff(16, 0.11).is_err());
        assert!(EquationSpec::sp_advdiff(16, 0.05).is_ok());
        let bad = EquationSpec {
            kind: EquationKind::Antiderivative,
            epsilon: Some(0.01),
            grid: GridSpec::one_d(8).unwrap(),
        };
        assert!(bad.validate().is_err());
    }
}
