//! Crank–Nicolson integration of `∂ₜu = −i(Hu + g)`, `H = Δₓ − Δ_y + p`,
//! with homogeneous Dirichlet values on the whole spatial boundary.
//!
//! The solution starts from the `t = 0` slice and is advanced to `+T` and,
//! with a negative step, to `−T`. For `n = m = 1` each step is a banded LU
//! solve (factored once per step sign); otherwise the system is solved by
//! restarted GMRES.

use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec, SpatialField};
use crate::lattice::EndStencil;
use crate::linalg::{gmres, BandLu, BandMatrix};
use crate::ops::OperatorCoefficients;
use crate::prelude::*;

/// Relative residual required of every linear solve.
pub const SOLVER_TOLERANCE: f64 = 1e-12;
const GMRES_RESTART: usize = 60;
const GMRES_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Span {
    Forward,
    Backward,
    Both,
}

/// Right-hand side `g` of `Au = g`.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    None,
    /// `g = f(x, y) R(x, y, t)`.
    Product { f: SpatialField, r: ComplexField },
    /// An arbitrary space-time source.
    Field(ComplexField),
}

impl Source {
    fn slice(&self, grid: &GridSpec, it: usize) -> Vec<Complex64> {
        match self {
            Source::None => vec![ZERO; grid.spatial_len()],
            Source::Product { f, r } => f
                .values()
                .iter()
                .zip(r.slice_values(it))
                .map(|(a, b)| a * b)
                .collect(),
            Source::Field(g) => g.slice_values(it).to_vec(),
        }
    }

    fn check(&self, grid: &GridSpec) -> Result<()> {
        let ok = match self {
            Source::None => true,
            Source::Product { f, r } => f.grid() == grid && r.grid() == grid,
            Source::Field(g) => g.grid() == grid,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("source does not match the grid".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionProblem {
    /// Only the potential enters `H`.
    pub coeffs: OperatorCoefficients,
    pub initial: SpatialField,
    pub source: Source,
    pub span: Span,
}

impl EvolutionProblem {
    pub fn grid(&self) -> &GridSpec {
        self.initial.grid()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: ComplexField,
    /// Relative residual of each linear solve, in stepping order.
    pub residuals: Vec<f64>,
    /// Krylov iterations of each solve (0 for direct solves).
    pub iterations: Vec<usize>,
    /// `∫|u|² dx dy` per time slice (zero outside the computed range).
    pub mass: Vec<f64>,
    /// Inclusive range of time indices that were computed.
    pub computed: (usize, usize),
}

/// Interior unknowns of one time slice and the order used by the solvers.
#[derive(Debug, Clone)]
struct Unknowns {
    /// Spatial flat index of each unknown.
    flat: Vec<usize>,
    /// Half bandwidth of `H` in this ordering (banded case).
    band: usize,
}

impl Unknowns {
    fn new(grid: &GridSpec) -> Self {
        let lat = grid.spatial_lattice();
        let dims = grid.n() + grid.m();
        let inner: Vec<usize> = (0..dims).map(|a| lat.axis_len(a) - 2).collect();
        // Fastest-varying axis first; the smallest interior extent goes first
        // so the banded ordering has the narrowest band.
        let mut order: Vec<usize> = (0..dims).collect();
        order.sort_by_key(|&a| (inner[a], a));
        let total: usize = inner.iter().product();
        let mut flat = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims];
        for _ in 0..total {
            flat.push(
                (0..dims)
                    .map(|a| (idx[a] + 1) * lat.stride(a))
                    .sum::<usize>(),
            );
            for &a in &order {
                idx[a] += 1;
                if idx[a] < inner[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let band = inner[order[0]];
        Self { flat, band }
    }
}

/// `H v = Δₓv − Δ_y v + p v` on interior points, `v` zero on the boundary.
pub fn apply_h(grid: &GridSpec, p: &SpatialField, v: &[Complex64]) -> Vec<Complex64> {
    let lat = grid.spatial_lattice();
    let mut out = vec![ZERO; lat.len()];
    let pv = p.values();
    lat.for_each_in(&lat.interior_region(), |flat, _| {
        let mut acc = pv[flat] * v[flat];
        for a in 0..grid.n() + grid.m() {
            let s = lat.stride(a);
            let h = lat.spacing(a);
            let dd = (v[flat + s] - 2.0 * v[flat] + v[flat - s]) / (h * h);
            if a < grid.n() {
                acc += dd;
            } else {
                acc -= dd;
            }
        }
        out[flat] = acc;
    });
    out
}

enum Solver {
    Banded(BandLu),
    Krylov,
}

/// One Crank–Nicolson step operator for a fixed signed `Δt`.
pub struct Stepper {
    grid: GridSpec,
    p: SpatialField,
    tau: f64,
    unknowns: Unknowns,
    solver: Solver,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub relative_residual: f64,
    pub iterations: usize,
}

impl Stepper {
    /// `tau` is the signed time step.
    pub fn new(grid: &GridSpec, p: &SpatialField, tau: f64) -> Result<Self> {
        if !(tau != 0.0 && tau.is_finite()) {
            return Err(Error::InvalidTimeStep(tau));
        }
        if p.grid() != grid {
            return Err(Error::InvalidParameter("potential does not match the grid".into()));
        }
        let unknowns = Unknowns::new(grid);
        let solver = if grid.n() == 1 && grid.m() == 1 {
            Solver::Banded(Self::assemble(grid, p, tau, &unknowns)?)
        } else {
            Solver::Krylov
        };
        Ok(Self {
            grid: grid.clone(),
            p: p.clone(),
            tau,
            unknowns,
            solver,
        })
    }

    fn assemble(grid: &GridSpec, p: &SpatialField, tau: f64, u: &Unknowns) -> Result<BandLu> {
        let lat = grid.spatial_lattice();
        let count = u.flat.len();
        let mut pos = vec![usize::MAX; lat.len()];
        for (k, &f) in u.flat.iter().enumerate() {
            pos[f] = k;
        }
        let c = Complex64::new(0.0, tau / 2.0);
        let mut m = BandMatrix::zeros(count, u.band, u.band);
        for (k, &f) in u.flat.iter().enumerate() {
            m.add(k, k, Complex64::new(1.0, 0.0) + c * p.values()[f]);
            for a in 0..2 {
                let h = lat.spacing(a);
                let w = if a == 0 { 1.0 } else { -1.0 } / (h * h);
                m.add(k, k, c * (-2.0 * w));
                let s = lat.stride(a);
                for nb in [f - s, f + s] {
                    if pos[nb] != usize::MAX {
                        m.add(k, pos[nb], c * w);
                    }
                }
            }
        }
        m.factor()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `(I + iτ/2·H) v` restricted to the unknowns.
    fn apply_lhs(&self, v: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        scratch.iter_mut().for_each(|s| *s = ZERO);
        for (k, &f) in self.unknowns.flat.iter().enumerate() {
            scratch[f] = v[k];
        }
        let hv = apply_h(&self.grid, &self.p, scratch);
        let c = Complex64::new(0.0, self.tau / 2.0);
        for (k, &f) in self.unknowns.flat.iter().enumerate() {
            out[k] = v[k] + c * hv[f];
        }
    }

    /// Advances `u_k` given the source at both ends of the step.
    pub fn step(
        &self,
        u_k: &[Complex64],
        g_k: &[Complex64],
        g_next: &[Complex64],
    ) -> Result<(Vec<Complex64>, StepDiagnostics)> {
        let sl = self.grid.spatial_len();
        if u_k.len() != sl || g_k.len() != sl || g_next.len() != sl {
            return Err(Error::ShapeMismatch {
                expected: sl,
                found: u_k.len().min(g_k.len()).min(g_next.len()),
            });
        }
        let c = Complex64::new(0.0, self.tau / 2.0);
        let hu = apply_h(&self.grid, &self.p, u_k);
        let rhs: Vec<Complex64> = self
            .unknowns
            .flat
            .iter()
            .map(|&f| u_k[f] - c * hu[f] - I * self.tau * 0.5 * (g_k[f] + g_next[f]))
            .collect();
        let mut scratch = vec![ZERO; sl];
        let (x, iterations) = match &self.solver {
            Solver::Banded(lu) => {
                let mut x = rhs.clone();
                lu.solve_in_place(&mut x);
                (x, 0)
            }
            Solver::Krylov => {
                let mut x: Vec<Complex64> = self.unknowns.flat.iter().map(|&f| u_k[f]).collect();
                let mut apply = |v: &[Complex64], out: &mut [Complex64]| {
                    self.apply_lhs(v, out, &mut scratch)
                };
                let out = gmres(&mut apply, &rhs, &mut x, SOLVER_TOLERANCE, GMRES_RESTART, GMRES_MAX_ITER)?;
                (x, out.iterations)
            }
        };
        let mut ax = vec![ZERO; x.len()];
        let mut scratch = vec![ZERO; sl];
        self.apply_lhs(&x, &mut ax, &mut scratch);
        let bn = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let rn = ax
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let relative_residual = if bn > 0.0 { rn / bn } else { rn };
        let mut next = vec![ZERO; sl];
        for (k, &f) in self.unknowns.flat.iter().enumerate() {
            next[f] = x[k];
        }
        if next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("time step".into()));
        }
        Ok((
            next,
            StepDiagnostics {
                relative_residual,
                iterations,
            },
        ))
    }
}

/// One Crank–Nicolson step of size `dt > 0` in the given direction.
pub fn step_scheme(
    grid: &GridSpec,
    u_k: &[Complex64],
    coeffs: &OperatorCoefficients,
    g_k: &[Complex64],
    g_next: &[Complex64],
    dt: f64,
    direction: Direction,
) -> Result<(Vec<Complex64>, StepDiagnostics)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let tau = match direction {
        Direction::Forward => dt,
        Direction::Backward => -dt,
    };
    Stepper::new(grid, &coeffs.p, tau)?.step(u_k, g_k, g_next)
}

/// `∫|v|² dx dy` of one slice.
pub fn slice_mass(grid: &GridSpec, v: &[Complex64]) -> f64 {
    let lat = grid.spatial_lattice();
    lat.integrate(&lat.full_region(), |flat, _| v[flat].norm_sqr())
        .unwrap_or(0.0)
}

/// Integrates the problem over the requested span from the `t = 0` slice.
/// Boundary values of the initial slice below `1e−12` of its maximum are
/// treated as round-off and set to zero.
pub fn solve(problem: &EvolutionProblem) -> Result<Trajectory> {
    let grid = problem.grid().clone();
    problem.coeffs.validate(&grid)?;
    problem.source.check(&grid)?;
    let sl = grid.spatial_len();
    let nt = grid.nt();
    let it0 = grid.zero_time_index();
    let dt = grid.dt();

    let mut initial = problem.initial.values().to_vec();
    let lat = grid.spatial_lattice();
    let interior = lat.interior_region();
    let mut on_boundary = 0.0f64;
    for (flat, v) in initial.iter_mut().enumerate() {
        let mut idx = vec![0; lat.dims()];
        lat.unflatten(flat, &mut idx);
        if !interior.contains(&idx) {
            on_boundary = on_boundary.max(v.norm());
            *v = ZERO;
        }
    }
    if on_boundary > 1e-12 * problem.initial.max_abs() {
        return Err(Error::InvalidParameter(format!(
            "initial data must vanish on the spatial boundary (found |u| = {on_boundary})"
        )));
    }

    let mut values = vec![ZERO; grid.len()];
    values[it0 * sl..(it0 + 1) * sl].copy_from_slice(&initial);
    let mut residuals = Vec::new();
    let mut iterations = Vec::new();
    let mut mass = vec![0.0; nt];
    mass[it0] = slice_mass(&grid, &initial);

    let mut run = |tau: f64, indices: &mut dyn Iterator<Item = (usize, usize)>| -> Result<()> {
        let stepper = Stepper::new(&grid, &problem.coeffs.p, tau)?;
        for (from, to) in indices {
            let u_k = values[from * sl..(from + 1) * sl].to_vec();
            let g_k = problem.source.slice(&grid, from);
            let g_next = problem.source.slice(&grid, to);
            let (next, diag) = stepper.step(&u_k, &g_k, &g_next)?;
            mass[to] = slice_mass(&grid, &next);
            values[to * sl..(to + 1) * sl].copy_from_slice(&next);
            residuals.push(diag.relative_residual);
            iterations.push(diag.iterations);
        }
        Ok(())
    };
    let mut computed = (it0, it0);
    if matches!(problem.span, Span::Forward | Span::Both) {
        run(dt, &mut (it0..nt - 1).map(|i| (i, i + 1)))?;
        computed.1 = nt - 1;
    }
    if matches!(problem.span, Span::Backward | Span::Both) {
        run(-dt, &mut (1..=it0).rev().map(|i| (i, i - 1)))?;
        computed.0 = 0;
    }
    Ok(Trajectory {
        u: ComplexField::from_values(&grid, values, "u")?,
        residuals,
        iterations,
        mass,
        computed,
    })
}

/// `∂ₜᵏu` for `k ∈ {1, 2}`: central differences, one-sided at `t = ±T`.
pub fn time_derivatives(u: &ComplexField, k: usize) -> Result<ComplexField> {
    if u.grid().nt() < 5 {
        return Err(Error::ShortTrajectory {
            needed: 5,
            found: u.grid().nt(),
        });
    }
    match k {
        1 => u.time_derivative(),
        2 => u.second_time_derivative(),
        _ => Err(Error::InvalidDerivativeOrder(k)),
    }
}

/// Discrete `H²`-type norm over all of `Ω` of `v`: `v`, all first spatial
/// derivatives and every second spatial derivative multi-index once.
pub fn h2_norm(v: &ComplexField) -> Result<f64> {
    let grid = v.grid();
    let lat = grid.lattice();
    let spatial = grid.n() + grid.m();
    let region = lat.full_region();
    let mut total = lat.integrate(&region, |f, _| v.values()[f].norm_sqr())?;
    let mut firsts = Vec::with_capacity(spatial);
    for a in 0..spatial {
        let d = lat.derivative(v.values(), a)?;
        total += lat.integrate(&region, |f, _| d[f].norm_sqr())?;
        firsts.push(d);
    }
    for a in 0..spatial {
        let daa = lat.second_difference(v.values(), a, EndStencil::OneSided)?;
        total += lat.integrate(&region, |f, _| daa[f].norm_sqr())?;
        for b in a + 1..spatial {
            let dab = lat.derivative(&firsts[a], b)?;
            total += lat.integrate(&region, |f, _| dab[f].norm_sqr())?;
        }
    }
    Ok(total.sqrt())
}

/// Empirical a priori bound `M = max_{k=1,2} ‖∂ₜᵏu‖_{H²}`.
pub fn apriori_m(u: &ComplexField) -> Result<f64> {
    let m1 = h2_norm(&time_derivatives(u, 1)?)?;
    let m2 = h2_norm(&time_derivatives(u, 2)?)?;
    Ok(m1.max(m2))
}
