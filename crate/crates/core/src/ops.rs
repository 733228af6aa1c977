//! The operators `L₀ = i∂ₜ + Δ_y − Δₓ`, `A = L₀ − p`, the general `L` with
//! first-order terms, and the Carleman conjugates `P_s`, `P_s⁺`, `P_s⁻`.
//!
//! Every operator is evaluated on interior points of the space-time lattice
//! (all spatial axes and the time axis strictly inside) and returns zero on
//! the remaining points; [`evaluated_region`] names the evaluated set.

use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec, SpatialField};
use crate::lattice::{Lattice, Region};
use crate::prelude::*;
use crate::weight::WeightParams;

/// Largest exponent passed to `exp` before a weight is considered to overflow.
pub const MAX_EXPONENT: f64 = 700.0;

/// Points on which the operators of this module are evaluated.
pub fn evaluated_region(grid: &GridSpec) -> Region {
    grid.lattice().interior_region()
}

/// Three-point stencils on a lattice-shaped array.
pub(crate) struct Stencil<'a> {
    lat: &'a Lattice,
    u: &'a [Complex64],
}

impl<'a> Stencil<'a> {
    pub(crate) fn new(lat: &'a Lattice, u: &'a [Complex64]) -> Self {
        Self { lat, u }
    }

    #[inline]
    pub(crate) fn d(&self, axis: usize, flat: usize) -> Complex64 {
        let s = self.lat.stride(axis);
        (self.u[flat + s] - self.u[flat - s]) / (2.0 * self.lat.spacing(axis))
    }

    #[inline]
    pub(crate) fn dd(&self, axis: usize, flat: usize) -> Complex64 {
        let s = self.lat.stride(axis);
        let h = self.lat.spacing(axis);
        (self.u[flat + s] - 2.0 * self.u[flat] + self.u[flat - s]) / (h * h)
    }

    /// `i∂ₜu + Δ_y u − Δₓ u` at an interior point.
    #[inline]
    pub(crate) fn l0(&self, grid: &GridSpec, flat: usize) -> Complex64 {
        let mut v = I * self.d(grid.t_axis(), flat);
        for a in 0..grid.n() {
            v -= self.dd(a, flat);
        }
        for j in 0..grid.m() {
            v += self.dd(grid.y_axis(j), flat);
        }
        v
    }
}

fn check_grid(field: &ComplexField, grid: &GridSpec) -> Result<()> {
    if field.grid() != grid {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: field.grid().len(),
        });
    }
    Ok(())
}

fn interior_map(u: &ComplexField, mut f: impl FnMut(&Stencil, usize) -> Complex64) -> ComplexField {
    let grid = u.grid();
    let lat = grid.lattice();
    let st = Stencil::new(lat, u.values());
    let mut out = vec![ZERO; lat.len()];
    lat.for_each_in(&lat.interior_region(), |flat, _| out[flat] = f(&st, flat));
    ComplexField::from_raw(grid, out, u.label())
}

/// `L₀u = i∂ₜu + Δ_y u − Δₓ u`.
pub fn apply_l0(u: &ComplexField) -> ComplexField {
    let grid = u.grid();
    interior_map(u, |st, flat| st.l0(grid, flat))
}

/// `Au = L₀u − p u`.
pub fn apply_a(u: &ComplexField, p: &SpatialField) -> Result<ComplexField> {
    let grid = u.grid();
    if p.grid() != grid {
        return Err(Error::ShapeMismatch {
            expected: grid.spatial_len(),
            found: p.grid().spatial_len(),
        });
    }
    let sl = grid.spatial_len();
    let pv = p.values();
    let uv = u.values();
    Ok(interior_map(u, |st, flat| st.l0(grid, flat) - pv[flat % sl] * uv[flat]))
}

/// A bounded coefficient of `L`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Zero,
    Constant(Complex64),
    /// Time-independent, on `D × G`.
    Spatial(SpatialField),
    /// Space-time dependent.
    Field(ComplexField),
}

impl Coefficient {
    #[inline]
    fn at(&self, flat: usize, spatial_len: usize) -> Complex64 {
        match self {
            Coefficient::Zero => ZERO,
            Coefficient::Constant(c) => *c,
            Coefficient::Spatial(f) => f.values()[flat % spatial_len],
            Coefficient::Field(f) => f.values()[flat],
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero)
    }

    fn check(&self, grid: &GridSpec) -> Result<()> {
        let ok = match self {
            Coefficient::Zero => true,
            Coefficient::Constant(c) => c.re.is_finite() && c.im.is_finite(),
            Coefficient::Spatial(f) => f.grid() == grid,
            Coefficient::Field(f) => f.grid() == grid,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("coefficient does not match the grid".into()))
        }
    }

    /// `sup |c|`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::Constant(c) => c.norm(),
            Coefficient::Spatial(f) => f.max_abs(),
            Coefficient::Field(f) => f.max_abs(),
        }
    }
}

/// Potential `p` and the lower-order coefficients `aᵢ`, `bⱼ`, `a₀` of `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCoefficients {
    pub p: SpatialField,
    pub a: Vec<Coefficient>,
    pub b: Vec<Coefficient>,
    pub a0: Coefficient,
}

impl OperatorCoefficients {
    /// `aᵢ = bⱼ = 0`, `a₀ = −p`, so that `L = A`.
    pub fn from_potential(p: SpatialField) -> Self {
        let grid = p.grid();
        let a0 = Coefficient::Spatial(p.scale(Complex64::new(-1.0, 0.0)));
        Self {
            a: vec![Coefficient::Zero; grid.n()],
            b: vec![Coefficient::Zero; grid.m()],
            a0,
            p,
        }
    }

    /// `p = 0` and `L = L₀`.
    pub fn free(grid: &GridSpec) -> Self {
        Self {
            p: SpatialField::zeros(grid),
            a: vec![Coefficient::Zero; grid.n()],
            b: vec![Coefficient::Zero; grid.m()],
            a0: Coefficient::Zero,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.p.grid()
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.p.grid() != grid || self.a.len() != grid.n() || self.b.len() != grid.m() {
            return Err(Error::InvalidParameter(
                "coefficient set does not match the grid".into(),
            ));
        }
        for c in self.a.iter().chain(&self.b).chain(core::iter::once(&self.a0)) {
            c.check(grid)?;
        }
        Ok(())
    }

    /// True when `p` has no imaginary part.
    pub fn is_real_potential(&self) -> bool {
        self.p.max_imag() == 0.0
    }
}

/// `Lu = L₀u + Σ aᵢ ∂_{xᵢ}u + Σ bⱼ ∂_{yⱼ}u + a₀u`.
pub fn apply_l(u: &ComplexField, coeffs: &OperatorCoefficients) -> Result<ComplexField> {
    let grid = u.grid();
    coeffs.validate(grid)?;
    let sl = grid.spatial_len();
    let uv = u.values();
    Ok(interior_map(u, |st, flat| {
        let mut v = st.l0(grid, flat) + coeffs.a0.at(flat, sl) * uv[flat];
        for (i, c) in coeffs.a.iter().enumerate() {
            if !c.is_zero() {
                v += c.at(flat, sl) * st.d(grid.x_axis(i), flat);
            }
        }
        for (j, c) in coeffs.b.iter().enumerate() {
            if !c.is_zero() {
                v += c.at(flat, sl) * st.d(grid.y_axis(j), flat);
            }
        }
        v
    }))
}

/// `φ` and its closed-form derivatives sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    grid: GridSpec,
    params: WeightParams,
    pub phi: Vec<f64>,
    pub dt_phi: Vec<f64>,
    pub grad_x: Vec<Vec<f64>>,
    pub grad_y: Vec<Vec<f64>>,
    pub lap_x: Vec<f64>,
    pub lap_y: Vec<f64>,
    max_phi: f64,
}

impl WeightField {
    pub fn new(params: &WeightParams, grid: &GridSpec) -> Result<Self> {
        params.check_grid(grid)?;
        let len = grid.len();
        let mut phi = vec![0.0; len];
        let mut dt_phi = vec![0.0; len];
        let mut grad_x = vec![vec![0.0; len]; grid.n()];
        let mut grad_y = vec![vec![0.0; len]; grid.m()];
        let mut lap_x = vec![0.0; len];
        let mut lap_y = vec![0.0; len];
        grid.for_each_point(&grid.lattice().full_region(), |flat, x, y, t| {
            let d = params.derivatives(x, y, t);
            phi[flat] = d.phi;
            dt_phi[flat] = d.dt_phi;
            for (i, g) in d.grad_x.iter().enumerate() {
                grad_x[i][flat] = *g;
            }
            for (j, g) in d.grad_y.iter().enumerate() {
                grad_y[j][flat] = *g;
            }
            lap_x[flat] = d.lap_x;
            lap_y[flat] = d.lap_y;
        });
        let max_phi = phi.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            grid: grid.clone(),
            params: params.clone(),
            phi,
            dt_phi,
            grad_x,
            grad_y,
            lap_x,
            lap_y,
            max_phi,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn params(&self) -> &WeightParams {
        &self.params
    }
    pub fn max_phi(&self) -> f64 {
        self.max_phi
    }

    /// Errors with [`Error::WeightOverflow`] if `factor·s·max φ` exceeds
    /// [`MAX_EXPONENT`].
    pub fn guard(&self, s: f64, factor: f64) -> Result<()> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("s = {s} must be non-negative")));
        }
        let exponent = factor * s * self.max_phi;
        if exponent > MAX_EXPONENT {
            return Err(Error::WeightOverflow { exponent });
        }
        Ok(())
    }

    fn check(&self, z: &ComplexField) -> Result<()> {
        check_grid(z, &self.grid)
    }
}

fn scale_by_weight(u: &ComplexField, w: &WeightField, s: f64, sign: f64) -> Result<ComplexField> {
    w.check(u)?;
    w.guard(s, 1.0)?;
    if s == 0.0 {
        return Ok(u.clone());
    }
    let values = u
        .values()
        .iter()
        .zip(&w.phi)
        .map(|(v, p)| v * (sign * s * p).exp())
        .collect();
    Ok(ComplexField::from_raw(u.grid(), values, u.label()))
}

/// `z = e^{sφ}u`.
pub fn conjugate(u: &ComplexField, w: &WeightField, s: f64) -> Result<ComplexField> {
    scale_by_weight(u, w, s, 1.0)
}

/// `u = e^{−sφ}z`.
pub fn unconjugate(z: &ComplexField, w: &WeightField, s: f64) -> Result<ComplexField> {
    scale_by_weight(z, w, s, -1.0)
}

/// `P_s z = e^{sφ} L₀(e^{−sφ} z)`, by literal conjugation.
pub fn apply_ps(z: &ComplexField, w: &WeightField, s: f64) -> Result<ComplexField> {
    let u = unconjugate(z, w, s)?;
    conjugate(&apply_l0(&u), w, s)
}

/// `P_s⁺z = i∂ₜz + Δ_y z − Δₓ z + s²(|∇_yφ|² − |∇ₓφ|²) z`.
pub fn apply_ps_plus(z: &ComplexField, w: &WeightField, s: f64) -> Result<ComplexField> {
    w.check(z)?;
    w.guard(s, 1.0)?;
    let grid = z.grid();
    let zv = z.values();
    let s2 = s * s;
    Ok(interior_map(z, |st, flat| {
        let gy: f64 = w.grad_y.iter().map(|g| g[flat] * g[flat]).sum();
        let gx: f64 = w.grad_x.iter().map(|g| g[flat] * g[flat]).sum();
        st.l0(grid, flat) + s2 * (gy - gx) * zv[flat]
    }))
}

/// `P_s⁻z = −2s(∇_yφ·∇_y z − ∇ₓφ·∇ₓ z) − s(Δ_yφ − Δₓφ) z`.
pub fn apply_ps_minus(z: &ComplexField, w: &WeightField, s: f64) -> Result<ComplexField> {
    w.check(z)?;
    w.guard(s, 1.0)?;
    let grid = z.grid();
    let zv = z.values();
    Ok(interior_map(z, |st, flat| {
        let mut dot = ZERO;
        for (j, g) in w.grad_y.iter().enumerate() {
            dot += g[flat] * st.d(grid.y_axis(j), flat);
        }
        for (i, g) in w.grad_x.iter().enumerate() {
            dot -= g[flat] * st.d(grid.x_axis(i), flat);
        }
        -2.0 * s * dot - s * (w.lap_y[flat] - w.lap_x[flat]) * zv[flat]
    }))
}

/// Max over evaluated points of `|P_s z + is∂ₜφ z − P_s⁺z − P_s⁻z|`.
pub fn decomposition_residual(z: &ComplexField, w: &WeightField, s: f64) -> Result<f64> {
    let ps = apply_ps(z, w, s)?;
    let plus = apply_ps_plus(z, w, s)?;
    let minus = apply_ps_minus(z, w, s)?;
    let lat = z.grid().lattice();
    let (a, b, c, zv) = (ps.values(), plus.values(), minus.values(), z.values());
    let mut worst = 0.0f64;
    lat.for_each_in(&lat.interior_region(), |flat, _| {
        let r = a[flat] + I * s * w.dt_phi[flat] * zv[flat] - b[flat] - c[flat];
        worst = worst.max(r.norm());
    });
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::interval(0.0, 1.0, 1.0, 1.0, 21, 21, 21).unwrap()
    }

    fn wparams() -> WeightParams {
        WeightParams::new(vec![-1.0], vec![0.0], 0.25, 0.5, 0.1, 0.1).unwrap()
    }

    fn bump(g: &GridSpec) -> ComplexField {
        ComplexField::from_fn(g, "bump", |x, y, t| {
            let r = (x[0] - 0.5).powi(2) + y[0].powi(2) + t * t;
            Complex64::new((-8.0 * r).exp(), 0.3 * (-6.0 * r).exp())
        })
        .unwrap()
    }

    #[test]
    fn l0_of_zero_and_linear_time() {
        let g = grid();
        assert_eq!(apply_l0(&ComplexField::zeros(&g, "z")).max_abs(), 0.0);
        let u = ComplexField::from_fn(&g, "t", |_, _, t| Complex64::new(t, 0.0)).unwrap();
        let l = apply_l0(&u);
        g.lattice().for_each_in(&evaluated_region(&g), |flat, _| {
            assert!((l.values()[flat] - I).norm() < 1e-12);
        });
    }

    #[test]
    fn plane_wave_dispersion() {
        let (k, l) = (2.0, 1.0);
        let w = l * l - k * k;
        let mut errs = Vec::new();
        for n in [21, 41] {
            let g = GridSpec::interval(0.0, 1.0, 1.0, 1.0, n, n, n).unwrap();
            let u = ComplexField::from_fn(&g, "pw", |x, y, t| {
                Complex64::new(0.0, k * x[0] + l * y[0] - w * t).exp()
            })
            .unwrap();
            errs.push(apply_l0(&u).max_abs());
        }
        assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
        assert!(errs[0] < 0.1);
    }

    #[test]
    fn potential_terms() {
        let g = grid();
        let p = SpatialField::from_real_fn(&g, |x, _| x[0]).unwrap();
        let one = ComplexField::from_fn(&g, "one", |_, _, _| Complex64::new(1.0, 0.0)).unwrap();
        let au = apply_a(&one, &p).unwrap();
        g.for_each_point(&evaluated_region(&g), |flat, x, _, _| {
            assert!((au.values()[flat] + x[0]).norm() < 1e-12);
        });
        let u = bump(&g);
        let zero_p = SpatialField::zeros(&g);
        assert_eq!(apply_a(&u, &zero_p).unwrap(), apply_l0(&u));
        let coeffs = OperatorCoefficients::from_potential(p.clone());
        let diff = apply_l(&u, &coeffs).unwrap().combine(ONE, &apply_a(&u, &p).unwrap(), -ONE).unwrap();
        assert!(diff.max_abs() < 1e-14);
    }

    const ONE: Complex64 = Complex64::new(1.0, 0.0);

    #[test]
    fn conjugation_round_trip() {
        let g = grid();
        let w = WeightField::new(&wparams(), &g).unwrap();
        let u = bump(&g);
        assert_eq!(conjugate(&u, &w, 0.0).unwrap(), u);
        let back = unconjugate(&conjugate(&u, &w, 1.0).unwrap(), &w, 1.0).unwrap();
        let err = back.combine(ONE, &u, -ONE).unwrap().max_abs();
        assert!(err < 1e-14);
        let one = ComplexField::from_fn(&g, "one", |_, _, _| ONE).unwrap();
        let z = conjugate(&one, &w, 2.0).unwrap();
        g.for_each_point(&g.lattice().full_region(), |flat, x, y, t| {
            let want = (2.0 * wparams().phi(x, y, t)).exp();
            assert!((z.values()[flat].re - want).abs() < 1e-12 * want);
        });
    }

    #[test]
    fn overflow_guard() {
        let g = grid();
        let w = WeightField::new(&wparams(), &g).unwrap();
        let s = 701.0 / w.max_phi();
        let e = conjugate(&bump(&g), &w, s).unwrap_err();
        assert!(matches!(e, Error::WeightOverflow { .. }));
        assert!(e.to_string().contains("weight overflow; rescale s or γ"));
    }

    #[test]
    fn s_zero_reductions() {
        let g = grid();
        let w = WeightField::new(&wparams(), &g).unwrap();
        let z = bump(&g);
        assert_eq!(apply_ps_plus(&z, &w, 0.0).unwrap(), apply_l0(&z));
        assert_eq!(apply_ps_minus(&z, &w, 0.0).unwrap().max_abs(), 0.0);
        assert_eq!(decomposition_residual(&z, &w, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn ps_minus_on_constant() {
        let g = grid();
        let p = wparams();
        let w = WeightField::new(&p, &g).unwrap();
        let one = ComplexField::from_fn(&g, "one", |_, _, _| ONE).unwrap();
        let m = apply_ps_minus(&one, &w, 1.5).unwrap();
        g.for_each_point(&evaluated_region(&g), |flat, x, y, t| {
            let d = p.derivatives(x, y, t);
            let want = -1.5 * (d.lap_y - d.lap_x);
            assert!((m.values()[flat].re - want).abs() < 1e-12);
            assert_eq!(m.values()[flat].im, 0.0);
        });
    }
}
