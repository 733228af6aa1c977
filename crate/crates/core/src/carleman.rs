//! Both sides of the weighted Carleman inequality
//!
//! `∫ (s|∇_y u|² + s|∇ₓu|² + s³|u|²) e^{2sφ}
//!     ≤ C ∫ |Lu|² e^{2sφ} + C ∫_{∂D₊×G×(−T,T)} s|∂_ν u|² e^{2sφ}`
//!
//! evaluated by quadrature for a sweep of `s`, with the constant `C`
//! estimated as the largest observed ratio.

use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{AxisGroup, ComplexField, Face, GridSpec};
use crate::lattice::{Region, Side};
use crate::ops::{apply_l, OperatorCoefficients, WeightField};
use crate::prelude::*;
use crate::weight::{boundary_plus, WeightParams};

/// Relative tolerance of the admissibility conditions.
pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// `max |u|` on `∂D × G × (−T, T)`.
    pub gamma_x: f64,
    /// `max |u|` on `D × ∂G × (−T, T)`.
    pub gamma_y: f64,
    /// `max |∇_y u|` on `D × ∂G × (−T, T)`.
    pub gamma_y_gradient: f64,
    /// `max |u|` at `t = ±T`.
    pub time_ends: f64,
    /// `max |u|` over interior points, the reference scale.
    pub interior_max: f64,
    pub pass: bool,
}

/// Checks the vanishing conditions a field must meet for the estimate.
pub fn admissibility_check(u: &ComplexField) -> Result<AdmissibilityReport> {
    let grid = u.grid();
    let lat = grid.lattice();
    let full = lat.full_region();
    let mut gamma_x = 0.0f64;
    for a in 0..grid.n() {
        for side in [Side::Low, Side::High] {
            gamma_x = gamma_x.max(u.max_abs_in(&lat.face_region(a, side)));
        }
    }
    let grads = u.gradient(AxisGroup::Y)?;
    let mut gamma_y = 0.0f64;
    let mut gamma_y_gradient = 0.0f64;
    for j in 0..grid.m() {
        for side in [Side::Low, Side::High] {
            let face = lat.face_region(grid.y_axis(j), side);
            gamma_y = gamma_y.max(u.max_abs_in(&face));
            lat.for_each_in(&face, |flat, _| {
                let g2: f64 = grads.iter().map(|g| g.values()[flat].norm_sqr()).sum();
                gamma_y_gradient = gamma_y_gradient.max(g2.sqrt());
            });
        }
    }
    let ta = grid.t_axis();
    let time_ends = u
        .max_abs_in(&full.clone().fix(ta, 0))
        .max(u.max_abs_in(&full.fix(ta, grid.nt() - 1)));
    let interior_max = u.max_abs_in(&lat.interior_region());
    let limit = ADMISSIBILITY_TOLERANCE * interior_max;
    let pass = gamma_x <= limit && gamma_y <= limit && gamma_y_gradient <= limit && time_ends <= limit;
    Ok(AdmissibilityReport {
        gamma_x,
        gamma_y,
        gamma_y_gradient,
        time_ends,
        interior_max,
        pass,
    })
}

/// `s`-independent pieces of both sides, computed once per field.
#[derive(Debug, Clone)]
pub struct FieldQuantities {
    grid: GridSpec,
    /// `|∇ₓu|² + |∇_y u|²` per point.
    grad2: Vec<f64>,
    /// `|u|²` per point.
    abs2: Vec<f64>,
    /// `|Lu|²` per point (zero off the evaluated interior).
    lu2: Vec<f64>,
    /// `(face region, |∂_ν u|²)` for every face of `∂D₊`.
    traces: Vec<(Region, Vec<f64>)>,
}

impl FieldQuantities {
    pub fn new(u: &ComplexField, coeffs: &OperatorCoefficients, faces: &[Face]) -> Result<Self> {
        let grid = u.grid();
        let mut grad2 = vec![0.0; grid.len()];
        for group in [AxisGroup::X, AxisGroup::Y] {
            for g in u.gradient(group)? {
                for (acc, v) in grad2.iter_mut().zip(g.values()) {
                    *acc += v.norm_sqr();
                }
            }
        }
        let abs2 = u.values().iter().map(|v| v.norm_sqr()).collect();
        let lu2 = apply_l(u, coeffs)?.values().iter().map(|v| v.norm_sqr()).collect();
        let traces = if faces.is_empty() {
            Vec::new()
        } else {
            u.normal_derivative(faces)?
                .into_iter()
                .map(|t| (t.region, t.values.iter().map(|v| v.norm_sqr()).collect()))
                .collect()
        };
        Ok(Self {
            grid: grid.clone(),
            grad2,
            abs2,
            lu2,
            traces,
        })
    }

    /// `∫ (s|∇u|² + s³|u|²) e^{2sφ}`.
    pub fn lhs(&self, w: &WeightField, s: f64) -> Result<f64> {
        w.guard(s, 2.0)?;
        let lat = self.grid.lattice();
        let s3 = s * s * s;
        lat.integrate(&lat.full_region(), |f, _| {
            (s * self.grad2[f] + s3 * self.abs2[f]) * (2.0 * s * w.phi[f]).exp()
        })
    }

    /// `(∫ |Lu|² e^{2sφ}, ∫_{∂D₊} s|∂_ν u|² e^{2sφ})`.
    pub fn rhs(&self, w: &WeightField, s: f64) -> Result<(f64, f64)> {
        w.guard(s, 2.0)?;
        let lat = self.grid.lattice();
        let interior = lat.integrate(&lat.full_region(), |f, _| {
            self.lu2[f] * (2.0 * s * w.phi[f]).exp()
        })?;
        let mut boundary = 0.0;
        for (region, values) in &self.traces {
            let mut k = 0;
            boundary += lat.integrate(region, |f, _| {
                let v = s * values[k] * (2.0 * s * w.phi[f]).exp();
                k += 1;
                v
            })?;
        }
        Ok((interior, boundary))
    }
}

/// Left side of the estimate for one `s`.
pub fn carleman_lhs(u: &ComplexField, w: &WeightField, s: f64) -> Result<f64> {
    let coeffs = OperatorCoefficients::free(u.grid());
    FieldQuantities::new(u, &coeffs, &[])?.lhs(w, s)
}

/// Interior and boundary terms of the right side (with `C = 1`) for one `s`.
pub fn carleman_rhs(
    u: &ComplexField,
    w: &WeightField,
    s: f64,
    coeffs: &OperatorCoefficients,
) -> Result<(f64, f64)> {
    let faces = boundary_plus(u.grid(), &w.params().x0);
    FieldQuantities::new(u, coeffs, &faces)?.rhs(w, s)
}

/// `count` geometrically spaced values from `s_min` to `s_max`.
pub fn geometric_s_grid(s_min: f64, s_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(s_min > 0.0 && s_max > s_min) || count < 2 {
        return Err(Error::InvalidParameter(format!(
            "need 0 < s_min < s_max and at least two points (got {s_min}, {s_max}, {count})"
        )));
    }
    let q = (s_max / s_min).ln() / (count - 1) as f64;
    let mut v: Vec<f64> = (0..count).map(|k| s_min * (q * k as f64).exp()).collect();
    v[count - 1] = s_max;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanReport {
    pub label: String,
    pub gamma: f64,
    pub s_values: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs_interior: Vec<f64>,
    pub rhs_boundary: Vec<f64>,
    /// `lhs / (rhs_interior + rhs_boundary)`; `None` when the right side is 0.
    pub ratio: Vec<Option<f64>>,
    /// Largest defined ratio.
    pub empirical_c: Option<f64>,
    /// Index of the largest ratio in `s_values`.
    pub argmax: Option<usize>,
    pub admissibility: AdmissibilityReport,
    /// Values of `s` where the right side vanished while the left did not.
    pub violations: Vec<f64>,
    /// The field is identically zero.
    pub degenerate: bool,
}

impl CarlemanReport {
    /// Human-readable notes on degenerate or violated sweeps.
    pub fn notes(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.degenerate {
            out.push("degenerate field: all ratios undefined".into());
        }
        for s in &self.violations {
            out.push(format!("estimate violated at s = {s}"));
        }
        if !self.admissibility.pass {
            out.push("field is not admissible".into());
        }
        out
    }

    /// True when the largest ratio is not at the last `s` of the sweep.
    pub fn max_before_right_end(&self) -> bool {
        matches!(self.argmax, Some(i) if i + 1 < self.s_values.len())
    }
}

/// Evaluates both sides over a sweep of `s` for one field and weight.
pub fn sweep_s(
    u: &ComplexField,
    params: &WeightParams,
    s_grid: &[f64],
    coeffs: &OperatorCoefficients,
) -> Result<CarlemanReport> {
    if s_grid.is_empty() || s_grid.windows(2).any(|w| !(w[1] > w[0])) || s_grid[0] < 0.0 {
        return Err(Error::InvalidParameter(
            "s values must be non-negative and strictly increasing".into(),
        ));
    }
    let w = WeightField::new(params, u.grid())?;
    w.guard(*s_grid.last().unwrap_or(&0.0), 2.0)?;
    let faces = boundary_plus(u.grid(), &params.x0);
    let q = FieldQuantities::new(u, coeffs, &faces)?;
    let admissibility = admissibility_check(u)?;
    let degenerate = u.max_abs() == 0.0;
    let mut report = CarlemanReport {
        label: u.label().into(),
        gamma: params.gamma,
        s_values: s_grid.to_vec(),
        lhs: Vec::with_capacity(s_grid.len()),
        rhs_interior: Vec::with_capacity(s_grid.len()),
        rhs_boundary: Vec::with_capacity(s_grid.len()),
        ratio: Vec::with_capacity(s_grid.len()),
        empirical_c: None,
        argmax: None,
        admissibility,
        violations: Vec::new(),
        degenerate,
    };
    for (k, &s) in s_grid.iter().enumerate() {
        let lhs = q.lhs(&w, s)?;
        let (ri, rb) = q.rhs(&w, s)?;
        let rhs = ri + rb;
        let ratio = if rhs > 0.0 { Some(lhs / rhs) } else { None };
        if rhs == 0.0 && lhs > 0.0 {
            report.violations.push(s);
        }
        if let Some(r) = ratio {
            if report.empirical_c.is_none_or(|c| r > c) {
                report.empirical_c = Some(r);
                report.argmax = Some(k);
            }
        }
        report.lhs.push(lhs);
        report.rhs_interior.push(ri);
        report.rhs_boundary.push(rb);
        report.ratio.push(ratio);
    }
    Ok(report)
}

/// Sweeps of a family of fields for one `γ`, reduced to a single constant.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySweep {
    pub gamma: f64,
    pub s_values: Vec<f64>,
    pub reports: Vec<CarlemanReport>,
    /// Largest ratio over the family at each `s` (`None` if none defined).
    pub envelope: Vec<Option<f64>>,
    /// Largest ratio over all fields and all `s`.
    pub empirical_c: Option<f64>,
    /// Index in `s_values` where `empirical_c` is attained.
    pub argmax: Option<usize>,
}

impl FamilySweep {
    /// The family maximum is not attained at the largest `s`.
    pub fn max_before_right_end(&self) -> bool {
        self.argmax.is_some_and(|k| k + 1 < self.s_values.len())
    }

    /// `empirical_c` bounds every defined ratio of every field.
    pub fn bounds_all(&self) -> bool {
        self.empirical_c.is_some_and(|c| {
            self.reports
                .iter()
                .flat_map(|r| r.ratio.iter().flatten())
                .all(|&q| q <= c)
        })
    }
}

/// [`sweep_s`] for each `(field, coefficients)` pair with the same weight.
pub fn sweep_family(
    fields: &[(ComplexField, OperatorCoefficients)],
    params: &WeightParams,
    s_grid: &[f64],
) -> Result<FamilySweep> {
    let reports = fields
        .iter()
        .map(|(u, c)| sweep_s(u, params, s_grid, c))
        .collect::<Result<Vec<_>>>()?;
    let envelope: Vec<Option<f64>> = (0..s_grid.len())
        .map(|k| {
            reports
                .iter()
                .filter_map(|r| r.ratio[k])
                .fold(None, |acc: Option<f64>, q| Some(acc.map_or(q, |a| a.max(q))))
        })
        .collect();
    let mut empirical_c = None;
    let mut argmax = None;
    for (k, e) in envelope.iter().enumerate() {
        if let Some(q) = *e {
            if empirical_c.is_none_or(|c| q > c) {
                empirical_c = Some(q);
                argmax = Some(k);
            }
        }
    }
    Ok(FamilySweep {
        gamma: params.gamma,
        s_values: s_grid.to_vec(),
        reports,
        envelope,
        empirical_c,
        argmax,
    })
}

/// `exp(1 − 1/(1 − r²))` for `r = (s − c)/ρ` inside `(−1, 1)`, zero outside.
pub fn smooth_bump(s: f64, center: f64, radius: f64) -> f64 {
    let r = (s - center) / radius;
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

/// The fixed family of admissible test fields on `grid`, named.
///
/// * `tensor_bump`: compact bump in every variable, centred in the box.
/// * `offset_bump`: compact bump shifted toward the high-`x` side and off the
///   centre in `y` and `t`.
/// * `sine_bump`: `∏ sin(π ξᵢ)` in `x` (so `∂_ν u ≠ 0` on `∂D`) times compact
///   bumps in `y` and `t`.
/// * `modulated_bump`: `tensor_bump` times the plane wave `e^{i(kx·1 + l y·1 − ωt)}`,
///   `ω = m l² − n k²`, `k = 2π`, `l = π`.
/// * `modulated_sine`: `sine_bump` times the same plane wave.
pub fn test_field_family(grid: &GridSpec) -> Result<Vec<ComplexField>> {
    let n = grid.n();
    let (l, t_max) = (grid.half_width(), grid.horizon());
    let xc: Vec<f64> = (0..n).map(|i| 0.5 * (grid.x_min()[i] + grid.x_max()[i])).collect();
    let xr: Vec<f64> = (0..n).map(|i| 0.5 * (grid.x_max()[i] - grid.x_min()[i])).collect();
    let (k, lw) = (2.0 * PI, PI);
    let omega = grid.m() as f64 * lw * lw - n as f64 * k * k;
    let tensor = |x: &[f64], y: &[f64], t: f64, shift: f64| {
        let mut v = smooth_bump(t, -0.2 * shift * t_max, 0.75 * t_max);
        for i in 0..n {
            v *= smooth_bump(x[i], xc[i] + 0.3 * shift * xr[i], (0.85 - 0.3 * shift) * xr[i]);
        }
        for yj in y {
            v *= smooth_bump(*yj, 0.3 * shift * l, (0.75 - 0.3 * shift) * l);
        }
        v
    };
    let sine = |x: &[f64], y: &[f64], t: f64| {
        let mut v = smooth_bump(t, 0.0, 0.8 * t_max);
        for i in 0..n {
            v *= (PI * (x[i] - grid.x_min()[i]) / (2.0 * xr[i])).sin();
        }
        for yj in y {
            v *= smooth_bump(*yj, 0.0, 0.8 * l);
        }
        v
    };
    let wave = |x: &[f64], y: &[f64], t: f64| {
        let phase = k * x.iter().sum::<f64>() + lw * y.iter().sum::<f64>() - omega * t;
        Complex64::new(phase.cos(), phase.sin())
    };
    Ok(vec![
        ComplexField::from_fn(grid, "tensor_bump", |x, y, t| {
            Complex64::new(tensor(x, y, t, 0.0), 0.0)
        })?,
        ComplexField::from_fn(grid, "offset_bump", |x, y, t| {
            Complex64::new(tensor(x, y, t, 1.0), 0.0)
        })?,
        ComplexField::from_fn(grid, "sine_bump", |x, y, t| Complex64::new(sine(x, y, t), 0.0))?,
        ComplexField::from_fn(grid, "modulated_bump", |x, y, t| {
            wave(x, y, t) * tensor(x, y, t, 0.0)
        })?,
        ComplexField::from_fn(grid, "modulated_sine", |x, y, t| wave(x, y, t) * sine(x, y, t))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (GridSpec, WeightParams) {
        let g = GridSpec::interval(0.0, 1.0, 1.0, 1.0, 25, 25, 25).unwrap();
        let p = WeightParams::new(vec![-1.0], vec![0.0], 0.25, 0.5, 0.1, 0.1).unwrap();
        (g, p)
    }

    #[test]
    fn family_is_admissible() {
        let (g, _) = setup();
        let fam = test_field_family(&g).unwrap();
        assert_eq!(fam.len(), 5);
        for u in &fam {
            let a = admissibility_check(u).unwrap();
            assert!(a.pass, "{}: {a:?}", u.label());
        }
    }

    #[test]
    fn constant_is_not_admissible() {
        let (g, _) = setup();
        let one = ComplexField::from_fn(&g, "one", |_, _, _| Complex64::new(1.0, 0.0)).unwrap();
        let a = admissibility_check(&one).unwrap();
        assert!(!a.pass);
        assert_eq!(a.gamma_x, 1.0);
    }

    #[test]
    fn zero_field_and_zero_s() {
        let (g, p) = setup();
        let w = WeightField::new(&p, &g).unwrap();
        let z = ComplexField::zeros(&g, "z");
        assert_eq!(carleman_lhs(&z, &w, 3.0).unwrap(), 0.0);
        let c = OperatorCoefficients::free(&g);
        assert_eq!(carleman_rhs(&z, &w, 3.0, &c).unwrap(), (0.0, 0.0));
        let u = &test_field_family(&g).unwrap()[2];
        assert_eq!(carleman_lhs(u, &w, 0.0).unwrap(), 0.0);
        let rep = sweep_s(&z, &p, &[1.0, 2.0], &c).unwrap();
        assert!(rep.degenerate);
        assert!(rep.ratio.iter().all(Option::is_none));
        assert!(rep.empirical_c.is_none());
    }

    #[test]
    fn boundary_term_vanishes_for_interior_support() {
        let (g, p) = setup();
        let w = WeightField::new(&p, &g).unwrap();
        let c = OperatorCoefficients::free(&g);
        // Zero on the last three x nodes, so every one-sided stencil on ∂D₊ sees zeros.
        let u = ComplexField::from_fn(&g, "inner", |x, y, t| {
            let v = smooth_bump(x[0], 0.4, 0.4) * smooth_bump(y[0], 0.0, 0.7) * smooth_bump(t, 0.0, 0.7);
            Complex64::new(v, 0.0)
        })
        .unwrap();
        let (_, b) = carleman_rhs(&u, &w, 2.0, &c).unwrap();
        assert_eq!(b, 0.0);
        let sine = &test_field_family(&g).unwrap()[2];
        let (_, b) = carleman_rhs(sine, &w, 2.0, &c).unwrap();
        assert!(b > 0.0);
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let (g, p) = setup();
        let u = &test_field_family(&g).unwrap()[3];
        let c = OperatorCoefficients::free(&g);
        let s = [1.0, 2.0, 4.0];
        let a = sweep_s(u, &p, &s, &c).unwrap();
        let b = sweep_s(&u.scale(Complex64::new(2.0, 0.0)), &p, &s, &c).unwrap();
        for (x, y) in a.ratio.iter().zip(&b.ratio) {
            let (x, y) = (x.unwrap(), y.unwrap());
            assert!((x - y).abs() <= 1e-12 * x);
        }
        for (x, y) in a.lhs.iter().zip(&b.lhs) {
            assert!((4.0 * x - y).abs() <= 1e-12 * y);
        }
    }

    #[test]
    fn geometric_grid() {
        let s = geometric_s_grid(1.0, 32.0, 6).unwrap();
        assert_eq!(s.len(), 6);
        assert!((s[1] - 2.0).abs() < 1e-12 && (s[5] - 32.0).abs() == 0.0);
        assert!(geometric_s_grid(2.0, 1.0, 3).is_err());
    }
}
