//! The Carleman weight `φ = e^{γψ}`, `ψ = |x−x₀|² − α|y−y₀|² − βt²`, and the
//! geometry that makes it usable: pseudoconvexity, the illuminated faces
//! `∂D₊`, parameter selection, sign conditions on `ψ` and the cut-off `χ`.

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Face, GridSpec};
use crate::prelude::*;

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightParams {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// `ρ > 1`, set by parameter selection.
    pub rho: Option<f64>,
    /// Cut-off margin, set by the sign-condition search.
    pub delta: Option<f64>,
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0,1)")))
    }
}

impl WeightParams {
    pub fn new(
        x0: Vec<f64>,
        y0: Vec<f64>,
        alpha: f64,
        beta: f64,
        gamma: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if x0.is_empty() || y0.is_empty() {
            return Err(Error::InvalidParameter("x0 and y0 must be non-empty".into()));
        }
        if x0.iter().chain(&y0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("x0 and y0 must be finite".into()));
        }
        check_open_unit("alpha", alpha)?;
        check_open_unit("beta", beta)?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} must be positive")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
        }
        Ok(Self {
            x0,
            y0,
            alpha,
            beta,
            gamma,
            epsilon,
            rho: None,
            delta: None,
        })
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        if !(rho > 1.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho = {rho} must exceed 1")));
        }
        self.rho = Some(rho);
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
        }
        self.delta = Some(delta);
        Ok(self)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut p = Self::new(
            self.x0.clone(),
            self.y0.clone(),
            self.alpha,
            self.beta,
            gamma,
            self.epsilon,
        )?;
        p.rho = self.rho;
        p.delta = self.delta;
        Ok(p)
    }

    /// Checks that the point dimensions match the grid.
    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.x0.len() != grid.n() || self.y0.len() != grid.m() {
            return Err(Error::InvalidParameter(format!(
                "weight centre has dimensions ({}, {}) but the grid has n = {}, m = {}",
                self.x0.len(),
                self.y0.len(),
                grid.n(),
                grid.m()
            )));
        }
        Ok(())
    }

    pub fn psi(&self, x: &[f64], y: &[f64], t: f64) -> f64 {
        dist_sq(x, &self.x0) - self.alpha * dist_sq(y, &self.y0) - self.beta * t * t
    }

    pub fn phi(&self, x: &[f64], y: &[f64], t: f64) -> f64 {
        (self.gamma * self.psi(x, y, t)).exp()
    }

    /// `φ` and the closed-form derivatives used by the conjugated operators.
    pub fn derivatives(&self, x: &[f64], y: &[f64], t: f64) -> WeightDerivatives {
        let g = self.gamma;
        let phi = self.phi(x, y, t);
        let grad_psi_x: Vec<f64> = x.iter().zip(&self.x0).map(|(a, b)| 2.0 * (a - b)).collect();
        let grad_psi_y: Vec<f64> = y
            .iter()
            .zip(&self.y0)
            .map(|(a, b)| -2.0 * self.alpha * (a - b))
            .collect();
        let lap_psi_x = 2.0 * x.len() as f64;
        let lap_psi_y = -2.0 * self.alpha * y.len() as f64;
        let nx2: f64 = grad_psi_x.iter().map(|v| v * v).sum();
        let ny2: f64 = grad_psi_y.iter().map(|v| v * v).sum();
        let dt_factor = -2.0 * g * g * self.beta * t * phi;
        WeightDerivatives {
            phi,
            dt_phi: -2.0 * g * self.beta * t * phi,
            grad_x: grad_psi_x.iter().map(|v| g * phi * v).collect(),
            grad_y: grad_psi_y.iter().map(|v| g * phi * v).collect(),
            lap_x: g * phi * (lap_psi_x + g * nx2),
            lap_y: g * phi * (lap_psi_y + g * ny2),
            dt_grad_x: grad_psi_x.iter().map(|v| dt_factor * v).collect(),
            dt_grad_y: grad_psi_y.iter().map(|v| dt_factor * v).collect(),
        }
    }

    /// `(d₁, d₂) = (Δ_yψ − Δₓψ, |∇_yψ|² − |∇ₓψ|²)`.
    pub fn d1_d2(&self, x: &[f64], y: &[f64], _t: f64) -> (f64, f64) {
        let d1 = -2.0 * self.alpha * y.len() as f64 - 2.0 * x.len() as f64;
        let d2 = 4.0 * self.alpha * self.alpha * dist_sq(y, &self.y0) - 4.0 * dist_sq(x, &self.x0);
        (d1, d2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightDerivatives {
    pub phi: f64,
    pub dt_phi: f64,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub lap_x: f64,
    pub lap_y: f64,
    pub dt_grad_x: Vec<f64>,
    pub dt_grad_y: Vec<f64>,
}

/// `(r, r̃)`: smallest and largest distance from `x0` to the closed box.
pub fn box_distances(x_min: &[f64], x_max: &[f64], x0: &[f64]) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for i in 0..x0.len() {
        let c = x0[i].clamp(x_min[i], x_max[i]);
        near += (x0[i] - c) * (x0[i] - c);
        let f = (x0[i] - x_min[i]).abs().max((x0[i] - x_max[i]).abs());
        far += f * f;
    }
    (near.sqrt(), far.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoconvexityReport {
    /// `sqrt` of the grid minimum of `|x−x₀|² − α²|y|² − β²t²`.
    pub delta0: f64,
    pub min_value: f64,
    /// `(x, y, t)` of the minimum, concatenated.
    pub argmin: Vec<f64>,
    /// Same minimum with `|y − y₀|` in place of `|y|`.
    pub centered_min_value: f64,
}

/// Grid minimum of `|x−x₀|² − α²|y|² − β²t²`; errors unless it is positive.
pub fn check_pseudoconvexity(params: &WeightParams, grid: &GridSpec) -> Result<PseudoconvexityReport> {
    params.check_grid(grid)?;
    let (a2, b2) = (params.alpha * params.alpha, params.beta * params.beta);
    let zero_y = vec![0.0; grid.m()];
    let mut min_value = f64::INFINITY;
    let mut centered = f64::INFINITY;
    let mut argmin = Vec::new();
    grid.for_each_point(&grid.lattice().full_region(), |_, x, y, t| {
        let dx = dist_sq(x, &params.x0);
        let v = dx - a2 * dist_sq(y, &zero_y) - b2 * t * t;
        if v < min_value {
            min_value = v;
            argmin.clear();
            argmin.extend_from_slice(x);
            argmin.extend_from_slice(y);
            argmin.push(t);
        }
        centered = centered.min(dx - a2 * dist_sq(y, &params.y0) - b2 * t * t);
    });
    if grid.contains_x(&params.x0) {
        // The grid may miss x₀ itself; the violation is at x = x₀.
        let l = grid.half_width();
        let t = grid.horizon();
        let mut point = params.x0.clone();
        point.extend(core::iter::repeat_n(l, grid.m()));
        point.push(t);
        let value = -a2 * l * l * grid.m() as f64 - b2 * t * t;
        return Err(Error::PseudoconvexityViolated { point, value });
    }
    if !(min_value > 0.0) {
        return Err(Error::PseudoconvexityViolated {
            point: argmin,
            value: min_value,
        });
    }
    Ok(PseudoconvexityReport {
        delta0: min_value.sqrt(),
        min_value,
        argmin,
        centered_min_value: centered,
    })
}

/// Faces of `∂D` on which `(x − x₀)·ν ≥ 0`.
pub fn boundary_plus(grid: &GridSpec, x0: &[f64]) -> Vec<Face> {
    grid.faces()
        .into_iter()
        .filter(|f| (f.position(grid) - x0[f.axis]) * f.normal_sign() >= 0.0)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSelection {
    pub r: f64,
    pub r_tilde: f64,
    /// Open interval of admissible `α`.
    pub alpha_interval: (f64, f64),
    pub alpha: f64,
    pub rho: f64,
    pub delta: f64,
    /// Admissible radius for `|y₀|`.
    pub y0_radius: f64,
}

/// Picks `α`, `ρ`, `δ` and the admissible `y₀` radius for the box `D`,
/// the point `x₀` and the half-width `L`.
pub fn select_parameters(
    x_min: &[f64],
    x_max: &[f64],
    x0: &[f64],
    l: f64,
    epsilon: f64,
) -> Result<ParameterSelection> {
    if x0.len() != x_min.len() || x_max.len() != x_min.len() {
        return Err(Error::InvalidParameter("x0 and box dimensions differ".into()));
    }
    if !(l > 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "L = {l} and epsilon = {epsilon} must be positive"
        )));
    }
    let (r, r_tilde) = box_distances(x_min, x_max, x0);
    if !(r > 0.0) {
        return Err(Error::InfeasibleGeometry("x0 lies in the closed box".into()));
    }
    let lo = r_tilde * r_tilde / (l * l);
    let hi = (r / l).min(1.0);
    if !(lo < hi) {
        return Err(Error::InfeasibleGeometry(format!(
            "alpha interval ({lo}, {hi}) is empty"
        )));
    }
    let alpha = (lo * hi).sqrt();
    let rho = 1.1 * (r_tilde / r).max(alpha.sqrt() * l / r);
    let y0_radius = l - l / rho - epsilon;
    if y0_radius < 0.0 {
        return Err(Error::InfeasibleGeometry(format!(
            "no admissible y0: L − L/rho − epsilon = {y0_radius}"
        )));
    }
    let gap = (l - l / rho) / 2.0;
    let mut delta = l / 8.0;
    while !(delta < gap) {
        delta /= 2.0;
    }
    Ok(ParameterSelection {
        r,
        r_tilde,
        alpha_interval: (lo, hi),
        alpha,
        rho,
        delta,
        y0_radius,
    })
}

/// Margins of the inequalities a selected tuple must satisfy; each is positive
/// exactly when its strict inequality holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMargins {
    /// `ρ − r̃/r`.
    pub rho_ratio: f64,
    /// `r² − αL²/ρ²`.
    pub inner_ball: f64,
    /// `αL² − r̃²`.
    pub outer: f64,
    /// `r² − α²L²`.
    pub alpha_squared: f64,
    /// `L − L/ρ − ε − |y₀|` (non-strict: holds when `≥ 0`).
    pub y0_room: f64,
    /// `L − 2δ − L/ρ`.
    pub cutoff_room: f64,
}

impl ConstraintMargins {
    pub fn all_hold(&self) -> bool {
        self.rho_ratio > 0.0
            && self.inner_ball > 0.0
            && self.outer > 0.0
            && self.alpha_squared > 0.0
            && self.y0_room >= 0.0
            && self.cutoff_room > 0.0
    }
}

#[allow(clippy::too_many_arguments)]
pub fn constraint_margins(
    x_min: &[f64],
    x_max: &[f64],
    x0: &[f64],
    y0: &[f64],
    l: f64,
    epsilon: f64,
    alpha: f64,
    rho: f64,
    delta: f64,
) -> ConstraintMargins {
    let (r, rt) = box_distances(x_min, x_max, x0);
    let y0n = y0.iter().map(|v| v * v).sum::<f64>().sqrt();
    ConstraintMargins {
        rho_ratio: rho - rt / r,
        inner_ball: r * r - alpha * l * l / (rho * rho),
        outer: alpha * l * l - rt * rt,
        alpha_squared: r * r - alpha * alpha * l * l,
        y0_room: l - l / rho - epsilon - y0n,
        cutoff_room: l - 2.0 * delta - l / rho,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignConditionReport {
    /// `−max ψ` over `x ∈ D̄, |y−y₀| = L, t = ±T`.
    pub margin_lateral_end: f64,
    /// `−max ψ` over `x ∈ D̄, |y−y₀| = L, |t| ≤ T`.
    pub margin_lateral: f64,
    /// `min ψ` over `x ∈ D̄, |y−y₀| ≤ L/ρ, t = 0`.
    pub margin_inner_slice: f64,
    /// `−ε − max ψ` over the cut-off transition bands.
    pub margin_bands: f64,
    /// `min ψ − ε` over `|t| < δ, |y−y₀| ≤ L/ρ`.
    pub margin_inner_core: f64,
    pub pass_lateral_end: bool,
    pub pass_lateral: bool,
    pub pass_inner_slice: bool,
    pub pass_bands: bool,
    pub pass_inner_core: bool,
    /// `L/ρ < L − 2δ` at the reported `δ`.
    pub pass_band_clearance: bool,
    /// Largest passing `δ` of the dyadic search, if any.
    pub delta: Option<f64>,
    /// `δ` at which the band margins were evaluated.
    pub delta_evaluated: f64,
}

impl SignConditionReport {
    pub fn all_pass(&self) -> bool {
        self.pass_lateral_end
            && self.pass_lateral
            && self.pass_inner_slice
            && self.pass_bands
            && self.pass_inner_core
            && self.pass_band_clearance
            && self.delta.is_some()
    }
}

/// Squared radii `|y−y₀|²` of grid y-points inside `[lo, hi]`, plus the exact
/// band ends, as (min, max). `ψ` depends on `y` only through this radius.
fn radius_sq_range(samples: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut mn = lo * lo;
    let mut mx = hi * hi;
    for &r in samples {
        if r >= lo && r <= hi {
            mn = mn.min(r * r);
            mx = mx.max(r * r);
        }
    }
    (mn, mx)
}

/// Samples the sign conditions on `ψ` over the grid and searches the cut-off
/// margin `δ` (dyadic, descending from `min(T, L)/8`). `L` and `T` are
/// `l` and the grid horizon.
pub fn sign_condition_report(params: &WeightParams, grid: &GridSpec, l: f64) -> Result<SignConditionReport> {
    params.check_grid(grid)?;
    let rho = params
        .rho
        .ok_or_else(|| Error::InvalidParameter("rho has not been selected".into()))?;
    let t_max = grid.horizon();
    let (alpha, beta, eps) = (params.alpha, params.beta, params.epsilon);

    let spatial = grid.spatial_lattice();
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_radii = Vec::new();
    let n = grid.n();
    let mut y_seen = Vec::new();
    grid.for_each_spatial_point(&spatial.full_region(), |_, x, y| {
        let d = dist_sq(x, &params.x0);
        x_lo = x_lo.min(d);
        x_hi = x_hi.max(d);
        y_seen.push(dist_sq(y, &params.y0).sqrt());
    });
    // Radii repeat once per x point; keep one copy per distinct y point.
    let x_count = (0..n).map(|a| spatial.axis_len(a)).product::<usize>();
    for (i, r) in y_seen.into_iter().enumerate() {
        if i % x_count == 0 {
            y_radii.push(r);
        }
    }
    let t_abs: Vec<f64> = (0..grid.nt()).map(|i| grid.time(i).abs()).collect();

    let max_psi = |ry: (f64, f64), tt: (f64, f64)| x_hi - alpha * ry.0 - beta * tt.0;
    let min_psi = |ry: (f64, f64), tt: (f64, f64)| x_lo - alpha * ry.1 - beta * tt.1;

    let at_l = (l * l, l * l);
    let margin_lateral_end = -max_psi(at_l, (t_max * t_max, t_max * t_max));
    let margin_lateral = -max_psi(at_l, radius_sq_range(&t_abs, 0.0, t_max));
    let inner = radius_sq_range(&y_radii, 0.0, l / rho);
    let margin_inner_slice = min_psi(inner, (0.0, 0.0));

    let bands = |delta: f64| {
        let t_band = radius_sq_range(&t_abs, t_max - 2.0 * delta, t_max);
        let all_y = radius_sq_range(&y_radii, 0.0, l);
        let y_band = radius_sq_range(&y_radii, l - 2.0 * delta, l);
        let all_t = radius_sq_range(&t_abs, 0.0, t_max);
        let worst = max_psi(all_y, t_band).max(max_psi(y_band, all_t));
        let m_bands = -eps - worst;
        // |t| < δ: grid times strictly inside, plus the open end approached.
        let t_inner = radius_sq_range(&t_abs, 0.0, delta);
        let m_core = min_psi(inner, t_inner) - eps;
        (m_bands, m_core, l / rho < l - 2.0 * delta)
    };

    let start = t_max.min(l) / 8.0;
    let mut found = None;
    let mut delta = start;
    for _ in 0..48 {
        let (m_bands, m_core, clear) = bands(delta);
        if m_bands > 0.0 && m_core > 0.0 && clear {
            found = Some(delta);
            break;
        }
        delta /= 2.0;
    }
    let delta_evaluated = found.unwrap_or(start);
    let (margin_bands, margin_inner_core, pass_band_clearance) = bands(delta_evaluated);
    Ok(SignConditionReport {
        margin_lateral_end,
        margin_lateral,
        margin_inner_slice,
        margin_bands,
        margin_inner_core,
        pass_lateral_end: margin_lateral_end > 0.0,
        pass_lateral: margin_lateral > 0.0,
        pass_inner_slice: margin_inner_slice > 0.0,
        pass_bands: margin_bands > 0.0,
        pass_inner_core: margin_inner_core > 0.0,
        pass_band_clearance,
        delta: found,
        delta_evaluated,
    })
}

/// Quintic smoothstep `6s⁵ − 15s⁴ + 10s³` and its first two derivatives.
pub fn smoothstep(s: f64) -> (f64, f64, f64) {
    let s = s.clamp(0.0, 1.0);
    let v = s * s * s * (s * (6.0 * s - 15.0) + 10.0);
    let d1 = 30.0 * s * s * (1.0 - s) * (1.0 - s);
    let d2 = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    (v, d1, d2)
}

/// Nonic smoothstep `s⁵(126 − 420s + 540s² − 315s³ + 70s⁴)` (C⁴) and its
/// first two derivatives.
pub fn nonic_step(s: f64) -> (f64, f64, f64) {
    let s = s.clamp(0.0, 1.0);
    let v = s.powi(5) * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + 70.0 * s))));
    let d1 = 630.0 * s.powi(4) * (1.0 - s).powi(4);
    let d2 = 2520.0 * s.powi(3) * (1.0 - s).powi(3) * (1.0 - 2.0 * s);
    (v, d1, d2)
}

/// Shape of the cut-off transition bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RampProfile {
    /// [`smoothstep`]: C², closed-form polynomial.
    #[default]
    Quintic,
    /// [`nonic_step`]: C⁴. Second differences of `χ` then converge at
    /// order 2 in the max norm across the band edges; with the C² ramp the
    /// jump in `χ'''` leaves an `O(h)` error there.
    Nonic,
}

impl RampProfile {
    pub fn eval(self, s: f64) -> (f64, f64, f64) {
        match self {
            RampProfile::Quintic => smoothstep(s),
            RampProfile::Nonic => nonic_step(s),
        }
    }
}

/// `χ₀(r)` with edge `e`: `1` for `r ≤ e − 2δ`, `0` for `r ≥ e − δ`, with
/// derivatives in `r`.
fn ramp(profile: RampProfile, r: f64, edge: f64, delta: f64) -> (f64, f64, f64) {
    let a = edge - 2.0 * delta;
    if r <= a {
        (1.0, 0.0, 0.0)
    } else if r >= edge - delta {
        (0.0, 0.0, 0.0)
    } else {
        let (v, d1, d2) = profile.eval((r - a) / delta);
        (1.0 - v, -d1 / delta, -d2 / (delta * delta))
    }
}

/// `χ(y, t) = χ₀(|t|; T) χ₀(|y − y₀|; L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffFunction {
    pub y0: Vec<f64>,
    pub half_width: f64,
    pub horizon: f64,
    pub delta: f64,
    pub profile: RampProfile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffValue {
    pub chi: f64,
    pub dt: f64,
    pub lap_y: f64,
}

impl CutoffFunction {
    pub fn new(y0: &[f64], half_width: f64, horizon: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !(horizon - 2.0 * delta > 0.0) || !(half_width - 2.0 * delta > 0.0) {
            return Err(Error::DegenerateBand(format!(
                "delta = {delta} with T = {horizon}, L = {half_width}: need T − 2δ > 0 and L − 2δ > 0"
            )));
        }
        Ok(Self {
            y0: y0.to_vec(),
            half_width,
            horizon,
            delta,
            profile: RampProfile::Quintic,
        })
    }

    pub fn with_profile(mut self, profile: RampProfile) -> Self {
        self.profile = profile;
        self
    }

    /// `χ`, `∂ₜχ`, `Δ_yχ`, and `∇_yχ` written into `grad_y`.
    pub fn eval(&self, y: &[f64], t: f64, grad_y: &mut [f64]) -> CutoffValue {
        let (ct, ct1, _) = ramp(self.profile, t.abs(), self.horizon, self.delta);
        let r = dist_sq(y, &self.y0).sqrt();
        let (cy, cy1, cy2) = ramp(self.profile, r, self.half_width, self.delta);
        let m = y.len() as f64;
        for (g, (&yj, &cj)) in grad_y.iter_mut().zip(y.iter().zip(&self.y0)) {
            *g = if r > 0.0 { ct * cy1 * (yj - cj) / r } else { 0.0 };
        }
        let radial = if r > 0.0 { cy2 + (m - 1.0) / r * cy1 } else { cy2 };
        CutoffValue {
            chi: ct * cy,
            dt: ct1 * t.signum() * cy,
            lap_y: ct * radial,
        }
    }

    pub fn value(&self, y: &[f64], t: f64) -> f64 {
        let mut g = vec![0.0; y.len()];
        self.eval(y, t, &mut g).chi
    }

    /// `χ` and its derivatives sampled on the grid.
    pub fn fields(&self, grid: &GridSpec) -> Result<CutoffFields> {
        if self.y0.len() != grid.m() {
            return Err(Error::InvalidParameter("cut-off centre dimension differs from m".into()));
        }
        let len = grid.len();
        let m = grid.m();
        let mut chi = vec![ZERO; len];
        let mut dt = vec![ZERO; len];
        let mut lap = vec![ZERO; len];
        let mut grad = vec![vec![ZERO; len]; m];
        let mut g = vec![0.0; m];
        grid.for_each_point(&grid.lattice().full_region(), |flat, _, y, t| {
            let v = self.eval(y, t, &mut g);
            chi[flat] = Complex64::new(v.chi, 0.0);
            dt[flat] = Complex64::new(v.dt, 0.0);
            lap[flat] = Complex64::new(v.lap_y, 0.0);
            for j in 0..m {
                grad[j][flat] = Complex64::new(g[j], 0.0);
            }
        });
        Ok(CutoffFields {
            chi: ComplexField::from_raw(grid, chi, "chi"),
            dt: ComplexField::from_raw(grid, dt, "dt_chi"),
            grad_y: grad
                .into_iter()
                .map(|v| ComplexField::from_raw(grid, v, "grad_y_chi"))
                .collect(),
            lap_y: ComplexField::from_raw(grid, lap, "lap_y_chi"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffFields {
    pub chi: ComplexField,
    pub dt: ComplexField,
    pub grad_y: Vec<ComplexField>,
    pub lap_y: ComplexField,
}

/// The cut-off for `params` (which must carry `δ`) with half-width `l`.
pub fn cutoff_chi(params: &WeightParams, grid: &GridSpec, l: f64) -> Result<CutoffFields> {
    let delta = params
        .delta
        .ok_or_else(|| Error::InvalidParameter("delta has not been selected".into()))?;
    CutoffFunction::new(&params.y0, l, grid.horizon(), delta)?.fields(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> WeightParams {
        WeightParams::new(vec![-1.0], vec![0.0], 0.25, 0.5, 0.1, 0.1).unwrap()
    }

    #[test]
    fn psi_and_phi_values() {
        let p = params();
        assert_eq!(p.psi(&[-1.0], &[0.0], 0.0), 0.0);
        assert_eq!(p.phi(&[-1.0], &[0.0], 0.0), 1.0);
        let v = p.psi(&[0.5], &[0.2], 0.1);
        assert!((v - 2.235).abs() < 1e-14);
        assert!((p.phi(&[0.5], &[0.2], 0.1) - 1.250_445_640_276_465).abs() < 1e-14);
        assert_eq!(p.psi(&[0.3], &[0.7], 0.4), p.psi(&[0.3], &[0.7], -0.4));
    }

    #[test]
    fn d1_d2_values() {
        let p = params();
        let (d1, d2) = p.d1_d2(&[0.5], &[0.0], 0.3);
        assert_eq!(d1, -2.5);
        assert!((d2 + 9.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(WeightParams::new(vec![-1.0], vec![0.0], 1.5, 0.5, 0.1, 0.1).is_err());
        assert!(WeightParams::new(vec![-1.0], vec![0.0], 0.5, 0.0, 0.1, 0.1).is_err());
        assert!(WeightParams::new(vec![-1.0], vec![0.0], 0.5, 0.5, -1.0, 0.1).is_err());
    }

    #[test]
    fn pseudoconvexity_example() {
        let g = GridSpec::interval(0.0, 1.0, 3.0, 1.0, 11, 13, 11).unwrap();
        let rep = check_pseudoconvexity(&params(), &g).unwrap();
        assert!((rep.min_value - 0.1875).abs() < 1e-12);
        assert!((rep.delta0 - 0.1875f64.sqrt()).abs() < 1e-12);
        assert_eq!(rep.argmin[0], 0.0);
        assert_eq!(rep.argmin[1].abs(), 3.0);
        assert_eq!(rep.argmin[2].abs(), 1.0);
    }

    #[test]
    fn pseudoconvexity_small_parameters() {
        let g = GridSpec::interval(0.0, 1.0, 3.0, 1.0, 11, 13, 11).unwrap();
        let p = WeightParams::new(vec![-1.0], vec![0.0], 1e-6, 1e-6, 0.1, 0.1).unwrap();
        let rep = check_pseudoconvexity(&p, &g).unwrap();
        assert!((rep.delta0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pseudoconvexity_rejects_interior_centre() {
        let g = GridSpec::interval(0.0, 1.0, 3.0, 1.0, 11, 13, 11).unwrap();
        let p = WeightParams::new(vec![0.33], vec![0.0], 0.25, 0.5, 0.1, 0.1).unwrap();
        assert!(matches!(
            check_pseudoconvexity(&p, &g),
            Err(Error::PseudoconvexityViolated { .. })
        ));
    }

    #[test]
    fn boundary_plus_one_dimensional() {
        let g = GridSpec::interval(0.0, 1.0, 1.0, 1.0, 5, 5, 5).unwrap();
        let faces = boundary_plus(&g, &[-1.0]);
        assert_eq!(faces.len(), 1);
        assert_eq!(faces[0].side, crate::lattice::Side::High);
        let faces = boundary_plus(&g, &[2.0]);
        assert_eq!(faces.len(), 1);
        assert_eq!(faces[0].side, crate::lattice::Side::Low);
    }

    #[test]
    fn boundary_plus_two_dimensional() {
        use crate::lattice::Side;
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], 1, 1.0, 1.0, 5, 5, 5).unwrap();
        let faces = boundary_plus(&g, &[-10.0, 0.5]);
        assert_eq!(faces.len(), 3);
        assert!(faces.contains(&Face { axis: 0, side: Side::High }));
        assert!(faces.contains(&Face { axis: 1, side: Side::High }));
        assert!(faces.contains(&Face { axis: 1, side: Side::Low }));
    }

    #[test]
    fn selection_worked_geometry() {
        let s = select_parameters(&[0.0], &[1.0], &[-1.0], 10.0, 0.1).unwrap();
        assert_eq!((s.r, s.r_tilde), (1.0, 2.0));
        assert!((s.alpha_interval.0 - 0.04).abs() < 1e-15);
        assert!((s.alpha_interval.1 - 0.1).abs() < 1e-15);
        let m = constraint_margins(&[0.0], &[1.0], &[-1.0], &[0.0], 10.0, 0.1, s.alpha, s.rho, s.delta);
        assert!(m.all_hold(), "{m:?}");
    }

    #[test]
    fn constraint_oracle_fixed_tuple() {
        let m = constraint_margins(&[0.0], &[1.0], &[-1.0], &[0.0], 10.0, 0.1, 0.05, 2.5, 0.5);
        assert!((m.outer - 1.0).abs() < 1e-12);
        assert!((m.alpha_squared - 0.75).abs() < 1e-12);
        assert!((m.inner_ball - 0.2).abs() < 1e-12);
        assert!((m.y0_room - 5.9).abs() < 1e-12);
        assert!(m.all_hold());
        // L = r̃/√α sits on the boundary of the strict inequality.
        let l = 2.0 / 0.05f64.sqrt();
        let m = constraint_margins(&[0.0], &[1.0], &[-1.0], &[0.0], l, 0.1, 0.05, 2.5, 0.5);
        assert!(m.outer.abs() < 1e-12);
    }

    #[test]
    fn selection_rejects_short_strip() {
        let e = select_parameters(&[0.0], &[1.0], &[-1.0], 3.0, 0.1).unwrap_err();
        assert!(matches!(e, Error::InfeasibleGeometry(_)));
        assert!(e.to_string().contains("infeasible geometry"));
    }

    #[test]
    fn nonic_step_derivatives() {
        assert_eq!(nonic_step(0.5).0, 0.5);
        assert_eq!(nonic_step(0.0), (0.0, 0.0, 0.0));
        assert_eq!(nonic_step(1.0), (1.0, 0.0, 0.0));
        let h = 1e-5;
        for &s in &[0.05, 0.2, 0.5, 0.71, 0.93] {
            let (v, d1, d2) = nonic_step(s);
            let (vp, d1p, _) = nonic_step(s + h);
            let (vm, d1m, _) = nonic_step(s - h);
            assert!((d1 - (vp - vm) / (2.0 * h)).abs() < 1e-7 * d1.abs().max(1.0), "s={s}");
            assert!((d2 - (d1p - d1m) / (2.0 * h)).abs() < 1e-6 * d2.abs().max(1.0), "s={s}");
            assert!((nonic_step(1.0 - s).0 - (1.0 - v)).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothstep_midpoint() {
        assert_eq!(smoothstep(0.5).0, 0.5);
        assert_eq!(smoothstep(0.0), (0.0, 0.0, 0.0));
        assert_eq!(smoothstep(1.0).0, 1.0);
    }

    #[test]
    fn cutoff_values() {
        let c = CutoffFunction::new(&[0.0], 2.0, 1.0, 0.2).unwrap();
        assert_eq!(c.value(&[0.0], 0.0), 1.0);
        assert_eq!(c.value(&[0.0], 1.0), 0.0);
        assert_eq!(c.value(&[0.0], -0.85), 0.0);
        assert_eq!(c.value(&[1.9], 0.0), 0.0);
        assert!((c.value(&[0.0], 0.7) - 0.5).abs() < 1e-12);
        assert!(CutoffFunction::new(&[0.0], 2.0, 1.0, 0.5).is_err());
    }
}
