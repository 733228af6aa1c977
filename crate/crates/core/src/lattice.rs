//! Uniform tensor lattices: index bookkeeping, box regions, trapezoidal
//! quadrature and second-order finite-difference stencils.
//!
//! A [`Lattice`] is a Cartesian product of uniform axes. Axis 0 varies
//! fastest in the flat storage order. Everything in [`crate::grid`] is built
//! on top of this type, but it is also usable on its own for lower- or
//! higher-dimensional data (a single `x` interval, say).

use crate::error::{Error, Result};
use crate::prelude::*;

/// One uniform axis `min = c₀ < c₁ < … < c_{len−1} = max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub len: usize,
}

/// Which end of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Low,
    High,
}

impl Side {
    /// Outward normal component (`−1` on the low face, `+1` on the high face).
    pub fn sign(self) -> f64 {
        match self {
            Side::Low => -1.0,
            Side::High => 1.0,
        }
    }
}

/// Boundary handling for the second-difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndStencil {
    /// Leave the end points at zero (operator defined on interior points only).
    Skip,
    /// Second-order one-sided stencils at the end points.
    OneSided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    axes: Vec<AxisSpec>,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    pub fn new(axes: Vec<AxisSpec>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidGrid("lattice needs at least one axis".into()));
        }
        let mut strides = Vec::with_capacity(axes.len());
        let mut len = 1usize;
        for (a, ax) in axes.iter().enumerate() {
            if ax.len == 0 {
                return Err(Error::InvalidGrid(format!("axis {a} has no points")));
            }
            if !(ax.min.is_finite() && ax.max.is_finite()) {
                return Err(Error::InvalidGrid(format!("axis {a} has non-finite extent")));
            }
            if ax.len > 1 && ax.max <= ax.min {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: max {} must exceed min {}",
                    ax.max, ax.min
                )));
            }
            strides.push(len);
            len = len
                .checked_mul(ax.len)
                .ok_or_else(|| Error::InvalidGrid("lattice too large".into()))?;
        }
        Ok(Self { axes, strides, len })
    }

    /// Shorthand for `Lattice::new` from `(min, max, len)` triples.
    pub fn uniform(axes: &[(f64, f64, usize)]) -> Result<Self> {
        Self::new(
            axes.iter()
                .map(|&(min, max, len)| AxisSpec { min, max, len })
                .collect(),
        )
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axis(&self, a: usize) -> AxisSpec {
        self.axes[a]
    }

    pub fn axis_len(&self, a: usize) -> usize {
        self.axes[a].len
    }

    pub fn stride(&self, a: usize) -> usize {
        self.strides[a]
    }

    pub fn spacing(&self, a: usize) -> f64 {
        let ax = self.axes[a];
        if ax.len < 2 {
            0.0
        } else {
            (ax.max - ax.min) / (ax.len - 1) as f64
        }
    }

    pub fn coord(&self, a: usize, i: usize) -> f64 {
        let ax = self.axes[a];
        if i + 1 == ax.len {
            ax.max
        } else {
            ax.min + i as f64 * self.spacing(a)
        }
    }

    pub fn coords(&self, a: usize) -> Vec<f64> {
        (0..self.axes[a].len).map(|i| self.coord(a, i)).collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for (a, ax) in self.axes.iter().enumerate() {
            out[a] = flat % ax.len;
            flat /= ax.len;
        }
    }

    /// Index of `flat` along axis `a`.
    #[inline]
    pub fn index_along(&self, flat: usize, a: usize) -> usize {
        (flat / self.strides[a]) % self.axes[a].len
    }

    pub fn full_region(&self) -> Region {
        Region {
            ranges: self.axes.iter().map(|ax| (0, ax.len - 1)).collect(),
        }
    }

    /// All points that are not on the boundary of any axis.
    pub fn interior_region(&self) -> Region {
        Region {
            ranges: self
                .axes
                .iter()
                .map(|ax| {
                    if ax.len >= 3 {
                        (1, ax.len - 2)
                    } else {
                        (1, 0)
                    }
                })
                .collect(),
        }
    }

    /// Visits every point of `region` in storage order.
    pub fn for_each_in(&self, region: &Region, mut f: impl FnMut(usize, &[usize])) {
        debug_assert_eq!(region.ranges.len(), self.dims());
        if region.is_empty() {
            return;
        }
        let d = self.dims();
        let mut idx: Vec<usize> = region.ranges.iter().map(|r| r.0).collect();
        let mut flat = self.flat(&idx);
        loop {
            f(flat, &idx);
            let mut a = 0;
            loop {
                if a == d {
                    return;
                }
                let (lo, hi) = region.ranges[a];
                if idx[a] < hi {
                    idx[a] += 1;
                    flat += self.strides[a];
                    break;
                }
                flat -= (idx[a] - lo) * self.strides[a];
                idx[a] = lo;
                a += 1;
            }
        }
    }

    /// Per-axis trapezoid weights over `region`; an axis collapsed to a single
    /// index gets weight 1, so faces integrate with their surface measure.
    fn trapezoid_weights(&self, region: &Region) -> Vec<Vec<f64>> {
        region
            .ranges
            .iter()
            .enumerate()
            .map(|(a, &(lo, hi))| {
                if lo == hi {
                    return vec![1.0];
                }
                let h = self.spacing(a);
                (lo..=hi)
                    .map(|i| if i == lo || i == hi { 0.5 * h } else { h })
                    .collect()
            })
            .collect()
    }

    /// Trapezoidal rule for `∫_region g`, where `g(flat, idx)` gives the
    /// integrand at a lattice point. Exact for integrands affine per axis.
    pub fn integrate(
        &self,
        region: &Region,
        mut g: impl FnMut(usize, &[usize]) -> f64,
    ) -> Result<f64> {
        if region.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let weights = self.trapezoid_weights(region);
        let mut total = 0.0;
        self.for_each_in(region, |flat, idx| {
            let mut w = 1.0;
            for (a, wa) in weights.iter().enumerate() {
                w *= wa[idx[a] - region.ranges[a].0];
            }
            total += w * g(flat, idx);
        });
        Ok(total)
    }

    fn require_stencil_axis(&self, a: usize) -> Result<()> {
        let len = self.axes[a].len;
        if len < 3 {
            return Err(Error::TooFewPoints { axis: a, len });
        }
        Ok(())
    }

    fn check_values(&self, values: &[Complex64]) -> Result<()> {
        if values.len() != self.len {
            return Err(Error::ShapeMismatch {
                expected: self.len,
                found: values.len(),
            });
        }
        Ok(())
    }

    /// First derivative along axis `a`: central in the interior, second-order
    /// one-sided at both ends.
    pub fn derivative(&self, values: &[Complex64], a: usize) -> Result<Vec<Complex64>> {
        self.check_values(values)?;
        self.require_stencil_axis(a)?;
        let n = self.axes[a].len;
        let s = self.strides[a];
        let inv2h = 0.5 / self.spacing(a);
        let mut out = vec![ZERO; self.len];
        for (flat, o) in out.iter_mut().enumerate() {
            let i = self.index_along(flat, a);
            *o = if i == 0 {
                (-3.0 * values[flat] + 4.0 * values[flat + s] - values[flat + 2 * s]) * inv2h
            } else if i == n - 1 {
                (3.0 * values[flat] - 4.0 * values[flat - s] + values[flat - 2 * s]) * inv2h
            } else {
                (values[flat + s] - values[flat - s]) * inv2h
            };
        }
        Ok(out)
    }

    /// Three-point second difference along axis `a`.
    pub fn second_difference(
        &self,
        values: &[Complex64],
        a: usize,
        ends: EndStencil,
    ) -> Result<Vec<Complex64>> {
        self.check_values(values)?;
        self.require_stencil_axis(a)?;
        let n = self.axes[a].len;
        let s = self.strides[a];
        let h = self.spacing(a);
        let inv_h2 = 1.0 / (h * h);
        let mut out = vec![ZERO; self.len];
        for (flat, o) in out.iter_mut().enumerate() {
            let i = self.index_along(flat, a);
            *o = if i > 0 && i < n - 1 {
                (values[flat + s] - 2.0 * values[flat] + values[flat - s]) * inv_h2
            } else {
                match ends {
                    EndStencil::Skip => ZERO,
                    EndStencil::OneSided => {
                        // i = 0 steps towards +s, i = n-1 towards -s.
                        let step = |k: usize| {
                            if i == 0 {
                                values[flat + k * s]
                            } else {
                                values[flat - k * s]
                            }
                        };
                        if n >= 4 {
                            (2.0 * step(0) - 5.0 * step(1) + 4.0 * step(2) - step(3)) * inv_h2
                        } else {
                            (step(0) - 2.0 * step(1) + step(2)) * inv_h2
                        }
                    }
                }
            };
        }
        Ok(out)
    }

    /// Region of the face `{idx_a = 0}` or `{idx_a = len−1}`.
    pub fn face_region(&self, a: usize, side: Side) -> Region {
        let mut r = self.full_region();
        let i = match side {
            Side::Low => 0,
            Side::High => self.axes[a].len - 1,
        };
        r.ranges[a] = (i, i);
        r
    }

    /// Outward normal derivative on one face of axis `a`, second-order
    /// one-sided. Values are returned in the face region's storage order.
    pub fn outward_derivative(
        &self,
        values: &[Complex64],
        a: usize,
        side: Side,
    ) -> Result<(Region, Vec<Complex64>)> {
        self.check_values(values)?;
        self.require_stencil_axis(a)?;
        let s = self.strides[a];
        let inv2h = 0.5 / self.spacing(a);
        let region = self.face_region(a, side);
        let mut out = Vec::with_capacity(region.count());
        self.for_each_in(&region, |flat, _| {
            let d = match side {
                // ν = −e_a: ∂_ν u = −∂_a u.
                Side::Low => {
                    (3.0 * values[flat] - 4.0 * values[flat + s] + values[flat + 2 * s]) * inv2h
                }
                Side::High => {
                    (3.0 * values[flat] - 4.0 * values[flat - s] + values[flat - 2 * s]) * inv2h
                }
            };
            out.push(d);
        });
        Ok((region, out))
    }
}

/// Inclusive index box `lo_a ..= hi_a` per axis. An axis with `lo > hi`
/// makes the region empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    ranges: Vec<(usize, usize)>,
}

impl Region {
    pub fn new(ranges: Vec<(usize, usize)>) -> Self {
        Self { ranges }
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn range(&self, a: usize) -> (usize, usize) {
        self.ranges[a]
    }

    /// Intersects axis `a` with `lo ..= hi`.
    pub fn restrict(mut self, a: usize, lo: usize, hi: usize) -> Self {
        let (l, h) = self.ranges[a];
        self.ranges[a] = (l.max(lo), h.min(hi));
        self
    }

    pub fn fix(mut self, a: usize, i: usize) -> Self {
        self.ranges[a] = (i, i);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.iter().any(|&(lo, hi)| lo > hi)
    }

    pub fn count(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        self.ranges.iter().map(|&(lo, hi)| hi - lo + 1).product()
    }

    pub fn contains(&self, idx: &[usize]) -> bool {
        idx.iter()
            .zip(&self.ranges)
            .all(|(&i, &(lo, hi))| lo <= i && i <= hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn constant_over_box_gives_volume() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 9), (-1.0, 1.0, 5), (-1.0, 1.0, 7)]).unwrap();
        let v = lat.integrate(&lat.full_region(), |_, _| 1.0).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_exact_on_linear_1d() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 4)]).unwrap();
        let v = lat
            .integrate(&lat.full_region(), |_, idx| lat.coord(0, idx[0]))
            .unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn x2y2t2_against_antiderivative() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 33), (0.0, 1.0, 33), (0.0, 1.0, 33)]).unwrap();
        let v = lat
            .integrate(&lat.full_region(), |_, i| {
                let (x, y, t) = (lat.coord(0, i[0]), lat.coord(1, i[1]), lat.coord(2, i[2]));
                x * x * y * y * t * t
            })
            .unwrap();
        assert!((v - 1.0 / 27.0).abs() < 3e-3);
    }

    #[test]
    fn empty_region_is_an_error() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 5)]).unwrap();
        let r = lat.full_region().restrict(0, 3, 2);
        assert_eq!(lat.integrate(&r, |_, _| 1.0), Err(Error::EmptyRegion));
    }

    #[test]
    fn collapsed_axis_has_unit_weight() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 11), (0.0, 2.0, 3)]).unwrap();
        let r = lat.full_region().fix(1, 2);
        let v = lat.integrate(&r, |_, i| lat.coord(0, i[0])).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_exact_on_linear_and_quadratic() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 11)]).unwrap();
        let lin: Vec<_> = lat.coords(0).iter().map(|&x| c(3.0 * x)).collect();
        for d in lat.derivative(&lin, 0).unwrap() {
            assert!((d - c(3.0)).norm() < 1e-12);
        }
        let quad: Vec<_> = lat.coords(0).iter().map(|&x| c(x * x)).collect();
        let d = lat.derivative(&quad, 0).unwrap();
        assert!((d[5] - c(1.0)).norm() < 1e-13);
        // one-sided ends are exact on quadratics too
        assert!((d[0] - c(0.0)).norm() < 1e-12);
        assert!((d[10] - c(2.0)).norm() < 1e-12);
    }

    #[test]
    fn derivative_of_sine() {
        let h = 0.01;
        let lat = Lattice::uniform(&[(0.0, 1.0, 101)]).unwrap();
        let u: Vec<_> = lat.coords(0).iter().map(|&x| c((2.0 * x).sin())).collect();
        let d = lat.derivative(&u, 0).unwrap();
        let i = (0.3 / h) as usize;
        assert!((lat.coord(0, i) - 0.3).abs() < 1e-12);
        assert!((d[i].re - 2.0 * (0.6f64).cos()).abs() < 1e-3);
    }

    #[test]
    fn second_difference_of_sine() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 201)]).unwrap();
        let u: Vec<_> = lat.coords(0).iter().map(|&x| c((3.0 * x).sin())).collect();
        let d = lat.second_difference(&u, 0, EndStencil::Skip).unwrap();
        for i in 1..200 {
            let x = lat.coord(0, i);
            let exact = -9.0 * (3.0 * x).sin();
            assert!((d[i].re - exact).abs() <= 2e-3 * exact.abs().max(1e-3));
        }
        assert_eq!(d[0], ZERO);
    }

    #[test]
    fn one_sided_second_difference_exact_on_cubics() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 6)]).unwrap();
        let u: Vec<_> = lat.coords(0).iter().map(|&x| c(x * x * x)).collect();
        let d = lat.second_difference(&u, 0, EndStencil::OneSided).unwrap();
        assert!(d[0].norm() < 1e-10);
        assert!((d[5].re - 6.0).abs() < 1e-10);
    }

    #[test]
    fn too_few_points() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 2)]).unwrap();
        let u = vec![ZERO; 2];
        assert_eq!(
            lat.derivative(&u, 0),
            Err(Error::TooFewPoints { axis: 0, len: 2 })
        );
    }

    #[test]
    fn outward_derivative_of_square() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 11)]).unwrap();
        let u: Vec<_> = lat.coords(0).iter().map(|&x| c(x * x)).collect();
        let (_, hi) = lat.outward_derivative(&u, 0, Side::High).unwrap();
        let (_, lo) = lat.outward_derivative(&u, 0, Side::Low).unwrap();
        assert!((hi[0].re - 2.0).abs() < 1e-12);
        assert!(lo[0].re.abs() < 1e-12);
    }

    #[test]
    fn outward_derivative_of_exp() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 101)]).unwrap();
        let u: Vec<_> = lat.coords(0).iter().map(|&x| c(x.exp())).collect();
        let (_, hi) = lat.outward_derivative(&u, 0, Side::High).unwrap();
        assert!((hi[0].re - core::f64::consts::E).abs() < 1e-3);
    }

    #[test]
    fn walk_visits_region_in_storage_order() {
        let lat = Lattice::uniform(&[(0.0, 1.0, 4), (0.0, 1.0, 3)]).unwrap();
        let r = lat.full_region().restrict(0, 1, 2).restrict(1, 1, 2);
        let mut seen = Vec::new();
        lat.for_each_in(&r, |flat, _| seen.push(flat));
        assert_eq!(seen, vec![5, 6, 9, 10]);
        assert_eq!(r.count(), 4);
    }
}
