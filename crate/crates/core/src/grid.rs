//! The space-time grid over `Ω = D × G × (−T, T)` and complex grid fields.
//!
//! `D` is the axis-aligned box `∏ [x_min_i, x_max_i]`, `G` the cube
//! `{max_j |y_j| ≤ L}` and the time axis always contains `t = 0` as a node.
//! Storage order is x-axes fastest, then y-axes, then time, so a time slice
//! is a contiguous block of [`GridSpec::spatial_len`] values.

use crate::error::{Error, Result};
use crate::lattice::{AxisSpec, EndStencil, Lattice, Region, Side};
use crate::prelude::*;

/// Relative slack used when selecting grid points by coordinate.
const COORD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisGroup {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n: usize,
    m: usize,
    x_min: Vec<f64>,
    x_max: Vec<f64>,
    half_width: f64,
    horizon: f64,
    nx: usize,
    ny: usize,
    nt: usize,
    lattice: Lattice,
    spatial: Lattice,
}

impl GridSpec {
    /// Grid with `n = x_min.len()` x-dimensions and `m` y-dimensions.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x_min: Vec<f64>,
        x_max: Vec<f64>,
        m: usize,
        half_width: f64,
        horizon: f64,
        nx: usize,
        ny: usize,
        nt: usize,
    ) -> Result<Self> {
        let n = x_min.len();
        if n == 0 || x_max.len() != n {
            return Err(Error::InvalidGrid(format!(
                "x extents must be non-empty and of equal length ({} vs {})",
                x_min.len(),
                x_max.len()
            )));
        }
        if m == 0 {
            return Err(Error::InvalidGrid("m must be at least 1".into()));
        }
        for i in 0..n {
            if !(x_max[i] > x_min[i]) {
                return Err(Error::InvalidGrid(format!(
                    "x axis {i}: x_max {} must exceed x_min {}",
                    x_max[i], x_min[i]
                )));
            }
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("L must be positive, got {half_width}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("T must be positive, got {horizon}")));
        }
        if nx < 3 || ny < 3 || nt < 3 {
            return Err(Error::InvalidGrid(format!(
                "all resolutions must be at least 3 (nx={nx}, ny={ny}, nt={nt})"
            )));
        }
        if nt % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "nt must be odd so that t = 0 is a node, got {nt}"
            )));
        }
        let mut axes = Vec::with_capacity(n + m + 1);
        for i in 0..n {
            axes.push(AxisSpec {
                min: x_min[i],
                max: x_max[i],
                len: nx,
            });
        }
        for _ in 0..m {
            axes.push(AxisSpec {
                min: -half_width,
                max: half_width,
                len: ny,
            });
        }
        let spatial = Lattice::new(axes.clone())?;
        axes.push(AxisSpec {
            min: -horizon,
            max: horizon,
            len: nt,
        });
        let lattice = Lattice::new(axes)?;
        Ok(Self {
            n,
            m,
            x_min,
            x_max,
            half_width,
            horizon,
            nx,
            ny,
            nt,
            lattice,
            spatial,
        })
    }

    /// The `n = m = 1` grid over `(x_min, x_max) × (−L, L) × (−T, T)`.
    pub fn interval(
        x_min: f64,
        x_max: f64,
        half_width: f64,
        horizon: f64,
        nx: usize,
        ny: usize,
        nt: usize,
    ) -> Result<Self> {
        Self::new(vec![x_min], vec![x_max], 1, half_width, horizon, nx, ny, nt)
    }

    /// Same domain, new resolution.
    pub fn with_resolution(&self, nx: usize, ny: usize, nt: usize) -> Result<Self> {
        Self::new(
            self.x_min.clone(),
            self.x_max.clone(),
            self.m,
            self.half_width,
            self.horizon,
            nx,
            ny,
            nt,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn x_min(&self) -> &[f64] {
        &self.x_min
    }
    pub fn x_max(&self) -> &[f64] {
        &self.x_max
    }
    /// `L`, the half-width of `G`.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    /// `T`, the time horizon.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    /// The `D × G` lattice of one time slice.
    pub fn spatial_lattice(&self) -> &Lattice {
        &self.spatial
    }

    pub fn dims(&self) -> usize {
        self.n + self.m + 1
    }
    pub fn len(&self) -> usize {
        self.lattice.len()
    }
    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }
    pub fn spatial_len(&self) -> usize {
        self.spatial.len()
    }

    pub fn x_axis(&self, i: usize) -> usize {
        i
    }
    pub fn y_axis(&self, j: usize) -> usize {
        self.n + j
    }
    pub fn t_axis(&self) -> usize {
        self.n + self.m
    }
    pub fn axes(&self, group: AxisGroup) -> core::ops::Range<usize> {
        match group {
            AxisGroup::X => 0..self.n,
            AxisGroup::Y => self.n..self.n + self.m,
        }
    }

    pub fn dt(&self) -> f64 {
        self.lattice.spacing(self.t_axis())
    }
    pub fn time(&self, it: usize) -> f64 {
        self.lattice.coord(self.t_axis(), it)
    }
    pub fn zero_time_index(&self) -> usize {
        (self.nt - 1) / 2
    }

    /// Closed box `D̄` contains `x`.
    pub fn contains_x(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &xi)| self.x_min[i] <= xi && xi <= self.x_max[i])
    }

    /// Index range of y nodes with `|y_j − center| ≤ radius` (empty as `(1, 0)`).
    pub fn y_index_range(&self, center: f64, radius: f64) -> (usize, usize) {
        let slack = COORD_SLACK * self.half_width.max(radius.abs());
        let a = self.y_axis(0);
        let mut lo = usize::MAX;
        let mut hi = 0;
        for i in 0..self.ny {
            if (self.lattice.coord(a, i) - center).abs() <= radius + slack {
                lo = lo.min(i);
                hi = hi.max(i);
            }
        }
        if lo == usize::MAX {
            (1, 0)
        } else {
            (lo, hi)
        }
    }

    /// Full-grid region restricted to the y-cube `max_j |y_j − c_j| ≤ radius`.
    pub fn y_cube_region(&self, center: &[f64], radius: f64) -> Region {
        let mut r = self.lattice.full_region();
        for j in 0..self.m {
            let (lo, hi) = self.y_index_range(center[j], radius);
            r = r.restrict(self.y_axis(j), lo, hi);
        }
        r
    }

    /// Spatial-lattice version of [`Self::y_cube_region`].
    pub fn spatial_y_cube_region(&self, center: &[f64], radius: f64) -> Region {
        let full = self.y_cube_region(center, radius);
        Region::new(full.ranges()[..self.n + self.m].to_vec())
    }

    /// All `2n` faces of `∂D`.
    pub fn faces(&self) -> Vec<Face> {
        (0..self.n)
            .flat_map(|axis| {
                [Side::Low, Side::High]
                    .into_iter()
                    .map(move |side| Face { axis, side })
            })
            .collect()
    }

    /// Calls `f(flat, x, y, t)` for every point of `region`.
    pub fn for_each_point(
        &self,
        region: &Region,
        mut f: impl FnMut(usize, &[f64], &[f64], f64),
    ) {
        let (n, m) = (self.n, self.m);
        let ta = self.t_axis();
        let mut coords = vec![0.0; n + m];
        self.lattice.for_each_in(region, |flat, idx| {
            for (a, c) in coords.iter_mut().enumerate() {
                *c = self.lattice.coord(a, idx[a]);
            }
            f(flat, &coords[..n], &coords[n..], self.lattice.coord(ta, idx[ta]));
        });
    }

    /// Spatial-lattice version of [`Self::for_each_point`].
    pub fn for_each_spatial_point(&self, region: &Region, mut f: impl FnMut(usize, &[f64], &[f64])) {
        let n = self.n;
        let mut coords = vec![0.0; n + self.m];
        self.spatial.for_each_in(region, |flat, idx| {
            for (a, c) in coords.iter_mut().enumerate() {
                *c = self.spatial.coord(a, idx[a]);
            }
            f(flat, &coords[..n], &coords[n..]);
        });
    }
}

impl GridSpec {
    /// The same grid with `G` shrunk to half-width `half_width`; the new y
    /// nodes must be existing nodes. Returns the grid and the index offset of
    /// its first y node.
    pub fn restrict_y(&self, half_width: f64) -> Result<(GridSpec, usize)> {
        let h = self.lattice.spacing(self.y_axis(0));
        let steps = half_width / h;
        let k = steps.round();
        if !(half_width > 0.0) || half_width > self.half_width || (steps - k).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "half-width {half_width} is not a node of the y axis (spacing {h})"
            )));
        }
        let k = k as usize;
        let offset = (self.ny - 1) / 2 - k;
        let sub = GridSpec::new(
            self.x_min.clone(),
            self.x_max.clone(),
            self.m,
            half_width,
            self.horizon,
            self.nx,
            2 * k + 1,
            self.nt,
        )?;
        Ok((sub, offset))
    }

    /// Maps a flat index of `sub` (from [`Self::restrict_y`]) to this grid.
    fn embed_flat(&self, sub: &GridSpec, offset: usize, flat: usize, spatial_only: bool) -> usize {
        let (lat_sub, lat) = if spatial_only {
            (sub.spatial_lattice(), self.spatial_lattice())
        } else {
            (sub.lattice(), self.lattice())
        };
        let mut idx = vec![0; lat_sub.dims()];
        lat_sub.unflatten(flat, &mut idx);
        for j in 0..self.m {
            idx[self.n + j] += offset;
        }
        lat.flat(&idx)
    }
}

/// One face `{x_axis = x_min}` or `{x_axis = x_max}` of the box `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    /// Outward unit normal component along `axis` (the other components are 0).
    pub fn normal_sign(&self) -> f64 {
        self.side.sign()
    }

    /// Coordinate of the face along its axis.
    pub fn position(&self, grid: &GridSpec) -> f64 {
        match self.side {
            Side::Low => grid.x_min()[self.axis],
            Side::High => grid.x_max()[self.axis],
        }
    }
}

/// Normal derivative samples on one face, over `face × G × (−T, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTrace {
    pub face: Face,
    /// Region of the full grid lattice covered by the face.
    pub region: Region,
    /// Values in the region's storage order.
    pub values: Vec<Complex64>,
}

/// A complex grid function on the full space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Vec<Complex64>,
    label: String,
}

fn check_finite(values: &[Complex64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

impl ComplexField {
    pub fn zeros(grid: &GridSpec, label: &str) -> Self {
        Self {
            values: vec![ZERO; grid.len()],
            grid: grid.clone(),
            label: label.into(),
        }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<Complex64>, label: &str) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        check_finite(&values, label)?;
        Ok(Self {
            grid: grid.clone(),
            values,
            label: label.into(),
        })
    }

    /// Samples `f(x, y, t)` at every grid point.
    pub fn from_fn(
        grid: &GridSpec,
        label: &str,
        mut f: impl FnMut(&[f64], &[f64], f64) -> Complex64,
    ) -> Result<Self> {
        let mut values = vec![ZERO; grid.len()];
        grid.for_each_point(&grid.lattice().full_region(), |flat, x, y, t| {
            values[flat] = f(x, y, t);
        });
        Self::from_values(grid, values, label)
    }

    /// Stacks time slices `0..nt` into one field.
    pub fn from_slices(grid: &GridSpec, slices: &[Vec<Complex64>], label: &str) -> Result<Self> {
        if slices.len() != grid.nt() {
            return Err(Error::ShapeMismatch {
                expected: grid.nt(),
                found: slices.len(),
            });
        }
        let mut values = Vec::with_capacity(grid.len());
        for s in slices {
            if s.len() != grid.spatial_len() {
                return Err(Error::ShapeMismatch {
                    expected: grid.spatial_len(),
                    found: s.len(),
                });
            }
            values.extend_from_slice(s);
        }
        Self::from_values(grid, values, label)
    }

    /// Repeats a spatial field at every time slice.
    pub fn from_spatial(field: &SpatialField, label: &str) -> Self {
        let grid = field.grid();
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.nt() {
            values.extend_from_slice(field.values());
        }
        Self {
            grid: grid.clone(),
            values,
            label: label.into(),
        }
    }

    pub(crate) fn from_raw(grid: &GridSpec, values: Vec<Complex64>, label: &str) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
            label: label.into(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }

    pub fn slice_values(&self, it: usize) -> &[Complex64] {
        let s = self.grid.spatial_len();
        &self.values[it * s..(it + 1) * s]
    }

    pub fn slice(&self, it: usize) -> SpatialField {
        SpatialField {
            grid: self.grid.clone(),
            values: self.slice_values(it).to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_raw(
            &self.grid,
            self.values.iter().map(|&v| f(v)).collect(),
            &self.label,
        )
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&u, &v)| a * u + b * v)
                .collect(),
            &self.label,
        ))
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch {
                expected: self.grid.len(),
                found: other.grid.len(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        check_finite(&self.values, "").is_ok()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_in(&self, region: &Region) -> f64 {
        let mut m = 0.0f64;
        self.grid
            .lattice()
            .for_each_in(region, |flat, _| m = m.max(self.values[flat].norm()));
        m
    }

    /// Trapezoidal `∫_region |u|²`.
    pub fn integrate_abs2(&self, region: &Region) -> Result<f64> {
        self.grid
            .lattice()
            .integrate(region, |flat, _| self.values[flat].norm_sqr())
    }

    /// Discrete `L²(Ω)` norm over the whole grid.
    pub fn l2_norm(&self) -> f64 {
        self.integrate_abs2(&self.grid.lattice().full_region())
            .map(Float::sqrt)
            .unwrap_or(0.0)
    }

    /// Restriction to `D × {max_j |y_j| ≤ half_width} × [−T, T]`.
    pub fn restrict_y(&self, half_width: f64) -> Result<Self> {
        let (sub, offset) = self.grid.restrict_y(half_width)?;
        let values = (0..sub.len())
            .map(|f| self.values[self.grid.embed_flat(&sub, offset, f, false)])
            .collect();
        Ok(Self::from_raw(&sub, values, &self.label))
    }

    /// First derivative along one lattice axis (one-sided at the ends).
    pub fn partial(&self, axis: usize) -> Result<Self> {
        let d = self.grid.lattice().derivative(&self.values, axis)?;
        Ok(Self::from_raw(&self.grid, d, &self.label))
    }

    /// Second derivative along one axis including the end points.
    pub fn second_partial(&self, axis: usize) -> Result<Self> {
        let d = self
            .grid
            .lattice()
            .second_difference(&self.values, axis, EndStencil::OneSided)?;
        Ok(Self::from_raw(&self.grid, d, &self.label))
    }

    /// `∇ₓu` or `∇_y u`, one field per component.
    pub fn gradient(&self, group: AxisGroup) -> Result<Vec<Self>> {
        self.grid.axes(group).map(|a| self.partial(a)).collect()
    }

    /// `Δₓu` or `Δ_y u` by the three-point stencil. Points on the boundary of
    /// any axis of the group are not evaluated and hold zero.
    pub fn laplacian(&self, group: AxisGroup) -> Result<Self> {
        let lat = self.grid.lattice();
        let mut out = vec![ZERO; lat.len()];
        let axes = self.grid.axes(group);
        for a in axes.clone() {
            let d = lat.second_difference(&self.values, a, EndStencil::Skip)?;
            for (o, v) in out.iter_mut().zip(d) {
                *o += v;
            }
        }
        for (flat, o) in out.iter_mut().enumerate() {
            if axes.clone().any(|a| {
                let i = lat.index_along(flat, a);
                i == 0 || i + 1 == lat.axis_len(a)
            }) {
                *o = ZERO;
            }
        }
        Ok(Self::from_raw(&self.grid, out, &self.label))
    }

    /// `∂ₜu` by central differences, one-sided at `t = ±T`.
    pub fn time_derivative(&self) -> Result<Self> {
        self.partial(self.grid.t_axis())
    }

    /// `∂ₜ²u` by the three-point stencil, one-sided at `t = ±T`.
    pub fn second_time_derivative(&self) -> Result<Self> {
        self.second_partial(self.grid.t_axis())
    }

    /// `∂_ν u` on the given faces of `∂D`.
    pub fn normal_derivative(&self, faces: &[Face]) -> Result<Vec<FaceTrace>> {
        if faces.is_empty() {
            return Err(Error::EmptyBoundary);
        }
        faces
            .iter()
            .map(|&face| {
                let (region, values) =
                    self.grid
                        .lattice()
                        .outward_derivative(&self.values, self.grid.x_axis(face.axis), face.side)?;
                Ok(FaceTrace {
                    face,
                    region,
                    values,
                })
            })
            .collect()
    }
}

/// A time-independent grid function on `D × G` (`f`, `p`, a time slice).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl SpatialField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![ZERO; grid.spatial_len()],
        }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.spatial_len() {
            return Err(Error::ShapeMismatch {
                expected: grid.spatial_len(),
                found: values.len(),
            });
        }
        check_finite(&values, "spatial field")?;
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(&[f64], &[f64]) -> Complex64) -> Result<Self> {
        let mut values = vec![ZERO; grid.spatial_len()];
        grid.for_each_spatial_point(&grid.spatial_lattice().full_region(), |flat, x, y| {
            values[flat] = f(x, y);
        });
        Self::from_values(grid, values)
    }

    pub fn from_real_fn(grid: &GridSpec, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> Result<Self> {
        Self::from_fn(grid, |x, y| Complex64::new(f(x, y), 0.0))
    }

    pub fn constant(grid: &GridSpec, c: Complex64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.spatial_len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Restriction to `D × {max_j |y_j| ≤ half_width}`.
    pub fn restrict_y(&self, half_width: f64) -> Result<Self> {
        let (sub, offset) = self.grid.restrict_y(half_width)?;
        let values = (0..sub.spatial_len())
            .map(|f| self.values[self.grid.embed_flat(&sub, offset, f, true)])
            .collect();
        Ok(Self { grid: sub, values })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    /// Largest imaginary part in magnitude.
    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Trapezoidal `∫_region |v|²` over the spatial lattice.
    pub fn integrate_abs2(&self, region: &Region) -> Result<f64> {
        self.grid
            .spatial_lattice()
            .integrate(region, |flat, _| self.values[flat].norm_sqr())
    }

    /// Trapezoidal `∫_region g(v)`.
    pub fn integrate_with(&self, region: &Region, g: impl Fn(Complex64) -> f64) -> Result<f64> {
        self.grid
            .spatial_lattice()
            .integrate(region, |flat, _| g(self.values[flat]))
    }
}
