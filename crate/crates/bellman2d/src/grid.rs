//! Uniform 2D grid over an axis-aligned square, scalar field storage, and the
//! finite-difference primitives every other module builds on.
//!
//! The grid has an odd number of nodes per side so the center is itself a node;
//! blow-up rescalings and expansion fits are anchored there. Second differences
//! are defined at interior nodes only; the boundary ring of a difference field
//! carries a NaN sentinel marking "undefined".

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Uniform square grid: `n` nodes per side (odd, >= 17), spacing
/// `h = 2 * half_width / (n - 1)`, node `(i, j)` at
/// `center + ((i - (n-1)/2) h, (j - (n-1)/2) h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    center: Point,
    half_width: f64,
    n: usize,
    h: f64,
}

impl Grid2D {
    pub fn new(center: Point, half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidHalfWidth { value: half_width });
        }
        if n % 2 == 0 || n < 17 {
            return Err(Error::InvalidGridSize { n });
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        Ok(Self { center, half_width, n, h })
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Nodes per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinates of node `(i, j)`; `i` indexes x, `j` indexes y.
    pub fn node(&self, i: usize, j: usize) -> Point {
        let mid = ((self.n - 1) / 2) as f64;
        [
            self.center[0] + (i as f64 - mid) * self.h,
            self.center[1] + (j as f64 - mid) * self.h,
        ]
    }

    /// Flat index of node `(i, j)`; row-major with `j` as the row.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        j * self.n + i
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 1 && j >= 1 && i + 1 < self.n && j + 1 < self.n
    }

    /// Index of the cell containing `x`, clamped so the cell is valid, plus
    /// local coordinates in `[0, 1]^2`. Errors when `x` is outside the square.
    fn locate(&self, x: Point) -> Result<(usize, usize, f64, f64)> {
        let tol = 1e-12 * self.half_width.max(1.0);
        let lo = [self.center[0] - self.half_width, self.center[1] - self.half_width];
        if x[0] < lo[0] - tol
            || x[1] < lo[1] - tol
            || x[0] > lo[0] + 2.0 * self.half_width + tol
            || x[1] > lo[1] + 2.0 * self.half_width + tol
        {
            return Err(Error::OutOfDomain { x: x[0], y: x[1] });
        }
        let fi = ((x[0] - lo[0]) / self.h).clamp(0.0, (self.n - 1) as f64);
        let fj = ((x[1] - lo[1]) / self.h).clamp(0.0, (self.n - 1) as f64);
        let i0 = (fi.floor() as usize).min(self.n - 2);
        let j0 = (fj.floor() as usize).min(self.n - 2);
        Ok((i0, j0, fi - i0 as f64, fj - j0 as f64))
    }

    /// Nodes within Euclidean distance `radius` of `x0`. Deterministic
    /// lexicographic (j, i) order.
    pub fn nodes_in_ball(&self, x0: Point, radius: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.n {
            for i in 0..self.n {
                let p = self.node(i, j);
                if norm([p[0] - x0[0], p[1] - x0[1]]) <= radius {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Direction of a second difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffDirection {
    /// Along e1 (x), step h.
    E1,
    /// Along e2 (y), step h.
    E2,
    /// Along (1, 1)/sqrt(2), step h*sqrt(2).
    DiagPlus,
    /// Along (1, -1)/sqrt(2), step h*sqrt(2).
    DiagMinus,
}

/// Grid-sampled scalar field. Values are stored row-major (`j * n + i`).
///
/// Fields produced by `sample`/`from_values` are finite everywhere; fields
/// produced by difference operators carry NaN on the boundary ring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.n * grid.n] }
    }

    /// Wrap raw values, rejecting non-finite entries.
    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        assert_eq!(values.len(), grid.n * grid.n, "value buffer does not match grid");
        for j in 0..grid.n {
            for i in 0..grid.n {
                if !values[grid.idx(i, j)].is_finite() {
                    let p = grid.node(i, j);
                    return Err(Error::NonFiniteSample { x: p[0], y: p[1] });
                }
            }
        }
        Ok(Self { grid, values })
    }

    /// Wrap raw values that may contain NaN sentinels (difference fields).
    pub(crate) fn from_raw(grid: Grid2D, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n * grid.n, "value buffer does not match grid");
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.grid.idx(i, j);
        self.values[idx] = v;
    }

    /// True when the node carries a defined (finite) value.
    pub fn is_defined(&self, i: usize, j: usize) -> bool {
        self.at(i, j).is_finite()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField2D {
        ScalarField2D::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, t: f64) -> ScalarField2D {
        self.map(|v| t * v)
    }

    pub fn add(&self, other: &ScalarField2D) -> ScalarField2D {
        assert_eq!(self.grid, other.grid, "field algebra requires a shared grid");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + b)
            .collect();
        ScalarField2D::from_raw(self.grid, values)
    }

    pub fn sub(&self, other: &ScalarField2D) -> ScalarField2D {
        self.add(&other.scale(-1.0))
    }

    pub fn pointwise_min(&self, other: &ScalarField2D) -> ScalarField2D {
        assert_eq!(self.grid, other.grid, "field algebra requires a shared grid");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a.min(b))
            .collect();
        ScalarField2D::from_raw(self.grid, values)
    }

    /// Max of |value| over defined nodes.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Max of |self - other| over nodes where both are defined.
    pub fn max_abs_diff(&self, other: &ScalarField2D) -> f64 {
        assert_eq!(self.grid, other.grid, "field algebra requires a shared grid");
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .fold(0.0_f64, |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Centered gradient at an interior node, if every stencil value is defined.
    pub fn gradient(&self, i: usize, j: usize) -> Option<Point> {
        if !self.grid.is_interior(i, j) {
            return None;
        }
        let h2 = 2.0 * self.grid.h;
        let gx = (self.at(i + 1, j) - self.at(i - 1, j)) / h2;
        let gy = (self.at(i, j + 1) - self.at(i, j - 1)) / h2;
        if gx.is_finite() && gy.is_finite() {
            Some([gx, gy])
        } else {
            None
        }
    }

    /// Write the field as CSV (`x,y,value`), row-major over nodes.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.grid.n;
        let mut out = String::with_capacity(n * n * 60);
        out.push_str("x,y,value\n");
        for j in 0..n {
            for i in 0..n {
                let p = self.grid.node(i, j);
                writeln!(out, "{:.16e},{:.16e},{:.16e}", p[0], p[1], self.at(i, j))
                    .expect("string write cannot fail");
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Sample a pointwise function on every node of the grid.
pub fn sample<F: Fn(Point) -> f64>(f: F, grid: Grid2D) -> Result<ScalarField2D> {
    let mut values = vec![0.0; grid.n * grid.n];
    for j in 0..grid.n {
        for i in 0..grid.n {
            let p = grid.node(i, j);
            let v = f(p);
            if !v.is_finite() {
                return Err(Error::NonFiniteSample { x: p[0], y: p[1] });
            }
            values[grid.idx(i, j)] = v;
        }
    }
    Ok(ScalarField2D { grid, values })
}

/// Centered second difference along the given direction, divided by the
/// squared step (h on the axes, h*sqrt(2) on the diagonals). Exact on
/// quadratics, and on all cubics since the odd truncation terms cancel.
/// The boundary ring is set to NaN.
pub fn second_difference(f: &ScalarField2D, direction: DiffDirection) -> Result<ScalarField2D> {
    let grid = f.grid;
    let n = grid.n;
    if n < 3 {
        return Err(Error::GridTooSmall { n });
    }
    let (di, dj, step_sq) = match direction {
        DiffDirection::E1 => (1_isize, 0_isize, grid.h * grid.h),
        DiffDirection::E2 => (0, 1, grid.h * grid.h),
        DiffDirection::DiagPlus => (1, 1, 2.0 * grid.h * grid.h),
        DiffDirection::DiagMinus => (1, -1, 2.0 * grid.h * grid.h),
    };
    let mut values = vec![f64::NAN; n * n];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let ip = (i as isize + di) as usize;
            let jp = (j as isize + dj) as usize;
            let im = (i as isize - di) as usize;
            let jm = (j as isize - dj) as usize;
            values[grid.idx(i, j)] =
                (f.at(ip, jp) + f.at(im, jm) - 2.0 * f.at(i, j)) / step_sq;
        }
    }
    Ok(ScalarField2D::from_raw(grid, values))
}

/// Mixed second difference d12 from the two diagonal differences; exact on
/// quadratics and cubics. NaN ring.
pub fn cross_difference(f: &ScalarField2D) -> Result<ScalarField2D> {
    let dp = second_difference(f, DiffDirection::DiagPlus)?;
    let dm = second_difference(f, DiffDirection::DiagMinus)?;
    Ok(dp.sub(&dm).scale(0.5))
}

/// Bilinear interpolation of the field at `x`. Exact on bilinear functions and
/// monotone with respect to the four cell corners. Errors when `x` is outside
/// the square or the enclosing cell touches undefined values.
pub fn interpolate(f: &ScalarField2D, x: Point) -> Result<f64> {
    let (i0, j0, s, t) = f.grid.locate(x)?;
    let c00 = f.at(i0, j0);
    let c10 = f.at(i0 + 1, j0);
    let c01 = f.at(i0, j0 + 1);
    let c11 = f.at(i0 + 1, j0 + 1);
    if !(c00.is_finite() && c10.is_finite() && c01.is_finite() && c11.is_finite()) {
        return Err(Error::UndefinedRegion { x: x[0], y: x[1] });
    }
    Ok(c00 * (1.0 - s) * (1.0 - t) + c10 * s * (1.0 - t) + c01 * (1.0 - s) * t + c11 * s * t)
}
