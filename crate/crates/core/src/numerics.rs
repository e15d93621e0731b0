//! Uniform 1D grids, sampled fields and the finite-difference / quadrature
//! operators every other module builds on.
//!
//! Periodic grids place `n` points on `[x_min, x_max)` with spacing `L/n`;
//! clamped grids include both endpoints with spacing `L/(n-1)`. Derivatives
//! are second-order central differences, wrapping on periodic grids and
//! switching to one-sided second-order stencils at clamped edges.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of grid points.
pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
    boundary: Boundary,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize, boundary: Boundary) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if n < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_POINTS} points, got {n}"
            )));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        let grid = Self {
            x_min,
            x_max,
            n,
            boundary,
        };
        if !(grid.spacing() > 0.0) {
            return Err(Error::InvalidGrid("spacing underflows to zero".into()));
        }
        Ok(grid)
    }

    pub fn periodic(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, Boundary::Periodic)
    }

    pub fn clamped(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, Boundary::Clamped)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.length() / self.n as f64,
            Boundary::Clamped => self.length() / (self.n - 1) as f64,
        }
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Quadrature weight of point `i`: `h` everywhere on periodic grids,
    /// trapezoid weights (`h/2` at the two ends) on clamped grids.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        match self.boundary {
            Boundary::Clamped if i == 0 || i + 1 == self.n => 0.5 * h,
            _ => h,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.weight(i)).collect()
    }

    /// Index of the cell containing `x`. Cells are centred on grid points;
    /// on clamped grids the two end cells are half cells. Positions outside
    /// a clamped domain are clamped to the nearest end cell.
    pub fn cell_index(&self, x: f64) -> usize {
        let s = (x - self.x_min) / self.spacing();
        match self.boundary {
            Boundary::Periodic => {
                let k = s.round() as i64;
                k.rem_euclid(self.n as i64) as usize
            }
            Boundary::Clamped => {
                let k = s.round();
                if k <= 0.0 {
                    0
                } else {
                    (k as usize).min(self.n - 1)
                }
            }
        }
    }

    /// Left edge and width of cell `i`.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let h = self.spacing();
        let x = self.point(i);
        match self.boundary {
            Boundary::Clamped if i == 0 => (x, 0.5 * h),
            Boundary::Clamped if i + 1 == self.n => (x - 0.5 * h, 0.5 * h),
            _ => (x - 0.5 * h, h),
        }
    }

    /// Maps a position back into the domain: wrap for periodic grids,
    /// mirror reflection at the walls for clamped grids.
    pub fn fold(&self, x: f64) -> f64 {
        let l = self.length();
        match self.boundary {
            Boundary::Periodic => self.x_min + (x - self.x_min).rem_euclid(l),
            Boundary::Clamped => {
                let y = (x - self.x_min).rem_euclid(2.0 * l);
                self.x_min + if y > l { 2.0 * l - y } else { y }
            }
        }
    }
}

/// Element type of a sampled field.
pub trait Sample:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + PartialEq
{
    fn zero() -> Self;
    fn is_finite_sample(&self) -> bool;
}

impl Sample for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_finite_sample(&self) -> bool {
        self.is_finite()
    }
}

impl Sample for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn is_finite_sample(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid1D,
    values: Vec<T>,
}

pub type RealField = Field<f64>;
pub type ComplexField = Field<Complex64>;

impl<T: Sample> Field<T> {
    pub fn new(grid: Grid1D, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} samples for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        check_finite("field", &values)?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> T) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid1D, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field {
            grid: self.grid,
            values: self.values.iter().copied().map(f).collect(),
        }
    }

    pub fn zip_with<U: Sample, V: Sample>(
        &self,
        other: &Field<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Field<V>> {
        same_grid(&self.grid, &other.grid)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite("field", &self.values)
    }
}

impl RealField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn check_finite<T: Sample>(what: &'static str, values: &[T]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite_sample()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

pub(crate) fn same_grid(a: &Grid1D, b: &Grid1D) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// First derivative by second-order central differences.
pub fn gradient<T: Sample>(f: &Field<T>) -> Result<Field<T>> {
    f.check_finite()?;
    let v = &f.values;
    let n = v.len();
    let h = f.grid.spacing();
    let inv2h = 0.5 / h;
    let mut out = vec![T::zero(); n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) * inv2h;
    }
    match f.grid.boundary() {
        Boundary::Periodic => {
            out[0] = (v[1] - v[n - 1]) * inv2h;
            out[n - 1] = (v[0] - v[n - 2]) * inv2h;
        }
        Boundary::Clamped => {
            out[0] = (v[1] * 4.0 - v[0] * 3.0 - v[2]) * inv2h;
            out[n - 1] = (v[n - 1] * 3.0 - v[n - 2] * 4.0 + v[n - 3]) * inv2h;
        }
    }
    Ok(Field {
        grid: f.grid,
        values: out,
    })
}

/// Second derivative with the 3-point stencil; clamped edges use the
/// one-sided 4-point second-order formula.
pub fn laplacian<T: Sample>(f: &Field<T>) -> Result<Field<T>> {
    f.check_finite()?;
    let v = &f.values;
    let n = v.len();
    let h = f.grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let mut out = vec![T::zero(); n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] + v[i - 1] - v[i] * 2.0) * inv_h2;
    }
    match f.grid.boundary() {
        Boundary::Periodic => {
            out[0] = (v[1] + v[n - 1] - v[0] * 2.0) * inv_h2;
            out[n - 1] = (v[0] + v[n - 2] - v[n - 1] * 2.0) * inv_h2;
        }
        Boundary::Clamped => {
            out[0] = (v[0] * 2.0 - v[1] * 5.0 + v[2] * 4.0 - v[3]) * inv_h2;
            out[n - 1] = (v[n - 1] * 2.0 - v[n - 2] * 5.0 + v[n - 3] * 4.0 - v[n - 4]) * inv_h2;
        }
    }
    Ok(Field {
        grid: f.grid,
        values: out,
    })
}

/// Trapezoid rule on clamped grids, Riemann sum on periodic grids.
pub fn integrate(f: &RealField) -> Result<f64> {
    f.check_finite()?;
    Ok(f
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| f.grid.weight(i) * v)
        .sum())
}

pub fn l1_distance(f: &RealField, g: &RealField) -> Result<f64> {
    same_grid(&f.grid, &g.grid)?;
    integrate(&f.zip_with(g, |a, b| (a - b).abs())?)
}

/// Linear interpolation of `f` at `x` (periodic wrap, or clamping outside
/// a clamped domain).
pub fn interpolate(f: &RealField, x: f64) -> f64 {
    let g = f.grid;
    let n = g.len();
    let v = &f.values;
    let s = (x - g.x_min()) / g.spacing();
    match g.boundary() {
        Boundary::Periodic => {
            let fl = s.floor();
            let w = s - fl;
            let i = (fl as i64).rem_euclid(n as i64) as usize;
            let j = (i + 1) % n;
            v[i] * (1.0 - w) + v[j] * w
        }
        Boundary::Clamped => {
            if s <= 0.0 {
                return v[0];
            }
            if s >= (n - 1) as f64 {
                return v[n - 1];
            }
            let i = s.floor() as usize;
            let w = s - i as f64;
            v[i] * (1.0 - w) + v[i + 1] * w
        }
    }
}
