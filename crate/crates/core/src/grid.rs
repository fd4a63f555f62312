//! Uniform cell-centred grids on `[-L, L]^d`, fields, discrete operators and norms.
//!
//! Every operator treats the field as extended by zero outside the box, which
//! matches the compactly supported solutions the solver produces (the solver
//! keeps the support away from the edge, see `solver::GUARD_CELLS`).
//!
//! Two derivative families are provided:
//! * cell-centred [`gradient`] / [`divergence`] (centred in the interior,
//!   second-order one-sided at the edge), used for `grad p`, `gamma . grad p`
//!   and norms;
//! * face-based fluxes ([`face_gradient`] / [`face_divergence`], and the
//!   weighted variant [`weighted_laplacian`]) for conservative updates. The
//!   plain [`laplacian`] is the unit-weight face flux divergence.

use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("grid needs at least 8 cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("domain half-width must be positive and finite, got {0}")]
    HalfWidth(f64),
    #[error("series has {series} entries but {dts} time steps were given (expected {series} = dts + 1)")]
    SeriesLength { series: usize, dts: usize },
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::Dimension(dim));
        }
        if n < 8 {
            return Err(GridError::TooFewCells(n));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(GridError::HalfWidth(half_width));
        }
        Ok(Grid { dim, n, half_width })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Volume of one cell, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Centre of cell `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        // Written so that coord(i) == -coord(n - 1 - i) exactly.
        let h = self.h();
        let c = (2.0 * i as f64 + 1.0 - self.n as f64) * 0.5;
        c * h
    }

    /// Axis indices of a flat cell index. Flat index is `iy * n + ix`.
    pub fn unflatten(&self, k: usize) -> (usize, usize) {
        if self.dim == 1 {
            (k, 0)
        } else {
            (k % self.n, k / self.n)
        }
    }

    pub fn flatten(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    /// Cell centre `(x, y)`; `y` is `None` in 1D.
    pub fn center(&self, k: usize) -> (f64, Option<f64>) {
        let (ix, iy) = self.unflatten(k);
        if self.dim == 1 {
            (self.coord(ix), None)
        } else {
            (self.coord(ix), Some(self.coord(iy)))
        }
    }

    pub fn radius(&self, k: usize) -> f64 {
        match self.center(k) {
            (x, None) => x.abs(),
            (x, Some(y)) => x.hypot(y),
        }
    }

    /// Distance in cells from cell `k` to the nearest box edge (0 for edge cells).
    pub fn cells_to_edge(&self, k: usize) -> usize {
        let (ix, iy) = self.unflatten(k);
        let d = |i: usize| i.min(self.n - 1 - i);
        if self.dim == 1 {
            d(ix)
        } else {
            d(ix).min(d(iy))
        }
    }

    /// Offset of one step along `axis` in the flat layout.
    fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.n
        }
    }

    fn axis_index(&self, k: usize, axis: usize) -> usize {
        let (ix, iy) = self.unflatten(k);
        if axis == 0 {
            ix
        } else {
            iy
        }
    }
}

/// One real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field { grid, data: vec![value; grid.len()] }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len(), "field length does not match grid");
        Field { grid, data }
    }

    /// Samples `f(x, y)` at cell centres.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, Option<f64>) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.center(k);
                f(x, y)
            })
            .collect();
        Field { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Field { grid: self.grid, data }
    }

    /// First cell holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum f * h^d`.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Snapshot CSV: header `x,value` (1D) or `x,y,value` (2D), 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        if self.grid.dim == 1 {
            writeln!(out, "x,value")?;
        } else {
            writeln!(out, "x,y,value")?;
        }
        for (k, v) in self.data.iter().enumerate() {
            match self.grid.center(k) {
                (x, None) => writeln!(out, "{},{}", fmt17(x), fmt17(*v))?,
                (x, Some(y)) => writeln!(out, "{},{},{}", fmt17(x), fmt17(y), fmt17(*v))?,
            }
        }
        Ok(())
    }
}

/// Fixed 17-significant-digit formatting used in every CSV output.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Cell-centred vector field, one [`Field`] per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub components: Vec<Field>,
}

impl VectorField {
    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    /// Pointwise Euclidean norm.
    pub fn magnitude(&self) -> Field {
        let grid = *self.grid();
        let data = (0..grid.len())
            .map(|k| self.components.iter().map(|c| c.data[k] * c.data[k]).sum::<f64>().sqrt())
            .collect();
        Field { grid, data }
    }

    /// Pointwise dot product with another vector field.
    pub fn dot(&self, other: &VectorField) -> Field {
        let grid = *self.grid();
        let data = (0..grid.len())
            .map(|k| {
                self.components.iter().zip(&other.components).map(|(a, b)| a.data[k] * b.data[k]).sum()
            })
            .collect();
        Field { grid, data }
    }
}

/// Values on the faces normal to one axis. Along that axis there are `n + 1`
/// faces; face `i` sits between cells `i - 1` and `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub axis: usize,
    pub data: Vec<f64>,
}

fn face_count(grid: &Grid) -> usize {
    if grid.dim == 1 {
        grid.n + 1
    } else {
        (grid.n + 1) * grid.n
    }
}

// Face index along `axis`: the face at position `i` (0..=n) on the line through
// the other-axis index `j`.
fn face_index(grid: &Grid, axis: usize, i: usize, j: usize) -> usize {
    if grid.dim == 1 {
        i
    } else if axis == 0 {
        j * (grid.n + 1) + i
    } else {
        i * grid.n + j
    }
}

fn cell_on_line(grid: &Grid, axis: usize, i: usize, j: usize) -> usize {
    if axis == 0 {
        grid.flatten(i, j)
    } else {
        grid.flatten(j, i)
    }
}

fn lines(grid: &Grid) -> usize {
    if grid.dim == 1 {
        1
    } else {
        grid.n
    }
}

fn centered_derivative(f: &Field, axis: usize) -> Field {
    let g = f.grid;
    let n = g.n;
    let h = g.h();
    let s = g.stride(axis);
    let d = &f.data;
    let data = (0..g.len())
        .map(|k| {
            let i = g.axis_index(k, axis);
            if i == 0 {
                (-3.0 * d[k] + 4.0 * d[k + s] - d[k + 2 * s]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * d[k] - 4.0 * d[k - s] + d[k - 2 * s]) / (2.0 * h)
            } else {
                (d[k + s] - d[k - s]) / (2.0 * h)
            }
        })
        .collect();
    Field { grid: g, data }
}

/// Cell-centred gradient: centred differences inside, second-order one-sided at the edge.
pub fn gradient(f: &Field) -> VectorField {
    VectorField { components: (0..f.grid.dim).map(|axis| centered_derivative(f, axis)).collect() }
}

/// Cell-centred divergence with the same stencil as [`gradient`]; on interior
/// cells it is the negative transpose of the gradient.
pub fn divergence(v: &VectorField) -> Field {
    let grid = *v.grid();
    let mut out = Field::zeros(grid);
    for (axis, comp) in v.components.iter().enumerate() {
        let d = centered_derivative(comp, axis);
        for (o, x) in out.data.iter_mut().zip(&d.data) {
            *o += x;
        }
    }
    out
}

/// Gradient on faces, `(f_i - f_{i-1}) / h`, with zero outside the box.
pub fn face_gradient(f: &Field) -> Vec<FaceField> {
    let g = f.grid;
    let h = g.h();
    (0..g.dim)
        .map(|axis| {
            let mut data = vec![0.0; face_count(&g)];
            for j in 0..lines(&g) {
                for i in 0..=g.n {
                    let right = if i < g.n { f.data[cell_on_line(&g, axis, i, j)] } else { 0.0 };
                    let left = if i > 0 { f.data[cell_on_line(&g, axis, i - 1, j)] } else { 0.0 };
                    data[face_index(&g, axis, i, j)] = (right - left) / h;
                }
            }
            FaceField { axis, data }
        })
        .collect()
}

/// Divergence of face fluxes back to cells, `(F_{i+1} - F_i) / h`.
pub fn face_divergence(grid: &Grid, flux: &[FaceField]) -> Field {
    let h = grid.h();
    let mut out = Field::zeros(*grid);
    for ff in flux {
        for j in 0..lines(grid) {
            for i in 0..grid.n {
                let k = cell_on_line(grid, ff.axis, i, j);
                out.data[k] += (ff.data[face_index(grid, ff.axis, i + 1, j)]
                    - ff.data[face_index(grid, ff.axis, i, j)])
                    / h;
            }
        }
    }
    out
}

// Shared kernel of `laplacian` and `weighted_laplacian`: sum over axes of
// (c_{i+1/2}(f_{i+1} - f_i) - c_{i-1/2}(f_i - f_{i-1})) / h^2, with the face
// coefficient the arithmetic mean of the neighbouring cells and zero ghosts.
fn flux_divergence(f: &Field, coef: Option<&Field>) -> Field {
    let g = f.grid;
    let n = g.n;
    let h2 = g.h() * g.h();
    let d = &f.data;
    let mut out = vec![0.0; g.len()];
    for axis in 0..g.dim {
        let s = g.stride(axis);
        for (k, o) in out.iter_mut().enumerate() {
            let i = g.axis_index(k, axis);
            let (fr, cr) = if i + 1 < n { (d[k + s], coef.map(|c| c.data[k + s])) } else { (0.0, coef.map(|c| c.data[k])) };
            let (fl, cl) = if i > 0 { (d[k - s], coef.map(|c| c.data[k - s])) } else { (0.0, coef.map(|c| c.data[k])) };
            let (right, left) = match coef {
                None => (fr - d[k], d[k] - fl),
                Some(c) => {
                    let ck = c.data[k];
                    (0.5 * (ck + cr.unwrap()) * (fr - d[k]), 0.5 * (ck + cl.unwrap()) * (d[k] - fl))
                }
            };
            *o += (right - left) / h2;
        }
    }
    Field { grid: g, data: out }
}

/// 3-point (1D) / 5-point (2D) Laplacian, zero outside the box.
pub fn laplacian(f: &Field) -> Field {
    flux_divergence(f, None)
}

/// `div(c grad f)` in conservative form with arithmetic-mean face coefficients.
/// Outside the box the coefficient is continued by the edge value and `f` by zero.
pub fn weighted_laplacian(coef: &Field, f: &Field) -> Field {
    assert_eq!(coef.grid, f.grid, "fields live on different grids");
    flux_divergence(f, Some(coef))
}

/// Pointwise negative part: `0` for positive values, `-v` otherwise.
pub fn negative_part(f: &Field) -> Field {
    f.map(|v| if v > 0.0 { 0.0 } else { -v })
}

/// `sum |f|^p h^d`, the spatial integral behind [`lp_norm`].
pub fn lp_integral(f: &Field, p: u32) -> f64 {
    assert!((1..=4).contains(&p), "norm exponent must be 1..=4, got {p}");
    let s: f64 = f.data.iter().map(|v| v.abs().powi(p as i32)).sum();
    s * f.grid.cell_volume()
}

/// `(sum |f|^p h^d)^(1/p)` for `p` in 1..=4.
pub fn lp_norm(f: &Field, p: u32) -> f64 {
    lp_integral(f, p).powf(1.0 / p as f64)
}

/// Trapezoidal time integral of per-step spatial integrals.
///
/// `series[k]` is the spatial integral at the start of step `k` (the last entry
/// is the final time), `dts[k]` the length of step `k`.
pub fn spacetime_accumulate(series: &[f64], dts: &[f64]) -> Result<f64, GridError> {
    if series.len() != dts.len() + 1 {
        return Err(GridError::SeriesLength { series: series.len(), dts: dts.len() });
    }
    Ok(dts.iter().enumerate().map(|(k, dt)| 0.5 * dt * (series[k] + series[k + 1])).sum())
}

/// [`spacetime_accumulate`] followed by the outer `1/p` root.
pub fn spacetime_norm(series: &[f64], dts: &[f64], p: u32) -> Result<f64, GridError> {
    Ok(spacetime_accumulate(series, dts)?.powf(1.0 / p as f64))
}
