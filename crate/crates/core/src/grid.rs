//! Uniform cell-centered grids on a rectangle, the space-time grid of one
//! JKO step, and the discrete differential operators used throughout.
//!
//! Storage is row-major: cell `(i, j)` lives at `j * nx + i`, with `i` the
//! x index. Boundaries are no-flux: face differences on the domain boundary
//! are zero, which is the same as mirroring the boundary cell into a ghost.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Grid2D {
    /// Builds a grid of `nx * ny` cells on `[xmin, xmax] x [ymin, ymax]`.
    pub fn new(nx: usize, ny: usize, bounds: [f64; 4]) -> Result<Self> {
        let [xmin, xmax, ymin, ymax] = bounds;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least one cell per axis, got {nx}x{ny}"
            )));
        }
        if !(bounds.iter().all(|b| b.is_finite()) && xmax > xmin && ymax > ymin) {
            return Err(Error::InvalidArgument(format!(
                "degenerate domain bounds {bounds:?}"
            )));
        }
        Ok(Grid2D {
            nx,
            ny,
            xmin,
            xmax,
            ymin,
            ymax,
            dx: (xmax - xmin) / nx as f64,
            dy: (ymax - ymin) / ny as f64,
        })
    }

    /// The unit square `[-1/2, 1/2]^2` with `n x n` cells.
    pub fn centered_square(n: usize) -> Result<Self> {
        Self::new(n, n, [-0.5, 0.5, -0.5, 0.5])
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.xmin + (i as f64 + 0.5) * self.dx,
            self.ymin + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Cell centers in storage order.
    pub fn centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| self.center(i, j)))
    }

    /// Fraction of cell `(i, j)` covered by the rectangle `[x0, x1] x [y0, y1]`.
    pub fn overlap_fraction(&self, i: usize, j: usize, rect: [f64; 4]) -> f64 {
        let cx0 = self.xmin + i as f64 * self.dx;
        let cy0 = self.ymin + j as f64 * self.dy;
        let ox = (rect[1].min(cx0 + self.dx) - rect[0].max(cx0)).max(0.0);
        let oy = (rect[3].min(cy0 + self.dy) - rect[2].max(cy0)).max(0.0);
        ox * oy / self.cell_area()
    }
}

/// Per-cell real values on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite field value at cell {k}"
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = grid.centers().map(|(x, y)| f(x, y)).collect();
        ScalarField { grid, values }
    }

    /// Cell averages of `value * 1_rect`.
    pub fn rectangle_indicator(grid: Grid2D, rect: [f64; 4], value: f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(value * grid.overlap_fraction(i, j, rect));
            }
        }
        ScalarField { grid, values }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `∫ |self - other| dx`.
    pub fn l1_distance(&self, other: &ScalarField) -> f64 {
        integrate(&self.zip_map(other, |a, b| (a - b).abs()))
    }

    /// `(∫ |self - other|^2 dx)^(1/2)`.
    pub fn l2_distance(&self, other: &ScalarField) -> f64 {
        integrate(&self.zip_map(other, |a, b| (a - b) * (a - b))).sqrt()
    }
}

/// `Σ f(cell) dx dy`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_area()
}

/// Values on cell faces. `x` holds the `(nx + 1) * ny` vertical faces
/// (row-major, face `i` of row `j` sits left of cell `i`), `y` holds the
/// `nx * (ny + 1)` horizontal faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: Grid2D,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: Grid2D) -> Self {
        FaceField {
            grid,
            x: vec![0.0; (grid.nx + 1) * grid.ny],
            y: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    #[inline]
    pub fn x_idx(grid: &Grid2D, i: usize, j: usize) -> usize {
        j * (grid.nx + 1) + i
    }

    #[inline]
    pub fn y_idx(grid: &Grid2D, i: usize, j: usize) -> usize {
        j * grid.nx + i
    }

    /// Face inner product `Σ u v dx dy`, boundary faces included.
    pub fn dot(&self, other: &FaceField) -> f64 {
        let s: f64 = self.x.iter().zip(&other.x).map(|(a, b)| a * b).sum::<f64>()
            + self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum::<f64>();
        s * self.grid.cell_area()
    }

    /// Zeroes the normal component on the domain boundary.
    pub fn clear_boundary(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.x[Self::x_idx(&g, 0, j)] = 0.0;
            self.x[Self::x_idx(&g, g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.y[Self::y_idx(&g, i, 0)] = 0.0;
            self.y[Self::y_idx(&g, i, g.ny)] = 0.0;
        }
    }
}

/// Staggered gradient: one difference per face, zero on boundary faces.
pub fn gradient(f: &ScalarField) -> FaceField {
    let g = f.grid;
    let mut out = FaceField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.x[FaceField::x_idx(&g, i, j)] =
                (f.values[g.idx(i, j)] - f.values[g.idx(i - 1, j)]) / g.dx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.y[FaceField::y_idx(&g, i, j)] =
                (f.values[g.idx(i, j)] - f.values[g.idx(i, j - 1)]) / g.dy;
        }
    }
    out
}

/// Divergence of a face field, the negative adjoint of [`gradient`] when the
/// boundary faces carry no flux.
pub fn divergence(v: &FaceField) -> ScalarField {
    let g = v.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let fx = v.x[FaceField::x_idx(&g, i + 1, j)] - v.x[FaceField::x_idx(&g, i, j)];
            let fy = v.y[FaceField::y_idx(&g, i, j + 1)] - v.y[FaceField::y_idx(&g, i, j)];
            out.values[g.idx(i, j)] = fx / g.dx + fy / g.dy;
        }
    }
    out
}

/// Cell-centered gradient: the average of the two adjacent face differences.
/// In the interior this is the centered difference; at the boundary the
/// mirror ghost makes the outer face difference vanish.
pub fn cell_gradient_into(g: &Grid2D, f: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (0.5 / g.dx, 0.5 / g.dy);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let left = if i > 0 { f[row + i - 1] } else { f[row + i] };
            let right = if i + 1 < nx { f[row + i + 1] } else { f[row + i] };
            gx[row + i] = (right - left) * hx;
        }
    }
    for j in 0..ny {
        let down = if j > 0 { j - 1 } else { j };
        let up = if j + 1 < ny { j + 1 } else { j };
        for i in 0..nx {
            gy[j * nx + i] = (f[up * nx + i] - f[down * nx + i]) * hy;
        }
    }
}

/// Adds `scale * Gᵀ(gx, gy)` to `out`, where `G` is [`cell_gradient_into`]
/// viewed as a matrix on plain (unweighted) vectors.
pub fn cell_gradient_transpose_add(
    g: &Grid2D,
    gx: &[f64],
    gy: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (0.5 * scale / g.dx, 0.5 * scale / g.dy);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            // column i of G_x receives +1 from row i-1 (or from row i at the
            // right boundary) and -1 from row i+1 (or row i at the left).
            let v = gx[row + i];
            let left = if i > 0 { row + i - 1 } else { row + i };
            let right = if i + 1 < nx { row + i + 1 } else { row + i };
            out[right] += v * hx;
            out[left] -= v * hx;
        }
    }
    for j in 0..ny {
        let down = if j > 0 { j - 1 } else { j };
        let up = if j + 1 < ny { j + 1 } else { j };
        for i in 0..nx {
            let v = gy[j * nx + i];
            out[up * nx + i] += v * hy;
            out[down * nx + i] -= v * hy;
        }
    }
}

/// The grid of one rescaled JKO step: `nt` sub-intervals of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    pub base: Grid2D,
    pub nt: usize,
    pub dt: f64,
}

impl SpaceTimeGrid {
    pub fn new(base: Grid2D, nt: usize) -> Result<Self> {
        if nt == 0 {
            return Err(Error::InvalidArgument(
                "space-time grid needs nt >= 1".into(),
            ));
        }
        Ok(SpaceTimeGrid {
            base,
            nt,
            dt: 1.0 / nt as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.base.n_cells()
    }
}

/// Node values: `nt + 1` time slices of a cell field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeScalar {
    pub grid: SpaceTimeGrid,
    pub values: Vec<f64>,
}

impl SpaceTimeScalar {
    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        SpaceTimeScalar {
            grid,
            values: vec![0.0; (grid.nt + 1) * grid.n_cells()],
        }
    }

    pub fn from_fn(grid: SpaceTimeGrid, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let n = grid.n_cells();
        for k in 0..=grid.nt {
            let t = k as f64 * grid.dt;
            for (c, (x, y)) in grid.base.centers().enumerate() {
                out.values[k * n + c] = f(t, x, y);
            }
        }
        out
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.n_cells();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.n_cells();
        &mut self.values[k * n..(k + 1) * n]
    }

    /// The terminal slice `t = 1`.
    pub fn last(&self) -> &[f64] {
        self.slice(self.grid.nt)
    }
}

/// Collocated values at interval midpoints: a time component and two
/// space components, each `nt * n_cells` long.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeVector {
    pub grid: SpaceTimeGrid,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SpaceTimeVector {
    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        let len = grid.nt * grid.n_cells();
        SpaceTimeVector {
            grid,
            t: vec![0.0; len],
            x: vec![0.0; len],
            y: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Weighted inner product `Σ w dt (u·v)` over all collocation points.
    pub fn dot(&self, other: &SpaceTimeVector) -> f64 {
        let s: f64 = (0..self.len())
            .map(|k| self.t[k] * other.t[k] + self.x[k] * other.x[k] + self.y[k] * other.y[k])
            .sum();
        s * self.grid.base.cell_area() * self.grid.dt
    }

    /// Weighted squared norm.
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

/// `Dφ = (∂t φ, ∇φ)` at interval midpoints: forward time difference and the
/// time average of the cell-centered spatial gradient of the two end slices.
pub fn spacetime_d(phi: &SpaceTimeScalar) -> SpaceTimeVector {
    let mut out = SpaceTimeVector::zeros(phi.grid);
    spacetime_d_into(phi, &mut out);
    out
}

pub fn spacetime_d_into(phi: &SpaceTimeScalar, out: &mut SpaceTimeVector) {
    let st = phi.grid;
    let n = st.n_cells();
    let inv_dt = 1.0 / st.dt;
    let mut g0x = vec![0.0; n];
    let mut g0y = vec![0.0; n];
    let mut g1x = vec![0.0; n];
    let mut g1y = vec![0.0; n];
    cell_gradient_into(&st.base, phi.slice(0), &mut g0x, &mut g0y);
    for k in 0..st.nt {
        cell_gradient_into(&st.base, phi.slice(k + 1), &mut g1x, &mut g1y);
        let (a, b) = (phi.slice(k), phi.slice(k + 1));
        let off = k * n;
        for c in 0..n {
            out.t[off + c] = (b[c] - a[c]) * inv_dt;
            out.x[off + c] = 0.5 * (g0x[c] + g1x[c]);
            out.y[off + c] = 0.5 * (g0y[c] + g1y[c]);
        }
        std::mem::swap(&mut g0x, &mut g1x);
        std::mem::swap(&mut g0y, &mut g1y);
    }
}

/// Weighted adjoint of [`spacetime_d`]: `⟨Dφ, v⟩ = Σ_nodes dx dy φ · D*(v)`
/// with the collocation product of [`SpaceTimeVector::dot`].
pub fn spacetime_d_adjoint(v: &SpaceTimeVector) -> SpaceTimeScalar {
    let mut out = SpaceTimeScalar::zeros(v.grid);
    spacetime_d_adjoint_add(v, 1.0, &mut out);
    out
}

/// `out += scale * D*(v)`.
pub fn spacetime_d_adjoint_add(v: &SpaceTimeVector, scale: f64, out: &mut SpaceTimeScalar) {
    let st = v.grid;
    let n = st.n_cells();
    let mut tmp = vec![0.0; n];
    for k in 0..st.nt {
        let off = k * n;
        let (vt, vx, vy) = (&v.t[off..off + n], &v.x[off..off + n], &v.y[off..off + n]);
        {
            let lo = out.slice_mut(k);
            for c in 0..n {
                lo[c] -= scale * vt[c];
            }
        }
        {
            let hi = out.slice_mut(k + 1);
            for c in 0..n {
                hi[c] += scale * vt[c];
            }
        }
        tmp.iter_mut().for_each(|t| *t = 0.0);
        cell_gradient_transpose_add(&st.base, vx, vy, 0.5 * st.dt * scale, &mut tmp);
        for kk in [k, k + 1] {
            let s = out.slice_mut(kk);
            for c in 0..n {
                s[c] += tmp[c];
            }
        }
    }
}
