//! Space-time elliptic solve of the φ-step.
//!
//! The operator is `M φ = D*Dφ + E₁E₁ᵀφ`: the space-time Laplacian built from
//! [`spacetime_d`] with Neumann space boundaries, a free flux condition at
//! `t = 0` and the Robin term at `t = 1`. `M` is symmetric positive definite
//! and is solved by conjugate gradients. Because the spatial part of `D*D`
//! is diagonalized by the orthonormal DCT-II in each direction, and what
//! remains per spatial mode is a tridiagonal system in time, `M⁻¹` is
//! available exactly and serves as the preconditioner.
//!
//! [`spacetime_d`]: crate::grid::spacetime_d

use std::f64::consts::PI;

use matrixmultiply::dgemm;

use crate::error::{Error, Result};
use crate::grid::{spacetime_d_adjoint_add, spacetime_d_into, Grid2D, SpaceTimeGrid, SpaceTimeScalar, SpaceTimeVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Orthonormal DCT-II matrix, row `k` holds the `k`-th basis vector.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for k in 0..n {
        let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            c[k * n + i] = s * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
    }
    c
}

pub struct PhiSolver {
    grid: SpaceTimeGrid,
    cx: Vec<f64>,
    cy: Vec<f64>,
    /// per mode: eigenvalue of the spatial part
    off: Vec<f64>,
    /// Thomas factors, `(nt + 1) * n_modes`, time-major
    inv_pivot: Vec<f64>,
    upper: Vec<f64>,
    work: Vec<f64>,
    ax: SpaceTimeScalar,
    dphi: SpaceTimeVector,
}

impl PhiSolver {
    pub fn new(grid: SpaceTimeGrid) -> Self {
        let g = grid.base;
        let (nx, ny, nt) = (g.nx, g.ny, grid.nt);
        let n = g.n_cells();
        let dt = grid.dt;
        let cx = dct_matrix(nx);
        let cy = dct_matrix(ny);
        let mut off = vec![0.0; n];
        let mut inv_pivot = vec![0.0; (nt + 1) * n];
        let mut upper = vec![0.0; (nt + 1) * n];
        for ky in 0..ny {
            let ly = (PI * ky as f64 / ny as f64).sin().powi(2) / (g.dy * g.dy);
            for kx in 0..nx {
                let lx = (PI * kx as f64 / nx as f64).sin().powi(2) / (g.dx * g.dx);
                let mode = ky * nx + kx;
                let lam = lx + ly;
                let e = -1.0 / dt + 0.25 * dt * lam;
                let end = 1.0 / dt + 0.25 * dt * lam;
                off[mode] = e;
                let mut prev_upper = 0.0;
                for k in 0..=nt {
                    let mut d = if k == 0 || k == nt { end } else { 2.0 * end };
                    if k == nt {
                        d += 1.0;
                    }
                    if k > 0 {
                        d -= e * prev_upper;
                    }
                    let inv = 1.0 / d;
                    inv_pivot[k * n + mode] = inv;
                    let u = if k < nt { e * inv } else { 0.0 };
                    upper[k * n + mode] = u;
                    prev_upper = u;
                }
            }
        }
        PhiSolver {
            grid,
            cx,
            cy,
            off,
            inv_pivot,
            upper,
            work: vec![0.0; (nt + 1) * n],
            ax: SpaceTimeScalar::zeros(grid),
            dphi: SpaceTimeVector::zeros(grid),
        }
    }

    pub fn grid(&self) -> SpaceTimeGrid {
        self.grid
    }

    /// `out = M φ`.
    pub fn apply(&mut self, phi: &SpaceTimeScalar, out: &mut SpaceTimeScalar) {
        spacetime_d_into(phi, &mut self.dphi);
        out.values.iter_mut().for_each(|v| *v = 0.0);
        spacetime_d_adjoint_add(&self.dphi, 1.0, out);
        let nt = self.grid.nt;
        let last = phi.slice(nt).to_vec();
        for (o, l) in out.slice_mut(nt).iter_mut().zip(last) {
            *o += l;
        }
    }

    /// `x = M⁻¹ b` by fast diagonalization, in place.
    pub fn direct_solve(&mut self, x: &mut SpaceTimeScalar) {
        let g = self.grid.base;
        let (nx, ny, nt) = (g.nx, g.ny, self.grid.nt);
        let n = nx * ny;
        let rows = (nt + 1) * ny;
        let v = &mut x.values;
        let w = &mut self.work;
        // SAFETY (all gemm calls): the extents and strides describe slices of
        // exactly the lengths passed, and input and output never alias.
        unsafe {
            // rows ← rows · Cxᵀ
            dgemm(rows, nx, nx, 1.0, v.as_ptr(), nx as isize, 1, self.cx.as_ptr(), 1, nx as isize, 0.0, w.as_mut_ptr(), nx as isize, 1);
            // slice ← Cy · slice
            for k in 0..=nt {
                let (src, dst) = (w[k * n..].as_ptr(), v[k * n..].as_mut_ptr());
                dgemm(ny, ny, nx, 1.0, self.cy.as_ptr(), ny as isize, 1, src, nx as isize, 1, 0.0, dst, nx as isize, 1);
            }
        }
        for mode in 0..n {
            v[mode] *= self.inv_pivot[mode];
        }
        for k in 1..=nt {
            for mode in 0..n {
                let prev = v[(k - 1) * n + mode];
                let cur = &mut v[k * n + mode];
                *cur = (*cur - self.off[mode] * prev) * self.inv_pivot[k * n + mode];
            }
        }
        for k in (0..nt).rev() {
            for mode in 0..n {
                let next = v[(k + 1) * n + mode];
                v[k * n + mode] -= self.upper[k * n + mode] * next;
            }
        }
        unsafe {
            for k in 0..=nt {
                let (src, dst) = (v[k * n..].as_ptr(), w[k * n..].as_mut_ptr());
                dgemm(ny, ny, nx, 1.0, self.cy.as_ptr(), 1, ny as isize, src, nx as isize, 1, 0.0, dst, nx as isize, 1);
            }
            dgemm(rows, nx, nx, 1.0, w.as_ptr(), nx as isize, 1, self.cx.as_ptr(), nx as isize, 1, 0.0, v.as_mut_ptr(), nx as isize, 1);
        }
    }

    /// Preconditioned conjugate gradients on `M x = b`. The preconditioner
    /// is exact up to rounding, so the first iterate `x = P b` normally meets
    /// the tolerance and the loop only polishes.
    pub fn solve(
        &mut self,
        b: &SpaceTimeScalar,
        x: &mut SpaceTimeScalar,
        tol: f64,
        max_iters: usize,
    ) -> Result<CgStats> {
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let b_norm = dot(&b.values, &b.values).sqrt();
        if b_norm == 0.0 {
            x.values.iter_mut().for_each(|v| *v = 0.0);
            return Ok(CgStats {
                iterations: 0,
                rel_residual: 0.0,
            });
        }
        x.values.copy_from_slice(&b.values);
        self.direct_solve(x);
        let mut ax = std::mem::replace(&mut self.ax, SpaceTimeScalar::zeros(self.grid));
        self.apply(x, &mut ax);
        let mut r = b.clone();
        for (ri, ai) in r.values.iter_mut().zip(&ax.values) {
            *ri -= ai;
        }
        let mut rel = dot(&r.values, &r.values).sqrt() / b_norm;
        if rel <= tol {
            self.ax = ax;
            return Ok(CgStats {
                iterations: 1,
                rel_residual: rel,
            });
        }
        let mut z = r.clone();
        self.direct_solve(&mut z);
        let mut p = z.clone();
        let mut rz = dot(&r.values, &z.values);
        let mut ap = ax;
        for it in 2..=max_iters {
            self.apply(&p, &mut ap);
            let alpha = rz / dot(&p.values, &ap.values);
            for k in 0..x.values.len() {
                x.values[k] += alpha * p.values[k];
                r.values[k] -= alpha * ap.values[k];
            }
            rel = dot(&r.values, &r.values).sqrt() / b_norm;
            if rel <= tol {
                self.ax = ap;
                return Ok(CgStats {
                    iterations: it,
                    rel_residual: rel,
                });
            }
            z.values.copy_from_slice(&r.values);
            self.direct_solve(&mut z);
            let rz_new = dot(&r.values, &z.values);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..p.values.len() {
                p.values[k] = z.values[k] + beta * p.values[k];
            }
        }
        self.ax = ap;
        Err(Error::SolverFailure {
            what: "space-time conjugate gradient",
            residual: rel,
        })
    }
}

/// Discrete error against `φ* = (1 + t) cos(πx) cos(πy)` on the unit
/// square. The right-hand side applies the discrete time stencil with the
/// exact Laplacian, so the error is purely spatial.
pub fn manufactured_error(n: usize, nt: usize) -> Result<(f64, CgStats)> {
    let g = Grid2D::new(n, n, [0.0, 1.0, 0.0, 1.0])?;
    let st = SpaceTimeGrid::new(g, nt)?;
    let dt = st.dt;
    let pi2 = PI * PI;
    let exact = SpaceTimeScalar::from_fn(st, |t, x, y| (1.0 + t) * (PI * x).cos() * (PI * y).cos());
    let cells = st.n_cells();
    let mut b = SpaceTimeScalar::zeros(st);
    for k in 0..=nt {
        for c in 0..cells {
            let at = |j: usize| exact.values[j * cells + c];
            // time part: -φ_t(0) at k = 0, φ_t(1) + φ(1) at k = nt
            let (time, avg) = if k == 0 {
                (-(at(1) - at(0)) / dt, at(0) + at(1))
            } else if k == nt {
                ((at(nt) - at(nt - 1)) / dt + at(nt), at(nt - 1) + at(nt))
            } else {
                (-(at(k + 1) - 2.0 * at(k) + at(k - 1)) / dt, at(k - 1) + 2.0 * at(k) + at(k + 1))
            };
            b.values[k * cells + c] = time + 0.25 * dt * 2.0 * pi2 * avg;
        }
    }
    let mut s = PhiSolver::new(st);
    let mut x = SpaceTimeScalar::zeros(st);
    let stats = s.solve(&b, &mut x, 1e-12, 100)?;
    let sq: f64 = x.values.iter().zip(&exact.values).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(((sq / x.values.len() as f64).sqrt(), stats))
}
