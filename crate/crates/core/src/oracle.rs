//! Brute-force and reference solvers used to cross-check the main solver.
//!
//! Nothing here calls the prox, projection or saddle-point code it checks:
//! the pointwise energy is re-implemented locally, minimizations are grid
//! searches or derivative-free searches, and the reference JKO step is a
//! plain primal-dual iteration on the same discrete functional.

use crate::energy::{Congestion, DensityPair, EnergySpec, PointEnergy};
use crate::error::{Error, Result};
use crate::grid::{
    integrate, spacetime_d, spacetime_d_adjoint, ScalarField, SpaceTimeGrid, SpaceTimeScalar,
    SpaceTimeVector,
};

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Pointwise energy, `+∞` outside its domain.
fn local_energy(rho: [f64; 2], pt: &PointEnergy) -> f64 {
    if rho[0] < 0.0 || rho[1] < 0.0 {
        return f64::INFINITY;
    }
    let z = pt.alpha[0] * rho[0] + pt.alpha[1] * rho[1];
    let congestion = match pt.congestion {
        Congestion::Hard if z > 1.0 => return f64::INFINITY,
        Congestion::Hard => 0.0,
        Congestion::PorousMedium { m } if m == 1.0 => xlogx(z),
        Congestion::PorousMedium { m } => z.powf(m) / (m - 1.0),
    };
    pt.v[0] * rho[0] + pt.v[1] * rho[1] + pt.eps * (xlogx(rho[0]) + xlogx(rho[1])) + congestion
}

fn prox_value(rho: [f64; 2], s: [f64; 2], lambda: f64, pt: &PointEnergy) -> f64 {
    let d = (rho[0] - s[0]).powi(2) + (rho[1] - s[1]).powi(2);
    local_energy(rho, pt) + d / (2.0 * lambda)
}

const BRUTE_GRID: usize = 400;
const BRUTE_LEVELS: usize = 8;

/// Minimizer of `e(ρ) + |ρ - s|²/2λ` by exhaustive search on a 400×400 grid
/// over `[0, ρ_max]²` followed by local 10× refinements.
pub fn brute_prox(s: [f64; 2], lambda: f64, pt: &PointEnergy) -> [f64; 2] {
    let rmax = f64::max(2.0, 2.0 * s[0].max(s[1]).max(0.0));
    let hi = match pt.congestion {
        Congestion::Hard => [rmax.min(1.0 / pt.alpha[0]), rmax.min(1.0 / pt.alpha[1])],
        _ => [rmax, rmax],
    };
    let f = |r: [f64; 2]| prox_value(r, s, lambda, pt);
    let mut d = [hi[0] / BRUTE_GRID as f64, hi[1] / BRUTE_GRID as f64];
    let mut best = ([0.0, 0.0], f([0.0, 0.0]));
    for i in 0..=BRUTE_GRID {
        for j in 0..=BRUTE_GRID {
            let r = [i as f64 * d[0], j as f64 * d[1]];
            let v = f(r);
            if v < best.1 {
                best = (r, v);
            }
        }
    }
    for _ in 0..BRUTE_LEVELS {
        let h = [d[0] / 10.0, d[1] / 10.0];
        // recenter while the best point sits on the window edge
        for _ in 0..200 {
            let center = best.0;
            let mut edge = false;
            for a in -10i32..=10 {
                for b in -10i32..=10 {
                    let r = [center[0] + a as f64 * h[0], center[1] + b as f64 * h[1]];
                    let v = f(r);
                    if v < best.1 {
                        best = (r, v);
                        edge = a.abs() == 10 || b.abs() == 10;
                    }
                }
            }
            if !edge {
                break;
            }
        }
        d = h;
    }
    if let Congestion::Hard = pt.congestion {
        // a lattice cannot slide along the slanted face α·ρ = 1, so search it
        // separately
        let edge = brute_on_face(&f, pt.alpha);
        if edge.1 < best.1 {
            best = edge;
        }
    }
    best.0
}

/// Exhaustive search over the face `α·ρ = 1`, `ρ >= 0`, parametrised by `ρ₁`.
fn brute_on_face(f: &impl Fn([f64; 2]) -> f64, alpha: [f64; 2]) -> ([f64; 2], f64) {
    let top = 1.0 / alpha[0];
    let point = |t: f64| {
        let t = t.clamp(0.0, top);
        // pulled in by a few ulps so rounding never lands outside
        let shrink = 1.0 - 1e-15;
        [t * shrink, ((1.0 - alpha[0] * t) / alpha[1]).max(0.0) * shrink]
    };
    let samples = 100 * BRUTE_GRID;
    let mut d = top / samples as f64;
    let mut best = (0.0, f(point(0.0)));
    for k in 1..=samples {
        let t = k as f64 * d;
        let v = f(point(t));
        if v < best.1 {
            best = (t, v);
        }
    }
    for _ in 0..BRUTE_LEVELS {
        let h = d / 10.0;
        let center = best.0;
        for a in -10i32..=10 {
            let t = (center + a as f64 * h).clamp(0.0, top);
            let v = f(point(t));
            if v < best.1 {
                best = (t, v);
            }
        }
        d = h;
    }
    (point(best.0), best.1)
}

/// Projection onto `{a + ½|b|² <= 0}` by dense search along the boundary
/// points `(-τ²/2, τ b/|b|)`, followed by a golden-section polish.
pub fn brute_proj_k(a: f64, b: [f64; 2]) -> (f64, [f64; 2]) {
    let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
    if a + 0.5 * nb * nb <= 0.0 {
        return (a, b);
    }
    let dir = if nb > 0.0 { [b[0] / nb, b[1] / nb] } else { [1.0, 0.0] };
    let dist = |t: f64| (a + 0.5 * t * t).powi(2) + (nb - t).powi(2);
    let tmax = 10.0 * (1.0 + a.abs() + nb);
    let samples = 1_000_000;
    let step = tmax / samples as f64;
    let mut best = (0.0, dist(0.0));
    for k in 1..=samples {
        let t = k as f64 * step;
        let v = dist(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - step).max(0.0), best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if dist(x1) <= dist(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let t = 0.5 * (lo + hi);
    (-0.5 * t * t, [t * dir[0], t * dir[1]])
}

/// Discrete measure on at most 25 points.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMeasure {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TinyMeasure {
    pub const MAX_POINTS: usize = 25;

    pub fn new(points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() || points.len() > Self::MAX_POINTS {
            return Err(Error::InvalidArgument(format!(
                "a tiny measure needs 1 to {} points with one weight each",
                Self::MAX_POINTS
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        Ok(TinyMeasure { points, weights })
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Dense two-phase simplex with Bland's rule for `min cᵀx, Ax = b, x >= 0`
/// with `b >= 0`. Returns the optimal value.
fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<f64> {
    const TOL: f64 = 1e-12;
    let (m, n) = (a.len(), c.len());
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&a[i]);
            row[n + i] = 1.0;
            row[width - 1] = b[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut active = vec![true; m];

    fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], r: usize, col: usize) {
        let p = t[r][col];
        t[r].iter_mut().for_each(|v| *v /= p);
        let pr = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[col] != 0.0 {
                let f = row[col];
                row.iter_mut().zip(&pr).for_each(|(v, p)| *v -= f * p);
            }
        }
        let f = obj[col];
        if f != 0.0 {
            obj.iter_mut().zip(&pr).for_each(|(v, p)| *v -= f * p);
        }
    }

    fn run(
        t: &mut [Vec<f64>],
        obj: &mut [f64],
        basis: &mut [usize],
        active: &[bool],
        allowed: usize,
    ) -> Result<()> {
        let width = obj.len();
        for _ in 0..100_000 {
            let Some(col) = (0..allowed).find(|&j| obj[j] < -TOL) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if !active[i] || t[i][col] <= TOL {
                    continue;
                }
                let ratio = t[i][width - 1] / t[i][col];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - TOL || (ratio <= lr + TOL && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Err(Error::Domain("transport LP is unbounded".into()));
            };
            pivot(t, obj, r, col);
            basis[r] = col;
        }
        Err(Error::SolverFailure {
            what: "transport simplex",
            residual: f64::NAN,
        })
    }

    // phase 1: minimize the sum of artificials
    let mut obj = vec![0.0; width];
    for row in &t {
        for j in 0..n {
            obj[j] -= row[j];
        }
        obj[width - 1] -= row[width - 1];
    }
    run(&mut t, &mut obj, &mut basis, &active, n)?;
    if -obj[width - 1] > 1e-9 {
        return Err(Error::Domain("transport LP is infeasible".into()));
    }
    // drive artificials out of the basis; rows where that fails are redundant
    for r in 0..m {
        if basis[r] >= n {
            match (0..n).find(|&j| t[r][j].abs() > 1e-9) {
                Some(col) => {
                    pivot(&mut t, &mut obj, r, col);
                    basis[r] = col;
                }
                None => active[r] = false,
            }
        }
    }
    // phase 2
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(c);
    for r in 0..m {
        if active[r] {
            let f = obj[basis[r]];
            if f != 0.0 {
                let row = t[r].clone();
                obj.iter_mut().zip(&row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    run(&mut t, &mut obj, &mut basis, &active, n)?;
    Ok(-obj[width - 1])
}

/// Exact `W₂²(μ, ν)` by linear programming over transport plans.
pub fn exact_transport_lp(mu: &TinyMeasure, nu: &TinyMeasure) -> Result<f64> {
    let (mm, mn) = (mu.mass(), nu.mass());
    if (mm - mn).abs() > 1e-12 * mm.max(mn).max(1.0) {
        return Err(Error::InvalidArgument(format!("masses differ: {mm} vs {mn}")));
    }
    let (n, m) = (mu.points.len(), nu.points.len());
    let mut a = vec![vec![0.0; n * m]; n + m];
    let mut cost = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let k = i * m + j;
            a[i][k] = 1.0;
            a[n + j][k] = 1.0;
            let (p, q) = (mu.points[i], nu.points[j]);
            cost[k] = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        }
    }
    let b: Vec<f64> = mu.weights.iter().chain(&nu.weights).copied().collect();
    simplex_min(&a, &b, &cost)
}

/// Projection onto `K` by bisection on the scalar root.
fn proj_k_bisect(a: f64, b: [f64; 2]) -> (f64, [f64; 2]) {
    let b2 = b[0] * b[0] + b[1] * b[1];
    if a + 0.5 * b2 <= 0.0 {
        return (a, b);
    }
    let f = |t: f64| a - t + 0.5 * b2 / ((1.0 + t) * (1.0 + t));
    let (mut lo, mut hi) = (0.0, a + 0.5 * b2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = hi;
    (a - t, [b[0] / (1.0 + t), b[1] / (1.0 + t)])
}

/// Pointwise prox of the energy by compass search, warm started.
fn pattern_prox(s: [f64; 2], lambda: f64, pt: &PointEnergy, start: [f64; 2], step: f64) -> [f64; 2] {
    let f = |r: [f64; 2]| prox_value(r, s, lambda, pt);
    let mut x = [start[0].max(0.0), start[1].max(0.0)];
    if pt.congestion.is_hard() {
        let z = pt.alpha[0] * x[0] + pt.alpha[1] * x[1];
        if z > 1.0 {
            x = [x[0] / z, x[1] / z];
        }
    }
    let na = (pt.alpha[0].powi(2) + pt.alpha[1].powi(2)).sqrt();
    let (u, v) = ([pt.alpha[1] / na, -pt.alpha[0] / na], [pt.alpha[0] / na, pt.alpha[1] / na]);
    let dirs = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], u, [-u[0], -u[1]], v, [-v[0], -v[1]]];
    let mut fx = f(x);
    let mut delta = step.max(1e-12);
    let floor = 1e-15 * (1.0 + x[0].abs() + x[1].abs());
    for _ in 0..10_000 {
        if delta < floor {
            break;
        }
        let mut moved = false;
        for d in dirs {
            let cand = [x[0] + delta * d[0], x[1] + delta * d[1]];
            let fc = f(cand);
            if fc < fx {
                x = cand;
                fx = fc;
                moved = true;
                break;
            }
        }
        delta = if moved { 2.0 * delta } else { 0.5 * delta };
    }
    x
}

/// Output of [`primal_dual_reference_step`].
#[derive(Debug, Clone)]
pub struct ReferenceStep {
    pub rho: DensityPair,
    /// `Σᵢ Σ |mᵢ|²/2μᵢ + h E(ρ)`.
    pub objective: f64,
    pub iterations: usize,
    /// Larger of the constraint violation and the scaled primal change,
    /// relative to the total mass.
    pub residual: f64,
    /// The residual reached the requested tolerance.
    pub converged: bool,
    /// The residual stayed above [`REFERENCE_FLAG_RESIDUAL`].
    pub flagged: bool,
}

pub const REFERENCE_FLAG_RESIDUAL: f64 = 1e-5;

pub const REFERENCE_MAX_GRID: usize = 16;
pub const REFERENCE_MAX_NT: usize = 8;

/// One JKO step by the primal-dual hybrid gradient method on the same
/// discrete problem as the main solver: minimize the Benamou–Brenier action
/// of `σᵢ = (μᵢ, mᵢ)` plus `h E(ρ̃)` subject to the discrete continuity
/// equation `D*σᵢ - E₁ρ̃ᵢ + E₀ρᵢᵏ = 0`.
pub fn primal_dual_reference_step(
    rho_prev: &DensityPair,
    h: f64,
    spec: &EnergySpec,
    nt: usize,
    max_iters: usize,
    tol: f64,
) -> Result<ReferenceStep> {
    let g = rho_prev.rho1.grid;
    if g.nx > REFERENCE_MAX_GRID || g.ny > REFERENCE_MAX_GRID || nt > REFERENCE_MAX_NT {
        return Err(Error::InvalidArgument(format!(
            "reference solver is limited to {REFERENCE_MAX_GRID}x{REFERENCE_MAX_GRID} cells and nt <= {REFERENCE_MAX_NT}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("h must be positive".into()));
    }
    let st = SpaceTimeGrid::new(g, nt)?;
    let n = g.n_cells();
    let w = g.cell_area();
    let prev = [&rho_prev.rho1.values, &rho_prev.rho2.values];
    let mass = (rho_prev.mass1 + rho_prev.mass2).max(f64::MIN_POSITIVE);

    // A(σ, ρ̃) = D*σ - E₁ρ̃ maps into node space; A*φ = (Dφ, -φ(1)).
    let apply = |sig: &SpaceTimeVector, rt: &[f64]| -> SpaceTimeScalar {
        let mut out = spacetime_d_adjoint(sig);
        for (o, r) in out.slice_mut(nt).iter_mut().zip(rt) {
            *o -= r;
        }
        out
    };
    let norm_x = |sig: &SpaceTimeVector, rt: &[f64]| sig.norm_sq() + w * rt.iter().map(|v| v * v).sum::<f64>();
    let norm_node = |f: &SpaceTimeScalar| w * f.values.iter().map(|v| v * v).sum::<f64>();

    // ‖A‖ by power iteration on A*A
    let mut sig = SpaceTimeVector::zeros(st);
    let mut rt = vec![0.0; n];
    for k in 0..sig.len() {
        let s = (k as f64 * 0.7548776662).fract() - 0.5;
        sig.t[k] = s;
        sig.x[k] = (k as f64 * 0.5698402910).fract() - 0.5;
        sig.y[k] = (k as f64 * 0.3247179572).fract() - 0.5;
    }
    for (c, r) in rt.iter_mut().enumerate() {
        *r = (c as f64 * 0.4142135623).fract() - 0.5;
    }
    let mut norm_sq = 0.0;
    for _ in 0..300 {
        let scale = norm_x(&sig, &rt).sqrt();
        sig.t.iter_mut().chain(sig.x.iter_mut()).chain(sig.y.iter_mut()).for_each(|v| *v /= scale);
        rt.iter_mut().for_each(|v| *v /= scale);
        let ax = apply(&sig, &rt);
        norm_sq = norm_node(&ax);
        sig = spacetime_d(&ax);
        rt = ax.slice(nt).iter().map(|v| -v).collect();
    }
    let lip = norm_sq.sqrt() * 1.01;
    let theta = 0.2;
    let tau = theta / lip;
    let tau_d = 0.95 / (theta * lip);

    let mut sig: [SpaceTimeVector; 2] = [0, 1].map(|i| {
        let mut s = SpaceTimeVector::zeros(st);
        for k in 0..nt {
            s.t[k * n..(k + 1) * n].copy_from_slice(prev[i]);
        }
        s
    });
    let mut rt: [Vec<f64>; 2] = [prev[0].clone(), prev[1].clone()];
    let mut phi = [SpaceTimeScalar::zeros(st), SpaceTimeScalar::zeros(st)];
    let mut steps = vec![1e-3; n];
    let lambda = tau * h;

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let old_sig = sig.clone();
        let old_rt = rt.clone();
        // primal: σ ← prox of the action, ρ̃ ← prox of h e
        for i in 0..2 {
            let dphi = spacetime_d(&phi[i]);
            let s = &mut sig[i];
            for k in 0..s.len() {
                let y = [s.t[k] - tau * dphi.t[k], s.x[k] - tau * dphi.x[k], s.y[k] - tau * dphi.y[k]];
                let (pa, pb) = proj_k_bisect(y[0] / tau, [y[1] / tau, y[2] / tau]);
                s.t[k] = y[0] - tau * pa;
                s.x[k] = y[1] - tau * pb[0];
                s.y[k] = y[2] - tau * pb[1];
            }
        }
        for c in 0..n {
            let y = [rt[0][c] + tau * phi[0].slice(nt)[c], rt[1][c] + tau * phi[1].slice(nt)[c]];
            let start = [rt[0][c], rt[1][c]];
            let out = pattern_prox(y, lambda, &spec.at(c), start, steps[c]);
            let moved = ((out[0] - start[0]).powi(2) + (out[1] - start[1]).powi(2)).sqrt();
            steps[c] = (4.0 * moved).max(1e-12);
            rt[0][c] = out[0];
            rt[1][c] = out[1];
        }
        // dual ascent on the extrapolated primal point
        let mut viol = 0.0;
        for i in 0..2 {
            let mut bar = sig[i].clone();
            for k in 0..bar.len() {
                bar.t[k] = 2.0 * sig[i].t[k] - old_sig[i].t[k];
                bar.x[k] = 2.0 * sig[i].x[k] - old_sig[i].x[k];
                bar.y[k] = 2.0 * sig[i].y[k] - old_sig[i].y[k];
            }
            let bar_rt: Vec<f64> = rt[i].iter().zip(&old_rt[i]).map(|(a, b)| 2.0 * a - b).collect();
            let mut ax = apply(&bar, &bar_rt);
            for (o, p) in ax.slice_mut(0).iter_mut().zip(prev[i]) {
                *o += p;
            }
            for (f, a) in phi[i].values.iter_mut().zip(&ax.values) {
                *f += tau_d * a;
            }
            if iterations % 50 == 0 {
                let mut cur = apply(&sig[i], &rt[i]);
                for (o, p) in cur.slice_mut(0).iter_mut().zip(prev[i]) {
                    *o += p;
                }
                viol += norm_node(&cur);
            }
        }
        if iterations % 50 == 0 {
            let change: f64 = (0..2)
                .map(|i| {
                    let mut d = sig[i].clone();
                    for k in 0..d.len() {
                        d.t[k] -= old_sig[i].t[k];
                        d.x[k] -= old_sig[i].x[k];
                        d.y[k] -= old_sig[i].y[k];
                    }
                    let dr: Vec<f64> = rt[i].iter().zip(&old_rt[i]).map(|(a, b)| a - b).collect();
                    norm_x(&d, &dr)
                })
                .sum::<f64>()
                .sqrt()
                / tau;
            residual = viol.sqrt().max(change * tau_d.sqrt() * tau.sqrt()) / mass;
            if residual <= tol {
                converged = true;
                break;
            }
        }
    }

    let mut action = 0.0;
    for s in &sig {
        for k in 0..s.len() {
            if s.t[k] > 0.0 {
                action += (s.x[k] * s.x[k] + s.y[k] * s.y[k]) / (2.0 * s.t[k]);
            }
        }
    }
    action *= w * st.dt;
    let energy: f64 = (0..n).map(|c| local_energy([rt[0][c], rt[1][c]], &spec.at(c))).sum::<f64>() * w;
    let [r1, r2] = rt;
    let rho = DensityPair::new(ScalarField::new(g, r1)?, ScalarField::new(g, r2)?)?;
    Ok(ReferenceStep {
        rho,
        objective: action + h * energy,
        iterations,
        residual,
        converged,
        flagged: residual > REFERENCE_FLAG_RESIDUAL,
    })
}

/// Result of [`heat_moment_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatMoment {
    /// Least-squares slope of `∫|x - x̄|² ρ` against time.
    pub rate: f64,
    /// `4 ε mass`.
    pub expected: f64,
    /// Set when the blob puts noticeable mass in the outer cells.
    pub touched_boundary: bool,
}

/// Runs pure diffusion of a small Gaussian blob (no drift, inactive
/// congestion, negligible second species) and fits the growth rate of its
/// second moment, which for the heat equation is exactly `4 ε mass`.
pub fn heat_moment_check(eps: f64, steps: usize, h: f64, n: usize) -> Result<HeatMoment> {
    use crate::alg2::Alg2Config;
    use crate::sim::{InitialField, Potential, SimulationConfig, Simulation};
    let g = crate::grid::Grid2D::centered_square(n)?;
    let (sigma0, blob_mass) = (0.08, 0.01);
    let mut blob = ScalarField::from_fn(g, |x, y| (-(x * x + y * y) / (2.0 * sigma0 * sigma0)).exp());
    let scale = blob_mass / integrate(&blob);
    blob.values.iter_mut().for_each(|v| *v *= scale);
    let cfg = SimulationConfig {
        nx: n,
        ny: n,
        bounds: [g.xmin, g.xmax, g.ymin, g.ymax],
        h,
        steps,
        potentials: [Potential::zero(), Potential::zero()],
        eps,
        congestion: Congestion::PorousMedium { m: 50.0 },
        alpha: [1.0, 1.0],
        alg2: Alg2Config::default(),
        initial: [
            InitialField::Samples {
                nx: n,
                ny: n,
                values: blob.values,
            },
            InitialField::Constant(1e-3),
        ],
        output_dir: None,
        snapshot_stride: 1,
    };
    let mut sim = Simulation::new(&cfg)?;
    let moment = |f: &ScalarField| {
        let m = integrate(f);
        let (mut cx, mut cy) = (0.0, 0.0);
        for ((x, y), v) in g.centers().zip(&f.values) {
            cx += x * v;
            cy += y * v;
        }
        let (cx, cy) = (cx * g.cell_area() / m, cy * g.cell_area() / m);
        g.centers()
            .zip(&f.values)
            .map(|((x, y), v)| ((x - cx).powi(2) + (y - cy).powi(2)) * v)
            .sum::<f64>()
            * g.cell_area()
    };
    let rim = |f: &ScalarField| {
        let mut s = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if i < 2 || j < 2 || i + 2 >= g.nx || j + 2 >= g.ny {
                    s += f.values[g.idx(i, j)];
                }
            }
        }
        s * g.cell_area()
    };
    let mut ts = vec![0.0];
    let mut ms = vec![moment(&sim.rho.rho1)];
    let mut touched = false;
    for _ in 0..steps {
        sim.advance()?;
        ts.push(sim.time());
        ms.push(moment(&sim.rho.rho1));
        touched |= rim(&sim.rho.rho1) > 1e-3 * blob_mass;
    }
    let k = ts.len() as f64;
    let (tm, mm) = (ts.iter().sum::<f64>() / k, ms.iter().sum::<f64>() / k);
    let num: f64 = ts.iter().zip(&ms).map(|(t, m)| (t - tm) * (m - mm)).sum();
    let den: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    Ok(HeatMoment {
        rate: num / den,
        expected: 4.0 * eps * blob_mass,
        touched_boundary: touched,
    })
}
