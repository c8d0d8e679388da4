//! One JKO step by the augmented-Lagrangian iteration ALG2.
//!
//! The step minimizes, for each species, the Benamou–Brenier action of a
//! path from the previous density `ρᵏ` to a terminal density `μ̃`, plus `h`
//! times the joint energy of the two terminal densities. The dual
//! formulation has a potential `φᵢ(t, x)` per species. Its constraint
//! `∂tφ + ½|∇φ|² <= 0` is split off into the variables `q = (a, b)`. The
//! terminal condition `-φ(1) ∈ ∂(h e)*` is split off into `c`. The
//! multipliers are `σ = (μ, m)`, the density and momentum along the path,
//! and `μ̃`, the new density.
//!
//! Every iteration does four steps:
//!
//! 1. solve the space-time Poisson problem for `φ`;
//! 2. project `Dφ + σ/r` pointwise onto `K = {a + ½|b|² <= 0}`;
//! 3. update `c` through the joint prox of the energy;
//! 4. update the multipliers by `r` times the constraint violation.
//!
//! After step 4, `μ̃` equals the prox output of step 3, so the iterate is
//! nonnegative and, under hard congestion, feasible at every iteration.
//! The density returned by [`jko_step`] is instead the endpoint of the path
//! implied by the φ-step, which conserves mass exactly; the two agree at
//! convergence.

use crate::energy::{eval_energy, pressure_field, prox_density_hinted, DensityPair, EnergySpec};
use crate::error::{Error, Result};
use crate::grid::{
    integrate, spacetime_d_adjoint_add, spacetime_d_into, ScalarField, SpaceTimeGrid,
    SpaceTimeScalar, SpaceTimeVector,
};
use crate::phi_solver::{CgStats, PhiSolver};

/// Tuning of the saddle-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg2Config {
    /// Augmentation parameter.
    pub r: f64,
    pub max_iters: usize,
    /// Stopping tolerance on the normalized primal residual.
    pub tol_primal: f64,
    /// Stopping tolerance on the normalized dual residual.
    pub tol_dual: f64,
    /// Number of time intervals of the inner path.
    pub nt: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for Alg2Config {
    fn default() -> Self {
        Alg2Config {
            r: 1.0,
            max_iters: 2000,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            nt: 10,
            cg_tol: 1e-8,
            cg_max_iters: 500,
        }
    }
}

impl Alg2Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad("augmentation parameter r must be positive");
        }
        if self.nt == 0 {
            return bad("nt must be at least 1");
        }
        if self.max_iters == 0 || self.cg_max_iters == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0 && self.cg_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

/// Primal, split and dual variables of the iteration, per species.
#[derive(Debug, Clone)]
pub struct Alg2State {
    pub grid: SpaceTimeGrid,
    pub phi: [SpaceTimeScalar; 2],
    /// `(a, b)`, stored as the time and space components.
    pub q: [SpaceTimeVector; 2],
    /// `(μ, m)`, density and momentum along the path.
    pub sigma: [SpaceTimeVector; 2],
    pub c: [Vec<f64>; 2],
    /// Terminal density.
    pub mu_tilde: [Vec<f64>; 2],
    pub r: f64,
    dphi: [SpaceTimeVector; 2],
    pressure: Vec<f64>,
    roots: Vec<Option<f64>>,
    prox_max_residual: f64,
}

impl Alg2State {
    /// Cold start: `φ = 0`, `q = 0`, `c = 0`, the path frozen at `ρᵏ`.
    pub fn initial(rho_prev: &DensityPair, nt: usize, r: f64) -> Result<Self> {
        let st = SpaceTimeGrid::new(rho_prev.rho1.grid, nt)?;
        let n = st.n_cells();
        let sigma = [0, 1].map(|i| {
            let mut s = SpaceTimeVector::zeros(st);
            let rho = &rho_prev.species(i).values;
            for k in 0..nt {
                s.t[k * n..(k + 1) * n].copy_from_slice(rho);
            }
            s
        });
        Ok(Alg2State {
            grid: st,
            phi: [SpaceTimeScalar::zeros(st), SpaceTimeScalar::zeros(st)],
            q: [SpaceTimeVector::zeros(st), SpaceTimeVector::zeros(st)],
            sigma,
            c: [vec![0.0; n], vec![0.0; n]],
            mu_tilde: [rho_prev.rho1.values.clone(), rho_prev.rho2.values.clone()],
            r,
            dphi: [SpaceTimeVector::zeros(st), SpaceTimeVector::zeros(st)],
            pressure: vec![0.0; n],
            roots: vec![None; n],
            prox_max_residual: 0.0,
        })
    }

    /// Pressure multipliers of the last terminal update.
    pub fn multipliers(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.base,
            values: self.pressure.clone(),
        }
    }

    fn compatible(&self, rho_prev: &DensityPair, nt: usize) -> bool {
        self.grid.nt == nt && self.grid.base == rho_prev.rho1.grid
    }
}

/// Euclidean projection of `(a, b)` onto `K = {a + ½|b|² <= 0}`.
pub fn project_k(a: f64, b: [f64; 2]) -> (f64, [f64; 2]) {
    let b2 = b[0] * b[0] + b[1] * b[1];
    if a + 0.5 * b2 <= 0.0 {
        return (a, b);
    }
    // The projection is (a - t, b / (1 + t)) with t > 0 the root of
    // f(t) = a - t + |b|² / 2(1 + t)², convex and decreasing. Newton from
    // t = 0 increases monotonically to the root.
    let mut t = 0.0_f64;
    for _ in 0..100 {
        let s = 1.0 + t;
        let f = a - t + 0.5 * b2 / (s * s);
        let df = -1.0 - b2 / (s * s * s);
        let next = t - f / df;
        if next <= t || f <= 0.0 {
            break;
        }
        t = next;
    }
    let s = 1.0 + t;
    let bp = [b[0] / s, b[1] / s];
    let ap = (a - t).min(-0.5 * (bp[0] * bp[0] + bp[1] * bp[1]));
    (ap, bp)
}

/// φ-step for both species.
pub fn step_phi(
    state: &mut Alg2State,
    rho_prev: &DensityPair,
    solver: &mut PhiSolver,
    cfg: &Alg2Config,
) -> Result<[CgStats; 2]> {
    let st = state.grid;
    let nt = st.nt;
    let r = state.r;
    let mut stats = [CgStats {
        iterations: 0,
        rel_residual: 0.0,
    }; 2];
    let mut rhs = SpaceTimeScalar::zeros(st);
    let mut tmp = SpaceTimeVector::zeros(st);
    for i in 0..2 {
        // rhs = (-E₀ρᵏ - D*(σ - r q) - E₁(r c - μ̃)) / r
        let (sig, q) = (&state.sigma[i], &state.q[i]);
        for k in 0..tmp.len() {
            tmp.t[k] = sig.t[k] - r * q.t[k];
            tmp.x[k] = sig.x[k] - r * q.x[k];
            tmp.y[k] = sig.y[k] - r * q.y[k];
        }
        rhs.values.iter_mut().for_each(|v| *v = 0.0);
        spacetime_d_adjoint_add(&tmp, -1.0 / r, &mut rhs);
        for (v, p) in rhs.slice_mut(0).iter_mut().zip(&rho_prev.species(i).values) {
            *v -= p / r;
        }
        let (c, mt) = (&state.c[i], &state.mu_tilde[i]);
        for (cell, v) in rhs.slice_mut(nt).iter_mut().enumerate() {
            *v -= c[cell] - mt[cell] / r;
        }
        stats[i] = solver.solve(&rhs, &mut state.phi[i], cfg.cg_tol, cfg.cg_max_iters)?;
        spacetime_d_into(&state.phi[i], &mut state.dphi[i]);
    }
    Ok(stats)
}

/// q-step: `q = proj_K(Dφ + σ / r)`. Returns `‖Δq‖²` in the space-time product.
pub fn step_q(state: &mut Alg2State) -> f64 {
    let r = state.r;
    let mut change = 0.0;
    for i in 0..2 {
        let (d, s, q) = (&state.dphi[i], &state.sigma[i], &mut state.q[i]);
        let mut acc = 0.0;
        for k in 0..d.len() {
            let a = d.t[k] + s.t[k] / r;
            let b = [d.x[k] + s.x[k] / r, d.y[k] + s.y[k] / r];
            let (pa, pb) = project_k(a, b);
            acc += (pa - q.t[k]).powi(2) + (pb[0] - q.x[k]).powi(2) + (pb[1] - q.y[k]).powi(2);
            q.t[k] = pa;
            q.x[k] = pb[0];
            q.y[k] = pb[1];
        }
        change += acc;
    }
    let st = state.grid;
    change * st.base.cell_area() * st.dt
}

/// Terminal step: `c` from the joint prox of `h e` at every cell. Returns
/// `‖Δc‖²` in the spatial product.
pub fn update_terminal(state: &mut Alg2State, h: f64, spec: &EnergySpec) -> Result<f64> {
    let nt = state.grid.nt;
    let r = state.r;
    let lambda = r * h;
    let n = state.grid.n_cells();
    let mut change = 0.0;
    let mut worst = 0.0_f64;
    for cell in 0..n {
        let phi1 = [state.phi[0].slice(nt)[cell], state.phi[1].slice(nt)[cell]];
        let mt = [state.mu_tilde[0][cell], state.mu_tilde[1][cell]];
        let s = [mt[0] - r * phi1[0], mt[1] - r * phi1[1]];
        let pt = spec.at(cell);
        let (res, root) = prox_density_hinted(s, lambda, &pt, state.roots[cell])?;
        state.roots[cell] = Some(root);
        state.pressure[cell] = res.pressure;
        worst = worst.max(res.residual);
        for i in 0..2 {
            let c = (mt[i] - res.rho[i]) / r - phi1[i];
            change += (c - state.c[i][cell]).powi(2);
            state.c[i][cell] = c;
        }
    }
    state.prox_max_residual = worst;
    Ok(change * state.grid.base.cell_area())
}

/// Multiplier update: `σ += r(Dφ - q)`, `μ̃ -= r(φ(1) + c)`.
pub fn update_duals(state: &mut Alg2State) {
    let r = state.r;
    let nt = state.grid.nt;
    for i in 0..2 {
        let (d, q, s) = (&state.dphi[i], &state.q[i], &mut state.sigma[i]);
        for k in 0..d.len() {
            s.t[k] += r * (d.t[k] - q.t[k]);
            s.x[k] += r * (d.x[k] - q.x[k]);
            s.y[k] += r * (d.y[k] - q.y[k]);
        }
        let phi1 = state.phi[i].slice(nt);
        for (cell, m) in state.mu_tilde[i].iter_mut().enumerate() {
            *m -= r * (phi1[cell] + state.c[i][cell]);
        }
    }
}

/// `μ̃ - r(φ(1) + c)` taken right after the φ-step. Together with
/// `σ + r(Dφ - q)` it solves the discrete continuity equation from `ρᵏ`
/// exactly, so its mass is conserved to rounding. It tends to `μ̃` at
/// convergence.
fn path_endpoint(state: &Alg2State, out: &mut [Vec<f64>; 2]) {
    let nt = state.grid.nt;
    for i in 0..2 {
        let phi1 = state.phi[i].slice(nt);
        for (cell, o) in out[i].iter_mut().enumerate() {
            *o = state.mu_tilde[i][cell] - state.r * (phi1[cell] + state.c[i][cell]);
        }
    }
}

/// Unnormalized primal residual `‖Dφ - q‖ + ‖φ(1) + c‖` over both species.
pub fn primal_residual(state: &Alg2State) -> f64 {
    let st = state.grid;
    let nt = st.nt;
    let w = st.base.cell_area();
    let mut path = 0.0;
    let mut term = 0.0;
    for i in 0..2 {
        let (d, q) = (&state.dphi[i], &state.q[i]);
        for k in 0..d.len() {
            path += (d.t[k] - q.t[k]).powi(2) + (d.x[k] - q.x[k]).powi(2) + (d.y[k] - q.y[k]).powi(2);
        }
        let phi1 = state.phi[i].slice(nt);
        for (cell, c) in state.c[i].iter().enumerate() {
            term += (phi1[cell] + c).powi(2);
        }
    }
    (path * w * st.dt).sqrt() + (term * w).sqrt()
}

/// Benamou–Brenier action `Σ |m|² / μ` of the path held in `σ`, summed over
/// species. This is the transport cost estimate of `W₂²(ρᵏ, μ̃)`.
pub fn dynamic_cost(state: &Alg2State) -> f64 {
    let st = state.grid;
    let w = st.base.cell_area() * st.dt;
    let mut total = 0.0;
    for s in &state.sigma {
        for k in 0..s.len() {
            if s.t[k] > 0.0 {
                total += (s.x[k] * s.x[k] + s.y[k] * s.y[k]) / s.t[k];
            }
        }
    }
    total * w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JkoStepStats {
    pub iterations: usize,
    pub converged: bool,
    /// Normalized primal residual at exit.
    pub primal: f64,
    /// Normalized dual residual at exit.
    pub dual: f64,
    pub dynamic_cost: f64,
    /// `dynamic_cost / 2 + h E(ρ)`.
    pub objective: f64,
    pub energy_prev: f64,
    pub energy: f64,
    /// Largest relative mass deviation before the final rescaling.
    pub mass_error: f64,
    /// Most negative density value zeroed in the output.
    pub min_density: f64,
    pub cg_iterations: usize,
    pub cg_max_residual: f64,
    pub prox_max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct JkoStep {
    pub rho: DensityPair,
    pub pressure: ScalarField,
    pub stats: JkoStepStats,
    /// Final iterate, for warm starting the next step.
    pub state: Alg2State,
}

/// Largest relative mass correction applied to the output.
const MASS_RESCALE_LIMIT: f64 = 1e-6;

/// Advance `rho_prev` by one JKO step of size `h`.
///
/// The previous densities must carry admissible masses; under hard
/// congestion that means `α₁m₁ + α₂m₂ <= |Ω|`. Warm starts from `warm` when
/// its grid matches.
pub fn jko_step(
    rho_prev: &DensityPair,
    h: f64,
    spec: &EnergySpec,
    cfg: &Alg2Config,
    warm: Option<Alg2State>,
) -> Result<JkoStep> {
    cfg.validate()?;
    spec.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step {h} must be positive")));
    }
    let g = rho_prev.rho1.grid;
    if spec.v1.grid != g || rho_prev.rho2.grid != g {
        return Err(Error::InvalidArgument("densities and potentials must share a grid".into()));
    }
    if spec.congestion.is_hard() {
        let load = spec.alpha[0] * rho_prev.mass1 + spec.alpha[1] * rho_prev.mass2;
        if load > g.area() * (1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "congested mass {load} exceeds the domain area {}",
                g.area()
            )));
        }
    }
    let mut state = match warm {
        Some(s) if s.compatible(rho_prev, cfg.nt) => Alg2State { r: cfg.r, ..s },
        _ => Alg2State::initial(rho_prev, cfg.nt, cfg.r)?,
    };
    let mut solver = PhiSolver::new(state.grid);
    let total_mass = (rho_prev.mass1 + rho_prev.mass2).max(f64::MIN_POSITIVE);
    let r = cfg.r;

    let mut cg_iterations = 0;
    let mut cg_max_residual = 0.0_f64;
    let mut best: Option<(f64, [Vec<f64>; 2], Vec<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut prox_worst = 0.0_f64;
    let mut endpoint = state.mu_tilde.clone();
    while iterations < cfg.max_iters {
        iterations += 1;
        let cg = step_phi(&mut state, rho_prev, &mut solver, cfg)?;
        for s in cg {
            cg_iterations += s.iterations;
            cg_max_residual = cg_max_residual.max(s.rel_residual);
        }
        path_endpoint(&state, &mut endpoint);
        let dq = step_q(&mut state);
        let dc = update_terminal(&mut state, h, spec)?;
        prox_worst = prox_worst.max(state.prox_max_residual);
        primal = r * primal_residual(&state) / total_mass;
        dual = r * (dq.sqrt() + dc.sqrt()) / total_mass;
        update_duals(&mut state);
        if primal <= cfg.tol_primal && dual <= cfg.tol_dual {
            converged = true;
            break;
        }
        let score = primal + dual;
        if best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((score, endpoint.clone(), state.pressure.clone()));
        }
    }
    if prox_worst > 1e-6 {
        return Err(Error::SolverFailure {
            what: "terminal prox",
            residual: prox_worst,
        });
    }
    let (mut rho, pressure) = match (converged, best) {
        (false, Some((score, mu, p))) if score < primal + dual => (mu, p),
        _ => (endpoint, state.pressure.clone()),
    };

    let mut mass_error = 0.0_f64;
    let mut min_density = 0.0_f64;
    let masses = [rho_prev.mass1, rho_prev.mass2];
    for i in 0..2 {
        for v in rho[i].iter_mut() {
            min_density = min_density.min(*v);
            *v = v.max(0.0);
        }
        let field = ScalarField {
            grid: g,
            values: rho[i].clone(),
        };
        let m = integrate(&field);
        if masses[i] > 0.0 && m > 0.0 {
            let rel = (m - masses[i]) / masses[i];
            mass_error = mass_error.max(rel.abs());
            let scale = (masses[i] / m).clamp(1.0 - MASS_RESCALE_LIMIT, 1.0 + MASS_RESCALE_LIMIT);
            rho[i].iter_mut().for_each(|v| *v *= scale);
        }
    }
    let [r1, r2] = rho;
    let rho = DensityPair::new(
        ScalarField { grid: g, values: r1 },
        ScalarField { grid: g, values: r2 },
    )?;
    let energy_prev = eval_energy(rho_prev, spec).value;
    let energy = eval_energy(&rho, spec).value;
    let dyn_cost = dynamic_cost(&state);
    let multipliers = ScalarField {
        grid: g,
        values: pressure,
    };
    let pressure = pressure_field(&rho, spec, Some(&multipliers))?;
    let stats = JkoStepStats {
        iterations,
        converged,
        primal,
        dual,
        dynamic_cost: dyn_cost,
        objective: 0.5 * dyn_cost + h * energy,
        energy_prev,
        energy,
        mass_error,
        min_density,
        cg_iterations,
        cg_max_residual,
        prox_max_residual: prox_worst,
    };
    Ok(JkoStep {
        rho,
        pressure,
        stats,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Congestion;
    use crate::grid::Grid2D;
    use proptest::prelude::*;

    fn spec(g: Grid2D, eps: f64, congestion: Congestion, v1: impl Fn(f64, f64) -> f64) -> EnergySpec {
        EnergySpec {
            v1: ScalarField::from_fn(g, v1),
            v2: ScalarField::zeros(g),
            eps,
            congestion,
            alpha: [1.0, 1.0],
        }
    }

    #[test]
    fn project_k_examples() {
        assert_eq!(project_k(-1.0, [0.0, 0.0]), (-1.0, [0.0, 0.0]));
        let (a, b) = project_k(1.0, [0.0, 0.0]);
        assert!(a.abs() < 1e-15 && b == [0.0, 0.0]);
        let (a, b) = project_k(0.0, [1.0, 0.0]);
        let t = -a;
        assert!((2.0 * t * (1.0 + t).powi(2) - 1.0).abs() < 1e-12);
        assert!((t - 0.297).abs() < 1e-3);
        assert!((b[0] - 1.0 / (1.0 + t)).abs() < 1e-14 && b[1] == 0.0);
        assert!((a + 0.5 * b[0] * b[0]).abs() <= 1e-12);
    }

    proptest! {
        #[test]
        fn project_k_feasible_and_optimal(a in -50.0..50.0f64, b0 in -20.0..20.0f64, b1 in -20.0..20.0f64) {
            let (pa, pb) = project_k(a, [b0, b1]);
            prop_assert!(pa + 0.5 * (pb[0] * pb[0] + pb[1] * pb[1]) <= 1e-12);
            // variational inequality against boundary points of K
            let d = [a - pa, b0 - pb[0], b1 - pb[1]];
            for k in 0..16 {
                let th = k as f64 * 0.4;
                let qb = [3.0 * th.cos(), 3.0 * th.sin()];
                let qa = -0.5 * 9.0 - k as f64;
                let w = [qa - pa, qb[0] - pb[0], qb[1] - pb[1]];
                let ip = d[0] * w[0] + d[1] * w[1] + d[2] * w[2];
                prop_assert!(ip <= 1e-9 * (1.0 + a.abs() + b0.abs() + b1.abs()).powi(2));
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_phi_and_residuals() {
        let g = Grid2D::centered_square(6).unwrap();
        let zero = DensityPair::new(ScalarField::zeros(g), ScalarField::zeros(g)).unwrap();
        let mut state = Alg2State::initial(&zero, 3, 1.0).unwrap();
        let mut solver = PhiSolver::new(state.grid);
        let cfg = Alg2Config::default();
        step_phi(&mut state, &zero, &mut solver, &cfg).unwrap();
        assert!(state.phi.iter().all(|p| p.values.iter().all(|&v| v == 0.0)));
        assert_eq!(primal_residual(&state), 0.0);
        assert_eq!(step_q(&mut state), 0.0);
    }

    #[test]
    fn terminal_step_without_energy_is_clipping() {
        let g = Grid2D::centered_square(5).unwrap();
        let sp = spec(g, 0.0, Congestion::Hard, |_, _| 0.0);
        let rho = DensityPair::new(ScalarField::constant(g, 0.1), ScalarField::constant(g, 0.1)).unwrap();
        let mut state = Alg2State::initial(&rho, 2, 2.0).unwrap();
        let (r, h) = (2.0, 0.05);
        let nt = state.grid.nt;
        for (cell, v) in state.phi[0].slice_mut(nt).iter_mut().enumerate() {
            *v = 0.3 * (cell as f64 - 12.0) / 12.0;
        }
        update_terminal(&mut state, h, &sp).unwrap();
        for cell in 0..g.n_cells() {
            for i in 0..2 {
                let y = (state.mu_tilde[i][cell] / r - state.phi[i].slice(nt)[cell]) / h;
                let want = h * y.min(0.0);
                assert!((state.c[i][cell] - want).abs() < 1e-14, "{} vs {want}", state.c[i][cell]);
            }
        }
    }

    #[test]
    fn dual_update_identity() {
        let g = Grid2D::centered_square(6).unwrap();
        let sp = spec(g, 0.01, Congestion::PorousMedium { m: 3.0 }, |x, y| x * x + y);
        let rho = DensityPair::new(
            ScalarField::from_fn(g, |x, _| 0.5 + x),
            ScalarField::from_fn(g, |_, y| 0.4 - y * 0.5),
        )
        .unwrap();
        let cfg = Alg2Config {
            nt: 3,
            ..Default::default()
        };
        let mut state = Alg2State::initial(&rho, cfg.nt, cfg.r).unwrap();
        let mut solver = PhiSolver::new(state.grid);
        step_phi(&mut state, &rho, &mut solver, &cfg).unwrap();
        step_q(&mut state);
        update_terminal(&mut state, 0.1, &sp).unwrap();
        let before = state.clone();
        update_duals(&mut state);
        // μ̃ after the update is the cached prox output
        for cell in 0..g.n_cells() {
            let pt = sp.at(cell);
            let nt = state.grid.nt;
            let s = [0, 1].map(|i| before.mu_tilde[i][cell] - state.r * before.phi[i].slice(nt)[cell]);
            let p = crate::energy::prox_density(s, state.r * 0.1, &pt).unwrap();
            for i in 0..2 {
                assert!((state.mu_tilde[i][cell] - p.rho[i]).abs() < 1e-12);
            }
        }
        // increment / r equals the primal violation
        let mut sq = 0.0;
        for i in 0..2 {
            for k in 0..state.sigma[i].len() {
                let inc = (state.sigma[i].x[k] - before.sigma[i].x[k]) / state.r;
                sq += (inc - (before.dphi[i].x[k] - before.q[i].x[k])).powi(2);
            }
        }
        assert!(sq < 1e-24);
        // zero violation leaves the duals alone
        let mut fixed = before.clone();
        for i in 0..2 {
            fixed.q[i] = fixed.dphi[i].clone();
            let nt = fixed.grid.nt;
            fixed.c[i] = fixed.phi[i].slice(nt).iter().map(|v| -v).collect();
        }
        let snapshot = fixed.clone();
        update_duals(&mut fixed);
        assert_eq!(fixed.sigma[0].t, snapshot.sigma[0].t);
        assert_eq!(fixed.mu_tilde[1], snapshot.mu_tilde[1]);
    }

    #[test]
    fn uniform_state_is_stationary() {
        let g = Grid2D::centered_square(8).unwrap();
        for congestion in [Congestion::PorousMedium { m: 2.0 }, Congestion::PorousMedium { m: 1.0 }, Congestion::Hard] {
            let sp = spec(g, 0.05, congestion, |_, _| 0.0);
            let rho = DensityPair::new(ScalarField::constant(g, 0.3), ScalarField::constant(g, 0.5)).unwrap();
            let cfg = Alg2Config {
                nt: 4,
                ..Default::default()
            };
            let out = jko_step(&rho, 0.01, &sp, &cfg, None).unwrap();
            assert!(out.stats.converged);
            assert!(out.rho.rho1.l1_distance(&rho.rho1) / g.area() < 1e-6);
            assert!(out.rho.rho2.l1_distance(&rho.rho2) / g.area() < 1e-6);
        }
    }

    fn mean(f: &ScalarField) -> [f64; 2] {
        let m: f64 = f.values.iter().sum();
        let mut c = [0.0, 0.0];
        for ((x, y), v) in f.grid.centers().zip(&f.values) {
            c[0] += x * v / m;
            c[1] += y * v / m;
        }
        c
    }

    #[test]
    fn blob_follows_the_drift() {
        let g = Grid2D::centered_square(24).unwrap();
        let target = [0.3, 0.3];
        let sp = spec(g, 0.0, Congestion::PorousMedium { m: 50.0 }, |x, y| {
            4.0 * ((x - target[0]).powi(2) + (y - target[1]).powi(2))
        });
        let blob = ScalarField::rectangle_indicator(g, [-0.3, -0.05, -0.3, -0.05], 0.5);
        let rho = DensityPair::new(blob, ScalarField::constant(g, 1e-6)).unwrap();
        let m0 = mean(&rho.rho1);
        let cfg = Alg2Config {
            nt: 6,
            max_iters: 3000,
            ..Default::default()
        };
        let h = 0.01;
        let out = jko_step(&rho, h, &sp, &cfg, None).unwrap();
        let m1 = mean(&out.rho.rho1);
        for d in 0..2 {
            let want = -h * 8.0 * (m0[d] - target[d]);
            let got = m1[d] - m0[d];
            assert!((got - want).abs() <= 0.2 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn rejects_overfull_hard_data_and_bad_step() {
        let g = Grid2D::centered_square(4).unwrap();
        let sp = spec(g, 0.0, Congestion::Hard, |_, _| 0.0);
        let rho = DensityPair::new(ScalarField::constant(g, 0.6), ScalarField::constant(g, 0.6)).unwrap();
        let cfg = Alg2Config::default();
        assert!(matches!(jko_step(&rho, 0.01, &sp, &cfg, None), Err(Error::InvalidArgument(_))));
        let ok = DensityPair::new(ScalarField::constant(g, 0.2), ScalarField::constant(g, 0.2)).unwrap();
        assert!(matches!(jko_step(&ok, 0.0, &sp, &cfg, None), Err(Error::InvalidArgument(_))));
        let bad = Alg2Config { r: -1.0, ..cfg };
        assert!(matches!(jko_step(&ok, 0.01, &sp, &bad, None), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn deterministic() {
        let g = Grid2D::centered_square(8).unwrap();
        let sp = spec(g, 0.01, Congestion::Hard, |x, y| x + 2.0 * y);
        let rho = DensityPair::new(
            ScalarField::rectangle_indicator(g, [-0.4, 0.0, -0.4, 0.0], 0.9),
            ScalarField::rectangle_indicator(g, [0.0, 0.4, 0.0, 0.4], 0.9),
        )
        .unwrap();
        let cfg = Alg2Config {
            nt: 4,
            max_iters: 200,
            ..Default::default()
        };
        let a = jko_step(&rho, 0.01, &sp, &cfg, None).unwrap();
        let b = jko_step(&rho, 0.01, &sp, &cfg, None).unwrap();
        assert_eq!(a.rho.rho1.values, b.rho.rho1.values);
        assert_eq!(a.pressure.values, b.pressure.values);
        assert_eq!(a.stats, b.stats);
    }
}
