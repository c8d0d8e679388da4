//! Comparison suites pitting the solvers against the oracles. Shared by the
//! `oracle` subcommand and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alg2::{jko_step, project_k, Alg2Config};
use crate::config::{preset, PresetName};
use crate::energy::{prox_density, prox_objective, Congestion, PointEnergy};
use crate::error::Result;
use crate::oracle::{brute_proj_k, brute_prox, primal_dual_reference_step};
use crate::phi_solver::manufactured_error;

/// Worst-case agreement of `prox_density` with `brute_prox`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxReport {
    pub instances: usize,
    /// Largest componentwise difference.
    pub max_diff: f64,
    /// Largest KKT residual reported by the solver.
    pub max_kkt: f64,
    /// Largest `solver objective - brute objective` (negative is better).
    pub max_objective_gap: f64,
}

fn random_point(rng: &mut ChaCha8Rng, k: usize) -> PointEnergy {
    let congestion = match k % 5 {
        0 => Congestion::Hard,
        1 => Congestion::PorousMedium { m: 1.0 },
        2 => Congestion::PorousMedium { m: 2.0 },
        3 => Congestion::PorousMedium { m: rng.gen_range(1.5..6.0) },
        _ => Congestion::PorousMedium { m: 50.0 },
    };
    PointEnergy {
        v: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
        eps: if k % 2 == 0 { 0.0 } else { rng.gen_range(0.001..0.1) },
        congestion,
        alpha: [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)],
    }
}

/// Random instances cycling through hard, entropic and porous-medium
/// congestion, with and without diffusion.
pub fn prox_suite(instances: usize, seed: u64) -> Result<ProxReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProxReport {
        instances,
        max_diff: 0.0,
        max_kkt: 0.0,
        max_objective_gap: f64::NEG_INFINITY,
    };
    for k in 0..instances {
        let pt = random_point(&mut rng, k);
        let s = [rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5)];
        let lambda = 10f64.powf(rng.gen_range(-2.0..0.0));
        let out = prox_density(s, lambda, &pt)?;
        let brute = brute_prox(s, lambda, &pt);
        report.max_diff = report.max_diff.max((out.rho[0] - brute[0]).abs()).max((out.rho[1] - brute[1]).abs());
        report.max_kkt = report.max_kkt.max(out.residual);
        let gap = prox_objective(out.rho, s, lambda, &pt) - prox_objective(brute, s, lambda, &pt);
        report.max_objective_gap = report.max_objective_gap.max(gap);
    }
    Ok(report)
}

/// Worst-case agreement of `project_k` with `brute_proj_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionReport {
    pub points: usize,
    /// Largest `a + ½|b|²` at the output.
    pub max_violation: f64,
    pub max_diff: f64,
    /// Feasible inputs came back bit-for-bit unchanged.
    pub feasible_unchanged: bool,
}

pub fn projection_suite(points: usize, seed: u64) -> ProjectionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProjectionReport {
        points,
        max_violation: f64::NEG_INFINITY,
        max_diff: 0.0,
        feasible_unchanged: true,
    };
    for _ in 0..points {
        let a = rng.gen_range(-3.0..3.0);
        let b = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let (pa, pb) = project_k(a, b);
        report.max_violation = report.max_violation.max(pa + 0.5 * (pb[0] * pb[0] + pb[1] * pb[1]));
        if a + 0.5 * (b[0] * b[0] + b[1] * b[1]) <= 0.0 {
            report.feasible_unchanged &= (pa, pb) == (a, b);
        }
        let (qa, qb) = brute_proj_k(a, b);
        report.max_diff = report.max_diff.max((pa - qa).abs()).max((pb[0] - qb[0]).abs()).max((pb[1] - qb[1]).abs());
    }
    report
}

/// Manufactured-solution refinement study of the φ-solver.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticReport {
    /// `(n, RMS error)` per level.
    pub errors: Vec<(usize, f64)>,
    /// `log2` error ratios between consecutive levels.
    pub orders: Vec<f64>,
    /// Largest relative CG residual over the study and a few JKO steps.
    pub max_cg_residual: f64,
}

pub fn elliptic_suite() -> Result<EllipticReport> {
    let mut errors = Vec::new();
    let mut max_cg_residual = 0.0_f64;
    for n in [8, 16, 32, 64] {
        let (e, stats) = manufactured_error(n, 4)?;
        errors.push((n, e));
        max_cg_residual = max_cg_residual.max(stats.rel_residual);
    }
    let orders = errors.windows(2).map(|w| (w[0].1 / w[1].1).log2()).collect();
    // the CG contract inside ALG2 iterations
    let mut cfg = preset(PresetName::Fig3Hard);
    cfg.nx = 16;
    cfg.ny = 16;
    let (rho, spec) = (cfg.initial_pair()?, cfg.energy_spec()?);
    let alg2 = Alg2Config {
        max_iters: 200,
        ..Alg2Config::default()
    };
    let step = jko_step(&rho, cfg.h, &spec, &alg2, None)?;
    max_cg_residual = max_cg_residual.max(step.stats.cg_max_residual);
    Ok(EllipticReport {
        errors,
        orders,
        max_cg_residual,
    })
}

/// One JKO step of the main solver against the reference primal-dual solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub alg2_objective: f64,
    pub reference_objective: f64,
    pub relative_gap: f64,
    /// L¹ distance between the two output densities, both species.
    pub density_l1: f64,
    pub reference_flagged: bool,
    pub reference_residual: f64,
}

/// The fig3 setup scaled down to `n×n` cells with `nt` time cells.
pub fn step_suite(n: usize, nt: usize, alg2_iters: usize, reference_iters: usize) -> Result<StepReport> {
    let mut cfg = preset(PresetName::Fig3Hard);
    cfg.nx = n;
    cfg.ny = n;
    let (rho, spec) = (cfg.initial_pair()?, cfg.energy_spec()?);
    let alg2 = Alg2Config {
        nt,
        max_iters: alg2_iters,
        tol_primal: 1e-9,
        tol_dual: 1e-9,
        ..Alg2Config::default()
    };
    let main = jko_step(&rho, cfg.h, &spec, &alg2, None)?;
    let reference = primal_dual_reference_step(&rho, cfg.h, &spec, nt, reference_iters, 1e-8)?;
    let a = main.stats.objective;
    let b = reference.objective;
    Ok(StepReport {
        alg2_objective: a,
        reference_objective: b,
        relative_gap: (a - b).abs() / b.abs(),
        density_l1: main.rho.rho1.l1_distance(&reference.rho.rho1) + main.rho.rho2.l1_distance(&reference.rho.rho2),
        reference_flagged: reference.flagged,
        reference_residual: reference.residual,
    })
}
