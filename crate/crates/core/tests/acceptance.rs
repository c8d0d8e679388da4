//! Acceptance criteria 1-12. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails. `ACCEPTANCE_ONLY=5,6,7` restricts the run.

use std::io::Write;
use std::time::Instant;

use jkoflow::config::{l1_setup, mlimit_setup, preset, PresetName};
use jkoflow::grid::ScalarField;
use jkoflow::oracle::heat_moment_check;
use jkoflow::sim::{l1_contraction_experiment, m_limit_experiment, run_simulation_with, Potential, Snapshot};
use jkoflow::validate::{elliptic_suite, projection_suite, prox_suite, step_suite};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, budget_s: Option<f64>, run: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = run();
    let secs = t.elapsed().as_secs_f64();
    let in_budget = budget_s.map_or(true, |b| secs < b);
    let pass = out.pass && in_budget;
    let budget = budget_s.map_or(String::new(), |b| format!(" (budget {b:.0} s)"));
    let line = format!(
        "criterion {id:2} {} {name}: {}; {secs:.1} s{budget}",
        if pass { "PASS" } else { "FAIL" },
        out.detail
    );
    // bypass the test harness capture so the lines always show
    let _ = writeln!(std::io::stderr(), "{line}");
    pass
}

fn center_of_mass(f: &ScalarField) -> [f64; 2] {
    let m: f64 = f.values.iter().sum();
    let mut c = [0.0; 2];
    for ((x, y), v) in f.grid.centers().zip(&f.values) {
        c[0] += x * v / m;
        c[1] += y * v / m;
    }
    c
}

/// Cells where both species are present, the crossing region.
fn mixing_cells(s: &Snapshot, threshold: f64) -> Vec<usize> {
    (0..s.rho.rho1.values.len())
        .filter(|&c| s.rho.rho1.values[c] > threshold && s.rho.rho2.values[c] > threshold)
        .collect()
}

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let want = |id: usize| only.as_ref().map_or(true, |o| o.contains(&id));
    let mut failed = Vec::new();
    let mut check = |id: usize, pass: bool| {
        if !pass {
            failed.push(id);
        }
    };

    if want(1) {
        check(
            1,
            report(1, "prox vs brute force", Some(120.0), || {
                let r = prox_suite(1000, 2024).unwrap();
                Outcome {
                    pass: r.max_diff <= 1e-4 && r.max_kkt <= 1e-11,
                    detail: format!(
                        "{} instances, max diff {:.2e} (<= 1e-4), max KKT residual {:.2e} (<= 1e-11)",
                        r.instances, r.max_diff, r.max_kkt
                    ),
                }
            }),
        );
    }
    if want(2) {
        check(
            2,
            report(2, "K-projection vs brute force", Some(30.0), || {
                let r = projection_suite(1000, 2025);
                Outcome {
                    pass: r.max_violation <= 1e-12 && r.max_diff <= 1e-5 && r.feasible_unchanged,
                    detail: format!(
                        "{} points, max a+|b|^2/2 {:.2e}, max diff {:.2e}, feasible unchanged {}",
                        r.points, r.max_violation, r.max_diff, r.feasible_unchanged
                    ),
                }
            }),
        );
    }
    if want(3) {
        check(
            3,
            report(3, "elliptic solver", Some(120.0), || {
                let r = elliptic_suite().unwrap();
                let orders: Vec<String> = r.orders.iter().map(|o| format!("{o:.3}")).collect();
                Outcome {
                    pass: r.orders.iter().all(|o| *o >= 1.9) && r.max_cg_residual <= 1e-8,
                    detail: format!(
                        "observed orders [{}] (>= 1.9), max CG relative residual {:.2e} (<= 1e-8)",
                        orders.join(", "),
                        r.max_cg_residual
                    ),
                }
            }),
        );
    }
    if want(4) {
        check(
            4,
            report(4, "JKO step vs primal-dual reference", Some(300.0), || {
                let r = step_suite(8, 4, 20_000, 30_000).unwrap();
                Outcome {
                    pass: r.relative_gap <= 1e-3,
                    detail: format!(
                        "objective {:.10} vs {:.10}, relative gap {:.2e} (<= 1e-3), reference residual {:.1e}",
                        r.alg2_objective, r.reference_objective, r.relative_gap, r.reference_residual
                    ),
                }
            }),
        );
    }

    // criteria 5-7 share one fig3 run at 32x32
    if want(5) || want(6) || want(7) {
        let mut cfg = preset(PresetName::Fig3Hard);
        cfg.nx = 32;
        cfg.ny = 32;
        cfg.steps = 30;
        let t = Instant::now();
        let mut records = Vec::new();
        run_simulation_with(&cfg, |_| Ok(()), |r| {
            records.push(*r);
            Ok(())
        })
        .unwrap();
        let secs = t.elapsed().as_secs_f64();
        if want(5) {
            check(
                5,
                report(5, "mass conservation, fig3 32x32, 30 steps", None, || {
                    let worst = records
                        .iter()
                        .map(|r| ((r.mass1 - 0.09).abs() / 0.09).max((r.mass2 - 0.09).abs() / 0.09))
                        .fold(0.0, f64::max);
                    Outcome {
                        pass: worst <= 1e-6 && secs < 600.0,
                        detail: format!("max relative mass error {worst:.2e} (<= 1e-6); run took {secs:.1} s (budget 600 s)"),
                    }
                }),
            );
        }
        if want(6) {
            check(
                6,
                report(6, "hard-constraint feasibility and complementarity", None, || {
                    let viol = records.iter().map(|r| r.max_violation).fold(0.0, f64::max);
                    let comp = records
                        .iter()
                        .map(|r| r.complementarity.abs() / (1.0 + r.pressure_l1))
                        .fold(0.0, f64::max);
                    Outcome {
                        pass: viol <= 5e-3 && comp <= 5e-3,
                        detail: format!(
                            "max (rho1+rho2-1)+ {viol:.2e} (<= 5e-3), max |int p(1-rho1-rho2)|/(1+|p|_1) {comp:.2e} (<= 5e-3)"
                        ),
                    }
                }),
            );
        }
        if want(7) {
            check(
                7,
                report(7, "energy dissipation", None, || {
                    let h = cfg.h;
                    let mut worst = f64::NEG_INFINITY;
                    for w in records.windows(2) {
                        let (old, new) = (&w[0], &w[1]);
                        let slack = new.dynamic_cost / (2.0 * h) + new.energy - old.energy - 1e-6 * (1.0 + old.energy.abs());
                        worst = worst.max(slack);
                    }
                    let converged = records.iter().skip(1).filter(|r| r.converged).count();
                    Outcome {
                        pass: worst <= 0.0,
                        detail: format!(
                            "checked on all {} steps ({converged} reached the ALG2 tolerance); max of W/(2h) + E_new - E_old - tol = {worst:.3e} (<= 0)",
                            records.len() - 1
                        ),
                    }
                }),
            );
        }
    }

    if want(8) {
        check(
            8,
            report(8, "L1 contraction, common drift, 32x32, 20 steps", Some(900.0), || {
                let (cfg, second) = l1_setup(32, 20);
                let d = l1_contraction_experiment(&cfg, &second).unwrap();
                let worst = d
                    .windows(2)
                    .map(|w| (w[1][0] - w[0][0]).max(w[1][1] - w[0][1]))
                    .fold(f64::NEG_INFINITY, f64::max);
                Outcome {
                    pass: worst <= 1e-3,
                    detail: format!(
                        "L1 distances {:.4}/{:.4} -> {:.4}/{:.4}, largest per-step increase {worst:.2e} (<= 1e-3)",
                        d[0][0],
                        d[0][1],
                        d[d.len() - 1][0],
                        d[d.len() - 1][1]
                    ),
                }
            }),
        );
    }
    if want(9) {
        check(
            9,
            report(9, "m -> infinity against hard congestion, 32x32, 20 steps", Some(1800.0), || {
                let rows = m_limit_experiment(&mlimit_setup(32, 20), &[10.0, 50.0, 200.0]).unwrap();
                let dist_dec = rows.windows(2).all(|w| w[1].density_distance < w[0].density_distance);
                let exc_dec = rows.windows(2).all(|w| w[1].max_excess < w[0].max_excess);
                let table: Vec<String> = rows
                    .iter()
                    .map(|r| format!("m={} D={:.4e} excess={:.3e}", r.m, r.density_distance, r.max_excess))
                    .collect();
                Outcome {
                    pass: dist_dec && exc_dec,
                    detail: format!("{}; D decreasing {dist_dec}, excess decreasing {exc_dec}", table.join(", ")),
                }
            }),
        );
    }
    if want(10) {
        check(
            10,
            report(10, "maximum principle, zero drift, m=50", None, || {
                let mut cfg = preset(PresetName::Fig1Porous);
                cfg.nx = 32;
                cfg.ny = 32;
                cfg.steps = 20;
                cfg.potentials = [Potential::zero(), Potential::zero()];
                let mut sups = Vec::new();
                run_simulation_with(&cfg, |_| Ok(()), |r| {
                    sups.push(r.sup_sum);
                    Ok(())
                })
                .unwrap();
                let worst = sups.iter().skip(1).fold(f64::NEG_INFINITY, |a, b| a.max(*b));
                Outcome {
                    pass: worst <= sups[0] + 1e-2,
                    detail: format!("initial sup {:.6}, max over 20 steps {worst:.6} (<= initial + 1e-2)", sups[0]),
                }
            }),
        );
    }
    if want(11) {
        check(
            11,
            report(11, "heat-flow second-moment rate", Some(120.0), || {
                let r = heat_moment_check(0.01, 20, 0.005, 32).unwrap();
                let rel = (r.rate / r.expected - 1.0).abs();
                Outcome {
                    pass: rel <= 0.05 && !r.touched_boundary,
                    detail: format!(
                        "fitted rate {:.5e} vs 4*eps*mass {:.5e}, relative error {rel:.2e} (<= 5e-2), boundary contact {}",
                        r.rate, r.expected, r.touched_boundary
                    ),
                }
            }),
        );
    }
    if want(12) {
        check(
            12,
            report(12, "figure reproduction, fig3 and fig4 at 50x50", Some(1800.0), || {
                // fig3: saturated crossing near t = 0.1, blobs at their targets at the end
                let mut cfg = preset(PresetName::Fig3Hard);
                cfg.steps = 60;
                let dx = (cfg.bounds[1] - cfg.bounds[0]) / cfg.nx as f64;
                let mut saturated_near_01 = false;
                let mut last = None;
                run_simulation_with(
                    &cfg,
                    |s| {
                        if (0.05..=0.15).contains(&s.time) {
                            let sum = s.rho.sum();
                            saturated_near_01 |= mixing_cells(s, 0.05).iter().any(|&c| sum.values[c] > 0.99);
                        }
                        last = Some(s.clone());
                        Ok(())
                    },
                    |_| Ok(()),
                )
                .unwrap();
                let last = last.unwrap();
                let (c1, c2) = (center_of_mass(&last.rho.rho1), center_of_mass(&last.rho.rho2));
                let d1 = ((c1[0] - 0.3).powi(2) + (c1[1] - 0.3).powi(2)).sqrt();
                let d2 = ((c2[0] + 0.3).powi(2) + (c2[1] + 0.3).powi(2)).sqrt();

                // fig4: plateau of species 2 at 1/alpha2 before the blobs meet
                let mut cfg4 = preset(PresetName::Fig4HardWeighted);
                cfg4.steps = 20;
                let mut crossed = false;
                let mut pre_max: f64 = 0.0;
                let mut pre_steps = 0;
                run_simulation_with(
                    &cfg4,
                    |s| {
                        crossed |= !mixing_cells(s, 0.05).is_empty();
                        if s.step > 0 && !crossed {
                            pre_max = pre_max.max(s.rho.rho2.max());
                            pre_steps += 1;
                        }
                        Ok(())
                    },
                    |_| Ok(()),
                )
                .unwrap();
                let plateau = pre_steps > 0 && (0.45..=0.55).contains(&pre_max);
                Outcome {
                    pass: saturated_near_01 && d1 <= 2.0 * dx && d2 <= 2.0 * dx && plateau,
                    detail: format!(
                        "fig3: saturated crossing cells for t in [0.05, 0.15] {saturated_near_01}, centers of mass at t={:.2} \
                         off target by {d1:.4}/{d2:.4} (<= {:.2}); fig4: max rho2 over {pre_steps} pre-crossing steps {pre_max:.4} (in [0.45, 0.55])",
                        last.time,
                        2.0 * dx
                    ),
                }
            }),
        );
    }

    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
