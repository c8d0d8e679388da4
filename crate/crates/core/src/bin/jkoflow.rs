//! Command-line front end: runs, oracle comparisons and experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jkoflow::config::{l1_setup, mlimit_setup, parse_config, Overrides, PresetName};
use jkoflow::error::{Error, Result};
use jkoflow::oracle::heat_moment_check;
use jkoflow::output::{write_snapshot, DiagnosticsWriter};
use jkoflow::sim::{l1_contraction_experiment, m_limit_experiment, run_simulation_with};
use jkoflow::validate::{elliptic_suite, projection_suite, prox_suite, step_suite};

#[derive(Parser)]
#[command(name = "jkoflow", version, about = "Two-species Wasserstein gradient flows with congestion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write snapshots and diagnostics.
    Run(RunArgs),
    /// Compare the solvers against brute-force and reference oracles.
    Oracle(OracleArgs),
    /// Theorem-level experiments.
    #[command(subcommand)]
    Experiment(Experiment),
}

fn parse_preset(s: &str) -> std::result::Result<PresetName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// One of fig1_porous, fig2_porous_weighted, fig3_hard,
    /// fig4_hard_weighted, fig5_hard_obstacle, fig6_hard_weighted_obstacle.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<PresetName>,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct OverrideArgs {
    /// Cells in x.
    #[arg(long)]
    nx: Option<usize>,
    /// Cells in y.
    #[arg(long)]
    ny: Option<usize>,
    /// JKO time step.
    #[arg(long)]
    h: Option<f64>,
    /// Number of JKO steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Entropy weight.
    #[arg(long)]
    eps: Option<f64>,
    /// Congestion mode: hard or porous.
    #[arg(long)]
    mode: Option<String>,
    /// Porous-medium exponent.
    #[arg(long)]
    m: Option<f64>,
    /// Congestion weight of species 1.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Congestion weight of species 2.
    #[arg(long)]
    alpha2: Option<f64>,
    /// Augmented-Lagrangian parameter.
    #[arg(long)]
    r: Option<f64>,
    /// Time cells of the inner transport problem.
    #[arg(long)]
    nt: Option<usize>,
    /// Primal and dual residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap per JKO step.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Write a snapshot every this many steps.
    #[arg(long)]
    stride: Option<usize>,
    /// Density shown as white in heatmaps.
    #[arg(long)]
    vmax: Option<f64>,
}

impl OverrideArgs {
    fn into_overrides(self, out: Option<PathBuf>) -> Overrides {
        Overrides {
            nx: self.nx,
            ny: self.ny,
            h: self.h,
            steps: self.steps,
            eps: self.eps,
            mode: self.mode,
            m: self.m,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            r: self.r,
            nt: self.nt,
            tol: self.tol,
            max_iters: self.max_iters,
            out,
            stride: self.stride,
            vmax: self.vmax,
        }
    }
}

#[derive(Args)]
struct OracleArgs {
    /// Which comparison to run.
    #[arg(long, value_parser = ["all", "prox", "projection", "elliptic", "step"], default_value = "all")]
    suite: String,
    /// Random instances for the prox and projection suites.
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Seed of the random instances.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand)]
enum Experiment {
    /// L¹ distance between two runs with a common drift.
    L1 {
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Soft congestion for growing m against the hard-congestion run.
    Mlimit {
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Exponents to compare.
        #[arg(long, value_delimiter = ',', default_value = "10,50,200")]
        m: Vec<f64>,
    },
    /// Second-moment growth of a diffusing blob.
    Heat {
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 0.005)]
        h: f64,
        #[arg(long, default_value_t = 32)]
        n: usize,
    },
}

fn run(args: RunArgs) -> Result<()> {
    let flags = args.overrides.into_overrides(args.out);
    let cfg = parse_config(args.preset, args.config.as_deref(), &flags)?;
    let dir = cfg.sim.output_dir.clone().unwrap_or_else(|| PathBuf::from("output"));
    let mut log = DiagnosticsWriter::create(&dir)?;
    println!("step time mass1 mass2 energy sup_sum iterations converged");
    run_simulation_with(
        &cfg.sim,
        |snap| write_snapshot(snap, &dir, cfg.vmax),
        |r| {
            println!(
                "{} {:.4} {:.9} {:.9} {:.9} {:.6} {} {}",
                r.step, r.time, r.mass1, r.mass2, r.energy, r.sup_sum, r.iterations, r.converged
            );
            log.append(r)
        },
    )?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn oracle(args: OracleArgs) -> Result<bool> {
    let all = args.suite == "all";
    let mut ok = true;
    if all || args.suite == "prox" {
        let r = prox_suite(args.count, args.seed)?;
        let pass = r.max_diff <= 1e-4 && r.max_kkt <= 1e-11;
        println!(
            "{} prox: {} instances, max diff {:.2e}, max KKT residual {:.2e}",
            verdict(pass),
            r.instances,
            r.max_diff,
            r.max_kkt
        );
        ok &= pass;
    }
    if all || args.suite == "projection" {
        let r = projection_suite(args.count, args.seed);
        let pass = r.max_violation <= 1e-12 && r.max_diff <= 1e-5 && r.feasible_unchanged;
        println!(
            "{} projection: {} points, max violation {:.2e}, max diff {:.2e}, feasible unchanged {}",
            verdict(pass),
            r.points,
            r.max_violation,
            r.max_diff,
            r.feasible_unchanged
        );
        ok &= pass;
    }
    if all || args.suite == "elliptic" {
        let r = elliptic_suite()?;
        let pass = r.orders.iter().all(|o| *o >= 1.9) && r.max_cg_residual <= 1e-8;
        let orders: Vec<String> = r.orders.iter().map(|o| format!("{o:.3}")).collect();
        println!(
            "{} elliptic: orders [{}], max CG residual {:.2e}",
            verdict(pass),
            orders.join(", "),
            r.max_cg_residual
        );
        ok &= pass;
    }
    if all || args.suite == "step" {
        let r = step_suite(8, 4, 20_000, 30_000)?;
        let pass = r.relative_gap <= 1e-3;
        println!(
            "{} step: objective {:.10} vs reference {:.10}, relative gap {:.2e}, reference residual {:.1e}{}",
            verdict(pass),
            r.alg2_objective,
            r.reference_objective,
            r.relative_gap,
            r.reference_residual,
            if r.reference_flagged { " (flagged)" } else { "" }
        );
        ok &= pass;
    }
    Ok(ok)
}

fn experiment(e: Experiment) -> Result<()> {
    match e {
        Experiment::L1 { n, steps } => {
            let (cfg, second) = l1_setup(n, steps);
            println!("step l1_species1 l1_species2");
            for (k, d) in l1_contraction_experiment(&cfg, &second)?.iter().enumerate() {
                println!("{k} {:.9} {:.9}", d[0], d[1]);
            }
        }
        Experiment::Mlimit { n, steps, m } => {
            let cfg = mlimit_setup(n, steps);
            println!("m density_l2_distance pressure_l2_distance max_excess");
            for r in m_limit_experiment(&cfg, &m)? {
                println!("{} {:.9} {:.9} {:.3e}", r.m, r.density_distance, r.pressure_distance, r.max_excess);
            }
        }
        Experiment::Heat { eps, steps, h, n } => {
            let r = heat_moment_check(eps, steps, h, n)?;
            println!(
                "rate {:.6e} expected {:.6e} ratio {:.4}{}",
                r.rate,
                r.expected,
                r.rate / r.expected,
                if r.touched_boundary { " (blob reached the boundary)" } else { "" }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Oracle(args) => oracle(args).and_then(|ok| {
            if ok {
                Ok(())
            } else {
                Err(Error::SolverFailure {
                    what: "oracle comparison",
                    residual: f64::NAN,
                })
            }
        }),
        Command::Experiment(e) => experiment(e),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
