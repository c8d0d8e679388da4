//! Outer JKO loop, per-step diagnostics and the theorem-level experiments.

use crate::alg2::{jko_step, Alg2Config, Alg2State, JkoStepStats};
use crate::energy::{eval_energy, Congestion, DensityPair, EnergySpec};
use crate::error::{Error, Result};
use crate::grid::{gradient, integrate, Grid2D, ScalarField};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` carrying a constant value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectPatch {
    pub rect: [f64; 4],
    pub value: f64,
}

/// Initial density of one species.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialField {
    /// Sum of constant rectangles, sampled by exact cell overlap.
    Rectangles(Vec<RectPatch>),
    /// Uniform background density.
    Constant(f64),
    /// Cell values in row-major order, for a grid of matching size.
    Samples { nx: usize, ny: usize, values: Vec<f64> },
}

impl InitialField {
    pub fn sample(&self, grid: Grid2D) -> Result<ScalarField> {
        match self {
            InitialField::Rectangles(patches) => Ok(patch_sum(grid, patches)),
            InitialField::Constant(c) => Ok(ScalarField::constant(grid, *c)),
            InitialField::Samples { nx, ny, values } => {
                if (*nx, *ny) != (grid.nx, grid.ny) {
                    return Err(Error::InvalidArgument(format!(
                        "sampled field is {nx}x{ny}, grid is {}x{}",
                        grid.nx, grid.ny
                    )));
                }
                ScalarField::new(grid, values.clone())
            }
        }
    }
}

fn patch_sum(grid: Grid2D, patches: &[RectPatch]) -> ScalarField {
    let mut out = ScalarField::zeros(grid);
    for p in patches {
        let f = ScalarField::rectangle_indicator(grid, p.rect, p.value);
        for (o, v) in out.values.iter_mut().zip(f.values) {
            *o += v;
        }
    }
    out
}

/// `V(x) = k |x - center|² + Σ patches + table`, where the optional table
/// holds `(nx, ny, values)` cell values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub quadratic: Option<(f64, [f64; 2])>,
    pub patches: Vec<RectPatch>,
    pub table: Option<(usize, usize, Vec<f64>)>,
}

impl Potential {
    pub fn zero() -> Self {
        Potential {
            quadratic: None,
            patches: Vec::new(),
            table: None,
        }
    }

    pub fn quadratic(k: f64, center: [f64; 2]) -> Self {
        Potential {
            quadratic: Some((k, center)),
            patches: Vec::new(),
            table: None,
        }
    }

    pub fn sample(&self, grid: Grid2D) -> Result<ScalarField> {
        let mut out = patch_sum(grid, &self.patches);
        if let Some((k, c)) = self.quadratic {
            for ((x, y), v) in grid.centers().zip(out.values.iter_mut()) {
                *v += k * ((x - c[0]).powi(2) + (y - c[1]).powi(2));
            }
        }
        if let Some((nx, ny, values)) = &self.table {
            let t = InitialField::Samples {
                nx: *nx,
                ny: *ny,
                values: values.clone(),
            }
            .sample(grid)?;
            out.values.iter_mut().zip(t.values).for_each(|(o, v)| *o += v);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub nx: usize,
    pub ny: usize,
    pub bounds: [f64; 4],
    pub h: f64,
    pub steps: usize,
    pub potentials: [Potential; 2],
    pub eps: f64,
    pub congestion: Congestion,
    pub alpha: [f64; 2],
    pub alg2: Alg2Config,
    pub initial: [InitialField; 2],
    pub output_dir: Option<std::path::PathBuf>,
    pub snapshot_stride: usize,
}

impl SimulationConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.nx, self.ny, self.bounds)
    }

    pub fn energy_spec(&self) -> Result<EnergySpec> {
        let g = self.grid()?;
        let spec = EnergySpec {
            v1: self.potentials[0].sample(g)?,
            v2: self.potentials[1].sample(g)?,
            eps: self.eps,
            congestion: self.congestion,
            alpha: self.alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn initial_pair(&self) -> Result<DensityPair> {
        let g = self.grid()?;
        DensityPair::new(self.initial[0].sample(g)?, self.initial[1].sample(g)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidArgument(format!("h = {} must be positive", self.h)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidArgument("snapshot stride must be at least 1".into()));
        }
        self.alg2.validate()?;
        self.energy_spec()?;
        self.initial_pair()?;
        Ok(())
    }
}

/// Quantities logged after every step. Step 0 describes the initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub energy: f64,
    /// Transport cost `W₂²` estimate of the step.
    pub dynamic_cost: f64,
    /// `max (α·ρ - 1)₊`.
    pub max_violation: f64,
    /// `∫ p (1 - α·ρ)`.
    pub complementarity: f64,
    pub pressure_l1: f64,
    pub sup_sum: f64,
    /// `‖∇√ρ₁‖²`, `‖∇√ρ₂‖²`.
    pub fisher: [f64; 2],
    /// `(1/m) ‖∇(α·ρ)^{m/2}‖²`; NaN under hard congestion.
    pub congestion_dissipation: f64,
    pub converged: bool,
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
}

fn grad_sq(f: &ScalarField) -> f64 {
    let g = gradient(f);
    g.dot(&g)
}

pub fn compute_diagnostics(
    step: usize,
    time: f64,
    rho: &DensityPair,
    pressure: &ScalarField,
    stats: Option<&JkoStepStats>,
    spec: &EnergySpec,
) -> DiagnosticsRecord {
    let z = rho.weighted_sum(spec.alpha);
    let max_violation = z.values.iter().map(|v| (v - 1.0).max(0.0)).fold(0.0, f64::max);
    let complementarity = integrate(&pressure.zip_map(&z, |p, z| p * (1.0 - z)));
    let pressure_l1 = integrate(&pressure.map(f64::abs));
    let sup_sum = rho.sum().max();
    let fisher = [0, 1].map(|i| grad_sq(&rho.species(i).map(|v| v.max(0.0).sqrt())));
    let congestion_dissipation = match spec.congestion {
        Congestion::PorousMedium { m } => grad_sq(&z.map(|v| v.max(0.0).powf(0.5 * m))) / m,
        Congestion::Hard => f64::NAN,
    };
    DiagnosticsRecord {
        step,
        time,
        mass1: integrate(&rho.rho1),
        mass2: integrate(&rho.rho2),
        energy: eval_energy(rho, spec).value,
        dynamic_cost: stats.map_or(0.0, |s| s.dynamic_cost),
        max_violation,
        complementarity,
        pressure_l1,
        sup_sum,
        fisher,
        congestion_dissipation,
        converged: stats.map_or(true, |s| s.converged),
        iterations: stats.map_or(0, |s| s.iterations),
        primal: stats.map_or(0.0, |s| s.primal),
        dual: stats.map_or(0.0, |s| s.dual),
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub rho: DensityPair,
    pub pressure: ScalarField,
}

/// A running simulation. Advancing in several calls gives the same result
/// as one call, since the solver state is carried between them.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub step: usize,
    pub h: f64,
    pub spec: EnergySpec,
    pub alg2: Alg2Config,
    pub rho: DensityPair,
    pub pressure: ScalarField,
    masses: [f64; 2],
    state: Option<Alg2State>,
}

impl Simulation {
    pub fn new(cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let rho = cfg.initial_pair()?;
        let spec = cfg.energy_spec()?;
        if spec.congestion.is_hard() {
            let load = spec.alpha[0] * rho.mass1 + spec.alpha[1] * rho.mass2;
            if load > rho.rho1.grid.area() * (1.0 + 1e-9) {
                return Err(Error::InvalidArgument(format!(
                    "initial congested mass {load} exceeds the domain area"
                )));
            }
        }
        Ok(Simulation {
            step: 0,
            h: cfg.h,
            pressure: ScalarField::zeros(rho.rho1.grid),
            spec,
            alg2: cfg.alg2,
            masses: [rho.mass1, rho.mass2],
            rho,
            state: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.h
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            step: self.step,
            time: self.time(),
            rho: self.rho.clone(),
            pressure: self.pressure.clone(),
        }
    }

    pub fn initial_diagnostics(&self) -> DiagnosticsRecord {
        compute_diagnostics(self.step, self.time(), &self.rho, &self.pressure, None, &self.spec)
    }

    /// One JKO step.
    pub fn advance(&mut self) -> Result<DiagnosticsRecord> {
        let out = jko_step(&self.rho, self.h, &self.spec, &self.alg2, self.state.take())?;
        // The step's bounded mass correction aims at the initial masses, so
        // per-step deviations do not accumulate.
        self.rho = out.rho;
        [self.rho.mass1, self.rho.mass2] = self.masses;
        self.pressure = out.pressure;
        self.state = Some(out.state);
        self.step += 1;
        Ok(compute_diagnostics(
            self.step,
            self.time(),
            &self.rho,
            &self.pressure,
            Some(&out.stats),
            &self.spec,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub snapshots: Vec<Snapshot>,
    /// One record per step, starting with the initial data.
    pub diagnostics: Vec<DiagnosticsRecord>,
}

/// Runs `cfg.steps` JKO steps, handing every snapshot (step 0, every
/// `snapshot_stride`-th step and the last step) and every diagnostics record
/// to the callbacks as they are produced.
pub fn run_simulation_with(
    cfg: &SimulationConfig,
    mut on_snapshot: impl FnMut(&Snapshot) -> Result<()>,
    mut on_record: impl FnMut(&DiagnosticsRecord) -> Result<()>,
) -> Result<()> {
    let mut sim = Simulation::new(cfg)?;
    on_record(&sim.initial_diagnostics())?;
    on_snapshot(&sim.snapshot())?;
    for k in 1..=cfg.steps {
        let rec = sim.advance()?;
        on_record(&rec)?;
        if k % cfg.snapshot_stride == 0 || k == cfg.steps {
            on_snapshot(&sim.snapshot())?;
        }
    }
    Ok(())
}

pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationOutput> {
    let mut snapshots = Vec::new();
    let mut diagnostics = Vec::new();
    run_simulation_with(
        cfg,
        |s| {
            snapshots.push(s.clone());
            Ok(())
        },
        |r| {
            diagnostics.push(*r);
            Ok(())
        },
    )?;
    Ok(SimulationOutput {
        snapshots,
        diagnostics,
    })
}

/// Runs `cfg` and returns every step's densities and pressure, step 0 first.
fn trajectory(cfg: &SimulationConfig) -> Result<Vec<(DensityPair, ScalarField)>> {
    let mut sim = Simulation::new(cfg)?;
    let mut out = vec![(sim.rho.clone(), sim.pressure.clone())];
    for _ in 0..cfg.steps {
        sim.advance()?;
        out.push((sim.rho.clone(), sim.pressure.clone()));
    }
    Ok(out)
}

/// Checks `∇V₁ = ∇V₂` on the staggered grid.
fn check_common_drift(spec: &EnergySpec) -> Result<()> {
    let (g1, g2) = (gradient(&spec.v1), gradient(&spec.v2));
    let scale = g1.x.iter().chain(&g1.y).chain(&g2.x).chain(&g2.y).fold(1.0_f64, |m, v| m.max(v.abs()));
    let diff = g1.x.iter().zip(&g2.x).chain(g1.y.iter().zip(&g2.y)).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if diff > 1e-9 * scale {
        return Err(Error::InvalidArgument(format!(
            "potential gradients differ by {diff:.3e}; a common drift is required"
        )));
    }
    Ok(())
}

/// Per-step L¹ distances `∫|ρᵢ¹ - ρᵢ²|` between the run of `cfg` and the run
/// started from `second` with the same configuration.
pub fn l1_contraction_experiment(
    cfg: &SimulationConfig,
    second: &[InitialField; 2],
) -> Result<Vec<[f64; 2]>> {
    check_common_drift(&cfg.energy_spec()?)?;
    let other = SimulationConfig {
        initial: second.clone(),
        ..cfg.clone()
    };
    let (a, b) = (cfg.initial_pair()?, other.initial_pair()?);
    for i in 0..2 {
        let (ma, mb) = (a.mass(i), b.mass(i));
        if (ma - mb).abs() > 1e-9 * ma.abs().max(mb.abs()).max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!(
                "species {} masses differ between the runs: {ma} vs {mb}",
                i + 1
            )));
        }
    }
    let (ta, tb) = (trajectory(cfg)?, trajectory(&other)?);
    Ok(ta
        .iter()
        .zip(&tb)
        .map(|((ra, _), (rb, _))| [ra.rho1.l1_distance(&rb.rho1), ra.rho2.l1_distance(&rb.rho2)])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLimitRow {
    /// `f64::INFINITY` stands for hard congestion.
    pub m: f64,
    /// `maxₖ ‖ρ_m(k) - ρ_∞(k)‖_{L²}`, both species together.
    pub density_distance: f64,
    /// `maxₖ ‖p_m(k) - p_∞(k)‖_{L²}`.
    pub pressure_distance: f64,
    /// `maxₖ max (α·ρ_m - 1)₊`.
    pub max_excess: f64,
}

/// Compares soft-congestion runs for each `m` against the hard-congestion
/// run of `cfg_hard`.
pub fn m_limit_experiment(cfg_hard: &SimulationConfig, m_list: &[f64]) -> Result<Vec<MLimitRow>> {
    if !cfg_hard.congestion.is_hard() {
        return Err(Error::InvalidArgument("the reference run must use hard congestion".into()));
    }
    check_common_drift(&cfg_hard.energy_spec()?)?;
    let reference = trajectory(cfg_hard)?;
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let congestion = if m.is_infinite() {
            Congestion::Hard
        } else {
            Congestion::PorousMedium { m }
        };
        let cfg = SimulationConfig {
            congestion,
            ..cfg_hard.clone()
        };
        let run = if congestion.is_hard() {
            reference.clone()
        } else {
            trajectory(&cfg)?
        };
        let mut row = MLimitRow {
            m,
            density_distance: 0.0,
            pressure_distance: 0.0,
            max_excess: 0.0,
        };
        for ((r, p), (rr, pr)) in run.iter().zip(&reference) {
            let d = (r.rho1.l2_distance(&rr.rho1).powi(2) + r.rho2.l2_distance(&rr.rho2).powi(2)).sqrt();
            row.density_distance = row.density_distance.max(d);
            row.pressure_distance = row.pressure_distance.max(p.l2_distance(pr));
            let excess = r
                .weighted_sum(cfg.alpha)
                .values
                .iter()
                .fold(0.0_f64, |e, z| e.max(z - 1.0));
            row.max_excess = row.max_excess.max(excess);
        }
        rows.push(row);
    }
    Ok(rows)
}
