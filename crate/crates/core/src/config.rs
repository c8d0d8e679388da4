//! Presets, TOML configuration files and command-line overrides.
//!
//! Every key is optional; missing keys fall back to the selected preset,
//! or to `fig3_hard` when no preset is named.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::alg2::Alg2Config;
use crate::energy::Congestion;
use crate::error::{Error, Result};
use crate::sim::{InitialField, Potential, RectPatch, SimulationConfig};

/// Named reproductions of the six crossing-crowds figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    Fig1Porous,
    Fig2PorousWeighted,
    Fig3Hard,
    Fig4HardWeighted,
    Fig5HardObstacle,
    Fig6HardWeightedObstacle,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::Fig1Porous,
        PresetName::Fig2PorousWeighted,
        PresetName::Fig3Hard,
        PresetName::Fig4HardWeighted,
        PresetName::Fig5HardObstacle,
        PresetName::Fig6HardWeightedObstacle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Fig1Porous => "fig1_porous",
            PresetName::Fig2PorousWeighted => "fig2_porous_weighted",
            PresetName::Fig3Hard => "fig3_hard",
            PresetName::Fig4HardWeighted => "fig4_hard_weighted",
            PresetName::Fig5HardObstacle => "fig5_hard_obstacle",
            PresetName::Fig6HardWeightedObstacle => "fig6_hard_weighted_obstacle",
        }
    }

    pub fn names() -> String {
        PresetName::ALL.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{s}`; valid names: {}", PresetName::names())))
    }
}

/// Initial blob of species 1.
pub const BLOB1: [f64; 4] = [-0.45, -0.15, -0.45, -0.15];
/// Initial blob of species 2.
pub const BLOB2: [f64; 4] = [0.15, 0.45, 0.15, 0.45];
/// Obstacle rectangle of the last two presets.
pub const OBSTACLE: [f64; 4] = [-0.1, 0.1, -0.25, 0.25];
pub const OBSTACLE_HEIGHT: f64 = 1e4;

fn blob(rect: [f64; 4]) -> InitialField {
    InitialField::Rectangles(vec![RectPatch { rect, value: 1.0 }])
}

/// The setup of the figure `name`: two unit blobs on `[-½, ½]²` attracted to
/// each other's corner, 50×50 cells, `h = 0.01`.
pub fn preset(name: PresetName) -> SimulationConfig {
    use PresetName::*;
    let (congestion, eps, alpha) = match name {
        Fig1Porous => (Congestion::PorousMedium { m: 50.0 }, 0.0, [1.0, 1.0]),
        Fig2PorousWeighted => (Congestion::PorousMedium { m: 50.0 }, 0.0, [1.0, 2.0]),
        Fig3Hard | Fig5HardObstacle => (Congestion::Hard, 0.01, [1.0, 1.0]),
        Fig4HardWeighted | Fig6HardWeightedObstacle => (Congestion::Hard, 0.01, [1.0, 2.0]),
    };
    let mut potentials = [Potential::quadratic(4.0, [0.3, 0.3]), Potential::quadratic(4.0, [-0.3, -0.3])];
    if matches!(name, Fig5HardObstacle | Fig6HardWeightedObstacle) {
        for p in &mut potentials {
            p.patches.push(RectPatch {
                rect: OBSTACLE,
                value: OBSTACLE_HEIGHT,
            });
        }
    }
    SimulationConfig {
        nx: 50,
        ny: 50,
        bounds: [-0.5, 0.5, -0.5, 0.5],
        h: 0.01,
        steps: 30,
        potentials,
        eps,
        congestion,
        alpha,
        alg2: Alg2Config::default(),
        initial: [blob(BLOB1), blob(BLOB2)],
        output_dir: None,
        snapshot_stride: 1,
    }
}

/// Common-drift hard-congestion setup for the L¹-contraction experiment and
/// the second pair of initial data to compare against.
pub fn l1_setup(n: usize, steps: usize) -> (SimulationConfig, [InitialField; 2]) {
    let mut cfg = preset(PresetName::Fig3Hard);
    cfg.nx = n;
    cfg.ny = n;
    cfg.steps = steps;
    cfg.potentials = [Potential::quadratic(4.0, [0.0, 0.0]), Potential::quadratic(4.0, [0.0, 0.0])];
    let second = [blob([-0.4, -0.1, -0.35, -0.05]), blob([0.1, 0.4, 0.2, 0.5])];
    (cfg, second)
}

/// Common-drift hard-congestion reference run for the `m → ∞` sweep. The
/// drift is strong enough that the packed cluster needs a pressure above
/// one, so soft runs visibly overshoot the constraint.
pub fn mlimit_setup(n: usize, steps: usize) -> SimulationConfig {
    let mut cfg = l1_setup(n, steps).0;
    cfg.potentials = [Potential::quadratic(40.0, [0.0, 0.0]), Potential::quadratic(40.0, [0.0, 0.0])];
    cfg
}

/// Optional overrides, typically from command-line flags. They win over
/// file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub h: Option<f64>,
    pub steps: Option<usize>,
    pub eps: Option<f64>,
    pub mode: Option<String>,
    pub m: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub r: Option<f64>,
    pub nt: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub out: Option<PathBuf>,
    pub stride: Option<usize>,
    pub vmax: Option<f64>,
}

/// A validated run: the simulation plus output settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimulationConfig,
    /// Heatmap value mapped to white.
    pub vmax: f64,
}

pub const DEFAULT_VMAX: f64 = 1.0;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<String>,
    domain: Option<[f64; 4]>,
    grid: Option<GridSection>,
    time: Option<TimeSection>,
    energy: Option<EnergySection>,
    potentials: Option<PotentialsSection>,
    initial: Option<InitialSection>,
    alg2: Option<Alg2Section>,
    output: Option<OutputSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    nx: Option<usize>,
    ny: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    h: Option<f64>,
    steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergySection {
    eps: Option<f64>,
    mode: Option<String>,
    m: Option<f64>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialsSection {
    v1: Option<PotentialSection>,
    v2: Option<PotentialSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialSection {
    /// `zero` or `quadratic`.
    builtin: Option<String>,
    k: Option<f64>,
    center: Option<[f64; 2]>,
    csv: Option<PathBuf>,
    #[serde(default)]
    patches: Vec<PatchSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchSection {
    rect: [f64; 4],
    value: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    rho1: Option<FieldSection>,
    rho2: Option<FieldSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSection {
    constant: Option<f64>,
    csv: Option<PathBuf>,
    #[serde(default)]
    patches: Vec<PatchSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Alg2Section {
    r: Option<f64>,
    nt: Option<usize>,
    tol: Option<f64>,
    max_iters: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    stride: Option<usize>,
    vmax: Option<f64>,
}

/// Reads a cell table `x,y,value` in row-major order and checks it against
/// the cell centers of the configured grid.
pub fn read_cell_table(path: &Path, cfg: &SimulationConfig) -> Result<Vec<f64>> {
    let g = cfg.grid()?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap_or("");
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["x", "y", "value"] {
        return Err(Error::config(path.display().to_string(), "expected header `x,y,value`"));
    }
    let mut values = Vec::with_capacity(g.n_cells());
    for (c, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config(path.display().to_string(), format!("row {}: {e}", c + 1)))?;
        if row.len() != 3 || c >= g.n_cells() {
            return Err(Error::config(path.display().to_string(), format!("row {} is malformed or extra", c + 1)));
        }
        let (x, y) = g.center(c % g.nx, c / g.nx);
        if (row[0] - x).abs() > 1e-6 * g.dx || (row[1] - y).abs() > 1e-6 * g.dy {
            return Err(Error::config(
                path.display().to_string(),
                format!("row {} is at ({}, {}), expected cell center ({x}, {y})", c + 1, row[0], row[1]),
            ));
        }
        values.push(row[2]);
    }
    if values.len() != g.n_cells() {
        return Err(Error::config(
            path.display().to_string(),
            format!("{} rows for {} cells", values.len(), g.n_cells()),
        ));
    }
    Ok(values)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn patches(list: &[PatchSection]) -> Vec<RectPatch> {
    list.iter()
        .map(|p| RectPatch {
            rect: p.rect,
            value: p.value,
        })
        .collect()
}

/// Builds a run from an optional preset, an optional TOML file and flag
/// overrides, in increasing order of precedence.
pub fn parse_config(preset_name: Option<PresetName>, file: Option<&Path>, flags: &Overrides) -> Result<RunConfig> {
    let (fc, base_dir) = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let fc: FileConfig = toml::from_str(&text).map_err(|e| {
                let key = e.span().map(|s| text[s].to_string()).unwrap_or_default();
                Error::config(key, e.message().to_string())
            })?;
            (fc, path.parent().unwrap_or(Path::new(".")).to_path_buf())
        }
        None => (FileConfig::default(), PathBuf::from(".")),
    };
    let name = match (preset_name, &fc.preset) {
        (Some(p), _) => p,
        (None, Some(s)) => s.parse()?,
        (None, None) => PresetName::Fig3Hard,
    };
    let mut cfg = preset(name);
    let mut vmax = DEFAULT_VMAX;

    if let Some(d) = fc.domain {
        cfg.bounds = d;
    }
    let grid = fc.grid.unwrap_or_default();
    let time = fc.time.unwrap_or_default();
    let energy = fc.energy.unwrap_or_default();
    let alg2 = fc.alg2.unwrap_or_default();
    let output = fc.output.unwrap_or_default();
    cfg.nx = flags.nx.or(grid.nx).unwrap_or(cfg.nx);
    cfg.ny = flags.ny.or(grid.ny).unwrap_or(cfg.ny);
    cfg.h = flags.h.or(time.h).unwrap_or(cfg.h);
    cfg.steps = flags.steps.or(time.steps).unwrap_or(cfg.steps);
    cfg.eps = flags.eps.or(energy.eps).unwrap_or(cfg.eps);
    cfg.alpha[0] = flags.alpha1.or(energy.alpha1).unwrap_or(cfg.alpha[0]);
    cfg.alpha[1] = flags.alpha2.or(energy.alpha2).unwrap_or(cfg.alpha[1]);
    let mode = flags.mode.clone().or(energy.mode);
    let m = flags.m.or(energy.m);
    cfg.congestion = match (mode.as_deref(), m) {
        (Some("hard"), None) => Congestion::Hard,
        (Some("hard"), Some(_)) => return Err(Error::config("energy.m", "m is not used with mode = \"hard\"")),
        (Some("porous"), m) => Congestion::PorousMedium {
            m: m.or(match cfg.congestion {
                Congestion::PorousMedium { m } => Some(m),
                Congestion::Hard => None,
            })
            .ok_or_else(|| Error::config("energy.m", "porous mode needs m"))?,
        },
        (None, Some(m)) => Congestion::PorousMedium { m },
        (None, None) => cfg.congestion,
        (Some(other), _) => {
            return Err(Error::config("energy.mode", format!("`{other}` is not one of hard, porous")))
        }
    };
    cfg.alg2.r = flags.r.or(alg2.r).unwrap_or(cfg.alg2.r);
    cfg.alg2.nt = flags.nt.or(alg2.nt).unwrap_or(cfg.alg2.nt);
    if let Some(tol) = flags.tol.or(alg2.tol) {
        cfg.alg2.tol_primal = tol;
        cfg.alg2.tol_dual = tol;
    }
    cfg.alg2.max_iters = flags.max_iters.or(alg2.max_iters).unwrap_or(cfg.alg2.max_iters);
    cfg.output_dir = flags.out.clone().or(output.dir.map(|d| resolve(&base_dir, &d))).or(cfg.output_dir);
    cfg.snapshot_stride = flags.stride.or(output.stride).unwrap_or(cfg.snapshot_stride);
    vmax = flags.vmax.or(output.vmax).unwrap_or(vmax);

    // fields tabulated on cells need the final grid
    if let Some(pots) = fc.potentials {
        for (i, sec) in [pots.v1, pots.v2].into_iter().enumerate() {
            let Some(sec) = sec else { continue };
            let key = format!("potentials.v{}", i + 1);
            let mut p = match sec.builtin.as_deref() {
                None | Some("zero") if sec.k.is_none() && sec.center.is_none() => Potential::zero(),
                None | Some("quadratic") => Potential::quadratic(
                    sec.k.unwrap_or(4.0),
                    sec.center.ok_or_else(|| Error::config(format!("{key}.center"), "a quadratic potential needs a center"))?,
                ),
                Some("zero") => return Err(Error::config(format!("{key}.builtin"), "zero takes no k or center")),
                Some(other) => {
                    return Err(Error::config(format!("{key}.builtin"), format!("`{other}` is not one of zero, quadratic")))
                }
            };
            p.patches = patches(&sec.patches);
            if let Some(csv) = sec.csv {
                p.table = Some((cfg.nx, cfg.ny, read_cell_table(&resolve(&base_dir, &csv), &cfg)?));
            }
            cfg.potentials[i] = p;
        }
    }
    if let Some(init) = fc.initial {
        for (i, sec) in [init.rho1, init.rho2].into_iter().enumerate() {
            let Some(sec) = sec else { continue };
            let key = format!("initial.rho{}", i + 1);
            cfg.initial[i] = match (sec.constant, sec.csv, sec.patches.is_empty()) {
                (Some(c), None, true) => InitialField::Constant(c),
                (None, Some(csv), true) => InitialField::Samples {
                    nx: cfg.nx,
                    ny: cfg.ny,
                    values: read_cell_table(&resolve(&base_dir, &csv), &cfg)?,
                },
                (None, None, false) => InitialField::Rectangles(patches(&sec.patches)),
                _ => return Err(Error::config(key, "give exactly one of constant, csv, patches")),
            };
        }
    }
    validate_run(&cfg, vmax)?;
    Ok(RunConfig { sim: cfg, vmax })
}

/// Validation with errors naming the offending key.
pub fn validate_run(cfg: &SimulationConfig, vmax: f64) -> Result<()> {
    let positive = |key: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::config(key, format!("{v} must be positive and finite")))
        }
    };
    if cfg.nx < 2 {
        return Err(Error::config("grid.nx", "needs at least 2 cells"));
    }
    if cfg.ny < 2 {
        return Err(Error::config("grid.ny", "needs at least 2 cells"));
    }
    let [x0, x1, y0, y1] = cfg.bounds;
    if !(x0 < x1 && y0 < y1) || cfg.bounds.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("domain", "expected [xmin, xmax, ymin, ymax] with xmin < xmax, ymin < ymax"));
    }
    positive("time.h", cfg.h)?;
    if cfg.steps == 0 {
        return Err(Error::config("time.steps", "needs at least one step"));
    }
    if !(cfg.eps >= 0.0 && cfg.eps.is_finite()) {
        return Err(Error::config("energy.eps", "must be nonnegative"));
    }
    positive("energy.alpha1", cfg.alpha[0])?;
    positive("energy.alpha2", cfg.alpha[1])?;
    if let Congestion::PorousMedium { m } = cfg.congestion {
        if !(m >= 1.0 && m.is_finite()) {
            return Err(Error::config("energy.m", format!("{m} must be at least 1")));
        }
    }
    positive("alg2.r", cfg.alg2.r)?;
    if cfg.alg2.nt == 0 {
        return Err(Error::config("alg2.nt", "needs at least one time cell"));
    }
    positive("alg2.tol", cfg.alg2.tol_primal)?;
    if cfg.alg2.max_iters == 0 {
        return Err(Error::config("alg2.max_iters", "needs at least one iteration"));
    }
    if cfg.snapshot_stride == 0 {
        return Err(Error::config("output.stride", "needs to be at least 1"));
    }
    positive("output.vmax", vmax)?;
    let rho = cfg.initial_pair().map_err(|e| Error::config("initial", e.to_string()))?;
    if cfg.congestion.is_hard() {
        let need = cfg.alpha[0] * rho.mass1 + cfg.alpha[1] * rho.mass2;
        let area = cfg.grid()?.area();
        if need > area * (1.0 + 1e-12) {
            return Err(Error::config(
                "initial",
                format!("hard congestion needs alpha1*m1 + alpha2*m2 <= |domain|, got {need:.6} > {area:.6}"),
            ));
        }
    }
    cfg.validate().map_err(|e| Error::config("config", e.to_string()))
}
