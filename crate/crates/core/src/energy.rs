//! The coupled energy: potentials, entropy and a common congestion term, its
//! pointwise proximal map with pressure extraction, and pressure fields.
//!
//! The proximal map is computed by reducing the two-species problem to one
//! scalar monotone equation. For a fixed pressure `p` each species solves an
//! independent one-dimensional problem
//!
//! ```text
//! min_ρ  Vρ + ερ log ρ + αpρ + (ρ - s)² / 2λ,
//! ```
//!
//! whose solution `ρ(p)` is decreasing in `p`. Hard congestion then looks for
//! the smallest `p >= 0` with `α·ρ(p) <= 1`; soft congestion looks for the
//! total congestion `w` with `α·ρ(F'(w)) = w`.

use crate::error::{Error, Result};
use crate::grid::{integrate, ScalarField};

/// Common congestion acting on `α₁ρ₁ + α₂ρ₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Congestion {
    /// `F_m(z) = z^m / (m - 1)`, or `z log z` for `m = 1`.
    PorousMedium { m: f64 },
    /// The constraint `α₁ρ₁ + α₂ρ₂ <= 1`.
    Hard,
}

impl Congestion {
    pub fn is_hard(&self) -> bool {
        matches!(self, Congestion::Hard)
    }
}

/// Pointwise data of the energy at one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEnergy {
    pub v: [f64; 2],
    pub eps: f64,
    pub congestion: Congestion,
    pub alpha: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec {
    pub v1: ScalarField,
    pub v2: ScalarField,
    pub eps: f64,
    pub congestion: Congestion,
    pub alpha: [f64; 2],
}

impl EnergySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("entropy weight {} < 0", self.eps)));
        }
        if let Congestion::PorousMedium { m } = self.congestion {
            if !(m >= 1.0 && m.is_finite()) {
                return Err(Error::InvalidArgument(format!("congestion exponent {m} < 1")));
            }
        }
        if !self.alpha.iter().all(|a| *a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "congestion weights {:?} must be positive",
                self.alpha
            )));
        }
        if self.v1.grid != self.v2.grid {
            return Err(Error::InvalidArgument("potentials live on different grids".into()));
        }
        if !self.v1.values.iter().chain(&self.v2.values).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("potentials must be finite".into()));
        }
        Ok(())
    }

    pub fn at(&self, cell: usize) -> PointEnergy {
        PointEnergy {
            v: [self.v1.values[cell], self.v2.values[cell]],
            eps: self.eps,
            congestion: self.congestion,
            alpha: self.alpha,
        }
    }
}

/// The two densities at one outer time, with their conserved masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub rho1: ScalarField,
    pub rho2: ScalarField,
    pub mass1: f64,
    pub mass2: f64,
}

impl DensityPair {
    /// Wraps two nonnegative fields, taking their integrals as the masses.
    pub fn new(rho1: ScalarField, rho2: ScalarField) -> Result<Self> {
        if rho1.grid != rho2.grid {
            return Err(Error::InvalidArgument("densities live on different grids".into()));
        }
        for (name, f) in [("rho1", &rho1), ("rho2", &rho2)] {
            if f.values.iter().any(|v| !v.is_finite() || *v < -1e-12) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        let (mass1, mass2) = (integrate(&rho1), integrate(&rho2));
        Ok(DensityPair {
            rho1,
            rho2,
            mass1,
            mass2,
        })
    }

    pub fn species(&self, i: usize) -> &ScalarField {
        if i == 0 {
            &self.rho1
        } else {
            &self.rho2
        }
    }

    pub fn mass(&self, i: usize) -> f64 {
        if i == 0 {
            self.mass1
        } else {
            self.mass2
        }
    }

    pub fn sum(&self) -> ScalarField {
        self.rho1.zip_map(&self.rho2, |a, b| a + b)
    }

    pub fn weighted_sum(&self, alpha: [f64; 2]) -> ScalarField {
        self.rho1.zip_map(&self.rho2, |a, b| alpha[0] * a + alpha[1] * b)
    }
}

/// `F_m(z)`.
pub fn f_m(z: f64, m: f64) -> Result<f64> {
    if z < 0.0 || z.is_nan() {
        return Err(Error::Domain(format!("F_m evaluated at z = {z} < 0")));
    }
    if m < 1.0 || m.is_nan() {
        return Err(Error::Domain(format!("F_m needs m >= 1, got {m}")));
    }
    Ok(f_m_unchecked(z, m))
}

#[inline]
fn f_m_unchecked(z: f64, m: f64) -> f64 {
    if m == 1.0 {
        xlogx(z)
    } else {
        z.powf(m) / (m - 1.0)
    }
}

/// `F_m'(z)`: `1 + log z` for `m = 1`, `m z^(m-1) / (m - 1)` otherwise.
pub fn f_m_prime(z: f64, m: f64) -> f64 {
    if m == 1.0 {
        1.0 + z.ln()
    } else {
        m * z.powf(m - 1.0) / (m - 1.0)
    }
}

/// Inverse of [`f_m_prime`] on the range of `F_m'` over `z >= 0`.
pub fn f_m_prime_inverse(p: f64, m: f64) -> f64 {
    if m == 1.0 {
        (p - 1.0).exp()
    } else {
        ((m - 1.0) * p.max(0.0) / m).powf(1.0 / (m - 1.0))
    }
}

/// `F_m''(z)`.
pub fn f_m_second(z: f64, m: f64) -> f64 {
    if m == 1.0 {
        1.0 / z
    } else if m == 2.0 {
        2.0
    } else {
        m * z.powf(m - 2.0)
    }
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Energy density at one cell. Hard congestion contributes nothing here;
/// feasibility is reported separately.
pub fn point_energy(rho: [f64; 2], pt: &PointEnergy) -> f64 {
    let mut e = pt.v[0] * rho[0] + pt.v[1] * rho[1];
    if pt.eps > 0.0 {
        e += pt.eps * (xlogx(rho[0]) + xlogx(rho[1]));
    }
    if let Congestion::PorousMedium { m } = pt.congestion {
        e += f_m_unchecked((pt.alpha[0] * rho[0] + pt.alpha[1] * rho[1]).max(0.0), m);
    }
    e
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyValue {
    pub value: f64,
    /// `false` only for hard congestion with `max α·ρ > 1 + 1e-6`.
    pub feasible: bool,
}

pub const HARD_FEASIBILITY_TOL: f64 = 1e-6;

pub fn eval_energy(rho: &DensityPair, spec: &EnergySpec) -> EnergyValue {
    let n = rho.rho1.values.len();
    let mut total = 0.0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for c in 0..n {
        let r = [rho.rho1.values[c].max(0.0), rho.rho2.values[c].max(0.0)];
        let pt = spec.at(c);
        total += point_energy(r, &pt);
        worst = worst.max(spec.alpha[0] * r[0] + spec.alpha[1] * r[1]);
    }
    EnergyValue {
        value: total * rho.rho1.grid.cell_area(),
        feasible: !spec.congestion.is_hard() || worst <= 1.0 + HARD_FEASIBILITY_TOL,
    }
}

/// Output of [`prox_density`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxResult {
    pub rho: [f64; 2],
    /// Soft congestion: `F_m'(α·ρ)` (to the residual). Hard congestion: the
    /// multiplier of `α·ρ <= 1`.
    pub pressure: f64,
    pub iterations: usize,
    /// Scaled KKT residual, in density units.
    pub residual: f64,
}

pub const PROX_MAX_ITERS: usize = 200;

/// Minimizer of `e(ρ) + |ρ - s|² / 2λ` over `ρ >= 0` (and `α·ρ <= 1` under
/// hard congestion).
pub fn prox_density(s: [f64; 2], lambda: f64, pt: &PointEnergy) -> Result<ProxResult> {
    prox_density_hinted(s, lambda, pt, None).map(|(r, _)| r)
}

/// [`prox_density`] with an optional warm start for the scalar root variable
/// (the pressure for hard congestion, the total congestion for soft). The
/// second return value is the root to pass back on the next call.
pub fn prox_density_hinted(
    s: [f64; 2],
    lambda: f64,
    pt: &PointEnergy,
    hint: Option<f64>,
) -> Result<(ProxResult, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("prox step {lambda} must be positive")));
    }
    if !(s[0].is_finite() && s[1].is_finite()) {
        return Err(Error::InvalidArgument(format!("prox input {s:?} not finite")));
    }
    let solver = SpeciesSolver { s, lambda, pt };
    let (p, root, iterations) = match pt.congestion {
        Congestion::Hard => solver.solve_hard(hint)?,
        Congestion::PorousMedium { m } => solver.solve_soft(m, hint)?,
    };
    let r = [solver.response(0, p), solver.response(1, p)];
    let rho = [r[0].rho, r[1].rho];
    let z = pt.alpha[0] * rho[0] + pt.alpha[1] * rho[1];
    // Soft congestion reports the pressure the species responses were solved
    // with; its consistency with F_m'(α·ρ) is measured in density units.
    let pressure = p;
    let residual = solver.kkt_residual(&r, pressure, z);
    Ok((
        ProxResult {
            rho,
            pressure,
            iterations,
            residual,
        },
        root,
    ))
}

#[derive(Debug, Clone, Copy)]
struct Response {
    rho: f64,
    log_rho: f64,
    /// dρ/dp
    slope: f64,
}

struct SpeciesSolver<'a> {
    s: [f64; 2],
    lambda: f64,
    pt: &'a PointEnergy,
}

impl SpeciesSolver<'_> {
    /// Minimizer of `Vρ + ερ log ρ + αpρ + (ρ - s)²/2λ` over `ρ >= 0`.
    fn response(&self, i: usize, p: f64) -> Response {
        let (lam, a) = (self.lambda, self.pt.alpha[i]);
        let shift = self.s[i] - lam * (self.pt.v[i] + a * p);
        if self.pt.eps == 0.0 {
            return if shift > 0.0 {
                Response {
                    rho: shift,
                    log_rho: shift.ln(),
                    slope: -lam * a,
                }
            } else {
                Response {
                    rho: 0.0,
                    log_rho: f64::NEG_INFINITY,
                    slope: 0.0,
                }
            };
        }
        // ρ + κ log ρ = b, solved in u = log ρ from the right of the root,
        // where Newton on the convex increasing map converges monotonically.
        let kappa = self.pt.eps * lam;
        let b = shift - kappa;
        let mut u = if b > 0.0 {
            (b / kappa).min(b.ln().max(0.0))
        } else {
            b / kappa
        };
        for _ in 0..PROX_MAX_ITERS {
            let e = u.exp();
            let f = e + kappa * u - b;
            if f <= 0.0 {
                break;
            }
            let du = f / (e + kappa);
            u -= du;
            if du <= 1e-15 * (1.0 + u.abs()) {
                break;
            }
        }
        let rho = u.exp();
        Response {
            rho,
            log_rho: u,
            slope: -lam * a * rho / (rho + kappa),
        }
    }

    fn total(&self, p: f64) -> (f64, f64) {
        let (r0, r1) = (self.response(0, p), self.response(1, p));
        let a = self.pt.alpha;
        (a[0] * r0.rho + a[1] * r1.rho, a[0] * r0.slope + a[1] * r1.slope)
    }

    /// Returns `(p, root, iterations)` with `p = root` the multiplier.
    fn solve_hard(&self, hint: Option<f64>) -> Result<(f64, f64, usize)> {
        let (z0, dz0) = self.total(0.0);
        if z0 <= 1.0 {
            return Ok((0.0, 0.0, 1));
        }
        // z(p) - 1 is convex and decreasing: Newton started left of the root
        // increases monotonically to it.
        let (mut p, mut z, mut dz) = (0.0, z0, dz0);
        if let Some(h) = hint.filter(|h| *h > 0.0 && h.is_finite()) {
            let (zh, dzh) = self.total(h);
            if zh >= 1.0 {
                (p, z, dz) = (h, zh, dzh);
            }
        }
        let mut hi = f64::INFINITY;
        for it in 1..=PROX_MAX_ITERS {
            let psi = z - 1.0;
            if psi <= 1e-14 {
                return Ok((p, p, it));
            }
            let mut next = p - psi / dz;
            if next.is_finite() && next > p && next - p <= 1e-15 * next && psi <= 1e-12 {
                return Ok((p, p, it));
            }
            if !(next.is_finite() && next > p) {
                next = if hi.is_finite() { 0.5 * (p + hi) } else { 2.0 * p.max(1.0) };
            }
            if next >= hi {
                next = 0.5 * (p + hi);
            }
            let (zn, dzn) = self.total(next);
            if zn >= 1.0 {
                (p, z, dz) = (next, zn, dzn);
                continue;
            }
            if 1.0 - zn <= 4e-16 || next - p <= 4e-16 * next {
                return Ok((next, next, it));
            }
            hi = next;
        }
        Err(Error::SolverFailure {
            what: "hard-congestion prox",
            residual: z - 1.0,
        })
    }

    /// Returns `(p, root, iterations)` with `p = F_m'(α·ρ)`. For `m > 1` the
    /// root variable is the total congestion `w` on `[0, α·ρ(0)]`; for `m = 1`
    /// it is `p` itself, since `w = exp(p - 1)` may underflow.
    fn solve_soft(&self, m: f64, hint: Option<f64>) -> Result<(f64, f64, usize)> {
        if m > 1.0 {
            let (z0, _) = self.total(0.0);
            if z0 <= 0.0 {
                return Ok((0.0, 0.0, 1));
            }
            let (w, it) = safeguarded_root(
                |w| {
                    let (z, dz) = self.total(f_m_prime(w, m));
                    (z - w, dz * f_m_second(w, m) - 1.0)
                },
                0.0,
                z0,
                hint,
            )
            .map_err(|residual| Error::SolverFailure {
                what: "soft-congestion prox",
                residual,
            })?;
            return Ok((f_m_prime(w, m), w, it));
        }
        let eval = |p: f64| {
            let (z, dz) = self.total(p);
            let e = (p - 1.0).exp();
            (z - e, dz - e)
        };
        let hi = 1.0 + self.total(0.0).0.max(1.0).ln();
        let mut lo = -1.0f64;
        let mut extra = 0;
        while eval(lo).0 <= 0.0 {
            lo = 2.0 * lo - 1.0;
            extra += 1;
            if extra > 64 {
                return Err(Error::SolverFailure {
                    what: "soft-congestion prox bracket",
                    residual: lo,
                });
            }
        }
        let (p, it) = safeguarded_root(eval, lo, hi, hint).map_err(|residual| {
            Error::SolverFailure {
                what: "soft-congestion prox",
                residual,
            }
        })?;
        Ok((p, p, it + extra))
    }

    fn kkt_residual(&self, r: &[Response; 2], pressure: f64, z: f64) -> f64 {
        let pt = self.pt;
        let lam = self.lambda;
        let mut res: f64 = 0.0;
        for i in 0..2 {
            let grad_lin = lam * (pt.v[i] + pt.alpha[i] * pressure) - self.s[i];
            let ri = if pt.eps > 0.0 {
                (grad_lin + lam * pt.eps * (1.0 + r[i].log_rho) + r[i].rho).abs()
            } else if r[i].rho > 0.0 {
                (grad_lin + r[i].rho).abs()
            } else {
                (-grad_lin).max(0.0)
            };
            res = res.max(ri);
        }
        match pt.congestion {
            Congestion::Hard => {
                res = res
                    .max((z - 1.0).max(0.0))
                    .max((-pressure).max(0.0))
                    .max((pressure * (1.0 - z)).abs() * lam);
            }
            Congestion::PorousMedium { m } => {
                // either form certifies p = F'(z); the first fails when F'
                // underflows at tiny z, the second when F'' is huge
                let density = (f_m_prime_inverse(pressure, m) - z).abs();
                let scaled_pressure = lam * (f_m_prime(z.max(0.0), m) - pressure).abs();
                res = res.max(density.min(scaled_pressure));
            }
        }
        res
    }
}

/// Root of a decreasing function on `[lo, hi]` with `f(lo) >= 0 >= f(hi)`:
/// Newton steps, falling back to bisection whenever a step leaves the bracket
/// or fails to halve the previous correction. `eval` returns `(f, f')`.
fn safeguarded_root(
    eval: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    start: Option<f64>,
) -> std::result::Result<(f64, usize), f64> {
    // roots often sit at the upper end (weak congestion), so look there first
    let (mut f_hi, df_hi) = eval(hi);
    if f_hi == 0.0 {
        return Ok((hi, 1));
    }
    let mut f_lo = f64::NAN;
    let mut x = match start {
        Some(s) if s > lo && s < hi => s,
        _ => {
            let newton = hi - f_hi / df_hi;
            if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            }
        }
    };
    let mut dx_old = hi - lo;
    let mut dx = dx_old;
    // secant steps alternate with bisection: with one end pinned, regula
    // falsi alone crawls on strongly convex functions
    let mut last_secant = false;
    let (mut f, mut df) = eval(x);
    for it in 1..=PROX_MAX_ITERS {
        if f == 0.0 {
            return Ok((x, it));
        }
        if f > 0.0 {
            (lo, f_lo) = (x, f);
        } else {
            (hi, f_hi) = (x, f);
        }
        let newton = x - f / df;
        let inside = newton.is_finite() && newton > lo && newton < hi;
        let bisect = !inside || (2.0 * f).abs() > (dx_old * df).abs();
        dx_old = dx;
        let secant = lo - f_lo * (hi - lo) / (f_hi - f_lo);
        let use_secant = !inside && !last_secant && secant > lo && secant < hi;
        last_secant = use_secant;
        if use_secant {
            dx = x - secant;
            x = secant;
        } else if bisect {
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        } else {
            dx = x - newton;
            x = newton;
        }
        if dx.abs() <= 2e-16 * x.abs().max(1e-300) || hi - lo <= 2e-16 * hi.abs().max(lo.abs()) {
            return Ok((x, it));
        }
        (f, df) = eval(x);
    }
    Err(hi - lo)
}

/// Objective of the pointwise proximal problem.
pub fn prox_objective(rho: [f64; 2], s: [f64; 2], lambda: f64, pt: &PointEnergy) -> f64 {
    let d = (rho[0] - s[0]).powi(2) + (rho[1] - s[1]).powi(2);
    point_energy(rho, pt) + d / (2.0 * lambda)
}

/// Pressure field of a converged state: `F_m'(α·ρ)` for soft congestion, the
/// stored multipliers for hard congestion.
pub fn pressure_field(
    rho: &DensityPair,
    spec: &EnergySpec,
    multipliers: Option<&ScalarField>,
) -> Result<ScalarField> {
    match spec.congestion {
        Congestion::PorousMedium { m } => {
            Ok(rho.weighted_sum(spec.alpha).map(|z| f_m_prime(z.max(0.0), m).max(0.0)))
        }
        Congestion::Hard => {
            let p = multipliers.ok_or_else(|| {
                Error::State("hard congestion pressure needs stored multipliers".into())
            })?;
            Ok(p.map(|v| v.max(0.0)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use proptest::prelude::*;

    fn pt(eps: f64, congestion: Congestion, alpha: [f64; 2]) -> PointEnergy {
        PointEnergy {
            v: [0.0, 0.0],
            eps,
            congestion,
            alpha,
        }
    }

    #[test]
    fn entropic_prox_with_negative_input_converges() {
        let p = pt(0.01, Congestion::PorousMedium { m: 1.0 }, [1.0, 1.0]);
        let out = prox_density([-0.436664799983795, -0.364845848270558], 0.001, &p).unwrap();
        assert!(out.residual <= 1e-11, "{out:?}");
        assert!(out.rho.iter().all(|r| (0.0..1e-100).contains(r)), "{out:?}");
    }

    #[test]
    fn f_m_examples() {
        assert_eq!(f_m(2.0, 2.0).unwrap(), 4.0);
        assert!((f_m(1.0, 50.0).unwrap() - 1.0 / 49.0).abs() < 1e-15);
        assert_eq!(f_m(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(f_m(0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(f_m(-0.1, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn f_m_prime_matches_finite_differences() {
        for m in [1.0, 1.5, 2.0, 3.0, 10.0, 50.0] {
            let mut z = 0.1;
            while z <= 2.0 {
                let h = 1e-6 * z;
                let fd = (f_m(z + h, m).unwrap() - f_m(z - h, m).unwrap()) / (2.0 * h);
                let an = f_m_prime(z, m);
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "m={m} z={z}");
                let fd2 = (f_m_prime(z + h, m) - f_m_prime(z - h, m)) / (2.0 * h);
                assert!((fd2 - f_m_second(z, m)).abs() <= 1e-5 * fd2.abs().max(1e-3));
                z += 0.05;
            }
        }
    }

    #[test]
    fn eval_energy_examples() {
        let g = Grid2D::new(4, 4, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let zero = ScalarField::zeros(g);
        let mk = |c: f64| {
            DensityPair::new(ScalarField::constant(g, c), ScalarField::constant(g, c)).unwrap()
        };
        let soft = EnergySpec {
            v1: zero.clone(),
            v2: zero.clone(),
            eps: 0.01,
            congestion: Congestion::PorousMedium { m: 2.0 },
            alpha: [1.0, 1.0],
        };
        let e = eval_energy(&mk(1.0), &soft);
        assert!((e.value - 4.0).abs() < 1e-13 && e.feasible);

        let hard = EnergySpec {
            eps: 0.0,
            congestion: Congestion::Hard,
            ..soft.clone()
        };
        let e = eval_energy(&mk(0.4), &hard);
        assert!(e.value.abs() < 1e-15 && e.feasible);
        assert!(!eval_energy(&mk(0.6), &hard).feasible);
    }

    #[test]
    fn prox_soft_quadratic_closed_form() {
        let r = prox_density(
            [0.5, 0.5],
            0.25,
            &pt(0.0, Congestion::PorousMedium { m: 2.0 }, [1.0, 1.0]),
        )
        .unwrap();
        assert!((r.rho[0] - 0.25).abs() < 1e-14 && (r.rho[1] - 0.25).abs() < 1e-14);
        assert!((r.pressure - 1.0).abs() < 1e-13);
        assert!(r.residual <= 1e-11);
    }

    #[test]
    fn prox_hard_is_halfplane_projection() {
        let r = prox_density([0.8, 0.8], 0.5, &pt(0.0, Congestion::Hard, [1.0, 1.0])).unwrap();
        assert!((r.rho[0] - 0.5).abs() < 1e-14 && (r.rho[1] - 0.5).abs() < 1e-14);
        assert!((r.pressure - 0.6).abs() < 1e-13);
        assert!(r.residual <= 1e-11);
    }

    #[test]
    fn prox_small_step_is_identity() {
        for c in [Congestion::PorousMedium { m: 3.0 }, Congestion::PorousMedium { m: 1.0 }] {
            let mut p = pt(0.0, c, [1.0, 1.0]);
            p.v = [0.7, -0.3];
            let r = prox_density([0.3, 0.4], 1e-10, &p).unwrap();
            assert!((r.rho[0] - 0.3).abs() < 1e-8 && (r.rho[1] - 0.4).abs() < 1e-8);
        }
    }

    #[test]
    fn prox_degenerate_inputs_with_entropy_stay_positive() {
        let p = pt(0.01, Congestion::PorousMedium { m: 2.0 }, [1.0, 1.0]);
        let r = prox_density([-0.5, 0.0], 1e-3, &p).unwrap();
        assert!(r.rho[0] >= 0.0 && r.rho[1] > 0.0);
        assert!(r.residual <= 1e-11);
    }

    #[test]
    fn prox_hard_empty_cell_has_zero_pressure() {
        let r = prox_density([-0.2, -0.3], 0.5, &pt(0.0, Congestion::Hard, [1.0, 2.0])).unwrap();
        assert_eq!(r.rho, [0.0, 0.0]);
        assert_eq!(r.pressure, 0.0);
    }

    #[test]
    fn prox_large_exponent_does_not_overflow() {
        let p = pt(0.0, Congestion::PorousMedium { m: 200.0 }, [1.0, 2.0]);
        let r = prox_density([40.0, 30.0], 1.0, &p).unwrap();
        assert!(r.rho.iter().all(|v| v.is_finite()) && r.pressure.is_finite());
        assert!(r.residual <= 1e-11, "{r:?}");
        let z = r.rho[0] + 2.0 * r.rho[1];
        assert!((f_m_prime(z, 200.0) - r.pressure).abs() <= 1e-6 * r.pressure);
    }

    #[test]
    fn prox_rejects_bad_step() {
        let p = pt(0.0, Congestion::Hard, [1.0, 1.0]);
        assert!(prox_density([0.1, 0.1], 0.0, &p).is_err());
        assert!(prox_density([f64::NAN, 0.1], 1.0, &p).is_err());
    }

    #[test]
    fn pressure_field_examples() {
        let g = Grid2D::new(3, 3, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let rho = DensityPair::new(ScalarField::constant(g, 0.25), ScalarField::constant(g, 0.25))
            .unwrap();
        let mut spec = EnergySpec {
            v1: ScalarField::zeros(g),
            v2: ScalarField::zeros(g),
            eps: 0.0,
            congestion: Congestion::PorousMedium { m: 2.0 },
            alpha: [1.0, 1.0],
        };
        let p = pressure_field(&rho, &spec, None).unwrap();
        assert!(p.values.iter().all(|v| (v - 1.0).abs() < 1e-14));

        spec.congestion = Congestion::Hard;
        assert!(matches!(pressure_field(&rho, &spec, None), Err(Error::State(_))));
        // interior state: the prox multipliers vanish
        let mult: Vec<f64> = rho
            .rho1
            .values
            .iter()
            .map(|&v| {
                prox_density([v, v], 0.5, &spec.at(0)).unwrap().pressure
            })
            .collect();
        let mult = ScalarField::new(g, mult).unwrap();
        let p = pressure_field(&rho, &spec, Some(&mult)).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        // saturated cell from the projection example
        let sat = prox_density([0.8, 0.8], 0.5, &spec.at(0)).unwrap();
        let mut mult = ScalarField::zeros(g);
        mult.values[4] = sat.pressure;
        let p = pressure_field(&rho, &spec, Some(&mult)).unwrap();
        assert!((p.values[4] - 0.6).abs() < 1e-13);
    }

    fn any_point() -> impl Strategy<Value = PointEnergy> {
        (
            prop_oneof![Just(0.0), Just(0.01), Just(0.1)],
            prop_oneof![
                Just(Congestion::Hard),
                Just(Congestion::PorousMedium { m: 1.0 }),
                Just(Congestion::PorousMedium { m: 2.0 }),
                Just(Congestion::PorousMedium { m: 50.0 }),
            ],
            prop_oneof![Just([1.0, 1.0]), Just([1.0, 2.0])],
            -1.0f64..1.0,
            -1.0f64..1.0,
        )
            .prop_map(|(eps, congestion, alpha, v0, v1)| PointEnergy {
                v: [v0, v1],
                eps,
                congestion,
                alpha,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn prox_kkt_and_minimality(
            p in any_point(),
            s0 in -0.5f64..2.0, s1 in -0.5f64..2.0,
            lam in 1e-3f64..1.0,
            q0 in 0.0f64..2.0, q1 in 0.0f64..2.0,
        ) {
            let r = prox_density([s0, s1], lam, &p).unwrap();
            prop_assert!(r.residual <= 1e-11, "{:?}", r);
            let log_pressure = matches!(p.congestion, Congestion::PorousMedium { m } if m == 1.0);
            prop_assert!(r.pressure >= 0.0 || log_pressure);
            let z = p.alpha[0] * r.rho[0] + p.alpha[1] * r.rho[1];
            let mut q = [q0, q1];
            if p.congestion.is_hard() {
                prop_assert!(z <= 1.0 + 1e-11);
                prop_assert!((r.pressure * (1.0 - z)).abs() <= 1e-9);
                let zq = p.alpha[0] * q[0] + p.alpha[1] * q[1];
                if zq > 1.0 { q = [q[0] / zq, q[1] / zq]; }
            }
            let best = prox_objective(r.rho, [s0, s1], lam, &p);
            prop_assert!(best <= prox_objective(q, [s0, s1], lam, &p) + 1e-12);
        }

        #[test]
        fn prox_is_nonexpansive(
            p in any_point(),
            s in prop::array::uniform4(-0.5f64..2.0),
            lam in 1e-3f64..1.0,
        ) {
            let a = prox_density([s[0], s[1]], lam, &p).unwrap().rho;
            let b = prox_density([s[2], s[3]], lam, &p).unwrap().rho;
            let d_out = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            let d_in = ((s[0] - s[2]).powi(2) + (s[1] - s[3]).powi(2)).sqrt();
            prop_assert!(d_out <= d_in + 1e-12);
        }
    }
}
