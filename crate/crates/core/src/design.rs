//! Choosing the FCN coupling `J` that delivers a target steady-state sink
//! population, and parameter sweeps of that choice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, AnalyticError};
use crate::dynamics::NoiseRates;
use crate::reduced::ReducedSpec;

/// Bisection stops once `|final_value(J) − target|` is below this.
pub const VALUE_TOLERANCE: f64 = 1e-8;
/// Relative bracket width at which bisection stops.
pub const J_TOLERANCE: f64 = 1e-10;
/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "PLATONET_THREADS";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("target {0} must lie in (0, 1]")]
    InvalidTarget(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

/// Logarithmic grid of coupling values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JGrid {
    pub from: f64,
    pub to: f64,
    pub per_decade: usize,
}

impl Default for JGrid {
    fn default() -> Self {
        JGrid {
            from: 1e-3,
            to: 1e6,
            per_decade: 60,
        }
    }
}

impl JGrid {
    pub fn points(&self) -> Result<Vec<f64>, DesignError> {
        if !(self.from > 0.0 && self.to > self.from && self.to.is_finite() && self.per_decade > 0) {
            return Err(DesignError::InvalidGrid(format!(
                "need 0 < from < to and per_decade > 0, got {self:?}"
            )));
        }
        let (a, b) = (self.from.log10(), self.to.log10());
        let count = ((b - a) * self.per_decade as f64 - 1e-9).ceil() as usize;
        let mut out: Vec<f64> = (0..count)
            .map(|i| 10f64.powf(a + i as f64 / self.per_decade as f64))
            .collect();
        out[0] = self.from;
        out.push(self.to);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanProfile {
    /// `(J, final_value)` on the grid.
    pub points: Vec<(f64, f64)>,
    /// Grid index of the largest value.
    pub max_index: usize,
    /// Arg-max and maximum, refined between grid points when interior.
    pub best_j: f64,
    pub best_value: f64,
}

fn evaluate(rates: &NoiseRates, nc: usize, j: f64) -> Result<f64, DesignError> {
    Ok(analytic::final_value(&ReducedSpec::new(j, nc, *rates))?)
}

pub fn scan_j(rates: &NoiseRates, nc: usize, grid: &JGrid) -> Result<ScanProfile, DesignError> {
    let js = grid.points()?;
    let mut points = Vec::with_capacity(js.len());
    for j in js {
        points.push((j, evaluate(rates, nc, j)?));
    }
    let mut max_index = 0;
    for (i, p) in points.iter().enumerate() {
        if p.1 > points[max_index].1 {
            max_index = i;
        }
    }
    let (mut best_j, mut best_value) = points[max_index];
    if max_index > 0 && max_index + 1 < points.len() {
        let (j, v) = golden_max(
            |lj| evaluate(rates, nc, lj.exp()),
            points[max_index - 1].0.ln(),
            points[max_index + 1].0.ln(),
        )?;
        if v > best_value {
            best_j = j.exp();
            best_value = v;
        }
    }
    Ok(ScanProfile {
        points,
        max_index,
        best_j,
        best_value,
    })
}

fn golden_max(f: impl Fn(f64) -> Result<f64, DesignError>, mut a: f64, mut b: f64) -> Result<(f64, f64), DesignError> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}

/// How the target population of a design point is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetRule {
    Fixed(f64),
    /// A fraction of the point's maximum attainable value.
    FractionOfMax(f64),
    /// Unity, or 0.999 of the maximum when unity is out of reach.
    Unity,
}

pub const UNITY_FALLBACK_FRACTION: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignPoint {
    pub gamma: f64,
    pub gamma_diss: f64,
    pub gamma_sink: f64,
    pub nc: usize,
    pub target: f64,
    /// Smallest coupling reaching the target.
    pub j_solution: Option<f64>,
    /// Every root found, ascending.
    pub roots: Vec<f64>,
    pub attainable: bool,
    pub best_j: f64,
    pub best_value: f64,
    /// `|final_value(J*) − target|` if attainable, else `target − best_value`.
    pub residual: f64,
    /// Set when [`TargetRule::Unity`] fell back to a fraction of the maximum.
    pub fallback: bool,
}

fn bisect(rates: &NoiseRates, nc: usize, target: f64, mut lo: f64, mut hi: f64) -> Result<(f64, f64), DesignError> {
    let mut f_lo = evaluate(rates, nc, lo)? - target;
    let mut f_hi = evaluate(rates, nc, hi)? - target;
    while (hi - lo) > J_TOLERANCE * hi {
        let mid = (lo * hi).sqrt();
        let f_mid = evaluate(rates, nc, mid)? - target;
        if f_mid == 0.0 {
            return Ok((mid, 0.0));
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    Ok(if f_lo.abs() <= f_hi.abs() {
        (lo, f_lo.abs())
    } else {
        (hi, f_hi.abs())
    })
}

fn solve_on_profile(
    rates: &NoiseRates,
    nc: usize,
    target: f64,
    profile: &ScanProfile,
) -> Result<(Vec<f64>, f64), DesignError> {
    let mut pts = profile.points.clone();
    if profile.best_j != pts[profile.max_index].0 {
        pts.push((profile.best_j, profile.best_value));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let mut roots = Vec::new();
    let mut worst = 0.0f64;
    let mut prev_root = false;
    for i in 0..pts.len() {
        let f = pts[i].1 - target;
        if f.abs() <= VALUE_TOLERANCE {
            if !prev_root {
                roots.push(pts[i].0);
                worst = worst.max(f.abs());
            }
            prev_root = true;
            continue;
        }
        if i > 0 && !prev_root {
            let g = pts[i - 1].1 - target;
            if (g < 0.0) != (f < 0.0) {
                let (j, r) = bisect(rates, nc, target, pts[i - 1].0, pts[i].0)?;
                roots.push(j);
                worst = worst.max(r);
            }
        }
        prev_root = false;
    }
    Ok((roots, worst))
}

/// Finds every coupling whose steady sink population equals `target`.
pub fn solve_j(rates: &NoiseRates, nc: usize, target: f64, grid: &JGrid) -> Result<DesignPoint, DesignError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(DesignError::InvalidTarget(target));
    }
    let profile = scan_j(rates, nc, grid)?;
    point_from_profile(rates, nc, target, &profile, false)
}

fn point_from_profile(
    rates: &NoiseRates,
    nc: usize,
    target: f64,
    profile: &ScanProfile,
    fallback: bool,
) -> Result<DesignPoint, DesignError> {
    let (roots, worst) = solve_on_profile(rates, nc, target, profile)?;
    let attainable = !roots.is_empty() && worst < VALUE_TOLERANCE;
    let j_solution = if attainable { roots.first().copied() } else { None };
    let residual = match j_solution {
        Some(j) => (evaluate(rates, nc, j)? - target).abs(),
        None => target - profile.best_value,
    };
    Ok(DesignPoint {
        gamma: rates.gamma,
        gamma_diss: rates.gamma_diss,
        gamma_sink: rates.gamma_sink,
        nc,
        target,
        j_solution,
        roots,
        attainable,
        best_j: profile.best_j,
        best_value: profile.best_value,
        residual,
        fallback,
    })
}

pub fn solve_with_rule(
    rates: &NoiseRates,
    nc: usize,
    rule: TargetRule,
    grid: &JGrid,
) -> Result<DesignPoint, DesignError> {
    let profile = scan_j(rates, nc, grid)?;
    let (target, fallback) = match rule {
        TargetRule::Fixed(t) => (t, false),
        TargetRule::FractionOfMax(f) => (f * profile.best_value, false),
        TargetRule::Unity if profile.best_value >= 1.0 - VALUE_TOLERANCE => (1.0, false),
        TargetRule::Unity => (UNITY_FALLBACK_FRACTION * profile.best_value, true),
    };
    if !(target > 0.0 && target <= 1.0) {
        return Err(DesignError::InvalidTarget(target));
    }
    point_from_profile(rates, nc, target, &profile, fallback)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    Gamma,
    GammaDiss,
    GammaSink,
    Nc,
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParameter::Gamma => "gamma",
            SweepParameter::GammaDiss => "Gamma-diss",
            SweepParameter::GammaSink => "Gamma",
            SweepParameter::Nc => "Nc",
        })
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(SweepParameter::Gamma),
            "Gamma-diss" | "gamma-diss" => Ok(SweepParameter::GammaDiss),
            "Gamma" | "gamma-sink" => Ok(SweepParameter::GammaSink),
            "Nc" | "nc" => Ok(SweepParameter::Nc),
            other => Err(format!(
                "unknown sweep parameter '{other}' (expected gamma, Nc, Gamma or Gamma-diss)"
            )),
        }
    }
}

/// `points` values from `from` to `to`, evenly spaced in log or linear scale.
pub fn sweep_values(from: f64, to: f64, points: usize, log: bool) -> Result<Vec<f64>, DesignError> {
    if points == 0 || !from.is_finite() || !to.is_finite() || (log && (from <= 0.0 || to <= 0.0)) {
        return Err(DesignError::InvalidGrid(format!(
            "cannot build {points} {} points from {from} to {to}",
            if log { "log" } else { "linear" }
        )));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let step = |i: usize| i as f64 / (points - 1) as f64;
    Ok((0..points)
        .map(|i| match i {
            0 => from,
            _ if i == points - 1 => to,
            _ if log => 10f64.powf(from.log10() + step(i) * (to.log10() - from.log10())),
            _ => from + step(i) * (to - from),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub point: Result<DesignPoint, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepDiagnostics {
    pub j_star_nondecreasing: bool,
    pub j_star_nonincreasing: bool,
    /// Points that returned an error.
    pub failures: usize,
    /// Points without a coupling reaching their target, errors included.
    pub unsolved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignCurve {
    pub parameter: SweepParameter,
    pub entries: Vec<SweepEntry>,
    pub diagnostics: SweepDiagnostics,
}

impl DesignCurve {
    pub fn j_stars(&self) -> Vec<Option<f64>> {
        self.entries
            .iter()
            .map(|e| e.point.as_ref().ok().and_then(|p| p.j_solution))
            .collect()
    }
}

/// Thread pool sized by `PLATONET_THREADS` when set, else machine
/// parallelism.
pub fn sweep_pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// One design point per swept value. Per-point failures are recorded and
/// the sweep continues; output order follows `values`.
pub fn design_sweep(
    parameter: SweepParameter,
    values: &[f64],
    base: NoiseRates,
    nc: usize,
    rule: TargetRule,
    grid: &JGrid,
) -> Result<DesignCurve, DesignError> {
    if values.is_empty() {
        return Err(DesignError::InvalidGrid("empty sweep".into()));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DesignError::InvalidGrid(
            "sweep values must be strictly increasing".into(),
        ));
    }
    if parameter == SweepParameter::Nc && values.iter().any(|v| v.fract() != 0.0 || *v < 2.0) {
        return Err(DesignError::InvalidGrid("N_c values must be integers ≥ 2".into()));
    }
    let point = |v: f64| -> Result<DesignPoint, DesignError> {
        let mut rates = base;
        let mut n = nc;
        match parameter {
            SweepParameter::Gamma => rates.gamma = v,
            SweepParameter::GammaDiss => rates.gamma_diss = v,
            SweepParameter::GammaSink => rates.gamma_sink = v,
            SweepParameter::Nc => n = v as usize,
        }
        rates.validate().map_err(|e| DesignError::InvalidGrid(e.to_string()))?;
        solve_with_rule(&rates, n, rule, grid)
    };
    let entries: Vec<SweepEntry> = sweep_pool().install(|| {
        values
            .par_iter()
            .map(|&v| SweepEntry {
                value: v,
                point: point(v).map_err(|e| e.to_string()),
            })
            .collect()
    });
    let stars: Vec<f64> = entries
        .iter()
        .filter_map(|e| e.point.as_ref().ok().and_then(|p| p.j_solution))
        .collect();
    let slack = 1e-9;
    let diagnostics = SweepDiagnostics {
        j_star_nondecreasing: stars.windows(2).all(|w| w[1] >= w[0] * (1.0 - slack)),
        j_star_nonincreasing: stars.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack)),
        failures: entries.iter().filter(|e| e.point.is_err()).count(),
        unsolved: entries.len() - stars.len(),
    };
    Ok(DesignCurve {
        parameter,
        entries,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(g: f64, d: f64, k: f64) -> NoiseRates {
        NoiseRates::new(g, d, k).unwrap()
    }

    #[test]
    fn default_grid_shape() {
        let pts = JGrid::default().points().unwrap();
        assert_eq!(pts.len(), 541);
        assert_eq!(pts[0], 1e-3);
        assert_eq!(*pts.last().unwrap(), 1e6);
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn weak_coupling_end_transports_nothing() {
        let p = scan_j(&rates(1.0, 0.5, 1.0), 4, &JGrid::default()).unwrap();
        assert!(p.points[0].1 < 1e-5);
    }

    #[test]
    fn pure_dephasing_reaches_unity() {
        let p = scan_j(&rates(1.0, 0.0, 1.0), 4, &JGrid::default()).unwrap();
        assert!((p.best_value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn regularised_noiseless_profile_is_flat() {
        for nc in [4, 5, 6] {
            let p = scan_j(&rates(0.0, 1e-8, 1.0), nc, &JGrid::default()).unwrap();
            let want = 1.0 / (nc as f64 - 1.0);
            for &(j, v) in p.points.iter().filter(|(j, _)| *j >= 0.1) {
                assert!((v - want).abs() < 1e-6, "nc {nc} J {j}: {v}");
            }
        }
    }

    #[test]
    fn round_trip_recovers_target() {
        let r = rates(0.7, 0.2, 1.3);
        let target = analytic::final_value(&ReducedSpec::new(2.5, 5, r)).unwrap();
        let p = solve_j(&r, 5, target, &JGrid::default()).unwrap();
        assert!(p.attainable);
        assert!(p.roots.iter().any(|j| (j / 2.5 - 1.0).abs() < 1e-6));
        assert!(p.residual < VALUE_TOLERANCE);
        for &j in &p.roots {
            assert!((1e-3..=1e6).contains(&j));
        }
    }

    #[test]
    fn unreachable_target_reports_supremum() {
        let r = rates(1.0, 1.0, 1.0);
        let p = solve_j(&r, 4, 1.0, &JGrid::default()).unwrap();
        assert!(!p.attainable);
        assert!(p.j_solution.is_none());
        assert!(p.best_value < 1.0);
        assert!((p.residual - (1.0 - p.best_value)).abs() < 1e-15);
    }

    #[test]
    fn unity_rule_falls_back() {
        let r = rates(1.0, 10.0, 10.0);
        let p = solve_with_rule(&r, 4, TargetRule::Unity, &JGrid::default()).unwrap();
        assert!(p.fallback);
        assert!(p.attainable);
        assert!((p.target - UNITY_FALLBACK_FRACTION * p.best_value).abs() < 1e-15);
    }

    #[test]
    fn invalid_target_rejected() {
        let r = rates(1.0, 1.0, 1.0);
        assert_eq!(
            solve_j(&r, 4, 0.0, &JGrid::default()).unwrap_err(),
            DesignError::InvalidTarget(0.0)
        );
        assert!(solve_j(&r, 4, 1.5, &JGrid::default()).is_err());
    }

    #[test]
    fn sweep_values_are_exact_at_ends() {
        let v = sweep_values(0.1, 100.0, 20, true).unwrap();
        assert_eq!(v.len(), 20);
        assert_eq!((v[0], v[19]), (0.1, 100.0));
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(sweep_values(0.0, 1.0, 3, false).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(sweep_values(0.0, 1.0, 3, true).is_err());
    }

    #[test]
    fn sweep_rejects_unsorted_values() {
        let r = rates(1.0, 1.0, 1.0);
        let e = design_sweep(
            SweepParameter::Gamma,
            &[1.0, 0.5],
            r,
            4,
            TargetRule::Fixed(0.1),
            &JGrid::default(),
        );
        assert!(matches!(e, Err(DesignError::InvalidGrid(_))));
    }

    #[test]
    fn sweep_records_unsolved_and_failed_points() {
        let r = rates(1.0, 1.0, 1.0);
        let c = design_sweep(
            SweepParameter::Gamma,
            &[0.5, 1.0],
            r,
            4,
            TargetRule::Fixed(0.99),
            &JGrid::default(),
        )
        .unwrap();
        assert_eq!(c.entries.len(), 2);
        assert_eq!(c.diagnostics.failures, 0);
        assert_eq!(c.diagnostics.unsolved, 2);
        let bad = design_sweep(
            SweepParameter::GammaSink,
            &[0.0, 1.0],
            r,
            4,
            TargetRule::Fixed(0.1),
            &JGrid::default(),
        )
        .unwrap();
        assert_eq!(bad.diagnostics.failures, 1);
        assert!(bad.entries[0].point.is_err());
    }

    #[test]
    fn parameter_names_round_trip() {
        for p in [
            SweepParameter::Gamma,
            SweepParameter::GammaDiss,
            SweepParameter::GammaSink,
            SweepParameter::Nc,
        ] {
            assert_eq!(p.to_string().parse::<SweepParameter>().unwrap(), p);
        }
    }
}
