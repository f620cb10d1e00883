//! Self-verification suite: the acceptance checks behind `platonet verify`.
//!
//! Each check prints a deterministic one-line detail; wall-clock budgets
//! only enter the pass/fail decision, never the text.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{self, Convention, LimitOrder};
use crate::design::{self, JGrid, SweepParameter, TargetRule};
use crate::dynamics::{self, IntegrateOptions, NetworkSpec, NoiseRates, Trajectory};
use crate::geometry::{CouplingMode, SolidKind};
use crate::reduced::{self, ReducedSpec};
use crate::symmetry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckInfo {
    pub id: u8,
    pub name: &'static str,
}

pub const CHECKS: [CheckInfo; 10] = [
    CheckInfo {
        id: 1,
        name: "noiseless-steady-sink",
    },
    CheckInfo {
        id: 2,
        name: "octahedron-constant-sites",
    },
    CheckInfo {
        id: 3,
        name: "conservation",
    },
    CheckInfo {
        id: 4,
        name: "quotient-equivalence",
    },
    CheckInfo {
        id: 5,
        name: "analytic-firewall",
    },
    CheckInfo {
        id: 6,
        name: "steady-time-vs-laplace",
    },
    CheckInfo {
        id: 7,
        name: "limit-ordering",
    },
    CheckInfo {
        id: 8,
        name: "design-trends",
    },
    CheckInfo {
        id: 9,
        name: "solver-round-trip",
    },
    CheckInfo {
        id: 10,
        name: "determinism",
    },
];

const NOISELESS_SOLIDS: [(SolidKind, f64); 4] = [
    (SolidKind::Octahedron, 0.25),
    (SolidKind::Cube, 1.0 / 3.0),
    (SolidKind::Icosahedron, 0.2),
    (SolidKind::Dodecahedron, 1.0 / 3.0),
];
const NOISELESS_T_END: f64 = 200.0;
const NOISELESS_BUDGET: Duration = Duration::from_secs(5);
const LAPLACE_BUDGET: Duration = Duration::from_secs(10);
const SAMPLE_STRIDE: f64 = 0.05;
const GRID: [f64; 3] = [0.1, 1.0, 10.0];
const NCS: [usize; 3] = [4, 5, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    /// Closed-form convention under test; anything but `Verified` is a
    /// negative control that must make the analytic checks fail.
    pub convention: Convention,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{:>2}  {:<26} {}  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failed(&self) -> Vec<&CheckOutcome> {
        self.outcomes.iter().filter(|o| !o.passed).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            out.push_str(&o.line());
            out.push('\n');
        }
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        out.push_str(&format!("{passed}/{} checks passed\n", self.outcomes.len()));
        out
    }
}

/// Checks whose name contains `filter` (all when `None`).
pub fn select(filter: Option<&str>) -> Vec<CheckInfo> {
    CHECKS
        .iter()
        .copied()
        .filter(|c| filter.map_or(true, |f| c.name.contains(f) || c.id.to_string() == f))
        .collect()
}

/// Shared, lazily computed runs so a full `verify` integrates each network
/// once.
#[derive(Default)]
pub struct Context {
    noiseless: OnceLock<Result<(Vec<Trajectory>, Duration), String>>,
}

impl Context {
    fn noiseless(&self) -> Result<&(Vec<Trajectory>, Duration), String> {
        self.noiseless
            .get_or_init(|| {
                let start = Instant::now();
                let runs: Result<Vec<Trajectory>, String> = NOISELESS_SOLIDS
                    .par_iter()
                    .map(|&(kind, _)| {
                        let spec = noiseless_spec(kind, CouplingMode::AllPairs);
                        let net = spec.network().map_err(|e| e.to_string())?;
                        dynamics::integrate(&net, NOISELESS_T_END, &IntegrateOptions::with_stride(SAMPLE_STRIDE))
                            .map_err(|e| e.to_string())
                    })
                    .collect();
                runs.map(|r| (r, start.elapsed()))
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn noiseless_spec(kind: SolidKind, mode: CouplingMode) -> NetworkSpec {
    NetworkSpec::standard(kind, mode, 1.0, NoiseRates::noiseless(1.0))
}

pub fn run_verify(checks: &[CheckInfo], opts: &VerifyOptions) -> VerifyReport {
    let ctx = Context::default();
    VerifyReport {
        outcomes: checks.iter().map(|c| run_check_in(&ctx, c.id, opts)).collect(),
    }
}

pub fn run_check(id: u8, opts: &VerifyOptions) -> CheckOutcome {
    run_check_in(&Context::default(), id, opts)
}

fn run_check_in(ctx: &Context, id: u8, opts: &VerifyOptions) -> CheckOutcome {
    let info = CHECKS
        .iter()
        .find(|c| c.id == id)
        .unwrap_or_else(|| panic!("no check with id {id}"));
    let result = match id {
        1 => noiseless_steady_sink(ctx),
        2 => octahedron_constant_sites(ctx),
        3 => conservation(ctx),
        4 => quotient_equivalence(),
        5 => analytic_firewall(opts.convention),
        6 => steady_time_vs_laplace(opts.convention),
        7 => limit_ordering(),
        8 => design_trends(),
        9 => solver_round_trip(),
        _ => determinism(opts),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        id,
        name: info.name,
        passed,
        detail,
    }
}

type CheckResult = Result<(bool, String), String>;

fn noiseless_steady_sink(ctx: &Context) -> CheckResult {
    let (runs, elapsed) = ctx.noiseless()?;
    let mut ok = *elapsed < NOISELESS_BUDGET;
    let mut parts = Vec::new();
    for (traj, &(kind, want)) in runs.iter().zip(&NOISELESS_SOLIDS) {
        let avg = traj.time_average(100.0, 200.0, |s| s.rho_target);
        let good = (avg - want).abs() <= 1e-3;
        ok &= good;
        parts.push(format!(
            "{kind} {avg:.6} (want {want:.6}){}",
            if good { "" } else { " !" }
        ));
    }
    parts.push(format!(
        "runtime {}",
        if *elapsed < NOISELESS_BUDGET {
            "within 5 s"
        } else {
            "over 5 s"
        }
    ));
    Ok((ok, parts.join("; ")))
}

fn octahedron_constant_sites(ctx: &Context) -> CheckResult {
    let (runs, _) = ctx.noiseless()?;
    let traj = &runs[0];
    let spec = noiseless_spec(SolidKind::Octahedron, CouplingMode::AllPairs);
    let charged = spec.initial[0].0;
    // The two sites adjacent to both the sink and the charged site are
    // swapped by the mirror plane through those two sites.
    let pair: Vec<usize> = spec
        .solid
        .neighbors(spec.sink_site)
        .filter(|&p| spec.solid.adjacent(p, charged))
        .collect();
    if pair.len() != 2 {
        return Err(format!("expected two mirror sites, found {pair:?}"));
    }
    let mut worst = 0.0f64;
    for s in traj.samples.iter().filter(|s| s.t >= 20.0) {
        for &p in &pair {
            worst = worst.max((s.population(p) - 0.0625).abs());
        }
    }
    Ok((
        worst <= 2e-3,
        format!(
            "sites {} and {}: max |p − 0.0625| = {worst:.3e} over Γt ∈ [20, 200] (tol 2e-3)",
            pair[0] + 1,
            pair[1] + 1
        ),
    ))
}

fn conservation(ctx: &Context) -> CheckResult {
    let (runs, _) = ctx.noiseless()?;
    let mut worst = runs.iter().map(Trajectory::max_trace_error).fold(0.0, f64::max);
    let mut count: usize = runs.iter().map(|t| t.samples.len()).sum();
    let noisy = [
        (
            SolidKind::Cube,
            NoiseRates {
                gamma: 1.0,
                gamma_diss: 0.1,
                gamma_sink: 1.0,
            },
        ),
        (
            SolidKind::Icosahedron,
            NoiseRates {
                gamma: 0.5,
                gamma_diss: 0.2,
                gamma_sink: 2.0,
            },
        ),
    ];
    for (kind, rates) in noisy {
        let spec = NetworkSpec::standard(kind, CouplingMode::NearestNeighbor, 1.0, rates);
        let net = spec.network().map_err(|e| e.to_string())?;
        let traj = dynamics::integrate(&net, 20.0, &IntegrateOptions::with_stride(SAMPLE_STRIDE))
            .map_err(|e| e.to_string())?;
        worst = worst.max(traj.max_trace_error());
        count += traj.samples.len();
    }
    Ok((
        worst < 1e-9,
        format!("max |trace + rho_env + rho_target − 1| = {worst:.3e} over {count} samples (tol 1e-9)"),
    ))
}

fn quotient_equivalence() -> CheckResult {
    let expected = [
        (SolidKind::Octahedron, 5),
        (SolidKind::Cube, 4),
        (SolidKind::Icosahedron, 6),
        (SolidKind::Dodecahedron, 4),
    ];
    let results: Vec<(bool, String)> = expected
        .par_iter()
        .map(|&(kind, blocks)| {
            let spec = noiseless_spec(kind, CouplingMode::NearestNeighbor);
            match symmetry::discover_quotient(&spec) {
                Err(e) => (false, format!("{kind}: no FCN quotient ({e})")),
                Ok(map) => {
                    let count_ok = map.block_count() == blocks;
                    match symmetry::verify_equivalence(&spec, &map, 20.0, &IntegrateOptions::with_stride(SAMPLE_STRIDE))
                    {
                        Err(e) => (false, format!("{kind}: {e}")),
                        Ok(rep) => {
                            let dev = rep.max_deviation();
                            (
                                count_ok && dev < 1e-6,
                                format!(
                                    "{kind}: {} blocks (want {blocks}), max deviation {dev:.3e}",
                                    map.block_count()
                                ),
                            )
                        }
                    }
                }
            }
        })
        .collect();
    let ok = results.iter().all(|r| r.0);
    let detail = results.into_iter().map(|r| r.1).collect::<Vec<_>>().join("; ");
    Ok((ok, detail))
}

fn parameter_grid() -> Vec<ReducedSpec> {
    let mut out = Vec::with_capacity(243);
    for &nc in &NCS {
        for &g in &GRID {
            for &d in &GRID {
                for &k in &GRID {
                    for &j in &GRID {
                        let rates = NoiseRates {
                            gamma: g,
                            gamma_diss: d,
                            gamma_sink: k,
                        };
                        out.push(ReducedSpec::new(j, nc, rates));
                    }
                }
            }
        }
    }
    out
}

fn analytic_firewall(convention: Convention) -> CheckResult {
    let mut worst = 0.0f64;
    let mut count = 0;
    for spec in parameter_grid() {
        for s in [0.01, 0.1, 1.0, 10.0] {
            let direct = analytic::solve_laplace(&spec, s)
                .map_err(|e| e.to_string())?
                .state
                .rho_target;
            let closed = analytic::closed_form_target_with(&spec, s, convention).map_err(|e| e.to_string())?;
            worst = worst.max((closed - direct).abs() / direct.abs());
            count += 1;
        }
    }
    Ok((
        worst < 1e-9,
        format!("max relative gap {worst:.3e} over {count} evaluations (tol 1e-9)"),
    ))
}

fn steady_time_vs_laplace(convention: Convention) -> CheckResult {
    let start = Instant::now();
    let gaps: Result<Vec<f64>, String> = parameter_grid()
        .par_iter()
        .map(|spec| {
            let fv = analytic::final_value_with(spec, convention).map_err(|e| e.to_string())?;
            let t_end = 500.0 / spec.rates.gamma_sink;
            let traj = reduced::reduced_integrate(spec, t_end, &IntegrateOptions::with_stride(t_end))
                .map_err(|e| e.to_string())?;
            Ok((traj.last().1.rho_target - fv).abs())
        })
        .collect();
    let worst = gaps?.into_iter().fold(0.0, f64::max);
    let in_budget = start.elapsed() < LAPLACE_BUDGET;
    Ok((
        worst < 1e-4 && in_budget,
        format!(
            "max |final_value − rho_target(Γt=500)| = {worst:.3e} over 243 points (tol 1e-4); runtime {}",
            if in_budget { "within 10 s" } else { "over 10 s" }
        ),
    ))
}

fn limit_ordering() -> CheckResult {
    let mut ok = true;
    let mut parts = Vec::new();
    for nc in NCS {
        let spec = ReducedSpec::new(1.0, nc, NoiseRates::noiseless(1.0));
        let want = 1.0 / (nc as f64 - 1.0);
        let gf = analytic::ordered_limit(&spec, LimitOrder::GammaFirst).map_err(|e| e.to_string())?;
        let df = analytic::ordered_limit(&spec, LimitOrder::DissFirst).map_err(|e| e.to_string())?;
        ok &= (gf - want).abs() < 1e-6 && (df - 1.0).abs() < 1e-6;
        parts.push(format!("Nc={nc}: gamma-first {gf:.9} diss-first {df:.9}"));
    }
    Ok((ok, parts.join("; ")))
}

fn design_trends() -> CheckResult {
    let base = NoiseRates {
        gamma: 1.0,
        gamma_diss: 10.0,
        gamma_sink: 10.0,
    };
    let rule = TargetRule::FractionOfMax(design::UNITY_FALLBACK_FRACTION);
    let grid = JGrid::default();
    let gammas = design::sweep_values(0.1, 100.0, 20, true).map_err(|e| e.to_string())?;
    let curve =
        design::design_sweep(SweepParameter::Gamma, &gammas, base, 4, rule, &grid).map_err(|e| e.to_string())?;
    let gamma_ok = curve.diagnostics.unsolved == 0 && curve.diagnostics.j_star_nondecreasing;
    let mut nc_ok = true;
    let mut nc_parts = Vec::new();
    for g in [0.1, 1.0, 10.0, 100.0] {
        let rates = NoiseRates { gamma: g, ..base };
        let c = design::design_sweep(SweepParameter::Nc, &[4.0, 5.0, 6.0], rates, 4, rule, &grid)
            .map_err(|e| e.to_string())?;
        nc_ok &= c.diagnostics.unsolved == 0 && c.diagnostics.j_star_nonincreasing;
        let stars: Vec<String> = c.j_stars().iter().map(|j| fmt_opt(*j)).collect();
        nc_parts.push(format!("gamma={g}: {}", stars.join(" ≥ ")));
    }
    let stars = curve.j_stars();
    Ok((
        gamma_ok && nc_ok,
        format!(
            "J* over gamma ∈ [0.1, 100] {} ({} → {}); N_c ordering {} [{}]",
            if gamma_ok { "nondecreasing" } else { "NOT nondecreasing" },
            fmt_opt(stars[0]),
            fmt_opt(stars[stars.len() - 1]),
            if nc_ok { "holds" } else { "violated" },
            nc_parts.join("; ")
        ),
    ))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.6e}"))
}

/// Seed of the round-trip parameter draws.
pub const ROUND_TRIP_SEED: u64 = 20_240_601;

fn solver_round_trip() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(ROUND_TRIP_SEED);
    let mut draws = Vec::with_capacity(100);
    for _ in 0..100 {
        let rates = NoiseRates {
            gamma: 10f64.powf(rng.gen_range(-1.0..1.0)),
            gamma_diss: 10f64.powf(rng.gen_range(-2.0..1.0)),
            gamma_sink: 10f64.powf(rng.gen_range(-1.0..1.0)),
        };
        let nc = NCS[rng.gen_range(0..NCS.len())];
        let j0 = 10f64.powf(rng.gen_range(-2.0..2.0));
        draws.push((rates, nc, j0));
    }
    let residuals: Result<Vec<f64>, String> = draws
        .par_iter()
        .map(|&(rates, nc, j0)| {
            let target = analytic::final_value(&ReducedSpec::new(j0, nc, rates)).map_err(|e| e.to_string())?;
            let p = design::solve_j(&rates, nc, target, &JGrid::default()).map_err(|e| e.to_string())?;
            Ok(if p.attainable { p.residual } else { f64::INFINITY })
        })
        .collect();
    let residuals = residuals?;
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let misses = residuals.iter().filter(|r| !(**r < 1e-8)).count();
    Ok((
        misses == 0,
        format!(
            "{} of 100 draws solved; max residual {worst:.3e} (tol 1e-8)",
            100 - misses
        ),
    ))
}

fn determinism(opts: &VerifyOptions) -> CheckResult {
    let once = || -> Result<String, String> {
        let mut text = String::new();
        for id in [5, 7, 8, 9] {
            text.push_str(&run_check(id, opts).line());
            text.push('\n');
        }
        for parameter in [SweepParameter::Gamma, SweepParameter::GammaSink] {
            let values = design::sweep_values(0.1, 100.0, 12, true).map_err(|e| e.to_string())?;
            let base = NoiseRates {
                gamma: 1.0,
                gamma_diss: 10.0,
                gamma_sink: 10.0,
            };
            let rule = TargetRule::FractionOfMax(design::UNITY_FALLBACK_FRACTION);
            let curve = design::design_sweep(parameter, &values, base, 4, rule, &JGrid::default())
                .map_err(|e| e.to_string())?;
            text.push_str(&format!("{curve:?}\n"));
        }
        Ok(text)
    };
    let first = once()?;
    let second = once()?;
    Ok((
        first == second,
        format!(
            "two runs of checks 5, 7, 8, 9 and two design sweeps {} ({} bytes)",
            if first == second { "identical" } else { "DIFFER" },
            first.len()
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_selects_by_name_and_id() {
        let steady: Vec<u8> = select(Some("steady")).iter().map(|c| c.id).collect();
        assert_eq!(steady, vec![1, 6]);
        assert_eq!(select(Some("7"))[0].name, "limit-ordering");
        assert_eq!(select(None).len(), 10);
        assert!(select(Some("nothing-matches")).is_empty());
    }

    #[test]
    fn perturbed_convention_fails_firewall() {
        let o = run_check(
            5,
            &VerifyOptions {
                convention: Convention::PerturbedGammaC,
            },
        );
        assert!(!o.passed, "{}", o.line());
        assert!(run_check(5, &VerifyOptions::default()).passed);
    }

    #[test]
    fn report_renders_summary() {
        let r = VerifyReport {
            outcomes: vec![CheckOutcome {
                id: 7,
                name: "limit-ordering",
                passed: true,
                detail: "ok".into(),
            }],
        };
        assert!(r.all_passed());
        assert!(r.render().ends_with("1/1 checks passed\n"));
    }
}
