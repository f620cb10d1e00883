use std::io::Write;

use anyhow::{Context, Result};
use platonet::analytic::{self, ordered_limit, Convention};
use platonet::design::{
    design_sweep, solve_with_rule, sweep_values, DesignPoint, JGrid, SweepParameter, TargetRule,
    UNITY_FALLBACK_FRACTION,
};
use platonet::dynamics::{self, IntegrateOptions, NetworkSpec, NoiseRates};
use platonet::geometry::{build_solid, coupling_matrix};
use platonet::reduced::{reduced_integrate, ReducedSpec, ReducedState};
use platonet::symmetry;
use platonet::verify::{run_verify, select, VerifyOptions};
use serde_json::json;

use crate::args::*;
use crate::output::{num, opt, sink, Table};

/// A semantic problem with the arguments, reported like a parse error.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Geometry(a) => emit(&a.common, geometry(&a)?),
        Command::Simulate(a) => emit(&a.common, simulate(&a)?),
        Command::Quotient(a) => emit(&a.common, quotient(&a)?),
        Command::Reduced(a) => emit(&a.common, reduced(&a)?),
        Command::Steady(a) => emit(&a.common, steady(&a)?),
        Command::Design(a) => emit(&a.common, design(&a)?),
        Command::Verify(a) => verify(&a),
    }
}

fn emit(common: &CommonArgs, table: Table) -> Result<()> {
    let mut out = sink(common.output.as_deref())?;
    table.write(common.format, &mut out)?;
    out.flush()?;
    Ok(())
}

fn rates(r: &RateArgs) -> Result<NoiseRates> {
    Ok(NoiseRates::new(r.gamma, r.gamma_diss, r.gamma_sink)?)
}

fn geometry(a: &GeometryArgs) -> Result<Table> {
    let solid = build_solid(a.solid.solid);
    let c = coupling_matrix(&solid, a.solid.coupling_mode, a.solid.v);
    let n = solid.n();
    let mut t = Table::new(["i", "j", "r_ij", "J_ij"]);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            t.push(vec![
                (i + 1).to_string(),
                (j + 1).to_string(),
                num(solid.distance(i, j)),
                num(c.get(i, j)),
            ]);
            pairs.push(json!({"i": i + 1, "j": j + 1, "r_ij": solid.distance(i, j), "J_ij": c.get(i, j)}));
        }
    }
    let adjacency: Vec<Vec<usize>> = (0..n).map(|i| solid.neighbors(i).map(|k| k + 1).collect()).collect();
    let json = json!({
        "solid": solid.kind.name(),
        "coupling_mode": a.solid.coupling_mode.to_string(),
        "v": a.solid.v,
        "N": n,
        "N_c": solid.coordination_number(),
        "edge_length": solid.edge_length,
        "vertices": solid.vertices,
        "adjacency": adjacency,
        "couplings": pairs,
    });
    Ok(t.with_json(json))
}

fn network_spec(solid: &SolidArgs, r: &RateArgs, p: &PlacementArgs) -> Result<NetworkSpec> {
    let mut spec = NetworkSpec::standard(solid.solid, solid.coupling_mode, solid.v, rates(r)?);
    let n = spec.n();
    if let Some(s) = p.sink_site {
        if s == 0 || s > n {
            return usage(format!(
                "--sink-site {s} is out of range 1..={n} for the {}",
                solid.solid
            ));
        }
        spec = spec.with_sink(s - 1);
    }
    if let Some(init) = &p.init {
        if let Some(&(s, _)) = init.0.iter().find(|(s, _)| *s > n) {
            return usage(format!(
                "--init site {s} is out of range 1..={n} for the {}",
                solid.solid
            ));
        }
        spec = spec.with_initial(init.0.iter().map(|&(s, p)| (s - 1, p)).collect());
    }
    Ok(spec)
}

fn simulate(a: &SimulateArgs) -> Result<Table> {
    if a.stride > a.t_end {
        return usage(format!("--stride {} exceeds --t-end {}", a.stride, a.t_end));
    }
    let spec = network_spec(&a.solid, &a.rates, &a.placement)?;
    let n = spec.n();
    let traj = dynamics::integrate(&spec.network()?, a.t_end, &IntegrateOptions::with_stride(a.stride))?;
    let mut headers = vec!["t".to_string(), "Gamma_t".to_string()];
    headers.extend((1..=n).map(|i| format!("rho_{i}{i}")));
    headers.extend(["rho_env", "rho_target", "trace_error"].map(String::from));
    let mut t = Table::new(headers);
    for s in &traj.samples {
        let mut row = vec![num(s.t), num(s.t * traj.gamma_sink)];
        row.extend(s.populations().into_iter().map(num));
        row.extend([num(s.rho_env), num(s.rho_target), num(s.trace_error())]);
        t.push(row);
    }
    Ok(t)
}

fn quotient(a: &QuotientArgs) -> Result<Table> {
    let spec = network_spec(&a.solid, &a.rates, &a.placement)?;
    let map = symmetry::discover_quotient(&spec)
        .with_context(|| format!("no FCN quotient for the {} ({})", a.solid.solid, a.solid.coupling_mode))?;
    let report = match a.check_t_end {
        Some(t_end) => Some(symmetry::verify_equivalence(
            &spec,
            &map,
            t_end,
            &IntegrateOptions::default(),
        )?),
        None => None,
    };
    let deviation = report.map(|r| r.max_deviation());
    let mut t = Table::new([
        "block",
        "sites",
        "size",
        "sink_block",
        "effective_J",
        "self_coupling",
        "spread",
        "max_deviation",
    ]);
    let groups: Vec<Vec<usize>> = map.groups.iter().map(|g| g.iter().map(|p| p + 1).collect()).collect();
    for (b, g) in groups.iter().enumerate() {
        t.push(vec![
            (b + 1).to_string(),
            g.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "),
            g.len().to_string(),
            (b == map.sink_block).to_string(),
            num(map.effective_j),
            num(map.self_coupling),
            num(map.spread),
            opt(deviation),
        ]);
    }
    let json = json!({
        "solid": a.solid.solid.name(),
        "coupling_mode": a.solid.coupling_mode.to_string(),
        "groups": groups,
        "sink_block": map.sink_block + 1,
        "N_c": map.block_count(),
        "effective_J": map.effective_j,
        "self_coupling": map.self_coupling,
        "spread": map.spread,
        "equivalence": report,
    });
    Ok(t.with_json(json))
}

fn reduced(a: &ReducedArgs) -> Result<Table> {
    if a.stride > a.t_end {
        return usage(format!("--stride {} exceeds --t-end {}", a.stride, a.t_end));
    }
    let mut spec = ReducedSpec::new(a.j, a.nc, rates(&a.rates)?);
    spec.initial = ReducedState {
        lambda: a.lambda0,
        x: a.x0,
        y: a.y0,
        rho_nn: a.rho_nn0,
        rho_env: 0.0,
        rho_target: 0.0,
    };
    let traj = reduced_integrate(&spec, a.t_end, &IntegrateOptions::with_stride(a.stride))?;
    let mut headers = vec!["t", "Gamma_t"];
    headers.extend(ReducedState::NAMES);
    let mut t = Table::new(headers);
    for (time, s) in &traj.samples {
        let mut row = vec![num(*time), num(time * spec.rates.gamma_sink)];
        row.extend(s.to_array().map(num));
        t.push(row);
    }
    Ok(t)
}

fn range(r: &SweepRange, what: &str) -> Result<Vec<f64>> {
    let (Some(from), Some(to)) = (r.from, r.to) else {
        return usage(format!("{what} needs both --from and --to"));
    };
    if r.points == 0 {
        return usage("--points must be at least 1");
    }
    if !(to > from) && r.points > 1 {
        return usage(format!("--to {to} must exceed --from {from}"));
    }
    if r.log && from <= 0.0 {
        return usage(format!("--log needs a positive --from, got {from}"));
    }
    Ok(sweep_values(from, to, r.points, r.log)?)
}

fn steady(a: &SteadyArgs) -> Result<Table> {
    let base = rates(&a.rates)?;
    let spec = ReducedSpec::new(a.j, a.nc, base);
    if a.sweep {
        if a.limit.is_some() {
            return usage("--sweep and --limit cannot be combined");
        }
        let mut t = Table::new(["gamma", "final_value"]);
        for g in range(&a.range, "--sweep")? {
            if g < 0.0 {
                return usage(format!("dephasing rate {g} is negative"));
            }
            let mut s = spec;
            s.rates.gamma = g;
            t.push(vec![num(g), num(analytic::final_value(&s)?)]);
        }
        return Ok(t);
    }
    if let Some(order) = a.limit {
        let value = ordered_limit(&spec, order)?;
        let mut t = Table::new(["J", "Nc", "Gamma", "limit", "final_value"]);
        t.push(vec![
            num(a.j),
            a.nc.to_string(),
            num(base.gamma_sink),
            order.to_string(),
            num(value),
        ]);
        return Ok(t);
    }
    if base.gamma == 0.0 && base.gamma_diss == 0.0 {
        return usage("the noiseless steady state depends on how the rates vanish; pass --limit gamma-first or --limit diss-first");
    }
    let fv = analytic::final_value_checked(&spec)?;
    let mut t = Table::new([
        "J",
        "Nc",
        "gamma",
        "Gamma_diss",
        "Gamma",
        "final_value",
        "extrapolated",
        "residual",
    ]);
    t.push(vec![
        num(a.j),
        a.nc.to_string(),
        num(base.gamma),
        num(base.gamma_diss),
        num(base.gamma_sink),
        num(fv.value),
        num(fv.extrapolated),
        num(fv.residual),
    ]);
    Ok(t)
}

fn point_cells(p: &DesignPoint) -> Vec<String> {
    vec![
        opt(p.j_solution),
        p.attainable.to_string(),
        num(p.target),
        num(p.best_j),
        num(p.best_value),
        num(p.residual),
        p.fallback.to_string(),
    ]
}

const POINT_COLUMNS: [&str; 7] = [
    "J_star",
    "attainable",
    "target",
    "best_J",
    "best_value",
    "residual",
    "fallback",
];

fn design(a: &DesignArgs) -> Result<Table> {
    let base = rates(&a.rates)?;
    let rule = match a.target {
        TargetArg::Value(v) => TargetRule::Fixed(v),
        TargetArg::Max => TargetRule::FractionOfMax(UNITY_FALLBACK_FRACTION),
        TargetArg::Unity => TargetRule::Unity,
    };
    if a.j_max <= a.j_min || a.per_decade == 0 {
        return usage("the J grid needs --j-min < --j-max and --per-decade > 0");
    }
    let grid = JGrid {
        from: a.j_min,
        to: a.j_max,
        per_decade: a.per_decade,
    };
    let Some(parameter) = a.sweep else {
        let p = solve_with_rule(&base, a.nc, rule, &grid)?;
        let mut t = Table::new(POINT_COLUMNS.iter().copied().chain(["roots"]));
        let mut row = point_cells(&p);
        row.push(p.roots.iter().map(|r| num(*r)).collect::<Vec<_>>().join(" "));
        t.push(row);
        return Ok(t.with_json(serde_json::to_value(&p)?));
    };
    let values = range(&a.range, "--sweep")?;
    if parameter == SweepParameter::GammaSink && values.iter().any(|&v| v <= 0.0) {
        return usage("sink rates in a Gamma sweep must be positive");
    }
    if values.iter().any(|&v| v < 0.0) {
        return usage(format!("{parameter} values must be non-negative"));
    }
    let curve = design_sweep(parameter, &values, base, a.nc, rule, &grid)?;
    let mut t = Table::new(["swept_value"].into_iter().chain(POINT_COLUMNS).chain(["error"]));
    for e in &curve.entries {
        let mut row = vec![num(e.value)];
        match &e.point {
            Ok(p) => {
                row.extend(point_cells(p));
                row.push(String::new());
            }
            Err(msg) => {
                row.extend(std::iter::repeat(String::new()).take(POINT_COLUMNS.len()));
                row.push(msg.clone());
            }
        }
        t.push(row);
    }
    if curve.diagnostics.failures > 0 {
        eprintln!(
            "warning: {} of {} sweep points failed",
            curve.diagnostics.failures,
            curve.entries.len()
        );
    }
    Ok(t.with_json(json!({
        "parameter": parameter.to_string(),
        "Nc": a.nc,
        "entries": curve.entries.iter().map(|e| json!({
            "swept_value": e.value,
            "point": e.point.as_ref().ok(),
            "error": e.point.as_ref().err(),
        })).collect::<Vec<_>>(),
        "diagnostics": curve.diagnostics,
    })))
}

fn verify(a: &VerifyArgs) -> Result<()> {
    let checks = select(a.filter.as_deref());
    if checks.is_empty() {
        return usage(format!(
            "--filter '{}' matches no check",
            a.filter.as_deref().unwrap_or("")
        ));
    }
    let opts = VerifyOptions {
        convention: match a.perturb {
            Some(Perturbation::GammaC) => Convention::PerturbedGammaC,
            None => Convention::Verified,
        },
    };
    let report = run_verify(&checks, &opts);
    let mut out = sink(a.common.output.as_deref())?;
    match a.common.format {
        Format::Csv => out.write_all(report.render().as_bytes())?,
        Format::Json => {
            let outcomes: Vec<_> = report
                .outcomes
                .iter()
                .map(|o| json!({"id": o.id, "name": o.name, "passed": o.passed, "detail": o.detail}))
                .collect();
            serde_json::to_writer_pretty(&mut out, &outcomes)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    if report.all_passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failed().iter().map(|o| o.name).collect();
        anyhow::bail!("failed checks: {}", names.join(", "))
    }
}
