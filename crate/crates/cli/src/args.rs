use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use platonet::analytic::LimitOrder;
use platonet::design::SweepParameter;
use platonet::dynamics::NORMALIZATION_TOLERANCE;
use platonet::geometry::{CouplingMode, SolidKind};

#[derive(Debug, Parser)]
#[command(
    name = "platonet",
    version,
    about = "Excitation transport on noisy Platonic quantum networks",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Vertices, adjacency and coupling matrix of a solid.
    Geometry(GeometryArgs),
    /// Integrate the full network dynamics.
    Simulate(SimulateArgs),
    /// Group sites into the symbolic sites of the equivalent FCN.
    Quotient(QuotientArgs),
    /// Integrate the six-variable reduced model.
    Reduced(ReducedArgs),
    /// Steady-state sink population from the Laplace solution.
    Steady(SteadyArgs),
    /// Coupling that reaches a target sink population.
    Design(DesignArgs),
    /// Run the self-verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolidArgs {
    #[arg(long, value_parser = parse_solid)]
    pub solid: SolidKind,
    #[arg(long, value_parser = parse_mode, default_value = "all-pairs")]
    pub coupling_mode: CouplingMode,
    /// Dipole strength in `J_ij = v / r_ij³`.
    #[arg(long, allow_negative_numbers = true, value_parser = positive, default_value = "1")]
    pub v: f64,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long, allow_negative_numbers = true, value_parser = rate, default_value = "0")]
    pub gamma: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = rate, default_value = "0")]
    pub gamma_diss: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = positive, default_value = "1")]
    pub gamma_sink: f64,
}

#[derive(Debug, Args)]
pub struct PlacementArgs {
    /// 1-based sink-attached site (default: last site).
    #[arg(long)]
    pub sink_site: Option<usize>,
    /// Initial populations as `site:pop,site:pop` with 1-based sites.
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitialCharge>,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[command(flatten)]
    pub solid: SolidArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub solid: SolidArgs,
    #[command(flatten)]
    pub rates: RateArgs,
    #[command(flatten)]
    pub placement: PlacementArgs,
    #[arg(long, allow_negative_numbers = true, value_parser = positive, default_value = "20")]
    pub t_end: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = positive, default_value = "0.1")]
    pub stride: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct QuotientArgs {
    #[command(flatten)]
    pub solid: SolidArgs,
    #[command(flatten)]
    pub placement: PlacementArgs,
    #[command(flatten)]
    pub rates: RateArgs,
    /// Also integrate full and FCN dynamics up to this time and report the
    /// largest deviation.
    #[arg(long, allow_negative_numbers = true, value_parser = positive)]
    pub check_t_end: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ReducedArgs {
    #[arg(long = "J", allow_negative_numbers = true, value_parser = rate)]
    pub j: f64,
    #[arg(long = "Nc", value_parser = nc)]
    pub nc: usize,
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long, allow_negative_numbers = true, value_parser = finite, default_value = "1")]
    pub lambda0: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = finite, default_value = "0")]
    pub x0: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = finite, default_value = "0")]
    pub y0: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = rate, default_value = "0")]
    pub rho_nn0: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = positive, default_value = "20")]
    pub t_end: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = positive, default_value = "0.1")]
    pub stride: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SweepRange {
    #[arg(long, allow_negative_numbers = true, value_parser = finite)]
    pub from: Option<f64>,
    #[arg(long, allow_negative_numbers = true, value_parser = finite)]
    pub to: Option<f64>,
    #[arg(long, default_value = "20")]
    pub points: usize,
    /// Space the points logarithmically.
    #[arg(long)]
    pub log: bool,
}

#[derive(Debug, Args)]
pub struct SteadyArgs {
    #[arg(long = "J", allow_negative_numbers = true, value_parser = rate)]
    pub j: f64,
    #[arg(long = "Nc", value_parser = nc)]
    pub nc: usize,
    #[command(flatten)]
    pub rates: RateArgs,
    /// Noiseless limit taken in this order instead of the plain final value.
    #[arg(long, value_parser = parse_order)]
    pub limit: Option<LimitOrder>,
    /// Emit `(gamma, final_value)` over a dephasing grid.
    #[arg(long)]
    pub sweep: bool,
    #[command(flatten)]
    pub range: SweepRange,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetArg {
    Value(f64),
    /// 0.999 of the per-point maximum.
    Max,
    Unity,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long, value_parser = parse_sweep)]
    pub sweep: Option<SweepParameter>,
    #[command(flatten)]
    pub range: SweepRange,
    #[arg(long = "Nc", value_parser = nc, default_value = "4")]
    pub nc: usize,
    #[command(flatten)]
    pub rates: RateArgs,
    /// A population in (0, 1], `max` (0.999 of the attainable maximum) or
    /// `unity`.
    #[arg(long, value_parser = parse_target, default_value = "unity")]
    pub target: TargetArg,
    #[arg(long, allow_negative_numbers = true, value_parser = positive, default_value = "0.001")]
    pub j_min: f64,
    #[arg(long, allow_negative_numbers = true, value_parser = positive, default_value = "1000000")]
    pub j_max: f64,
    #[arg(long, default_value = "60")]
    pub per_decade: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Perturbation {
    /// Add 2γ to Γ_C in the closed form.
    GammaC,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run only checks whose name contains this text (or with this number).
    #[arg(long)]
    pub filter: Option<String>,
    /// Negative control: evaluate the closed form with a wrong coefficient.
    #[arg(long, value_enum, hide = true)]
    pub perturb: Option<Perturbation>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCharge(pub Vec<(usize, f64)>);

fn parse_solid(s: &str) -> Result<SolidKind, String> {
    s.parse().map_err(|e: platonet::geometry::UnknownSolid| e.to_string())
}

fn parse_mode(s: &str) -> Result<CouplingMode, String> {
    s.parse()
}

fn parse_order(s: &str) -> Result<LimitOrder, String> {
    s.parse()
}

fn parse_sweep(s: &str) -> Result<SweepParameter, String> {
    s.parse()
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn rate(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v < 0.0 {
        return Err(format!("{v} is negative"));
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v <= 0.0 {
        return Err(format!("{v} must be positive"));
    }
    Ok(v)
}

fn nc(s: &str) -> Result<usize, String> {
    let v: usize = s.trim().parse().map_err(|_| format!("'{s}' is not a whole number"))?;
    if v < 2 {
        return Err(format!("N_c must be at least 2, got {v}"));
    }
    Ok(v)
}

fn parse_target(s: &str) -> Result<TargetArg, String> {
    match s {
        "unity" => Ok(TargetArg::Unity),
        "max" => Ok(TargetArg::Max),
        _ => {
            let v = finite(s)?;
            if v > 0.0 && v <= 1.0 {
                Ok(TargetArg::Value(v))
            } else {
                Err(format!("target {v} must lie in (0, 1]"))
            }
        }
    }
}

fn parse_init(s: &str) -> Result<InitialCharge, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (site, pop) = part
            .split_once(':')
            .ok_or_else(|| format!("'{part}' is not of the form site:population"))?;
        let site: usize = site
            .trim()
            .parse()
            .map_err(|_| format!("'{site}' is not a site number"))?;
        if site == 0 {
            return Err("sites are numbered from 1".into());
        }
        let pop = rate(pop)?;
        out.push((site, pop));
    }
    if out.is_empty() {
        return Err("no initial populations given".into());
    }
    let sum: f64 = out.iter().map(|p| p.1).sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(format!("initial populations sum to {sum} ≠ 1"));
    }
    Ok(InitialCharge(out))
}
