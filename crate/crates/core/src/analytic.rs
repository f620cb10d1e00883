//! Laplace-domain solution of the reduced model and its steady state.
//!
//! [`solve_laplace`] solves the transformed six-variable system directly and
//! is the reference for everything else here. The closed form
//!
//! ```text
//! ρ̄_target(s) = 4ΓJ²(Γ_B + s)(Γ_A + s) / (s Δ(s))
//!
//! Δ(s) = 8ΓJ²γ(Γ_B + s)
//!      + (s + 2Γ_diss) [ (Γ_A + s)(Γ_C + s)(Γ_B + s)²
//!                        − 4ΓJ²(Γ − 2γ)
//!                        − 2J²N_c(Γ_A + s)(Γ − 2γ)
//!                        + 2ΓJ²N_c(Γ_C + s)
//!                        + J²N_c²(Γ_A + s)(Γ_C + s) ]
//! ```
//!
//! with `Γ_A = 2γ + 2Γ_diss`, `Γ_B = Γ_A + Γ`, `Γ_C = 2Γ_diss + 2Γ` holds for
//! the standard initial state (`Λ_N = 1`, rest zero). Only the first term
//! sits outside the `(s + 2Γ_diss)` factor; the tests pin this grouping
//! against the direct solve.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::NoiseRates;
use crate::reduced::{ReducedSpec, ReducedState};

/// Condition numbers above this make [`solve_laplace`] report a singular
/// system.
pub const MAX_CONDITION: f64 = 1e14;

/// Required agreement between the closed form and the small-`s`
/// extrapolation in [`final_value_checked`].
pub const FINAL_VALUE_AGREEMENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    #[error("Laplace system is singular at s = {s} (condition estimate {condition:e})")]
    SingularSystem { s: f64, condition: f64 },
    #[error("Laplace variable must be positive and finite, got {0}")]
    NonPositiveS(f64),
    #[error("steady state is indeterminate with gamma = gamma_diss = 0; use ordered_limit")]
    IndeterminateLimit,
    #[error("closed-form final value {closed} disagrees with small-s extrapolation {extrapolated}")]
    Disagreement { closed: f64, extrapolated: f64 },
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RateTriple {
    pub fn from_rates(r: &NoiseRates) -> Self {
        let a = 2.0 * r.gamma + 2.0 * r.gamma_diss;
        RateTriple {
            a,
            b: a + r.gamma_sink,
            c: 2.0 * r.gamma_diss + 2.0 * r.gamma_sink,
        }
    }
}

/// Which `Γ_C` the closed form uses. `PerturbedGammaC` adds `2γ` to the
/// sink-site population decay; it exists so that the firewall checks can be
/// shown to catch a wrong coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Convention {
    #[default]
    Verified,
    PerturbedGammaC,
}

impl Convention {
    fn triple(self, r: &NoiseRates) -> RateTriple {
        let mut t = RateTriple::from_rates(r);
        if self == Convention::PerturbedGammaC {
            t.c += 2.0 * r.gamma;
        }
        t
    }
}

/// Laplace transforms of the six reduced variables at one `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceSolution {
    pub s: f64,
    pub state: ReducedState,
    /// 2-norm condition number of the system matrix.
    pub condition: f64,
}

fn validate(spec: &ReducedSpec) -> Result<(), AnalyticError> {
    spec.validate().map_err(|e| AnalyticError::InvalidSpec(e.to_string()))
}

/// Solves the transformed reduced system at `s` for the spec's initial
/// state.
pub fn solve_laplace(spec: &ReducedSpec, s: f64) -> Result<LaplaceSolution, AnalyticError> {
    validate(spec)?;
    if !(s > 0.0 && s.is_finite()) {
        return Err(AnalyticError::NonPositiveS(s));
    }
    let NoiseRates {
        gamma: g,
        gamma_diss: d,
        gamma_sink: k,
    } = spec.rates;
    let j = spec.j;
    let jn = j * spec.nc as f64;
    let RateTriple { a, b, c } = RateTriple::from_rates(&spec.rates);
    let i0 = spec.initial;
    // Unknowns: Λ̃, x̃, ỹ, ρ̃_NN, ρ̃₀₀, ρ̃_target.
    #[rustfmt::skip]
    let m = Matrix6::new(
        s + a, 2.0 * k, 0.0,     0.0,           2.0 * g,       2.0 * g,
        0.0,   s + b,   jn,      k - 2.0 * g,   0.0,           0.0,
        j,     -jn,     s + b,   0.0,           0.0,           0.0,
        0.0,   0.0,     2.0 * j, s + c,         0.0,           0.0,
        0.0,   0.0,     0.0,     0.0,           s + 2.0 * d,   2.0 * d,
        0.0,   0.0,     0.0,     -2.0 * k,      0.0,           s,
    );
    let rhs = Vector6::new(
        2.0 * g / s + i0.lambda,
        i0.x,
        i0.y,
        i0.rho_nn,
        2.0 * d / s + i0.rho_env,
        i0.rho_target,
    );
    let sv = m.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(AnalyticError::SingularSystem { s, condition });
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(AnalyticError::SingularSystem { s, condition })?;
    Ok(LaplaceSolution {
        s,
        state: ReducedState::from_array([sol[0], sol[1], sol[2], sol[3], sol[4], sol[5]]),
        condition,
    })
}

/// `Δ(s)` of the closed form.
pub fn delta(spec: &ReducedSpec, s: f64) -> f64 {
    delta_with(spec, s, Convention::Verified)
}

pub fn delta_with(spec: &ReducedSpec, s: f64, convention: Convention) -> f64 {
    let NoiseRates {
        gamma: g,
        gamma_diss: d,
        gamma_sink: k,
    } = spec.rates;
    let RateTriple { a, b, c } = convention.triple(&spec.rates);
    let j2 = spec.j * spec.j;
    let nc = spec.nc as f64;
    let (sa, sb, sc) = (a + s, b + s, c + s);
    let bracket = sa * sc * sb * sb - 4.0 * k * j2 * (k - 2.0 * g) - 2.0 * j2 * nc * sa * (k - 2.0 * g)
        + 2.0 * k * j2 * nc * sc
        + j2 * nc * nc * sa * sc;
    8.0 * k * j2 * g * sb + (s + 2.0 * d) * bracket
}

/// `ρ̄_target(s)` from the closed form; standard initial state only.
pub fn closed_form_target(spec: &ReducedSpec, s: f64) -> Result<f64, AnalyticError> {
    closed_form_target_with(spec, s, Convention::Verified)
}

pub fn closed_form_target_with(spec: &ReducedSpec, s: f64, convention: Convention) -> Result<f64, AnalyticError> {
    validate(spec)?;
    if !(s > 0.0 && s.is_finite()) {
        return Err(AnalyticError::NonPositiveS(s));
    }
    let RateTriple { a, b, .. } = convention.triple(&spec.rates);
    let k = spec.rates.gamma_sink;
    let num = 4.0 * k * spec.j * spec.j * (b + s) * (a + s);
    Ok(num / (s * delta_with(spec, s, convention)))
}

/// `ρ_target(t → ∞) = 4ΓJ²Γ_BΓ_A / Δ(0)`.
pub fn final_value(spec: &ReducedSpec) -> Result<f64, AnalyticError> {
    final_value_with(spec, Convention::Verified)
}

pub fn final_value_with(spec: &ReducedSpec, convention: Convention) -> Result<f64, AnalyticError> {
    validate(spec)?;
    if spec.j == 0.0 {
        return Ok(0.0);
    }
    if spec.rates.gamma == 0.0 && spec.rates.gamma_diss == 0.0 {
        return Err(AnalyticError::IndeterminateLimit);
    }
    let RateTriple { a, b, .. } = convention.triple(&spec.rates);
    let k = spec.rates.gamma_sink;
    Ok(4.0 * k * spec.j * spec.j * b * a / delta_with(spec, 0.0, convention))
}

/// Richardson extrapolation to zero of samples at `h, h/r, h/r², …` of a
/// quantity whose error is a power series in `h`.
pub fn richardson(values: &[f64], ratio: f64) -> f64 {
    let mut table = values.to_vec();
    let mut factor = ratio;
    while table.len() > 1 {
        table = table
            .windows(2)
            .map(|w| (factor * w[1] - w[0]) / (factor - 1.0))
            .collect();
        factor *= ratio;
    }
    table[0]
}

/// `lim s→0 s·ρ̃_target(s)` from the direct solve at `s = 10⁻⁴, 10⁻⁵, 10⁻⁶`
/// (in units of Γ), Richardson-extrapolated.
pub fn final_value_extrapolated(spec: &ReducedSpec) -> Result<f64, AnalyticError> {
    let k = spec.rates.gamma_sink;
    let mut samples = Vec::with_capacity(3);
    for e in [1e-4, 1e-5, 1e-6] {
        let s = e * k;
        samples.push(s * solve_laplace(spec, s)?.state.rho_target);
    }
    Ok(richardson(&samples, 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalValue {
    pub value: f64,
    pub extrapolated: f64,
    pub residual: f64,
}

/// Closed-form final value cross-checked against the extrapolated direct
/// solve.
pub fn final_value_checked(spec: &ReducedSpec) -> Result<FinalValue, AnalyticError> {
    let value = final_value(spec)?;
    let extrapolated = final_value_extrapolated(spec)?;
    let residual = (value - extrapolated).abs();
    if !(residual <= FINAL_VALUE_AGREEMENT) {
        return Err(AnalyticError::Disagreement {
            closed: value,
            extrapolated,
        });
    }
    Ok(FinalValue {
        value,
        extrapolated,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitOrder {
    /// Dephasing vanishes first, then dissipation.
    GammaFirst,
    /// Dissipation vanishes first, then dephasing.
    DissFirst,
}

impl std::fmt::Display for LimitOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LimitOrder::GammaFirst => "gamma-first",
            LimitOrder::DissFirst => "diss-first",
        })
    }
}

impl std::str::FromStr for LimitOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma-first" => Ok(LimitOrder::GammaFirst),
            "diss-first" => Ok(LimitOrder::DissFirst),
            other => Err(format!(
                "unknown limit order '{other}' (expected gamma-first or diss-first)"
            )),
        }
    }
}

/// Steady state as both noise rates vanish in the given order.
///
/// The first rate is set to zero exactly; the second runs through
/// `ε·Γ` for `ε = 10⁻², 10⁻⁴, 10⁻⁶` and the values are extrapolated to zero.
/// The spec's own rates are ignored apart from `Γ`.
pub fn ordered_limit(spec: &ReducedSpec, order: LimitOrder) -> Result<f64, AnalyticError> {
    let k = spec.rates.gamma_sink;
    let mut values = Vec::with_capacity(3);
    for e in [1e-2, 1e-4, 1e-6] {
        let mut s = *spec;
        s.rates = match order {
            LimitOrder::GammaFirst => NoiseRates {
                gamma: 0.0,
                gamma_diss: e * k,
                gamma_sink: k,
            },
            LimitOrder::DissFirst => NoiseRates {
                gamma: e * k,
                gamma_diss: 0.0,
                gamma_sink: k,
            },
        };
        values.push(final_value(&s)?);
    }
    Ok(richardson(&values, 100.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::IntegrateOptions;
    use crate::reduced::reduced_integrate;
    use approx::assert_relative_eq;

    fn spec(j: f64, nc: usize, g: f64, d: f64, k: f64) -> ReducedSpec {
        ReducedSpec::new(j, nc, NoiseRates::new(g, d, k).unwrap())
    }

    #[test]
    fn rate_triple_identities() {
        let r = NoiseRates::new(0.3, 0.7, 1.9).unwrap();
        let t = RateTriple::from_rates(&r);
        assert_relative_eq!(t.b, t.a + 1.9);
        assert_relative_eq!(t.c - t.a, 2.0 * 1.9 - 2.0 * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_matches_direct_solve() {
        for &(j, nc, g, d, k) in &[
            (1.0, 4, 1.0, 0.5, 1.0),
            (0.3, 5, 0.1, 2.0, 7.0),
            (12.0, 6, 3.0, 0.01, 0.4),
            (1.0, 4, 0.0, 0.5, 1.0),
            (1.0, 4, 0.5, 0.0, 1.0),
        ] {
            let sp = spec(j, nc, g, d, k);
            for s in [1e-3, 0.01, 0.1, 1.0, 10.0, 100.0] {
                let direct = solve_laplace(&sp, s).unwrap().state.rho_target;
                let closed = closed_form_target(&sp, s).unwrap();
                assert_relative_eq!(closed, direct, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn perturbed_convention_is_detectably_wrong() {
        let sp = spec(1.0, 4, 1.0, 0.5, 1.0);
        let direct = solve_laplace(&sp, 0.1).unwrap().state.rho_target;
        let bad = closed_form_target_with(&sp, 0.1, Convention::PerturbedGammaC).unwrap();
        assert!((bad - direct).abs() / direct > 1e-3);
    }

    #[test]
    fn zero_coupling_never_feeds_sink() {
        let sp = spec(0.0, 4, 1.0, 0.5, 1.0);
        for s in [0.01, 1.0] {
            let sol = solve_laplace(&sp, s).unwrap();
            assert_eq!(sol.state.rho_nn, 0.0);
            assert_eq!(sol.state.rho_target, 0.0);
            assert_eq!(closed_form_target(&sp, s).unwrap(), 0.0);
        }
        assert_eq!(final_value(&sp).unwrap(), 0.0);
    }

    #[test]
    fn noiseless_small_s_gives_inverse_neighbour_count() {
        for nc in [4, 5, 6] {
            let sp = spec(1.0, nc, 0.0, 0.0, 1.0);
            let s = 1e-6;
            let v = s * solve_laplace(&sp, s).unwrap().state.rho_target;
            assert!((v - 1.0 / (nc as f64 - 1.0)).abs() < 1e-4, "nc {nc}: {v}");
        }
    }

    #[test]
    fn non_positive_s_rejected() {
        let sp = spec(1.0, 4, 1.0, 0.5, 1.0);
        assert_eq!(solve_laplace(&sp, 0.0).unwrap_err(), AnalyticError::NonPositiveS(0.0));
        assert!(closed_form_target(&sp, -1.0).is_err());
    }

    #[test]
    fn final_value_matches_long_integration() {
        let sp = spec(1.0, 4, 1.0, 0.5, 1.0);
        let fv = final_value_checked(&sp).unwrap();
        let traj = reduced_integrate(&sp, 500.0, &IntegrateOptions::with_stride(500.0)).unwrap();
        assert!((traj.last().1.rho_target - fv.value).abs() < 1e-4);
        assert!(fv.residual < 1e-6);
    }

    #[test]
    fn pure_dephasing_delivers_everything() {
        for nc in [4, 5, 6] {
            let v = final_value(&spec(0.8, nc, 0.3, 0.0, 1.7)).unwrap();
            assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn dissipation_only_is_strictly_partial() {
        let v = final_value(&spec(1.0, 4, 0.0, 0.2, 1.0)).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn noiseless_final_value_is_indeterminate() {
        assert_eq!(
            final_value(&spec(1.0, 4, 0.0, 0.0, 1.0)).unwrap_err(),
            AnalyticError::IndeterminateLimit
        );
    }

    #[test]
    fn final_value_is_scale_free() {
        let base = spec(0.7, 5, 0.4, 0.3, 1.1);
        let v = final_value(&base).unwrap();
        for lambda in [0.1, 10.0] {
            let mut s = base;
            s.j *= lambda;
            s.rates = s.rates.scaled(lambda);
            assert_relative_eq!(final_value(&s).unwrap(), v, max_relative = 1e-12);
        }
    }

    #[test]
    fn ordered_limits() {
        for (nc, want) in [(4, 1.0 / 3.0), (5, 0.25), (6, 0.2)] {
            let sp = spec(1.0, nc, 0.0, 0.0, 1.0);
            let gf = ordered_limit(&sp, LimitOrder::GammaFirst).unwrap();
            let df = ordered_limit(&sp, LimitOrder::DissFirst).unwrap();
            assert!((gf - want).abs() < 1e-6, "nc {nc}: {gf}");
            assert!((df - 1.0).abs() < 1e-6, "nc {nc}: {df}");
        }
    }

    #[test]
    fn richardson_removes_polynomial_error() {
        let f = |h: f64| 2.0 + 3.0 * h - 5.0 * h * h;
        let v = richardson(&[f(1e-2), f(1e-3), f(1e-4)], 10.0);
        assert_relative_eq!(v, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn limit_order_parses() {
        assert_eq!("gamma-first".parse::<LimitOrder>().unwrap(), LimitOrder::GammaFirst);
        assert!("sideways".parse::<LimitOrder>().is_err());
    }
}
