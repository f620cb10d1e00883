//! Six-variable collective model of a fully connected network.
//!
//! For an FCN of `N_c` sites with the sink on site `N`, the sums
//! `R_N = Σ_j ρ_Nj = x + iy` and `Λ_N = Σ_{j,k} ρ_jk` close together with
//! `ρ_NN`, `ρ₀₀` and `ρ_target`; trace conservation replaces `trace ρ` by
//! `1 − ρ₀₀ − ρ_target`.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsError, IntegrateOptions, NetworkSpec, NoiseRates};
use crate::ode::{self, OdeSystem};
use crate::symmetry::{self, QuotientMap, SymmetryError};

/// Largest tolerated `|Im Λ_N|` when deriving the reduced initial state.
pub const LAMBDA_IMAG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReducedState {
    pub lambda: f64,
    pub x: f64,
    pub y: f64,
    pub rho_nn: f64,
    pub rho_env: f64,
    pub rho_target: f64,
}

impl ReducedState {
    pub const NAMES: [&'static str; 6] = ["Lambda_N", "x", "y", "rho_NN", "rho_env", "rho_target"];

    /// `Λ_N = 1`, everything else zero: charge away from the sink block.
    pub fn standard() -> Self {
        ReducedState {
            lambda: 1.0,
            ..Default::default()
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.lambda, self.x, self.y, self.rho_nn, self.rho_env, self.rho_target]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        ReducedState {
            lambda: a[0],
            x: a[1],
            y: a[2],
            rho_nn: a[3],
            rho_env: a[4],
            rho_target: a[5],
        }
    }

    fn from_slice(y: &[f64]) -> Self {
        ReducedState::from_array([y[0], y[1], y[2], y[3], y[4], y[5]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedSpec {
    pub j: f64,
    pub nc: usize,
    pub rates: NoiseRates,
    pub initial: ReducedState,
}

impl ReducedSpec {
    pub fn new(j: f64, nc: usize, rates: NoiseRates) -> Self {
        ReducedSpec {
            j,
            nc,
            rates,
            initial: ReducedState::standard(),
        }
    }

    pub fn with_j(mut self, j: f64) -> Self {
        self.j = j;
        self
    }

    pub fn validate(&self) -> Result<(), ReducedError> {
        self.rates.validate()?;
        if self.nc < 2 {
            return Err(ReducedError::InvalidNc(self.nc));
        }
        if !self.j.is_finite() || self.j < 0.0 {
            return Err(ReducedError::InvalidCoupling(self.j));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReducedError {
    #[error("N_c must be at least 2, got {0}")]
    InvalidNc(usize),
    #[error("coupling J must be finite and nonnegative, got {0}")]
    InvalidCoupling(f64),
    #[error("Lambda_N has imaginary part {0:e}; the reduced model needs it real")]
    ComplexLambda(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

pub fn reduced_derivative(s: &ReducedState, spec: &ReducedSpec) -> ReducedState {
    let NoiseRates {
        gamma,
        gamma_diss,
        gamma_sink,
    } = spec.rates;
    let j = spec.j;
    let jn = j * spec.nc as f64;
    let remaining = 1.0 - s.rho_env - s.rho_target;
    let b = 2.0 * gamma_diss + 2.0 * gamma + gamma_sink;
    ReducedState {
        lambda: -2.0 * (gamma_diss + gamma) * s.lambda - 2.0 * gamma_sink * s.x + 2.0 * gamma * remaining,
        x: -b * s.x + (2.0 * gamma - gamma_sink) * s.rho_nn - jn * s.y,
        y: -b * s.y + jn * s.x - j * s.lambda,
        rho_nn: -2.0 * (gamma_diss + gamma_sink) * s.rho_nn - 2.0 * j * s.y,
        rho_env: 2.0 * gamma_diss * remaining,
        rho_target: 2.0 * gamma_sink * s.rho_nn,
    }
}

struct ReducedSystem<'a> {
    spec: &'a ReducedSpec,
}

impl OdeSystem for ReducedSystem<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = reduced_derivative(&ReducedState::from_slice(y), self.spec);
        dy.copy_from_slice(&d.to_array());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub samples: Vec<(f64, ReducedState)>,
}

impl ReducedTrajectory {
    pub fn last(&self) -> &(f64, ReducedState) {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    /// Trapezoidal time average of `f` over samples with `t ∈ [from, to]`.
    pub fn time_average(&self, from: f64, to: f64, f: impl Fn(&ReducedState) -> f64) -> f64 {
        let w: Vec<&(f64, ReducedState)> = self
            .samples
            .iter()
            .filter(|(t, _)| *t >= from - 1e-12 && *t <= to + 1e-12)
            .collect();
        match w.len() {
            0 => f64::NAN,
            1 => f(&w[0].1),
            _ => {
                let acc: f64 = w
                    .windows(2)
                    .map(|p| 0.5 * (f(&p[0].1) + f(&p[1].1)) * (p[1].0 - p[0].0))
                    .sum();
                acc / (w[w.len() - 1].0 - w[0].0)
            }
        }
    }
}

pub fn reduced_integrate(
    spec: &ReducedSpec,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<ReducedTrajectory, ReducedError> {
    spec.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::BadEndTime(t_end).into());
    }
    if !(opts.stride > 0.0 && opts.stride.is_finite()) {
        return Err(DynamicsError::BadStride(opts.stride).into());
    }
    let outputs = ode::uniform_times(t_end, opts.stride);
    let mut samples = Vec::with_capacity(outputs.len());
    samples.push((0.0, spec.initial));
    ode::integrate(
        &ReducedSystem { spec },
        0.0,
        &spec.initial.to_array(),
        &outputs[1..],
        &opts.config,
        |t, y| {
            samples.push((t, ReducedState::from_slice(y)));
            ControlFlow::Continue(())
        },
    )
    .map_err(DynamicsError::from)?;
    Ok(ReducedTrajectory { samples })
}

/// The collective variables of the aggregated initial condition.
///
/// In the FCN every symbolic site neighbours every other, so `R_N` sums the
/// sink row of the aggregated matrix and `Λ_N` sums all of its entries.
pub fn reduced_initial_from(spec: &NetworkSpec, map: &QuotientMap) -> Result<ReducedState, ReducedError> {
    let net = spec.network()?;
    let agg = symmetry::aggregate(&net.initial, map)?;
    let s = map.sink_block;
    let lambda = agg.iter().sum::<num_complex::Complex64>();
    if lambda.im.abs() > LAMBDA_IMAG_TOLERANCE {
        return Err(ReducedError::ComplexLambda(lambda.im));
    }
    let r: num_complex::Complex64 = agg.row(s).iter().sum();
    Ok(ReducedState {
        lambda: lambda.re,
        x: r.re,
        y: r.im,
        rho_nn: agg[(s, s)].re,
        rho_env: 0.0,
        rho_target: 0.0,
    })
}
