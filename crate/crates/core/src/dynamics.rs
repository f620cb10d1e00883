//! Single-excitation Lindblad dynamics of a site network with a sink.
//!
//! The state is the `N × N` single-excitation block of the density matrix
//! plus two bookkeeping populations: `rho_env` (excitation lost to local
//! dissipation) and `rho_target` (excitation delivered to the sink). The
//! full `2^N` space is never built.
//!
//! Dissipators carry the factor-2 convention
//! `L(ρ) = rate · (2 A ρ A† − {A†A, ρ})`, so for site populations:
//! dephasing decays coherences at `2γ`, local dissipation empties every site
//! at `2Γ_diss`, and the sink channel drains the sink site at `2Γ`.

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{build_solid, coupling_matrix, CouplingMatrix, CouplingMode, PlatonicSolid, SolidKind};
use crate::ode::{self, IntegratorConfig, OdeError, OdeSystem};

/// Tolerance on `Σ p_i = 1` for initial populations.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    /// Dephasing rate γ.
    pub gamma: f64,
    /// Local dissipation rate Γ_diss, identical on every site.
    pub gamma_diss: f64,
    /// Transfer rate Γ from the sink-attached site to the sink.
    pub gamma_sink: f64,
}

impl NoiseRates {
    pub fn new(gamma: f64, gamma_diss: f64, gamma_sink: f64) -> Result<Self, DynamicsError> {
        let rates = NoiseRates {
            gamma,
            gamma_diss,
            gamma_sink,
        };
        rates.validate()?;
        Ok(rates)
    }

    pub fn noiseless(gamma_sink: f64) -> Self {
        NoiseRates {
            gamma: 0.0,
            gamma_diss: 0.0,
            gamma_sink,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("gamma_diss", self.gamma_diss),
            ("gamma_sink", self.gamma_sink),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(DynamicsError::InvalidRate { name, value: v });
            }
        }
        if self.gamma_sink <= 0.0 {
            return Err(DynamicsError::InvalidRate {
                name: "gamma_sink",
                value: self.gamma_sink,
            });
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        NoiseRates {
            gamma: self.gamma * factor,
            gamma_diss: self.gamma_diss * factor,
            gamma_sink: self.gamma_sink * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("rate {name} = {value} must be finite and nonnegative (gamma_sink strictly positive)")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected} sites, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("site {site} out of range for a {n}-site network")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("initial populations sum to {sum} ≠ 1")]
    NotNormalized { sum: f64 },
    #[error("initial population {value} on site {site} is negative or non-finite")]
    NegativePopulation { site: usize, value: f64 },
    #[error("coupling matrix is not symmetric at ({i}, {j})")]
    AsymmetricCoupling { i: usize, j: usize },
    #[error("end time must be positive and finite, got {0}")]
    BadEndTime(f64),
    #[error("sample stride must be positive and finite, got {0}")]
    BadStride(f64),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// A network ready for integration: couplings, sink attachment, rates and
/// initial density matrix. Sites are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub coupling: CouplingMatrix,
    pub sink_site: usize,
    pub rates: NoiseRates,
    pub initial: DMatrix<Complex64>,
}

impl Network {
    pub fn new(
        coupling: CouplingMatrix,
        sink_site: usize,
        rates: NoiseRates,
        initial: DMatrix<Complex64>,
    ) -> Result<Self, DynamicsError> {
        let net = Network {
            coupling,
            sink_site,
            rates,
            initial,
        };
        net.validate()?;
        Ok(net)
    }

    /// Uniform coupling `j` between all `n` sites.
    pub fn fully_connected(
        n: usize,
        j: f64,
        sink_site: usize,
        rates: NoiseRates,
        initial: DMatrix<Complex64>,
    ) -> Result<Self, DynamicsError> {
        Network::new(CouplingMatrix::fully_connected(n, j), sink_site, rates, initial)
    }

    pub fn n(&self) -> usize {
        self.coupling.n()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let n = self.n();
        self.rates.validate()?;
        if self.sink_site >= n {
            return Err(DynamicsError::SiteOutOfRange {
                site: self.sink_site,
                n,
            });
        }
        if self.initial.nrows() != n || self.initial.ncols() != n {
            return Err(DynamicsError::DimensionMismatch {
                expected: n,
                found: self.initial.nrows(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (self.coupling.get(i, j), self.coupling.get(j, i));
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1e-300) {
                    return Err(DynamicsError::AsymmetricCoupling { i, j });
                }
            }
        }
        let sum: f64 = (0..n).map(|i| self.initial[(i, i)].re).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(DynamicsError::NotNormalized { sum });
        }
        Ok(())
    }

    pub fn initial_state(&self) -> ExcitationState {
        ExcitationState {
            t: 0.0,
            rho: self.initial.clone(),
            rho_env: 0.0,
            rho_target: 0.0,
        }
    }
}

/// Diagonal density matrix from `(site, population)` pairs.
pub fn diagonal_initial(n: usize, initial: &[(usize, f64)]) -> Result<DMatrix<Complex64>, DynamicsError> {
    let mut rho = DMatrix::zeros(n, n);
    for &(site, p) in initial {
        if site >= n {
            return Err(DynamicsError::SiteOutOfRange { site, n });
        }
        if !p.is_finite() || p < 0.0 {
            return Err(DynamicsError::NegativePopulation { site, value: p });
        }
        rho[(site, site)] += Complex64::new(p, 0.0);
    }
    let sum: f64 = initial.iter().map(|&(_, p)| p).sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(DynamicsError::NotNormalized { sum });
    }
    Ok(rho)
}

/// A Platonic network run: geometry, couplings, sink, noise, initial charge.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub solid: PlatonicSolid,
    pub coupling: CouplingMatrix,
    pub sink_site: usize,
    pub rates: NoiseRates,
    pub initial: Vec<(usize, f64)>,
}

impl NetworkSpec {
    /// The default placement for each solid: the sink on the last site and
    /// the charge pattern used for the noiseless dynamics figures.
    ///
    /// Tetrahedron, octahedron and cube start with one excitation on site 1,
    /// the icosahedron with ¼ on each of sites 1–4. For the dodecahedron the
    /// three nearest neighbours of the sink site carry ⅓ each.
    pub fn standard(kind: SolidKind, mode: CouplingMode, v: f64, rates: NoiseRates) -> Self {
        let solid = build_solid(kind);
        let n = solid.n();
        let sink_site = n - 1;
        let initial = match kind {
            SolidKind::Tetrahedron | SolidKind::Octahedron | SolidKind::Cube => vec![(0, 1.0)],
            SolidKind::Icosahedron => (0..4).map(|i| (i, 0.25)).collect(),
            SolidKind::Dodecahedron => solid.neighbors(sink_site).map(|i| (i, 1.0 / 3.0)).collect(),
        };
        let coupling = coupling_matrix(&solid, mode, v);
        NetworkSpec {
            solid,
            coupling,
            sink_site,
            rates,
            initial,
        }
    }

    pub fn with_sink(mut self, sink_site: usize) -> Self {
        self.sink_site = sink_site;
        self
    }

    pub fn with_initial(mut self, initial: Vec<(usize, f64)>) -> Self {
        self.initial = initial;
        self
    }

    pub fn n(&self) -> usize {
        self.solid.n()
    }

    pub fn network(&self) -> Result<Network, DynamicsError> {
        if self.coupling.n() != self.solid.n() {
            return Err(DynamicsError::DimensionMismatch {
                expected: self.solid.n(),
                found: self.coupling.n(),
            });
        }
        let initial = diagonal_initial(self.n(), &self.initial)?;
        Network::new(self.coupling.clone(), self.sink_site, self.rates, initial)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationState {
    pub t: f64,
    pub rho: DMatrix<Complex64>,
    /// Population discharged to the environment (ρ₀₀).
    pub rho_env: f64,
    pub rho_target: f64,
}

impl ExcitationState {
    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    pub fn population(&self, i: usize) -> f64 {
        self.rho[(i, i)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.population(i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.rho[(i, i)].re).sum()
    }

    /// `trace(ρ) + ρ₀₀ + ρ_target − 1`.
    pub fn trace_error(&self) -> f64 {
        self.trace() + self.rho_env + self.rho_target - 1.0
    }

    /// `trace(ρ²)` of the network block.
    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    fn to_vec(&self) -> Vec<f64> {
        let n = self.n();
        let mut y = vec![0.0; 2 * n * n + 2];
        for i in 0..n {
            for j in 0..n {
                let z = self.rho[(i, j)];
                y[2 * (i * n + j)] = z.re;
                y[2 * (i * n + j) + 1] = z.im;
            }
        }
        y[2 * n * n] = self.rho_env;
        y[2 * n * n + 1] = self.rho_target;
        y
    }

    fn from_slice(n: usize, t: f64, y: &[f64]) -> Self {
        let rho = DMatrix::from_fn(n, n, |i, j| Complex64::new(y[2 * (i * n + j)], y[2 * (i * n + j) + 1]));
        ExcitationState {
            t,
            rho,
            rho_env: y[2 * n * n],
            rho_target: y[2 * n * n + 1],
        }
    }
}

/// Time derivative of an [`ExcitationState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub rho: DMatrix<Complex64>,
    pub rho_env: f64,
    pub rho_target: f64,
}

impl StateDerivative {
    pub fn max_norm(&self) -> f64 {
        self.rho
            .iter()
            .map(|z| z.norm())
            .fold(self.rho_env.abs().max(self.rho_target.abs()), f64::max)
    }
}

struct LindbladSystem<'a> {
    net: &'a Network,
}

impl OdeSystem for LindbladSystem<'_> {
    fn dim(&self) -> usize {
        let n = self.net.n();
        2 * n * n + 2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        lindblad_rhs(self.net, y, dy);
    }

    fn project(&self, y: &mut [f64]) {
        let n = self.net.n();
        for i in 0..n {
            y[2 * (i * n + i) + 1] = 0.0;
            for j in (i + 1)..n {
                let (a, b) = (2 * (i * n + j), 2 * (j * n + i));
                let re = 0.5 * (y[a] + y[b]);
                let im = 0.5 * (y[a + 1] - y[b + 1]);
                y[a] = re;
                y[a + 1] = im;
                y[b] = re;
                y[b + 1] = -im;
            }
        }
    }
}

fn lindblad_rhs(net: &Network, y: &[f64], dy: &mut [f64]) {
    let n = net.n();
    let h = net.coupling.as_slice();
    let NoiseRates {
        gamma,
        gamma_diss,
        gamma_sink,
    } = net.rates;
    let s = net.sink_site;
    let mut trace = 0.0;
    for i in 0..n {
        trace += y[2 * (i * n + i)];
        for j in 0..n {
            // [H, ρ]_ij = Σ_k H_ik ρ_kj − ρ_ik H_kj
            let (mut cr, mut ci) = (0.0, 0.0);
            for k in 0..n {
                let hik = h[i * n + k];
                let hkj = h[k * n + j];
                let kj = 2 * (k * n + j);
                let ik = 2 * (i * n + k);
                cr += hik * y[kj] - y[ik] * hkj;
                ci += hik * y[kj + 1] - y[ik + 1] * hkj;
            }
            let idx = 2 * (i * n + j);
            let mut decay = 2.0 * gamma_diss;
            if i != j {
                decay += 2.0 * gamma;
            }
            if i == s {
                decay += gamma_sink;
            }
            if j == s {
                decay += gamma_sink;
            }
            // −i(cr + i ci) = ci − i cr
            dy[idx] = ci - decay * y[idx];
            dy[idx + 1] = -cr - decay * y[idx + 1];
        }
    }
    dy[2 * n * n] = 2.0 * gamma_diss * trace;
    dy[2 * n * n + 1] = 2.0 * gamma_sink * y[2 * (s * n + s)];
}

/// `dρ/dt` for the extended state (network block, ρ₀₀, ρ_target).
pub fn derivative(state: &ExcitationState, net: &Network) -> Result<StateDerivative, DynamicsError> {
    let n = net.n();
    if state.rho.nrows() != n || state.rho.ncols() != n {
        return Err(DynamicsError::DimensionMismatch {
            expected: n,
            found: state.rho.nrows(),
        });
    }
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    lindblad_rhs(net, &y, &mut dy);
    let d = ExcitationState::from_slice(n, state.t, &dy);
    Ok(StateDerivative {
        rho: d.rho,
        rho_env: d.rho_env,
        rho_target: d.rho_target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    /// Output sampling interval (same time units as the rates' inverse).
    pub stride: f64,
    pub config: IntegratorConfig,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            stride: 0.1,
            config: IntegratorConfig::default(),
        }
    }
}

impl IntegrateOptions {
    pub fn with_stride(stride: f64) -> Self {
        IntegrateOptions {
            stride,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub gamma_sink: f64,
    pub samples: Vec<ExcitationState>,
}

impl Trajectory {
    pub fn last(&self) -> &ExcitationState {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    /// Trapezoidal time average of `f` over samples with `t ∈ [from, to]`.
    pub fn time_average(&self, from: f64, to: f64, f: impl Fn(&ExcitationState) -> f64) -> f64 {
        let window: Vec<&ExcitationState> = self
            .samples
            .iter()
            .filter(|s| s.t >= from - 1e-12 && s.t <= to + 1e-12)
            .collect();
        match window.len() {
            0 => f64::NAN,
            1 => f(window[0]),
            _ => {
                let mut acc = 0.0;
                for w in window.windows(2) {
                    acc += 0.5 * (f(w[0]) + f(w[1])) * (w[1].t - w[0].t);
                }
                acc / (window.last().unwrap().t - window[0].t)
            }
        }
    }

    pub fn max_trace_error(&self) -> f64 {
        self.samples.iter().map(|s| s.trace_error().abs()).fold(0.0, f64::max)
    }
}

/// Integrates from the network's initial state to `t_end`, sampling every
/// `opts.stride` (and at `t_end`).
pub fn integrate(net: &Network, t_end: f64, opts: &IntegrateOptions) -> Result<Trajectory, DynamicsError> {
    integrate_from(net, &net.initial_state(), t_end, opts)
}

pub fn integrate_from(
    net: &Network,
    start: &ExcitationState,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, DynamicsError> {
    net.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::BadEndTime(t_end));
    }
    if !(opts.stride > 0.0 && opts.stride.is_finite()) {
        return Err(DynamicsError::BadStride(opts.stride));
    }
    let n = net.n();
    if start.n() != n {
        return Err(DynamicsError::DimensionMismatch {
            expected: n,
            found: start.n(),
        });
    }
    let sys = LindbladSystem { net };
    let outputs: Vec<f64> = ode::uniform_times(t_end, opts.stride)
        .into_iter()
        .map(|t| start.t + t)
        .collect();
    let mut samples = Vec::with_capacity(outputs.len() + 1);
    samples.push(start.clone());
    ode::integrate(&sys, start.t, &start.to_vec(), &outputs[1..], &opts.config, |t, y| {
        samples.push(ExcitationState::from_slice(n, t, y));
        ControlFlow::Continue(())
    })?;
    Ok(Trajectory {
        gamma_sink: net.rates.gamma_sink,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions {
    /// Stop once the derivative max-norm falls below this.
    pub tolerance: f64,
    /// Give up at `Γ·t` equal to this.
    pub horizon_gamma_t: f64,
    /// Sampling interval in units of `1/Γ`.
    pub stride_gamma_t: f64,
    pub config: IntegratorConfig,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            tolerance: 1e-10,
            horizon_gamma_t: 500.0,
            stride_gamma_t: 0.05,
            config: IntegratorConfig::default(),
        }
    }
}

/// Time-averaged observables over the last log-decade `[t_h/10, t_h]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowAverage {
    pub from: f64,
    pub to: f64,
    pub populations: Vec<f64>,
    pub rho_env: f64,
    pub rho_target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub state: ExcitationState,
    /// `true` if the derivative norm fell below tolerance before the horizon.
    pub converged: bool,
    /// Derivative max-norm at the returned state.
    pub residual: f64,
    /// Present when the horizon was hit (persistent coherent oscillation).
    pub averaged: Option<WindowAverage>,
}

impl SteadyState {
    /// The converged target population, or its window average otherwise.
    pub fn rho_target(&self) -> f64 {
        match &self.averaged {
            Some(avg) => avg.rho_target,
            None => self.state.rho_target,
        }
    }

    pub fn rho_env(&self) -> f64 {
        match &self.averaged {
            Some(avg) => avg.rho_env,
            None => self.state.rho_env,
        }
    }
}

pub fn steady_state(net: &Network, opts: &SteadyOptions) -> Result<SteadyState, DynamicsError> {
    net.validate()?;
    let n = net.n();
    let g = net.rates.gamma_sink;
    let t_h = opts.horizon_gamma_t / g;
    let stride = opts.stride_gamma_t / g;
    let from = t_h / 10.0;
    let sys = LindbladSystem { net };
    let outputs = ode::uniform_times(t_h, stride);
    let start = net.initial_state();

    let mut dy = vec![0.0; sys.dim()];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut acc = vec![0.0; n + 2];
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let observables = |y: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|i| y[2 * (i * n + i)]).collect();
        v.push(y[2 * n * n]);
        v.push(y[2 * n * n + 1]);
        v
    };

    let (t, y) = ode::integrate(&sys, 0.0, &start.to_vec(), &outputs[1..], &opts.config, |t, y| {
        lindblad_rhs(net, y, &mut dy);
        residual = dy.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if t >= from - 1e-12 {
            let obs = observables(y);
            if let Some((t0, o0)) = &prev {
                for k in 0..acc.len() {
                    acc[k] += 0.5 * (o0[k] + obs[k]) * (t - t0);
                }
            }
            prev = Some((t, obs));
        }
        if residual < opts.tolerance {
            converged = true;
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;

    let state = ExcitationState::from_slice(n, t, &y);
    let averaged = if converged {
        None
    } else {
        let span = t - from;
        Some(WindowAverage {
            from,
            to: t,
            populations: acc[..n].iter().map(|a| a / span).collect(),
            rho_env: acc[n] / span,
            rho_target: acc[n + 1] / span,
        })
    };
    Ok(SteadyState {
        state,
        converged,
        residual,
        averaged,
    })
}
