//! Explicit Runge–Kutta integration for the network and reduced models.
//!
//! Dormand–Prince 5(4) with FSAL and a classical fixed-step RK4 for
//! reproducibility runs. Both land exactly on every requested output time.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Hook applied to every accepted state, e.g. to restore a symmetry the
    /// scheme only preserves up to round-off.
    fn project(&self, _y: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    DormandPrince45,
    Rk4 { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// Initial step guess; `None` picks one from the derivative scale.
    pub dt_hint: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::DormandPrince45,
            rtol: 1e-9,
            atol: 1e-12,
            dt_hint: None,
            h_min: 1e-14,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("tolerance not met after {steps} steps at t = {t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("output times must be nondecreasing and start at or after t0")]
    BadOutputTimes,
}

// Dormand & Prince (1980) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, the embedded 4th-order difference.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }
}

/// Integrates from `(t0, y0)` and calls `observe` at each time in `outputs`.
///
/// The observer may stop the run early with `ControlFlow::Break`. Returns
/// the final time and state reached.
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    cfg: &IntegratorConfig,
    mut observe: F,
) -> Result<(f64, Vec<f64>), OdeError>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    if outputs.first().is_some_and(|&t| t < t0) || outputs.windows(2).any(|w| w[1] < w[0]) {
        return Err(OdeError::BadOutputTimes);
    }
    let mut y = y0.to_vec();
    sys.project(&mut y);
    match cfg.method {
        Method::DormandPrince45 => dopri(sys, t0, y, outputs, cfg, &mut observe),
        Method::Rk4 { step } => rk4(sys, t0, y, outputs, step, &mut observe),
    }
}

fn dopri<S, F>(
    sys: &S,
    t0: f64,
    mut y: Vec<f64>,
    outputs: &[f64],
    cfg: &IntegratorConfig,
    observe: &mut F,
) -> Result<(f64, Vec<f64>), OdeError>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    let n = sys.dim();
    let mut ws = Workspace::new(n);
    let mut t = t0;
    sys.rhs(t, &y, &mut ws.k[0]);
    let mut h = cfg
        .dt_hint
        .unwrap_or_else(|| initial_step(&y, &ws.k[0], cfg.rtol, cfg.atol));
    let mut steps = 0usize;

    for &t_out in outputs {
        while t < t_out {
            let remaining = t_out - t;
            let landing = h >= remaining * (1.0 - 1e-12);
            let h_try = if landing { remaining } else { h };
            if h_try < cfg.h_min && !landing {
                return Err(OdeError::StepSizeUnderflow { t, h: h_try });
            }
            steps += 1;
            if steps > cfg.max_steps {
                return Err(OdeError::TooManySteps { t, steps });
            }
            let err = dopri_step(sys, t, &y, h_try, &mut ws, cfg);
            if !err.is_finite() {
                return Err(OdeError::NonFinite { t });
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if landing { t_out } else { t + h_try };
                std::mem::swap(&mut y, &mut ws.y_new);
                sys.project(&mut y);
                // FSAL: k7 is f(t + h, y_new); after projection recompute to
                // keep it consistent with the stored state.
                sys.rhs(t, &y, &mut ws.k[0]);
                if !landing || factor < 1.0 {
                    h = h_try * factor;
                }
            } else {
                h = h_try * factor.min(1.0);
                if h < cfg.h_min {
                    return Err(OdeError::StepSizeUnderflow { t, h });
                }
            }
        }
        if observe(t, &y).is_break() {
            break;
        }
    }
    Ok((t, y))
}

fn dopri_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
    cfg: &IntegratorConfig,
) -> f64 {
    let n = y.len();
    let Workspace { k, tmp, y_new } = ws;
    let [k1, k2, k3, k4, k5, k6, k7] = k;

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    sys.rhs(t + C2 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    sys.rhs(t + C3 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    sys.rhs(t + C4 * h, tmp, k4);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    sys.rhs(t + C5 * h, tmp, k5);
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    sys.rhs(t + h, tmp, k6);
    for i in 0..n {
        y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    sys.rhs(t + h, y_new, k7);

    let mut err: f64 = 0.0;
    for i in 0..n {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
        err = err.max((e / scale).abs());
    }
    err
}

fn initial_step(y: &[f64], dy: &[f64], rtol: f64, atol: f64) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (a, b) in y.iter().zip(dy) {
        let scale = atol + rtol * a.abs();
        d0 = d0.max(a.abs() / scale);
        d1 = d1.max(b.abs() / scale);
    }
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        (0.01 * d0 / d1).min(1.0)
    }
}

fn rk4<S, F>(
    sys: &S,
    t0: f64,
    mut y: Vec<f64>,
    outputs: &[f64],
    step: f64,
    observe: &mut F,
) -> Result<(f64, Vec<f64>), OdeError>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    let n = sys.dim();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut t = t0;
    for &t_out in outputs {
        while t < t_out {
            let h = step.min(t_out - t);
            sys.rhs(t, &y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            sys.rhs(t + 0.5 * h, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            sys.rhs(t + 0.5 * h, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            sys.rhs(t + h, &tmp, &mut k4);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            sys.project(&mut y);
            t = if t_out - t <= step { t_out } else { t + h };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t });
            }
        }
        if observe(t, &y).is_break() {
            break;
        }
    }
    Ok((t, y))
}

/// `count + 1` evenly spaced times covering `[0, t_end]`, hitting `t_end`
/// exactly.
pub fn uniform_times(t_end: f64, stride: f64) -> Vec<f64> {
    let count = (t_end / stride - 1e-9).ceil().max(1.0) as usize;
    (0..=count)
        .map(|k| if k == count { t_end } else { k as f64 * stride })
        .collect()
}
