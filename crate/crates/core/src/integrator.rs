//! Deterministic ODE integration.
//!
//! [`integrate_adaptive`] is a Dormand–Prince 5(4) pair with PI step-size
//! control and Hairer's 4th-order continuous extension, sampled on a uniform
//! output grid. [`integrate_fixed_rk4`] is the classical fixed-step method,
//! kept as an independent cross-check.
//!
//! Limiters make the closed loop only piecewise smooth, and the embedded
//! error estimate is unreliable on a step that straddles a switch.
//! [`integrate_adaptive_switched`] takes a right-hand side that also reports
//! its regime; a step whose stages disagree is retried until it is no
//! longer than `h_switch`. There is no root finding.

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlPair;
use crate::error::{FormationError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub sample_dt: f64,
    /// Longest step allowed to cross a regime switch.
    #[serde(default = "default_h_switch")]
    pub h_switch: f64,
}

fn default_h_switch() -> f64 {
    1e-3
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-5,
            atol: 1e-6,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: 0.1,
            t_start: 0.0,
            t_end: 40.0,
            sample_dt: 0.01,
            h_switch: default_h_switch(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(FormationError::Validation { path: format!("integrator.{path}"), message })
        };
        if !(self.rtol > 0.0) {
            return bad("rtol", format!("must be > 0, got {}", self.rtol));
        }
        if !(self.atol > 0.0) {
            return bad("atol", format!("must be > 0, got {}", self.atol));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return bad(
                "h_init",
                format!("need 0 < h_min <= h_init <= h_max, got {} / {} / {}", self.h_min, self.h_init, self.h_max),
            );
        }
        if !(self.h_switch >= self.h_min && self.h_switch <= self.h_max) {
            return bad("h_switch", format!("must lie in [h_min, h_max], got {}", self.h_switch));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return bad("t_end", format!("time span [{}, {}] is not increasing", self.t_start, self.t_end));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt <= self.t_end - self.t_start) {
            return bad("sample_dt", format!("must be in (0, t_end - t_start], got {}", self.sample_dt));
        }
        Ok(())
    }

    /// Number of sample intervals on the output grid.
    pub fn grid_len(&self) -> usize {
        ((self.t_end - self.t_start) / self.sample_dt + 1e-9).floor() as usize
    }

    pub fn grid_time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.sample_dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Commanded speed was negative and floored at zero.
    SpeedFloor,
    /// Commanded speed exceeded `v_max`.
    SpeedClamp,
    /// Commanded turning rate exceeded `u_max`.
    SteeringClamp,
}

/// A limiter switching on or off, detected on the sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    /// 1-based agent index.
    pub agent: usize,
    pub kind: EventKind,
    pub engaged: bool,
}

impl Event {
    pub fn tag(&self) -> String {
        let kind = match self.kind {
            EventKind::SpeedFloor => "speed_floor",
            EventKind::SpeedClamp => "speed_clamp",
            EventKind::SteeringClamp => "steering_clamp",
        };
        format!("agent{}:{}:{}", self.agent, kind, if self.engaged { "on" } else { "off" })
    }
}

/// Time-stamped states plus, when filled in by a scenario, the per-agent
/// controls applied at each sample.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<ControlPair>>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Component `j` of every state.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[j]).collect()
    }

    /// Checks the structural invariants: equal lengths and increasing times.
    pub fn is_well_formed(&self) -> bool {
        let lengths = self.states.len() == self.times.len()
            && (self.controls.is_empty() || self.controls.len() == self.times.len());
        lengths && self.times.windows(2).all(|w| w[1] > w[0])
    }
}

fn check_finite(t: f64, y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FormationError::NonFiniteState { t })
    }
}

// Dormand–Prince 5(4) tableau.
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Hairer, Nørsett & Wanner).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller constants.
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Integrates `dy/dt = rhs(t, y)` with an adaptive Dormand–Prince 5(4) pair.
///
/// `rhs` writes the derivative into its third argument. The returned
/// trajectory is sampled on `t_start + k * sample_dt` by dense output; its
/// `controls` and `events` are left empty for the caller to fill.
pub fn integrate_adaptive<F>(mut rhs: F, y0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    integrate_adaptive_switched(|t, y, dy| rhs(t, y, dy).map(|()| 0), y0, cfg)
}

/// [`integrate_adaptive`] for a right-hand side that returns a regime tag,
/// e.g. a bitmask of engaged limiters.
pub fn integrate_adaptive_switched<F>(mut rhs: F, y0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<u64>,
{
    cfg.validate()?;
    let n = y0.len();
    check_finite(cfg.t_start, y0)?;

    let n_grid = cfg.grid_len();
    let mut out = Trajectory {
        times: Vec::with_capacity(n_grid + 1),
        states: Vec::with_capacity(n_grid + 1),
        ..Default::default()
    };
    out.times.push(cfg.t_start);
    out.states.push(y0.to_vec());
    let mut next = 1usize;

    let mut t = cfg.t_start;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut k5, mut k6, mut k7) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut regime = rhs(t, &y, &mut k1)?;
    check_finite(t, &k1)?;

    let mut h = cfg.h_init.min(cfg.h_max);
    let mut fac_old = 1e-4f64;
    let mut rejected = false;
    let expo = 0.2 - BETA * 0.75;
    let slack = 1e-12 * (cfg.t_end.abs() + 1.0);

    while t < cfg.t_end - slack {
        let last = t + h >= cfg.t_end - slack;
        if last {
            h = cfg.t_end - t;
        }

        for i in 0..n {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        let mut switched = rhs(t + C2 * h, &stage, &mut k2)? != regime;
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        switched |= rhs(t + C3 * h, &stage, &mut k3)? != regime;
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        switched |= rhs(t + C4 * h, &stage, &mut k4)? != regime;
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        switched |= rhs(t + C5 * h, &stage, &mut k5)? != regime;
        for i in 0..n {
            stage[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        switched |= rhs(t + h, &stage, &mut k6)? != regime;
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let t_new = if last { cfg.t_end } else { t + h };
        let regime_new = rhs(t_new, &y_new, &mut k7)?;
        switched |= regime_new != regime;
        if switched && h > cfg.h_switch * (1.0 + 1e-12) {
            h = (h * 0.25).max(cfg.h_switch);
            rejected = true;
            continue;
        }

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sk) * (e / sk);
        }
        let err = (err / n.max(1) as f64).sqrt();

        if !err.is_finite() {
            h *= FAC_MIN;
            rejected = true;
            if h < cfg.h_min {
                return Err(FormationError::NonFiniteState { t });
            }
            continue;
        }

        let fac11 = err.powf(expo);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_next = h / fac;
            fac_old = err.max(1e-4);

            // Dense output on the sample grid points inside (t, t_new].
            while next <= n_grid && cfg.grid_time(next) <= t_new + slack {
                let tg = cfg.grid_time(next);
                let theta = (tg - t) / h;
                let theta1 = 1.0 - theta;
                let sample: Vec<f64> = (0..n)
                    .map(|i| {
                        let ydiff = y_new[i] - y[i];
                        let bspl = h * k1[i] - ydiff;
                        let r4 = ydiff - h * k7[i] - bspl;
                        let r5 = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                        y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)))
                    })
                    .collect();
                out.times.push(tg);
                out.states.push(sample);
                next += 1;
            }

            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            regime = regime_new;
            check_finite(t, &y)?;
            if rejected {
                h_next = h_next.min(h);
            }
            rejected = false;
            h = h_next.min(cfg.h_max);
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected = true;
            if h < cfg.h_min {
                return Err(FormationError::StepSizeUnderflow { t, h, h_min: cfg.h_min });
            }
        }
    }
    Ok(out)
}

/// Classical fixed-step 4th-order Runge–Kutta. Every step is recorded; the
/// last step is shortened to land exactly on `t_span.1`.
pub fn integrate_fixed_rk4<F>(mut rhs: F, y0: &[f64], h: f64, t_span: (f64, f64)) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(h > 0.0) {
        return Err(FormationError::Validation { path: "h".into(), message: format!("must be > 0, got {h}") });
    }
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(FormationError::Validation {
            path: "t_span".into(),
            message: format!("[{t0}, {t1}] is not increasing"),
        });
    }
    check_finite(t0, y0)?;
    let n = y0.len();
    let steps = ((t1 - t0) / h - 1e-9).ceil().max(1.0) as usize;
    let mut out = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        ..Default::default()
    };
    out.times.push(t0);
    out.states.push(y0.to_vec());

    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let t_next = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * h };
        let dt = t_next - t;
        rhs(t, &y, &mut k1)?;
        for i in 0..n {
            stage[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs(t + 0.5 * dt, &stage, &mut k2)?;
        for i in 0..n {
            stage[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs(t + 0.5 * dt, &stage, &mut k3)?;
        for i in 0..n {
            stage[i] = y[i] + dt * k3[i];
        }
        rhs(t_next, &stage, &mut k4)?;
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_finite(t_next, &y)?;
        out.times.push(t_next);
        out.states.push(y.clone());
    }
    Ok(out)
}
