//! Leader state recovered by the follower from its own sensing.
//!
//! The follower measures `(rho, alpha2)` and knows its own `(v2, u2)`.
//! Rearranging the shape dynamics gives
//!
//! ```text
//! v1 cos a1 = -rho' - v2 cos a2
//! v1 sin a1 = rho (a2' + u2) - v2 sin a2
//! u1        = -a1' + (v1 sin a1 + v2 sin a2) / rho
//! ```
//!
//! `v1 > 0` makes the polar recovery of `(v1, a1)` unique. `u1` needs a
//! second differentiation pass, on the recovered `a1`.

use serde::{Deserialize, Serialize};

use crate::analysis::PairSeries;
use crate::dynamics::ControlPair;
use crate::error::{FormationError, Result};
use crate::geometry::{unwrap_angles, wrap_angle};

/// Recovered speeds below this are treated as a broken assumption.
pub const MIN_LEADER_SPEED: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementSeries {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub own_controls: Vec<ControlPair>,
}

impl MeasurementSeries {
    /// What the follower of `series` would have measured.
    pub fn from_pair(series: &PairSeries) -> Self {
        Self {
            times: series.times.clone(),
            rho: series.rho.clone(),
            alpha2: series.alpha2.clone(),
            own_controls: series.follower.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Checks the invariants and returns the sample spacing.
    pub fn validate(&self) -> Result<f64> {
        let bad = |path: &str, message: String| {
            Err(FormationError::Validation { path: format!("measurements.{path}"), message })
        };
        let n = self.times.len();
        if self.rho.len() != n || self.alpha2.len() != n || self.own_controls.len() != n {
            return bad(
                "times",
                format!(
                    "length mismatch: times {n}, rho {}, alpha2 {}, controls {}",
                    self.rho.len(),
                    self.alpha2.len(),
                    self.own_controls.len()
                ),
            );
        }
        if n < 2 {
            return Err(FormationError::SeriesTooShort { len: n, window: 0 });
        }
        let dt = (self.times[n - 1] - self.times[0]) / (n - 1) as f64;
        if !(dt > 0.0) {
            return bad("times", "times must increase".into());
        }
        if let Some(k) = self.times.windows(2).position(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
            return bad("times", format!("non-uniform spacing at sample {k}"));
        }
        if let Some(k) = self.rho.iter().position(|r| !(*r > 0.0)) {
            return bad("rho", format!("rho must be > 0, got {} at sample {k}", self.rho[k]));
        }
        Ok(dt)
    }
}

/// Estimates on the trimmed grid `times`, which starts at sample
/// `first_index` of the input.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeaderEstimate {
    pub window: usize,
    pub first_index: usize,
    pub times: Vec<f64>,
    pub v1_hat: Vec<f64>,
    /// Wrapped to `(-pi, pi]`.
    pub alpha1_hat: Vec<f64>,
    pub u1_hat: Vec<f64>,
    /// Gap between the 3-point and 5-point-wide difference of `a1` at each
    /// sample: a proxy for the residual of the `a1'` equation.
    pub u1_residual: Vec<f64>,
}

impl LeaderEstimate {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_u1_residual(&self) -> f64 {
        self.u1_residual.iter().copied().fold(0.0, f64::max)
    }

    /// Sup-norm errors against the true pair the measurements came from.
    pub fn errors_against(&self, truth: &PairSeries) -> EstimateErrors {
        let mut e = EstimateErrors::default();
        for (j, k) in (self.first_index..self.first_index + self.len()).enumerate() {
            e.v1 = e.v1.max((self.v1_hat[j] - truth.leader[k].v).abs());
            e.alpha1 = e.alpha1.max(wrap_angle(self.alpha1_hat[j] - truth.alpha1[k]).abs());
            e.u1 = e.u1.max((self.u1_hat[j] - truth.leader[k].u).abs());
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateErrors {
    pub v1: f64,
    pub alpha1: f64,
    pub u1: f64,
}

/// Centered moving average; entry `j` is centered on input `j + half`.
fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let w = window as f64;
    x.windows(window).map(|s| s.iter().sum::<f64>() / w).collect()
}

/// Recovers the leader's speed, bearing and steering.
///
/// `window` is the width of the moving average applied to `rho` and the
/// unwrapped `alpha2` before differencing; it must be odd and at least 3.
pub fn estimate_leader(m: &MeasurementSeries, window: usize) -> Result<LeaderEstimate> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(FormationError::Validation {
            path: "window".into(),
            message: format!("must be an odd integer >= 3, got {window}"),
        });
    }
    let dt = m.validate()?;
    let n = m.len();
    // Per side: half the window, one for the first difference, two for the
    // wide stencil of the second pass.
    let half = window / 2;
    if n <= 2 * window || n < 2 * (half + 3) + 2 {
        return Err(FormationError::SeriesTooShort { len: n, window });
    }

    let rho = moving_average(&m.rho, window);
    let a2 = moving_average(&unwrap_angles(&m.alpha2), window);

    // First pass over input indices half+1 ..= n-half-2.
    let lo = half + 1;
    let hi = n - half - 2;
    let mut v1 = Vec::with_capacity(hi - lo + 1);
    let mut a1 = Vec::with_capacity(hi - lo + 1);
    for k in lo..=hi {
        let j = k - half;
        let r = rho[j];
        let rho_dot = (rho[j + 1] - rho[j - 1]) / (2.0 * dt);
        let a2_dot = (a2[j + 1] - a2[j - 1]) / (2.0 * dt);
        let own = m.own_controls[k];
        let c = -rho_dot - own.v * a2[j].cos();
        let s = r * (a2_dot + own.u) - own.v * a2[j].sin();
        let speed = c.hypot(s);
        if speed < MIN_LEADER_SPEED {
            return Err(FormationError::DegenerateSpeed { t: m.times[k], v1: speed });
        }
        v1.push(speed);
        a1.push(s.atan2(c));
    }
    let a1 = unwrap_angles(&a1);

    // Second pass over input indices lo+2 ..= hi-2.
    let mut out = LeaderEstimate { window, first_index: lo + 2, ..Default::default() };
    for k in lo + 2..=hi - 2 {
        let i = k - lo;
        let j = k - half;
        let narrow = (a1[i + 1] - a1[i - 1]) / (2.0 * dt);
        let wide = (a1[i + 2] - a1[i - 2]) / (4.0 * dt);
        let own = m.own_controls[k];
        let u1 = -narrow + (v1[i] * a1[i].sin() + own.v * a2[j].sin()) / rho[j];
        out.times.push(m.times[k]);
        out.v1_hat.push(v1[i]);
        out.alpha1_hat.push(wrap_angle(a1[i]));
        out.u1_hat.push(u1);
        out.u1_residual.push((narrow - wide).abs());
    }
    Ok(out)
}
