//! Feedback laws for the follower: constant-bearing steering, the ideal and
//! leader-independent speed laws, the distance potential, and actuator limits.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::geometry::{guard_rho, wrap_angle, ReducedShapeState, ShapeState};

/// Distance potential `f(rho) = mu_rho (rho^2 - rho0^2) / rho^2` and its
/// antiderivative `g` vanishing at `rho0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub mu_rho: f64,
    pub rho0: f64,
}

impl PotentialSpec {
    pub fn new(mu_rho: f64, rho0: f64) -> Result<Self> {
        if !(mu_rho > 0.0) {
            return Err(FormationError::Validation { path: "mu_rho".into(), message: "must be > 0".into() });
        }
        if !(rho0 > 0.0) {
            return Err(FormationError::Validation { path: "rho0".into(), message: "must be > 0".into() });
        }
        Ok(Self { mu_rho, rho0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Speed law with the leader's steering fed forward.
    Ideal,
    /// Leader-independent speed law (no `u1` term).
    Robust,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ideal => "ideal",
            Mode::Robust => "robust",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = FormationError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Mode::Ideal),
            "robust" => Ok(Mode::Robust),
            other => Err(FormationError::Validation {
                path: "mode".into(),
                message: format!("expected `ideal` or `robust`, got `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub mu1: f64,
    pub mu2: f64,
    pub potential: PotentialSpec,
    pub mode: Mode,
    pub v_max: Option<f64>,
    pub u_max: Option<f64>,
}

impl ControllerConfig {
    /// Gains used for the two-agent simulations (`mu1 = 1`, `mu2 = 2`,
    /// `mu_rho = 2`, `rho0 = 0.5`), no actuator limits.
    pub fn standard(mode: Mode) -> Self {
        Self { mu1: 1.0, mu2: 2.0, potential: PotentialSpec { mu_rho: 2.0, rho0: 0.5 }, mode, v_max: None, u_max: None }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |path: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(FormationError::Validation {
                    path: format!("controller.{path}"),
                    message: format!("must be a finite value > 0, got {x}"),
                })
            }
        };
        positive("mu1", self.mu1)?;
        positive("mu2", self.mu2)?;
        positive("mu_rho", self.potential.mu_rho)?;
        positive("rho0", self.potential.rho0)?;
        if let Some(v) = self.v_max {
            positive("v_max", v)?;
        }
        if let Some(u) = self.u_max {
            positive("u_max", u)?;
        }
        Ok(())
    }

    /// Applies the speed floor and optional `v_max`.
    pub fn limit_speed(&self, v: f64) -> f64 {
        saturate_speed(v, self.v_max)
    }

    pub fn limit_steering(&self, u: f64) -> f64 {
        match self.u_max {
            Some(b) => saturate(u, b),
            None => u,
        }
    }
}

/// Assumed bounds on the leader: `0 < v1 <= k_v`, `|u1| <= k_u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderBounds {
    pub k_v: f64,
    pub k_u: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 {
        Ok(())
    } else {
        Err(FormationError::NonpositiveDistance(rho))
    }
}

pub fn potential_g(spec: &PotentialSpec, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let r0 = spec.rho0;
    Ok(spec.mu_rho * (rho - 2.0 * r0 + r0 * r0 / rho))
}

pub fn potential_f(spec: &PotentialSpec, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let r0 = spec.rho0;
    Ok(spec.mu_rho * (rho * rho - r0 * r0) / (rho * rho))
}

/// `f'(rho) = 2 mu_rho rho0^2 / rho^3`.
pub fn potential_f_prime(spec: &PotentialSpec, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let r0 = spec.rho0;
    Ok(2.0 * spec.mu_rho * r0 * r0 / (rho * rho * rho))
}

/// Constant-bearing steering. Under this law `d(alpha2)/dt = mu2 cos(alpha2)`.
pub fn steering_cb(z: &ShapeState, v1: f64, v2: f64, mu2: f64) -> Result<f64> {
    guard_rho(z.rho)?;
    Ok(-mu2 * z.alpha2.cos() + (v1 * z.alpha1.sin() + v2 * z.alpha2.sin()) / z.rho)
}

/// Unsaturated ideal speed law.
pub fn speed_ideal_raw(z1: &ReducedShapeState, v1: f64, u1: f64, mu1: f64, spec: &PotentialSpec) -> Result<f64> {
    guard_rho(z1.rho)?;
    let f = potential_f(spec, z1.rho)?;
    let (s1, c1) = z1.alpha1.sin_cos();
    Ok(-v1 * s1 + z1.rho * (u1 - mu1 * c1 + v1 * f))
}

/// Unsaturated leader-independent speed law: the ideal law with `u1 = 0`.
pub fn speed_robust_raw(z1: &ReducedShapeState, v1: f64, mu1: f64, spec: &PotentialSpec) -> Result<f64> {
    speed_ideal_raw(z1, v1, 0.0, mu1, spec)
}

pub fn speed_ideal(z1: &ReducedShapeState, v1: f64, u1: f64, cfg: &ControllerConfig) -> Result<f64> {
    Ok(cfg.limit_speed(speed_ideal_raw(z1, v1, u1, cfg.mu1, &cfg.potential)?))
}

pub fn speed_robust(z1: &ReducedShapeState, v1: f64, cfg: &ControllerConfig) -> Result<f64> {
    Ok(cfg.limit_speed(speed_robust_raw(z1, v1, cfg.mu1, &cfg.potential)?))
}

/// Raw speed command for the configured mode. `u1` is ignored in robust mode.
pub fn speed_command_raw(z1: &ReducedShapeState, v1: f64, u1: f64, cfg: &ControllerConfig) -> Result<f64> {
    match cfg.mode {
        Mode::Ideal => speed_ideal_raw(z1, v1, u1, cfg.mu1, &cfg.potential),
        Mode::Robust => speed_robust_raw(z1, v1, cfg.mu1, &cfg.potential),
    }
}

/// Exact solution of `d(alpha2)/dt = mu2 cos(alpha2)`:
/// `sin(alpha2(t)) = tanh(mu2 t + atanh(sin(alpha2(0))))`.
///
/// The result lies on the branch continuously connected to `alpha2_0` (it
/// is not wrapped), so it tends to `pi/2` modulo `2 pi`.
pub fn closed_form_alpha2(t: f64, alpha2_0: f64, mu2: f64) -> Result<f64> {
    let wrapped = wrap_angle(alpha2_0);
    let offset = alpha2_0 - wrapped;
    if (wrapped + FRAC_PI_2).abs() < 1e-12 {
        return Err(FormationError::ExcludedInitialCondition);
    }
    // w = mu2 t + atanh(sin a0); atanh(1) = inf is handled by tanh/cosh.
    let w = mu2 * t + wrapped.sin().atanh();
    let s = w.tanh();
    let c = 1.0 / w.cosh();
    let a = if wrapped.abs() <= FRAC_PI_2 {
        s.atan2(c)
    } else {
        // cos(alpha2) < 0: alpha2 decreases (mod 2 pi) toward pi/2.
        let a = s.atan2(-c);
        if wrapped < 0.0 && a > 0.0 {
            a - TAU
        } else {
            a
        }
    };
    debug_assert!(a.is_finite() && a.abs() <= PI + FRAC_PI_2 + 1e-12);
    Ok(a + offset)
}

/// Clamps to `[-bound, bound]`.
pub fn saturate(value: f64, bound: f64) -> f64 {
    value.clamp(-bound, bound)
}

/// Clamps a speed to `[0, bound]`; with no bound only the floor applies.
pub fn saturate_speed(value: f64, bound: Option<f64>) -> f64 {
    let v = value.max(0.0);
    match bound {
        Some(b) => v.min(b),
        None => v,
    }
}
