//! Scenario documents.
//!
//! A scenario is a TOML document. Every key is optional and falls back to the
//! two-agent sinusoidal-leader setup, so `mode = "robust"` alone is a valid
//! document. Numeric fields take a number or a multiple of pi written as a
//! string: `"pi"`, `"-pi/2"`, `"0.5*pi"`, `"3*pi/4"`.
//!
//! ```toml
//! name = "example"
//! mode = "ideal"            # or "robust"
//!
//! [leader]
//! k_u = 1.5                 # optional; defaults to the tight bound
//! v1 = { kind = "constant", value = 0.5 }
//! u1 = { kind = "sinusoid", offset = 0.5, amplitude = 1.0, omega = "pi" }
//! initial = { x = 0.0, y = 0.0, theta = "pi/4" }
//!
//! [[followers]]
//! x = 0.0
//! y = 1.0
//! theta = "pi"
//!
//! [controller]
//! mu1 = 1.0
//! mu2 = 2.0
//! mu_rho = 2.0
//! rho0 = 0.5
//! v_max = 1.0               # optional
//!
//! [integrator]
//! t_end = 40.0
//! sample_dt = 0.01
//! ```

use std::f64::consts::PI;

use serde::de::{self, Deserializer};
use serde::Deserialize;

use crate::control::{ControllerConfig, LeaderBounds, Mode, PotentialSpec};
use crate::error::{FormationError, Result};
use crate::geometry::AgentState;
use crate::integrator::IntegratorConfig;
use crate::scenarios::{LeaderProgram, ScenarioConfig, SpeedSignal, SteeringSignal};

/// Shipped presets, by name.
pub const PRESETS: [(&str, &str); 4] = [
    ("paper-fig2a", include_str!("../presets/paper-fig2a.toml")),
    ("paper-fig2b", include_str!("../presets/paper-fig2b.toml")),
    ("paper-robot", include_str!("../presets/paper-robot.toml")),
    ("paper-chain", include_str!("../presets/paper-chain.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

/// Source text of a preset. Accepts a `.cfg` or `.toml` suffix.
pub fn preset_text(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".toml").or_else(|| name.strip_suffix(".cfg")).unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == stem).map(|(_, text)| *text)
}

/// Parses a number or a pi expression such as `"-3*pi/4"`.
pub fn parse_scalar(text: &str) -> Option<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, s.strip_prefix('+').unwrap_or(&s)),
    };
    let pi_at = rest.find("pi")?;
    let coeff = match &rest[..pi_at] {
        "" => 1.0,
        c => c.strip_suffix('*').unwrap_or(c).parse::<f64>().ok()?,
    };
    let denom = match &rest[pi_at + 2..] {
        "" => 1.0,
        d => d.strip_prefix('/')?.parse::<f64>().ok()?,
    };
    let v = sign * coeff * PI / denom;
    v.is_finite().then_some(v)
}

/// A float that may be written as a pi expression.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Num(f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Float(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Float(v) => Ok(Num(v)),
            Raw::Int(v) => Ok(Num(v as f64)),
            Raw::Text(s) => parse_scalar(&s)
                .map(Num)
                .ok_or_else(|| de::Error::custom(format!("not a number or pi expression: {s:?}"))),
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Document {
    name: Option<String>,
    mode: Option<Mode>,
    #[serde(default)]
    leader: LeaderDoc,
    followers: Option<Vec<PoseDoc>>,
    #[serde(default)]
    controller: ControllerDoc,
    #[serde(default)]
    integrator: IntegratorDoc,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LeaderDoc {
    k_v: Option<Num>,
    k_u: Option<Num>,
    v1: Option<SpeedDoc>,
    u1: Option<SteeringDoc>,
    initial: Option<PoseDoc>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SpeedDoc {
    Constant { value: Num },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SteeringDoc {
    Zero,
    Constant { value: Num },
    Sinusoid { offset: Num, amplitude: Num, omega: Num },
    GaussianImpulse { amplitude: Num, sigma: Num, center: Num },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    x: Num,
    y: Num,
    theta: Num,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ControllerDoc {
    mu1: Option<Num>,
    mu2: Option<Num>,
    mu_rho: Option<Num>,
    rho0: Option<Num>,
    v_max: Option<Num>,
    u_max: Option<Num>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct IntegratorDoc {
    rtol: Option<Num>,
    atol: Option<Num>,
    h_init: Option<Num>,
    h_min: Option<Num>,
    h_max: Option<Num>,
    h_switch: Option<Num>,
    t_start: Option<Num>,
    t_end: Option<Num>,
    sample_dt: Option<Num>,
}

impl PoseDoc {
    fn pose(&self) -> AgentState {
        AgentState::new(self.x.0, self.y.0, self.theta.0)
    }
}

fn or(v: Option<Num>, default: f64) -> f64 {
    v.map_or(default, |n| n.0)
}

impl Document {
    fn resolve(self) -> ScenarioConfig {
        let base = ScenarioConfig::paper_fig2a();
        let mode = self.mode.unwrap_or(base.controller.mode);

        let v1 = match self.leader.v1 {
            Some(SpeedDoc::Constant { value }) => SpeedSignal::Constant { value: value.0 },
            None => base.leader.v1,
        };
        let u1 = match self.leader.u1 {
            Some(SteeringDoc::Zero) => SteeringSignal::Zero,
            Some(SteeringDoc::Constant { value }) => SteeringSignal::Constant { value: value.0 },
            Some(SteeringDoc::Sinusoid { offset, amplitude, omega }) => {
                SteeringSignal::Sinusoid { offset: offset.0, amplitude: amplitude.0, omega: omega.0 }
            }
            Some(SteeringDoc::GaussianImpulse { amplitude, sigma, center }) => {
                SteeringSignal::GaussianImpulse { amplitude: amplitude.0, sigma: sigma.0, center: center.0 }
            }
            None => base.leader.u1,
        };
        let tight = LeaderProgram::with_tight_bounds(v1, u1).bounds;
        let leader = LeaderProgram {
            v1,
            u1,
            bounds: LeaderBounds { k_v: or(self.leader.k_v, tight.k_v), k_u: or(self.leader.k_u, tight.k_u) },
        };

        let c = self.controller;
        let b = base.controller;
        let controller = ControllerConfig {
            mu1: or(c.mu1, b.mu1),
            mu2: or(c.mu2, b.mu2),
            potential: PotentialSpec { mu_rho: or(c.mu_rho, b.potential.mu_rho), rho0: or(c.rho0, b.potential.rho0) },
            mode,
            v_max: c.v_max.map(|n| n.0),
            u_max: c.u_max.map(|n| n.0),
        };

        let i = self.integrator;
        let d = IntegratorConfig::default();
        let integrator = IntegratorConfig {
            rtol: or(i.rtol, d.rtol),
            atol: or(i.atol, d.atol),
            h_init: or(i.h_init, d.h_init),
            h_min: or(i.h_min, d.h_min),
            h_max: or(i.h_max, d.h_max),
            h_switch: or(i.h_switch, d.h_switch),
            t_start: or(i.t_start, d.t_start),
            t_end: or(i.t_end, d.t_end),
            sample_dt: or(i.sample_dt, d.sample_dt),
        };

        ScenarioConfig {
            name: self.name.unwrap_or_else(|| "scenario".into()),
            leader,
            leader_state0: self.leader.initial.map_or(base.leader_state0, |p| p.pose()),
            follower_states0: self.followers.map_or(base.follower_states0, |f| f.iter().map(PoseDoc::pose).collect()),
            controller,
            integrator,
        }
    }
}

/// Parses a TOML document, fills defaults and validates the result.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let doc: Document = toml::from_str(text).map_err(|e| FormationError::Parse(e.to_string()))?;
    let cfg = doc.resolve();
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a document after applying `path = value` overrides. A path is
/// dotted with numeric segments indexing arrays, e.g. `followers.0.x` or
/// `controller.mu1`. Missing tables are created.
pub fn parse_config_with(text: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| FormationError::Parse(e.to_string()))?;
    for (path, value) in overrides {
        set_path(&mut doc, path, override_value(value))?;
    }
    let text = toml::to_string(&doc).map_err(|e| FormationError::Parse(e.to_string()))?;
    parse_config(&text)
}

fn override_value(text: &str) -> toml::Value {
    let t = text.trim();
    if let Ok(i) = t.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = t.parse::<f64>() {
        toml::Value::Float(f)
    } else {
        toml::Value::String(t.to_string())
    }
}

fn set_path(doc: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let bad = |message: String| FormationError::Validation { path: path.to_string(), message };
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(bad("empty path segment".into()));
    }
    let (last, parents) = segments.split_last().expect("split yields one segment");
    let mut node = doc
        .entry(parents.first().copied().unwrap_or(last).to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if parents.is_empty() {
        *node = value;
        return Ok(());
    }
    for seg in parents[1..].iter().chain(std::iter::once(last)) {
        node = match node {
            toml::Value::Table(t) => t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let idx: usize = seg.parse().map_err(|_| bad(format!("{seg:?} is not an array index")))?;
                a.get_mut(idx).ok_or_else(|| bad(format!("index {idx} out of range")))?
            }
            _ => return Err(bad(format!("cannot descend into {seg:?}"))),
        };
    }
    *node = value;
    Ok(())
}
