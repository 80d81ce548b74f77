//! The named experiments: the two-agent closed loop in either speed-law mode
//! and the N-agent follower chain.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::analysis::{descent_report, detect_periodic_orbit, DescentReport, PairSeries, PeriodicityReport};
use crate::control::{speed_command_raw, steering_cb, ControllerConfig, LeaderBounds, Mode};
use crate::dynamics::{shape_rhs, world_rhs, ControlPair};
use crate::error::{FormationError, Result};
use crate::geometry::{follower_from_shape, shape_from_world, AgentState, ShapeState, RHO_EPS};
use crate::integrator::{
    integrate_adaptive_switched, integrate_fixed_rk4, Event, EventKind, IntegratorConfig, Trajectory,
};

/// Relative slack when checking leader signals against their declared bounds.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedSignal {
    Constant { value: f64 },
}

impl SpeedSignal {
    pub fn eval(&self, _t: f64) -> f64 {
        match *self {
            SpeedSignal::Constant { value } => value,
        }
    }

    fn sup(&self) -> f64 {
        match *self {
            SpeedSignal::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteeringSignal {
    Zero,
    Constant {
        value: f64,
    },
    /// `offset + amplitude * sin(omega * t)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        omega: f64,
    },
    /// `amplitude * exp(-(t - center)^2 / (2 sigma^2))`.
    GaussianImpulse {
        amplitude: f64,
        sigma: f64,
        center: f64,
    },
}

impl SteeringSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            SteeringSignal::Zero => 0.0,
            SteeringSignal::Constant { value } => value,
            SteeringSignal::Sinusoid { offset, amplitude, omega } => offset + amplitude * (omega * t).sin(),
            SteeringSignal::GaussianImpulse { amplitude, sigma, center } => {
                let s = (t - center) / sigma;
                amplitude * (-0.5 * s * s).exp()
            }
        }
    }

    /// Tight bound on `|u1(t)|` over `t >= 0`.
    fn sup(&self) -> f64 {
        match *self {
            SteeringSignal::Zero => 0.0,
            SteeringSignal::Constant { value } => value.abs(),
            SteeringSignal::Sinusoid { offset, amplitude, .. } => offset.abs() + amplitude.abs(),
            SteeringSignal::GaussianImpulse { amplitude, .. } => amplitude.abs(),
        }
    }

    /// Period of the signal when it is periodic and non-constant.
    pub fn period(&self) -> Option<f64> {
        match *self {
            SteeringSignal::Sinusoid { omega, amplitude, .. } if omega != 0.0 && amplitude != 0.0 => {
                Some(TAU / omega.abs())
            }
            _ => None,
        }
    }
}

/// Open-loop program of the lead agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderProgram {
    pub v1: SpeedSignal,
    pub u1: SteeringSignal,
    pub bounds: LeaderBounds,
}

impl LeaderProgram {
    /// Program with bounds set to the tight supremum of each signal.
    pub fn with_tight_bounds(v1: SpeedSignal, u1: SteeringSignal) -> Self {
        let bounds = LeaderBounds { k_v: v1.sup(), k_u: u1.sup().max(1e-12) };
        Self { v1, u1, bounds }
    }

    /// Constant speed 0.5 m/s, steering `0.5 + sin(pi t)`.
    pub fn paper_sinusoid() -> Self {
        Self::with_tight_bounds(
            SpeedSignal::Constant { value: 0.5 },
            SteeringSignal::Sinusoid { offset: 0.5, amplitude: 1.0, omega: PI },
        )
    }

    /// Evaluation without the bound check; used inside right-hand sides.
    pub fn eval_unchecked(&self, t: f64) -> ControlPair {
        ControlPair::new(self.v1.eval(t), self.u1.eval(t))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| Err(FormationError::Validation { path: path.into(), message });
        if !(self.bounds.k_v > 0.0) {
            return bad("leader.k_v", format!("must be > 0, got {}", self.bounds.k_v));
        }
        if !(self.bounds.k_u > 0.0) {
            return bad("leader.k_u", format!("must be > 0, got {}", self.bounds.k_u));
        }
        match self.u1 {
            SteeringSignal::GaussianImpulse { sigma, .. } if !(sigma > 0.0) => {
                return bad("leader.u1.sigma", format!("must be > 0, got {sigma}"));
            }
            _ => {}
        }
        let SpeedSignal::Constant { value } = self.v1;
        if !(value > 0.0) {
            return bad("leader.v1.value", format!("leader speed must be > 0, got {value}"));
        }
        // The program must respect its own declared bounds.
        if self.v1.sup() > self.bounds.k_v * (1.0 + BOUND_SLACK) {
            return bad(
                "leader.k_v",
                format!("{} is below the speed program's peak {}", self.bounds.k_v, self.v1.sup()),
            );
        }
        if self.u1.sup() > self.bounds.k_u * (1.0 + BOUND_SLACK) {
            return bad(
                "leader.k_u",
                format!("{} is below the steering program's peak {}", self.bounds.k_u, self.u1.sup()),
            );
        }
        Ok(())
    }
}

/// Evaluates the leader program at `t`, enforcing `0 < v1 <= k_v` and `|u1| <= k_u`.
pub fn eval_leader(prog: &LeaderProgram, t: f64) -> Result<ControlPair> {
    let c = prog.eval_unchecked(t);
    let k_v = prog.bounds.k_v;
    if !(c.v > 0.0 && c.v <= k_v * (1.0 + BOUND_SLACK)) {
        return Err(FormationError::BoundsViolation { t, signal: "v1", value: c.v, bound: k_v });
    }
    let k_u = prog.bounds.k_u;
    if !(c.u.abs() <= k_u * (1.0 + BOUND_SLACK)) {
        return Err(FormationError::BoundsViolation { t, signal: "u1", value: c.u, bound: k_u });
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub leader: LeaderProgram,
    pub leader_state0: AgentState,
    pub follower_states0: Vec<AgentState>,
    pub controller: ControllerConfig,
    pub integrator: IntegratorConfig,
}

impl ScenarioConfig {
    pub fn n_agents(&self) -> usize {
        1 + self.follower_states0.len()
    }

    /// Initial poses, leader first.
    pub fn initial_poses(&self) -> Vec<AgentState> {
        std::iter::once(self.leader_state0).chain(self.follower_states0.iter().copied()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.controller.validate()?;
        self.integrator.validate()?;
        self.leader.validate()?;
        if self.follower_states0.is_empty() {
            return Err(FormationError::Validation {
                path: "followers".into(),
                message: "at least one follower is required".into(),
            });
        }
        let poses = self.initial_poses();
        for (i, a) in poses.iter().enumerate() {
            if !(a.r.is_finite() && a.theta.is_finite()) {
                return Err(FormationError::Validation {
                    path: format!("agents[{i}]"),
                    message: "non-finite initial pose".into(),
                });
            }
            for (j, b) in poses.iter().enumerate().skip(i + 1) {
                if (a.r - b.r).norm() <= RHO_EPS {
                    return Err(FormationError::InfeasibleInitialState(format!(
                        "agents {} and {} start at the same position",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    fn base(name: &str, mode: Mode) -> Self {
        Self {
            name: name.into(),
            leader: LeaderProgram::paper_sinusoid(),
            leader_state0: AgentState::new(0.0, 0.0, FRAC_PI_4),
            follower_states0: vec![AgentState::new(0.0, 1.0, PI)],
            controller: ControllerConfig::standard(mode),
            integrator: IntegratorConfig::default(),
        }
    }

    /// Two-agent simulation with the leader's steering known to the follower.
    pub fn paper_fig2a() -> Self {
        Self::base("paper-fig2a", Mode::Ideal)
    }

    /// Same initial conditions with the leader-independent speed law.
    pub fn paper_fig2b() -> Self {
        Self::base("paper-fig2b", Mode::Robust)
    }

    /// Mobile-robot parameters, including the robots' actuator limits.
    pub fn paper_robot() -> Self {
        Self {
            name: "paper-robot".into(),
            leader: LeaderProgram::with_tight_bounds(
                SpeedSignal::Constant { value: 0.08 },
                SteeringSignal::Sinusoid { offset: 0.2, amplitude: 0.5, omega: 0.5 * PI },
            ),
            leader_state0: AgentState::new(0.287, 0.005, 1.553),
            follower_states0: vec![AgentState::new(0.767, 0.685, -1.574)],
            controller: ControllerConfig {
                mu1: 1.5,
                mu2: 2.0,
                potential: crate::control::PotentialSpec { mu_rho: 20.0, rho0: 0.2 },
                mode: Mode::Robust,
                v_max: Some(0.22),
                u_max: Some(2.84),
            },
            integrator: IntegratorConfig { t_end: 30.0, ..Default::default() },
        }
    }

    /// Five-agent chain hit by a Gaussian steering impulse. Follower gains
    /// reuse the two-agent values.
    pub fn paper_chain() -> Self {
        Self {
            name: "paper-chain".into(),
            leader: LeaderProgram::with_tight_bounds(
                SpeedSignal::Constant { value: 0.5 },
                SteeringSignal::GaussianImpulse { amplitude: 1.0, sigma: 1.0, center: 5.0 },
            ),
            leader_state0: AgentState::new(0.0, -0.5, 0.0),
            follower_states0: (2..=5).map(|i| AgentState::new(0.0, -0.5 * i as f64, 0.0)).collect(),
            controller: ControllerConfig { v_max: Some(1.0), ..ControllerConfig::standard(Mode::Ideal) },
            integrator: IntegratorConfig { t_end: 30.0, ..Default::default() },
        }
    }
}

/// Output of a run. `shape_traj` holds `(rho, alpha1, alpha2)` per pair
/// (unwrapped, as integrated or derived), `world_traj` holds `(x, y, theta)`
/// per agent. Both carry the applied per-agent controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub mode: Mode,
    pub shape_traj: Trajectory,
    pub world_traj: Trajectory,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// One report per leader/follower pair.
    pub descent: Vec<DescentReport>,
    pub periodicity: Option<PeriodicityReport>,
}

impl RunResult {
    pub fn n_agents(&self) -> usize {
        self.world_traj.states.first().map_or(0, |s| s.len() / 3)
    }

    pub fn times(&self) -> &[f64] {
        &self.shape_traj.times
    }

    pub fn control_traj(&self) -> &[Vec<ControlPair>] {
        &self.shape_traj.controls
    }

    pub fn events(&self) -> &[Event] {
        &self.shape_traj.events
    }

    /// Shape state of pair `(pair + 1, pair + 2)` at sample `k`.
    pub fn shape_at(&self, k: usize, pair: usize) -> ShapeState {
        let s = &self.shape_traj.states[k];
        ShapeState { rho: s[3 * pair], alpha1: s[3 * pair + 1], alpha2: s[3 * pair + 2] }
    }

    pub fn pose_at(&self, k: usize, agent: usize) -> AgentState {
        let s = &self.world_traj.states[k];
        AgentState::new(s[3 * agent], s[3 * agent + 1], s[3 * agent + 2])
    }

    pub fn pair_series(&self, pair: usize) -> PairSeries {
        PairSeries::from_trajectory(&self.shape_traj, pair)
    }
}

/// Controls produced by the follower stack for one pair, with limiter flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FollowerCommand {
    pub applied: ControlPair,
    pub floor: bool,
    pub speed_clamp: bool,
    pub steering_clamp: bool,
}

/// Speed law floored at zero, constant-bearing steering computed from that
/// command, then the actuator limits on both.
pub(crate) fn follower_command(
    z: &ShapeState,
    leader: ControlPair,
    cfg: &ControllerConfig,
    mode: Mode,
) -> Result<FollowerCommand> {
    let z1 = z.reduced();
    let raw_v = speed_command_raw(&z1, leader.v, leader.u, &ControllerConfig { mode, ..*cfg })?;
    let commanded = raw_v.max(0.0);
    let v = cfg.limit_speed(raw_v);
    let raw_u = steering_cb(z, leader.v, commanded, cfg.mu2)?;
    let u = cfg.limit_steering(raw_u);
    Ok(FollowerCommand {
        applied: ControlPair::new(v, u),
        floor: raw_v < 0.0,
        speed_clamp: cfg.v_max.is_some_and(|b| raw_v > b),
        steering_clamp: u != raw_u,
    })
}

impl FollowerCommand {
    fn flags(&self) -> [bool; 3] {
        [self.floor, self.speed_clamp, self.steering_clamp]
    }

    fn regime(&self) -> u64 {
        regime_of(&[self.flags()])
    }
}

/// Packs limiter flags into a bitmask, three bits per agent.
fn regime_of(flags: &[[bool; 3]]) -> u64 {
    flags.iter().flatten().enumerate().fold(0u64, |acc, (i, &on)| acc | (u64::from(on) << (i % 64)))
}

/// Appends on/off events for limiter flags that changed since the previous sample.
fn record_transitions(events: &mut Vec<Event>, prev: &mut [[bool; 3]], t: f64, agent_flags: &[(usize, [bool; 3])]) {
    const KINDS: [EventKind; 3] = [EventKind::SpeedFloor, EventKind::SpeedClamp, EventKind::SteeringClamp];
    for &(agent, flags) in agent_flags {
        for (j, kind) in KINDS.iter().enumerate() {
            if flags[j] != prev[agent - 1][j] {
                events.push(Event { t, agent, kind: *kind, engaged: flags[j] });
                prev[agent - 1][j] = flags[j];
            }
        }
    }
}

fn check_leader_on_grid(prog: &LeaderProgram, times: &[f64]) -> Result<()> {
    times.iter().try_for_each(|&t| eval_leader(prog, t).map(|_| ()))
}

/// Two-agent right-hand side over `[rho, alpha1, alpha2, x1, y1, theta1]`.
/// Returns the follower's limiter bitmask as the regime tag.
fn two_agent_rhs<'a>(cfg: &'a ScenarioConfig, mode: Mode) -> impl Fn(f64, &[f64], &mut [f64]) -> Result<u64> + 'a {
    move |t, y, dy| {
        let z = ShapeState { rho: y[0], alpha1: y[1], alpha2: y[2] };
        let leader = cfg.leader.eval_unchecked(t);
        let cmd = follower_command(&z, leader, &cfg.controller, mode)?;
        let d = shape_rhs(&z, leader, cmd.applied)?;
        let w = world_rhs(&AgentState::new(y[3], y[4], y[5]), leader);
        dy[0] = d.drho;
        dy[1] = d.dalpha1;
        dy[2] = d.dalpha2;
        dy[3] = w.dr.x;
        dy[4] = w.dr.y;
        dy[5] = w.dtheta;
        Ok(cmd.regime())
    }
}

fn two_agent_initial(cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    let z0 = shape_from_world(&cfg.leader_state0, &cfg.follower_states0[0])?;
    let l = cfg.leader_state0;
    Ok(vec![z0.rho, z0.alpha1, z0.alpha2, l.r.x, l.r.y, l.theta])
}

/// Fills controls, events and the world trajectory from integrated
/// two-agent states.
fn finish_two_agent(cfg: &ScenarioConfig, mode: Mode, raw: Trajectory) -> Result<RunResult> {
    check_leader_on_grid(&cfg.leader, &raw.times)?;
    let mut shape = Trajectory { times: raw.times.clone(), ..Default::default() };
    let mut world = Trajectory { times: raw.times.clone(), ..Default::default() };
    let mut prev = vec![[false; 3]; 2];
    let mut events = Vec::new();
    for (t, y) in raw.times.iter().zip(&raw.states) {
        let z = ShapeState { rho: y[0], alpha1: y[1], alpha2: y[2] };
        let leader = cfg.leader.eval_unchecked(*t);
        let cmd = follower_command(&z, leader, &cfg.controller, mode)?;
        record_transitions(&mut events, &mut prev, *t, &[(2, cmd.flags())]);
        let lp = AgentState::new(y[3], y[4], y[5]);
        let fp = follower_from_shape(&lp, &z);
        shape.states.push(y[..3].to_vec());
        world.states.push(vec![lp.r.x, lp.r.y, lp.theta, fp.r.x, fp.r.y, fp.theta]);
        shape.controls.push(vec![leader, cmd.applied]);
    }
    world.controls = shape.controls.clone();
    shape.events = events.clone();
    world.events = events;
    build_result(cfg, mode, shape, world)
}

/// Steering bound of the leader of `pair`. Deeper in a chain the pair leader
/// is itself a follower, bounded only by `u_max`.
pub fn pair_leader_bound(cfg: &ScenarioConfig, pair: usize) -> Option<f64> {
    if pair == 0 {
        Some(cfg.leader.bounds.k_u)
    } else {
        cfg.controller.u_max
    }
}

fn build_result(cfg: &ScenarioConfig, mode: Mode, shape: Trajectory, world: Trajectory) -> Result<RunResult> {
    let mut result = RunResult {
        name: cfg.name.clone(),
        mode,
        shape_traj: shape,
        world_traj: world,
        diagnostics: Diagnostics::default(),
    };
    let controller = ControllerConfig { mode, ..cfg.controller };
    let n_pairs = cfg.n_agents() - 1;
    for pair in 0..n_pairs {
        let k_u = pair_leader_bound(cfg, pair);
        let series = result.pair_series(pair);
        result.diagnostics.descent.push(descent_report(&series, &controller, k_u));
    }
    if mode == Mode::Robust && n_pairs == 1 {
        if let Some(period) = cfg.leader.u1.period() {
            let settle = default_settle_time(&cfg.integrator);
            // Skipped when the horizon cannot hold two periods after settling.
            if let Ok(report) = detect_periodic_orbit(
                &result.pair_series(0),
                period,
                settle,
                crate::analysis::DEFAULT_PERIODIC_THRESHOLD,
            ) {
                result.diagnostics.periodicity = Some(report);
            }
        }
    }
    Ok(result)
}

/// Settle time used when none is given: three quarters of the horizon.
pub fn default_settle_time(cfg: &IntegratorConfig) -> f64 {
    let span = cfg.t_end - cfg.t_start;
    let raw = cfg.t_start + 0.75 * span;
    // Snap to the sample grid.
    cfg.t_start + (((raw - cfg.t_start) / cfg.sample_dt).round() * cfg.sample_dt)
}

/// Runs the two-agent closed loop: full three-state shape dynamics with
/// constant-bearing steering and the speed law selected by `mode`.
pub fn run_two_agent(cfg: &ScenarioConfig, mode: Mode) -> Result<RunResult> {
    cfg.validate()?;
    if cfg.n_agents() != 2 {
        return Err(FormationError::Validation {
            path: "followers".into(),
            message: format!("two-agent run needs exactly one follower, got {}", cfg.follower_states0.len()),
        });
    }
    let y0 = two_agent_initial(cfg)?;
    let raw = integrate_adaptive_switched(two_agent_rhs(cfg, mode), &y0, &cfg.integrator)?;
    finish_two_agent(cfg, mode, raw)
}

/// Same closed loop integrated with fixed-step RK4 at step `h`; output is
/// decimated to the configured sample grid when `h` divides `sample_dt`.
pub fn run_two_agent_fixed(cfg: &ScenarioConfig, mode: Mode, h: f64) -> Result<RunResult> {
    cfg.validate()?;
    let y0 = two_agent_initial(cfg)?;
    let span = (cfg.integrator.t_start, cfg.integrator.t_end);
    let rhs = two_agent_rhs(cfg, mode);
    let raw = integrate_fixed_rk4(|t, y, dy| rhs(t, y, dy).map(|_| ()), &y0, h, span)?;
    let stride = (cfg.integrator.sample_dt / h).round() as usize;
    let raw = if stride >= 1 && ((stride as f64) * h - cfg.integrator.sample_dt).abs() < 1e-12 {
        Trajectory {
            times: raw.times.iter().step_by(stride).copied().collect(),
            states: raw.states.into_iter().step_by(stride).collect(),
            ..Default::default()
        }
    } else {
        raw
    };
    finish_two_agent(cfg, mode, raw)
}

/// Applied controls of every agent in the chain at one instant, with limiter
/// flags per follower. Follower `i + 1` sees only the pair `(i, i + 1)` and
/// agent `i`'s applied controls.
pub(crate) fn chain_controls(
    cfg: &ScenarioConfig,
    t: f64,
    poses: &[AgentState],
) -> Result<(Vec<ControlPair>, Vec<[bool; 3]>)> {
    let n = poses.len();
    let mut controls = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    controls.push(cfg.leader.eval_unchecked(t));
    flags.push([false; 3]);
    for i in 0..n - 1 {
        let z = shape_from_world(&poses[i], &poses[i + 1]).map_err(|_| FormationError::ChainCollision {
            t,
            leader: i + 1,
            follower: i + 2,
            rho: (poses[i + 1].r - poses[i].r).norm(),
        })?;
        let cmd = follower_command(&z, controls[i], &cfg.controller, Mode::Ideal)?;
        controls.push(cmd.applied);
        flags.push([cmd.floor, cmd.speed_clamp, cmd.steering_clamp]);
    }
    Ok((controls, flags))
}

/// Controls of every agent for a flat world-state vector `[x, y, theta]*`.
pub fn chain_controls_at(cfg: &ScenarioConfig, t: f64, state: &[f64]) -> Result<Vec<ControlPair>> {
    Ok(chain_controls(cfg, t, &poses_from_flat(state))?.0)
}

fn poses_from_flat(y: &[f64]) -> Vec<AgentState> {
    y.chunks_exact(3).map(|p| AgentState::new(p[0], p[1], p[2])).collect()
}

/// Runs the follower chain. Agent 1 follows the leader program; each
/// follower runs the ideal stack against its predecessor's applied controls.
/// The coupled system is integrated in world coordinates.
pub fn run_chain(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    if cfg.controller.mode != Mode::Ideal {
        return Err(FormationError::Validation {
            path: "mode".into(),
            message: "chain followers run the ideal speed law; mode must be \"ideal\"".into(),
        });
    }
    let y0: Vec<f64> = cfg.initial_poses().iter().flat_map(|p| [p.r.x, p.r.y, p.theta]).collect();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<u64> {
        let poses = poses_from_flat(y);
        let (controls, flags) = chain_controls(cfg, t, &poses)?;
        for (i, (p, c)) in poses.iter().zip(&controls).enumerate() {
            let w = world_rhs(p, *c);
            dy[3 * i] = w.dr.x;
            dy[3 * i + 1] = w.dr.y;
            dy[3 * i + 2] = w.dtheta;
        }
        Ok(regime_of(&flags))
    };
    let raw = integrate_adaptive_switched(rhs, &y0, &cfg.integrator)?;
    check_leader_on_grid(&cfg.leader, &raw.times)?;

    let n = cfg.n_agents();
    let mut shape = Trajectory { times: raw.times.clone(), ..Default::default() };
    let mut world = Trajectory { times: raw.times.clone(), ..Default::default() };
    let mut prev = vec![[false; 3]; n];
    let mut events = Vec::new();
    for (t, y) in raw.times.iter().zip(&raw.states) {
        let poses = poses_from_flat(y);
        let (controls, flags) = chain_controls(cfg, *t, &poses)?;
        let agent_flags: Vec<(usize, [bool; 3])> = flags.iter().enumerate().skip(1).map(|(i, f)| (i + 1, *f)).collect();
        record_transitions(&mut events, &mut prev, *t, &agent_flags);
        let mut zs = Vec::with_capacity(3 * (n - 1));
        for w in poses.windows(2) {
            let z = shape_from_world(&w[0], &w[1])?;
            zs.extend([z.rho, z.alpha1, z.alpha2]);
        }
        shape.states.push(zs);
        world.states.push(y.clone());
        shape.controls.push(controls);
    }
    world.controls = shape.controls.clone();
    shape.events = events.clone();
    world.events = events;
    build_result(cfg, Mode::Ideal, shape, world)
}

/// Runs the configured scenario: the two-agent loop in the configured mode
/// when there is one follower, the chain otherwise.
pub fn run(cfg: &ScenarioConfig) -> Result<RunResult> {
    if cfg.follower_states0.len() == 1 {
        run_two_agent(cfg, cfg.controller.mode)
    } else {
        run_chain(cfg)
    }
}

/// `alpha2` distance from `pi/2`, on the circle.
pub fn alpha2_error(alpha2: f64) -> f64 {
    crate::geometry::wrap_angle(alpha2 - FRAC_PI_2).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wrap_angle;
    use approx::assert_abs_diff_eq;

    #[test]
    fn leader_signal_examples() {
        let p = LeaderProgram::paper_sinusoid();
        assert_abs_diff_eq!(eval_leader(&p, 1.0).unwrap().u, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(eval_leader(&p, 0.5).unwrap().u, 1.5, epsilon = 1e-15);
        assert_eq!(p.bounds.k_u, 1.5);
        let chain = ScenarioConfig::paper_chain();
        assert_eq!(eval_leader(&chain.leader, 5.0).unwrap().u, 1.0);
        assert_eq!(chain.leader.u1.period(), None);
        assert_abs_diff_eq!(p.u1.period().unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn bounds_violation_detected() {
        let mut p = LeaderProgram::paper_sinusoid();
        p.bounds.k_u = 1.0;
        assert!(matches!(eval_leader(&p, 0.5), Err(FormationError::BoundsViolation { signal: "u1", .. })));
        assert!(matches!(p.validate(), Err(FormationError::Validation { path, .. }) if path == "leader.k_u"));
        p.bounds.k_v = 0.4;
        assert!(matches!(eval_leader(&p, 0.0), Err(FormationError::BoundsViolation { signal: "v1", .. })));
    }

    #[test]
    fn trivial_leader_keeps_equilibrium() {
        let mut cfg = ScenarioConfig::paper_fig2a();
        cfg.leader = LeaderProgram::with_tight_bounds(SpeedSignal::Constant { value: 0.5 }, SteeringSignal::Zero);
        cfg.leader_state0 = AgentState::new(0.0, 0.0, 0.0);
        cfg.follower_states0 = vec![AgentState::new(0.0, -0.5, 0.0)];
        cfg.integrator.t_end = 20.0;
        for mode in [Mode::Ideal, Mode::Robust] {
            let run = run_two_agent(&cfg, mode).unwrap();
            for k in 0..run.times().len() {
                let z = run.shape_at(k, 0);
                assert_abs_diff_eq!(z.rho, 0.5, epsilon = 1e-9);
                assert_abs_diff_eq!(z.alpha1, -FRAC_PI_2, epsilon = 1e-9);
                assert_abs_diff_eq!(z.alpha2, FRAC_PI_2, epsilon = 1e-9);
            }
            assert!(run.events().is_empty());
        }
    }

    #[test]
    fn world_and_shape_trajectories_agree() {
        let run = run_two_agent(&ScenarioConfig::paper_fig2b(), Mode::Robust).unwrap();
        for k in (0..run.times().len()).step_by(7) {
            let z = shape_from_world(&run.pose_at(k, 0), &run.pose_at(k, 1)).unwrap();
            let zi = run.shape_at(k, 0);
            assert_abs_diff_eq!(z.rho, zi.rho, epsilon = 1e-6);
            assert_abs_diff_eq!(wrap_angle(z.alpha1 - zi.alpha1), 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(wrap_angle(z.alpha2 - zi.alpha2), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn chain_needs_followers_and_distinct_starts() {
        let mut cfg = ScenarioConfig::paper_chain();
        cfg.follower_states0[1] = cfg.follower_states0[0];
        assert!(matches!(run_chain(&cfg), Err(FormationError::InfeasibleInitialState(_))));
        cfg.follower_states0.clear();
        assert!(matches!(run_chain(&cfg), Err(FormationError::Validation { .. })));
    }

    #[test]
    fn two_agent_rejects_chain_config() {
        assert!(run_two_agent(&ScenarioConfig::paper_chain(), Mode::Ideal).is_err());
    }

    #[test]
    fn unperturbed_chain_holds_formation() {
        let mut cfg = ScenarioConfig::paper_chain();
        cfg.leader.u1 = SteeringSignal::GaussianImpulse { amplitude: 0.0, sigma: 1.0, center: 5.0 };
        cfg.integrator.t_end = 10.0;
        let run = run_chain(&cfg).unwrap();
        let last = run.times().len() - 1;
        for pair in 0..4 {
            let z = run.shape_at(last, pair);
            assert_abs_diff_eq!(z.rho, 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(z.alpha1, -FRAC_PI_2, epsilon = 1e-9);
            assert_abs_diff_eq!(z.alpha2, FRAC_PI_2, epsilon = 1e-9);
        }
        for agent in 0..5 {
            let p = run.pose_at(last, agent);
            assert_abs_diff_eq!(p.r.x, 5.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.theta, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn chain_follower_ignores_downstream_agents() {
        let cfg = ScenarioConfig::paper_chain();
        let base: Vec<f64> = cfg.initial_poses().iter().flat_map(|p| [p.r.x + 0.1, p.r.y, p.theta + 0.2]).collect();
        let mut perturbed = base.clone();
        // Move agent 4 (index 3); agents 1..3 must be unaffected.
        perturbed[9] += 0.3;
        perturbed[10] -= 0.1;
        perturbed[11] += 0.7;
        for t in [0.0, 4.0, 5.0, 6.5] {
            let a = chain_controls_at(&cfg, t, &base).unwrap();
            let b = chain_controls_at(&cfg, t, &perturbed).unwrap();
            assert_eq!(a[..3], b[..3]);
            assert_ne!(a[3], b[3]);
        }
    }
}
