//! Numerical certificates for the closed loop: Lyapunov descent, the ISS
//! margin, linearization at the formation, and convergence to a periodic
//! orbit under periodic leader steering.

use serde::{Deserialize, Serialize};

use crate::control::{
    potential_f, potential_f_prime, potential_g, speed_command_raw, steering_cb, ControllerConfig, Mode, PotentialSpec,
};
use crate::dynamics::{shape_rhs, ControlPair};
use crate::error::{FormationError, Result};
use crate::geometry::{wrap_angle, ReducedShapeState, ShapeState};
use crate::integrator::Trajectory;
use crate::scenarios::alpha2_error;

/// Descent is accepted up to this positive slack.
pub const DESCENT_TOL: f64 = 1e-9;
/// Sublevel set used as the region of attraction, `V1 < 2`.
pub const V1_REGION: f64 = 2.0;
/// Samples count as on the `alpha2 = pi/2` manifold within this distance.
pub const MANIFOLD_TOL: f64 = 0.01;
pub const DEFAULT_PERIODIC_THRESHOLD: f64 = 1e-3;
/// Violations beyond this count are tallied but not listed.
const MAX_LISTED: usize = 64;

/// Uniformly sampled shape and control history of one leader/follower pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSeries {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub leader: Vec<ControlPair>,
    pub follower: Vec<ControlPair>,
}

impl PairSeries {
    /// Extracts pair `pair` from a shape trajectory whose states are
    /// `(rho, alpha1, alpha2)` triples and whose controls are per agent.
    pub fn from_trajectory(traj: &Trajectory, pair: usize) -> Self {
        let mut s = PairSeries { times: traj.times.clone(), ..Default::default() };
        for (k, st) in traj.states.iter().enumerate() {
            s.rho.push(st[3 * pair]);
            s.alpha1.push(st[3 * pair + 1]);
            s.alpha2.push(st[3 * pair + 2]);
            if let Some(c) = traj.controls.get(k) {
                s.leader.push(c[pair]);
                s.follower.push(c[pair + 1]);
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn shape(&self, k: usize) -> ShapeState {
        ShapeState { rho: self.rho[k], alpha1: self.alpha1[k], alpha2: self.alpha2[k] }
    }

    pub fn reduced(&self, k: usize) -> ReducedShapeState {
        ReducedShapeState { rho: self.rho[k], alpha1: self.alpha1[k] }
    }

    fn sample_dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub v1: f64,
    pub v1_dot_analytic: f64,
    pub in_region: bool,
}

/// `V1 = 1 + sin(alpha1) + g(rho)`, zero only at `(rho0, -pi/2)`.
pub fn lyapunov_v1(z1: &ReducedShapeState, spec: &PotentialSpec) -> Result<f64> {
    Ok(1.0 + z1.alpha1.sin() + potential_g(spec, z1.rho)?)
}

/// Closed-form `dV1/dt` along the reduced closed loop:
/// `-mu1 cos^2(alpha1)` (ideal) or `-mu1 cos^2(alpha1) - u1 cos(alpha1)` (robust).
pub fn lyapunov_v1_dot(z1: &ReducedShapeState, u1: f64, mu1: f64, mode: Mode) -> f64 {
    let c = z1.alpha1.cos();
    match mode {
        Mode::Ideal => -mu1 * c * c,
        Mode::Robust => -mu1 * c * c - u1 * c,
    }
}

/// `grad V1 . (d rho/dt, d alpha1/dt)` using the full shape dynamics and the
/// recorded controls.
pub fn lyapunov_v1_dot_chain_rule(
    z: &ShapeState,
    leader: ControlPair,
    follower: ControlPair,
    spec: &PotentialSpec,
) -> Result<f64> {
    let d = shape_rhs(z, leader, follower)?;
    Ok(potential_f(spec, z.rho)? * d.drho + z.alpha1.cos() * d.dalpha1)
}

pub fn lyapunov_samples(series: &PairSeries, cfg: &ControllerConfig) -> Result<Vec<LyapunovSample>> {
    (0..series.len())
        .map(|k| {
            let z1 = series.reduced(k);
            let v1 = lyapunov_v1(&z1, &cfg.potential)?;
            let u1 = series.leader.get(k).map_or(0.0, |c| c.u);
            Ok(LyapunovSample {
                t: series.times[k],
                v1,
                v1_dot_analytic: lyapunov_v1_dot(&z1, u1, cfg.mu1, cfg.mode),
                in_region: v1 < V1_REGION,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentViolation {
    pub t: f64,
    /// `descent`, `fd_mismatch` or `monotone`.
    pub kind: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub mode: Mode,
    pub mu1: f64,
    /// Bound on the pair leader's steering; `None` when unbounded.
    pub k_u: Option<f64>,
    pub samples: usize,
    /// Samples where the closed-loop hypotheses hold (on the manifold, no limiter active).
    pub checked: usize,
    pub skipped_off_manifold: usize,
    pub skipped_limited: usize,
    /// Checked samples inside the set where descent is asserted:
    /// `V1 < 2` (ideal) or `|cos alpha1| >= k_u / mu1` (robust).
    pub descent_set_samples: usize,
    pub max_v1_dot_in_set: Option<f64>,
    pub fd_tolerance: f64,
    pub max_fd_mismatch: f64,
    /// Largest gap between the closed form and the chain rule on the full dynamics.
    pub max_chain_rule_gap: f64,
    /// Largest sample-to-sample increase of `V1` inside `V1 < 2` on the manifold.
    pub max_v1_increase: Option<f64>,
    pub violation_count: usize,
    pub violations: Vec<DescentViolation>,
    pub passed: bool,
}

impl DescentReport {
    /// Converts a failing report into [`FormationError::DescentViolation`].
    pub fn into_result(self) -> Result<Self> {
        match self.violations.first() {
            Some(v) if !self.passed => {
                Err(FormationError::DescentViolation { t: v.t, detail: format!("{} = {:e}", v.kind, v.value) })
            }
            _ => Ok(self),
        }
    }
}

/// Whether the follower's recorded controls are exactly the unsaturated law.
fn unlimited(series: &PairSeries, k: usize, cfg: &ControllerConfig) -> bool {
    let (Some(l), Some(f)) = (series.leader.get(k), series.follower.get(k)) else {
        return false;
    };
    let z = series.shape(k);
    let Ok(raw_v) = speed_command_raw(&z.reduced(), l.v, l.u, cfg) else {
        return false;
    };
    let Ok(raw_u) = steering_cb(&z, l.v, f.v, cfg.mu2) else {
        return false;
    };
    let tol = 1e-9 * (1.0 + raw_v.abs());
    (raw_v - f.v).abs() <= tol && (raw_u - f.u).abs() <= 1e-9 * (1.0 + raw_u.abs())
}

/// Evaluates the descent certificate along a pair series.
///
/// At every sample where the hypotheses hold: (a) the closed-form `dV1/dt`
/// must match a central difference of the sampled `V1` to `10 * sample_dt`;
/// (b) in ideal mode it must be `<= 1e-9` wherever `V1 < 2`; (c) in robust
/// mode it must be `<= 1e-9` wherever `|cos alpha1| >= k_u / mu1`. In ideal
/// mode `V1` must also be non-increasing between consecutive samples of the
/// `V1 < 2` region.
pub fn descent_report(series: &PairSeries, cfg: &ControllerConfig, k_u: Option<f64>) -> DescentReport {
    let n = series.len();
    let dt = series.sample_dt();
    let fd_tolerance = 10.0 * dt;
    let mut report = DescentReport {
        mode: cfg.mode,
        mu1: cfg.mu1,
        k_u,
        samples: n,
        checked: 0,
        skipped_off_manifold: 0,
        skipped_limited: 0,
        descent_set_samples: 0,
        max_v1_dot_in_set: None,
        fd_tolerance,
        max_fd_mismatch: 0.0,
        max_chain_rule_gap: 0.0,
        max_v1_increase: None,
        violation_count: 0,
        violations: Vec::new(),
        passed: true,
    };
    let push = |report: &mut DescentReport, t: f64, kind: &str, value: f64| {
        report.violation_count += 1;
        report.passed = false;
        if report.violations.len() < MAX_LISTED {
            report.violations.push(DescentViolation { t, kind: kind.into(), value });
        }
    };

    let v1: Vec<f64> =
        (0..n).map(|k| lyapunov_v1(&series.reduced(k), &cfg.potential).unwrap_or(f64::INFINITY)).collect();
    // Part of the chain-rule rate that the reduced certificate does not see:
    // the coupling through alpha2 away from pi/2. Zero on the manifold.
    let coupling: Vec<f64> = (0..n)
        .map(|k| {
            let z1 = series.reduced(k);
            let vdot = lyapunov_v1_dot(&z1, series.leader[k].u, cfg.mu1, cfg.mode);
            lyapunov_v1_dot_chain_rule(&series.shape(k), series.leader[k], series.follower[k], &cfg.potential)
                .map_or(0.0, |c| (c - vdot).max(0.0))
        })
        .collect();
    let ok: Vec<bool> = (0..n)
        .map(|k| {
            let on_manifold = alpha2_error(series.alpha2[k]) <= MANIFOLD_TOL;
            on_manifold && unlimited(series, k, cfg)
        })
        .collect();

    for k in 0..n {
        if alpha2_error(series.alpha2[k]) > MANIFOLD_TOL {
            report.skipped_off_manifold += 1;
            continue;
        }
        if !ok[k] {
            report.skipped_limited += 1;
            continue;
        }
        report.checked += 1;
        let z1 = series.reduced(k);
        let u1 = series.leader[k].u;
        let vdot = lyapunov_v1_dot(&z1, u1, cfg.mu1, cfg.mode);

        if let Ok(chain) =
            lyapunov_v1_dot_chain_rule(&series.shape(k), series.leader[k], series.follower[k], &cfg.potential)
        {
            report.max_chain_rule_gap = report.max_chain_rule_gap.max((chain - vdot).abs());
        }

        if k > 0 && k + 1 < n && ok[k - 1] && ok[k + 1] {
            let fd = (v1[k + 1] - v1[k - 1]) / (series.times[k + 1] - series.times[k - 1]);
            let gap = (fd - vdot).abs();
            report.max_fd_mismatch = report.max_fd_mismatch.max(gap);
            if gap > fd_tolerance {
                push(&mut report, series.times[k], "fd_mismatch", gap);
            }
        }

        let in_set = match cfg.mode {
            Mode::Ideal => v1[k] < V1_REGION,
            Mode::Robust => k_u.is_some_and(|b| z1.alpha1.cos().abs() >= b / cfg.mu1),
        };
        if in_set {
            report.descent_set_samples += 1;
            report.max_v1_dot_in_set = Some(report.max_v1_dot_in_set.map_or(vdot, |m: f64| m.max(vdot)));
            if vdot > DESCENT_TOL {
                push(&mut report, series.times[k], "descent", vdot);
            }
        }

        if k + 1 < n && ok[k + 1] && v1[k] < V1_REGION && v1[k + 1] < V1_REGION {
            let inc = v1[k + 1] - v1[k];
            report.max_v1_increase = Some(report.max_v1_increase.map_or(inc, |m: f64| m.max(inc)));
            let h = series.times[k + 1] - series.times[k];
            let allowance = DESCENT_TOL + h * coupling[k].max(coupling[k + 1]);
            if cfg.mode == Mode::Ideal && inc > allowance {
                push(&mut report, series.times[k + 1], "monotone", inc);
            }
        }
    }
    report
}

/// [`descent_report`] that fails with the first offending sample.
pub fn verify_descent(series: &PairSeries, cfg: &ControllerConfig, k_u: Option<f64>) -> Result<DescentReport> {
    descent_report(series, cfg, k_u).into_result()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub a: [[f64; 2]; 2],
    pub eigenvalues: [Eigenvalue; 2],
    pub hurwitz: bool,
}

/// Jacobian of the unforced reduced loop at `(rho0, -pi/2)`:
/// `A = [[0, -v1], [v1 f'(rho0), -mu1]]`, with eigenvalues from the
/// characteristic polynomial `l^2 - tr(A) l + det(A)`.
pub fn linearize_equilibrium(v1: f64, mu1: f64, spec: &PotentialSpec) -> Result<LinearizationReport> {
    if !(v1 > 0.0) {
        return Err(FormationError::Validation { path: "v1".into(), message: format!("must be > 0, got {v1}") });
    }
    let fp = potential_f_prime(spec, spec.rho0)?;
    let a = [[0.0, -v1], [v1 * fp, -mu1]];
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr - 4.0 * det;
    let eigenvalues = if disc >= 0.0 {
        // l^2 + b l + c with b = -tr; stable root pair without cancellation.
        let b = -tr;
        let q = -0.5 * (b + if b >= 0.0 { 1.0 } else { -1.0 } * disc.sqrt());
        let (l1, l2) = if q == 0.0 { (0.0, tr) } else { (q, det / q) };
        [Eigenvalue { re: l1.max(l2), im: 0.0 }, Eigenvalue { re: l1.min(l2), im: 0.0 }]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Eigenvalue { re: 0.5 * tr, im }, Eigenvalue { re: 0.5 * tr, im: -im }]
    };
    let hurwitz = eigenvalues.iter().all(|l| l.re < 0.0);
    Ok(LinearizationReport { a, eigenvalues, hurwitz })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub period_t: f64,
    pub settle_time: f64,
    pub t_end: f64,
    /// `max ||z1(t + T) - z1(t)||_inf` over `t` in `[settle_time, t_end - T]`.
    pub residual: f64,
    pub threshold: f64,
    pub converged: bool,
}

/// Stroboscopic (time-`T` map) residual of `(rho, alpha1)` after `settle_time`.
/// Angles are compared on the circle.
pub fn detect_periodic_orbit(
    series: &PairSeries,
    period: f64,
    settle_time: f64,
    threshold: f64,
) -> Result<PeriodicityReport> {
    let n = series.len();
    let (t0, t_end) = match (series.times.first(), series.times.last()) {
        (Some(a), Some(b)) if n >= 2 => (*a, *b),
        _ => return Err(FormationError::WindowTooShort { t_start: 0.0, t_end: 0.0, period, settle: settle_time }),
    };
    let too_short = FormationError::WindowTooShort { t_start: t0, t_end, period, settle: settle_time };
    if !(period > 0.0) || t_end < settle_time + 2.0 * period - 1e-9 {
        return Err(too_short);
    }
    let dt = series.sample_dt();
    let shift = (period / dt).round() as usize;
    if shift == 0 || (shift as f64 * dt - period).abs() > 1e-9 * period.max(1.0) {
        return Err(FormationError::NonGridPeriod { period, dt });
    }
    let start = series.times.iter().position(|&t| t >= settle_time - 1e-9).ok_or(too_short)?;
    let mut residual = 0.0f64;
    for k in start..n - shift {
        let dr = (series.rho[k + shift] - series.rho[k]).abs();
        let da = wrap_angle(series.alpha1[k + shift] - series.alpha1[k]).abs();
        residual = residual.max(dr.max(da));
    }
    Ok(PeriodicityReport { period_t: period, settle_time, t_end, residual, threshold, converged: residual < threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    const SPEC: PotentialSpec = PotentialSpec { mu_rho: 2.0, rho0: 0.5 };

    #[test]
    fn v1_values() {
        assert_eq!(lyapunov_v1(&ReducedShapeState::target(0.5), &SPEC).unwrap(), 0.0);
        assert_abs_diff_eq!(
            lyapunov_v1(&ReducedShapeState { rho: 1.0, alpha1: -FRAC_PI_2 }, &SPEC).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            lyapunov_v1(&ReducedShapeState { rho: 0.5, alpha1: 0.0 }, &SPEC).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(lyapunov_v1(&ReducedShapeState { rho: 0.0, alpha1: 0.0 }, &SPEC).is_err());
    }

    #[test]
    fn v1_dot_values() {
        let eq = ReducedShapeState::target(0.5);
        assert_abs_diff_eq!(lyapunov_v1_dot(&eq, 1.0, 1.0, Mode::Ideal), 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(lyapunov_v1_dot(&eq, 1.0, 1.0, Mode::Robust), 0.0, epsilon = 1e-16);
        let z = ReducedShapeState { rho: 1.0, alpha1: 0.0 };
        assert_eq!(lyapunov_v1_dot(&z, 0.0, 1.0, Mode::Ideal), -1.0);
        let z = ReducedShapeState { rho: 1.0, alpha1: FRAC_PI_4 };
        assert_abs_diff_eq!(lyapunov_v1_dot(&z, 1.5, 1.0, Mode::Robust), -1.560_660_171_779_821, epsilon = 1e-12);
    }

    #[test]
    fn v1_positive_definite_on_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        while hits < 100_000 {
            let z = ReducedShapeState { rho: rng.gen_range(0.05..3.0), alpha1: rng.gen_range(-3.2..3.2) };
            let v = lyapunov_v1(&z, &SPEC).unwrap();
            if v < V1_REGION {
                hits += 1;
                assert!(v >= 0.0);
                let off = (z.rho - 0.5).abs().max(wrap_angle(z.alpha1 + FRAC_PI_2).abs());
                if v < 1e-10 {
                    assert!(off < 1e-4, "V1 vanishes away from equilibrium at {z:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn closed_form_matches_chain_rule(
            rho in 0.05f64..3.0, a1 in -3.2f64..3.2, v1 in 0.01f64..2.0, u1 in -2.0f64..2.0,
            mu1 in 0.1f64..5.0, mu_rho in 0.1f64..20.0, rho0 in 0.1f64..2.0,
        ) {
            let spec = PotentialSpec { mu_rho, rho0 };
            let z = ShapeState { rho, alpha1: a1, alpha2: FRAC_PI_2 };
            for mode in [Mode::Ideal, Mode::Robust] {
                let cfg = ControllerConfig { mu1, potential: spec, mode, ..ControllerConfig::standard(mode) };
                let v2 = speed_command_raw(&z.reduced(), v1, u1, &cfg).unwrap();
                let chain = lyapunov_v1_dot_chain_rule(&z, ControlPair::new(v1, u1), ControlPair::new(v2, 0.0), &spec).unwrap();
                let closed = lyapunov_v1_dot(&z.reduced(), u1, mu1, mode);
                let f = potential_f(&spec, rho).unwrap().abs();
                let scale = 1.0 + mu1 + u1.abs() + v1 * f + (v1 + v2.abs()) / rho + f * v1;
                prop_assert!((chain - closed).abs() <= 1e-12 * scale, "{chain} vs {closed}");
            }
        }

        #[test]
        fn eigenvalues_solve_characteristic_equation(
            v1 in 0.01f64..3.0, mu1 in 0.01f64..5.0, mu_rho in 0.1f64..30.0, rho0 in 0.05f64..3.0,
        ) {
            let rep = linearize_equilibrium(v1, mu1, &PotentialSpec { mu_rho, rho0 }).unwrap();
            let a = rep.a;
            for l in rep.eigenvalues {
                let l = Complex64::new(l.re, l.im);
                // det(A - l I) evaluated directly.
                let p = (a[0][0] - l) * (a[1][1] - l) - a[0][1] * a[1][0];
                let scale = 1.0 + l.norm_sqr() + (a[0][1] * a[1][0]).abs();
                prop_assert!(p.norm() <= 1e-12 * scale, "residual {}", p.norm());
            }
            prop_assert!(rep.hurwitz);
        }
    }

    #[test]
    fn linearization_at_paper_gains() {
        let rep = linearize_equilibrium(0.5, 1.0, &SPEC).unwrap();
        assert_eq!(rep.a, [[0.0, -0.5], [4.0, -1.0]]);
        let s7 = 7f64.sqrt() / 2.0;
        assert_abs_diff_eq!(rep.eigenvalues[0].re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.eigenvalues[0].im, s7, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.eigenvalues[1].im, -s7, epsilon = 1e-12);
        assert!(rep.hurwitz);
    }

    #[test]
    fn linearization_without_damping_is_marginal() {
        let rep = linearize_equilibrium(0.5, 0.0, &SPEC).unwrap();
        assert!(rep.eigenvalues.iter().all(|l| l.re == 0.0 && l.im != 0.0));
        assert!(!rep.hurwitz);
        assert!(linearize_equilibrium(0.0, 1.0, &SPEC).is_err());
    }

    #[test]
    fn overdamped_eigenvalues_are_real() {
        let rep = linearize_equilibrium(0.1, 5.0, &SPEC).unwrap();
        assert!(rep.eigenvalues.iter().all(|l| l.im == 0.0 && l.re < 0.0));
        let prod = rep.eigenvalues[0].re * rep.eigenvalues[1].re;
        assert_abs_diff_eq!(prod, 0.1 * 0.1 * 8.0, epsilon = 1e-12);
    }

    fn synthetic(times: &[f64], f: impl Fn(f64) -> (f64, f64)) -> PairSeries {
        let mut s = PairSeries { times: times.to_vec(), ..Default::default() };
        for &t in times {
            let (r, a) = f(t);
            s.rho.push(r);
            s.alpha1.push(a);
            s.alpha2.push(FRAC_PI_2);
        }
        s
    }

    fn grid(t_end: f64, dt: f64) -> Vec<f64> {
        (0..=((t_end / dt).round() as usize)).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn constant_trajectory_is_periodic_for_any_period() {
        let s = synthetic(&grid(10.0, 0.01), |_| (0.5, -FRAC_PI_2));
        for period in [0.5, 1.0, 2.0, 3.3] {
            let rep = detect_periodic_orbit(&s, period, 1.0, 1e-3).unwrap();
            assert_eq!(rep.residual, 0.0);
            assert!(rep.converged);
        }
    }

    #[test]
    fn periodic_residual_detects_period() {
        let w = std::f64::consts::PI;
        let s = synthetic(&grid(20.0, 0.01), |t| (0.5 + 0.1 * (w * t).sin(), -FRAC_PI_2 + 0.2 * (w * t).cos()));
        let good = detect_periodic_orbit(&s, 2.0, 5.0, 1e-3).unwrap();
        assert!(good.residual < 1e-12);
        let shifted = detect_periodic_orbit(&s, 2.0, 7.0, 1e-3).unwrap();
        assert_abs_diff_eq!(good.residual, shifted.residual, epsilon = 1e-12);
        let bad = detect_periodic_orbit(&s, 1.5, 5.0, 1e-3).unwrap();
        assert!(bad.residual > 1e-2);
        assert!(!bad.converged);
    }

    #[test]
    fn angle_wrap_is_not_a_residual() {
        let s = synthetic(&grid(10.0, 0.01), |t| (0.5, if (t / 2.0).floor() as i64 % 2 == 0 { PI_M } else { -PI_M }));
        let rep = detect_periodic_orbit(&s, 2.0, 1.0, 1e-3).unwrap();
        assert!(rep.residual < 1e-9);
    }
    const PI_M: f64 = std::f64::consts::PI - 1e-12;

    #[test]
    fn periodic_window_errors() {
        let s = synthetic(&grid(10.0, 0.01), |_| (0.5, 0.0));
        assert!(matches!(detect_periodic_orbit(&s, 2.0, 7.0, 1e-3), Err(FormationError::WindowTooShort { .. })));
        assert!(matches!(detect_periodic_orbit(&s, 1.234_5, 1.0, 1e-3), Err(FormationError::NonGridPeriod { .. })));
    }

    #[test]
    fn equilibrium_series_passes_descent_trivially() {
        let times = grid(5.0, 0.01);
        let n = times.len();
        let s = PairSeries {
            rho: vec![0.5; n],
            alpha1: vec![-FRAC_PI_2; n],
            alpha2: vec![FRAC_PI_2; n],
            leader: vec![ControlPair::new(0.5, 0.0); n],
            follower: vec![ControlPair::new(0.5, 0.0); n],
            times,
        };
        for mode in [Mode::Ideal, Mode::Robust] {
            let rep = verify_descent(&s, &ControllerConfig::standard(mode), Some(0.3)).unwrap();
            assert_eq!(rep.checked, n);
            assert!(rep.max_v1_dot_in_set.unwrap_or(0.0).abs() < 1e-15);
            assert!(rep.max_fd_mismatch < 1e-12);
        }
    }

    #[test]
    fn tampered_series_fails_descent() {
        // V1 increasing while the follower claims to run the ideal law.
        let times = grid(2.0, 0.01);
        let cfg = ControllerConfig::standard(Mode::Ideal);
        let mut s = PairSeries { times: times.clone(), ..Default::default() };
        for &t in &times {
            let z = ShapeState { rho: 0.5 + 0.1 * t, alpha1: -FRAC_PI_2 + 0.05, alpha2: FRAC_PI_2 };
            let l = ControlPair::new(0.5, 0.0);
            let v = speed_command_raw(&z.reduced(), l.v, l.u, &cfg).unwrap();
            let u = steering_cb(&z, l.v, v, cfg.mu2).unwrap();
            s.rho.push(z.rho);
            s.alpha1.push(z.alpha1);
            s.alpha2.push(z.alpha2);
            s.leader.push(l);
            s.follower.push(ControlPair::new(v, u));
        }
        let rep = descent_report(&s, &cfg, Some(0.0));
        assert!(!rep.passed);
        assert!(rep.violations.iter().any(|v| v.kind == "monotone"));
        assert!(matches!(rep.into_result(), Err(FormationError::DescentViolation { .. })));
    }
}
