//! Right-hand sides of the unicycle kinematics and the shape dynamics.
//!
//! These functions are time-free; time dependence enters only through the
//! leader program at the scenario layer.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{guard_rho, AgentState, ReducedShapeState, ShapeState, Vec2};

/// Linear speed `v` (m/s) and turning rate `u` (rad/s) of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlPair {
    pub v: f64,
    pub u: f64,
}

impl ControlPair {
    pub const fn new(v: f64, u: f64) -> Self {
        Self { v, u }
    }
}

/// Time derivative of an [`AgentState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRates {
    pub dr: Vec2,
    pub dtheta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeRates {
    pub drho: f64,
    pub dalpha1: f64,
    pub dalpha2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedRates {
    pub drho: f64,
    pub dalpha1: f64,
}

pub fn world_rhs(s: &AgentState, c: ControlPair) -> PoseRates {
    PoseRates { dr: c.v * s.tangent(), dtheta: c.u }
}

pub fn shape_rhs(z: &ShapeState, leader: ControlPair, follower: ControlPair) -> Result<ShapeRates> {
    guard_rho(z.rho)?;
    let (s1, c1) = z.alpha1.sin_cos();
    let (s2, c2) = z.alpha2.sin_cos();
    let lateral = (leader.v * s1 + follower.v * s2) / z.rho;
    Ok(ShapeRates {
        drho: -leader.v * c1 - follower.v * c2,
        dalpha1: -leader.u + lateral,
        dalpha2: -follower.u + lateral,
    })
}

/// Shape dynamics restricted to `alpha2 = pi/2`.
pub fn reduced_rhs(z1: &ReducedShapeState, leader: ControlPair, v2: f64) -> Result<ReducedRates> {
    guard_rho(z1.rho)?;
    let (s1, c1) = z1.alpha1.sin_cos();
    Ok(ReducedRates { drho: -leader.v * c1, dalpha1: -leader.u + (leader.v * s1 + v2) / z1.rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::FormationError;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn world_rhs_examples() {
        let r = world_rhs(&AgentState::new(0.0, 0.0, 0.0), ControlPair::new(1.0, 0.0));
        assert_eq!(r.dr, Vec2::new(1.0, 0.0));
        assert_eq!(r.dtheta, 0.0);

        let r = world_rhs(&AgentState::new(3.0, -1.0, FRAC_PI_2), ControlPair::new(0.5, 0.5));
        assert_abs_diff_eq!(r.dr.x, 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(r.dr.y, 0.5, epsilon = 1e-16);
        assert_eq!(r.dtheta, 0.5);

        let r = world_rhs(&AgentState::new(0.0, 0.0, 1.234), ControlPair::new(0.0, 0.7));
        assert_eq!(r.dr, Vec2::new(0.0, 0.0));
        assert_eq!(r.dtheta, 0.7);
    }

    #[test]
    fn shape_rhs_equilibrium_is_fixed_point() {
        let z = ShapeState::target(0.5);
        let c = ControlPair::new(0.5, 0.0);
        let d = shape_rhs(&z, c, c).unwrap();
        assert_abs_diff_eq!(d.drho, 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(d.dalpha1, 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(d.dalpha2, 0.0, epsilon = 1e-16);
    }

    #[test]
    fn shape_rhs_hand_evaluation() {
        let z = ShapeState::new(1.0, FRAC_PI_4, FRAC_PI_2).unwrap();
        let d = shape_rhs(&z, ControlPair::new(0.5, 0.5), ControlPair::new(0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(d.drho, -0.353_553_390_593_273_8, epsilon = 1e-12);
        assert_abs_diff_eq!(d.dalpha1, 0.353_553_390_593_273_8, epsilon = 1e-12);
        assert_abs_diff_eq!(d.dalpha2, 0.853_553_390_593_273_8, epsilon = 1e-12);
    }

    #[test]
    fn coincident_guard() {
        let z = ShapeState { rho: 1e-7, alpha1: 0.0, alpha2: 0.0 };
        let c = ControlPair::new(0.5, 0.0);
        assert!(matches!(shape_rhs(&z, c, c), Err(FormationError::CoincidentAgents { .. })));
        let z1 = ReducedShapeState { rho: 0.0, alpha1: 0.0 };
        assert!(reduced_rhs(&z1, c, 0.5).is_err());
    }

    #[test]
    fn reduced_rhs_examples() {
        let d = reduced_rhs(&ReducedShapeState::target(0.5), ControlPair::new(0.5, 0.0), 0.5).unwrap();
        assert_abs_diff_eq!(d.drho, 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(d.dalpha1, 0.0, epsilon = 1e-16);

        let d = reduced_rhs(&ReducedShapeState { rho: 1.0, alpha1: 0.0 }, ControlPair::new(0.5, 0.0), 0.5).unwrap();
        assert_abs_diff_eq!(d.drho, -0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(d.dalpha1, 0.5, epsilon = 1e-16);
    }

    /// Hand-derived partials of the three shape equations with respect to
    /// (rho, alpha1, alpha2, v1, u1, v2, u2).
    fn analytic_jacobian(x: &[f64; 7]) -> [[f64; 7]; 3] {
        let [rho, a1, a2, v1, _u1, v2, _u2] = *x;
        let (s1, c1) = a1.sin_cos();
        let (s2, c2) = a2.sin_cos();
        let lat = v1 * s1 + v2 * s2;
        let lateral = [-lat / (rho * rho), v1 * c1 / rho, v2 * c2 / rho, s1 / rho, 0.0, s2 / rho, 0.0];
        let mut j = [[0.0; 7]; 3];
        j[0] = [0.0, v1 * s1, v2 * s2, -c1, 0.0, -c2, 0.0];
        j[1] = lateral;
        j[1][4] = -1.0;
        j[2] = lateral;
        j[2][6] = -1.0;
        j
    }

    fn eval(x: &[f64; 7]) -> [f64; 3] {
        let z = ShapeState { rho: x[0], alpha1: x[1], alpha2: x[2] };
        let d = shape_rhs(&z, ControlPair::new(x[3], x[4]), ControlPair::new(x[5], x[6])).unwrap();
        [d.drho, d.dalpha1, d.dalpha2]
    }

    proptest! {
        #[test]
        fn reduced_matches_restricted_full(
            rho in 0.05f64..5.0, a1 in -4.0f64..4.0,
            v1 in 0.0f64..2.0, u1 in -2.0f64..2.0, v2 in 0.0f64..2.0,
        ) {
            let full = shape_rhs(
                &ShapeState { rho, alpha1: a1, alpha2: FRAC_PI_2 },
                ControlPair::new(v1, u1),
                ControlPair::new(v2, 0.3),
            ).unwrap();
            let red = reduced_rhs(&ReducedShapeState { rho, alpha1: a1 }, ControlPair::new(v1, u1), v2).unwrap();
            // cos(pi/2) is 6e-17 in floating point, hence the tolerance.
            prop_assert!((full.drho - red.drho).abs() <= 1e-14);
            prop_assert!((full.dalpha1 - red.dalpha1).abs() <= 1e-14);
        }

        #[test]
        fn drho_symmetric_under_agent_swap(
            rho in 0.05f64..5.0, a1 in -4.0f64..4.0, a2 in -4.0f64..4.0,
            v1 in 0.0f64..2.0, u1 in -2.0f64..2.0, v2 in 0.0f64..2.0, u2 in -2.0f64..2.0,
        ) {
            let fwd = shape_rhs(&ShapeState { rho, alpha1: a1, alpha2: a2 },
                ControlPair::new(v1, u1), ControlPair::new(v2, u2)).unwrap();
            let rev = shape_rhs(&ShapeState { rho, alpha1: a2, alpha2: a1 },
                ControlPair::new(v2, u2), ControlPair::new(v1, u1)).unwrap();
            prop_assert!((fwd.drho - rev.drho).abs() <= 1e-15);
        }

        #[test]
        fn finite_differences_match_analytic_partials(
            rho in 0.2f64..3.0, a1 in -3.0f64..3.0, a2 in -3.0f64..3.0,
            v1 in 0.0f64..1.5, u1 in -1.5f64..1.5, v2 in 0.0f64..1.5, u2 in -1.5f64..1.5,
        ) {
            let x = [rho, a1, a2, v1, u1, v2, u2];
            let j = analytic_jacobian(&x);
            let h = 1e-5;
            for k in 0..7 {
                let (mut xp, mut xm) = (x, x);
                xp[k] += h;
                xm[k] -= h;
                let (fp, fm) = (eval(&xp), eval(&xm));
                for row in 0..3 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    prop_assert!((fd - j[row][k]).abs() <= 1e-6, "row {row} col {k}: {fd} vs {}", j[row][k]);
                }
            }
        }
    }
}
