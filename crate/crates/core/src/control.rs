//! Admittance law, synthesis of the constant forcing input from a desired
//! load pose, and the leader-side corrections.

use crate::math::{e3, rot_x, rot_y};
use crate::model::{AdmittanceGains, CableParams, DesiredTask, NominalParams, SystemParams};
use crate::{Error, Mat3, Result, Vec3};

/// Constant feedforward terms `w_i` of the two admittance laws [N].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingInput {
    pub w: [Vec3; 2],
}

/// Cable forces, robot positions and forcing input that make a desired load
/// pose an equilibrium, computed from whichever parameter set the caller has.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumReferences {
    /// Equilibrium cable forces on the load [N]
    pub forces: [Vec3; 2],
    /// Robot reference positions [m]; the follower's is informative only
    pub robot_reference: [Vec3; 2],
    pub forcing: ForcingInput,
    /// Computed from nominal (controller-side) parameters
    pub nominal: bool,
}

impl EquilibriumReferences {
    /// Recomputes `w_1 = K_A1 p_ref + f_1` for a new leader reference.
    pub fn with_leader_reference(mut self, reference: Vec3, gains: &AdmittanceGains) -> Self {
        self.robot_reference[0] = reference;
        self.forcing.w[0] = gains.stiffness[0] * reference + self.forces[0];
        self
    }
}

/// Parameter sets a controller can synthesise its references from.
pub trait ControllerModel {
    fn model(&self) -> &SystemParams;
    fn is_nominal(&self) -> bool;
}

impl ControllerModel for SystemParams {
    fn model(&self) -> &SystemParams {
        self
    }
    fn is_nominal(&self) -> bool {
        false
    }
}

impl ControllerModel for NominalParams {
    fn model(&self) -> &SystemParams {
        &self.params
    }
    fn is_nominal(&self) -> bool {
        true
    }
}

/// Admittance law of robot `i`:
/// `M_A^-1 (-B_A v - K_A p - f_i + w_i)`, with `f_i` the cable force on the load.
pub fn admittance_accel(
    position: &Vec3,
    velocity: &Vec3,
    cable_force: &Vec3,
    gains: &AdmittanceGains,
    i: usize,
    w: &Vec3,
) -> Vec3 {
    let rhs = -gains.damping[i] * velocity - gains.stiffness[i] * position - cable_force + w;
    gains.inertia[i]
        .lu()
        .solve(&rhs)
        .expect("virtual inertia validated positive definite")
}

/// Cable forces holding the load at the desired attitude: gravity split by
/// the lever arms plus the internal force pair along the beam.
pub fn equilibrium_cable_forces(
    task: &DesiredTask,
    mass: f64,
    b1: f64,
    length: f64,
    gravity: f64,
) -> [Vec3; 2] {
    let b2 = length - b1;
    let axis = task.axis();
    let weight = mass * gravity / length;
    [
        b2 * weight * e3() + task.internal_force * axis,
        b1 * weight * e3() - task.internal_force * axis,
    ]
}

/// Robot position that stretches cable `i` to carry `force` with the load at
/// the desired pose: `p_des + R_des b_i + (|f|/k + l0) f/|f|`.
pub fn robot_reference_position(
    task: &DesiredTask,
    anchor_body: &Vec3,
    force: &Vec3,
    cable: &CableParams,
) -> Result<Vec3> {
    let magnitude = force.norm();
    if !(magnitude > 0.0) {
        return Err(Error::ZeroForce);
    }
    Ok(task.position
        + task.rotation() * anchor_body
        + (magnitude / cable.stiffness + cable.rest_length) * (force / magnitude))
}

pub fn leader_reference_position(
    task: &DesiredTask,
    force: &Vec3,
    cable: &CableParams,
    b1: f64,
) -> Result<Vec3> {
    robot_reference_position(task, &Vec3::new(b1, 0.0, 0.0), force, cable)
}

/// Forcing input `w_i = K_A,i p_ref,i + f_i` for the desired pose.
///
/// With the follower's stiffness at zero, `w_2` is the pure force feedforward.
pub fn synthesize_forcing<P: ControllerModel>(
    task: &DesiredTask,
    params: &P,
    gains: &AdmittanceGains,
) -> Result<EquilibriumReferences> {
    let m = params.model();
    let forces = equilibrium_cable_forces(task, m.load_mass, m.b1, m.length(), m.gravity);
    let mut robot_reference = [Vec3::zeros(); 2];
    for i in 0..2 {
        robot_reference[i] =
            robot_reference_position(task, &m.anchor_body(i), &forces[i], &m.cables[i])?;
    }
    let w = [0, 1].map(|i| gains.stiffness[i] * robot_reference[i] + forces[i]);
    Ok(EquilibriumReferences {
        forces,
        robot_reference,
        forcing: ForcingInput { w },
        nominal: params.is_nominal(),
    })
}

/// Leader reference shifted against the measured steady-state load position error.
pub fn corrected_leader_reference(previous: &Vec3, position_error: &Vec3) -> Vec3 {
    previous - position_error
}

/// Leader reference accounting for a cable attachment `d` below the robot CoM,
/// assuming the thrust balances robot weight plus cable pull.
pub fn anchor_offset_reference(
    reference: &Vec3,
    nominal_force: &Vec3,
    robot_mass: f64,
    gravity: f64,
    offset: f64,
) -> Result<Vec3> {
    let thrust = robot_mass * gravity * e3() + nominal_force;
    let norm = thrust.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateThrust);
    }
    let a = thrust / norm;
    if a.z == 0.0 {
        return Err(Error::DegenerateThrust);
    }
    let pitch = (a.x / a.z).atan();
    let roll = (-a.y).asin();
    let attitude: Mat3 = rot_y(pitch) * rot_x(roll);
    Ok(reference - attitude * Vec3::new(0.0, 0.0, -offset))
}

/// Mass error seen by the leader: the vertical mismatch between measured
/// and commanded cable force at steady state, divided by `g`.
pub fn estimate_mass_delta(measured: &Vec3, nominal: &Vec3, gravity: f64) -> f64 {
    (measured - nominal).dot(&e3()) / gravity
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{closed_loop_field, LoadPose, SystemState};
    use crate::model::{apply_relative_errors, RelativeErrors};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn task(t_i: f64) -> DesiredTask {
        DesiredTask::default().with_internal_force(t_i)
    }

    #[test]
    fn forces_without_internal_force() {
        let f = equilibrium_cable_forces(&task(0.0), 0.5, 0.5, 1.0, 9.81);
        assert_relative_eq!(f[0], Vec3::new(0.0, 0.0, 2.4525), epsilon = 1e-15);
        assert_relative_eq!(f[1], Vec3::new(0.0, 0.0, 2.4525), epsilon = 1e-15);
    }

    #[test]
    fn forces_with_internal_force_identity_attitude() {
        let t = DesiredTask {
            position: Vec3::zeros(),
            yaw: 0.0,
            pitch: 0.0,
            internal_force: 1.0,
        };
        let f = equilibrium_cable_forces(&t, 0.5, 0.5, 1.0, 9.81);
        assert_relative_eq!(f[0], Vec3::new(1.0, 0.0, 2.4525), epsilon = 1e-15);
        assert_relative_eq!(f[1], Vec3::new(-1.0, 0.0, 2.4525), epsilon = 1e-15);
    }

    #[test]
    fn leader_reference_example() {
        let t = DesiredTask {
            position: Vec3::new(1.0, 1.0, 1.0),
            yaw: 0.0,
            pitch: 0.0,
            internal_force: 0.0,
        };
        let r = leader_reference_position(
            &t,
            &Vec3::new(0.0, 0.0, 2.4525),
            &CableParams { stiffness: 50.0, rest_length: 1.0 },
            0.5,
        )
        .unwrap();
        assert_relative_eq!(r, Vec3::new(1.5, 1.0, 2.04905), epsilon = 1e-12);
        assert_eq!(
            leader_reference_position(&t, &Vec3::zeros(), &CableParams::default(), 0.5),
            Err(Error::ZeroForce)
        );
    }

    #[test]
    fn admittance_at_rest() {
        let gains = AdmittanceGains::default();
        let p = SystemParams::default();
        let refs = synthesize_forcing(&task(1.0), &p, &gains).unwrap();
        for i in 0..2 {
            let u = admittance_accel(
                &refs.robot_reference[i],
                &Vec3::zeros(),
                &refs.forces[i],
                &gains,
                i,
                &refs.forcing.w[i],
            );
            assert!(u.norm() < 1e-12);
        }
        // follower: zero acceleration anywhere once the force matches
        let u = admittance_accel(
            &Vec3::new(7.0, -3.0, 2.0),
            &Vec3::zeros(),
            &refs.forces[1],
            &gains,
            1,
            &refs.forcing.w[1],
        );
        assert_eq!(u, Vec3::zeros());
        // leader displaced by dp
        let dp = Vec3::new(0.01, -0.02, 0.03);
        let u = admittance_accel(
            &(refs.robot_reference[0] + dp),
            &Vec3::zeros(),
            &refs.forces[0],
            &gains,
            0,
            &refs.forcing.w[0],
        );
        assert_relative_eq!(u, -(gains.inertia[0].try_inverse().unwrap() * gains.stiffness[0]) * dp, epsilon = 1e-12);
    }

    #[test]
    fn nominal_forcing_leaves_desired_pose_unbalanced() {
        let p = SystemParams::default();
        let gains = AdmittanceGains::default();
        let rel = RelativeErrors { mass: 0.05, ..Default::default() };
        let (n, _) = apply_relative_errors(&p, &rel).unwrap();
        let refs = synthesize_forcing(&task(1.0), &n, &gains).unwrap();
        assert!(refs.nominal);
        let truth = synthesize_forcing(&task(1.0), &p, &gains).unwrap();
        let state = SystemState::at_rest(
            truth.robot_reference,
            LoadPose { position: task(1.0).position, rotation: task(1.0).rotation() },
        );
        let d = closed_loop_field(&state, &gains, &refs.forcing.w, &p);
        assert!(d.max_abs() > 1e-3);
    }

    #[test]
    fn correction() {
        let prev = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(corrected_leader_reference(&prev, &Vec3::zeros()), prev);
        assert_eq!(
            corrected_leader_reference(&prev, &Vec3::new(0.01, -0.02, 0.03)),
            prev - Vec3::new(0.01, -0.02, 0.03)
        );
    }

    #[test]
    fn correction_keeps_forces() {
        let p = SystemParams::default();
        let gains = AdmittanceGains::default();
        let refs = synthesize_forcing(&task(1.0), &p, &gains).unwrap();
        let moved = refs.with_leader_reference(refs.robot_reference[0] + Vec3::new(0.1, 0.0, 0.0), &gains);
        assert_eq!(moved.forces, refs.forces);
        assert_eq!(moved.forcing.w[1], refs.forcing.w[1]);
        let residual = moved.forcing.w[0] - gains.stiffness[0] * moved.robot_reference[0] - moved.forces[0];
        assert!(residual.norm() < 1e-12);
    }

    #[test]
    fn offset_reference_vertical_force() {
        let r = Vec3::new(1.0, 2.0, 3.0);
        let out = anchor_offset_reference(&r, &Vec3::new(0.0, 0.0, 2.4525), 1.03, 9.81, 0.15).unwrap();
        assert_relative_eq!(out, r + Vec3::new(0.0, 0.0, 0.15), epsilon = 1e-15);
    }

    #[test]
    fn offset_reference_tilted_force() {
        let r = Vec3::zeros();
        let f = Vec3::new(1.0, 0.0, 2.4525);
        let out = anchor_offset_reference(&r, &f, 1.03, 9.81, 0.15).unwrap();
        // thrust direction by hand: A = normalize(mR g e3 + f)
        let a = Vec3::new(1.0, 0.0, 1.03 * 9.81 + 2.4525).normalize();
        assert_relative_eq!(a.x, 0.0793868, epsilon = 1e-6);
        assert_relative_eq!(a.z, 0.9968439, epsilon = 1e-6);
        let pitch = (a.x / a.z).atan();
        assert_relative_eq!(pitch, 0.0794704, epsilon = 1e-6);
        // R_Y(pitch) [0,0,-d] = -d [sin, 0, cos]
        assert_relative_eq!(out, 0.15 * Vec3::new(pitch.sin(), 0.0, pitch.cos()), epsilon = 1e-15);
    }

    #[test]
    fn offset_reference_lateral_force() {
        let f = Vec3::new(0.0, 1.5, 2.0);
        let out = anchor_offset_reference(&Vec3::zeros(), &f, 1.03, 9.81, 0.15).unwrap();
        let a = Vec3::new(0.0, 1.5, 1.03 * 9.81 + 2.0).normalize();
        let roll = (-a.y).asin();
        // R_X(roll) [0,0,-d] = -d [0, -sin, cos]
        assert_relative_eq!(out, 0.15 * Vec3::new(0.0, -roll.sin(), roll.cos()), epsilon = 1e-15);
        assert!(out.y > 0.0);
    }

    #[test]
    fn degenerate_thrust() {
        let f = Vec3::new(1.0, 0.0, -1.03 * 9.81);
        assert_eq!(
            anchor_offset_reference(&Vec3::zeros(), &f, 1.03, 9.81, 0.15),
            Err(Error::DegenerateThrust)
        );
    }

    #[test]
    fn mass_delta() {
        let n = Vec3::new(0.3, 0.1, 2.0);
        assert_eq!(estimate_mass_delta(&n, &n, 9.81), 0.0);
        assert_relative_eq!(
            estimate_mass_delta(&(n + Vec3::new(0.0, 0.0, 0.24525)), &n, 9.81),
            0.025,
            epsilon = 1e-12
        );
    }

    proptest! {
        #[test]
        fn synthesis_invariants(
            t_i in -3.0f64..3.0, yaw in -3.0f64..3.0, pitch in -1.3f64..1.3,
            fm in -0.2f64..0.2, fb in -0.2f64..0.2, fk2 in -0.5f64..0.5, fl2 in -0.5f64..0.5,
        ) {
            let p = SystemParams::default();
            let gains = AdmittanceGains::default();
            let t = DesiredTask { yaw, pitch, internal_force: t_i, ..Default::default() };
            let rel = RelativeErrors { mass: fm, com: fb, ..Default::default() };
            let (n, _) = apply_relative_errors(&p, &rel).unwrap();
            let refs = synthesize_forcing(&t, &n, &gains).unwrap();
            let m = n.params.load_mass;
            prop_assert!((refs.forces[0] + refs.forces[1] - m * 9.81 * e3()).norm() < 1e-12);
            for i in 0..2 {
                let r = refs.forcing.w[i] - gains.stiffness[i] * refs.robot_reference[i] - refs.forces[i];
                prop_assert!(r.norm() < 1e-12);
            }
            prop_assert_eq!(refs.forcing.w[1], refs.forces[1]);
            // the follower's cable model never reaches the forcing input
            let rel2 = RelativeErrors { stiffness: [0.0, fk2], rest_length: [0.0, fl2], ..rel };
            let (n2, _) = apply_relative_errors(&p, &rel2).unwrap();
            let refs2 = synthesize_forcing(&t, &n2, &gains).unwrap();
            prop_assert_eq!(refs.forcing, refs2.forcing);
            prop_assert_eq!(refs.forces, refs2.forces);
            prop_assert_eq!(refs.robot_reference[0], refs2.robot_reference[0]);
        }

        #[test]
        fn desired_pose_is_fixed_point_with_true_parameters(
            t_i in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0],
            yaw in -3.0f64..3.0, pitch in -1.3f64..1.3,
        ) {
            let p = SystemParams::default();
            let gains = AdmittanceGains::default();
            let t = DesiredTask { yaw, pitch, internal_force: t_i, ..Default::default() };
            let refs = synthesize_forcing(&t, &p, &gains).unwrap();
            let state = SystemState::at_rest(
                refs.robot_reference,
                LoadPose { position: t.position, rotation: t.rotation() },
            );
            let d = closed_loop_field(&state, &gains, &refs.forcing.w, &p);
            prop_assert!(d.max_abs() < 1e-10, "residual {}", d.max_abs());
            let ti = crate::dynamics::internal_force(&refs.forces, &t.rotation());
            prop_assert!((ti - t_i).abs() < 1e-12);
        }
    }
}
