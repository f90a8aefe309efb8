//! Equations of motion of the closed loop.
//!
//! The load is a rigid body pulled by two unilateral springs. Translational
//! quantities live in the world frame (z up), the angular velocity in the
//! load body frame. Each robot is a double integrator driven by its
//! admittance law; the cable acts on it with the opposite of the force it
//! applies to the load.

use std::ops::{Add, Mul};

use nalgebra::{SMatrix, SVector};

use crate::control::admittance_accel;
use crate::math::{e1, e3, skew};
use crate::model::{AdmittanceGains, CableParams, SystemParams};
use crate::{Mat3, Vec3};

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Vector6 = SVector<f64, 6>;

/// Load CoM position and attitude (world <- body).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadPose {
    pub position: Vec3,
    pub rotation: Mat3,
}

impl LoadPose {
    pub fn axis(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }
}

/// Load linear velocity (world) and angular velocity (body).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadTwist {
    pub linear: Vec3,
    pub angular: Vec3,
}

/// Full state of the closed loop: both robots and the load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub robot_position: [Vec3; 2],
    pub robot_velocity: [Vec3; 2],
    pub pose: LoadPose,
    pub twist: LoadTwist,
}

impl SystemState {
    /// Zero-velocity state.
    pub fn at_rest(robot_position: [Vec3; 2], pose: LoadPose) -> Self {
        Self {
            robot_position,
            robot_velocity: [Vec3::zeros(); 2],
            pose,
            twist: LoadTwist::default(),
        }
    }

    /// `self + h * d`, component-wise (the rotation block is not re-projected).
    pub fn advanced(&self, d: &StateDerivative, h: f64) -> Self {
        Self {
            robot_position: [
                self.robot_position[0] + h * d.robot_velocity[0],
                self.robot_position[1] + h * d.robot_velocity[1],
            ],
            robot_velocity: [
                self.robot_velocity[0] + h * d.robot_acceleration[0],
                self.robot_velocity[1] + h * d.robot_acceleration[1],
            ],
            pose: LoadPose {
                position: self.pose.position + h * d.load_velocity,
                rotation: self.pose.rotation + h * d.rotation_rate,
            },
            twist: LoadTwist {
                linear: self.twist.linear + h * d.load_acceleration,
                angular: self.twist.angular + h * d.angular_acceleration,
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.robot_position.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.robot_velocity.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.pose.position.iter().all(|x| x.is_finite())
            && self.pose.rotation.iter().all(|x| x.is_finite())
            && self.twist.linear.iter().all(|x| x.is_finite())
            && self.twist.angular.iter().all(|x| x.is_finite())
    }

    /// Largest of the robot, load linear and load angular speed norms.
    pub fn max_speed(&self) -> f64 {
        self.robot_velocity[0]
            .norm()
            .max(self.robot_velocity[1].norm())
            .max(self.twist.linear.norm())
            .max(self.twist.angular.norm())
    }
}

/// Time derivative of a [`SystemState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub robot_velocity: [Vec3; 2],
    pub robot_acceleration: [Vec3; 2],
    pub load_velocity: Vec3,
    pub rotation_rate: Mat3,
    pub load_acceleration: Vec3,
    pub angular_acceleration: Vec3,
}

impl StateDerivative {
    pub fn zero() -> Self {
        Self {
            robot_velocity: [Vec3::zeros(); 2],
            robot_acceleration: [Vec3::zeros(); 2],
            load_velocity: Vec3::zeros(),
            rotation_rate: Mat3::zeros(),
            load_acceleration: Vec3::zeros(),
            angular_acceleration: Vec3::zeros(),
        }
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            m = m.max(self.robot_velocity[i].amax());
            m = m.max(self.robot_acceleration[i].amax());
        }
        m.max(self.load_velocity.amax())
            .max(self.rotation_rate.amax())
            .max(self.load_acceleration.amax())
            .max(self.angular_acceleration.amax())
    }
}

impl Add for StateDerivative {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            robot_velocity: [
                self.robot_velocity[0] + o.robot_velocity[0],
                self.robot_velocity[1] + o.robot_velocity[1],
            ],
            robot_acceleration: [
                self.robot_acceleration[0] + o.robot_acceleration[0],
                self.robot_acceleration[1] + o.robot_acceleration[1],
            ],
            load_velocity: self.load_velocity + o.load_velocity,
            rotation_rate: self.rotation_rate + o.rotation_rate,
            load_acceleration: self.load_acceleration + o.load_acceleration,
            angular_acceleration: self.angular_acceleration + o.angular_acceleration,
        }
    }
}

impl Mul<f64> for StateDerivative {
    type Output = Self;
    fn mul(self, h: f64) -> Self {
        Self {
            robot_velocity: [self.robot_velocity[0] * h, self.robot_velocity[1] * h],
            robot_acceleration: [self.robot_acceleration[0] * h, self.robot_acceleration[1] * h],
            load_velocity: self.load_velocity * h,
            rotation_rate: self.rotation_rate * h,
            load_acceleration: self.load_acceleration * h,
            angular_acceleration: self.angular_acceleration * h,
        }
    }
}

/// Cable state: `delta = p_R - b`, force on the load, and whether it is taut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableReading {
    pub delta: Vec3,
    pub force: Vec3,
    pub taut: bool,
}

/// World position of anchor `i` (0 = leader side at `+b1`, 1 = follower side at `-b2`).
pub fn anchor_position(pose: &LoadPose, i: usize, params: &SystemParams) -> Vec3 {
    pose.position + pose.rotation * params.anchor_body(i)
}

/// Unilateral Hooke law. The force is applied to the load along `delta`;
/// the robot receives the opposite.
pub fn cable_force(cable: &CableParams, delta: &Vec3) -> CableReading {
    let length = delta.norm();
    let stretch = length - cable.rest_length;
    if stretch > 0.0 {
        CableReading {
            delta: *delta,
            force: (cable.stiffness * stretch / length) * delta,
            taut: true,
        }
    } else {
        CableReading {
            delta: *delta,
            force: Vec3::zeros(),
            taut: false,
        }
    }
}

/// Elastic energy stored in a cable, zero when slack.
pub fn cable_potential(cable: &CableParams, delta: &Vec3) -> f64 {
    let stretch = (delta.norm() - cable.rest_length).max(0.0);
    0.5 * cable.stiffness * stretch * stretch
}

pub fn cable_readings(state: &SystemState, params: &SystemParams) -> [CableReading; 2] {
    [0, 1].map(|i| {
        let delta = state.robot_position[i] - anchor_position(&state.pose, i, params);
        cable_force(&params.cables[i], &delta)
    })
}

/// Grasp matrix mapping stacked cable forces to the load wrench
/// (force in world, torque in body), and the gravity wrench.
pub fn grasp_and_gravity(pose: &LoadPose, params: &SystemParams) -> (Matrix6, Vector6) {
    let mut g = Matrix6::zeros();
    let rt = pose.rotation.transpose();
    for i in 0..2 {
        g.fixed_view_mut::<3, 3>(0, 3 * i).copy_from(&Mat3::identity());
        g.fixed_view_mut::<3, 3>(3, 3 * i)
            .copy_from(&(skew(&params.anchor_body(i)) * rt));
    }
    let mut gravity = Vector6::zeros();
    gravity
        .fixed_rows_mut::<3>(0)
        .copy_from(&(params.load_mass * params.gravity * e3()));
    (g, gravity)
}

/// Load accelerations `(dv/dt, domega/dt)` under the stacked cable forces.
pub fn load_acceleration(
    pose: &LoadPose,
    twist: &LoadTwist,
    forces: &[Vec3; 2],
    params: &SystemParams,
) -> (Vec3, Vec3) {
    let (grasp, gravity) = grasp_and_gravity(pose, params);
    let mut f = Vector6::zeros();
    f.fixed_rows_mut::<3>(0).copy_from(&forces[0]);
    f.fixed_rows_mut::<3>(3).copy_from(&forces[1]);
    let wrench = grasp * f - gravity;
    let w = &twist.angular;
    let j = &params.load_inertia;
    let torque = wrench.fixed_rows::<3>(3) - w.cross(&(j * w));
    let angular = j
        .lu()
        .solve(&torque)
        .expect("load inertia validated positive definite");
    let linear = wrench.fixed_rows::<3>(0) / params.load_mass;
    (linear.into_owned(), angular)
}

/// Closed-loop vector field for a constant (or frozen) forcing input `w`.
pub fn closed_loop_field(
    state: &SystemState,
    gains: &AdmittanceGains,
    w: &[Vec3; 2],
    params: &SystemParams,
) -> StateDerivative {
    let cables = cable_readings(state, params);
    let forces = [cables[0].force, cables[1].force];
    let robot_acceleration = [0, 1].map(|i| {
        admittance_accel(
            &state.robot_position[i],
            &state.robot_velocity[i],
            &forces[i],
            gains,
            i,
            &w[i],
        )
    });
    let (load_acc, ang_acc) = load_acceleration(&state.pose, &state.twist, &forces, params);
    StateDerivative {
        robot_velocity: state.robot_velocity,
        robot_acceleration,
        load_velocity: state.twist.linear,
        rotation_rate: state.pose.rotation * skew(&state.twist.angular),
        load_acceleration: load_acc,
        angular_acceleration: ang_acc,
    }
}

/// Signed internal force: positive stretches the beam, negative compresses it.
pub fn internal_force(forces: &[Vec3; 2], rotation: &Mat3) -> f64 {
    0.5 * (forces[0] - forces[1]).dot(&(rotation * e1()))
}

/// Kinetic + gravitational + elastic energy, with the robots' virtual
/// inertia as their mass. Conserved by the field when damping, stiffness and
/// forcing are all zero.
pub fn mechanical_energy(state: &SystemState, params: &SystemParams, gains: &AdmittanceGains) -> f64 {
    let mut e = 0.0;
    for i in 0..2 {
        let v = &state.robot_velocity[i];
        e += 0.5 * v.dot(&(gains.inertia[i] * v));
        let delta = state.robot_position[i] - anchor_position(&state.pose, i, params);
        e += cable_potential(&params.cables[i], &delta);
    }
    let w = &state.twist.angular;
    e += 0.5 * params.load_mass * state.twist.linear.norm_squared();
    e += 0.5 * w.dot(&(params.load_inertia * w));
    e += params.load_mass * params.gravity * state.pose.position.z;
    e
}
