//! Equilibria reached under the forcing input synthesised from nominal
//! parameters, their branch structure, and the closed-form attitude.
//!
//! With the follower's stiffness at zero its cable force equals `w_2` at
//! rest. Force balance then fixes `f_1`, the leader's spring fixes `p_R1`, and
//! the torque balance about the CoM forces the beam axis to be parallel to
//! `u = b1 mL g e3 - L w_2`. With `w_2 = f^_2` this is
//! `u = xi g e3 + L t_I R_des e1`, where `xi = b1 mL - b1^ mL^ L / L^`.

use crate::control::{synthesize_forcing, EquilibriumReferences};
use crate::dynamics::{LoadPose, SystemState};
use crate::math::{axis_yaw_pitch, e1, e3, frame_from_axis, rot_z, wrap_angle};
use crate::model::{
    apply_relative_errors, AdmittanceGains, DesiredTask, NominalParams, RelativeErrors,
    SystemParams,
};
use crate::{Error, Mat3, Result, Vec3};

/// Internal forces below this magnitude are treated as zero.
pub const INTERNAL_FORCE_EPS: f64 = 1e-9;
/// `|xi|` below this is treated as zero.
pub const XI_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EquilibriumBranch {
    /// Beam axis along `+u`
    IsolatedPlus,
    /// Beam axis along `-u`
    IsolatedMinus,
    /// Vertical beam with anchor 1 on top
    VerticalLeaderUp,
    /// Vertical beam with anchor 1 at the bottom
    VerticalLeaderDown,
    /// `t_I = 0` and `xi = 0`: any attitude with vertical cables
    Continuum,
}

impl EquilibriumBranch {
    pub fn name(&self) -> &'static str {
        match self {
            Self::IsolatedPlus => "Q+",
            Self::IsolatedMinus => "Q-",
            Self::VerticalLeaderUp => "Q0_leader_up",
            Self::VerticalLeaderDown => "Q0_leader_down",
            Self::Continuum => "continuum",
        }
    }
}

impl std::fmt::Display for EquilibriumBranch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The set of equilibria when `t_I = 0` and `xi = 0`: anchor 1 is fixed and
/// the load can take any attitude around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumDescriptor {
    /// Anchor 1 position [m]
    pub center: Vec3,
    /// Distance of anchor 2 from anchor 1 [m]
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSolution {
    pub branch: EquilibriumBranch,
    pub robot_position: [Vec3; 2],
    pub rotation: Mat3,
    /// Cable forces on the load [N]
    pub forces: [Vec3; 2],
    pub load_position: Vec3,
    pub xi: f64,
    pub yaw: f64,
    pub pitch: f64,
    /// Set for [`EquilibriumBranch::Continuum`]; the other fields then hold
    /// the member with the desired attitude.
    pub continuum: Option<ContinuumDescriptor>,
}

impl EquilibriumSolution {
    /// Zero-velocity state at this equilibrium.
    pub fn state(&self) -> SystemState {
        SystemState::at_rest(
            self.robot_position,
            LoadPose {
                position: self.load_position,
                rotation: self.rotation,
            },
        )
    }

    pub fn axis(&self) -> Vec3 {
        self.rotation * e1()
    }
}

/// `xi = b1 mL - b1^ mL^ L / L^`.
pub fn compute_xi(truth: &SystemParams, nominal: &NominalParams) -> f64 {
    let n = &nominal.params;
    truth.b1 * truth.load_mass - n.b1 * n.load_mass * truth.length() / n.length()
}

fn snap(value: f64, eps: f64) -> f64 {
    if value.abs() < eps {
        0.0
    } else {
        value
    }
}

/// Direction the beam axis must be parallel to at equilibrium.
pub fn alignment_vector(task: &DesiredTask, xi: f64, length: f64, gravity: f64) -> Vec3 {
    let t_i = snap(task.internal_force, INTERNAL_FORCE_EPS);
    snap(xi, XI_EPS) * gravity * e3() + length * t_i * task.axis()
}

/// Branches that exist for the given internal force and `xi`, stable candidate first.
pub fn branches(task: &DesiredTask, xi: f64) -> Vec<EquilibriumBranch> {
    let t_i = snap(task.internal_force, INTERNAL_FORCE_EPS);
    let xi = snap(xi, XI_EPS);
    if t_i != 0.0 {
        vec![EquilibriumBranch::IsolatedPlus, EquilibriumBranch::IsolatedMinus]
    } else if xi > 0.0 {
        vec![EquilibriumBranch::VerticalLeaderUp, EquilibriumBranch::VerticalLeaderDown]
    } else if xi < 0.0 {
        vec![EquilibriumBranch::VerticalLeaderDown, EquilibriumBranch::VerticalLeaderUp]
    } else {
        vec![EquilibriumBranch::Continuum]
    }
}

/// Equilibrium attitude of a branch, with its yaw and pitch.
///
/// Isolated branches keep zero roll about the beam axis; `Q-` is `Q+`
/// rotated by `pi` about the body z axis. Vertical branches keep the desired
/// heading and report it as their yaw.
pub fn equilibrium_attitude(
    task: &DesiredTask,
    xi: f64,
    length: f64,
    gravity: f64,
    branch: EquilibriumBranch,
) -> Result<(Mat3, f64, f64)> {
    let u = alignment_vector(task, xi, length, gravity);
    let plus = |u: &Vec3| frame_from_axis(u, task.yaw);
    let isolated = snap(task.internal_force, INTERNAL_FORCE_EPS) != 0.0;
    let rotation = match branch {
        EquilibriumBranch::Continuum => return Err(Error::UndefinedAttitude),
        EquilibriumBranch::IsolatedPlus | EquilibriumBranch::IsolatedMinus => {
            if !isolated {
                return Err(Error::UndefinedAttitude);
            }
            let r = plus(&u);
            if branch == EquilibriumBranch::IsolatedPlus {
                r
            } else {
                r * rot_z(std::f64::consts::PI)
            }
        }
        EquilibriumBranch::VerticalLeaderUp | EquilibriumBranch::VerticalLeaderDown => {
            if isolated || u == Vec3::zeros() {
                return Err(Error::UndefinedAttitude);
            }
            let up = plus(&e3());
            if branch == EquilibriumBranch::VerticalLeaderUp {
                up
            } else {
                up * rot_z(std::f64::consts::PI)
            }
        }
    };
    let (yaw, pitch) = match branch {
        EquilibriumBranch::VerticalLeaderUp => (wrap_angle(task.yaw), -std::f64::consts::FRAC_PI_2),
        EquilibriumBranch::VerticalLeaderDown => (wrap_angle(task.yaw), std::f64::consts::FRAC_PI_2),
        _ => {
            let (yaw, pitch) = axis_yaw_pitch(&(rotation * e1()));
            (wrap_angle(yaw), pitch)
        }
    };
    Ok((rotation, yaw, pitch))
}

/// Closed-form pitch of the equilibrium that keeps the desired heading:
/// `tan(pitch) = tan(pitch_des) - xi g / (L t_I cos(pitch_des))`.
///
/// This is `Q+` for a positive internal force and `Q-` for a negative one.
pub fn closed_form_pitch(task: &DesiredTask, xi: f64, length: f64, gravity: f64) -> Result<f64> {
    if snap(task.internal_force, INTERNAL_FORCE_EPS) == 0.0 {
        return Err(Error::DegenerateInternalForce);
    }
    let th = task.pitch;
    Ok((th.tan() - xi * gravity / (length * task.internal_force * th.cos())).atan())
}

fn unit_or_zero_force(f: &Vec3) -> Result<Vec3> {
    let n = f.norm();
    if n > 0.0 {
        Ok(f / n)
    } else {
        Err(Error::ZeroForce)
    }
}

/// Equilibria of the true system under arbitrary references, e.g. after the
/// leader has corrected its reference. The follower stiffness must be zero.
pub fn solve_with_references(
    task: &DesiredTask,
    truth: &SystemParams,
    nominal: &NominalParams,
    gains: &AdmittanceGains,
    refs: &EquilibriumReferences,
) -> Result<Vec<EquilibriumSolution>> {
    let g = truth.gravity;
    let xi = compute_xi(truth, nominal);
    let f2 = refs.forcing.w[1];
    let f1 = truth.load_mass * g * e3() - f2;
    let p_r1 = gains.stiffness[0]
        .lu()
        .solve(&(refs.forcing.w[0] - f1))
        .ok_or_else(|| Error::InvalidParameter {
            name: "gains.1.stiffness".to_string(),
            reason: "must be invertible".to_string(),
        })?;
    let dir1 = unit_or_zero_force(&f1)?;
    let dir2 = unit_or_zero_force(&f2)?;
    let c1 = &truth.cables[0];
    let c2 = &truth.cables[1];
    let stretch1 = f1.norm() / c1.stiffness + c1.rest_length;
    let stretch2 = f2.norm() / c2.stiffness + c2.rest_length;

    let assemble = |branch: EquilibriumBranch, rotation: Mat3, yaw: f64, pitch: f64| {
        let p_l = p_r1 - rotation * truth.anchor_body(0) - stretch1 * dir1;
        let p_r2 = p_l + rotation * truth.anchor_body(1) + stretch2 * dir2;
        EquilibriumSolution {
            branch,
            robot_position: [p_r1, p_r2],
            rotation,
            forces: [f1, f2],
            load_position: p_l,
            xi,
            yaw,
            pitch,
            continuum: None,
        }
    };

    branches(task, xi)
        .into_iter()
        .map(|branch| {
            if branch == EquilibriumBranch::Continuum {
                let mut s = assemble(branch, task.rotation(), wrap_angle(task.yaw), task.pitch);
                s.continuum = Some(ContinuumDescriptor {
                    center: p_r1 - stretch1 * dir1,
                    radius: truth.length(),
                });
                Ok(s)
            } else {
                let (r, yaw, pitch) = equilibrium_attitude(task, xi, truth.length(), g, branch)?;
                Ok(assemble(branch, r, yaw, pitch))
            }
        })
        .collect()
}

/// All equilibria of the true system under the forcing input synthesised
/// from the nominal parameters.
pub fn direct_equilibrium(
    task: &DesiredTask,
    truth: &SystemParams,
    nominal: &NominalParams,
    gains: &AdmittanceGains,
) -> Result<Vec<EquilibriumSolution>> {
    let refs = synthesize_forcing(task, nominal, gains)?;
    solve_with_references(task, truth, nominal, gains, &refs)
}

/// A single uncertain parameter family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UncertainCase {
    Mass,
    Length,
    Com,
    /// Cable index 0 (leader) or 1 (follower)
    Cable(usize),
}

impl UncertainCase {
    /// Relative errors with `fraction` on this family only. The cable case
    /// applies it to the rest length.
    pub fn relative_errors(&self, fraction: f64) -> RelativeErrors {
        let mut rel = RelativeErrors::default();
        match *self {
            Self::Mass => rel.mass = fraction,
            Self::Length => rel.length = fraction,
            Self::Com => rel.com = fraction,
            Self::Cable(i) => rel.rest_length[i.min(1)] = fraction,
        }
        rel
    }

    pub fn name(&self) -> String {
        match self {
            Self::Mass => "mass".to_string(),
            Self::Length => "length".to_string(),
            Self::Com => "com".to_string(),
            Self::Cable(i) => format!("cable{}", i + 1),
        }
    }
}

impl std::str::FromStr for UncertainCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mass" => Ok(Self::Mass),
            "length" => Ok(Self::Length),
            "com" => Ok(Self::Com),
            "cable1" => Ok(Self::Cable(0)),
            "cable2" => Ok(Self::Cable(1)),
            other => Err(Error::Config(format!("unknown parameter family '{other}'"))),
        }
    }
}

/// Stable-candidate equilibrium for a single uncertain family, with the
/// residuals of the identities that family must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseEquilibrium {
    pub solution: EquilibriumSolution,
    pub references: EquilibriumReferences,
    /// `(identity, residual)`; every residual should be at round-off level
    pub identities: Vec<(&'static str, f64)>,
}

impl CaseEquilibrium {
    pub fn max_residual(&self) -> f64 {
        self.identities.iter().fold(0.0, |m, (_, r)| m.max(*r))
    }
}

pub fn per_parameter_equilibrium(
    case: UncertainCase,
    fraction: f64,
    task: &DesiredTask,
    truth: &SystemParams,
    gains: &AdmittanceGains,
) -> Result<CaseEquilibrium> {
    let (nominal, deltas) = apply_relative_errors(truth, &case.relative_errors(fraction))?;
    let refs = synthesize_forcing(task, &nominal, gains)?;
    let solution = solve_with_references(task, truth, &nominal, gains, &refs)?[0];
    let g = truth.gravity;
    let ka_inv = gains.stiffness[0].try_inverse().unwrap_or_else(Mat3::zeros);
    let mut identities = vec![
        ("f2 = f2^", (solution.forces[1] - refs.forces[1]).norm()),
        (
            "f1 - f1^ = dm g e3",
            (solution.forces[0] - refs.forces[0] - deltas.mass * g * e3()).norm(),
        ),
        (
            "pR1 = pR1^ - KA1^-1 dm g e3",
            (solution.robot_position[0] - refs.robot_reference[0] + ka_inv * (deltas.mass * g * e3()))
                .norm(),
        ),
    ];
    let desired_axis = task.axis();
    match case {
        UncertainCase::Mass => {}
        UncertainCase::Length | UncertainCase::Com => {
            identities.push(("f1 = f1^", (solution.forces[0] - refs.forces[0]).norm()));
            identities.push((
                "pR1 = pR1^",
                (solution.robot_position[0] - refs.robot_reference[0]).norm(),
            ));
        }
        UncertainCase::Cable(i) => {
            identities.push(("R = R_des", (solution.axis() - desired_axis).norm()));
            let shift = if i == 0 {
                let dir = refs.forces[0].normalize();
                task.position + deltas.rest_length[0] * -dir - solution.load_position
            } else {
                task.position - solution.load_position
            };
            identities.push(("pL shift", shift.norm()));
        }
    }
    Ok(CaseEquilibrium {
        solution,
        references: refs,
        identities,
    })
}
