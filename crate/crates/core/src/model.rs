//! Physical parameters, the controller's nominal copy of them, and the
//! uncertainty deltas (`true - nominal`) that drive every analysis result.

use crate::math::{is_symmetric_positive_definite, yaw_pitch_rotation};
use crate::{Error, Mat3, Result, Vec3};

/// How a relative error is turned into a nominal value.
pub const SIGN_CONVENTION: &str = "nominal = true * (1 - fraction)";

/// Unilateral spring model of one cable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableParams {
    /// Elastic coefficient [N/m]
    pub stiffness: f64,
    /// Rest length [m]
    pub rest_length: f64,
}

impl Default for CableParams {
    fn default() -> Self {
        Self {
            stiffness: 50.0,
            rest_length: 1.0,
        }
    }
}

/// True physical parameters of the load, the cables and the robots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Load mass [kg]
    pub load_mass: f64,
    /// Load inertia in the body frame [kg m^2]
    pub load_inertia: Mat3,
    /// Distance from the CoM to anchor 1 along +x of the load [m]
    pub b1: f64,
    /// Distance from the CoM to anchor 2 along -x of the load [m]
    pub b2: f64,
    pub cables: [CableParams; 2],
    /// Robot mass [kg], only used by the anchor-offset reference correction
    pub robot_mass: f64,
    /// Offset of the cable attachment below the robot CoM [m]
    pub anchor_offset: f64,
    /// Gravitational acceleration [m/s^2]
    pub gravity: f64,
}

/// Thin uniform bar inertia; the roll entry is a small regulariser since the
/// roll axis carries no torque from the cables.
pub fn thin_rod_inertia(mass: f64, length: f64) -> Mat3 {
    let transverse = mass * length * length / 12.0;
    Mat3::from_diagonal(&Vec3::new(1e-4, transverse, transverse))
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            load_mass: 0.5,
            load_inertia: thin_rod_inertia(0.5, 1.0),
            b1: 0.5,
            b2: 0.5,
            cables: [CableParams::default(); 2],
            robot_mass: 1.03,
            anchor_offset: 0.15,
            gravity: 9.81,
        }
    }
}

fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

impl SystemParams {
    /// Beam length `L = b1 + b2`.
    pub fn length(&self) -> f64 {
        self.b1 + self.b2
    }

    /// Body-frame anchor vector of cable `i` (0 = leader, 1 = follower).
    pub fn anchor_body(&self, i: usize) -> Vec3 {
        match i {
            0 => Vec3::new(self.b1, 0.0, 0.0),
            _ => Vec3::new(-self.b2, 0.0, 0.0),
        }
    }

    /// Returns the parameters unchanged if every invariant holds.
    pub fn validate(self) -> Result<Self> {
        positive("load.mass", self.load_mass)?;
        positive("load.b1", self.b1)?;
        positive("load.b2", self.b2)?;
        positive("load.gravity", self.gravity)?;
        positive("robot.mass", self.robot_mass)?;
        if !(self.anchor_offset.is_finite() && self.anchor_offset >= 0.0) {
            return Err(invalid("robot.anchor_offset", "must be finite and >= 0"));
        }
        if !self.load_inertia.iter().all(|x| x.is_finite())
            || !is_symmetric_positive_definite(&self.load_inertia)
        {
            return Err(invalid(
                "load.inertia",
                "must be symmetric positive definite",
            ));
        }
        for (i, cable) in self.cables.iter().enumerate() {
            positive(&format!("cable.{}.stiffness", i + 1), cable.stiffness)?;
            positive(&format!("cable.{}.rest_length", i + 1), cable.rest_length)?;
        }
        Ok(self)
    }
}

/// Parameter values available to the controllers.
///
/// Same layout as [`SystemParams`]; only mass, CoM location, length and the
/// cable parameters can differ from the true ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalParams {
    pub params: SystemParams,
}

impl NominalParams {
    pub fn new(params: SystemParams) -> Result<Self> {
        Ok(Self {
            params: params.validate()?,
        })
    }

    /// Perfect knowledge: nominal equals true.
    pub fn exact(truth: &SystemParams) -> Self {
        Self { params: *truth }
    }

    /// Nominal inverse length `1 / L^`.
    pub fn inv_length(&self) -> f64 {
        1.0 / self.params.length()
    }
}

/// Signed relative errors per uncertain parameter family.
///
/// A positive fraction means the controller underestimates the parameter,
/// see [`SIGN_CONVENTION`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelativeErrors {
    pub mass: f64,
    /// Anchor-1 distance `b1` (CoM location)
    pub com: f64,
    pub length: f64,
    pub stiffness: [f64; 2],
    pub rest_length: [f64; 2],
}

impl RelativeErrors {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

/// `true - nominal` for every uncertain quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyDeltas {
    /// `mL - mL^` [kg]
    pub mass: f64,
    /// `b1 - b1^` [m]
    pub com: f64,
    /// `b2 - b2^` [m]
    pub com2: f64,
    /// `L - L^` [m]
    pub length: f64,
    /// `1/L - 1/L^` [1/m]
    pub inv_length: f64,
    /// `k_i - k_i^` [N/m]
    pub stiffness: [f64; 2],
    /// `l0_i - l0_i^` [m]
    pub rest_length: [f64; 2],
}

impl UncertaintyDeltas {
    pub fn between(truth: &SystemParams, nominal: &NominalParams) -> Self {
        let n = &nominal.params;
        Self {
            mass: truth.load_mass - n.load_mass,
            com: truth.b1 - n.b1,
            com2: truth.b2 - n.b2,
            length: truth.length() - n.length(),
            inv_length: 1.0 / truth.length() - 1.0 / n.length(),
            stiffness: [
                truth.cables[0].stiffness - n.cables[0].stiffness,
                truth.cables[1].stiffness - n.cables[1].stiffness,
            ],
            rest_length: [
                truth.cables[0].rest_length - n.cables[0].rest_length,
                truth.cables[1].rest_length - n.cables[1].rest_length,
            ],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mass == 0.0
            && self.com == 0.0
            && self.com2 == 0.0
            && self.length == 0.0
            && self.stiffness == [0.0; 2]
            && self.rest_length == [0.0; 2]
    }
}

fn underestimate(name: &str, value: f64, fraction: f64) -> Result<f64> {
    let nominal = value * (1.0 - fraction);
    if !fraction.is_finite() || !(nominal > 0.0) {
        return Err(Error::InvalidFraction {
            name: name.to_string(),
            value: nominal,
        });
    }
    Ok(nominal)
}

/// Builds the controller's nominal parameters from relative errors.
///
/// `b2^` follows from `L^ - b1^`, so a length error moves anchor 2 only.
pub fn apply_relative_errors(
    truth: &SystemParams,
    rel: &RelativeErrors,
) -> Result<(NominalParams, UncertaintyDeltas)> {
    let mut n = *truth;
    n.load_mass = underestimate("mass", truth.load_mass, rel.mass)?;
    n.b1 = underestimate("com", truth.b1, rel.com)?;
    let length = underestimate("length", truth.length(), rel.length)?;
    n.b2 = length - n.b1;
    if !(n.b2 > 0.0) {
        return Err(Error::InvalidFraction {
            name: "com/length".to_string(),
            value: n.b2,
        });
    }
    for i in 0..2 {
        n.cables[i].stiffness =
            underestimate(&format!("stiffness.{}", i + 1), truth.cables[i].stiffness, rel.stiffness[i])?;
        n.cables[i].rest_length = underestimate(
            &format!("rest_length.{}", i + 1),
            truth.cables[i].rest_length,
            rel.rest_length[i],
        )?;
    }
    let nominal = NominalParams { params: n };
    let deltas = UncertaintyDeltas::between(truth, &nominal);
    Ok((nominal, deltas))
}

/// Virtual mass-spring-damper gains of the two admittance controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmittanceGains {
    /// Virtual inertia `M_A,i` [kg]
    pub inertia: [Mat3; 2],
    /// Virtual damping `B_A,i` [N s/m]
    pub damping: [Mat3; 2],
    /// Virtual stiffness `K_A,i` [N/m]; zero for the follower
    pub stiffness: [Mat3; 2],
}

impl Default for AdmittanceGains {
    fn default() -> Self {
        let eye = Mat3::identity();
        Self {
            inertia: [0.2 * eye, 0.2 * eye],
            damping: [0.5 * eye, 0.5 * eye],
            stiffness: [10.0 * eye, Mat3::zeros()],
        }
    }
}

impl AdmittanceGains {
    pub fn validate(self) -> Result<Self> {
        for i in 0..2 {
            if !is_symmetric_positive_definite(&self.inertia[i]) {
                return Err(invalid(
                    &format!("gains.{}.inertia", i + 1),
                    "must be symmetric positive definite",
                ));
            }
            if !is_symmetric_positive_definite(&self.damping[i]) {
                return Err(invalid(
                    &format!("gains.{}.damping", i + 1),
                    "must be symmetric positive definite",
                ));
            }
        }
        if !is_symmetric_positive_definite(&self.stiffness[0]) {
            return Err(invalid(
                "gains.1.stiffness",
                "leader stiffness must be symmetric positive definite",
            ));
        }
        if self.stiffness[1] != Mat3::zeros() {
            return Err(invalid(
                "gains.2.stiffness",
                "follower stiffness must be zero",
            ));
        }
        Ok(self)
    }
}

/// Desired load pose and commanded internal force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredTask {
    /// Desired CoM position [m]
    pub position: Vec3,
    /// Desired yaw [rad]
    pub yaw: f64,
    /// Desired pitch [rad], |pitch| < pi/2
    pub pitch: f64,
    /// Internal force [N]; positive stretches the beam
    pub internal_force: f64,
}

impl Default for DesiredTask {
    fn default() -> Self {
        Self {
            position: Vec3::new(1.0, 1.0, 1.0),
            yaw: std::f64::consts::PI / 8.0,
            pitch: -std::f64::consts::PI / 12.0,
            internal_force: 1.0,
        }
    }
}

impl DesiredTask {
    /// Desired attitude (zero roll about the beam axis).
    pub fn rotation(&self) -> Mat3 {
        yaw_pitch_rotation(self.yaw, self.pitch)
    }

    /// Desired beam axis `R_des e1`.
    pub fn axis(&self) -> Vec3 {
        self.rotation().column(0).into_owned()
    }

    pub fn with_internal_force(mut self, internal_force: f64) -> Self {
        self.internal_force = internal_force;
        self
    }

    pub fn validate(self) -> Result<Self> {
        if !self.position.iter().all(|x| x.is_finite()) {
            return Err(invalid("task.position", "must be finite"));
        }
        if !self.yaw.is_finite() || !self.internal_force.is_finite() {
            return Err(invalid("task", "yaw and internal force must be finite"));
        }
        if !(self.pitch.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(invalid("task.pitch", "must satisfy |pitch| < pi/2"));
        }
        Ok(self)
    }
}
