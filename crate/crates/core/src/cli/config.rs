//! TOML configuration schema and its conversion into model types.

use serde::{Deserialize, Serialize};

use crate::equilibria::UncertainCase;
use crate::model::{
    apply_relative_errors, thin_rod_inertia, AdmittanceGains, CableParams, DesiredTask,
    NominalParams, RelativeErrors, SystemParams, UncertaintyDeltas,
};
use crate::sim::{CorrectionEvent, LiftProfile, ScenarioConfig};
use crate::dynamics::LoadPose;
use crate::math::yaw_pitch_rotation;
use crate::{Error, Mat3, Result, Vec3};

type Rows = [[f64; 3]; 3];

fn rows(m: &Mat3) -> Rows {
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

fn matrix(r: &Rows) -> Mat3 {
    Mat3::from_fn(|i, j| r[i][j])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSection {
    pub mass: f64,
    pub inertia: Rows,
    pub b1: f64,
    pub b2: f64,
    pub gravity: f64,
}

impl Default for LoadSection {
    fn default() -> Self {
        let p = SystemParams::default();
        Self {
            mass: p.load_mass,
            inertia: rows(&thin_rod_inertia(p.load_mass, p.length())),
            b1: p.b1,
            b2: p.b2,
            gravity: p.gravity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CableSection {
    pub stiffness: f64,
    pub rest_length: f64,
}

impl Default for CableSection {
    fn default() -> Self {
        let c = CableParams::default();
        Self {
            stiffness: c.stiffness,
            rest_length: c.rest_length,
        }
    }
}

/// Per-robot sections, written `[cable.1]`, `[gains.2]` and so on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PerRobot<T> {
    #[serde(rename = "1")]
    pub leader: T,
    #[serde(rename = "2")]
    pub follower: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotSection {
    pub mass: f64,
    pub anchor_offset: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        let p = SystemParams::default();
        Self {
            mass: p.robot_mass,
            anchor_offset: p.anchor_offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSection {
    pub inertia: Rows,
    pub damping: Rows,
    pub stiffness: Rows,
}

impl Default for PerRobot<GainSection> {
    fn default() -> Self {
        let g = AdmittanceGains::default();
        let section = |i: usize| GainSection {
            inertia: rows(&g.inertia[i]),
            damping: rows(&g.damping[i]),
            stiffness: rows(&g.stiffness[i]),
        };
        Self {
            leader: section(0),
            follower: section(1),
        }
    }
}

/// Signed relative errors; positive means the controller underestimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintySection {
    pub mass: f64,
    pub com: f64,
    pub length: f64,
    pub stiffness: [f64; 2],
    pub rest_length: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub internal_force: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        let t = DesiredTask::default();
        Self {
            position: [t.position.x, t.position.y, t.position.z],
            yaw: t.yaw,
            pitch: t.pitch,
            internal_force: t.internal_force,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub duration: f64,
    pub lift_height: f64,
    pub lift_duration: f64,
    pub shaping_duration: f64,
    /// `none`, `at_time` or `steady_state`
    pub correction: String,
    pub correction_time: f64,
    pub repeat_correction: bool,
    pub velocity_eps: f64,
    pub window: f64,
    pub record_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accel_limit: Option<f64>,
    /// Initial load position; defaults to below the target by the lift height
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_yaw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_pitch: Option<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            dt: s.dt,
            duration: s.duration,
            lift_height: s.lift.height,
            lift_duration: s.lift.duration,
            shaping_duration: s.shaping_duration,
            correction: "none".to_string(),
            correction_time: 0.0,
            repeat_correction: s.repeat_correction,
            velocity_eps: s.velocity_eps,
            window: s.window,
            record_every: s.record_every,
            accel_limit: None,
            initial_position: None,
            initial_yaw: None,
            initial_pitch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub internal_forces: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Any of `mass`, `length`, `com`, `cable1`, `cable2`
    pub parameters: Vec<String>,
    pub cap: usize,
    pub record_every: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            internal_forces: vec![0.5, 0.75, 1.0, 1.25],
            fractions: vec![0.0, 0.05, 0.1, 0.15],
            parameters: vec!["mass".into(), "length".into(), "com".into()],
            cap: 10_000,
            record_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub load: LoadSection,
    pub cable: PerRobot<CableSection>,
    pub robot: RobotSection,
    pub gains: PerRobot<GainSection>,
    pub uncertainty: UncertaintySection,
    pub task: TaskSection,
    pub sim: SimSection,
    pub sweep: SweepSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let cable = |c: &CableSection| CableParams {
            stiffness: c.stiffness,
            rest_length: c.rest_length,
        };
        SystemParams {
            load_mass: self.load.mass,
            load_inertia: matrix(&self.load.inertia),
            b1: self.load.b1,
            b2: self.load.b2,
            cables: [cable(&self.cable.leader), cable(&self.cable.follower)],
            robot_mass: self.robot.mass,
            anchor_offset: self.robot.anchor_offset,
            gravity: self.load.gravity,
        }
        .validate()
    }

    pub fn relative_errors(&self) -> RelativeErrors {
        let u = &self.uncertainty;
        RelativeErrors {
            mass: u.mass,
            com: u.com,
            length: u.length,
            stiffness: u.stiffness,
            rest_length: u.rest_length,
        }
    }

    pub fn nominal(&self, truth: &SystemParams) -> Result<(NominalParams, UncertaintyDeltas)> {
        apply_relative_errors(truth, &self.relative_errors())
    }

    pub fn gains(&self) -> Result<AdmittanceGains> {
        let g = &self.gains;
        AdmittanceGains {
            inertia: [matrix(&g.leader.inertia), matrix(&g.follower.inertia)],
            damping: [matrix(&g.leader.damping), matrix(&g.follower.damping)],
            stiffness: [matrix(&g.leader.stiffness), matrix(&g.follower.stiffness)],
        }
        .validate()
    }

    pub fn task(&self) -> Result<DesiredTask> {
        let t = &self.task;
        DesiredTask {
            position: Vec3::from(t.position),
            yaw: t.yaw,
            pitch: t.pitch,
            internal_force: t.internal_force,
        }
        .validate()
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let s = &self.sim;
        let task = self.task()?;
        let correction = match s.correction.as_str() {
            "none" => CorrectionEvent::None,
            "at_time" => CorrectionEvent::AtTime(s.correction_time),
            "steady_state" => CorrectionEvent::OnSteadyState,
            other => {
                return Err(Error::Config(format!(
                    "sim.correction must be none, at_time or steady_state, got '{other}'"
                )))
            }
        };
        let initial_pose = if s.initial_position.is_some() || s.initial_yaw.is_some() || s.initial_pitch.is_some() {
            let position = s
                .initial_position
                .map(Vec3::from)
                .unwrap_or(task.position - s.lift_height * Vec3::z());
            Some(LoadPose {
                position,
                rotation: yaw_pitch_rotation(
                    s.initial_yaw.unwrap_or(task.yaw),
                    s.initial_pitch.unwrap_or(0.0),
                ),
            })
        } else {
            None
        };
        ScenarioConfig {
            task,
            initial_pose,
            lift: LiftProfile {
                height: s.lift_height,
                duration: s.lift_duration,
            },
            shaping_duration: s.shaping_duration,
            correction,
            repeat_correction: s.repeat_correction,
            dt: s.dt,
            duration: s.duration,
            velocity_eps: s.velocity_eps,
            window: s.window,
            record_every: s.record_every,
            accel_limit: s.accel_limit,
        }
        .validate()
    }

    pub fn sweep_parameters(&self) -> Result<Vec<UncertainCase>> {
        self.sweep.parameters.iter().map(|p| p.parse()).collect()
    }
}
