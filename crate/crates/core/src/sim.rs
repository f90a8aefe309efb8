//! Fixed-step simulation of the closed loop: a scripted lift, admittance
//! regulation under the nominal forcing input, and an optional leader
//! reference correction.

use std::collections::VecDeque;
use std::io::Write;

use crate::analysis::{attitude_error, lyapunov_value};
use crate::control::{corrected_leader_reference, synthesize_forcing, EquilibriumReferences};
use crate::dynamics::{
    cable_readings, closed_loop_field, internal_force, LoadPose, StateDerivative, SystemState,
};
use crate::equilibria::{solve_with_references, EquilibriumSolution};
use crate::math::{e3, project_to_so3, quintic_blend, wrap_angle, yaw_pitch, yaw_pitch_rotation};
use crate::model::{AdmittanceGains, DesiredTask, NominalParams, SystemParams};
use crate::{Error, Result, Vec3};

/// One classical Runge-Kutta step of `field(t, x)`, followed by polar
/// projection of the attitude.
pub fn rk4_step<F>(field: &F, t: f64, state: &SystemState, dt: f64) -> Result<SystemState>
where
    F: Fn(f64, &SystemState) -> StateDerivative,
{
    let k1 = field(t, state);
    let k2 = field(t + 0.5 * dt, &state.advanced(&k1, 0.5 * dt));
    let k3 = field(t + 0.5 * dt, &state.advanced(&k2, 0.5 * dt));
    let k4 = field(t + dt, &state.advanced(&k3, dt));
    let d = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (1.0 / 6.0);
    let mut next = state.advanced(&d, dt);
    if !next.is_finite() {
        return Err(Error::NonFiniteState {
            time: t + dt,
            what: "state".to_string(),
        });
    }
    next.pose.rotation = project_to_so3(&next.pose.rotation);
    Ok(next)
}

/// When the leader corrects its reference against the load position error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrectionEvent {
    None,
    AtTime(f64),
    OnSteadyState,
}

/// Scripted vertical climb of both robots before admittance activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftProfile {
    pub height: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub task: DesiredTask,
    /// Load pose at `t = 0`; `None` hangs the load level below the target
    /// at the lift height with the desired yaw.
    pub initial_pose: Option<LoadPose>,
    pub lift: LiftProfile,
    /// Duration of the quintic blend of each leader reference change; 0 steps
    pub shaping_duration: f64,
    pub correction: CorrectionEvent,
    pub repeat_correction: bool,
    pub dt: f64,
    pub duration: f64,
    pub velocity_eps: f64,
    pub window: f64,
    /// Record every n-th step
    pub record_every: usize,
    /// Optional clamp on the robot acceleration norm [m/s^2]
    pub accel_limit: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            task: DesiredTask::default(),
            initial_pose: None,
            lift: LiftProfile {
                height: 1.0,
                duration: 5.0,
            },
            shaping_duration: 5.0,
            correction: CorrectionEvent::None,
            repeat_correction: false,
            dt: 1e-3,
            duration: 60.0,
            velocity_eps: 1e-3,
            window: 2.0,
            record_every: 1,
            accel_limit: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(self) -> Result<Self> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter {
                name: format!("sim.{name}"),
                reason: reason.to_string(),
            })
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be > 0");
        }
        if !(self.lift.duration >= 0.0 && self.lift.height.is_finite()) {
            return bad("lift_duration", "must be >= 0");
        }
        if !(self.duration >= self.lift.duration) {
            return bad("duration", "must be at least the lift duration");
        }
        if !(self.velocity_eps > 0.0 && self.window > 0.0) {
            return bad("velocity_eps", "tolerances must be positive");
        }
        if !(self.shaping_duration >= 0.0) {
            return bad("shaping_duration", "must be >= 0");
        }
        if self.record_every == 0 {
            return bad("record_every", "must be >= 1");
        }
        if let Some(a) = self.accel_limit {
            if !(a > 0.0) {
                return bad("accel_limit", "must be > 0");
            }
        }
        self.task.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Lift,
    Regulate,
}

/// One recorded instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub phase: Phase,
    pub state: SystemState,
    pub yaw: f64,
    pub pitch: f64,
    pub forces: [Vec3; 2],
    pub internal_force: f64,
    /// Lyapunov value against the equilibrium predicted for the active
    /// references; NaN during the lift
    pub lyapunov: f64,
    pub attitude_error: f64,
    pub position_error: f64,
    /// True while the leader reference is being blended
    pub shaping: bool,
}

/// Window-averaged quantities at a detected steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// End of the quiet window
    pub time: f64,
    pub state: SystemState,
    pub load_position: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    pub forces: [Vec3; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionRecord {
    pub time: f64,
    /// Steady state the correction was computed from
    pub before: SteadyState,
    pub position_error: Vec3,
    pub new_reference: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub dt: f64,
    pub record_every: usize,
    /// Time the admittance controllers took over
    pub activation_time: f64,
    /// End of the last leader reference blend
    pub shaping_end: f64,
    pub corrections: Vec<CorrectionRecord>,
    /// References active at the end of the run
    pub references: EquilibriumReferences,
    /// Stable-candidate equilibrium for the final references
    pub predicted: Option<EquilibriumSolution>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Steady state reached after the last correction, if any.
    pub fn final_steady_state(&self, velocity_eps: f64, window: f64) -> Option<SteadyState> {
        let start = self
            .corrections
            .last()
            .map(|c| c.time)
            .unwrap_or(self.activation_time)
            .max(self.shaping_end);
        let from = self.samples.partition_point(|s| s.time < start);
        detect_steady_state(&self.samples[from..], velocity_eps, window)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "t,pL_x,pL_y,pL_z,yaw,pitch,pR1_x,pR1_y,pR1_z,pR2_x,pR2_y,pR2_z,\
             vR1_x,vR1_y,vR1_z,vR2_x,vR2_y,vR2_z,f1_x,f1_y,f1_z,f2_x,f2_y,f2_z,\
             tI_actual,V,eR,epL_norm"
        )?;
        for s in &self.samples {
            let st = &s.state;
            let mut row: Vec<f64> = vec![s.time];
            row.extend(st.pose.position.iter());
            row.push(s.yaw);
            row.push(s.pitch);
            for v in st.robot_position.iter().chain(st.robot_velocity.iter()).chain(s.forces.iter()) {
                row.extend(v.iter());
            }
            row.extend([s.internal_force, s.lyapunov, s.attitude_error, s.position_error]);
            let line: Vec<String> = row.iter().map(|x| format!("{x:.10e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// A run stopped early by a non-finite state; the samples recorded up to
/// that point are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioAbort {
    pub error: Error,
    pub partial: Trajectory,
}

impl std::fmt::Display for ScenarioAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} samples", self.error, self.partial.samples.len())
    }
}

impl std::error::Error for ScenarioAbort {}

/// First window over which every speed stays below `velocity_eps`, with
/// averages over that window.
pub fn detect_steady_state(samples: &[Sample], velocity_eps: f64, window: f64) -> Option<SteadyState> {
    let mut start = None;
    for (k, s) in samples.iter().enumerate() {
        if s.state.max_speed() >= velocity_eps || s.phase == Phase::Lift {
            start = None;
            continue;
        }
        let first = *start.get_or_insert(k);
        if s.time - samples[first].time >= window - 1e-9 {
            return Some(average_samples(&samples[first..=k]));
        }
    }
    None
}

/// Averages over a run of samples; yaw and pitch come from the mean beam axis.
pub fn average_samples(samples: &[Sample]) -> SteadyState {
    let n = samples.len() as f64;
    let mean = |f: &dyn Fn(&Sample) -> Vec3| samples.iter().map(f).sum::<Vec3>() / n;
    let load_position = mean(&|s| s.state.pose.position);
    let axis = mean(&|s| s.state.pose.axis());
    let (yaw, pitch) = crate::math::axis_yaw_pitch(&axis);
    let last = samples[samples.len() - 1];
    let mut state = last.state;
    state.pose.position = load_position;
    state.robot_position = [mean(&|s| s.state.robot_position[0]), mean(&|s| s.state.robot_position[1])];
    SteadyState {
        time: last.time,
        state,
        load_position,
        yaw: wrap_angle(yaw),
        pitch,
        forces: [mean(&|s| s.forces[0]), mean(&|s| s.forces[1])],
    }
}

/// Load hanging at rest below the lift end point with vertical cables.
fn initial_state(cfg: &ScenarioConfig, truth: &SystemParams) -> SystemState {
    let pose = cfg.initial_pose.unwrap_or(LoadPose {
        position: cfg.task.position - cfg.lift.height * e3(),
        rotation: yaw_pitch_rotation(cfg.task.yaw, 0.0),
    });
    let weight = truth.load_mass * truth.gravity / truth.length();
    let loads = [truth.b2 * weight, truth.b1 * weight];
    let robots = [0, 1].map(|i| {
        let c = &truth.cables[i];
        crate::dynamics::anchor_position(&pose, i, truth) + (loads[i] / c.stiffness + c.rest_length) * e3()
    });
    SystemState::at_rest(robots, pose)
}

/// Leader reference blend between two points.
#[derive(Debug, Clone, Copy)]
struct Blend {
    from: Vec3,
    to: Vec3,
    start: f64,
    duration: f64,
}

impl Blend {
    fn at(&self, t: f64) -> Vec3 {
        if self.duration <= 0.0 {
            return self.to;
        }
        let (s, _, _) = quintic_blend((t - self.start) / self.duration);
        self.from + s * (self.to - self.from)
    }

    fn end(&self) -> f64 {
        self.start + self.duration
    }
}

fn clamp_accel(d: &mut StateDerivative, limit: Option<f64>) {
    if let Some(a) = limit {
        for acc in d.robot_acceleration.iter_mut() {
            let n = acc.norm();
            if n > a {
                *acc *= a / n;
            }
        }
    }
}

/// Runs lift, regulation and correction. The follower's forcing input is
/// applied as a step at activation; the leader's reference is blended from
/// where the robot stands.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    truth: &SystemParams,
    nominal: &NominalParams,
    gains: &AdmittanceGains,
) -> std::result::Result<Trajectory, ScenarioAbort> {
    let mut refs = synthesize_forcing(&cfg.task, nominal, gains).map_err(|error| ScenarioAbort {
        error,
        partial: empty_trajectory(cfg),
    })?;
    let predict = |r: &EquilibriumReferences| {
        solve_with_references(&cfg.task, truth, nominal, gains, r)
            .ok()
            .map(|v| v[0])
    };
    let mut predicted = predict(&refs);

    let start = initial_state(cfg, truth);
    let lift_from = start.robot_position;
    let lift = cfg.lift;
    let lift_robot = |t: f64| -> ([Vec3; 2], [Vec3; 2]) {
        if lift.duration <= 0.0 {
            return (lift_from, [Vec3::zeros(); 2]);
        }
        let (s, ds, _) = quintic_blend(t / lift.duration);
        let z = lift.height * e3();
        (
            [lift_from[0] + s * z, lift_from[1] + s * z],
            [ds / lift.duration * z; 2],
        )
    };

    let steps = (cfg.duration / cfg.dt).round() as usize;
    let lift_steps = (lift.duration / cfg.dt).round() as usize;
    let activation_time = lift_steps as f64 * cfg.dt;

    let mut traj = Trajectory {
        samples: Vec::with_capacity(steps / cfg.record_every + 2),
        dt: cfg.dt,
        record_every: cfg.record_every,
        activation_time,
        shaping_end: activation_time,
        corrections: Vec::new(),
        references: refs,
        predicted,
    };

    let mut state = start;
    let mut blend: Option<Blend> = None;
    let mut corrected = false;
    // quiet-window bookkeeping for on-line steady-state detection
    let mut quiet: VecDeque<Sample> = VecDeque::new();
    let window_len = ((cfg.window / cfg.dt).round() as usize).max(1);

    let gravity_free = |t: f64, b: &Option<Blend>, r: &EquilibriumReferences| -> [Vec3; 2] {
        match b {
            Some(b) => [gains.stiffness[0] * b.at(t) + r.forces[0], r.forcing.w[1]],
            None => r.forcing.w,
        }
    };

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let phase = if k < lift_steps { Phase::Lift } else { Phase::Regulate };
        if k == lift_steps {
            let here = state.robot_position[0];
            blend = Some(Blend {
                from: here,
                to: refs.robot_reference[0],
                start: t,
                duration: cfg.shaping_duration,
            });
            traj.shaping_end = t + cfg.shaping_duration;
        }

        let shaping = phase == Phase::Regulate && blend.is_some_and(|b| t < b.end());
        let w_now = gravity_free(t, &blend, &refs);
        let sample = make_sample(t, phase, &state, truth, gains, cfg, &w_now, predicted.as_ref(), shaping);
        if k % cfg.record_every == 0 {
            traj.samples.push(sample);
        }

        // on-line correction trigger
        if phase == Phase::Regulate && !shaping && (!corrected || cfg.repeat_correction) {
            let fire = match cfg.correction {
                CorrectionEvent::None => None,
                CorrectionEvent::AtTime(tc) => {
                    if !corrected && t >= tc - 0.5 * cfg.dt {
                        Some(average_samples(&[sample]))
                    } else {
                        None
                    }
                }
                CorrectionEvent::OnSteadyState => {
                    if sample.state.max_speed() < cfg.velocity_eps {
                        quiet.push_back(sample);
                    } else {
                        quiet.clear();
                    }
                    if quiet.len() > window_len {
                        let samples: Vec<Sample> = quiet.iter().copied().collect();
                        quiet.clear();
                        Some(average_samples(&samples))
                    } else {
                        None
                    }
                }
            };
            if let Some(before) = fire {
                let error = before.load_position - cfg.task.position;
                let prev = blend.map(|b| b.to).unwrap_or(refs.robot_reference[0]);
                let new_reference = corrected_leader_reference(&prev, &error);
                refs = refs.with_leader_reference(new_reference, gains);
                predicted = predict(&refs);
                blend = Some(Blend {
                    from: prev,
                    to: new_reference,
                    start: t,
                    duration: cfg.shaping_duration,
                });
                traj.shaping_end = t + cfg.shaping_duration;
                traj.corrections.push(CorrectionRecord {
                    time: t,
                    before,
                    position_error: error,
                    new_reference,
                });
                corrected = true;
            }
        }

        if k == steps {
            break;
        }

        let result = if phase == Phase::Lift {
            let field = |tt: f64, x: &SystemState| {
                let (p, v) = lift_robot(tt);
                let mut s = *x;
                s.robot_position = p;
                let mut d = closed_loop_field(&s, gains, &refs.forcing.w, truth);
                d.robot_velocity = v;
                d.robot_acceleration = [Vec3::zeros(); 2];
                d
            };
            rk4_step(&field, t, &state, cfg.dt).map(|mut s| {
                let (p, v) = lift_robot(t + cfg.dt);
                s.robot_position = p;
                s.robot_velocity = v;
                s
            })
        } else {
            let field = |tt: f64, x: &SystemState| {
                let w = gravity_free(tt, &blend, &refs);
                let mut d = closed_loop_field(x, gains, &w, truth);
                clamp_accel(&mut d, cfg.accel_limit);
                d
            };
            rk4_step(&field, t, &state, cfg.dt)
        };
        match result {
            Ok(s) => state = s,
            Err(error) => {
                traj.references = refs;
                traj.predicted = predicted;
                return Err(ScenarioAbort { error, partial: traj });
            }
        }
    }
    traj.references = refs;
    traj.predicted = predicted;
    Ok(traj)
}

fn empty_trajectory(cfg: &ScenarioConfig) -> Trajectory {
    let zero = EquilibriumReferences {
        forces: [Vec3::zeros(); 2],
        robot_reference: [Vec3::zeros(); 2],
        forcing: crate::control::ForcingInput { w: [Vec3::zeros(); 2] },
        nominal: true,
    };
    Trajectory {
        samples: Vec::new(),
        dt: cfg.dt,
        record_every: cfg.record_every,
        activation_time: cfg.lift.duration,
        shaping_end: cfg.lift.duration,
        corrections: Vec::new(),
        references: zero,
        predicted: None,
    }
}

#[allow(clippy::too_many_arguments)]
fn make_sample(
    t: f64,
    phase: Phase,
    state: &SystemState,
    truth: &SystemParams,
    gains: &AdmittanceGains,
    cfg: &ScenarioConfig,
    w: &[Vec3; 2],
    predicted: Option<&EquilibriumSolution>,
    shaping: bool,
) -> Sample {
    let cables = cable_readings(state, truth);
    let forces = [cables[0].force, cables[1].force];
    let (yaw, pitch) = yaw_pitch(&state.pose.rotation);
    let lyapunov = match (phase, predicted) {
        (Phase::Regulate, Some(eq)) => lyapunov_value(state, eq, w, truth, gains),
        _ => f64::NAN,
    };
    Sample {
        time: t,
        phase,
        state: *state,
        yaw: wrap_angle(yaw),
        pitch,
        forces,
        internal_force: internal_force(&forces, &state.pose.rotation),
        lyapunov,
        attitude_error: attitude_error(&state.pose.rotation, &cfg.task.rotation()),
        position_error: (state.pose.position - cfg.task.position).norm(),
        shaping,
    }
}
