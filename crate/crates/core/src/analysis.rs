//! Error metrics, attitude-error sensitivities, the Lyapunov function of the
//! closed loop, and numerical stability classification of equilibria.
//!
//! The Lyapunov function is the closed loop's storage function
//!
//! `H = sum_i ½ v_Ri' M_A v_Ri + ½ p_R1' K_A1 p_R1 - w_i' p_Ri + U_i(delta_i)
//!      + ½ mL |v_L|² + ½ w' J w + mL g z_L`
//!
//! shifted so that it vanishes at a chosen equilibrium. For constant `w` its
//! derivative is exactly `-sum_i v_Ri' B_A v_Ri`. Expanding the `w` terms with
//! the equilibrium forces turns it into the quadratic-plus-cable form with the
//! attitude term `-(xi g e3 + L t_I R_des e1)' R e1`, so the two agree up to a
//! constant on every branch.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::synthesize_forcing;
use crate::dynamics::{
    anchor_position, cable_potential, closed_loop_field, LoadPose, LoadTwist, SystemState,
};
use crate::equilibria::{
    compute_xi, direct_equilibrium, EquilibriumBranch, EquilibriumSolution, XI_EPS,
};
use crate::math::{e1, so3_exp};
use crate::model::{AdmittanceGains, DesiredTask, NominalParams, SystemParams};
use crate::{Error, Mat3, Result, Vec3};

/// `|R e1 x R_des e1|²`, the squared sine of the angle between the beam axes.
pub fn attitude_error(rotation: &Mat3, desired: &Mat3) -> f64 {
    (rotation * e1()).cross(&(desired * e1())).norm_squared()
}

/// `p_L,eq - p_des`.
pub fn position_error(load_position: &Vec3, desired: &Vec3) -> Vec3 {
    load_position - desired
}

/// Attitude-error derivatives with respect to each uncertainty delta.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensitivityEntries {
    pub mass: f64,
    pub com: f64,
    pub stiffness: [f64; 2],
    pub rest_length: [f64; 2],
    pub inv_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub internal_force: f64,
    /// Attitude error of the stable isolated equilibrium
    pub attitude_error: f64,
    pub pitch: f64,
    /// Printed closed form, evaluated with the equilibrium pitch
    pub closed_form: SensitivityEntries,
    /// Central differences of the equilibrium attitude error
    pub finite_diff: SensitivityEntries,
    pub alpha: f64,
}

/// Attitude error of the `Q+` equilibrium for the given nominal parameters.
fn equilibrium_attitude_error(
    task: &DesiredTask,
    truth: &SystemParams,
    nominal: &NominalParams,
) -> Result<(f64, f64)> {
    let gains = AdmittanceGains::default();
    let s = direct_equilibrium(task, truth, nominal, &gains)?[0];
    Ok((attitude_error(&s.rotation, &task.rotation()), s.pitch))
}

/// Sensitivities of the equilibrium attitude error.
///
/// Finite differences move one nominal value by `h = 1e-6` of its scale with
/// the truth held fixed; since every delta is `true - nominal`, the
/// derivative with respect to the delta is minus the one with respect to the
/// nominal value.
pub fn sensitivities(
    task: &DesiredTask,
    truth: &SystemParams,
    nominal: &NominalParams,
) -> Result<SensitivityReport> {
    let t_i = task.internal_force;
    if t_i.abs() < crate::equilibria::INTERNAL_FORCE_EPS {
        return Err(Error::DegenerateInternalForce);
    }
    let (e, pitch) = equilibrium_attitude_error(task, truth, nominal)?;

    let derivative = |scale: f64, set: &dyn Fn(&mut SystemParams, f64)| -> Result<f64> {
        let h = 1e-6 * scale;
        let mut plus = nominal.params;
        let mut minus = nominal.params;
        set(&mut plus, h);
        set(&mut minus, -h);
        let ep = equilibrium_attitude_error(task, truth, &NominalParams { params: plus })?.0;
        let em = equilibrium_attitude_error(task, truth, &NominalParams { params: minus })?.0;
        // d e / d delta = - d e / d nominal
        Ok(-(ep - em) / (2.0 * h))
    };

    let n = nominal.params;
    let length = n.length();
    let finite_diff = SensitivityEntries {
        mass: derivative(truth.load_mass, &|p, h| p.load_mass += h)?,
        // b1^ moves with L^ fixed
        com: derivative(truth.b1, &|p, h| {
            p.b1 += h;
            p.b2 -= h;
        })?,
        stiffness: [
            derivative(truth.cables[0].stiffness, &|p, h| p.cables[0].stiffness += h)?,
            derivative(truth.cables[1].stiffness, &|p, h| p.cables[1].stiffness += h)?,
        ],
        rest_length: [
            derivative(truth.cables[0].rest_length, &|p, h| p.cables[0].rest_length += h)?,
            derivative(truth.cables[1].rest_length, &|p, h| p.cables[1].rest_length += h)?,
        ],
        // 1/L^ moves with b1^ fixed
        inv_length: derivative(1.0 / truth.length(), &move |p, h| {
            let l = 1.0 / (1.0 / length + h);
            p.b2 = l - p.b1;
        })?,
    };

    let g = truth.gravity;
    let big_l = truth.length();
    let ell_hat = 1.0 / length;
    let alpha = n.b1 * n.load_mass * ell_hat - truth.load_mass * truth.b1;
    let common = -2.0 * g * g * alpha * pitch.cos().powi(2) / (t_i * t_i * big_l * big_l);
    let closed_form = SensitivityEntries {
        mass: n.b1 * ell_hat * common,
        com: n.load_mass * ell_hat * common,
        stiffness: [0.0; 2],
        rest_length: [0.0; 2],
        inv_length: n.b1 * n.load_mass * common,
    };
    Ok(SensitivityReport {
        internal_force: t_i,
        attitude_error: e,
        pitch,
        closed_form,
        finite_diff,
        alpha,
    })
}

/// Storage function `H` of the closed loop under forcing input `w`.
pub fn storage(
    state: &SystemState,
    w: &[Vec3; 2],
    params: &SystemParams,
    gains: &AdmittanceGains,
) -> f64 {
    let mut h = 0.0;
    for i in 0..2 {
        let p = &state.robot_position[i];
        let v = &state.robot_velocity[i];
        h += 0.5 * v.dot(&(gains.inertia[i] * v));
        h += 0.5 * p.dot(&(gains.stiffness[i] * p));
        h -= w[i].dot(p);
        let delta = p - anchor_position(&state.pose, i, params);
        h += cable_potential(&params.cables[i], &delta);
    }
    let om = &state.twist.angular;
    h += 0.5 * params.load_mass * state.twist.linear.norm_squared();
    h += 0.5 * om.dot(&(params.load_inertia * om));
    h += params.load_mass * params.gravity * state.pose.position.z;
    h
}

/// Lyapunov function shifted to vanish at `eq`.
pub fn lyapunov_value(
    state: &SystemState,
    eq: &EquilibriumSolution,
    w: &[Vec3; 2],
    params: &SystemParams,
    gains: &AdmittanceGains,
) -> f64 {
    storage(state, w, params, gains) - storage(&eq.state(), w, params, gains)
}

/// `-sum_i v_Ri' B_A,i v_Ri`.
pub fn lyapunov_rate(state: &SystemState, gains: &AdmittanceGains) -> f64 {
    -(0..2)
        .map(|i| {
            let v = &state.robot_velocity[i];
            v.dot(&(gains.damping[i] * v))
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    AsymptoticallyStable,
    Unstable,
    MarginallyStable,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AsymptoticallyStable => "asymptotically_stable",
            Self::Unstable => "unstable",
            Self::MarginallyStable => "marginally_stable",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Verdict the theory predicts for a branch.
pub fn expected_verdict(branch: EquilibriumBranch, xi: f64) -> Verdict {
    let xi = if xi.abs() < XI_EPS { 0.0 } else { xi };
    match branch {
        EquilibriumBranch::IsolatedPlus => Verdict::AsymptoticallyStable,
        EquilibriumBranch::IsolatedMinus => Verdict::Unstable,
        EquilibriumBranch::VerticalLeaderUp if xi > 0.0 => Verdict::AsymptoticallyStable,
        EquilibriumBranch::VerticalLeaderDown if xi < 0.0 => Verdict::AsymptoticallyStable,
        EquilibriumBranch::VerticalLeaderUp | EquilibriumBranch::VerticalLeaderDown => {
            Verdict::Unstable
        }
        EquilibriumBranch::Continuum => Verdict::MarginallyStable,
    }
}

/// Outcome of sampling the Lyapunov function around an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCheck {
    pub samples: usize,
    pub negative: usize,
    pub min_value: f64,
}

/// Outcome of integrating from a small perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub initial_distance: f64,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityEvidence {
    /// Eigenvalues of the reduced Jacobian, beam roll removed
    pub spectrum: Vec<Complex<f64>>,
    pub max_real: f64,
    pub lyapunov: Option<LyapunovCheck>,
    pub probe: Option<ProbeResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub branch: EquilibriumBranch,
    pub verdict: Verdict,
    pub evidence: StabilityEvidence,
}

/// Spectral margin separating stable and unstable verdicts.
pub const SPECTRAL_EPS: f64 = 1e-6;
/// Eigenvalues smaller than this are reported as numerical zeros.
pub const ZERO_EIGENVALUE_EPS: f64 = 1e-8;

const CHART_DIM: usize = 24;
/// Beam roll angle and rate in the chart; a decoupled neutral pair.
const ROLL_INDICES: [usize; 2] = [9, 21];

/// State at chart coordinates `z` around `eq`: positions and velocities are
/// offsets, the attitude is `R_eq exp([eta]x)`.
///
/// Layout: `p_R1, p_R2, p_L, eta, v_R1, v_R2, v_L, omega`.
pub fn chart_state(eq: &SystemState, z: &[f64]) -> SystemState {
    let v = |k: usize| Vec3::new(z[k], z[k + 1], z[k + 2]);
    SystemState {
        robot_position: [eq.robot_position[0] + v(0), eq.robot_position[1] + v(3)],
        robot_velocity: [eq.robot_velocity[0] + v(12), eq.robot_velocity[1] + v(15)],
        pose: LoadPose {
            position: eq.pose.position + v(6),
            rotation: eq.pose.rotation * so3_exp(&v(9)),
        },
        twist: LoadTwist {
            linear: eq.twist.linear + v(18),
            angular: eq.twist.angular + v(21),
        },
    }
}

fn chart_field(
    eq: &SystemState,
    z: &[f64],
    w: &[Vec3; 2],
    params: &SystemParams,
    gains: &AdmittanceGains,
) -> [f64; CHART_DIM] {
    let s = chart_state(eq, z);
    let d = closed_loop_field(&s, gains, w, params);
    let mut out = [0.0; CHART_DIM];
    let blocks = [
        d.robot_velocity[0],
        d.robot_velocity[1],
        d.load_velocity,
        // exact at eta = 0, which is all the linearisation needs
        s.twist.angular,
        d.robot_acceleration[0],
        d.robot_acceleration[1],
        d.load_acceleration,
        d.angular_acceleration,
    ];
    for (b, v) in blocks.iter().enumerate() {
        out[3 * b..3 * b + 3].copy_from_slice(v.as_slice());
    }
    out
}

/// Central-difference Jacobian of the closed loop in chart coordinates with
/// the beam-roll pair removed (22 x 22).
pub fn reduced_jacobian(
    eq: &EquilibriumSolution,
    w: &[Vec3; 2],
    params: &SystemParams,
    gains: &AdmittanceGains,
) -> DMatrix<f64> {
    let base = eq.state();
    let keep: Vec<usize> = (0..CHART_DIM).filter(|k| !ROLL_INDICES.contains(k)).collect();
    let n = keep.len();
    let h = 1e-6;
    let mut jac = DMatrix::zeros(n, n);
    for (col, &k) in keep.iter().enumerate() {
        let mut zp = [0.0; CHART_DIM];
        let mut zm = [0.0; CHART_DIM];
        zp[k] = h;
        zm[k] = -h;
        let fp = chart_field(&base, &zp, w, params, gains);
        let fm = chart_field(&base, &zm, w, params, gains);
        for (row, &r) in keep.iter().enumerate() {
            jac[(row, col)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Largest real part among eigenvalues that are not numerical zeros.
fn max_real_part(spectrum: &[Complex<f64>]) -> f64 {
    spectrum
        .iter()
        .filter(|l| l.norm() >= ZERO_EIGENVALUE_EPS)
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Samples the Lyapunov function on random zero-velocity perturbations.
fn sample_lyapunov(
    eq: &EquilibriumSolution,
    w: &[Vec3; 2],
    params: &SystemParams,
    gains: &AdmittanceGains,
    seed: u64,
) -> LyapunovCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = eq.state();
    let samples = 512;
    let mut negative = 0;
    let mut min_value = f64::INFINITY;
    for _ in 0..samples {
        let mut z = [0.0; CHART_DIM];
        for v in z.iter_mut().take(12) {
            *v = 1e-3 * rng.random_range(-1.0..1.0);
        }
        let value = lyapunov_value(&chart_state(&base, &z), eq, w, params, gains);
        if value < -1e-12 {
            negative += 1;
        }
        min_value = min_value.min(value);
    }
    LyapunovCheck {
        samples,
        negative,
        min_value,
    }
}

fn chart_distance(a: &SystemState, b: &SystemState) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..2 {
        d = d.max((a.robot_position[i] - b.robot_position[i]).norm());
        d = d.max((a.robot_velocity[i] - b.robot_velocity[i]).norm());
    }
    d.max((a.pose.position - b.pose.position).norm())
        .max((a.pose.axis() - b.pose.axis()).norm())
        .max((a.twist.linear - b.twist.linear).norm())
}

/// Integrates from a small perturbation and compares distances to `eq`.
fn probe(
    eq: &EquilibriumSolution,
    w: &[Vec3; 2],
    params: &SystemParams,
    gains: &AdmittanceGains,
    seed: u64,
) -> Result<ProbeResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let base = eq.state();
    let mut z = [0.0; CHART_DIM];
    for (k, v) in z.iter_mut().enumerate().take(12) {
        if k != ROLL_INDICES[0] {
            *v = 1e-3 * rng.random_range(-1.0..1.0);
        }
    }
    let mut s = chart_state(&base, &z);
    let initial_distance = chart_distance(&s, &base);
    let dt = 2e-3;
    let steps = 30_000;
    let field = |_t: f64, x: &SystemState| closed_loop_field(x, gains, w, params);
    for k in 0..steps {
        s = crate::sim::rk4_step(&field, k as f64 * dt, &s, dt)?;
    }
    Ok(ProbeResult {
        initial_distance,
        final_distance: chart_distance(&s, &base),
    })
}

/// Classifies the stability of an equilibrium under the nominal forcing input.
///
/// The reduced Jacobian spectrum decides when its largest real part is
/// clear of `SPECTRAL_EPS`. Otherwise Lyapunov sampling and a trajectory probe
/// decide. The result must agree with [`expected_verdict`].
pub fn classify_stability(
    eq: &EquilibriumSolution,
    truth: &SystemParams,
    nominal: &NominalParams,
    gains: &AdmittanceGains,
    task: &DesiredTask,
    seed: u64,
) -> Result<StabilityVerdict> {
    let xi = compute_xi(truth, nominal);
    let expected = expected_verdict(eq.branch, xi);
    let refs = synthesize_forcing(task, nominal, gains)?;
    let w = refs.forcing.w;
    let jac = reduced_jacobian(eq, &w, truth, gains);
    let spectrum: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
    let max_real = max_real_part(&spectrum);
    let mut evidence = StabilityEvidence {
        spectrum,
        max_real,
        lyapunov: None,
        probe: None,
    };

    let verdict = if eq.branch == EquilibriumBranch::Continuum {
        Verdict::MarginallyStable
    } else if max_real < -SPECTRAL_EPS {
        Verdict::AsymptoticallyStable
    } else if max_real > SPECTRAL_EPS {
        Verdict::Unstable
    } else {
        let check = sample_lyapunov(eq, &w, truth, gains, seed);
        let pr = probe(eq, &w, truth, gains, seed)?;
        evidence.lyapunov = Some(check);
        evidence.probe = Some(pr);
        if check.negative > 0 && pr.final_distance > pr.initial_distance {
            Verdict::Unstable
        } else if check.negative == 0 && pr.final_distance < 0.1 * pr.initial_distance {
            Verdict::AsymptoticallyStable
        } else {
            Verdict::MarginallyStable
        }
    };

    if verdict != expected {
        return Err(Error::StabilityDiscrepancy {
            branch: eq.branch.name().to_string(),
            expected: expected.name().to_string(),
            found: verdict.name().to_string(),
        });
    }
    Ok(StabilityVerdict {
        branch: eq.branch,
        verdict,
        evidence,
    })
}

/// One cell of the sign grid over internal force and `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub internal_force: f64,
    pub xi: f64,
    pub verdicts: Vec<Result<StabilityVerdict>>,
}

/// Classifies every branch over `t_I in {-1, 0, 1}` and
/// `xi in {-0.0125, 0, 0.0125}`, the latter produced by `-5%, 0, +5%` mass errors.
pub fn stability_grid(
    task: &DesiredTask,
    truth: &SystemParams,
    gains: &AdmittanceGains,
    seed: u64,
) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    for t_i in [-1.0, 0.0, 1.0] {
        for mass_fraction in [-0.05, 0.0, 0.05] {
            let rel = crate::model::RelativeErrors {
                mass: mass_fraction,
                ..Default::default()
            };
            let (nominal, _) = crate::model::apply_relative_errors(truth, &rel)?;
            let t = task.with_internal_force(t_i);
            let xi = compute_xi(truth, &nominal);
            let verdicts = direct_equilibrium(&t, truth, &nominal, gains)?
                .iter()
                .map(|eq| classify_stability(eq, truth, &nominal, gains, &t, seed))
                .collect();
            cells.push(GridCell {
                internal_force: t_i,
                xi,
                verdicts,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{rot_y, rot_z, yaw_pitch_rotation};
    use crate::model::{apply_relative_errors, RelativeErrors};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn setup(rel: RelativeErrors, t_i: f64) -> (DesiredTask, SystemParams, NominalParams, AdmittanceGains) {
        let p = SystemParams::default();
        let (n, _) = apply_relative_errors(&p, &rel).unwrap();
        (DesiredTask::default().with_internal_force(t_i), p, n, AdmittanceGains::default())
    }

    fn mass(f: f64) -> RelativeErrors {
        RelativeErrors { mass: f, ..Default::default() }
    }

    #[test]
    fn attitude_error_values() {
        let r = yaw_pitch_rotation(0.3, -0.2);
        assert_eq!(attitude_error(&r, &r), 0.0);
        assert_relative_eq!(attitude_error(&rot_z(PI / 2.0), &Mat3::identity()), 1.0, epsilon = 1e-15);
        assert_relative_eq!(attitude_error(&rot_y(PI / 6.0), &Mat3::identity()), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn position_error_is_difference() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(position_error(&a, &a), Vec3::zeros());
    }

    #[test]
    fn rate_values() {
        let mut g = AdmittanceGains::default();
        g.damping[0] = 2.0 * Mat3::identity();
        let mut s = SystemState::at_rest([Vec3::zeros(); 2], LoadPose { position: Vec3::zeros(), rotation: Mat3::identity() });
        assert_eq!(lyapunov_rate(&s, &g), 0.0);
        s.robot_velocity[0] = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(lyapunov_rate(&s, &g), -2.0);
    }

    #[test]
    fn value_vanishes_at_equilibrium_and_grows_with_leader_offset() {
        let (t, p, n, g) = setup(mass(0.05), 1.0);
        let refs = synthesize_forcing(&t, &n, &g).unwrap();
        let eq = direct_equilibrium(&t, &p, &n, &g).unwrap()[0];
        let w = refs.forcing.w;
        assert!(lyapunov_value(&eq.state(), &eq, &w, &p, &g).abs() < 1e-12);
        let dp = Vec3::new(1e-4, -2e-4, 1.5e-4);
        let mut s = eq.state();
        s.robot_position[0] += dp;
        // hand expansion: spring term plus second-order cable terms
        let delta0 = eq.robot_position[0] - anchor_position(&eq.state().pose, 0, &p);
        let k = p.cables[0].stiffness;
        let l = delta0.norm();
        let u = delta0 / l;
        let stretch = l - p.cables[0].rest_length;
        let hessian = k * (u * u.transpose()) + (k * stretch / l) * (Mat3::identity() - u * u.transpose());
        let expected = 0.5 * dp.dot(&(g.stiffness[0] * dp)) + 0.5 * dp.dot(&(hessian * dp));
        let value = lyapunov_value(&s, &eq, &w, &p, &g);
        assert!(value > 0.0);
        assert_relative_eq!(value, expected, max_relative = 1e-3);
    }

    /// Rotation of the load about anchor 1 in the plane spanned by the beam
    /// axis and the vertical, with the follower carried along so that neither
    /// cable changes. Only the attitude term of the Lyapunov function moves,
    /// by about `-½ eps² u' R e1`.
    fn rotate_about_anchor_one(eq: &EquilibriumSolution, p: &SystemParams, angle: f64) -> SystemState {
        let s = eq.state();
        let anchor = anchor_position(&s.pose, 0, p);
        let axis = eq.axis().cross(&Vec3::z());
        let axis = if axis.norm() > 1e-9 { axis.normalize() } else { Vec3::y() };
        let rot = so3_exp(&(angle * axis));
        let mut out = s;
        out.pose.rotation = rot * s.pose.rotation;
        out.pose.position = anchor + rot * (s.pose.position - anchor);
        let anchor2 = anchor_position(&s.pose, 1, p);
        out.robot_position[1] = s.robot_position[1] + anchor_position(&out.pose, 1, p) - anchor2;
        out
    }

    #[test]
    fn chetaev_direction_on_unstable_branches() {
        for (rel, t_i) in [(mass(0.05), 1.0), (mass(-0.05), 1.0), (mass(0.05), -1.0), (mass(0.05), 0.0), (mass(-0.05), 0.0)] {
            let (t, p, n, g) = setup(rel, t_i);
            let refs = synthesize_forcing(&t, &n, &g).unwrap();
            let sols = direct_equilibrium(&t, &p, &n, &g).unwrap();
            let xi = compute_xi(&p, &n);
            for eq in &sols {
                let unstable = expected_verdict(eq.branch, xi) == Verdict::Unstable;
                let min = [-1e-3, 1e-3]
                    .iter()
                    .map(|a| lyapunov_value(&rotate_about_anchor_one(eq, &p, *a), eq, &refs.forcing.w, &p, &g))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(min < 0.0, unstable, "{:?} t_I={t_i} xi={xi} min={min}", eq.branch);
            }
        }
    }

    #[test]
    fn stable_branches_are_local_minima() {
        let (t, p, n, g) = setup(mass(0.05), 1.0);
        let refs = synthesize_forcing(&t, &n, &g).unwrap();
        let eq = direct_equilibrium(&t, &p, &n, &g).unwrap()[0];
        let check = sample_lyapunov(&eq, &refs.forcing.w, &p, &g, 7);
        assert_eq!(check.negative, 0);
    }

    #[test]
    fn flow_derivative_matches_rate() {
        // d/dt of the storage function along the field, by chain rule through a
        // small step, equals the damping dissipation
        let (t, p, n, g) = setup(mass(0.05), 1.0);
        let refs = synthesize_forcing(&t, &n, &g).unwrap();
        let w = refs.forcing.w;
        let eq = direct_equilibrium(&t, &p, &n, &g).unwrap()[0];
        let mut s = eq.state();
        s.robot_velocity = [Vec3::new(0.1, -0.2, 0.05), Vec3::new(-0.05, 0.1, 0.2)];
        s.twist.linear = Vec3::new(0.02, 0.01, -0.03);
        s.twist.angular = Vec3::new(0.0, 0.3, -0.1);
        s.robot_position[1] += Vec3::new(0.01, 0.0, -0.02);
        let d = closed_loop_field(&s, &g, &w, &p);
        let h = 1e-6;
        let mut sp = s.advanced(&d, h);
        let mut sm = s.advanced(&d, -h);
        sp.pose.rotation = s.pose.rotation * so3_exp(&(h * s.twist.angular));
        sm.pose.rotation = s.pose.rotation * so3_exp(&(-h * s.twist.angular));
        let numeric = (storage(&sp, &w, &p, &g) - storage(&sm, &w, &p, &g)) / (2.0 * h);
        assert_relative_eq!(numeric, lyapunov_rate(&s, &g), max_relative = 1e-6);
    }

    #[test]
    fn expected_table() {
        use EquilibriumBranch::*;
        assert_eq!(expected_verdict(IsolatedPlus, -0.1), Verdict::AsymptoticallyStable);
        assert_eq!(expected_verdict(IsolatedMinus, 0.1), Verdict::Unstable);
        assert_eq!(expected_verdict(VerticalLeaderUp, 0.0125), Verdict::AsymptoticallyStable);
        assert_eq!(expected_verdict(VerticalLeaderDown, 0.0125), Verdict::Unstable);
        assert_eq!(expected_verdict(VerticalLeaderDown, -0.0125), Verdict::AsymptoticallyStable);
        assert_eq!(expected_verdict(Continuum, 0.0), Verdict::MarginallyStable);
    }

    #[test]
    fn classify_isolated_branches() {
        let (t, p, n, g) = setup(mass(0.05), 1.0);
        let sols = direct_equilibrium(&t, &p, &n, &g).unwrap();
        let plus = classify_stability(&sols[0], &p, &n, &g, &t, 1).unwrap();
        assert_eq!(plus.verdict, Verdict::AsymptoticallyStable);
        assert_eq!(plus.evidence.spectrum.len(), 22);
        assert!(plus.evidence.max_real < -SPECTRAL_EPS);
        let minus = classify_stability(&sols[1], &p, &n, &g, &t, 1).unwrap();
        assert_eq!(minus.verdict, Verdict::Unstable);
    }

    #[test]
    fn zero_uncertainty_sensitivities() {
        let (t, p, n, _) = setup(RelativeErrors::default(), 1.0);
        let r = sensitivities(&t, &p, &n).unwrap();
        assert!(r.attitude_error < 1e-20);
        assert!(r.finite_diff.mass.abs() < 1e-9);
        assert_eq!(r.alpha, 0.0);
    }

    #[test]
    fn sensitivity_rejects_zero_internal_force() {
        let (t, p, n, _) = setup(mass(0.05), 0.0);
        assert_eq!(sensitivities(&t, &p, &n), Err(Error::DegenerateInternalForce));
    }

    #[test]
    fn sensitivity_scaling_and_signs() {
        let (t, p, n, _) = setup(mass(0.01), 1.0);
        let a = sensitivities(&t, &p, &n).unwrap();
        let b = sensitivities(&t.with_internal_force(2.0), &p, &n).unwrap();
        let ratio = a.finite_diff.mass / b.finite_diff.mass;
        // frozen from an independent evaluation of the equilibrium pitch
        assert_relative_eq!(ratio, 3.959, epsilon = 2e-3);
        for r in [&a, &b] {
            assert!(r.finite_diff.mass > 0.0 && r.closed_form.mass > 0.0);
            assert!(r.finite_diff.com > 0.0 && r.closed_form.com > 0.0);
            assert_eq!(r.finite_diff.stiffness, [0.0; 2]);
            assert_eq!(r.finite_diff.rest_length, [0.0; 2]);
        }
        let cf = a.closed_form.mass / b.closed_form.mass;
        assert!((cf - 4.0).abs() < 0.2 * 4.0, "{cf}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn cable_sensitivities_vanish(
            fm in -0.1f64..0.1, fb in -0.1f64..0.1, fl in -0.1f64..0.1,
            fk in -0.2f64..0.2, fr in -0.2f64..0.2, t_i in 0.3f64..2.0,
        ) {
            let (t, p, n, _) = setup(RelativeErrors {
                mass: fm, com: fb, length: fl, stiffness: [fk, fk], rest_length: [fr, -fr],
            }, t_i);
            let r = sensitivities(&t, &p, &n).unwrap();
            for v in r.finite_diff.stiffness.iter().chain(r.finite_diff.rest_length.iter()) {
                prop_assert!(v.abs() < 1e-9);
            }
        }

        #[test]
        fn rate_never_positive(
            a in prop::array::uniform3(-5.0f64..5.0), b in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let g = AdmittanceGains::default();
            let mut s = SystemState::at_rest([Vec3::zeros(); 2], LoadPose { position: Vec3::zeros(), rotation: Mat3::identity() });
            s.robot_velocity = [Vec3::from(a), Vec3::from(b)];
            prop_assert!(lyapunov_rate(&s, &g) <= 0.0);
        }
    }
}
