//! Parallel sweeps over internal force and single-family uncertainty.

use std::io::Write;

use rayon::prelude::*;

use crate::analysis::attitude_error;
use crate::equilibria::UncertainCase;
use crate::math::{wrap_angle, yaw_pitch_rotation};
use crate::model::{apply_relative_errors, AdmittanceGains, SystemParams};
use crate::sim::{average_samples, run_scenario, Sample, ScenarioConfig, SteadyState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub internal_forces: Vec<f64>,
    pub fractions: Vec<f64>,
    pub parameters: Vec<UncertainCase>,
    /// Template; the internal force is overwritten per cell
    pub scenario: ScenarioConfig,
    pub cap: usize,
}

impl SweepSpec {
    pub fn cell_count(&self) -> usize {
        self.internal_forces.len() * self.fractions.len() * self.parameters.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.internal_forces.is_empty() || self.fractions.is_empty() || self.parameters.is_empty() {
            return Err(Error::Config("sweep grids must be non-empty".to_string()));
        }
        if self.cell_count() > self.cap {
            return Err(Error::Config(format!(
                "sweep has {} cells, above the cap of {}",
                self.cell_count(),
                self.cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: UncertainCase,
    pub fraction: f64,
    pub internal_force: f64,
    pub converged: bool,
    /// Window-averaged steady values, or the final window if never steady
    pub yaw_error: f64,
    pub pitch_error: f64,
    pub attitude_error: f64,
    pub position_error: f64,
    /// Failure message for cells that could not run
    pub error: Option<String>,
}

fn final_window(samples: &[Sample], window: f64) -> Option<SteadyState> {
    let end = samples.last()?.time;
    let from = samples.partition_point(|s| s.time < end - window);
    Some(average_samples(&samples[from..]))
}

fn run_cell(
    spec: &SweepSpec,
    truth: &SystemParams,
    gains: &AdmittanceGains,
    parameter: UncertainCase,
    fraction: f64,
    internal_force: f64,
) -> SweepRow {
    let mut row = SweepRow {
        parameter,
        fraction,
        internal_force,
        converged: false,
        yaw_error: f64::NAN,
        pitch_error: f64::NAN,
        attitude_error: f64::NAN,
        position_error: f64::NAN,
        error: None,
    };
    let nominal = match apply_relative_errors(truth, &parameter.relative_errors(fraction)) {
        Ok((n, _)) => n,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let mut cfg = spec.scenario;
    cfg.task.internal_force = internal_force;
    let traj = match run_scenario(&cfg, truth, &nominal, gains) {
        Ok(t) => t,
        Err(abort) => {
            row.error = Some(abort.to_string());
            return row;
        }
    };
    let steady = traj.final_steady_state(cfg.velocity_eps, cfg.window);
    row.converged = steady.is_some();
    let Some(s) = steady.or_else(|| final_window(&traj.samples, cfg.window)) else {
        row.error = Some("no samples".to_string());
        return row;
    };
    row.yaw_error = wrap_angle(s.yaw - cfg.task.yaw);
    row.pitch_error = s.pitch - cfg.task.pitch;
    row.attitude_error = attitude_error(&yaw_pitch_rotation(s.yaw, s.pitch), &cfg.task.rotation());
    row.position_error = (s.load_position - cfg.task.position).norm();
    row
}

/// Runs every cell in parallel; rows come back sorted by parameter,
/// fraction and internal force. Failed cells carry their error message.
pub fn run_sweep(spec: &SweepSpec, truth: &SystemParams, gains: &AdmittanceGains) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(spec.cell_count());
    for &p in &spec.parameters {
        for &f in &spec.fractions {
            for &t in &spec.internal_forces {
                cells.push((p, f, t));
            }
        }
    }
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(p, f, t)| run_cell(spec, truth, gains, p, f, t))
        .collect();
    rows.sort_by(|a, b| {
        a.parameter
            .cmp(&b.parameter)
            .then(a.fraction.total_cmp(&b.fraction))
            .then(a.internal_force.total_cmp(&b.internal_force))
    });
    Ok(rows)
}

pub fn write_rows<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "parameter,fraction,tI,converged,yaw_error,pitch_error,eR,epL_norm,error"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{:.10e},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e},{}",
            r.parameter.name(),
            r.fraction,
            r.internal_force,
            r.converged,
            r.yaw_error,
            r.pitch_error,
            r.attitude_error,
            r.position_error,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        )?;
    }
    Ok(())
}

/// One line per (parameter, fraction): convergence count, worst errors, and
/// whether the pitch error magnitude decreases strictly with internal force.
pub fn write_summary<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "parameter,fraction,cells,converged,max_abs_yaw_error,max_abs_pitch_error,pitch_error_decreasing"
    )?;
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].parameter, rows[start].fraction);
        let end = start + rows[start..].iter().take_while(|r| (r.parameter, r.fraction) == key).count();
        let group = &rows[start..end];
        let converged = group.iter().filter(|r| r.converged).count();
        let max_yaw = group.iter().map(|r| r.yaw_error.abs()).fold(0.0, f64::max);
        let max_pitch = group.iter().map(|r| r.pitch_error.abs()).fold(0.0, f64::max);
        let decreasing = group
            .windows(2)
            .all(|w| w[1].pitch_error.abs() < w[0].pitch_error.abs());
        writeln!(
            out,
            "{},{:.10e},{},{},{:.10e},{:.10e},{}",
            key.0.name(),
            key.1,
            group.len(),
            converged,
            max_yaw,
            max_pitch,
            decreasing
        )?;
        start = end;
    }
    Ok(())
}
