//! Command-line front end: configuration, experiment commands and CSV output.

pub mod config;
pub mod sweep;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{classify_stability, sensitivities, stability_grid, StabilityVerdict};
use crate::control::{anchor_offset_reference, synthesize_forcing};
use crate::equilibria::direct_equilibrium;
use crate::model::SIGN_CONVENTION;
use crate::sim::run_scenario;
use crate::{Error, Result, Vec3};
use config::Config;
use sweep::{run_sweep, write_rows, write_summary, SweepSpec};

#[derive(Debug, Parser)]
#[command(name = "cable-beam", version, about = "Two-robot cable-suspended beam: simulation and analysis")]
pub struct Cli {
    /// Print the default configuration as TOML and exit
    #[arg(long)]
    pub dump_defaults: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML configuration; missing keys take their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed for perturbation sampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its trajectory
    Simulate(Common),
    /// Print references and the equilibria they produce
    Equilibrium(Common),
    /// Classify the stability of the configured equilibria
    Stability {
        #[command(flatten)]
        common: Common,
        /// Classify the 3 x 3 sign grid over internal force and xi instead
        #[arg(long)]
        grid: bool,
    },
    /// Attitude-error sensitivities at one or more internal forces
    Sensitivity {
        #[command(flatten)]
        common: Common,
        /// Comma-separated internal forces [N]; defaults to the task's
        #[arg(long = "tI", value_delimiter = ',')]
        internal_forces: Vec<f64>,
    },
    /// Sweep internal force against single-family uncertainty
    Sweep(Common),
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::InvalidFraction { .. } => 1,
        _ => 2,
    }
}

fn load_config(common: &Common) -> Result<Config> {
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_run_info(common: &Common, command: &str) -> Result<()> {
    let mut f = create(&common.out, "run_info.txt")?;
    writeln!(f, "command = {command}")?;
    writeln!(f, "seed = {}", common.seed)?;
    writeln!(f, "sign_convention = {SIGN_CONVENTION}")?;
    if let Some(c) = &common.config {
        writeln!(f, "config = {}", c.display())?;
    }
    f.flush()?;
    Ok(())
}

fn v3(v: &Vec3) -> String {
    format!("{:.10e},{:.10e},{:.10e}", v.x, v.y, v.z)
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn run(cli: Cli) -> i32 {
    if cli.dump_defaults {
        print!("{}", Config::default().to_toml());
        return 0;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return 1;
    };
    match execute(command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate(common) => simulate(&common),
        Command::Equilibrium(common) => equilibrium(&common),
        Command::Stability { common, grid } => stability(&common, grid),
        Command::Sensitivity {
            common,
            internal_forces,
        } => sensitivity(&common, &internal_forces),
        Command::Sweep(common) => sweep(&common),
    }
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let truth = cfg.system_params()?;
    let (nominal, _) = cfg.nominal(&truth)?;
    let gains = cfg.gains()?;
    let scenario = cfg.scenario()?;
    write_run_info(common, "simulate")?;
    let (traj, failure) = match run_scenario(&scenario, &truth, &nominal, &gains) {
        Ok(t) => (t, None),
        Err(abort) => (abort.partial, Some(abort.error)),
    };
    let mut f = create(&common.out, "trajectory.csv")?;
    traj.write_csv(&mut f)?;
    f.flush()?;

    let mut s = create(&common.out, "steady_state.csv")?;
    writeln!(s, "converged,time,pL_x,pL_y,pL_z,yaw,pitch,f1_x,f1_y,f1_z,corrections")?;
    match traj.final_steady_state(scenario.velocity_eps, scenario.window) {
        Some(st) => {
            writeln!(
                s,
                "true,{:.10e},{},{:.10e},{:.10e},{},{}",
                st.time,
                v3(&st.load_position),
                st.yaw,
                st.pitch,
                v3(&st.forces[0]),
                traj.corrections.len()
            )?;
            println!(
                "steady at t = {:.3} s: yaw {:.6} rad, pitch {:.6} rad, |e_pL| = {:.6} m",
                st.time,
                st.yaw,
                st.pitch,
                (st.load_position - scenario.task.position).norm()
            );
        }
        None => {
            writeln!(s, "false,,,,,,,,,,{}", traj.corrections.len())?;
            println!("no steady state detected");
        }
    }
    s.flush()?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn equilibrium(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let truth = cfg.system_params()?;
    let (nominal, _) = cfg.nominal(&truth)?;
    let gains = cfg.gains()?;
    let task = cfg.task()?;
    write_run_info(common, "equilibrium")?;
    let refs = synthesize_forcing(&task, &nominal, &gains)?;
    let offset = anchor_offset_reference(
        &refs.robot_reference[0],
        &refs.forces[0],
        nominal.params.robot_mass,
        nominal.params.gravity,
        nominal.params.anchor_offset,
    )?;
    println!("references (from {} parameters):", if refs.nominal { "nominal" } else { "true" });
    println!("  f1 = {:?}", refs.forces[0].as_slice());
    println!("  f2 = {:?}", refs.forces[1].as_slice());
    println!("  pR1_ref = {:?}", refs.robot_reference[0].as_slice());
    println!("  pR1_ref (anchor offset) = {:?}", offset.as_slice());
    println!("  w1 = {:?}", refs.forcing.w[0].as_slice());
    println!("  w2 = {:?}", refs.forcing.w[1].as_slice());

    let sols = direct_equilibrium(&task, &truth, &nominal, &gains)?;
    let mut f = create(&common.out, "equilibrium.csv")?;
    writeln!(
        f,
        "branch,xi,yaw,pitch,pL_x,pL_y,pL_z,pR1_x,pR1_y,pR1_z,pR2_x,pR2_y,pR2_z,f1_x,f1_y,f1_z,f2_x,f2_y,f2_z"
    )?;
    for s in &sols {
        writeln!(
            f,
            "{},{:.10e},{:.10e},{:.10e},{},{},{},{},{}",
            s.branch,
            s.xi,
            s.yaw,
            s.pitch,
            v3(&s.load_position),
            v3(&s.robot_position[0]),
            v3(&s.robot_position[1]),
            v3(&s.forces[0]),
            v3(&s.forces[1])
        )?;
        println!(
            "{}: yaw {:.6} rad, pitch {:.6} rad, pL = {:?}",
            s.branch,
            s.yaw,
            s.pitch,
            s.load_position.as_slice()
        );
        if let Some(c) = s.continuum {
            println!("  continuum: anchor 1 at {:?}, radius {}", c.center.as_slice(), c.radius);
        }
    }
    f.flush()?;
    Ok(())
}

fn verdict_line(t_i: f64, xi: f64, v: &Result<StabilityVerdict>) -> String {
    match v {
        Ok(v) => format!(
            "{:.10e},{:.10e},{},{},{:.10e},",
            t_i, xi, v.branch, v.verdict, v.evidence.max_real
        ),
        Err(e) => format!("{t_i:.10e},{xi:.10e},,,,{}", e.to_string().replace(',', ";")),
    }
}

fn stability(common: &Common, grid: bool) -> Result<()> {
    let cfg = load_config(common)?;
    let truth = cfg.system_params()?;
    let gains = cfg.gains()?;
    let task = cfg.task()?;
    write_run_info(common, "stability")?;
    let mut f = create(&common.out, "stability.csv")?;
    writeln!(f, "tI,xi,branch,verdict,max_real,error")?;
    let mut failed = None;
    let mut emit = |t_i: f64, xi: f64, v: &Result<StabilityVerdict>, f: &mut BufWriter<File>| -> Result<()> {
        writeln!(f, "{}", verdict_line(t_i, xi, v))?;
        match v {
            Ok(v) => println!(
                "tI = {t_i:+.3}  xi = {xi:+.5}  {:<15} {:<22} max Re = {:+.3e}",
                v.branch.name(),
                v.verdict.name(),
                v.evidence.max_real
            ),
            Err(e) => {
                println!("tI = {t_i:+.3}  xi = {xi:+.5}  error: {e}");
                failed.get_or_insert(e.clone());
            }
        }
        Ok(())
    };
    if grid {
        for cell in stability_grid(&task, &truth, &gains, common.seed)? {
            for v in &cell.verdicts {
                emit(cell.internal_force, cell.xi, v, &mut f)?;
            }
        }
    } else {
        let (nominal, _) = cfg.nominal(&truth)?;
        let xi = crate::equilibria::compute_xi(&truth, &nominal);
        for eq in direct_equilibrium(&task, &truth, &nominal, &gains)? {
            let v = classify_stability(&eq, &truth, &nominal, &gains, &task, common.seed);
            emit(task.internal_force, xi, &v, &mut f)?;
        }
    }
    f.flush()?;
    match failed {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn sensitivity(common: &Common, internal_forces: &[f64]) -> Result<()> {
    let cfg = load_config(common)?;
    let truth = cfg.system_params()?;
    let (nominal, _) = cfg.nominal(&truth)?;
    let task = cfg.task()?;
    write_run_info(common, "sensitivity")?;
    let list = if internal_forces.is_empty() {
        vec![task.internal_force]
    } else {
        internal_forces.to_vec()
    };
    let mut f = create(&common.out, "sensitivity.csv")?;
    writeln!(
        f,
        "tI,eR,pitch,alpha,method,d_mass,d_com,d_inv_length,d_k1,d_k2,d_l01,d_l02"
    )?;
    let mut reports = Vec::new();
    for t_i in list {
        let r = sensitivities(&task.with_internal_force(t_i), &truth, &nominal)?;
        for (method, e) in [("closed_form", &r.closed_form), ("finite_diff", &r.finite_diff)] {
            writeln!(
                f,
                "{:.10e},{:.10e},{:.10e},{:.10e},{method},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                t_i,
                r.attitude_error,
                r.pitch,
                r.alpha,
                e.mass,
                e.com,
                e.inv_length,
                e.stiffness[0],
                e.stiffness[1],
                e.rest_length[0],
                e.rest_length[1]
            )?;
        }
        println!(
            "tI = {t_i}: eR = {:.6e}, de/dm = {:.6e} (closed form {:.6e})",
            r.attitude_error, r.finite_diff.mass, r.closed_form.mass
        );
        reports.push(r);
    }
    for pair in reports.windows(2) {
        println!(
            "ratio de/dm at tI = {} vs {}: {:.4}",
            pair[0].internal_force,
            pair[1].internal_force,
            pair[0].finite_diff.mass / pair[1].finite_diff.mass
        );
    }
    f.flush()?;
    Ok(())
}

fn sweep(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let truth = cfg.system_params()?;
    let gains = cfg.gains()?;
    let mut scenario = cfg.scenario()?;
    scenario.record_every = cfg.sweep.record_every.max(1);
    let spec = SweepSpec {
        internal_forces: cfg.sweep.internal_forces.clone(),
        fractions: cfg.sweep.fractions.clone(),
        parameters: cfg.sweep_parameters()?,
        scenario,
        cap: cfg.sweep.cap,
    };
    spec.validate()?;
    write_run_info(common, "sweep")?;
    let rows = run_sweep(&spec, &truth, &gains)?;
    let mut f = create(&common.out, "sweep.csv")?;
    write_rows(&rows, &mut f)?;
    f.flush()?;
    let mut s = create(&common.out, "summary.csv")?;
    write_summary(&rows, &mut s)?;
    s.flush()?;
    println!("{} cells written to {}", rows.len(), common.out.display());
    Ok(())
}
