use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use tubeswarm::controller::ControlMode;
use tubeswarm::output;
use tubeswarm::scenario::{load_scenario_with, load_tube, Overrides, RunMode, Scenario};
use tubeswarm::sim::{run, SimulationLog, Termination};

#[derive(Parser)]
#[command(name = "tubeswarm", version, about = "Swarm navigation through virtual tubes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Baseline,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trace, metrics, summary and plots.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_name = "S")]
        dt: Option<f64>,
        #[arg(long = "t-end", value_name = "S")]
        t_end: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run the full and baseline controllers from the same initial state.
    Compare {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report regularity, area, flow capacity and narrow intervals of a tube.
    CheckTube { scenario: PathBuf },
    /// Re-render plots from a trace file.
    Plot {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(explicit: Option<PathBuf>, scenario: &Scenario, scenario_path: &Path) -> PathBuf {
    explicit
        .or_else(|| scenario.resolved.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| {
            let stem = scenario_path.file_stem().unwrap_or_default().to_string_lossy();
            PathBuf::from("out").join(stem.as_ref())
        })
}

fn simulate(scenario: &Scenario, mode: ControlMode) -> Result<SimulationLog> {
    run(&scenario.sim_config(mode), scenario.initial_state()).context("simulation rejected")
}

fn report(label: &str, log: &SimulationLog) {
    let m = log.final_record().metrics;
    eprintln!(
        "{label}: {} after {} steps (t = {}), exited {}, min pair {}, min boundary {}",
        log.termination.as_str(),
        log.step_count,
        m.time,
        m.exited_count,
        fmt_opt(log.metrics().filter_map(|m| m.min_pairwise_distance).reduce(f64::min)),
        fmt_opt(log.metrics().filter_map(|m| m.min_boundary_distance).reduce(f64::min)),
    );
    if let Some(f) = &log.fault {
        eprintln!("{label}: fault at t = {}: {}", f.time, f.message);
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn check_tube(path: &Path) -> Result<()> {
    let (file, tube) = load_tube(path)?;
    let r_s = file.controller.r_s_m;
    let report = tube.check_regularity();
    println!("length: {:.6} m", tube.length());
    println!("topology: {:?}", tube.topology());
    println!("area: {:.6} m^2", tube.area());
    println!(
        "regular: {} ({} sections at spacing {:.4} m)",
        report.is_regular(),
        report.sections_checked,
        report.spacing
    );
    for (a, b) in &report.intersecting {
        println!("  intersecting sections: l = {a:.4} and l = {b:.4}");
    }
    println!("flow capacity sigma(l):");
    let n = 20;
    for k in 0..=n {
        let l = tube.length() * k as f64 / n as f64;
        println!("  l = {l:8.3}  sigma = {:.4}", tube.widths().radius(l));
    }
    let narrow = tube.narrow_intervals(r_s, 2000);
    if narrow.is_empty() {
        println!("narrow intervals (r_s = {r_s}): none");
    } else {
        println!("narrow intervals (r_s = {r_s}):");
        for (a, b) in narrow {
            println!("  [{a:.3}, {b:.3}]");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            scenario: path,
            out,
            dt,
            t_end,
            mode,
        } => {
            let overrides = Overrides {
                dt_s: dt,
                t_end_s: t_end,
                mode: mode.map(|m| match m {
                    ModeArg::Full => RunMode::Full,
                    ModeArg::Baseline => RunMode::Baseline,
                }),
            };
            let scenario = load_scenario_with(&path, overrides)?;
            let log = simulate(&scenario, scenario.resolved.mode.control_mode())?;
            let dir = out_dir(out, &scenario, &path);
            output::write_run(&dir, &scenario, &log)?;
            report("simulate", &log);
            eprintln!("wrote {}", dir.display());
            Ok(exit_for(&[&log]))
        }
        Command::Compare { scenario: path, out } => {
            let scenario = load_scenario_with(&path, Overrides::default())?;
            let (full, baseline) = rayon::join(
                || simulate(&scenario, ControlMode::Full),
                || simulate(&scenario, ControlMode::Baseline),
            );
            let (full, baseline) = (full?, baseline?);
            let dir = out_dir(out, &scenario, &path);
            let summary = output::write_compare(&dir, &scenario, &full, &baseline)?;
            report("full", &full);
            report("baseline", &baseline);
            eprintln!(
                "exited: full {} vs baseline {}; final-third AMD: full {} vs baseline {}",
                summary.exited_full,
                summary.exited_baseline,
                fmt_opt(summary.amd_final_third_full),
                fmt_opt(summary.amd_final_third_baseline)
            );
            eprintln!("wrote {}", dir.display());
            Ok(exit_for(&[&full, &baseline]))
        }
        Command::CheckTube { scenario } => {
            check_tube(&scenario)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { trace, out } => {
            let dir = out.unwrap_or_else(|| trace.parent().unwrap_or(Path::new(".")).to_path_buf());
            let files = output::plot_trace(&trace, &dir)?;
            eprintln!("wrote {} file(s) to {}", files.len(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_for(logs: &[&SimulationLog]) -> ExitCode {
    if logs.iter().any(|l| l.termination == Termination::Fault) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
