//! `crt` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crt::harness::{build_instance, run_experiment, ExperimentConfig, HarnessError, SimulationConfig, PRESETS};
use crt::oracle::verify_schedule;
use crt::scheduler::{Algorithm, Schedule};
use crt::traffic::write_flows_csv;

#[derive(Parser)]
#[command(name = "crt", version, about = "Collision-tolerant TT scheduling for LEO constellations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Config file (TOML) or preset name.
    #[arg(long, global = true, default_value = "iridium-default")]
    config: String,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir, then `results`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated algorithms (crt_fast, spf, lag, strict).
    #[arg(long, global = true, value_delimiter = ',')]
    algo: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Schedule the configured flows (no sweep, no simulation).
    Schedule,
    /// Schedule and replay every schedule in the packet simulator.
    Simulate {
        /// Emission horizon in seconds.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Run the full experiment, including any sweep.
    Sweep,
    /// Check a schedule file against the instance rebuilt from the config.
    Verify {
        schedule: PathBuf,
        /// Sweep point index the schedule belongs to.
        #[arg(long, default_value_t = 0)]
        point: usize,
    },
    /// Write per-slot topology snapshots and the flow set.
    GenTopology,
    /// List preset names.
    Presets,
}

fn config(g: &Global) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::resolve(&g.config)?;
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
    }
    if let Some(names) = &g.algo {
        cfg.algorithms = names
            .iter()
            .map(|n| n.parse::<Algorithm>())
            .collect::<Result<_, _>>()
            .map_err(HarnessError::Config)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let dir = g.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&dir).map_err(|e| HarnessError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    if let Command::Presets = cli.command {
        for p in PRESETS {
            println!("{p}");
        }
        return Ok(0);
    }
    let mut cfg = config(&cli.global)?;
    match cli.command {
        Command::Schedule | Command::Simulate { .. } | Command::Sweep => {
            match &cli.command {
                Command::Schedule => {
                    cfg.sweep = None;
                    cfg.simulation = None;
                }
                Command::Simulate { horizon } => {
                    cfg.sweep = None;
                    let mut sim = cfg.simulation.take().unwrap_or(SimulationConfig {
                        horizon_s: None,
                        clock: Default::default(),
                        export_packets: true,
                    });
                    sim.export_packets = true;
                    if horizon.is_some() {
                        sim.horizon_s = *horizon;
                    }
                    cfg.simulation = Some(sim);
                }
                _ => {}
            }
            let dir = out_dir(&cli.global, &cfg)?;
            let report = run_experiment(&cfg, &dir)?;
            for c in &report.cells {
                let r = &c.row;
                let point = r.sweep_param.map(|v| format!(" point={v}")).unwrap_or_default();
                println!(
                    "{} seed={}{point} flows={} success={:.4} max_overlap={} resched_mean={:.2}",
                    r.algo, r.seed, r.n_flows, r.success_rate, r.max_overlap, r.resched_mean
                );
            }
            for f in &report.failures {
                eprintln!("verification failed for {}:", f.cell);
                for v in &f.violations {
                    eprintln!("  {v}");
                }
            }
            println!("results in {}", dir.display());
            Ok(report.exit_code())
        }
        Command::Verify { schedule, point } => {
            let text = fs::read_to_string(&schedule)
                .map_err(|e| HarnessError::Io { path: schedule.display().to_string(), message: e.to_string() })?;
            let sched = Schedule::from_json(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", schedule.display())))?;
            let (snaps, flows) = build_instance(&cfg, point, cfg.seeds[0])?;
            if sched.entries.len() != flows.len() || sched.num_slots != snaps.len() {
                return Err(HarnessError::Config(format!(
                    "schedule covers {} flows and {} slots, config builds {} and {}",
                    sched.entries.len(),
                    sched.num_slots,
                    flows.len(),
                    snaps.len()
                )));
            }
            let violations = verify_schedule(&sched, &snaps, &flows, &sched.node_params);
            for v in &violations {
                println!("{v}");
            }
            if violations.is_empty() {
                println!("ok: {} of {} flows scheduled, no violations", sched.scheduled_count(), flows.len());
                Ok(0)
            } else {
                println!("{} violations", violations.len());
                Ok(2)
            }
        }
        Command::GenTopology => {
            let dir = out_dir(&cli.global, &cfg)?;
            let seed = cfg.seeds[0];
            let (snaps, flows) = build_instance(&cfg, 0, seed)?;
            for s in &snaps {
                let p = dir.join(format!("topology_slot{}.json", s.slot));
                let json = s.to_json().map_err(|e| io_err(&p, e))?;
                fs::write(&p, json).map_err(|e| io_err(&p, e))?;
            }
            let p = dir.join("flows.csv");
            write_flows_csv(&flows, &p).map_err(|e| io_err(&p, e))?;
            println!(
                "{} snapshots ({} nodes, {} directed links in slot 0) and {} flows written to {}",
                snaps.len(),
                snaps[0].num_nodes(),
                snaps[0].links.len(),
                flows.len(),
                dir.display()
            );
            Ok(0)
        }
        Command::Presets => unreachable!("handled above"),
    }
}

fn io_err(p: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: p.display().to_string(), message: e.to_string() }
}

fn main() -> ExitCode {
    // usage errors are config errors (1); 2 is reserved for verifier violations
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
