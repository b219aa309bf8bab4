use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use fastcharge::controllers::{CcCop, CcCv, CcCvV, ChargeController, VoltageSohMap};
use fastcharge::io::{self, RunConfig, PAPER_DEFAULTS};
use fastcharge::lifecycle::{constant_current_to, controlled_charge, rest, run_protocol};
use fastcharge::pipeline;
use fastcharge::rl::train::{load_checkpoint, save_checkpoint, PolicyController};

mod plot;

#[derive(Parser)]
#[command(name = "fastcharge", version, about = "Battery fast-charging workbench")]
struct Cli {
    /// `paper_defaults` or a TOML configuration file.
    #[arg(long, global = true, default_value = PAPER_DEFAULTS)]
    config: String,
    /// Override the ageing acceleration factor.
    #[arg(long, global = true)]
    accel: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true, env = "FASTCHARGE_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Cccv,
    CccvV,
    CopSlow,
    CopFast,
    Policy,
}

#[derive(Subcommand)]
enum Command {
    /// Charge a fresh cell once and write its trace.
    Simulate {
        #[arg(long, value_enum, default_value = "cccv")]
        strategy: Strategy,
        /// Cut-off voltage map, needed by cccv-v.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Policy checkpoint, needed by policy.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Build the cut-off voltage map from a CC-COP-slow life run.
    Map,
    /// Train the TD3 charging agent.
    Train {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Run the life-cycle protocol under a trained policy.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
    },
    /// Run every strategy through the life-cycle protocol.
    Compare {
        /// Policy checkpoint for the proposed strategy; defaults to
        /// `best_policy.txt` in the output directory when present.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Render SVG figures from the CSV files in a run directory.
    Plot {
        /// Run directory; defaults to the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(&cli.config).with_context(|| format!("loading config {}", cli.config))?;
    if let Some(a) = cli.accel {
        cfg.accel = a;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    if !matches!(cli.command, Command::Plot { .. }) {
        let path = cfg.write_resolved(&out)?;
        info!("resolved configuration written to {}", path.display());
    }
    match cli.command {
        Command::Simulate { strategy, map, policy } => simulate(&cfg, &out, strategy, map.as_deref(), policy.as_deref()),
        Command::Map => {
            let t0 = Instant::now();
            let map = pipeline::build_map(&cfg)?;
            let path = out.join("voltage_soh_map.csv");
            map.save(&path)?;
            info!("map with {} points written to {} in {:.1?}", map.points().len(), path.display(), t0.elapsed());
            Ok(())
        }
        Command::Train { episodes, map } => {
            if let Some(n) = episodes {
                cfg.training.episodes = n;
                cfg.write_resolved(&out)?;
            }
            let map = map_for(&cfg, &out, map.as_deref())?;
            let checkpoint = out.join("checkpoint.txt");
            let t0 = Instant::now();
            let (agent, log) = pipeline::train_agent(&cfg, &map, Some(&checkpoint), |e| {
                info!(
                    "episode {:>5}: reward {:9.2}, max V {:.4}, min eta_side {:+.4} V, {:.1} min",
                    e.episode, e.reward, e.max_voltage, e.min_eta_side, e.charge_minutes
                )
            })?;
            io::write_file(&out.join("training_log.csv"), &log.to_csv())?;
            let mut best = agent.clone();
            if let Some((rec, actor)) = &log.best {
                best.actor = actor.clone();
                info!("best evaluation at episode {} ({:.2})", rec.episode, rec.reward);
            }
            save_checkpoint(&best, &out.join("best_policy.txt"))?;
            info!("training finished in {:.1?}", t0.elapsed());
            Ok(())
        }
        Command::Evaluate { policy } => {
            let ctrl = PolicyController::from_checkpoint(&policy)?.with_label(pipeline::PROPOSED);
            let factory = pipeline::plant_factory(&cfg)?;
            let mut cell = factory()?;
            let mut ctrl: Box<dyn ChargeController> = Box::new(ctrl);
            let run = run_protocol(ctrl.as_mut(), &mut cell, &cfg.protocol)?;
            io::write_file(&out.join("evaluate_cycles.csv"), &io::cycles_csv(&[&run])?)?;
            for (cycle, trace) in &run.snapshots {
                io::write_trace(&out.join(format!("trace_proposed_cycle{cycle}.csv")), trace)?;
            }
            println!(
                "{}: {} cycles, {:.1} EFC, average charge {:.2} min",
                run.strategy,
                run.cycles.len(),
                run.max_efc(),
                run.average_charge_minutes()
            );
            Ok(())
        }
        Command::Compare { policy, map } => {
            let map = map_for(&cfg, &out, map.as_deref())?;
            let policy = policy.or_else(|| Some(out.join("best_policy.txt")).filter(|p| p.exists()));
            let actor = match &policy {
                Some(p) => Some(load_checkpoint(p)?.actor),
                None => {
                    warn!("no policy checkpoint; the proposed strategy is skipped");
                    None
                }
            };
            let t0 = Instant::now();
            let report = pipeline::compare(&cfg, &map, actor.as_ref())?;
            let files = io::write_report(&out, &report)?;
            println!("{:<14} {:>8} {:>10} {:>7} {:>12}", "strategy", "EFC", "t_avg/min", "cycles", "plating/Ah");
            for r in report.summary() {
                match r.failed {
                    Some(e) => println!("{:<14} failed: {e}", r.strategy),
                    None => println!(
                        "{:<14} {:>8.1} {:>10.2} {:>7} {:>12.4e}",
                        r.strategy, r.max_efc, r.average_charge_minutes, r.cycles, r.plating_loss_ah
                    ),
                }
            }
            info!("{} files written in {:.1?}", files.len(), t0.elapsed());
            Ok(())
        }
        Command::Plot { input } => {
            let dir = input.unwrap_or(out);
            let written = plot::render_all(&dir)?;
            if written.is_empty() {
                bail!("no plottable CSV files in {}", dir.display());
            }
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

/// Uses `explicit`, then `voltage_soh_map.csv` in the output directory, and
/// builds a new map as a last resort.
fn map_for(cfg: &RunConfig, out: &Path, explicit: Option<&Path>) -> Result<VoltageSohMap> {
    let cached = out.join("voltage_soh_map.csv");
    let path = explicit.map(Path::to_path_buf).or_else(|| Some(cached.clone()).filter(|p| p.exists()));
    if let Some(p) = path {
        return VoltageSohMap::load(&p).with_context(|| format!("loading map {}", p.display()));
    }
    info!("building the cut-off voltage map");
    let map = pipeline::build_map(cfg)?;
    map.save(&cached)?;
    Ok(map)
}

fn simulate(cfg: &RunConfig, out: &Path, strategy: Strategy, map: Option<&Path>, policy: Option<&Path>) -> Result<()> {
    let mut ctrl: Box<dyn ChargeController> = match strategy {
        Strategy::Cccv => Box::new(CcCv::new(cfg.controller)),
        Strategy::CccvV => Box::new(CcCvV::new(cfg.controller, map_for(cfg, out, map)?)),
        Strategy::CopSlow => Box::new(CcCop::new(cfg.cop_slow)),
        Strategy::CopFast => Box::new(CcCop::new(cfg.cop_fast)),
        Strategy::Policy => {
            let Some(p) = policy else {
                bail!("--policy is required for the policy strategy");
            };
            Box::new(PolicyController::from_checkpoint(p)?)
        }
    };
    let p = &cfg.protocol;
    let mut cell = pipeline::plant_factory(cfg)?()?;
    constant_current_to(&mut cell, p.precharge_current, p.soc_precharge, p.sample_seconds, p.max_phase_steps, "precharge")?;
    rest(&mut cell, p.rest_seconds, p.rest_substep)?;
    let r = controlled_charge(&mut cell, ctrl.as_mut(), p.soc_target, p.sample_seconds, p.max_phase_steps, true)?;
    let path = out.join(format!("trace_{}.csv", io::file_stem(&ctrl.name())));
    io::write_trace(&path, &r.trace)?;
    println!(
        "{}: {:.2} min, max V {:.4}, min eta_side {:+.4} V -> {}",
        ctrl.name(),
        r.seconds / 60.0,
        r.max_voltage,
        r.min_eta_side,
        path.display()
    );
    Ok(())
}
