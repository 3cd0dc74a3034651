use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info, warn};

use dbrosa_core::batch::{run_batch, write_artifacts};
use dbrosa_core::scenario::{ScenarioConfig, PRESETS};
use dbrosa_core::Error;

/// Runs Byzantine-resilient equilibrium-seeking simulations on a scenario.
#[derive(Debug, Parser)]
#[command(name = "dbrosa", version)]
struct Args {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long)]
    preset: Option<String>,
    /// Named attack from the scenario's `attacks` table, or `none`.
    #[arg(long)]
    attack: Option<String>,
    /// Horizon T.
    #[arg(long)]
    rounds: Option<usize>,
    /// Monte-Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed; run k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV traces and the summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Load and check the scenario, then exit.
    #[arg(long)]
    validate_only: bool,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn load(args: &Args) -> Result<ScenarioConfig, Error> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            return Err(Error::Config(format!(
                "give --config PATH or --preset NAME (presets: {})",
                names.join(", ")
            )));
        }
    };
    if let Some(a) = &args.attack {
        cfg.select_attack(a)?;
    }
    if let Some(t) = args.rounds {
        cfg.rounds = t;
        // constant-gain schedules switch at the horizon by convention
        if cfg.schedule.horizon.is_none() && cfg.schedule.t1 > t {
            cfg.schedule.t1 = t;
        }
    }
    if let Some(k) = args.runs {
        cfg.runs = k;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = &args.out {
        cfg.output.dir = Some(o.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let scn = match cfg.build() {
        Ok(s) => s,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for w in scn.report.warnings() {
        warn!("topology: {w}");
    }
    for v in &scn.schedules.violations {
        warn!("schedule outside the analysed range: {v}");
    }
    if args.validate_only {
        println!(
            "{}: valid ({} agents, {} Byzantine, {} clusters, T = {}, attack = {})",
            scn.config.name,
            scn.topology.n(),
            scn.topology.byzantine().len(),
            scn.topology.num_clusters(),
            scn.config.rounds,
            scn.config.attack.kind.name()
        );
        return ExitCode::SUCCESS;
    }

    info!(
        "{}: {} run(s) of {} rounds, attack {}",
        scn.config.name,
        scn.config.runs,
        scn.config.rounds,
        scn.config.attack.kind.name()
    );
    let outcome = match run_batch(&scn, scn.config.workers) {
        Ok(o) => o,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(match e.root() {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            });
        }
    };
    let out_dir = scn.config.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = write_artifacts(&outcome, &out_dir) {
        error!("cannot write artifacts to {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let s = &outcome.summary;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    println!(
        "{} / {}: regret slope {}, cv slope {}, final diameter {:.3e}, invariant violations {} -> {}",
        s.name,
        s.attack,
        fmt(s.regret_slope),
        fmt(s.cv_slope),
        s.mean_final_diameter,
        s.invariant_violations,
        out_dir.display()
    );
    match outcome.exit_code() {
        0 => ExitCode::SUCCESS,
        _ => {
            error!("{} invariant violation(s): {:?}", s.invariant_violations, s.invariants);
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}
