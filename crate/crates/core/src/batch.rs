//! Monte-Carlo batches: one oracle track per scenario, seeded runs on a
//! worker pool, averaged traces and a JSON summary.

use std::path::Path;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::dbrosa::{InvariantCounts, Simulation, SimulationSpec};
use crate::error::{Error, Result};
use crate::game::{probe_monotonicity, Game};
use crate::linalg::norm;
use crate::metrics::trace::{consensus_diameter, mean_distance};
use crate::metrics::{
    cv_increment, delta_f_sup_estimate, phi_variation, regret_increment, solve_sgne, sublinearity_fit,
    MetricsTrace, PhiSplit, SgneSolution,
};
use crate::scenario::Scenario;

/// Equilibria for `t = 1..=rounds + 1`, warm-started in sequence.
pub fn oracle_track(scn: &Scenario) -> Result<Vec<SgneSolution>> {
    let honest = honest_mask(scn);
    let mut out: Vec<SgneSolution> = Vec::with_capacity(scn.config.rounds + 1);
    for t in 1..=scn.config.rounds + 1 {
        let sol = solve_sgne(&scn.game, &honest, t, &scn.config.oracle, out.last()).map_err(|e| e.at_round(t))?;
        out.push(sol);
    }
    Ok(out)
}

pub fn honest_mask(scn: &Scenario) -> Vec<bool> {
    (0..scn.topology.n()).map(|a| !scn.topology.is_byzantine(a)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    #[serde(skip)]
    pub trace: MetricsTrace,
    pub invariants: InvariantCounts,
    pub attack_fallbacks: u64,
    pub initial_diameter: f64,
    pub final_diameter: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub regret_slope: Option<f64>,
    pub cv_slope: Option<f64>,
    pub seconds: f64,
}

/// Runs one seeded simulation and records its metrics against `oracle`.
pub fn run_single(scn: &Scenario, run: usize, oracle: &[SgneSolution]) -> Result<RunResult> {
    let cfg = &scn.config;
    let start = Instant::now();
    let seed = cfg.seed.wrapping_add(run as u64);
    if oracle.len() < cfg.rounds + 1 {
        return Err(Error::Protocol("oracle track shorter than the horizon".into()));
    }
    let honest = honest_mask(scn);
    let honest_ids = scn.topology.honest_flat();
    let d = scn.game.dim();
    let mut phi_running = Vec::with_capacity(cfg.rounds);
    let mut acc = 0.0;
    for w in oracle.windows(2).take(cfg.rounds) {
        acc += w[0].x_star.iter().zip(&w[1].x_star).map(|(a, b)| (a - b).abs()).sum::<f64>();
        phi_running.push(acc);
    }

    let mut sim = Simulation::new(SimulationSpec {
        game: &scn.game,
        topo: &scn.topology,
        sched: &scn.schedules,
        snapshot: cfg.snapshot.clone(),
        scope: cfg.engine.sampling,
        attack: &cfg.attack,
        init: cfg.engine.init,
        seed,
    })?;
    let mut trace = MetricsTrace::default();
    let mut decisions = vec![0.0; scn.topology.n() * d];
    sim.run(cfg.rounds, |t, states| {
        let sol = &oracle[t - 1];
        for s in states {
            decisions[s.id * d..(s.id + 1) * d].copy_from_slice(&s.x);
        }
        let regret = regret_increment(&scn.game, &honest, t, &decisions, sol)?;
        let cv = cv_increment(&scn.game, &honest, t, &decisions, sol)?;
        let dist = mean_distance(&honest, d, &decisions, &sol.x_star);
        let ests: Vec<&[f64]> = honest_ids.iter().map(|&a| &states[a].estimate[..]).collect();
        let diam = consensus_diameter(&ests, d);
        trace.push(t, regret, cv, dist, diam, phi_running[t - 1]);
        Ok(())
    })
    .map_err(|e| Error::Round {
        round: sim.round(),
        source: Box::new(Error::Protocol(format!("run {run} (seed {seed}): {}", e.root()))),
    })?;

    let first = trace.records.first().copied();
    let last = trace.records.last().copied();
    let window = cfg.observers.fit_window;
    Ok(RunResult {
        run,
        seed,
        invariants: sim.invariants(),
        attack_fallbacks: sim.attack_fallbacks(),
        initial_diameter: first.map_or(0.0, |r| r.consensus_diameter),
        final_diameter: last.map_or(0.0, |r| r.consensus_diameter),
        initial_distance: first.map_or(0.0, |r| r.mean_dist_to_sgne),
        final_distance: last.map_or(0.0, |r| r.mean_dist_to_sgne),
        regret_slope: sublinearity_fit(&trace.regret_cum(), window).ok(),
        cv_slope: sublinearity_fit(&trace.cv_cum(), window).ok(),
        seconds: start.elapsed().as_secs_f64(),
        trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub max_residual: f64,
    pub max_iterations: usize,
    pub initial_lambda_norm: f64,
    /// `‖[G_1(x*_1)]₊‖`, reported rather than enforced.
    pub initial_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub name: String,
    pub attack: String,
    pub rounds: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub fit_window: f64,
    pub regret_slope: Option<f64>,
    pub cv_slope: Option<f64>,
    pub slope_error: Option<String>,
    pub final_regret_cum: f64,
    pub final_cv_cum: f64,
    pub mean_initial_diameter: f64,
    pub mean_final_diameter: f64,
    pub mean_initial_distance: f64,
    pub mean_final_distance: f64,
    pub invariant_violations: u64,
    pub invariants: InvariantCounts,
    pub attack_fallbacks: u64,
    pub phi: Option<PhiSplit>,
    pub delta_f_sup: Option<f64>,
    pub sigma_hat: f64,
    pub lipschitz_hat: f64,
    pub oracle: OracleSummary,
    pub schedule_violations: Vec<String>,
    pub topology_warnings: Vec<String>,
    pub per_run: Vec<RunResult>,
    pub oracle_seconds: f64,
    pub total_seconds: f64,
    pub mean_run_seconds: f64,
    pub max_run_seconds: f64,
}

pub struct BatchOutcome {
    pub summary: BatchSummary,
    pub mean: MetricsTrace,
    pub runs: Vec<RunResult>,
}

impl BatchOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.invariant_violations > 0 {
            2
        } else {
            0
        }
    }
}

/// Runs `config.runs` seeded simulations on `workers` threads (0 = all cores).
pub fn run_batch(scn: &Scenario, workers: usize) -> Result<BatchOutcome> {
    let cfg = &scn.config;
    let total = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let honest = honest_mask(scn);

    let t0 = Instant::now();
    let oracle = pool.install(|| oracle_track(scn))?;
    let oracle_seconds = t0.elapsed().as_secs_f64();
    info!("oracle track for {} rounds solved in {oracle_seconds:.2}s", cfg.rounds + 1);

    let runs: Vec<RunResult> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|k| run_single(scn, k, &oracle))
            .collect::<Result<_>>()
    })?;
    let traces: Vec<MetricsTrace> = runs.iter().map(|r| r.trace.clone()).collect();
    let mean = MetricsTrace::mean(&traces)?;

    let window = cfg.observers.fit_window;
    let fits = sublinearity_fit(&mean.regret_cum(), window)
        .and_then(|r| sublinearity_fit(&mean.cv_cum(), window).map(|c| (r, c)));
    let (regret_slope, cv_slope, slope_error) = match fits {
        Ok((r, c)) => (Some(r), Some(c), None),
        Err(e) => (None, None, Some(e.to_string())),
    };

    let d = scn.game.dim();
    let stars: Vec<&[f64]> = oracle.iter().take(cfg.rounds + 1).map(|s| &s.x_star[..]).collect();
    let phi = (stars.len() >= 2).then(|| phi_variation(&stars, &honest, d));
    let delta_f_sup = if cfg.observers.delta_f_sup_samples > 0 {
        Some(delta_f_sup_estimate(
            &scn.game,
            &honest,
            cfg.rounds,
            cfg.observers.delta_f_sup_samples,
            cfg.seed,
        )?)
    } else {
        None
    };
    let probe = probe_monotonicity(&scn.game, &honest, 1, cfg.observers.probe_pairs, cfg.seed)?;
    let initial_violation = norm(&crate::linalg::positive_part(
        &scn.game.expected_constraint(&oracle[0].x_star, 1)?,
    ));

    let mut invariants = InvariantCounts::default();
    for r in &runs {
        invariants.add(&r.invariants);
    }
    let k = runs.len() as f64;
    let avg = |f: fn(&RunResult) -> f64| runs.iter().map(f).sum::<f64>() / k;
    let last = mean.records.last().copied();
    let summary = BatchSummary {
        name: cfg.name.clone(),
        attack: cfg.attack.kind.name().to_string(),
        rounds: cfg.rounds,
        runs: cfg.runs,
        base_seed: cfg.seed,
        fit_window: window,
        regret_slope,
        cv_slope,
        slope_error,
        final_regret_cum: last.map_or(0.0, |r| r.regret_cum),
        final_cv_cum: last.map_or(0.0, |r| r.cv_cum),
        mean_initial_diameter: avg(|r| r.initial_diameter),
        mean_final_diameter: avg(|r| r.final_diameter),
        mean_initial_distance: avg(|r| r.initial_distance),
        mean_final_distance: avg(|r| r.final_distance),
        invariant_violations: invariants.total(),
        invariants,
        attack_fallbacks: runs.iter().map(|r| r.attack_fallbacks).sum(),
        phi,
        delta_f_sup,
        sigma_hat: probe.sigma_hat,
        lipschitz_hat: probe.lipschitz_hat,
        oracle: OracleSummary {
            max_residual: oracle.iter().map(|s| s.residual).fold(0.0, f64::max),
            max_iterations: oracle.iter().map(|s| s.iterations).max().unwrap_or(0),
            initial_lambda_norm: norm(&oracle[0].lambda_star),
            initial_violation,
        },
        schedule_violations: scn.schedules.violations.clone(),
        topology_warnings: scn.report.warnings(),
        per_run: runs.clone(),
        oracle_seconds,
        total_seconds: total.elapsed().as_secs_f64(),
        mean_run_seconds: avg(|r| r.seconds),
        max_run_seconds: runs.iter().map(|r| r.seconds).fold(0.0, f64::max),
    };
    Ok(BatchOutcome { summary, mean, runs })
}

/// Writes `run_<k>.csv`, `mean.csv` and `summary.json` into `dir`.
pub fn write_artifacts(outcome: &BatchOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in &outcome.runs {
        std::fs::write(dir.join(format!("run_{}.csv", r.run)), r.trace.to_csv())?;
    }
    std::fs::write(dir.join("mean.csv"), outcome.mean.to_csv())?;
    let json = serde_json::to_string_pretty(&outcome.summary)
        .map_err(|e| Error::Protocol(format!("cannot serialize summary: {e}")))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}
