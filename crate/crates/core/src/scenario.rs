//! Scenario files: one TOML document describing topology, game, schedules,
//! attack, horizon and outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::AttackModel;
use crate::dbrosa::{make_schedules, InitPolicy, SampleScope, ScheduleSet};
use crate::dbrosa::schedule::ScheduleParams;
use crate::error::{Error, Result};
use crate::game::{CommodityMarketGame, CommodityParams};
use crate::metrics::OracleParams;
use crate::svrg::SnapshotPolicy;
use crate::topology::{validate_redundancy, AgentId, ClusterTopology, GraphSpec, ValidationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Graph over all agents in flat order (cluster by cluster).
    pub global: GraphSpec,
    /// One graph per cluster, or a single graph used for every cluster.
    pub clusters: Vec<GraphSpec>,
    /// One-based `[cluster, member]` pairs.
    #[serde(default)]
    pub byzantine: Vec<[usize; 2]>,
    pub b_global: usize,
    pub b_cluster: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub sampling: SampleScope,
    #[serde(default)]
    pub init: InitPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    /// Trailing fraction of rounds used for slope fits.
    #[serde(default = "half")]
    pub fit_window: f64,
    /// Sample points for the `ΔF^sup` diagnostic; 0 skips it.
    #[serde(default)]
    pub delta_f_sup_samples: usize,
    /// Random pairs for the strong-monotonicity probe.
    #[serde(default = "probe_pairs")]
    pub probe_pairs: usize,
    /// Reduced graphs enumerated before the redundancy check falls back to sampling.
    #[serde(default = "validation_limit")]
    pub validation_limit: usize,
}

fn half() -> f64 {
    0.5
}
fn probe_pairs() -> usize {
    200
}
fn validation_limit() -> usize {
    2_000
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            fit_window: half(),
            delta_f_sup_samples: 0,
            probe_pairs: probe_pairs(),
            validation_limit: validation_limit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

fn custom() -> String {
    "custom".into()
}
fn one_run() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "custom")]
    pub name: String,
    pub rounds: usize,
    #[serde(default = "one_run")]
    pub runs: usize,
    /// Run `k` uses seed `seed + k`.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    pub topology: TopologyConfig,
    pub game: CommodityParams,
    pub schedule: ScheduleParams,
    #[serde(default)]
    pub snapshot: SnapshotPolicy,
    #[serde(default)]
    pub attack: AttackModel,
    /// Named attacks selectable with `--attack`.
    #[serde(default)]
    pub attacks: BTreeMap<String, AttackModel>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub oracle: OracleParams,
    #[serde(default)]
    pub observers: ObserverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("small_scale", include_str!("../presets/small_scale.toml")),
    ("large_scale", include_str!("../presets/large_scale.toml")),
    ("static_no_attack", include_str!("../presets/static_no_attack.toml")),
];

/// Everything a run needs, built and cross-checked from a config.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub topology: ClusterTopology,
    pub game: CommodityMarketGame,
    pub schedules: ScheduleSet,
    pub report: ValidationReport,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.root())))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
        })?;
        Self::from_toml(text)
    }

    /// Replaces the active attack by the named variant (`none` always exists).
    pub fn select_attack(&mut self, name: &str) -> Result<()> {
        if let Some(m) = self.attacks.get(name) {
            self.attack = m.clone();
            return Ok(());
        }
        if name == "none" {
            self.attack = AttackModel::default();
            return Ok(());
        }
        let mut names: Vec<&str> = self.attacks.keys().map(|s| s.as_str()).collect();
        names.push("none");
        Err(Error::Config(format!("unknown attack `{name}` (available: {})", names.join(", "))))
    }

    pub fn build_topology(&self) -> Result<ClusterTopology> {
        let tc = &self.topology;
        let sizes = &self.game.cluster_sizes;
        let n: usize = sizes.iter().sum();
        let flat: Vec<AgentId> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| (0..s).map(move |m| AgentId::new(c, m)))
            .collect();
        let global: Vec<(AgentId, AgentId)> = tc
            .global
            .edges(n)?
            .into_iter()
            .map(|(u, v)| (flat[u], flat[v]))
            .collect();
        let specs: Vec<&GraphSpec> = match tc.clusters.len() {
            1 => vec![&tc.clusters[0]; sizes.len()],
            k if k == sizes.len() => tc.clusters.iter().collect(),
            k => {
                return Err(Error::Config(format!(
                    "{k} cluster graphs given for {} clusters",
                    sizes.len()
                )))
            }
        };
        let cluster_edges = specs
            .iter()
            .zip(sizes)
            .map(|(g, &s)| g.edges(s))
            .collect::<Result<Vec<_>>>()?;
        let mut byz = Vec::with_capacity(tc.byzantine.len());
        for &[c, m] in &tc.byzantine {
            if c == 0 || m == 0 {
                return Err(Error::Config("Byzantine agents are given as one-based [cluster, member]".into()));
            }
            byz.push(AgentId::new(c - 1, m - 1));
        }
        ClusterTopology::new(
            sizes.clone(),
            &global,
            &cluster_edges,
            &byz,
            tc.b_global,
            tc.b_cluster.clone(),
        )
    }

    /// Parses every section and checks cross-section consistency.
    pub fn build(self) -> Result<Scenario> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if !(self.observers.fit_window > 0.0 && self.observers.fit_window <= 1.0) {
            return Err(Error::Config("observers.fit_window must lie in (0, 1]".into()));
        }
        self.snapshot.validate()?;
        let topology = self.build_topology()?;
        let game = CommodityMarketGame::new(self.game.clone())?;
        self.attack.validate(topology.cluster_sizes())?;
        for (name, m) in &self.attacks {
            m.validate(topology.cluster_sizes())
                .map_err(|e| Error::Config(format!("attacks.{name}: {}", e.root())))?;
        }
        let schedules = make_schedules(&self.schedule, self.rounds, topology.n())?;
        let report = validate_redundancy(&topology, self.observers.validation_limit);
        Ok(Scenario {
            config: self,
            topology,
            game,
            schedules,
            report,
        })
    }
}
