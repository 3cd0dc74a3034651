//! Synchronous round engine: builds every round's messages, advances all
//! agents in parallel and counts invariant violations on honest agents.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{craft_message, AttackModel};
use crate::dbrosa::agent::{round_step, AgentState, RoundContext, SampleScope};
use crate::dbrosa::schedule::ScheduleSet;
use crate::error::{Error, Result};
use crate::game::Game;
use crate::rng::{self, Purpose};
use crate::svrg::SnapshotPolicy;
use crate::topology::ClusterTopology;

/// Where decisions and foreign estimate blocks start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Uniform in the corresponding box.
    #[default]
    Uniform,
    /// Center of the corresponding box.
    Center,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCounts {
    pub outside_box: u64,
    pub negative_dual: u64,
    pub estimate_unbounded: u64,
    pub own_block_mismatch: u64,
}

impl InvariantCounts {
    pub fn total(&self) -> u64 {
        self.outside_box + self.negative_dual + self.estimate_unbounded + self.own_block_mismatch
    }

    pub fn add(&mut self, o: &InvariantCounts) {
        self.outside_box += o.outside_box;
        self.negative_dual += o.negative_dual;
        self.estimate_unbounded += o.estimate_unbounded;
        self.own_block_mismatch += o.own_block_mismatch;
    }
}

pub struct SimulationSpec<'a> {
    pub game: &'a dyn Game,
    pub topo: &'a ClusterTopology,
    pub sched: &'a ScheduleSet,
    pub snapshot: SnapshotPolicy,
    pub scope: SampleScope,
    pub attack: &'a AttackModel,
    pub init: InitPolicy,
    pub seed: u64,
}

pub struct Simulation<'a> {
    spec: SimulationSpec<'a>,
    states: Vec<AgentState>,
    t: usize,
    lambda_bound: f64,
    invariants: InvariantCounts,
    fallbacks: u64,
}

fn init_block(game: &dyn Game, policy: InitPolicy, agent: usize, r: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let b = game.box_set(agent);
    match policy {
        InitPolicy::Uniform => b.sample(r),
        InitPolicy::Center => b.lower.iter().zip(&b.upper).map(|(l, u)| 0.5 * (l + u)).collect(),
    }
}

impl<'a> Simulation<'a> {
    pub fn new(spec: SimulationSpec<'a>) -> Result<Self> {
        let game = spec.game;
        let topo = spec.topo;
        let (n, d) = (topo.n(), game.dim());
        if game.n() != n || game.layout().sizes() != topo.cluster_sizes() {
            return Err(Error::Config("game and topology disagree on cluster sizes".into()));
        }
        spec.attack.validate(topo.cluster_sizes())?;
        let mut states = Vec::with_capacity(n);
        for a in 0..n {
            let mut r = rng::stream(spec.seed, Purpose::Init, a as u64, 0);
            let mut estimate = Vec::with_capacity(n * d);
            let x = init_block(game, spec.init, a, &mut r);
            for p in 0..n {
                if p == a {
                    estimate.extend_from_slice(&x);
                } else {
                    estimate.extend(init_block(game, spec.init, p, &mut r));
                }
            }
            let n_i = topo.cluster_size(topo.agent(a).cluster);
            states.push(AgentState {
                id: a,
                x,
                lambda: vec![0.0; game.constraint_dim()],
                snapshot: estimate.clone(),
                estimate,
                trackers: vec![0.0; n_i * d],
                eps: vec![0.0; n_i * d],
            });
        }
        let lambda_bound = topo
            .honest_flat()
            .iter()
            .flat_map(|&a| states[a].estimate.iter())
            .fold(game.radius(), |m, v| m.max(v.abs()));
        let mut sim = Self {
            spec,
            states,
            t: 1,
            lambda_bound,
            invariants: InvariantCounts::default(),
            fallbacks: 0,
        };
        sim.check_invariants();
        Ok(sim)
    }

    /// Round whose start state is currently held.
    pub fn round(&self) -> usize {
        self.t
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    /// Bound `Λ` on honest estimate coordinates.
    pub fn estimate_bound(&self) -> f64 {
        self.lambda_bound
    }

    pub fn invariants(&self) -> InvariantCounts {
        self.invariants
    }

    /// Rounds in which a mean-based attack had no honest neighbor to copy.
    pub fn attack_fallbacks(&self) -> u64 {
        self.fallbacks
    }

    fn crafted(&mut self, estimates_channel: bool) -> Vec<Option<Vec<f64>>> {
        let topo = self.spec.topo;
        let attack = self.spec.attack;
        let d = self.spec.game.dim();
        let mut out = vec![None; topo.n()];
        if !attack.is_active(estimates_channel) {
            return out;
        }
        for &s in topo.byzantine() {
            let id = topo.agent(s);
            let off = topo.offset(id.cluster);
            let nbrs: Vec<(f64, &[f64])> = topo
                .cluster_in_members(id.cluster, id.member)
                .iter()
                .filter(|&&h| !topo.is_byzantine(off + h))
                .map(|&h| {
                    let w = attack
                        .weights
                        .as_ref()
                        .map_or(1.0, |w| w[id.cluster][id.member][h]);
                    let st = &self.states[off + h];
                    (w, if estimates_channel { &st.estimate[..] } else { &st.trackers[..] })
                })
                .collect();
            let (purpose, blocks) = if estimates_channel {
                (Purpose::AttackEstimate, topo.n())
            } else {
                (Purpose::AttackTracker, topo.cluster_size(id.cluster))
            };
            let mut r = rng::stream(self.spec.seed, purpose, s as u64, self.t as u64);
            let (msg, fallback) = craft_message(&attack.kind, &nbrs, blocks, d, &mut r);
            if fallback {
                self.fallbacks += 1;
                debug!("agent {id} has no honest neighbor in round {}; attacking around zero", self.t);
            }
            out[s] = Some(msg);
        }
        out
    }

    /// Advances every agent by one round.
    pub fn step(&mut self) -> Result<()> {
        let t = self.t;
        let crafted_est = self.crafted(true);
        let crafted_trk = self.crafted(false);
        let est: Vec<&[f64]> = (0..self.states.len())
            .map(|s| crafted_est[s].as_deref().unwrap_or(&self.states[s].estimate))
            .collect();
        let trk: Vec<&[f64]> = (0..self.states.len())
            .map(|s| crafted_trk[s].as_deref().unwrap_or(&self.states[s].trackers))
            .collect();
        let ctx = RoundContext {
            game: self.spec.game,
            topo: self.spec.topo,
            sched: self.spec.sched,
            snapshot: &self.spec.snapshot,
            scope: self.spec.scope,
            seed: self.spec.seed,
            estimate_msgs: &est,
            tracker_msgs: &trk,
        };
        let next: Vec<AgentState> = self
            .states
            .par_iter()
            .map(|s| round_step(s, &ctx, t))
            .collect::<Result<_>>()
            .map_err(|e| e.at_round(t))?;
        self.states = next;
        self.t += 1;
        self.check_invariants();
        Ok(())
    }

    fn check_invariants(&mut self) {
        let game = self.spec.game;
        let d = game.dim();
        let mut c = InvariantCounts::default();
        for a in self.spec.topo.honest_flat() {
            let s = &self.states[a];
            if !game.box_set(a).contains(&s.x) {
                c.outside_box += 1;
            }
            if s.lambda.iter().any(|l| !(*l >= 0.0)) {
                c.negative_dual += 1;
            }
            if s.estimate.iter().any(|v| !(v.abs() <= self.lambda_bound)) {
                c.estimate_unbounded += 1;
            }
            if s.own_block(d) != &s.x[..] {
                c.own_block_mismatch += 1;
            }
        }
        if c.total() > 0 {
            warn!("invariant violations after reaching round {}: {c:?}", self.t);
        }
        self.invariants.add(&c);
    }

    /// Runs `rounds` rounds. `observe(t, states)` sees the state at the start
    /// of every round `t = 1..=rounds`.
    pub fn run(
        &mut self,
        rounds: usize,
        mut observe: impl FnMut(usize, &[AgentState]) -> Result<()>,
    ) -> Result<()> {
        for _ in 0..rounds {
            observe(self.t, &self.states).map_err(|e| e.at_round(self.t))?;
            self.step()?;
        }
        Ok(())
    }
}
