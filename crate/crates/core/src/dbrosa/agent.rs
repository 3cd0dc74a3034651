//! One agent's state and its per-round update.

use serde::{Deserialize, Serialize};

use crate::dbrosa::schedule::ScheduleSet;
use crate::error::{check_len, Error, Result};
use crate::game::{project_box, Game};
use crate::rng::{self, Purpose};
use crate::robust_agg::Trimmer;
use crate::svrg::{direction_d1, direction_d2_d3, SnapshotPolicy};
use crate::topology::ClusterTopology;

/// Whether each agent draws its own `θ` and `ω`, or one draw is shared per
/// cluster (`θ`) and globally (`ω`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleScope {
    #[default]
    PerAgent,
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Flat index of the agent.
    pub id: usize,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Estimate of every agent's decision, length `n * d`; the own block equals `x`.
    pub estimate: Vec<f64>,
    /// Snapshot of the estimate from the previous round.
    pub snapshot: Vec<f64>,
    /// Trackers `v_q` for every member `q` of the own cluster, `n_i * d`.
    pub trackers: Vec<f64>,
    /// Gradient memories `ε_q` for every member of the own cluster, `n_i * d`.
    pub eps: Vec<f64>,
}

impl AgentState {
    pub fn own_block(&self, d: usize) -> &[f64] {
        &self.estimate[self.id * d..(self.id + 1) * d]
    }
}

/// Read-only inputs shared by every agent in one round. `estimate_msgs[s]`
/// and `tracker_msgs[s]` are what agent `s` sends this round (crafted for
/// Byzantine senders).
pub struct RoundContext<'a> {
    pub game: &'a dyn Game,
    pub topo: &'a ClusterTopology,
    pub sched: &'a ScheduleSet,
    pub snapshot: &'a SnapshotPolicy,
    pub scope: SampleScope,
    pub seed: u64,
    pub estimate_msgs: &'a [&'a [f64]],
    pub tracker_msgs: &'a [&'a [f64]],
}

fn theta_entity(topo: &ClusterTopology, scope: SampleScope, agent: usize) -> u64 {
    match scope {
        SampleScope::PerAgent => agent as u64,
        SampleScope::Shared => (1u64 << 32) | topo.agent(agent).cluster as u64,
    }
}

fn omega_entity(scope: SampleScope, agent: usize) -> u64 {
    match scope {
        SampleScope::PerAgent => agent as u64,
        SampleScope::Shared => u64::MAX,
    }
}

pub fn sample_theta(
    game: &dyn Game,
    topo: &ClusterTopology,
    scope: SampleScope,
    seed: u64,
    agent: usize,
    t: usize,
) -> Vec<f64> {
    let mut r = rng::stream(seed, Purpose::Theta, theta_entity(topo, scope, agent), t as u64);
    game.sample_theta(topo.agent(agent).cluster, t, &mut r)
}

pub fn sample_omega(game: &dyn Game, scope: SampleScope, seed: u64, agent: usize, t: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, Purpose::Omega, omega_entity(scope, agent), t as u64);
    game.sample_omega(t, &mut r)
}

/// Gradient memories `ε_q` for every member `q` of the agent's cluster.
pub fn gradient_memories(
    game: &dyn Game,
    topo: &ClusterTopology,
    agent: usize,
    estimate: &[f64],
    snapshot: &[f64],
    theta: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    let cluster = topo.agent(agent).cluster;
    let off = topo.offset(cluster);
    let mut out = Vec::with_capacity(topo.cluster_size(cluster) * game.dim());
    for q in 0..topo.cluster_size(cluster) {
        out.extend(direction_d1(game, agent, off + q, estimate, snapshot, theta, t)?);
    }
    Ok(out)
}

/// Advances one agent from round `t` to `t + 1`.
pub fn round_step(agent: &AgentState, ctx: &RoundContext<'_>, t: usize) -> Result<AgentState> {
    let game = ctx.game;
    let topo = ctx.topo;
    let sched = ctx.sched;
    let d = game.dim();
    let n = topo.n();
    let me = agent.id;
    let id = topo.agent(me);
    let cluster = id.cluster;
    let n_i = topo.cluster_size(cluster);
    let off = topo.offset(cluster);
    check_len("estimate", agent.estimate.len(), n * d)?;
    check_len("trackers", agent.trackers.len(), n_i * d)?;
    if ctx.estimate_msgs.len() != n || ctx.tracker_msgs.len() != n {
        return Err(Error::Protocol("round inbox does not cover every agent".into()));
    }

    let omega = sample_omega(game, ctx.scope, ctx.seed, me, t);
    let tau = if ctx.snapshot.refreshes(t) {
        agent.estimate.clone()
    } else {
        agent.snapshot.clone()
    };

    // dual step
    let (y, jac) = direction_d2_d3(game, me, &agent.estimate, &tau, &omega, t)?;
    let (eta, beta) = (sched.eta(t), sched.beta(t));
    let lambda: Vec<f64> = agent
        .lambda
        .iter()
        .zip(&y)
        .map(|(l, yk)| (l + eta * (yk - beta * l)).max(0.0))
        .collect();

    // primal step
    let (alpha, gamma) = (sched.alpha(t), sched.gamma(t));
    let mut dir = agent.trackers[(me - off) * d..(me - off + 1) * d].to_vec();
    jac.tr_mul_vec_acc(&lambda, &mut dir);
    let trial: Vec<f64> = agent.x.iter().zip(&dir).map(|(x, g)| x - gamma * g).collect();
    let proj = project_box(&trial, game.box_set(me))?;
    let x: Vec<f64> = agent
        .x
        .iter()
        .zip(&proj)
        .map(|(x, p)| (1.0 - alpha) * x + alpha * p)
        .collect();

    // estimate consensus over the global graph
    let mut trimmer = Trimmer::new();
    let senders = topo.global_in_flat(me);
    let b = topo.b_global();
    let denom = (senders.len() + 1).saturating_sub(2 * b) as f64;
    let (delta, zeta) = (sched.delta(t), sched.zeta(t));
    let mut estimate = agent.estimate.clone();
    for s in senders {
        if ctx.estimate_msgs[*s].len() != n * d {
            return Err(Error::Protocol(format!(
                "estimate message from agent {} has length {}, expected {}",
                topo.agent(*s),
                ctx.estimate_msgs[*s].len(),
                n * d
            )));
        }
    }
    for c in 0..n * d {
        if c / d == me {
            continue;
        }
        let own = agent.estimate[c];
        let kept = trimmer.kept_sum(
            own,
            senders.iter().map(|&s| (s, ctx.estimate_msgs[s][c])),
            senders.len(),
            b,
        )?;
        estimate[c] = delta * kept / denom + (zeta - delta) * own;
    }
    estimate[me * d..(me + 1) * d].copy_from_slice(&x);

    // next snapshot, sample and gradient memories
    let tau_next = if ctx.snapshot.refreshes(t + 1) {
        estimate.clone()
    } else {
        tau
    };
    let theta = sample_theta(game, topo, ctx.scope, ctx.seed, me, t + 1);
    let eps = gradient_memories(game, topo, me, &estimate, &tau_next, &theta, t + 1)?;

    // tracker consensus over the cluster graph
    let members = topo.cluster_in_members(cluster, id.member);
    let bi = topo.b_cluster(cluster);
    let denom_i = (members.len() + 1).saturating_sub(2 * bi) as f64;
    for &h in members {
        let len = ctx.tracker_msgs[off + h].len();
        if len != n_i * d {
            return Err(Error::Protocol(format!(
                "tracker message from member {} of cluster {} has length {len}, expected {}",
                h + 1,
                cluster + 1,
                n_i * d
            )));
        }
    }
    let mut trackers = vec![0.0; n_i * d];
    for c in 0..n_i * d {
        let kept = trimmer.kept_sum(
            agent.trackers[c],
            members.iter().map(|&h| (h, ctx.tracker_msgs[off + h][c])),
            members.len(),
            bi,
        )?;
        trackers[c] = kept / denom_i + eps[c] - agent.eps[c];
    }

    Ok(AgentState {
        id: me,
        x,
        lambda,
        estimate,
        snapshot: tau_next,
        trackers,
        eps,
    })
}
