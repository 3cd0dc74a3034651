//! Two-level communication structure: the global digraph over all agents and
//! one digraph per cluster, plus the honest/Byzantine partition and the trim
//! budgets honest agents are told about.
//!
//! Graphs are stored as in-neighbor sets keyed by the receiver. Byzantine
//! labels live here so the harness and metrics can read them; the round
//! engine never consults them when computing an honest update.

use std::collections::BTreeSet;
use std::fmt;

use petgraph::algo::condensation;
use petgraph::graph::DiGraph;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Agent `member` of cluster `cluster`, both zero-based. Displayed one-based
/// as `(i,j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub cluster: usize,
    pub member: usize,
}

impl AgentId {
    pub fn new(cluster: usize, member: usize) -> Self {
        Self { cluster, member }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.cluster + 1, self.member + 1)
    }
}

#[derive(Debug, Clone)]
pub struct ClusterTopology {
    cluster_sizes: Vec<usize>,
    offsets: Vec<usize>,
    global_in: Vec<BTreeSet<usize>>,
    cluster_in: Vec<Vec<BTreeSet<usize>>>,
    byzantine: BTreeSet<usize>,
    b_global: usize,
    b_cluster: Vec<usize>,
}

impl ClusterTopology {
    /// `global_edges` are sender→receiver pairs over all agents;
    /// `cluster_edges[i]` are sender→receiver member pairs inside cluster `i`.
    pub fn new(
        cluster_sizes: Vec<usize>,
        global_edges: &[(AgentId, AgentId)],
        cluster_edges: &[Vec<(usize, usize)>],
        byzantine: &[AgentId],
        b_global: usize,
        b_cluster: Vec<usize>,
    ) -> Result<Self> {
        if cluster_sizes.is_empty() || cluster_sizes.contains(&0) {
            return Err(Error::Config(
                "every cluster needs at least one member".into(),
            ));
        }
        let n_clusters = cluster_sizes.len();
        if cluster_edges.len() != n_clusters {
            return Err(Error::Config(format!(
                "{} cluster edge lists for {} clusters",
                cluster_edges.len(),
                n_clusters
            )));
        }
        if b_cluster.len() != n_clusters {
            return Err(Error::Config(format!(
                "{} cluster trim budgets for {} clusters",
                b_cluster.len(),
                n_clusters
            )));
        }
        let mut offsets = Vec::with_capacity(n_clusters);
        let mut acc = 0;
        for &s in &cluster_sizes {
            offsets.push(acc);
            acc += s;
        }
        let n = acc;
        let mut topo = Self {
            cluster_sizes,
            offsets,
            global_in: vec![BTreeSet::new(); n],
            cluster_in: Vec::new(),
            byzantine: BTreeSet::new(),
            b_global,
            b_cluster,
        };
        topo.cluster_in = topo
            .cluster_sizes
            .iter()
            .map(|&s| vec![BTreeSet::new(); s])
            .collect();

        for &(from, to) in global_edges {
            let (f, t) = (topo.flat(from)?, topo.flat(to)?);
            if f == t {
                return Err(Error::Config(format!("self-loop at {from}")));
            }
            topo.global_in[t].insert(f);
        }
        for (i, edges) in cluster_edges.iter().enumerate() {
            let size = topo.cluster_sizes[i];
            for &(from, to) in edges {
                if from >= size || to >= size {
                    return Err(Error::Config(format!(
                        "cluster {} edge {}->{} out of range (size {size})",
                        i + 1,
                        from + 1,
                        to + 1
                    )));
                }
                if from == to {
                    return Err(Error::Config(format!(
                        "self-loop at member {} of cluster {}",
                        from + 1,
                        i + 1
                    )));
                }
                topo.cluster_in[i][to].insert(from);
            }
        }
        for &a in byzantine {
            let f = topo.flat(a)?;
            topo.byzantine.insert(f);
        }

        let mut budget_sum = 0;
        for i in 0..n_clusters {
            let byz = topo.byzantine_members(i).len();
            if byz == topo.cluster_sizes[i] {
                return Err(Error::Config(format!(
                    "cluster {} has no honest agent",
                    i + 1
                )));
            }
            budget_sum += topo.b_cluster[i];
        }
        if budget_sum != topo.b_global {
            return Err(Error::Config(format!(
                "global trim budget b = {} differs from the sum of cluster budgets {budget_sum}",
                topo.b_global
            )));
        }
        Ok(topo)
    }

    pub fn n(&self) -> usize {
        self.global_in.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    pub fn cluster_size(&self, cluster: usize) -> usize {
        self.cluster_sizes[cluster]
    }

    pub fn offset(&self, cluster: usize) -> usize {
        self.offsets[cluster]
    }

    pub fn b_global(&self) -> usize {
        self.b_global
    }

    pub fn b_cluster(&self, cluster: usize) -> usize {
        self.b_cluster[cluster]
    }

    pub fn flat(&self, a: AgentId) -> Result<usize> {
        if a.cluster >= self.num_clusters() || a.member >= self.cluster_sizes[a.cluster] {
            return Err(Error::Domain(format!("agent {a} does not exist")));
        }
        Ok(self.offsets[a.cluster] + a.member)
    }

    pub fn agent(&self, flat: usize) -> AgentId {
        let cluster = match self.offsets.binary_search(&flat) {
            Ok(mut c) => {
                // skip past empty-offset duplicates (cannot happen: sizes > 0)
                while c + 1 < self.offsets.len() && self.offsets[c + 1] == flat {
                    c += 1;
                }
                c
            }
            Err(c) => c - 1,
        };
        AgentId::new(cluster, flat - self.offsets[cluster])
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        (0..self.n()).map(|f| self.agent(f))
    }

    pub fn is_byzantine(&self, flat: usize) -> bool {
        self.byzantine.contains(&flat)
    }

    pub fn byzantine(&self) -> &BTreeSet<usize> {
        &self.byzantine
    }

    pub fn honest_flat(&self) -> Vec<usize> {
        (0..self.n()).filter(|f| !self.is_byzantine(*f)).collect()
    }

    /// Honest member indices of a cluster (the set ℋ_i).
    pub fn honest_members(&self, cluster: usize) -> Vec<usize> {
        (0..self.cluster_sizes[cluster])
            .filter(|&m| !self.is_byzantine(self.offsets[cluster] + m))
            .collect()
    }

    pub fn byzantine_members(&self, cluster: usize) -> Vec<usize> {
        (0..self.cluster_sizes[cluster])
            .filter(|&m| self.is_byzantine(self.offsets[cluster] + m))
            .collect()
    }

    /// In-neighbors of `agent` over its cluster graph, as member indices.
    pub fn in_neighbors_cluster(&self, agent: AgentId) -> Result<&BTreeSet<usize>> {
        self.flat(agent)?;
        Ok(&self.cluster_in[agent.cluster][agent.member])
    }

    /// In-neighbors of `agent` over the global graph.
    pub fn in_neighbors_global(&self, agent: AgentId) -> Result<BTreeSet<AgentId>> {
        let f = self.flat(agent)?;
        Ok(self.global_in[f].iter().map(|&s| self.agent(s)).collect())
    }

    pub fn global_in_flat(&self, flat: usize) -> &BTreeSet<usize> {
        &self.global_in[flat]
    }

    pub fn cluster_in_members(&self, cluster: usize, member: usize) -> &BTreeSet<usize> {
        &self.cluster_in[cluster][member]
    }
}

/// How an edge set is generated from a node count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Every ordered pair of distinct nodes.
    Complete,
    /// Node `v` receives from `v ± o (mod n)` for each offset `o`.
    RingChords { offsets: Vec<usize> },
    /// Explicit one-based `[from, to]` pairs.
    Explicit { edges: Vec<[usize; 2]> },
}

impl GraphSpec {
    /// Zero-based sender→receiver pairs on `n` nodes.
    pub fn edges(&self, n: usize) -> Result<Vec<(usize, usize)>> {
        match self {
            GraphSpec::Complete => Ok((0..n)
                .flat_map(|from| (0..n).filter(move |&to| to != from).map(move |to| (from, to)))
                .collect()),
            GraphSpec::RingChords { offsets } => {
                let mut set = BTreeSet::new();
                for to in 0..n {
                    for &o in offsets {
                        if o == 0 || n < 2 {
                            continue;
                        }
                        let o = o % n;
                        for from in [(to + o) % n, (to + n - o) % n] {
                            if from != to {
                                set.insert((from, to));
                            }
                        }
                    }
                }
                Ok(set.into_iter().collect())
            }
            GraphSpec::Explicit { edges } => edges
                .iter()
                .map(|&[f, t]| {
                    if f == 0 || t == 0 || f > n || t > n {
                        Err(Error::Config(format!(
                            "edge [{f}, {t}] outside one-based range 1..={n}"
                        )))
                    } else {
                        Ok((f - 1, t - 1))
                    }
                })
                .collect(),
        }
    }
}

/// True iff the digraph has exactly one strongly connected component with no
/// incoming edges in the condensation (that component then reaches every
/// other node). Empty graphs have no source component.
pub fn has_source_component(n: usize, edges: &[(usize, usize)]) -> bool {
    if n == 0 {
        return false;
    }
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    for &(f, t) in edges {
        if f != t {
            g.add_edge((f as u32).into(), (t as u32).into(), ());
        }
    }
    let cond = condensation(g, true);
    let sources = cond
        .node_indices()
        .filter(|&c| {
            cond.neighbors_directed(c, petgraph::Direction::Incoming)
                .next()
                .is_none()
        })
        .count();
    sources == 1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail(String),
    Unverified(String),
    NotApplicable,
}

impl CheckStatus {
    pub fn passed(&self) -> bool {
        matches!(self, CheckStatus::Pass)
    }
    pub fn failed(&self) -> bool {
        matches!(self, CheckStatus::Fail(_))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphChecks {
    /// Every honest agent has at least `2b + 1` in-neighbors.
    pub degree: CheckStatus,
    /// Minimum honest in-degree exceeds `|H|/2 + 2b - 1` (cluster graphs only).
    pub tracker: CheckStatus,
    /// Every reduced graph has a nonempty source component.
    pub reduced: CheckStatus,
    /// Number of distinct reduced graphs (saturating).
    pub reduced_graph_count: u128,
    pub reduced_graphs_checked: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub clusters: Vec<GraphChecks>,
    pub global: GraphChecks,
    /// Clusters (and the global graph) holding more Byzantine agents than
    /// their trim budget. Allowed, since budgets are what honest agents
    /// assume, but nothing is then guaranteed.
    pub over_budget: Vec<String>,
}

impl ValidationReport {
    pub fn all(&self) -> impl Iterator<Item = &GraphChecks> {
        self.clusters.iter().chain(std::iter::once(&self.global))
    }

    pub fn any_failed(&self) -> bool {
        self.all()
            .any(|c| c.degree.failed() || c.tracker.failed() || c.reduced.failed())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = self.over_budget.clone();
        let mut push = |scope: String, name: &str, st: &CheckStatus| match st {
            CheckStatus::Fail(m) => out.push(format!("{scope}: {name} check failed: {m}")),
            CheckStatus::Unverified(m) => {
                out.push(format!("{scope}: {name} check not verified: {m}"))
            }
            _ => {}
        };
        for (i, c) in self.clusters.iter().enumerate() {
            let scope = format!("cluster {}", i + 1);
            push(scope.clone(), "degree", &c.degree);
            push(scope.clone(), "tracker", &c.tracker);
            push(scope, "reduced-graph", &c.reduced);
        }
        push("global".into(), "degree", &self.global.degree);
        push("global".into(), "reduced-graph", &self.global.reduced);
        out
    }
}

/// Redundancy checks of one graph given as in-neighbor sets over `0..n`.
pub fn check_graph(
    in_sets: &[BTreeSet<usize>],
    byzantine: &BTreeSet<usize>,
    budget: usize,
    tracker_condition: bool,
    exhaustive_limit: usize,
    seed: u64,
) -> GraphChecks {
    let n = in_sets.len();
    let honest: Vec<usize> = (0..n).filter(|v| !byzantine.contains(v)).collect();

    // with no trimming budget the check is vacuous: the self value alone is kept
    let need = if budget == 0 { 0 } else { 2 * budget + 1 };
    let short: Vec<String> = honest
        .iter()
        .filter(|&&v| in_sets[v].len() < need)
        .map(|&v| format!("node {} has in-degree {}", v + 1, in_sets[v].len()))
        .collect();
    let degree = if short.is_empty() {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail(format!("need >= {need}; {}", short.join(", ")))
    };

    let tracker = if !tracker_condition {
        CheckStatus::NotApplicable
    } else {
        let min_deg = honest.iter().map(|&v| in_sets[v].len()).min().unwrap_or(0);
        let bound = honest.len() as f64 / 2.0 + 2.0 * budget as f64 - 1.0;
        if (min_deg as f64) > bound {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail(format!(
                "min honest in-degree {min_deg} <= |H|/2 + 2b - 1 = {bound}"
            ))
        }
    };

    // reduced graphs live on the honest nodes only, relabelled 0..h
    let mut index = vec![usize::MAX; n];
    for (k, &v) in honest.iter().enumerate() {
        index[v] = k;
    }
    let honest_in: Vec<Vec<usize>> = honest
        .iter()
        .map(|&v| {
            in_sets[v]
                .iter()
                .filter(|s| !byzantine.contains(s))
                .map(|&s| index[s])
                .collect()
        })
        .collect();
    let option_counts: Vec<u128> = honest_in
        .iter()
        .map(|senders| subsets_up_to_count(senders.len(), budget))
        .collect();
    let count = option_counts.iter().fold(1u128, |acc, &o| acc.saturating_mul(o));

    let build = |removed: &[&[usize]]| -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (v, senders) in honest_in.iter().enumerate() {
            for (pos, &s) in senders.iter().enumerate() {
                if !removed[v].contains(&pos) {
                    edges.push((s, v));
                }
            }
        }
        edges
    };

    let h = honest.len();
    let (reduced, checked) = if count <= exhaustive_limit as u128 {
        // every node has at most `exhaustive_limit` options here
        let removal_options: Vec<Vec<Vec<usize>>> = honest_in
            .iter()
            .map(|senders| subsets_up_to(senders.len(), budget))
            .collect();
        let mut choice = vec![0usize; h];
        let mut checked = 0usize;
        let mut bad = None;
        loop {
            checked += 1;
            let removed: Vec<&[usize]> = (0..h).map(|v| &removal_options[v][choice[v]][..]).collect();
            if !has_source_component(h, &build(&removed)) {
                bad = Some(describe_removal(&honest, &honest_in, &removed));
                break;
            }
            // mixed-radix increment
            let mut k = 0;
            while k < h {
                choice[k] += 1;
                if choice[k] < removal_options[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == h {
                break;
            }
        }
        match bad {
            None => (CheckStatus::Pass, checked),
            Some(m) => (CheckStatus::Fail(m), checked),
        }
    } else {
        let mut r = rng::stream(seed, Purpose::Topology, n as u64, budget as u64);
        let mut bad = None;
        let mut checked = 0;
        for _ in 0..exhaustive_limit {
            let choice: Vec<Vec<usize>> = honest_in
                .iter()
                .map(|senders| random_subset_up_to(senders.len(), budget, &mut r))
                .collect();
            checked += 1;
            let removed: Vec<&[usize]> = choice.iter().map(|c| &c[..]).collect();
            if !has_source_component(h, &build(&removed)) {
                bad = Some(describe_removal(&honest, &honest_in, &removed));
                break;
            }
        }
        match bad {
            Some(m) => (CheckStatus::Fail(m), checked),
            None => (
                CheckStatus::Unverified(format!(
                    "combinatorial: {count} reduced graphs exceed the limit {exhaustive_limit}; \
                     {checked} random samples all had a source component"
                )),
                checked,
            ),
        }
    };

    GraphChecks {
        degree,
        tracker,
        reduced,
        reduced_graph_count: count,
        reduced_graphs_checked: checked,
    }
}

fn describe_removal(honest: &[usize], honest_in: &[Vec<usize>], removed: &[&[usize]]) -> String {
    let mut parts = Vec::new();
    for (v, senders) in honest_in.iter().enumerate() {
        for &pos in removed[v] {
            parts.push(format!("{}->{}", honest[senders[pos]] + 1, honest[v] + 1));
        }
    }
    format!(
        "reduced graph without a source component after removing edges [{}]",
        parts.join(", ")
    )
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Number of subsets of `0..len` with at most `k` elements.
fn subsets_up_to_count(len: usize, k: usize) -> u128 {
    (0..=k.min(len)).fold(0u128, |acc, j| acc.saturating_add(binomial(len, j)))
}

/// Uniform draw among the subsets of `0..len` with at most `k` elements.
fn random_subset_up_to(len: usize, k: usize, r: &mut impl Rng) -> Vec<usize> {
    let total = subsets_up_to_count(len, k);
    let mut pick = (r.random::<u128>()) % total.max(1);
    let mut size = 0;
    for j in 0..=k.min(len) {
        let c = binomial(len, j);
        if pick < c {
            size = j;
            break;
        }
        pick -= c;
    }
    let mut v = rand::seq::index::sample(r, len, size).into_vec();
    v.sort_unstable();
    v
}

/// All subsets of `0..len` with at most `k` elements, smallest first.
fn subsets_up_to(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..k.min(len) {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&l: &usize| l + 1);
            for e in start..len {
                let mut t = s.clone();
                t.push(e);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Degree, tracker and reduced-graph checks for every cluster graph and the
/// global graph. Reduced graphs are enumerated exhaustively when there are at
/// most `exhaustive_limit` of them, otherwise `exhaustive_limit` random ones
/// are sampled and the check is reported as unverified.
pub fn validate_redundancy(topo: &ClusterTopology, exhaustive_limit: usize) -> ValidationReport {
    let clusters = (0..topo.num_clusters())
        .map(|i| {
            let byz: BTreeSet<usize> = topo.byzantine_members(i).into_iter().collect();
            check_graph(
                &topo.cluster_in[i],
                &byz,
                topo.b_cluster[i],
                true,
                exhaustive_limit,
                i as u64,
            )
        })
        .collect();
    let global = check_graph(
        &topo.global_in,
        &topo.byzantine,
        topo.b_global,
        false,
        exhaustive_limit,
        u64::MAX,
    );
    let mut over_budget = Vec::new();
    for i in 0..topo.num_clusters() {
        let byz = topo.byzantine_members(i).len();
        if byz > topo.b_cluster[i] {
            over_budget.push(format!(
                "cluster {} has {byz} Byzantine agents but trim budget {}",
                i + 1,
                topo.b_cluster[i]
            ));
        }
    }
    if topo.byzantine.len() > topo.b_global {
        over_budget.push(format!(
            "{} Byzantine agents but global trim budget {}",
            topo.byzantine.len(),
            topo.b_global
        ));
    }
    ValidationReport {
        clusters,
        global,
        over_budget,
    }
}

/// Shuffled list of `count` distinct agents drawn from `0..n` (used by preset
/// builders to place Byzantine agents reproducibly).
pub fn sample_distinct(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, Purpose::Topology, 0, 0);
    all.shuffle(&mut r);
    all.truncate(count);
    all
}
