#![allow(dead_code)]

use dbrosa_core::game::{BoxSet, CommodityParams, Game, Layout, Participation, ScalarDist};
use dbrosa_core::linalg::Matrix;
use dbrosa_core::topology::{AgentId, ClusterTopology};
use dbrosa_core::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn market(sizes: Vec<usize>, d: usize) -> CommodityParams {
    CommodityParams {
        cluster_sizes: sizes,
        d,
        m: d,
        participation: Participation::Identity,
        price_intercept: (0..d).map(|k| 2.0 + k as f64).collect(),
        capacity: vec![1.0; d],
        box_upper: vec![20.0; d],
        quad_offset: 1.0,
        lin_scale: 0.1,
        lin_coordinate_index: true,
        time_varying: true,
        price_slope: ScalarDist::Uniform {
            center: 0.8,
            half_width: 0.1,
        },
        omega: ScalarDist::Uniform {
            center: 2.0,
            half_width: 0.2,
        },
    }
}

/// Complete graphs everywhere.
pub fn complete_topology(sizes: &[usize], byzantine: &[usize], b: usize, b_cluster: Vec<usize>) -> ClusterTopology {
    let flat: Vec<AgentId> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| (0..s).map(move |m| AgentId::new(c, m)))
        .collect();
    let mut global = Vec::new();
    for &u in &flat {
        for &v in &flat {
            if u != v {
                global.push((u, v));
            }
        }
    }
    let clusters: Vec<Vec<(usize, usize)>> = sizes
        .iter()
        .map(|&s| {
            (0..s)
                .flat_map(|u| (0..s).filter(move |&v| v != u).map(move |v| (u, v)))
                .collect()
        })
        .collect();
    let byz: Vec<AgentId> = byzantine.iter().map(|&a| flat[a]).collect();
    ClusterTopology::new(sizes.to_vec(), &global, &clusters, &byz, b, b_cluster).unwrap()
}

pub fn interior_point(game: &dyn Game, margin: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = Vec::with_capacity(game.n() * game.dim());
    for a in 0..game.n() {
        let b = game.box_set(a);
        for k in 0..game.dim() {
            let (lo, hi) = (b.lower[k] + margin, b.upper[k] - margin);
            x.push(rng.random_range(lo..hi));
        }
    }
    x
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    diff / scale
}

/// Two single-agent clusters with identical costs
/// `f_i = c·x_i² − (p − s·(x_1 + x_2))·x_i` on `[0, hi]` and a loose shared
/// capacity `x_1 + x_2 <= cap`. The symmetric equilibrium is `p / (2c + 3s)`.
pub struct SymmetricDuopoly {
    pub c: f64,
    pub p: f64,
    pub s: f64,
    pub cap: f64,
    layout: Layout,
    boxes: Vec<BoxSet>,
}

impl SymmetricDuopoly {
    pub fn new(c: f64, p: f64, s: f64, hi: f64, cap: f64) -> Self {
        let b = BoxSet::new(vec![0.0], vec![hi]).unwrap();
        Self {
            c,
            p,
            s,
            cap,
            layout: Layout::new(&[1, 1]),
            boxes: vec![b.clone(), b],
        }
    }

    pub fn cost(&self, mine: f64, other: f64) -> f64 {
        self.c * mine * mine - (self.p - self.s * (mine + other)) * mine
    }
}

impl Game for SymmetricDuopoly {
    fn layout(&self) -> &Layout {
        &self.layout
    }
    fn dim(&self) -> usize {
        1
    }
    fn constraint_dim(&self) -> usize {
        1
    }
    fn box_set(&self, agent: usize) -> &BoxSet {
        &self.boxes[agent]
    }
    fn sample_theta(&self, _: usize, _: usize, _: &mut ChaCha8Rng) -> Vec<f64> {
        vec![]
    }
    fn sample_omega(&self, _: usize, _: &mut ChaCha8Rng) -> Vec<f64> {
        vec![]
    }
    fn theta_mean(&self, _: usize, _: usize) -> Vec<f64> {
        vec![]
    }
    fn omega_mean(&self, _: usize) -> Vec<f64> {
        vec![]
    }
    fn local_cost(&self, owner: usize, x: &[f64], _: &[f64], t: usize) -> Result<f64> {
        self.expected_cost(owner, x, t)
    }
    fn local_cost_grad(&self, owner: usize, wrt: usize, x: &[f64], _: &[f64], t: usize) -> Result<Vec<f64>> {
        self.expected_cost_grad(owner, wrt, x, t)
    }
    fn constraint_value(&self, x: &[f64], _: &[f64], t: usize) -> Result<Vec<f64>> {
        self.expected_constraint(x, t)
    }
    fn constraint_grad(&self, wrt: usize, x: &[f64], _: &[f64], t: usize) -> Result<Matrix> {
        self.expected_constraint_grad(wrt, x, t)
    }
    fn expected_cost(&self, owner: usize, x: &[f64], _: usize) -> Result<f64> {
        Ok(self.cost(x[owner], x[1 - owner]))
    }
    fn expected_cost_grad(&self, owner: usize, wrt: usize, x: &[f64], _: usize) -> Result<Vec<f64>> {
        let mine = x[owner];
        let g = if owner == wrt {
            2.0 * self.c * mine - self.p + self.s * (x[0] + x[1]) + self.s * mine
        } else {
            self.s * mine
        };
        Ok(vec![g])
    }
    fn expected_constraint(&self, x: &[f64], _: usize) -> Result<Vec<f64>> {
        Ok(vec![x[0] + x[1] - self.cap])
    }
    fn expected_constraint_grad(&self, _: usize, _: &[f64], _: usize) -> Result<Matrix> {
        Ok(Matrix::identity(1))
    }
}
