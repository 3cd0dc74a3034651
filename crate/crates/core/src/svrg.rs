//! Variance reduction: the snapshot rule, the per-agent direction estimators
//! used by the round engine, and a standalone mod-SVRG optimizer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::game::Game;
use crate::linalg::Matrix;

/// Snapshot period `s(t)`. The snapshot is refreshed when `t mod s(t) == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnapshotPolicy {
    Constant { period: usize },
    /// `s(t) = max(1, ceil(s0 * rho^t))`, `0 < rho < 1`.
    Geometric { s0: f64, rho: f64 },
}

impl Default for SnapshotPolicy {
    fn default() -> Self {
        SnapshotPolicy::Constant { period: 1 }
    }
}

impl SnapshotPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SnapshotPolicy::Constant { period } if period >= 1 => Ok(()),
            SnapshotPolicy::Geometric { s0, rho } if s0 >= 1.0 && rho > 0.0 && rho < 1.0 => Ok(()),
            _ => Err(Error::Config(format!(
                "snapshot policy {self:?} needs period >= 1, or s0 >= 1 and 0 < rho < 1"
            ))),
        }
    }

    pub fn period(&self, t: usize) -> usize {
        match *self {
            SnapshotPolicy::Constant { period } => period.max(1),
            SnapshotPolicy::Geometric { s0, rho } => {
                let s = (s0 * rho.powi(t.min(i32::MAX as usize) as i32)).ceil();
                if s.is_finite() && s > 1.0 {
                    s as usize
                } else {
                    1
                }
            }
        }
    }

    pub fn refreshes(&self, t: usize) -> bool {
        t % self.period(t) == 0
    }
}

pub fn snapshot_update(t: usize, policy: &SnapshotPolicy, current: &[f64], previous: &[f64]) -> Vec<f64> {
    if policy.refreshes(t) {
        current.to_vec()
    } else {
        previous.to_vec()
    }
}

/// Variance-reduced gradient contribution of `owner`'s cost along `wrt`'s
/// block: `∇f(x, θ) − ∇f(τ, θ) + ∇E[f(τ, ·)]`.
pub fn direction_d1(
    game: &dyn Game,
    owner: usize,
    wrt: usize,
    estimate: &[f64],
    snapshot: &[f64],
    theta: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    let mut out = game.local_cost_grad(owner, wrt, estimate, theta, t)?;
    let at_snap = game.local_cost_grad(owner, wrt, snapshot, theta, t)?;
    let exact = game.expected_cost_grad(owner, wrt, snapshot, t)?;
    for ((o, s), e) in out.iter_mut().zip(&at_snap).zip(&exact) {
        *o += e - s;
    }
    Ok(out)
}

/// Variance-reduced constraint value and its Jacobian with respect to
/// `agent`'s block: `g(x, ω) − g(τ, ω) + G(τ)` and `∇g(x, ω) − ∇g(τ, ω) + ∇G(τ)`.
pub fn direction_d2_d3(
    game: &dyn Game,
    agent: usize,
    estimate: &[f64],
    snapshot: &[f64],
    omega: &[f64],
    t: usize,
) -> Result<(Vec<f64>, Matrix)> {
    let mut y = game.constraint_value(estimate, omega, t)?;
    let at_snap = game.constraint_value(snapshot, omega, t)?;
    let exact = game.expected_constraint(snapshot, t)?;
    for ((o, s), e) in y.iter_mut().zip(&at_snap).zip(&exact) {
        *o += e - s;
    }
    let jac = game
        .constraint_grad(agent, estimate, omega, t)?
        .sub(&game.constraint_grad(agent, snapshot, omega, t)?)
        .add(&game.expected_constraint_grad(agent, snapshot, t)?);
    Ok((y, jac))
}

/// A stochastic minimization problem `min_w E[f(w, ξ)]`.
pub trait SvrgProblem {
    type Sample;
    fn dim(&self) -> usize;
    /// Strong-convexity modulus of the expected objective.
    fn strong_convexity(&self) -> f64;
    /// Smoothness constant of every sample gradient.
    fn smoothness(&self) -> f64;
    fn sample(&self, rng: &mut ChaCha8Rng) -> Self::Sample;
    fn sample_grad(&self, w: &[f64], xi: &Self::Sample) -> Vec<f64>;
    fn full_grad(&self, w: &[f64]) -> Vec<f64>;
    /// `P(w) − P(w*)`.
    fn gap(&self, w: &[f64]) -> f64;
    fn minimizer(&self) -> Vec<f64>;
}

/// `P(w) = ½ Σ_k h_k (w_k − c_k)²` observed through
/// `f(w, ξ) = ½ Σ_k h_k u_k (w_k − c_k)² + ζᵀw` with `u_k` uniform on
/// `[1 − jitter, 1 + jitter]` and `ζ ~ N(0, noise_std² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProblem {
    pub curvature: Vec<f64>,
    pub center: Vec<f64>,
    pub jitter: f64,
    pub noise_std: f64,
}

pub struct QuadraticSample {
    scale: Vec<f64>,
    noise: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(curvature: Vec<f64>, center: Vec<f64>, jitter: f64, noise_std: f64) -> Result<Self> {
        if curvature.len() != center.len() || curvature.is_empty() {
            return Err(Error::Config("curvature and center must have equal nonzero length".into()));
        }
        if curvature.iter().any(|h| !(*h > 0.0)) || !(0.0..1.0).contains(&jitter) || noise_std < 0.0 {
            return Err(Error::Config(
                "quadratic needs positive curvature, 0 <= jitter < 1, noise_std >= 0".into(),
            ));
        }
        Ok(Self {
            curvature,
            center,
            jitter,
            noise_std,
        })
    }
}

impl SvrgProblem for QuadraticProblem {
    type Sample = QuadraticSample;

    fn dim(&self) -> usize {
        self.curvature.len()
    }
    fn strong_convexity(&self) -> f64 {
        self.curvature.iter().copied().fold(f64::INFINITY, f64::min)
    }
    fn smoothness(&self) -> f64 {
        self.curvature.iter().copied().fold(0.0, f64::max) * (1.0 + self.jitter)
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> QuadraticSample {
        let d = self.dim();
        let scale = (0..d)
            .map(|_| {
                if self.jitter > 0.0 {
                    rng.random_range(1.0 - self.jitter..=1.0 + self.jitter)
                } else {
                    1.0
                }
            })
            .collect();
        let noise = (0..d)
            .map(|_| {
                if self.noise_std > 0.0 {
                    self.noise_std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
                } else {
                    0.0
                }
            })
            .collect();
        QuadraticSample { scale, noise }
    }
    fn sample_grad(&self, w: &[f64], xi: &QuadraticSample) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.curvature[k] * xi.scale[k] * (w[k] - self.center[k]) + xi.noise[k])
            .collect()
    }
    fn full_grad(&self, w: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.curvature[k] * (w[k] - self.center[k]))
            .collect()
    }
    fn gap(&self, w: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| 0.5 * self.curvature[k] * (w[k] - self.center[k]).powi(2))
            .sum()
    }
    fn minimizer(&self) -> Vec<f64> {
        self.center.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvrgOption {
    /// Keep the last inner iterate.
    LastIterate,
    /// Keep an inner iterate chosen uniformly from `0..m_s`.
    RandomIterate,
}

/// How the epoch's full-gradient estimate is formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Batch {
    /// Use the exact full gradient (zero estimator noise).
    Exact,
    Samples(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrgParams {
    pub eta: f64,
    /// `m_s` per epoch; the last entry repeats if there are more epochs.
    pub epoch_lengths: Vec<usize>,
    pub batch: Batch,
    pub epochs: usize,
    pub option: SvrgOption,
}

impl SvrgParams {
    pub fn epoch_length(&self, s: usize) -> usize {
        let i = (s - 1).min(self.epoch_lengths.len() - 1);
        self.epoch_lengths[i]
    }
}

/// Contraction factor `α_s = 1/(γη(1−4Lη)m_s) + 4Lη/(1−4Lη)`.
pub fn contraction_factor(gamma: f64, smoothness: f64, eta: f64, m: usize) -> f64 {
    let k = 1.0 - 4.0 * smoothness * eta;
    1.0 / (gamma * eta * k * m as f64) + 4.0 * smoothness * eta / k
}

/// Noise term `β = ησ̃²/(1−4Lη)`.
pub fn noise_term(smoothness: f64, eta: f64, sigma_sq: f64) -> f64 {
    eta * sigma_sq / (1.0 - 4.0 * smoothness * eta)
}

#[derive(Debug, Clone)]
pub struct SvrgTrace {
    /// `w̃_s` for `s = 0..=epochs`.
    pub snapshots: Vec<Vec<f64>>,
    /// `P(w̃_s) − P*` for `s = 0..=epochs`.
    pub gaps: Vec<f64>,
    /// `‖μ̂_s − ∇P(w̃_{s−1})‖²` for `s = 1..=epochs`.
    pub estimator_sq_errors: Vec<f64>,
    /// `α_s` for `s = 1..=epochs`.
    pub alphas: Vec<f64>,
}

pub fn mod_svrg_run<P: SvrgProblem>(
    problem: &P,
    params: &SvrgParams,
    w0: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<SvrgTrace> {
    let d = problem.dim();
    check_len("mod-SVRG start", w0.len(), d)?;
    if params.epoch_lengths.is_empty() || params.epoch_lengths.contains(&0) {
        return Err(Error::Config("epoch lengths must be nonempty and positive".into()));
    }
    if let Batch::Samples(0) = params.batch {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let (gamma, l, eta) = (problem.strong_convexity(), problem.smoothness(), params.eta);
    if !(eta > 0.0 && eta < 1.0 / (4.0 * l)) {
        return Err(Error::Config(format!(
            "step size must satisfy 0 < eta < 1/(4L) = {}; got eta = {eta}",
            1.0 / (4.0 * l)
        )));
    }
    let mut alphas = Vec::with_capacity(params.epochs);
    for s in 1..=params.epochs {
        let a = contraction_factor(gamma, l, eta, params.epoch_length(s));
        if !(a < 1.0) {
            return Err(Error::Config(format!(
                "epoch {s}: alpha_s = 1/(gamma*eta*(1-4L*eta)*m_s) + 4L*eta/(1-4L*eta) = {a} is not < 1"
            )));
        }
        alphas.push(a);
    }

    let mut snap = w0.to_vec();
    let mut trace = SvrgTrace {
        snapshots: vec![snap.clone()],
        gaps: vec![problem.gap(&snap)],
        estimator_sq_errors: Vec::with_capacity(params.epochs),
        alphas,
    };
    for s in 1..=params.epochs {
        let exact = problem.full_grad(&snap);
        let mu = match params.batch {
            Batch::Exact => exact.clone(),
            Batch::Samples(b) => {
                let mut acc = vec![0.0; d];
                for _ in 0..b {
                    let xi = problem.sample(rng);
                    for (a, g) in acc.iter_mut().zip(problem.sample_grad(&snap, &xi)) {
                        *a += g;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= b as f64);
                acc
            }
        };
        trace
            .estimator_sq_errors
            .push(mu.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum());

        let m = params.epoch_length(s);
        let pick = match params.option {
            SvrgOption::RandomIterate => rng.random_range(0..m),
            SvrgOption::LastIterate => m,
        };
        let mut w = snap.clone();
        let mut chosen = if pick == 0 { Some(w.clone()) } else { None };
        for step in 1..=m {
            let xi = problem.sample(rng);
            let g_w = problem.sample_grad(&w, &xi);
            let g_s = problem.sample_grad(&snap, &xi);
            for k in 0..d {
                w[k] -= eta * (g_w[k] - g_s[k] + mu[k]);
            }
            if step == pick {
                chosen = Some(w.clone());
            }
        }
        snap = chosen.expect("picked iterate is within the epoch");
        trace.gaps.push(problem.gap(&snap));
        trace.snapshots.push(snap.clone());
    }
    Ok(trace)
}
