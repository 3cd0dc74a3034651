//! Stochastic online multi-cluster games.
//!
//! [`Game`] is the interface the round engine, the variance-reduction
//! estimators and the equilibrium oracle are written against. Agents are
//! addressed by flat index (cluster offset + member); decisions are stacked
//! into one vector of length `n * d`.
//!
//! [`CommodityMarketGame`] is the shipped benchmark: subsidiaries grouped into
//! parent companies deliver quantities to `m` markets with a random linear
//! inverse demand and a random shared market capacity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::{self, Purpose};
use crate::topology::AgentId;

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Domain("box bounds of different length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Config(format!(
                "box needs finite lower <= upper, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Largest coordinate magnitude of any point in the box.
    pub fn radius(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.upper)
            .fold(0.0, |r, v| r.max(v.abs()))
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
            .collect()
    }
}

/// Euclidean projection onto a box: a componentwise clamp.
pub fn project_box(v: &[f64], b: &BoxSet) -> Result<Vec<f64>> {
    check_len("project_box", v.len(), b.dim())?;
    Ok(v.iter()
        .zip(b.lower.iter().zip(&b.upper))
        .map(|(x, (l, u))| x.clamp(*l, *u))
        .collect())
}

/// Scalar distribution with a known mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarDist {
    Uniform { center: f64, half_width: f64 },
    Gaussian { center: f64, std: f64 },
    Constant { value: f64 },
}

impl ScalarDist {
    pub fn mean(&self) -> f64 {
        match *self {
            ScalarDist::Uniform { center, .. } | ScalarDist::Gaussian { center, .. } => center,
            ScalarDist::Constant { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ScalarDist::Uniform { half_width, .. } => half_width * half_width / 3.0,
            ScalarDist::Gaussian { std, .. } => std * std,
            ScalarDist::Constant { .. } => 0.0,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ScalarDist::Uniform { center, half_width } if half_width > 0.0 => {
                rng.random_range(center - half_width..=center + half_width)
            }
            ScalarDist::Gaussian { center, std } if std > 0.0 => Normal::new(center, std)
                .expect("std validated positive")
                .sample(rng),
            _ => self.mean(),
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            ScalarDist::Uniform { center, half_width } => center.is_finite() && half_width >= 0.0,
            ScalarDist::Gaussian { center, std } => center.is_finite() && std >= 0.0,
            ScalarDist::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{what}: invalid distribution {self:?}")))
        }
    }
}

/// Cluster sizes and flat-index offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    cluster_of: Vec<usize>,
}

impl Layout {
    pub fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut cluster_of = Vec::new();
        let mut acc = 0;
        for (i, &s) in sizes.iter().enumerate() {
            offsets.push(acc);
            acc += s;
            cluster_of.extend(std::iter::repeat_n(i, s));
        }
        Self {
            sizes: sizes.to_vec(),
            offsets,
            cluster_of,
        }
    }
    pub fn n(&self) -> usize {
        self.cluster_of.len()
    }
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
    pub fn offset(&self, cluster: usize) -> usize {
        self.offsets[cluster]
    }
    pub fn cluster_of(&self, flat: usize) -> usize {
        self.cluster_of[flat]
    }
    pub fn agent(&self, flat: usize) -> AgentId {
        let c = self.cluster_of[flat];
        AgentId::new(c, flat - self.offsets[c])
    }
    pub fn members(&self, cluster: usize) -> std::ops::Range<usize> {
        self.offsets[cluster]..self.offsets[cluster] + self.sizes[cluster]
    }
}

/// A stochastic online multi-cluster game. `x` arguments are stacked
/// decisions of length `n * d`; `owner` and `wrt` are flat agent indices.
pub trait Game: Send + Sync {
    fn layout(&self) -> &Layout;
    /// Decision dimension per agent.
    fn dim(&self) -> usize;
    /// Number of coupled constraints.
    fn constraint_dim(&self) -> usize;
    fn box_set(&self, agent: usize) -> &BoxSet;

    fn sample_theta(&self, cluster: usize, t: usize, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn sample_omega(&self, t: usize, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn theta_mean(&self, cluster: usize, t: usize) -> Vec<f64>;
    fn omega_mean(&self, t: usize) -> Vec<f64>;

    fn local_cost(&self, owner: usize, x: &[f64], theta: &[f64], t: usize) -> Result<f64>;
    /// Gradient of `owner`'s stochastic cost with respect to `wrt`'s block.
    fn local_cost_grad(
        &self,
        owner: usize,
        wrt: usize,
        x: &[f64],
        theta: &[f64],
        t: usize,
    ) -> Result<Vec<f64>>;

    fn constraint_value(&self, x: &[f64], omega: &[f64], t: usize) -> Result<Vec<f64>>;
    /// `m x d` Jacobian of the constraint with respect to `wrt`'s block.
    fn constraint_grad(&self, wrt: usize, x: &[f64], omega: &[f64], t: usize) -> Result<Matrix>;

    fn expected_cost(&self, owner: usize, x: &[f64], t: usize) -> Result<f64>;
    fn expected_cost_grad(&self, owner: usize, wrt: usize, x: &[f64], t: usize) -> Result<Vec<f64>>;
    fn expected_constraint(&self, x: &[f64], t: usize) -> Result<Vec<f64>>;
    fn expected_constraint_grad(&self, wrt: usize, x: &[f64], t: usize) -> Result<Matrix>;

    fn n(&self) -> usize {
        self.layout().n()
    }

    fn block<'a>(&self, x: &'a [f64], agent: usize) -> &'a [f64] {
        let d = self.dim();
        &x[agent * d..(agent + 1) * d]
    }

    /// Radius bounding every coordinate of every feasible decision.
    fn radius(&self) -> f64 {
        (0..self.n()).fold(0.0, |r, a| r.max(self.box_set(a).radius()))
    }

    /// Expected cost of cluster `c`: mean of the honest members' expected costs.
    fn cluster_cost(&self, cluster: usize, honest: &[bool], x: &[f64], t: usize) -> Result<f64> {
        let members: Vec<usize> = self.layout().members(cluster).filter(|&a| honest[a]).collect();
        let mut s = 0.0;
        for &j in &members {
            s += self.expected_cost(j, x, t)?;
        }
        Ok(s / members.len() as f64)
    }

    /// Pseudogradient `col(∇_{x_iq} F_i(x))` where `F_i` averages the expected
    /// costs of the honest members of cluster `i`.
    fn pseudogradient(&self, x: &[f64], honest: &[bool], t: usize) -> Result<Vec<f64>> {
        let d = self.dim();
        check_len("pseudogradient x", x.len(), self.n() * d)?;
        let layout = self.layout();
        let mut out = vec![0.0; self.n() * d];
        for c in 0..layout.sizes().len() {
            let owners: Vec<usize> = layout.members(c).filter(|&a| honest[a]).collect();
            let w = 1.0 / owners.len() as f64;
            for q in layout.members(c) {
                for &j in &owners {
                    let g = self.expected_cost_grad(j, q, x, t)?;
                    for (o, gv) in out[q * d..(q + 1) * d].iter_mut().zip(&g) {
                        *o += w * gv;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// How subsidiaries participate in markets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Participation {
    /// `A_ij = I` for every agent (needs `m == d`).
    Identity,
    /// One `m x d` 0/1 matrix shared by every agent.
    Shared { matrix: Vec<Vec<f64>> },
    /// One `m x d` matrix per agent in flat order.
    PerAgent { matrices: Vec<Vec<Vec<f64>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommodityParams {
    pub cluster_sizes: Vec<usize>,
    /// Commodities per subsidiary.
    pub d: usize,
    /// Markets.
    pub m: usize,
    pub participation: Participation,
    /// Price intercepts `P̄`, one per market.
    pub price_intercept: Vec<f64>,
    /// Market capacities; the constraint is `A x <= ω * capacity`.
    pub capacity: Vec<f64>,
    /// Upper production bounds `X_ij` shared by every subsidiary (lower bound 0).
    pub box_upper: Vec<f64>,
    /// `Q_ij,t = (quad_offset + i + j + drift(t)) I` with one-based `i, j`.
    #[serde(default = "one")]
    pub quad_offset: f64,
    /// `[q_ij,t]_k = lin_scale * (k + i + j + drift(t))`; the `k` term is
    /// dropped when `lin_coordinate_index` is false.
    #[serde(default = "tenth")]
    pub lin_scale: f64,
    #[serde(default = "yes")]
    pub lin_coordinate_index: bool,
    /// `drift(t) = t^-5` when true, `0` otherwise.
    #[serde(default = "yes")]
    pub time_varying: bool,
    /// Distribution of each diagonal price slope `d_k(θ)`.
    pub price_slope: ScalarDist,
    /// Distribution of the capacity scaling `ω_t`.
    pub omega: ScalarDist,
}

fn one() -> f64 {
    1.0
}
fn tenth() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}

/// The commodity market benchmark. Each subsidiary's cost is
/// `xᵀQx + qᵀx − (P̄ − D(θ) A x)ᵀ A_ij x`, the shared constraint is
/// `A x − ω · capacity <= 0`.
#[derive(Debug, Clone)]
pub struct CommodityMarketGame {
    params: CommodityParams,
    layout: Layout,
    participation: Vec<Matrix>,
    boxes: Vec<BoxSet>,
}

impl CommodityMarketGame {
    pub fn new(params: CommodityParams) -> Result<Self> {
        let layout = Layout::new(&params.cluster_sizes);
        let n = layout.n();
        let (d, m) = (params.d, params.m);
        if n == 0 || d == 0 || m == 0 {
            return Err(Error::Config("commodity game needs n, d, m > 0".into()));
        }
        for (what, len) in [
            ("price_intercept", params.price_intercept.len()),
            ("capacity", params.capacity.len()),
        ] {
            if len != m {
                return Err(Error::Config(format!("{what} has length {len}, expected m = {m}")));
            }
        }
        if params.box_upper.len() != d {
            return Err(Error::Config(format!(
                "box_upper has length {}, expected d = {d}",
                params.box_upper.len()
            )));
        }
        params.price_slope.validate("price_slope")?;
        params.omega.validate("omega")?;

        let check = |mat: &Matrix| -> Result<()> {
            if mat.rows != m || mat.cols != d {
                return Err(Error::Config(format!(
                    "participation matrix is {}x{}, expected {m}x{d}",
                    mat.rows, mat.cols
                )));
            }
            Ok(())
        };
        let participation = match &params.participation {
            Participation::Identity => {
                if m != d {
                    return Err(Error::Config(format!(
                        "identity participation needs m == d (m = {m}, d = {d})"
                    )));
                }
                vec![Matrix::identity(d); n]
            }
            Participation::Shared { matrix } => {
                let mat = Matrix::from_rows(matrix)
                    .ok_or_else(|| Error::Config("ragged participation matrix".into()))?;
                check(&mat)?;
                vec![mat; n]
            }
            Participation::PerAgent { matrices } => {
                if matrices.len() != n {
                    return Err(Error::Config(format!(
                        "{} participation matrices for {n} agents",
                        matrices.len()
                    )));
                }
                matrices
                    .iter()
                    .map(|rows| {
                        let mat = Matrix::from_rows(rows)
                            .ok_or_else(|| Error::Config("ragged participation matrix".into()))?;
                        check(&mat)?;
                        Ok(mat)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let b = BoxSet::new(vec![0.0; d], params.box_upper.clone())?;
        let boxes = vec![b; n];
        Ok(Self {
            params,
            layout,
            participation,
            boxes,
        })
    }

    pub fn params(&self) -> &CommodityParams {
        &self.params
    }

    pub fn participation(&self, agent: usize) -> &Matrix {
        &self.participation[agent]
    }

    fn drift(&self, t: usize) -> f64 {
        if self.params.time_varying {
            (t as f64).powi(-5)
        } else {
            0.0
        }
    }

    /// Diagonal entry of `Q_ij,t`.
    pub fn quad_coef(&self, agent: usize, t: usize) -> f64 {
        let a = self.layout.agent(agent);
        self.params.quad_offset + (a.cluster + 1) as f64 + (a.member + 1) as f64 + self.drift(t)
    }

    pub fn lin_coef(&self, agent: usize, t: usize) -> Vec<f64> {
        let a = self.layout.agent(agent);
        let base = (a.cluster + 1) as f64 + (a.member + 1) as f64 + self.drift(t);
        (0..self.params.d)
            .map(|k| {
                let idx = if self.params.lin_coordinate_index {
                    (k + 1) as f64
                } else {
                    0.0
                };
                self.params.lin_scale * (idx + base)
            })
            .collect()
    }

    /// `A x`
    pub fn aggregate(&self, x: &[f64]) -> Vec<f64> {
        let d = self.params.d;
        let mut out = vec![0.0; self.params.m];
        for (a, mat) in self.participation.iter().enumerate() {
            mat.mul_vec_acc(&x[a * d..(a + 1) * d], &mut out);
        }
        out
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        check_len("stacked decision", x.len(), self.layout.n() * self.params.d)
    }

    fn check_agent(&self, a: usize) -> Result<()> {
        if a >= self.layout.n() {
            return Err(Error::Domain(format!("agent index {a} out of range")));
        }
        Ok(())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_len("theta", theta.len(), self.params.m)
    }

    fn cost_with_slopes(&self, owner: usize, x: &[f64], slopes: &[f64], t: usize) -> Result<f64> {
        self.check_agent(owner)?;
        self.check_x(x)?;
        self.check_theta(slopes)?;
        let d = self.params.d;
        let xo = &x[owner * d..(owner + 1) * d];
        let q = self.quad_coef(owner, t);
        let lin = self.lin_coef(owner, t);
        let ax = self.aggregate(x);
        let mut aox = vec![0.0; self.params.m];
        self.participation[owner].mul_vec_acc(xo, &mut aox);
        let price: Vec<f64> = self
            .params
            .price_intercept
            .iter()
            .zip(slopes.iter().zip(&ax))
            .map(|(p, (s, a))| p - s * a)
            .collect();
        Ok(q * dot(xo, xo) + dot(&lin, xo) - dot(&price, &aox))
    }

    fn grad_with_slopes(
        &self,
        owner: usize,
        wrt: usize,
        x: &[f64],
        slopes: &[f64],
        t: usize,
    ) -> Result<Vec<f64>> {
        self.check_agent(owner)?;
        self.check_agent(wrt)?;
        self.check_x(x)?;
        self.check_theta(slopes)?;
        let (d, m) = (self.params.d, self.params.m);
        let xo = &x[owner * d..(owner + 1) * d];
        let a_o = &self.participation[owner];
        let a_w = &self.participation[wrt];
        // D A_o x_o
        let mut d_aox = vec![0.0; m];
        a_o.mul_vec_acc(xo, &mut d_aox);
        for (v, s) in d_aox.iter_mut().zip(slopes) {
            *v *= s;
        }
        let mut g = vec![0.0; d];
        a_w.tr_mul_vec_acc(&d_aox, &mut g);
        if owner == wrt {
            let q = self.quad_coef(owner, t);
            let lin = self.lin_coef(owner, t);
            let ax = self.aggregate(x);
            // D A x − P̄
            let r: Vec<f64> = ax
                .iter()
                .zip(slopes.iter().zip(&self.params.price_intercept))
                .map(|(a, (s, p))| s * a - p)
                .collect();
            a_o.tr_mul_vec_acc(&r, &mut g);
            for k in 0..d {
                g[k] += 2.0 * q * xo[k] + lin[k];
            }
        }
        Ok(g)
    }

    fn constraint_with_omega(&self, x: &[f64], omega: f64) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mut ax = self.aggregate(x);
        for (v, c) in ax.iter_mut().zip(&self.params.capacity) {
            *v -= omega * c;
        }
        Ok(ax)
    }
}

impl Game for CommodityMarketGame {
    fn layout(&self) -> &Layout {
        &self.layout
    }
    fn dim(&self) -> usize {
        self.params.d
    }
    fn constraint_dim(&self) -> usize {
        self.params.m
    }
    fn box_set(&self, agent: usize) -> &BoxSet {
        &self.boxes[agent]
    }

    fn sample_theta(&self, _cluster: usize, _t: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.params.m)
            .map(|_| self.params.price_slope.sample(rng))
            .collect()
    }

    fn sample_omega(&self, _t: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![self.params.omega.sample(rng)]
    }

    fn theta_mean(&self, _cluster: usize, _t: usize) -> Vec<f64> {
        vec![self.params.price_slope.mean(); self.params.m]
    }

    fn omega_mean(&self, _t: usize) -> Vec<f64> {
        vec![self.params.omega.mean()]
    }

    fn local_cost(&self, owner: usize, x: &[f64], theta: &[f64], t: usize) -> Result<f64> {
        self.cost_with_slopes(owner, x, theta, t)
    }

    fn local_cost_grad(
        &self,
        owner: usize,
        wrt: usize,
        x: &[f64],
        theta: &[f64],
        t: usize,
    ) -> Result<Vec<f64>> {
        self.grad_with_slopes(owner, wrt, x, theta, t)
    }

    fn constraint_value(&self, x: &[f64], omega: &[f64], _t: usize) -> Result<Vec<f64>> {
        check_len("omega", omega.len(), 1)?;
        self.constraint_with_omega(x, omega[0])
    }

    fn constraint_grad(&self, wrt: usize, _x: &[f64], _omega: &[f64], _t: usize) -> Result<Matrix> {
        self.check_agent(wrt)?;
        Ok(self.participation[wrt].clone())
    }

    fn expected_cost(&self, owner: usize, x: &[f64], t: usize) -> Result<f64> {
        let mean = self.theta_mean(self.layout.cluster_of(owner.min(self.layout.n() - 1)), t);
        self.cost_with_slopes(owner, x, &mean, t)
    }

    fn expected_cost_grad(&self, owner: usize, wrt: usize, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let mean = self.theta_mean(0, t);
        self.grad_with_slopes(owner, wrt, x, &mean, t)
    }

    fn expected_constraint(&self, x: &[f64], _t: usize) -> Result<Vec<f64>> {
        self.constraint_with_omega(x, self.params.omega.mean())
    }

    fn expected_constraint_grad(&self, wrt: usize, _x: &[f64], _t: usize) -> Result<Matrix> {
        self.check_agent(wrt)?;
        Ok(self.participation[wrt].clone())
    }

    fn pseudogradient(&self, x: &[f64], honest: &[bool], t: usize) -> Result<Vec<f64>> {
        self.check_x(x)?;
        check_len("honest mask", honest.len(), self.layout.n())?;
        let (d, m) = (self.params.d, self.params.m);
        let slope = self.params.price_slope.mean();
        let ax = self.aggregate(x);
        // D̄ A x − P̄
        let r: Vec<f64> = ax
            .iter()
            .zip(&self.params.price_intercept)
            .map(|(a, p)| slope * a - p)
            .collect();
        let mut out = vec![0.0; self.layout.n() * d];
        for c in 0..self.layout.sizes().len() {
            let members = self.layout.members(c);
            let owners: Vec<usize> = members.clone().filter(|&a| honest[a]).collect();
            if owners.is_empty() {
                return Err(Error::Domain(format!("cluster {} has no honest agent", c + 1)));
            }
            let w = 1.0 / owners.len() as f64;
            // D̄ Σ_{j honest} A_j x_j
            let mut s = vec![0.0; m];
            for &j in &owners {
                self.participation[j].mul_vec_acc(&x[j * d..(j + 1) * d], &mut s);
            }
            for v in s.iter_mut() {
                *v *= slope;
            }
            for q in members {
                let mut g = vec![0.0; d];
                self.participation[q].tr_mul_vec_acc(&s, &mut g);
                if honest[q] {
                    self.participation[q].tr_mul_vec_acc(&r, &mut g);
                    let qc = self.quad_coef(q, t);
                    let lin = self.lin_coef(q, t);
                    for k in 0..d {
                        g[k] += 2.0 * qc * x[q * d + k] + lin[k];
                    }
                }
                for (o, gv) in out[q * d..(q + 1) * d].iter_mut().zip(&g) {
                    *o = w * gv;
                }
            }
        }
        Ok(out)
    }
}

/// Sampled strong-monotonicity and Lipschitz constants of the pseudogradient.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonotonicityProbe {
    /// Minimum of `⟨F(x)−F(y), x−y⟩ / ‖x−y‖²` over the sampled pairs.
    pub sigma_hat: f64,
    /// Maximum of `‖F(x)−F(y)‖ / ‖x−y‖` over the sampled pairs.
    pub lipschitz_hat: f64,
}

/// Probes the pseudogradient on random pairs drawn from the boxes. Only the
/// honest blocks differ between the two points of a pair: the blocks of
/// non-honest agents do not enter any honest cost through their own
/// gradient, so the pseudogradient is not monotone along them.
pub fn probe_monotonicity(
    game: &dyn Game,
    honest: &[bool],
    t: usize,
    pairs: usize,
    seed: u64,
) -> Result<MonotonicityProbe> {
    let d = game.dim();
    let n = game.n();
    let mut sigma = f64::INFINITY;
    let mut lip: f64 = 0.0;
    for p in 0..pairs {
        let mut r = rng::stream(seed, Purpose::Probe, p as u64, t as u64);
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n * d);
        for a in 0..n {
            let bx = game.box_set(a).sample(&mut r);
            if honest[a] {
                x.extend_from_slice(&bx);
                y.extend(game.box_set(a).sample(&mut r));
            } else {
                x.extend_from_slice(&bx);
                y.extend_from_slice(&bx);
            }
        }
        let fx = game.pseudogradient(&x, honest, t)?;
        let fy = game.pseudogradient(&y, honest, t)?;
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        let nn = dot(&dx, &dx);
        if nn == 0.0 {
            continue;
        }
        sigma = sigma.min(dot(&df, &dx) / nn);
        lip = lip.max((dot(&df, &df) / nn).sqrt());
    }
    Ok(MonotonicityProbe {
        sigma_hat: sigma,
        lipschitz_hat: lip,
    })
}
