//! Step-size and mixing schedules.
//!
//! `mode = "theory"` enforces every exponent condition of the convergence
//! analysis and rejects configs that violate one. `mode = "tuned"` allows
//! gains and exponents outside those ranges, records which conditions fail,
//! and still rejects the conditions the update rules cannot live without
//! (`α ∈ (0, 1]`, `0 < δ < ζ < 1`, `0 < βη < ½`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    #[default]
    Theory,
    Tuned,
}

/// How `δ_t` is derived from `ζ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaRule {
    /// `δ_t = c (1 − ζ_t) / H_bound`, `0 < c < 1`; satisfies `H δ + ζ < 1`.
    Bound { fraction: f64 },
    /// `δ_t = κ ζ_t`, `0 < κ < 1`: a convex mixing weight that ignores the
    /// `H δ + ζ < 1` condition.
    Mixing { kappa: f64 },
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::Bound { fraction: 0.5 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    #[serde(default)]
    pub mode: ScheduleMode,
    /// `T` in the constant step sizes; defaults to the run length.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// `η_t = eta_gain · T^eta_exp`
    pub eta_exp: f64,
    /// `β_t = beta_gain · T^beta_exp`
    pub beta_exp: f64,
    /// `α_t = alpha_gain · t^a1` for `t <= t1`, `alpha_gain · T^a2` after.
    pub a1: f64,
    pub a2: f64,
    /// `γ_t = gamma_gain · t^b1` for `t <= t1`, `gamma_gain · T^b2` after.
    pub b1: f64,
    pub b2: f64,
    pub t1: usize,
    /// `ζ_t = 1 − (t + 1)^zeta_exp`
    pub zeta_exp: f64,
    /// Growth exponent `s ∈ [0, 1)` of the gradient drift; enters the bound on `b2`.
    #[serde(default)]
    pub drift_exp: f64,
    #[serde(default = "one")]
    pub alpha_gain: f64,
    #[serde(default = "one")]
    pub gamma_gain: f64,
    #[serde(default = "one")]
    pub eta_gain: f64,
    #[serde(default = "one")]
    pub beta_gain: f64,
    #[serde(default)]
    pub delta: DeltaRule,
}

impl ScheduleParams {
    /// Exponents satisfying every theory condition. The switch point is the
    /// earliest `t1` with `t1^(a1+b1) <= T^(a2+b2)`.
    pub fn theory_default(horizon: usize) -> Self {
        let (a1, a2, b1, b2) = (-1.4, -1.2, -2.4, -2.2);
        let t1 = (horizon as f64).powf((a2 + b2) / (a1 + b1)).ceil() as usize;
        Self {
            mode: ScheduleMode::Theory,
            horizon: Some(horizon),
            eta_exp: -1.1,
            beta_exp: -0.5,
            a1,
            a2,
            b1,
            b2,
            t1,
            zeta_exp: -2.0,
            drift_exp: 0.0,
            alpha_gain: 1.0,
            gamma_gain: 1.0,
            eta_gain: 1.0,
            beta_gain: 1.0,
            delta: DeltaRule::Bound { fraction: 0.5 },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleSet {
    params: ScheduleParams,
    horizon: usize,
    h_bound: usize,
    /// Theory conditions that do not hold (always empty in theory mode).
    pub violations: Vec<String>,
}

impl ScheduleSet {
    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn big_t(&self) -> f64 {
        self.horizon as f64
    }

    pub fn eta(&self, _t: usize) -> f64 {
        self.params.eta_gain * self.big_t().powf(self.params.eta_exp)
    }

    pub fn beta(&self, _t: usize) -> f64 {
        self.params.beta_gain * self.big_t().powf(self.params.beta_exp)
    }

    pub fn alpha(&self, t: usize) -> f64 {
        let p = &self.params;
        p.alpha_gain
            * if t <= p.t1 {
                (t as f64).powf(p.a1)
            } else {
                self.big_t().powf(p.a2)
            }
    }

    pub fn gamma(&self, t: usize) -> f64 {
        let p = &self.params;
        p.gamma_gain
            * if t <= p.t1 {
                (t as f64).powf(p.b1)
            } else {
                self.big_t().powf(p.b2)
            }
    }

    pub fn zeta(&self, t: usize) -> f64 {
        1.0 - ((t + 1) as f64).powf(self.params.zeta_exp)
    }

    pub fn delta(&self, t: usize) -> f64 {
        match self.params.delta {
            DeltaRule::Bound { fraction } => fraction * (1.0 - self.zeta(t)) / self.h_bound as f64,
            DeltaRule::Mixing { kappa } => kappa * self.zeta(t),
        }
    }
}

/// Builds and checks the schedules for `t ∈ [1, horizon]`. `h_bound` must be
/// at least the number of honest agents; the harness passes `n`.
pub fn make_schedules(params: &ScheduleParams, rounds: usize, h_bound: usize) -> Result<ScheduleSet> {
    let horizon = params.horizon.unwrap_or(rounds);
    if horizon == 0 || h_bound == 0 {
        return Err(Error::Config("schedule horizon and H bound must be positive".into()));
    }
    let p = params;
    let set = ScheduleSet {
        params: p.clone(),
        horizon,
        h_bound,
        violations: Vec::new(),
    };
    let mut theory = Vec::new();
    let mut hard = Vec::new();

    if !(p.eta_exp < -1.0) {
        theory.push(format!("eta exponent must be < -1 (got {})", p.eta_exp));
    }
    if !(p.beta_exp < -1.0 - p.eta_exp) {
        theory.push(format!(
            "beta exponent must be < -1 - eta = {} (got {})",
            -1.0 - p.eta_exp,
            p.beta_exp
        ));
    }
    if !(p.a1 < p.a2 && p.a2 < -1.0) {
        theory.push(format!("need a1 < a2 < -1 (got a1 = {}, a2 = {})", p.a1, p.a2));
    }
    let b_cap = (-2.0f64).min(-3.0 - 2.0 * p.eta_exp).min(-2.0 - 2.0 * p.drift_exp);
    if !(p.b1 < p.b2 && p.b2 < b_cap) {
        theory.push(format!(
            "need b1 < b2 < min(-2, -3 - 2 eta, -2 - 2 s) = {b_cap} (got b1 = {}, b2 = {})",
            p.b1, p.b2
        ));
    }
    if p.t1 < horizon && !(set.alpha(p.t1) * set.gamma(p.t1) <= set.alpha(p.t1 + 1) * set.gamma(p.t1 + 1)) {
        theory.push(format!(
            "alpha*gamma must not decrease at the switch t1 = {} ({} > {})",
            p.t1,
            set.alpha(p.t1) * set.gamma(p.t1),
            set.alpha(p.t1 + 1) * set.gamma(p.t1 + 1)
        ));
    }
    if !(p.zeta_exp < -1.0) {
        theory.push(format!("zeta exponent must be < -1 (got {})", p.zeta_exp));
    }
    if !(0.0..1.0).contains(&p.drift_exp) {
        theory.push(format!("drift exponent s must lie in [0, 1) (got {})", p.drift_exp));
    }
    for (name, g) in [
        ("alpha_gain", p.alpha_gain),
        ("gamma_gain", p.gamma_gain),
        ("eta_gain", p.eta_gain),
        ("beta_gain", p.beta_gain),
    ] {
        if !(g > 0.0 && g.is_finite()) {
            hard.push(format!("{name} must be positive and finite (got {g})"));
        } else if g != 1.0 {
            theory.push(format!("{name} = {g} scales a step size away from its power law"));
        }
    }
    match p.delta {
        DeltaRule::Bound { fraction } if !(fraction > 0.0 && fraction < 1.0) => {
            hard.push(format!("delta fraction must lie in (0, 1) (got {fraction})"))
        }
        DeltaRule::Mixing { kappa } if !(kappa > 0.0 && kappa < 1.0) => {
            hard.push(format!("delta kappa must lie in (0, 1) (got {kappa})"))
        }
        _ => {}
    }

    if hard.is_empty() {
        let be = set.beta(1) * set.eta(1);
        if !(be > 0.0 && be < 0.5) {
            hard.push(format!("need 0 < beta_t*eta_t < 1/2 (got {be})"));
        }
        let mut hd_reported = false;
        for t in 1..=horizon {
            let a = set.alpha(t);
            if !(a > 0.0 && a <= 1.0) {
                hard.push(format!("alpha_t must lie in (0, 1] (t = {t}: {a})"));
                break;
            }
            let g = set.gamma(t);
            if !(g > 0.0 && g.is_finite()) {
                hard.push(format!("gamma_t must be positive (t = {t}: {g})"));
                break;
            }
            let (d, z) = (set.delta(t), set.zeta(t));
            if !(0.0 < d && d < z && z < 1.0) {
                hard.push(format!("need 0 < delta_t < zeta_t < 1 (t = {t}: delta = {d}, zeta = {z})"));
                break;
            }
            if !hd_reported && !(h_bound as f64 * d + z < 1.0) {
                theory.push(format!(
                    "need H*delta_t + zeta_t < 1 with H = {h_bound} (t = {t}: {})",
                    h_bound as f64 * d + z
                ));
                hd_reported = true;
            }
        }
    }

    if !hard.is_empty() {
        return Err(Error::Config(format!("schedule: {}", hard.join("; "))));
    }
    if p.mode == ScheduleMode::Theory && !theory.is_empty() {
        return Err(Error::Config(format!("schedule (theory mode): {}", theory.join("; "))));
    }
    Ok(ScheduleSet {
        violations: theory,
        ..set
    })
}
