//! Per-round performance measures and their accumulation.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::game::Game;
use crate::linalg::{dist, norm, positive_part};
use crate::metrics::oracle::SgneSolution;
use crate::rng::{self, Purpose};

/// Round-`t` term of the resilient regret: for every honest agent `j` in
/// cluster `i`, `F_i(x_ij, x*_{−ij}) − F_i(x*)`. Only honest decisions are
/// read; `decisions` holds one block per agent and non-honest blocks are
/// ignored.
pub fn regret_increment(
    game: &dyn Game,
    honest: &[bool],
    t: usize,
    decisions: &[f64],
    sgne: &SgneSolution,
) -> Result<f64> {
    let d = game.dim();
    let n = game.n();
    check_len("decisions", decisions.len(), n * d)?;
    check_len("honest mask", honest.len(), n)?;
    let layout = game.layout();
    let mut total = 0.0;
    let mut probe = sgne.x_star.clone();
    for c in 0..layout.sizes().len() {
        let base = game.cluster_cost(c, honest, &sgne.x_star, t)?;
        for j in layout.members(c).filter(|&j| honest[j]) {
            let r = j * d..(j + 1) * d;
            probe[r.clone()].copy_from_slice(&decisions[r.clone()]);
            total += game.cluster_cost(c, honest, &probe, t)? - base;
            probe[r.clone()].copy_from_slice(&sgne.x_star[r]);
        }
    }
    Ok(total)
}

/// `x*` with every honest block replaced by the honest decision.
pub fn substitute_honest(honest: &[bool], d: usize, decisions: &[f64], x_star: &[f64]) -> Vec<f64> {
    let mut out = x_star.to_vec();
    for (a, &h) in honest.iter().enumerate() {
        if h {
            out[a * d..(a + 1) * d].copy_from_slice(&decisions[a * d..(a + 1) * d]);
        }
    }
    out
}

/// `‖[G_t(x*_H)]₊‖` with honest decisions substituted into `x*`.
pub fn cv_increment(
    game: &dyn Game,
    honest: &[bool],
    t: usize,
    decisions: &[f64],
    sgne: &SgneSolution,
) -> Result<f64> {
    let d = game.dim();
    check_len("decisions", decisions.len(), game.n() * d)?;
    let x = substitute_honest(honest, d, decisions, &sgne.x_star);
    Ok(norm(&positive_part(&game.expected_constraint(&x, t)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiSplit {
    pub honest: f64,
    pub byzantine: f64,
    pub total: f64,
}

/// Coordinate-wise path variation of consecutive solutions, split by the
/// owner of each block.
pub fn phi_variation(x_stars: &[&[f64]], honest: &[bool], d: usize) -> PhiSplit {
    let (mut h, mut b) = (0.0, 0.0);
    for w in x_stars.windows(2) {
        for (k, (u, v)) in w[0].iter().zip(w[1]).enumerate() {
            if honest[k / d] {
                h += (v - u).abs();
            } else {
                b += (v - u).abs();
            }
        }
    }
    PhiSplit {
        honest: h,
        byzantine: b,
        total: h + b,
    }
}

/// Lower estimate of `ΔF^sup` over `rounds`: the largest, over `samples`
/// points drawn uniformly in the boxes, of the summed variation of honest
/// cost gradients along honest blocks between consecutive rounds.
pub fn delta_f_sup_estimate(
    game: &dyn Game,
    honest: &[bool],
    rounds: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let layout = game.layout();
    let d = game.dim();
    let mut best: f64 = 0.0;
    for s in 0..samples {
        let mut r = rng::stream(seed, Purpose::Probe, s as u64, u64::MAX);
        let mut x = Vec::with_capacity(game.n() * d);
        for a in 0..game.n() {
            x.extend(game.box_set(a).sample(&mut r));
        }
        let mut total = 0.0;
        for c in 0..layout.sizes().len() {
            let members: Vec<usize> = layout.members(c).filter(|&a| honest[a]).collect();
            for &j in &members {
                for &q in &members {
                    let mut prev = game.expected_cost_grad(j, q, &x, 1)?;
                    for t in 2..=rounds {
                        let cur = game.expected_cost_grad(j, q, &x, t)?;
                        total += dist(&cur, &prev);
                        prev = cur;
                    }
                }
            }
        }
        best = best.max(total);
    }
    Ok(best)
}

/// Least-squares slope of `ln max(c_t, 1e-12)` against `ln t` over the
/// trailing `window` fraction of a cumulative series indexed from `t = 1`.
pub fn sublinearity_fit(cumulative: &[f64], window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::DegenerateSeries(format!("window fraction {window} outside (0, 1]")));
    }
    let n = cumulative.len();
    let start = n - ((n as f64 * window).ceil() as usize).min(n);
    if cumulative[start..].iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateSeries("NaN in the fitting window".into()));
    }
    let pts: Vec<(f64, f64)> = (start..n)
        .map(|i| (((i + 1) as f64).ln(), cumulative[i].max(1e-12).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateSeries(format!("{} points in the fitting window", pts.len())));
    }
    if pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::DegenerateSeries("non-finite value in the fitting window".into()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRecord {
    pub t: usize,
    pub regret_inc: f64,
    pub regret_cum: f64,
    pub cv_inc: f64,
    pub cv_cum: f64,
    pub mean_dist_to_sgne: f64,
    pub consensus_diameter: f64,
    pub phi_running: f64,
}

pub const CSV_HEADER: &str =
    "t,regret_inc,regret_cum,cv_inc,cv_cum,mean_dist_to_sgne,consensus_diameter,phi_running";

/// Decimal rendering with 12 significant digits, dropping trailing zeros
/// (like C's `%.12g`).
pub fn fmt_g12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.11e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

impl RoundRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            fmt_g12(self.regret_inc),
            fmt_g12(self.regret_cum),
            fmt_g12(self.cv_inc),
            fmt_g12(self.cv_cum),
            fmt_g12(self.mean_dist_to_sgne),
            fmt_g12(self.consensus_diameter),
            fmt_g12(self.phi_running)
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsTrace {
    pub records: Vec<RoundRecord>,
}

impl MetricsTrace {
    /// Appends round `t`'s increments, accumulating the running sums.
    pub fn push(&mut self, t: usize, regret_inc: f64, cv_inc: f64, mean_dist: f64, diameter: f64, phi_running: f64) {
        let (rc, cc) = self
            .records
            .last()
            .map_or((0.0, 0.0), |r| (r.regret_cum, r.cv_cum));
        self.records.push(RoundRecord {
            t,
            regret_inc,
            regret_cum: rc + regret_inc,
            cv_inc,
            cv_cum: cc + cv_inc,
            mean_dist_to_sgne: mean_dist,
            consensus_diameter: diameter,
            phi_running,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }

    /// Column-wise mean of equally long traces; cumulative columns are
    /// re-accumulated from the averaged increments.
    pub fn mean(traces: &[MetricsTrace]) -> Result<MetricsTrace> {
        let first = traces
            .first()
            .ok_or_else(|| Error::DegenerateSeries("no traces to average".into()))?;
        let len = first.records.len();
        if traces.iter().any(|tr| tr.records.len() != len) {
            return Err(Error::DegenerateSeries("traces differ in length".into()));
        }
        let k = traces.len() as f64;
        let mut out = MetricsTrace::default();
        for i in 0..len {
            let avg = |f: fn(&RoundRecord) -> f64| traces.iter().map(|tr| f(&tr.records[i])).sum::<f64>() / k;
            let mut r = RoundRecord {
                t: first.records[i].t,
                regret_inc: avg(|r| r.regret_inc),
                regret_cum: avg(|r| r.regret_cum),
                cv_inc: avg(|r| r.cv_inc),
                cv_cum: avg(|r| r.cv_cum),
                mean_dist_to_sgne: avg(|r| r.mean_dist_to_sgne),
                consensus_diameter: avg(|r| r.consensus_diameter),
                phi_running: avg(|r| r.phi_running),
            };
            if r.cv_inc < 0.0 {
                r.cv_inc = 0.0;
            }
            out.records.push(r);
        }
        Ok(out)
    }

    pub fn regret_cum(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.regret_cum).collect()
    }

    pub fn cv_cum(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cv_cum).collect()
    }
}

/// Mean over honest agents of `‖x_a − x*_a‖`.
pub fn mean_distance(honest: &[bool], d: usize, decisions: &[f64], x_star: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut k = 0usize;
    for (a, &h) in honest.iter().enumerate() {
        if h {
            s += dist(&decisions[a * d..(a + 1) * d], &x_star[a * d..(a + 1) * d]);
            k += 1;
        }
    }
    s / k.max(1) as f64
}

/// Largest block distance between the estimates of two honest agents.
pub fn consensus_diameter(estimates: &[&[f64]], d: usize) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            for (u, v) in a.chunks(d).zip(b.chunks(d)) {
                best = best.max(dist(u, v));
            }
        }
    }
    best
}
