//! Byzantine message policies.
//!
//! A Byzantine agent broadcasts one crafted message per channel per round.
//! Messages are built block by block: an estimate message has one block per
//! agent, a tracker message one block per cluster member. Mean-based attacks
//! use the honest in-neighbors of the Byzantine agent in its cluster graph,
//! weighted by a nonnegative weight per neighbor (uniform unless configured).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    /// Byzantine agents follow the protocol.
    #[default]
    None,
    /// Draw from `N(weighted honest mean, variance · I)`.
    Gaussian { variance: f64 },
    /// Every coordinate equals `value`.
    MaxValue { value: f64 },
    /// `scale · weighted honest mean`, `scale < 0`.
    SignFlipping { scale: f64 },
    /// `scale ·` the message of a uniformly chosen honest neighbor.
    SampleDuplicating { scale: f64 },
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Gaussian { .. } => "gaussian",
            AttackKind::MaxValue { .. } => "max_value",
            AttackKind::SignFlipping { .. } => "sign_flipping",
            AttackKind::SampleDuplicating { .. } => "sample_duplicating",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "RawAttack", into = "RawAttack")]
pub struct AttackModel {
    pub kind: AttackKind,
    /// Corrupt the decision-estimate channel.
    pub estimates: bool,
    /// Corrupt the gradient-tracker channel.
    pub trackers: bool,
    /// Optional per-cluster weight matrices `W_i[b][h]` (member indices,
    /// zero-based rows and columns). Absent means uniform adjacency weights.
    pub weights: Option<Vec<Vec<Vec<f64>>>>,
}

fn yes() -> bool {
    true
}

// flat on-disk form; serde's flatten does not combine with deny_unknown_fields
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttack {
    #[serde(default)]
    kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(default = "yes")]
    estimates: bool,
    #[serde(default = "yes")]
    trackers: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<RawAttack> for AttackModel {
    type Error = String;

    fn try_from(r: RawAttack) -> std::result::Result<Self, String> {
        let need = |v: Option<f64>, field: &str, kind: &str| {
            v.ok_or_else(|| format!("attack kind `{kind}` requires `{field}`"))
        };
        let kind_name = r.kind.as_deref().unwrap_or("none");
        let extra = |allowed: &[&str]| -> std::result::Result<(), String> {
            for (name, v) in [("variance", r.variance), ("value", r.value), ("scale", r.scale)] {
                if v.is_some() && !allowed.contains(&name) {
                    return Err(format!("attack kind `{kind_name}` does not take `{name}`"));
                }
            }
            Ok(())
        };
        let kind = match kind_name {
            "none" => {
                extra(&[])?;
                AttackKind::None
            }
            "gaussian" => {
                extra(&["variance"])?;
                AttackKind::Gaussian {
                    variance: need(r.variance, "variance", kind_name)?,
                }
            }
            "max_value" => {
                extra(&["value"])?;
                AttackKind::MaxValue {
                    value: need(r.value, "value", kind_name)?,
                }
            }
            "sign_flipping" => {
                extra(&["scale"])?;
                AttackKind::SignFlipping {
                    scale: need(r.scale, "scale", kind_name)?,
                }
            }
            "sample_duplicating" => {
                extra(&["scale"])?;
                AttackKind::SampleDuplicating {
                    scale: need(r.scale, "scale", kind_name)?,
                }
            }
            other => return Err(format!("unknown attack kind `{other}`")),
        };
        Ok(AttackModel {
            kind,
            estimates: r.estimates,
            trackers: r.trackers,
            weights: r.weights,
        })
    }
}

impl From<AttackModel> for RawAttack {
    fn from(m: AttackModel) -> Self {
        let (mut variance, mut value, mut scale) = (None, None, None);
        match m.kind {
            AttackKind::None => {}
            AttackKind::Gaussian { variance: v } => variance = Some(v),
            AttackKind::MaxValue { value: v } => value = Some(v),
            AttackKind::SignFlipping { scale: s } | AttackKind::SampleDuplicating { scale: s } => scale = Some(s),
        }
        RawAttack {
            kind: Some(m.kind.name().to_string()),
            variance,
            value,
            scale,
            estimates: m.estimates,
            trackers: m.trackers,
            weights: m.weights,
        }
    }
}

impl AttackModel {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            estimates: true,
            trackers: true,
            weights: None,
        }
    }

    pub fn validate(&self, cluster_sizes: &[usize]) -> Result<()> {
        match self.kind {
            AttackKind::Gaussian { variance } if !(variance > 0.0 && variance.is_finite()) => {
                return Err(Error::Config(format!("gaussian attack needs variance > 0, got {variance}")))
            }
            AttackKind::SignFlipping { scale } if !(scale < 0.0) => {
                return Err(Error::Config(format!("sign-flipping attack needs scale < 0, got {scale}")))
            }
            AttackKind::MaxValue { value } | AttackKind::SampleDuplicating { scale: value }
                if !value.is_finite() =>
            {
                return Err(Error::Config("attack parameter must be finite".into()))
            }
            _ => {}
        }
        if let Some(w) = &self.weights {
            if w.len() != cluster_sizes.len() {
                return Err(Error::Config(format!(
                    "attack weights given for {} clusters, topology has {}",
                    w.len(),
                    cluster_sizes.len()
                )));
            }
            for (i, (m, &s)) in w.iter().zip(cluster_sizes).enumerate() {
                if m.len() != s || m.iter().any(|r| r.len() != s || r.iter().any(|v| !(*v >= 0.0))) {
                    return Err(Error::Config(format!(
                        "attack weights for cluster {} must be a nonnegative {s}x{s} matrix",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_active(&self, estimates_channel: bool) -> bool {
        !matches!(self.kind, AttackKind::None)
            && if estimates_channel {
                self.estimates
            } else {
                self.trackers
            }
    }
}

/// Builds one Byzantine message. `neighbors` holds `(weight, honest message)`
/// pairs; every message has length `blocks * block_dim`. Returns the message
/// and whether the mean-based fallback (no honest neighbor) was used.
pub fn craft_message(
    kind: &AttackKind,
    neighbors: &[(f64, &[f64])],
    blocks: usize,
    block_dim: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, bool) {
    let len = blocks * block_dim;
    let total_w: f64 = neighbors.iter().map(|(w, _)| *w).sum();
    let fallback = neighbors.is_empty() || !(total_w > 0.0);
    let mean = || -> Vec<f64> {
        let mut m = vec![0.0; len];
        if fallback {
            return m;
        }
        for (w, msg) in neighbors {
            for (a, v) in m.iter_mut().zip(msg.iter()) {
                *a += w * v;
            }
        }
        m.iter_mut().for_each(|a| *a /= total_w);
        m
    };
    let msg = match *kind {
        AttackKind::None => mean(),
        AttackKind::Gaussian { variance } => {
            let sd = variance.sqrt();
            mean()
                .into_iter()
                .map(|mu| mu + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect()
        }
        AttackKind::MaxValue { value } => vec![value; len],
        AttackKind::SignFlipping { scale } => mean().into_iter().map(|v| scale * v).collect(),
        AttackKind::SampleDuplicating { scale } => {
            let mut out = vec![0.0; len];
            if !neighbors.is_empty() {
                for blk in 0..blocks {
                    let pick = rng.random_range(0..neighbors.len());
                    let r = blk * block_dim..(blk + 1) * block_dim;
                    for (o, v) in out[r.clone()].iter_mut().zip(&neighbors[pick].1[r]) {
                        *o = scale * v;
                    }
                }
            }
            out
        }
    };
    let used_fallback = fallback
        && matches!(
            kind,
            AttackKind::Gaussian { .. } | AttackKind::SignFlipping { .. } | AttackKind::SampleDuplicating { .. }
        );
    (msg, used_fallback)
}
