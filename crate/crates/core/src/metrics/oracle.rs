//! Centralized solver for the variational SGNE of the expected game.
//!
//! The KKT system is a monotone variational inequality in `(x, λ)` over
//! `Ω × R^m_+` with operator `(𝔽(x) + ∇G(x)ᵀλ, −G(x))`, where `𝔽` is the
//! pseudogradient of the honest-averaged cluster costs. It is solved by
//! extragradient with a backtracking step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{project_box, Game};
use crate::linalg::{dist, norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    1_000_000
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgneSolution {
    pub x_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Step size in use at termination; reused by warm starts.
    #[serde(skip)]
    pub step: f64,
}

struct Operator<'a> {
    game: &'a dyn Game,
    honest: &'a [bool],
    t: usize,
}

impl Operator<'_> {
    /// `(𝔽(x) + ∇Gᵀλ, −G(x))`
    fn eval(&self, x: &[f64], lambda: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.game.dim();
        let mut fx = self.game.pseudogradient(x, self.honest, self.t)?;
        for a in 0..self.game.n() {
            let jac = self.game.expected_constraint_grad(a, x, self.t)?;
            jac.tr_mul_vec_acc(lambda, &mut fx[a * d..(a + 1) * d]);
        }
        let g = self.game.expected_constraint(x, self.t)?;
        Ok((fx, g.into_iter().map(|v| -v).collect()))
    }

    fn project(&self, x: &[f64], lambda: &[f64], fx: &[f64], fl: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.game.dim();
        let mut px = Vec::with_capacity(x.len());
        for a in 0..self.game.n() {
            let r = a * d..(a + 1) * d;
            let trial: Vec<f64> = x[r.clone()].iter().zip(&fx[r]).map(|(v, g)| v - s * g).collect();
            px.extend(project_box(&trial, self.game.box_set(a))?);
        }
        let pl = lambda.iter().zip(fl).map(|(l, g)| (l - s * g).max(0.0)).collect();
        Ok((px, pl))
    }

    /// Natural-map residual with unit step, from an already evaluated operator.
    fn residual(&self, x: &[f64], lambda: &[f64], fx: &[f64], fl: &[f64]) -> Result<f64> {
        let d = self.game.dim();
        let (px, pl) = self.project(x, lambda, fx, fl, 1.0)?;
        let primal = (0..self.game.n())
            .map(|a| dist(&x[a * d..(a + 1) * d], &px[a * d..(a + 1) * d]))
            .fold(0.0, f64::max);
        Ok(primal + dist(lambda, &pl))
    }
}

/// `max_a ‖x_a − P_Ω[x_a − (𝔽_a + ∇_aGᵀλ)]‖ + ‖λ − [λ + G(x)]₊‖`
pub fn kkt_residual(game: &dyn Game, honest: &[bool], t: usize, x: &[f64], lambda: &[f64]) -> Result<f64> {
    let op = Operator { game, honest, t };
    let (fx, fl) = op.eval(x, lambda)?;
    op.residual(x, lambda, &fx, &fl)
}

pub fn solve_sgne(
    game: &dyn Game,
    honest: &[bool],
    t: usize,
    params: &OracleParams,
    warm: Option<&SgneSolution>,
) -> Result<SgneSolution> {
    if !(params.tol > 0.0) {
        return Err(Error::Config(format!("oracle tolerance must be positive, got {}", params.tol)));
    }
    let op = Operator { game, honest, t };
    let d = game.dim();
    let (mut x, mut lambda, mut s) = match warm {
        Some(w) => (w.x_star.clone(), w.lambda_star.clone(), w.step),
        None => {
            let mut x = Vec::with_capacity(game.n() * d);
            for a in 0..game.n() {
                let b = game.box_set(a);
                x.extend(b.lower.iter().zip(&b.upper).map(|(l, u)| 0.5 * (l + u)));
            }
            (x, vec![0.0; game.constraint_dim()], 1.0)
        }
    };
    if !(s > 0.0) {
        s = 1.0;
    }
    let (mut fx, mut fl) = op.eval(&x, &lambda)?;
    let mut best = f64::INFINITY;
    for it in 0..params.max_iter {
        let res = op.residual(&x, &lambda, &fx, &fl)?;
        best = best.min(res);
        if res <= params.tol {
            return Ok(SgneSolution {
                x_star: x,
                lambda_star: lambda,
                residual: res,
                iterations: it,
                step: s,
            });
        }
        loop {
            let (bx, bl) = op.project(&x, &lambda, &fx, &fl, s)?;
            let (gx, gl) = op.eval(&bx, &bl)?;
            let moved = (dist(&bx, &x).powi(2) + dist(&bl, &lambda).powi(2)).sqrt();
            let change = (dist(&gx, &fx).powi(2) + dist(&gl, &fl).powi(2)).sqrt();
            if s * change <= 0.9 * moved || moved == 0.0 {
                let (nx, nl) = op.project(&x, &lambda, &gx, &gl, s)?;
                x = nx;
                lambda = nl;
                let (a, b) = op.eval(&x, &lambda)?;
                fx = a;
                fl = b;
                if s * change < 0.5 * moved {
                    s *= 1.2;
                }
                break;
            }
            s *= 0.5;
            if s < 1e-300 {
                return Err(Error::OracleDiverged {
                    iterations: it,
                    best_residual: best,
                });
            }
        }
        if !norm(&x).is_finite() {
            break;
        }
    }
    Err(Error::OracleDiverged {
        iterations: params.max_iter,
        best_residual: best,
    })
}
