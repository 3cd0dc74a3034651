mod common;

use dbrosa_core::game::{probe_monotonicity, CommodityMarketGame, CommodityParams, Game};
use dbrosa_core::linalg::dot;
use dbrosa_core::scenario::ScenarioConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{interior_point, rel_err};

fn preset_game(name: &str) -> (CommodityParams, CommodityMarketGame) {
    let p = ScenarioConfig::preset(name).unwrap().game;
    (p.clone(), CommodityMarketGame::new(p).unwrap())
}

fn fd_block(f: impl Fn(&[f64]) -> f64, x: &[f64], block: std::ops::Range<usize>) -> Vec<f64> {
    let h = 1e-5;
    let mut p = x.to_vec();
    block
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradients_match_finite_differences(
        large in any::<bool>(),
        owner_pick in any::<u32>(),
        wrt_pick in any::<u32>(),
        t in 1usize..30,
        seed in any::<u64>(),
    ) {
        let (_, g) = preset_game(if large { "large_scale" } else { "small_scale" });
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let d = g.dim();
        let x = interior_point(&g, 1e-3, &mut r);
        let owner = owner_pick as usize % g.n();
        // cross terms only matter inside the owner's cluster, but any block is valid
        let wrt = wrt_pick as usize % g.n();
        let theta = g.sample_theta(g.layout().cluster_of(owner), t, &mut r);
        let blk = wrt * d..(wrt + 1) * d;

        let fd = fd_block(|y| g.local_cost(owner, y, &theta, t).unwrap(), &x, blk.clone());
        prop_assert!(rel_err(&g.local_cost_grad(owner, wrt, &x, &theta, t).unwrap(), &fd) <= 1e-6);
        let fd = fd_block(|y| g.expected_cost(owner, y, t).unwrap(), &x, blk.clone());
        prop_assert!(rel_err(&g.expected_cost_grad(owner, wrt, &x, t).unwrap(), &fd) <= 1e-6);

        let omega = g.sample_omega(t, &mut r);
        let jac = g.constraint_grad(wrt, &x, &omega, t).unwrap();
        for row in 0..g.constraint_dim() {
            let fd = fd_block(|y| g.constraint_value(y, &omega, t).unwrap()[row], &x, blk.clone());
            let analytic: Vec<f64> = (0..d).map(|k| jac.get(row, k)).collect();
            prop_assert!(rel_err(&analytic, &fd) <= 1e-6);
        }
    }

    #[test]
    fn pseudogradient_is_strongly_monotone_on_sampled_pairs(seed in any::<u64>()) {
        let (_, g) = preset_game("small_scale");
        let mut honest = vec![true; g.n()];
        honest[4] = false;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = interior_point(&g, 0.0, &mut r);
        let mut y = interior_point(&g, 0.0, &mut r);
        y[4 * g.dim()..5 * g.dim()].copy_from_slice(&x[4 * g.dim()..5 * g.dim()]);
        let fx = g.pseudogradient(&x, &honest, 3).unwrap();
        let fy = g.pseudogradient(&y, &honest, 3).unwrap();
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&df, &dx) > 0.0);
    }
}

#[test]
fn monotonicity_probe_is_positive_for_both_benchmarks() {
    for name in ["small_scale", "large_scale"] {
        let scn = ScenarioConfig::preset(name).unwrap().build().unwrap();
        let honest: Vec<bool> = (0..scn.topology.n()).map(|a| !scn.topology.is_byzantine(a)).collect();
        let p = probe_monotonicity(&scn.game, &honest, 1, 200, 9).unwrap();
        assert!(p.sigma_hat > 0.0 && p.lipschitz_hat.is_finite(), "{name}: {p:?}");
        assert!(p.sigma_hat <= p.lipschitz_hat);
    }
}

#[test]
fn sampled_gradient_and_constraint_moments_are_finite() {
    for name in ["small_scale", "large_scale"] {
        let (_, g) = preset_game(name);
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let (mut grad_sq, mut cons_sq): (f64, f64) = (0.0, 0.0);
        for _ in 0..200 {
            let x = interior_point(&g, 0.0, &mut r);
            let t = r.random_range(1..100);
            let owner = r.random_range(0..g.n());
            let theta = g.sample_theta(g.layout().cluster_of(owner), t, &mut r);
            let grad = g.local_cost_grad(owner, owner, &x, &theta, t).unwrap();
            grad_sq = grad_sq.max(dot(&grad, &grad));
            let c = g.constraint_value(&x, &g.sample_omega(t, &mut r), t).unwrap();
            cons_sq = cons_sq.max(dot(&c, &c));
        }
        println!("{name}: max |grad f|^2 = {grad_sq:.3e}, max |g|^2 = {cons_sq:.3e}");
        assert!(grad_sq.is_finite() && cons_sq.is_finite());
    }
}

#[test]
fn expected_gradient_is_mean_slope_gradient() {
    let (p, g) = preset_game("small_scale");
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let x = interior_point(&g, 0.0, &mut r);
    let mean = vec![p.price_slope.mean(); p.m];
    for owner in [0, 7, 14] {
        for wrt in g.layout().members(g.layout().cluster_of(owner)) {
            assert_eq!(
                g.expected_cost_grad(owner, wrt, &x, 5).unwrap(),
                g.local_cost_grad(owner, wrt, &x, &mean, 5).unwrap()
            );
        }
    }
}
