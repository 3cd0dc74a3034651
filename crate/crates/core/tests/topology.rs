use std::collections::BTreeSet;

use dbrosa_core::topology::{check_graph, has_source_component};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All ordered pairs without self loops.
fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect()
}

fn edges_of(mask: u64, all: &[(usize, usize)]) -> Vec<(usize, usize)> {
    all.iter()
        .enumerate()
        .filter(|(k, _)| mask >> k & 1 == 1)
        .map(|(_, e)| *e)
        .collect()
}

/// Reachability closure, then: exactly one strongly connected class with no
/// edge entering it from outside.
fn brute_source(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(u, v) in edges {
        reach[u][v] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut sources = 0;
    for v in 0..n {
        if seen[v] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&w| reach[v][w] && reach[w][v]).collect();
        for &w in &class {
            seen[w] = true;
        }
        let entered = edges.iter().any(|&(a, b)| class.contains(&b) && !class.contains(&a));
        if !entered {
            sources += 1;
        }
    }
    sources == 1
}

#[test]
fn source_component_matches_brute_force_exhaustively_up_to_five_nodes() {
    for n in 0..=5 {
        let all = pairs(n);
        for mask in 0..1u64 << all.len() {
            let e = edges_of(mask, &all);
            assert_eq!(has_source_component(n, &e), n > 0 && brute_source(n, &e), "n={n} edges={e:?}");
        }
    }
}

#[test]
fn source_component_matches_brute_force_on_sampled_six_node_graphs() {
    let all = pairs(6);
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50_000 {
        let mask = r.random_range(0..1u64 << all.len());
        let e = edges_of(mask, &all);
        assert_eq!(has_source_component(6, &e), brute_source(6, &e), "edges={e:?}");
    }
}

fn in_sets(n: usize, edges: &[(usize, usize)]) -> Vec<BTreeSet<usize>> {
    let mut s = vec![BTreeSet::new(); n];
    for &(u, v) in edges {
        s[v].insert(u);
    }
    s
}

#[test]
fn complete_triangle_passes_reduced_check_but_not_degree_check() {
    let ins = in_sets(3, &pairs(3));
    let c = check_graph(&ins, &BTreeSet::new(), 1, false, 10_000, 0);
    assert!(c.reduced.passed());
    assert!(c.degree.failed());
}

#[test]
fn reduced_check_under_every_placement_implies_degree_check() {
    let b = 1;
    // a lone node is trivially its own source component, so start at two
    for n in 2..=4 {
        let all = pairs(n);
        for mask in 0..1u64 << all.len() {
            let ins = in_sets(n, &edges_of(mask, &all));
            let degree_ok = check_graph(&ins, &BTreeSet::new(), b, false, 10_000, 0).degree.passed();
            let mut placements = vec![BTreeSet::new()];
            placements.extend((0..n).map(|v| BTreeSet::from([v])));
            let reduced_everywhere = placements
                .iter()
                .filter(|f| f.len() < n)
                .all(|f| check_graph(&ins, f, b, false, 10_000, 0).reduced.passed());
            assert!(!reduced_everywhere || degree_ok, "n={n} in-sets {ins:?}");
        }
    }
}

#[test]
fn complete_graphs_with_enough_honest_members_pass() {
    // b = 2 already has ~1.7e7 reduced graphs on six nodes
    for b in 0..=1 {
        for n in 2 * b + 2..=2 * b + 4 {
            let ins = in_sets(n, &pairs(n));
            let c = check_graph(&ins, &BTreeSet::new(), b, true, 100_000, 0);
            assert!(c.degree.passed() && c.reduced.passed(), "b={b} n={n}: {c:?}");
            // n − 1 > n/2 + 2b − 1  ⇔  n > 4b
            assert_eq!(c.tracker.passed(), n > 4 * b, "b={b} n={n}: {:?}", c.tracker);
        }
    }
}
