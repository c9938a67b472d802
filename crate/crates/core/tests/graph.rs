use std::collections::BTreeSet;

use gencov::graph::{
    build_junction_tree, dino, is_chordal, perfect_elimination_order, triangulate, Graph, VarSet,
};
use proptest::prelude::*;

fn graph_from_bits(p: usize, bits: &[bool]) -> Graph {
    let mut g = Graph::new(p).unwrap();
    let mut k = 0;
    for s in 0..p {
        for t in s + 1..p {
            if bits[k] {
                g.add_edge(s, t).unwrap();
            }
            k += 1;
        }
    }
    g
}

fn arb_graph(max_p: usize) -> impl Strategy<Value = Graph> {
    (1..=max_p).prop_flat_map(|p| {
        prop::collection::vec(prop::bool::weighted(0.4), p * (p - 1) / 2)
            .prop_map(move |bits| graph_from_bits(p, &bits))
    })
}

/// Chordless cycle of length at least 4, by brute force over vertex
/// subsets: an induced subgraph that is connected and 2-regular.
fn has_chordless_cycle(g: &Graph) -> bool {
    let p = g.p();
    for mask in 0u32..(1 << p) {
        let vs: Vec<usize> = (0..p).filter(|&v| mask >> v & 1 == 1).collect();
        if vs.len() < 4 {
            continue;
        }
        let deg2 = vs
            .iter()
            .all(|&v| vs.iter().filter(|&&w| g.has_edge(v, w)).count() == 2);
        if !deg2 {
            continue;
        }
        let mut seen = BTreeSet::from([vs[0]]);
        let mut stack = vec![vs[0]];
        while let Some(u) = stack.pop() {
            for &w in &vs {
                if g.has_edge(u, w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        if seen.len() == vs.len() {
            return true;
        }
    }
    false
}

fn brute_maximal_cliques(g: &Graph) -> BTreeSet<VarSet> {
    let p = g.p();
    let cliques: Vec<VarSet> = (1u32..(1 << p))
        .map(|mask| VarSet::new((0..p).filter(|&v| mask >> v & 1 == 1).collect()))
        .filter(|c| g.is_clique(c))
        .collect();
    cliques
        .iter()
        .filter(|c| !cliques.iter().any(|d| d.len() > c.len() && c.is_subset(d)))
        .cloned()
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn chordality_matches_brute_force(g in arb_graph(7)) {
        prop_assert_eq!(is_chordal(&g), !has_chordless_cycle(&g));
        prop_assert_eq!(perfect_elimination_order(&g).is_some(), is_chordal(&g));
    }

    #[test]
    fn triangulation_is_a_chordal_supergraph(g in arb_graph(8)) {
        let tri = triangulate(&g);
        prop_assert!(is_chordal(&tri.chordal));
        prop_assert!(!has_chordless_cycle(&tri.chordal));
        for (s, t) in g.edges() {
            prop_assert!(tri.chordal.has_edge(s, t));
        }
        prop_assert_eq!(tri.chordal.edge_count(), g.edge_count() + tri.fill_edges.len());
        if is_chordal(&g) {
            prop_assert!(tri.fill_edges.is_empty());
        }
    }

    #[test]
    fn junction_tree_properties(g in arb_graph(8)) {
        let chordal = triangulate(&g).chordal;
        let jt = build_junction_tree(&chordal).unwrap();
        prop_assert!(jt.running_intersection_holds());
        let cliques: BTreeSet<VarSet> = jt.cliques.iter().cloned().collect();
        prop_assert_eq!(cliques, brute_maximal_cliques(&chordal));
        prop_assert_eq!(jt.chordal_graph().edge_set(), chordal.edge_set());
        let covered: BTreeSet<usize> = jt.cliques.iter().flat_map(|c| c.iter()).collect();
        prop_assert_eq!(covered.len(), g.p());
    }
}

#[test]
fn thousand_random_chordal_graphs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let p = rng.gen_range(1..=10);
        let bits: Vec<bool> = (0..p * (p - 1) / 2).map(|_| rng.gen_bool(0.35)).collect();
        let chordal = triangulate(&graph_from_bits(p, &bits)).chordal;
        let jt = build_junction_tree(&chordal).unwrap();
        assert!(jt.running_intersection_holds());
        for (i, a) in jt.cliques.iter().enumerate() {
            for b in &jt.cliques[i + 1..] {
                assert!(!a.is_subset(b) && !b.is_subset(a));
            }
        }
    }
}

#[test]
fn non_chordal_input_rejected() {
    let cycle = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
    assert!(build_junction_tree(&cycle).is_err());
}

#[test]
fn dino_fixture_shape() {
    let g = dino();
    assert_eq!((g.p(), g.edge_count()), (13, 15));
    assert!(is_chordal(&g));
    assert!(!g.is_forest());
    let jt = build_junction_tree(&g).unwrap();
    assert!(jt.has_singleton_separators());
}
