use gencov::graph::{
    build_junction_tree, triangulate, Graph, GraphFamily, GraphFamilySpec, VarSet,
};
use gencov::mrf::{
    exact_distribution, random_model, Configuration, DiscreteMrf, StatisticBasis, WeightSpec,
};
use gencov::population::{
    entropy_decomposition_check, generalized_covariance, incoherence_alpha, inverse_and_blocks,
    verify_junction_tree_zeros, verify_neighborhood_corollary, verify_separator_corollary,
    verify_singleton_separable_pairs, NONZERO_TOL, ZERO_TOL,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cycle(p: usize) -> Graph {
    GraphFamilySpec::new(GraphFamily::Cycle, p).build().unwrap()
}

/// `E[ψψᵀ] − E[ψ]E[ψ]ᵀ` accumulated state by state from the indicator map.
fn brute_covariance(model: &DiscreteMrf, basis: &StatisticBasis) -> DMatrix<f64> {
    let dist = exact_distribution(model).unwrap();
    let d = basis.dim();
    let mut second = DMatrix::zeros(d, d);
    let mut first = DVector::zeros(d);
    dist.for_each_state(|x, q| {
        let psi = DVector::from_vec(
            basis
                .indicator(
                    model.p(),
                    &Configuration::new(x.to_vec(), model.m()).unwrap(),
                )
                .unwrap(),
        );
        second += &psi * psi.transpose() * q;
        first += psi * q;
    });
    second - &first * first.transpose()
}

#[test]
fn covariance_matches_state_by_state_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
    for m in [2, 3] {
        let model = random_model(&g, m, &WeightSpec::uniform(-1.0, 1.0), &mut rng).unwrap();
        let jt = build_junction_tree(&g).unwrap();
        let basis = StatisticBasis::new(m, jt.all_cliques()).unwrap();
        let cov = generalized_covariance(&model, &basis).unwrap();
        let oracle = brute_covariance(&model, &basis);
        assert!((cov.matrix() - oracle).amax() < 1e-12);
    }
}

#[test]
fn schur_complement_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = cycle(5);
    let model = random_model(&g, 3, &WeightSpec::uniform(-0.8, 0.8), &mut rng).unwrap();
    let basis = StatisticBasis::vertices(5, 3).unwrap();
    let cov = generalized_covariance(&model, &basis).unwrap();
    let inv = inverse_and_blocks(&cov).unwrap();
    let sigma = cov.matrix();
    let k = 2;
    let d = sigma.nrows();
    let saa = sigma.view((0, 0), (k, k));
    let sab = sigma.view((0, k), (k, d - k));
    let sbb = sigma.view((k, k), (d - k, d - k)).clone_owned();
    let schur = saa - sab * sbb.try_inverse().unwrap() * sab.transpose();
    let gaa = inv.gamma().view((0, 0), (k, k)).clone_owned();
    assert!((gaa.try_inverse().unwrap() - schur).amax() < 1e-10);
    assert!((inv.gamma() * sigma - DMatrix::identity(d, d)).amax() < 1e-9);
}

#[test]
fn junction_tree_zeros_on_random_chordal_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let chorded = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)]).unwrap();
    for m in [2, 3] {
        for _ in 0..10 {
            let model =
                random_model(&chorded, m, &WeightSpec::uniform(-1.0, 1.0), &mut rng).unwrap();
            let jt = build_junction_tree(&chorded).unwrap();
            let report = verify_junction_tree_zeros(&model, &jt, ZERO_TOL).unwrap();
            assert!(report.passed(), "max forbidden {}", report.max_forbidden());
            assert!(report.min_allowed() > NONZERO_TOL);
        }
    }
}

#[test]
fn separator_corollary_on_triangulated_cycle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let g = cycle(6);
    let jt = build_junction_tree(&triangulate(&g).chordal).unwrap();
    for m in [2, 3] {
        let model = random_model(&g, m, &WeightSpec::uniform(-1.0, 1.0), &mut rng).unwrap();
        let report = verify_separator_corollary(&model, &jt, ZERO_TOL).unwrap();
        assert!(report.passed());
        assert!(report.forbidden_count() > 0);
    }
}

#[test]
fn singleton_separable_pairs_vanish_on_any_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g =
        Graph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)]).unwrap();
    let model = random_model(&g, 2, &WeightSpec::uniform(-1.0, 1.0), &mut rng).unwrap();
    let report = verify_singleton_separable_pairs(&model, &g, ZERO_TOL).unwrap();
    assert!(report.passed());
    assert_eq!(report.forbidden_count(), 8);
}

#[test]
fn neighborhood_corollary_on_cycles() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for p in [4, 5] {
        let model = random_model(&cycle(p), 2, &WeightSpec::uniform(-1.0, 1.0), &mut rng).unwrap();
        let report = verify_neighborhood_corollary(&model, 0, 2, ZERO_TOL).unwrap();
        assert!(report.passed());
        let allowed: Vec<&VarSet> = report
            .checks
            .iter()
            .filter(|c| !c.forbidden)
            .map(|c| &c.b)
            .collect();
        assert_eq!(allowed.len(), 3);
        assert!(report.min_allowed() > NONZERO_TOL);
    }
}

#[test]
fn plain_vertex_basis_fails_on_cycle() {
    let model = DiscreteMrf::ising(&cycle(4), 0.1, 2.0);
    let inv = inverse_and_blocks(
        &generalized_covariance(&model, &StatisticBasis::vertices(4, 2).unwrap()).unwrap(),
    )
    .unwrap();
    let scaled = inv.gamma()[(0, 2)].abs() / inv.max_abs();
    assert!(scaled > 1e-4);
}

#[test]
fn entropy_decomposes_over_junction_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let g =
        Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (3, 5), (4, 5)]).unwrap();
    let jt = build_junction_tree(&g).unwrap();
    for m in [2, 3] {
        let model = random_model(&g, m, &WeightSpec::uniform(-1.5, 1.5), &mut rng).unwrap();
        let check = entropy_decomposition_check(&model, &jt).unwrap();
        assert!(check.gap < 1e-10, "gap {}", check.gap);
        assert!(check.factorization_gap < 1e-12);
    }
}

#[test]
fn incoherence_trivial_cases() {
    let eye = DMatrix::<f64>::identity(3, 3);
    assert!((incoherence_alpha(&eye, &[(0, 1)]).unwrap() - 1.0).abs() < 1e-12);
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.0]);
    let full = [(0, 1), (0, 2), (1, 2)];
    assert_eq!(incoherence_alpha(&sigma, &full).unwrap(), 1.0);
    assert!(incoherence_alpha(&sigma, &[(0, 1)]).unwrap() < 1.0);
}
