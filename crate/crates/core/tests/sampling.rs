use gencov::graph::{dino, Graph, GraphFamily, GraphFamilySpec};
use gencov::mrf::{exact_distribution, random_model, DiscreteMrf, WeightSpec};
use gencov::sampling::{
    corrupt_missing, gibbs_sample, sample_seeded, Dataset, ExactSampler, ForestSampler, Sampler,
    SamplerConfig, SamplerMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson statistic of `data` against the enumerated distribution, and
/// the 0.999 quantile for its degrees of freedom.
fn chi_square(model: &DiscreteMrf, data: &Dataset) -> (f64, f64) {
    let dist = exact_distribution(model).unwrap();
    let mut counts = vec![0usize; dist.probs().len()];
    for row in data.rows() {
        counts[dist.state_index(row)] += 1;
    }
    let n = data.n() as f64;
    let stat: f64 = counts
        .iter()
        .zip(dist.probs())
        .map(|(&c, &q)| (c as f64 - n * q).powi(2) / (n * q))
        .sum();
    let df = (counts.len() - 1) as f64;
    (stat, ChiSquared::new(df).unwrap().inverse_cdf(0.999))
}

fn chain(p: usize) -> Graph {
    GraphFamilySpec::new(GraphFamily::Chain, p).build().unwrap()
}

#[test]
fn exact_sampler_goodness_of_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
    let model = random_model(&g, 3, &WeightSpec::uniform(-1.0, 1.0), &mut rng).unwrap();
    let data = ExactSampler::from_model(&model)
        .unwrap()
        .sample(40_000, &mut rng);
    let (stat, crit) = chi_square(&model, &data);
    assert!(stat < crit, "chi2 {stat} >= {crit}");
}

#[test]
fn forest_sampler_goodness_of_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let forest = Graph::from_edges(6, &[(0, 1), (1, 2), (1, 3), (4, 5)]).unwrap();
    let model = random_model(&forest, 2, &WeightSpec::uniform(-1.5, 1.5), &mut rng).unwrap();
    let data = ForestSampler::new(&model).unwrap().sample(40_000, &mut rng);
    let (stat, crit) = chi_square(&model, &data);
    assert!(stat < crit, "chi2 {stat} >= {crit}");
}

#[test]
fn forest_sampler_rejects_cycles() {
    let model = DiscreteMrf::ising(&dino(), 0.1, 0.3);
    assert!(ForestSampler::new(&model).is_err());
}

#[test]
fn gibbs_matches_exact_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = GraphFamilySpec::new(GraphFamily::Cycle, 5).build().unwrap();
    let model = DiscreteMrf::ising(&g, 0.1, 0.8);
    let cfg = SamplerConfig {
        mode: SamplerMode::Gibbs,
        burn_in: 500,
        thinning: 5,
        seed: 0,
    };
    let n = 20_000;
    let data = gibbs_sample(&model, n, &cfg, &mut rng).unwrap();
    let means = exact_distribution(&model).unwrap().means();
    for v in 0..5 {
        let freq = data.rows().filter(|r| r[v] == 1).count() as f64 / n as f64;
        // Loose bound for autocorrelated draws.
        assert!(
            (freq - means[v]).abs() < 0.03,
            "vertex {v}: {freq} vs {}",
            means[v]
        );
    }
    let (stat, _) = chi_square(&model, &data);
    let crit = ChiSquared::new(31.0).unwrap().inverse_cdf(0.99999);
    assert!(stat < crit, "chi2 {stat}");
}

#[test]
fn auto_mode_picks_forest_for_large_trees() {
    let model = DiscreteMrf::ising(&chain(24), 0.1, 0.3);
    let s = Sampler::new(&model, &SamplerConfig::default()).unwrap();
    assert!(matches!(s, Sampler::Forest(_)));
    let small = DiscreteMrf::ising(&chain(6), 0.1, 0.3);
    assert!(matches!(
        Sampler::new(&small, &SamplerConfig::default()).unwrap(),
        Sampler::Exact(_)
    ));
}

#[test]
fn seeded_sampling_is_reproducible() {
    let model = DiscreteMrf::ising(&chain(5), 0.1, 0.3);
    let cfg = SamplerConfig {
        seed: 42,
        ..Default::default()
    };
    assert_eq!(
        sample_seeded(&model, 100, &cfg).unwrap(),
        sample_seeded(&model, 100, &cfg).unwrap()
    );
}

#[test]
fn corruption_rate_and_zero_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = DiscreteMrf::ising(&chain(6), 2.0, 0.3);
    let clean = sample_seeded(&model, 5000, &SamplerConfig::default()).unwrap();
    let dirty = corrupt_missing(&clean, 0.2, &mut rng).unwrap();
    let mask = &dirty.corruption().unwrap().mask;
    let rate = mask.iter().filter(|&&e| e).count() as f64 / mask.len() as f64;
    // Binomial sd is about 0.0023 here.
    assert!((rate - 0.2).abs() < 0.012);
    for (k, &e) in mask.iter().enumerate() {
        let (i, j) = (k / 6, k % 6);
        if e {
            assert_eq!(dirty.get(i, j), 0);
        } else {
            assert_eq!(dirty.get(i, j), clean.get(i, j));
        }
    }
    assert!(corrupt_missing(&dirty, 0.1, &mut rng).is_err());
    assert!(corrupt_missing(&clean, 1.0, &mut rng).is_err());
    assert!(corrupt_missing(&clean, -0.1, &mut rng).is_err());
}

#[test]
fn csv_round_trip_with_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = DiscreteMrf::ising(&chain(4), 0.1, 0.3);
    let data = corrupt_missing(
        &sample_seeded(&model, 50, &SamplerConfig::default()).unwrap(),
        0.3,
        &mut rng,
    )
    .unwrap();
    let (mut values, mut mask) = (Vec::new(), Vec::new());
    data.write_csv(&mut values).unwrap();
    data.write_mask_csv(&mut mask).unwrap();
    let back = Dataset::read_csv(&values[..], Some(2))
        .unwrap()
        .read_mask_csv(&mask[..], 0.3)
        .unwrap();
    assert_eq!(back, data);
}
