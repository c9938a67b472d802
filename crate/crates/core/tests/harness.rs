use gencov::harness::{crossing, emit_results, read_results, PhaseCurve, PhaseRow, ResultsWriter};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_row<R: Rng>(rng: &mut R) -> PhaseRow {
    let p = rng.gen_range(2..500);
    let n = rng.gen_range(1..1_000_000);
    let trials = rng.gen_range(1..200);
    let success_count = rng.gen_range(0..=trials);
    PhaseRow {
        family: ["chain", "dino", "star", "erdos_renyi"][rng.gen_range(0..4)].into(),
        p,
        n,
        n_over_logp: n as f64 / (p as f64).ln(),
        rho: rng.gen_range(0.0..0.5),
        method: "glasso".into(),
        success_count,
        trials,
        success_rate: success_count as f64 / trials as f64,
        mean_runtime_ms: (rng.gen_range(0.0..1e4) * 1000.0f64).round() / 1000.0,
        solver_failures: 0,
        mean_precision: 1.0,
        mean_recall: 1.0,
        lambda_const: 0.5,
        tau_const: 1.0,
        penalty: "rule".into(),
        combine: "or".into(),
    }
}

#[test]
fn ten_thousand_rows_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let curve = PhaseCurve {
        rows: (0..10_000).map(|_| random_row(&mut rng)).collect(),
    };
    let mut batch = Vec::new();
    emit_results(&curve, &mut batch).unwrap();
    let mut streamed = Vec::new();
    let mut w = ResultsWriter::new(&mut streamed).unwrap();
    for r in &curve.rows {
        w.write(r).unwrap();
    }
    w.finish().unwrap();
    assert_eq!(batch, streamed);
    let back = read_results(&batch[..]).unwrap();
    assert_eq!(back.rows.len(), 10_000);
    for (x, y) in back.rows.iter().zip(&curve.rows) {
        assert_eq!(
            (&x.family, x.p, x.n, x.trials, x.success_count),
            (&y.family, y.p, y.n, y.trials, y.success_count)
        );
        assert_eq!(
            (x.n_over_logp, x.rho, x.success_rate),
            (y.n_over_logp, y.rho, y.success_rate)
        );
        assert_eq!(x.mean_runtime_ms, y.mean_runtime_ms);
    }
}

#[test]
fn wrong_header_is_rejected() {
    let text = "family,p,n\nchain,4,100\n";
    assert!(read_results(text.as_bytes()).is_err());
}

proptest! {
    #[test]
    fn crossing_lies_between_bracketing_points(ys in prop::collection::vec(0.0f64..1.0, 2..12)) {
        let mut sorted = ys.clone();
        sorted.sort_by(f64::total_cmp);
        let pts: Vec<(f64, f64)> = sorted.iter().enumerate().map(|(i, &y)| (10.0 * i as f64, y)).collect();
        match crossing(&pts, 0.5) {
            Some(x) => {
                let i = pts.iter().position(|&(_, y)| y >= 0.5).unwrap();
                prop_assert!(i > 0);
                prop_assert!(pts[i - 1].0 <= x && x <= pts[i].0);
            }
            None => prop_assert!(pts[0].1 >= 0.5 || pts.last().unwrap().1 < 0.5),
        }
    }
}
