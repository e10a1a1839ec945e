use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectral_ada::active::{select_batch, Pool, Strategy};
use spectral_ada::margin::{margin_score, query_score, softmax_probs};
use spectral_ada::rng::{seeded_stream, SELECTION};
use spectral_ada::{LinearHead, MarginParams};

fn random_head(rng: &mut ChaCha8Rng, k: usize, d: usize) -> LinearHead {
    let w = (0..k * d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let b = (0..k).map(|_| rng.random_range(-0.5..0.5)).collect();
    LinearHead::new(k, d, w, b).unwrap()
}

fn random_pool(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

#[test]
fn zero_lambda_ranks_by_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let head = random_head(&mut rng, 3, 4);
    let pool = random_pool(&mut rng, 1000, 4);
    let params = MarginParams::new(1.0, 0.0).unwrap();
    let q: Vec<f64> = pool.iter().map(|f| query_score(&head, f, &params).unwrap().q_value).collect();
    let m: Vec<f64> = pool.iter().map(|f| margin_score(&head.logits(f).unwrap())).collect();
    assert_eq!(q, m);
    assert_eq!(ranking(&q), ranking(&m));
}

#[test]
fn default_lambda_moves_scores_by_at_most_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let head = random_head(&mut rng, 3, 4);
    let params = MarginParams::default();
    for f in random_pool(&mut rng, 1000, 4) {
        let r = query_score(&head, &f, &params).unwrap();
        assert!((r.q_value - r.margin_score).abs() <= params.lambda);
        assert!(r.cosine_term.abs() <= 1.0);
        assert!((r.q_value - r.margin_score - params.lambda * r.cosine_term).abs() <= 1e-15);
    }
}

#[test]
fn sdm_with_zero_lambda_selects_the_top_margin_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let head = random_head(&mut rng, 4, 3);
    let features = random_pool(&mut rng, 300, 3);
    let mut pool = Pool::new(vec![0; 300], 60).unwrap();
    pool.annotate(&[0, 5, 17]).unwrap();
    let params = MarginParams::new(1.0, 0.0).unwrap();
    let mut stream = seeded_stream(0, SELECTION);
    let picks = select_batch(&head, &features, &pool, 25, Strategy::Sdm, &params, &mut stream).unwrap();
    let got: Vec<usize> = picks.iter().map(|p| p.sample_index).collect();

    let margins: Vec<f64> = features
        .iter()
        .map(|f| {
            let z: Vec<f64> = (0..4)
                .map(|k| head.bias()[k] + (0..3).map(|i| head.weights()[k * 3 + i] * f[i]).sum::<f64>())
                .collect();
            let mut p = softmax_probs(&z);
            p.sort_by(|a, b| b.partial_cmp(a).unwrap());
            1.0 - (p[0] - p[1])
        })
        .collect();
    let expected: Vec<usize> = ranking(&margins)
        .into_iter()
        .filter(|i| ![0, 5, 17].contains(i))
        .take(25)
        .collect();
    assert_eq!(got, expected);
}

proptest! {
    #[test]
    fn constant_logit_shift_leaves_scores_unchanged(
        z in prop::collection::vec(-5.0f64..5.0, 2..6),
        c in -20.0f64..20.0,
    ) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in softmax_probs(&z).iter().zip(softmax_probs(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((margin_score(&z) - margin_score(&shifted)).abs() < 1e-12);
    }

    #[test]
    fn bias_shift_leaves_query_scores_unchanged(
        seed in 0u64..1000,
        c in -10.0f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = random_head(&mut rng, 3, 2);
        let bias: Vec<f64> = head.bias().iter().map(|b| b + c).collect();
        let shifted = LinearHead::new(3, 2, head.weights().to_vec(), bias).unwrap();
        let f: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let params = MarginParams::default();
        let a = query_score(&head, &f, &params).unwrap();
        let b = query_score(&shifted, &f, &params).unwrap();
        prop_assert!((a.margin_score - b.margin_score).abs() < 1e-12);
        prop_assert!((a.q_value - b.q_value).abs() < 1e-12);
    }

    #[test]
    fn query_components_stay_in_range(seed in 0u64..1000, lambda in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = random_head(&mut rng, 3, 3);
        let f: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let params = MarginParams::new(1.0, lambda).unwrap();
        let r = query_score(&head, &f, &params).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.margin_score));
        prop_assert!(r.cosine_term.abs() <= 1.0);
        prop_assert!((r.q_value - r.margin_score - lambda * r.cosine_term).abs() <= 4.0 * f64::EPSILON);
    }
}
