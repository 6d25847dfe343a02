mod common;

use common::{logistic, permutations, random_pl};
use proptest::prelude::*;
use qjudge::dataset::RankedItem;
use qjudge::judges::{
    pl_permutation_log_prob, predict_btl, predict_btl2, predict_ls, predict_mn, predict_pl,
    prefers_first, JudgeModel, ModelKind, ProbClamp,
};
use qjudge::seed;

fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, d)
}

fn distribution(levels: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, levels).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.iter().map(|x| x / t).collect()
    })
}

fn model_with(kind: ModelKind, d: usize, set: Option<Vec<f64>>, params: &[f64]) -> JudgeModel<f64> {
    let mut m = JudgeModel::zeros(kind, d, set).unwrap();
    let n = m.params().len();
    m.params_mut().copy_from_slice(&params[..n]);
    m
}

#[test]
fn identity_reproduces_base_judge() {
    let clamp = ProbClamp::<f64>::default();
    let phi = [0.4, -1.2, 3.0];
    let ls = JudgeModel::identity(ModelKind::Ls, 3, None).unwrap();
    for b in [1.0, 4.5, 7.0, -2.25] {
        assert_eq!(predict_ls(&phi, b, &ls).unwrap(), b);
    }
    let set = vec![1.0, 2.0, 3.0, 4.0];
    let mn = JudgeModel::identity(ModelKind::Mn, 3, Some(set)).unwrap();
    for p in [[0.1f64, 0.2, 0.3, 0.4], [1.0, 0.0, 0.0, 0.0], [0.25; 4]] {
        let q = predict_mn(&phi, &p, &mn, &clamp).unwrap();
        // clamping a one-hot input leaves mass that the softmax renormalizes
        let clamped: Vec<f64> = p.iter().map(|&x| clamp.apply(x)).collect();
        let total: f64 = clamped.iter().sum();
        for (a, b) in q.iter().zip(&clamped) {
            assert!((a - b / total).abs() < 1e-12);
            assert!((a - b).abs() < 1e-9 * p.len() as f64);
        }
    }
    let btl = JudgeModel::identity(ModelKind::Btl, 3, None).unwrap();
    for p in [0.0f64, 1e-12, 0.3, 0.5, 0.97, 1.0] {
        let q = predict_btl(&phi, p, &btl, &clamp).unwrap();
        assert!((q - clamp.apply(p)).abs() < 1e-9, "{p} -> {q}");
    }
    let btl2 = JudgeModel::identity(ModelKind::Btl2, 3, None).unwrap();
    for (ba, bb) in [(7.0, 2.0), (2.0, 7.0), (3.0, 3.5), (4.0, 4.0)] {
        let q = predict_btl2(&phi, &[0.0, 5.0, -1.0], ba, bb, &btl2, &clamp).unwrap();
        assert_eq!(prefers_first(q), ba > bb, "{ba} vs {bb}: {q}");
    }
}

#[test]
fn pl_normalizes_over_all_permutations() {
    let mut rng = seed::rng(3);
    for k in 2..=4 {
        let perms = permutations(k);
        for _ in 0..50 {
            let (model, items) = random_pl(&mut rng, k);
            let total: f64 = perms
                .iter()
                .map(|p| pl_permutation_log_prob(&items, p, &model).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "K={k}: {total}");
        }
    }
}

#[test]
fn pl_top_choice_matches_first_place_marginal() {
    let mut rng = seed::rng(4);
    for _ in 0..20 {
        let (model, items) = random_pl(&mut rng, 4);
        let top = predict_pl(&items, &model).unwrap();
        let mut marginal = [0.0; 4];
        for p in permutations(4) {
            marginal[p[0]] += pl_permutation_log_prob(&items, &p, &model).unwrap().exp();
        }
        for (a, b) in top.iter().zip(&marginal) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mn_is_a_distribution_and_shift_invariant(
        phi in vec_strategy(4),
        p in distribution(5),
        params in vec_strategy(30),
        shift in -5.0..5.0f64,
    ) {
        let set = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let clamp = ProbClamp::default();
        let m = model_with(ModelKind::Mn, 4, Some(set), &params);
        let q = predict_mn(&phi, &p, &m, &clamp).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mut shifted = m.clone();
        for s in 0..5 {
            shifted.set_bias(s, m.bias(s) + shift).unwrap();
        }
        let q2 = predict_mn(&phi, &p, &shifted, &clamp).unwrap();
        for (a, b) in q.iter().zip(&q2) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pl_top_choice_is_a_distribution_and_shift_invariant(
        embs in prop::collection::vec(vec_strategy(3), 2..6),
        scores in prop::collection::vec(1.0..7.0f64, 6),
        params in vec_strategy(4),
        shift in -5.0..5.0f64,
    ) {
        let items: Vec<RankedItem<f64>> = embs
            .iter()
            .zip(&scores)
            .map(|(e, &b)| RankedItem { embedding: e.clone(), base_score: b })
            .collect();
        let m = model_with(ModelKind::Pl, 3, None, &params);
        let q = predict_pl(&items, &m).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // a constant added to every utility: move all base scores when the
        // signal weight is non-zero
        if params[3].abs() > 1e-3 {
            let moved: Vec<RankedItem<f64>> = items
                .iter()
                .map(|it| RankedItem { embedding: it.embedding.clone(), base_score: it.base_score + shift / params[3] })
                .collect();
            let q2 = predict_pl(&moved, &m).unwrap();
            for (a, b) in q.iter().zip(&q2) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn btl2_swapping_the_pair_reflects_the_logit(
        pa in vec_strategy(3),
        pb in vec_strategy(3),
        ba in 1.0..7.0f64,
        bb in 1.0..7.0f64,
        params in vec_strategy(5),
    ) {
        let clamp = ProbClamp::default();
        let m = model_with(ModelKind::Btl2, 3, None, &params);
        let c = m.bias(0);
        let logit = |q: f64| (q / (1.0 - q)).ln();
        let z = logit(predict_btl2(&pa, &pb, ba, bb, &m, &clamp).unwrap());
        let z_swapped = logit(predict_btl2(&pb, &pa, bb, ba, &m, &clamp).unwrap());
        prop_assume!(z.abs() < 15.0 && z_swapped.abs() < 15.0);
        prop_assert!((z + z_swapped - 2.0 * c).abs() < 1e-6, "{} + {} vs {}", z, z_swapped, 2.0 * c);
    }

    #[test]
    fn two_item_pl_is_btl_on_the_difference(
        pa in vec_strategy(3),
        pb in vec_strategy(3),
        ba in 1.0..7.0f64,
        bb in 1.0..7.0f64,
        params in vec_strategy(4),
    ) {
        let pl = model_with(ModelKind::Pl, 3, None, &params);
        let items = [
            RankedItem { embedding: pa.clone(), base_score: ba },
            RankedItem { embedding: pb.clone(), base_score: bb },
        ];
        let first = pl_permutation_log_prob(&items, &[0, 1], &pl).unwrap().exp();

        let mut btl = JudgeModel::zeros(ModelKind::Btl, 3, None).unwrap();
        btl.theta_mut(0).copy_from_slice(&params);
        let diff: Vec<f64> = pa.iter().zip(&pb).map(|(a, b)| a - b).collect();
        let q = predict_btl(&diff, logistic(ba - bb), &btl, &ProbClamp::default()).unwrap();
        prop_assert!((first - q).abs() < 1e-9);
    }
}
