use proptest::prelude::*;
use qjudge::dataset::{
    dataset_to_string, drop_features, expand_rankings, load_dataset, parse_dataset,
    split_dataset, subsample_dataset, write_dataset, Dataset, Examples, Labels, PairForm,
    RankedItem, RankingExample,
};
use qjudge::judges::ModelKind;
use qjudge::synthetic::{Generator, Scenario};

fn synthetic(kind: ModelKind, n: usize, seed: u64) -> Dataset<f64> {
    Generator::new(Scenario::for_kind(kind), 5, seed).sample(n, seed + 1)
}

#[test]
fn every_task_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let ds = synthetic(kind, 25, kind as u64);
        let path = dir.path().join(format!("{kind}.jsonl"));
        write_dataset(&path, &ds).unwrap();
        let back: Dataset<f64> = load_dataset(&path).unwrap();
        assert_eq!(back, ds, "{kind}");
        assert_eq!(dataset_to_string(&back).unwrap(), std::fs::read_to_string(&path).unwrap());
    }
}

#[test]
fn single_precision_loads_the_same_file() {
    let ds = synthetic(ModelKind::Btl2, 10, 3);
    let text = dataset_to_string(&ds).unwrap();
    let small: Dataset<f32> = parse_dataset(&text, Labels::Required).unwrap();
    assert_eq!(small.len(), 10);
    let (Examples::Pairwise(a), Examples::Pairwise(b)) = (&ds.examples, &small.examples) else {
        panic!()
    };
    for (x, y) in a.iter().zip(b) {
        let (PairForm::TwoHeaded { embedding_a: ea, .. }, PairForm::TwoHeaded { embedding_a: eb, .. }) =
            (&x.form, &y.form)
        else {
            panic!()
        };
        for (u, v) in ea.iter().zip(eb) {
            assert!((*u as f32 - v).abs() <= f32::EPSILON * u.abs() as f32);
        }
    }
}

#[test]
fn load_errors_name_the_file_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(
        &path,
        "{\"dimension\":2,\"task\":\"pairwise\"}\n\n{\"id\":\"x\",\"form\":\"relative\",\"embedding\":[1.0],\"base_prob_first\":0.4,\"human_pref\":0}\n",
    )
    .unwrap();
    let msg = load_dataset::<f64>(&path).unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");
    let missing = load_dataset::<f64>(dir.path().join("nope.jsonl")).unwrap_err();
    assert!(!missing.is_validation());
}

#[test]
fn split_and_subsample_keep_the_header() {
    let ds = synthetic(ModelKind::Mn, 50, 8);
    let (train, test) = split_dataset(&ds, 0.2, 4).unwrap();
    assert_eq!((train.len(), test.len()), (40, 10));
    assert_eq!(train.header, ds.header);
    let sub = subsample_dataset(&ds, 0.1, 4).unwrap();
    assert_eq!(sub.len(), 5);
    train.validate().unwrap();
    sub.validate().unwrap();
}

#[test]
fn feature_drop_applies_to_both_pair_embeddings() {
    let ds = synthetic(ModelKind::Btl2, 6, 1);
    let (small, keep) = drop_features(&ds, 0.6, 2).unwrap();
    assert_eq!(keep.len(), 2);
    assert_eq!(small.header.dimension, 2);
    small.validate().unwrap();
}

fn ranking_strategy() -> impl Strategy<Value = RankingExample<f64>> {
    (2usize..=7)
        .prop_flat_map(|k| (Just(k), Just((0..k).collect::<Vec<_>>()).prop_shuffle()))
        .prop_map(|(k, order)| RankingExample {
            id: "r".into(),
            items: (0..k)
                .map(|i| RankedItem {
                    embedding: vec![i as f64, 1.0],
                    base_score: 1.0 + i as f64,
                })
                .collect(),
            human_ranking: order,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn expanded_pairs_are_consistent_with_the_ranking(ex in ranking_strategy(), seed in 0u64..1000) {
        let k = ex.items.len();
        let ds = Dataset {
            header: qjudge::dataset::DatasetHeader::new(2, qjudge::dataset::Task::Ranking),
            examples: Examples::Ranking(vec![ex.clone()]),
        };
        let pairs = expand_rankings(&ds, seed).unwrap();
        prop_assert_eq!(pairs.len(), k * (k - 1) / 2);
        pairs.validate().unwrap();
        let Examples::Pairwise(v) = &pairs.examples else { panic!() };
        let mut wins = vec![0usize; k];
        for p in v {
            let PairForm::TwoHeaded { embedding_a, embedding_b, .. } = &p.form else { panic!() };
            let (a, b) = (embedding_a[0] as usize, embedding_b[0] as usize);
            wins[if p.human_pref == 1 { a } else { b }] += 1;
        }
        for (pos, &item) in ex.human_ranking.iter().enumerate() {
            prop_assert_eq!(wins[item], k - 1 - pos);
        }
    }

    #[test]
    fn arbitrary_absolute_values_round_trip(
        rows in prop::collection::vec(
            (prop::collection::vec(-1e6..1e6f64, 3), 1.0..7.0f64, -50.0..50.0f64),
            1..20,
        )
    ) {
        let mut text = String::from("{\"dimension\":3,\"task\":\"absolute\",\"source\":\"prop\"}\n");
        for (i, (e, b, h)) in rows.iter().enumerate() {
            text.push_str(&serde_json::json!({
                "id": format!("x{i}"), "embedding": e, "base_score": b, "human_score": h
            }).to_string());
            text.push('\n');
        }
        let ds: Dataset<f64> = parse_dataset(&text, Labels::Required).unwrap();
        let again: Dataset<f64> = parse_dataset(&dataset_to_string(&ds).unwrap(), Labels::Required).unwrap();
        prop_assert_eq!(again, ds);
    }
}
