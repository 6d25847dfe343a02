//! End-to-end train / evaluate / predict and the ablation sweeps built on
//! them. Every function is a pure function of its inputs and seeds.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{
    drop_features, expand_rankings, subsample_dataset, Dataset, Examples, PairForm, Task,
};
use crate::error::{Error, Result};
use crate::judges::{
    argmax_lowest, pl_permutation_log_prob, predict_btl, predict_btl2, predict_ls, predict_mn,
    predict_pl, prefers_first, Design, JudgeModel, ModelKind, ProbClamp,
};
use crate::metrics::{
    classification_metrics, confusion_matrix, kendall_tau, nearest_label, pearson_r,
    regression_metrics, spearman_rho, EvalReport, PerExample,
};
use crate::scalar::Scalar;
use crate::seed::{self, Stream};
use crate::training::{cross_validate_gamma, sgd_fit, SgdConfig, DEFAULT_GAMMA_GRID};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice<T> {
    /// Chosen by k-fold cross-validation over the grid.
    Auto,
    Fixed(T),
}

#[derive(Debug, Clone)]
pub struct TrainOptions<T> {
    pub kind: ModelKind,
    pub gamma: GammaChoice<T>,
    pub grid: Vec<T>,
    pub folds: usize,
    pub sgd: SgdConfig<T>,
    /// Master seed; SGD order, CV folds and pair slots derive from it.
    pub seed: u64,
    /// Train pairwise kinds on rankings expanded into all pairs.
    pub expand_pairs: bool,
    pub clamp: ProbClamp<T>,
}

impl<T: Scalar> TrainOptions<T> {
    pub fn new(kind: ModelKind) -> Self {
        TrainOptions {
            kind,
            gamma: GammaChoice::Auto,
            grid: DEFAULT_GAMMA_GRID.iter().map(|&g| T::lit(g)).collect(),
            folds: 5,
            sgd: SgdConfig::default(),
            seed: 0,
            expand_pairs: false,
            clamp: ProbClamp::default(),
        }
    }

    fn with_seed(&self, seed: u64) -> Self {
        TrainOptions {
            seed,
            ..self.clone()
        }
    }
}

/// Checks that `kind` can be trained or evaluated on `ds`, expanding
/// rankings into pairs when asked.
pub fn prepare_dataset<T: Scalar>(
    ds: &Dataset<T>,
    kind: ModelKind,
    expand_pairs: bool,
    seed: u64,
) -> Result<Dataset<T>> {
    let ok = matches!(
        (ds.header.task, kind),
        (Task::Absolute, ModelKind::Ls | ModelKind::Mn)
            | (Task::Pairwise, ModelKind::Btl | ModelKind::Btl2)
            | (Task::Ranking, ModelKind::Pl)
    );
    if ok {
        return Ok(ds.clone());
    }
    if ds.header.task == Task::Ranking && kind == ModelKind::Btl2 {
        if expand_pairs {
            return expand_rankings(ds, seed::derive(seed, Stream::PairSlots, 0));
        }
        return Err(Error::KindMismatch {
            kind: kind.to_string(),
            what: "a ranking dataset without pair expansion (--expand-pairs)".into(),
        });
    }
    Err(Error::KindMismatch {
        kind: kind.to_string(),
        what: format!("a `{}` dataset", ds.header.task),
    })
}

/// Fits a judge of `opts.kind` on `ds`, selecting γ by cross-validation when
/// `opts.gamma` is [`GammaChoice::Auto`].
pub fn train<T: Scalar>(ds: &Dataset<T>, opts: &TrainOptions<T>) -> Result<JudgeModel<T>> {
    let ds = prepare_dataset(ds, opts.kind, opts.expand_pairs, opts.seed)?;
    let design = Design::new(opts.kind, &ds, &opts.clamp)?;
    if design.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let sgd = SgdConfig {
        shuffle_seed: seed::derive(opts.seed, Stream::Sgd, 0),
        ..opts.sgd.clone()
    };
    let mut model = match opts.gamma {
        GammaChoice::Fixed(g) => sgd_fit(&design, g, &sgd)?,
        GammaChoice::Auto => {
            let folds = opts.folds.min(design.len());
            if folds < 2 {
                // a single example cannot be cross-validated
                let g = *opts
                    .grid
                    .first()
                    .ok_or_else(|| Error::invalid("empty gamma grid"))?;
                sgd_fit(&design, g, &sgd)?
            } else {
                let cv_seed = seed::derive(opts.seed, Stream::CvFolds, 0);
                cross_validate_gamma(&design, &opts.grid, folds, &sgd, cv_seed)?.1
            }
        }
    };
    model.metadata.seed = Some(opts.seed);
    Ok(model)
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions<T> {
    /// Clip LS predictions to the score-set range before scoring.
    pub clip_to_score_set: bool,
    pub per_example: bool,
    pub expand_pairs: bool,
    pub seed: u64,
    pub clamp: ProbClamp<T>,
}

impl<T: Scalar> Default for EvalOptions<T> {
    fn default() -> Self {
        EvalOptions {
            clip_to_score_set: false,
            per_example: false,
            expand_pairs: false,
            seed: 0,
            clamp: ProbClamp::default(),
        }
    }
}

fn check_dimension<T: Scalar>(model: &JudgeModel<T>, ds: &Dataset<T>) -> Result<()> {
    if model.dimension != ds.header.dimension {
        return Err(Error::DimensionMismatch {
            expected: model.dimension,
            got: ds.header.dimension,
        });
    }
    Ok(())
}

fn clip<T: Scalar>(x: T, set: Option<&[T]>, enabled: bool) -> T {
    match (set, enabled) {
        (Some(s), true) => x.max(s[0]).min(s[s.len() - 1]),
        _ => x,
    }
}

fn f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn per_example(ids: Vec<String>, preds: &[f64], truths: &[f64]) -> Vec<PerExample> {
    ids.into_iter()
        .zip(preds.iter().zip(truths))
        .map(|(id, (&prediction, &truth))| PerExample {
            id,
            prediction,
            truth,
        })
        .collect()
}

/// Every metric applicable to the model kind, on a labelled dataset.
pub fn evaluate<T: Scalar>(
    model: &JudgeModel<T>,
    ds: &Dataset<T>,
    opts: &EvalOptions<T>,
) -> Result<EvalReport> {
    check_dimension(model, ds)?;
    let ds = prepare_dataset(ds, model.kind, opts.expand_pairs, opts.seed)?;
    if ds.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let design = Design::new(model.kind, &ds, &opts.clamp)?;
    design.check_model(model)?;
    let mut report = EvalReport::empty(ds.header.task, model.kind.as_str(), ds.len());
    report.loss = Some(design.mean_loss(model.params())?.as_f64());
    let clamp = &opts.clamp;

    match (&ds.examples, model.kind) {
        (Examples::Absolute(v), ModelKind::Ls) => {
            let set = ds.header.score_set.as_deref();
            let preds = v
                .iter()
                .map(|e| {
                    Ok(clip(
                        predict_ls(&e.embedding, e.base_score, model)?,
                        set,
                        opts.clip_to_score_set,
                    ))
                })
                .collect::<Result<Vec<T>>>()?;
            let truths: Vec<T> = v.iter().map(|e| e.human_score).collect();
            let (mse, mae) = regression_metrics(&preds, &truths)?;
            report.mse = Some(mse.as_f64());
            report.mae = Some(mae.as_f64());
            if let Some(set) = set {
                let labels: Vec<T> = preds.iter().map(|&p| nearest_label(p, set)).collect();
                let c = confusion_matrix(&labels, &truths, set)?;
                report.accuracy = Some(c.trace() as f64 / c.total() as f64);
                report.confusion = Some(c);
            }
            report.set_correlations(&preds, &truths);
            report.correlation_input = if opts.clip_to_score_set {
                "clipped_score".into()
            } else {
                "raw_score".into()
            };
            if opts.per_example {
                report.per_example = Some(per_example(
                    v.iter().map(|e| e.id.clone()).collect(),
                    &f64s(&preds),
                    &f64s(&truths),
                ));
            }
        }
        (Examples::Absolute(v), ModelKind::Mn) => {
            let set = model.score_set.as_deref().expect("MN model has a score set");
            let labels = v
                .iter()
                .map(|e| {
                    let probs = e.probs_for(set)?;
                    let dist = predict_mn(&e.embedding, &probs, model, clamp)?;
                    Ok(set[argmax_lowest(&dist)])
                })
                .collect::<Result<Vec<T>>>()?;
            let truths: Vec<T> = v.iter().map(|e| e.human_score).collect();
            let (mse, mae) = regression_metrics(&labels, &truths)?;
            report.mse = Some(mse.as_f64());
            report.mae = Some(mae.as_f64());
            let c = confusion_matrix(&labels, &truths, set)?;
            report.accuracy = Some(c.trace() as f64 / c.total() as f64);
            report.confusion = Some(c);
            report.set_correlations(&labels, &truths);
            report.correlation_input = "predicted_label".into();
            if opts.per_example {
                report.per_example = Some(per_example(
                    v.iter().map(|e| e.id.clone()).collect(),
                    &f64s(&labels),
                    &f64s(&truths),
                ));
            }
        }
        (Examples::Pairwise(v), ModelKind::Btl | ModelKind::Btl2) => {
            let preds = v
                .iter()
                .map(|e| {
                    let p = match &e.form {
                        PairForm::Relative {
                            embedding,
                            base_prob_first,
                        } => predict_btl(embedding, *base_prob_first, model, clamp)?,
                        PairForm::TwoHeaded {
                            embedding_a,
                            embedding_b,
                            base_score_a,
                            base_score_b,
                        } => predict_btl2(
                            embedding_a,
                            embedding_b,
                            *base_score_a,
                            *base_score_b,
                            model,
                            clamp,
                        )?,
                    };
                    Ok(if prefers_first(p) { T::one() } else { T::zero() })
                })
                .collect::<Result<Vec<T>>>()?;
            let truths: Vec<T> = v
                .iter()
                .map(|e| T::count(e.human_pref as usize))
                .collect();
            let cls = classification_metrics(&preds, &truths, &T::one())?;
            report.accuracy = Some(cls.accuracy);
            report.precision = Some(cls.precision);
            report.recall = Some(cls.recall);
            report.f1 = Some(cls.f1);
            report.confusion = Some(confusion_matrix(&preds, &truths, &[T::zero(), T::one()])?);
            report.set_correlations(&preds, &truths);
            report.correlation_input = "predicted_label".into();
            if opts.per_example {
                report.per_example = Some(per_example(
                    v.iter().map(|e| e.id.clone()).collect(),
                    &f64s(&preds),
                    &f64s(&truths),
                ));
            }
        }
        (Examples::Ranking(v), ModelKind::Pl) => {
            let mut hits = 0usize;
            let (mut r, mut rho, mut tau) = (Vec::new(), Vec::new(), Vec::new());
            let mut choices = Vec::with_capacity(v.len());
            for e in v {
                let dist = predict_pl(&e.items, model)?;
                let choice = argmax_lowest(&dist);
                if choice == e.human_ranking[0] {
                    hits += 1;
                }
                choices.push(choice as f64);
                let k = e.items.len();
                let mut human = vec![T::zero(); k];
                for (pos, &item) in e.human_ranking.iter().enumerate() {
                    human[item] = T::count(k - pos);
                }
                if let Ok(x) = pearson_r(&dist, &human) {
                    r.push(x.as_f64());
                }
                if let Ok(x) = spearman_rho(&dist, &human) {
                    rho.push(x.as_f64());
                }
                if let Ok(x) = kendall_tau(&dist, &human) {
                    tau.push(x);
                }
            }
            let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            report.accuracy = Some(hits as f64 / v.len() as f64);
            report.pearson_r = avg(&r);
            report.spearman_rho = avg(&rho);
            report.kendall_tau = avg(&tau);
            report.correlation_input = "per_ranking_mean".into();
            if opts.per_example {
                let truths: Vec<f64> = v.iter().map(|e| e.human_ranking[0] as f64).collect();
                report.per_example = Some(per_example(
                    v.iter().map(|e| e.id.clone()).collect(),
                    &choices,
                    &truths,
                ));
            }
        }
        (ex, kind) => {
            return Err(Error::KindMismatch {
                kind: kind.to_string(),
                what: format!("a `{}` dataset", ex.task()),
            })
        }
    }
    Ok(report)
}

/// One prediction record, in input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Prediction {
    Score {
        id: String,
        score: f64,
    },
    Distribution {
        id: String,
        distribution: indexmap::IndexMap<String, f64>,
        label: f64,
    },
    Preference {
        id: String,
        probability: f64,
        preferred: &'static str,
    },
    Choice {
        id: String,
        distribution: Vec<f64>,
        choice: usize,
    },
}

/// Predictions for unlabeled (or labelled) inputs.
pub fn predict<T: Scalar>(
    model: &JudgeModel<T>,
    ds: &Dataset<T>,
    clip_to_score_set: bool,
    clamp: &ProbClamp<T>,
) -> Result<Vec<Prediction>> {
    check_dimension(model, ds)?;
    match (&ds.examples, model.kind) {
        (Examples::Absolute(v), ModelKind::Ls) => v
            .iter()
            .map(|e| {
                let s = predict_ls(&e.embedding, e.base_score, model)?;
                let s = clip(s, ds.header.score_set.as_deref(), clip_to_score_set);
                Ok(Prediction::Score {
                    id: e.id.clone(),
                    score: s.as_f64(),
                })
            })
            .collect(),
        (Examples::Absolute(v), ModelKind::Mn) => {
            let set = model.score_set.as_deref().expect("MN model has a score set");
            v.iter()
                .map(|e| {
                    let probs = e.probs_for(set)?;
                    let dist = predict_mn(&e.embedding, &probs, model, clamp)?;
                    Ok(Prediction::Distribution {
                        id: e.id.clone(),
                        label: set[argmax_lowest(&dist)].as_f64(),
                        distribution: set
                            .iter()
                            .zip(&dist)
                            .map(|(&l, &p)| (crate::dataset::label_key(l), p.as_f64()))
                            .collect(),
                    })
                })
                .collect()
        }
        (Examples::Pairwise(v), ModelKind::Btl | ModelKind::Btl2) => v
            .iter()
            .map(|e| {
                let p = match &e.form {
                    PairForm::Relative {
                        embedding,
                        base_prob_first,
                    } => predict_btl(embedding, *base_prob_first, model, clamp)?,
                    PairForm::TwoHeaded {
                        embedding_a,
                        embedding_b,
                        base_score_a,
                        base_score_b,
                    } => predict_btl2(
                        embedding_a,
                        embedding_b,
                        *base_score_a,
                        *base_score_b,
                        model,
                        clamp,
                    )?,
                };
                Ok(Prediction::Preference {
                    id: e.id.clone(),
                    probability: p.as_f64(),
                    preferred: if prefers_first(p) { "first" } else { "second" },
                })
            })
            .collect(),
        (Examples::Ranking(v), ModelKind::Pl) => v
            .iter()
            .map(|e| {
                let dist = predict_pl(&e.items, model)?;
                Ok(Prediction::Choice {
                    id: e.id.clone(),
                    choice: argmax_lowest(&dist),
                    distribution: f64s(&dist),
                })
            })
            .collect(),
        (ex, kind) => Err(Error::KindMismatch {
            kind: kind.to_string(),
            what: format!("a `{}` dataset", ex.task()),
        }),
    }
}

/// Log-probability a PL model assigns to each labelled ranking.
pub fn ranking_log_probs<T: Scalar>(model: &JudgeModel<T>, ds: &Dataset<T>) -> Result<Vec<T>> {
    check_dimension(model, ds)?;
    let Examples::Ranking(v) = &ds.examples else {
        return Err(Error::invalid("ranking log-probabilities need a ranking dataset"));
    };
    v.iter()
        .map(|e| pl_permutation_log_prob(&e.items, &e.human_ranking, model))
        .collect()
}

// ---------------------------------------------------------------------------
// Ablations

/// One observation of an ablation sweep: the swept value, the run index and
/// the test-set report of the model trained at that point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub setting: f64,
    /// Run index; `None` for per-setting means.
    pub run: Option<usize>,
    pub n_train: usize,
    pub dimension: usize,
    pub gamma: f64,
    pub theta_norm: f64,
    pub report: EvalReport,
}

/// Seed of run `run` under the master seed.
pub fn run_seed(master: u64, run: usize) -> u64 {
    seed::derive(master, Stream::Split, run as u64 + 1_000)
}

fn fit_and_score<T: Scalar>(
    train_ds: &Dataset<T>,
    test_ds: &Dataset<T>,
    opts: &TrainOptions<T>,
    setting: f64,
    run: Option<usize>,
) -> Result<AblationRow> {
    let model = train(train_ds, opts)?;
    let eval = EvalOptions {
        expand_pairs: opts.expand_pairs,
        seed: opts.seed,
        clamp: opts.clamp,
        ..EvalOptions::default()
    };
    let report = evaluate(&model, test_ds, &eval)?;
    Ok(AblationRow {
        setting,
        run,
        n_train: model.metadata.training_size.unwrap_or(0),
        dimension: model.dimension,
        gamma: model.gamma.as_f64(),
        theta_norm: model.theta_norm().as_f64(),
        report,
    })
}

/// Training-set size sweep: for each fraction and run, subsample the train
/// set, train, and score on the fixed test set.
pub fn ablate_size<T: Scalar>(
    train_ds: &Dataset<T>,
    test_ds: &Dataset<T>,
    opts: &TrainOptions<T>,
    fractions: &[f64],
    n_seeds: usize,
) -> Result<Vec<AblationRow>> {
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::invalid(format!("fraction {f} outside (0, 1]")));
    }
    let jobs: Vec<(f64, usize)> = fractions
        .iter()
        .flat_map(|&f| (0..n_seeds).map(move |r| (f, r)))
        .collect();
    jobs.par_iter()
        .map(|&(fraction, run)| {
            let rs = run_seed(opts.seed, run);
            let sub = subsample_dataset(train_ds, fraction, seed::derive(rs, Stream::Subsample, 0))?;
            fit_and_score(&sub, test_ds, &opts.with_seed(rs), fraction, Some(run))
        })
        .collect()
}

/// Fixed-γ sweep on the full train set.
pub fn ablate_gamma<T: Scalar>(
    train_ds: &Dataset<T>,
    test_ds: &Dataset<T>,
    opts: &TrainOptions<T>,
    grid: &[T],
) -> Result<Vec<AblationRow>> {
    grid.par_iter()
        .map(|&g| {
            let o = TrainOptions {
                gamma: GammaChoice::Fixed(g),
                ..opts.clone()
            };
            fit_and_score(train_ds, test_ds, &o, g.as_f64(), None)
        })
        .collect()
}

/// Feature-dropping sweep: per drop fraction and run, remove one random
/// coordinate subset from both train and test embeddings, retrain, score.
pub fn ablate_features<T: Scalar>(
    train_ds: &Dataset<T>,
    test_ds: &Dataset<T>,
    opts: &TrainOptions<T>,
    drops: &[f64],
    n_seeds: usize,
) -> Result<Vec<AblationRow>> {
    if train_ds.header.dimension != test_ds.header.dimension {
        return Err(Error::DimensionMismatch {
            expected: train_ds.header.dimension,
            got: test_ds.header.dimension,
        });
    }
    let jobs: Vec<(f64, usize)> = drops
        .iter()
        .flat_map(|&f| (0..n_seeds).map(move |r| (f, r)))
        .collect();
    jobs.par_iter()
        .map(|&(drop, run)| {
            let rs = run_seed(opts.seed, run);
            let drop_seed = seed::derive(rs, Stream::FeatureDrop, 0);
            let (tr, _) = drop_features(train_ds, drop, drop_seed)?;
            let (te, _) = drop_features(test_ds, drop, drop_seed)?;
            fit_and_score(&tr, &te, &opts.with_seed(rs), drop, Some(run))
        })
        .collect()
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-setting means of every numeric column, in first-appearance order of
/// the settings.
pub fn summarize(rows: &[AblationRow]) -> Vec<AblationRow> {
    let mut settings: Vec<f64> = Vec::new();
    for r in rows {
        if !settings.contains(&r.setting) {
            settings.push(r.setting);
        }
    }
    settings
        .into_iter()
        .map(|s| {
            let group: Vec<&AblationRow> = rows.iter().filter(|r| r.setting == s).collect();
            let first = group[0];
            let m = |f: fn(&EvalReport) -> Option<f64>| mean_opt(group.iter().map(|r| f(&r.report)));
            let mut report = EvalReport::empty(first.report.task, &first.report.kind, first.report.n);
            report.loss = m(|r| r.loss);
            report.mse = m(|r| r.mse);
            report.mae = m(|r| r.mae);
            report.accuracy = m(|r| r.accuracy);
            report.precision = m(|r| r.precision);
            report.recall = m(|r| r.recall);
            report.f1 = m(|r| r.f1);
            report.pearson_r = m(|r| r.pearson_r);
            report.spearman_rho = m(|r| r.spearman_rho);
            report.kendall_tau = m(|r| r.kendall_tau);
            report.correlation_input = first.report.correlation_input.clone();
            let k = group.len() as f64;
            AblationRow {
                setting: s,
                run: None,
                n_train: (group.iter().map(|r| r.n_train).sum::<usize>() as f64 / k).round() as usize,
                dimension: first.dimension,
                gamma: group.iter().map(|r| r.gamma).sum::<f64>() / k,
                theta_norm: group.iter().map(|r| r.theta_norm).sum::<f64>() / k,
                report,
            }
        })
        .collect()
}
