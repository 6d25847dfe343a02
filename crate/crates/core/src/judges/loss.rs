//! Training design matrices and the regularized losses with their gradients.

use crate::dataset::{Dataset, Examples, PairForm};
use crate::error::{Error, Result};
use crate::scalar::{dot, log_sum_exp, sigmoid, softmax_into, softplus, Scalar};

use super::predict::two_headed_features;
use super::{JudgeModel, ModelKind, ProbClamp};

/// One row of a single-head judge: embedding features, the base signal and
/// the target (human score for LS, human preference for BTL/BTL2).
#[derive(Debug, Clone, PartialEq)]
struct LinearRow<T> {
    phi: Vec<T>,
    signal: T,
    target: T,
}

#[derive(Debug, Clone, PartialEq)]
struct CategoricalRow<T> {
    phi: Vec<T>,
    /// `log p_s` per label, clamped.
    log_p: Vec<T>,
    label: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct RankingRow<T> {
    phis: Vec<Vec<T>>,
    scores: Vec<T>,
    ranking: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Rows<T> {
    Linear(Vec<LinearRow<T>>),
    Categorical(Vec<CategoricalRow<T>>),
    Ranking(Vec<RankingRow<T>>),
}

/// Examples converted into the feature layout a particular judge trains on.
///
/// Built once per dataset and kind; base probabilities are clamped and
/// turned into logs or log-odds here, and two-headed pairs are reduced to
/// their embedding difference and score-ratio probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<T> {
    kind: ModelKind,
    dimension: usize,
    score_set: Option<Vec<T>>,
    rows: Rows<T>,
}

fn mismatch(kind: ModelKind, what: impl Into<String>) -> Error {
    Error::KindMismatch {
        kind: kind.to_string(),
        what: what.into(),
    }
}

impl<T: Scalar> Design<T> {
    pub fn new(kind: ModelKind, ds: &Dataset<T>, clamp: &ProbClamp<T>) -> Result<Self> {
        let d = ds.header.dimension;
        let line = |i: usize, e: Error| Error::Line {
            line: i + 2,
            source: Box::new(e),
        };
        let rows = match (kind, &ds.examples) {
            (ModelKind::Ls, Examples::Absolute(v)) => Rows::Linear(
                v.iter()
                    .map(|e| LinearRow {
                        phi: e.embedding.clone(),
                        signal: e.base_score,
                        target: e.human_score,
                    })
                    .collect(),
            ),
            (ModelKind::Mn, Examples::Absolute(v)) => {
                let set = ds
                    .header
                    .score_set
                    .as_deref()
                    .ok_or_else(|| Error::MissingField("score_set".into()))?;
                let mut rows = Vec::with_capacity(v.len());
                for (i, e) in v.iter().enumerate() {
                    let probs = e.probs_for(set).map_err(|err| line(i, err))?;
                    let label = ds.header.label_index(e.human_score).ok_or_else(|| {
                        line(
                            i,
                            Error::field(
                                "human_score",
                                format!("{} is not a member of score_set", e.human_score),
                            ),
                        )
                    })?;
                    rows.push(CategoricalRow {
                        phi: e.embedding.clone(),
                        log_p: probs.iter().map(|&p| clamp.log(p)).collect(),
                        label,
                    });
                }
                Rows::Categorical(rows)
            }
            (ModelKind::Btl | ModelKind::Btl2, Examples::Pairwise(v)) => {
                let mut rows = Vec::with_capacity(v.len());
                for (i, e) in v.iter().enumerate() {
                    let (phi, p) = match (&e.form, kind) {
                        (
                            PairForm::Relative {
                                embedding,
                                base_prob_first,
                            },
                            ModelKind::Btl,
                        ) => (embedding.clone(), *base_prob_first),
                        (
                            PairForm::TwoHeaded {
                                embedding_a,
                                embedding_b,
                                base_score_a,
                                base_score_b,
                            },
                            ModelKind::Btl2,
                        ) => two_headed_features(
                            embedding_a,
                            embedding_b,
                            *base_score_a,
                            *base_score_b,
                        )
                        .map_err(|err| line(i, err))?,
                        (form, _) => {
                            return Err(line(
                                i,
                                mismatch(kind, format!("`{}` pairwise examples", form.name())),
                            ))
                        }
                    };
                    rows.push(LinearRow {
                        phi,
                        signal: clamp.log_odds(p),
                        target: T::count(e.human_pref as usize),
                    });
                }
                Rows::Linear(rows)
            }
            (ModelKind::Pl, Examples::Ranking(v)) => Rows::Ranking(
                v.iter()
                    .map(|e| RankingRow {
                        phis: e.items.iter().map(|it| it.embedding.clone()).collect(),
                        scores: e.items.iter().map(|it| it.base_score).collect(),
                        ranking: e.human_ranking.clone(),
                    })
                    .collect(),
            ),
            (_, ex) => return Err(mismatch(kind, format!("a `{}` dataset", ex.task()))),
        };
        Ok(Design {
            kind,
            dimension: d,
            score_set: if kind == ModelKind::Mn {
                ds.header.score_set.clone()
            } else {
                None
            },
            rows,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn score_set(&self) -> Option<&[T]> {
        self.score_set.as_deref()
    }

    pub fn len(&self) -> usize {
        match &self.rows {
            Rows::Linear(v) => v.len(),
            Rows::Categorical(v) => v.len(),
            Rows::Ranking(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        fn pick<R: Clone>(v: &[R], idx: &[usize]) -> Vec<R> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        let rows = match &self.rows {
            Rows::Linear(v) => Rows::Linear(pick(v, indices)),
            Rows::Categorical(v) => Rows::Categorical(pick(v, indices)),
            Rows::Ranking(v) => Rows::Ranking(pick(v, indices)),
        };
        Design {
            kind: self.kind,
            dimension: self.dimension,
            score_set: self.score_set.clone(),
            rows,
        }
    }

    /// Model of this design's shape at the base-judge point.
    pub fn identity_model(&self) -> JudgeModel<T> {
        JudgeModel::identity(self.kind, self.dimension, self.score_set.clone())
            .expect("design shape is valid")
    }

    pub fn zero_model(&self) -> JudgeModel<T> {
        JudgeModel::zeros(self.kind, self.dimension, self.score_set.clone())
            .expect("design shape is valid")
    }

    fn heads(&self) -> usize {
        self.score_set.as_ref().map_or(1, Vec::len)
    }

    pub fn param_len(&self) -> usize {
        JudgeModel::<T>::param_len(self.kind, self.dimension, self.heads())
    }

    pub(crate) fn weight_len(&self) -> usize {
        self.heads() * (self.dimension + 1)
    }

    /// Summed unregularized loss over `batch`; the gradient is accumulated
    /// into `grad` when given.
    pub(crate) fn data_loss(&self, batch: &[usize], params: &[T], mut grad: Option<&mut [T]>) -> T {
        let d = self.dimension;
        let w = d + 1;
        let bias_at = self.weight_len();
        let mut total = T::zero();
        match &self.rows {
            Rows::Linear(rows) => {
                let theta = &params[..w];
                let c = params[bias_at];
                for &i in batch {
                    let r = &rows[i];
                    let z = dot(&theta[..d], &r.phi) + r.signal * theta[d] + c;
                    let slope = if self.kind == ModelKind::Ls {
                        let resid = z - r.target;
                        total += resid * resid;
                        T::lit(2.0) * resid
                    } else {
                        total += softplus(z) - r.target * z;
                        sigmoid(z) - r.target
                    };
                    if let Some(g) = grad.as_deref_mut() {
                        for (gj, &x) in g[..d].iter_mut().zip(&r.phi) {
                            *gj += slope * x;
                        }
                        g[d] += slope * r.signal;
                        g[bias_at] += slope;
                    }
                }
            }
            Rows::Categorical(rows) => {
                let heads = self.heads();
                let mut logits = vec![T::zero(); heads];
                let mut probs = vec![T::zero(); heads];
                for &i in batch {
                    let r = &rows[i];
                    for (s, z) in logits.iter_mut().enumerate() {
                        let th = &params[s * w..(s + 1) * w];
                        *z = dot(&th[..d], &r.phi) + r.log_p[s] * th[d] + params[bias_at + s];
                    }
                    total += log_sum_exp(&logits) - logits[r.label];
                    if let Some(g) = grad.as_deref_mut() {
                        softmax_into(&logits, &mut probs);
                        for (s, &p) in probs.iter().enumerate() {
                            let slope = if s == r.label { p - T::one() } else { p };
                            let gs = &mut g[s * w..(s + 1) * w];
                            for (gj, &x) in gs[..d].iter_mut().zip(&r.phi) {
                                *gj += slope * x;
                            }
                            gs[d] += slope * r.log_p[s];
                            g[bias_at + s] += slope;
                        }
                    }
                }
            }
            Rows::Ranking(rows) => {
                let theta = &params[..w];
                for &i in batch {
                    let r = &rows[i];
                    let k = r.ranking.len();
                    let u: Vec<T> = r
                        .ranking
                        .iter()
                        .map(|&item| dot(&theta[..d], &r.phis[item]) + r.scores[item] * theta[d])
                        .collect();
                    // coefficient of each ranked position's features in the gradient
                    let mut coef = vec![T::zero(); k];
                    let mut weights = vec![T::zero(); k];
                    for stage in 0..k - 1 {
                        let tail = &u[stage..];
                        total += log_sum_exp(tail) - u[stage];
                        if grad.is_some() {
                            softmax_into(tail, &mut weights[..k - stage]);
                            for (j, &wj) in weights[..k - stage].iter().enumerate() {
                                coef[stage + j] += wj;
                            }
                            coef[stage] -= T::one();
                        }
                    }
                    if let Some(g) = grad.as_deref_mut() {
                        for (pos, &cf) in coef.iter().enumerate() {
                            let item = r.ranking[pos];
                            for (gj, &x) in g[..d].iter_mut().zip(&r.phis[item]) {
                                *gj += cf * x;
                            }
                            g[d] += cf * r.scores[item];
                        }
                    }
                }
            }
        }
        total
    }

    /// `γ‖θ‖²` over weights only; biases are not penalized.
    pub(crate) fn penalty(&self, params: &[T], gamma: T, grad: Option<&mut [T]>) -> T {
        let weights = &params[..self.weight_len()];
        if let Some(g) = grad {
            for (gj, &t) in g.iter_mut().zip(weights) {
                *gj += T::lit(2.0) * gamma * t;
            }
        }
        gamma * dot(weights, weights)
    }

    pub(crate) fn check_params(&self, params: &[T]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::DimensionMismatch {
                expected: self.param_len(),
                got: params.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_model(&self, model: &JudgeModel<T>) -> Result<()> {
        if model.kind != self.kind {
            return Err(mismatch(model.kind, format!("{} training data", self.kind)));
        }
        if model.dimension != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: model.dimension,
                got: self.dimension,
            });
        }
        if model.score_set.as_deref() != self.score_set() {
            return Err(Error::invalid("model and data score sets differ"));
        }
        Ok(())
    }

    /// Summed regularized loss over every row.
    pub fn loss(&self, params: &[T], gamma: T) -> Result<T> {
        self.check_params(params)?;
        let all: Vec<usize> = (0..self.len()).collect();
        Ok(self.data_loss(&all, params, None) + self.penalty(params, gamma, None))
    }

    /// Mean unregularized loss: MSE for LS, cross-entropy for MN, logistic
    /// loss for BTL/BTL2, negative permutation log-likelihood for PL.
    pub fn mean_loss(&self, params: &[T]) -> Result<T> {
        if self.is_empty() {
            return Err(Error::invalid("mean loss of an empty set"));
        }
        Ok(self.loss(params, T::zero())? / T::count(self.len()))
    }
}

/// Summed loss over `batch` plus `γ‖θ‖²`, and its exact gradient with
/// respect to `params` (laid out as in [`JudgeModel::params`]).
pub fn loss_and_gradient<T: Scalar>(
    design: &Design<T>,
    batch: &[usize],
    params: &[T],
    gamma: T,
) -> Result<(T, Vec<T>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= design.len()) {
        return Err(Error::invalid(format!("batch index {bad} out of range")));
    }
    design.check_params(params)?;
    let mut grad = vec![T::zero(); params.len()];
    let data = design.data_loss(batch, params, Some(&mut grad));
    let pen = design.penalty(params, gamma, Some(&mut grad));
    Ok((data + pen, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetHeader, PairwiseExample, RankedItem, RankingExample, Task};

    fn pairwise(rows: &[(f64, f64, u8)]) -> Dataset<f64> {
        Dataset {
            header: DatasetHeader::new(1, Task::Pairwise),
            examples: Examples::Pairwise(
                rows.iter()
                    .enumerate()
                    .map(|(i, &(e, p, y))| PairwiseExample {
                        id: i.to_string(),
                        form: PairForm::Relative {
                            embedding: vec![e],
                            base_prob_first: p,
                        },
                        human_pref: y,
                    })
                    .collect(),
            ),
        }
    }

    #[test]
    fn btl_loss_at_zero_is_log2() {
        let ds = pairwise(&[(0.3, 0.5, 1)]);
        let design = Design::new(ModelKind::Btl, &ds, &ProbClamp::default()).unwrap();
        let (l, _) = loss_and_gradient(&design, &[0], &[0.0, 0.0, 0.0], 0.0).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ls_exact_fit_has_zero_loss_and_gradient() {
        let ds = Dataset {
            header: DatasetHeader::new(2, Task::Absolute),
            examples: Examples::Absolute(vec![crate::dataset::AbsoluteExample {
                id: "x".into(),
                embedding: vec![1.0, 2.0],
                base_score: 3.0,
                base_probs: None,
                human_score: 3.1,
            }]),
        };
        let design = Design::new(ModelKind::Ls, &ds, &ProbClamp::default()).unwrap();
        let params = [0.5, -0.25, 1.0, 0.1];
        let (l, g) = loss_and_gradient(&design, &[0], &params, 0.0).unwrap();
        assert!(l < 1e-28);
        assert!(g.iter().all(|x: &f64| x.abs() < 1e-13));
    }

    #[test]
    fn penalty_skips_bias() {
        let ds = pairwise(&[(0.0, 0.5, 1)]);
        let design = Design::new(ModelKind::Btl, &ds, &ProbClamp::default()).unwrap();
        let l0 = design.loss(&[0.0, 0.0, 5.0], 0.0).unwrap();
        let l1 = design.loss(&[0.0, 0.0, 5.0], 3.0).unwrap();
        assert_eq!(l0, l1);
        let l2 = design.loss(&[1.0, 0.0, 5.0], 3.0).unwrap();
        assert!((l2 - design.loss(&[1.0, 0.0, 5.0], 0.0).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn kind_and_shape_errors() {
        let ds = pairwise(&[(0.0, 0.5, 1)]);
        let c = ProbClamp::default();
        assert!(matches!(
            Design::new(ModelKind::Ls, &ds, &c),
            Err(Error::KindMismatch { .. })
        ));
        assert!(Design::new(ModelKind::Btl2, &ds, &c).is_err());
        let design = Design::new(ModelKind::Btl, &ds, &c).unwrap();
        assert!(loss_and_gradient(&design, &[], &[0.0; 3], 0.0).is_err());
        assert!(loss_and_gradient(&design, &[1], &[0.0; 3], 0.0).is_err());
        assert!(loss_and_gradient(&design, &[0], &[0.0; 2], 0.0).is_err());
    }

    #[test]
    fn mn_requires_base_probs() {
        let ds = Dataset {
            header: DatasetHeader {
                score_set: Some(vec![1.0, 2.0]),
                ..DatasetHeader::new(1, Task::Absolute)
            },
            examples: Examples::Absolute(vec![crate::dataset::AbsoluteExample {
                id: "x".into(),
                embedding: vec![1.0],
                base_score: 1.0,
                base_probs: None,
                human_score: 1.0,
            }]),
        };
        let err = Design::new(ModelKind::Mn, &ds, &ProbClamp::default()).unwrap_err();
        assert!(err.to_string().contains("base_probs"), "{err}");
    }

    #[test]
    fn pl_loss_matches_uniform() {
        let ds = Dataset {
            header: DatasetHeader::new(1, Task::Ranking),
            examples: Examples::Ranking(vec![RankingExample {
                id: "r".into(),
                items: (0..3)
                    .map(|i| RankedItem {
                        embedding: vec![i as f64],
                        base_score: 1.0,
                    })
                    .collect(),
                human_ranking: vec![1, 2, 0],
            }]),
        };
        let design = Design::new(ModelKind::Pl, &ds, &ProbClamp::default()).unwrap();
        let (l, g) = loss_and_gradient(&design, &[0], &[0.0, 0.0], 0.0).unwrap();
        assert!((l - 6f64.ln()).abs() < 1e-14);
        assert_eq!(g.len(), 2);
    }
}
