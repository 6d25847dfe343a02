use crate::dataset::{RankedItem, PROB_SUM_TOL};
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, sigmoid, softmax, Scalar};

use super::{JudgeModel, ModelKind, ProbClamp};

/// LS judge: `(φ ⊕ b)·θ + c`, unclipped.
pub fn predict_ls<T: Scalar>(embedding: &[T], base_score: T, model: &JudgeModel<T>) -> Result<T> {
    model.expect_kind(&[ModelKind::Ls], "an absolute score prediction")?;
    model.expect_dimension(embedding)?;
    if !base_score.is_finite() {
        return Err(Error::NonFinite("base_score".into()));
    }
    Ok(model.head_logit(0, embedding, base_score))
}

/// MN judge: distribution over the score set. `base_probs` is in score-set
/// order and is clamped before its logarithm is taken.
pub fn predict_mn<T: Scalar>(
    embedding: &[T],
    base_probs: &[T],
    model: &JudgeModel<T>,
    clamp: &ProbClamp<T>,
) -> Result<Vec<T>> {
    model.expect_kind(&[ModelKind::Mn], "a categorical score prediction")?;
    model.expect_dimension(embedding)?;
    if base_probs.len() != model.heads() {
        return Err(Error::DimensionMismatch {
            expected: model.heads(),
            got: base_probs.len(),
        });
    }
    let sum: T = base_probs.iter().copied().sum();
    if (sum.as_f64() - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::ProbabilitySum(format!("{sum}")));
    }
    let logits: Vec<T> = base_probs
        .iter()
        .enumerate()
        .map(|(s, &p)| model.head_logit(s, embedding, clamp.log(p)))
        .collect();
    Ok(softmax(&logits))
}

/// BTL judge: probability that the first response is preferred, from the
/// base judge's (clamped) probability `p` of preferring it.
pub fn predict_btl<T: Scalar>(
    embedding: &[T],
    base_prob_first: T,
    model: &JudgeModel<T>,
    clamp: &ProbClamp<T>,
) -> Result<T> {
    model.expect_kind(&[ModelKind::Btl, ModelKind::Btl2], "a pairwise preference")?;
    model.expect_dimension(embedding)?;
    if !base_prob_first.is_finite() {
        return Err(Error::NonFinite("base_prob_first".into()));
    }
    Ok(sigmoid(model.head_logit(0, embedding, clamp.log_odds(base_prob_first))))
}

/// `(φ_a − φ_b, b_a / (b_a + b_b))`: the BTL input built from two absolute
/// evaluations.
pub(crate) fn two_headed_features<T: Scalar>(
    embedding_a: &[T],
    embedding_b: &[T],
    base_score_a: T,
    base_score_b: T,
) -> Result<(Vec<T>, T)> {
    for (name, b) in [("base_score_a", base_score_a), ("base_score_b", base_score_b)] {
        if !(b.is_finite() && b > T::zero()) {
            return Err(Error::field(name, format!("{b} is not a positive score")));
        }
    }
    if embedding_a.len() != embedding_b.len() {
        return Err(Error::DimensionMismatch {
            expected: embedding_a.len(),
            got: embedding_b.len(),
        });
    }
    let diff = embedding_a
        .iter()
        .zip(embedding_b)
        .map(|(&a, &b)| a - b)
        .collect();
    Ok((diff, base_score_a / (base_score_a + base_score_b)))
}

/// Two-headed BTL judge.
pub fn predict_btl2<T: Scalar>(
    embedding_a: &[T],
    embedding_b: &[T],
    base_score_a: T,
    base_score_b: T,
    model: &JudgeModel<T>,
    clamp: &ProbClamp<T>,
) -> Result<T> {
    model.expect_kind(&[ModelKind::Btl2], "a two-headed preference")?;
    let (diff, p) = two_headed_features(embedding_a, embedding_b, base_score_a, base_score_b)?;
    predict_btl(&diff, p, model, clamp)
}

/// First response preferred iff the probability is strictly above 1/2.
pub fn prefers_first<T: Scalar>(prob_first: T) -> bool {
    prob_first > T::lit(0.5)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn pl_utilities<T: Scalar>(items: &[RankedItem<T>], model: &JudgeModel<T>) -> Result<Vec<T>> {
    model.expect_kind(&[ModelKind::Pl], "a K-way ranking")?;
    if items.len() < 2 {
        return Err(Error::invalid(format!(
            "Plackett-Luce needs at least 2 items, got {}",
            items.len()
        )));
    }
    items
        .iter()
        .map(|it| {
            model.expect_dimension(&it.embedding)?;
            Ok(model.head_logit(0, &it.embedding, it.base_score))
        })
        .collect()
}

/// PL judge: categorical distribution over which of the K items is best.
/// The judge's choice is [`argmax_lowest`] of the result.
pub fn predict_pl<T: Scalar>(items: &[RankedItem<T>], model: &JudgeModel<T>) -> Result<Vec<T>> {
    Ok(softmax(&pl_utilities(items, model)?))
}

/// Log-probability of observing `ranking` (best first) under the PL judge.
pub fn pl_permutation_log_prob<T: Scalar>(
    items: &[RankedItem<T>],
    ranking: &[usize],
    model: &JudgeModel<T>,
) -> Result<T> {
    let u = pl_utilities(items, model)?;
    crate::dataset::validate_permutation(ranking, items.len())?;
    let ordered: Vec<T> = ranking.iter().map(|&i| u[i]).collect();
    let mut total = T::zero();
    for k in 0..ordered.len() - 1 {
        total += ordered[k] - log_sum_exp(&ordered[k..]);
    }
    Ok(total)
}
