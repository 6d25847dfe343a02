//! Generalized linear judges over a frozen base judge's rationale embedding.
//!
//! Every judge scores the feature vector `φ(e) ⊕ signal`, where `signal` is
//! the base judge's own output (a score, a log-probability, a log-odds). At
//! the parameter point `θ = 0_d ⊕ 1, c = 0` each judge reproduces its base
//! judge exactly, see [`JudgeModel::identity`].

mod loss;
mod persist;
mod predict;

pub use loss::{loss_and_gradient, Design};
pub use predict::{
    argmax_lowest, pl_permutation_log_prob, predict_btl, predict_btl2, predict_ls, predict_mn,
    predict_pl, prefers_first,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm2, Scalar};
use crate::training::CvRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Least-squares regression on an absolute score.
    Ls,
    /// Multinomial logistic regression over a categorical score set.
    Mn,
    /// Bradley-Terry-Luce on a relative judge's preference.
    Btl,
    /// BTL over two absolute evaluations (embedding difference, score ratio).
    Btl2,
    /// Plackett-Luce over K absolute evaluations.
    Pl,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Ls,
        ModelKind::Mn,
        ModelKind::Btl,
        ModelKind::Btl2,
        ModelKind::Pl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ls => "ls",
            ModelKind::Mn => "mn",
            ModelKind::Btl => "btl",
            ModelKind::Btl2 => "btl2",
            ModelKind::Pl => "pl",
        }
    }

    pub fn has_bias(self) -> bool {
        self != ModelKind::Pl
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(ModelKind::Ls),
            "mn" => Ok(ModelKind::Mn),
            "btl" => Ok(ModelKind::Btl),
            "btl2" => Ok(ModelKind::Btl2),
            "pl" => Ok(ModelKind::Pl),
            _ => Err(Error::invalid(format!("unknown model kind `{s}`"))),
        }
    }
}

/// Clamp applied to base-judge probabilities before taking logs or log-odds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbClamp<T> {
    epsilon: T,
}

impl<T: Scalar> ProbClamp<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon < T::lit(0.5)) {
            return Err(Error::invalid(format!("clamp epsilon {epsilon} outside (0, 0.5)")));
        }
        Ok(ProbClamp { epsilon })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn apply(&self, p: T) -> T {
        p.max(self.epsilon).min(T::one() - self.epsilon)
    }

    pub fn log(&self, p: T) -> T {
        self.apply(p).ln()
    }

    pub fn log_odds(&self, p: T) -> T {
        let p = self.apply(p);
        (p / (T::one() - p)).ln()
    }
}

impl<T: Scalar> Default for ProbClamp<T> {
    fn default() -> Self {
        ProbClamp {
            epsilon: T::lit(1e-9),
        }
    }
}

/// Training provenance stored alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    /// Epoch whose end-of-epoch parameters were kept (0 = initial point).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    /// ‖∇L‖₂ of the regularized summed training loss at the kept parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_gradient_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvRecord>,
}

/// A fitted (or hand-built) judge.
///
/// Parameters live in one flat vector: `heads` rows of `θ` (each of length
/// `dimension + 1`, the last entry weighting the base signal) followed by
/// `heads` bias terms. LS/BTL/BTL2/PL have one head, MN one per score label;
/// PL has no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeModel<T> {
    pub kind: ModelKind,
    pub dimension: usize,
    pub score_set: Option<Vec<T>>,
    pub gamma: T,
    params: Vec<T>,
    pub metadata: ModelMetadata,
}

impl<T: Scalar> JudgeModel<T> {
    fn check_shape(kind: ModelKind, dimension: usize, score_set: Option<&[T]>) -> Result<usize> {
        if dimension == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        match (kind, score_set) {
            (ModelKind::Mn, Some(s)) => {
                crate::dataset::validate_score_set(s)?;
                Ok(s.len())
            }
            (ModelKind::Mn, None) => Err(Error::MissingField("score_set".into())),
            (_, _) => Ok(1),
        }
    }

    /// Number of parameters for a model of this shape.
    pub fn param_len(kind: ModelKind, dimension: usize, heads: usize) -> usize {
        heads * (dimension + 1) + if kind.has_bias() { heads } else { 0 }
    }

    /// All-zero parameters.
    pub fn zeros(kind: ModelKind, dimension: usize, score_set: Option<Vec<T>>) -> Result<Self> {
        let heads = Self::check_shape(kind, dimension, score_set.as_deref())?;
        let score_set = if kind == ModelKind::Mn { score_set } else { None };
        Ok(JudgeModel {
            kind,
            dimension,
            score_set,
            gamma: T::zero(),
            params: vec![T::zero(); Self::param_len(kind, dimension, heads)],
            metadata: ModelMetadata::default(),
        })
    }

    /// The base-judge point `θ = 0_d ⊕ 1`, `c = 0` (per head for MN).
    ///
    /// For PL this scores item `k` by its base score, so the most probable
    /// choice is the base judge's top-scored item.
    pub fn identity(kind: ModelKind, dimension: usize, score_set: Option<Vec<T>>) -> Result<Self> {
        let mut m = Self::zeros(kind, dimension, score_set)?;
        for h in 0..m.heads() {
            m.theta_mut(h)[dimension] = T::one();
        }
        Ok(m)
    }

    pub fn from_params(
        kind: ModelKind,
        dimension: usize,
        score_set: Option<Vec<T>>,
        params: Vec<T>,
    ) -> Result<Self> {
        let mut m = Self::zeros(kind, dimension, score_set)?;
        if params.len() != m.params.len() {
            return Err(Error::DimensionMismatch {
                expected: m.params.len(),
                got: params.len(),
            });
        }
        m.params = params;
        Ok(m)
    }

    pub fn heads(&self) -> usize {
        match self.kind {
            ModelKind::Mn => self.score_set.as_ref().map_or(0, Vec::len),
            _ => 1,
        }
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// All weight entries (every θ row, no biases).
    pub fn weights(&self) -> &[T] {
        &self.params[..self.heads() * (self.dimension + 1)]
    }

    pub fn theta(&self, head: usize) -> &[T] {
        let w = self.dimension + 1;
        &self.params[head * w..(head + 1) * w]
    }

    pub fn theta_mut(&mut self, head: usize) -> &mut [T] {
        let w = self.dimension + 1;
        &mut self.params[head * w..(head + 1) * w]
    }

    pub fn bias(&self, head: usize) -> T {
        if self.kind.has_bias() {
            self.params[self.heads() * (self.dimension + 1) + head]
        } else {
            T::zero()
        }
    }

    pub fn set_bias(&mut self, head: usize, value: T) -> Result<()> {
        if !self.kind.has_bias() {
            return Err(Error::invalid(format!("{} models carry no bias", self.kind)));
        }
        let at = self.heads() * (self.dimension + 1) + head;
        self.params[at] = value;
        Ok(())
    }

    /// ‖θ‖₂ over every weight row, biases excluded.
    pub fn theta_norm(&self) -> T {
        norm2(self.weights())
    }

    /// Score `φ·θ[..d] + signal·θ[d] + c` of one head.
    pub(crate) fn head_logit(&self, head: usize, embedding: &[T], signal: T) -> T {
        let theta = self.theta(head);
        let d = self.dimension;
        crate::scalar::dot(&theta[..d], embedding) + signal * theta[d] + self.bias(head)
    }

    pub(crate) fn expect_kind(&self, kinds: &[ModelKind], what: &str) -> Result<()> {
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                kind: self.kind.to_string(),
                what: what.to_string(),
            })
        }
    }

    pub(crate) fn expect_dimension(&self, embedding: &[T]) -> Result<()> {
        if embedding.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: embedding.len(),
            });
        }
        if embedding.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let m = JudgeModel::<f64>::identity(ModelKind::Mn, 3, Some(vec![1.0, 2.0])).unwrap();
        assert_eq!(m.params().len(), 2 * 4 + 2);
        assert_eq!(m.theta(1), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.bias(1), 0.0);
        assert_eq!(m.theta_norm(), 2f64.sqrt());

        let pl = JudgeModel::<f64>::zeros(ModelKind::Pl, 3, None).unwrap();
        assert_eq!(pl.params().len(), 4);
        assert_eq!(pl.bias(0), 0.0);
        assert!(JudgeModel::<f64>::zeros(ModelKind::Mn, 3, None).is_err());
        assert!(JudgeModel::<f64>::zeros(ModelKind::Ls, 0, None).is_err());
    }

    #[test]
    fn clamp_bounds() {
        assert!(ProbClamp::new(0.0_f64).is_err());
        assert!(ProbClamp::new(0.5_f64).is_err());
        let c = ProbClamp::<f64>::default();
        assert_eq!(c.apply(0.0), 1e-9);
        assert_eq!(c.apply(1.0), 1.0 - 1e-9);
        assert!(c.log_odds(1.0).is_finite());
    }

    #[test]
    fn kind_parsing() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("probit".parse::<ModelKind>().is_err());
    }
}
