//! Model files: one JSON record with `kind`, `dimension`, `score_set`,
//! `gamma`, `theta`, `bias` and `metadata`. MN weights and biases are maps
//! keyed by the string form of each score label, in score-set order.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::label_key;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{JudgeModel, ModelKind, ModelMetadata};

#[derive(Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
enum ThetaRecord<T> {
    Vector(Vec<T>),
    PerLabel(IndexMap<String, Vec<T>>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
enum BiasRecord<T> {
    Scalar(T),
    PerLabel(IndexMap<String, T>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct ModelRecord<T> {
    kind: ModelKind,
    dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score_set: Option<Vec<T>>,
    gamma: T,
    theta: ThetaRecord<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<BiasRecord<T>>,
    #[serde(default)]
    metadata: ModelMetadata,
}

impl<T: Scalar> JudgeModel<T> {
    fn to_record(&self) -> ModelRecord<T> {
        let (theta, bias) = match (&self.kind, &self.score_set) {
            (ModelKind::Mn, Some(set)) => (
                ThetaRecord::PerLabel(
                    set.iter()
                        .enumerate()
                        .map(|(s, &l)| (label_key(l), self.theta(s).to_vec()))
                        .collect(),
                ),
                Some(BiasRecord::PerLabel(
                    set.iter()
                        .enumerate()
                        .map(|(s, &l)| (label_key(l), self.bias(s)))
                        .collect(),
                )),
            ),
            (ModelKind::Pl, _) => (ThetaRecord::Vector(self.theta(0).to_vec()), None),
            _ => (
                ThetaRecord::Vector(self.theta(0).to_vec()),
                Some(BiasRecord::Scalar(self.bias(0))),
            ),
        };
        ModelRecord {
            kind: self.kind,
            dimension: self.dimension,
            score_set: self.score_set.clone(),
            gamma: self.gamma,
            theta,
            bias,
            metadata: self.metadata.clone(),
        }
    }

    fn from_record(r: ModelRecord<T>) -> Result<Self> {
        let mut m = JudgeModel::zeros(r.kind, r.dimension, r.score_set)?;
        let w = r.dimension + 1;
        let check = |v: &[T]| -> Result<()> {
            if v.len() != w {
                return Err(Error::DimensionMismatch {
                    expected: w,
                    got: v.len(),
                });
            }
            Ok(())
        };
        match (r.kind, r.theta, r.bias) {
            (ModelKind::Mn, ThetaRecord::PerLabel(theta), Some(BiasRecord::PerLabel(bias))) => {
                let set = m.score_set.clone().unwrap_or_default();
                if theta.len() != set.len() || bias.len() != set.len() {
                    return Err(Error::field("theta", "needs one entry per score label"));
                }
                for (s, &label) in set.iter().enumerate() {
                    let key = label_key(label);
                    let row = theta
                        .get(&key)
                        .ok_or_else(|| Error::field("theta", format!("missing label `{key}`")))?;
                    check(row)?;
                    m.theta_mut(s).copy_from_slice(row);
                    let b = *bias
                        .get(&key)
                        .ok_or_else(|| Error::field("bias", format!("missing label `{key}`")))?;
                    m.set_bias(s, b)?;
                }
            }
            (ModelKind::Pl, ThetaRecord::Vector(theta), None) => {
                check(&theta)?;
                m.theta_mut(0).copy_from_slice(&theta);
            }
            (
                ModelKind::Ls | ModelKind::Btl | ModelKind::Btl2,
                ThetaRecord::Vector(theta),
                Some(BiasRecord::Scalar(b)),
            ) => {
                check(&theta)?;
                m.theta_mut(0).copy_from_slice(&theta);
                m.set_bias(0, b)?;
            }
            (kind, _, _) => {
                return Err(Error::field(
                    "theta",
                    format!("parameter layout does not match kind `{kind}`"),
                ))
            }
        }
        if r.gamma < T::zero() || !r.gamma.is_finite() {
            return Err(Error::field("gamma", "must be a finite non-negative number"));
        }
        if m.params().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        m.gamma = r.gamma;
        m.metadata = r.metadata;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
