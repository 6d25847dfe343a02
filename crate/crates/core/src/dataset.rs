//! Line-delimited dataset files and the sampling transforms applied to them.
//!
//! A dataset file is UTF-8 text with one JSON record per line. The first line
//! is a [`DatasetHeader`]; every following line is an example whose shape is
//! fixed by the header's `task`.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// Tolerance on `Σ p_s = 1` for base-judge score distributions.
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Absolute,
    Pairwise,
    Ranking,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Absolute => "absolute",
            Task::Pairwise => "pairwise",
            Task::Ranking => "ranking",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct DatasetHeader<T> {
    pub dimension: usize,
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_set: Option<Vec<T>>,
    pub source: String,
}

impl<T: Scalar> DatasetHeader<T> {
    pub fn new(dimension: usize, task: Task) -> Self {
        DatasetHeader {
            dimension,
            task,
            score_set: None,
            source: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::field("dimension", "must be positive"));
        }
        if let Some(set) = &self.score_set {
            validate_score_set(set)?;
        }
        Ok(())
    }

    /// Index of `label` in the score set, matched exactly.
    pub fn label_index(&self, label: T) -> Option<usize> {
        self.score_set
            .as_ref()
            .and_then(|s| s.iter().position(|&x| x == label))
    }
}

pub(crate) fn validate_score_set<T: Scalar>(set: &[T]) -> Result<()> {
    if set.len() < 2 {
        return Err(Error::field("score_set", "needs at least 2 labels"));
    }
    if set.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("score_set".into()));
    }
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::field("score_set", "labels must be strictly increasing"));
    }
    Ok(())
}

/// String form of a score label, used as a key in `base_probs` and in
/// label-indexed model and report records.
pub fn label_key<T: Scalar>(label: T) -> String {
    format!("{label}")
}

/// One absolute evaluation: rationale embedding, base score, optional base
/// score distribution, and the human score.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct AbsoluteExample<T> {
    pub id: String,
    pub embedding: Vec<T>,
    pub base_score: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_probs: Option<IndexMap<String, T>>,
    pub human_score: T,
}

impl<T: Scalar> AbsoluteExample<T> {
    /// Base distribution laid out in `score_set` order. Labels absent from
    /// `base_probs` get probability zero.
    pub fn probs_for(&self, score_set: &[T]) -> Result<Vec<T>> {
        let probs = self
            .base_probs
            .as_ref()
            .ok_or_else(|| Error::MissingField("base_probs".into()))?;
        let mut out = vec![T::zero(); score_set.len()];
        for (key, &p) in probs {
            let label: f64 = key
                .trim()
                .parse()
                .map_err(|_| Error::field("base_probs", format!("label `{key}` is not numeric")))?;
            let idx = score_set
                .iter()
                .position(|s| s.as_f64() == label)
                .ok_or_else(|| {
                    Error::field("base_probs", format!("label `{key}` not in score_set"))
                })?;
            out[idx] = p;
        }
        Ok(out)
    }
}

/// The two feature layouts a pairwise example can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum PairForm<T> {
    /// One rationale from a relative judge and its probability of preferring
    /// the first response.
    Relative { embedding: Vec<T>, base_prob_first: T },
    /// Two absolute evaluations, one per response.
    TwoHeaded {
        embedding_a: Vec<T>,
        embedding_b: Vec<T>,
        base_score_a: T,
        base_score_b: T,
    },
}

impl<T> PairForm<T> {
    pub fn name(&self) -> &'static str {
        match self {
            PairForm::Relative { .. } => "relative",
            PairForm::TwoHeaded { .. } => "two_headed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseExample<T> {
    pub id: String,
    pub form: PairForm<T>,
    /// 1 when the human prefers the first response (slot a).
    pub human_pref: u8,
}

impl<T: Scalar> Serialize for PairwiseExample<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("id", &self.id)?;
        m.serialize_entry("form", self.form.name())?;
        match &self.form {
            PairForm::Relative {
                embedding,
                base_prob_first,
            } => {
                m.serialize_entry("embedding", embedding)?;
                m.serialize_entry("base_prob_first", base_prob_first)?;
            }
            PairForm::TwoHeaded {
                embedding_a,
                embedding_b,
                base_score_a,
                base_score_b,
            } => {
                m.serialize_entry("embedding_a", embedding_a)?;
                m.serialize_entry("embedding_b", embedding_b)?;
                m.serialize_entry("base_score_a", base_score_a)?;
                m.serialize_entry("base_score_b", base_score_b)?;
            }
        }
        m.serialize_entry("human_pref", &self.human_pref)?;
        m.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct RankedItem<T> {
    pub embedding: Vec<T>,
    pub base_score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct RankingExample<T> {
    pub id: String,
    pub items: Vec<RankedItem<T>>,
    /// Item indices from best to worst.
    pub human_ranking: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Examples<T> {
    Absolute(Vec<AbsoluteExample<T>>),
    Pairwise(Vec<PairwiseExample<T>>),
    Ranking(Vec<RankingExample<T>>),
}

impl<T: Scalar> Examples<T> {
    pub fn task(&self) -> Task {
        match self {
            Examples::Absolute(_) => Task::Absolute,
            Examples::Pairwise(_) => Task::Pairwise,
            Examples::Ranking(_) => Task::Ranking,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Examples::Absolute(v) => v.len(),
            Examples::Pairwise(v) => v.len(),
            Examples::Ranking(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        match self {
            Examples::Absolute(v) => Examples::Absolute(pick(v, indices)),
            Examples::Pairwise(v) => Examples::Pairwise(pick(v, indices)),
            Examples::Ranking(v) => Examples::Ranking(pick(v, indices)),
        }
    }
}

fn pick<E: Clone>(v: &[E], indices: &[usize]) -> Vec<E> {
    indices.iter().map(|&i| v[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub header: DatasetHeader<T>,
    pub examples: Examples<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Same header, examples at `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        Dataset {
            header: self.header.clone(),
            examples: self.examples.select(indices),
        }
    }

    /// Checks every example against the header invariants.
    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        match &self.examples {
            Examples::Absolute(v) if self.header.task == Task::Absolute => {
                for (i, e) in v.iter().enumerate() {
                    validate_absolute(&self.header, e).map_err(|err| err.at_line(i + 2))?;
                }
            }
            Examples::Pairwise(v) if self.header.task == Task::Pairwise => {
                for (i, e) in v.iter().enumerate() {
                    validate_pairwise(&self.header, e).map_err(|err| err.at_line(i + 2))?;
                }
            }
            Examples::Ranking(v) if self.header.task == Task::Ranking => {
                for (i, e) in v.iter().enumerate() {
                    validate_ranking(&self.header, e).map_err(|err| err.at_line(i + 2))?;
                }
            }
            other => {
                return Err(Error::invalid(format!(
                    "header task `{}` but examples are `{}`",
                    self.header.task,
                    other.task()
                )))
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parsing

/// How to treat the ground-truth fields while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Labels {
    #[default]
    Required,
    /// Accept records without `human_score` / `human_pref` / `human_ranking`
    /// (inputs for prediction). Missing labels are filled with NaN, 0 and the
    /// identity ranking respectively and are not validated.
    Optional,
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    load_dataset_with(path, Labels::Required)
}

pub fn load_dataset_with<T: Scalar>(path: impl AsRef<Path>, labels: Labels) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let lines = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))?;
    parse_lines(lines.iter().map(String::as_str), labels)
}

pub fn parse_dataset<T: Scalar>(text: &str, labels: Labels) -> Result<Dataset<T>> {
    parse_lines(text.lines(), labels)
}

fn parse_lines<'a, T: Scalar>(
    lines: impl Iterator<Item = &'a str>,
    labels: Labels,
) -> Result<Dataset<T>> {
    let mut numbered = lines
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = numbered
        .next()
        .ok_or_else(|| Error::invalid("empty dataset file: missing header"))?;
    let header = parse_header::<T>(htext).map_err(|e| e.at_line(hline))?;

    let examples = match header.task {
        Task::Absolute => Examples::Absolute(
            numbered
                .map(|(n, l)| parse_absolute(&header, l, labels).map_err(|e| e.at_line(n)))
                .collect::<Result<_>>()?,
        ),
        Task::Pairwise => Examples::Pairwise(
            numbered
                .map(|(n, l)| parse_pairwise(&header, l, labels).map_err(|e| e.at_line(n)))
                .collect::<Result<_>>()?,
        ),
        Task::Ranking => Examples::Ranking(
            numbered
                .map(|(n, l)| parse_ranking(&header, l, labels).map_err(|e| e.at_line(n)))
                .collect::<Result<_>>()?,
        ),
    };
    Ok(Dataset { header, examples })
}

struct Record(Map<String, Value>);

impl Record {
    fn parse(line: &str) -> Result<Self> {
        match serde_json::from_str::<Value>(line)? {
            Value::Object(m) => Ok(Record(m)),
            _ => Err(Error::invalid("record is not a JSON object")),
        }
    }

    fn take<V: DeserializeOwned>(&mut self, field: &str) -> Result<Option<V>> {
        match self.0.remove(field) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v)
                .map(Some)
                .map_err(|e| Error::field(field, e.to_string())),
        }
    }

    fn require<V: DeserializeOwned>(&mut self, field: &str) -> Result<V> {
        self.take(field)?
            .ok_or_else(|| Error::MissingField(field.to_string()))
    }

    fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(k) => Err(Error::UnexpectedField(k.clone())),
            None => Ok(()),
        }
    }
}

fn parse_header<T: Scalar>(line: &str) -> Result<DatasetHeader<T>> {
    let mut r = Record::parse(line)?;
    let dimension: usize = r.require("dimension")?;
    let task_tag: String = r.require("task")?;
    let task = match task_tag.as_str() {
        "absolute" => Task::Absolute,
        "pairwise" => Task::Pairwise,
        "ranking" => Task::Ranking,
        _ => return Err(Error::UnknownTask(task_tag)),
    };
    let score_set = r.take("score_set")?;
    let source = r.take("source")?.unwrap_or_default();
    r.finish()?;
    let header = DatasetHeader {
        dimension,
        task,
        score_set,
        source,
    };
    header.validate()?;
    Ok(header)
}

fn parse_absolute<T: Scalar>(
    header: &DatasetHeader<T>,
    line: &str,
    labels: Labels,
) -> Result<AbsoluteExample<T>> {
    let mut r = Record::parse(line)?;
    let id = r.require("id")?;
    let embedding = r.require("embedding")?;
    let base_score = r.require("base_score")?;
    let base_probs = r.take("base_probs")?;
    let human_score = match labels {
        Labels::Required => r.require("human_score")?,
        Labels::Optional => r.take("human_score")?.unwrap_or_else(T::nan),
    };
    r.finish()?;
    let ex = AbsoluteExample {
        id,
        embedding,
        base_score,
        base_probs,
        human_score,
    };
    validate_absolute_features(header, &ex)?;
    if labels == Labels::Required {
        validate_human_score(header, ex.human_score)?;
    }
    Ok(ex)
}

fn parse_pairwise<T: Scalar>(
    header: &DatasetHeader<T>,
    line: &str,
    labels: Labels,
) -> Result<PairwiseExample<T>> {
    let mut r = Record::parse(line)?;
    let id = r.require("id")?;
    let form_tag: String = r.require("form")?;
    let form = match form_tag.as_str() {
        "relative" => PairForm::Relative {
            embedding: r.require("embedding")?,
            base_prob_first: r.require("base_prob_first")?,
        },
        "two_headed" => PairForm::TwoHeaded {
            embedding_a: r.require("embedding_a")?,
            embedding_b: r.require("embedding_b")?,
            base_score_a: r.require("base_score_a")?,
            base_score_b: r.require("base_score_b")?,
        },
        other => {
            return Err(Error::field(
                "form",
                format!("expected `relative` or `two_headed`, got `{other}`"),
            ))
        }
    };
    let human_pref = match labels {
        Labels::Required => r.require("human_pref")?,
        Labels::Optional => r.take("human_pref")?.unwrap_or(0),
    };
    r.finish()?;
    let ex = PairwiseExample {
        id,
        form,
        human_pref,
    };
    validate_pairwise(header, &ex)?;
    Ok(ex)
}

fn parse_ranking<T: Scalar>(
    header: &DatasetHeader<T>,
    line: &str,
    labels: Labels,
) -> Result<RankingExample<T>> {
    let mut r = Record::parse(line)?;
    let id = r.require("id")?;
    let raw_items: Vec<Value> = r.require("items")?;
    let mut items = Vec::with_capacity(raw_items.len());
    for (k, v) in raw_items.into_iter().enumerate() {
        let mut ir = match v {
            Value::Object(m) => Record(m),
            _ => return Err(Error::field("items", format!("item {k} is not an object"))),
        };
        let item = RankedItem {
            embedding: ir.require("embedding")?,
            base_score: ir.require("base_score")?,
        };
        ir.finish()?;
        items.push(item);
    }
    let human_ranking = match labels {
        Labels::Required => r.require("human_ranking")?,
        Labels::Optional => r
            .take("human_ranking")?
            .unwrap_or_else(|| (0..items.len()).collect()),
    };
    r.finish()?;
    let ex = RankingExample {
        id,
        items,
        human_ranking,
    };
    validate_ranking(header, &ex)?;
    Ok(ex)
}

// ---------------------------------------------------------------------------
// Validation

fn validate_embedding<T: Scalar>(field: &str, e: &[T], dimension: usize) -> Result<()> {
    if e.len() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            got: e.len(),
        });
    }
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(field.to_string()));
    }
    Ok(())
}

/// Formats a probability sum with enough digits to be informative without
/// exposing binary rounding noise.
fn format_sum(sum: f64) -> String {
    let s = format!("{sum:.9}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

fn validate_absolute_features<T: Scalar>(
    header: &DatasetHeader<T>,
    e: &AbsoluteExample<T>,
) -> Result<()> {
    validate_embedding("embedding", &e.embedding, header.dimension)?;
    if !e.base_score.is_finite() {
        return Err(Error::NonFinite("base_score".into()));
    }
    if let Some(probs) = &e.base_probs {
        let mut sum = 0.0;
        for (k, &p) in probs {
            let p = p.as_f64();
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::field(
                    "base_probs",
                    format!("probability for `{k}` is {p}, outside [0, 1]"),
                ));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::ProbabilitySum(format_sum(sum)));
        }
        if let Some(set) = &header.score_set {
            e.probs_for(set)?;
        }
    }
    Ok(())
}

fn validate_human_score<T: Scalar>(header: &DatasetHeader<T>, s: T) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::NonFinite("human_score".into()));
    }
    if header.score_set.is_some() && header.label_index(s).is_none() {
        return Err(Error::field(
            "human_score",
            format!("{s} is not a member of score_set"),
        ));
    }
    Ok(())
}

fn validate_absolute<T: Scalar>(header: &DatasetHeader<T>, e: &AbsoluteExample<T>) -> Result<()> {
    validate_absolute_features(header, e)?;
    validate_human_score(header, e.human_score)
}

fn validate_pairwise<T: Scalar>(header: &DatasetHeader<T>, e: &PairwiseExample<T>) -> Result<()> {
    match &e.form {
        PairForm::Relative {
            embedding,
            base_prob_first,
        } => {
            validate_embedding("embedding", embedding, header.dimension)?;
            let p = base_prob_first.as_f64();
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::field("base_prob_first", format!("{p} outside [0, 1]")));
            }
        }
        PairForm::TwoHeaded {
            embedding_a,
            embedding_b,
            base_score_a,
            base_score_b,
        } => {
            validate_embedding("embedding_a", embedding_a, header.dimension)?;
            validate_embedding("embedding_b", embedding_b, header.dimension)?;
            for (name, b) in [("base_score_a", base_score_a), ("base_score_b", base_score_b)] {
                if !(b.is_finite() && *b > T::zero()) {
                    return Err(Error::field(name, format!("{b} is not a positive score")));
                }
            }
        }
    }
    if e.human_pref > 1 {
        return Err(Error::field(
            "human_pref",
            format!("{} is not 0 or 1", e.human_pref),
        ));
    }
    Ok(())
}

pub(crate) fn validate_permutation(ranking: &[usize], k: usize) -> Result<()> {
    if ranking.len() != k {
        return Err(Error::field(
            "human_ranking",
            format!("has {} entries for {k} items", ranking.len()),
        ));
    }
    let mut seen = vec![false; k];
    for &r in ranking {
        if r >= k || seen[r] {
            return Err(Error::field("human_ranking", "not a permutation of item indices"));
        }
        seen[r] = true;
    }
    Ok(())
}

fn validate_ranking<T: Scalar>(header: &DatasetHeader<T>, e: &RankingExample<T>) -> Result<()> {
    if e.items.len() < 2 {
        return Err(Error::field("items", "a ranking needs at least 2 items"));
    }
    for item in &e.items {
        validate_embedding("embedding", &item.embedding, header.dimension)?;
        if !(item.base_score.is_finite() && item.base_score > T::zero()) {
            return Err(Error::field(
                "base_score",
                format!("{} is not a positive score", item.base_score),
            ));
        }
    }
    validate_permutation(&e.human_ranking, e.items.len())
}

// ---------------------------------------------------------------------------
// Writing

pub fn dataset_to_string<T: Scalar>(ds: &Dataset<T>) -> Result<String> {
    let mut out = serde_json::to_string(&ds.header)?;
    out.push('\n');
    fn push<E: Serialize>(out: &mut String, v: &[E]) -> Result<()> {
        for e in v {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(())
    }
    match &ds.examples {
        Examples::Absolute(v) => push(&mut out, v)?,
        Examples::Pairwise(v) => push(&mut out, v)?,
        Examples::Ranking(v) => push(&mut out, v)?,
    }
    Ok(out)
}

pub fn write_dataset<T: Scalar>(path: impl AsRef<Path>, ds: &Dataset<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_string(ds)?).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Sampling transforms

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    idx
}

/// Seeded train/test partition. The test part holds `round(test_fraction·n)`
/// examples (kept within `1..n`); both parts preserve input order.
pub fn split<E: Clone>(examples: &[E], test_fraction: f64, seed: u64) -> Result<(Vec<E>, Vec<E>)> {
    let (train, test) = split_indices(examples.len(), test_fraction, seed)?;
    Ok((pick(examples, &train), pick(examples, &test)))
}

pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!("split needs at least 2 examples, got {n}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let idx = shuffled_indices(n, seed);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset<T: Scalar>(
    ds: &Dataset<T>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let (train, test) = split_indices(ds.len(), test_fraction, seed)?;
    Ok((ds.select(&train), ds.select(&test)))
}

/// Size of a subsample drawn with `fraction` from `n` examples.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

/// Seeded sample without replacement of `max(1, round(fraction·n))` examples,
/// returned in sampled order.
pub fn subsample<E: Clone>(examples: &[E], fraction: f64, seed: u64) -> Result<Vec<E>> {
    Ok(pick(examples, &subsample_indices(examples.len(), fraction, seed)?))
}

pub fn subsample_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("cannot subsample an empty set"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    let mut idx = shuffled_indices(n, seed);
    idx.truncate(subsample_size(n, fraction));
    Ok(idx)
}

pub fn subsample_dataset<T: Scalar>(ds: &Dataset<T>, fraction: f64, seed: u64) -> Result<Dataset<T>> {
    Ok(ds.select(&subsample_indices(ds.len(), fraction, seed)?))
}

/// All `K·(K−1)/2` pairwise comparisons implied by a ranking, as two-headed
/// pairs. The better item of each pair lands in slot a or b by a fair coin
/// drawn from `rng`; `human_pref` records whether slot a won.
pub fn expand_ranking_to_pairs<T: Scalar>(
    ex: &RankingExample<T>,
    rng: &mut seed::Rng,
) -> Result<Vec<PairwiseExample<T>>> {
    use rand::Rng as _;

    let k = ex.items.len();
    if k < 2 {
        return Err(Error::invalid("ranking needs at least 2 items"));
    }
    validate_permutation(&ex.human_ranking, k)?;
    let mut position = vec![0; k];
    for (pos, &item) in ex.human_ranking.iter().enumerate() {
        position[item] = pos;
    }
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let (winner, loser) = if position[i] < position[j] { (i, j) } else { (j, i) };
            let winner_first: bool = rng.random();
            let (a, b) = if winner_first { (winner, loser) } else { (loser, winner) };
            out.push(PairwiseExample {
                id: format!("{}:{}-{}", ex.id, i, j),
                form: PairForm::TwoHeaded {
                    embedding_a: ex.items[a].embedding.clone(),
                    embedding_b: ex.items[b].embedding.clone(),
                    base_score_a: ex.items[a].base_score,
                    base_score_b: ex.items[b].base_score,
                },
                human_pref: u8::from(winner_first),
            });
        }
    }
    Ok(out)
}

/// Expands every ranking of a dataset into a pairwise (two-headed) dataset.
pub fn expand_rankings<T: Scalar>(ds: &Dataset<T>, seed: u64) -> Result<Dataset<T>> {
    let Examples::Ranking(rankings) = &ds.examples else {
        return Err(Error::invalid(format!(
            "pair expansion needs a ranking dataset, got `{}`",
            ds.header.task
        )));
    };
    let mut rng = seed::rng(seed);
    let mut pairs = Vec::new();
    for r in rankings {
        pairs.extend(expand_ranking_to_pairs(r, &mut rng)?);
    }
    let mut header = ds.header.clone();
    header.task = Task::Pairwise;
    Ok(Dataset {
        header,
        examples: Examples::Pairwise(pairs),
    })
}

/// Randomly chosen embedding coordinates to keep, sorted ascending.
pub fn kept_features(dimension: usize, drop_fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::invalid(format!(
            "drop fraction {drop_fraction} outside [0, 1)"
        )));
    }
    let dropped = (drop_fraction * dimension as f64).round() as usize;
    if dropped >= dimension {
        return Err(Error::invalid(format!(
            "dropping {dropped} of {dimension} features leaves none"
        )));
    }
    let mut keep = shuffled_indices(dimension, seed);
    keep.truncate(dimension - dropped);
    keep.sort_unstable();
    Ok(keep)
}

fn project<T: Scalar>(e: &[T], keep: &[usize]) -> Vec<T> {
    keep.iter().map(|&i| e[i]).collect()
}

/// Removes the same random subset of embedding coordinates from every example
/// (both embeddings for two-headed pairs). Returns the reduced dataset and the
/// surviving coordinate indices.
pub fn drop_features<T: Scalar>(
    ds: &Dataset<T>,
    drop_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Vec<usize>)> {
    let keep = kept_features(ds.header.dimension, drop_fraction, seed)?;
    let examples = match &ds.examples {
        Examples::Absolute(v) => Examples::Absolute(
            v.iter()
                .map(|e| AbsoluteExample {
                    embedding: project(&e.embedding, &keep),
                    ..e.clone()
                })
                .collect(),
        ),
        Examples::Pairwise(v) => Examples::Pairwise(
            v.iter()
                .map(|e| PairwiseExample {
                    form: match &e.form {
                        PairForm::Relative {
                            embedding,
                            base_prob_first,
                        } => PairForm::Relative {
                            embedding: project(embedding, &keep),
                            base_prob_first: *base_prob_first,
                        },
                        PairForm::TwoHeaded {
                            embedding_a,
                            embedding_b,
                            base_score_a,
                            base_score_b,
                        } => PairForm::TwoHeaded {
                            embedding_a: project(embedding_a, &keep),
                            embedding_b: project(embedding_b, &keep),
                            base_score_a: *base_score_a,
                            base_score_b: *base_score_b,
                        },
                    },
                    ..e.clone()
                })
                .collect(),
        ),
        Examples::Ranking(v) => Examples::Ranking(
            v.iter()
                .map(|e| RankingExample {
                    items: e
                        .items
                        .iter()
                        .map(|it| RankedItem {
                            embedding: project(&it.embedding, &keep),
                            base_score: it.base_score,
                        })
                        .collect(),
                    ..e.clone()
                })
                .collect(),
        ),
    };
    let mut header = ds.header.clone();
    header.dimension = keep.len();
    Ok((Dataset { header, examples }, keep))
}
