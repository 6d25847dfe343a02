//! Evaluation metrics: regression errors, classification rates, rank
//! correlations and confusion matrices.

use std::cmp::Ordering;

use indexmap::IndexMap;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::dataset::{label_key, Task};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_pair<A, B>(xs: &[A], ys: &[B]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions vs {} truths",
            xs.len(),
            ys.len()
        )));
    }
    if xs.is_empty() {
        return Err(Error::invalid("metrics need at least one example"));
    }
    Ok(())
}

fn check_finite<T: Scalar>(what: &str, v: &[T]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

/// `(MSE, MAE)`.
pub fn regression_metrics<T: Scalar>(predictions: &[T], truths: &[T]) -> Result<(T, T)> {
    check_pair(predictions, truths)?;
    let n = T::count(predictions.len());
    let (mut se, mut ae) = (T::zero(), T::zero());
    for (&p, &t) in predictions.iter().zip(truths) {
        let r = p - t;
        se += r * r;
        ae += r.abs();
    }
    Ok((se / n, ae / n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy over all labels; precision, recall and F1 for `positive`.
/// Empty denominators yield 0.
pub fn classification_metrics<L: PartialEq>(
    predicted: &[L],
    truth: &[L],
    positive: &L,
) -> Result<Classification> {
    check_pair(predicted, truth)?;
    let (mut correct, mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in predicted.iter().zip(truth) {
        if p == t {
            correct += 1;
        }
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fne);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Classification {
        accuracy: ratio(correct, predicted.len()),
        precision,
        recall,
        f1,
    })
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::count(v.len())
}

/// Sample Pearson correlation. Errors when either input has zero variance.
pub fn pearson_r<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    check_pair(xs, ys)?;
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than 2 observations".into()));
    }
    check_finite("correlation input", xs)?;
    check_finite("correlation input", ys)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one()))
}

fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).expect("finite values")
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&xs[a], &xs[b]));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = T::count(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's ρ: Pearson correlation of tie-averaged ranks.
pub fn spearman_rho<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    check_pair(xs, ys)?;
    check_finite("correlation input", xs)?;
    check_finite("correlation input", ys)?;
    pearson_r(&average_ranks(xs), &average_ranks(ys))
}

/// Pair counts behind Kendall's τ-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KendallCounts {
    /// n(n−1)/2.
    pub pairs: u64,
    /// Pairs tied in x.
    pub ties_x: u64,
    /// Pairs tied in y.
    pub ties_y: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
}

impl KendallCounts {
    pub fn tau_b(&self) -> Result<f64> {
        let dx = self.pairs - self.ties_x;
        let dy = self.pairs - self.ties_y;
        if dx == 0 || dy == 0 {
            return Err(Error::UndefinedCorrelation("all pairs tied".into()));
        }
        let tau = self.score as f64 / ((dx as f64) * (dy as f64)).sqrt();
        Ok(tau.clamp(-1.0, 1.0))
    }
}

/// Number of equal-value pairs within runs of a sorted index order.
fn tied_pairs<F: Fn(usize, usize) -> bool>(order: &[usize], same: F) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in order.windows(2) {
        if same(w[0], w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts inversions of `v` by merge sort, sorting it in place.
fn merge_count<T: Scalar>(v: &mut [T], buf: &mut Vec<T>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall pair counts in O(n log n) (Knight's algorithm).
pub fn kendall_counts<T: Scalar>(xs: &[T], ys: &[T]) -> Result<KendallCounts> {
    check_pair(xs, ys)?;
    check_finite("correlation input", xs)?;
    check_finite("correlation input", ys)?;
    let n = xs.len() as u64;
    let pairs = n * (n.saturating_sub(1)) / 2;

    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&xs[a], &xs[b]).then_with(|| total_cmp(&ys[a], &ys[b])));
    let ties_x = tied_pairs(&order, |a, b| xs[a] == xs[b]);
    let ties_xy = tied_pairs(&order, |a, b| xs[a] == xs[b] && ys[a] == ys[b]);

    let mut y_sorted: Vec<T> = order.iter().map(|&i| ys[i]).collect();
    let swaps = merge_count(&mut y_sorted, &mut Vec::with_capacity(xs.len()));
    let y_order: Vec<usize> = (0..y_sorted.len()).collect();
    let ties_y = tied_pairs(&y_order, |a, b| y_sorted[a] == y_sorted[b]);

    let score = pairs as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * swaps as i64;
    Ok(KendallCounts {
        pairs,
        ties_x,
        ties_y,
        score,
    })
}

/// Kendall's τ-b. Errors when every pair is tied in either input.
pub fn kendall_tau<T: Scalar>(xs: &[T], ys: &[T]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than 2 observations".into()));
    }
    kendall_counts(xs, ys)?.tau_b()
}

/// Counts indexed by (truth label, predicted label).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub labels: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

impl Serialize for ConfusionMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.labels.len()))?;
        for (i, &truth) in self.labels.iter().enumerate() {
            let row: IndexMap<String, u64> = self
                .labels
                .iter()
                .zip(&self.counts[i])
                .map(|(&l, &c)| (label_key(l), c))
                .collect();
            m.serialize_entry(&label_key(truth), &row)?;
        }
        m.end()
    }
}

pub fn confusion_matrix<T: Scalar>(
    predicted: &[T],
    truth: &[T],
    score_set: &[T],
) -> Result<ConfusionMatrix> {
    check_pair(predicted, truth)?;
    let index = |v: T| {
        score_set
            .iter()
            .position(|&s| s == v)
            .ok_or_else(|| Error::invalid(format!("label {v} is not in the score set")))
    };
    let k = score_set.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: score_set.iter().map(|s| s.as_f64()).collect(),
        counts,
    })
}

/// Member of `score_set` closest to `x`; halfway cases go to the lower label.
pub fn nearest_label<T: Scalar>(x: T, score_set: &[T]) -> T {
    let mut best = score_set[0];
    for &s in &score_set[1..] {
        if (s - x).abs() < (best - x).abs() {
            best = s;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerExample {
    pub id: String,
    pub prediction: f64,
    pub truth: f64,
}

/// Metrics of one model on one labelled set. Fields that do not apply to the
/// model kind, or are undefined on the data, are absent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: Task,
    pub kind: String,
    pub n: usize,
    /// Mean unregularized training loss of the model kind on this set.
    pub loss: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub pearson_r: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub kendall_tau: Option<f64>,
    /// What the correlation columns were computed on.
    pub correlation_input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_example: Option<Vec<PerExample>>,
}

impl EvalReport {
    pub fn empty(task: Task, kind: &str, n: usize) -> Self {
        EvalReport {
            task,
            kind: kind.to_string(),
            n,
            loss: None,
            mse: None,
            mae: None,
            accuracy: None,
            precision: None,
            recall: None,
            f1: None,
            pearson_r: None,
            spearman_rho: None,
            kendall_tau: None,
            correlation_input: String::new(),
            confusion: None,
            per_example: None,
        }
    }

    /// Fills r, ρ and τ; undefined correlations stay absent.
    pub fn set_correlations<T: Scalar>(&mut self, predictions: &[T], truths: &[T]) {
        self.pearson_r = pearson_r(predictions, truths).ok().map(Scalar::as_f64);
        self.spearman_rho = spearman_rho(predictions, truths).ok().map(Scalar::as_f64);
        self.kendall_tau = kendall_tau(predictions, truths).ok();
    }
}
