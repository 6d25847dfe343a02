//! Oracles and fixtures shared by the integration tests and the acceptance
//! runner. Everything here is written independently of the library's own
//! numeric helpers.

#![allow(dead_code)]

use qjudge::dataset::{Dataset, RankedItem};
use qjudge::judges::{Design, JudgeModel, ModelKind, ProbClamp};
use qjudge::seed;
use qjudge::synthetic::{Generator, Scenario};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

pub const FD_STEP: f64 = 1e-5;

/// A small random design for `kind` and a parameter vector scattered around
/// the identity point.
pub fn random_instance(kind: ModelKind, case: u64) -> (Design<f64>, Vec<f64>) {
    let mut rng = seed::rng(0xfeed ^ case.wrapping_mul(0x9e37_79b9));
    let d = rng.random_range(1..=8);
    let n = rng.random_range(1..=12);
    let scenario = match kind {
        ModelKind::Mn => Scenario::Categorical { levels: rng.random_range(2..=5) },
        ModelKind::Pl => Scenario::Ranking { items: rng.random_range(2..=5) },
        ModelKind::Ls => Scenario::Regression { noise_sd: 0.3 },
        k => Scenario::for_kind(k),
    };
    let g = Generator::new(scenario, d, case);
    let ds: Dataset<f64> = g.sample(n, case + 17);
    let design = Design::new(kind, &ds, &ProbClamp::default()).unwrap();
    let normal = Normal::new(0.0, 0.5).unwrap();
    let params = design
        .identity_model()
        .params()
        .iter()
        .map(|&p| p + normal.sample(&mut rng))
        .collect();
    (design, params)
}

/// Central finite-difference gradient of the summed regularized loss.
pub fn fd_gradient(design: &Design<f64>, params: &[f64], gamma: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let x = p[i];
            p[i] = x + FD_STEP;
            let up = design.loss(&p, gamma).unwrap();
            p[i] = x - FD_STEP;
            let down = design.loss(&p, gamma).unwrap();
            p[i] = x;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1.0)
}

/// `(concordant − discordant, ties in x, ties in y, pairs)` by enumerating
/// every pair.
pub fn kendall_pairs(x: &[f64], y: &[f64]) -> (i64, u64, u64, u64) {
    let n = x.len();
    let (mut score, mut tx, mut ty, mut pairs) = (0i64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs += 1;
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            tx += u64::from(dx == 0.0);
            ty += u64::from(dy == 0.0);
            if dx * dy > 0.0 {
                score += 1;
            } else if dx * dy < 0.0 {
                score -= 1;
            }
        }
    }
    (score, tx, ty, pairs)
}

/// Kendall τ-b from the enumerated pair counts.
pub fn kendall_brute(x: &[f64], y: &[f64]) -> Option<f64> {
    let (score, tx, ty, pairs) = kendall_pairs(x, y);
    let denom = (((pairs - tx) * (pairs - ty)) as f64).sqrt();
    (denom > 0.0).then(|| score as f64 / denom)
}

/// Ranks starting at 1, ties sharing the mean of their positions, by
/// counting rather than sorting.
pub fn tie_averaged_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson_plain(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Random vector with values drawn from a few distinct levels so that ties
/// are common; `levels == 0` draws continuous values.
pub fn tied_vector(rng: &mut seed::Rng, n: usize, levels: u32) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if levels == 0 {
                rng.random::<f64>()
            } else {
                rng.random_range(0..levels) as f64
            }
        })
        .collect()
}

/// Every permutation of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Random PL model and K items.
pub fn random_pl(rng: &mut seed::Rng, k: usize) -> (JudgeModel<f64>, Vec<RankedItem<f64>>) {
    let d = rng.random_range(1..=6);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut model = JudgeModel::zeros(ModelKind::Pl, d, None).unwrap();
    for p in model.params_mut() {
        *p = normal.sample(rng);
    }
    let items = (0..k)
        .map(|_| RankedItem {
            embedding: (0..d).map(|_| normal.sample(rng)).collect(),
            base_score: rng.random_range(1..=7) as f64,
        })
        .collect();
    (model, items)
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
