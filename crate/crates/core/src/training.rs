//! Minibatch SGD on the regularized losses and k-fold selection of γ.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judges::{Design, JudgeModel};
use crate::scalar::{norm2, Scalar};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    None,
    /// Step size `lr / sqrt(epoch)`, epochs counted from 1.
    InverseSqrtEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Start at `θ = 0_d ⊕ 1`, `c = 0`, i.e. at the base judge.
    BaseJudgeIdentity,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SgdConfig<T> {
    pub learning_rate: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub lr_decay: LrDecay,
    pub init: Init,
}

impl<T: Scalar> Default for SgdConfig<T> {
    fn default() -> Self {
        SgdConfig {
            learning_rate: T::lit(0.01),
            epochs: 200,
            batch_size: 64,
            shuffle_seed: 0,
            lr_decay: LrDecay::InverseSqrtEpoch,
            init: Init::BaseJudgeIdentity,
        }
    }
}

impl<T: Scalar> SgdConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero() && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }

    fn step_size(&self, epoch: usize) -> T {
        match self.lr_decay {
            LrDecay::None => self.learning_rate,
            LrDecay::InverseSqrtEpoch => self.learning_rate / T::count(epoch).sqrt(),
        }
    }
}

/// Default γ grid on the summed-loss scale.
pub const DEFAULT_GAMMA_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

/// Evidence behind a cross-validated choice of γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub grid: Vec<f64>,
    /// `fold_losses[g][f]`: mean validation loss of grid point `g` on fold `f`.
    pub fold_losses: Vec<Vec<f64>>,
    pub chosen_gamma: f64,
    pub folds: usize,
    pub seed: u64,
}

impl CvRecord {
    pub fn mean_losses(&self) -> Vec<f64> {
        self.fold_losses
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()
    }
}

fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if !(gamma >= T::zero() && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma {gamma} must be finite and non-negative")));
    }
    Ok(())
}

/// Fits a judge by minibatch SGD on `L(θ)/n`, where `L` is the summed loss
/// plus `γ‖θ‖²`. Each step moves along the batch-mean data gradient and then
/// applies the penalty in closed form, `θ ← θ / (1 + 2·lr·γ/n)`, so large γ
/// cannot make the iteration blow up.
///
/// The returned parameters are those with the lowest full-data objective at
/// any epoch end, counting the initial point as epoch 0, so with the default
/// initialization the result is never worse on the training objective than
/// the base judge.
pub fn sgd_fit<T: Scalar>(design: &Design<T>, gamma: T, config: &SgdConfig<T>) -> Result<JudgeModel<T>> {
    config.validate()?;
    check_gamma(gamma)?;
    let n = design.len();
    if n == 0 {
        return Err(Error::invalid("cannot train on an empty set"));
    }
    let mut model = match config.init {
        Init::BaseJudgeIdentity => design.identity_model(),
        Init::Zeros => design.zero_model(),
    };
    let mut params = model.params().to_vec();
    let mut grad = vec![T::zero(); params.len()];
    let all: Vec<usize> = (0..n).collect();
    let nf = T::count(n);
    let weights = design.weight_len();

    let objective = |p: &[T]| design.data_loss(&all, p, None) + design.penalty(p, gamma, None);
    let mut best_loss = objective(&params);
    if !best_loss.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut best = params.clone();
    let mut best_epoch = 0;

    let mut order = all.clone();
    let mut rng = seed::rng(config.shuffle_seed);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let lr = config.step_size(epoch);
        let shrink = T::one() + T::lit(2.0) * lr * gamma / nf;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            design.data_loss(batch, &params, Some(&mut grad));
            let scale = T::one() / T::count(batch.len());
            for (p, &g) in params.iter_mut().zip(&grad) {
                *p -= lr * scale * g;
            }
            // implicit step on the penalty: stable for any γ, same fixed point
            for p in &mut params[..weights] {
                *p = *p / shrink;
            }
        }
        let loss = objective(&params);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if loss < best_loss {
            best_loss = loss;
            best.copy_from_slice(&params);
            best_epoch = epoch;
        }
    }

    grad.iter_mut().for_each(|g| *g = T::zero());
    design.data_loss(&all, &best, Some(&mut grad));
    design.penalty(&best, gamma, Some(&mut grad));

    model.set_params(&best)?;
    model.gamma = gamma;
    model.metadata.seed = Some(config.shuffle_seed);
    model.metadata.training_size = Some(n);
    model.metadata.epochs_run = Some(config.epochs);
    model.metadata.best_epoch = Some(best_epoch);
    model.metadata.final_loss = Some(best_loss.as_f64());
    model.metadata.final_gradient_norm = Some(norm2(&grad).as_f64());
    Ok(model)
}

/// Seeded partition of `0..n` into `k` near-equal folds (sizes differ by at
/// most one), each sorted ascending.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("{k} folds exceed {n} examples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// One cross-validation fit: the model trained without fold `fold` and its
/// mean unregularized loss on that fold.
#[derive(Debug, Clone)]
pub struct FoldFit<T> {
    pub gamma_index: usize,
    pub fold: usize,
    pub model: JudgeModel<T>,
    pub validation_loss: T,
}

/// Every `(γ, fold)` fit, ordered by γ index then fold index. Fits run in
/// parallel; each only sees its training folds.
pub fn cv_fold_fits<T: Scalar>(
    design: &Design<T>,
    grid: &[T],
    k: usize,
    config: &SgdConfig<T>,
    seed: u64,
) -> Result<Vec<FoldFit<T>>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty gamma grid"));
    }
    for &g in grid {
        check_gamma(g)?;
    }
    config.validate()?;
    let folds = fold_indices(design.len(), k, seed)?;
    let n = design.len();
    let train_parts: Vec<Vec<usize>> = folds
        .iter()
        .map(|fold| {
            let mut held = vec![false; n];
            fold.iter().for_each(|&i| held[i] = true);
            (0..n).filter(|&i| !held[i]).collect()
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..k).map(move |f| (g, f)))
        .collect();
    jobs.par_iter()
        .map(|&(g, f)| {
            let train = design.select(&train_parts[f]);
            let model = sgd_fit(&train, grid[g], config)?;
            let validation_loss = design.select(&folds[f]).mean_loss(model.params())?;
            Ok(FoldFit {
                gamma_index: g,
                fold: f,
                model,
                validation_loss,
            })
        })
        .collect()
}

/// Index of the grid point with the lowest mean loss; ties go to the larger γ.
pub fn select_gamma(grid: &[f64], mean_losses: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..grid.len() {
        let (m, b) = (mean_losses[i], mean_losses[best]);
        if m < b || (m == b && grid[i] > grid[best]) {
            best = i;
        }
    }
    best
}

/// k-fold selection of γ by mean validation loss, followed by a refit on the
/// full set at the chosen γ. The returned model carries the [`CvRecord`].
pub fn cross_validate_gamma<T: Scalar>(
    design: &Design<T>,
    grid: &[T],
    k: usize,
    config: &SgdConfig<T>,
    seed: u64,
) -> Result<(CvRecord, JudgeModel<T>)> {
    let fits = cv_fold_fits(design, grid, k, config, seed)?;
    let mut fold_losses = vec![vec![0.0; k]; grid.len()];
    for fit in &fits {
        fold_losses[fit.gamma_index][fit.fold] = fit.validation_loss.as_f64();
    }
    let grid_f64: Vec<f64> = grid.iter().map(|g| g.as_f64()).collect();
    let mut record = CvRecord {
        grid: grid_f64,
        fold_losses,
        chosen_gamma: 0.0,
        folds: k,
        seed,
    };
    let chosen = select_gamma(&record.grid, &record.mean_losses());
    record.chosen_gamma = record.grid[chosen];
    let mut model = sgd_fit(design, grid[chosen], config)?;
    model.metadata.cv = Some(record.clone());
    Ok((record, model))
}

/// `L(base judge) − L(fitted)` on the training objective at the fitted
/// model's γ. Non-negative for any fit that improved on the base judge.
pub fn evaluate_optimality_margin<T: Scalar>(design: &Design<T>, fitted: &JudgeModel<T>) -> Result<T> {
    design.check_model(fitted)?;
    let identity = design.identity_model();
    Ok(design.loss(identity.params(), fitted.gamma)? - design.loss(fitted.params(), fitted.gamma)?)
}
