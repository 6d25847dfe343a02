//! Synthetic datasets drawn from known generalized linear models.
//!
//! Each [`Generator`] fixes a ground-truth parameter vector once and can then
//! sample any number of independent datasets from it. The sampling code keeps
//! its own arithmetic so it can serve as an oracle for the judges.

use rand::Rng as _;
use rand_distr::{Distribution, Gumbel, Normal};

use crate::dataset::{
    label_key, AbsoluteExample, Dataset, DatasetHeader, Examples, PairForm, PairwiseExample,
    RankedItem, RankingExample, Task,
};
use crate::judges::{JudgeModel, ModelKind};
use crate::scalar::Scalar;
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// Real-valued human scores: `s = (φ ⊕ b)·θ* + c* + σε`, base scores in 1..=7.
    Regression { noise_sd: f64 },
    /// Labels 1..=levels drawn from a multinomial judge with base
    /// distributions `p`.
    Categorical { levels: usize },
    /// Relative-judge pairs with a base preference probability.
    Relative,
    /// Pairs of absolute evaluations with base scores in 1..=7.
    TwoHeaded,
    /// K-item rankings drawn from a Plackett-Luce model.
    Ranking { items: usize },
}

impl Scenario {
    pub fn kind(&self) -> ModelKind {
        match self {
            Scenario::Regression { .. } => ModelKind::Ls,
            Scenario::Categorical { .. } => ModelKind::Mn,
            Scenario::Relative => ModelKind::Btl,
            Scenario::TwoHeaded => ModelKind::Btl2,
            Scenario::Ranking { .. } => ModelKind::Pl,
        }
    }

    /// Default scenario whose natural judge is `kind`.
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Ls => Scenario::Regression { noise_sd: 0.5 },
            ModelKind::Mn => Scenario::Categorical { levels: 5 },
            ModelKind::Btl => Scenario::Relative,
            ModelKind::Btl2 => Scenario::TwoHeaded,
            ModelKind::Pl => Scenario::Ranking { items: 4 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub scenario: Scenario,
    pub dimension: usize,
    /// One row of `dimension` embedding weights per head.
    weights: Vec<Vec<f64>>,
    signal_weight: f64,
    bias: Vec<f64>,
}

fn gaussian_vec(rng: &mut Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("valid sd");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn cast<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

impl Generator {
    /// Draws the ground-truth parameters from `seed`. The embedding part of
    /// the utility has standard deviation about `1.5` per head.
    pub fn new(scenario: Scenario, dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        let mut rng = seed::rng(seed::derive(seed, seed::Stream::Synthetic, 0));
        let sd = 1.5 / (dimension as f64).sqrt();
        let heads = match scenario {
            Scenario::Categorical { levels } => {
                assert!(levels >= 2, "need at least 2 levels");
                levels
            }
            Scenario::Ranking { items } => {
                assert!(items >= 2, "need at least 2 items");
                1
            }
            _ => 1,
        };
        let weights = (0..heads).map(|_| gaussian_vec(&mut rng, dimension, sd)).collect();
        let (signal_weight, bias) = match scenario {
            Scenario::Regression { .. } => (0.6, vec![1.0]),
            Scenario::Categorical { .. } => (0.8, gaussian_vec(&mut rng, heads, 0.3)),
            Scenario::Relative => (0.8, vec![0.2]),
            Scenario::TwoHeaded => (1.0, vec![0.0]),
            Scenario::Ranking { .. } => (0.5, vec![]),
        };
        Generator {
            scenario,
            dimension,
            weights,
            signal_weight,
            bias,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.scenario.kind()
    }

    pub fn score_set(&self) -> Option<Vec<f64>> {
        match self.scenario {
            Scenario::Categorical { levels } => Some((1..=levels).map(|l| l as f64).collect()),
            _ => None,
        }
    }

    /// The generating model as a judge of the matching kind.
    pub fn truth<T: Scalar>(&self) -> JudgeModel<T> {
        let set = self.score_set().map(|s| cast::<T>(&s));
        let mut m = JudgeModel::zeros(self.kind(), self.dimension, set).expect("valid shape");
        for (h, w) in self.weights.iter().enumerate() {
            let theta = m.theta_mut(h);
            theta[..self.dimension].copy_from_slice(&cast::<T>(w));
            theta[self.dimension] = T::lit(self.signal_weight);
        }
        for (h, &b) in self.bias.iter().enumerate() {
            m.set_bias(h, T::lit(b)).expect("kind has bias");
        }
        m
    }

    fn header<T: Scalar>(&self, task: Task) -> DatasetHeader<T> {
        DatasetHeader {
            dimension: self.dimension,
            task,
            score_set: self.score_set().map(|s| cast(&s)),
            source: format!("synthetic {:?}", self.scenario),
        }
    }

    fn base_score(rng: &mut Rng) -> f64 {
        rng.random_range(1..=7) as f64
    }

    /// `n` fresh examples drawn with `seed`.
    pub fn sample<T: Scalar>(&self, n: usize, seed: u64) -> Dataset<T> {
        let mut rng = seed::rng(seed);
        let d = self.dimension;
        let w = &self.weights[0];
        match self.scenario {
            Scenario::Regression { noise_sd } => {
                let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("valid sd");
                let examples = (0..n)
                    .map(|i| {
                        let phi = gaussian_vec(&mut rng, d, 1.0);
                        let b = Self::base_score(&mut rng);
                        let eps = if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                        let s = dot(&phi, w) + self.signal_weight * b + self.bias[0] + eps;
                        AbsoluteExample {
                            id: format!("r{i}"),
                            embedding: cast(&phi),
                            base_score: T::lit(b),
                            base_probs: None,
                            human_score: T::lit(s),
                        }
                    })
                    .collect();
                Dataset {
                    header: self.header(Task::Absolute),
                    examples: Examples::Absolute(examples),
                }
            }
            Scenario::Categorical { levels } => {
                let labels = self.score_set().expect("categorical");
                let examples = (0..n)
                    .map(|i| {
                        let phi = gaussian_vec(&mut rng, d, 1.0);
                        let g = gaussian_vec(&mut rng, levels, 1.5);
                        let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let eg: Vec<f64> = g.iter().map(|x| (x - gmax).exp()).collect();
                        let total: f64 = eg.iter().sum();
                        let p: Vec<f64> = eg.iter().map(|x| x / total).collect();
                        let z: Vec<f64> = (0..levels)
                            .map(|s| {
                                dot(&phi, &self.weights[s])
                                    + self.signal_weight * p[s].ln()
                                    + self.bias[s]
                            })
                            .collect();
                        let label = sample_softmax(&mut rng, &z);
                        let base = (0..levels)
                            .fold(0, |best, s| if p[s] > p[best] { s } else { best });
                        AbsoluteExample {
                            id: format!("c{i}"),
                            embedding: cast(&phi),
                            base_score: T::lit(labels[base]),
                            base_probs: Some(
                                labels
                                    .iter()
                                    .zip(&p)
                                    .map(|(&l, &q)| (label_key(l), T::lit(q)))
                                    .collect(),
                            ),
                            human_score: T::lit(labels[label]),
                        }
                    })
                    .collect();
                Dataset {
                    header: self.header(Task::Absolute),
                    examples: Examples::Absolute(examples),
                }
            }
            Scenario::Relative => {
                let logit_noise = Normal::new(0.0, 1.5).expect("valid sd");
                let examples = (0..n)
                    .map(|i| {
                        let phi = gaussian_vec(&mut rng, d, 1.0);
                        let p = logistic(logit_noise.sample(&mut rng));
                        let z = dot(&phi, w) + self.signal_weight * (p / (1.0 - p)).ln() + self.bias[0];
                        let y = rng.random::<f64>() < logistic(z);
                        PairwiseExample {
                            id: format!("p{i}"),
                            form: PairForm::Relative {
                                embedding: cast(&phi),
                                base_prob_first: T::lit(p),
                            },
                            human_pref: u8::from(y),
                        }
                    })
                    .collect();
                Dataset {
                    header: self.header(Task::Pairwise),
                    examples: Examples::Pairwise(examples),
                }
            }
            Scenario::TwoHeaded => {
                let examples = (0..n)
                    .map(|i| {
                        let pa = gaussian_vec(&mut rng, d, 1.0);
                        let pb = gaussian_vec(&mut rng, d, 1.0);
                        let ba = Self::base_score(&mut rng);
                        let bb = Self::base_score(&mut rng);
                        let diff: Vec<f64> = pa.iter().zip(&pb).map(|(a, b)| a - b).collect();
                        let z = dot(&diff, w) + self.signal_weight * (ba / bb).ln() + self.bias[0];
                        let y = rng.random::<f64>() < logistic(z);
                        PairwiseExample {
                            id: format!("t{i}"),
                            form: PairForm::TwoHeaded {
                                embedding_a: cast(&pa),
                                embedding_b: cast(&pb),
                                base_score_a: T::lit(ba),
                                base_score_b: T::lit(bb),
                            },
                            human_pref: u8::from(y),
                        }
                    })
                    .collect();
                Dataset {
                    header: self.header(Task::Pairwise),
                    examples: Examples::Pairwise(examples),
                }
            }
            Scenario::Ranking { items } => {
                let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
                let examples = (0..n)
                    .map(|i| {
                        let mut its = Vec::with_capacity(items);
                        let mut perturbed = Vec::with_capacity(items);
                        for _ in 0..items {
                            let phi = gaussian_vec(&mut rng, d, 1.0);
                            let b = Self::base_score(&mut rng);
                            let u = dot(&phi, w) + self.signal_weight * b;
                            perturbed.push(u + gumbel.sample(&mut rng));
                            its.push(RankedItem {
                                embedding: cast(&phi),
                                base_score: T::lit(b),
                            });
                        }
                        let mut ranking: Vec<usize> = (0..items).collect();
                        ranking.sort_by(|&a, &b| perturbed[b].total_cmp(&perturbed[a]));
                        RankingExample {
                            id: format!("k{i}"),
                            items: its,
                            human_ranking: ranking,
                        }
                    })
                    .collect();
                Dataset {
                    header: self.header(Task::Ranking),
                    examples: Examples::Ranking(examples),
                }
            }
        }
    }
}

fn sample_softmax(rng: &mut Rng, z: &[f64]) -> usize {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = e.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &x) in e.iter().enumerate() {
        if u < x {
            return i;
        }
        u -= x;
    }
    z.len() - 1
}
