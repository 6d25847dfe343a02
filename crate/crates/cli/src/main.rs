//! `qjudge`: train, evaluate and ablate quantitative judges from the shell.
//!
//! Exit status is 0 on success, 2 when the input or flags are invalid and 1
//! when a run fails while computing or writing.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qjudge::dataset::{load_dataset, load_dataset_with, split_dataset, write_dataset, Labels};
use qjudge::pipeline::{
    ablate_features, ablate_gamma, ablate_size, evaluate, predict, summarize, train,
    EvalOptions, GammaChoice, TrainOptions,
};
use qjudge::seed::{self, Stream};
use qjudge::synthetic::{Generator, Scenario};
use qjudge::training::{Init, LrDecay, SgdConfig, DEFAULT_GAMMA_GRID};
use qjudge::{Dataset, Error, JudgeModel, ModelKind, ProbClamp};

use output::{write_config, write_json, write_predictions, write_summary, write_table, Sink};

#[derive(Parser)]
#[command(name = "qjudge", version, about = "Quantitative judges on top of LLM judge outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a judge and write the model file plus a training summary.
    Train(TrainCmd),
    /// Score a model on a labelled dataset.
    Evaluate(EvaluateCmd),
    /// Write one prediction record per input example.
    Predict(PredictCmd),
    /// Test metrics as a function of the training-set fraction.
    AblateSize(AblateSizeCmd),
    /// Test metrics for each fixed regularization strength.
    AblateGamma(AblateGammaCmd),
    /// Test metrics after randomly dropping embedding coordinates.
    AblateFeatures(AblateFeaturesCmd),
    /// Write a synthetic dataset drawn from a known model.
    Synth(SynthCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
enum Gamma {
    #[serde(serialize_with = "auto_str")]
    Auto,
    Fixed(f64),
}

fn auto_str<S: serde::Serializer>(s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str("auto")
}

fn parse_gamma(s: &str) -> Result<Gamma, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Gamma::Auto);
    }
    let g: f64 = s.parse().map_err(|_| format!("`{s}` is neither `auto` nor a number"))?;
    if !(g >= 0.0 && g.is_finite()) {
        return Err(format!("gamma {g} must be finite and non-negative"));
    }
    Ok(Gamma::Fixed(g))
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DecayArg {
    None,
    InverseSqrtEpoch,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SgdArgs {
    /// SGD step size.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Step-size schedule.
    #[arg(long, value_enum, default_value_t = DecayArg::InverseSqrtEpoch)]
    lr_decay: DecayArg,
}

impl SgdArgs {
    fn config(&self) -> SgdConfig<f64> {
        SgdConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            shuffle_seed: 0,
            lr_decay: match self.lr_decay {
                DecayArg::None => LrDecay::None,
                DecayArg::InverseSqrtEpoch => LrDecay::InverseSqrtEpoch,
            },
            init: Init::BaseJudgeIdentity,
        }
    }
}

/// Flags shared by every command that trains.
#[derive(Debug, Clone, Args, Serialize)]
struct FitArgs {
    #[arg(long, value_parser = parse_kind)]
    #[serde(serialize_with = "kind_str")]
    kind: ModelKind,
    /// `auto` selects γ by k-fold cross-validation over --grid.
    #[arg(long, value_parser = parse_gamma, default_value = "auto")]
    gamma: Gamma,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train pairwise judges on rankings expanded into all item pairs.
    #[arg(long)]
    expand_pairs: bool,
    #[command(flatten)]
    #[serde(flatten)]
    sgd: SgdArgs,
}

fn kind_str<S: serde::Serializer>(k: &ModelKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(k.as_str())
}

impl FitArgs {
    fn options(&self, grid: &[f64]) -> TrainOptions<f64> {
        let mut o = TrainOptions::new(self.kind);
        o.gamma = match self.gamma {
            Gamma::Auto => GammaChoice::Auto,
            Gamma::Fixed(g) => GammaChoice::Fixed(g),
        };
        o.grid = grid.to_vec();
        o.folds = self.folds;
        o.sgd = self.sgd.config();
        o.seed = self.seed;
        o.expand_pairs = self.expand_pairs;
        o
    }

    fn check(&self, grid_given: bool) -> Result<(), Failure> {
        if let Gamma::Fixed(_) = self.gamma {
            if grid_given {
                return Err(Failure::usage("--grid only applies with --gamma auto"));
            }
        }
        if self.folds < 2 {
            return Err(Failure::usage("--folds must be at least 2"));
        }
        self.sgd.config().validate()?;
        Ok(())
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainCmd {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    fit: FitArgs,
    /// Cross-validation grid for --gamma auto.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, visible_alias = "data")]
    test_data: PathBuf,
    /// Clip LS predictions to the score-set range before scoring.
    #[arg(long)]
    clip_to_score_set: bool,
    /// Include one (id, prediction, truth) record per example.
    #[arg(long)]
    per_example: bool,
    #[arg(long)]
    expand_pairs: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PredictCmd {
    #[arg(long)]
    model: PathBuf,
    /// Inputs; labels are optional.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    clip_to_score_set: bool,
    /// JSON-lines predictions; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Data flags of the ablation commands.
#[derive(Debug, Args, Serialize)]
struct AblationData {
    #[arg(long)]
    data: PathBuf,
    /// Fixed test set; without it 20% of --data is held out.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// CSV table; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AblateSizeCmd {
    #[command(flatten)]
    #[serde(flatten)]
    io: AblationData,
    #[command(flatten)]
    #[serde(flatten)]
    fit: FitArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0])]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    n_seeds: usize,
    /// Cross-validation grid for --gamma auto.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
struct AblateGammaCmd {
    #[command(flatten)]
    #[serde(flatten)]
    io: AblationData,
    #[arg(long, value_parser = parse_kind)]
    #[serde(serialize_with = "kind_str")]
    kind: ModelKind,
    /// The γ values to sweep.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    expand_pairs: bool,
    #[command(flatten)]
    #[serde(flatten)]
    sgd: SgdArgs,
}

#[derive(Debug, Args, Serialize)]
struct AblateFeaturesCmd {
    #[command(flatten)]
    #[serde(flatten)]
    io: AblationData,
    #[command(flatten)]
    #[serde(flatten)]
    fit: FitArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 0.75, 0.875])]
    drop: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    n_seeds: usize,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
struct SynthCmd {
    /// Judge kind whose natural task is generated.
    #[arg(long, value_parser = parse_kind)]
    #[serde(serialize_with = "kind_str")]
    kind: ModelKind,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    dimension: usize,
    /// Noise standard deviation of LS human scores.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Score levels (mn) or items per ranking (pl).
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// A failed run, classified for the exit status.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure::Validation(msg.into())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(path: &Path) -> Result<Dataset, Failure> {
    load_dataset(path).map_err(|e| located(path, e))
}

/// Failures while reading an input file count as invalid input, including
/// a missing or unreadable path.
fn located(path: &Path, e: Error) -> Failure {
    let f = match e {
        Error::Io { .. } => Failure::Validation(e.to_string()),
        e => Failure::from(e),
    };
    match f {
        Failure::Validation(m) if !m.starts_with(&*path.to_string_lossy()) => {
            Failure::Validation(format!("{}: {m}", path.display()))
        }
        other => other,
    }
}

fn load_model(path: &Path) -> Result<JudgeModel, Failure> {
    JudgeModel::load(path).map_err(|e| located(path, e))
}

fn gamma_grid(grid: &Option<Vec<f64>>) -> Result<Vec<f64>, Failure> {
    let g = grid.clone().unwrap_or_else(|| DEFAULT_GAMMA_GRID.to_vec());
    if g.is_empty() {
        return Err(Failure::usage("--grid is empty"));
    }
    if let Some(bad) = g.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(Failure::usage(format!("grid value {bad} must be finite and non-negative")));
    }
    Ok(g)
}

/// Train/test pair for an ablation: the given test file, or a seeded 80/20
/// split of the data.
fn ablation_sets(io: &AblationData, seed: u64) -> Result<(Dataset, Dataset), Failure> {
    let data = load(&io.data)?;
    match &io.test_data {
        Some(p) => Ok((data, load(p)?)),
        None => Ok(split_dataset(&data, 0.2, seed::derive(seed, Stream::Split, 0))?),
    }
}

fn run_train(cmd: &TrainCmd) -> Result<(), Failure> {
    cmd.fit.check(cmd.grid.is_some())?;
    let grid = gamma_grid(&cmd.grid)?;
    let data = load(&cmd.data)?;
    let model = train(&data, &cmd.fit.options(&grid))?;
    model.save(&cmd.out)?;
    write_config(&cmd.out, "train", cmd)?;
    write_summary(&cmd.out, &model, &cmd.data)?;
    Ok(())
}

fn run_evaluate(cmd: &EvaluateCmd) -> Result<(), Failure> {
    let model = load_model(&cmd.model)?;
    let data = load(&cmd.test_data)?;
    let opts = EvalOptions {
        clip_to_score_set: cmd.clip_to_score_set,
        per_example: cmd.per_example,
        expand_pairs: cmd.expand_pairs,
        seed: cmd.seed,
        clamp: ProbClamp::default(),
    };
    let report = evaluate(&model, &data, &opts)?;
    let sink = Sink::new(cmd.out.as_deref());
    write_json(&sink, &report)?;
    if let Some(out) = &cmd.out {
        write_config(out, "evaluate", cmd)?;
    }
    Ok(())
}

fn run_predict(cmd: &PredictCmd) -> Result<(), Failure> {
    let model = load_model(&cmd.model)?;
    let data = load_dataset_with(&cmd.data, Labels::Optional).map_err(|e| located(&cmd.data, e))?;
    let preds = predict(&model, &data, cmd.clip_to_score_set, &ProbClamp::default())?;
    write_predictions(&Sink::new(cmd.out.as_deref()), &preds)?;
    if let Some(out) = &cmd.out {
        write_config(out, "predict", cmd)?;
    }
    Ok(())
}

fn finish_ablation<C: Serialize>(
    out: Option<&Path>,
    name: &str,
    setting: &str,
    rows: Vec<qjudge::pipeline::AblationRow>,
    cmd: &C,
) -> Result<(), Failure> {
    // single-run sweeps have nothing to average
    let means = if rows.iter().any(|r| r.run.is_some()) {
        summarize(&rows)
    } else {
        Vec::new()
    };
    write_table(&Sink::new(out), setting, &rows, &means)?;
    if let Some(out) = out {
        write_config(out, name, cmd)?;
    }
    Ok(())
}

fn run_ablate_size(cmd: &AblateSizeCmd) -> Result<(), Failure> {
    cmd.fit.check(cmd.grid.is_some())?;
    if cmd.n_seeds == 0 {
        return Err(Failure::usage("--n-seeds must be at least 1"));
    }
    let grid = gamma_grid(&cmd.grid)?;
    let (train_ds, test_ds) = ablation_sets(&cmd.io, cmd.fit.seed)?;
    let rows = ablate_size(&train_ds, &test_ds, &cmd.fit.options(&grid), &cmd.fractions, cmd.n_seeds)?;
    finish_ablation(cmd.io.out.as_deref(), "ablate-size", "fraction", rows, cmd)
}

fn run_ablate_gamma(cmd: &AblateGammaCmd) -> Result<(), Failure> {
    cmd.sgd.config().validate()?;
    let grid = gamma_grid(&cmd.grid)?;
    let (train_ds, test_ds) = ablation_sets(&cmd.io, cmd.seed)?;
    let mut opts = TrainOptions::new(cmd.kind);
    opts.sgd = cmd.sgd.config();
    opts.seed = cmd.seed;
    opts.expand_pairs = cmd.expand_pairs;
    let rows = ablate_gamma(&train_ds, &test_ds, &opts, &grid)?;
    finish_ablation(cmd.io.out.as_deref(), "ablate-gamma", "gamma", rows, cmd)
}

fn run_ablate_features(cmd: &AblateFeaturesCmd) -> Result<(), Failure> {
    cmd.fit.check(cmd.grid.is_some())?;
    if cmd.n_seeds == 0 {
        return Err(Failure::usage("--n-seeds must be at least 1"));
    }
    let grid = gamma_grid(&cmd.grid)?;
    let (train_ds, test_ds) = ablation_sets(&cmd.io, cmd.fit.seed)?;
    let rows = ablate_features(&train_ds, &test_ds, &cmd.fit.options(&grid), &cmd.drop, cmd.n_seeds)?;
    finish_ablation(cmd.io.out.as_deref(), "ablate-features", "drop", rows, cmd)
}

fn run_synth(cmd: &SynthCmd) -> Result<(), Failure> {
    if cmd.dimension == 0 || cmd.n == 0 {
        return Err(Failure::usage("--n and --dimension must be positive"));
    }
    if !(cmd.noise >= 0.0 && cmd.noise.is_finite()) {
        return Err(Failure::usage("--noise must be finite and non-negative"));
    }
    let scenario = match (cmd.kind, cmd.levels) {
        (ModelKind::Ls, _) => Scenario::Regression { noise_sd: cmd.noise },
        (ModelKind::Mn, Some(l)) if l >= 2 => Scenario::Categorical { levels: l },
        (ModelKind::Pl, Some(k)) if k >= 2 => Scenario::Ranking { items: k },
        (ModelKind::Mn | ModelKind::Pl, Some(_)) => {
            return Err(Failure::usage("--levels must be at least 2"))
        }
        (kind, _) => Scenario::for_kind(kind),
    };
    let generator = Generator::new(scenario, cmd.dimension, cmd.seed);
    let ds: Dataset = generator.sample(cmd.n, seed::derive(cmd.seed, Stream::Synthetic, 1));
    write_dataset(&cmd.out, &ds)?;
    write_config(&cmd.out, "synth", cmd)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => run_train(c),
        Command::Evaluate(c) => run_evaluate(c),
        Command::Predict(c) => run_predict(c),
        Command::AblateSize(c) => run_ablate_size(c),
        Command::AblateGamma(c) => run_ablate_gamma(c),
        Command::AblateFeatures(c) => run_ablate_features(c),
        Command::Synth(c) => run_synth(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
