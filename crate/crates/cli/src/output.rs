//! Files written by the commands: reports, prediction lines, ablation tables,
//! resolved configs and training summaries.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use qjudge::pipeline::{AblationRow, Prediction};
use qjudge::JudgeModel;

use crate::Failure;

/// Output destination: a file, or stdout when no path was given.
pub struct Sink<'a>(Option<&'a Path>);

impl<'a> Sink<'a> {
    pub fn new(path: Option<&'a Path>) -> Self {
        Sink(path)
    }

    fn write(&self, bytes: &[u8]) -> Result<(), Failure> {
        match self.0 {
            Some(p) => fs::write(p, bytes).map_err(|e| io_failure(p, e)),
            None => io::stdout()
                .lock()
                .write_all(bytes)
                .map_err(|e| Failure::Runtime(format!("stdout: {e}"))),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn json_failure(e: serde_json::Error) -> Failure {
    Failure::Runtime(format!("json: {e}"))
}

/// `dir/name.ext` → `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn write_json<T: Serialize>(sink: &Sink, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_failure)?;
    text.push('\n');
    sink.write(text.as_bytes())
}

pub fn write_predictions(sink: &Sink, preds: &[Prediction]) -> Result<(), Failure> {
    let mut text = String::new();
    for p in preds {
        text.push_str(&serde_json::to_string(p).map_err(json_failure)?);
        text.push('\n');
    }
    sink.write(text.as_bytes())
}

#[derive(Serialize)]
struct ResolvedConfig<'a, C> {
    command: &'a str,
    version: &'a str,
    args: &'a C,
}

/// Writes the fully resolved flags next to `out` as `<stem>.config.json`.
pub fn write_config<C: Serialize>(out: &Path, command: &str, args: &C) -> Result<(), Failure> {
    let cfg = ResolvedConfig {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    let path = sibling(out, "config.json");
    write_json(&Sink::new(Some(&path)), &cfg)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Human-readable training summary next to the model file.
pub fn write_summary(out: &Path, model: &JudgeModel, data: &Path) -> Result<(), Failure> {
    let m = &model.metadata;
    let mut s = String::new();
    let _ = writeln!(s, "kind            {}", model.kind);
    let _ = writeln!(s, "data            {}", data.display());
    let _ = writeln!(s, "training size   {}", m.training_size.unwrap_or(0));
    let _ = writeln!(s, "dimension       {}", model.dimension);
    let _ = writeln!(s, "gamma           {}", model.gamma);
    let _ = writeln!(s, "epochs          {}", m.epochs_run.unwrap_or(0));
    let _ = writeln!(s, "best epoch      {}", m.best_epoch.unwrap_or(0));
    let _ = writeln!(s, "final loss      {}", opt(m.final_loss));
    let _ = writeln!(s, "gradient norm   {}", opt(m.final_gradient_norm));
    let _ = writeln!(s, "theta norm      {}", model.theta_norm());
    if let Some(cv) = &m.cv {
        let _ = writeln!(s, "\n{}-fold cross-validation (seed {})", cv.folds, cv.seed);
        let _ = writeln!(s, "{:>12}  {:>14}  fold losses", "gamma", "mean loss");
        for ((g, mean), folds) in cv.grid.iter().zip(cv.mean_losses()).zip(&cv.fold_losses) {
            let marker = if *g == cv.chosen_gamma { " *" } else { "" };
            let folds: Vec<String> = folds.iter().map(|x| format!("{x:.6}")).collect();
            let _ = writeln!(s, "{g:>12}  {mean:>14.6}  {}{marker}", folds.join(" "));
        }
    }
    let path = sibling(out, "summary.txt");
    Sink::new(Some(&path)).write(s.as_bytes())
}

const METRICS: [&str; 10] = [
    "loss",
    "mse",
    "mae",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "pearson_r",
    "spearman_rho",
    "kendall_tau",
];

/// Long-format CSV: one row per (setting, run), followed by the `mean` rows
/// (if any). The run column is empty for single-run sweeps.
pub fn write_table(
    sink: &Sink,
    setting: &str,
    rows: &[AblationRow],
    means: &[AblationRow],
) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_failure = |e: csv::Error| Failure::Runtime(format!("csv: {e}"));
    let mut header = vec![setting, "run", "kind", "n_train", "n_test", "dimension", "gamma", "theta_norm"];
    header.extend(METRICS);
    header.push("correlation_input");
    w.write_record(&header).map_err(csv_failure)?;
    let labelled = rows
        .iter()
        .map(|r| (r, r.run.map(|x| x.to_string()).unwrap_or_default()))
        .chain(means.iter().map(|r| (r, "mean".to_string())));
    for (r, run) in labelled {
        let rep = &r.report;
        let mut rec = vec![
            r.setting.to_string(),
            run,
            rep.kind.clone(),
            r.n_train.to_string(),
            rep.n.to_string(),
            r.dimension.to_string(),
            r.gamma.to_string(),
            r.theta_norm.to_string(),
        ];
        rec.extend(
            [
                rep.loss,
                rep.mse,
                rep.mae,
                rep.accuracy,
                rep.precision,
                rep.recall,
                rep.f1,
                rep.pearson_r,
                rep.spearman_rho,
                rep.kendall_tau,
            ]
            .map(opt),
        );
        rec.push(rep.correlation_input.clone());
        w.write_record(&rec).map_err(csv_failure)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(format!("csv: {e}")))?;
    sink.write(&bytes)
}
