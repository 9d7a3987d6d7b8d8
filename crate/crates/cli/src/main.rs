//! `fairaudit`: run fairness audits from a JSON configuration.
//!
//! Exit status: 0 on success, 2 when a guideline fails (unless the config
//! sets `fail_on_guidelines: false`), 1 on any error.

mod output;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairaudit::config::{hash_bytes, DatasetSource, FoldSpec, RunConfig};
use fairaudit::dataset::{make_folds, write_csv};
use fairaudit::ensemble::aggregate_by_feature;
use fairaudit::evaluation::{cross_validate, write_delta_csv};
use fairaudit::metrics::{estimates_to_csv, MetricEstimate};
use fairaudit::pipeline::{audit, mitigate_and_reaudit};
use fairaudit::{Convention, Error, Result};

use output::{tag_csv, Outputs};

#[derive(Parser, Debug)]
#[command(
    name = "fairaudit",
    version,
    about = "Estimate, compare and mitigate bias in binary classifiers"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override fields of the configuration file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run configuration; without one, the built-in synthetic dataset is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (or output file for synth, metrics and ensemble).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["corrected", "verbatim"])]
    convention: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Generator training batch size.
    #[arg(long, global = true)]
    batch: Option<usize>,
    #[arg(long, global = true)]
    lambda1: Option<f64>,
    #[arg(long, global = true)]
    lambda2: Option<f64>,
    #[arg(long, global = true)]
    lambda3: Option<f64>,
    /// Bias-vector magnitude threshold in the loss.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Finite-difference step for the model sensitivity term.
    #[arg(long, global = true)]
    fd_step: Option<f64>,
    /// Target group positive-rate variance for mitigation.
    #[arg(long, global = true)]
    threshold_variance: Option<f64>,
    /// Run k-fold cross-validation in addition to the full audit.
    #[arg(long, global = true)]
    folds: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Metrics, ensemble, BENN and guidelines; writes a report to the output directory.
    Audit,
    /// Re-weight the dataset and compare audits before and after.
    Mitigate,
    /// Write the synthetic dataset as CSV.
    Synth {
        #[arg(long)]
        count: Option<usize>,
        /// Probability that `biased` equals the label (1.0 is the exact construction).
        #[arg(long)]
        agreement: Option<f64>,
    },
    /// Estimate all 21 metrics per protected feature (JSON, or CSV when --out ends in .csv).
    Metrics,
    /// Maximum available metric per feature, from --input or from a fresh metrics run.
    Ensemble {
        /// Metrics JSON written by `fairaudit metrics`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

impl Overrides {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::synthetic(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = &self.convention {
            cfg.metrics.convention = c.parse::<Convention>()?;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.lambda1 {
            cfg.loss.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            cfg.loss.lambda2 = v;
        }
        if let Some(v) = self.lambda3 {
            cfg.loss.lambda3 = v;
        }
        if let Some(v) = self.eps {
            cfg.loss.eps = v;
        }
        if let Some(v) = self.fd_step {
            cfg.loss.fd_step = v;
        }
        if let Some(v) = self.threshold_variance {
            cfg.mitigation.threshold = v;
        }
        if let Some(k) = self.folds {
            cfg.folds = Some(FoldSpec {
                k,
                ..cfg.folds.unwrap_or_default()
            });
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&std::env::var("BIAS_AUDIT_LOG").unwrap_or_else(|_| "warn".into()))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Audit => cmd_audit(&cli.overrides),
        Command::Mitigate => cmd_mitigate(&cli.overrides),
        Command::Synth { count, agreement } => cmd_synth(&cli.overrides, *count, *agreement),
        Command::Metrics => cmd_metrics(&cli.overrides),
        Command::Ensemble { input } => cmd_ensemble(&cli.overrides, input.as_deref()),
    }
}

fn verdict(passed: bool, cfg: &RunConfig) -> ExitCode {
    if passed || !cfg.fail_on_guidelines {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn cmd_audit(o: &Overrides) -> Result<ExitCode> {
    let cfg = o.load()?;
    cfg.validate(cfg.benn)?;
    let hash = cfg.hash();
    let ds = cfg.load_dataset()?;
    let model = cfg.model_spec(&ds)?;
    let settings = cfg.audit_settings();
    let out = Outputs::new(&cfg.output_dir, &hash)?;
    out.write_config(&cfg)?;

    let result = audit(&ds, &model, &settings)?;
    let mut report = result.report;
    report.config_hash = hash.clone();
    out.write_text("report.json", &report.to_json()?)?;
    out.write_text("report.txt", &report.to_table())?;
    out.write_csv("metrics.csv", estimates_to_csv(&report.metrics)?.into_bytes())?;
    if let Some(log) = &result.training_log {
        out.write_csv_with("training_log.csv", |w| log.write_csv(w))?;
    }
    if let Some(net) = &result.generator {
        out.write_json("generator.json", &net.to_json()?)?;
    }
    if let Some(tree) = &result.tree {
        out.write_json("tree.json", &tree.to_json()?)?;
    }
    let _ = write!(io::stdout(), "{}", report.to_table());
    let mut passed = report.guidelines.as_ref().is_none_or(|g| g.passed());

    if let Some(fold_spec) = &cfg.folds {
        let plan = make_folds(ds.len(), fold_spec.k, fold_spec.seed.unwrap_or(cfg.seed))?;
        let mut cv = cross_validate(&ds, &plan, &settings, fold_spec.permissive)?;
        cv.config_hash = hash.clone();
        out.write_text("cv_report.json", &cv.to_json()?)?;
        out.write_text("cv_report.txt", &cv.to_table())?;
        let _ = write!(io::stdout(), "\n{}", cv.to_table());
        passed &= cv.guidelines.as_ref().is_none_or(|g| g.passed());
    }
    Ok(verdict(passed, &cfg))
}

fn cmd_mitigate(o: &Overrides) -> Result<ExitCode> {
    let cfg = o.load()?;
    cfg.validate(cfg.mitigation_audit)?;
    let hash = cfg.hash();
    let ds = cfg.load_dataset()?;
    let feature = match &cfg.mitigation_feature {
        Some(f) => f.clone(),
        None => cfg
            .protected
            .first()
            .or_else(|| ds.schema().protected.first())
            .cloned()
            .ok_or_else(|| Error::Argument("no protected feature to mitigate".into()))?,
    };
    let out = Outputs::new(&cfg.output_dir, &hash)?;
    out.write_config(&cfg)?;

    let (mitigated, log) = if cfg.mitigation_audit {
        let r = mitigate_and_reaudit(&ds, &feature, &cfg.mitigation, &cfg.audit_settings())?;
        for (name, audit) in [("before", &r.before), ("after", &r.after)] {
            let mut rep = audit.report.clone();
            rep.config_hash = hash.clone();
            out.write_text(&format!("report_{name}.json"), &rep.to_json()?)?;
            out.write_text(&format!("report_{name}.txt"), &rep.to_table())?;
        }
        out.write_csv_with("mitigation_delta.csv", |w| write_delta_csv(&r.deltas, w))?;
        for d in &r.deltas {
            let _ = writeln!(
                io::stdout(),
                "{}: ensemble change {:+.4}, BENN change {:+.4}, {}",
                d.feature,
                d.ensemble_delta,
                d.benn_delta,
                if d.agree { "agree" } else { "disagree" }
            );
        }
        (r.mitigated, r.log)
    } else {
        fairaudit::mitigation::reweight(&ds, &feature, &cfg.mitigation)?
    };
    if log.iterations == 0 {
        log::info!(
            "variance {:.6} already within the threshold; dataset unchanged",
            log.initial_variance
        );
    }
    out.write_csv_with("mitigated.csv", |w| write_csv(&mitigated, w))?;
    out.write_csv_with("mitigation_log.csv", |w| log.write_csv(w))?;
    let _ = writeln!(
        io::stdout(),
        "{feature}: variance {:.6} -> {:.6} after {} iterations, {} replicas",
        log.initial_variance,
        log.final_variance,
        log.iterations,
        log.steps.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(o: &Overrides, count: Option<usize>, agreement: Option<f64>) -> Result<ExitCode> {
    let mut cfg = o.load()?;
    let DatasetSource::Synthetic {
        count: c,
        biased_agreement: a,
        ..
    } = &mut cfg.dataset
    else {
        return Err(Error::Argument("synth needs a synthetic dataset source".into()));
    };
    if let Some(n) = count {
        *c = n;
    }
    if let Some(v) = agreement {
        *a = v;
    }
    cfg.validate(false)?;
    let ds = cfg.load_dataset()?;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf)?;
    let bytes = tag_csv(&buf, &cfg.hash())?;
    emit(o.out.as_deref(), &bytes)
}

fn cmd_metrics(o: &Overrides) -> Result<ExitCode> {
    let (estimates, hash) = compute_metrics(o)?;
    let csv_out = o
        .out
        .as_ref()
        .is_some_and(|p| p.extension().is_some_and(|e| e == "csv"));
    let bytes = if csv_out {
        tag_csv(estimates_to_csv(&estimates)?.as_bytes(), &hash)?
    } else {
        let v = serde_json::json!({ "config_hash": hash, "metrics": estimates });
        (serde_json::to_string_pretty(&v)? + "\n").into_bytes()
    };
    emit(o.out.as_deref(), &bytes)
}

fn compute_metrics(o: &Overrides) -> Result<(Vec<MetricEstimate>, String)> {
    let mut cfg = o.load()?;
    cfg.benn = false;
    cfg.validate(false)?;
    let ds = cfg.load_dataset()?;
    let model = cfg.model_spec(&ds)?;
    let out = audit(&ds, &model, &cfg.audit_settings())?;
    Ok((out.report.metrics, cfg.hash()))
}

fn cmd_ensemble(o: &Overrides, input: Option<&Path>) -> Result<ExitCode> {
    let (estimates, hash) = match input {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            // Accept a bare array or an object with a `metrics` field (metrics output, reports).
            let hash = v
                .get("config_hash")
                .and_then(|h| h.as_str())
                .map_or_else(|| hash_bytes(text.as_bytes()), str::to_string);
            let metrics = v.get("metrics").cloned().unwrap_or(v);
            (serde_json::from_value::<Vec<MetricEstimate>>(metrics)?, hash)
        }
        None => compute_metrics(o)?,
    };
    let ensemble = aggregate_by_feature(&estimates)?;
    let v = serde_json::json!({ "config_hash": hash, "ensemble": ensemble });
    emit(o.out.as_deref(), (serde_json::to_string_pretty(&v)? + "\n").as_bytes())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<ExitCode> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })?;
            }
            fs::write(p, bytes).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
        }
        None => {
            io::stdout().write_all(bytes).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
