//! `salience`: dataset checks, toy training and evaluation sweeps.
//!
//! Exit status: 0 success, 1 validation failure, 2 usage or configuration
//! error, 3 runtime failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use salience_core::config::RunConfig;
use salience_core::dataset::{
    parse_dataset, parse_dataset_lenient, salience_diff, serialize_dataset, split, stats, validate,
    write_stats_csv, Dataset,
};
use salience_core::detector::{encode_checkpoint, mean_loss, train};
use salience_core::eval::{
    mean_recall_difference, parse_metrics_csv, pr_sweep, write_metrics_csv, FrameTruth, MetricsRow,
    PRPoint,
};
use salience_core::experiment::{
    curve_figures, generate_splits, run_experiment, scene_predictions, scenes_dataset,
    write_experiment, SUMMARY_MIN_THRESHOLD,
};
use salience_core::geometry::{parse_predictions, serialize_predictions};

#[derive(Parser)]
#[command(
    name = "salience",
    version,
    about = "Salience-aware traffic light detection toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset and print one line per violation.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Print annotation counts per light category.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        /// Emit CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Split a dataset into train/val/test files by frame.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Supplies the `[split]` ratios.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// List annotations whose salience flag differs between two labelings.
    DiffSalience {
        #[arg(long)]
        dataset: PathBuf,
        /// The second labeling of the same frames.
        other: PathBuf,
    },
    /// Train one toy model on synthetic scenes.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep confidence thresholds over predictions for a ground-truth dataset.
    Evaluate {
        /// Ground truth.
        #[arg(long)]
        dataset: PathBuf,
        /// Predictions (JSON lines, one frame per line).
        predictions: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iou_threshold: Option<f64>,
        /// Also write `metrics.csv` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Train with and without the salience weight and compare.
    Experiment {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the three precision charts from metrics CSV files.
    Plot {
        /// Metrics files; each becomes one curve labelled by its file stem.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file plus per-field overrides.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }

    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 3,
            error: error.into(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate { dataset } => cmd_validate(&dataset),
        Command::Stats { dataset, csv } => cmd_stats(&dataset, csv),
        Command::Split {
            dataset,
            out,
            seed,
            config,
        } => cmd_split(&dataset, &out, seed, config.as_deref()),
        Command::DiffSalience { dataset, other } => cmd_diff(&dataset, &other),
        Command::Train { run, out } => cmd_train(&run, &out),
        Command::Evaluate {
            dataset,
            predictions,
            config,
            iou_threshold,
            out,
            csv,
        } => cmd_evaluate(
            &dataset,
            &predictions,
            config.as_deref(),
            iou_threshold,
            out.as_deref(),
            csv,
        ),
        Command::Experiment { run, out } => cmd_experiment(&run, &out),
        Command::Plot { metrics, out } => cmd_plot(&metrics, &out),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::usage(anyhow!("cannot read {}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Failure::runtime(anyhow!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::runtime(anyhow!("cannot create {}: {e}", dir.display())))
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    parse_dataset(&read_text(path)?)
        .map_err(|e| Failure::invalid(anyhow!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::from_toml(&read_text(p)?)
            .map_err(|e| Failure::usage(anyhow!("{}: {e}", p.display()))),
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(t) = self.iou_threshold {
            cfg.eval.iou_threshold = t;
        }
        if let Some(w) = self.omega {
            cfg.loss.omega = w;
        }
        if let Some(g) = self.gamma {
            cfg.loss.gamma = g;
        }
        if let Some(a) = self.alpha {
            cfg.loss.alpha = a;
        }
        if let Some(n) = self.epochs {
            cfg.train.epochs = n;
        }
        if let Some(lr) = self.lr {
            cfg.train.learning_rate = lr;
        }
        cfg.check().map_err(Failure::usage)?;
        Ok(cfg)
    }
}

fn cmd_validate(path: &Path) -> Outcome {
    let (dataset, lines) = parse_dataset_lenient(&read_text(path)?)
        .map_err(|e| Failure::invalid(anyhow!("{}: {e}", path.display())))?;
    let violations = validate(&dataset);
    for v in &violations {
        println!("line {}: {v}", lines[v.frame_index]);
    }
    Ok(u8::from(!violations.is_empty()))
}

fn cmd_stats(path: &Path, csv: bool) -> Outcome {
    let s = stats(&load_dataset(path)?);
    if csv {
        print!("{}", write_stats_csv(&s));
        return Ok(0);
    }
    println!("total        {}", s.total_annotations);
    println!("salient      {}", s.salient_count);
    println!("non-salient  {}", s.non_salient_count);
    if !s.per_category.is_empty() {
        println!();
        println!(
            "{:<8} {:<10} {:<10} {:<12} {:>8}",
            "salient", "color", "status", "directional", "count"
        );
        for (k, n) in &s.per_category {
            println!(
                "{:<8} {:<10} {:<10} {:<12} {:>8}",
                k.salient,
                k.color.as_str(),
                k.status.as_str(),
                k.directional,
                n
            );
        }
    }
    Ok(0)
}

fn cmd_split(path: &Path, out: &Path, seed: Option<u64>, config: Option<&Path>) -> Outcome {
    let cfg = load_config(config)?;
    let seed = seed.unwrap_or(cfg.experiment.seed);
    let dataset = load_dataset(path)?;
    let (train, val, test) = split(&dataset, cfg.split, seed).map_err(Failure::usage)?;
    create_dir(out)?;
    for (name, part) in [
        ("train.jsonl", &train),
        ("val.jsonl", &val),
        ("test.jsonl", &test),
    ] {
        write_file(out, name, serialize_dataset(part))?;
        println!("{name}: {} frames", part.len());
    }
    Ok(0)
}

fn cmd_diff(a: &Path, b: &Path) -> Outcome {
    let (da, db) = (load_dataset(a)?, load_dataset(b)?);
    let diffs = salience_diff(&da, &db).map_err(Failure::invalid)?;
    for d in &diffs {
        println!(
            "frame {:?} annotation {}: salient {} vs {}",
            d.frame_id, d.annotation, d.salient_a, d.salient_b
        );
    }
    Ok(u8::from(!diffs.is_empty()))
}

fn cmd_train(args: &RunArgs, out: &Path) -> Outcome {
    let cfg = args.resolve()?;
    let splits = generate_splits(&cfg).map_err(Failure::runtime)?;
    let tc = cfg.train_config();
    let trained = train(&splits.train, &tc).map_err(Failure::runtime)?;
    create_dir(out)?;
    write_file(out, "model.sltm", encode_checkpoint(&trained.model))?;
    write_file(out, "config.toml", cfg.to_toml())?;
    let mut history = String::from("epoch,mean_loss\n");
    for (e, l) in trained.history.iter().enumerate() {
        writeln!(history, "{e},{l:.9}").expect("string write");
    }
    write_file(out, "history.csv", history)?;
    write_file(
        out,
        "test_gt.jsonl",
        serialize_dataset(&scenes_dataset(&splits.test)),
    )?;
    let preds = scene_predictions(&trained.model, &splits.test).map_err(Failure::runtime)?;
    write_file(out, "test_predictions.jsonl", serialize_predictions(&preds))?;
    let last = trained.history.last().copied().unwrap_or(f64::NAN);
    print!(
        "trained {} epochs, final mean loss {last:.6}",
        trained.history.len()
    );
    if !splits.val.is_empty() {
        let val = mean_loss(&trained.model, &splits.val, &tc).map_err(Failure::runtime)?;
        print!(", validation loss {val:.6}");
    }
    println!();
    Ok(0)
}

fn cmd_evaluate(
    gt: &Path,
    predictions: &Path,
    config: Option<&Path>,
    iou_threshold: Option<f64>,
    out: Option<&Path>,
    csv: bool,
) -> Outcome {
    let mut cfg = load_config(config)?.eval;
    if let Some(t) = iou_threshold {
        cfg.iou_threshold = t;
    }
    cfg.check().map_err(Failure::usage)?;
    let truths: Vec<FrameTruth> = load_dataset(gt)?
        .frames
        .iter()
        .map(FrameTruth::from)
        .collect();
    let preds = parse_predictions(&read_text(predictions)?)
        .map_err(|e| Failure::invalid(anyhow!("{}: {e}", predictions.display())))?;
    let points = pr_sweep(&preds, &truths, &cfg).map_err(Failure::invalid)?;
    let table = write_metrics_csv(&points);
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(dir, "metrics.csv", &table)?;
    }
    if csv {
        print!("{table}");
    } else {
        print_points(&points);
    }
    Ok(0)
}

fn print_points(points: &[PRPoint]) {
    println!(
        "{:>9} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9} {:>9}",
        "threshold", "tp", "fp", "fn", "precision", "recall", "salient", "diff"
    );
    for p in points {
        println!(
            "{:>9.1} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>+9.4}",
            p.confidence_threshold,
            p.tp_all,
            p.fp_all,
            p.fn_all,
            p.precision_all,
            p.recall_all,
            p.recall_salient,
            p.recall_difference
        );
    }
    if let Some(m) = mean_recall_difference(points, SUMMARY_MIN_THRESHOLD) {
        println!("mean recall_difference at thresholds >= {SUMMARY_MIN_THRESHOLD}: {m:+.6}");
    }
}

fn cmd_experiment(args: &RunArgs, out: &Path) -> Outcome {
    let cfg = args.resolve()?;
    let outcome = run_experiment(&cfg).map_err(Failure::runtime)?;
    let summary = write_experiment(&outcome, out).map_err(Failure::runtime)?;
    write_file(out, "config.toml", cfg.to_toml())?;
    println!("{summary}");
    Ok(0)
}

fn cmd_plot(files: &[PathBuf], out: &Path) -> Outcome {
    let mut curves: Vec<(String, Vec<MetricsRow>)> = Vec::with_capacity(files.len());
    for f in files {
        let rows = parse_metrics_csv(&read_text(f)?)
            .map_err(|e| Failure::usage(anyhow!("{}: {e}", f.display())))?;
        let label = f.file_stem().map_or_else(
            || f.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        curves.push((label, rows));
    }
    let figures = curve_figures(&curves).map_err(Failure::usage)?;
    create_dir(out)?;
    for (name, svg) in figures {
        write_file(out, &name, svg)?;
        println!("{}", out.join(&name).display());
    }
    Ok(0)
}
