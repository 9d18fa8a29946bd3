//! `propnli`: generate data, train and evaluate sentence-pair models, run the
//! cutoff experiments and learning curves, and audit datasets.
//!
//! Every subcommand echoes its fully resolved configuration to stdout before
//! doing any work. Diagnostics go to stderr; the exit code is 0 only when the
//! whole operation succeeded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use propnli_core::datagen::{self, DatasetSplit, Exhaustion, GenConfig, MAX_BIN};
use propnli_core::{Example, Relation};
use propnli_models::{
    evaluate_by_bin, learning_curve, report, sweep_lambda, train, train_and_evaluate, EncoderKind, Model, ModelConfig,
    TrainConfig, LAMBDA_GRID,
};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

const TRAIN_FILE: &str = "train.tsv";
const TEST_FILE: &str = "test.tsv";
const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Parser)]
#[command(name = "propnli", version, about = "Propositional-logic entailment with tree and sequence encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset and split it into train.tsv and test.tsv.
    Gen(GenArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Predict with a checkpoint and write gold/predicted pairs.
    Eval(EvalArgs),
    /// Train on bins up to a cutoff, test on every bin, write reports.
    Experiment(ExperimentArgs),
    /// Test accuracy as a function of training-set size.
    Curve(CurveArgs),
    /// Recheck every label and bin in a dataset directory.
    Audit(AuditArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Pairs to draw per bin.
    #[arg(long, default_value_t = 1000)]
    per_bin: usize,
    #[arg(long, default_value_t = MAX_BIN)]
    max_bin: usize,
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
    /// Train fraction of every bin.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Fail instead of keeping a short bin when it runs out of distinct pairs.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Clone)]
struct TrainingArgs {
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    model: EncoderKind,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Seed for initialization and shuffling.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// L2 strength.
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Choose lambda from {1e-3, 1e-4, 1e-5} on a held-out slice of the training data first.
    #[arg(long)]
    sweep_lambda: bool,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long)]
    d_emb: Option<usize>,
    #[arg(long)]
    d_hidden: Option<usize>,
    #[arg(long)]
    d_c: Option<usize>,
    /// Worker threads; results are identical for any value.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: TrainingArgs,
    /// Train only on bins up to this one (default: every training bin).
    #[arg(long, value_parser = parse_cutoff)]
    cutoff: Option<usize>,
    #[arg(long, default_value = "run")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Which file of the data directory to evaluate.
    #[arg(long, default_value = "test", value_parser = ["train", "test"])]
    split: String,
    #[arg(long, default_value = "eval")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: TrainingArgs,
    #[arg(long, value_parser = parse_cutoff)]
    cutoff: usize,
    /// Keep the epoch with the best accuracy on a held-out tenth of the training data.
    #[arg(long)]
    best_epoch: bool,
    #[arg(long, default_value = "experiment")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    common: TrainingArgs,
    #[arg(long, value_parser = parse_cutoff)]
    cutoff: usize,
    /// Training-set sizes, ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value = "curve")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
}

fn parse_kind(s: &str) -> std::result::Result<EncoderKind, String> {
    match s {
        "treernn" | "treerntn" | "treelstm" | "lstm" | "nbow" => s.parse().map_err(|e| format!("{e}")),
        _ => Err("expected one of treernn, treerntn, treelstm, lstm, nbow".into()),
    }
}

fn parse_cutoff(s: &str) -> std::result::Result<usize, String> {
    match s {
        "3" | "4" | "6" => Ok(s.parse().expect("digit")),
        _ => Err("expected one of 3, 4, 6".into()),
    }
}

/// Resolved configuration, printed as `key = value` lines.
#[derive(Default)]
struct Echo(Vec<(String, String)>);

impl Echo {
    fn new(command: &str) -> Self {
        let mut e = Echo::default();
        e.push("command", command);
        e
    }

    fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.push((key.to_owned(), value.to_string()));
        self
    }

    fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn emit(&self) {
        print!("{}", self.render());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Curve(a) => curve(a),
        Command::Audit(a) => audit(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn gen(a: GenArgs) -> Result<bool> {
    let cfg = GenConfig {
        seed: a.seed,
        per_bin_pairs: a.per_bin,
        max_bin: a.max_bin,
        on_exhausted: if a.strict { Exhaustion::Fail } else { Exhaustion::Cap },
        ..GenConfig::default()
    };
    let mut echo = Echo::new("gen");
    echo.push("seed", cfg.seed)
        .push("per_bin", cfg.per_bin_pairs)
        .push("max_bin", cfg.max_bin)
        .push("split", a.split)
        .push("negation_probability", cfg.negation_probability)
        .push("dedupe", cfg.dedupe)
        .push("on_exhausted", if a.strict { "fail" } else { "cap" })
        .push("out_dir", a.out_dir.display());
    echo.emit();
    if !(a.split > 0.0 && a.split < 1.0) {
        return Err(format!("--split must be in (0, 1), got {}", a.split).into());
    }
    let data = datagen::generate_pairs(&cfg)?;
    let split = datagen::split_dataset(&data, a.split, cfg.seed);
    fs::create_dir_all(&a.out_dir)?;
    datagen::write_dataset(&split.train, a.out_dir.join(TRAIN_FILE))?;
    datagen::write_dataset(&split.test, a.out_dir.join(TEST_FILE))?;
    fs::write(a.out_dir.join("stats.md"), stats_markdown(&split, cfg.max_bin, &echo))?;
    println!("wrote {} train and {} test examples to {}", split.train.len(), split.test.len(), a.out_dir.display());
    Ok(true)
}

fn stats_markdown(split: &DatasetSplit, max_bin: usize, echo: &Echo) -> String {
    let mut out = String::from("# Dataset statistics\n\n");
    let _ = writeln!(out, "```\n{}```\n", echo.render());
    let train_bins = datagen::bin_counts(&split.train, max_bin);
    let test_bins = datagen::bin_counts(&split.test, max_bin);
    out.push_str("| bin | train | test |\n|---|---|---|\n");
    for bin in 0..=max_bin {
        let _ = writeln!(out, "| {bin} | {} | {} |", train_bins[bin], test_bins[bin]);
    }
    let _ = writeln!(out, "| total | {} | {} |\n", split.train.len(), split.test.len());
    let all = datagen::class_distribution(split.train.iter().chain(&split.test));
    out.push_str("| relation | count | fraction |\n|---|---|---|\n");
    for r in Relation::ALL {
        let label = if r == Relation::Alternation { "\\|" } else { r.label() };
        let _ = writeln!(out, "| {label} | {} | {:.4} |", all.count(r), all.fraction(r));
    }
    let majority = all.majority();
    let _ = writeln!(out, "\nMajority class: {} ({:.4} of all examples)", majority.label(), all.fraction(majority));
    out
}

fn load_dir(dir: &Path) -> Result<(Vec<Example>, Vec<Example>)> {
    let read = |name: &str| {
        let path = dir.join(name);
        datagen::read_dataset(&path).map_err(|e| format!("{}: {e}", path.display()))
    };
    Ok((read(TRAIN_FILE)?, read(TEST_FILE)?))
}

fn model_config(a: &TrainingArgs) -> ModelConfig {
    let mut mc = ModelConfig::new(a.model, a.seed);
    if let Some(d) = a.d_emb {
        mc.encoder.d_emb = d;
    }
    if let Some(d) = a.d_hidden {
        mc.encoder.d_hidden = d;
    }
    if let Some(d) = a.d_c {
        mc.d_c = d;
    }
    mc
}

fn train_config(a: &TrainingArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lambda: a.lambda,
        seed: a.seed,
        threads: a.threads,
        ..TrainConfig::default()
    }
}

fn echo_training(echo: &mut Echo, a: &TrainingArgs, mc: &ModelConfig, tc: &TrainConfig) {
    echo.push("data_dir", a.data_dir.display())
        .push("model", mc.encoder.kind)
        .push("vocabulary_size", mc.encoder.kind.vocab_size())
        .push("d_emb", mc.encoder.d_emb)
        .push("d_hidden", mc.encoder.d_hidden)
        .push("d_c", mc.d_c)
        .push("seed", mc.seed)
        .push("epochs", tc.epochs)
        .push("batch_size", tc.batch_size)
        .push("lambda", tc.lambda)
        .push("sweep_lambda", a.sweep_lambda)
        .push("adadelta_rho", tc.rho)
        .push("adadelta_eps", tc.eps)
        .push("shuffle", tc.shuffle)
        .push("threads", tc.threads);
}

/// Runs the lambda sweep when requested and returns the config to train with.
fn resolve_lambda(a: &TrainingArgs, train_set: &[Example], mc: &ModelConfig, tc: TrainConfig) -> Result<TrainConfig> {
    if !a.sweep_lambda {
        return Ok(tc);
    }
    let sweep = sweep_lambda(train_set, &LAMBDA_GRID, 0.1, mc, &tc)?;
    for (lambda, acc) in &sweep.results {
        println!("lambda {lambda:e}: held-out accuracy {acc:.4}");
    }
    println!("chosen_lambda = {}", sweep.chosen);
    Ok(TrainConfig { lambda: sweep.chosen, ..tc })
}

fn cut(examples: &[Example], cutoff: Option<usize>) -> Vec<Example> {
    examples.iter().filter(|e| cutoff.is_none_or(|c| e.bin <= c)).cloned().collect()
}

fn train_cmd(a: TrainArgs) -> Result<bool> {
    let mc = model_config(&a.common);
    let tc = train_config(&a.common);
    let mut echo = Echo::new("train");
    echo_training(&mut echo, &a.common, &mc, &tc);
    echo.push("cutoff", a.cutoff.map_or("none".into(), |c| c.to_string())).push("out_dir", a.out_dir.display());
    echo.emit();
    mc.validate()?;
    tc.validate()?;
    let (train_all, _) = load_dir(&a.common.data_dir)?;
    let train_set = cut(&train_all, a.cutoff);
    let tc = resolve_lambda(&a.common, &train_set, &mc, tc)?;
    let mut model = Model::with_optimizer(mc, tc.optimizer())?;
    let history = train(&mut model, &train_set, &tc)?;
    fs::create_dir_all(&a.out_dir)?;
    model.save(&a.out_dir.join(CHECKPOINT_FILE))?;
    fs::write(a.out_dir.join("config.txt"), echo.render())?;
    fs::write(a.out_dir.join("history.json"), serde_json::to_string_pretty(&history)?)?;
    if let Some(last) = history.epoch_losses.last() {
        println!("trained on {} examples, final epoch loss {last:.4}", train_set.len());
    }
    Ok(true)
}

fn eval_cmd(a: EvalArgs) -> Result<bool> {
    let mut echo = Echo::new("eval");
    echo.push("checkpoint", a.checkpoint.display())
        .push("data_dir", a.data_dir.display())
        .push("split", &a.split)
        .push("out_dir", a.out_dir.display())
        .push("threads", a.threads);
    echo.emit();
    let model = Model::load(&a.checkpoint)?;
    println!("model = {}", model.kind());
    println!("vocabulary_size = {}", model.kind().vocab_size());
    let path = a.data_dir.join(format!("{}.tsv", a.split));
    let examples = datagen::read_dataset(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let table = evaluate_by_bin(&model, &examples, a.threads)?;
    let mut tsv = String::from("gold\tpredicted\n");
    for e in &examples {
        let _ = writeln!(tsv, "{}\t{}", e.label, model.predict(e)?);
    }
    fs::create_dir_all(&a.out_dir)?;
    fs::write(a.out_dir.join("predictions.tsv"), tsv)?;
    let mut csv = String::from("bin,count,correct,accuracy\n");
    for s in &table.bins {
        let acc = s.accuracy().map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{acc}", s.bin, s.count, s.correct);
    }
    fs::write(a.out_dir.join("per_bin.csv"), csv)?;
    match table.pooled(0..=MAX_BIN) {
        Some(acc) => println!("accuracy over {} examples: {:.4}", table.total(), acc),
        None => println!("no examples evaluated"),
    }
    Ok(true)
}

fn experiment(a: ExperimentArgs) -> Result<bool> {
    let mc = model_config(&a.common);
    let mut tc = train_config(&a.common);
    tc.best_epoch = a.best_epoch;
    let mut echo = Echo::new("experiment");
    echo_training(&mut echo, &a.common, &mc, &tc);
    echo.push("cutoff", a.cutoff)
        .push("training_bins", format!("0-{}", a.cutoff))
        .push("best_epoch", a.best_epoch)
        .push("out_dir", a.out_dir.display());
    echo.emit();
    mc.validate()?;
    tc.validate()?;
    let (train_all, test) = load_dir(&a.common.data_dir)?;
    let train_set = cut(&train_all, Some(a.cutoff));
    let tc = resolve_lambda(&a.common, &train_set, &mc, tc)?;
    if a.common.sweep_lambda {
        echo.push("chosen_lambda", tc.lambda);
    }
    let (model, report) = train_and_evaluate(&mc, &tc, &train_set, &test, Some(a.cutoff))?;
    fs::create_dir_all(&a.out_dir)?;
    fs::write(a.out_dir.join("per_bin.csv"), report::per_bin_csv(&report))?;
    fs::write(a.out_dir.join("plot.csv"), report::plot_csv(&[&report]))?;
    fs::write(a.out_dir.join("summary.md"), report::markdown_summary(&report, &echo.render()))?;
    fs::write(a.out_dir.join("config.txt"), echo.render())?;
    fs::write(a.out_dir.join("history.json"), serde_json::to_string_pretty(&report.history)?)?;
    model.save(&a.out_dir.join(CHECKPOINT_FILE))?;
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v));
    println!(
        "train {} | test bins 1-{} {} | bins {}-{MAX_BIN} {}",
        pct(report.train_accuracy()),
        a.cutoff,
        pct(report.test.pooled(1..=a.cutoff)),
        a.cutoff + 1,
        pct(report.test.pooled(a.cutoff + 1..=MAX_BIN)),
    );
    if report.degenerate() {
        eprintln!("warning: degenerate run, train accuracy does not beat the majority-class baseline");
    }
    Ok(true)
}

fn curve(a: CurveArgs) -> Result<bool> {
    let mc = model_config(&a.common);
    let tc = train_config(&a.common);
    let mut echo = Echo::new("curve");
    echo_training(&mut echo, &a.common, &mc, &tc);
    echo.push("cutoff", a.cutoff)
        .push("sizes", a.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","))
        .push("out_dir", a.out_dir.display());
    echo.emit();
    mc.validate()?;
    tc.validate()?;
    let (train_all, test) = load_dir(&a.common.data_dir)?;
    let tc = resolve_lambda(&a.common, &cut(&train_all, Some(a.cutoff)), &mc, tc)?;
    let split = DatasetSplit { train: train_all, test, split_fraction: f64::NAN, seed: tc.seed };
    let points = learning_curve(&split, a.cutoff, &a.sizes, &mc, &tc)?;
    fs::create_dir_all(&a.out_dir)?;
    fs::write(a.out_dir.join("curve.csv"), report::curve_csv(&points))?;
    fs::write(a.out_dir.join("config.txt"), echo.render())?;
    for p in &points {
        println!("size {}: accuracy {:.4}", p.size, p.accuracy);
    }
    Ok(true)
}

fn audit(a: AuditArgs) -> Result<bool> {
    let mut echo = Echo::new("audit");
    echo.push("data_dir", a.data_dir.display()).push("max_bin", MAX_BIN);
    echo.emit();
    let mut ok = true;
    for name in [TRAIN_FILE, TEST_FILE] {
        let path = a.data_dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut examples = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            match datagen::parse_tsv_line(line, i + 1) {
                Ok(e) => {
                    examples.push(e);
                    lines.push(i + 1);
                }
                Err(e) => {
                    ok = false;
                    eprintln!("{}: {e}", path.display());
                }
            }
        }
        let failures = datagen::audit(&examples, MAX_BIN);
        for f in &failures {
            eprintln!("{}: line {}: {}", path.display(), lines[f.line - 1], f.message);
        }
        ok &= failures.is_empty();
        println!("{}: {} examples checked, {} problems", path.display(), examples.len(), failures.len());
    }
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}
