//! The `adaptaug` command-line tool.
//!
//! Settings come from built-in defaults, then `--config FILE`, then
//! `--set key=value`, then explicit flags. Every artifact records the tool
//! version, seed and a hash of the effective settings; CSV files carry it as
//! a leading `#` comment line.

mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backtest::{run_backtest, DailyPredictions, DayPredictions};
use crate::data::{
    align_classes, load_ucr_tsv, make_financial_splits, sine_vs_sawtooth, stratified_split, synth_returns,
    write_ucr_tsv, Dataset, FinancialSplit, ReturnsPanel, SplitSpec, WindowRef,
};
use crate::model::Mlp;
use crate::policy::{PolicyConfig, PolicyKind};
use crate::rng::{hash_words, RngStream};
use crate::search::{grid_search, subset_sweep, write_sweep_csv, SearchPlan};
use crate::trainer::{evaluate, train, Evaluation, TrainConfig, TrainOutcome};
use crate::transforms::{self, resolve, Magnitude, TransformId, TransformSpec, FINANCIAL_SET, UCR_SET};
use crate::{Error, Result};

pub use settings::{Settings, KEYS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "adaptaug", version, about = "Adaptive time-series augmentation: train, search and backtest")]
pub struct Cli {
    /// Flat `key = value` settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (or file, for single-artifact commands).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Override any setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write every transform of every sample of a UCR file to CSV.
    Augment(AugmentArgs),
    /// Train one model (UCR file) or one model per study period (returns CSV).
    Train(TrainArgs),
    /// Grid search over policy, magnitude and trim depth.
    Search(SearchArgs),
    /// Long-short backtest of a predictions file.
    Backtest(BacktestArgs),
    /// Generate a synthetic returns panel or toy classification set.
    Synth(SynthArgs),
    /// Summarize a JSON artifact written by another subcommand.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `ucr`, `financial`, or a comma list such as `identity,jitter:sigma=0.05`.
    #[arg(long)]
    pub transforms: Option<String>,
    /// 1..=20, or `fixed` for the fixed catalog values.
    #[arg(long)]
    pub magnitude: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Returns CSV (`date,ticker,return`); switches to the windowed pipeline.
    #[arg(long)]
    pub returns: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub transforms: Option<String>,
    #[arg(long)]
    pub magnitude: Option<String>,
    #[arg(long)]
    pub alpha: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub policies: Option<String>,
    #[arg(long)]
    pub magnitudes: Option<String>,
    #[arg(long)]
    pub alphas: Option<String>,
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub subset_sizes: Option<String>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub returns: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub cost_bps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `returns` (panel CSV) or `shapes` (sine vs sawtooth TSV).
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub stocks: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON artifact to summarize.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

fn set_opt<T: ToString>(s: &mut Settings, key: &str, v: &Option<T>) -> Result<()> {
    match v {
        Some(v) => s.set(key, v.to_string()),
        None => Ok(()),
    }
}

fn set_path(s: &mut Settings, key: &str, v: &Option<PathBuf>) -> Result<()> {
    set_opt(s, key, &v.as_ref().map(|p| p.display().to_string()))
}

/// Resolve the effective settings for a parsed command line.
pub fn settings_for(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        if !path.exists() {
            return Err(Error::Config { key: "config".into(), msg: format!("{} does not exist", path.display()) });
        }
        s.load_file(path)?;
    }
    for a in &cli.set {
        s.assign(a)?;
    }
    set_opt(&mut s, "seed", &cli.seed)?;
    set_path(&mut s, "out", &cli.out)?;
    set_opt(&mut s, "workers", &cli.workers)?;
    match &cli.command {
        Command::Augment(a) => {
            set_path(&mut s, "input", &a.input)?;
            set_opt(&mut s, "transforms", &a.transforms)?;
            set_opt(&mut s, "magnitude", &a.magnitude)?;
        }
        Command::Train(a) => {
            set_path(&mut s, "input", &a.input)?;
            set_path(&mut s, "test", &a.test)?;
            set_path(&mut s, "returns", &a.returns)?;
            set_opt(&mut s, "policy", &a.policy)?;
            set_opt(&mut s, "transforms", &a.transforms)?;
            set_opt(&mut s, "magnitude", &a.magnitude)?;
            set_opt(&mut s, "alpha", &a.alpha)?;
            set_opt(&mut s, "epochs", &a.epochs)?;
            set_opt(&mut s, "batch_size", &a.batch_size)?;
            set_opt(&mut s, "lr", &a.lr)?;
            set_path(&mut s, "checkpoint", &a.checkpoint)?;
        }
        Command::Search(a) => {
            set_path(&mut s, "input", &a.input)?;
            set_path(&mut s, "test", &a.test)?;
            set_opt(&mut s, "policies", &a.policies)?;
            set_opt(&mut s, "magnitudes", &a.magnitudes)?;
            set_opt(&mut s, "alphas", &a.alphas)?;
            set_opt(&mut s, "splits", &a.splits)?;
            set_opt(&mut s, "epochs", &a.epochs)?;
            set_opt(&mut s, "subset_sizes", &a.subset_sizes)?;
        }
        Command::Backtest(a) => {
            set_path(&mut s, "predictions", &a.predictions)?;
            set_path(&mut s, "returns", &a.returns)?;
            set_opt(&mut s, "k", &a.k)?;
            set_opt(&mut s, "cost_bps", &a.cost_bps)?;
        }
        Command::Synth(a) => {
            set_opt(&mut s, "kind", &a.kind)?;
            set_opt(&mut s, "stocks", &a.stocks)?;
            set_opt(&mut s, "days", &a.days)?;
            set_opt(&mut s, "samples", &a.samples)?;
            set_opt(&mut s, "length", &a.length)?;
        }
        Command::Report(a) => set_path(&mut s, "input", &a.input)?,
    }
    Ok(s)
}

pub fn run(cli: &Cli) -> Result<()> {
    let s = settings_for(cli)?;
    let name = match &cli.command {
        Command::Augment(_) => "augment",
        Command::Train(_) => "train",
        Command::Search(_) => "search",
        Command::Backtest(_) => "backtest",
        Command::Synth(_) => "synth",
        Command::Report(_) => "report",
    };
    if name == "report" {
        return cmd_report(&s);
    }
    let workers: usize = s.parse("workers")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config { key: "workers".into(), msg: e.to_string() })?;
    let mut out = Outputs::new(&s, name)?;
    let result = pool.install(|| match &cli.command {
        Command::Augment(_) => cmd_augment(&s, &mut out),
        Command::Train(_) => cmd_train(&s, &mut out),
        Command::Search(_) => cmd_search(&s, &mut out),
        Command::Backtest(_) => cmd_backtest(&s, &mut out),
        Command::Synth(_) => cmd_synth(&s, &mut out),
        Command::Report(_) => unreachable!(),
    });
    if result.is_err() {
        out.cleanup();
    }
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    fn comment(&self) -> String {
        format!(
            "# {} {} command={} seed={} config={}\n",
            self.tool, self.version, self.command, self.seed, self.config_hash
        )
    }
}

/// Tracks written artifacts so a failed command leaves nothing behind.
pub struct Outputs {
    target: PathBuf,
    single_file: bool,
    written: Vec<PathBuf>,
    pub provenance: Provenance,
}

impl Outputs {
    fn new(s: &Settings, command: &str) -> Result<Self> {
        let target = PathBuf::from(s.require("out")?);
        let single_file = target.extension().is_some() && !target.is_dir();
        Ok(Self {
            target,
            single_file,
            written: Vec::new(),
            provenance: Provenance {
                tool: "adaptaug".into(),
                version: VERSION.into(),
                command: command.into(),
                seed: s.parse("seed")?,
                config_hash: s.hash(),
            },
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        if self.single_file { self.target.clone() } else { self.target.join(name) }
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.written.push(path.clone());
        std::fs::write(&path, bytes)?;
        Ok(path)
    }

    /// A CSV (or TSV) artifact with the provenance comment first.
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = self.provenance.comment().into_bytes();
        body(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    fn json(&mut self, name: &str, kind: &str, mut body: Value) -> Result<PathBuf> {
        if let Value::Object(map) = &mut body {
            map.insert("kind".into(), json!(kind));
            map.insert("provenance".into(), serde_json::to_value(&self.provenance)?);
        }
        let mut text = serde_json::to_string_pretty(&body)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

/// One entry of a transform list: a catalog name with optional parameter
/// overrides, `name:key=value:key=value`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformRequest {
    pub id: TransformId,
    pub overrides: Vec<(String, f64)>,
}

/// Parse `ucr`, `financial`/`sp500`, or a comma list. Identity is put first
/// if missing.
pub fn parse_transform_list(text: &str) -> Result<Vec<TransformRequest>> {
    let key_err = |msg: String| Error::Config { key: "transforms".into(), msg };
    let ids_only = |ids: &[TransformId]| ids.iter().map(|&id| TransformRequest { id, overrides: vec![] }).collect();
    let mut list: Vec<TransformRequest> = match text.trim().to_ascii_lowercase().as_str() {
        "ucr" => ids_only(&UCR_SET),
        "financial" | "sp500" => ids_only(&FINANCIAL_SET),
        _ => text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                let mut parts = item.split(':');
                let id: TransformId = parts.next().unwrap_or("").parse().map_err(|e: Error| key_err(e.to_string()))?;
                let overrides = parts
                    .map(|kv| {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| key_err(format!("`{kv}` in `{item}` is not key=value")))?;
                        let v: f64 = v.trim().parse().map_err(|_| key_err(format!("`{v}` is not a number")))?;
                        Ok((k.trim().to_string(), v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TransformRequest { id, overrides })
            })
            .collect::<Result<_>>()?,
    };
    if list.is_empty() {
        return Err(key_err("empty transform list".into()));
    }
    if list[0].id != TransformId::Identity {
        list.insert(0, TransformRequest { id: TransformId::Identity, overrides: vec![] });
    }
    Ok(list)
}

/// Resolve requests at `magnitude`, then apply overrides.
pub fn resolve_requests(requests: &[TransformRequest], magnitude: Magnitude) -> Result<Vec<TransformSpec>> {
    requests
        .iter()
        .map(|r| {
            let base = resolve(r.id, magnitude)?;
            if r.overrides.is_empty() {
                return Ok(base);
            }
            let mut params = base.params();
            for (k, v) in &r.overrides {
                match params.iter_mut().find(|(n, _)| n == k) {
                    Some(slot) => slot.1 = *v,
                    None => {
                        return Err(Error::Config {
                            key: "transforms".into(),
                            msg: format!("{} has no parameter `{k}`", r.id),
                        })
                    }
                }
            }
            let spec = TransformSpec::from_params(r.id, &params)?;
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

fn load_dataset(s: &Settings, key: &str) -> Result<Dataset> {
    let ds = load_ucr_tsv(&s.path(key)?)?;
    Ok(if s.parse::<bool>("normalize")? { ds.znormalized() } else { ds })
}

fn fmt_values(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| v.to_string())
}

fn cmd_augment(s: &Settings, out: &mut Outputs) -> Result<()> {
    let ds = load_dataset(s, "input")?;
    let magnitude: Magnitude = s.parse("magnitude")?;
    let specs = resolve_requests(&parse_transform_list(s.require("transforms")?)?, magnitude)?;
    let seed: u64 = s.parse("seed")?;
    let l = ds.series_len();
    let path = out.csv("augmented.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let header: Vec<String> = ["sample_id".to_string(), "transform_id".to_string()]
            .into_iter()
            .chain((1..=l).map(|t| format!("v_{t}")))
            .collect();
        w.write_record(&header)?;
        for (i, x) in ds.samples.iter().enumerate() {
            for (j, spec) in specs.iter().enumerate() {
                let stream = RngStream::new(seed).sample(i as u64).transform(j as u64);
                let y = transforms::apply(spec, x, &stream)?;
                let row: Vec<String> = [i.to_string(), spec.id().name().to_string()]
                    .into_iter()
                    .chain(fmt_values(&y.values))
                    .collect();
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    println!("wrote {} rows to {}", ds.len() * specs.len(), path.display());
    Ok(())
}

fn train_config(s: &Settings, seed: u64) -> Result<TrainConfig> {
    let kind: PolicyKind = s.parse("policy")?;
    let policy_seed = hash_words(seed, &[1]);
    let policy = if kind == PolicyKind::None {
        PolicyConfig::none(policy_seed)
    } else {
        let magnitude: Magnitude = s.parse("magnitude")?;
        let specs = resolve_requests(&parse_transform_list(s.require("transforms")?)?, magnitude)?;
        let mut p = PolicyConfig::new(kind, specs, magnitude, policy_seed);
        if kind == PolicyKind::AlphaTrimmed {
            p.alpha = s.parse("alpha")?;
        }
        p.freeze_weights = s.parse("freeze_weights")?;
        p
    };
    let mut cfg = TrainConfig::new(policy, hash_words(seed, &[2]));
    cfg.batch_size = s.parse("batch_size")?;
    cfg.optimizer.lr = s.parse("lr")?;
    cfg.max_epochs = s.parse("epochs")?;
    cfg.early_stop_patience = s.parse("patience")?;
    cfg.plateau_patience = s.parse("plateau_patience")?;
    cfg.plateau_factor = s.parse("plateau_factor")?;
    cfg.validate()?;
    Ok(cfg)
}

fn eval_summary(e: &Evaluation) -> Value {
    json!({ "accuracy": e.accuracy, "f1": e.f1, "loss": e.loss })
}

fn write_traces(out: &mut Outputs, outcome: &TrainOutcome, suffix: &str) -> Result<()> {
    let r = &outcome.report;
    out.csv(&format!("epochs{suffix}.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for e in &r.epochs {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    })?;
    if r.policy == PolicyKind::WAugment {
        out.csv(&format!("weight_trace{suffix}.csv"), |buf| r.write_weight_trace(buf))?;
    }
    if r.policy == PolicyKind::AlphaTrimmed {
        out.csv(&format!("selection_histogram{suffix}.csv"), |buf| r.write_selection_histogram(buf))?;
    }
    Ok(())
}

fn cmd_train(s: &Settings, out: &mut Outputs) -> Result<()> {
    if s.get("returns").is_some() {
        return cmd_train_financial(s, out);
    }
    let seed: u64 = s.parse("seed")?;
    let cfg = train_config(s, seed)?;
    let full = load_dataset(s, "input")?;
    let test = match s.path_opt("test")? {
        Some(_) => Some(align_classes(&load_dataset(s, "test")?, &full.class_names)?),
        None => None,
    };
    let val_fraction: f64 = s.parse("val_fraction")?;
    let (train_set, val_set) = stratified_split(&full, 1.0 - val_fraction, hash_words(seed, &[4]))?;
    let model = Mlp::new(full.series_len(), s.parse("hidden")?, full.n_classes, &RngStream::new(hash_words(seed, &[3])));
    let outcome = train(&cfg, &train_set, &val_set, model)?;
    let val = evaluate(&outcome.model, &val_set)?;
    let test_eval = test.as_ref().map(|t| evaluate(&outcome.model, t)).transpose()?;

    let ckpt = match s.get("checkpoint") {
        Some(p) => PathBuf::from(p),
        None => out.path("model.ckpt"),
    };
    let mut buf = Vec::new();
    outcome.model.write_checkpoint(&mut buf)?;
    out.written.push(ckpt.clone());
    if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&ckpt, buf)?;
    write_traces(out, &outcome, "")?;
    out.json(
        "train_report.json",
        "train",
        json!({
            "dataset": full.name,
            "settings": s.effective(),
            "report": outcome.report.without_timing(),
            "policy_weights": outcome.weights.softmax(),
            "validation": eval_summary(&val),
            "test": test_eval.as_ref().map(eval_summary),
            "checkpoint": ckpt.display().to_string(),
        }),
    )?;
    println!(
        "{}: {} epochs (best {}), val acc {:.4}{} [{:.2}s]",
        outcome.report.policy.name(),
        outcome.report.stop_epoch,
        outcome.report.best_epoch,
        val.accuracy,
        test_eval.map_or(String::new(), |t| format!(", test acc {:.4} f1 {:.4}", t.accuracy, t.f1)),
        outcome.report.wall_clock_secs
    );
    Ok(())
}

fn split_spec(s: &Settings) -> Result<SplitSpec> {
    let spec = SplitSpec {
        split_len: s.parse("split_len")?,
        stride: s.parse("stride")?,
        train_len: s.parse("train_len")?,
        window: s.parse("window")?,
        window_stride: 1,
    };
    spec.validate().map_err(|e| Error::Config { key: "window".into(), msg: e.to_string() })?;
    Ok(spec)
}

/// Chronological validation: the last `fraction` of train windows by end day.
fn chronological_split(split: &FinancialSplit, fraction: f64) -> (Vec<WindowRef>, Vec<WindowRef>) {
    let first = split.start + split.spec.window - 1;
    let last = split.start + split.spec.train_len - 2;
    let cut = first + ((last - first + 1) as f64 * (1.0 - fraction)).round() as usize;
    split.train.iter().partition(|w| w.end < cut)
}

fn cmd_train_financial(s: &Settings, out: &mut Outputs) -> Result<()> {
    let seed: u64 = s.parse("seed")?;
    let panel = ReturnsPanel::read_csv(&s.path("returns")?)?;
    let splits = make_financial_splits(&panel, &split_spec(s)?)?;
    let val_fraction: f64 = s.parse("val_fraction")?;
    let hidden: usize = s.parse("hidden")?;
    let mut by_day: BTreeMap<usize, Vec<(String, f64)>> = BTreeMap::new();
    let mut summaries = Vec::new();
    for split in &splits {
        let run_seed = hash_words(seed, &[10, split.index as u64]);
        let cfg = train_config(s, run_seed)?;
        let (tr, va) = chronological_split(split, val_fraction);
        let train_set = split.to_dataset(&tr, format!("split{}/train", split.index));
        let val_set = split.to_dataset(&va, format!("split{}/val", split.index));
        let test_set = split.to_dataset(&split.test, format!("split{}/test", split.index));
        let model = Mlp::new(split.spec.window, hidden, 2, &RngStream::new(hash_words(run_seed, &[3])));
        let outcome = train(&cfg, &train_set, &val_set, model)?;
        let test_eval = evaluate(&outcome.model, &test_set)?;
        for (w, p) in split.test.iter().zip(&test_eval.probabilities) {
            by_day.entry(w.end).or_default().push((panel.tickers[w.stock].clone(), p[1]));
        }
        write_traces(out, &outcome, &format!("_split{}", split.index))?;
        println!(
            "split {} (start {}): {} train / {} val / {} test windows, test acc {:.4}",
            split.index,
            panel.dates[split.start],
            tr.len(),
            va.len(),
            split.test.len(),
            test_eval.accuracy
        );
        summaries.push(json!({
            "index": split.index,
            "start": panel.dates[split.start].to_string(),
            "stats": split.stats,
            "windows": { "train": tr.len(), "val": va.len(), "test": split.test.len() },
            "report": outcome.report.without_timing(),
            "test": eval_summary(&test_eval),
        }));
    }
    let preds = DailyPredictions {
        days: by_day.into_iter().map(|(d, probs)| DayPredictions { date: panel.dates[d], probs }).collect(),
    };
    out.csv("predictions.csv", |buf| preds.write_csv(buf))?;
    out.json("train_report.json", "train_financial", json!({ "settings": s.effective(), "splits": summaries }))?;
    Ok(())
}

fn cmd_search(s: &Settings, out: &mut Outputs) -> Result<()> {
    let seed: u64 = s.parse("seed")?;
    let ds = load_dataset(s, "input")?;
    let test = match s.path_opt("test")? {
        Some(_) => Some(align_classes(&load_dataset(s, "test")?, &ds.class_names)?),
        None => None,
    };
    let requests = parse_transform_list(s.require("transforms")?)?;
    if requests.iter().any(|r| !r.overrides.is_empty()) {
        return Err(Error::Config {
            key: "transforms".into(),
            msg: "search resolves parameters from the magnitude; drop the `name:key=value` overrides".into(),
        });
    }
    let mut plan = SearchPlan::new(seed);
    plan.kinds = s.list("policies")?;
    plan.magnitudes = s.list("magnitudes")?;
    plan.alphas = s.list("alphas")?;
    plan.n_splits = s.parse("splits")?;
    plan.split_fraction = 1.0 - s.parse::<f64>("val_fraction")?;
    plan.transforms = requests.iter().map(|r| r.id).collect();
    plan.subset_sizes = s.list("subset_sizes")?;
    plan.subset_repetitions = s.parse("subset_repetitions")?;
    plan.hidden = s.parse("hidden")?;
    let mut base = train_config(s, seed)?;
    base.policy = PolicyConfig::none(seed);
    plan.train = base;
    if let Some(bad) = plan.magnitudes.iter().find(|m| !(1..=20).contains(*m)) {
        return Err(Error::Config { key: "magnitudes".into(), msg: format!("{bad} outside 1..=20") });
    }

    let result = grid_search(&plan, &ds, test.as_ref())?;
    out.csv("summary.csv", |buf| result.write_summary_csv(buf))?;
    let mut result_json = serde_json::to_value(&result)?;
    strip_timing(&mut result_json);
    out.json("search_result.json", "search", json!({ "settings": s.effective(), "result": result_json }))?;
    if !plan.subset_sizes.is_empty() {
        let points = subset_sweep(&plan, &ds)?;
        out.csv("subset_sweep.csv", |buf| write_sweep_csv(&points, buf))?;
    }
    println!("{} runs over {} configurations", result.run_count, result.configs.len());
    println!("{:<28} {:>9} {:>9}", "policy", "accuracy", "optimal M");
    for row in result.summary_rows() {
        println!(
            "{:<28} {:>9.4} {:>9}",
            row.policy,
            row.accuracy,
            row.optimal_m.map_or("-".to_string(), |m| m.to_string())
        );
    }
    if let Some(b) = result.best {
        println!("best: {} (mean val acc {:.4})", result.configs[b].label, result.configs[b].mean_val_accuracy);
    }
    Ok(())
}

// wall-clock fields would make repeated runs differ byte-wise
fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            if map.contains_key("wall_clock_secs") {
                map.insert("wall_clock_secs".into(), json!(0.0));
            }
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn cmd_backtest(s: &Settings, out: &mut Outputs) -> Result<()> {
    let preds = DailyPredictions::read_csv(&s.path("predictions")?)?;
    let panel = ReturnsPanel::read_csv(&s.path("returns")?)?;
    let k: usize = s.parse("k")?;
    let cost: f64 = s.parse("cost_bps")?;
    let report = run_backtest(&preds, &panel, k, cost)?;
    out.csv("daily_returns.csv", |buf| report.write_daily_csv(buf))?;
    out.json("backtest_report.json", "backtest", json!({ "settings": s.effective(), "report": report }))?;
    print_backtest(&serde_json::to_value(&report)?);
    Ok(())
}

fn num(v: &Value) -> String {
    v.as_f64().map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn print_backtest(report: &Value) {
    let m = &report["metrics"];
    println!("{:>10} {:>10} {:>10} {:>8} {:>10} {:>8} {:>8} {:>8}", "avg ret", "ann ret", "ann vol", "IR", "d. risk", "DIR", "acc", "f1");
    println!(
        "{:>10} {:>10} {:>10} {:>8} {:>10} {:>8} {:>8} {:>8}",
        num(&m["avg_daily_return_pct"]),
        num(&m["annual_return_pct"]),
        num(&m["annual_vol_pct"]),
        num(&m["information_ratio"]),
        num(&m["downside_risk_pct"]),
        num(&m["downside_information_ratio"]),
        num(&report["accuracy"]),
        num(&report["f1"]),
    );
}

fn cmd_synth(s: &Settings, out: &mut Outputs) -> Result<()> {
    let seed: u64 = s.parse("seed")?;
    match s.require("kind")? {
        "returns" => {
            let panel = synth_returns(s.parse("stocks")?, s.parse("days")?, seed)?;
            let path = out.csv("returns.csv", |buf| panel.write_csv(buf))?;
            println!("wrote {} days x {} stocks to {}", panel.days(), panel.stocks(), path.display());
        }
        "shapes" => {
            let ds = sine_vs_sawtooth(s.parse("samples")?, s.parse("length")?, s.parse("period")?, s.parse("noise")?, seed)?;
            let path = out.csv("shapes.tsv", |buf| write_ucr_tsv(&ds, buf))?;
            println!("wrote {} series of length {} to {}", ds.len(), ds.series_len(), path.display());
        }
        other => {
            return Err(Error::Config { key: "kind".into(), msg: format!("`{other}` is not returns or shapes") });
        }
    }
    Ok(())
}

fn cmd_report(s: &Settings) -> Result<()> {
    let path = s.path("input")?;
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    let p = &v["provenance"];
    println!(
        "{} ({} {}, seed {}, config {})",
        path.display(),
        p["tool"].as_str().unwrap_or("?"),
        p["version"].as_str().unwrap_or("?"),
        p["seed"],
        p["config_hash"].as_str().unwrap_or("?")
    );
    match v["kind"].as_str() {
        Some("train") => {
            let r = &v["report"];
            println!("policy {} stopped at epoch {} (best {})", r["policy"], r["stop_epoch"], r["best_epoch"]);
            println!("validation acc {} f1 {}", num(&v["validation"]["accuracy"]), num(&v["validation"]["f1"]));
            if !v["test"].is_null() {
                println!("test acc {} f1 {}", num(&v["test"]["accuracy"]), num(&v["test"]["f1"]));
            }
        }
        Some("train_financial") => {
            for sp in v["splits"].as_array().into_iter().flatten() {
                println!("split {} start {}: test acc {}", sp["index"], sp["start"], num(&sp["test"]["accuracy"]));
            }
        }
        Some("search") => {
            let r = &v["result"];
            for c in r["configs"].as_array().into_iter().flatten() {
                println!(
                    "{:<48} {:>8} ± {:<8}{}",
                    c["label"].as_str().unwrap_or("?"),
                    num(&c["mean_val_accuracy"]),
                    num(&c["std_val_accuracy"]),
                    if c["failed"].as_bool() == Some(true) { " failed" } else { "" }
                );
            }
            if let Some(b) = r["best"].as_u64() {
                println!("best: {}", r["configs"][b as usize]["label"].as_str().unwrap_or("?"));
            }
        }
        Some("backtest") => print_backtest(&v["report"]),
        other => {
            return Err(Error::Format {
                path,
                line: 1,
                msg: format!("not an adaptaug artifact (kind {other:?})"),
            })
        }
    }
    Ok(())
}

/// Parse arguments as the binary would; for tests.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config { key: "args".into(), msg: e.to_string() })?;
    run(&cli)
}
