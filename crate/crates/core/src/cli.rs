//! The `rebalance` command line.
//!
//! Every subcommand reads and writes versioned JSON documents, so a pipeline
//! can be run stage by stage:
//!
//! ```text
//! rebalance synth   --out data
//! rebalance weights --stats data/train.stats.json --scheme effective-number --count-mode per-image --out w.json
//! rebalance train   --dataset data --weights w.json --out model.json
//! rebalance eval    --model model.json --dataset data --out report.json
//! rebalance report  report.json
//! ```
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::classes::ClassTable;
use crate::dataset::{
    compute_stats, generate_splits, parse_labels, split_seed, LabelFormat, Scene, StatsFile, SynthConfig,
    SyntheticDataset,
};
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::eval::{evaluate, read_detections, EvalConfig, EvalReport};
use crate::loss::DEFAULT_PROB_FLOOR;
use crate::pipeline::{detections_from_proposals, train_on_split, TrainSettings};
use crate::provenance::{read_json, write_atomic, write_json, Metadata};
use crate::report::{render, TableFormat};
use crate::sampler::{MiningConfig, Selection};
use crate::trainer::{predict_batch, Architecture, ModelFile, MODEL_FILE_VERSION};
use crate::weights::{scheme_dispatch, Clamp, CountMode, EffectiveForm, SchemeConfig, WeightFile};

#[derive(Debug, Parser)]
#[command(name = "rebalance", version, about = "Class-imbalance aware losses, weights and FPPI recall evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count objects per class in a label file.
    Stats(StatsArgs),
    /// Derive class weights from a stats file.
    Weights(WeightsArgs),
    /// Generate a seeded synthetic proposal dataset.
    Synth(SynthArgs),
    /// Train a proposal classifier on a synthetic dataset.
    Train(TrainArgs),
    /// Per-class recall at a calibrated false-positives-per-image rate.
    Eval(EvalArgs),
    /// Render reports side by side.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Label file.
    #[arg(long)]
    pub labels: PathBuf,
    /// Label format: bdd100k or simple_jsonl.
    #[arg(long, default_value = "bdd100k")]
    pub format: LabelFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeName {
    Uniform,
    Balanced,
    InverseLinear,
    InverseLog,
    EffectiveNumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountModeArg {
    RawCount,
    PerImage,
}

#[derive(Debug, Clone, Args)]
pub struct WeightsArgs {
    /// Stats file produced by `stats` or `synth`.
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long, value_enum)]
    pub scheme: SchemeName,
    /// Manual weight for the balanced scheme, as CLASS=WEIGHT. Repeatable.
    #[arg(long = "manual", value_parser = parse_manual)]
    pub manual: Vec<(String, f64)>,
    /// Scale of the inverse-linear scheme.
    #[arg(long, default_value_t = 0.5)]
    pub k: f64,
    /// Offset of the inverse-log scheme; must exceed every class frequency.
    #[arg(long, default_value_t = 20.0)]
    pub q: f64,
    /// Logarithm base of the inverse-log scheme (natural log when omitted).
    #[arg(long)]
    pub log_base: Option<f64>,
    /// Effective-number decay.
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    /// Class pinned to weight 1 by the effective-number scheme.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, value_enum, default_value_t = CountModeArg::RawCount)]
    pub count_mode: CountModeArg,
    /// Use the effective number itself as the weight.
    #[arg(long)]
    pub literal: bool,
    /// Class pinned to weight 1 by the inverse-frequency schemes. Repeatable.
    #[arg(long = "floor")]
    pub floor: Vec<String>,
    /// Lower bound for inverse-frequency weights.
    #[arg(long)]
    pub min_weight: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of foreground classes for geometric rates.
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
    /// Rate of the most frequent class, in objects per image.
    #[arg(long, default_value_t = 3.0)]
    pub first_rate: f64,
    /// Ratio between consecutive class rates.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub ratio: f64,
    /// Explicit comma-separated class rates; overrides the geometric ones.
    #[arg(long, value_delimiter = ',')]
    pub rates: Vec<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Background proposals per foreground proposal.
    #[arg(long)]
    pub bg_per_fg: Option<f64>,
    /// Range of positive-proposal IoU, as LO,HI.
    #[arg(long, value_delimiter = ',')]
    pub iou_range: Vec<f64>,
    #[arg(long, default_value_t = 5000)]
    pub train_images: usize,
    #[arg(long, default_value_t = 1000)]
    pub eval_images: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Hardest,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset directory produced by `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Weight file produced by `weights`; uniform weights when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ArchArg::Linear)]
    pub arch: ArchArg,
    /// Hidden units of the MLP.
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.03)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Focal modulation exponent; 0 is plain weighted cross entropy.
    #[arg(long, default_value_t = 0.0)]
    pub focal_alpha: f64,
    #[arg(long, default_value_t = DEFAULT_PROB_FLOOR)]
    pub prob_floor: f64,
    /// Background proposals kept per foreground proposal.
    #[arg(long, default_value_t = 3.0)]
    pub bg_per_fg: f64,
    #[arg(long, value_enum, default_value_t = SelectionArg::Hardest)]
    pub selection: SelectionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Model file; detections come from classifying the dataset proposals.
    #[arg(long, requires = "dataset", conflicts_with = "detections")]
    pub model: Option<PathBuf>,
    /// Dataset directory supplying ground truth (and proposals with --model).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value = "eval")]
    pub split: String,
    /// Detections file, one JSON object per line.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Label file supplying ground truth instead of a dataset split.
    #[arg(long, conflicts_with = "dataset")]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "bdd100k")]
    pub format: LabelFormat,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Count IoU equal to the threshold as a match.
    #[arg(long)]
    pub iou_inclusive: bool,
    #[arg(long, default_value_t = 1.0)]
    pub fppi: f64,
    /// Column label used by `report`.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Report files, one column each.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Column labels in report order; defaults to report names or file stems.
    #[arg(long = "label")]
    pub labels: Vec<String>,
    #[arg(long, default_value = "text")]
    pub format: TableFormat,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_manual(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, w) = s.split_once('=').ok_or_else(|| format!("expected CLASS=WEIGHT, got `{s}`"))?;
    let w: f64 = w.parse().map_err(|_| format!("invalid weight in `{s}`"))?;
    Ok((name.to_string(), w))
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } => 3,
        Error::InvalidConfig(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command and reports errors
/// as a single line on stderr.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rebalance: error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Stats(a) => {
            let file = cmd_stats(a)?;
            write_json(&a.out, &file)?;
            for c in &file.stats.classes {
                println!("{}\t{}\t{:.6}", c.name, c.count, c.frequency);
            }
        }
        Command::Weights(a) => {
            let file = cmd_weights(a)?;
            write_json(&a.out, &file)?;
            for c in &file.classes {
                println!("{}\t{}", c.name, c.weight);
            }
        }
        Command::Synth(a) => {
            let ds = cmd_synth(a)?;
            ds.write(&a.out)?;
        }
        Command::Train(a) => {
            let file = cmd_train(a)?;
            write_json(&a.out, &file)?;
            for e in &file.log.epochs {
                println!("epoch {}\tloss {:.6}", e.epoch, e.mean_loss);
            }
        }
        Command::Eval(a) => {
            let report = cmd_eval(a)?;
            write_json(&a.out, &report)?;
            println!(
                "class-average recall {:.4}\toverall recall {:.4}\tthreshold {}",
                report.class_average_recall, report.overall_recall, report.calibration.threshold
            );
        }
        Command::Report(a) => {
            let table = cmd_report(a)?;
            match &a.out {
                Some(path) => write_atomic(path, table.as_bytes())?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

pub fn cmd_stats(args: &StatsArgs) -> Result<StatsFile> {
    let parsed = parse_labels(&args.labels, args.format)?;
    let stats = compute_stats(&parsed.scenes, &parsed.classes)?;
    let mut file = StatsFile::new("all", stats, Some(parsed.skipped));
    file.metadata = Some(Metadata::new("stats", &json!({ "format": args.format }))?.input("labels", &args.labels)?);
    Ok(file)
}

pub fn scheme_config(args: &WeightsArgs) -> Result<SchemeConfig> {
    let clamp = Clamp {
        majority_floor: args.floor.clone(),
        min_weight: args.min_weight,
    };
    Ok(match args.scheme {
        SchemeName::Uniform => SchemeConfig::Uniform,
        SchemeName::Balanced => {
            let mut manual_weights = BTreeMap::new();
            for (name, w) in &args.manual {
                if manual_weights.insert(name.clone(), *w).is_some() {
                    return Err(invalid_config(format!("class `{name}` given twice")));
                }
            }
            SchemeConfig::Balanced { manual_weights }
        }
        SchemeName::InverseLinear => SchemeConfig::InverseLinear { k: args.k, clamp },
        SchemeName::InverseLog => SchemeConfig::InverseLog {
            q: args.q,
            log_base: args.log_base.unwrap_or(std::f64::consts::E),
            clamp,
        },
        SchemeName::EffectiveNumber => SchemeConfig::EffectiveNumber {
            beta: args.beta,
            normalize_reference: args.reference.clone(),
            count_mode: match args.count_mode {
                CountModeArg::RawCount => CountMode::RawCount,
                CountModeArg::PerImage => CountMode::PerImage,
            },
            form: if args.literal {
                EffectiveForm::Literal
            } else {
                EffectiveForm::InverseNormalized
            },
        },
    })
}

pub fn cmd_weights(args: &WeightsArgs) -> Result<WeightFile> {
    let stats_file: StatsFile = read_json(&args.stats)?;
    stats_file.check_version()?;
    let scheme = scheme_config(args)?;
    let classes = stats_file.stats.class_table()?;
    let mut file = scheme_dispatch(&scheme, Some(&stats_file.stats), &classes)?;
    file.metadata = Some(Metadata::new("weights", &scheme)?.input("stats", &args.stats)?);
    Ok(file)
}

pub fn synth_config(args: &SynthArgs) -> Result<SynthConfig> {
    let mut cfg = if args.rates.is_empty() {
        SynthConfig::geometric(args.classes, args.first_rate, args.ratio, args.seed)
    } else {
        SynthConfig::with_rates(args.rates.clone(), args.seed)
    };
    if let Some(d) = args.feature_dim {
        cfg.feature_dim = d;
    }
    if let Some(s) = args.separation {
        cfg.class_separation = s;
    }
    if let Some(n) = args.noise {
        cfg.feature_noise = n;
    }
    if let Some(b) = args.bg_per_fg {
        cfg.bg_per_fg = b;
    }
    match args.iou_range[..] {
        [] => {}
        [lo, hi] => cfg.positive_iou_range = [lo, hi],
        _ => return Err(invalid_config("--iou-range takes two values, LO,HI")),
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<SyntheticDataset> {
    let cfg = synth_config(args)?;
    let names = [("train", args.train_images), ("eval", args.eval_images)];
    let splits = generate_splits(&cfg, &names)?;
    let mut ds = SyntheticDataset::new(cfg.clone(), splits)?;
    let mut meta = Metadata::new(
        "synth",
        &json!({ "config": cfg, "train_images": args.train_images, "eval_images": args.eval_images }),
    )?
    .seed("dataset", cfg.seed);
    for (i, (name, _)) in names.iter().enumerate() {
        meta = meta.seed(name, split_seed(cfg.seed, i));
    }
    ds.manifest.metadata = Some(meta);
    Ok(ds)
}

pub fn train_settings(args: &TrainArgs) -> TrainSettings {
    TrainSettings {
        architecture: match args.arch {
            ArchArg::Linear => Architecture::Linear,
            ArchArg::Mlp => Architecture::Mlp { hidden_dim: args.hidden },
        },
        learning_rate: args.lr,
        momentum: args.momentum,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
        focal_alpha: args.focal_alpha,
        prob_floor: args.prob_floor,
        mining: MiningConfig {
            bg_per_fg: args.bg_per_fg,
            selection: match args.selection {
                SelectionArg::Hardest => Selection::Hardest,
                SelectionArg::Random => Selection::Random,
            },
        },
    }
}

fn split_files(dir: &Path, split: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{split}.scenes.json")),
        dir.join(format!("{split}.proposals.jsonl")),
    )
}

pub fn cmd_train(args: &TrainArgs) -> Result<ModelFile> {
    let settings = train_settings(args);
    if settings.batch_size == 0 {
        return Err(invalid_config("batch size must be at least 1"));
    }
    let ds = SyntheticDataset::read(&args.dataset)?;
    let split = ds.split(&args.split)?;
    let classes = &ds.manifest.classes;
    let weights = match &args.weights {
        Some(path) => {
            let file: WeightFile = read_json(path)?;
            let w = file.weight_vector()?;
            if w.classes() != classes {
                return Err(invalid_input("weight file classes do not match the dataset"));
            }
            w
        }
        None => crate::weights::uniform_weights(classes),
    };
    let (model, train_config, log) = train_on_split(split, classes, weights, &settings)?;
    let (_, proposals) = split_files(&args.dataset, &args.split);
    let mut meta = Metadata::new("train", &json!({ "split": args.split, "train": train_config }))?
        .seed("train", settings.seed)
        .input("manifest", &args.dataset.join("manifest.json"))?
        .input("proposals", &proposals)?;
    if let Some(path) = &args.weights {
        meta = meta.input("weights", path)?;
    }
    Ok(ModelFile {
        format_version: MODEL_FILE_VERSION,
        model,
        train_config,
        log,
        metadata: Some(meta),
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let cfg = EvalConfig {
        iou_threshold: args.iou,
        target_fppi: args.fppi,
        iou_inclusive: args.iou_inclusive,
    };
    cfg.validate()?;
    let mut inputs: Vec<(&str, PathBuf)> = Vec::new();

    let model = match &args.model {
        Some(path) => {
            let file: ModelFile = read_json(path)?;
            file.check_version()?;
            inputs.push(("model", path.clone()));
            Some(file.model)
        }
        None => None,
    };
    let dataset = match &args.dataset {
        Some(dir) => Some(SyntheticDataset::read(dir)?),
        None => None,
    };

    let (scenes, classes): (Vec<Scene>, ClassTable) = match (&args.labels, &dataset) {
        (Some(path), _) => {
            let parsed = parse_labels(path, args.format)?;
            inputs.push(("labels", path.clone()));
            (parsed.scenes, parsed.classes)
        }
        (None, Some(ds)) => {
            let (scenes_path, _) = split_files(args.dataset.as_deref().unwrap(), &args.split);
            inputs.push(("scenes", scenes_path));
            (ds.split(&args.split)?.scenes.clone(), ds.manifest.classes.clone())
        }
        (None, None) => return Err(invalid_config("ground truth needs --dataset or --labels")),
    };

    let detections = match (&args.detections, &model, &dataset) {
        (Some(path), _, _) => {
            inputs.push(("detections", path.clone()));
            read_detections(path, &classes)?
        }
        (None, Some(model), Some(ds)) => {
            if model.classes != classes {
                return Err(invalid_input("model classes do not match the dataset"));
            }
            let split = ds.split(&args.split)?;
            let (_, proposals_path) = split_files(args.dataset.as_deref().unwrap(), &args.split);
            inputs.push(("proposals", proposals_path));
            let probs = predict_batch(model, &split.proposals)?;
            detections_from_proposals(&split.proposals, &probs)?
        }
        _ => return Err(invalid_config("detections need --detections or --model with --dataset")),
    };

    let mut report = evaluate(&detections, &scenes, &classes, &cfg)?;
    report.name = args.name.clone();
    let mut meta = Metadata::new("eval", &json!({ "split": args.split, "eval": cfg }))?;
    for (role, path) in &inputs {
        meta = meta.input(role, path)?;
    }
    report.metadata = Some(meta);
    Ok(report)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String> {
    if !args.labels.is_empty() && args.labels.len() != args.reports.len() {
        return Err(invalid_config(format!(
            "{} labels for {} reports",
            args.labels.len(),
            args.reports.len()
        )));
    }
    let mut columns = Vec::with_capacity(args.reports.len());
    for (i, path) in args.reports.iter().enumerate() {
        let report: EvalReport = read_json(path)?;
        report.check_version()?;
        let label = match (args.labels.get(i), &report.name) {
            (Some(l), _) => l.clone(),
            (None, Some(n)) => n.clone(),
            (None, None) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("report{i}")),
        };
        columns.push((label, report));
    }
    Ok(render(&columns, args.format))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("rebalance").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn weights_flags_build_scheme() {
        let Command::Weights(a) = parse(&[
            "weights", "--stats", "s.json", "--scheme", "balanced", "--manual", "truck=5", "--manual", "bus=5", "--out",
            "w.json",
        ]) else {
            panic!()
        };
        let SchemeConfig::Balanced { manual_weights } = scheme_config(&a).unwrap() else {
            panic!()
        };
        assert_eq!(manual_weights.len(), 2);
        assert_eq!(manual_weights["bus"], 5.0);

        let Command::Weights(a) = parse(&[
            "weights", "--stats", "s.json", "--scheme", "effective-number", "--count-mode", "per-image", "--out", "w.json",
        ]) else {
            panic!()
        };
        assert_eq!(
            scheme_config(&a).unwrap(),
            SchemeConfig::EffectiveNumber {
                beta: 0.9,
                normalize_reference: None,
                count_mode: CountMode::PerImage,
                form: EffectiveForm::InverseNormalized,
            }
        );
    }

    #[test]
    fn duplicate_manual_weight_is_rejected() {
        let Command::Weights(a) = parse(&[
            "weights", "--stats", "s", "--scheme", "balanced", "--manual", "a=1", "--manual", "a=2", "--out", "w",
        ]) else {
            panic!()
        };
        assert!(matches!(scheme_config(&a), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn bad_manual_syntax_is_a_usage_error() {
        let err = Cli::try_parse_from(["rebalance", "weights", "--stats", "s", "--scheme", "balanced", "--manual", "x", "--out", "w"])
            .unwrap_err();
        assert!(err.use_stderr());
    }

    #[test]
    fn synth_defaults_match_library() {
        let Command::Synth(a) = parse(&["synth", "--out", "d"]) else { panic!() };
        assert_eq!(synth_config(&a).unwrap(), SynthConfig::geometric(7, 3.0, 1.0 / 3.0, 0));
        let Command::Synth(a) = parse(&["synth", "--out", "d", "--rates", "1,0.5", "--iou-range", "0.6,0.9"]) else {
            panic!()
        };
        let cfg = synth_config(&a).unwrap();
        assert_eq!(cfg.class_rates, vec![1.0, 0.5]);
        assert_eq!(cfg.positive_iou_range, [0.6, 0.9]);
    }

    #[test]
    fn train_defaults_match_library() {
        let Command::Train(a) = parse(&["train", "--dataset", "d", "--out", "m"]) else { panic!() };
        assert_eq!(train_settings(&a), TrainSettings::default());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Divergence { epoch: 0, batch: 0, loss: f64::NAN }), 3);
        assert_eq!(exit_code(&Error::FileNotFound("x".into())), 2);
        assert_eq!(exit_code(&Error::EmptyDataset("x".into())), 2);
        assert_eq!(exit_code(&invalid_config("x")), 1);
    }
}
