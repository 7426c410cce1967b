//! Command-line front end: train, classify, evaluate, simulate.
//!
//! Subcommands orchestrate the library modules and own nothing numeric.
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
//! Logs go to stderr, one event per line, either human-readable text or
//! JSON objects under `--log=json`; resolved defaults are echoed into the
//! run log so every artifact records how it was produced.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::calibration::{
    calibration_curve, select_rho, LabeledQuery, Objective, DEFAULT_CURVE_BINS, DEFAULT_RHO_GRID,
};
use crate::classifier::{train, Annotation, Model, DEFAULT_TOP_K};
use crate::data_io::{
    load_library, load_model, load_model_header, read_predictions, read_taxonomy, save_model,
    write_accuracy_table, write_calibration_curve, write_calibration_report, write_library,
    write_novelty_summary, FastaReader, LoadOptions, OutputFormat, PredictionWriter,
};
use crate::evaluation::{accuracy_table, novelty_summary, score_prediction};
use crate::sequence_model::KernelSpec;
use crate::synth::{holdout_split, simulate_library, SplitMode, SynthConfig};
use crate::taxonomy::{fill_missing_labels, NodeId, TaxonomicTree, TreeRecord};
use crate::{Error, Result};

const CLASSIFY_CHUNK: usize = 512;

#[derive(Debug, Parser)]
#[command(
    name = "taxurn",
    version,
    about = "Hierarchical taxonomic annotation of nucleotide sequences",
    propagate_version = true
)]
pub struct Cli {
    /// Log format on stderr.
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    pub log: LogFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model from a reference library.
    Train(TrainArgs),
    /// Annotate query sequences with a trained model.
    Classify(ClassifyArgs),
    /// Score predictions against known truth labels.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic library from the generative model.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    /// Single-nucleotide product kernel (aligned input).
    Product1,
    /// Overlapping-dinucleotide product kernel (aligned input).
    Product2,
    /// k-mer spectrum kernel (no alignment needed).
    Kmer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibrateArg {
    /// Store --rho unchanged.
    Off,
    /// Select rho on an internal holdout, then retrain on everything.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    /// |accuracy - mean probability| at the lowest rank.
    Gap,
    /// Expected calibration error at the lowest rank.
    Ece,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Reference sequences (FASTA).
    #[arg(long)]
    pub library: PathBuf,

    /// Taxonomy TSV keyed by sequence id; the header row names the ranks.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,

    /// Read taxonomy from FASTA headers formatted as `>id;tax=a,b,c`.
    #[arg(long)]
    pub embedded_tax: bool,

    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,

    /// Sequence kernel.
    #[arg(long, value_enum, default_value_t = KernelArg::Product1)]
    pub kernel: KernelArg,

    /// k-mer length, kmer kernel only (default 5).
    #[arg(long)]
    pub kappa: Option<usize>,

    /// Fixed temperature in (0, 1]; conflicts with --calibrate=auto (default 1).
    #[arg(long)]
    pub rho: Option<f64>,

    /// Temperature selection mode.
    #[arg(long, value_enum, default_value_t = CalibrateArg::Off)]
    pub calibrate: CalibrateArg,

    /// Objective minimized by --calibrate=auto.
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Gap)]
    pub calibration_objective: ObjectiveArg,

    /// Holdout fraction for --calibrate=auto.
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,

    /// Seed for the calibration holdout split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Fail on library/taxonomy join mismatches instead of skipping them.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,

    /// Query sequences (FASTA).
    #[arg(long)]
    pub queries: PathBuf,

    /// Output predictions file.
    #[arg(long)]
    pub out: PathBuf,

    /// Override the model's stored temperature.
    #[arg(long)]
    pub rho: Option<f64>,

    /// Worker threads; output is byte-identical regardless of the count.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,

    /// Alternative leaves reported per query.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub topk: usize,

    /// Output encoding.
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions file written by `classify` (TSV or JSONL).
    #[arg(long)]
    pub predictions: PathBuf,

    /// Truth taxonomy TSV keyed by query id.
    #[arg(long)]
    pub truth: PathBuf,

    /// Model the predictions came from (topology is read from its header).
    #[arg(long)]
    pub model: PathBuf,

    /// Output prefix; writes PREFIX.accuracy.tsv, PREFIX.novelty.tsv,
    /// PREFIX.curve.csv.
    #[arg(long)]
    pub out: PathBuf,

    /// Calibration-curve bins.
    #[arg(long, default_value_t = DEFAULT_CURVE_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output prefix; writes PREFIX.fasta / PREFIX.tsv, or per-part files
    /// when --split is not none.
    #[arg(long)]
    pub out: PathBuf,

    /// Number of taxonomic levels.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,

    /// Comma-separated rank names; overrides --levels.
    #[arg(long)]
    pub ranks: Option<String>,

    /// Urn strength per level, comma-separated (single value broadcasts).
    #[arg(long, default_value = "1")]
    pub alpha: String,

    /// Urn discount per level, comma-separated (single value broadcasts).
    #[arg(long, default_value = "0.25")]
    pub sigma: String,

    /// Dirichlet drift concentration per level (single value broadcasts).
    #[arg(long, default_value = "0.5")]
    pub base: String,

    /// Sequence length.
    #[arg(long, default_value_t = 200)]
    pub seq_len: usize,

    /// Number of sequences.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Holdout mode: none, random, or stratified:<level>.
    #[arg(long, default_value = "none")]
    pub split: String,

    /// Holdout fraction when --split is not none.
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,

    /// Minimum sequences a taxon keeps in training (stratified split).
    #[arg(long, default_value_t = 1)]
    pub min_keep: usize,
}

struct Logger {
    format: LogFormat,
}

impl Logger {
    fn event(&self, name: &str, fields: &[(&str, String)]) {
        match self.format {
            LogFormat::Text => {
                let mut line = format!("[taxurn] {name}");
                for (key, value) in fields {
                    line.push(' ');
                    line.push_str(key);
                    line.push('=');
                    line.push_str(value);
                }
                eprintln!("{line}");
            }
            LogFormat::Json => {
                let mut map = serde_json::Map::new();
                map.insert("event".into(), name.into());
                for (key, value) in fields {
                    map.insert((*key).into(), value.clone().into());
                }
                eprintln!("{}", serde_json::Value::Object(map));
            }
        }
    }

    fn error(&self, err: &Error) {
        let kind = match err {
            Error::Usage(_) => "usage",
            Error::Data(_) => "data",
            Error::Numeric(_) => "numeric",
            Error::Io(_) => "io",
        };
        self.event(
            "error",
            &[("kind", kind.to_string()), ("message", err.to_string())],
        );
    }
}

/// Parses arguments, dispatches, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let logger = Logger { format: cli.log };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(&args, &logger),
        Command::Classify(args) => cmd_classify(&args, &logger),
        Command::Evaluate(args) => cmd_evaluate(&args, &logger),
        Command::Simulate(args) => cmd_simulate(&args, &logger),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            logger.error(&err);
            err.exit_code()
        }
    }
}

fn fmt_grid(grid: &[f64]) -> String {
    grid.iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn resolve_kernel(args: &TrainArgs, first_seq_len: usize) -> Result<KernelSpec> {
    match args.kernel {
        KernelArg::Kmer => KernelSpec::kmer(args.kappa.unwrap_or(5)),
        aligned => {
            if args.kappa.is_some() {
                return Err(Error::Usage(
                    "--kappa only applies to --kernel=kmer".into(),
                ));
            }
            if first_seq_len == 0 {
                return Err(Error::Data("first library sequence is empty".into()));
            }
            match aligned {
                KernelArg::Product1 => KernelSpec::product1(first_seq_len),
                KernelArg::Product2 => KernelSpec::product2(first_seq_len),
                KernelArg::Kmer => unreachable!(),
            }
        }
    }
}

fn check_rho(rho: f64) -> Result<f64> {
    if rho.is_finite() && rho > 0.0 && rho <= 1.0 {
        Ok(rho)
    } else {
        Err(Error::Usage(format!("--rho must be in (0, 1], got {rho}")))
    }
}

fn build_tree(
    rank_names: Vec<String>,
    records: &[crate::data_io::LibraryRecord],
) -> Result<(TaxonomicTree, Vec<NodeId>)> {
    let tree_records: Vec<TreeRecord> = records
        .iter()
        .map(|r| TreeRecord {
            id: r.id.clone(),
            labels: r.labels.clone(),
        })
        .collect();
    TaxonomicTree::build(rank_names, &tree_records)
}

fn train_on(
    rank_names: Vec<String>,
    records: &[crate::data_io::LibraryRecord],
    spec: KernelSpec,
) -> Result<Model> {
    let (tree, assignments) = build_tree(rank_names, records)?;
    let pairs: Vec<(NodeId, &str)> = assignments
        .iter()
        .zip(records)
        .map(|(&leaf, r)| (leaf, r.sequence.as_str()))
        .collect();
    train(tree, spec, pairs)
}

fn log_level_fits(model: &Model, logger: &Logger) {
    for (i, (params, &degenerate)) in model
        .params
        .iter()
        .zip(&model.degenerate_levels)
        .enumerate()
    {
        logger.event(
            "level_fit",
            &[
                ("level", (i + 1).to_string()),
                ("rank", model.tree.rank_names()[i].clone()),
                ("alpha", params.alpha.to_string()),
                ("sigma", params.sigma.to_string()),
                ("degenerate", degenerate.to_string()),
            ],
        );
    }
}

fn cmd_train(args: &TrainArgs, logger: &Logger) -> Result<()> {
    let started = Instant::now();
    if args.calibrate == CalibrateArg::Auto && args.rho.is_some() {
        return Err(Error::Usage(
            "--rho conflicts with --calibrate=auto (the grid picks it)".into(),
        ));
    }
    let fixed_rho = check_rho(args.rho.unwrap_or(1.0))?;
    if !(args.holdout > 0.0 && args.holdout < 1.0) {
        return Err(Error::Usage(format!(
            "--holdout must be in (0, 1), got {}",
            args.holdout
        )));
    }

    let opts = LoadOptions {
        embedded_tax: args.embedded_tax,
        strict: args.strict,
    };
    let lib = load_library(&args.library, args.taxonomy.as_deref(), &opts)?;
    if !lib.skipped.is_empty() {
        logger.event(
            "join_skipped",
            &[
                ("count", lib.skipped.len().to_string()),
                ("first", lib.skipped[0].clone()),
            ],
        );
    }
    if lib.records.is_empty() {
        return Err(Error::Data("no library records after the join".into()));
    }
    let spec = resolve_kernel(args, lib.records[0].sequence.len())?;
    logger.event(
        "config",
        &[
            ("subcommand", "train".into()),
            ("library", args.library.display().to_string()),
            ("records", lib.records.len().to_string()),
            ("ranks", lib.rank_names.join(",")),
            ("kernel", format!("{:?}", spec.kind).to_lowercase()),
            ("kappa", spec.kappa.to_string()),
            (
                "rho",
                match args.calibrate {
                    CalibrateArg::Off => fixed_rho.to_string(),
                    CalibrateArg::Auto => "auto".into(),
                },
            ),
            ("rho_grid", fmt_grid(&DEFAULT_RHO_GRID)),
            ("holdout", args.holdout.to_string()),
            ("seed", args.seed.to_string()),
            ("strict", args.strict.to_string()),
        ],
    );

    let model = match args.calibrate {
        CalibrateArg::Off => {
            let mut model = train_on(lib.rank_names.clone(), &lib.records, spec)?;
            model.rho = fixed_rho;
            model
        }
        CalibrateArg::Auto => {
            let (train_side, holdout_side) =
                holdout_split(&lib.records, SplitMode::Random, args.holdout, args.seed)?;
            if train_side.is_empty() || holdout_side.is_empty() {
                return Err(Error::Data(format!(
                    "library too small to calibrate: {} train / {} holdout",
                    train_side.len(),
                    holdout_side.len()
                )));
            }
            logger.event(
                "calibration_split",
                &[
                    ("train", train_side.len().to_string()),
                    ("holdout", holdout_side.len().to_string()),
                ],
            );
            let pilot = train_on(lib.rank_names.clone(), &train_side, spec)?;
            let labeled: Vec<LabeledQuery> = holdout_side
                .iter()
                .map(|r| LabeledQuery {
                    id: &r.id,
                    sequence: &r.sequence,
                    truth: &r.labels,
                })
                .collect();
            let objective = match args.calibration_objective {
                ObjectiveArg::Gap => Objective::Gap,
                ObjectiveArg::Ece => Objective::Ece,
            };
            let report = select_rho(
                &pilot,
                &labeled,
                &DEFAULT_RHO_GRID,
                objective,
                DEFAULT_CURVE_BINS,
            )?;
            for point in &report.grid {
                logger.event(
                    "calibration_point",
                    &[
                        ("rho", point.rho.to_string()),
                        ("accuracy_pct", format!("{:.3}", point.accuracy_pct)),
                        ("mean_probability", format!("{:.5}", point.mean_probability)),
                        ("gap", format!("{:.5}", point.gap)),
                        ("ece", format!("{:.5}", point.ece)),
                    ],
                );
            }
            logger.event(
                "calibration_chosen",
                &[("rho", report.chosen_rho.to_string())],
            );
            let report_path = suffixed(&args.model, ".calibration.tsv");
            let curve_path = suffixed(&args.model, ".curve.csv");
            write_calibration_report(&report, &report_path)?;
            write_calibration_curve(&report.curve, &curve_path)?;
            logger.event(
                "calibration_written",
                &[
                    ("report", report_path.display().to_string()),
                    ("curve", curve_path.display().to_string()),
                ],
            );
            let mut model = train_on(lib.rank_names.clone(), &lib.records, spec)?;
            model.rho = report.chosen_rho;
            model
        }
    };

    log_level_fits(&model, logger);
    save_model(&model, &args.model)?;
    logger.event(
        "model_written",
        &[
            ("path", args.model.display().to_string()),
            ("leaves", model.tree.leaves().len().to_string()),
            ("candidates", model.num_candidates().to_string()),
            ("rho", model.rho.to_string()),
            ("elapsed_s", format!("{:.2}", started.elapsed().as_secs_f64())),
        ],
    );
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_classify(args: &ClassifyArgs, logger: &Logger) -> Result<()> {
    let started = Instant::now();
    if args.threads == 0 {
        return Err(Error::Usage("--threads must be at least 1".into()));
    }
    if args.topk == 0 {
        return Err(Error::Usage("--topk must be at least 1".into()));
    }
    if let Some(rho) = args.rho {
        check_rho(rho)?;
    }
    let mut model = load_model(&args.model)?;
    if let Some(rho) = args.rho {
        model.rho = rho;
    }
    logger.event(
        "config",
        &[
            ("subcommand", "classify".into()),
            ("model", args.model.display().to_string()),
            ("kernel", format!("{:?}", model.kernel().kind).to_lowercase()),
            ("candidates", model.num_candidates().to_string()),
            ("rho", model.rho.to_string()),
            ("threads", args.threads.to_string()),
            ("topk", args.topk.to_string()),
        ],
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| Error::Data(format!("cannot build thread pool: {e}")))?;
    let format = match args.format {
        FormatArg::Tsv => OutputFormat::Tsv,
        FormatArg::Jsonl => OutputFormat::Jsonl,
    };
    let out = BufWriter::new(File::create(&args.out).map_err(|e| {
        Error::Data(format!("cannot create {}: {e}", args.out.display()))
    })?);
    let mut writer = PredictionWriter::new(out, format, model.tree.rank_names().to_vec());

    let mut batch: Vec<(String, String)> = Vec::with_capacity(CLASSIFY_CHUNK);
    let mut total = 0usize;
    let reader = FastaReader::open(&args.queries)?;
    for record in reader {
        batch.push(record?);
        if batch.len() == CLASSIFY_CHUNK {
            total += flush_batch(&pool, &model, &mut batch, args.topk, &mut writer)?;
        }
    }
    total += flush_batch(&pool, &model, &mut batch, args.topk, &mut writer)?;
    writer.finish()?;
    logger.event(
        "predictions_written",
        &[
            ("path", args.out.display().to_string()),
            ("queries", total.to_string()),
            ("elapsed_s", format!("{:.2}", started.elapsed().as_secs_f64())),
        ],
    );
    Ok(())
}

fn flush_batch<W: std::io::Write>(
    pool: &rayon::ThreadPool,
    model: &Model,
    batch: &mut Vec<(String, String)>,
    top_k: usize,
    writer: &mut PredictionWriter<W>,
) -> Result<usize> {
    if batch.is_empty() {
        return Ok(0);
    }
    let annotations: Vec<Annotation> = pool.install(|| {
        batch
            .par_iter()
            .map(|(id, seq)| {
                model
                    .classify_with(id, seq, model.rho, top_k)
                    .map(|(_, annotation)| annotation)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for annotation in &annotations {
        writer.write(annotation)?;
    }
    let n = batch.len();
    batch.clear();
    Ok(n)
}

fn cmd_evaluate(args: &EvaluateArgs, logger: &Logger) -> Result<()> {
    if args.bins == 0 {
        return Err(Error::Usage("--bins must be at least 1".into()));
    }
    let header = load_model_header(&args.model)?;
    let tree = header.tree()?;
    let annotations = read_predictions(&args.predictions)?;
    if annotations.is_empty() {
        return Err(Error::Data("predictions file has no rows".into()));
    }
    let (truth_ranks, truth_rows) = read_taxonomy(&args.truth)?;
    if truth_ranks.len() != tree.rank_names().len() {
        return Err(Error::Data(format!(
            "truth has {} ranks, model has {}",
            truth_ranks.len(),
            tree.rank_names().len()
        )));
    }
    let truth_by_id: std::collections::HashMap<String, Vec<String>> = truth_rows
        .into_iter()
        .map(|(id, mut labels)| {
            fill_missing_labels(&mut labels);
            (id, labels)
        })
        .collect();

    let mut scored = Vec::with_capacity(annotations.len());
    for annotation in &annotations {
        let truth = truth_by_id.get(&annotation.id).ok_or_else(|| {
            Error::Data(format!("no truth row for query '{}'", annotation.id))
        })?;
        scored.push(score_prediction(annotation, truth, &tree)?);
    }

    let rows = accuracy_table(&scored, tree.rank_names())?;
    let novelty = novelty_summary(&scored);
    let lowest = tree.rank_names().len() - 1;
    let outcomes: Vec<(f64, bool)> = scored
        .iter()
        .map(|s| (s.rank_probability[lowest], s.rank_correct[lowest]))
        .collect();
    let curve = calibration_curve(&outcomes, args.bins);

    let accuracy_path = suffixed(&args.out, ".accuracy.tsv");
    let novelty_path = suffixed(&args.out, ".novelty.tsv");
    let curve_path = suffixed(&args.out, ".curve.csv");
    write_accuracy_table(&rows, &accuracy_path)?;
    write_novelty_summary(&novelty, &novelty_path)?;
    write_calibration_curve(&curve, &curve_path)?;

    let lowest_all = rows
        .iter()
        .find(|r| {
            r.rank == tree.rank_names()[lowest] && r.group == crate::evaluation::Group::All
        })
        .expect("lowest-rank All row");
    logger.event(
        "evaluated",
        &[
            ("queries", scored.len().to_string()),
            (
                "lowest_rank_accuracy_pct",
                format!("{:.3}", lowest_all.accuracy_pct),
            ),
            (
                "lowest_rank_mean_probability",
                format!("{:.5}", lowest_all.mean_probability),
            ),
            ("truly_novel", novelty.truly_novel.to_string()),
            ("recognized_pct", format!("{:.3}", novelty.recognized_pct)),
            ("accuracy_table", accuracy_path.display().to_string()),
            ("novelty_table", novelty_path.display().to_string()),
            ("curve", curve_path.display().to_string()),
        ],
    );
    Ok(())
}

fn parse_level_list(text: &str, levels: usize, flag: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("{flag}: cannot parse '{part}' as a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; levels]),
        n if n == levels => Ok(values),
        n => Err(Error::Usage(format!(
            "{flag} has {n} values for {levels} levels (give 1 or {levels})"
        ))),
    }
}

fn parse_split(text: &str, levels: usize, min_keep: usize) -> Result<Option<SplitMode>> {
    if text == "none" {
        return Ok(None);
    }
    if text == "random" {
        return Ok(Some(SplitMode::Random));
    }
    if let Some(level_text) = text.strip_prefix("stratified:") {
        let level: usize = level_text.parse().map_err(|_| {
            Error::Usage(format!("--split stratified:<level> needs an integer, got '{level_text}'"))
        })?;
        if level == 0 || level > levels {
            return Err(Error::Usage(format!(
                "--split stratified level must be in 1..={levels}, got {level}"
            )));
        }
        return Ok(Some(SplitMode::StratifiedByRank { level, min_keep }));
    }
    Err(Error::Usage(format!(
        "--split must be none, random, or stratified:<level>, got '{text}'"
    )))
}

fn cmd_simulate(args: &SimulateArgs, logger: &Logger) -> Result<()> {
    let rank_names: Vec<String> = match &args.ranks {
        Some(text) => text
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => (1..=args.levels).map(|l| format!("level{l}")).collect(),
    };
    if rank_names.is_empty() {
        return Err(Error::Usage("need at least one rank".into()));
    }
    let levels = rank_names.len();
    let alpha = parse_level_list(&args.alpha, levels, "--alpha")?;
    let sigma = parse_level_list(&args.sigma, levels, "--sigma")?;
    let base = parse_level_list(&args.base, levels, "--base")?;
    let params = alpha
        .iter()
        .zip(&sigma)
        .map(|(&a, &s)| crate::species_prior::LevelParams::new(a, s))
        .collect::<Result<Vec<_>>>()?;
    let split = parse_split(&args.split, levels, args.min_keep)?;

    logger.event(
        "config",
        &[
            ("subcommand", "simulate".into()),
            ("ranks", rank_names.join(",")),
            ("alpha", fmt_grid(&alpha)),
            ("sigma", fmt_grid(&sigma)),
            ("base", fmt_grid(&base)),
            ("seq_len", args.seq_len.to_string()),
            ("n", args.n.to_string()),
            ("seed", args.seed.to_string()),
            ("split", args.split.clone()),
            ("fraction", args.fraction.to_string()),
        ],
    );

    let config = SynthConfig {
        rank_names: rank_names.clone(),
        params,
        seq_len: args.seq_len,
        base,
        num_sequences: args.n,
        seed: args.seed,
    };
    let library = simulate_library(&config)?;
    logger.event(
        "simulated",
        &[
            ("sequences", library.records.len().to_string()),
            ("leaves", library.leaf_theta.len().to_string()),
        ],
    );

    match split {
        None => {
            let fasta = suffixed(&args.out, ".fasta");
            let tsv = suffixed(&args.out, ".tsv");
            write_library(&fasta, &tsv, &rank_names, &library.records)?;
            logger.event(
                "library_written",
                &[
                    ("fasta", fasta.display().to_string()),
                    ("taxonomy", tsv.display().to_string()),
                ],
            );
        }
        Some(mode) => {
            let (train_side, test_side) =
                holdout_split(&library.records, mode, args.fraction, args.seed)?;
            let train_fasta = suffixed(&args.out, "_train.fasta");
            let train_tsv = suffixed(&args.out, "_train.tsv");
            let test_fasta = suffixed(&args.out, "_test.fasta");
            let test_tsv = suffixed(&args.out, "_test.tsv");
            write_library(&train_fasta, &train_tsv, &rank_names, &train_side)?;
            write_library(&test_fasta, &test_tsv, &rank_names, &test_side)?;
            logger.event(
                "split_written",
                &[
                    ("train", train_side.len().to_string()),
                    ("test", test_side.len().to_string()),
                    ("train_fasta", train_fasta.display().to_string()),
                    ("test_fasta", test_fasta.display().to_string()),
                ],
            );
        }
    }
    Ok(())
}
