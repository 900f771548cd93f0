use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use buglocate::codeast::{extract_path_contexts, parse_ast_document, CodeVectorizer, ExtractionLimits};
use buglocate::dataset::{label_manifest, load_manifest, summarize_manifest};
use buglocate::evalkit::{
    chronological_split, rank_instances, Chronological, MapVariant, MetricsReport, QueryResult, SplitMode, DEFAULT_KS,
};
use buglocate::experiment::{
    best_count_tables, dataset_instances, run_experiment_matrix, train_combination, ExperimentConfig, MatrixResult,
    MethodEncoder, Strategy,
};
use buglocate::neural::Checkpoint;
use buglocate::textprep::{load_stopwords, preprocess_report, PreprocessConfig};
use buglocate::wordvec::{embed_report, load_embeddings, max_pool, PrecomputedMatrix, VectorFormat};
use buglocate::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "buglocate", version, about = "Rank source methods against bug reports")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Drop bugs whose labeling raised an exclusion warning.
    #[arg(long, global = true)]
    strict_dataset: bool,
    #[arg(long, global = true, value_name = "standard|paper-literal")]
    map_variant: Option<MapVariant>,
    /// -v for info, -vv for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Print the preprocessed tokens of a report.
    Preprocess {
        #[command(flatten)]
        input: TextInput,
        /// Stopword file replacing the bundled list.
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Max-pooled report vector as JSON.
    EmbedReport {
        #[command(flatten)]
        input: TextInput,
        /// Word-vector file.
        #[arg(long, required_unless_present = "precomputed")]
        vectors: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "headered")]
        format: FormatArg,
        /// Token matrix from a contextual model, pooled instead of text.
        #[arg(long, conflicts_with = "vectors")]
        precomputed: Option<PathBuf>,
    },
    /// Hashed method vectors for an AST document, as JSON keyed by method.
    EmbedMethod {
        #[arg(long)]
        ast: PathBuf,
        /// Only this method.
        #[arg(long)]
        method: Option<String>,
    },
    /// Buggy-method labels and warnings for a manifest.
    Label {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Chronological train/valid/test bug lists for a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train one combination and save a checkpoint.
    Train {
        #[command(flatten)]
        combo: Combination,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Rank the test bugs of a dataset with a saved checkpoint.
    Rank {
        #[command(flatten)]
        combo: Combination,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Rank every bug, not only the test split.
        #[arg(long)]
        all: bool,
    },
    /// Metrics for a rankings file written by `rank`.
    Evaluate {
        #[arg(long)]
        rankings: PathBuf,
        /// Also write per-query metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run every configured embedding × strategy combination.
    Matrix,
    /// Best-count tables from matrix results.
    Tables {
        /// Matrix files; defaults to `<out>/<dataset>/matrix.json` for each
        /// configured dataset.
        matrix: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct TextInput {
    /// Report text; read from --file or stdin when absent.
    text: Option<String>,
    #[arg(long, conflicts_with = "text")]
    file: Option<PathBuf>,
}

impl TextInput {
    fn read(&self) -> Result<String> {
        match (&self.text, &self.file) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(p)) => fs::read_to_string(p).map_err(|e| io_error(p, e)),
            (None, None) => {
                let mut s = String::new();
                std::io::stdin()
                    .read_to_string(&mut s)
                    .map_err(|e| io_error(Path::new("<stdin>"), e))?;
                Ok(s)
            }
        }
    }
}

#[derive(Args)]
struct Combination {
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    embedding: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Headered,
    Headerless,
}

impl From<FormatArg> for VectorFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Headered => VectorFormat::Headered,
            FormatArg::Headerless => VectorFormat::Headerless,
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// 2 for configuration problems, 3 for bad input data, 4 for anything that
/// went wrong while running.
fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) => 2,
        Error::Parse { .. }
        | Error::DuplicateId { .. }
        | Error::DanglingReference(_)
        | Error::InvariantViolation { .. }
        | Error::TooFewBugs(_)
        | Error::EmptyFile(_)
        | Error::SingleClass(_)
        | Error::DimensionMismatch { .. }
        | Error::Io { .. } => 3,
        _ => 4,
    }
}

fn load_config(global: &Global) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &global.config else {
        return Ok(None);
    };
    // anything wrong with the config file itself is a configuration error
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    if let Some(seed) = global.seed {
        cfg.rng_seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.output_dir = out.clone();
    }
    if global.strict_dataset {
        cfg.strict_dataset = true;
    }
    if let Some(v) = global.map_variant {
        cfg.map_variant = v;
    }
    Ok(Some(cfg))
}

fn require_config(cfg: Option<ExperimentConfig>, command: &str) -> Result<ExperimentConfig> {
    cfg.ok_or_else(|| Error::Config(format!("`{command}` needs --config")))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

#[derive(Clone)]
struct BugTime {
    bug_id: String,
    time: i64,
}

impl Chronological for BugTime {
    fn bug_id(&self) -> &str {
        &self.bug_id
    }
    fn report_time(&self) -> i64 {
        self.time
    }
}

#[derive(Serialize)]
struct SplitListing {
    train: Vec<String>,
    valid: Vec<String>,
    test: Vec<String>,
    instances: [usize; 3],
}

fn bug_list(items: &[BugTime]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items {
        if out.last() != Some(&i.bug_id) {
            out.push(i.bug_id.clone());
        }
    }
    out
}

/// Exit status on success paths; errors map through [`exit_code`].
fn run(cli: Cli) -> Result<u8> {
    let cfg = load_config(&cli.global)?;
    let strict = cli.global.strict_dataset || cfg.as_ref().is_some_and(|c| c.strict_dataset);
    let map_variant = cli
        .global
        .map_variant
        .or(cfg.as_ref().map(|c| c.map_variant))
        .unwrap_or_default();

    match cli.command {
        Command::Preprocess { input, stopwords } => {
            let pre = match (&stopwords, &cfg) {
                (Some(path), _) => PreprocessConfig::with_stopwords(load_stopwords(path)?)?,
                (None, Some(c)) => c.preprocess_config()?,
                (None, None) => PreprocessConfig::default(),
            };
            println!("{}", preprocess_report(&input.read()?, &pre).join(" "));
        }
        Command::EmbedReport {
            input,
            vectors,
            format,
            precomputed,
        } => {
            let pooled = match (precomputed, vectors) {
                (Some(path), _) => max_pool(&PrecomputedMatrix::load(&path)?.to_matrix()),
                (None, Some(path)) => {
                    let store = load_embeddings(&path, format.into())?;
                    let pre = cfg
                        .as_ref()
                        .map_or(Ok(PreprocessConfig::default()), |c| c.preprocess_config())?;
                    embed_report(&store, &input.read()?, &pre)
                }
                (None, None) => return Err(Error::Config("give --vectors or --precomputed".into())),
            };
            print_json(&pooled);
        }
        Command::EmbedMethod { ast, method } => {
            let doc = parse_ast_document(&ast)?;
            let limits = cfg.as_ref().map_or(ExtractionLimits::default(), |c| c.extraction);
            let seed = match cfg.as_ref().map(|c| &c.method_encoder) {
                Some(MethodEncoder::Hashed { seed }) => cli.global.seed.unwrap_or(*seed),
                _ => cli.global.seed.unwrap_or(0),
            };
            let vectorizer = CodeVectorizer::Hashed { seed };
            let mut out = BTreeMap::new();
            for (id, node) in &doc {
                if method.as_ref().is_some_and(|m| m != id) {
                    continue;
                }
                out.insert(id, vectorizer.embed_method(&extract_path_contexts(node, &limits)));
            }
            if let Some(m) = &method {
                if out.is_empty() {
                    return Err(Error::DanglingReference(format!(
                        "method `{m}` not in {}",
                        ast.display()
                    )));
                }
            }
            print_json(&out);
        }
        Command::Label { manifest } => {
            let manifest = load_manifest(&manifest)?;
            let stats = summarize_manifest(&manifest);
            log::info!(
                "{} bugs, {} methods and {} buggy methods per bug",
                stats.bug_count,
                stats.mean_methods,
                stats.mean_buggy_methods
            );
            print_json(&label_manifest(&manifest, strict));
        }
        Command::Split { manifest } => {
            let manifest = load_manifest(&manifest)?;
            let labels = label_manifest(&manifest, strict);
            let mut items = Vec::new();
            for bug in &manifest.bugs {
                if labels.dropped.contains(&bug.bug_id) {
                    continue;
                }
                for _ in manifest.methods(&bug.bug_id) {
                    items.push(BugTime {
                        bug_id: bug.bug_id.clone(),
                        time: bug.report_time,
                    });
                }
            }
            let mode = cfg.as_ref().map_or(SplitMode::default(), |c| c.split_mode);
            let s = chronological_split(&items, mode)?;
            print_json(&SplitListing {
                train: bug_list(&s.train),
                valid: bug_list(&s.valid),
                test: bug_list(&s.test),
                instances: [s.train.len(), s.valid.len(), s.test.len()],
            });
        }
        Command::Train {
            combo,
            strategy,
            checkpoint,
        } => {
            let cfg = require_config(cfg, "train")?;
            let (instances, joint) = dataset_instances(&cfg, &combo.dataset, &combo.embedding)?;
            if joint.is_some() {
                return Err(Error::Config(
                    "joint encoder training is only available through `matrix`; checkpoints hold the classifier alone"
                        .into(),
                ));
            }
            let trained = train_combination(&instances, strategy, &cfg, None)?;
            let ckpt = Checkpoint::from_network(
                &trained.network,
                Some(trained.loss),
                Some(buglocate::neural::TrainConfig {
                    rng_seed: cfg.rng_seed,
                    ..cfg.train_config.clone()
                }),
            );
            ckpt.save(&checkpoint)?;
            print_json(&serde_json::json!({
                "checkpoint": checkpoint,
                "best_epoch": trained.best_epoch,
                "history": trained.history,
            }));
        }
        Command::Rank { combo, checkpoint, all } => {
            let cfg = require_config(cfg, "rank")?;
            let net = Checkpoint::load(&checkpoint)?.to_network()?;
            let (instances, joint) = dataset_instances(&cfg, &combo.dataset, &combo.embedding)?;
            if joint.is_some() {
                return Err(Error::Config("`rank` needs a frozen method encoder".into()));
            }
            let targets = if all {
                instances
            } else {
                chronological_split(&instances, cfg.split_mode)?.test
            };
            print_json(&rank_instances(&net, &targets)?);
        }
        Command::Evaluate { rankings, csv } => {
            let text = fs::read_to_string(&rankings).map_err(|e| io_error(&rankings, e))?;
            let results: Vec<QueryResult> = serde_json::from_str(&text).map_err(|e| Error::Parse {
                location: rankings.display().to_string(),
                message: e.to_string(),
            })?;
            let report = MetricsReport::compute(&results, map_variant, &DEFAULT_KS);
            if let Some(path) = csv {
                fs::write(&path, report.to_csv()).map_err(|e| io_error(&path, e))?;
            }
            println!("{}", report.to_json());
        }
        Command::Matrix => {
            let cfg = require_config(cfg, "matrix")?;
            let results = run_experiment_matrix(&cfg)?;
            let mut ok = 0;
            for m in &results {
                for e in &m.entries {
                    match &e.report {
                        Some(r) => {
                            ok += 1;
                            println!(
                                "{}\t{}\t{}\tMAP {:.4}\tMRR {:.4}\tAcc@1 {:.4}",
                                m.dataset,
                                e.embedding,
                                e.strategy,
                                r.map_value,
                                r.mrr_value,
                                r.accuracy(1).unwrap_or(0.0)
                            );
                        }
                        None => println!(
                            "{}\t{}\t{}\tfailed: {}",
                            m.dataset,
                            e.embedding,
                            e.strategy,
                            e.error.as_deref().unwrap_or("")
                        ),
                    }
                }
            }
            if ok == 0 {
                eprintln!("error: every combination failed");
                return Ok(4);
            }
        }
        Command::Tables { matrix } => {
            let (paths, out_dir) = match (&cfg, matrix.is_empty()) {
                (_, false) => (
                    matrix,
                    cli.global.out.clone().or(cfg.as_ref().map(|c| c.output_dir.clone())),
                ),
                (Some(c), true) => (
                    c.datasets
                        .iter()
                        .map(|d| c.output_dir.join(&d.name).join("matrix.json"))
                        .collect(),
                    Some(c.output_dir.clone()),
                ),
                (None, true) => return Err(Error::Config("give matrix files or --config".into())),
            };
            let matrices = paths
                .iter()
                .map(|p| MatrixResult::load(p))
                .collect::<Result<Vec<_>>>()?;
            let tables = best_count_tables(&matrices)?;
            let text = tables.to_text();
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
                let txt = dir.join("tables.txt");
                fs::write(&txt, &text).map_err(|e| io_error(&txt, e))?;
                let csv = dir.join("tables.csv");
                fs::write(&csv, tables.to_csv()).map_err(|e| io_error(&csv, e))?;
            }
            print!("{text}");
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
