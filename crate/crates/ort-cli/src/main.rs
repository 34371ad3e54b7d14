//! `ort` — ontology-guided reverse-thinking question answering over a
//! knowledge graph, from the command line.
//!
//! Configuration precedence: command-line flags beat the manifest named by
//! `--config` (or, failing that, the `ORT_CONFIG` environment variable),
//! which beats the built-in defaults. Every failure prints one
//! machine-greppable line (`error[<class>]: ...`) on stderr and exits with
//! the class code: 2 config, 3 data, 4 gateway, 5 empty path set.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ort_core::config::{resolve_config_path, BackendKind, Mode, Overrides, RunConfig};

/// Write to stdout, exiting quietly when the reader has gone away — piping
/// into `head` or `grep -q` must not panic.
fn emit(args: std::fmt::Arguments<'_>) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed printing to stdout: {e}");
    }
}

macro_rules! out {
    ($($t:tt)*) => { emit(format_args!($($t)*)) };
}

macro_rules! outln {
    () => { emit(format_args!("\n")) };
    ($($t:tt)*) => { emit(format_args!("{}\n", format_args!($($t)*))) };
}
use ort_core::error::{EvalError, KgError, PipelineError, ReasonError};
use ort_core::eval::{evaluate, load_dataset, QAItem, RunMetadata};
use ort_core::kg::KgBuilder;
use ort_core::ontology::{build_ontology_from_store, export_ontology};
use ort_core::pipeline::{build_pipeline, load_store};

#[derive(Parser)]
#[command(name = "ort", version, about = "Knowledge-graph question answering driven by reverse label reasoning")]
struct Cli {
    /// Config manifest (TOML); falls back to $ORT_CONFIG, then defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Reverse-tree depth cap (labels per path).
    #[arg(long, global = true)]
    max_pop: Option<usize>,

    /// Per-level sampling cap during answer mining.
    #[arg(long, global = true)]
    top_k: Option<usize>,

    /// Base RNG seed for mining.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// full | no_llm_filter | trace_forward | no_rules.
    #[arg(long, global = true)]
    mode: Option<Mode>,

    /// mock | http.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,

    /// Fail on malformed triple lines instead of skipping them.
    #[arg(
        long,
        global = true,
        num_args = 0..=1,
        require_equals = true,
        default_missing_value = "true",
        value_name = "BOOL"
    )]
    strict_parse: Option<bool>,

    /// Triple dump (TSV) to answer against.
    #[arg(long, global = true, value_name = "FILE")]
    kg: Option<PathBuf>,

    /// Prebuilt index cache (overrides --kg).
    #[arg(long, global = true, value_name = "FILE")]
    index: Option<PathBuf>,

    /// Question dataset (JSONL) for eval and stats.
    #[arg(long, global = true, value_name = "FILE")]
    dataset: Option<PathBuf>,

    /// Directory of prompt template overrides.
    #[arg(long, global = true, value_name = "DIR")]
    prompt_dir: Option<PathBuf>,

    /// Directory of recorded mock responses.
    #[arg(long, global = true, value_name = "DIR")]
    fixtures: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a triple dump and write the index cache plus an ontology export.
    BuildIndex {
        /// Triple dump to ingest (TSV: subject, relation, object).
        kg: PathBuf,
        /// Where to write the index cache.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Where to write the ontology export (default: <out>.ontology.tsv).
        #[arg(long, value_name = "FILE")]
        ontology: Option<PathBuf>,
    },
    /// Answer one question; prints the case text and the record JSON.
    Ask { question: String },
    /// Run the whole dataset and write JSON + text reports.
    Eval {
        /// Directory for report.json and report.txt.
        #[arg(long, default_value = "eval-out", value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Show candidate vs. selected label paths for one question.
    InspectPaths { question: String },
    /// Graph counts, plus a question hop histogram when a dataset is set.
    Stats,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            max_pop: self.max_pop,
            top_k: self.top_k,
            seed: self.seed,
            mode: self.mode,
            backend: self.backend,
            strict_parse: self.strict_parse,
            kg_path: self.kg.clone(),
            index_path: self.index.clone(),
            dataset_path: self.dataset.clone(),
            prompt_dir: self.prompt_dir.clone(),
            fixtures_dir: self.fixtures.clone(),
        }
    }
}

fn error_class(e: &PipelineError) -> (u8, &'static str) {
    match e {
        PipelineError::Config(_) => (2, "config"),
        PipelineError::Kg(_) | PipelineError::Eval(_) => (3, "data"),
        PipelineError::Reason(ReasonError::EmptyPathSet { .. }) => (5, "empty-path"),
        PipelineError::Reason(ReasonError::UnknownLabel { .. }) => (3, "data"),
        PipelineError::Gateway(_) => (4, "gateway"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, class) = error_class(&e);
            // One line, whatever the underlying error formats like.
            let message = e.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error[{class}]: {message}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let env_config = std::env::var_os("ORT_CONFIG").map(PathBuf::from);
    let path = resolve_config_path(cli.config.clone(), env_config);
    let mut config = RunConfig::load(path.as_deref())?;
    config.apply(&cli.overrides());
    config.validate()?;

    match cli.command {
        Command::BuildIndex { kg, out, ontology } => cmd_build_index(&config, kg, out, ontology),
        Command::Ask { question } => cmd_ask(config, &question),
        Command::Eval { out_dir } => cmd_eval(config, out_dir),
        Command::InspectPaths { question } => cmd_inspect_paths(config, &question),
        Command::Stats => cmd_stats(&config),
    }
}

fn cmd_build_index(
    config: &RunConfig,
    kg: PathBuf,
    out: PathBuf,
    ontology: Option<PathBuf>,
) -> Result<(), PipelineError> {
    let mut builder = KgBuilder::new(config.strict_parse);
    let file = File::open(&kg).map_err(KgError::from)?;
    builder.read_from(BufReader::new(file))?;
    let store = builder.finish();
    store.save_index(&out)?;

    let ontology_path = ontology.unwrap_or_else(|| {
        let mut name = out.as_os_str().to_owned();
        name.push(".ontology.tsv");
        PathBuf::from(name)
    });
    let abstract_triples = build_ontology_from_store(&store);
    let writer = BufWriter::new(File::create(&ontology_path).map_err(KgError::from)?);
    export_ontology(&abstract_triples, writer).map_err(KgError::from)?;

    let stats = store.stats();
    outln!("triples {}", stats.triples);
    outln!("entities {}", stats.entities);
    outln!("relations {}", stats.relations);
    outln!("labels {}", stats.labels);
    outln!("index written to {}", out.display());
    outln!("ontology written to {}", ontology_path.display());
    Ok(())
}

fn cmd_ask(config: RunConfig, question: &str) -> Result<(), PipelineError> {
    let pipeline = build_pipeline(config)?;
    let record = pipeline.ask(question)?;
    out!("{}", record.render_case());
    outln!();
    out!("{}", record.to_json());
    Ok(())
}

fn cmd_eval(config: RunConfig, out_dir: PathBuf) -> Result<(), PipelineError> {
    let Some(dataset) = config.dataset_path.clone() else {
        return Err(ort_core::error::ConfigError::BadValue {
            field: "dataset_path".to_owned(),
            reason: "eval needs a dataset (--dataset or dataset_path)".to_owned(),
        }
        .into());
    };
    let file = File::open(&dataset).map_err(EvalError::from)?;
    let items = load_dataset(BufReader::new(file))?;
    let pipeline = build_pipeline(config)?;
    let metadata = RunMetadata {
        mode: pipeline.config().mode.to_string(),
        seed: pipeline.config().seed,
        max_pop: pipeline.config().max_pop,
        top_k: pipeline.config().top_k,
        model: pipeline.model_id().to_owned(),
    };
    let report = evaluate(&items, metadata, |item: &QAItem| {
        pipeline.ask(&item.question).map(|r| r.final_answer)
    });

    std::fs::create_dir_all(&out_dir).map_err(EvalError::from)?;
    std::fs::write(out_dir.join("report.json"), report.to_json()).map_err(EvalError::from)?;
    std::fs::write(out_dir.join("report.txt"), report.to_text()).map_err(EvalError::from)?;
    out!("{}", report.to_text());
    outln!("reports written to {}", out_dir.display());
    Ok(())
}

fn cmd_inspect_paths(config: RunConfig, question: &str) -> Result<(), PipelineError> {
    let pipeline = build_pipeline(config)?;
    let inspection = pipeline.inspect(question)?;
    outln!("question: {}", inspection.question);
    outln!("candidate label paths ({}):", inspection.candidates.len());
    for path in &inspection.candidates {
        outln!("  {path}");
    }
    outln!("selected label paths ({}):", inspection.selected.len());
    for path in &inspection.selected {
        outln!("  {path}");
    }
    Ok(())
}

fn cmd_stats(config: &RunConfig) -> Result<(), PipelineError> {
    let store = load_store(config)?;
    let stats = store.stats();
    outln!("triples {}", stats.triples);
    outln!("entities {}", stats.entities);
    outln!("relations {}", stats.relations);
    outln!("labels {}", stats.labels);

    if let Some(dataset) = &config.dataset_path {
        let file = File::open(dataset).map_err(EvalError::from)?;
        let items = load_dataset(BufReader::new(file))?;
        let mut histogram: std::collections::BTreeMap<Option<u32>, usize> =
            std::collections::BTreeMap::new();
        for item in &items {
            *histogram.entry(item.hops).or_default() += 1;
        }
        outln!("question hops ({} questions):", items.len());
        for (hops, count) in histogram {
            let tag = match hops {
                Some(h) => format!("hop {h}"),
                None => "unspecified".to_owned(),
            };
            outln!("  {tag:<12} {:<4} {}", count, "#".repeat(count));
        }
    }
    Ok(())
}
