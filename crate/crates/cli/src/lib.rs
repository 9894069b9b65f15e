//! The `rapt` command line: novelty labeling, example indexing, prompt
//! generation, evaluation and parameter accounting.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rapt_core::backend::{Backend, BackendError};
use rapt_core::novelty::NoveltyClass;
use rapt_core::retrieval::RetrievalStrategy;

pub use commands::GenerateMode;
pub use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(rapt_core::Error),
    #[error(transparent)]
    Backend(rapt_core::Error),
}

impl From<rapt_core::Error> for CliError {
    fn from(e: rapt_core::Error) -> Self {
        match e {
            rapt_core::Error::Backend(_) | rapt_core::Error::Completion { .. } => CliError::Backend(e),
            other => CliError::Data(other),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(msg) => CliError::Usage(msg),
            other => CliError::Backend(other.into()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rapt", version, about = "Retrieval-augmented paraphrase prompting toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "BOOL")]
    pub normalization_lowercase: Option<bool>,
    #[arg(long, global = true, value_name = "BOOL")]
    pub normalization_unicode: Option<bool>,
    #[arg(long, global = true, value_name = "BOOL")]
    pub normalization_punctuation: Option<bool>,
    #[arg(long, global = true, value_name = "BOOL")]
    pub normalization_whitespace: Option<bool>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label training pairs Low/Medium/High by TER(target, source).
    Label {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Embed training sources into a RAPTEMB1 file.
    Index {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate paraphrases for the test split.
    Generate {
        #[arg(long, value_enum)]
        mode: GenerateMode,
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score generations against the test split.
    Eval {
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Row label in the report.
        #[arg(long, default_value = "model")]
        label: String,
        /// Skip embedding-based similarity.
        #[arg(long)]
        no_semantic: bool,
    },
    /// Trainable parameter counts per adaptation method.
    Params {
        #[arg(long, requires_all = ["width", "vocab", "positions"])]
        layers: Option<u64>,
        #[arg(long)]
        width: Option<u64>,
        #[arg(long)]
        vocab: Option<u64>,
        #[arg(long)]
        positions: Option<u64>,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// label, index, generate and eval in one run.
    Pipeline {
        #[arg(long, value_enum, default_value = "rapt")]
        mode: GenerateMode,
        #[command(flatten)]
        gen: GenArgs,
    },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Query novelty class in ncrapt mode.
    #[arg(long = "class")]
    pub query_class: Option<NoveltyClass>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<RetrievalStrategy>,
    #[arg(long)]
    pub max_prompt_tokens: Option<usize>,
}

fn parse_strategy(s: &str) -> Result<RetrievalStrategy, String> {
    match s {
        "knn" => Ok(RetrievalStrategy::Knn),
        "random" => Ok(RetrievalStrategy::Random),
        _ => Err(format!("unknown strategy {s:?} (knn|random)")),
    }
}

/// Config file, then flags, then backend environment variables.
pub fn resolve_config(global: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &global.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
        cfg.retrieval.seed = seed;
        cfg.backend.seed = seed;
    }
    let n = &mut cfg.normalization;
    for (flag, field) in [
        (global.normalization_lowercase, &mut n.lowercase),
        (global.normalization_unicode, &mut n.unicode_normalize),
        (global.normalization_punctuation, &mut n.punctuation_split),
        (global.normalization_whitespace, &mut n.collapse_whitespace),
    ] {
        if let Some(v) = flag {
            *field = v;
        }
    }
    cfg.backend = cfg.backend.with_process_env();
    Ok(cfg)
}

fn apply_gen_args(cfg: &mut PipelineConfig, gen: &GenArgs) {
    if let Some(c) = gen.query_class {
        cfg.query_class = c;
    }
    if let Some(k) = gen.k {
        cfg.retrieval.k = k;
    }
    if let Some(s) = gen.strategy {
        cfg.retrieval.strategy = s;
    }
    if gen.max_prompt_tokens.is_some() {
        cfg.max_prompt_tokens = gen.max_prompt_tokens;
    }
}

/// Runs a parsed command, returning what it printed.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let mut cfg = resolve_config(&cli.global)?;
    if let Command::Params { layers, width, vocab, positions, csv } = cli.command {
        let custom = layers.map(|l| (l, width.unwrap_or(0), vocab.unwrap_or(0), positions.unwrap_or(0)));
        let table = commands::cmd_params(custom)?;
        return Ok(if csv { table.to_csv() } else { table.to_string() });
    }
    if let Command::Generate { gen, .. } | Command::Pipeline { gen, .. } = &cli.command {
        apply_gen_args(&mut cfg, gen);
    }
    if let Command::Eval { no_semantic: true, .. } = &cli.command {
        cfg.semantic = false;
    }
    cfg.validate()?;
    let backend = Backend::connect(&cfg.backend)?;
    commands::write_snapshot(&cfg)?;
    let out = match cli.command {
        Command::Label { input, output } => {
            let s = commands::cmd_label(&cfg, input.as_deref(), output.as_deref())?;
            let hist: Vec<String> = s.histogram.iter().map(|(c, n)| format!("{c}={n}")).collect();
            format!(
                "labeled {} pairs ({} rejected) -> {}\n{}\n",
                s.labeled.len(),
                s.rejected,
                s.output.display(),
                hist.join(" ")
            )
        }
        Command::Index { input, output } => {
            let s = commands::cmd_index(&cfg, &backend, input.as_deref(), output.as_deref())?;
            format!("indexed {} vectors of dim {} -> {}\n", s.count, s.dim, s.output.display())
        }
        Command::Generate { mode, input, output, .. } => {
            let s = commands::cmd_generate(&cfg, &backend, mode, input.as_deref(), output.as_deref())?;
            format!(
                "generated {} records ({} unparsed) -> {}\n",
                s.records.len(),
                s.unparsed,
                s.output.display()
            )
        }
        Command::Eval { generations, input, label, .. } => {
            let s = commands::cmd_eval(&cfg, Some(&backend), &generations, input.as_deref(), &label)?;
            format!("{}wrote {}\n", s.table, s.output.display())
        }
        Command::Pipeline { mode, .. } => {
            let s = commands::cmd_pipeline(&cfg, &backend, mode)?;
            format!(
                "labeled {} / indexed {} / generated {}\n{}",
                s.label.labeled.len(),
                s.index.count,
                s.generate.records.len(),
                s.eval.table
            )
        }
        Command::Params { .. } => unreachable!("handled above"),
    };
    Ok(out)
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
