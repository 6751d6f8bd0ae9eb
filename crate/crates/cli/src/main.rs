use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corpusforge::pipeline::{run_pipeline, stats, PipelineConfig, PipelineError, RunManifest, StageConfig, CONFIG_VERSION};
use corpusforge::record::ParseMode;

#[derive(Parser)]
#[command(name = "corpusforge", version, about = "Corpus curation and tokenizer training pipelines")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fold unknown record fields into metadata instead of rejecting them.
    #[arg(long, global = true)]
    lenient: bool,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Input shard paths or glob patterns.
    #[arg(long = "input", short, required = true, num_args = 1..)]
    inputs: Vec<String>,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    /// TOML file with the stage parameter block.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset tag for records without one.
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize shards: record, word and character counts and stored signals.
    Stats {
        /// Use the inputs of this pipeline config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Shard paths or glob patterns.
        shards: Vec<String>,
    },
    #[command(name = "clean")]
    Clean(StageArgs),
    #[command(name = "signals")]
    Signals(StageArgs),
    #[command(name = "calibrate")]
    Calibrate(StageArgs),
    #[command(name = "filter")]
    Filter(StageArgs),
    #[command(name = "dedup_exact")]
    DedupExact(StageArgs),
    #[command(name = "dedup_url")]
    DedupUrl(StageArgs),
    #[command(name = "dedup_fuzzy")]
    DedupFuzzy(StageArgs),
    #[command(name = "lm_train")]
    LmTrain(StageArgs),
    #[command(name = "lm_filter")]
    LmFilter(StageArgs),
    #[command(name = "tok_train")]
    TokTrain(StageArgs),
    #[command(name = "tok_eval")]
    TokEval(StageArgs),
}

fn absolute(p: &Path) -> Result<PathBuf, PipelineError> {
    std::path::absolute(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))
}

fn single_stage(name: &str, args: &StageArgs, cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let (params, base) = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            (text, absolute(p)?.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (String::new(), absolute(Path::new("."))?),
    };
    let inputs = args
        .inputs
        .iter()
        .map(|i| absolute(Path::new(i)).map(|p| p.to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    let mut cfg = PipelineConfig {
        version: CONFIG_VERSION,
        seed: cli.seed.unwrap_or(0),
        inputs,
        output_dir: absolute(&args.output)?,
        dataset: args.dataset.clone(),
        parse_mode: if cli.lenient { ParseMode::Lenient } else { ParseMode::Strict },
        stages: vec![StageConfig::from_params(name, &params)?],
        base_dir: base,
    };
    cfg.resolve_paths();
    cfg.validate()?;
    Ok(cfg)
}

fn report(m: &RunManifest, out: &Path) {
    for s in &m.stages {
        let drops: Vec<String> = s.drops.iter().map(|(k, v)| format!("{k}={v}")).collect();
        eprintln!(
            "{:>2} {:<12} {:>9} -> {:<9} {}{}",
            s.index,
            s.name,
            s.input_records,
            s.output_records,
            drops.join(" "),
            if s.cached { " (cached)" } else { "" }
        );
    }
    eprintln!("manifest: {}", out.join("manifest.json").display());
}

fn expand(patterns: &[String]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for pat in patterns {
        let matches = glob::glob(pat).map_err(|e| PipelineError::Config(format!("{pat}: {e}")))?;
        let before = files.len();
        for m in matches {
            files.push(m.map_err(|e| PipelineError::Data(e.to_string()))?);
        }
        if files.len() == before {
            return Err(PipelineError::Data(format!("{pat}: no such shard")));
        }
    }
    Ok(files)
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let mode = if cli.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let stage_name = match &cli.command {
        Command::Run { config } => {
            let mut cfg = PipelineConfig::load(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if cli.lenient {
                cfg.parse_mode = ParseMode::Lenient;
            }
            let m = run_pipeline(&cfg)?;
            report(&m, &cfg.output_dir);
            return Ok(());
        }
        Command::Stats { config, shards } => {
            let patterns = match config {
                Some(c) => PipelineConfig::load(c)?.input_patterns(),
                None => shards.clone(),
            };
            let summary = stats(&expand(&patterns)?, mode)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            return Ok(());
        }
        Command::Clean(a) => ("clean", a),
        Command::Signals(a) => ("signals", a),
        Command::Calibrate(a) => ("calibrate", a),
        Command::Filter(a) => ("filter", a),
        Command::DedupExact(a) => ("dedup_exact", a),
        Command::DedupUrl(a) => ("dedup_url", a),
        Command::DedupFuzzy(a) => ("dedup_fuzzy", a),
        Command::LmTrain(a) => ("lm_train", a),
        Command::LmFilter(a) => ("lm_filter", a),
        Command::TokTrain(a) => ("tok_train", a),
        Command::TokEval(a) => ("tok_eval", a),
    };
    let (name, args) = stage_name;
    let cfg = single_stage(name, args, cli)?;
    let m = run_pipeline(&cfg)?;
    report(&m, &cfg.output_dir);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(4);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
