//! `stylize`: localized text-guided stylization from the command line.
//!
//! Exit codes: 0 success, 1 configuration/input, 2 I/O, 3 instruction parsing,
//! 4 model backend or endpoint, 5 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stylize_core::instruction::{
    build_prompt, bundled_corpus, evaluate_corpus, fallback_split, load_corpus, parse_llm_response, query_llm,
    EndpointConfig,
};
use stylize_core::pipeline::{load_config, write_json, CliOverrides, Engine, RunManifest};
use stylize_core::{BackendKind, CompositeMode, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "stylize", version, about = "Stylize the object an instruction refers to")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score the instruction parser on a gold corpus.
    EvalParser(EvalArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Input RGB image.
    #[arg(long, required_unless_present = "batch", conflicts_with = "batch")]
    image: Option<PathBuf>,
    /// Stylization instruction, e.g. "Make the boat look like fire".
    #[arg(long, required_unless_present = "batch", conflicts_with = "batch")]
    text: Option<String>,
    /// Grayscale PNG mask (255 = target).
    #[arg(long, conflicts_with = "batch")]
    mask: Option<PathBuf>,
    /// Output PNG; defaults to `<stem>.stylized.png` beside the input.
    #[arg(long, conflicts_with = "batch")]
    out: Option<PathBuf>,
    /// JSON-lines manifest file, one job per line.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Aggregate batch report; defaults to `<batch stem>.batch-report.json`.
    #[arg(long, requires = "batch")]
    batch_report: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Encoder checkpoint for `--backend real`.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// OpenAI-compatible chat endpoint for instruction parsing.
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long, value_enum)]
    composite: Option<CompositeArg>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parallel batch jobs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSON-lines corpus; the bundled 20-item corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Query this chat endpoint instead of the rule-based parser.
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long, requires = "llm_endpoint")]
    llm_model: Option<String>,
    /// Also write the full per-item report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Real,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CompositeArg {
    Soft,
    Hard,
    Off,
}

impl RunArgs {
    fn overrides(&self) -> CliOverrides {
        CliOverrides {
            threshold: self.threshold,
            iterations: self.iterations,
            seed: self.seed,
            backend: self.backend.map(|b| match b {
                BackendArg::Mock => BackendKind::Mock,
                BackendArg::Real => BackendKind::Real,
            }),
            weights: self.weights.clone(),
            llm_endpoint: self.llm_endpoint.clone(),
            llm_model: self.llm_model.clone(),
            composite: self.composite.map(|c| match c {
                CompositeArg::Soft => CompositeMode::Soft,
                CompositeArg::Hard => CompositeMode::Hard,
                CompositeArg::Off => CompositeMode::Off,
            }),
            jobs: self.jobs,
        }
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), &args.overrides())?;
    let engine = Engine::<f32>::new(config)?;
    if let Some(batch) = &args.batch {
        let report = engine.run_batch(batch)?;
        let path = args.batch_report.clone().unwrap_or_else(|| default_batch_report(batch));
        write_json(&path, &report)?;
        println!(
            "{} of {} jobs succeeded, {} failed; report: {}",
            report.succeeded,
            report.total,
            report.failed,
            path.display()
        );
        return Ok(());
    }
    let (Some(image), Some(text)) = (&args.image, &args.text) else {
        return Err(Error::Config("--image and --text are required".into()));
    };
    let mut manifest = RunManifest::new(image, text);
    manifest.mask_path = args.mask.clone();
    manifest.output_path = args.out.clone();
    let report = engine.run(&manifest)?;
    println!(
        "content: {:?}\nobjects: {:?}\nfinal loss: {:.6}\noutput: {}\nreport: {}",
        report.parsed.stylized_content,
        report.parsed.stylized_objects,
        report.final_loss.total,
        report.output_path.display(),
        report.report_path.display()
    );
    Ok(())
}

fn default_batch_report(batch: &Path) -> PathBuf {
    let stem = batch.file_stem().map(|s| s.to_string_lossy().into_owned());
    batch.with_file_name(format!("{}.batch-report.json", stem.as_deref().unwrap_or("batch")))
}

fn eval_parser(args: &EvalArgs) -> Result<()> {
    let corpus = match &args.corpus {
        Some(p) => load_corpus(p)?,
        None => bundled_corpus(),
    };
    let report = match &args.llm_endpoint {
        Some(url) => {
            let mut endpoint = EndpointConfig::default().with_env_token();
            endpoint.base_url = url.clone();
            if let Some(m) = &args.llm_model {
                endpoint.model = m.clone();
            }
            evaluate_corpus(&corpus, |raw| {
                parse_llm_response(&query_llm(&endpoint, &build_prompt(raw))?)
            })?
        }
        None => evaluate_corpus(&corpus, fallback_split)?,
    };
    for item in report.per_item.iter().filter(|i| !i.matched) {
        println!("miss: {}", item.instruction);
    }
    println!(
        "exact match: {}/{} ({:.1}%)",
        report.exact_matches,
        report.total,
        100.0 * report.accuracy
    );
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Usage errors share exit code 1 with other configuration errors; clap's
    // own code 2 is reserved for I/O here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Some(Command::EvalParser(args)) => eval_parser(args),
        None => run(&cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
