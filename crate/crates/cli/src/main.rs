use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use firmpanel::config::{PipelineConfig, GEOCODER_URL_ENV};
use firmpanel::pipeline::{self, Pipeline, Stage};
use firmpanel::synth::{self, CorpusPlan};
use firmpanel::{Error, Result};

#[derive(Parser)]
#[command(
    name = "firmpanel",
    version,
    about = "Build a firm-year financial statement panel"
)]
struct Cli {
    /// Pipeline configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true, env = GEOCODER_URL_ENV)]
    geocoder_url: Option<String>,
    /// Print the stages with their inputs and outputs, then exit.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse registry snapshots into the firm-year universe.
    BuildUniverse,
    /// Decide filing eligibility for every firm-year.
    Classify,
    /// Parse, harmonize and deduplicate statement files.
    Ingest,
    /// Rebuild missing statements from later filings.
    Impute,
    /// Check and repair statement totals.
    Articulate,
    /// Write the anomaly review queue and apply the exclusion list.
    FlagAnomalies,
    /// Geocode firm addresses.
    Geocode,
    /// Join everything into the panel and export it.
    Assemble,
    /// Write validation reports.
    Report,
    /// Run every stage in order.
    RunAll,
    /// Generate a synthetic fixture corpus with a ground-truth manifest.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write the corpus into.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    firms: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    filing_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    articulation_error_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    duplicate_rate: f64,
    #[arg(long, default_value_t = 0.002)]
    anomaly_rate: f64,
}

impl Command {
    fn stages(&self) -> Vec<Stage> {
        match self {
            Command::BuildUniverse => vec![Stage::BuildUniverse],
            Command::Classify => vec![Stage::Classify],
            Command::Ingest => vec![Stage::Ingest],
            Command::Impute => vec![Stage::Impute],
            Command::Articulate => vec![Stage::Articulate],
            Command::FlagAnomalies => vec![Stage::FlagAnomalies],
            Command::Geocode => vec![Stage::Geocode],
            Command::Assemble => vec![Stage::Assemble],
            Command::Report => vec![Stage::Report],
            Command::RunAll => Stage::ALL.to_vec(),
            Command::Synth(_) => Vec::new(),
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let cwd = std::env::current_dir().map_err(|e| Error::io(Path::new("."), e))?;
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::ConfigInvalid(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v, &cwd)?;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(d) = &cli.output_dir {
        cfg.set("output_dir", &d.display().to_string(), &cwd)?;
    }
    if let Some(u) = &cli.geocoder_url {
        cfg.set("geocoder_url", u, &cwd)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(args: &SynthArgs, dry_run: bool) -> Result<()> {
    let plan = CorpusPlan {
        n_firms: args.firms,
        seed: args.seed,
        filing_rate: args.filing_rate,
        articulation_error_rate: args.articulation_error_rate,
        duplicate_rate: args.duplicate_rate,
        anomaly_rate: args.anomaly_rate,
        ..CorpusPlan::default()
    };
    plan.validate()?;
    if dry_run {
        println!(
            "would write a {}-firm corpus to {}",
            plan.n_firms,
            args.out.display()
        );
        return Ok(());
    }
    let corpus = synth::generate(&plan, &args.out)?;
    let gaps = corpus.rows.iter().filter(|r| r.gap).count();
    let filed = corpus.rows.iter().filter(|r| r.filed).count();
    println!(
        "wrote {}: firm_years={} filed={} gaps={} config={}",
        corpus.root.display(),
        corpus.rows.len(),
        filed,
        gaps,
        corpus.config.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::Synth(args) = &cli.command {
        return synth(args, cli.dry_run);
    }
    let cfg = load_config(cli)?;
    let stages = cli.command.stages();
    if cli.dry_run {
        print!("{}", pipeline::plan(&stages, &cfg));
        return Ok(());
    }
    let p = Pipeline::new(cfg)?;
    for stage in stages {
        let start = Instant::now();
        let summary = p.run(stage)?;
        println!("{summary} seconds={:.2}", start.elapsed().as_secs_f64());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(if matches!(e, Error::ConfigInvalid(_)) {
                2
            } else {
                1
            })
        }
    }
}
