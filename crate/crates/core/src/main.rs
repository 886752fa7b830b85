use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hyperwave_core::pipeline::{self, ErrorKind, Mode, PipelineError, RunOptions};
use hyperwave_core::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "hyperwave", version, about = "Hypergraph diffusion wavelets for spatial cell niches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tissue fixture.
    Synth(SynthArgs),
    /// Parse and validate the configured inputs without running any stage.
    IngestCheck(CommonArgs),
    /// Run every stage and write all outputs.
    Run(CommonArgs),
    /// Compute metrics.json, reusing cached representations when possible.
    EvalOnly(CommonArgs),
    /// Compute clusters.csv, reusing cached representations when possible.
    ClusterOnly(CommonArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CommonArgs {
    /// Pipeline config (TOML) or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Recompute every stage instead of using the stage cache.
    #[arg(long)]
    no_cache: bool,
}

fn set_threads(threads: Option<usize>) -> Result<(), PipelineError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(PipelineError::new("config", ErrorKind::Config, "--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::new("config", ErrorKind::Config, e.to_string()))?;
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<(), PipelineError> {
    set_threads(args.threads)?;
    let config_err = |m: String| PipelineError::new("synth", ErrorKind::Config, m);
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let tissue = synth::generate(&cfg).map_err(|e| config_err(e.to_string()))?;
    synth::write_fixture(&tissue, &cfg, &args.out)
        .map_err(|e| PipelineError::new("synth", ErrorKind::Io, e.to_string()))?;
    println!("wrote {} cells to {}", tissue.dataset.n_cells(), args.out.display());
    Ok(())
}

fn run_stage(args: CommonArgs, mode: Mode) -> Result<(), PipelineError> {
    set_threads(args.threads)?;
    let opts = RunOptions {
        out: args.out,
        seed: args.seed,
        cache_dir: None,
        no_cache: args.no_cache,
        threads: args.threads,
    };
    let outcome = pipeline::run_pipeline(&args.config, mode, &opts)?;
    for file in &outcome.manifest.outputs {
        println!("{}", file.path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::IngestCheck(args) => set_threads(args.threads).and_then(|_| {
            let summary = pipeline::ingest_check(&args.config)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
            Ok(())
        }),
        Command::Run(args) => run_stage(args, Mode::Run),
        Command::EvalOnly(args) => run_stage(args, Mode::EvalOnly),
        Command::ClusterOnly(args) => run_stage(args, Mode::ClusterOnly),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
