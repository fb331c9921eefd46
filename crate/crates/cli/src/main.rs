use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use weakkam_cli::config::ExperimentConfig;
use weakkam_cli::exit_code;
use weakkam_cli::pipeline::Pipeline;

#[derive(Parser)]
#[command(name = "weakkam", version, about = "Discrete weak KAM experiments on T¹ and T²")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Critical value from the minimum cycle mean of the kernel.
    Critical(Common),
    /// Weak KAM solutions from the zero and random starts.
    Weakkam(Common),
    /// Peierls barrier and its self-checks.
    Barrier(Common),
    /// Projected Aubry set with labels.
    Aubry(Common),
    /// Mather quotient classes.
    Quotient(Common),
    /// Covering numbers and the quadratic bound on δ.
    Dimension(Common),
    /// Aubry set against the chain-recurrent set of the field.
    ManeCompare(Common),
    /// Chain-recurrent set of the field.
    Chains(Common),
    /// Alternating Lax–Oleinik smoothing of a weak KAM solution.
    Regularize(Common),
    /// Chain semi-metric δ_p of a point cloud and collapse series.
    Ferry(Common),
    /// Every stage listed in the config's `stages`.
    All(Common),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (stage, common) = match cli.command {
        Command::Critical(c) => ("critical", c),
        Command::Weakkam(c) => ("weakkam", c),
        Command::Barrier(c) => ("barrier", c),
        Command::Aubry(c) => ("aubry", c),
        Command::Quotient(c) => ("quotient", c),
        Command::Dimension(c) => ("dimension", c),
        Command::ManeCompare(c) => ("mane-compare", c),
        Command::Chains(c) => ("chains", c),
        Command::Regularize(c) => ("regularize", c),
        Command::Ferry(c) => ("ferry", c),
        Command::All(c) => ("all", c),
    };
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = common.out {
        cfg.outputs.directory = out;
    }
    let stages = if stage == "all" {
        cfg.stages.clone()
    } else {
        vec![stage.to_string()]
    };
    let mut pipeline = Pipeline::new(cfg)?;
    let manifest = pipeline.run(&stages)?;
    for s in &manifest.stages {
        println!("{}: {}", s.stage, serde_json::to_string(&s.summary)?);
    }
    println!("manifest: {}", pipeline.output_dir().join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
