use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use apshare::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use apshare::oracle::solve_max_potential;
use apshare::scenario::{self, ScenarioSpec};
use apshare::NetworkInstance;

/// Distributed uplink power allocation: experiments and utilities.
#[derive(Parser)]
#[command(name = "apshare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration traces of every algorithm against the certified optimum.
    Convergence(RunArgs),
    /// Collided channels and total collisions at equilibrium versus K.
    CollisionVsK(RunArgs),
    /// Sum-rate efficiency of averaged IWF versus K.
    EfficiencyVsK(RunArgs),
    /// Sum-rate efficiency versus coherence bandwidth.
    EfficiencyVsBc(RunArgs),
    /// Total collisions across fading settings and channel counts.
    Table1(RunArgs),
    /// Draw one instance from a scenario file and write it as TOML.
    Generate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify the maximum potential of an instance file; prints JSON.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Base seed; replicate r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Evaluate trend assertions and exit nonzero if any fails.
    #[arg(long)]
    check: bool,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.kind != kind {
        return Err(format!(
            "config {} describes a {} experiment, not {}",
            args.config.display(),
            config.kind.name(),
            kind.name()
        )
        .into());
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    if let Some(t) = args.threads {
        config.threads = Some(t);
    }
    let out = args
        .out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let doc = run_experiment(&config, args.check)?;
    let (csv, json) = doc.write(&out)?;
    eprintln!("wrote {} and {}", csv.display(), json.display());
    for c in &doc.checks {
        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(doc.all_checks_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Convergence(a) => run(ExperimentKind::Convergence, a),
        Command::CollisionVsK(a) => run(ExperimentKind::CollisionVsK, a),
        Command::EfficiencyVsK(a) => run(ExperimentKind::EfficiencyVsK, a),
        Command::EfficiencyVsBc(a) => run(ExperimentKind::EfficiencyVsBc, a),
        Command::Table1(a) => run(ExperimentKind::Table1, a),
        Command::Generate { scenario, seed, out } => (|| {
            let text = std::fs::read_to_string(&scenario)?;
            let mut spec: ScenarioSpec = toml::from_str(&text)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let inst = scenario::generate(&spec)?;
            match out {
                Some(path) => inst.save(&path)?,
                None => print!("{}", inst.to_toml_string()),
            }
            Ok(true)
        })(),
        Command::Solve { instance, tol } => (|| {
            let inst = NetworkInstance::load(&instance)?;
            let cert = solve_max_potential(&inst, tol)?;
            println!("{}", serde_json::to_string_pretty(&cert)?);
            Ok(true)
        })(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}
