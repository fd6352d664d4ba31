use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rnuclei::error::{Error, Result};
use rnuclei::harness::{output_dir, replay, run_with_threads, ExperimentKind, ExperimentSpec, RunManifest};

#[derive(Parser)]
#[command(name = "rnuclei", version, about = "Random nuclear configurations and thermodynamic-limit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment specification (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; overrides the spec's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the spec's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named by the spec's `kind`.
    Run(RunArgs),
    Sample(RunArgs),
    Stats(RunArgs),
    Moments(RunArgs),
    Tails(RunArgs),
    Geometry(RunArgs),
    Tiling(RunArgs),
    Energy(RunArgs),
    Ergodic(RunArgs),
    Thermo(RunArgs),
    Gap(RunArgs),
    /// Check a spec without running it, listing every violation.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Re-run a recorded manifest and compare output checksums.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(args: &RunArgs, kind: Option<ExperimentKind>) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::from_file(&args.spec)?;
    if let Some(k) = kind {
        match spec.kind {
            Some(s) if s != k => {
                return Err(Error::Schema(vec![format!(
                    "subcommand `{}` does not match kind = \"{}\"",
                    k.name(),
                    s.name()
                )]))
            }
            _ => spec.kind = Some(k),
        }
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    let (args, kind) = match cli.command {
        Command::Validate { spec } => {
            ExperimentSpec::from_file(&spec)?.validate()?;
            return Ok(json!({ "status": "ok", "spec": spec }));
        }
        Command::Replay { manifest, out, threads } => {
            let m = RunManifest::from_file(&manifest)?;
            let (_, mismatches) = replay(&m, &out, threads)?;
            if !mismatches.is_empty() {
                return Err(Error::Precondition(format!("replay differs: {}", mismatches.join("; "))));
            }
            return Ok(json!({ "status": "ok", "out": out, "identical": m.outputs.len() }));
        }
        Command::Run(a) => (a, None),
        Command::Sample(a) => (a, Some(ExperimentKind::Sample)),
        Command::Stats(a) => (a, Some(ExperimentKind::Stats)),
        Command::Moments(a) => (a, Some(ExperimentKind::Moments)),
        Command::Tails(a) => (a, Some(ExperimentKind::Tails)),
        Command::Geometry(a) => (a, Some(ExperimentKind::Geometry)),
        Command::Tiling(a) => (a, Some(ExperimentKind::Tiling)),
        Command::Energy(a) => (a, Some(ExperimentKind::Energy)),
        Command::Ergodic(a) => (a, Some(ExperimentKind::Ergodic)),
        Command::Thermo(a) => (a, Some(ExperimentKind::Thermo)),
        Command::Gap(a) => (a, Some(ExperimentKind::Gap)),
    };
    let spec = load(&args, kind)?;
    let out = output_dir(&spec, args.out.clone());
    let m = run_with_threads(&spec, &out, args.threads)?;
    let outputs: Vec<_> = m.outputs.iter().map(|o| json!({ "file": o.file, "rows": o.rows, "sha256": o.sha256 })).collect();
    Ok(json!({ "status": "ok", "kind": m.kind, "seed": m.seed, "out": out, "outputs": outputs }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let messages = match &e {
                Error::Schema(v) => v.clone(),
                other => vec![other.to_string()],
            };
            eprintln!("{}", json!({ "status": "error", "kind": e.kind(), "exit_code": e.exit_code(), "errors": messages }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
