use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eigenweight::cli::{parse_config_for, run, validate_suite, Task};

#[derive(Parser)]
#[command(name = "eigenweight", version, about = "Principal eigenvalue optimization over rearrangement classes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenpair of the configured weight.
    Solve(RunArgs),
    /// Minimize λ₁ over the rearrangement class of the weight.
    Minimize(RunArgs),
    /// Maximize λ₁ over the closure of the class.
    Maximize(RunArgs),
    /// μ₁ along increasingly fragmented class members.
    Sweep(RunArgs),
    /// Randomized derivative, homogeneity and convexity checks.
    Probe(RunArgs),
    /// Run the full invariant battery.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Only `seed` is read from it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Writes the report to `<dir>/validation`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("eigenweight: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (task, args) = match command {
        Command::Solve(a) => (Task::Solve, a),
        Command::Minimize(a) => (Task::Minimize, a),
        Command::Maximize(a) => (Task::Maximize, a),
        Command::Sweep(a) => (Task::Sweep, a),
        Command::Probe(a) => (Task::Probe, a),
        Command::Validate(a) => return validate(a),
    };
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let base = args.config.parent().map(PathBuf::from).unwrap_or_default();
    let mut config = parse_config_for(&text, Some(task), &base)?;
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let outcome = run(&config)?;
    for (k, v) in &outcome.summary {
        println!("{k} = {v}");
    }
    Ok(ExitCode::from(outcome.exit_code() as u8))
}

fn validate(args: ValidateArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let seed = match &args.config {
        Some(path) => seed_from(&std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?)?
            .unwrap_or(args.seed),
        None => args.seed,
    };
    let report = validate_suite(seed);
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("validation"), &text)?;
    }
    Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn seed_from(text: &str) -> Result<Option<u64>, String> {
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "seed" {
                return v.trim().parse().map(Some).map_err(|_| format!("`seed`: cannot parse `{}`", v.trim()));
            }
        }
    }
    Ok(None)
}
