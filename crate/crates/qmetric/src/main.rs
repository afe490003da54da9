use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qmetric::config::Command;
use qmetric::output::write_atomic;
use qmetric::run::{run, ExitStatus, RunOptions};

#[derive(Parser, Debug)]
#[command(
    name = "qmetric",
    version,
    about = "Length growth, seminorms, cutoffs and state distances on discrete groups"
)]
struct Cli {
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and CSV tables.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of materialized ball elements.
    #[arg(long)]
    ball_cap: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn exit(status: ExitStatus) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit(ExitStatus::Usage) } else { exit(ExitStatus::Ok) };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return exit(ExitStatus::Usage);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return exit(ExitStatus::Usage);
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return exit(ExitStatus::Usage);
        }
    };
    let opts = RunOptions { seed: cli.seed, ball_cap: cli.ball_cap };
    let result = match run(cli.command, &text, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(ExitStatus::of_error(&e));
        }
    };
    let report = match serde_json::to_vec_pretty(&result.report) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: report serialization: {e}");
            return exit(ExitStatus::Usage);
        }
    };
    let written = write_atomic(&cli.out, "report.json", &report)
        .and_then(|_| result.tables.iter().try_for_each(|t| write_atomic(&cli.out, &t.name, &t.body)));
    if let Err(e) = written {
        eprintln!("error: writing to {}: {e}", cli.out.display());
        return exit(ExitStatus::Usage);
    }
    for m in &result.messages {
        eprintln!("{m}");
    }
    exit(result.status)
}
