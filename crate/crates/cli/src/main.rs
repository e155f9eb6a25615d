use std::process::ExitCode;

use almdp_cli::commands::{self, BenchmarkArgs, GenDataArgs, SelfcheckArgs, TrainAlmArgs, TrainBaselineArgs};
use almdp_cli::error::CliError;
use clap::{Parser, Subcommand};

/// Train smooth feedforward networks with an augmented Lagrangian method.
#[derive(Debug, Parser)]
#[command(name = "almdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate teacher-student train and test sets.
    GenData(GenDataArgs),
    /// Train with the augmented Lagrangian / Gauss-Newton solver.
    TrainAlm(TrainAlmArgs),
    /// Train with SGD or Adam on the same network.
    TrainBaseline(TrainBaselineArgs),
    /// Run ALM, Adam and SGD over a grid of input dimensions and noise levels.
    Benchmark(BenchmarkArgs),
    /// Check the solver against dense oracles and finite differences.
    Selfcheck(SelfcheckArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result: Result<(), CliError> = match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::TrainAlm(a) => commands::train_alm(a),
        Command::TrainBaseline(a) => commands::train_baseline(a),
        Command::Benchmark(a) => commands::benchmark(a).map(|_| ()),
        Command::Selfcheck(a) => commands::selfcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
