use std::path::PathBuf;
use std::process::ExitCode;

use bfvi_cli::commands;
use bfvi_cli::config::Overrides;
use bfvi_cli::CliError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bfvi", version, about = "Bernstein-flow variational inference benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON or key=value file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Overrides,
}

impl Common {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let file = match &self.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        Ok(self.flags.clone().or(file))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one approximation and write samples, trace and report.
    Fit(Common),
    /// KL against the exact posterior over several polynomial orders.
    SweepM(Common),
    /// Reference random-walk Metropolis chains with the R̂ gate.
    Mcmc(Common),
    /// Moment deltas of runs against a reference run or the analytic posterior.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated run directories or names under the output root.
        #[arg(long, value_delimiter = ',', required = true)]
        runs: Vec<String>,
        /// A run (typically mcmc) or `analytic`.
        #[arg(long)]
        against: String,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Fit(c) => {
            let record = commands::fit(&c.overrides()?)?;
            Ok(record.config.out_dir.display().to_string())
        }
        Command::SweepM(c) => {
            let summary = commands::sweep_m(&c.overrides()?)?;
            let mut lines = vec![summary.config.out_dir.display().to_string()];
            for l in &summary.levels {
                lines.push(format!("M={:<4} median KL {:.5} (IQR {:.5}–{:.5})", l.order, l.median, l.q25, l.q75));
            }
            if let Some(s) = summary.loglog_slope {
                lines.push(format!("log-log slope (M ≤ 10): {s:.3}"));
            }
            Ok(lines.join("\n"))
        }
        Command::Mcmc(c) => {
            let record = commands::mcmc(&c.overrides()?)?;
            Ok(record.config.out_dir.display().to_string())
        }
        Command::Compare { common, runs, against } => {
            let report = commands::compare(&common.overrides()?, &runs, &against)?;
            Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(message) => {
            println!("{message}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
