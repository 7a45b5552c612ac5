use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dyadshift_bench::{default_out, run_and_emit, BenchError, Resolved, Suite, SuiteConfig};

#[derive(Parser)]
#[command(name = "dyadshift", version, about = "Verification suites for operator-valued dyadic shifts and paraproducts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one suite and write its CSV table and JSON summary.
    Run {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available suites.
    ListSuites,
    /// Check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        suite: Option<String>,
    },
}

fn resolve(config: &Path, suite: Option<&str>) -> Result<Resolved, BenchError> {
    let cfg = SuiteConfig::load(config)?;
    let suite = cfg.suite(suite)?;
    Ok(cfg.resolve(suite)?)
}

fn fail(e: &BenchError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListSuites => {
            for s in Suite::ALL {
                println!("{:<24} {}", s.name(), s.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config, suite } => match resolve(&config, suite.as_deref()) {
            Ok(r) => {
                println!("config valid for suite {}", r.suite);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { suite, config, out } => {
            let cfg = match resolve(&config, suite.as_deref()) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| default_out(cfg.suite));
            match run_and_emit(&cfg, &dir) {
                Ok((report, files)) => {
                    for c in &report.criteria {
                        println!("{}", c.line());
                    }
                    println!("wrote {} and {}", files.csv.display(), files.summary.display());
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => fail(&e),
            }
        }
    }
}
