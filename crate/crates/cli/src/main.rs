use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use robust_sparse::ellipsoid::estimate_functional;
use robust_sparse::harness::{run_sweep, verify, write_records, RunConfig, Suite, SweepConfig, VerifyReport};
use robust_sparse::simulator::{read_dataset, sample_contaminated, write_dataset};
use robust_sparse::{Error, Result};

#[derive(Parser)]
#[command(name = "robust-sparse", version, about = "Robust sparse functional estimation under contamination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a contaminated dataset described by a run config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trial index; the dataset seed is the config seed plus this.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append the hidden good/bad label to every line.
        #[arg(long)]
        with_labels: bool,
    },
    /// Run the robust estimator once and print a JSON summary.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Read samples from this file instead of simulating them.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run a grid of configs and write one CSV row per (grid point, trial, method).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "ROBUST_SPARSE_THREADS", default_value_t = 1)]
        threads: usize,
    },
    /// Run a verification suite and print a table of checks.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Lemmas,
    Moments,
    Spca,
    Oracle,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Lemmas => Suite::Lemmas,
            SuiteArg::Moments => Suite::Moments,
            SuiteArg::Spca => Suite::Spca,
            SuiteArg::Oracle => Suite::Oracle,
        }
    }
}

fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn print_table(report: &VerifyReport) {
    println!("{:<44} {:>14} {:>12}  {:<6} detail", "check", "measured", "tolerance", "status");
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{:<44} {:>14.6e} {:>12.3e}  {:<6} {}", c.name, c.measured, c.tolerance, status, c.detail);
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { config, trial, out, with_labels } => {
            let cfg = load_run_config(&config)?;
            let model = cfg.build_model()?;
            let data = sample_contaminated(&model, cfg.n, &cfg.contamination(cfg.trial_seed(trial)))?;
            match out {
                Some(path) => write_dataset(BufWriter::new(File::create(path)?), &data, with_labels)?,
                None => write_dataset(BufWriter::new(io::stdout().lock()), &data, with_labels)?,
            }
            Ok(true)
        }
        Command::Estimate { config, data, trial } => {
            let cfg = load_run_config(&config)?;
            let model = cfg.build_model()?;
            let dataset = match data {
                Some(path) => {
                    let d = read_dataset(BufReader::new(File::open(path)?), model.kind().has_response(), cfg.epsilon)?;
                    if d.dim() != model.dim {
                        return Err(Error::DimensionMismatch { expected: model.dim, found: d.dim() });
                    }
                    d
                }
                None => sample_contaminated(&model, cfg.n, &cfg.contamination(cfg.trial_seed(trial)))?,
            };
            let bundle = estimate_functional(&dataset, &model, &cfg.estimator_config())?;
            println!("{}", serde_json::to_string_pretty(&bundle.summary())?);
            Ok(true)
        }
        Command::Sweep { config, out, threads } => {
            let sweep = SweepConfig::from_json(&std::fs::read_to_string(config)?)?;
            sweep.validate()?;
            let records = run_sweep(&sweep, threads)?;
            let mut file = BufWriter::new(File::create(out)?);
            write_records(&mut file, &records)?;
            file.flush()?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} of {} runs recorded an error", records.len());
            }
            Ok(true)
        }
        Command::Verify { suite, json } => {
            let report = verify(suite.into())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print_table(&report);
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
