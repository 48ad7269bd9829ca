use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use streamlda::dataio::{bank_from_csv, bank_write, decode_bank, synth_bank, synth_test_bank, CsvSchema, SynthSpec, BANK_MAGIC};
use streamlda::experiment::{run_experiment, ExperimentConfig};
use streamlda::orderings::{validate_plan, validate_plan_structure, StreamPlan};
use streamlda::slda::{SldaModel, SNAPSHOT_MAGIC};
use streamlda::{Error, Result};

/// Default output directory when neither `--out` nor the config names one.
const OUT_DIR_ENV: &str = "STREAMLDA_OUT_DIR";

#[derive(Parser)]
#[command(name = "streamlda", version, about = "Streaming LDA and streaming-learning benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (ordering, seed, method) combination of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (defaults to one per core).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a feature bank, SLDA snapshot or stream-plan manifest.
    Validate {
        path: PathBuf,
        /// Bank the plan refers to; enables ordering checks.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Generate a synthetic feature bank from a TOML or JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Train)]
        split: Split,
        /// Samples per class for `--split test`.
        #[arg(long, default_value_t = 100)]
        test_per_class: usize,
    },
    /// Convert a CSV file of features into a binary feature bank.
    Convert {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long)]
        instance_column: Option<String>,
        #[arg(long)]
        frame_column: Option<String>,
        /// Comma-separated feature columns, in order; default is every other column.
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
    },
    /// Print a JSON summary of a bank, snapshot or plan manifest.
    Inspect { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

enum Artifact {
    Bank,
    Snapshot,
    Plan,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn sniff(bytes: &[u8]) -> Artifact {
    if bytes.starts_with(BANK_MAGIC) {
        Artifact::Bank
    } else if bytes.starts_with(SNAPSHOT_MAGIC) {
        Artifact::Snapshot
    } else {
        Artifact::Plan
    }
}

fn read_plan(bytes: &[u8]) -> Result<StreamPlan> {
    StreamPlan::read_manifest(BufReader::new(bytes))
}

fn cmd_run(config: &Path, out: Option<PathBuf>, jobs: Option<usize>) -> Result<()> {
    let config = ExperimentConfig::load(config)?;
    if jobs == Some(0) {
        return Err(Error::config("--jobs", "must be at least 1"));
    }
    let out = out
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let (report, paths) = run_experiment(&config, &out, jobs)?;
    for r in &report.results {
        println!(
            "{:<15} {:<20} omega {:.4} ± {:.4}",
            r.ordering.as_str(),
            r.method,
            r.omega_mean,
            r.omega_stderr
        );
    }
    println!("wrote {}", paths.report.display());
    Ok(())
}

/// Returns the diagnostic for an invalid artifact, `None` when valid.
fn cmd_validate(path: &Path, bank: Option<&Path>) -> Result<Option<String>> {
    let bytes = read_bytes(path)?;
    Ok(match sniff(&bytes) {
        Artifact::Bank => match decode_bank(&bytes) {
            Ok(b) => {
                println!("OK bank n={} d={} K={}", b.len(), b.dim, b.num_classes);
                None
            }
            Err(e) => Some(e.to_string()),
        },
        Artifact::Snapshot => match SldaModel::from_bytes(&bytes) {
            Ok(m) => {
                println!("OK snapshot d={} K={} learned={}", m.dim(), m.num_classes(), m.learned());
                None
            }
            Err(e) => Some(e.to_string()),
        },
        Artifact::Plan => {
            let plan = match read_plan(&bytes) {
                Ok(p) => p,
                Err(e) => return Ok(Some(e.to_string())),
            };
            let report = match bank {
                Some(b) => validate_plan(&streamlda::dataio::bank_read(b)?, &plan),
                None => validate_plan_structure(&plan),
            };
            if report.passed {
                println!(
                    "OK plan kind={} n={} eval_points={}",
                    plan.kind,
                    plan.len(),
                    plan.eval_points.len()
                );
                None
            } else {
                report.first_violation
            }
        }
    })
}

fn load_spec(path: &Path) -> Result<SynthSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::config("spec", e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| Error::config("spec", e.message().to_string()))
    }
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let bytes = read_bytes(path)?;
    let summary = match sniff(&bytes) {
        Artifact::Bank => serde_json::to_value(decode_bank(&bytes)?.summary())?,
        Artifact::Snapshot => {
            let m = SldaModel::from_bytes(&bytes)?;
            json!({
                "dim": m.dim(),
                "num_classes": m.num_classes(),
                "mode": m.mode(),
                "epsilon": m.shrinkage().epsilon(),
                "t": m.covariance().t,
                "learned": m.learned(),
                "seen_classes": m.seen_classes(),
                "memory_bytes": m.memory_bytes(),
            })
        }
        Artifact::Plan => {
            let p = read_plan(&bytes)?;
            json!({
                "kind": p.kind,
                "seed": p.seed,
                "n": p.len(),
                "base_init_len": p.base_init_len,
                "eval_points": p.eval_points,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, jobs } => cmd_run(&config, out, jobs)?,
        Command::Validate { path, bank } => {
            if let Some(msg) = cmd_validate(&path, bank.as_deref())? {
                eprintln!("INVALID {}: {msg}", path.display());
                return Ok(ExitCode::from(1));
            }
        }
        Command::Synth {
            spec,
            out,
            split,
            test_per_class,
        } => {
            let spec = load_spec(&spec)?;
            let bank = match split {
                Split::Train => synth_bank(&spec)?,
                Split::Test => synth_test_bank(&spec, test_per_class)?,
            };
            bank_write(&bank, &out)?;
            println!("wrote {} (n={} d={} K={})", out.display(), bank.len(), bank.dim, bank.num_classes);
        }
        Command::Convert {
            csv,
            out,
            label_column,
            instance_column,
            frame_column,
            features,
        } => {
            let schema = CsvSchema {
                label_column,
                instance_column,
                frame_column,
                feature_columns: features,
            };
            let bank = bank_from_csv(&csv, &schema)?;
            bank_write(&bank, &out)?;
            println!("wrote {} (n={} d={} K={})", out.display(), bank.len(), bank.dim, bank.num_classes);
        }
        Command::Inspect { path } => cmd_inspect(&path)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(2),
                Error::File { .. } | Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
