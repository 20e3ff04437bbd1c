use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lakedw::cli::{self, PipelineConfig, SourceSpec, UsageError};
use lakedw::{LinkPolicy, MergePolicy, Rid};

/// Ingest relational databases into a single document warehouse.
#[derive(Parser)]
#[command(name = "lakedw", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Strict,
    Lenient,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a warehouse directory.
    Ingest {
        /// `snapshot:<dir>` or `sqldump:<file>:<dbname>`; repeat in processing order.
        #[arg(long = "source", required = true, value_parser = parse_source)]
        sources: Vec<SourceSpec>,
        #[arg(long)]
        out: PathBuf,
        /// Warehouse name.
        #[arg(long)]
        name: String,
        /// Equivalence groups to merge after link conversion.
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Dangling foreign keys: abort (strict) or drop and report (lenient).
        #[arg(long, value_enum, default_value = "strict")]
        links: Policy,
        /// Records without a match key: abort (strict) or keep as singletons (lenient).
        #[arg(long, value_enum, default_value = "strict")]
        merge: Policy,
    },
    /// Check sources for duplicate keys and dangling foreign keys.
    Validate {
        #[arg(required = true, value_parser = parse_source)]
        sources: Vec<SourceSpec>,
    },
    /// Per-class record and reference counts of a warehouse.
    Stats { dir: PathBuf },
    /// Print one record.
    Inspect {
        dir: PathBuf,
        #[arg(value_parser = parse_rid)]
        rid: Rid,
    },
}

fn parse_source(s: &str) -> Result<SourceSpec, String> {
    s.parse().map_err(|e: UsageError| e.0)
}

fn parse_rid(s: &str) -> Result<Rid, String> {
    s.parse().map_err(|e: lakedw::docmodel::Error| e.to_string())
}

fn run(args: Args) -> anyhow::Result<ExitCode> {
    match args.command {
        Command::Ingest {
            sources,
            out,
            name,
            ontology,
            links,
            merge,
        } => {
            let config = PipelineConfig {
                sources,
                warehouse_name: name,
                out_dir: out,
                ontology_path: ontology,
                link_policy: match links {
                    Policy::Strict => LinkPolicy::Strict,
                    Policy::Lenient => LinkPolicy::Lenient,
                },
                merge_policy: match merge {
                    Policy::Strict => MergePolicy::Strict,
                    Policy::Lenient => MergePolicy::Lenient,
                },
            };
            println!("{}", cli::cmd_ingest(&config)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { sources } => {
            let reports = cli::cmd_validate(&sources)?;
            print!("{}", cli::render_validation(&reports));
            Ok(if reports.iter().all(|r| r.is_clean()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Stats { dir } => {
            print!("{}", cli::render_stats(&cli::cmd_stats(&dir)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { dir, rid } => {
            println!("{}", cli::cmd_inspect(&dir, rid)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
