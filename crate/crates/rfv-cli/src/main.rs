use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rfv_cli::service::{serve, ServiceState};
use rfv_cli::{resolve_config, AblationChoice};

#[derive(Parser)]
#[command(name = "rfv", about = "Retrieval-augmented imitation learning toolbench", version)]
struct Cli {
    /// Run configuration file (JSON); RFV_CONFIG is consulted when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an annotated human-video bank from the built-in tasks.
    BankSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_task: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build a bank from ingested detector outputs (clips.jsonl + blobs).
    BankBuild {
        #[arg(long)]
        ingest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate scripted-expert demos in the dataset format.
    DemoSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_task: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Top-k retrieval against a bank; prints a JSON array.
    Retrieve {
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        view: Option<String>,
    },
    /// Train a policy by behavior cloning.
    Train {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on the task suite.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an ablation harness (k or midlevel).
    Ablate {
        #[arg(long)]
        which: String,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve retrieval over HTTP.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Print the JSON schema accepted by --config files.
    Schema,
}

fn run(cli: Cli) -> rfv_core::Result<()> {
    let config = resolve_config(cli.config.as_deref())?;
    config.validate()?;
    match cli.command {
        Command::BankSynth { out, per_task, seed } => {
            println!("{}", rfv_cli::cmd_bank_synth(&out, per_task, seed, &config)?);
        }
        Command::BankBuild { ingest, out } => {
            println!("{}", rfv_cli::cmd_bank_build(&ingest, &out, &config)?);
        }
        Command::DemoSynth { out, per_task, seed } => {
            println!("{}", rfv_cli::cmd_demo_synth(&out, per_task, seed, &config)?);
        }
        Command::Retrieve { query, k, bank, view } => {
            let json = rfv_cli::cmd_retrieve(&query, k, &bank, view.as_deref(), &config)?;
            println!("{}", serde_json::to_string(&json).expect("serializable"));
        }
        Command::Train { bank, demos, out, seed } => {
            println!("{}", rfv_cli::cmd_train(&bank, &demos, &out, seed, &config)?);
        }
        Command::Eval { checkpoint, bank, out, seed } => {
            println!("{}", rfv_cli::cmd_eval(&checkpoint, &bank, &out, seed, &config)?);
        }
        Command::Ablate { which, bank, demos, out } => {
            let choice = match which.as_str() {
                "k" => AblationChoice::K,
                "midlevel" => AblationChoice::Midlevel,
                other => {
                    return Err(rfv_core::Error::Config(format!(
                        "--which must be 'k' or 'midlevel', got '{other}'"
                    )))
                }
            };
            println!("{}", rfv_cli::cmd_ablate(choice, &bank, &demos, &out, &config)?);
        }
        Command::Serve { port, bank, workers } => {
            let (bank, index) = rfv_cli::load_bank_indexed(&bank, &config.embedder)?;
            serve(ServiceState { bank, index, config }, port, workers)?;
        }
        Command::Schema => {
            println!("{}", rfv_core::config::RUN_CONFIG_SCHEMA.trim_end());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
