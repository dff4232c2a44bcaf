use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feasible_cbf_cli::{cmd_eval, cmd_label, cmd_simulate, cmd_train, parse_model_arg, CliError};

#[derive(Parser)]
#[command(name = "fcbf", version, about = "Feasibility-guided CBF controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Models {
    /// Learned model for one unsafe-set type, as TYPE=PATH. Repeatable.
    #[arg(long = "model", value_parser = parse_model_arg)]
    models: Vec<(usize, PathBuf)>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the feedback training loop; writes model.json and report.json.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-loop simulation; writes trajectory.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: Models,
    },
    /// Generalization or accuracy metrics; writes metrics.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: Models,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample and label states; writes dataset.csv.
    Label {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: Models,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result: Result<_, CliError> = match &cli.command {
        Command::Train { common, seed } => cmd_train(&common.config, *seed, &common.out),
        Command::Simulate { common, models } => cmd_simulate(&common.config, &models.models, &common.out),
        Command::Eval { common, models, seed } => cmd_eval(&common.config, &models.models, *seed, &common.out),
        Command::Label { common, models, seed } => cmd_label(&common.config, &models.models, *seed, &common.out),
    };
    match result {
        Ok(m) => {
            log::info!("{} finished in {} ms", m.command, m.wall_clock_ms);
            for a in &m.artifacts {
                println!("{}", m.output_dir.clone() + "/" + a);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fcbf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
