use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedpe_cli::{commands, CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fedpe", version, about = "Federated training and personalization evaluation at desk scale")]
struct Cli {
    /// Experiment config (`key = value` lines); defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; `report` defaults to the input's directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overriding `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 picks one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its vocabulary.
    GenData,
    /// Train the global model with federated averaging.
    TrainGlobal,
    /// Run the personalization sweep against the global model.
    RunFpe,
    /// Re-aggregate a stored reports CSV.
    Report {
        /// A reports.csv file or a strategy directory containing one.
        #[arg(long)]
        input: PathBuf,
    },
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), cli.seed)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenData => commands::gen_data(&cfg, &out),
        Command::TrainGlobal => commands::train_global(&cfg, &out),
        Command::RunFpe => commands::run_fpe(&cfg, &out),
        Command::Report { input } => commands::report(&cfg, input, cli.out.as_deref()),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors share the config exit code; 2 is reserved for I/O
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
