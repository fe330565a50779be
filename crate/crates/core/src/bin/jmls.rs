use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use jmls::benchmarks::{three_state_three_mode, univariate_two_mode};
use jmls::io::{
    params_to_json, run_identify, run_simulate, run_summarize, summary_options, write_atomic,
    CliError,
};

#[derive(Parser)]
#[command(
    name = "jmls",
    version,
    about = "Bayesian identification of jump Markov linear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate input/output data from a parameter file.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        /// Number of time steps.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the particle-Gibbs sampler described by a run configuration.
    Identify {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Posterior summaries of a chain file.
    Summarize {
        #[arg(long)]
        chain: PathBuf,
        /// Parameter file of the true system, for coverage and relabelling.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Histogram bins; Freedman–Diaconis when omitted.
        #[arg(long)]
        bins: Option<usize>,
        /// Frequency grid size for relabelling and Bode envelopes.
        #[arg(long, default_value_t = 64)]
        grid_points: usize,
        /// Keep the sampler's mode labels.
        #[arg(long)]
        no_relabel: bool,
    },
    /// Write one of the built-in reference systems as a parameter file.
    Preset {
        #[arg(long, value_enum)]
        name: Preset,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Two modes, scalar state.
    TwoMode,
    /// Three modes, three states.
    ThreeMode,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            params,
            n,
            seed,
            out,
        } => run_simulate(&params, n as usize, seed, &out),
        Command::Identify { config, seed } => run_identify(&config, seed),
        Command::Summarize {
            chain,
            truth,
            out,
            bins,
            grid_points,
            no_relabel,
        } => {
            if grid_points < 2 {
                return Err(CliError::Usage("--grid-points must be at least 2".into()));
            }
            let options = summary_options(!no_relabel, bins, grid_points);
            run_summarize(&chain, truth.as_deref(), &out, &options).map(|_| ())
        }
        Command::Preset { name, out } => {
            let params = match name {
                Preset::TwoMode => univariate_two_mode(),
                Preset::ThreeMode => three_state_three_mode(),
            };
            write_atomic(&out, params_to_json(&params).as_bytes())
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", out.display())))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
