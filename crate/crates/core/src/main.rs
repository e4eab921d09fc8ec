use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use tnet::cli::{self, DecomposeArgs, InductionArgs, Method, PathChoice};

#[derive(Parser)]
#[command(
    name = "tnet",
    version,
    about = "Dense tensor-network contraction, decompositions and toy circuits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Auto,
    Optimal,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Svd,
    Cp,
    Tucker,
    Tt,
}

#[derive(Subcommand)]
enum Command {
    /// Contract the network described by a JSON spec file.
    Contract {
        file: PathBuf,
        /// Path strategy; overrides the file's `options.path`.
        #[arg(long, value_enum)]
        path: Option<PathArg>,
        /// Cross-check against the naive contraction (exit 2 on mismatch).
        #[arg(long)]
        oracle: bool,
    },
    /// Decompose the single tensor in a spec file.
    Decompose {
        file: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Kept rank (svd) or CP rank.
        #[arg(long)]
        rank: Option<usize>,
        /// Per-leg Tucker ranks, comma separated.
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
        /// Required for cp and tucker.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_bond: Option<usize>,
        /// Legs grouped on the row side for svd of higher-order tensors.
        #[arg(long, value_delimiter = ',')]
        left_legs: Option<Vec<usize>>,
        #[arg(long)]
        hooi_iters: Option<usize>,
    },
    /// Toy induction head on a repeated random sequence.
    Induction {
        #[arg(long, default_value_t = 6)]
        pattern_len: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 768)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for attention.csv and attention.pgm.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn dispatch(command: Command) -> cli::CliResult<cli::Outcome> {
    match command {
        Command::Contract { file, path, oracle } => {
            let choice = path.map(|p| match p {
                PathArg::Auto => PathChoice::Auto,
                PathArg::Optimal => PathChoice::Optimal,
                PathArg::Greedy => PathChoice::Greedy,
            });
            cli::run_contract(&file, choice, oracle)
        }
        Command::Decompose {
            file,
            method,
            rank,
            ranks,
            seed,
            max_iter,
            tol,
            max_bond,
            left_legs,
            hooi_iters,
        } => {
            let method = match method {
                MethodArg::Svd => Method::Svd,
                MethodArg::Cp => Method::Cp,
                MethodArg::Tucker => Method::Tucker,
                MethodArg::Tt => Method::Tt,
            };
            let args = DecomposeArgs {
                rank,
                ranks,
                seed,
                max_iter,
                tol,
                max_bond,
                left_legs,
                hooi_iters,
            };
            cli::run_decompose(&file, method, &args)
        }
        Command::Induction {
            pattern_len,
            repeats,
            hidden,
            seed,
            out,
        } => {
            let args = InductionArgs {
                pattern_len,
                repeats,
                hidden,
                seed,
            };
            cli::run_induction(&args, &out)
        }
    }
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(cli::EXIT_INVALID as u8),
            };
        }
    };
    match dispatch(parsed.command) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
