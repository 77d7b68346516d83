//! Command-line front end of the interval solver, compatible with the
//! `--precision δ file.smt2` calling convention of dReal.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

#[derive(Parser)]
#[command(name = "deltasat", version, about = "δ-complete solver for QF_NRA with sin/cos")]
struct Args {
    /// SMT-LIB2 script (`-` reads standard input).
    file: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    precision: f64,
    /// Wall-clock limit in seconds; `unknown` is printed when it expires.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, default_value_t = 2_000_000)]
    max_nodes: u64,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = if args.file.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin())
    } else {
        std::fs::read_to_string(&args.file)
    };
    let text = match text {
        Ok(t) => t,
        Err(e) => {
            eprintln!("deltasat: {}: {e}", args.file.display());
            return ExitCode::from(2);
        }
    };
    if !(args.precision > 0.0) {
        eprintln!("deltasat: precision must be positive");
        return ExitCode::from(2);
    }
    let cfg = deltasat::Config {
        delta: args.precision,
        timeout: args.timeout.map(Duration::from_secs_f64),
        max_nodes: args.max_nodes,
        seed: args.seed,
    };
    match deltasat::solve(&text, &cfg) {
        Ok(outcome) => {
            print!("{}", outcome.render(args.precision));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("deltasat: {e}");
            ExitCode::from(2)
        }
    }
}
