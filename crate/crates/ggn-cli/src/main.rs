use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ggn_cli::bench::{bench_path, BenchOptions};
use ggn_cli::certify::{certify_path, CertifyOptions};
use ggn_cli::compare::{compare_path, parse_algorithms};
use ggn_cli::run::run_path;
use ggn_cli::CliError;

#[derive(Parser)]
#[command(
    name = "ggn",
    version,
    about = "Run, benchmark, compare and certify ILQR / IDDP experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem; writes the trace CSV and the report JSON
    Run {
        config: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Median per-iteration time against the horizon
    Bench {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        /// add dense reference rows where the size guard allows
        #[arg(long)]
        dense: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Same problem and initial point under several algorithms
    Compare {
        config: PathBuf,
        #[arg(long, default_value = "ilqr,iddp,gd")]
        algorithms: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brunovsky and surjectivity certificates
    Certify {
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config, trace, report } => {
            let o = run_path(&config, trace.as_deref(), report.as_deref())?;
            eprintln!(
                "{}: {} after {} iterations",
                o.report.algorithm, o.report.status, o.report.iterations
            );
            if let Some(e) = &o.report.error {
                eprintln!("solver error at iteration {}: {}", e.iteration, e.message);
            }
            Ok(o.exit_code)
        }
        Command::Bench {
            config,
            horizons,
            reps,
            steps,
            dense,
            out,
        } => {
            let opts = BenchOptions {
                horizons,
                repetitions: reps,
                steps,
                dense,
            };
            let r = bench_path(&config, &opts, out.as_deref())?;
            if let Some(f) = &r.fit {
                eprintln!(
                    "slope {:e} ms/stage, intercept {:e} ms, R² {:.4}",
                    f.slope, f.intercept, f.r_squared
                );
            }
            for (tau, ratio) in &r.doubling_ratios {
                eprintln!("t({})/t({tau}) = {ratio:.3}", 2 * tau);
            }
            Ok(0)
        }
        Command::Compare {
            config,
            algorithms,
            out,
        } => {
            let algs = parse_algorithms(&algorithms)?;
            let c = compare_path(&config, &algs, out.as_deref())?;
            for e in &c.entries {
                eprintln!("{}: {} after {} iterations", e.algorithm, e.status, e.iterations);
            }
            Ok(c.exit_code())
        }
        Command::Certify { config, points, out } => {
            let opts = CertifyOptions {
                points,
                ..CertifyOptions::default()
            };
            let r = certify_path(&config, &opts, out.as_deref())?;
            Ok(r.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
