use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bermudan::oracle::{FiniteChain, LatticePut};
use bermudan_bench::summary::{self, to_csv};
use bermudan_bench::{run_experiment, ExperimentConfig, RunError, RunOptions};

#[derive(Parser)]
#[command(
    name = "bermudan-bench",
    version,
    about = "Bermudan option pricing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all replicates of an experiment config and write CSV results.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Write 0 for elapsed_ms so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Quartiles of replicate prices per (experiment, algorithm).
    Summarize {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reference prices.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Subcommand)]
enum Oracle {
    /// Bermudan put on a binomial lattice, exercisable at j * horizon / dates.
    Put(PutArgs),
    /// Exact continuation and value tables of a chain fixture file.
    Chain { fixture: PathBuf },
}

#[derive(Args)]
struct PutArgs {
    #[arg(long)]
    x0: f64,
    #[arg(long)]
    strike: f64,
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    vol: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Number of equally spaced exercise dates.
    #[arg(long)]
    dates: usize,
    /// Lattice steps (default 120 per exercise date).
    #[arg(long)]
    steps: Option<usize>,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn run(
    config: PathBuf,
    seed: Option<u64>,
    replicates: Option<usize>,
    out: PathBuf,
    no_timing: bool,
) -> Result<(), RunError> {
    let text = std::fs::read_to_string(&config).map_err(|source| RunError::Io {
        path: config.clone(),
        source,
    })?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replicates {
        cfg.eval.replicates = r.max(1);
    }
    eprintln!("resolved config:\n{}", cfg.to_text());
    let result = run_experiment(&cfg, RunOptions { timing: !no_timing })?;
    for path in result.write_to(&out)? {
        eprintln!("wrote {}", path.display());
    }
    let rows: Vec<_> = result
        .rows
        .iter()
        .map(|r| {
            (
                cfg.name.clone(),
                r.algorithm.name().to_string(),
                r.price.price,
            )
        })
        .collect();
    let table = summary::summarize_rows(rows).expect("at least one replicate");
    print!("{}", to_csv(&table));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            replicates,
            out,
            no_timing,
            threads,
        } => {
            if let Some(t) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                {
                    return fail(2, e);
                }
            }
            match run(config, seed, replicates, out, no_timing) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e.exit_code(), e),
            }
        }
        Command::Summarize { csv, out } => match summary::summarize(&csv) {
            Ok(table) => {
                let text = to_csv(&table);
                match out {
                    Some(path) => match std::fs::write(&path, text) {
                        Ok(()) => ExitCode::SUCCESS,
                        Err(e) => fail(1, format!("{}: {e}", path.display())),
                    },
                    None => {
                        print!("{text}");
                        ExitCode::SUCCESS
                    }
                }
            }
            Err(e) => fail(2, e),
        },
        Command::Oracle(Oracle::Put(a)) => {
            let put = LatticePut {
                x0: a.x0,
                strike: a.strike,
                rate: a.rate,
                vol: a.vol,
                horizon: a.horizon,
            };
            match put.bermudan_report(a.dates, a.steps) {
                Ok(r) => {
                    println!("steps,price,price_2n,difference,extrapolated");
                    println!(
                        "{},{},{},{},{}",
                        r.steps,
                        r.price,
                        r.price_doubled,
                        r.difference(),
                        r.extrapolated()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(2, e),
            }
        }
        Command::Oracle(Oracle::Chain { fixture }) => {
            let chain = match std::fs::read_to_string(&fixture) {
                Ok(text) => FiniteChain::from_fixture(&text),
                Err(e) => return fail(1, format!("{}: {e}", fixture.display())),
            };
            match chain {
                Ok(chain) => {
                    let dp = chain.dp_exact();
                    println!("t,state,reward,q,v");
                    for t in 0..=chain.maturity() {
                        for s in 0..chain.num_states() {
                            println!(
                                "{t},{s},{},{},{}",
                                chain.rewards()[t][s],
                                dp.q[t][s],
                                dp.v[t][s]
                            );
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(2, e),
            }
        }
    }
}
