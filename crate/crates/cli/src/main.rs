//! `moet` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use moet::imitation::{write_ledger, LedgerRow};
use moet::verify::Verdict;
use moet_cli::{
    cmd_emit_smt, cmd_eval, cmd_gridworld_table, cmd_sweep, cmd_train, cmd_verify, table, CliError,
    RunConfig, TableProtocol, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_VIOLATED,
};

#[derive(Parser)]
#[command(name = "moet", version, about = "Distill, evaluate and verify mixtures of expert trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Distill a student and save the best model.
    Train(Common),
    /// Evaluate a saved model against the configured teacher.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train every configuration of the sweep grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Re-evaluate the Pareto models on fresh episodes.
        #[arg(long)]
        reeval: bool,
        /// Worker count; overrides `sweep.jobs`.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write the bounded safety query for a saved model.
    EmitSmt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Script path; `<out>/query.smt2` by default.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Check the bounded safety property of a saved model with an SMT solver.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Solver command; the script path is appended as the last argument.
        #[arg(long, env = "MOET_SOLVER_CMD", default_value = "z3")]
        solver_cmd: String,
    },
    /// Compare tree and mixture sizes on diagonal gridworlds.
    GridworldTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        from: usize,
        #[arg(long, default_value_t = 10)]
        to: usize,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::from_toml("")?,
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg = cfg.with_out(out.clone());
    }
    Ok(cfg)
}

fn print_rows(rows: &[LedgerRow]) {
    let mut buf = Vec::new();
    write_ledger(&mut buf, rows, true).expect("write to memory");
    print!("{}", String::from_utf8_lossy(&buf));
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Train(common) => {
            let cfg = load(&common)?;
            let out = cmd_train(&cfg)?;
            println!("model written to {}", out.model_path.display());
            print_rows(&[out.row]);
        }
        Command::Eval { common, model } => {
            let cfg = load(&common)?;
            print_rows(&[cmd_eval(&cfg, &model)?]);
        }
        Command::Sweep { common, reeval, jobs } => {
            let mut cfg = load(&common)?;
            if let Some(j) = jobs {
                cfg = cfg.with_jobs(j)?;
            }
            let out = cmd_sweep(&cfg, reeval)?;
            println!(
                "{} configurations trained, {} failed, {} on the Pareto front",
                out.rows.len(),
                out.failures,
                out.pareto.len()
            );
            print_rows(&out.pareto);
            if out.rows.is_empty() {
                return Ok(EXIT_RUNTIME);
            }
        }
        Command::EmitSmt { common, model, script } => {
            let cfg = load(&common)?;
            let path = script.unwrap_or_else(|| cfg.out.join("query.smt2"));
            cmd_emit_smt(&cfg, &model, &path)?;
            println!("query written to {}", path.display());
        }
        Command::Verify {
            common,
            model,
            solver_cmd,
        } => {
            let cfg = load(&common)?;
            let out = cmd_verify(&cfg, &model, &solver_cmd)?;
            let secs = out.elapsed.as_secs_f64();
            return Ok(match &out.verdict {
                Verdict::Unsat => {
                    println!("unsat ({secs:.3} s): the property holds");
                    EXIT_OK
                }
                Verdict::Sat(_) => {
                    println!("sat ({secs:.3} s): the property is violated");
                    if let Some((s0, step)) = &out.counterexample {
                        println!("counterexample start state: {s0:?}");
                        match step {
                            Some(t) => println!("replay leaves the bound at step {t}"),
                            None => println!("replay stays within the bound (boundary case)"),
                        }
                    }
                    EXIT_VIOLATED
                }
                Verdict::Unknown => {
                    println!("unknown ({secs:.3} s)");
                    EXIT_RUNTIME
                }
            });
        }
        Command::GridworldTable { common, from, to } => {
            let cfg = load(&common)?;
            if from > to {
                return Err(CliError::config(format!("empty size range {from}..={to}")));
            }
            let sizes: Vec<usize> = (from..=to).collect();
            let protocol = TableProtocol::default().with_seed(cfg.seed);
            let rows = cmd_gridworld_table(&sizes, &protocol, &cfg.out)?;
            print!("{}", table::table_text(&rows));
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
