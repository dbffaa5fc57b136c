//! Subcommand implementations. Each validates its inputs before writing
//! anything.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use moet::envs::Env;
use moet::imitation::{
    cartpole_teacher, dagger_train, evaluate_model, gridworld_teacher, mountaincar_teacher,
    pareto_front, write_ledger, EvalResult, LedgerRow, ParetoPoint, StudentLearner, Teacher,
};
use moet::verify::{encode_safety, first_violation, initial_state, run_solver, Verdict};
use moet::{load_model, save_model, InferenceMode, MoetModel};
use rayon::prelude::*;

use crate::config::{RunConfig, SweepPoint};
use crate::{io_error, CliError};

/// Offset between a run's seed and the seed of its final evaluation episodes.
const EVAL_SEED_OFFSET: u64 = 1;
/// Offset for the fresh episodes of a re-evaluation pass.
const REEVAL_SEED_OFFSET: u64 = 1_000_003;

pub fn teacher_for(env: &Env) -> Result<Box<dyn Teacher>, CliError> {
    Ok(match env {
        Env::Gridworld(spec) => Box::new(gridworld_teacher(spec)?),
        Env::CartPole(spec) => Box::new(cartpole_teacher(spec)),
        Env::MountainCar(spec) => Box::new(mountaincar_teacher(spec)),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn ledger_row(env: &Env, learner: &StudentLearner, iteration: usize, seed: u64, r: &EvalResult) -> LedgerRow {
    let (depth_actual, nodes) = r.size.unwrap_or((0, 0));
    LedgerRow {
        env: env.name().to_string(),
        learner: learner.name().to_string(),
        experts: learner.num_experts(),
        depth: learner.max_depth(),
        iteration,
        reward: r.mean_reward,
        fidelity: r.fidelity,
        nodes,
        depth_actual,
        seed,
    }
}

/// Appends rows to a CSV ledger, writing the header when the file is new.
fn append_ledger(path: &Path, rows: &[LedgerRow]) -> Result<(), CliError> {
    let fresh = !path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_error(path, e))?;
    write_ledger(file, rows, fresh).map_err(|e| io_error(path, e))
}

fn write_new_ledger(path: &Path, rows: &[LedgerRow]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    write_ledger(file, rows, true).map_err(|e| io_error(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: MoetModel,
    pub model_path: PathBuf,
    pub eval: EvalResult,
    pub row: LedgerRow,
}

fn train_one(
    cfg: &RunConfig,
    learner: &StudentLearner,
    seed: u64,
    teacher: &dyn Teacher,
) -> Result<(MoetModel, usize, EvalResult), CliError> {
    let dagger = moet::imitation::DaggerConfig {
        seed,
        ..cfg.dagger.clone()
    };
    let out = dagger_train(&cfg.env, teacher, learner, &dagger)?;
    let eval = evaluate_model(
        &cfg.env,
        &out.best,
        teacher,
        cfg.episodes,
        seed.wrapping_add(EVAL_SEED_OFFSET),
    );
    Ok((out.best, out.best_iteration, eval))
}

/// Distills the teacher, saves the best student to `<out>/model.txt` and
/// appends its evaluation to `<out>/report.csv`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput, CliError> {
    let teacher = teacher_for(&cfg.env)?;
    let (model, iteration, eval) = train_one(cfg, &cfg.learner, cfg.seed, teacher.as_ref())?;
    create_dir(&cfg.out)?;
    let model_path = cfg.out.join("model.txt");
    save_model(&model, &model_path)?;
    let row = ledger_row(&cfg.env, &cfg.learner, iteration, cfg.seed, &eval);
    append_ledger(&cfg.out.join("report.csv"), std::slice::from_ref(&row))?;
    info!(
        "{} on {}: reward {:.3}, fidelity {:.4}, size {:?}",
        cfg.learner.name(),
        cfg.env.name(),
        eval.mean_reward,
        eval.fidelity,
        eval.size
    );
    Ok(TrainOutput {
        model,
        model_path,
        eval,
        row,
    })
}

fn check_model_fits(model: &MoetModel, env: &Env) -> Result<(), CliError> {
    if model.num_features() != env.num_features() || model.num_classes() != env.num_actions() {
        return Err(CliError::config(format!(
            "model has {} features and {} actions; {} needs {} and {}",
            model.num_features(),
            model.num_classes(),
            env.name(),
            env.num_features(),
            env.num_actions()
        )));
    }
    Ok(())
}

/// Evaluates a saved model against the configured environment's teacher.
pub fn cmd_eval(cfg: &RunConfig, model_path: &Path) -> Result<LedgerRow, CliError> {
    let model = load_model(model_path)?;
    check_model_fits(&model, &cfg.env)?;
    let teacher = teacher_for(&cfg.env)?;
    let eval = evaluate_model(
        &cfg.env,
        &model,
        teacher.as_ref(),
        cfg.episodes,
        cfg.seed.wrapping_add(EVAL_SEED_OFFSET),
    );
    let depth = model.experts().iter().map(|t| t.stats().0).max().unwrap_or(0);
    let learner = match (model.num_experts(), model.mode()) {
        (1, InferenceMode::Hard) => "viper-tree",
        (_, InferenceMode::Soft) => "moet",
        _ => "moet-hard",
    };
    let (depth_actual, nodes) = eval.size.unwrap_or((0, 0));
    Ok(LedgerRow {
        env: cfg.env.name().to_string(),
        learner: learner.to_string(),
        experts: model.num_experts(),
        depth,
        iteration: 0,
        reward: eval.mean_reward,
        fidelity: eval.fidelity,
        nodes,
        depth_actual,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// One row per configuration that trained successfully, in grid order.
    pub rows: Vec<LedgerRow>,
    pub pareto: Vec<LedgerRow>,
    pub reeval: Vec<LedgerRow>,
    pub failures: usize,
}

fn point_id(p: &SweepPoint, learner: &StudentLearner) -> String {
    format!("{}-e{}-d{}-s{}", learner.name(), p.experts, p.depth, p.seed)
}

/// Trains every grid point on a pool of `cfg.jobs` workers, writes
/// `ledger.csv` and `pareto.csv`, and with `reeval` re-runs the Pareto
/// models on fresh episodes into `reeval.csv`.
pub fn cmd_sweep(cfg: &RunConfig, reeval: bool) -> Result<SweepOutput, CliError> {
    let teacher = teacher_for(&cfg.env)?;
    let models_dir = cfg.out.join("models");
    create_dir(&models_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::runtime(format!("worker pool: {e}")))?;
    let results: Vec<Option<(LedgerRow, PathBuf)>> = pool.install(|| {
        cfg.sweep
            .par_iter()
            .map(|p| {
                let learner = cfg.learner_for(p);
                let id = point_id(p, &learner);
                let run = train_one(cfg, &learner, p.seed, teacher.as_ref()).and_then(|(model, it, eval)| {
                    let path = models_dir.join(format!("{id}.txt"));
                    save_model(&model, &path)?;
                    Ok((ledger_row(&cfg.env, &learner, it, p.seed, &eval), path))
                });
                match run {
                    Ok(r) => {
                        info!("{id}: reward {:.3}, fidelity {:.4}", r.0.reward, r.0.fidelity);
                        Some(r)
                    }
                    Err(e) => {
                        warn!("{id} failed: {e}");
                        None
                    }
                }
            })
            .collect()
    });
    let failures = results.iter().filter(|r| r.is_none()).count();
    let (rows, paths): (Vec<LedgerRow>, Vec<PathBuf>) = results.into_iter().flatten().unzip();
    write_new_ledger(&cfg.out.join("ledger.csv"), &rows)?;

    let points: Vec<ParetoPoint> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| ParetoPoint {
            reward: r.reward,
            fidelity: r.fidelity,
            id: i.to_string(),
        })
        .collect();
    let front: Vec<usize> = pareto_front(&points)
        .iter()
        .map(|p| p.id.parse().expect("index id"))
        .collect();
    let pareto: Vec<LedgerRow> = front.iter().map(|&i| rows[i].clone()).collect();
    write_new_ledger(&cfg.out.join("pareto.csv"), &pareto)?;

    let mut again = Vec::new();
    if reeval {
        for &i in &front {
            let model = load_model(&paths[i])?;
            let eval = evaluate_model(
                &cfg.env,
                &model,
                teacher.as_ref(),
                cfg.episodes,
                rows[i].seed.wrapping_add(REEVAL_SEED_OFFSET),
            );
            again.push(LedgerRow {
                reward: eval.mean_reward,
                fidelity: eval.fidelity,
                ..rows[i].clone()
            });
        }
        write_new_ledger(&cfg.out.join("reeval.csv"), &again)?;
    }
    Ok(SweepOutput {
        rows,
        pareto,
        reeval: again,
        failures,
    })
}

/// Writes the safety query for a saved hard-gated model.
pub fn cmd_emit_smt(cfg: &RunConfig, model_path: &Path, out: &Path) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let script = encode_safety(&model, &cfg.verification)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(out, script.text()).map_err(|e| io_error(out, e))
}

#[derive(Debug, Clone)]
pub struct VerifyOutput {
    pub verdict: Verdict,
    pub elapsed: Duration,
    pub script_path: PathBuf,
    /// Start state of a counterexample and the first violating step in
    /// floating-point replay.
    pub counterexample: Option<(Vec<f64>, Option<usize>)>,
}

/// Emits `<out>/query.smt2`, runs the solver on it and replays any
/// counterexample.
pub fn cmd_verify(cfg: &RunConfig, model_path: &Path, solver_cmd: &str) -> Result<VerifyOutput, CliError> {
    let model = load_model(model_path)?;
    let script = encode_safety(&model, &cfg.verification)?.text();
    create_dir(&cfg.out)?;
    let script_path = cfg.out.join("query.smt2");
    fs::write(&script_path, &script).map_err(|e| io_error(&script_path, e))?;
    let run = run_solver(&script, solver_cmd, cfg.timeout)?;
    let counterexample = match &run.verdict {
        Verdict::Sat(assignment) => initial_state(assignment, model.num_features()).map(|s0| {
            let step = first_violation(&model, &cfg.verification, &s0);
            (s0, step)
        }),
        _ => None,
    };
    Ok(VerifyOutput {
        verdict: run.verdict,
        elapsed: run.elapsed,
        script_path,
        counterexample,
    })
}
