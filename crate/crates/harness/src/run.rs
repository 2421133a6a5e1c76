//! End-to-end runs: train on `D_0`, run the scheduler's rounds, evaluate, persist.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use cedc_core::curriculum::{CurriculumState, SchedulerRegistry};
use cedc_core::metrics::{
    build_length_curve, exact_match_accuracy, le_auc, max_standard_error, steps_to_target,
};
use cedc_core::predictor::{Learner, Predictor, Trainable};
use cedc_core::seeds::derive_seed;
use cedc_core::tasks::{labelled_examples, make_initial_dataset, write_dataset, Task};
use cedc_nn::OptimizerConfig;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::report::{emit_report, HistoryPoint, RunReport, SeedReport, Summary};

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Empties (with `overwrite`) or creates `dir`, then drops the incomplete-run marker in it.
pub fn prepare_out_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        if !overwrite {
            return Err(HarnessError::OutputExists(dir.to_path_buf()));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(INCOMPLETE_MARKER),
        "run started; rerun with --overwrite to start over\n",
    )?;
    Ok(())
}

/// Accuracy on fresh examples of `task` from its initial difficulty range, with no training.
pub fn zero_shot_eval(
    predictor: &dyn Predictor,
    task: &dyn Task,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let examples = labelled_examples(
        task,
        task.min_difficulty(),
        task.initial_max_difficulty(),
        n,
        seed,
    )?;
    Ok(exact_match_accuracy(predictor, task, &examples)?)
}

/// [`zero_shot_eval`] of a saved model.
pub fn zero_shot_checkpoint(
    checkpoint: &Path,
    task: &dyn Task,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let (learner, _) = Learner::load_checkpoint(checkpoint, OptimizerConfig::default(), seed)?;
    zero_shot_eval(&learner, task, n, seed)
}

/// Runs every seed of `cfg` into `out/seed-<s>/` and writes the report into `out`.
pub fn run_experiment(
    cfg: &RunConfig,
    name: &str,
    out: &Path,
    overwrite: bool,
) -> Result<RunReport> {
    cfg.validate()?;
    prepare_out_dir(out, overwrite)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let seeds = cfg
        .run
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, s, &out.join(format!("seed-{s}"))))
        .collect::<Result<Vec<_>>>()?;
    let report = assemble(cfg, name, seeds);
    emit_report(&report, out)?;
    fs::remove_file(out.join(INCOMPLETE_MARKER))?;
    Ok(report)
}

fn assemble(cfg: &RunConfig, name: &str, seeds: Vec<SeedReport>) -> RunReport {
    let mut zero_shot = BTreeMap::new();
    for kind in &cfg.eval.zero_shot {
        let values = seeds.iter().map(|s| s.zero_shot[kind.name()]).collect();
        zero_shot.insert(kind.name().to_string(), Summary::of(values));
    }
    RunReport {
        name: name.to_string(),
        task: cfg.run.task.name().to_string(),
        scheduler: cfg.run.scheduler.clone(),
        lengths: cfg.lengths(),
        n_per_length: cfg.eval.n_per_length,
        standard_error_bound: max_standard_error(cfg.eval.n_per_length),
        le_auc_method: "mean of per-length accuracies over the evaluation grid".into(),
        target_le_auc: cfg.eval.target_le_auc,
        in_distribution_accuracy: Summary::of(
            seeds.iter().map(|s| s.in_distribution_accuracy).collect(),
        ),
        le_auc: Summary::of(seeds.iter().map(|s| s.le_auc).collect()),
        zero_shot,
        seeds,
    }
}

fn checkpoint_meta(cfg: &RunConfig, seed: u64, round: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("task".to_string(), cfg.run.task.name().to_string()),
        ("scheduler".to_string(), cfg.run.scheduler.clone()),
        ("seed".to_string(), seed.to_string()),
        ("round".to_string(), round.to_string()),
    ])
}

/// One seed of a run; everything it writes lives under `dir`.
pub fn run_seed(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<SeedReport> {
    let kind = cfg.run.task;
    let task = kind.task();
    let initial_max = cfg.initial_max();
    let lengths = cfg.lengths();
    let data_dir = dir.join("datasets");
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&data_dir)?;
    if cfg.eval.checkpoints {
        fs::create_dir_all(&ckpt_dir)?;
    }

    let mut learner = Learner::new(
        cfg.model.clone(),
        cfg.optimizer.clone(),
        task.vocabulary(),
        derive_seed(seed, "init", 0),
    )?;
    let d0 = make_initial_dataset(
        task,
        cfg.run.initial_size,
        initial_max,
        derive_seed(seed, "d0", 0),
    )?;
    write_dataset(&data_dir.join("d0.jsonl"), &d0)?;
    learner.train_steps(task, &d0, cfg.run.pretrain_steps)?;

    let history_seed = derive_seed(seed, "history", 0);
    let probe = |p: &dyn Predictor| -> cedc_core::Result<f64> {
        le_auc(&build_length_curve(
            p,
            task,
            &lengths,
            cfg.eval.history_n_per_length,
            history_seed,
            initial_max,
        )?)
    };
    let pretrained = learner.steps_taken();
    let mut history = vec![HistoryPoint {
        round: 0,
        steps: 0,
        le_auc: probe(&learner)?,
    }];
    let mut round_le_auc = vec![history[0].le_auc];

    let mut state = CurriculumState::new(
        kind,
        cfg.curriculum,
        d0,
        initial_max,
        derive_seed(seed, "curriculum", 0),
    )?;
    let mut scheduler = SchedulerRegistry::default().create(&cfg.run.scheduler)?;
    let mut rounds = Vec::new();
    let mut log_file = OpenOptions::new()
        .create(true)
        .truncate(true)
        .write(true)
        .open(dir.join("rounds.jsonl"))?;
    while !state.finished() {
        let before = state.dataset.len();
        let round = state.round + 1;
        let mut points = Vec::new();
        let log = state.run_round_in_blocks(
            scheduler.as_mut(),
            &mut learner,
            cfg.eval.blocks_per_round,
            &mut |l: &dyn Trainable, _| {
                points.push(HistoryPoint {
                    round,
                    steps: l.steps_taken() - pretrained,
                    le_auc: probe(l)?,
                });
                Ok(())
            },
        )?;
        round_le_auc.push(points.last().expect("at least one block").le_auc);
        history.extend(points);
        write_dataset(
            &data_dir.join(format!("round-{}.jsonl", log.round)),
            &state.dataset[before..],
        )?;
        serde_json::to_writer(&mut log_file, &log)?;
        log_file.write_all(b"\n")?;
        if cfg.eval.checkpoints {
            learner.save_checkpoint(
                &ckpt_dir.join(format!("round-{}.ckpt", log.round)),
                &checkpoint_meta(cfg, seed, &log.round.to_string()),
            )?;
        }
        rounds.push(log);
    }
    write_dataset(&data_dir.join("final.jsonl"), &state.dataset)?;
    if cfg.eval.checkpoints {
        learner.save_checkpoint(
            &ckpt_dir.join("final.ckpt"),
            &checkpoint_meta(cfg, seed, "final"),
        )?;
    }

    let curve = build_length_curve(
        &learner,
        task,
        &lengths,
        cfg.eval.n_per_length,
        derive_seed(seed, "final", 0),
        initial_max,
    )?;
    let in_dist = labelled_examples(
        task,
        task.min_difficulty(),
        initial_max,
        cfg.eval.in_distribution_size,
        derive_seed(seed, "in-distribution", 0),
    )?;
    let mut zero_shot = BTreeMap::new();
    for k in &cfg.eval.zero_shot {
        let acc = zero_shot_eval(
            &learner,
            k.task(),
            cfg.eval.zero_shot_size,
            derive_seed(seed, "zero-shot", 0),
        )?;
        zero_shot.insert(k.name().to_string(), acc);
    }
    let pairs: Vec<(u64, f64)> = history.iter().map(|h| (h.steps, h.le_auc)).collect();
    Ok(SeedReport {
        seed,
        in_distribution_accuracy: exact_match_accuracy(&learner, task, &in_dist)?,
        le_auc: le_auc(&curve)?,
        curve,
        round_le_auc,
        steps_to_target: steps_to_target(&pairs, cfg.eval.target_le_auc),
        taxonomy: rounds.iter().filter_map(|r| r.taxonomy).collect(),
        proxy_precision: rounds
            .iter()
            .map(|r| r.proxy.and_then(|p| p.precision()))
            .collect(),
        rounds,
        history,
        zero_shot,
        final_dataset_size: state.dataset.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub pool_size: usize,
    pub le_auc: Summary,
    /// Per seed, per round.
    pub duplicates: Vec<Vec<usize>>,
}

/// One CEDC run per pool size with otherwise identical settings, under `out/pool-<N>/`.
pub fn ablation_pool_size(
    base: &RunConfig,
    sizes: &[usize],
    out: &Path,
    overwrite: bool,
) -> Result<Vec<AblationRow>> {
    if sizes.len() < 2 {
        return Err(HarnessError::Config(
            "a pool-size ablation needs at least two sizes".into(),
        ));
    }
    prepare_out_dir(out, overwrite)?;
    let mut rows = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.run.scheduler = "cedc".into();
        cfg.curriculum.pool_size = n;
        let name = format!("{i}-pool-{n}");
        let report = run_experiment(&cfg, &name, &out.join(&name), true)?;
        rows.push(AblationRow {
            pool_size: n,
            le_auc: report.le_auc.clone(),
            duplicates: report
                .seeds
                .iter()
                .map(|s| s.rounds.iter().map(|r| r.duplicates).collect())
                .collect(),
        });
    }
    fs::write(
        out.join("ablation.json"),
        serde_json::to_string_pretty(&rows)? + "\n",
    )?;
    fs::remove_file(out.join(INCOMPLETE_MARKER))?;
    Ok(rows)
}
