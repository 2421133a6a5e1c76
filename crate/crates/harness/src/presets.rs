//! Named bundles of runs.

use cedc_core::tasks::{required_seq_len, TaskKind};
use cedc_nn::PosMode;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const PRESETS: [&str; 7] = [
    "table1-desk",
    "fig1-desk",
    "fig2a-desk",
    "table3-desk",
    "table5-desk",
    "ablate-N",
    "ablate-pos",
];

pub const BASELINES: [&str; 5] = ["static", "uniform-sg", "standard-cl", "spl", "cedc"];

/// Desk-scale settings for `task` under `scheduler`. Uses ALiBi positions.
pub fn desk_config(task: TaskKind, scheduler: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.task = task;
    cfg.run.scheduler = scheduler.to_string();
    cfg.model.pos_mode = PosMode::Alibi;
    let t = task.task();
    let reach = t.generator().difficulty_range(cfg.curriculum.rounds - 1).1;
    let longest = t.extrapolation_grid().into_iter().max().unwrap_or(reach);
    cfg.model.max_seq_len = cfg
        .model
        .max_seq_len
        .max(required_seq_len(t, reach.max(longest)));
    cfg
}

/// The runs a preset consists of, as `(name, config)` pairs.
pub fn preset(name: &str) -> Result<Vec<(String, RunConfig)>> {
    let addition = |s: &str| (s.to_string(), desk_config(TaskKind::Addition, s));
    Ok(match name {
        "table1-desk" => [TaskKind::Addition, TaskKind::Sorting, TaskKind::Dyck2]
            .into_iter()
            .flat_map(|task| {
                BASELINES
                    .iter()
                    .map(move |s| (format!("{task}-{s}"), desk_config(task, s)))
            })
            .collect(),
        "fig1-desk" => ["static", "standard-cl", "cedc"]
            .into_iter()
            .map(addition)
            .collect(),
        "fig2a-desk" => {
            let (n, mut cfg) = addition("cedc");
            cfg.eval.blocks_per_round = 2;
            vec![(n, cfg)]
        }
        "table3-desk" => vec![addition("cedc")],
        "table5-desk" => ["static", "cedc"]
            .into_iter()
            .map(|s| {
                let (n, mut cfg) = addition(s);
                cfg.eval.zero_shot = vec![TaskKind::Subtraction];
                (n, cfg)
            })
            .collect(),
        "ablate-N" => [500, 5000]
            .into_iter()
            .map(|n| {
                let (_, mut cfg) = addition("cedc");
                cfg.curriculum.pool_size = n;
                (format!("pool-{n}"), cfg)
            })
            .collect(),
        "ablate-pos" => [
            PosMode::Sinusoidal,
            PosMode::Learnable,
            PosMode::None,
            PosMode::Alibi,
        ]
        .into_iter()
        .map(|p| {
            let (_, mut cfg) = addition("cedc");
            cfg.model.pos_mode = p;
            (format!("pos-{}", p.name()), cfg)
        })
        .collect(),
        other => {
            return Err(HarnessError::Config(format!(
                "unknown preset {other:?} (known: {})",
                PRESETS.join(", ")
            )))
        }
    })
}
