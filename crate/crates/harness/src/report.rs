//! Run reports and their on-disk forms: `report.json` plus CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cedc_core::curriculum::RoundLog;
use cedc_core::metrics::{LengthCurve, TaxonomyCount};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Mean and sample standard deviation, always alongside the per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / n
        };
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { values, mean, sd }
    }
}

/// One LE-AUC measurement taken during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    /// Rounds completed (0 = after training on `D_0`).
    pub round: usize,
    /// Fine-tuning steps since the end of pretraining.
    pub steps: u64,
    pub le_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub in_distribution_accuracy: f64,
    pub le_auc: f64,
    pub curve: LengthCurve,
    /// LE-AUC on the history sample after pretraining and after each round.
    pub round_le_auc: Vec<f64>,
    pub history: Vec<HistoryPoint>,
    pub steps_to_target: Option<u64>,
    pub rounds: Vec<RoundLog>,
    pub taxonomy: Vec<TaxonomyCount>,
    pub proxy_precision: Vec<Option<f64>>,
    pub zero_shot: BTreeMap<String, f64>,
    pub final_dataset_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub task: String,
    pub scheduler: String,
    pub lengths: Vec<usize>,
    pub n_per_length: usize,
    /// Worst-case binomial standard error of each curve point.
    pub standard_error_bound: f64,
    pub le_auc_method: String,
    pub target_le_auc: f64,
    pub seeds: Vec<SeedReport>,
    pub in_distribution_accuracy: Summary,
    pub le_auc: Summary,
    pub zero_shot: BTreeMap<String, Summary>,
}

impl RunReport {
    pub fn seed(&self, seed: u64) -> Option<&SeedReport> {
        self.seeds.iter().find(|s| s.seed == seed)
    }

    /// Per-length accuracy averaged over seeds.
    pub fn mean_curve(&self) -> Vec<(usize, f64, usize)> {
        self.lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let accs: Vec<f64> = self
                    .seeds
                    .iter()
                    .map(|s| s.curve.points()[i].accuracy)
                    .collect();
                let n = self.seeds.iter().map(|s| s.curve.points()[i].n).sum();
                (l, accs.iter().sum::<f64>() / accs.len() as f64, n)
            })
            .collect()
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text)?;
    Ok(path)
}

fn curve_csv(rows: impl Iterator<Item = (usize, f64, usize)>) -> String {
    let mut s = String::from("length,accuracy,n\n");
    for (l, a, n) in rows {
        writeln!(s, "{l},{a},{n}").expect("string write");
    }
    s
}

/// Writes `report.json` and the CSV tables into `dir`; returns the paths written.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = vec![write(
        dir.join("report.json"),
        &(serde_json::to_string_pretty(report)? + "\n"),
    )?];
    out.push(write(
        dir.join("curve_mean.csv"),
        &curve_csv(report.mean_curve().into_iter()),
    )?);
    let mut rounds = String::from("seed,round,steps,le_auc\n");
    let mut logs = String::from(
        "seed,round,pool_size,failures,kept,duplicates,skipped,dataset_size,mean_loss\n",
    );
    let mut taxonomy =
        String::from("seed,round,single_carry,multi_carry,length_mismatch,other,total\n");
    for s in &report.seeds {
        let points = s.curve.points().iter().map(|p| (p.length, p.accuracy, p.n));
        out.push(write(
            dir.join(format!("curve_seed{}.csv", s.seed)),
            &curve_csv(points),
        )?);
        for h in &s.history {
            writeln!(rounds, "{},{},{},{}", s.seed, h.round, h.steps, h.le_auc)
                .expect("string write");
        }
        for r in &s.rounds {
            writeln!(
                logs,
                "{},{},{},{},{},{},{},{},{}",
                s.seed,
                r.round,
                r.pool_size,
                r.failures,
                r.kept,
                r.duplicates,
                r.skipped,
                r.dataset_size,
                r.mean_loss
            )
            .expect("string write");
        }
        for t in &s.taxonomy {
            writeln!(
                taxonomy,
                "{},{},{},{},{},{},{}",
                s.seed,
                t.round,
                t.single_carry,
                t.multi_carry,
                t.length_mismatch,
                t.other,
                t.total()
            )
            .expect("string write");
        }
    }
    out.push(write(dir.join("history.csv"), &rounds)?);
    out.push(write(dir.join("rounds.csv"), &logs)?);
    if report.seeds.iter().any(|s| !s.taxonomy.is_empty()) {
        out.push(write(dir.join("taxonomy.csv"), &taxonomy)?);
    }
    Ok(out)
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(HarnessError::from)
}
