//! Predict → verify → collect over a candidate pool.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::predictor::Predictor;
use crate::tasks::{Example, Task};
use crate::verify::{
    length_quantile_threshold, normalize_whitespace, verify_proxy, VerifierKind, VerifierSpec,
};

/// A wrong (or flagged) prediction and the answer that replaces it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedPrediction {
    pub input: String,
    pub prediction: String,
    pub target: String,
}

/// Flag counts of the proxy verifier, split by whether the greedy prediction was actually wrong.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProxyStats {
    pub length_threshold: usize,
    pub flagged: usize,
    pub flagged_wrong: usize,
    pub unflagged: usize,
    pub unflagged_wrong: usize,
}

impl ProxyStats {
    /// Share of flagged items that are true errors.
    pub fn precision(&self) -> Option<f64> {
        (self.flagged > 0).then(|| self.flagged_wrong as f64 / self.flagged as f64)
    }

    pub fn unflagged_error_rate(&self) -> Option<f64> {
        (self.unflagged > 0).then(|| self.unflagged_wrong as f64 / self.unflagged as f64)
    }

    /// Error rate among flagged items over the rate among unflagged ones.
    pub fn enrichment(&self) -> Option<f64> {
        let (p, u) = (self.precision()?, self.unflagged_error_rate()?);
        Some(if u == 0.0 {
            if p > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        } else {
            p / u
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CounterExampleSet {
    /// Failing pool items with their corrected targets, in pool order.
    pub examples: Vec<Example>,
    pub failures: Vec<FailedPrediction>,
    /// Pool items the oracle could not parse.
    pub skipped: usize,
    pub proxy: Option<ProxyStats>,
}

/// Pool items whose prediction fails verification, each paired with its oracle target.
/// Unparseable items are counted in `skipped` and otherwise ignored.
pub fn mine_counterexamples(
    pool: &[String],
    task: &dyn Task,
    predictor: &dyn Predictor,
    verifier: &VerifierSpec,
) -> Result<CounterExampleSet> {
    let mut set = CounterExampleSet::default();
    let mut labelled = Vec::with_capacity(pool.len());
    for input in pool {
        match Example::labelled(task, input.clone()) {
            Ok(ex) => labelled.push(ex),
            Err(_) => set.skipped += 1,
        }
    }
    if labelled.is_empty() {
        return Ok(set);
    }
    let inputs: Vec<String> = labelled.iter().map(|e| e.input.clone()).collect();
    let predictions = predictor.predict(task, &inputs)?;
    let wrong: Vec<bool> = labelled
        .iter()
        .zip(&predictions)
        .map(|(e, p)| normalize_whitespace(&p.output) != normalize_whitespace(&e.target))
        .collect();
    let flagged: Vec<bool> = match verifier.kind {
        VerifierKind::Exact => wrong.clone(),
        VerifierKind::Proxy => {
            let lengths: Vec<usize> = labelled.iter().map(|e| e.difficulty).collect();
            let threshold = length_quantile_threshold(&lengths, verifier.length_quantile)?;
            let targets: Vec<String> = labelled.iter().map(|e| e.target.clone()).collect();
            let scores = predictor.score(task, &inputs, &targets)?;
            let flagged: Vec<bool> = labelled
                .iter()
                .zip(&scores)
                .map(|(e, s)| !verify_proxy(e, s.probability, threshold, verifier).passed)
                .collect();
            let mut stats = ProxyStats {
                length_threshold: threshold,
                ..ProxyStats::default()
            };
            for (&f, &w) in flagged.iter().zip(&wrong) {
                if f {
                    stats.flagged += 1;
                    stats.flagged_wrong += w as usize;
                } else {
                    stats.unflagged += 1;
                    stats.unflagged_wrong += w as usize;
                }
            }
            set.proxy = Some(stats);
            flagged
        }
    };
    for ((ex, p), f) in labelled.into_iter().zip(predictions).zip(flagged) {
        if f {
            set.failures.push(FailedPrediction {
                input: ex.input.clone(),
                prediction: p.output,
                target: ex.target.clone(),
            });
            set.examples.push(ex);
        }
    }
    Ok(set)
}
