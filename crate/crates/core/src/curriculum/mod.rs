//! The generate → verify → collect → fine-tune loop and its baselines.

mod mining;
mod novelty;
mod schedulers;

pub use mining::{mine_counterexamples, CounterExampleSet, FailedPrediction, ProxyStats};
pub use novelty::{filter_novel, ngram_jaccard, ngram_set, NoveltyOutcome};
pub use schedulers::{
    lookup_scheduler, Cedc, RoundAdditions, RoundContext, Scheduler, SchedulerFactory,
    SchedulerRegistry, SelfPaced, StandardCl, Static, UniformSg,
};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::metrics::TaxonomyCount;
use crate::predictor::Trainable;
use crate::seeds::derive_seed;
use crate::tasks::{Example, GeneratorSpec, TaskKind};
use crate::verify::{VerifierKind, VerifierSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumParams {
    /// Rounds `T`.
    pub rounds: usize,
    /// Candidates per round `N`.
    pub pool_size: usize,
    /// Fine-tuning steps per round `K`.
    pub finetune_steps: usize,
    pub diversity_threshold: f64,
    pub ngram_n: usize,
    /// Per-round growth of the self-paced loss threshold.
    pub spl_growth: f64,
    pub verifier: VerifierSpec,
}

impl Default for CurriculumParams {
    fn default() -> Self {
        Self {
            rounds: 5,
            pool_size: 5000,
            finetune_steps: 2000,
            diversity_threshold: 0.9,
            ngram_n: 3,
            spl_growth: 1.5,
            verifier: VerifierSpec::exact(),
        }
    }
}

impl CurriculumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diversity_threshold > 0.0 && self.diversity_threshold <= 1.0) {
            return Err(CoreError::Config(format!(
                "diversity_threshold {} outside (0, 1]",
                self.diversity_threshold
            )));
        }
        if self.ngram_n == 0 {
            return Err(CoreError::Config("ngram_n must be at least 1".into()));
        }
        if self.pool_size == 0 {
            return Err(CoreError::Config("pool_size must be at least 1".into()));
        }
        if !(self.spl_growth >= 1.0) {
            return Err(CoreError::Config(format!(
                "spl_growth {} must be at least 1",
                self.spl_growth
            )));
        }
        let q = self.verifier.length_quantile;
        if !(q > 0.0 && q < 1.0) {
            return Err(CoreError::Config(format!(
                "length_quantile {q} outside (0, 1)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub scheduler: String,
    pub pool_size: usize,
    pub failures: usize,
    pub kept: usize,
    pub duplicates: usize,
    pub skipped: usize,
    pub finetune_steps: usize,
    pub mean_loss: f64,
    pub dataset_size: usize,
    pub proxy: Option<ProxyStats>,
    /// Addition with the exact verifier only: classes of the round's failures.
    pub taxonomy: Option<TaxonomyCount>,
}

/// `D_t` and the round counter of one run.
#[derive(Debug, Clone)]
pub struct CurriculumState {
    pub task: TaskKind,
    pub params: CurriculumParams,
    pub generator: GeneratorSpec,
    pub initial_max: usize,
    pub round: usize,
    pub dataset: Vec<Example>,
    pub seed: u64,
}

impl CurriculumState {
    /// Starts at round 0 from `D_0`, with the task's own generator.
    pub fn new(
        task: TaskKind,
        params: CurriculumParams,
        initial: Vec<Example>,
        initial_max: usize,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if initial.is_empty() {
            return Err(CoreError::Input("initial dataset is empty".into()));
        }
        Ok(Self {
            task,
            params,
            generator: task.task().generator(),
            initial_max,
            round: 0,
            dataset: initial,
            seed,
        })
    }

    pub fn finished(&self) -> bool {
        self.round >= self.params.rounds
    }

    /// One round: the scheduler proposes additions, `D` grows, then `K` fine-tuning steps
    /// sample uniformly from the grown dataset.
    pub fn run_round(
        &mut self,
        scheduler: &mut dyn Scheduler,
        learner: &mut dyn Trainable,
    ) -> Result<RoundLog> {
        self.run_round_in_blocks(scheduler, learner, 1, &mut |_, _| Ok(()))
    }

    /// As [`run_round`](Self::run_round), with fine-tuning split into `blocks` near-equal parts and
    /// `after_block(learner, steps_so_far_this_round)` called after each.
    pub fn run_round_in_blocks(
        &mut self,
        scheduler: &mut dyn Scheduler,
        learner: &mut dyn Trainable,
        blocks: usize,
        after_block: &mut dyn FnMut(&dyn Trainable, usize) -> Result<()>,
    ) -> Result<RoundLog> {
        if self.finished() {
            return Err(CoreError::Usage(format!(
                "all {} rounds already ran",
                self.params.rounds
            )));
        }
        let task = self.task.task();
        let ctx = RoundContext {
            round: self.round,
            task,
            predictor: &*learner,
            dataset: &self.dataset,
            pool_size: self.params.pool_size,
            generator: self.generator,
            initial_max: self.initial_max,
            verifier: self.params.verifier,
            diversity_threshold: self.params.diversity_threshold,
            ngram_n: self.params.ngram_n,
            spl_growth: self.params.spl_growth,
            seed: derive_seed(self.seed, "round", self.round as u64),
        };
        let add = scheduler.additions(&ctx)?;
        let taxonomy = match &add.failed {
            Some(failed)
                if self.task == TaskKind::Addition
                    && self.params.verifier.kind == VerifierKind::Exact =>
            {
                Some(TaxonomyCount::from_failures(
                    self.round,
                    failed
                        .iter()
                        .map(|f| (f.input.as_str(), f.prediction.as_str(), f.target.as_str())),
                )?)
            }
            _ => None,
        };
        let kept = add.examples.len();
        self.dataset.extend(add.examples);

        let k = self.params.finetune_steps;
        let blocks = blocks.clamp(1, k.max(1));
        let (mut done, mut loss_sum) = (0usize, 0.0);
        for b in 0..blocks {
            let steps = k * (b + 1) / blocks - done;
            loss_sum += learner.train_steps(task, &self.dataset, steps)? * steps as f64;
            done += steps;
            after_block(&*learner, done)?;
        }
        let log = RoundLog {
            round: self.round,
            scheduler: scheduler.name().to_string(),
            pool_size: add.pool_size,
            failures: add.failures,
            kept,
            duplicates: add.duplicates,
            skipped: add.skipped,
            finetune_steps: k,
            mean_loss: if k == 0 { 0.0 } else { loss_sum / k as f64 },
            dataset_size: self.dataset.len(),
            proxy: add.proxy,
            taxonomy,
        };
        self.round += 1;
        Ok(log)
    }
}
