//! The CEDC scheduler and the baselines, behind one trait and a name registry.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::predictor::Predictor;
use crate::seeds::derive_seed;
use crate::tasks::{generate, labelled_examples, Example, GeneratorSpec, Task};
use crate::verify::VerifierSpec;

use super::mining::{mine_counterexamples, FailedPrediction, ProxyStats};
use super::novelty::filter_novel;

/// What a scheduler sees when choosing a round's additions.
pub struct RoundContext<'a> {
    pub round: usize,
    pub task: &'a dyn Task,
    pub predictor: &'a dyn Predictor,
    pub dataset: &'a [Example],
    pub pool_size: usize,
    pub generator: GeneratorSpec,
    pub initial_max: usize,
    pub verifier: VerifierSpec,
    pub diversity_threshold: f64,
    pub ngram_n: usize,
    pub spl_growth: f64,
    /// Seed of this round's candidate stream.
    pub seed: u64,
}

impl RoundContext<'_> {
    fn pool(&self) -> Result<Vec<String>> {
        generate(
            &self.generator,
            self.round,
            self.pool_size,
            derive_seed(self.seed, "pool", 0),
        )
    }

    fn labelled_pool(&self) -> Result<(Vec<Example>, usize)> {
        let mut skipped = 0;
        let mut out = Vec::with_capacity(self.pool_size);
        for input in self.pool()? {
            match Example::labelled(self.task, input) {
                Ok(e) => out.push(e),
                Err(_) => skipped += 1,
            }
        }
        Ok((out, skipped))
    }
}

/// A round's dataset additions and the bookkeeping behind them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundAdditions {
    pub examples: Vec<Example>,
    pub pool_size: usize,
    /// Candidates chosen by the scheduler's rule before the novelty filter
    /// (verification failures for CEDC).
    pub failures: usize,
    pub duplicates: usize,
    pub skipped: usize,
    /// Every failed prediction on the pool, for schedulers that predict.
    pub failed: Option<Vec<FailedPrediction>>,
    pub proxy: Option<ProxyStats>,
}

pub trait Scheduler: Send {
    fn name(&self) -> &'static str;

    fn additions(&mut self, ctx: &RoundContext<'_>) -> Result<RoundAdditions>;
}

/// Mine the model's failures on a fresh pool and keep the novel ones.
#[derive(Debug, Default)]
pub struct Cedc;

impl Scheduler for Cedc {
    fn name(&self) -> &'static str {
        "cedc"
    }

    fn additions(&mut self, ctx: &RoundContext<'_>) -> Result<RoundAdditions> {
        let pool = ctx.pool()?;
        let mined = mine_counterexamples(&pool, ctx.task, ctx.predictor, &ctx.verifier)?;
        let novel = filter_novel(
            &mined.examples,
            ctx.dataset,
            ctx.diversity_threshold,
            ctx.ngram_n,
        )?;
        Ok(RoundAdditions {
            pool_size: pool.len(),
            failures: mined.examples.len(),
            duplicates: novel.duplicates,
            skipped: mined.skipped,
            examples: novel.kept,
            failed: Some(mined.failures),
            proxy: mined.proxy,
        })
    }
}

/// Never adds anything.
#[derive(Debug, Default)]
pub struct Static;

impl Scheduler for Static {
    fn name(&self) -> &'static str {
        "static"
    }

    fn additions(&mut self, _ctx: &RoundContext<'_>) -> Result<RoundAdditions> {
        Ok(RoundAdditions::default())
    }
}

/// Adds the whole fresh pool, labelled, without looking at the model.
#[derive(Debug, Default)]
pub struct UniformSg;

impl Scheduler for UniformSg {
    fn name(&self) -> &'static str {
        "uniform-sg"
    }

    fn additions(&mut self, ctx: &RoundContext<'_>) -> Result<RoundAdditions> {
        let (examples, skipped) = ctx.labelled_pool()?;
        Ok(RoundAdditions {
            pool_size: ctx.pool_size,
            failures: examples.len(),
            skipped,
            examples,
            ..Default::default()
        })
    }
}

/// Fixed length stages: round `t` adds examples with difficulty up to `initial_max + t * slope`.
#[derive(Debug, Default)]
pub struct StandardCl;

impl StandardCl {
    pub fn stage_cap(initial_max: usize, slope: usize, round: usize) -> usize {
        initial_max + round * slope
    }
}

impl Scheduler for StandardCl {
    fn name(&self) -> &'static str {
        "standard-cl"
    }

    fn additions(&mut self, ctx: &RoundContext<'_>) -> Result<RoundAdditions> {
        let cap = Self::stage_cap(ctx.initial_max, ctx.generator.round_slope, ctx.round);
        let examples = labelled_examples(
            ctx.task,
            ctx.task.min_difficulty(),
            cap,
            ctx.pool_size,
            derive_seed(ctx.seed, "stage", 0),
        )?;
        Ok(RoundAdditions {
            pool_size: ctx.pool_size,
            failures: examples.len(),
            examples,
            ..Default::default()
        })
    }
}

/// Self-paced learning: keep fresh examples whose current loss is at most `λ_t = λ_0 γ^t`,
/// with `λ_0` the median pool loss the first time it runs.
#[derive(Debug, Default)]
pub struct SelfPaced {
    lambda0: Option<f64>,
    fixed: Option<f64>,
}

impl SelfPaced {
    pub fn with_threshold(lambda: f64) -> Self {
        Self {
            lambda0: None,
            fixed: Some(lambda),
        }
    }

    pub fn lambda0(&self) -> Option<f64> {
        self.lambda0
    }
}

impl Scheduler for SelfPaced {
    fn name(&self) -> &'static str {
        "spl"
    }

    fn additions(&mut self, ctx: &RoundContext<'_>) -> Result<RoundAdditions> {
        let (pool, skipped) = ctx.labelled_pool()?;
        if pool.is_empty() {
            return Ok(RoundAdditions {
                pool_size: ctx.pool_size,
                skipped,
                ..Default::default()
            });
        }
        let inputs: Vec<String> = pool.iter().map(|e| e.input.clone()).collect();
        let targets: Vec<String> = pool.iter().map(|e| e.target.clone()).collect();
        let losses: Vec<f64> = ctx
            .predictor
            .score(ctx.task, &inputs, &targets)?
            .iter()
            .map(|s| s.mean_nll)
            .collect();
        let lambda = match self.fixed {
            Some(l) => l,
            None => {
                let l0 = *self.lambda0.get_or_insert_with(|| median(&losses));
                l0 * ctx.spl_growth.powi(ctx.round as i32)
            }
        };
        let examples: Vec<Example> = pool
            .into_iter()
            .zip(&losses)
            .filter(|(_, &l)| l <= lambda)
            .map(|(e, _)| e)
            .collect();
        Ok(RoundAdditions {
            pool_size: ctx.pool_size,
            failures: examples.len(),
            skipped,
            examples,
            ..Default::default()
        })
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub type SchedulerFactory = fn() -> Box<dyn Scheduler>;

/// Schedulers by name.
#[derive(Clone)]
pub struct SchedulerRegistry {
    factories: BTreeMap<&'static str, SchedulerFactory>,
}

impl Default for SchedulerRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("cedc", || Box::new(Cedc));
        r.register("static", || Box::new(Static));
        r.register("uniform-sg", || Box::new(UniformSg));
        r.register("standard-cl", || Box::new(StandardCl));
        r.register("spl", || Box::new(SelfPaced::default()));
        r
    }
}

impl SchedulerRegistry {
    pub fn register(&mut self, name: &'static str, factory: SchedulerFactory) {
        self.factories.insert(name, factory);
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn Scheduler>> {
        self.factories.get(name).map(|f| f()).ok_or_else(|| {
            CoreError::Config(format!(
                "unknown scheduler {name:?} (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}

/// Builds a scheduler from the default registry.
pub fn lookup_scheduler(name: &str) -> Result<Box<dyn Scheduler>> {
    SchedulerRegistry::default().create(name)
}
