//! Algorithmic tasks: seeded generators, ground-truth oracles and vocabularies.

mod arithmetic;
mod dataset;
mod dyck;
mod sorting;
mod synth;
mod vocab;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub use arithmetic::{
    add_decimal, addition_operands, count_carries, count_carries_decimal, random_operand,
    sub_decimal, Addition, Subtraction, ARITHMETIC_ALPHABET,
};
pub use dataset::{read_dataset, verify_dataset, write_dataset, DatasetViolation};
pub use dyck::{is_balanced, random_balanced, Dyck2};
pub use sorting::{parse_list, Sorting};
pub use synth::SynthClass;
pub use vocab::{Vocabulary, BOS, EOS, PAD, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Addition,
    Subtraction,
    Sorting,
    Dyck2,
    SynthClass,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Addition,
        TaskKind::Subtraction,
        TaskKind::Sorting,
        TaskKind::Dyck2,
        TaskKind::SynthClass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Addition => "addition",
            TaskKind::Subtraction => "subtraction",
            TaskKind::Sorting => "sorting",
            TaskKind::Dyck2 => "dyck2",
            TaskKind::SynthClass => "synthclass",
        }
    }

    pub fn task(self) -> &'static dyn Task {
        match self {
            TaskKind::Addition => &Addition,
            TaskKind::Subtraction => &Subtraction,
            TaskKind::Sorting => &Sorting,
            TaskKind::Dyck2 => &Dyck2,
            TaskKind::SynthClass => &SynthClass,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = TaskKind::ALL.iter().map(|k| k.name()).collect();
                CoreError::Config(format!("unknown task {s:?}; expected one of {known:?}"))
            })
    }
}

/// Looks a task up by its registered name.
pub fn lookup_task(name: &str) -> Result<&'static dyn Task> {
    Ok(name.parse::<TaskKind>()?.task())
}

/// An input/target pair with the task's length measure of the input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub input: String,
    pub target: String,
    pub difficulty: usize,
}

impl Example {
    /// Labels `input` with the task oracle.
    pub fn labelled(task: &dyn Task, input: String) -> Result<Self> {
        let target = task.oracle(&input)?;
        let difficulty = task.difficulty(&input)?;
        Ok(Self {
            input,
            target,
            difficulty,
        })
    }
}

/// Difficulty at round `t` is drawn from `Uniform(base, base + slope * t)`, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub task: TaskKind,
    pub base_difficulty: usize,
    pub round_slope: usize,
}

impl GeneratorSpec {
    pub fn difficulty_range(&self, round: usize) -> (usize, usize) {
        (
            self.base_difficulty,
            self.base_difficulty + self.round_slope * round,
        )
    }
}

pub trait Task: Send + Sync {
    fn kind(&self) -> TaskKind;

    fn name(&self) -> &'static str {
        self.kind().name()
    }

    /// Every character that may appear in an input or target.
    fn alphabet(&self) -> &'static str;

    /// One task-legal input of exactly `difficulty`.
    fn generate_one(&self, difficulty: usize, rng: &mut ChaCha8Rng) -> String;

    fn oracle(&self, input: &str) -> Result<String>;

    fn difficulty(&self, input: &str) -> Result<usize>;

    /// Upper bound on the answer length for `input`, used to cap decoding.
    fn max_answer_len(&self, input: &str) -> usize;

    /// Whether answers are streamed least-significant character first.
    fn reversed_answer(&self) -> bool {
        false
    }

    /// The characters the model reads for `input`.
    fn model_input(&self, input: &str) -> String {
        input.to_string()
    }

    fn is_classification(&self) -> bool {
        false
    }

    fn min_difficulty(&self) -> usize {
        1
    }

    /// The default round-dependent generator.
    fn generator(&self) -> GeneratorSpec;

    /// Largest difficulty in the initial training set.
    fn initial_max_difficulty(&self) -> usize;

    /// Unseen lengths used for extrapolation curves.
    fn extrapolation_grid(&self) -> Vec<usize>;

    /// Input character count at a given difficulty (an upper bound for lists).
    fn prompt_len(&self, difficulty: usize) -> usize;

    fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.alphabet()).expect("task alphabets have no repeats")
    }
}

/// Model context needed for the longest example at `difficulty`, framing included.
pub fn required_seq_len(task: &dyn Task, difficulty: usize) -> usize {
    let prompt = task.prompt_len(difficulty);
    let answer = match task.kind() {
        TaskKind::Addition => difficulty + 1,
        TaskKind::Subtraction => difficulty,
        TaskKind::Sorting => prompt,
        TaskKind::Dyck2 | TaskKind::SynthClass => 1,
    };
    prompt + answer + 3
}

/// `n` seeded inputs whose difficulties follow `spec` at `round`.
pub fn generate(spec: &GeneratorSpec, round: usize, n: usize, seed: u64) -> Result<Vec<String>> {
    if n == 0 {
        return Err(CoreError::Input("pool size must be at least 1".into()));
    }
    let task = spec.task.task();
    let (lo, hi) = spec.difficulty_range(round);
    let lo = lo.max(task.min_difficulty());
    if hi < lo {
        return Err(CoreError::Config(format!(
            "empty difficulty range {lo}..={hi}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let d = rng.gen_range(lo..=hi);
            task.generate_one(d, &mut rng)
        })
        .collect())
}

/// Oracle-labelled examples with difficulties drawn uniformly from `lo..=hi`.
pub fn labelled_examples(
    task: &dyn Task,
    lo: usize,
    hi: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Example>> {
    let lo = lo.max(task.min_difficulty());
    if hi < lo {
        return Err(CoreError::Config(format!(
            "empty difficulty range {lo}..={hi}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let d = rng.gen_range(lo..=hi);
            Example::labelled(task, task.generate_one(d, &mut rng))
        })
        .collect()
}

/// The verified starting dataset: `n` examples of difficulty at most `max_difficulty`.
pub fn make_initial_dataset(
    task: &dyn Task,
    n: usize,
    max_difficulty: usize,
    seed: u64,
) -> Result<Vec<Example>> {
    if n == 0 {
        return Err(CoreError::Input(
            "initial dataset size must be at least 1".into(),
        ));
    }
    labelled_examples(task, task.min_difficulty(), max_difficulty, n, seed)
}
