//! Accuracy, accuracy-versus-length curves, LE-AUC, the addition error taxonomy and
//! steps-to-target.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::predictor::Predictor;
use crate::seeds::derive_seed;
use crate::tasks::{addition_operands, count_carries_decimal, labelled_examples, Example, Task};
use crate::verify::{normalize_whitespace, verify_exact};

/// Fraction of examples whose greedy prediction passes the exact verifier.
pub fn exact_match_accuracy(
    predictor: &dyn Predictor,
    task: &dyn Task,
    examples: &[Example],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(CoreError::Input("accuracy of an empty example list".into()));
    }
    let inputs: Vec<String> = examples.iter().map(|e| e.input.clone()).collect();
    let predictions = predictor.predict(task, &inputs)?;
    let mut correct = 0usize;
    for (ex, p) in examples.iter().zip(&predictions) {
        if verify_exact(task, &ex.input, &p.output)?.passed {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthPoint {
    pub length: usize,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthCurve {
    points: Vec<LengthPoint>,
}

impl LengthCurve {
    /// Points must have strictly increasing lengths, accuracies in `[0, 1]` and `n >= 1`.
    pub fn new(points: Vec<LengthPoint>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].length <= w[0].length {
                return Err(CoreError::Input(format!(
                    "curve lengths must increase strictly ({} then {})",
                    w[0].length, w[1].length
                )));
            }
        }
        for p in &points {
            if !(0.0..=1.0).contains(&p.accuracy) || p.n == 0 {
                return Err(CoreError::Input(format!("invalid curve point {p:?}")));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[LengthPoint] {
        &self.points
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.accuracy).collect()
    }
}

/// Mean accuracy over the curve's lengths.
pub fn le_auc(curve: &LengthCurve) -> Result<f64> {
    mean_accuracy(&curve.accuracies())
}

/// Mean of per-length accuracies; the curve-free form of [`le_auc`].
pub fn mean_accuracy(accuracies: &[f64]) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(CoreError::Input("LE-AUC of an empty curve".into()));
    }
    Ok(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

/// Accuracy at each length on `n_per_length` fresh examples of exactly that difficulty.
/// Lengths must all exceed `training_max`.
pub fn build_length_curve(
    predictor: &dyn Predictor,
    task: &dyn Task,
    lengths: &[usize],
    n_per_length: usize,
    seed: u64,
    training_max: usize,
) -> Result<LengthCurve> {
    if n_per_length == 0 {
        return Err(CoreError::Config("n_per_length must be at least 1".into()));
    }
    if let Some(&bad) = lengths.iter().find(|&&l| l <= training_max) {
        return Err(CoreError::Config(format!(
            "evaluation length {bad} is not beyond the training maximum {training_max}"
        )));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut points = Vec::with_capacity(sorted.len());
    let mut all = Vec::new();
    for &l in &sorted {
        all.extend(labelled_examples(
            task,
            l,
            l,
            n_per_length,
            derive_seed(seed, "curve", l as u64),
        )?);
    }
    let inputs: Vec<String> = all.iter().map(|e| e.input.clone()).collect();
    let predictions = predictor.predict(task, &inputs)?;
    for (i, &l) in sorted.iter().enumerate() {
        let span = i * n_per_length..(i + 1) * n_per_length;
        let correct = all[span.clone()]
            .iter()
            .zip(&predictions[span])
            .filter(|(e, p)| normalize_whitespace(&p.output) == normalize_whitespace(&e.target))
            .count();
        points.push(LengthPoint {
            length: l,
            accuracy: correct as f64 / n_per_length as f64,
            n: n_per_length,
        });
    }
    LengthCurve::new(points)
}

/// Worst-case binomial standard error of an accuracy measured on `n` samples.
pub fn max_standard_error(n: usize) -> f64 {
    0.5 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    SingleCarry,
    MultiCarry,
    LengthMismatch,
    Other,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 4] = [
        ErrorClass::SingleCarry,
        ErrorClass::MultiCarry,
        ErrorClass::LengthMismatch,
        ErrorClass::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::SingleCarry => "single_carry",
            ErrorClass::MultiCarry => "multi_carry",
            ErrorClass::LengthMismatch => "length_mismatch",
            ErrorClass::Other => "other",
        }
    }
}

/// Length mismatch first, then by the number of carries the sum needs.
pub fn classify_addition_error(
    input: &str,
    wrong_prediction: &str,
    correct_target: &str,
) -> Result<ErrorClass> {
    let wrong = normalize_whitespace(wrong_prediction);
    let correct = normalize_whitespace(correct_target);
    if wrong == correct {
        return Err(CoreError::Usage(format!(
            "prediction {wrong_prediction:?} for {input:?} is correct"
        )));
    }
    if wrong.chars().count() != correct.chars().count() {
        return Ok(ErrorClass::LengthMismatch);
    }
    let (a, b) = addition_operands(input)?;
    Ok(match count_carries_decimal(a, b) {
        0 => ErrorClass::Other,
        1 => ErrorClass::SingleCarry,
        _ => ErrorClass::MultiCarry,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyCount {
    pub round: usize,
    pub single_carry: usize,
    pub multi_carry: usize,
    pub length_mismatch: usize,
    pub other: usize,
}

impl TaxonomyCount {
    pub fn new(round: usize) -> Self {
        Self {
            round,
            ..Self::default()
        }
    }

    pub fn record(&mut self, class: ErrorClass) {
        *self.slot(class) += 1;
    }

    pub fn get(&self, class: ErrorClass) -> usize {
        match class {
            ErrorClass::SingleCarry => self.single_carry,
            ErrorClass::MultiCarry => self.multi_carry,
            ErrorClass::LengthMismatch => self.length_mismatch,
            ErrorClass::Other => self.other,
        }
    }

    fn slot(&mut self, class: ErrorClass) -> &mut usize {
        match class {
            ErrorClass::SingleCarry => &mut self.single_carry,
            ErrorClass::MultiCarry => &mut self.multi_carry,
            ErrorClass::LengthMismatch => &mut self.length_mismatch,
            ErrorClass::Other => &mut self.other,
        }
    }

    pub fn total(&self) -> usize {
        self.single_carry + self.multi_carry + self.length_mismatch + self.other
    }

    /// Classifies every `(input, wrong prediction, correct target)` triple.
    pub fn from_failures<'a>(
        round: usize,
        failures: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    ) -> Result<Self> {
        let mut t = Self::new(round);
        for (input, wrong, correct) in failures {
            t.record(classify_addition_error(input, wrong, correct)?);
        }
        Ok(t)
    }
}

/// First cumulative step count whose recorded LE-AUC reaches `target`.
/// `history` holds `(steps, le_auc)` pairs in step order. A non-positive target is reached at step 0.
pub fn steps_to_target(history: &[(u64, f64)], target: f64) -> Option<u64> {
    if target <= 0.0 {
        return Some(0);
    }
    history.iter().find(|(_, v)| *v >= target).map(|&(s, _)| s)
}
