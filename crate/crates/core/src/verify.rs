//! Exact (oracle) and proxy (confidence + length) verifiers.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tasks::{Example, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifierKind {
    Exact,
    Proxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifierSpec {
    pub kind: VerifierKind,
    /// Proxy only: flag when the gold label's probability is below this.
    pub confidence_threshold: f64,
    /// Proxy only: flag only inputs longer than this quantile of the pool's lengths.
    pub length_quantile: f64,
}

impl Default for VerifierSpec {
    fn default() -> Self {
        Self::exact()
    }
}

impl VerifierSpec {
    pub fn exact() -> Self {
        Self {
            kind: VerifierKind::Exact,
            confidence_threshold: 0.5,
            length_quantile: 0.75,
        }
    }

    pub fn proxy() -> Self {
        Self {
            kind: VerifierKind::Proxy,
            ..Self::exact()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub passed: bool,
    /// The answer to train on when the check fails.
    pub correct_target: Option<String>,
}

/// Trims both ends and collapses internal whitespace runs to one space.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Passes iff the prediction equals the oracle answer up to whitespace normalization.
/// A malformed input is an error, never a pass.
pub fn verify_exact(task: &dyn Task, input: &str, prediction: &str) -> Result<Verdict> {
    let truth = task.oracle(input)?;
    if normalize_whitespace(prediction) == normalize_whitespace(&truth) {
        Ok(Verdict {
            passed: true,
            correct_target: None,
        })
    } else {
        Ok(Verdict {
            passed: false,
            correct_target: Some(truth),
        })
    }
}

/// Flags a failure iff the gold label is unlikely under the model and the input is long.
/// The gold label is taken as the correction.
pub fn verify_proxy(
    example: &Example,
    gold_probability: f64,
    length_threshold: usize,
    spec: &VerifierSpec,
) -> Verdict {
    let flagged =
        gold_probability < spec.confidence_threshold && example.difficulty > length_threshold;
    if flagged {
        Verdict {
            passed: false,
            correct_target: Some(example.target.clone()),
        }
    } else {
        Verdict {
            passed: true,
            correct_target: None,
        }
    }
}

/// Nearest-rank quantile: the smallest length `L` with at least `q * N` items `<= L`.
pub fn length_quantile_threshold(lengths: &[usize], q: f64) -> Result<usize> {
    if lengths.is_empty() {
        return Err(CoreError::Input("quantile of an empty list".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(CoreError::Input(format!("quantile {q} outside (0, 1)")));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{Addition, Dyck2, Sorting};

    #[test]
    fn exact_verdicts() {
        assert!(verify_exact(&Addition, "123+456", "579").unwrap().passed);
        let v = verify_exact(&Addition, "123+456", "578").unwrap();
        assert_eq!(
            v,
            Verdict {
                passed: false,
                correct_target: Some("579".into())
            }
        );
        let v = verify_exact(&Dyck2, "(()", "1").unwrap();
        assert_eq!(v.correct_target.as_deref(), Some("0"));
        assert!(verify_exact(&Addition, "12+x", "12").is_err());
    }

    #[test]
    fn whitespace_is_normalized_but_nothing_else() {
        assert!(
            verify_exact(&Sorting, "[2, 1]", " [1,  2] ")
                .unwrap()
                .passed
        );
        assert!(!verify_exact(&Sorting, "[2, 1]", "[1,2]").unwrap().passed);
        assert!(!verify_exact(&Addition, "1+1", "02").unwrap().passed);
    }

    fn ex(len: usize) -> Example {
        Example {
            input: "1".repeat(len),
            target: "2".into(),
            difficulty: len,
        }
    }

    #[test]
    fn proxy_gates() {
        let spec = VerifierSpec::proxy();
        assert!(verify_proxy(&ex(40), 0.9, 10, &spec).passed);
        assert!(verify_proxy(&ex(3), 0.3, 10, &spec).passed);
        let v = verify_proxy(&ex(40), 0.3, 10, &spec);
        assert!(!v.passed);
        assert_eq!(v.correct_target.as_deref(), Some("2"));
    }

    #[test]
    fn nearest_rank_quantile() {
        assert_eq!(length_quantile_threshold(&[1, 2, 3, 4], 0.75).unwrap(), 3);
        assert_eq!(length_quantile_threshold(&[4, 3, 2, 1], 0.75).unwrap(), 3);
        assert_eq!(length_quantile_threshold(&[5, 5, 5], 0.3).unwrap(), 5);
        for q in [0.01, 0.5, 0.99] {
            assert_eq!(length_quantile_threshold(&[7], q).unwrap(), 7);
        }
        assert!(length_quantile_threshold(&[], 0.5).is_err());
    }
}
