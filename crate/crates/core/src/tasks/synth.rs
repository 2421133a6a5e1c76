use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GeneratorSpec, Task, TaskKind};
use crate::error::{CoreError, Result};

pub const SYNTH_ALPHABET: &str = "0123456789";
pub const CLASSES: u32 = 4;

/// Digit strings labelled by digit sum mod 4; gold labels are exact by construction.
pub struct SynthClass;

impl Task for SynthClass {
    fn kind(&self) -> TaskKind {
        TaskKind::SynthClass
    }

    fn alphabet(&self) -> &'static str {
        SYNTH_ALPHABET
    }

    fn generate_one(&self, difficulty: usize, rng: &mut ChaCha8Rng) -> String {
        (0..difficulty.max(1))
            .map(|_| char::from(b'0' + rng.gen_range(0..10u8)))
            .collect()
    }

    fn oracle(&self, input: &str) -> Result<String> {
        if input.is_empty() || !input.bytes().all(|b| b.is_ascii_digit()) {
            return Err(CoreError::Parse(format!("{input:?} is not a digit string")));
        }
        let sum: u32 = input.bytes().map(|b| (b - b'0') as u32).sum();
        Ok((sum % CLASSES).to_string())
    }

    fn difficulty(&self, input: &str) -> Result<usize> {
        self.oracle(input)?;
        Ok(input.len())
    }

    fn max_answer_len(&self, _input: &str) -> usize {
        1
    }

    fn is_classification(&self) -> bool {
        true
    }

    fn generator(&self) -> GeneratorSpec {
        GeneratorSpec {
            task: TaskKind::SynthClass,
            base_difficulty: 2,
            round_slope: 2,
        }
    }

    fn initial_max_difficulty(&self) -> usize {
        4
    }

    fn extrapolation_grid(&self) -> Vec<usize> {
        (5..=12).collect()
    }

    fn prompt_len(&self, difficulty: usize) -> usize {
        difficulty
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_is_digit_sum_mod_four() {
        assert_eq!(SynthClass.oracle("0").unwrap(), "0");
        assert_eq!(SynthClass.oracle("123").unwrap(), "2");
        assert_eq!(SynthClass.oracle("99").unwrap(), "2");
        assert!(SynthClass.oracle("").is_err());
        assert!(SynthClass.oracle("1a").is_err());
    }
}
