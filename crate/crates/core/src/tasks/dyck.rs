use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GeneratorSpec, Task, TaskKind};
use crate::error::{CoreError, Result};

pub const DYCK_ALPHABET: &str = "()[]01";
const SYMBOLS: [char; 4] = ['(', ')', '[', ']'];

/// Stack recognizer for balanced strings over `()` and `[]`.
pub fn is_balanced(input: &str) -> Result<bool> {
    let mut stack = Vec::with_capacity(input.len());
    let mut ok = true;
    for c in input.chars() {
        match c {
            '(' | '[' => stack.push(c),
            ')' | ']' => {
                let open = if c == ')' { '(' } else { '[' };
                if stack.pop() != Some(open) {
                    ok = false;
                }
            }
            other => return Err(CoreError::Parse(format!("{other:?} is not a bracket"))),
        }
    }
    Ok(ok && stack.is_empty())
}

/// Random nesting/concatenation of `pairs` bracket pairs.
pub fn random_balanced(pairs: usize, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(2 * pairs);
    let mut stack = Vec::new();
    let mut opened = 0;
    while opened < pairs || !stack.is_empty() {
        let can_open = opened < pairs;
        let open = can_open && (stack.is_empty() || rng.gen_bool(0.5));
        if open {
            let (o, c) = if rng.gen_bool(0.5) {
                ('(', ')')
            } else {
                ('[', ']')
            };
            out.push(o);
            stack.push(c);
            opened += 1;
        } else {
            out.push(stack.pop().expect("non-empty"));
        }
    }
    out
}

pub struct Dyck2;

impl Task for Dyck2 {
    fn kind(&self) -> TaskKind {
        TaskKind::Dyck2
    }

    fn alphabet(&self) -> &'static str {
        DYCK_ALPHABET
    }

    /// Even lengths: half balanced, half one-symbol flips. Odd lengths: one deletion from a
    /// balanced string one longer (always unbalanced).
    fn generate_one(&self, difficulty: usize, rng: &mut ChaCha8Rng) -> String {
        if difficulty % 2 == 1 {
            let mut chars: Vec<char> = random_balanced((difficulty + 1) / 2, rng).chars().collect();
            chars.remove(rng.gen_range(0..chars.len()));
            return chars.into_iter().collect();
        }
        let balanced = random_balanced(difficulty / 2, rng);
        if difficulty == 0 || rng.gen_bool(0.5) {
            return balanced;
        }
        let mut chars: Vec<char> = balanced.chars().collect();
        let at = rng.gen_range(0..chars.len());
        let others: Vec<char> = SYMBOLS
            .iter()
            .copied()
            .filter(|&s| s != chars[at])
            .collect();
        chars[at] = others[rng.gen_range(0..others.len())];
        chars.into_iter().collect()
    }

    fn oracle(&self, input: &str) -> Result<String> {
        Ok(if is_balanced(input)? { "1" } else { "0" }.to_string())
    }

    fn difficulty(&self, input: &str) -> Result<usize> {
        is_balanced(input)?;
        Ok(input.chars().count())
    }

    fn max_answer_len(&self, _input: &str) -> usize {
        1
    }

    fn generator(&self) -> GeneratorSpec {
        GeneratorSpec {
            task: TaskKind::Dyck2,
            base_difficulty: 16,
            round_slope: 8,
        }
    }

    fn min_difficulty(&self) -> usize {
        2
    }

    fn initial_max_difficulty(&self) -> usize {
        16
    }

    fn extrapolation_grid(&self) -> Vec<usize> {
        (24..=64).step_by(8).collect()
    }

    fn prompt_len(&self, difficulty: usize) -> usize {
        difficulty
    }
}
