use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GeneratorSpec, Task, TaskKind};
use crate::error::{CoreError, Result};

pub const SORTING_ALPHABET: &str = "0123456789[], ";
pub const MAX_ELEMENT: u32 = 99;

fn render(items: &[u32]) -> String {
    let body: Vec<String> = items.iter().map(u32::to_string).collect();
    format!("[{}]", body.join(", "))
}

/// Parses the exact `[e1, e2, ...]` rendering.
pub fn parse_list(input: &str) -> Result<Vec<u32>> {
    let bad = || CoreError::Parse(format!("expected a list like \"[3, 1, 2]\", got {input:?}"));
    let body = input
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(bad)?;
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(", ")
        .map(|e| {
            if e.is_empty()
                || !e.bytes().all(|b| b.is_ascii_digit())
                || (e.len() > 1 && e.starts_with('0'))
            {
                return Err(bad());
            }
            e.parse::<u32>().map_err(|_| bad())
        })
        .collect()
}

pub struct Sorting;

impl Task for Sorting {
    fn kind(&self) -> TaskKind {
        TaskKind::Sorting
    }

    fn alphabet(&self) -> &'static str {
        SORTING_ALPHABET
    }

    fn generate_one(&self, difficulty: usize, rng: &mut ChaCha8Rng) -> String {
        let items: Vec<u32> = (0..difficulty)
            .map(|_| rng.gen_range(0..=MAX_ELEMENT))
            .collect();
        render(&items)
    }

    fn oracle(&self, input: &str) -> Result<String> {
        let mut items = parse_list(input)?;
        items.sort_unstable();
        Ok(render(&items))
    }

    fn difficulty(&self, input: &str) -> Result<usize> {
        Ok(parse_list(input)?.len())
    }

    fn max_answer_len(&self, input: &str) -> usize {
        input.len()
    }

    fn generator(&self) -> GeneratorSpec {
        GeneratorSpec {
            task: TaskKind::Sorting,
            base_difficulty: 8,
            round_slope: 4,
        }
    }

    fn initial_max_difficulty(&self) -> usize {
        8
    }

    fn extrapolation_grid(&self) -> Vec<usize> {
        (9..=24).collect()
    }

    fn prompt_len(&self, difficulty: usize) -> usize {
        // Two-digit elements plus ", " separators and brackets.
        (4 * difficulty).max(2)
    }
}
