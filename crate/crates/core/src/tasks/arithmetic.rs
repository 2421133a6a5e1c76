//! Integer addition and subtraction over decimal strings of any length.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GeneratorSpec, Task, TaskKind};
use crate::error::{CoreError, Result};

pub const ARITHMETIC_ALPHABET: &str = "0123456789+-";

/// A random `digits`-digit number without leading zeros (a lone `0` is allowed for one digit).
pub fn random_operand(digits: usize, rng: &mut ChaCha8Rng) -> String {
    let mut s = String::with_capacity(digits);
    if digits == 1 {
        s.push(char::from(b'0' + rng.gen_range(0..10u8)));
        return s;
    }
    s.push(char::from(b'0' + rng.gen_range(1..10u8)));
    for _ in 1..digits {
        s.push(char::from(b'0' + rng.gen_range(0..10u8)));
    }
    s
}

fn parse_operand(s: &str) -> Result<&str> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CoreError::Parse(format!(
            "operand {s:?} is not a decimal number"
        )));
    }
    if s.len() > 1 && s.starts_with('0') {
        return Err(CoreError::Parse(format!(
            "operand {s:?} has a leading zero"
        )));
    }
    Ok(s)
}

fn split_operands(input: &str, op: char) -> Result<(&str, &str)> {
    let mut parts = input.split(op);
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => Ok((parse_operand(a)?, parse_operand(b)?)),
        _ => Err(CoreError::Parse(format!(
            "expected `a{op}b`, got {input:?}"
        ))),
    }
}

/// Each operand written least-significant digit first; the operator stays in place.
pub fn reverse_operands(input: &str, op: char) -> String {
    input
        .split(op)
        .map(|part| part.chars().rev().collect::<String>())
        .collect::<Vec<_>>()
        .join(&op.to_string())
}

fn digits_lsb(s: &str) -> impl Iterator<Item = u8> + '_ {
    s.bytes().rev().map(|b| b - b'0')
}

/// Schoolbook sum of two decimal strings.
pub fn add_decimal(a: &str, b: &str) -> String {
    let (mut da, mut db) = (digits_lsb(a), digits_lsb(b));
    let mut out = Vec::with_capacity(a.len().max(b.len()) + 1);
    let mut carry = 0;
    loop {
        let (x, y) = (da.next(), db.next());
        if x.is_none() && y.is_none() {
            break;
        }
        let s = x.unwrap_or(0) + y.unwrap_or(0) + carry;
        out.push(b'0' + s % 10);
        carry = s / 10;
    }
    if carry > 0 {
        out.push(b'0' + carry);
    }
    strip_leading_zeros(out)
}

fn strip_leading_zeros(mut lsb_first: Vec<u8>) -> String {
    while lsb_first.len() > 1 && *lsb_first.last().unwrap() == b'0' {
        lsb_first.pop();
    }
    lsb_first.reverse();
    String::from_utf8(lsb_first).expect("ascii digits")
}

fn compare_decimal(a: &str, b: &str) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// `a - b` for `a >= b`.
pub fn sub_decimal(a: &str, b: &str) -> String {
    let (mut da, mut db) = (digits_lsb(a), digits_lsb(b));
    let mut out = Vec::with_capacity(a.len());
    let mut borrow = 0i8;
    while let Some(x) = da.next() {
        let mut d = x as i8 - db.next().unwrap_or(0) as i8 - borrow;
        borrow = 0;
        if d < 0 {
            d += 10;
            borrow = 1;
        }
        out.push(b'0' + d as u8);
    }
    strip_leading_zeros(out)
}

/// Columns of base-10 schoolbook addition of `a` and `b` that produce a carry.
pub fn count_carries(a: u128, b: u128) -> usize {
    count_carries_decimal(&a.to_string(), &b.to_string())
}

pub fn count_carries_decimal(a: &str, b: &str) -> usize {
    let (mut da, mut db) = (digits_lsb(a), digits_lsb(b));
    let (mut carry, mut count) = (0, 0);
    loop {
        let (x, y) = (da.next(), db.next());
        if x.is_none() && y.is_none() {
            break;
        }
        carry = (x.unwrap_or(0) + y.unwrap_or(0) + carry) / 10;
        count += carry as usize;
    }
    count
}

/// Operands of an addition input, for error analysis.
pub fn addition_operands(input: &str) -> Result<(&str, &str)> {
    split_operands(input, '+')
}

pub struct Addition;

impl Task for Addition {
    fn kind(&self) -> TaskKind {
        TaskKind::Addition
    }

    fn alphabet(&self) -> &'static str {
        ARITHMETIC_ALPHABET
    }

    fn generate_one(&self, difficulty: usize, rng: &mut ChaCha8Rng) -> String {
        let a = random_operand(difficulty, rng);
        let b = random_operand(difficulty, rng);
        format!("{a}+{b}")
    }

    fn oracle(&self, input: &str) -> Result<String> {
        let (a, b) = split_operands(input, '+')?;
        Ok(add_decimal(a, b))
    }

    fn difficulty(&self, input: &str) -> Result<usize> {
        let (a, b) = split_operands(input, '+')?;
        Ok(a.len().max(b.len()))
    }

    fn max_answer_len(&self, input: &str) -> usize {
        input.split('+').map(str::len).max().unwrap_or(input.len()) + 1
    }

    fn reversed_answer(&self) -> bool {
        true
    }

    fn model_input(&self, input: &str) -> String {
        reverse_operands(input, '+')
    }

    fn generator(&self) -> GeneratorSpec {
        GeneratorSpec {
            task: TaskKind::Addition,
            base_difficulty: 3,
            round_slope: 2,
        }
    }

    fn initial_max_difficulty(&self) -> usize {
        3
    }

    fn extrapolation_grid(&self) -> Vec<usize> {
        (4..=13).collect()
    }

    fn prompt_len(&self, difficulty: usize) -> usize {
        2 * difficulty + 1
    }
}

/// Evaluation-only task; inputs always satisfy minuend >= subtrahend.
pub struct Subtraction;

impl Task for Subtraction {
    fn kind(&self) -> TaskKind {
        TaskKind::Subtraction
    }

    fn alphabet(&self) -> &'static str {
        ARITHMETIC_ALPHABET
    }

    fn generate_one(&self, difficulty: usize, rng: &mut ChaCha8Rng) -> String {
        let a = random_operand(difficulty, rng);
        let b = random_operand(difficulty, rng);
        if compare_decimal(&a, &b).is_lt() {
            format!("{b}-{a}")
        } else {
            format!("{a}-{b}")
        }
    }

    fn oracle(&self, input: &str) -> Result<String> {
        let (a, b) = split_operands(input, '-')?;
        if compare_decimal(a, b).is_lt() {
            return Err(CoreError::Parse(format!("{input:?} has a negative result")));
        }
        Ok(sub_decimal(a, b))
    }

    fn difficulty(&self, input: &str) -> Result<usize> {
        let (a, b) = split_operands(input, '-')?;
        Ok(a.len().max(b.len()))
    }

    fn max_answer_len(&self, input: &str) -> usize {
        input.split('-').map(str::len).max().unwrap_or(input.len())
    }

    fn reversed_answer(&self) -> bool {
        true
    }

    fn model_input(&self, input: &str) -> String {
        reverse_operands(input, '-')
    }

    fn generator(&self) -> GeneratorSpec {
        GeneratorSpec {
            task: TaskKind::Subtraction,
            base_difficulty: 3,
            round_slope: 2,
        }
    }

    fn initial_max_difficulty(&self) -> usize {
        3
    }

    fn extrapolation_grid(&self) -> Vec<usize> {
        (4..=13).collect()
    }

    fn prompt_len(&self, difficulty: usize) -> usize {
        2 * difficulty + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn addition_examples() {
        assert_eq!(Addition.oracle("123+456").unwrap(), "579");
        assert_eq!(Addition.oracle("999+1").unwrap(), "1000");
        assert_eq!(Addition.oracle("0+0").unwrap(), "0");
        let big = "99999999999999999999999999999999999999999";
        assert_eq!(add_decimal(big, "1"), format!("1{}", "0".repeat(big.len())));
    }

    #[test]
    fn subtraction_examples() {
        assert_eq!(Subtraction.oracle("579-456").unwrap(), "123");
        assert_eq!(Subtraction.oracle("100-99").unwrap(), "1");
        assert_eq!(Subtraction.oracle("5-5").unwrap(), "0");
        assert!(Subtraction.oracle("3-5").is_err());
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["", "12+", "+3", "1+2+3", "01+2", "a+1", "12-3"] {
            assert!(
                matches!(Addition.oracle(bad), Err(CoreError::Parse(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn carries() {
        assert_eq!(count_carries(12, 34), 0);
        assert_eq!(count_carries(19, 1), 1);
        assert_eq!(count_carries(999, 1), 3);
        assert_eq!(count_carries(0, 0), 0);
        assert_eq!(count_carries(55, 55), 2);
    }

    #[test]
    fn subtraction_generator_never_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..8 {
            for _ in 0..200 {
                let x = Subtraction.generate_one(d, &mut rng);
                assert!(Subtraction.oracle(&x).is_ok(), "{x}");
                assert_eq!(Subtraction.difficulty(&x).unwrap(), d);
            }
        }
    }
}
