use cedc_core::tasks::{
    count_carries, count_carries_decimal, generate, is_balanced, random_operand, Addition, Dyck2,
    Sorting, Subtraction, SynthClass, Task, TaskKind,
};
use cedc_core::verify::verify_exact;
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn big(s: &str) -> BigUint {
    s.parse().unwrap()
}

#[test]
fn addition_matches_bigint_on_1e5_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..100_000 {
        let a = random_operand(rng.gen_range(1..=30), &mut rng);
        let b = random_operand(rng.gen_range(1..=30), &mut rng);
        let input = format!("{a}+{b}");
        let expected = (big(&a) + big(&b)).to_string();
        if Addition.oracle(&input).unwrap() != expected
            || !verify_exact(&Addition, &input, &expected).unwrap().passed
        {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn subtraction_matches_bigint() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20_000 {
        let a = random_operand(rng.gen_range(1..=30), &mut rng);
        let b = random_operand(rng.gen_range(1..=30), &mut rng);
        let (hi, lo) = if big(&a) >= big(&b) { (a, b) } else { (b, a) };
        assert_eq!(
            Subtraction.oracle(&format!("{hi}-{lo}")).unwrap(),
            (big(&hi) - big(&lo)).to_string()
        );
    }
}

fn stack_balanced(s: &[u8]) -> bool {
    let mut st = Vec::new();
    for &c in s {
        match c {
            b'(' => st.push(b')'),
            b'[' => st.push(b']'),
            _ => {
                if st.pop() != Some(c) {
                    return false;
                }
            }
        }
    }
    st.is_empty()
}

#[test]
fn dyck_matches_exhaustive_stack_simulation() {
    let symbols = [b'(', b')', b'[', b']'];
    let mut mismatches = 0;
    let mut checked = 0;
    for n in 0..=8u32 {
        for code in 0..4usize.pow(n) {
            let s: Vec<u8> = (0..n).map(|i| symbols[(code >> (2 * i)) & 3]).collect();
            let s = String::from_utf8(s).unwrap();
            let expected = if stack_balanced(s.as_bytes()) {
                "1"
            } else {
                "0"
            };
            if is_balanced(&s).unwrap() != (expected == "1")
                || Dyck2.oracle(&s).unwrap() != expected
            {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    assert_eq!(checked, (0..=8).map(|n| 4usize.pow(n)).sum::<usize>());
    assert_eq!(mismatches, 0);
}

#[test]
fn exact_verifier_accepts_oracle_output_for_every_task() {
    for kind in TaskKind::ALL {
        let task = kind.task();
        for round in 0..5 {
            for x in generate(&task.generator(), round, 2000, round as u64).unwrap() {
                let y = task.oracle(&x).unwrap();
                assert!(verify_exact(task, &x, &y).unwrap().passed, "{kind} {x}");
            }
        }
    }
}

#[test]
fn malformed_inputs_are_parse_errors() {
    for (task, bad) in [
        (&Addition as &dyn Task, "12+"),
        (&Addition, "012+3"),
        (&Subtraction, "3-12"),
        (&Sorting, "[1,2]"),
        (&Dyck2, "(a)"),
        (&SynthClass, ""),
    ] {
        assert!(task.oracle(bad).is_err(), "{} {bad}", task.name());
    }
}

proptest! {
    #[test]
    fn generated_operands_have_no_leading_zeros(digits in 1usize..40, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_operand(digits, &mut rng);
        prop_assert_eq!(s.len(), digits);
        prop_assert!(digits == 1 || !s.starts_with('0'));
    }

    #[test]
    fn carries_are_symmetric(a: u64, b: u64) {
        prop_assert_eq!(count_carries(a as u128, b as u128), count_carries(b as u128, a as u128));
        prop_assert_eq!(count_carries(a as u128, b as u128), count_carries_decimal(&a.to_string(), &b.to_string()));
    }

    #[test]
    fn wrong_answers_never_verify(a in 0u64..1_000_000, b in 0u64..1_000_000, delta in 1u64..1000) {
        let input = format!("{a}+{b}");
        let wrong = (a + b + delta).to_string();
        prop_assert!(!verify_exact(&Addition, &input, &wrong).unwrap().passed);
        let padded = format!(" {} ", a + b);
        prop_assert!(verify_exact(&Addition, &input, &padded).unwrap().passed);
    }
}
