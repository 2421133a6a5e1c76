use std::collections::HashSet;

use cedc_core::metrics::{
    build_length_curve, classify_addition_error, exact_match_accuracy, le_auc, max_standard_error,
    ErrorClass, LengthCurve, LengthPoint, TaxonomyCount,
};
use cedc_core::predictor::StubPredictor;
use cedc_core::tasks::{
    addition_operands, count_carries_decimal, labelled_examples, Addition, Sorting, Task,
};
use cedc_core::CoreError;
use proptest::prelude::*;

use ErrorClass::*;

const FIXTURE: [(&str, &str, &str, ErrorClass); 20] = [
    ("999+1", "100", "1000", LengthMismatch),
    ("19+1", "30", "20", SingleCarry),
    ("12+34", "47", "46", Other),
    ("99+99", "188", "198", MultiCarry),
    ("5+5", "11", "10", SingleCarry),
    ("5+5", "1", "10", LengthMismatch),
    ("123+456", "578", "579", Other),
    ("158+267", "415", "425", MultiCarry),
    ("4+3", "8", "7", Other),
    ("4+3", "07", "7", LengthMismatch),
    ("909+91", "1090", "1000", MultiCarry),
    ("45+55", "110", "100", MultiCarry),
    ("45+54", "98", "99", Other),
    ("18+1", "29", "19", Other),
    ("17+5", "21", "22", SingleCarry),
    ("250+750", "1100", "1000", MultiCarry),
    ("250+750", "100", "1000", LengthMismatch),
    ("31+19", "40", "50", SingleCarry),
    ("1234+8765", "9998", "9999", Other),
    ("1+99", "1000", "100", LengthMismatch),
];

#[test]
fn taxonomy_matches_hand_labels() {
    for (input, wrong, correct, label) in FIXTURE {
        assert_eq!(Addition.oracle(input).unwrap(), correct, "{input}");
        if label != LengthMismatch {
            let (a, b) = addition_operands(input).unwrap();
            let carries = count_carries_decimal(a, b);
            let by_carries = match carries {
                0 => Other,
                1 => SingleCarry,
                _ => MultiCarry,
            };
            assert_eq!(by_carries, label, "{input}");
        }
        assert_eq!(
            classify_addition_error(input, wrong, correct).unwrap(),
            label,
            "{input}"
        );
    }
    let counts =
        TaxonomyCount::from_failures(0, FIXTURE.iter().map(|&(i, w, c, _)| (i, w, c))).unwrap();
    assert_eq!(counts.total(), 20);
    for class in ErrorClass::ALL {
        assert_eq!(
            counts.get(class),
            FIXTURE.iter().filter(|f| f.3 == class).count()
        );
    }
}

#[test]
fn accuracy_with_stub_models() {
    let examples = labelled_examples(&Addition, 1, 5, 100, 3).unwrap();
    assert_eq!(
        exact_match_accuracy(&StubPredictor::oracle(), &Addition, &examples).unwrap(),
        1.0
    );
    assert_eq!(
        exact_match_accuracy(&StubPredictor::always_wrong(), &Addition, &examples).unwrap(),
        0.0
    );

    let mut unique = Vec::new();
    let mut seen = HashSet::new();
    for e in examples {
        if seen.insert(e.input.clone()) {
            unique.push(e);
        }
    }
    unique.truncate(unique.len() / 2 * 2);
    let odd: HashSet<String> = unique
        .iter()
        .skip(1)
        .step_by(2)
        .map(|e| e.input.clone())
        .collect();
    let half = StubPredictor::failing_when(move |x| odd.contains(x));
    assert_eq!(
        exact_match_accuracy(&half, &Addition, &unique).unwrap(),
        0.5
    );
    assert!(matches!(
        exact_match_accuracy(&half, &Addition, &[]),
        Err(CoreError::Input(_))
    ));
}

#[test]
fn length_curves() {
    let oracle = StubPredictor::oracle();
    let grid: Vec<usize> = (4..=13).collect();
    let curve = build_length_curve(&oracle, &Addition, &grid, 20, 1, 3).unwrap();
    assert_eq!(curve.points().len(), 10);
    assert!(curve
        .points()
        .iter()
        .all(|p| p.accuracy == 1.0 && p.n == 20));
    assert_eq!(le_auc(&curve).unwrap(), 1.0);

    let long_fails = StubPredictor::failing_when(|x| x.len() > 15);
    let a = build_length_curve(&long_fails, &Sorting, &[9, 12, 24], 30, 5, 8).unwrap();
    let b = build_length_curve(&long_fails, &Sorting, &[9, 12, 24], 30, 5, 8).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.points()[2].accuracy, 0.0);

    let err = build_length_curve(&oracle, &Addition, &[3, 4], 10, 1, 3).unwrap_err();
    assert!(matches!(err, CoreError::Config(_)), "{err}");
    assert!(max_standard_error(200) <= 0.036);
}

#[test]
fn classification_is_total_over_wrong_predictions() {
    for (input, _, correct, _) in FIXTURE {
        for wrong in [
            "",
            "0",
            "1",
            "99999",
            "10000000",
            &format!("{correct}0"),
            &correct[1..],
        ] {
            if wrong != correct {
                let first = classify_addition_error(input, wrong, correct).unwrap();
                assert_eq!(
                    classify_addition_error(input, wrong, correct).unwrap(),
                    first
                );
            }
        }
    }
}

fn curve_of(acc: &[f64]) -> LengthCurve {
    LengthCurve::new(
        acc.iter()
            .enumerate()
            .map(|(i, &a)| LengthPoint {
                length: 4 + i,
                accuracy: a,
                n: 10,
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn le_auc_is_permutation_invariant_and_bounded(
        acc in proptest::collection::vec(0.0f64..=1.0, 1..20),
        rot in 0usize..20,
    ) {
        let base = le_auc(&curve_of(&acc)).unwrap();
        let mut shuffled = acc.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let other = le_auc(&curve_of(&shuffled)).unwrap();
        prop_assert!((base - other).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }
}
