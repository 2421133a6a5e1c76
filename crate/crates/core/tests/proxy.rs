use cedc_core::curriculum::mine_counterexamples;
use cedc_core::predictor::{Learner, Predictor, Trainable};
use cedc_core::tasks::{generate, make_initial_dataset, Example, SynthClass, Task};
use cedc_core::verify::{verify_proxy, VerifierSpec};
use cedc_nn::{OptimizerConfig, TransformerConfig};
use proptest::prelude::*;

proptest! {
    #[test]
    fn lowering_the_confidence_threshold_never_flags_more(
        probs in proptest::collection::vec(0.0f64..=1.0, 1..50),
        hi in 0.0f64..=1.0,
        cut in 0.0f64..=1.0,
        length_threshold in 0usize..10,
    ) {
        let lo = hi * cut;
        let flagged = |t: f64| {
            let spec = VerifierSpec { confidence_threshold: t, ..VerifierSpec::proxy() };
            probs
                .iter()
                .enumerate()
                .filter(|&(i, &p)| {
                    let ex = Example { input: String::new(), target: String::new(), difficulty: i % 12 };
                    !verify_proxy(&ex, p, length_threshold, &spec).passed
                })
                .count()
        };
        prop_assert!(flagged(lo) <= flagged(hi));
    }
}

#[test]
fn proxy_flags_are_enriched_for_true_errors() {
    let mut learner = Learner::new(
        TransformerConfig::default(),
        OptimizerConfig::default(),
        SynthClass.vocabulary(),
        1,
    )
    .unwrap();
    let d0 =
        make_initial_dataset(&SynthClass, 5000, SynthClass.initial_max_difficulty(), 2).unwrap();
    learner.train_steps(&SynthClass, &d0, 400).unwrap();
    let pool = generate(&SynthClass.generator(), 3, 2000, 3).unwrap();
    let mined = mine_counterexamples(
        &pool,
        &SynthClass,
        &learner as &dyn Predictor,
        &VerifierSpec::proxy(),
    )
    .unwrap();
    let stats = mined.proxy.unwrap();
    assert_eq!(stats.flagged + stats.unflagged, 2000);
    assert_eq!(stats.flagged, mined.examples.len());
    assert!(stats.enrichment().unwrap() > 1.5, "{stats:?}");
}
