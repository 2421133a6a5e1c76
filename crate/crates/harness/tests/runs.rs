use std::fs;
use std::path::Path;

use cedc_core::predictor::StubPredictor;
use cedc_core::tasks::{Addition, Sorting, Subtraction, TaskKind};
use cedc_harness::{
    ablation_pool_size, emit_report, load_report, run_experiment, verify_paths,
    zero_shot_checkpoint, zero_shot_eval, HarnessError, RunConfig, INCOMPLETE_MARKER,
};

fn tiny(scheduler: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.scheduler = scheduler.into();
    cfg.run.seeds = vec![4, 5];
    cfg.run.initial_size = 200;
    cfg.run.pretrain_steps = 20;
    cfg.model.n_layers = 1;
    cfg.model.n_heads = 2;
    cfg.model.d_model = 16;
    cfg.model.d_ff = 32;
    cfg.curriculum.rounds = 2;
    cfg.curriculum.pool_size = 60;
    cfg.curriculum.finetune_steps = 6;
    cfg.eval.lengths = Some(vec![4, 5, 6]);
    cfg.eval.n_per_length = 10;
    cfg.eval.history_n_per_length = 5;
    cfg.eval.in_distribution_size = 20;
    cfg.eval.blocks_per_round = 2;
    cfg
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn cedc_run_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cedc");
    let report = run_experiment(&tiny("cedc"), "cedc", &out, false).unwrap();
    assert!(!out.join(INCOMPLETE_MARKER).exists());
    assert_eq!(report.seeds.len(), 2);
    assert_eq!(report.le_auc.values.len(), 2);
    for s in &report.seeds {
        assert_eq!(s.rounds.len(), 2);
        assert_eq!(s.round_le_auc.len(), 3);
        assert_eq!(s.history.len(), 1 + 2 * 2);
        assert!(s.history.windows(2).all(|w| w[1].steps > w[0].steps));
        assert_eq!(s.taxonomy.len(), 2);
        for (t, r) in s.taxonomy.iter().zip(&s.rounds) {
            assert_eq!(t.total(), r.failures);
            assert!(r.kept <= r.failures && r.failures <= r.pool_size);
        }
        let seed_dir = out.join(format!("seed-{}", s.seed));
        assert!(seed_dir.join("checkpoints/final.ckpt").exists());
        assert_eq!(
            fs::read_to_string(seed_dir.join("rounds.jsonl"))
                .unwrap()
                .lines()
                .count(),
            2
        );
    }
    let curve = fs::read_to_string(out.join("curve_mean.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("length,accuracy,n"));
    assert_eq!(curve.lines().count(), 1 + 3);
    let taxonomy = fs::read_to_string(out.join("taxonomy.csv")).unwrap();
    let logged: usize = report
        .seeds
        .iter()
        .flat_map(|s| &s.rounds)
        .map(|r| r.failures)
        .sum();
    let tabled: usize = taxonomy
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(tabled, logged);

    let checks = verify_paths(&[out.clone()], None).unwrap();
    assert_eq!(checks.len(), 2 * (1 + 2 + 1));
    assert!(checks.iter().all(|c| c.violations.is_empty()));

    assert_eq!(load_report(&out.join("report.json")).unwrap(), report);
    let again = tmp.path().join("re-emitted");
    emit_report(&load_report(&out.join("report.json")).unwrap(), &again).unwrap();
    for name in [
        "report.json",
        "curve_mean.csv",
        "history.csv",
        "rounds.csv",
        "taxonomy.csv",
    ] {
        assert_eq!(
            fs::read(out.join(name)).unwrap(),
            fs::read(again.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn reruns_are_byte_identical_and_output_is_guarded() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut cfg = tiny("spl");
    cfg.run.seeds = vec![2];
    run_experiment(&cfg, "x", &a, false).unwrap();
    run_experiment(&cfg, "x", &b, false).unwrap();
    assert_eq!(read_all(&a), read_all(&b));

    assert!(matches!(
        run_experiment(&cfg, "x", &a, false),
        Err(HarnessError::OutputExists(_))
    ));
    fs::write(a.join("stray"), "x").unwrap();
    run_experiment(&cfg, "x", &a, true).unwrap();
    assert!(!a.join("stray").exists());
}

#[test]
fn static_adds_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_experiment(&tiny("static"), "static", &tmp.path().join("s"), false).unwrap();
    for s in &report.seeds {
        assert!(s.rounds.iter().all(|r| r.kept == 0 && r.failures == 0));
        assert_eq!(s.final_dataset_size, 200);
        assert!(s.taxonomy.is_empty());
    }
}

#[test]
fn zero_shot() {
    assert_eq!(
        zero_shot_eval(&StubPredictor::oracle(), &Subtraction, 50, 1).unwrap(),
        1.0
    );
    assert_eq!(
        zero_shot_eval(&StubPredictor::oracle(), &Sorting, 50, 1).unwrap(),
        1.0
    );

    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny("static");
    cfg.run.seeds = vec![1];
    cfg.eval.zero_shot = vec![TaskKind::Subtraction];
    let out = tmp.path().join("z");
    let report = run_experiment(&cfg, "z", &out, false).unwrap();
    let acc = report.zero_shot["subtraction"].values[0];
    assert!((0.0..=1.0).contains(&acc));
    let ckpt = out.join("seed-1/checkpoints/final.ckpt");
    assert_eq!(
        zero_shot_checkpoint(&ckpt, &Subtraction, cfg.eval.zero_shot_size, 0).is_ok(),
        true
    );
    let own = zero_shot_checkpoint(&ckpt, &Addition, 100, 0).unwrap();
    assert!((0.0..=1.0).contains(&own));
    let err = zero_shot_checkpoint(&ckpt, &Sorting, 10, 0).unwrap_err();
    assert!(
        matches!(err, HarnessError::Core(cedc_core::CoreError::Config(_))),
        "{err}"
    );
}

#[test]
fn pool_size_ablation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny("cedc");
    cfg.run.seeds = vec![3];
    let rows = ablation_pool_size(&cfg, &[30, 30], &tmp.path().join("abl"), false).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);
    assert_eq!(rows[0].duplicates[0].len(), 2);
    assert!(ablation_pool_size(&cfg, &[30], &tmp.path().join("one"), false).is_err());
}
