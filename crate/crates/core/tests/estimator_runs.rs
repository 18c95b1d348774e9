mod common;

use common::integral;
use magicount_core::estimator::{
    build_schedule, estimate_count_full, estimate_count_simplified, estimate_ratio, estimate_s1, load_and_extend,
    run, FullParams, RunOptions,
};
use magicount_core::report::{load_state, save_state, EstimateMode};
use magicount_core::sampler::chain_rng;
use magicount_core::{Error, ProblemSpec, SamplingParams};
use serde_json::Value;

fn quick(n: usize, seed: u64) -> SamplingParams {
    let mut p = SamplingParams::for_side(n);
    p.s1_samples = 400;
    p.samples_per_stage = 40;
    p.chains = 4;
    p.chain.burn_in_steps = 10;
    p.chain.knots = 16;
    p.master_seed = seed;
    p
}

#[test]
fn s1_matches_quadrature() {
    for t1 in [1.0, 2.0] {
        let want = integral(t1, 8, 32).ln();
        let (got, se) = estimate_s1(2, t1, 40_000, &mut chain_rng(21)).unwrap();
        assert!((got - want).abs() < 3.0 * se, "t1={t1}: {got} vs {want} (se {se})");
    }
}

#[test]
fn ratio_matches_quadrature() {
    let want = (integral(2.0, 8, 32) / integral(1.0, 8, 32)).ln();
    let mut p = SamplingParams::for_side(2);
    p.samples_per_stage = 4000;
    p.chains = 20;
    p.master_seed = 22;
    let r = estimate_ratio(2, 1.0, 2.0, 1, &p).unwrap();
    assert_eq!(r.sample_count, 4000);
    assert!(r.effective_sample_size <= 4000.0 && r.effective_sample_size > 0.0);
    assert!((r.log_ratio_mean - want).abs() < 3.0 * r.std_err, "{} vs {want} (se {})", r.log_ratio_mean, r.std_err);
}

#[test]
fn single_cell_counts_one() {
    for t in [1, 4, 9] {
        let spec = ProblemSpec::new(1, t).unwrap();
        let r = estimate_count_simplified(spec, &build_schedule(t, 1.0).unwrap(), &quick(1, 3)).unwrap();
        assert!(r.log_count_estimate.abs() < 1e-12);
        assert!(r.log_std_err < 1e-12);
    }
}

#[test]
fn same_seed_same_report_for_any_worker_count() {
    let spec = ProblemSpec::new(3, 3).unwrap();
    let schedule = build_schedule(3, 1.0).unwrap();
    let mut p = quick(3, 7);
    p.workers = 1;
    let a = estimate_count_simplified(spec, &schedule, &p).unwrap();
    let b = estimate_count_simplified(spec, &schedule, &p).unwrap();
    assert_eq!(a.without_timing(), b.without_timing());
    p.workers = 3;
    let c = estimate_count_simplified(spec, &schedule, &p).unwrap();
    assert_eq!(a.log_count_estimate.to_bits(), c.log_count_estimate.to_bits());
    p.master_seed = 8;
    let d = estimate_count_simplified(spec, &schedule, &p).unwrap();
    assert_ne!(a.log_count_estimate, d.log_count_estimate);
}

#[test]
fn state_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let spec = ProblemSpec::new(2, 3).unwrap();
    let r = estimate_count_simplified(spec, &build_schedule(3, 0.5).unwrap(), &quick(2, 4)).unwrap();
    save_state(&r, &path).unwrap();
    assert_eq!(load_state(&path).unwrap(), r);
}

#[test]
fn state_file_field_names() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let spec = ProblemSpec::new(2, 2).unwrap();
    let full = FullParams { samples: 20, log_threshold: f64::INFINITY };
    let r = estimate_count_full(spec, &build_schedule(2, 1.0).unwrap(), &quick(2, 5), &full).unwrap();
    save_state(&r, &path).unwrap();
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in [
        "version", "mode", "n", "t", "step", "schedule", "logS1", "logS1StdErr", "stages", "logPhiConst",
        "logIntegralPhi", "logPbarMean", "pbar", "logCountEstimate", "logStdErr", "complete", "masterSeed",
        "params", "wallClockSecs",
    ] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["mode"], "full");
    assert!(doc["pbar"]["logThreshold"].is_null());
    let stage = &doc["stages"][0];
    for key in ["i", "tFrom", "tTo", "logRatioMean", "samples", "var", "ess", "stdErr", "completedAtMs"] {
        assert!(stage.get(key).is_some(), "missing stage {key}");
    }
}

#[test]
fn extending_matches_a_fresh_run_with_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let p = quick(2, 11);
    let short = estimate_count_simplified(ProblemSpec::new(2, 2).unwrap(), &build_schedule(2, 1.0).unwrap(), &p).unwrap();
    save_state(&short, &path).unwrap();
    let extended = load_and_extend(&path, 4).unwrap();
    let fresh = estimate_count_simplified(ProblemSpec::new(2, 4).unwrap(), &build_schedule(4, 1.0).unwrap(), &p).unwrap();
    assert_eq!(extended.without_timing(), fresh.without_timing());
    assert_eq!(extended.stages[0], short.stages[0]);
}

#[test]
fn extending_to_the_same_t_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let r = estimate_count_simplified(ProblemSpec::new(2, 3).unwrap(), &build_schedule(3, 1.0).unwrap(), &quick(2, 12))
        .unwrap();
    save_state(&r, &path).unwrap();
    assert_eq!(load_and_extend(&path, 3).unwrap(), r);
    assert!(matches!(load_and_extend(&path, 2), Err(Error::State { .. })));
}

#[test]
fn extending_drops_the_old_pbar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let full = FullParams { samples: 20, log_threshold: f64::INFINITY };
    let r = estimate_count_full(ProblemSpec::new(2, 2).unwrap(), &build_schedule(2, 1.0).unwrap(), &quick(2, 13), &full)
        .unwrap();
    save_state(&r, &path).unwrap();
    let e = load_and_extend(&path, 3).unwrap();
    assert_eq!(e.mode, EstimateMode::Simplified);
    assert!(e.log_pbar_mean.is_none() && e.complete);
    assert_eq!(e.log_count_estimate, e.log_integral_phi);
}

#[test]
fn resume_keeps_completed_stages() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let spec = ProblemSpec::new(2, 4).unwrap();
    let schedule = build_schedule(4, 1.0).unwrap();
    let p = quick(2, 14);
    let opts = RunOptions { state_path: Some(&path), resume: true };
    let first = run(spec, &schedule, &p, None, &opts).unwrap();
    std::thread::sleep(std::time::Duration::from_millis(5));
    let second = run(spec, &schedule, &p, None, &opts).unwrap();
    let stamps = |r: &magicount_core::EstimateReport| r.stages.iter().map(|s| s.completed_at_ms).collect::<Vec<_>>();
    assert_eq!(stamps(&first), stamps(&second));
    assert_eq!(first.log_count_estimate, second.log_count_estimate);
}

#[test]
fn resume_finishes_a_partial_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let p = quick(2, 15);
    let opts = RunOptions { state_path: Some(&path), resume: true };
    let partial = run(ProblemSpec::new(2, 2).unwrap(), &build_schedule(2, 1.0).unwrap(), &p, None, &opts).unwrap();
    let done = run(ProblemSpec::new(2, 4).unwrap(), &build_schedule(4, 1.0).unwrap(), &p, None, &opts).unwrap();
    assert_eq!(done.stages[0], partial.stages[0]);
    assert_eq!(done.stages.len(), 3);
    assert_eq!(load_state(&path).unwrap(), done);
}

#[test]
fn resume_rejects_other_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let spec = ProblemSpec::new(2, 2).unwrap();
    let schedule = build_schedule(2, 1.0).unwrap();
    let opts = RunOptions { state_path: Some(&path), resume: true };
    run(spec, &schedule, &quick(2, 16), None, &opts).unwrap();
    assert!(matches!(run(spec, &schedule, &quick(2, 17), None, &opts), Err(Error::State { .. })));
    assert!(matches!(run(ProblemSpec::new(3, 2).unwrap(), &schedule, &quick(2, 16), None, &opts), Err(Error::State { .. })));
}

#[test]
fn reported_error_is_root_sum_square() {
    let r = estimate_count_simplified(ProblemSpec::new(3, 3).unwrap(), &build_schedule(3, 1.0).unwrap(), &quick(3, 18))
        .unwrap();
    let var = r.log_s1_std_err.powi(2) + r.stages.iter().map(|s| s.std_err.powi(2)).sum::<f64>();
    assert!((r.log_std_err - var.sqrt()).abs() < 1e-15);
    let sum = r.log_phi_const + r.log_s1 + r.stages.iter().map(|s| s.log_ratio_mean).sum::<f64>();
    assert_eq!(r.log_count_estimate, sum);
}
