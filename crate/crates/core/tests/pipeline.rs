use enrich_core::eval::{build_labelled_testset, classify_with_ranges};
use enrich_core::reduce::merge_ranges;
use enrich_core::{run_baseline, run_enrich, Approach, Label, QualityConstants, RunParams, RunRecord, ShaperConfig};

fn setup() -> (ShaperConfig, QualityConstants, RunParams) {
    let config = ShaperConfig::with_default_thresholds(8, 400.0).unwrap();
    (config, QualityConstants::default(), RunParams::default().with_seed(11))
}

#[test]
fn default_budget_is_three_hundred_calls() {
    let (c, q, p) = setup();
    let e = run_enrich(&c, &q, &p).unwrap();
    let b = run_baseline(&c, &q, &p).unwrap();
    assert_eq!(e.simulator_calls, 300);
    assert_eq!(e.test_count(), 300);
    assert_eq!(e.iterations.len(), 11);
    assert_eq!(e.tree_count(), 10);
    assert_eq!(b.simulator_calls, 300);
    assert_eq!(b.test_count(), 300);
    assert_eq!(b.tree_count(), 1);
    assert_eq!(b.approach, Approach::Baseline);
}

#[test]
fn same_seed_same_record() {
    let (mut c, q, p) = setup();
    c.noise_amplitude = 0.05;
    for run in [run_enrich, run_baseline] {
        let a = run(&c, &q, &p).unwrap();
        let b = run(&c, &q, &p).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let other = run(&c, &q, &p.clone().with_seed(12)).unwrap();
        assert_ne!(a, other);
    }
}

#[test]
fn record_round_trips_through_json() {
    let (c, q, p) = setup();
    let rec = run_enrich(&c, &q, &p).unwrap();
    let back = RunRecord::from_json(&rec.to_json().unwrap()).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn tests_respect_their_search_box() {
    let (c, q, p) = setup();
    let rec = run_enrich(&c, &q, &p).unwrap();
    for it in &rec.iterations {
        for t in &it.tests {
            assert!(it.search_box.contains(t), "iteration {}", it.iteration);
            t.validate(&c).unwrap();
        }
    }
}

#[test]
fn ranges_accumulate_and_end_in_final() {
    let (c, q, p) = setup();
    let rec = run_enrich(&c, &q, &p).unwrap();
    assert_eq!(&rec.final_ranges, &rec.iterations.last().unwrap().ranges);
    for w in rec.iterations.windows(2) {
        let (before, after) = (&w[0].ranges, &w[1].ranges);
        for r in &before.ranges {
            assert!(after.get(r.variable).is_some(), "tr_{} lost its anchor", r.variable);
        }
        if let Some(red) = &w[1].reduction {
            assert_eq!(merge_ranges(before, &red.ranges).unwrap(), *after);
        }
    }
}

#[test]
fn no_iterations_means_no_ranges() {
    let (c, q, mut p) = setup();
    p.iterations = 0;
    let rec = run_enrich(&c, &q, &p).unwrap();
    assert_eq!(rec.simulator_calls, 100);
    assert!(rec.final_ranges.is_empty());
}

#[test]
fn tests_csv_has_one_row_per_call() {
    let (c, q, p) = setup();
    let rec = run_baseline(&c, &q, &p).unwrap();
    let mut buf = Vec::new();
    rec.write_tests_csv(&mut buf, None).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(reader.headers().unwrap().len(), 1 + 8 + 2);
    assert_eq!(reader.records().count(), 300);
}

#[test]
fn labelled_set_and_ensemble_prediction() {
    let (c, q, p) = setup();
    let set = build_labelled_testset(&c, &q, &p.robustness_params(8), 50, 3).unwrap();
    assert_eq!(
        set,
        build_labelled_testset(&c, &q, &p.robustness_params(8), 50, 3).unwrap()
    );
    let runs: Vec<_> = (0..3)
        .map(|s| run_enrich(&c, &q, &p.clone().with_seed(s)).unwrap().final_ranges)
        .collect();
    for t in &set.tests {
        let together = classify_with_ranges(&runs, t, 0.3, &c).unwrap();
        let any = runs
            .iter()
            .any(|r| classify_with_ranges(std::slice::from_ref(r), t, 0.3, &c).unwrap() == Label::NonRobust);
        assert_eq!(together == Label::NonRobust, any);
    }
}
