//! Desk-scale comparison of ENRICH and BASELINE on the 8-class shaper.
//!
//! `cargo run --release -p enrich-core --example desk_study [runs]`

use enrich_core::eval::{build_labelled_testset, coverage, sweep_from_coverage};
use enrich_core::{run_baseline, run_enrich, QualityConstants, RunParams, ShaperConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> enrich_core::Result<()> {
    let runs: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(15);
    let config = ShaperConfig::with_default_thresholds(8, 400.0)?;
    let quality = QualityConstants::default();
    let params = RunParams::default();
    let testset = build_labelled_testset(&config, &quality, &params.robustness_params(8), 200, 2024)?;
    println!(
        "testset: {} non-robust / {}",
        testset.count(enrich_core::Label::NonRobust),
        testset.len()
    );
    let enrich: Vec<_> = (0..runs)
        .map(|s| run_enrich(&config, &quality, &params.clone().with_seed(s)).map(|r| r.final_ranges))
        .collect::<Result<_, _>>()?;
    let baseline: Vec<_> = (0..runs)
        .map(|s| run_baseline(&config, &quality, &params.clone().with_seed(s)).map(|r| r.final_ranges))
        .collect::<Result<_, _>>()?;
    for eps in [0.05, 0.25, 0.40] {
        for (name, sets) in [("enrich", &enrich), ("baseline", &baseline)] {
            let covered = coverage(sets, &testset, eps, &config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for n in [1, 6, 10, sets.len()] {
                let s = sweep_from_coverage(&covered, n, 20, &testset, eps, &mut rng)?;
                println!(
                    "eps {eps:.2} {name:8} n {n:2}: acc {:.3} prec_nr {:.3} rec_nr {:.3}",
                    s.accuracy.mean, s.precision_nr.mean, s.recall_nr.mean
                );
            }
        }
    }
    Ok(())
}
