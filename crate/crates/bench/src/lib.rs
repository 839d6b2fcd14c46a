//! Fixtures shared by the benchmarks.

use enrich_core::robustness::score_input;
use enrich_core::{Dataset, QualityConstants, RobustnessParams, ShaperConfig, TestInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The eight-class, 400 Mbit/s shaper used throughout the experiments.
pub fn shaper8() -> ShaperConfig {
    ShaperConfig::with_default_thresholds(8, 400.0).expect("valid default config")
}

pub fn uniform_inputs(config: &ShaperConfig, count: usize, seed: u64) -> Vec<TestInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| TestInput::new(config.thresholds.iter().map(|&b| rng.random_range(0.0..=b)).collect()))
        .collect()
}

/// `rows` uniform inputs with their robustness scores.
pub fn scored_dataset(config: &ShaperConfig, rows: usize, seed: u64) -> Dataset {
    let quality = QualityConstants::default();
    let params = RobustnessParams::uniform(config.n);
    Dataset::from_rows(uniform_inputs(config, rows, seed).into_iter().map(|t| {
        let s = score_input(config, &t, &quality, &params, None).expect("valid input").0;
        (t.tr, s)
    }))
}
