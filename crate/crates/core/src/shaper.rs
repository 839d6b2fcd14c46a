//! Analytic model of an n-class priority traffic shaper.
//!
//! Classes are indexed `1..=n` in the docs (`0..n` in code) and priority
//! grows with the index: class `n` is served first. Bandwidth is handed out
//! by greedy priority water-filling, and per-class latency follows a
//! queueing-style `ρ / (1 − ρ)` blow-up until the class is overloaded, at
//! which point latency jumps to the overload floor and loss appears.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Guards the `1 / (1 − ρ)` pole at full utilization.
pub const POLE_GUARD: f64 = 1e-6;

/// The shaper under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShaperConfig {
    pub n: usize,
    /// Total available bandwidth, Mbit/s.
    pub total_bw: f64,
    /// Per-class maximum bandwidth `bwR_i`, lowest priority first.
    pub thresholds: Vec<f64>,
    #[serde(default = "defaults::base_latency_ms")]
    pub base_latency_ms: f64,
    #[serde(default = "defaults::queue_gain_ms")]
    pub queue_gain_ms: f64,
    #[serde(default = "defaults::overload_latency_ms")]
    pub overload_latency_ms: f64,
    #[serde(default = "defaults::latency_cap_ms")]
    pub latency_cap_ms: f64,
    #[serde(default = "defaults::priority_penalty")]
    pub priority_penalty: f64,
    #[serde(default = "defaults::jitter_fraction")]
    pub jitter_fraction: f64,
    #[serde(default)]
    pub noise_amplitude: f64,
}

mod defaults {
    pub fn base_latency_ms() -> f64 {
        10.0
    }
    pub fn queue_gain_ms() -> f64 {
        40.0
    }
    pub fn overload_latency_ms() -> f64 {
        5000.0
    }
    pub fn latency_cap_ms() -> f64 {
        6000.0
    }
    pub fn priority_penalty() -> f64 {
        1.0
    }
    pub fn jitter_fraction() -> f64 {
        0.1
    }
}

impl ShaperConfig {
    /// Builds a config with the default threshold ladder: `bwR_i` falls
    /// linearly from `total_bw` for class 1 to a quarter of it for class n.
    pub fn with_default_thresholds(n: usize, total_bw: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("need at least 2 classes, got {n}")));
        }
        let thresholds = (0..n)
            .map(|i| total_bw * (1.0 - 0.75 * i as f64 / (n - 1) as f64))
            .collect();
        let config = ShaperConfig {
            n,
            total_bw,
            thresholds,
            base_latency_ms: defaults::base_latency_ms(),
            queue_gain_ms: defaults::queue_gain_ms(),
            overload_latency_ms: defaults::overload_latency_ms(),
            latency_cap_ms: defaults::latency_cap_ms(),
            priority_penalty: defaults::priority_penalty(),
            jitter_fraction: defaults::jitter_fraction(),
            noise_amplitude: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ShaperConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!("need at least 2 classes, got {}", self.n)));
        }
        check_dim(self.n, self.thresholds.len())?;
        if !(self.total_bw > 0.0 && self.total_bw.is_finite()) {
            return Err(Error::config("total_bw must be positive"));
        }
        for (i, &bw) in self.thresholds.iter().enumerate() {
            if !(bw > 0.0 && bw <= self.total_bw) {
                return Err(Error::config(format!(
                    "threshold of class {} must lie in (0, total_bw], got {bw}",
                    i + 1
                )));
            }
        }
        if self.thresholds.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("thresholds must be non-increasing in priority"));
        }
        let positive = [
            ("base_latency_ms", self.base_latency_ms),
            ("queue_gain_ms", self.queue_gain_ms),
            ("overload_latency_ms", self.overload_latency_ms),
            ("latency_cap_ms", self.latency_cap_ms),
            ("priority_penalty", self.priority_penalty),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(0.0..1.0).contains(&self.jitter_fraction) {
            return Err(Error::config("jitter_fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.noise_amplitude) {
            return Err(Error::config("noise_amplitude must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Priority penalty `p_i = 1 + κ·(n − i)/n` for the zero-based class `idx`.
    pub fn penalty(&self, idx: usize) -> f64 {
        let class = idx + 1;
        1.0 + self.priority_penalty * (self.n - class) as f64 / self.n as f64
    }

    /// Latency of a non-overloaded class at utilization `rho`.
    fn queue_latency(&self, idx: usize, rho: f64) -> f64 {
        let raw = (self.base_latency_ms + self.queue_gain_ms * rho / (1.0 - rho + POLE_GUARD)) * self.penalty(idx);
        raw.min(self.latency_cap_ms)
    }
}

/// One requested bandwidth per class, lowest priority first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestInput {
    pub tr: Vec<f64>,
}

impl TestInput {
    pub fn new(tr: Vec<f64>) -> Self {
        TestInput { tr }
    }

    pub fn zeros(n: usize) -> Self {
        TestInput { tr: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.tr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tr.is_empty()
    }

    /// Checks the sampling constraint `0 ≤ tr_i ≤ bwR_i`.
    pub fn validate(&self, config: &ShaperConfig) -> Result<()> {
        check_dim(config.n, self.tr.len())?;
        for (i, (&tr, &bw)) in self.tr.iter().zip(&config.thresholds).enumerate() {
            if !(0.0..=bw).contains(&tr) {
                return Err(Error::input(format!("tr_{} = {tr} outside [0, {bw}]", i + 1)));
            }
        }
        Ok(())
    }

    /// Weighted sum `Σ i·tr_i` with one-based weights; a sort key for test
    /// listings.
    pub fn weighted_sum(&self) -> f64 {
        self.tr.iter().enumerate().map(|(i, tr)| (i + 1) as f64 * tr).sum()
    }
}

impl From<Vec<f64>> for TestInput {
    fn from(tr: Vec<f64>) -> Self {
        TestInput { tr }
    }
}

/// Simulated per-class quality, lowest priority first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub alloc: Vec<f64>,
    pub latency_ms: Vec<f64>,
    pub jitter_ms: Vec<f64>,
    pub loss_pct: Vec<f64>,
}

impl ClassMetrics {
    pub fn len(&self) -> usize {
        self.alloc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alloc.is_empty()
    }
}

/// Greedy priority water-filling from class n down to class 1.
pub fn allocate_bandwidth(config: &ShaperConfig, input: &TestInput) -> Result<Vec<f64>> {
    check_dim(config.n, input.len())?;
    let mut alloc = vec![0.0; config.n];
    let mut remaining = config.total_bw;
    for i in (0..config.n).rev() {
        let a = input.tr[i].min(config.thresholds[i]).min(remaining).max(0.0);
        alloc[i] = a;
        remaining -= a;
    }
    Ok(alloc)
}

/// Maps a test input to per-class metrics.
///
/// Noise is only applied when the config carries a non-zero amplitude and a
/// seed is supplied; otherwise the result is a pure function of its inputs.
pub fn simulate(config: &ShaperConfig, input: &TestInput, seed: Option<u64>) -> Result<ClassMetrics> {
    input.validate(config)?;
    let alloc = allocate_bandwidth(config, input)?;
    let n = config.n;
    let p_top = config.penalty(n - 1);

    let mut latency_ms = Vec::with_capacity(n);
    let mut loss_pct = Vec::with_capacity(n);
    for i in 0..n {
        let tr = input.tr[i];
        let rho = alloc[i] / config.thresholds[i];
        let queued = config.queue_latency(i, rho);
        if alloc[i] >= tr {
            latency_ms.push(queued);
            loss_pct.push(0.0);
        } else {
            let shortfall = (tr - alloc[i]) / tr;
            let overload = config.overload_latency_ms * (1.0 + shortfall) * config.penalty(i) / p_top;
            // An overloaded class never sees less delay than it would at the
            // same utilization without a backlog.
            latency_ms.push(overload.max(queued).min(config.latency_cap_ms));
            loss_pct.push(100.0 * shortfall);
        }
    }
    let mut jitter_ms: Vec<f64> = latency_ms.iter().map(|l| config.jitter_fraction * l).collect();

    if let (Some(seed), true) = (seed, config.noise_amplitude > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = config.noise_amplitude;
        for i in 0..n {
            let fl: f64 = rng.random_range(1.0 - amp..=1.0 + amp);
            let fj: f64 = rng.random_range(1.0 - amp..=1.0 + amp);
            latency_ms[i] = (latency_ms[i] * fl).clamp(config.base_latency_ms, config.latency_cap_ms);
            jitter_ms[i] *= fj;
        }
    }

    Ok(ClassMetrics {
        alloc,
        latency_ms,
        jitter_ms,
        loss_pct,
    })
}
