//! Characterization of non-robust input regions for multi-class network
//! traffic shapers.
//!
//! The pipeline runs from a requested-bandwidth tuple through an analytic
//! shaper model ([`shaper`]), per-class MOS scoring ([`quality`]) and a
//! priority-preserving robustness measure ([`robustness`]). The ENRICH loop
//! ([`enrich`]) combines adaptive random testing ([`art`]), regression trees
//! ([`regtree`]) and tree-guided range reduction ([`reduce`]) to emit
//! per-variable input ranges that predict non-robust behaviour. [`eval`]
//! holds the labelling oracle, classification and the statistical
//! comparators used to judge the emitted ranges.

pub mod art;
pub mod enrich;
pub mod error;
pub mod eval;
pub mod quality;
pub mod reduce;
pub mod regtree;
pub mod robustness;
pub mod shaper;

pub use enrich::{run, run_baseline, run_enrich, Approach, RunParams, RunRecord};
pub use error::{Error, Result};
pub use quality::QualityConstants;
pub use reduce::{RangeSet, VarRange};
pub use regtree::{Dataset, RegressionTree};
pub use robustness::{Label, RobustnessParams, RobustnessScore};
pub use shaper::{ClassMetrics, ShaperConfig, TestInput};
