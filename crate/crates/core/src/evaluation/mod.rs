//! Metrics, bounds, factor characteristics and sweep/ablation runs.

pub mod bounds;
pub mod characteristics;
pub mod metrics;
pub mod pipeline;
pub mod sweep;

use thiserror::Error;

pub use bounds::{lemma2_lower_bound, tau, theorem1_bound, theorem2_bound, BoundError, BoundInputs};
pub use characteristics::{estimate_characteristics, theorem2_check, ConceptBoundCheck, PairCharacteristics};
pub use metrics::{detection_rates, e_acc, lsm_mean, p_acc, Counts, MetricsReport};
pub use pipeline::{
    partition_results, process_instance, process_split, summarize, Graphs, InstanceResult, PipelineConfig,
};
pub use sweep::{
    cell_means, family_subgraph, ratio_subgraph, sweep_and_ablation, CellMean, FamilyFilter, SweepConfig, SweepRow,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot compute a metric over an empty dataset")]
    Empty,
    #[error("subgraph ratio {0} must be in (0, 1]")]
    Ratio(f64),
    #[error(transparent)]
    Score(#[from] crate::scoring::ScoreError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}
