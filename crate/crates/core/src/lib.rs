//! Self-adjusting tree with capacity-`c` nodes, hash-addressed items and
//! local (greedy) routing, plus the tooling to measure it: working-set
//! metrics, static baselines, trace generation and a matching-model export.

pub mod addressing;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod matching;
pub mod metrics;
pub mod traces;
pub mod tree;

pub use addressing::{hash_bit, path_node, route_child, AddressScheme, DigestAlgorithm, ItemAddress, ItemId, NodeIndex};
pub use error::{Error, Result};
pub use tree::{AccessRecord, CheckStats, InitReport, SeedTree, StateDigest, TreeConfig, TreeNode};
pub use baselines::{oblivious_cost, static_optimal_cost, FrequencyTable};
pub use experiment::{run, simulate, sweep, write_csv, ExperimentConfig, ResultRow, Simulation, SweepGrid, TraceSpec};
pub use matching::{diff, export, matching_search, matching_search_path, Edge, MatchingDelta, MatchingId, MatchingSet};
pub use metrics::{
    competitive_report, lower_bound, mru_audit, mru_level, ranks, CompetitiveReport, CostLedger, MruAudit, RankTracker,
    COMPETITIVE_RATIO_CEILING,
};
pub use traces::{
    emit_trace, generate_trace, generate_trace_with_stats, ingest_trace, parse_trace, write_trace_file, GenerationStats,
    Trace, TraceFormat, TraceMetadata, TraceOrigin,
};
