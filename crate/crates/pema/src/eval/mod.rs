//! Metrics and the experiment harness: BLEU, perplexity, analytic FLOPs
//! accounting, informal-pattern counters, parameter sweeps, and latency
//! benchmarks.

pub mod bench;
pub mod flops;
pub mod metrics;
pub mod patterns;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use bench::{bench_latency, BenchReport};
pub use flops::{flops_per_token, FlopsDims, FlopsMethod, FlopsReport};
pub use metrics::{bleu, perplexity, BLEU_EPSILON};
pub use patterns::{count_informal_patterns, load_slang_dict, PatternReport};
pub use pipeline::{build_artifacts, build_base, Artifacts, PipelineConfig, TaskScores};
pub use report::Table;
pub use sweep::{run_sweep, SweepAxis, SweepReport};
