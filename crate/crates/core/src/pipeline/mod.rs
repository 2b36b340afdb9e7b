//! Configuration, ingestion, synthetic cohorts and the end-to-end run.

pub mod audit;
pub mod config;
pub mod container;
pub mod manifest;
pub mod report;
pub mod run;
pub mod synth;

pub use audit::{AuditEntry, AuditLog};
pub use config::{RunConfig, PAWP_THRESHOLD_MMHG};
pub use container::{read_tensor, write_tensor};
pub use manifest::{ingest, read_manifest, Dataset, Manifest, ManifestRow, Subject};
pub use report::{PredictionRow, ReportRow};
pub use run::{run_pipeline, run_pipeline_with, PipelineHooks, RunOutcome, Stage};
pub use synth::{synthesize, Preset, SynthSpec};
