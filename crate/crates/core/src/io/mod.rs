//! File formats: FTE1 embeddings, JSON-lines records, TOML manifests and CSV
//! outputs.

pub mod fte;
pub mod jsonl;
pub mod manifest;
pub mod output;

pub use fte::{read_fte, write_fte};
pub use jsonl::{read_jsonl, write_jsonl};
pub use manifest::{ingest, write_dataset, Manifest, ManifestOptions};
pub use output::{read_scores_csv, write_report_csv, write_scores_csv, RepresentationRecord, SplitScores};
