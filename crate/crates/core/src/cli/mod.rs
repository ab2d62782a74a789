//! Datasets, experiment configuration, sweeps and reports behind the
//! `advexplain` binary.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod pnm;
pub mod report;
pub mod svg;

pub use config::{ExperimentConfig, Method, SweepAxis, TargetLabel};
pub use dataset::{synthetic_blobs, BlobSpec, Dataset, DatasetSource, Provenance, Sample};
pub use experiment::{evaluate, read_results, run_experiment, write_results, RunOutput};
pub use pnm::{decode_pnm, encode_pnm, heatmap_pgm, read_pnm, write_pnm};
pub use report::{format_table, report, summary_table, Report, TableRow};
