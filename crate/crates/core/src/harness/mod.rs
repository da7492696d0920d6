//! Experiment harness: cross-validation, the MPCA baseline, method
//! benchmarks and their reports.

pub mod baselines;
pub mod benchmark;
pub mod cv;
pub mod report;
pub mod stats;

pub use benchmark::{BenchmarkConfig, BenchmarkReport, CellResult, Method};
pub use cv::CvGrid;
