//! Gaussian-copula simulation and the coverage study built on it.

pub mod copula;
pub mod experiment;
pub mod report;

pub use copula::{
    apply_marginal, estimate_true_quantile, generate_gaussian_matrix, simulate_dataset,
    CovarianceSpec, DesignSlice, MarginalSpec,
};
pub use experiment::{run_coverage_experiment, ExperimentConfig, ExperimentOutcome, ReplicationRecord};
pub use report::{read_report, write_report, CoverageReport, CoverageRow, ReportFormat};
