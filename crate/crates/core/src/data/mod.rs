//! Cohort ingestion, synthetic cohorts with known truth, and persistence of
//! fit outputs.

mod io;
mod load;
mod simulate;

use std::collections::HashSet;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::{ModelError, SubjectData};

pub use io::{
    load_comparison, load_fit_stats, load_roc, load_samples, load_summary, render_comparison,
    render_summary,
    sidecar_path, write_cohort, write_comparison, write_fit_stats, write_roc, write_samples,
    write_summary, ComparisonRow,
};
pub use load::load_cohort;
pub use simulate::{simulate_cohort, CovariateSpec, SimulationConfig, SimulationTruth};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: PathBuf, column: String },
    #[error("{file}, row {row}: unknown subject `{id}`")]
    UnknownSubject { file: PathBuf, row: usize, id: String },
    #[error("{file}, row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericField { file: PathBuf, row: usize, column: String, value: String },
    #[error("{file}, row {row}, column `{column}`: measurement at {time} is after the subject's event time {event_time}")]
    TimeAfterEvent { file: PathBuf, row: usize, column: String, time: f64, event_time: f64 },
    #[error("{file}, row {row}: duplicate subject `{id}`")]
    DuplicateSubject { file: PathBuf, row: usize, id: String },
    #[error("{file}: {message}")]
    Invalid { file: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("event-time inversion failed for subject {subject}: {message}")]
    InversionFailure { subject: String, message: String },
}

/// Subjects plus dimension and naming metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub subjects: Vec<SubjectData>,
    /// End of follow-up; every time lies in `[0, end]`.
    pub end: f64,
    pub marker_names: Vec<String>,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
}

impl Cohort {
    pub fn n_markers(&self) -> usize {
        self.marker_names.len()
    }

    pub fn p(&self) -> usize {
        self.x_names.len()
    }

    pub fn p_z(&self) -> usize {
        self.z_names.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for s in &self.subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(ModelError::InvalidSubject { id: s.id.clone(), reason: "duplicate id".into() });
            }
            s.validate(self.end)?;
            if s.n_markers() != self.n_markers() || s.x.len() != self.p() || s.z.len() != self.p_z() {
                return Err(ModelError::DimensionMismatch(format!(
                    "subject {} does not match the cohort's dimensions",
                    s.id
                )));
            }
        }
        Ok(())
    }
}
