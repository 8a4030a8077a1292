use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use super::{Cohort, DataError};
use crate::model::SubjectData;

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| DataError::Csv { path: path.to_path_buf(), source })
}

fn headers(reader: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<Vec<String>, DataError> {
    Ok(reader
        .headers()
        .map_err(|source| DataError::Csv { path: path.to_path_buf(), source })?
        .iter()
        .map(str::to_string)
        .collect())
}

fn require(headers: &[String], column: &str, file: &Path) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| DataError::MissingColumn { file: file.to_path_buf(), column: column.into() })
}

/// Numeric field parser that reports file, line and column on failure.
struct Fields<'a> {
    file: &'a Path,
    headers: &'a [String],
    record: csv::StringRecord,
    row: usize,
}

impl Fields<'_> {
    fn text(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("")
    }

    fn number(&self, col: usize) -> Result<f64, DataError> {
        let raw = self.text(col);
        raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DataError::NonNumericField {
            file: self.file.to_path_buf(),
            row: self.row,
            column: self.headers[col].clone(),
            value: raw.to_string(),
        })
    }
}

fn records<'a>(
    reader: &'a mut csv::Reader<std::fs::File>,
    path: &'a Path,
    headers: &'a [String],
) -> impl Iterator<Item = Result<Fields<'a>, DataError>> + 'a {
    reader.records().map(move |r| {
        let record = r.map_err(|source| DataError::Csv { path: path.to_path_buf(), source })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        Ok(Fields { file: path, headers, record, row })
    })
}

/// Reads a cohort from a subjects file (`id, time, event, x_*, z_*`) and a
/// measurements file (`id, obs_time`, one column per marker).
///
/// Rows are reported by their line number in the file, the header being
/// line 1. The follow-up horizon is the latest event or measurement time.
pub fn load_cohort(subjects_path: &Path, measurements_path: &Path) -> Result<Cohort, DataError> {
    let mut reader = open(subjects_path)?;
    let heads = headers(&mut reader, subjects_path)?;
    let id_col = require(&heads, "id", subjects_path)?;
    let time_col = require(&heads, "time", subjects_path)?;
    let event_col = require(&heads, "event", subjects_path)?;
    let x_cols: Vec<usize> = (0..heads.len()).filter(|&c| heads[c].starts_with("x_")).collect();
    let z_cols: Vec<usize> = (0..heads.len()).filter(|&c| heads[c].starts_with("z_")).collect();

    struct Partial {
        id: String,
        event_time: f64,
        event: bool,
        x: Vec<f64>,
        z: Vec<f64>,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    }
    let mut partial: Vec<Partial> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for fields in records(&mut reader, subjects_path, &heads) {
        let f = fields?;
        let id = f.text(id_col).to_string();
        if index.contains_key(&id) {
            return Err(DataError::DuplicateSubject { file: subjects_path.into(), row: f.row, id });
        }
        let event = f.number(event_col)?;
        if event != 0.0 && event != 1.0 {
            return Err(DataError::NonNumericField {
                file: subjects_path.into(),
                row: f.row,
                column: "event".into(),
                value: f.text(event_col).into(),
            });
        }
        let p = Partial {
            id: id.clone(),
            event_time: f.number(time_col)?,
            event: event == 1.0,
            x: x_cols.iter().map(|&c| f.number(c)).collect::<Result<_, _>>()?,
            z: z_cols.iter().map(|&c| f.number(c)).collect::<Result<_, _>>()?,
            times: Vec::new(),
            values: Vec::new(),
        };
        index.insert(id, partial.len());
        partial.push(p);
    }

    let mut reader = open(measurements_path)?;
    let mheads = headers(&mut reader, measurements_path)?;
    let mid_col = require(&mheads, "id", measurements_path)?;
    let obs_col = require(&mheads, "obs_time", measurements_path)?;
    let marker_cols: Vec<usize> = (0..mheads.len()).filter(|&c| c != mid_col && c != obs_col).collect();
    if marker_cols.is_empty() {
        return Err(DataError::MissingColumn { file: measurements_path.into(), column: "marker_1".into() });
    }
    for fields in records(&mut reader, measurements_path, &mheads) {
        let f = fields?;
        let id = f.text(mid_col);
        let &i = index.get(id).ok_or_else(|| DataError::UnknownSubject {
            file: measurements_path.into(),
            row: f.row,
            id: id.into(),
        })?;
        let t = f.number(obs_col)?;
        if t > partial[i].event_time {
            return Err(DataError::TimeAfterEvent {
                file: measurements_path.into(),
                row: f.row,
                column: "obs_time".into(),
                time: t,
                event_time: partial[i].event_time,
            });
        }
        let values = marker_cols.iter().map(|&c| f.number(c)).collect::<Result<Vec<_>, _>>()?;
        partial[i].times.push(t);
        partial[i].values.push(values);
    }

    let n_markers = marker_cols.len();
    let mut end: f64 = 0.0;
    let mut subjects = Vec::with_capacity(partial.len());
    for p in partial {
        if p.times.is_empty() {
            return Err(DataError::Invalid {
                file: PathBuf::from(measurements_path),
                message: format!("subject `{}` has no measurements", p.id),
            });
        }
        let mut order: Vec<usize> = (0..p.times.len()).collect();
        order.sort_by(|&a, &b| p.times[a].total_cmp(&p.times[b]));
        let obs_times: Vec<f64> = order.iter().map(|&j| p.times[j]).collect();
        let y = DMatrix::from_fn(order.len(), n_markers, |r, c| p.values[order[r]][c]);
        end = end.max(p.event_time).max(obs_times[obs_times.len() - 1]);
        subjects.push(SubjectData {
            id: p.id,
            obs_times,
            y,
            x: DVector::from_vec(p.x),
            z: DVector::from_vec(p.z),
            event_time: p.event_time,
            event: p.event,
        });
    }
    if subjects.is_empty() {
        return Err(DataError::Invalid { file: subjects_path.into(), message: "no subjects".into() });
    }
    let cohort = Cohort {
        subjects,
        end,
        marker_names: marker_cols.iter().map(|&c| mheads[c].clone()).collect(),
        x_names: x_cols.iter().map(|&c| heads[c].clone()).collect(),
        z_names: z_cols.iter().map(|&c| heads[c].clone()).collect(),
    };
    cohort.validate()?;
    Ok(cohort)
}
