//! Delimited-text persistence of cohorts, posterior draws, summaries, fit
//! statistics, ROC curves and comparison tables.
//!
//! Reals are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Cohort, DataError};
use crate::diagnostics::{FitStats, ParamSummary, RocResult};
use crate::gibbs::{PosteriorSamples, SampleMeta};
use crate::model::LinkKind;

fn real(v: f64) -> String {
    format!("{v:?}")
}

fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    fs::write(path, text).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

fn invalid(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Invalid { file: path.to_path_buf(), message: message.into() }
}

fn parse_real(path: &Path, row: usize, column: &str, raw: &str) -> Result<f64, DataError> {
    raw.trim().parse::<f64>().map_err(|_| DataError::NonNumericField {
        file: path.to_path_buf(),
        row,
        column: column.into(),
        value: raw.into(),
    })
}

/// Metadata sidecar of a samples file: same stem, `.json` extension.
pub fn sidecar_path(samples_path: &Path) -> PathBuf {
    samples_path.with_extension("json")
}

/// Writes one chain's draws as CSV (parameter columns, then `loglik.i`) and
/// its metadata as a JSON sidecar.
pub fn write_samples(samples: &PosteriorSamples, path: &Path) -> Result<(), DataError> {
    let n = samples.meta.dims.n_subjects;
    let mut out = samples.names().join(",");
    for i in 1..=n {
        write!(out, ",loglik.{i}").unwrap();
    }
    out.push('\n');
    for (draw, ll) in samples.draws.iter().zip(&samples.loglik) {
        let row: Vec<String> = draw.iter().chain(ll).map(|&v| real(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(&samples.meta)
        .map_err(|source| DataError::Json { path: sidecar.clone(), source })?;
    write_text(&sidecar, &(json + "\n"))
}

pub fn load_samples(path: &Path) -> Result<PosteriorSamples, DataError> {
    let sidecar = sidecar_path(path);
    let meta: SampleMeta = serde_json::from_str(&read_text(&sidecar)?)
        .map_err(|source| DataError::Json { path: sidecar.clone(), source })?;
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| invalid(path, "empty samples file"))?.split(',').collect();
    let names = crate::gibbs::parameter_names(meta.dims);
    let n = meta.dims.n_subjects;
    let expected: Vec<String> = names.iter().cloned().chain((1..=n).map(|i| format!("loglik.{i}"))).collect();
    if header != expected {
        let missing = expected.iter().find(|e| !header.contains(&e.as_str())).cloned();
        return Err(match missing {
            Some(column) => DataError::MissingColumn { file: path.to_path_buf(), column },
            None => invalid(path, "columns do not match the metadata's dimensions"),
        });
    }
    let k = names.len();
    let mut draws = Vec::new();
    let mut loglik = Vec::new();
    for (r, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(invalid(path, format!("row {} has {} fields, expected {}", r + 2, fields.len(), header.len())));
        }
        let values = fields
            .iter()
            .zip(&header)
            .map(|(f, c)| parse_real(path, r + 2, c, f))
            .collect::<Result<Vec<f64>, _>>()?;
        loglik.push(values[k..].to_vec());
        let mut values = values;
        values.truncate(k);
        draws.push(values);
    }
    Ok(PosteriorSamples { meta, draws, loglik })
}

/// `parameter,mean,lower,upper,rhat`; R-hat is left empty when unavailable.
pub fn write_summary(rows: &[ParamSummary], path: &Path) -> Result<(), DataError> {
    write_text(path, &render_summary(rows))
}

pub fn render_summary(rows: &[ParamSummary]) -> String {
    let mut out = String::from("parameter,mean,lower,upper,rhat\n");
    for r in rows {
        let rhat = r.rhat.map(real).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", r.name, real(r.mean), real(r.lower), real(r.upper), rhat).unwrap();
    }
    out
}

pub fn load_summary(path: &Path) -> Result<Vec<ParamSummary>, DataError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("parameter,mean,lower,upper,rhat") {
        return Err(invalid(path, "expected header `parameter,mean,lower,upper,rhat`"));
    }
    lines
        .enumerate()
        .map(|(r, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(invalid(path, format!("row {} has {} fields, expected 5", r + 2, f.len())));
            }
            Ok(ParamSummary {
                name: f[0].to_string(),
                mean: parse_real(path, r + 2, "mean", f[1])?,
                lower: parse_real(path, r + 2, "lower", f[2])?,
                upper: parse_real(path, r + 2, "upper", f[3])?,
                rhat: if f[4].is_empty() { None } else { Some(parse_real(path, r + 2, "rhat", f[4])?) },
            })
        })
        .collect()
}

/// `statistic,value` rows: DIC, p_D, the two deviance terms, LPML, then
/// `CPO.i` per subject.
pub fn write_fit_stats(stats: &FitStats, path: &Path) -> Result<(), DataError> {
    let mut out = String::from("statistic,value\n");
    for (k, v) in [
        ("DIC", stats.dic),
        ("p_D", stats.p_d),
        ("mean_deviance", stats.mean_deviance),
        ("deviance_at_mean", stats.deviance_at_mean),
        ("LPML", stats.lpml),
    ] {
        writeln!(out, "{k},{}", real(v)).unwrap();
    }
    for (i, c) in stats.cpo.iter().enumerate() {
        writeln!(out, "CPO.{},{}", i + 1, real(*c)).unwrap();
    }
    write_text(path, &out)
}

pub fn load_fit_stats(path: &Path) -> Result<FitStats, DataError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("statistic,value") {
        return Err(invalid(path, "expected header `statistic,value`"));
    }
    let mut scalars = [None; 5];
    let mut cpo = Vec::new();
    for (r, line) in lines.enumerate() {
        let (key, raw) = line.split_once(',').ok_or_else(|| invalid(path, format!("row {} is not `key,value`", r + 2)))?;
        let v = parse_real(path, r + 2, key, raw)?;
        match key {
            "DIC" => scalars[0] = Some(v),
            "p_D" => scalars[1] = Some(v),
            "mean_deviance" => scalars[2] = Some(v),
            "deviance_at_mean" => scalars[3] = Some(v),
            "LPML" => scalars[4] = Some(v),
            k if k.starts_with("CPO.") => cpo.push(v),
            other => return Err(invalid(path, format!("unknown statistic `{other}`"))),
        }
    }
    let names = ["DIC", "p_D", "mean_deviance", "deviance_at_mean", "LPML"];
    let mut vals = [0.0; 5];
    for (k, s) in scalars.iter().enumerate() {
        vals[k] = s.ok_or_else(|| DataError::MissingColumn { file: path.to_path_buf(), column: names[k].into() })?;
    }
    Ok(FitStats {
        dic: vals[0],
        p_d: vals[1],
        mean_deviance: vals[2],
        deviance_at_mean: vals[3],
        lpml: vals[4],
        cpo,
    })
}

/// A metadata comment line, an `fpr,tpr` table and a closing `auc,<value>`
/// line.
pub fn write_roc(roc: &RocResult, path: &Path) -> Result<(), DataError> {
    let mut out = format!(
        "# landmark={},horizon={},n_at_risk={},degenerate={}\nfpr,tpr\n",
        real(roc.landmark),
        real(roc.horizon),
        roc.n_at_risk,
        roc.degenerate
    );
    for &(f, t) in &roc.points {
        writeln!(out, "{},{}", real(f), real(t)).unwrap();
    }
    writeln!(out, "auc,{}", real(roc.auc)).unwrap();
    write_text(path, &out)
}

pub fn load_roc(path: &Path) -> Result<RocResult, DataError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let meta = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| invalid(path, "missing `# landmark=...` line"))?;
    let mut landmark = None;
    let mut horizon = None;
    let mut n_at_risk = None;
    let mut degenerate = None;
    for kv in meta.split(',') {
        let (k, v) = kv.split_once('=').ok_or_else(|| invalid(path, format!("bad metadata entry `{kv}`")))?;
        match k {
            "landmark" => landmark = Some(parse_real(path, 1, k, v)?),
            "horizon" => horizon = Some(parse_real(path, 1, k, v)?),
            "n_at_risk" => n_at_risk = v.parse::<usize>().ok(),
            "degenerate" => degenerate = v.parse::<bool>().ok(),
            _ => return Err(invalid(path, format!("unknown metadata key `{k}`"))),
        }
    }
    if lines.next() != Some("fpr,tpr") {
        return Err(invalid(path, "expected header `fpr,tpr` on line 2"));
    }
    let mut points = Vec::new();
    let mut auc = None;
    for (r, line) in lines.enumerate() {
        let (a, b) = line.split_once(',').ok_or_else(|| invalid(path, format!("row {} is not a pair", r + 3)))?;
        if a == "auc" {
            auc = Some(parse_real(path, r + 3, "auc", b)?);
        } else {
            points.push((parse_real(path, r + 3, "fpr", a)?, parse_real(path, r + 3, "tpr", b)?));
        }
    }
    let missing = |c: &str| DataError::MissingColumn { file: path.to_path_buf(), column: c.into() };
    Ok(RocResult {
        landmark: landmark.ok_or_else(|| missing("landmark"))?,
        horizon: horizon.ok_or_else(|| missing("horizon"))?,
        points,
        auc: auc.ok_or_else(|| missing("auc"))?,
        n_at_risk: n_at_risk.ok_or_else(|| missing("n_at_risk"))?,
        degenerate: degenerate.ok_or_else(|| missing("degenerate"))?,
    })
}

/// One fitted model's row in a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_id: String,
    pub q: usize,
    pub kind: LinkKind,
    pub dic: f64,
    pub p_d: f64,
    pub lpml: f64,
}

pub fn write_comparison(rows: &[ComparisonRow], path: &Path) -> Result<(), DataError> {
    write_text(path, &render_comparison(rows))
}

/// Comparison table as text, also used for printing to stdout.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("model_id,q,kind,DIC,p_D,LPML\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.model_id, r.q, r.kind, real(r.dic), real(r.p_d), real(r.lpml)).unwrap();
    }
    out
}

pub fn load_comparison(path: &Path) -> Result<Vec<ComparisonRow>, DataError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("model_id,q,kind,DIC,p_D,LPML") {
        return Err(invalid(path, "expected header `model_id,q,kind,DIC,p_D,LPML`"));
    }
    lines
        .enumerate()
        .map(|(r, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(invalid(path, format!("row {} has {} fields, expected 6", r + 2, f.len())));
            }
            Ok(ComparisonRow {
                model_id: f[0].to_string(),
                q: f[1].parse().map_err(|_| DataError::NonNumericField {
                    file: path.to_path_buf(),
                    row: r + 2,
                    column: "q".into(),
                    value: f[1].into(),
                })?,
                kind: f[2].parse().map_err(|m: String| invalid(path, format!("row {}: {m}", r + 2)))?,
                dic: parse_real(path, r + 2, "DIC", f[3])?,
                p_d: parse_real(path, r + 2, "p_D", f[4])?,
                lpml: parse_real(path, r + 2, "LPML", f[5])?,
            })
        })
        .collect()
}

/// Writes a cohort in the two-file layout read by
/// [`load_cohort`](super::load_cohort).
pub fn write_cohort(cohort: &Cohort, subjects_path: &Path, measurements_path: &Path) -> Result<(), DataError> {
    let mut subj = String::from("id,time,event");
    for name in cohort.x_names.iter().chain(&cohort.z_names) {
        write!(subj, ",{name}").unwrap();
    }
    subj.push('\n');
    let mut meas = String::from("id,obs_time");
    for name in &cohort.marker_names {
        write!(meas, ",{name}").unwrap();
    }
    meas.push('\n');
    for s in &cohort.subjects {
        write!(subj, "{},{},{}", s.id, real(s.event_time), u8::from(s.event)).unwrap();
        for v in s.x.iter().chain(s.z.iter()) {
            write!(subj, ",{}", real(*v)).unwrap();
        }
        subj.push('\n');
        for (j, t) in s.obs_times.iter().enumerate() {
            write!(meas, "{},{}", s.id, real(*t)).unwrap();
            for v in s.y.row(j).iter() {
                write!(meas, ",{}", real(*v)).unwrap();
            }
            meas.push('\n');
        }
    }
    write_text(subjects_path, &subj)?;
    write_text(measurements_path, &meas)
}
