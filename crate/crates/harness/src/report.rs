//! Certified-accuracy curves, average certified radius and the CSV report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use diffsmooth_core::certify::{parse_records, CertificationRecord};

use crate::error::{HarnessError, Result};

pub const REPORT_HEADER: &str = "sigma,sigma_local,m,radius,certified_accuracy,acr,method";
pub const MANIFEST_HEADER: &str = "method\tsigma\tsigma_local\tm\trecords";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub sigma: f64,
    pub sigma_local: f64,
    pub m: usize,
    pub radius: f64,
    pub certified_accuracy: f64,
    pub acr: f64,
    pub method: String,
}

/// Fraction of records that are correct with `R ≥ radius`.
pub fn certified_accuracy(records: &[CertificationRecord<f64>], radius: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records.iter().filter(|r| r.correct && r.radius >= radius).count();
    hits as f64 / records.len() as f64
}

/// Mean of `R` over all records, counting wrong or abstained ones as 0.
pub fn average_certified_radius(records: &[CertificationRecord<f64>]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records
        .iter()
        .map(|r| if r.correct { r.radius } else { 0.0 })
        .sum::<f64>()
        / records.len() as f64
}

/// One run of the certification loop under a fixed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub method: String,
    pub sigma: f64,
    pub sigma_local: f64,
    pub m: usize,
}

pub fn rows_for(key: &RunKey, records: &[CertificationRecord<f64>], grid: &[f64]) -> Vec<ReportRow> {
    let acr = average_certified_radius(records);
    grid.iter()
        .map(|&radius| ReportRow {
            sigma: key.sigma,
            sigma_local: key.sigma_local,
            m: key.m,
            radius,
            certified_accuracy: certified_accuracy(records, radius),
            acr,
            method: key.method.clone(),
        })
        .collect()
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.sigma, r.sigma_local, r.m, r.radius, r.certified_accuracy, r.acr, r.method
        );
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(HarnessError::config(format!(
            "report must start with `{REPORT_HEADER}`"
        )));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || HarnessError::config(format!("malformed report row `{l}`"));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(ReportRow {
                sigma: num(f[0])?,
                sigma_local: num(f[1])?,
                m: f[2].parse().map_err(|_| bad())?,
                radius: num(f[3])?,
                certified_accuracy: num(f[4])?,
                acr: num(f[5])?,
                method: f[6].to_string(),
            })
        })
        .collect()
}

/// Record files of one command, paths relative to the manifest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<(RunKey, PathBuf)>,
}

impl Manifest {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(MANIFEST_HEADER);
        s.push('\n');
        for (k, p) in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                k.method,
                k.sigma,
                k.sigma_local,
                k.m,
                p.display()
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(HarnessError::config(format!(
                "manifest must start with `{MANIFEST_HEADER}`"
            )));
        }
        let entries = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                let bad = || HarnessError::config(format!("malformed manifest row `{l}`"));
                if f.len() != 5 {
                    return Err(bad());
                }
                let key = RunKey {
                    method: f[0].to_string(),
                    sigma: f[1].parse().map_err(|_| bad())?,
                    sigma_local: f[2].parse().map_err(|_| bad())?,
                    m: f[3].parse().map_err(|_| bad())?,
                };
                Ok((key, PathBuf::from(f[4])))
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}

/// Rebuilds the report rows from a manifest and the record files it lists.
pub fn report_from_manifest(manifest_path: &Path, grid: &[f64]) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| HarnessError::io(manifest_path, e))?;
    let manifest = Manifest::parse(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (key, rel) in &manifest.entries {
        let path = base.join(rel);
        let records = read_records(&path)?;
        rows.extend(rows_for(key, &records, grid));
    }
    Ok(rows)
}

pub fn read_records(path: &Path) -> Result<Vec<CertificationRecord<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_records(&text).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
}
