//! Compression report rows and their CSV / JSON emission.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// One compression result with the full parameter tuple that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub lambda: Option<f64>,
    pub lambda_increment: Option<f64>,
    pub seed: u64,
    pub sparsity: f64,
    pub k: usize,
    pub mode: String,
    pub ratio: Option<f64>,
    pub entropy_bits: Option<f64>,
    pub total_bytes: Option<usize>,
    pub mask_bytes: Option<usize>,
    pub label_bytes: Option<usize>,
    pub centroid_bytes: Option<usize>,
    pub baseline_bytes: Option<usize>,
    pub eval_acc: Option<f64>,
    pub status: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Usage(format!(
                "unknown format `{other}` (csv or json)"
            ))),
        }
    }
}

pub fn render(rows: &[ReportRow], format: Format) -> Result<Vec<u8>, CliError> {
    let runtime = |e: &dyn std::fmt::Display| CliError::Runtime(format!("writing report: {e}"));
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| runtime(&e))?;
            }
            w.into_inner().map_err(|e| runtime(&e))
        }
        Format::Json => {
            let mut out = Vec::new();
            for r in rows {
                serde_json::to_writer(&mut out, r).map_err(|e| runtime(&e))?;
                out.push(b'\n');
            }
            Ok(out)
        }
    }
}

/// Writes to `path`, or to stdout when none is given.
pub fn emit(rows: &[ReportRow], format: Format, path: Option<&Path>) -> Result<(), CliError> {
    let bytes = render(rows, format)?;
    match path {
        Some(p) => write_atomic(p, &bytes),
        None => io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Runtime(format!("stdout: {e}"))),
    }
}

/// Writes through a sibling temporary file so a failed run leaves no partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let err = |e: io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, bytes).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ReportRow {
        ReportRow {
            lambda: Some(0.005),
            lambda_increment: None,
            seed: 1,
            sparsity: 0.5,
            k: 16,
            mode: "masked".into(),
            ratio: Some(2.5),
            entropy_bits: Some(3.25),
            total_bytes: Some(100),
            mask_bytes: Some(10),
            label_bytes: Some(40),
            centroid_bytes: Some(6),
            baseline_bytes: Some(250),
            eval_acc: None,
            status: "ok",
            error: String::new(),
        }
    }

    #[test]
    fn csv_has_header_and_blank_missing_values() {
        let text = String::from_utf8(render(&[row()], Format::Csv).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "lambda,lambda_increment,seed,sparsity,k,mode,ratio,entropy_bits,total_bytes,mask_bytes,label_bytes,centroid_bytes,baseline_bytes,eval_acc,status,error"
        );
        assert_eq!(
            lines.next().unwrap(),
            "0.005,,1,0.5,16,masked,2.5,3.25,100,10,40,6,250,,ok,"
        );
    }

    #[test]
    fn json_lines() {
        let text = String::from_utf8(render(&[row(), row()], Format::Json).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["mode"], "masked");
        assert!(v["eval_acc"].is_null());
    }
}
