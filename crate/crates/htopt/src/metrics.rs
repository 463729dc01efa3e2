//! Per-round measurement rows and their CSV schema.

use crate::error::{HtoptError, Result};
use ndarray::ArrayView1;
use std::io::Write;
use std::path::Path;

/// Fixed metrics.csv header. Column order is part of the file contract.
pub const METRICS_HEADER: &str =
    "k,alpha_k,tau_k,f_bar,consensus_err,moreau_grad_norm,moreau_cert,recovery_err";

/// One measured round. Fields that were not measured (Moreau on off-cadence
/// rounds, recovery without ground truth) are `None` and serialize as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub k: usize,
    pub alpha_k: f64,
    pub tau_k: f64,
    pub f_bar: f64,
    pub consensus_err: f64,
    pub moreau_grad_norm: Option<f64>,
    pub moreau_cert: Option<f64>,
    pub recovery_err: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".to_string(),
    }
}

pub fn write_metrics<W: Write>(mut w: W, rows: &[MetricsRow]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.alpha_k,
            r.tau_k,
            r.f_bar,
            r.consensus_err,
            fmt_opt(r.moreau_grad_norm),
            fmt_opt(r.moreau_cert),
            fmt_opt(r.recovery_err)
        )?;
    }
    Ok(())
}

pub fn write_metrics_file(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_metrics(std::io::BufWriter::new(f), rows)
}

fn parse_opt(tok: &str) -> Result<Option<f64>> {
    if tok == "NA" {
        return Ok(None);
    }
    tok.parse::<f64>()
        .map(Some)
        .map_err(|e| HtoptError::Format(format!("bad metrics value {tok}: {e}")))
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HtoptError::Format("empty metrics file".into()))?;
    if header != METRICS_HEADER {
        return Err(HtoptError::Format(format!(
            "unexpected metrics header: {header}"
        )));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 8 {
            return Err(HtoptError::Format(format!(
                "expected 8 columns, got {} in {line}",
                toks.len()
            )));
        }
        rows.push(MetricsRow {
            k: toks[0]
                .parse()
                .map_err(|e| HtoptError::Format(format!("bad round index: {e}")))?,
            alpha_k: toks[1]
                .parse()
                .map_err(|e| HtoptError::Format(format!("bad alpha: {e}")))?,
            tau_k: toks[2]
                .parse()
                .map_err(|e| HtoptError::Format(format!("bad tau: {e}")))?,
            f_bar: toks[3]
                .parse()
                .map_err(|e| HtoptError::Format(format!("bad f_bar: {e}")))?,
            consensus_err: toks[4]
                .parse()
                .map_err(|e| HtoptError::Format(format!("bad consensus: {e}")))?,
            moreau_grad_norm: parse_opt(toks[5])?,
            moreau_cert: parse_opt(toks[6])?,
            recovery_err: parse_opt(toks[7])?,
        });
    }
    Ok(rows)
}

/// Sign-invariant relative recovery error:
/// min(||theta - truth||, ||theta + truth||) / ||truth||.
pub fn recovery_error(theta: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    if theta.len() != truth.len() {
        return Err(HtoptError::Shape(
            "recovery error needs matching dimensions".into(),
        ));
    }
    let tn = truth.dot(&truth).sqrt();
    if tn == 0.0 {
        return Err(HtoptError::Parameter(
            "recovery error undefined for zero truth".into(),
        ));
    }
    let minus = (&theta.to_owned() - &truth.to_owned())
        .mapv(|v| v * v)
        .sum()
        .sqrt();
    let plus = (&theta.to_owned() + &truth.to_owned())
        .mapv(|v| v * v)
        .sum()
        .sqrt();
    Ok(minus.min(plus) / tn)
}
