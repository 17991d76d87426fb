use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Error metrics of one prediction slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Pearson correlation; `None` when either side is constant.
    pub pcc: Option<f64>,
    pub n: usize,
}

impl Metrics {
    pub fn is_finite(&self) -> bool {
        self.mae.is_finite() && self.rmse.is_finite() && self.pcc.is_none_or(f64::is_finite)
    }
}

/// MAE, RMSE and PCC of `pred` against `truth`.
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::shape("metrics", format!("{} predictions vs {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("metrics over an empty slice".into()));
    }
    let n = pred.len() as f64;
    let mae = pred.iter().zip(truth).map(|(p, y)| (y - p).abs()).sum::<f64>() / n;
    let mse = pred.iter().zip(truth).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / n;
    Ok(Metrics {
        mae,
        rmse: mse.sqrt(),
        pcc: pearson(pred, truth),
        n: pred.len(),
    })
}

/// Pearson correlation of two equal-length slices, `None` if either is
/// constant. Rounding can land a few ulps beyond or short of ±1 for exactly
/// (anti-)correlated inputs, so such values are snapped to ±1.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Some(if (r.abs() - 1.0).abs() <= 8.0 * f64::EPSILON { r.signum() } else { r.clamp(-1.0, 1.0) })
}

/// Metrics per modality followed by an `overall` row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<(String, Metrics)>,
}

pub const OVERALL: &str = "overall";

impl MetricsReport {
    pub fn overall(&self) -> &Metrics {
        self.get(OVERALL).expect("report has an overall row")
    }

    pub fn get(&self, name: &str) -> Option<&Metrics> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Per-modality rows only.
    pub fn modalities(&self) -> impl Iterator<Item = &(String, Metrics)> {
        self.rows.iter().filter(|(n, _)| n != OVERALL)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|(_, m)| m.is_finite())
    }

    /// CSV with columns `modality, mae, rmse, pcc, n`; an undefined PCC is
    /// written as `undefined`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Config(format!("writing report: {e}"));
        out.write_record(["modality", "mae", "rmse", "pcc", "n"]).map_err(io)?;
        for (name, m) in &self.rows {
            out.write_record([
                name.clone(),
                m.mae.to_string(),
                m.rmse.to_string(),
                fmt_pcc(m.pcc),
                m.n.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::Config(format!("writing report: {e}")))
    }
}

pub(crate) fn fmt_pcc(p: Option<f64>) -> String {
    p.map_or_else(|| "undefined".into(), |v| v.to_string())
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>12} {:>12} {:>10} {:>9}", "modality", "mae", "rmse", "pcc", "n")?;
        for (name, m) in &self.rows {
            let pcc = m.pcc.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"));
            writeln!(f, "{name:<12} {:>12.4} {:>12.4} {pcc:>10} {:>9}", m.mae, m.rmse, m.n)?;
        }
        Ok(())
    }
}
