use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::SegmentationReport;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub full: Option<f64>,
    pub masked: Option<f64>,
}

/// Metrics with full-image and masked values side by side.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    /// Free-form lines printed under the table, such as the embedder in use.
    pub notes: Vec<String>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl MetricReport {
    pub fn push(&mut self, metric: impl Into<String>, full: Option<f64>, masked: Option<f64>) {
        self.rows.push(MetricRow {
            metric: metric.into(),
            full,
            masked,
        });
    }

    /// Rows `iou_<c>` per class, then `miou` and `pixel_accuracy`.
    pub fn add_segmentation(&mut self, seg: &SegmentationReport) {
        for (c, v) in seg.iou.iter().enumerate() {
            self.push(format!("iou_{c}"), *v, None);
        }
        self.push("miou", Some(seg.miou), None);
        self.push("pixel_accuracy", Some(seg.pixel_accuracy), None);
    }

    pub fn get(&self, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    /// Checks every value against the range of its metric.
    pub fn validate(&self) -> Result<()> {
        const TOL: f64 = 1e-9;
        for row in &self.rows {
            let (lo, hi) = match row.metric.as_str() {
                m if m.starts_with("iou_") || m == "miou" || m == "pixel_accuracy" => (0.0, 1.0),
                "ssim" => (-1.0, 1.0),
                _ => (0.0, f64::INFINITY),
            };
            for v in [row.full, row.masked].into_iter().flatten() {
                if !(v >= lo - TOL && v <= hi + TOL) {
                    return Err(Error::OutOfRange {
                        what: "metric value",
                        value: v,
                        lo,
                        hi,
                    });
                }
            }
        }
        Ok(())
    }

    /// Aligned human-readable table followed by the notes.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.metric.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}  {:>12}  {:>12}\n", "metric", "full", "masked");
        for r in &self.rows {
            let show = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}", r.metric, show(r.full), show(r.masked));
        }
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        out
    }

    /// `metric,full,masked` rows; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,full,masked\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.metric, cell(r.full), cell(r.masked));
        }
        out
    }
}
