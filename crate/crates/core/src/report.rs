//! Per-image and aggregate PSNR / SSIM / RMSE reports and the comparison
//! table.
//!
//! ```
//! use deshadow::report::{ImageMetrics, MetricsReport};
//! use deshadow::metrics::SsimMode;
//!
//! let rows = vec![
//!     ImageMetrics { id: "a".into(), psnr: 12.0, ssim: 0.8, rmse: 60.0 },
//!     ImageMetrics { id: "b".into(), psnr: 14.0, ssim: 0.9, rmse: 50.0 },
//! ];
//! let report = MetricsReport::new("jung", "test", "Input", SsimMode::Global, rows);
//! assert_eq!(report.aggregate.psnr, 13.0);
//! assert!(report.to_csv().ends_with("mean,13.00,0.85,55.00\n"));
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{psnr, real_serde, rmse, ssim, LossConfig, SsimMode};
use crate::model::{infer, ModelConfig, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    #[serde(with = "real_serde")]
    pub psnr: f64,
    #[serde(with = "real_serde")]
    pub ssim: f64,
    #[serde(with = "real_serde")]
    pub rmse: f64,
}

/// Arithmetic means over the images of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(with = "real_serde")]
    pub psnr: f64,
    #[serde(with = "real_serde")]
    pub ssim: f64,
    #[serde(with = "real_serde")]
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub split: String,
    pub method: String,
    pub ssim_mode: SsimMode,
    pub per_image: Vec<ImageMetrics>,
    pub aggregate: Aggregate,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn fmt2(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else if v.is_nan() {
        "nan".to_owned()
    } else if v > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

impl MetricsReport {
    pub fn new(
        dataset: impl Into<String>,
        split: impl Into<String>,
        method: impl Into<String>,
        ssim_mode: SsimMode,
        per_image: Vec<ImageMetrics>,
    ) -> Self {
        let aggregate = Aggregate {
            psnr: mean(per_image.iter().map(|r| r.psnr)),
            ssim: mean(per_image.iter().map(|r| r.ssim)),
            rmse: mean(per_image.iter().map(|r| r.rmse)),
        };
        MetricsReport {
            dataset: dataset.into(),
            split: split.into(),
            method: method.into(),
            ssim_mode,
            per_image,
            aggregate,
        }
    }

    /// `id,psnr,ssim,rmse` rows at two decimals, closed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,psnr,ssim,rmse\n");
        let rows = self
            .per_image
            .iter()
            .map(|r| (r.id.as_str(), r.psnr, r.ssim, r.rmse))
            .chain(std::iter::once((
                "mean",
                self.aggregate.psnr,
                self.aggregate.ssim,
                self.aggregate.rmse,
            )));
        for (id, p, s, r) in rows {
            let _ = writeln!(out, "{id},{},{},{}", fmt2(p), fmt2(s), fmt2(r));
        }
        out
    }

    /// Full-precision JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Score one prediction against its target.
pub fn score(id: &str, pred: &Image, target: &Image, mode: SsimMode) -> Result<ImageMetrics> {
    let cfg = LossConfig {
        ssim_mode: mode,
        ..LossConfig::metric()
    };
    Ok(ImageMetrics {
        id: id.to_owned(),
        psnr: psnr(pred, target)?,
        ssim: ssim(pred, target, &cfg)?,
        rmse: rmse(pred, target)?,
    })
}

/// Score `predict(shadow)` against the target of every sample.
pub fn evaluate_with<F>(samples: &[PairedSample], mode: SsimMode, mut predict: F) -> Result<Vec<ImageMetrics>>
where
    F: FnMut(&Image) -> Result<Image>,
{
    if samples.is_empty() {
        return Err(Error::DatasetEmpty("evaluation split".into()));
    }
    samples
        .iter()
        .map(|s| {
            let pred = predict(&s.shadow)?;
            score(&s.id, &pred, &s.target, mode)
        })
        .collect()
}

/// Evaluate a model, or the raw shadow inputs when `model` is `None`.
pub fn evaluate(
    samples: &[PairedSample],
    model: Option<(&ParamStore, &ModelConfig)>,
    mode: SsimMode,
) -> Result<Vec<ImageMetrics>> {
    match model {
        Some((params, cfg)) => evaluate_with(samples, mode, |img| infer(img, params, cfg)),
        None => evaluate_with(samples, mode, |img| Ok(img.clone())),
    }
}

/// One method's row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub jung: Option<Aggregate>,
    pub kligler: Option<Aggregate>,
}

impl TableRow {
    /// Collect the Jung and Kligler aggregates of one method from a set of
    /// reports.
    pub fn from_reports<'a>(method: &str, reports: impl IntoIterator<Item = &'a MetricsReport>) -> Self {
        let mut row = TableRow {
            method: method.to_owned(),
            jung: None,
            kligler: None,
        };
        for r in reports.into_iter().filter(|r| r.method == method) {
            match r.dataset.as_str() {
                "jung" => row.jung = Some(r.aggregate),
                "kligler" => row.kligler = Some(r.aggregate),
                _ => {}
            }
        }
        row
    }
}

const TABLE_HEADER: [&str; 7] = [
    "Method",
    "Jung PSNR",
    "Jung SSIM",
    "Jung RMSE",
    "Kligler PSNR",
    "Kligler SSIM",
    "Kligler RMSE",
];

fn cells(row: &TableRow) -> Vec<String> {
    let mut out = vec![row.method.clone()];
    for agg in [row.jung, row.kligler] {
        match agg {
            Some(a) => out.extend([fmt2(a.psnr), fmt2(a.ssim), fmt2(a.rmse)]),
            None => out.extend(["-".to_owned(), "-".to_owned(), "-".to_owned()]),
        }
    }
    out
}

/// Comparison table as comma-separated values.
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = TABLE_HEADER.join(",") + "\n";
    for r in rows {
        out += &(cells(r).join(",") + "\n");
    }
    out
}

/// Comparison table as a Markdown pipe table.
pub fn table_markdown(rows: &[TableRow]) -> String {
    let mut out = format!("| {} |\n", TABLE_HEADER.join(" | "));
    out += &format!("|{}\n", "---|".repeat(TABLE_HEADER.len()));
    for r in rows {
        out += &format!("| {} |\n", cells(r).join(" | "));
    }
    out
}
