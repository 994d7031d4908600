//! Evaluation metrics: center-point matching rates at fixed and per-pair
//! thresholds, mean Euclidean distance with per-axis projections, and
//! landmark-style tables.
//!
//! All reductions run in input order, so results are deterministic; standard
//! deviations are population (1/n) and that choice is recorded in the output
//! metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PhysPoint;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_id: String,
    pub predicted: PhysPoint,
    pub truth: PhysPoint,
    pub radius_mm: f64,
    pub method: String,
}

impl EvalRecord {
    pub fn distance(&self) -> f64 {
        self.predicted.distance_to(self.truth)
    }

    fn validate(&self) -> Result<()> {
        if !self.predicted.is_finite() || !self.truth.is_finite() {
            return Err(Error::NonFinite(format!("record {}", self.pair_id)));
        }
        if !(self.radius_mm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "record {} has non-positive radius",
                self.pair_id
            )));
        }
        Ok(())
    }
}

/// Threshold rule for center-point matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CpmThreshold {
    Fixed(f64),
    PerPairRadius,
}

/// Percentage of records whose center error is strictly below the threshold.
pub fn cpm(records: &[EvalRecord], threshold: CpmThreshold) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("cpm needs at least one record".into()));
    }
    let mut hits = 0usize;
    for r in records {
        r.validate()?;
        let limit = match threshold {
            CpmThreshold::Fixed(mm) => mm,
            CpmThreshold::PerPairRadius => r.radius_mm,
        };
        if r.distance() < limit {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / records.len() as f64)
}

/// Mean +/- population standard deviation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

/// Distance fields of an evaluation: MED plus per-axis projections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MedSummary {
    pub med: MeanStd,
    pub med_z: MeanStd,
    pub med_y: MeanStd,
    pub med_x: MeanStd,
}

/// Euclidean and per-axis absolute errors in millimeters.
pub fn med(records: &[EvalRecord]) -> Result<MedSummary> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("med needs at least one record".into()));
    }
    let mut d = Vec::with_capacity(records.len());
    let mut dz = Vec::with_capacity(records.len());
    let mut dy = Vec::with_capacity(records.len());
    let mut dx = Vec::with_capacity(records.len());
    for r in records {
        r.validate()?;
        d.push(r.distance());
        dz.push((r.predicted.z - r.truth.z).abs());
        dy.push((r.predicted.y - r.truth.y).abs());
        dx.push((r.predicted.x - r.truth.x).abs());
    }
    Ok(MedSummary {
        med: mean_std(&d),
        med_z: mean_std(&dz),
        med_y: mean_std(&dy),
        med_x: mean_std(&dx),
    })
}

/// Everything the evaluation emits for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub cpm_at_10mm: f64,
    pub cpm_at_radius: f64,
    pub med_x: MeanStd,
    pub med_y: MeanStd,
    pub med_z: MeanStd,
    pub med: MeanStd,
    pub n: usize,
    /// Std convention used throughout ("population").
    pub std_kind: String,
}

pub fn summarize(records: &[EvalRecord]) -> Result<EvalSummary> {
    let m = med(records)?;
    Ok(EvalSummary {
        cpm_at_10mm: cpm(records, CpmThreshold::Fixed(10.0))?,
        cpm_at_radius: cpm(records, CpmThreshold::PerPairRadius)?,
        med_x: m.med_x,
        med_y: m.med_y,
        med_z: m.med_z,
        med: m.med,
        n: records.len(),
        std_kind: "population".to_string(),
    })
}

/// One row of a landmark table: per-group mean, std, and maximum distance.
#[derive(Debug, Clone, Serialize)]
pub struct LandmarkRow {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub n: usize,
}

impl LandmarkRow {
    /// "mean+/-std max" cell, one decimal each.
    pub fn cell(&self) -> String {
        format!("{:.1}\u{b1}{:.1} {:.1}", self.mean, self.std, self.max)
    }
}

/// Per-group rows plus the flat aggregate over every record.
pub fn landmark_table(groups: &[(String, Vec<EvalRecord>)]) -> Result<(Vec<LandmarkRow>, LandmarkRow)> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no landmark groups".into()));
    }
    let mut rows = Vec::with_capacity(groups.len());
    let mut all = Vec::new();
    for (name, records) in groups {
        if records.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "landmark group {name} is empty"
            )));
        }
        let mut d = Vec::with_capacity(records.len());
        for r in records {
            r.validate()?;
            d.push(r.distance());
        }
        let ms = mean_std(&d);
        rows.push(LandmarkRow {
            name: name.clone(),
            mean: ms.mean,
            std: ms.std,
            max: d.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            n: records.len(),
        });
        all.extend(d);
    }
    let ms = mean_std(&all);
    let overall = LandmarkRow {
        name: "overall".to_string(),
        mean: ms.mean,
        std: ms.std,
        max: all.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        n: all.len(),
    };
    Ok((rows, overall))
}

/// Plain-text table of summaries, one row per method, columns in the
/// conventional order CPM@10mm, CPM@Radius, MED_X, MED_Y, MED_Z, MED.
pub fn render_summary_table(rows: &[(String, EvalSummary)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>9} {:>10} {:>12} {:>12} {:>12} {:>12}\n",
        "method", "CPM@10mm", "CPM@Radius", "MED_X (mm)", "MED_Y (mm)", "MED_Z (mm)", "MED (mm)"
    ));
    for (name, s) in rows {
        out.push_str(&format!(
            "{:<24} {:>9.2} {:>10.2} {:>12} {:>12} {:>12} {:>12}\n",
            name,
            s.cpm_at_10mm,
            s.cpm_at_radius,
            format!("{:.1}\u{b1}{:.1}", s.med_x.mean, s.med_x.std),
            format!("{:.1}\u{b1}{:.1}", s.med_y.mean, s.med_y.std),
            format!("{:.1}\u{b1}{:.1}", s.med_z.mean, s.med_z.std),
            format!("{:.1}\u{b1}{:.1}", s.med.mean, s.med.std),
        ));
    }
    out
}
