//! Consistency scoring of candidate ENF tracks.
//!
//! All tracks are stacked into a matrix, a representative track is formed
//! column-wise (mean or median), and every track is compared with it by
//! Pearson correlation. Genuine ENF makes the tracks agree; tracks that only
//! follow noise do not.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::enf::EnfVector;
use crate::error::{Error, Result};

/// Equal-length ENF tracks, one row per steady superpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EnfMatrix {
    rows: Vec<EnfVector>,
}

impl EnfMatrix {
    pub fn new(rows: Vec<EnfVector>) -> Result<Self> {
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.values.len() != first.values.len()) {
                return Err(Error::LengthMismatch(first.values.len(), bad.values.len()));
            }
        }
        Ok(EnfMatrix { rows })
    }

    pub fn rows(&self) -> &[EnfVector] {
        &self.rows
    }

    /// Number of rows (steady superpixels).
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Row length.
    pub fn columns(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentativeMode {
    Mean,
    Median,
}

impl RepresentativeMode {
    pub const ALL: [RepresentativeMode; 2] = [RepresentativeMode::Mean, RepresentativeMode::Median];
}

impl fmt::Display for RepresentativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepresentativeMode::Mean => "mean",
            RepresentativeMode::Median => "median",
        })
    }
}

impl FromStr for RepresentativeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(RepresentativeMode::Mean),
            "median" => Ok(RepresentativeMode::Median),
            other => Err(Error::config(format!("unknown representative mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    F1,
    F2,
    F3,
    F4,
}

impl MetricId {
    pub const ALL: [MetricId; 4] = [MetricId::F1, MetricId::F2, MetricId::F3, MetricId::F4];
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricId::F1 => "f1",
            MetricId::F2 => "f2",
            MetricId::F3 => "f3",
            MetricId::F4 => "f4",
        })
    }
}

impl FromStr for MetricId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(MetricId::F1),
            "f2" => Ok(MetricId::F2),
            "f3" => Ok(MetricId::F3),
            "f4" => Ok(MetricId::F4),
            other => Err(Error::config(format!("unknown metric {other:?}"))),
        }
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Column-wise mean or median of the matrix rows (even counts take the
/// midpoint of the two middle values).
pub fn representative_enf(m: &EnfMatrix, mode: RepresentativeMode) -> Result<EnfVector> {
    representative_of(m.rows.iter(), m.columns(), mode)
}

fn representative_of<'a>(rows: impl Iterator<Item = &'a EnfVector> + Clone, cols: usize, mode: RepresentativeMode) -> Result<EnfVector> {
    let count = rows.clone().count();
    if count == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut column = Vec::with_capacity(count);
    let values = (0..cols)
        .map(|i| {
            column.clear();
            column.extend(rows.clone().map(|r| r.values[i]));
            match mode {
                RepresentativeMode::Mean => column.iter().sum::<f64>() / count as f64,
                RepresentativeMode::Median => median_of(&mut column),
            }
        })
        .collect();
    Ok(EnfVector { values, region_label: u32::MAX })
}

/// Pearson correlation of two equal-length vectors. `None` when either
/// vector has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::config("pearson needs at least 2 samples"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        dot += dx * dy;
        na += dx * dx;
        nb += dy * dy;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(None);
    }
    Ok(Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMetrics {
    /// Correlation of each row with the representative; `None` where undefined.
    pub rho: Vec<Option<f64>>,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    /// Correlation between the two rows closest to the representative;
    /// `None` when fewer than two correlations are defined.
    pub f4: Option<f64>,
}

impl DecisionMetrics {
    pub fn get(&self, id: MetricId) -> Option<f64> {
        match id {
            MetricId::F1 => Some(self.f1),
            MetricId::F2 => Some(self.f2),
            MetricId::F3 => Some(self.f3),
            MetricId::F4 => self.f4,
        }
    }
}

pub fn decision_metrics(m: &EnfMatrix, representative: &EnfVector) -> Result<DecisionMetrics> {
    if m.row_count() < 2 {
        return Err(Error::TooFewRows(m.row_count()));
    }
    let rho = m.rows.iter().map(|r| pearson(&r.values, &representative.values)).collect::<Result<Vec<_>>>()?;
    metrics_from_rho(m, rho)
}

/// Like [`decision_metrics`], but each row is compared with a representative
/// built from the other rows only.
pub fn decision_metrics_leave_one_out(m: &EnfMatrix, mode: RepresentativeMode) -> Result<DecisionMetrics> {
    if m.row_count() < 2 {
        return Err(Error::TooFewRows(m.row_count()));
    }
    let rho = (0..m.row_count())
        .map(|k| {
            let others = m.rows.iter().enumerate().filter(move |&(i, _)| i != k).map(|(_, r)| r);
            let rep = representative_of(others, m.columns(), mode)?;
            pearson(&m.rows[k].values, &rep.values)
        })
        .collect::<Result<Vec<_>>>()?;
    metrics_from_rho(m, rho)
}

fn metrics_from_rho(m: &EnfMatrix, rho: Vec<Option<f64>>) -> Result<DecisionMetrics> {
    let mut defined: Vec<(usize, f64)> = rho.iter().enumerate().filter_map(|(k, r)| r.map(|v| (k, v))).collect();
    if defined.is_empty() {
        return Err(Error::AllDegenerate);
    }
    let f1 = defined.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let f2 = defined.iter().map(|&(_, v)| v).sum::<f64>() / defined.len() as f64;
    let f3 = median_of(&mut defined.iter().map(|&(_, v)| v).collect::<Vec<_>>());
    // highest rho first, lower row index on exact ties
    defined.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let f4 = match defined.as_slice() {
        [(i, _), (j, _), ..] => pearson(&m.rows[*i].values, &m.rows[*j].values)?,
        _ => None,
    };
    Ok(DecisionMetrics { rho, f1, f2, f3, f4 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    EnfPresent,
    EnfAbsent,
    Abstain,
}

impl Verdict {
    /// Process exit code: 0 present, 1 absent, 2 abstain.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::EnfPresent => 0,
            Verdict::EnfAbsent => 1,
            Verdict::Abstain => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub label: u32,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub verdict: Verdict,
    pub chosen_metric: MetricId,
    pub threshold: f64,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f3: Option<f64>,
    pub f4: Option<f64>,
    #[serde(rename = "L")]
    pub steady_regions: usize,
    pub t: usize,
    pub representative_mode: RepresentativeMode,
    pub per_region: Vec<RegionScore>,
}

impl DetectionReport {
    pub fn metric(&self, id: MetricId) -> Option<f64> {
        match id {
            MetricId::F1 => self.f1,
            MetricId::F2 => self.f2,
            MetricId::F3 => self.f3,
            MetricId::F4 => self.f4,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Applies the threshold to the chosen metric. `metrics` is `None` when
/// scoring was impossible (fewer than two rows, or all correlations
/// undefined); that, `L < 2`, or an undefined chosen metric all abstain.
pub fn decide(
    metrics: Option<&DecisionMetrics>,
    chosen: MetricId,
    threshold: f64,
    steady_regions: usize,
    mode: RepresentativeMode,
    t: usize,
    labels: &[u32],
) -> DetectionReport {
    let score = metrics.and_then(|m| m.get(chosen));
    let verdict = match score {
        _ if steady_regions < 2 => Verdict::Abstain,
        None => Verdict::Abstain,
        Some(s) if s > threshold => Verdict::EnfPresent,
        Some(_) => Verdict::EnfAbsent,
    };
    let per_region = labels
        .iter()
        .enumerate()
        .map(|(k, &label)| RegionScore { label, rho: metrics.and_then(|m| m.rho.get(k).copied().flatten()) })
        .collect();
    DetectionReport {
        verdict,
        chosen_metric: chosen,
        threshold,
        f1: metrics.map(|m| m.f1),
        f2: metrics.map(|m| m.f2),
        f3: metrics.map(|m| m.f3),
        f4: metrics.and_then(|m| m.f4),
        steady_regions,
        t,
        representative_mode: mode,
        per_region,
    }
}
