//! Scoring labelled corpora and ROC/AUC analysis.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{MetricId, RepresentativeMode};
use crate::error::{Error, Result};
use crate::ingest::{load_frame_sequence_with, FrameSequence, InputFormat, LoadOptions};
use crate::pipeline::{analyze, PipelineConfig};
use crate::sim::ClipLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub path: PathBuf,
    pub label: ClipLabel,
    #[serde(default)]
    pub sensor_tag: String,
}

/// Reads a JSON-lines manifest. Relative paths are taken relative to the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<LabeledItem>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut items = Vec::new();
    for line in std::fs::read_to_string(path)?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut item: LabeledItem = serde_json::from_str(line)?;
        if item.path.is_relative() {
            item.path = base.join(&item.path);
        }
        items.push(item);
    }
    Ok(items)
}

pub fn write_manifest(path: &Path, items: &[LabeledItem]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        writeln!(out, "{}", serde_json::to_string(item)?)?;
    }
    out.flush()?;
    Ok(())
}

fn mode_index(mode: RepresentativeMode) -> usize {
    match mode {
        RepresentativeMode::Mean => 0,
        RepresentativeMode::Median => 1,
    }
}

fn metric_index(id: MetricId) -> usize {
    match id {
        MetricId::F1 => 0,
        MetricId::F2 => 1,
        MetricId::F3 => 2,
        MetricId::F4 => 3,
    }
}

/// Eight scores (4 metrics × 2 representative modes) for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemScores {
    pub item: LabeledItem,
    /// `[mode][metric]`, `None` where the detector abstains.
    pub scores: [[Option<f64>; 4]; 2],
    pub steady_regions: usize,
    /// Load or pipeline failure; the item is left out of every ROC.
    pub error: Option<String>,
}

impl ItemScores {
    pub fn score(&self, mode: RepresentativeMode, metric: MetricId) -> Option<f64> {
        self.scores[mode_index(mode)][metric_index(metric)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ItemScores>,
}

impl ScoreTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,label,sensor_tag,L");
        for mode in RepresentativeMode::ALL {
            for id in MetricId::ALL {
                s.push_str(&format!(",{id}_{mode}"));
            }
        }
        s.push_str(",error\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}", csv_field(&r.item.path.display().to_string()), r.item.label, csv_field(&r.item.sensor_tag), r.steady_regions));
            for mode in RepresentativeMode::ALL {
                for id in MetricId::ALL {
                    match r.score(mode, id) {
                        Some(v) => s.push_str(&format!(",{v}")),
                        None => s.push_str(",NA"),
                    }
                }
            }
            s.push_str(&format!(",{}\n", csv_field(r.error.as_deref().unwrap_or(""))));
        }
        s
    }

    /// Scores and labels of the items with a defined score, optionally
    /// restricted to one sensor tag, plus the number of items left out.
    pub fn select(&self, mode: RepresentativeMode, metric: MetricId, tag: Option<&str>) -> (Vec<f64>, Vec<bool>, usize) {
        let (mut scores, mut labels, mut skipped) = (Vec::new(), Vec::new(), 0);
        for r in self.rows.iter().filter(|r| tag.map_or(true, |t| r.item.sensor_tag == t)) {
            match r.score(mode, metric) {
                Some(s) => {
                    scores.push(s);
                    labels.push(r.item.label.is_positive());
                }
                None => skipped += 1,
            }
        }
        (scores, labels, skipped)
    }

    pub fn roc(&self, mode: RepresentativeMode, metric: MetricId, tag: Option<&str>) -> Result<RocCurve> {
        let (scores, labels, _) = self.select(mode, metric, tag);
        roc_auc(&scores, &labels)
    }

    /// Distinct sensor tags in corpus order.
    pub fn sensor_tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = Vec::new();
        for r in &self.rows {
            if !tags.contains(&r.item.sensor_tag) {
                tags.push(r.item.sensor_tag.clone());
            }
        }
        tags
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Loads each item from disk and scores it.
pub fn batch_scores(items: &[LabeledItem], cfg: &PipelineConfig) -> Result<ScoreTable> {
    batch_scores_with(items, cfg, |item| {
        let fmt = InputFormat::infer(&item.path);
        let opts = LoadOptions { max_seconds: Some(cfg.clip_seconds), ..LoadOptions::default() };
        load_frame_sequence_with(&item.path, fmt, &opts)
    })
}

/// Scores every item using `load` to obtain its frames. Items run in
/// parallel; the table keeps corpus order. Per-item failures are recorded,
/// not returned.
pub fn batch_scores_with<F>(items: &[LabeledItem], cfg: &PipelineConfig, load: F) -> Result<ScoreTable>
where
    F: Fn(&LabeledItem) -> Result<FrameSequence> + Sync,
{
    if items.is_empty() {
        return Err(Error::config("corpus is empty"));
    }
    cfg.validate()?;
    let rows = items
        .par_iter()
        .map(|item| {
            let mut row = ItemScores { item: item.clone(), scores: [[None; 4]; 2], steady_regions: 0, error: None };
            let result = load(item).and_then(|seq| analyze(&seq, cfg)).and_then(|a| {
                row.steady_regions = a.steady.count();
                for mode in RepresentativeMode::ALL {
                    if let Some(m) = a.metrics(mode, cfg.leave_one_out)? {
                        for id in MetricId::ALL {
                            row.scores[mode_index(mode)][metric_index(id)] = m.get(id);
                        }
                    }
                }
                Ok(())
            });
            if let Err(e) = result {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();
    Ok(ScoreTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Items scoring at or above this value are called positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
        s
    }
}

/// ROC curve from a sweep over the distinct scores, highest first, starting
/// at `(0, 0)` with an infinite threshold. The area is accumulated in whole
/// counts so it equals the Mann-Whitney statistic with ties worth one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::LengthMismatch(scores.len(), positive.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::config("scores must not be NaN"));
    }
    let p = positive.iter().filter(|&&b| b).count() as u64;
    let n = positive.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp, mut twice_area) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) * (tp + tp0);
        points.push(RocPoint { fpr: fp as f64 / n as f64, tpr: tp as f64 / p as f64, threshold: s });
    }
    Ok(RocCurve { points, auc: twice_area as f64 / (2 * p * n) as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub sensor_tag: String,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f3: Option<f64>,
    pub f4: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
    pub abstained: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucTable {
    pub representative_mode: RepresentativeMode,
    pub rows: Vec<AucRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub tables: Vec<AucTable>,
}

impl AucSummary {
    pub fn auc(&self, mode: RepresentativeMode, metric: MetricId, tag: &str) -> Option<f64> {
        let row = self.tables.iter().find(|t| t.representative_mode == mode)?.rows.iter().find(|r| r.sensor_tag == tag)?;
        match metric {
            MetricId::F1 => row.f1,
            MetricId::F2 => row.f2,
            MetricId::F3 => row.f3,
            MetricId::F4 => row.f4,
        }
    }
}

pub const ANY_SENSOR: &str = "Any";

/// AUC per representative mode, with one row per sensor tag plus `Any`.
/// Undefined AUCs (one class missing) are `None`.
pub fn summarize(table: &ScoreTable) -> AucSummary {
    let mut tags: Vec<Option<String>> = table.sensor_tags().into_iter().map(Some).collect();
    tags.push(None);
    let tables = RepresentativeMode::ALL
        .iter()
        .map(|&mode| AucTable {
            representative_mode: mode,
            rows: tags
                .iter()
                .map(|tag| {
                    let auc = |id| table.roc(mode, id, tag.as_deref()).ok().map(|r| r.auc);
                    let rows = table.rows.iter().filter(|r| tag.as_ref().map_or(true, |t| &r.item.sensor_tag == t));
                    let (mut pos, mut neg, mut abstained, mut errors) = (0, 0, 0, 0);
                    for r in rows {
                        if r.error.is_some() {
                            errors += 1;
                        } else if r.score(mode, MetricId::F1).is_none() {
                            abstained += 1;
                        } else if r.item.label.is_positive() {
                            pos += 1;
                        } else {
                            neg += 1;
                        }
                    }
                    AucRow {
                        sensor_tag: tag.clone().unwrap_or_else(|| ANY_SENSOR.to_string()),
                        f1: auc(MetricId::F1),
                        f2: auc(MetricId::F2),
                        f3: auc(MetricId::F3),
                        f4: auc(MetricId::F4),
                        positives: pos,
                        negatives: neg,
                        abstained,
                        errors,
                    }
                })
                .collect(),
        })
        .collect();
    AucSummary { tables }
}

fn file_tag(tag: &str) -> String {
    tag.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Writes `scores.csv`, `roc_<tag>_<mode>_<metric>.csv` for every defined
/// curve, and `summary.json`.
pub fn write_outputs(table: &ScoreTable, out_dir: &Path) -> Result<AucSummary> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("scores.csv"), table.to_csv())?;
    let mut tags: Vec<Option<String>> = table.sensor_tags().into_iter().map(Some).collect();
    tags.push(None);
    for tag in &tags {
        for mode in RepresentativeMode::ALL {
            for id in MetricId::ALL {
                if let Ok(roc) = table.roc(mode, id, tag.as_deref()) {
                    let name = format!("roc_{}_{mode}_{id}.csv", file_tag(tag.as_deref().unwrap_or(ANY_SENSOR)));
                    std::fs::write(out_dir.join(name), roc.to_csv())?;
                }
            }
        }
    }
    let summary = summarize(table);
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        // pairs (pos, neg): (0.9, 0.8) (0.9, 0.1) (0.7, 0.1) ordered, (0.7, 0.8) not
        let r = roc_auc(&[0.9, 0.7, 0.8, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 0.75);
        // a tie earns half a pair
        assert_eq!(roc_auc(&[0.9, 0.8, 0.8, 0.1], &[true, true, false, false]).unwrap().auc, 0.875);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap().auc, 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass)));
    }

    #[test]
    fn curve_shape() {
        let r = roc_auc(&[0.9, 0.7, 0.8, 0.1, 0.7], &[true, true, false, false, false]).unwrap();
        let first = r.points[0];
        let last = *r.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert!(first.threshold.is_infinite());
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in r.points.windows(2) {
            assert!(w[1].threshold < w[0].threshold);
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        // one point per distinct score
        assert_eq!(r.points.len(), 5);
    }

    fn item(label: ClipLabel, tag: &str) -> LabeledItem {
        LabeledItem { path: PathBuf::from("x.y4m"), label, sensor_tag: tag.into() }
    }

    fn row(label: ClipLabel, tag: &str, f1: Option<f64>) -> ItemScores {
        let mut scores = [[None; 4]; 2];
        if let Some(v) = f1 {
            scores = [[Some(v), Some(v / 2.0), Some(v / 3.0), None]; 2];
        }
        ItemScores { item: item(label, tag), scores, steady_regions: 5, error: None }
    }

    #[test]
    fn summary_has_rows_per_tag_and_any() {
        use ClipLabel::*;
        let table = ScoreTable {
            rows: vec![
                row(EnfPresent, "Global", Some(0.9)),
                row(EnfAbsent, "Global", Some(0.3)),
                row(EnfPresent, "Rolling", Some(0.8)),
                row(EnfAbsent, "Rolling", None),
            ],
        };
        let s = summarize(&table);
        assert_eq!(s.tables.len(), 2);
        let tags: Vec<_> = s.tables[0].rows.iter().map(|r| r.sensor_tag.as_str()).collect();
        assert_eq!(tags, ["Global", "Rolling", "Any"]);
        assert_eq!(s.auc(RepresentativeMode::Median, MetricId::F1, "Any"), Some(1.0));
        assert_eq!(s.auc(RepresentativeMode::Median, MetricId::F1, "Rolling"), None);
        assert_eq!(s.auc(RepresentativeMode::Median, MetricId::F4, "Any"), None);
        assert_eq!(s.tables[1].rows[1].abstained, 1);
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(4).unwrap().contains("NA"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![
            LabeledItem { path: PathBuf::from("a.y4m"), label: ClipLabel::EnfPresent, sensor_tag: "Global".into() },
            LabeledItem { path: dir.path().join("b"), label: ClipLabel::EnfAbsent, sensor_tag: String::new() },
        ];
        let m = dir.path().join("manifest.jsonl");
        write_manifest(&m, &items).unwrap();
        let back = read_manifest(&m).unwrap();
        assert_eq!(back[0].path, dir.path().join("a.y4m"));
        assert_eq!(back[1], items[1]);
        std::fs::write(&m, "{\"path\":\"c\",\"label\":\"H1\"}\n").unwrap();
        assert_eq!(read_manifest(&m).unwrap()[0].label, ClipLabel::EnfPresent);
        assert!(matches!(read_manifest(&dir.path().join("none")), Err(Error::FileNotFound(_))));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(batch_scores(&[], &PipelineConfig::default()).is_err());
    }

    #[test]
    fn load_failures_are_recorded() {
        let items = vec![item(ClipLabel::EnfPresent, "g")];
        let t = batch_scores(&items, &PipelineConfig::default()).unwrap();
        assert!(t.rows[0].error.is_some());
    }
}
