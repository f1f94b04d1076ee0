//! Per-sample scoring of a predicted ranking against the acceptable set, and
//! dataset-level aggregation.
//!
//! Ground-truth membership is set membership; only the prediction order
//! matters (through the MAA weights). An empty prediction is degenerate and
//! scores the worst value of every metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action_space::RankedActions;
use crate::scenario::DifficultyLevel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground-truth action set is empty")]
    EmptyGroundTruth,
    #[error("cannot aggregate an empty score list")]
    NoScores,
}

/// Position weights for MAA, strictly decreasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricWeights([u32; 6]);

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights([6, 5, 4, 3, 2, 1])
    }
}

impl MetricWeights {
    pub fn as_array(&self) -> [u32; 6] {
        self.0
    }

    pub fn max(&self) -> f64 {
        self.0[0] as f64
    }
}

fn check_gt(gt: &RankedActions) -> Result<(), MetricsError> {
    if gt.is_empty() {
        Err(MetricsError::EmptyGroundTruth)
    } else {
        Ok(())
    }
}

fn hits(pred: &RankedActions, gt: &RankedActions) -> usize {
    pred.iter().filter(|&a| gt.contains(a)).count()
}

pub fn pred_at_1(pred: &RankedActions, gt: &RankedActions) -> Result<f64, MetricsError> {
    check_gt(gt)?;
    Ok(match pred.first() {
        Some(a) if gt.contains(a) => 1.0,
        _ => 0.0,
    })
}

pub fn pred_at_n(pred: &RankedActions, gt: &RankedActions) -> Result<f64, MetricsError> {
    check_gt(gt)?;
    if pred.is_empty() {
        return Ok(-1.0);
    }
    let h = hits(pred, gt) as f64;
    let n = pred.len() as f64;
    Ok((h - (n - h)) / n)
}

pub fn apg(pred: &RankedActions, gt: &RankedActions) -> Result<f64, MetricsError> {
    check_gt(gt)?;
    Ok(if !pred.is_empty() && hits(pred, gt) == pred.len() {
        1.0
    } else {
        0.0
    })
}

pub fn maa(pred: &RankedActions, gt: &RankedActions, weights: &MetricWeights) -> Result<f64, MetricsError> {
    check_gt(gt)?;
    if pred.is_empty() || pred.len() > gt.len() {
        return Ok(0.0);
    }
    let total: u32 = pred
        .iter()
        .zip(weights.0)
        .filter(|(a, _)| gt.contains(*a))
        .map(|(_, w)| w)
        .sum();
    Ok(total as f64 / gt.len() as f64)
}

pub fn error_rate(pred: &RankedActions, gt: &RankedActions) -> Result<f64, MetricsError> {
    check_gt(gt)?;
    if pred.is_empty() {
        return Ok(1.0);
    }
    let n = pred.len();
    Ok((n - hits(pred, gt)) as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub pred_at_1: f64,
    pub pred_at_n: f64,
    pub apg: f64,
    pub maa: f64,
    pub er: f64,
    pub degenerate: bool,
}

impl SampleScore {
    pub fn values(&self) -> [f64; 5] {
        [self.pred_at_1, self.pred_at_n, self.apg, self.maa, self.er]
    }
}

pub fn score_sample(pred: &RankedActions, gt: &RankedActions) -> Result<SampleScore, MetricsError> {
    Ok(SampleScore {
        pred_at_1: pred_at_1(pred, gt)?,
        pred_at_n: pred_at_n(pred, gt)?,
        apg: apg(pred, gt)?,
        maa: maa(pred, gt, &MetricWeights::default())?,
        er: error_rate(pred, gt)?,
        degenerate: pred.is_empty(),
    })
}

/// Score achieved by predicting the ground truth exactly.
pub fn perfect_maa(gt: &RankedActions) -> f64 {
    let w = MetricWeights::default().as_array();
    w[..gt.len().min(6)].iter().sum::<u32>() as f64 / gt.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub count: usize,
    pub pred_at_1: f64,
    pub pred_at_n: f64,
    pub apg: f64,
    pub maa: f64,
    pub er: f64,
    pub degenerate: usize,
}

impl MetricMeans {
    fn of(scores: &[&SampleScore]) -> MetricMeans {
        let n = scores.len() as f64;
        let mut sums = [0.0; 5];
        for s in scores {
            for (acc, v) in sums.iter_mut().zip(s.values()) {
                *acc += v;
            }
        }
        MetricMeans {
            count: scores.len(),
            pred_at_1: sums[0] / n,
            pred_at_n: sums[1] / n,
            apg: sums[2] / n,
            maa: sums[3] / n,
            er: sums[4] / n,
            degenerate: scores.iter().filter(|s| s.degenerate).count(),
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.pred_at_1, self.pred_at_n, self.apg, self.maa, self.er]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub overall: MetricMeans,
    /// Samples per second of summed policy time; `None` when untimed.
    pub fps: Option<f64>,
    pub by_difficulty: BTreeMap<DifficultyLevel, MetricMeans>,
}

/// Means over `scores`; `difficulties`, when given, must be parallel to
/// `scores` and yields a per-level breakdown.
pub fn aggregate(
    scores: &[SampleScore],
    total_policy_seconds: Option<f64>,
    difficulties: Option<&[DifficultyLevel]>,
) -> Result<AggregateReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::NoScores);
    }
    let all: Vec<&SampleScore> = scores.iter().collect();
    let mut by_difficulty = BTreeMap::new();
    if let Some(levels) = difficulties {
        assert_eq!(levels.len(), scores.len(), "difficulty list must be parallel to scores");
        for level in DifficultyLevel::ALL {
            let group: Vec<&SampleScore> = scores
                .iter()
                .zip(levels)
                .filter(|(_, l)| **l == level)
                .map(|(s, _)| s)
                .collect();
            if !group.is_empty() {
                by_difficulty.insert(level, MetricMeans::of(&group));
            }
        }
    }
    let fps = total_policy_seconds
        .filter(|&t| t > 0.0)
        .map(|t| scores.len() as f64 / t);
    Ok(AggregateReport {
        overall: MetricMeans::of(&all),
        fps,
        by_difficulty,
    })
}

pub const METRIC_HEADERS: [&str; 5] = ["Pred@1↑", "Pred@n↑", "APG↑", "MAA↑", "ER↓"];
pub const FPS_HEADER: &str = "FPS↑";

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: Vec<String>,
    pub means: MetricMeans,
    pub fps: Option<f64>,
}

/// Fixed-layout table: leading label columns, the five metrics, then FPS if
/// any row is timed.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub label_headers: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn new(label_headers: &[&str]) -> Table {
        Table {
            label_headers: label_headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: Vec<String>, means: MetricMeans, fps: Option<f64>) {
        self.rows.push(TableRow { label, means, fps });
    }

    fn timed(&self) -> bool {
        self.rows.iter().any(|r| r.fps.is_some())
    }

    fn headers(&self) -> Vec<String> {
        let mut h = self.label_headers.clone();
        h.extend(METRIC_HEADERS.iter().map(|s| s.to_string()));
        if self.timed() {
            h.push(FPS_HEADER.to_string());
        }
        h
    }

    fn cells(&self, row: &TableRow) -> Vec<String> {
        let mut c = row.label.clone();
        c.extend(row.means.values().iter().map(|v| format!("{v:.3}")));
        if self.timed() {
            c.push(row.fps.map_or_else(|| "-".to_string(), |f| format!("{f:.3}")));
        }
        c
    }

    pub fn to_markdown(&self) -> String {
        let headers = self.headers();
        let mut out = format!("| {} |\n", headers.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(headers.len()));
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", self.cells(row).join(" | "));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = String::new();
        let line = |cells: Vec<String>| cells.iter().map(|c| quote(c)).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "{}", line(self.headers()));
        for row in &self.rows {
            let _ = writeln!(out, "{}", line(self.cells(row)));
        }
        out
    }
}

impl AggregateReport {
    /// Overall row followed by one row per difficulty level present.
    pub fn table(&self, method: &str) -> Table {
        let mut t = Table::new(&["Method", "Split"]);
        t.push(vec![method.to_string(), "Overall".to_string()], self.overall, self.fps);
        for (level, means) in &self.by_difficulty {
            t.push(vec![method.to_string(), level.name().to_string()], *means, None);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_space::Action::{self, *};

    fn r(a: &[Action]) -> RankedActions {
        RankedActions::new(a.to_vec()).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(pred_at_1(&r(&[MoveForward]), &r(&[MoveForward, Stop])).unwrap(), 1.0);
        assert_eq!(pred_at_1(&r(&[TurnLeft, MoveForward]), &r(&[MoveForward])).unwrap(), 0.0);
        assert_eq!(pred_at_n(&r(&[MoveForward, TurnLeft]), &r(&[MoveForward])).unwrap(), 0.0);
        assert_eq!(apg(&r(&[MoveForward, Stop]), &r(&[MoveForward])).unwrap(), 0.0);
        assert_eq!(apg(&r(&[MoveForwardLeft]), &r(&[MoveForward, MoveForwardLeft])).unwrap(), 1.0);
        let three = r(&[MoveForwardLeft, TurnLeft, MoveForward]);
        let m = maa(&r(&[MoveForward, MoveForwardLeft]), &three, &MetricWeights::default()).unwrap();
        assert!((m - 11.0 / 3.0).abs() < 1e-12);
        assert_eq!(error_rate(&r(&[MoveForward, TurnLeft]), &r(&[MoveForward])).unwrap(), 0.5);
    }

    #[test]
    fn maa_boundaries() {
        let w = MetricWeights::default();
        let gt = r(&[MoveForward, TurnLeft, Stop]);
        assert_eq!(maa(&r(&[MoveForward, TurnLeft, Stop, TurnRight]), &gt, &w).unwrap(), 0.0);
        assert_eq!(maa(&r(&[Stop]), &r(&[Stop]), &w).unwrap(), 6.0);
    }

    #[test]
    fn degenerate_bundle() {
        let s = score_sample(&RankedActions::empty(), &r(&[Stop])).unwrap();
        assert_eq!(s.values(), [0.0, -1.0, 0.0, 0.0, 1.0]);
        assert!(s.degenerate);
    }

    #[test]
    fn empty_gt_is_rejected() {
        let e = RankedActions::empty();
        assert_eq!(score_sample(&r(&[Stop]), &e), Err(MetricsError::EmptyGroundTruth));
    }

    #[test]
    fn perfect_score() {
        let gt = r(&[MoveForwardLeft, MoveForwardRight, TurnLeft, Stop]);
        let s = score_sample(&gt, &gt).unwrap();
        assert_eq!(s.values(), [1.0, 1.0, 1.0, 18.0 / 4.0, 0.0]);
        assert_eq!(perfect_maa(&gt), 4.5);
    }

    #[test]
    fn aggregation() {
        let a = score_sample(&r(&[Stop]), &r(&[Stop])).unwrap();
        let b = score_sample(&r(&[TurnLeft]), &r(&[Stop])).unwrap();
        let rep = aggregate(&[a, b], Some(4.0), Some(&[DifficultyLevel::Easy, DifficultyLevel::Difficult])).unwrap();
        assert_eq!(rep.overall.er, 0.5);
        assert_eq!(rep.fps, Some(0.5));
        assert_eq!(rep.by_difficulty.len(), 2);
        assert_eq!(rep.by_difficulty[&DifficultyLevel::Easy].pred_at_1, 1.0);
        assert!(aggregate(&[], None, None).is_err());
        let timed = aggregate(&vec![a; 79], Some(51.8), None).unwrap();
        assert!((timed.fps.unwrap() - 1.525).abs() < 1e-3);
    }

    #[test]
    fn table_layout() {
        let a = score_sample(&r(&[Stop]), &r(&[Stop])).unwrap();
        let rep = aggregate(&[a], Some(1.0), Some(&[DifficultyLevel::Medium])).unwrap();
        let md = rep.table("oracle").to_markdown();
        let header = md.lines().next().unwrap();
        assert_eq!(header, "| Method | Split | Pred@1↑ | Pred@n↑ | APG↑ | MAA↑ | ER↓ | FPS↑ |");
        assert!(md.contains("| oracle | Overall | 1.000 | 1.000 | 1.000 | 6.000 | 0.000 | 1.000 |"));
        assert!(md.contains("| oracle | Medium | 1.000 | 1.000 | 1.000 | 6.000 | 0.000 | - |"));
        let csv = rep.table("oracle").to_csv();
        assert!(csv.starts_with("Method,Split,Pred@1↑,Pred@n↑,APG↑,MAA↑,ER↓,FPS↑\n"));
    }
}
