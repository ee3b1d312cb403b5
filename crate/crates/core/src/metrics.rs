//! Confusion counts, the four classification scores, and the per-trait and
//! ablation tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Trait;
use crate::hiergraph::LevelConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{preds} predictions but {labels} labels")]
    Length { preds: usize, labels: usize },
    #[error("no samples to score")]
    Empty,
    #[error("no results for trait {0}")]
    MissingTrait(Trait),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(preds: &[bool], labels: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::Length {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in preds.iter().zip(labels) {
        match (p, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Fractions in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Zero denominators yield 0 for precision and recall; f1 is 0 when both
/// are 0.
pub fn score(c: &ConfusionCounts) -> Scores {
    let accuracy = ratio(c.tp + c.tn, c.total());
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores {
        accuracy,
        precision,
        recall,
        f1,
    }
}

/// Percentages, unrounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricRow {
    pub fn from_scores(s: &Scores) -> Self {
        MetricRow {
            accuracy: 100.0 * s.accuracy,
            f1: 100.0 * s.f1,
            precision: 100.0 * s.precision,
            recall: 100.0 * s.recall,
        }
    }

    fn cells(&self) -> [f64; 4] {
        [self.accuracy, self.f1, self.precision, self.recall]
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn format_percent(v: f64) -> String {
    format!("{v:.2}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitReport {
    pub rows: BTreeMap<Trait, MetricRow>,
    pub counts: BTreeMap<Trait, ConfusionCounts>,
    pub average: MetricRow,
}

impl TraitReport {
    /// Build from already computed percentages, e.g. reference values.
    /// The average row is the unrounded mean.
    pub fn from_rows(rows: BTreeMap<Trait, MetricRow>) -> Result<Self, MetricsError> {
        if let Some(&t) = Trait::ALL.iter().find(|t| !rows.contains_key(t)) {
            return Err(MetricsError::MissingTrait(t));
        }
        let col = |f: fn(&MetricRow) -> f64| mean(rows.values().map(f));
        let average = MetricRow {
            accuracy: col(|r| r.accuracy),
            f1: col(|r| r.f1),
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
        };
        Ok(TraitReport {
            rows,
            counts: BTreeMap::new(),
            average,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| Personality Trait | Accuracy(%) | F1(%) | Precision(%) | Recall(%) |\n|---|---|---|---|---|\n",
        );
        let mut line = |name: String, row: &MetricRow| {
            let cells: Vec<String> = row.cells().iter().map(|&v| format_percent(v)).collect();
            let _ = writeln!(s, "| {name} | {} |", cells.join(" | "));
        };
        for (t, row) in &self.rows {
            line(t.letter().to_string(), row);
        }
        line("Average".into(), &self.average);
        s
    }
}

/// Score every trait's predictions against its labels.
pub fn evaluate_traits(
    results: &BTreeMap<Trait, (Vec<bool>, Vec<bool>)>,
) -> Result<TraitReport, MetricsError> {
    let mut rows = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for t in Trait::ALL {
        let (preds, labels) = results.get(&t).ok_or(MetricsError::MissingTrait(t))?;
        let c = confusion(preds, labels)?;
        rows.insert(t, MetricRow::from_scores(&score(&c)));
        counts.insert(t, c);
    }
    let mut report = TraitReport::from_rows(rows)?;
    report.counts = counts;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub level: LevelConfig,
    /// Accuracy percentage per trait.
    pub accuracy: BTreeMap<Trait, f64>,
    pub average: f64,
}

impl AblationRow {
    pub fn new(level: LevelConfig, accuracy: BTreeMap<Trait, f64>) -> Self {
        let average = mean(accuracy.values().copied());
        AblationRow {
            level,
            accuracy,
            average,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, level: LevelConfig) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.level == level)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| Text Level(s) | O | C | E | A | N | Avg. |\n|---|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            let cells: Vec<String> = Trait::ALL
                .iter()
                .map(|t| {
                    r.accuracy
                        .get(t)
                        .map_or("-".to_string(), |&v| format_percent(v))
                })
                .collect();
            let _ = writeln!(
                s,
                "| {} | {} | {} |",
                r.level.label(),
                cells.join(" | "),
                format_percent(r.average)
            );
        }
        s
    }
}
