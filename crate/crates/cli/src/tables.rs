//! Recompute published score tables from their input cells.

use std::collections::BTreeMap;

use rationale_forge::eval::{f2, relative_improvement, round_to, summary_f2};
use serde::{Deserialize, Serialize};

/// F2 cells must match within this many percentage points.
pub const F2_TOLERANCE_PP: f64 = 0.1;
/// Summary F2 cells, after rounding to one decimal.
pub const SUMMARY_TOLERANCE: f64 = 0.05;
/// Relative improvements, in percentage points.
pub const RI_TOLERANCE_PP: f64 = 1.0;

/// Percent-valued precision/recall/F2 row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationCell {
    pub table: String,
    pub row: String,
    pub component: String,
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
}

/// Likert-scale IC/EI row with its reported F2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub table: String,
    pub row: String,
    pub component: String,
    pub ic: f64,
    pub ei: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Precision,
    Recall,
    F2,
}

/// Reported relative improvement of `new_row` over `base_row`, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiCell {
    pub table: String,
    /// Table holding the two compared rows.
    pub source: String,
    pub component: String,
    pub new_row: String,
    pub base_row: String,
    pub metric: Metric,
    pub reported: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PublishedTables {
    #[serde(default)]
    pub classification: Vec<ClassificationCell>,
    #[serde(default)]
    pub summary: Vec<SummaryCell>,
    #[serde(default)]
    pub relative_improvement: Vec<RiCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub table: String,
    pub row: String,
    pub component: String,
    pub reported: f64,
    pub computed: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl CellCheck {
    fn new(table: &str, row: &str, component: &str, reported: f64, computed: Option<f64>, compared: Option<f64>, tolerance: f64) -> Self {
        let pass = compared.is_some_and(|c| (c - reported).abs() <= tolerance + 1e-9);
        Self { table: table.into(), row: row.into(), component: component.into(), reported, computed, tolerance, pass }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableCheckReport {
    pub f2: Vec<CellCheck>,
    pub summary_f2: Vec<CellCheck>,
    pub relative_improvement: Vec<CellCheck>,
}

impl TableCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellCheck> {
        self.f2.iter().chain(&self.summary_f2).chain(&self.relative_improvement).filter(|c| !c.pass)
    }
}

pub fn check_f2(cells: &[ClassificationCell]) -> Vec<CellCheck> {
    cells
        .iter()
        .map(|c| {
            let computed = f2(c.precision / 100.0, c.recall / 100.0).map(|v| v * 100.0);
            CellCheck::new(&c.table, &c.row, &c.component, c.f2, computed, computed, F2_TOLERANCE_PP)
        })
        .collect()
}

/// Computed values are compared after rounding to one decimal.
pub fn check_summary_f2(cells: &[SummaryCell]) -> Vec<CellCheck> {
    cells
        .iter()
        .map(|c| {
            let computed = summary_f2(c.ic, c.ei).ok();
            CellCheck::new(&c.table, &c.row, &c.component, c.f2, computed, computed.map(|v| round_to(v, 1)), SUMMARY_TOLERANCE)
        })
        .collect()
}

/// Precision and recall improvements use the reported cells; F2
/// improvements use F2 recomputed from them.
pub fn check_relative_improvement(ri: &[RiCell], cells: &[ClassificationCell]) -> Vec<CellCheck> {
    let index: BTreeMap<(&str, &str, &str), &ClassificationCell> =
        cells.iter().map(|c| ((c.table.as_str(), c.row.as_str(), c.component.as_str()), c)).collect();
    let value = |c: &ClassificationCell, m: Metric| match m {
        Metric::Precision => Some(c.precision),
        Metric::Recall => Some(c.recall),
        Metric::F2 => f2(c.precision / 100.0, c.recall / 100.0).map(|v| v * 100.0),
    };
    ri.iter()
        .map(|r| {
            let new = index.get(&(r.source.as_str(), r.new_row.as_str(), r.component.as_str()));
            let base = index.get(&(r.source.as_str(), r.base_row.as_str(), r.component.as_str()));
            let computed = match (new, base) {
                (Some(n), Some(b)) => value(n, r.metric)
                    .zip(value(b, r.metric))
                    .and_then(|(n, b)| relative_improvement(n, b).ok())
                    .map(|v| v * 100.0),
                _ => None,
            };
            let row = format!("{} vs {} ({:?})", r.new_row, r.base_row, r.metric).to_lowercase();
            CellCheck::new(&r.table, &row, &r.component, r.reported, computed, computed, RI_TOLERANCE_PP)
        })
        .collect()
}

pub fn check_tables(t: &PublishedTables) -> TableCheckReport {
    TableCheckReport {
        f2: check_f2(&t.classification),
        summary_f2: check_summary_f2(&t.summary),
        relative_improvement: check_relative_improvement(&t.relative_improvement, &t.classification),
    }
}
