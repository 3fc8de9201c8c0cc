//! Evaluation formulas: precision/recall/F-beta over multi-label sentence
//! predictions, relative improvement, summary-quality F2, Cohen's kappa
//! (plain and weighted), Krippendorff's nominal alpha and IQR fences.
//!
//! Undefined metrics (zero denominators) are `None`, never a silent zero.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LabeledSentence, RationaleComponent, SentenceKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("sentence universes differ: {only_predicted} only predicted, {only_gold} only in gold (first: {example})")]
    IdMismatch { only_predicted: usize, only_gold: usize, example: String },
    #[error("duplicate sentence {0} in input")]
    DuplicateSentence(String),
    #[error("relative improvement undefined for a zero base")]
    ZeroBase,
    #[error("{name} = {value} is outside [{min}, {max}]")]
    OutOfRange { name: &'static str, value: f64, min: f64, max: f64 },
    #[error("rating lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least {needed} rated items are required, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("rating {value} outside the 1..={scale} scale")]
    OutOfScale { value: u32, scale: u32 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("cannot compute quartiles of an empty sample")]
    EmptySample,
}

/// F-beta: `(1+b²)·P·R / (b²·P + R)`. `None` when both inputs are zero.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Option<f64> {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        None
    } else {
        Some((1.0 + b2) * precision * recall / denom)
    }
}

/// F2 = 5·P·R / (4·P + R): recall weighted twice as heavily as precision.
pub fn f2(precision: f64, recall: f64) -> Option<f64> {
    f_beta(precision, recall, 2.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f2(&self) -> Option<f64> {
        match (self.precision(), self.recall()) {
            (Some(p), Some(r)) => f2(p, r),
            _ => None,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Confusion {
        iter.fold(Confusion::default(), |a, b| a + b)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(flatten)]
    pub counts: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f2: Option<f64>,
}

impl From<Confusion> for Scores {
    fn from(counts: Confusion) -> Self {
        Self { precision: counts.precision(), recall: counts.recall(), f2: counts.f2(), counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_component: BTreeMap<RationaleComponent, Scores>,
    /// Micro-pooled: counts summed across components, then P/R/F2.
    pub overall: Scores,
}

impl ClassificationReport {
    pub fn from_counts(per_component: BTreeMap<RationaleComponent, Confusion>) -> Self {
        let overall: Confusion = per_component.values().copied().sum();
        Self {
            per_component: per_component.into_iter().map(|(c, k)| (c, k.into())).collect(),
            overall: overall.into(),
        }
    }

    /// Pool several reports (e.g. one per commit) by summing their counts.
    pub fn pooled<'a>(reports: impl IntoIterator<Item = &'a ClassificationReport>) -> Self {
        let mut counts: BTreeMap<RationaleComponent, Confusion> = BTreeMap::new();
        for r in reports {
            for (c, s) in &r.per_component {
                let e = counts.entry(*c).or_default();
                *e = *e + s.counts;
            }
        }
        Self::from_counts(counts)
    }
}

/// Per-component confusion over the extraction targets.
pub fn classification_report(
    predicted: &[LabeledSentence],
    gold: &[LabeledSentence],
) -> Result<ClassificationReport, EvalError> {
    classification_report_for(&RationaleComponent::TARGETS, predicted, gold)
}

pub fn classification_report_for(
    components: &[RationaleComponent],
    predicted: &[LabeledSentence],
    gold: &[LabeledSentence],
) -> Result<ClassificationReport, EvalError> {
    let pred = index_labels(predicted)?;
    let gold = index_labels(gold)?;
    let only_p: Vec<_> = pred.keys().filter(|k| !gold.contains_key(*k)).collect();
    let only_g: Vec<_> = gold.keys().filter(|k| !pred.contains_key(*k)).collect();
    if !only_p.is_empty() || !only_g.is_empty() {
        let example = only_p.first().or(only_g.first()).map(|k| k.to_string()).unwrap_or_default();
        return Err(EvalError::IdMismatch { only_predicted: only_p.len(), only_gold: only_g.len(), example });
    }
    let mut counts = BTreeMap::new();
    for &c in components {
        let mut k = Confusion::default();
        for (key, g) in &gold {
            let p = pred[key].contains(&c);
            match (p, g.contains(&c)) {
                (true, true) => k.tp += 1,
                (true, false) => k.fp += 1,
                (false, true) => k.fn_ += 1,
                (false, false) => k.tn += 1,
            }
        }
        counts.insert(c, k);
    }
    Ok(ClassificationReport::from_counts(counts))
}

fn index_labels(
    items: &[LabeledSentence],
) -> Result<BTreeMap<SentenceKey, &BTreeSet<RationaleComponent>>, EvalError> {
    let mut out = BTreeMap::new();
    for item in items {
        let key = item.sentence.key();
        if out.insert(key.clone(), &item.labels).is_some() {
            return Err(EvalError::DuplicateSentence(key.to_string()));
        }
    }
    Ok(out)
}

/// `(new − base) / base`.
pub fn relative_improvement(new: f64, base: f64) -> Result<f64, EvalError> {
    if base == 0.0 {
        return Err(EvalError::ZeroBase);
    }
    Ok((new - base) / base)
}

/// Summary quality: information coverage and extra information, both on a
/// 1–5 scale (higher EI means *less* extraneous content).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryQualityScore {
    pub ic: f64,
    pub ei: f64,
    pub f2: f64,
}

impl SummaryQualityScore {
    pub fn new(ic: f64, ei: f64) -> Result<Self, EvalError> {
        Ok(Self { ic, ei, f2: summary_f2(ic, ei)? })
    }
}

/// F2 with coverage in the recall position: `5·EI·IC / (4·EI + IC)`.
pub fn summary_f2(ic: f64, ei: f64) -> Result<f64, EvalError> {
    for (name, value) in [("ic", ic), ("ei", ei)] {
        if !(1.0..=5.0).contains(&value) {
            return Err(EvalError::OutOfRange { name, value, min: 1.0, max: 5.0 });
        }
    }
    Ok(5.0 * ei * ic / (4.0 * ei + ic))
}

/// Round half away from zero to `decimals` places, as tables are reported.
pub fn round_to(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Cohen's kappa for two raters over categorical labels:
/// `(po − pe) / (1 − pe)`. When `pe = 1` the result is 1 if `po = 1`,
/// otherwise undefined.
pub fn cohens_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<Option<f64>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewItems { needed: 2, got: a.len() });
    }
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut counts: HashMap<&T, (usize, usize)> = HashMap::new();
    for x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for y in b {
        counts.entry(y).or_default().1 += 1;
    }
    let pe: f64 = counts.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Ok((po == 1.0).then_some(1.0));
    }
    Ok(Some((po - pe) / (1.0 - pe)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Linear,
    Quadratic,
}

/// Weighted kappa on an ordinal `1..=scale` rating scale:
/// `1 − Σ w·O / Σ w·E`, with disagreement weights `|i−j|/(k−1)` (linear) or
/// `(i−j)²/(k−1)²` (quadratic).
pub fn weighted_kappa(a: &[u32], b: &[u32], scale: u32, weighting: Weighting) -> Result<Option<f64>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewItems { needed: 2, got: a.len() });
    }
    if scale < 2 {
        return Err(EvalError::InsufficientData("scale must have at least two points".into()));
    }
    for &v in a.iter().chain(b) {
        if v < 1 || v > scale {
            return Err(EvalError::OutOfScale { value: v, scale });
        }
    }
    let k = scale as usize;
    let n = a.len() as f64;
    let mut observed = vec![vec![0.0; k]; k];
    let mut row = vec![0.0; k];
    let mut col = vec![0.0; k];
    for (&x, &y) in a.iter().zip(b) {
        observed[x as usize - 1][y as usize - 1] += 1.0 / n;
        row[x as usize - 1] += 1.0 / n;
        col[y as usize - 1] += 1.0 / n;
    }
    let span = (k - 1) as f64;
    let weight = |i: usize, j: usize| {
        let d = (i as f64 - j as f64).abs() / span;
        match weighting {
            Weighting::Linear => d,
            Weighting::Quadratic => d * d,
        }
    };
    let (mut wo, mut we) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            wo += weight(i, j) * observed[i][j];
            we += weight(i, j) * row[i] * col[j];
        }
    }
    if we == 0.0 {
        return Ok((wo == 0.0).then_some(1.0));
    }
    Ok(Some(1.0 - wo / we))
}

/// Krippendorff's alpha at the nominal level. `ratings[u][r]` is rater `r`'s
/// value for unit `u`; `None` marks a missing cell. Units with fewer than two
/// values are not pairable and are skipped.
///
/// Returns 1 for perfect agreement even when only one category occurs (where
/// expected disagreement is zero).
pub fn krippendorff_alpha<T: Ord + Clone>(ratings: &[Vec<Option<T>>]) -> Result<Option<f64>, EvalError> {
    let mut coincidence: BTreeMap<(T, T), f64> = BTreeMap::new();
    let mut pairable_units = 0;
    for unit in ratings {
        let values: Vec<&T> = unit.iter().flatten().collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable_units += 1;
        let w = 1.0 / (m as f64 - 1.0);
        for (i, x) in values.iter().enumerate() {
            for (j, y) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry(((*x).clone(), (*y).clone())).or_default() += w;
                }
            }
        }
    }
    if pairable_units < 2 {
        return Err(EvalError::InsufficientData(format!(
            "need at least 2 units with 2 or more ratings, found {pairable_units}"
        )));
    }
    let mut marginals: BTreeMap<&T, f64> = BTreeMap::new();
    for ((c, _), v) in &coincidence {
        *marginals.entry(c).or_default() += v;
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = coincidence.iter().filter(|((c, k), _)| c != k).map(|(_, v)| v).sum();
    let mut expected = 0.0;
    for (c, nc) in &marginals {
        for (k, nk) in &marginals {
            if c != k {
                expected += nc * nk;
            }
        }
    }
    if expected == 0.0 {
        return Ok((observed == 0.0).then_some(1.0));
    }
    Ok(Some(1.0 - (n - 1.0) * observed / expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeFilterStats {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub k: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

impl SizeFilterStats {
    pub fn is_outlier(&self, value: f64) -> bool {
        value < self.lower_fence || value > self.upper_fence
    }
}

/// Quantile by linear interpolation on the `(n+1)·p` position (the
/// "exclusive" convention), clamped to the sample range.
pub fn quantile_exclusive(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 + 1.0) * p;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

/// Tukey fences `q1 − k·iqr`, `q3 + k·iqr`.
pub fn iqr_fences(values: &[f64], k: f64) -> Result<SizeFilterStats, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_exclusive(&sorted, 0.25);
    let q3 = quantile_exclusive(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(SizeFilterStats { q1, q3, iqr, k, lower_fence: q1 - k * iqr, upper_fence: q3 + k * iqr })
}

/// Agreement bundle as stored in metric files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementScore {
    pub kappa: Option<f64>,
    pub weighted_kappa: Option<f64>,
    pub alpha: Option<f64>,
}

/// Per-component Krippendorff alpha across repeated classification runs:
/// units are sentences, raters are runs, values are presence/absence.
pub fn run_agreement(
    runs: &[BTreeMap<crate::model::SentenceId, BTreeSet<RationaleComponent>>],
    component: RationaleComponent,
) -> Result<Option<f64>, EvalError> {
    let ids: BTreeSet<_> = runs.iter().flat_map(|r| r.keys().copied()).collect();
    let matrix: Vec<Vec<Option<bool>>> = ids
        .iter()
        .map(|id| runs.iter().map(|r| r.get(id).map(|s| s.contains(&component))).collect())
        .collect();
    krippendorff_alpha(&matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArtifactRef, Sentence};
    use RationaleComponent::*;

    fn ls(ordinal: usize, labels: &[RationaleComponent]) -> LabeledSentence {
        LabeledSentence::new(
            Sentence { artifact: ArtifactRef::commit_message(), ordinal, text: format!("s{ordinal}") },
            labels.iter().copied(),
        )
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn f2_examples() {
        assert!(close(f2(0.766, 0.955).unwrap(), 0.910, 0.0005));
        assert!(close(f2(0.514, 0.932).unwrap(), 0.802, 0.0005));
        assert_eq!(f2(0.0, 0.0), None);
        assert_eq!(f2(0.0, 1.0), Some(0.0));
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gold = vec![ls(0, &[Goal]), ls(1, &[Need, Alternatives]), ls(2, &[])];
        let r = classification_report(&gold, &gold).unwrap();
        for c in [Goal, Need, Alternatives] {
            let s = &r.per_component[&c];
            assert_eq!((s.precision, s.recall, s.f2), (Some(1.0), Some(1.0), Some(1.0)));
        }
        assert_eq!(r.overall.counts.tp, 3);
        assert_eq!(r.overall.counts.tn, 6);
    }

    #[test]
    fn unpopulated_component_is_undefined() {
        let gold = vec![ls(0, &[Goal]), ls(1, &[])];
        let r = classification_report(&gold, &gold).unwrap();
        assert_eq!(r.per_component[&Need].precision, None);
        assert_eq!(r.per_component[&Need].recall, None);
        assert_eq!(r.per_component[&Need].f2, None);
    }

    #[test]
    fn hand_built_micro_corpus() {
        // 5 sentences; counts enumerated by hand.
        let gold = vec![ls(0, &[Goal]), ls(1, &[Need]), ls(2, &[]), ls(3, &[Goal, Alternatives]), ls(4, &[])];
        let pred = vec![ls(0, &[Goal]), ls(1, &[Goal]), ls(2, &[Need]), ls(3, &[Goal]), ls(4, &[])];
        let r = classification_report(&pred, &gold).unwrap();
        assert_eq!(r.per_component[&Goal].counts, Confusion { tp: 2, fp: 1, fn_: 0, tn: 2 });
        assert_eq!(r.per_component[&Need].counts, Confusion { tp: 0, fp: 1, fn_: 1, tn: 3 });
        assert_eq!(r.per_component[&Alternatives].counts, Confusion { tp: 0, fp: 0, fn_: 1, tn: 4 });
        assert_eq!(r.overall.counts, Confusion { tp: 2, fp: 2, fn_: 2, tn: 9 });
        assert_eq!(r.overall.precision, Some(0.5));
        assert_eq!(r.overall.recall, Some(0.5));
        assert!(close(r.overall.f2.unwrap(), 0.5, 1e-12));
    }

    #[test]
    fn id_mismatch() {
        let err = classification_report(&[ls(0, &[])], &[ls(1, &[])]).unwrap_err();
        assert!(matches!(err, EvalError::IdMismatch { only_predicted: 1, only_gold: 1, .. }));
    }

    #[test]
    fn relative_improvement_examples() {
        assert!(close(relative_improvement(0.720, 0.622).unwrap(), 0.158, 0.0005));
        assert!(close(relative_improvement(0.937, 0.889).unwrap(), 0.054, 0.0005));
        assert_eq!(relative_improvement(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(relative_improvement(0.3, 0.0), Err(EvalError::ZeroBase));
    }

    #[test]
    fn summary_f2_examples() {
        assert_eq!(round_to(summary_f2(4.5, 3.6).unwrap(), 1), 4.3);
        assert_eq!(round_to(summary_f2(4.6, 2.6).unwrap(), 1), 4.0);
        assert_eq!(summary_f2(5.0, 5.0).unwrap(), 5.0);
        assert!(matches!(summary_f2(0.5, 3.0), Err(EvalError::OutOfRange { name: "ic", .. })));
        assert!(matches!(summary_f2(3.0, 5.5), Err(EvalError::OutOfRange { name: "ei", .. })));
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&[1, 2, 3], &[1, 2, 3]).unwrap(), Some(1.0));
        assert_eq!(cohens_kappa(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), Some(0.0));
        assert_eq!(cohens_kappa(&[1, 0], &[0, 1]).unwrap(), Some(-1.0));
        assert_eq!(cohens_kappa(&[7, 7], &[7, 7]).unwrap(), Some(1.0));
        assert_eq!(cohens_kappa(&[1, 2], &[1]), Err(EvalError::LengthMismatch(2, 1)));
        assert!(matches!(cohens_kappa(&[1], &[1]), Err(EvalError::TooFewItems { .. })));
    }

    #[test]
    fn weighted_kappa_constant_raters() {
        // a all 2s, b all 4s: O and E are the same single cell, so 1 - 1 = 0.
        let v = weighted_kappa(&[2, 2, 2], &[4, 4, 4], 5, Weighting::Quadratic).unwrap();
        assert_eq!(v, Some(0.0));
        assert_eq!(weighted_kappa(&[3, 3], &[3, 3], 5, Weighting::Quadratic).unwrap(), Some(1.0));
        assert!(matches!(weighted_kappa(&[0, 1], &[1, 1], 5, Weighting::Quadratic), Err(EvalError::OutOfScale { .. })));
    }

    #[test]
    fn alpha_errors_and_perfect() {
        let single: Vec<Vec<Option<u8>>> = vec![vec![Some(1), None], vec![None, Some(2)], vec![Some(1), None]];
        assert!(matches!(krippendorff_alpha(&single), Err(EvalError::InsufficientData(_))));
        let perfect = vec![vec![Some(1), Some(1)], vec![Some(2), Some(2)], vec![Some(1), Some(1), Some(1)]];
        assert_eq!(krippendorff_alpha(&perfect).unwrap(), Some(1.0));
        let one_cat = vec![vec![Some('x'), Some('x')], vec![Some('x'), Some('x')]];
        assert_eq!(krippendorff_alpha(&one_cat).unwrap(), Some(1.0));
    }

    #[test]
    fn iqr_examples() {
        let s = iqr_fences(&[7.0; 5], 1.5).unwrap();
        assert_eq!((s.iqr, s.lower_fence, s.upper_fence), (0.0, 7.0, 7.0));
        assert!(!s.is_outlier(7.0));

        let s = iqr_fences(&[1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0, 50.0], 1.5).unwrap();
        // Positions (n+1)p: 2.25 → 2 + .25·(2−2) = 2; 6.75 → 3 + .75·(4−3) = 3.75.
        assert_eq!((s.q1, s.q3), (2.0, 3.75));
        assert_eq!(s.upper_fence, 3.75 + 1.5 * 1.75);
        assert!(s.is_outlier(50.0));
        assert!(!s.is_outlier(4.0));

        let s = iqr_fences(&[1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0, 50.0], 0.0).unwrap();
        assert_eq!((s.lower_fence, s.upper_fence), (s.q1, s.q3));
        assert_eq!(iqr_fences(&[], 1.5), Err(EvalError::EmptySample));
    }

    #[test]
    fn quantiles_match_python_exclusive_method() {
        // statistics.quantiles([3,1,4,1,5,9,2,6], n=4, method='exclusive') → [1.25, 3.5, 5.75]
        let mut v = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        v.sort_by(f64::total_cmp);
        assert!(close(quantile_exclusive(&v, 0.25), 1.25, 1e-12));
        assert!(close(quantile_exclusive(&v, 0.5), 3.5, 1e-12));
        assert!(close(quantile_exclusive(&v, 0.75), 5.75, 1e-12));
    }
}
