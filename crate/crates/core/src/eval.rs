//! Operating-point selection by Youden's J and macro-F1 reporting per SNR bucket.

use crate::augment::NoiseType;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("both classes must be present (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("SNR buckets [{0}, {1}] are empty or overlap another bucket")]
    Buckets(f64, f64),
    #[error("reports have different row structure")]
    Structure,
}

/// Noise condition of a scored window; `None` marks clean, unaugmented input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NoiseCategory {
    Noise(NoiseType),
    None,
}

impl NoiseCategory {
    pub const ALL: [NoiseCategory; 6] = [
        NoiseCategory::Noise(NoiseType::Music),
        NoiseCategory::Noise(NoiseType::Tv),
        NoiseCategory::Noise(NoiseType::Office),
        NoiseCategory::Noise(NoiseType::LivingRoom),
        NoiseCategory::Noise(NoiseType::Conversations),
        NoiseCategory::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseCategory::Noise(t) => t.as_str(),
            NoiseCategory::None => "none",
        }
    }
}

impl fmt::Display for NoiseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        if s == "none" {
            return Ok(NoiseCategory::None);
        }
        s.parse().map(NoiseCategory::Noise)
    }
}

impl From<NoiseType> for NoiseCategory {
    fn from(t: NoiseType) -> Self {
        NoiseCategory::Noise(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    pub label: bool,
    pub snr: Option<f64>,
    pub noise_type: NoiseCategory,
}

impl ScoredSample {
    pub fn new(score: f64, label: bool) -> Self {
        Self {
            score,
            label,
            snr: None,
            noise_type: NoiseCategory::None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn at<'a, I: IntoIterator<Item = &'a ScoredSample>>(samples: I, threshold: f64) -> Self {
        let mut c = Confusion::default();
        for s in samples {
            c.add(s.label, s.score >= threshold);
        }
        c
    }

    pub fn add(&mut self, label: bool, predicted: bool) {
        match (label, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    /// F1 of the positive and negative class, each 0 when its denominator is 0.
    pub fn class_f1(&self) -> (F1, F1) {
        (F1::from_counts(self.tp, self.fp, self.fn_), F1::from_counts(self.tn, self.fn_, self.fp))
    }

    pub fn macro_f1(&self) -> F1 {
        let (p, n) = self.class_f1();
        F1 {
            value: (p.value + n.value) / 2.0,
            zero_denominator: p.zero_denominator || n.zero_denominator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1 {
    pub value: f64,
    /// Set when some class F1 was defined as 0 because `2tp + fp + fn = 0`.
    pub zero_denominator: bool,
}

impl F1 {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            F1 {
                value: 0.0,
                zero_denominator: true,
            }
        } else {
            F1 {
                value: (2 * tp) as f64 / denom as f64,
                zero_denominator: false,
            }
        }
    }
}

fn class_counts(samples: &[ScoredSample]) -> Result<(usize, usize), MetricError> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(MetricError::NonFinite(s.score));
    }
    let positives = samples.iter().filter(|s| s.label).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass { positives, negatives });
    }
    Ok((positives, negatives))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub j: f64,
}

/// The observed score maximizing `TPR - FPR` under "positive iff score ≥ t",
/// preferring the smallest such score on ties.
pub fn youden_point(samples: &[ScoredSample]) -> Result<OperatingPoint, MetricError> {
    let (pos, neg) = class_counts(samples)?;
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
    // J compared exactly as tp·N − fp·P over integers.
    let mut best: Option<(i128, f64, usize, usize)> = None;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        while i < sorted.len() && sorted[i].score == t {
            if sorted[i].label {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let key = tp as i128 * neg as i128 - fp as i128 * pos as i128;
        // Descending sweep: `>=` moves ties toward smaller thresholds.
        if best.map_or(true, |(k, ..)| key >= k) {
            best = Some((key, t, tp, fp));
        }
    }
    let (_, threshold, tp, fp) = best.expect("non-empty input");
    let tpr = tp as f64 / pos as f64;
    let fpr = fp as f64 / neg as f64;
    Ok(OperatingPoint {
        threshold,
        tpr,
        fpr,
        j: tpr - fpr,
    })
}

pub fn youden_threshold(samples: &[ScoredSample]) -> Result<f64, MetricError> {
    youden_point(samples).map(|p| p.threshold)
}

pub fn macro_f1(samples: &[ScoredSample], threshold: f64) -> Result<f64, MetricError> {
    class_counts(samples)?;
    Ok(Confusion::at(samples, threshold).macro_f1().value)
}

/// Half-open SNR interval `[lo, hi)` in dB, written high end first as `[hi, lo]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrBucket {
    pub hi: f64,
    pub lo: f64,
}

impl SnrBucket {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn contains(&self, snr: f64) -> bool {
        snr >= self.lo && snr < self.hi
    }
}

pub const DEFAULT_BUCKETS: [SnrBucket; 3] = [
    SnrBucket::new(20.0, 10.0),
    SnrBucket::new(10.0, 0.0),
    SnrBucket::new(0.0, -10.0),
];

pub fn validate_buckets(buckets: &[SnrBucket]) -> Result<(), MetricError> {
    for (i, b) in buckets.iter().enumerate() {
        if !(b.lo < b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
            return Err(MetricError::Buckets(b.hi, b.lo));
        }
        if buckets[..i].iter().any(|o| b.lo < o.hi && o.lo < b.hi) {
            return Err(MetricError::Buckets(b.hi, b.lo));
        }
    }
    Ok(())
}

/// Which rows a report row aggregates over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowKey {
    Bucket(SnrBucket, NoiseCategory),
    /// Every noise type within one bucket.
    BucketTotal(SnrBucket),
    /// Samples with no SNR or an SNR outside every bucket.
    Unbucketed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub key: RowKey,
    pub confusion: Confusion,
    pub macro_f1: F1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub threshold: f64,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    /// Rows that partition the input: per-noise-type rows and the unbucketed row.
    pub fn partition(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !matches!(r.key, RowKey::BucketTotal(_)))
    }

    pub fn bucket_total(&self, bucket: SnrBucket) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.key == RowKey::BucketTotal(bucket))
    }
}

/// For each bucket: one row per noise category and a total row; then one
/// unbucketed row. All rows are present even when empty.
pub fn bucketed_report(
    samples: &[ScoredSample],
    buckets: &[SnrBucket],
    threshold: f64,
) -> Result<EvalReport, MetricError> {
    validate_buckets(buckets)?;
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(MetricError::NonFinite(s.score));
    }
    let bucket_of = |s: &ScoredSample| s.snr.and_then(|snr| buckets.iter().position(|b| b.contains(snr)));
    let row = |key: RowKey, confusion: Confusion| ReportRow {
        key,
        confusion,
        macro_f1: confusion.macro_f1(),
    };
    let mut rows = Vec::with_capacity(buckets.len() * 7 + 1);
    for (bi, bucket) in buckets.iter().enumerate() {
        let members: Vec<&ScoredSample> = samples.iter().filter(|s| bucket_of(s) == Some(bi)).collect();
        for cat in NoiseCategory::ALL {
            let c = Confusion::at(members.iter().copied().filter(|s| s.noise_type == cat), threshold);
            rows.push(row(RowKey::Bucket(*bucket, cat), c));
        }
        rows.push(row(RowKey::BucketTotal(*bucket), Confusion::at(members.iter().copied(), threshold)));
    }
    let rest = Confusion::at(samples.iter().filter(|s| bucket_of(s).is_none()), threshold);
    rows.push(row(RowKey::Unbucketed, rest));
    Ok(EvalReport { threshold, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub key: RowKey,
    pub a_f1: f64,
    pub b_f1: f64,
    /// `100·(a - b)/b`, or `100·(a - b)` percentage points when `absolute`.
    pub diff_pct: f64,
    pub absolute: bool,
}

pub fn percent_difference(a: f64, b: f64) -> (f64, bool) {
    if b == 0.0 {
        (100.0 * (a - b), true)
    } else {
        (100.0 * (a - b) / b, false)
    }
}

/// Per-row relative macro-F1 difference; positive means `a` is better.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<Vec<ComparisonRow>, MetricError> {
    if a.rows.len() != b.rows.len() || a.rows.iter().zip(&b.rows).any(|(x, y)| x.key != y.key) {
        return Err(MetricError::Structure);
    }
    Ok(a.rows
        .iter()
        .zip(&b.rows)
        .map(|(x, y)| {
            let (diff_pct, absolute) = percent_difference(x.macro_f1.value, y.macro_f1.value);
            ComparisonRow {
                key: x.key,
                a_f1: x.macro_f1.value,
                b_f1: y.macro_f1.value,
                diff_pct,
                absolute,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(score: f64, label: bool) -> ScoredSample {
        ScoredSample::new(score, label)
    }

    #[test]
    fn youden_small_example() {
        let xs = [s(0.9, true), s(0.8, true), s(0.3, false), s(0.1, false)];
        let p = youden_point(&xs).unwrap();
        assert_eq!(p.threshold, 0.8);
        assert_eq!(p.j, 1.0);
    }

    #[test]
    fn youden_ties_prefer_smaller_threshold() {
        // t=0.9: J = 1/2; t=0.5: J = 1 - 1/2 = 1/2; t=0.2: J = 0.
        let xs = [s(0.9, true), s(0.7, false), s(0.5, true), s(0.2, false)];
        assert_eq!(youden_threshold(&xs).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        let xs = [s(0.9, true), s(0.5, true)];
        assert!(matches!(youden_threshold(&xs), Err(MetricError::SingleClass { .. })));
        assert!(macro_f1(&xs, 0.5).is_err());
    }

    #[test]
    fn all_predicted_positive() {
        let xs = [s(0.9, true), s(0.8, true), s(0.7, false), s(0.6, false)];
        let c = Confusion::at(&xs, 0.0);
        let (p, n) = c.class_f1();
        assert_eq!(p.value, 2.0 / 3.0);
        assert_eq!(n.value, 0.0);
        assert_eq!(macro_f1(&xs, 0.0).unwrap(), 1.0 / 3.0);
        assert_eq!(macro_f1(&xs, 0.8).unwrap(), 1.0);
    }

    #[test]
    fn table_difference() {
        let (d, abs) = percent_difference(0.902, 0.869);
        assert!(!abs);
        assert!((d - 3.797).abs() < 1e-3);
        assert_eq!(percent_difference(0.2, 0.0), (20.0, true));
    }

    #[test]
    fn report_layout_and_conservation() {
        let mut xs = vec![];
        for (i, snr) in [15.0, 5.0, -5.0, 25.0].iter().enumerate() {
            xs.push(ScoredSample {
                score: 0.1 * i as f64,
                label: i % 2 == 0,
                snr: Some(*snr),
                noise_type: NoiseType::Office.into(),
            });
        }
        xs.push(s(0.5, true));
        let r = bucketed_report(&xs, &DEFAULT_BUCKETS, 0.15).unwrap();
        assert_eq!(r.rows.len(), 3 * 7 + 1);
        assert_eq!(r.partition().map(|r| r.confusion.total()).sum::<usize>(), xs.len());
        assert_eq!(r.rows.last().unwrap().confusion.total(), 2);
        let cmp = compare_reports(&r, &r).unwrap();
        assert!(cmp.iter().all(|c| c.diff_pct == 0.0));
    }

    #[test]
    fn overlapping_buckets_rejected() {
        let b = [SnrBucket::new(10.0, 0.0), SnrBucket::new(5.0, -5.0)];
        assert!(bucketed_report(&[], &b, 0.5).is_err());
    }
}
