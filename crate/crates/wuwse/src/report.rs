//! CSV and plain-text renderings of metric histories and evaluation reports.

use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;
use wuwse_core::eval::{
    ComparisonRow, Confusion, EvalReport, NoiseCategory, ReportRow, RowKey, SnrBucket, F1,
};
use wuwse_core::train::EpochRecord;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path} row {row}: {reason}")]
    Row { path: String, row: usize, reason: String },
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ReportError> {
    csv::Writer::from_path(path).map_err(|source| ReportError::Csv {
        path: path.display().to_string(),
        source,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_metrics_csv(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record([
        "epoch",
        "train_loss",
        "val_loss",
        "train_raw",
        "train_spec",
        "train_bce",
        "val_raw",
        "val_spec",
        "val_bce",
    ])
    .map_err(csv_err(path))?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.6}", r.train.total),
            format!("{:.6}", r.val.total),
            opt(r.train.raw),
            opt(r.train.spec),
            opt(r.train.bce),
            opt(r.val.raw),
            opt(r.val.spec),
            opt(r.val.bce),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| csv_err(path)(e.into()))
}

/// `(snr_lo, snr_hi, noise_type)` cells of a row key.
fn key_cells(key: &RowKey) -> [String; 3] {
    match key {
        RowKey::Bucket(b, cat) => [b.lo.to_string(), b.hi.to_string(), cat.as_str().into()],
        RowKey::BucketTotal(b) => [b.lo.to_string(), b.hi.to_string(), "all".into()],
        RowKey::Unbucketed => [String::new(), String::new(), "unbucketed".into()],
    }
}

fn parse_key(lo: &str, hi: &str, noise: &str) -> Result<RowKey, String> {
    if noise == "unbucketed" {
        return Ok(RowKey::Unbucketed);
    }
    let lo: f64 = lo.parse().map_err(|_| format!("bad snr_lo {lo:?}"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad snr_hi {hi:?}"))?;
    let b = SnrBucket::new(hi, lo);
    if noise == "all" {
        return Ok(RowKey::BucketTotal(b));
    }
    let cat: NoiseCategory = noise.parse().map_err(|_| format!("unknown noise type {noise:?}"))?;
    Ok(RowKey::Bucket(b, cat))
}

pub const REPORT_COLUMNS: [&str; 8] = ["snr_lo", "snr_hi", "noise_type", "tp", "fp", "tn", "fn", "macro_f1"];

pub fn write_report_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(REPORT_COLUMNS).map_err(csv_err(path))?;
    for r in &report.rows {
        let [lo, hi, noise] = key_cells(&r.key);
        let c = r.confusion;
        w.write_record([
            lo,
            hi,
            noise,
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            format!("{:.6}", r.macro_f1.value),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| csv_err(path)(e.into()))
}

/// Reads a report CSV back. Macro F1 is recomputed from the counts; the
/// threshold is not stored in the CSV and comes back as NaN.
pub fn read_report_csv(path: impl AsRef<Path>) -> Result<EvalReport, ReportError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let bad = |reason: String| ReportError::Row {
            path: path.display().to_string(),
            row: i + 2,
            reason,
        };
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != REPORT_COLUMNS.len() {
            return Err(bad(format!("expected {} columns", REPORT_COLUMNS.len())));
        }
        let key = parse_key(&rec[0], &rec[1], &rec[2]).map_err(bad)?;
        let n = |j: usize| rec[j].parse::<usize>().map_err(|_| bad(format!("bad count {:?}", &rec[j])));
        let confusion = Confusion {
            tp: n(3)?,
            fp: n(4)?,
            tn: n(5)?,
            fn_: n(6)?,
        };
        rows.push(ReportRow {
            key,
            confusion,
            macro_f1: confusion.macro_f1(),
        });
    }
    Ok(EvalReport {
        threshold: f64::NAN,
        rows,
    })
}

pub fn write_comparison_csv(rows: &[ComparisonRow], path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["snr_lo", "snr_hi", "noise_type", "a_f1", "b_f1", "diff_pct", "absolute"])
        .map_err(csv_err(path))?;
    for r in rows {
        let [lo, hi, noise] = key_cells(&r.key);
        w.write_record([
            lo,
            hi,
            noise,
            format!("{:.6}", r.a_f1),
            format!("{:.6}", r.b_f1),
            format!("{:.3}", r.diff_pct),
            r.absolute.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| csv_err(path)(e.into()))
}

fn bucket_label(b: &SnrBucket) -> String {
    format!("[{},{}]", b.hi, b.lo)
}

fn buckets_of(report_keys: impl Iterator<Item = RowKey>) -> Vec<SnrBucket> {
    let mut out: Vec<SnrBucket> = Vec::new();
    for k in report_keys {
        if let RowKey::BucketTotal(b) = k {
            out.push(b);
        }
    }
    out
}

fn f1_cell(f: &F1, n: usize) -> String {
    if n == 0 {
        "-".into()
    } else if f.zero_denominator {
        format!("{:.3}*", f.value)
    } else {
        format!("{:.3}", f.value)
    }
}

/// Totals per bucket, then a noise type × bucket grid of macro F1.
pub fn render_report_text(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "threshold: {:.6}", report.threshold);
    let buckets = buckets_of(report.rows.iter().map(|r| r.key));
    let _ = writeln!(s, "\n{:<14}{:>8}{:>10}", "SNR (dB)", "n", "macro F1");
    for b in &buckets {
        if let Some(r) = report.bucket_total(*b) {
            let n = r.confusion.total();
            let _ = writeln!(s, "{:<14}{:>8}{:>10}", bucket_label(b), n, f1_cell(&r.macro_f1, n));
        }
    }
    if let Some(r) = report.rows.iter().find(|r| r.key == RowKey::Unbucketed) {
        let n = r.confusion.total();
        let _ = writeln!(s, "{:<14}{:>8}{:>10}", "unbucketed", n, f1_cell(&r.macro_f1, n));
    }
    let _ = write!(s, "\n{:<16}", "noise type");
    for b in &buckets {
        let _ = write!(s, "{:>12}", bucket_label(b));
    }
    s.push('\n');
    for cat in NoiseCategory::ALL {
        let _ = write!(s, "{:<16}", cat.as_str());
        for b in &buckets {
            let cell = report
                .rows
                .iter()
                .find(|r| r.key == RowKey::Bucket(*b, cat))
                .map(|r| f1_cell(&r.macro_f1, r.confusion.total()))
                .unwrap_or_else(|| "-".into());
            let _ = write!(s, "{cell:>12}");
        }
        s.push('\n');
    }
    s.push_str("\n* a class F1 had an empty denominator and was counted as 0\n");
    s
}

/// Noise type × bucket grid of relative differences, `a` against `b`.
pub fn render_comparison_text(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let buckets = buckets_of(rows.iter().map(|r| r.key));
    let _ = write!(s, "{:<16}", "noise type");
    for b in &buckets {
        let _ = write!(s, "{:>12}", bucket_label(b));
    }
    s.push('\n');
    let cell = |key: RowKey| {
        rows.iter()
            .find(|r| r.key == key)
            .map(|r| {
                if r.absolute {
                    format!("{:+.1}pp", r.diff_pct)
                } else {
                    format!("{:+.1}%", r.diff_pct)
                }
            })
            .unwrap_or_else(|| "-".into())
    };
    let mut line = |label: &str, key: &dyn Fn(SnrBucket) -> RowKey| {
        let _ = write!(s, "{label:<16}");
        for b in &buckets {
            let _ = write!(s, "{:>12}", cell(key(*b)));
        }
        s.push('\n');
    };
    for cat in NoiseCategory::ALL {
        line(cat.as_str(), &|b| RowKey::Bucket(b, cat));
    }
    line("all", &|b| RowKey::BucketTotal(b));
    s
}
