use std::fmt::Write as _;

use super::{Histogram, SliceTable, SummaryStats, SweepRow};
use crate::error::{Error, Result};
use crate::fpe::MetricReport;

pub const REPORTS_HEADER: [&str; 6] = ["client_id", "base_acc", "pers_acc", "delta", "n_train_tokens", "n_test_tokens"];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory csv writer");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

pub fn format_reports_csv(reports: &[MetricReport]) -> String {
    let mut w = writer();
    w.write_record(REPORTS_HEADER).expect("in-memory write");
    for r in reports {
        w.write_record([
            r.client_id.to_string(),
            r.baseline_accuracy.to_string(),
            r.personalized_accuracy.to_string(),
            r.delta.to_string(),
            r.n_train_tokens.to_string(),
            r.n_test_tokens.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Parses the reports CSV written by [`format_reports_csv`]. Errors carry the 1-based line.
pub fn parse_reports_csv(text: &str) -> Result<Vec<MetricReport>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(1, format!("unreadable header: {e}")))?.clone();
    if headers.iter().ne(REPORTS_HEADER) {
        return Err(Error::parse(1, format!("expected header `{}`", REPORTS_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|e| Error::parse(line, format!("{}: `{}`: {e}", REPORTS_HEADER[i], field(i))))
        };
        let count = |i: usize| -> Result<u64> {
            field(i)
                .parse::<u64>()
                .map_err(|e| Error::parse(line, format!("{}: `{}`: {e}", REPORTS_HEADER[i], field(i))))
        };
        let report = MetricReport {
            client_id: count(0)?,
            baseline_accuracy: num(1)?,
            personalized_accuracy: num(2)?,
            delta: num(3)?,
            n_train_tokens: count(4)?,
            n_test_tokens: count(5)?,
        };
        for (name, acc) in [("base_acc", report.baseline_accuracy), ("pers_acc", report.personalized_accuracy)] {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::parse(line, format!("{name} {acc} outside [0, 1]")));
            }
        }
        if !report.delta.is_finite() {
            return Err(Error::parse(line, "delta must be finite"));
        }
        if report.n_test_tokens == 0 {
            return Err(Error::parse(line, "n_test_tokens must be positive"));
        }
        out.push(report);
    }
    Ok(out)
}

/// `bucket_low,bucket_high,count`, with underflow and overflow as the first and last rows.
pub fn format_histogram_csv(h: &Histogram) -> String {
    let edges = h.spec.edges();
    let mut w = writer();
    w.write_record(["bucket_low", "bucket_high", "count"]).expect("in-memory write");
    let last = *edges.last().expect("edges");
    w.write_record(["-inf".to_string(), edges[0].to_string(), h.underflow.to_string()]).expect("in-memory write");
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([edges[i].to_string(), edges[i + 1].to_string(), c.to_string()]).expect("in-memory write");
    }
    w.write_record([last.to_string(), "inf".to_string(), h.overflow.to_string()]).expect("in-memory write");
    finish(w)
}

/// `key,bucket_low,bucket_high,n,mean_base,mean_pers,mean_delta`.
pub fn format_slice_csv(table: &SliceTable) -> String {
    let key = table.key.name();
    let mut w = writer();
    w.write_record(["key", "bucket_low", "bucket_high", "n", "mean_base", "mean_pers", "mean_delta"])
        .expect("in-memory write");
    let mut row = |low: String, high: String, s: &SummaryStats| {
        w.write_record([
            key.to_string(),
            low,
            high,
            s.count.to_string(),
            opt(s.mean_baseline),
            opt(s.mean_personalized),
            opt(s.mean_delta),
        ])
        .expect("in-memory write");
    };
    let first = table.rows.first().map(|r| r.low);
    let last = table.rows.last().map(|r| r.high);
    if !table.underflow.is_empty() {
        let s = super::summarize(&table.underflow, &[]);
        row("-inf".into(), first.unwrap_or(f64::NEG_INFINITY).to_string(), &s);
    }
    for r in &table.rows {
        row(r.low.to_string(), r.high.to_string(), &r.stats);
    }
    if !table.overflow.is_empty() {
        let s = super::summarize(&table.overflow, &[]);
        row(last.unwrap_or(f64::INFINITY).to_string(), "inf".into(), &s);
    }
    finish(w)
}

/// `B,L,mean_delta,frac_ge_<t>` for the first threshold (0.02 by default).
pub fn format_sweep_csv(rows: &[SweepRow], threshold: f64) -> String {
    let mut w = writer();
    w.write_record(["B".to_string(), "L".to_string(), "mean_delta".to_string(), format!("frac_ge_{threshold}")])
        .expect("in-memory write");
    for r in rows {
        let frac = r.stats.fraction_at_least.iter().find(|(t, _)| *t == threshold).map(|&(_, f)| f);
        w.write_record([
            r.strategy.batch_size.to_string(),
            r.strategy.learning_rate.to_string(),
            opt(r.stats.mean_delta),
            opt(frac),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Plain-text `key = value` summary.
pub fn format_summary(s: &SummaryStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "count = {}", s.count);
    let _ = writeln!(out, "mean_baseline = {}", opt(s.mean_baseline));
    let _ = writeln!(out, "mean_personalized = {}", opt(s.mean_personalized));
    let _ = writeln!(out, "mean_delta = {}", opt(s.mean_delta));
    let _ = writeln!(out, "relative_improvement = {}", opt(s.relative_improvement));
    for (t, f) in &s.fraction_at_least {
        let _ = writeln!(out, "frac_ge_{t} = {f}");
    }
    let _ = writeln!(out, "frac_negative = {}", opt(s.fraction_negative));
    if s.fraction_accepted.is_some() || s.count == 0 {
        let _ = writeln!(out, "frac_accepted = {}", opt(s.fraction_accepted));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{build_histogram, HistogramSpec};

    #[test]
    fn reports_round_trip() {
        let rs = vec![MetricReport::new(3, 0.1, 0.3, 10, 5), MetricReport::new(7, 1.0 / 3.0, 0.2, 123, 9)];
        let text = format_reports_csv(&rs);
        assert!(text.starts_with("client_id,base_acc,pers_acc,delta,n_train_tokens,n_test_tokens\n"));
        assert_eq!(parse_reports_csv(&text).unwrap(), rs);
    }

    #[test]
    fn header_only_is_empty() {
        let text = format_reports_csv(&[]);
        assert!(parse_reports_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_report_line() {
        let head = REPORTS_HEADER.join(",");
        let bad = format!("{head}\n0,0.1,0.2,0.1,5,5\n1,0.1,zz,0.1,5,5\n");
        assert!(matches!(parse_reports_csv(&bad), Err(Error::Parse { line: 3, .. })));
        let short = format!("{head}\n0,0.1,0.2\n");
        assert!(matches!(parse_reports_csv(&short), Err(Error::Parse { line: 2, .. })));
        let out_of_range = format!("{head}\n0,1.5,0.2,0.1,5,5\n");
        assert!(parse_reports_csv(&out_of_range).is_err());
        assert!(parse_reports_csv("a,b\n").is_err());
    }

    #[test]
    fn histogram_csv_rows() {
        let spec = HistogramSpec::new(vec![-0.02, 0.0, 0.02, 0.04]).unwrap();
        let h = build_histogram(&[-0.01, 0.0, 0.02, 0.03], &spec);
        assert_eq!(
            format_histogram_csv(&h),
            "bucket_low,bucket_high,count\n-inf,-0.02,0\n-0.02,0,1\n0,0.02,1\n0.02,0.04,2\n0.04,inf,0\n"
        );
    }
}
