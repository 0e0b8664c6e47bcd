//! Server-side aggregation of metric reports.
//!
//! Buckets are right-open `[e_i, e_{i+1})` except the last, which is closed.
//! Values below the first edge or above the last go to underflow/overflow.
//! All means are unweighted per-client means.

mod csvio;
mod svg;

pub use csvio::{
    format_histogram_csv, format_reports_csv, format_slice_csv, format_summary, format_sweep_csv, parse_reports_csv,
    REPORTS_HEADER,
};
pub use svg::histogram_svg;

use crate::error::{Error, Result};
use crate::fpe::{gate, GateDecision, GatePolicy, MetricReport, PersonalizationStrategy};

/// Strictly increasing bucket edges.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSpec {
    edges: Vec<f64>,
}

impl HistogramSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidEdges);
        }
        Ok(Self { edges })
    }

    /// `buckets` equal-width buckets over `[low, high]`.
    pub fn uniform(low: f64, high: f64, buckets: usize) -> Result<Self> {
        if buckets == 0 || !low.is_finite() || !high.is_finite() {
            return Err(Error::InvalidEdges);
        }
        let width = (high - low) / buckets as f64;
        let mut edges: Vec<f64> = (0..buckets).map(|i| low + width * i as f64).collect();
        edges.push(high);
        Self::new(edges)
    }

    /// 41 buckets over `[-0.1, 0.1]`.
    pub fn default_delta() -> Self {
        Self::uniform(-0.1, 0.1, 41).expect("valid default edges")
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn buckets(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bucket index of `value`.
    pub fn locate(&self, value: f64) -> Placement {
        let first = self.edges[0];
        let last = *self.edges.last().expect("at least two edges");
        if value.is_nan() {
            return Placement::Overflow;
        }
        if value < first {
            return Placement::Underflow;
        }
        if value > last {
            return Placement::Overflow;
        }
        // number of edges <= value, minus one, capped to the closed final bucket
        let idx = self.edges.partition_point(|&e| e <= value) - 1;
        Placement::Bucket(idx.min(self.buckets() - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Underflow,
    Bucket(usize),
    Overflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Merges another histogram over the same edges.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::InvalidEdges);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }
}

pub fn build_histogram(values: &[f64], spec: &HistogramSpec) -> Histogram {
    let mut h = Histogram { spec: spec.clone(), counts: vec![0; spec.buckets()], underflow: 0, overflow: 0 };
    for &v in values {
        match spec.locate(v) {
            Placement::Underflow => h.underflow += 1,
            Placement::Overflow => h.overflow += 1,
            Placement::Bucket(i) => h.counts[i] += 1,
        }
    }
    h
}

/// Order-independent mean: values are sorted before a compensated sum.
fn mean(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values.iter() {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    Some((sum + comp) / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub count: usize,
    pub mean_baseline: Option<f64>,
    pub mean_personalized: Option<f64>,
    pub mean_delta: Option<f64>,
    /// `mean_delta / mean_baseline`; absent when the baseline mean is zero.
    pub relative_improvement: Option<f64>,
    /// `(threshold, fraction of reports with delta >= threshold)`.
    pub fraction_at_least: Vec<(f64, f64)>,
    pub fraction_negative: Option<f64>,
    /// Fraction accepted by the gate, when a policy was supplied.
    pub fraction_accepted: Option<f64>,
}

pub const DEFAULT_THRESHOLDS: [f64; 1] = [0.02];

/// `(mean_delta / mean_baseline)`, or `None` for a zero baseline.
pub fn relative_improvement(mean_baseline: f64, mean_delta: f64) -> Option<f64> {
    (mean_baseline != 0.0).then(|| mean_delta / mean_baseline)
}

pub fn summarize(reports: &[MetricReport], thresholds: &[f64]) -> SummaryStats {
    summarize_with_gate(reports, thresholds, None)
}

pub fn summarize_with_gate(reports: &[MetricReport], thresholds: &[f64], policy: Option<&GatePolicy>) -> SummaryStats {
    let n = reports.len();
    let mut base: Vec<f64> = reports.iter().map(|r| r.baseline_accuracy).collect();
    let mut pers: Vec<f64> = reports.iter().map(|r| r.personalized_accuracy).collect();
    let mut delta: Vec<f64> = reports.iter().map(|r| r.delta).collect();
    let mean_baseline = mean(&mut base);
    let mean_personalized = mean(&mut pers);
    let mean_delta = mean(&mut delta);
    let frac = |pred: &dyn Fn(&MetricReport) -> bool| -> Option<f64> {
        (n > 0).then(|| reports.iter().filter(|r| pred(r)).count() as f64 / n as f64)
    };
    let fraction_at_least = if n == 0 {
        Vec::new()
    } else {
        thresholds.iter().map(|&t| (t, frac(&|r| r.delta >= t).expect("non-empty"))).collect()
    };
    SummaryStats {
        count: n,
        mean_baseline,
        mean_personalized,
        mean_delta,
        relative_improvement: match (mean_baseline, mean_delta) {
            (Some(b), Some(d)) => relative_improvement(b, d),
            _ => None,
        },
        fraction_at_least,
        fraction_negative: frac(&|r| r.delta < 0.0),
        fraction_accepted: policy.and_then(|p| frac(&|r| gate(r, p) == GateDecision::Accept)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceKey {
    /// Target tokens in the client's train partition.
    TokenCount,
    BaselineAccuracy,
}

impl SliceKey {
    pub fn name(&self) -> &'static str {
        match self {
            SliceKey::TokenCount => "token_count",
            SliceKey::BaselineAccuracy => "baseline_accuracy",
        }
    }

    fn value(&self, report: &MetricReport) -> f64 {
        match self {
            SliceKey::TokenCount => report.n_train_tokens as f64,
            SliceKey::BaselineAccuracy => report.baseline_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub key: SliceKey,
    pub edges: HistogramSpec,
}

impl SliceSpec {
    pub fn new(key: SliceKey, edges: Vec<f64>) -> Result<Self> {
        Ok(Self { key, edges: HistogramSpec::new(edges)? })
    }

    /// `[0, 0.1, 0.15, 0.2, 1.0]`.
    pub fn default_baseline() -> Self {
        Self::new(SliceKey::BaselineAccuracy, vec![0.0, 0.1, 0.15, 0.2, 1.0]).expect("valid edges")
    }

    /// `[0, 1000, 2500, 5000, inf)`.
    pub fn default_token_count() -> Self {
        Self::new(SliceKey::TokenCount, vec![0.0, 1000.0, 2500.0, 5000.0, f64::INFINITY]).expect("valid edges")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceRow {
    pub low: f64,
    pub high: f64,
    pub stats: SummaryStats,
    pub reports: Vec<MetricReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceTable {
    pub key: SliceKey,
    pub rows: Vec<SliceRow>,
    pub underflow: Vec<MetricReport>,
    pub overflow: Vec<MetricReport>,
}

impl SliceTable {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.reports.len()).sum::<usize>() + self.underflow.len() + self.overflow.len()
    }
}

pub fn slice(reports: &[MetricReport], spec: &SliceSpec, thresholds: &[f64]) -> SliceTable {
    let edges = spec.edges.edges();
    let mut groups: Vec<Vec<MetricReport>> = vec![Vec::new(); spec.edges.buckets()];
    let mut underflow = Vec::new();
    let mut overflow = Vec::new();
    for r in reports {
        match spec.edges.locate(spec.key.value(r)) {
            Placement::Underflow => underflow.push(*r),
            Placement::Overflow => overflow.push(*r),
            Placement::Bucket(i) => groups[i].push(*r),
        }
    }
    let rows = groups
        .into_iter()
        .enumerate()
        .map(|(i, reports)| SliceRow {
            low: edges[i],
            high: edges[i + 1],
            stats: summarize(&reports, thresholds),
            reports,
        })
        .collect();
    SliceTable { key: spec.key, rows, underflow, overflow }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub strategy: PersonalizationStrategy,
    pub stats: SummaryStats,
}

/// One row per strategy, ordered by `(B, L, T, E)`.
pub fn sweep_table(runs: &[(PersonalizationStrategy, Vec<MetricReport>)], thresholds: &[f64]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> =
        runs.iter().map(|(s, reports)| SweepRow { strategy: *s, stats: summarize(reports, thresholds) }).collect();
    rows.sort_by(|a, b| {
        let (x, y) = (&a.strategy, &b.strategy);
        x.batch_size
            .cmp(&y.batch_size)
            .then(x.learning_rate.total_cmp(&y.learning_rate))
            .then(x.token_budget.cmp(&y.token_budget))
            .then(x.epoch_budget.cmp(&y.epoch_budget))
    });
    rows
}
