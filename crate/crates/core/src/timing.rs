//! Empirical delay distributions and the CSV paths that produce them.
//!
//! A distribution is a histogram of measured latencies: half-open
//! millisecond buckets `[lo, hi)` with integer counts. Histograms either
//! arrive ready-made (`lo,hi,count` CSV) or are built from a raw component
//! event log (`timestamp_ms,component,event` CSV) by pairing source and
//! target events FIFO by timestamp.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("line {line}: malformed row: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("bucket [{lo},{hi}) is empty or inverted")]
    EmptyBucket { lo: f64, hi: f64 },
    #[error("bucket [{lo},{hi}) overlaps its predecessor")]
    OverlappingBuckets { lo: f64, hi: f64 },
    #[error("bucket bound {bound} is negative; latencies are non-negative")]
    NegativeBound { bound: f64 },
    #[error("histogram has zero total count")]
    ZeroTotal,
    #[error("no {send:?} -> {recv:?} pairs found in the log")]
    NoMatchedPairs { send: String, recv: String },
    #[error("bucket width must be positive, got {width}")]
    NonPositiveWidth { width: f64 },
}

/// One half-open latency bucket `[lo, hi)` in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// A histogram of measured delays, used directly by the statistical engine
/// and collapsed to a weighted average by [`crate::model::to_approximate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    buckets: Vec<Bucket>,
    total: u64,
}

impl EmpiricalDistribution {
    /// Builds a distribution from buckets, dropping zero-count entries.
    ///
    /// Buckets are sorted by lower bound and must not overlap; the total
    /// count must be positive.
    pub fn new(mut buckets: Vec<Bucket>) -> Result<Self, TimingError> {
        buckets.retain(|b| b.count > 0);
        buckets.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for b in &buckets {
            if !b.lo.is_finite() || !b.hi.is_finite() || b.lo >= b.hi {
                return Err(TimingError::EmptyBucket { lo: b.lo, hi: b.hi });
            }
            if b.lo < 0.0 {
                return Err(TimingError::NegativeBound { bound: b.lo });
            }
        }
        for w in buckets.windows(2) {
            if w[1].lo < w[0].hi {
                return Err(TimingError::OverlappingBuckets { lo: w[1].lo, hi: w[1].hi });
            }
        }
        let total = buckets.iter().map(|b| b.count).sum();
        if total == 0 {
            return Err(TimingError::ZeroTotal);
        }
        Ok(Self { buckets, total })
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count-weighted mean of bucket midpoints, in milliseconds.
    pub fn mean(&self) -> f64 {
        let weighted: f64 = self
            .buckets
            .iter()
            .map(|b| (b.lo + b.hi) / 2.0 * b.count as f64)
            .sum();
        weighted / self.total as f64
    }

    /// Smallest lower bound and largest upper bound over all buckets.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.buckets.first().map_or(0.0, |b| b.lo);
        let hi = self.buckets.iter().map(|b| b.hi).fold(0.0, f64::max);
        (lo, hi)
    }

    /// Draws one latency: a bucket with probability proportional to its
    /// count, then a uniform value within the bucket.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut pick = rng.random_range(0..self.total);
        for b in &self.buckets {
            if pick < b.count {
                return b.lo + rng.random::<f64>() * (b.hi - b.lo);
            }
            pick -= b.count;
        }
        unreachable!("pick is bounded by the total count");
    }
}

/// Collapses a distribution to a single integer delay: the count-weighted
/// mean of bucket midpoints, rounded half up to whole milliseconds.
pub fn weighted_average(dist: &EmpiricalDistribution) -> u64 {
    (dist.mean() + 0.5).floor() as u64
}

/// Parses a histogram CSV: one `lo,hi,count` row per bucket, `#` comments
/// and blank lines ignored, no header.
pub fn ingest_histogram(text: &str) -> Result<EmpiricalDistribution, TimingError> {
    let mut buckets = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(TimingError::MalformedRow {
                line,
                message: format!("expected 3 fields `lo,hi,count`, got {}", fields.len()),
            });
        }
        let lo: f64 = fields[0].parse().map_err(|_| TimingError::MalformedRow {
            line,
            message: format!("bad lower bound {:?}", fields[0]),
        })?;
        let hi: f64 = fields[1].parse().map_err(|_| TimingError::MalformedRow {
            line,
            message: format!("bad upper bound {:?}", fields[1]),
        })?;
        let count: u64 = fields[2].parse().map_err(|_| TimingError::MalformedRow {
            line,
            message: format!("bad count {:?}", fields[2]),
        })?;
        buckets.push(Bucket { lo, hi, count });
    }
    EmpiricalDistribution::new(buckets)
}

/// Renders a histogram back to its CSV form, one bucket per row.
pub fn render_histogram(dist: &EmpiricalDistribution) -> String {
    let mut out = String::new();
    for b in dist.buckets() {
        let _ = writeln!(out, "{},{},{}", b.lo, b.hi, b.count);
    }
    out
}

/// One row of a component event log.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LogEvent {
    pub timestamp_ms: f64,
    pub component: String,
    pub event: String,
}

/// Parses a `timestamp_ms,component,event` log CSV. A header row equal to
/// the column names is skipped; `#` comments and blank lines are ignored.
pub fn parse_log(text: &str) -> Result<Vec<LogEvent>, TimingError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(TimingError::MalformedRow {
                line,
                message: format!("expected 3 fields `timestamp_ms,component,event`, got {}", fields.len()),
            });
        }
        if fields == ["timestamp_ms", "component", "event"] {
            continue;
        }
        let timestamp_ms: f64 = fields[0].parse().map_err(|_| TimingError::MalformedRow {
            line,
            message: format!("bad timestamp {:?}", fields[0]),
        })?;
        events.push(LogEvent {
            timestamp_ms,
            component: fields[1].to_string(),
            event: fields[2].to_string(),
        });
    }
    Ok(events)
}

/// Builds a latency histogram from a component log.
///
/// Source and target occurrences are paired FIFO in timestamp order: each
/// target event consumes the earliest unconsumed source event. Latencies
/// are binned into half-open buckets of the given width. Unmatched events
/// on either side are ignored.
pub fn build_histogram(
    log: &[LogEvent],
    source_event: &str,
    target_event: &str,
    bucket_width_ms: f64,
) -> Result<EmpiricalDistribution, TimingError> {
    if !(bucket_width_ms > 0.0) {
        return Err(TimingError::NonPositiveWidth { width: bucket_width_ms });
    }
    let mut ordered: Vec<&LogEvent> = log.iter().collect();
    ordered.sort_by(|a, b| a.timestamp_ms.total_cmp(&b.timestamp_ms));

    let mut pending: VecDeque<f64> = VecDeque::new();
    let mut counts: Vec<(u64, u64)> = Vec::new();
    for ev in ordered {
        if ev.event == source_event {
            pending.push_back(ev.timestamp_ms);
        } else if ev.event == target_event {
            if let Some(sent) = pending.pop_front() {
                let latency = ev.timestamp_ms - sent;
                let idx = (latency / bucket_width_ms).floor() as u64;
                match counts.iter_mut().find(|(i, _)| *i == idx) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((idx, 1)),
                }
            }
        }
    }
    if counts.is_empty() {
        return Err(TimingError::NoMatchedPairs {
            send: source_event.to_string(),
            recv: target_event.to_string(),
        });
    }
    let buckets = counts
        .into_iter()
        .map(|(idx, count)| Bucket {
            lo: idx as f64 * bucket_width_ms,
            hi: (idx + 1) as f64 * bucket_width_ms,
            count,
        })
        .collect();
    EmpiricalDistribution::new(buckets)
}
