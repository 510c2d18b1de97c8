//! Mergeable delay statistics over a fixed log-linear histogram.
//!
//! Bin layout (`sub_bits = 7`, the default): values below `2^(sub_bits+1)`
//! (256 ns) each get an exact bin; above that every power-of-two range is cut
//! into `2^sub_bits` equal bins, so a bin is never wider than 1/128 of its
//! lower bound (better than two significant digits). Bin 0 is the underflow
//! bin (0 ns) and one overflow bin collects everything above `max_value`
//! (10 s by default).
//!
//! Quantiles use the nearest-rank convention: the answer for `q` is the upper
//! bound of the first bin whose cumulative count reaches `ceil(q * count)`,
//! clamped to the largest observed value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("negative delay {0} ns")]
    NegativeDelay(i64),
    #[error("no samples")]
    EmptyStats,
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("CDF resolution must be at least 1")]
    InvalidResolution,
    #[error("histogram layouts differ")]
    LayoutMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramLayout {
    pub sub_bits: u32,
    pub max_value: u64,
}

impl Default for HistogramLayout {
    fn default() -> Self {
        Self { sub_bits: 7, max_value: 10_000_000_000 }
    }
}

impl HistogramLayout {
    fn linear_limit(&self) -> u64 {
        1 << (self.sub_bits + 1)
    }

    /// Index of the regular bin containing `v` (`1 <= v <= max_value`); value
    /// 0 maps to index 0, the underflow bin.
    fn regular_index(&self, v: u64) -> usize {
        if v < self.linear_limit() {
            return v as usize;
        }
        let msb = 63 - v.leading_zeros();
        let shift = msb - self.sub_bits;
        let sub = (v >> shift) - (1 << self.sub_bits);
        (self.linear_limit() + u64::from(shift - 1) * (1 << self.sub_bits) + sub) as usize
    }

    fn overflow_index(&self) -> usize {
        self.regular_index(self.max_value) + 1
    }

    pub fn bin_count(&self) -> usize {
        self.overflow_index() + 1
    }

    pub fn index_of(&self, v: u64) -> usize {
        if v > self.max_value {
            self.overflow_index()
        } else {
            self.regular_index(v)
        }
    }

    /// Inclusive `[lo, hi]` value range of a regular bin (or underflow).
    /// The overflow bin reports `(max_value + 1, u64::MAX)`.
    pub fn bounds(&self, index: usize) -> (u64, u64) {
        let i = index as u64;
        if index >= self.overflow_index() {
            return (self.max_value + 1, u64::MAX);
        }
        if i < self.linear_limit() {
            return (i, i);
        }
        let j = i - self.linear_limit();
        let shift = j >> self.sub_bits;
        let sub = (1 << self.sub_bits) + (j & ((1 << self.sub_bits) - 1));
        let shift = shift + 1;
        (sub << shift, (((sub + 1) << shift) - 1).min(self.max_value))
    }

    /// Width of the bin holding `v`.
    pub fn bin_width(&self, v: u64) -> u64 {
        let (lo, hi) = self.bounds(self.index_of(v));
        hi.saturating_sub(lo) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayStats {
    layout: HistogramLayout,
    bins: Vec<u64>,
    count: u64,
    sum: u128,
    min: u64,
    max: u64,
}

impl Default for DelayStats {
    fn default() -> Self {
        Self::new()
    }
}

impl DelayStats {
    pub fn new() -> Self {
        Self::with_layout(HistogramLayout::default())
    }

    pub fn with_layout(layout: HistogramLayout) -> Self {
        Self { layout, bins: vec![0; layout.bin_count()], count: 0, sum: 0, min: u64::MAX, max: 0 }
    }

    /// Builds statistics over `samples`, splitting the work into chunks that
    /// are histogrammed independently and merged.
    pub fn from_samples(samples: &[u64], exec: Execution) -> Self {
        par::chunked_fold(
            exec,
            samples,
            1 << 16,
            DelayStats::new,
            |mut s, chunk| {
                chunk.iter().for_each(|&v| s.record(v));
                s
            },
            |a, b| a.merged(&b),
        )
    }

    pub fn layout(&self) -> &HistogramLayout {
        &self.layout
    }

    /// Records a signed delay. Negative values are rejected.
    pub fn observe(&mut self, delay_ns: i64) -> Result<(), StatsError> {
        let v = u64::try_from(delay_ns).map_err(|_| StatsError::NegativeDelay(delay_ns))?;
        self.record(v);
        Ok(())
    }

    #[inline]
    pub fn record(&mut self, delay_ns: u64) {
        let idx = self.layout.index_of(delay_ns);
        self.bins[idx] += 1;
        self.count += 1;
        self.sum += u128::from(delay_ns);
        self.min = self.min.min(delay_ns);
        self.max = self.max.max(delay_ns);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn sum(&self) -> u128 {
        self.sum
    }

    pub fn max(&self) -> Option<u64> {
        (self.count > 0).then_some(self.max)
    }

    pub fn min(&self) -> Option<u64> {
        (self.count > 0).then_some(self.min)
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum as f64 / self.count as f64)
    }

    pub fn bins(&self) -> &[u64] {
        &self.bins
    }

    fn bin_value(&self, index: usize) -> u64 {
        self.layout.bounds(index).1.min(self.max)
    }

    pub fn quantile(&self, q: f64) -> Result<u64, StatsError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(StatsError::InvalidQuantile(q));
        }
        if self.count == 0 {
            return Err(StatsError::EmptyStats);
        }
        let rank = ((q * self.count as f64).ceil() as u64).clamp(1, self.count);
        let mut seen = 0;
        for (i, &c) in self.bins.iter().enumerate() {
            seen += c;
            if seen >= rank {
                return Ok(self.bin_value(i));
            }
        }
        unreachable!("bin counts sum to count")
    }

    /// Fraction of samples at or below the bin holding `v`.
    fn cumulative_fraction_through(&self, v: u64) -> f64 {
        let idx = self.layout.index_of(v);
        let through: u64 = self.bins[..=idx].iter().sum();
        through as f64 / self.count as f64
    }

    /// `(delay, cumulative fraction)` points at `resolution` evenly spaced
    /// quantiles. Repeated delays collapse into one point; the last point is
    /// always `(max, 1.0)`.
    pub fn cdf_points(&self, resolution: usize) -> Result<Vec<(u64, f64)>, StatsError> {
        if resolution == 0 {
            return Err(StatsError::InvalidResolution);
        }
        if self.count == 0 {
            return Err(StatsError::EmptyStats);
        }
        let mut out: Vec<(u64, f64)> = Vec::with_capacity(resolution);
        for i in 1..=resolution {
            let q = i as f64 / resolution as f64;
            let v = self.quantile(q.min(1.0))?;
            if out.last().is_some_and(|&(last, _)| last == v) {
                continue;
            }
            out.push((v, self.cumulative_fraction_through(v)));
        }
        Ok(out)
    }

    pub fn merge(&mut self, other: &DelayStats) -> Result<(), StatsError> {
        if self.layout != other.layout {
            return Err(StatsError::LayoutMismatch);
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        self.count += other.count;
        self.sum += other.sum;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        Ok(())
    }

    fn merged(mut self, other: &DelayStats) -> Self {
        self.merge(other).expect("same default layout");
        self
    }

    pub fn summary(&self) -> Option<DelaySummary> {
        if self.count == 0 {
            return None;
        }
        Some(DelaySummary {
            count: self.count,
            mean_ns: self.mean()?,
            p50_ns: self.quantile(0.5).ok()?,
            p99_ns: self.quantile(0.99).ok()?,
            max_ns: self.max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub count: u64,
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

/// Sparse on-disk form of [`DelayStats`].
#[derive(Serialize, Deserialize)]
struct StoredStats {
    layout: HistogramLayout,
    count: u64,
    sum: u128,
    min: Option<u64>,
    max: Option<u64>,
    bins: Vec<(usize, u64)>,
}

impl Serialize for DelayStats {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        StoredStats {
            layout: self.layout,
            count: self.count,
            sum: self.sum,
            min: self.min(),
            max: self.max(),
            bins: self.bins.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DelayStats {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let stored = StoredStats::deserialize(d)?;
        let mut stats = DelayStats::with_layout(stored.layout);
        for (i, c) in stored.bins {
            *stats.bins.get_mut(i).ok_or_else(|| D::Error::custom("bin index out of range"))? = c;
        }
        if stats.bins.iter().sum::<u64>() != stored.count {
            return Err(D::Error::custom("bin counts do not sum to count"));
        }
        stats.count = stored.count;
        stats.sum = stored.sum;
        stats.min = stored.min.unwrap_or(u64::MAX);
        stats.max = stored.max.unwrap_or(0);
        Ok(stats)
    }
}
