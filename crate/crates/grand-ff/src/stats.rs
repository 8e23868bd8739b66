//! Steady-state output analysis for piecewise-constant sample paths.
//!
//! Time averages are holding-time weighted; confidence intervals come from
//! non-overlapping batch means over the post-warmup window. Also hosts the
//! Poisson-marginal diagnostic and per-server busy-period summaries.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Default number of equal-length batches for the batch-means interval.
pub const DEFAULT_BATCHES: usize = 20;
/// Estimates built from fewer nonempty batches than this are rejected.
pub const MIN_BATCHES: usize = 10;
/// Acceptance window for the index of dispersion of a Poisson marginal.
pub const DISPERSION_WINDOW: (f64, f64) = (0.85, 1.15);
/// Cap on pairwise sample correlation between marginals of different types.
pub const CORRELATION_CAP: f64 = 0.1;
/// Sample count below which the dispersion test has too little power.
pub const MIN_MARGINAL_SAMPLES: usize = 500;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("insufficient data: {nonempty} nonempty batches, need at least {MIN_BATCHES}")]
    InsufficientData { nonempty: usize },
    #[error("horizon {horizon} must exceed warmup {warmup}")]
    EmptyWindow { warmup: f64, horizon: f64 },
}

/// Point estimate of a steady-state mean with a 95% batch-means interval.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SteadyStateEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub batches: usize,
    pub warmup: f64,
    pub horizon: f64,
}

/// Streaming holding-time-weighted averager over `[warmup, horizon]`.
///
/// Feed it every change point of a piecewise-constant path via [`observe`],
/// then call [`finish`] with the end of the observation window.
///
/// [`observe`]: TimeAverager::observe
/// [`finish`]: TimeAverager::finish
#[derive(Debug, Clone)]
pub struct TimeAverager {
    warmup: f64,
    horizon: f64,
    batch_len: f64,
    batch_sum: Vec<f64>,
    batch_weight: Vec<f64>,
    last_t: f64,
    value: f64,
    started: bool,
}

impl TimeAverager {
    pub fn new(warmup: f64, horizon: f64, batches: usize) -> Result<Self, StatsError> {
        if !(horizon > warmup) {
            return Err(StatsError::EmptyWindow { warmup, horizon });
        }
        let batches = batches.max(1);
        Ok(TimeAverager {
            warmup,
            horizon,
            batch_len: (horizon - warmup) / batches as f64,
            batch_sum: vec![0.0; batches],
            batch_weight: vec![0.0; batches],
            last_t: 0.0,
            value: 0.0,
            started: false,
        })
    }

    /// Record that the path takes `value` from time `t` onward.
    pub fn observe(&mut self, t: f64, value: f64) {
        if self.started {
            self.accumulate(self.last_t, t);
        }
        self.last_t = t;
        self.value = value;
        self.started = true;
    }

    /// Close the window at `t_end`, crediting the final segment.
    pub fn finish(&mut self, t_end: f64) {
        if self.started {
            self.accumulate(self.last_t, t_end);
            self.last_t = t_end;
        }
    }

    fn accumulate(&mut self, t0: f64, t1: f64) {
        let lo = t0.max(self.warmup);
        let hi = t1.min(self.horizon);
        if hi <= lo {
            return;
        }
        // Split the segment across batch boundaries.
        let mut seg_lo = lo;
        while seg_lo < hi {
            let b = (((seg_lo - self.warmup) / self.batch_len) as usize)
                .min(self.batch_sum.len() - 1);
            let b_end = self.warmup + (b + 1) as f64 * self.batch_len;
            let seg_hi = hi.min(b_end);
            let w = seg_hi - seg_lo;
            self.batch_sum[b] += self.value * w;
            self.batch_weight[b] += w;
            if seg_hi <= seg_lo {
                break;
            }
            seg_lo = seg_hi;
        }
    }

    pub fn estimate(&self) -> Result<SteadyStateEstimate, StatsError> {
        let total_w: f64 = self.batch_weight.iter().sum();
        let total_s: f64 = self.batch_sum.iter().sum();
        let means: Vec<f64> = self
            .batch_sum
            .iter()
            .zip(&self.batch_weight)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&s, &w)| s / w)
            .collect();
        if means.len() < MIN_BATCHES {
            return Err(StatsError::InsufficientData {
                nonempty: means.len(),
            });
        }
        Ok(SteadyStateEstimate {
            mean: total_s / total_w,
            half_width: half_width_95(&means),
            batches: means.len(),
            warmup: self.warmup,
            horizon: self.horizon,
        })
    }
}

/// 95% half-width for the mean of `values` treated as i.i.d. draws.
pub fn half_width_95(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    t * (var / n as f64).sqrt()
}

/// Time average of an explicit piecewise-constant path.
///
/// `path` lists `(t, value)` change points with strictly increasing times;
/// each value holds until the next change point, the last until `horizon`.
pub fn time_average(
    path: &[(f64, f64)],
    warmup: f64,
    horizon: f64,
    batches: usize,
) -> Result<SteadyStateEstimate, StatsError> {
    let mut avg = TimeAverager::new(warmup, horizon, batches)?;
    for &(t, v) in path {
        avg.observe(t, v);
    }
    avg.finish(horizon);
    avg.estimate()
}

/// Per-type marginal statistics from spaced samples.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MarginalStat {
    pub mean: f64,
    pub variance: f64,
    /// Index of dispersion `variance / mean`; 1 for a Poisson law.
    pub dispersion: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PoissonMarginalReport {
    pub n_samples: usize,
    pub per_type: Vec<MarginalStat>,
    /// Largest `|corr(Y_i, Y_j)|` over type pairs; 0 when there is one type.
    pub max_abs_correlation: f64,
    pub correlation_pass: bool,
}

impl PoissonMarginalReport {
    pub fn pass(&self) -> bool {
        self.correlation_pass && self.per_type.iter().all(|m| m.pass)
    }
}

/// Dispersion and cross-correlation diagnostic against the Poisson marginal law.
///
/// `samples` holds one row per sample time, one column per customer type.
/// Rows should be spaced several mean service times apart so consecutive
/// samples are nearly independent.
pub fn poisson_marginal_test(samples: &[Vec<u64>]) -> PoissonMarginalReport {
    let n = samples.len();
    let dim = samples.first().map_or(0, Vec::len);
    let mut per_type = Vec::with_capacity(dim);
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); dim];
    for row in samples {
        for (i, &v) in row.iter().enumerate() {
            cols[i].push(v as f64);
        }
    }
    for col in &cols {
        let mean = col.iter().sum::<f64>() / n.max(1) as f64;
        let variance = if n > 1 {
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let dispersion = if mean > 0.0 { variance / mean } else { 0.0 };
        let pass = n >= MIN_MARGINAL_SAMPLES
            && dispersion >= DISPERSION_WINDOW.0
            && dispersion <= DISPERSION_WINDOW.1;
        per_type.push(MarginalStat {
            mean,
            variance,
            dispersion,
            pass,
        });
    }
    let mut max_abs_correlation: f64 = 0.0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let c = correlation(&cols[i], &cols[j]);
            max_abs_correlation = max_abs_correlation.max(c.abs());
        }
    }
    PoissonMarginalReport {
        n_samples: n,
        per_type,
        max_abs_correlation,
        correlation_pass: max_abs_correlation <= CORRELATION_CAP,
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Distribution summary of per-server occupied durations.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BusyPeriodSummary {
    pub count: usize,
    pub mean: f64,
    pub p99: f64,
    pub max: f64,
    /// Reciprocal mean busy period: the empirical rate at which an occupied
    /// server empties.
    pub emptying_rate: f64,
}

/// Summarize completed busy periods (durations a given rank stayed occupied).
pub fn busy_period_summary(durations: &[f64]) -> BusyPeriodSummary {
    if durations.is_empty() {
        return BusyPeriodSummary {
            count: 0,
            mean: 0.0,
            p99: 0.0,
            max: 0.0,
            emptying_rate: 0.0,
        };
    }
    let mut sorted = durations.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let count = sorted.len();
    let mean = sorted.iter().sum::<f64>() / count as f64;
    let p99_idx = (((count as f64) * 0.99).ceil() as usize).clamp(1, count) - 1;
    BusyPeriodSummary {
        count,
        mean,
        p99: sorted[p99_idx],
        max: sorted[count - 1],
        emptying_rate: if mean > 0.0 { 1.0 / mean } else { 0.0 },
    }
}
