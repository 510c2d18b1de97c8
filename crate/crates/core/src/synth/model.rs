use rand::Rng;
use rand_distr::{Distribution, LogNormal, Pareto};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal as LogNormalCdf, Pareto as ParetoCdf};

use super::SynthError;

/// Delay distribution: a lognormal body mixed with a Pareto tail, truncated
/// at `max_ns` (samples above it are redrawn).
///
/// All parameters are nanoseconds. `tail_weight = 0` gives a plain truncated
/// lognormal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub median_ns: f64,
    pub sigma: f64,
    pub tail_weight: f64,
    pub tail_scale_ns: f64,
    pub tail_shape: f64,
    pub max_ns: f64,
}

const MAX_REDRAWS: usize = 1_000;

impl DelayModel {
    pub fn lognormal(median_ns: f64, sigma: f64, max_ns: f64) -> Self {
        Self { median_ns, sigma, tail_weight: 0.0, tail_scale_ns: 1.0, tail_shape: 1.0, max_ns }
    }

    /// Lognormal with the given mean rather than median.
    pub fn lognormal_with_mean(mean_ns: f64, sigma: f64, max_ns: f64) -> Self {
        Self::lognormal(mean_ns * (-sigma * sigma / 2.0).exp(), sigma, max_ns)
    }

    pub fn with_tail(mut self, weight: f64, scale_ns: f64, shape: f64) -> Self {
        self.tail_weight = weight;
        self.tail_scale_ns = scale_ns;
        self.tail_shape = shape;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.median_ns) || !positive(self.sigma) || !positive(self.max_ns) {
            return Err(SynthError::InvalidProfile("delay model median, sigma and max must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.tail_weight) {
            return Err(SynthError::InvalidProfile("tail weight must be in [0, 1)".into()));
        }
        if self.tail_weight > 0.0 && (!positive(self.tail_scale_ns) || !positive(self.tail_shape)) {
            return Err(SynthError::InvalidProfile("tail scale and shape must be positive".into()));
        }
        if self.untruncated_cdf(self.max_ns) < 1e-3 {
            return Err(SynthError::InvalidProfile("max delay truncates almost all mass".into()));
        }
        Ok(())
    }

    fn untruncated_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let body = LogNormalCdf::new(self.median_ns.ln(), self.sigma).map(|d| d.cdf(x)).unwrap_or(0.0);
        if self.tail_weight == 0.0 {
            return body;
        }
        let tail = ParetoCdf::new(self.tail_scale_ns, self.tail_shape).map(|d| d.cdf(x)).unwrap_or(0.0);
        (1.0 - self.tail_weight) * body + self.tail_weight * tail
    }

    /// Analytic CDF of the truncated mixture.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= self.max_ns {
            return 1.0;
        }
        self.untruncated_cdf(x) / self.untruncated_cdf(self.max_ns)
    }

    /// Analytic quantile, by bisection on [`Self::cdf`].
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.max_ns);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    pub fn sampler(&self) -> Result<DelaySampler, SynthError> {
        self.validate()?;
        let body = LogNormal::new(self.median_ns.ln(), self.sigma)
            .map_err(|e| SynthError::InvalidProfile(format!("lognormal: {e}")))?;
        let tail = if self.tail_weight > 0.0 {
            Some(
                Pareto::new(self.tail_scale_ns, self.tail_shape)
                    .map_err(|e| SynthError::InvalidProfile(format!("pareto: {e}")))?,
            )
        } else {
            None
        };
        Ok(DelaySampler { body, tail, tail_weight: self.tail_weight, max_ns: self.max_ns })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DelaySampler {
    body: LogNormal<f64>,
    tail: Option<Pareto<f64>>,
    tail_weight: f64,
    max_ns: f64,
}

impl DelaySampler {
    /// One delay in whole nanoseconds. Always draws the mixture selector
    /// first, then the component, redrawing both on truncation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        for _ in 0..MAX_REDRAWS {
            let pick_tail = rng.random::<f64>() < self.tail_weight;
            let x = match (pick_tail, &self.tail) {
                (true, Some(t)) => t.sample(rng),
                _ => self.body.sample(rng),
            };
            if x <= self.max_ns {
                return x.round() as u64;
            }
        }
        self.max_ns as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantile_inverts_cdf() {
        let m = DelayModel::lognormal(40_000.0, 0.7, 5e6).with_tail(0.02, 150_000.0, 1.5);
        m.validate().unwrap();
        for p in [0.1, 0.5, 0.9, 0.99] {
            assert!((m.cdf(m.quantile(p)) - p).abs() < 1e-9);
        }
        assert_eq!(m.cdf(5e6), 1.0);
        assert_eq!(m.cdf(-1.0), 0.0);
    }

    #[test]
    fn mean_parameterisation() {
        let m = DelayModel::lognormal_with_mean(125_000.0, 0.2, 1e9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = m.sampler().unwrap();
        let n = 200_000;
        let mean = (0..n).map(|_| s.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - 125_000.0).abs() < 500.0, "{mean}");
    }

    #[test]
    fn samples_respect_truncation() {
        let m = DelayModel::lognormal(1_000.0, 2.0, 5_000.0).with_tail(0.5, 1_000.0, 0.5);
        let s = m.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| s.sample(&mut rng) <= 5_000));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DelayModel::lognormal(0.0, 1.0, 1e6).validate().is_err());
        assert!(DelayModel::lognormal(1.0, 1.0, 1e6).with_tail(1.0, 1.0, 1.0).validate().is_err());
        assert!(DelayModel::lognormal(1e9, 0.1, 1e3).validate().is_err());
    }
}
