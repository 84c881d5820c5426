//! Streaming moment accumulators and z-score helpers.

use serde::{Deserialize, Serialize};

/// Welford/Pébay accumulator for the first four central moments.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OnlineMoments {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl OnlineMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    /// Combines two disjoint samples.
    pub fn merge(&mut self, other: &OnlineMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3 + other.m3 + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        *self = Self { count: self.count + other.count, mean, m2, m3, m4 };
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count as f64 - 1.0))
    }

    /// Standard error of the mean; `None` below two samples.
    pub fn standard_error(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.count as f64).sqrt())
    }

    /// Large-sample standard error of the sample variance, `√((μ₄ − σ⁴)/n)`.
    pub fn variance_standard_error(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mu2 = self.m2 / n;
        let mu4 = self.m4 / n;
        Some(((mu4 - mu2 * mu2).max(0.0) / n).sqrt())
    }
}

impl FromIterator<f64> for OnlineMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = OnlineMoments::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: Option<f64>,
    pub trials: u64,
}

impl From<&OnlineMoments> for Estimate {
    fn from(m: &OnlineMoments) -> Self {
        Estimate { mean: m.mean(), stderr: m.standard_error(), trials: m.count() }
    }
}

/// Exact-match slack used when a standard error is zero.
pub const EXACT_SLACK: f64 = 1e-12;

/// `(observed − predicted)/stderr`. A zero standard error yields 0 on an exact
/// match and ±∞ otherwise; an undefined one yields `None`.
pub fn z_score(observed: f64, predicted: f64, stderr: Option<f64>) -> Option<f64> {
    let se = stderr?;
    let diff = observed - predicted;
    if se > 0.0 {
        Some(diff / se)
    } else if diff.abs() <= EXACT_SLACK {
        Some(0.0)
    } else {
        Some(f64::INFINITY.copysign(diff))
    }
}
