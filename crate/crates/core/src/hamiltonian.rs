//! Random Hamiltonians driven by a renewal process.
//!
//! Level `l` has energy `ω_l = omega·D_l` where `D_l` is a renewal sequence
//! with i.i.d. positive integer gaps, and eigenvector `u_l`, the direction
//! added at step `l` of the nested subspace process with `n_k = D_k`, `m_k = k`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Zeta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::Frame;
use crate::linalg::CMatrix;
use crate::matryoshka::{
    parse_list, parse_num, ratios, split_params, DimensionSchedule, MatryoshkaState, ScheduleSpec, MAX_AMBIENT,
};
use crate::stream::RandomStream;

/// Law of the gaps `D_k - D_{k-1}` on the positive integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GapDistribution {
    /// `p_1..p_M`.
    Table { probs: Vec<f64> },
    /// `p_n = q (1-q)^{n-1}`, mean `1/q`.
    Geometric { q: f64 },
    /// A single atom.
    Deterministic { gap: u64 },
    /// `p_n ∝ n^{-exponent}`; the mean is infinite for `exponent ≤ 2`.
    Zeta { exponent: f64 },
}

/// Normalization slack for explicit tables.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Riemann zeta for `s > 1`, by direct summation plus an Euler–Maclaurin tail.
fn riemann_zeta(s: f64) -> f64 {
    const N: usize = 1000;
    let head: f64 = (1..N).map(|n| (n as f64).powf(-s)).sum();
    let n = N as f64;
    head + n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
}

impl GapDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            GapDistribution::Table { probs } => {
                if probs.is_empty() {
                    return Err(Error::invalid("gap table is empty"));
                }
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::invalid("gap probabilities must be finite and nonnegative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::invalid(format!("gap probabilities sum to {total}, not 1")));
                }
            }
            GapDistribution::Geometric { q } => {
                if !(*q > 0.0 && *q <= 1.0) {
                    return Err(Error::invalid("geometric parameter must lie in (0, 1]"));
                }
            }
            GapDistribution::Deterministic { gap } => {
                if *gap == 0 {
                    return Err(Error::invalid("deterministic gap must be at least 1"));
                }
            }
            GapDistribution::Zeta { exponent } => {
                if exponent.is_nan() || *exponent <= 1.0 || exponent.is_infinite() {
                    return Err(Error::invalid("zeta exponent must exceed 1"));
                }
            }
        }
        Ok(())
    }

    /// `p_n`.
    pub fn mass(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self {
            GapDistribution::Table { probs } => probs.get(n as usize - 1).copied().unwrap_or(0.0),
            GapDistribution::Geometric { q } => q * (1.0 - q).powi((n - 1) as i32),
            GapDistribution::Deterministic { gap } => {
                if n == *gap {
                    1.0
                } else {
                    0.0
                }
            }
            GapDistribution::Zeta { exponent } => (n as f64).powf(-exponent) / riemann_zeta(*exponent),
        }
    }

    /// `∑ n p_n`, or `None` when it diverges.
    pub fn mean(&self) -> Option<f64> {
        match self {
            GapDistribution::Table { probs } => {
                Some(probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum())
            }
            GapDistribution::Geometric { q } => Some(1.0 / q),
            GapDistribution::Deterministic { gap } => Some(*gap as f64),
            GapDistribution::Zeta { exponent } => {
                (*exponent > 2.0).then(|| riemann_zeta(exponent - 1.0) / riemann_zeta(*exponent))
            }
        }
    }

    /// `∑ n² p_n - mean²`, or `None` when it diverges.
    pub fn variance(&self) -> Option<f64> {
        match self {
            GapDistribution::Table { probs } => {
                let mean = self.mean()?;
                let m2: f64 = probs.iter().enumerate().map(|(i, p)| ((i + 1) as f64).powi(2) * p).sum();
                Some(m2 - mean * mean)
            }
            GapDistribution::Geometric { q } => Some((1.0 - q) / (q * q)),
            GapDistribution::Deterministic { .. } => Some(0.0),
            GapDistribution::Zeta { exponent } => (*exponent > 3.0).then(|| {
                let z = riemann_zeta(*exponent);
                let mean = riemann_zeta(exponent - 1.0) / z;
                riemann_zeta(exponent - 2.0) / z - mean * mean
            }),
        }
    }

    /// One gap by inverse CDF (tables, geometric) or the family's exact sampler.
    pub fn sample(&self, rng: &mut RandomStream) -> u64 {
        match self {
            GapDistribution::Table { probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i as u64 + 1;
                    }
                }
                // Rounding left u above the last partial sum: take the last atom with mass.
                probs.iter().rposition(|&p| p > 0.0).map_or(1, |i| i as u64 + 1)
            }
            GapDistribution::Geometric { q } => {
                if *q >= 1.0 {
                    return 1;
                }
                let u: f64 = rng.random();
                1 + ((1.0 - u).ln() / (1.0 - q).ln()).floor() as u64
            }
            GapDistribution::Deterministic { gap } => *gap,
            GapDistribution::Zeta { exponent } => {
                let z = Zeta::new(*exponent).expect("validated exponent");
                let x: f64 = z.sample(rng);
                if x >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    x as u64
                }
            }
        }
    }

    /// First gap of a stationary renewal process: `P(n) = P(X ≥ n)/E X`,
    /// drawn as a uniform point of a size-biased gap.
    pub fn sample_stationary_delay(&self, rng: &mut RandomStream) -> Result<u64> {
        match self {
            GapDistribution::Table { probs } => {
                let weights: Vec<f64> = probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).collect();
                let total: f64 = weights.iter().sum();
                let u: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut size = weights.iter().rposition(|&w| w > 0.0).map_or(1, |i| i as u64 + 1);
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        size = i as u64 + 1;
                        break;
                    }
                }
                Ok(1 + rng.random_range(0..size))
            }
            // Memoryless: the delay has the gap law itself.
            GapDistribution::Geometric { .. } => Ok(self.sample(rng)),
            GapDistribution::Deterministic { gap } => Ok(1 + rng.random_range(0..*gap)),
            GapDistribution::Zeta { exponent } => {
                if *exponent <= 2.0 {
                    return Err(Error::invalid("stationary delay needs a finite mean gap"));
                }
                let size = GapDistribution::Zeta { exponent: exponent - 1.0 }.sample(rng);
                Ok(1 + rng.random_range(0..size.max(1)))
            }
        }
    }
}

impl fmt::Display for GapDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapDistribution::Table { probs } => {
                let parts: Vec<String> = probs.iter().map(|p| p.to_string()).collect();
                write!(f, "table:p=[{}]", parts.join(","))
            }
            GapDistribution::Geometric { q } => write!(f, "geometric:q={q}"),
            GapDistribution::Deterministic { gap } => write!(f, "deterministic:gap={gap}"),
            GapDistribution::Zeta { exponent } => write!(f, "zeta:s={exponent}"),
        }
    }
}

impl FromStr for GapDistribution {
    type Err = Error;

    /// `table:p=[0.5,0.5]`, `geometric:q=0.5`, `geometric:mean=2`,
    /// `deterministic:gap=3`, `zeta:s=2.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s.split_once(':').unwrap_or((s, ""));
        let params = split_params(body)?;
        let get = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
        let dist = match kind.trim() {
            "table" => GapDistribution::Table {
                probs: parse_list("p", &get("p").ok_or_else(|| Error::invalid("table needs p"))?)?,
            },
            "geometric" => match (get("q"), get("mean")) {
                (Some(q), _) => GapDistribution::Geometric { q: parse_num("q", &q)? },
                (None, Some(m)) => GapDistribution::Geometric { q: 1.0 / parse_num::<f64>("mean", &m)? },
                _ => return Err(Error::invalid("geometric needs q or mean")),
            },
            "deterministic" => GapDistribution::Deterministic {
                gap: parse_num("gap", &get("gap").ok_or_else(|| Error::invalid("deterministic needs gap"))?)?,
            },
            "zeta" => GapDistribution::Zeta {
                exponent: parse_num("s", &get("s").ok_or_else(|| Error::invalid("zeta needs s"))?)?,
            },
            other => return Err(Error::invalid(format!("unknown gap distribution `{other}`"))),
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Whether the nested process is total almost surely along the renewal
/// schedule. Only the sufficient finite-mean condition is implemented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Totality {
    TotalAs,
    Undetermined,
}

pub fn totality_criterion(p: &GapDistribution) -> Totality {
    if p.mean().is_some() {
        Totality::TotalAs
    } else {
        Totality::Undetermined
    }
}

/// `D_1 < D_2 < … < D_K` (with `D_0 = 0` implied).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenewalSequence {
    pub dims: Vec<u64>,
}

impl RenewalSequence {
    pub fn increments(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(0).chain(self.dims.iter().copied()).zip(self.dims.iter()).map(|(a, &b)| b - a)
    }

    pub fn schedule(&self) -> Result<DimensionSchedule> {
        DimensionSchedule::new(ScheduleSpec::Renewal { dims: self.dims.clone() }, self.dims.len())
    }
}

/// Draws `K` renewal epochs. With `stationary_first_gap`, the first gap comes
/// from the stationary delay law instead of the gap law.
pub fn sample_renewal(
    p: &GapDistribution,
    horizon: usize,
    stationary_first_gap: bool,
    stream: &mut RandomStream,
) -> Result<RenewalSequence> {
    p.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut dims = Vec::with_capacity(horizon);
    let mut d: u64 = 0;
    for k in 0..horizon {
        let gap = if k == 0 && stationary_first_gap { p.sample_stationary_delay(stream)? } else { p.sample(stream) };
        d = d.checked_add(gap).ok_or_else(|| Error::invalid("renewal epochs overflow u64"))?;
        dims.push(d);
    }
    Ok(RenewalSequence { dims })
}

/// Energy levels `ω_l = omega·D_l`, kept with their integer epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub omega: f64,
    pub levels: Vec<u64>,
}

impl Spectrum {
    pub fn new(omega: f64, renewal: &RenewalSequence) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::invalid("omega must be positive and finite"));
        }
        Ok(Self { omega, levels: renewal.dims.clone() })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.levels.iter().map(|&d| self.omega * d as f64).collect()
    }

    /// `(ω_l - ω_{l-1})/omega` for `l = 1..=K`, with `ω_0 = 0`.
    pub fn gaps(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(0).chain(self.levels.iter().copied()).zip(self.levels.iter()).map(|(a, &b)| b - a)
    }
}

impl AsRef<Spectrum> for Spectrum {
    fn as_ref(&self) -> &Spectrum {
        self
    }
}

/// `Ĥ = ∑_l ω_l |u_l⟩⟨u_l|` on `C^{D_K}`.
#[derive(Clone, Debug)]
pub struct RandomHamiltonian {
    pub spectrum: Spectrum,
    /// `u_1..u_K` as orthonormal columns of an `D_K × K` frame.
    pub eigenframe: Frame,
    pub schedule: DimensionSchedule,
}

impl AsRef<Spectrum> for RandomHamiltonian {
    fn as_ref(&self) -> &Spectrum {
        &self.spectrum
    }
}

impl RandomHamiltonian {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum.eigenvalues()
    }
}

pub fn build_hamiltonian(
    p: &GapDistribution,
    omega: f64,
    horizon: usize,
    stationary_first_gap: bool,
    stream: &mut RandomStream,
) -> Result<RandomHamiltonian> {
    let renewal = sample_renewal(p, horizon, stationary_first_gap, stream)?;
    hamiltonian_from_renewal(&renewal, omega, stream)
}

/// Runs the nested process on `n_k = D_k`, `m_k = k` and collects the
/// direction added at each step.
pub fn hamiltonian_from_renewal(
    renewal: &RenewalSequence,
    omega: f64,
    stream: &mut RandomStream,
) -> Result<RandomHamiltonian> {
    let spectrum = Spectrum::new(omega, renewal)?;
    let schedule = renewal.schedule()?;
    if schedule.ambient_dim() > MAX_AMBIENT {
        return Err(Error::invalid(format!("D_K = {} exceeds {MAX_AMBIENT}", schedule.ambient_dim())));
    }
    let mut state = crate::matryoshka::init(&schedule)?;
    for _ in 0..schedule.horizon() {
        state.advance(&schedule, stream)?;
    }
    Ok(RandomHamiltonian { spectrum, eigenframe: basis_of(&state), schedule })
}

fn basis_of(state: &MatryoshkaState) -> Frame {
    state.basis_frame()
}

/// `⟨u_j, A u_k⟩` for the operator `A = diag(diag)` of the reference basis.
pub fn matrix_elements(h: &RandomHamiltonian, diag: &[f64]) -> Result<CMatrix> {
    let u = h.eigenframe.columns();
    if diag.len() != u.nrows() {
        return Err(Error::invalid(format!(
            "operator diagonal has length {}, expected {}",
            diag.len(),
            u.nrows()
        )));
    }
    let mut au = u.clone();
    for (i, &a) in diag.iter().enumerate() {
        let s = Complex64::new(a, 0.0);
        for x in au.row_mut(i).iter_mut() {
            *x *= s;
        }
    }
    Ok(u.ad_mul(&au))
}

/// One row of an empirical gap law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub gap: u64,
    pub count: u64,
    pub frequency: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
    pub total: u64,
    pub mean: f64,
    /// Standard error of the mean gap.
    pub mean_stderr: Option<f64>,
}

impl GapTable {
    pub fn frequency(&self, gap: u64) -> f64 {
        self.rows.iter().find(|r| r.gap == gap).map_or(0.0, |r| r.frequency)
    }
}

/// Empirical frequencies of `(ω_l - ω_{l-1})/omega` over all levels of all
/// ensemble members.
pub fn gap_statistics<S: AsRef<Spectrum>>(ensemble: &[S]) -> Result<GapTable> {
    if ensemble.is_empty() {
        return Err(Error::invalid("ensemble is empty"));
    }
    let mut counts = std::collections::BTreeMap::<u64, u64>::new();
    let mut moments = crate::stats::OnlineMoments::new();
    for s in ensemble {
        for g in s.as_ref().gaps() {
            *counts.entry(g).or_default() += 1;
            moments.push(g as f64);
        }
    }
    let total = moments.count();
    let rows = counts
        .into_iter()
        .map(|(gap, count)| {
            let f = count as f64 / total as f64;
            GapRow { gap, count, frequency: f, stderr: (f * (1.0 - f) / total as f64).sqrt() }
        })
        .collect();
    Ok(GapTable { rows, total, mean: moments.mean(), mean_stderr: moments.standard_error() })
}

/// Window-averaged level counts over the common bulk of an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile {
    pub width: f64,
    pub bulk_start: f64,
    pub bulk_end: f64,
    /// Mean level count (across members) in each consecutive window.
    pub window_means: Vec<f64>,
    pub bulk_mean: f64,
    /// `max_j |window_mean_j - bulk_mean| / bulk_mean`; NaN without windows.
    pub flatness: f64,
}

/// Fraction of the spectrum trimmed at each end.
pub const EDGE_FRACTION: f64 = 0.1;

/// Level counts in windows of `width` across `[0.1 E, 0.9 E]`, where `E` is
/// the smallest top eigenvalue in the ensemble.
pub fn density_profile<S: AsRef<Spectrum>>(ensemble: &[S], width: f64) -> Result<DensityProfile> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::invalid("window width must be positive"));
    }
    if ensemble.is_empty() {
        return Err(Error::invalid("ensemble is empty"));
    }
    let top = ensemble
        .iter()
        .map(|s| s.as_ref().eigenvalues().last().copied().unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    let bulk_start = EDGE_FRACTION * top;
    let bulk_end = (1.0 - EDGE_FRACTION) * top;
    let windows = ((bulk_end - bulk_start) / width).floor().max(0.0) as usize;
    let mut sums = vec![0.0; windows];
    for s in ensemble {
        for e in s.as_ref().eigenvalues() {
            if e < bulk_start {
                continue;
            }
            let j = ((e - bulk_start) / width).floor() as usize;
            if j < windows {
                sums[j] += 1.0;
            }
        }
    }
    let members = ensemble.len() as f64;
    let window_means: Vec<f64> = sums.iter().map(|c| c / members).collect();
    let (bulk_mean, flatness) = if windows == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let mean = window_means.iter().sum::<f64>() / windows as f64;
        let dev = window_means.iter().map(|w| (w - mean).abs()).fold(0.0, f64::max);
        (mean, dev / mean)
    };
    Ok(DensityProfile { width, bulk_start, bulk_end, window_means, bulk_mean, flatness })
}

/// `∑_{k≤K} r_k` for the schedule `n_k = D_k`, `m_k = k`.
pub fn ratio_sum(renewal: &RenewalSequence) -> Result<f64> {
    Ok(ratios(&renewal.schedule()?).total())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn deterministic_renewals() {
        let mut rng = RandomStream::new(1, 0);
        let unit = sample_renewal(&GapDistribution::Deterministic { gap: 1 }, 5, false, &mut rng).unwrap();
        assert_eq!(unit.dims, vec![1, 2, 3, 4, 5]);
        let three = sample_renewal(&GapDistribution::Deterministic { gap: 3 }, 4, false, &mut rng).unwrap();
        assert_eq!(three.dims, vec![3, 6, 9, 12]);
        assert_eq!(three.increments().collect::<Vec<_>>(), vec![3, 3, 3, 3]);
    }

    #[test]
    fn malformed_distributions_are_rejected() {
        let mut rng = RandomStream::new(1, 0);
        for bad in [
            GapDistribution::Table { probs: vec![] },
            GapDistribution::Table { probs: vec![0.5, 0.4] },
            GapDistribution::Table { probs: vec![1.5, -0.5] },
            GapDistribution::Geometric { q: 0.0 },
            GapDistribution::Geometric { q: 1.5 },
            GapDistribution::Deterministic { gap: 0 },
            GapDistribution::Zeta { exponent: 1.0 },
        ] {
            assert!(sample_renewal(&bad, 3, false, &mut rng).is_err(), "{bad:?}");
        }
        assert!(sample_renewal(&GapDistribution::Deterministic { gap: 1 }, 0, false, &mut rng).is_err());
    }

    #[test]
    fn geometric_mean_gap() {
        let mut rng = RandomStream::new(2, 0);
        let p = GapDistribution::Geometric { q: 0.5 };
        let r = sample_renewal(&p, 5000, false, &mut rng).unwrap();
        let k = 5000.0;
        let se = (p.variance().unwrap() / k).sqrt();
        let mean = *r.dims.last().unwrap() as f64 / k;
        assert!(((mean - 2.0) / se).abs() < 4.0, "{mean}");
    }

    #[test]
    fn table_sampling_matches_masses() {
        let mut rng = RandomStream::new(3, 0);
        let p = GapDistribution::Table { probs: vec![0.2, 0.0, 0.5, 0.3] };
        let n = 50_000;
        let mut c = [0u32; 5];
        for _ in 0..n {
            c[p.sample(&mut rng) as usize] += 1;
        }
        assert_eq!(c[0] + c[2], 0);
        for g in [1, 3, 4] {
            let pg = p.mass(g);
            let se = (pg * (1.0 - pg) / n as f64).sqrt();
            assert!((c[g as usize] as f64 / n as f64 - pg).abs() < 4.0 * se);
        }
    }

    #[test]
    fn zeta_moments() {
        // ζ(2) = π²/6, ζ(4) = π⁴/90.
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((riemann_zeta(2.0) - pi2 / 6.0).abs() < 1e-9);
        assert!((riemann_zeta(4.0) - pi2 * pi2 / 90.0).abs() < 1e-12);
        let z = GapDistribution::Zeta { exponent: 4.0 };
        assert!((z.mass(1) - 90.0 / (pi2 * pi2)).abs() < 1e-12);
        assert!((z.mean().unwrap() - riemann_zeta(3.0) * 90.0 / (pi2 * pi2)).abs() < 1e-9);
        assert_eq!(GapDistribution::Zeta { exponent: 2.0 }.mean(), None);
    }

    #[test]
    fn totality() {
        assert_eq!(totality_criterion(&GapDistribution::Geometric { q: 0.3 }), Totality::TotalAs);
        assert_eq!(totality_criterion(&GapDistribution::Table { probs: vec![0.5, 0.5] }), Totality::TotalAs);
        assert_eq!(totality_criterion(&GapDistribution::Zeta { exponent: 1.8 }), Totality::Undetermined);
        assert_eq!(totality_criterion(&GapDistribution::Zeta { exponent: 2.5 }), Totality::TotalAs);
    }

    #[test]
    fn stationary_delay_makes_early_levels_flat() {
        // Deterministic gap 3 with a stationary delay: each of 1, 2, 3 is a level w.p. 1/3.
        let p = GapDistribution::Deterministic { gap: 3 };
        let mut rng = RandomStream::new(4, 0);
        let n = 30_000;
        let mut hits = [0u32; 4];
        for _ in 0..n {
            let r = sample_renewal(&p, 2, true, &mut rng).unwrap();
            for &d in &r.dims {
                if d <= 3 {
                    hits[d as usize] += 1;
                }
            }
        }
        let se = ((1.0 / 3.0) * (2.0 / 3.0) / n as f64).sqrt();
        for &h in &hits[1..] {
            assert!((h as f64 / n as f64 - 1.0 / 3.0).abs() < 4.0 * se);
        }
    }

    #[test]
    fn stationary_delay_table_law() {
        // Gaps {1: 0.5, 3: 0.5}, mean 2: P(delay = n) = P(X ≥ n)/2 = 1/2, 1/4, 1/4.
        let p = GapDistribution::Table { probs: vec![0.5, 0.0, 0.5] };
        let mut rng = RandomStream::new(5, 0);
        let n = 40_000;
        let mut c = [0u32; 4];
        for _ in 0..n {
            c[p.sample_stationary_delay(&mut rng).unwrap() as usize] += 1;
        }
        for (g, want) in [(1, 0.5), (2, 0.25), (3, 0.25)] {
            let se = (want * (1.0 - want) / n as f64).sqrt();
            assert!((c[g] as f64 / n as f64 - want).abs() < 4.0 * se);
        }
        assert!(GapDistribution::Zeta { exponent: 2.0 }.sample_stationary_delay(&mut rng).is_err());
    }

    #[test]
    fn unit_gaps_give_the_diagonal_model() {
        let mut rng = RandomStream::new(6, 0);
        let h = build_hamiltonian(&GapDistribution::Deterministic { gap: 1 }, 0.5, 6, false, &mut rng).unwrap();
        assert_eq!(h.eigenvalues(), vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        let u = h.eigenframe.columns();
        for j in 0..6 {
            for i in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((u[(i, j)].norm() - expect).abs() <= 1e-12);
            }
        }
        let diag = [0.3, -1.0, 2.0, 0.0, 5.5, 1.25];
        let a = matrix_elements(&h, &diag).unwrap();
        for j in 0..6 {
            for k in 0..6 {
                let expect = if j == k { diag[j] } else { 0.0 };
                assert!((a[(j, k)] - Complex64::new(expect, 0.0)).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn matrix_elements_identities() {
        let mut rng = RandomStream::new(7, 0);
        let p = GapDistribution::Geometric { q: 0.4 };
        for _ in 0..20 {
            let h = build_hamiltonian(&p, 1.0, 12, false, &mut rng).unwrap();
            assert!(h.eigenframe.gram_deviation() <= 1e-10);
            let ev = h.eigenvalues();
            assert!(ev.windows(2).all(|w| w[0] < w[1]));
            let n = h.eigenframe.ambient_dim();
            let id = matrix_elements(&h, &vec![1.0; n]).unwrap();
            assert!(max_abs(&(id - CMatrix::identity(12, 12))) < 1e-10);
            let mut e1 = vec![0.0; n];
            e1[0] = 1.0;
            let a = matrix_elements(&h, &e1).unwrap();
            assert!(max_abs(&(&a - a.adjoint())) < 1e-10);
            let trace: f64 = (0..12).map(|j| a[(j, j)].re).sum();
            let proj: f64 = (0..12).map(|j| h.eigenframe.columns()[(0, j)].norm_sqr()).sum();
            assert!((trace - proj).abs() < 1e-8);
        }
        let h = build_hamiltonian(&p, 1.0, 3, false, &mut rng).unwrap();
        assert!(matrix_elements(&h, &[1.0]).is_err());
    }

    #[test]
    fn doubled_gaps_follow_the_harmonic_product() {
        // D_k = 2k: ‖W_k(e_1)‖² has mean 1/(k+1).
        let p = GapDistribution::Deterministic { gap: 2 };
        let base = RandomStream::new(8, 0);
        let k = 6;
        let e1 = crate::grassmann::ComplexVector::basis(2 * k, 0).unwrap();
        let xs: crate::stats::OnlineMoments = (0..20_000u64)
            .map(|t| {
                let mut s = base.child(t);
                let h = build_hamiltonian(&p, 1.0, k, false, &mut s).unwrap();
                crate::grassmann::residual(&e1, &h.eigenframe).unwrap().norm_sqr()
            })
            .collect();
        let want = 1.0 / (k as f64 + 1.0);
        assert!(((xs.mean() - want) / xs.standard_error().unwrap()).abs() < 4.0);
    }

    #[test]
    fn gap_tables() {
        let mut rng = RandomStream::new(9, 0);
        let det = GapDistribution::Deterministic { gap: 4 };
        let ens: Vec<Spectrum> = (0..5)
            .map(|_| Spectrum::new(1.0, &sample_renewal(&det, 10, false, &mut rng).unwrap()).unwrap())
            .collect();
        let t = gap_statistics(&ens).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!((t.rows[0].gap, t.rows[0].frequency), (4, 1.0));
        assert!(gap_statistics::<Spectrum>(&[]).is_err());

        let mix = GapDistribution::Table { probs: vec![0.5, 0.5] };
        let ens: Vec<Spectrum> = (0..100)
            .map(|_| Spectrum::new(2.0, &sample_renewal(&mix, 200, false, &mut rng).unwrap()).unwrap())
            .collect();
        let t = gap_statistics(&ens).unwrap();
        assert_eq!(t.total, 20_000);
        for r in &t.rows {
            assert!((r.frequency - 0.5).abs() < 4.0 * r.stderr);
        }
    }

    #[test]
    fn geometric_gap_table() {
        let mut rng = RandomStream::new(10, 0);
        let p = GapDistribution::Geometric { q: 0.5 };
        let ens: Vec<Spectrum> = (0..100)
            .map(|_| Spectrum::new(1.0, &sample_renewal(&p, 200, false, &mut rng).unwrap()).unwrap())
            .collect();
        let t = gap_statistics(&ens).unwrap();
        for r in t.rows.iter().filter(|r| p.mass(r.gap) * t.total as f64 >= 10.0) {
            let pg = p.mass(r.gap);
            let se = (pg * (1.0 - pg) / t.total as f64).sqrt();
            assert!((r.frequency - pg).abs() < 4.0 * se, "gap {}", r.gap);
        }
    }

    #[test]
    fn deterministic_density_is_exact() {
        let mut rng = RandomStream::new(11, 0);
        let det = GapDistribution::Deterministic { gap: 4 };
        let ens: Vec<Spectrum> =
            (0..3).map(|_| Spectrum::new(0.5, &sample_renewal(&det, 500, false, &mut rng).unwrap()).unwrap()).collect();
        // Levels every 2.0 energy units; windows of 20 hold 10 levels.
        let prof = density_profile(&ens, 20.0).unwrap();
        assert!(!prof.window_means.is_empty());
        assert!(prof.window_means.iter().all(|&w| w == 10.0));
        assert_eq!(prof.flatness, 0.0);
        assert!(density_profile(&ens, 0.0).is_err());
    }

    #[test]
    fn finite_mean_schedules_accumulate_ratios() {
        // ∑ r_k ≳ ln K / mean for finite-mean gaps; check the stated bound across seeds.
        let p = GapDistribution::Geometric { q: 0.5 };
        let k = 2000;
        let bound = (k as f64).ln() / (2.0 * 2.0);
        let base = RandomStream::new(12, 0);
        let passing = (0..100u64)
            .filter(|&t| {
                let r = sample_renewal(&p, k, false, &mut base.child(t)).unwrap();
                ratio_sum(&r).unwrap() > bound
            })
            .count();
        assert!(passing >= 95);
    }

    #[test]
    fn spec_strings() {
        for d in [
            GapDistribution::Table { probs: vec![0.25, 0.75] },
            GapDistribution::Geometric { q: 0.5 },
            GapDistribution::Deterministic { gap: 3 },
            GapDistribution::Zeta { exponent: 2.5 },
        ] {
            assert_eq!(d.to_string().parse::<GapDistribution>().unwrap(), d);
        }
        assert_eq!("geometric:mean=4".parse::<GapDistribution>().unwrap(), GapDistribution::Geometric { q: 0.25 });
        assert!("table:p=[0.3]".parse::<GapDistribution>().is_err());
    }
}
