//! Dimension schedules `(n_k, m_k)` and the ratio sequence `r_k` they induce.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> u64 {
    1
}

/// Declarative description of a schedule. Closed-form families take the
/// horizon from the caller; explicit arrays carry their own length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `m_k = m_step·k`, `n_k = n_step·k + n_offset` for `k ≥ 1`.
    Affine {
        #[serde(default = "one")]
        m_step: u64,
        n_step: u64,
        #[serde(default)]
        n_offset: u64,
    },
    /// `m_k = m_step·k`, `n_k = base^k`.
    Geometric {
        base: u64,
        #[serde(default = "one")]
        m_step: u64,
    },
    /// `m_k = m_step·k`, `n_k = coef·k^degree`.
    Polynomial {
        degree: u32,
        #[serde(default = "one")]
        coef: u64,
        #[serde(default = "one")]
        m_step: u64,
    },
    /// `n_1..n_K` and `m_1..m_K` given verbatim.
    Explicit { n: Vec<u64>, m: Vec<u64> },
    /// `n_k = dims[k-1]` (a renewal sequence `D_k`), `m_k = k`.
    Renewal { dims: Vec<u64> },
}

impl ScheduleSpec {
    /// `m_k = k`, `n_k = 2k`: the coin-spending schedule.
    pub fn doubling() -> Self {
        ScheduleSpec::Affine { m_step: 1, n_step: 2, n_offset: 0 }
    }

    /// `m_k = k`, `n_k = 2^k`.
    pub fn powers_of_two() -> Self {
        ScheduleSpec::Geometric { base: 2, m_step: 1 }
    }

    fn intrinsic_len(&self) -> Option<usize> {
        match self {
            ScheduleSpec::Explicit { n, .. } => Some(n.len()),
            ScheduleSpec::Renewal { dims } => Some(dims.len()),
            _ => None,
        }
    }
}

fn fmt_list(xs: &[u64]) -> String {
    let parts: Vec<String> = xs.iter().map(u64::to_string).collect();
    format!("[{}]", parts.join(","))
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Affine { m_step, n_step, n_offset } => {
                write!(f, "affine:m={m_step},n={n_step},offset={n_offset}")
            }
            ScheduleSpec::Geometric { base, m_step } => write!(f, "geometric:base={base},m={m_step}"),
            ScheduleSpec::Polynomial { degree, coef, m_step } => {
                write!(f, "polynomial:degree={degree},coef={coef},m={m_step}")
            }
            ScheduleSpec::Explicit { n, m } => write!(f, "explicit:n={},m={}", fmt_list(n), fmt_list(m)),
            ScheduleSpec::Renewal { dims } => write!(f, "renewal:dims={}", fmt_list(dims)),
        }
    }
}

/// Splits `a=1,b=[1,2],c=3` at commas outside brackets.
pub(crate) fn split_params(body: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let bytes: Vec<char> = body.chars().collect();
    let mut pieces = Vec::new();
    for (i, &c) in bytes.iter().enumerate() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                pieces.push(bytes[start..i].iter().collect::<String>());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::invalid(format!("unbalanced brackets in `{body}`")));
    }
    pieces.push(bytes[start..].iter().collect::<String>());
    for piece in pieces {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let (k, v) = piece
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=value, got `{piece}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("cannot parse `{v}` for `{key}`")))
}

pub(crate) fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let inner = v
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::invalid(format!("`{key}` expects a bracketed list")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    /// Parses `kind:key=value,...`, e.g. `affine:m=1,n=2`, `geometric:base=2`,
    /// `explicit:n=[2,4],m=[1,2]`, `renewal:dims=[1,3,4]`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s.split_once(':').unwrap_or((s, ""));
        let params = split_params(body)?;
        let get = |key: &str| -> Option<String> {
            params.iter().position(|(k, _)| k == key).map(|i| params[i].1.clone())
        };
        let spec = match kind.trim() {
            "affine" => ScheduleSpec::Affine {
                m_step: get("m").map(|v| parse_num("m", &v)).transpose()?.unwrap_or(1),
                n_step: parse_num("n", &get("n").ok_or_else(|| Error::invalid("affine needs n"))?)?,
                n_offset: get("offset").map(|v| parse_num("offset", &v)).transpose()?.unwrap_or(0),
            },
            "geometric" => ScheduleSpec::Geometric {
                base: parse_num("base", &get("base").ok_or_else(|| Error::invalid("geometric needs base"))?)?,
                m_step: get("m").map(|v| parse_num("m", &v)).transpose()?.unwrap_or(1),
            },
            "polynomial" => ScheduleSpec::Polynomial {
                degree: parse_num(
                    "degree",
                    &get("degree").ok_or_else(|| Error::invalid("polynomial needs degree"))?,
                )?,
                coef: get("coef").map(|v| parse_num("coef", &v)).transpose()?.unwrap_or(1),
                m_step: get("m").map(|v| parse_num("m", &v)).transpose()?.unwrap_or(1),
            },
            "explicit" => ScheduleSpec::Explicit {
                n: parse_list("n", &get("n").ok_or_else(|| Error::invalid("explicit needs n"))?)?,
                m: parse_list("m", &get("m").ok_or_else(|| Error::invalid("explicit needs m"))?)?,
            },
            "renewal" => ScheduleSpec::Renewal {
                dims: parse_list("dims", &get("dims").ok_or_else(|| Error::invalid("renewal needs dims"))?)?,
            },
            other => return Err(Error::invalid(format!("unknown schedule kind `{other}`"))),
        };
        Ok(spec)
    }
}

/// Validated schedule truncated at horizon `K`: `n[k]`, `m[k]` for `k = 0..=K`
/// with `n[0] = m[0] = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimensionSchedule {
    spec: ScheduleSpec,
    n: Vec<u64>,
    m: Vec<u64>,
}

impl DimensionSchedule {
    /// Materializes `spec` up to `horizon`. Explicit and renewal specs are
    /// truncated to `horizon`, which may not exceed their length.
    pub fn new(spec: ScheduleSpec, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if let Some(len) = spec.intrinsic_len() {
            if horizon > len {
                return Err(Error::invalid(format!("horizon {horizon} exceeds the {len} given steps")));
            }
        }
        let overflow = || Error::invalid("schedule dimensions overflow u64");
        let mut n = vec![0u64; horizon + 1];
        let mut m = vec![0u64; horizon + 1];
        for k in 1..=horizon {
            let kk = k as u64;
            let (nk, mk) = match &spec {
                ScheduleSpec::Affine { m_step, n_step, n_offset } => {
                    if *m_step == 0 {
                        return Err(Error::invalid("affine m step must be at least 1"));
                    }
                    let nk = n_step.checked_mul(kk).and_then(|x| x.checked_add(*n_offset)).ok_or_else(overflow)?;
                    (nk, m_step * kk)
                }
                ScheduleSpec::Geometric { base, m_step } => {
                    if *base < 2 || *m_step == 0 {
                        return Err(Error::invalid("geometric schedule needs base ≥ 2 and m step ≥ 1"));
                    }
                    (base.checked_pow(k as u32).ok_or_else(overflow)?, m_step * kk)
                }
                ScheduleSpec::Polynomial { degree, coef, m_step } => {
                    if *degree == 0 || *coef == 0 || *m_step == 0 {
                        return Err(Error::invalid("polynomial schedule needs degree, coef and m step ≥ 1"));
                    }
                    let nk = kk.checked_pow(*degree).and_then(|x| x.checked_mul(*coef)).ok_or_else(overflow)?;
                    (nk, m_step * kk)
                }
                ScheduleSpec::Explicit { n, m } => {
                    if n.len() != m.len() {
                        return Err(Error::invalid("explicit n and m differ in length"));
                    }
                    (n[k - 1], m[k - 1])
                }
                ScheduleSpec::Renewal { dims } => (dims[k - 1], kk),
            };
            n[k] = nk;
            m[k] = mk;
        }
        for k in 1..=horizon {
            if n[k] < n[k - 1] || m[k] < m[k - 1] {
                return Err(Error::invalid(format!("schedule decreases at step {k}")));
            }
            if m[k] > n[k] {
                return Err(Error::invalid(format!("m_{k} = {} exceeds n_{k} = {}", m[k], n[k])));
            }
        }
        if let ScheduleSpec::Renewal { .. } = spec {
            if (1..=horizon).any(|k| n[k] == n[k - 1]) {
                return Err(Error::invalid("renewal dimensions must be strictly increasing"));
            }
        }
        if n[horizon] == 0 {
            return Err(Error::invalid("n_K must be at least 1"));
        }
        Ok(Self { spec, n, m })
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.n.len() - 1
    }

    /// `n_k` for `k = 0..=K`.
    pub fn n(&self, k: usize) -> u64 {
        self.n[k]
    }

    /// `m_k` for `k = 0..=K`.
    pub fn m(&self, k: usize) -> u64 {
        self.m[k]
    }

    /// `(δm)_k = m_{k+1} - m_k` for `k = 0..K`.
    pub fn delta_m(&self, k: usize) -> u64 {
        self.m[k + 1] - self.m[k]
    }

    /// Dimension of the truncated ambient space, `n_K`.
    pub fn ambient_dim(&self) -> u64 {
        self.n[self.horizon()]
    }

    /// Shell of the 1-based coordinate `coord`: the smallest `i ≥ 1` with
    /// `n_{i-1} < coord ≤ n_i`.
    pub fn shell_of(&self, coord: u64) -> Option<usize> {
        if coord == 0 {
            return None;
        }
        (1..=self.horizon()).find(|&i| self.n[i - 1] < coord && coord <= self.n[i])
    }

    /// `1 - r_k`, computed as `(n_k - m_k)/(n_k - m_{k-1})` to avoid cancellation.
    pub fn keep_fraction(&self, k: usize) -> f64 {
        let den = self.n[k] - self.m[k - 1];
        if den == 0 {
            0.0
        } else {
            (self.n[k] - self.m[k]) as f64 / den as f64
        }
    }

    /// `r_k` for `1 ≤ k ≤ K`.
    pub fn ratio(&self, k: usize) -> f64 {
        let den = self.n[k] - self.m[k - 1];
        if den == 0 {
            1.0
        } else {
            (self.m[k] - self.m[k - 1]) as f64 / den as f64
        }
    }
}

/// `r_1..r_K` with running partial sums.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioSequence {
    pub values: Vec<f64>,
    pub partial_sums: Vec<f64>,
}

impl RatioSequence {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

pub fn ratios(schedule: &DimensionSchedule) -> RatioSequence {
    let values: Vec<f64> = (1..=schedule.horizon()).map(|k| schedule.ratio(k)).collect();
    let partial_sums = values
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    RatioSequence { values, partial_sums }
}

/// Verdict on the series `∑ r_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum SeriesClass {
    Divergent,
    Convergent,
    /// Finite data only; carries `∑_{k≤K} r_k`.
    Undetermined { partial_sum: f64 },
}

impl fmt::Display for SeriesClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesClass::Divergent => f.write_str("divergent"),
            SeriesClass::Convergent => f.write_str("convergent"),
            SeriesClass::Undetermined { partial_sum } => write!(f, "undetermined (partial sum {partial_sum})"),
        }
    }
}

/// Asymptotic classification for the closed-form families; explicit and
/// renewal data are never extrapolated.
pub fn classify_series(schedule: &DimensionSchedule) -> SeriesClass {
    match schedule.spec() {
        // r_k ≥ c/((a - c)k + b + c): harmonic comparison.
        ScheduleSpec::Affine { .. } => SeriesClass::Divergent,
        // r_k ~ c·base^{-k}: geometric comparison.
        ScheduleSpec::Geometric { .. } => SeriesClass::Convergent,
        ScheduleSpec::Polynomial { degree: 1, .. } => SeriesClass::Divergent,
        // r_k ~ (m/coef)·k^{1-degree}, summable for degree ≥ 2.
        ScheduleSpec::Polynomial { .. } => SeriesClass::Convergent,
        ScheduleSpec::Explicit { .. } | ScheduleSpec::Renewal { .. } => SeriesClass::Undetermined {
            partial_sum: ratios(schedule).total(),
        },
    }
}

/// `∏_{j=i}^{k} (1 - r_j)`: the exact mean of `‖W_k(v)‖²` for a unit `v` in
/// the orthogonal complement of `F_{i-1}` in `F_i`.
pub fn expected_residual(schedule: &DimensionSchedule, shell: usize, k: usize) -> Result<f64> {
    if shell == 0 || shell > k || k > schedule.horizon() {
        return Err(Error::invalid(format!(
            "need 1 ≤ i ≤ k ≤ K, got i = {shell}, k = {k}, K = {}",
            schedule.horizon()
        )));
    }
    Ok((shell..=k).map(|j| schedule.keep_fraction(j)).product())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling(k: usize) -> DimensionSchedule {
        DimensionSchedule::new(ScheduleSpec::doubling(), k).unwrap()
    }

    #[test]
    fn doubling_ratios_are_harmonic() {
        let r = ratios(&doubling(3));
        let expect = [0.5, 1.0 / 3.0, 0.25];
        for (a, b) in r.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((r.total() - (0.5 + 1.0 / 3.0 + 0.25)).abs() < 1e-15);
        assert!(r.partial_sums.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn full_fill_gives_unit_ratios() {
        let s = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![1, 3, 4], m: vec![1, 3, 4] }, 3).unwrap();
        assert_eq!(ratios(&s).values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn exhausted_trial_space_gives_unit_ratio() {
        // n_2 = m_1 = 2: nothing left to choose from at step 2.
        let s = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![2, 2, 4], m: vec![2, 2, 3] }, 3).unwrap();
        assert_eq!(s.ratio(2), 1.0);
        assert_eq!(s.keep_fraction(2), 0.0);
    }

    #[test]
    fn classification() {
        assert_eq!(classify_series(&doubling(5)), SeriesClass::Divergent);
        let g = DimensionSchedule::new(ScheduleSpec::powers_of_two(), 5).unwrap();
        assert_eq!(classify_series(&g), SeriesClass::Convergent);
        let p = DimensionSchedule::new(ScheduleSpec::Polynomial { degree: 2, coef: 1, m_step: 1 }, 5).unwrap();
        assert_eq!(classify_series(&p), SeriesClass::Convergent);
        let n: Vec<u64> = (1..=10).map(|k| 3 * k).collect();
        let m: Vec<u64> = (1..=10).collect();
        let e = DimensionSchedule::new(ScheduleSpec::Explicit { n, m }, 10).unwrap();
        let expect: f64 = (1..=10).map(|k| 1.0 / (3.0 * k as f64 - (k as f64 - 1.0))).sum();
        match classify_series(&e) {
            SeriesClass::Undetermined { partial_sum } => assert!((partial_sum - expect).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_factor_products() {
        let s = doubling(4);
        assert_eq!(expected_residual(&s, 1, 1).unwrap(), 0.5);
        assert!(expected_residual(&s, 0, 1).is_err());
        assert!(expected_residual(&s, 3, 2).is_err());
        assert!(expected_residual(&s, 1, 5).is_err());
    }

    #[test]
    fn validation() {
        assert!(DimensionSchedule::new(ScheduleSpec::doubling(), 0).is_err());
        // m_1 > n_1.
        assert!(DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![1], m: vec![2] }, 1).is_err());
        // Decreasing n.
        assert!(DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![3, 2], m: vec![1, 1] }, 2).is_err());
        // n_K = 0.
        assert!(DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![0], m: vec![0] }, 1).is_err());
        assert!(DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![1], m: vec![1] }, 2).is_err());
        assert!(DimensionSchedule::new(ScheduleSpec::Geometric { base: 2, m_step: 1 }, 70).is_err());
        assert!(DimensionSchedule::new(ScheduleSpec::Renewal { dims: vec![1, 1] }, 2).is_err());
        assert!(DimensionSchedule::new(ScheduleSpec::Renewal { dims: vec![2, 3, 7] }, 2).is_ok());
    }

    #[test]
    fn shells() {
        let s = doubling(3);
        assert_eq!(s.shell_of(1), Some(1));
        assert_eq!(s.shell_of(2), Some(1));
        assert_eq!(s.shell_of(3), Some(2));
        assert_eq!(s.shell_of(6), Some(3));
        assert_eq!(s.shell_of(7), None);
        assert_eq!(s.shell_of(0), None);
    }

    #[test]
    fn spec_strings_round_trip() {
        for spec in [
            ScheduleSpec::doubling(),
            ScheduleSpec::powers_of_two(),
            ScheduleSpec::Polynomial { degree: 3, coef: 2, m_step: 1 },
            ScheduleSpec::Explicit { n: vec![2, 4], m: vec![1, 2] },
            ScheduleSpec::Renewal { dims: vec![1, 3, 4] },
        ] {
            let text = spec.to_string();
            assert_eq!(text.parse::<ScheduleSpec>().unwrap(), spec, "{text}");
        }
        assert_eq!("affine:n=2".parse::<ScheduleSpec>().unwrap(), ScheduleSpec::doubling());
        assert!("spiral:n=2".parse::<ScheduleSpec>().is_err());
        assert!("explicit:n=[1,2".parse::<ScheduleSpec>().is_err());
    }
}
