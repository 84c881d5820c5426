//! Coin-spending protocols: the classical counterpart of the nested subspace
//! process.
//!
//! By the end of month `k` a spender has earned coins `1..=n_k` and spent
//! `m_k` of them; `S_k` is the spent set.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matryoshka::DimensionSchedule;
use crate::stats::OnlineMoments;
use crate::stream::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Spends from the bottom of the pile: `S_k = {1..m_k}`.
    Jack,
    /// Spends from the top of the pile.
    Julie,
    /// Spends uniformly at random among unspent coins.
    John,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Jack => "jack",
            Protocol::Julie => "julie",
            Protocol::John => "john",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jack" => Ok(Protocol::Jack),
            "julie" => Ok(Protocol::Julie),
            "john" => Ok(Protocol::John),
            other => Err(Error::invalid(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Spent sets `S_0 ⊂ S_1 ⊂ … ⊂ S_K`, each sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoinSetSequence {
    sets: Vec<Vec<u64>>,
    earned: Vec<u64>,
}

impl CoinSetSequence {
    pub fn horizon(&self) -> usize {
        self.sets.len() - 1
    }

    /// `S_k`.
    pub fn spent(&self, k: usize) -> &[u64] {
        &self.sets[k]
    }

    /// `{1..n_k} \ S_k`.
    pub fn kept(&self, k: usize) -> Vec<u64> {
        let spent: BTreeSet<u64> = self.sets[k].iter().copied().collect();
        (1..=self.earned[k]).filter(|c| !spent.contains(c)).collect()
    }

    pub fn is_spent(&self, k: usize, coin: u64) -> bool {
        self.sets[k].binary_search(&coin).is_ok()
    }
}

/// Plays one protocol over the whole schedule. `stream` is required for John.
pub fn run_classical(
    schedule: &DimensionSchedule,
    protocol: Protocol,
    stream: Option<&mut RandomStream>,
) -> Result<CoinSetSequence> {
    let horizon = schedule.horizon();
    let earned: Vec<u64> = (0..=horizon).map(|k| schedule.n(k)).collect();
    let mut sets = Vec::with_capacity(horizon + 1);
    sets.push(Vec::new());
    match protocol {
        Protocol::Jack => {
            for k in 1..=horizon {
                sets.push((1..=schedule.m(k)).collect());
            }
        }
        Protocol::Julie => {
            let mut pile: Vec<u64> = Vec::new();
            let mut spent: Vec<u64> = Vec::new();
            for k in 1..=horizon {
                pile.extend(schedule.n(k - 1) + 1..=schedule.n(k));
                for _ in 0..schedule.delta_m(k - 1) {
                    spent.push(pile.pop().expect("m_k ≤ n_k keeps the pile stocked"));
                }
                let mut s = spent.clone();
                s.sort_unstable();
                sets.push(s);
            }
        }
        Protocol::John => {
            let stream = stream.ok_or_else(|| Error::invalid("the random protocol needs a stream"))?;
            let mut unspent: Vec<u64> = Vec::new();
            let mut spent: Vec<u64> = Vec::new();
            for k in 1..=horizon {
                unspent.extend(schedule.n(k - 1) + 1..=schedule.n(k));
                let take = schedule.delta_m(k - 1) as usize;
                // Partial Fisher–Yates: the first `take` slots become a uniform subset.
                for t in 0..take {
                    let j = t + stream.index(unspent.len() - t);
                    unspent.swap(t, j);
                }
                spent.extend(unspent.drain(..take));
                let mut s = spent.clone();
                s.sort_unstable();
                sets.push(s);
            }
        }
    }
    Ok(CoinSetSequence { sets, earned })
}

/// `∏_{j=i}^{k}(1 - r_j)` for coin `coin` in shell `i`: the probability that
/// John still holds it after month `k`.
pub fn survival_probability(schedule: &DimensionSchedule, coin: u64, k: usize) -> Result<f64> {
    let shell = locate(schedule, coin, k)?;
    crate::matryoshka::expected_residual(schedule, shell, k)
}

fn locate(schedule: &DimensionSchedule, coin: u64, k: usize) -> Result<usize> {
    if k == 0 || k > schedule.horizon() {
        return Err(Error::invalid(format!("step {k} outside 1..={}", schedule.horizon())));
    }
    let shell = schedule
        .shell_of(coin)
        .ok_or_else(|| Error::invalid(format!("coin {coin} is never earned within the horizon")))?;
    if shell > k {
        return Err(Error::invalid(format!("coin {coin} is earned only in month {shell} > {k}")));
    }
    Ok(shell)
}

/// Monte Carlo frequency of `{coin ∉ S_k}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalEstimate {
    pub frequency: f64,
    /// Binomial standard error `√(p̂(1-p̂)/T)`.
    pub stderr: f64,
    pub trials: u64,
    /// Moments of the survival indicator.
    pub moments: OnlineMoments,
    pub draws: u64,
}

pub fn estimate_survival(
    schedule: &DimensionSchedule,
    protocol: Protocol,
    coin: u64,
    k: usize,
    trials: usize,
    stream: &RandomStream,
) -> Result<SurvivalEstimate> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    locate(schedule, coin, k)?;
    let outcomes: Vec<(bool, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut s = stream.child(t);
            let seq = run_classical(schedule, protocol, Some(&mut s))?;
            Ok((!seq.is_spent(k, coin), s.draws()))
        })
        .collect::<Result<_>>()?;
    let moments: OnlineMoments = outcomes.iter().map(|&(kept, _)| if kept { 1.0 } else { 0.0 }).collect();
    let p = moments.mean();
    Ok(SurvivalEstimate {
        frequency: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        trials: trials as u64,
        moments,
        draws: outcomes.iter().map(|&(_, d)| d).sum(),
    })
}
