//! Experiment configuration and its TOML file format.
//!
//! ```toml
//! kind = "quantum"          # quantum | classical | compare | dichotomy | hamiltonian | verify
//! horizon = 12
//! trials = 20000
//! seed = 42
//! z_threshold = 4.0
//! protocol = "john"         # jack | julie | john (classical experiments)
//!
//! [schedule]                # affine | geometric | polynomial | explicit | renewal
//! kind = "affine"
//! m_step = 1
//! n_step = 2
//! n_offset = 0
//!
//! [test_vectors]            # shell_aligned | basis | superposition
//! kind = "basis"
//! indices = [1]
//!
//! [hamiltonian]
//! omega = 1.0
//! window = 100.0
//! stationary_first_gap = false
//! matrix_elements = false
//! gaps = { kind = "geometric", q = 0.5 }
//!
//! [output]
//! format = "csv"            # csv | json
//! path = "out.csv"          # stdout when absent
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::ComplexVector;
use crate::hamiltonian::GapDistribution;
use crate::matryoshka::{default_test_vectors, DimensionSchedule, ScheduleSpec};
use crate::urn::Protocol;

/// Environment variable that overrides the default seed.
pub const SEED_ENV: &str = "MATRYOSHKA_SEED";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_Z_THRESHOLD: f64 = 4.0;

/// Default seed, honoring [`SEED_ENV`] when it parses as a `u64`.
pub fn default_seed() -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED)
}

fn default_protocol() -> Protocol {
    Protocol::John
}

fn default_z() -> f64 {
    DEFAULT_Z_THRESHOLD
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Quantum,
    Classical,
    Compare,
    Dichotomy,
    Hamiltonian,
    Verify,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestVectorSpec {
    /// `e_{n_{i-1}+1}` for every nonempty shell `i`.
    #[default]
    ShellAligned,
    /// Standard basis vectors (1-based); coins for the classical protocols.
    Basis { indices: Vec<u64> },
    /// The normalized sum of the listed basis vectors (quantum only).
    Superposition { indices: Vec<u64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub gaps: GapDistribution,
    #[serde(default = "one_f64")]
    pub omega: f64,
    /// Density window width, in energy units.
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default)]
    pub stationary_first_gap: bool,
    /// Build eigenframes and export matrix elements of the projector on `e_1`.
    #[serde(default)]
    pub matrix_elements: bool,
}

fn one_f64() -> f64 {
    1.0
}

fn default_window() -> f64 {
    100.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub horizon: usize,
    pub trials: usize,
    #[serde(with = "seed_repr")]
    pub seed: u64,
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub test_vectors: TestVectorSpec,
    /// Classical spending protocol; only `john` is compared against the survival law.
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<HamiltonianConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// TOML integers are signed 64-bit: seeds above `i64::MAX` are written as strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom("seed must be nonnegative")),
            Repr::Text(t) => t.trim().parse().map_err(|_| de::Error::custom(format!("invalid seed `{t}`"))),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for `kind`: the coin-spending schedule, horizon 12, 20000 trials.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            horizon: 12,
            trials: 20_000,
            seed: default_seed(),
            z_threshold: DEFAULT_Z_THRESHOLD,
            schedule: match kind {
                ExperimentKind::Quantum | ExperimentKind::Classical | ExperimentKind::Compare => {
                    Some(ScheduleSpec::doubling())
                }
                _ => None,
            },
            test_vectors: TestVectorSpec::ShellAligned,
            protocol: Protocol::John,
            hamiltonian: (kind == ExperimentKind::Hamiltonian).then(|| HamiltonianConfig {
                gaps: GapDistribution::Geometric { q: 0.5 },
                omega: 1.0,
                window: default_window(),
                stationary_first_gap: false,
                matrix_elements: false,
            }),
            output: OutputConfig::default(),
        }
    }

    /// Checks every field; errors name the offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if !(self.z_threshold > 0.0 && self.z_threshold.is_finite()) {
            return Err(Error::config("z_threshold", "must be positive and finite"));
        }
        match self.kind {
            ExperimentKind::Quantum | ExperimentKind::Classical | ExperimentKind::Compare => {
                let schedule = self.schedule()?;
                self.test_vectors_for(&schedule)?;
                if self.kind != ExperimentKind::Quantum {
                    self.coins_for(&schedule)?;
                }
            }
            ExperimentKind::Hamiltonian => {
                let h = self
                    .hamiltonian
                    .as_ref()
                    .ok_or_else(|| Error::config("hamiltonian", "required for hamiltonian experiments"))?;
                h.gaps.validate().map_err(|e| Error::config("hamiltonian.gaps", e.to_string()))?;
                if !(h.omega > 0.0 && h.omega.is_finite()) {
                    return Err(Error::config("hamiltonian.omega", "must be positive and finite"));
                }
                if !(h.window > 0.0 && h.window.is_finite()) {
                    return Err(Error::config("hamiltonian.window", "must be positive and finite"));
                }
                if h.stationary_first_gap && h.gaps.mean().is_none() {
                    return Err(Error::config("hamiltonian.stationary_first_gap", "needs a finite mean gap"));
                }
            }
            ExperimentKind::Dichotomy | ExperimentKind::Verify => {}
        }
        Ok(())
    }

    /// The validated schedule at this config's horizon.
    pub fn schedule(&self) -> Result<DimensionSchedule> {
        let spec = self.schedule.clone().ok_or_else(|| Error::config("schedule", "required for this experiment"))?;
        DimensionSchedule::new(spec, self.horizon).map_err(|e| Error::config("schedule", e.to_string()))
    }

    /// Quantum test vectors, padded to `n_K`.
    pub fn test_vectors_for(&self, schedule: &DimensionSchedule) -> Result<Vec<ComplexVector>> {
        let n = schedule.ambient_dim();
        let check = |indices: &[u64]| -> Result<()> {
            if indices.is_empty() {
                return Err(Error::config("test_vectors.indices", "must not be empty"));
            }
            for (i, &ix) in indices.iter().enumerate() {
                if ix == 0 || ix > n {
                    return Err(Error::config(
                        format!("test_vectors.indices[{i}]"),
                        format!("index {ix} outside 1..={n}"),
                    ));
                }
            }
            Ok(())
        };
        match &self.test_vectors {
            TestVectorSpec::ShellAligned => Ok(default_test_vectors(schedule)),
            TestVectorSpec::Basis { indices } => {
                check(indices)?;
                indices.iter().map(|&i| ComplexVector::basis(n as usize, i as usize - 1)).collect()
            }
            TestVectorSpec::Superposition { indices } => {
                check(indices)?;
                let mut coords = vec![0.0; n as usize];
                for &i in indices {
                    coords[i as usize - 1] = 1.0;
                }
                let norm = coords.iter().sum::<f64>().sqrt();
                coords.iter_mut().for_each(|c| *c /= norm);
                Ok(vec![ComplexVector::from_real(&coords)?])
            }
        }
    }

    /// Coin labels for the classical protocols.
    pub fn coins_for(&self, schedule: &DimensionSchedule) -> Result<Vec<u64>> {
        match &self.test_vectors {
            TestVectorSpec::ShellAligned => Ok((1..=schedule.horizon())
                .filter(|&i| schedule.n(i) > schedule.n(i - 1))
                .map(|i| schedule.n(i - 1) + 1)
                .collect()),
            TestVectorSpec::Basis { .. } => {
                self.test_vectors_for(schedule)?;
                match &self.test_vectors {
                    TestVectorSpec::Basis { indices } => Ok(indices.clone()),
                    _ => unreachable!(),
                }
            }
            TestVectorSpec::Superposition { .. } => {
                Err(Error::config("test_vectors.kind", "superpositions have no classical counterpart"))
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_else(|| "<root>".into());
            Error::config(path, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|source| Error::Io { path: path.display().to_string(), source })
    }
}
