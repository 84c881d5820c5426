//! Runs a configured experiment and assembles its report.

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, HamiltonianConfig, TestVectorSpec};
use super::report::{Check, Report, ReportRow};
use super::verify;
use crate::error::{Error, Result};
use crate::grassmann::ComplexVector;
use crate::hamiltonian::{
    density_profile, gap_statistics, hamiltonian_from_renewal, matrix_elements, ratio_sum, sample_renewal,
    totality_criterion, Spectrum,
};
use crate::matryoshka::{
    classify_series, ratios, run_quantum_trials, DimensionSchedule, Probe, QuantumRun, ScheduleSpec,
};
use crate::stats::OnlineMoments;
use crate::stream::RandomStream;
use crate::urn::{run_classical, survival_probability, Protocol};

pub const QUANTUM_STREAM: u64 = 1;
pub const CLASSICAL_STREAM: u64 = 2;
pub const HAMILTONIAN_STREAM: u64 = 3;

/// Largest horizon used for the convergent branch of the dichotomy experiment.
pub const CONVERGENT_HORIZON: usize = 12;

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("workers must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Validates `config` and runs it. Results do not depend on `workers`.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<Report> {
    config.validate()?;
    with_workers(workers, || match config.kind {
        ExperimentKind::Quantum => quantum(config),
        ExperimentKind::Classical => classical(config),
        ExperimentKind::Compare => compare(config),
        ExperimentKind::Dichotomy => dichotomy(config),
        ExperimentKind::Hamiltonian => hamiltonian(config),
        ExperimentKind::Verify => verify::verify(config.seed, config.z_threshold).map(|mut r| {
            r.config = Some(config.clone());
            r
        }),
    })?
}

/// The ratio sequence of a schedule with its partial sums and keep products.
pub fn ratio_report(schedule: &DimensionSchedule) -> Report {
    let mut report = Report::new(None);
    let seq = ratios(schedule);
    let mut keep = 1.0;
    for k in 1..=schedule.horizon() {
        let kk = Some(k as u64);
        keep *= schedule.keep_fraction(k);
        report.rows.push(ReportRow::measure("n", kk, schedule.n(k) as f64, 0, 0));
        report.rows.push(ReportRow::measure("m", kk, schedule.m(k) as f64, 0, 0));
        report.rows.push(ReportRow::measure("r", kk, seq.values[k - 1], 0, 0));
        report.rows.push(ReportRow::measure("r_partial_sum", kk, seq.partial_sums[k - 1], 0, 0));
        report.rows.push(ReportRow::measure("keep_product", kk, keep, 0, 0));
    }
    report.note("schedule", schedule.spec());
    report.note("series", classify_series(schedule));
    report.finish()
}

fn vector_label(config: &ExperimentConfig, index: usize, v: &ComplexVector) -> String {
    match config.test_vectors {
        TestVectorSpec::Superposition { .. } => format!("v{}", index + 1),
        _ => format!("e{}", v.support_end()),
    }
}

fn quantum_rows(
    config: &ExperimentConfig,
    schedule: &DimensionSchedule,
    vectors: &[ComplexVector],
    tag: &str,
    report: &mut Report,
) -> Result<QuantumRun> {
    let base = RandomStream::new(config.seed, QUANTUM_STREAM);
    let run = run_quantum_trials(schedule, vectors, config.trials, &base)?;
    for (i, v) in vectors.iter().enumerate() {
        let probe = Probe::new(schedule, v)?;
        let label = vector_label(config, i, v);
        for k in probe.shell..=schedule.horizon() {
            let m = run.moments(i, k);
            let predicted = run.trials[0][i].predicted_at(k).expect("k within trajectory");
            let (name, check) =
                if probe.shell_aligned { ("residual_sq", Check::TwoSided) } else { ("residual_sq_bound", Check::UpperBound) };
            report.rows.push(
                ReportRow::measure(format!("{name}[{tag}{label}]"), Some(k as u64), m.mean(), m.count(), config.seed)
                    .assert(check, predicted, m.standard_error(), config.z_threshold),
            );
        }
    }
    report.total_draws += run.draws;
    Ok(run)
}

/// Survival indicators `[trial][coin][k - shell]`.
struct ClassicalRun {
    outcomes: Vec<Vec<Vec<bool>>>,
    shells: Vec<usize>,
    draws: u64,
}

impl ClassicalRun {
    fn moments(&self, coin: usize, k: usize) -> OnlineMoments {
        self.outcomes.iter().map(|t| if t[coin][k - self.shells[coin]] { 1.0 } else { 0.0 }).collect()
    }
}

fn run_classical_trials(
    schedule: &DimensionSchedule,
    protocol: Protocol,
    coins: &[u64],
    trials: usize,
    base: &RandomStream,
) -> Result<ClassicalRun> {
    let shells: Vec<usize> = coins.iter().map(|&c| schedule.shell_of(c).expect("validated coin")).collect();
    let results: Vec<(Vec<Vec<bool>>, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut s = base.child(t);
            let seq = run_classical(schedule, protocol, Some(&mut s))?;
            let row = coins
                .iter()
                .zip(&shells)
                .map(|(&c, &i)| (i..=schedule.horizon()).map(|k| !seq.is_spent(k, c)).collect())
                .collect();
            Ok((row, s.draws()))
        })
        .collect::<Result<_>>()?;
    let draws = results.iter().map(|r| r.1).sum();
    Ok(ClassicalRun { outcomes: results.into_iter().map(|r| r.0).collect(), shells, draws })
}

fn classical_rows(
    config: &ExperimentConfig,
    schedule: &DimensionSchedule,
    coins: &[u64],
    with_variance: bool,
    report: &mut Report,
) -> Result<()> {
    let base = RandomStream::new(config.seed, CLASSICAL_STREAM);
    let run = run_classical_trials(schedule, config.protocol, coins, config.trials, &base)?;
    let t = config.trials as f64;
    let check = if config.protocol == Protocol::John { Check::TwoSided } else { Check::None };
    for (ci, &coin) in coins.iter().enumerate() {
        for k in run.shells[ci]..=schedule.horizon() {
            let m = run.moments(ci, k);
            let p = survival_probability(schedule, coin, k)?;
            // Frequencies are judged against the binomial spread of the predicted law.
            let se = (p * (1.0 - p) / t).sqrt();
            report.rows.push(
                ReportRow::measure(format!("survival[{coin}]"), Some(k as u64), m.mean(), m.count(), config.seed)
                    .assert(check, p, (t >= 2.0).then_some(se), config.z_threshold),
            );
            if with_variance {
                if let Some(var) = m.variance() {
                    report.rows.push(
                        ReportRow::measure(format!("survival_variance[{coin}]"), Some(k as u64), var, m.count(), config.seed)
                            .assert(check, p * (1.0 - p), m.variance_standard_error(), config.z_threshold),
                    );
                }
            }
        }
    }
    report.total_draws += run.draws;
    Ok(())
}

fn quantum(config: &ExperimentConfig) -> Result<Report> {
    let schedule = config.schedule()?;
    let vectors = config.test_vectors_for(&schedule)?;
    let mut report = Report::new(Some(config.clone()));
    quantum_rows(config, &schedule, &vectors, "", &mut report)?;
    report.note("series", classify_series(&schedule));
    Ok(report.finish())
}

fn classical(config: &ExperimentConfig) -> Result<Report> {
    let schedule = config.schedule()?;
    let coins = config.coins_for(&schedule)?;
    let mut report = Report::new(Some(config.clone()));
    classical_rows(config, &schedule, &coins, false, &mut report)?;
    report.note("protocol", config.protocol);
    Ok(report.finish())
}

fn compare(config: &ExperimentConfig) -> Result<Report> {
    let schedule = config.schedule()?;
    let coins = config.coins_for(&schedule)?;
    let ambient = schedule.ambient_dim() as usize;
    let vectors = coins.iter().map(|&c| ComplexVector::basis(ambient, c as usize - 1)).collect::<Result<Vec<_>>>()?;
    let mut report = Report::new(Some(config.clone()));
    let run = quantum_rows(config, &schedule, &vectors, "", &mut report)?;
    for (i, &coin) in coins.iter().enumerate() {
        let shell = schedule.shell_of(coin).expect("validated coin");
        for k in shell..=schedule.horizon() {
            if let Some(var) = run.moments(i, k).variance() {
                let p = survival_probability(&schedule, coin, k)?;
                // The quantum spread is not the Bernoulli one; reported for contrast.
                report.rows.push(
                    ReportRow::measure(format!("residual_variance[e{coin}]"), Some(k as u64), var, config.trials as u64, config.seed)
                        .compare(p * (1.0 - p), None),
                );
            }
        }
    }
    classical_rows(config, &schedule, &coins, true, &mut report)?;
    report.note("protocol", config.protocol);
    Ok(report.finish())
}

fn dichotomy(config: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new(Some(config.clone()));
    let branches = [
        ("divergent", ScheduleSpec::doubling(), config.horizon),
        ("convergent", ScheduleSpec::powers_of_two(), config.horizon.min(CONVERGENT_HORIZON)),
    ];
    for (tag, spec, horizon) in branches {
        let schedule = DimensionSchedule::new(spec, horizon)?;
        let seq = ratios(&schedule);
        for k in 1..=horizon {
            report.rows.push(ReportRow::measure(format!("r_partial_sum[{tag}]"), Some(k as u64), seq.partial_sums[k - 1], 0, config.seed));
        }
        let e1 = ComplexVector::basis(schedule.ambient_dim() as usize, 0)?;
        quantum_rows(config, &schedule, &[e1], &format!("{tag},"), &mut report)?;
        report.note(format!("series[{tag}]"), classify_series(&schedule));
        report.note(format!("schedule[{tag}]"), schedule.spec());
    }
    Ok(report.finish())
}

/// One ensemble member: its spectrum, `∑ r_k`, projector matrix elements
/// `(A_ll, |A_{l,l+1}|²)` when requested, and its draw count.
type Member = (Spectrum, f64, Option<Vec<(f64, f64)>>, u64);

fn hamiltonian(config: &ExperimentConfig) -> Result<Report> {
    let h: &HamiltonianConfig = config.hamiltonian.as_ref().expect("validated");
    let mut report = Report::new(Some(config.clone()));
    let base = RandomStream::new(config.seed, HAMILTONIAN_STREAM);
    let members: Vec<Member> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut s = base.child(t);
            let renewal = sample_renewal(&h.gaps, config.horizon, h.stationary_first_gap, &mut s)?;
            let spectrum = Spectrum::new(h.omega, &renewal)?;
            let rsum = ratio_sum(&renewal)?;
            let elements = if h.matrix_elements {
                let ham = hamiltonian_from_renewal(&renewal, h.omega, &mut s)?;
                let n = ham.eigenframe.ambient_dim();
                let mut diag = vec![0.0; n];
                diag[0] = 1.0;
                let a = matrix_elements(&ham, &diag)?;
                let k = a.nrows();
                Some((0..k).map(|l| (a[(l, l)].re, if l + 1 < k { a[(l, l + 1)].norm_sqr() } else { 0.0 })).collect())
            } else {
                None
            };
            Ok((spectrum, rsum, elements, s.draws()))
        })
        .collect::<Result<_>>()?;
    report.total_draws = members.iter().map(|m| m.3).sum();
    let spectra: Vec<&Spectrum> = members.iter().map(|m| &m.0).collect();
    let trials = config.trials as u64;
    let seed = config.seed;
    let z = config.z_threshold;

    let table = gap_statistics(&spectra)?;
    let total = table.total as f64;
    let max_gap = table.rows.last().map_or(0, |r| r.gap);
    for n in 1..=max_gap {
        let p = h.gaps.mass(n);
        let observed = table.frequency(n);
        let row = ReportRow::measure(format!("gap_frequency[{n}]"), Some(n), observed, table.total, seed);
        // Atoms with too few expected counts are reported but not judged.
        let judged = !h.stationary_first_gap && total * p >= 10.0;
        let se = Some((p * (1.0 - p) / total).sqrt());
        report.rows.push(if judged { row.assert(Check::TwoSided, p, se, z) } else { row.compare(p, se) });
    }
    let mean_row = ReportRow::measure("mean_gap", None, table.mean, table.total, seed);
    report.rows.push(match (h.gaps.mean(), h.gaps.variance()) {
        (Some(mu), Some(_)) if !h.stationary_first_gap => mean_row.assert(Check::TwoSided, mu, table.mean_stderr, z),
        (Some(mu), _) => mean_row.compare(mu, table.mean_stderr),
        (None, _) => mean_row,
    });

    let profile = density_profile(&spectra, h.window)?;
    let level_density = h.gaps.mean().map(|mu| h.window / (h.omega * mu));
    for (j, w) in profile.window_means.iter().enumerate() {
        let row = ReportRow::measure("density_window", Some(j as u64 + 1), *w, trials, seed);
        report.rows.push(match level_density {
            Some(d) => row.compare(d, None),
            None => row,
        });
    }
    report.rows.push(ReportRow::measure("density_flatness", None, profile.flatness, trials, seed));

    let rsum: OnlineMoments = members.iter().map(|m| m.1).collect();
    let row = ReportRow::measure("ratio_sum", Some(config.horizon as u64), rsum.mean(), trials, seed);
    report.rows.push(row);

    if h.matrix_elements {
        for l in 0..config.horizon {
            let diag: OnlineMoments = members.iter().map(|m| m.2.as_ref().expect("built")[l].0).collect();
            report.rows.push(ReportRow::measure("projector_e1_diag", Some(l as u64 + 1), diag.mean(), trials, seed));
            if l + 1 < config.horizon {
                let off: OnlineMoments = members.iter().map(|m| m.2.as_ref().expect("built")[l].1).collect();
                report.rows.push(ReportRow::measure("projector_e1_offdiag_sq", Some(l as u64 + 1), off.mean(), trials, seed));
            }
        }
    }
    report.note("gaps", &h.gaps);
    report.note("totality", format!("{:?}", totality_criterion(&h.gaps)));
    report.note("bulk", format!("[{}, {}]", profile.bulk_start, profile.bulk_end));
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::OutputFormat;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(kind);
        c.seed = 5;
        c.horizon = 4;
        c.trials = 400;
        c
    }

    #[test]
    fn quantum_experiment_rows() {
        let r = run_experiment(&small(ExperimentKind::Quantum), None).unwrap();
        // Four shells, trajectories of lengths 4, 3, 2, 1.
        assert_eq!(r.rows.len(), 10);
        assert!(r.rows.iter().all(|x| x.asserted() && x.predicted.is_some() && x.stderr.is_some()));
        assert!(r.passed, "{}", r.summary());
        assert!(r.total_draws > 0);
    }

    #[test]
    fn superposition_rows_are_one_sided() {
        let mut c = small(ExperimentKind::Quantum);
        c.test_vectors = TestVectorSpec::Superposition { indices: vec![1, 3] };
        let r = run_experiment(&c, None).unwrap();
        assert!(r.rows.iter().all(|x| x.check == Check::UpperBound));
        assert!(r.passed, "{}", r.summary());
    }

    #[test]
    fn classical_and_compare() {
        let r = run_experiment(&small(ExperimentKind::Classical), None).unwrap();
        assert!(r.passed, "{}", r.summary());
        let mut c = small(ExperimentKind::Compare);
        c.test_vectors = TestVectorSpec::Basis { indices: vec![1] };
        let r = run_experiment(&c, None).unwrap();
        assert!(r.passed, "{}", r.summary());
        assert!(r.rows.iter().any(|x| x.quantity == "survival_variance[1]"));
        assert!(r.rows.iter().any(|x| x.quantity == "residual_variance[e1]"));
    }

    #[test]
    fn deterministic_protocols_are_not_judged() {
        let mut c = small(ExperimentKind::Classical);
        c.protocol = Protocol::Jack;
        c.trials = 2;
        let r = run_experiment(&c, None).unwrap();
        assert!(r.rows.iter().all(|x| !x.asserted()));
        assert!(r.passed);
    }

    #[test]
    fn single_trial_is_flagged() {
        let mut c = small(ExperimentKind::Quantum);
        c.trials = 1;
        let r = run_experiment(&c, None).unwrap();
        assert!(r.rows.iter().all(|x| x.stderr.is_none() && x.pass.is_none()));
        assert!(!r.passed);
    }

    #[test]
    fn hamiltonian_experiment() {
        let mut c = small(ExperimentKind::Hamiltonian);
        c.horizon = 200;
        c.trials = 20;
        c.hamiltonian.as_mut().unwrap().window = 20.0;
        let r = run_experiment(&c, None).unwrap();
        assert!(r.passed, "{}", r.summary());
        assert!(r.rows.iter().any(|x| x.quantity == "density_flatness"));
        let mut c = small(ExperimentKind::Hamiltonian);
        c.horizon = 6;
        c.trials = 10;
        c.hamiltonian.as_mut().unwrap().matrix_elements = true;
        let r = run_experiment(&c, None).unwrap();
        let diag_sum: f64 = r.rows.iter().filter(|x| x.quantity == "projector_e1_diag").map(|x| x.observed).sum();
        assert!(diag_sum <= 1.0 + 1e-12);
    }

    #[test]
    fn dichotomy_experiment() {
        let mut c = small(ExperimentKind::Dichotomy);
        c.trials = 200;
        let r = run_experiment(&c, None).unwrap();
        assert!(r.passed, "{}", r.summary());
        assert!(r.notes.iter().any(|n| n.key == "series[convergent]" && n.value == "convergent"));
    }

    #[test]
    fn independent_of_worker_count() {
        let c = small(ExperimentKind::Compare);
        let a = run_experiment(&c, Some(1)).unwrap();
        let b = run_experiment(&c, Some(3)).unwrap();
        assert_eq!(a.render(OutputFormat::Json).unwrap(), b.render(OutputFormat::Json).unwrap());
        assert!(run_experiment(&c, Some(0)).is_err());
    }

    #[test]
    fn ratio_report_matches_schedule() {
        let s = DimensionSchedule::new(ScheduleSpec::doubling(), 3).unwrap();
        let r = ratio_report(&s);
        let keep: Vec<f64> = r.rows.iter().filter(|x| x.quantity == "keep_product").map(|x| x.observed).collect();
        for (k, p) in keep.iter().enumerate() {
            assert!((p - 1.0 / (k as f64 + 2.0)).abs() < 1e-15);
        }
    }
}
