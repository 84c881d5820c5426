//! Monte Carlo laws of the nested process and its classical twin, judged
//! against exact rational oracles.

use num_rational::Ratio;

use matryoshka::harness::config::{ExperimentConfig, ExperimentKind, TestVectorSpec};
use matryoshka::harness::report::Check;
use matryoshka::harness::run_experiment;
use matryoshka::matryoshka::{expected_residual, run_quantum_trials, DimensionSchedule, ScheduleSpec};
use matryoshka::urn::{estimate_survival, Protocol};
use matryoshka::{ComplexVector, Error, RandomStream};

type Q = Ratio<i128>;

fn keep_product(n: &[i128], m: &[i128], shell: usize, k: usize) -> Q {
    // n[0] = m[0] = 0 prepended by the caller.
    (shell..=k)
        .map(|j| {
            let den = n[j] - m[j - 1];
            if den == 0 {
                Q::from_integer(0)
            } else {
                Q::from_integer(1) - Q::new(m[j] - m[j - 1], den)
            }
        })
        .product()
}

fn f(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

#[test]
fn powers_of_two_product_matches_oracle() {
    let n: Vec<i128> = (0..=4).map(|k| if k == 0 { 0 } else { 1 << k }).collect();
    let m: Vec<i128> = (0..=4).collect();
    let oracle = keep_product(&n, &m, 1, 4);
    assert_eq!(oracle, Q::new(10, 39));
    let s = DimensionSchedule::new(ScheduleSpec::powers_of_two(), 4).unwrap();
    assert!((expected_residual(&s, 1, 4).unwrap() - f(oracle)).abs() < 1e-15);
    let e1 = ComplexVector::basis(16, 0).unwrap();
    let run = run_quantum_trials(&s, &[e1], 20_000, &RandomStream::new(11, 0)).unwrap();
    let m = run.moments(0, 4);
    let z = (m.mean() - f(oracle)) / m.standard_error().unwrap();
    assert!(z.abs() < 4.0, "z = {z}");
}

#[test]
fn explicit_schedule_with_idle_steps() {
    // Step 2 adds no directions, step 4 adds no trial dimensions.
    let n = [0i128, 3, 3, 7, 7, 12];
    let m = [0i128, 1, 1, 4, 5, 8];
    let spec = ScheduleSpec::Explicit { n: vec![3, 3, 7, 7, 12], m: vec![1, 1, 4, 5, 8] };
    let s = DimensionSchedule::new(spec, 5).unwrap();
    let vectors = [ComplexVector::basis(12, 0).unwrap(), ComplexVector::basis(12, 4).unwrap()];
    let run = run_quantum_trials(&s, &vectors, 20_000, &RandomStream::new(12, 0)).unwrap();
    for (idx, shell) in [(0usize, 1usize), (1, 3)] {
        for k in shell..=5 {
            let oracle = f(keep_product(&n, &m, shell, k));
            let mo = run.moments(idx, k);
            let se = mo.standard_error().unwrap();
            assert!((mo.mean() - oracle).abs() <= 4.0 * se, "shell {shell} k {k}: {} vs {oracle}", mo.mean());
        }
    }
}

#[test]
fn survival_law_matches_oracle() {
    let s = DimensionSchedule::new(ScheduleSpec::Affine { m_step: 2, n_step: 3, n_offset: 1 }, 5).unwrap();
    let n: Vec<i128> = (0..=5).map(|k| if k == 0 { 0 } else { 3 * k + 1 }).collect();
    let m: Vec<i128> = (0..=5).map(|k| 2 * k).collect();
    for (coin, shell) in [(1u64, 1usize), (6, 2)] {
        let oracle = f(keep_product(&n, &m, shell, 5));
        let est = estimate_survival(&s, Protocol::John, coin, 5, 20_000, &RandomStream::new(13, coin)).unwrap();
        let se = (oracle * (1.0 - oracle) / 20_000.0).sqrt();
        assert!((est.frequency - oracle).abs() <= 4.0 * se, "coin {coin}: {} vs {oracle}", est.frequency);
    }
}

#[test]
fn unaligned_vectors_stay_below_the_bound() {
    let mut c = ExperimentConfig::new(ExperimentKind::Quantum);
    c.seed = 3;
    c.horizon = 5;
    c.trials = 4000;
    c.test_vectors = TestVectorSpec::Superposition { indices: vec![2, 3, 7] };
    let r = run_experiment(&c, None).unwrap();
    assert!(r.rows.iter().all(|x| x.check == Check::UpperBound && x.pass == Some(true)));
    // The component in F_1 is absorbed faster, so the mean sits strictly below the bound.
    let last = r.rows.last().unwrap();
    assert!(last.observed < last.predicted.unwrap());
}

#[test]
fn quantum_experiment_example() {
    let mut c = ExperimentConfig::new(ExperimentKind::Quantum);
    c.seed = 42;
    c.horizon = 4;
    c.trials = 20_000;
    c.test_vectors = TestVectorSpec::Basis { indices: vec![1] };
    let r = run_experiment(&c, None).unwrap();
    let row = r.rows.iter().find(|x| x.k == Some(4)).unwrap();
    let oracle = f(keep_product(&[0, 2, 4, 6, 8], &[0, 1, 2, 3, 4], 1, 4));
    assert_eq!(oracle, 0.2);
    assert_eq!(row.predicted, Some(oracle));
    assert!(row.z.unwrap().abs() < 4.0);
    assert!(r.passed);
}

#[test]
fn classical_experiment_example() {
    let mut c = ExperimentConfig::new(ExperimentKind::Classical);
    c.seed = 42;
    c.horizon = 4;
    c.trials = 20_000;
    c.test_vectors = TestVectorSpec::Basis { indices: vec![1] };
    let r = run_experiment(&c, None).unwrap();
    let row = r.rows.iter().find(|x| x.k == Some(4)).unwrap();
    assert_eq!(row.predicted, Some(0.2));
    assert!(row.z.unwrap().abs() < 4.0);
    assert!(r.passed);
}

#[test]
fn single_trial_reports_undefined_error() {
    let mut c = ExperimentConfig::new(ExperimentKind::Quantum);
    c.trials = 1;
    c.horizon = 3;
    let r = run_experiment(&c, None).unwrap();
    assert!(r.rows.iter().all(|x| x.stderr.is_none() && x.z.is_none() && x.pass.is_none()));
    assert!(r.summary().contains("z undefined"));
}

#[test]
fn invalid_configs_name_the_field() {
    let mut c = ExperimentConfig::new(ExperimentKind::Quantum);
    c.horizon = 0;
    match run_experiment(&c, None) {
        Err(Error::Config { path, .. }) => assert_eq!(path, "horizon"),
        other => panic!("unexpected {other:?}"),
    }
    let mut c = ExperimentConfig::new(ExperimentKind::Hamiltonian);
    c.hamiltonian.as_mut().unwrap().gaps = matryoshka::hamiltonian::GapDistribution::Table { probs: vec![0.5, 0.2] };
    match run_experiment(&c, None) {
        Err(Error::Config { path, .. }) => assert_eq!(path, "hamiltonian.gaps"),
        other => panic!("unexpected {other:?}"),
    }
}
