//! The built-in acceptance suite.
//!
//! Criterion `i` draws from stream `100 + i` of the master seed, so criteria
//! can be run and reproduced independently.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;

use super::report::{Check, Report, ReportRow, Verdict};
use crate::error::Result;
use crate::grassmann::{
    project, residual, sample_haar_unitary, sample_uniform_subspace, ComplexVector, Frame, ORTHONORMALITY_TOL,
};
use crate::hamiltonian::{build_hamiltonian, density_profile, gap_statistics, matrix_elements, sample_renewal, GapDistribution, Spectrum};
use crate::matryoshka::{
    conditional_check, frozen_state, run_quantum_trials, ComplementStrategy, DimensionSchedule, MatryoshkaState,
    ScheduleSpec,
};
use crate::stats::OnlineMoments;
use crate::stream::RandomStream;
use crate::urn::{run_classical, survival_probability, Protocol};

pub const EXACT_TOL: f64 = 1e-12;
pub const FLATNESS_LIMIT: f64 = 0.1;

/// Rows and draw count produced by one criterion.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub rows: Vec<ReportRow>,
    pub draws: u64,
    pub detail: String,
}

impl Outcome {
    /// At least one asserted row, and no asserted row failed.
    pub fn pass(&self) -> bool {
        self.rows.iter().any(ReportRow::asserted) && !self.rows.iter().any(ReportRow::failed)
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub run: fn(seed: u64, z: f64) -> Result<Outcome>,
}

impl Criterion {
    /// Runs the criterion and reports its verdict and wall time.
    pub fn evaluate(&self, seed: u64, z: f64) -> Result<(Outcome, Verdict, Duration)> {
        let start = Instant::now();
        let outcome = (self.run)(seed, z)?;
        let elapsed = start.elapsed();
        let verdict = Verdict { id: self.id, name: self.name.into(), pass: outcome.pass(), detail: outcome.detail.clone() };
        Ok((outcome, verdict, elapsed))
    }
}

/// Criteria 1–9; determinism across runs and worker counts is checked by
/// re-running the suite itself.
pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, name: "grassmannian mean law", run: grassmannian_mean_law },
        Criterion { id: 2, name: "product formula", run: product_formula },
        Criterion { id: 3, name: "one-step markov identity", run: markov_identity },
        Criterion { id: 4, name: "classical/quantum agreement", run: classical_quantum_agreement },
        Criterion { id: 5, name: "dichotomy proxy", run: dichotomy_proxy },
        Criterion { id: 6, name: "deterministic protocol fixtures", run: protocol_fixtures },
        Criterion { id: 7, name: "hamiltonian collapse fixture", run: hamiltonian_collapse },
        Criterion { id: 8, name: "renewal statistics", run: renewal_statistics },
        Criterion { id: 9, name: "numerical hygiene", run: numerical_hygiene },
    ]
}

pub fn verify(seed: u64, z: f64) -> Result<Report> {
    let mut report = Report::new(None);
    for c in criteria() {
        let (outcome, verdict, _) = c.evaluate(seed, z)?;
        report.rows.extend(outcome.rows);
        report.total_draws += outcome.draws;
        report.verdicts.push(verdict);
    }
    Ok(report.finish())
}

fn stream_for(id: u32, seed: u64) -> RandomStream {
    RandomStream::new(seed, 100 + id as u64)
}

fn mean_row(quantity: &str, k: Option<u64>, m: &OnlineMoments, predicted: f64, seed: u64, z: f64) -> ReportRow {
    ReportRow::measure(quantity, k, m.mean(), m.count(), seed).assert(Check::TwoSided, predicted, m.standard_error(), z)
}

fn gate(quantity: &str, observed: f64, check: Check, bound: f64, trials: u64, seed: u64) -> ReportRow {
    ReportRow::measure(quantity, None, observed, trials, seed).assert(check, bound, None, f64::INFINITY)
}

fn doubling(horizon: usize) -> Result<DimensionSchedule> {
    DimensionSchedule::new(ScheduleSpec::doubling(), horizon)
}

fn grassmannian_mean_law(seed: u64, z: f64) -> Result<Outcome> {
    const T: u64 = 20_000;
    let base = stream_for(1, seed);
    let host = Frame::identity(8);
    let norm = (1.0f64 + 4.0 + 9.0 + 1.0).sqrt();
    let mut coords = vec![Complex64::new(0.0, 0.0); 8];
    coords[0] = Complex64::new(1.0 / norm, 0.0);
    coords[2] = Complex64::new(0.0, 2.0 / norm);
    coords[5] = Complex64::new(-3.0 / norm, 0.0);
    coords[7] = Complex64::new(0.0, -1.0 / norm);
    let v = ComplexVector::new(coords)?;
    let samples: Vec<(f64, f64, u64)> = (0..T)
        .into_par_iter()
        .map(|t| {
            let mut s = base.child(t);
            let e = sample_uniform_subspace(&host, 3, &mut s)?;
            Ok((project(&v, &e)?.norm_sqr(), residual(&v, &e)?.norm_sqr(), s.draws()))
        })
        .collect::<Result<_>>()?;
    let proj: OnlineMoments = samples.iter().map(|s| s.0).collect();
    let comp: OnlineMoments = samples.iter().map(|s| s.1).collect();
    Ok(Outcome {
        detail: format!("mean |P v|^2 = {:.5}, mean |W v|^2 = {:.5}", proj.mean(), comp.mean()),
        rows: vec![
            mean_row("subspace_projection_sq", None, &proj, 0.375, seed, z),
            mean_row("subspace_residual_sq", None, &comp, 0.625, seed, z),
        ],
        draws: samples.iter().map(|s| s.2).sum(),
    })
}

fn product_formula(seed: u64, z: f64) -> Result<Outcome> {
    const K: usize = 12;
    let schedule = doubling(K)?;
    let e1 = ComplexVector::basis(schedule.ambient_dim() as usize, 0)?;
    let run = run_quantum_trials(&schedule, &[e1], 20_000, &stream_for(2, seed))?;
    let mut worst: f64 = 0.0;
    let rows = (1..=K)
        .map(|k| {
            let row = mean_row("residual_sq[e1]", Some(k as u64), &run.moments(0, k), 1.0 / (k as f64 + 1.0), seed, z);
            worst = worst.max(row.z.map_or(f64::INFINITY, f64::abs));
            row
        })
        .collect();
    Ok(Outcome { rows, draws: run.draws, detail: format!("max |z| = {worst:.2} over k = 1..{K}") })
}

fn markov_identity(seed: u64, z: f64) -> Result<Outcome> {
    const K: usize = 12;
    let schedule = doubling(K)?;
    let base = stream_for(3, seed);
    let ambient = schedule.ambient_dim() as usize;
    let cases = [(1usize, 0usize), (4, 0), (8, 2)];
    let mut out = Outcome::default();
    let mut details = Vec::new();
    for (j, &(step, coord)) in cases.iter().enumerate() {
        let mut s = base.child(j as u64);
        let state = frozen_state(&schedule, step, &mut s)?;
        out.draws += s.draws();
        let v = ComplexVector::basis(ambient, coord)?;
        let check = conditional_check(&state, &v, &schedule, 20_000, &base.child(1000 + j as u64))?;
        let row = ReportRow::measure(
            format!("conditional_residual_sq[e{}]", coord + 1),
            Some(check.step as u64),
            check.empirical.mean,
            check.empirical.trials,
            seed,
        )
        .assert(Check::TwoSided, check.predicted, check.empirical.stderr, z);
        details.push(format!("k={} z={:.2}", check.step, row.z.unwrap_or(f64::NAN)));
        out.rows.push(row);
    }
    out.detail = details.join(", ");
    Ok(out)
}

fn classical_quantum_agreement(seed: u64, z: f64) -> Result<Outcome> {
    const K: usize = 12;
    const T: u64 = 20_000;
    let schedule = doubling(K)?;
    let base = stream_for(4, seed);
    let p = survival_probability(&schedule, 1, K)?;
    let e1 = ComplexVector::basis(schedule.ambient_dim() as usize, 0)?;
    let quantum = run_quantum_trials(&schedule, &[e1], T as usize, &base.child(0))?;
    let classical_base = base.child(1);
    let outcomes: Vec<(f64, u64)> = (0..T)
        .into_par_iter()
        .map(|t| {
            let mut s = classical_base.child(t);
            let seq = run_classical(&schedule, Protocol::John, Some(&mut s))?;
            Ok((if seq.is_spent(K, 1) { 0.0 } else { 1.0 }, s.draws()))
        })
        .collect::<Result<_>>()?;
    let ind: OnlineMoments = outcomes.iter().map(|o| o.0).collect();
    let q = quantum.moments(0, K);
    let kk = Some(K as u64);
    let rows = vec![
        mean_row("residual_sq[e1]", kk, &q, p, seed, z),
        ReportRow::measure("survival[1]", kk, ind.mean(), T, seed).assert(
            Check::TwoSided,
            p,
            Some((p * (1.0 - p) / T as f64).sqrt()),
            z,
        ),
        ReportRow::measure("survival_variance[1]", kk, ind.variance().unwrap_or(f64::NAN), T, seed).assert(
            Check::TwoSided,
            p * (1.0 - p),
            ind.variance_standard_error(),
            z,
        ),
    ];
    Ok(Outcome {
        detail: format!("p = {p:.6}, quantum {:.5}, classical {:.5}", q.mean(), ind.mean()),
        rows,
        draws: quantum.draws + outcomes.iter().map(|o| o.1).sum::<u64>(),
    })
}

fn dichotomy_proxy(seed: u64, z: f64) -> Result<Outcome> {
    const T: usize = 20_000;
    let base = stream_for(5, seed);
    let divergent = doubling(24)?;
    let convergent = DimensionSchedule::new(ScheduleSpec::powers_of_two(), 12)?;
    let mut out = Outcome::default();
    let mut means = Vec::new();
    for (j, (tag, schedule)) in [("divergent", &divergent), ("convergent", &convergent)].into_iter().enumerate() {
        let k = schedule.horizon();
        let e1 = ComplexVector::basis(schedule.ambient_dim() as usize, 0)?;
        let run = run_quantum_trials(schedule, &[e1], T, &base.child(j as u64))?;
        let predicted: f64 = (1..=k).map(|i| schedule.keep_fraction(i)).product();
        let m = run.moments(0, k);
        out.rows.push(mean_row(&format!("residual_sq[{tag},e1]"), Some(k as u64), &m, predicted, seed, z));
        if tag == "convergent" {
            out.rows.push(gate("residual_sq_floor[convergent,e1]", m.mean(), Check::AtLeast, 0.2, T as u64, seed));
        }
        out.draws += run.draws;
        means.push(format!("{tag} {:.5} (exact {predicted:.5})", m.mean()));
    }
    out.detail = means.join(", ");
    Ok(out)
}

fn protocol_fixtures(seed: u64, _z: f64) -> Result<Outcome> {
    let schedule = doubling(5)?;
    let julie = run_classical(&schedule, Protocol::Julie, None)?.kept(5);
    let jack = run_classical(&schedule, Protocol::Jack, None)?.kept(5);
    let julie_ok = julie == [1, 3, 5, 7, 9];
    let jack_ok = jack == [6, 7, 8, 9, 10];
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(Outcome {
        rows: vec![
            gate("kept_set_matches[julie]", flag(julie_ok), Check::AtLeast, 1.0, 1, seed),
            gate("kept_set_matches[jack]", flag(jack_ok), Check::AtLeast, 1.0, 1, seed),
        ],
        draws: 0,
        detail: format!("julie kept {julie:?}, jack kept {jack:?}"),
    })
}

fn hamiltonian_collapse(seed: u64, _z: f64) -> Result<Outcome> {
    const K: usize = 8;
    let mut s = stream_for(7, seed);
    let h = build_hamiltonian(&GapDistribution::Deterministic { gap: 1 }, 1.0, K, false, &mut s)?;
    let u = h.eigenframe.columns();
    // Eigenvectors are rays: u_k = e_k is checked up to a unit phase.
    let mut frame_dev: f64 = 0.0;
    for i in 0..u.nrows() {
        for j in 0..u.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            frame_dev = frame_dev.max((u[(i, j)].norm() - target).abs());
        }
    }
    let diag: Vec<f64> = (0..u.nrows()).map(|i| 0.75 * i as f64 - 1.5).collect();
    let a = matrix_elements(&h, &diag)?;
    let mut block_dev: f64 = 0.0;
    for i in 0..K {
        for j in 0..K {
            let target = if i == j { diag[i] } else { 0.0 };
            block_dev = block_dev.max((a[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    Ok(Outcome {
        rows: vec![
            gate("eigenframe_deviation_up_to_phase", frame_dev, Check::AtMost, EXACT_TOL, 1, seed),
            gate("matrix_element_deviation", block_dev, Check::AtMost, EXACT_TOL, 1, seed),
        ],
        draws: s.draws(),
        detail: format!("max ||u| - e| = {frame_dev:.1e}, max |A - diag| = {block_dev:.1e}"),
    })
}

fn renewal_statistics(seed: u64, z: f64) -> Result<Outcome> {
    const K: usize = 2000;
    const MEMBERS: u64 = 50;
    const WINDOW: f64 = 100.0;
    let gaps = GapDistribution::Geometric { q: 0.5 };
    let base = stream_for(8, seed);
    let members: Vec<(Spectrum, u64)> = (0..MEMBERS)
        .into_par_iter()
        .map(|t| {
            let mut s = base.child(t);
            let renewal = sample_renewal(&gaps, K, false, &mut s)?;
            Ok((Spectrum::new(1.0, &renewal)?, s.draws()))
        })
        .collect::<Result<_>>()?;
    let spectra: Vec<&Spectrum> = members.iter().map(|m| &m.0).collect();
    let table = gap_statistics(&spectra)?;
    let total = table.total as f64;
    let mut out = Outcome { draws: members.iter().map(|m| m.1).sum(), ..Default::default() };
    out.rows.push(
        ReportRow::measure("mean_gap", None, table.mean, table.total, seed).assert(
            Check::TwoSided,
            2.0,
            table.mean_stderr,
            z,
        ),
    );
    let mut atoms = 0;
    for n in 1.. {
        let p = gaps.mass(n);
        if total * p < 10.0 {
            break;
        }
        atoms += 1;
        out.rows.push(ReportRow::measure(format!("gap_frequency[{n}]"), Some(n), table.frequency(n), table.total, seed).assert(
            Check::TwoSided,
            p,
            Some((p * (1.0 - p) / total).sqrt()),
            z,
        ));
    }
    let profile = density_profile(&spectra, WINDOW)?;
    out.rows.push(gate("density_flatness", profile.flatness, Check::AtMost, FLATNESS_LIMIT, MEMBERS, seed));
    out.detail = format!(
        "{} gaps, mean {:.4}, {atoms} atoms judged, flatness {:.4} over {} windows",
        table.total,
        table.mean,
        profile.flatness,
        profile.window_means.len()
    );
    Ok(out)
}

fn numerical_hygiene(seed: u64, _z: f64) -> Result<Outcome> {
    let base = stream_for(9, seed);
    let mut out = Outcome::default();

    // Sampled unitaries and subspaces.
    let dims = [1usize, 2, 3, 8, 17, 64];
    let unitary: Vec<(f64, u64)> = (0..dims.len() as u64 * 50)
        .into_par_iter()
        .map(|t| {
            let mut s = base.child(t);
            let n = dims[(t % dims.len() as u64) as usize];
            let u = sample_haar_unitary(n, &mut s)?;
            let host = Frame::coordinate(n + 3, 1..n + 1)?;
            let e = sample_uniform_subspace(&host, n / 2 + 1, &mut s)?;
            Ok((u.gram_deviation().max(e.gram_deviation()), s.draws()))
        })
        .collect::<Result<_>>()?;
    let unitary_dev = unitary.iter().map(|u| u.0).fold(0.0, f64::max);
    out.draws += unitary.iter().map(|u| u.1).sum::<u64>();
    out.rows.push(gate("sampled_frame_deviation", unitary_dev, Check::AtMost, ORTHONORMALITY_TOL, unitary.len() as u64, seed));

    // Every step of evolved processes, in both complement strategies.
    let runs = [
        (doubling(24)?, ComplementStrategy::Explicit, 40u64),
        (doubling(24)?, ComplementStrategy::Projected, 40),
        (DimensionSchedule::new(ScheduleSpec::powers_of_two(), 9)?, ComplementStrategy::Projected, 10),
        (DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![3, 3, 7, 20, 20, 33], m: vec![1, 2, 2, 9, 20, 21] }, 6)?, ComplementStrategy::Explicit, 40),
    ];
    let mut evolved_dev: f64 = 0.0;
    let mut evolved = 0;
    for (r, (schedule, strategy, trials)) in runs.iter().enumerate() {
        let devs: Vec<(f64, u64)> = (0..*trials)
            .into_par_iter()
            .map(|t| {
                let mut s = base.child(10_000 + 1_000 * r as u64 + t);
                let mut state = MatryoshkaState::new(schedule, *strategy)?;
                let mut worst: f64 = 0.0;
                for _ in 0..schedule.horizon() {
                    state.advance(schedule, &mut s)?;
                    worst = worst.max(state.invariant_deviation()?);
                }
                Ok((worst, s.draws()))
            })
            .collect::<Result<_>>()?;
        evolved += devs.len() as u64;
        evolved_dev = devs.iter().map(|d| d.0).fold(evolved_dev, f64::max);
        out.draws += devs.iter().map(|d| d.1).sum::<u64>();
    }
    out.rows.push(gate("evolved_frame_deviation", evolved_dev, Check::AtMost, ORTHONORMALITY_TOL, evolved, seed));

    // Pythagoras on random (v, E) pairs of varying rank.
    const PAIRS: u64 = 10_000;
    let pyth: Vec<(f64, u64)> = (0..PAIRS)
        .into_par_iter()
        .map(|t| {
            let mut s = base.child(100_000 + t);
            let d = 1 + (t % 12) as usize;
            let m = (t / 12 % (d as u64 + 1)) as usize;
            let v = ComplexVector::new((0..d).map(|_| s.complex_normal()).collect())?;
            let e = sample_uniform_subspace(&Frame::identity(d), m, &mut s)?;
            let sum = project(&v, &e)?.norm_sqr() + residual(&v, &e)?.norm_sqr();
            Ok(((sum - v.norm_sqr()).abs() / v.norm_sqr(), s.draws()))
        })
        .collect::<Result<_>>()?;
    let pyth_dev = pyth.iter().map(|p| p.0).fold(0.0, f64::max);
    out.draws += pyth.iter().map(|p| p.1).sum::<u64>();
    out.rows.push(gate("pythagoras_relative_error", pyth_dev, Check::AtMost, ORTHONORMALITY_TOL, PAIRS, seed));

    out.detail = format!("frames {unitary_dev:.1e}, evolved {evolved_dev:.1e}, pythagoras {pyth_dev:.1e}");
    Ok(out)
}
