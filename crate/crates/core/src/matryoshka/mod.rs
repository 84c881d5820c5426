//! The nested random-subspace process.
//!
//! `F_k = span(e_1..e_{n_k})` and `E_k ⊂ F_k` has dimension `m_k`. Each step
//! adds `(δm)_k` directions drawn from the unitary-invariant measure on the
//! orthogonal complement of `E_k` inside `F_{k+1}`.

mod schedule;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use schedule::{
    classify_series, expected_residual, ratios, DimensionSchedule, RatioSequence, ScheduleSpec, SeriesClass,
};
pub(crate) use schedule::{parse_list, parse_num, split_params};

use crate::error::{Error, Result};
use crate::grassmann::{orthonormal_complement, ComplexVector, Frame};
use crate::linalg::{column_slice, column_slice_mut, cross_gram_max, fix_phases, CMatrix, HouseholderQr};
use crate::stats::{Estimate, OnlineMoments};
use crate::stream::RandomStream;

/// Largest ambient dimension a process will allocate.
pub const MAX_AMBIENT: u64 = 1 << 16;
/// Ambient dimensions up to this use [`ComplementStrategy::Explicit`] by default.
pub const EXPLICIT_COMPLEMENT_LIMIT: u64 = 256;
/// Gram drift that triggers re-orthonormalization.
pub const DRIFT_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// How the complement `E_k^{⊥F_k}` is represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplementStrategy {
    /// An orthonormal complement frame is stored, enlarged with the new
    /// ambient directions and deflated by a Householder update each step.
    Explicit,
    /// Only `E_k` is stored; new directions are Gaussian vectors of `F_{k+1}`
    /// projected off `E_k` and orthonormalized, which has the same law.
    Projected,
}

impl ComplementStrategy {
    pub fn for_schedule(schedule: &DimensionSchedule) -> Self {
        if schedule.ambient_dim() <= EXPLICIT_COMPLEMENT_LIMIT {
            ComplementStrategy::Explicit
        } else {
            ComplementStrategy::Projected
        }
    }
}

/// `E_k` (and, in explicit mode, its complement in `F_k`) at step `k`.
#[derive(Clone, Debug)]
pub struct MatryoshkaState {
    step: usize,
    horizon: usize,
    trial_dim: usize,
    rank: usize,
    /// `N × m_K`; the first `rank` columns span `E_k`.
    basis: CMatrix,
    complement: Option<CMatrix>,
    reorthonormalizations: u32,
}

/// Starts the process at `E_0 = F_0 = {0}` with the default strategy.
pub fn init(schedule: &DimensionSchedule) -> Result<MatryoshkaState> {
    MatryoshkaState::new(schedule, ComplementStrategy::for_schedule(schedule))
}

impl MatryoshkaState {
    pub fn new(schedule: &DimensionSchedule, strategy: ComplementStrategy) -> Result<Self> {
        let ambient = schedule.ambient_dim();
        if ambient > MAX_AMBIENT {
            return Err(Error::invalid(format!(
                "ambient dimension {ambient} exceeds the supported maximum {MAX_AMBIENT}"
            )));
        }
        let ambient = ambient as usize;
        let horizon = schedule.horizon();
        Ok(Self {
            step: 0,
            horizon,
            trial_dim: 0,
            rank: 0,
            basis: CMatrix::zeros(ambient, schedule.m(horizon) as usize),
            complement: match strategy {
                ComplementStrategy::Explicit => Some(CMatrix::zeros(ambient, 0)),
                ComplementStrategy::Projected => None,
            },
            reorthonormalizations: 0,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `m_k`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `n_k`.
    pub fn trial_dim(&self) -> usize {
        self.trial_dim
    }

    pub fn strategy(&self) -> ComplementStrategy {
        if self.complement.is_some() {
            ComplementStrategy::Explicit
        } else {
            ComplementStrategy::Projected
        }
    }

    /// How many times drift forced a re-orthonormalization.
    pub fn reorthonormalizations(&self) -> u32 {
        self.reorthonormalizations
    }

    /// Orthonormal frame of `E_k`, columns in the order they were drawn.
    pub fn basis_frame(&self) -> Frame {
        Frame::from_columns_unchecked(self.basis.columns(0, self.rank).into_owned())
    }

    /// Orthonormal frame of `E_k^{⊥F_k}`; computed on demand in projected mode.
    pub fn complement_frame(&self) -> Result<Frame> {
        match &self.complement {
            Some(c) => Ok(Frame::from_columns_unchecked(c.clone())),
            None => {
                let f = Frame::coordinate(self.ambient_dim(), 0..self.trial_dim)?;
                orthonormal_complement(&self.basis_frame(), &f)
            }
        }
    }

    /// Full invariant audit: orthonormality of both frames, their mutual
    /// orthogonality and that together they span `F_k`. Returns the worst
    /// deviation found.
    pub fn invariant_deviation(&self) -> Result<f64> {
        let e = self.basis_frame();
        let c = self.complement_frame()?;
        let mut worst = e.gram_deviation().max(c.gram_deviation()).max(e.overlap(&c));
        if e.rank() + c.rank() != self.trial_dim {
            return Ok(f64::INFINITY);
        }
        // Both frames must vanish outside the first n_k coordinates.
        for frame in [&e, &c] {
            for j in 0..frame.rank() {
                let col = column_slice(frame.columns(), j);
                let leak = col[self.trial_dim..].iter().map(|z| z.norm()).fold(0.0, f64::max);
                worst = worst.max(leak);
            }
        }
        Ok(worst)
    }

    /// `W_k(v) = v - P_{E_k} v` for a vector of the ambient dimension.
    pub fn residual(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if v.dim() != self.ambient_dim() {
            return Err(Error::invalid(format!(
                "vector dimension {} does not match ambient dimension {}",
                v.dim(),
                self.ambient_dim()
            )));
        }
        let mut w = v.as_dvector().clone();
        let len = v.support_end().max(self.trial_dim);
        orthogonalize_against(w.as_mut_slice(), &self.basis, self.rank, len);
        Ok(ComplexVector::from_dvector(w))
    }

    /// Advances from `E_k` to `E_{k+1}`.
    pub fn advance(&mut self, schedule: &DimensionSchedule, stream: &mut RandomStream) -> Result<()> {
        if schedule.horizon() != self.horizon || schedule.ambient_dim() as usize != self.ambient_dim() {
            return Err(Error::invalid("schedule does not match the state it drives"));
        }
        if self.step >= self.horizon {
            return Err(Error::precondition(format!("state already at horizon K = {}", self.horizon)));
        }
        let k = self.step;
        let next_dim = schedule.n(k + 1) as usize;
        let delta = schedule.delta_m(k) as usize;
        if self.complement.is_some() {
            self.advance_explicit(next_dim, delta, stream);
        } else {
            self.advance_projected(next_dim, delta, stream);
        }
        self.trial_dim = next_dim;
        self.step += 1;
        debug_assert_eq!(self.rank as u64, schedule.m(self.step));
        Ok(())
    }

    fn advance_explicit(&mut self, next_dim: usize, delta: usize, stream: &mut RandomStream) {
        let old = self.complement.take().expect("explicit mode");
        let grow = next_dim - self.trial_dim;
        // Enlarge with e_{n_k+1}..e_{n_{k+1}}, already orthogonal to F_k.
        let cols = old.ncols();
        let mut c = old.insert_columns(cols, grow, ZERO);
        let base = c.ncols() - grow;
        for j in 0..grow {
            c[(self.trial_dim + j, base + j)] = ONE;
        }
        if delta == 0 {
            self.complement = Some(c);
            return;
        }
        let d = c.ncols();
        let z = CMatrix::from_fn(d, delta, |_, _| stream.complex_normal());
        let qr = HouseholderQr::factor(z);
        // Rotate the complement so its first `delta` columns span the drawn subspace.
        qr.apply_q_right(&mut c);
        let mut fresh = c.columns(0, delta).into_owned();
        fix_phases(&mut fresh, &qr.r_diagonal());
        let rest = c.columns(delta, d - delta).into_owned();
        for j in 0..delta {
            self.basis.set_column(self.rank + j, &fresh.column(j));
        }
        self.rank += delta;
        self.complement = Some(rest);

        let drift = self.fresh_drift(delta, next_dim).max(cross_gram_max(&fresh, self.complement.as_ref().unwrap()));
        if drift > DRIFT_TOL {
            self.reorthonormalize(next_dim);
        }
    }

    fn advance_projected(&mut self, next_dim: usize, delta: usize, stream: &mut RandomStream) {
        if delta == 0 {
            return;
        }
        let mut g = CMatrix::zeros(next_dim, delta);
        for j in 0..delta {
            let col = column_slice_mut(&mut g, j);
            for x in col.iter_mut() {
                *x = stream.complex_normal();
            }
        }
        for j in 0..delta {
            let col = column_slice_mut(&mut g, j);
            orthogonalize_against(col, &self.basis, self.rank, next_dim);
        }
        let qr = HouseholderQr::factor(g);
        let mut fresh = qr.thin_q();
        fix_phases(&mut fresh, &qr.r_diagonal());
        for j in 0..delta {
            let col = column_slice_mut(&mut self.basis, self.rank + j);
            col[..next_dim].copy_from_slice(column_slice(&fresh, j));
        }
        self.rank += delta;
        if self.fresh_drift(delta, next_dim) > DRIFT_TOL {
            self.reorthonormalize(next_dim);
        }
    }

    /// Gram drift of the `delta` newest basis columns against the whole basis;
    /// all columns vanish below row `len`.
    fn fresh_drift(&self, delta: usize, len: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in (self.rank - delta)..self.rank {
            let a = &column_slice(&self.basis, i)[..len];
            for j in 0..=i {
                let b = &column_slice(&self.basis, j)[..len];
                let g: Complex64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }

    /// Re-orthonormalizes `[E | C]` in place, preserving the span of every
    /// leading block of `E` (Householder QR is column-order preserving).
    fn reorthonormalize(&mut self, trial_dim: usize) {
        self.reorthonormalizations += 1;
        let ambient = self.ambient_dim();
        let comp_cols = self.complement.as_ref().map_or(0, |c| c.ncols());
        let mut joint = CMatrix::zeros(trial_dim, self.rank + comp_cols);
        for j in 0..self.rank {
            joint.column_mut(j).copy_from(&self.basis.column(j).rows(0, trial_dim));
        }
        if let Some(c) = &self.complement {
            for j in 0..comp_cols {
                joint.column_mut(self.rank + j).copy_from(&c.column(j).rows(0, trial_dim));
            }
        }
        let qr = HouseholderQr::factor(joint);
        let mut q = qr.thin_q();
        fix_phases(&mut q, &qr.r_diagonal());
        for j in 0..self.rank {
            let col = column_slice_mut(&mut self.basis, j);
            col[..trial_dim].copy_from_slice(column_slice(&q, j));
        }
        if let Some(c) = self.complement.as_mut() {
            let mut fresh = CMatrix::zeros(ambient, comp_cols);
            for j in 0..comp_cols {
                column_slice_mut(&mut fresh, j)[..trial_dim].copy_from_slice(column_slice(&q, self.rank + j));
            }
            *c = fresh;
        }
    }
}

/// Removes from `v[..len]` its components along the first `rank` columns of
/// `basis` (classical Gram–Schmidt, two passes).
fn orthogonalize_against(v: &mut [Complex64], basis: &CMatrix, rank: usize, len: usize) {
    for _ in 0..2 {
        for c in 0..rank {
            let col = &column_slice(basis, c)[..len];
            let s: Complex64 = col.iter().zip(v[..len].iter()).map(|(a, b)| a.conj() * b).sum();
            if s != ZERO {
                for (x, a) in v[..len].iter_mut().zip(col) {
                    *x -= s * a;
                }
            }
        }
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// A test vector prepared for a schedule: padded to `n_K` and located in its shell.
#[derive(Clone, Debug)]
pub struct Probe {
    pub vector: ComplexVector,
    /// Smallest `i` with `v ∈ F_i`.
    pub shell: usize,
    /// Whether `v` lies in the orthogonal complement of `F_{i-1}` in `F_i`.
    pub shell_aligned: bool,
}

impl Probe {
    pub fn new(schedule: &DimensionSchedule, v: &ComplexVector) -> Result<Self> {
        let ambient = schedule.ambient_dim() as usize;
        if v.dim() > ambient {
            return Err(Error::invalid(format!(
                "test vector of dimension {} lies outside F_K (n_K = {ambient})",
                v.dim()
            )));
        }
        let vector = v.padded(ambient)?;
        let end = vector.support_end() as u64;
        let shell = if end == 0 { 1 } else { schedule.shell_of(end).expect("support within n_K") };
        let lower = schedule.n(shell - 1) as usize;
        let shell_aligned = vector.coords()[..lower].iter().all(|z| z.norm_sqr() == 0.0);
        Ok(Self { vector, shell, shell_aligned })
    }
}

/// The shell-aligned basis vectors `e_{n_{i-1}+1}`, one per nonempty shell.
pub fn default_test_vectors(schedule: &DimensionSchedule) -> Vec<ComplexVector> {
    let ambient = schedule.ambient_dim() as usize;
    (1..=schedule.horizon())
        .filter(|&i| schedule.n(i) > schedule.n(i - 1))
        .map(|i| ComplexVector::basis(ambient, schedule.n(i - 1) as usize).expect("in range"))
        .collect()
}

/// `‖W_k(v)‖²` along one realization, for `k = shell..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTrajectory {
    pub shell: usize,
    pub shell_aligned: bool,
    pub norm_sqr: f64,
    pub observed: Vec<f64>,
    /// `‖v‖² ∏_{j=shell}^{k}(1 - r_j)`: the exact mean when shell-aligned, an
    /// upper bound otherwise.
    pub predicted: Vec<f64>,
}

impl ResidualTrajectory {
    pub fn at(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.shell).and_then(|i| self.observed.get(i)).copied()
    }

    pub fn predicted_at(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.shell).and_then(|i| self.predicted.get(i)).copied()
    }
}

fn predicted_curve(schedule: &DimensionSchedule, probe: &Probe) -> Vec<f64> {
    let mut acc = probe.vector.norm_sqr();
    (probe.shell..=schedule.horizon())
        .map(|k| {
            acc *= schedule.keep_fraction(k);
            acc
        })
        .collect()
}

/// One realization of the process up to `K`, tracking every test vector.
pub fn run_quantum(
    schedule: &DimensionSchedule,
    test_vectors: &[ComplexVector],
    stream: &mut RandomStream,
) -> Result<Vec<ResidualTrajectory>> {
    let probes = test_vectors.iter().map(|v| Probe::new(schedule, v)).collect::<Result<Vec<_>>>()?;
    run_probes(schedule, &probes, ComplementStrategy::for_schedule(schedule), stream)
}

pub(crate) fn run_probes(
    schedule: &DimensionSchedule,
    probes: &[Probe],
    strategy: ComplementStrategy,
    stream: &mut RandomStream,
) -> Result<Vec<ResidualTrajectory>> {
    let mut state = MatryoshkaState::new(schedule, strategy)?;
    let mut out: Vec<ResidualTrajectory> = probes
        .iter()
        .map(|p| ResidualTrajectory {
            shell: p.shell,
            shell_aligned: p.shell_aligned,
            norm_sqr: p.vector.norm_sqr(),
            observed: Vec::with_capacity(schedule.horizon() + 1 - p.shell),
            predicted: predicted_curve(schedule, p),
        })
        .collect();
    // Residuals are carried forward: W_k(v) = W_{k-1}(v) minus its part on the new directions.
    let mut residuals: Vec<DVector<Complex64>> = probes.iter().map(|p| p.vector.as_dvector().clone()).collect();
    for k in 1..=schedule.horizon() {
        let before = state.rank;
        let rebuilt = state.reorthonormalizations;
        state.advance(schedule, stream)?;
        if state.reorthonormalizations != rebuilt {
            // The basis was rebuilt; recompute from scratch rather than incrementally.
            for (w, p) in residuals.iter_mut().zip(probes) {
                *w = state.residual(&p.vector)?.as_dvector().clone();
            }
        } else {
            let len = state.trial_dim;
            for w in residuals.iter_mut() {
                for _ in 0..2 {
                    for c in before..state.rank {
                        let col = &column_slice(&state.basis, c)[..len];
                        let s: Complex64 = col.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
                        for (x, a) in w.as_mut_slice()[..len].iter_mut().zip(col) {
                            *x -= s * a;
                        }
                    }
                }
            }
        }
        for (traj, w) in out.iter_mut().zip(&residuals) {
            if k >= traj.shell {
                traj.observed.push(norm_sqr(w.as_slice()));
            }
        }
    }
    Ok(out)
}

/// Trajectories of many independent realizations, in trial order.
#[derive(Clone, Debug)]
pub struct QuantumRun {
    pub trials: Vec<Vec<ResidualTrajectory>>,
    pub draws: u64,
}

impl QuantumRun {
    /// Moments of `‖W_k(v)‖²` across trials for test vector `index`.
    pub fn moments(&self, index: usize, k: usize) -> OnlineMoments {
        self.trials.iter().filter_map(|t| t[index].at(k)).collect()
    }
}

/// Runs `trials` independent realizations; trial `t` uses `base.child(t)`.
pub fn run_quantum_trials(
    schedule: &DimensionSchedule,
    test_vectors: &[ComplexVector],
    trials: usize,
    base: &RandomStream,
) -> Result<QuantumRun> {
    run_quantum_trials_with(schedule, test_vectors, trials, base, ComplementStrategy::for_schedule(schedule))
}

pub fn run_quantum_trials_with(
    schedule: &DimensionSchedule,
    test_vectors: &[ComplexVector],
    trials: usize,
    base: &RandomStream,
    strategy: ComplementStrategy,
) -> Result<QuantumRun> {
    let probes = test_vectors.iter().map(|v| Probe::new(schedule, v)).collect::<Result<Vec<_>>>()?;
    let results: Vec<(Vec<ResidualTrajectory>, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut stream = base.child(t);
            let traj = run_probes(schedule, &probes, strategy, &mut stream)?;
            Ok((traj, stream.draws()))
        })
        .collect::<Result<_>>()?;
    let draws = results.iter().map(|(_, d)| d).sum();
    Ok(QuantumRun { trials: results.into_iter().map(|(t, _)| t).collect(), draws })
}

/// Result of repeating one step from a frozen state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalCheck {
    /// The step `k` being drawn.
    pub step: usize,
    /// `‖W_{k-1}(v)‖²` in the frozen state.
    pub prior: f64,
    /// `‖W_{k-1}(v)‖² (1 - r_k)`.
    pub predicted: f64,
    pub empirical: Estimate,
}

/// Draws step `k = state.step() + 1` `trials` times from the same frozen
/// state and compares the mean of `‖W_k(v)‖²` with its one-step prediction.
pub fn conditional_check(
    state: &MatryoshkaState,
    v: &ComplexVector,
    schedule: &DimensionSchedule,
    trials: usize,
    stream: &RandomStream,
) -> Result<ConditionalCheck> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if state.step() >= state.horizon() {
        return Err(Error::precondition("frozen state is already at the horizon"));
    }
    let k = state.step() + 1;
    let probe = Probe::new(schedule, v)?;
    if probe.shell > k {
        return Err(Error::precondition(format!("test vector lies in shell {} beyond step {k}", probe.shell)));
    }
    let prior = state.residual(&probe.vector)?.norm_sqr();
    let predicted = prior * schedule.keep_fraction(k);
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut s = stream.child(t);
            let mut next = state.clone();
            next.advance(schedule, &mut s)?;
            Ok(next.residual(&probe.vector)?.norm_sqr())
        })
        .collect::<Result<_>>()?;
    let moments: OnlineMoments = samples.into_iter().collect();
    Ok(ConditionalCheck { step: k, prior, predicted, empirical: Estimate::from(&moments) })
}

/// Seeded realization of the process stopped at step `k`.
pub fn frozen_state(schedule: &DimensionSchedule, k: usize, stream: &mut RandomStream) -> Result<MatryoshkaState> {
    if k > schedule.horizon() {
        return Err(Error::invalid(format!("step {k} beyond horizon {}", schedule.horizon())));
    }
    let mut state = init(schedule)?;
    for _ in 0..k {
        state.advance(schedule, stream)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling(k: usize) -> DimensionSchedule {
        DimensionSchedule::new(ScheduleSpec::doubling(), k).unwrap()
    }

    #[test]
    fn shareable_across_threads() {
        fn check<T: Send + Sync>() {}
        check::<MatryoshkaState>();
        check::<Frame>();
    }

    #[test]
    fn init_state() {
        let s = doubling(3);
        let st = init(&s).unwrap();
        assert_eq!((st.step(), st.rank(), st.trial_dim(), st.ambient_dim()), (0, 0, 0, 6));
        let one = init(&doubling(1)).unwrap();
        assert_eq!(one.ambient_dim(), 2);
        let e = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![3, 5, 9], m: vec![1, 1, 2] }, 3).unwrap();
        assert_eq!(init(&e).unwrap().ambient_dim(), 9);
    }

    #[test]
    fn invariants_hold_along_a_run_in_both_modes() {
        let s = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![3, 3, 7, 10, 10], m: vec![1, 2, 2, 6, 10] }, 5)
            .unwrap();
        for strategy in [ComplementStrategy::Explicit, ComplementStrategy::Projected] {
            let mut rng = RandomStream::new(1, 0);
            let mut st = MatryoshkaState::new(&s, strategy).unwrap();
            for k in 1..=5 {
                st.advance(&s, &mut rng).unwrap();
                assert_eq!(st.rank() as u64, s.m(k));
                assert!(st.invariant_deviation().unwrap() < 1e-10, "{strategy:?} step {k}");
            }
            assert!(matches!(st.advance(&s, &mut rng), Err(Error::Precondition(_))));
            // Forced fill at the last step: complement is empty.
            assert_eq!(st.complement_frame().unwrap().rank(), 0);
        }
    }

    #[test]
    fn no_new_directions_leaves_basis_unchanged() {
        let s = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![2, 4], m: vec![1, 1] }, 2).unwrap();
        let mut rng = RandomStream::new(2, 0);
        let mut st = init(&s).unwrap();
        st.advance(&s, &mut rng).unwrap();
        let before = st.basis_frame();
        st.advance(&s, &mut rng).unwrap();
        assert_eq!(before.columns(), st.basis_frame().columns());
        assert_eq!(st.complement_frame().unwrap().rank(), 3);
    }

    #[test]
    fn trajectories_are_monotone_and_bounded() {
        let s = doubling(6);
        let mut rng = RandomStream::new(3, 0);
        let mut vs = default_test_vectors(&s);
        vs.push(ComplexVector::from_real(&[0.3, -0.2, 0.5, 0.1]).unwrap());
        for _ in 0..50 {
            for t in run_quantum(&s, &vs, &mut rng).unwrap() {
                assert!(t.observed.windows(2).all(|w| w[1] <= w[0] + 1e-10));
                assert!(t.observed.iter().all(|&x| (0.0..=t.norm_sqr + 1e-12).contains(&x)));
            }
        }
    }

    #[test]
    fn realized_vectors_are_absorbed() {
        // Full fill at step 2 absorbs every vector of F_2.
        let s = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![2, 3, 5], m: vec![1, 3, 3] }, 3).unwrap();
        let mut rng = RandomStream::new(4, 0);
        let v = ComplexVector::from_real(&[0.6, 0.0, 0.8]).unwrap();
        let t = &run_quantum(&s, &[v], &mut rng).unwrap()[0];
        assert_eq!(t.shell, 2);
        assert!(!t.shell_aligned);
        assert!(t.observed.iter().all(|&x| x < 1e-10));
    }

    #[test]
    fn outside_vectors_are_rejected() {
        let s = doubling(2);
        let mut rng = RandomStream::new(5, 0);
        let v = ComplexVector::basis(5, 4).unwrap();
        assert!(matches!(run_quantum(&s, &[v], &mut rng), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn probes_locate_shells() {
        let s = doubling(3);
        let p = Probe::new(&s, &ComplexVector::basis(6, 2).unwrap()).unwrap();
        assert_eq!((p.shell, p.shell_aligned), (2, true));
        let p = Probe::new(&s, &ComplexVector::from_real(&[1.0, 0.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        assert_eq!((p.shell, p.shell_aligned), (3, false));
        assert_eq!(default_test_vectors(&s).len(), 3);
    }

    #[test]
    fn orthogonal_decomposition_along_the_run() {
        let s = doubling(8);
        let mut rng = RandomStream::new(6, 0);
        let v = ComplexVector::from_real(&[0.5, 0.1, -0.3, 0.2, 0.7, 0.0, 0.1, -0.2]).unwrap().padded(16).unwrap();
        let mut st = init(&s).unwrap();
        let mut prev_u = ComplexVector::zeros(16);
        let mut sum_v = 0.0;
        for _ in 0..8 {
            st.advance(&s, &mut rng).unwrap();
            let u = crate::grassmann::project(&v, &st.basis_frame()).unwrap();
            let dv: Vec<Complex64> = u.coords().iter().zip(prev_u.coords()).map(|(a, b)| a - b).collect();
            sum_v += norm_sqr(&dv);
            let w = st.residual(&v).unwrap().norm_sqr();
            assert!(((w + sum_v) - v.norm_sqr()).abs() < 1e-8 * v.norm_sqr());
            prev_u = u;
        }
    }

    #[test]
    fn conditional_check_edge_cases() {
        let forced = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![3, 4], m: vec![1, 4] }, 2).unwrap();
        let mut rng = RandomStream::new(7, 0);
        let st = frozen_state(&forced, 1, &mut rng).unwrap();
        let v = ComplexVector::basis(4, 0).unwrap();
        let c = conditional_check(&st, &v, &forced, 50, &RandomStream::new(7, 1)).unwrap();
        assert_eq!(c.predicted, 0.0);
        assert!(c.empirical.mean < 1e-20);

        let idle = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![3, 4], m: vec![1, 1] }, 2).unwrap();
        let st = frozen_state(&idle, 1, &mut rng).unwrap();
        let c = conditional_check(&st, &v, &idle, 50, &RandomStream::new(7, 2)).unwrap();
        assert!((c.empirical.mean - c.prior).abs() < 1e-14);
        assert_eq!(c.empirical.stderr.unwrap(), 0.0);

        let done = frozen_state(&idle, 2, &mut rng).unwrap();
        assert!(matches!(conditional_check(&done, &v, &idle, 5, &rng), Err(Error::Precondition(_))));
        assert!(conditional_check(&st, &v, &idle, 0, &rng).is_err());
    }

    #[test]
    fn explicit_and_projected_modes_agree_in_law() {
        let s = DimensionSchedule::new(ScheduleSpec::Explicit { n: vec![3, 6, 9, 12], m: vec![1, 3, 4, 6] }, 4).unwrap();
        let v = vec![ComplexVector::from_real(&[0.0, 0.6, 0.0, 0.8]).unwrap()];
        let a = run_quantum_trials_with(&s, &v, 20_000, &RandomStream::new(8, 0), ComplementStrategy::Explicit).unwrap();
        let b = run_quantum_trials_with(&s, &v, 20_000, &RandomStream::new(8, 1), ComplementStrategy::Projected).unwrap();
        for k in 2..=4 {
            let (ma, mb) = (a.moments(0, k), b.moments(0, k));
            let se = (ma.standard_error().unwrap().powi(2) + mb.standard_error().unwrap().powi(2)).sqrt();
            assert!((ma.mean() - mb.mean()).abs() < 4.0 * se, "k = {k}");
        }
    }

    #[test]
    fn trial_runs_are_reproducible() {
        let s = doubling(4);
        let v = default_test_vectors(&s);
        let a = run_quantum_trials(&s, &v, 64, &RandomStream::new(9, 0)).unwrap();
        let b = run_quantum_trials(&s, &v, 64, &RandomStream::new(9, 0)).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.draws, b.draws);
        assert!(a.draws > 0);
    }
}
