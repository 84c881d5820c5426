//! Haar unitaries, unitary-invariant random subspaces and the projection
//! primitives built on explicit orthonormal frames.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{column_slice, cross_gram_max, fix_phases, gram_deviation, CMatrix, HouseholderQr};
use crate::stream::RandomStream;

/// Orthonormality gate for frames.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Containment gate used by [`orthonormal_complement`].
pub const CONTAINMENT_TOL: f64 = 1e-8;

/// A finite complex vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector(DVector<Complex64>);

impl ComplexVector {
    pub fn new(coords: Vec<Complex64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("vector must have positive dimension"));
        }
        if coords.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("vector has non-finite coordinates"));
        }
        Ok(Self(DVector::from_vec(coords)))
    }

    pub fn from_real(coords: &[f64]) -> Result<Self> {
        Self::new(coords.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Standard basis vector `e_{index+1}` (0-based `index`).
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for dimension {dim}")));
        }
        let mut v = DVector::zeros(dim);
        v[index] = Complex64::new(1.0, 0.0);
        Ok(Self(v))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn as_dvector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Complex64 {
        self.0.dotc(&other.0)
    }

    /// Copy padded with zeros (or the same vector) to dimension `dim`.
    pub fn padded(&self, dim: usize) -> Result<Self> {
        if dim < self.dim() {
            return Err(Error::invalid(format!(
                "vector of dimension {} does not fit in dimension {dim}",
                self.dim()
            )));
        }
        let mut v = DVector::zeros(dim);
        v.rows_mut(0, self.dim()).copy_from(&self.0);
        Ok(Self(v))
    }

    /// One past the index of the last nonzero coordinate (0 for the zero vector).
    pub fn support_end(&self) -> usize {
        self.0.iter().rposition(|z| z.norm_sqr() > 0.0).map_or(0, |i| i + 1)
    }

    pub(crate) fn from_dvector(v: DVector<Complex64>) -> Self {
        Self(v)
    }
}

/// An `N × m` array of orthonormal complex columns representing the subspace
/// they span.
#[derive(Clone, Debug)]
pub struct Frame {
    columns: CMatrix,
}

impl Frame {
    /// Wraps `columns`, rejecting them unless they are orthonormal within
    /// [`ORTHONORMALITY_TOL`].
    pub fn from_orthonormal(columns: CMatrix) -> Result<Self> {
        if columns.ncols() > columns.nrows() {
            return Err(Error::invalid("frame rank exceeds ambient dimension"));
        }
        if columns.nrows() == 0 {
            return Err(Error::invalid("frame ambient dimension must be positive"));
        }
        let dev = gram_deviation(&columns);
        if dev > ORTHONORMALITY_TOL {
            return Err(Error::invalid(format!("columns are not orthonormal (Gram deviation {dev:e})")));
        }
        Ok(Self { columns })
    }

    pub(crate) fn from_columns_unchecked(columns: CMatrix) -> Self {
        debug_assert!(columns.ncols() <= columns.nrows());
        Self { columns }
    }

    /// The zero subspace of `C^ambient`.
    pub fn empty(ambient: usize) -> Self {
        Self { columns: CMatrix::zeros(ambient, 0) }
    }

    pub fn identity(ambient: usize) -> Self {
        Self { columns: CMatrix::identity(ambient, ambient) }
    }

    /// Span of the standard basis vectors with 0-based indices in `range`.
    pub fn coordinate(ambient: usize, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > ambient || range.start > range.end {
            return Err(Error::invalid(format!("coordinate range {range:?} outside ambient {ambient}")));
        }
        let mut columns = CMatrix::zeros(ambient, range.len());
        for (j, i) in range.enumerate() {
            columns[(i, j)] = Complex64::new(1.0, 0.0);
        }
        Ok(Self { columns })
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &CMatrix {
        &self.columns
    }

    pub fn into_columns(self) -> CMatrix {
        self.columns
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        ComplexVector(self.columns.column(j).into_owned())
    }

    pub fn gram_deviation(&self) -> f64 {
        gram_deviation(&self.columns)
    }

    /// Max-entry overlap `|⟨a_i, b_j⟩|` between the two frames.
    pub fn overlap(&self, other: &Frame) -> f64 {
        cross_gram_max(&self.columns, &other.columns)
    }

    /// Dense orthogonal projector `E E^H`.
    pub fn projector(&self) -> CMatrix {
        &self.columns * self.columns.adjoint()
    }
}

/// Haar-distributed `n × n` unitary: Ginibre matrix, Householder QR, then the
/// diagonal phase correction that makes `diag(R)` positive.
pub fn sample_haar_unitary(n: usize, stream: &mut RandomStream) -> Result<Frame> {
    if n == 0 {
        return Err(Error::invalid("unitary dimension must be at least 1"));
    }
    let g = CMatrix::from_fn(n, n, |_, _| stream.complex_normal());
    let qr = HouseholderQr::factor(g);
    let diag = qr.r_diagonal();
    let mut q = qr.thin_q();
    fix_phases(&mut q, &diag);
    Ok(Frame::from_columns_unchecked(q))
}

/// Draws an `m`-dimensional subspace of `span(within)` from the
/// unitary-invariant measure, returned in ambient coordinates.
pub fn sample_uniform_subspace(within: &Frame, m: usize, stream: &mut RandomStream) -> Result<Frame> {
    let d = within.rank();
    if m > d {
        return Err(Error::invalid(format!("subspace dimension {m} exceeds host dimension {d}")));
    }
    if m == 0 {
        return Ok(Frame::empty(within.ambient_dim()));
    }
    let coeffs = uniform_coefficients(d, m, stream);
    Ok(Frame::from_columns_unchecked(&within.columns * coeffs))
}

/// `d × m` orthonormal coefficient block of a uniformly random `m`-subspace of `C^d`.
pub(crate) fn uniform_coefficients(d: usize, m: usize, stream: &mut RandomStream) -> CMatrix {
    let g = CMatrix::from_fn(d, m, |_, _| stream.complex_normal());
    let qr = HouseholderQr::factor(g);
    let diag = qr.r_diagonal();
    let mut q = qr.thin_q();
    fix_phases(&mut q, &diag);
    q
}

fn check_dims(v: &ComplexVector, e: &Frame) -> Result<()> {
    if v.dim() != e.ambient_dim() {
        return Err(Error::invalid(format!(
            "vector dimension {} does not match frame ambient dimension {}",
            v.dim(),
            e.ambient_dim()
        )));
    }
    Ok(())
}

/// Orthogonal projection `E (E^H v)` of `v` on `span(E)`.
pub fn project(v: &ComplexVector, e: &Frame) -> Result<ComplexVector> {
    check_dims(v, e)?;
    let coeffs = e.columns.ad_mul(&v.0);
    Ok(ComplexVector(&e.columns * coeffs))
}

/// `v - project(v, E)`.
pub fn residual(v: &ComplexVector, e: &Frame) -> Result<ComplexVector> {
    check_dims(v, e)?;
    Ok(ComplexVector(residual_raw(&v.0, &e.columns)))
}

/// Residual of `v` against the first `rank` columns of `basis`, with one
/// re-orthogonalization pass.
pub(crate) fn residual_raw(v: &DVector<Complex64>, basis: &CMatrix) -> DVector<Complex64> {
    let mut w = v.clone();
    for _ in 0..2 {
        for c in 0..basis.ncols() {
            let col = column_slice(basis, c);
            let s: Complex64 = col.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
            if s != Complex64::new(0.0, 0.0) {
                for (wi, a) in w.iter_mut().zip(col) {
                    *wi -= s * a;
                }
            }
        }
    }
    w
}

/// Orthonormal frame for the orthogonal complement of `span(E)` inside `span(F)`.
pub fn orthonormal_complement(e: &Frame, within: &Frame) -> Result<Frame> {
    if e.ambient_dim() != within.ambient_dim() {
        return Err(Error::invalid("frames live in different ambient spaces"));
    }
    if e.rank() > within.rank() {
        return Err(Error::precondition("subspace has larger rank than its host"));
    }
    // Coordinates of E's columns in F's basis; the norm lost in the round trip
    // measures how far E sticks out of span(F).
    let coords = within.columns.ad_mul(&e.columns);
    let back = &within.columns * &coords;
    let leak = (&e.columns - back).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if leak > CONTAINMENT_TOL {
        return Err(Error::precondition(format!(
            "span(E) is not contained in span(F) (leak {leak:e})"
        )));
    }
    let d = within.rank();
    let m = e.rank();
    if m == d {
        return Ok(Frame::empty(e.ambient_dim()));
    }
    let qr = HouseholderQr::factor(coords);
    let full = qr.q_columns(d);
    let tail = full.columns(m, d - m).into_owned();
    Ok(Frame::from_columns_unchecked(&within.columns * tail))
}
