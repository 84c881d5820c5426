//! Dense complex kernels: Householder QR and orthonormality checks.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One elementary reflector `H = I - tau v v^H`, acting on coordinates `offset..`.
#[derive(Clone, Debug)]
struct Reflector {
    offset: usize,
    v: Vec<Complex64>,
    tau: f64,
}

impl Reflector {
    fn apply_to_column(&self, col: &mut [Complex64]) {
        if self.tau == 0.0 {
            return;
        }
        let tail = &mut col[self.offset..];
        let s: Complex64 = self.v.iter().zip(tail.iter()).map(|(v, x)| v.conj() * x).sum();
        let s = s * self.tau;
        for (x, v) in tail.iter_mut().zip(&self.v) {
            *x -= s * v;
        }
    }

    /// `c <- c H` for a column-major `c` whose column count matches the reflector's space.
    fn apply_right(&self, c: &mut CMatrix) {
        if self.tau == 0.0 {
            return;
        }
        let nrows = c.nrows();
        let mut w = vec![ZERO; nrows];
        for (j, vj) in self.v.iter().enumerate() {
            let col = column_slice(c, self.offset + j);
            for (wi, ci) in w.iter_mut().zip(col) {
                *wi += ci * vj;
            }
        }
        for (j, vj) in self.v.iter().enumerate() {
            let f = vj.conj() * self.tau;
            let col = column_slice_mut(c, self.offset + j);
            for (ci, wi) in col.iter_mut().zip(&w) {
                *ci -= wi * f;
            }
        }
    }
}

/// Householder QR factorization `A = Q R` of a complex matrix.
///
/// `Q` is kept in factored form as a product of reflectors, so it can be applied
/// in full (square) or thin form without materializing it.
#[derive(Clone, Debug)]
pub struct HouseholderQr {
    rows: usize,
    reflectors: Vec<Reflector>,
    r: CMatrix,
}

impl HouseholderQr {
    pub fn factor(mut a: CMatrix) -> Self {
        let (rows, cols) = a.shape();
        let p = rows.min(cols);
        let mut reflectors = Vec::with_capacity(p);
        for j in 0..p {
            let x: Vec<Complex64> = a.column(j).iter().skip(j).copied().collect();
            let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                reflectors.push(Reflector { offset: j, v: x, tau: 0.0 });
                continue;
            }
            let alpha = x[0];
            let phase = if alpha.norm() > 0.0 { alpha / alpha.norm() } else { Complex64::new(1.0, 0.0) };
            let beta = -phase * norm;
            let mut v = x;
            v[0] -= beta;
            let vnorm2 = 2.0 * norm * (norm + alpha.norm());
            let h = Reflector { offset: j, v, tau: 2.0 / vnorm2 };
            for c in j..cols {
                h.apply_to_column(column_slice_mut(&mut a, c));
            }
            // Clean the annihilated entries.
            a[(j, j)] = beta;
            for i in (j + 1)..rows {
                a[(i, j)] = ZERO;
            }
            reflectors.push(h);
        }
        for j in 0..cols {
            for i in (j + 1)..rows {
                a[(i, j)] = ZERO;
            }
        }
        Self { rows, reflectors, r: a }
    }

    /// Upper-trapezoidal factor, same shape as the input.
    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    pub fn r_diagonal(&self) -> Vec<Complex64> {
        (0..self.reflectors.len()).map(|j| self.r[(j, j)]).collect()
    }

    /// `b <- Q b`.
    pub fn apply_q(&self, b: &mut CMatrix) {
        assert_eq!(b.nrows(), self.rows);
        for c in 0..b.ncols() {
            let col = column_slice_mut(b, c);
            for h in self.reflectors.iter().rev() {
                h.apply_to_column(col);
            }
        }
    }

    /// `b <- Q^H b`.
    pub fn apply_q_adjoint(&self, b: &mut CMatrix) {
        assert_eq!(b.nrows(), self.rows);
        for c in 0..b.ncols() {
            let col = column_slice_mut(b, c);
            for h in &self.reflectors {
                h.apply_to_column(col);
            }
        }
    }

    /// `c <- c Q` where `Q` is the full square factor.
    pub fn apply_q_right(&self, c: &mut CMatrix) {
        assert_eq!(c.ncols(), self.rows);
        for h in &self.reflectors {
            h.apply_right(c);
        }
    }

    /// The first `k` columns of the square factor `Q`.
    pub fn q_columns(&self, k: usize) -> CMatrix {
        assert!(k <= self.rows);
        let mut q = CMatrix::identity(self.rows, k);
        self.apply_q(&mut q);
        q
    }

    /// Thin `Q` (rows × min(rows, cols)).
    pub fn thin_q(&self) -> CMatrix {
        self.q_columns(self.reflectors.len())
    }
}

/// Max-entry magnitude of `M^H M - I`.
pub fn gram_deviation(m: &CMatrix) -> f64 {
    let k = m.ncols();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in i..k {
            let g = m.column(i).dotc(&m.column(j));
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).norm());
        }
    }
    worst
}

/// Max-entry magnitude of `A^H B`.
pub fn cross_gram_max(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.ncols() {
        for j in 0..b.ncols() {
            worst = worst.max(a.column(i).dotc(&b.column(j)).norm());
        }
    }
    worst
}

/// Multiplies each column `j` of `q` by the phase of `diag[j]`, making the
/// matching diagonal of `R` real and positive.
pub fn fix_phases(q: &mut CMatrix, diag: &[Complex64]) {
    for (j, d) in diag.iter().enumerate().take(q.ncols()) {
        let n = d.norm();
        if n > 0.0 {
            let phase = d / n;
            for x in column_slice_mut(q, j) {
                *x *= phase;
            }
        }
    }
}

pub(crate) fn column_slice(m: &CMatrix, c: usize) -> &[Complex64] {
    let r = m.nrows();
    &m.as_slice()[c * r..(c + 1) * r]
}

pub(crate) fn column_slice_mut(m: &mut CMatrix, c: usize) -> &mut [Complex64] {
    let r = m.nrows();
    &mut m.as_mut_slice()[c * r..(c + 1) * r]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::RandomStream;

    fn gaussian(rows: usize, cols: usize, s: &mut RandomStream) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| s.complex_normal())
    }

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn reconstructs_tall_and_wide_inputs() {
        let mut s = RandomStream::new(3, 0);
        for &(r, c) in &[(6, 3), (5, 5), (3, 7), (1, 1), (9, 1)] {
            let a = gaussian(r, c, &mut s);
            let qr = HouseholderQr::factor(a.clone());
            let q = qr.q_columns(r);
            assert!(gram_deviation(&q) < 1e-13);
            let back = &q * qr.r();
            assert!(max_abs(&(back - &a)) < 1e-12, "{r}x{c}");
        }
    }

    #[test]
    fn right_application_matches_dense_product() {
        let mut s = RandomStream::new(4, 0);
        let qr = HouseholderQr::factor(gaussian(6, 2, &mut s));
        let c = gaussian(4, 6, &mut s);
        let mut lazy = c.clone();
        qr.apply_q_right(&mut lazy);
        let dense = &c * qr.q_columns(6);
        assert!(max_abs(&(lazy - dense)) < 1e-12);
    }

    #[test]
    fn adjoint_inverts_q() {
        let mut s = RandomStream::new(5, 0);
        let qr = HouseholderQr::factor(gaussian(5, 3, &mut s));
        let b = gaussian(5, 2, &mut s);
        let mut x = b.clone();
        qr.apply_q(&mut x);
        qr.apply_q_adjoint(&mut x);
        assert!(max_abs(&(x - b)) < 1e-13);
    }

    #[test]
    fn zero_column_is_tolerated() {
        let mut a = CMatrix::zeros(4, 2);
        a[(1, 1)] = Complex64::new(0.0, 2.0);
        let qr = HouseholderQr::factor(a.clone());
        let q = qr.q_columns(4);
        assert!(gram_deviation(&q) < 1e-14);
        assert!(max_abs(&(&q * qr.r() - a)) < 1e-14);
    }

    #[test]
    fn phase_fix_makes_diagonal_positive() {
        let mut s = RandomStream::new(6, 0);
        let qr = HouseholderQr::factor(gaussian(4, 4, &mut s));
        let diag = qr.r_diagonal();
        let mut q = qr.thin_q();
        fix_phases(&mut q, &diag);
        // R' = Lambda^H R has diagonal |r_jj|.
        let r_fixed = q.adjoint() * (qr.thin_q() * qr.r());
        for j in 0..4 {
            assert!(r_fixed[(j, j)].im.abs() < 1e-12);
            assert!(r_fixed[(j, j)].re > 0.0);
        }
    }
}
