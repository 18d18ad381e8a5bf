//! Dense complex linear algebra used by every detector.
//!
//! Everything here is a pure function of its inputs. Matrices are
//! [`ComplexMatrix`] values, a thin finite-checked wrapper around
//! `nalgebra::DMatrix<Complex64>`; the eigen and singular-value kernels are
//! nalgebra's.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub(crate) type CMat = DMatrix<C64>;

/// Relative singular-value floor below which a basis counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Relative tolerance on `‖K − Kᴴ‖_F / ‖K‖_F` accepted by the Hermitian routines.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Dense complex matrix with all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(CMat);

impl ComplexMatrix {
    pub fn new(inner: DMatrix<C64>) -> Result<Self> {
        if inner.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{}x{} matrix",
                inner.nrows(),
                inner.ncols()
            )));
        }
        Ok(ComplexMatrix(inner))
    }

    /// Wraps a matrix produced by arithmetic on finite inputs. Non-finite
    /// results (overflow) are still rejected.
    pub(crate) fn wrap(inner: CMat) -> Result<Self> {
        Self::new(inner)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix(CMat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        ComplexMatrix(CMat::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        Self::new(CMat::from_fn(rows, cols, f))
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[C64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("row-major data length", rows * cols, data.len()));
        }
        Self::new(CMat::from_row_slice(rows, cols, data))
    }

    /// Real diagonal matrix.
    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&d| C64::new(d, 0.0)));
        Self::new(CMat::from_diagonal(&v))
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        ComplexMatrix(self.0.adjoint())
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.0)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scaled(&self, c: f64) -> ComplexMatrix {
        ComplexMatrix(self.0.map(|z| z * c))
    }

    pub fn scaled_complex(&self, c: C64) -> ComplexMatrix {
        ComplexMatrix(self.0.map(|z| z * c))
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::dim("matrix product inner dimension", self.cols(), rhs.rows()));
        }
        ComplexMatrix::wrap(&self.0 * &rhs.0)
    }

    /// Stacks the blocks vertically; all must share a column count.
    pub fn vstack(blocks: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
        let cols = blocks.first().map(|b| b.cols()).unwrap_or(0);
        if let Some(b) = blocks.iter().find(|b| b.cols() != cols) {
            return Err(Error::dim("vstack column count", cols, b.cols()));
        }
        let rows: usize = blocks.iter().map(|b| b.rows()).sum();
        let mut out = CMat::zeros(rows, cols);
        let mut r0 = 0;
        for b in blocks {
            out.view_mut((r0, 0), (b.rows(), cols)).copy_from(&b.0);
            r0 += b.rows();
        }
        Ok(ComplexMatrix(out))
    }

    /// `‖K − Kᴴ‖_F`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        if self.rows() != self.cols() {
            return f64::INFINITY;
        }
        frobenius(&(&self.0 - self.0.adjoint()))
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Deref for ComplexMatrix {
    type Target = DMatrix<C64>;

    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

pub(crate) fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Re tr(A B)` without forming the product.
pub(crate) fn trace_of_product(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

fn symmetrize(k: &CMat) -> CMat {
    (k + k.adjoint()).map(|z| z * 0.5)
}

fn check_hermitian(k: &ComplexMatrix) -> Result<()> {
    if k.rows() != k.cols() {
        return Err(Error::dim("Hermitian matrix must be square", k.rows(), k.cols()));
    }
    let norm = k.frobenius_norm();
    let asymmetry = k.hermitian_asymmetry();
    let tolerance = HERMITIAN_TOLERANCE * norm.max(f64::MIN_POSITIVE);
    if asymmetry > tolerance && asymmetry > 0.0 {
        return Err(Error::NotHermitian {
            asymmetry,
            tolerance,
        });
    }
    Ok(())
}

/// Rotates each column so its first non-negligible entry is real and positive.
pub(crate) fn normalize_column_phases(v: &mut CMat) {
    for mut col in v.column_iter_mut() {
        let peak = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        if let Some(lead) = col.iter().find(|z| z.norm() > 1e-10 * peak).copied() {
            let phase = lead.conj() / lead.norm();
            col.iter_mut().for_each(|z| *z *= phase);
        }
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `n` pairs with `eigenvalues[n]`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Sum of the `j` largest eigenvalues.
    pub fn top_energy(&self, j: usize) -> f64 {
        self.eigenvalues.iter().take(j).sum()
    }

    /// Sum of the eigenvalues after the `j` largest.
    pub fn subdominant_energy(&self, j: usize) -> f64 {
        self.eigenvalues.iter().skip(j).sum()
    }

    /// Eigenvectors of the `j` largest eigenvalues.
    pub fn dominant_basis(&self, j: usize) -> ComplexMatrix {
        ComplexMatrix(self.eigenvectors.columns(0, j.min(self.dim())).into_owned())
    }

    /// `U Λ Uᴴ`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let u = &self.eigenvectors.0;
        let mut scaled = u.clone();
        for (mut col, &lam) in scaled.column_iter_mut().zip(&self.eigenvalues) {
            col.iter_mut().for_each(|z| *z *= lam);
        }
        ComplexMatrix(scaled * u.adjoint())
    }
}

pub fn hermitian_eig(k: &ComplexMatrix) -> Result<HermitianEig> {
    check_hermitian(k)?;
    Ok(hermitian_eig_unchecked(&k.0))
}

pub(crate) fn hermitian_eig_unchecked(k: &CMat) -> HermitianEig {
    let n = k.nrows();
    if n == 0 {
        return HermitianEig {
            eigenvalues: Vec::new(),
            eigenvectors: ComplexMatrix::zeros(0, 0),
        };
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(k));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    normalize_column_phases(&mut vectors);
    HermitianEig {
        eigenvalues,
        eigenvectors: ComplexMatrix(vectors),
    }
}

/// Inverse of a Hermitian positive-definite matrix.
pub(crate) fn hpd_inverse(a: &CMat, what: &str) -> Result<CMat> {
    let chol = nalgebra::Cholesky::new(symmetrize(a))
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    let inv = chol.inverse();
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular(format!("{what} inverse is not finite")));
    }
    Ok(symmetrize(&inv))
}

/// Checks that `b` has full column rank relative to [`RANK_TOLERANCE`].
pub(crate) fn check_full_column_rank(b: &CMat, what: &str) -> Result<()> {
    let cols = b.ncols();
    if cols == 0 {
        return Err(Error::Singular(format!("{what} has no columns")));
    }
    if b.nrows() < cols {
        return Err(Error::Singular(format!(
            "{what} has {cols} columns but only {} rows",
            b.nrows()
        )));
    }
    let sv = b.clone().svd(false, false).singular_values;
    let largest = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > RANK_TOLERANCE * largest).count();
    if largest == 0.0 || rank < cols {
        return Err(Error::Singular(format!(
            "{what} is rank deficient: numerical rank {rank} < {cols} columns"
        )));
    }
    Ok(())
}

/// Orthogonal projector onto the column span of `b`: `B (BᴴB)⁻¹ Bᴴ`.
pub fn orth_projection(b: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(ComplexMatrix(projection_unchecked(&b.0, "projection basis")?))
}

pub(crate) fn projection_unchecked(b: &CMat, what: &str) -> Result<CMat> {
    check_full_column_rank(b, what)?;
    let gram_inv = hpd_inverse(&(b.adjoint() * b), what)?;
    let p = b * gram_inv * b.adjoint();
    Ok(symmetrize(&p))
}

/// `X / σ`.
pub fn whiten(x: &ComplexMatrix, sigma: f64) -> Result<ComplexMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("whitening scale must be positive, got {sigma}")));
    }
    Ok(x.scaled(1.0 / sigma))
}

/// `S_ij / (σ_i σ_j)` for a (cross-)covariance block.
pub fn whiten_covariance(s_ij: &ComplexMatrix, sigma_i: f64, sigma_j: f64) -> Result<ComplexMatrix> {
    for s in [sigma_i, sigma_j] {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!("whitening scale must be positive, got {s}")));
        }
    }
    Ok(s_ij.scaled(1.0 / (sigma_i * sigma_j)))
}

/// Extremes of the Rayleigh quotient `gᴴTg / gᴴg`.
#[derive(Clone, Debug)]
pub struct RayleighExtremes {
    pub min: f64,
    pub max: f64,
    pub argmin: DVector<C64>,
    pub argmax: DVector<C64>,
}

pub fn rayleigh_extremes(t: &ComplexMatrix) -> Result<RayleighExtremes> {
    let eig = hermitian_eig(t)?;
    let n = eig.dim();
    if n == 0 {
        return Err(Error::Domain("empty matrix has no Rayleigh quotient".into()));
    }
    Ok(RayleighExtremes {
        min: eig.eigenvalues[n - 1],
        max: eig.eigenvalues[0],
        argmin: eig.eigenvectors.column(n - 1).into_owned(),
        argmax: eig.eigenvectors.column(0).into_owned(),
    })
}

/// `gᴴTg / gᴴg`.
pub fn rayleigh_quotient(t: &ComplexMatrix, g: &DVector<C64>) -> f64 {
    let num = g.dotc(&(&t.0 * g)).re;
    num / g.norm_squared()
}

fn check_energy_rank(s: &ComplexMatrix, j: usize) -> Result<()> {
    if s.rows() != s.cols() {
        return Err(Error::dim("covariance must be square", s.rows(), s.cols()));
    }
    if j == 0 || j > s.rows() {
        return Err(Error::Domain(format!(
            "subspace rank {j} outside 1..={}",
            s.rows()
        )));
    }
    Ok(())
}

/// Sum of the `j` dominant eigenvalues of a Hermitian PSD matrix.
pub fn top_j_energy(s: &ComplexMatrix, j: usize) -> Result<f64> {
    check_energy_rank(s, j)?;
    Ok(hermitian_eig(s)?.top_energy(j))
}

/// `trace(S) − top_j_energy(S, j)`, the energy outside the dominant subspace.
pub fn subdominant_energy(s: &ComplexMatrix, j: usize) -> Result<f64> {
    check_energy_rank(s, j)?;
    Ok(hermitian_eig(s)?.subdominant_energy(j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn diagonal_eigenvalues_sorted_descending() {
        let k = ComplexMatrix::from_real_diagonal(&[1.0, 3.0, 2.0]).unwrap();
        let eig = hermitian_eig(&k).unwrap();
        assert_eq!(eig.eigenvalues, vec![3.0, 2.0, 1.0]);
        assert!(eig.reconstruct().max_abs_diff(&k) < 1e-14);
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let eig = hermitian_eig(&ComplexMatrix::identity(3)).unwrap();
        assert!(eig.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        let u = eig.eigenvectors.as_matrix();
        let gram = u.adjoint() * u;
        assert!(ComplexMatrix(gram).max_abs_diff(&ComplexMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn eigenvectors_have_positive_real_lead() {
        let k = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)],
        )
        .unwrap();
        let eig = hermitian_eig(&k).unwrap();
        for col in eig.eigenvectors.column_iter() {
            let lead = col.iter().find(|z| z.norm() > 1e-12).unwrap();
            assert!(lead.im.abs() < 1e-15 && lead.re > 0.0);
        }
    }

    #[test]
    fn rejects_non_square_and_non_hermitian() {
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(hermitian_eig(&rect), Err(Error::Dimension { .. })));
        let skew = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        assert!(matches!(hermitian_eig(&skew), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn non_finite_entries_rejected() {
        let bad = CMat::from_element(2, 2, c(f64::NAN, 0.0));
        assert!(matches!(ComplexMatrix::new(bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn projection_examples() {
        let e1 = ComplexMatrix::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let p = orth_projection(&e1).unwrap();
        let expected = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]).unwrap();
        assert!(p.max_abs_diff(&expected) < 1e-15);

        let ones = ComplexMatrix::from_row_slice(2, 1, &[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let p = orth_projection(&ones).unwrap();
        assert!(p.iter().all(|z| (z - c(0.5, 0.0)).norm() < 1e-15));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = ComplexMatrix::from_row_slice(
            3,
            2,
            &[c(s, 0.0), c(0.0, 0.0), c(0.0, s), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        let p = orth_projection(&b).unwrap();
        let bbh = b.mul(&b.adjoint()).unwrap();
        assert!(p.max_abs_diff(&bbh) < 1e-15);
    }

    #[test]
    fn projection_rejects_rank_deficient() {
        let b = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)],
        )
        .unwrap();
        let err = orth_projection(&b).unwrap_err();
        assert!(matches!(err, Error::Singular(ref m) if m.contains("2 columns")), "{err}");
    }

    #[test]
    fn whiten_examples() {
        let four = ComplexMatrix::identity(3).scaled(4.0);
        let w = whiten_covariance(&four, 2.0, 2.0).unwrap();
        assert!(w.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
        let x = ComplexMatrix::from_row_slice(1, 2, &[c(1.5, -2.0), c(0.25, 3.0)]).unwrap();
        assert_eq!(whiten(&x, 1.0).unwrap(), x);
        assert!(matches!(whiten(&x, 0.0), Err(Error::Domain(_))));
        assert!(matches!(whiten(&x, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn rayleigh_examples() {
        let t = ComplexMatrix::from_real_diagonal(&[2.0, 5.0]).unwrap();
        let r = rayleigh_extremes(&t).unwrap();
        assert_eq!((r.min, r.max), (2.0, 5.0));
        let t = ComplexMatrix::from_real_diagonal(&[1.7, 1.7]).unwrap();
        assert!((rayleigh_extremes(&t).unwrap().min - 1.7).abs() < 1e-15);
    }

    #[test]
    fn energy_examples() {
        let s = ComplexMatrix::from_real_diagonal(&[3.0, 2.0, 1.0]).unwrap();
        assert!((top_j_energy(&s, 2).unwrap() - 5.0).abs() < 1e-14);
        assert!((top_j_energy(&s, 3).unwrap() - 6.0).abs() < 1e-14);
        assert!((subdominant_energy(&s, 2).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(top_j_energy(&s, 0), Err(Error::Domain(_))));
        assert!(matches!(top_j_energy(&s, 4), Err(Error::Domain(_))));

        let v = ComplexMatrix::from_row_slice(3, 1, &[c(1.0, 1.0), c(0.0, -2.0), c(0.5, 0.0)])
            .unwrap();
        let vvh = v.mul(&v.adjoint()).unwrap();
        assert!((top_j_energy(&vvh, 1).unwrap() - v.frobenius_norm().powi(2)).abs() < 1e-13);
    }
}
