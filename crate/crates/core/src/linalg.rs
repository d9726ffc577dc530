//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Traces are normalized (`tr I = 1`) everywhere in this crate.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Relative tolerance for accepting a matrix as self-adjoint.
pub const HERMITIAN_RTOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn zeros(d: usize) -> CMatrix {
    CMatrix::zeros(d, d)
}

pub fn from_real(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| c(x, 0.0))
}

pub fn diag(values: &[f64]) -> CMatrix {
    let d = values.len();
    let mut m = zeros(d);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v, 0.0);
    }
    m
}

/// Normalized trace `tr M = (1/d) Σ M_ii`.
pub fn ntrace(m: &CMatrix) -> C64 {
    m.trace() / m.nrows() as f64
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMatrix, rtol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    let d = m.nrows();
    for i in 0..d {
        for j in i..d {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > rtol * scale {
                return false;
            }
        }
    }
    true
}

/// Operator (spectral) norm.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if is_hermitian(m, 1e-14) {
        return hermitian_eigenvalues(m).iter().fold(0.0, |a, x| a.max(x.abs()));
    }
    m.clone().singular_values().iter().fold(0.0, |a, x| a.max(*x))
}

/// Ratio of extreme singular values; infinite when singular.
pub fn condition_number(m: &CMatrix) -> f64 {
    let s = m.clone().singular_values();
    let max = s.iter().fold(0.0, |a: f64, x| a.max(*x));
    let min = s.iter().fold(f64::INFINITY, |a: f64, x| a.min(*x));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = symmetrize(m);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigen-decomposition of the Hermitian part of `m`: `(values, vectors)`.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let e = SymmetricEigen::new(symmetrize(m));
    (e.eigenvalues, e.eigenvectors)
}

pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Spectral calculus `φ(M)` for Hermitian `M`.
pub fn hermitian_apply(m: &CMatrix, phi: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * phi(vals[j]));
    &scaled * vecs.adjoint()
}

/// `M^θ` for positive semidefinite `M`; eigenvalues below zero are clipped. `0^0 = 1`.
pub fn psd_power(m: &CMatrix, theta: f64) -> CMatrix {
    hermitian_apply(m, |x| {
        let x = x.max(0.0);
        if theta == 0.0 {
            1.0
        } else {
            x.powf(theta)
        }
    })
}

/// `|Y|^q = (Y*Y)^{q/2}` for any square `Y`.
pub fn abs_power(y: &CMatrix, q: f64) -> CMatrix {
    psd_power(&(y.adjoint() * y), q / 2.0)
}

/// `tr |Y|^q`, computed from the eigenvalues of `Y*Y`.
pub fn trace_abs_power(y: &CMatrix, q: f64) -> f64 {
    let d = y.nrows() as f64;
    let ev = hermitian_eigenvalues(&(y.adjoint() * y));
    ev.iter().map(|mu| mu.max(0.0).powf(q / 2.0)).sum::<f64>() / d
}

/// Normalized Schatten norm `(tr |M|^q)^{1/q}` of a deterministic matrix.
pub fn schatten_norm(m: &CMatrix, q: f64) -> f64 {
    trace_abs_power(m, q).powf(1.0 / q)
}

pub fn inverse(m: &CMatrix, context: &str) -> Result<CMatrix> {
    m.clone()
        .lu()
        .try_inverse()
        .filter(|inv| inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or_else(|| Error::Singular(context.to_string()))
}

/// `(ζ I - A)^{-1}`.
pub fn resolvent(a: &CMatrix, zeta: C64) -> Result<CMatrix> {
    let d = a.nrows();
    inverse(&(identity(d) * zeta - a), "resolvent")
}

/// `M^p` by binary exponentiation.
pub fn pow(m: &CMatrix, p: u32) -> CMatrix {
    let mut result = identity(m.nrows());
    let mut base = m.clone();
    let mut e = p;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `[I, M, M^2, ..., M^k]`.
pub fn power_list(m: &CMatrix, k: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(identity(m.nrows()));
    for i in 0..k {
        let next = &out[i] * m;
        out.push(next);
    }
    out
}

/// Kronecker product with `(A ⊗ B)_{(i,k),(j,l)} = A_ij B_kl`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn random_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// GUE-like Hermitian matrix with entries of size `scale / sqrt(d)`.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> CMatrix {
    let g = random_gaussian_matrix(rng, d);
    symmetrize(&g) * c(scale / (2.0 * d as f64).sqrt(), 0.0)
}

/// Haar-ish unitary from the QR factorization of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let q = random_gaussian_matrix(rng, d).qr().q();
    q
}

/// `U diag(λ) U*` with the given real spectrum.
pub fn hermitian_with_spectrum<R: Rng + ?Sized>(rng: &mut R, spectrum: &[f64]) -> CMatrix {
    let u = random_unitary(rng, spectrum.len());
    symmetrize(&(&u * diag(spectrum) * u.adjoint()))
}

/// Normal matrix `U diag(λ) U*` with complex spectrum.
pub fn normal_with_spectrum<R: Rng + ?Sized>(rng: &mut R, spectrum: &[C64]) -> CMatrix {
    let d = spectrum.len();
    let u = random_unitary(rng, d);
    let mut dm = zeros(d);
    for (i, z) in spectrum.iter().enumerate() {
        dm[(i, i)] = *z;
    }
    &u * dm * u.adjoint()
}

/// Self-adjoint matrix. Construction symmetrizes; the inner matrix satisfies `M = M*` exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Hermitian(CMatrix);

impl Hermitian {
    /// Symmetrizes `m` unconditionally.
    pub fn new(m: CMatrix) -> Self {
        Hermitian(symmetrize(&m))
    }

    /// Accepts `m` only when it is self-adjoint to within [`HERMITIAN_RTOL`].
    pub fn try_new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if !is_hermitian(&m, HERMITIAN_RTOL) {
            return Err(Error::InvalidInput("matrix is not self-adjoint".into()));
        }
        Ok(Hermitian::new(m))
    }

    pub fn from_real_diag(values: &[f64]) -> Self {
        Hermitian(diag(values))
    }

    pub fn scalar(x: f64) -> Self {
        Hermitian(diag(&[x]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |a, x| a.max(x.abs()))
    }
}

impl Deref for Hermitian {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

impl From<Hermitian> for CMatrix {
    fn from(h: Hermitian) -> CMatrix {
        h.0
    }
}

impl TryFrom<Vec<[f64; 2]>> for Hermitian {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Hermitian::try_new(matrix_from_pairs(&v)?)
    }
}

impl From<Hermitian> for Vec<[f64; 2]> {
    fn from(h: Hermitian) -> Self {
        matrix_to_pairs(&h.0)
    }
}

/// Row-major `[re, im]` pairs.
pub fn matrix_to_pairs(m: &CMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

/// Inverse of [`matrix_to_pairs`] for square matrices.
pub fn matrix_from_pairs(v: &[[f64; 2]]) -> Result<CMatrix> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() || d == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} entries do not form a non-empty square matrix",
            v.len()
        )));
    }
    if v.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::NonFinite("matrix entries".into()));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| c(v[i * d + j][0], v[i * d + j][1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalized_trace_of_identity_is_one() {
        assert!((ntrace(&identity(5)) - ONE).norm() < 1e-15);
    }

    #[test]
    fn pow_matches_repeated_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_gaussian_matrix(&mut rng, 4);
        let mut b = identity(4);
        for _ in 0..7 {
            b = &b * &a;
        }
        assert!(frobenius(&(pow(&a, 7) - b)) < 1e-10);
    }

    #[test]
    fn schatten_two_norm_of_diag() {
        let m = diag(&[2.0, 0.0]);
        assert!((schatten_norm(&m, 2.0) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn hermitian_rejects_non_selfadjoint() {
        let m = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert!(Hermitian::try_new(m).is_err());
    }

    #[test]
    fn pairs_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = Hermitian::new(random_hermitian(&mut rng, 3, 1.0));
        let back = Hermitian::try_from(Vec::<[f64; 2]>::from(h.clone())).unwrap();
        assert!(frobenius(&(back.matrix() - h.matrix())) < 1e-15);
    }

    #[test]
    fn resolvent_norm_bounded_by_inverse_imaginary_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_hermitian(&mut rng, 5, 3.0);
            let r = resolvent(&a, c(0.3, 0.7)).unwrap();
            assert!(op_norm(&r) <= 1.0 / 0.7 + 1e-12);
        }
    }
}
