//! Gaussian proxy `Z = E X + Σ γ_i A_i` matching the mean and covariance of `X`, and the
//! interpolation `Y_t = EX + √t (X - EX) + √(1-t) (Z - EZ)`.
//!
//! Real coordinates of a self-adjoint `d × d` matrix: the `d` diagonal entries, then for each
//! `j < k` in row-major order the pair `(Re M_jk, Im M_jk)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::ensembles::{Ensemble, EvalMode};
use crate::error::{Error, Result};
use crate::linalg::{self, c, ntrace, zeros, CMatrix, C64};
use crate::matrix_calculus::{matrix_difference, MatrixFunctionSpec};
use crate::numeric::{KahanComplex, KahanMatrix};
use crate::quadrature::{gauss_hermite_tensor, DEFAULT_HERMITE_NODES};
use crate::rng::RngStream;

/// Eigenvalues below this fraction of the largest are dropped.
pub const EIGEN_CLIP_RTOL: f64 = 1e-12;

/// Eigenvalues below `-NEGATIVE_TOL · max(1, λ_max)` make the covariance invalid.
pub const NEGATIVE_TOL: f64 = 1e-10;

/// Gauss–Hermite quadrature is offered up to this many factors.
pub const MAX_QUADRATURE_FACTORS: usize = 3;

pub fn vec_real(m: &CMatrix) -> DVector<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for j in 0..d {
        v.push(m[(j, j)].re);
    }
    for j in 0..d {
        for k in (j + 1)..d {
            v.push(m[(j, k)].re);
            v.push(m[(j, k)].im);
        }
    }
    DVector::from_vec(v)
}

pub fn unvec_real(v: &DVector<f64>, d: usize) -> CMatrix {
    let mut m = zeros(d);
    for j in 0..d {
        m[(j, j)] = c(v[j], 0.0);
    }
    let mut idx = d;
    for j in 0..d {
        for k in (j + 1)..d {
            m[(j, k)] = c(v[idx], v[idx + 1]);
            m[(k, j)] = c(v[idx], -v[idx + 1]);
            idx += 2;
        }
    }
    m
}

/// Covariance of the real coordinates of `X`.
#[derive(Clone, Debug)]
pub struct RealCovariance {
    pub d: usize,
    pub matrix: DMatrix<f64>,
    pub mean: CMatrix,
    /// Entrywise standard errors for Monte Carlo estimates.
    pub se: Option<DMatrix<f64>>,
}

/// Exact covariance from the summand laws, or a Monte Carlo estimate.
pub fn real_covariance(ens: &Ensemble, mode: EvalMode) -> Result<RealCovariance> {
    let d = ens.d();
    let dim = d * d;
    match mode {
        EvalMode::Exact { .. } => {
            let mut cov = DMatrix::<f64>::zeros(dim, dim);
            for (b, w) in ens.centered_directions() {
                let v = vec_real(&b);
                cov += &v * v.transpose() * w;
            }
            Ok(RealCovariance { d, matrix: cov, mean: ens.mean().clone(), se: None })
        }
        EvalMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidInput("covariance estimate needs at least two samples".into()));
            }
            let stream = RngStream::new(seed, 0x636f_76);
            let vs: Vec<DVector<f64>> = (0..samples).map(|k| vec_real(&ens.sample_sum(&stream, k))).collect();
            let n = samples as f64;
            let mean = vs.iter().fold(DVector::zeros(dim), |a, v| a + v) / n;
            let mut cov = DMatrix::<f64>::zeros(dim, dim);
            let mut sq = DMatrix::<f64>::zeros(dim, dim);
            for v in &vs {
                let cv = v - &mean;
                let outer = &cv * cv.transpose();
                sq += outer.component_mul(&outer);
                cov += outer;
            }
            cov /= n - 1.0;
            let se = (sq / n - cov.component_mul(&cov)).map(|x| (x.max(0.0) / n).sqrt());
            Ok(RealCovariance { d, matrix: cov, mean: unvec_real(&mean, d), se: Some(se) })
        }
    }
}

/// Basis matrices `B_c` with `M = Σ_c vec_real(M)_c B_c`.
pub fn coordinate_basis(d: usize) -> Vec<CMatrix> {
    (0..d * d)
        .map(|i| {
            let mut e = DVector::zeros(d * d);
            e[i] = 1.0;
            unvec_real(&e, d)
        })
        .collect()
}

/// `Var_⊗ = E (X - EX) ⊗ (X - EX)` as a `d² × d²` matrix with
/// `(A ⊗ B)_{(i,k),(j,l)} = A_ij B_kl`.
pub fn kron_form(cov: &RealCovariance) -> CMatrix {
    let d = cov.d;
    let basis = coordinate_basis(d);
    // T maps coordinates to entries: T[(i d + j), c] = (B_c)_ij.
    let t = CMatrix::from_fn(d * d, d * d, |r, col| basis[col][(r / d, r % d)]);
    let m = &t * linalg::from_real(&cov.matrix) * t.transpose();
    CMatrix::from_fn(d * d, d * d, |r, col| {
        let (i, k) = (r / d, r % d);
        let (j, l) = (col / d, col % d);
        m[(i * d + j, k * d + l)]
    })
}

/// Symmetric tensor `Σ w B ⊗ B`.
#[derive(Clone, Debug)]
pub struct VarianceTensor {
    pub terms: Vec<(CMatrix, f64)>,
}

impl VarianceTensor {
    /// `Var_⊗ X` from the summand laws.
    pub fn of_ensemble(ens: &Ensemble) -> Self {
        Self { terms: ens.centered_directions() }
    }

    pub fn kron(&self) -> CMatrix {
        let d = self.terms.first().map_or(0, |(b, _)| b.nrows());
        let mut acc = KahanMatrix::new(d * d, d * d);
        for (b, w) in &self.terms {
            acc.add_scaled(&linalg::kron(b, b), c(*w, 0.0));
        }
        acc.value()
    }

    /// `⟨Df(A), Σ w B ⊗ B⟩ = Σ w tr[B Df(A)[B]]`.
    pub fn pair(&self, f: &MatrixFunctionSpec, a: &CMatrix) -> Result<C64> {
        let mut acc = KahanComplex::new();
        for (b, w) in &self.terms {
            acc.add(ntrace(&(b * matrix_difference(f, a, a, b)?)) * *w);
        }
        Ok(acc.value())
    }
}

/// `Z = mean + Σ γ_i A_i` with independent standard normal `γ_i`.
#[derive(Clone, Debug, Serialize)]
pub struct GaussianProxy {
    pub d: usize,
    #[serde(serialize_with = "ser_matrix")]
    pub mean: CMatrix,
    #[serde(serialize_with = "ser_matrices")]
    pub factors: Vec<CMatrix>,
}

fn ser_matrix<S: serde::Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&linalg::matrix_to_pairs(m), s)
}

fn ser_matrices<S: serde::Serializer>(ms: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<_> = ms.iter().map(linalg::matrix_to_pairs).collect();
    serde::Serialize::serialize(&v, s)
}

impl GaussianProxy {
    pub fn from_covariance(cov: &RealCovariance) -> Result<Self> {
        let eig = SymmetricEigen::new(cov.matrix.clone());
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(*x));
        let mut factors = Vec::new();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
        for i in order {
            let lambda = eig.eigenvalues[i];
            if lambda < -NEGATIVE_TOL * max.max(1.0) {
                return Err(Error::NegativeCovariance(lambda));
            }
            if lambda <= EIGEN_CLIP_RTOL * max || lambda <= 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(i).into_owned() * lambda.sqrt();
            factors.push(unvec_real(&v, cov.d));
        }
        Ok(Self { d: cov.d, mean: cov.mean.clone(), factors })
    }

    pub fn variance_tensor(&self) -> VarianceTensor {
        VarianceTensor { terms: self.factors.iter().map(|a| (a.clone(), 1.0)).collect() }
    }

    /// `mean + Σ γ_i A_i` for given coordinates.
    pub fn at(&self, gamma: &[f64]) -> CMatrix {
        let mut z = self.mean.clone();
        for (a, g) in self.factors.iter().zip(gamma) {
            z.zip_apply(a, |zv, av| *zv += av * *g);
        }
        z
    }

    /// One draw of `Z`; deterministic in `(stream, draw)`.
    pub fn sample(&self, stream: &RngStream, draw: u64) -> CMatrix {
        let mut rng = stream.draw(draw);
        let gamma: Vec<f64> = (0..self.factors.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        self.at(&gamma)
    }

    /// Gauss–Hermite nodes `(γ, weight)` over all factors.
    pub fn quadrature_nodes(&self, nodes: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        if self.factors.len() > MAX_QUADRATURE_FACTORS {
            return Err(Error::Unsupported(format!(
                "quadrature over {} Gaussian factors; at most {MAX_QUADRATURE_FACTORS}",
                self.factors.len()
            )));
        }
        Ok(gauss_hermite_tensor(self.factors.len(), nodes))
    }

    /// `E g(Z)` by tensor Gauss–Hermite quadrature.
    pub fn expectation<F>(&self, mut g: F) -> Result<C64>
    where
        F: FnMut(&CMatrix) -> Result<C64>,
    {
        let mut acc = KahanComplex::new();
        for (gamma, w) in self.quadrature_nodes(DEFAULT_HERMITE_NODES)? {
            acc.add(g(&self.at(&gamma))? * w);
        }
        Ok(acc.value())
    }
}

/// Proxy from the exact covariance of `X`.
pub fn build_proxy(ens: &Ensemble) -> Result<GaussianProxy> {
    GaussianProxy::from_covariance(&real_covariance(ens, EvalMode::exact())?)
}

/// `Y_t = mean + √t (X - mean) + √(1-t) (Z - mean)`; `Y_0 = Z` and `Y_1 = X` exactly.
pub fn sample_interpolant(t: f64, x: &CMatrix, z: &CMatrix, mean: &CMatrix) -> Result<CMatrix> {
    if !(0.0..=1.0).contains(&t) || t.is_nan() {
        return Err(Error::InvalidT(t));
    }
    if t == 0.0 {
        return Ok(z.clone());
    }
    if t == 1.0 {
        return Ok(x.clone());
    }
    Ok(mean + (x - mean) * c(t.sqrt(), 0.0) + (z - mean) * c((1.0 - t).sqrt(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::EnsembleFamily;

    #[test]
    fn vec_roundtrip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let h = linalg::random_hermitian(&mut rng, 4, 1.0);
        assert!(linalg::frobenius(&(unvec_real(&vec_real(&h), 4) - &h)) < 1e-15);
    }

    #[test]
    fn interpolant_midpoint() {
        let x = linalg::diag(&[2.0f64.sqrt()]);
        let z = linalg::diag(&[0.0]);
        let y = sample_interpolant(0.5, &x, &z, &zeros(1)).unwrap();
        assert!((y[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(matches!(sample_interpolant(1.5, &x, &z, &zeros(1)), Err(Error::InvalidT(_))));
    }

    #[test]
    fn proxy_reproduces_kron_form() {
        let ens = EnsembleFamily::FiniteSupportToy { d: 3, n: 3, seed: 2 }.ensemble().unwrap();
        let cov = real_covariance(&ens, EvalMode::exact()).unwrap();
        let proxy = GaussianProxy::from_covariance(&cov).unwrap();
        let direct = VarianceTensor::of_ensemble(&ens).kron();
        assert!(linalg::frobenius(&(kron_form(&cov) - &direct)) < 1e-12);
        assert!(linalg::frobenius(&(proxy.variance_tensor().kron() - &direct)) < 1e-12);
    }

    #[test]
    fn rank_two_ensemble_has_two_factors() {
        let ens = EnsembleFamily::RademacherCoefficient { d: 2, n: 2, seed: 3 }.ensemble().unwrap();
        assert_eq!(build_proxy(&ens).unwrap().factors.len(), 2);
    }
}
