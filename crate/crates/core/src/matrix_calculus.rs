//! Matrix divided differences through block-triangular embedding, and their closed forms.
//!
//! For matrices `A_0, A_1, A_2` and directions `H, H_1, H_2`:
//!
//! * `Δf(A_0, A_1)[H]` is the north-east `d × d` block of `f([[A_0, H], [0, A_1]])`;
//! * `Δ²f(A_0, A_1, A_2)[H_1 ⊗ H_2]` is the `(1, 3)` block of
//!   `f([[A_0, H_1, 0], [0, A_1, H_2], [0, 0, A_2]])`.
//!
//! The block path evaluates `f` by repeated multiplication for powers and by LU solves for
//! inverse and resolvent kinds. The closed-form path sums the monomial expansions below,
//! enumerated lexicographically with compensated summation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, frobenius, identity, inverse, ntrace, pow, power_list, CMatrix, C64};
use crate::numeric::KahanMatrix;

/// Minimum distance between any eigenvalue of a diagonal block and a pole of `f`.
pub const POLE_TOL: f64 = 1e-8;

/// Block condition estimate beyond which equivalence tests record a skip.
pub const CONDITION_GATE: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixFunctionSpec {
    /// `a^p`.
    Power { p: u32 },
    /// `a^{-p}`.
    InversePower { p: u32 },
    /// `R_ζ(a) = (ζ - a)^{-1}`.
    Resolvent { zeta: C64 },
    /// `R_ζ(a)^2 = D R_ζ(a)`.
    ResolventSquare { zeta: C64 },
    /// `D(a^{2p}) = 2p a^{2p-1}`.
    PowerDerivative { p: u32 },
    /// `|R_ζ(a)|^{2p} = R_{ζ*}(a)^p R_ζ(a)^p` on self-adjoint arguments.
    ResolventAbsPower { zeta: C64, p: u32 },
    /// `D|R_ζ|^{2p} = p R_{ζ*}^{p+1} R_ζ^p + p R_ζ^{p+1} R_{ζ*}^p`.
    ResolventPowerDerivative { zeta: C64, p: u32 },
}

impl MatrixFunctionSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Power { p } => format!("a^{p}"),
            Self::InversePower { p } => format!("a^-{p}"),
            Self::Resolvent { zeta } => format!("R[{}]", fmt_c(*zeta)),
            Self::ResolventSquare { zeta } => format!("R[{}]^2", fmt_c(*zeta)),
            Self::PowerDerivative { p } => format!("D(a^{})", 2 * p),
            Self::ResolventAbsPower { zeta, p } => format!("|R[{}]|^{}", fmt_c(*zeta), 2 * p),
            Self::ResolventPowerDerivative { zeta, p } => format!("D|R[{}]|^{}", fmt_c(*zeta), 2 * p),
        }
    }

    pub fn poles(&self) -> Vec<C64> {
        match *self {
            Self::Power { .. } | Self::PowerDerivative { .. } => vec![],
            Self::InversePower { .. } => vec![c(0.0, 0.0)],
            Self::Resolvent { zeta } | Self::ResolventSquare { zeta } => vec![zeta],
            Self::ResolventAbsPower { zeta, .. } | Self::ResolventPowerDerivative { zeta, .. } => {
                if zeta.im == 0.0 {
                    vec![zeta]
                } else {
                    vec![zeta, zeta.conj()]
                }
            }
        }
    }

    /// Whether the function has no pole on the real line.
    pub fn is_real_regular(&self) -> bool {
        self.poles().iter().all(|z| z.im.abs() > POLE_TOL)
    }

    /// `Dh` for a trace functional `h`; only kinds whose derivative is again a listed kind.
    pub fn derivative(&self) -> Result<MatrixFunctionSpec> {
        match *self {
            Self::Power { p } if p % 2 == 0 && p > 0 => Ok(Self::PowerDerivative { p: p / 2 }),
            Self::Resolvent { zeta } => Ok(Self::ResolventSquare { zeta }),
            Self::ResolventAbsPower { zeta, p } => Ok(Self::ResolventPowerDerivative { zeta, p }),
            _ => Err(Error::Unsupported(format!("derivative of {} is not a listed kind", self.name()))),
        }
    }

    /// Scalar evaluation `f(a)`.
    pub fn scalar(&self, a: C64) -> Result<C64> {
        self.check_point(a)?;
        Ok(match *self {
            Self::Power { p } => a.powi(p as i32),
            Self::InversePower { p } => a.powi(-(p as i32)),
            Self::Resolvent { zeta } => (zeta - a).inv(),
            Self::ResolventSquare { zeta } => (zeta - a).inv().powi(2),
            Self::PowerDerivative { p } => a.powi(2 * p as i32 - 1) * (2 * p) as f64,
            Self::ResolventAbsPower { zeta, p } => {
                (zeta.conj() - a).inv().powi(p as i32) * (zeta - a).inv().powi(p as i32)
            }
            Self::ResolventPowerDerivative { zeta, p } => {
                let (rb, r) = ((zeta.conj() - a).inv(), (zeta - a).inv());
                let p32 = p as i32;
                (rb.powi(p32 + 1) * r.powi(p32) + r.powi(p32 + 1) * rb.powi(p32)) * p as f64
            }
        })
    }

    fn check_point(&self, a: C64) -> Result<()> {
        for pole in self.poles() {
            if (a - pole).norm() <= POLE_TOL {
                return Err(Error::Pole { point: a.to_string(), pole: pole.to_string(), tolerance: POLE_TOL });
            }
        }
        Ok(())
    }

    /// Checks that no eigenvalue of `m` lies within [`POLE_TOL`] of a pole.
    pub fn check_poles(&self, m: &CMatrix) -> Result<()> {
        let poles = self.poles();
        if poles.is_empty() {
            return Ok(());
        }
        let hermitian = linalg::is_hermitian(m, 1e-12);
        if hermitian && poles.iter().all(|z| z.im.abs() > POLE_TOL) {
            return Ok(());
        }
        let eigenvalues: Vec<C64> = if hermitian {
            linalg::hermitian_eigenvalues(m).into_iter().map(|x| c(x, 0.0)).collect()
        } else {
            nalgebra::Schur::new(m.clone())
                .eigenvalues()
                .ok_or_else(|| Error::NonFinite("Schur eigenvalues".into()))?
                .iter()
                .copied()
                .collect()
        };
        for lambda in eigenvalues {
            self.check_point(lambda)?;
        }
        Ok(())
    }

    /// `f(M)` for a square matrix whose spectrum avoids the poles.
    pub fn apply(&self, m: &CMatrix) -> Result<CMatrix> {
        let d = m.nrows();
        let res = |zeta: C64| inverse(&(identity(d) * zeta - m), "resolvent");
        Ok(match *self {
            Self::Power { p } => pow(m, p),
            Self::InversePower { p } => pow(&inverse(m, "inverse power")?, p),
            Self::Resolvent { zeta } => res(zeta)?,
            Self::ResolventSquare { zeta } => {
                let r = res(zeta)?;
                &r * &r
            }
            Self::PowerDerivative { p } => pow(m, 2 * p - 1) * c((2 * p) as f64, 0.0),
            Self::ResolventAbsPower { zeta, p } => pow(&res(zeta.conj())?, p) * pow(&res(zeta)?, p),
            Self::ResolventPowerDerivative { zeta, p } => {
                let (rb, r) = (res(zeta.conj())?, res(zeta)?);
                let (rbp, rp) = (pow(&rb, p), pow(&r, p));
                (&rbp * &rb * &rp + &rp * &r * &rbp) * c(p as f64, 0.0)
            }
        })
    }

    /// `f(M)` after checking the spectrum of `M` against the poles.
    pub fn apply_checked(&self, m: &CMatrix) -> Result<CMatrix> {
        self.check_poles(m)?;
        self.apply(m)
    }

    /// Worst condition number of `π - M` over the poles `π`; one for pole-free kinds.
    pub fn condition_estimate(&self, m: &CMatrix) -> f64 {
        let d = m.nrows();
        self.poles()
            .iter()
            .map(|z| linalg::condition_number(&(identity(d) * *z - m)))
            .fold(1.0, f64::max)
    }
}

fn fmt_c(z: C64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

fn check_square(name: &str, m: &CMatrix, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch(format!("{name} is {}x{}, expected {d}x{d}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_all(diagonal: &[&CMatrix], directions: &[&CMatrix]) -> Result<usize> {
    let d = diagonal[0].nrows();
    for (i, m) in diagonal.iter().enumerate() {
        check_square(&format!("A{i}"), m, d)?;
    }
    for (i, m) in directions.iter().enumerate() {
        check_square(&format!("H{}", i + 1), m, d)?;
    }
    Ok(d)
}

/// Upper block-bidiagonal matrix with the given diagonal and super-diagonal blocks.
pub fn block_embedding(diagonal: &[&CMatrix], directions: &[&CMatrix]) -> CMatrix {
    let d = diagonal[0].nrows();
    let k = diagonal.len();
    let mut m = CMatrix::zeros(k * d, k * d);
    for (i, a) in diagonal.iter().enumerate() {
        m.view_mut((i * d, i * d), (d, d)).copy_from(*a);
    }
    for (i, h) in directions.iter().enumerate() {
        m.view_mut((i * d, (i + 1) * d), (d, d)).copy_from(*h);
    }
    m
}

/// `Δf(A_0, A_1)[H]` through the 2×2 block embedding.
pub fn matrix_difference(f: &MatrixFunctionSpec, a0: &CMatrix, a1: &CMatrix, h: &CMatrix) -> Result<CMatrix> {
    let d = check_all(&[a0, a1], &[h])?;
    f.check_poles(a0)?;
    f.check_poles(a1)?;
    let fm = f.apply(&block_embedding(&[a0, a1], &[h]))?;
    Ok(fm.view((0, d), (d, d)).into_owned())
}

/// `Δ²f(A_0, A_1, A_2)[H_1 ⊗ H_2]` through the 3×3 block embedding.
pub fn matrix_second_difference(
    f: &MatrixFunctionSpec,
    a0: &CMatrix,
    a1: &CMatrix,
    a2: &CMatrix,
    h1: &CMatrix,
    h2: &CMatrix,
) -> Result<CMatrix> {
    let d = check_all(&[a0, a1, a2], &[h1, h2])?;
    for a in [a0, a1, a2] {
        f.check_poles(a)?;
    }
    let fm = f.apply(&block_embedding(&[a0, a1, a2], &[h1, h2]))?;
    Ok(fm.view((0, 2 * d), (d, d)).into_owned())
}

/// Condition estimate of the block embedding used by the block path.
pub fn block_condition(f: &MatrixFunctionSpec, diagonal: &[&CMatrix], directions: &[&CMatrix]) -> f64 {
    f.condition_estimate(&block_embedding(diagonal, directions))
}

/// Index sets of the closed-form expansions, enumerated lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MultiIndexSet {
    /// `q_1 + ... + q_arity = total`, `q_i ≥ 0`.
    NonNegative { arity: usize, total: u32 },
    /// `q_1 + ... + q_arity = total`, `q_i ≥ 1`.
    Positive { arity: usize, total: u32 },
    /// Sextuples `(q_1, q_2, r_1, r_2, s_1, s_2)` of the second difference of `D|R_ζ|^{2p}`;
    /// `q_1` counts `R_{ζ*}` factors and `q_2` counts `R_ζ` factors on the first block.
    ResolventPower { p: u32 },
}

impl MultiIndexSet {
    pub fn indices(&self) -> Vec<Vec<u32>> {
        match *self {
            Self::NonNegative { arity, total } => compositions(arity, total, 0),
            Self::Positive { arity, total } => compositions(arity, total, 1),
            Self::ResolventPower { p } => {
                let first = resolvent_power_term(p);
                let swapped = first.iter().map(|t| vec![t[1], t[0], t[3], t[2], t[5], t[4]]);
                let mut all = first.clone();
                all.extend(swapped);
                all
            }
        }
    }

    pub fn len(&self) -> usize {
        self.indices().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn compositions(arity: usize, total: u32, min: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if arity == 0 {
        if total == 0 {
            out.push(vec![]);
        }
        return out;
    }
    if total < min * arity as u32 {
        return out;
    }
    fn rec(prefix: &mut Vec<u32>, left: usize, remaining: u32, min: u32, out: &mut Vec<Vec<u32>>) {
        if left == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        let max = remaining - min * (left as u32 - 1);
        for q in min..=max {
            prefix.push(q);
            rec(prefix, left - 1, remaining - q, min, out);
            prefix.pop();
        }
    }
    rec(&mut Vec::new(), arity, total, min, &mut out);
    out
}

/// Sextuples of `Δ²(R_{ζ*}^{p+1} R_ζ^p)`, from the product rule on block upper-triangular
/// matrices: `F_11 G_13 + F_12 G_23 + F_13 G_33`.
fn resolvent_power_term(p: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for t in compositions(3, p + 2, 1) {
        out.push(vec![p + 1, t[0], 0, t[1], 0, t[2]]);
    }
    for qr in compositions(2, p + 2, 1) {
        for rs in compositions(2, p + 1, 1) {
            out.push(vec![qr[0], 0, qr[1], rs[0], 0, rs[1]]);
        }
    }
    for t in compositions(3, p + 3, 1) {
        out.push(vec![t[0], 0, t[1], 0, t[2], p]);
    }
    out
}

/// Resolvent powers `R_ζ(A)^k` for `k = 0..=kmax`.
fn resolvent_powers(a: &CMatrix, zeta: C64, kmax: u32) -> Result<Vec<CMatrix>> {
    Ok(power_list(&linalg::resolvent(a, zeta)?, kmax as usize))
}

/// Sum of `coef · L[i_0] H_1 M[i_1] H_2 N[i_2]` (or the two-factor analogue) over an index set.
fn sum_products(factors: &[&[CMatrix]], directions: &[&CMatrix], indices: &[Vec<u32>], coef: C64) -> CMatrix {
    let d = directions[0].nrows();
    let mut acc = KahanMatrix::new(d, d);
    for idx in indices {
        let mut prod = factors[0][idx[0] as usize].clone();
        for (j, h) in directions.iter().enumerate() {
            prod = &prod * *h * &factors[j + 1][idx[j + 1] as usize];
        }
        acc.add_scaled(&prod, coef);
    }
    acc.value()
}

/// Closed-form `Δf(A_0, A_1)[H]`.
pub fn closed_form_first_difference(f: &MatrixFunctionSpec, a0: &CMatrix, a1: &CMatrix, h: &CMatrix) -> Result<CMatrix> {
    check_all(&[a0, a1], &[h])?;
    f.check_poles(a0)?;
    f.check_poles(a1)?;
    let one = c(1.0, 0.0);
    let dirs = [h];
    Ok(match *f {
        MatrixFunctionSpec::Power { p } => {
            if p == 0 {
                CMatrix::zeros(h.nrows(), h.ncols())
            } else {
                let (l, r) = (power_list(a0, p as usize), power_list(a1, p as usize));
                sum_products(&[&l, &r], &dirs, &MultiIndexSet::NonNegative { arity: 2, total: p - 1 }.indices(), one)
            }
        }
        MatrixFunctionSpec::PowerDerivative { p } => {
            let m = 2 * p - 1;
            let (l, r) = (power_list(a0, m as usize), power_list(a1, m as usize));
            let idx = MultiIndexSet::NonNegative { arity: 2, total: m - 1 }.indices();
            sum_products(&[&l, &r], &dirs, &idx, c((2 * p) as f64, 0.0))
        }
        MatrixFunctionSpec::InversePower { p } => {
            let l = power_list(&inverse(a0, "inverse power")?, p as usize + 1);
            let r = power_list(&inverse(a1, "inverse power")?, p as usize + 1);
            sum_products(&[&l, &r], &dirs, &MultiIndexSet::Positive { arity: 2, total: p + 1 }.indices(), -one)
        }
        MatrixFunctionSpec::Resolvent { zeta } => {
            &linalg::resolvent(a0, zeta)? * h * &linalg::resolvent(a1, zeta)?
        }
        MatrixFunctionSpec::ResolventSquare { zeta } => {
            let (l, r) = (resolvent_powers(a0, zeta, 2)?, resolvent_powers(a1, zeta, 2)?);
            sum_products(&[&l, &r], &dirs, &MultiIndexSet::Positive { arity: 2, total: 3 }.indices(), one)
        }
        MatrixFunctionSpec::ResolventAbsPower { zeta, p } => {
            product_first_difference(a0, a1, h, (zeta.conj(), p), (zeta, p))?
        }
        MatrixFunctionSpec::ResolventPowerDerivative { zeta, p } => {
            let t1 = product_first_difference(a0, a1, h, (zeta.conj(), p + 1), (zeta, p))?;
            let t2 = product_first_difference(a0, a1, h, (zeta, p + 1), (zeta.conj(), p))?;
            (t1 + t2) * c(p as f64, 0.0)
        }
    })
}

/// First difference of `R_α^m R_β^k` via `F_11 G_12 + F_12 G_22`.
fn product_first_difference(a0: &CMatrix, a1: &CMatrix, h: &CMatrix, left: (C64, u32), right: (C64, u32)) -> Result<CMatrix> {
    let (alpha, m) = left;
    let (beta, k) = right;
    let la = resolvent_powers(a0, alpha, m + 1)?;
    let lb = resolvent_powers(a0, beta, k + 1)?;
    let ra = resolvent_powers(a1, alpha, m + 1)?;
    let rb = resolvent_powers(a1, beta, k + 1)?;
    let one = c(1.0, 0.0);
    let g12 = sum_products(&[&lb, &rb], &[h], &MultiIndexSet::Positive { arity: 2, total: k + 1 }.indices(), one);
    let f12 = sum_products(&[&la, &ra], &[h], &MultiIndexSet::Positive { arity: 2, total: m + 1 }.indices(), one);
    Ok(&la[m as usize] * g12 + f12 * &rb[k as usize])
}

/// Closed-form `Δ²f(A_0, A_1, A_2)[H_1 ⊗ H_2]`.
pub fn closed_form_second_difference(
    f: &MatrixFunctionSpec,
    a0: &CMatrix,
    a1: &CMatrix,
    a2: &CMatrix,
    h1: &CMatrix,
    h2: &CMatrix,
) -> Result<CMatrix> {
    check_all(&[a0, a1, a2], &[h1, h2])?;
    for a in [a0, a1, a2] {
        f.check_poles(a)?;
    }
    let one = c(1.0, 0.0);
    let dirs = [h1, h2];
    let d = a0.nrows();
    Ok(match *f {
        MatrixFunctionSpec::Power { p } => {
            if p < 2 {
                CMatrix::zeros(d, d)
            } else {
                let ls: Vec<_> = [a0, a1, a2].iter().map(|a| power_list(a, p as usize)).collect();
                let idx = MultiIndexSet::NonNegative { arity: 3, total: p - 2 }.indices();
                sum_products(&[&ls[0], &ls[1], &ls[2]], &dirs, &idx, one)
            }
        }
        MatrixFunctionSpec::PowerDerivative { p } => {
            let m = 2 * p - 1;
            if m < 2 {
                CMatrix::zeros(d, d)
            } else {
                let ls: Vec<_> = [a0, a1, a2].iter().map(|a| power_list(a, m as usize)).collect();
                let idx = MultiIndexSet::NonNegative { arity: 3, total: m - 2 }.indices();
                sum_products(&[&ls[0], &ls[1], &ls[2]], &dirs, &idx, c((2 * p) as f64, 0.0))
            }
        }
        MatrixFunctionSpec::InversePower { p } => {
            let ls: Vec<_> = [a0, a1, a2]
                .iter()
                .map(|a| Ok(power_list(&inverse(a, "inverse power")?, p as usize + 1)))
                .collect::<Result<_>>()?;
            let idx = MultiIndexSet::Positive { arity: 3, total: p + 2 }.indices();
            sum_products(&[&ls[0], &ls[1], &ls[2]], &dirs, &idx, one)
        }
        MatrixFunctionSpec::Resolvent { zeta } => {
            &linalg::resolvent(a0, zeta)? * h1 * &linalg::resolvent(a1, zeta)? * h2 * &linalg::resolvent(a2, zeta)?
        }
        MatrixFunctionSpec::ResolventSquare { zeta } => {
            let ls: Vec<_> = [a0, a1, a2].iter().map(|a| resolvent_powers(a, zeta, 2)).collect::<Result<_>>()?;
            let idx = MultiIndexSet::Positive { arity: 3, total: 4 }.indices();
            sum_products(&[&ls[0], &ls[1], &ls[2]], &dirs, &idx, one)
        }
        MatrixFunctionSpec::ResolventAbsPower { zeta, p } => {
            let t = product_second_difference(&[a0, a1, a2], h1, h2, (zeta.conj(), p), (zeta, p))?;
            t
        }
        MatrixFunctionSpec::ResolventPowerDerivative { zeta, p } => {
            let kmax = p + 3;
            let conj: Vec<_> =
                [a0, a1, a2].iter().map(|a| resolvent_powers(a, zeta.conj(), kmax)).collect::<Result<_>>()?;
            let plain: Vec<_> = [a0, a1, a2].iter().map(|a| resolvent_powers(a, zeta, kmax)).collect::<Result<_>>()?;
            let mut acc = KahanMatrix::new(d, d);
            for t in (MultiIndexSet::ResolventPower { p }).indices() {
                let f0 = &conj[0][t[0] as usize] * &plain[0][t[1] as usize];
                let f1 = &conj[1][t[2] as usize] * &plain[1][t[3] as usize];
                let f2 = &conj[2][t[4] as usize] * &plain[2][t[5] as usize];
                acc.add(&(f0 * h1 * f1 * h2 * f2));
            }
            acc.value() * c(p as f64, 0.0)
        }
    })
}

/// Second difference of `R_α^m R_β^k` via `F_11 G_13 + F_12 G_23 + F_13 G_33`.
fn product_second_difference(
    blocks: &[&CMatrix; 3],
    h1: &CMatrix,
    h2: &CMatrix,
    left: (C64, u32),
    right: (C64, u32),
) -> Result<CMatrix> {
    let (alpha, m) = left;
    let (beta, k) = right;
    let fa: Vec<_> = blocks.iter().map(|a| resolvent_powers(a, alpha, m + 2)).collect::<Result<_>>()?;
    let fb: Vec<_> = blocks.iter().map(|a| resolvent_powers(a, beta, k + 2)).collect::<Result<_>>()?;
    let one = c(1.0, 0.0);
    let p2 = |t| MultiIndexSet::Positive { arity: 2, total: t }.indices();
    let p3 = |t| MultiIndexSet::Positive { arity: 3, total: t }.indices();
    let g13 = sum_products(&[&fb[0], &fb[1], &fb[2]], &[h1, h2], &p3(k + 2), one);
    let f12 = sum_products(&[&fa[0], &fa[1]], &[h1], &p2(m + 1), one);
    let g23 = sum_products(&[&fb[1], &fb[2]], &[h2], &p2(k + 1), one);
    let f13 = sum_products(&[&fa[0], &fa[1], &fa[2]], &[h1, h2], &p3(m + 2), one);
    Ok(&fa[0][m as usize] * g13 + f12 * g23 + f13 * &fb[2][k as usize])
}

/// Closed form of order `directions.len()` (1 or 2).
pub fn closed_form_difference(f: &MatrixFunctionSpec, matrices: &[&CMatrix], directions: &[&CMatrix]) -> Result<CMatrix> {
    match (matrices.len(), directions.len()) {
        (2, 1) => closed_form_first_difference(f, matrices[0], matrices[1], directions[0]),
        (3, 2) => closed_form_second_difference(f, matrices[0], matrices[1], matrices[2], directions[0], directions[1]),
        (m, h) => Err(Error::DimensionMismatch(format!("{m} matrices and {h} directions"))),
    }
}

/// Pairing `⟨Dg(A), H_1 ⊗ H_2⟩ = tr[H_1 Dg(A)[H_2]]`.
pub fn trace_derivative_pairing(g: &MatrixFunctionSpec, a: &CMatrix, h1: &CMatrix, h2: &CMatrix) -> Result<C64> {
    Ok(ntrace(&(h1 * matrix_difference(g, a, a, h2)?)))
}

/// Central finite difference of `t ↦ f(A + tH)` to second order: `D²f(A)[H ⊗ H]`.
pub fn finite_difference_second_derivative(f: &MatrixFunctionSpec, a: &CMatrix, h: &CMatrix, step: f64) -> Result<CMatrix> {
    let s = c(step, 0.0);
    let plus = f.apply_checked(&(a + h * s))?;
    let mid = f.apply_checked(a)?;
    let minus = f.apply_checked(&(a - h * s))?;
    Ok((plus - mid * c(2.0, 0.0) + minus) / c(step * step, 0.0))
}

/// Relative Frobenius distance `‖X - Y‖ / max(‖Y‖, floor)`.
pub fn relative_error(x: &CMatrix, y: &CMatrix, floor: f64) -> f64 {
    frobenius(&(x - y)) / frobenius(y).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(x: f64) -> CMatrix {
        diag(&[x])
    }

    #[test]
    fn scalar_cube_difference() {
        let v = matrix_difference(&MatrixFunctionSpec::Power { p: 3 }, &s(1.0), &s(2.0), &s(1.0)).unwrap();
        assert!((v[(0, 0)] - c(7.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn scalar_resolvent_difference() {
        let f = MatrixFunctionSpec::Resolvent { zeta: c(0.0, 2.0) };
        let v = matrix_difference(&f, &s(1.0), &s(-1.0), &s(1.0)).unwrap();
        assert!((v[(0, 0)] - c(-0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn inverse_second_difference() {
        let f = MatrixFunctionSpec::InversePower { p: 1 };
        let v = matrix_second_difference(&f, &s(1.0), &s(2.0), &s(4.0), &s(1.0), &s(1.0)).unwrap();
        assert!((v[(0, 0)] - c(0.125, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(MultiIndexSet::NonNegative { arity: 3, total: 3 }.len(), 10);
        assert_eq!(MultiIndexSet::Positive { arity: 3, total: 4 }.len(), 3);
        for p in 1..=4u32 {
            let q = MultiIndexSet::ResolventPower { p }.indices();
            assert_eq!(q.len() as u32, 2 * (p + 1) * (2 * p + 1));
            assert!(q.iter().all(|t| t.iter().sum::<u32>() == 2 * p + 3));
        }
        assert_eq!(MultiIndexSet::ResolventPower { p: 1 }.len(), 12);
    }

    #[test]
    fn pole_proximity_rejected() {
        let f = MatrixFunctionSpec::InversePower { p: 1 };
        assert!(matches!(matrix_difference(&f, &s(0.0), &s(1.0), &s(1.0)), Err(Error::Pole { .. })));
    }

    #[test]
    fn resolvent_square_pairing_scalar() {
        let zeta = c(0.5, 1.5);
        let g = MatrixFunctionSpec::ResolventSquare { zeta };
        let (a, h1, h2) = (0.3, 0.7, -1.2);
        let v = trace_derivative_pairing(&g, &s(a), &s(h1), &s(h2)).unwrap();
        let expected = c(h1 * h2 * 2.0, 0.0) / (zeta - a).powi(3);
        assert!((v - expected).norm() < 1e-13);
    }

    #[test]
    fn resolvent_power_derivative_closed_matches_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zeta = c(0.2, 0.9);
        for p in 1..=3 {
            let f = MatrixFunctionSpec::ResolventPowerDerivative { zeta, p };
            let a: Vec<_> = (0..3).map(|_| random_hermitian(&mut rng, 3, 1.0)).collect();
            let h: Vec<_> = (0..2).map(|_| random_hermitian(&mut rng, 3, 1.0)).collect();
            let block = matrix_second_difference(&f, &a[0], &a[1], &a[2], &h[0], &h[1]).unwrap();
            let closed = closed_form_second_difference(&f, &a[0], &a[1], &a[2], &h[0], &h[1]).unwrap();
            assert!(relative_error(&closed, &block, 1e-300) < 1e-10, "p={p}");
        }
    }
}
