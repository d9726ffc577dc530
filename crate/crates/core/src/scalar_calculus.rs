//! Scalar divided differences of order at most three.
//!
//! `Δ^k f(a_0, ..., a_k)` is symmetric in its arguments and continuous up to the diagonal,
//! where it equals `D^k f(a)/k!`. Points within [`CONFLUENCE_RTOL`] of each other are
//! treated as equal.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{c, C64};
use crate::quadrature::SimplexQuadrature;

pub const MAX_ORDER: usize = 3;

/// Relative distance below which two points are one confluent cluster.
pub const CONFLUENCE_RTOL: f64 = 1e-9;

/// Distance below which a point lies on a pole.
pub const POLE_TOL: f64 = 1e-8;

/// Relative spread below which a sub-table entry is computed by simplex quadrature
/// rather than by a difference quotient.
const NEAR_CONFLUENT_RTOL: f64 = 1e-3;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Real function given by its value and derivatives: `derivatives[j] = D^j f`.
#[derive(Clone)]
pub struct SmoothCallable {
    name: String,
    derivatives: Vec<RealFn>,
    /// `sup |D^3 f|` when known.
    pub third_derivative_bound: Option<f64>,
}

impl SmoothCallable {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), derivatives: vec![Arc::new(f)], third_derivative_bound: None }
    }

    /// Appends the next derivative.
    pub fn with_derivative(mut self, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.derivatives.push(Arc::new(df));
        self
    }

    pub fn with_third_derivative_bound(mut self, bound: f64) -> Self {
        self.third_derivative_bound = Some(bound);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Highest derivative order available.
    pub fn order(&self) -> usize {
        self.derivatives.len() - 1
    }
}

impl fmt::Debug for SmoothCallable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothCallable").field("name", &self.name).field("order", &self.order()).finish()
    }
}

#[derive(Clone, Debug)]
pub enum ScalarFunctionSpec {
    /// `a^p`.
    Power(u32),
    /// `|a|^e`.
    AbsPower(f64),
    /// `(ζ - a)^{-1}`; complex valued.
    Resolvent(C64),
    Smooth(SmoothCallable),
}

impl ScalarFunctionSpec {
    pub fn sin() -> Self {
        Self::Smooth(
            SmoothCallable::new("sin", f64::sin)
                .with_derivative(f64::cos)
                .with_derivative(|x| -x.sin())
                .with_derivative(|x| -x.cos())
                .with_third_derivative_bound(1.0),
        )
    }

    pub fn cos() -> Self {
        Self::Smooth(
            SmoothCallable::new("cos", f64::cos)
                .with_derivative(|x| -x.sin())
                .with_derivative(|x| -x.cos())
                .with_derivative(f64::sin)
                .with_third_derivative_bound(1.0),
        )
    }

    pub fn exp() -> Self {
        Self::Smooth(
            SmoothCallable::new("exp", f64::exp)
                .with_derivative(f64::exp)
                .with_derivative(f64::exp)
                .with_derivative(f64::exp),
        )
    }

    pub fn name(&self) -> String {
        match self {
            Self::Power(p) => format!("a^{p}"),
            Self::AbsPower(e) => format!("|a|^{e}"),
            Self::Resolvent(z) => format!("resolvent({}{:+}i)", z.re, z.im),
            Self::Smooth(s) => s.name.clone(),
        }
    }

    pub fn is_complex_valued(&self) -> bool {
        matches!(self, Self::Resolvent(_))
    }

    /// `sup |D^3 f|` over the real line, when finite and known.
    pub fn third_derivative_bound(&self) -> Option<f64> {
        match self {
            Self::Power(p) if *p <= 2 => Some(0.0),
            Self::Power(3) => Some(6.0),
            Self::Resolvent(z) if z.im != 0.0 => Some(6.0 / z.im.abs().powi(4)),
            Self::Smooth(s) => s.third_derivative_bound,
            _ => None,
        }
    }

    pub fn eval(&self, a: f64) -> Result<C64> {
        self.derivative(0, a)
    }

    pub fn eval_real(&self, a: f64) -> Result<f64> {
        self.require_real()?;
        Ok(self.eval(a)?.re)
    }

    /// `D^j f(a)`.
    pub fn derivative(&self, j: usize, a: f64) -> Result<C64> {
        let v = match self {
            Self::Power(p) => {
                let p = *p as usize;
                if j > p {
                    c(0.0, 0.0)
                } else {
                    let falling: f64 = ((p - j + 1)..=p).map(|x| x as f64).product();
                    c(falling * a.powi((p - j) as i32), 0.0)
                }
            }
            Self::AbsPower(e) => {
                let falling: f64 = (0..j).map(|i| e - i as f64).product();
                let sign = if j % 2 == 1 { a.signum() } else { 1.0 };
                if falling == 0.0 {
                    c(0.0, 0.0)
                } else {
                    c(falling * sign * a.abs().powf(e - j as f64), 0.0)
                }
            }
            Self::Resolvent(z) => {
                let gap = z - a;
                if gap.norm() <= POLE_TOL {
                    return Err(Error::Pole { point: a.to_string(), pole: z.to_string(), tolerance: POLE_TOL });
                }
                let fact: f64 = (1..=j).map(|x| x as f64).product();
                c(fact, 0.0) / gap.powi(j as i32 + 1)
            }
            Self::Smooth(s) => {
                let df = s.derivatives.get(j).ok_or_else(|| Error::InsufficientDerivative {
                    name: s.name.clone(),
                    needed: j,
                    available: s.order(),
                })?;
                c(df(a), 0.0)
            }
        };
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFinite(format!("D^{j} {} at {a}", self.name())));
        }
        Ok(v)
    }

    fn require_real(&self) -> Result<()> {
        if self.is_complex_valued() {
            Err(Error::ComplexValued(self.name()))
        } else {
            Ok(())
        }
    }

    fn has_derivative(&self, j: usize) -> bool {
        match self {
            Self::Smooth(s) => j <= s.order(),
            _ => true,
        }
    }
}

/// Snaps points to cluster representatives and returns them sorted.
fn cluster(points: &[f64]) -> Vec<f64> {
    let scale = points.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let tol = CONFLUENCE_RTOL * scale;
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(sorted.len());
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] > tol {
            let group = &sorted[start..i];
            let rep = group.iter().sum::<f64>() / group.len() as f64;
            out.extend(std::iter::repeat(rep).take(group.len()));
            start = i;
        }
    }
    out
}

fn validate(points: &[f64]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::EmptyPoints);
    }
    let k = points.len() - 1;
    if k > MAX_ORDER {
        return Err(Error::OrderTooHigh(k));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("divided difference points".into()));
    }
    Ok(k)
}

/// `Δ^k f(points)` with `k = points.len() - 1`, for real or complex valued `f`.
pub fn divided_difference_complex(f: &ScalarFunctionSpec, points: &[f64]) -> Result<C64> {
    let k = validate(points)?;
    let pts = cluster(points);
    match f {
        ScalarFunctionSpec::Power(p) => Ok(c(complete_homogeneous(*p as i64 - k as i64, &pts), 0.0)),
        ScalarFunctionSpec::Resolvent(z) => {
            let mut acc = c(1.0, 0.0);
            for &x in &pts {
                let gap = z - x;
                if gap.norm() <= POLE_TOL {
                    return Err(Error::Pole { point: x.to_string(), pole: z.to_string(), tolerance: POLE_TOL });
                }
                acc /= gap;
            }
            Ok(acc)
        }
        _ => hermite_table(f, &pts),
    }
}

/// Real-valued entry point; rejects complex valued functions.
pub fn divided_difference(f: &ScalarFunctionSpec, points: &[f64]) -> Result<f64> {
    f.require_real()?;
    Ok(divided_difference_complex(f, points)?.re)
}

/// Complete homogeneous symmetric polynomial `h_m(x)`; zero for `m < 0`.
fn complete_homogeneous(m: i64, x: &[f64]) -> f64 {
    if m < 0 {
        return 0.0;
    }
    let m = m as usize;
    let mut h = vec![0.0; m + 1];
    h[0] = 1.0;
    for &xi in x {
        for j in 1..=m {
            h[j] += xi * h[j - 1];
        }
    }
    h[m]
}

/// Newton table on sorted, clustered points with Hermite entries on confluent blocks.
fn hermite_table(f: &ScalarFunctionSpec, pts: &[f64]) -> Result<C64> {
    let k = pts.len() - 1;
    let scale = pts.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    // table[j][i] = Δ^j f(pts[i..=i+j])
    let mut table: Vec<Vec<C64>> = Vec::with_capacity(k + 1);
    table.push(pts.iter().map(|&x| f.eval(x)).collect::<Result<_>>()?);
    let mut factorial = 1.0;
    for j in 1..=k {
        factorial *= j as f64;
        let mut row = Vec::with_capacity(k + 1 - j);
        for i in 0..=(k - j) {
            let spread = pts[i + j] - pts[i];
            let entry = if spread == 0.0 {
                f.derivative(j, pts[i])? / factorial
            } else if spread <= NEAR_CONFLUENT_RTOL * scale && f.has_derivative(j) {
                simplex_integral(f, &pts[i..=i + j], SimplexQuadrature::default_for(j)?)?
            } else {
                (table[j - 1][i + 1] - table[j - 1][i]) / spread
            };
            row.push(entry);
        }
        table.push(row);
    }
    Ok(table[k][0])
}

fn simplex_integral(f: &ScalarFunctionSpec, points: &[f64], quad: &SimplexQuadrature) -> Result<C64> {
    let k = points.len() - 1;
    let mut acc = crate::numeric::KahanComplex::new();
    for (tau, w) in quad.points.iter().zip(&quad.weights) {
        let x: f64 = tau.iter().zip(points).map(|(t, p)| t * p).sum();
        acc.add(f.derivative(k, x)? * *w);
    }
    Ok(acc.value())
}

/// Genocchi–Hermite representation `Δ^k f(a) = ∫_{T_k} D^k f(τ·a) dτ`; `Δ^0 f(a) = f(a)`.
pub fn genocchi_hermite(f: &ScalarFunctionSpec, points: &[f64], quad: &SimplexQuadrature) -> Result<f64> {
    f.require_real()?;
    let k = validate(points)?;
    if k == 0 {
        return f.eval_real(points[0]);
    }
    if quad.order != k {
        return Err(Error::DimensionMismatch(format!("quadrature of order {} for {} points", quad.order, points.len())));
    }
    Ok(simplex_integral(f, points, quad)?.re)
}

/// Splits `f(a) - f(b)` into the Taylor part `Σ_{p=1}^k (a-b)^p/p! D^p f(b)` and the remainder
/// `(a-b)^{k+1} Δ^{k+1} f(a, b, ..., b)` with `b` repeated `k + 1` times.
pub fn taylor_taylor_remainder(f: &ScalarFunctionSpec, a: f64, b: f64, k: usize) -> Result<(f64, f64)> {
    f.require_real()?;
    if k + 1 > MAX_ORDER {
        return Err(Error::OrderTooHigh(k + 1));
    }
    let mut expansion = 0.0;
    let mut fact = 1.0;
    for p in 1..=k {
        fact *= p as f64;
        expansion += (a - b).powi(p as i32) / fact * f.derivative(p, b)?.re;
    }
    let mut pts = vec![a];
    pts.extend(std::iter::repeat(b).take(k + 1));
    let remainder = (a - b).powi(k as i32 + 1) * divided_difference(f, &pts)?;
    Ok((expansion, remainder))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn cube_first_difference() {
        assert_eq!(divided_difference(&ScalarFunctionSpec::Power(3), &[1.0, 2.0]).unwrap(), 7.0);
    }

    #[test]
    fn confluent_point_is_derivative() {
        let v = divided_difference(&ScalarFunctionSpec::Power(3), &[2.0, 2.0]).unwrap();
        assert_eq!(v, 12.0);
        let s = divided_difference(&ScalarFunctionSpec::sin(), &[0.3, 0.3, 0.3]).unwrap();
        assert!(close(s, -(0.3f64).sin() / 2.0, 1e-15));
    }

    #[test]
    fn resolvent_first_difference() {
        let v = divided_difference_complex(&ScalarFunctionSpec::Resolvent(c(0.0, 2.0)), &[1.0, -1.0]).unwrap();
        assert!((v - c(-0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn resolvent_real_entry_rejected() {
        assert!(matches!(
            divided_difference(&ScalarFunctionSpec::Resolvent(c(0.0, 1.0)), &[0.0]),
            Err(Error::ComplexValued(_))
        ));
    }

    #[test]
    fn order_four_rejected() {
        assert!(matches!(
            divided_difference(&ScalarFunctionSpec::Power(5), &[0.0, 1.0, 2.0, 3.0, 4.0]),
            Err(Error::OrderTooHigh(4))
        ));
    }

    #[test]
    fn missing_derivative_reported() {
        let f = ScalarFunctionSpec::Smooth(SmoothCallable::new("g", |x| x * x));
        assert!(matches!(divided_difference(&f, &[1.0, 1.0]), Err(Error::InsufficientDerivative { .. })));
        assert!(close(divided_difference(&f, &[1.0, 3.0]).unwrap(), 4.0, 1e-15));
    }

    #[test]
    fn quadratic_second_difference_is_one() {
        let v = genocchi_hermite(&ScalarFunctionSpec::Power(2), &[0.0, 1.0, 5.0], SimplexQuadrature::default_for(2).unwrap()).unwrap();
        assert!(close(v, 1.0, 1e-14));
    }

    #[test]
    fn taylor_taylor_examples() {
        let (e, r) = taylor_taylor_remainder(&ScalarFunctionSpec::Power(2), 2.0, 1.0, 1).unwrap();
        assert_eq!((e, r), (2.0, 1.0));
        let (e, r) = taylor_taylor_remainder(&ScalarFunctionSpec::Power(3), 1.0, 0.0, 2).unwrap();
        assert_eq!((e, r), (0.0, 1.0));
    }

    #[test]
    fn mixed_cluster_uses_hermite_entries() {
        // sin on (a, a, b): (Δf(a,b) - f'(a)) / (b - a)
        let (a, b) = (0.2f64, 1.1f64);
        let expected = ((b.sin() - a.sin()) / (b - a) - a.cos()) / (b - a);
        let v = divided_difference(&ScalarFunctionSpec::sin(), &[a, b, a]).unwrap();
        assert!(close(v, expected, 1e-13));
    }
}
