//! Independent sums `X = Σ S_i` of random self-adjoint matrices and their exchangeable triples.
//!
//! An exchangeable triple `(X, X', X'')` replaces the summand at one uniformly chosen index
//! `I` by independent copies: `X' = X + S'_I - S_I`, `X'' = X + S''_I - S_I`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::linalg::{self, c, ntrace, zeros, CMatrix, Hermitian, C64};
use crate::numeric::{KahanComplex, KahanMatrix};
use crate::rng::RngStream;

/// Default cap on the number of enumerated states.
pub const EXACT_ORACLE_BUDGET: f64 = 2e6;

/// Law of the coefficient `ξ` of `S = ξ B`; every law has mean zero and variance one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientLaw {
    Rademacher,
    Gaussian,
    /// Uniform on `[-√3, √3]`.
    Uniform,
}

impl CoefficientLaw {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Self::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Gaussian => rng.sample(StandardNormal),
            Self::Uniform => 3f64.sqrt() * (2.0 * rng.gen::<f64>() - 1.0),
        }
    }

    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Self::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            _ => None,
        }
    }

    /// `E|ξ|^q`.
    pub fn abs_moment(&self, q: f64) -> f64 {
        match self {
            Self::Rademacher => 1.0,
            Self::Gaussian => 2f64.powf(q / 2.0) * gamma((q + 1.0) / 2.0) / PI.sqrt(),
            Self::Uniform => 3f64.powf(q / 2.0) / (q + 1.0),
        }
    }

    /// `E|ξ - ξ'|^q` for an independent copy `ξ'`.
    pub fn abs_diff_moment(&self, q: f64) -> f64 {
        match self {
            Self::Rademacher => 0.5 * 2f64.powf(q),
            Self::Gaussian => 2f64.powf(q) * gamma((q + 1.0) / 2.0) / PI.sqrt(),
            Self::Uniform => 2f64.powf(q + 1.0) * 3f64.powf(q / 2.0) / ((q + 1.0) * (q + 2.0)),
        }
    }

    /// `ess sup |ξ|`.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Self::Rademacher => 1.0,
            Self::Gaussian => f64::INFINITY,
            Self::Uniform => 3f64.sqrt(),
        }
    }
}

/// Law of the entry variable of a [`SummandModel::SparseEntry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    Uniform,
}

impl From<EntryLaw> for CoefficientLaw {
    fn from(l: EntryLaw) -> Self {
        match l {
            EntryLaw::Rademacher => CoefficientLaw::Rademacher,
            EntryLaw::Uniform => CoefficientLaw::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub matrix: Hermitian,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SummandModel {
    FiniteSupport { atoms: Vec<Atom> },
    /// `S = ε A` with `ε = ±1`.
    RademacherCoefficient { coefficient: Hermitian },
    /// `S = γ A` with `γ` standard normal.
    GaussianCoefficient { coefficient: Hermitian },
    /// `S = scale · ξ (E_jk + E_kj) / √2`.
    SparseEntry { row: usize, col: usize, scale: f64, law: EntryLaw },
}

/// Serializable description of an independent sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
    pub summands: Vec<SummandModel>,
}

impl EnsembleSpec {
    pub fn n(&self) -> usize {
        self.summands.len()
    }

    /// Content hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::report::content_hash(self)
    }
}

/// Resolved law of one summand.
#[derive(Clone, Debug)]
pub enum SummandLaw {
    Discrete(Vec<(CMatrix, f64)>),
    /// `S = ξ B`.
    Coefficient(CMatrix, CoefficientLaw),
}

impl SummandLaw {
    pub fn mean(&self, d: usize) -> CMatrix {
        match self {
            Self::Discrete(atoms) => {
                let mut acc = KahanMatrix::new(d, d);
                for (a, p) in atoms {
                    acc.add_scaled(a, c(*p, 0.0));
                }
                acc.value()
            }
            Self::Coefficient(..) => zeros(d),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> CMatrix {
        match self {
            Self::Discrete(atoms) => {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                for (a, p) in atoms {
                    cum += p;
                    if u < cum {
                        return a.clone();
                    }
                }
                atoms[atoms.len() - 1].0.clone()
            }
            Self::Coefficient(b, law) => b * c(law.sample(rng), 0.0),
        }
    }

    /// Finite support as `(matrix, probability)`, when the law is discrete.
    pub fn atoms(&self) -> Option<Vec<(CMatrix, f64)>> {
        match self {
            Self::Discrete(atoms) => Some(atoms.clone()),
            Self::Coefficient(b, law) => {
                law.atoms().map(|xs| xs.into_iter().map(|(x, p)| (b * c(x, 0.0), p)).collect())
            }
        }
    }

    /// Centered directions `(B, w)` with `Var_⊗ S = Σ w B ⊗ B`.
    pub fn centered_directions(&self, d: usize) -> Vec<(CMatrix, f64)> {
        match self {
            Self::Discrete(atoms) => {
                let m = self.mean(d);
                atoms.iter().map(|(a, p)| (a - &m, *p)).collect()
            }
            Self::Coefficient(b, _) => vec![(b.clone(), 1.0)],
        }
    }

    /// `ess sup ‖S - ES‖`.
    pub fn sup_centered_norm(&self, d: usize) -> f64 {
        match self {
            Self::Discrete(_) => {
                self.centered_directions(d).iter().map(|(b, _)| linalg::op_norm(b)).fold(0.0, f64::max)
            }
            Self::Coefficient(b, law) => law.sup_abs() * linalg::op_norm(b),
        }
    }

    /// `E tr |S - S'|^q`.
    pub fn diff_trace_moment(&self, q: f64) -> f64 {
        match self {
            Self::Discrete(atoms) => {
                let mut acc = 0.0;
                for (a, p) in atoms {
                    for (b, r) in atoms {
                        acc += p * r * linalg::trace_abs_power(&(a - b), q);
                    }
                }
                acc
            }
            Self::Coefficient(b, law) => law.abs_diff_moment(q) * linalg::trace_abs_power(b, q),
        }
    }

    /// Law of `‖S - S'‖` when discrete, with equal values merged.
    pub fn diff_norm_atoms(&self) -> Option<Vec<(f64, f64)>> {
        let atoms = self.atoms()?;
        let mut out = Vec::new();
        for (a, p) in &atoms {
            for (b, r) in &atoms {
                out.push((linalg::op_norm(&(a - b)), p * r));
            }
        }
        Some(merge_atoms(out))
    }

    /// Law of `‖S‖` when discrete.
    pub fn norm_atoms(&self) -> Option<Vec<(f64, f64)>> {
        let atoms = self.atoms()?;
        Some(merge_atoms(atoms.iter().map(|(a, p)| (linalg::op_norm(a), *p)).collect()))
    }

    /// `ess sup ‖S - S'‖`.
    pub fn sup_diff_norm(&self) -> f64 {
        match self {
            Self::Discrete(atoms) => {
                let mut m = 0.0f64;
                for (a, _) in atoms {
                    for (b, _) in atoms {
                        m = m.max(linalg::op_norm(&(a - b)));
                    }
                }
                m
            }
            Self::Coefficient(b, law) => 2.0 * law.sup_abs() * linalg::op_norm(b),
        }
    }
}

/// Merges values equal to within `1e-12` relative; output sorted by value.
pub fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (v, p) in atoms {
        match out.last_mut() {
            Some((lv, lp)) if (v - *lv).abs() <= 1e-12 * lv.abs().max(1.0) => *lp += p,
            _ => out.push((v, p)),
        }
    }
    out
}

/// One draw of an exchangeable triple together with the underlying summands.
#[derive(Clone, Debug)]
pub struct ExchangeableTriple {
    pub x: CMatrix,
    pub xp: CMatrix,
    pub xpp: CMatrix,
    pub index: usize,
    pub s: Vec<CMatrix>,
    pub sp: Vec<CMatrix>,
    pub spp: Vec<CMatrix>,
}

/// Validated ensemble with resolved summand laws.
#[derive(Clone, Debug)]
pub struct Ensemble {
    spec: EnsembleSpec,
    laws: Vec<SummandLaw>,
    mean: CMatrix,
}

impl Ensemble {
    pub fn new(spec: EnsembleSpec) -> Result<Self> {
        let d = spec.d;
        if d == 0 {
            return Err(Error::InvalidEnsemble("dimension must be positive".into()));
        }
        if spec.summands.is_empty() {
            return Err(Error::InvalidEnsemble("at least one summand is required".into()));
        }
        let mut laws = Vec::with_capacity(spec.summands.len());
        for (i, s) in spec.summands.iter().enumerate() {
            laws.push(resolve(i, s, d)?);
        }
        let mut acc = KahanMatrix::new(d, d);
        for l in &laws {
            acc.add(&l.mean(d));
        }
        Ok(Self { mean: acc.value(), spec, laws })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn n(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[SummandLaw] {
        &self.laws
    }

    /// `E X`.
    pub fn mean(&self) -> &CMatrix {
        &self.mean
    }

    pub fn is_scalar(&self) -> bool {
        self.spec.d == 1
    }

    /// Whether every summand has finite support.
    pub fn is_enumerable(&self) -> bool {
        self.laws.iter().all(|l| l.atoms().is_some())
    }

    /// Whether every coefficient is Gaussian.
    pub fn is_gaussian(&self) -> bool {
        self.laws.iter().all(|l| matches!(l, SummandLaw::Coefficient(_, CoefficientLaw::Gaussian)))
    }

    pub fn default_stream(&self) -> RngStream {
        RngStream::new(self.spec.seed, 0)
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut Vec<CMatrix>) {
        out.clear();
        for l in &self.laws {
            out.push(l.sample(rng));
        }
    }

    pub fn sample_summands(&self, stream: &RngStream, draw: u64) -> Vec<CMatrix> {
        let mut rng = stream.draw(draw);
        let mut out = Vec::with_capacity(self.n());
        self.sample_into(&mut rng, &mut out);
        out
    }

    /// One draw of `X`; deterministic in `(stream, draw)`.
    pub fn sample_sum(&self, stream: &RngStream, draw: u64) -> CMatrix {
        let mut rng = stream.draw(draw);
        let d = self.d();
        let mut x = zeros(d);
        for l in &self.laws {
            match l {
                SummandLaw::Coefficient(b, law) => {
                    let xi = law.sample(&mut rng);
                    x.zip_apply(b, |xv, bv| *xv += bv * xi);
                }
                _ => x += l.sample(&mut rng),
            }
        }
        x
    }

    /// One draw of `(X, X', X'')`; deterministic in `(stream, draw)`.
    pub fn sample_triple(&self, stream: &RngStream, draw: u64) -> ExchangeableTriple {
        let mut rng = stream.draw(draw);
        let mut s = Vec::new();
        let mut sp = Vec::new();
        let mut spp = Vec::new();
        self.sample_into(&mut rng, &mut s);
        self.sample_into(&mut rng, &mut sp);
        self.sample_into(&mut rng, &mut spp);
        let index = rng.gen_range(0..self.n());
        let mut x = zeros(self.d());
        for m in &s {
            x += m;
        }
        let xp = &x + &sp[index] - &s[index];
        let xpp = &x + &spp[index] - &s[index];
        ExchangeableTriple { x, xp, xpp, index, s, sp, spp }
    }

    /// Atom lists for every summand; fails unless the ensemble is enumerable.
    pub fn atom_lists(&self) -> Result<Vec<Vec<(CMatrix, f64)>>> {
        self.laws
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.atoms().ok_or_else(|| Error::InvalidEnsemble(format!("summand {i} does not have finite support")))
            })
            .collect()
    }

    /// Number of joint summand configurations `Π K_i`.
    pub fn sum_state_count(&self) -> f64 {
        self.laws.iter().map(|l| l.atoms().map_or(f64::INFINITY, |a| a.len() as f64)).product()
    }

    /// Number of joint states `(S, S', S'', I)`.
    pub fn triple_state_count(&self) -> f64 {
        self.sum_state_count().powi(3) * self.n() as f64
    }

    /// `E φ(S_1, ..., S_n, X)` by enumeration of all summand configurations.
    pub fn exact_sum_expectation<F>(&self, budget: f64, mut phi: F) -> Result<C64>
    where
        F: FnMut(&[CMatrix], &CMatrix) -> Result<C64>,
    {
        let lists = self.atom_lists()?;
        let needed = self.sum_state_count();
        if needed > budget {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let mut acc = KahanComplex::new();
        for_each_config(&lists, |summands, w| {
            let mut x = zeros(self.d());
            for m in summands {
                x += *m;
            }
            let owned: Vec<CMatrix> = summands.iter().map(|m| (*m).clone()).collect();
            acc.add(phi(&owned, &x)? * w);
            Ok(())
        })?;
        Ok(acc.value())
    }

    /// `E φ(X, X', X'', ...)` by enumeration of every `(S, S', S'', I)`.
    pub fn exact_triple_expectation<F>(&self, budget: f64, mut phi: F) -> Result<C64>
    where
        F: FnMut(&ExchangeableTriple) -> Result<C64>,
    {
        Ok(self.exact_triple_expectations(budget, 1, |t| Ok(vec![phi(t)?]))?[0])
    }

    /// Componentwise `E φ(X, X', X'', ...)` for a vector-valued `φ` of fixed width.
    pub fn exact_triple_expectations<F>(&self, budget: f64, width: usize, mut phi: F) -> Result<Vec<C64>>
    where
        F: FnMut(&ExchangeableTriple) -> Result<Vec<C64>>,
    {
        let lists = self.atom_lists()?;
        let needed = self.triple_state_count();
        if needed > budget {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let n = self.n();
        let d = self.d();
        let configs = collect_configs(&lists);
        let mut acc = vec![KahanComplex::new(); width];
        let mut t = ExchangeableTriple {
            x: zeros(d),
            xp: zeros(d),
            xpp: zeros(d),
            index: 0,
            s: Vec::new(),
            sp: Vec::new(),
            spp: Vec::new(),
        };
        for (s, ws) in &configs {
            let mut x = zeros(d);
            for m in s {
                x += m;
            }
            for (sp, wp) in &configs {
                for (spp, wpp) in &configs {
                    for i in 0..n {
                        t.xp = &x + &sp[i] - &s[i];
                        t.xpp = &x + &spp[i] - &s[i];
                        t.x = x.clone();
                        t.index = i;
                        t.s.clone_from(s);
                        t.sp.clone_from(sp);
                        t.spp.clone_from(spp);
                        let values = phi(&t)?;
                        if values.len() != width {
                            return Err(Error::DimensionMismatch(format!(
                                "expected {width} values, got {}",
                                values.len()
                            )));
                        }
                        let w = ws * wp * wpp / n as f64;
                        for (a, v) in acc.iter_mut().zip(values) {
                            a.add(v * w);
                        }
                    }
                }
            }
        }
        Ok(acc.iter().map(KahanComplex::value).collect())
    }

    /// `Σ_i E(S_i - ES_i)²`.
    pub fn variance_matrix(&self) -> CMatrix {
        let d = self.d();
        let mut acc = KahanMatrix::new(d, d);
        for l in &self.laws {
            for (b, w) in l.centered_directions(d) {
                acc.add_scaled(&(&b * &b), c(w, 0.0));
            }
        }
        acc.value()
    }

    /// Centered directions of all summands: `Var_⊗ X = Σ w B ⊗ B`.
    pub fn centered_directions(&self) -> Vec<(CMatrix, f64)> {
        self.laws.iter().flat_map(|l| l.centered_directions(self.d())).collect()
    }
}

fn resolve(i: usize, s: &SummandModel, d: usize) -> Result<SummandLaw> {
    let check_dim = |m: &Hermitian| {
        if m.dim() != d {
            Err(Error::InvalidEnsemble(format!("summand {i} has dimension {}, expected {d}", m.dim())))
        } else {
            Ok(())
        }
    };
    Ok(match s {
        SummandModel::FiniteSupport { atoms } => {
            if atoms.is_empty() {
                return Err(Error::InvalidEnsemble(format!("summand {i} has no atoms")));
            }
            let mut total = 0.0;
            for a in atoms {
                check_dim(&a.matrix)?;
                if !(a.prob > 0.0 && a.prob.is_finite()) {
                    return Err(Error::InvalidEnsemble(format!("summand {i} has probability {}", a.prob)));
                }
                total += a.prob;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidEnsemble(format!("summand {i} probabilities sum to {total}")));
            }
            SummandLaw::Discrete(atoms.iter().map(|a| (a.matrix.matrix().clone(), a.prob)).collect())
        }
        SummandModel::RademacherCoefficient { coefficient } => {
            check_dim(coefficient)?;
            SummandLaw::Coefficient(coefficient.matrix().clone(), CoefficientLaw::Rademacher)
        }
        SummandModel::GaussianCoefficient { coefficient } => {
            check_dim(coefficient)?;
            SummandLaw::Coefficient(coefficient.matrix().clone(), CoefficientLaw::Gaussian)
        }
        SummandModel::SparseEntry { row, col, scale, law } => {
            if *row >= d || *col >= d {
                return Err(Error::InvalidEnsemble(format!("summand {i} entry ({row}, {col}) outside dimension {d}")));
            }
            if !scale.is_finite() {
                return Err(Error::InvalidEnsemble(format!("summand {i} has scale {scale}")));
            }
            let mut b = zeros(d);
            b[(*row, *col)] += c(scale * FRAC_1_SQRT_2, 0.0);
            b[(*col, *row)] += c(scale * FRAC_1_SQRT_2, 0.0);
            SummandLaw::Coefficient(b, (*law).into())
        }
    })
}

type Config = (Vec<CMatrix>, f64);

fn collect_configs(lists: &[Vec<(CMatrix, f64)>]) -> Vec<Config> {
    let mut out = Vec::new();
    let _ = for_each_config(lists, |ms, w| {
        out.push((ms.iter().map(|m| (*m).clone()).collect(), w));
        Ok(())
    });
    out
}

/// Visits every joint configuration in lexicographic order with its probability.
fn for_each_config<F>(lists: &[Vec<(CMatrix, f64)>], mut visit: F) -> Result<()>
where
    F: FnMut(&[&CMatrix], f64) -> Result<()>,
{
    let n = lists.len();
    let mut idx = vec![0usize; n];
    loop {
        let ms: Vec<&CMatrix> = (0..n).map(|i| &lists[i][idx[i]].0).collect();
        let w: f64 = (0..n).map(|i| lists[i][idx[i]].1).product();
        visit(&ms, w)?;
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < lists[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// How an identity or statistic is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    Exact { budget: f64 },
    MonteCarlo { samples: u64, seed: u64 },
}

impl EvalMode {
    pub fn exact() -> Self {
        Self::Exact { budget: EXACT_ORACLE_BUDGET }
    }

    pub fn monte_carlo(samples: u64, seed: u64) -> Self {
        Self::MonteCarlo { samples, seed }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Exact { .. } => "exact",
            Self::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

/// Outcome of the linear-regression check `E[X - X' | X] = n^{-1}(X - EX)`.
#[derive(Clone, Debug, Serialize)]
pub struct RegressionCheck {
    /// Exact: largest entrywise deviation over the atoms of `X`. Monte Carlo: largest
    /// deviation of `E tr[G(X)((X - X') - n^{-1}(X - EX))]` from zero over `G ∈ {I, X, X²}`.
    pub residual: f64,
    pub se: f64,
    pub mode: &'static str,
}

pub fn linear_regression_check(ens: &Ensemble, mode: EvalMode) -> Result<RegressionCheck> {
    let n = ens.n() as f64;
    let d = ens.d();
    match mode {
        EvalMode::Exact { budget } => {
            let lists = ens.atom_lists()?;
            let needed = ens.sum_state_count() * lists.iter().map(|l| l.len()).sum::<usize>() as f64;
            if needed > budget {
                return Err(Error::BudgetExceeded { needed, budget });
            }
            // Conditional mean given the summands, then aggregated over equal values of X.
            let mut groups: BTreeMap<Vec<i64>, (KahanMatrix, KahanMatrix, f64)> = BTreeMap::new();
            for_each_config(&lists, |s, w| {
                let mut x = zeros(d);
                for m in s {
                    x += *m;
                }
                let mut cond = KahanMatrix::new(d, d);
                for (i, list) in lists.iter().enumerate() {
                    for (b, p) in list {
                        cond.add_scaled(&(s[i] - b), c(p / n, 0.0));
                    }
                }
                let key: Vec<i64> = x.iter().flat_map(|z| [(z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64]).collect();
                let e = groups.entry(key).or_insert_with(|| (KahanMatrix::new(d, d), KahanMatrix::new(d, d), 0.0));
                e.0.add_scaled(&cond.value(), c(w, 0.0));
                e.1.add_scaled(&x, c(w, 0.0));
                e.2 += w;
                Ok(())
            })?;
            let mut residual = 0.0f64;
            for (cond, x, w) in groups.values() {
                let cond = cond.value() / c(*w, 0.0);
                let x = x.value() / c(*w, 0.0);
                let target = (x - ens.mean()) / c(n, 0.0);
                residual = residual.max(linalg::max_abs(&(cond - target)));
            }
            Ok(RegressionCheck { residual, se: 0.0, mode: "exact" })
        }
        EvalMode::MonteCarlo { samples, seed } => {
            let stream = RngStream::new(seed, 0x7265_6772);
            let mut vals: [Vec<f64>; 3] = Default::default();
            for k in 0..samples {
                let t = ens.sample_triple(&stream, k);
                let centered = &t.x - ens.mean();
                let dev = (&t.x - &t.xp) - &centered / c(n, 0.0);
                let x2 = &t.x * &t.x;
                vals[0].push(ntrace(&dev).re);
                vals[1].push(ntrace(&(&t.x * &dev)).re);
                vals[2].push(ntrace(&(&x2 * &dev)).re);
            }
            // Report the functional with the worst margin `|mean| - 4 SE`.
            let (residual, se) = vals
                .iter()
                .map(|v| {
                    let r = crate::numeric::batch_means(v, crate::numeric::DEFAULT_BATCHES);
                    (r.mean.abs(), r.se)
                })
                .max_by(|a, b| (a.0 - 4.0 * a.1).total_cmp(&(b.0 - 4.0 * b.1)))
                .unwrap_or((0.0, 0.0));
            Ok(RegressionCheck { residual, se, mode: "monte_carlo" })
        }
    }
}

/// Parametrized ensemble families used by the benchmarks and the default suites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EnsembleFamily {
    /// `X = Σ ε_i`, `d = 1`.
    RademacherScalar { n: usize },
    /// Standardized two-point summands `(B - q)/√(q(1-q))` with `B ~ Bernoulli(q)`, `d = 1`.
    TwoPointScalar { n: usize, q: f64 },
    /// `S_i = ε_i D_i` with fixed diagonal `D_i`.
    RademacherDiagonal { d: usize, n: usize },
    /// Sparse-entry summands cycling over the upper triangle, normalized so that `σ² ≈ 1`.
    WignerLike { d: usize, n: usize, law: EntryLaw },
    /// Two-atom summands with unequal probabilities and random non-commuting atoms.
    FiniteSupportToy { d: usize, n: usize, seed: u64 },
    /// `S_i = γ_i A_i` with random `A_i`.
    GaussianCoefficient { d: usize, n: usize, seed: u64 },
    /// `S_i = ε_i A_i` with random `A_i`.
    RademacherCoefficient { d: usize, n: usize, seed: u64 },
}

impl EnsembleFamily {
    pub fn n(&self) -> usize {
        match *self {
            Self::RademacherScalar { n }
            | Self::TwoPointScalar { n, .. }
            | Self::RademacherDiagonal { n, .. }
            | Self::WignerLike { n, .. }
            | Self::FiniteSupportToy { n, .. }
            | Self::GaussianCoefficient { n, .. }
            | Self::RademacherCoefficient { n, .. } => n,
        }
    }

    pub fn with_n(&self, n_new: usize) -> Self {
        let mut f = *self;
        match &mut f {
            Self::RademacherScalar { n }
            | Self::TwoPointScalar { n, .. }
            | Self::RademacherDiagonal { n, .. }
            | Self::WignerLike { n, .. }
            | Self::FiniteSupportToy { n, .. }
            | Self::GaussianCoefficient { n, .. }
            | Self::RademacherCoefficient { n, .. } => *n = n_new,
        }
        f
    }

    pub fn name(&self) -> String {
        match self {
            Self::RademacherScalar { n } => format!("rademacher_scalar(n={n})"),
            Self::TwoPointScalar { n, q } => format!("two_point_scalar(n={n},q={q})"),
            Self::RademacherDiagonal { d, n } => format!("rademacher_diagonal(d={d},n={n})"),
            Self::WignerLike { d, n, law } => format!("wigner_like(d={d},n={n},{law:?})"),
            Self::FiniteSupportToy { d, n, .. } => format!("finite_support_toy(d={d},n={n})"),
            Self::GaussianCoefficient { d, n, .. } => format!("gaussian_coefficient(d={d},n={n})"),
            Self::RademacherCoefficient { d, n, .. } => format!("rademacher_coefficient(d={d},n={n})"),
        }
    }

    pub fn build(&self) -> EnsembleSpec {
        use rand::SeedableRng;
        match *self {
            Self::RademacherScalar { n } => EnsembleSpec {
                d: 1,
                seed: 0,
                summands: (0..n)
                    .map(|_| SummandModel::RademacherCoefficient { coefficient: Hermitian::scalar(1.0) })
                    .collect(),
            },
            Self::TwoPointScalar { n, q } => {
                let s = (q * (1.0 - q)).sqrt();
                let atoms = vec![
                    Atom { matrix: Hermitian::scalar((1.0 - q) / s), prob: q },
                    Atom { matrix: Hermitian::scalar(-q / s), prob: 1.0 - q },
                ];
                EnsembleSpec { d: 1, seed: 0, summands: vec![SummandModel::FiniteSupport { atoms }; n] }
            }
            Self::RademacherDiagonal { d, n } => EnsembleSpec {
                d,
                seed: 0,
                summands: (0..n)
                    .map(|i| {
                        let diag: Vec<f64> =
                            (0..d).map(|j| (1.0 + ((i + j) % 3) as f64) / (2.0 * (n as f64).sqrt())).collect();
                        SummandModel::RademacherCoefficient { coefficient: Hermitian::from_real_diag(&diag) }
                    })
                    .collect(),
            },
            Self::WignerLike { d, n, law } => {
                let positions: Vec<(usize, usize)> = (0..d).flat_map(|j| (j..d).map(move |k| (j, k))).collect();
                let per_row = 2.0 + (d as f64 - 1.0) / 2.0;
                let scale = (positions.len() as f64 / (n as f64 * per_row)).sqrt();
                EnsembleSpec {
                    d,
                    seed: 0,
                    summands: (0..n)
                        .map(|i| {
                            let (row, col) = positions[i % positions.len()];
                            SummandModel::SparseEntry { row, col, scale, law }
                        })
                        .collect(),
                }
            }
            Self::FiniteSupportToy { d, n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let scale = 1.0 / (n as f64).sqrt();
                EnsembleSpec {
                    d,
                    seed,
                    summands: (0..n)
                        .map(|_| {
                            let a = linalg::random_hermitian(&mut rng, d, 2.0 * scale);
                            let b = linalg::random_hermitian(&mut rng, d, 2.0 * scale);
                            SummandModel::FiniteSupport {
                                atoms: vec![
                                    Atom { matrix: Hermitian::new(a), prob: 0.3 },
                                    Atom { matrix: Hermitian::new(b), prob: 0.7 },
                                ],
                            }
                        })
                        .collect(),
                }
            }
            Self::GaussianCoefficient { d, n, seed } | Self::RademacherCoefficient { d, n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let scale = 1.0 / (n as f64).sqrt();
                let gaussian = matches!(self, Self::GaussianCoefficient { .. });
                EnsembleSpec {
                    d,
                    seed,
                    summands: (0..n)
                        .map(|_| {
                            let coefficient = Hermitian::new(linalg::random_hermitian(&mut rng, d, 2.0 * scale));
                            if gaussian {
                                SummandModel::GaussianCoefficient { coefficient }
                            } else {
                                SummandModel::RademacherCoefficient { coefficient }
                            }
                        })
                        .collect(),
                }
            }
        }
    }

    pub fn ensemble(&self) -> Result<Ensemble> {
        Ensemble::new(self.build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_summand_rademacher_second_moment() {
        let ens = EnsembleFamily::RademacherScalar { n: 2 }.ensemble().unwrap();
        let v = ens.exact_sum_expectation(EXACT_ORACLE_BUDGET, |_, x| Ok(ntrace(x).powi(2))).unwrap();
        assert!((v.re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let spec = EnsembleSpec {
            d: 1,
            seed: 0,
            summands: vec![SummandModel::FiniteSupport {
                atoms: vec![Atom { matrix: Hermitian::scalar(1.0), prob: 0.6 }, Atom { matrix: Hermitian::scalar(-1.0), prob: 0.6 }],
            }],
        };
        assert!(matches!(Ensemble::new(spec), Err(Error::InvalidEnsemble(_))));
    }

    #[test]
    fn budget_enforced() {
        let ens = EnsembleFamily::RademacherScalar { n: 30 }.ensemble().unwrap();
        assert!(matches!(
            ens.exact_triple_expectation(EXACT_ORACLE_BUDGET, |_| Ok(c(0.0, 0.0))),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let ens = EnsembleFamily::FiniteSupportToy { d: 2, n: 3, seed: 5 }.ensemble().unwrap();
        let s = RngStream::new(9, 1);
        assert_eq!(ens.sample_sum(&s, 17), ens.sample_sum(&s, 17));
        let t = ens.sample_triple(&s, 3);
        assert_eq!(t.x, ens.sample_triple(&s, 3).x);
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = EnsembleFamily::FiniteSupportToy { d: 2, n: 2, seed: 1 }.build();
        let json = serde_json::to_string(&spec).unwrap();
        let back: EnsembleSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.hash(), spec.hash());
    }

    #[test]
    fn uniform_diff_moment_matches_variance() {
        assert!((CoefficientLaw::Uniform.abs_diff_moment(2.0) - 2.0).abs() < 1e-14);
        assert!((CoefficientLaw::Gaussian.abs_diff_moment(2.0) - 2.0).abs() < 1e-14);
        assert!((CoefficientLaw::Gaussian.abs_moment(4.0) - 3.0).abs() < 1e-13);
    }
}
