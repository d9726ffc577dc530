//! Spectral statistics of independent sums and Monte Carlo spectral estimators.
//!
//! Norms of random matrices are `‖Y‖_q = (E tr|Y|^q)^{1/q}`; for a deterministic matrix this
//! is the normalized Schatten norm.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::ensembles::{merge_atoms, Ensemble, EvalMode};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, C64};
use crate::numeric::{batch_means, fmt17, MeanSe, DEFAULT_BATCHES};
use crate::quadrature::{gauss_hermite_normal, gauss_legendre};
use crate::rng::RngStream;

/// Random restarts for the weak-variance search.
pub const WEAK_VARIANCE_RESTARTS: usize = 64;

/// Relative convergence tolerance of the weak-variance search.
pub const WEAK_VARIANCE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    MonteCarlo,
    /// Value of a maximization that may miss the optimum.
    LowerBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub value: f64,
    pub provenance: Provenance,
    pub se: f64,
}

impl Stat {
    pub fn exact(value: f64) -> Self {
        Self { value, provenance: Provenance::Exact, se: 0.0 }
    }

    pub fn mc(value: f64, se: f64) -> Self {
        Self { value, provenance: Provenance::MonteCarlo, se }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PStat {
    pub p: f64,
    #[serde(flatten)]
    pub stat: Stat,
}

/// Variance and tail statistics of `X = Σ S_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticsReport {
    pub ensemble_hash: String,
    pub d: usize,
    pub n: usize,
    /// `‖Σ E(S_i - ES_i)²‖`.
    pub sigma2: Stat,
    /// `sup_{‖u‖=1} Σ Var[u* S_i u]`.
    pub sigma_star2: Stat,
    /// `max_i ess sup ‖S_i - ES_i‖`.
    pub l: Stat,
    /// `ess sup max_i ‖S_i - S_i'‖`.
    pub l_inf: Stat,
    /// `Σ E tr|S_i - S_i'|³`.
    pub m3: Stat,
    /// `σ²_{2p} = ‖Σ E(S_i - ES_i)²‖_p`.
    pub sigma2_2p: Vec<PStat>,
    /// `L_{2p} = ‖max_i ‖S_i - S_i'‖‖_{2p}`.
    pub l_2p: Vec<PStat>,
    /// `M_{2,p} = ‖Σ (S_i - S_i')²‖_p`.
    pub m2p: Vec<PStat>,
    /// Scalar only: `M_{3,p/3} = ‖Σ |S_i - S_i'|³‖_{p/3}`.
    pub m3_p3_scalar: Vec<PStat>,
    /// Scalar only: `L_p = ‖max_i |S_i - S_i'|‖_p`.
    pub l_p_scalar: Vec<PStat>,
}

impl StatisticsReport {
    fn lookup(list: &[PStat], p: f64) -> Option<Stat> {
        list.iter().find(|s| s.p == p).map(|s| s.stat)
    }

    pub fn sigma2_2p(&self, p: f64) -> Option<Stat> {
        Self::lookup(&self.sigma2_2p, p)
    }

    pub fn l_2p(&self, p: f64) -> Option<Stat> {
        Self::lookup(&self.l_2p, p)
    }

    pub fn m2p(&self, p: f64) -> Option<Stat> {
        Self::lookup(&self.m2p, p)
    }

    pub fn m3_p3_scalar(&self, p: f64) -> Option<Stat> {
        Self::lookup(&self.m3_p3_scalar, p)
    }

    pub fn l_p_scalar(&self, p: f64) -> Option<Stat> {
        Self::lookup(&self.l_p_scalar, p)
    }

    pub const CSV_HEADER: [&'static str; 5] = ["name", "p", "value", "provenance", "se"];

    /// Flat `name,p,value,provenance,se` rows.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        let mut push = |name: &str, p: Option<f64>, s: &Stat| {
            rows.push(vec![
                name.to_string(),
                p.map_or(String::new(), |p| p.to_string()),
                fmt17(s.value),
                format!("{:?}", s.provenance).to_lowercase(),
                fmt17(s.se),
            ]);
        };
        push("sigma2", None, &self.sigma2);
        push("sigma_star2", None, &self.sigma_star2);
        push("l", None, &self.l);
        push("l_inf", None, &self.l_inf);
        push("m3", None, &self.m3);
        for (name, list) in [
            ("sigma2_2p", &self.sigma2_2p),
            ("l_2p", &self.l_2p),
            ("m2p", &self.m2p),
            ("m3_p3_scalar", &self.m3_p3_scalar),
            ("l_p_scalar", &self.l_p_scalar),
        ] {
            for s in list {
                push(name, Some(s.p), &s.stat);
            }
        }
        rows
    }
}

/// `E M^q` for `M` the maximum of independent non-negative discrete variables.
pub fn max_moment(laws: &[Vec<(f64, f64)>], q: f64) -> f64 {
    let mut support: Vec<f64> = laws.iter().flat_map(|l| l.iter().map(|a| a.0)).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let cdf = |x: f64| -> f64 {
        laws.iter().map(|l| l.iter().filter(|a| a.0 <= x).map(|a| a.1).sum::<f64>().min(1.0)).product()
    };
    let mut prev = 0.0;
    let mut acc = 0.0;
    for x in support {
        let f = cdf(x);
        if x > 0.0 {
            acc += x.powf(q) * (f - prev);
        }
        prev = f;
    }
    acc
}

/// Law of `X` for a scalar ensemble with discrete summands, by convolution.
pub fn scalar_distribution(ens: &Ensemble, max_support: usize) -> Result<Vec<(f64, f64)>> {
    if !ens.is_scalar() {
        return Err(Error::DimensionMismatch("scalar distribution of a matrix ensemble".into()));
    }
    let lists = ens.atom_lists()?;
    let laws: Vec<Vec<(f64, f64)>> = lists.iter().map(|l| l.iter().map(|(m, p)| (m[(0, 0)].re, *p)).collect()).collect();
    convolve_laws(&laws, max_support)
}

/// Law of a sum of independent discrete variables, merged; fails past `max_support` atoms.
pub fn convolve_laws(laws: &[Vec<(f64, f64)>], max_support: usize) -> Result<Vec<(f64, f64)>> {
    let mut dist = vec![(0.0, 1.0)];
    for law in laws {
        let mut next = Vec::with_capacity(dist.len() * law.len());
        for (x, p) in &dist {
            for (y, q) in law {
                next.push((x + y, p * q));
            }
        }
        dist = merge_atoms(next);
        if dist.len() > max_support {
            return Err(Error::BudgetExceeded { needed: dist.len() as f64, budget: max_support as f64 });
        }
    }
    Ok(dist)
}

/// `E|Z|^p` for `Z ~ N(mean, var)`.
pub fn gaussian_abs_moment(mean: f64, var: f64, p: f64) -> f64 {
    let sd = var.max(0.0).sqrt();
    if sd == 0.0 {
        return mean.abs().powf(p);
    }
    if mean == 0.0 {
        return sd.powf(p) * 2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / PI.sqrt();
    }
    if p.fract() == 0.0 && (p as u64) % 2 == 0 && p <= 40.0 {
        let (x, w) = gauss_hermite_normal(32);
        return x.iter().zip(&w).map(|(g, w)| w * (mean + sd * g).powf(p)).sum();
    }
    // Composite Gauss–Legendre on a wide window, split at the kink.
    let (lo, hi) = (mean - 14.0 * sd, mean + 14.0 * sd);
    let mut cuts = vec![lo, hi];
    if lo < 0.0 && hi > 0.0 {
        cuts.insert(1, 0.0);
    }
    let (gx, gw) = gauss_legendre(16);
    let panels = 64;
    let mut acc = 0.0;
    for win in cuts.windows(2) {
        let h = (win[1] - win[0]) / panels as f64;
        for k in 0..panels {
            let a = win[0] + k as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                let z = a + h * x;
                let dens = (-(z - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
                acc += h * w * z.abs().powf(p) * dens;
            }
        }
    }
    acc
}

/// Lower bound on `σ*²` by projected gradient ascent with random restarts; exact when `d = 1`.
pub fn weak_variance(ens: &Ensemble) -> Stat {
    let dirs = ens.centered_directions();
    let d = ens.d();
    if d == 1 {
        let v: f64 = dirs.iter().map(|(b, w)| w * b[(0, 0)].re.powi(2)).sum();
        return Stat::exact(v);
    }
    let phi = |u: &nalgebra::DVector<C64>| -> f64 {
        dirs.iter().map(|(b, w)| w * (u.adjoint() * b * u)[(0, 0)].re.powi(2)).sum()
    };
    let grad = |u: &nalgebra::DVector<C64>| -> nalgebra::DVector<C64> {
        let mut g = nalgebra::DVector::<C64>::zeros(d);
        for (b, w) in &dirs {
            let bu = b * u;
            let q = (u.adjoint() * &bu)[(0, 0)].re;
            g += bu * c(4.0 * w * q, 0.0);
        }
        g
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x7765_616b);
    let mut best = 0.0f64;
    let starts: Vec<nalgebra::DVector<C64>> = (0..d)
        .map(|i| {
            let mut e = nalgebra::DVector::<C64>::zeros(d);
            e[i] = c(1.0, 0.0);
            e
        })
        .chain((0..WEAK_VARIANCE_RESTARTS).map(|_| linalg::random_gaussian_matrix(&mut rng, d).column(0).into_owned()))
        .collect();
    for start in starts {
        let mut u = start.normalize();
        let mut val = phi(&u);
        let mut step = 1.0 / dirs.iter().map(|(b, w)| w * linalg::op_norm(b).powi(2)).sum::<f64>().max(1e-300);
        for _ in 0..2000 {
            let g = grad(&u);
            let mut improved = false;
            while step > 1e-300 {
                let cand = (&u + &g * c(step, 0.0)).normalize();
                let cv = phi(&cand);
                if cv >= val {
                    let gain = cv - val;
                    u = cand;
                    val = cv;
                    improved = gain > WEAK_VARIANCE_TOL * val.abs().max(1e-300);
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.max(val);
    }
    Stat { value: best, provenance: Provenance::LowerBound, se: 0.0 }
}

/// Draws of `(S_i - S_i')_i` for Monte Carlo statistics.
fn sample_differences(ens: &Ensemble, stream: &RngStream, k: u64) -> Vec<CMatrix> {
    let s = ens.sample_summands(&stream.substream(0), k);
    let sp = ens.sample_summands(&stream.substream(1), k);
    s.iter().zip(&sp).map(|(a, b)| a - b).collect()
}

/// Computes the [`StatisticsReport`]. Closed-form quantities are always exact; the
/// remaining ones are enumerated in exact mode and sampled in Monte Carlo mode.
pub fn ensemble_statistics(ens: &Ensemble, p_list: &[f64], mode: EvalMode) -> Result<StatisticsReport> {
    for &p in p_list {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidP { p, reason: "statistics need p ≥ 1".into() });
        }
    }
    let var = ens.variance_matrix();
    let laws = ens.laws();
    let d = ens.d();
    let sigma2 = Stat::exact(linalg::op_norm(&var));
    let l = Stat::exact(laws.iter().map(|l| l.sup_centered_norm(d)).fold(0.0, f64::max));
    let l_inf = Stat::exact(laws.iter().map(|l| l.sup_diff_norm()).fold(0.0, f64::max));
    let m3 = Stat::exact(laws.iter().map(|l| l.diff_trace_moment(3.0)).sum());
    let sigma2_2p = p_list.iter().map(|&p| PStat { p, stat: Stat::exact(linalg::schatten_norm(&var, p)) }).collect();

    let diff_laws: Option<Vec<Vec<(f64, f64)>>> = laws.iter().map(|l| l.diff_norm_atoms()).collect();
    let cube_law = if ens.is_scalar() { scalar_diff_power_law(laws, 3) } else { None };
    let square_law = if ens.is_scalar() { scalar_diff_power_law(laws, 2) } else { None };
    let mc = match mode {
        EvalMode::MonteCarlo { samples, seed } => {
            let needs = McNeeds {
                max_norm: diff_laws.is_none(),
                sumsq: square_law.is_none() && !p_list.is_empty(),
                cube: ens.is_scalar() && cube_law.is_none(),
            };
            Some(McReductions::collect(ens, p_list, samples, seed, needs))
        }
        EvalMode::Exact { .. } => None,
    };
    let exact_only = |what: &str| Error::Unsupported(format!("{what} in exact mode needs finite-support summands"));

    let mut l_2p = Vec::new();
    for &p in p_list {
        let stat = match (&diff_laws, &mc) {
            (Some(dl), _) => Stat::exact(max_moment(dl, 2.0 * p).powf(1.0 / (2.0 * p))),
            (None, Some(mc)) => mc_norm(mc.max_norm.iter().map(|m| m.powf(2.0 * p)).collect(), 2.0 * p),
            (None, None) => return Err(exact_only("L_2p")),
        };
        l_2p.push(PStat { p, stat });
    }

    let mut m2p = Vec::new();
    let pair_count: f64 = laws.iter().map(|l| l.atoms().map_or(f64::INFINITY, |a| (a.len() * a.len()) as f64)).product();
    for (j, &p) in p_list.iter().enumerate() {
        let stat = match (mode, &mc) {
            _ if square_law.is_some() => {
                let dist = square_law.as_ref().expect("checked");
                Stat::exact(dist.iter().map(|(v, w)| w * v.powf(p)).sum::<f64>().powf(1.0 / p))
            }
            (_, Some(mc)) => mc_norm(mc.sumsq_trace[j].clone(), p),
            (EvalMode::Exact { budget }, None) => {
                if pair_count > budget {
                    return Err(Error::BudgetExceeded { needed: pair_count, budget });
                }
                Stat::exact(exact_m2p(ens, p)?.powf(1.0 / p))
            }
            (EvalMode::MonteCarlo { .. }, None) => unreachable!("reductions exist in Monte Carlo mode"),
        };
        m2p.push(PStat { p, stat });
    }

    let mut m3_p3_scalar = Vec::new();
    let mut l_p_scalar = Vec::new();
    if ens.is_scalar() {
        for &p in p_list {
            let m3p = match (&cube_law, &mc) {
                (Some(dist), _) => {
                    Stat::exact(dist.iter().map(|(v, w)| w * v.powf(p / 3.0)).sum::<f64>().powf(3.0 / p))
                }
                (None, Some(mc)) => mc_norm(mc.cube_sum.iter().map(|v| v.powf(p / 3.0)).collect(), p / 3.0),
                (None, None) => return Err(exact_only("M_{3,p/3}")),
            };
            m3_p3_scalar.push(PStat { p, stat: m3p });
            let lp = match (&diff_laws, &mc) {
                (Some(dl), _) => Stat::exact(max_moment(dl, p).powf(1.0 / p)),
                (None, Some(mc)) => mc_norm(mc.max_norm.iter().map(|m| m.powf(p)).collect(), p),
                (None, None) => return Err(exact_only("L_p")),
            };
            l_p_scalar.push(PStat { p, stat: lp });
        }
    }

    Ok(StatisticsReport {
        ensemble_hash: ens.spec().hash(),
        d,
        n: ens.n(),
        sigma2,
        sigma_star2: weak_variance(ens),
        l,
        l_inf,
        m3,
        sigma2_2p,
        l_2p,
        m2p,
        m3_p3_scalar,
        l_p_scalar,
    })
}

fn mc_norm(values: Vec<f64>, q: f64) -> Stat {
    let r = batch_means(&values, DEFAULT_BATCHES);
    let v = r.mean.max(0.0).powf(1.0 / q);
    let se = if r.mean > 0.0 { v / (q * r.mean) * r.se } else { r.se };
    Stat::mc(v, se)
}

/// Per-draw reductions of `(S_i - S_i')_i`.
struct McReductions {
    /// `max_i ‖S_i - S_i'‖`.
    max_norm: Vec<f64>,
    /// `tr|Σ (S_i - S_i')²|^p`, one row per `p`.
    sumsq_trace: Vec<Vec<f64>>,
    /// `Σ |S_i - S_i'|³` for scalar ensembles.
    cube_sum: Vec<f64>,
}

/// Which reductions have no closed form and must be sampled.
#[derive(Clone, Copy)]
struct McNeeds {
    max_norm: bool,
    sumsq: bool,
    cube: bool,
}

impl McReductions {
    fn collect(ens: &Ensemble, p_list: &[f64], samples: u64, seed: u64, needs: McNeeds) -> Self {
        let mut out = Self { max_norm: Vec::new(), sumsq_trace: vec![Vec::new(); p_list.len()], cube_sum: Vec::new() };
        if !(needs.max_norm || needs.sumsq || needs.cube) {
            return out;
        }
        let stream = RngStream::new(seed, 0x7374_6174);
        let rows: Vec<(Option<f64>, Vec<f64>, Option<f64>)> = (0..samples)
            .into_par_iter()
            .map(|k| {
                let ds = sample_differences(ens, &stream, k);
                let max = needs.max_norm.then(|| ds.iter().map(linalg::op_norm).fold(0.0, f64::max));
                let mut traces = Vec::new();
                if needs.sumsq {
                    let mut acc = linalg::zeros(ens.d());
                    for m in &ds {
                        acc += m * m;
                    }
                    let ev = linalg::hermitian_eigenvalues(&acc);
                    traces = p_list
                        .iter()
                        .map(|&p| ev.iter().map(|x| x.abs().powf(p)).sum::<f64>() / ev.len() as f64)
                        .collect();
                }
                let cube = needs.cube.then(|| ds.iter().map(|m| m[(0, 0)].re.abs().powi(3)).sum());
                (max, traces, cube)
            })
            .collect();
        for (max, traces, cube) in rows {
            out.max_norm.extend(max);
            for (row, t) in out.sumsq_trace.iter_mut().zip(traces) {
                row.push(t);
            }
            out.cube_sum.extend(cube);
        }
        out
    }
}

/// Law of `Σ |S_i - S_i'|^k` for scalar finite-support summands.
fn scalar_diff_power_law(laws: &[crate::ensembles::SummandLaw], k: i32) -> Option<Vec<(f64, f64)>> {
    let cubes: Option<Vec<Vec<(f64, f64)>>> = laws
        .iter()
        .map(|l| {
            let atoms = l.atoms()?;
            let mut out = Vec::new();
            for (a, pa) in &atoms {
                for (b, pb) in &atoms {
                    out.push(((a[(0, 0)].re - b[(0, 0)].re).abs().powi(k), pa * pb));
                }
            }
            Some(merge_atoms(out))
        })
        .collect();
    convolve_laws(&cubes?, 1_000_000).ok()
}

/// `E tr(Σ (S_i - S_i')²)^p` by enumeration of all difference configurations.
fn exact_m2p(ens: &Ensemble, p: f64) -> Result<f64> {
    let d = ens.d();
    let diffs: Vec<Vec<(CMatrix, f64)>> = ens
        .atom_lists()?
        .iter()
        .map(|atoms| {
            let mut out = Vec::new();
            for (a, pa) in atoms {
                for (b, pb) in atoms {
                    let m = a - b;
                    out.push((&m * &m, pa * pb));
                }
            }
            out
        })
        .collect();
    let mut idx = vec![0usize; diffs.len()];
    let mut acc = crate::numeric::KahanSum::new();
    loop {
        let mut sum = linalg::zeros(d);
        let mut w = 1.0;
        for (i, list) in diffs.iter().enumerate() {
            sum += &list[idx[i]].0;
            w *= list[idx[i]].1;
        }
        acc.add(w * linalg::trace_abs_power(&sum, p));
        let mut k = diffs.len();
        loop {
            if k == 0 {
                return Ok(acc.value());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < diffs[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `‖Y‖_q` estimate with the standard error of the inner mean `E tr|Y|^q`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LqEstimate {
    pub value: f64,
    pub inner: MeanSe,
}

impl LqEstimate {
    /// Delta-method standard error of `value`.
    pub fn se(&self, q: f64) -> f64 {
        if self.inner.mean > 0.0 {
            self.value / (q * self.inner.mean) * self.inner.se
        } else {
            self.inner.se
        }
    }
}

pub fn lq_norm(samples: &[CMatrix], q: f64) -> Result<LqEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidInput(format!("q must be positive, got {q}")));
    }
    let vals: Vec<f64> = samples.iter().map(|y| linalg::trace_abs_power(y, q)).collect();
    let inner = batch_means(&vals, DEFAULT_BATCHES);
    Ok(LqEstimate { value: inner.mean.max(0.0).powf(1.0 / q), inner })
}

/// Complex mean with componentwise standard errors.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComplexEstimate {
    pub value: C64,
    pub se_re: f64,
    pub se_im: f64,
}

impl ComplexEstimate {
    pub fn from_values(values: &[C64]) -> Self {
        let re: Vec<f64> = values.iter().map(|z| z.re).collect();
        let im: Vec<f64> = values.iter().map(|z| z.im).collect();
        let (r, i) = (batch_means(&re, DEFAULT_BATCHES), batch_means(&im, DEFAULT_BATCHES));
        Self { value: c(r.mean, i.mean), se_re: r.se, se_im: i.se }
    }

    /// Standard error of the modulus of the estimate, bounded by the joint error.
    pub fn se(&self) -> f64 {
        self.se_re.hypot(self.se_im)
    }
}

/// `G_ζ(Y) = E tr (ζ - Y)^{-1}`.
pub fn cauchy_transform(samples: &[CMatrix], zeta: C64) -> Result<ComplexEstimate> {
    if zeta.im == 0.0 {
        return Err(Error::InvalidInput(format!("Cauchy transform needs Im ζ ≠ 0, got ζ = {zeta}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let vals: Vec<C64> = samples
        .iter()
        .map(|y| linalg::resolvent(y, zeta).map(|r| linalg::ntrace(&r)))
        .collect::<Result<_>>()?;
    Ok(ComplexEstimate::from_values(&vals))
}

/// Expected spectral distribution as a histogram with strictly increasing edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralHistogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl SpectralHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `bin_center,mass` rows.
    pub const CSV_HEADER: [&'static str; 2] = ["bin_center", "mass"];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.centers().iter().zip(&self.masses).map(|(c, m)| vec![fmt17(*c), fmt17(*m)]).collect()
    }

    pub fn moment(&self, k: i32) -> f64 {
        self.centers().iter().zip(&self.masses).map(|(c, m)| m * c.powi(k)).sum()
    }
}

/// Histogram of all eigenvalues of all samples; Freedman–Diaconis bins unless `bins` is given.
pub fn empirical_msd(samples: &[CMatrix], bins: Option<usize>) -> Result<SpectralHistogram> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if bins == Some(0) {
        return Err(Error::InvalidInput("bin count must be positive".into()));
    }
    let mut ev: Vec<f64> = samples.iter().flat_map(linalg::hermitian_eigenvalues).collect();
    ev.sort_by(f64::total_cmp);
    let n = ev.len();
    let (mut lo, mut hi) = (ev[0], ev[n - 1]);
    if hi - lo <= 1e-12 * lo.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    let count = match bins {
        Some(b) => b,
        None => {
            let q = |f: f64| ev[((n - 1) as f64 * f).round() as usize];
            let iqr = q(0.75) - q(0.25);
            if iqr > 0.0 {
                let width = 2.0 * iqr * (n as f64).powf(-1.0 / 3.0);
                (((hi - lo) / width).ceil() as usize).clamp(1, 10_000)
            } else {
                ((n as f64).log2().ceil() as usize + 1).max(1)
            }
        }
    };
    let width = (hi - lo) / count as f64;
    let edges: Vec<f64> = (0..=count).map(|i| if i == count { hi } else { lo + i as f64 * width }).collect();
    let mut masses = vec![0.0; count];
    for x in ev {
        let k = (((x - lo) / width).floor() as usize).min(count - 1);
        masses[k] += 1.0 / n as f64;
    }
    Ok(SpectralHistogram { edges, masses })
}

/// Check of `½√σ² ≤ E‖X - EX‖ ≤ √(2σ² log 2d) + ⅓ L log 2d` within `± 4 SE`.
#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

pub fn bernstein_sandwich(ens: &Ensemble, samples: u64, seed: u64) -> Result<SandwichReport> {
    let stats = ensemble_statistics(ens, &[], EvalMode::exact())?;
    let stream = RngStream::new(seed, 0x6265_726e);
    let vals: Vec<f64> = (0..samples).map(|k| linalg::op_norm(&(ens.sample_sum(&stream, k) - ens.mean()))).collect();
    let r = batch_means(&vals, DEFAULT_BATCHES);
    let log2d = (2.0 * ens.d() as f64).ln();
    let lower = 0.5 * stats.sigma2.value.sqrt();
    let upper = (2.0 * stats.sigma2.value * log2d).sqrt() + stats.l.value * log2d / 3.0;
    let pass = r.mean >= lower - 4.0 * r.se && r.mean <= upper + 4.0 * r.se;
    Ok(SandwichReport { estimate: r.mean, se: r.se, lower, upper, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::EnsembleFamily;
    use crate::linalg::diag;

    #[test]
    fn rademacher_pair_statistics() {
        let ens = EnsembleFamily::RademacherScalar { n: 2 }.ensemble().unwrap();
        let s = ensemble_statistics(&ens, &[2.0], EvalMode::exact()).unwrap();
        assert_eq!(s.sigma2.value, 2.0);
        assert_eq!(s.l.value, 1.0);
        assert_eq!(s.m3.value, 8.0);
        assert_eq!(s.sigma_star2.value, 2.0);
    }

    #[test]
    fn identity_cauchy_transform() {
        let g = cauchy_transform(&[linalg::identity(3)], c(0.0, 1.0)).unwrap();
        assert!((g.value - c(-0.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn lq_of_deterministic_diag() {
        let e = lq_norm(&[diag(&[2.0, 0.0])], 2.0).unwrap();
        assert!((e.value - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(e.inner.se, 0.0);
    }

    #[test]
    fn two_bin_histogram() {
        let h = empirical_msd(&[diag(&[-1.0, 1.0])], Some(2)).unwrap();
        assert_eq!(h.edges, vec![-1.0, 0.0, 1.0]);
        assert_eq!(h.masses, vec![0.5, 0.5]);
    }

    #[test]
    fn degenerate_spectrum_histogram() {
        let h = empirical_msd(&[linalg::identity(2)], None).unwrap();
        assert!(h.edges.windows(2).all(|w| w[1] > w[0]));
        assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn max_moment_of_two_rademacher_differences() {
        // |S - S'| ∈ {0, 2} with probability ½ each; the maximum of two is 2 w.p. ¾.
        let law = vec![(0.0, 0.5), (2.0, 0.5)];
        assert!((max_moment(&[law.clone(), law], 2.0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_abs_moments() {
        assert!((gaussian_abs_moment(0.0, 2.0, 4.0) - 12.0).abs() < 1e-12);
        assert!((gaussian_abs_moment(1.0, 1.0, 2.0) - 2.0).abs() < 1e-12);
        let odd = gaussian_abs_moment(0.5, 1.0, 3.0);
        let even_free = gaussian_abs_moment(0.5, 1.0, 2.0);
        assert!(odd > even_free);
    }
}
