//! Closed-form oracles computed independently of the library code paths.

use univlab::bench::{run_experiment, BenchMode, CltFunction, EnsembleConfig, ExperimentConfig, Observable};
use univlab::ensembles::{Atom, EnsembleFamily, EnsembleSpec, EvalMode, SummandModel};
use univlab::gaussian_proxy::build_proxy;
use univlab::identities::check_interpolation_derivative;
use univlab::linalg::{c, diag, Hermitian, C64};
use univlab::matrix_calculus::{matrix_difference, matrix_second_difference, MatrixFunctionSpec};
use univlab::scalar_calculus::{divided_difference, divided_difference_complex, ScalarFunctionSpec};
use univlab::spectral_stats::{ensemble_statistics, gaussian_abs_moment, scalar_distribution, Provenance};

fn binomial_half(n: usize) -> Vec<(f64, f64)> {
    let total = 2f64.powi(n as i32);
    let mut choose = 1.0;
    (0..=n)
        .map(|k| {
            let w = choose / total;
            choose = choose * (n - k) as f64 / (k + 1) as f64;
            (k as f64, w)
        })
        .collect()
}

fn rademacher(n: usize) -> EnsembleConfig {
    EnsembleConfig::Family(EnsembleFamily::RademacherScalar { n })
}

#[test]
fn rademacher_fourth_moment() {
    for n in [1usize, 2, 5, 9] {
        let law = scalar_distribution(&EnsembleFamily::RademacherScalar { n }.ensemble().unwrap(), 1 << 20).unwrap();
        let mut brute = 0.0;
        for mask in 0u32..(1 << n) {
            let s: f64 = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).sum();
            brute += s.powi(4) / (1u64 << n) as f64;
        }
        let from_law: f64 = law.iter().map(|(x, w)| w * x.powi(4)).sum();
        let closed = 3.0 * (n * n) as f64 - 2.0 * n as f64;
        assert!((from_law - closed).abs() < 1e-10, "n={n}");
        assert!((brute - closed).abs() < 1e-10, "n={n}");
    }
}

#[test]
fn interpolation_derivative_of_quartic() {
    // E Y_t^4 = 3n² - 2n t² for Rademacher sums, so u̇(t) = -4nt.
    let ens = EnsembleFamily::RademacherScalar { n: 3 }.ensemble().unwrap();
    let proxy = build_proxy(&ens).unwrap();
    let r = check_interpolation_derivative(&ens, &proxy, &MatrixFunctionSpec::Power { p: 4 }, 0.3, EvalMode::exact()).unwrap();
    assert!((r.lhs.re + 3.6).abs() < 1e-5, "{:?}", r.lhs);
    assert!((r.rhs.re + 3.6).abs() < 1e-9, "{:?}", r.rhs);
    assert!(r.pass);
}

#[test]
fn gaussian_absolute_moments() {
    let var = 7.0;
    assert!((gaussian_abs_moment(0.0, var, 4.0) - 3.0 * var * var).abs() < 1e-9);
    assert!((gaussian_abs_moment(0.0, var, 2.0) - var).abs() < 1e-12);
    let e1 = (2.0 * var / std::f64::consts::PI).sqrt();
    assert!((gaussian_abs_moment(0.0, var, 1.0) - e1).abs() < 1e-12);
    // Shifted second moment.
    assert!((gaussian_abs_moment(1.5, var, 2.0) - (var + 2.25)).abs() < 1e-10);
}

#[test]
fn rademacher_statistics() {
    let n = 10;
    let ens = EnsembleFamily::RademacherScalar { n }.ensemble().unwrap();
    let s = ensemble_statistics(&ens, &[1.0, 2.0, 4.0], EvalMode::exact()).unwrap();
    let nf = n as f64;
    assert!((s.sigma2.value - nf).abs() < 1e-12);
    assert!((s.l.value - 1.0).abs() < 1e-12);
    assert!((s.l_inf.value - 2.0).abs() < 1e-12);
    // E|ε - ε'|³ = ½ · 8 per summand.
    assert!((s.m3.value - 4.0 * nf).abs() < 1e-10);
    assert_eq!(s.m3.provenance, Provenance::Exact);
    // Σ|S_i - S_i'|³ = 8B and Σ(S_i - S_i')² = 4B with B ~ Bin(n, ½).
    let b = binomial_half(n);
    let norm = |scale: f64, q: f64| b.iter().map(|(k, w)| w * (scale * k).powf(q)).sum::<f64>().powf(1.0 / q);
    for p in [1.0, 2.0, 4.0] {
        assert!((s.sigma2_2p(p).unwrap().value - nf).abs() < 1e-10, "p={p}");
        let l2p = 2.0 * (1.0 - 0.5f64.powi(n as i32)).powf(1.0 / (2.0 * p));
        assert!((s.l_2p(p).unwrap().value - l2p).abs() < 1e-12, "p={p}");
        assert!((s.m2p(p).unwrap().value - norm(4.0, p)).abs() < 1e-9, "p={p}");
    }
    assert!((s.m3_p3_scalar(4.0).unwrap().value - norm(8.0, 4.0 / 3.0)).abs() < 1e-9);
}

#[test]
fn scalar_divided_differences() {
    let pts = [0.3, -1.1, 2.0];
    let v = divided_difference(&ScalarFunctionSpec::Power(3), &pts).unwrap();
    assert!((v - pts.iter().sum::<f64>()).abs() < 1e-13);
    let zeta = c(0.4, 1.3);
    let r = divided_difference_complex(&ScalarFunctionSpec::Resolvent(zeta), &pts[..2]).unwrap();
    let expected = ((zeta - pts[0]) * (zeta - pts[1])).inv();
    assert!((r - expected).norm() < 1e-14);
    let confluent = divided_difference(&ScalarFunctionSpec::Power(4), &[0.7, 0.7, 0.7]).unwrap();
    assert!((confluent - 6.0 * 0.49).abs() < 1e-12);
}

#[test]
fn commuting_matrix_differences_are_entrywise() {
    // For diagonal A, B: Δf(A, B)[H]_{jk} = H_{jk} f[a_j, b_k].
    let (a, b) = ([0.5, -1.0, 2.0], [1.5, 0.2, -0.7]);
    let h = univlab::linalg::CMatrix::from_fn(3, 3, |j, k| c(1.0 + j as f64, k as f64 - 0.5));
    let zeta = c(0.1, 0.8);
    for (f, s) in [
        (MatrixFunctionSpec::Power { p: 4 }, ScalarFunctionSpec::Power(4)),
        (MatrixFunctionSpec::Resolvent { zeta }, ScalarFunctionSpec::Resolvent(zeta)),
    ] {
        let m = matrix_difference(&f, &diag(&a), &diag(&b), &h).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                let dd = divided_difference_complex(&s, &[a[j], b[k]]).unwrap();
                assert!((m[(j, k)] - h[(j, k)] * dd).norm() < 1e-12, "{} ({j},{k})", f.name());
            }
        }
    }
    // Second order: Δ²f(A, B, C)[H1 ⊗ H2]_{jk} = Σ_l H1_{jl} H2_{lk} f[a_j, b_l, c_k].
    let cc = [0.9, -0.3, 1.1];
    let h2 = h.adjoint();
    let f = MatrixFunctionSpec::Power { p: 5 };
    let m = matrix_second_difference(&f, &diag(&a), &diag(&b), &diag(&cc), &h, &h2).unwrap();
    for j in 0..3 {
        for k in 0..3 {
            let mut expected = C64::new(0.0, 0.0);
            for l in 0..3 {
                let dd = divided_difference(&ScalarFunctionSpec::Power(5), &[a[j], b[l], cc[k]]).unwrap();
                expected += h[(j, l)] * h2[(l, k)] * dd;
            }
            assert!((m[(j, k)] - expected).norm() < 1e-11);
        }
    }
}

#[test]
fn clt_sharp_bound_is_third_moment_over_six() {
    let cfg = ExperimentConfig::new(rademacher(50), Observable::ScalarClt { h: CltFunction::Sin { omega: 1.0 } });
    let r = run_experiment(&cfg.with_mode(BenchMode::Exact)).unwrap();
    assert!((r.bounds[0].value - 50.0 * 4.0 / 6.0).abs() < 1e-10);
    // E sin of a symmetric variable vanishes on both sides.
    assert!(r.lhs.value.abs() < 1e-12, "{:?}", r.lhs);
    assert!(r.pass);
}

#[test]
fn second_moment_observables_have_zero_gap() {
    let quad = Observable::ScalarClt { h: CltFunction::Polynomial { coeffs: vec![0.3, -1.0, 1.0] } };
    let r = run_experiment(&ExperimentConfig::new(rademacher(40), quad)).unwrap();
    assert!(r.lhs.value.abs() < 1e-10, "{:?}", r.lhs);
    let r = run_experiment(&ExperimentConfig::new(rademacher(40), Observable::ScalarMoments { p: 2.0 })).unwrap();
    assert!(r.lhs.value.abs() < 1e-10, "{:?}", r.lhs);
    let wigner = EnsembleConfig::Family(EnsembleFamily::WignerLike { d: 4, n: 20, law: univlab::ensembles::EntryLaw::Rademacher });
    let r = run_experiment(&ExperimentConfig::new(wigner, Observable::MatrixMoments { p: 1 }).with_samples(500)).unwrap();
    assert!(r.lhs.value.abs() < 1e-10, "{:?}", r.lhs);
    assert_eq!(r.lhs.se, 0.0);
}

fn deterministic(n: usize) -> EnsembleConfig {
    let atoms = vec![Atom { matrix: Hermitian::from_real_diag(&[0.5, -1.0]), prob: 1.0 }];
    EnsembleConfig::Spec(EnsembleSpec { d: 2, seed: 0, summands: vec![SummandModel::FiniteSupport { atoms }; n] })
}

#[test]
fn deterministic_sums_have_zero_gap_and_zero_bounds() {
    for obs in [
        Observable::MatrixMoments { p: 2 },
        Observable::Cauchy { zeta: c(0.0, 1.0) },
        Observable::ResolventNorm { zeta: c(0.3, 1.0), p: 2 },
    ] {
        let r = run_experiment(&ExperimentConfig::new(deterministic(4), obs.clone()).with_mode(BenchMode::Exact)).unwrap();
        assert!(r.lhs.value.abs() < 1e-12, "{}: {:?}", obs.name(), r.lhs);
        for b in &r.bounds {
            assert!(b.value.abs() < 1e-12, "{}: {} = {}", obs.name(), b.name, b.value);
        }
        assert!(r.pass);
    }
}

#[test]
fn cauchy_bounds_scale_with_fourth_power_of_height() {
    let toy = EnsembleConfig::Family(EnsembleFamily::FiniteSupportToy { d: 2, n: 3, seed: 5 });
    let run = |h: f64| {
        run_experiment(&ExperimentConfig::new(toy.clone(), Observable::Cauchy { zeta: c(0.0, h) }).with_mode(BenchMode::Exact))
            .unwrap()
    };
    let (r1, r2) = (run(1.0), run(2.0));
    assert_eq!(r1.bounds.len(), r2.bounds.len());
    for (a, b) in r1.bounds.iter().zip(&r2.bounds) {
        assert!((a.value / b.value - 16.0).abs() < 1e-12, "{}", a.name);
        assert_eq!(a.provenance, Provenance::Exact);
    }
    // The Gaussian side of the Cauchy transform is sampled even in exact mode.
    assert_eq!(r1.x.se, 0.0);
}

#[test]
fn resolvent_norms_are_uniformly_controlled() {
    let wigner = EnsembleConfig::Family(EnsembleFamily::WignerLike { d: 4, n: 20, law: univlab::ensembles::EntryLaw::Rademacher });
    let zeta = c(0.5, 1.5);
    let r = run_experiment(&ExperimentConfig::new(wigner, Observable::ResolventNorm { zeta, p: 2 }).with_samples(2000)).unwrap();
    let detail = r.detail.expect("resolvent detail");
    assert_eq!(detail["uniform_control"], serde_json::Value::Bool(true));
    // (E tr|R_ζ|^{2p})^{1/2p} ≤ 1/|Im ζ|.
    assert!(r.x.re <= 1.0 / 1.5 + 1e-12);
    assert!(r.z.re <= 1.0 / 1.5 + 1e-12);
}

#[test]
fn hausdorff_distance_examples() {
    use univlab::bench::hausdorff_distance;
    assert_eq!(hausdorff_distance(&[0.0, 1.0], &[0.5]), 0.5);
    assert_eq!(hausdorff_distance(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
    assert_eq!(hausdorff_distance(&[-2.0], &[0.0, 3.0]), 5.0);
}
