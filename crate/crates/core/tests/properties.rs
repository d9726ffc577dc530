use proptest::prelude::*;
use univlab::bench::{run_experiment, BenchMode, EnsembleConfig, ExperimentConfig, Observable};
use univlab::ensembles::{EnsembleFamily, EvalMode};
use univlab::identities::{check_cube_inequality, consolidation_coefficients};
use univlab::linalg::{c, random_hermitian, CMatrix};
use univlab::matrix_calculus::{closed_form_first_difference, matrix_difference, relative_error, MatrixFunctionSpec};
use univlab::rng::RngStream;
use univlab::scalar_calculus::{divided_difference, ScalarFunctionSpec};
use univlab::spectral_stats::{ensemble_statistics, scalar_distribution};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy(d: usize, n: usize, seed: u64) -> EnsembleConfig {
    EnsembleConfig::Family(EnsembleFamily::FiniteSupportToy { d, n, seed })
}

fn exact_run(cfg: EnsembleConfig, obs: Observable) -> univlab::bench::BoundReport {
    run_experiment(&ExperimentConfig::new(cfg, obs).with_mode(BenchMode::Exact)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn divided_differences_are_symmetric(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0, p in 0u32..7) {
        let f = ScalarFunctionSpec::Power(p);
        let a = divided_difference(&f, &[x, y, z]).unwrap();
        let b = divided_difference(&f, &[z, x, y]).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
    }

    #[test]
    fn cube_inequality_holds(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        prop_assert!(check_cube_inequality(a, b).unwrap().pass);
    }

    #[test]
    fn consolidation_weights_sum_to_one(q in 1u32..6, r in 1u32..6, s in 1u32..6) {
        let total: f64 = consolidation_coefficients(q, r, s).alpha.iter().map(|t| t.coefficient).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_difference_is_linear_in_direction(seed in any::<u64>(), d in 1usize..4, w in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<CMatrix> = (0..4).map(|_| random_hermitian(&mut rng, d, 1.0)).collect();
        let f = MatrixFunctionSpec::Resolvent { zeta: c(0.1, 1.0) };
        let combined = matrix_difference(&f, &m[0], &m[1], &(&m[2] * c(w, 0.0) + &m[3])).unwrap();
        let split = matrix_difference(&f, &m[0], &m[1], &m[2]).unwrap() * c(w, 0.0)
            + matrix_difference(&f, &m[0], &m[1], &m[3]).unwrap();
        prop_assert!(relative_error(&combined, &split, 1e-12) < 1e-10);
        let closed = closed_form_first_difference(&f, &m[0], &m[1], &(&m[2] * c(w, 0.0) + &m[3])).unwrap();
        prop_assert!(relative_error(&closed, &combined, 1e-12) < 1e-10);
    }

    #[test]
    fn sampling_is_a_pure_function_of_the_draw_index(seed in any::<u64>(), k in 0u64..1000) {
        let ens = EnsembleFamily::FiniteSupportToy { d: 2, n: 3, seed: 4 }.ensemble().unwrap();
        let stream = RngStream::new(seed, 0);
        let first = ens.sample_sum(&stream, k);
        let _ = ens.sample_sum(&stream, k + 1);
        prop_assert_eq!(first, ens.sample_sum(&stream, k));
    }

    #[test]
    fn scalar_laws_are_normalized(n in 1usize..12, q in 0.05f64..0.95) {
        let law = scalar_distribution(&EnsembleFamily::TwoPointScalar { n, q }.ensemble().unwrap(), 1 << 16).unwrap();
        let mass: f64 = law.iter().map(|(_, w)| w).sum();
        let mean: f64 = law.iter().map(|(x, w)| x * w).sum();
        let var: f64 = law.iter().map(|(x, w)| x * x * w).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(mean.abs() < 1e-10);
        prop_assert!((var - n as f64).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn norms_increase_with_p(seed in 0u64..1000, d in 1usize..4, n in 1usize..4) {
        let ens = EnsembleFamily::FiniteSupportToy { d, n, seed }.ensemble().unwrap();
        let s = ensemble_statistics(&ens, &[1.0, 2.0, 3.0], EvalMode::exact()).unwrap();
        for p in [1.0, 2.0] {
            let q = p + 1.0;
            prop_assert!(s.sigma2_2p(p).unwrap().value <= s.sigma2_2p(q).unwrap().value * (1.0 + 1e-12));
            prop_assert!(s.l_2p(p).unwrap().value <= s.l_2p(q).unwrap().value * (1.0 + 1e-12));
            prop_assert!(s.m2p(p).unwrap().value <= s.m2p(q).unwrap().value * (1.0 + 1e-12));
        }
        prop_assert!(s.l_2p(3.0).unwrap().value <= s.l_inf.value * (1.0 + 1e-12));
        prop_assert!(s.sigma_star2.value <= s.sigma2.value * (1.0 + 1e-9));
        prop_assert!(s.l_inf.value <= 2.0 * s.l.value * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cauchy_intro_form_dominates_sharp_form(seed in 0u64..10_000, d in 1usize..4, n in 1usize..4, h in 0.5f64..3.0) {
        let r = exact_run(toy(d, n, seed), Observable::Cauchy { zeta: c(0.3, h) });
        let (sharp, intro) = (r.form("sharp").unwrap().value, r.form("intro").unwrap().value);
        prop_assert!(sharp <= intro * (1.0 + 1e-12), "sharp {} intro {}", sharp, intro);
        prop_assert!(r.pass);
    }

    #[test]
    fn matrix_moment_forms_are_ordered(seed in 0u64..10_000, d in 1usize..4, n in 1usize..4, p in 2u32..5) {
        let r = exact_run(toy(d, n, seed), Observable::MatrixMoments { p });
        let sharp = r.form("sharp").unwrap().value;
        let corollary = r.form("corollary").unwrap().value;
        let intro = r.form("intro").unwrap().value;
        prop_assert!(sharp <= corollary * (1.0 + 1e-12), "sharp {} corollary {}", sharp, corollary);
        prop_assert!(sharp <= intro * (1.0 + 1e-12), "sharp {} intro {}", sharp, intro);
        prop_assert!(r.pass);
    }

    #[test]
    fn config_hash_ignores_key_order(seed in any::<u64>(), samples in 100u64..100_000, n in 1usize..50) {
        let a = format!(
            r#"{{"ensemble":{{"family":"rademacher_scalar","n":{n}}},"observable":{{"kind":"cauchy","zeta":[0.0,1.0]}},"samples":{samples},"seed":{seed}}}"#
        );
        let b = format!(
            r#"{{"seed":{seed},"samples":{samples},"observable":{{"zeta":[0.0,1.0],"kind":"cauchy"}},"ensemble":{{"n":{n},"family":"rademacher_scalar"}}}}"#
        );
        let ca: ExperimentConfig = serde_json::from_str(&a).unwrap();
        let cb: ExperimentConfig = serde_json::from_str(&b).unwrap();
        prop_assert_eq!(ca.hash(), cb.hash());
        let va: serde_json::Value = serde_json::from_str(&a).unwrap();
        let vb: serde_json::Value = serde_json::from_str(&b).unwrap();
        prop_assert_eq!(univlab::report::content_hash(&va), univlab::report::content_hash(&vb));
    }
}
