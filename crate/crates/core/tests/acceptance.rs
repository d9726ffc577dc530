//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use univlab::bench::{
    run_cauchy, run_experiment, run_matrix_moments, run_resolvent_norm, run_sweep, BenchMode, CltFunction,
    ExperimentConfig, Observable, PASS_SIGMAS, ROUNDING_RTOL,
};
use univlab::ensembles::{EnsembleFamily, EntryLaw, EvalMode};
use univlab::gaussian_proxy::build_proxy;
use univlab::identities::{
    check_interpolation_derivative, consolidation_random, default_suite, gm_am_random, run_suite, CheckMode,
};
use univlab::linalg::{c, frobenius, hermitian_with_spectrum, random_hermitian, CMatrix, C64};
use univlab::matrix_calculus::{
    block_condition, closed_form_difference, finite_difference_second_derivative, matrix_difference,
    matrix_second_difference, relative_error, MatrixFunctionSpec, CONDITION_GATE,
};
use univlab::spectral_stats::bernstein_sandwich;

const SEED: u64 = 20_240_601;

/// Exact identities: absolute residual and total runtime.
const EXACT_ATOL: f64 = 1e-9;
const EXACT_SUITE_SECONDS: f64 = 60.0;
/// Closed form against block embedding, relative.
const EQUIVALENCE_RTOL: f64 = 1e-10;
const EQUIVALENCE_INSTANCES: usize = 200;
const EQUIVALENCE_MAX_DIM: usize = 6;
/// Confluent second difference against half the finite-difference second derivative.
const CONFLUENT_RTOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-4;
const INTERPOLATION_RTOL: f64 = 1e-5;
const INEQUALITY_MARGIN: f64 = -1e-10;
const RANDOM_INSTANCES: usize = 1000;
const ROSENTHAL_EXACT_MARGIN: f64 = -1e-9;
const BENCH_SAMPLES: u64 = 20_000;
const BENCH_SECONDS: f64 = 180.0;
const RATE_SWEEP: [usize; 5] = [25, 50, 100, 200, 400];
const RATE_SLOPE: (f64, f64) = (-0.65, -0.35);

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: String) -> Outcome {
    Outcome { pass, summary }
}

fn exact_identities() -> Outcome {
    let groups = ["scalar_covariance/", "scalar_discrete_ibp/", "matrix_covariance/", "variance_tensor/", "matrix_discrete_ibp/"];
    let start = Instant::now();
    let cases: Vec<_> = default_suite(SEED).into_iter().filter(|c| groups.iter().any(|g| c.name.starts_with(g))).collect();
    let results = run_suite(&cases, None);
    let seconds = start.elapsed().as_secs_f64();
    let exact = results.iter().filter(|r| r.mode == CheckMode::Exact).count();
    let worst = results.iter().map(|r| r.abs_residual).fold(0.0, f64::max);
    let bad: Vec<&str> = results
        .iter()
        .filter(|r| r.mode != CheckMode::Exact || !(r.abs_residual <= EXACT_ATOL))
        .map(|r| r.name.as_str())
        .collect();
    outcome(
        bad.is_empty() && exact > 0 && seconds < EXACT_SUITE_SECONDS,
        format!("{exact} exact checks, max |residual| {worst:.2e}, {seconds:.1} s; failing {bad:?}"),
    )
}

/// Hermitian matrix whose eigenvalues stay inside `range` and away from zero when `signed_gap > 0`.
fn spectrum_matrix(rng: &mut ChaCha8Rng, d: usize, range: f64, signed_gap: f64) -> CMatrix {
    let spec: Vec<f64> = (0..d)
        .map(|_| {
            let mag = signed_gap + rng.gen::<f64>() * (range - signed_gap);
            if signed_gap > 0.0 && rng.gen::<bool>() {
                -mag
            } else if signed_gap > 0.0 {
                mag
            } else {
                rng.gen_range(-range..range)
            }
        })
        .collect();
    hermitian_with_spectrum(rng, &spec)
}

fn random_kind(rng: &mut ChaCha8Rng, kind: usize) -> (MatrixFunctionSpec, f64, f64) {
    let zeta = c(rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 });
    match kind {
        0 => (MatrixFunctionSpec::Power { p: rng.gen_range(1..=8) }, 1.5, 0.0),
        1 => (MatrixFunctionSpec::InversePower { p: rng.gen_range(1..=4) }, 2.0, 0.5),
        2 => (MatrixFunctionSpec::Resolvent { zeta }, 2.0, 0.0),
        3 => (MatrixFunctionSpec::ResolventSquare { zeta }, 2.0, 0.0),
        _ => (MatrixFunctionSpec::ResolventPowerDerivative { zeta, p: rng.gen_range(1..=3) }, 2.0, 0.0),
    }
}

fn calculus_equivalence() -> Outcome {
    let labels = ["power", "inverse_power", "resolvent", "resolvent_square", "resolvent_power_derivative"];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = [0.0f64; 5];
    let mut skipped = 0usize;
    let mut errors = Vec::new();
    for (kind, label) in labels.iter().enumerate() {
        let mut done = 0;
        while done < EQUIVALENCE_INSTANCES {
            let (f, range, gap) = random_kind(&mut rng, kind);
            let d = rng.gen_range(1..=EQUIVALENCE_MAX_DIM);
            let a: Vec<CMatrix> = (0..3).map(|_| spectrum_matrix(&mut rng, d, range, gap)).collect();
            let h: Vec<CMatrix> = (0..2).map(|_| random_hermitian(&mut rng, d, 1.0)).collect();
            if block_condition(&f, &[&a[0], &a[1], &a[2]], &[&h[0], &h[1]]) > CONDITION_GATE {
                skipped += 1;
                continue;
            }
            done += 1;
            let first = matrix_difference(&f, &a[0], &a[1], &h[0])
                .and_then(|b| closed_form_difference(&f, &[&a[0], &a[1]], &[&h[0]]).map(|cf| relative_error(&cf, &b, 1e-12)));
            let second = matrix_second_difference(&f, &a[0], &a[1], &a[2], &h[0], &h[1]).and_then(|b| {
                closed_form_difference(&f, &[&a[0], &a[1], &a[2]], &[&h[0], &h[1]]).map(|cf| relative_error(&cf, &b, 1e-12))
            });
            for r in [first, second] {
                match r {
                    Ok(e) => worst[kind] = worst[kind].max(e),
                    Err(e) => errors.push(format!("{label}: {e}")),
                }
            }
        }
    }
    // Confluent points: Δ²f(A, A, A)[H ⊗ H] = ½ D²f(A)[H ⊗ H].
    let mut confluent = 0.0f64;
    for k in 0..50 {
        let (f, range, gap) = random_kind(&mut rng, k % 5);
        let d = rng.gen_range(1..=4);
        let a = spectrum_matrix(&mut rng, d, range, gap);
        // Both sides are quadratic in H; a unit direction keeps the step meaningful.
        let h = random_hermitian(&mut rng, d, 1.0);
        let h = &h * c(1.0 / frobenius(&h), 0.0);
        let dd = matrix_second_difference(&f, &a, &a, &a, &h, &h);
        let fd = finite_difference_second_derivative(&f, &a, &h, FD_STEP);
        match (dd, fd) {
            (Ok(dd), Ok(fd)) => confluent = confluent.max(relative_error(&(dd * c(2.0, 0.0)), &fd, 1e-8)),
            (Err(e), _) | (_, Err(e)) => errors.push(format!("confluent {}: {e}", f.name())),
        }
    }
    let worst_all = worst.iter().cloned().fold(0.0, f64::max);
    let detail: Vec<String> = labels.iter().zip(worst).map(|(l, w)| format!("{l} {w:.1e}")).collect();
    outcome(
        errors.is_empty() && worst_all <= EQUIVALENCE_RTOL && confluent <= CONFLUENT_RTOL,
        format!(
            "{} instances per kind, worst relative error [{}], confluent {confluent:.1e}, {skipped} gated; errors {errors:?}",
            EQUIVALENCE_INSTANCES,
            detail.join(", ")
        ),
    )
}

fn interpolation() -> Outcome {
    let family = EnsembleFamily::RademacherCoefficient { d: 2, n: 2, seed: 7 };
    let ens = match family.ensemble() {
        Ok(e) => e,
        Err(e) => return outcome(false, e.to_string()),
    };
    let proxy = match build_proxy(&ens) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let factors = proxy.factors.len();
    let h = MatrixFunctionSpec::Power { p: 4 };
    let mut parts = Vec::new();
    let mut pass = factors == 2;
    for t in [0.25, 0.5, 0.75] {
        match check_interpolation_derivative(&ens, &proxy, &h, t, EvalMode::exact()) {
            Ok(r) => {
                let rel = (r.lhs - r.rhs).norm() / r.lhs.norm().max(r.rhs.norm());
                pass &= rel <= INTERPOLATION_RTOL && r.mode == CheckMode::Quadrature;
                parts.push(format!("t={t}: {rel:.1e}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("t={t}: {e}"));
            }
        }
    }
    outcome(pass, format!("{factors} proxy factors, relative residuals {}", parts.join(", ")))
}

fn deterministic_inequalities() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, r) in [
        ("gm_am", gm_am_random(RANDOM_INSTANCES, 8, SEED)),
        ("consolidation", consolidation_random(RANDOM_INSTANCES, 6, 9, SEED)),
    ] {
        match r {
            Ok(r) => {
                let m = r.margin.unwrap_or(f64::NEG_INFINITY);
                pass &= m >= INEQUALITY_MARGIN;
                parts.push(format!("{label} worst margin {m:.2e}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    let rosenthal = run_suite(&default_suite(SEED), Some("rosenthal/"));
    let mut worst_exact = f64::INFINITY;
    let mut worst_mc = f64::INFINITY;
    for r in &rosenthal {
        let m = r.margin.unwrap_or(f64::NEG_INFINITY);
        match r.mode {
            CheckMode::MonteCarlo { se } => {
                worst_mc = worst_mc.min(m / se.max(f64::MIN_POSITIVE));
                pass &= m >= -PASS_SIGMAS * se;
            }
            _ => {
                worst_exact = worst_exact.min(m);
                pass &= m >= ROSENTHAL_EXACT_MARGIN;
            }
        }
    }
    parts.push(format!(
        "rosenthal {} cases, worst exact margin {worst_exact:.2e}, worst Monte Carlo margin {worst_mc:.1} SE",
        rosenthal.len()
    ));
    outcome(pass && !rosenthal.is_empty(), parts.join("; "))
}

fn universality_bounds() -> Outcome {
    let wigner = EnsembleFamily::WignerLike { d: 8, n: 50, law: EntryLaw::Rademacher };
    let two_i = c(0.0, 2.0);
    let runs: [(Observable, fn(&ExperimentConfig) -> univlab::Result<univlab::bench::BoundReport>); 4] = [
        (Observable::Cauchy { zeta: two_i }, run_cauchy),
        (Observable::MatrixMoments { p: 2 }, run_matrix_moments),
        (Observable::MatrixMoments { p: 3 }, run_matrix_moments),
        (Observable::ResolventNorm { zeta: two_i, p: 2 }, run_resolvent_norm),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (obs, run) in runs {
        let cfg = ExperimentConfig::family(wigner, obs.clone()).with_samples(BENCH_SAMPLES).with_seed(SEED);
        let start = Instant::now();
        let r = run(&cfg);
        let seconds = start.elapsed().as_secs_f64();
        match r {
            Ok(r) => {
                let sharp = &r.bounds[0];
                let ok = sharp.pass && r.pass && seconds < BENCH_SECONDS;
                pass &= ok;
                parts.push(format!(
                    "{} lhs {:.2e} ± {:.1e} vs {:.2e} ({:.1} s)",
                    r.label, r.lhs.value, r.lhs.se, sharp.value, seconds
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", obs.label()));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn clt_rate() -> Outcome {
    let cfg = ExperimentConfig::family(EnsembleFamily::RademacherScalar { n: RATE_SWEEP[0] }, Observable::ScalarMoments { p: 4.0 })
        .with_mode(BenchMode::Exact)
        .with_sweep(RATE_SWEEP.to_vec());
    match run_sweep(&cfg) {
        Ok(s) => {
            let values: Vec<String> = s.values.iter().map(|v| format!("{v:.2e}")).collect();
            outcome(
                s.slope >= RATE_SLOPE.0 && s.slope <= RATE_SLOPE.1,
                format!(
                    "relative error slope {:.3} (window [{}, {}]), bound slope {:.3}, errors [{}]",
                    s.slope,
                    RATE_SLOPE.0,
                    RATE_SLOPE.1,
                    s.bound_slope,
                    values.join(", ")
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn gaussian_self_consistency() -> Outcome {
    let scalar = EnsembleFamily::GaussianCoefficient { d: 1, n: 20, seed: 3 };
    let matrix = EnsembleFamily::GaussianCoefficient { d: 4, n: 20, seed: 3 };
    let observables = [
        (scalar, Observable::ScalarClt { h: CltFunction::Sin { omega: 1.0 } }),
        (scalar, Observable::ScalarClt { h: CltFunction::Polynomial { coeffs: vec![0.0, 0.5, 0.0, 1.0] } }),
        (scalar, Observable::ScalarMoments { p: 2.0 }),
        (scalar, Observable::ScalarMoments { p: 4.0 }),
        (matrix, Observable::MatrixMoments { p: 1 }),
        (matrix, Observable::MatrixMoments { p: 2 }),
        (matrix, Observable::MatrixMoments { p: 3 }),
        (matrix, Observable::Cauchy { zeta: c(0.3, 1.0) }),
        (matrix, Observable::ResolventNorm { zeta: c(0.0, 1.0), p: 2 }),
    ];
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut failing = Vec::new();
    for (fam, obs) in observables {
        let cfg = ExperimentConfig::family(fam, obs.clone()).with_samples(BENCH_SAMPLES).with_seed(SEED);
        match run_experiment(&cfg) {
            Ok(r) => {
                let x = C64::new(r.x.re, r.x.im).norm();
                let z = C64::new(r.z.re, r.z.im).norm();
                let allowed = PASS_SIGMAS * r.lhs.se + ROUNDING_RTOL * x.max(z).max(1.0);
                if r.lhs.se > 0.0 {
                    worst = worst.max(r.lhs.value / r.lhs.se);
                }
                if r.lhs.value.abs() > allowed {
                    pass = false;
                    failing.push(format!("{} |lhs| {:.2e} > {:.2e}", r.label, r.lhs.value, allowed));
                }
            }
            Err(e) => {
                pass = false;
                failing.push(format!("{}: {e}", obs.label()));
            }
        }
    }
    outcome(pass, format!("9 observables, worst |lhs| {worst:.2} SE; failing {failing:?}"))
}

fn bernstein() -> Outcome {
    let families = [
        EnsembleFamily::WignerLike { d: 4, n: 40, law: EntryLaw::Rademacher },
        EnsembleFamily::WignerLike { d: 8, n: 50, law: EntryLaw::Rademacher },
        EnsembleFamily::RademacherCoefficient { d: 3, n: 20, seed: 11 },
        EnsembleFamily::RademacherDiagonal { d: 4, n: 30 },
        EnsembleFamily::FiniteSupportToy { d: 3, n: 10, seed: 7 },
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in families {
        match fam.ensemble().and_then(|e| bernstein_sandwich(&e, BENCH_SAMPLES, SEED)) {
            Ok(r) => {
                let ok = r.estimate >= r.lower - PASS_SIGMAS * r.se && r.estimate <= r.upper + PASS_SIGMAS * r.se;
                pass &= ok;
                parts.push(format!("{} {:.3} ≤ {:.3} ≤ {:.3}", fam.name(), r.lower, r.estimate, r.upper));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", fam.name()));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("exact identity suite", exact_identities),
        ("calculus equivalence", calculus_equivalence),
        ("interpolation derivative", interpolation),
        ("deterministic inequalities", deterministic_inequalities),
        ("universality bounds", universality_bounds),
        ("clt rate", clt_rate),
        ("gaussian self-consistency", gaussian_self_consistency),
        ("matrix bernstein sandwich", bernstein),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} {:<28} {}  ({:.1} s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.summary
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
