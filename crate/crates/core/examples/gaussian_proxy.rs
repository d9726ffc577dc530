//! The Gaussian proxy of an independent sum: matching mean and variance tensor, sampling,
//! and Gauss–Hermite expectations.

use univlab::ensembles::{EnsembleFamily, EvalMode};
use univlab::gaussian_proxy::{build_proxy, kron_form, real_covariance, VarianceTensor};
use univlab::linalg::{frobenius, ntrace};
use univlab::rng::RngStream;

fn main() -> univlab::Result<()> {
    let ens = EnsembleFamily::RademacherCoefficient { d: 3, n: 4, seed: 2 }.ensemble()?;
    let proxy = build_proxy(&ens)?;
    println!("proxy for d = {} uses {} Gaussian factors", proxy.d, proxy.factors.len());

    // Var_⊗ of X against the Kronecker form of the proxy covariance.
    let cov = real_covariance(&ens, EvalMode::exact())?;
    let x_tensor = VarianceTensor::of_ensemble(&ens).kron();
    let z_tensor = proxy.variance_tensor().kron();
    println!("‖Var⊗X - Var⊗Z‖_F = {:.3e}", frobenius(&(&x_tensor - &z_tensor)));
    println!("‖Var⊗X - kron(cov)‖_F = {:.3e}", frobenius(&(&x_tensor - kron_form(&cov))));

    // E tr Z² by sampling and by quadrature agree with E tr X².
    let stream = RngStream::new(9, 0);
    let draws = 20_000u64;
    let sampled: f64 = (0..draws)
        .map(|k| {
            let z = proxy.sample(&stream, k);
            ntrace(&(&z * &z)).re
        })
        .sum::<f64>()
        / draws as f64;
    let x2 = ntrace(&(ens.mean() * ens.mean())).re + ntrace(&ens.variance_matrix()).re;
    println!("E tr X² = {x2:.6}; E tr Z² sampled {sampled:.6}");

    let small = build_proxy(&EnsembleFamily::RademacherCoefficient { d: 2, n: 2, seed: 4 }.ensemble()?)?;
    let quad = small.expectation(|z| Ok(ntrace(&(z * z * z * z))))?;
    println!("two-factor proxy: E tr Z⁴ by Gauss–Hermite = {:.12}", quad.re);
    Ok(())
}
