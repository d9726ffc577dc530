//! Derivative of `t ↦ E tr h(Y_t)` along the interpolation between the Gaussian proxy and
//! the independent sum: finite differences against the second-difference formula.

use univlab::ensembles::{EnsembleFamily, EvalMode};
use univlab::gaussian_proxy::build_proxy;
use univlab::identities::check_interpolation_derivative;
use univlab::matrix_calculus::MatrixFunctionSpec;

fn main() -> univlab::Result<()> {
    let ens = EnsembleFamily::RademacherCoefficient { d: 2, n: 2, seed: 7 }.ensemble()?;
    let proxy = build_proxy(&ens)?;
    let h = MatrixFunctionSpec::Power { p: 4 };
    for t in [0.25, 0.5, 0.75] {
        let r = check_interpolation_derivative(&ens, &proxy, &h, t, EvalMode::exact())?;
        println!(
            "t = {t}: finite difference {:.12}, formula {:.12}, relative residual {:.2e}",
            r.lhs.re, r.rhs.re, r.rel_residual
        );
    }
    Ok(())
}
