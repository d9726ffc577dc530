//! Ensembles of independent summands, exchangeable triples, and exact expectations by
//! enumeration compared with sampling.

use univlab::ensembles::{linear_regression_check, EnsembleFamily, EvalMode, EXACT_ORACLE_BUDGET};
use univlab::linalg::ntrace;
use univlab::rng::RngStream;

fn main() -> univlab::Result<()> {
    let family = EnsembleFamily::FiniteSupportToy { d: 2, n: 3, seed: 5 };
    let ens = family.ensemble()?;
    println!("{}: {} joint states, {} triple states", family.name(), ens.sum_state_count(), ens.triple_state_count());

    let stream = RngStream::new(1, 0);
    // A draw can resample the same atom; show the first one that moves X.
    let (k, t) = (0u64..)
        .map(|k| (k, ens.sample_triple(&stream, k)))
        .find(|(_, t)| univlab::linalg::frobenius(&(&t.xp - &t.x)) > 1e-9)
        .expect("nondegenerate ensemble");
    println!("triple draw {k} replaces summand {}; X' - X =\n{:.4}", t.index, &t.xp - &t.x);

    // E tr X² exactly and by sampling.
    let exact = ens.exact_sum_expectation(EXACT_ORACLE_BUDGET, |_, x| Ok(ntrace(&(x * x))))?;
    let draws = 20_000u64;
    let sampled: f64 = (0..draws)
        .map(|k| {
            let x = ens.sample_sum(&stream, k);
            ntrace(&(&x * &x)).re
        })
        .sum::<f64>()
        / draws as f64;
    println!("E tr X²: exact {:.6}, sampled {:.6}", exact.re, sampled);

    // The regression E[X - X' | X] = (X - EX)/n, exactly and by sampling.
    for mode in [EvalMode::exact(), EvalMode::monte_carlo(20_000, 3)] {
        let r = linear_regression_check(&ens, mode)?;
        println!("linear regression ({}): residual {:.3e}, se {:.3e}", r.mode, r.residual, r.se);
    }
    Ok(())
}
