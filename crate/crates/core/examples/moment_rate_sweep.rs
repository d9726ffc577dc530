//! Relative error of the fourth moment of a standardized bounded scalar sum against the
//! Gaussian, over a range of `n`, with the log-log slopes of the error and of its bound.

use univlab::bench::{run_sweep, BenchMode, ExperimentConfig, Observable};
use univlab::ensembles::EnsembleFamily;

fn main() -> univlab::Result<()> {
    let cfg = ExperimentConfig::family(EnsembleFamily::TwoPointScalar { n: 25, q: 0.3 }, Observable::ScalarMoments { p: 4.0 })
        .with_mode(BenchMode::Exact)
        .with_sweep(vec![25, 50, 100, 200, 400]);
    let sweep = run_sweep(&cfg)?;
    println!("{:>6} {:>16} {:>16}", "n", "relative error", "bound");
    for ((n, v), b) in sweep.ns.iter().zip(&sweep.values).zip(&sweep.bounds) {
        println!("{n:>6} {v:>16.6e} {b:>16.6e}");
    }
    println!("slope of the error {:.4}, slope of the bound {:.4}", sweep.slope, sweep.bound_slope);
    Ok(())
}
