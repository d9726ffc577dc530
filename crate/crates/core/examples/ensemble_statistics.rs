//! Variance and uniform-bound statistics of an ensemble, its Cauchy transform and an
//! empirical mean spectral distribution.

use univlab::ensembles::{EnsembleFamily, EntryLaw, EvalMode};
use univlab::linalg::c;
use univlab::rng::RngStream;
use univlab::spectral_stats::{bernstein_sandwich, cauchy_transform, empirical_msd, ensemble_statistics};

fn main() -> univlab::Result<()> {
    let exact = ensemble_statistics(&EnsembleFamily::RademacherScalar { n: 2 }.ensemble()?, &[2.0], EvalMode::exact())?;
    println!("two Rademacher signs: sigma2 = {}, L = {}, M3 = {}", exact.sigma2.value, exact.l.value, exact.m3.value);

    let family = EnsembleFamily::WignerLike { d: 6, n: 40, law: EntryLaw::Rademacher };
    let ens = family.ensemble()?;
    let stats = ensemble_statistics(&ens, &[1.0, 2.0], EvalMode::monte_carlo(5_000, 1))?;
    println!("{}:", family.name());
    for row in stats.csv_rows() {
        println!("  {:<14} p={:<3} {:>24} {:<12} se {}", row[0], row[1], row[2], row[3], row[4]);
    }

    let stream = RngStream::new(2, 0);
    let draws: Vec<_> = (0..5_000).map(|k| ens.sample_sum(&stream, k)).collect();
    let g = cauchy_transform(&draws, c(0.0, 1.0))?;
    println!("G_i(X) = {:.5} ± {:.1e}", g.value, g.se());
    let msd = empirical_msd(&draws, Some(24))?;
    println!("msd: {} bins, second moment {:.4}", msd.masses.len(), msd.moment(2));

    let sandwich = bernstein_sandwich(&ens, 5_000, 3)?;
    println!(
        "E‖X - EX‖ = {:.4} ± {:.1e} within [{:.4}, {:.4}]: {}",
        sandwich.estimate, sandwich.se, sandwich.lower, sandwich.upper, sandwich.pass
    );
    Ok(())
}
