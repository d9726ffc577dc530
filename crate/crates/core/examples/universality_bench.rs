//! Compares a Wigner-like sparse ensemble with its Gaussian proxy on every observable and
//! prints each bound form.

use univlab::bench::{default_experiments, run_experiment};

fn main() -> univlab::Result<()> {
    for cfg in default_experiments(0) {
        let r = run_experiment(&cfg)?;
        println!("{} on {} (N = {})", r.label, r.ensemble, r.samples);
        println!("  lhs = {:.4e} ± {:.1e} [{:?}]", r.lhs.value, r.lhs.se, r.lhs.provenance);
        for b in &r.bounds {
            println!(
                "  {:<18} {:>12.4e}  slack {:>12.4e}  {}{}",
                b.name,
                b.value,
                b.slack,
                if b.pass { "pass" } else { "FAIL" },
                if b.optimistic { " (optimistic)" } else { "" }
            );
        }
    }
    Ok(())
}
