//! Runs the default identity and inequality suite, optionally filtered by a name fragment
//! given as the first argument.

use univlab::identities::{default_suite, run_suite};

fn main() {
    let filter = std::env::args().nth(1);
    let suite = default_suite(0);
    let results = run_suite(&suite, filter.as_deref());
    for r in &results {
        let margin = r.margin.map_or(String::new(), |m| format!(" margin {m:.3e}"));
        println!(
            "{} {:<60} residual {:.3e} tol {:.3e} [{}]{margin}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.abs_residual,
            r.tolerance,
            r.mode.label()
        );
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} checks, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
