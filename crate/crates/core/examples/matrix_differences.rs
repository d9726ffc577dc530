//! First and second matrix differences: closed forms against the block-embedding path,
//! and the confluent second difference against a finite-difference second derivative.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use univlab::linalg::{c, random_hermitian};
use univlab::matrix_calculus::{
    closed_form_first_difference, closed_form_second_difference, finite_difference_second_derivative,
    matrix_difference, matrix_second_difference, relative_error, MatrixFunctionSpec,
};

fn main() -> univlab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = 4;
    let a: Vec<_> = (0..3).map(|_| random_hermitian(&mut rng, d, 1.0)).collect();
    let h1 = random_hermitian(&mut rng, d, 1.0);
    let h2 = random_hermitian(&mut rng, d, 1.0);

    let functions = [
        MatrixFunctionSpec::Power { p: 5 },
        MatrixFunctionSpec::Resolvent { zeta: c(0.2, 1.0) },
        MatrixFunctionSpec::ResolventSquare { zeta: c(-0.4, 0.8) },
        MatrixFunctionSpec::ResolventPowerDerivative { zeta: c(0.0, 1.5), p: 2 },
    ];
    println!("{:<40} {:>14} {:>14}", "function", "first diff", "second diff");
    for f in &functions {
        let e1 = relative_error(
            &closed_form_first_difference(f, &a[0], &a[1], &h1)?,
            &matrix_difference(f, &a[0], &a[1], &h1)?,
            1e-300,
        );
        let e2 = relative_error(
            &closed_form_second_difference(f, &a[0], &a[1], &a[2], &h1, &h2)?,
            &matrix_second_difference(f, &a[0], &a[1], &a[2], &h1, &h2)?,
            1e-300,
        );
        println!("{:<40} {e1:>14.3e} {e2:>14.3e}", f.name());
    }

    // Δ²f(A, A, A)[H ⊗ H] equals half the second derivative along H.
    let f = MatrixFunctionSpec::Power { p: 4 };
    let confluent = matrix_second_difference(&f, &a[0], &a[0], &a[0], &h1, &h1)?;
    let fd = finite_difference_second_derivative(&f, &a[0], &h1, 1e-4)? * c(0.5, 0.0);
    println!("confluent Δ² vs ½ D² (finite difference): {:.3e}", relative_error(&confluent, &fd, 1e-300));
    Ok(())
}
