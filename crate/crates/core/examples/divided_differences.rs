//! Divided differences of scalar functions, including confluent points, checked against
//! their integral representation and the Taylor split.

use univlab::quadrature::SimplexQuadrature;
use univlab::scalar_calculus::{
    divided_difference, divided_difference_complex, genocchi_hermite, taylor_taylor_remainder, ScalarFunctionSpec,
};
use univlab::linalg::c;

fn main() -> univlab::Result<()> {
    let cube = ScalarFunctionSpec::Power(3);
    // For a^3 the second difference is the sum of the points.
    println!("Δ²[a³](1, 2, 4) = {}", divided_difference(&cube, &[1.0, 2.0, 4.0])?);
    // Confluent points collapse to derivatives: Δ²f(a, a, a) = f''(a)/2.
    println!("Δ²[a³](2, 2, 2) = {}  (f''(2)/2 = 6)", divided_difference(&cube, &[2.0, 2.0, 2.0])?);

    let sin = ScalarFunctionSpec::sin();
    let points = [0.3, 0.3, 1.1];
    let table = divided_difference(&sin, &points)?;
    let integral = genocchi_hermite(&sin, &points, SimplexQuadrature::default_for(2)?)?;
    println!("Δ²[sin](0.3, 0.3, 1.1): table {table:.15}, simplex integral {integral:.15}");

    let resolvent = ScalarFunctionSpec::Resolvent(c(0.5, 1.0));
    let r = divided_difference_complex(&resolvent, &[0.0, 1.0, -1.0])?;
    println!("Δ²[(ζ - a)⁻¹](0, 1, -1) at ζ = 0.5 + i: {r}");

    let exp = ScalarFunctionSpec::exp();
    let (taylor, remainder) = taylor_taylor_remainder(&exp, 0.7, 0.2, 2)?;
    println!(
        "e^0.7 - e^0.2 = {:.15}; Taylor part {taylor:.15} + remainder {remainder:.15} = {:.15}",
        0.7f64.exp() - 0.2f64.exp(),
        taylor + remainder
    );
    Ok(())
}
