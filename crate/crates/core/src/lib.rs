pub mod bench;
pub mod cli;
pub mod error;
pub mod gaussian_proxy;
pub mod identities;
pub mod linalg;
pub mod matrix_calculus;
pub mod numeric;
pub mod ensembles;
pub mod report;
pub mod quadrature;
pub mod rng;
pub mod scalar_calculus;
pub mod spectral_stats;

pub use error::{Error, Result};
