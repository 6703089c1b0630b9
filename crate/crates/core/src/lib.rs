//! Separation-rank experiments for simplified self-attention networks.
//!
//! * [`attention`]: the network, its loss and gradient, and the in-context and
//!   sequential representations with their association-layer variants.
//! * [`seprank`]: grid matricizations, spectral rank estimates, epsilon-rank
//!   certificates and the closed-form depth bounds.
//! * [`combinatorics`]: log-space arithmetic, multinomial sums and the lattice
//!   and summand counts behind the sequential upper bound.
//! * [`sphere`]: sphere sampling, cosine moments, Hadamard-power Grams and the
//!   first-layer construction behind the in-context lower bound.

pub mod attention;
pub mod combinatorics;
pub mod error;
pub mod linalg;
pub mod seprank;
pub mod sphere;

pub use error::{CoreError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
