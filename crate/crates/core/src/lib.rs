//! Certified lower bounds on the classification margin of sigmoid and tanh
//! networks over ℓ∞ balls, with an automatically configured tangent-point
//! search.
//!
//! The pipeline:
//!
//! 1. [`model`]: load or generate a network and append a margin layer
//!    `g(x) = f_y(x) - f_j(x)`.
//! 2. [`relaxation`]: sandwich each sigmoidal neuron between two lines.
//! 3. [`search`]: pick the tangent points of those lines, either with the
//!    CROWN-style baseline or the multiplicative `(s, ψ)` search.
//! 4. [`propagation`]: back-substitute the relaxations to a linear function
//!    of the input and minimize it over the ball, giving `g*`.
//! 5. [`configurator`]: tune `(s, ψ)` per instance to maximize `g*`.
//! 6. [`verification`] and [`harness`]: certify instances and run batches.
//!
//! [`oracle`] holds brute-force checks used by the tests.
//!
//! ```
//! use sigbound::model::{gen_random_network, ActivationKind, RandomNetSpec};
//! use sigbound::verification::{verify_instance, VerificationMode};
//!
//! let net = gen_random_network(&RandomNetSpec::new(vec![2, 8, 3], ActivationKind::Sigmoid, 1.0), 7)?;
//! let out = verify_instance(&net, &[0.1, -0.2], 0, 0.01, VerificationMode::Baseline)?;
//! assert_eq!(out.certified, out.g_star >= 0.0);
//! # Ok::<(), sigbound::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod configurator;
mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod propagation;
pub mod relaxation;
pub mod search;
pub mod verification;

pub use error::{Error, Result};

// Book chapters are compiled as doctests so the guide cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/relaxation.md")]
    mod relaxation {}
    #[doc = include_str!("../../../book/src/tangent-search.md")]
    mod tangent_search {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
