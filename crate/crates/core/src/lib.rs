//! Desk-scale numerical laboratory for the coupled degenerate parabolic
//! system
//!
//! ```text
//! u_t - div(w(x) grad u) = t^r v^p
//! v_t - div(w(x) grad v) = t^s u^q        in R^N x (0, T)
//! ```
//!
//! with `p q > 1`, `r, s > -1`, and a diffusion weight `w(x) = |x_1|^alpha`
//! (case A) or `|x|^alpha` (case B) that degenerates on a hyperplane or at
//! the origin.
//!
//! The crate computes the sharp existence exponents and the critical
//! product separating blow-up from global existence ([`exponents`]),
//! discretizes the weighted diffusion semigroup conservatively and probes
//! its kernel estimates ([`semigroup`]), integrates the full system with
//! an IMEX scheme and a monotone integral-form iteration ([`solver`]),
//! and classifies runs against the predicted dichotomy and decay rates
//! ([`regimes`]). The [`cli`] module wires everything to a reproducible,
//! manifest-driven command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod exponents;
pub mod fit;
pub mod grid;
pub mod linalg;
pub mod output;
pub mod regimes;
pub mod semigroup;
pub mod solver;

pub use error::{Error, Result};
