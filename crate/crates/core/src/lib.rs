//! Observe-ability analysis for linear discrete-time systems `Σ(A, C)`
//! measured under energy-bounded noise.
//!
//! The crate computes observability Gramians, the feasible-error and image
//! observability ellipsoids built from them, closed-form infinite-horizon
//! determinants and shape factors, observability/reachability duality
//! checks, normalized cross-candidate rankings, and a Monte-Carlo bench for
//! the least-squares observer.

pub mod analytic;
pub mod bench;
pub mod cli;
pub mod compare;
pub mod duality;
pub mod ellipsoid;
pub mod error;
pub mod gramian;
pub mod model;
mod serde_float;

pub use error::{Error, Result};
pub use gramian::{GramianBundle, Horizon};
pub use model::LdtSystem;
