//! Exact linear-time-varying immersion of linear systems with quadratic
//! outputs, and a Riccati observer on the immersed system.
//!
//! The pipeline is: describe a system ([`sysmodel::LqoSystem`]), compute its
//! immersion ([`immersion::immerse`]), build the extended system
//! ([`immersion::build_ltv`]) and run the observer on it
//! ([`observer::run_observer`]). [`simkit`] ties these together for
//! scenario files.

pub mod error;
pub mod immersion;
pub mod linalg;
pub mod observer;
pub mod ode;
pub mod randsys;
pub mod selftest;
pub mod simkit;
pub mod symcalc;
pub mod sysmodel;

pub use error::{Error, Result};
pub use immersion::{build_ltv, immerse, Immersion, ImmersionOptions, LtvSystem};
pub use sysmodel::LqoSystem;
