//! Discrete-time simulator and per-slot decision library for freshness-aware
//! edge service caching.
//!
//! One edge server caches services fetched from a cloud server, serves user
//! tasks locally or forwards them, and keeps the long-run age of its cached
//! copies below per-service thresholds through virtual queues. Every slot is
//! turned into a drift-plus-penalty subproblem ([`lyapunov`]) that the
//! policies in [`policy`] solve, optionally through a semidefinite relaxation
//! ([`sdr`]).

pub mod delay_alloc;
pub mod env;
mod error;
mod grid;
pub mod lyapunov;
pub mod policy;
pub mod rng;
pub mod sdr;

pub use error::{ConstraintViolation, Error};
pub use grid::Grid;
