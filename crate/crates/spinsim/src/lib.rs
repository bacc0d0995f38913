//! Simulation and verification engine for one-dimensional,
//! translation-invariant, finite-range, attractive spin systems.
//!
//! The crate is organised bottom-up:
//! - [`rates`]: local rate tables, attractiveness, coupling certificates;
//! - [`lattice`]: bit-packed configurations on finite windows with
//!   constant tails, plus initial conditions;
//! - [`engine`]: seeded event streams, the uniformized and Gillespie
//!   backends, and pathwise coupling of translates;
//! - [`exact`]: exact transient laws on small windows, suffix marginals,
//!   up-set enumeration, and stochastic domination;
//! - [`verify`]: the three verification modes (coupled, exact,
//!   independent), occupation profiles, and truncation self checks;
//! - [`cli`]: the batch front end behind the `spinsim` binary.

pub mod cli;
pub mod engine;
pub mod exact;
pub mod lattice;
pub mod rates;
pub mod verify;
