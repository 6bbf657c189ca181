//! Key-rate analysis and protocol simulation for an extended mediated
//! semi-quantum key distribution (M-SQKD) protocol.
//!
//! Two "classical" users (Alice and Bob) can only reflect a photon or route
//! it to a detector; an untrusted quantum server prepares the signals and
//! announces measurement outcomes. Each protocol round runs one sub-round
//! and, when the server announces "0", a second sub-round in which both
//! users invert their action; this salvages rounds the one-sub-round
//! protocol would discard.
//!
//! The crate provides:
//!
//! - [`channel`]: closed-form observable statistics for the symmetric
//!   noise model (phase error, one-way loss, server dark counts).
//! - [`entropy`]: the generic conditional von Neumann entropy lower bound
//!   over pairs of unnormalized conditional states.
//! - [`keyrate`]: the full key-rate pipeline — inner-product bounds from
//!   observables, 3-term and 6-term entropy bounds, Devetak-Winter rate,
//!   effective (per-photon) rate, and baselines.
//! - [`attack`]: explicit i.i.d. server attacks, exact conditional entropy
//!   via Gram-matrix eigenvalues, and soundness checks of the bounds.
//! - [`sim`]: event-level Monte Carlo of the protocol under an honest
//!   server, used as an empirical oracle for the closed forms.

pub mod attack;
pub mod channel;
pub mod entropy;
pub mod error;
pub mod keyrate;
pub mod sim;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
