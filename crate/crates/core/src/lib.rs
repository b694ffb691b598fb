//! Monte-Carlo uplink spectral-efficiency simulator for code-domain NOMA on
//! top of multi-cell Massive MIMO.
//!
//! The pipeline per fading realization is: correlated Rayleigh channels
//! ([`spatial_channel`]) for a network drop ([`network_scenario`]), pilot
//! transmission and MMSE estimation ([`pilot_mmse`]), spreading into
//! effective channels ([`code_domain`]), then MR or multicell-MMSE combining
//! and the resulting SINR and SE ([`receiver_se`]). [`experiment`] wraps the
//! three standard sweeps and their CSV output.

pub mod code_domain;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod network_scenario;
pub mod pilot_mmse;
pub mod quadrature;
pub mod receiver_se;
pub mod spatial_channel;

pub use error::{Error, Result};
