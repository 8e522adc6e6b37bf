//! Numerical model of a torsion-pendulum optomechanics experiment probing
//! Schrödinger-Newton (SN) self-gravity.
//!
//! Modules, bottom up:
//! - [`params`]: parameter types and config loading (SI units internally)
//! - [`snpotential`]: SN frequencies, self/mutual-gravity integrals, Gaussian fit
//! - [`noise`]: back-action, thermal, tabulated noise and the Q-factor budget
//! - [`loops`]: servo transfer functions and closed-loop spectra
//! - [`sim`]: stochastic time-domain simulation, Welch PSD, ring-up ensembles
//!
//! All PSDs are one-sided per Hz. Uncertainties integrate as
//! `ΔΘ² = ∫ S(Ω) dΩ/2π`.

pub mod consts;
pub mod error;
pub mod loops;
pub mod noise;
pub mod params;
pub mod quad;
pub mod sim;
pub mod snpotential;

pub use error::{ConfigError, Error, Result};
