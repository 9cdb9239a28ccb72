//! Single-qubit dephasing channels driven by classical noise.
//!
//! A qubit prepared in `|+⟩` picks up a random phase `Φ(t) = ∫ X dt` from a
//! fluctuating field `X`. Averaging `e^{-2iΦ}` over many realizations of the
//! field gives the decohered state. The crate covers:
//!
//! - [`stochastic`]: reproducible random telegraph (RTN) and
//!   Ornstein-Uhlenbeck (OU) trajectories and their phases;
//! - [`channel`]: ensemble coherence, the dephased state and closed-form
//!   references;
//! - [`apparatus`]: a photonic emulator with per-pixel weights, purity loss,
//!   Poisson coincidence counts and static-noise calibration;
//! - [`tomography`]: four-projector linear-inversion tomography;
//! - [`analysis`]: trace distance and revival-based non-Markovianity;
//! - [`experiment`]: run configuration and the end-to-end pipeline.
//!
//! Ensemble work runs on rayon when the `parallel` feature is enabled (the
//! default). Results are bit-identical for any worker count; see [`exec`].

// `!(x > 0.0)` is used on purpose so that NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod apparatus;
pub mod channel;
mod error;
pub mod exec;
pub mod experiment;
pub mod state;
pub mod stochastic;
pub mod tomography;

pub use error::{Error, Result};
pub use exec::Execution;
pub use state::DensityMatrix;
pub use stochastic::{NoiseKind, ProcessSpec, RtnInitial, SeedSpec, TimeGrid};
