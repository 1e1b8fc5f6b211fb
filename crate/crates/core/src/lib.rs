//! Intensity-field correlation of single-atom resonance fluorescence.
//!
//! The crate covers the whole chain from a multilevel atom model to the
//! analysis of start/stop photon time tags:
//!
//! * [`atom`]: Zeeman-resolved atom models (two-level test atom, ¹³⁸Ba⁺).
//! * [`liouville`]: Lindblad generator, steady state, propagation and the
//!   regression-theorem correlation functions `g²`, `g15_Φ` and `G_total`.
//! * [`homodyne`]: prefactor / visibility / intensity-ratio arithmetic,
//!   composition of `g_total_Φ` and extraction of `g15_0`, `g15_{π/2}`.
//! * [`trajectory`]: quantum-jump synthesis of start and homodyne stop
//!   click streams.
//! * [`correlator`]: start–stop histogramming, normalization, LO phase
//!   calibration and visibility estimation.

pub mod analysis;
pub mod angular;
pub mod atom;
pub mod config;
pub mod correlator;
pub mod error;
pub mod homodyne;
pub mod io;
pub mod liouville;
pub mod tagfile;
pub mod trajectory;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use error::{Error, Result};

/// Dense complex matrix used for every operator in the crate.
pub type CMatrix = DMatrix<Complex64>;
