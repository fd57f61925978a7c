#![no_std]
#![forbid(unsafe_code)]

//! Simulation core for sequential generation of photonic linear cluster
//! states in a delay-loop + polarizing-beam-splitter apparatus.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It provides:
//!
//! - [`analytic`]: closed-form visibility curves for the measured observable
//!   family and their amplitude laws.
//! - [`qubit`]: Engine A, an exact density-operator simulation of the fusion
//!   sequence at the polarization-qubit level with per-fusion dephasing.
//! - [`network`] and [`multiphoton`]: Engine B, the unrolled time-bin network
//!   with loop loss and multi-photon pattern probabilities under partial
//!   distinguishability.
//! - [`sampler`]: reproducible Monte-Carlo event streams drawn from Engine B.
//! - [`postselect`], [`fit`] and [`rates`]: post-selection and partial
//!   post-selection logic, visibility fitting, rate and witness models.
//! - [`stream`]: slot binning, coincidence matching, scan monitoring and
//!   phase-drift alignment for detection-event streams.

extern crate alloc;

pub mod analytic;
pub mod config;
pub mod error;
pub mod fit;
pub(crate) mod math;
pub mod multiphoton;
pub mod network;
pub mod observable;
pub mod permanent;
pub mod postselect;
pub mod qubit;
pub mod rates;
pub mod reference;
pub mod sampler;
pub mod stream;

pub use analytic::{analytic_visibility, ideal_curve_amplitude, xphi_operator, AmplitudeLaw, CurveModel};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use fit::{fit_counts, fit_visibility, CurvePoint, FitResult, VisibilityCurve};
pub use multiphoton::{
    multiphoton_probability, Detector, DetectionPattern, Distinguishability, ModeEngine,
    PatternProbability,
};
pub use network::{build_network, NetworkOptions, Polarization, TransferNetwork};
pub use observable::{CurveKind, ObservableSpec, PauliSlot};
pub use postselect::{full_postselection_patterns, pps_windows, SelectionWindow};
pub use qubit::PolarizationState;
pub use rates::{fidelity_bound, relaxation_residual, scaling_ratio, RateModel};
pub use stream::{EventRecord, SequenceLayout};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex<f64>;
