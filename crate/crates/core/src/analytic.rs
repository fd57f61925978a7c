//! Closed-form visibility curves and the pair-visibility amplitude law.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math;
use crate::observable::CurveKind;
use crate::C64;

/// 2x2 complex matrix, row major.
pub type Mat2 = [[C64; 2]; 2];

/// `amplitude = pair_vis^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmplitudeLaw {
    pub exponent: u32,
}

impl AmplitudeLaw {
    pub fn amplitude(self, pair_vis: f64) -> f64 {
        math::powi(pair_vis, self.exponent)
    }
}

/// Exponent of the pair visibility in the amplitude of each curve.
pub fn ideal_curve_amplitude(kind: CurveKind) -> AmplitudeLaw {
    let exponent = match kind {
        CurveKind::V2 => 1,
        CurveKind::V3 => 2,
        CurveKind::V4 => 3,
        CurveKind::V4p => 2,
        CurveKind::V6 => 5,
        CurveKind::V6p => 4,
        CurveKind::V6pp => 4,
    };
    AmplitudeLaw { exponent }
}

/// Expected `<O(phi)>` for a curve kind at the given pair visibility.
pub fn analytic_visibility(kind: CurveKind, pair_vis: f64, phi: f64) -> Result<f64> {
    if !math::is_unit_interval(pair_vis) {
        return Err(invalid!("pair_vis = {pair_vis} is outside [0, 1]"));
    }
    Ok(ideal_curve_amplitude(kind).amplitude(pair_vis) * kind.shape(phi))
}

/// Maximum of `|shape|` over phi.
pub fn shape_extremum(kind: CurveKind) -> f64 {
    match kind {
        // c s^2 peaks at cos^2 = 1/3
        CurveKind::V4 => 2.0 / (3.0 * math::sqrt(3.0)),
        // c^3 s^2 peaks at cos^2 = 3/5
        CurveKind::V6 => math::powf(0.6, 1.5) * 0.4,
        _ => 1.0,
    }
}

/// A phase in [0, pi/2] where `|shape|` reaches [`shape_extremum`].
pub fn extremal_phase(kind: CurveKind) -> f64 {
    match kind {
        CurveKind::V2 | CurveKind::V4p | CurveKind::V6p => 0.0,
        CurveKind::V3 | CurveKind::V6pp => math::PI / 2.0,
        CurveKind::V4 => libm::acos(math::sqrt(1.0 / 3.0)),
        CurveKind::V6 => libm::acos(math::sqrt(0.6)),
    }
}

/// `X_phi = Z_phi X Z_phi^dagger = [[0, e^{-i phi}], [e^{i phi}, 0]]`.
pub fn xphi_operator(phi: f64) -> Mat2 {
    let zero = C64::new(0.0, 0.0);
    [
        [zero, C64::from_polar(1.0, -phi)],
        [C64::from_polar(1.0, phi), zero],
    ]
}

/// A curve `amplitude * shape(phi + phase_offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveModel {
    pub kind: CurveKind,
    pub amplitude: f64,
    pub phase_offset: f64,
}

impl CurveModel {
    pub fn new(kind: CurveKind, amplitude: f64, phase_offset: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&amplitude) {
            return Err(invalid!("curve amplitude {amplitude} is outside [-1, 1]"));
        }
        Ok(Self { kind, amplitude, phase_offset })
    }

    /// The noiseless model at a given pair visibility.
    pub fn ideal(kind: CurveKind, pair_vis: f64) -> Result<Self> {
        if !math::is_unit_interval(pair_vis) {
            return Err(invalid!("pair_vis = {pair_vis} is outside [0, 1]"));
        }
        Self::new(kind, ideal_curve_amplitude(kind).amplitude(pair_vis), 0.0)
    }

    pub fn evaluate(&self, phi: f64) -> f64 {
        self.amplitude * self.kind.shape(phi + self.phase_offset)
    }
}
