use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math;
use crate::reference;

/// Physical and protocol parameters of one loop experiment.
///
/// Field names are the JSON schema of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Photons inserted per trial (ON slots of the pulse sequence).
    pub n_photons: usize,
    /// Pairwise two-photon HOM visibility, shared by all photon pairs.
    pub pair_vis: f64,
    /// Fibered single-photon brightness.
    pub eta_sp: f64,
    /// Transmission of the loop setup, applied once per photon.
    pub eta_setup: f64,
    /// Detector efficiency.
    pub eta_det: f64,
    /// Transmission of one loop round trip.
    pub loop_roundtrip_trans: f64,
    /// In-loop birefringent phase, radians.
    pub phi: f64,
    /// Loop-emptying cycles appended after the ON slots.
    pub off_cycles: usize,
    /// Loop round-trip time, equal to the photon spacing within a trial.
    pub slot_period_ns: f64,
    /// Laser periods per loop round trip; trials interleaved per sequence.
    pub interleave_factor: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_photons: 2,
            pair_vis: reference::V_HOM,
            eta_sp: reference::ETA_SP,
            eta_setup: reference::ETA_SETUP,
            eta_det: reference::ETA_DET,
            loop_roundtrip_trans: default_loop_transmission(),
            phi: 0.0,
            off_cycles: reference::OFF_CYCLES,
            slot_period_ns: reference::SLOT_PERIOD_NS,
            interleave_factor: reference::INTERLEAVE_FACTOR,
        }
    }
}

/// Loop round-trip transmission back-solved from the residual memory
/// occupation after the OFF cycles: each OFF cycle keeps the photon with
/// probability `loop_roundtrip_trans / 2`.
pub fn default_loop_transmission() -> f64 {
    let per_cycle = math::powf(
        reference::RELAXATION_RESIDUAL,
        1.0 / reference::OFF_CYCLES as f64,
    );
    2.0 * per_cycle
}

impl ExperimentConfig {
    pub fn with_photons(n_photons: usize) -> Self {
        Self { n_photons, ..Self::default() }
    }

    /// A lossless source/setup/detector configuration (the loop keeps its
    /// default transmission unless overridden).
    pub fn lossless(n_photons: usize, pair_vis: f64) -> Self {
        Self {
            n_photons,
            pair_vis,
            eta_sp: 1.0,
            eta_setup: 1.0,
            eta_det: 1.0,
            loop_roundtrip_trans: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_photons == 0 {
            return Err(invalid!("n_photons must be at least 1"));
        }
        for (name, value) in [
            ("pair_vis", self.pair_vis),
            ("eta_sp", self.eta_sp),
            ("eta_setup", self.eta_setup),
            ("eta_det", self.eta_det),
            ("loop_roundtrip_trans", self.loop_roundtrip_trans),
        ] {
            if !math::is_unit_interval(value) {
                return Err(invalid!("{name} = {value} is outside [0, 1]"));
            }
        }
        if !self.phi.is_finite() {
            return Err(invalid!("phi must be finite"));
        }
        if !(self.slot_period_ns.is_finite() && self.slot_period_ns > 0.0) {
            return Err(invalid!("slot_period_ns must be positive"));
        }
        if self.interleave_factor == 0 {
            return Err(invalid!("interleave_factor must be at least 1"));
        }
        Ok(())
    }

    /// Probability that a photon survives every polarization-independent,
    /// path-independent loss (source, setup, detector).
    pub fn uniform_transmission(&self) -> f64 {
        self.eta_sp * self.eta_setup * self.eta_det
    }

    /// Probability that a photon left in the memory stays there through one
    /// OFF cycle.
    pub fn per_cycle_survival(&self) -> f64 {
        self.loop_roundtrip_trans / 2.0
    }

    pub fn laser_period_ns(&self) -> f64 {
        self.slot_period_ns / self.interleave_factor as f64
    }

    /// Slots spanned by one trial: the ON slots plus the OFF cycles.
    pub fn slots_per_sequence(&self) -> usize {
        self.n_photons + self.off_cycles
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        Self { phi, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_loop_transmission_matches_residual() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let survival = cfg.per_cycle_survival();
        assert!((math::powi(survival, 3) - 0.04).abs() < 1e-12);
        assert!((cfg.loop_roundtrip_trans - 0.684).abs() < 1e-3);
    }

    #[test]
    fn rejects_out_of_range_efficiency() {
        let cfg = ExperimentConfig { eta_det: 1.2, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { n_photons: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { slot_period_ns: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn slot_period_is_interleave_times_laser_period() {
        let cfg = ExperimentConfig::default();
        let laser = cfg.laser_period_ns();
        assert!((laser * cfg.interleave_factor as f64 - cfg.slot_period_ns).abs() < 1e-12);
    }
}
