//! Rate scaling, a generic stabilizer witness, and loop relaxation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math;

/// Efficiencies entering the per-photon rate cost, plus an anchor rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub eta_sp: f64,
    pub eta_setup: f64,
    pub eta_det: f64,
    pub eta_ent: f64,
    /// Measured rate at `anchor_n` photons, Hz.
    pub base_rate_hz: f64,
    pub anchor_n: usize,
}

impl RateModel {
    /// Anchors the model at the lowest photon number among `measured`
    /// (pairs of photon number and rate in Hz).
    pub fn anchored(
        eta_sp: f64,
        eta_setup: f64,
        eta_det: f64,
        eta_ent: f64,
        measured: &[(usize, f64)],
    ) -> Result<Self> {
        let &(anchor_n, base_rate_hz) = measured
            .iter()
            .min_by_key(|(n, _)| *n)
            .ok_or_else(|| invalid!("at least one measured rate is needed as anchor"))?;
        let model = Self { eta_sp, eta_setup, eta_det, eta_ent, base_rate_hz, anchor_n };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_sp", self.eta_sp),
            ("eta_setup", self.eta_setup),
            ("eta_det", self.eta_det),
            ("eta_ent", self.eta_ent),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid!("{name} = {v} must lie in (0, 1]"));
            }
        }
        if !(self.base_rate_hz > 0.0 && self.base_rate_hz.is_finite()) {
            return Err(invalid!("base rate must be positive"));
        }
        Ok(())
    }
}

/// Rate cost of one more photon, `r = 1 / (eta_sp eta_setup eta_det eta_ent)`.
pub fn scaling_ratio(model: &RateModel) -> Result<f64> {
    for (name, v) in [
        ("eta_sp", model.eta_sp),
        ("eta_setup", model.eta_setup),
        ("eta_det", model.eta_det),
        ("eta_ent", model.eta_ent),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(invalid!("{name} = {v} must lie in (0, 1]"));
        }
    }
    Ok(1.0 / (model.eta_sp * model.eta_setup * model.eta_det * model.eta_ent))
}

/// `R_N = base_rate * r^-(N - anchor_n)` for every `N` in `n_list`.
pub fn predict_rates(model: &RateModel, n_list: &[usize]) -> Result<Vec<f64>> {
    model.validate()?;
    let r = scaling_ratio(model)?;
    Ok(n_list
        .iter()
        .map(|&n| model.base_rate_hz * math::powf(r, -(n as f64 - model.anchor_n as f64)))
        .collect())
}

/// Per-photon rate ratios between consecutive entries of `measured`,
/// normalised to single steps: `(n_from, n_to, (R_from / R_to)^(1/(n_to - n_from)))`.
pub fn step_ratios(measured: &[(usize, f64)]) -> Vec<(usize, usize, f64)> {
    measured
        .windows(2)
        .map(|w| {
            let (n0, r0) = w[0];
            let (n1, r1) = w[1];
            (n0, n1, math::powf(r0 / r1, 1.0 / (n1 - n0) as f64))
        })
        .collect()
}

/// Generic stabilizer-witness bound `1 - sum_i (1 - s_i) / 2`, with every
/// expectation clamped to [-1, 1].
pub fn fidelity_bound(stabilizer_expectations: &[f64]) -> Result<f64> {
    if stabilizer_expectations.is_empty() {
        return Err(invalid!("fidelity bound needs at least one stabilizer expectation"));
    }
    if stabilizer_expectations.iter().any(|s| !s.is_finite()) {
        return Err(invalid!("stabilizer expectations must be finite"));
    }
    let deficit: f64 = stabilizer_expectations
        .iter()
        .map(|s| (1.0 - s.clamp(-1.0, 1.0)) / 2.0)
        .sum();
    Ok(1.0 - deficit)
}

/// Probability that a photon is still in the memory after `off_cycles`
/// loop-emptying cycles.
pub fn relaxation_residual(off_cycles: usize, per_cycle_survival: f64) -> Result<f64> {
    if !math::is_unit_interval(per_cycle_survival) {
        return Err(invalid!("survival {per_cycle_survival} is outside [0, 1]"));
    }
    Ok(math::powi(per_cycle_survival, off_cycles as u32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(e: [f64; 4]) -> RateModel {
        RateModel { eta_sp: e[0], eta_setup: e[1], eta_det: e[2], eta_ent: e[3], base_rate_hz: 6e3, anchor_n: 2 }
    }

    #[test]
    fn ratio_examples() {
        let r = scaling_ratio(&model([0.13, 0.37, 0.90, 0.50])).unwrap();
        assert!((r - 46.20).abs() < 5e-3);
        assert_eq!(scaling_ratio(&model([1.0; 4])).unwrap(), 1.0);
        assert_eq!(scaling_ratio(&model([1.0, 1.0, 1.0, 0.5])).unwrap(), 2.0);
        assert!(scaling_ratio(&model([0.0, 1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn rates_anchor_at_lowest_n() {
        let m = RateModel::anchored(0.13, 0.37, 0.9, 0.5, &[(4, 2.2), (2, 6e3), (3, 120.0)]).unwrap();
        assert_eq!(m.anchor_n, 2);
        let rates = predict_rates(&m, &[2, 3, 4]).unwrap();
        assert!((rates[0] - 6e3).abs() < 1e-9);
        assert!((rates[1] - 129.9).abs() < 0.1);
        assert!((rates[2] - 2.81).abs() < 0.01);
        let flat = predict_rates(&model([1.0; 4]), &[2, 5, 9]).unwrap();
        assert!(flat.iter().all(|r| (*r - 6e3).abs() < 1e-9));
    }

    #[test]
    fn witness_bound() {
        assert_eq!(fidelity_bound(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!((fidelity_bound(&[0.8, 0.9]).unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(fidelity_bound(&[2.0]).unwrap(), 1.0);
        assert!(fidelity_bound(&[]).is_err());
    }

    #[test]
    fn relaxation() {
        assert!((relaxation_residual(3, 0.342).unwrap() - 0.040).abs() < 1e-3);
        for k in 0..12 {
            assert_eq!(relaxation_residual(k, 0.5).unwrap(), math::powi(0.5, k as u32));
        }
        assert_eq!(relaxation_residual(0, 0.3).unwrap(), 1.0);
        assert!(relaxation_residual(2, 1.5).is_err());
    }
}
