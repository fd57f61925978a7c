//! Full and partial post-selection on click timing.
//!
//! Photon `i` of a selected block of `m` photons starting at chain
//! position `p` (1-based, offset `o = p - 1`) must click at slot `o + i`
//! for `i < m`, where it is measured in `X_phi` by the detector pair. The
//! final photon of the block is measured in `Z` by its delay: one loop
//! round (slot `o + m`) reads `+1`, two rounds (slot `o + m + 1`) read `-1`.
//! Full post-selection is the block `p = 1, m = n` and requires these to be
//! the only clicks of the trial. Partial post-selection accepts any trial
//! with exactly `m` clicks at the window slots, including polluting events
//! that do not come from an `m`-photon cluster.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::multiphoton::{Click, DetectionPattern, Detector, Distinguishability, ModeEngine};
use crate::network::NetworkOptions;
use crate::observable::{ObservableSpec, PauliSlot};

/// A block of `m_selected` consecutive photons of an `n_experiment` chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionWindow {
    pub n_experiment: usize,
    pub m_selected: usize,
    /// Chain position of the first selected photon, 1-based.
    pub position: usize,
    /// Required click slots of the `X`-measured photons.
    pub slots: Vec<usize>,
    /// Slots of the final photon reading `Z = +1` and `Z = -1`.
    pub final_slots: [usize; 2],
}

impl SelectionWindow {
    pub fn new(n_experiment: usize, m_selected: usize, position: usize) -> Result<Self> {
        if m_selected == 0 || m_selected > n_experiment {
            return Err(invalid!("cannot select {m_selected} of {n_experiment} photons"));
        }
        if position == 0 || position > n_experiment - m_selected + 1 {
            return Err(invalid!(
                "position {position} is outside 1..={} for {m_selected} of {n_experiment} photons",
                n_experiment - m_selected + 1
            ));
        }
        let o = position - 1;
        let slots = ((o + 1)..(o + m_selected)).collect();
        Ok(Self {
            n_experiment,
            m_selected,
            position,
            slots,
            final_slots: [o + m_selected, o + m_selected + 1],
        })
    }

    /// The full post-selection window of an `n`-photon run.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(n, n, 1)
    }

    /// The window covering the last `m` photons.
    pub fn last(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(invalid!("cannot select {m} of {n} photons"));
        }
        Self::new(n, m, n - m + 1)
    }

    pub fn is_full(&self) -> bool {
        self.m_selected == self.n_experiment
    }

    /// Every accepted click pattern, with its final-photon `Z` outcome.
    pub fn patterns(&self) -> Vec<(DetectionPattern, f64)> {
        let m = self.m_selected;
        let mut out = Vec::with_capacity(1 << (m + 1));
        for bits in 0u32..(1 << m) {
            for (z, &last) in [1.0, -1.0].iter().zip(&self.final_slots) {
                let clicks = (0..m)
                    .map(|i| {
                        let slot = if i + 1 < m { self.slots[i] } else { last };
                        let det = if bits & (1 << i) == 0 { Detector::DH } else { Detector::DV };
                        Click::new(slot, det)
                    })
                    .collect();
                out.push((DetectionPattern::new(clicks).expect("window slots are distinct"), *z));
            }
        }
        out
    }

    /// Outcome of `spec` on a pattern, or `None` if the pattern is not
    /// accepted by this window.
    pub fn parity(&self, pattern: &DetectionPattern, spec: &ObservableSpec) -> Option<f64> {
        let m = self.m_selected;
        if spec.len() != m || pattern.len() != m {
            return None;
        }
        let clicks = pattern.clicks();
        for (c, &slot) in clicks.iter().zip(&self.slots) {
            if c.slot != slot {
                return None;
            }
        }
        let last = clicks[m - 1].slot;
        let mut value = if last == self.final_slots[0] {
            1.0
        } else if last == self.final_slots[1] {
            -1.0
        } else {
            return None;
        };
        for (c, slot) in clicks.iter().zip(spec.slots()) {
            if *slot == PauliSlot::XPhi {
                value *= c.detector.sign();
            }
        }
        Some(value)
    }
}

/// Accepted patterns of a fully post-selected `n`-photon run. A single
/// photon is accepted when it leaves at the first exit slot.
pub fn full_postselection_patterns(n: usize) -> Result<Vec<DetectionPattern>> {
    if n == 0 {
        return Err(invalid!("a chain needs at least one photon"));
    }
    if n == 1 {
        return [Detector::DH, Detector::DV]
            .iter()
            .map(|&d| DetectionPattern::new(alloc::vec![Click::new(1, d)]))
            .collect();
    }
    Ok(SelectionWindow::full(n)?.patterns().into_iter().map(|(p, _)| p).collect())
}

/// All `n - m + 1` windows of `m` consecutive photons.
pub fn pps_windows(n: usize, m: usize) -> Result<Vec<SelectionWindow>> {
    if m == 0 || m >= n {
        return Err(invalid!("partial post-selection needs 1 <= m < n, got m = {m}, n = {n}"));
    }
    (1..=n - m + 1).map(|p| SelectionWindow::new(n, m, p)).collect()
}

/// Conditional expectation over the patterns accepted by a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowExpectation {
    pub value: f64,
    /// Total probability of the accepted patterns per trial.
    pub weight: f64,
}

/// Conditional expectation of `spec` over `window` for a prepared engine.
pub fn window_expectation(engine: &ModeEngine, window: &SelectionWindow, spec: &ObservableSpec) -> Result<WindowExpectation> {
    spec.validate_for(window.m_selected)?;
    if window.n_experiment != engine.n_photons() {
        return Err(invalid!(
            "window is for {} photons but the engine has {}",
            window.n_experiment,
            engine.n_photons()
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (pattern, _) in window.patterns() {
        let p = engine.pattern_probability(&pattern)?;
        let parity = window.parity(&pattern, spec).expect("pattern generated by the window");
        num += p * parity;
        den += p;
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate(alloc::format!(
            "window at position {} has no accepted probability",
            window.position
        )));
    }
    Ok(WindowExpectation { value: num / den, weight: den })
}

/// PPS (or full) expectation at phase `phi` for a configuration.
pub fn pps_expectation(
    config: &ExperimentConfig,
    window: &SelectionWindow,
    spec: &ObservableSpec,
    phi: f64,
) -> Result<WindowExpectation> {
    pps_expectation_with(config, window, spec, phi, &NetworkOptions::default(), Distinguishability::default())
}

pub fn pps_expectation_with(
    config: &ExperimentConfig,
    window: &SelectionWindow,
    spec: &ObservableSpec,
    phi: f64,
    options: &NetworkOptions,
    model: Distinguishability,
) -> Result<WindowExpectation> {
    if window.n_experiment != config.n_photons {
        return Err(invalid!(
            "window is for {} photons but the configuration has {}",
            window.n_experiment,
            config.n_photons
        ));
    }
    let engine = ModeEngine::from_config(&config.with_phi(phi), options, model)?;
    window_expectation(&engine, window, spec)
}

/// Fully post-selected expectation of an `n`-photon observable.
pub fn full_expectation(config: &ExperimentConfig, spec: &ObservableSpec, phi: f64) -> Result<WindowExpectation> {
    pps_expectation(config, &SelectionWindow::full(config.n_photons)?, spec, phi)
}
