//! The loop and PBS unrolled into a linear time-bin network.
//!
//! Port convention at the PBS: an external photon's H component transmits
//! into the loop and its V component reflects straight to the detectors. A
//! circulating photon's H component transmits out to the detectors and its V
//! component reflects back into the loop. Each round trip applies the
//! Hadamard and `Z_phi = diag(1, e^{i phi})` and keeps amplitude
//! `sqrt(loop_roundtrip_trans)`; the lost amplitude goes to a loop-loss sink
//! labelled by the slot where the round trip started. Whatever is still in
//! the loop after `max_slot` goes to a tail sink.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::C64;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }
}

/// One output mode of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputMode {
    /// Leaves towards the detectors at `slot` with polarization `pol`.
    Detection { slot: usize, pol: Polarization },
    /// Lost during the round trip that starts at `slot`.
    LoopLoss { slot: usize, pol: Polarization },
    /// Still circulating after the last simulated slot.
    Tail { pol: Polarization },
}

/// Truncation and tolerance settings for [`build_network`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkOptions {
    /// Loop rounds simulated after the last ON and OFF slot.
    pub extra_rounds: usize,
    /// If set, building fails when any input leaves more than this
    /// probability in the tail.
    pub tail_tolerance: Option<f64>,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self { extra_rounds: 8, tail_tolerance: None }
    }
}

/// Single-photon amplitudes from each (input slot, polarization) to every
/// output mode.
///
/// Mode indices: detection modes `2 * slot + pol` for `slot in 0..=max_slot`,
/// followed by loop-loss modes in the same layout for `slot in 0..max_slot`,
/// followed by the two tail modes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferNetwork {
    n_inputs: usize,
    max_slot: usize,
    /// `columns[input][pol][mode]`
    columns: Vec<[Vec<C64>; 2]>,
}

/// Unrolls the loop for `config.n_photons` photons inserted at slots
/// `0..n_photons`.
pub fn build_network(config: &ExperimentConfig, options: &NetworkOptions) -> Result<TransferNetwork> {
    config.validate()?;
    let max_slot = config.n_photons + config.off_cycles + options.extra_rounds;
    let net = TransferNetwork::unrolled(
        config.n_photons,
        max_slot,
        config.phi,
        config.loop_roundtrip_trans,
    )?;
    if let Some(tol) = options.tail_tolerance {
        let tail = net.max_tail_mass();
        if tail > tol {
            return Err(Error::Truncation { tail_mass: tail, tolerance: tol });
        }
    }
    Ok(net)
}

impl TransferNetwork {
    /// Loop network with inputs at slots `0..n_inputs`.
    pub fn unrolled(n_inputs: usize, max_slot: usize, phi: f64, loop_trans: f64) -> Result<Self> {
        if n_inputs == 0 {
            return Err(invalid!("network needs at least one input"));
        }
        if max_slot < n_inputs {
            return Err(invalid!("max_slot {max_slot} does not reach past the last input"));
        }
        if !math::is_unit_interval(loop_trans) {
            return Err(invalid!("loop transmission {loop_trans} is outside [0, 1]"));
        }
        let n_modes = Self::mode_count(max_slot);
        let keep = math::sqrt(loop_trans);
        let lose = math::sqrt(1.0 - loop_trans);
        let phase = C64::from_polar(1.0, phi);
        let mut columns = Vec::with_capacity(n_inputs);
        for k in 0..n_inputs {
            let mut pair: [Vec<C64>; 2] = [vec![C64::new(0.0, 0.0); n_modes], vec![C64::new(0.0, 0.0); n_modes]];
            // V input: reflected to the detectors at its own slot.
            pair[1][Self::detection_index(k, Polarization::V)] = C64::new(1.0, 0.0);
            // H input: circulates.
            let col = &mut pair[0];
            let mut loop_state = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
            for s in k..max_slot {
                let h = (loop_state[0] + loop_state[1]) * FRAC_1_SQRT_2;
                let v = (loop_state[0] - loop_state[1]) * FRAC_1_SQRT_2 * phase;
                col[Self::loss_index(max_slot, s, Polarization::H)] = h * lose;
                col[Self::loss_index(max_slot, s, Polarization::V)] = v * lose;
                col[Self::detection_index(s + 1, Polarization::H)] = h * keep;
                loop_state = [C64::new(0.0, 0.0), v * keep];
            }
            col[Self::tail_index(max_slot, Polarization::H)] = loop_state[0];
            col[Self::tail_index(max_slot, Polarization::V)] = loop_state[1];
            columns.push(pair);
        }
        Ok(Self { n_inputs, max_slot, columns })
    }

    /// A network with arbitrary columns over the standard mode layout. Each
    /// column must have unit norm.
    pub fn from_columns(max_slot: usize, columns: Vec<[Vec<C64>; 2]>) -> Result<Self> {
        let n_modes = Self::mode_count(max_slot);
        for (k, pair) in columns.iter().enumerate() {
            for (p, col) in pair.iter().enumerate() {
                if col.len() != n_modes {
                    return Err(invalid!("column ({k}, {p}) has {} modes, expected {n_modes}", col.len()));
                }
                let norm: f64 = col.iter().map(|a| a.norm_sqr()).sum();
                if (norm - 1.0).abs() > 1e-10 {
                    return Err(invalid!("column ({k}, {p}) has norm {norm}"));
                }
            }
        }
        Ok(Self { n_inputs: columns.len(), max_slot, columns })
    }

    pub fn mode_count(max_slot: usize) -> usize {
        2 * (max_slot + 1) + 2 * max_slot + 2
    }

    pub fn detection_index(slot: usize, pol: Polarization) -> usize {
        2 * slot + pol.index()
    }

    fn loss_index(max_slot: usize, slot: usize, pol: Polarization) -> usize {
        2 * (max_slot + 1) + 2 * slot + pol.index()
    }

    fn tail_index(max_slot: usize, pol: Polarization) -> usize {
        2 * (max_slot + 1) + 2 * max_slot + pol.index()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn max_slot(&self) -> usize {
        self.max_slot
    }

    pub fn n_modes(&self) -> usize {
        Self::mode_count(self.max_slot)
    }

    /// Number of detection modes, `2 * (max_slot + 1)`.
    pub fn n_detection_modes(&self) -> usize {
        2 * (self.max_slot + 1)
    }

    pub fn mode_index(&self, mode: OutputMode) -> usize {
        match mode {
            OutputMode::Detection { slot, pol } => Self::detection_index(slot, pol),
            OutputMode::LoopLoss { slot, pol } => Self::loss_index(self.max_slot, slot, pol),
            OutputMode::Tail { pol } => Self::tail_index(self.max_slot, pol),
        }
    }

    pub fn mode(&self, index: usize) -> OutputMode {
        let det = self.n_detection_modes();
        let pol = if index % 2 == 0 { Polarization::H } else { Polarization::V };
        if index < det {
            OutputMode::Detection { slot: index / 2, pol }
        } else if index < det + 2 * self.max_slot {
            OutputMode::LoopLoss { slot: (index - det) / 2, pol }
        } else {
            OutputMode::Tail { pol }
        }
    }

    pub fn is_tail(&self, index: usize) -> bool {
        index >= self.n_detection_modes() + 2 * self.max_slot
    }

    pub fn amplitude(&self, input: usize, pol: Polarization, mode: OutputMode) -> C64 {
        self.columns[input][pol.index()][self.mode_index(mode)]
    }

    /// Output amplitudes of input `input` prepared in `alpha |H> + beta |V>`.
    pub fn column(&self, input: usize, state: [C64; 2]) -> Vec<C64> {
        let [h, v] = &self.columns[input];
        h.iter().zip(v).map(|(a, b)| state[0] * a + state[1] * b).collect()
    }

    pub fn raw_column(&self, input: usize, pol: Polarization) -> &[C64] {
        &self.columns[input][pol.index()]
    }

    /// Probability that input `input`, prepared in `state`, is still in the
    /// loop after the last slot.
    pub fn tail_mass(&self, input: usize, state: [C64; 2]) -> f64 {
        let col = self.column(input, state);
        col[self.n_modes() - 2..].iter().map(|a| a.norm_sqr()).sum()
    }

    /// Largest tail probability over inputs and input polarizations.
    pub fn max_tail_mass(&self) -> f64 {
        let start = self.n_modes() - 2;
        self.columns
            .iter()
            .flat_map(|pair| pair.iter())
            .map(|col| col[start..].iter().map(|a| a.norm_sqr()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Detected intensity per slot (both polarizations) for one input.
    pub fn slot_intensity(&self, input: usize, state: [C64; 2]) -> Vec<f64> {
        let col = self.column(input, state);
        (0..=self.max_slot)
            .map(|s| col[2 * s].norm_sqr() + col[2 * s + 1].norm_sqr())
            .collect()
    }
}

/// `|P> = (|H> + |V>)/sqrt(2)`, the state of every emitted photon.
pub fn plus_state() -> [C64; 2] {
    [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(FRAC_1_SQRT_2, 0.0)]
}
