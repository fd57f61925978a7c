//! Multi-photon click statistics of the unrolled network.
//!
//! Detectors sit behind a basis rotation that maps `|+>` to `D_H` and `|->`
//! to `D_V`, and they do not resolve photon number. For a set `A` of output
//! modes, the probability that every photon ends up in `A` is
//!
//! `P(A) = sum_rho w(rho) prod_i G_A[i][rho(i)]`,
//! `G_A[j][k] = sum_{o in A} c_j(o) conj(c_k(o))`,
//!
//! with `w` the distinguishability weight of the permutation. The
//! probability of an exact click set `C` follows by inclusion-exclusion
//! over `A = sinks + C'` for `C'` a subset of `C`, evaluated in the
//! equivalent cancellation-free form described at
//! [`ModeEngine::prefix_probability`]. Uniform loss `eta` gives
//! each photon a private loss mode with weight `1 - eta`. Photons still in
//! the loop after truncation (tail modes) are never in `A`, so pattern
//! probabilities sum to one minus the tail mass.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::network::{build_network, plus_state, NetworkOptions, TransferNetwork};
use crate::permanent::{moved_points, PermutationTable};
use crate::C64;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Default refusal threshold for exhaustive enumeration.
pub const DEFAULT_PHOTON_CAP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    /// Channel 0, projects on `|+>`.
    DH,
    /// Channel 1, projects on `|->`.
    DV,
}

impl Detector {
    pub fn channel(self) -> u8 {
        match self {
            Detector::DH => 0,
            Detector::DV => 1,
        }
    }

    pub fn from_channel(channel: u8) -> Option<Self> {
        match channel {
            0 => Some(Detector::DH),
            1 => Some(Detector::DV),
            _ => None,
        }
    }

    /// Eigenvalue of the measured `X_phi` outcome.
    pub fn sign(self) -> f64 {
        match self {
            Detector::DH => 1.0,
            Detector::DV => -1.0,
        }
    }
}

/// One click: a slot and a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Click {
    pub slot: usize,
    pub detector: Detector,
}

impl Click {
    pub fn new(slot: usize, detector: Detector) -> Self {
        Self { slot, detector }
    }

    /// Index of the detection mode, `2 * slot + channel`.
    pub fn mode(self) -> usize {
        2 * self.slot + self.detector.channel() as usize
    }

    pub fn from_mode(mode: usize) -> Self {
        let detector = if mode % 2 == 0 { Detector::DH } else { Detector::DV };
        Self { slot: mode / 2, detector }
    }
}

/// A sorted set of clicks, at most one per (slot, detector).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct DetectionPattern {
    clicks: Vec<Click>,
}

impl DetectionPattern {
    pub fn new(mut clicks: Vec<Click>) -> Result<Self> {
        clicks.sort();
        if clicks.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid!("a detection pattern holds at most one click per slot and detector"));
        }
        Ok(Self { clicks })
    }

    pub fn from_pairs(pairs: &[(usize, Detector)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(s, d)| Click::new(s, d)).collect())
    }

    pub fn clicks(&self) -> &[Click] {
        &self.clicks
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.clicks.iter().map(|c| c.slot)
    }

    pub fn max_slot(&self) -> Option<usize> {
        self.clicks.last().map(|c| c.slot)
    }

    /// Product of detector signs over all clicks.
    pub fn parity(&self) -> f64 {
        self.clicks.iter().map(|c| c.detector.sign()).product()
    }
}

impl fmt::Display for DetectionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, c) in self.clicks.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            let d = match c.detector {
                Detector::DH => "DH",
                Detector::DV => "DV",
            };
            write!(f, "{}:{d}", c.slot)?;
        }
        f.write_str("}")
    }
}

/// Probability of one click pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternProbability {
    pub pattern: DetectionPattern,
    pub prob: f64,
    /// Product of detector signs of the pattern (+1 for `D_H`, -1 for `D_V`).
    pub conditional_parity: f64,
}

/// How the pair visibility weights permutations of photon labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Distinguishability {
    /// Every cycle of length `L` costs `pair_vis^(L-1)`. Equivalent to a
    /// dephasing of each fused pair, and reproduces the qubit-level model
    /// exactly for the loop geometry.
    #[default]
    CycleDephasing,
    /// Pure internal states with uniform overlap `sqrt(pair_vis)`, so a
    /// permutation moving `m` labels costs `sqrt(pair_vis)^m`.
    UniformOverlap,
}

impl Distinguishability {
    fn weights(self, table: &PermutationTable, pair_vis: f64) -> Vec<f64> {
        let n = table.n();
        table
            .iter()
            .zip(table.cycles())
            .map(|(p, &cycles)| match self {
                Distinguishability::CycleDephasing => math::powi(pair_vis, (n - cycles as usize) as u32),
                Distinguishability::UniformOverlap => math::powi(math::sqrt(pair_vis), moved_points(p) as u32),
            })
            .collect()
    }
}

type Gram = Vec<Vec<C64>>;

/// Pattern probabilities for a fixed set of photons on a network.
#[derive(Debug, Clone)]
pub struct ModeEngine {
    n: usize,
    n_det: usize,
    max_slot: usize,
    /// Detection amplitudes in the detector basis, scaled by `sqrt(eta)`.
    det: Vec<Vec<C64>>,
    /// Gram matrix of the always-allowed sinks (loop loss, uniform loss).
    base: Gram,
    /// `suffix[m]` sums the detection outer products over modes `>= m`.
    suffix: Vec<Gram>,
    table: PermutationTable,
    weights: Vec<f64>,
}

impl ModeEngine {
    /// `inputs` lists (network input index, polarization state) per photon.
    pub fn new(
        net: &TransferNetwork,
        inputs: &[(usize, [C64; 2])],
        pair_vis: f64,
        model: Distinguishability,
        eta: f64,
    ) -> Result<Self> {
        if !math::is_unit_interval(pair_vis) {
            return Err(invalid!("pair_vis = {pair_vis} is outside [0, 1]"));
        }
        if !math::is_unit_interval(eta) {
            return Err(invalid!("eta = {eta} is outside [0, 1]"));
        }
        if inputs.len() > 10 {
            return Err(Error::CapExceeded { requested: inputs.len(), cap: 10 });
        }
        for &(k, state) in inputs {
            if k >= net.n_inputs() {
                return Err(invalid!("input {k} does not exist in a network with {} inputs", net.n_inputs()));
            }
            let norm = state[0].norm_sqr() + state[1].norm_sqr();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(invalid!("input state for photon {k} has norm {norm}"));
            }
        }
        let n = inputs.len();
        let n_det = net.n_detection_modes();
        let cols: Vec<Vec<C64>> = inputs.iter().map(|&(k, s)| net.column(k, s)).collect();
        let root_eta = math::sqrt(eta);
        let det: Vec<Vec<C64>> = cols
            .iter()
            .map(|c| {
                (0..n_det)
                    .map(|m| {
                        let slot = m / 2;
                        let (h, v) = (c[2 * slot], c[2 * slot + 1]);
                        let a = if m % 2 == 0 { h + v } else { h - v };
                        a * FRAC_1_SQRT_2 * root_eta
                    })
                    .collect()
            })
            .collect();
        let loss_range = n_det..net.n_modes() - 2;
        let mut base = vec![vec![C64::new(0.0, 0.0); n]; n];
        for j in 0..n {
            for k in 0..n {
                let mut g: C64 = loss_range.clone().map(|o| cols[j][o] * cols[k][o].conj()).sum();
                g *= eta;
                if j == k {
                    g += 1.0 - eta;
                }
                base[j][k] = g;
            }
        }
        let mut suffix = vec![vec![vec![C64::new(0.0, 0.0); n]; n]; n_det + 1];
        for m in (0..n_det).rev() {
            let mut g = suffix[m + 1].clone();
            add_outer(&mut g, &det, m);
            suffix[m] = g;
        }
        let table = PermutationTable::new(n);
        let weights = model.weights(&table, pair_vis);
        Ok(Self { n, n_det, max_slot: net.max_slot(), det, base, suffix, table, weights })
    }

    /// Engine for all photons of a configuration, each in `|P>`, with the
    /// configuration's uniform loss.
    pub fn from_config(config: &ExperimentConfig, options: &NetworkOptions, model: Distinguishability) -> Result<Self> {
        let net = build_network(config, options)?;
        let inputs: Vec<_> = (0..config.n_photons).map(|k| (k, plus_state())).collect();
        Self::new(&net, &inputs, config.pair_vis, model, config.uniform_transmission())
    }

    pub fn n_photons(&self) -> usize {
        self.n
    }

    pub fn n_detection_modes(&self) -> usize {
        self.n_det
    }

    pub fn max_slot(&self) -> usize {
        self.max_slot
    }

    fn weighted(&self, g: &Gram) -> f64 {
        self.table.weighted_sum(g, &self.weights).re
    }

    /// Probability that detection modes below `free_from` click exactly at
    /// `modes`, with modes from `free_from` on unconstrained and no photon
    /// left in the loop tail. `modes` must be sorted, distinct and below
    /// `free_from`.
    ///
    /// Expanding every Gram factor into its sink part and one term per
    /// clicked mode, inclusion-exclusion keeps exactly the products in which
    /// every clicked mode appears. Those are summed directly, tracking the
    /// covered modes per permutation, which avoids the cancellation between
    /// near-unit terms that plain inclusion-exclusion suffers under heavy
    /// loss.
    pub fn prefix_probability(&self, modes: &[usize], free_from: usize) -> f64 {
        let k = modes.len();
        if k > self.n {
            return 0.0;
        }
        let mut b = self.base.clone();
        for (row, trow) in b.iter_mut().zip(&self.suffix[free_from.min(self.n_det)]) {
            for (x, t) in row.iter_mut().zip(trow) {
                *x += t;
            }
        }
        if k == 0 {
            return self.weighted(&b).max(0.0);
        }
        let d: Vec<Vec<C64>> = self.det.iter().map(|row| modes.iter().map(|&m| row[m]).collect()).collect();
        let full = (1usize << k) - 1;
        let mut dp = vec![C64::new(0.0, 0.0); 1 << k];
        let mut next = dp.clone();
        let mut total = 0.0;
        for (perm, &w) in self.table.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            dp.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            dp[0] = C64::new(1.0, 0.0);
            for (i, &j) in perm.iter().enumerate() {
                let j = j as usize;
                let remaining = self.n - i - 1;
                next.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
                for s in 0..=full {
                    let a = dp[s];
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    next[s] += a * b[i][j];
                    for l in 0..k {
                        next[s | (1 << l)] += a * d[i][l] * d[j][l].conj();
                    }
                }
                // Drop states that can no longer cover every clicked mode.
                for (s, x) in next.iter_mut().enumerate() {
                    if k - (s.count_ones() as usize) > remaining {
                        *x = C64::new(0.0, 0.0);
                    }
                }
                core::mem::swap(&mut dp, &mut next);
            }
            total += w * dp[full].re;
        }
        total.max(0.0)
    }

    /// Probability of the exact click set given as sorted detection modes.
    pub fn mode_pattern_probability(&self, modes: &[usize]) -> f64 {
        self.prefix_probability(modes, self.n_det)
    }

    /// Probability of exactly this click pattern and no photon left in the
    /// loop tail.
    pub fn pattern_probability(&self, pattern: &DetectionPattern) -> Result<f64> {
        let modes = self.modes_of(pattern)?;
        Ok(self.mode_pattern_probability(&modes))
    }

    fn modes_of(&self, pattern: &DetectionPattern) -> Result<Vec<usize>> {
        pattern
            .clicks()
            .iter()
            .map(|c| {
                if c.slot > self.max_slot {
                    Err(invalid!("click slot {} beyond the network's last slot {}", c.slot, self.max_slot))
                } else {
                    Ok(c.mode())
                }
            })
            .collect()
    }

    /// Probability that no photon is left in the loop tail.
    pub fn untruncated_probability(&self) -> f64 {
        self.prefix_probability(&[], 0)
    }

    /// Exhaustive click-pattern distribution by depth-first search over
    /// clicks in mode order. Branches whose total probability is at most
    /// `prune` are not expanded and their mass is reported as pruned.
    pub fn enumerate(&self, prune: f64, max_patterns: usize) -> Result<EventDistribution> {
        let mut out = EventDistribution { patterns: Vec::new(), tail_mass: 0.0, pruned_mass: 0.0 };
        let root = self.untruncated_probability();
        out.tail_mass = (1.0 - root).max(0.0);
        let mut clicks = Vec::new();
        self.visit(&mut clicks, 0, prune, max_patterns, &mut out)?;
        Ok(out)
    }

    fn visit(
        &self,
        clicks: &mut Vec<usize>,
        next: usize,
        prune: f64,
        max_patterns: usize,
        out: &mut EventDistribution,
    ) -> Result<()> {
        let exact = self.mode_pattern_probability(clicks);
        if exact > prune {
            if out.patterns.len() >= max_patterns {
                return Err(Error::CapExceeded { requested: out.patterns.len() + 1, cap: max_patterns });
            }
            let pattern = DetectionPattern { clicks: clicks.iter().map(|&m| Click::from_mode(m)).collect() };
            let conditional_parity = pattern.parity();
            out.patterns.push(PatternProbability { pattern, prob: exact, conditional_parity });
        } else {
            out.pruned_mass += exact;
        }
        if clicks.len() == self.n {
            return Ok(());
        }
        for m in next..self.n_det {
            clicks.push(m);
            let p = self.prefix_probability(clicks, m + 1);
            if p > prune {
                self.visit(clicks, m + 1, prune, max_patterns, out)?;
            } else {
                out.pruned_mass += p;
            }
            clicks.pop();
        }
        Ok(())
    }
}

fn add_outer(g: &mut Gram, det: &[Vec<C64>], m: usize) {
    for (j, row) in g.iter_mut().enumerate() {
        let a = det[j][m];
        for (k, x) in row.iter_mut().enumerate() {
            *x += a * det[k][m].conj();
        }
    }
}

/// Output of [`enumerate_event_distribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDistribution {
    pub patterns: Vec<PatternProbability>,
    /// Probability that at least one photon is still in the loop after the
    /// last simulated slot.
    pub tail_mass: f64,
    /// Probability in branches skipped by the pruning threshold.
    pub pruned_mass: f64,
}

impl EventDistribution {
    pub fn total(&self) -> f64 {
        self.patterns.iter().map(|p| p.prob).sum()
    }

    /// Summed probability of all patterns with `clicks` clicks.
    pub fn multiplicity_mass(&self, clicks: usize) -> f64 {
        self.patterns.iter().filter(|p| p.pattern.len() == clicks).map(|p| p.prob).sum()
    }

    pub fn get(&self, pattern: &DetectionPattern) -> Option<f64> {
        self.patterns.iter().find(|p| p.pattern == *pattern).map(|p| p.prob)
    }
}

/// Settings for [`enumerate_event_distribution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    pub network: NetworkOptions,
    pub model: Distinguishability,
    pub photon_cap: usize,
    pub prune: f64,
    pub max_patterns: usize,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            network: NetworkOptions::default(),
            model: Distinguishability::default(),
            photon_cap: DEFAULT_PHOTON_CAP,
            prune: 1e-13,
            max_patterns: 2_000_000,
        }
    }
}

/// Distribution over every click pattern of a configuration, including the
/// lower-multiplicity patterns caused by loss.
pub fn enumerate_event_distribution(config: &ExperimentConfig, options: &EnumerationOptions) -> Result<EventDistribution> {
    config.validate()?;
    if config.n_photons > options.photon_cap {
        return Err(Error::CapExceeded { requested: config.n_photons, cap: options.photon_cap });
    }
    let engine = ModeEngine::from_config(config, &options.network, options.model)?;
    engine.enumerate(options.prune, options.max_patterns)
}

/// Lossless probability of an exact click pattern for the given photons.
pub fn multiphoton_probability(
    net: &TransferNetwork,
    inputs: &[(usize, [C64; 2])],
    pattern: &DetectionPattern,
    pair_vis: f64,
) -> Result<f64> {
    let engine = ModeEngine::new(net, inputs, pair_vis, Distinguishability::default(), 1.0)?;
    engine.pattern_probability(pattern)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two inputs on a balanced splitter between detection modes 0 (D_H at
    /// slot 0) and 1 (D_V at slot 0). Polarization amplitudes are chosen so
    /// the detector-basis amplitudes are `(1, 1)/sqrt 2` and `(1, -1)/sqrt 2`.
    fn splitter() -> TransferNetwork {
        let n_modes = TransferNetwork::mode_count(0);
        let mut a = vec![C64::new(0.0, 0.0); n_modes];
        let mut b = vec![C64::new(0.0, 0.0); n_modes];
        // Detector basis (+, -) amplitudes (x, y) map to polarization
        // (h, v) = ((x + y), (x - y)) / sqrt 2.
        a[0] = C64::new(1.0, 0.0); // (+ + -)/sqrt2 -> D_H + D_V, each 1/sqrt2
        b[1] = C64::new(1.0, 0.0);
        TransferNetwork::from_columns(0, vec![[a.clone(), a], [b.clone(), b]]).unwrap()
    }

    fn hom(pair_vis: f64) -> f64 {
        let net = splitter();
        let h = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let v = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let pattern = DetectionPattern::from_pairs(&[(0, Detector::DH), (0, Detector::DV)]).unwrap();
        multiphoton_probability(&net, &[(0, h), (1, v)], &pattern, pair_vis).unwrap()
    }

    #[test]
    fn hong_ou_mandel_dip() {
        assert!(hom(1.0).abs() < 1e-14);
        assert!((hom(0.0) - 0.5).abs() < 1e-14);
        assert!((hom(0.827) - 0.5 * (1.0 - 0.827)).abs() < 1e-14);
    }

    #[test]
    fn single_photon_is_detected_somewhere() {
        let cfg = ExperimentConfig { n_photons: 1, ..ExperimentConfig::lossless(1, 1.0) };
        let dist = enumerate_event_distribution(&cfg, &EnumerationOptions::default()).unwrap();
        let total = dist.total() + dist.tail_mass + dist.pruned_mass;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(dist.multiplicity_mass(1) + dist.tail_mass > 1.0 - 1e-12);
    }

    #[test]
    fn too_many_clicks_have_zero_probability() {
        let cfg = ExperimentConfig::lossless(1, 1.0);
        let engine = ModeEngine::from_config(&cfg, &NetworkOptions::default(), Distinguishability::default()).unwrap();
        let p = DetectionPattern::from_pairs(&[(1, Detector::DH), (2, Detector::DH)]).unwrap();
        assert_eq!(engine.pattern_probability(&p).unwrap(), 0.0);
    }

    #[test]
    fn photon_cap_is_enforced() {
        let cfg = ExperimentConfig::with_photons(7);
        let err = enumerate_event_distribution(&cfg, &EnumerationOptions::default()).unwrap_err();
        assert_eq!(err, Error::CapExceeded { requested: 7, cap: 6 });
    }

    #[test]
    fn duplicate_clicks_are_rejected() {
        assert!(DetectionPattern::from_pairs(&[(1, Detector::DH), (1, Detector::DH)]).is_err());
    }

    #[test]
    fn models_agree_on_transpositions() {
        let t = PermutationTable::new(2);
        let a = Distinguishability::CycleDephasing.weights(&t, 0.6);
        let b = Distinguishability::UniformOverlap.weights(&t, 0.6);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
