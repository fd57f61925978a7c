//! Reproducible Monte-Carlo click streams drawn from Engine B.
//!
//! Each trial first draws which photons survive the uniform loss, then draws
//! the click pattern of the survivors click by click: the probability of the
//! next click being at mode `m` is the prefix probability of the extended
//! click set, so the sampled patterns follow the exact distribution. Trials
//! in which a photon is still in the loop after the last simulated slot are
//! recorded without clicks.
//!
//! Trials are split into contiguous blocks, one per worker. Worker `w` draws
//! from `ChaCha8Rng::seed_from_u64(seed)` with stream `w`, so the output
//! depends only on the seed and the worker count.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Result};
use crate::multiphoton::{Click, Distinguishability, ModeEngine};
use crate::network::{build_network, plus_state, NetworkOptions, TransferNetwork};
use crate::stream::{EventRecord, SegmentMarker, SequenceLayout, StreamItem};

/// A block of trials at one phase set-point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Phase set-point written to the stream markers.
    pub phi: f64,
    pub scan: usize,
    pub trials: u64,
    /// Unannounced offset added to the physical phase.
    pub drift: f64,
}

/// Ordered segments of a sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSchedule {
    pub segments: Vec<Segment>,
}

impl ScanSchedule {
    /// One segment at a fixed phase.
    pub fn constant(phi: f64, trials: u64) -> Self {
        Self { segments: alloc::vec![Segment { phi, scan: 0, trials, drift: 0.0 }] }
    }

    /// One scan over `phis` per entry of `drifts`, each set-point holding
    /// `trials_per_point` trials.
    pub fn scans(phis: &[f64], trials_per_point: u64, drifts: &[f64]) -> Self {
        let segments = drifts
            .iter()
            .enumerate()
            .flat_map(|(scan, &drift)| {
                phis.iter().map(move |&phi| Segment { phi, scan, trials: trials_per_point, drift })
            })
            .collect();
        Self { segments }
    }

    pub fn total_trials(&self) -> u64 {
        self.segments.iter().map(|s| s.trials).sum()
    }

    /// Segments must start on sequence-group boundaries.
    pub fn validate(&self, interleave_factor: usize) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            if s.trials % interleave_factor as u64 != 0 {
                return Err(invalid!(
                    "segment {i} has {} trials, not a multiple of the interleave factor {interleave_factor}",
                    s.trials
                ));
            }
            if !(s.phi.is_finite() && s.drift.is_finite()) {
                return Err(invalid!("segment {i} has a non-finite phase"));
            }
        }
        Ok(())
    }

    /// First trial of every segment.
    pub fn starts(&self) -> Vec<u64> {
        let mut acc = 0;
        self.segments
            .iter()
            .map(|s| {
                let start = acc;
                acc += s.trials;
                start
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Node {
    exact: f64,
    children: Vec<(usize, f64)>,
}

/// Chain-rule sampler of the click pattern of a fixed photon set.
#[derive(Debug, Clone)]
pub struct PatternSampler {
    engine: ModeEngine,
    root: f64,
    cache: BTreeMap<Vec<usize>, Node>,
}

impl PatternSampler {
    pub fn new(engine: ModeEngine) -> Self {
        let root = engine.untruncated_probability();
        Self { engine, root, cache: BTreeMap::new() }
    }

    fn node(&mut self, clicks: &[usize]) -> &Node {
        if !self.cache.contains_key(clicks) {
            let exact = self.engine.mode_pattern_probability(clicks);
            let mut children = Vec::new();
            if clicks.len() < self.engine.n_photons() {
                let next = clicks.last().map_or(0, |m| m + 1);
                let mut ext = clicks.to_vec();
                ext.push(0);
                for m in next..self.engine.n_detection_modes() {
                    *ext.last_mut().expect("pushed") = m;
                    let p = self.engine.prefix_probability(&ext, m + 1);
                    if p > 0.0 {
                        children.push((m, p));
                    }
                }
            }
            self.cache.insert(clicks.to_vec(), Node { exact, children });
        }
        &self.cache[clicks]
    }

    /// Sorted detection modes of one trial; empty if a photon stays in the
    /// loop tail.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        let mut u: f64 = rng.random::<f64>();
        if u >= self.root {
            return Vec::new();
        }
        let mut clicks = Vec::new();
        loop {
            let node = self.node(&clicks).clone();
            if u < node.exact {
                return clicks;
            }
            u -= node.exact;
            let mut chosen = None;
            for &(m, p) in &node.children {
                if u < p {
                    chosen = Some(m);
                    break;
                }
                u -= p;
            }
            match chosen {
                Some(m) => clicks.push(m),
                // Rounding leftovers end the pattern here.
                None => return clicks,
            }
        }
    }
}

/// Settings of the sampler beyond the experiment configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub network: NetworkOptions,
    pub model: Distinguishability,
}

#[derive(Debug, Clone)]
struct PhaseSampler {
    net: TransferNetwork,
    subsets: BTreeMap<u32, PatternSampler>,
}

/// Draws click patterns of single trials, caching the per-phase engines.
#[derive(Debug, Clone)]
pub struct TrialSampler {
    config: ExperimentConfig,
    options: SamplerOptions,
    phases: BTreeMap<u64, PhaseSampler>,
}

impl TrialSampler {
    pub fn new(config: &ExperimentConfig, options: SamplerOptions) -> Result<Self> {
        config.validate()?;
        if config.n_photons > 16 {
            return Err(invalid!("sampling supports at most 16 photons"));
        }
        Ok(Self { config: config.clone(), options, phases: BTreeMap::new() })
    }

    /// Clicks of one trial at physical phase `phi`.
    pub fn sample_trial<R: Rng + ?Sized>(&mut self, phi: f64, rng: &mut R) -> Result<Vec<Click>> {
        let n = self.config.n_photons;
        let eta = self.config.uniform_transmission();
        let mut mask = 0u32;
        for k in 0..n {
            if rng.random::<f64>() < eta {
                mask |= 1 << k;
            }
        }
        if mask == 0 {
            return Ok(Vec::new());
        }
        let key = phi.to_bits();
        if !self.phases.contains_key(&key) {
            let net = build_network(&self.config.with_phi(phi), &self.options.network)?;
            self.phases.insert(key, PhaseSampler { net, subsets: BTreeMap::new() });
        }
        let phase = self.phases.get_mut(&key).expect("inserted");
        if !phase.subsets.contains_key(&mask) {
            let inputs: Vec<_> = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| (k, plus_state())).collect();
            let engine = ModeEngine::new(&phase.net, &inputs, self.config.pair_vis, self.options.model, 1.0)?;
            phase.subsets.insert(mask, PatternSampler::new(engine));
        }
        let sampler = phase.subsets.get_mut(&mask).expect("inserted");
        Ok(sampler.sample(rng).into_iter().map(Click::from_mode).collect())
    }
}

/// Clicks of one trial.
pub type TrialClicks = (u64, Vec<Click>);

/// Trials handled by `worker` out of `n_workers`.
pub fn worker_range(total: u64, worker: usize, n_workers: usize) -> core::ops::Range<u64> {
    let n = n_workers.max(1) as u64;
    let chunk = total.div_ceil(n);
    let start = (worker as u64 * chunk).min(total);
    start..((worker as u64 + 1) * chunk).min(total)
}

/// Samples the trials of one worker's block.
pub fn sample_worker(
    config: &ExperimentConfig,
    schedule: &ScanSchedule,
    options: SamplerOptions,
    seed: u64,
    worker: usize,
    n_workers: usize,
) -> Result<Vec<TrialClicks>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    let mut sampler = TrialSampler::new(config, options)?;
    let range = worker_range(schedule.total_trials(), worker, n_workers);
    let starts = schedule.starts();
    let mut seg = starts.partition_point(|&s| s <= range.start).saturating_sub(1);
    let mut out = Vec::new();
    for trial in range {
        while seg + 1 < starts.len() && trial >= starts[seg + 1] {
            seg += 1;
        }
        let s = &schedule.segments[seg];
        let clicks = sampler.sample_trial(s.phi + s.drift, &mut rng)?;
        if !clicks.is_empty() {
            out.push((trial, clicks));
        }
    }
    Ok(out)
}

/// Converts sampled trials into a time-ordered stream with segment markers.
/// Coincident clicks on the same detector merge into one record.
pub fn assemble_stream(layout: &SequenceLayout, schedule: &ScanSchedule, trials: &[TrialClicks]) -> Vec<StreamItem> {
    let mut events: Vec<EventRecord> = trials
        .iter()
        .flat_map(|(trial, clicks)| {
            clicks.iter().map(move |c| EventRecord {
                timestamp_ps: layout.timestamp_ps(*trial, c.slot),
                channel: c.detector.channel(),
            })
        })
        .collect();
    events.sort_unstable();
    events.dedup();
    let i = layout.interleave_factor as u64;
    let marker_times: Vec<(u64, SegmentMarker)> = schedule
        .segments
        .iter()
        .zip(schedule.starts())
        .map(|(s, start)| {
            (
                layout.group_start_ps(start / i),
                SegmentMarker { phi: s.phi, scan: s.scan, trials: Some(s.trials) },
            )
        })
        .collect();
    let mut out = Vec::with_capacity(events.len() + marker_times.len());
    let mut next_marker = 0;
    for ev in events {
        while next_marker < marker_times.len() && marker_times[next_marker].0 <= ev.timestamp_ps {
            out.push(StreamItem::Marker(marker_times[next_marker].1));
            next_marker += 1;
        }
        out.push(StreamItem::Event(ev));
    }
    for (_, m) in &marker_times[next_marker..] {
        out.push(StreamItem::Marker(*m));
    }
    out
}

/// Samples a full stream. Equivalent to running [`sample_worker`] for every
/// worker and merging with [`assemble_stream`].
pub fn sample_stream(
    config: &ExperimentConfig,
    schedule: &ScanSchedule,
    options: SamplerOptions,
    seed: u64,
    n_workers: usize,
) -> Result<Vec<StreamItem>> {
    schedule.validate(config.interleave_factor)?;
    let mut trials = Vec::new();
    for w in 0..n_workers.max(1) {
        trials.extend(sample_worker(config, schedule, options, seed, w, n_workers)?);
    }
    Ok(assemble_stream(&SequenceLayout::from_config(config), schedule, &trials))
}
