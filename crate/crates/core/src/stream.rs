//! Detection-event streams: slot binning, trial assembly, coincidence
//! matching, scan monitoring and phase-drift alignment.
//!
//! Within one sequence group the detection bins sit on a laser-period grid.
//! Bin `k = I * (g * S + s) + c` is slot `s` of trial `g * I + c`, where `I`
//! is the interleave factor, `S` the slots per sequence and `g` the group.
//! A photon that leaves the loop after slot `S - 1` is binned into the next
//! group, where it shows up as memory residue of the following trial.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_counts, CurvePoint, FitResult, VisibilityCurve};
use crate::math;
use crate::multiphoton::{Click, DetectionPattern, Detector};
use crate::observable::{CurveKind, ObservableSpec};
use crate::postselect::SelectionWindow;

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp_ps: u64,
    /// 0 = `D_H`, 1 = `D_V`.
    pub channel: u8,
}

/// Start of a scan segment at a fixed phase set-point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMarker {
    pub phi: f64,
    pub scan: usize,
    /// Trials generated in this segment, when known.
    pub trials: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StreamItem {
    Marker(SegmentMarker),
    Event(EventRecord),
}

/// Timing grid of an event stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceLayout {
    /// Slots per trial, ON slots plus OFF cycles.
    pub slots_per_sequence: usize,
    pub interleave_factor: usize,
    pub slot_period_ps: f64,
    /// Accepted distance from a bin centre, as a fraction of the bin
    /// spacing (the laser period).
    pub tolerance: f64,
}

impl SequenceLayout {
    pub const DEFAULT_TOLERANCE: f64 = 0.1;

    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            slots_per_sequence: config.slots_per_sequence(),
            interleave_factor: config.interleave_factor,
            slot_period_ps: config.slot_period_ns * 1000.0,
            tolerance: Self::DEFAULT_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots_per_sequence == 0 || self.interleave_factor == 0 {
            return Err(invalid!("layout needs at least one slot and one interleaved trial"));
        }
        if !(self.slot_period_ps > 0.0 && self.slot_period_ps.is_finite()) {
            return Err(invalid!("slot period must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 0.5) {
            return Err(invalid!("tolerance {} must lie in (0, 0.5) of the bin spacing", self.tolerance));
        }
        Ok(())
    }

    pub fn bin_spacing_ps(&self) -> f64 {
        self.slot_period_ps / self.interleave_factor as f64
    }

    fn bin(&self, trial: u64, slot: u64) -> u64 {
        let i = self.interleave_factor as u64;
        let s = self.slots_per_sequence as u64;
        let (g, c) = (trial / i, trial % i);
        i * (g * s + slot) + c
    }

    /// Nominal timestamp of a click in `slot` of `trial`. Slots beyond the
    /// sequence run into the following groups.
    pub fn timestamp_ps(&self, trial: u64, slot: usize) -> u64 {
        math::round(self.bin(trial, slot as u64) as f64 * self.bin_spacing_ps()) as u64
    }

    /// Start time of sequence group `g`.
    pub fn group_start_ps(&self, group: u64) -> u64 {
        self.timestamp_ps(group * self.interleave_factor as u64, 0)
    }

    /// (trial, slot) of a timestamp, or `None` if it falls outside the
    /// tolerance around every bin.
    pub fn locate(&self, timestamp_ps: u64) -> Option<(u64, usize)> {
        let tau = self.bin_spacing_ps();
        let t = timestamp_ps as f64;
        let k = math::round(t / tau);
        if (t - k * tau).abs() > self.tolerance * tau {
            return None;
        }
        let k = k as u64;
        let i = self.interleave_factor as u64;
        let s = self.slots_per_sequence as u64;
        let (global_slot, c) = (k / i, k % i);
        let (g, slot) = (global_slot / s, global_slot % s);
        Some((g * i + c, slot as usize))
    }

    pub fn group_of(&self, trial: u64) -> u64 {
        trial / self.interleave_factor as u64
    }
}

/// A click assigned to a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinnedClick {
    pub trial: u64,
    pub slot: usize,
    pub detector: Detector,
    /// Index of the scan segment the click arrived in.
    pub segment: usize,
}

/// The clicks of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinnedTrial {
    pub trial: u64,
    pub segment: usize,
    pub pattern: DetectionPattern,
}

/// Record accounting of a binning pass. Every in-order record is either
/// binned or unbinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinStats {
    pub records: u64,
    pub binned: u64,
    pub unbinned: u64,
    pub out_of_order: u64,
    pub bad_channel: u64,
}

/// Incremental binning of a time-ordered stream.
#[derive(Debug, Clone)]
pub struct Binner {
    layout: SequenceLayout,
    last_ts: Option<u64>,
    segment: Option<usize>,
    markers: Vec<SegmentMarker>,
    stats: BinStats,
}

/// What one stream item turned into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binned {
    Click(BinnedClick),
    Segment(usize, SegmentMarker),
    Unbinned(EventRecord),
    Dropped(EventRecord),
}

impl Binner {
    pub fn new(layout: SequenceLayout) -> Result<Self> {
        layout.validate()?;
        Ok(Self { layout, last_ts: None, segment: None, markers: Vec::new(), stats: BinStats::default() })
    }

    pub fn layout(&self) -> &SequenceLayout {
        &self.layout
    }

    pub fn stats(&self) -> BinStats {
        self.stats
    }

    pub fn markers(&self) -> &[SegmentMarker] {
        &self.markers
    }

    pub fn push(&mut self, item: StreamItem) -> Binned {
        match item {
            StreamItem::Marker(m) => {
                self.markers.push(m);
                let idx = self.markers.len() - 1;
                self.segment = Some(idx);
                Binned::Segment(idx, m)
            }
            StreamItem::Event(ev) => {
                self.stats.records += 1;
                if self.last_ts.is_some_and(|t| ev.timestamp_ps < t) {
                    self.stats.out_of_order += 1;
                    return Binned::Dropped(ev);
                }
                self.last_ts = Some(ev.timestamp_ps);
                let Some(detector) = Detector::from_channel(ev.channel) else {
                    self.stats.bad_channel += 1;
                    self.stats.unbinned += 1;
                    return Binned::Unbinned(ev);
                };
                match self.layout.locate(ev.timestamp_ps) {
                    Some((trial, slot)) => {
                        self.stats.binned += 1;
                        Binned::Click(BinnedClick { trial, slot, detector, segment: self.segment.unwrap_or(0) })
                    }
                    None => {
                        self.stats.unbinned += 1;
                        Binned::Unbinned(ev)
                    }
                }
            }
        }
    }
}

/// Groups binned clicks into trials. A trial is complete once a click of a
/// later sequence group arrives.
#[derive(Debug, Clone, Default)]
pub struct TrialAssembler {
    interleave: u64,
    pending: BTreeMap<u64, (usize, Vec<Click>)>,
}

impl TrialAssembler {
    pub fn new(layout: &SequenceLayout) -> Self {
        Self { interleave: layout.interleave_factor as u64, pending: BTreeMap::new() }
    }

    /// Adds a click and returns the trials it completes.
    pub fn push(&mut self, click: BinnedClick) -> Vec<BinnedTrial> {
        let group = click.trial / self.interleave;
        let done = self.flush_before(group);
        let entry = self.pending.entry(click.trial).or_insert_with(|| (click.segment, Vec::new()));
        entry.1.push(Click::new(click.slot, click.detector));
        done
    }

    /// Completes every trial of groups before `group`.
    pub fn flush_before(&mut self, group: u64) -> Vec<BinnedTrial> {
        let keep = self.pending.split_off(&(group * self.interleave));
        let done = core::mem::replace(&mut self.pending, keep);
        done.into_iter().map(|(t, (seg, clicks))| finish_trial(t, seg, clicks)).collect()
    }

    pub fn finish(&mut self) -> Vec<BinnedTrial> {
        let done = core::mem::take(&mut self.pending);
        done.into_iter().map(|(t, (seg, clicks))| finish_trial(t, seg, clicks)).collect()
    }
}

fn finish_trial(trial: u64, segment: usize, mut clicks: Vec<Click>) -> BinnedTrial {
    // Detectors do not resolve photon number: repeated clicks merge.
    clicks.sort();
    clicks.dedup();
    let pattern = DetectionPattern::new(clicks).expect("deduplicated clicks");
    BinnedTrial { trial, segment, pattern }
}

/// Result of [`bin_events`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BinnedStream {
    pub trials: Vec<BinnedTrial>,
    pub unbinned: Vec<EventRecord>,
    pub markers: Vec<SegmentMarker>,
    pub stats: BinStats,
}

/// Bins a whole stream and groups its clicks per trial, ordered by trial.
pub fn bin_events(items: &[StreamItem], layout: &SequenceLayout) -> Result<BinnedStream> {
    let mut binner = Binner::new(*layout)?;
    let mut asm = TrialAssembler::new(layout);
    let mut out = BinnedStream::default();
    for &item in items {
        match binner.push(item) {
            Binned::Click(c) => out.trials.extend(asm.push(c)),
            Binned::Unbinned(ev) => out.unbinned.push(ev),
            Binned::Segment(..) | Binned::Dropped(_) => {}
        }
    }
    out.trials.extend(asm.finish());
    out.trials.sort_by_key(|t| t.trial);
    out.markers = binner.markers().to_vec();
    out.stats = binner.stats();
    Ok(out)
}

/// Parity counters of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub plus: u64,
    pub minus: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.plus + self.minus
    }

    pub fn add(&mut self, parity: f64) {
        if parity > 0.0 {
            self.plus += 1;
        } else {
            self.minus += 1;
        }
    }

    pub fn merge(&mut self, other: OutcomeCounts) {
        self.plus += other.plus;
        self.minus += other.minus;
    }
}

/// Counts trials whose clicks are exactly an accepted pattern of `window`.
pub fn match_coincidences<'a>(
    trials: impl IntoIterator<Item = &'a BinnedTrial>,
    window: &SelectionWindow,
    spec: &ObservableSpec,
) -> OutcomeCounts {
    let mut counts = OutcomeCounts::default();
    for t in trials {
        if let Some(p) = window.parity(&t.pattern, spec) {
            counts.add(p);
        }
    }
    counts
}

/// A window tracked by the monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorWindow {
    pub label: String,
    pub window: SelectionWindow,
    pub spec: ObservableSpec,
    pub kind: CurveKind,
}

impl MonitorWindow {
    pub fn new(window: SelectionWindow, spec: ObservableSpec) -> Result<Self> {
        spec.validate_for(window.m_selected)?;
        let kind = CurveKind::for_observable(&spec)
            .ok_or_else(|| invalid!("observable {spec} has no fit model"))?;
        let label = if window.is_full() {
            alloc::format!("full:{spec}")
        } else {
            alloc::format!("pps{}@{}:{spec}", window.m_selected, window.position)
        };
        Ok(Self { label, window, spec, kind })
    }

    /// All-X observable on the last `m` photons.
    pub fn last(n: usize, m: usize) -> Result<Self> {
        Self::new(SelectionWindow::last(n, m)?, ObservableSpec::all_x(m)?)
    }
}

/// Counters of one phase set-point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub phi: f64,
    pub counts: OutcomeCounts,
}

/// Counters and fits of one phase scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanState {
    pub scan: usize,
    /// `points[window]`, one entry per phase set-point in arrival order.
    pub points: Vec<Vec<PhaseCounts>>,
    pub fits: Vec<Option<FitResult>>,
    pub trials: u64,
}

/// Everything the monitor has accumulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    pub windows: Vec<MonitorWindow>,
    pub reference: usize,
    pub scans: Vec<ScanState>,
    /// Fits of the counts merged over all scans by phase set-point.
    pub rolling_fits: Vec<Option<FitResult>>,
    /// (scan index, fitted phase offset of the reference window).
    pub phase_track: Vec<(usize, f64)>,
    /// Fits that were skipped, with the reason.
    pub skipped: Vec<String>,
    pub stats: BinStats,
    pub segments: usize,
}

impl MonitorState {
    fn new(windows: Vec<MonitorWindow>, reference: usize) -> Self {
        let n = windows.len();
        Self {
            windows,
            reference,
            scans: Vec::new(),
            rolling_fits: alloc::vec![None; n],
            phase_track: Vec::new(),
            skipped: Vec::new(),
            stats: BinStats::default(),
            segments: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    /// Counts of window `w` summed over scans by phase set-point.
    pub fn merged_counts(&self, w: usize) -> Vec<PhaseCounts> {
        let mut merged: Vec<PhaseCounts> = Vec::new();
        for scan in &self.scans {
            for pc in &scan.points[w] {
                match merged.iter_mut().find(|m| m.phi.to_bits() == pc.phi.to_bits()) {
                    Some(m) => m.counts.merge(pc.counts),
                    None => merged.push(*pc),
                }
            }
        }
        merged
    }

    /// Machine-readable status.
    pub fn snapshot(&self) -> StatusSnapshot {
        let scan = self.scans.last();
        let windows = self
            .windows
            .iter()
            .enumerate()
            .map(|(w, mw)| {
                let counts = self.merged_counts(w);
                let matched: u64 = counts.iter().map(|c| c.counts.total()).sum();
                let trials: u64 = self.scans.iter().map(|s| s.trials).sum();
                WindowStatus {
                    label: mw.label.clone(),
                    kind: mw.kind,
                    counts,
                    matched,
                    rate_per_trial: if trials > 0 { matched as f64 / trials as f64 } else { 0.0 },
                    fit: self.rolling_fits[w],
                }
            })
            .collect();
        StatusSnapshot {
            segments: self.segments,
            scan: scan.map(|s| s.scan),
            stats: self.stats,
            windows,
            phase_track: self.phase_track.clone(),
        }
    }
}

/// Status of one window inside a [`StatusSnapshot`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStatus {
    pub label: String,
    pub kind: CurveKind,
    pub counts: Vec<PhaseCounts>,
    pub matched: u64,
    pub rate_per_trial: f64,
    pub fit: Option<FitResult>,
}

/// Copy of the monitor's state for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub segments: usize,
    pub scan: Option<usize>,
    pub stats: BinStats,
    pub windows: Vec<WindowStatus>,
    pub phase_track: Vec<(usize, f64)>,
}

/// Curve points from phase counters, skipping empty set-points.
pub fn points_from_counts(counts: &[PhaseCounts]) -> Vec<CurvePoint> {
    counts
        .iter()
        .filter_map(|c| CurvePoint::from_counts(c.phi, c.counts.plus, c.counts.minus))
        .collect()
}

/// Live scan monitor: bins events, assembles trials, matches the windows
/// and refits as segments and scans complete.
#[derive(Debug, Clone)]
pub struct Monitor {
    binner: Binner,
    assembler: TrialAssembler,
    state: MonitorState,
    current: Option<SegmentMarker>,
    snapshot_every: usize,
}

impl Monitor {
    /// `reference` indexes the window whose per-scan phase offset is
    /// tracked. A snapshot is produced every `snapshot_every` segments
    /// (0 disables snapshots).
    pub fn new(layout: SequenceLayout, windows: Vec<MonitorWindow>, reference: usize, snapshot_every: usize) -> Result<Self> {
        if windows.is_empty() {
            return Err(invalid!("monitor needs at least one window"));
        }
        if reference >= windows.len() {
            return Err(invalid!("reference window {reference} does not exist"));
        }
        Ok(Self {
            binner: Binner::new(layout)?,
            assembler: TrialAssembler::new(&layout),
            state: MonitorState::new(windows, reference),
            current: None,
            snapshot_every,
        })
    }

    pub fn state(&self) -> &MonitorState {
        &self.state
    }

    /// Feeds one item; returns a snapshot when a segment closes on the
    /// configured cadence.
    pub fn push(&mut self, item: StreamItem) -> Option<StatusSnapshot> {
        let binned = self.binner.push(item);
        self.state.stats = self.binner.stats();
        match binned {
            Binned::Click(c) => {
                for t in self.assembler.push(c) {
                    self.count(&t);
                }
                None
            }
            Binned::Segment(_, marker) => {
                // Trials of the closing segment are complete once the new
                // segment starts: segments begin on sequence-group boundaries.
                for t in self.assembler.finish() {
                    self.count(&t);
                }
                let snap = self.close_segment();
                self.open_segment(marker);
                snap
            }
            Binned::Unbinned(_) | Binned::Dropped(_) => None,
        }
    }

    /// Closes the last segment and scan and returns the final state.
    pub fn finish(mut self) -> MonitorState {
        for t in self.assembler.finish() {
            self.count(&t);
        }
        self.close_segment();
        if !self.state.scans.is_empty() {
            self.close_scan();
        }
        self.state.stats = self.binner.stats();
        self.state
    }

    fn open_segment(&mut self, marker: SegmentMarker) {
        let new_scan = self.state.scans.last().is_none_or(|s| s.scan != marker.scan);
        if new_scan {
            if !self.state.scans.is_empty() {
                self.close_scan();
            }
            let n = self.state.windows.len();
            self.state.scans.push(ScanState {
                scan: marker.scan,
                points: alloc::vec![Vec::new(); n],
                fits: alloc::vec![None; n],
                trials: 0,
            });
        }
        let scan = self.state.scans.last_mut().expect("scan just ensured");
        scan.trials += marker.trials.unwrap_or(0);
        for pts in scan.points.iter_mut() {
            if !pts.iter().any(|p| p.phi.to_bits() == marker.phi.to_bits()) {
                pts.push(PhaseCounts { phi: marker.phi, counts: OutcomeCounts::default() });
            }
        }
        self.current = Some(marker);
        self.state.segments += 1;
    }

    fn count(&mut self, trial: &BinnedTrial) {
        let Some(marker) = self.current else { return };
        let Some(scan) = self.state.scans.last_mut() else { return };
        for (w, mw) in self.state.windows.iter().enumerate() {
            if let Some(parity) = mw.window.parity(&trial.pattern, &mw.spec) {
                if let Some(p) = scan.points[w].iter_mut().find(|p| p.phi.to_bits() == marker.phi.to_bits()) {
                    p.counts.add(parity);
                }
            }
        }
    }

    fn close_segment(&mut self) -> Option<StatusSnapshot> {
        if self.current.is_none() {
            return None;
        }
        for w in 0..self.state.windows.len() {
            let points = points_from_counts(&self.state.merged_counts(w));
            self.state.rolling_fits[w] = fit_counts(&points, self.state.windows[w].kind).ok().map(|c| c.fit);
        }
        let due = self.snapshot_every > 0 && self.state.segments % self.snapshot_every == 0;
        due.then(|| self.state.snapshot())
    }

    fn close_scan(&mut self) {
        let reference = self.state.reference;
        let scan = self.state.scans.last_mut().expect("open scan");
        for (w, mw) in self.state.windows.iter().enumerate() {
            let points = points_from_counts(&scan.points[w]);
            match fit_counts(&points, mw.kind) {
                Ok(curve) => scan.fits[w] = Some(curve.fit),
                Err(e) => {
                    scan.fits[w] = None;
                    self.state.skipped.push(alloc::format!("scan {} window {}: {e}", scan.scan, mw.label));
                }
            }
        }
        if let Some(fit) = scan.fits[reference] {
            self.state.phase_track.push((scan.scan, fit.phase_offset));
        }
    }
}

/// Runs the monitor over a complete stream.
pub fn monitor_scan(items: &[StreamItem], layout: SequenceLayout, windows: Vec<MonitorWindow>, reference: usize) -> Result<MonitorState> {
    let mut monitor = Monitor::new(layout, windows, reference, 0)?;
    for &item in items {
        monitor.push(item);
    }
    Ok(monitor.finish())
}

/// Merged curve of one window with and without drift correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub aligned: VisibilityCurve,
    pub naive: VisibilityCurve,
    /// (scan, phase shift applied to its set-points).
    pub shifts: Vec<(usize, f64)>,
    /// Scans left out because their reference fit is missing.
    pub skipped_scans: Vec<usize>,
}

/// Shifts every scan's phase axis by its reference offset relative to the
/// first scan, then fits the union of the shifted points of window
/// `target`. The naive merge sums counts by set-point instead.
pub fn align_scans(state: &MonitorState, target: usize) -> Result<Alignment> {
    if target >= state.windows.len() {
        return Err(invalid!("target window {target} does not exist"));
    }
    let reference = state.reference;
    let fitted: Vec<&ScanState> = state.scans.iter().filter(|s| s.fits[reference].is_some()).collect();
    let skipped_scans = state.scans.iter().filter(|s| s.fits[reference].is_none()).map(|s| s.scan).collect();
    if fitted.len() < 2 {
        return Err(Error::Degenerate(alloc::format!(
            "alignment needs two scans with a reference fit, found {}",
            fitted.len()
        )));
    }
    let base = fitted[0].fits[reference].expect("filtered").phase_offset;
    let kind = state.windows[target].kind;
    let mut shifts = Vec::new();
    let mut points = Vec::new();
    for scan in &fitted {
        let shift = math::wrap_angle(scan.fits[reference].expect("filtered").phase_offset - base);
        shifts.push((scan.scan, shift));
        for p in points_from_counts(&scan.points[target]) {
            points.push(CurvePoint { phi: p.phi + shift, ..p });
        }
    }
    points.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    let aligned = fit_counts(&points, kind)?;
    let naive = fit_counts(&points_from_counts(&state.merged_counts(target)), kind)?;
    Ok(Alignment { aligned, naive, shifts, skipped_scans })
}
