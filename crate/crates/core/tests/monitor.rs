mod common;

use clusterloop_core::fit::fit_counts;
use clusterloop_core::postselect::SelectionWindow;
use clusterloop_core::sampler::{sample_stream, SamplerOptions, ScanSchedule};
use clusterloop_core::stream::{
    align_scans, bin_events, match_coincidences, monitor_scan, points_from_counts, Monitor, MonitorWindow,
    SequenceLayout,
};
use clusterloop_core::{ExperimentConfig, ObservableSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::linspace_phi;
use std::f64::consts::{PI, TAU};

fn config() -> ExperimentConfig {
    ExperimentConfig { eta_sp: 0.8, loop_roundtrip_trans: 0.684, ..ExperimentConfig::lossless(3, 0.827) }
}

fn windows() -> Vec<MonitorWindow> {
    vec![
        MonitorWindow::last(3, 2).unwrap(),
        MonitorWindow::new(SelectionWindow::full(3).unwrap(), "XXZ".parse().unwrap()).unwrap(),
    ]
}

#[test]
fn match_counts_ignore_trial_order() {
    let config = config();
    let layout = SequenceLayout::from_config(&config);
    let items = sample_stream(&config, &ScanSchedule::constant(0.3, 60_000), SamplerOptions::default(), 2, 1).unwrap();
    let mut trials = bin_events(&items, &layout).unwrap().trials;
    let window = SelectionWindow::last(3, 2).unwrap();
    let spec = ObservableSpec::all_x(2).unwrap();
    let before = match_coincidences(&trials, &window, &spec);
    trials.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(match_coincidences(&trials, &window, &spec), before);
    assert!(before.total() > 100);
}

#[test]
fn snapshots_refit_to_the_reported_fit() {
    let config = config();
    let layout = SequenceLayout::from_config(&config);
    let schedule = ScanSchedule::scans(&linspace_phi(9), 12_000, &[0.0, 0.0]);
    let items = sample_stream(&config, &schedule, SamplerOptions::default(), 4, 2).unwrap();
    let mut monitor = Monitor::new(layout, windows(), 0, 3).unwrap();
    let mut snapshots = Vec::new();
    for &item in &items {
        snapshots.extend(monitor.push(item));
    }
    assert!(snapshots.len() >= 4);
    for snap in &snapshots {
        for w in &snap.windows {
            let refit = fit_counts(&points_from_counts(&w.counts), w.kind).ok().map(|c| c.fit);
            assert_eq!(refit, w.fit, "window {}", w.label);
        }
    }
    let state = monitor.finish();
    assert_eq!(state.scans.len(), 2);
    assert_eq!(state.segments, 18);
}

#[test]
fn phase_step_is_tracked() {
    let config = ExperimentConfig::lossless(2, 0.827);
    let layout = SequenceLayout::from_config(&config);
    let full = MonitorWindow::new(SelectionWindow::full(2).unwrap(), "XZ".parse().unwrap()).unwrap();
    let schedule = ScanSchedule::scans(&linspace_phi(13), 12_000, &[0.0, 0.0, 0.3, 0.3]);
    let items = sample_stream(&config, &schedule, SamplerOptions::default(), 17, 4).unwrap();
    let state = monitor_scan(&items, layout, vec![full], 0).unwrap();
    assert_eq!(state.phase_track.len(), 4);
    let base = state.phase_track[0].1;
    for &(scan, offset) in &state.phase_track {
        let expected = if scan >= 2 { 0.3 } else { 0.0 };
        let step = (offset - base + PI).rem_euclid(TAU) - PI;
        assert!((step - expected).abs() < 0.05, "scan {scan}: step {step}");
    }
}

#[test]
fn alignment_undoes_scan_offsets() {
    let config = config();
    let layout = SequenceLayout::from_config(&config);
    let schedule = ScanSchedule::scans(&linspace_phi(13), 20_004, &[0.0, 0.2, -0.2]);
    let items = sample_stream(&config, &schedule, SamplerOptions::default(), 23, 2).unwrap();
    let state = monitor_scan(&items, layout, windows(), 0).unwrap();
    let aligned = align_scans(&state, 1).unwrap();
    let reference = ScanSchedule::scans(&linspace_phi(13), 60_000, &[0.0]);
    let items = sample_stream(&config, &reference, SamplerOptions::default(), 29, 2).unwrap();
    let clean = monitor_scan(&items, layout, windows(), 0).unwrap().scans[0].fits[1].unwrap();
    let a = aligned.aligned.fit.amplitude;
    assert!((a - clean.amplitude).abs() < 0.02 + 3.0 * clean.amplitude_err, "{a} vs {}", clean.amplitude);
    assert!(aligned.naive.fit.amplitude < a);
}

#[test]
fn identical_scans_need_no_shift() {
    let config = config();
    let layout = SequenceLayout::from_config(&config);
    let schedule = ScanSchedule::scans(&linspace_phi(9), 10_002, &[0.0]);
    let items = sample_stream(&config, &schedule, SamplerOptions::default(), 31, 1).unwrap();
    let mut state = monitor_scan(&items, layout, windows(), 0).unwrap();
    let mut copy = state.scans[0].clone();
    copy.scan = 1;
    state.scans.push(copy);
    let alignment = align_scans(&state, 1).unwrap();
    assert_eq!(alignment.shifts, vec![(0, 0.0), (1, 0.0)]);
    let (a, b) = (alignment.aligned.fit, alignment.naive.fit);
    assert!((a.amplitude - b.amplitude).abs() < 1e-3 && (a.phase_offset - b.phase_offset).abs() < 1e-3);
}

#[test]
fn empty_stream_gives_empty_state() {
    let state = monitor_scan(&[], SequenceLayout::from_config(&config()), windows(), 0).unwrap();
    assert!(state.is_empty());
    assert!(state.phase_track.is_empty());
    assert!(align_scans(&state, 0).is_err());
}

/// Fraction of seeds whose fitted full-selection amplitude lies within three
/// fitted standard errors of `expected`.
fn closure_successes(config: &ExperimentConfig, spec: &str, expected: f64, trials: u64) -> usize {
    let layout = SequenceLayout::from_config(config);
    let window = MonitorWindow::new(SelectionWindow::full(config.n_photons).unwrap(), spec.parse().unwrap()).unwrap();
    let schedule = ScanSchedule::scans(&linspace_phi(13), trials, &[0.0]);
    (0..100u64)
        .filter(|&seed| {
            let items = sample_stream(config, &schedule, SamplerOptions::default(), seed, 1).unwrap();
            let state = monitor_scan(&items, layout, vec![window.clone()], 0).unwrap();
            state.rolling_fits[0].is_some_and(|f| (f.amplitude - expected).abs() < 3.0 * f.amplitude_err)
        })
        .count()
}

#[test]
fn sample_analyze_closure() {
    let two = ExperimentConfig { n_photons: 2, ..config() };
    let ok = closure_successes(&two, "XZ", 0.827, 6_000);
    assert!(ok >= 97, "N=2: {ok}/100");
    let ok = closure_successes(&config(), "XXZ", 0.827f64.powi(2), 12_000);
    assert!(ok >= 97, "N=3: {ok}/100");
}
