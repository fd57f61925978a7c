use std::collections::BTreeMap;

use clusterloop_core::multiphoton::{enumerate_event_distribution, DetectionPattern, EnumerationOptions};
use clusterloop_core::postselect::{pps_expectation, SelectionWindow};
use clusterloop_core::sampler::{sample_stream, sample_worker, SamplerOptions, ScanSchedule};
use clusterloop_core::stream::{bin_events, SequenceLayout, StreamItem};
use clusterloop_core::{ExperimentConfig, ObservableSpec};

/// Critical value of a chi-square with `dof` degrees of freedom at roughly
/// p = 1e-3 (Wilson–Hilferty).
fn chi2_critical(dof: usize) -> f64 {
    let k = dof as f64;
    let z = 3.09;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

fn lossy(n: usize) -> ExperimentConfig {
    ExperimentConfig { eta_sp: 0.7, loop_roundtrip_trans: 0.684, ..ExperimentConfig::lossless(n, 0.827) }
}

fn patterns(config: &ExperimentConfig, phi: f64, trials: u64, seed: u64) -> BTreeMap<DetectionPattern, u64> {
    let schedule = ScanSchedule::constant(phi, trials);
    let mut hist = BTreeMap::new();
    for (_, clicks) in sample_worker(config, &schedule, SamplerOptions::default(), seed, 0, 1).unwrap() {
        *hist.entry(DetectionPattern::new(clicks).unwrap()).or_insert(0) += 1;
    }
    hist
}

#[test]
fn streams_are_reproducible() {
    let config = lossy(3);
    let schedule = ScanSchedule::scans(&[0.0, 1.0], 3_000, &[0.0]);
    let a = sample_stream(&config, &schedule, SamplerOptions::default(), 7, 3).unwrap();
    let b = sample_stream(&config, &schedule, SamplerOptions::default(), 7, 3).unwrap();
    assert_eq!(a, b);
    let c = sample_stream(&config, &schedule, SamplerOptions::default(), 8, 3).unwrap();
    assert_ne!(a, c);
}

#[test]
fn sampled_patterns_follow_the_enumeration() {
    let phi = 0.6;
    let config = lossy(2).with_phi(phi);
    let trials = 200_000u64;
    let hist = patterns(&config, phi, trials, 11);
    let dist = enumerate_event_distribution(&config, &EnumerationOptions::default()).unwrap();

    let mut chi2 = 0.0;
    let mut bins = 0;
    let (mut rest_obs, mut rest_exp) = (trials as f64, trials as f64);
    for p in dist.patterns.iter().filter(|p| !p.pattern.is_empty()) {
        let expected = p.prob * trials as f64;
        if expected < 10.0 {
            continue;
        }
        let observed = *hist.get(&p.pattern).unwrap_or(&0) as f64;
        chi2 += (observed - expected).powi(2) / expected;
        rest_obs -= observed;
        rest_exp -= expected;
        bins += 1;
    }
    chi2 += (rest_obs - rest_exp).powi(2) / rest_exp;
    assert!(bins >= 10, "only {bins} populated patterns");
    assert!(chi2 < chi2_critical(bins), "chi2 = {chi2} over {bins} dof");

    for p in hist.keys() {
        assert!(dist.get(p).is_some(), "sampled pattern {p} is not in the enumeration");
    }
}

#[test]
fn single_photon_exit_slots_decay_geometrically() {
    let config = ExperimentConfig { loop_roundtrip_trans: 0.684, ..ExperimentConfig::lossless(1, 1.0) };
    let trials = 100_000u64;
    let hist = patterns(&config, 0.0, trials, 3);
    let mut by_slot = [0u64; 5];
    for (p, &count) in &hist {
        assert_eq!(p.len(), 1);
        let slot = p.max_slot().unwrap();
        if slot < by_slot.len() {
            by_slot[slot] += count;
        }
    }
    let r = config.per_cycle_survival();
    for (k, &observed) in by_slot.iter().enumerate() {
        let p = 0.5 * r.powi(k as i32);
        let expected = p * trials as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((observed as f64 - expected).abs() < 4.0 * sigma, "slot {k}: {observed} vs {expected:.0}");
    }
}

#[test]
fn interleaved_trials_are_statistically_identical() {
    let config = ExperimentConfig::with_photons(2);
    let layout = SequenceLayout::from_config(&config);
    let schedule = ScanSchedule::constant(0.0, 600_000);
    let items = sample_stream(&config, &schedule, SamplerOptions::default(), 5, 2).unwrap();
    let binned = bin_events(&items, &layout).unwrap();
    let i = layout.interleave_factor;
    let mut per_channel = vec![0u64; i];
    for t in &binned.trials {
        per_channel[(t.trial % i as u64) as usize] += t.pattern.len() as u64;
    }
    let total: u64 = per_channel.iter().sum();
    let expected = total as f64 / i as f64;
    let chi2: f64 = per_channel.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    assert!(total > 1000);
    assert!(chi2 < chi2_critical(i - 1), "chi2 = {chi2}, counts {per_channel:?}");
}

#[test]
fn lossless_pairs_bin_cleanly() {
    let config = ExperimentConfig { off_cycles: 40, ..ExperimentConfig::lossless(2, 1.0) };
    let layout = SequenceLayout::from_config(&config);
    let trials = 60_000u64;
    let schedule = ScanSchedule::constant(0.0, trials);
    let items = sample_stream(&config, &schedule, SamplerOptions::default(), 9, 1).unwrap();
    let records = items.iter().filter(|i| matches!(i, StreamItem::Event(_))).count() as u64;
    let binned = bin_events(&items, &layout).unwrap();
    assert_eq!(binned.stats.records, records);
    assert_eq!(binned.stats.binned + binned.stats.unbinned, records);
    assert_eq!(binned.stats.unbinned, 0);
    assert!(binned.trials.iter().all(|t| t.pattern.len() <= 2));

    let full = SelectionWindow::full(2).unwrap();
    let accepted = binned
        .trials
        .iter()
        .filter(|t| full.parity(&t.pattern, &ObservableSpec::all_x(2).unwrap()).is_some())
        .count() as f64;
    let p = 3.0 / 16.0;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    assert!((accepted - p * trials as f64).abs() < 4.0 * sigma, "accepted {accepted}");
}

#[test]
fn partial_window_rate_includes_pollution() {
    let phi = 0.4;
    let config = ExperimentConfig { eta_sp: 0.5, loop_roundtrip_trans: 0.684, ..ExperimentConfig::lossless(3, 0.827) };
    let trials = 150_000u64;
    let hist = patterns(&config, phi, trials, 21);
    let window = SelectionWindow::last(3, 2).unwrap();
    let spec = ObservableSpec::all_x(2).unwrap();
    let (mut matched, mut signed) = (0u64, 0.0);
    for (p, &count) in &hist {
        if let Some(parity) = window.parity(p, &spec) {
            matched += count;
            signed += parity * count as f64;
        }
    }
    let exact = pps_expectation(&config, &window, &spec, phi).unwrap();
    let sigma = (trials as f64 * exact.weight).sqrt();
    assert!((matched as f64 - exact.weight * trials as f64).abs() < 4.0 * sigma);
    let mean = signed / matched as f64;
    let se = ((1.0 - mean * mean) / matched as f64).sqrt();
    assert!((mean - exact.value).abs() < 4.0 * se, "{mean} vs {}", exact.value);
}
