mod common;

use clusterloop_core::multiphoton::{
    enumerate_event_distribution, multiphoton_probability, Click, DetectionPattern, Detector,
    Distinguishability, EnumerationOptions, ModeEngine,
};
use clusterloop_core::network::{build_network, plus_state, NetworkOptions, OutputMode, Polarization, TransferNetwork};
use clusterloop_core::observable::ObservableSpec;
use clusterloop_core::permanent::{permanent_naive, permanent_ryser, PermutationTable};
use clusterloop_core::postselect::{full_expectation, pps_expectation, SelectionWindow};
use clusterloop_core::qubit::simulate_chain;
use clusterloop_core::{ExperimentConfig, C64};
use common::linspace_phi;
use proptest::prelude::*;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Detector-basis amplitudes of every photon over all output modes: the
/// detection modes rotated to (D_H, D_V), then loss and tail modes as-is.
fn detector_columns(net: &TransferNetwork, inputs: &[(usize, [C64; 2])], eta: f64) -> Vec<Vec<C64>> {
    let n_det = net.n_detection_modes();
    inputs
        .iter()
        .map(|&(k, s)| {
            let col = net.column(k, s);
            let mut out: Vec<C64> = (0..n_det)
                .map(|m| {
                    let (h, v) = (col[m / 2 * 2], col[m / 2 * 2 + 1]);
                    (if m % 2 == 0 { h + v } else { h - v }) * FRAC_1_SQRT_2 * eta.sqrt()
                })
                .collect();
            out.extend(col[n_det..].iter().map(|a| a * eta.sqrt()));
            out
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    PermutationTable::new(n).iter().map(|p| p.iter().map(|&x| x as usize).collect()).collect()
}

/// First-quantised oracle: sums over ordered output tuples
/// `p(o) = (1/n!) sum_{sigma,tau} w(tau sigma^-1) prod_i c_sigma(i)(o_i) conj(c_tau(i)(o_i))`
/// and keeps the tuples whose detected modes form exactly `clicks`.
fn tuple_oracle(cols: &[Vec<C64>], n_det: usize, tail: &[usize], clicks: &[usize], weight: &dyn Fn(&[usize]) -> f64) -> f64 {
    let n = cols.len();
    let n_modes = cols[0].len();
    let perms = permutations(n);
    let mut fact = 1.0;
    for k in 1..=n {
        fact *= k as f64;
    }
    let mut total = 0.0;
    let mut tuple = vec![0usize; n];
    loop {
        let mut detected: Vec<usize> = tuple.iter().copied().filter(|&o| o < n_det).collect();
        detected.sort();
        detected.dedup();
        let in_tail = tuple.iter().any(|o| tail.contains(o));
        if !in_tail && detected == clicks {
            let mut p = C64::new(0.0, 0.0);
            for s in &perms {
                for t in &perms {
                    // rho = tau o sigma^-1
                    let mut rho = vec![0usize; n];
                    for i in 0..n {
                        rho[s[i]] = t[i];
                    }
                    let w = weight(&rho);
                    if w == 0.0 {
                        continue;
                    }
                    let mut prod = C64::new(w, 0.0);
                    for i in 0..n {
                        prod *= cols[s[i]][tuple[i]] * cols[t[i]][tuple[i]].conj();
                    }
                    p += prod;
                }
            }
            total += p.re / fact;
        }
        let mut i = 0;
        loop {
            if i == n {
                return total;
            }
            tuple[i] += 1;
            if tuple[i] < n_modes {
                break;
            }
            tuple[i] = 0;
            i += 1;
        }
    }
}

fn cycle_weight(v: f64) -> impl Fn(&[usize]) -> f64 {
    move |p: &[usize]| {
        let q: Vec<u8> = p.iter().map(|&x| x as u8).collect();
        v.powi((p.len() - clusterloop_core::permanent::cycle_count(&q)) as i32)
    }
}

fn small_net(n: usize, phi: f64, t: f64) -> TransferNetwork {
    TransferNetwork::unrolled(n, n + 2, phi, t).unwrap()
}

#[test]
fn engines_agree_under_full_post_selection() {
    for n in 2..=4 {
        let mut specs = vec![ObservableSpec::all_x(n).unwrap()];
        if n == 4 {
            specs.push("XIXZ".parse().unwrap());
        }
        for v in [1.0, 0.827] {
            let a = simulate_chain(n, v).unwrap();
            let cfg = ExperimentConfig::lossless(n, v);
            for spec in &specs {
                for phi in linspace_phi(13) {
                    let b = full_expectation(&cfg, spec, phi).unwrap().value;
                    let want = a.expectation(spec, phi).unwrap();
                    assert!((b - want).abs() < 1e-9, "n={n} v={v} {spec} phi={phi}: {b} vs {want}");
                }
            }
        }
    }
}

#[test]
fn uniform_loss_leaves_conditional_expectations_unchanged() {
    for n in 2..=4 {
        let spec = ObservableSpec::all_x(n).unwrap();
        let lossless = ExperimentConfig::lossless(n, 0.827);
        let lossy = ExperimentConfig { n_photons: n, pair_vis: 0.827, ..ExperimentConfig::default() };
        for phi in [0.0, 0.7, 2.1] {
            let a = full_expectation(&lossless, &spec, phi).unwrap();
            let b = full_expectation(&lossy, &spec, phi).unwrap();
            assert!((a.value - b.value).abs() < 1e-9, "n={n} phi={phi}");
            assert!(b.weight < a.weight);
        }
    }
}

#[test]
fn enumeration_is_normalized() {
    for (n, cfg) in [
        (1, ExperimentConfig::lossless(1, 0.827)),
        (2, ExperimentConfig::lossless(2, 0.827)),
        (3, ExperimentConfig::lossless(3, 0.5)),
        (3, ExperimentConfig { n_photons: 3, phi: 0.4, ..ExperimentConfig::default() }),
    ] {
        let d = enumerate_event_distribution(&cfg, &EnumerationOptions::default()).unwrap();
        let total = d.total() + d.tail_mass + d.pruned_mass;
        assert!((total - 1.0).abs() < 1e-6, "n={n}: {total}");
        assert!(d.pruned_mass < 1e-6);
    }
}

#[test]
fn single_photon_is_always_detected_without_loss() {
    let cfg = ExperimentConfig::lossless(1, 1.0);
    let opts = EnumerationOptions { network: NetworkOptions { extra_rounds: 40, tail_tolerance: Some(1e-10) }, ..Default::default() };
    let d = enumerate_event_distribution(&cfg, &opts).unwrap();
    assert!((d.multiplicity_mass(1) - 1.0).abs() < 1e-10);
}

#[test]
fn loss_makes_single_clicks_dominate() {
    let cfg = ExperimentConfig { eta_sp: 1.0, eta_det: 1.0, eta_setup: 0.37, ..ExperimentConfig::lossless(2, 0.827) };
    let d = enumerate_event_distribution(&cfg, &EnumerationOptions::default()).unwrap();
    assert!(d.multiplicity_mass(1) > d.multiplicity_mass(2));
}

#[test]
fn accepted_two_photon_patterns_carry_three_sixteenths() {
    // Independent count: the first photon enters the loop (1/2) and leaves
    // after one round (1/2) or two rounds (1/4), while the second photon's
    // V component (1/2) reflects out in slot 1 and its H component keeps
    // the memory; projecting onto one click per slot pairs these up.
    let cfg = ExperimentConfig::lossless(2, 1.0);
    let w = full_expectation(&cfg, &ObservableSpec::all_x(2).unwrap(), 0.3).unwrap().weight;
    assert!((w - 3.0 / 16.0).abs() < 1e-12);
}

#[test]
fn exact_click_sets_match_the_tuple_oracle() {
    for (n, v) in [(1usize, 0.4), (2, 0.827), (2, 0.0), (3, 0.827)] {
        let net = small_net(n, 0.6, 0.7);
        let inputs: Vec<_> = (0..n).map(|k| (k, plus_state())).collect();
        let engine = ModeEngine::new(&net, &inputs, v, Distinguishability::CycleDephasing, 1.0).unwrap();
        let cols = detector_columns(&net, &inputs, 1.0);
        let n_det = net.n_detection_modes();
        let tail = [net.n_modes() - 2, net.n_modes() - 1];
        let candidates: Vec<Vec<usize>> = match n {
            1 => vec![vec![], vec![2], vec![3]],
            2 => vec![vec![2, 5], vec![2, 3], vec![3], vec![4, 6], vec![]],
            _ => vec![vec![2, 4, 7], vec![3, 4], vec![2, 5, 6], vec![6]],
        };
        for clicks in candidates {
            let got = engine.mode_pattern_probability(&clicks);
            let want = tuple_oracle(&cols, n_det, &tail, &clicks, &cycle_weight(v));
            assert!((got - want).abs() < 1e-12, "n={n} v={v} {clicks:?}: {got} vs {want}");
        }
    }
}

#[test]
fn folded_loss_equals_incoherent_subset_sum() {
    let n = 3;
    let eta = 0.35;
    let v = 0.827;
    let net = small_net(n, 1.1, 0.684);
    let all: Vec<_> = (0..n).map(|k| (k, plus_state())).collect();
    let folded = ModeEngine::new(&net, &all, v, Distinguishability::CycleDephasing, eta).unwrap();
    let patterns = [vec![2usize, 4], vec![3], vec![2, 5, 7], vec![]];
    for clicks in patterns {
        let mut sum = 0.0;
        for mask in 0u32..(1 << n) {
            let subset: Vec<_> = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| (k, plus_state())).collect();
            let k = subset.len() as i32;
            let weight = eta.powi(k) * (1.0 - eta).powi(n as i32 - k);
            let p = if subset.is_empty() {
                if clicks.is_empty() { 1.0 } else { 0.0 }
            } else {
                ModeEngine::new(&net, &subset, v, Distinguishability::CycleDephasing, 1.0)
                    .unwrap()
                    .mode_pattern_probability(&clicks)
            };
            sum += weight * p;
        }
        let got = folded.mode_pattern_probability(&clicks);
        assert!((got - sum).abs() < 1e-13, "{clicks:?}: {got} vs {sum}");
    }
}

/// Photons of subset `good` share one internal state; all others are
/// mutually distinguishable. Probability from the tuple oracle restricted to
/// permutations inside `good`.
fn good_bad_oracle(cols: &[Vec<C64>], n_det: usize, tail: &[usize], clicks: &[usize], s: f64) -> f64 {
    let n = cols.len();
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as i32;
        let weight = s.powi(k) * (1.0 - s).powi(n as i32 - k);
        let inside = move |p: &[usize]| {
            let ok = p.iter().enumerate().all(|(i, &j)| i == j || (mask & (1 << i) != 0 && mask & (1 << j) != 0));
            if ok { 1.0 } else { 0.0 }
        };
        total += weight * tuple_oracle(cols, n_det, tail, clicks, &inside);
    }
    total
}

#[test]
fn uniform_overlap_matches_good_bad_expansion() {
    for (n, v) in [(2usize, 0.827), (3, 0.6)] {
        let net = small_net(n, 0.9, 0.8);
        let inputs: Vec<_> = (0..n).map(|k| (k, plus_state())).collect();
        let engine = ModeEngine::new(&net, &inputs, v, Distinguishability::UniformOverlap, 1.0).unwrap();
        let cols = detector_columns(&net, &inputs, 1.0);
        let tail = [net.n_modes() - 2, net.n_modes() - 1];
        for clicks in [vec![2usize, 4], vec![3, 5], vec![2]] {
            let got = engine.mode_pattern_probability(&clicks);
            let want = good_bad_oracle(&cols, net.n_detection_modes(), &tail, &clicks, v.sqrt());
            assert!((got - want).abs() < 1e-10, "n={n} {clicks:?}: {got} vs {want}");
        }
    }
}

#[test]
fn distinct_click_patterns_reduce_to_permanents() {
    let n = 3;
    let net = small_net(n, 0.8, 1.0);
    let inputs: Vec<_> = (0..n).map(|k| (k, plus_state())).collect();
    let cols = detector_columns(&net, &inputs, 1.0);
    let clicks = [2usize, 5, 6];
    let m: Vec<Vec<C64>> = clicks.iter().map(|&o| (0..n).map(|j| cols[j][o]).collect()).collect();
    let msq: Vec<Vec<C64>> = m.iter().map(|r| r.iter().map(|a| C64::new(a.norm_sqr(), 0.0)).collect()).collect();
    let e1 = ModeEngine::new(&net, &inputs, 1.0, Distinguishability::CycleDephasing, 1.0).unwrap();
    let e0 = ModeEngine::new(&net, &inputs, 0.0, Distinguishability::CycleDephasing, 1.0).unwrap();
    let want1 = permanent_ryser(&m).norm_sqr();
    let want0 = permanent_naive(&msq).re;
    assert!((e1.mode_pattern_probability(&clicks) - want1).abs() < 1e-13);
    assert!((e0.mode_pattern_probability(&clicks) - want0).abs() < 1e-13);
}

#[test]
fn identity_network_detects_each_photon_in_its_own_mode() {
    let n = 3;
    let max_slot = 2;
    let n_modes = TransferNetwork::mode_count(max_slot);
    // Photon k leaves in slot k towards D_H: polarization amplitudes (1, 1)/sqrt 2.
    let columns: Vec<[Vec<C64>; 2]> = (0..n)
        .map(|k| {
            let mut c = vec![C64::new(0.0, 0.0); n_modes];
            c[2 * k] = C64::new(FRAC_1_SQRT_2, 0.0);
            c[2 * k + 1] = C64::new(FRAC_1_SQRT_2, 0.0);
            [c.clone(), c]
        })
        .collect();
    let net = TransferNetwork::from_columns(max_slot, columns).unwrap();
    let h = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let inputs: Vec<_> = (0..n).map(|k| (k, h)).collect();
    let pattern = DetectionPattern::from_pairs(&[(0, Detector::DH), (1, Detector::DH), (2, Detector::DH)]).unwrap();
    for v in [0.0, 0.3, 0.827, 1.0] {
        let p = multiphoton_probability(&net, &inputs, &pattern, v).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }
}

#[test]
fn loop_delay_hom_coincidences() {
    // The first photon after one loop round and the second photon's
    // reflected V component share slot 1. The detector basis erases their
    // polarization, so the D_H/D_V coincidence probes their overlap.
    let net = TransferNetwork::unrolled(2, 2, 0.0, 1.0).unwrap();
    let inputs = [(0, plus_state()), (1, plus_state())];
    let coincidence = DetectionPattern::from_pairs(&[(1, Detector::DH), (1, Detector::DV)]).unwrap();
    let p = |v: f64| multiphoton_probability(&net, &inputs, &coincidence, v).unwrap();
    assert!(p(1.0).abs() < 1e-14);
    assert!(p(0.0) > 0.0);
    assert!((p(0.827) - (1.0 - 0.827) * p(0.0)).abs() < 1e-14);
}

#[test]
fn network_examples() {
    let cfg = ExperimentConfig::lossless(3, 1.0);
    let net = build_network(&cfg, &NetworkOptions::default()).unwrap();
    let v = net.amplitude(2, Polarization::V, OutputMode::Detection { slot: 2, pol: Polarization::V });
    assert_eq!(v, C64::new(1.0, 0.0));
    let i = net.slot_intensity(0, plus_state());
    for k in 1..8 {
        assert!((i[k + 1] / i[k] - 0.5).abs() < 1e-12);
    }
}

#[test]
fn clicks_beyond_the_network_are_rejected() {
    let cfg = ExperimentConfig::lossless(2, 1.0);
    let e = ModeEngine::from_config(&cfg, &NetworkOptions::default(), Distinguishability::default()).unwrap();
    let p = DetectionPattern::new(vec![Click::new(e.max_slot() + 1, Detector::DH)]).unwrap();
    assert!(e.pattern_probability(&p).is_err());
}

#[test]
fn pps_with_full_window_equals_full_post_selection() {
    let cfg = ExperimentConfig { n_photons: 2, ..ExperimentConfig::default() };
    let spec = ObservableSpec::all_x(2).unwrap();
    let a = pps_expectation(&cfg, &SelectionWindow::full(2).unwrap(), &spec, 0.5).unwrap();
    let b = full_expectation(&cfg, &spec, 0.5).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prefix_probabilities_split_over_the_next_click(
        phi in -3.0f64..3.0,
        v in 0.0f64..=1.0,
        eta in 0.2f64..=1.0,
        first in 0usize..8,
    ) {
        let net = TransferNetwork::unrolled(3, 6, phi, 0.7).unwrap();
        let inputs: Vec<_> = (0..3).map(|k| (k, plus_state())).collect();
        let e = ModeEngine::new(&net, &inputs, v, Distinguishability::CycleDephasing, eta).unwrap();
        let parent = e.prefix_probability(&[first], first + 1);
        let mut children = e.mode_pattern_probability(&[first]);
        for m in first + 1..e.n_detection_modes() {
            children += e.prefix_probability(&[first, m], m + 1);
        }
        prop_assert!((parent - children).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&parent));
    }
}
