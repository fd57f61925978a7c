#![allow(dead_code)]

use clusterloop_core::observable::{ObservableSpec, PauliSlot};
use clusterloop_core::C64;

/// Ideal linear cluster state `prod CZ |+>^n` as a state vector, qubit 0 in
/// the most significant bit.
pub fn cluster_vector(n: usize) -> Vec<C64> {
    let d = 1usize << n;
    let amp = 1.0 / (d as f64).sqrt();
    (0..d)
        .map(|i| {
            let mut sign = 1.0;
            for q in 0..n - 1 {
                let a = (i >> (n - 1 - q)) & 1;
                let b = (i >> (n - 2 - q)) & 1;
                if a == 1 && b == 1 {
                    sign = -sign;
                }
            }
            C64::new(sign * amp, 0.0)
        })
        .collect()
}

/// `<psi| O |psi>` for an observable of the X_phi / I / Z family, applying
/// each single-qubit operator to the state vector in turn.
pub fn vector_expectation(psi: &[C64], spec: &ObservableSpec, phi: f64) -> f64 {
    let n = spec.len();
    let mut v = psi.to_vec();
    for (q, slot) in spec.slots().iter().enumerate() {
        let bit = n - 1 - q;
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (i, a) in v.iter().enumerate() {
            let b = (i >> bit) & 1;
            match slot {
                PauliSlot::Identity => out[i] += a,
                PauliSlot::Z => out[i] += if b == 0 { *a } else { -a },
                PauliSlot::XPhi => {
                    // X_phi |0> = e^{i phi} |1>, X_phi |1> = e^{-i phi} |0>
                    let j = i ^ (1 << bit);
                    let ph = if b == 0 { C64::from_polar(1.0, phi) } else { C64::from_polar(1.0, -phi) };
                    out[j] += a * ph;
                }
            }
        }
        v = out;
    }
    psi.iter().zip(&v).map(|(a, b)| a.conj() * b).sum::<C64>().re
}

/// Expectation under independent dephasing of every exiting photon: a `Z`
/// error with probability `(1 - v)/2` on qubits `0..n-1` flips the sign of
/// any observable carrying `X_phi` there.
pub fn pauli_frame_oracle(spec: &ObservableSpec, v: f64, phi: f64) -> f64 {
    let n = spec.len();
    let ideal = vector_expectation(&cluster_vector(n), spec, phi);
    let flips = spec.x_positions().filter(|&q| q < n - 1).count();
    ideal * v.powi(flips as i32)
}

pub fn linspace_phi(points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / (points - 1) as f64)
        .collect()
}
