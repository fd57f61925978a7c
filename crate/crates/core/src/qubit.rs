//! Engine A: density-operator simulation of the fusion sequence.
//!
//! Qubit `q` of an `n`-qubit state is bit `n - 1 - q` of the basis index,
//! so the most recently fused photon (the one held in the memory loop) is
//! the least significant bit. Basis state 0 is `H`, 1 is `V`.

use alloc::vec;
use alloc::vec::Vec;

use crate::analytic::{xphi_operator, Mat2};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::observable::{ObservableSpec, PauliSlot};
use crate::C64;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Dense density operator over `n` polarization qubits plus the accumulated
/// post-selection probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationState {
    n: usize,
    rho: Vec<C64>,
    norm: f64,
}

impl PolarizationState {
    /// A single photon in `|P> = (|H> + |V>)/sqrt(2)`.
    pub fn prepare_plus() -> Self {
        Self { n: 1, rho: vec![C64::new(0.5, 0.0); 4], norm: 1.0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Row-major `2^n x 2^n` density matrix.
    pub fn rho(&self) -> &[C64] {
        &self.rho
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.rho[row * self.dim() + col]
    }

    /// Fuses a fresh `|P>` photon with the memory photon.
    ///
    /// The PBS post-selection keeps the `|HH>` and `|VV>` components of
    /// (memory, new), partial distinguishability multiplies the coherence
    /// between them by `pair_vis`, and the new photon, which stays in the
    /// loop, receives the Hadamard.
    pub fn fuse_next(&self, pair_vis: f64) -> Result<Self> {
        if !math::is_unit_interval(pair_vis) {
            return Err(invalid!("pair_vis = {pair_vis} is outside [0, 1]"));
        }
        let d = self.dim();
        let nd = 2 * d;
        let mut out = vec![C64::new(0.0, 0.0); nd * nd];
        // Projection: new bit equals memory bit, so each old index maps to one
        // new index. The fresh |P> contributes a factor 1/2 to every entry.
        for r in 0..d {
            let rm = r & 1;
            let nr = (r << 1) | rm;
            for c in 0..d {
                let cm = c & 1;
                let nc = (c << 1) | cm;
                let mut v = self.rho[r * d + c] * 0.5;
                if rm != cm {
                    v *= pair_vis;
                }
                out[nr * nd + nc] = v;
            }
        }
        let prob: f64 = (0..nd).map(|i| out[i * nd + i].re).sum();
        if !(prob > 0.0) {
            return Err(Error::Degenerate("fusion post-selection has zero probability".into()));
        }
        apply_hadamard_lsb(&mut out, nd);
        let inv = 1.0 / prob;
        for v in out.iter_mut() {
            *v *= inv;
        }
        Ok(Self { n: self.n + 1, rho: out, norm: self.norm * prob })
    }

    /// `Tr(rho O(phi))` for an observable of the measured family.
    pub fn expectation(&self, spec: &ObservableSpec, phi: f64) -> Result<f64> {
        spec.validate_for(self.n)?;
        let x = xphi_operator(phi);
        let z = pauli_z();
        let id = identity();
        let ops: Vec<Mat2> = spec
            .slots()
            .iter()
            .map(|s| match s {
                PauliSlot::XPhi => x,
                PauliSlot::Identity => id,
                PauliSlot::Z => z,
            })
            .collect();
        self.product_expectation(&ops)
    }

    /// `Tr(rho (O_0 x O_1 x ...))` where every single-qubit factor is either
    /// diagonal or anti-diagonal.
    pub fn product_expectation(&self, ops: &[Mat2]) -> Result<f64> {
        if ops.len() != self.n {
            return Err(invalid!("{} operators for {} qubits", ops.len(), self.n));
        }
        let mut flip = 0usize;
        for (q, op) in ops.iter().enumerate() {
            let diag = op[0][1] == C64::new(0.0, 0.0) && op[1][0] == C64::new(0.0, 0.0);
            let anti = op[0][0] == C64::new(0.0, 0.0) && op[1][1] == C64::new(0.0, 0.0);
            if anti && !diag {
                flip |= 1 << (self.n - 1 - q);
            } else if !diag {
                return Err(invalid!("operator on qubit {q} is neither diagonal nor anti-diagonal"));
            }
        }
        let d = self.dim();
        let mut total = C64::new(0.0, 0.0);
        for i in 0..d {
            let j = i ^ flip;
            let mut o = C64::new(1.0, 0.0);
            for (q, op) in ops.iter().enumerate() {
                let bit = self.n - 1 - q;
                o *= op[(j >> bit) & 1][(i >> bit) & 1];
            }
            // Tr(rho O) = sum_i rho[i][j] O[j][i]
            total += self.rho[i * d + j] * o;
        }
        Ok(total.re)
    }

    pub fn trace(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|i| self.rho[i * d + i].re).sum()
    }

    /// Largest `|rho - rho^dagger|` entry.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in r..d {
                let e = (self.rho[r * d + c] - self.rho[c * d + r].conj()).norm();
                worst = worst.max(e);
            }
        }
        worst
    }

    /// True when `rho + tol * I` admits a Cholesky factorization, i.e. every
    /// eigenvalue is at least `-tol`.
    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        let d = self.dim();
        let mut l = vec![C64::new(0.0, 0.0); d * d];
        for j in 0..d {
            let mut diag = self.rho[j * d + j].re + tol;
            for k in 0..j {
                diag -= l[j * d + k].norm_sqr();
            }
            if diag <= 0.0 {
                return false;
            }
            let ljj = math::sqrt(diag);
            l[j * d + j] = C64::new(ljj, 0.0);
            for i in (j + 1)..d {
                let mut s = self.rho[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k].conj();
                }
                l[i * d + j] = s / ljj;
            }
        }
        true
    }

    /// Checks trace, Hermiticity, positivity and the norm range.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::Degenerate(alloc::format!("trace {tr} differs from 1")));
        }
        let herm = self.hermiticity_error();
        if herm > 1e-12 {
            return Err(Error::Degenerate(alloc::format!("not Hermitian (error {herm:.2e})")));
        }
        if !self.is_positive_semidefinite(1e-10) {
            return Err(Error::Degenerate("density matrix has a negative eigenvalue".into()));
        }
        if !(self.norm > 0.0 && self.norm <= 1.0) {
            return Err(Error::Degenerate(alloc::format!("norm {} outside (0, 1]", self.norm)));
        }
        Ok(())
    }
}

/// `|P>` followed by `n - 1` fusions.
pub fn simulate_chain(n: usize, pair_vis: f64) -> Result<PolarizationState> {
    if n == 0 {
        return Err(invalid!("a chain needs at least one photon"));
    }
    let mut state = PolarizationState::prepare_plus();
    for _ in 1..n {
        state = state.fuse_next(pair_vis)?;
    }
    Ok(state)
}

pub fn pauli_z() -> Mat2 {
    [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]]
}

pub fn identity() -> Mat2 {
    [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]]
}

/// Conjugates the least significant qubit by the Hadamard, in place.
fn apply_hadamard_lsb(rho: &mut [C64], d: usize) {
    let h = FRAC_1_SQRT_2;
    // Left multiplication (rows), then right multiplication (columns).
    for r in (0..d).step_by(2) {
        for c in 0..d {
            let a = rho[r * d + c];
            let b = rho[(r + 1) * d + c];
            rho[r * d + c] = (a + b) * h;
            rho[(r + 1) * d + c] = (a - b) * h;
        }
    }
    for r in 0..d {
        for c in (0..d).step_by(2) {
            let a = rho[r * d + c];
            let b = rho[r * d + c + 1];
            rho[r * d + c] = (a + b) * h;
            rho[r * d + c + 1] = (a - b) * h;
        }
    }
}
