//! Weighted least-squares fits of visibility curves.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::observable::CurveKind;

/// One measured phase setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub phi: f64,
    pub mean: f64,
    pub stderr: f64,
    pub counts: u64,
}

impl CurvePoint {
    /// Mean and binomial standard error of a +-1 outcome from its counts.
    /// The variance is floored at `1/n` so that saturated points keep a
    /// finite weight.
    pub fn from_counts(phi: f64, plus: u64, minus: u64) -> Option<Self> {
        let n = plus + minus;
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = (plus as f64 - minus as f64) / nf;
        let var = (1.0 - mean * mean).max(1.0 / nf) / nf;
        Some(Self { phi, mean, stderr: math::sqrt(var), counts: n })
    }

    /// A noiseless point; all such points carry equal weight.
    pub fn exact(phi: f64, mean: f64) -> Self {
        Self { phi, mean, stderr: 1.0, counts: 1 }
    }
}

/// Parameters of a fitted curve `amplitude * shape(phi + phase_offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Non-negative whenever the curve kind allows a sign flip to be folded
    /// into the phase offset.
    pub amplitude: f64,
    /// In (-pi, pi] for 2pi-periodic kinds, (-pi/2, pi/2] for pi-periodic.
    pub phase_offset: f64,
    pub amplitude_err: f64,
    pub phase_offset_err: f64,
    pub chi2: f64,
    pub dof: usize,
    /// Peak-to-peak spread of the measured means divided by that of the
    /// unit-amplitude shape.
    pub contrast: f64,
    pub iterations: usize,
}

/// Measured points of one observable together with their fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityCurve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
    pub fit: FitResult,
}

impl VisibilityCurve {
    pub fn evaluate(&self, phi: f64) -> f64 {
        self.fit.amplitude * self.kind.shape(phi + self.fit.phase_offset)
    }
}

const GRID: usize = 720;
const MAX_ITER: usize = 200;

/// Fits `amplitude * kind.shape(phi + phase_offset)` by weighted least
/// squares with weights `1 / stderr^2`. Parameter errors come from the
/// inverse of the Fisher matrix `J^T W J`.
pub fn fit_visibility(points: &[CurvePoint], kind: CurveKind) -> Result<VisibilityCurve> {
    check_points(points, kind)?;
    let w: Vec<f64> = points.iter().map(|p| 1.0 / (p.stderr * p.stderr)).collect();

    // Linear amplitude for each phase on a grid, keeping the best chi^2.
    let period = kind.period();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for g in 0..GRID {
        let phi0 = -period / 2.0 + period * g as f64 / GRID as f64;
        let (mut sff, mut syf) = (0.0, 0.0);
        for (p, wi) in points.iter().zip(&w) {
            let f = kind.shape(p.phi + phi0);
            sff += wi * f * f;
            syf += wi * p.mean * f;
        }
        if sff <= 0.0 {
            continue;
        }
        let a = syf / sff;
        let chi2 = chi_square(points, &w, kind, a, phi0);
        if chi2 < best.0 {
            best = (chi2, a, phi0);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Fit("no phase offset gives a non-degenerate design".into()));
    }

    // Levenberg-Marquardt refinement of (amplitude, phase).
    let (mut chi2, mut a, mut phi0) = best;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let (jtj, jtr) = normal_equations(points, &w, kind, a, phi0);
        let mut stepped = false;
        for _ in 0..30 {
            let m = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let Some(delta) = solve2(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let (na, np) = (a + delta[0], phi0 + delta[1]);
            let nchi = chi_square(points, &w, kind, na, np);
            if nchi <= chi2 {
                let small = delta[0].abs() <= 1e-14 * (1.0 + a.abs()) && delta[1].abs() <= 1e-14;
                let flat = chi2 - nchi <= 1e-15 * (1.0 + chi2);
                a = na;
                phi0 = np;
                chi2 = nchi;
                lambda = (lambda / 10.0).max(1e-12);
                stepped = true;
                if small || flat {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            // No downhill step at any damping: we sit at the minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(alloc::format!(
            "no convergence after {MAX_ITER} iterations (amplitude {a:.6}, phase {phi0:.6}, chi2 {chi2:.6e})"
        )));
    }

    let (jtj, _) = normal_equations(points, &w, kind, a, phi0);
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    let scale = jtj[0][0] * jtj[1][1];
    if !(det > 1e-12 * scale) || !(scale > 0.0) {
        return Err(Error::Fit(alloc::format!(
            "rank-deficient design at amplitude {a:.3e}, phase {phi0:.6} (det {det:.3e})"
        )));
    }
    let amplitude_err = math::sqrt(jtj[1][1] / det);
    let phase_offset_err = math::sqrt(jtj[0][0] / det);

    if a < 0.0 && kind.sign_absorbable() {
        a = -a;
        phi0 += math::PI;
    }
    let phase_offset = if period == math::TAU { math::wrap_angle(phi0) } else { math::wrap_period(phi0, period) };

    let (lo, hi) = kind.shape_range();
    let max = points.iter().map(|p| p.mean).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min);
    let contrast = (max - min) / (hi - lo);

    Ok(VisibilityCurve {
        kind,
        points: points.to_vec(),
        fit: FitResult {
            amplitude: a,
            phase_offset,
            amplitude_err,
            phase_offset_err,
            chi2,
            dof: points.len() - 2,
            contrast,
            iterations,
        },
    })
}

/// Fits points built from +-1 counts. Weights from the observed means favour
/// points that fluctuated towards +-1 and bias sparse data upwards, so the
/// weights are taken from the fitted curve instead: the first pass uses the
/// variance bound `1/n`, later passes `max(1 - f^2, 1/n) / n` with `f` the
/// current fit, until the parameters settle. The returned curve keeps the
/// points as given.
pub fn fit_counts(points: &[CurvePoint], kind: CurveKind) -> Result<VisibilityCurve> {
    let mut work: Vec<CurvePoint> = points
        .iter()
        .map(|p| CurvePoint { stderr: math::sqrt(1.0 / p.counts.max(1) as f64), ..*p })
        .collect();
    let mut curve = fit_visibility(&work, kind)?;
    for _ in 0..REWEIGHT_PASSES {
        for p in work.iter_mut() {
            let n = p.counts as f64;
            let f = curve.evaluate(p.phi).clamp(-1.0, 1.0);
            p.stderr = math::sqrt((1.0 - f * f).max(1.0 / n) / n);
        }
        let next = fit_visibility(&work, kind)?;
        let settled = (next.fit.amplitude - curve.fit.amplitude).abs() < 1e-12
            && (next.fit.phase_offset - curve.fit.phase_offset).abs() < 1e-12;
        curve = next;
        if settled {
            break;
        }
    }
    curve.points = points.to_vec();
    Ok(curve)
}

const REWEIGHT_PASSES: usize = 20;

fn check_points(points: &[CurvePoint], kind: CurveKind) -> Result<()> {
    if points.len() < 5 {
        return Err(Error::Fit(alloc::format!("{} points given, at least 5 needed", points.len())));
    }
    for p in points {
        if p.counts == 0 {
            return Err(Error::Fit(alloc::format!("point at phi = {} has no counts", p.phi)));
        }
        if !(p.stderr > 0.0 && p.stderr.is_finite()) || !p.mean.is_finite() || !p.phi.is_finite() {
            return Err(Error::Fit(alloc::format!("point at phi = {} has invalid mean or error", p.phi)));
        }
    }
    let lo = points.iter().map(|p| p.phi).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.phi).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < kind.period() / 2.0 - 1e-12 {
        return Err(Error::Fit(alloc::format!(
            "phases span {:.4} rad, less than half the period {:.4}",
            hi - lo,
            kind.period()
        )));
    }
    Ok(())
}

fn chi_square(points: &[CurvePoint], w: &[f64], kind: CurveKind, a: f64, phi0: f64) -> f64 {
    points
        .iter()
        .zip(w)
        .map(|(p, wi)| {
            let r = p.mean - a * kind.shape(p.phi + phi0);
            wi * r * r
        })
        .sum()
}

fn normal_equations(points: &[CurvePoint], w: &[f64], kind: CurveKind, a: f64, phi0: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let mut jtj = [[0.0; 2]; 2];
    let mut jtr = [0.0; 2];
    for (p, wi) in points.iter().zip(w) {
        let x = p.phi + phi0;
        let j = [kind.shape(x), a * kind.shape_derivative(x)];
        let r = p.mean - a * j[0];
        for u in 0..2 {
            jtr[u] += wi * j[u] * r;
            for v in 0..2 {
                jtj[u][v] += wi * j[u] * j[v];
            }
        }
    }
    (jtj, jtr)
}

fn solve2(m: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([(b[0] * m[1][1] - b[1] * m[0][1]) / det, (m[0][0] * b[1] - m[1][0] * b[0]) / det])
}
