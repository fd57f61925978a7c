//! f64 helpers backed by `libm` so the crate stays `no_std`.

pub use core::f64::consts::{PI, TAU};

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn powi(x: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..n {
        acc *= x;
    }
    acc
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

/// Wraps an angle into (-pi, pi]. Exact ties at -pi map to +pi.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x - TAU * floor(x / TAU);
    // y in [0, 2pi)
    if y > PI {
        y -= TAU;
    }
    if y <= -PI {
        y += TAU;
    }
    y
}

/// Wraps an angle into (-period/2, period/2].
pub fn wrap_period(x: f64, period: f64) -> f64 {
    let half = period / 2.0;
    let mut y = x - period * floor(x / period);
    if y > half {
        y -= period;
    }
    if y <= -half {
        y += period;
    }
    y
}

pub fn is_unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}
