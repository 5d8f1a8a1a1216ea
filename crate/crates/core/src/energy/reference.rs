//! Closed-form reference solutions of the two oscillator experiments,
//! both starting from `(q, p) = (0, -1)`.

use core::f64::consts::PI;

use libm::{cos, exp, sin, sqrt};

use crate::error::{Error, Result};
use crate::models::Pulse;

/// Free oscillator driven by the `sin²` pulse on `[8, 10]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LosslessForced;

/// Oscillator with damping injection `u = -r y`, no external input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedFree {
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    LosslessForced(LosslessForced),
    DampedFree(DampedFree),
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Config(alloc::format!("reference time {t} out of range")));
    }
    Ok(())
}

/// Free rotation `q̇ = p, ṗ = -q` over a time `tau`.
fn rotate(q: f64, p: f64, tau: f64) -> (f64, f64) {
    let (s, c) = (sin(tau), cos(tau));
    (q * c + p * s, -q * s + p * c)
}

impl LosslessForced {
    pub const X0: [f64; 2] = [0.0, -1.0];

    /// Forced segment: `q̈ + q = (1 - cos(π τ)) / 2` for `τ = t - 8 ∈ [0, 2]`.
    fn forced(q8: f64, p8: f64, tau: f64) -> (f64, f64) {
        let w = 2.0 * PI / (Pulse::END - Pulse::START);
        let k = 1.0 / (2.0 * (1.0 - w * w));
        let a = q8 - 0.5 + k;
        let b = p8;
        let q = a * cos(tau) + b * sin(tau) + 0.5 - k * cos(w * tau);
        let p = -a * sin(tau) + b * cos(tau) + k * w * sin(w * tau);
        (q, p)
    }

    pub fn state(&self, t: f64) -> Result<[f64; 2]> {
        check_time(t)?;
        let (q0, p0) = (Self::X0[0], Self::X0[1]);
        if t < Pulse::START {
            let (q, p) = rotate(q0, p0, t);
            return Ok([q, p]);
        }
        let (q8, p8) = rotate(q0, p0, Pulse::START);
        if t <= Pulse::END {
            let (q, p) = Self::forced(q8, p8, t - Pulse::START);
            return Ok([q, p]);
        }
        let (q10, p10) = Self::forced(q8, p8, Pulse::END - Pulse::START);
        let (q, p) = rotate(q10, p10, t - Pulse::END);
        Ok([q, p])
    }
}

impl DampedFree {
    pub const X0: [f64; 2] = [0.0, -1.0];

    /// `q̈ + r q̇ + q = 0` with `q(0) = 0`, `q̇(0) = -1`.
    pub fn state(&self, t: f64) -> Result<[f64; 2]> {
        check_time(t)?;
        let r = self.gain;
        if !(0.0..2.0).contains(&r) {
            return Err(Error::Config("closed form needs an underdamped gain 0 <= r < 2".into()));
        }
        let wd = sqrt(1.0 - r * r / 4.0);
        let decay = exp(-r * t / 2.0);
        let (s, c) = (sin(wd * t), cos(wd * t));
        Ok([-decay * s / wd, -decay * (c - 0.5 * r * s / wd)])
    }
}

impl Reference {
    pub fn state(&self, t: f64) -> Result<[f64; 2]> {
        match self {
            Reference::LosslessForced(r) => r.state(t),
            Reference::DampedFree(r) => r.state(t),
        }
    }

    /// `H = ½ (q² + p²)` along the reference.
    pub fn hamiltonian(&self, t: f64) -> Result<f64> {
        let [q, p] = self.state(t)?;
        Ok(0.5 * (q * q + p * p))
    }

    pub fn initial_state(&self) -> [f64; 2] {
        match self {
            Reference::LosslessForced(_) => LosslessForced::X0,
            Reference::DampedFree(_) => DampedFree::X0,
        }
    }
}
