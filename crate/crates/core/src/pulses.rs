//! Driving fields: sin^2-envelope pulses with an optional Stark-tracking chirp,
//! phase-locked trains and Gaussian focal sampling.
//!
//! A pulse starting at `t0` with `N` cycles of period `T = 2 pi / omega0` is
//!
//! ```text
//! E(t) = E0 cos(omega0 s + a S(s)) sin^2(pi s / (N T)),   s = t - t0 in [0, N T]
//! ```
//!
//! where `S(s)` is the running integral of the unchirped `E^2`. `S` is evaluated in
//! closed form, so `delta(s) = a S(s)` carries no quadrature error.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intensity (W/cm^2) corresponding to a field of 1 au.
pub const ATOMIC_INTENSITY: f64 = 3.50945e16;
/// Speed of light in au.
pub const SPEED_OF_LIGHT: f64 = 137.036;
/// Bohr radius in nm.
pub const BOHR_NM: f64 = 0.052918;
/// Atomic unit of time in fs.
pub const AU_TIME_FS: f64 = 0.0241888;

pub fn intensity_to_field(intensity: f64) -> f64 {
    (intensity / ATOMIC_INTENSITY).sqrt()
}

pub fn field_to_intensity(e0: f64) -> f64 {
    e0 * e0 * ATOMIC_INTENSITY
}

pub fn wavelength_to_omega(lambda_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (lambda_nm / BOHR_NM)
}

pub fn omega_to_wavelength(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT * BOHR_NM / omega
}

pub fn fs_to_au(t_fs: f64) -> f64 {
    t_fs / AU_TIME_FS
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    /// Peak field (au).
    pub e0: f64,
    /// Carrier angular frequency (au).
    pub omega0: f64,
    pub n_cycles: u32,
    /// Stark-tracking constant `a` in `delta(t) = a * int E^2 dt`.
    #[serde(default)]
    pub chirp_a: f64,
    #[serde(default)]
    pub t_start: f64,
}

impl PulseSpec {
    pub fn new(e0: f64, omega0: f64, n_cycles: u32) -> Self {
        Self {
            e0,
            omega0,
            n_cycles,
            chirp_a: 0.0,
            t_start: 0.0,
        }
    }

    pub fn from_lab_units(intensity_w_cm2: f64, lambda_nm: f64, n_cycles: u32) -> Self {
        Self::new(intensity_to_field(intensity_w_cm2), wavelength_to_omega(lambda_nm), n_cycles)
    }

    pub fn with_chirp(mut self, a: f64) -> Self {
        self.chirp_a = a;
        self
    }

    pub fn starting_at(mut self, t_start: f64) -> Self {
        self.t_start = t_start;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e0.is_finite() && self.e0 >= 0.0) {
            return Err(Error::param("e0", format!("must be finite and >= 0, got {}", self.e0)));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::param("omega0", format!("must be > 0, got {}", self.omega0)));
        }
        if self.n_cycles < 1 {
            return Err(Error::param("n_cycles", "must be >= 1"));
        }
        if !self.chirp_a.is_finite() || !self.t_start.is_finite() {
            return Err(Error::param("chirp_a", "chirp and start time must be finite"));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega0
    }

    pub fn duration(&self) -> f64 {
        self.n_cycles as f64 * self.period()
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration()
    }

    pub fn intensity(&self) -> f64 {
        field_to_intensity(self.e0)
    }

    #[inline]
    fn local_time(&self, t: f64) -> Option<f64> {
        let s = t - self.t_start;
        if s >= 0.0 && s <= self.duration() {
            Some(s)
        } else {
            None
        }
    }

    /// `sin^2` envelope times `E0`; zero outside the support.
    pub fn envelope(&self, t: f64) -> f64 {
        match self.local_time(t) {
            Some(s) => {
                let e = (PI * s / self.duration()).sin();
                self.e0 * e * e
            }
            None => 0.0,
        }
    }

    /// Running integral of the unchirped `E^2` from the pulse start, clamped to the
    /// support.
    pub fn stark_area(&self, t: f64) -> f64 {
        let s = (t - self.t_start).clamp(0.0, self.duration());
        unchirped_e2_integral(self.e0, self.omega0, self.n_cycles, s)
    }

    /// Total `int E^2 dt` of the unchirped pulse; `3/16 E0^2 N T` for `N >= 2`.
    pub fn total_area(&self) -> f64 {
        unchirped_e2_integral(self.e0, self.omega0, self.n_cycles, self.duration())
    }

    /// Chirp phase `delta(t) = a S(t)`.
    pub fn chirp_phase(&self, t: f64) -> f64 {
        self.chirp_a * self.stark_area(t)
    }

    pub fn field_at(&self, t: f64) -> f64 {
        match self.local_time(t) {
            Some(s) => {
                let e = (PI * s / self.duration()).sin();
                let phase = self.omega0 * s + self.chirp_a * unchirped_e2_integral(self.e0, self.omega0, self.n_cycles, s);
                self.e0 * phase.cos() * e * e
            }
            None => 0.0,
        }
    }

    /// Instantaneous carrier frequency `omega0 + a E_unchirped^2(t)`.
    pub fn instantaneous_omega(&self, t: f64) -> f64 {
        match self.local_time(t) {
            Some(s) => {
                let e = (PI * s / self.duration()).sin();
                let f = self.e0 * (self.omega0 * s).cos() * e * e;
                self.omega0 + self.chirp_a * f * f
            }
            None => self.omega0,
        }
    }
}

#[inline]
fn cos_integral(k: f64, s: f64) -> f64 {
    if k == 0.0 {
        s
    } else {
        (k * s).sin() / k
    }
}

/// `int_0^s E0^2 cos^2(w u) sin^4(pi u / (N T)) du` in closed form.
fn unchirped_e2_integral(e0: f64, omega: f64, n_cycles: u32, s: f64) -> f64 {
    // sin^4 = 3/8 - 1/2 cos(W u) + 1/8 cos(2 W u) with W = omega / N
    let w = omega / n_cycles as f64;
    let two = 2.0 * omega;
    let slow = 3.0 / 8.0 * s - 0.5 * cos_integral(w, s) + 0.125 * cos_integral(2.0 * w, s);
    let fast = 3.0 / 8.0 * cos_integral(two, s) - 0.25 * (cos_integral(two - w, s) + cos_integral(two + w, s))
        + 0.0625 * (cos_integral(two - 2.0 * w, s) + cos_integral(two + 2.0 * w, s));
    0.5 * e0 * e0 * (slow + fast)
}

/// Sum of all pulses at `t`.
pub fn total_field(pulses: &[PulseSpec], t: f64) -> f64 {
    pulses.iter().map(|p| p.field_at(t)).sum()
}

/// Earliest start and latest end over a pulse list.
pub fn support(pulses: &[PulseSpec]) -> Option<(f64, f64)> {
    let start = pulses.iter().map(|p| p.t_start).fold(f64::INFINITY, f64::min);
    let end = pulses.iter().map(|p| p.t_end()).fold(f64::NEG_INFINITY, f64::max);
    if pulses.is_empty() {
        None
    } else {
        Some((start, end))
    }
}

/// `(t, E(t))` samples on `[t0, t1]` with step `dt`, both ends included.
pub fn sample_field(pulses: &[PulseSpec], t0: f64, t1: f64, dt: f64) -> Vec<(f64, f64)> {
    let n = ((t1 - t0) / dt).ceil().max(0.0) as usize;
    (0..=n)
        .map(|k| {
            let t = (t0 + k as f64 * dt).min(t1);
            (t, total_field(pulses, t))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLock {
    Free,
    #[default]
    Locked,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub pulse: PulseSpec,
    pub n_pulses: u32,
    /// Dark time between bursts in carrier periods.
    pub gap_cycles: f64,
    #[serde(default)]
    pub phase_lock: PhaseLock,
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        if self.n_pulses < 1 {
            return Err(Error::param("n_pulses", "must be >= 1"));
        }
        if !(self.gap_cycles.is_finite() && self.gap_cycles >= 0.0) {
            return Err(Error::param("gap_cycles", "must be >= 0"));
        }
        Ok(())
    }
}

/// Expands a train into individual pulses. In locked mode the start-to-start
/// spacing is stretched to the nearest value at or above the requested one with
/// `delta_e * spacing` a multiple of `2 pi`.
pub fn make_train(spec: &TrainSpec, delta_e: f64) -> Vec<PulseSpec> {
    make_train_with_stark(spec, delta_e, 0.0)
}

/// Like [`make_train`], but locks on the full two-photon phase including the
/// differential Stark phase `stark_diff * area` accumulated during each burst
/// (`stark_diff` is `mu2_ii - mu2_ff`). A chirp restarts at every burst while the
/// Stark phase keeps running, so the plain `delta_e` lock leaves a residual phase
/// slip of `stark_diff * area` per burst.
pub fn make_train_with_stark(spec: &TrainSpec, delta_e: f64, stark_diff: f64) -> Vec<PulseSpec> {
    let p = spec.pulse;
    let requested = p.duration() + spec.gap_cycles * p.period();
    let spacing = match spec.phase_lock {
        PhaseLock::Free => requested,
        PhaseLock::Locked => locked_spacing(requested, delta_e, stark_diff * p.total_area()),
    };
    (0..spec.n_pulses)
        .map(|k| p.starting_at(p.t_start + k as f64 * spacing))
        .collect()
}

/// Smallest `t >= requested` with `delta_e t + extra_phase` a multiple of `2 pi`.
pub fn locked_spacing(requested: f64, delta_e: f64, extra_phase: f64) -> f64 {
    if delta_e == 0.0 {
        return requested;
    }
    let turns = ((delta_e * requested + extra_phase) / (2.0 * PI)).ceil();
    let t = (2.0 * PI * turns - extra_phase) / delta_e;
    if t < requested {
        (2.0 * PI * (turns + 1.0) - extra_phase) / delta_e
    } else {
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamProfile {
    pub w0: f64,
    /// On-axis peak intensity (W/cm^2).
    pub i_peak: f64,
    pub n_rings: u32,
}

impl BeamProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.w0.is_finite() && self.w0 > 0.0) {
            return Err(Error::param("w0", "must be > 0"));
        }
        if !(self.i_peak.is_finite() && self.i_peak >= 0.0) {
            return Err(Error::param("i_peak", "must be >= 0"));
        }
        if self.n_rings < 1 {
            return Err(Error::param("n_rings", "must be >= 1"));
        }
        Ok(())
    }

    pub fn intensity_at(&self, r: f64) -> f64 {
        self.i_peak * (-2.0 * r * r / (self.w0 * self.w0)).exp()
    }

    /// Radius where the local intensity is `fraction * i_peak`.
    pub fn radius_at_fraction(&self, fraction: f64) -> f64 {
        self.w0 * ((1.0 / fraction).ln() / 2.0).sqrt()
    }

    /// Sampled disc radius; beyond `2 w0` the intensity is below `e^-8` of peak.
    pub fn r_max(&self) -> f64 {
        2.0 * self.w0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalSample {
    pub radius: f64,
    pub intensity: f64,
    /// Annulus area.
    pub weight: f64,
}

/// Annuli `r_i = i dr` covering `[0, r_max]`; ring `i` spans `[(i - 1/2) dr,
/// (i + 1/2) dr]`, so the weights add up to `pi r_max^2` exactly and the first
/// sample sits on axis.
pub fn focal_samples(beam: &BeamProfile) -> Vec<FocalSample> {
    let n = beam.n_rings as usize;
    let dr = beam.r_max() / (n as f64 - 0.5);
    (0..n)
        .map(|i| {
            let r = i as f64 * dr;
            let weight = if i == 0 { PI * 0.25 * dr * dr } else { 2.0 * PI * r * dr };
            FocalSample {
                radius: r,
                intensity: beam.intensity_at(r),
                weight,
            }
        })
        .collect()
}
