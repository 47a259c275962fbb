//! Reduced model: a few vibrational amplitudes coupled through `E^2(t)`,
//!
//! ```text
//! i dc_a/dt = -E^2(t) sum_b mu2[a][b] exp(i (E_a - E_b) t) c_b
//! ```
//!
//! with the full oscillating `E^2` (no cycle averaging), integrated by classical RK4
//! with a step-halving check. The two-level case is the `N = 2` instance.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulses::{support, PulseSpec, ATOMIC_INTENSITY};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelParams {
    /// `E_f - E_i` (au).
    pub delta_e: f64,
    pub mu2_if: f64,
    /// Reverse coupling; used only when `hermitize` is false.
    #[serde(default)]
    pub mu2_fi: Option<f64>,
    pub mu2_ii: f64,
    pub mu2_ff: f64,
    #[serde(default = "default_true")]
    pub hermitize: bool,
}

fn default_true() -> bool {
    true
}

impl TwoLevelParams {
    /// Transition values quoted for `0 -> 2` at 5059.3 nm.
    pub fn reference_0_2() -> Self {
        Self {
            delta_e: 2.0 * 9.00e-3,
            mu2_if: 0.255,
            mu2_fi: None,
            mu2_ii: 0.0,
            mu2_ff: 2.66,
            hermitize: true,
        }
    }

    pub fn stark_difference(&self) -> f64 {
        self.mu2_ii - self.mu2_ff
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta_e", self.delta_e),
            ("mu2_if", self.mu2_if),
            ("mu2_ii", self.mu2_ii),
            ("mu2_ff", self.mu2_ff),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.mu2_fi.is_some_and(|v| !v.is_finite()) {
            return Err(Error::param("mu2_fi", "must be finite"));
        }
        Ok(())
    }

    pub fn levels(&self) -> LevelSystem {
        let back = if self.hermitize {
            self.mu2_if
        } else {
            self.mu2_fi.unwrap_or(self.mu2_if)
        };
        LevelSystem {
            energies: vec![0.0, self.delta_e],
            mu2: vec![vec![self.mu2_ii, self.mu2_if], vec![back, self.mu2_ff]],
        }
    }
}

/// `a = (mu2_ii - mu2_ff) / 2`.
pub fn predict_chirp_constant(params: &TwoLevelParams) -> f64 {
    0.5 * params.stark_difference()
}

/// `N` levels with field-free energies and the coupling matrix `mu2[a][b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSystem {
    pub energies: Vec<f64>,
    pub mu2: Vec<Vec<f64>>,
}

impl LevelSystem {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::param("energies", "empty level system"));
        }
        if self.mu2.len() != n || self.mu2.iter().any(|r| r.len() != n) {
            return Err(Error::param("mu2", format!("must be {n}x{n}")));
        }
        if self.energies.iter().chain(self.mu2.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::param("mu2", "non-finite entry"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelState {
    pub c_i: Complex64,
    pub c_f: Complex64,
    pub t: f64,
}

impl TwoLevelState {
    pub fn ground() -> Self {
        Self {
            c_i: Complex64::new(1.0, 0.0),
            c_f: Complex64::new(0.0, 0.0),
            t: 0.0,
        }
    }

    pub fn p_f(&self) -> f64 {
        self.c_f.norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c_i.norm_sqr() + self.c_f.norm_sqr()
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LevelSeries {
    pub times: Vec<f64>,
    pub amplitudes: Vec<Vec<Complex64>>,
    /// Step size actually used after the halving check.
    pub dt: f64,
    pub halving_deviation: f64,
}

impl LevelSeries {
    pub fn final_amplitudes(&self) -> &[Complex64] {
        self.amplitudes.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn final_populations(&self) -> Vec<f64> {
        self.final_amplitudes().iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn populations(&self, level: usize) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c[level].norm_sqr()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorOptions {
    /// Step as a fraction of the shortest carrier period; must be <= 1/100.
    pub steps_per_period: f64,
    /// Record every this many steps (0 = final state only).
    pub sample_every: usize,
    pub halving_tol: f64,
    pub max_refinements: u32,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            steps_per_period: 200.0,
            sample_every: 0,
            halving_tol: 1e-6,
            max_refinements: 4,
        }
    }
}

/// Disjoint intervals where some pulse is on.
fn active_windows(pulses: &[PulseSpec]) -> Vec<(f64, f64)> {
    let mut iv: Vec<(f64, f64)> = pulses.iter().filter(|p| p.e0 > 0.0).map(|p| (p.t_start, p.t_end())).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

struct Rhs<'a> {
    levels: &'a LevelSystem,
    pulses: &'a [PulseSpec],
}

impl Rhs<'_> {
    fn e2(&self, t: f64) -> f64 {
        let e: f64 = self.pulses.iter().map(|p| p.field_at(t)).sum();
        e * e
    }

    /// `dc/dt = i E^2 sum_b mu2[a][b] exp(i (E_a - E_b) t) c_b`.
    fn eval(&self, t: f64, e2: f64, c: &[Complex64], out: &mut [Complex64]) {
        let n = c.len();
        let phases: Vec<Complex64> = self.levels.energies.iter().map(|&e| Complex64::from_polar(1.0, e * t)).collect();
        for a in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..n {
                acc += self.levels.mu2[a][b] * phases[b].conj() * c[b];
            }
            out[a] = Complex64::new(0.0, e2) * phases[a] * acc;
        }
    }
}

fn rk4_run(levels: &LevelSystem, pulses: &[PulseSpec], c0: &[Complex64], t0: f64, dt_max: f64, sample_every: usize) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let rhs = Rhs { levels, pulses };
    let n = c0.len();
    let mut c = c0.to_vec();
    let mut times = vec![t0];
    let mut amps = vec![c.clone()];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n]);
    let mut tmp = vec![Complex64::default(); n];
    let mut step = 0usize;
    for (a, b) in active_windows(pulses) {
        if b <= t0 {
            continue;
        }
        let a = a.max(t0);
        let steps = ((b - a) / dt_max).ceil().max(1.0) as usize;
        let h = (b - a) / steps as f64;
        let mut e2_left = rhs.e2(a);
        for s in 0..steps {
            let t = a + s as f64 * h;
            let tm = t + 0.5 * h;
            let t1 = if s + 1 == steps { b } else { t + h };
            let e2_mid = rhs.e2(tm);
            let e2_right = rhs.e2(t1);
            rhs.eval(t, e2_left, &c, &mut k1);
            for i in 0..n {
                tmp[i] = c[i] + 0.5 * h * k1[i];
            }
            rhs.eval(tm, e2_mid, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = c[i] + 0.5 * h * k2[i];
            }
            rhs.eval(tm, e2_mid, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = c[i] + h * k3[i];
            }
            rhs.eval(t1, e2_right, &tmp, &mut k4);
            for i in 0..n {
                c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            e2_left = e2_right;
            step += 1;
            if sample_every > 0 && step % sample_every == 0 {
                times.push(t1);
                amps.push(c.clone());
            }
        }
        if sample_every == 0 || step % sample_every != 0 {
            times.push(b);
            amps.push(c.clone());
        }
    }
    (times, amps)
}

/// Integrates the level system over every pulse window starting from `c0` at
/// `t0`. Between pulses the amplitudes are constant in this picture. The run is
/// repeated at half the step; if the final amplitudes differ by more than the
/// tolerance the step is halved again, up to `max_refinements` times.
pub fn integrate_levels(levels: &LevelSystem, pulses: &[PulseSpec], c0: &[Complex64], t0: f64, opts: &IntegratorOptions) -> Result<LevelSeries> {
    levels.validate()?;
    if c0.len() != levels.len() {
        return Err(Error::param("c0", format!("expected {} amplitudes, got {}", levels.len(), c0.len())));
    }
    for p in pulses {
        p.validate()?;
    }
    if !(opts.steps_per_period >= 100.0) {
        return Err(Error::param("steps_per_period", "step must be at most 1/100 of the carrier period"));
    }
    let min_period = pulses.iter().map(|p| 2.0 * PI / p.omega0).fold(f64::INFINITY, f64::min);
    if !min_period.is_finite() {
        return Ok(LevelSeries {
            times: vec![t0],
            amplitudes: vec![c0.to_vec()],
            dt: 0.0,
            halving_deviation: 0.0,
        });
    }
    let mut dt = min_period / opts.steps_per_period;
    let mut sample_every = opts.sample_every;
    let mut coarse = rk4_run(levels, pulses, c0, t0, dt, sample_every);
    for _ in 0..=opts.max_refinements {
        let fine_every = if sample_every == 0 { 0 } else { 2 * sample_every };
        let fine = rk4_run(levels, pulses, c0, t0, 0.5 * dt, fine_every);
        let dev = coarse
            .1
            .last()
            .unwrap()
            .iter()
            .zip(fine.1.last().unwrap())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        if dev <= opts.halving_tol {
            return Ok(LevelSeries {
                times: coarse.0,
                amplitudes: coarse.1,
                dt,
                halving_deviation: dev,
            });
        }
        log::debug!("step halving deviation {dev:.2e} at dt = {dt:.3e}; refining");
        dt *= 0.5;
        sample_every = fine_every;
        coarse = fine;
    }
    let fine = rk4_run(levels, pulses, c0, t0, 0.5 * dt, 0);
    let dev = coarse
        .1
        .last()
        .unwrap()
        .iter()
        .zip(fine.1.last().unwrap())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    Err(Error::StepHalving { dt, deviation: dev })
}

/// Two-level run from `c0`; `dt` is the largest step allowed.
pub fn integrate_two_level(params: &TwoLevelParams, pulses: &[PulseSpec], c0: &TwoLevelState, dt: f64) -> Result<Vec<TwoLevelState>> {
    params.validate()?;
    let min_period = pulses.iter().map(|p| 2.0 * PI / p.omega0).fold(f64::INFINITY, f64::min);
    if min_period.is_finite() && !(dt > 0.0 && dt <= min_period / 100.0 * (1.0 + 1e-12)) {
        return Err(Error::param("dt", format!("must be in (0, T/100] = (0, {:.4}]", min_period / 100.0)));
    }
    let opts = IntegratorOptions {
        steps_per_period: if min_period.is_finite() { min_period / dt } else { 100.0 },
        sample_every: 1,
        ..IntegratorOptions::default()
    };
    let series = integrate_levels(&params.levels(), pulses, &[c0.c_i, c0.c_f], c0.t, &opts)?;
    Ok(series
        .times
        .iter()
        .zip(&series.amplitudes)
        .map(|(&t, c)| TwoLevelState { c_i: c[0], c_f: c[1], t })
        .collect())
}

/// Final `|c_f|^2` from the ground state, using the default step.
pub fn transfer(params: &TwoLevelParams, pulses: &[PulseSpec]) -> Result<f64> {
    let t0 = support(pulses).map(|s| s.0).unwrap_or(0.0);
    let c0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let s = integrate_levels(&params.levels(), pulses, &c0, t0, &IntegratorOptions::default())?;
    Ok(s.final_populations()[1])
}

/// First-order amplitude for `i -> f` from the ground state:
/// `c_f = i mu2_fi int E^2 exp(i dE t) dt` (Simpson on `n` panels per period).
pub fn perturbative_amplitude(params: &TwoLevelParams, pulses: &[PulseSpec], per_period: usize) -> Complex64 {
    let back = if params.hermitize { params.mu2_if } else { params.mu2_fi.unwrap_or(params.mu2_if) };
    let period = pulses.iter().map(|p| 2.0 * PI / p.omega0).fold(f64::INFINITY, f64::min);
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b) in active_windows(pulses) {
        let n = (((b - a) / period) * per_period as f64).ceil() as usize * 2;
        let h = (b - a) / n as f64;
        let mut local = Complex64::new(0.0, 0.0);
        for k in 0..=n {
            let t = a + k as f64 * h;
            let e: f64 = pulses.iter().map(|p| p.field_at(t)).sum();
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            local += w * e * e * Complex64::from_polar(1.0, params.delta_e * t);
        }
        acc += local * (h / 3.0);
    }
    Complex64::new(0.0, back) * acc
}

/// Envelope weight relating the peak detuning of a `sin^2` pulse to `E0^2`:
/// `Delta = (mu2_ii - mu2_ff) * KAPPA * E0^2 / 2`. The two-photon amplitude weights
/// the instantaneous Stark shift by the squared coupling envelope, giving
/// `<sin^8> / <sin^4> * 1/2 = 35/96`.
pub const PEAK_KAPPA: f64 = 35.0 / 96.0;

/// Plain time average of `E^2 / E0^2` over a `sin^2` pulse.
pub const MEAN_KAPPA: f64 = 3.0 / 16.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetuningScan {
    /// Peak intensity (W/cm^2).
    pub intensity: f64,
    pub omegas: Vec<f64>,
    pub populations: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub intensity: f64,
    pub omega_peak: f64,
    pub population_peak: f64,
    pub detuning: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetuningCalibration {
    pub reference_omega: f64,
    pub peaks: Vec<PeakFit>,
    /// `Delta = slope * I` through the origin (au per W/cm^2).
    pub slope: f64,
    /// Uncentered coefficient of determination of the through-origin fit.
    pub r_squared: f64,
    /// Ordinary least-squares line with intercept, for diagnostics.
    pub free_slope: f64,
    pub free_intercept: f64,
    pub kappa: f64,
    /// Recovered `mu2_ii - mu2_ff`.
    pub stark_difference: f64,
}

impl DetuningCalibration {
    pub fn chirp_constant(&self) -> f64 {
        0.5 * self.stark_difference
    }
}

/// Vertex of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if curv == 0.0 {
        return x[1];
    }
    // y = y0 + d1 (x - x0) + curv (x - x0)(x - x1)
    0.5 * (x[0] + x[1]) - d1 / (2.0 * curv)
}

pub fn find_peak(omegas: &[f64], populations: &[f64]) -> Result<(f64, f64)> {
    if omegas.len() != populations.len() || omegas.len() < 3 {
        return Err(Error::param("scan", "need at least three (omega, population) points"));
    }
    let k = populations
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    if k == 0 || k + 1 == omegas.len() {
        return Err(Error::PeakAtEdge { omega: omegas[k] });
    }
    let x = [omegas[k - 1], omegas[k], omegas[k + 1]];
    let y = [populations[k - 1], populations[k], populations[k + 1]];
    Ok((parabola_vertex(x, y), populations[k]))
}

pub fn calibrate_from_detuning(scans: &[DetuningScan], reference_omega: f64) -> Result<DetuningCalibration> {
    calibrate_from_detuning_with(scans, reference_omega, PEAK_KAPPA)
}

/// Locates each scan's peak, fits `Delta = s I` through the origin and converts
/// the slope to `mu2_ii - mu2_ff = 2 s I_au / kappa`. Rejects fewer than four
/// intensities or a fit with `R^2 <= 0.99`.
pub fn calibrate_from_detuning_with(scans: &[DetuningScan], reference_omega: f64, kappa: f64) -> Result<DetuningCalibration> {
    if scans.len() < 4 {
        return Err(Error::Calibration(format!("need at least 4 intensities, got {}", scans.len())));
    }
    let cal = fit_detuning(scans, reference_omega, kappa)?;
    if !(cal.r_squared > 0.99) {
        return Err(Error::Calibration(format!("through-origin fit R^2 = {:.4} < 0.99", cal.r_squared)));
    }
    Ok(cal)
}

/// The fit behind [`calibrate_from_detuning_with`] without the acceptance checks.
pub fn fit_detuning(scans: &[DetuningScan], reference_omega: f64, kappa: f64) -> Result<DetuningCalibration> {
    let mut peaks = Vec::with_capacity(scans.len());
    for s in scans {
        let (w, p) = find_peak(&s.omegas, &s.populations)?;
        peaks.push(PeakFit {
            intensity: s.intensity,
            omega_peak: w,
            population_peak: p,
            detuning: w - reference_omega,
        });
    }
    let xs: Vec<f64> = peaks.iter().map(|p| p.intensity).collect();
    let ys: Vec<f64> = peaks.iter().map(|p| p.detuning).collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| y * y).sum();
    let r_squared = 1.0 - ss_res / ss_tot;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let free_slope = cov / var;
    let free_intercept = my - free_slope * mx;
    Ok(DetuningCalibration {
        reference_omega,
        peaks,
        slope,
        r_squared,
        free_slope,
        free_intercept,
        kappa,
        stark_difference: 2.0 * slope * ATOMIC_INTENSITY / kappa,
    })
}

/// Peak detuning predicted for peak field `e0`.
pub fn predicted_detuning(stark_difference: f64, e0: f64, kappa: f64) -> f64 {
    0.5 * stark_difference * kappa * e0 * e0
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok((x, f(x)?))
}

/// Coupling `mu2_if` giving the largest transfer for `pulse`, searched over the
/// first Rabi lobe `(0, upper]`. Used when only the Stark difference of a
/// transition is known and the pulse is meant to transfer completely.
pub fn coupling_for_complete_transfer(base: &TwoLevelParams, pulse: &PulseSpec, upper: f64) -> Result<(f64, f64)> {
    let area = pulse.total_area();
    // RWA first-lobe guess: mu2 * area / 2 = pi / 2
    let guess = PI / area;
    let hi = upper.min(2.0 * guess);
    golden_max(0.25 * guess, hi, 1e-5 * guess, |m| {
        transfer(&TwoLevelParams { mu2_if: m, ..*base }, std::slice::from_ref(pulse))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::intensity_to_field;

    fn paper_pulse(n: u32) -> PulseSpec {
        PulseSpec::new(intensity_to_field(1e13), 9.0e-3, n)
    }

    #[test]
    fn zero_field_is_identity() {
        let p = TwoLevelParams::reference_0_2();
        let pulse = PulseSpec::new(0.0, 9.0e-3, 10);
        let c0 = TwoLevelState {
            c_i: Complex64::new(0.6, 0.0),
            c_f: Complex64::new(0.0, 0.8),
            t: 0.0,
        };
        let out = integrate_two_level(&p, &[pulse], &c0, pulse.period() / 100.0).unwrap();
        let last = out.last().unwrap();
        assert_eq!(last.c_i, c0.c_i);
        assert_eq!(last.c_f, c0.c_f);
    }

    #[test]
    fn chirp_constant_prediction() {
        let p = TwoLevelParams::reference_0_2();
        assert!((predict_chirp_constant(&p) + 1.33).abs() < 1e-12);
        let flat = TwoLevelParams { mu2_ff: 0.0, ..p };
        assert_eq!(predict_chirp_constant(&flat), 0.0);
    }

    #[test]
    fn norm_conserved_when_hermitian() {
        let p = TwoLevelParams::reference_0_2();
        let pulse = paper_pulse(280).with_chirp(-1.33);
        let out = integrate_two_level(&p, &[pulse], &TwoLevelState::ground(), pulse.period() / 400.0).unwrap();
        assert!(out.len() > 100_000);
        let worst = out.iter().map(|s| (s.norm_sqr() - 1.0).abs()).fold(0.0f64, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn weak_field_matches_first_order() {
        let p = TwoLevelParams {
            mu2_ii: 0.0,
            mu2_ff: 0.0,
            ..TwoLevelParams::reference_0_2()
        };
        let pulse = PulseSpec::new(intensity_to_field(1e11), 9.0e-3, 20);
        let exact = transfer(&p, &[pulse]).unwrap();
        let pert = perturbative_amplitude(&p, &[pulse], 400).norm_sqr();
        assert!((exact / pert - 1.0).abs() < 1e-3, "{exact} {pert}");
    }

    #[test]
    fn peak_vertex() {
        let xs: Vec<f64> = (0..21).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - (x - 1.234f64).powi(2)).collect();
        let (w, _) = find_peak(&xs, &ys).unwrap();
        assert!((w - 1.234).abs() < 1e-12);
        let mono: Vec<f64> = xs.clone();
        assert!(matches!(find_peak(&xs, &mono), Err(Error::PeakAtEdge { .. })));
    }

    #[test]
    fn golden_section_finds_maximum() {
        let (x, y) = golden_max(0.0, 3.0, 1e-9, |x| Ok((x - 1.1f64).sin().cos())).unwrap();
        assert!((x - 1.1).abs() < 1e-6 && (y - 1.0).abs() < 1e-12);
    }
}
