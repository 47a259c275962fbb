//! Fast numerical self-checks of the discretization and the propagator.

use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{relax_vibrational_basis_with, RelaxOptions, VibrationalBasis};
use crate::error::Result;
use crate::io::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::model::{apply_hamiltonian, build_potential, Grid2D, GridSpec, ModelParams, Wavefunction2D};
use crate::propagator::{propagate, AdiStepper, BandedCnReference, PropagationConfig};
use crate::pulses::PulseSpec;

type C = Complex64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    pub seconds: f64,
}

impl CheckResult {
    fn new(name: &str, value: f64, limit: f64, start: Instant) -> Self {
        Self {
            name: name.to_string(),
            value,
            limit,
            passed: value < limit,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationOptions {
    pub dt: f64,
    pub cn_corrections: usize,
    pub norm_steps: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        let p = PropagationConfig::default();
        Self {
            dt: p.dt,
            cn_corrections: p.cn_corrections,
            norm_steps: 100_000,
        }
    }
}

fn probe(grid: &Grid2D, kx: f64, kr: f64, r0: f64) -> Wavefunction2D {
    let mut w = Wavefunction2D::from_fn(grid, |r, x| {
        let g = (-(r - r0).powi(2) * 3.0 - x * x / 4.0).exp() * (1.0 + 0.3 * (5.0 * x * r).sin());
        C::from_polar(g, kx * x + kr * r)
    });
    w.normalize();
    w
}

fn dist(a: &Array2<C>, b: &Array2<C>, area: f64) -> f64 {
    (a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>() * area).sqrt()
}

/// `|<phi|H psi> - <H phi|psi>|`, relative, with a field on.
pub fn check_hermiticity(grid: &Grid2D, params: &ModelParams) -> Result<CheckResult> {
    let t = Instant::now();
    let v = build_potential(grid, params)?;
    let phi = probe(grid, 0.7, 0.3, 2.0);
    let psi = probe(grid, -0.4, 1.1, 2.6);
    let hpsi = apply_hamiltonian(&psi, &v, params, 0.03)?;
    let hphi = apply_hamiltonian(&phi, &v, params, 0.03)?;
    let lhs = phi.inner(&hpsi)?;
    let rhs = hphi.inner(&psi)?;
    let rel = (lhs - rhs).norm() / (phi.norm() * hpsi.norm());
    Ok(CheckResult::new("hermiticity", rel, 1e-12, t))
}

/// `H(E) P = P H(-E)` for the reflection `x -> -x`.
pub fn check_parity(grid: &Grid2D, params: &ModelParams) -> Result<CheckResult> {
    let t = Instant::now();
    if !grid.is_x_symmetric() {
        return Ok(CheckResult::new("parity", f64::INFINITY, 1e-12, t));
    }
    let v = build_potential(grid, params)?;
    let psi = probe(grid, 0.7, 0.3, 2.0);
    let mut worst: f64 = 0.0;
    for e in [0.0, 0.03] {
        let a = apply_hamiltonian(&psi.flip_x(), &v, params, e)?;
        let b = apply_hamiltonian(&psi, &v, params, -e)?.flip_x();
        worst = worst.max(dist(&a.amplitudes, &b.amplitudes, grid.cell_area()) / b.norm());
    }
    Ok(CheckResult::new("parity", worst, 1e-12, t))
}

/// Field-free evolution of a relaxed eigenstate: deviation of `<phi|psi(t)>`
/// from `exp(-i E t)`, with `E` the Rayleigh quotient on this grid.
pub fn check_stationary_phase(grid: &Grid2D, params: &ModelParams, state: &Wavefunction2D, opts: &ValidationOptions) -> Result<CheckResult> {
    let t = Instant::now();
    let v = build_potential(grid, params)?;
    let energy = state.inner(&apply_hamiltonian(state, &v, params, 0.0)?)?.re / state.norm_sqr();
    let dt = 0.01;
    let steps = 1000;
    let st = AdiStepper::new(grid, params, dt)?;
    let mut ws = st.workspace();
    let mut psi = state.amplitudes.clone();
    for _ in 0..steps {
        st.step(&mut psi, 0.0, opts.cn_corrections, &mut ws);
    }
    let evolved = Wavefunction2D {
        grid: grid.clone(),
        amplitudes: psi,
    };
    let c = state.inner(&evolved)? / state.norm_sqr();
    let dev = (c - C::from_polar(1.0, -energy * dt * steps as f64)).norm();
    Ok(CheckResult::new("stationary_phase", dev, 1e-4, t))
}

/// `|1 - norm|` after `opts.norm_steps` steps from `state` with a chirped
/// 10^13 W/cm^2 field on and no absorber.
pub fn check_norm(grid: &Grid2D, params: &ModelParams, state: &Wavefunction2D, opts: &ValidationOptions) -> Result<CheckResult> {
    let t = Instant::now();
    let st = AdiStepper::new(grid, params, opts.dt)?;
    let mut ws = st.workspace();
    let pulse = PulseSpec::from_lab_units(1e13, 5059.3, 280).with_chirp(-1.33);
    let mut psi = state.amplitudes.clone();
    let n0 = state.norm_sqr();
    for k in 0..opts.norm_steps {
        let tm = (k as f64 + 0.5) * opts.dt;
        st.step(&mut psi, pulse.field_at(tm), opts.cn_corrections, &mut ws);
    }
    let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_area();
    Ok(CheckResult::new("norm_conservation", (n0 - n).abs() / n0, 1e-8, t))
}

/// Grid with `64 x 64` points for the banded Crank-Nicolson comparison.
pub fn small_grid() -> Grid2D {
    Grid2D::new(GridSpec {
        d_r: 0.1,
        dx: 0.4,
        r_min: 0.5,
        r_max: 6.8,
        x_min: -12.6,
        x_max: 12.6,
        absorber_width_r: 1.0,
        absorber_width_x: 2.0,
    })
    .expect("valid grid")
}

/// `||psi_adi - psi_cn||` after 100 steps with a field, against an exact
/// banded solve of the unsplit Crank-Nicolson system.
pub fn check_adi_vs_cn(params: &ModelParams, opts: &ValidationOptions) -> Result<CheckResult> {
    let t = Instant::now();
    let g = small_grid();
    let st = AdiStepper::new(&g, params, opts.dt)?;
    let cn = BandedCnReference::new(&g, params, opts.dt)?;
    let mut ws = st.workspace();
    let mut a = probe(&g, 0.3, 1.0, 2.4).amplitudes;
    let mut b = a.clone();
    for k in 0..100 {
        let e = 0.02 * (k as f64 * 0.05).sin();
        st.step(&mut a, e, opts.cn_corrections, &mut ws);
        cn.step(&mut b, e);
    }
    Ok(CheckResult::new("adi_vs_cn", dist(&a, &b, g.cell_area()), 1e-6, t))
}

/// Largest change of any final population or of the norm when `dt` is halved,
/// for a one-cycle pulse from the ground state.
pub fn check_dt_halving(params: &ModelParams, basis: &VibrationalBasis, opts: &ValidationOptions) -> Result<CheckResult> {
    let t = Instant::now();
    let pulse = PulseSpec::from_lab_units(1e13, 3441.0, 1);
    let run = |dt: f64| {
        let cfg = PropagationConfig {
            dt,
            observe_stride: usize::MAX,
            cn_corrections: opts.cn_corrections,
            ..PropagationConfig::default()
        };
        propagate(&basis.states[0], &[pulse], params, basis, &cfg)
    };
    let (coarse, fine) = (run(opts.dt)?, run(0.5 * opts.dt)?);
    let mut dev = (coarse.norm.last().unwrap() - fine.norm.last().unwrap()).abs();
    for (p, q) in coarse.final_populations().iter().zip(fine.final_populations()) {
        dev = dev.max((p - q).abs());
    }
    Ok(CheckResult::new("dt_halving", dev, 1e-4, t))
}

/// Writes and rereads a propagated state; counts differing bits.
pub fn check_checkpoint_round_trip(grid: &Grid2D, params: &ModelParams) -> Result<CheckResult> {
    let t = Instant::now();
    let st = AdiStepper::new(grid, params, 0.05)?;
    let mut ws = st.workspace();
    let mut psi = probe(grid, 0.5, 0.2, 2.0).amplitudes;
    for _ in 0..10 {
        st.step(&mut psi, 0.01, 1, &mut ws);
    }
    let ck = Checkpoint {
        step: 10,
        time: 0.5,
        absorbed: 0.0,
        wavefunction: Wavefunction2D {
            grid: grid.clone(),
            amplitudes: psi,
        },
    };
    let path = std::env::temp_dir().join(format!("vibcontrol-validate-{}.ckpt", std::process::id()));
    write_checkpoint(&path, &ck)?;
    let back = read_checkpoint(&path);
    let _ = std::fs::remove_file(&path);
    let back = back?;
    let differing = ck
        .wavefunction
        .amplitudes
        .iter()
        .zip(back.wavefunction.amplitudes.iter())
        .filter(|(a, b)| a.re.to_bits() != b.re.to_bits() || a.im.to_bits() != b.im.to_bits())
        .count();
    let same_meta = back.step == ck.step && back.time.to_bits() == ck.time.to_bits() && back.wavefunction.grid == *grid;
    let value = differing as f64 + if same_meta { 0.0 } else { 1.0 };
    Ok(CheckResult::new("checkpoint_round_trip", value, 0.5, t))
}

/// Runs every check. `basis` needs at least one state; it is relaxed here
/// (three states) when not supplied.
pub fn run_suite(grid: &Grid2D, params: &ModelParams, basis: Option<&VibrationalBasis>, opts: &ValidationOptions) -> Result<Vec<CheckResult>> {
    let owned;
    let basis = match basis {
        Some(b) => b,
        None => {
            owned = relax_vibrational_basis_with(grid, params, 3, &RelaxOptions::default())?;
            &owned
        }
    };
    Ok(vec![
        check_hermiticity(grid, params)?,
        check_parity(grid, params)?,
        check_stationary_phase(grid, params, &basis.states[0], opts)?,
        check_norm(grid, params, &basis.states[0], opts)?,
        check_adi_vs_cn(params, opts)?,
        check_dt_halving(params, basis, opts)?,
        check_checkpoint_round_trip(grid, params)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_checks_pass_on_small_grid() {
        let g = small_grid();
        let p = ModelParams::default();
        let o = ValidationOptions::default();
        for c in [check_hermiticity(&g, &p).unwrap(), check_parity(&g, &p).unwrap(), check_adi_vs_cn(&p, &o).unwrap(), check_checkpoint_round_trip(&g, &p).unwrap()] {
            assert!(c.passed, "{c:?}");
        }
    }
}
