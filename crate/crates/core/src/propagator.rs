//! Real-time propagation under the field-coupled Hamiltonian.
//!
//! Crank-Nicolson with Peaceman-Rachford splitting: `A = T_x + V/2 + x E(t_mid)`,
//! `B = T_R + V/2`, and per step
//!
//! ```text
//! (1 + i dt/2 A) psi* = (1 - i dt/2 B) psi
//! (1 + i dt/2 B) psi' = (1 - i dt/2 A) psi*
//! ```
//!
//! Each half step is a set of independent tridiagonal solves. Optional defect
//! corrections use the split operator as a preconditioner for the unsplit CN system.

use std::path::PathBuf;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolver::VibrationalBasis;
use crate::error::{Error, Result};
use crate::io::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::model::{build_potential, hamiltonian_kernel, inner_raw, Grid2D, ModelParams, Wavefunction2D};
use crate::pulses::{support, total_field, PulseSpec};

type C = Complex64;

const NORM_DRIFT_LIMIT: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationConfig {
    /// Largest time step (au); the span is divided into equal steps no longer than this.
    pub dt: f64,
    pub observe_stride: usize,
    #[serde(default = "default_true")]
    pub absorber_on: bool,
    /// Steps between checkpoints (0 = off); needs `checkpoint_path`.
    #[serde(default)]
    pub checkpoint_stride: usize,
    #[serde(default)]
    pub checkpoint_path: Option<PathBuf>,
    /// Defect-correction sweeps towards the unsplit CN solution per step.
    #[serde(default = "default_corrections")]
    pub cn_corrections: usize,
    /// Start time; defaults to the first pulse start.
    #[serde(default)]
    pub t_start: Option<f64>,
    /// End time; defaults to the last pulse end.
    #[serde(default)]
    pub t_end: Option<f64>,
}

fn default_true() -> bool {
    true
}

fn default_corrections() -> usize {
    3
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            observe_stride: 100,
            absorber_on: true,
            checkpoint_stride: 0,
            checkpoint_path: None,
            cn_corrections: 3,
            t_start: None,
            t_end: None,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.05) {
            return Err(Error::param("dt", format!("must be in (0, 0.05], got {}", self.dt)));
        }
        if self.observe_stride < 1 {
            return Err(Error::param("observe_stride", "must be >= 1"));
        }
        if self.checkpoint_stride > 0 && self.checkpoint_path.is_none() {
            return Err(Error::param("checkpoint_path", "required when checkpoint_stride > 0"));
        }
        Ok(())
    }

    fn span(&self, pulses: &[PulseSpec]) -> Result<(f64, f64)> {
        let sup = support(pulses);
        let t0 = self.t_start.or(sup.map(|s| s.0)).unwrap_or(0.0);
        let t1 = self
            .t_end
            .or(sup.map(|s| s.1))
            .ok_or_else(|| Error::param("t_end", "no pulses and no end time"))?;
        if !(t1 >= t0) {
            return Err(Error::param("t_end", format!("end {t1} precedes start {t0}")));
        }
        Ok((t0, t1))
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    /// `populations[nu][k]` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    pub norm: Vec<f64>,
    /// Norm removed by the absorber up to each sample.
    pub absorbed_norm: Vec<f64>,
    /// `E(t)` at each sample.
    pub field: Vec<f64>,
    pub final_state: Wavefunction2D,
    pub steps: usize,
    pub dt: f64,
}

impl TrajectoryResult {
    pub fn final_populations(&self) -> Vec<f64> {
        self.populations.iter().map(|p| *p.last().unwrap_or(&0.0)).collect()
    }
}

/// `|<Phi_nu|psi>|^2` for each basis state.
pub fn project_populations(psi: &Wavefunction2D, basis: &VibrationalBasis) -> Result<Vec<f64>> {
    psi.grid.ensure_same(&basis.grid)?;
    Ok(basis
        .states
        .par_iter()
        .map(|s| (inner_raw(&s.amplitudes, &psi.amplitudes) * psi.grid.cell_area()).norm_sqr())
        .collect())
}

fn norm_sqr(a: &Array2<C>, area: f64) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>() * area
}

const ROW_BLOCK: usize = 8;

/// Buffers reused across steps.
pub struct StepWorkspace {
    scratch: Array2<C>,
    rhs: Array2<C>,
    a_inv: Array2<C>,
}

/// Pre-factored pieces of the split step for one `(grid, dt)` pair. A negative
/// `dt` runs the same scheme backwards in time.
pub struct AdiStepper {
    grid: Grid2D,
    dt: f64,
    x: Vec<f64>,
    cx: f64,
    cr: f64,
    /// `2 cx + V/2` per point.
    a_diag: Array2<f64>,
    /// `2 cr + V/2` per point.
    b_diag: Array2<f64>,
    /// `2 cx + 2 cr + V` per point.
    h_diag: Array2<f64>,
    /// LU of `1 + i dt/2 B` along R, one column per x point.
    b_inv_pivot: Array2<C>,
    b_upper: Array2<C>,
}

impl AdiStepper {
    pub fn new(grid: &Grid2D, params: &ModelParams, dt: f64) -> Result<Self> {
        Self::with_split(grid, params, dt, 0.5)
    }

    /// `x_share` of the potential goes to the x half-step, the rest to the R half-step.
    pub fn with_split(grid: &Grid2D, params: &ModelParams, dt: f64, x_share: f64) -> Result<Self> {
        let potential = build_potential(grid, params)?.values;
        let cx = 1.0 / (2.0 * grid.dx() * grid.dx());
        let cr = 1.0 / (2.0 * params.mu_p * grid.d_r() * grid.d_r());
        let a_diag = potential.mapv(|v| 2.0 * cx + x_share * v);
        let b_diag = potential.mapv(|v| 2.0 * cr + (1.0 - x_share) * v);
        let h_diag = potential.mapv(|v| 2.0 * (cx + cr) + v);
        let alpha = C::new(0.0, 0.5 * dt);
        let off = -alpha * cr;
        let (n_r, n_x) = grid.shape();
        let mut b_inv_pivot = Array2::zeros((n_r, n_x));
        let mut b_upper = Array2::zeros((n_r, n_x));
        for j in 0..n_x {
            let mut m = C::new(1.0, 0.0) + alpha * b_diag[(0, j)];
            b_inv_pivot[(0, j)] = m.inv();
            b_upper[(0, j)] = off * b_inv_pivot[(0, j)];
            for i in 1..n_r {
                m = C::new(1.0, 0.0) + alpha * b_diag[(i, j)] - off * b_upper[(i - 1, j)];
                b_inv_pivot[(i, j)] = m.inv();
                b_upper[(i, j)] = off * b_inv_pivot[(i, j)];
            }
        }
        Ok(Self {
            grid: grid.clone(),
            dt,
            x: grid.x_points(),
            cx,
            cr,
            a_diag,
            b_diag,
            h_diag,
            b_inv_pivot,
            b_upper,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn alpha(&self) -> C {
        C::new(0.0, 0.5 * self.dt)
    }

    /// `out = psi + i sigma h` with `h = (diag + x field) psi - cx (x neighbours) - cr (R neighbours)`.
    #[allow(clippy::too_many_arguments)]
    fn stencil(&self, sigma: f64, diag: &Array2<f64>, field: f64, cx: f64, cr: f64, psi: &Array2<C>, out: &mut Array2<C>) {
        let (n_r, n_x) = self.grid.shape();
        let p = psi.as_slice().expect("standard layout");
        let d = diag.as_slice().expect("standard layout");
        let xs = &self.x;
        out.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n_x)
            .enumerate()
            .for_each(|(i, o)| {
                let cur = &p[i * n_x..(i + 1) * n_x];
                let dr = &d[i * n_x..(i + 1) * n_x];
                for (((o, &c), &dv), &x) in o.iter_mut().zip(cur).zip(dr).zip(xs) {
                    *o = c * (dv + x * field);
                }
                if cx != 0.0 {
                    for (o, &c) in o[1..].iter_mut().zip(&cur[..n_x - 1]) {
                        *o -= c * cx;
                    }
                    for (o, &c) in o[..n_x - 1].iter_mut().zip(&cur[1..]) {
                        *o -= c * cx;
                    }
                }
                if cr != 0.0 {
                    if i > 0 {
                        for (o, &c) in o.iter_mut().zip(&p[(i - 1) * n_x..i * n_x]) {
                            *o -= c * cr;
                        }
                    }
                    if i + 1 < n_r {
                        for (o, &c) in o.iter_mut().zip(&p[(i + 1) * n_x..(i + 2) * n_x]) {
                            *o -= c * cr;
                        }
                    }
                }
                for (o, &c) in o.iter_mut().zip(cur) {
                    *o = C::new(c.re - sigma * o.im, c.im + sigma * o.re);
                }
            });
    }

    /// Pivot reciprocals of `1 + i dt/2 A(E)` for every row. Rows are handled
    /// in interleaved blocks so the divisions of independent rows overlap.
    fn factor_a(&self, field: f64, inv: &mut Array2<C>) {
        let alpha = self.alpha();
        let off = -alpha * self.cx;
        let n_x = self.grid.n_x;
        let xs = &self.x;
        inv.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n_x * ROW_BLOCK)
            .zip(self.a_diag.as_slice().expect("standard layout").par_chunks(n_x * ROW_BLOCK))
            .for_each(|(inv, d)| {
                let rows = inv.len() / n_x;
                for r in 0..rows {
                    inv[r * n_x] = (C::new(1.0, 0.0) + alpha * (d[r * n_x] + xs[0] * field)).inv();
                }
                for j in 1..n_x {
                    for r in 0..rows {
                        let k = r * n_x + j;
                        let m = C::new(1.0, 0.0) + alpha * (d[k] + xs[j] * field) - off * off * inv[k - 1];
                        inv[k] = m.inv();
                    }
                }
            });
    }

    /// In place: `psi <- (1 + i dt/2 A(E))^{-1} psi` from the pivots of [`Self::factor_a`].
    fn solve_a(&self, inv: &Array2<C>, psi: &mut Array2<C>) {
        let off = -self.alpha() * self.cx;
        let n_x = self.grid.n_x;
        psi.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n_x * ROW_BLOCK)
            .zip(inv.as_slice().expect("standard layout").par_chunks(n_x * ROW_BLOCK))
            .for_each(|(v, inv)| {
                let rows = v.len() / n_x;
                for r in 0..rows {
                    v[r * n_x] *= inv[r * n_x];
                }
                for j in 1..n_x {
                    for r in 0..rows {
                        let k = r * n_x + j;
                        v[k] = (v[k] - off * v[k - 1]) * inv[k];
                    }
                }
                for j in (0..n_x - 1).rev() {
                    for r in 0..rows {
                        let k = r * n_x + j;
                        v[k] -= off * inv[k] * v[k + 1];
                    }
                }
            });
    }

    /// In place: `psi <- (1 + i dt/2 B)^{-1} psi` using the stored column factors.
    fn solve_b(&self, psi: &mut Array2<C>) {
        let n_r = self.grid.n_r;
        let off = -self.alpha() * self.cr;
        for i in 0..n_r {
            if i == 0 {
                psi.row_mut(0).zip_mut_with(&self.b_inv_pivot.row(0), |v, &p| *v *= p);
            } else {
                let (prev, mut cur) = psi.multi_slice_mut((ndarray::s![i - 1, ..], ndarray::s![i, ..]));
                ndarray::Zip::from(&mut cur)
                    .and(&prev)
                    .and(&self.b_inv_pivot.row(i))
                    .for_each(|c, &pv, &p| *c = (*c - off * pv) * p);
            }
        }
        for i in (0..n_r - 1).rev() {
            let (mut cur, next) = psi.multi_slice_mut((ndarray::s![i, ..], ndarray::s![i + 1, ..]));
            ndarray::Zip::from(&mut cur)
                .and(&next)
                .and(&self.b_upper.row(i))
                .for_each(|c, &nv, &u| *c -= u * nv);
        }
    }

    pub fn workspace(&self) -> StepWorkspace {
        let z = Array2::zeros(self.grid.shape());
        StepWorkspace {
            scratch: z.clone(),
            rhs: z.clone(),
            a_inv: z,
        }
    }

    /// One split step with the coupling evaluated at `field`, followed by
    /// `corrections` defect-correction sweeps towards the unsplit CN solution.
    pub fn step(&self, psi: &mut Array2<C>, field: f64, corrections: usize, ws: &mut StepWorkspace) {
        let sigma = 0.5 * self.dt;
        self.factor_a(field, &mut ws.a_inv);
        if corrections > 0 {
            self.apply_h(-sigma, field, psi, &mut ws.rhs);
        }
        self.stencil(-sigma, &self.b_diag, 0.0, 0.0, self.cr, psi, &mut ws.scratch);
        self.solve_a(&ws.a_inv, &mut ws.scratch);
        self.stencil(-sigma, &self.a_diag, field, self.cx, 0.0, &ws.scratch, psi);
        self.solve_b(psi);
        for _ in 0..corrections {
            // r = b - (1 + alpha H) psi;  psi += (1 + alpha B)^{-1} (1 + alpha A)^{-1} r
            self.apply_h(sigma, field, psi, &mut ws.scratch);
            ws.scratch.zip_mut_with(&ws.rhs, |s, &r| *s = r - *s);
            self.solve_a(&ws.a_inv, &mut ws.scratch);
            self.solve_b(&mut ws.scratch);
            *psi += &ws.scratch;
        }
    }

    /// `out = (1 + i sigma H(E)) psi`.
    pub fn apply_h(&self, sigma: f64, field: f64, psi: &Array2<C>, out: &mut Array2<C>) {
        self.stencil(sigma, &self.h_diag, field, self.cx, self.cr, psi, out);
    }
}

/// Dense banded reference: one unsplit Crank-Nicolson step by banded LU of
/// `1 + i dt/2 H` (bandwidth `n_x`). Intended for small grids.
pub struct BandedCnReference {
    grid: Grid2D,
    potential: Array2<f64>,
    mu_p: f64,
    dt: f64,
}

impl BandedCnReference {
    pub fn new(grid: &Grid2D, params: &ModelParams, dt: f64) -> Result<Self> {
        if grid.len() > 16_384 {
            return Err(Error::param("grid", "banded reference limited to 16384 points"));
        }
        Ok(Self {
            grid: grid.clone(),
            potential: build_potential(grid, params)?.values,
            mu_p: params.mu_p,
            dt,
        })
    }

    pub fn step(&self, psi: &mut Array2<C>, field: f64) {
        let (n_r, n_x) = self.grid.shape();
        let n = n_r * n_x;
        let w = n_x;
        let alpha = C::new(0.0, 0.5 * self.dt);
        let cx = 1.0 / (2.0 * self.grid.dx() * self.grid.dx());
        let cr = 1.0 / (2.0 * self.mu_p * self.grid.d_r() * self.grid.d_r());
        // band[k][w + d] holds A[k][k + d] for d in -w..=w
        let width = 2 * w + 1;
        let mut band = vec![C::default(); n * width];
        let xs = self.grid.x_points();
        for i in 0..n_r {
            for j in 0..n_x {
                let k = i * n_x + j;
                let row = &mut band[k * width..(k + 1) * width];
                row[w] = C::new(1.0, 0.0) + alpha * (2.0 * cx + 2.0 * cr + self.potential[(i, j)] + xs[j] * field);
                if j > 0 {
                    row[w - 1] = -alpha * cx;
                }
                if j + 1 < n_x {
                    row[w + 1] = -alpha * cx;
                }
                if i > 0 {
                    row[0] = -alpha * cr;
                }
                if i + 1 < n_r {
                    row[2 * w] = -alpha * cr;
                }
            }
        }
        // right-hand side (1 - alpha H) psi
        let mut hpsi = Array2::zeros(psi.dim());
        hamiltonian_kernel(&self.grid, &self.potential, self.mu_p, field, psi, &mut hpsi);
        let mut rhs: Vec<C> = psi.iter().zip(hpsi.iter()).map(|(p, h)| p - alpha * h).collect();
        // LU without pivoting; the Hermitian part of the matrix is the identity
        for k in 0..n {
            let piv = band[k * width + w];
            let last = (k + w).min(n - 1);
            for r in k + 1..=last {
                let l = band[r * width + w - (r - k)] / piv;
                if l == C::default() {
                    continue;
                }
                band[r * width + w - (r - k)] = l;
                for c in k + 1..=(k + w).min(n - 1) {
                    let u = band[k * width + w + (c - k)];
                    band[r * width + w + c - r] -= l * u;
                }
                rhs[r] = rhs[r] - l * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let mut acc = rhs[k];
            for c in k + 1..=(k + w).min(n - 1) {
                acc -= band[k * width + w + (c - k)] * rhs[c];
            }
            rhs[k] = acc / band[k * width + w];
        }
        for (p, v) in psi.iter_mut().zip(rhs) {
            *p = v;
        }
    }
}

struct RunState {
    psi: Array2<C>,
    step: usize,
    absorbed: f64,
}

fn observe(
    out: &mut TrajectoryResult,
    psi: &Array2<C>,
    basis: &VibrationalBasis,
    t: f64,
    field: f64,
    absorbed: f64,
) {
    let area = basis.grid.cell_area();
    out.times.push(t);
    out.field.push(field);
    out.norm.push(norm_sqr(psi, area));
    out.absorbed_norm.push(absorbed);
    let pops: Vec<f64> = basis
        .states
        .par_iter()
        .map(|s| (inner_raw(&s.amplitudes, psi) * area).norm_sqr())
        .collect();
    for (series, p) in out.populations.iter_mut().zip(pops) {
        series.push(p);
    }
}

/// Propagates `psi0` through the pulses, sampling observers every
/// `observe_stride` steps and at the final time.
pub fn propagate(
    psi0: &Wavefunction2D,
    pulses: &[PulseSpec],
    params: &ModelParams,
    basis: &VibrationalBasis,
    cfg: &PropagationConfig,
) -> Result<TrajectoryResult> {
    let state = RunState {
        psi: psi0.amplitudes.as_standard_layout().to_owned(),
        step: 0,
        absorbed: 0.0,
    };
    run(psi0, state, pulses, params, basis, cfg)
}

/// Continues a run from a checkpoint written by [`propagate`] with the same
/// pulses and configuration. The final state is bit-identical to an
/// uninterrupted run.
pub fn resume(
    checkpoint_path: &std::path::Path,
    pulses: &[PulseSpec],
    params: &ModelParams,
    basis: &VibrationalBasis,
    cfg: &PropagationConfig,
) -> Result<TrajectoryResult> {
    let ck = read_checkpoint(checkpoint_path)?;
    let psi0 = ck.wavefunction;
    let state = RunState {
        psi: psi0.amplitudes.clone(),
        step: ck.step as usize,
        absorbed: ck.absorbed,
    };
    run(&psi0, state, pulses, params, basis, cfg)
}

fn run(
    psi0: &Wavefunction2D,
    mut state: RunState,
    pulses: &[PulseSpec],
    params: &ModelParams,
    basis: &VibrationalBasis,
    cfg: &PropagationConfig,
) -> Result<TrajectoryResult> {
    cfg.validate()?;
    params.validate()?;
    let grid = &psi0.grid;
    grid.ensure_same(&basis.grid)?;
    for p in pulses {
        p.validate()?;
    }
    let (t0, t1) = cfg.span(pulses)?;
    let n_steps = ((t1 - t0) / cfg.dt).ceil() as usize;
    let dt = if n_steps == 0 { cfg.dt } else { (t1 - t0) / n_steps as f64 };
    let stepper = AdiStepper::new(grid, params, dt)?;
    let mask = cfg.absorber_on.then(|| grid.absorber_mask());
    let area = grid.cell_area();
    let time = |k: usize| t0 + k as f64 * dt;

    let mut out = TrajectoryResult {
        times: Vec::new(),
        populations: vec![Vec::new(); basis.len()],
        norm: Vec::new(),
        absorbed_norm: Vec::new(),
        field: Vec::new(),
        final_state: Wavefunction2D::zeros(grid),
        steps: n_steps,
        dt,
    };
    let start_norm = norm_sqr(&state.psi, area) + state.absorbed;
    observe(&mut out, &state.psi, basis, time(state.step), total_field(pulses, time(state.step)), state.absorbed);
    let mut ws = stepper.workspace();
    while state.step < n_steps {
        let k = state.step;
        let field = total_field(pulses, time(k) + 0.5 * dt);
        stepper.step(&mut state.psi, field, cfg.cn_corrections, &mut ws);
        if let Some(m) = &mask {
            let before = norm_sqr(&state.psi, area);
            state.psi.zip_mut_with(m, |p, &w| *p *= w);
            state.absorbed += before - norm_sqr(&state.psi, area);
        }
        state.step += 1;
        let k = state.step;
        let at_obs = k % cfg.observe_stride == 0 || k == n_steps;
        if at_obs {
            if !state.psi.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::NonFinite { step: k, time: time(k) });
            }
            observe(&mut out, &state.psi, basis, time(k), total_field(pulses, time(k)), state.absorbed);
            if mask.is_none() {
                let drift = (out.norm.last().unwrap() - start_norm).abs();
                if drift > NORM_DRIFT_LIMIT {
                    return Err(Error::NormDrift { step: k, drift, limit: NORM_DRIFT_LIMIT });
                }
            }
        }
        if cfg.checkpoint_stride > 0 && k % cfg.checkpoint_stride == 0 && k < n_steps {
            let path = cfg.checkpoint_path.as_ref().expect("validated");
            write_checkpoint(
                path,
                &Checkpoint {
                    step: k as u64,
                    time: time(k),
                    absorbed: state.absorbed,
                    wavefunction: Wavefunction2D {
                        amplitudes: state.psi.clone(),
                        grid: grid.clone(),
                    },
                },
            )?;
        }
    }
    out.final_state = Wavefunction2D {
        amplitudes: state.psi,
        grid: grid.clone(),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GridSpec;

    fn tiny() -> Grid2D {
        Grid2D::new(GridSpec {
            d_r: 0.1,
            dx: 0.4,
            r_min: 0.5,
            r_max: 6.8,
            x_min: -12.4,
            x_max: 12.4,
            absorber_width_r: 1.0,
            absorber_width_x: 2.0,
        })
        .unwrap()
    }

    fn packet(g: &Grid2D) -> Array2<C> {
        let mut w = Wavefunction2D::from_fn(g, |r, x| {
            C::from_polar((-(r - 2.4f64).powi(2) * 4.0 - x * x / 2.0).exp(), 0.3 * x + 1.0 * r)
        });
        w.normalize();
        w.amplitudes
    }

    #[test]
    fn plain_split_step_conserves_the_b_weighted_norm() {
        // PR steps are similar to a product of Cayley transforms through (1 + i dt/2 B)
        let g = tiny();
        let st = AdiStepper::new(&g, &ModelParams::default(), 0.05).unwrap();
        let mut psi = packet(&g);
        let mut ws = st.workspace();
        let mut bpsi = Array2::zeros(g.shape());
        let weighted = |psi: &Array2<C>, out: &mut Array2<C>| {
            st.stencil(0.025, &st.b_diag, 0.0, 0.0, st.cr, psi, out);
            norm_sqr(out, g.cell_area())
        };
        let w0 = weighted(&psi, &mut bpsi);
        for k in 0..200 {
            st.step(&mut psi, 0.03 * (k as f64 * 0.01).sin(), 0, &mut ws);
        }
        assert!((weighted(&psi, &mut bpsi) - w0).abs() < 1e-12);
    }

    #[test]
    fn corrected_step_is_unitary() {
        let g = tiny();
        let st = AdiStepper::new(&g, &ModelParams::default(), 0.05).unwrap();
        let mut psi = packet(&g);
        let mut ws = st.workspace();
        for k in 0..200 {
            st.step(&mut psi, 0.03 * (k as f64 * 0.01).sin(), 4, &mut ws);
        }
        assert!((norm_sqr(&psi, g.cell_area()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corrected_step_converges_to_banded_cn() {
        let g = tiny();
        let p = ModelParams::default();
        let st = AdiStepper::new(&g, &p, 0.05).unwrap();
        let reference = BandedCnReference::new(&g, &p, 0.05).unwrap();
        let mut a = packet(&g);
        let mut b = a.clone();
        let mut scratch = st.workspace();
        for _ in 0..10 {
            st.step(&mut a, 0.02, 8, &mut scratch);
            reference.step(&mut b, 0.02);
        }
        let d = norm_sqr(&(&a - &b), g.cell_area()).sqrt();
        assert!(d < 1e-11, "{d}");
    }

    #[test]
    fn backward_step_undoes_forward_step() {
        let g = tiny();
        let p = ModelParams::default();
        let fwd = AdiStepper::new(&g, &p, 0.05).unwrap();
        let bwd = AdiStepper::new(&g, &p, -0.05).unwrap();
        let psi0 = packet(&g);
        let mut psi = psi0.clone();
        let mut scratch = fwd.workspace();
        fwd.step(&mut psi, 0.04, 0, &mut scratch);
        bwd.step(&mut psi, 0.04, 0, &mut scratch);
        let d = norm_sqr(&(&psi - &psi0), g.cell_area()).sqrt();
        assert!(d < 1e-12, "{d}");
    }
}
