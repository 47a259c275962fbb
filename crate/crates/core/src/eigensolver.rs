//! Field-free eigenstates.
//!
//! * Born-Oppenheimer curves `E_g(R)`, `E_u(R)` with the transition dipole, from
//!   the 1D electronic problem at each `R`.
//! * Vibrational levels and the two-photon couplings `mu2[a][b]` built from a
//!   box-normalized continuum on `E_u`.
//! * The 2D vibrational basis by Crank-Nicolson imaginary-time relaxation, seeded
//!   with Born-Oppenheimer products and polished by Rayleigh-Ritz on a small block.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_potential, hamiltonian_kernel, Grid2D, ModelParams, Wavefunction2D};
use crate::tridiag::{all_eigenpairs, lowest_eigenpairs, TridiagFactor};
use crate::twolevel::TwoLevelParams;

/// Largest supported basis.
pub const MAX_STATES: usize = 7;

#[derive(Clone, Debug)]
pub struct BOCurves {
    pub r_samples: Vec<f64>,
    pub e_g: Vec<f64>,
    pub e_u: Vec<f64>,
    /// `[i_R, j_x]`, normalized with the `dx` measure, positive at `x = 0`.
    pub phi_g: Array2<f64>,
    /// `[i_R, j_x]`, positive for `x > 0`.
    pub phi_u: Array2<f64>,
    pub dipole_gu: Vec<f64>,
    pub x_points: Vec<f64>,
    pub dx: f64,
    /// Samples where `E_u - E_g` fell below `1e-10` au.
    pub near_degenerate: Vec<usize>,
}

impl BOCurves {
    pub fn d_r(&self) -> Option<f64> {
        if self.r_samples.len() < 2 {
            return None;
        }
        let h = self.r_samples[1] - self.r_samples[0];
        let uniform = self
            .r_samples
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() < 1e-9 * h.abs().max(1.0));
        uniform.then_some(h)
    }

    pub fn minimum(&self) -> (f64, f64) {
        let (i, e) = self
            .e_g
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty curves");
        (self.r_samples[i], *e)
    }
}

struct ElectronicPair {
    e_g: f64,
    e_u: f64,
    phi_g: Vec<f64>,
    phi_u: Vec<f64>,
}

/// Lowest even and odd electronic states at fixed `R`, energies without the
/// nuclear repulsion.
fn electronic_pair(xs: &[f64], dx: f64, params: &ModelParams, r: f64) -> ElectronicPair {
    let n = xs.len();
    let off = -0.5 / (dx * dx);
    let symmetric = n % 2 == 1 && (xs[0] + xs[n - 1]).abs() < 1e-9 * dx;
    let mut phi_g = vec![0.0; n];
    let mut phi_u = vec![0.0; n];
    let (e_g, e_u);
    if symmetric {
        // half line j >= m; even states see a doubled coupling to the mirror point,
        // made symmetric by scaling the centre amplitude by sqrt(2)
        let m = n / 2;
        let diag: Vec<f64> = xs[m..].iter().map(|&x| 1.0 / (dx * dx) + params.electron_potential(x, r)).collect();
        let mut off_even = vec![off; diag.len() - 1];
        off_even[0] = std::f64::consts::SQRT_2 * off;
        let (ev, vv) = lowest_eigenpairs(&diag, &off_even, 1);
        let (ou, vu) = lowest_eigenpairs(&diag[1..], &vec![off; diag.len() - 2], 1);
        e_g = ev[0];
        e_u = ou[0];
        let v = &vv[0];
        phi_g[m] = v[0] * std::f64::consts::SQRT_2;
        for k in 1..v.len() {
            phi_g[m + k] = v[k];
            phi_g[m - k] = v[k];
        }
        let u = &vu[0];
        for k in 0..u.len() {
            phi_u[m + 1 + k] = u[k];
            phi_u[m - 1 - k] = -u[k];
        }
    } else {
        let diag: Vec<f64> = xs.iter().map(|&x| 1.0 / (dx * dx) + params.electron_potential(x, r)).collect();
        let (vals, vecs) = lowest_eigenpairs(&diag, &vec![off; n - 1], 2);
        e_g = vals[0];
        e_u = vals[1];
        phi_g.copy_from_slice(&vecs[0]);
        phi_u.copy_from_slice(&vecs[1]);
    }
    for (phi, centre_sign) in [(&mut phi_g, true), (&mut phi_u, false)] {
        let norm = (phi.iter().map(|v| v * v).sum::<f64>() * dx).sqrt();
        phi.iter_mut().for_each(|v| *v /= norm);
        let probe = if centre_sign {
            phi[n / 2]
        } else {
            phi.iter().zip(xs).map(|(p, x)| p * x).sum::<f64>()
        };
        if probe < 0.0 {
            phi.iter_mut().for_each(|v| *v = -*v);
        }
    }
    ElectronicPair { e_g, e_u, phi_g, phi_u }
}

/// Diagonalizes `-1/2 d^2/dx^2 + V(x; R)` on the grid's `x` axis at each sample.
pub fn solve_bo_curves(grid: &Grid2D, params: &ModelParams, r_samples: &[f64]) -> Result<BOCurves> {
    params.validate()?;
    if r_samples.is_empty() {
        return Err(Error::param("r_samples", "empty"));
    }
    let (lo, hi) = (grid.spec.r_min, grid.r(grid.n_r - 1));
    if let Some(&r) = r_samples.iter().find(|&&r| !(r > 0.0 && r >= lo - 1e-12 && r <= hi + 1e-12)) {
        return Err(Error::param("r_samples", format!("R = {r} outside the grid range [{lo}, {hi}]")));
    }
    let xs = grid.x_points();
    let dx = grid.dx();
    let pairs: Vec<ElectronicPair> = r_samples.par_iter().map(|&r| electronic_pair(&xs, dx, params, r)).collect();
    let n_x = xs.len();
    let mut phi_g = Array2::zeros((r_samples.len(), n_x));
    let mut phi_u = Array2::zeros((r_samples.len(), n_x));
    let mut e_g = Vec::with_capacity(r_samples.len());
    let mut e_u = Vec::with_capacity(r_samples.len());
    let mut dipole_gu = Vec::with_capacity(r_samples.len());
    let mut near_degenerate = Vec::new();
    for (i, (p, &r)) in pairs.iter().zip(r_samples).enumerate() {
        let rep = params.nuclear_repulsion(r);
        e_g.push(p.e_g + rep);
        e_u.push(p.e_u + rep);
        if p.e_u - p.e_g < 1e-10 {
            near_degenerate.push(i);
        }
        phi_g.row_mut(i).assign(&ndarray::ArrayView1::from(&p.phi_g));
        phi_u.row_mut(i).assign(&ndarray::ArrayView1::from(&p.phi_u));
        let d: f64 = p.phi_g.iter().zip(&p.phi_u).zip(&xs).map(|((g, u), x)| g * x * u).sum::<f64>() * dx;
        dipole_gu.push(d);
    }
    if !near_degenerate.is_empty() {
        log::warn!("g/u curves degenerate to 1e-10 au at {} R samples", near_degenerate.len());
    }
    Ok(BOCurves {
        r_samples: r_samples.to_vec(),
        e_g,
        e_u,
        phi_g,
        phi_u,
        dipole_gu,
        x_points: xs,
        dx,
        near_degenerate,
    })
}

/// Nuclear eigenstates on a 1D curve sampled with spacing `d_r` (Dirichlet at both
/// ends). Vectors are normalized with the `dR` measure.
pub fn nuclear_states(curve: &[f64], d_r: f64, mu_p: f64, count: Option<usize>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let c = 1.0 / (2.0 * mu_p * d_r * d_r);
    let diag: Vec<f64> = curve.iter().map(|&v| 2.0 * c + v).collect();
    let off = vec![-c; curve.len() - 1];
    let (vals, mut vecs) = match count {
        Some(k) => lowest_eigenpairs(&diag, &off, k),
        None => all_eigenpairs(&diag, &off),
    };
    let s = d_r.sqrt();
    for v in &mut vecs {
        v.iter_mut().for_each(|a| *a /= s);
        // fix the sign by the first sizeable lobe
        let peak = v.iter().copied().find(|a| a.abs() > 1e-3).unwrap_or(0.0);
        if peak < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
    }
    (vals, vecs)
}

/// Two-photon coupling table on the levels `nu`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingTable {
    pub nu: Vec<usize>,
    /// Born-Oppenheimer vibrational energies on `E_g` (au), one per entry of `nu`.
    pub energies: Vec<f64>,
    /// `mu2[a][b] = sum_k mu_{a,k} mu_{b,k} / (E_k - E_b)`.
    pub mu2: Vec<Vec<f64>>,
    /// Continuum states in the box.
    pub n_continuum: usize,
    /// Largest relative change of any entry between half box and full box.
    pub refinement_change: f64,
}

impl CouplingTable {
    fn index(&self, nu: usize) -> Result<usize> {
        self.nu
            .iter()
            .position(|&n| n == nu)
            .ok_or_else(|| Error::param("nu", format!("level {nu} not in the coupling table")))
    }

    pub fn get(&self, a: usize, b: usize) -> Result<f64> {
        Ok(self.mu2[self.index(a)?][self.index(b)?])
    }

    /// `mu2_ii - mu2_ff`.
    pub fn stark_difference(&self, i: usize, f: usize) -> Result<f64> {
        Ok(self.get(i, i)? - self.get(f, f)?)
    }

    /// Relative asymmetry `|mu2[a][b] - mu2[b][a]| / max(|.|)`.
    pub fn asymmetry(&self, a: usize, b: usize) -> Result<f64> {
        let x = self.get(a, b)?;
        let y = self.get(b, a)?;
        Ok((x - y).abs() / x.abs().max(y.abs()))
    }

    /// Reduced two-level parameters for `i -> f`, coupling taken as `mu2[i][f]`.
    pub fn two_level(&self, i: usize, f: usize) -> Result<TwoLevelParams> {
        let de = self.energies[self.index(f)?] - self.energies[self.index(i)?];
        Ok(TwoLevelParams {
            delta_e: de,
            mu2_if: self.get(i, f)?,
            mu2_fi: Some(self.get(f, i)?),
            mu2_ii: self.get(i, i)?,
            mu2_ff: self.get(f, f)?,
            hermitize: true,
        })
    }
}

fn coupling_sum(curves: &BOCurves, n_pts: usize, mu_p: f64, nu: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let d_r = curves.d_r().ok_or_else(|| Error::param("r_samples", "couplings need a uniform R sampling"))?;
    let top = nu.iter().copied().max().unwrap_or(0) + 1;
    let (e_nu, psi) = nuclear_states(&curves.e_g[..n_pts], d_r, mu_p, Some(top));
    let (e_k, chi) = nuclear_states(&curves.e_u[..n_pts], d_r, mu_p, None);
    let dip = &curves.dipole_gu[..n_pts];
    // mu_{v,k} = <psi_v | d | chi_k>
    let m: Vec<Vec<f64>> = nu
        .iter()
        .map(|&v| {
            let w: Vec<f64> = psi[v].iter().zip(dip).map(|(p, d)| p * d).collect();
            chi.iter().map(|c| c.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * d_r).collect()
        })
        .collect();
    let mut mu2 = vec![vec![0.0; nu.len()]; nu.len()];
    for a in 0..nu.len() {
        for b in 0..nu.len() {
            let eb = e_nu[nu[b]];
            let mut acc = 0.0;
            for k in 0..e_k.len() {
                let gap = e_k[k] - eb;
                if gap <= 0.0 {
                    return Err(Error::param("curves", format!("continuum state {k} lies below level {}", nu[b])));
                }
                acc += m[a][k] * m[b][k] / gap;
            }
            mu2[a][b] = acc;
        }
    }
    Ok((nu.iter().map(|&v| e_nu[v]).collect(), mu2, e_k.len()))
}

/// Two-photon couplings from the curves. The continuum is the full set of box
/// eigenstates of the `E_u` nuclear Hamiltonian on the sampled `R` range;
/// convergence is checked by repeating the sum in a box of half the length (half
/// the density of continuum states). `omega_ref` is accepted for frequency-dependent
/// denominators and currently unused.
pub fn effective_couplings(curves: &BOCurves, params: &ModelParams, nu_list: &[usize], omega_ref: f64) -> Result<CouplingTable> {
    let _ = omega_ref;
    if nu_list.is_empty() {
        return Err(Error::param("nu_list", "empty"));
    }
    let n = curves.r_samples.len();
    let (energies, mu2, n_continuum) = coupling_sum(curves, n, params.mu_p, nu_list)?;
    let (_, half, _) = coupling_sum(curves, n / 2 + 1, params.mu_p, nu_list)?;
    let mut worst = (0.0f64, (0, 0));
    for a in 0..nu_list.len() {
        for b in 0..nu_list.len() {
            let rel = (mu2[a][b] - half[a][b]).abs() / mu2[a][b].abs().max(f64::MIN_POSITIVE);
            if rel > worst.0 {
                worst = (rel, (nu_list[a], nu_list[b]));
            }
        }
    }
    const LIMIT: f64 = 0.01;
    if worst.0 > LIMIT {
        return Err(Error::ContinuumNotConverged {
            pair: worst.1,
            relative_change: worst.0,
            limit: LIMIT,
        });
    }
    Ok(CouplingTable {
        nu: nu_list.to_vec(),
        energies,
        mu2,
        n_continuum,
        refinement_change: worst.0,
    })
}

/// Curves on every `R` point of the grid.
pub fn solve_bo_curves_on_grid(grid: &Grid2D, params: &ModelParams) -> Result<BOCurves> {
    solve_bo_curves(grid, params, &grid.r_points())
}

#[derive(Clone, Debug)]
pub struct VibrationalBasis {
    pub states: Vec<Wavefunction2D>,
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
    pub grid: Grid2D,
    /// Imaginary-time steps taken.
    pub iterations: usize,
    /// Ritz energies after each step, when recorded.
    pub energy_trace: Vec<Vec<f64>>,
}

impl VibrationalBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn max_overlap_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.len() {
            for b in 0..=a {
                let s = self.states[a].inner(&self.states[b]).expect("same grid").norm();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    /// Probability within `width` of the outer boundaries (both `x` edges and
    /// `R_max`). The inner edge `R_min` sits inside the repulsive wall and is left out.
    pub fn tail_probability(&self, nu: usize, width: f64) -> f64 {
        tail_probability(&self.states[nu], width)
    }
}

pub fn tail_probability(psi: &Wavefunction2D, width: f64) -> f64 {
    let g = &psi.grid;
    let r_hi = g.r(g.n_r - 1) - width;
    let x_lo = g.spec.x_min + width;
    let x_hi = g.x(g.n_x - 1) - width;
    let mut acc = 0.0;
    for i in 0..g.n_r {
        let r = g.r(i);
        for j in 0..g.n_x {
            let x = g.x(j);
            if r > r_hi || x < x_lo || x > x_hi {
                acc += psi.amplitudes[(i, j)].norm_sqr();
            }
        }
    }
    acc * g.cell_area()
}

/// Sign changes along `R` of `int psi(R, x) dx`, ignoring points below `1e-3` of
/// the maximum magnitude.
pub fn count_r_nodes(psi: &Wavefunction2D) -> usize {
    let line: Vec<f64> = psi.amplitudes.sum_axis(Axis(1)).iter().map(|c| c.re).collect();
    let peak = line.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut last = 0.0f64;
    let mut nodes = 0;
    for &v in &line {
        if v.abs() < 1e-3 * peak {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            nodes += 1;
        }
        last = v;
    }
    nodes
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxOptions {
    /// Imaginary time step (au).
    pub tau: f64,
    /// Converged when every requested Ritz energy moves less than this per step.
    pub tol: f64,
    /// Residual `||H phi - E phi||` required on top of the energy criterion.
    pub residual_tol: f64,
    pub max_steps: usize,
    /// Extra states carried in the block beyond the requested ones.
    pub buffer_states: usize,
    pub record_trace: bool,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            tau: 0.05,
            tol: 1e-10,
            residual_tol: 1e-6,
            max_steps: 20_000,
            buffer_states: 2,
            record_trace: false,
        }
    }
}

pub fn relax_vibrational_basis(grid: &Grid2D, params: &ModelParams, n_states: usize, tol: f64) -> Result<VibrationalBasis> {
    relax_vibrational_basis_with(
        grid,
        params,
        n_states,
        &RelaxOptions {
            tol,
            ..RelaxOptions::default()
        },
    )
}

/// Real-valued operator pieces for imaginary time.
struct ImagTimeOps<'a> {
    grid: &'a Grid2D,
    potential: Array2<f64>,
    mu_p: f64,
    tau: f64,
    /// Per-row factors of `I + tau/2 (T_x + V + diag T_R)`.
    precond: Vec<TridiagFactor<f64>>,
}

impl<'a> ImagTimeOps<'a> {
    fn new(grid: &'a Grid2D, params: &ModelParams, tau: f64) -> Result<Self> {
        let potential = build_potential(grid, params)?.values;
        let h = 0.5 * tau;
        let cx = 1.0 / (2.0 * grid.dx() * grid.dx());
        let cr = 1.0 / (2.0 * params.mu_p * grid.d_r() * grid.d_r());
        let precond = (0..grid.n_r)
            .map(|i| {
                let diag: Vec<f64> = potential.row(i).iter().map(|&v| 1.0 + h * (2.0 * cx + 2.0 * cr + v)).collect();
                TridiagFactor::new(-h * cx, &diag)
            })
            .collect();
        Ok(Self {
            grid,
            potential,
            mu_p: params.mu_p,
            tau,
            precond,
        })
    }

    fn h(&self, psi: &Array2<f64>, out: &mut Array2<f64>) {
        hamiltonian_kernel(self.grid, &self.potential, self.mu_p, 0.0, psi, out);
    }

    /// `out = (I + s H) psi`.
    fn shifted(&self, s: f64, psi: &Array2<f64>, out: &mut Array2<f64>) {
        self.h(psi, out);
        out.zip_mut_with(psi, |o, &p| *o = p + s * *o);
    }

    fn precondition(&self, r: &Array2<f64>, z: &mut Array2<f64>) {
        z.assign(r);
        for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
            self.precond[i].solve(row.as_slice_mut().expect("contiguous rows"));
        }
    }

    /// One Crank-Nicolson step in imaginary time, `(I + tau/2 H)^{-1} (I - tau/2 H) psi`,
    /// solved by preconditioned CG to a relative residual of `1e-13`.
    fn cn_step(&self, psi: &Array2<f64>) -> Array2<f64> {
        let h = 0.5 * self.tau;
        let mut b = Array2::zeros(psi.dim());
        self.shifted(-h, psi, &mut b);
        let b_norm = dot(&b, &b).sqrt();
        let mut x = psi.clone();
        let mut ax = Array2::zeros(psi.dim());
        self.shifted(h, &x, &mut ax);
        let mut r = &b - &ax;
        let mut z = Array2::zeros(psi.dim());
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..500 {
            if dot(&r, &r).sqrt() <= 1e-13 * b_norm {
                break;
            }
            self.shifted(h, &p, &mut ax);
            let alpha = rz / dot(&p, &ax);
            x.scaled_add(alpha, &p);
            r.scaled_add(-alpha, &ax);
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.zip_mut_with(&z, |pv, &zv| *pv = zv + beta * *pv);
        }
        x
    }
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let a = a.as_slice().expect("standard layout");
    let b = b.as_slice().expect("standard layout");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn symmetrize_x(psi: &mut Array2<f64>) {
    let n_x = psi.ncols();
    for mut row in psi.axis_iter_mut(Axis(0)) {
        for j in 0..n_x / 2 {
            let k = n_x - 1 - j;
            let m = 0.5 * (row[j] + row[k]);
            row[j] = m;
            row[k] = m;
        }
    }
}

fn gram_schmidt(block: &mut [Array2<f64>], area: f64) {
    for a in 0..block.len() {
        let (done, rest) = block.split_at_mut(a);
        let v = &mut rest[0];
        for _ in 0..2 {
            for u in done.iter() {
                let c = dot(u, v) * area;
                v.scaled_add(-c, u);
            }
        }
        let n = (dot(v, v) * area).sqrt();
        v.mapv_inplace(|x| x / n);
    }
}

/// Born-Oppenheimer product seeds `psi_v(R) phi_g(x; R)`.
fn bo_seeds(grid: &Grid2D, params: &ModelParams, count: usize) -> Result<Vec<Array2<f64>>> {
    let curves = solve_bo_curves_on_grid(grid, params)?;
    let (_, psi) = nuclear_states(&curves.e_g, grid.d_r(), params.mu_p, Some(count));
    Ok(psi
        .iter()
        .map(|chi| Array2::from_shape_fn(grid.shape(), |(i, j)| chi[i] * curves.phi_g[(i, j)]))
        .collect())
}

pub fn relax_vibrational_basis_with(grid: &Grid2D, params: &ModelParams, n_states: usize, opts: &RelaxOptions) -> Result<VibrationalBasis> {
    if n_states == 0 || n_states > MAX_STATES {
        return Err(Error::param("n_states", format!("must be in 1..={MAX_STATES}, got {n_states}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be > 0"));
    }
    if !(opts.tau > 0.0 && opts.tau <= 0.05) {
        return Err(Error::param("tau", format!("imaginary time step must be in (0, 0.05], got {}", opts.tau)));
    }
    let ops = ImagTimeOps::new(grid, params, opts.tau)?;
    let m = n_states + opts.buffer_states;
    let area = grid.cell_area();
    let symmetric = grid.is_x_symmetric();
    let mut block = bo_seeds(grid, params, m)?;
    if symmetric {
        block.iter_mut().for_each(symmetrize_x);
    }
    gram_schmidt(&mut block, area);

    let mut energies = vec![f64::INFINITY; m];
    let mut residuals = vec![f64::INFINITY; m];
    let mut trace = Vec::new();
    let mut hblock: Vec<Array2<f64>> = vec![Array2::zeros(grid.shape()); m];
    for step in 1..=opts.max_steps {
        block = block.par_iter().map(|v| ops.cn_step(v)).collect();
        if symmetric {
            block.iter_mut().for_each(symmetrize_x);
        }
        gram_schmidt(&mut block, area);
        hblock.par_iter_mut().zip(block.par_iter()).for_each(|(hv, v)| ops.h(v, hv));

        // Rayleigh-Ritz in the block
        let mut hm = nalgebra::DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v = 0.5 * (dot(&block[a], &hblock[b]) + dot(&hblock[a], &block[b])) * area;
                hm[(a, b)] = v;
                hm[(b, a)] = v;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(hm);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let rotate = |src: &[Array2<f64>]| -> Vec<Array2<f64>> {
            order
                .iter()
                .map(|&c| {
                    let mut out = Array2::zeros(grid.shape());
                    for (a, v) in src.iter().enumerate() {
                        out.scaled_add(eig.eigenvectors[(a, c)], v);
                    }
                    out
                })
                .collect()
        };
        block = rotate(&block);
        hblock = rotate(&hblock);
        let new_e: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        for a in 0..m {
            let mut r = hblock[a].clone();
            r.scaled_add(-new_e[a], &block[a]);
            residuals[a] = (dot(&r, &r) * area).sqrt();
        }
        let change = (0..n_states).map(|a| (new_e[a] - energies[a]).abs()).fold(0.0f64, f64::max);
        energies = new_e;
        if opts.record_trace {
            trace.push(energies[..n_states].to_vec());
        }
        log::debug!("relax step {step}: E = {:?} dE = {change:.2e}", &energies[..n_states]);
        let res_ok = residuals[..n_states].iter().all(|&r| r < opts.residual_tol);
        if change < opts.tol && res_ok {
            let states = block[..n_states]
                .iter()
                .map(|v| {
                    let mut w = Wavefunction2D::from_real(grid, v);
                    // sign convention: x-integrated amplitude positive at its first lobe
                    let line: Vec<f64> = v.sum_axis(Axis(1)).to_vec();
                    let peak = line.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                    if line.iter().copied().find(|a| a.abs() > 1e-3 * peak).unwrap_or(0.0) < 0.0 {
                        w.amplitudes.mapv_inplace(|c| -c);
                    }
                    w
                })
                .collect::<Vec<_>>();
            for (nu, s) in states.iter().enumerate() {
                let nodes = count_r_nodes(s);
                if nodes != nu {
                    log::warn!("state {nu} has {nodes} nodes along R");
                }
            }
            return Ok(VibrationalBasis {
                states,
                energies: energies[..n_states].to_vec(),
                residuals: residuals[..n_states].to_vec(),
                grid: grid.clone(),
                iterations: step,
                energy_trace: trace,
            });
        }
    }
    Err(Error::NotConverged {
        steps: opts.max_steps,
        energies: energies[..n_states].to_vec(),
        residuals: residuals[..n_states].to_vec(),
    })
}
