//! Soft-core two-body model of H2+ restricted to the polarization axis: the
//! relative proton coordinate `R` and the electron coordinate `x`.
//!
//! Field-free Hamiltonian (Hartree atomic units):
//!
//! ```text
//! H = -1/(2 mu_p) d^2/dR^2 - 1/2 d^2/dx^2 + 1/sqrt(R^2 + alpha_p)
//!     - 1/sqrt((x - R/2)^2 + alpha_e) - 1/sqrt((x + R/2)^2 + alpha_e)
//! ```
//!
//! plus the length-gauge coupling `x E(t)`. Both kinetic terms use 3-point central
//! differences with zero Dirichlet values just outside the grid.

use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Proton mass in units of the electron mass.
pub const PROTON_MASS: f64 = 1836.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Reduced nuclear mass (au).
    pub mu_p: f64,
    /// Electron-proton soft-core parameter (au^2).
    pub alpha_e: f64,
    /// Proton-proton soft-core parameter (au^2).
    pub alpha_p: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mu_p: PROTON_MASS / 2.0,
            alpha_e: 1.0,
            alpha_p: 0.03,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu_p", self.mu_p), ("alpha_e", self.alpha_e), ("alpha_p", self.alpha_p)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Electron-nuclear attraction at fixed `R`.
    #[inline]
    pub fn electron_potential(&self, x: f64, r: f64) -> f64 {
        let a = x - 0.5 * r;
        let b = x + 0.5 * r;
        -1.0 / (a * a + self.alpha_e).sqrt() - 1.0 / (b * b + self.alpha_e).sqrt()
    }

    #[inline]
    pub fn nuclear_repulsion(&self, r: f64) -> f64 {
        1.0 / (r * r + self.alpha_p).sqrt()
    }

    #[inline]
    pub fn potential(&self, x: f64, r: f64) -> f64 {
        self.nuclear_repulsion(r) + self.electron_potential(x, r)
    }
}

/// Input description of a grid. Point counts are derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d_r: f64,
    pub dx: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub absorber_width_r: f64,
    pub absorber_width_x: f64,
}

impl GridSpec {
    /// Production spacings `dR = 0.03`, `dx = 0.1` on `R in [0.05, 18]`, `x in [-40, 40]`.
    pub fn paper() -> Self {
        Self {
            d_r: 0.03,
            dx: 0.1,
            r_min: 0.05,
            r_max: 18.0,
            x_min: -40.0,
            x_max: 40.0,
            absorber_width_r: 3.0,
            absorber_width_x: 8.0,
        }
    }

    /// Coarse preset for CI and quick runs.
    pub fn smoke() -> Self {
        Self {
            d_r: 0.05,
            dx: 0.2,
            r_min: 0.05,
            r_max: 12.0,
            x_min: -20.0,
            x_max: 20.0,
            absorber_width_r: 2.0,
            absorber_width_x: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    Smoke,
    Paper,
}

impl GridPreset {
    pub fn spec(self) -> GridSpec {
        match self {
            GridPreset::Smoke => GridSpec::smoke(),
            GridPreset::Paper => GridSpec::paper(),
        }
    }
}

impl FromStr for GridPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(GridPreset::Smoke),
            "paper" => Ok(GridPreset::Paper),
            other => Err(Error::Config(format!("unknown grid preset `{other}` (expected smoke|paper)"))),
        }
    }
}

/// Uniform `(R, x)` grid. Arrays on it are stored `[i_R, j_x]`, row-major, so lines
/// along `x` are contiguous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub spec: GridSpec,
    pub n_r: usize,
    pub n_x: usize,
}

fn point_count(lo: f64, hi: f64, h: f64) -> usize {
    ((hi - lo) / h).round() as usize + 1
}

impl Grid2D {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let s = &spec;
        for (name, v) in [("d_r", s.d_r), ("dx", s.dx)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("spacing must be > 0, got {v}")));
            }
        }
        if !(s.r_min > 0.0) {
            return Err(Error::param("r_min", format!("internuclear grid must start at R > 0, got {}", s.r_min)));
        }
        if !(s.r_max > s.r_min) {
            return Err(Error::param("r_max", "must exceed r_min"));
        }
        if !(s.x_max > s.x_min) {
            return Err(Error::param("x_max", "must exceed x_min"));
        }
        let n_r = point_count(s.r_min, s.r_max, s.d_r);
        let n_x = point_count(s.x_min, s.x_max, s.dx);
        if n_r < 3 || n_x < 3 {
            return Err(Error::param("spacing", "grid needs at least 3 points per axis"));
        }
        let ext_r = s.r_max - s.r_min;
        let ext_x = s.x_max - s.x_min;
        if !(s.absorber_width_r >= 0.0 && s.absorber_width_r < 0.25 * ext_r) {
            return Err(Error::param("absorber_width_r", format!("must be in [0, {:.3})", 0.25 * ext_r)));
        }
        if !(s.absorber_width_x >= 0.0 && s.absorber_width_x < 0.25 * ext_x) {
            return Err(Error::param("absorber_width_x", format!("must be in [0, {:.3})", 0.25 * ext_x)));
        }
        Ok(Self { spec, n_r, n_x })
    }

    pub fn preset(p: GridPreset) -> Self {
        Self::new(p.spec()).expect("presets are valid")
    }

    pub fn paper() -> Self {
        Self::preset(GridPreset::Paper)
    }

    pub fn smoke() -> Self {
        Self::preset(GridPreset::Smoke)
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        self.spec.r_min + i as f64 * self.spec.d_r
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        self.spec.x_min + j as f64 * self.spec.dx
    }

    pub fn r_points(&self) -> Vec<f64> {
        (0..self.n_r).map(|i| self.r(i)).collect()
    }

    pub fn x_points(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| self.x(j)).collect()
    }

    pub fn d_r(&self) -> f64 {
        self.spec.d_r
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx
    }

    pub fn cell_area(&self) -> f64 {
        self.spec.d_r * self.spec.dx
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_r, self.n_x)
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `x -> -x` maps grid points onto grid points.
    pub fn is_x_symmetric(&self) -> bool {
        let tol = 1e-9 * self.spec.dx;
        (self.spec.x_min + self.x(self.n_x - 1)).abs() < tol
    }

    pub fn ensure_same(&self, other: &Grid2D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} (dR={}, dx={}) vs {}x{} (dR={}, dx={})",
                self.n_r, self.n_x, self.spec.d_r, self.spec.dx, other.n_r, other.n_x, other.spec.d_r, other.spec.dx
            )))
        }
    }

    /// Absorbing mask: `cos^(1/8)` ramp over the outer `absorber_width` at both `x`
    /// edges and at `R_max`. The inner `R_min` edge is the repulsive wall and gets none.
    pub fn absorber_mask(&self) -> Array2<f64> {
        let s = &self.spec;
        let ramp = |depth: f64, width: f64| -> f64 {
            if width <= 0.0 || depth <= 0.0 {
                1.0
            } else if depth >= width {
                0.0
            } else {
                (0.5 * std::f64::consts::PI * depth / width).cos().powf(0.125)
            }
        };
        let r_last = self.r(self.n_r - 1);
        let x_last = self.x(self.n_x - 1);
        let mr: Vec<f64> = (0..self.n_r)
            .map(|i| {
                let depth = self.r(i) - (r_last + s.d_r - s.absorber_width_r);
                ramp(depth, s.absorber_width_r)
            })
            .collect();
        let mx: Vec<f64> = (0..self.n_x)
            .map(|j| {
                let x = self.x(j);
                let left = (s.x_min - s.dx + s.absorber_width_x) - x;
                let right = x - (x_last + s.dx - s.absorber_width_x);
                ramp(left.max(right), s.absorber_width_x)
            })
            .collect();
        Array2::from_shape_fn(self.shape(), |(i, j)| mr[i] * mx[j])
    }
}

/// Field-free potential sampled on a grid.
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub values: Array2<f64>,
    pub grid: Grid2D,
}

pub fn build_potential(grid: &Grid2D, params: &ModelParams) -> Result<PotentialField> {
    params.validate()?;
    if !(grid.spec.r_min > 0.0) {
        return Err(Error::param("r_min", "potential is only defined on R > 0"));
    }
    let values = Array2::from_shape_fn(grid.shape(), |(i, j)| params.potential(grid.x(j), grid.r(i)));
    Ok(PotentialField {
        values,
        grid: grid.clone(),
    })
}

/// Complex amplitudes on a grid; `sum |psi|^2 dR dx` is the norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavefunction2D {
    pub amplitudes: Array2<Complex64>,
    pub grid: Grid2D,
}

impl Wavefunction2D {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self {
            amplitudes: Array2::zeros(grid.shape()),
            grid: grid.clone(),
        }
    }

    pub fn from_real(grid: &Grid2D, values: &Array2<f64>) -> Self {
        assert_eq!(values.dim(), grid.shape());
        Self {
            amplitudes: values.mapv(|v| Complex64::new(v, 0.0)),
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> Complex64) -> Self {
        Self {
            amplitudes: Array2::from_shape_fn(grid.shape(), |(i, j)| f(grid.r(i), grid.x(j))),
            grid: grid.clone(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes.mapv_inplace(|c| c / n);
        }
    }

    /// `<self|other>` with the grid measure.
    pub fn inner(&self, other: &Wavefunction2D) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(inner_raw(&self.amplitudes, &other.amplitudes) * self.grid.cell_area())
    }

    /// Parity image `psi(R, -x)`. Requires an `x`-symmetric grid.
    pub fn flip_x(&self) -> Wavefunction2D {
        let mut out = self.amplitudes.clone();
        out.invert_axis(ndarray::Axis(1));
        Wavefunction2D {
            amplitudes: out.as_standard_layout().to_owned(),
            grid: self.grid.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

pub(crate) fn inner_raw(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Complex64 {
    Zip::from(a).and(b).fold(Complex64::new(0.0, 0.0), |acc, x, y| acc + x.conj() * y)
}

/// Writes `(T_R + T_x + V + x * field) psi` into `out`. Generic so the same stencil
/// serves real imaginary-time states and complex real-time states.
pub(crate) fn hamiltonian_kernel<T>(
    grid: &Grid2D,
    potential: &Array2<f64>,
    mu_p: f64,
    field: f64,
    psi: &Array2<T>,
    out: &mut Array2<T>,
) where
    T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let (n_r, n_x) = grid.shape();
    let cr = 1.0 / (2.0 * mu_p * grid.d_r() * grid.d_r());
    let cx = 1.0 / (2.0 * grid.dx() * grid.dx());
    let xs = grid.x_points();
    let zero = T::default();
    let psi_s = psi.as_slice().expect("standard layout");
    let out_s = out.as_slice_mut().expect("standard layout");
    let v_s = potential.as_slice().expect("standard layout");
    for i in 0..n_r {
        let row = i * n_x;
        for j in 0..n_x {
            let k = row + j;
            let c = psi_s[k];
            let up = if i + 1 < n_r { psi_s[k + n_x] } else { zero };
            let dn = if i > 0 { psi_s[k - n_x] } else { zero };
            let lf = if j > 0 { psi_s[k - 1] } else { zero };
            let rt = if j + 1 < n_x { psi_s[k + 1] } else { zero };
            let diag = 2.0 * cr + 2.0 * cx + v_s[k] + xs[j] * field;
            out_s[k] = c * diag - (up + dn) * cr - (lf + rt) * cx;
        }
    }
}

/// `H(t) psi` with the laser coupling evaluated at `field_value`.
pub fn apply_hamiltonian(
    psi: &Wavefunction2D,
    potential: &PotentialField,
    params: &ModelParams,
    field_value: f64,
) -> Result<Wavefunction2D> {
    psi.grid.ensure_same(&potential.grid)?;
    let mut out = Wavefunction2D::zeros(&psi.grid);
    let psi_std;
    let src = if psi.amplitudes.is_standard_layout() {
        &psi.amplitudes
    } else {
        psi_std = psi.amplitudes.as_standard_layout().to_owned();
        &psi_std
    };
    hamiltonian_kernel(&psi.grid, &potential.values, params.mu_p, field_value, src, &mut out.amplitudes);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid() -> Grid2D {
        Grid2D::new(GridSpec {
            d_r: 0.1,
            dx: 0.5,
            r_min: 0.5,
            r_max: 4.0,
            x_min: -6.0,
            x_max: 6.0,
            absorber_width_r: 0.5,
            absorber_width_x: 1.0,
        })
        .unwrap()
    }

    fn pseudo_random_state(grid: &Grid2D, seed: u64) -> Wavefunction2D {
        // splitmix64 stream; deterministic without pulling an RNG into the library
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut psi = Wavefunction2D::zeros(grid);
        psi.amplitudes.mapv_inplace(|_| Complex64::new(next(), next()));
        psi.normalize();
        psi
    }

    #[test]
    fn potential_hand_value_at_x0_r2() {
        let p = ModelParams::default();
        let v = p.potential(0.0, 2.0);
        let expect = 1.0 / 4.03_f64.sqrt() - 2.0 / 2.0_f64.sqrt();
        assert!((v - expect).abs() < 1e-14);
        assert!((v - (-0.91606)).abs() < 5e-5);
    }

    #[test]
    fn potential_asymptotics() {
        let p = ModelParams::default();
        let r = 1.0e4;
        assert!(p.electron_potential(0.0, r) < 0.0 && p.electron_potential(0.0, r) > -1e-3);
        assert!(p.nuclear_repulsion(r) > 0.0 && p.nuclear_repulsion(r) < 1e-3);
    }

    #[test]
    fn potential_is_even_in_x_on_grid() {
        let g = tiny_grid();
        let v = build_potential(&g, &ModelParams::default()).unwrap();
        for i in 0..g.n_r {
            for j in 0..g.n_x {
                assert_eq!(v.values[(i, j)], v.values[(i, g.n_x - 1 - j)]);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_r_min() {
        let mut s = GridSpec::smoke();
        s.r_min = 0.0;
        assert!(Grid2D::new(s).is_err());
        s.r_min = -1.0;
        assert!(Grid2D::new(s).is_err());
    }

    #[test]
    fn point_counts_follow_rounding_rule() {
        let g = Grid2D::paper();
        assert_eq!(g.n_r, ((18.0f64 - 0.05) / 0.03).round() as usize + 1);
        assert_eq!(g.n_x, 801);
        assert!(g.is_x_symmetric());
        let s = Grid2D::smoke();
        assert_eq!(s.n_x, 201);
    }

    #[test]
    fn absorber_too_wide_is_rejected() {
        let mut s = GridSpec::smoke();
        s.absorber_width_x = 10.0;
        assert!(Grid2D::new(s).is_err());
    }

    #[test]
    fn mask_is_one_inside_and_drops_toward_edges() {
        let g = Grid2D::smoke();
        let m = g.absorber_mask();
        let j0 = g.n_x / 2;
        assert_eq!(m[(0, j0)], 1.0);
        assert_eq!(m[(g.n_r / 4, j0)], 1.0);
        assert!(m[(g.n_r - 1, j0)] < 0.75);
        assert!(m[(g.n_r / 4, 0)] < 0.75);
        for i in 1..g.n_r {
            assert!(m[(i, j0)] <= m[(i - 1, j0)]);
        }
        assert!(m.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn hamiltonian_of_zero_is_zero() {
        let g = tiny_grid();
        let p = ModelParams::default();
        let v = build_potential(&g, &p).unwrap();
        let h = apply_hamiltonian(&Wavefunction2D::zeros(&g), &v, &p, 0.03).unwrap();
        assert!(h.amplitudes.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn hamiltonian_is_hermitian_with_and_without_field() {
        let g = tiny_grid();
        let p = ModelParams::default();
        let v = build_potential(&g, &p).unwrap();
        let a = pseudo_random_state(&g, 1);
        let b = pseudo_random_state(&g, 2);
        for field in [0.0, 0.05] {
            let hb = apply_hamiltonian(&b, &v, &p, field).unwrap();
            let ha = apply_hamiltonian(&a, &v, &p, field).unwrap();
            let lhs = a.inner(&hb).unwrap();
            let rhs = ha.inner(&b).unwrap();
            assert!((lhs - rhs).norm() < 1e-10, "{lhs} vs {rhs}");
        }
        let ha = apply_hamiltonian(&a, &v, &p, 0.0).unwrap();
        assert!(a.inner(&ha).unwrap().im.abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_commutes_with_parity_without_field() {
        let g = tiny_grid();
        let p = ModelParams::default();
        let v = build_potential(&g, &p).unwrap();
        let a = pseudo_random_state(&g, 7);
        let hpa = apply_hamiltonian(&a.flip_x(), &v, &p, 0.0).unwrap();
        let pha = apply_hamiltonian(&a, &v, &p, 0.0).unwrap().flip_x();
        let diff = (&hpa.amplitudes - &pha.amplitudes).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let p = ModelParams::default();
        let v = build_potential(&Grid2D::smoke(), &p).unwrap();
        let psi = Wavefunction2D::zeros(&tiny_grid());
        assert!(matches!(apply_hamiltonian(&psi, &v, &p, 0.0), Err(Error::GridMismatch(_))));
    }
}
