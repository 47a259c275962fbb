//! Persistence: binary checkpoints, trajectory CSV and JSON reports.
//!
//! Checkpoint layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic      "VCPSI\0\0\0" (wavefunction) or "VCBASIS\0" (basis)
//! 8       4     version    u32 = 1
//! 12      4     count      u32, number of stored arrays
//! 16      64    grid spec  8 x f64: d_r, dx, r_min, r_max, x_min, x_max, absorber_width_r, absorber_width_x
//! 80      16    shape      2 x u64: n_r, n_x
//! 96      24    run state  u64 step, f64 time, f64 absorbed norm (zero for a basis)
//! 120     16*c  per-array  f64 energy, f64 residual (basis only, c = count)
//! ...           arrays     count x n_r x n_x complex doubles (re, im), row-major [i_R, j_x]
//! end-32  32    SHA-256 of everything before it
//! ```
//!
//! Readers load the whole file and check magic, version, shape and digest
//! before decoding anything.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eigensolver::VibrationalBasis;
use crate::error::{Error, Result};
use crate::model::{Grid2D, GridSpec, Wavefunction2D};
use crate::propagator::TrajectoryResult;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC_PSI: &[u8; 8] = b"VCPSI\0\0\0";
const MAGIC_BASIS: &[u8; 8] = b"VCBASIS\0";
const HEADER_LEN: usize = 120;
const DIGEST_LEN: usize = 32;

/// Number of population columns in trajectory CSV files.
pub const CSV_STATES: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub time: f64,
    pub absorbed: f64,
    pub wavefunction: Wavefunction2D,
}

fn header(magic: &[u8; 8], grid: &Grid2D, count: u32, step: u64, time: f64, absorbed: f64) -> Vec<u8> {
    let mut b = Vec::with_capacity(HEADER_LEN);
    b.extend_from_slice(magic);
    b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    b.extend_from_slice(&count.to_le_bytes());
    let s = &grid.spec;
    for v in [s.d_r, s.dx, s.r_min, s.r_max, s.x_min, s.x_max, s.absorber_width_r, s.absorber_width_x] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&(grid.n_r as u64).to_le_bytes());
    b.extend_from_slice(&(grid.n_x as u64).to_le_bytes());
    b.extend_from_slice(&step.to_le_bytes());
    b.extend_from_slice(&time.to_le_bytes());
    b.extend_from_slice(&absorbed.to_le_bytes());
    b
}

fn push_array(b: &mut Vec<u8>, a: &Array2<Complex64>) {
    for c in a.iter() {
        b.extend_from_slice(&c.re.to_le_bytes());
        b.extend_from_slice(&c.im.to_le_bytes());
    }
}

fn finish_and_write(path: &Path, mut bytes: Vec<u8>) -> Result<()> {
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // write-then-rename so a crash never leaves a torn checkpoint behind
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
    fn array(&mut self, grid: &Grid2D) -> Array2<Complex64> {
        Array2::from_shape_fn(grid.shape(), |_| {
            let re = self.f64();
            let im = self.f64();
            Complex64::new(re, im)
        })
    }
}

struct Parsed<'a> {
    reader: Reader<'a>,
    grid: Grid2D,
    count: usize,
    step: u64,
    time: f64,
    absorbed: f64,
}

fn parse<'a>(path: &Path, bytes: &'a [u8], magic: &[u8; 8], per_array_meta: usize) -> Result<Parsed<'a>> {
    let bad = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < HEADER_LEN + DIGEST_LEN {
        return Err(bad(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != magic {
        return Err(bad(format!("bad magic bytes {:?}", &bytes[..8])));
    }
    let mut r = Reader { bytes, pos: 8 };
    let version = r.u32();
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("version {version} not supported (expected {CHECKPOINT_VERSION})")));
    }
    let count = r.u32() as usize;
    let spec = GridSpec {
        d_r: r.f64(),
        dx: r.f64(),
        r_min: r.f64(),
        r_max: r.f64(),
        x_min: r.f64(),
        x_max: r.f64(),
        absorber_width_r: r.f64(),
        absorber_width_x: r.f64(),
    };
    let n_r = r.u64() as usize;
    let n_x = r.u64() as usize;
    let step = r.u64();
    let time = r.f64();
    let absorbed = r.f64();
    let grid = Grid2D::new(spec).map_err(|e| bad(format!("stored grid invalid: {e}")))?;
    if grid.shape() != (n_r, n_x) {
        return Err(bad(format!("stored shape ({n_r}, {n_x}) disagrees with grid {:?}", grid.shape())));
    }
    let expected = HEADER_LEN + count * per_array_meta + count * n_r * n_x * 16 + DIGEST_LEN;
    if bytes.len() != expected {
        return Err(bad(format!("length {} but header implies {expected}", bytes.len())));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch".into()));
    }
    Ok(Parsed {
        reader: r,
        grid,
        count,
        step,
        time,
        absorbed,
    })
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let psi = &ck.wavefunction;
    let mut b = header(MAGIC_PSI, &psi.grid, 1, ck.step, ck.time, ck.absorbed);
    push_array(&mut b, &psi.amplitudes);
    finish_and_write(path, b)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_all(path)?;
    let mut p = parse(path, &bytes, MAGIC_PSI, 0)?;
    if p.count != 1 {
        return Err(Error::Checkpoint(format!("{}: expected one array, found {}", path.display(), p.count)));
    }
    let amplitudes = p.reader.array(&p.grid);
    Ok(Checkpoint {
        step: p.step,
        time: p.time,
        absorbed: p.absorbed,
        wavefunction: Wavefunction2D { amplitudes, grid: p.grid },
    })
}

pub fn write_basis(path: &Path, basis: &VibrationalBasis) -> Result<()> {
    let mut b = header(MAGIC_BASIS, &basis.grid, basis.len() as u32, basis.iterations as u64, 0.0, 0.0);
    for (e, r) in basis.energies.iter().zip(&basis.residuals) {
        b.extend_from_slice(&e.to_le_bytes());
        b.extend_from_slice(&r.to_le_bytes());
    }
    for s in &basis.states {
        push_array(&mut b, &s.amplitudes);
    }
    finish_and_write(path, b)
}

pub fn read_basis(path: &Path) -> Result<VibrationalBasis> {
    let bytes = read_all(path)?;
    let mut p = parse(path, &bytes, MAGIC_BASIS, 16)?;
    let mut energies = Vec::with_capacity(p.count);
    let mut residuals = Vec::with_capacity(p.count);
    for _ in 0..p.count {
        energies.push(p.reader.f64());
        residuals.push(p.reader.f64());
    }
    let states = (0..p.count)
        .map(|_| Wavefunction2D {
            amplitudes: p.reader.array(&p.grid),
            grid: p.grid.clone(),
        })
        .collect();
    Ok(VibrationalBasis {
        states,
        energies,
        residuals,
        grid: p.grid,
        iterations: p.step as usize,
        energy_trace: Vec::new(),
    })
}

/// Column names of trajectory CSV files.
pub fn trajectory_header() -> Vec<String> {
    let mut h = vec!["time_au".to_string()];
    h.extend((0..CSV_STATES).map(|i| format!("P{i}")));
    h.push("norm".into());
    h.push("absorbed_norm".into());
    h
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.15e}")
}

/// One row per sample: `time_au, P0..P6, norm, absorbed_norm`. Missing states
/// are written as 0.
pub fn write_trajectory_csv(path: &Path, traj: &TrajectoryResult) -> Result<()> {
    let rows: Vec<TrajectoryRow> = (0..traj.times.len())
        .map(|k| TrajectoryRow {
            time: traj.times[k],
            populations: (0..CSV_STATES)
                .map(|nu| traj.populations.get(nu).map_or(0.0, |s| s[k]))
                .collect(),
            norm: traj.norm[k],
            absorbed: traj.absorbed_norm[k],
        })
        .collect();
    write_rows(path, &rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub time: f64,
    pub populations: Vec<f64>,
    pub norm: f64,
    pub absorbed: f64,
}

pub fn write_rows(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(trajectory_header())?;
    for r in rows {
        let mut rec = vec![fmt_f64(r.time)];
        rec.extend((0..CSV_STATES).map(|nu| fmt_f64(r.populations.get(nu).copied().unwrap_or(0.0))));
        rec.push(fmt_f64(r.norm));
        rec.push(fmt_f64(r.absorbed));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != trajectory_header() {
        return Err(Error::Config(format!("{}: unexpected columns {header:?}", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
            .collect::<Result<_>>()?;
        out.push(TrajectoryRow {
            time: v[0],
            populations: v[1..1 + CSV_STATES].to_vec(),
            norm: v[1 + CSV_STATES],
            absorbed: v[2 + CSV_STATES],
        });
    }
    Ok(out)
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(csv::Writer::from_path(path)?)
}

/// Sampled field `t, E(t)` for plotting.
pub fn write_field_csv(path: &Path, samples: &[(f64, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["time_au", "field_au"])?;
    for (t, e) in samples {
        w.write_record([fmt_f64(*t), fmt_f64(*e)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// SHA-256 of the compact JSON encoding of `value`. Object keys are sorted
/// by serde_json's map, so equal configs hash equally.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&v)?)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub code_version: String,
    pub git_hash: Option<String>,
    pub config_hash: String,
    pub wall_seconds: f64,
    pub threads: usize,
}

impl Provenance {
    pub fn new(config_hash: String, wall_seconds: f64) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            git_hash: git_hash(),
            config_hash,
            wall_seconds,
            threads: rayon::current_num_threads(),
        }
    }
}

fn git_hash() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}
