//! `vibcontrol` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vibcontrol::config::{GridChoice, RunConfig};
use vibcontrol::eigensolver::{effective_couplings, relax_vibrational_basis_with, solve_bo_curves_on_grid};
use vibcontrol::experiments::{write_outputs, Engine};
use vibcontrol::io::{write_basis, write_field_csv, write_json, Provenance};
use vibcontrol::pulses::{intensity_to_field, sample_field, wavelength_to_omega, PulseSpec};
use vibcontrol::validation::{run_suite, ValidationOptions};
use vibcontrol::{Error, GridPreset, Result};

#[derive(Parser, Debug)]
#[command(name = "vibcontrol", version, about = "Two-photon vibrational control of a soft-core H2+ model")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    engine: Option<String>,
    /// Grid preset: smoke or paper.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Worker threads for scans (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relax the vibrational basis, save it and print the energies.
    Eigensolve,
    /// Born-Oppenheimer curves and two-photon couplings.
    Bo {
        #[arg(long, default_value_t = 6)]
        max_nu: usize,
    },
    /// Run the experiment in the config.
    Run,
    /// Write E(t) of one pulse as CSV.
    Field(FieldArgs),
    /// Run the numerical self-checks.
    Validate {
        #[arg(long)]
        norm_steps: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct FieldArgs {
    /// Peak intensity (W/cm^2).
    #[arg(long)]
    intensity: f64,
    #[arg(long, conflicts_with = "omega", required_unless_present = "omega")]
    wavelength: Option<f64>,
    /// Carrier frequency (au).
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    cycles: u32,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    chirp: f64,
    /// Sample spacing (au); default 1/200 of a period.
    #[arg(long)]
    dt: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_numerical() => 1,
        Error::Io { .. } | Error::Csv(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(e) = &cli.engine {
        cfg.engine = e.parse::<Engine>()?;
    }
    if let Some(g) = &cli.grid {
        cfg.grid = GridChoice::Preset(g.parse::<GridPreset>()?);
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    let start = Instant::now();
    match &cli.command {
        Command::Eigensolve => eigensolve(&cfg, start),
        Command::Bo { max_nu } => bo(&cfg, *max_nu, start),
        Command::Run => run_experiment(&cfg, start),
        Command::Field(a) => field(&cfg, a),
        Command::Validate { norm_steps } => validate(&cfg, *norm_steps),
    }
}

fn provenance(cfg: &RunConfig, start: Instant) -> Result<Provenance> {
    Ok(Provenance::new(cfg.hash()?, start.elapsed().as_secs_f64()))
}

fn eigensolve(cfg: &RunConfig, start: Instant) -> Result<u8> {
    let grid = cfg.grid.build()?;
    log::info!("relaxing {} states on a {:?} grid", cfg.n_states, grid.shape());
    let basis = relax_vibrational_basis_with(&grid, &cfg.model, cfg.n_states, &cfg.relax)?;
    let dir = out_dir(cfg)?;
    write_basis(&dir.join("basis.vcb"), &basis)?;
    println!("{:>3}  {:>12}  {:>10}", "nu", "E (au)", "residual");
    for (nu, (e, r)) in basis.energies.iter().zip(&basis.residuals).enumerate() {
        println!("{nu:>3}  {e:>12.6}  {r:>10.2e}");
    }
    let doc = json!({
        "energies": basis.energies,
        "residuals": basis.residuals,
        "iterations": basis.iterations,
        "grid": grid,
        "model": cfg.model,
        "provenance": provenance(cfg, start)?,
    });
    write_json(&dir.join("energies.json"), &doc)?;
    write_json(&dir.join("config.json"), cfg)?;
    Ok(0)
}

fn bo(cfg: &RunConfig, max_nu: usize, start: Instant) -> Result<u8> {
    let grid = cfg.grid.build()?;
    let curves = solve_bo_curves_on_grid(&grid, &cfg.model)?;
    let nu: Vec<usize> = (0..=max_nu).collect();
    let table = effective_couplings(&curves, &cfg.model, &nu, 0.0)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("bo_curves.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["r_au", "e_g", "e_u", "dipole_gu"])?;
    for i in 0..curves.r_samples.len() {
        w.write_record([curves.r_samples[i], curves.e_g[i], curves.e_u[i], curves.dipole_gu[i]].map(|v| format!("{v:.15e}")))?;
    }
    w.flush().map_err(|e| Error::Io { path, source: e })?;
    let (r_eq, e_min) = curves.minimum();
    println!("minimum of E_g: {e_min:.6} au at R = {r_eq:.3} au");
    println!("{:>3}  {:>12}  {:>10}", "nu", "E (au)", "mu2_nn");
    for (k, n) in nu.iter().enumerate() {
        println!("{n:>3}  {:>12.6}  {:>10.4}", table.energies[k], table.mu2[k][k]);
    }
    let doc = json!({
        "couplings": table,
        "provenance": provenance(cfg, start)?,
    });
    write_json(&dir.join("couplings.json"), &doc)?;
    Ok(0)
}

fn run_experiment(cfg: &RunConfig, start: Instant) -> Result<u8> {
    let spec = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| Error::Config("`run` needs an `experiment` section".into()))?;
    let dir = out_dir(cfg)?;
    write_json(&dir.join("config.json"), cfg)?;
    let runner = cfg.runner(Some(dir.clone()))?;
    log::info!("running {} on the {:?} engine", spec.kind(), cfg.engine);
    let mut report = runner.run(spec)?;
    report.provenance = Some(provenance(cfg, start)?);
    write_outputs(&dir, &report)?;
    for (k, v) in &report.derived {
        println!("{k}: {v}");
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

fn field(cfg: &RunConfig, a: &FieldArgs) -> Result<u8> {
    let omega = match (a.wavelength, a.omega) {
        (Some(l), None) => wavelength_to_omega(l),
        (None, Some(w)) => w,
        _ => return Err(Error::Config("give --wavelength or --omega".into())),
    };
    let pulse = PulseSpec::new(intensity_to_field(a.intensity), omega, a.cycles).with_chirp(a.chirp);
    pulse.validate()?;
    let dt = a.dt.unwrap_or(pulse.period() / 200.0);
    if !(dt > 0.0) {
        return Err(Error::Config("--dt must be > 0".into()));
    }
    let samples = sample_field(&[pulse], pulse.t_start, pulse.t_end(), dt);
    let dir = out_dir(cfg)?;
    let path = dir.join("field.csv");
    write_field_csv(&path, &samples)?;
    println!("wrote {} samples to {}", samples.len(), path.display());
    Ok(0)
}

fn validate(cfg: &RunConfig, norm_steps: Option<usize>) -> Result<u8> {
    let grid = cfg.grid.build()?;
    let mut opts = ValidationOptions {
        cn_corrections: cfg.propagation.cn_corrections,
        ..ValidationOptions::default()
    };
    if let Some(n) = norm_steps {
        opts.norm_steps = n;
    }
    let basis = match &cfg.basis {
        Some(_) => Some(cfg.load_or_relax_basis()?),
        None => None,
    };
    let results = run_suite(&grid, &cfg.model, basis.as_ref(), &opts)?;
    let mut failed = false;
    for c in &results {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        failed |= !c.passed;
        println!("{tag} {:<22} {:.3e} (limit {:.1e}, {:.1} s)", c.name, c.value, c.limit, c.seconds);
    }
    if cfg.output_dir.is_some() {
        write_json(&out_dir(cfg)?.join("validation.json"), &results)?;
    }
    Ok(u8::from(failed))
}
