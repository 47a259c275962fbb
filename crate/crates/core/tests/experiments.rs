use num_complex::Complex64 as C;

use vibcontrol::experiments::*;
use vibcontrol::pulses::{intensity_to_field, BeamProfile, PulseSpec};
use vibcontrol::twolevel::{integrate_levels, IntegratorOptions, LevelSystem};

fn pulse(intensity: f64, lambda: Option<f64>, omega: Option<f64>, n: u32, a: f64) -> PulseConfig {
    PulseConfig {
        intensity_w_cm2: intensity,
        wavelength_nm: lambda,
        omega_au: omega,
        n_cycles: n,
        chirp_a: a,
        t_start_au: 0.0,
    }
}

fn reference() -> Runner {
    Runner::twolevel(LevelData::reference().unwrap())
}

/// Plain fixed-step RK4 on `i c' = -E^2 sum_b mu2_ab e^{i(E_a - E_b)t} c_b`.
fn rk4_oracle(sys: &LevelSystem, p: &PulseSpec, c0: &[C], steps: usize) -> Vec<C> {
    let n = sys.energies.len();
    let rhs = |t: f64, c: &[C]| -> Vec<C> {
        let e2 = p.field_at(t).powi(2);
        (0..n)
            .map(|a| {
                let mut s = C::new(0.0, 0.0);
                for b in 0..n {
                    s += sys.mu2[a][b] * C::from_polar(1.0, (sys.energies[a] - sys.energies[b]) * t) * c[b];
                }
                C::i() * e2 * s
            })
            .collect()
    };
    let h = p.duration() / steps as f64;
    let mut c = c0.to_vec();
    for k in 0..steps {
        let t = p.t_start + k as f64 * h;
        let k1 = rhs(t, &c);
        let y: Vec<C> = (0..n).map(|i| c[i] + 0.5 * h * k1[i]).collect();
        let k2 = rhs(t + 0.5 * h, &y);
        let y: Vec<C> = (0..n).map(|i| c[i] + 0.5 * h * k2[i]).collect();
        let k3 = rhs(t + 0.5 * h, &y);
        let y: Vec<C> = (0..n).map(|i| c[i] + h * k3[i]).collect();
        let k4 = rhs(t + h, &y);
        for i in 0..n {
            c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    c
}

#[test]
fn level_integrator_matches_independent_rk4() {
    let sys = LevelData::reference().unwrap().system;
    let p = PulseSpec::new(intensity_to_field(1e13), 9.0e-3, 40).with_chirp(-1.33);
    let c0 = [C::new(0.6, 0.0), C::new(0.0, 0.8), C::new(0.0, 0.0)];
    let ours = integrate_levels(&sys, &[p], &c0, 0.0, &IntegratorOptions::default()).unwrap();
    let oracle = rk4_oracle(&sys, &p, &c0, 200_000);
    for (a, b) in ours.final_amplitudes().iter().zip(&oracle) {
        assert!((a - b).norm() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn detuning_calibration_closes_on_its_own_model() {
    let r = reference();
    for target in [1usize, 2] {
        let half = 0.5 * r.gap(0, target).unwrap();
        let rep = r
            .run_detuning_scan(&DetuningSpec {
                target_nu: target,
                intensities_w_cm2: vec![1e12, 4e12, 7e12, 1e13],
                omega_range: ScanRange {
                    start: 0.9 * half,
                    stop: 1.1 * half,
                    n: 81,
                },
                n_cycles: 10,
                reference: DetuningReference::WeakField,
                weak_intensity_w_cm2: 1e10,
            })
            .unwrap();
        let got = rep.derived_f64("stark_difference").unwrap();
        let want = rep.derived_f64("model_stark_difference").unwrap();
        assert!(((got - want) / want).abs() < 0.05, "nu={target}: {got} vs {want}");
        assert!(rep.derived_f64("r_squared").unwrap() > 0.99);
        assert_eq!(rep.points.len(), 5 * 81);
    }
}

#[test]
fn detuning_scan_refuses_a_peak_at_the_edge() {
    let r = reference();
    let half = 0.5 * r.gap(0, 2).unwrap();
    let e = r
        .run_detuning_scan(&DetuningSpec {
            target_nu: 2,
            intensities_w_cm2: vec![1e12, 1e13],
            omega_range: ScanRange {
                start: 1.02 * half,
                stop: 1.2 * half,
                n: 21,
            },
            n_cycles: 10,
            reference: DetuningReference::HalfGap,
            weak_intensity_w_cm2: 1e10,
        })
        .unwrap_err();
    assert!(matches!(e, vibcontrol::Error::PeakAtEdge { .. }), "{e}");
}

#[test]
fn chirp_optimum_beats_unchirped_and_is_single_peaked() {
    let rep = reference()
        .run_chirp_sweep(&ChirpSweepSpec {
            nu_i: 0,
            nu_f: 2,
            a_range: ScanRange {
                start: -2.0,
                stop: -0.8,
                n: 49,
            },
            pulse: pulse(1e13, Some(5059.3), None, 280, 0.0),
        })
        .unwrap();
    let best = rep.derived_f64("max_transfer").unwrap();
    assert!(rep.derived_f64("unchirped_transfer").unwrap() < best);
    let a_star = rep.derived_f64("a_star").unwrap();
    // unimodal on a window of +-0.15 around the optimum
    let near: Vec<(f64, f64)> = rep
        .points
        .iter()
        .map(|p| (p.parameters["chirp_a"], p.population(2)))
        .filter(|(a, _)| (a - a_star).abs() < 0.15)
        .collect();
    assert!(near.len() >= 9);
    let peak = near.iter().enumerate().max_by(|x, y| x.1 .1.total_cmp(&y.1 .1)).unwrap().0;
    for w in near[..=peak].windows(2) {
        assert!(w[1].1 >= w[0].1, "{near:?}");
    }
    for w in near[peak..].windows(2) {
        assert!(w[1].1 <= w[0].1, "{near:?}");
    }
}

#[test]
fn focal_transfer_is_largest_on_axis() {
    let rep = reference()
        .run_focal_average(&FocalSpec {
            nu_i: 0,
            nu_f: 2,
            beam: BeamProfile {
                w0: 1.0,
                i_peak: 1e13,
                n_rings: 12,
            },
            pulse: pulse(1e13, Some(5059.3), None, 280, 0.0),
            chirp_search: Some([-2.0, -0.8]),
            probe_intensities_w_cm2: vec![],
        })
        .unwrap();
    let on_axis = rep.points[0].population(2);
    for p in &rep.points[1..] {
        assert!(p.population(2) <= on_axis);
    }
    let avg = rep.derived_f64("average_transfer").unwrap();
    assert!(avg > 0.0 && avg < on_axis);
}

#[test]
fn locked_train_is_coherent_and_free_train_is_not() {
    let spec = |lock: bool| TrainExperimentSpec {
        nu_i: 0,
        nu_f: 2,
        pulse: pulse(1e13, Some(5059.3), None, 10, -1.33),
        n_pulses: 28,
        gap_cycles: 0.0,
        phase_lock: vibcontrol::PhaseLock::Locked,
        stark_lock: lock,
        stark_difference: None,
        single_cycles: None,
    };
    let r = reference();
    let locked = r.run_train(&spec(true)).unwrap().derived_f64("train_transfer").unwrap();
    let plain = r.run_train(&spec(false)).unwrap().derived_f64("train_transfer").unwrap();
    assert!(locked > 0.9, "{locked}");
    assert!(plain < 0.1, "{plain}");
}

#[test]
fn second_identical_pulse_returns_the_population() {
    // out with one chirped pulse and back with the same pulse; the delay sets the
    // relative phase, so it is chosen over one beat period
    let r = reference();
    let best = (0..34)
        .map(|k| {
            let rep = r
                .run_cooling(&CoolingSpec {
                    initial: vec![LevelAmplitude { nu: 0, re: 1.0, im: 0.0 }],
                    pulse1: pulse(1e13, None, Some(9e-3), 280, -1.38),
                    pulse2: pulse(1e13, None, Some(9e-3), 280, -1.38),
                    delay_fs: 0.25 * k as f64,
                })
                .unwrap();
            rep.derived_f64("final_p0").unwrap()
        })
        .fold(0.0f64, f64::max);
    assert!(best >= 0.9, "{best}");
}

#[test]
fn empty_upper_level_is_not_touched_by_the_first_cooling_pulse() {
    let rep = reference()
        .run_cooling(&CoolingSpec {
            initial: vec![LevelAmplitude { nu: 1, re: 1.0, im: 0.0 }, LevelAmplitude { nu: 2, re: 0.0, im: 0.0 }],
            pulse1: pulse(1e13, None, Some(9e-3), 280, -1.33),
            pulse2: pulse(0.0, Some(9919.9), None, 60, -0.78),
            delay_fs: 10.8,
        })
        .unwrap();
    for nu in 0..3 {
        let d = rep.derived_f64(&format!("final_p{nu}")).unwrap() - rep.derived_f64(&format!("initial_p{nu}")).unwrap();
        assert!(d.abs() < 0.02, "nu={nu}: {d}");
    }
}

#[test]
fn zero_intensity_transfers_nothing_in_any_experiment() {
    let r = reference();
    let rep = r
        .run_chirp_sweep(&ChirpSweepSpec {
            nu_i: 0,
            nu_f: 1,
            a_range: ScanRange {
                start: -1.0,
                stop: 0.0,
                n: 3,
            },
            pulse: pulse(0.0, Some(9919.9), None, 60, 0.0),
        })
        .unwrap();
    assert!(rep.points.iter().all(|p| p.population(1) == 0.0 && p.population(0) == 1.0));
}

#[test]
fn invalid_specs_are_rejected_before_running() {
    let r = reference();
    let bad = ExperimentSpec::ChirpSweep(ChirpSweepSpec {
        nu_i: 1,
        nu_f: 1,
        a_range: ScanRange {
            start: -1.0,
            stop: 0.0,
            n: 3,
        },
        pulse: pulse(1e13, Some(9919.9), None, 60, 0.0),
    });
    assert!(r.run(&bad).is_err());
    let empty = ExperimentSpec::Selectivity(SelectivitySpec {
        intensity_w_cm2: 1e12,
        wavelengths_nm: vec![],
        n_cycles: 10,
        targets: None,
    });
    assert!(r.run(&empty).is_err());
    let unnormalized = ExperimentSpec::Cooling(CoolingSpec {
        initial: vec![LevelAmplitude { nu: 1, re: 0.5, im: 0.0 }],
        pulse1: pulse(1e13, None, Some(9e-3), 10, 0.0),
        pulse2: pulse(1e13, None, Some(9e-3), 10, 0.0),
        delay_fs: 1.0,
    });
    assert!(r.run(&unnormalized).is_err());
}
