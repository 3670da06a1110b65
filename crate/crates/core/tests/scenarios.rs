use nalgebra::DVector;

use rkhs_pe::dynamics::Oscillator;
use rkhs_pe::experiment::Scenario;
use rkhs_pe::ode::{integrate_flat, EstimatorState, Trajectory};
use rkhs_pe::pe::{analyze, pe_classical};
use rkhs_pe::{kernel_eval, PEWindow, ScenarioConfig};

fn small(extra: &[&str]) -> ScenarioConfig {
    let mut sets: Vec<String> =
        ["centers.n_centers=12", "ode.horizon=6.0", "output.traced=[1, 6]"].iter().map(|s| s.to_string()).collect();
    sets.extend(extra.iter().map(|s| s.to_string()));
    ScenarioConfig::from_overrides(&sets).unwrap()
}

fn plant_trajectory(horizon: f64) -> Trajectory {
    let plant = Oscillator::default().plant();
    let mut states = Vec::new();
    integrate_flat(
        |_, y, dy| plant.rhs_into(y, dy),
        0.0,
        &[1.5, 0.0],
        horizon,
        1e-3,
        1,
        |t, y| {
            let x = DVector::from_column_slice(y);
            states.push(EstimatorState::new(t, x.clone(), x, DVector::zeros(0)).unwrap());
        },
    )
    .unwrap();
    Trajectory::from_samples(states).unwrap()
}

#[test]
fn oscillator_energy_is_conserved() {
    let osc = Oscillator::default();
    let traj = plant_trajectory(100.0);
    let e0 = osc.energy(traj.states[0].x.as_slice());
    let drift = traj.states.iter().map(|s| (osc.energy(s.x.as_slice()) - e0).abs()).fold(0.0, f64::max);
    assert!(drift / e0.abs() <= 1e-6, "relative drift {}", drift / e0.abs());
}

#[test]
fn simulation_is_bit_reproducible() {
    let cfg = small(&["estimator.mu=50.0", "estimator.x_hat0=[1.0, 0.2]"]);
    let a = Scenario::build(&cfg).unwrap().simulate().unwrap();
    let b = Scenario::build(&cfg).unwrap().simulate().unwrap();
    assert_eq!(a, b);
}

#[test]
fn longer_windows_never_lower_levels() {
    let cfg = small(&[]);
    let sc = Scenario::build(&cfg).unwrap();
    let traj = plant_trajectory(8.0);
    let base =
        PEWindow { window: 1.5, sub_window: 0.4, t_grid_step: Some(0.1), direction_count: 64, ..PEWindow::default() };
    let short = analyze(&traj, &sc.gram, &base).unwrap();
    for window in [2.0, 3.0] {
        let long = analyze(&traj, &sc.gram, &PEWindow { window, ..base }).unwrap();
        assert!(long.gamma_pe2 >= short.gamma_pe2);
        assert!(long.gamma_pe1 >= short.gamma_pe1);
        assert!(long.gamma_classical >= short.gamma_classical);
        for (l, s) in long.excitation_curve.iter().zip(&short.excitation_curve) {
            assert_eq!(l.t, s.t);
            assert!(l.pe2 >= s.pe2 * (1.0 - 1e-12) && l.pe1 >= s.pe1 && l.classical >= s.classical * (1.0 - 1e-12));
        }
    }
}

#[test]
fn classical_level_with_kernel_regressors_matches_report() {
    let cfg = small(&[]);
    let sc = Scenario::build(&cfg).unwrap();
    let traj = plant_trajectory(5.0);
    let w = PEWindow { direction_count: 16, ..PEWindow::default() };
    let report = analyze(&traj, &sc.gram, &w).unwrap();
    let spec = cfg.kernel;
    let centers = sc.basis.centers().to_vec();
    let direct = pe_classical(
        &traj,
        |x| DVector::from_iterator(centers.len(), centers.iter().map(|z| kernel_eval(&spec, z, x).unwrap())),
        centers.len(),
        &w,
    )
    .unwrap();
    assert_eq!(direct.gamma, report.gamma_classical);
    let (lo, hi) = report.gram_bounds;
    assert!(report.gamma_classical >= lo * report.gamma_pe2 * (1.0 - 1e-9));
    assert!(report.gamma_classical <= hi * report.gamma_pe2 * (1.0 + 1e-9));
}

#[test]
fn oscillator_cycle_geometry() {
    let sc = Scenario::build(&small(&[])).unwrap();
    assert!((sc.cycle.period - 1.5366).abs() < 1e-3, "period {}", sc.cycle.period);
    assert!((sc.cycle.arc_length() - 23.45).abs() < 0.05, "arc length {}", sc.cycle.arc_length());
    let c = sc.basis.centers();
    let gaps: Vec<f64> = (0..c.len()).map(|j| sc.cycle.distance(&c[j])).collect();
    assert!(gaps.iter().all(|g| *g < 1e-6));
}

#[test]
fn shipped_configs_parse() {
    let defaults = ScenarioConfig::parse(include_str!("../../../configs/defaults.toml"), false, &[]).unwrap();
    assert_eq!(defaults, ScenarioConfig::default());
    for text in [include_str!("../../../configs/oscillator.toml"), include_str!("../../../configs/span_exact.toml")] {
        ScenarioConfig::parse(text, false, &[]).unwrap();
    }
}
