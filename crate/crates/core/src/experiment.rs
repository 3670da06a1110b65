//! Scenario construction and the end-to-end estimation study.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{CenterStrategy, PlantKind, ScenarioConfig};
use crate::dynamics::{damping_injection, lyapunov_v, lyapunov_v_rate, CoupledSystem, PlantSpec};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_centers, write_csv, write_trajectory};
use crate::linsys::{lyapunov_residual, EstimatorSystem};
use crate::ode::{integrate, step_count, EstimatorState, Rk4, Trajectory};
use crate::pe::{analyze, equicontinuity_probe, PEReport};
use crate::rkhs::{project_function, CenterSet, Gramian, RkhsFunction};

/// One period of a closed orbit as a polyline starting on the section.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycle {
    pub points: Vec<Vec<f64>>,
    pub period: f64,
    cumulative: Vec<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

impl LimitCycle {
    fn new(points: Vec<Vec<f64>>, period: f64) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            cumulative.push(cumulative.last().unwrap() + dist(&w[0], &w[1]));
        }
        LimitCycle { points, period, cumulative }
    }

    pub fn arc_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Point at arc length `s` from the start.
    pub fn at_arc_length(&self, s: f64) -> Vec<f64> {
        let k = self.cumulative.partition_point(|&c| c <= s).clamp(1, self.points.len() - 1);
        let (s0, s1) = (self.cumulative[k - 1], self.cumulative[k]);
        let theta = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (&self.points[k - 1], &self.points[k]);
        a.iter().zip(b).map(|(p, q)| p + theta * (q - p)).collect()
    }

    /// `n` points at equal arc-length spacing, the first at the start.
    pub fn resample(&self, n: usize) -> Vec<Vec<f64>> {
        let total = self.arc_length();
        (0..n).map(|j| self.at_arc_length(total * j as f64 / n as f64)).collect()
    }

    /// Euclidean distance from `x` to the polyline.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
                let len2: f64 = ab.iter().map(|v| v * v).sum();
                let t = if len2 > 0.0 {
                    (x.iter().zip(a).zip(&ab).map(|((xi, ai), d)| (xi - ai) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let proj: Vec<f64> = a.iter().zip(&ab).map(|(ai, d)| ai + t * d).collect();
                dist(x, &proj)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-axis `(min, max)`.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let d = self.points[0].len();
        (0..d)
            .map(|i| {
                self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[i]), hi.max(p[i])))
            })
            .collect()
    }
}

/// Integrates the plant from `x0`, discards `burn_in` seconds and records one
/// period, detected as the first return to the hyperplane through the
/// post-transient state normal to the flow there.
pub fn trace_limit_cycle(plant: &PlantSpec, x0: &[f64], burn_in: f64, h: f64, horizon: f64) -> Result<LimitCycle> {
    if !(h > 0.0 && horizon > 0.0 && burn_in >= 0.0) {
        return Err(Error::InvalidIntegration("cycle search needs h > 0, horizon > 0, burn_in >= 0".into()));
    }
    let d = plant.dim();
    let mut f = |_: f64, y: &[f64], dy: &mut [f64]| plant.rhs_into(y, dy);
    let mut rk = Rk4::new(d);
    let mut y = x0.to_vec();
    let burn_steps = (burn_in / h).round() as usize;
    for k in 0..burn_steps {
        rk.step(&mut f, k as f64 * h, &mut y, h);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: (k + 1) as f64 * h });
        }
    }
    let y0 = y.clone();
    let mut normal = vec![0.0; d];
    plant.rhs_into(&y0, &mut normal);
    if normal.iter().all(|v| *v == 0.0) {
        return Err(Error::NoCycleDetected { horizon });
    }
    let phase = |p: &[f64]| p.iter().zip(&y0).zip(&normal).map(|((a, b), n)| (a - b) * n).sum::<f64>();

    let mut points = vec![y0.clone()];
    let mut prev_phase = 0.0;
    let mut farthest: f64 = 0.0;
    let max_steps = (horizon / h).ceil() as usize;
    for k in 0..max_steps {
        let prev = y.clone();
        rk.step(&mut f, k as f64 * h, &mut y, h);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: burn_in + (k + 1) as f64 * h });
        }
        let ph = phase(&y);
        farthest = farthest.max(dist(&y, &y0));
        if k > 0 && prev_phase < 0.0 && ph >= 0.0 && dist(&y, &y0) < 0.1 * farthest {
            let theta = -prev_phase / (ph - prev_phase);
            let cross: Vec<f64> = prev.iter().zip(&y).map(|(a, b)| a + theta * (b - a)).collect();
            points.push(cross);
            return Ok(LimitCycle::new(points, (k as f64 + theta) * h));
        }
        points.push(y.clone());
        prev_phase = ph;
    }
    Err(Error::NoCycleDetected { horizon })
}

/// `n` centers at equal arc length along the cycle through `x0`.
pub fn sample_limit_cycle(
    plant: &PlantSpec,
    x0: &[f64],
    n: usize,
    burn_in: f64,
    h: f64,
    horizon: f64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidCenters("need at least one center".into()));
    }
    Ok(trace_limit_cycle(plant, x0, burn_in, h, horizon)?.resample(n))
}

/// Tensor grid with `counts[i]` points on `[lower[i], upper[i]]`.
pub fn uniform_grid(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    if lower.len() != upper.len() || lower.len() != counts.len() || lower.is_empty() {
        return Err(Error::Config("grid_lower, grid_upper and grid_counts must have equal nonzero length".into()));
    }
    if counts.contains(&0) {
        return Err(Error::Config("grid_counts entries must be positive".into()));
    }
    let axis = |i: usize, k: usize| {
        if counts[i] == 1 {
            0.5 * (lower[i] + upper[i])
        } else {
            lower[i] + (upper[i] - lower[i]) * k as f64 / (counts[i] - 1) as f64
        }
    };
    let mut out = vec![vec![]];
    for i in 0..lower.len() {
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                (0..counts[i]).map(move |k| {
                    let mut q = p.clone();
                    q.push(axis(i, k));
                    q
                })
            })
            .collect();
    }
    Ok(out)
}

/// Everything fixed before integration starts.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub cycle: LimitCycle,
    pub basis: Arc<CenterSet>,
    pub gram: Gramian,
    /// Plant that is integrated.
    pub plant: PlantSpec,
    /// Coefficients of the projection of the plant's nonlinearity.
    pub alpha_ref: DVector<f64>,
    pub sys: EstimatorSystem,
    pub initial: EstimatorState,
}

impl Scenario {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let osc = cfg.plant.oscillator();
        let truth = osc.plant();
        let c = &cfg.centers;
        let cycle = trace_limit_cycle(&truth, &cfg.plant.x0, c.burn_in, c.cycle_step, c.cycle_horizon)?;
        let centers = match c.center_strategy {
            CenterStrategy::LimitCycle => cycle.resample(c.n_centers),
            CenterStrategy::Explicit => c.points.clone(),
            CenterStrategy::UniformGrid => uniform_grid(&c.grid_lower, &c.grid_upper, &c.grid_counts)?,
        };
        let basis = Arc::new(CenterSet::new(centers, cfg.kernel)?);
        let gram = Gramian::assemble(basis.clone(), cfg.gramian.jitter)?;
        let n = basis.len();

        let projected = project_function(|x| osc.nonlinearity(x), &gram)?;
        let (plant, alpha_ref) = match cfg.plant.kind {
            PlantKind::Oscillator => (truth, projected.coeffs().clone()),
            PlantKind::SpanProjection => {
                let a = projected.coeffs().clone();
                (truth.with_span_nonlinearity(projected), a)
            }
            PlantKind::Linear => {
                let lin = PlantSpec::linear(truth.a.clone(), truth.b.clone());
                (lin, DVector::zeros(n))
            }
        };

        let e = &cfg.estimator;
        let d = cfg.kernel.dim_d;
        let q = DMatrix::from_fn(d, d, |i, j| e.q[i][j]);
        let sys = EstimatorSystem::new(plant.a.clone(), damping_injection(e.damping), plant.b.clone(), q, e.mu)?;

        let x0 = DVector::from_column_slice(&cfg.plant.x0);
        let x_hat0 = e.x_hat0.as_ref().map_or(x0.clone(), |v| DVector::from_column_slice(v));
        let a0 = match &e.a0 {
            Some(v) if v.len() != n => {
                return Err(Error::Config(format!("estimator.a0 has {} entries, expected {n}", v.len())))
            }
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(n),
        };
        if let Some(&j) = cfg.output.traced.iter().find(|&&j| j > n) {
            return Err(Error::Config(format!("output.traced index {j} exceeds the {n} centers")));
        }
        let initial = EstimatorState::new(0.0, x0, x_hat0, a0)?;
        step_count(0.0, cfg.ode.horizon, cfg.ode.h, cfg.ode.record_every)?;
        Ok(Scenario { config: cfg.clone(), cycle, basis, gram, plant, alpha_ref, sys, initial })
    }

    /// Integrates the coupled plant/estimator system.
    pub fn simulate(&self) -> Result<Trajectory> {
        let mut rhs = CoupledSystem::new(&self.plant, &self.sys, &self.gram);
        let o = &self.config.ode;
        integrate(|t, y, dy| rhs.rhs(t, y, dy), &self.initial, o.horizon, o.h, o.record_every)
    }

    /// `f` of the integrated plant.
    pub fn f_true(&self, x: &[f64]) -> f64 {
        (self.plant.f_true)(x)
    }

    /// `sqrt((a - alpha)^T K (a - alpha))`.
    pub fn coefficient_error(&self, a: &DVector<f64>) -> f64 {
        let da = a - &self.alpha_ref;
        self.gram.quadratic(&da, &da).max(0.0).sqrt()
    }
}

/// Statistics of a traced coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTrace {
    /// One-based index.
    pub index: usize,
    pub alpha: f64,
    pub final_value: f64,
    /// `max - min` over the last 10% of the run.
    pub tail_oscillation: f64,
}

/// Error `|f - f_hat|` on a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    pub points: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub f_hat: Vec<f64>,
}

impl ErrorSample {
    fn evaluate(points: Vec<Vec<f64>>, scenario: &Scenario, a: &DVector<f64>) -> Self {
        let vals: Vec<(f64, f64)> =
            points.par_iter().map(|p| (scenario.f_true(p), scenario.basis.kernel_vector(p).dot(a))).collect();
        let (f, f_hat) = vals.into_iter().unzip();
        ErrorSample { points, f, f_hat }
    }

    pub fn abs_errors(&self) -> Vec<f64> {
        self.f.iter().zip(&self.f_hat).map(|(a, b)| (a - b).abs()).collect()
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Outputs of [`run_scenario`].
pub struct RunArtifacts {
    pub scenario: Scenario,
    pub trajectory: Trajectory,
    pub pe: PEReport,
    pub equicontinuity: Option<f64>,
    /// `(t, V, -x~^T Q x~)`.
    pub lyapunov: Vec<(f64, f64, f64)>,
    pub traces: Vec<CoefficientTrace>,
    pub surface: ErrorSample,
    /// Whether each surface point lies in the off-cycle annulus.
    pub annulus_mask: Vec<bool>,
    pub cycle_error: ErrorSample,
    pub median_on_cycle: f64,
    pub median_annulus: f64,
    pub final_state_error: f64,
    pub final_coefficient_error: f64,
}

impl RunArtifacts {
    pub fn final_coeffs(&self) -> &DVector<f64> {
        &self.trajectory.last().a
    }
}

/// Builds, integrates and post-processes a scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunArtifacts> {
    let scenario = Scenario::build(cfg)?;
    let trajectory = scenario.simulate()?;
    let pe = analyze(&trajectory, &scenario.gram, &cfg.pe)?;

    let nu = scenario.basis.kernel().nu();
    let equicontinuity = if cfg.output.probe_directions > 0 && nu > 1.0 {
        let grid = scenario.cycle.resample(200);
        Some(equicontinuity_probe(&scenario.gram, cfg.output.probe_directions, &grid, cfg.pe.seed)?)
    } else {
        None
    };

    let lyapunov = trajectory
        .states
        .iter()
        .map(|s| {
            (s.t, lyapunov_v(&scenario.sys, &scenario.gram, s, &scenario.alpha_ref), lyapunov_v_rate(&scenario.sys, s))
        })
        .collect();

    let tail_start = trajectory.start() + 0.9 * (trajectory.end() - trajectory.start());
    let tail: Vec<&EstimatorState> = trajectory.states.iter().filter(|s| s.t >= tail_start).collect();
    let a_final = trajectory.last().a.clone();
    let traces = cfg
        .output
        .traced
        .iter()
        .map(|&j| {
            let (lo, hi) = tail
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.a[j - 1]), hi.max(s.a[j - 1])));
            CoefficientTrace {
                index: j,
                alpha: scenario.alpha_ref[j - 1],
                final_value: a_final[j - 1],
                tail_oscillation: hi - lo,
            }
        })
        .collect();

    let bbox = scenario.cycle.bounding_box();
    let m = cfg.output.surface_points;
    let axes: Vec<Vec<f64>> = bbox
        .iter()
        .map(|&(lo, hi)| {
            let pad = 0.5 * cfg.output.surface_inflation * (hi - lo);
            (0..m).map(|k| lo - pad + (hi - lo + 2.0 * pad) * k as f64 / (m - 1) as f64).collect()
        })
        .collect();
    let grid: Vec<Vec<f64>> = axes[0].iter().flat_map(|&a| axes[1].iter().map(move |&b| vec![a, b])).collect();
    let surface = ErrorSample::evaluate(grid, &scenario, &a_final);
    let annulus_mask: Vec<bool> =
        surface.points.par_iter().map(|p| scenario.cycle.distance(p) >= cfg.output.annulus_distance).collect();
    let cycle_error = ErrorSample::evaluate(scenario.cycle.resample(cfg.output.cycle_samples), &scenario, &a_final);

    let surf_err = surface.abs_errors();
    let annulus: Vec<f64> = surf_err.iter().zip(&annulus_mask).filter(|(_, &m)| m).map(|(e, _)| *e).collect();
    let median_on_cycle = median(&cycle_error.abs_errors());
    let median_annulus = median(&annulus);
    let final_state_error = trajectory.last().state_error().norm();
    let final_coefficient_error = scenario.coefficient_error(&a_final);

    Ok(RunArtifacts {
        scenario,
        trajectory,
        pe,
        equicontinuity,
        lyapunov,
        traces,
        surface,
        annulus_mask,
        cycle_error,
        median_on_cycle,
        median_annulus,
        final_state_error,
        final_coefficient_error,
    })
}

/// The PE block of `report.txt`; `pe-analyze` emits the same text.
pub fn pe_section(pe: &PEReport, jitter: f64) -> String {
    let mut s = String::new();
    let w = &pe.window;
    let _ = writeln!(s, "[pe]");
    let _ = writeln!(s, "gamma_pe1 = {}", fmt_f64(pe.gamma_pe1));
    let _ = writeln!(s, "gamma_pe2 = {}", fmt_f64(pe.gamma_pe2));
    let _ = writeln!(s, "gamma_classical = {}", fmt_f64(pe.gamma_classical));
    let _ = writeln!(s, "worst_window_start = {}", fmt_f64(pe.worst_start));
    let _ = writeln!(s, "implication_slack = {}", fmt_f64(pe.implication_slack));
    let _ = writeln!(s, "gram_lambda_min = {}", fmt_f64(pe.gram_bounds.0));
    let _ = writeln!(s, "gram_lambda_max = {}", fmt_f64(pe.gram_bounds.1));
    let _ = writeln!(s, "jitter = {}", fmt_f64(jitter));
    let _ = writeln!(s, "t0 = {}", fmt_f64(w.t0));
    let _ = writeln!(s, "window = {}", fmt_f64(pe.effective_window));
    let _ = writeln!(s, "sub_window = {}", fmt_f64(pe.effective_sub_window));
    let _ = writeln!(s, "t_grid_step = {}", fmt_f64(pe.effective_grid_step));
    let _ = writeln!(s, "window_count = {}", pe.window_count);
    let _ = writeln!(s, "direction_count = {}", w.direction_count);
    let _ = writeln!(s, "seed = {}", w.seed);
    let _ = writeln!(
        s,
        "method = \"PE.2 exact via smallest generalized eigenvalue of (M, K + eps I); \
         PE.1 sampled over seeded unit-norm directions, sub-windows inside each window; \
         classical via lambda_min(M); trapezoid integrals on the trajectory grid\""
    );
    let worst: Vec<String> = pe.worst_direction.iter().map(|v| fmt_f64(*v)).collect();
    let _ = writeln!(s, "worst_direction = [{}]", worst.join(", "));
    s
}

/// Writes the PE curve as `t, pe1, pe2, classical`.
pub fn write_pe_curve(path: &Path, pe: &PEReport) -> Result<()> {
    let header: Vec<String> = ["t", "pe1", "pe2", "classical"].iter().map(|s| s.to_string()).collect();
    write_csv(path, &header, pe.excitation_curve.iter().map(|c| vec![c.t, c.pe1, c.pe2, c.classical]))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

impl RunArtifacts {
    /// Human-readable report with the resolved configuration.
    pub fn report(&self) -> String {
        let sc = &self.scenario;
        let mut s = String::new();
        let _ = writeln!(s, "# resolved configuration");
        let _ = writeln!(s, "{}", sc.config.to_toml());
        let _ = writeln!(s, "[setup]");
        let _ = writeln!(s, "n_centers = {}", sc.basis.len());
        let _ = writeln!(s, "min_center_separation = {}", fmt_f64(sc.basis.min_separation()));
        let _ = writeln!(s, "cycle_period = {}", fmt_f64(sc.cycle.period));
        let _ = writeln!(s, "cycle_arc_length = {}", fmt_f64(sc.cycle.arc_length()));
        let _ = writeln!(s, "embedding_constant = {}", fmt_f64(sc.basis.kernel().embedding_constant()));
        let _ = writeln!(s, "lyapunov_residual = {}", fmt_f64(lyapunov_residual(&sc.sys.a_est, &sc.sys.p, &sc.sys.q)));
        let p: Vec<String> = sc.sys.p.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(s, "lyapunov_p_column_major = [{}]", p.join(", "));
        let _ = writeln!(s);
        let _ = write!(s, "{}", pe_section(&self.pe, sc.gram.jitter()));
        let _ = writeln!(s);
        let _ = writeln!(s, "[results]");
        let _ = writeln!(s, "final_time = {}", fmt_f64(self.trajectory.end()));
        let _ = writeln!(s, "final_state_error = {}", fmt_f64(self.final_state_error));
        let _ = writeln!(s, "final_coefficient_error_k = {}", fmt_f64(self.final_coefficient_error));
        let _ = writeln!(s, "median_error_on_cycle = {}", fmt_f64(self.median_on_cycle));
        let _ = writeln!(s, "median_error_annulus = {}", fmt_f64(self.median_annulus));
        let _ = writeln!(s, "annulus_points = {}", self.annulus_mask.iter().filter(|m| **m).count());
        if let Some(l) = self.equicontinuity {
            let _ = writeln!(s, "gradient_bound = {}", fmt_f64(l));
        }
        for t in &self.traces {
            let _ = writeln!(
                s,
                "coefficient_{} = {{ alpha = {}, final = {}, tail_oscillation = {} }}",
                t.index,
                fmt_f64(t.alpha),
                fmt_f64(t.final_value),
                fmt_f64(t.tail_oscillation)
            );
        }
        s
    }

    /// Writes all artifact files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sc = &self.scenario;
        write_trajectory(&dir.join("trajectory.csv"), &self.trajectory)?;
        write_centers(&dir.join("centers.csv"), sc.basis.centers())?;

        let mut h = vec!["t".to_string()];
        for t in &self.traces {
            h.push(format!("a{}", t.index));
            h.push(format!("alpha{}", t.index));
        }
        let rows = self.trajectory.states.iter().map(|s| {
            let mut row = vec![s.t];
            for t in &self.traces {
                row.push(s.a[t.index - 1]);
                row.push(t.alpha);
            }
            row
        });
        write_csv(&dir.join("coeffs.csv"), &h, rows)?;

        write_csv(
            &dir.join("final_coeffs.csv"),
            &header(&["j", "a", "alpha"]),
            self.final_coeffs()
                .iter()
                .zip(sc.alpha_ref.iter())
                .enumerate()
                .map(|(j, (a, al))| vec![(j + 1) as f64, *a, *al]),
        )?;
        write_csv(
            &dir.join("lyapunov.csv"),
            &header(&["t", "V", "V_dot_predicted"]),
            self.lyapunov.iter().map(|&(t, v, r)| vec![t, v, r]),
        )?;
        write_pe_curve(&dir.join("pe_curve.csv"), &self.pe)?;
        let sample_rows = |e: &ErrorSample| {
            e.points
                .iter()
                .zip(e.f.iter().zip(&e.f_hat))
                .map(|(p, (f, fh))| vec![p[0], p[1], *f, *fh, (f - fh).abs()])
                .collect::<Vec<_>>()
        };
        let err_header = header(&["x1", "x2", "f", "f_hat", "abs_err"]);
        write_csv(&dir.join("surface.csv"), &err_header, sample_rows(&self.surface))?;
        write_csv(&dir.join("cycle_error.csv"), &err_header, sample_rows(&self.cycle_error))?;
        std::fs::write(dir.join("report.txt"), self.report()).map_err(|e| Error::io(dir.join("report.txt"), e))
    }
}

/// Projection of the configured oscillator nonlinearity onto the centers.
pub fn project_truth(cfg: &ScenarioConfig) -> Result<(Arc<CenterSet>, Gramian, RkhsFunction)> {
    let sc = Scenario::build(cfg)?;
    let osc = cfg.plant.oscillator();
    let f = project_function(|x| osc.nonlinearity(x), &sc.gram)?;
    Ok((sc.basis, sc.gram, f))
}
