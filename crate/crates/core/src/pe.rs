//! Persistence-of-excitation levels along recorded trajectories.
//!
//! Three windowed quantities are evaluated on the span of the centers:
//!
//! * PE.1: `inf_g sup_s |int_s^{s+delta} g(x(tau)) dtau|` over unit-norm `g`,
//!   estimated by sampling directions;
//! * PE.2: `inf_g int_t^{t+Delta} g(x(tau))^2 dtau`, computed exactly as the
//!   smallest generalized eigenvalue of `(M(t), K + eps I)`;
//! * classical: `lambda_min(M(t))` for a regressor vector `Phi`.
//!
//! All integrals are composite trapezoid sums on the trajectory grid, and the
//! infimum over window starts is taken on a sub-grid.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::Trajectory;
use crate::rkhs::{unit_sphere_coeffs, Gramian};

/// Finite-difference step of the gradient probe.
pub const PROBE_STEP: f64 = 1e-5;

fn default_window() -> f64 {
    2.0
}

fn default_sub_window() -> f64 {
    0.5
}

fn default_direction_count() -> usize {
    512
}

/// Window parameters shared by all three conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PEWindow {
    /// First admissible window start.
    #[serde(default)]
    pub t0: f64,
    /// Window length `Delta`.
    #[serde(default = "default_window")]
    pub window: f64,
    /// Sub-window length `delta` of PE.1.
    #[serde(default = "default_sub_window")]
    pub sub_window: f64,
    /// Spacing of window starts; `window / 20` when absent.
    #[serde(default)]
    pub t_grid_step: Option<f64>,
    #[serde(default = "default_direction_count")]
    pub direction_count: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PEWindow {
    fn default() -> Self {
        PEWindow {
            t0: 0.0,
            window: default_window(),
            sub_window: default_sub_window(),
            t_grid_step: None,
            direction_count: default_direction_count(),
            seed: 0,
        }
    }
}

impl PEWindow {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidWindow(m));
        if !self.t0.is_finite() {
            return bad(format!("t0 must be finite, got {}", self.t0));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return bad(format!("window must be positive, got {}", self.window));
        }
        if !(self.sub_window > 0.0 && self.sub_window <= self.window) {
            return bad(format!(
                "sub_window must lie in (0, window], got {} with window {}",
                self.sub_window, self.window
            ));
        }
        if let Some(g) = self.t_grid_step {
            if !(g.is_finite() && g > 0.0) {
                return bad(format!("t_grid_step must be positive, got {g}"));
            }
        }
        if self.direction_count == 0 {
            return bad("direction_count must be at least 1".into());
        }
        Ok(())
    }

    pub fn grid_step(&self) -> f64 {
        self.t_grid_step.unwrap_or(self.window / 20.0)
    }

    /// Snaps the window onto a uniform time grid.
    pub fn resolve(&self, times: &[f64]) -> Result<ResolvedWindow> {
        self.validate()?;
        if times.len() < 2 {
            return Err(Error::WindowExceedsTrajectory { needed: self.t0 + self.window, available: 0.0 });
        }
        let first = times[0];
        let last = times[times.len() - 1];
        let spacing = (last - first) / (times.len() - 1) as f64;
        let samples = |len: f64| ((len / spacing).round() as usize).max(1);
        let window_samples = samples(self.window);
        let sub_samples = samples(self.sub_window).min(window_samples);
        let grid_samples = samples(self.grid_step());
        let start_index = if self.t0 <= first { 0 } else { ((self.t0 - first) / spacing - 1e-9).ceil() as usize };
        let n = times.len();
        if start_index + window_samples > n - 1 {
            return Err(Error::WindowExceedsTrajectory {
                needed: first + (start_index + window_samples) as f64 * spacing,
                available: last,
            });
        }
        let starts = (start_index..=n - 1 - window_samples).step_by(grid_samples).collect();
        Ok(ResolvedWindow { spacing, window_samples, sub_samples, grid_samples, starts, origin: first })
    }
}

/// A window snapped to the sample grid of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedWindow {
    pub spacing: f64,
    pub window_samples: usize,
    pub sub_samples: usize,
    pub grid_samples: usize,
    /// Sample indices of the window starts.
    pub starts: Vec<usize>,
    origin: f64,
}

impl ResolvedWindow {
    /// Effective `Delta`.
    pub fn window(&self) -> f64 {
        self.window_samples as f64 * self.spacing
    }

    /// Effective `delta`.
    pub fn sub_window(&self) -> f64 {
        self.sub_samples as f64 * self.spacing
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_samples as f64 * self.spacing
    }

    pub fn start_time(&self, k: usize) -> f64 {
        self.origin + self.starts[k] as f64 * self.spacing
    }

    pub fn start_times(&self) -> Vec<f64> {
        (0..self.starts.len()).map(|k| self.start_time(k)).collect()
    }

    /// First and last sample index touched by any window.
    pub fn span(&self) -> (usize, usize) {
        (self.starts[0], self.starts[self.starts.len() - 1] + self.window_samples)
    }
}

/// Regressor values `Phi(x(t_k))` stored column-wise for the samples
/// `offset..offset + cols` that the windows touch.
struct Features {
    cols: DMatrix<f64>,
    offset: usize,
}

impl Features {
    fn build<F>(points: &[Vec<f64>], rw: &ResolvedWindow, width: usize, phi: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let (first, last) = rw.span();
        let mut buf = vec![0.0; width * (last - first + 1)];
        buf.par_chunks_mut(width).enumerate().for_each(|(i, col)| phi(&points[first + i], col));
        Features { cols: DMatrix::from_vec(width, last - first + 1, buf), offset: first }
    }

    fn kernel(traj: &Trajectory, gram: &Gramian, rw: &ResolvedWindow) -> Result<Self> {
        let basis = gram.basis();
        if let Some(s) = traj.states.iter().find(|s| s.dim() != basis.dim()) {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: s.dim() });
        }
        let points = traj.plant_states();
        let kernel = basis.kernel();
        Ok(Features::build(&points, rw, basis.len(), |x, col| {
            for (c, z) in col.iter_mut().zip(basis.centers()) {
                *c = kernel.eval(x, z);
            }
        }))
    }

    /// Window starts relative to `offset`.
    fn local_starts(&self, rw: &ResolvedWindow) -> Vec<usize> {
        rw.starts.iter().map(|s| s - self.offset).collect()
    }

    /// Trapezoid integral of `Phi Phi^T` over local samples `[p, p + len]`.
    fn moment(&self, p: usize, len: usize, spacing: f64) -> DMatrix<f64> {
        let mut block = self.cols.columns(p, len + 1).clone_owned();
        let full = spacing.sqrt();
        let half = (0.5 * spacing).sqrt();
        for (i, mut col) in block.column_iter_mut().enumerate() {
            col *= if i == 0 || i == len { half } else { full };
        }
        let m = &block * block.transpose();
        (&m + m.transpose()) * 0.5
    }

    /// Calls `visit(k, M_k)` for every window in order. Windows are summed
    /// from blocks of `gcd(grid, window)` samples shared between
    /// overlapping windows, which reproduces the composite trapezoid rule.
    fn for_each_moment<V: FnMut(usize, DMatrix<f64>)>(&self, rw: &ResolvedWindow, mut visit: V) {
        let starts = self.local_starts(rw);
        let b = gcd(rw.grid_samples, rw.window_samples);
        let per_window = rw.window_samples / b;
        let mut cache: VecDeque<(usize, DMatrix<f64>)> = VecDeque::new();
        for (k, &s) in starts.iter().enumerate() {
            let first_block = s / b;
            while cache.front().is_some_and(|(j, _)| *j < first_block) {
                cache.pop_front();
            }
            let mut next = cache.back().map_or(first_block, |(j, _)| j + 1).max(first_block);
            while next < first_block + per_window {
                cache.push_back((next, self.moment(next * b, b, rw.spacing)));
                next += 1;
            }
            let mut m = cache[0].1.clone();
            for (_, blk) in cache.iter().skip(1).take(per_window - 1) {
                m += blk;
            }
            visit(k, m);
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Smallest generalized eigenpair of `(m, L L^T)`, eigenvector normalized to
/// unit `L L^T`-norm.
fn min_generalized_eigen(m: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>) -> (f64, DVector<f64>) {
    let l = chol.l();
    let x = l.solve_lower_triangular(m).expect("Cholesky factor is nonsingular");
    let c = l.solve_lower_triangular(&x.transpose()).expect("Cholesky factor is nonsingular");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let (k, lambda) =
        eig.eigenvalues
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let v = eig.eigenvectors.column(k).clone_owned();
    let mut a = l.transpose().solve_upper_triangular(&v).expect("Cholesky factor is nonsingular");
    // fix the sign so the output is reproducible
    if let Some(&pivot) = a.iter().max_by(|p, q| p.abs().total_cmp(&q.abs())) {
        if pivot < 0.0 {
            a = -a;
        }
    }
    (lambda, a)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Windows handed to the eigen-solvers at once.
const BATCH: usize = 32;

/// PE.2 eigenpair and classical level of one window, each if requested.
type WindowLevel = (Option<(f64, DVector<f64>)>, Option<f64>);

/// Per-window PE.2 eigenpairs (when `metric` is given) and classical levels.
fn window_levels(feats: &Features, rw: &ResolvedWindow, metric: Option<&Gramian>, classical: bool) -> Vec<WindowLevel> {
    let mut out = Vec::with_capacity(rw.starts.len());
    let mut batch = Vec::with_capacity(BATCH);
    let flush = |batch: &mut Vec<DMatrix<f64>>, out: &mut Vec<_>| {
        let levels: Vec<_> = batch
            .par_iter()
            .map(|m| {
                let g = metric.map(|g| min_generalized_eigen(m, g.factor()));
                let c = classical.then(|| min_eigenvalue(m));
                (g, c)
            })
            .collect();
        out.extend(levels);
        batch.clear();
    };
    feats.for_each_moment(rw, |_, m| {
        batch.push(m);
        if batch.len() == BATCH {
            flush(&mut batch, &mut out);
        }
    });
    flush(&mut batch, &mut out);
    out
}

/// Result of the exact PE.2 evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pe2Result {
    pub gamma: f64,
    /// Unit-norm coefficients attaining the minimum at the worst window.
    pub worst_direction: DVector<f64>,
    pub worst_start: f64,
    /// `(t, level)` per window start.
    pub curve: Vec<(f64, f64)>,
}

fn pe2_from_levels(levels: &[WindowLevel], rw: &ResolvedWindow) -> Pe2Result {
    let pairs: Vec<&(f64, DVector<f64>)> = levels.iter().map(|l| l.0.as_ref().expect("PE.2 level")).collect();
    let mut worst = 0;
    for (k, (v, _)) in pairs.iter().enumerate() {
        if *v < pairs[worst].0 {
            worst = k;
        }
    }
    Pe2Result {
        gamma: pairs[worst].0,
        worst_direction: pairs[worst].1.clone(),
        worst_start: rw.start_time(worst),
        curve: pairs.iter().enumerate().map(|(k, (v, _))| (rw.start_time(k), *v)).collect(),
    }
}

/// Exact PE.2 level on the span of the centers.
pub fn pe2_exact(traj: &Trajectory, gram: &Gramian, w: &PEWindow) -> Result<Pe2Result> {
    let rw = w.resolve(&traj.times)?;
    let feats = Features::kernel(traj, gram, &rw)?;
    Ok(pe2_from_levels(&window_levels(&feats, &rw, Some(gram), false), &rw))
}

/// Result of the classical PE evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalResult {
    pub gamma: f64,
    pub curve: Vec<(f64, f64)>,
}

fn classical_from_levels(levels: &[WindowLevel], rw: &ResolvedWindow) -> ClassicalResult {
    let curve: Vec<(f64, f64)> =
        levels.iter().enumerate().map(|(k, l)| (rw.start_time(k), l.1.expect("classical level"))).collect();
    ClassicalResult { gamma: curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min), curve }
}

/// `inf_t lambda_min(int_t^{t+Delta} Phi Phi^T)` for regressors `Phi` of
/// width `width`.
pub fn pe_classical<F>(traj: &Trajectory, regressors: F, width: usize, w: &PEWindow) -> Result<ClassicalResult>
where
    F: Fn(&[f64]) -> DVector<f64> + Sync,
{
    let rw = w.resolve(&traj.times)?;
    let feats = Features::build(&traj.plant_states(), &rw, width, |x, col| {
        col.copy_from_slice(regressors(x).as_slice());
    });
    Ok(classical_from_levels(&window_levels(&feats, &rw, None, true), &rw))
}

/// Result of the sampled PE.1 evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pe1Result {
    pub gamma: f64,
    /// `(t, min over directions)` per window start.
    pub curve: Vec<(f64, f64)>,
    /// Sampled unit-norm coefficient vectors.
    pub directions: Vec<DVector<f64>>,
    /// `levels[j][k]`: PE.1 value of direction `j` on window `k`.
    pub levels: Vec<Vec<f64>>,
    /// `energies[j][k]`: `int g_j(x)^2` over window `k`, the PE.2 integral.
    pub energies: Vec<Vec<f64>>,
    pub sub_window: f64,
}

/// PE.1 level estimated over `w.direction_count` seeded unit-norm directions.
///
/// Sub-windows `[s, s + delta]` range over the grid with `s + delta` inside
/// the window, so each direction's value is comparable with its PE.2 integral
/// on the same window.
pub fn pe1_sampled(traj: &Trajectory, gram: &Gramian, w: &PEWindow) -> Result<Pe1Result> {
    let rw = w.resolve(&traj.times)?;
    let feats = Features::kernel(traj, gram, &rw)?;
    let directions = unit_sphere_coeffs(gram, w.direction_count, w.seed);
    Ok(pe1_from_features(&feats, &rw, directions))
}

/// `out[i] = max(values[i..i + len])` by a monotone deque.
fn sliding_max(values: &[f64], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1 - len);
    let mut dq: VecDeque<usize> = VecDeque::new();
    for (j, &v) in values.iter().enumerate() {
        while dq.back().is_some_and(|&i| values[i] <= v) {
            dq.pop_back();
        }
        dq.push_back(j);
        if dq[0] + len <= j {
            dq.pop_front();
        }
        if j + 1 >= len {
            out.push(values[dq[0]]);
        }
    }
    out
}

fn pe1_from_features(feats: &Features, rw: &ResolvedWindow, directions: Vec<DVector<f64>>) -> Pe1Result {
    let h = rw.spacing;
    let starts = feats.local_starts(rw);
    let reach = rw.window_samples - rw.sub_samples + 1;
    let per_dir: Vec<(Vec<f64>, Vec<f64>)> = directions
        .par_iter()
        .map(|a| {
            let g = feats.cols.tr_mul(a);
            let n = g.len();
            let mut lin = vec![0.0; n];
            let mut sq = vec![0.0; n];
            for k in 1..n {
                lin[k] = lin[k - 1] + 0.5 * h * (g[k - 1] + g[k]);
                sq[k] = sq[k - 1] + 0.5 * h * (g[k - 1] * g[k - 1] + g[k] * g[k]);
            }
            let sub: Vec<f64> = (0..n - rw.sub_samples).map(|i| (lin[i + rw.sub_samples] - lin[i]).abs()).collect();
            let best = sliding_max(&sub, reach);
            let levels = starts.iter().map(|&s| best[s]).collect();
            let energies = starts.iter().map(|&s| sq[s + rw.window_samples] - sq[s]).collect();
            (levels, energies)
        })
        .collect();
    let (levels, energies): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per_dir.into_iter().unzip();
    let curve: Vec<(f64, f64)> = (0..rw.starts.len())
        .map(|k| (rw.start_time(k), levels.iter().map(|l| l[k]).fold(f64::INFINITY, f64::min)))
        .collect();
    Pe1Result {
        gamma: curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min),
        curve,
        directions,
        levels,
        energies,
        sub_window: rw.sub_window(),
    }
}

impl Pe1Result {
    /// Smallest `energy - level^2 / delta` over all directions and windows.
    /// Nonnegative up to round-off by the Cauchy–Schwarz inequality.
    pub fn implication_slack(&self) -> f64 {
        let mut slack = f64::INFINITY;
        for (ls, es) in self.levels.iter().zip(&self.energies) {
            for (l, e) in ls.iter().zip(es) {
                slack = slack.min(e - l * l / self.sub_window);
            }
        }
        slack
    }
}

/// One row of the excitation curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub pe1: f64,
    pub pe2: f64,
    pub classical: f64,
}

/// Combined output of the three conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct PEReport {
    pub gamma_pe1: f64,
    pub gamma_pe2: f64,
    pub gamma_classical: f64,
    pub worst_direction: DVector<f64>,
    pub worst_start: f64,
    pub window: PEWindow,
    pub effective_window: f64,
    pub effective_sub_window: f64,
    pub effective_grid_step: f64,
    pub window_count: usize,
    pub implication_slack: f64,
    /// `(lambda_min, lambda_max)` of `K + eps I`.
    pub gram_bounds: (f64, f64),
    pub excitation_curve: Vec<CurvePoint>,
}

/// Evaluates PE.1, PE.2 and the classical condition with `Phi = k(.)`.
pub fn analyze(traj: &Trajectory, gram: &Gramian, w: &PEWindow) -> Result<PEReport> {
    let rw = w.resolve(&traj.times)?;
    let feats = Features::kernel(traj, gram, &rw)?;
    let levels = window_levels(&feats, &rw, Some(gram), true);
    let pe2 = pe2_from_levels(&levels, &rw);
    let classical = classical_from_levels(&levels, &rw);
    let pe1 = pe1_from_features(&feats, &rw, unit_sphere_coeffs(gram, w.direction_count, w.seed));
    let excitation_curve = (0..rw.starts.len())
        .map(|k| CurvePoint {
            t: rw.start_time(k),
            pe1: pe1.curve[k].1,
            pe2: pe2.curve[k].1,
            classical: classical.curve[k].1,
        })
        .collect();
    let (lo, hi) = gram.spectral_bounds();
    Ok(PEReport {
        gamma_pe1: pe1.gamma,
        gamma_pe2: pe2.gamma,
        gamma_classical: classical.gamma,
        worst_direction: pe2.worst_direction,
        worst_start: pe2.worst_start,
        window: *w,
        effective_window: rw.window(),
        effective_sub_window: rw.sub_window(),
        effective_grid_step: rw.grid_step(),
        window_count: rw.starts.len(),
        implication_slack: pe1.implication_slack(),
        gram_bounds: (lo + gram.jitter(), hi + gram.jitter()),
        excitation_curve,
    })
}

/// `M(t)` for the window starting at the grid point nearest `t`.
pub fn window_moment(traj: &Trajectory, gram: &Gramian, w: &PEWindow, t: f64) -> Result<DMatrix<f64>> {
    let rw = w.resolve(&traj.times)?;
    let k = (0..rw.starts.len())
        .min_by(|&i, &j| (rw.start_time(i) - t).abs().total_cmp(&(rw.start_time(j) - t).abs()))
        .expect("at least one window");
    let single = ResolvedWindow { starts: vec![rw.starts[k]], ..rw };
    let feats = Features::kernel(traj, gram, &single)?;
    Ok(feats.moment(0, single.window_samples, single.spacing))
}

/// `a^T M a / a^T (K + eps I) a`.
pub fn rayleigh_quotient(m: &DMatrix<f64>, gram: &Gramian, a: &DVector<f64>) -> f64 {
    let metric = gram.quadratic(a, a) + gram.jitter() * a.norm_squared();
    a.dot(&(m * a)) / metric
}

/// Smallest Rayleigh quotient over `count` seeded unit-norm directions and the
/// direction attaining it.
pub fn sampled_rayleigh_min(m: &DMatrix<f64>, gram: &Gramian, count: usize, seed: u64) -> (f64, DVector<f64>) {
    let dirs = unit_sphere_coeffs(gram, count, seed);
    let q: Vec<f64> = dirs.par_iter().map(|a| rayleigh_quotient(m, gram, a)).collect();
    let mut best = 0;
    for (k, v) in q.iter().enumerate() {
        if *v < q[best] {
            best = k;
        }
    }
    (q[best], dirs[best].clone())
}

/// Inverse iteration `(M + sigma G) a_{k+1} = G a_k` towards the smallest
/// generalized eigenpair of `(M, G)`, `G = K + eps I`, started from `a0`.
/// `sigma` is a small positive shift keeping the system nonsingular.
pub fn refine_min_direction(
    m: &DMatrix<f64>,
    gram: &Gramian,
    a0: &DVector<f64>,
    iterations: usize,
) -> (f64, DVector<f64>) {
    let g = gram.regularized();
    let sigma = 1e-12 * m.amax().max(f64::MIN_POSITIVE);
    let lu = (m + &g * sigma).lu();
    let mut a = a0.clone();
    for _ in 0..iterations {
        let Some(next) = lu.solve(&(&g * &a)) else { break };
        let norm = next.dot(&(&g * &next)).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        a = next / norm;
    }
    (rayleigh_quotient(m, gram, &a), a)
}

/// Largest finite-difference gradient norm of sampled unit-norm span
/// elements over `grid`.
pub fn equicontinuity_probe(gram: &Gramian, sample_count: usize, grid: &[Vec<f64>], seed: u64) -> Result<f64> {
    let basis = gram.basis();
    let nu = basis.kernel().nu();
    if nu <= 1.0 {
        return Err(Error::KernelNotDifferentiable { nu });
    }
    let d = basis.dim();
    if let Some(p) = grid.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: p.len() });
    }
    let dirs = unit_sphere_coeffs(gram, sample_count, seed);
    // per grid point, one difference quotient of the kernel vector per axis
    let diffs: Vec<Vec<DVector<f64>>> = grid
        .par_iter()
        .map(|x| {
            (0..d)
                .map(|i| {
                    let mut fwd = x.clone();
                    let mut bwd = x.clone();
                    fwd[i] += PROBE_STEP;
                    bwd[i] -= PROBE_STEP;
                    (basis.kernel_vector(&fwd) - basis.kernel_vector(&bwd)) / (2.0 * PROBE_STEP)
                })
                .collect()
        })
        .collect();
    let per_point: Vec<f64> = diffs
        .par_iter()
        .map(|axes| {
            dirs.iter().map(|a| axes.iter().map(|col| col.dot(a).powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max)
        })
        .collect();
    Ok(per_point.into_iter().fold(0.0, f64::max))
}

/// Finite-difference gradient of `x -> a^T k(x)`.
pub fn span_gradient(gram: &Gramian, a: &DVector<f64>, x: &[f64]) -> DVector<f64> {
    let basis = gram.basis();
    DVector::from_fn(x.len(), |i, _| {
        let mut fwd = x.to_vec();
        let mut bwd = x.to_vec();
        fwd[i] += PROBE_STEP;
        bwd[i] -= PROBE_STEP;
        (basis.kernel_vector(&fwd).dot(a) - basis.kernel_vector(&bwd).dot(a)) / (2.0 * PROBE_STEP)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::ode::EstimatorState;
    use crate::rkhs::{CenterSet, JitterPolicy};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn gram(centers: Vec<Vec<f64>>, r: f64) -> Gramian {
        let cs = CenterSet::new(centers, KernelSpec::new(r, 2, 1.0).unwrap()).unwrap();
        Gramian::assemble(Arc::new(cs), JitterPolicy::Auto).unwrap()
    }

    fn path<F: Fn(f64) -> [f64; 2]>(f: F, t_end: f64, h: f64) -> Trajectory {
        let n = (t_end / h).round() as usize;
        let states = (0..=n)
            .map(|k| {
                let t = k as f64 * h;
                let p = f(t);
                EstimatorState::new(t, DVector::from_row_slice(&p), DVector::zeros(2), DVector::zeros(0)).unwrap()
            })
            .collect();
        Trajectory::from_samples(states).unwrap()
    }

    fn circle(t: f64) -> [f64; 2] {
        [t.cos(), t.sin()]
    }

    fn ring(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect()
    }

    fn window(delta_big: f64, delta: f64) -> PEWindow {
        PEWindow { window: delta_big, sub_window: delta, direction_count: 64, ..PEWindow::default() }
    }

    #[test]
    fn stationary_single_center() {
        let g = gram(vec![vec![0.5, -0.25]], 3.0);
        let traj = path(|_| [0.5, -0.25], 5.0, 0.01);
        let w = window(2.0, 0.5);
        let pe2 = pe2_exact(&traj, &g, &w).unwrap();
        assert_relative_eq!(pe2.gamma, 2.0, max_relative = 1e-12);
        let pe1 = pe1_sampled(&traj, &g, &w).unwrap();
        assert_relative_eq!(pe1.gamma, 0.5, max_relative = 1e-12);
        let c = pe_classical(&traj, |_| DVector::from_element(1, 1.0), 1, &w).unwrap();
        assert_relative_eq!(c.gamma, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn rank_one_regressor_is_not_exciting() {
        let traj = path(circle, 5.0, 0.01);
        let e1 = |_: &[f64]| DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let c = pe_classical(&traj, e1, 3, &window(2.0, 0.5)).unwrap();
        assert!(c.gamma.abs() < 1e-12);
    }

    #[test]
    fn stationary_trajectory_cannot_excite_two_centers() {
        let g = gram(vec![vec![0.0, 0.0], vec![1.0, 0.0]], 3.0);
        let traj = path(|_| [0.3, 0.2], 4.0, 0.01);
        let pe2 = pe2_exact(&traj, &g, &window(2.0, 0.5)).unwrap();
        assert!(pe2.gamma.abs() < 1e-12);
        // the worst direction vanishes along the trajectory
        let val = g.basis().kernel_vector(&[0.3, 0.2]).dot(&pe2.worst_direction);
        assert!(val.abs() < 1e-7);
    }

    #[test]
    fn window_exceeding_trajectory() {
        let g = gram(ring(4), 3.0);
        let traj = path(circle, 1.0, 0.01);
        let err = pe2_exact(&traj, &g, &window(2.0, 0.5)).unwrap_err();
        assert!(matches!(err, Error::WindowExceedsTrajectory { .. }));
        let late = PEWindow { t0: 0.5, ..window(0.8, 0.2) };
        assert!(matches!(pe2_exact(&traj, &g, &late), Err(Error::WindowExceedsTrajectory { .. })));
    }

    #[test]
    fn invalid_windows() {
        assert!(window(1.0, 2.0).validate().is_err());
        assert!(window(0.0, 0.0).validate().is_err());
        assert!(PEWindow { direction_count: 0, ..PEWindow::default() }.validate().is_err());
        assert!(PEWindow { t_grid_step: Some(-1.0), ..PEWindow::default() }.validate().is_err());
    }

    #[test]
    fn windows_snap_to_grid() {
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let rw =
            PEWindow { t0: 0.123, window: 1.004, sub_window: 0.2549, ..PEWindow::default() }.resolve(&times).unwrap();
        assert_eq!(rw.window_samples, 100);
        assert_eq!(rw.sub_samples, 25);
        assert_eq!(rw.grid_samples, 5);
        assert_eq!(rw.starts[0], 13);
        assert!(*rw.starts.last().unwrap() + 100 <= 1000);
    }

    #[test]
    fn circular_orbit_levels() {
        let g = gram(ring(8), 3.0);
        let traj = path(circle, 12.0, 0.005);
        let w = window(2.0 * std::f64::consts::PI, 0.5);
        let report = analyze(&traj, &g, &w).unwrap();
        assert!(report.gamma_pe2 > 0.0);
        assert!(report.gamma_pe1 > 0.0);
        assert!(report.implication_slack > -1e-12);
        let (lo, hi) = report.gram_bounds;
        assert!(lo * report.gamma_pe2 <= report.gamma_classical * (1.0 + 1e-9));
        assert!(report.gamma_classical <= hi * report.gamma_pe2 * (1.0 + 1e-9));
        // worst direction attains the minimum
        let m = window_moment(&traj, &g, &w, report.worst_start).unwrap();
        assert_relative_eq!(rayleigh_quotient(&m, &g, &report.worst_direction), report.gamma_pe2, max_relative = 1e-8);
    }

    #[test]
    fn sign_symmetry_of_pe1() {
        let g = gram(ring(6), 3.0);
        let traj = path(circle, 8.0, 0.01);
        let rw = window(3.0, 0.7).resolve(&traj.times).unwrap();
        let feats = Features::kernel(&traj, &g, &rw).unwrap();
        let a = unit_sphere_coeffs(&g, 1, 3).remove(0);
        let pos = pe1_from_features(&feats, &rw, vec![a.clone()]);
        let neg = pe1_from_features(&feats, &rw, vec![-a]);
        assert_eq!(pos.levels, neg.levels);
        assert_eq!(pos.energies, neg.energies);
    }

    #[test]
    fn refinement_reaches_exact_minimum() {
        let g = gram(ring(10), 3.0);
        let traj = path(|t| [1.1 * t.cos(), 0.9 * (t + 0.3).sin()], 10.0, 0.01);
        let w = window(4.0, 1.0);
        let pe2 = pe2_exact(&traj, &g, &w).unwrap();
        let m = window_moment(&traj, &g, &w, pe2.worst_start).unwrap();
        let (sampled, a) = sampled_rayleigh_min(&m, &g, 200, 1);
        assert!(sampled >= pe2.gamma * (1.0 - 1e-10));
        let (refined, _) = refine_min_direction(&m, &g, &a, 200);
        assert_relative_eq!(refined, pe2.gamma, max_relative = 1e-6);
    }

    #[test]
    fn block_sums_match_direct_trapezoid() {
        let g = gram(ring(5), 3.0);
        let traj = path(circle, 9.0, 0.01);
        let w = PEWindow { t0: 0.37, t_grid_step: Some(0.3), ..window(2.5, 0.5) };
        let rw = w.resolve(&traj.times).unwrap();
        let feats = Features::kernel(&traj, &g, &rw).unwrap();
        let starts = feats.local_starts(&rw);
        feats.for_each_moment(&rw, |k, m| {
            let direct = feats.moment(starts[k], rw.window_samples, rw.spacing);
            assert!((m - direct).amax() < 1e-13);
        });
    }

    #[test]
    fn sliding_maximum() {
        let v = [1.0, 3.0, 2.0, 0.5, 0.4, 5.0, 1.0];
        assert_eq!(sliding_max(&v, 3), vec![3.0, 3.0, 2.0, 5.0, 5.0]);
        assert_eq!(sliding_max(&v, 1), v.to_vec());
        assert_eq!(sliding_max(&v, 7), vec![5.0]);
    }

    #[test]
    fn probe_vanishes_at_center_of_radial_kernel() {
        let g = gram(vec![vec![0.2, 0.4]], 3.0);
        let grad = span_gradient(&g, &DVector::from_element(1, 1.0), &[0.2, 0.4]);
        assert!(grad.norm() < 1e-9);
    }

    #[test]
    fn probe_matches_analytic_gradient() {
        // nu = 3/2: k(xi) = (1 + xi) e^-xi, dk/dr = -r e^-r
        let g = gram(vec![vec![0.0, 0.0]], 2.5);
        let x = [0.6f64, -0.3];
        let r: f64 = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let grad = span_gradient(&g, &DVector::from_element(1, 1.0), &x);
        for i in 0..2 {
            let exact = -r * (-r).exp() * x[i] / r;
            assert_relative_eq!(grad[i], exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn probe_rejects_rough_kernel() {
        let g = gram(ring(3), 1.5);
        assert!(matches!(
            equicontinuity_probe(&g, 4, &[vec![0.0, 0.0]], 0),
            Err(Error::KernelNotDifferentiable { .. })
        ));
        let smooth = gram(ring(3), 3.0);
        let l = equicontinuity_probe(&smooth, 16, &[vec![0.0, 0.0], vec![0.5, 0.5]], 0).unwrap();
        assert!(l.is_finite() && l > 0.0);
    }
}
