//! Fixed-step classical Runge–Kutta integration and trajectory recording.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Snapshot of the coupled plant/estimator state.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub t: f64,
    /// Plant state.
    pub x: DVector<f64>,
    /// Estimator state.
    pub x_hat: DVector<f64>,
    /// Expansion coefficients of the function estimate.
    pub a: DVector<f64>,
}

impl EstimatorState {
    pub fn new(t: f64, x: DVector<f64>, x_hat: DVector<f64>, a: DVector<f64>) -> Result<Self> {
        if x.len() != x_hat.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: x_hat.len() });
        }
        let s = EstimatorState { t, x, x_hat, a };
        if !s.is_finite() {
            return Err(Error::NonFiniteState { t });
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn n_coeffs(&self) -> usize {
        self.a.len()
    }

    /// `x - x_hat`.
    pub fn state_error(&self) -> DVector<f64> {
        &self.x - &self.x_hat
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().chain(self.x_hat.iter()).chain(self.a.iter()).all(|v| v.is_finite())
    }

    /// Packs into `[x, x_hat, a]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.dim() + self.n_coeffs());
        y.extend(self.x.iter());
        y.extend(self.x_hat.iter());
        y.extend(self.a.iter());
        y
    }

    pub fn from_flat(t: f64, y: &[f64], d: usize) -> Self {
        EstimatorState {
            t,
            x: DVector::from_column_slice(&y[..d]),
            x_hat: DVector::from_column_slice(&y[d..2 * d]),
            a: DVector::from_column_slice(&y[2 * d..]),
        }
    }
}

/// Reusable stage buffers for [`Rk4`].
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Rk4 { k1: vec![0.0; len], k2: vec![0.0; len], k3: vec![0.0; len], k4: vec![0.0; len], tmp: vec![0.0; len] }
    }

    /// Advances `y` from `t` to `t + h` in place.
    pub fn step<F>(&mut self, f: &mut F, t: f64, y: &mut [f64], h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let half = 0.5 * h;
        f(t, y, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half * self.k1[i];
        }
        f(t + half, &self.tmp, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half * self.k2[i];
        }
        f(t + half, &self.tmp, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(t + h, &self.tmp, &mut self.k4);
        let sixth = h / 6.0;
        for i in 0..y.len() {
            y[i] += sixth * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

/// Number of steps of size `h` spanning `[t0, t_end]`, validated.
pub fn step_count(t0: f64, t_end: f64, h: f64, record_every: usize) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidIntegration(format!("step must be positive, got {h}")));
    }
    if !(t_end > t0) {
        return Err(Error::InvalidIntegration(format!("t_end {t_end} must exceed t0 {t0}")));
    }
    if record_every == 0 {
        return Err(Error::InvalidIntegration("record_every must be at least 1".into()));
    }
    let exact = (t_end - t0) / h;
    let steps = exact.round();
    if (exact - steps).abs() > 1e-6 * exact.max(1.0) || steps < 1.0 {
        return Err(Error::InvalidIntegration(format!(
            "span {} is not an integer multiple of the step {h}",
            t_end - t0
        )));
    }
    let steps = steps as usize;
    if !steps.is_multiple_of(record_every) {
        return Err(Error::InvalidIntegration(format!(
            "{steps} steps is not a multiple of record_every = {record_every}"
        )));
    }
    Ok(steps)
}

/// Integrates a flat system, calling `record` on the initial state and
/// after every `record_every`-th step.
pub fn integrate_flat<F, R>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    h: f64,
    record_every: usize,
    mut record: R,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    R: FnMut(f64, &[f64]),
{
    let steps = step_count(t0, t_end, h, record_every)?;
    let mut rk = Rk4::new(y0.len());
    let mut y = y0.to_vec();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t: t0 });
    }
    record(t0, &y);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        rk.step(&mut f, t, &mut y, h);
        let t_next = t0 + (k + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t_next });
        }
        if (k + 1) % record_every == 0 {
            record(t_next, &y);
        }
    }
    Ok(y)
}

/// Recorded samples on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<EstimatorState>,
    /// Integration step.
    pub step: f64,
    pub record_every: usize,
}

impl Trajectory {
    /// Builds a trajectory from already-sampled states (e.g. loaded from disk),
    /// checking uniform spacing.
    pub fn from_samples(states: Vec<EstimatorState>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidIntegration("trajectory needs at least two samples".into()));
        }
        let times: Vec<f64> = states.iter().map(|s| s.t).collect();
        let spacing = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(spacing > 0.0) {
            return Err(Error::InvalidIntegration("times must be strictly increasing".into()));
        }
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - spacing).abs() > 1e-6 * spacing {
                return Err(Error::InvalidIntegration(format!("non-uniform time spacing at sample {}", i + 1)));
            }
        }
        Ok(Trajectory { times, states, step: spacing, record_every: 1 })
    }

    /// Spacing between recorded samples, derived from the recorded times so
    /// that a trajectory read back from disk yields the same value.
    pub fn spacing(&self) -> f64 {
        (self.end() - self.start()) / (self.len() - 1) as f64
    }

    /// Plant states `x(t_k)`.
    pub fn plant_states(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.x.as_slice().to_vec()).collect()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last(&self) -> &EstimatorState {
        self.states.last().unwrap()
    }
}

/// Integrates the coupled system from `initial` to `t_end` with RK4 of
/// fixed step `h`. `rhs` acts on the packed layout `[x, x_hat, a]`.
pub fn integrate<F>(rhs: F, initial: &EstimatorState, t_end: f64, h: f64, record_every: usize) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d = initial.dim();
    let mut times = Vec::new();
    let mut states = Vec::new();
    integrate_flat(rhs, initial.t, &initial.to_flat(), t_end, h, record_every, |t, y| {
        times.push(t);
        states.push(EstimatorState::from_flat(t, y, d));
    })?;
    Ok(Trajectory { times, states, step: h, record_every })
}
