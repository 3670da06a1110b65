//! Right-hand sides of the plant, the finite-dimensional RKHS estimator and
//! the Lyapunov certificate of the coupled error system.

use std::fmt;
use std::sync::Arc;

use nalgebra::{dmatrix, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linsys::EstimatorSystem;
use crate::ode::EstimatorState;
use crate::rkhs::{Gramian, RkhsFunction};

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `x' = A x + B f(x)`.
#[derive(Clone)]
pub struct PlantSpec {
    pub name: String,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub f_true: ScalarField,
}

impl fmt::Debug for PlantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantSpec").field("name", &self.name).field("a", &self.a).finish()
    }
}

impl PlantSpec {
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, b: DVector<f64>, f_true: ScalarField) -> Self {
        PlantSpec { name: name.into(), a, b, f_true }
    }

    pub fn linear(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        PlantSpec::new("linear", a, b, Arc::new(|_: &[f64]| 0.0))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Same linear part, nonlinearity replaced by a span element.
    pub fn with_span_nonlinearity(&self, f: RkhsFunction) -> Self {
        PlantSpec {
            name: format!("{}-span", self.name),
            a: self.a.clone(),
            b: self.b.clone(),
            f_true: Arc::new(move |x: &[f64]| f.eval(x)),
        }
    }

    /// Writes `A x + B f(x)` into `out`.
    pub fn rhs_into(&self, x: &[f64], out: &mut [f64]) {
        let fx = (self.f_true)(x);
        let d = self.dim();
        for i in 0..d {
            let mut acc = self.b[i] * fx;
            for j in 0..d {
                acc += self.a[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }
}

/// `A x + B f(x)`.
pub fn plant_rhs(spec: &PlantSpec, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(spec.dim());
    spec.rhs_into(x.as_slice(), out.as_mut_slice());
    out
}

/// Piezoelectric beam oscillator under a single bending-mode approximation:
/// `m x1'' + k x1 + kn1 x1^3 + kn2 x1^5 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillator {
    pub m: f64,
    pub k: f64,
    pub kn1: f64,
    pub kn2: f64,
}

impl Default for Oscillator {
    fn default() -> Self {
        Oscillator { m: 0.9745, k: 6.5980, kn1: -1.0320, kn2: 3.8568 }
    }
}

impl Oscillator {
    /// Unknown nonlinearity `-(kn1/m) x1^3 - (kn2/m) x1^5`.
    pub fn nonlinearity(&self, x: &[f64]) -> f64 {
        let x1 = x[0];
        let x3 = x1 * x1 * x1;
        -(self.kn1 / self.m) * x3 - (self.kn2 / self.m) * x3 * x1 * x1
    }

    /// Conserved energy `m x2^2/2 + k x1^2/2 + kn1 x1^4/4 + kn2 x1^6/6`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        let x2sq = x1 * x1;
        0.5 * self.m * x2 * x2
            + 0.5 * self.k * x2sq
            + 0.25 * self.kn1 * x2sq * x2sq
            + self.kn2 / 6.0 * x2sq * x2sq * x2sq
    }

    pub fn plant(&self) -> PlantSpec {
        let osc = *self;
        PlantSpec::new(
            "oscillator",
            dmatrix![0.0, 1.0; -self.k / self.m, 0.0],
            DVector::from_vec(vec![0.0, 1.0]),
            Arc::new(move |x: &[f64]| osc.nonlinearity(x)),
        )
    }
}

/// Output injection that adds damping `-c x2` to the estimator's error
/// dynamics of a second-order plant.
pub fn damping_injection(c: f64) -> DMatrix<f64> {
    dmatrix![0.0, 0.0; 0.0, c]
}

/// Derivatives of the three state blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub a: DVector<f64>,
}

/// Plant coupled to the RKHS estimator
///
/// ```text
/// x'     = A x + B f(x)
/// x_hat' = A_est x_hat + L x + B a^T k(x)
/// a'     = mu (K + eps I)^{-1} k(x) B^T P (x - x_hat)
/// ```
///
/// With `L = 0` this is the plain finite-dimensional estimator.
pub struct CoupledSystem<'a> {
    pub plant: &'a PlantSpec,
    pub sys: &'a EstimatorSystem,
    pub gram: &'a Gramian,
    kvec: DVector<f64>,
}

impl<'a> CoupledSystem<'a> {
    pub fn new(plant: &'a PlantSpec, sys: &'a EstimatorSystem, gram: &'a Gramian) -> Self {
        CoupledSystem { plant, sys, gram, kvec: DVector::zeros(gram.len()) }
    }

    pub fn layout_len(&self) -> usize {
        2 * self.plant.dim() + self.gram.len()
    }

    /// Flat right-hand side on `[x, x_hat, a]`.
    pub fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = self.plant.dim();
        let (x, rest) = y.split_at(d);
        let (x_hat, a) = rest.split_at(d);
        let (dx, drest) = dy.split_at_mut(d);
        let (dx_hat, da) = drest.split_at_mut(d);

        self.plant.rhs_into(x, dx);
        self.gram.basis().kernel_vector_into(x, &mut self.kvec);
        let f_hat: f64 = a.iter().zip(self.kvec.iter()).map(|(c, k)| c * k).sum();

        let sys = self.sys;
        let mut err = [0.0f64; 16];
        let err: &mut [f64] = if d <= 16 { &mut err[..d] } else { unreachable!("state dimension > 16") };
        for i in 0..d {
            err[i] = x[i] - x_hat[i];
            let mut acc = sys.b[i] * f_hat;
            for j in 0..d {
                acc += sys.a_est[(i, j)] * x_hat[j] + sys.injection[(i, j)] * x[j];
            }
            dx_hat[i] = acc;
        }
        let gain = sys.mu * sys.bt_p(err);
        if gain == 0.0 {
            da.fill(0.0);
            return;
        }
        self.gram.solve_mut(&mut self.kvec);
        for (o, v) in da.iter_mut().zip(self.kvec.iter()) {
            *o = gain * v;
        }
    }
}

/// Derivative of the coupled system at `s`.
pub fn estimator_rhs(plant: &PlantSpec, sys: &EstimatorSystem, gram: &Gramian, s: &EstimatorState) -> StateDerivative {
    let d = s.dim();
    let y = s.to_flat();
    let mut dy = vec![0.0; y.len()];
    CoupledSystem::new(plant, sys, gram).rhs(s.t, &y, &mut dy);
    let st = EstimatorState::from_flat(s.t, &dy, d);
    StateDerivative { x: st.x, x_hat: st.x_hat, a: st.a }
}

/// `V = x~^T P x~ + (1/mu) a~^T (K + eps I) a~` with `x~ = x - x_hat` and
/// `a~ = a_ref - a`. Along span-exact trajectories `V' = -x~^T Q x~`.
pub fn lyapunov_v(sys: &EstimatorSystem, gram: &Gramian, s: &EstimatorState, a_ref: &DVector<f64>) -> f64 {
    let e = s.state_error();
    let da = a_ref - &s.a;
    let metric = gram.quadratic(&da, &da) + gram.jitter() * da.norm_squared();
    e.dot(&(&sys.p * &e)) + metric / sys.mu
}

/// Predicted `V' = -x~^T Q x~`.
pub fn lyapunov_v_rate(sys: &EstimatorSystem, s: &EstimatorState) -> f64 {
    let e = s.state_error();
    -e.dot(&(&sys.q * &e))
}

/// Classical adaptive estimator with regressors `Phi`, same injection:
///
/// ```text
/// x_hat'     = A_est x_hat + L x + B Phi(x)^T alpha_hat
/// alpha_hat' = mu Phi(x) B^T P (x - x_hat)
/// ```
pub fn classical_rhs<R>(plant: &PlantSpec, sys: &EstimatorSystem, regressors: &R, y: &[f64], dy: &mut [f64])
where
    R: Fn(&[f64]) -> DVector<f64>,
{
    let d = plant.dim();
    let (x, rest) = y.split_at(d);
    let (x_hat, alpha) = rest.split_at(d);
    plant.rhs_into(x, &mut dy[..d]);
    let phi = regressors(x);
    let f_hat: f64 = phi.iter().zip(alpha).map(|(p, a)| p * a).sum();
    let xv = DVector::from_column_slice(x);
    let xh = DVector::from_column_slice(x_hat);
    let dxh = &sys.a_est * &xh + &sys.injection * &xv + &sys.b * f_hat;
    dy[d..2 * d].copy_from_slice(dxh.as_slice());
    let err: Vec<f64> = x.iter().zip(x_hat).map(|(a, b)| a - b).collect();
    let gain = sys.mu * sys.bt_p(&err);
    for (o, p) in dy[2 * d..].iter_mut().zip(phi.iter()) {
        *o = gain * p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::rkhs::{CenterSet, JitterPolicy};
    use approx::assert_relative_eq;

    fn setup(n: usize) -> (PlantSpec, EstimatorSystem, Gramian) {
        let plant = Oscillator::default().plant();
        let sys = EstimatorSystem::new(
            plant.a.clone(),
            damping_injection(0.5),
            plant.b.clone(),
            DMatrix::identity(2, 2),
            1.0,
        )
        .unwrap();
        let pts = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                vec![1.5 * th.cos(), 4.0 * th.sin()]
            })
            .collect();
        let cs = Arc::new(CenterSet::new(pts, KernelSpec::new(3.0, 2, 1.0).unwrap()).unwrap());
        let gram = Gramian::assemble(cs, JitterPolicy::Auto).unwrap();
        (plant, sys, gram)
    }

    #[test]
    fn oscillator_equilibrium() {
        let plant = Oscillator::default().plant();
        let dx = plant_rhs(&plant, &DVector::zeros(2));
        assert_eq!(dx, DVector::zeros(2));
    }

    #[test]
    fn oscillator_at_unit_displacement() {
        let plant = Oscillator::default().plant();
        let dx = plant_rhs(&plant, &DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(dx[0], 0.0);
        assert_relative_eq!(dx[1], -(6.5980 - 1.0320 + 3.8568) / 0.9745, max_relative = 1e-14);
        assert_relative_eq!(dx[1], -9.669_368_907_131_862, max_relative = 1e-14);
    }

    #[test]
    fn linear_plant() {
        let a = dmatrix![-1.0, 2.0; 0.5, -3.0];
        let plant = PlantSpec::linear(a.clone(), DVector::from_vec(vec![1.0, 1.0]));
        let x = DVector::from_vec(vec![0.3, -0.7]);
        assert_eq!(plant_rhs(&plant, &x), &a * &x);
    }

    #[test]
    fn matched_states_freeze_learning() {
        let (plant, sys, gram) = setup(12);
        let a = DVector::from_fn(12, |i, _| (i as f64).sin());
        let x = DVector::from_vec(vec![0.4, -1.1]);
        let s = EstimatorState::new(0.0, x.clone(), x, a).unwrap();
        let der = estimator_rhs(&plant, &sys, &gram, &s);
        assert!(der.a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn learning_law_matches_explicit_formula() {
        let (plant, sys, gram) = setup(8);
        let a = DVector::from_fn(8, |i, _| 0.1 * i as f64);
        let s =
            EstimatorState::new(0.0, DVector::from_vec(vec![0.9, 0.2]), DVector::from_vec(vec![0.1, -0.3]), a.clone())
                .unwrap();
        let der = estimator_rhs(&plant, &sys, &gram, &s);
        let k = gram.basis().kernel_vector(s.x.as_slice());
        let e = s.state_error();
        let scalar = (sys.b.transpose() * &sys.p * &e)[0];
        let expected = gram.regularized().lu().solve(&k).unwrap() * (sys.mu * scalar);
        assert!((&der.a - &expected).amax() < 1e-10 * expected.amax());
        let expected_xh = &sys.a * &s.x_hat + &sys.b * a.dot(&k) + &sys.injection * &e;
        assert!((&der.x_hat - &expected_xh).amax() < 1e-12);
    }

    #[test]
    fn certificate_values() {
        let (_, sys, gram) = setup(4);
        let x = DVector::from_vec(vec![0.2, 0.3]);
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let s = EstimatorState::new(0.0, x.clone(), x, a.clone()).unwrap();
        assert_eq!(lyapunov_v(&sys, &gram, &s, &a), 0.0);

        let mut half = sys.clone();
        half.p = DMatrix::identity(2, 2) * 0.5;
        let s = EstimatorState::new(0.0, DVector::from_vec(vec![1.0, 0.0]), DVector::zeros(2), a.clone()).unwrap();
        assert_relative_eq!(lyapunov_v(&half, &gram, &s, &a), 0.5);
    }

    #[test]
    fn energy_is_conserved_along_vector_field() {
        let osc = Oscillator::default();
        let plant = osc.plant();
        // dE/dt = grad E . f = 0
        for &(x1, x2) in &[(0.3, 1.0), (-1.2, 0.5), (1.5, -2.0)] {
            let x = [x1, x2];
            let mut dx = [0.0; 2];
            plant.rhs_into(&x, &mut dx);
            let de1 = osc.k * x1 + osc.kn1 * x1.powi(3) + osc.kn2 * x1.powi(5);
            let de2 = osc.m * x2;
            assert!((de1 * dx[0] + de2 * dx[1]).abs() < 1e-12);
        }
    }
}
