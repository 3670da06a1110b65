//! Finite-dimensional subspace `H_Omega_n = span{k(z_j, .)}` of the native
//! space: center sets, the Gramian, function expansions and projection.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Matern};

/// Jitter values tried in order by [`JitterPolicy::Auto`].
pub const JITTER_LADDER: [f64; 7] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];

/// Ordered, pairwise-distinct basis centers together with their kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet {
    centers: Vec<Vec<f64>>,
    kernel: Matern,
}

impl CenterSet {
    pub fn new(centers: Vec<Vec<f64>>, spec: KernelSpec) -> Result<Self> {
        let kernel = Matern::new(spec)?;
        if centers.is_empty() {
            return Err(Error::InvalidCenters("need at least one center".into()));
        }
        for (j, z) in centers.iter().enumerate() {
            if z.len() != spec.dim_d {
                return Err(Error::DimensionMismatch { expected: spec.dim_d, got: z.len() });
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCenters(format!("center {} is not finite", j + 1)));
            }
        }
        for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                if centers[i] == centers[j] {
                    return Err(Error::InvalidCenters(format!("centers {} and {} coincide", i + 1, j + 1)));
                }
            }
        }
        Ok(CenterSet { centers, kernel })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn kernel(&self) -> &Matern {
        &self.kernel
    }

    pub fn spec(&self) -> &KernelSpec {
        self.kernel.spec()
    }

    /// `k(x) = [k(z_j, x)]_j`.
    pub fn kernel_vector(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.centers.iter().map(|z| self.kernel.eval(z, x)))
    }

    /// Writes `k(x)` into `out` without allocating.
    pub fn kernel_vector_into(&self, x: &[f64], out: &mut DVector<f64>) {
        for (o, z) in out.iter_mut().zip(&self.centers) {
            *o = self.kernel.eval(z, x);
        }
    }

    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d: f64 = self.centers[i].iter().zip(&self.centers[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d.sqrt());
            }
        }
        best
    }
}

/// How much diagonal jitter to add before factoring the Gramian.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum JitterPolicy {
    Fixed(f64),
    /// Smallest rung of [`JITTER_LADDER`] for which the factorization succeeds.
    #[default]
    Auto,
}

impl Serialize for JitterPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            JitterPolicy::Fixed(v) => s.serialize_f64(*v),
            JitterPolicy::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for JitterPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v >= 0.0 && v.is_finite() => Ok(JitterPolicy::Fixed(v)),
            Raw::Int(v) if v >= 0 => Ok(JitterPolicy::Fixed(v as f64)),
            Raw::Name(s) if s == "auto" => Ok(JitterPolicy::Auto),
            _ => Err(de::Error::custom("jitter must be \"auto\" or a nonnegative number")),
        }
    }
}

impl fmt::Display for JitterPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JitterPolicy::Fixed(v) => write!(f, "{v}"),
            JitterPolicy::Auto => f.write_str("auto"),
        }
    }
}

/// Gramian `K[i][j] = k(z_i, z_j)` with a cached Cholesky factor of `K + jitter I`.
#[derive(Clone)]
pub struct Gramian {
    basis: Arc<CenterSet>,
    matrix: DMatrix<f64>,
    jitter: f64,
    factor: Cholesky<f64, Dyn>,
}

impl fmt::Debug for Gramian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gramian").field("n", &self.matrix.nrows()).field("jitter", &self.jitter).finish()
    }
}

/// Cholesky that also rejects numerically singular pivots.
fn try_factor(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let max_diag = m.diagonal().max();
    let floor = n as f64 * f64::EPSILON * max_diag;
    let chol = Cholesky::new(m)?;
    let ok = chol.l_dirty().diagonal().iter().all(|&p| p * p > floor);
    ok.then_some(chol)
}

impl Gramian {
    pub fn assemble(basis: Arc<CenterSet>, policy: JitterPolicy) -> Result<Self> {
        let n = basis.len();
        let kernel = basis.kernel();
        let z = basis.centers();
        let mut matrix = DMatrix::zeros(n, n);
        for i in 0..n {
            matrix[(i, i)] = kernel.eval(&z[i], &z[i]);
            for j in 0..i {
                let v = kernel.eval(&z[i], &z[j]);
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        let rungs: Vec<f64> = match policy {
            JitterPolicy::Fixed(eps) => vec![eps],
            JitterPolicy::Auto => JITTER_LADDER.to_vec(),
        };
        for &eps in &rungs {
            let shifted = &matrix + DMatrix::identity(n, n) * eps;
            if let Some(factor) = try_factor(shifted) {
                return Ok(Gramian { basis, matrix, jitter: eps, factor });
            }
        }
        Err(Error::FactorizationFailure { last_jitter: *rungs.last().unwrap() })
    }

    pub fn basis(&self) -> &Arc<CenterSet> {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// The unregularized `K`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `K + jitter I`.
    pub fn regularized(&self) -> DMatrix<f64> {
        &self.matrix + DMatrix::identity(self.len(), self.len()) * self.jitter
    }

    pub fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.factor
    }

    /// Solves `(K + jitter I) x = rhs` with the cached factor.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }

    pub fn solve_mut(&self, rhs: &mut DVector<f64>) {
        self.factor.solve_mut(rhs)
    }

    /// `(lambda_min, lambda_max)` of `K + jitter I`.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.regularized());
        (eig.eigenvalues.min(), eig.eigenvalues.max())
    }

    /// `a^T K b` with the unregularized Gramian.
    pub fn quadratic(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(&self.matrix * b))
    }

    fn check_basis(&self, f: &RkhsFunction) -> Result<()> {
        if same_basis(&self.basis, &f.basis) {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }
}

fn same_basis(a: &Arc<CenterSet>, b: &Arc<CenterSet>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// `f = sum_j a_j k(z_j, .)`.
#[derive(Debug, Clone)]
pub struct RkhsFunction {
    coeffs: DVector<f64>,
    basis: Arc<CenterSet>,
}

impl RkhsFunction {
    pub fn new(coeffs: DVector<f64>, basis: Arc<CenterSet>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("coefficients must be finite".into()));
        }
        Ok(RkhsFunction { coeffs, basis })
    }

    pub fn zero(basis: Arc<CenterSet>) -> Self {
        RkhsFunction { coeffs: DVector::zeros(basis.len()), basis }
    }

    /// The `j`-th basis function `k(z_j, .)` (0-based).
    pub fn basis_element(basis: Arc<CenterSet>, j: usize) -> Self {
        let mut coeffs = DVector::zeros(basis.len());
        coeffs[j] = 1.0;
        RkhsFunction { coeffs, basis }
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn basis(&self) -> &Arc<CenterSet> {
        &self.basis
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let kernel = self.basis.kernel();
        self.basis.centers().iter().zip(self.coeffs.iter()).map(|(z, a)| a * kernel.eval(z, x)).sum()
    }
}

/// Native inner product `a^T K b` of two span elements.
pub fn inner_product(gram: &Gramian, f: &RkhsFunction, g: &RkhsFunction) -> Result<f64> {
    gram.check_basis(f)?;
    gram.check_basis(g)?;
    Ok(gram.quadratic(&f.coeffs, &g.coeffs))
}

pub fn norm(gram: &Gramian, f: &RkhsFunction) -> Result<f64> {
    Ok(inner_product(gram, f, f)?.max(0.0).sqrt())
}

/// Coefficients of the projection given target values at the centers:
/// solves `(K + jitter I) alpha = f(Z)`.
pub fn project_onto(values_at_centers: &DVector<f64>, gram: &Gramian) -> Result<RkhsFunction> {
    if values_at_centers.len() != gram.len() {
        return Err(Error::DimensionMismatch { expected: gram.len(), got: values_at_centers.len() });
    }
    if values_at_centers.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("target values must be finite".into()));
    }
    RkhsFunction::new(gram.solve(values_at_centers), gram.basis.clone())
}

/// Projection of a pointwise-defined target.
pub fn project_function<F: Fn(&[f64]) -> f64>(target: F, gram: &Gramian) -> Result<RkhsFunction> {
    let values = DVector::from_iterator(gram.len(), gram.basis.centers().iter().map(|z| target(z)));
    project_onto(&values, gram)
}

/// Raw standard-normal coefficient vectors normalized to unit native norm.
pub fn unit_sphere_coeffs(gram: &Gramian, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = gram.len();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let raw = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let sq = gram.quadratic(&raw, &raw);
        if sq > 0.0 && sq.is_finite() {
            out.push(raw / sq.sqrt());
        }
    }
    out
}

/// `count` deterministic samples from the unit sphere of the span.
pub fn unit_sphere_sample(gram: &Gramian, count: usize, seed: u64) -> Vec<RkhsFunction> {
    unit_sphere_coeffs(gram, count, seed)
        .into_iter()
        .map(|coeffs| RkhsFunction { coeffs, basis: gram.basis.clone() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ring(n: usize, r: f64, spec: KernelSpec) -> Arc<CenterSet> {
        let pts = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                vec![r * th.cos(), r * th.sin()]
            })
            .collect();
        Arc::new(CenterSet::new(pts, spec).unwrap())
    }

    fn spec3() -> KernelSpec {
        KernelSpec::new(3.0, 2, 1.0).unwrap()
    }

    #[test]
    fn single_center_gramian() {
        let cs = Arc::new(CenterSet::new(vec![vec![0.4, -2.0]], spec3()).unwrap());
        let g = Gramian::assemble(cs, JitterPolicy::Auto).unwrap();
        assert_eq!(g.matrix()[(0, 0)], 1.0);
        assert_eq!(g.jitter(), 0.0);
    }

    #[test]
    fn two_center_exponential_gramian() {
        let spec = KernelSpec::new(1.5, 2, 1.0).unwrap();
        let cs = Arc::new(CenterSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], spec).unwrap());
        let g = Gramian::assemble(cs, JitterPolicy::Fixed(0.0)).unwrap();
        let e = (-1.0f64).exp();
        assert_relative_eq!(g.matrix()[(0, 1)], e, max_relative = 1e-14);
        assert_relative_eq!(g.matrix()[(1, 0)], e, max_relative = 1e-14);
        assert_eq!(g.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn duplicate_centers_rejected() {
        let err = CenterSet::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]], spec3()).unwrap_err();
        assert!(matches!(err, Error::InvalidCenters(_)));
    }

    #[test]
    fn near_duplicates_climb_the_ladder() {
        let cs = Arc::new(CenterSet::new(vec![vec![0.0, 0.0], vec![1e-9, 0.0]], spec3()).unwrap());
        let g = Gramian::assemble(cs.clone(), JitterPolicy::Auto).unwrap();
        assert!(g.jitter() > 0.0);
        let err = Gramian::assemble(cs, JitterPolicy::Fixed(0.0)).unwrap_err();
        assert!(matches!(err, Error::FactorizationFailure { .. }));
    }

    #[test]
    fn zero_function_evaluates_to_zero() {
        let cs = ring(8, 1.0, spec3());
        let f = RkhsFunction::zero(cs);
        assert_eq!(f.eval(&[0.3, 0.1]), 0.0);
    }

    #[test]
    fn basis_element_at_own_center() {
        let cs = ring(8, 1.0, spec3());
        let f = RkhsFunction::basis_element(cs.clone(), 0);
        assert_eq!(f.eval(&cs.centers()[0]), 1.0);
    }

    #[test]
    fn basis_element_has_unit_norm() {
        let cs = ring(8, 1.0, spec3());
        let g = Gramian::assemble(cs.clone(), JitterPolicy::Auto).unwrap();
        let f = RkhsFunction::basis_element(cs, 0);
        assert_eq!(inner_product(&g, &f, &f).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_bases_rejected() {
        let a = ring(8, 1.0, spec3());
        let b = ring(8, 2.0, spec3());
        let g = Gramian::assemble(a.clone(), JitterPolicy::Auto).unwrap();
        let f = RkhsFunction::zero(a);
        let h = RkhsFunction::zero(b);
        assert!(matches!(inner_product(&g, &f, &h), Err(Error::BasisMismatch)));
    }

    #[test]
    fn equal_but_distinct_bases_accepted() {
        let a = ring(6, 1.0, spec3());
        let b = ring(6, 1.0, spec3());
        let g = Gramian::assemble(a.clone(), JitterPolicy::Auto).unwrap();
        assert!(inner_product(&g, &RkhsFunction::zero(a), &RkhsFunction::zero(b)).is_ok());
    }

    #[test]
    fn projecting_zero_gives_zero() {
        let cs = ring(10, 1.0, spec3());
        let g = Gramian::assemble(cs, JitterPolicy::Auto).unwrap();
        let p = project_onto(&DVector::zeros(10), &g).unwrap();
        assert!(p.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn projecting_a_basis_element_recovers_it() {
        let cs = ring(10, 1.0, spec3());
        let g = Gramian::assemble(cs.clone(), JitterPolicy::Auto).unwrap();
        let e1 = RkhsFunction::basis_element(cs.clone(), 0);
        let p = project_function(|x| e1.eval(x), &g).unwrap();
        let mut expected = DVector::zeros(10);
        expected[0] = 1.0;
        assert!((p.coeffs() - expected).amax() < 1e-10);
    }

    #[test]
    fn projection_residual_is_orthogonal_to_basis() {
        // Target outside the span, sampled on a fine cloud; residual checked
        // through the reproducing property at each center.
        let cs = ring(12, 1.0, spec3());
        let g = Gramian::assemble(cs.clone(), JitterPolicy::Auto).unwrap();
        let target = |x: &[f64]| (x[0] * 2.0).sin() + x[1] * x[1];
        let p = project_function(target, &g).unwrap();
        for (j, z) in cs.centers().iter().enumerate() {
            let basis = RkhsFunction::basis_element(cs.clone(), j);
            // (f - P f, k_zj) = f(z_j) - (P f)(z_j)
            let residual = target(z) - inner_product(&g, &p, &basis).unwrap();
            assert!(residual.abs() < 1e-9, "center {j}: residual {residual}");
        }
    }

    #[test]
    fn sphere_samples_have_unit_norm_and_repeat() {
        let cs = ring(15, 1.0, spec3());
        let g = Gramian::assemble(cs, JitterPolicy::Auto).unwrap();
        let a = unit_sphere_sample(&g, 20, 7);
        let b = unit_sphere_sample(&g, 20, 7);
        for (f, h) in a.iter().zip(&b) {
            let sq = inner_product(&g, f, f).unwrap();
            assert!((sq - 1.0).abs() <= 1e-12);
            assert_eq!(f.coeffs(), h.coeffs());
        }
        assert!(unit_sphere_sample(&g, 0, 7).is_empty());
    }

    #[test]
    fn jitter_policy_serde() {
        #[derive(Serialize, Deserialize)]
        struct W {
            j: JitterPolicy,
        }
        let w: W = serde_json::from_str(r#"{"j":"auto"}"#).unwrap();
        assert_eq!(w.j, JitterPolicy::Auto);
        let w: W = serde_json::from_str(r#"{"j":1e-10}"#).unwrap();
        assert_eq!(w.j, JitterPolicy::Fixed(1e-10));
        let w: W = serde_json::from_str(r#"{"j":0}"#).unwrap();
        assert_eq!(w.j, JitterPolicy::Fixed(0.0));
        assert!(serde_json::from_str::<W>(r#"{"j":"none"}"#).is_err());
        assert!(serde_json::from_str::<W>(r#"{"j":-1.0}"#).is_err());
    }
}
