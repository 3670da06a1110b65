//! Sobolev–Matérn kernel.
//!
//! For smoothness order `r` on `R^d` the kernel is radial in
//! `xi = |x - y| / length_scale` with
//!
//! ```text
//! k(xi) = variance * 2^(1-nu) / Gamma(nu) * xi^nu * K_nu(xi),   nu = r - d/2
//! ```
//!
//! where `K_nu` is the modified Bessel function of the second kind. The
//! normalization makes `k(0) = variance`, so the evaluation functional is
//! bounded by `sqrt(variance)` uniformly over the domain.

mod bessel;

pub use bessel::{bessel_k, bessel_k_scaled};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Below this scaled radius the kernel returns its `xi -> 0` limit.
pub const SMALL_XI: f64 = 1e-8;

fn default_length_scale() -> f64 {
    1.0
}

fn default_variance() -> f64 {
    1.0
}

/// Parameters of a Sobolev–Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    /// Smoothness order `r`.
    pub order_r: f64,
    /// Ambient dimension `d`.
    pub dim_d: usize,
    #[serde(default = "default_length_scale")]
    pub length_scale: f64,
    /// Amplitude `sigma^2`; the normalized family has 1.
    #[serde(default = "default_variance")]
    pub variance: f64,
}

impl KernelSpec {
    pub fn new(order_r: f64, dim_d: usize, length_scale: f64) -> Result<Self> {
        let spec = KernelSpec { order_r, dim_d, length_scale, variance: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_variance(mut self, variance: f64) -> Result<Self> {
        self.variance = variance;
        self.validate()?;
        Ok(self)
    }

    /// Matérn order `nu = r - d/2`.
    pub fn nu(&self) -> f64 {
        self.order_r - self.dim_d as f64 / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_d == 0 {
            return Err(Error::InvalidKernel("dimension must be at least 1".into()));
        }
        if !(self.order_r.is_finite() && self.nu() > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "need r > d/2, got r = {} with d = {}",
                self.order_r, self.dim_d
            )));
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(Error::InvalidKernel(format!("length scale must be positive, got {}", self.length_scale)));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::InvalidKernel(format!("variance must be positive, got {}", self.variance)));
        }
        Ok(())
    }
}

/// A validated kernel with its normalization constant precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matern {
    spec: KernelSpec,
    nu: f64,
    // variance * 2^(1-nu) / Gamma(nu)
    prefactor: f64,
}

impl Matern {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        spec.validate()?;
        let nu = spec.nu();
        let prefactor = spec.variance * 2f64.powf(1.0 - nu) / gamma(nu);
        Ok(Matern { spec, nu, prefactor })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.spec.dim_d
    }

    /// Radial profile as a function of the scaled distance `xi >= 0`.
    pub fn radial(&self, xi: f64) -> f64 {
        if xi < SMALL_XI {
            return self.spec.variance;
        }
        // xi^nu e^-xi (e^xi K_nu(xi)) keeps large xi free of overflow.
        let scaled = bessel_k_scaled(self.nu, xi).expect("xi > 0 and nu > 0 by construction");
        self.prefactor * (self.nu * xi.ln() - xi).exp() * scaled
    }

    /// Kernel value `k(x, y)`. Panics if the points do not have `dim_d` entries.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.spec.dim_d, "point dimension does not match kernel");
        assert_eq!(y.len(), self.spec.dim_d, "point dimension does not match kernel");
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.radial(r2.sqrt() / self.spec.length_scale)
    }

    /// `sup_x sqrt(k(x, x))`, the uniform bound on the evaluation operator.
    pub fn embedding_constant(&self) -> f64 {
        self.radial(0.0).sqrt()
    }
}

/// Evaluates the kernel defined by `spec` at `(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let kernel = Matern::new(*spec)?;
    for p in [x, y] {
        if p.len() != spec.dim_d {
            return Err(Error::DimensionMismatch { expected: spec.dim_d, got: p.len() });
        }
    }
    Ok(kernel.eval(x, y))
}

/// `k_bar = sup_x sqrt(k(x, x))`.
pub fn embedding_constant(spec: &KernelSpec) -> Result<f64> {
    Ok(Matern::new(*spec)?.embedding_constant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(r: f64, d: usize) -> KernelSpec {
        KernelSpec::new(r, d, 1.0).unwrap()
    }

    #[test]
    fn identical_points_give_one() {
        let s = spec(3.0, 2);
        assert_eq!(kernel_eval(&s, &[0.3, -1.2], &[0.3, -1.2]).unwrap(), 1.0);
    }

    #[test]
    fn exponential_member() {
        let s = spec(1.5, 2);
        let v = kernel_eval(&s, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(v, 0.367_879, max_relative = 1e-5);
    }

    #[test]
    fn once_differentiable_member() {
        let s = spec(2.5, 2);
        let v = kernel_eval(&s, &[0.0, 0.0], &[0.6, 0.8]).unwrap();
        assert_relative_eq!(v, 2.0 * (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(v, 0.735_758, max_relative = 1e-5);
    }

    #[test]
    fn length_scale_rescales_distance() {
        let s = KernelSpec::new(1.5, 2, 2.0).unwrap();
        let v = kernel_eval(&s, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(v, (-0.5f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn embedding_constants() {
        assert_eq!(embedding_constant(&spec(3.0, 2)).unwrap(), 1.0);
        assert_eq!(embedding_constant(&spec(1.5, 1)).unwrap(), 1.0);
        let scaled = spec(3.0, 2).with_variance(4.0).unwrap();
        assert_relative_eq!(embedding_constant(&scaled).unwrap(), 2.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::new(1.0, 2, 1.0).is_err());
        assert!(KernelSpec::new(0.5, 1, 1.0).is_err());
        assert!(KernelSpec::new(3.0, 2, 0.0).is_err());
        assert!(KernelSpec::new(3.0, 0, 1.0).is_err());
        assert!(spec(3.0, 2).with_variance(-1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_reported() {
        let err = kernel_eval(&spec(3.0, 2), &[0.0], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn continuous_through_small_xi_cutoff() {
        let k = Matern::new(spec(3.0, 2)).unwrap();
        let below = k.radial(0.5 * SMALL_XI);
        let above = k.radial(2.0 * SMALL_XI);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn far_field_vanishes() {
        let k = Matern::new(spec(3.0, 2)).unwrap();
        assert_eq!(k.radial(1e4), 0.0);
        assert!(k.radial(50.0) > 0.0);
    }
}
