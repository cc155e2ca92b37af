//! Data-fidelity metrics `𝒢(z) = ℬ(|z|², f)`, their gradients, Lipschitz
//! bounds and proximal maps.
//!
//! Gradients follow the real/imaginary splitting convention: for a real
//! function of `z = x + iy` the gradient is `∂/∂x + i·∂/∂y`. Every metric
//! has the form `∇𝒢(z) = c(|z|², f) ∘ z`, so the proximal map reduces to a
//! 1-D problem on the modulus with the phase of the prox argument kept.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::field::{sign, C64};
use crate::transform::{ComplexStack, RealStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Penalized amplitude Gaussian metric.
    Pagm,
    /// Penalized intensity Poisson metric.
    Pipm,
    /// Intensity Gaussian metric.
    Igm,
    /// Weighted intensity Gaussian metric.
    Wigm,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Pagm, MetricKind::Pipm, MetricKind::Igm, MetricKind::Wigm];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Pagm => "pagm",
            MetricKind::Pipm => "pipm",
            MetricKind::Igm => "igm",
            MetricKind::Wigm => "wigm",
        }
    }

    fn needs_epsilon(self) -> bool {
        !matches!(self, MetricKind::Igm)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = PtychoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pagm" => Ok(MetricKind::Pagm),
            "pipm" => Ok(MetricKind::Pipm),
            "igm" => Ok(MetricKind::Igm),
            "wigm" => Ok(MetricKind::Wigm),
            other => Err(PtychoError::Config(format!(
                "unknown metric '{other}' (expected pagm, pipm, igm, wigm)"
            ))),
        }
    }
}

/// Relative penalization used when no explicit ε is given: `ε = 1e-8·‖f‖_∞`.
pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub epsilon: f64,
}

impl MetricSpec {
    pub fn new(kind: MetricKind, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(PtychoError::Config(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        if kind.needs_epsilon() && epsilon <= 0.0 {
            return Err(PtychoError::Config(format!("{kind} requires epsilon > 0")));
        }
        Ok(Self { kind, epsilon })
    }

    /// `ε = 1e-8·‖f‖_∞` (falls back to 1e-8 when `f ≡ 0`).
    pub fn relative(kind: MetricKind, f: &[f64]) -> Result<Self> {
        let fmax = f.iter().copied().fold(0.0, f64::max);
        let eps = DEFAULT_RELATIVE_EPSILON * if fmax > 0.0 { fmax } else { 1.0 };
        Self::new(kind, eps)
    }

    /// Coefficient `c` in `∇𝒢(z) = c(|z|², f)·z`.
    #[inline]
    pub fn grad_coeff(&self, g: f64, f: f64) -> f64 {
        let eps = self.epsilon;
        match self.kind {
            MetricKind::Pagm => 1.0 - ((f + eps) / (g + eps)).sqrt(),
            MetricKind::Pipm => 1.0 - (f + eps) / (g + eps),
            MetricKind::Igm => 2.0 * (g - f),
            MetricKind::Wigm => 2.0 * (g - f) / (f + eps),
        }
    }

    /// Per-element value `ℬ(g, f)` with `g = |z|²`.
    #[inline]
    pub fn pointwise(&self, g: f64, f: f64) -> f64 {
        let eps = self.epsilon;
        match self.kind {
            MetricKind::Pagm => {
                let d = (g + eps).sqrt() - (f + eps).sqrt();
                0.5 * d * d
            }
            MetricKind::Pipm => 0.5 * (g + eps - (f + eps) * (g + eps).ln()),
            MetricKind::Igm => 0.5 * (g - f) * (g - f),
            MetricKind::Wigm => 0.5 * (g - f) * (g - f) / (f + eps),
        }
    }

    fn check(&self, z_len: usize, f: &[f64]) -> Result<()> {
        if z_len != f.len() {
            return Err(crate::error::shape_err("metric data length", z_len, f.len()));
        }
        if let Some(bad) = f.iter().position(|&v| !(v >= 0.0)) {
            return Err(PtychoError::Domain(format!(
                "intensity data must be >= 0 (entry {bad} is {})",
                f[bad]
            )));
        }
        Ok(())
    }

    /// `𝒢(z) = Σ_t ℬ(|z(t)|², f(t))`.
    pub fn value_slice(&self, z: &[C64], f: &[f64]) -> Result<f64> {
        self.check(z.len(), f)?;
        Ok(z.iter().zip(f).map(|(zi, &fi)| self.pointwise(zi.norm_sqr(), fi)).sum())
    }

    pub fn gradient_slice(&self, z: &[C64], f: &[f64]) -> Result<Vec<C64>> {
        self.check(z.len(), f)?;
        Ok(z.iter()
            .zip(f)
            .map(|(&zi, &fi)| zi * self.grad_coeff(zi.norm_sqr(), fi))
            .collect())
    }

    pub fn value(&self, z: &ComplexStack, f: &RealStack) -> Result<f64> {
        z.ensure_geometry(f, "metric data geometry")?;
        self.value_slice(z.as_slice(), f.as_slice())
    }

    pub fn gradient(&self, z: &ComplexStack, f: &RealStack) -> Result<ComplexStack> {
        z.ensure_geometry(f, "metric data geometry")?;
        ComplexStack::from_vec(z.frames(), z.side(), self.gradient_slice(z.as_slice(), f.as_slice())?)
    }

    /// Global Lipschitz constant of `∇𝒢` (pAGM and pIPM only).
    pub fn lipschitz_bound(&self, f: &[f64]) -> Result<f64> {
        self.check(f.len(), f)?;
        let eps = self.epsilon;
        let fmax = f.iter().copied().fold(0.0, f64::max);
        match self.kind {
            MetricKind::Pagm => Ok(1.0 + 2.0 / eps.sqrt() * (fmax + eps).sqrt()),
            MetricKind::Pipm => Ok(1.0 + 2.0 / eps * (fmax + eps)),
            kind => Err(PtychoError::Config(format!(
                "no global Lipschitz bound available for {kind}"
            ))),
        }
    }

    /// Derivative of the radial objective `ℬ(x², f)` at `x ≥ 0`.
    #[inline]
    pub fn radial_derivative(&self, x: f64, f: f64) -> f64 {
        self.grad_coeff(x * x, f) * x
    }

    /// Default step of inner iteration `l`.
    fn default_step(&self, beta: f64, x: f64, f: f64, l: usize) -> f64 {
        match self.kind {
            MetricKind::Pagm => 1.0 / (1.0 + beta),
            MetricKind::Pipm if l == 0 => 1.0 / (1.0 + beta),
            // Later steps use the curvature bound 1 + β + (f+ε)/(x²+ε); the
            // plain 1/(1+β) step oscillates around ρ when |z⁺| ≪ ρ.
            MetricKind::Pipm => 1.0 / (1.0 + beta + (f + self.epsilon) / (x * x + self.epsilon)),
            // Inverse of a local curvature bound of the quartic radial term.
            MetricKind::Igm => 1.0 / (beta + 6.0 * x * x + 2.0 * f),
            MetricKind::Wigm => 1.0 / (beta + (6.0 * x * x + 2.0 * f) / (f + self.epsilon)),
        }
    }

    /// Projected-gradient iterations for
    /// `argmin_{x ≥ 0} ℬ(x², f) + (β/2)(x − r)²` started from `x0`.
    pub fn prox_radius(&self, cfg: &ProxConfig, beta: f64, r: f64, f: f64, x0: f64) -> f64 {
        let mut x = x0.max(0.0);
        for l in 0..cfg.inner_iters {
            let step = cfg.step.unwrap_or_else(|| self.default_step(beta, x, f, l));
            let grad = self.radial_derivative(x, f) + beta * (x - r);
            x = (x - step * grad).max(0.0);
        }
        x
    }

    /// Approximate `Prox^β_𝒢(z⁺)` elementwise as `ρ ∘ sign(z⁺)`, with the
    /// inner iteration warm-started at `|warm|`.
    pub fn prox_slice(
        &self,
        cfg: &ProxConfig,
        beta: f64,
        z_plus: &[C64],
        f: &[f64],
        warm: &[C64],
    ) -> Result<Vec<C64>> {
        self.check(z_plus.len(), f)?;
        if warm.len() != z_plus.len() {
            return Err(crate::error::shape_err("prox warm start", z_plus.len(), warm.len()));
        }
        Ok(z_plus
            .iter()
            .zip(f)
            .zip(warm)
            .map(|((&zp, &fi), w)| sign(zp) * self.prox_radius(cfg, beta, zp.norm(), fi, w.norm()))
            .collect())
    }

    pub fn prox(
        &self,
        cfg: &ProxConfig,
        beta: f64,
        z_plus: &ComplexStack,
        f: &RealStack,
        warm: &ComplexStack,
    ) -> Result<ComplexStack> {
        z_plus.ensure_geometry(f, "prox data geometry")?;
        z_plus.ensure_geometry(warm, "prox warm geometry")?;
        ComplexStack::from_vec(
            z_plus.frames(),
            z_plus.side(),
            self.prox_slice(cfg, beta, z_plus.as_slice(), f.as_slice(), warm.as_slice())?,
        )
    }
}

/// Inner-iteration settings of the z-subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxConfig {
    pub inner_iters: usize,
    /// Fixed gradient step; `None` picks a metric-specific default.
    pub step: Option<f64>,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self {
            inner_iters: 1,
            step: None,
        }
    }
}

impl ProxConfig {
    pub fn with_iters(inner_iters: usize) -> Self {
        Self {
            inner_iters,
            step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_iters == 0 {
            return Err(PtychoError::Config("prox inner_iters must be >= 1".into()));
        }
        if let Some(s) = self.step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(PtychoError::Config(format!("prox step must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: MetricKind, eps: f64) -> MetricSpec {
        MetricSpec::new(kind, eps).unwrap()
    }

    #[test]
    fn epsilon_validation() {
        assert!(MetricSpec::new(MetricKind::Pagm, 0.0).is_err());
        assert!(MetricSpec::new(MetricKind::Wigm, -1.0).is_err());
        assert!(MetricSpec::new(MetricKind::Igm, 0.0).is_ok());
        let s = MetricSpec::relative(MetricKind::Pagm, &[0.0, 4.0, 2.0]).unwrap();
        assert!((s.epsilon - 4e-8).abs() < 1e-22);
    }

    #[test]
    fn zero_residual_values() {
        let z = [C64::new(1.0, 1.0), C64::new(0.0, -3.0)];
        let f: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
        for kind in [MetricKind::Pagm, MetricKind::Igm, MetricKind::Wigm] {
            assert!(spec(kind, 0.5).value_slice(&z, &f).unwrap().abs() < 1e-15);
        }
        let s = spec(MetricKind::Pipm, 0.5);
        let expect: f64 = f.iter().map(|&v| 0.5 * ((v + 0.5) - (v + 0.5) * (v + 0.5f64).ln())).sum();
        assert!((s.value_slice(&z, &f).unwrap() - expect).abs() < 1e-13);
        let zero = [C64::new(0.0, 0.0)];
        assert_eq!(spec(MetricKind::Pagm, 1e-3).value_slice(&zero, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn negative_intensity_rejected() {
        let z = [C64::new(1.0, 0.0)];
        assert!(matches!(
            spec(MetricKind::Pagm, 1.0).value_slice(&z, &[-1.0]),
            Err(PtychoError::Domain(_))
        ));
        assert!(spec(MetricKind::Igm, 0.0).gradient_slice(&z, &[f64::NAN]).is_err());
    }

    #[test]
    fn gradient_vanishes_at_consistency_and_zero() {
        let z = [C64::new(0.3, -0.4), C64::new(2.0, 1.0)];
        let f: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
        for eps in [1e-8, 1.0] {
            for g in spec(MetricKind::Pagm, eps).gradient_slice(&z, &f).unwrap() {
                assert!(g.norm() < 1e-14);
            }
        }
        let zero = [C64::new(0.0, 0.0); 2];
        for kind in MetricKind::ALL {
            for g in spec(kind, 0.1).gradient_slice(&zero, &[1.0, 2.0]).unwrap() {
                assert_eq!(g.norm(), 0.0);
            }
        }
    }

    #[test]
    fn lipschitz_plug_in() {
        let f = [0.0; 3];
        assert_eq!(spec(MetricKind::Pagm, 1.0).lipschitz_bound(&f).unwrap(), 3.0);
        assert_eq!(spec(MetricKind::Pipm, 1.0).lipschitz_bound(&f).unwrap(), 3.0);
        assert!(spec(MetricKind::Igm, 0.0).lipschitz_bound(&f).is_err());
        assert!(spec(MetricKind::Wigm, 1.0).lipschitz_bound(&f).is_err());
    }

    #[test]
    fn prox_consistent_fixed_point() {
        let cfg = ProxConfig::default();
        let s = spec(MetricKind::Pagm, 1e-6);
        let zp = [C64::new(1.7, 0.0), C64::new(0.2, 0.0)];
        let f: Vec<f64> = zp.iter().map(|v| v.norm_sqr()).collect();
        let out = s.prox_slice(&cfg, 0.04, &zp, &f, &zp).unwrap();
        for (a, b) in out.iter().zip(&zp) {
            assert!((a - b).norm() < 1e-14);
        }
        let zero = [C64::new(0.0, 0.0)];
        for kind in MetricKind::ALL {
            let out = spec(kind, 0.1).prox_slice(&cfg, 1.0, &zero, &[0.0], &zero).unwrap();
            assert_eq!(out[0].norm(), 0.0);
        }
    }

    #[test]
    fn prox_keeps_phase_and_is_nonnegative() {
        let cfg = ProxConfig::with_iters(50);
        for kind in MetricKind::ALL {
            let s = spec(kind, 0.05);
            let zp = [C64::from_polar(0.8, 2.1), C64::from_polar(3.0, -0.7)];
            let out = s.prox_slice(&cfg, 0.7, &zp, &[2.0, 0.5], &zp).unwrap();
            for (o, z) in out.iter().zip(&zp) {
                if o.norm() > 0.0 {
                    assert!((o.arg() - z.arg()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn converged_prox_satisfies_first_order_condition() {
        let cfg = ProxConfig::with_iters(400);
        let zp = [C64::from_polar(1.3, 0.4), C64::from_polar(0.6, -2.0), C64::from_polar(2.5, 1.0)];
        let f = [2.0, 0.1, 4.0];
        for kind in MetricKind::ALL {
            let s = spec(kind, 0.01);
            let beta = 0.9;
            let out = s.prox_slice(&cfg, beta, &zp, &f, &zp).unwrap();
            let grad = s.gradient_slice(&out, &f).unwrap();
            for ((g, o), p) in grad.iter().zip(&out).zip(&zp) {
                let res = g + (o - p) * beta;
                assert!(res.norm() < 1e-6, "{kind}: residual {}", res.norm());
            }
        }
    }

    #[test]
    fn prox_config_validation() {
        assert!(ProxConfig::with_iters(0).validate().is_err());
        assert!(ProxConfig { inner_iters: 1, step: Some(0.0) }.validate().is_err());
        assert!(ProxConfig::default().validate().is_ok());
    }
}
