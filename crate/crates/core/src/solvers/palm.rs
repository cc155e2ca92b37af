use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::eval::r_factor_from_frames;
use crate::field::{project_modulus, ComplexField, C64};
use crate::metrics::MetricSpec;
use crate::transform::{ComplexStack, ForwardModel, RealStack};

use super::{initial_image, initial_probe, plain_overlaps, Data, PairState, Solver, StepReport, DEFAULT_CAP};

/// Probe stepsize tuned on the desk fixture.
pub const DESK_TAU1: f64 = 0.02;
/// Image stepsize tuned on the desk fixture (probe peak 10); it scales as
/// the inverse squared probe amplitude.
pub const DESK_TAU2: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalmConfig {
    pub metric: MetricSpec,
    /// Probe stepsize `τ₁`.
    pub tau1: f64,
    /// Image stepsize `τ₂`.
    pub tau2: f64,
    /// Relaxation weight of the exit-wave variant; unused by this scheme.
    #[serde(default)]
    pub gamma: f64,
    pub c_omega: f64,
    pub c_u: f64,
}

impl PalmConfig {
    pub fn new(metric: MetricSpec, tau1: f64, tau2: f64) -> Self {
        Self {
            metric,
            tau1,
            tau2,
            gamma: 0.0,
            c_omega: DEFAULT_CAP,
            c_u: DEFAULT_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau1", self.tau1), ("tau2", self.tau2), ("c_omega", self.c_omega), ("c_u", self.c_u)] {
            if !(v > 0.0) {
                return Err(PtychoError::Config(format!("PALM {name} must be positive, got {v}")));
            }
        }
        if !(self.gamma >= 0.0) {
            return Err(PtychoError::Config(format!("PALM gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Proximal alternating linearized minimization of `𝒢(𝒜(ω,u))`.
#[derive(Debug, Clone)]
pub struct PalmSolver {
    model: ForwardModel,
    data: Data,
    cfg: PalmConfig,
}

impl PalmSolver {
    pub fn new(model: ForwardModel, f: RealStack, cfg: PalmConfig) -> Result<Self> {
        cfg.validate()?;
        let data = Data::new(&model, f)?;
        Ok(Self { model, data, cfg })
    }

    pub fn initial_state(&self) -> Result<PairState> {
        Ok(PairState {
            omega: initial_probe(&self.model, &self.data.f)?,
            u: initial_image(&self.model),
        })
    }

    /// `ℱ⁻¹∇𝒢(𝒜(ω,u))` frame by frame.
    fn back_gradient(&self, omega: &ComplexField, u: &ComplexField) -> Result<ComplexStack> {
        let a = self.model.forward(omega, u)?;
        let mut g = self.cfg.metric.gradient(&a, &self.data.f)?;
        self.model.ifft_stack(&mut g);
        Ok(g)
    }

    /// `∇_ω 𝒢(𝒜(ω,u)) = Σ_j (S_j u)* ∘ ℱ⁻¹∇_{z_j}𝒢`.
    pub fn probe_gradient(&self, omega: &ComplexField, u: &ComplexField) -> Result<ComplexField> {
        let g = self.back_gradient(omega, u)?;
        ComplexField::square(self.model.frame_side(), self.model.probe_adjoint(u.as_slice(), &g))
    }

    /// `∇_u 𝒢(𝒜(ω,u)) = Σ_j S_jᵀ(ω* ∘ ℱ⁻¹∇_{z_j}𝒢)`.
    pub fn image_gradient(&self, omega: &ComplexField, u: &ComplexField) -> Result<ComplexField> {
        let g = self.back_gradient(omega, u)?;
        ComplexField::square(self.model.image_side(), self.model.image_adjoint(omega.as_slice(), &g))
    }

    /// `𝒢(𝒜(ω,u))`.
    pub fn objective(&self, omega: &ComplexField, u: &ComplexField) -> Result<f64> {
        self.cfg.metric.value(&self.model.forward(omega, u)?, &self.data.f)
    }
}

fn descend(x: &ComplexField, grad: &ComplexField, tau: f64, cap: f64) -> ComplexField {
    let data: Vec<C64> = x
        .as_slice()
        .iter()
        .zip(grad.as_slice())
        .map(|(v, g)| project_modulus(v - g * tau, cap))
        .collect();
    ComplexField::new(x.rows(), x.cols(), data).expect("same shape")
}

impl Solver for PalmSolver {
    type State = PairState;

    fn step(&mut self, state: &mut PairState) -> Result<StepReport> {
        let gw = self.probe_gradient(&state.omega, &state.u)?;
        state.omega = descend(&state.omega, &gw, self.cfg.tau1, self.cfg.c_omega);
        let gu = self.image_gradient(&state.omega, &state.u)?;
        state.u = descend(&state.u, &gu, self.cfg.tau2, self.cfg.c_u);
        let a = self.model.forward(&state.omega, &state.u)?;
        let (i_u, i_omega) = plain_overlaps(&self.model, &state.omega, &state.u);
        Ok(StepReport {
            r_factor: r_factor_from_frames(&a, &self.data.sqrt_f)?,
            aug_lagrangian: Some(self.cfg.metric.value(&a, &self.data.f)?),
            i_u,
            i_omega,
            multiplier_residual: None,
        })
    }

    fn estimates<'a>(&self, state: &'a PairState) -> (&'a ComplexField, &'a ComplexField) {
        (&state.omega, &state.u)
    }
}
