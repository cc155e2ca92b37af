use crate::error::Result;
use crate::field::ComplexField;
use crate::transform::{ComplexStack, ForwardModel, RealStack};

use super::{
    closed_form_update, coupling_terms, initial_image, initial_probe, max_of, min_of, multiplier_residual,
    proximal_overlap_term, shifted_by_multiplier, AdmmConfig, Data, Solver, StepReport,
};
use crate::eval::r_factor_from_frames;

/// Iterate `(ω, u, z, Λ)` of the Model I ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub omega: ComplexField,
    pub u: ComplexField,
    pub z: ComplexStack,
    pub lambda: ComplexStack,
    pub iter: usize,
}

impl AdmmState {
    /// `z = 𝒜(ω, u)`, `Λ = 0`.
    pub fn from_estimates(model: &ForwardModel, omega: ComplexField, u: ComplexField) -> Result<Self> {
        let z = model.forward(&omega, &u)?;
        let lambda = model.zero_stack();
        Ok(Self {
            omega,
            u,
            z,
            lambda,
            iter: 0,
        })
    }
}

/// Generalized ADMM for `min 𝒢(𝒜(ω,u))` subject to the amplitude caps.
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    model: ForwardModel,
    data: Data,
    cfg: AdmmConfig,
}

impl AdmmSolver {
    pub fn new(model: ForwardModel, f: RealStack, cfg: AdmmConfig) -> Result<Self> {
        cfg.validate()?;
        let data = Data::new(&model, f)?;
        Ok(Self { model, data, cfg })
    }

    pub fn config(&self) -> &AdmmConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    /// `u⁰ = 1`, `ω⁰` from the mean diffraction magnitude.
    pub fn initial_state(&self) -> Result<AdmmState> {
        let omega = initial_probe(&self.model, &self.data.f)?;
        AdmmState::from_estimates(&self.model, omega, initial_image(&self.model))
    }

    /// `Υ_β = 𝒢(z) + Re⟨z − 𝒜(ω,u), Λ⟩ + (β/2)‖z − 𝒜(ω,u)‖²`, recomputed
    /// from the state.
    pub fn augmented_lagrangian(&self, state: &AdmmState) -> Result<f64> {
        let a = self.model.forward(&state.omega, &state.u)?;
        self.lagrangian_with(state, &a)
    }

    fn lagrangian_with(&self, state: &AdmmState, a: &ComplexStack) -> Result<f64> {
        let g = self.cfg.metric.value(&state.z, &self.data.f)?;
        Ok(g + coupling_terms(state.z.as_slice(), a.as_slice(), state.lambda.as_slice(), self.cfg.beta))
    }
}

impl Solver for AdmmSolver {
    type State = AdmmState;

    fn step(&mut self, state: &mut AdmmState) -> Result<StepReport> {
        let cfg = &self.cfg;
        let beta = cfg.beta;
        let model = &self.model;
        let lat = model.lattice();
        model.check_stack(&state.z, "z")?;
        model.check_stack(&state.lambda, "multiplier")?;

        // w_j = ℱ⁻¹(z_j + Λ_j/β)
        let mut w = state.z.clone();
        for (wi, li) in w.as_mut_slice().iter_mut().zip(state.lambda.as_slice()) {
            *wi += li / beta;
        }
        model.ifft_stack(&mut w);

        let probe_ov = lat.probe_overlap(state.u.as_slice());
        let m1 = cfg.precond.m1(max_of(&probe_ov));
        let num = model.probe_adjoint(state.u.as_slice(), &w);
        let prox1 = cfg.alpha1 * m1;
        let num: Vec<_> = num
            .iter()
            .zip(state.omega.as_slice())
            .map(|(n, o)| n * beta + o * prox1)
            .collect();
        let den: Vec<f64> = probe_ov.iter().map(|h| beta * h + prox1).collect();
        let m = model.frame_side();
        let omega = ComplexField::square(m, closed_form_update("probe", m, &num, &den, cfg.c_omega)?)?;
        let i_u = min_of(&probe_ov) + proximal_overlap_term(cfg.alpha1, beta, m1);

        let image_ov = lat.image_overlap(omega.as_slice());
        let m2 = cfg.precond.m2(max_of(&image_ov));
        let num = model.image_adjoint(omega.as_slice(), &w);
        let prox2 = cfg.alpha2 * m2;
        let num: Vec<_> = num
            .iter()
            .zip(state.u.as_slice())
            .map(|(n, v)| n * beta + v * prox2)
            .collect();
        let den: Vec<f64> = image_ov.iter().map(|h| beta * h + prox2).collect();
        let n = model.image_side();
        let u = ComplexField::square(n, closed_form_update("image", n, &num, &den, cfg.c_u)?)?;
        let i_omega = min_of(&image_ov) + proximal_overlap_term(cfg.alpha2, beta, m2);

        let a = model.forward(&omega, &u)?;
        let target = shifted_by_multiplier(&a, &state.lambda, beta);
        let z = cfg.metric.prox(&cfg.prox, beta, &target, &self.data.f, &state.z)?;
        let mut lambda = state.lambda.clone();
        for ((l, zi), ai) in lambda.as_mut_slice().iter_mut().zip(z.as_slice()).zip(a.as_slice()) {
            *l += (zi - ai) * beta;
        }

        *state = AdmmState {
            omega,
            u,
            z,
            lambda,
            iter: state.iter + 1,
        };
        let aug = self.lagrangian_with(state, &a)?;
        let residual = multiplier_residual(
            &cfg.metric,
            state.z.as_slice(),
            self.data.f.as_slice(),
            state.lambda.as_slice(),
            1.0,
        );
        Ok(StepReport {
            r_factor: r_factor_from_frames(&a, &self.data.sqrt_f)?,
            aug_lagrangian: Some(aug),
            i_u,
            i_omega,
            multiplier_residual: Some(residual),
        })
    }

    fn estimates<'a>(&self, state: &'a AdmmState) -> (&'a ComplexField, &'a ComplexField) {
        (&state.omega, &state.u)
    }
}
