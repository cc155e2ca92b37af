use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::eval::r_factor_from_frames;
use crate::field::ComplexField;
use crate::transform::{ComplexStack, ForwardModel, RealStack};

use super::{closed_form_update, initial_image, initial_probe, min_of, Data, Solver, StepReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrConfig {
    /// Inner `ω`/`u` alternations per outer iteration.
    pub inner: usize,
}

impl Default for DrConfig {
    fn default() -> Self {
        Self { inner: 2 }
    }
}

impl DrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner == 0 {
            return Err(PtychoError::Config("DR inner alternations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrState {
    pub psi: ComplexStack,
    pub omega: ComplexField,
    pub u: ComplexField,
}

/// Douglas-Rachford on the exit waves with inexact alternating
/// factorization, warm-started from the previous `(ω, u)`.
#[derive(Debug, Clone)]
pub struct DrSolver {
    model: ForwardModel,
    data: Data,
    cfg: DrConfig,
}

impl DrSolver {
    pub fn new(model: ForwardModel, f: RealStack, cfg: DrConfig) -> Result<Self> {
        cfg.validate()?;
        let data = Data::new(&model, f)?;
        Ok(Self { model, data, cfg })
    }

    /// `Ψ⁰ = ω⁰ ∘ S_j u⁰`.
    pub fn initial_state(&self) -> Result<DrState> {
        let omega = initial_probe(&self.model, &self.data.f)?;
        let u = initial_image(&self.model);
        Ok(DrState {
            psi: self.model.exit_waves(&omega, &u)?,
            omega,
            u,
        })
    }

    /// One pass of `argmin_ω F` then `argmin_u F` for fixed `Ψ`; returns the
    /// overlap minima used.
    fn alternate(&self, psi: &ComplexStack, omega: &mut ComplexField, u: &mut ComplexField) -> Result<(f64, f64)> {
        let lat = self.model.lattice();
        let (m, n) = (self.model.frame_side(), self.model.image_side());
        let probe_ov = lat.probe_overlap(u.as_slice());
        let num = self.model.probe_adjoint(u.as_slice(), psi);
        *omega = ComplexField::square(m, closed_form_update("probe", m, &num, &probe_ov, f64::INFINITY)?)?;
        let image_ov = lat.image_overlap(omega.as_slice());
        let num = self.model.image_adjoint(omega.as_slice(), psi);
        *u = ComplexField::square(n, closed_form_update("image", n, &num, &image_ov, f64::INFINITY)?)?;
        Ok((min_of(&probe_ov), min_of(&image_ov)))
    }
}

impl Solver for DrSolver {
    type State = DrState;

    fn step(&mut self, state: &mut DrState) -> Result<StepReport> {
        self.model.check_stack(&state.psi, "exit-wave stack")?;
        let mut overlaps = (0.0, 0.0);
        for _ in 0..self.cfg.inner {
            overlaps = self.alternate(&state.psi, &mut state.omega, &mut state.u)?;
        }
        let hat = self.model.exit_waves(&state.omega, &state.u)?;
        let mut reflect = hat.clone();
        for (r, p) in reflect.as_mut_slice().iter_mut().zip(state.psi.as_slice()) {
            *r = *r * 2.0 - p;
        }
        let projected = self.model.magnitude_project(&reflect, &self.data.sqrt_f)?;
        for ((p, q), h) in state.psi.as_mut_slice().iter_mut().zip(projected.as_slice()).zip(hat.as_slice()) {
            *p += q - h;
        }
        let mut a = hat;
        self.model.fft_stack(&mut a);
        Ok(StepReport {
            r_factor: r_factor_from_frames(&a, &self.data.sqrt_f)?,
            aug_lagrangian: None,
            i_u: overlaps.0,
            i_omega: overlaps.1,
            multiplier_residual: None,
        })
    }

    fn estimates<'a>(&self, state: &'a DrState) -> (&'a ComplexField, &'a ComplexField) {
        (&state.omega, &state.u)
    }
}
