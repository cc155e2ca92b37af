use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::eval::r_factor_from_frames;
use crate::field::{ComplexField, C64};
use crate::metrics::{MetricKind, MetricSpec};
use crate::transform::{ComplexStack, ForwardModel, RealStack};

use super::{
    closed_form_update, coupling_terms, initial_image, initial_probe, max_of, min_of, multiplier_residual,
    proximal_overlap_term, shifted_by_multiplier, AdmmConfig, Data, Solver, StepReport,
};

/// Model II settings: the Model I block (`admm.beta` is `β₁`) plus the
/// probe-diffraction term `τ·𝒢̂(ℱω)` with penalty `β₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admm2Config {
    pub admm: AdmmConfig,
    pub beta2: f64,
    pub tau: f64,
    /// ε of `𝒢̂`; `None` uses `1e-8·‖c²‖_∞` for pAGM/pIPM and the main ε
    /// otherwise.
    #[serde(default)]
    pub probe_epsilon: Option<f64>,
}

impl Admm2Config {
    pub fn new(admm: AdmmConfig, beta2: f64, tau: f64) -> Self {
        Self {
            admm,
            beta2,
            tau,
            probe_epsilon: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.admm.validate()?;
        for (name, v) in [("beta2", self.beta2), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PtychoError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Admm2State {
    pub omega: ComplexField,
    pub u: ComplexField,
    pub z1: ComplexStack,
    pub z2: ComplexField,
    pub lambda1: ComplexStack,
    pub lambda2: ComplexField,
    pub iter: usize,
}

impl Admm2State {
    /// `z₁ = 𝒜(ω,u)`, `z₂ = ℱω`, both multipliers zero.
    pub fn from_estimates(model: &ForwardModel, omega: ComplexField, u: ComplexField) -> Result<Self> {
        let z1 = model.forward(&omega, &u)?;
        let z2 = model.fft().forward_field(&omega);
        let m = model.frame_side();
        Ok(Self {
            z1,
            lambda1: model.zero_stack(),
            lambda2: ComplexField::zeros(m, m),
            z2,
            omega,
            u,
            iter: 0,
        })
    }
}

/// Generalized ADMM for Model II, which adds the measured probe diffraction
/// intensity `c²` as a prior on `|ℱω|`.
#[derive(Debug, Clone)]
pub struct Admm2Solver {
    model: ForwardModel,
    data: Data,
    probe_intensity: Vec<f64>,
    probe_metric: MetricSpec,
    cfg: Admm2Config,
}

impl Admm2Solver {
    /// `probe_intensity` is a one-frame stack holding `c²`.
    pub fn new(model: ForwardModel, f: RealStack, probe_intensity: &RealStack, cfg: Admm2Config) -> Result<Self> {
        cfg.validate()?;
        let data = Data::new(&model, f)?;
        let m = model.frame_side();
        if probe_intensity.frames() != 1 || probe_intensity.side() != m {
            return Err(crate::error::shape_err(
                "probe diffraction",
                format!("1x{m}x{m}"),
                format!("{}x{}x{}", probe_intensity.frames(), probe_intensity.side(), probe_intensity.side()),
            ));
        }
        if !probe_intensity.all_nonnegative() {
            return Err(PtychoError::Domain("probe diffraction must be non-negative".into()));
        }
        let c2 = probe_intensity.as_slice().to_vec();
        let kind = cfg.admm.metric.kind;
        let probe_metric = match cfg.probe_epsilon {
            Some(eps) => MetricSpec::new(kind, eps)?,
            None if matches!(kind, MetricKind::Pagm | MetricKind::Pipm) => MetricSpec::relative(kind, &c2)?,
            None => cfg.admm.metric,
        };
        Ok(Self {
            model,
            data,
            probe_intensity: c2,
            probe_metric,
            cfg,
        })
    }

    pub fn config(&self) -> &Admm2Config {
        &self.cfg
    }

    pub fn probe_metric(&self) -> &MetricSpec {
        &self.probe_metric
    }

    pub fn initial_state(&self) -> Result<Admm2State> {
        let omega = initial_probe(&self.model, &self.data.f)?;
        Admm2State::from_estimates(&self.model, omega, initial_image(&self.model))
    }

    /// `Υ̂` of the two-constraint splitting, recomputed from the state.
    pub fn augmented_lagrangian(&self, state: &Admm2State) -> Result<f64> {
        let a = self.model.forward(&state.omega, &state.u)?;
        let fw = self.model.fft().forward_field(&state.omega);
        self.lagrangian_with(state, &a, &fw)
    }

    fn lagrangian_with(&self, state: &Admm2State, a: &ComplexStack, fw: &ComplexField) -> Result<f64> {
        let cfg = &self.cfg;
        let g1 = cfg.admm.metric.value(&state.z1, &self.data.f)?;
        let block1 = g1 + coupling_terms(state.z1.as_slice(), a.as_slice(), state.lambda1.as_slice(), cfg.admm.beta);
        let g2 = self.probe_metric.value_slice(state.z2.as_slice(), &self.probe_intensity)?;
        let block2 = cfg.tau * g2
            + coupling_terms(state.z2.as_slice(), fw.as_slice(), state.lambda2.as_slice(), cfg.beta2);
        Ok(block1 + block2)
    }
}

impl Solver for Admm2Solver {
    type State = Admm2State;

    fn step(&mut self, state: &mut Admm2State) -> Result<StepReport> {
        let cfg = &self.cfg;
        let (beta1, beta2) = (cfg.admm.beta, cfg.beta2);
        let model = &self.model;
        let lat = model.lattice();
        let m = model.frame_side();
        model.check_stack(&state.z1, "z1")?;
        model.check_stack(&state.lambda1, "multiplier 1")?;
        state.z2.ensure_shape(m, m, "z2")?;
        state.lambda2.ensure_shape(m, m, "multiplier 2")?;

        let mut w1 = state.z1.clone();
        for (wi, li) in w1.as_mut_slice().iter_mut().zip(state.lambda1.as_slice()) {
            *wi += li / beta1;
        }
        model.ifft_stack(&mut w1);
        let zbar2 = ComplexField::from_fn(m, m, |r, c| state.z2.get(r, c) + state.lambda2.get(r, c) / beta2);
        let w2 = model.fft().inverse_field(&zbar2);

        let probe_ov = lat.probe_overlap(state.u.as_slice());
        let m1 = cfg.admm.precond.m1(max_of(&probe_ov));
        let prox1 = cfg.admm.alpha1 * m1;
        let num: Vec<C64> = model
            .probe_adjoint(state.u.as_slice(), &w1)
            .iter()
            .zip(w2.as_slice())
            .zip(state.omega.as_slice())
            .map(|((n, v), o)| n * beta1 + v * beta2 + o * prox1)
            .collect();
        let den: Vec<f64> = probe_ov.iter().map(|h| beta1 * h + beta2 + prox1).collect();
        let omega = ComplexField::square(m, closed_form_update("probe", m, &num, &den, cfg.admm.c_omega)?)?;
        let i_u = min_of(&probe_ov) + proximal_overlap_term(cfg.admm.alpha1, beta1, m1);

        let image_ov = lat.image_overlap(omega.as_slice());
        let m2 = cfg.admm.precond.m2(max_of(&image_ov));
        let prox2 = cfg.admm.alpha2 * m2;
        let num: Vec<C64> = model
            .image_adjoint(omega.as_slice(), &w1)
            .iter()
            .zip(state.u.as_slice())
            .map(|(n, v)| n * beta1 + v * prox2)
            .collect();
        let den: Vec<f64> = image_ov.iter().map(|h| beta1 * h + prox2).collect();
        let n = model.image_side();
        let u = ComplexField::square(n, closed_form_update("image", n, &num, &den, cfg.admm.c_u)?)?;
        let i_omega = min_of(&image_ov) + proximal_overlap_term(cfg.admm.alpha2, beta1, m2);

        let a = model.forward(&omega, &u)?;
        let target1 = shifted_by_multiplier(&a, &state.lambda1, beta1);
        let z1 = cfg.admm.metric.prox(&cfg.admm.prox, beta1, &target1, &self.data.f, &state.z1)?;
        let mut lambda1 = state.lambda1.clone();
        for ((l, zi), ai) in lambda1.as_mut_slice().iter_mut().zip(z1.as_slice()).zip(a.as_slice()) {
            *l += (zi - ai) * beta1;
        }

        let fw = model.fft().forward_field(&omega);
        let target2: Vec<C64> = fw
            .as_slice()
            .iter()
            .zip(state.lambda2.as_slice())
            .map(|(x, l)| x - l / beta2)
            .collect();
        let z2 = self.probe_metric.prox_slice(
            &cfg.admm.prox,
            beta2 / cfg.tau,
            &target2,
            &self.probe_intensity,
            state.z2.as_slice(),
        )?;
        let z2 = ComplexField::square(m, z2)?;
        let lambda2 = ComplexField::from_fn(m, m, |r, c| state.lambda2.get(r, c) + (z2.get(r, c) - fw.get(r, c)) * beta2);

        *state = Admm2State {
            omega,
            u,
            z1,
            z2,
            lambda1,
            lambda2,
            iter: state.iter + 1,
        };
        let aug = self.lagrangian_with(state, &a, &fw)?;
        let r1 = multiplier_residual(
            &cfg.admm.metric,
            state.z1.as_slice(),
            self.data.f.as_slice(),
            state.lambda1.as_slice(),
            1.0,
        );
        let r2 = multiplier_residual(
            &self.probe_metric,
            state.z2.as_slice(),
            &self.probe_intensity,
            state.lambda2.as_slice(),
            cfg.tau,
        );
        Ok(StepReport {
            r_factor: r_factor_from_frames(&a, &self.data.sqrt_f)?,
            aug_lagrangian: Some(aug),
            i_u,
            i_omega,
            multiplier_residual: Some(r1.hypot(r2)),
        })
    }

    fn estimates<'a>(&self, state: &'a Admm2State) -> (&'a ComplexField, &'a ComplexField) {
        (&state.omega, &state.u)
    }
}
