use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::eval::r_factor_from_frames;
use crate::field::{ComplexField, C64};
use crate::transform::{ForwardModel, RealStack};

use super::{initial_image, initial_probe, plain_overlaps, Data, PairState, Solver, StepReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpieConfig {
    /// Image step `d₁`.
    pub d1: f64,
    /// Probe step `d₂`.
    pub d2: f64,
    /// Seed of the frame visiting order.
    pub seed: u64,
}

impl Default for EpieConfig {
    fn default() -> Self {
        Self { d1: 1.0, d2: 1.0, seed: 0 }
    }
}

impl EpieConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d1", self.d1), ("d2", self.d2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PtychoError::Config(format!("ePIE step {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// ePIE: one reported iteration is a cycle visiting every frame once in a
/// fresh random order, each visit updating `ω` and `u` in parallel.
#[derive(Debug, Clone)]
pub struct EpieSolver {
    model: ForwardModel,
    data: Data,
    cfg: EpieConfig,
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl EpieSolver {
    pub fn new(model: ForwardModel, f: RealStack, cfg: EpieConfig) -> Result<Self> {
        cfg.validate()?;
        let data = Data::new(&model, f)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let order = (0..model.frames()).collect();
        Ok(Self { model, data, cfg, rng, order })
    }

    pub fn initial_state(&self) -> Result<PairState> {
        Ok(PairState {
            omega: initial_probe(&self.model, &self.data.f)?,
            u: initial_image(&self.model),
        })
    }

    /// Single-frame update at frame `j`.
    pub fn visit(&self, state: &mut PairState, j: usize) -> Result<()> {
        let lat = self.model.lattice();
        let mlen = lat.frame_len();
        let mut su = vec![C64::new(0.0, 0.0); mlen];
        lat.extract_into(state.u.as_slice(), j, &mut su);
        let omega = state.omega.as_slice();
        let psi: Vec<C64> = su.iter().zip(omega).map(|(s, w)| s * w).collect();
        let proj = self.model.magnitude_project_frame(&psi, self.data.sqrt_f.frame(j));
        let diff: Vec<C64> = psi.iter().zip(&proj).map(|(p, q)| p - q).collect();

        let su_max = su.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        let w_max = omega.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        if !(su_max > 0.0) || !(w_max > 0.0) {
            return Err(PtychoError::Degenerate(format!("zero probe or image window at frame {j}")));
        }
        let (k2, k1) = (self.cfg.d2 / su_max, self.cfg.d1 / w_max);
        let img_step: Vec<C64> = omega.iter().zip(&diff).map(|(w, d)| w.conj() * d * k1).collect();
        for ((w, s), d) in state.omega.as_mut_slice().iter_mut().zip(&su).zip(&diff) {
            *w -= s.conj() * d * k2;
        }
        let u = state.u.as_mut_slice();
        lat.for_each_window_index(j, |t, i| u[i] -= img_step[t]);
        Ok(())
    }
}

impl Solver for EpieSolver {
    type State = PairState;

    fn step(&mut self, state: &mut PairState) -> Result<StepReport> {
        self.order.shuffle(&mut self.rng);
        let order = std::mem::take(&mut self.order);
        let visited = order.iter().try_for_each(|&j| self.visit(state, j));
        self.order = order;
        visited?;
        let a = self.model.forward(&state.omega, &state.u)?;
        let (i_u, i_omega) = plain_overlaps(&self.model, &state.omega, &state.u);
        Ok(StepReport {
            r_factor: r_factor_from_frames(&a, &self.data.sqrt_f)?,
            aug_lagrangian: None,
            i_u,
            i_omega,
            multiplier_residual: None,
        })
    }

    fn estimates<'a>(&self, state: &'a PairState) -> (&'a ComplexField, &'a ComplexField) {
        (&state.omega, &state.u)
    }
}
