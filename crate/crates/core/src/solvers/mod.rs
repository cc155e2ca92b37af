//! Iterative reconstruction: generalized ADMM for both models plus the
//! ePIE, DR and PALM baselines, driven by a common loop that records one
//! [`IterationRecord`] per outer iteration.

mod admm;
mod admm2;
mod dr;
mod epie;
mod palm;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::eval;
use crate::field::{ComplexField, C64};
use crate::metrics::{MetricSpec, ProxConfig};
use crate::transform::{ComplexStack, ForwardModel, RealStack};

pub use admm::{AdmmSolver, AdmmState};
pub use admm2::{Admm2Config, Admm2Solver, Admm2State};
pub use dr::{DrConfig, DrSolver, DrState};
pub use epie::{EpieConfig, EpieSolver};
pub use palm::{PalmConfig, PalmSolver, DESK_TAU1, DESK_TAU2};

/// Magnitude above which an iterate counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Default amplitude caps `C_ω = C_u`.
pub const DEFAULT_CAP: f64 = 1e8;

/// Safeguarded diagonal preconditioner: `diag(M) = s` if `h ≤ s`, else `r·h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Safeguard {
    pub r1: f64,
    pub r2: f64,
    pub s1: f64,
    pub s2: f64,
}

impl Default for Safeguard {
    fn default() -> Self {
        Self {
            r1: 1e-6,
            r2: 1e-3,
            s1: 1e-6,
            s2: 1e-6,
        }
    }
}

fn diag_value(h: f64, s: f64, r: f64) -> f64 {
    if h <= s {
        s
    } else {
        r * h
    }
}

impl Safeguard {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r1", self.r1), ("r2", self.r2), ("s1", self.s1), ("s2", self.s2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PtychoError::Config(format!("safeguard {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Constant diagonal of `M₁ᵏ` given `h₁ᵏ`.
    pub fn m1(&self, h1: f64) -> f64 {
        diag_value(h1, self.s1, self.r1)
    }

    /// Constant diagonal of `M₂ᵏ` given `h₂ᵏ`.
    pub fn m2(&self, h2: f64) -> f64 {
        diag_value(h2, self.s2, self.r2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Preconditioner {
    /// Standard ADMM (`M ≡ 0`); the overlap guard must hold.
    None,
    Safeguarded(Safeguard),
}

impl Preconditioner {
    fn m1(&self, h1: f64) -> f64 {
        match self {
            Preconditioner::None => 0.0,
            Preconditioner::Safeguarded(s) => s.m1(h1),
        }
    }

    fn m2(&self, h2: f64) -> f64 {
        match self {
            Preconditioner::None => 0.0,
            Preconditioner::Safeguarded(s) => s.m2(h2),
        }
    }
}

/// `(2α/β)·diag(M)`, the proximal contribution to `I_u` / `I_ω`.
pub fn proximal_overlap_term(alpha: f64, beta: f64, m: f64) -> f64 {
    2.0 * alpha * m / beta
}

/// Lower bound `(2sα/β)·min(1, r)` guaranteed for `I_u` / `I_ω` under the
/// safeguarded rule.
pub fn safeguard_floor(alpha: f64, beta: f64, s: f64, r: f64) -> f64 {
    proximal_overlap_term(alpha, beta, s * r.min(1.0))
}

/// Model I settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub precond: Preconditioner,
    pub c_omega: f64,
    pub c_u: f64,
    pub metric: MetricSpec,
    pub prox: ProxConfig,
}

impl AdmmConfig {
    /// Safeguarded preconditioning with `α₁ = α₂ = β` and default caps.
    pub fn new(metric: MetricSpec, beta: f64) -> Self {
        Self {
            beta,
            alpha1: beta,
            alpha2: beta,
            precond: Preconditioner::Safeguarded(Safeguard::default()),
            c_omega: DEFAULT_CAP,
            c_u: DEFAULT_CAP,
            metric,
            prox: ProxConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(PtychoError::Config(format!("beta must be positive, got {}", self.beta)));
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PtychoError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("c_omega", self.c_omega), ("c_u", self.c_u)] {
            if !(v > 0.0) {
                return Err(PtychoError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Preconditioner::Safeguarded(s) = &self.precond {
            s.validate()?;
        }
        self.prox.validate()
    }
}

/// Stopping rule: stop once `R-factor ≤ rfactor_tol` or after `max_iters`.
/// A non-finite tolerance disables the R-factor test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iters: usize,
    pub rfactor_tol: f64,
}

impl StopRule {
    pub fn new(max_iters: usize, rfactor_tol: f64) -> Self {
        Self { max_iters, rfactor_tol }
    }

    pub fn iterations(max_iters: usize) -> Self {
        Self::new(max_iters, f64::INFINITY)
    }

    fn reached(&self, r_factor: f64) -> bool {
        self.rfactor_tol.is_finite() && r_factor <= self.rfactor_tol
    }
}

impl Default for StopRule {
    fn default() -> Self {
        Self::new(1000, 1e-6)
    }
}

/// Diagnostics produced by one solver step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub r_factor: f64,
    pub aug_lagrangian: Option<f64>,
    pub i_u: f64,
    pub i_omega: f64,
    /// `‖Λᵏ⁺¹ + ∇𝒢(zᵏ⁺¹)‖` for the ADMM solvers.
    pub multiplier_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub r_factor: f64,
    pub snr_u: Option<f64>,
    pub snr_probe: Option<f64>,
    pub aug_lagrangian: Option<f64>,
    pub i_u: f64,
    pub i_omega: f64,
    pub wall_ms: Option<f64>,
    #[serde(default)]
    pub multiplier_residual: Option<f64>,
}

pub const TRACE_HEADER: &str = "iter,r_factor,snr_u,snr_probe,aug_lagrangian,i_u,i_omega,wall_ms";

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl IterationRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{},{},{},{:e},{:e},{}",
            self.iter,
            self.r_factor,
            opt_field(self.snr_u),
            opt_field(self.snr_probe),
            opt_field(self.aug_lagrangian),
            self.i_u,
            self.i_omega,
            opt_field(self.wall_ms),
        )
    }
}

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[IterationRecord]) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for rec in trace {
        writeln!(out, "{}", rec.csv_row())?;
    }
    Ok(())
}

pub fn trace_csv_string(trace: &[IterationRecord]) -> String {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, trace).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

/// Ground truth for per-iteration SNR reporting.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub image: &'a ComplexField,
    pub probe: Option<&'a ComplexField>,
}

/// A reconstruction algorithm stepping a state of its own type.
pub trait Solver {
    type State;

    fn step(&mut self, state: &mut Self::State) -> Result<StepReport>;

    /// Current `(ω, u)`.
    fn estimates<'a>(&self, state: &'a Self::State) -> (&'a ComplexField, &'a ComplexField);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub stop: StopRule,
    pub truth: Option<Truth<'a>>,
    /// Fill `wall_ms`; leave off for byte-reproducible traces.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<S> {
    pub state: S,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

fn check_divergence(iter: usize, report: &StepReport, omega: &ComplexField, u: &ComplexField) -> Result<()> {
    let diverged = |detail: String| Err(PtychoError::Divergence { iter, detail });
    if !report.r_factor.is_finite() || report.r_factor > DIVERGENCE_LIMIT {
        return diverged(format!("r-factor {}", report.r_factor));
    }
    for (name, field) in [("probe", omega), ("image", u)] {
        let norm = field.max_abs();
        if !norm.is_finite() || norm > DIVERGENCE_LIMIT {
            return diverged(format!("{name} magnitude {norm}"));
        }
    }
    if let Some(v) = report.aug_lagrangian {
        if !v.is_finite() {
            return diverged("augmented Lagrangian is not finite".into());
        }
    }
    Ok(())
}

/// Steps `solver` until the stopping rule fires, recording every iteration.
pub fn run<S: Solver>(solver: &mut S, mut state: S::State, opts: &RunOptions<'_>) -> Result<RunOutcome<S::State>> {
    let mut trace = Vec::with_capacity(opts.stop.max_iters.min(1 << 16));
    let mut converged = false;
    for k in 1..=opts.stop.max_iters {
        let started = Instant::now();
        let report = solver.step(&mut state)?;
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        let (omega, u) = solver.estimates(&state);
        check_divergence(k, &report, omega, u)?;
        let (snr_u, snr_probe) = match &opts.truth {
            Some(t) => (
                Some(eval::snr_aligned(u, t.image)?.0),
                match t.probe {
                    Some(p) => Some(eval::snr_aligned(omega, p)?.0),
                    None => None,
                },
            ),
            None => (None, None),
        };
        trace.push(IterationRecord {
            iter: k,
            r_factor: report.r_factor,
            snr_u,
            snr_probe,
            aug_lagrangian: report.aug_lagrangian,
            i_u: report.i_u,
            i_omega: report.i_omega,
            wall_ms: opts.timing.then_some(elapsed),
            multiplier_residual: report.multiplier_residual,
        });
        if opts.stop.reached(report.r_factor) {
            converged = true;
            break;
        }
    }
    Ok(RunOutcome { state, trace, converged })
}

/// Validated intensities with their square roots.
#[derive(Debug, Clone)]
pub(crate) struct Data {
    pub f: RealStack,
    pub sqrt_f: RealStack,
}

impl Data {
    pub fn new(model: &ForwardModel, f: RealStack) -> Result<Self> {
        model.check_stack(&f, "intensity stack")?;
        if f.as_slice().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(PtychoError::Domain("intensities must be finite and non-negative".into()));
        }
        if f.max() <= 0.0 {
            return Err(PtychoError::Data("all intensities are zero".into()));
        }
        let sqrt_f = f.sqrt();
        Ok(Self { f, sqrt_f })
    }
}

/// `u⁰ = 1`.
pub fn initial_image(model: &ForwardModel) -> ComplexField {
    let n = model.image_side();
    ComplexField::filled(n, n, C64::new(1.0, 0.0))
}

/// `ω⁰ = |(1/J)·ℱ⁻¹(Σ_j √f_j)|`, recentred from the frame origin onto the
/// frame centre.
pub fn initial_probe(model: &ForwardModel, f: &RealStack) -> Result<ComplexField> {
    model.check_stack(f, "intensity stack")?;
    let m = model.frame_side();
    let jn = model.frames() as f64;
    let mut mean = vec![C64::new(0.0, 0.0); m * m];
    for j in 0..model.frames() {
        for (acc, v) in mean.iter_mut().zip(f.frame(j)) {
            *acc += C64::new(v.max(0.0).sqrt(), 0.0);
        }
    }
    for v in mean.iter_mut() {
        *v /= jn;
    }
    let back = model.fft().inverse_field(&ComplexField::square(m, mean)?);
    let half = (m / 2) as isize;
    let centred = back.cyclic_shift(-half, -half);
    Ok(centred.map(|z| C64::new(z.norm(), 0.0)))
}

/// Elementwise `Proj(num/den; cap)`; a zero denominator is an overlap
/// violation at that pixel.
pub(crate) fn closed_form_update(
    block: &'static str,
    side: usize,
    num: &[C64],
    den: &[f64],
    cap: f64,
) -> Result<Vec<C64>> {
    num.iter()
        .zip(den)
        .enumerate()
        .map(|(i, (&n, &d))| {
            if d > 0.0 {
                Ok(crate::field::project_modulus(n / d, cap))
            } else {
                Err(PtychoError::OverlapViolation {
                    block,
                    pixel: i,
                    row: i / side,
                    col: i % side,
                })
            }
        })
        .collect()
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// `Σ_j Re⟨z_j − a_j, Λ_j⟩ + (β/2)‖z_j − a_j‖²`.
pub(crate) fn coupling_terms(z: &[C64], a: &[C64], lambda: &[C64], beta: f64) -> f64 {
    let mut inner = 0.0;
    let mut sq = 0.0;
    for ((zi, ai), li) in z.iter().zip(a).zip(lambda) {
        let d = zi - ai;
        inner += (d * li.conj()).re;
        sq += d.norm_sqr();
    }
    inner + 0.5 * beta * sq
}

/// `‖Λ + s·∇𝒢(z)‖`.
pub(crate) fn multiplier_residual(metric: &MetricSpec, z: &[C64], f: &[f64], lambda: &[C64], weight: f64) -> f64 {
    z.iter()
        .zip(f)
        .zip(lambda)
        .map(|((zi, &fi), li)| (li + zi * (weight * metric.grad_coeff(zi.norm_sqr(), fi))).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Overlap minima `(min Σ|S_j u|², min Σ S_jᵀ|ω|²)` without proximal terms.
pub(crate) fn plain_overlaps(model: &ForwardModel, omega: &ComplexField, u: &ComplexField) -> (f64, f64) {
    let lat = model.lattice();
    (
        min_of(&lat.probe_overlap(u.as_slice())),
        min_of(&lat.image_overlap(omega.as_slice())),
    )
}

/// Stack of frames `a − Λ/β`.
pub(crate) fn shifted_by_multiplier(a: &ComplexStack, lambda: &ComplexStack, beta: f64) -> ComplexStack {
    let data = a
        .as_slice()
        .iter()
        .zip(lambda.as_slice())
        .map(|(x, l)| x - l / beta)
        .collect();
    ComplexStack::from_vec(a.frames(), a.side(), data).expect("same geometry")
}

/// Any solver with its configuration, for callers that pick one at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "algorithm")]
pub enum SolverSpec {
    Admm(AdmmConfig),
    Admm2(Admm2Config),
    Epie(EpieConfig),
    Dr(DrConfig),
    Palm(PalmConfig),
}

impl SolverSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SolverSpec::Admm(c) => c.validate(),
            SolverSpec::Admm2(c) => c.validate(),
            SolverSpec::Epie(c) => c.validate(),
            SolverSpec::Dr(c) => c.validate(),
            SolverSpec::Palm(c) => c.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverSpec::Admm(_) => "admm",
            SolverSpec::Admm2(_) => "admm2",
            SolverSpec::Epie(_) => "epie",
            SolverSpec::Dr(_) => "dr",
            SolverSpec::Palm(_) => "palm",
        }
    }
}

/// Final estimates and the diagnostic trace of a run.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub omega: ComplexField,
    pub u: ComplexField,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

/// Runs the chosen solver from the default initialization.
/// `probe_intensity` (`c²`, one frame) is required by Model II only.
pub fn reconstruct(
    model: &ForwardModel,
    f: &RealStack,
    probe_intensity: Option<&RealStack>,
    spec: &SolverSpec,
    opts: &RunOptions<'_>,
) -> Result<Reconstruction> {
    fn finish<S: Solver>(
        solver: &mut S,
        state: S::State,
        opts: &RunOptions<'_>,
    ) -> Result<Reconstruction> {
        let out = run(solver, state, opts)?;
        let (omega, u) = solver.estimates(&out.state);
        Ok(Reconstruction {
            omega: omega.clone(),
            u: u.clone(),
            trace: out.trace,
            converged: out.converged,
        })
    }
    match spec {
        SolverSpec::Admm(cfg) => {
            let mut s = AdmmSolver::new(model.clone(), f.clone(), cfg.clone())?;
            let state = s.initial_state()?;
            finish(&mut s, state, opts)
        }
        SolverSpec::Admm2(cfg) => {
            let c2 = probe_intensity.ok_or_else(|| {
                PtychoError::Data("Model II needs the probe diffraction intensity".into())
            })?;
            let mut s = Admm2Solver::new(model.clone(), f.clone(), c2, cfg.clone())?;
            let state = s.initial_state()?;
            finish(&mut s, state, opts)
        }
        SolverSpec::Epie(cfg) => {
            let mut s = EpieSolver::new(model.clone(), f.clone(), cfg.clone())?;
            let state = s.initial_state()?;
            finish(&mut s, state, opts)
        }
        SolverSpec::Dr(cfg) => {
            let mut s = DrSolver::new(model.clone(), f.clone(), cfg.clone())?;
            let state = s.initial_state()?;
            finish(&mut s, state, opts)
        }
        SolverSpec::Palm(cfg) => {
            let mut s = PalmSolver::new(model.clone(), f.clone(), cfg.clone())?;
            let state = s.initial_state()?;
            finish(&mut s, state, opts)
        }
    }
}

/// Shared `(ω, u)` state of the baselines that carry nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub omega: ComplexField,
    pub u: ComplexField,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safeguard_rule() {
        let s = Safeguard::default();
        assert_eq!(s.m1(0.0), 1e-6);
        assert_eq!(s.m1(1e-6), 1e-6);
        assert_eq!(s.m1(10.0), 1e-6 * 10.0);
        assert_eq!(s.m2(10.0), 1e-3 * 10.0);
        assert!(Safeguard { r1: 0.0, ..s }.validate().is_err());
    }

    #[test]
    fn floor_is_below_term() {
        let s = Safeguard::default();
        for h in [0.0, 1e-7, 1e-6, 3.0, 1e4] {
            let m = s.m1(h);
            assert!(proximal_overlap_term(0.04, 0.04, m) >= safeguard_floor(0.04, 0.04, s.s1, s.r1));
        }
    }

    #[test]
    fn csv_row_format() {
        let rec = IterationRecord {
            iter: 3,
            r_factor: 0.5,
            snr_u: None,
            snr_probe: Some(12.0),
            aug_lagrangian: Some(-1.0),
            i_u: 2.0,
            i_omega: 0.25,
            wall_ms: None,
            multiplier_residual: None,
        };
        assert_eq!(rec.csv_row(), "3,5e-1,,1.2e1,-1e0,2e0,2.5e-1,");
        let csv = trace_csv_string(&[rec]);
        assert!(csv.starts_with(TRACE_HEADER));
    }

    #[test]
    fn closed_form_flags_zero_denominator() {
        let num = vec![C64::new(1.0, 0.0); 4];
        let err = closed_form_update("probe", 2, &num, &[1.0, 1.0, 0.0, 1.0], 10.0).unwrap_err();
        assert!(matches!(err, PtychoError::OverlapViolation { pixel: 2, row: 1, col: 0, .. }));
        let ok = closed_form_update("probe", 2, &num, &[0.5; 4], 1.5).unwrap();
        assert!(ok.iter().all(|v| (v.norm() - 1.5).abs() < 1e-15));
    }

    #[test]
    fn stop_rule_infinite_tolerance_never_fires() {
        assert!(!StopRule::iterations(5).reached(0.0));
        assert!(StopRule::new(5, 1e-6).reached(1e-7));
    }
}
