//! Flat experiment configuration.
//!
//! A configuration is assembled from TOML layers, later layers overriding
//! earlier ones key by key: built-in defaults, the dataset's own
//! `config.toml` (when `--data` is given), the `--preset`, the `--config`
//! file, and finally command-line flags. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use ptycho_core::lattice::{LatticeKind, ScanLattice};
use ptycho_core::metrics::{MetricKind, MetricSpec, ProxConfig};
use ptycho_core::solvers::{
    Admm2Config, AdmmConfig, DrConfig, EpieConfig, PalmConfig, Preconditioner, Safeguard, SolverSpec, StopRule,
    DEFAULT_CAP, DESK_TAU1, DESK_TAU2,
};
use ptycho_core::synth::{
    NoiseSpec, PhantomStyle, ProbeStyle, DESK_DIST, DESK_FRAME_SIDE, DESK_IMAGE_SIDE, DESK_PROBE_AMPLITUDE,
};
use ptycho_core::{PtychoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Admm,
    Admm2,
    Epie,
    Dr,
    Palm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecondKind {
    Safeguarded,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // solver
    pub solver: SolverKind,
    pub metric: MetricKind,
    /// Penalization ε; unset means `1e-8·‖f‖_∞`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub beta: f64,
    /// Unset means `α = β`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    pub precond: PrecondKind,
    pub r1: f64,
    pub r2: f64,
    pub s1: f64,
    pub s2: f64,
    pub c_omega: f64,
    pub c_u: f64,
    pub inner_iters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prox_step: Option<f64>,
    pub beta2: f64,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_epsilon: Option<f64>,
    pub epie_d1: f64,
    pub epie_d2: f64,
    /// Frame-order seed; unset means `seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epie_seed: Option<u64>,
    pub dr_inner: usize,
    pub palm_tau1: f64,
    pub palm_tau2: f64,
    pub palm_gamma: f64,

    // stopping
    pub max_iters: usize,
    pub rfactor_tol: f64,

    // synthetic data
    pub lattice: LatticeKind,
    pub image_side: usize,
    pub frame_side: usize,
    pub dist: usize,
    pub probe_amplitude: f64,
    pub phantom: PhantomStyle,
    pub probe: ProbeStyle,
    /// Seed of the random lattice and of the Poisson noise.
    pub seed: u64,
    /// Peak factor; unset means noiseless data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,

    // run
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub pgm: bool,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sg = Safeguard::default();
        Self {
            solver: SolverKind::Admm,
            metric: MetricKind::Pagm,
            epsilon: None,
            beta: 0.04,
            alpha1: None,
            alpha2: None,
            precond: PrecondKind::Safeguarded,
            r1: sg.r1,
            r2: sg.r2,
            s1: sg.s1,
            s2: sg.s2,
            c_omega: DEFAULT_CAP,
            c_u: DEFAULT_CAP,
            inner_iters: 1,
            prox_step: None,
            beta2: 0.4,
            tau: 10.0,
            probe_epsilon: None,
            epie_d1: 1.0,
            epie_d2: 1.0,
            epie_seed: None,
            dr_inner: DrConfig::default().inner,
            palm_tau1: DESK_TAU1,
            palm_tau2: DESK_TAU2,
            palm_gamma: 0.0,
            max_iters: 1000,
            rfactor_tol: 1e-6,
            lattice: LatticeKind::Random,
            image_side: DESK_IMAGE_SIDE,
            frame_side: DESK_FRAME_SIDE,
            dist: DESK_DIST,
            probe_amplitude: DESK_PROBE_AMPLITUDE,
            phantom: PhantomStyle::ComplexPair,
            probe: ProbeStyle::DiskDefocus,
            seed: 0,
            eta: None,
            data: None,
            pgm: false,
            timing: false,
        }
    }
}

/// Keys that describe the synthetic dataset rather than the solver.
pub const DATASET_KEYS: [&str; 9] = [
    "lattice",
    "image_side",
    "frame_side",
    "dist",
    "probe_amplitude",
    "phantom",
    "probe",
    "seed",
    "eta",
];

/// Ordered TOML layers, later ones winning.
#[derive(Debug, Clone, Default)]
pub struct Layers {
    merged: Table,
}

impl Layers {
    pub fn new() -> Self {
        Self::default()
    }

    /// Overlays a parsed TOML table.
    pub fn push(&mut self, table: Table) -> &mut Self {
        for (k, v) in table {
            self.merged.insert(k, v);
        }
        self
    }

    /// Parses and overlays TOML text; `origin` names it in error messages.
    pub fn push_str(&mut self, text: &str, origin: &str) -> Result<&mut Self> {
        let table: Table = text
            .parse()
            .map_err(|e| PtychoError::Config(format!("{origin}: {e}")))?;
        Ok(self.push(table))
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.merged.insert(key.to_string(), value.into());
        self
    }

    pub fn table(&self) -> &Table {
        &self.merged
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = Value::Table(self.merged.clone())
            .try_into()
            .map_err(|e: toml::de::Error| PtychoError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PtychoError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        positive("beta", self.beta)?;
        positive("probe_amplitude", self.probe_amplitude)?;
        if let Some(eta) = self.eta {
            positive("eta", eta)?;
        }
        if self.rfactor_tol.is_nan() {
            return Err(PtychoError::Config("rfactor_tol must not be NaN (use inf to disable)".into()));
        }
        self.geometry_check()?;
        self.solver_spec_with(MetricSpec::new(self.metric, self.epsilon.unwrap_or(1.0))?)?
            .validate()
    }

    fn geometry_check(&self) -> Result<()> {
        self.scan_lattice().map(|_| ())
    }

    pub fn scan_lattice(&self) -> Result<ScanLattice> {
        ScanLattice::build(self.lattice, self.image_side, self.frame_side, self.dist, self.seed)
    }

    pub fn noise(&self) -> Option<NoiseSpec> {
        self.eta.map(|eta| NoiseSpec { eta, seed: self.seed })
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule::new(self.max_iters, self.rfactor_tol)
    }

    /// Data metric for intensities `f` (relative ε unless `epsilon` is set).
    pub fn metric_spec(&self, f: &[f64]) -> Result<MetricSpec> {
        match self.epsilon {
            Some(eps) => MetricSpec::new(self.metric, eps),
            None => MetricSpec::relative(self.metric, f),
        }
    }

    pub fn solver_spec(&self, f: &[f64]) -> Result<SolverSpec> {
        self.solver_spec_with(self.metric_spec(f)?)
    }

    fn solver_spec_with(&self, metric: MetricSpec) -> Result<SolverSpec> {
        let admm = AdmmConfig {
            beta: self.beta,
            alpha1: self.alpha1.unwrap_or(self.beta),
            alpha2: self.alpha2.unwrap_or(self.beta),
            precond: match self.precond {
                PrecondKind::None => Preconditioner::None,
                PrecondKind::Safeguarded => Preconditioner::Safeguarded(Safeguard {
                    r1: self.r1,
                    r2: self.r2,
                    s1: self.s1,
                    s2: self.s2,
                }),
            },
            c_omega: self.c_omega,
            c_u: self.c_u,
            metric,
            prox: ProxConfig {
                inner_iters: self.inner_iters,
                step: self.prox_step,
            },
        };
        Ok(match self.solver {
            SolverKind::Admm => SolverSpec::Admm(admm),
            SolverKind::Admm2 => SolverSpec::Admm2(Admm2Config {
                admm,
                beta2: self.beta2,
                tau: self.tau,
                probe_epsilon: self.probe_epsilon,
            }),
            SolverKind::Epie => SolverSpec::Epie(EpieConfig {
                d1: self.epie_d1,
                d2: self.epie_d2,
                seed: self.epie_seed.unwrap_or(self.seed),
            }),
            SolverKind::Dr => SolverSpec::Dr(DrConfig { inner: self.dr_inner }),
            SolverKind::Palm => SolverSpec::Palm(PalmConfig {
                metric,
                tau1: self.palm_tau1,
                tau2: self.palm_tau2,
                gamma: self.palm_gamma,
                c_omega: self.c_omega,
                c_u: self.c_u,
            }),
        })
    }

    /// Fully resolved TOML (unset options omitted).
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
