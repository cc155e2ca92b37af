//! Blind ptychographic phase retrieval.
//!
//! Scan lattices and the windowed far-field forward model, the
//! pAGM/pIPM/IGM/wIGM data metrics with their proximal maps, ADMM solvers
//! with the safeguarded preconditioner, the ePIE/DR/PALM baselines, and an
//! evaluation harness (synthetic data, R-factor, aligned SNR).

pub mod error;
pub mod eval;
pub mod exec;
pub mod field;
pub mod io;
pub mod lattice;
pub mod metrics;
pub mod poisson;
pub mod solvers;
pub mod synth;
pub mod transform;

pub use error::{PtychoError, Result};
pub use field::{ComplexField, C64};
pub use lattice::{LatticeKind, ScanLattice};
pub use metrics::{MetricKind, MetricSpec, ProxConfig};
pub use transform::{ComplexStack, ForwardModel, RealStack};
