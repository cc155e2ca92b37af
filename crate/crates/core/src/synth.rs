//! Synthetic phantoms, probes, noisy measurements and the scaling ambiguity.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::field::{ComplexField, C64};
use crate::lattice::{LatticeKind, ScanLattice};
use crate::poisson;
use crate::transform::{ForwardModel, RealStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomStyle {
    /// Independent smooth magnitude in `[0.2, 0.9]` and phase in `[−π/2, π/2]`.
    ComplexPair,
    /// Same magnitude, zero phase.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeStyle {
    /// Uniform disk with a quadratic (defocus) phase.
    DiskDefocus,
    /// Disk with an off-centre elliptical taper; not rotation symmetric.
    Asymmetric,
}

macro_rules! kebab_enum {
    ($ty:ty, $($name:literal => $v:path),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = PtychoError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($v),)+
                    other => Err(PtychoError::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self { $($v => $name,)+ };
                f.write_str(name)
            }
        }
    };
}

kebab_enum!(PhantomStyle, "complex-pair" => PhantomStyle::ComplexPair, "real" => PhantomStyle::Real);
kebab_enum!(ProbeStyle, "disk-defocus" => ProbeStyle::DiskDefocus, "asymmetric" => ProbeStyle::Asymmetric);

// (row, col, width, weight) in units of the image side.
const MAG_BLOBS: [(f64, f64, f64, f64); 7] = [
    (0.23, 0.31, 0.12, 1.0),
    (0.68, 0.22, 0.08, -0.9),
    (0.55, 0.71, 0.15, 0.8),
    (0.15, 0.80, 0.06, -1.1),
    (0.85, 0.60, 0.10, 0.9),
    (0.40, 0.50, 0.04, 1.2),
    (0.78, 0.90, 0.07, -0.7),
];

const PHASE_BLOBS: [(f64, f64, f64, f64); 6] = [
    (0.35, 0.65, 0.14, 1.0),
    (0.72, 0.40, 0.11, -1.0),
    (0.12, 0.15, 0.09, 0.8),
    (0.60, 0.05, 0.05, -1.2),
    (0.92, 0.28, 0.08, 0.7),
    (0.48, 0.88, 0.06, -0.9),
];

fn wrapped(d: f64) -> f64 {
    let d = d.rem_euclid(1.0);
    d.min(1.0 - d)
}

fn blob_field(blobs: &[(f64, f64, f64, f64)], y: f64, x: f64) -> f64 {
    blobs
        .iter()
        .map(|&(by, bx, w, a)| {
            let dy = wrapped(y - by);
            let dx = wrapped(x - bx);
            a * (-(dy * dy + dx * dx) / (2.0 * w * w)).exp()
        })
        .sum()
}

/// Deterministic smooth test image on a `side × side` periodic grid.
pub fn make_phantom(side: usize, style: PhantomStyle) -> Result<ComplexField> {
    if side == 0 {
        return Err(PtychoError::Config("phantom side must be positive".into()));
    }
    let n = side as f64;
    Ok(ComplexField::from_fn(side, side, |r, c| {
        let (y, x) = (r as f64 / n, c as f64 / n);
        let texture = 0.25 * (2.0 * PI * (3.0 * x + y)).sin() * (2.0 * PI * (2.0 * y - x)).cos();
        let mag = 0.55 + 0.35 * (blob_field(&MAG_BLOBS, y, x) + texture).tanh();
        match style {
            PhantomStyle::Real => C64::new(mag, 0.0),
            PhantomStyle::ComplexPair => {
                let ripple = 0.3 * (2.0 * PI * (x + 2.0 * y)).cos();
                let phase = 0.5 * PI * (blob_field(&PHASE_BLOBS, y, x) + ripple).tanh();
                C64::from_polar(mag, phase)
            }
        }
    }))
}

/// Probe on a `side × side` grid with unit peak amplitude and disk support of
/// radius `0.4·side` about the grid centre.
pub fn make_probe(side: usize, style: ProbeStyle) -> Result<ComplexField> {
    if side < 2 {
        return Err(PtychoError::Config("probe side must be at least 2".into()));
    }
    let n = side as f64;
    let centre = (n - 1.0) / 2.0;
    let radius = 0.4 * n;
    let mut probe = ComplexField::from_fn(side, side, |r, c| {
        let dy = r as f64 - centre;
        let dx = c as f64 - centre;
        let rho2 = (dy * dy + dx * dx) / (radius * radius);
        if rho2 > 1.0 {
            return C64::new(0.0, 0.0);
        }
        let amp = match style {
            ProbeStyle::DiskDefocus => 1.0,
            ProbeStyle::Asymmetric => {
                let (oy, ox) = (0.05 * n, 0.15 * n);
                let (sy, sx) = (0.2 * n, 0.35 * n);
                let ey = (dy - oy) / sy;
                let ex = (dx - ox) / sx;
                (-(ey * ey + ex * ex) / 2.0).exp()
            }
        };
        C64::from_polar(amp, PI * rho2)
    });
    let peak = probe.max_abs();
    probe = probe.scale(C64::new(1.0 / peak, 0.0));
    Ok(probe)
}

/// Desk-scale geometry: 64×64 image, 16×16 probe, scan step 4 (J = 256).
pub const DESK_IMAGE_SIDE: usize = 64;
pub const DESK_FRAME_SIDE: usize = 16;
pub const DESK_DIST: usize = 4;
/// Peak probe amplitude of the desk fixture; `η = 1` then gives an
/// intensity SNR of about 25 dB.
pub const DESK_PROBE_AMPLITUDE: f64 = 10.0;

/// Ground truth and geometry of a synthetic experiment.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub model: ForwardModel,
    pub probe: ComplexField,
    pub image: ComplexField,
}

impl Fixture {
    /// Phantom and probe of the given styles on the lattice, with the probe
    /// scaled to peak amplitude `amplitude`.
    pub fn new(
        lattice: ScanLattice,
        phantom: PhantomStyle,
        probe: ProbeStyle,
        amplitude: f64,
    ) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(PtychoError::Config(format!("probe amplitude must be positive, got {amplitude}")));
        }
        let image = make_phantom(lattice.image_side, phantom)?;
        let probe = make_probe(lattice.frame_side, probe)?.scale(C64::new(amplitude, 0.0));
        Ok(Self {
            model: ForwardModel::new(lattice),
            probe,
            image,
        })
    }

    /// The 64/16/4 fixture with the complex phantom and defocused disk probe.
    pub fn desk(kind: LatticeKind, seed: u64) -> Result<Self> {
        let lattice = ScanLattice::build(kind, DESK_IMAGE_SIDE, DESK_FRAME_SIDE, DESK_DIST, seed)?;
        Self::new(lattice, PhantomStyle::ComplexPair, ProbeStyle::DiskDefocus, DESK_PROBE_AMPLITUDE)
    }

    pub fn clean_intensities(&self) -> Result<RealStack> {
        simulate_clean(&self.model, &self.probe, &self.image)
    }

    pub fn noisy_intensities(&self, noise: &NoiseSpec) -> Result<(RealStack, RealStack)> {
        simulate_poisson(&self.model, &self.probe, &self.image, noise)
    }

    /// `|ℱω|²` as a one-frame stack (the probe-only measurement).
    pub fn probe_intensity(&self) -> Result<RealStack> {
        let m = self.model.frame_side();
        let spectrum = self.model.fft().forward_field(&self.probe);
        RealStack::from_vec(1, m, spectrum.as_slice().iter().map(|z| z.norm_sqr()).collect())
    }
}

/// Peak factor `η` and seed of the Poisson simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub eta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(eta: f64, seed: u64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(PtychoError::Config(format!("noise level eta must be positive and finite, got {eta}")));
        }
        Ok(Self { eta, seed })
    }
}

/// Noiseless intensities `|𝒜(ω, u)|²`.
pub fn simulate_clean(model: &ForwardModel, omega: &ComplexField, u: &ComplexField) -> Result<RealStack> {
    Ok(model.forward(omega, u)?.intensities())
}

/// `f(t) ~ Poisson((a^η)²(t))` with `a^η = |𝒜(ω, η·u)|`. Returns the
/// samples and the clean `(a^η)²`.
pub fn simulate_poisson(
    model: &ForwardModel,
    omega: &ComplexField,
    u: &ComplexField,
    noise: &NoiseSpec,
) -> Result<(RealStack, RealStack)> {
    let NoiseSpec { eta, seed } = *noise;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(PtychoError::Config(format!("noise level eta must be positive and finite, got {eta}")));
    }
    let clean = simulate_clean(model, omega, &u.scale(C64::new(eta, 0.0)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = clean
        .as_slice()
        .iter()
        .map(|&c| poisson::sample(&mut rng, c) as f64)
        .collect();
    let noisy = RealStack::from_vec(clean.frames(), clean.side(), counts)?;
    Ok((noisy, clean))
}

/// Multipliers `(p₁, p₂)` with `p₁ ∘ S_j p₂ ≡ 1` for every window, so
/// `(p₁∘ω, p₂∘u)` and `(ω, u)` give identical measurements.
///
/// `p₂` takes the values 1 and 2 with period `period` along the diagonals;
/// `p₁ = 1/S₀ p₂` on the frame grid.
pub fn make_ambiguity_pair(lattice: &ScanLattice, period: usize) -> Result<(ComplexField, ComplexField)> {
    if lattice.kind != LatticeKind::Square {
        return Err(PtychoError::Config("ambiguity pair requires a square lattice".into()));
    }
    if period < 2 || lattice.dist % period != 0 {
        return Err(PtychoError::Config(format!(
            "period {period} must be at least 2 and divide the scan step {}",
            lattice.dist
        )));
    }
    let n = lattice.image_side;
    let pattern = |r: usize, c: usize| if (r + c) % period == 0 { 2.0 } else { 1.0 };
    let p2 = ComplexField::from_fn(n, n, |r, c| C64::new(pattern(r, c), 0.0));
    let s0 = lattice.extract_frame(&p2, 0)?;
    let p1 = s0.map(|v| C64::new(1.0 / v.re, 0.0));
    Ok((p1, p2))
}
