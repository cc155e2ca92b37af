//! Synthetic datasets: in-memory simulation and the on-disk layout.
//!
//! A dataset directory holds `config.toml`, `manifest.json`, `lattice.json`,
//! the ground truth `image_true` / `probe_true`, the noiseless magnitudes
//! `magnitudes`, the measured `intensities` and the probe diffraction
//! `probe_intensity`, each as a `.bin` payload with a `.json` sidecar.

use std::fs;
use std::path::Path;

use ptycho_core::eval::snr_intensity;
use ptycho_core::exec::Executor;
use ptycho_core::field::ComplexField;
use ptycho_core::io::{self, Content};
use ptycho_core::synth::Fixture;
use ptycho_core::transform::{unitary_dft, ForwardModel, RealStack};
use ptycho_core::{PtychoError, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LATTICE_FILE: &str = "lattice.json";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub model: ForwardModel,
    pub image: Option<ComplexField>,
    pub probe: Option<ComplexField>,
    /// `|𝒜(ω, η·u)|` without noise.
    pub magnitudes: RealStack,
    pub intensities: RealStack,
    /// `|ℱω|²` as a one-frame stack.
    pub probe_intensity: RealStack,
    pub snr_intensity_db: Option<f64>,
}

impl Dataset {
    pub fn simulate(cfg: &ExperimentConfig, exec: Executor) -> Result<Self> {
        let lattice = cfg.scan_lattice()?;
        let mut fx = Fixture::new(lattice, cfg.phantom, cfg.probe, cfg.probe_amplitude)?;
        fx.model = ForwardModel::with_executor(fx.model.lattice().clone(), exec);
        // Noiseless intensities are the squared stored magnitudes, exactly.
        let (magnitudes, intensities, snr_intensity_db) = match cfg.noise() {
            Some(noise) => {
                let (noisy, clean) = fx.noisy_intensities(&noise)?;
                let snr = snr_intensity(&noisy, &clean)?;
                (clean.sqrt(), noisy, Some(snr))
            }
            None => {
                let a = fx.model.forward(&fx.probe, &fx.image)?.magnitudes();
                let f = a.map(|v| v * v);
                (a, f, None)
            }
        };
        Ok(Self {
            magnitudes,
            probe_intensity: fx.probe_intensity()?,
            intensities,
            snr_intensity_db,
            image: Some(fx.image),
            probe: Some(fx.probe),
            model: fx.model,
        })
    }

    pub fn write(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;
        io::write_lattice(&dir.join(LATTICE_FILE), self.model.lattice())?;
        if let Some(u) = &self.image {
            io::write_field(&dir.join("image_true"), u)?;
        }
        if let Some(w) = &self.probe {
            io::write_field(&dir.join("probe_true"), w)?;
        }
        io::write_real_stack(&dir.join("magnitudes"), &self.magnitudes, Content::Magnitude)?;
        io::write_real_stack(&dir.join("intensities"), &self.intensities, Content::Intensity)?;
        io::write_real_stack(&dir.join("probe_intensity"), &self.probe_intensity, Content::Intensity)?;
        let manifest = SimulationManifest {
            command: "simulate",
            version: env!("CARGO_PKG_VERSION"),
            frames: self.model.frames(),
            snr_intensity_db: self.snr_intensity_db,
            files: vec![
                CONFIG_FILE,
                LATTICE_FILE,
                "image_true.bin",
                "probe_true.bin",
                "magnitudes.bin",
                "intensities.bin",
                "probe_intensity.bin",
            ],
            config: cfg.clone(),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    /// Loads a dataset directory; the ground truth files are optional.
    pub fn load(dir: &Path, exec: Executor) -> Result<Self> {
        if !dir.is_dir() {
            return Err(PtychoError::Data(format!("dataset directory {} does not exist", dir.display())));
        }
        let lattice = io::read_lattice(&dir.join(LATTICE_FILE))?;
        lattice.validate().map_err(|e| PtychoError::Data(format!("{LATTICE_FILE}: {e}")))?;
        let model = ForwardModel::with_executor(lattice, exec);
        let optional_field = |name: &str| -> Result<Option<ComplexField>> {
            if dir.join(name).with_extension("json").exists() {
                io::read_field(&dir.join(name)).map(Some)
            } else {
                Ok(None)
            }
        };
        let image = optional_field("image_true")?;
        let probe = optional_field("probe_true")?;
        let (intensities, content) = io::read_real_stack(&dir.join("intensities"))?;
        if content != Content::Intensity {
            return Err(PtychoError::Data("intensities file does not hold intensities".into()));
        }
        model
            .check_stack(&intensities, "intensities")
            .map_err(|e| PtychoError::Data(e.to_string()))?;
        let magnitudes = match io::read_real_stack(&dir.join("magnitudes")) {
            Ok((m, _)) => m,
            Err(_) => intensities.sqrt(),
        };
        let probe_intensity = match io::read_real_stack(&dir.join("probe_intensity")) {
            Ok((c, _)) => c,
            Err(_) => match &probe {
                Some(w) => RealStack::from_vec(
                    1,
                    w.rows(),
                    unitary_dft(w)?.as_slice().iter().map(|z| z.norm_sqr()).collect(),
                )?,
                None => RealStack::zeros(1, model.frame_side()),
            },
        };
        for (name, field, side) in [
            ("image_true", &image, model.image_side()),
            ("probe_true", &probe, model.frame_side()),
        ] {
            if let Some(f) = field {
                if f.rows() != side || f.cols() != side {
                    return Err(PtychoError::Data(format!(
                        "{name} is {}x{}, lattice expects {side}x{side}",
                        f.rows(),
                        f.cols()
                    )));
                }
            }
        }
        Ok(Self {
            model,
            image,
            probe,
            magnitudes,
            intensities,
            probe_intensity,
            snr_intensity_db: None,
        })
    }
}

#[derive(Serialize)]
struct SimulationManifest {
    command: &'static str,
    version: &'static str,
    frames: usize,
    snr_intensity_db: Option<f64>,
    files: Vec<&'static str>,
    config: ExperimentConfig,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
