//! Named parameter bundles, each a TOML fragment layered over the defaults.

use ptycho_core::{PtychoError, Result};

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "paper-noiseless-pagm",
        summary: "ADMM, pAGM, beta 0.04, stop at R <= 1e-6 or 1000 iterations",
        toml: "solver = \"admm\"\nmetric = \"pagm\"\nbeta = 0.04\nmax_iters = 1000\nrfactor_tol = 1e-6\n",
    },
    Preset {
        name: "paper-noiseless-pipm",
        summary: "ADMM, pIPM, beta 0.1",
        toml: "solver = \"admm\"\nmetric = \"pipm\"\nbeta = 0.1\nmax_iters = 1000\nrfactor_tol = 1e-6\n",
    },
    Preset {
        name: "paper-noiseless-igm",
        summary: "ADMM, IGM, beta 0.04",
        toml: "solver = \"admm\"\nmetric = \"igm\"\nbeta = 0.04\nmax_iters = 1000\nrfactor_tol = 1e-6\n",
    },
    Preset {
        name: "paper-noiseless-wigm",
        summary: "ADMM, wIGM, beta = epsilon = 0.1",
        toml: "solver = \"admm\"\nmetric = \"wigm\"\nbeta = 0.1\nepsilon = 0.1\nmax_iters = 1000\nrfactor_tol = 1e-6\n",
    },
    Preset {
        name: "paper-noisy-pagm",
        summary: "ADMM, pAGM, beta 0.2, Poisson noise eta 1, 300 iterations",
        toml: "solver = \"admm\"\nmetric = \"pagm\"\nbeta = 0.2\neta = 1.0\nmax_iters = 300\nrfactor_tol = inf\n",
    },
    Preset {
        name: "paper-noisy-pipm",
        summary: "ADMM, pIPM, beta 0.3, Poisson noise eta 1, 300 iterations",
        toml: "solver = \"admm\"\nmetric = \"pipm\"\nbeta = 0.3\neta = 1.0\nmax_iters = 300\nrfactor_tol = inf\n",
    },
    Preset {
        name: "paper-noisy-igm",
        summary: "ADMM, IGM, beta 100, Poisson noise eta 1, 300 iterations",
        toml: "solver = \"admm\"\nmetric = \"igm\"\nbeta = 100.0\neta = 1.0\nmax_iters = 300\nrfactor_tol = inf\n",
    },
    Preset {
        name: "paper-noisy-wigm",
        summary: "ADMM, wIGM, beta 1, epsilon 10, Poisson noise eta 1, 300 iterations",
        toml: "solver = \"admm\"\nmetric = \"wigm\"\nbeta = 1.0\nepsilon = 10.0\neta = 1.0\nmax_iters = 300\nrfactor_tol = inf\n",
    },
    Preset {
        name: "paper-model2",
        summary: "Model II ADMM on a square lattice, beta1 0.04, beta2 0.4, tau 10",
        toml: "solver = \"admm2\"\nmetric = \"pagm\"\nbeta = 0.04\nbeta2 = 0.4\ntau = 10.0\nlattice = \"square\"\nmax_iters = 1000\nrfactor_tol = 1e-6\n",
    },
    Preset {
        name: "desk-epie",
        summary: "ePIE with d1 = d2 = 1, 300 cycles",
        toml: "solver = \"epie\"\nepie_d1 = 1.0\nepie_d2 = 1.0\nmax_iters = 300\nrfactor_tol = 1e-6\n",
    },
    Preset {
        name: "desk-dr",
        summary: "Douglas-Rachford with 2 inner alternations, 300 iterations",
        toml: "solver = \"dr\"\ndr_inner = 2\nmax_iters = 300\nrfactor_tol = 1e-6\n",
    },
    Preset {
        name: "desk-palm",
        summary: "PALM on pAGM with the desk stepsizes, 300 iterations",
        toml: "solver = \"palm\"\nmetric = \"pagm\"\npalm_tau1 = 0.02\npalm_tau2 = 5e-4\nmax_iters = 300\nrfactor_tol = 1e-6\n",
    },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let known: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
        PtychoError::Config(format!("unknown preset '{name}' (known: {})", known.join(", ")))
    })
}
