#![allow(dead_code)]

use ptycho_core::field::{ComplexField, C64};
use ptycho_core::metrics::{MetricKind, MetricSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_c64(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
    C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

pub fn random_field(rng: &mut ChaCha8Rng, side: usize, scale: f64) -> ComplexField {
    ComplexField::from_fn(side, side, |_, _| random_c64(rng, scale))
}

/// Written out separately from the library's `pointwise`.
pub fn radial_metric(kind: MetricKind, eps: f64, x: f64, f: f64) -> f64 {
    let g = x * x;
    match kind {
        MetricKind::Pagm => 0.5 * ((g + eps).sqrt() - (f + eps).sqrt()).powi(2),
        MetricKind::Pipm => 0.5 * ((g + eps) - (f + eps) * (g + eps).ln()),
        MetricKind::Igm => 0.5 * (g - f).powi(2),
        MetricKind::Wigm => 0.5 * (g - f).powi(2) / (f + eps),
    }
}

pub fn radial_objective(spec: &MetricSpec, beta: f64, r: f64, f: f64, x: f64) -> f64 {
    radial_metric(spec.kind, spec.epsilon, x, f) + 0.5 * beta * (x - r).powi(2)
}

/// Minimizer of the radial prox objective over `x ≥ 0`: grid search on
/// `[0, r + √f + 10]` with spacing `h`, then trisection on the bracket.
pub fn prox_oracle_with(spec: &MetricSpec, beta: f64, r: f64, f: f64, h: f64) -> f64 {
    let obj = |x: f64| radial_objective(spec, beta, r, f, x);
    let hi = r + f.sqrt() + 10.0;
    let n = (hi / h).ceil() as usize;
    let mut best = 0usize;
    let mut best_val = f64::INFINITY;
    for i in 0..=n {
        let v = obj(i as f64 * h);
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    let mut a = (best as f64 - 1.0).max(0.0) * h;
    let mut b = (best as f64 + 1.0) * h;
    while b - a > 1e-12 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if obj(m1) <= obj(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    0.5 * (a + b)
}

pub fn prox_oracle(spec: &MetricSpec, beta: f64, r: f64, f: f64) -> f64 {
    prox_oracle_with(spec, beta, r, f, 1e-4)
}

/// SNR by exhaustive search over all shifts, with ζ from the normal equation.
pub fn brute_force_snr(estimate: &ComplexField, truth: &ComplexField) -> (f64, (usize, usize)) {
    let n = truth.rows();
    let mut best = (f64::INFINITY, (0, 0), 0.0);
    for dr in 0..n {
        for dc in 0..n {
            let mut cross = C64::new(0.0, 0.0);
            let mut energy = 0.0;
            for r in 0..n {
                for c in 0..n {
                    let k = estimate.get((r + dr) % n, (c + dc) % n);
                    cross += truth.get(r, c) * k.conj();
                    energy += k.norm_sqr();
                }
            }
            let zeta = cross / energy;
            let mut res = 0.0;
            for r in 0..n {
                for c in 0..n {
                    res += (zeta * estimate.get((r + dr) % n, (c + dc) % n) - truth.get(r, c)).norm_sqr();
                }
            }
            if res < best.0 {
                best = (res, (dr, dc), energy * zeta.norm_sqr());
            }
        }
    }
    let snr = if best.0 <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * (best.0 / best.2).log10()
    };
    (snr, best.1)
}

/// Central differences of a real function of complex entries, with the
/// gradient convention `∂/∂Re + i·∂/∂Im`.
pub fn fd_gradient(x: &[C64], h: f64, mut obj: impl FnMut(&[C64]) -> f64) -> Vec<C64> {
    let mut work = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = work[i];
        work[i] = orig + C64::new(h, 0.0);
        let fp = obj(&work);
        work[i] = orig - C64::new(h, 0.0);
        let fm = obj(&work);
        work[i] = orig + C64::new(0.0, h);
        let gp = obj(&work);
        work[i] = orig - C64::new(0.0, h);
        let gm = obj(&work);
        work[i] = orig;
        out.push(C64::new((fp - fm) / (2.0 * h), (gp - gm) / (2.0 * h)));
    }
    out
}

pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}
