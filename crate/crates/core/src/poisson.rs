//! Seedable exact Poisson sampling.
//!
//! Sequential inversion below `INVERSION_LIMIT`, Hörmann's transformed
//! rejection with squeeze (PTRS) above it. Both consume only uniforms from
//! the caller's generator, so a fixed seed reproduces the same draws on any
//! platform.

use rand::Rng;

pub const INVERSION_LIMIT: f64 = 30.0;

/// Draws one Poisson variate with the given mean (`mean ≤ 0` gives 0).
pub fn sample<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        inversion(rng, mean)
    } else {
        ptrs(rng, mean)
    }
}

fn inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        // Guards the tail against rounding in the accumulated cdf.
        if p < 1e-300 && k as f64 > mean {
            break;
        }
    }
    k
}

fn ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let invalpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = 1.0 - rng.random::<f64>();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + invalpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ln_gamma_factorials() {
        let mut fact = 1.0f64;
        for k in 1..25u32 {
            fact *= k as f64;
            let got = ln_gamma(k as f64 + 1.0);
            assert!((got - fact.ln()).abs() < 1e-10 * fact.ln().max(1.0), "k={k}");
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample(&mut rng, 0.0), 0);
    }

    fn moments(mean: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..n).map(|_| sample(&mut rng, mean) as f64).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n as f64 - 1.0);
        (m, v)
    }

    #[test]
    fn sample_mean_within_three_sigma() {
        let n = 10_000;
        for mean in [0.3, 4.0, 29.5, 30.0, 250.0, 1.0e5] {
            let (m, v) = moments(mean, n, 7);
            let sigma = (mean / n as f64).sqrt();
            assert!((m - mean).abs() <= 3.0 * sigma, "mean {mean}: got {m}");
            assert!((v / mean - 1.0).abs() < 0.1, "mean {mean}: variance {v}");
        }
    }

    #[test]
    fn small_mean_pmf_matches() {
        let n = 200_000;
        let mean = 2.5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 8];
        for _ in 0..n {
            let k = sample(&mut rng, mean) as usize;
            if k < counts.len() {
                counts[k] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = (-mean + k as f64 * f64::ln(mean) - ln_gamma(k as f64 + 1.0)).exp();
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - n as f64 * p).abs() < 4.0 * sd, "k={k}");
        }
    }

    #[test]
    fn large_mean_pmf_matches() {
        let n = 200_000;
        let mean = 40.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..n {
            *counts.entry(sample(&mut rng, mean)).or_insert(0usize) += 1;
        }
        for k in 30..50u64 {
            let p = (-mean + k as f64 * f64::ln(mean) - ln_gamma(k as f64 + 1.0)).exp();
            let c = *counts.get(&k).unwrap_or(&0) as f64;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c - n as f64 * p).abs() < 4.5 * sd, "k={k}: {c} vs {}", n as f64 * p);
        }
    }

    #[test]
    fn reproducible_per_seed() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|i| sample(&mut rng, i as f64 * 1.7)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }
}
