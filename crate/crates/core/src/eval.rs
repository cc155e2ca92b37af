//! Reconstruction quality measures.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, PtychoError, Result};
use crate::field::{ComplexField, C64};
use crate::transform::{ComplexStack, Fft2, ForwardModel, RealStack};

/// Reported SNR when the aligned residual vanishes.
pub const SNR_CAP_DB: f64 = 300.0;

/// Residual-to-signal ratios at or below this are rounding noise of an exact
/// match (a few ulps per pixel) and count as zero.
pub const ROUNDOFF_RATIO: f64 = (16.0 * f64::EPSILON) * (16.0 * f64::EPSILON);

/// `Σ | |A| − √f | / Σ √f` from precomputed far-field frames.
pub fn r_factor_from_frames(a: &ComplexStack, sqrt_f: &RealStack) -> Result<f64> {
    a.ensure_geometry(sqrt_f, "r-factor data")?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (z, &s) in a.as_slice().iter().zip(sqrt_f.as_slice()) {
        num += (z.norm() - s).abs();
        den += s;
    }
    if den <= 0.0 {
        return Err(PtychoError::Domain("r-factor undefined for all-zero data".into()));
    }
    Ok(num / den)
}

/// R-factor of the estimates `(ω, u)` against intensities `f`.
pub fn r_factor(model: &ForwardModel, omega: &ComplexField, u: &ComplexField, f: &RealStack) -> Result<f64> {
    model.check_stack(f, "intensity stack")?;
    if !f.all_nonnegative() {
        return Err(PtychoError::Domain("intensities must be non-negative".into()));
    }
    let a = model.forward(omega, u)?;
    r_factor_from_frames(&a, &f.sqrt())
}

/// Optimal global phase factor and cyclic translation between two images.
///
/// `shift` is the `T` with `ζ·u_k(t + T) ≈ u_g(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub zeta: C64,
    pub shift: (usize, usize),
    pub residual: f64,
}

fn check_pair(estimate: &ComplexField, truth: &ComplexField) -> Result<()> {
    if !estimate.same_shape(truth) {
        return Err(shape_err(
            "snr image pair",
            format!("{}x{}", truth.rows(), truth.cols()),
            format!("{}x{}", estimate.rows(), estimate.cols()),
        ));
    }
    if estimate.rows() != estimate.cols() {
        return Err(shape_err("snr image", "square", format!("{}x{}", estimate.rows(), estimate.cols())));
    }
    Ok(())
}

/// `c(T) = Σ_t u_g(t)·conj(u_k(t + T))` for every cyclic shift, via FFT.
pub fn cross_correlation(estimate: &ComplexField, truth: &ComplexField) -> Result<ComplexField> {
    check_pair(estimate, truth)?;
    let side = truth.rows();
    let fft = Fft2::new(side);
    let g = fft.forward_field(truth);
    let k = fft.forward_field(estimate);
    let prod = g.hadamard(&k.conj());
    // With the unitary DFT, c = side·ℱ(ℱu_g ∘ conj(ℱu_k)).
    Ok(fft.forward_field(&prod).scale(C64::new(side as f64, 0.0)))
}

/// Best alignment of `estimate` onto `truth` over phase factors and shifts.
pub fn align(estimate: &ComplexField, truth: &ComplexField) -> Result<Alignment> {
    check_pair(estimate, truth)?;
    let energy = estimate.norm_sqr();
    if !(energy > 0.0) {
        return Err(PtychoError::Degenerate("cannot align an all-zero estimate".into()));
    }
    let c = cross_correlation(estimate, truth)?;
    let side = truth.rows();
    let mut best = (0usize, 0usize);
    let mut best_mag = f64::NEG_INFINITY;
    for r in 0..side {
        for col in 0..side {
            let m = c.get(r, col).norm();
            if m > best_mag {
                best_mag = m;
                best = (r, col);
            }
        }
    }
    let shifted = estimate.cyclic_shift(best.0 as isize, best.1 as isize);
    // Compensated sums keep ζ within a few ulps, so an exact match leaves a
    // residual at rounding level regardless of image size.
    let pairs = || truth.as_slice().iter().zip(shifted.as_slice());
    let cross = C64::new(
        neumaier_sum(pairs().map(|(g, k)| (g * k.conj()).re)),
        neumaier_sum(pairs().map(|(g, k)| (g * k.conj()).im)),
    );
    let zeta = cross / neumaier_sum(shifted.as_slice().iter().map(|k| k.norm_sqr()));
    let residual = neumaier_sum(pairs().map(|(g, k)| (zeta * k - g).norm_sqr()));
    Ok(Alignment { zeta, shift: best, residual })
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

fn to_db(residual: f64, signal: f64) -> f64 {
    if residual <= signal * ROUNDOFF_RATIO {
        return SNR_CAP_DB;
    }
    (-10.0 * (residual / signal).log10()).min(SNR_CAP_DB)
}

/// Translation- and phase-invariant SNR in dB (capped at `SNR_CAP_DB`).
pub fn snr_aligned(estimate: &ComplexField, truth: &ComplexField) -> Result<(f64, Alignment)> {
    let al = align(estimate, truth)?;
    let signal = estimate.norm_sqr() * al.zeta.norm_sqr();
    if !(signal > 0.0) {
        // ζ = 0: the estimate is orthogonal to every shift of the truth.
        return Ok((f64::NEG_INFINITY, al));
    }
    Ok((to_db(al.residual, signal), al))
}

/// `−10·log10(‖f − f_clean‖² / ‖f_clean‖²)`.
pub fn snr_intensity(noisy: &RealStack, clean: &RealStack) -> Result<f64> {
    noisy.ensure_geometry(clean, "snr intensity")?;
    let signal: f64 = clean.as_slice().iter().map(|c| c * c).sum();
    if !(signal > 0.0) {
        return Err(PtychoError::Domain("clean intensities are all zero".into()));
    }
    let residual: f64 = noisy
        .as_slice()
        .iter()
        .zip(clean.as_slice())
        .map(|(n, c)| (n - c) * (n - c))
        .sum();
    Ok(to_db(residual, signal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(side: usize) -> ComplexField {
        ComplexField::from_fn(side, side, |r, c| {
            C64::new(((r * 7 + c * 3) % 11) as f64 * 0.1 + 0.05, ((r + 2 * c) % 5) as f64 * 0.2 - 0.3)
        })
    }

    #[test]
    fn shifted_and_rotated_copy_scores_cap() {
        let g = image(8);
        let k = g.cyclic_shift(3, 5).scale(C64::from_polar(2.0, 0.7));
        let (snr, al) = snr_aligned(&k, &g).unwrap();
        assert_eq!(snr, SNR_CAP_DB);
        assert_eq!(al.shift, (5, 3));
        assert!((al.zeta - C64::from_polar(0.5, -0.7)).norm() < 1e-12);
    }

    #[test]
    fn identity_has_zero_shift() {
        let g = image(6);
        let (snr, al) = snr_aligned(&g, &g).unwrap();
        assert_eq!(snr, SNR_CAP_DB);
        assert_eq!(al.shift, (0, 0));
    }

    #[test]
    fn zero_estimate_is_degenerate() {
        let g = image(4);
        let z = ComplexField::zeros(4, 4);
        assert!(matches!(snr_aligned(&z, &g), Err(PtychoError::Degenerate(_))));
    }

    #[test]
    fn r_factor_zero_on_exact_frames() {
        let a = ComplexStack::from_vec(1, 2, vec![C64::new(0.0, 2.0), C64::new(-1.0, 0.0), C64::new(0.0, 0.0), C64::new(3.0, 4.0)]).unwrap();
        let s = a.magnitudes();
        assert_eq!(r_factor_from_frames(&a, &s).unwrap(), 0.0);
        let doubled = a.map(|z| z * 2.0);
        assert!((r_factor_from_frames(&doubled, &s).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn snr_intensity_of_identical_is_cap() {
        let s = RealStack::from_vec(1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(snr_intensity(&s, &s).unwrap(), SNR_CAP_DB);
        let n = s.map(|v| v * 1.1);
        assert!((snr_intensity(&n, &s).unwrap() - 20.0).abs() < 1e-9);
    }
}
