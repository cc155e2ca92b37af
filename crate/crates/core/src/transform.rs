//! Unitary 2-D DFT, stacked frame containers and the bilinear forward
//! operator `𝒜_j(ω, u) = ℱ(ω ∘ S_j u)`.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{shape_err, Result};
use crate::exec::Executor;
use crate::field::{sign, ComplexField, C64};
use crate::lattice::{ensure_len, ScanLattice};

/// Orthonormal 2-D DFT on square `side × side` buffers (row-major).
#[derive(Clone)]
pub struct Fft2 {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("side", &self.side).finish()
    }
}

impl Fft2 {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    pub fn make_scratch(&self) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.scratch_len()]
    }

    fn transpose(&self, buf: &mut [C64]) {
        let n = self.side;
        for r in 0..n {
            for c in (r + 1)..n {
                buf.swap(r * n + c, c * n + r);
            }
        }
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [C64], scratch: &mut Vec<C64>) {
        debug_assert_eq!(buf.len(), self.side * self.side);
        if scratch.len() < self.scratch_len() {
            scratch.resize(self.scratch_len(), C64::new(0.0, 0.0));
        }
        let scratch = &mut scratch[..plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, scratch);
        self.transpose(buf);
        plan.process_with_scratch(buf, scratch);
        self.transpose(buf);
        let scale = 1.0 / self.side as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// In-place unitary forward transform.
    pub fn forward(&self, buf: &mut [C64], scratch: &mut Vec<C64>) {
        self.run(&self.forward, buf, scratch);
    }

    /// In-place inverse (= adjoint) transform.
    pub fn inverse(&self, buf: &mut [C64], scratch: &mut Vec<C64>) {
        self.run(&self.inverse, buf, scratch);
    }

    pub fn forward_field(&self, x: &ComplexField) -> ComplexField {
        let mut out = x.clone();
        self.forward(out.as_mut_slice(), &mut self.make_scratch());
        out
    }

    pub fn inverse_field(&self, x: &ComplexField) -> ComplexField {
        let mut out = x.clone();
        self.inverse(out.as_mut_slice(), &mut self.make_scratch());
        out
    }
}

/// Unitary DFT of a square frame.
pub fn unitary_dft(frame: &ComplexField) -> Result<ComplexField> {
    frame.ensure_shape(frame.rows(), frame.rows(), "square frame")?;
    Ok(Fft2::new(frame.rows()).forward_field(frame))
}

/// Inverse unitary DFT of a square frame.
pub fn unitary_idft(frame: &ComplexField) -> Result<ComplexField> {
    frame.ensure_shape(frame.rows(), frame.rows(), "square frame")?;
    Ok(Fft2::new(frame.rows()).inverse_field(frame))
}

/// `J` square frames stored frame-major, row-major within each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack<T> {
    frames: usize,
    side: usize,
    data: Vec<T>,
}

pub type ComplexStack = FrameStack<C64>;
/// Nonnegative stacks: intensities `f` or magnitudes `a = √f`.
pub type RealStack = FrameStack<f64>;

impl<T: Clone + Default> FrameStack<T> {
    pub fn zeros(frames: usize, side: usize) -> Self {
        Self {
            frames,
            side,
            data: vec![T::default(); frames * side * side],
        }
    }
}

impl<T> FrameStack<T> {
    pub fn from_vec(frames: usize, side: usize, data: Vec<T>) -> Result<Self> {
        ensure_len("frame stack data", frames * side * side, data.len())?;
        Ok(Self { frames, side, data })
    }

    /// Number of frames `J`.
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn frame_len(&self) -> usize {
        self.side * self.side
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, j: usize) -> &[T] {
        let m = self.frame_len();
        &self.data[j * m..(j + 1) * m]
    }

    pub fn frame_mut(&mut self, j: usize) -> &mut [T] {
        let m = self.frame_len();
        &mut self.data[j * m..(j + 1) * m]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_geometry<U>(&self, other: &FrameStack<U>) -> bool {
        self.frames == other.frames && self.side == other.side
    }

    pub fn ensure_geometry<U>(&self, other: &FrameStack<U>, what: &'static str) -> Result<()> {
        if !self.same_geometry(other) {
            return Err(shape_err(
                what,
                format!("{}x{}x{}", self.frames, self.side, self.side),
                format!("{}x{}x{}", other.frames, other.side, other.side),
            ));
        }
        Ok(())
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> FrameStack<U> {
        FrameStack {
            frames: self.frames,
            side: self.side,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl ComplexStack {
    /// Elementwise modulus.
    pub fn magnitudes(&self) -> RealStack {
        self.map(|z| z.norm())
    }

    /// Elementwise squared modulus.
    pub fn intensities(&self) -> RealStack {
        self.map(|z| z.norm_sqr())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl RealStack {
    pub fn sqrt(&self) -> RealStack {
        self.map(|v| v.max(0.0).sqrt())
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn all_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }
}

/// Elementwise modulus of a stack.
pub fn magnitudes(stack: &ComplexStack) -> RealStack {
    stack.magnitudes()
}

/// The forward operator bound to one lattice geometry.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    lattice: ScanLattice,
    fft: Fft2,
    exec: Executor,
}

impl ForwardModel {
    pub fn new(lattice: ScanLattice) -> Self {
        Self::with_executor(lattice, Executor::serial())
    }

    pub fn with_executor(lattice: ScanLattice, exec: Executor) -> Self {
        let fft = Fft2::new(lattice.frame_side);
        Self { lattice, fft, exec }
    }

    pub fn lattice(&self) -> &ScanLattice {
        &self.lattice
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn executor(&self) -> &Executor {
        &self.exec
    }

    pub fn frames(&self) -> usize {
        self.lattice.len()
    }

    pub fn frame_side(&self) -> usize {
        self.lattice.frame_side
    }

    pub fn image_side(&self) -> usize {
        self.lattice.image_side
    }

    pub fn check_probe(&self, omega: &ComplexField) -> Result<()> {
        let m = self.lattice.frame_side;
        omega.ensure_shape(m, m, "probe")
    }

    pub fn check_image(&self, u: &ComplexField) -> Result<()> {
        let n = self.lattice.image_side;
        u.ensure_shape(n, n, "image")
    }

    pub fn check_stack<T>(&self, stack: &FrameStack<T>, what: &'static str) -> Result<()> {
        if stack.frames() != self.frames() || stack.side() != self.frame_side() {
            return Err(shape_err(
                what,
                format!("{}x{}x{}", self.frames(), self.frame_side(), self.frame_side()),
                format!("{}x{}x{}", stack.frames(), stack.side(), stack.side()),
            ));
        }
        Ok(())
    }

    pub fn zero_stack(&self) -> ComplexStack {
        ComplexStack::zeros(self.frames(), self.frame_side())
    }

    /// Exit waves `Ψ_j = ω ∘ S_j u` (no transform).
    pub fn exit_waves(&self, omega: &ComplexField, u: &ComplexField) -> Result<ComplexStack> {
        self.check_probe(omega)?;
        self.check_image(u)?;
        let mut out = self.zero_stack();
        let m = self.lattice.frame_len();
        let (w, img, lat) = (omega.as_slice(), u.as_slice(), &self.lattice);
        self.exec.for_each_chunk(out.as_mut_slice(), m, || (), |j, frame, _| {
            lat.extract_into(img, j, frame);
            for (v, p) in frame.iter_mut().zip(w) {
                *v *= p;
            }
        });
        Ok(out)
    }

    /// `𝒜(ω, u)`: the stacked far-field frames.
    pub fn forward(&self, omega: &ComplexField, u: &ComplexField) -> Result<ComplexStack> {
        self.check_probe(omega)?;
        self.check_image(u)?;
        let mut out = self.zero_stack();
        let m = self.lattice.frame_len();
        let (w, img, lat, fft) = (omega.as_slice(), u.as_slice(), &self.lattice, &self.fft);
        self.exec
            .for_each_chunk(out.as_mut_slice(), m, || fft.make_scratch(), |j, frame, scratch| {
                lat.extract_into(img, j, frame);
                for (v, p) in frame.iter_mut().zip(w) {
                    *v *= p;
                }
                fft.forward(frame, scratch);
            });
        Ok(out)
    }

    /// Applies the unitary DFT to every frame in place.
    pub fn fft_stack(&self, stack: &mut ComplexStack) {
        let fft = &self.fft;
        self.exec
            .for_each_chunk(stack.as_mut_slice(), fft.side() * fft.side(), || fft.make_scratch(), |_, f, s| {
                fft.forward(f, s)
            });
    }

    /// Applies the inverse unitary DFT to every frame in place.
    pub fn ifft_stack(&self, stack: &mut ComplexStack) {
        let fft = &self.fft;
        self.exec
            .for_each_chunk(stack.as_mut_slice(), fft.side() * fft.side(), || fft.make_scratch(), |_, f, s| {
                fft.inverse(f, s)
            });
    }

    /// `𝒫̂₁(Ψ)_j = ℱ⁻¹(a_j ∘ sign(ℱΨ_j))` for every frame.
    pub fn magnitude_project(&self, psi: &ComplexStack, a: &RealStack) -> Result<ComplexStack> {
        self.check_stack(psi, "exit-wave stack")?;
        self.check_stack(a, "magnitude stack")?;
        let mut out = psi.clone();
        let m = self.lattice.frame_len();
        let fft = &self.fft;
        let a = a.as_slice();
        self.exec
            .for_each_chunk(out.as_mut_slice(), m, || fft.make_scratch(), |j, frame, scratch| {
                project_frame(fft, frame, &a[j * m..(j + 1) * m], scratch);
            });
        Ok(out)
    }

    /// Magnitude projection of a single frame (used by ePIE).
    pub fn magnitude_project_frame(&self, psi: &[C64], a: &[f64]) -> Vec<C64> {
        let mut out = psi.to_vec();
        project_frame(&self.fft, &mut out, a, &mut self.fft.make_scratch());
        out
    }

    /// `Σ_j (S_j u)* ∘ w_j` on the frame grid.
    pub fn probe_adjoint(&self, u: &[C64], w: &ComplexStack) -> Vec<C64> {
        let m = self.lattice.frame_len();
        let mut acc = vec![C64::new(0.0, 0.0); m];
        for j in 0..self.frames() {
            let wj = w.frame(j);
            self.lattice
                .for_each_window_index(j, |t, i| acc[t] += u[i].conj() * wj[t]);
        }
        acc
    }

    /// `Σ_j S_jᵀ(ω* ∘ w_j)` on the image grid.
    pub fn image_adjoint(&self, omega: &[C64], w: &ComplexStack) -> Vec<C64> {
        let mut acc = vec![C64::new(0.0, 0.0); self.lattice.image_len()];
        for j in 0..self.frames() {
            let wj = w.frame(j);
            self.lattice
                .for_each_window_index(j, |t, i| acc[i] += omega[t].conj() * wj[t]);
        }
        acc
    }
}

fn project_frame(fft: &Fft2, frame: &mut [C64], a: &[f64], scratch: &mut Vec<C64>) {
    fft.forward(frame, scratch);
    for (v, &amp) in frame.iter_mut().zip(a) {
        *v = sign(*v) * amp;
    }
    fft.inverse(frame, scratch);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn delta_and_constant_2x2() {
        let mut delta = ComplexField::zeros(2, 2);
        delta.set(0, 0, c(1.0, 0.0));
        let d = unitary_dft(&delta).unwrap();
        assert!(d.as_slice().iter().all(|v| (v - c(0.5, 0.0)).norm() < 1e-15));

        let ones = ComplexField::filled(2, 2, c(1.0, 0.0));
        let o = unitary_dft(&ones).unwrap();
        assert!((o.get(0, 0) - c(2.0, 0.0)).norm() < 1e-15);
        assert!(o.as_slice()[1..].iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn dft_matches_direct_sum() {
        let n = 5;
        let x = ComplexField::from_fn(n, n, |r, k| c((r * 3 + k) as f64 * 0.1, (r as f64 - k as f64).sin()));
        let fx = unitary_dft(&x).unwrap();
        let two_pi = std::f64::consts::TAU;
        for p in 0..n {
            for q in 0..n {
                let mut acc = c(0.0, 0.0);
                for r in 0..n {
                    for k in 0..n {
                        let phase = -two_pi * ((p * r + q * k) as f64) / n as f64;
                        acc += x.get(r, k) * C64::from_polar(1.0, phase);
                    }
                }
                acc /= n as f64;
                assert!((acc - fx.get(p, q)).norm() < 1e-12);
            }
        }
        let back = unitary_idft(&fx).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn forward_zero_probe_and_scaling() {
        let lat = ScanLattice::square(8, 4, 2).unwrap();
        let model = ForwardModel::new(lat);
        let u = ComplexField::from_fn(8, 8, |r, k| c(r as f64 + 1.0, k as f64 * 0.5));
        let zero = model.forward(&ComplexField::zeros(4, 4), &u).unwrap();
        assert!(zero.as_slice().iter().all(|v| v.norm() == 0.0));

        let w = ComplexField::from_fn(4, 4, |r, k| c(1.0 / (1.0 + r as f64), k as f64));
        let base = model.forward(&w, &u).unwrap();
        let s = c(0.3, -1.2);
        let scaled = model.forward(&w.scale(s), &u).unwrap();
        for (a, b) in scaled.as_slice().iter().zip(base.as_slice()) {
            assert!((a - b * s).norm() < 1e-12 * (1.0 + b.norm()));
        }
        assert!(model.forward(&w, &ComplexField::zeros(4, 4)).is_err());
    }

    #[test]
    fn projection_with_zero_magnitudes() {
        let lat = ScanLattice::square(8, 4, 4).unwrap();
        let model = ForwardModel::new(lat);
        let u = ComplexField::filled(8, 8, c(1.0, 1.0));
        let w = ComplexField::filled(4, 4, c(0.5, 0.0));
        let psi = model.exit_waves(&w, &u).unwrap();
        let zeros = RealStack::zeros(4, 4);
        let out = model.magnitude_project(&psi, &zeros).unwrap();
        assert!(out.as_slice().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn magnitudes_of_phasors() {
        let s = ComplexStack::from_vec(1, 2, vec![C64::from_polar(1.0, 0.3); 4]).unwrap();
        assert!(s.magnitudes().as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(ComplexStack::zeros(2, 2).magnitudes().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parallel_forward_matches_serial() {
        let lat = ScanLattice::random(16, 8, 2, 4).unwrap();
        let u = ComplexField::from_fn(16, 16, |r, k| c((r as f64 * 0.3).cos(), (k as f64 * 0.2).sin()));
        let w = ComplexField::from_fn(8, 8, |r, k| c(1.0 + r as f64, -(k as f64)));
        let serial = ForwardModel::new(lat.clone()).forward(&w, &u).unwrap();
        let par = ForwardModel::with_executor(lat, Executor::with_threads(3).unwrap())
            .forward(&w, &u)
            .unwrap();
        assert_eq!(serial, par);
    }
}
