//! Scan lattices and the windowing operators `S_j` / `S_jᵀ`.
//!
//! All windows wrap periodically over the image torus. Frames are ordered
//! lexicographically over the (row, col) of the underlying square grid, and
//! every stacked quantity in the crate follows that order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, PtychoError, Result};
use crate::field::{ComplexField, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Square,
    #[serde(alias = "hex")]
    Hexagonal,
    Random,
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatticeKind::Square => "square",
            LatticeKind::Hexagonal => "hexagonal",
            LatticeKind::Random => "random",
        })
    }
}

impl FromStr for LatticeKind {
    type Err = PtychoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(LatticeKind::Square),
            "hex" | "hexagonal" => Ok(LatticeKind::Hexagonal),
            "random" => Ok(LatticeKind::Random),
            other => Err(PtychoError::Config(format!(
                "unknown lattice kind '{other}' (expected square, hex, random)"
            ))),
        }
    }
}

/// Ordered scan positions over a periodic `image_side × image_side` grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanLattice {
    pub kind: LatticeKind,
    pub image_side: usize,
    pub frame_side: usize,
    pub dist: usize,
    pub seed: Option<u64>,
    pub positions: Vec<[usize; 2]>,
}

fn check_sizes(image_side: usize, frame_side: usize, dist: usize) -> Result<()> {
    if dist == 0 || frame_side == 0 || image_side == 0 {
        return Err(PtychoError::Config("lattice sizes must be positive".into()));
    }
    if dist > frame_side {
        return Err(PtychoError::Config(format!(
            "sliding distance {dist} exceeds frame side {frame_side}"
        )));
    }
    if frame_side > image_side {
        return Err(PtychoError::Config(format!(
            "frame side {frame_side} exceeds image side {image_side}"
        )));
    }
    if !image_side.is_multiple_of(dist) {
        return Err(PtychoError::Config(format!(
            "image side {image_side} is not divisible by sliding distance {dist}"
        )));
    }
    Ok(())
}

impl ScanLattice {
    /// Grid `{(i·dist, j·dist)}` covering the torus; `J = (image_side/dist)²`.
    pub fn square(image_side: usize, frame_side: usize, dist: usize) -> Result<Self> {
        check_sizes(image_side, frame_side, dist)?;
        let steps = image_side / dist;
        let positions = (0..steps)
            .flat_map(|i| (0..steps).map(move |j| [i * dist, j * dist]))
            .collect();
        Ok(Self {
            kind: LatticeKind::Square,
            image_side,
            frame_side,
            dist,
            seed: None,
            positions,
        })
    }

    /// Square grid with every second row shifted by `⌊dist/2⌋` columns.
    pub fn hexagonal(image_side: usize, frame_side: usize, dist: usize) -> Result<Self> {
        check_sizes(image_side, frame_side, dist)?;
        if !image_side.is_multiple_of(2 * dist) {
            return Err(PtychoError::Config(format!(
                "hexagonal lattice needs image side {image_side} divisible by 2·dist = {}",
                2 * dist
            )));
        }
        let steps = image_side / dist;
        let shift = dist / 2;
        let positions = (0..steps)
            .flat_map(|i| {
                let offset = if i % 2 == 1 { shift } else { 0 };
                (0..steps).map(move |j| [i * dist, (j * dist + offset) % image_side])
            })
            .collect();
        Ok(Self {
            kind: LatticeKind::Hexagonal,
            image_side,
            frame_side,
            dist,
            seed: None,
            positions,
        })
    }

    /// Square grid with an integer offset from `{-1, 0, 1}` per axis, wrapped.
    pub fn random(image_side: usize, frame_side: usize, dist: usize, seed: u64) -> Result<Self> {
        let base = Self::square(image_side, frame_side, dist)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = image_side as i64;
        let positions = base
            .positions
            .iter()
            .map(|&[r, c]| {
                let dr: i64 = rng.random_range(-1..=1);
                let dc: i64 = rng.random_range(-1..=1);
                [
                    (r as i64 + dr).rem_euclid(n) as usize,
                    (c as i64 + dc).rem_euclid(n) as usize,
                ]
            })
            .collect();
        Ok(Self {
            kind: LatticeKind::Random,
            seed: Some(seed),
            positions,
            ..base
        })
    }

    pub fn build(kind: LatticeKind, image_side: usize, frame_side: usize, dist: usize, seed: u64) -> Result<Self> {
        match kind {
            LatticeKind::Square => Self::square(image_side, frame_side, dist),
            LatticeKind::Hexagonal => Self::hexagonal(image_side, frame_side, dist),
            LatticeKind::Random => Self::random(image_side, frame_side, dist, seed),
        }
    }

    /// Number of scan positions `J`.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Pixels per frame, `m̄`.
    pub fn frame_len(&self) -> usize {
        self.frame_side * self.frame_side
    }

    /// Pixels per image, `n`.
    pub fn image_len(&self) -> usize {
        self.image_side * self.image_side
    }

    /// Checks the structural invariants (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(PtychoError::Config("lattice has no positions".into()));
        }
        if self.frame_side == 0 || self.frame_side > self.image_side {
            return Err(PtychoError::Config(format!(
                "invalid frame side {} for image side {}",
                self.frame_side, self.image_side
            )));
        }
        if let Some(p) = self
            .positions
            .iter()
            .find(|p| p[0] >= self.image_side || p[1] >= self.image_side)
        {
            return Err(PtychoError::Config(format!(
                "position {p:?} outside image of side {}",
                self.image_side
            )));
        }
        Ok(())
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.positions.len() {
            return Err(PtychoError::Index {
                index: j,
                len: self.positions.len(),
            });
        }
        Ok(())
    }

    /// Image index of frame pixel `t` in window `j`.
    #[inline]
    pub fn image_index(&self, j: usize, t: usize) -> usize {
        let [pr, pc] = self.positions[j];
        let (a, b) = (t / self.frame_side, t % self.frame_side);
        let r = (pr + a) % self.image_side;
        let c = (pc + b) % self.image_side;
        r * self.image_side + c
    }

    /// Calls `f(t, image_index)` for every pixel of window `j`.
    #[inline]
    pub fn for_each_window_index(&self, j: usize, mut f: impl FnMut(usize, usize)) {
        let [pr, pc] = self.positions[j];
        let n = self.image_side;
        let m = self.frame_side;
        for a in 0..m {
            let row = ((pr + a) % n) * n;
            for b in 0..m {
                f(a * m + b, row + (pc + b) % n);
            }
        }
    }

    fn check_image(&self, u: &ComplexField) -> Result<()> {
        u.ensure_shape(self.image_side, self.image_side, "image")
    }

    fn check_frame(&self, w: &ComplexField) -> Result<()> {
        w.ensure_shape(self.frame_side, self.frame_side, "frame")
    }

    /// `S_j u` written into `out` (length `m̄`).
    pub fn extract_into(&self, u: &[C64], j: usize, out: &mut [C64]) {
        self.for_each_window_index(j, |t, i| out[t] = u[i]);
    }

    /// `target += S_jᵀ frame`.
    pub fn accumulate_into(&self, target: &mut [C64], frame: &[C64], j: usize) {
        self.for_each_window_index(j, |t, i| target[i] += frame[t]);
    }

    /// The `frame_side × frame_side` window of `u` at position `j`.
    pub fn extract_frame(&self, u: &ComplexField, j: usize) -> Result<ComplexField> {
        self.check_index(j)?;
        self.check_image(u)?;
        let mut out = vec![C64::new(0.0, 0.0); self.frame_len()];
        self.extract_into(u.as_slice(), j, &mut out);
        ComplexField::square(self.frame_side, out)
    }

    /// Scatter-adds `frame` into `target` at window `j`.
    pub fn accumulate_frame(&self, target: &mut ComplexField, frame: &ComplexField, j: usize) -> Result<()> {
        self.check_index(j)?;
        self.check_image(target)?;
        self.check_frame(frame)?;
        self.accumulate_into(target.as_mut_slice(), frame.as_slice(), j);
        Ok(())
    }

    /// `Σ_j |S_j u|²` on the frame grid.
    pub fn probe_overlap(&self, u: &[C64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.frame_len()];
        for j in 0..self.len() {
            self.for_each_window_index(j, |t, i| acc[t] += u[i].norm_sqr());
        }
        acc
    }

    /// `Σ_j S_jᵀ |ω|²` on the image grid.
    pub fn image_overlap(&self, omega: &[C64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.image_len()];
        let power: Vec<f64> = omega.iter().map(|w| w.norm_sqr()).collect();
        for j in 0..self.len() {
            self.for_each_window_index(j, |t, i| acc[i] += power[t]);
        }
        acc
    }

    /// `Σ_j S_jᵀ S_j 1`: how many windows cover each image pixel.
    pub fn coverage(&self) -> Vec<usize> {
        let mut acc = vec![0usize; self.image_len()];
        for j in 0..self.len() {
            self.for_each_window_index(j, |_, i| acc[i] += 1);
        }
        acc
    }

    pub fn overlap_maps(&self, omega: &ComplexField, u: &ComplexField) -> Result<OverlapMaps> {
        self.check_frame(omega)?;
        self.check_image(u)?;
        Ok(OverlapMaps {
            image_overlap: self.image_overlap(omega.as_slice()),
            probe_overlap: self.probe_overlap(u.as_slice()),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lattice: ScanLattice = serde_json::from_str(text)?;
        lattice.validate()?;
        Ok(lattice)
    }
}

/// Accumulated squared magnitudes that form the ω/u update denominators.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMaps {
    /// `Σ_j S_jᵀ|ω|²`, length `n`.
    pub image_overlap: Vec<f64>,
    /// `Σ_j |S_j u|²`, length `m̄`.
    pub probe_overlap: Vec<f64>,
}

pub(crate) fn ensure_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(shape_err(what, expected, got));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn square_small() {
        let l = ScanLattice::square(8, 4, 4).unwrap();
        assert_eq!(l.positions, vec![[0, 0], [0, 4], [4, 0], [4, 4]]);
        assert_eq!(ScanLattice::square(64, 16, 4).unwrap().len(), 256);
        let full_scale = ScanLattice::square(256, 64, 16).unwrap();
        assert_eq!(full_scale.len(), 256);
        assert_eq!(full_scale.len() * full_scale.frame_len(), 16 * full_scale.image_len());
    }

    #[test]
    fn square_rejects_uneven_tiling() {
        assert!(matches!(ScanLattice::square(10, 4, 4), Err(PtychoError::Config(_))));
        assert!(ScanLattice::square(8, 4, 5).is_err());
        assert!(ScanLattice::square(8, 9, 1).is_err());
    }

    #[test]
    fn hexagonal_rows_shift() {
        let l = ScanLattice::hexagonal(8, 4, 4).unwrap();
        assert_eq!(l.positions, vec![[0, 0], [0, 4], [4, 2], [4, 6]]);
        let l = ScanLattice::hexagonal(64, 16, 8).unwrap();
        assert_eq!(l.len(), 64);
        for p in &l.positions {
            let expect = if (p[0] / 8) % 2 == 1 { 4 } else { 0 };
            assert_eq!(p[1] % 8, expect);
        }
        assert!(ScanLattice::hexagonal(12, 4, 4).is_err());
        let unit = ScanLattice::hexagonal(8, 4, 1).unwrap();
        assert_eq!(unit.positions, ScanLattice::square(8, 4, 1).unwrap().positions);
    }

    #[test]
    fn random_offsets_bounded_and_deterministic() {
        let base = ScanLattice::square(8, 4, 4).unwrap();
        let l = ScanLattice::random(8, 4, 4, 11).unwrap();
        for (p, q) in l.positions.iter().zip(&base.positions) {
            for axis in 0..2 {
                let d = (p[axis] as i64 - q[axis] as i64).rem_euclid(8);
                assert!(d <= 1 || d == 7, "offset {d} too large");
            }
        }
        assert_eq!(l, ScanLattice::random(8, 4, 4, 11).unwrap());
        assert_eq!(ScanLattice::random(64, 16, 4, 3).unwrap().len(), 256);
    }

    #[test]
    fn extract_constant_and_identity() {
        let l = ScanLattice::square(8, 4, 4).unwrap();
        let u = ComplexField::filled(8, 8, C64::new(0.5, -1.0));
        for j in 0..l.len() {
            let w = l.extract_frame(&u, j).unwrap();
            assert!(w.as_slice().iter().all(|&v| v == C64::new(0.5, -1.0)));
        }
        let full = ScanLattice::square(4, 4, 4).unwrap();
        let u = ComplexField::from_fn(4, 4, |r, cc| c((r * 4 + cc) as f64));
        assert_eq!(full.extract_frame(&u, 0).unwrap(), u);
        assert!(matches!(l.extract_frame(&u, 9), Err(PtychoError::Index { .. })));
    }

    #[test]
    fn extract_wraps_periodically() {
        let mut l = ScanLattice::square(8, 4, 4).unwrap();
        let u = ComplexField::from_fn(8, 8, |r, cc| C64::new(r as f64, cc as f64));
        l.positions[0] = [6, 7];
        let w = l.extract_frame(&u, 0).unwrap();
        assert_eq!(w.get(0, 0), C64::new(6.0, 7.0));
        assert_eq!(w.get(2, 1), C64::new(0.0, 0.0));
        assert_eq!(w.get(3, 3), C64::new(1.0, 2.0));
    }

    #[test]
    fn accumulate_disjoint_roundtrip() {
        let l = ScanLattice::square(8, 4, 4).unwrap();
        let frame = ComplexField::from_fn(4, 4, |r, cc| C64::new(r as f64, cc as f64 + 1.0));
        let mut target = ComplexField::zeros(8, 8);
        l.accumulate_frame(&mut target, &frame, 3).unwrap();
        assert_eq!(l.extract_frame(&target, 3).unwrap(), frame);
        assert_eq!(l.extract_frame(&target, 0).unwrap(), ComplexField::zeros(4, 4));
        let wrong = ComplexField::zeros(3, 3);
        assert!(l.accumulate_frame(&mut target, &wrong, 0).is_err());
    }

    #[test]
    fn coverage_counts() {
        let l = ScanLattice::square(16, 8, 4).unwrap();
        assert!(l.coverage().iter().all(|&k| k == 4));
        let u = ComplexField::filled(16, 16, c(1.0));
        let maps = l.overlap_maps(&ComplexField::filled(8, 8, c(1.0)), &u).unwrap();
        assert!(maps.probe_overlap.iter().all(|&v| v == l.len() as f64));
        assert!(maps.image_overlap.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn json_roundtrip() {
        let l = ScanLattice::random(16, 8, 4, 5).unwrap();
        let text = l.to_json().unwrap();
        assert!(text.contains("\"kind\": \"random\""));
        assert_eq!(ScanLattice::from_json(&text).unwrap(), l);
        let bad = text.replace("\"image_side\": 16", "\"image_side\": 2");
        assert!(ScanLattice::from_json(&bad).is_err());
    }
}
