//! Dense 2-D complex fields (images, probes, single frames).

use num_complex::Complex64;

use crate::error::{shape_err, PtychoError, Result};

pub type C64 = Complex64;

/// Row-major 2-D array of complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexField {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PtychoError::Config(format!(
                "field dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(shape_err("field data length", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, C64::new(0.0, 0.0))
    }

    pub fn filled(rows: usize, cols: usize, value: C64) -> Self {
        assert!(rows > 0 && cols > 0, "field dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(rows > 0 && cols > 0, "field dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Square field of side `side`.
    pub fn square(side: usize, data: Vec<C64>) -> Result<Self> {
        Self::new(side, side, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn same_shape(&self, other: &ComplexField) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn ensure_shape(&self, rows: usize, cols: usize, what: &'static str) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(shape_err(
                what,
                format!("{rows}x{cols}"),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }

    /// Squared Euclidean norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Largest modulus, `‖x‖_∞`.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `Σ_t self(t)·conj(other(t))`.
    pub fn inner(&self, other: &ComplexField) -> C64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn scale(&self, s: C64) -> ComplexField {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> ComplexField {
        ComplexField {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise product; panics on shape mismatch.
    pub fn hadamard(&self, other: &ComplexField) -> ComplexField {
        assert!(self.same_shape(other), "hadamard shape mismatch");
        ComplexField {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn conj(&self) -> ComplexField {
        self.map(|v| v.conj())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Cyclic shift with `out(r, c) = self(r + dr, c + dc)` (indices mod the side lengths).
    pub fn cyclic_shift(&self, dr: isize, dc: isize) -> ComplexField {
        let (rows, cols) = (self.rows as isize, self.cols as isize);
        ComplexField::from_fn(self.rows, self.cols, |r, c| {
            let rr = (r as isize + dr).rem_euclid(rows) as usize;
            let cc = (c as isize + dc).rem_euclid(cols) as usize;
            self.get(rr, cc)
        })
    }

    pub fn abs(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }
}

/// `sign(x) = x/|x|`, with `sign(0) = 1`.
#[inline]
pub fn sign(x: C64) -> C64 {
    let r = x.norm();
    if r > 0.0 {
        x / r
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Projection onto `{|x| ≤ cap}` applied elementwise.
#[inline]
pub fn project_modulus(x: C64, cap: f64) -> C64 {
    let r = x.norm();
    if r <= cap {
        return x;
    }
    let mut y = x * (cap / r);
    // rounding can leave |y| an ulp above the cap
    while y.norm() > cap {
        y *= 1.0 - f64::EPSILON;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length() {
        assert!(ComplexField::new(2, 3, vec![C64::new(0.0, 0.0); 5]).is_err());
        assert!(ComplexField::new(0, 3, vec![]).is_err());
    }

    #[test]
    fn cyclic_shift_wraps() {
        let f = ComplexField::from_fn(3, 4, |r, c| C64::new((r * 4 + c) as f64, 0.0));
        let s = f.cyclic_shift(1, -1);
        assert_eq!(s.get(0, 0), f.get(1, 3));
        assert_eq!(s.get(2, 3), f.get(0, 2));
        assert_eq!(s.cyclic_shift(-1, 1), f);
    }

    #[test]
    fn sign_of_zero_is_one() {
        assert_eq!(sign(C64::new(0.0, 0.0)), C64::new(1.0, 0.0));
        let s = sign(C64::new(3.0, 4.0));
        assert!((s - C64::new(0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn projection_caps_modulus() {
        let p = project_modulus(C64::new(3.0, 4.0), 1.0);
        assert!((p.norm() - 1.0).abs() < 1e-15);
        assert_eq!(project_modulus(C64::new(0.1, 0.0), 1.0), C64::new(0.1, 0.0));
    }
}
