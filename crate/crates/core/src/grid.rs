//! Uniform grids on the torus and the transforms between grid values and
//! Fourier coefficients, `f(x) = sum_k c_k e^{i k.x}`.

use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::{ModeSet, SpectralField};
use crate::scalar::{czero, Cx, Real};
use std::sync::Arc;

/// Relative energy above `|k|_inf > size/3` that counts as aliasing.
pub const ALIASING_THRESHOLD: f64 = 1e-8;

/// `size^dim` points `x_j = 2 pi j / size`, last axis fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub dim: usize,
    pub size: usize,
}

impl Grid {
    pub fn new(dim: usize, size: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if size < 4 {
            return Err(Error::InvalidArgument(format!("grid of {size} points is too small")));
        }
        Ok(Self { dim, size })
    }

    pub fn len(&self) -> usize {
        self.size.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point<T: Real>(&self, p: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        let mut r = p;
        for d in (0..self.dim).rev() {
            out[d] = T::two_pi() * T::lit((r % self.size) as f64) / T::lit(self.size as f64);
            r /= self.size;
        }
        out
    }

    pub fn points<T: Real>(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }

    /// Array slot of wave vector `k` (taken modulo the grid).
    pub fn slot(&self, k: &[i32]) -> usize {
        k.iter().fold(0, |acc, &c| acc * self.size + c.rem_euclid(self.size as i32) as usize)
    }

    /// Signed wave vector stored in a slot.
    pub fn wave(&self, mut s: usize) -> Vec<i32> {
        let g = self.size as i32;
        let mut k = vec![0; self.dim];
        for d in (0..self.dim).rev() {
            let c = (s % self.size) as i32;
            k[d] = if c > g / 2 { c - g } else { c };
            s /= self.size;
        }
        k
    }

    /// In-place n-dimensional FFT; `inverse` uses `e^{+ikx}` and no scaling.
    pub fn fft<T: Real>(&self, data: &mut [Cx<T>], inverse: bool) {
        let mut planner = FftPlanner::<T>::new();
        let plan = if inverse { planner.plan_fft_inverse(self.size) } else { planner.plan_fft_forward(self.size) };
        let g = self.size;
        let mut line = vec![czero::<T>(); g];
        for axis in 0..self.dim {
            let stride = g.pow((self.dim - 1 - axis) as u32);
            for base in 0..data.len() {
                // visit each line once: base has digit 0 on this axis
                if !(base / stride).is_multiple_of(g) {
                    continue;
                }
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + j * stride];
                }
                plan.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
    }

    /// Values of a field on the grid, one array per component.
    pub fn synthesize<T: Real>(&self, f: &SpectralField<T>) -> Result<Vec<Vec<Cx<T>>>> {
        let ms = f.modeset();
        if ms.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: ms.dim() });
        }
        if 2 * ms.cutoff() >= self.size {
            return Err(Error::Aliasing { grid: self.size, fraction: 1.0 });
        }
        let full = f.to_full();
        let n = self.dim;
        let mut out = vec![vec![czero::<T>(); self.len()]; n];
        for i in 0..ms.len() {
            let s = self.slot(ms.mode(i));
            for c in 0..n {
                out[c][s] = full.coeffs()[i * n + c];
            }
        }
        for comp in out.iter_mut() {
            self.fft(comp, true);
        }
        Ok(out)
    }

    /// Fourier coefficients of grid values restricted to a mode set (full
    /// layout), after checking the energy above `size/3`.
    pub fn analyze<T: Real>(&self, values: &[Vec<Cx<T>>], modeset: &Arc<ModeSet<T>>) -> Result<SpectralField<T>> {
        let n = self.dim;
        if values.len() != n || values.iter().any(|v| v.len() != self.len()) {
            return Err(Error::DimensionMismatch { expected: self.len(), got: values.first().map_or(0, Vec::len) });
        }
        if 2 * modeset.cutoff() >= self.size {
            return Err(Error::Aliasing { grid: self.size, fraction: 1.0 });
        }
        let scale = T::one() / T::lit(self.len() as f64);
        let mut spec: Vec<Vec<Cx<T>>> = values.to_vec();
        for comp in spec.iter_mut() {
            self.fft(comp, false);
            comp.iter_mut().for_each(|v| *v *= scale);
        }
        let third = (self.size / 3) as i32;
        let (mut high, mut total) = (T::zero(), T::zero());
        for s in 0..self.len() {
            let e = spec.iter().fold(T::zero(), |a, c| a + c[s].norm_sqr());
            total += e;
            if self.wave(s).iter().any(|c| c.abs() > third) {
                high += e;
            }
        }
        if total > T::zero() && high / total > T::lit(ALIASING_THRESHOLD) {
            return Err(Error::Aliasing { grid: self.size, fraction: (high / total).as_f64() });
        }
        let mut coeffs = vec![czero(); modeset.len() * n];
        for i in 0..modeset.len() {
            let s = self.slot(modeset.mode(i));
            for c in 0..n {
                coeffs[i * n + c] = spec[c][s];
            }
        }
        SpectralField::from_full(modeset.clone(), coeffs)
    }

    /// `sqrt(mean |v|^2)` over the grid.
    pub fn rms<T: Real>(&self, values: &[Vec<Cx<T>>]) -> T {
        let s = values.iter().flatten().fold(T::zero(), |a, v| a + v.norm_sqr());
        (s / T::lit(self.len() as f64)).sqrt()
    }
}
