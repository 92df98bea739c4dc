//! Fourier lattice bookkeeping on the torus.
//!
//! A [`ModeSet`] is the box `0 < |k|_inf <= N` of integer wave vectors with
//! the mean mode removed. Every mode carries an orthonormal real basis of its
//! divergence-free fiber `{v : k.v = 0}`; fiber coordinates are the unknowns
//! of every Galerkin operator in the crate.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cabs, czero, Cx, Real};

/// Truncated lattice with divergence-free fiber bases.
#[derive(Debug, Clone)]
pub struct ModeSet<T> {
    dim: usize,
    cutoff: usize,
    modes: Vec<i32>,
    fibers: Vec<T>,
}

/// Serializable description of a [`ModeSet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSetManifest {
    pub dim: usize,
    pub cutoff: usize,
    pub modes: Vec<Vec<i32>>,
}

impl<T: Real> ModeSet<T> {
    /// Builds the lattice `0 < |k|_inf <= cutoff` in lexicographic order.
    pub fn new(dim: usize, cutoff: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if cutoff == 0 {
            return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
        }
        let n = cutoff as i32;
        let mut modes = Vec::new();
        let mut fibers = Vec::new();
        let mut push = |k: &[i32]| {
            if k.iter().all(|&c| c == 0) {
                return;
            }
            modes.extend_from_slice(k);
            fibers.extend(fiber_basis::<T>(k));
        };
        if dim == 2 {
            for a in -n..=n {
                for b in -n..=n {
                    push(&[a, b]);
                }
            }
        } else {
            for a in -n..=n {
                for b in -n..=n {
                    for c in -n..=n {
                        push(&[a, b, c]);
                    }
                }
            }
        }
        Ok(Self { dim, cutoff, modes, fibers })
    }

    pub fn shared(dim: usize, cutoff: usize) -> Result<Arc<Self>> {
        Self::new(dim, cutoff).map(Arc::new)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of modes.
    pub fn len(&self) -> usize {
        self.modes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Fiber slots per mode, `n - 1`.
    pub fn slots(&self) -> usize {
        self.dim - 1
    }

    /// Total number of fiber coordinates.
    pub fn dimension(&self) -> usize {
        self.len() * self.slots()
    }

    pub fn mode(&self, i: usize) -> &[i32] {
        &self.modes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn modes(&self) -> impl Iterator<Item = &[i32]> {
        self.modes.chunks_exact(self.dim)
    }

    /// `|k|^2` of mode `i`.
    pub fn norm_sq(&self, i: usize) -> i64 {
        self.mode(i).iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    /// Orthonormal fiber vector `slot` of mode `i`.
    pub fn fiber(&self, i: usize, slot: usize) -> &[T] {
        let start = (i * self.slots() + slot) * self.dim;
        &self.fibers[start..start + self.dim]
    }

    /// Column index of fiber coordinate `(i, slot)`.
    #[inline]
    pub fn column(&self, i: usize, slot: usize) -> usize {
        i * self.slots() + slot
    }

    /// Inverse of [`Self::column`].
    #[inline]
    pub fn slot_of(&self, column: usize) -> (usize, usize) {
        (column / self.slots(), column % self.slots())
    }

    /// Position of `k` in the ordered mode list.
    pub fn index_of(&self, k: &[i32]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let n = self.cutoff as i64;
        let side = 2 * n + 1;
        let mut lin = 0i64;
        for &c in k {
            let c = c as i64;
            if c < -n || c > n {
                return None;
            }
            lin = lin * side + (c + n);
        }
        let origin = (0..self.dim).fold(0i64, |acc, _| acc * side + n);
        match lin.cmp(&origin) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(lin as usize),
            std::cmp::Ordering::Greater => Some(lin as usize - 1),
        }
    }

    pub fn manifest(&self) -> ModeSetManifest {
        ModeSetManifest {
            dim: self.dim,
            cutoff: self.cutoff,
            modes: self.modes().map(|k| k.to_vec()).collect(),
        }
    }
}

/// Orthonormal basis of `{v : k.v = 0}` built from integer data.
///
/// 2D: `k_perp / |k|` with the first nonzero component positive.
/// 3D: Gram-Schmidt of the two standard seeds least aligned with `k`, carried
/// out on integer vectors so orthogonality holds before normalization.
fn fiber_basis<T: Real>(k: &[i32]) -> Vec<T> {
    let unit = |v: &[i64]| -> Vec<T> {
        let nrm = T::int(v.iter().map(|c| c * c).sum::<i64>()).sqrt();
        v.iter().map(|&c| T::int(c) / nrm).collect()
    };
    let sign_fixed = |mut v: Vec<i64>| {
        if v.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0) {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        v
    };
    let k: Vec<i64> = k.iter().map(|&c| c as i64).collect();
    if k.len() == 2 {
        unit(&sign_fixed(vec![-k[1], k[0]]))
    } else {
        let mut order = [0usize, 1, 2];
        order.sort_by_key(|&j| (k[j].abs(), j));
        let (j1, j2) = (order[0], order[1]);
        let k2: i64 = k.iter().map(|c| c * c).sum();
        // |k|^2 e_j - k_j k is the Gram-Schmidt image of e_j, scaled to integers.
        let mut v1: Vec<i64> = k.iter().map(|&c| -k[j1] * c).collect();
        v1[j1] += k2;
        let mut v2 = vec![
            k[1] * v1[2] - k[2] * v1[1],
            k[2] * v1[0] - k[0] * v1[2],
            k[0] * v1[1] - k[1] * v1[0],
        ];
        if v2[j2] < 0 {
            v2.iter_mut().for_each(|c| *c = -*c);
        }
        let mut out = unit(&v1);
        out.extend(unit(&v2));
        out
    }
}

/// Fiber projector `I - k k^T / |k|^2`.
pub fn leray_fiber_projector<T: Real>(k: &[i32]) -> Result<DMatrix<T>> {
    let k2: i64 = k.iter().map(|&c| (c as i64) * (c as i64)).sum();
    if k2 == 0 {
        return Err(Error::ZeroWaveVector);
    }
    let n = k.len();
    let k2 = T::int(k2);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { T::one() } else { T::zero() };
        delta - T::int(k[i] as i64 * k[j] as i64) / k2
    }))
}

/// Coefficient layout of a [`SpectralField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `n - 1` fiber coordinates per mode; divergence-free by construction.
    Fiber,
    /// Full `C^n` Fourier coefficient per mode.
    Full,
}

/// Vector field on the torus given by its Fourier coefficients on a [`ModeSet`].
#[derive(Debug, Clone)]
pub struct SpectralField<T> {
    modeset: Arc<ModeSet<T>>,
    layout: Layout,
    coeffs: Vec<Cx<T>>,
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(modeset: Arc<ModeSet<T>>, layout: Layout) -> Self {
        let len = match layout {
            Layout::Fiber => modeset.dimension(),
            Layout::Full => modeset.len() * modeset.dim(),
        };
        Self { modeset, layout, coeffs: vec![czero(); len] }
    }

    pub fn from_fiber(modeset: Arc<ModeSet<T>>, coeffs: Vec<Cx<T>>) -> Result<Self> {
        if coeffs.len() != modeset.dimension() {
            return Err(Error::DimensionMismatch { expected: modeset.dimension(), got: coeffs.len() });
        }
        Ok(Self { modeset, layout: Layout::Fiber, coeffs })
    }

    pub fn from_full(modeset: Arc<ModeSet<T>>, coeffs: Vec<Cx<T>>) -> Result<Self> {
        let expected = modeset.len() * modeset.dim();
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: coeffs.len() });
        }
        Ok(Self { modeset, layout: Layout::Full, coeffs })
    }

    pub fn modeset(&self) -> &Arc<ModeSet<T>> {
        &self.modeset
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn coeffs(&self) -> &[Cx<T>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Cx<T>] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Cx<T>> {
        self.coeffs
    }

    /// `C^n` coefficient of mode `i` (full layout) or its fiber coordinates.
    pub fn mode_coeffs(&self, i: usize) -> &[Cx<T>] {
        let w = match self.layout {
            Layout::Fiber => self.modeset.slots(),
            Layout::Full => self.modeset.dim(),
        };
        &self.coeffs[i * w..(i + 1) * w]
    }

    /// True if `other` lives on the same lattice.
    pub fn compatible(&self, other: &ModeSet<T>) -> bool {
        self.modeset.dim() == other.dim() && self.modeset.cutoff() == other.cutoff()
    }

    /// Converts to the full layout. Exact for fiber input.
    pub fn to_full(&self) -> Self {
        match self.layout {
            Layout::Full => self.clone(),
            Layout::Fiber => {
                let ms = &self.modeset;
                let (n, s) = (ms.dim(), ms.slots());
                let mut out = vec![czero(); ms.len() * n];
                for i in 0..ms.len() {
                    for a in 0..s {
                        let c = self.coeffs[i * s + a];
                        for (d, &e) in ms.fiber(i, a).iter().enumerate() {
                            out[i * n + d] += c * e;
                        }
                    }
                }
                Self { modeset: ms.clone(), layout: Layout::Full, coeffs: out }
            }
        }
    }

    /// Converts to fiber coordinates; on full input this applies the Leray projection.
    pub fn to_fiber(&self) -> Self {
        match self.layout {
            Layout::Fiber => self.clone(),
            Layout::Full => {
                let ms = &self.modeset;
                let (n, s) = (ms.dim(), ms.slots());
                let mut out = vec![czero(); ms.dimension()];
                for i in 0..ms.len() {
                    let v = &self.coeffs[i * n..(i + 1) * n];
                    for a in 0..s {
                        out[i * s + a] =
                            ms.fiber(i, a).iter().zip(v).fold(czero(), |acc, (&e, &c)| acc + c * e);
                    }
                }
                Self { modeset: ms.clone(), layout: Layout::Fiber, coeffs: out }
            }
        }
    }

    /// Leray projection; the result is in full layout.
    pub fn project_div_free(&self) -> Self {
        match self.layout {
            Layout::Fiber => self.to_full(),
            Layout::Full => {
                let ms = &self.modeset;
                let n = ms.dim();
                let mut out = self.coeffs.clone();
                for i in 0..ms.len() {
                    let k = ms.mode(i);
                    let k2 = T::int(ms.norm_sq(i));
                    let v = &mut out[i * n..(i + 1) * n];
                    let kv = k.iter().zip(v.iter()).fold(czero::<T>(), |acc, (&kc, &c)| acc + c * T::int(kc as i64));
                    let r = kv / k2;
                    for (d, c) in v.iter_mut().enumerate() {
                        *c -= r * T::int(k[d] as i64);
                    }
                }
                Self { modeset: ms.clone(), layout: Layout::Full, coeffs: out }
            }
        }
    }

    /// Ball truncation `P_N`: zeroes every mode with `|k| >= cutoff`.
    pub fn truncate(&self, cutoff: T) -> Self {
        let ms = &self.modeset;
        let w = self.coeffs.len() / ms.len().max(1);
        let mut out = self.coeffs.clone();
        let c2 = cutoff * cutoff;
        for i in 0..ms.len() {
            if T::int(ms.norm_sq(i)) >= c2 {
                out[i * w..(i + 1) * w].iter_mut().for_each(|c| *c = czero());
            }
        }
        Self { modeset: ms.clone(), layout: self.layout, coeffs: out }
    }

    /// `L^2` norm with the normalization `f(x) = sum_k f_k e^{ikx}`.
    pub fn norm(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |acc, &c| acc + c.norm_sqr()).sqrt()
    }

    /// Largest `|k.v(k)| / |k|` over the modes (zero for fiber layout).
    pub fn divergence_defect(&self) -> T {
        let f = self.to_full();
        let ms = &self.modeset;
        let n = ms.dim();
        (0..ms.len())
            .map(|i| {
                let k = ms.mode(i);
                let v = &f.coeffs[i * n..(i + 1) * n];
                let kv = k.iter().zip(v).fold(czero::<T>(), |acc, (&kc, &c)| acc + c * T::int(kc as i64));
                cabs(kv) / T::int(ms.norm_sq(i)).sqrt()
            })
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn axpy(&mut self, alpha: Cx<T>, other: &Self) -> Result<()> {
        if self.layout != other.layout || !self.compatible(&other.modeset) {
            return Err(Error::ModeSetMismatch);
        }
        for (a, &b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: Cx<T>) {
        self.coeffs.iter_mut().for_each(|c| *c *= alpha);
    }

    /// Distance `||self - other||`; both operands are compared in full layout
    /// if the layouts differ.
    pub fn distance(&self, other: &Self) -> Result<T> {
        if !self.compatible(&other.modeset) {
            return Err(Error::ModeSetMismatch);
        }
        let (a, b) = if self.layout == other.layout {
            (self.clone(), other.clone())
        } else {
            (self.to_full(), other.to_full())
        };
        Ok(a.coeffs
            .iter()
            .zip(&b.coeffs)
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y).norm_sqr())
            .sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_full(ms: &Arc<ModeSet<f64>>, seed: u64) -> SpectralField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = ms.len() * ms.dim();
        let v = (0..len).map(|_| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        SpectralField::from_full(ms.clone(), v).unwrap()
    }

    #[test]
    fn mode_counts() {
        let m = ModeSet::<f64>::new(2, 1).unwrap();
        assert_eq!((m.len(), m.dimension()), (8, 8));
        let m = ModeSet::<f64>::new(2, 2).unwrap();
        assert_eq!((m.len(), m.dimension()), (24, 24));
        let m = ModeSet::<f64>::new(3, 1).unwrap();
        assert_eq!((m.len(), m.dimension()), (26, 52));
    }

    #[test]
    fn unsupported_dimension_rejected() {
        assert_eq!(ModeSet::<f64>::new(4, 2).unwrap_err(), Error::UnsupportedDimension(4));
        assert!(ModeSet::<f64>::new(1, 2).is_err());
    }

    #[test]
    fn ordering_is_lexicographic_and_index_is_bijective() {
        for (dim, n) in [(2, 3), (3, 2)] {
            let m = ModeSet::<f64>::new(dim, n).unwrap();
            let modes: Vec<Vec<i32>> = m.modes().map(|k| k.to_vec()).collect();
            assert!(modes.windows(2).all(|w| w[0] < w[1]));
            for (i, k) in modes.iter().enumerate() {
                assert_eq!(m.index_of(k), Some(i));
                for s in 0..m.slots() {
                    assert_eq!(m.slot_of(m.column(i, s)), (i, s));
                }
            }
            assert_eq!(m.index_of(&vec![0; dim]), None);
            assert_eq!(m.index_of(&vec![n as i32 + 1; dim]), None);
        }
    }

    #[test]
    fn fibers_are_orthonormal_and_orthogonal_to_k() {
        let m2 = ModeSet::<f64>::new(2, 4).unwrap();
        for i in 0..m2.len() {
            let k = m2.mode(i);
            let e = m2.fiber(i, 0);
            assert!((k[0] as f64 * e[0] + k[1] as f64 * e[1]).abs() < 1e-14);
            assert!((e[0] * e[0] + e[1] * e[1] - 1.0).abs() < 1e-15);
            let first = e.iter().find(|c| **c != 0.0).unwrap();
            assert!(*first > 0.0);
        }
        let m3 = ModeSet::<f64>::new(3, 3).unwrap();
        for i in 0..m3.len() {
            let k = m3.mode(i);
            for a in 0..2 {
                let e = m3.fiber(i, a);
                let kd: f64 = k.iter().zip(e).map(|(&kc, &ec)| kc as f64 * ec).sum();
                assert!(kd.abs() < 1e-14);
                let nn: f64 = e.iter().map(|c| c * c).sum();
                assert!((nn - 1.0).abs() < 1e-14);
            }
            let d: f64 = m3.fiber(i, 0).iter().zip(m3.fiber(i, 1)).map(|(a, b)| a * b).sum();
            assert!(d.abs() < 1e-14);
        }
    }

    #[test]
    fn projector_examples() {
        let p = leray_fiber_projector::<f64>(&[1, 0]).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        let p = leray_fiber_projector::<f64>(&[1, 1]).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        let p = leray_fiber_projector::<f64>(&[0, 0, 1]).unwrap();
        assert_eq!(p, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.0])));
        assert_eq!(leray_fiber_projector::<f64>(&[0, 0]).unwrap_err(), Error::ZeroWaveVector);
    }

    #[test]
    fn projector_properties_and_fibers_in_range() {
        for (dim, n) in [(2usize, 3usize), (3, 2)] {
            let m = ModeSet::<f64>::new(dim, n).unwrap();
            for i in 0..m.len() {
                let k = m.mode(i);
                let p = leray_fiber_projector::<f64>(k).unwrap();
                assert!((&p * &p - &p).amax() < 1e-15);
                assert_eq!(p, p.transpose());
                let kv = nalgebra::DVector::from_iterator(dim, k.iter().map(|&c| c as f64));
                assert!((&p * kv).amax() < 1e-15);
                for a in 0..m.slots() {
                    let e = nalgebra::DVector::from_column_slice(m.fiber(i, a));
                    assert!((&p * &e - &e).amax() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn projection_of_divergence_free_and_gradient_fields() {
        let ms = ModeSet::<f64>::shared(2, 3).unwrap();
        let f = random_full(&ms, 1).to_fiber();
        let full = f.to_full();
        let p = full.project_div_free();
        assert!(p.distance(&full).unwrap() < 1e-14);

        // v(k) parallel to k
        let mut grad = SpectralField::zeros(ms.clone(), Layout::Full);
        for i in 0..ms.len() {
            let k = ms.mode(i).to_vec();
            let a = cx(0.3 * i as f64, -1.0);
            for d in 0..2 {
                grad.coeffs_mut()[i * 2 + d] = a * k[d] as f64;
            }
        }
        assert!(grad.project_div_free().norm() < 1e-13);
    }

    #[test]
    fn projection_is_idempotent_and_contractive() {
        for (dim, n, seed) in [(2, 4, 2u64), (3, 2, 3)] {
            let ms = ModeSet::<f64>::shared(dim, n).unwrap();
            let f = random_full(&ms, seed);
            let p = f.project_div_free();
            let pp = p.project_div_free();
            assert!(pp.distance(&p).unwrap() < 1e-14);
            assert!(p.norm() <= f.norm());
            assert!(p.divergence_defect() < 1e-14);
        }
    }

    #[test]
    fn truncation_examples() {
        let ms = ModeSet::<f64>::shared(2, 3).unwrap();
        let f = random_full(&ms, 5);
        let big = f.truncate(3.0 * 2f64.sqrt() + 0.1);
        assert_eq!(big.coeffs(), f.coeffs());
        assert_eq!(f.truncate(1.0).norm(), 0.0);
        let t = f.truncate(2.5);
        let tail: f64 = (0..ms.len())
            .filter(|&i| ms.norm_sq(i) as f64 >= 6.25)
            .map(|i| f.mode_coeffs(i).iter().map(|c| c.norm_sqr()).sum::<f64>())
            .sum();
        let d = f.distance(&t).unwrap();
        assert!((d * d - tail).abs() < 1e-12);
    }

    #[test]
    fn truncation_composes_and_commutes_with_projection() {
        let ms = ModeSet::<f64>::shared(2, 4).unwrap();
        let f = random_full(&ms, 9);
        for (a, b) in [(2.0, 3.5), (3.5, 2.0), (1.5, 1.5)] {
            let lhs = f.truncate(a).truncate(b);
            let rhs = f.truncate(f64::min(a, b));
            assert_eq!(lhs.coeffs(), rhs.coeffs());
        }
        let x = f.truncate(2.7).project_div_free();
        let y = f.project_div_free().truncate(2.7);
        assert!(x.distance(&y).unwrap() < 1e-15);
    }

    #[test]
    fn manifest_serializes() {
        let m = ModeSet::<f64>::new(2, 1).unwrap();
        let s = serde_json::to_string(&m.manifest()).unwrap();
        let back: ModeSetManifest = serde_json::from_str(&s).unwrap();
        assert_eq!(back.modes.len(), 8);
        assert_eq!(back.modes[0], vec![-1, -1]);
    }

    #[test]
    fn single_precision_lattice() {
        let m = ModeSet::<f32>::new(3, 1).unwrap();
        assert_eq!(m.dimension(), 52);
        let e = m.fiber(5, 1);
        let n: f32 = e.iter().map(|c| c * c).sum();
        assert!((n - 1.0).abs() < 1e-6);
    }
}
