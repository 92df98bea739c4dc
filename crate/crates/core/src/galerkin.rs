//! Galerkin matrices of the linearized Euler / Navier-Stokes operator
//! `L^eps v = -(u.grad)v - (v.grad)u - grad p + eps Lap v` in fiber coordinates.
//!
//! Pressure never appears: each row is the projection onto the real fiber
//! basis of its mode, which is the Leray projection. Couplings that leave the
//! [`ModeSet`] are dropped.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::SteadyFlow;
use crate::lattice::{Layout, ModeSet, ModeSetManifest, SpectralField};
use crate::linalg::{BlockMatrix, BlockPartition, CMat};
use crate::scalar::{czero, Cx, Real};

/// Unknowns of the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    /// Fiber coordinates of the velocity.
    Velocity,
    /// Scalar vorticity per mode (2D only).
    Vorticity,
}

/// Which terms of the operator to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub advection: bool,
    pub stretching: bool,
    pub dissipation: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { advection: true, stretching: true, dissipation: true };
}

/// Discretized generator on a [`ModeSet`].
#[derive(Debug, Clone)]
pub struct GalerkinOperator<T: Real> {
    modeset: Arc<ModeSet<T>>,
    eps: T,
    flow_name: String,
    form: Form,
    matrix: BlockMatrix<T>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = i;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the coupling graph `k ~ k + m`, `m` in the flow
/// support, expanded to `per_mode` consecutive columns per mode.
pub fn coupling_partition<T: Real>(flow: &SteadyFlow<T>, modeset: &ModeSet<T>, per_mode: usize) -> BlockPartition {
    let n = modeset.len();
    let mut uf = UnionFind((0..n).collect());
    let mut shifted = vec![0i32; modeset.dim()];
    for i in 0..n {
        let k = modeset.mode(i);
        for c in flow.fourier_coeffs() {
            for d in 0..k.len() {
                shifted[d] = k[d] + c.k[d];
            }
            if let Some(j) = modeset.index_of(&shifted) {
                uf.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = uf.find(i);
        let g = groups.entry(r).or_default();
        for s in 0..per_mode {
            g.push(i * per_mode + s);
        }
    }
    BlockPartition::new(n * per_mode, groups.into_values().collect()).expect("components partition the lattice")
}

fn check<T: Real>(flow: &SteadyFlow<T>, modeset: &ModeSet<T>, eps: T) -> Result<()> {
    if flow.dim() != modeset.dim() {
        return Err(Error::DimensionMismatch { expected: modeset.dim(), got: flow.dim() });
    }
    if !(eps >= T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidArgument("viscosity must be finite and non-negative".into()));
    }
    Ok(())
}

/// Velocity-form operator with every term.
pub fn assemble<T: Real>(flow: &SteadyFlow<T>, modeset: &Arc<ModeSet<T>>, eps: T) -> Result<GalerkinOperator<T>> {
    assemble_terms(flow, modeset, eps, Terms::ALL)
}

/// Velocity-form operator restricted to a subset of the terms.
///
/// Entry `(k, a) <- (p, b)` with `m = k - p` in the flow support is
/// `e_{k,a} . [ -i (u_m . p) e_{p,b} - i (m . e_{p,b}) u_m ]`, plus `-eps |k|^2`
/// on the diagonal.
pub fn assemble_terms<T: Real>(
    flow: &SteadyFlow<T>,
    modeset: &Arc<ModeSet<T>>,
    eps: T,
    terms: Terms,
) -> Result<GalerkinOperator<T>> {
    check(flow, modeset, eps)?;
    let ms = modeset.as_ref();
    let (n, s) = (ms.dim(), ms.slots());
    let partition = Arc::new(coupling_partition(flow, ms, s));
    let coeffs = flow.fourier_coeffs();
    let blocks: Vec<CMat<T>> = partition
        .groups()
        .par_iter()
        .map(|cols| {
            let size = cols.len();
            let mut m = CMat::<T>::zeros(size, size);
            let mut p = vec![0i32; n];
            for (r, &col) in cols.iter().enumerate().step_by(s) {
                let (ki, _) = ms.slot_of(col);
                let k = ms.mode(ki);
                for c in coeffs {
                    for d in 0..n {
                        p[d] = k[d] - c.k[d];
                    }
                    let Some(pi) = ms.index_of(&p) else { continue };
                    let (_, local) = partition.owner(ms.column(pi, 0));
                    let up = p.iter().zip(&c.u).fold(czero::<T>(), |acc, (&pd, &ud)| acc + ud * T::int(pd as i64));
                    for a in 0..s {
                        let eka = ms.fiber(ki, a);
                        let eu = eka.iter().zip(&c.u).fold(czero::<T>(), |acc, (&e, &ud)| acc + ud * e);
                        for b in 0..s {
                            let epb = ms.fiber(pi, b);
                            let mut v = czero::<T>();
                            if terms.advection {
                                let dot = eka.iter().zip(epb).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                                v += up * dot;
                            }
                            if terms.stretching {
                                let me = c.k.iter().zip(epb).fold(T::zero(), |acc, (&md, &e)| acc + T::int(md as i64) * e);
                                v += eu * me;
                            }
                            // multiply by -i
                            m[(r + a, local + b)] += Cx::new(v.im, -v.re);
                        }
                    }
                }
                if terms.dissipation && eps != T::zero() {
                    let d = -eps * T::int(ms.norm_sq(ki));
                    for a in 0..s {
                        m[(r + a, r + a)] += Cx::new(d, T::zero());
                    }
                }
            }
            m
        })
        .collect();
    let matrix = BlockMatrix::new(partition, blocks)?;
    Ok(GalerkinOperator { modeset: modeset.clone(), eps, flow_name: flow.name().to_string(), form: Form::Velocity, matrix })
}

/// 2D vorticity-form operator `w -> -u.grad w - v.grad Omega + eps Lap w`
/// with `v` recovered from `w` through the stream function.
///
/// Entry `k <- p`, `m = k - p`: `-i (u_m . p) + (m1 p2 - m2 p1) / |p|^2 * Omega_m`,
/// `Omega_m = i (m1 u_m2 - m2 u_m1)`.
pub fn assemble_vorticity_2d<T: Real>(
    flow: &SteadyFlow<T>,
    modeset: &Arc<ModeSet<T>>,
    eps: T,
) -> Result<GalerkinOperator<T>> {
    if modeset.dim() != 2 {
        return Err(Error::UnsupportedDimension(modeset.dim()));
    }
    check(flow, modeset, eps)?;
    let ms = modeset.as_ref();
    let partition = Arc::new(coupling_partition(flow, ms, 1));
    let coeffs = flow.fourier_coeffs();
    let blocks: Vec<CMat<T>> = partition
        .groups()
        .par_iter()
        .map(|cols| {
            let size = cols.len();
            let mut mat = CMat::<T>::zeros(size, size);
            for (r, &ki) in cols.iter().enumerate() {
                let k = ms.mode(ki);
                for c in coeffs {
                    let (m1, m2) = (c.k[0], c.k[1]);
                    let p = [k[0] - m1, k[1] - m2];
                    let Some(pi) = ms.index_of(&p) else { continue };
                    let (_, local) = partition.owner(pi);
                    let up = c.u[0] * T::int(p[0] as i64) + c.u[1] * T::int(p[1] as i64);
                    let curl = c.u[1] * T::int(m1 as i64) - c.u[0] * T::int(m2 as i64);
                    let omega = Cx::new(-curl.im, curl.re);
                    let cross = T::int(m1 as i64 * p[1] as i64 - m2 as i64 * p[0] as i64);
                    let p2 = T::int(p[0] as i64 * p[0] as i64 + p[1] as i64 * p[1] as i64);
                    mat[(r, local)] += Cx::new(up.im, -up.re) + omega * (cross / p2);
                }
                if eps != T::zero() {
                    mat[(r, r)] += Cx::new(-eps * T::int(ms.norm_sq(ki)), T::zero());
                }
            }
            mat
        })
        .collect();
    let matrix = BlockMatrix::new(partition, blocks)?;
    Ok(GalerkinOperator { modeset: modeset.clone(), eps, flow_name: flow.name().to_string(), form: Form::Vorticity, matrix })
}

impl<T: Real> GalerkinOperator<T> {
    /// Wraps an explicit block matrix (e.g. a modified operator in tests).
    pub fn from_parts(
        modeset: Arc<ModeSet<T>>,
        eps: T,
        flow_name: impl Into<String>,
        form: Form,
        matrix: BlockMatrix<T>,
    ) -> Result<Self> {
        let expected = match form {
            Form::Velocity => modeset.dimension(),
            Form::Vorticity => modeset.len(),
        };
        if matrix.dim() != expected {
            return Err(Error::DimensionMismatch { expected, got: matrix.dim() });
        }
        Ok(Self { modeset, eps, flow_name: flow_name.into(), form, matrix })
    }

    pub fn modeset(&self) -> &Arc<ModeSet<T>> {
        &self.modeset
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn flow_name(&self) -> &str {
        &self.flow_name
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn dimension(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &BlockMatrix<T> {
        &self.matrix
    }

    /// Dense copy of the matrix in column order of the [`ModeSet`].
    pub fn dense(&self) -> CMat<T> {
        self.matrix.to_dense()
    }

    /// Exact matrix-vector product. Full-layout input is projected first;
    /// the result is in fiber coordinates.
    pub fn apply(&self, f: &SpectralField<T>) -> Result<SpectralField<T>> {
        if self.form != Form::Velocity {
            return Err(Error::InvalidArgument("spectral fields carry velocity coordinates".into()));
        }
        if !f.compatible(&self.modeset) {
            return Err(Error::ModeSetMismatch);
        }
        let x = match f.layout() {
            Layout::Fiber => f.clone(),
            Layout::Full => f.to_fiber(),
        };
        let y = self.matrix.apply(x.coeffs())?;
        SpectralField::from_fiber(self.modeset.clone(), y)
    }

    /// Manifest stored alongside binary exports.
    pub fn manifest(&self) -> OperatorManifest {
        OperatorManifest {
            flow: self.flow_name.clone(),
            eps: self.eps.as_f64(),
            form: self.form,
            modeset: self.modeset.manifest(),
        }
    }
}

/// Free-function form of [`GalerkinOperator::apply`].
pub fn apply_operator<T: Real>(op: &GalerkinOperator<T>, f: &SpectralField<T>) -> Result<SpectralField<T>> {
    op.apply(f)
}

/// Provenance written after the matrix in the binary container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorManifest {
    pub flow: String,
    pub eps: f64,
    pub form: Form,
    pub modeset: ModeSetManifest,
}

const MAGIC: &[u8; 8] = b"VCLMAT01";

/// Writes `MAGIC, rows: u64, cols: u64, row-major (re, im) f64 pairs,
/// manifest length: u64, manifest JSON`, all little-endian.
pub fn write_binary<T: Real, W: Write>(op: &GalerkinOperator<T>, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let n = op.dimension();
    let dense = op.dense();
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(16 * n);
    for i in 0..n {
        buf.clear();
        for j in 0..n {
            let z = dense[(i, j)];
            buf.extend_from_slice(&z.re.as_f64().to_le_bytes());
            buf.extend_from_slice(&z.im.as_f64().to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    let manifest = serde_json::to_vec(&op.manifest()).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(&(manifest.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&manifest).map_err(io)?;
    Ok(())
}

/// Reads a container written by [`write_binary`].
pub fn read_binary<R: Read>(mut r: R) -> Result<(CMat<f64>, OperatorManifest)> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Io("not an operator container".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word).map_err(io)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(io)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut m = CMat::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut word).map_err(io)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word).map_err(io)?;
            m[(i, j)] = Cx::new(re, f64::from_le_bytes(word));
        }
    }
    r.read_exact(&mut word).map_err(io)?;
    let mut text = vec![0u8; u64::from_le_bytes(word) as usize];
    r.read_exact(&mut text).map_err(io)?;
    let manifest = serde_json::from_slice(&text).map_err(|e| Error::Io(e.to_string()))?;
    Ok((m, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, max_abs};
    use crate::scalar::cx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ms(dim: usize, n: usize) -> Arc<ModeSet<f64>> {
        ModeSet::shared(dim, n).unwrap()
    }

    fn random_field(m: &Arc<ModeSet<f64>>, seed: u64) -> SpectralField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..m.dimension()).map(|_| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        SpectralField::from_fiber(m.clone(), v).unwrap()
    }

    #[test]
    fn zero_flow_is_diagonal() {
        let m = ms(2, 3);
        let z = SteadyFlow::zero(2).unwrap();
        assert_eq!(assemble(&z, &m, 0.0).unwrap().matrix().max_abs(), 0.0);
        let op = assemble(&z, &m, 0.1).unwrap();
        let i = m.index_of(&[1, 2]).unwrap();
        assert!((op.matrix().get(i, i) - cx(-0.5, 0.0)).norm() < 1e-15);
        // every mode is its own block
        assert_eq!(op.matrix().partition().len(), m.len());
    }

    #[test]
    fn shear_couples_only_vertical_neighbours() {
        let m = ms(2, 6);
        let op = assemble(&SteadyFlow::shear(2, 1, 1.0).unwrap(), &m, 0.0).unwrap();
        let d = op.dense();
        for i in 0..m.len() {
            for j in 0..m.len() {
                if d[(i, j)] != czero() {
                    let (a, b) = (m.mode(i), m.mode(j));
                    assert_eq!(a[0], b[0]);
                    assert_eq!((a[1] - b[1]).abs(), 1);
                }
            }
        }
        // one chain per k1 != 0; the k1 = 0 column splits at the removed origin
        assert_eq!(op.matrix().partition().len(), 14);
        let k1_zero = m.index_of(&[0, 3]).unwrap();
        assert_eq!(d.row(k1_zero).iter().filter(|z| **z != czero()).count(), 0);
    }

    #[test]
    fn dissipation_is_exactly_diagonal() {
        for (dim, flow) in [
            (2, SteadyFlow::shear(2, 2, 1.0).unwrap()),
            (2, SteadyFlow::cellular(2, 1.0).unwrap()),
            (3, SteadyFlow::cellular(3, 1.0).unwrap()),
        ] {
            let m = ms(dim, 3);
            let a = assemble(&flow, &m, 0.0).unwrap().dense();
            let b = assemble(&flow, &m, 0.3).unwrap().dense();
            let diff = b - a;
            for i in 0..diff.nrows() {
                for j in 0..diff.ncols() {
                    let want = if i == j { -0.3 * m.norm_sq(m.slot_of(i).0) as f64 } else { 0.0 };
                    assert_eq!(diff[(i, j)], cx(want, 0.0));
                }
            }
        }
    }

    #[test]
    fn advection_is_skew_adjoint() {
        for (dim, flow) in [
            (2, SteadyFlow::shear(2, 1, 1.3).unwrap()),
            (2, SteadyFlow::cellular(2, 1.0).unwrap()),
            (3, SteadyFlow::shear(3, 2, 0.5).unwrap()),
            (3, SteadyFlow::cellular(3, 1.0).unwrap()),
        ] {
            let m = ms(dim, 4);
            let terms = Terms { advection: true, stretching: false, dissipation: false };
            let a = assemble_terms(&flow, &m, 0.0, terms).unwrap().dense();
            let s = &a + a.adjoint();
            assert!(max_abs(&s) <= 1e-12 * max_abs(&a));
        }
    }

    #[test]
    fn spectrum_is_conjugation_symmetric() {
        let m = ms(2, 5);
        let op = assemble(&SteadyFlow::cellular(2, 1.0).unwrap(), &m, 0.01).unwrap();
        let ev = eigenvalues(&op.dense()).unwrap();
        for l in &ev {
            let best = ev.iter().map(|z| (*z - l.conj()).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10);
        }
    }

    #[test]
    fn vorticity_form_of_zero_flow() {
        let m = ms(2, 2);
        let op = assemble_vorticity_2d(&SteadyFlow::zero(2).unwrap(), &m, 0.2).unwrap();
        for i in 0..m.len() {
            assert_eq!(op.matrix().get(i, i), cx(-0.2 * m.norm_sq(i) as f64, 0.0));
        }
        assert!(assemble_vorticity_2d(&SteadyFlow::zero(3).unwrap(), &ms(3, 1), 0.0).is_err());
    }

    #[test]
    fn vorticity_form_is_similar_to_velocity_form() {
        // w(k) = i s_k |k| c(k), with s_k the orientation of the fiber vector
        let m = ms(2, 5);
        let flow = SteadyFlow::cellular(2, 0.8).unwrap();
        let v = assemble(&flow, &m, 0.05).unwrap().dense();
        let w = assemble_vorticity_2d(&flow, &m, 0.05).unwrap().dense();
        let d: Vec<Cx<f64>> = (0..m.len())
            .map(|i| {
                let k = m.mode(i);
                let e = m.fiber(i, 0);
                let sign = (e[1] * k[0] as f64 - e[0] * k[1] as f64).signum();
                cx(0.0, sign * (m.norm_sq(i) as f64).sqrt())
            })
            .collect();
        for i in 0..m.len() {
            for j in 0..m.len() {
                let want = d[i] * v[(i, j)] / d[j];
                assert!((w[(i, j)] - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn apply_is_linear_and_matches_dense() {
        let m = ms(2, 4);
        let op = assemble(&SteadyFlow::shear(2, 2, 1.0).unwrap(), &m, 0.01).unwrap();
        let f = random_field(&m, 1);
        let g = random_field(&m, 2);
        let (al, be) = (cx(0.3, -1.2), cx(2.0, 0.5));
        let mut comb = f.clone();
        comb.scale(al);
        comb.axpy(be, &g).unwrap();
        let lhs = op.apply(&comb).unwrap();
        let mut rhs = op.apply(&f).unwrap();
        rhs.scale(al);
        rhs.axpy(be, &op.apply(&g).unwrap()).unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-13 * lhs.norm());
        let dense = &op.dense() * nalgebra::DVector::from_vec(f.coeffs().to_vec());
        let y = op.apply(&f).unwrap();
        for (a, b) in y.coeffs().iter().zip(dense.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
        // range is divergence-free: a full-layout round trip changes nothing
        let full = y.to_full().project_div_free().to_fiber();
        assert!(full.distance(&y).unwrap() <= 1e-13 * y.norm());
        let other = ModeSet::shared(2, 3).unwrap();
        assert!(matches!(op.apply(&random_field(&other, 3)), Err(Error::ModeSetMismatch)));
    }

    #[test]
    fn binary_round_trip() {
        let m = ms(2, 2);
        let op = assemble(&SteadyFlow::shear(2, 1, 1.0).unwrap(), &m, 0.1).unwrap();
        let mut buf = Vec::new();
        write_binary(&op, &mut buf).unwrap();
        let (mat, man) = read_binary(buf.as_slice()).unwrap();
        assert_eq!(mat, op.dense());
        assert_eq!(man, op.manifest());
        assert!(read_binary(&b"garbage"[..]).is_err());
    }
}
