//! Spectra of Galerkin operators: eigenpairs, resolvents, Riesz projections,
//! continuation of isolated eigenvalues in the viscosity, and the
//! finite-rank determinant reduction of a propagator.
//!
//! All routines work block by block on the operator's coupling components.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::SteadyFlow;
use crate::galerkin::{assemble, GalerkinOperator};
use crate::lattice::{Layout, ModeSet, SpectralField};
use crate::provenance::{csv_err, Provenance};
use crate::linalg::{self, eig, eigenvalues, BlockMatrix, BlockPartition, CMat};
use crate::scalar::{cabs, cis, cone, czero, Cx, Real};

/// Largest operator dimension accepted by default.
pub const DEFAULT_DIMENSION_CAP: usize = 6000;
/// Default number of contour nodes.
pub const DEFAULT_NODES: usize = 64;
/// Relative width of the forbidden band around a contour.
pub const GUARD_BAND: f64 = 0.05;
/// Tolerance on `||P^2 - P|| / max(1, ||P||)`.
pub const IDEMPOTENCY_TOL: f64 = 1e-6;
/// Tolerance on the distance of a trace to the nearest integer.
pub const TRACE_TOL: f64 = 0.05;

/// Default margin above the Lyapunov exponent, `0.1 max(1, |mu|)`.
pub fn default_delta<T: Real>(mu: T) -> T {
    T::lit(0.1) * T::one().max(mu.abs())
}

fn order<T: Real>(a: &Cx<T>, b: &Cx<T>) -> std::cmp::Ordering {
    b.re.partial_cmp(&a.re)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
}

/// Eigenvalues, unit right eigenvectors and residuals of an operator.
#[derive(Debug, Clone)]
pub struct SpectrumResult<T: Real> {
    pub eigenvalues: Vec<Cx<T>>,
    /// `||L v - lambda v|| / ||v||` per pair.
    pub residuals: Vec<T>,
    pub eps: T,
    pub flow: String,
    pub cutoff: usize,
    partition: Arc<BlockPartition>,
    /// `(block, local eigenvector)` per pair.
    vectors: Vec<(usize, Vec<Cx<T>>)>,
}

impl<T: Real> SpectrumResult<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_residual(&self) -> T {
        self.residuals.iter().fold(T::zero(), |a, &b| a.max(b))
    }

    /// Coupling block holding eigenpair `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.vectors[i].0
    }

    /// Eigenvector `i` in global coordinates.
    pub fn eigenvector(&self, i: usize) -> Vec<Cx<T>> {
        let (b, ref v) = self.vectors[i];
        let mut out = vec![czero(); self.partition.dim()];
        for (&g, &c) in self.partition.group(b).iter().zip(v) {
            out[g] = c;
        }
        out
    }

    /// All right eigenvectors as columns, in eigenvalue order.
    pub fn right_eigenvectors(&self) -> CMat<T> {
        let n = self.partition.dim();
        let mut m = CMat::zeros(n, self.len());
        for i in 0..self.len() {
            let (b, ref v) = self.vectors[i];
            for (&g, &c) in self.partition.group(b).iter().zip(v) {
                m[(g, i)] = c;
            }
        }
        m
    }

    /// Eigenvalues strictly inside the circle.
    pub fn inside(&self, center: Cx<T>, radius: T) -> Vec<Cx<T>> {
        self.eigenvalues.iter().copied().filter(|&l| cabs(l - center) < radius).collect()
    }
}

fn check_cap<T: Real>(op: &GalerkinOperator<T>, cap: usize) -> Result<()> {
    if op.dimension() > cap {
        return Err(Error::TooLarge { dim: op.dimension(), cap });
    }
    Ok(())
}

/// Full eigendecomposition with the default dimension cap.
pub fn eigen_decompose<T: Real>(op: &GalerkinOperator<T>) -> Result<SpectrumResult<T>> {
    eigen_decompose_with_cap(op, DEFAULT_DIMENSION_CAP)
}

pub fn eigen_decompose_with_cap<T: Real>(op: &GalerkinOperator<T>, cap: usize) -> Result<SpectrumResult<T>> {
    check_cap(op, cap)?;
    let m = op.matrix();
    let per_block = m
        .blocks()
        .par_iter()
        .map(|b| {
            let e = eig(b)?;
            let mut out = Vec::with_capacity(b.nrows());
            for (k, &lam) in e.values.iter().enumerate() {
                let v: Vec<Cx<T>> = e.vectors.column(k).iter().copied().collect();
                let lv = b * nalgebra::DVector::from_column_slice(&v);
                let res = lv.iter().zip(&v).fold(T::zero(), |acc, (&a, &x)| acc + (a - lam * x).norm_sqr()).sqrt();
                let vn = linalg::vec_norm(&v);
                out.push((lam, res / vn.max(T::tiny()), v));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut all: Vec<(Cx<T>, T, usize, Vec<Cx<T>>)> = Vec::with_capacity(op.dimension());
    for (b, list) in per_block.into_iter().enumerate() {
        for (lam, res, v) in list {
            all.push((lam, res, b, v));
        }
    }
    // stable: blocks were pushed in order
    all.sort_by(|a, b| order(&a.0, &b.0));
    let mut eigenvalues = Vec::with_capacity(all.len());
    let mut residuals = Vec::with_capacity(all.len());
    let mut vectors = Vec::with_capacity(all.len());
    for (lam, res, b, v) in all {
        eigenvalues.push(lam);
        residuals.push(res);
        vectors.push((b, v));
    }
    Ok(SpectrumResult {
        eigenvalues,
        residuals,
        eps: op.eps(),
        flow: op.flow_name().to_string(),
        cutoff: op.modeset().cutoff(),
        partition: m.partition().clone(),
        vectors,
    })
}

/// Eigenvalues per coupling block, each list sorted.
pub fn block_eigenvalues<T: Real>(m: &BlockMatrix<T>) -> Result<Vec<Vec<Cx<T>>>> {
    m.blocks().par_iter().map(eigenvalues).collect()
}

/// Sorted eigenvalues of an operator without eigenvectors.
pub fn spectrum_values<T: Real>(op: &GalerkinOperator<T>) -> Result<Vec<Cx<T>>> {
    let mut v: Vec<Cx<T>> = block_eigenvalues(op.matrix())?.into_iter().flatten().collect();
    v.sort_by(order);
    Ok(v)
}

/// `{ lambda : Re lambda > mu + delta }`, order preserved.
pub fn unstable_set<T: Real>(spec: &SpectrumResult<T>, mu: T, delta: T) -> Vec<Cx<T>> {
    spec.eigenvalues.iter().copied().filter(|l| l.re > mu + delta).collect()
}

/// Solves `(L - zeta) w = rhs` block by block.
pub fn resolvent_solve<T: Real>(op: &GalerkinOperator<T>, zeta: Cx<T>, rhs: &SpectralField<T>) -> Result<SpectralField<T>> {
    if !rhs.compatible(op.modeset()) {
        return Err(Error::ModeSetMismatch);
    }
    let b = match rhs.layout() {
        Layout::Fiber => rhs.clone(),
        Layout::Full => rhs.to_fiber(),
    };
    let w = resolvent_solve_vec(op.matrix(), zeta, b.coeffs())?;
    SpectralField::from_fiber(op.modeset().clone(), w)
}

/// Vector form of [`resolvent_solve`] on any block matrix.
pub fn resolvent_solve_vec<T: Real>(m: &BlockMatrix<T>, zeta: Cx<T>, rhs: &[Cx<T>]) -> Result<Vec<Cx<T>>> {
    if rhs.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: rhs.len() });
    }
    let part = m.partition();
    let mut out = vec![czero(); rhs.len()];
    let sing_tol = T::lit(1e-10);
    for (b, block) in m.blocks().iter().enumerate() {
        let g = part.group(b);
        let n = g.len();
        let shifted = block - CMat::<T>::identity(n, n) * zeta;
        let scale = T::one().max(linalg::max_abs(block));
        let lu = shifted.clone().lu();
        let u = lu.u();
        let pivot = (0..n).map(|i| cabs(u[(i, i)])).fold(T::lit(f64::INFINITY), |a, b| a.min(b));
        if !(pivot > sing_tol * scale) {
            return Err(Error::NearSingularShift { distance: pivot.as_f64() });
        }
        let rb = nalgebra::DVector::from_iterator(n, g.iter().map(|&i| rhs[i]));
        let x = lu.solve(&rb).ok_or(Error::NearSingularShift { distance: 0.0 })?;
        let r = &shifted * &x - &rb;
        let rn = r.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        let bn = rb.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        if rn > sing_tol * bn.max(T::tiny()) {
            // one step of refinement before giving up
            let dx = lu.solve(&r).ok_or(Error::NearSingularShift { distance: 0.0 })?;
            let x2 = &x - dx;
            let r2 = &shifted * &x2 - &rb;
            let rn2 = r2.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
            if rn2 > sing_tol * bn {
                return Err(Error::NearSingularShift { distance: pivot.as_f64() });
            }
            for (&gi, &v) in g.iter().zip(x2.iter()) {
                out[gi] = v;
            }
            continue;
        }
        for (&gi, &v) in g.iter().zip(x.iter()) {
            out[gi] = v;
        }
    }
    Ok(out)
}

/// Riesz projection by trapezoidal contour quadrature.
#[derive(Debug, Clone)]
pub struct RieszProjection<T: Real> {
    pub matrix: BlockMatrix<T>,
    pub center: Cx<T>,
    pub radius: T,
    pub nodes: usize,
    /// `||P^2 - P||_2`.
    pub idempotency_defect: T,
    pub trace: Cx<T>,
    /// Eigenvalues found inside the contour by the pre-check.
    pub enclosed: Vec<Cx<T>>,
}

impl<T: Real> RieszProjection<T> {
    pub fn norm(&self) -> T {
        self.matrix.norm2()
    }

    pub fn to_dense(&self) -> CMat<T> {
        self.matrix.to_dense()
    }
}

/// `P = (1/2 pi i) oint (zeta - L)^{-1} d zeta` over the circle `|zeta - center| = radius`.
pub fn riesz_projection<T: Real>(op: &GalerkinOperator<T>, center: Cx<T>, radius: T, nodes: usize) -> Result<RieszProjection<T>> {
    let eigs = block_eigenvalues(op.matrix())?;
    riesz_projection_blocks(op.matrix(), &eigs, center, radius, nodes)
}

/// [`riesz_projection`] on a block matrix whose per-block eigenvalues are known.
pub fn riesz_projection_blocks<T: Real>(
    m: &BlockMatrix<T>,
    eigs: &[Vec<Cx<T>>],
    center: Cx<T>,
    radius: T,
    nodes: usize,
) -> Result<RieszProjection<T>> {
    if nodes < 16 {
        return Err(Error::InvalidArgument(format!("contour needs at least 16 nodes, got {nodes}")));
    }
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::InvalidArgument("contour radius must be positive".into()));
    }
    let guard = T::lit(GUARD_BAND) * radius;
    let mut enclosed = Vec::new();
    for list in eigs {
        for &l in list {
            let d = cabs(l - center);
            if (d - radius).abs() < guard {
                return Err(Error::EigenvalueOnContour { eigenvalue: format!("{l}"), distance: (d - radius).abs().as_f64() });
            }
            if d < radius {
                enclosed.push(l);
            }
        }
    }
    enclosed.sort_by(order);
    let mf = T::lit(nodes as f64);
    let blocks = m
        .blocks()
        .par_iter()
        .zip(eigs.par_iter())
        .map(|(b, list)| {
            let n = b.nrows();
            // blocks whose spectrum is far outside contribute below 1e-20
            let far = list.iter().all(|&l| {
                let d = cabs(l - center);
                d > radius && (radius / d).powf(mf) < T::lit(1e-20)
            });
            if far {
                return Ok(CMat::zeros(n, n));
            }
            let mut p = CMat::<T>::zeros(n, n);
            for j in 0..nodes {
                let w = cis(T::two_pi() * T::lit(j as f64) / mf) * radius;
                let zeta = center + w;
                let shifted = CMat::<T>::identity(n, n) * zeta - b;
                let inv = shifted.try_inverse().ok_or(Error::NearSingularShift { distance: 0.0 })?;
                p += inv * (w / mf);
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = BlockMatrix::new(m.partition().clone(), blocks)?;
    let sq = matrix.mul(&matrix)?;
    let defect = sq.sub(&matrix)?.norm2();
    let trace = matrix.trace();
    let pn = matrix.norm2();
    if !(defect <= T::lit(IDEMPOTENCY_TOL) * T::one().max(pn)) {
        return Err(Error::IdempotencyDefect { defect: defect.as_f64(), tol: IDEMPOTENCY_TOL });
    }
    Ok(RieszProjection { matrix, center, radius, nodes, idempotency_defect: defect, trace, enclosed })
}

/// Algebraic multiplicity read off the trace.
pub fn multiplicity<T: Real>(proj: &RieszProjection<T>) -> Result<usize> {
    trace_to_integer(proj.trace)
}

fn trace_to_integer<T: Real>(t: Cx<T>) -> Result<usize> {
    let k = t.re.round();
    if cabs(t - Cx::new(k, T::zero())) > T::lit(TRACE_TOL) || k < T::zero() {
        return Err(Error::AmbiguousTrace { trace: format!("{t}") });
    }
    Ok(k.as_f64() as usize)
}

/// `||P - Q||_2`.
pub fn projection_distance<T: Real>(p: &RieszProjection<T>, q: &RieszProjection<T>) -> Result<T> {
    Ok(p.matrix.sub(&q.matrix)?.norm2())
}

/// Greedy injective matching: candidate pairs are taken by increasing
/// distance, ties broken by the smaller `|Im|` of the candidate.
/// Returns, for each reference value, the index of its partner.
pub fn match_eigenvalues<T: Real>(reference: &[Cx<T>], candidates: &[Cx<T>]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(T, T, usize, usize)> = Vec::with_capacity(reference.len() * candidates.len());
    for (i, &a) in reference.iter().enumerate() {
        for (j, &b) in candidates.iter().enumerate() {
            pairs.push((cabs(a - b), b.im.abs(), i, j));
        }
    }
    pairs.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
            .then(x.2.cmp(&y.2))
            .then(x.3.cmp(&y.3))
    });
    let mut out = vec![None; reference.len()];
    let mut used = vec![false; candidates.len()];
    for (_, _, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

/// Largest distance over a greedy matching of two spectra (`inf` if the
/// sizes differ).
pub fn matched_distance<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> T {
    if a.len() != b.len() {
        return T::lit(f64::INFINITY);
    }
    match_eigenvalues(a, b)
        .iter()
        .enumerate()
        .map(|(i, j)| j.map(|j| cabs(a[i] - b[j])).unwrap_or(T::lit(f64::INFINITY)))
        .fold(T::zero(), |x, y| x.max(y))
}

/// One viscosity of a [`BranchCurve`].
#[derive(Debug, Clone)]
pub struct BranchPoint<T: Real> {
    pub eps: T,
    /// Eigenvalue matched to `lambda0`, if any lies inside the contour.
    pub lambda: Option<Cx<T>>,
    /// Eigenvalues inside the contour.
    pub inside: Vec<Cx<T>>,
    pub multiplicity: Option<usize>,
    pub trace: Option<Cx<T>>,
    pub idempotency_defect: Option<T>,
    pub projection_distance: Option<T>,
    /// Why the point is excluded (e.g. an eigenvalue in the guard band).
    pub flag: Option<String>,
}

/// Eigenvalue branch followed in the viscosity.
#[derive(Debug, Clone)]
pub struct BranchCurve<T: Real> {
    pub lambda0: Cx<T>,
    pub radius: T,
    pub nodes: usize,
    /// Multiplicity of `lambda0` for the inviscid operator.
    pub multiplicity0: usize,
    /// Strictly decreasing in `eps`, ending at 0.
    pub points: Vec<BranchPoint<T>>,
}

impl<T: Real> BranchCurve<T> {
    pub fn eps_grid(&self) -> Vec<T> {
        self.points.iter().map(|p| p.eps).collect()
    }

    pub fn lambda_of_eps(&self) -> Vec<Option<Cx<T>>> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn projection_distance(&self) -> Vec<Option<T>> {
        self.points.iter().map(|p| p.projection_distance).collect()
    }

    pub fn multiplicity_of_eps(&self) -> Vec<Option<usize>> {
        self.points.iter().map(|p| p.multiplicity).collect()
    }

    /// Points with a positive viscosity that were not flagged.
    pub fn viscous(&self) -> impl Iterator<Item = &BranchPoint<T>> {
        self.points.iter().filter(|p| p.eps > T::zero())
    }
}

/// Half the distance from `lambda0` to the rest of the spectrum.
pub fn isolation_radius<T: Real>(spectrum: &[Cx<T>], lambda0: Cx<T>, same: T) -> T {
    let d = spectrum
        .iter()
        .map(|&l| cabs(l - lambda0))
        .filter(|&d| d > same)
        .fold(T::lit(f64::INFINITY), |a, b| a.min(b));
    d * T::lit(0.5)
}

/// Follows the eigenvalues of `L^eps` inside the circle `|z - lambda0| = r`
/// along a decreasing viscosity grid (0 is appended if missing).
pub fn continue_in_viscosity<T: Real>(
    flow: &SteadyFlow<T>,
    modeset: &Arc<ModeSet<T>>,
    lambda0: Cx<T>,
    radius: T,
    eps_grid: &[T],
    nodes: usize,
) -> Result<BranchCurve<T>> {
    let mut grid = eps_grid.to_vec();
    if grid.iter().any(|e| !(*e >= T::zero())) {
        return Err(Error::InvalidArgument("viscosities must be non-negative".into()));
    }
    if grid.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidArgument("viscosity grid must be strictly decreasing".into()));
    }
    if grid.last().is_none_or(|e| *e != T::zero()) {
        grid.push(T::zero());
    }
    let l0 = assemble(flow, modeset, T::zero())?;
    let eig0 = block_eigenvalues(l0.matrix())?;
    let all0: Vec<Cx<T>> = eig0.iter().flatten().copied().collect();
    let nearest = all0.iter().map(|&l| cabs(l - lambda0)).fold(T::lit(f64::INFINITY), |a, b| a.min(b));
    if !(nearest <= T::lit(1e-6) * T::one().max(cabs(lambda0))) {
        return Err(Error::InvalidArgument(format!("{lambda0} is not an eigenvalue of the inviscid operator")));
    }
    let p0 = riesz_projection_blocks(l0.matrix(), &eig0, lambda0, radius, nodes)?;
    let m0 = multiplicity(&p0)?;
    let reference = p0.enclosed.clone();
    let i0 = match_eigenvalues(&[lambda0], &reference)[0];
    let points = grid
        .par_iter()
        .map(|&eps| -> Result<BranchPoint<T>> {
            let (op, eigs) = if eps == T::zero() {
                (l0.clone(), eig0.clone())
            } else {
                let op = assemble(flow, modeset, eps)?;
                let e = block_eigenvalues(op.matrix())?;
                (op, e)
            };
            let mut inside: Vec<Cx<T>> =
                eigs.iter().flatten().copied().filter(|&l| cabs(l - lambda0) < radius).collect();
            inside.sort_by(order);
            let matched = match_eigenvalues(&reference, &inside);
            let lambda = i0.and_then(|i| matched[i]).map(|j| inside[j]).or_else(|| {
                // more reference copies than eigenvalues: fall back to the nearest
                inside.iter().copied().min_by(|a, b| {
                    cabs(*a - lambda0).partial_cmp(&cabs(*b - lambda0)).unwrap_or(std::cmp::Ordering::Equal)
                })
            });
            let mut pt = BranchPoint {
                eps,
                lambda,
                inside,
                multiplicity: None,
                trace: None,
                idempotency_defect: None,
                projection_distance: None,
                flag: None,
            };
            match riesz_projection_blocks(op.matrix(), &eigs, lambda0, radius, nodes) {
                Ok(p) => {
                    pt.trace = Some(p.trace);
                    pt.idempotency_defect = Some(p.idempotency_defect);
                    match multiplicity(&p) {
                        Ok(m) => pt.multiplicity = Some(m),
                        Err(e) => pt.flag = Some(e.to_string()),
                    }
                    pt.projection_distance = Some(projection_distance(&p, &p0)?);
                }
                Err(e @ (Error::EigenvalueOnContour { .. } | Error::IdempotencyDefect { .. })) => {
                    pt.flag = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
            Ok(pt)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BranchCurve { lambda0, radius, nodes, multiplicity0: m0, points })
}

/// Frequency split of a propagator `G` into `G- = G (I - P)` and `G+ = G P`,
/// `P` the ball truncation `|k| < n_inner`, with the reduced determinant
/// `g(z) = det(I + P (G- - z)^{-1} G+ P)` on the range of `P`.
#[derive(Debug, Clone)]
pub struct ReductionSplit<T: Real> {
    g: BlockMatrix<T>,
    /// Local indices of inner columns per block.
    inner: Vec<Vec<usize>>,
    minus_radius: T,
    n_inner: T,
}

impl<T: Real> ReductionSplit<T> {
    /// `g` must be a velocity-form propagator on `modeset`.
    pub fn new(g: &BlockMatrix<T>, modeset: &ModeSet<T>, n_inner: T) -> Result<Self> {
        if g.dim() != modeset.dimension() {
            return Err(Error::DimensionMismatch { expected: modeset.dimension(), got: g.dim() });
        }
        let c2 = n_inner * n_inner;
        let part = g.partition();
        let inner: Vec<Vec<usize>> = part
            .groups()
            .iter()
            .map(|cols| {
                cols.iter()
                    .enumerate()
                    .filter(|(_, &c)| T::int(modeset.norm_sq(modeset.slot_of(c).0)) < c2)
                    .map(|(l, _)| l)
                    .collect()
            })
            .collect();
        let radii = g
            .blocks()
            .par_iter()
            .zip(inner.par_iter())
            .map(|(b, inn)| {
                let mut minus = b.clone();
                for &l in inn {
                    minus.column_mut(l).fill(czero());
                }
                let ev = eigenvalues(&minus)?;
                Ok(ev.iter().map(|&z| cabs(z)).fold(T::zero(), |a, b| a.max(b)))
            })
            .collect::<Result<Vec<T>>>()?;
        let minus_radius = radii.into_iter().fold(T::zero(), |a, b| a.max(b));
        Ok(Self { g: g.clone(), inner, minus_radius, n_inner })
    }

    /// Smallest integer inner cutoff whose remainder radius stays below
    /// `|center| - 1.05 radius`, so the whole contour is admissible.
    pub fn auto(g: &BlockMatrix<T>, modeset: &ModeSet<T>, center: Cx<T>, radius: T) -> Result<Self> {
        let limit = cabs(center) - T::lit(1.05) * radius;
        let max_inner = (modeset.dim() as f64).sqrt() * modeset.cutoff() as f64 + 1.0;
        let mut last = T::lit(f64::INFINITY);
        for ni in 1..=max_inner.ceil() as usize {
            let s = Self::new(g, modeset, T::lit(ni as f64))?;
            if s.minus_radius < limit {
                return Ok(s);
            }
            last = s.minus_radius;
        }
        Err(Error::InsideRemainderRadius { z_abs: limit.as_f64(), radius: last.as_f64() })
    }

    /// Spectral radius of `G-`.
    pub fn remainder_radius(&self) -> T {
        self.minus_radius
    }

    pub fn inner_rank(&self) -> usize {
        self.inner.iter().map(Vec::len).sum()
    }

    pub fn n_inner(&self) -> T {
        self.n_inner
    }

    fn admissible(&self, z: Cx<T>) -> Result<()> {
        if !(cabs(z) > self.minus_radius) {
            return Err(Error::InsideRemainderRadius { z_abs: cabs(z).as_f64(), radius: self.minus_radius.as_f64() });
        }
        Ok(())
    }

    /// `(g_b(z), g_b'(z) / g_b(z))` for block `b`.
    fn block_eval(&self, b: usize, z: Cx<T>) -> Result<(Cx<T>, Cx<T>)> {
        let inn = &self.inner[b];
        if inn.is_empty() {
            return Ok((cone(), czero()));
        }
        let g = self.g.block(b);
        let n = g.nrows();
        let r = inn.len();
        let mut a = g.clone();
        for &l in inn {
            a.column_mut(l).fill(czero());
        }
        for i in 0..n {
            a[(i, i)] -= z;
        }
        let lu = a.lu();
        let gp = CMat::from_fn(n, r, |i, j| g[(i, inn[j])]);
        let x = lu.solve(&gp).ok_or(Error::NearSingularShift { distance: 0.0 })?;
        let y = lu.solve(&x).ok_or(Error::NearSingularShift { distance: 0.0 })?;
        let mut ik = CMat::from_fn(r, r, |i, j| x[(inn[i], j)]);
        for i in 0..r {
            ik[(i, i)] += cone::<T>();
        }
        let dk = CMat::from_fn(r, r, |i, j| y[(inn[i], j)]);
        let lu2 = ik.lu();
        let det = lu2.determinant();
        let sol = lu2.solve(&dk).ok_or(Error::NearSingularShift { distance: 0.0 })?;
        Ok((det, sol.trace()))
    }

    /// `g(z)`.
    pub fn determinant(&self, z: Cx<T>) -> Result<Cx<T>> {
        self.admissible(z)?;
        let mut acc = cone();
        for b in 0..self.inner.len() {
            acc *= self.block_eval(b, z)?.0;
        }
        Ok(acc)
    }

    /// `g'(z) / g(z)`.
    pub fn log_derivative(&self, z: Cx<T>) -> Result<Cx<T>> {
        self.admissible(z)?;
        let mut acc = czero();
        for b in 0..self.inner.len() {
            acc += self.block_eval(b, z)?.1;
        }
        Ok(acc)
    }

    /// Zeros of `g` inside `|z - center| < radius`, found per block from the
    /// contour moments of `g'/g` and polished by Newton steps.
    pub fn locate_roots(&self, center: Cx<T>, radius: T, nodes: usize) -> Result<Vec<Cx<T>>> {
        if nodes < 16 {
            return Err(Error::InvalidArgument("contour needs at least 16 nodes".into()));
        }
        if !(cabs(center) - radius > self.minus_radius) {
            return Err(Error::InsideRemainderRadius {
                z_abs: (cabs(center) - radius).as_f64(),
                radius: self.minus_radius.as_f64(),
            });
        }
        let mf = T::lit(nodes as f64);
        let per_block = (0..self.inner.len())
            .into_par_iter()
            .map(|b| -> Result<Vec<Cx<T>>> {
                if self.inner[b].is_empty() {
                    return Ok(vec![]);
                }
                let mut vals = Vec::with_capacity(nodes);
                for j in 0..nodes {
                    let w = cis(T::two_pi() * T::lit(j as f64) / mf) * radius;
                    vals.push((w, self.block_eval(b, center + w)?.1));
                }
                let moment = |p: i32| vals.iter().fold(czero::<T>(), |acc, &(w, d)| acc + d * w.powi(p + 1)) / mf;
                let count = trace_to_integer(moment(0))?;
                if count == 0 {
                    return Ok(vec![]);
                }
                let sums: Vec<Cx<T>> = (1..=count as i32).map(moment).collect();
                // Newton identities: power sums -> elementary symmetric functions
                let mut e = vec![cone::<T>()];
                for k in 1..=count {
                    let mut acc = czero::<T>();
                    for i in 1..=k {
                        let term = e[k - i] * sums[i - 1];
                        acc += if i % 2 == 1 { term } else { -term };
                    }
                    e.push(acc / T::lit(k as f64));
                }
                let mut comp = CMat::<T>::zeros(count, count);
                for i in 1..count {
                    comp[(i, i - 1)] = cone();
                }
                for i in 0..count {
                    // monic poly w^c + a_{c-1} w^{c-1} + ... + a_0, a_{c-j} = (-1)^j e_j
                    let j = count - i;
                    let a = if j % 2 == 0 { e[j] } else { -e[j] };
                    comp[(i, count - 1)] = -a;
                }
                let ws = eigenvalues(&comp)?;
                let mut roots = Vec::with_capacity(count);
                for w in ws {
                    let mut z = center + w;
                    for _ in 0..8 {
                        let d = self.block_eval(b, z)?.1;
                        if cabs(d) == T::zero() {
                            break;
                        }
                        let step = cone::<T>() / d;
                        z -= step;
                        if cabs(step) < T::lit(1e-15) * T::one().max(cabs(z)) {
                            break;
                        }
                    }
                    roots.push(z);
                }
                Ok(roots)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut roots: Vec<Cx<T>> = per_block.into_iter().flatten().collect();
        roots.sort_by(order);
        Ok(roots)
    }
}

/// `g(z)` for the split of `g` at `n_inner`.
pub fn reduction_determinant<T: Real>(g: &BlockMatrix<T>, modeset: &ModeSet<T>, n_inner: T, z: Cx<T>) -> Result<Cx<T>> {
    ReductionSplit::new(g, modeset, n_inner)?.determinant(z)
}

#[derive(Serialize)]
struct SpectrumRow<'a> {
    index: usize,
    re: f64,
    im: f64,
    residual: f64,
    config_hash: &'a str,
    version: &'a str,
}

/// Eigenvalue table: `index, re, im, residual`.
pub fn write_spectrum_csv<T: Real, W: Write>(spec: &SpectrumResult<T>, prov: &Provenance, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (i, (l, r)) in spec.eigenvalues.iter().zip(&spec.residuals).enumerate() {
        wr.serialize(SpectrumRow {
            index: i,
            re: l.re.as_f64(),
            im: l.im.as_f64(),
            residual: r.as_f64(),
            config_hash: &prov.config_hash,
            version: &prov.version,
        })
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Serialize)]
struct BranchRow<'a> {
    eps: f64,
    re: Option<f64>,
    im: Option<f64>,
    multiplicity: Option<usize>,
    projection_distance: Option<f64>,
    inside: usize,
    flag: &'a str,
    config_hash: &'a str,
    version: &'a str,
}

/// Branch table, one row per viscosity; empty cells where a value is undefined.
pub fn write_branch_csv<T: Real, W: Write>(curve: &BranchCurve<T>, prov: &Provenance, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in &curve.points {
        wr.serialize(BranchRow {
            eps: p.eps.as_f64(),
            re: p.lambda.map(|l| l.re.as_f64()),
            im: p.lambda.map(|l| l.im.as_f64()),
            multiplicity: p.multiplicity,
            projection_distance: p.projection_distance.map(|d| d.as_f64()),
            inside: p.inside.len(),
            flag: p.flag.as_deref().unwrap_or(""),
            config_hash: &prov.config_hash,
            version: &prov.version,
        })
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::assemble_vorticity_2d;
    use crate::linalg::{expm, max_abs};
    use crate::scalar::cx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ms(n: usize) -> Arc<ModeSet<f64>> {
        ModeSet::shared(2, n).unwrap()
    }

    fn random_field(m: &Arc<ModeSet<f64>>, seed: u64) -> SpectralField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..m.dimension()).map(|_| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        SpectralField::from_fiber(m.clone(), v).unwrap()
    }

    #[test]
    fn diagonal_spectrum_and_shell_counts() {
        let m = ms(2);
        let op = assemble(&SteadyFlow::zero(2).unwrap(), &m, 0.1).unwrap();
        let s = eigen_decompose(&op).unwrap();
        assert_eq!(s.len(), 24);
        let count = |v: f64| s.eigenvalues.iter().filter(|l| (l.re - v).abs() < 1e-12).count();
        assert_eq!(count(-0.1), 4);
        assert_eq!(count(-0.2), 4);
        assert_eq!(count(-0.4), 4);
        assert_eq!(count(-0.5), 8);
        assert_eq!(count(-0.8), 4);
        assert!(s.max_residual() < 1e-14);
        let z = eigen_decompose(&assemble(&SteadyFlow::zero(2).unwrap(), &m, 0.0).unwrap()).unwrap();
        assert!(z.eigenvalues.iter().all(|l| *l == czero()));
    }

    #[test]
    fn ordering_and_eigenvectors() {
        let m = ms(6);
        let op = assemble(&SteadyFlow::cellular(2, 1.0).unwrap(), &m, 0.02).unwrap();
        let s = eigen_decompose(&op).unwrap();
        for w in s.eigenvalues.windows(2) {
            assert!(w[0].re > w[1].re || (w[0].re == w[1].re && w[0].im <= w[1].im));
        }
        assert!(s.max_residual() < 1e-8);
        let dense = op.dense();
        let v = nalgebra::DVector::from_vec(s.eigenvector(0));
        let r = &dense * &v - &v * s.eigenvalues[0];
        assert!(r.norm() < 1e-8);
        assert_eq!(s.right_eigenvectors().ncols(), s.len());
        let too_small = eigen_decompose_with_cap(&op, 10);
        assert!(matches!(too_small, Err(Error::TooLarge { .. })));
    }

    #[test]
    fn unstable_set_filters() {
        let m = ms(2);
        let op = assemble(&SteadyFlow::zero(2).unwrap(), &m, 0.1).unwrap();
        let s = eigen_decompose(&op).unwrap();
        assert!(unstable_set(&s, 0.0, 0.0).is_empty());
        assert_eq!(unstable_set(&s, -0.3, 0.0).len(), 8);
        assert_eq!(default_delta(0.5), 0.1);
        assert!((default_delta(-3.0f64) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn resolvent_diagonal_round_trip_and_identity() {
        let m = ms(3);
        let z = assemble(&SteadyFlow::zero(2).unwrap(), &m, 0.1).unwrap();
        let mut e = SpectralField::zeros(m.clone(), Layout::Fiber);
        let i = m.index_of(&[1, 1]).unwrap();
        e.coeffs_mut()[i] = cx(1.0, 0.0);
        let w = resolvent_solve(&z, cx(1.0, 0.0), &e).unwrap();
        assert!((w.coeffs()[i] - cx(1.0 / (-0.2 - 1.0), 0.0)).norm() < 1e-15);

        let op = assemble(&SteadyFlow::shear(2, 2, 1.0).unwrap(), &m, 0.01).unwrap();
        let rhs = random_field(&m, 4);
        let (z1, z2) = (cx(0.3, 0.7), cx(-0.2, 1.9));
        let w1 = resolvent_solve(&op, z1, &rhs).unwrap();
        let mut back = op.apply(&w1).unwrap();
        back.axpy(-z1, &w1).unwrap();
        assert!(back.distance(&rhs).unwrap() <= 1e-10 * rhs.norm());
        // first resolvent identity
        let w2 = resolvent_solve(&op, z2, &rhs).unwrap();
        let mut lhs = w1.clone();
        lhs.axpy(cx(-1.0, 0.0), &w2).unwrap();
        let mut rhs2 = resolvent_solve(&op, z1, &w2).unwrap();
        rhs2.scale(z1 - z2);
        assert!(lhs.distance(&rhs2).unwrap() <= 1e-8 * lhs.norm().max(1.0));
        assert!(matches!(resolvent_solve(&z, cx(-0.2, 0.0), &e), Err(Error::NearSingularShift { .. })));
    }

    #[test]
    fn riesz_basics() {
        let m = ms(2);
        let op = assemble(&SteadyFlow::zero(2).unwrap(), &m, 0.1).unwrap();
        let p = riesz_projection(&op, cx(-0.1, 0.0), 0.04, 64).unwrap();
        assert!((p.trace - cx(4.0, 0.0)).norm() < 1e-6);
        assert_eq!(multiplicity(&p).unwrap(), 4);
        let empty = riesz_projection(&op, cx(3.0, 0.0), 0.5, 64).unwrap();
        assert!(empty.matrix.max_abs() <= 1e-10);
        assert_eq!(multiplicity(&empty).unwrap(), 0);
        assert!(matches!(riesz_projection(&op, cx(-0.1, 0.0), 0.1, 64), Err(Error::EigenvalueOnContour { .. })));
        assert!(riesz_projection(&op, cx(-0.1, 0.0), 0.04, 8).is_err());
    }

    #[test]
    fn riesz_on_nonnormal_flow() {
        let m = ms(6);
        let op = assemble(&SteadyFlow::shear(2, 2, 1.0).unwrap(), &m, 0.01).unwrap();
        let s = spectrum_values(&op).unwrap();
        let l0 = s[0];
        let r = isolation_radius(&s, l0, 1e-6);
        let p32 = riesz_projection(&op, l0, r, 32).unwrap();
        let p64 = riesz_projection(&op, l0, r, 64).unwrap();
        assert!(p32.matrix.sub(&p64.matrix).unwrap().norm2() <= 1e-9);
        let count = s.iter().filter(|l| (**l - l0).norm() < r).count();
        assert_eq!(multiplicity(&p64).unwrap(), count);
        // invariance of the range
        let l = op.matrix();
        let lp = l.mul(&p64.matrix).unwrap();
        let plp = p64.matrix.mul(&lp).unwrap();
        assert!(lp.sub(&plp).unwrap().norm2() <= 1e-6 * l.norm2());
        // disjoint contours give annihilating projections
        let other = s.iter().copied().find(|z| (*z - l0).norm() > 4.0 * r && z.re > -0.5).unwrap();
        let r2 = isolation_radius(&s, other, 1e-6).min(r);
        let q = riesz_projection(&op, other, r2, 64).unwrap();
        assert!(p64.matrix.mul(&q.matrix).unwrap().norm2() <= 1e-6);
    }

    #[test]
    fn conjugate_pair_has_multiplicity_two() {
        let m = ms(8);
        let op = assemble(&SteadyFlow::cellular(2, 1.0).unwrap(), &m, 0.05).unwrap();
        let s = spectrum_values(&op).unwrap();
        let pair = s.iter().copied().find(|l| l.im > 1e-3).unwrap();
        let center = cx(pair.re, 0.0);
        let radius = pair.im * 1.5;
        match riesz_projection(&op, center, radius, 64) {
            Ok(p) => {
                let inside = s.iter().filter(|l| (**l - center).norm() < radius).count();
                assert_eq!(multiplicity(&p).unwrap(), inside);
                assert_eq!(inside % 2, 0);
            }
            Err(Error::EigenvalueOnContour { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn matching_is_greedy_and_injective() {
        let a = [cx(0.0f64, 1.0), cx(0.0, -1.0), cx(2.0, 0.0)];
        let b = [cx(2.1, 0.0), cx(0.0, -1.05), cx(0.0, 1.01)];
        assert_eq!(match_eigenvalues(&a, &b), vec![Some(2), Some(1), Some(0)]);
        assert!((matched_distance(&a, &b) - 0.1).abs() < 1e-12);
        assert_eq!(match_eigenvalues(&a, &b[..1]), vec![None, None, Some(0)]);
    }

    #[test]
    fn vorticity_and_velocity_spectra_agree() {
        let m = ms(8);
        let flow = SteadyFlow::shear(2, 2, 1.0).unwrap();
        for eps in [0.0, 0.01] {
            let a = spectrum_values(&assemble(&flow, &m, eps).unwrap()).unwrap();
            let b = spectrum_values(&assemble_vorticity_2d(&flow, &m, eps).unwrap()).unwrap();
            assert!(matched_distance(&a, &b) <= 1e-8);
        }
    }

    #[test]
    fn csv_tables() {
        let m = ms(2);
        let z = SteadyFlow::zero(2).unwrap();
        let s = eigen_decompose(&assemble(&z, &m, 0.1).unwrap()).unwrap();
        let mut out = Vec::new();
        write_spectrum_csv(&s, &Provenance::new("abc"), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("index,re,im,residual,config_hash,version\n0,-0.1,0.0,0.0,abc,"));
        assert_eq!(text.lines().count(), 25);
        let b = continue_in_viscosity(&z, &m, czero(), 0.005, &[0.1], 64).unwrap();
        let mut out = Vec::new();
        write_branch_csv(&b, &Provenance::new("abc"), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(1).unwrap().split(',').take(4).collect::<Vec<_>>(), ["0.1", "", "", "0"]);
    }

    #[test]
    fn zero_flow_branch() {
        let m = ms(2);
        let z = SteadyFlow::zero(2).unwrap();
        let b = continue_in_viscosity(&z, &m, czero(), 0.005, &[0.1, 0.01], 64).unwrap();
        assert_eq!(b.eps_grid(), vec![0.1, 0.01, 0.0]);
        assert_eq!(b.multiplicity0, 24);
        assert_eq!(b.points[0].multiplicity, Some(0));
        assert_eq!(b.points[1].multiplicity, Some(0));
        assert_eq!(b.points[2].multiplicity, Some(24));
        assert!(continue_in_viscosity(&z, &m, cx(1.0, 0.0), 0.005, &[0.1], 64).is_err());
        assert!(continue_in_viscosity(&z, &m, czero(), 0.005, &[0.01, 0.1], 64).is_err());
    }

    #[test]
    fn reduction_determinant_of_diagonal_propagator() {
        let m = ms(2);
        let op = assemble(&SteadyFlow::zero(2).unwrap(), &m, 0.1).unwrap();
        let g = op.matrix().try_map(|_, b| expm(b, 1.0)).unwrap();
        let split = ReductionSplit::new(&g, &m, 10.0).unwrap();
        assert_eq!(split.remainder_radius(), 0.0);
        let z = cx(0.5, 0.2);
        let want = (0..m.len()).fold(cx(1.0, 0.0), |acc, i| acc * (cx(1.0, 0.0) - g.get(i, i) / z));
        let got = split.determinant(z).unwrap();
        assert!((got - want).norm() < 1e-12 * want.norm());
        let far = split.determinant(cx(1e6, 0.0)).unwrap();
        assert!((far - cx(1.0, 0.0)).norm() < 1e-4);
        // zeros at the diagonal entries
        let root = g.get(0, 0);
        let roots = split.locate_roots(root, 0.01, 64).unwrap();
        let shell = (0..m.len()).filter(|&i| (g.get(i, i) - root).norm() < 0.01).count();
        assert_eq!(roots.len(), shell);
        assert!(roots.iter().all(|r| (*r - root).norm() < 1e-10));
    }

    #[test]
    fn reduction_determinant_matches_schur_complement() {
        let m = ms(5);
        let op = assemble(&SteadyFlow::shear(2, 1, 1.0).unwrap(), &m, 0.05).unwrap();
        let g = op.matrix().try_map(|_, b| expm(b, 0.5)).unwrap();
        let n_inner = 3.0;
        let split = ReductionSplit::new(&g, &m, n_inner).unwrap();
        let z = cx(split.remainder_radius() + 0.7, 0.3);
        let got = split.determinant(z).unwrap();
        // g(z) = (-1/z)^{|I|} det(G - z) / det(G_OO - z)
        let dense = g.to_dense();
        let n = dense.nrows();
        let outer: Vec<usize> = (0..n).filter(|&c| m.norm_sq(c) as f64 >= n_inner * n_inner).collect();
        let full = (dense.clone() - CMat::identity(n, n) * z).determinant();
        let goo = CMat::from_fn(outer.len(), outer.len(), |i, j| dense[(outer[i], outer[j])]);
        let oo = (goo - CMat::identity(outer.len(), outer.len()) * z).determinant();
        let want = (-cx(1.0, 0.0) / z).powi((n - outer.len()) as i32) * full / oo;
        assert!((got - want).norm() < 1e-9 * want.norm());
        assert!(matches!(split.determinant(cx(0.0, 0.0)), Err(Error::InsideRemainderRadius { .. })));
        assert!(max_abs(&dense) > 0.0);
    }
}
