//! Time evolution: Galerkin propagators `e^{tL}`, pseudodifferential
//! operators on the torus, the high-frequency transport operator `H_t`, and
//! wave-packet residual experiments.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::{cocycle_symbol, covector_fiber};
use crate::error::{Error, Result};
use crate::flows::{flow_points, SteadyFlow};
use crate::galerkin::{assemble, GalerkinOperator};
use crate::grid::Grid;
use crate::lattice::{leray_fiber_projector, Layout, ModeSet, SpectralField};
use crate::linalg::{eigenvalues, expm, BlockMatrix, CMat};
use crate::provenance::{csv_err, Provenance};
use crate::scalar::{cis, czero, Cx, Real};
use crate::spectra::{spectrum_values, DEFAULT_DIMENSION_CAP};

/// Tolerance for flow maps and rays used by the transport operator.
pub const TRANSPORT_TOL: f64 = 1e-10;

/// `G = e^{tL}` on a mode set.
#[derive(Debug, Clone)]
pub struct Propagator<T: Real> {
    pub matrix: BlockMatrix<T>,
    pub t: T,
    pub eps: T,
    pub flow_name: String,
    modeset: Arc<ModeSet<T>>,
}

impl<T: Real> Propagator<T> {
    pub fn modeset(&self) -> &Arc<ModeSet<T>> {
        &self.modeset
    }

    pub fn cutoff(&self) -> usize {
        self.modeset.cutoff()
    }

    /// `G f` in fiber layout.
    pub fn apply(&self, f: &SpectralField<T>) -> Result<SpectralField<T>> {
        if !f.compatible(&self.modeset) {
            return Err(Error::ModeSetMismatch);
        }
        let v = match f.layout() {
            Layout::Fiber => f.clone(),
            Layout::Full => f.to_fiber(),
        };
        SpectralField::from_fiber(self.modeset.clone(), self.matrix.apply(v.coeffs())?)
    }

    /// `G(t1) G(t2)`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            matrix: self.matrix.mul(&other.matrix)?,
            t: self.t + other.t,
            eps: self.eps,
            flow_name: self.flow_name.clone(),
            modeset: self.modeset.clone(),
        })
    }

    pub fn eigenvalues(&self) -> Result<Vec<Cx<T>>> {
        let mut v: Vec<Cx<T>> = crate::spectra::block_eigenvalues(&self.matrix)?.into_iter().flatten().collect();
        v.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal));
        Ok(v)
    }
}

/// Blockwise scaling-and-squaring exponential of `t L`.
pub fn propagator<T: Real>(op: &GalerkinOperator<T>, t: T) -> Result<Propagator<T>> {
    if op.dimension() > DEFAULT_DIMENSION_CAP {
        return Err(Error::TooLarge { dim: op.dimension(), cap: DEFAULT_DIMENSION_CAP });
    }
    let matrix = op.matrix().try_map(|_, b| expm(b, t))?;
    Ok(Propagator { matrix, t, eps: op.eps(), flow_name: op.flow_name().to_string(), modeset: op.modeset().clone() })
}

/// Modes with a nonzero coefficient, with their full-layout vectors.
fn active_modes<T: Real>(f: &SpectralField<T>) -> Vec<(Vec<i32>, Vec<Cx<T>>)> {
    let full = f.to_full();
    let ms = f.modeset();
    let n = ms.dim();
    (0..ms.len())
        .filter_map(|i| {
            let c = &full.coeffs()[i * n..(i + 1) * n];
            c.iter().any(|z| *z != czero()).then(|| (ms.mode(i).to_vec(), c.to_vec()))
        })
        .collect()
}

fn check_grid<T: Real>(ms: &ModeSet<T>, grid: usize) -> Result<Grid> {
    if grid < 4 * ms.cutoff() {
        return Err(Error::InvalidArgument(format!("grid {grid} is below 4N = {}", 4 * ms.cutoff())));
    }
    Grid::new(ms.dim(), grid)
}

/// `sum_k e^{i k.y_p} S_p(k) c_k` at every grid slot `p`, where `y_p` is the
/// evaluation point of slot `p` and `S_p(k)` an `n x n` symbol value.
fn accumulate<T, S>(g: &Grid, where_: &[Vec<T>], active: &[(Vec<i32>, Vec<Cx<T>>)], symbol: S) -> Vec<Vec<Cx<T>>>
where
    T: Real,
    S: Fn(usize, usize) -> CMat<T> + Sync,
{
    let n = g.dim;
    let per_point: Vec<Vec<Cx<T>>> = (0..g.len())
        .into_par_iter()
        .map(|p| {
            let y = &where_[p];
            let mut acc = vec![czero::<T>(); n];
            for (a, (k, c)) in active.iter().enumerate() {
                let phase = cis(k.iter().zip(y).fold(T::zero(), |s, (&kk, &yy)| s + T::int(kk as i64) * yy));
                let s = symbol(p, a);
                for i in 0..n {
                    let mut v = czero::<T>();
                    for j in 0..n {
                        v += s[(i, j)] * c[j];
                    }
                    acc[i] += v * phase;
                }
            }
            acc
        })
        .collect();
    (0..n).map(|c| per_point.iter().map(|v| v[c]).collect()).collect()
}

/// `op[sigma] f = sum_k e^{i k.x} sigma(x, k) f_hat(k)` evaluated on a grid
/// and transformed back; the result is restricted to `f`'s mode set (full layout).
pub fn apply_pdo<T, S>(symbol: S, f: &SpectralField<T>, grid: usize) -> Result<SpectralField<T>>
where
    T: Real,
    S: Fn(&[T], &[i32]) -> CMat<T> + Sync,
{
    let ms = f.modeset();
    let g = check_grid(ms, grid)?;
    let pts = g.points::<T>();
    let active = active_modes(f);
    let vals = accumulate(&g, &pts, &active, |p, a| symbol(&pts[p], &active[a].0));
    g.analyze(&vals, ms)
}

/// Per grid point and mode: the amplitude propagator `B_t(y, k)` and
/// `int_0^t |xi(s)|^2 ds` from `y = phi_{-t}(x)`. Independent of the viscosity.
#[derive(Debug, Clone)]
pub struct SymbolCache<T: Real> {
    pub flow_name: String,
    pub t: T,
    grid: Grid,
    pulled: Vec<Vec<T>>,
    entries: BTreeMap<Vec<i32>, Vec<(DMatrix<T>, T)>>,
}

impl<T: Real> SymbolCache<T> {
    pub fn new(flow: &SteadyFlow<T>, t: T, grid: Grid) -> Result<Self> {
        if !(t >= T::zero()) {
            return Err(Error::InvalidArgument("time must be non-negative".into()));
        }
        let pts = grid.points::<T>();
        let pulled = flow_points(flow, &pts, -t, T::lit(TRANSPORT_TOL))?;
        Ok(Self { flow_name: flow.name().to_string(), t, grid, pulled, entries: BTreeMap::new() })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `phi_{-t}` at the grid points (unwrapped).
    pub fn pulled_points(&self) -> &[Vec<T>] {
        &self.pulled
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Computes the entries for every mode not cached yet.
    pub fn ensure(&mut self, flow: &SteadyFlow<T>, modes: &[Vec<i32>]) -> Result<()> {
        let n = self.grid.dim;
        for k in modes {
            if self.entries.contains_key(k) {
                continue;
            }
            let kt: Vec<T> = k.iter().map(|&c| T::int(c as i64)).collect();
            let k2 = kt.iter().fold(T::zero(), |a, &v| a + v * v);
            let t = self.t;
            let vals = if flow.is_zero() || t == T::zero() {
                vec![(DMatrix::identity(n, n), k2 * t); self.pulled.len()]
            } else {
                self.pulled
                    .par_iter()
                    .map(|y| {
                        let s = cocycle_symbol(flow, y, &kt, t, T::lit(TRANSPORT_TOL))?;
                        Ok((s.b, s.xi_sq_integral))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            self.entries.insert(k.clone(), vals);
        }
        Ok(())
    }

    fn entry(&self, k: &[i32]) -> Result<&Vec<(DMatrix<T>, T)>> {
        self.entries.get(k).ok_or_else(|| Error::InvalidArgument(format!("mode {k:?} not in the symbol cache")))
    }

    /// `sup |tau_t^eps|` over cached points and modes (spectral norm of `B` times damping).
    pub fn sup_symbol(&self, eps: T) -> T {
        self.entries
            .values()
            .flatten()
            .map(|(b, i)| {
                let damp = if eps == T::zero() { T::one() } else { (-eps * *i).exp() };
                b.clone().svd(false, false).singular_values.max() * damp
            })
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// `H_t^eps f = Pi [ (op[tau] f) o phi_{-t} ]` with a prepared cache; fiber layout.
pub fn apply_h_cached<T: Real>(cache: &SymbolCache<T>, eps: T, f: &SpectralField<T>) -> Result<SpectralField<T>> {
    let ms = f.modeset();
    let g = check_grid(ms, cache.grid.size)?;
    if g != cache.grid {
        return Err(Error::InvalidArgument("cache grid differs from the requested grid".into()));
    }
    let active = active_modes(f);
    let entries: Vec<&Vec<(DMatrix<T>, T)>> = active.iter().map(|(k, _)| cache.entry(k)).collect::<Result<_>>()?;
    let vals = accumulate(&g, &cache.pulled, &active, |p, a| {
        let (b, i) = &entries[a][p];
        let damp = if eps == T::zero() { T::one() } else { (-eps * *i).exp() };
        b.map(|v| Cx::new(v * damp, T::zero()))
    });
    Ok(g.analyze(&vals, ms)?.project_div_free().to_fiber())
}

/// [`apply_h_cached`] building a one-off cache.
pub fn apply_h<T: Real>(flow: &SteadyFlow<T>, eps: T, t: T, f: &SpectralField<T>, grid: usize) -> Result<SpectralField<T>> {
    let g = check_grid(f.modeset(), grid)?;
    let mut cache = SymbolCache::new(flow, t, g)?;
    let modes: Vec<Vec<i32>> = active_modes(f).into_iter().map(|(k, _)| k).collect();
    cache.ensure(flow, &modes)?;
    apply_h_cached(&cache, eps, f)
}

/// Localized high-frequency field `b0(x) e^{i xi0.x / delta}` with a scalar
/// envelope of few Fourier modes times a fixed polarization in `F(xi0)`.
#[derive(Debug, Clone)]
pub struct WavePacket<T> {
    pub xi0: Vec<i32>,
    /// `1 / delta`.
    pub inv_delta: u32,
    /// Envelope Fourier coefficients.
    pub envelope: Vec<(Vec<i32>, Cx<T>)>,
    pub polarization: Vec<T>,
}

impl<T: Real> WavePacket<T> {
    /// Envelope `exp(-|j|^2 / 2)` on `|j| <= 2`, polarization the first fiber
    /// vector of `F(xi0)`.
    pub fn gaussian(xi0: Vec<i32>, inv_delta: u32) -> Result<Self> {
        let n = xi0.len();
        let xf: Vec<T> = xi0.iter().map(|&c| T::int(c as i64)).collect();
        let polarization = covector_fiber(&xf)?.remove(0);
        let mut envelope = Vec::new();
        let r = 2i32;
        let total = (2 * r + 1).pow(n as u32);
        for s in 0..total {
            let mut j = vec![0i32; n];
            let mut q = s;
            for c in j.iter_mut().rev() {
                *c = (q % (2 * r + 1)) - r;
                q /= 2 * r + 1;
            }
            let j2: i32 = j.iter().map(|c| c * c).sum();
            if j2 <= r * r {
                envelope.push((j, Cx::new((-T::lit(j2 as f64) * T::lit(0.5)).exp(), T::zero())));
            }
        }
        let carrier = xi0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0) * inv_delta;
        if carrier as i32 <= r {
            return Err(Error::InvalidArgument(format!("carrier |k| = {carrier} does not clear the envelope radius {r}")));
        }
        Ok(Self { xi0, inv_delta, envelope, polarization })
    }

    pub fn delta(&self) -> T {
        T::one() / T::lit(self.inv_delta as f64)
    }

    /// `xi0 / delta`.
    pub fn carrier(&self) -> Vec<i32> {
        self.xi0.iter().map(|&c| c * self.inv_delta as i32).collect()
    }

    /// Largest `|k|_inf` of the packet.
    pub fn reach(&self) -> usize {
        let c = self.carrier();
        self.envelope
            .iter()
            .map(|(j, _)| j.iter().zip(&c).map(|(a, b)| (a + b).unsigned_abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0) as usize
    }

    /// Divergence-free field on `ms` (fiber layout).
    pub fn field(&self, ms: &Arc<ModeSet<T>>) -> Result<SpectralField<T>> {
        let n = ms.dim();
        if self.xi0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.xi0.len() });
        }
        let carrier = self.carrier();
        let mut full = vec![czero(); ms.len() * n];
        for (j, w) in &self.envelope {
            let k: Vec<i32> = j.iter().zip(&carrier).map(|(a, b)| a + b).collect();
            let i = ms.index_of(&k).ok_or_else(|| Error::InvalidArgument(format!("packet mode {k:?} outside the mode set")))?;
            for c in 0..n {
                full[i * n + c] = *w * self.polarization[c];
            }
        }
        Ok(SpectralField::from_full(ms.clone(), full)?.project_div_free().to_fiber())
    }
}

/// Residuals of one packet experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketResidual<T> {
    pub delta: T,
    pub eps: T,
    /// Leading-order transport prediction vs the inviscid propagator.
    pub r_asym: T,
    /// `||(G^eps - H^eps) f|| / ||f||`.
    pub r_decomp: T,
}

/// Shared state of packet experiments for one flow and time: mode set,
/// grid, transport cache, and propagators per viscosity.
pub struct PacketExperiment<T: Real> {
    flow: SteadyFlow<T>,
    t: T,
    modeset: Arc<ModeSet<T>>,
    cache: SymbolCache<T>,
    propagators: BTreeMap<u64, Propagator<T>>,
}

impl<T: Real> PacketExperiment<T> {
    pub fn new(flow: &SteadyFlow<T>, t: T, cutoff: usize, grid: usize) -> Result<Self> {
        let modeset = ModeSet::shared(flow.dim(), cutoff)?;
        let g = check_grid(&modeset, grid)?;
        let cache = SymbolCache::new(flow, t, g)?;
        Ok(Self { flow: flow.clone(), t, modeset, cache, propagators: BTreeMap::new() })
    }

    pub fn modeset(&self) -> &Arc<ModeSet<T>> {
        &self.modeset
    }

    pub fn propagator(&mut self, eps: T) -> Result<&Propagator<T>> {
        let key = eps.as_f64().to_bits();
        if !self.propagators.contains_key(&key) {
            let op = assemble(&self.flow, &self.modeset, eps)?;
            self.propagators.insert(key, propagator(&op, self.t)?);
        }
        Ok(&self.propagators[&key])
    }

    fn check_fit(&self, packet: &WavePacket<T>) -> Result<()> {
        let c = packet.carrier().iter().map(|c| c.unsigned_abs()).max().unwrap_or(0) as usize;
        if self.modeset.cutoff() < 2 * c || packet.reach() > self.modeset.cutoff() {
            return Err(Error::InvalidArgument(format!(
                "cutoff {} leaves no 2x headroom over the carrier |k| = {c}",
                self.modeset.cutoff()
            )));
        }
        Ok(())
    }

    /// `r_asym` compares `G^0 f` on the grid with `B_t(y, xi0) f(y)`,
    /// `y = phi_{-t}(x)`; `r_decomp` compares `G^eps f` with `H^eps f`.
    pub fn residual(&mut self, packet: &WavePacket<T>, eps: T) -> Result<PacketResidual<T>> {
        self.check_fit(packet)?;
        let f = packet.field(&self.modeset)?;
        let fnorm = f.norm();
        let g = self.cache.grid;
        let modes: Vec<Vec<i32>> = active_modes(&f).into_iter().map(|(k, _)| k).collect();
        self.cache.ensure(&self.flow, &modes)?;
        let n = g.dim;

        let g0f = self.propagator(T::zero())?.apply(&f)?;
        let on_grid = g.synthesize(&g0f)?;
        let xi0: Vec<T> = packet.xi0.iter().map(|&c| T::int(c as i64)).collect();
        let active = active_modes(&f);
        let pulled = self.cache.pulled.clone();
        let flow = &self.flow;
        let t = self.t;
        let predicted_pts: Vec<Vec<Cx<T>>> = pulled
            .par_iter()
            .map(|y| {
                let b = cocycle_symbol(flow, y, &xi0, t, T::lit(TRANSPORT_TOL))?.b;
                let mut fy = vec![czero::<T>(); n];
                for (k, c) in &active {
                    let ph = cis(k.iter().zip(y).fold(T::zero(), |s, (&kk, &yy)| s + T::int(kk as i64) * yy));
                    for i in 0..n {
                        fy[i] += c[i] * ph;
                    }
                }
                Ok((0..n)
                    .map(|i| (0..n).fold(czero::<T>(), |s, j| s + fy[j] * b[(i, j)]))
                    .collect::<Vec<_>>())
            })
            .collect::<Result<_>>()?;
        let diff: Vec<Vec<Cx<T>>> =
            (0..n).map(|c| (0..g.len()).map(|p| on_grid[c][p] - predicted_pts[p][c]).collect()).collect();
        let r_asym = g.rms(&diff) / fnorm;

        let gef = self.propagator(eps)?.apply(&f)?;
        let hf = apply_h_cached(&self.cache, eps, &f)?;
        let r_decomp = gef.distance(&hf)? / fnorm;
        Ok(PacketResidual { delta: packet.delta(), eps, r_asym, r_decomp })
    }
}

/// One-shot [`PacketExperiment::residual`].
pub fn asymptotic_residual<T: Real>(
    flow: &SteadyFlow<T>,
    t: T,
    packet: &WavePacket<T>,
    eps: T,
    cutoff: usize,
    grid: usize,
) -> Result<PacketResidual<T>> {
    PacketExperiment::new(flow, t, cutoff, grid)?.residual(packet, eps)
}

/// Least-squares fit `r ~ c1 delta + c2 sqrt(eps)` (no intercept).
#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit<T> {
    pub c1: T,
    pub c2: T,
    /// `1 - SS_res / SS_tot` with the centered total sum of squares.
    pub r_squared: T,
}

pub fn fit_decomposition<T: Real>(rows: &[PacketResidual<T>]) -> Result<ScalingFit<T>> {
    if rows.len() < 3 {
        return Err(Error::InvalidArgument("need at least three residuals to fit".into()));
    }
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for r in rows {
        let (a, b, y) = (r.delta, r.eps.sqrt(), r.r_decomp);
        s11 += a * a;
        s12 += a * b;
        s22 += b * b;
        s1y += a * y;
        s2y += b * y;
    }
    let det = s11 * s22 - s12 * s12;
    if det == T::zero() {
        return Err(Error::InvalidArgument("degenerate (delta, eps) design".into()));
    }
    let c1 = (s1y * s22 - s2y * s12) / det;
    let c2 = (s2y * s11 - s1y * s12) / det;
    let nf = T::lit(rows.len() as f64);
    let mean = rows.iter().fold(T::zero(), |a, r| a + r.r_decomp) / nf;
    let (mut ss_res, mut ss_tot) = (T::zero(), T::zero());
    for r in rows {
        let pred = c1 * r.delta + c2 * r.eps.sqrt();
        ss_res += (r.r_decomp - pred) * (r.r_decomp - pred);
        ss_tot += (r.r_decomp - mean) * (r.r_decomp - mean);
    }
    let r_squared = if ss_tot == T::zero() { T::one() } else { T::one() - ss_res / ss_tot };
    Ok(ScalingFit { c1, c2, r_squared })
}

/// Residuals over the `deltas x eps` grid (row-major in `deltas`) and their fit.
pub fn decomposition_sweep<T: Real>(
    exp: &mut PacketExperiment<T>,
    xi0: &[i32],
    inv_deltas: &[u32],
    eps_values: &[T],
) -> Result<(Vec<PacketResidual<T>>, ScalingFit<T>)> {
    let mut rows = Vec::with_capacity(inv_deltas.len() * eps_values.len());
    for &d in inv_deltas {
        let p = WavePacket::gaussian(xi0.to_vec(), d)?;
        for &e in eps_values {
            rows.push(exp.residual(&p, e)?);
        }
    }
    let fit = fit_decomposition(&rows)?;
    Ok((rows, fit))
}

/// One row of the essential-radius diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusRow<T> {
    pub cutoff: usize,
    /// Spectral radius of `G_t` compressed to modes with `|k|_inf > N/2`.
    pub remainder_radius: T,
    /// Eigenvalues of `L^0` with `Re > mu_hat + delta`.
    pub unstable_count: usize,
    /// Eigenvalues of `L^0` with `|Re| <= 0.01`.
    pub neutral_count: usize,
}

pub fn essential_radius_diagnostic<T: Real>(
    flow: &SteadyFlow<T>,
    t: T,
    cutoffs: &[usize],
    mu_hat: T,
    delta: T,
) -> Result<Vec<RadiusRow<T>>> {
    if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("cutoffs must be increasing".into()));
    }
    cutoffs
        .iter()
        .map(|&nc| {
            let ms = ModeSet::shared(flow.dim(), nc)?;
            let op = assemble(flow, &ms, T::zero())?;
            let spec = spectrum_values(&op)?;
            let unstable_count = spec.iter().filter(|l| l.re > mu_hat + delta).count();
            let neutral_count = spec.iter().filter(|l| l.re.abs() <= T::lit(0.01)).count();
            let g = propagator(&op, t)?;
            let half = (nc / 2) as i32;
            let part = g.matrix.partition().clone();
            let radii = g
                .matrix
                .blocks()
                .par_iter()
                .enumerate()
                .map(|(b, m)| {
                    let outer: Vec<usize> = part
                        .group(b)
                        .iter()
                        .enumerate()
                        .filter(|(_, &c)| ms.mode(ms.slot_of(c).0).iter().any(|k| k.abs() > half))
                        .map(|(l, _)| l)
                        .collect();
                    if outer.is_empty() {
                        return Ok(T::zero());
                    }
                    let sub = CMat::from_fn(outer.len(), outer.len(), |i, j| m[(outer[i], outer[j])]);
                    Ok(eigenvalues(&sub)?.iter().map(|z| crate::scalar::cabs(*z)).fold(T::zero(), |a, b| a.max(b)))
                })
                .collect::<Result<Vec<T>>>()?;
            let remainder_radius = radii.into_iter().fold(T::zero(), |a, b| a.max(b));
            Ok(RadiusRow { cutoff: nc, remainder_radius, unstable_count, neutral_count })
        })
        .collect()
}

#[derive(Serialize)]
struct PacketRow<'a> {
    delta: f64,
    eps: f64,
    r_asym: f64,
    r_decomp: f64,
    config_hash: &'a str,
    version: &'a str,
}

pub fn write_packet_csv<T: Real, W: Write>(rows: &[PacketResidual<T>], prov: &Provenance, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(PacketRow {
            delta: r.delta.as_f64(),
            eps: r.eps.as_f64(),
            r_asym: r.r_asym.as_f64(),
            r_decomp: r.r_decomp.as_f64(),
            config_hash: &prov.config_hash,
            version: &prov.version,
        })
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Serialize)]
struct RadiusCsvRow<'a> {
    cutoff: usize,
    remainder_radius: f64,
    unstable_count: usize,
    neutral_count: usize,
    config_hash: &'a str,
    version: &'a str,
}

pub fn write_radius_csv<T: Real, W: Write>(rows: &[RadiusRow<T>], prov: &Provenance, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(RadiusCsvRow {
            cutoff: r.cutoff,
            remainder_radius: r.remainder_radius.as_f64(),
            unstable_count: r.unstable_count,
            neutral_count: r.neutral_count,
            config_hash: &prov.config_hash,
            version: &prov.version,
        })
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Symbol of the Leray projector lifted to full vectors, for use with [`apply_pdo`].
pub fn leray_symbol<T: Real>(_x: &[T], k: &[i32]) -> CMat<T> {
    match leray_fiber_projector::<T>(k) {
        Ok(p) => p.map(|v| Cx::new(v, T::zero())),
        Err(_) => CMat::zeros(k.len(), k.len()),
    }
}
