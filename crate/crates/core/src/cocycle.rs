//! Geometric optics along rays: the bicharacteristic flow
//! `x' = u(x)`, `xi' = -grad u(x)^T xi`, the amplitude transport
//! `b' = a0(x, xi) b`, and the growth rate of the amplitude cocycle.

use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::SteadyFlow;
use crate::linalg::eigenvalues;
use crate::ode::{self, OdeOptions};
use crate::provenance::{csv_err, Provenance};
use crate::scalar::{cabs, Cx, Real};

/// Default integration tolerance along rays.
pub const RAY_TOL: f64 = 1e-11;

/// `a0(x, xi) = (2 xi xi^T / |xi|^2 - I) grad u(x)`.
///
/// The symbol is real; it is returned as a real matrix.
pub fn amplitude_symbol<T: Real>(flow: &SteadyFlow<T>, x: &[T], xi: &[T]) -> Result<DMatrix<T>> {
    let n = flow.dim();
    check_point(n, x, xi)?;
    let mut g = vec![T::zero(); n * n];
    let mut u = vec![T::zero(); n];
    flow.eval(x, &mut u, Some(&mut g));
    let mut out = DMatrix::zeros(n, n);
    symbol_into(n, &g, xi, out.as_mut_slice());
    Ok(out)
}

/// Writes `a0` column-major into `out` given a row-major gradient.
fn symbol_into<T: Real>(n: usize, g: &[T], xi: &[T], out: &mut [T]) {
    let x2: T = xi.iter().fold(T::zero(), |a, &v| a + v * v);
    for i in 0..n {
        for j in 0..n {
            let mut acc = -g[i * n + j];
            let mut s = T::zero();
            for l in 0..n {
                s += xi[l] * g[l * n + j];
            }
            acc += T::lit(2.0) * xi[i] * s / x2;
            out[j * n + i] = acc;
        }
    }
}

fn check_point<T: Real>(n: usize, x: &[T], xi: &[T]) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if xi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: xi.len() });
    }
    if xi.iter().all(|v| *v == T::zero()) {
        return Err(Error::ZeroWaveVector);
    }
    Ok(())
}

/// Point of phase space with an amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CocycleState<T> {
    pub x: Vec<T>,
    pub xi: Vec<T>,
    pub b: Vec<Cx<T>>,
}

impl<T: Real> CocycleState<T> {
    pub fn new(x: Vec<T>, xi: Vec<T>, b: Vec<Cx<T>>) -> Self {
        Self { x, xi, b }
    }

    /// `xi . u(x)`, the conserved Hamiltonian.
    pub fn hamiltonian(&self, flow: &SteadyFlow<T>) -> T {
        let u = flow.velocity(&self.x);
        self.xi.iter().zip(&u).fold(T::zero(), |a, (&p, &q)| a + p * q)
    }

    /// `|xi . b|`.
    pub fn constraint(&self) -> T {
        let s = self.xi.iter().zip(&self.b).fold(Cx::new(T::zero(), T::zero()), |a, (&p, &q)| a + q * p);
        cabs(s)
    }

    pub fn xi_norm(&self) -> T {
        self.xi.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
    }

    pub fn b_norm(&self) -> T {
        self.b.iter().fold(T::zero(), |a, v| a + v.norm_sqr()).sqrt()
    }

    fn pack(&self) -> Vec<T> {
        let mut y = Vec::with_capacity(4 * self.x.len());
        y.extend_from_slice(&self.x);
        y.extend_from_slice(&self.xi);
        y.extend(self.b.iter().map(|c| c.re));
        y.extend(self.b.iter().map(|c| c.im));
        y
    }

    fn unpack(n: usize, y: &[T]) -> Self {
        Self {
            x: y[..n].to_vec(),
            xi: y[n..2 * n].to_vec(),
            b: (0..n).map(|i| Cx::new(y[2 * n + i], y[3 * n + i])).collect(),
        }
    }
}

/// Right-hand side of the ray system acting on `x, xi` and `cols` real
/// amplitude columns stored after them.
fn ray_rhs<'a, T: Real>(flow: &'a SteadyFlow<T>, cols: usize) -> impl FnMut(T, &[T], &mut [T]) + 'a {
    let n = flow.dim();
    let mut g = vec![T::zero(); n * n];
    let mut a = vec![T::zero(); n * n];
    move |_, y, dy| {
        flow.eval(&y[..n], &mut dy[..n], Some(&mut g));
        let xi = &y[n..2 * n];
        for i in 0..n {
            let mut s = T::zero();
            for l in 0..n {
                s += g[l * n + i] * xi[l];
            }
            dy[n + i] = -s;
        }
        symbol_into(n, &g, xi, &mut a);
        for c in 0..cols {
            let off = 2 * n + c * n;
            for i in 0..n {
                let mut s = T::zero();
                for j in 0..n {
                    s += a[j * n + i] * y[off + j];
                }
                dy[off + i] = s;
            }
        }
    }
}

/// State at time `t` of the joint ray and amplitude system.
pub fn integrate_ray<T: Real>(flow: &SteadyFlow<T>, state0: &CocycleState<T>, t: T, tol: T) -> Result<CocycleState<T>> {
    let mut out = ray_trajectory(flow, state0, &[t], tol)?;
    Ok(out.pop().expect("one sample"))
}

/// States at increasing (or decreasing) `times`, starting from `t = 0`.
pub fn ray_trajectory<T: Real>(
    flow: &SteadyFlow<T>,
    state0: &CocycleState<T>,
    times: &[T],
    tol: T,
) -> Result<Vec<CocycleState<T>>> {
    let n = flow.dim();
    check_point(n, &state0.x, &state0.xi)?;
    if state0.b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: state0.b.len() });
    }
    let Some(&t_end) = times.last() else { return Ok(vec![]) };
    // real and imaginary parts evolve independently
    let sol = ode::integrate(ray_rhs(flow, 2), T::zero(), &state0.pack(), t_end, tol, times)?;
    Ok(sol.samples.iter().map(|y| CocycleState::unpack(n, y)).collect())
}

/// Amplitude propagator along a ray: `B` solves `B' = a0 B`, `B(0) = I`;
/// `xi_sq_integral = int_0^t |xi(s)|^2 ds`.
#[derive(Debug, Clone)]
pub struct CocycleSymbol<T: Real> {
    pub x_t: Vec<T>,
    pub xi_t: Vec<T>,
    pub b: DMatrix<T>,
    pub xi_sq_integral: T,
}

impl<T: Real> CocycleSymbol<T> {
    /// `exp(-eps int |xi|^2)`.
    pub fn damping(&self, eps: T) -> T {
        if eps == T::zero() {
            return T::one();
        }
        (-eps * self.xi_sq_integral).exp()
    }
}

pub fn cocycle_symbol<T: Real>(flow: &SteadyFlow<T>, x0: &[T], xi0: &[T], t: T, tol: T) -> Result<CocycleSymbol<T>> {
    let n = flow.dim();
    check_point(n, x0, xi0)?;
    let mut y0 = Vec::with_capacity(2 * n + n * n + 1);
    y0.extend_from_slice(x0);
    y0.extend_from_slice(xi0);
    for c in 0..n {
        for i in 0..n {
            y0.push(if i == c { T::one() } else { T::zero() });
        }
    }
    y0.push(T::zero());
    let last = y0.len() - 1;
    let mut inner = ray_rhs(flow, n);
    let rhs = move |s: T, y: &[T], dy: &mut [T]| {
        inner(s, &y[..last], &mut dy[..last]);
        dy[last] = y[n..2 * n].iter().fold(T::zero(), |a, &v| a + v * v);
    };
    let sol = ode::integrate(rhs, T::zero(), &y0, t, tol, &[])?;
    let y = sol.y_end;
    Ok(CocycleSymbol {
        x_t: y[..n].to_vec(),
        xi_t: y[n..2 * n].to_vec(),
        b: DMatrix::from_column_slice(n, n, &y[2 * n..2 * n + n * n]),
        xi_sq_integral: y[last],
    })
}

/// `exp(-eps int_0^t |xi(s)|^2 ds)` along the ray from `(x0, xi0)`.
pub fn viscous_damping<T: Real>(flow: &SteadyFlow<T>, x0: &[T], xi0: &[T], t: T, eps: T) -> Result<T> {
    check_point(flow.dim(), x0, xi0)?;
    if !(eps >= T::zero()) || !(t >= T::zero()) {
        return Err(Error::InvalidArgument("viscosity and time must be non-negative".into()));
    }
    if eps == T::zero() {
        return Ok(T::one());
    }
    if flow.is_zero() {
        let k2 = xi0.iter().fold(T::zero(), |a, &v| a + v * v);
        return Ok((-eps * k2 * t).exp());
    }
    let s = cocycle_symbol(flow, x0, xi0, t, T::lit(RAY_TOL))?;
    Ok(s.damping(eps))
}

/// Orthonormal basis of `{v : xi . v = 0}` for a real covector.
pub fn covector_fiber<T: Real>(xi: &[T]) -> Result<Vec<Vec<T>>> {
    let n = xi.len();
    let nrm = xi.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    if nrm == T::zero() {
        return Err(Error::ZeroWaveVector);
    }
    let e: Vec<T> = xi.iter().map(|&v| v / nrm).collect();
    match n {
        2 => Ok(vec![vec![-e[1], e[0]]]),
        3 => {
            let j = (0..3)
                .min_by(|&a, &b| e[a].abs().partial_cmp(&e[b].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(0);
            let mut v1: Vec<T> = e.iter().map(|&c| -e[j] * c).collect();
            v1[j] += T::one();
            let n1 = v1.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            v1.iter_mut().for_each(|c| *c /= n1);
            let v2 = vec![e[1] * v1[2] - e[2] * v1[1], e[2] * v1[0] - e[0] * v1[2], e[0] * v1[1] - e[1] * v1[0]];
            Ok(vec![v1, v2])
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// How a Lyapunov sample was seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Uniform random point of the phase space, integrated in time.
    Random,
    /// Stagnation point with an invariant covector direction, evaluated exactly.
    FixedPoint,
}

impl SampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::Random => "random",
            SampleKind::FixedPoint => "fixed_point",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleRate<T> {
    pub index: usize,
    pub kind: SampleKind,
    pub x0: Vec<T>,
    pub xi0: Vec<T>,
    pub rate: T,
}

/// Estimated top growth rate of the weighted amplitude cocycle.
#[derive(Debug, Clone)]
pub struct LyapunovEstimate<T> {
    pub mu: T,
    pub weight_m: u32,
    pub samples: usize,
    pub horizon: T,
    pub per_sample_rates: Vec<SampleRate<T>>,
    /// Half the spread of the top decile of rates.
    pub confidence_halfwidth: T,
    /// Samples dropped after integrator failures.
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct LyapunovOptions<T> {
    pub n_samples: usize,
    pub horizon: T,
    pub weight_m: u32,
    pub seed: u64,
    /// Renormalization interval.
    pub renorm_interval: T,
    pub tol: T,
    /// Also evaluate the exact rates at hyperbolic stagnation points.
    pub fixed_point_seeds: bool,
}

impl<T: Real> LyapunovOptions<T> {
    pub fn new(n_samples: usize, horizon: T, weight_m: u32, seed: u64) -> Self {
        Self {
            n_samples,
            horizon,
            weight_m,
            seed,
            renorm_interval: T::one(),
            tol: T::lit(1e-9),
            fixed_point_seeds: true,
        }
    }
}

pub fn lyapunov_exponent<T: Real>(
    flow: &SteadyFlow<T>,
    n_samples: usize,
    horizon: T,
    m: u32,
    seed: u64,
) -> Result<LyapunovEstimate<T>> {
    lyapunov_exponent_with(flow, &LyapunovOptions::new(n_samples, horizon, m, seed))
}

pub fn lyapunov_exponent_with<T: Real>(flow: &SteadyFlow<T>, opts: &LyapunovOptions<T>) -> Result<LyapunovEstimate<T>> {
    if opts.n_samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    if !(opts.horizon > T::zero()) || !(opts.renorm_interval > T::zero()) {
        return Err(Error::InvalidArgument("horizon and renormalization interval must be positive".into()));
    }
    let n = flow.dim();
    // draw everything up front so results do not depend on scheduling
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let unif = Uniform::new(0.0f64, std::f64::consts::TAU).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let draws: Vec<(Vec<T>, Vec<T>)> = (0..opts.n_samples)
        .map(|_| {
            let x: Vec<T> = (0..n).map(|_| T::lit(unif.sample(&mut rng))).collect();
            let mut xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let nrm = xi.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            xi.iter_mut().for_each(|v| *v /= nrm);
            (x, xi.into_iter().map(T::lit).collect())
        })
        .collect();
    let results: Vec<Option<T>> = draws
        .par_iter()
        .map(|(x, xi)| sample_rate(flow, x, xi, opts).ok())
        .collect();
    let mut per = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for (i, ((x, xi), r)) in draws.into_iter().zip(results).enumerate() {
        match r {
            Some(rate) => per.push(SampleRate { index: i, kind: SampleKind::Random, x0: x, xi0: xi, rate }),
            None => skipped += 1,
        }
    }
    if opts.fixed_point_seeds {
        let mut next = opts.n_samples;
        for (x, xi, rate) in fixed_point_rates(flow, opts.weight_m)? {
            per.push(SampleRate { index: next, kind: SampleKind::FixedPoint, x0: x, xi0: xi, rate });
            next += 1;
        }
    }
    if per.is_empty() {
        return Err(Error::InvalidArgument(format!("all {skipped} samples failed to integrate")));
    }
    let mut rates: Vec<T> = per.iter().map(|s| s.rate).collect();
    rates.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mu = rates[0];
    let top = rates.len().div_ceil(10);
    let confidence_halfwidth = (rates[0] - rates[top - 1]) * T::lit(0.5);
    Ok(LyapunovEstimate {
        mu,
        weight_m: opts.weight_m,
        samples: per.len(),
        horizon: opts.horizon,
        per_sample_rates: per,
        confidence_halfwidth,
        skipped,
    })
}

/// Splits `v` into a power of two and a mantissa in `[1, 2)` without rounding.
fn pow2_exponent<T: Real>(v: T) -> i32 {
    if !(v > T::zero()) || !v.is_finite() {
        return 0;
    }
    v.as_f64().log2().floor() as i32
}

fn scale_pow2<T: Real>(vals: &mut [T], e: i32) {
    if e != 0 {
        let s = T::lit(2f64.powi(-e));
        vals.iter_mut().for_each(|v| *v *= s);
    }
}

/// Growth rate of `|b(t)| |xi(t)|^m` for one sample, maximized over the
/// initial amplitude frame of `F(xi0)`.
fn sample_rate<T: Real>(flow: &SteadyFlow<T>, x0: &[T], xi0: &[T], opts: &LyapunovOptions<T>) -> Result<T> {
    let n = flow.dim();
    let frame = covector_fiber(xi0)?;
    let ln2 = T::lit(std::f64::consts::LN_2);
    let mf = T::lit(opts.weight_m as f64);
    let intervals = (opts.horizon / opts.renorm_interval).ceil().as_f64().max(1.0) as usize;
    let mut best = T::lit(f64::NEG_INFINITY);
    for b0 in frame {
        let mut y: Vec<T> = x0.iter().chain(xi0).chain(&b0).copied().collect();
        let (mut acc_b, mut acc_xi) = (0i64, 0i64);
        let log_of = |y: &[T], acc_b: i64, acc_xi: i64| {
            let bn = y[2 * n..].iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            let xn = y[n..2 * n].iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            bn.ln() + T::int(acc_b) * ln2 + mf * (xn.ln() + T::int(acc_xi) * ln2)
        };
        let l0 = log_of(&y, 0, 0);
        let mut series: Vec<(T, T)> = Vec::with_capacity(intervals + 1);
        series.push((T::zero(), T::zero()));
        let mut ode_opts = OdeOptions::with_tol(opts.tol);
        let mut t = T::zero();
        for k in 1..=intervals {
            let t1 = (T::lit(k as f64) * opts.renorm_interval).min(opts.horizon);
            if flow.is_zero() {
                t = t1;
                series.push((t, log_of(&y, acc_b, acc_xi) - l0));
                continue;
            }
            let sol = ode::integrate_with(ray_rhs(flow, 1), t, &y, t1, &ode_opts, &[])?;
            ode_opts.h_init = Some(sol.next_h);
            y = sol.y_end;
            t = t1;
            series.push((t, log_of(&y, acc_b, acc_xi) - l0));
            let eb = pow2_exponent(y[2 * n..].iter().fold(T::zero(), |a, &v| a + v * v).sqrt());
            scale_pow2(&mut y[2 * n..], eb);
            acc_b += eb as i64;
            let ex = pow2_exponent(y[n..2 * n].iter().fold(T::zero(), |a, &v| a + v * v).sqrt());
            scale_pow2(&mut y[n..2 * n], ex);
            acc_xi += ex as i64;
            for c in y[..n].iter_mut() {
                *c -= T::two_pi() * (*c / T::two_pi()).floor();
            }
        }
        let half = opts.horizon * T::lit(0.5);
        let window: Vec<(T, T)> = series.into_iter().filter(|(s, _)| *s >= half).collect();
        best = best.max(fit_slope(&window));
    }
    Ok(best)
}

/// Least-squares slope; constant data give exactly zero.
fn fit_slope<T: Real>(pts: &[(T, T)]) -> T {
    if pts.len() < 2 {
        return T::zero();
    }
    let nf = T::lit(pts.len() as f64);
    let tbar = pts.iter().fold(T::zero(), |a, p| a + p.0) / nf;
    let v0 = pts[0].1;
    let (mut num, mut den) = (T::zero(), T::zero());
    for &(t, v) in pts {
        num += (t - tbar) * (v - v0);
        den += (t - tbar) * (t - tbar);
    }
    if den == T::zero() {
        T::zero()
    } else {
        num / den
    }
}

/// Exact rates at stagnation points `x*`: for each real eigenvector `xi` of
/// `grad u(x*)^T` with eigenvalue `kappa`, the covector direction is frozen,
/// `|xi(t)| ~ e^{-kappa t}`, and `b` grows like the top real part of the
/// spectrum of `a0(x*, xi)` on `F(xi)`.
pub fn fixed_point_rates<T: Real>(flow: &SteadyFlow<T>, m: u32) -> Result<Vec<(Vec<T>, Vec<T>, T)>> {
    let n = flow.dim();
    let mut out = Vec::new();
    for x in flow.stagnation_points(8) {
        let g = flow.gradient(&x);
        let gt = g.transpose();
        let cm = gt.map(|v| Cx::new(v, T::zero()));
        for lam in eigenvalues(&cm)? {
            if lam.im.abs() > T::lit(1e-10) * T::one().max(cabs(lam)) {
                continue;
            }
            let kappa = lam.re;
            // real null vector of gt - kappa I
            let shifted = &gt - DMatrix::identity(n, n) * kappa;
            let svd = shifted.svd(false, true);
            let Some(vt) = svd.v_t else { continue };
            let imin = (0..n)
                .min_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(0);
            let xi: Vec<T> = (0..n).map(|j| vt[(imin, j)]).collect();
            let a = amplitude_symbol(flow, &x, &xi)?;
            let basis = covector_fiber(&xi)?;
            let r = basis.len();
            let restricted = DMatrix::from_fn(r, r, |i, j| {
                let av = &a * nalgebra::DVector::from_column_slice(&basis[j]);
                basis[i].iter().zip(av.iter()).fold(T::zero(), |s, (&p, &q)| s + p * q)
            });
            let growth = eigenvalues(&restricted.map(|v| Cx::new(v, T::zero())))?
                .iter()
                .fold(T::lit(f64::NEG_INFINITY), |s, z| s.max(z.re));
            out.push((x.clone(), xi, growth - T::lit(m as f64) * kappa));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct LyapunovRow<'a> {
    sample: usize,
    kind: &'static str,
    x0: String,
    xi0: String,
    rate: f64,
    config_hash: &'a str,
    version: &'a str,
}

/// Per-sample rates as CSV; vectors are written as `;`-separated components.
pub fn write_lyapunov_csv<T: Real, W: Write>(est: &LyapunovEstimate<T>, prov: &Provenance, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let join = |v: &[T]| v.iter().map(|c| format!("{:.17e}", c.as_f64())).collect::<Vec<_>>().join(";");
    for s in &est.per_sample_rates {
        wr.serialize(LyapunovRow {
            sample: s.index,
            kind: s.kind.as_str(),
            x0: join(&s.x0),
            xi0: join(&s.xi0),
            rate: s.rate.as_f64(),
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
    use crate::flows::integrate_flow_map;
    use crate::scalar::cx;
    use std::f64::consts::PI;

    #[test]
    fn symbol_examples() {
        let shear = SteadyFlow::shear(2, 1, 1.0).unwrap();
        let a = amplitude_symbol(&shear, &[0.0, 0.0], &[0.0, 1.0]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]);
        assert!((a - want).abs().max() < 1e-15);
        let z = SteadyFlow::zero(2).unwrap();
        assert_eq!(amplitude_symbol(&z, &[1.0, 2.0], &[0.3, 0.1]).unwrap(), DMatrix::zeros(2, 2));
        assert!(matches!(amplitude_symbol(&shear, &[0.0, 0.0], &[0.0, 0.0]), Err(Error::ZeroWaveVector)));
        let c = SteadyFlow::cellular(2, 1.0).unwrap();
        let a1 = amplitude_symbol(&c, &[0.3, 1.1], &[0.2, -0.7]).unwrap();
        let a7 = amplitude_symbol(&c, &[0.3, 1.1], &[1.4, -4.9]).unwrap();
        assert!((a1 - a7).abs().max() < 1e-15);
    }

    #[test]
    fn zero_flow_is_static() {
        let z = SteadyFlow::zero(2).unwrap();
        let s0 = CocycleState::new(vec![1.0, 2.0], vec![0.6, 0.8], vec![cx(-0.8, 0.1), cx(0.6, 0.0)]);
        assert_eq!(integrate_ray(&z, &s0, 5.0, 1e-10).unwrap(), s0);
    }

    #[test]
    fn shear_ray_closed_form() {
        let f = SteadyFlow::shear(2, 1, 1.0).unwrap();
        let s0 = CocycleState::new(vec![0.0, PI / 3.0], vec![1.0, 0.0], vec![cx(0.0, 0.0), cx(1.0, 0.0)]);
        let times = [1.0, 4.0, 10.0];
        let traj = ray_trajectory(&f, &s0, &times, 1e-12).unwrap();
        for (s, t) in traj.iter().zip(times) {
            assert!((s.xi[0] - 1.0).abs() < 1e-10);
            assert!((s.xi[1] + t / 2.0).abs() < 1e-9);
            assert!((s.x[1] - PI / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invariants_along_rays() {
        let f = SteadyFlow::cellular(2, 1.0).unwrap();
        let xi0 = vec![0.3, -1.2];
        let b0 = covector_fiber(&xi0).unwrap()[0].iter().map(|&v| cx(v, 0.5 * v)).collect();
        let s0 = CocycleState::new(vec![0.4, 2.2], xi0.clone(), b0);
        let h0 = s0.hamiltonian(&f);
        let s = integrate_ray(&f, &s0, 10.0, RAY_TOL).unwrap();
        assert!((s.hamiltonian(&f) - h0).abs() < 1e-8);
        assert!(s.constraint() <= 1e-8 * s.xi_norm() * s.b_norm());
        let fm = integrate_flow_map(&f, &s0.x, 10.0, 1e-12).unwrap();
        let want = &fm.inverse_transpose_jacobian * nalgebra::DVector::from_vec(xi0);
        for i in 0..2 {
            assert!((s.xi[i] - want[i]).abs() < 1e-6 * want.norm());
        }
    }

    #[test]
    fn symbol_matrix_matches_rays_and_scaling() {
        let f = SteadyFlow::cellular(2, 1.0).unwrap();
        let x0 = [1.0, 0.2];
        let xi0 = [0.5, 0.5];
        let sym = cocycle_symbol::<f64>(&f, &x0, &xi0, 2.0, 1e-12).unwrap();
        let b0 = [cx(0.3, 0.0), cx(-0.1, 0.2)];
        let ray = integrate_ray(&f, &CocycleState::new(x0.to_vec(), xi0.to_vec(), b0.to_vec()), 2.0, 1e-12).unwrap();
        for i in 0..2 {
            let want = b0.iter().enumerate().fold(cx(0.0, 0.0), |a, (j, &b)| a + b * sym.b[(i, j)]);
            assert!((ray.b[i] - want).norm() < 1e-9);
        }
        let scaled = cocycle_symbol(&f, &x0, &[3.5, 3.5], 2.0, 1e-12).unwrap();
        assert!((scaled.b.clone() - sym.b.clone()).abs().max() < 1e-9);
        assert!((scaled.xi_sq_integral / sym.xi_sq_integral - 49.0).abs() < 1e-8);
    }

    #[test]
    fn damping_examples() {
        let z = SteadyFlow::zero(2).unwrap();
        let d = viscous_damping(&z, &[0.0, 0.0], &[3.0, 4.0], 2.0, 0.01).unwrap();
        assert_eq!(d, (-0.01f64 * 25.0 * 2.0).exp());
        let f = SteadyFlow::shear(2, 1, 1.0).unwrap();
        assert_eq!(viscous_damping(&f, &[0.0, 1.0], &[1.0, 0.0], 3.0, 0.0).unwrap(), 1.0);
        // xi = (1, -t cos x2) gives int |xi|^2 = t + t^3 cos^2(x2) / 3
        let x2 = 0.4f64;
        let want = (-0.05 * (2.0 + 8.0 * x2.cos().powi(2) / 3.0)).exp();
        let got = viscous_damping(&f, &[0.0, x2], &[1.0, 0.0], 2.0, 0.05).unwrap();
        assert!((got - want).abs() < 1e-10);
        let mut prev = 1.0;
        for t in [0.5, 1.0, 2.0] {
            let v = viscous_damping(&f, &[0.0, x2], &[1.0, 0.0], t, 0.05).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn covector_fibers() {
        for xi in [vec![0.3, -2.0], vec![1.0, 2.0, -0.5], vec![0.0, 0.0, 1.0]] {
            let b = covector_fiber(&xi).unwrap();
            assert_eq!(b.len(), xi.len() - 1);
            for (i, v) in b.iter().enumerate() {
                let dot: f64 = v.iter().zip(&xi).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-15);
                for w in &b[i..] {
                    let g: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                    let target = if std::ptr::eq(v, w) { 1.0 } else { 0.0 };
                    assert!((g - target).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn zero_flow_exponent_is_exactly_zero() {
        let z = SteadyFlow::zero(2).unwrap();
        for m in [0, 2] {
            let est = lyapunov_exponent(&z, 8, 20.0, m, 3).unwrap();
            assert_eq!(est.mu, 0.0);
            assert_eq!(est.confidence_halfwidth, 0.0);
        }
    }

    #[test]
    fn cellular_fixed_points() {
        let c = SteadyFlow::cellular(2, 1.0).unwrap();
        let rates = fixed_point_rates(&c, 0).unwrap();
        let top = rates.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
        assert!((top - 1.0).abs() < 1e-10);
        let shear = SteadyFlow::shear(2, 1, 1.0).unwrap();
        assert!(fixed_point_rates(&shear, 0).unwrap().is_empty());
    }

    #[test]
    fn estimate_is_deterministic_and_renormalization_invariant() {
        let c = SteadyFlow::cellular(2, 1.0).unwrap();
        let mut o = LyapunovOptions::<f64>::new(6, 20.0, 0, 11);
        o.fixed_point_seeds = false;
        let a: LyapunovEstimate<f64> = lyapunov_exponent_with(&c, &o).unwrap();
        let b = lyapunov_exponent_with(&c, &o).unwrap();
        assert_eq!(a.mu, b.mu);
        o.renorm_interval = 0.5;
        let h = lyapunov_exponent_with(&c, &o).unwrap();
        assert!((a.mu - h.mu).abs() <= 0.02, "{} {}", a.mu, h.mu);
        let mut csv = Vec::new();
        write_lyapunov_csv(&a, &Provenance::unhashed(), &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("sample,kind,x0,xi0,rate,config_hash,version"));
        assert_eq!(text.lines().count(), 7);
    }
}
