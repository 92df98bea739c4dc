//! Steady divergence-free base flows on the torus.
//!
//! Catalog flows have closed forms for `u` and `grad u`; custom flows are
//! evaluated from their (finitely many) Fourier coefficients. Either way the
//! gradient is analytic.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode;
use crate::scalar::{cabs, cis, cx, czero, Cx, Real};

/// Largest `|t|` accepted by [`integrate_flow_map`].
pub const DEFAULT_T_MAX: f64 = 50.0;

/// Catalog selector.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind<T> {
    Zero,
    /// `u = (A sin(m x2), 0, ...)`.
    Shear { m: i32, amplitude: T },
    /// Same field as `Shear`; kept as a separate name for provenance.
    Kolmogorov { m: i32, amplitude: T },
    /// `u = A (sin x1 cos x2, -cos x1 sin x2, 0)`.
    Cellular { amplitude: T },
    Custom,
}

/// One Fourier coefficient `u(k)` of a base flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCoeff<T> {
    pub k: Vec<i32>,
    pub u: Vec<Cx<T>>,
}

/// Steady divergence-free vector field.
#[derive(Debug, Clone)]
pub struct SteadyFlow<T> {
    name: String,
    dim: usize,
    kind: FlowKind<T>,
    coeffs: Vec<FlowCoeff<T>>,
}

/// JSON record of a custom coefficient: `{ "k": [..], "re": [..], "im": [..] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffRecord {
    pub k: Vec<i32>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

impl<T: Real> SteadyFlow<T> {
    pub fn zero(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { name: "zero".into(), dim, kind: FlowKind::Zero, coeffs: Vec::new() })
    }

    pub fn shear(dim: usize, m: i32, amplitude: T) -> Result<Self> {
        Self::shear_like(dim, m, amplitude, false)
    }

    pub fn kolmogorov(dim: usize, m: i32, amplitude: T) -> Result<Self> {
        Self::shear_like(dim, m, amplitude, true)
    }

    fn shear_like(dim: usize, m: i32, amplitude: T, kolmogorov: bool) -> Result<Self> {
        check_dim(dim)?;
        if m == 0 {
            return Err(Error::InvalidArgument("shear wavenumber must be nonzero".into()));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidArgument("amplitude must be finite".into()));
        }
        let half = amplitude / T::lit(2.0);
        let mut coeffs = Vec::new();
        for (sign, im) in [(1, -half), (-1, half)] {
            let mut k = vec![0; dim];
            k[1] = sign * m;
            let mut u = vec![czero(); dim];
            u[0] = cx(T::zero(), im);
            coeffs.push(FlowCoeff { k, u });
        }
        let (name, kind) = if kolmogorov {
            (format!("kolmogorov({m},{amplitude})"), FlowKind::Kolmogorov { m, amplitude })
        } else {
            (format!("shear({m},{amplitude})"), FlowKind::Shear { m, amplitude })
        };
        Ok(Self { name, dim, kind, coeffs })
    }

    pub fn cellular(dim: usize, amplitude: T) -> Result<Self> {
        check_dim(dim)?;
        if !amplitude.is_finite() {
            return Err(Error::InvalidArgument("amplitude must be finite".into()));
        }
        let q = amplitude / T::lit(4.0);
        let table = [([1, 1], -q, q), ([-1, -1], q, -q), ([1, -1], -q, -q), ([-1, 1], q, q)];
        let coeffs = table
            .iter()
            .map(|(kk, a, b)| {
                let mut k = vec![0; dim];
                k[0] = kk[0];
                k[1] = kk[1];
                let mut u = vec![czero(); dim];
                u[0] = cx(T::zero(), *a);
                u[1] = cx(T::zero(), *b);
                FlowCoeff { k, u }
            })
            .collect();
        Ok(Self { name: format!("cellular({amplitude})"), dim, kind: FlowKind::Cellular { amplitude }, coeffs })
    }

    /// Builds a flow from explicit coefficients, rejecting fields that are not
    /// divergence-free or not real-valued.
    pub fn custom(name: impl Into<String>, dim: usize, coeffs: Vec<FlowCoeff<T>>) -> Result<Self> {
        check_dim(dim)?;
        let tol = T::lit(1e-12);
        for c in &coeffs {
            if c.k.len() != dim || c.u.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.k.len().max(c.u.len()) });
            }
            if c.u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite coefficient at {:?}", c.k)));
            }
            let div = c.k.iter().zip(&c.u).fold(czero::<T>(), |acc, (&kc, &z)| acc + z * T::int(kc as i64));
            let scale = c.u.iter().fold(T::one(), |acc, &z| acc.max(cabs(z)))
                * T::int(c.k.iter().map(|&v| (v as i64).abs()).sum::<i64>().max(1));
            if cabs(div) > tol * scale {
                return Err(Error::NotDivergenceFree { mode: c.k.clone(), residual: cabs(div).as_f64() });
            }
            let neg: Vec<i32> = c.k.iter().map(|v| -v).collect();
            let partner = coeffs.iter().find(|d| d.k == neg);
            let ok = match partner {
                None => false,
                Some(d) => d.u.iter().zip(&c.u).all(|(a, b)| cabs(*a - b.conj()) <= tol * scale),
            };
            if !ok {
                return Err(Error::RealitySymmetry { mode: c.k.clone() });
            }
        }
        Ok(Self { name: name.into(), dim, kind: FlowKind::Custom, coeffs })
    }

    /// Reads custom coefficients from a JSON array of [`CoeffRecord`]s.
    pub fn from_json_str(name: &str, text: &str) -> Result<Self> {
        let recs: Vec<CoeffRecord> =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("custom flow JSON: {e}")))?;
        let dim = recs.first().map(|r| r.k.len()).unwrap_or(2);
        let coeffs = recs
            .into_iter()
            .map(|r| {
                if r.re.len() != r.k.len() || r.im.len() != r.k.len() {
                    return Err(Error::DimensionMismatch { expected: r.k.len(), got: r.re.len().min(r.im.len()) });
                }
                let u = r.re.iter().zip(&r.im).map(|(&a, &b)| cx(T::lit(a), T::lit(b))).collect();
                Ok(FlowCoeff { k: r.k, u })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::custom(name, dim, coeffs)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let name = format!("custom({})", path.file_name().and_then(|s| s.to_str()).unwrap_or("?"));
        Self::from_json_str(&name, &text)
    }

    pub fn to_records(&self) -> Vec<CoeffRecord> {
        self.coeffs
            .iter()
            .map(|c| CoeffRecord {
                k: c.k.clone(),
                re: c.u.iter().map(|z| z.re.as_f64()).collect(),
                im: c.u.iter().map(|z| z.im.as_f64()).collect(),
            })
            .collect()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FlowKind<T> {
        &self.kind
    }

    pub fn fourier_coeffs(&self) -> &[FlowCoeff<T>] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Evaluates `u(x)` and, optionally, `grad u(x)` stored row-major
    /// (`grad[i * n + j] = d u_i / d x_j`).
    pub fn eval(&self, x: &[T], u: &mut [T], grad: Option<&mut [T]>) {
        let n = self.dim;
        let two_pi = T::two_pi();
        u[..n].fill(T::zero());
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g[..n * n].fill(T::zero());
        }
        match &self.kind {
            FlowKind::Zero => {}
            FlowKind::Shear { m, amplitude } | FlowKind::Kolmogorov { m, amplitude } => {
                let mm = T::int(*m as i64);
                let arg = (mm * x[1]) % two_pi;
                u[0] = *amplitude * arg.sin();
                if let Some(g) = grad {
                    g[1] = *amplitude * mm * arg.cos();
                }
            }
            FlowKind::Cellular { amplitude } => {
                let a = *amplitude;
                let (s1, c1) = ((x[0] % two_pi).sin(), (x[0] % two_pi).cos());
                let (s2, c2) = ((x[1] % two_pi).sin(), (x[1] % two_pi).cos());
                u[0] = a * s1 * c2;
                u[1] = -a * c1 * s2;
                if let Some(g) = grad {
                    g[0] = a * c1 * c2;
                    g[1] = -a * s1 * s2;
                    g[n] = a * s1 * s2;
                    g[n + 1] = -a * c1 * c2;
                }
            }
            FlowKind::Custom => self.eval_fourier(x, u, grad),
        }
    }

    /// Evaluates `u` and `grad u` from the Fourier coefficients alone.
    pub fn eval_fourier(&self, x: &[T], u: &mut [T], grad: Option<&mut [T]>) {
        let n = self.dim;
        let two_pi = T::two_pi();
        u[..n].fill(T::zero());
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g[..n * n].fill(T::zero());
        }
        for c in &self.coeffs {
            let phase = c.k.iter().zip(x).fold(T::zero(), |acc, (&kc, &xc)| acc + T::int(kc as i64) * (xc % two_pi));
            let e = cis(phase);
            for i in 0..n {
                let v = c.u[i] * e;
                u[i] += v.re;
                if let Some(g) = grad.as_deref_mut() {
                    // d/dx_j of v e^{ikx} = i k_j v e^{ikx}
                    for j in 0..n {
                        g[i * n + j] -= T::int(c.k[j] as i64) * v.im;
                    }
                }
            }
        }
    }

    pub fn velocity(&self, x: &[T]) -> Vec<T> {
        let mut u = vec![T::zero(); self.dim];
        self.eval(x, &mut u, None);
        u
    }

    pub fn gradient(&self, x: &[T]) -> DMatrix<T> {
        let n = self.dim;
        let mut u = vec![T::zero(); n];
        let mut g = vec![T::zero(); n * n];
        self.eval(x, &mut u, Some(&mut g));
        DMatrix::from_row_slice(n, n, &g)
    }

    /// Hyperbolic-or-elliptic stagnation points with nonsingular gradient,
    /// found by Newton iteration from a `seeds^n` grid and deduplicated on the torus.
    pub fn stagnation_points(&self, seeds: usize) -> Vec<Vec<T>> {
        let n = self.dim;
        if self.is_zero() {
            return Vec::new();
        }
        let two_pi = T::two_pi();
        let mut found: Vec<Vec<T>> = Vec::new();
        let total = seeds.pow(n as u32);
        let mut u = vec![T::zero(); n];
        let mut g = vec![T::zero(); n * n];
        for s in 0..total {
            let mut idx = s;
            let mut x: Vec<T> = (0..n)
                .map(|_| {
                    let i = idx % seeds;
                    idx /= seeds;
                    two_pi * (T::lit(i as f64) + T::lit(0.5)) / T::lit(seeds as f64)
                })
                .collect();
            let mut converged = false;
            for _ in 0..60 {
                self.eval(&x, &mut u, Some(&mut g));
                let res = u.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
                if res < T::lit(1e-14) {
                    converged = true;
                    break;
                }
                let jac = DMatrix::from_row_slice(n, n, &g);
                let Some(step) = jac.lu().solve(&nalgebra::DVector::from_column_slice(&u)) else { break };
                for i in 0..n {
                    x[i] -= step[i];
                }
            }
            if !converged {
                continue;
            }
            self.eval(&x, &mut u, Some(&mut g));
            let jac = DMatrix::from_row_slice(n, n, &g);
            if jac.determinant().abs() < T::lit(1e-8) {
                continue;
            }
            for c in x.iter_mut() {
                *c = c.rem_euclid_t(two_pi);
            }
            let dup = found.iter().any(|y| {
                y.iter().zip(&x).all(|(&a, &b)| {
                    let d = (a - b).abs();
                    d.min(two_pi - d) < T::lit(1e-8)
                })
            });
            if !dup {
                found.push(x);
            }
        }
        found.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        found
    }
}

trait RemEuclid {
    fn rem_euclid_t(self, m: Self) -> Self;
}

impl<T: Real> RemEuclid for T {
    fn rem_euclid_t(self, m: T) -> T {
        let r = self % m;
        if r < T::zero() {
            r + m
        } else {
            r
        }
    }
}

/// Flow map and its Jacobian at time `t`.
#[derive(Debug, Clone)]
pub struct FlowMapResult<T: Real> {
    /// Unwrapped position `phi_t(x0)`.
    pub x_t: Vec<T>,
    pub jacobian: DMatrix<T>,
    pub inverse_transpose_jacobian: DMatrix<T>,
    pub t: T,
}

/// Exact inverse of a 2x2 or 3x3 matrix via the adjugate.
pub fn small_inverse<T: Real>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = m.nrows();
    let det = m.determinant();
    if det == T::zero() {
        return None;
    }
    let adj = match n {
        2 => DMatrix::from_row_slice(2, 2, &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]]),
        3 => DMatrix::from_fn(3, 3, |i, j| {
            // cofactor of (j, i)
            let r: Vec<usize> = (0..3).filter(|&r| r != j).collect();
            let c: Vec<usize> = (0..3).filter(|&c| c != i).collect();
            let minor = m[(r[0], c[0])] * m[(r[1], c[1])] - m[(r[0], c[1])] * m[(r[1], c[0])];
            if (i + j) % 2 == 0 {
                minor
            } else {
                -minor
            }
        }),
        _ => return m.clone().try_inverse(),
    };
    Some(adj / det)
}

/// Integrates `x' = u(x)` jointly with the variational equation `J' = grad u(x) J`.
pub fn integrate_flow_map<T: Real>(flow: &SteadyFlow<T>, x0: &[T], t: T, tol: T) -> Result<FlowMapResult<T>> {
    integrate_flow_map_with(flow, x0, t, tol, T::lit(DEFAULT_T_MAX))
}

pub fn integrate_flow_map_with<T: Real>(
    flow: &SteadyFlow<T>,
    x0: &[T],
    t: T,
    tol: T,
    t_max: T,
) -> Result<FlowMapResult<T>> {
    let n = flow.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if t.abs() > t_max {
        return Err(Error::HorizonTooLong { t: t.as_f64(), t_max: t_max.as_f64() });
    }
    let mut y0 = x0.to_vec();
    for i in 0..n {
        for j in 0..n {
            y0.push(if i == j { T::one() } else { T::zero() });
        }
    }
    let mut g = vec![T::zero(); n * n];
    let rhs = |_: T, y: &[T], dy: &mut [T]| {
        flow.eval(&y[..n], &mut dy[..n], Some(&mut g));
        let jm = &y[n..];
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for l in 0..n {
                    acc += g[i * n + l] * jm[l * n + j];
                }
                dy[n + i * n + j] = acc;
            }
        }
    };
    let sol = ode::integrate(rhs, T::zero(), &y0, t, tol, &[])?;
    let jacobian = DMatrix::from_row_slice(n, n, &sol.y_end[n..]);
    let inv = small_inverse(&jacobian).ok_or_else(|| Error::InvalidArgument("singular flow Jacobian".into()))?;
    Ok(FlowMapResult { x_t: sol.y_end[..n].to_vec(), jacobian, inverse_transpose_jacobian: inv.transpose(), t })
}

/// Maps many points at once (position only).
pub fn flow_points<T: Real>(flow: &SteadyFlow<T>, points: &[Vec<T>], t: T, tol: T) -> Result<Vec<Vec<T>>> {
    use rayon::prelude::*;
    let n = flow.dim();
    if flow.is_zero() || t == T::zero() {
        return Ok(points.to_vec());
    }
    points
        .par_iter()
        .map(|x| {
            let rhs = |_: T, y: &[T], dy: &mut [T]| flow.eval(y, dy, None);
            let _ = n;
            ode::integrate(rhs, T::zero(), x, t, tol, &[]).map(|s| s.y_end)
        })
        .collect()
}
