//! Complex Schur decomposition by Hessenberg reduction and implicitly shifted
//! single-shift QR, plus eigenvectors by back-substitution.
//!
//! nalgebra's Schur works in the real double-shift setting for real input and
//! gives no control over deflation, so the complex iteration is written out
//! here. Cost is O(n^3); intended for blocks up to a few thousand.

use crate::error::{Error, Result};
use crate::linalg::{matrix_hash, CMat};
use crate::scalar::{cabs, cabs1, csqrt, czero, Cx, Real};

/// `A = Z T Z^*` with `T` upper triangular and `Z` unitary.
#[derive(Debug, Clone)]
pub struct Schur<T: Real> {
    pub t: CMat<T>,
    pub z: CMat<T>,
}

/// Eigenvalues with unit-norm right eigenvectors (columns), sorted by
/// decreasing real part, ties by increasing imaginary part.
#[derive(Debug, Clone)]
pub struct Eig<T: Real> {
    pub values: Vec<Cx<T>>,
    pub vectors: CMat<T>,
}

/// Householder reduction to upper Hessenberg form: returns `(H, Q)` with `A = Q H Q^*`.
pub fn hessenberg<T: Real>(a: &CMat<T>) -> (CMat<T>, CMat<T>) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = CMat::<T>::identity(n, n);
    if n < 3 {
        return (h, q);
    }
    let mut v = vec![czero::<T>(); n];
    for k in 0..n - 2 {
        let len = n - k - 1;
        let alpha_norm = (k + 1..n).fold(T::zero(), |acc, i| acc + h[(i, k)].norm_sqr()).sqrt();
        if alpha_norm == T::zero() {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if cabs(x0) == T::zero() { Cx::new(T::one(), T::zero()) } else { x0 / cabs(x0) };
        let alpha = -phase * alpha_norm;
        for (j, i) in (k + 1..n).enumerate() {
            v[j] = h[(i, k)];
        }
        v[0] -= alpha;
        let vn = v[..len].iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt();
        if vn == T::zero() {
            continue;
        }
        for z in v[..len].iter_mut() {
            *z /= vn;
        }
        let two = T::lit(2.0);
        // H <- (I - 2vv*) H on rows k+1..n
        for j in 0..n {
            let mut s = czero::<T>();
            for (r, i) in (k + 1..n).enumerate() {
                s += v[r].conj() * h[(i, j)];
            }
            s *= two;
            for (r, i) in (k + 1..n).enumerate() {
                let d = v[r] * s;
                h[(i, j)] -= d;
            }
        }
        // H <- H (I - 2vv*) and Q <- Q (I - 2vv*) on columns k+1..n
        for m in [&mut h, &mut q] {
            for i in 0..n {
                let mut s = czero::<T>();
                for (r, j) in (k + 1..n).enumerate() {
                    s += m[(i, j)] * v[r];
                }
                s *= two;
                for (r, j) in (k + 1..n).enumerate() {
                    let d = s * v[r].conj();
                    m[(i, j)] -= d;
                }
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = czero();
        }
    }
    (h, q)
}

/// Givens rotation `G = [[c, s], [-conj(s), c]]` with `G [x; y] = [r; 0]`.
#[inline]
fn givens<T: Real>(x: Cx<T>, y: Cx<T>) -> (T, Cx<T>) {
    let ax = cabs(x);
    let ay = cabs(y);
    if ay == T::zero() {
        return (T::one(), czero());
    }
    if ax == T::zero() {
        return (T::zero(), Cx::new(T::one(), T::zero()));
    }
    let big = ax.max(ay);
    let rho = big * ((ax / big) * (ax / big) + (ay / big) * (ay / big)).sqrt();
    let c = ax / rho;
    let s = (x / ax) * y.conj() / rho;
    (c, s)
}

/// Complex Schur form.
pub fn schur<T: Real>(a: &CMat<T>) -> Result<Schur<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenNonConvergence { hash: matrix_hash(a) });
    }
    let (mut h, mut z) = hessenberg(a);
    if n <= 1 {
        return Ok(Schur { t: h, z });
    }
    let eps = T::eps();
    let anorm = h.iter().fold(T::zero(), |acc, &v| acc.max(cabs1(v)));
    let small = T::tiny() / eps;
    let mut ihi = n - 1;
    let mut its = 0usize;
    let max_its = 60 * n.max(10);
    let mut total = 0usize;
    while ihi > 0 {
        // locate a negligible subdiagonal
        let mut l = ihi;
        while l > 0 {
            let sub = cabs1(h[(l, l - 1)]);
            let mut diag = cabs1(h[(l - 1, l - 1)]) + cabs1(h[(l, l)]);
            if diag == T::zero() {
                diag = anorm;
            }
            if sub <= eps * diag || sub <= small {
                h[(l, l - 1)] = czero();
                break;
            }
            l -= 1;
        }
        if l == ihi {
            ihi -= 1;
            its = 0;
            continue;
        }
        its += 1;
        total += 1;
        if its > 120 || total > max_its {
            return Err(Error::EigenNonConvergence { hash: matrix_hash(a) });
        }
        let d = h[(ihi, ihi)];
        let mu = if its.is_multiple_of(11) {
            d + Cx::new(T::lit(0.75) * cabs1(h[(ihi, ihi - 1)]), T::zero())
        } else if its.is_multiple_of(17) {
            h[(l, l)] + Cx::new(T::lit(0.75) * cabs1(h[(l + 1, l)]), T::zero())
        } else {
            let aa = h[(ihi - 1, ihi - 1)];
            let bc = h[(ihi - 1, ihi)] * h[(ihi, ihi - 1)];
            let p = (aa - d) * T::lit(0.5);
            let mut disc = csqrt(p * p + bc);
            if (p.conj() * disc).re < T::zero() {
                disc = -disc;
            }
            let den = p + disc;
            if cabs(den) == T::zero() {
                d
            } else {
                d - bc / den
            }
        };
        for k in l..ihi {
            let (x, y) = if k == l { (h[(l, l)] - mu, h[(l + 1, l)]) } else { (h[(k, k - 1)], h[(k + 1, k - 1)]) };
            let (c, s) = givens(x, y);
            let c = Cx::new(c, T::zero());
            let jstart = if k == l { k } else { k - 1 };
            for j in jstart..n {
                let a0 = h[(k, j)];
                let b0 = h[(k + 1, j)];
                h[(k, j)] = c * a0 + s * b0;
                h[(k + 1, j)] = c * b0 - s.conj() * a0;
            }
            let iend = (k + 2).min(ihi);
            for i in 0..=iend {
                let a0 = h[(i, k)];
                let b0 = h[(i, k + 1)];
                h[(i, k)] = a0 * c + b0 * s.conj();
                h[(i, k + 1)] = b0 * c - a0 * s;
            }
            for i in 0..n {
                let a0 = z[(i, k)];
                let b0 = z[(i, k + 1)];
                z[(i, k)] = a0 * c + b0 * s.conj();
                z[(i, k + 1)] = b0 * c - a0 * s;
            }
            if k > l {
                h[(k + 1, k - 1)] = czero();
            }
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            h[(i, j)] = czero();
        }
    }
    Ok(Schur { t: h, z })
}

fn order<T: Real>(a: &Cx<T>, b: &Cx<T>) -> std::cmp::Ordering {
    b.re.partial_cmp(&a.re)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
}

/// Eigenvalues only, sorted.
pub fn eigenvalues<T: Real>(a: &CMat<T>) -> Result<Vec<Cx<T>>> {
    let s = schur(a)?;
    let mut v: Vec<Cx<T>> = (0..a.nrows()).map(|i| s.t[(i, i)]).collect();
    v.sort_by(order);
    Ok(v)
}

/// Eigenvalues and unit right eigenvectors, sorted.
pub fn eig<T: Real>(a: &CMat<T>) -> Result<Eig<T>> {
    let n = a.nrows();
    let s = schur(a)?;
    let t = &s.t;
    let tnorm = t.iter().fold(T::zero(), |acc, &v| acc.max(cabs1(v)));
    let smin = (T::eps() * tnorm).max(T::tiny() / T::eps());
    let mut y = CMat::<T>::zeros(n, n);
    let mut w = vec![czero::<T>(); n];
    for k in 0..n {
        let lam = t[(k, k)];
        w[..=k].fill(czero());
        w[k] = Cx::new(T::one(), T::zero());
        for j in (0..k).rev() {
            let mut acc = czero::<T>();
            for i in j + 1..=k {
                acc += t[(j, i)] * w[i];
            }
            let mut den = t[(j, j)] - lam;
            if cabs1(den) < smin {
                den = Cx::new(smin, T::zero());
            }
            w[j] = -acc / den;
            // rescale to keep the recursion bounded
            let big = cabs1(w[j]);
            if big > T::lit(1e100) {
                for v in w[j..=k].iter_mut() {
                    *v /= big;
                }
            }
        }
        for i in 0..n {
            let mut acc = czero::<T>();
            for j in 0..=k {
                acc += s.z[(i, j)] * w[j];
            }
            y[(i, k)] = acc;
        }
        let nrm = y.column(k).iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt();
        if nrm > T::zero() {
            for i in 0..n {
                y[(i, k)] /= nrm;
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| order(&t[(i, i)], &t[(j, j)]));
    let values = idx.iter().map(|&i| t[(i, i)]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| y[(r, idx[c])]);
    Ok(Eig { values, vectors })
}
