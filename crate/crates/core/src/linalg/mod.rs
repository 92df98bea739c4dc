//! Dense complex linear algebra used by the spectral modules.

mod block;
mod eigen;
mod expm;

pub use block::{BlockMatrix, BlockPartition};
pub use eigen::{eig, eigenvalues, hessenberg, schur, Eig, Schur};
pub use expm::expm;

use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;

use crate::scalar::{cabs, czero, Cx, Real};

/// Dense complex matrix.
pub type CMat<T> = DMatrix<Cx<T>>;

/// Operator 2-norm (largest singular value).
pub fn norm2<T: Real>(a: &CMat<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    if a.iter().all(|z| *z == czero()) {
        return T::zero();
    }
    let svd = nalgebra::SVD::try_new(a.clone(), false, false, T::eps(), 10_000);
    match svd {
        Some(s) => s.singular_values.max(),
        // falls back on the Frobenius bound, which is never smaller
        None => frobenius(a),
    }
}

pub fn frobenius<T: Real>(a: &CMat<T>) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

/// Induced 1-norm (max column sum).
pub fn norm1<T: Real>(a: &CMat<T>) -> T {
    (0..a.ncols())
        .map(|j| a.column(j).iter().fold(T::zero(), |acc, &z| acc + cabs(z)))
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

pub fn max_abs<T: Real>(a: &CMat<T>) -> T {
    a.iter().fold(T::zero(), |acc, &z| acc.max(cabs(z)))
}

/// Stable hash of a matrix' bit pattern; used to tag failures.
pub fn matrix_hash<T: Real>(a: &CMat<T>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    a.nrows().hash(&mut h);
    a.ncols().hash(&mut h);
    for z in a.iter() {
        z.re.as_f64().to_bits().hash(&mut h);
        z.im.as_f64().to_bits().hash(&mut h);
    }
    h.finish()
}

/// Lifts a real matrix to a complex one.
pub fn complexify<T: Real>(a: &DMatrix<T>) -> CMat<T> {
    a.map(|v| Cx::new(v, T::zero()))
}

/// Euclidean norm of a complex vector slice.
pub fn vec_norm<T: Real>(v: &[Cx<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}
