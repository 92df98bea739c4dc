//! Matrix exponential by Pade(13) scaling and squaring.

use crate::error::{Error, Result};
use crate::linalg::{norm1, CMat};
use crate::scalar::{cabs, Cx, Real};

const THETA_13: f64 = 5.371920351148152;

const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Upper bound on `ln ||e^{tA}||_inf` from the infinity log-norm
/// `max_i (Re a_ii + sum_{j != i} |a_ij|)`.
pub(crate) fn log_growth_bound<T: Real>(a: &CMat<T>, t: T) -> T {
    let n = a.nrows();
    let mut best = T::lit(f64::NEG_INFINITY);
    for i in 0..n {
        let mut s = a[(i, i)].re;
        for j in 0..n {
            if j != i {
                s += cabs(a[(i, j)]);
            }
        }
        best = best.max(s);
    }
    if n == 0 {
        T::zero()
    } else {
        best * t
    }
}

/// `e^{tA}` for `t >= 0`.
///
/// A log-norm precheck rejects cases whose result could overflow; the error
/// reports how many equal time slices would keep each factor representable.
pub fn expm<T: Real>(a: &CMat<T>, t: T) -> Result<CMat<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::InvalidArgument("propagation time must be finite and non-negative".into()));
    }
    if t == T::zero() || n == 0 {
        return Ok(CMat::identity(n, n));
    }
    let budget = T::ln_max() * T::lit(0.5);
    let growth = log_growth_bound(a, t);
    if !(growth <= budget) {
        let splits = (growth / budget).ceil().as_f64().max(2.0) as usize;
        return Err(Error::ExponentialOverflow { norm_t: growth.as_f64(), required_splits: splits });
    }
    let at = a * Cx::new(t, T::zero());
    let nrm = norm1(&at);
    let s = if nrm > T::lit(THETA_13) { (nrm / T::lit(THETA_13)).log2().ceil().as_f64().max(0.0) as i32 } else { 0 };
    let scale = Cx::new(T::lit(2f64.powi(-s)), T::zero());
    let x = at * scale;
    let b: Vec<Cx<T>> = B13.iter().map(|&v| Cx::new(T::lit(v), T::zero())).collect();
    let id = CMat::<T>::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let inner_u = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9]);
    let u = &x * (inner_u + &x6 * b[7] + &x4 * b[5] + &x2 * b[3] + &id * b[1]);
    let inner_v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8]);
    let v = inner_v + &x6 * b[6] + &x4 * b[4] + &x2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(Error::NearSingularShift { distance: 0.0 })?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::ExponentialOverflow { norm_t: nrm.as_f64(), required_splits: 2 });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig, max_abs};
    use crate::scalar::cx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_time_and_diagonal() {
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![cx(-1.0, 0.0), cx(0.5, 2.0)]));
        assert_eq!(expm(&d, 0.0).unwrap(), CMat::identity(2, 2));
        let e = expm(&d, 3.0).unwrap();
        assert!((e[(0, 0)] - cx((-3.0f64).exp(), 0.0)).norm() < 1e-15);
        let want = cx(1.5f64.exp() * 6f64.cos(), 1.5f64.exp() * 6f64.sin());
        assert!((e[(1, 1)] - want).norm() < 1e-12 * want.norm());
        assert_eq!(e[(0, 1)], cx(0.0, 0.0));
    }

    #[test]
    fn rotation_generator() {
        let a = CMat::from_row_slice(2, 2, &[cx(0.0, 0.0), cx(-1.0, 0.0), cx(1.0, 0.0), cx(0.0, 0.0)]);
        let e = expm(&a, 10.0).unwrap();
        assert!((e[(0, 0)].re - 10f64.cos()).abs() < 1e-13);
        assert!((e[(1, 0)].re - 10f64.sin()).abs() < 1e-13);
    }

    #[test]
    fn nilpotent_is_polynomial() {
        let a = CMat::from_row_slice(3, 3, &[0.0f64, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0].map(|v| cx(v, 0.0)));
        let e = expm(&a, 4.0).unwrap();
        assert!((e[(0, 2)].re - 8.0).abs() < 1e-12);
        assert!((e[(0, 1)].re - 4.0).abs() < 1e-13);
    }

    #[test]
    fn semigroup_and_spectral_mapping() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = CMat::from_fn(12, 12, |_, _| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let e1 = expm(&a, 0.7).unwrap();
        let e2 = expm(&a, 1.3).unwrap();
        let e3 = expm(&a, 2.0).unwrap();
        assert!(max_abs(&(&e1 * &e2 - &e3)) < 1e-10 * max_abs(&e3));
        let la = eig(&a).unwrap().values;
        let le = eig(&e3).unwrap().values;
        for l in la {
            let target = crate::scalar::cexp(l * 2.0);
            let best = le.iter().map(|z| (*z - target).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9 * target.norm().max(1.0));
        }
    }

    #[test]
    fn overflow_is_reported() {
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![cx(10.0, 0.0)]));
        match expm(&d, 100.0) {
            Err(Error::ExponentialOverflow { required_splits, .. }) => assert!(required_splits >= 2),
            other => panic!("{other:?}"),
        }
        // strongly dissipative is fine
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![cx(-1e4, 0.0)]));
        assert_eq!(expm(&d, 1.0).unwrap()[(0, 0)].re, 0.0);
    }
}
