//! Adaptive Dormand-Prince 5(4) integrator with dense output.
//!
//! Used for the flow map, its variational equation, and the bicharacteristic
//! and amplitude systems. The right-hand sides here are smooth and non-stiff.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Step control parameters.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<T>,
    /// Largest admissible step.
    pub h_max: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> OdeOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { rtol: tol, atol: tol, h_init: None, h_max: None, max_steps: 2_000_000 }
    }
}

/// Result of an integration.
#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub y_end: Vec<T>,
    /// States at the requested sample times, in order.
    pub samples: Vec<Vec<T>>,
    pub steps: usize,
    pub rejected: usize,
    /// Step size proposed for a continuation.
    pub next_h: T,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Hairer's continuous extension of order 4.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Coeffs<T> {
    c: [T; 4],
    a: [[T; 6]; 6],
    e: [T; 7],
    d: [T; 7],
}

impl<T: Real> Coeffs<T> {
    fn new() -> Self {
        let l = T::lit;
        let z = T::zero();
        Self {
            c: [l(C2), l(C3), l(C4), l(C5)],
            a: [
                [l(A21), z, z, z, z, z],
                [l(A31), l(A32), z, z, z, z],
                [l(A41), l(A42), l(A43), z, z, z],
                [l(A51), l(A52), l(A53), l(A54), z, z],
                [l(A61), l(A62), l(A63), l(A64), l(A65), z],
                [l(A71), z, l(A73), l(A74), l(A75), l(A76)],
            ],
            e: [l(E1), z, l(E3), l(E4), l(E5), l(E6), l(E7)],
            d: [l(D1), z, l(D3), l(D4), l(D5), l(D6), l(D7)],
        }
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction) with
/// `rtol = atol = tol`, reporting the state at each of `sample_times`.
pub fn integrate<T, F>(f: F, t0: T, y0: &[T], t1: T, tol: T, sample_times: &[T]) -> Result<Solution<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]),
{
    integrate_with(f, t0, y0, t1, &OdeOptions::with_tol(tol), sample_times)
}

pub fn integrate_with<T, F>(
    mut f: F,
    t0: T,
    y0: &[T],
    t1: T,
    opts: &OdeOptions<T>,
    sample_times: &[T],
) -> Result<Solution<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]),
{
    let n = y0.len();
    let cf = Coeffs::<T>::new();
    let dir = if t1 >= t0 { T::one() } else { -T::one() };
    let span = (t1 - t0).abs();
    let mut y = y0.to_vec();
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] == t0 {
        samples.push(y.clone());
        next_sample += 1;
    }
    if span == T::zero() {
        if next_sample < sample_times.len() {
            return Err(Error::InvalidArgument("sample time outside integration span".into()));
        }
        return Ok(Solution { y_end: y, samples, steps: 0, rejected: 0, next_h: T::zero() });
    }

    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    let mut tmp = vec![T::zero(); n];
    let mut ynew = vec![T::zero(); n];
    let mut t = t0;
    f(t, &y, &mut k[0]);

    let scale = |a: T, b: T| opts.atol + opts.rtol * if a.abs() > b.abs() { a.abs() } else { b.abs() };
    let h_max = opts.h_max.unwrap_or(span);
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => initial_step(&mut f, t, &y, &k[0], dir, &scale),
    };
    if h > h_max {
        h = h_max;
    }

    let fifth = T::lit(0.2);
    let safety = T::lit(0.9);
    let fac_min = T::lit(0.2);
    let fac_max = T::lit(10.0);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;

    loop {
        if steps + rejected >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        let remaining = (t1 - t) * dir;
        if remaining <= T::zero() {
            break;
        }
        let last = h >= remaining;
        let hs = if last { remaining } else { h };
        if hs <= T::lit(16.0) * T::eps() * t.abs().max(T::one()) {
            return Err(Error::StepUnderflow { t_reached: t.as_f64() });
        }
        let hd = hs * dir;

        for s in 1..7 {
            for i in 0..n {
                let mut acc = T::zero();
                for j in 0..s {
                    let a = cf.a[s - 1][j];
                    if a != T::zero() {
                        acc += a * k[j][i];
                    }
                }
                tmp[i] = y[i] + hd * acc;
            }
            let ts = if s < 5 { t + cf.c[s - 1] * hd } else { t + hd };
            if s == 6 {
                ynew.copy_from_slice(&tmp);
            }
            let (_, tail) = k.split_at_mut(s);
            f(ts, &tmp, &mut tail[0]);
        }

        let mut err = T::zero();
        for i in 0..n {
            let mut e = T::zero();
            for j in 0..7 {
                if cf.e[j] != T::zero() {
                    e += cf.e[j] * k[j][i];
                }
            }
            let r = hd * e / scale(y[i], ynew[i]);
            err += r * r;
        }
        err = (err / T::lit(n.max(1) as f64)).sqrt();

        if err <= T::one() {
            steps += 1;
            let t_new = if last { t1 } else { t + hd };
            while next_sample < sample_times.len() {
                let ts = sample_times[next_sample];
                if (ts - t_new) * dir > T::zero() {
                    break;
                }
                if (ts - t) * dir < T::zero() {
                    return Err(Error::InvalidArgument("sample times must be monotone".into()));
                }
                let theta = (ts - t) / hd;
                samples.push(dense(&cf, &y, &ynew, &k, hd, theta));
                next_sample += 1;
            }
            t = t_new;
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            let mut fac = if err == T::zero() { fac_max } else { safety * err.powf(-fifth) };
            fac = fac.min(fac_max).max(fac_min);
            if last_rejected && fac > T::one() {
                fac = T::one();
            }
            let proposed = hs * fac;
            // a truncated final step says nothing about the admissible size
            h = if last && proposed < h { h } else { proposed }.min(h_max);
            last_rejected = false;
            if last {
                break;
            }
        } else {
            rejected += 1;
            let fac = if err.is_finite() { (safety * err.powf(-fifth)).max(fac_min) } else { fac_min };
            h = hs * fac.min(T::one());
            last_rejected = true;
        }
    }
    if next_sample < sample_times.len() {
        return Err(Error::InvalidArgument("sample time outside integration span".into()));
    }
    Ok(Solution { y_end: y, samples, steps, rejected, next_h: h })
}

fn dense<T: Real>(cf: &Coeffs<T>, y: &[T], ynew: &[T], k: &[Vec<T>], h: T, theta: T) -> Vec<T> {
    let one = T::one();
    let th1 = one - theta;
    (0..y.len())
        .map(|i| {
            let r1 = y[i];
            let r2 = ynew[i] - y[i];
            let r3 = h * k[0][i] - r2;
            let r4 = r2 - h * k[6][i] - r3;
            let mut d = T::zero();
            for j in 0..7 {
                if cf.d[j] != T::zero() {
                    d += cf.d[j] * k[j][i];
                }
            }
            let r5 = h * d;
            r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))
        })
        .collect()
}

fn initial_step<T: Real, F: FnMut(T, &[T], &mut [T])>(
    f: &mut F,
    t: T,
    y: &[T],
    f0: &[T],
    dir: T,
    scale: &impl Fn(T, T) -> T,
) -> T {
    let n = y.len().max(1);
    let nn = T::lit(n as f64);
    let rms = |v: &[T], w: &[T]| -> T {
        (v.iter().zip(w).fold(T::zero(), |acc, (&a, &b)| {
            let r = a / scale(b, b);
            acc + r * r
        }) / nn)
            .sqrt()
    };
    let d0 = rms(y, y);
    let d1 = rms(f0, y);
    let small = T::lit(1e-5);
    let h0 = if d0 < small || d1 < small { T::lit(1e-6) } else { T::lit(0.01) * d0 / d1 };
    let y1: Vec<T> = y.iter().zip(f0).map(|(&a, &b)| a + dir * h0 * b).collect();
    let mut f1 = vec![T::zero(); y.len()];
    f(t + dir * h0, &y1, &mut f1);
    let diff: Vec<T> = f1.iter().zip(f0).map(|(&a, &b)| a - b).collect();
    let d2 = rms(&diff, y) / h0;
    let m = if d1 > d2 { d1 } else { d2 };
    let h1 = if m <= T::lit(1e-15) {
        (h0 * T::lit(1e-3)).max(T::lit(1e-6))
    } else {
        (T::lit(0.01) / m).powf(T::lit(0.2))
    };
    (T::lit(100.0) * h0).min(h1)
}
