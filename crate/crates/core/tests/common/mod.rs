//! Test-only reference computations, independent of the library's assembly
//! and eigensolver.
#![allow(dead_code)]

/// Chain coupling for the linearized vorticity equation about
/// `U = (A sin(m y), 0)`: for `omega = sum_j w_j e^{i(alpha x + k_j y)}`,
/// `k_j = beta + j m`,
/// `lambda w_j = -(A alpha / 2) [(1 - m^2/|k_{j-1}|^2) w_{j-1} - (1 - m^2/|k_{j+1}|^2) w_{j+1}]`.
///
/// Returns `(sub, sup)` such that row `j` reads `sub[j] w_{j-1} + sup[j] w_{j+1}`.
fn chain(m: i32, amp: f64, alpha: i32, ks: &[i32]) -> (Vec<f64>, Vec<f64>) {
    let h = amp * alpha as f64 / 2.0;
    let w = |k: i32| 1.0 - (m * m) as f64 / (alpha * alpha + k * k) as f64;
    let sub = (0..ks.len()).map(|j| if j == 0 { 0.0 } else { -h * w(ks[j - 1]) }).collect();
    let sup = (0..ks.len()).map(|j| if j + 1 == ks.len() { 0.0 } else { h * w(ks[j + 1]) }).collect();
    (sub, sup)
}

/// Continuant `det(lambda - T)` of a zero-diagonal tridiagonal chain.
fn continuant(sub: &[f64], sup: &[f64], lambda: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, lambda);
    for j in 1..sub.len() {
        let p2 = lambda * p1 - sub[j] * sup[j - 1] * p0;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Wave numbers `k_2` of the chains through `alpha` inside `|k|_inf <= n`,
/// split at `k = 0`.
fn chains(m: i32, n: i32, alpha: i32) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    for beta in 0..m {
        let ks: Vec<i32> = (-n..=n).filter(|k| (k - beta).rem_euclid(m) == 0).collect();
        if alpha == 0 {
            out.push(ks.iter().copied().filter(|&k| k < 0).collect());
            out.push(ks.iter().copied().filter(|&k| k > 0).collect());
        } else {
            out.push(ks);
        }
    }
    out.retain(|c: &Vec<i32>| !c.is_empty());
    out
}

/// Real roots of the chain continuants for one `alpha`, by sign scanning and bisection.
pub fn shear_continuant_roots(m: i32, amp: f64, n: i32, alpha: i32) -> Vec<f64> {
    let mut roots = Vec::new();
    for ks in chains(m, n, alpha) {
        let (sub, sup) = chain(m, amp, alpha, &ks);
        let bound = 2.0 * sub.iter().chain(&sup).fold(0.0f64, |a, b| a.max(b.abs())) + 1e-3;
        let steps = 20000;
        let f = |x: f64| continuant(&sub, &sup, x);
        let mut prev_x = -bound;
        let mut prev = f(prev_x);
        for i in 1..=steps {
            let x = -bound + 2.0 * bound * i as f64 / steps as f64;
            let v = f(x);
            if prev == 0.0 {
                roots.push(prev_x);
            } else if prev * v < 0.0 {
                let (mut a, mut b) = (prev_x, x);
                for _ in 0..200 {
                    let c = 0.5 * (a + b);
                    if f(a) * f(c) <= 0.0 {
                        b = c;
                    } else {
                        a = c;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev_x = x;
            prev = v;
        }
    }
    roots
}

/// Largest real eigenvalue over all chains of the `|k|_inf <= n` box.
pub fn shear_continuant_lambda(m: i32, amp: f64, n: i32) -> f64 {
    (1..=n)
        .flat_map(|alpha| shear_continuant_roots(m, amp, n, alpha))
        .fold(f64::NEG_INFINITY, f64::max)
}
