//! Reference solutions built without the library's special functions.

use std::f64::consts::PI;

/// Riccati–Bessel `x j_l(x)` and `x y_l(x)` by upward recurrence (stable for `x > l`).
pub fn riccati_pair(l: u32, x: f64) -> (f64, f64) {
    let (mut j0, mut j1) = (x.sin(), x.sin() / x - x.cos());
    let (mut y0, mut y1) = (-x.cos(), -x.cos() / x - x.sin());
    if l == 0 {
        return (j0, y0);
    }
    for n in 1..l {
        let f = (2 * n + 1) as f64 / x;
        (j0, j1) = (j1, f * j1 - j0);
        (y0, y1) = (y1, f * y1 - y0);
    }
    (j1, y1)
}

/// `J_n(x) = (1/π) ∫₀^π cos(nτ − x sin τ) dτ`; the trapezoid rule is
/// spectrally accurate for this periodic integrand.
pub fn bessel_j_integral(n: i32, x: f64) -> f64 {
    let m = 4096;
    let h = PI / m as f64;
    let mut s = 0.5 * ((0.0f64).cos() + (n as f64 * PI).cos());
    for i in 1..m {
        let t = i as f64 * h;
        s += (n as f64 * t - x * t.sin()).cos();
    }
    s * h / PI
}

/// Phase shift of `u'' = [l(l+1)/r² + 2V(r) − k²] u` with `V = 0` beyond `a`,
/// integrated by Numerov from the origin and matched at `r = a` and `r = a − 1/2`.
pub fn numerov_phase_shift(l: u32, k: f64, a: f64, v: impl Fn(f64) -> f64, steps: usize) -> f64 {
    let h = a / steps as f64;
    let c = h * h / 12.0;
    let f = |r: f64| 1.0 + c * (k * k - 2.0 * v(r) - (l * (l + 1)) as f64 / (r * r));
    let mut u = vec![0.0; steps + 1];
    u[1] = h.powi(l as i32 + 1);
    let mut f_prev = 0.0;
    let mut f_cur = f(h);
    for i in 1..steps {
        let f_next = f((i + 1) as f64 * h);
        u[i + 1] = ((12.0 - 10.0 * f_cur) * u[i] - f_prev * u[i - 1]) / f_next;
        (f_prev, f_cur) = (f_cur, f_next);
    }
    let back = (0.5 / h).round() as usize;
    let (r1, r2) = ((steps - back) as f64 * h, a);
    let ratio = u[steps - back] / u[steps];
    let (j1, y1) = riccati_pair(l, k * r1);
    let (j2, y2) = riccati_pair(l, k * r2);
    // u ∝ ĵ cos δ − ŷ sin δ, with ŷ = x y_l ~ −cos(x − lπ/2)
    ((j1 - ratio * j2) / (y1 - ratio * y2)).atan()
}

/// Wraps a phase difference into `(−π/2, π/2]`.
pub fn wrap_half_pi(d: f64) -> f64 {
    let mut d = d % PI;
    if d > PI / 2.0 {
        d -= PI;
    } else if d <= -PI / 2.0 {
        d += PI;
    }
    d
}
