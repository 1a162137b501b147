//! Special functions and quadrature rules.
//!
//! Everything here is a pure function of its arguments so callers can evaluate
//! from any number of worker threads.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights affinely mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

pub const MAX_GAUSS_NODES: usize = 512;

/// Gauss–Legendre nodes (increasing) and weights via Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_GAUSS_NODES {
        return Err(Error::domain("gauss_legendre", format!("N = {n} outside 1..={MAX_GAUSS_NODES}")));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // i-th largest root
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Legendre polynomials `P_0(x) ..= P_lmax(x)`.
pub fn legendre_all(l_max: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(l_max + 1);
    p.push(1.0);
    if l_max >= 1 {
        p.push(x);
    }
    for l in 2..=l_max {
        let lf = l as f64;
        let next = ((2.0 * lf - 1.0) * x * p[l - 1] - (lf - 1.0) * p[l - 2]) / lf;
        p.push(next);
    }
    p
}

pub fn legendre_p(l: usize, x: f64) -> f64 {
    legendre_all(l, x)[l]
}

/// Axial spherical harmonics `Y_l^0(θ)` for `l = 0..=l_max`, given `cos θ`.
pub fn axial_harmonics(l_max: usize, cos_theta: f64) -> Vec<f64> {
    let mut p = legendre_all(l_max, cos_theta);
    for (l, v) in p.iter_mut().enumerate() {
        *v *= ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
    }
    p
}

fn check_positive(function: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(function, format!("x = {x} must be finite and > 0")))
    }
}

/// `ln((2l+1)!!)`
fn ln_double_factorial_odd(l: u32) -> f64 {
    (1..=l).map(|i| ((2 * i + 1) as f64).ln()).sum()
}

fn series_j(l: u32, x: f64) -> f64 {
    let ln_pref = l as f64 * x.ln() - ln_double_factorial_odd(l);
    if ln_pref < -745.0 {
        return 0.0;
    }
    let y = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= y / (k as f64 * (2 * l + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    ln_pref.exp() * sum
}

/// Returns `(j_l(x), j_{l+1}(x))`.
fn spherical_j_pair(l: u32, x: f64) -> (f64, f64) {
    let lf = l as f64;
    if x * x < 2.0 * lf + 3.0 {
        return (series_j(l, x), series_j(l + 1, x));
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    if x > lf {
        // upward recurrence is stable in the oscillatory region
        let (mut prev, mut cur) = (j0, j1);
        if l == 0 {
            return (j0, j1);
        }
        for k in 1..=l {
            let next = (2 * k + 1) as f64 / x * cur - prev;
            prev = cur;
            cur = next;
        }
        return (prev, cur);
    }
    // Miller downward recurrence, normalised against j0 or j1.
    let start = l + 40 + (20.0 * x.cbrt()).ceil() as u32;
    let mut above = 0.0_f64;
    let mut cur = 1e-250_f64;
    let mut saved = (0.0, 0.0);
    let mut at_one = 0.0;
    for k in (1..=start).rev() {
        // cur = f_k, above = f_{k+1}
        if k == l + 1 {
            saved.1 = cur;
        }
        if k == l {
            saved.0 = cur;
        }
        let below = (2 * k + 1) as f64 / x * cur - above;
        above = cur;
        cur = below;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            above *= 1e-250;
            saved.0 *= 1e-250;
            saved.1 *= 1e-250;
        }
        if k == 1 {
            at_one = above;
        }
    }
    // cur = f_0, at_one = f_1
    if l == 0 {
        saved.0 = cur;
    }
    let scale = if j0.abs() >= j1.abs() { j0 / cur } else { j1 / at_one };
    (saved.0 * scale, saved.1 * scale)
}

/// Spherical Bessel function of the first kind `j_l(x)`.
pub fn spherical_bessel_j(l: u32, x: f64) -> Result<f64> {
    check_positive("spherical_bessel_j", x)?;
    Ok(spherical_j_pair(l, x).0)
}

/// `(j_l(x), j_l'(x))`
pub fn spherical_bessel_j_deriv(l: u32, x: f64) -> Result<(f64, f64)> {
    check_positive("spherical_bessel_j", x)?;
    let (j, jn) = spherical_j_pair(l, x);
    Ok((j, l as f64 / x * j - jn))
}

fn spherical_n_pair(l: u32, x: f64) -> (f64, f64) {
    let (s, c) = x.sin_cos();
    let n0 = -c / x;
    let n1 = -c / (x * x) - s / x;
    if l == 0 {
        return (n0, n1);
    }
    let (mut prev, mut cur) = (n0, n1);
    for k in 1..=l {
        let next = (2 * k + 1) as f64 / x * cur - prev;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Spherical Neumann function `n_l(x)` with `n_0(x) = -cos(x)/x`.
pub fn spherical_neumann_n(l: u32, x: f64) -> Result<f64> {
    check_positive("spherical_neumann_n", x)?;
    Ok(spherical_n_pair(l, x).0)
}

/// `(n_l(x), n_l'(x))`
pub fn spherical_neumann_n_deriv(l: u32, x: f64) -> Result<(f64, f64)> {
    check_positive("spherical_neumann_n", x)?;
    let (n, nn) = spherical_n_pair(l, x);
    Ok((n, l as f64 / x * n - nn))
}

/// Riccati–Bessel functions `x j_l(x)`, `x n_l(x)` and their derivatives.
#[derive(Clone, Copy, Debug)]
pub struct Riccati {
    pub j: f64,
    pub dj: f64,
    pub n: f64,
    pub dn: f64,
}

pub fn riccati_bessel(l: u32, x: f64) -> Result<Riccati> {
    let (j, dj) = spherical_bessel_j_deriv(l, x)?;
    let (n, dn) = spherical_neumann_n_deriv(l, x)?;
    Ok(Riccati { j: x * j, dj: j + x * dj, n: x * n, dn: n + x * dn })
}

pub const MAX_BESSEL_ORDER: i32 = 64;

/// Miller sequence `J_0(x) ..= J_{n_max}(x)` for `x > 0`.
fn bessel_j_miller(n_max: usize, x: f64) -> Vec<f64> {
    let top = (n_max as f64).max(x);
    let mut start = (top + 20.0 + (40.0 * top).sqrt()).ceil() as usize;
    start += start % 2;
    let mut out = vec![0.0; n_max + 1];
    let mut above = 0.0_f64;
    let mut cur = 1e-250_f64;
    let mut norm = 0.0_f64;
    for k in (0..=start).rev() {
        // cur = J_k (unnormalised)
        if k <= n_max {
            out[k] = cur;
        }
        if k == 0 {
            norm += cur;
        } else if k % 2 == 0 {
            norm += 2.0 * cur;
        }
        if k == 0 {
            break;
        }
        let below = 2.0 * k as f64 / x * cur - above;
        above = cur;
        cur = below;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Bessel function of the first kind of integer order, `J_n(x)` for `x >= 0`.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain("bessel_j", format!("x = {x} must be finite and >= 0")));
    }
    if n.abs() > MAX_BESSEL_ORDER {
        return Err(Error::domain("bessel_j", format!("|n| = {} exceeds {MAX_BESSEL_ORDER}", n.abs())));
    }
    let m = n.unsigned_abs() as usize;
    let value = if x == 0.0 {
        if m == 0 { 1.0 } else { 0.0 }
    } else {
        bessel_j_miller(m, x)[m]
    };
    Ok(if n < 0 && m % 2 == 1 { -value } else { value })
}

/// `J_0(x) ..= J_{n_max}(x)` from a single recurrence pass.
pub fn bessel_j_sequence(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain("bessel_j", format!("x = {x} must be finite and >= 0")));
    }
    if x == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        return Ok(v);
    }
    Ok(bessel_j_miller(n_max, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn j0_zero_at_pi() {
        assert!(spherical_bessel_j(0, PI).unwrap().abs() < 1e-12);
    }

    #[test]
    fn j1_small_argument() {
        let x = 1e-6;
        assert!(rel(spherical_bessel_j(1, x).unwrap(), x / 3.0) < 1e-9);
    }

    #[test]
    fn high_order_against_arbitrary_precision() {
        // mpmath, 40 digits: sqrt(pi/2x) J_{l+1/2}(x)
        let cases = [
            (50, 135.46, -0.003488804705549815162268527),
            (25, 135.46, -0.006961697710381197410538602),
            (100, 0.1, 7.462903513497333068259017e-290),
            (120, 50.0, 3.550172020103758955709078e-35),
            (10, 1e4, 0.00003108466805411860484222788),
            (5, 1e-3, 9.620009250009256175922782e-20),
            (80, 30.0, 1.015241324480844008595424e-27),
        ];
        for (l, x, want) in cases {
            let got = spherical_bessel_j(l, x).unwrap();
            assert!(rel(got, want) < 1e-10, "j_{l}({x}) = {got}, want {want}");
        }
        let n25 = spherical_neumann_n(25, 135.46).unwrap();
        assert!(rel(n25, 0.00265028494244033956408183) < 1e-10);
        let neumann = [
            (100, 0.1, -6.666476167391261e287),
            (120, 50.0, -2.569203994160374e30),
            (10, 1e4, -9.504603575094393842e-5),
            (5, 1e-3, -9.45000052500001875e20),
        ];
        for (l, x, want) in neumann {
            let got = spherical_neumann_n(l, x).unwrap();
            assert!(rel(got, want) < 1e-10, "n_{l}({x}) = {got}, want {want}");
        }
        // j_120(1e-3) ~ 1e-597 is below the double range
        assert_eq!(spherical_bessel_j(120, 1e-3).unwrap(), 0.0);
        let n80 = spherical_neumann_n(80, 30.0).unwrap();
        assert!(rel(n80, -219765836325998154275389.5) < 1e-10);
    }

    #[test]
    fn neumann_elementary_values() {
        assert!(spherical_neumann_n(0, PI / 2.0).unwrap().abs() < 1e-12);
        assert!((spherical_neumann_n(0, PI).unwrap() - 1.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn wronskian_identity() {
        for &x in &[0.1, 1.0, 10.0, 150.0, 135.46] {
            for l in 0..=100 {
                let (j, dj) = spherical_bessel_j_deriv(l, x).unwrap();
                let (n, dn) = spherical_neumann_n_deriv(l, x).unwrap();
                let w = j * dn - dj * n;
                assert!(rel(w, 1.0 / (x * x)) < 1e-10, "l={l} x={x} W={w}");
            }
        }
    }

    #[test]
    fn rejects_nonpositive_argument() {
        assert!(spherical_bessel_j(0, 0.0).is_err());
        assert!(spherical_neumann_n(3, -1.0).is_err());
        assert!(spherical_bessel_j(2, f64::NAN).is_err());
    }

    #[test]
    fn integer_bessel_values() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
        let cases = [
            (0, 1.5133, 0.5043949035799732012118466),
            (1, 1.5133, 0.5597610869715052221631494),
            (6, 4.786, 0.109712080076566082603948),
            (20, 1.5133, 1.513312680373465892044397e-21),
            (64, 30.0, 4.175075352440615289169004e-16),
            (10, 50.0, -0.1138478491494693856669042),
            (3, 10.0, 0.05837937930518681234293548),
        ];
        for (n, x, want) in cases {
            let got = bessel_j(n, x).unwrap();
            assert!(rel(got, want) < 1e-10, "J_{n}({x}) = {got}, want {want}");
        }
        for n in 1..=9 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(bessel_j(-n, 2.3).unwrap(), sign * bessel_j(n, 2.3).unwrap());
        }
        assert!(bessel_j(65, 1.0).is_err());
    }

    #[test]
    fn bessel_sum_rule() {
        for &x in &[0.5, 1.5133, 5.0] {
            let sum: f64 = (-40..=40).map(|n| bessel_j(n, x).unwrap().powi(2)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "x={x} sum={sum}");
        }
    }

    #[test]
    fn gauss_legendre_basics() {
        let one = gauss_legendre(1).unwrap();
        assert_eq!(one.nodes, vec![0.0]);
        assert!((one.weights[0] - 2.0).abs() < 1e-15);
        let five = gauss_legendre(5).unwrap();
        let x8: f64 = five.integrate(-1.0, 1.0, |x| x.powi(8));
        assert!((x8 - 2.0 / 9.0).abs() < 1e-13);
        for n in [2, 7, 64, 255, 512] {
            let rule = gauss_legendre(n).unwrap();
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "N={n} sum={s}");
            assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(rule.weights.iter().all(|&w| w > 0.0));
        }
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(513).is_err());
    }

    #[test]
    fn gauss_legendre_narrow_gaussian() {
        // mpmath adaptive quadrature of exp(-x^2/0.02) over [-1, 1]
        let want = 0.2506628274631000502415727;
        let got = gauss_legendre(64).unwrap().integrate(-1.0, 1.0, |x| (-x * x / 0.02).exp());
        assert!((got - want).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn quadrature_exact_on_polynomials(
            n in 1usize..40,
            coeffs in proptest::collection::vec(-1.0f64..1.0, 1..80),
        ) {
            let degree = (2 * n - 1).min(coeffs.len() - 1);
            let c = &coeffs[..=degree];
            let rule = gauss_legendre(n).unwrap();
            let got = rule.integrate(-1.0, 1.0, |x| c.iter().rev().fold(0.0, |acc, &a| acc * x + a));
            let want: f64 = c.iter().enumerate()
                .filter(|(k, _)| k % 2 == 0)
                .map(|(k, a)| 2.0 * a / (k as f64 + 1.0))
                .sum();
            let scale: f64 = c.iter().map(|a| a.abs()).sum::<f64>().max(want.abs());
            proptest::prop_assert!((got - want).abs() <= 1e-12 * scale, "{} vs {}", got, want);
        }
    }

    #[test]
    fn axial_harmonics_normalised() {
        let rule = gauss_legendre(80).unwrap();
        for l in [0usize, 3, 17, 40] {
            let norm: f64 = rule
                .mapped(-1.0, 1.0)
                .map(|(x, w)| w * axial_harmonics(l, x)[l].powi(2))
                .sum::<f64>()
                * 2.0
                * PI;
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}
