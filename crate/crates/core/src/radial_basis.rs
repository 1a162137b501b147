//! B-spline radial basis on `[0, a0]` with a uniform ("linear") knot sequence.

use faer::Mat;

use crate::error::{Error, Result};
use crate::specfun::{gauss_legendre, QuadratureRule};

/// Values of the `order` splines that are nonzero at a point, together with
/// their first and second derivatives. `first` is the raw index of entry 0.
#[derive(Clone, Debug)]
pub struct LocalValues {
    pub first: usize,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

#[derive(Clone, Debug)]
struct QuadPoint {
    r: f64,
    w: f64,
    local: LocalValues,
}

/// B-spline basis with the first (r = 0) spline removed.
#[derive(Clone, Debug)]
pub struct RadialBasis {
    pub order: usize,
    /// Retained functions; raw spline `i + 1` is basis function `i`.
    pub n_splines: usize,
    pub knots: Vec<f64>,
    pub a0: f64,
    pub quad: QuadratureRule,
    points: Vec<QuadPoint>,
}

pub fn build_basis(order: usize, n_splines_raw: usize, a0: f64) -> Result<RadialBasis> {
    if order < 3 {
        return Err(Error::Config(format!("spline order {order} must be at least 3")));
    }
    if n_splines_raw < order + 2 {
        return Err(Error::Config(format!(
            "{n_splines_raw} splines is too few for order {order} (need at least {})",
            order + 2
        )));
    }
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(Error::Config(format!("boundary radius a0 = {a0} must be positive")));
    }
    let n_intervals = n_splines_raw - order + 1;
    let h = a0 / n_intervals as f64;
    let mut knots = vec![0.0; order];
    knots.extend((1..n_intervals).map(|i| i as f64 * h));
    knots.extend(std::iter::repeat(a0).take(order));

    let quad = gauss_legendre(order + 2)?;
    let mut basis = RadialBasis {
        order,
        n_splines: n_splines_raw - 1,
        knots,
        a0,
        quad,
        points: Vec::new(),
    };
    let mut points = Vec::with_capacity(n_intervals * basis.quad.len());
    for span in (order - 1)..(order - 1 + n_intervals) {
        let (lo, hi) = (basis.knots[span], basis.knots[span + 1]);
        for (r, w) in basis.quad.mapped(lo, hi) {
            points.push(QuadPoint { r, w, local: basis.local_at_span(span, r) });
        }
    }
    basis.points = points;
    Ok(basis)
}

impl RadialBasis {
    pub fn n_raw(&self) -> usize {
        self.n_splines + 1
    }

    pub fn knot_spacing(&self) -> f64 {
        self.knots[self.order] - self.knots[self.order - 1]
    }

    fn span_of(&self, r: f64) -> usize {
        let k = self.order;
        let last = self.n_raw() - 1;
        if r >= self.a0 {
            return last;
        }
        let h = self.knot_spacing();
        let idx = ((r / h).floor().max(0.0) as usize).min(last - (k - 1));
        let mut span = idx + k - 1;
        // guard against rounding at knot boundaries
        while span > k - 1 && r < self.knots[span] {
            span -= 1;
        }
        while span < last && r >= self.knots[span + 1] {
            span += 1;
        }
        span
    }

    /// Raw splines nonzero at `r`, with derivatives.
    pub fn local_values(&self, r: f64) -> LocalValues {
        let r = r.clamp(0.0, self.a0);
        self.local_at_span(self.span_of(r), r)
    }

    fn local_at_span(&self, span: usize, x: f64) -> LocalValues {
        let p = self.order - 1;
        let t = &self.knots;
        // ndu[j][r]: basis values (upper triangle) and knot differences (lower)
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let n_der = 2.min(p);
        let mut ders = vec![vec![0.0; p + 1]; 3];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n_der {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=n_der {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        let d2 = ders.pop().unwrap_or_default();
        let d1 = ders.pop().unwrap_or_default();
        let values = ders.pop().unwrap_or_default();
        LocalValues { first: span - p, values, d1, d2 }
    }

    /// All raw spline values at `r` (including the removed first one).
    pub fn raw_values(&self, r: f64) -> Vec<f64> {
        let local = self.local_values(r);
        let mut out = vec![0.0; self.n_raw()];
        for (j, v) in local.values.iter().enumerate() {
            out[local.first + j] = *v;
        }
        out
    }

    /// Retained basis function `i` and its first two derivatives at `r`.
    pub fn eval(&self, i: usize, r: f64) -> (f64, f64, f64) {
        let raw = i + 1;
        let local = self.local_values(r);
        if raw < local.first || raw >= local.first + local.values.len() {
            return (0.0, 0.0, 0.0);
        }
        let j = raw - local.first;
        (local.values[j], local.d1[j], local.d2[j])
    }

    /// Expansion `Σ c_i B_i(r)` and its derivative.
    pub fn expand(&self, coeffs: &[f64], r: f64) -> (f64, f64) {
        let local = self.local_values(r);
        let mut u = 0.0;
        let mut du = 0.0;
        for j in 0..local.values.len() {
            let raw = local.first + j;
            if raw == 0 {
                continue;
            }
            u += coeffs[raw - 1] * local.values[j];
            du += coeffs[raw - 1] * local.d1[j];
        }
        (u, du)
    }

    /// Quadrature points `(r, w)` covering `[0, a0]`.
    pub fn quadrature_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().map(|p| (p.r, p.w))
    }

    fn assemble(&self, kernel: impl Fn(usize, &QuadPoint, usize, usize) -> f64) -> Mat<f64> {
        let n = self.n_splines;
        let mut m = Mat::<f64>::zeros(n, n);
        for (q, pt) in self.points.iter().enumerate() {
            let k = pt.local.values.len();
            for a in 0..k {
                let ia = pt.local.first + a;
                if ia == 0 {
                    continue;
                }
                for b in a..k {
                    let ib = pt.local.first + b;
                    let v = kernel(q, pt, a, b);
                    m[(ia - 1, ib - 1)] += v;
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                m[(j, i)] = m[(i, j)];
            }
        }
        m
    }
}

/// Overlap `O_ij = ∫B_iB_j` and kinetic-plus-centrifugal
/// `T_ij = ∫ ½B_i'B_j' + l(l+1)/(2r²) B_iB_j`.
pub fn overlap_and_kinetic(basis: &RadialBasis, l: u32) -> (Mat<f64>, Mat<f64>) {
    let o = basis.assemble(|_, p, a, b| p.w * p.local.values[a] * p.local.values[b]);
    let cent = 0.5 * (l as f64) * (l as f64 + 1.0);
    let t = basis.assemble(|_, p, a, b| {
        let v = &p.local;
        p.w * (0.5 * v.d1[a] * v.d1[b] + cent / (p.r * p.r) * v.values[a] * v.values[b])
    });
    (o, t)
}

/// `M_ij = ∫ B_i f(r) B_j dr`.
pub fn radial_potential_matrix(basis: &RadialBasis, f: impl Fn(f64) -> f64) -> Mat<f64> {
    let fr: Vec<f64> = basis.points.iter().map(|p| f(p.r)).collect();
    basis.assemble(|q, p, a, b| p.w * fr[q] * p.local.values[a] * p.local.values[b])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        step(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    /// Textbook Cox–de Boor recursion, independent of the production evaluator.
    fn cox_de_boor(t: &[f64], i: usize, k: usize, x: f64) -> f64 {
        if k == 1 {
            let last = t[t.len() - 1];
            let inside = t[i] <= x && x < t[i + 1];
            let at_end = x == last && t[i] < t[i + 1] && t[i + 1] == last;
            return if inside || at_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = t[i + k - 1] - t[i];
        if d1 > 0.0 {
            v += (x - t[i]) / d1 * cox_de_boor(t, i, k - 1, x);
        }
        let d2 = t[i + k] - t[i + 1];
        if d2 > 0.0 {
            v += (t[i + k] - x) / d2 * cox_de_boor(t, i + 1, k - 1, x);
        }
        v
    }

    #[test]
    fn paper_basis_dimensions() {
        let b = build_basis(6, 150, 50.0).unwrap();
        assert_eq!(b.n_splines, 149);
        assert!((b.knot_spacing() - 50.0 / 145.0).abs() < 1e-14);
        assert_eq!(b.knots.len(), 156);
        assert!(b.knots[..6].iter().all(|&k| k == 0.0));
        assert!(b.knots[150..].iter().all(|&k| k == 50.0));
        // retained functions vanish at the origin, last is 1 at a0
        for i in 0..b.n_splines {
            assert_eq!(b.eval(i, 0.0).0, 0.0);
        }
        assert!((b.eval(148, 50.0).0 - 1.0).abs() < 1e-14);
        assert_eq!(b.eval(147, 50.0).0, 0.0);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(build_basis(2, 10, 1.0).is_err());
        assert!(build_basis(6, 7, 1.0).is_err());
        assert!(build_basis(6, 20, 0.0).is_err());
    }

    #[test]
    fn partition_of_unity() {
        let b = build_basis(3, 5, 1.0).unwrap();
        for i in 0..20 {
            let r = (i as f64 * 0.618_033_988_75).fract();
            let s: f64 = b.raw_values(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "r={r} sum={s}");
        }
        let b = build_basis(6, 150, 50.0).unwrap();
        for i in 0..200 {
            let r = 50.0 * (i as f64 * 0.414_213_562_37).fract();
            let s: f64 = b.raw_values(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn values_match_cox_de_boor() {
        let b = build_basis(6, 30, 10.0).unwrap();
        for i in 0..57 {
            let r = 10.0 * (i as f64 * 0.577_215_664_9).fract();
            let raw = b.raw_values(r);
            for (j, v) in raw.iter().enumerate() {
                let want = cox_de_boor(&b.knots, j, 6, r);
                assert!((v - want).abs() < 1e-13, "B_{j}({r}) = {v} vs {want}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = build_basis(6, 40, 20.0).unwrap();
        let h = 1e-6;
        for (r, _) in b.quadrature_points().step_by(3) {
            if r < 2.0 * h || r > b.a0 - 2.0 * h {
                continue;
            }
            for i in 0..b.n_splines {
                let (_, d1, d2) = b.eval(i, r);
                if d1 == 0.0 && d2 == 0.0 {
                    continue;
                }
                let fd1 = (b.eval(i, r + h).0 - b.eval(i, r - h).0) / (2.0 * h);
                let fd2 = (b.eval(i, r + h).1 - b.eval(i, r - h).1) / (2.0 * h);
                let scale1 = d1.abs().max(1e-2);
                let scale2 = d2.abs().max(1e-1);
                assert!((fd1 - d1).abs() / scale1 < 1e-6, "B'_{i}({r}) {d1} vs {fd1}");
                assert!((fd2 - d2).abs() / scale2 < 1e-6, "B''_{i}({r}) {d2} vs {fd2}");
            }
        }
    }

    #[test]
    fn overlap_banded_symmetric_positive() {
        let b = build_basis(6, 150, 50.0).unwrap();
        let (o, t) = overlap_and_kinetic(&b, 3);
        let n = b.n_splines;
        for i in 0..n {
            for j in 0..n {
                assert_eq!(o[(i, j)], o[(j, i)]);
                assert_eq!(t[(i, j)], t[(j, i)]);
                if i.abs_diff(j) >= 6 {
                    assert_eq!(o[(i, j)], 0.0);
                    assert_eq!(t[(i, j)], 0.0);
                }
            }
        }
        assert!(o.llt(faer::Side::Lower).is_ok());
    }

    #[test]
    fn kinetic_energy_of_sine() {
        let b = build_basis(6, 150, 50.0).unwrap();
        let q = 3.0 * std::f64::consts::PI / b.a0;
        let (o, t) = overlap_and_kinetic(&b, 0);
        let n = b.n_splines;
        let mut rhs = Mat::<f64>::zeros(n, 1);
        for (r, w) in b.quadrature_points() {
            let local = b.local_values(r);
            for (j, v) in local.values.iter().enumerate() {
                let raw = local.first + j;
                if raw > 0 {
                    rhs[(raw - 1, 0)] += w * v * (q * r).sin();
                }
            }
        }
        let c = o.llt(faer::Side::Lower).unwrap();
        use faer::prelude::Solve;
        let coef = c.solve(&rhs);
        let tu = &t * &coef;
        let energy: f64 = (0..n).map(|i| coef[(i, 0)] * tu[(i, 0)]).sum();
        let want = adaptive_simpson(&|r: f64| 0.5 * (q * (q * r).cos()).powi(2), 0.0, b.a0, 1e-13);
        assert!((energy - want).abs() / want < 1e-8, "{energy} vs {want}");
    }

    #[test]
    fn potential_matrix_identities() {
        let b = build_basis(6, 60, 50.0).unwrap();
        let zero = radial_potential_matrix(&b, |_| 0.0);
        assert!((0..b.n_splines).all(|i| (0..b.n_splines).all(|j| zero[(i, j)] == 0.0)));
        let (o, _) = overlap_and_kinetic(&b, 0);
        let one = radial_potential_matrix(&b, |_| 1.0);
        for i in 0..b.n_splines {
            for j in 0..b.n_splines {
                assert!((one[(i, j)] - o[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gaussian_trace_against_adaptive_quadrature() {
        let b = build_basis(6, 150, 50.0).unwrap();
        let v0 = 4.1_f64;
        let sv = 10.0_f64;
        let f = move |r: f64| v0 / (2.0 * std::f64::consts::PI * sv).sqrt() * (-r * r / (2.0 * sv * sv)).exp();
        let m = radial_potential_matrix(&b, f);
        let trace: f64 = (0..b.n_splines).map(|i| m[(i, i)]).sum();
        // integrate knot interval by knot interval so the piecewise integrand is smooth
        let mut want = 0.0;
        let h = b.knot_spacing();
        let knots = b.knots.clone();
        for s in 0..145 {
            let (lo, hi) = (s as f64 * h, (s + 1) as f64 * h);
            let g = |r: f64| {
                let sum: f64 = (1..150).map(|i| cox_de_boor(&knots, i, 6, r).powi(2)).sum();
                sum * f(r)
            };
            want += adaptive_simpson(&g, lo, hi, 1e-15);
        }
        assert!((trace - want).abs() / want < 1e-10, "{trace} vs {want}");
    }
}
