//! Separable |k|-Gaussian wave packets `ψ₀(k) = g(k) Σ_l c_l0 Y_l0(k̂)`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{axial_harmonics, gauss_legendre, MAX_GAUSS_NODES};

/// Angular coefficients below this fraction of the peak count as negligible.
pub const TAIL_THRESHOLD: f64 = 1e-6;
/// Support of `g(k)` in units of `σ_k`; `g` is below 1e-15 of its peak outside.
pub const RADIAL_SUPPORT: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    /// Central energy (hartree).
    pub e0: f64,
    /// Momentum width (1/bohr).
    pub sigma_k: f64,
    /// Angular width (dimensionless).
    pub sigma_theta: f64,
    /// Highest partial wave in the angular projection.
    pub l_max: u32,
}

impl WavePacketSpec {
    pub fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.e0 > 0.0 && self.e0.is_finite()) {
            errs.push(format!("e0 = {} must be positive", self.e0));
        }
        if !(self.sigma_k > 0.0 && self.sigma_k.is_finite()) {
            errs.push(format!("sigma_k = {} must be positive", self.sigma_k));
        }
        if !(self.sigma_theta > 0.0 && self.sigma_theta.is_finite()) {
            errs.push(format!("sigma_theta = {} must be positive", self.sigma_theta));
        }
        if 2 * (self.l_max as usize + 1) > 2 * MAX_GAUSS_NODES {
            errs.push(format!("packet l_max = {} exceeds {}", self.l_max, MAX_GAUSS_NODES / 2 - 1));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn k0(&self) -> f64 {
        (2.0 * self.e0).sqrt()
    }

    /// Approximate duration `τ ≈ √(2 ln 2)/(σ_k k₀)` (a.u. of time).
    pub fn duration(&self) -> f64 {
        (2.0 * LN_2).sqrt() / (self.sigma_k * self.k0())
    }

    /// Transverse real-space width `σ_r⊥ ≈ 1/(2k₀σ_θ)` (bohr).
    pub fn transverse_width(&self) -> f64 {
        1.0 / (2.0 * self.k0() * self.sigma_theta)
    }

    /// Interval outside which `g(k)` is negligible.
    pub fn k_support(&self) -> (f64, f64) {
        let k0 = self.k0();
        ((k0 - RADIAL_SUPPORT * self.sigma_k).max(0.0), k0 + RADIAL_SUPPORT * self.sigma_k)
    }
}

/// Normalised radial factor `g(k) = N exp(−(k−k₀)²/4σ_k²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialProfile {
    pub k0: f64,
    pub sigma_k: f64,
    pub norm: f64,
}

/// Composite Gauss–Legendre over the support of `g`.
fn radial_integral(spec: &WavePacketSpec, f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi) = spec.k_support();
    let rule = gauss_legendre(48).expect("fixed rule");
    let panels = 24;
    let h = (hi - lo) / panels as f64;
    (0..panels).map(|p| rule.integrate(lo + p as f64 * h, lo + (p + 1) as f64 * h, &f)).sum()
}

impl RadialProfile {
    pub fn new(spec: &WavePacketSpec) -> Self {
        let k0 = spec.k0();
        let s = spec.sigma_k;
        let raw = radial_integral(spec, |k| (-(k - k0).powi(2) / (2.0 * s * s)).exp() * k * k);
        Self { k0, sigma_k: s, norm: raw.sqrt().recip() }
    }

    pub fn eval(&self, k: f64) -> f64 {
        if k <= 0.0 {
            return 0.0;
        }
        self.norm * (-(k - self.k0).powi(2) / (4.0 * self.sigma_k * self.sigma_k)).exp()
    }

    /// True where `g(k)` is numerically zero relative to its peak.
    pub fn negligible(&self, k: f64) -> bool {
        (k - self.k0).abs() > RADIAL_SUPPORT * self.sigma_k
    }
}

pub fn radial_profile_g(spec: &WavePacketSpec, k: f64) -> f64 {
    RadialProfile::new(spec).eval(k)
}

/// Mean of `k` over `|g(k)|² k² dk`.
pub fn mean_momentum_of_packet(spec: &WavePacketSpec) -> f64 {
    let g = RadialProfile::new(spec);
    radial_integral(spec, |k| k * (g.eval(k) * k).powi(2))
}

/// `c_l0` for `l = 0..=l_max`; odd entries vanish for this front/back
/// symmetric profile.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularCoefficients {
    pub c: Vec<f64>,
    /// `|c_lmax|² / max |c_l|²` before normalisation.
    pub tail: f64,
}

impl AngularCoefficients {
    pub fn l_max(&self) -> u32 {
        (self.c.len() - 1) as u32
    }

    pub fn get(&self, l: u32) -> f64 {
        self.c.get(l as usize).copied().unwrap_or(0.0)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c.iter().map(|c| c * c).sum()
    }
}

/// `c_l0 = 2π ∫ Y_l0(θ) exp(−sin²θ/4σ_θ²) sinθ dθ`, normalised over `l ≤ l_max`.
///
/// Gauss–Legendre in `cos θ` with `4 l_max` nodes, split over the two
/// hemispheres so each panel clusters nodes at its pole.
pub fn project_angular(spec: &WavePacketSpec) -> Result<AngularCoefficients> {
    spec.check()?;
    let l_max = spec.l_max as usize;
    let per_half = (2 * l_max).clamp(64, MAX_GAUSS_NODES);
    let rule = gauss_legendre(per_half)?;
    let s2 = 4.0 * spec.sigma_theta * spec.sigma_theta;
    let mut c = vec![0.0; l_max + 1];
    for (a, b) in [(-1.0, 0.0), (0.0, 1.0)] {
        for (x, w) in rule.mapped(a, b) {
            let profile = (-(1.0 - x * x) / s2).exp();
            if profile == 0.0 {
                continue;
            }
            for (l, y) in axial_harmonics(l_max, x).into_iter().enumerate() {
                c[l] += 2.0 * PI * w * profile * y;
            }
        }
    }
    let peak = c.iter().map(|v| v * v).fold(0.0, f64::max);
    let tail = c[l_max].powi(2).max(if l_max > 0 { c[l_max - 1].powi(2) } else { 0.0 }) / peak;
    if tail > TAIL_THRESHOLD {
        log::warn!(
            "angular projection truncated: |c_lmax|^2/max = {tail:.2e} at l_max = {l_max} (sigma_theta = {})",
            spec.sigma_theta
        );
    }
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in c.iter_mut() {
        *v /= norm;
    }
    Ok(AngularCoefficients { c, tail })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sigma_k: f64, sigma_theta: f64) -> WavePacketSpec {
        WavePacketSpec { e0: 3.67, sigma_k, sigma_theta, l_max: 200 }
    }

    #[test]
    fn radial_normalisation_and_peak() {
        for sk in [0.0005, 0.007] {
            let s = spec(sk, 0.05);
            let g = RadialProfile::new(&s);
            let norm = radial_integral(&s, |k| (g.eval(k) * k).powi(2));
            assert!((norm - 1.0).abs() < 1e-10);
            let k0 = s.k0();
            let peak = g.eval(k0);
            for i in -200..=200 {
                let k = k0 + i as f64 * sk * 0.05;
                assert!(g.eval(k) <= peak);
            }
            assert_eq!(radial_profile_g(&s, k0), peak);
        }
    }

    #[test]
    fn derived_widths() {
        let s = spec(0.0005, 0.02);
        assert!((s.k0() - 2.7092).abs() < 1e-4);
        // 21 fs and 1.5 fs; 1 fs = 41.341 a.u.
        let fs = 41.341_373_335_6;
        assert!((s.duration() / fs - 21.0).abs() / 21.0 < 0.02, "{}", s.duration());
        assert!((s.duration() - 869.0).abs() < 1.0);
        assert!((spec(0.007, 0.02).duration() / fs - 1.5).abs() / 1.5 < 0.02);
        assert!((s.transverse_width() - 9.3).abs() / 9.3 < 0.02);
        assert!((spec(0.0005, 0.05).transverse_width() - 3.7).abs() / 3.7 < 0.02);
    }

    fn last_significant(c: &AngularCoefficients, frac: f64) -> usize {
        let peak = c.c.iter().map(|v| v * v).fold(0.0, f64::max);
        c.c.iter().rposition(|v| v * v > frac * peak).unwrap()
    }

    #[test]
    fn angular_support_matches_widths() {
        let wide = project_angular(&spec(0.0005, 0.05)).unwrap();
        let narrow = project_angular(&spec(0.0005, 0.02)).unwrap();
        assert!((wide.norm_sqr() - 1.0).abs() < 1e-10);
        assert!((narrow.norm_sqr() - 1.0).abs() < 1e-10);
        // 1% of the peak probability marks the visible extent
        let lw = last_significant(&wide, 1e-2);
        let ln = last_significant(&narrow, 1e-2);
        assert!((30..=50).contains(&lw), "wide extent {lw}");
        assert!((65..=95).contains(&ln), "narrow extent {ln}");
        assert!(wide.c.iter().skip(1).step_by(2).all(|v| v.abs() < 1e-12));
        assert!(wide.tail < TAIL_THRESHOLD && narrow.tail < TAIL_THRESHOLD);
    }

    #[test]
    fn angular_decay_is_monotone_past_turnover() {
        for st in [0.05, 0.02] {
            let c = project_angular(&spec(0.0005, st)).unwrap();
            let even: Vec<f64> = c.c.iter().step_by(2).map(|v| v.abs()).collect();
            let turn = even.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            let cutoff = even.iter().rposition(|v| *v > 1e-12).unwrap();
            for w in even[turn..cutoff].windows(2) {
                assert!(w[1] < w[0], "sigma_theta={st}");
            }
        }
    }

    #[test]
    fn projection_converged_in_nodes() {
        let s = WavePacketSpec { l_max: 120, ..spec(0.0005, 0.02) };
        let a = project_angular(&s).unwrap();
        let b = project_angular(&WavePacketSpec { l_max: 250, ..s }).unwrap();
        let nb = b.c[..=120].iter().map(|v| v * v).sum::<f64>().sqrt();
        for l in 0..=120 {
            assert!((a.c[l] - b.c[l] / nb).abs() < 1e-10);
        }
    }

    #[test]
    fn isotropic_limit() {
        let c = project_angular(&WavePacketSpec { l_max: 20, ..spec(0.0005, 1e3) }).unwrap();
        assert!(c.c[0].powi(2) > 0.999);
    }

    #[test]
    fn packet_mean_momentum() {
        let s = spec(0.007, 0.05);
        let m = mean_momentum_of_packet(&s);
        // ⟨k⟩ over k² e^{−(k−k₀)²/2σ²} ≈ k₀ + 2σ²/k₀
        let k0 = s.k0();
        assert!((m - (k0 + 2.0 * 0.007f64.powi(2) / k0)).abs() < 1e-6);
    }
}
