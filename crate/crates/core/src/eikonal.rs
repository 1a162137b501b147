//! Multichannel eikonal approximation along straight-line trajectories.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::{fourier_components, radial_profile, PotentialSpec};
use crate::specfun::{bessel_j_sequence, gauss_legendre};

/// Integration window in units of `σ_V`.
pub const Z_CUT: f64 = 8.0;
pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;
pub const DEFAULT_B_NODES: usize = 64;
/// Largest acceptable transverse density mass outside `b_max`.
pub const TAIL_MASS: f64 = 1e-8;

/// Dormand–Prince 5(4) tableau.
mod dp {
    pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    /// The last row doubles as the fifth-order weights.
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// `B − B*` with `B*` the embedded fourth-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: DEFAULT_RTOL, atol: DEFAULT_ATOL }
    }
}

#[derive(Clone, Debug)]
pub struct OdeReport {
    pub y: Vec<Complex64>,
    pub accepted: usize,
    pub rejected: usize,
}

/// Adaptive Dormand–Prince integration of `y' = f(z, y)` from `z0` to `z1`.
pub fn dormand_prince(
    f: impl Fn(f64, &[Complex64], &mut [Complex64]),
    z0: f64,
    z1: f64,
    y0: &[Complex64],
    tol: Tolerances,
) -> Result<OdeReport> {
    let n = y0.len();
    let span = z1 - z0;
    let mut y = y0.to_vec();
    let mut z = z0;
    let mut h = span * 1e-3;
    let mut k = vec![vec![Complex64::new(0.0, 0.0); n]; 7];
    let mut stage = vec![Complex64::new(0.0, 0.0); n];
    let mut y_new = vec![Complex64::new(0.0, 0.0); n];
    let (mut accepted, mut rejected) = (0, 0);
    f(z, &y, &mut k[0]);
    while z < z1 {
        if z + h > z1 {
            h = z1 - z;
        }
        if h < 1e-14 * span.abs().max(1.0) {
            return Err(Error::StepUnderflow { z, step: h });
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = dp::A[s][j];
                    if a != 0.0 {
                        acc += kj[i] * (h * a);
                    }
                }
                stage[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            f(z + dp::C[s] * h, &stage, &mut tail[0]);
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        let mut err = 0.0_f64;
        for i in 0..n {
            let mut e = Complex64::new(0.0, 0.0);
            for (j, kj) in k.iter().enumerate() {
                e += kj[i] * (h * dp::E[j]);
            }
            let scale = tol.atol + tol.rtol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / scale);
        }
        if err <= 1.0 {
            z += h;
            y.copy_from_slice(&y_new);
            // first-same-as-last
            let last = k[6].clone();
            k[0] = last;
            accepted += 1;
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= if err <= 1.0 { factor } else { factor.min(1.0) };
    }
    Ok(OdeReport { y, accepted, rejected })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EikonalSolution {
    pub b: f64,
    pub delta_k: f64,
    pub n_max: i32,
    /// `φ_n(z_cut)` at index `n + n_max`.
    pub amplitudes: Vec<Complex64>,
    pub norm_drift: f64,
}

impl EikonalSolution {
    pub fn amplitude(&self, n: i32) -> Complex64 {
        self.amplitudes[(n + self.n_max) as usize]
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Integrates `dφ_n/dz = −(i/k₀) Σ_m e^{imzδ_k} V_m(r) φ_{n−m}` with
/// `r = √(z² + b²)` over `|z| ≤ 8σ_V`, starting from `φ_n = δ_n0`.
pub fn eikonal_solve(
    b: f64,
    k0: f64,
    delta_k: f64,
    spec: &PotentialSpec,
    n_max: i32,
    tol: Tolerances,
) -> Result<EikonalSolution> {
    if n_max < 1 {
        return Err(Error::Config(format!("eikonal n_max = {n_max} must be at least 1")));
    }
    if !(1e-13..=1e-6).contains(&tol.rtol) {
        return Err(Error::Config(format!("rtol = {:e} outside [1e-13, 1e-6]", tol.rtol)));
    }
    let nch = (2 * n_max + 1) as usize;
    let mut y0 = vec![Complex64::new(0.0, 0.0); nch];
    y0[n_max as usize] = Complex64::new(1.0, 0.0);
    let components: Vec<(i32, Complex64)> =
        fourier_components(spec).into_iter().filter(|(_, c)| c.norm() > 0.0).collect();
    let z_cut = Z_CUT * spec.sigma_v;
    if spec.v0 == 0.0 || components.is_empty() {
        return Ok(EikonalSolution { b, delta_k, n_max, amplitudes: y0, norm_drift: 0.0 });
    }
    let rhs = |z: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let v = radial_profile(spec, (z * z + b * b).sqrt()) / k0;
        let coup: Vec<(i32, Complex64)> = components
            .iter()
            .map(|&(m, c)| (m, Complex64::new(0.0, -1.0) * c * Complex64::from_polar(v, m as f64 * z * delta_k)))
            .collect();
        for (n, d) in dy.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(m, w) in &coup {
                let src = n as i64 - m as i64;
                if src >= 0 && (src as usize) < nch {
                    acc += w * y[src as usize];
                }
            }
            *d = acc;
        }
    };
    let report = dormand_prince(rhs, -z_cut, z_cut, &y0, tol)?;
    let norm: f64 = report.y.iter().map(|a| a.norm_sqr()).sum();
    let drift = (norm - 1.0).abs();
    if drift > 10.0 * tol.rtol {
        return Err(Error::NormDrift { b, drift, tolerance: 10.0 * tol.rtol });
    }
    Ok(EikonalSolution { b, delta_k, n_max, amplitudes: report.y, norm_drift: drift })
}

/// `X(b) = (1/k₀) ∫ V_A0 dz`, the total phase of the zero-recoil solution.
pub fn bessel_argument(b: f64, spec: &PotentialSpec, k0: f64) -> f64 {
    spec.line_integral(b) / k0
}

/// Zero-recoil (`δ_k = 0`) populations `J_n(X)²`, `n = −n_max..=n_max`.
pub fn bessel_oracle(b: f64, spec: &PotentialSpec, k0: f64, n_max: i32) -> Result<Vec<f64>> {
    let x = bessel_argument(b, spec, k0).abs();
    let j = bessel_j_sequence(n_max as usize, x)?;
    Ok((-n_max..=n_max).map(|n| j[n.unsigned_abs() as usize].powi(2)).collect())
}

/// Zero-recoil amplitudes `(−i e^{iφ})ⁿ J_n(X)` for amplitude-level checks.
pub fn bessel_oracle_amplitudes(b: f64, spec: &PotentialSpec, k0: f64, n_max: i32) -> Result<Vec<Complex64>> {
    let x = bessel_argument(b, spec, k0);
    let j = bessel_j_sequence(n_max as usize, x.abs())?;
    let sign = x.signum();
    let phase = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, spec.phi);
    Ok((-n_max..=n_max)
        .map(|n| {
            let jn = j[n.unsigned_abs() as usize] * if n < 0 && n % 2 != 0 { -1.0 } else { 1.0 };
            let jn = if sign < 0.0 && n % 2 != 0 { -jn } else { jn };
            phase.powi(n) * jn
        })
        .collect())
}

/// Gaussian transverse density `ρ⊥(b) = 8πσ⊥² exp(−2σ⊥²b²)`, `σ⊥ = k₀σ_θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransverseProfile {
    pub sigma_perp: f64,
}

impl TransverseProfile {
    pub fn new(k0: f64, sigma_theta: f64) -> Self {
        Self { sigma_perp: k0 * sigma_theta }
    }

    pub fn density(&self, b: f64) -> f64 {
        let s2 = self.sigma_perp * self.sigma_perp;
        8.0 * PI * s2 * (-2.0 * s2 * b * b).exp()
    }

    /// `σ_r⊥ = 1/(2σ⊥)`.
    pub fn real_space_width(&self) -> f64 {
        0.5 / self.sigma_perp
    }

    /// `(1/4π²) ∫_{|r⊥| > b} ρ⊥ d²r⊥`.
    pub fn tail_mass(&self, b: f64) -> f64 {
        (-2.0 * self.sigma_perp * self.sigma_perp * b * b).exp()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ImpactQuadrature {
    pub nodes: usize,
    pub tol: Tolerances,
}

impl Default for ImpactQuadrature {
    fn default() -> Self {
        Self { nodes: DEFAULT_B_NODES, tol: Tolerances::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EikonalProbabilities {
    /// `P^E(n)` for Floquet channel `n`.
    pub probabilities: BTreeMap<i32, f64>,
    pub scattered: BTreeMap<i32, f64>,
    pub interference: f64,
    pub b_max: f64,
    pub b_extended: bool,
    pub trajectories: Vec<EikonalSolution>,
    pub weights: Vec<f64>,
}

impl EikonalProbabilities {
    pub fn get(&self, n: i32) -> f64 {
        self.probabilities.get(&n).copied().unwrap_or(0.0)
    }
}

/// `P^E(n) = δ_n0 (1 + P_I) + P_S(n)` with
/// `P_S(n) = (1/4π²) ∫ |φ_n − δ_n0|² ρ⊥ d²r⊥` and
/// `P_I = (1/2π²) ∫ Re(φ_0 − 1) ρ⊥ d²r⊥`, using `d²r⊥ = 2πb db`.
pub fn eikonal_channel_probs(
    profile: &TransverseProfile,
    spec: &PotentialSpec,
    k0: f64,
    delta_k: f64,
    n_max: i32,
    quadrature: &ImpactQuadrature,
) -> Result<EikonalProbabilities> {
    let mut b_max = (5.0 * spec.sigma_v).max(5.0 * profile.real_space_width());
    let initial = b_max;
    while profile.tail_mass(b_max) > TAIL_MASS {
        b_max *= 1.25;
    }
    let extended = b_max > initial;
    if extended {
        log::warn!(
            "transverse density tail {:.1e} beyond b = {initial:.2}; extended b_max to {b_max:.2}",
            profile.tail_mass(initial)
        );
    }
    let rule = gauss_legendre(quadrature.nodes)?;
    let nodes: Vec<(f64, f64)> = rule.mapped(0.0, b_max).collect();
    let trajectories = nodes
        .par_iter()
        .map(|&(b, _)| eikonal_solve(b, k0, delta_k, spec, n_max, quadrature.tol))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> =
        nodes.iter().map(|&(b, w)| w * 2.0 * PI * b * profile.density(b) / (4.0 * PI * PI)).collect();
    let mut scattered = BTreeMap::new();
    for n in -n_max..=n_max {
        let delta = if n == 0 { 1.0 } else { 0.0 };
        let p: f64 = trajectories
            .iter()
            .zip(&weights)
            .map(|(t, w)| w * (t.amplitude(n) - delta).norm_sqr())
            .sum();
        scattered.insert(n, p);
    }
    let interference: f64 = 2.0 * trajectories.iter().zip(&weights).map(|(t, w)| w * (t.amplitude(0).re - 1.0)).sum::<f64>();
    let probabilities = scattered
        .iter()
        .map(|(&n, &p)| (n, if n == 0 { 1.0 + interference + p } else { p }))
        .collect();
    Ok(EikonalProbabilities { probabilities, scattered, interference, b_max, b_extended: extended, trajectories, weights })
}
