//! Oscillating Gaussian potential `V_A0(r) cos(ωt + φ)` and its Fourier channels.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time dependence of the potential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drive {
    /// `V_A0(r) cos(ωt + φ)`.
    #[default]
    Harmonic,
    /// Time-independent `V_A0(r)`, used for single-channel checks.
    Static,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    /// Strength (hartree·bohr).
    pub v0: f64,
    /// Radial width (bohr).
    pub sigma_v: f64,
    /// Angular frequency (hartree).
    pub omega: f64,
    /// Phase (rad).
    pub phi: f64,
    #[serde(default)]
    pub drive: Drive,
}

impl PotentialSpec {
    pub fn new(v0: f64, sigma_v: f64, omega: f64, phi: f64) -> Result<Self> {
        let spec = Self { v0, sigma_v, omega, phi, drive: Drive::Harmonic };
        spec.check()?;
        Ok(spec)
    }

    pub fn static_gaussian(v0: f64, sigma_v: f64) -> Result<Self> {
        let spec = Self { v0, sigma_v, omega: 1.0, phi: 0.0, drive: Drive::Static };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.sigma_v > 0.0 && self.sigma_v.is_finite()) {
            errs.push(format!("sigma_v = {} must be positive", self.sigma_v));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            errs.push(format!("omega = {} must be positive", self.omega));
        }
        if !self.v0.is_finite() || !self.phi.is_finite() {
            errs.push("v0 and phi must be finite".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn with_phi(self, phi: f64) -> Self {
        Self { phi, ..self }
    }

    pub fn with_v0(self, v0: f64) -> Self {
        Self { v0, ..self }
    }

    /// Peak value `V_A0(0)`.
    pub fn amplitude(&self) -> f64 {
        self.v0 / (2.0 * PI * self.sigma_v).sqrt()
    }

    /// `∫ V_A0(√(z² + b²)) dz` along a straight line at impact parameter `b`.
    pub fn line_integral(&self, b: f64) -> f64 {
        self.amplitude() * (2.0 * PI).sqrt() * self.sigma_v * (-b * b / (2.0 * self.sigma_v * self.sigma_v)).exp()
    }
}

/// `V_A0(r) = V0/√(2πσ_V) · exp(−r²/2σ_V²)`.
pub fn radial_profile(spec: &PotentialSpec, r: f64) -> f64 {
    spec.amplitude() * (-r * r / (2.0 * spec.sigma_v * spec.sigma_v)).exp()
}

/// Multipliers `V_m / V_A0` of the Fourier channel couplings.
pub fn fourier_components(spec: &PotentialSpec) -> BTreeMap<i32, Complex64> {
    let mut m = BTreeMap::new();
    match spec.drive {
        Drive::Harmonic => {
            m.insert(1, 0.5 * Complex64::from_polar(1.0, spec.phi));
            m.insert(-1, 0.5 * Complex64::from_polar(1.0, -spec.phi));
        }
        Drive::Static => {
            m.insert(0, Complex64::new(1.0, 0.0));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> PotentialSpec {
        PotentialSpec::new(4.1, 10.0, 0.057, 0.0).unwrap()
    }

    #[test]
    fn profile_values() {
        let zero = paper().with_v0(0.0);
        assert_eq!(radial_profile(&zero, 3.0), 0.0);
        assert!((radial_profile(&paper(), 0.0) - 0.51724216701413276).abs() < 1e-15);
        let ratio = radial_profile(&paper(), 30.0) / radial_profile(&paper(), 0.0);
        assert!((ratio - (-4.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn components_cosine_decomposition() {
        let c = fourier_components(&paper());
        assert_eq!(c.len(), 2);
        assert_eq!(c[&1], Complex64::new(0.5, 0.0));
        assert_eq!(c[&-1], Complex64::new(0.5, 0.0));
        let c = fourier_components(&paper().with_phi(PI / 2.0));
        assert!((c[&1] - Complex64::new(0.0, 0.5)).norm() < 1e-16);
        assert!((c[&-1] - Complex64::new(0.0, -0.5)).norm() < 1e-16);
    }

    #[test]
    fn components_hermitian_for_any_phase() {
        for i in 0..16 {
            let phi = -3.0 + 0.41 * i as f64;
            let c = fourier_components(&paper().with_phi(phi));
            assert_eq!(c[&1].conj(), c[&-1]);
            assert!((c[&1].norm() - 0.5).abs() < 1e-16);
        }
    }

    #[test]
    fn line_integral_matches_quadrature() {
        let spec = paper();
        let rule = crate::specfun::gauss_legendre(200).unwrap();
        for b in [0.0, 10.0, 30.0] {
            let num = rule.integrate(-80.0, 80.0, |z| radial_profile(&spec, (z * z + b * b).sqrt()));
            assert!((num - spec.line_integral(b)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid() {
        assert!(PotentialSpec::new(1.0, 0.0, 0.057, 0.0).is_err());
        assert!(PotentialSpec::new(1.0, 10.0, -1.0, 0.0).is_err());
    }
}
