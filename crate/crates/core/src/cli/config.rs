//! Run configuration files and their validation.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eikonal::{DEFAULT_B_NODES, DEFAULT_RTOL};
use crate::error::{Error, Result};
use crate::observables::{ScanAxis, SolverSetup, DEFAULT_GRID_POINTS};
use crate::potential::PotentialSpec;
use crate::wavepacket::{project_angular, WavePacketSpec};

/// Packet probability allowed outside the solver's partial-wave range.
pub const ANGULAR_BUDGET: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Rmatrix,
    Eikonal,
    Both,
}

impl SolverKind {
    pub fn rmatrix(&self) -> bool {
        matches!(self, SolverKind::Rmatrix | SolverKind::Both)
    }

    pub fn eikonal(&self) -> bool {
        matches!(self, SolverKind::Eikonal | SolverKind::Both)
    }
}

fn default_order() -> usize {
    6
}
fn default_splines() -> usize {
    150
}
fn default_a0() -> f64 {
    50.0
}
fn default_n_max() -> i32 {
    10
}
fn default_l_max() -> u32 {
    100
}
fn default_points() -> usize {
    DEFAULT_GRID_POINTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub kind: SolverKind,
    /// Channels `−n_max..=n_max`.
    #[serde(default = "default_n_max")]
    pub n_max: i32,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_splines")]
    pub n_splines: usize,
    /// R-matrix radius (bohr).
    #[serde(default = "default_a0")]
    pub a0: f64,
    #[serde(default = "default_l_max")]
    pub l_max: u32,
    /// Target number of spectrum grid points.
    #[serde(default = "default_points")]
    pub grid_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::default(),
            n_max: default_n_max(),
            order: default_order(),
            n_splines: default_splines(),
            a0: default_a0(),
            l_max: default_l_max(),
            grid_points: default_points(),
        }
    }
}

impl SolverConfig {
    pub fn setup(&self) -> SolverSetup {
        SolverSetup::new(self.order, self.n_splines, self.a0, self.n_max, self.l_max)
    }
}

fn default_rtol() -> f64 {
    DEFAULT_RTOL
}
fn default_b_nodes() -> usize {
    DEFAULT_B_NODES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EikonalConfig {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_b_nodes")]
    pub b_nodes: usize,
    /// Overrides `solver.n_max` for the eikonal channels.
    #[serde(default)]
    pub n_max: Option<i32>,
    /// Write `|φ_n(b)|²` per trajectory.
    #[serde(default)]
    pub trajectories: bool,
}

impl Default for EikonalConfig {
    fn default() -> Self {
        Self { rtol: default_rtol(), b_nodes: default_b_nodes(), n_max: None, trajectories: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub axis: ScanAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Eigensystem cache; disabled when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    pub packet: WavePacketSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub eikonal: EikonalConfig,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn eikonal_n_max(&self) -> i32 {
        self.eikonal.n_max.unwrap_or(self.solver.n_max)
    }

    /// SHA-256 over every field that affects numerical output.
    pub fn parameter_hash(&self) -> String {
        let physics = serde_json::json!({
            "potential": self.potential,
            "packet": self.packet,
            "solver": self.solver,
            "eikonal": self.eikonal,
            "scan": self.scan,
        });
        hex(&Sha256::digest(physics.to_string().as_bytes()))
    }

    /// Every `(potential, packet)` pair the run will evaluate.
    pub fn points(&self) -> Vec<(PotentialSpec, WavePacketSpec)> {
        match &self.scan {
            Some(s) => s.values.iter().map(|&v| s.axis.apply(v, &self.potential, &self.packet)).collect(),
            None => vec![(self.potential, self.packet)],
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Quantities implied by the configuration, echoed by `validate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Derived {
    /// 1/bohr.
    pub k0: f64,
    /// `ω/k₀`, eikonal phase-mismatch rate (1/bohr).
    pub delta_k: f64,
    /// Packet duration (a.u.).
    pub tau: f64,
    /// Transverse width (bohr).
    pub sigma_r_perp: f64,
    /// Drive period `2π/ω` (a.u.).
    pub period: f64,
    /// Smallest `l` holding all but `ANGULAR_BUDGET` of the packet.
    pub angular_support: u32,
}

impl Derived {
    pub fn describe(&self) -> String {
        format!(
            "k0 = {:.6} 1/bohr\ndelta_k = {:.6e} 1/bohr\ntau = {:.1} a.u.\nsigma_r_perp = {:.3} bohr\nT = {:.1} a.u.\nangular support l <= {}",
            self.k0, self.delta_k, self.tau, self.sigma_r_perp, self.period, self.angular_support
        )
    }
}

#[derive(Clone, Debug)]
pub struct Validated {
    pub config: RunConfig,
    pub derived: Derived,
}

fn absorb(r: Result<()>, errs: &mut Vec<String>) {
    match r {
        Ok(()) => {}
        Err(Error::Validation(v)) => errs.extend(v),
        Err(e) => errs.push(e.to_string()),
    }
}

fn angular_support(packet: &WavePacketSpec) -> Result<u32> {
    let c = project_angular(packet)?;
    let mut inside = 0.0;
    for (l, v) in c.c.iter().enumerate() {
        inside += v * v;
        if 1.0 - inside < ANGULAR_BUDGET {
            return Ok(l as u32);
        }
    }
    Ok(c.l_max())
}

/// Checks every physical and numerical invariant, collecting all violations.
pub fn validate(config: RunConfig) -> Result<Validated> {
    let mut errs = Vec::new();
    let s = &config.solver;
    if s.n_max < 1 {
        errs.push(format!("solver.n_max = {} must be at least 1", s.n_max));
    }
    if let Some(n) = config.eikonal.n_max {
        if n < 1 {
            errs.push(format!("eikonal.n_max = {n} must be at least 1"));
        }
    }
    if !(1e-13..=1e-6).contains(&config.eikonal.rtol) {
        errs.push(format!("eikonal.rtol = {:e} must lie in [1e-13, 1e-6]", config.eikonal.rtol));
    }
    if config.eikonal.b_nodes < 8 {
        errs.push(format!("eikonal.b_nodes = {} is too small (need >= 8)", config.eikonal.b_nodes));
    }
    if s.kind.rmatrix() {
        if s.order < 3 {
            errs.push(format!("solver.order = {} must be at least 3", s.order));
        }
        if s.n_splines < s.order + 2 {
            errs.push(format!("solver.n_splines = {} must exceed order + 1", s.n_splines));
        }
        if s.grid_points < 4 * (s.n_max.max(1) as usize + 1) {
            errs.push(format!("solver.grid_points = {} too small for n_max = {}", s.grid_points, s.n_max));
        }
    }
    if let Some(scan) = &config.scan {
        if scan.values.is_empty() {
            errs.push("scan.values is empty".into());
        }
        if scan.values.iter().any(|v| !v.is_finite()) {
            errs.push("scan.values must be finite".into());
        }
    }
    let mut support = 0;
    for (p, w) in config.points() {
        absorb(p.check(), &mut errs);
        absorb(w.check(), &mut errs);
        if p.sigma_v > 0.0 && s.kind.rmatrix() && s.a0 < 5.0 * p.sigma_v {
            errs.push(format!(
                "solver.a0 = {} bohr is below 5 sigma_v = {} bohr; the potential is not negligible at the boundary",
                s.a0,
                5.0 * p.sigma_v
            ));
        }
        if w.e0 > 0.0 && w.sigma_k > 0.0 && p.omega > 0.0 {
            let (k_lo, _) = w.k_support();
            let e_lo = 0.5 * k_lo * k_lo;
            let n = s.n_max.max(config.eikonal_n_max());
            let kinetic = e_lo - n as f64 * p.omega;
            if kinetic <= 0.0 {
                errs.push(format!(
                    "channel n = {n} is closed: E = {e_lo:.4} - {n} x {} = {kinetic:.4} hartree; lower n_max or raise e0",
                    p.omega
                ));
            }
        }
        if w.check().is_ok() && s.kind.rmatrix() {
            match angular_support(&w) {
                Ok(l) => support = support.max(l),
                Err(e) => errs.push(e.to_string()),
            }
        }
    }
    if s.kind.rmatrix() && support > s.l_max {
        errs.push(format!(
            "solver.l_max = {} below the packet's angular support l = {support} (more than {ANGULAR_BUDGET:e} of the packet would be dropped)",
            s.l_max
        ));
    }
    if s.kind.rmatrix() && config.packet.l_max < s.l_max {
        errs.push(format!("packet.l_max = {} must be at least solver.l_max = {}", config.packet.l_max, s.l_max));
    }
    errs.dedup();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let k0 = config.packet.k0();
    let omega = config.potential.omega;
    let derived = Derived {
        k0,
        delta_k: omega / k0,
        tau: config.packet.duration(),
        sigma_r_perp: config.packet.transverse_width(),
        period: 2.0 * PI / omega,
        angular_support: support,
    };
    Ok(Validated { config, derived })
}
