//! Energy-resolved observables: weighted S-matrix sums, spectra, channel
//! probabilities, mean momentum and parameter scans.
//!
//! Channel label `n` in spectra and probabilities refers to the final energy
//! `E₀ + nω`, i.e. absorption of `n` quanta. In Floquet-channel language this
//! is channel `−n`, since channel `m` carries kinetic energy `E − mω`.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet_rmatrix::{
    assemble_floquet_hamiltonian, channel_matrices_nudged, diagonalize_inner, InnerEigensystem,
};
use crate::potential::PotentialSpec;
use crate::radial_basis::{build_basis, RadialBasis};
use crate::wavepacket::{project_angular, AngularCoefficients, RadialProfile, WavePacketSpec};

pub const DEFAULT_GRID_POINTS: usize = 2000;

/// Uniform energy grid `E_i = E₀ + i h` with `h = ω/M`, `M` odd.
///
/// Commensurability means `E_f + mω` is itself a grid point, so the S-matrix
/// is only ever needed on grid energies, and channel windows of half-width
/// `ω/2` fall exactly halfway between grid points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLattice {
    pub e0: f64,
    pub omega: f64,
    /// Grid points per `ω`.
    pub per_quantum: i64,
    /// Channels `|n| ≤ n_max` are resolved; the grid spans `E₀ ± (n_max+1)ω`.
    pub n_max: i32,
}

impl EnergyLattice {
    pub fn new(e0: f64, omega: f64, n_max: i32, target_points: usize) -> Self {
        let span = 2 * (n_max as i64 + 1);
        let mut m = ((target_points.max(2) as f64 - 1.0) / span as f64).round().max(1.0) as i64;
        if m % 2 == 0 {
            m += 1;
        }
        Self { e0, omega, per_quantum: m, n_max }
    }

    pub fn step(&self) -> f64 {
        self.omega / self.per_quantum as f64
    }

    pub fn index_range(&self) -> (i64, i64) {
        let half = (self.n_max as i64 + 1) * self.per_quantum;
        (-half, half)
    }

    pub fn len(&self) -> usize {
        let (a, b) = self.index_range();
        (b - a + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn energy(&self, i: i64) -> f64 {
        self.e0 + i as f64 * self.step()
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let (a, b) = self.index_range();
        a..=b
    }

    /// Grid indices whose momentum lies in `[k_lo, k_hi]`.
    pub fn indices_in_k(&self, k_lo: f64, k_hi: f64) -> Vec<i64> {
        let h = self.step();
        let lo = ((0.5 * k_lo * k_lo - self.e0) / h).ceil() as i64;
        let hi = ((0.5 * k_hi * k_hi - self.e0) / h).floor() as i64;
        (lo..=hi).filter(|&i| self.energy(i) > 0.0).collect()
    }
}

/// Incident-channel S-matrix columns `S_{m0}`, evaluated at `φ = 0`, keyed by
/// partial wave and lattice index. Entry `m + n_max` of a column is `S_{m0}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct STable {
    pub n_max: i32,
    pub l_max: u32,
    pub columns: BTreeMap<(u32, i64), Vec<Complex64>>,
    /// Energies nudged away from inner poles.
    pub nudged: usize,
}

impl STable {
    /// `S_{m0}^{(l)}(E_i)` at potential phase `phi`: the phase only enters as
    /// the channel gauge `e^{imφ}`.
    pub fn get(&self, l: u32, index: i64, m: i32, phi: f64) -> Option<Complex64> {
        let col = self.columns.get(&(l, index))?;
        let s = *col.get((m + self.n_max) as usize)?;
        Some(if phi == 0.0 { s } else { s * Complex64::from_polar(1.0, m as f64 * phi) })
    }

    pub fn merge(&mut self, other: STable) {
        self.nudged += other.nudged;
        self.columns.extend(other.columns);
    }
}

/// Radial and angular packet factors, both normalised.
#[derive(Clone, Debug)]
pub struct PreparedPacket {
    pub spec: WavePacketSpec,
    pub g: RadialProfile,
    pub c: AngularCoefficients,
}

impl PreparedPacket {
    pub fn new(spec: WavePacketSpec) -> Result<Self> {
        spec.check()?;
        Ok(Self { spec, g: RadialProfile::new(&spec), c: project_angular(&spec)? })
    }
}

/// `Γ_l(k_f) = Σ_m √k_in [δ_m0 − S_m0(E_f + mω)] g(k_in)` at grid point `i`.
pub fn gamma_weighted(
    table: &STable,
    g: &RadialProfile,
    lattice: &EnergyLattice,
    l: u32,
    i: i64,
    phi: f64,
) -> Result<Complex64> {
    let mut sum = Complex64::new(0.0, 0.0);
    for m in -table.n_max..=table.n_max {
        let j = i + m as i64 * lattice.per_quantum;
        let e_in = lattice.energy(j);
        if e_in <= 0.0 {
            continue;
        }
        let k_in = (2.0 * e_in).sqrt();
        if g.negligible(k_in) {
            continue;
        }
        let s = table.get(l, j, m, phi).ok_or(Error::Coverage { l, energy: e_in })?;
        let defect = if m == 0 { Complex64::new(1.0, 0.0) - s } else { -s };
        sum += defect * (k_in.sqrt() * g.eval(k_in));
    }
    Ok(sum)
}

/// Γ_l on every grid point, with the diagnostic `Γ̃_l = ∫ k_f |Γ_l|² dk_f`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaTable {
    pub l_max: u32,
    pub indices: Vec<i64>,
    /// `gamma[l][p]` at grid index `indices[p]`.
    pub gamma: Vec<Vec<Complex64>>,
    pub gamma_tilde: Vec<f64>,
}

pub fn gamma_table(
    table: &STable,
    g: &RadialProfile,
    lattice: &EnergyLattice,
    l_max: u32,
    phi: f64,
) -> Result<GammaTable> {
    let indices: Vec<i64> = lattice.indices().collect();
    let h = lattice.step();
    let mut gamma = Vec::with_capacity(l_max as usize + 1);
    let mut gamma_tilde = Vec::with_capacity(l_max as usize + 1);
    for l in 0..=l_max {
        let row = indices
            .iter()
            .map(|&i| gamma_weighted(table, g, lattice, l, i, phi))
            .collect::<Result<Vec<_>>>()?;
        // k dk = dE
        gamma_tilde.push(h * row.iter().map(|z| z.norm_sqr()).sum::<f64>());
        gamma.push(row);
    }
    Ok(GammaTable { l_max, indices, gamma, gamma_tilde })
}

/// Differential probabilities per unit final energy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    pub lattice: EnergyLattice,
    pub energy: Vec<f64>,
    pub k: Vec<f64>,
    pub direct: Vec<f64>,
    pub scattered: Vec<f64>,
    pub interference: Vec<f64>,
    pub total: Vec<f64>,
}

impl Spectrum {
    /// `∫ total dE`.
    pub fn integral(&self) -> f64 {
        self.lattice.step() * self.total.iter().sum::<f64>()
    }
}

/// Spectrum from partial waves `l ≤ l_max`.
///
/// `P_D = g²Σ|c|²`, `P_S = k_f⁻¹Σ|cΓ|²`, `P_I = −2g k_f^{−1/2} Σ|c|² Re Γ`, and
/// each is multiplied by `k_f` to convert `dP/(k² dk)` into `dP/dE`.
pub fn spectrum(
    table: &STable,
    packet: &PreparedPacket,
    lattice: &EnergyLattice,
    l_max: u32,
    phi: f64,
) -> Result<Spectrum> {
    spectrum_from_gamma(&gamma_table(table, &packet.g, lattice, l_max, phi)?, packet, lattice)
}

pub fn spectrum_from_gamma(gt: &GammaTable, packet: &PreparedPacket, lattice: &EnergyLattice) -> Result<Spectrum> {
    let l_max = gt.l_max;
    let c2: Vec<f64> = (0..=l_max).map(|l| packet.c.get(l).powi(2)).collect();
    let c2_sum: f64 = c2.iter().sum();
    let n = gt.indices.len();
    let mut out = Spectrum {
        lattice: *lattice,
        energy: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        direct: Vec::with_capacity(n),
        scattered: Vec::with_capacity(n),
        interference: Vec::with_capacity(n),
        total: Vec::with_capacity(n),
    };
    for (p, &i) in gt.indices.iter().enumerate() {
        let e = lattice.energy(i);
        if e <= 0.0 {
            return Err(Error::Config(format!("spectrum grid reaches non-positive energy {e}")));
        }
        let k = (2.0 * e).sqrt();
        let g = packet.g.eval(k);
        let mut ps = 0.0;
        let mut pi = 0.0;
        for l in 0..=l_max as usize {
            let z = gt.gamma[l][p];
            ps += c2[l] * z.norm_sqr();
            pi += c2[l] * z.re;
        }
        let direct = k * g * g * c2_sum;
        let scattered = ps;
        let interference = -2.0 * g * k.sqrt() * pi;
        out.energy.push(e);
        out.k.push(k);
        out.direct.push(direct);
        out.scattered.push(scattered);
        out.interference.push(interference);
        out.total.push(direct + scattered + interference);
    }
    Ok(out)
}

/// Scattered part with the cross terms `g(k_in)g(k_in')` between different
/// incident energies dropped.
pub fn scattered_incoherent(
    table: &STable,
    packet: &PreparedPacket,
    lattice: &EnergyLattice,
    l_max: u32,
    phi: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(lattice.len());
    for i in lattice.indices() {
        let mut ps = 0.0;
        for l in 0..=l_max {
            let c2 = packet.c.get(l).powi(2);
            for m in -table.n_max..=table.n_max {
                let j = i + m as i64 * lattice.per_quantum;
                let e_in = lattice.energy(j);
                if e_in <= 0.0 {
                    continue;
                }
                let k_in = (2.0 * e_in).sqrt();
                if packet.g.negligible(k_in) {
                    continue;
                }
                let s = table.get(l, j, m, phi).ok_or(Error::Coverage { l, energy: e_in })?;
                let defect = if m == 0 { Complex64::new(1.0, 0.0) - s } else { -s };
                ps += c2 * k_in * packet.g.eval(k_in).powi(2) * defect.norm_sqr();
            }
        }
        out.push(ps);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelProbabilities {
    pub probabilities: BTreeMap<i32, f64>,
    /// Integration window `[lo, hi]` (hartree) per channel.
    pub windows: BTreeMap<i32, (f64, f64)>,
    pub half_width: f64,
}

impl ChannelProbabilities {
    pub fn get(&self, n: i32) -> f64 {
        self.probabilities.get(&n).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.probabilities.values().sum()
    }
}

/// `P(n)`: integral of `dP/dE` over `E₀ + nω ± ω/2` for `|n| ≤ n_max`.
pub fn channel_probabilities(spec: &Spectrum, omega: f64) -> Result<ChannelProbabilities> {
    let lat = spec.lattice;
    if (omega - lat.omega).abs() > 1e-12 * omega {
        return Err(Error::Config(format!("spectrum grid built for omega = {}, not {omega}", lat.omega)));
    }
    let m = lat.per_quantum;
    let half = (m - 1) / 2;
    let (first, last) = lat.index_range();
    let h = lat.step();
    let mut probabilities = BTreeMap::new();
    let mut windows = BTreeMap::new();
    for n in -lat.n_max..=lat.n_max {
        let centre = n as i64 * m;
        let (lo, hi) = (centre - half, centre + half);
        if lo < first || hi > last {
            return Err(Error::Config(format!("window of channel {n} exceeds the spectrum grid")));
        }
        let p: f64 = (lo..=hi).map(|i| spec.total[(i - first) as usize]).sum::<f64>() * h;
        probabilities.insert(n, p);
        windows.insert(n, (lat.energy(centre) - 0.5 * omega, lat.energy(centre) + 0.5 * omega));
    }
    Ok(ChannelProbabilities { probabilities, windows, half_width: 0.5 * omega })
}

/// `⟨k_f⟩ = ∫ k_f dP/dE dE / ∫ dP/dE dE`.
pub fn mean_momentum(spec: &Spectrum) -> f64 {
    let num: f64 = spec.k.iter().zip(&spec.total).map(|(k, p)| k * p).sum();
    let den: f64 = spec.total.iter().sum();
    num / den
}

/// Radial basis and channel truncation for the R-matrix solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SolverSetup {
    pub order: usize,
    pub n_splines: usize,
    #[serde(with = "bits")]
    pub a0: u64,
    pub n_max: i32,
    pub l_max: u32,
}

mod bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(f64::from_bits(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        Ok(f64::deserialize(d)?.to_bits())
    }
}

impl SolverSetup {
    pub fn new(order: usize, n_splines: usize, a0: f64, n_max: i32, l_max: u32) -> Self {
        Self { order, n_splines, a0: a0.to_bits(), n_max, l_max }
    }

    pub fn a0(&self) -> f64 {
        f64::from_bits(self.a0)
    }

    pub fn n_channels(&self) -> usize {
        (2 * self.n_max + 1) as usize
    }

    /// Desk-scale defaults: order 6, 80 splines, a₀ = 50, 11 channels, l ≤ 60.
    pub fn desk() -> Self {
        Self::new(6, 80, 50.0, 5, 60)
    }

    /// The paper's basis: 150 splines, 21 channels, l ≤ 100.
    pub fn paper() -> Self {
        Self::new(6, 150, 50.0, 10, 100)
    }
}

/// Persistent storage of inner eigensystems.
pub trait EigenStore: Send + Sync {
    fn load(&self, potential: &PotentialSpec, setup: &SolverSetup, l: u32) -> Option<InnerEigensystem>;
    fn store(&self, potential: &PotentialSpec, setup: &SolverSetup, l: u32, eig: &InnerEigensystem);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub memory_hits: usize,
    pub store_hits: usize,
    pub diagonalizations: usize,
}

type MemoKey = (u64, u64, u64, u8, u32);

/// R-matrix pipeline for a fixed basis and channel set, memoising inner
/// eigensystems (always at `φ = 0`) in memory and optionally on disk.
pub struct RMatrixPipeline {
    pub setup: SolverSetup,
    basis: RadialBasis,
    store: Option<Arc<dyn EigenStore>>,
    memo: Mutex<HashMap<MemoKey, Arc<InnerEigensystem>>>,
    memoize: bool,
    memory_hits: AtomicUsize,
    store_hits: AtomicUsize,
    diagonalizations: AtomicUsize,
}

impl RMatrixPipeline {
    pub fn new(setup: SolverSetup, store: Option<Arc<dyn EigenStore>>) -> Result<Self> {
        let basis = build_basis(setup.order, setup.n_splines, setup.a0())?;
        Ok(Self {
            setup,
            basis,
            store,
            memo: Mutex::new(HashMap::new()),
            memoize: true,
            memory_hits: AtomicUsize::new(0),
            store_hits: AtomicUsize::new(0),
            diagonalizations: AtomicUsize::new(0),
        })
    }

    /// Disable in-memory reuse (each request goes to the store or is recomputed).
    pub fn without_memo(mut self) -> Self {
        self.memoize = false;
        self
    }

    pub fn basis(&self) -> &RadialBasis {
        &self.basis
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            memory_hits: self.memory_hits.load(Ordering::Relaxed),
            store_hits: self.store_hits.load(Ordering::Relaxed),
            diagonalizations: self.diagonalizations.load(Ordering::Relaxed),
        }
    }

    pub fn clear_memory(&self) {
        self.memo.lock().expect("memo lock").clear();
    }

    fn memo_key(p: &PotentialSpec, l: u32) -> MemoKey {
        (p.v0.to_bits(), p.sigma_v.to_bits(), p.omega.to_bits(), p.drive as u8, l)
    }

    /// Inner eigensystem of partial wave `l` at `φ = 0`.
    pub fn eigensystem(&self, potential: &PotentialSpec, l: u32) -> Result<Arc<InnerEigensystem>> {
        let p = potential.with_phi(0.0);
        let key = Self::memo_key(&p, l);
        if self.memoize {
            if let Some(e) = self.memo.lock().expect("memo lock").get(&key) {
                self.memory_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(Arc::clone(e));
            }
        }
        let eig = match self.store.as_ref().and_then(|s| s.load(&p, &self.setup, l)) {
            Some(e) => {
                self.store_hits.fetch_add(1, Ordering::Relaxed);
                e
            }
            None => {
                let h = assemble_floquet_hamiltonian(l, &self.basis, &p, self.setup.n_channels())?;
                let e = diagonalize_inner(&h, false)?;
                self.diagonalizations.fetch_add(1, Ordering::Relaxed);
                if let Some(s) = &self.store {
                    s.store(&p, &self.setup, l, &e);
                }
                e
            }
        };
        let eig = Arc::new(eig);
        if self.memoize {
            self.memo.lock().expect("memo lock").insert(key, Arc::clone(&eig));
        }
        Ok(eig)
    }

    /// S-matrix columns for every `l ≤ setup.l_max` at the given grid indices.
    /// Runs in parallel over `l` on the current rayon pool.
    pub fn stable(&self, potential: &PotentialSpec, lattice: &EnergyLattice, indices: &[i64]) -> Result<STable> {
        let parts: Vec<Result<STable>> = (0..=self.setup.l_max)
            .into_par_iter()
            .map(|l| {
                let eig = self.eigensystem(potential, l)?;
                let mut part = STable { n_max: self.setup.n_max, l_max: self.setup.l_max, ..Default::default() };
                let c0 = self.setup.n_max as usize;
                for &i in indices {
                    let (m, shift) = channel_matrices_nudged(&eig, lattice.energy(i))?;
                    if shift != 0.0 {
                        part.nudged += 1;
                    }
                    let col = (0..self.setup.n_channels()).map(|r| m.s[(r, c0)]).collect();
                    part.columns.insert((l, i), col);
                }
                Ok(part)
            })
            .collect();
        let mut table = STable { n_max: self.setup.n_max, l_max: self.setup.l_max, ..Default::default() };
        for part in parts {
            table.merge(part?);
        }
        Ok(table)
    }

    /// S table covering the radial support of `packet` on `lattice`.
    pub fn stable_for_packet(
        &self,
        potential: &PotentialSpec,
        packet: &WavePacketSpec,
        lattice: &EnergyLattice,
    ) -> Result<STable> {
        let (lo, hi) = packet.k_support();
        self.stable(potential, lattice, &lattice.indices_in_k(lo, hi))
    }

    pub fn lattice(&self, packet: &WavePacketSpec, omega: f64, points: usize) -> EnergyLattice {
        EnergyLattice::new(packet.e0, omega, self.setup.n_max, points)
    }

    /// Spectrum for one `(potential, packet)` pair.
    pub fn spectrum(&self, potential: &PotentialSpec, packet: &WavePacketSpec, points: usize) -> Result<Spectrum> {
        check_resolvable(packet, potential.omega);
        let lattice = self.lattice(packet, potential.omega, points);
        let table = self.stable_for_packet(potential, packet, &lattice)?;
        let prepared = PreparedPacket::new(*packet)?;
        spectrum(&table, &prepared, &lattice, self.setup.l_max, potential.phi)
    }
}

fn check_resolvable(packet: &WavePacketSpec, omega: f64) {
    let width = packet.sigma_k * packet.k0();
    if width >= 0.5 * omega {
        log::warn!("energy width {width:.3e} exceeds omega/2; channel peaks overlap");
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    V0,
    Phi,
    SigmaTheta,
    SigmaK,
}

impl ScanAxis {
    pub fn name(&self) -> &'static str {
        match self {
            ScanAxis::V0 => "v0",
            ScanAxis::Phi => "phi",
            ScanAxis::SigmaTheta => "sigma_theta",
            ScanAxis::SigmaK => "sigma_k",
        }
    }

    pub fn apply(&self, value: f64, potential: &PotentialSpec, packet: &WavePacketSpec) -> (PotentialSpec, WavePacketSpec) {
        let (mut p, mut w) = (*potential, *packet);
        match self {
            ScanAxis::V0 => p.v0 = value,
            ScanAxis::Phi => p.phi = value,
            ScanAxis::SigmaTheta => w.sigma_theta = value,
            ScanAxis::SigmaK => w.sigma_k = value,
        }
        (p, w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub value: f64,
    pub probabilities: Option<ChannelProbabilities>,
    pub mean_k: Option<f64>,
    pub total: Option<f64>,
    pub error: Option<String>,
    pub stats: CacheStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanTable {
    pub axis: ScanAxis,
    pub rows: Vec<ScanRow>,
}

impl ScanTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

fn stats_delta(after: CacheStats, before: CacheStats) -> CacheStats {
    CacheStats {
        memory_hits: after.memory_hits - before.memory_hits,
        store_hits: after.store_hits - before.store_hits,
        diagonalizations: after.diagonalizations - before.diagonalizations,
    }
}

/// R-matrix scan: one row per value, failures recorded in the row.
pub fn scan(
    pipeline: &RMatrixPipeline,
    axis: ScanAxis,
    values: &[f64],
    potential: &PotentialSpec,
    packet: &WavePacketSpec,
    points: usize,
) -> ScanTable {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let before = pipeline.stats();
        let (p, w) = axis.apply(value, potential, packet);
        let result = p
            .check()
            .and_then(|_| pipeline.spectrum(&p, &w, points))
            .and_then(|s| Ok((channel_probabilities(&s, p.omega)?, mean_momentum(&s), s.integral())));
        let stats = stats_delta(pipeline.stats(), before);
        rows.push(match result {
            Ok((probs, mean_k, total)) => ScanRow {
                value,
                probabilities: Some(probs),
                mean_k: Some(mean_k),
                total: Some(total),
                error: None,
                stats,
            },
            Err(e) => {
                log::error!("scan {} = {value}: {e}", axis.name());
                ScanRow { value, probabilities: None, mean_k: None, total: None, error: Some(e.to_string()), stats }
            }
        });
    }
    ScanTable { axis, rows }
}
