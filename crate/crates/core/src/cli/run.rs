//! Executes a validated configuration and writes CSV tables plus a manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::cli::cache::DiskCache;
use crate::cli::config::{Derived, RunConfig, Validated};
use crate::eikonal::{eikonal_channel_probs, EikonalProbabilities, ImpactQuadrature, Tolerances, TransverseProfile};
use crate::error::{Error, Result};
use crate::observables::{
    channel_probabilities, gamma_table, mean_momentum, spectrum_from_gamma, CacheStats, ChannelProbabilities,
    EigenStore, GammaTable, PreparedPacket, RMatrixPipeline, Spectrum,
};
use crate::potential::PotentialSpec;
use crate::wavepacket::WavePacketSpec;

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub value: Option<f64>,
    pub rmatrix: Option<RmatrixRecord>,
    pub eikonal: Option<EikonalRecord>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RmatrixRecord {
    pub integral: f64,
    pub mean_k: f64,
    pub grid_points: usize,
    pub grid_step: f64,
    pub per_quantum: i64,
    pub window_half_width: f64,
    pub nudged_energies: usize,
    pub cache: CacheStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct EikonalRecord {
    pub delta_k: f64,
    pub b_max: f64,
    pub b_extended: bool,
    pub sum: f64,
    pub max_norm_drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub program: String,
    pub parameter_hash: String,
    pub config: RunConfig,
    pub derived: Derived,
    pub workers: usize,
    pub timings_s: BTreeMap<String, f64>,
    pub cache: CacheStats,
    pub points: Vec<PointRecord>,
    pub failures: usize,
    pub partial: bool,
    pub outputs: Vec<String>,
}

struct Rmatrix {
    spectrum: Spectrum,
    probs: ChannelProbabilities,
    gamma: GammaTable,
    packet: PreparedPacket,
    record: RmatrixRecord,
}

struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.dir.join(name), text)?;
        self.names.push(name.to_string());
        Ok(())
    }
}

fn rmatrix_point(pipeline: &RMatrixPipeline, p: &PotentialSpec, w: &WavePacketSpec, points: usize) -> Result<Rmatrix> {
    let before = pipeline.stats();
    let lattice = pipeline.lattice(w, p.omega, points);
    let table = pipeline.stable_for_packet(p, w, &lattice)?;
    let packet = PreparedPacket::new(*w)?;
    let gamma = gamma_table(&table, &packet.g, &lattice, pipeline.setup.l_max, p.phi)?;
    let spectrum = spectrum_from_gamma(&gamma, &packet, &lattice)?;
    let probs = channel_probabilities(&spectrum, p.omega)?;
    let after = pipeline.stats();
    let record = RmatrixRecord {
        integral: spectrum.integral(),
        mean_k: mean_momentum(&spectrum),
        grid_points: lattice.len(),
        grid_step: lattice.step(),
        per_quantum: lattice.per_quantum,
        window_half_width: probs.half_width,
        nudged_energies: table.nudged,
        cache: CacheStats {
            memory_hits: after.memory_hits - before.memory_hits,
            store_hits: after.store_hits - before.store_hits,
            diagonalizations: after.diagonalizations - before.diagonalizations,
        },
    };
    Ok(Rmatrix { spectrum, probs, gamma, packet, record })
}

fn eikonal_point(config: &RunConfig, p: &PotentialSpec, w: &WavePacketSpec) -> Result<EikonalProbabilities> {
    let k0 = w.k0();
    let quadrature = ImpactQuadrature {
        nodes: config.eikonal.b_nodes,
        tol: Tolerances { rtol: config.eikonal.rtol, ..Tolerances::default() },
    };
    eikonal_channel_probs(
        &TransverseProfile::new(k0, w.sigma_theta),
        p,
        k0,
        p.omega / k0,
        config.eikonal_n_max(),
        &quadrature,
    )
}

/// `Σ_n P(n) k_n` with `k_n = √(2(E₀ + nω))`.
fn eikonal_mean_k(e: &EikonalProbabilities, w: &WavePacketSpec, omega: f64) -> f64 {
    e.probabilities.iter().map(|(&n, &p)| p * (2.0 * (w.e0 + n as f64 * omega)).max(0.0).sqrt()).sum()
}

fn spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::from("E_f,direct,scattered,interference,total\n");
    for i in 0..s.energy.len() {
        let _ = writeln!(out, "{},{},{},{},{}", s.energy[i], s.direct[i], s.scattered[i], s.interference[i], s.total[i]);
    }
    out
}

fn channels_csv(p: &ChannelProbabilities) -> String {
    let mut out = String::from("n,probability,window_lo,window_hi\n");
    for (n, v) in &p.probabilities {
        let (lo, hi) = p.windows[n];
        let _ = writeln!(out, "{n},{v},{lo},{hi}");
    }
    out
}

fn gamma_csv(r: &Rmatrix) -> String {
    let mut out = String::from("l,c_l0,gamma_tilde\n");
    for (l, g) in r.gamma.gamma_tilde.iter().enumerate() {
        let _ = writeln!(out, "{l},{},{g}", r.packet.c.get(l as u32));
    }
    out
}

fn angular_csv(r: &Rmatrix) -> String {
    let mut out = String::from("l,c_l0\n");
    for (l, c) in r.packet.c.c.iter().enumerate() {
        let _ = writeln!(out, "{l},{c}");
    }
    out
}

fn eikonal_channels_csv(e: &EikonalProbabilities) -> String {
    let mut out = String::from("n,probability,scattered\n");
    for (n, v) in &e.probabilities {
        let _ = writeln!(out, "{n},{v},{}", e.scattered[n]);
    }
    out
}

fn trajectories_csv(e: &EikonalProbabilities) -> String {
    let n_max = e.trajectories.first().map_or(0, |t| t.n_max);
    let mut out = String::from("b,weight");
    for n in -n_max..=n_max {
        let _ = write!(out, ",pop_{n}");
    }
    out.push('\n');
    for (t, w) in e.trajectories.iter().zip(&e.weights) {
        let _ = write!(out, "{},{w}", t.b);
        for p in t.populations() {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

fn header(lead: &str, n_max: i32, tail: &str) -> String {
    let mut h = lead.to_string();
    for n in -n_max..=n_max {
        let _ = write!(h, ",P({n})");
    }
    h.push_str(tail);
    h.push('\n');
    h
}

/// Per-`n` overlay of both solvers: `rel_diff = |P^E(n) − P̄| / max(P(n), P(−n), P^E(n))`.
fn comparison_rows(out: &mut String, value: &str, r: &ChannelProbabilities, e: &EikonalProbabilities) {
    let n_max = r.probabilities.keys().max().copied().unwrap_or(0).min(e.probabilities.keys().max().copied().unwrap_or(0));
    for n in -n_max..=n_max {
        let (a, b, pe) = (r.get(n), r.get(-n), e.get(n));
        let mean = 0.5 * (a + b);
        let scale = a.max(b).max(pe);
        let rel = if scale > 0.0 { (pe - mean).abs() / scale } else { 0.0 };
        let _ = writeln!(out, "{value}{n},{a},{b},{mean},{pe},{rel}");
    }
}

/// Runs `validated` in `out_dir` on a pool of `workers` threads (0: all cores).
pub fn run(validated: &Validated, out_dir: &Path, workers: usize) -> Result<Manifest> {
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| run_inner(validated, out_dir, pool.current_num_threads()))
}

fn run_inner(validated: &Validated, out_dir: &Path, workers: usize) -> Result<Manifest> {
    let config = &validated.config;
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut out = Outputs { dir: out_dir.to_path_buf(), names: Vec::new() };
    let mut timings = BTreeMap::new();

    let store: Option<Arc<dyn EigenStore>> = match &config.output.cache_dir {
        Some(d) => Some(Arc::new(DiskCache::open(d)?)),
        None => None,
    };
    let pipeline = if config.solver.kind.rmatrix() {
        let t = Instant::now();
        let p = RMatrixPipeline::new(config.solver.setup(), store)?;
        timings.insert("basis".to_string(), t.elapsed().as_secs_f64());
        Some(p)
    } else {
        None
    };

    let scan = config.scan.as_ref();
    let points = config.points();
    let per_point = scan.is_some();
    let mut records = Vec::with_capacity(points.len());
    let (mut t_rm, mut t_ek) = (0.0, 0.0);
    let n_rm = config.solver.n_max;
    let n_ek = config.eikonal_n_max();
    let value_lead = scan.map_or(String::new(), |s| format!("{},", s.axis.name()));
    let mut scan_rm = header(scan.map_or("value", |s| s.axis.name()), n_rm, ",mean_k,total,status");
    let mut scan_ek = header(scan.map_or("value", |s| s.axis.name()), n_ek, ",mean_k,interference,status");
    let mut comparison = format!("{value_lead}n,P_rmatrix(n),P_rmatrix(-n),P_rmatrix_mean,P_eikonal,rel_diff\n");

    for (index, (p, w)) in points.iter().enumerate() {
        let value = scan.map(|s| s.values[index]);
        let suffix = if per_point { format!("_{index}") } else { String::new() };
        let vtext = value.map_or(String::new(), |v| format!("{v},"));
        let mut record = PointRecord { index, value, rmatrix: None, eikonal: None, errors: Vec::new() };

        let mut rm_probs = None;
        if let Some(pipe) = &pipeline {
            let t = Instant::now();
            let res = rmatrix_point(pipe, p, w, config.solver.grid_points);
            t_rm += t.elapsed().as_secs_f64();
            match res {
                Ok(r) => {
                    out.write(&format!("spectrum{suffix}.csv"), &spectrum_csv(&r.spectrum))?;
                    out.write(&format!("channels{suffix}.csv"), &channels_csv(&r.probs))?;
                    out.write(&format!("gamma{suffix}.csv"), &gamma_csv(&r))?;
                    out.write(&format!("angular{suffix}.csv"), &angular_csv(&r))?;
                    let _ = write!(scan_rm, "{}", value.unwrap_or(0.0));
                    for v in r.probs.probabilities.values() {
                        let _ = write!(scan_rm, ",{v}");
                    }
                    let _ = writeln!(scan_rm, ",{},{},ok", r.record.mean_k, r.record.integral);
                    record.rmatrix = Some(r.record);
                    rm_probs = Some(r.probs);
                }
                Err(e) => {
                    log::error!("R-matrix point {index}: {e}");
                    let _ = write!(scan_rm, "{}", value.unwrap_or(0.0));
                    for _ in -n_rm..=n_rm {
                        scan_rm.push_str(",NaN");
                    }
                    let _ = writeln!(scan_rm, ",NaN,NaN,failed");
                    record.errors.push(format!("rmatrix: {e}"));
                }
            }
        }

        if config.solver.kind.eikonal() {
            let t = Instant::now();
            let res = eikonal_point(config, p, w);
            t_ek += t.elapsed().as_secs_f64();
            match res {
                Ok(e) => {
                    out.write(&format!("eikonal_channels{suffix}.csv"), &eikonal_channels_csv(&e))?;
                    if config.eikonal.trajectories {
                        out.write(&format!("eikonal_trajectories{suffix}.csv"), &trajectories_csv(&e))?;
                    }
                    let _ = write!(scan_ek, "{}", value.unwrap_or(0.0));
                    for v in e.probabilities.values() {
                        let _ = write!(scan_ek, ",{v}");
                    }
                    let _ = writeln!(scan_ek, ",{},{},ok", eikonal_mean_k(&e, w, p.omega), e.interference);
                    if let Some(r) = &rm_probs {
                        comparison_rows(&mut comparison, &vtext, r, &e);
                    }
                    record.eikonal = Some(EikonalRecord {
                        delta_k: p.omega / w.k0(),
                        b_max: e.b_max,
                        b_extended: e.b_extended,
                        sum: e.probabilities.values().sum(),
                        max_norm_drift: e.trajectories.iter().map(|t| t.norm_drift).fold(0.0, f64::max),
                    });
                }
                Err(e) => {
                    log::error!("eikonal point {index}: {e}");
                    let _ = write!(scan_ek, "{}", value.unwrap_or(0.0));
                    for _ in -n_ek..=n_ek {
                        scan_ek.push_str(",NaN");
                    }
                    let _ = writeln!(scan_ek, ",NaN,NaN,failed");
                    record.errors.push(format!("eikonal: {e}"));
                }
            }
        }
        records.push(record);
    }

    if scan.is_some() {
        if config.solver.kind.rmatrix() {
            out.write("scan.csv", &scan_rm)?;
        }
        if config.solver.kind.eikonal() {
            out.write("eikonal_scan.csv", &scan_ek)?;
        }
    }
    if config.solver.kind == crate::cli::config::SolverKind::Both {
        out.write("comparison.csv", &comparison)?;
    }
    if pipeline.is_some() {
        timings.insert("rmatrix".to_string(), t_rm);
    }
    if config.solver.kind.eikonal() {
        timings.insert("eikonal".to_string(), t_ek);
    }
    timings.insert("total".to_string(), started.elapsed().as_secs_f64());

    let failures = records.iter().filter(|r| !r.errors.is_empty()).count();
    out.names.push("manifest.json".into());
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA,
        program: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        parameter_hash: config.parameter_hash(),
        config: config.clone(),
        derived: validated.derived,
        workers,
        timings_s: timings,
        cache: pipeline.as_ref().map(|p| p.stats()).unwrap_or_default(),
        points: records,
        failures,
        partial: failures > 0,
        outputs: out.names.clone(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}
