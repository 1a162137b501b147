//! Floquet R-matrix solver: inner-region diagonalisation, R/K/S matrices and
//! partial-wave scattering amplitudes.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::prelude::Solve;
use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::potential::{fourier_components, radial_profile, PotentialSpec};
use crate::radial_basis::{overlap_and_kinetic, radial_potential_matrix, RadialBasis};
use crate::specfun::{legendre_all, riccati_bessel};

pub type CMat = Mat<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Distance below which an energy counts as sitting on an inner eigenvalue.
pub const POLE_TOLERANCE: f64 = 1e-12;
/// Shift applied to energies that land on a pole.
pub const POLE_NUDGE: f64 = 1e-10;
/// Matching systems worse conditioned than this are rejected.
pub const MAX_CONDITION: f64 = 1e13;

/// Open Fourier channels `n = -n_max..=n_max` at total quasi-energy `energy`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelGrid {
    pub n_max: i32,
    pub omega: f64,
    pub energy: f64,
    /// `k_n = √(2(E − nω))`, indexed by `n + n_max`.
    pub k: Vec<f64>,
}

impl ChannelGrid {
    pub fn new(n_max: i32, omega: f64, energy: f64) -> Result<Self> {
        let mut k = Vec::with_capacity((2 * n_max + 1) as usize);
        for n in -n_max..=n_max {
            let kinetic = energy - n as f64 * omega;
            if kinetic <= 0.0 {
                return Err(Error::ClosedChannel { channel: n, energy, kinetic });
            }
            k.push((2.0 * kinetic).sqrt());
        }
        Ok(Self { n_max, omega, energy, k })
    }

    pub fn n_channels(&self) -> usize {
        self.k.len()
    }

    pub fn channels(&self) -> impl Iterator<Item = i32> {
        -self.n_max..=self.n_max
    }

    pub fn index(&self, n: i32) -> usize {
        (n + self.n_max) as usize
    }
}

/// Block-structured Floquet Hamiltonian for one partial wave.
///
/// Block `(n, n)` is `T + nω O + c₀V`, block `(n, n−m)` is `c_m V`, where `V`
/// is the matrix of the radial profile and `c_m` the Fourier multipliers.
#[derive(Clone, Debug)]
pub struct FloquetHamiltonian {
    pub l: u32,
    pub n_max: i32,
    pub omega: f64,
    pub a0: f64,
    pub overlap: Mat<f64>,
    pub kinetic: Mat<f64>,
    pub coupling: Mat<f64>,
    pub components: BTreeMap<i32, Complex64>,
}

pub fn assemble_floquet_hamiltonian(
    l: u32,
    basis: &RadialBasis,
    spec: &PotentialSpec,
    n_channels: usize,
) -> Result<FloquetHamiltonian> {
    if n_channels % 2 == 0 {
        return Err(Error::Config(format!("channel count {n_channels} must be odd")));
    }
    let (overlap, kinetic) = overlap_and_kinetic(basis, l);
    let coupling = radial_potential_matrix(basis, |r| radial_profile(spec, r));
    Ok(FloquetHamiltonian {
        l,
        n_max: (n_channels / 2) as i32,
        omega: spec.omega,
        a0: basis.a0,
        overlap,
        kinetic,
        coupling,
        components: fourier_components(spec),
    })
}

impl FloquetHamiltonian {
    pub fn n_channels(&self) -> usize {
        (2 * self.n_max + 1) as usize
    }

    pub fn n_basis(&self) -> usize {
        self.overlap.nrows()
    }

    pub fn dim(&self) -> usize {
        self.n_channels() * self.n_basis()
    }

    /// Fourier multiplier coupling channel `n` to `n − m`.
    fn multiplier(&self, m: i32) -> Complex64 {
        self.components.get(&m).copied().unwrap_or_default()
    }

    /// The full Hamiltonian as a dense complex matrix.
    pub fn dense(&self) -> CMat {
        let nb = self.n_basis();
        let nmax = self.n_max;
        Mat::from_fn(self.dim(), self.dim(), |i, j| {
            let (bi, ri) = (i / nb, i % nb);
            let (bj, rj) = (j / nb, j % nb);
            let (n, np) = (bi as i32 - nmax, bj as i32 - nmax);
            let mut v = self.multiplier(n - np) * self.coupling[(ri, rj)];
            if n == np {
                v += self.kinetic[(ri, rj)] + n as f64 * self.omega * self.overlap[(ri, rj)];
            }
            v
        })
    }

    /// `I ⊗ O`.
    pub fn dense_overlap(&self) -> Mat<f64> {
        let nb = self.n_basis();
        Mat::from_fn(self.dim(), self.dim(), |i, j| {
            if i / nb == j / nb {
                self.overlap[(i % nb, j % nb)]
            } else {
                0.0
            }
        })
    }

    /// Common phase `θ` such that `c_m = |c_m| e^{imθ}` for every component,
    /// if one exists. The Hamiltonian is then `D H(0) D†` with
    /// `D = diag(e^{inθ})`.
    fn gauge_phase(&self) -> Option<f64> {
        let theta = match self.components.iter().find(|(&m, c)| m != 0 && c.norm() > 0.0) {
            Some((&m, c)) if m.abs() == 1 => c.arg() * m as f64,
            Some(_) => return None,
            None => 0.0,
        };
        for (&m, c) in &self.components {
            let rotated = c * Complex64::from_polar(1.0, -(m as f64) * theta);
            if rotated.im.abs() > 1e-15 * c.norm().max(1e-300) || rotated.re < 0.0 && m != 0 {
                return None;
            }
        }
        Some(theta)
    }
}

/// Inner-region eigensystem for one partial wave.
#[derive(Clone, Debug)]
pub struct InnerEigensystem {
    pub l: u32,
    pub n_max: i32,
    pub omega: f64,
    pub a0: f64,
    pub eigenvalues: Vec<f64>,
    /// Channel radial functions at `a0`: row `n + n_max`, column `k`.
    pub surface: CMat,
    /// O-orthonormal eigenvectors, if requested.
    pub vectors: Option<CMat>,
}

impl InnerEigensystem {
    pub fn n_channels(&self) -> usize {
        self.surface.nrows()
    }

    /// Eigensystem of `D H D†` with `D = diag(e^{inθ})`.
    pub fn rephased(&self, theta: f64) -> Self {
        let nch = self.n_channels();
        let phase: Vec<Complex64> =
            (0..nch).map(|c| Complex64::from_polar(1.0, (c as i32 - self.n_max) as f64 * theta)).collect();
        let surface = Mat::from_fn(nch, self.surface.ncols(), |c, k| phase[c] * self.surface[(c, k)]);
        let vectors = self.vectors.as_ref().map(|v| {
            let nb = v.nrows() / nch;
            Mat::from_fn(v.nrows(), v.ncols(), |i, k| phase[i / nb] * v[(i, k)])
        });
        Self { surface, vectors, ..self.clone() }
    }
}

fn lower_inverse(l: faer::MatRef<'_, f64>) -> Mat<f64> {
    let n = l.nrows();
    let mut inv = Mat::<f64>::identity(n, n);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, inv.as_mut(), faer::Par::Seq);
    inv
}

/// Solves the generalised problem `H v = E O v`.
///
/// When the Fourier multipliers share a common phase the problem is reduced to
/// a real symmetric one and rephased afterwards; otherwise a complex Hermitian
/// decomposition is used.
pub fn diagonalize_inner(h: &FloquetHamiltonian, keep_vectors: bool) -> Result<InnerEigensystem> {
    let nb = h.n_basis();
    let nch = h.n_channels();
    let llt = h.overlap.llt(Side::Lower).map_err(|_| Error::Cholesky)?;
    let l_fac = llt.L().to_owned();
    let linv = lower_inverse(l_fac.as_ref());
    let t_red = &linv * &h.kinetic * linv.transpose();
    let v_red = &linv * &h.coupling * linv.transpose();
    let theta = h.gauge_phase();
    let dim = h.dim();

    let build = |mult: &dyn Fn(i32) -> Complex64| -> CMat {
        Mat::from_fn(dim, dim, |i, j| {
            let (bi, ri) = (i / nb, i % nb);
            let (bj, rj) = (j / nb, j % nb);
            let (n, np) = (bi as i32 - h.n_max, bj as i32 - h.n_max);
            let mut v = mult(n - np) * v_red[(ri, rj)];
            if n == np {
                v += t_red[(ri, rj)];
                if ri == rj {
                    v += n as f64 * h.omega;
                }
            }
            v
        })
    };

    let (eigenvalues, u): (Vec<f64>, CMat) = match theta {
        Some(theta) => {
            let mult = |m: i32| h.multiplier(m) * Complex64::from_polar(1.0, -(m as f64) * theta);
            let c = build(&mult);
            let mut real = Mat::from_fn(dim, dim, |i, j| c[(i, j)].re);
            // exact symmetry before the symmetric solver
            for i in 0..dim {
                for j in (i + 1)..dim {
                    let s = 0.5 * (real[(i, j)] + real[(j, i)]);
                    real[(i, j)] = s;
                    real[(j, i)] = s;
                }
            }
            drop(c);
            let eig = real.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen { l: h.l })?;
            let vals: Vec<f64> = (0..dim).map(|k| eig.S()[k]).collect();
            let ur = eig.U();
            let u = keep_vectors.then(|| Mat::from_fn(dim, dim, |i, k| Complex64::new(ur[(i, k)], 0.0)));
            let g = Mat::from_fn(nch, dim, |c, k| Complex64::new(ur[(c * nb + nb - 1, k)], 0.0));
            let sys = finish(h, nb, &l_fac, &linv, vals, g, u);
            return Ok(if theta == 0.0 { sys } else { sys.rephased(theta) });
        }
        None => {
            let mut c = build(&|m| h.multiplier(m));
            for i in 0..dim {
                for j in i..dim {
                    let s = 0.5 * (c[(i, j)] + c[(j, i)].conj());
                    c[(i, j)] = s;
                    c[(j, i)] = s.conj();
                }
            }
            let eig = c.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen { l: h.l })?;
            let vals: Vec<f64> = (0..dim).map(|k| eig.S()[k].re).collect();
            (vals, eig.U().to_owned())
        }
    };
    let g = Mat::from_fn(nch, dim, |c, k| u[(c * nb + nb - 1, k)]);
    Ok(finish(h, nb, &l_fac, &linv, eigenvalues, g, keep_vectors.then_some(u)))
}

/// `last_rows` holds row `last` of every channel block of the reduced
/// eigenvectors `u`; the generalised eigenvectors are `v = (I ⊗ L⁻ᵀ) u`.
fn finish(
    h: &FloquetHamiltonian,
    nb: usize,
    l_fac: &Mat<f64>,
    linv: &Mat<f64>,
    eigenvalues: Vec<f64>,
    last_rows: CMat,
    u: Option<CMat>,
) -> InnerEigensystem {
    let nch = last_rows.nrows();
    let dim = last_rows.ncols();
    // only the last spline is nonzero at a0, where it equals 1, and the last
    // row of L⁻ᵀ has the single entry 1/L[last, last]
    let inv_last = 1.0 / l_fac[(nb - 1, nb - 1)];
    let surface = Mat::from_fn(nch, dim, |c, k| last_rows[(c, k)] * inv_last);
    let vectors = u.map(|u| {
        let mut v = CMat::zeros(dim, dim);
        for c in 0..nch {
            for i in 0..nb {
                for k in 0..dim {
                    let mut s = Complex64::new(0.0, 0.0);
                    for j in i..nb {
                        s += linv[(j, i)] * u[(c * nb + j, k)];
                    }
                    v[(c * nb + i, k)] = s;
                }
            }
        }
        v
    });
    InnerEigensystem {
        l: h.l,
        n_max: h.n_max,
        omega: h.omega,
        a0: h.a0,
        eigenvalues,
        surface,
        vectors,
    }
}

/// `R = (1/2a₀) Σ_k g⁽ᵏ⁾ g⁽ᵏ⁾† / (E_k − E)`.
pub fn rmatrix_at(eig: &InnerEigensystem, energy: f64, a0: f64) -> Result<CMat> {
    let nch = eig.n_channels();
    let mut weights = Vec::with_capacity(eig.eigenvalues.len());
    for &ek in &eig.eigenvalues {
        let d = ek - energy;
        if d.abs() < POLE_TOLERANCE {
            return Err(Error::Pole { energy, eigenvalue: ek, tolerance: POLE_TOLERANCE });
        }
        weights.push(1.0 / (2.0 * a0 * d));
    }
    let g = &eig.surface;
    let scaled = Mat::from_fn(nch, g.ncols(), |c, k| g[(c, k)] * weights[k]);
    let mut r = &scaled * g.adjoint();
    for i in 0..nch {
        r[(i, i)].im = 0.0;
        for j in (i + 1)..nch {
            let s = 0.5 * (r[(i, j)] + r[(j, i)].conj());
            r[(i, j)] = s;
            r[(j, i)] = s.conj();
        }
    }
    Ok(r)
}

/// 1-norm condition number of a square matrix.
fn condition_number(a: &CMat, inverse: &CMat) -> f64 {
    let norm1 = |m: &CMat| {
        (0..m.ncols())
            .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    norm1(a) * norm1(inverse)
}

/// Solves `(φⁿ − a₀Rφⁿ')K = −φʲ + a₀Rφʲ'` and returns `K` with the condition
/// number of the left-hand matrix.
pub fn match_kmatrix(r: &CMat, grid: &ChannelGrid, l: u32, a0: f64) -> Result<(CMat, f64)> {
    let nch = grid.n_channels();
    if r.nrows() != nch {
        return Err(Error::Config(format!("R is {}x{} but the grid has {nch} channels", r.nrows(), r.ncols())));
    }
    let mut pj = vec![0.0; nch];
    let mut dpj = vec![0.0; nch];
    let mut pn = vec![0.0; nch];
    let mut dpn = vec![0.0; nch];
    for (c, &k) in grid.k.iter().enumerate() {
        let rb = riccati_bessel(l, k * a0)?;
        let norm = (2.0 / (PI * k)).sqrt();
        pj[c] = norm * rb.j;
        dpj[c] = norm * k * rb.dj;
        pn[c] = -norm * rb.n;
        dpn[c] = -norm * k * rb.dn;
    }
    let lhs = Mat::from_fn(nch, nch, |i, j| {
        let d = if i == j { Complex64::new(pn[i], 0.0) } else { Complex64::new(0.0, 0.0) };
        d - r[(i, j)] * (a0 * dpn[j])
    });
    let rhs = Mat::from_fn(nch, nch, |i, j| {
        let d = if i == j { Complex64::new(-pj[i], 0.0) } else { Complex64::new(0.0, 0.0) };
        d + r[(i, j)] * (a0 * dpj[j])
    });
    let lu = lhs.partial_piv_lu();
    let inv = lu.inverse();
    let cond = condition_number(&lhs, &inv);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Singular { what: "K-matrix matching system", condition: cond, energy: grid.energy });
    }
    Ok((lu.solve(&rhs), cond))
}

/// `S = (1 + iK)(1 − iK)⁻¹`.
pub fn smatrix(k: &CMat) -> Result<CMat> {
    let n = k.nrows();
    let minus = Mat::from_fn(n, n, |i, j| if i == j { ONE } else { Complex64::new(0.0, 0.0) } - I * k[(i, j)]);
    let plus = Mat::from_fn(n, n, |i, j| if i == j { ONE } else { Complex64::new(0.0, 0.0) } + I * k[(i, j)]);
    let lu = minus.partial_piv_lu();
    let cond = condition_number(&minus, &lu.inverse());
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Numerical(format!("1 - iK is singular (condition number {cond:e})")));
    }
    // (1 + iK) and (1 − iK)⁻¹ commute
    Ok(lu.solve(&plus))
}

/// R, K and S at one `(l, E)`.
#[derive(Clone, Debug)]
pub struct ChannelMatrices {
    pub l: u32,
    pub energy: f64,
    pub r: CMat,
    pub k: CMat,
    pub s: CMat,
    pub condition: f64,
}

pub fn channel_matrices(eig: &InnerEigensystem, energy: f64) -> Result<ChannelMatrices> {
    let grid = ChannelGrid::new(eig.n_max, eig.omega, energy)?;
    let r = rmatrix_at(eig, energy, eig.a0)?;
    let (k, condition) = match_kmatrix(&r, &grid, eig.l, eig.a0)?;
    let s = smatrix(&k)?;
    Ok(ChannelMatrices { l: eig.l, energy, r, k, s, condition })
}

/// Like [`channel_matrices`], shifting the energy by [`POLE_NUDGE`] if it
/// falls on an inner eigenvalue. Returns the shift applied.
pub fn channel_matrices_nudged(eig: &InnerEigensystem, energy: f64) -> Result<(ChannelMatrices, f64)> {
    match channel_matrices(eig, energy) {
        Err(Error::Pole { .. }) => {
            let shifted = energy + POLE_NUDGE;
            log::warn!("l = {}: E = {energy} on an inner pole, shifted by {POLE_NUDGE:e}", eig.l);
            channel_matrices(eig, shifted).map(|m| (m, POLE_NUDGE))
        }
        other => other.map(|m| (m, 0.0)),
    }
}

/// `max |S†S − I|`.
pub fn unitarity_defect(s: &CMat) -> f64 {
    let p = s.adjoint() * s;
    let mut worst = 0.0_f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { ONE } else { Complex64::new(0.0, 0.0) };
            worst = worst.max((p[(i, j)] - target).norm());
        }
    }
    worst
}

/// Scattering amplitude `f_n` for incidence in channel 0 along `k_hat_i`,
/// observed along `k_hat_f`, from the incident-channel S-matrix columns
/// `columns[l][n + n_max] = S_{n0}`.
#[allow(clippy::too_many_arguments)]
pub fn scattering_amplitude_spherical(
    columns: &BTreeMap<u32, Vec<Complex64>>,
    n_max: i32,
    n: i32,
    l_list: &[u32],
    k_i: f64,
    omega: f64,
    k_hat_i: [f64; 3],
    k_hat_f: [f64; 3],
) -> Result<Complex64> {
    let energy = 0.5 * k_i * k_i;
    let grid = ChannelGrid::new(n_max, omega, energy)?;
    let k_n = grid.k[grid.index(n)];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cos_gamma = (dot(k_hat_i, k_hat_f) / (dot(k_hat_i, k_hat_i) * dot(k_hat_f, k_hat_f)).sqrt()).clamp(-1.0, 1.0);
    let l_top = l_list.iter().copied().max().unwrap_or(0) as usize;
    let p = legendre_all(l_top, cos_gamma);
    let mut sum = Complex64::new(0.0, 0.0);
    for &l in l_list {
        let col = columns.get(&l).ok_or(Error::Coverage { l, energy })?;
        let s_n0 = col[grid.index(n)];
        let delta = if n == 0 { ONE } else { Complex64::new(0.0, 0.0) };
        // Σ_m Y_lm(f) Y_lm(i)* = (2l+1)/(4π) P_l(cos γ)
        sum += (delta - s_n0) * ((2 * l + 1) as f64 / (4.0 * PI) * p[l as usize]);
    }
    Ok(2.0 * PI * I / (k_i * k_n).sqrt() * sum)
}
