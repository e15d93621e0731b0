//! Free scalar field on a periodic 1D lattice.
//!
//! With sites φ_i, spacing dx and K = −Δ + μ² (periodic second difference
//! scaled by 1/dx²), the functional Hamiltonian is
//!
//! ```text
//! H = −(κ²c²/2dx) Σ_i ∂²/∂φ_i² + (dx/2) φᵀKφ
//! ```
//!
//! i.e. coupled oscillators with mass dx/c² and frequencies ω_k = c√k_k.
//! The ground state is Ψ₀ ∝ exp(−φᵀAφ/2) with A = (dx/κc) K^{1/2} and
//! E0 = (κ/2) Σ ω_k; |Ψ₀|² has covariance A⁻¹/2.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues of K above `-NEGATIVE_EIGEN_TOLERANCE` are clipped to zero.
pub const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-12;
/// Minimum ensemble size for [`two_point`].
pub const MIN_SAMPLES: usize = 1000;
/// Relative size below which a K eigenvalue counts as a zero mode.
const ZERO_MODE_RTOL: f64 = 1e-12;

pub type FieldVector = DVector<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eval(&self, phi: &FieldVector) -> f64 {
        phi.dot(&(&self.matrix * phi))
    }
}

#[derive(Debug, Clone)]
pub struct LatticeFieldSystem {
    n_sites: usize,
    dx: f64,
    c: f64,
    kappa: f64,
    mu: f64,
    form: QuadraticForm,
    /// Ascending eigenvalues of K (clipped at zero) and their eigenvectors.
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

pub fn build_system(n_sites: usize, dx: f64, c: f64, kappa: f64, mu: f64) -> Result<LatticeFieldSystem> {
    if n_sites == 0 {
        return Err(Error::InvalidParameter("lattice needs at least one site".into()));
    }
    for (name, v) in [("dx", dx), ("c", c), ("kappa", kappa)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::InvalidParameter(format!("mu must be non-negative, got {mu}")));
    }
    let n = n_sites;
    let inv = 1.0 / (dx * dx);
    let mut k = DMatrix::from_diagonal_element(n, n, mu * mu);
    // on a one-site ring both neighbours are the site itself and cancel
    if n > 1 {
        for i in 0..n {
            let j = (i + 1) % n;
            k[(i, i)] += 2.0 * inv;
            k[(i, j)] -= inv;
            k[(j, i)] -= inv;
        }
    }
    let eig = SymmetricEigen::try_new(k.clone(), 1e-15, 100_000)
        .ok_or_else(|| Error::Eigen("quadratic form did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut eigenvalues = Vec::with_capacity(n);
    for &i in &order {
        let v = eig.eigenvalues[i];
        if v < -NEGATIVE_EIGEN_TOLERANCE * scale {
            return Err(Error::NotPositiveDefinite(format!("K has eigenvalue {v}")));
        }
        eigenvalues.push(v.max(0.0));
    }
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(LatticeFieldSystem {
        n_sites,
        dx,
        c,
        kappa,
        mu,
        form: QuadraticForm { matrix: k },
        eigenvalues,
        eigenvectors,
    })
}

impl LatticeFieldSystem {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn form(&self) -> &QuadraticForm {
        &self.form
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Mask of modes with vanishing frequency (the constant mode when μ = 0).
    pub fn zero_modes(&self) -> Vec<bool> {
        let scale = self.eigenvalues.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        self.eigenvalues
            .iter()
            .map(|&v| v <= ZERO_MODE_RTOL * scale)
            .collect()
    }

    pub fn has_zero_mode(&self) -> bool {
        self.zero_modes().iter().any(|&z| z)
    }

    /// Classical potential energy `(dx/2) φᵀKφ`.
    pub fn potential_energy(&self, phi: &FieldVector) -> f64 {
        0.5 * self.dx * self.form.eval(phi)
    }

    /// `V f(Λ) Vᵀ` for a function of the K eigenvalues.
    fn spectral(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.n_sites,
            self.eigenvalues.iter().map(|&v| f(v)),
        ));
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }
}

/// Ascending mode frequencies `ω_k = c√k_k`.
pub fn normal_modes(system: &LatticeFieldSystem) -> Vec<f64> {
    system.eigenvalues.iter().map(|&v| system.c * v.sqrt()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGroundState {
    pub mode_frequencies: Vec<f64>,
    /// Ψ₀[φ] ∝ exp(−φᵀAφ/2).
    pub width: DMatrix<f64>,
    pub e0: f64,
}

impl GaussianGroundState {
    /// Same ansatz with a different width matrix; `e0` is kept as reference.
    pub fn with_width(&self, width: DMatrix<f64>) -> Self {
        Self {
            width,
            ..self.clone()
        }
    }

    /// Covariance `A⁻¹/2` of |Ψ₀|².
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let inv = self
            .width
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("width matrix".into()))?
            .inverse();
        Ok(inv * 0.5)
    }
}

pub fn ground_state(system: &LatticeFieldSystem) -> Result<GaussianGroundState> {
    if system.has_zero_mode() {
        return Err(Error::NotPositiveDefinite(
            "zero mode has no normalizable ground state".into(),
        ));
    }
    let mode_frequencies = normal_modes(system);
    let width = system.spectral(|v| v.sqrt()) * (system.dx / (system.kappa * system.c));
    if width.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("width matrix".into()));
    }
    let e0 = 0.5 * system.kappa * mode_frequencies.iter().sum::<f64>();
    Ok(GaussianGroundState {
        mode_frequencies,
        width,
        e0,
    })
}

/// `(HΨ)[φ]/Ψ[φ] = −(κ²c²/2dx)(φᵀA²φ − tr A) + (dx/2)φᵀKφ`.
pub fn local_energy(gs: &GaussianGroundState, phi: &FieldVector, system: &LatticeFieldSystem) -> f64 {
    let a_phi = &gs.width * phi;
    let kinetic = system.kappa * system.kappa * system.c * system.c / (2.0 * system.dx);
    -kinetic * (a_phi.norm_squared() - gs.width.trace()) + system.potential_energy(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Field-space noise intensity; the increment covariance is 2ν_f·dt·I.
    pub nu_f: f64,
    pub dt: f64,
    /// Steps discarded at the start of each chain.
    pub burn_in: usize,
    /// Steps between stored samples.
    pub stride: usize,
    pub chains: usize,
}

impl SamplerConfig {
    /// dt with b_max·dt = 0.005 and a stride of three relaxation times of
    /// the slowest mode, where b = 2ν_f·(eigenvalue of A). The Euler–Maruyama
    /// bias of the stationary variance is then about b·dt/2 ≤ 0.25%.
    pub fn auto(gs: &GaussianGroundState, nu_f: f64, chains: usize) -> Result<Self> {
        if !(nu_f.is_finite() && nu_f > 0.0) {
            return Err(Error::InvalidParameter(format!("nu_f must be positive, got {nu_f}")));
        }
        let a = SymmetricEigen::new(gs.width.clone()).eigenvalues;
        let b_max = 2.0 * nu_f * a.max();
        let b_min = 2.0 * nu_f * a.min();
        if !(b_min > 0.0) {
            return Err(Error::NotPositiveDefinite("width matrix".into()));
        }
        let dt = 0.005 / b_max;
        let stride = (3.0 / (b_min * dt)).ceil() as usize;
        Ok(Self {
            nu_f,
            dt,
            burn_in: 3 * stride,
            stride,
            chains: chains.max(1),
        })
    }
}

/// Euler–Maruyama for dφ = −2ν_f Aφ dt + ξ. Chain c uses ChaCha8 stream c
/// of `seed` and contributes a contiguous block of samples; blocks are
/// concatenated in chain order.
pub fn sample_ground_ensemble(
    gs: &GaussianGroundState,
    system: &LatticeFieldSystem,
    count: usize,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Vec<FieldVector>> {
    if system.mu <= 0.0 || system.has_zero_mode() {
        return Err(Error::InvalidParameter(
            "sampling needs mu > 0 (the massless ring has a flat zero mode)".into(),
        ));
    }
    if !(config.nu_f > 0.0 && config.dt > 0.0) || config.stride == 0 || config.chains == 0 {
        return Err(Error::InvalidParameter("invalid sampler configuration".into()));
    }
    let n = system.n_sites;
    let drift = &gs.width * (-2.0 * config.nu_f);
    let sigma = (2.0 * config.nu_f * config.dt).sqrt();
    // stored norms beyond this many covariance traces mean the scheme blew up
    let blowup = 1e6 * gs.covariance()?.trace();
    let per_chain: Vec<usize> = (0..config.chains)
        .map(|c| count / config.chains + usize::from(c < count % config.chains))
        .collect();
    let blocks: Vec<Result<Vec<FieldVector>>> = per_chain
        .par_iter()
        .enumerate()
        .map(|(chain, &wanted)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chain as u64);
            let mut phi = FieldVector::zeros(n);
            let mut noise = FieldVector::zeros(n);
            let mut out = Vec::with_capacity(wanted);
            let total = config.burn_in + wanted * config.stride;
            for step in 1..=total {
                for z in noise.iter_mut() {
                    *z = StandardNormal.sample(&mut rng);
                }
                let d = &drift * &phi;
                phi += d * config.dt + &noise * sigma;
                if step > config.burn_in && (step - config.burn_in).is_multiple_of(config.stride) {
                    let norm = phi.norm_squared();
                    if !(norm.is_finite() && norm < blowup) {
                        return Err(Error::Divergence(step));
                    }
                    out.push(phi.clone());
                }
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::with_capacity(count);
    for b in blocks {
        samples.extend(b?);
    }
    Ok(samples)
}

/// Sample covariance ⟨φ_i φ_j⟩ − ⟨φ_i⟩⟨φ_j⟩ (normalized by N − 1).
pub fn two_point(ensemble: &[FieldVector]) -> Result<DMatrix<f64>> {
    if ensemble.len() < MIN_SAMPLES {
        return Err(Error::DegenerateEnsemble(format!(
            "{} samples, need at least {MIN_SAMPLES}",
            ensemble.len()
        )));
    }
    let n = ensemble[0].len();
    if n == 0 || ensemble.iter().any(|p| p.len() != n) {
        return Err(Error::DegenerateEnsemble("samples differ in length".into()));
    }
    let count = ensemble.len() as f64;
    let mean = ensemble.iter().fold(FieldVector::zeros(n), |acc, p| acc + p) / count;
    let mut cov = DMatrix::zeros(n, n);
    for p in ensemble {
        let d = p - &mean;
        cov.syger(1.0, &d, &d, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    Ok(cov / (count - 1.0))
}

/// One-sigma sampling error of each covariance entry for Gaussian data,
/// `sqrt((C_ii C_jj + C_ij²)/N)`.
pub fn covariance_standard_error(cov: &DMatrix<f64>, samples: usize) -> DMatrix<f64> {
    let n = cov.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)] * cov[(i, j)]) / samples as f64).sqrt()
    })
}
