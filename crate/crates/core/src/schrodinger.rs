//! Linear ψ-representation: the discretized Hamiltonian
//! `H = -(κ²/2m) ∇² + V`, Crank–Nicolson time stepping and lowest
//! eigenpairs.
//!
//! Periodic grids use the wrapped 3-point Laplacian. Clamped grids are hard
//! walls: ψ vanishes at both end points and the Hamiltonian acts on the
//! interior points only, so the trapezoid norm and the Euclidean norm agree.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{Boundary, ComplexField, Grid1D, RealField};

/// Tolerance for the relation κ = 4ανm.
pub const CONSTRAINT_RTOL: f64 = 1e-12;
/// Normalization tolerance for [`Wavefunction`].
pub const NORM_TOLERANCE: f64 = 1e-8;
/// Largest accepted norm drift over one `evolve` run.
pub const NORM_DRIFT_TOLERANCE: f64 = 1e-10;

/// Mass, action scale κ, the effective-mass ratio α and the noise scale ν,
/// tied together by κ = 4ανm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    m: f64,
    kappa: f64,
    alpha: f64,
    nu: f64,
}

impl PhysicalParams {
    pub fn new(m: f64, kappa: f64, alpha: f64, nu: f64) -> Result<Self> {
        for (name, v) in [("m", m), ("kappa", kappa), ("alpha", alpha), ("nu", nu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let product = 4.0 * alpha * nu * m;
        if (kappa - product).abs() > CONSTRAINT_RTOL * kappa {
            return Err(Error::ConstraintViolation { kappa, product });
        }
        let p = Self {
            m,
            kappa,
            alpha,
            nu,
        };
        debug_assert!(
            (p.internal_energy_coefficient() - kappa * kappa / (2.0 * m)).abs()
                <= 1e-10 * kappa * kappa / m
        );
        Ok(p)
    }

    /// Derives ν from κ = 4ανm.
    pub fn with_alpha(m: f64, kappa: f64, alpha: f64) -> Result<Self> {
        if !(m > 0.0 && alpha > 0.0) {
            return Err(Error::InvalidParameter(
                "m and alpha must be positive".into(),
            ));
        }
        Self::new(m, kappa, alpha, kappa / (4.0 * alpha * m))
    }

    /// α = 1/2, i.e. ν = κ/2m: forward/backward drifts of the ground state of
    /// a harmonic well become ∓ωx.
    pub fn nelson(m: f64, kappa: f64) -> Result<Self> {
        Self::with_alpha(m, kappa, 0.5)
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Coefficient 8α²ν²m of the internal energy (∇ln√ρ)²; equals κ²/2m.
    pub fn internal_energy_coefficient(&self) -> f64 {
        8.0 * self.alpha * self.alpha * self.nu * self.nu * self.m
    }

    /// Kinetic prefactor κ²/2m.
    pub fn kinetic_coefficient(&self) -> f64 {
        self.kappa * self.kappa / (2.0 * self.m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Free,
    /// `V = m ω² x² / 2`.
    Harmonic { omega: f64 },
    /// Sampled values; must live on the solver grid.
    Tabulated(RealField),
}

impl PotentialSpec {
    pub fn sample(&self, grid: &Grid1D, params: &PhysicalParams) -> Result<Vec<f64>> {
        match self {
            PotentialSpec::Free => Ok(vec![0.0; grid.len()]),
            PotentialSpec::Harmonic { omega } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "harmonic omega must be positive, got {omega}"
                    )));
                }
                let k = 0.5 * params.mass() * omega * omega;
                Ok(grid.points().iter().map(|x| k * x * x).collect())
            }
            PotentialSpec::Tabulated(v) => {
                if v.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                v.check_finite()?;
                Ok(v.values().to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    psi: ComplexField,
    t: f64,
}

impl Wavefunction {
    /// Wraps an already normalized field.
    pub fn new(psi: ComplexField, t: f64) -> Result<Self> {
        psi.check_finite()?;
        let norm = norm_sq(&psi);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "wavefunction norm {norm} differs from 1"
            )));
        }
        Ok(Self { psi, t })
    }

    /// Rescales to unit norm (zeroing clamped end points first).
    pub fn normalized(mut psi: ComplexField, t: f64) -> Result<Self> {
        psi.check_finite()?;
        if psi.grid().boundary() == Boundary::Clamped {
            let n = psi.len();
            psi.values_mut()[0] = Complex64::new(0.0, 0.0);
            psi.values_mut()[n - 1] = Complex64::new(0.0, 0.0);
        }
        let norm = norm_sq(&psi);
        if !(norm > 0.0) {
            return Err(Error::ZeroWavefunction);
        }
        let s = 1.0 / norm.sqrt();
        for v in psi.values_mut() {
            *v *= s;
        }
        Ok(Self { psi, t })
    }

    pub fn from_fn(grid: Grid1D, t: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::normalized(ComplexField::from_fn(grid, f), t)
    }

    pub fn grid(&self) -> &Grid1D {
        self.psi.grid()
    }

    pub fn psi(&self) -> &ComplexField {
        &self.psi
    }

    pub fn values(&self) -> &[Complex64] {
        self.psi.values()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn density(&self) -> RealField {
        self.psi.map(|z| z.norm_sqr())
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.psi)
    }

    /// `<self|other>` under the grid inner product.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64> {
        inner(&self.psi, other)
    }
}

pub(crate) fn norm_sq(psi: &ComplexField) -> f64 {
    let g = psi.grid();
    psi.values()
        .iter()
        .enumerate()
        .map(|(i, z)| g.weight(i) * z.norm_sqr())
        .sum()
}

pub(crate) fn inner(a: &ComplexField, b: &ComplexField) -> Result<Complex64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let g = a.grid();
    Ok(a.values()
        .iter()
        .zip(b.values())
        .enumerate()
        .map(|(i, (x, y))| x.conj() * y * g.weight(i))
        .sum())
}

/// Discretized `-(κ²/2m)∇² + V` on a fixed grid.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: Grid1D,
    potential: Vec<f64>,
    /// Off-diagonal hopping -(κ²/2m)/h².
    hop: f64,
}

impl Hamiltonian {
    pub fn new(grid: Grid1D, v: &PotentialSpec, params: &PhysicalParams) -> Result<Self> {
        let potential = v.sample(&grid, params)?;
        let h = grid.spacing();
        Ok(Self {
            grid,
            potential,
            hop: -params.kinetic_coefficient() / (h * h),
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    fn diag(&self, i: usize) -> f64 {
        self.potential[i] - 2.0 * self.hop
    }

    /// Range of points the operator acts on (all, or the interior of a
    /// clamped grid).
    fn active(&self) -> std::ops::Range<usize> {
        let n = self.grid.len();
        match self.grid.boundary() {
            Boundary::Periodic => 0..n,
            Boundary::Clamped => 1..n - 1,
        }
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![zero; n];
        let periodic = self.grid.is_periodic();
        let active = self.active();
        for i in active.clone() {
            // clamped end points are walls and contribute nothing
            let left = if i > active.start {
                psi[i - 1]
            } else if periodic {
                psi[n - 1]
            } else {
                zero
            };
            let right = if i + 1 < active.end {
                psi[i + 1]
            } else if periodic {
                psi[0]
            } else {
                zero
            };
            out[i] = psi[i] * self.diag(i) + (left + right) * self.hop;
        }
        out
    }

    /// `<ψ|H|ψ>`, real part only (the operator is symmetric).
    pub fn expectation(&self, psi: &ComplexField) -> Result<f64> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let hpsi = ComplexField::new(self.grid, self.apply(psi.values()))?;
        Ok(inner(psi, &hpsi)?.re)
    }

    /// Dense matrix on the active points.
    pub fn dense(&self) -> DMatrix<f64> {
        let idx: Vec<usize> = self.active().collect();
        let m = idx.len();
        let mut a = DMatrix::zeros(m, m);
        for (r, &i) in idx.iter().enumerate() {
            a[(r, r)] = self.diag(i);
            if r + 1 < m {
                a[(r, r + 1)] += self.hop;
                a[(r + 1, r)] += self.hop;
            }
        }
        if self.grid.is_periodic() {
            a[(0, m - 1)] += self.hop;
            a[(m - 1, 0)] += self.hop;
        }
        a
    }
}

/// Crank–Nicolson propagator `(1 + iτH) ψ' = (1 - iτH) ψ`, τ = dt/2κ.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    hamiltonian: Hamiltonian,
    tau: f64,
}

impl CrankNicolson {
    pub fn new(hamiltonian: Hamiltonian, params: &PhysicalParams, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(Self {
            hamiltonian,
            tau: dt / (2.0 * params.kappa()),
        })
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn step(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        let h = &self.hamiltonian;
        let it = Complex64::new(0.0, self.tau);
        let hpsi = h.apply(psi);
        let range = h.active();
        let rhs: Vec<Complex64> = range.clone().map(|i| psi[i] - it * hpsi[i]).collect();
        let diag: Vec<Complex64> = range
            .clone()
            .map(|i| Complex64::new(1.0, 0.0) + it * h.diag(i))
            .collect();
        let off = it * h.hop;
        let x = if h.grid.is_periodic() {
            solve_cyclic(&diag, off, &rhs)?
        } else {
            solve_tridiagonal(&diag, off, &rhs)?
        };
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        for (k, i) in range.enumerate() {
            out[i] = x[k];
        }
        Ok(out)
    }
}

/// Thomas algorithm for a constant off-diagonal tridiagonal system.
fn solve_tridiagonal(
    diag: &[Complex64],
    off: Complex64,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    let mut beta = diag[0];
    if beta.norm() < 1e-300 {
        return Err(Error::LinearSolve("zero pivot at row 0".into()));
    }
    c[0] = off / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - off * c[i - 1];
        if beta.norm() < 1e-300 {
            return Err(Error::LinearSolve(format!("zero pivot at row {i}")));
        }
        c[i] = off / beta;
        d[i] = (rhs[i] - off * d[i - 1]) / beta;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] = x[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Cyclic tridiagonal solve via Sherman–Morrison.
fn solve_cyclic(diag: &[Complex64], off: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = diag.len();
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= off * off / gamma;
    let x = solve_tridiagonal(&b, off, rhs)?;
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    u[0] = gamma;
    u[n - 1] = off;
    let z = solve_tridiagonal(&b, off, &u)?;
    let num = x[0] + off / gamma * x[n - 1];
    let den = Complex64::new(1.0, 0.0) + z[0] + off / gamma * z[n - 1];
    if den.norm() < 1e-300 {
        return Err(Error::LinearSolve("singular cyclic correction".into()));
    }
    let f = num / den;
    Ok(x.iter().zip(&z).map(|(a, b)| a - f * b).collect())
}

/// Evolves `psi0` for `steps` steps of size `dt`, returning the initial
/// state and every `cadence`-th state (the final state is always included).
pub fn evolve(
    psi0: &Wavefunction,
    v: &PotentialSpec,
    params: &PhysicalParams,
    dt: f64,
    steps: usize,
    cadence: usize,
) -> Result<Vec<Wavefunction>> {
    let cadence = cadence.max(1);
    let grid = *psi0.grid();
    let propagator = CrankNicolson::new(Hamiltonian::new(grid, v, params)?, params, dt)?;
    // clamped end points are walls
    let start = Wavefunction::normalized(psi0.psi.clone(), psi0.t)?;
    let norm0 = start.norm_sq();
    let mut out = vec![start.clone()];
    let mut psi = start.psi.into_values();
    for s in 1..=steps {
        psi = propagator.step(&psi)?;
        if s % cadence == 0 || s == steps {
            let field = ComplexField::new(grid, psi.clone())?;
            let norm = norm_sq(&field);
            let drift = (norm - norm0).abs();
            if drift > NORM_DRIFT_TOLERANCE {
                return Err(Error::NormDrift {
                    drift,
                    tolerance: NORM_DRIFT_TOLERANCE,
                });
            }
            out.push(Wavefunction {
                psi: field,
                t: psi0.t + s as f64 * dt,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub energy: f64,
    pub state: Wavefunction,
}

/// Lowest `k` eigenpairs of the discretized Hamiltonian, ascending.
/// Eigenvectors are normalized under the grid quadrature and signed so that
/// their largest-magnitude sample is positive.
pub fn stationary_states(
    v: &PotentialSpec,
    params: &PhysicalParams,
    grid: Grid1D,
    k: usize,
) -> Result<Vec<Eigenpair>> {
    let h = Hamiltonian::new(grid, v, params)?;
    let dense = h.dense();
    let m = dense.nrows();
    if k > m {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenpairs from a {m}-dimensional operator"
        )));
    }
    let eig = SymmetricEigen::try_new(dense, 1e-15, 100_000)
        .ok_or_else(|| Error::Eigen("symmetric QR did not converge".into()))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let offset = h.active().start;
    let scale = 1.0 / grid.spacing().sqrt();
    order
        .into_iter()
        .take(k)
        .map(|j| {
            let col = eig.eigenvectors.column(j);
            let pivot = col.iter().copied().fold(0.0_f64, |a, b| {
                if b.abs() > a.abs() {
                    b
                } else {
                    a
                }
            });
            let sign = if pivot < 0.0 { -scale } else { scale };
            let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
            for (r, c) in col.iter().enumerate() {
                values[r + offset] = Complex64::new(c * sign, 0.0);
            }
            let state = Wavefunction::normalized(ComplexField::new(grid, values)?, 0.0)?;
            Ok(Eigenpair {
                energy: eig.eigenvalues[j],
                state,
            })
        })
        .collect()
}

/// Gaussian packet `exp(-(x-x0)²/4σ² + i p0 x/κ)` (σ is the position
/// standard deviation of the density).
pub fn gaussian_packet(
    grid: Grid1D,
    center: f64,
    sigma: f64,
    momentum: f64,
    params: &PhysicalParams,
) -> Result<Wavefunction> {
    let k0 = momentum / params.kappa();
    Wavefunction::from_fn(grid, 0.0, |x| {
        let d = x - center;
        Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), k0 * x)
    })
}

/// Coherent state of the harmonic well: the ground state displaced to
/// `center` with mean momentum `momentum`.
pub fn coherent_state(
    grid: Grid1D,
    omega: f64,
    center: f64,
    momentum: f64,
    params: &PhysicalParams,
) -> Result<Wavefunction> {
    let sigma = (params.kappa() / (2.0 * params.mass() * omega)).sqrt();
    gaussian_packet(grid, center, sigma, momentum, params)
}
