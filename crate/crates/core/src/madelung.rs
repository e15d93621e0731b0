//! Density/phase decomposition ψ = √ρ e^{iλ}, the drift fields of the
//! stochastic representation and the quantum Euler momentum balance.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{self, Boundary, RealField};
use crate::schrodinger::{PhysicalParams, PotentialSpec, Wavefunction};

/// Relative threshold below which the phase of ψ is not trusted and is
/// inherited from the nearest valid neighbour.
pub const PHASE_FLOOR: f64 = 1e-12;
/// Relative density floor inside logarithms.
pub const LOG_FLOOR: f64 = 1e-30;

/// Density normalization tolerance.
const NORM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MadelungPair {
    rho: RealField,
    lam: RealField,
    t: f64,
}

impl MadelungPair {
    pub fn new(rho: RealField, lam: RealField, t: f64) -> Result<Self> {
        numerics::same_grid(rho.grid(), lam.grid())?;
        rho.check_finite()?;
        lam.check_finite()?;
        if let Some((index, &value)) = rho.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeDensity { index, value });
        }
        let mass = numerics::integrate(&rho)?;
        if (mass - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NonNormalizable(mass));
        }
        Ok(Self { rho, lam, t })
    }

    pub fn rho(&self) -> &RealField {
        &self.rho
    }

    pub fn lam(&self) -> &RealField {
        &self.lam
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Boost λ → λ + k₀x.
    pub fn boosted(&self, k0: f64) -> Self {
        let lam = RealField::from_fn(*self.lam.grid(), |x| k0 * x)
            .zip_with(&self.lam, |a, b| a + b)
            .expect("same grid");
        Self {
            rho: self.rho.clone(),
            lam,
            t: self.t,
        }
    }

    /// Points whose density is above the log floor.
    pub fn trusted(&self) -> Vec<bool> {
        let floor = LOG_FLOOR * self.rho.max();
        self.rho.values().iter().map(|&r| r > floor).collect()
    }
}

/// Wraps an angle difference into (-π, π].
pub fn wrap_phase(d: f64) -> f64 {
    let w = d - 2.0 * PI * (d / (2.0 * PI)).round();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// ρ = |ψ|² and λ = arg ψ unwrapped by a single left-to-right sweep.
pub fn decompose(psi: &Wavefunction) -> Result<MadelungPair> {
    let values = psi.values();
    let grid = *psi.grid();
    let rho: Vec<f64> = values.iter().map(|z| z.norm_sqr()).collect();
    let max = rho.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::ZeroWavefunction);
    }
    let floor = PHASE_FLOOR * max;
    let valid: Vec<bool> = rho.iter().map(|&r| r >= floor).collect();
    let n = values.len();

    // raw phases; invalid points copy the nearest valid neighbour
    let mut raw = vec![0.0; n];
    let mut nearest = vec![usize::MAX; n];
    let mut last = None;
    for i in 0..n {
        if valid[i] {
            last = Some(i);
        }
        if let Some(j) = last {
            nearest[i] = j;
        }
    }
    let mut next = None;
    for i in (0..n).rev() {
        if valid[i] {
            next = Some(i);
        }
        if let Some(j) = next {
            if nearest[i] == usize::MAX || (j - i) < (i - nearest[i]) {
                nearest[i] = j;
            }
        }
    }
    for i in 0..n {
        raw[i] = values[nearest[i]].arg();
    }

    let mut lam = vec![0.0; n];
    lam[0] = raw[0];
    for i in 1..n {
        lam[i] = lam[i - 1] + wrap_phase(raw[i] - raw[i - 1]);
    }
    MadelungPair::new(
        RealField::new(grid, rho)?,
        RealField::new(grid, lam)?,
        psi.time(),
    )
}

/// ψ = √ρ e^{iλ}.
pub fn compose(mp: &MadelungPair) -> Result<Wavefunction> {
    let psi = mp
        .rho
        .zip_with(&mp.lam, |r, l| Complex64::from_polar(r.sqrt(), l))?;
    Wavefunction::normalized(psi, mp.t)
}

/// Decomposes a time series and additionally removes 2π jumps between
/// consecutive snapshots point by point, so that λ is continuous in time.
pub fn decompose_trajectory(states: &[Wavefunction]) -> Result<Vec<MadelungPair>> {
    let mut out: Vec<MadelungPair> = Vec::with_capacity(states.len());
    for s in states {
        let mut mp = decompose(s)?;
        if let Some(prev) = out.last() {
            let shifted: Vec<f64> = mp
                .lam
                .values()
                .iter()
                .zip(prev.lam.values())
                .map(|(&l, &p)| p + wrap_phase(l - p))
                .collect();
            mp.lam = RealField::new(*mp.lam.grid(), shifted)?;
        }
        out.push(mp);
    }
    Ok(out)
}

/// ∇λ computed from wrapped neighbour differences, so that a phase winding
/// across a periodic seam does not produce a spurious jump.
pub fn phase_gradient(lam: &RealField) -> Result<RealField> {
    lam.check_finite()?;
    let grid = *lam.grid();
    let v = lam.values();
    let n = v.len();
    let h = grid.spacing();
    let d = |a: usize, b: usize| wrap_phase(v[b] - v[a]);
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        *o = (d(i - 1, i) + d(i, i + 1)) / (2.0 * h);
    }
    match grid.boundary() {
        Boundary::Periodic => {
            out[0] = (d(n - 1, 0) + d(0, 1)) / (2.0 * h);
            out[n - 1] = (d(n - 2, n - 1) + d(n - 1, 0)) / (2.0 * h);
        }
        Boundary::Clamped => {
            out[0] = (4.0 * d(0, 1) - (d(0, 1) + d(1, 2))) / (2.0 * h);
            out[n - 1] = (4.0 * d(n - 2, n - 1) - (d(n - 3, n - 2) + d(n - 2, n - 1))) / (2.0 * h);
        }
    }
    RealField::new(grid, out)
}

/// ln ρ with the density floor applied.
pub fn log_density(rho: &RealField) -> RealField {
    let floor = LOG_FLOOR * rho.max();
    rho.map(|r| r.max(floor).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftFields {
    /// Mean velocity u_T = (κ/m)∇λ.
    pub v: RealField,
    pub u_forward: RealField,
    pub u_backward: RealField,
    /// Relative velocity u_F − u_B.
    pub u_relative: RealField,
    /// False where the density sits below the log floor.
    pub trusted: Vec<bool>,
}

/// v = (κ/m)∇λ, u_F = v + ν∇ln ρ, u_B = v − ν∇ln ρ, u_r = 2ν∇ln ρ.
pub fn drifts(mp: &MadelungPair, params: &PhysicalParams) -> Result<DriftFields> {
    let grad_lam = phase_gradient(&mp.lam)?;
    let mean = grad_lam.map(|g| params.kappa() / params.mass() * g);
    let osmotic = numerics::gradient(&log_density(&mp.rho))?.map(|g| params.nu() * g);
    let u_forward = mean.zip_with(&osmotic, |a, b| a + b)?;
    let u_backward = mean.zip_with(&osmotic, |a, b| a - b)?;
    // v and u_r are rebuilt from u_F, u_B so both identities hold bit for bit
    let v = u_forward.zip_with(&u_backward, |f, b| 0.5 * (f + b))?;
    let u_relative = u_forward.zip_with(&u_backward, |f, b| f - b)?;
    for f in [&u_forward, &u_backward] {
        f.check_finite()?;
    }
    Ok(DriftFields {
        v,
        u_forward,
        u_backward,
        u_relative,
        trusted: mp.trusted(),
    })
}

/// Max |u_F − u_B − 2ν∇ln ρ| over trusted points.
pub fn consistency_defect(mp: &MadelungPair, d: &DriftFields, params: &PhysicalParams) -> Result<f64> {
    let grad_log = numerics::gradient(&log_density(&mp.rho))?;
    Ok(d
        .u_forward
        .values()
        .iter()
        .zip(d.u_backward.values())
        .zip(grad_log.values())
        .zip(&d.trusted)
        .filter(|(_, &t)| t)
        .map(|(((f, b), g), _)| (f - b - 2.0 * params.nu() * g).abs())
        .fold(0.0, f64::max))
}

/// Quantum potential Q = −(κ²/2m)(∇²√ρ)/√ρ.
pub fn quantum_potential(rho: &RealField, params: &PhysicalParams) -> Result<RealField> {
    let floor = LOG_FLOOR * rho.max();
    let amp = rho.map(|r| r.max(floor).sqrt());
    let lap = numerics::laplacian(&amp)?;
    lap.zip_with(&amp, |l, a| -params.kinetic_coefficient() * l / a)
}

/// Residual of ∂ₜv + v∇v + ∇(V + Q)/m at every interior snapshot of a
/// uniformly spaced trajectory (centred time differences).
#[derive(Debug, Clone)]
pub struct EulerResidual {
    pub times: Vec<f64>,
    pub fields: Vec<RealField>,
    /// Density of the matching snapshot, for masking low-density tails.
    pub densities: Vec<RealField>,
}

impl EulerResidual {
    /// Max |residual| over points with ρ ≥ `rel_threshold`·max ρ.
    pub fn max_abs_where(&self, rel_threshold: f64) -> f64 {
        self.fields
            .iter()
            .zip(&self.densities)
            .map(|(f, rho)| {
                let cut = rel_threshold * rho.max();
                f.values()
                    .iter()
                    .zip(rho.values())
                    .filter(|(_, &r)| r >= cut)
                    .map(|(v, _)| v.abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

pub fn euler_residual(
    trajectory: &[MadelungPair],
    params: &PhysicalParams,
    v: &PotentialSpec,
) -> Result<EulerResidual> {
    if trajectory.len() < 3 {
        return Err(Error::TooFewSnapshots {
            needed: 3,
            got: trajectory.len(),
        });
    }
    let grid = *trajectory[0].rho.grid();
    let potential = RealField::new(grid, v.sample(&grid, params)?)?;
    let velocities = trajectory
        .iter()
        .map(|mp| {
            phase_gradient(&mp.lam).map(|g| g.map(|x| params.kappa() / params.mass() * x))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = EulerResidual {
        times: Vec::new(),
        fields: Vec::new(),
        densities: Vec::new(),
    };
    for s in 1..trajectory.len() - 1 {
        let dt = trajectory[s + 1].t - trajectory[s - 1].t;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(
                "snapshots must be strictly increasing in time".into(),
            ));
        }
        let vel = &velocities[s];
        let dvdt = velocities[s + 1].zip_with(&velocities[s - 1], |a, b| (a - b) / dt)?;
        let advect = vel.zip_with(&numerics::gradient(vel)?, |a, b| a * b)?;
        let q = quantum_potential(&trajectory[s].rho, params)?;
        let force = numerics::gradient(&potential.zip_with(&q, |a, b| a + b)?)?;
        let m = params.mass();
        let residual: Vec<f64> = dvdt
            .values()
            .iter()
            .zip(advect.values())
            .zip(force.values())
            .map(|((a, b), f)| a + b + f / m)
            .collect();
        out.times.push(trajectory[s].t);
        out.fields.push(RealField::new(grid, residual)?);
        out.densities.push(trajectory[s].rho.clone());
    }
    Ok(out)
}

/// Links (i, i+1) of a grid; periodic grids close the ring.
pub(crate) fn links(grid: &numerics::Grid1D) -> impl Iterator<Item = (usize, usize)> {
    let n = grid.len();
    let count = if grid.is_periodic() { n } else { n - 1 };
    (0..count).map(move |i| (i, (i + 1) % n))
}

/// Link-form energy of one slice,
/// `Σ_links [K s_i s_j (2 − 2cos Δλ) + c_U (s_j − s_i)²]/h + Σ w V ρ`
/// with K the kinetic coefficient κ²/2m. For c_U = K this is the
/// lattice expectation of the Hamiltonian.
pub(crate) fn link_energy(
    grid: &numerics::Grid1D,
    rho: &[f64],
    lam: &[f64],
    v: &[f64],
    kinetic: f64,
    internal: f64,
) -> f64 {
    let h = grid.spacing();
    let mut e = 0.0;
    for (i, j) in links(grid) {
        let (si, sj) = (rho[i].sqrt(), rho[j].sqrt());
        let c = 2.0 * (1.0 - (lam[j] - lam[i]).cos());
        e += (kinetic * si * sj * c + internal * (sj - si) * (sj - si)) / h;
    }
    for (i, r) in rho.iter().enumerate() {
        e += grid.weight(i) * v[i] * r;
    }
    e
}
