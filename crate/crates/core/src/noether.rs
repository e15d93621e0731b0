//! Conserved momentum and energy in hydrodynamic and operator form.
//!
//! The hydrodynamic charges use the same link discretization as the action,
//! which makes them identical to the lattice operator expectations:
//! `κ Σ s_i s_{i+1} sin Δλ_i = ⟨ψ|(κ/i)∇|ψ⟩` for the central difference ∇,
//! and the link energy equals ⟨ψ|H|ψ⟩. On a plane wave e^{ikx} both give the
//! lattice dispersion κ sin(kh)/h and (κ²/2m)(2 sin(kh/2)/h)².

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::madelung::{self, MadelungPair};
use crate::numerics::{Boundary, ComplexField, Grid1D};
use crate::schrodinger::{Hamiltonian, PhysicalParams, PotentialSpec, Wavefunction};

pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
pub const VARIANCE_FLOOR: f64 = -1e-10;

pub fn momentum_hydro(mp: &MadelungPair, params: &PhysicalParams) -> f64 {
    let rho = mp.rho().values();
    let lam = mp.lam().values();
    let mut p = 0.0;
    for (i, j) in madelung::links(mp.rho().grid()) {
        p += (rho[i] * rho[j]).sqrt() * (lam[j] - lam[i]).sin();
    }
    params.kappa() * p
}

/// `∫ρ[(m/2)u_T² + 2α²ν²m(∇ln ρ)² + V]` in link form.
pub fn energy_hydro(mp: &MadelungPair, params: &PhysicalParams, v: &PotentialSpec) -> Result<f64> {
    let grid = mp.rho().grid();
    let potential = v.sample(grid, params)?;
    // 2α²ν²m(∇ln ρ)²ρ = 8α²ν²m(∇√ρ)²
    Ok(madelung::link_energy(
        grid,
        mp.rho().values(),
        mp.lam().values(),
        &potential,
        params.kinetic_coefficient(),
        params.internal_energy_coefficient(),
    ))
}

/// Central-difference momentum operator `(κ/i)∇`. Clamped end points are
/// walls: they are neither read nor written.
fn apply_momentum(grid: &Grid1D, psi: &[Complex64], kappa: f64) -> Vec<Complex64> {
    let n = grid.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; n];
    let scale = Complex64::new(0.0, -kappa / (2.0 * grid.spacing()));
    match grid.boundary() {
        Boundary::Periodic => {
            for i in 0..n {
                out[i] = scale * (psi[(i + 1) % n] - psi[(i + n - 1) % n]);
            }
        }
        Boundary::Clamped => {
            for i in 1..n - 1 {
                let left = if i > 1 { psi[i - 1] } else { zero };
                let right = if i + 2 < n { psi[i + 1] } else { zero };
                out[i] = scale * (right - left);
            }
        }
    }
    out
}

fn expectation(psi: &Wavefunction, a_psi: &[Complex64]) -> Result<f64> {
    let z = psi.inner(&ComplexField::new(*psi.grid(), a_psi.to_vec())?)?;
    if z.im.abs() > HERMITICITY_TOLERANCE {
        return Err(Error::Hermiticity(z.im));
    }
    Ok(z.re)
}

pub fn momentum_op(psi: &Wavefunction, params: &PhysicalParams) -> Result<f64> {
    expectation(psi, &apply_momentum(psi.grid(), psi.values(), params.kappa()))
}

pub fn energy_op(psi: &Wavefunction, params: &PhysicalParams, v: &PotentialSpec) -> Result<f64> {
    let h = Hamiltonian::new(*psi.grid(), v, params)?;
    expectation(psi, &h.apply(psi.values()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    Momentum,
    Energy,
}

/// `⟨A²⟩ − ⟨A⟩²` with `⟨A²⟩ = ‖Aψ‖²`.
pub fn variance(psi: &Wavefunction, observable: Observable, params: &PhysicalParams, v: &PotentialSpec) -> Result<f64> {
    let a_psi = match observable {
        Observable::Momentum => apply_momentum(psi.grid(), psi.values(), params.kappa()),
        Observable::Energy => Hamiltonian::new(*psi.grid(), v, params)?.apply(psi.values()),
    };
    let mean = expectation(psi, &a_psi)?;
    let grid = psi.grid();
    let second: f64 = a_psi
        .iter()
        .enumerate()
        .map(|(i, z)| grid.weight(i) * z.norm_sqr())
        .sum();
    let var = second - mean * mean;
    if var < VARIANCE_FLOOR {
        return Err(Error::NegativeVariance(var));
    }
    Ok(var.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeSeries {
    pub times: Vec<f64>,
    pub momentum: Vec<f64>,
    pub energy: Vec<f64>,
}

impl ChargeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest |q(t) − q(0)| relative to max(|q(0)|, `floor`).
    pub fn relative_drift(values: &[f64], floor: f64) -> f64 {
        let Some(&q0) = values.first() else {
            return 0.0;
        };
        let scale = q0.abs().max(floor);
        values.iter().fold(0.0, |m, q| m.max((q - q0).abs() / scale))
    }
}

/// Operator-form P and H of every snapshot.
pub fn charge_series(states: &[Wavefunction], params: &PhysicalParams, v: &PotentialSpec) -> Result<ChargeSeries> {
    let mut series = ChargeSeries {
        times: Vec::with_capacity(states.len()),
        momentum: Vec::with_capacity(states.len()),
        energy: Vec::with_capacity(states.len()),
    };
    let Some(first) = states.first() else {
        return Ok(series);
    };
    let h = Hamiltonian::new(*first.grid(), v, params)?;
    for psi in states {
        series.times.push(psi.time());
        series.momentum.push(momentum_op(psi, params)?);
        series.energy.push(expectation(psi, &h.apply(psi.values()))?);
    }
    Ok(series)
}
