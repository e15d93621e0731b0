//! Forward and backward trajectory ensembles.
//!
//! Each trajectory owns a ChaCha8 substream (stream id = trajectory index)
//! seeded from the master seed, so results do not depend on how the
//! ensemble is partitioned across threads. The Gaussian increment has
//! variance `2ν|dt|`, which is the diffusion constant that makes the
//! Fokker–Planck currents `ρ(u_F − ν∇ln ρ)` and `ρ(u_B + ν∇ln ρ)` hold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::madelung::{self, DriftFields};
use crate::numerics::{self, Grid1D, RealField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    nu: f64,
    master_seed: u64,
}

impl NoiseParams {
    pub fn new(nu: f64, master_seed: u64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise scale nu must be positive, got {nu}"
            )));
        }
        Ok(Self { nu, master_seed })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Standard deviation of one increment of length `|dt|`.
    pub fn increment_sigma(&self, dt: f64) -> f64 {
        (2.0 * self.nu * dt.abs()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    positions: Vec<f64>,
    t: f64,
    streams: Vec<ChaCha8Rng>,
}

impl Ensemble {
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Substream identifier of each trajectory.
    pub fn lineage(&self) -> impl Iterator<Item = u64> + '_ {
        self.streams.iter().map(|s| s.get_stream())
    }

    pub fn mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.positions.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (self.len() - 1) as f64
    }
}

/// Draws `count` positions from `rho0` by inverting its piecewise-linear
/// CDF (density constant on each grid cell).
pub fn sample_initial(rho0: &RealField, count: usize, noise: &NoiseParams, t0: f64) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::EmptyEnsemble);
    }
    rho0.check_finite()?;
    let grid = *rho0.grid();
    let mut cumulative = Vec::with_capacity(grid.len());
    let mut total = 0.0;
    for (i, &r) in rho0.values().iter().enumerate() {
        if r < 0.0 {
            return Err(Error::NegativeDensity { index: i, value: r });
        }
        total += r * grid.weight(i);
        cumulative.push(total);
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NonNormalizable(total));
    }
    let streams: Vec<ChaCha8Rng> = (0..count as u64)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.master_seed);
            rng.set_stream(id);
            rng
        })
        .collect();
    let mut ens = Ensemble {
        positions: vec![0.0; count],
        t: t0,
        streams,
    };
    ens.positions
        .par_iter_mut()
        .zip(ens.streams.par_iter_mut())
        .for_each(|(x, rng)| {
            let target = rng.gen::<f64>() * total;
            let i = cumulative
                .partition_point(|&c| c <= target)
                .min(grid.len() - 1);
            let before = if i == 0 { 0.0 } else { cumulative[i - 1] };
            let mass = cumulative[i] - before;
            let frac = if mass > 0.0 {
                ((target - before) / mass).clamp(0.0, 1.0)
            } else {
                0.5
            };
            let (left, width) = grid.cell(i);
            *x = grid.fold(left + frac * width);
        });
    Ok(ens)
}

/// Drift field sampled on a grid at increasing times, interpolated
/// linearly in both x and t.
#[derive(Debug, Clone)]
pub struct DriftInterpolant {
    grid: Grid1D,
    times: Vec<f64>,
    fields: Vec<RealField>,
}

impl DriftInterpolant {
    pub fn new(times: Vec<f64>, fields: Vec<RealField>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(Error::InvalidParameter(
                "need one drift field per time".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "drift times must increase strictly".into(),
            ));
        }
        let grid = *fields[0].grid();
        for f in &fields {
            numerics::same_grid(&grid, f.grid())?;
            f.check_finite()?;
        }
        Ok(Self {
            grid,
            times,
            fields,
        })
    }

    /// A time-independent drift valid for all t.
    pub fn stationary(field: RealField) -> Result<Self> {
        field.check_finite()?;
        Ok(Self {
            grid: *field.grid(),
            times: vec![f64::NEG_INFINITY, f64::INFINITY],
            fields: vec![field.clone(), field],
        })
    }

    /// Forward or backward drifts of a Madelung trajectory.
    pub fn from_drifts(times: Vec<f64>, drifts: &[DriftFields], direction: Direction) -> Result<Self> {
        let fields = drifts
            .iter()
            .map(|d| match direction {
                Direction::Forward => d.u_forward.clone(),
                Direction::Backward => d.u_backward.clone(),
            })
            .collect();
        Self::new(times, fields)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn window(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    /// Bracketing snapshot pair and weight for time `t`.
    fn bracket(&self, t: f64) -> Result<(usize, usize, f64)> {
        let (start, end) = self.window();
        let slack = 1e-9 * (end - start).abs().max(1.0);
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::OutOfTimeRange { t, start, end });
        }
        if self.times.len() == 1 {
            return Ok((0, 0, 0.0));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = if t0.is_finite() && t1.is_finite() {
            ((t - t0) / (t1 - t0)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Ok((k - 1, k, w))
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        let (a, b, w) = self.bracket(t)?;
        Ok(self.eval_bracketed(x, a, b, w))
    }

    fn eval_bracketed(&self, x: f64, a: usize, b: usize, w: f64) -> f64 {
        let fa = numerics::interpolate(&self.fields[a], x);
        if w == 0.0 {
            return fa;
        }
        let fb = numerics::interpolate(&self.fields[b], x);
        (1.0 - w) * fa + w * fb
    }
}

fn step(mut ens: Ensemble, drift: &DriftInterpolant, dt: f64, noise: &NoiseParams) -> Result<Ensemble> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let (a, b, w) = drift.bracket(ens.t)?;
    let sigma = noise.increment_sigma(dt);
    let grid = drift.grid;
    ens.positions
        .par_iter_mut()
        .zip(ens.streams.par_iter_mut())
        .for_each(|(x, rng)| {
            let xi: f64 = rng.sample(StandardNormal);
            let u = drift.eval_bracketed(*x, a, b, w);
            *x = grid.fold(*x + u * dt + sigma * xi);
        });
    ens.t += dt;
    if let Some(index) = ens.positions.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "ensemble",
            index,
        });
    }
    Ok(ens)
}

/// One Euler–Maruyama step `x ← x + u_F(x,t)dt + ξ`, dt > 0.
pub fn step_forward(ens: Ensemble, u_forward: &DriftInterpolant, dt: f64, noise: &NoiseParams) -> Result<Ensemble> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "forward steps need dt > 0, got {dt}"
        )));
    }
    step(ens, u_forward, dt, noise)
}

/// One backward step `x ← x + u_B(x,t)dt + ξ`, dt < 0.
pub fn step_backward(ens: Ensemble, u_backward: &DriftInterpolant, dt: f64, noise: &NoiseParams) -> Result<Ensemble> {
    if !(dt < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "backward steps need dt < 0, got {dt}"
        )));
    }
    step(ens, u_backward, dt, noise)
}

/// Cell histogram normalized to unit integral.
pub fn empirical_density(ens: &Ensemble, grid: &Grid1D) -> Result<RealField> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut counts = vec![0usize; grid.len()];
    for &x in &ens.positions {
        counts[grid.cell_index(x)] += 1;
    }
    let n = ens.len() as f64;
    let values = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / (n * grid.weight(i)))
        .collect();
    RealField::new(*grid, values)
}

/// `ρ(u − ν∇ln ρ)` (forward) or `ρ(u + ν∇ln ρ)` (backward).
pub fn fokker_planck_flux(rho: &RealField, u: &RealField, nu: f64, direction: Direction) -> Result<RealField> {
    let grad_log = numerics::gradient(&madelung::log_density(rho))?;
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Backward => 1.0,
    };
    let osm = grad_log.map(|g| sign * nu * g);
    let total = u.zip_with(&osm, |a, b| a + b)?;
    rho.zip_with(&total, |r, v| r * v)
}
