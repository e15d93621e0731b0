//! Discrete hydrodynamic and complex-form actions.
//!
//! Space uses the link form: on the link (i, i+1) with Δλ = λ_{i+1} − λ_i
//! and s = √ρ,
//!
//! ```text
//! kinetic  = (κ²/2m) s_i s_{i+1} (2 sin(Δλ/2) / h)²
//! internal = c_U ((s_{i+1} − s_i) / h)²
//! ```
//!
//! With c_U = κ²/2m their sum is (κ²/2m)|ψ_{i+1} − ψ_i|²/h², so the spatial
//! energy of a slice equals the lattice expectation ⟨ψ|H|ψ⟩ exactly.
//!
//! Time uses staggered midpoints: the term −κρ∂ₜλ becomes
//! −κ Σ_t Σ_i w_i ½(ρ_t + ρ_{t+1})(λ_{t+1} − λ_t), and the energy is
//! integrated by the trapezoid rule. Phases must therefore be unwrapped in
//! time. Endpoint snapshots are held fixed; gradients cover interior ones.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::madelung::{self, MadelungPair};
use crate::numerics::{self, Grid1D, RealField};
use crate::schrodinger::{Hamiltonian, PhysicalParams, PotentialSpec, Wavefunction, CONSTRAINT_RTOL};

/// Relative tolerance on the spacing of snapshot times.
const UNIFORM_DT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DiscreteTrajectory {
    snapshots: Vec<MadelungPair>,
    dt: f64,
    params: PhysicalParams,
    potential: PotentialSpec,
    v: Vec<f64>,
}

impl DiscreteTrajectory {
    pub fn new(snapshots: Vec<MadelungPair>, params: PhysicalParams, potential: PotentialSpec) -> Result<Self> {
        if snapshots.len() < 3 {
            return Err(Error::TooFewSnapshots {
                needed: 3,
                got: snapshots.len(),
            });
        }
        let grid = *snapshots[0].rho().grid();
        for s in &snapshots {
            numerics::same_grid(&grid, s.rho().grid())?;
        }
        let dt = snapshots[1].time() - snapshots[0].time();
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("snapshot times must increase".into()));
        }
        for w in snapshots.windows(2) {
            let step = w[1].time() - w[0].time();
            if (step - dt).abs() > UNIFORM_DT_RTOL * dt {
                return Err(Error::InvalidParameter(format!(
                    "non-uniform time step {step} (expected {dt})"
                )));
            }
        }
        let v = potential.sample(&grid, &params)?;
        Ok(Self {
            snapshots,
            dt,
            params,
            potential,
            v,
        })
    }

    /// Decomposes a wavefunction history with temporally unwrapped phases.
    pub fn from_wavefunctions(states: &[Wavefunction], params: PhysicalParams, potential: PotentialSpec) -> Result<Self> {
        Self::new(madelung::decompose_trajectory(states)?, params, potential)
    }

    pub fn snapshots(&self) -> &[MadelungPair] {
        &self.snapshots
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn grid(&self) -> &Grid1D {
        self.snapshots[0].rho().grid()
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.snapshots.len() - 1) as f64
    }

    /// For each interior snapshot, the points whose stencil (neighbouring
    /// points at the previous, current and next snapshot) stays above
    /// `rel_threshold` times that snapshot's peak density. Far tails carry
    /// inherited phases and are excluded from stationarity checks.
    pub fn support_mask(&self, rel_threshold: f64) -> Vec<Vec<bool>> {
        let grid = self.grid();
        let n = grid.len();
        let above: Vec<Vec<bool>> = self
            .snapshots
            .iter()
            .map(|s| {
                let cut = rel_threshold * s.rho().max();
                s.rho().values().iter().map(|&r| r >= cut).collect()
            })
            .collect();
        let neighbours = |i: usize| -> [Option<usize>; 3] {
            if grid.is_periodic() {
                [Some((i + n - 1) % n), Some(i), Some((i + 1) % n)]
            } else {
                [i.checked_sub(1), Some(i), (i + 1 < n).then_some(i + 1)]
            }
        };
        (1..self.snapshots.len() - 1)
            .map(|t| {
                (0..n)
                    .map(|i| {
                        (t - 1..=t + 1).all(|s| neighbours(i).iter().flatten().all(|&j| above[s][j]))
                    })
                    .collect()
            })
            .collect()
    }

    fn raw(&self) -> Raw<'_> {
        Raw {
            grid: *self.grid(),
            rho: self.snapshots.iter().map(|s| s.rho().values().to_vec()).collect(),
            lam: self.snapshots.iter().map(|s| s.lam().values().to_vec()).collect(),
            v: &self.v,
            dt: self.dt,
            kinetic: self.params.kinetic_coefficient(),
            kappa: self.params.kappa(),
        }
    }
}

/// Unchecked copy of a trajectory, used for evaluation and perturbation.
#[derive(Clone)]
struct Raw<'a> {
    grid: Grid1D,
    rho: Vec<Vec<f64>>,
    lam: Vec<Vec<f64>>,
    v: &'a [f64],
    dt: f64,
    kinetic: f64,
    kappa: f64,
}

impl Raw<'_> {
    /// Spatial energy of slice `t`; `internal` is the coefficient c_U.
    fn energy(&self, t: usize, internal: f64) -> f64 {
        madelung::link_energy(&self.grid, &self.rho[t], &self.lam[t], self.v, self.kinetic, internal)
    }

    fn time_weight(&self, t: usize) -> f64 {
        if t == 0 || t + 1 == self.rho.len() {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    fn action(&self, internal: f64) -> f64 {
        let mut total = 0.0;
        for t in 0..self.rho.len() - 1 {
            for i in 0..self.grid.len() {
                let mid = 0.5 * (self.rho[t][i] + self.rho[t + 1][i]);
                total -= self.kappa * self.grid.weight(i) * mid * (self.lam[t + 1][i] - self.lam[t][i]);
            }
        }
        for t in 0..self.rho.len() {
            total -= self.time_weight(t) * self.energy(t, internal);
        }
        total
    }

    /// (∂E/∂s, ∂E/∂λ) of slice `t`.
    fn energy_partials(&self, t: usize, internal: f64) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.spacing();
        let n = self.grid.len();
        let s: Vec<f64> = self.rho[t].iter().map(|r| r.sqrt()).collect();
        let lam = &self.lam[t];
        let mut ds = vec![0.0; n];
        let mut dl = vec![0.0; n];
        for (i, j) in madelung::links(&self.grid) {
            let d = lam[j] - lam[i];
            let c = 2.0 * (1.0 - d.cos());
            ds[i] += (self.kinetic * s[j] * c - 2.0 * internal * (s[j] - s[i])) / h;
            ds[j] += (self.kinetic * s[i] * c + 2.0 * internal * (s[j] - s[i])) / h;
            let torque = 2.0 * self.kinetic * s[i] * s[j] * d.sin() / h;
            dl[i] -= torque;
            dl[j] += torque;
        }
        for i in 0..n {
            ds[i] += 2.0 * self.grid.weight(i) * self.v[i] * s[i];
        }
        (ds, dl)
    }
}

/// Hydrodynamic action without the internal-energy term.
pub fn classical_action(traj: &DiscreteTrajectory) -> f64 {
    traj.raw().action(0.0)
}

fn check_constraint(params: &PhysicalParams) -> Result<()> {
    let product = 4.0 * params.alpha() * params.nu() * params.mass();
    if (params.kappa() - product).abs() > CONSTRAINT_RTOL * params.kappa() {
        return Err(Error::ConstraintViolation {
            kappa: params.kappa(),
            product,
        });
    }
    Ok(())
}

/// Hydrodynamic action including the internal energy 8α²ν²m(∇ln√ρ)².
pub fn quantum_action(traj: &DiscreteTrajectory) -> Result<f64> {
    check_constraint(&traj.params)?;
    Ok(traj.raw().action(traj.params.internal_energy_coefficient()))
}

/// `Σ_t h Σ_i conj(ψ̄) iκ(ψ_{t+1} − ψ_t) − Σ_t w_t ⟨ψ_t|H|ψ_t⟩` with
/// ψ̄ the midpoint average. The imaginary part is exactly
/// (κ/2)(‖ψ_F‖² − ‖ψ_I‖²).
pub fn complex_action(states: &[Wavefunction], params: &PhysicalParams, potential: &PotentialSpec) -> Result<Complex64> {
    if states.len() < 2 {
        return Err(Error::TooFewSnapshots {
            needed: 2,
            got: states.len(),
        });
    }
    let grid = *states[0].grid();
    let h = Hamiltonian::new(grid, potential, params)?;
    let dt = states[1].time() - states[0].time();
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("snapshot times must increase".into()));
    }
    let i_kappa = Complex64::new(0.0, params.kappa());
    let mut total = Complex64::new(0.0, 0.0);
    for (t, pair) in states.windows(2).enumerate() {
        numerics::same_grid(&grid, pair[1].grid())?;
        let step = pair[1].time() - pair[0].time();
        if (step - dt).abs() > UNIFORM_DT_RTOL * dt {
            return Err(Error::InvalidParameter(format!(
                "non-uniform time step {step} at snapshot {t}"
            )));
        }
        for (i, (a, b)) in pair[0].values().iter().zip(pair[1].values()).enumerate() {
            total += grid.weight(i) * (0.5 * (a + b)).conj() * i_kappa * (b - a);
        }
    }
    let last = states.len() - 1;
    for (t, s) in states.iter().enumerate() {
        let w = if t == 0 || t == last { 0.5 * dt } else { dt };
        total -= w * h.expectation(s.psi())?;
    }
    Ok(total)
}

/// Functional gradients of the quantum action on interior snapshots
/// (entry k belongs to snapshot k + 1), normalized by the cell volume dt·w_i.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGradient {
    pub d_rho: Vec<RealField>,
    pub d_lam: Vec<RealField>,
}

impl ActionGradient {
    pub fn max_abs(&self) -> f64 {
        self.d_rho
            .iter()
            .chain(&self.d_lam)
            .fold(0.0, |m, f| m.max(f.max_abs()))
    }

    pub fn max_abs_rho(&self) -> f64 {
        self.d_rho.iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }

    pub fn max_abs_lam(&self) -> f64 {
        self.d_lam.iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }

    /// Max-norm over entries whose mask is set; `mask[k]` belongs to
    /// interior snapshot k + 1 as in the gradient itself.
    pub fn max_abs_where(&self, mask: &[Vec<bool>]) -> f64 {
        let mut m: f64 = 0.0;
        for (k, keep) in mask.iter().enumerate() {
            for f in [&self.d_rho[k], &self.d_lam[k]] {
                for (v, &on) in f.values().iter().zip(keep) {
                    if on {
                        m = m.max(v.abs());
                    }
                }
            }
        }
        m
    }
}

/// Analytic gradient of [`quantum_action`]. Interior densities must be
/// strictly positive since ∂/∂ρ = (1/2√ρ) ∂/∂√ρ.
pub fn action_gradient(traj: &DiscreteTrajectory) -> Result<ActionGradient> {
    check_constraint(&traj.params)?;
    let raw = traj.raw();
    let internal = traj.params.internal_energy_coefficient();
    let grid = raw.grid;
    let n = grid.len();
    let last = raw.rho.len() - 1;
    let mut d_rho = Vec::with_capacity(last - 1);
    let mut d_lam = Vec::with_capacity(last - 1);
    for t in 1..last {
        if let Some(i) = raw.rho[t].iter().position(|r| *r <= 0.0) {
            return Err(Error::ZeroDensity(i));
        }
        let (ds, dl) = raw.energy_partials(t, internal);
        let mut gr = vec![0.0; n];
        let mut gl = vec![0.0; n];
        for i in 0..n {
            let w = grid.weight(i);
            let d_prev = raw.lam[t][i] - raw.lam[t - 1][i];
            let d_next = raw.lam[t + 1][i] - raw.lam[t][i];
            let time_rho = -raw.kappa * w * 0.5 * (d_prev + d_next);
            let time_lam = -raw.kappa * w * 0.5 * (raw.rho[t - 1][i] - raw.rho[t + 1][i]);
            let s = raw.rho[t][i].sqrt();
            gr[i] = (time_rho - raw.dt * ds[i] / (2.0 * s)) / (raw.dt * w);
            gl[i] = (time_lam - raw.dt * dl[i]) / (raw.dt * w);
        }
        d_rho.push(RealField::new(grid, gr)?);
        d_lam.push(RealField::new(grid, gl)?);
    }
    Ok(ActionGradient { d_rho, d_lam })
}

/// Central finite-difference counterpart of [`action_gradient`] with
/// absolute step `eps`. The perturbed densities are not renormalized.
pub fn finite_difference_gradient(traj: &DiscreteTrajectory, eps: f64) -> Result<ActionGradient> {
    check_constraint(&traj.params)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let internal = traj.params.internal_energy_coefficient();
    let mut raw = traj.raw();
    let grid = raw.grid;
    let last = raw.rho.len() - 1;
    let mut d_rho = Vec::with_capacity(last - 1);
    let mut d_lam = Vec::with_capacity(last - 1);
    for t in 1..last {
        let mut gr = vec![0.0; grid.len()];
        let mut gl = vec![0.0; grid.len()];
        for i in 0..grid.len() {
            let scale = raw.dt * grid.weight(i);
            let r0 = raw.rho[t][i];
            raw.rho[t][i] = r0 + eps;
            let plus = raw.action(internal);
            raw.rho[t][i] = r0 - eps;
            let minus = raw.action(internal);
            raw.rho[t][i] = r0;
            gr[i] = (plus - minus) / (2.0 * eps * scale);

            let l0 = raw.lam[t][i];
            raw.lam[t][i] = l0 + eps;
            let plus = raw.action(internal);
            raw.lam[t][i] = l0 - eps;
            let minus = raw.action(internal);
            raw.lam[t][i] = l0;
            gl[i] = (plus - minus) / (2.0 * eps * scale);
        }
        d_rho.push(RealField::new(grid, gr)?);
        d_lam.push(RealField::new(grid, gl)?);
    }
    Ok(ActionGradient { d_rho, d_lam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schrodinger::evolve;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn nelson() -> PhysicalParams {
        PhysicalParams::nelson(1.0, 1.0).unwrap()
    }

    fn history(grid: Grid1D, times: &[f64], rho: impl Fn(f64, f64) -> f64, lam: impl Fn(f64, f64) -> f64) -> Vec<MadelungPair> {
        times
            .iter()
            .map(|&t| {
                MadelungPair::new(
                    RealField::from_fn(grid, |x| rho(x, t)),
                    RealField::from_fn(grid, |x| lam(x, t)),
                    t,
                )
                .unwrap()
            })
            .collect()
    }

    fn times(count: usize, dt: f64) -> Vec<f64> {
        (0..count).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn static_uniform_history_has_zero_action() {
        let g = Grid1D::periodic(0.0, 2.0, 16).unwrap();
        let traj = DiscreteTrajectory::new(
            history(g, &times(5, 0.1), |_, _| 0.5, |_, _| 0.0),
            nelson(),
            PotentialSpec::Free,
        )
        .unwrap();
        assert_eq!(classical_action(&traj), 0.0);
        assert_eq!(quantum_action(&traj).unwrap(), 0.0);
    }

    #[test]
    fn rotating_global_phase_gives_energy_times_duration() {
        let (len, e) = (3.0, 1.7);
        let g = Grid1D::periodic(0.0, len, 12).unwrap();
        let traj = DiscreteTrajectory::new(
            history(g, &times(11, 0.2), |_, _| 1.0 / len, |_, t| -e * t),
            nelson(),
            PotentialSpec::Free,
        )
        .unwrap();
        assert_abs_diff_eq!(classical_action(&traj), e * traj.duration(), epsilon = 1e-12);
        assert_abs_diff_eq!(quantum_action(&traj).unwrap(), classical_action(&traj), epsilon = 1e-14);
    }

    #[test]
    fn plane_wave_cancels_on_shell() {
        let p = nelson();
        let len = 2.0 * PI;
        let k = 2.0;
        for (n, bound) in [(64, 2e-2), (256, 2e-3)] {
            let g = Grid1D::periodic(0.0, len, n).unwrap();
            let omega = p.kappa() * k * k / (2.0 * p.mass());
            let traj = DiscreteTrajectory::new(
                history(g, &times(9, 0.05), |_, _| 1.0 / len, |x, t| k * x - omega * t),
                p,
                PotentialSpec::Free,
            )
            .unwrap();
            assert!(classical_action(&traj).abs() < bound * traj.duration());
        }
    }

    #[test]
    fn harmonic_ground_state_action_vanishes() {
        let p = nelson();
        let omega = 1.0;
        let g = Grid1D::periodic(-8.0, 8.0, 512).unwrap();
        let traj = DiscreteTrajectory::new(
            history(
                g,
                &times(21, 0.05),
                |x, _| (-x * x).exp() / PI.sqrt(),
                |_, t| -0.5 * omega * t,
            ),
            p,
            PotentialSpec::Harmonic { omega },
        )
        .unwrap();
        let per_time = quantum_action(&traj).unwrap() / traj.duration();
        assert!(per_time.abs() < 1e-4, "{per_time}");
    }

    #[test]
    fn spatial_energy_equals_lattice_expectation() {
        let p = nelson();
        let g = Grid1D::periodic(-PI, PI, 32).unwrap();
        let v = PotentialSpec::Tabulated(RealField::from_fn(g, |x| 0.3 * x.cos()));
        let psi = Wavefunction::from_fn(g, 0.0, |x| {
            Complex64::new(1.0, 0.0) + 0.4 * Complex64::from_polar(1.0, x) + 0.2 * Complex64::from_polar(1.0, -2.0 * x)
        })
        .unwrap();
        let mp = madelung::decompose(&psi).unwrap();
        let snaps = (0..3)
            .map(|k| MadelungPair::new(mp.rho().clone(), mp.lam().clone(), 0.1 * k as f64).unwrap())
            .collect();
        let traj = DiscreteTrajectory::new(snaps, p, v.clone()).unwrap();
        let raw = traj.raw();
        let expect = Hamiltonian::new(g, &v, &p).unwrap().expectation(psi.psi()).unwrap();
        assert_abs_diff_eq!(raw.energy(0, p.internal_energy_coefficient()), expect, epsilon = 1e-12);
    }

    fn smooth_solution(n: usize, dt: f64, steps: usize) -> (DiscreteTrajectory, Vec<Wavefunction>) {
        let p = nelson();
        let g = Grid1D::periodic(-PI, PI, n).unwrap();
        let v = PotentialSpec::Tabulated(RealField::from_fn(g, |x| 0.5 * x.cos()));
        let psi0 = Wavefunction::from_fn(g, 0.0, |x| {
            Complex64::new(1.0, 0.0) + 0.4 * Complex64::from_polar(1.0, x) + 0.2 * Complex64::from_polar(1.0, -2.0 * x)
        })
        .unwrap();
        let states = evolve(&psi0, &v, &p, dt, steps, 1).unwrap();
        (
            DiscreteTrajectory::from_wavefunctions(&states, p, v).unwrap(),
            states,
        )
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (traj, _) = smooth_solution(12, 0.05, 4);
        // move off-shell so the gradient is not trivially small
        let snaps: Vec<MadelungPair> = traj
            .snapshots()
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let lam = s.lam().clone();
                let lam = RealField::from_fn(*lam.grid(), |x| 0.3 * (x + k as f64).sin())
                    .zip_with(&lam, |a, b| a + b)
                    .unwrap();
                MadelungPair::new(s.rho().clone(), lam, s.time()).unwrap()
            })
            .collect();
        let traj = DiscreteTrajectory::new(snaps, *traj.params(), traj.potential().clone()).unwrap();
        let a = action_gradient(&traj).unwrap();
        let f = finite_difference_gradient(&traj, 1e-6).unwrap();
        let scale = a.max_abs();
        for (x, y) in a.d_rho.iter().chain(&a.d_lam).zip(f.d_rho.iter().chain(&f.d_lam)) {
            for (u, w) in x.values().iter().zip(y.values()) {
                assert!((u - w).abs() <= 1e-6 * scale, "{u} vs {w}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_second_order_on_solutions() {
        let coarse = action_gradient(&smooth_solution(32, 0.02, 20).0).unwrap().max_abs();
        let fine = action_gradient(&smooth_solution(32, 0.01, 40).0).unwrap().max_abs();
        assert!(coarse < 1e-3, "{coarse}");
        assert!(coarse / fine > 3.5, "{coarse} / {fine}");
    }

    #[test]
    fn gauge_direction_is_flat() {
        let (traj, _) = smooth_solution(32, 0.02, 10);
        let grad = action_gradient(&traj).unwrap();
        for f in &grad.d_lam {
            assert!(numerics::integrate(f).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn complex_action_of_eigenstate_vanishes() {
        let p = nelson();
        let g = Grid1D::clamped(-8.0, 8.0, 256).unwrap();
        let v = PotentialSpec::Harmonic { omega: 1.0 };
        let e = crate::schrodinger::stationary_states(&v, &p, g, 1).unwrap().remove(0);
        let dt = 1e-3;
        let states: Vec<Wavefunction> = (0..=1000)
            .map(|k| {
                let t = k as f64 * dt;
                let phase = Complex64::from_polar(1.0, -e.energy * t / p.kappa());
                Wavefunction::new(e.state.psi().map(|z| z * phase), t).unwrap()
            })
            .collect();
        let s = complex_action(&states, &p, &v).unwrap();
        assert!(s.norm() < 1e-6, "{s}");
    }

    #[test]
    fn complex_and_hydrodynamic_actions_agree() {
        let mut gaps = Vec::new();
        for (dt, steps) in [(0.02, 25), (0.01, 50)] {
            let (traj, states) = smooth_solution(64, dt, steps);
            let c = complex_action(&states, traj.params(), traj.potential()).unwrap();
            assert!(c.im.abs() < 1e-9);
            gaps.push((c.re - quantum_action(&traj).unwrap()).abs());
        }
        assert!(gaps[0] < 1e-4, "{gaps:?}");
        assert!(gaps[0] / gaps[1] > 3.5, "{gaps:?}");
    }

    #[test]
    fn too_few_snapshots_are_rejected() {
        let g = Grid1D::periodic(0.0, 1.0, 8).unwrap();
        assert!(matches!(
            DiscreteTrajectory::new(history(g, &times(2, 0.1), |_, _| 1.0, |_, _| 0.0), nelson(), PotentialSpec::Free),
            Err(Error::TooFewSnapshots { .. })
        ));
    }
}
