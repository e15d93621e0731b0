//! Combinatorial entropy `S = ∫ N ln N` of the combined forward/backward
//! trajectory count `N = ρ_F ρ_B`, and its constrained maximization.
//!
//! Densities live on cells with arbitrary positive widths so that tiny
//! hand-built lattices (three cells, say) work alongside [`Grid1D`] fields.

use crate::error::{Error, Result};
use crate::numerics::{self, RealField};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;
/// Floor on N inside logarithms of gradients; `0·ln 0` is taken as 0.
const LOG_FLOOR: f64 = 1e-300;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    weights: Vec<f64>,
    rho_f: Vec<f64>,
    rho_b: Vec<f64>,
}

impl DensityPair {
    pub fn new(weights: Vec<f64>, rho_f: Vec<f64>, rho_b: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != rho_f.len() || weights.len() != rho_b.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidGrid(format!("cell {i} has non-positive width")));
        }
        for rho in [&rho_f, &rho_b] {
            numerics::check_finite("density", rho)?;
            if let Some(i) = rho.iter().position(|r| *r < 0.0) {
                return Err(Error::NegativeDensity { index: i, value: rho[i] });
            }
            let mass: f64 = rho.iter().zip(&weights).map(|(r, w)| r * w).sum();
            if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::NonNormalizable(mass));
            }
        }
        Ok(Self { weights, rho_f, rho_b })
    }

    pub fn from_fields(rho_f: &RealField, rho_b: &RealField) -> Result<Self> {
        numerics::same_grid(rho_f.grid(), rho_b.grid())?;
        Self::new(rho_f.grid().weights(), rho_f.values().to_vec(), rho_b.values().to_vec())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rho_f(&self) -> &[f64] {
        &self.rho_f
    }

    pub fn rho_b(&self) -> &[f64] {
        &self.rho_b
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Same pair with cells reordered by `perm` (cell `i` of the result is
    /// cell `perm[i]` of `self`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&j| v[j]).collect();
        Self {
            weights: pick(&self.weights),
            rho_f: pick(&self.rho_f),
            rho_b: pick(&self.rho_b),
        }
    }
}

pub fn combined_count(dp: &DensityPair) -> Vec<f64> {
    dp.rho_f.iter().zip(&dp.rho_b).map(|(f, b)| f * b).collect()
}

fn n_ln_n(n: f64) -> f64 {
    if n > 0.0 {
        n * n.ln()
    } else {
        0.0
    }
}

/// `Σ w N ln N`.
pub fn entropy(dp: &DensityPair) -> f64 {
    entropy_scaled(dp, 1.0)
}

/// Entropy of `N = c ρ_F ρ_B`.
pub fn entropy_scaled(dp: &DensityPair, scale: f64) -> f64 {
    combined_count(dp)
        .iter()
        .zip(&dp.weights)
        .map(|(n, w)| w * n_ln_n(scale * n))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityResidual {
    /// `ρ_B(ln N + 1)` minus its weighted mean.
    pub res_f: Vec<f64>,
    /// `ρ_F(ln N + 1)` minus its weighted mean.
    pub res_b: Vec<f64>,
    /// `max |ρ_B/ρ_F − mean(ρ_B/ρ_F)|`.
    pub ratio_spread: f64,
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}

fn centered(values: Vec<f64>, weights: &[f64]) -> Vec<f64> {
    let mean = weighted_mean(&values, weights);
    values.into_iter().map(|v| v - mean).collect()
}

pub fn stationarity_residual(dp: &DensityPair) -> Result<StationarityResidual> {
    for rho in [&dp.rho_f, &dp.rho_b] {
        if let Some(i) = rho.iter().position(|r| *r == 0.0) {
            return Err(Error::ZeroDensity(i));
        }
    }
    let (gf, gb) = euler_lagrange(dp, 1.0);
    let ratios: Vec<f64> = dp.rho_b.iter().zip(&dp.rho_f).map(|(b, f)| b / f).collect();
    Ok(StationarityResidual {
        res_f: centered(gf, &dp.weights),
        res_b: centered(gb, &dp.weights),
        ratio_spread: spread(&ratios, &dp.weights),
    })
}

fn spread(ratios: &[f64], weights: &[f64]) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    let mean = weighted_mean(ratios, weights);
    ratios.iter().fold(0.0, |m, r| m.max((r - mean).abs()))
}

/// Ratio spread restricted to cells where either density is non-zero.
/// A cell carrying only one of the two densities counts as infinite spread.
pub fn ratio_spread_on_support(dp: &DensityPair) -> f64 {
    let mut ratios = Vec::new();
    let mut weights = Vec::new();
    for ((f, b), w) in dp.rho_f.iter().zip(&dp.rho_b).zip(&dp.weights) {
        match (*f > 0.0, *b > 0.0) {
            (true, true) => {
                ratios.push(b / f);
                weights.push(*w);
            }
            (false, false) => {}
            _ => return f64::INFINITY,
        }
    }
    spread(&ratios, &weights)
}

/// Functional derivatives of the scaled entropy with respect to ρ_F, ρ_B.
fn euler_lagrange(dp: &DensityPair, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let log_term: Vec<f64> = combined_count(dp)
        .iter()
        .map(|n| (scale * n).max(LOG_FLOOR).ln() + 1.0)
        .collect();
    let gf = dp.rho_b.iter().zip(&log_term).map(|(b, l)| scale * b * l).collect();
    let gb = dp.rho_f.iter().zip(&log_term).map(|(f, l)| scale * f * l).collect();
    (gf, gb)
}

/// Projection onto `{ρ ≥ 0, Σ w ρ = 1}` in the weighted norm:
/// `ρ_i = max(0, y_i − τ)` with τ found by bisection.
fn project_to_simplex(y: &[f64], weights: &[f64]) -> Vec<f64> {
    let mass = |tau: f64| -> f64 {
        y.iter()
            .zip(weights)
            .map(|(v, w)| w * (v - tau).max(0.0))
            .sum()
    };
    let total: f64 = weights.iter().sum();
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // mass(lo) ≥ 1 ≥ mass(hi)
    let mut lo = y.iter().copied().fold(f64::INFINITY, f64::min) - 1.0 / total;
    let mut hi = max;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let mut rho: Vec<f64> = y.iter().map(|v| (v - tau).max(0.0)).collect();
    // remove the residual bisection error
    let m: f64 = rho.iter().zip(weights).map(|(r, w)| r * w).sum();
    if m > 0.0 {
        rho.iter_mut().for_each(|r| *r /= m);
    }
    rho
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntropy {
    pub pair: DensityPair,
    pub entropy: f64,
    pub iterations: usize,
    pub ratio_spread: f64,
}

/// Projected-gradient ascent of `S` on the product of the two density
/// simplices, with Armijo backtracking. Stops when the weighted norm of an
/// accepted update falls below `tolerance`.
pub fn maximize_entropy(init: &DensityPair, tolerance: f64) -> Result<MaxEntropy> {
    maximize_entropy_scaled(init, tolerance, 1.0)
}

pub fn maximize_entropy_scaled(init: &DensityPair, tolerance: f64, scale: f64) -> Result<MaxEntropy> {
    if !(tolerance > 0.0) || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(
            "tolerance and scale must be positive".into(),
        ));
    }
    let w = init.weights.clone();
    let mut dp = init.clone();
    let mut s = entropy_scaled(&dp, scale);
    let mut eta = 1e-2;
    let mut last_update = f64::INFINITY;
    for it in 0..MAX_ITERATIONS {
        let (gf, gb) = euler_lagrange(&dp, scale);
        let mut accepted = None;
        for _ in 0..80 {
            let step = |rho: &[f64], g: &[f64]| -> Vec<f64> {
                let y: Vec<f64> = rho.iter().zip(g).map(|(r, gi)| r + eta * gi).collect();
                project_to_simplex(&y, &w)
            };
            let cand = DensityPair {
                weights: w.clone(),
                rho_f: step(&dp.rho_f, &gf),
                rho_b: step(&dp.rho_b, &gb),
            };
            let mut directional = 0.0;
            let mut norm_sq = 0.0;
            for i in 0..w.len() {
                let df = cand.rho_f[i] - dp.rho_f[i];
                let db = cand.rho_b[i] - dp.rho_b[i];
                directional += w[i] * (gf[i] * df + gb[i] * db);
                norm_sq += w[i] * (df * df + db * db);
            }
            let s_new = entropy_scaled(&cand, scale);
            if s_new >= s + 1e-4 * directional {
                accepted = Some((cand, s_new, norm_sq.sqrt()));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, s_new, update)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: it,
                last_update,
            });
        };
        dp = cand;
        s = s_new;
        last_update = update;
        if update < tolerance {
            let ratio_spread = ratio_spread_on_support(&dp);
            return Ok(MaxEntropy {
                pair: dp,
                entropy: s,
                iterations: it + 1,
                ratio_spread,
            });
        }
        eta = (eta * 2.0).min(1e6);
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        last_update,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexScan {
    pub best_entropy: f64,
    /// Every (ρ_F, ρ_B) pair attaining the best entropy within the tie tolerance.
    pub maximizers: Vec<DensityPair>,
    pub evaluated: usize,
}

/// Exhaustive search over all pairs of densities whose cell masses are
/// multiples of `1/divisions`. Ties are entropies within `tie_tol` of the best.
pub fn simplex_scan(weights: &[f64], divisions: usize, tie_tol: f64) -> Result<SimplexScan> {
    if weights.is_empty() || divisions == 0 {
        return Err(Error::InvalidParameter("empty scan".into()));
    }
    let masses = compositions(weights.len(), divisions);
    let densities: Vec<Vec<f64>> = masses
        .iter()
        .map(|c| {
            c.iter()
                .zip(weights)
                .map(|(&k, w)| k as f64 / divisions as f64 / w)
                .collect()
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut hits: Vec<(usize, usize)> = Vec::new();
    for (i, f) in densities.iter().enumerate() {
        for (j, b) in densities.iter().enumerate() {
            let s: f64 = f
                .iter()
                .zip(b)
                .zip(weights)
                .map(|((x, y), w)| w * n_ln_n(x * y))
                .sum();
            if s > best + tie_tol {
                best = s;
                hits.retain(|_| false);
                hits.push((i, j));
            } else if (s - best).abs() <= tie_tol {
                hits.push((i, j));
                best = best.max(s);
            }
        }
    }
    let maximizers = hits
        .into_iter()
        .map(|(i, j)| DensityPair {
            weights: weights.to_vec(),
            rho_f: densities[i].clone(),
            rho_b: densities[j].clone(),
        })
        .collect();
    Ok(SimplexScan {
        best_entropy: best,
        maximizers,
        evaluated: densities.len() * densities.len(),
    })
}

/// All ways to write `total` as an ordered sum of `parts` non-negative integers.
fn compositions(parts: usize, total: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(parts - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid1D;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn uniform(n: usize, length: f64) -> DensityPair {
        let w = vec![length / n as f64; n];
        DensityPair::new(w, vec![1.0 / length; n], vec![1.0 / length; n]).unwrap()
    }

    #[test]
    fn invariants_are_checked() {
        assert!(matches!(
            DensityPair::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![1.0, 0.5]),
            Err(Error::NonNormalizable(_))
        ));
        assert!(matches!(
            DensityPair::new(vec![0.5, 0.5], vec![2.5, -0.5], vec![1.0, 1.0]),
            Err(Error::NegativeDensity { index: 1, .. })
        ));
        assert!(DensityPair::new(vec![1.0], vec![1.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn uniform_count_and_entropy() {
        let length = 4.0;
        let dp = uniform(10, length);
        let c = 1.0 / (length * length);
        assert!(combined_count(&dp).iter().all(|&n| (n - c).abs() < 1e-16));
        assert_abs_diff_eq!(entropy(&dp), length * c * c.ln(), epsilon = 1e-14);
    }

    #[test]
    fn disjoint_supports_give_zero() {
        let w = vec![0.25; 4];
        let dp = DensityPair::new(w, vec![2.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 2.0, 2.0]).unwrap();
        assert!(combined_count(&dp).iter().all(|&n| n == 0.0));
        assert_eq!(entropy(&dp), 0.0);
        assert!(matches!(stationarity_residual(&dp), Err(Error::ZeroDensity(_))));
        assert_eq!(ratio_spread_on_support(&dp), f64::INFINITY);
    }

    #[test]
    fn equal_gaussians_match_closed_form() {
        let sigma = 0.7;
        let g = Grid1D::clamped(-12.0, 12.0, 2401).unwrap();
        let rho = RealField::from_fn(g, |x| (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt()));
        let dp = DensityPair::from_fields(&rho, &rho).unwrap();
        for (n, r) in combined_count(&dp).iter().zip(rho.values()) {
            assert_eq!(*n, r * r);
        }
        let norm = 2.0 * sigma * PI.sqrt();
        let exact = ((1.0 / (2.0 * PI * sigma * sigma)).ln() - 0.5) / norm;
        assert_abs_diff_eq!(entropy(&dp), exact, epsilon = 1e-6);
    }

    #[test]
    fn equal_densities_are_ratio_stationary() {
        let g = Grid1D::periodic(0.0, 2.0, 16).unwrap();
        let rho = RealField::from_fn(g, |x| 0.5 + 0.3 * (PI * x).sin());
        let dp = DensityPair::from_fields(&rho, &rho).unwrap();
        assert_eq!(stationarity_residual(&dp).unwrap().ratio_spread, 0.0);

        let shifted = RealField::from_fn(g, |x| 0.5 + 0.3 * (PI * (x - 0.5)).sin());
        let dp = DensityPair::from_fields(&rho, &shifted).unwrap();
        assert!(stationarity_residual(&dp).unwrap().ratio_spread > 0.1);
    }

    #[test]
    fn uniform_pair_is_fully_stationary() {
        let r = stationarity_residual(&uniform(12, 3.0)).unwrap();
        assert!(r.res_f.iter().chain(&r.res_b).all(|&v| v == 0.0));
        assert_eq!(r.ratio_spread, 0.0);
    }

    #[test]
    fn projection_lands_on_the_simplex() {
        let w = [0.1, 0.3, 0.6];
        let rho = project_to_simplex(&[5.0, -2.0, 0.4], &w);
        assert!(rho.iter().all(|&r| r >= 0.0));
        assert_abs_diff_eq!(rho.iter().zip(&w).map(|(r, w)| r * w).sum::<f64>(), 1.0, epsilon = 1e-14);
        // already feasible points are fixed
        let feasible = [1.0, 1.0, 1.0];
        let p = project_to_simplex(&feasible, &w);
        for (a, b) in p.iter().zip(&feasible) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn optimizer_matches_the_two_densities() {
        let w = vec![0.1; 3];
        let init = DensityPair::new(w, vec![5.0, 3.0, 2.0], vec![4.0, 4.0, 2.0]).unwrap();
        let out = maximize_entropy(&init, 1e-12).unwrap();
        assert!(out.ratio_spread <= 1e-6, "{out:?}");
        assert!(out.entropy >= entropy(&init));
        for (f, b) in out.pair.rho_f().iter().zip(out.pair.rho_b()) {
            assert_abs_diff_eq!(f, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn scale_does_not_change_the_ratio_condition() {
        let w = vec![0.1; 4];
        let init = DensityPair::new(w, vec![4.0, 3.0, 2.0, 1.0], vec![1.0, 3.0, 3.0, 3.0]).unwrap();
        for scale in [0.5, 2.5] {
            let out = maximize_entropy_scaled(&init, 1e-12, scale).unwrap();
            assert!(out.ratio_spread <= 1e-6, "scale {scale}: {out:?}");
        }
    }

    #[test]
    fn equal_start_stays_ratio_matched() {
        let w = vec![0.1; 3];
        let init = DensityPair::new(w, vec![5.0, 3.0, 2.0], vec![5.0, 3.0, 2.0]).unwrap();
        let out = maximize_entropy(&init, 1e-12).unwrap();
        assert!(out.ratio_spread <= 1e-12);
        assert_eq!(ratio_spread_on_support(&init), 0.0);
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(3, 100).len(), 5151);
        assert!(compositions(3, 4).iter().all(|c| c.iter().sum::<usize>() == 4));
    }

    #[test]
    fn coarse_scan_maximizers_are_coincident() {
        let scan = simplex_scan(&[0.2, 0.3, 0.5], 10, 1e-12).unwrap();
        assert!(!scan.maximizers.is_empty());
        for dp in &scan.maximizers {
            assert_eq!(dp.rho_f(), dp.rho_b());
        }
    }
}
