//! Oracles shared by the integration tests. Each is written from first
//! principles and does not call into the library under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

/// Harmonic-oscillator level κω(n + 1/2).
pub fn oscillator_level(kappa: f64, omega: f64, n: usize) -> f64 {
    kappa * omega * (n as f64 + 0.5)
}

/// Ground energy of the lattice field Hamiltonian
/// `-(κ²c²/2dx) Σ ∂²_i + (dx/2) Σ_i [μ²φ_i² + Σ_{j = i+1 mod n} (φ_j − φ_i)²/dx²]`
/// by dense diagonalization in a product oscillator basis truncated at
/// `max_quanta` total quanta.
pub fn field_e0_truncated(n_sites: usize, dx: f64, c: f64, kappa: f64, mu: f64, max_quanta: usize) -> f64 {
    // V = ½ φᵀQφ
    let mut q = DMatrix::from_diagonal_element(n_sites, n_sites, dx * mu * mu);
    if n_sites > 1 {
        for i in 0..n_sites {
            let j = (i + 1) % n_sites;
            let b = 1.0 / dx;
            q[(i, i)] += b;
            q[(j, j)] += b;
            q[(i, j)] -= b;
            q[(j, i)] -= b;
        }
    }
    // kinetic -(a/2)∂² is a unit-ħ oscillator of mass 1/a
    let a = kappa * kappa * c * c / dx;
    let freq: Vec<f64> = (0..n_sites).map(|i| (a * q[(i, i)]).sqrt()).collect();
    let len: Vec<f64> = freq.iter().map(|w| (a / (2.0 * w)).sqrt()).collect();

    let mut basis: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n_sites {
        basis = basis
            .into_iter()
            .flat_map(|b| {
                let used: usize = b.iter().sum();
                (0..=max_quanta - used).map(move |k| {
                    let mut nb = b.clone();
                    nb.push(k);
                    nb
                })
            })
            .collect();
    }
    let index: std::collections::HashMap<Vec<usize>, usize> =
        basis.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();

    let dim = basis.len();
    let mut h = DMatrix::zeros(dim, dim);
    for (r, state) in basis.iter().enumerate() {
        h[(r, r)] = (0..n_sites).map(|i| freq[i] * (state[i] as f64 + 0.5)).sum::<f64>();
        for i in 0..n_sites {
            for j in (i + 1)..n_sites {
                if q[(i, j)] == 0.0 {
                    continue;
                }
                // φ_i φ_j = ℓ_iℓ_j (b_i + b_i†)(b_j + b_j†)
                for di in [-1i64, 1] {
                    for dj in [-1i64, 1] {
                        let ni = state[i] as i64 + di;
                        let nj = state[j] as i64 + dj;
                        if ni < 0 || nj < 0 {
                            continue;
                        }
                        let mut target = state.clone();
                        target[i] = ni as usize;
                        target[j] = nj as usize;
                        let Some(&col) = index.get(&target) else { continue };
                        let ai = (state[i].max(ni as usize) as f64).sqrt();
                        let aj = (state[j].max(nj as usize) as f64).sqrt();
                        h[(col, r)] += q[(i, j)] * len[i] * len[j] * ai * aj;
                    }
                }
            }
        }
    }
    let eig = SymmetricEigen::new(h);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Lattice frequencies `c sqrt(μ² + (4/dx²) sin²(πk/n))`, sorted.
pub fn fourier_frequencies(n_sites: usize, dx: f64, c: f64, mu: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n_sites)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / n_sites as f64).sin();
            let lap = if n_sites > 1 { 4.0 * s * s / (dx * dx) } else { 0.0 };
            c * (mu * mu + lap).sqrt()
        })
        .collect();
    w.sort_by(f64::total_cmp);
    w
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// 99% critical value of the one-sample KS statistic.
pub fn ks_critical_99(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub type Cell3 = [f64; 3];

/// Brute-force maximizers of `Σ w ρ_F ρ_B ln(ρ_F ρ_B)` over every pair of
/// 3-cell densities whose cell masses are multiples of 1/divisions.
pub fn simplex_maximizers(width: f64, divisions: usize, tie_tol: f64) -> (f64, Vec<(Cell3, Cell3)>) {
    let mut points = Vec::new();
    for a in 0..=divisions {
        for b in 0..=(divisions - a) {
            let c = divisions - a - b;
            let d = divisions as f64 * width;
            points.push([a as f64 / d, b as f64 / d, c as f64 / d]);
        }
    }
    let s = |f: &[f64; 3], g: &[f64; 3]| -> f64 {
        (0..3)
            .map(|i| {
                let n = f[i] * g[i];
                if n > 0.0 {
                    width * n * n.ln()
                } else {
                    0.0
                }
            })
            .sum()
    };
    let mut best = f64::NEG_INFINITY;
    for f in &points {
        for g in &points {
            best = best.max(s(f, g));
        }
    }
    let mut winners = Vec::new();
    for f in &points {
        for g in &points {
            if s(f, g) >= best - tie_tol * best.abs().max(1.0) {
                winners.push((*f, *g));
            }
        }
    }
    (best, winners)
}
