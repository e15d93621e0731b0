//! Experiment configuration.
//!
//! The on-disk format is flat TOML (`key = value`, no tables) or a JSON
//! object with the same keys. Only `scenario` and `seed` are mandatory;
//! everything else falls back to per-scenario defaults. Validation never
//! runs numerics.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numerics::{Boundary, Grid1D};
use crate::schrodinger::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CoherentOscillator,
    FreePacket,
    StationaryState,
    EntropyDemo,
    FieldGround,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::CoherentOscillator,
        Scenario::FreePacket,
        Scenario::StationaryState,
        Scenario::EntropyDemo,
        Scenario::FieldGround,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CoherentOscillator => "coherent_oscillator",
            Scenario::FreePacket => "free_packet",
            Scenario::StationaryState => "stationary_state",
            Scenario::EntropyDemo => "entropy_demo",
            Scenario::FieldGround => "field_ground",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::CoherentOscillator => {
                "coherent state in a harmonic well: forward/backward ensembles vs |psi|^2, charges, action stationarity"
            }
            Scenario::FreePacket => "free Gaussian packet: momentum and energy conservation, forward/backward ensembles",
            Scenario::StationaryState => "harmonic eigenstates: spectrum, zero energy variance, stationarity under evolution",
            Scenario::EntropyDemo => "entropy maximization of the forward/backward trajectory count and a 3-cell simplex scan",
            Scenario::FieldGround => "lattice scalar field: normal modes, zero-point energy, sampled ground-state covariance",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sc| sc.name() == s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Config file contents before validation. Every field is optional so that
/// validation can name each missing or bad field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub mass: Option<f64>,
    pub kappa: Option<f64>,
    pub alpha: Option<f64>,
    pub nu: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub n_points: Option<usize>,
    pub boundary: Option<Boundary>,
    pub omega: Option<f64>,
    pub x0: Option<f64>,
    pub p0: Option<f64>,
    pub sigma: Option<f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub checkpoints: Option<usize>,
    pub trajectories: Option<usize>,
    pub n_states: Option<usize>,
    pub cells: Option<usize>,
    pub cell_width: Option<f64>,
    pub scan_divisions: Option<usize>,
    pub tolerance: Option<f64>,
    pub n_sites: Option<usize>,
    pub dx: Option<f64>,
    pub c: Option<f64>,
    pub mu: Option<f64>,
    pub nu_f: Option<f64>,
    pub samples: Option<usize>,
    pub chains: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

impl RawConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn from_json_str(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: display.clone(),
            source,
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|message| ConfigError::Parse { path: display, message })
    }
}

/// Validated configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub mass: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub nu: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub boundary: Boundary,
    pub omega: f64,
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
    pub dt: f64,
    pub steps: usize,
    pub checkpoints: usize,
    pub trajectories: usize,
    pub n_states: usize,
    pub cells: usize,
    pub cell_width: f64,
    pub scan_divisions: usize,
    pub tolerance: f64,
    pub n_sites: usize,
    pub dx: f64,
    pub c: f64,
    pub mu: f64,
    pub nu_f: f64,
    pub samples: usize,
    pub chains: usize,
}

impl ExperimentConfig {
    fn defaults(scenario: Scenario, seed: u64) -> Self {
        let period = 2.0 * std::f64::consts::PI;
        let mut c = Self {
            scenario,
            seed,
            mass: 1.0,
            kappa: 1.0,
            alpha: 0.5,
            nu: 0.5,
            x_min: -8.0,
            x_max: 8.0,
            n_points: 256,
            boundary: Boundary::Periodic,
            omega: 1.0,
            x0: 2.0,
            p0: 0.0,
            sigma: 1.0,
            dt: period / 1000.0,
            steps: 1000,
            checkpoints: 5,
            trajectories: 100_000,
            n_states: 6,
            cells: 8,
            cell_width: 0.1,
            scan_divisions: 100,
            tolerance: 1e-12,
            n_sites: 8,
            dx: 1.0,
            c: 1.0,
            mu: 1.0,
            nu_f: 0.5,
            samples: 20_000,
            chains: 4,
        };
        match scenario {
            Scenario::FreePacket => {
                c.x_min = -20.0;
                c.x_max = 20.0;
                c.n_points = 512;
                c.x0 = -4.0;
                c.p0 = 1.0;
                c.dt = 0.01;
                c.steps = 500;
            }
            Scenario::StationaryState => {
                c.x_min = -10.0;
                c.x_max = 10.0;
                c.n_points = 512;
                c.boundary = Boundary::Clamped;
                c.dt = 0.01;
            }
            _ => {}
        }
        c
    }

    pub fn params(&self) -> crate::Result<PhysicalParams> {
        PhysicalParams::new(self.mass, self.kappa, self.alpha, self.nu)
    }

    pub fn grid(&self) -> crate::Result<Grid1D> {
        Grid1D::new(self.x_min, self.x_max, self.n_points, self.boundary)
    }

    /// SHA-256 of the canonical JSON encoding of the validated config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn validate(raw: &RawConfig) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut bad = |field: &'static str, message: String| diags.push(Diagnostic { field, message });

    let scenario = match raw.scenario.as_deref() {
        None => {
            bad("scenario", "missing; one of the names printed by list-scenarios is required".into());
            None
        }
        Some(s) => {
            let sc = Scenario::parse(s);
            if sc.is_none() {
                bad("scenario", format!("unknown scenario {s:?}"));
            }
            sc
        }
    };
    if raw.seed.is_none() {
        bad("seed", "missing; every run needs an explicit seed".into());
    }
    let (Some(scenario), Some(seed)) = (scenario, raw.seed) else {
        return Err(diags);
    };

    let mut cfg = ExperimentConfig::defaults(scenario, seed);
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = raw.$f { cfg.$f = v; } )* };
    }
    take!(mass, kappa, alpha, x_min, x_max, n_points, boundary, omega, x0, p0, sigma, dt, steps,
          checkpoints, trajectories, n_states, cells, cell_width, scan_divisions, tolerance,
          n_sites, dx, c, mu, nu_f, samples, chains);
    // the oscillator run spans exactly one period unless dt is pinned
    if scenario == Scenario::CoherentOscillator && raw.dt.is_none() && cfg.steps > 0 {
        cfg.dt = 2.0 * std::f64::consts::PI / (cfg.omega * cfg.steps as f64);
    }

    for (field, v) in [
        ("mass", cfg.mass),
        ("kappa", cfg.kappa),
        ("alpha", cfg.alpha),
        ("omega", cfg.omega),
        ("sigma", cfg.sigma),
        ("dt", cfg.dt),
        ("cell_width", cfg.cell_width),
        ("tolerance", cfg.tolerance),
        ("dx", cfg.dx),
        ("c", cfg.c),
        ("nu_f", cfg.nu_f),
    ] {
        if !(v.is_finite() && v > 0.0) {
            bad(field, format!("must be positive and finite (positivity invariant), got {v}"));
        }
    }
    if !(cfg.mu.is_finite() && cfg.mu >= 0.0) {
        bad("mu", format!("must be non-negative, got {}", cfg.mu));
    }
    if scenario == Scenario::FieldGround && cfg.mu == 0.0 {
        bad("mu", "field_ground samples the ground state and needs mu > 0".into());
    }
    for (field, v) in [("x0", cfg.x0), ("p0", cfg.p0), ("x_min", cfg.x_min), ("x_max", cfg.x_max)] {
        if !v.is_finite() {
            bad(field, format!("must be finite, got {v}"));
        }
    }
    if !(cfg.x_max > cfg.x_min) {
        bad("x_max", format!("must exceed x_min ({} <= {})", cfg.x_max, cfg.x_min));
    }
    if cfg.n_points < crate::numerics::MIN_POINTS {
        bad("n_points", format!("need at least {} points, got {}", crate::numerics::MIN_POINTS, cfg.n_points));
    }
    for (field, v, min) in [
        ("steps", cfg.steps, 2),
        ("checkpoints", cfg.checkpoints, 2),
        ("trajectories", cfg.trajectories, 2),
        ("n_states", cfg.n_states, 1),
        ("cells", cfg.cells, 1),
        ("scan_divisions", cfg.scan_divisions, 1),
        ("n_sites", cfg.n_sites, 1),
        ("samples", cfg.samples, crate::fieldlattice::MIN_SAMPLES),
        ("chains", cfg.chains, 1),
    ] {
        if v < min {
            bad(field, format!("must be at least {min}, got {v}"));
        }
    }
    if cfg.checkpoints > cfg.steps + 1 {
        bad("checkpoints", format!("cannot exceed steps + 1 = {}", cfg.steps + 1));
    }

    // ν follows from κ = 4ανm unless given, in which case it must agree
    let implied = cfg.kappa / (4.0 * cfg.alpha * cfg.mass);
    match raw.nu {
        None => cfg.nu = implied,
        Some(nu) if !(nu.is_finite() && nu > 0.0) => {
            bad("nu", format!("must be positive and finite (positivity invariant), got {nu}"))
        }
        Some(nu) => {
            cfg.nu = nu;
            if implied.is_finite() {
                if let Err(e) = cfg.params() {
                    bad("nu", format!("{e}"));
                }
            }
        }
    }

    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(diags)
    }
}

pub fn load_and_validate(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    validate(&RawConfig::load(path)?).map_err(ConfigError::Invalid)
}
