//! Position-space studies on a uniform 1-D grid: square-well collapse
//! redistribution, eraser screen distributions, ballistic scattering and a
//! transport lower bound on how fast lives can redistribute.
//!
//! Bin `j` sits at `x_min + j·dx` with `dx = (x_max − x_min)/bins` and holds
//! the probability mass of that cell.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, EventId, EventKind, SimState, SplitTable};
use crate::qmath::{Basis, Ket, QmathError, Space, SystemLabel, Unitary, C64};

pub const DEFAULT_BINS: usize = 1024;
pub const MAX_TAIL_MASS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuumError {
    #[error("grid needs bins ≥ 8 and x_max > x_min (got {bins} bins on [{x_min}, {x_max}])")]
    BadGrid { x_min: f64, x_max: f64, bins: usize },
    #[error("profile has {got} values for {bins} bins")]
    Length { got: usize, bins: usize },
    #[error("profile value {value} at bin {bin} is negative or not finite")]
    Negative { bin: usize, value: f64 },
    #[error("profile sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("profiles live on different grids")]
    GridMismatch,
    #[error("nothing to export")]
    NoProfiles,
    #[error("all weights are zero")]
    ZeroWeight,
    #[error("superposition coefficients have norm² {0}, expected 1")]
    Coefficients(f64),
    #[error("mode number must be at least 1")]
    Mode,
    #[error("eraser needs σ > 0 and k·(x_max − x_min) ≥ 4π")]
    BadConfig,
    #[error("envelope mass {0:e} falls outside the grid")]
    Truncation(f64),
    #[error("speed must be positive")]
    Speed,
    #[error("basis for `{0}` must be a qubit basis")]
    QubitBasis(SystemLabel),
    #[error(transparent)]
    Qmath(#[from] QmathError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, ContinuumError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub bins: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, bins: usize) -> Result<Self> {
        if bins < 8 || !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(ContinuumError::BadGrid { x_min, x_max, bins });
        }
        Ok(Grid { x_min, x_max, bins })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.bins as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.bins).map(|j| self.x(j)).collect()
    }

    pub fn refined(&self) -> Grid {
        Grid { bins: self.bins * 2, ..*self }
    }
}

/// Probability mass per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DensityProfile {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.bins {
            return Err(ContinuumError::Length { got: values.len(), bins: grid.bins });
        }
        if let Some((bin, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(ContinuumError::Negative { bin, value });
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ContinuumError::NotNormalized(total));
        }
        Ok(DensityProfile { grid, values })
    }

    /// Normalize non-negative weights into a profile.
    pub fn from_weights(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(ContinuumError::ZeroWeight);
        }
        DensityProfile::new(grid, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().enumerate().map(|(j, v)| v * self.grid.x(j)).sum()
    }

    pub fn max_abs_diff(&self, other: &DensityProfile) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `x,value` rows with 17 significant digits, header first.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| ContinuumError::Csv(e.to_string());
        w.write_record(["x", "value"]).map_err(err)?;
        for (j, v) in self.values.iter().enumerate() {
            w.write_record([format!("{:.16e}", self.grid.x(j)), format!("{v:.16e}")]).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| ContinuumError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
    }

    /// Read the `x,value` format back; the grid is recovered from the x column.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for rec in r.deserialize::<(f64, f64)>() {
            let (x, v) = rec.map_err(|e| ContinuumError::Csv(e.to_string()))?;
            xs.push(x);
            values.push(v);
        }
        if xs.len() < 2 {
            return Err(ContinuumError::BadGrid { x_min: 0.0, x_max: 0.0, bins: xs.len() });
        }
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        let grid = Grid::new(xs[0], xs[0] + dx * xs.len() as f64, xs.len())?;
        DensityProfile::new(grid, values)
    }
}

/// Several profiles on one grid as `x,<name>...` columns.
pub fn profiles_to_csv(columns: &[(&str, &DensityProfile)]) -> Result<String> {
    let Some((_, first)) = columns.first() else {
        return Err(ContinuumError::NoProfiles);
    };
    if columns.iter().any(|(_, p)| p.grid != first.grid) {
        return Err(ContinuumError::GridMismatch);
    }
    let err = |e: csv::Error| ContinuumError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("x").chain(columns.iter().map(|(n, _)| *n))).map_err(err)?;
    for j in 0..first.grid.bins {
        let row = std::iter::once(format!("{:.16e}", first.grid.x(j)))
            .chain(columns.iter().map(|(_, p)| format!("{:.16e}", p.values[j])));
        w.write_record(row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| ContinuumError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

/// `sin(nπx/L)` on the grid.
pub fn square_well_mode(grid: &Grid, n: u32, length: f64) -> Vec<f64> {
    grid.points().iter().map(|x| (n as f64 * PI * x / length).sin()).collect()
}

/// Densities before (`|Σ c_n sin(nπx/L)|²`) and after (`Σ |c_n sin(nπx/L)|²`)
/// an energy measurement, on `bins` cells of `[0, L]`.
pub fn square_well_profiles(
    length: f64,
    superposition: &[(u32, C64)],
    bins: usize,
) -> Result<(DensityProfile, DensityProfile)> {
    let grid = Grid::new(0.0, length, bins)?;
    let norm: f64 = superposition.iter().map(|(_, c)| c.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(ContinuumError::Coefficients(norm));
    }
    if superposition.iter().any(|(n, _)| *n == 0) {
        return Err(ContinuumError::Mode);
    }
    let modes: Vec<(C64, Vec<f64>)> =
        superposition.iter().map(|(n, c)| (*c, square_well_mode(&grid, *n, length))).collect();
    let before = (0..bins).map(|j| modes.iter().map(|(c, m)| c * m[j]).sum::<C64>().norm_sqr()).collect();
    let after = (0..bins).map(|j| modes.iter().map(|(c, m)| (c * m[j]).norm_sqr()).sum()).collect();
    Ok((DensityProfile::from_weights(grid, before)?, DensityProfile::from_weights(grid, after)?))
}

/// Earth-mover distance between two profiles on one grid.
pub fn wasserstein1(a: &DensityProfile, b: &DensityProfile) -> Result<f64> {
    if a.grid != b.grid {
        return Err(ContinuumError::GridMismatch);
    }
    let mut cdf = 0.0;
    let mut total = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        cdf += x - y;
        total += cdf.abs();
    }
    Ok(total * a.grid.dx())
}

/// `W₁(before, after)/c`: no life moves faster than `c`, so redistribution
/// takes at least this long.
pub fn collapse_time_lower_bound(before: &DensityProfile, after: &DensityProfile, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(ContinuumError::Speed);
    }
    Ok(wasserstein1(before, after)? / c)
}

/// Eraser source `(G(x)e^{ikx}|0⟩ + G(x)e^{−ikx}|1⟩)/√2` with Gaussian `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EraserConfig {
    pub sigma: f64,
    pub k: f64,
    pub grid: Grid,
}

impl Default for EraserConfig {
    fn default() -> Self {
        let grid = Grid::new(-5.0, 5.0, DEFAULT_BINS).expect("valid default grid");
        EraserConfig { sigma: 0.8, k: PI / (80.0 * grid.dx()), grid }
    }
}

impl EraserConfig {
    pub fn new(sigma: f64, k: f64, grid: Grid) -> Result<Self> {
        let cfg = EraserConfig { sigma, k, grid };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.k * (self.grid.x_max - self.grid.x_min) >= 4.0 * PI) {
            return Err(ContinuumError::BadConfig);
        }
        let tail = self.tail_mass();
        if tail >= MAX_TAIL_MASS {
            return Err(ContinuumError::Truncation(tail));
        }
        Ok(())
    }

    pub fn refined(&self) -> EraserConfig {
        EraserConfig { grid: self.grid.refined(), ..*self }
    }

    fn gauss(&self, x: f64) -> f64 {
        (-x * x / (4.0 * self.sigma * self.sigma)).exp()
    }

    /// Fraction of the untruncated `G²` lying outside the grid.
    pub fn tail_mass(&self) -> f64 {
        let dx = self.grid.dx();
        let reach = 12.0 * self.sigma;
        let extra = (reach / dx).ceil() as i64;
        let (mut inside, mut outside) = (0.0, 0.0);
        for j in -extra..self.grid.bins as i64 + extra {
            let g2 = self.gauss(self.grid.x_min + j as f64 * dx).powi(2);
            if (0..self.grid.bins as i64).contains(&j) {
                inside += g2;
            } else {
                outside += g2;
            }
        }
        outside / (inside + outside)
    }

    /// `G(x)` normalized so that `Σ G² = 1` on the grid.
    pub fn envelope(&self) -> Vec<f64> {
        let g: Vec<f64> = self.grid.points().iter().map(|&x| self.gauss(x)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        g.into_iter().map(|v| v / norm).collect()
    }

    /// `Ω(x, q)` per bin, for `q = 0, 1`.
    pub fn omega(&self) -> Vec<[C64; 2]> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.envelope()
            .iter()
            .zip(self.grid.points())
            .map(|(g, x)| [C64::from_polar(g * s, self.k * x), C64::from_polar(g * s, -self.k * x)])
            .collect()
    }

    /// `|Ω⟩` on `(screen, qubit)`.
    pub fn omega_ket(&self, screen: impl Into<SystemLabel>, qubit: impl Into<SystemLabel>) -> Result<Ket> {
        let space = Space::new(vec![(screen.into(), self.grid.bins), (qubit.into(), 2)])?;
        Ok(Ket::new(space, self.omega().into_iter().flatten().collect())?)
    }
}

/// Screen distributions conditioned on each outcome of `qubit_basis`, with
/// the outcome probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraserDistributions {
    pub probabilities: BTreeMap<String, f64>,
    pub conditional: BTreeMap<String, DensityProfile>,
}

pub fn eraser_distributions(cfg: &EraserConfig, qubit_basis: &Basis) -> Result<EraserDistributions> {
    cfg.validate()?;
    if qubit_basis.dim() != 2 || !qubit_basis.is_complete() {
        return Err(ContinuumError::QubitBasis(qubit_basis.system().clone()));
    }
    let omega = cfg.omega();
    let mut probabilities = BTreeMap::new();
    let mut conditional = BTreeMap::new();
    for (i, label) in qubit_basis.labels().iter().enumerate() {
        let b = qubit_basis.vector(i);
        let w: Vec<f64> = omega.iter().map(|o| (b[0].conj() * o[0] + b[1].conj() * o[1]).norm_sqr()).collect();
        probabilities.insert(label.clone(), w.iter().sum());
        conditional.insert(label.clone(), DensityProfile::from_weights(cfg.grid, w)?);
    }
    Ok(EraserDistributions { probabilities, conditional })
}

/// Screen density with the qubit traced out.
pub fn eraser_unconditional(cfg: &EraserConfig) -> Result<DensityProfile> {
    let w = cfg.omega().iter().map(|o| o[0].norm_sqr() + o[1].norm_sqr()).collect();
    DensityProfile::from_weights(cfg.grid, w)
}

/// Fringe visibility `(max − min)/(max + min)` of `profile / G²` over the
/// central envelope, where `G²` is at least half its peak.
pub fn visibility(profile: &DensityProfile, cfg: &EraserConfig) -> f64 {
    let env: Vec<f64> = cfg.envelope().iter().map(|g| g * g).collect();
    let peak = env.iter().cloned().fold(0.0, f64::max);
    let ratios: Vec<f64> =
        env.iter().zip(&profile.values).filter(|(e, _)| **e >= 0.5 * peak).map(|(e, v)| v / e).collect();
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    if max + min <= 0.0 {
        return 0.0;
    }
    (max - min) / (max + min)
}

/// `CNOT·(H ⊗ I)`: `|0⟩|0⟩ ↦ (|B⟩|B⟩ + |T⟩|T⟩)/√2`.
pub fn scatter_unitary(p1: impl Into<SystemLabel>, p2: impl Into<SystemLabel>) -> Result<Unitary> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let m = [[s, 0.0, s, 0.0], [0.0, s, 0.0, s], [0.0, s, 0.0, -s], [s, 0.0, -s, 0.0]];
    let space = Space::new(vec![(p1.into(), 2), (p2.into(), 2)])?;
    Ok(Unitary::new(space, m.iter().flatten().map(|&x| C64::new(x, 0.0)).collect())?)
}

/// Bounce/transmit basis of one particle.
pub fn bounce_basis(p: impl Into<SystemLabel>) -> Basis {
    Basis::computational_with_labels(p, 2, vec!["B".into(), "T".into()])
}

/// Two single-class particles collide once: lives split evenly into
/// bounce-bounce and transmit-transmit.
pub fn ballistic_scatter() -> Result<SplitTable> {
    let (p1, p2) = (SystemLabel::new("p1"), SystemLabel::new("p2"));
    let mut st = SimState::new();
    st.add_system(Ket::basis_state(p1.clone(), 2, 0), bounce_basis(p1.clone()))?;
    st.add_system(Ket::basis_state(p2.clone(), 2, 0), bounce_basis(p2.clone()))?;
    let u = scatter_unitary(p1.clone(), p2.clone())?;
    Ok(st.interact(
        &p1,
        &p2,
        &u,
        bounce_basis(p1.clone()),
        bounce_basis(p2.clone()),
        EventId::new(1, "collide"),
        EventKind::Couple,
    )?)
}
