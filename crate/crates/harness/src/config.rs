//! Experiment configuration, read from TOML with unknown keys rejected.
//!
//! Every field has a default and the serialized form always spells all of
//! them out, so the `config.toml` stored next to a run is self-describing.
//! Integer fields documented as "0 = auto" are derived from the grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tglab_core::localization::{EnergyWindow, FitOptions};
use tglab_core::potential::PotentialModel;
use tglab_core::Grid;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Spectrum,
    Correlator,
    Obdm,
    Bec,
    Stiffness,
    Bound,
    Dynamics,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Spectrum => "spectrum",
            Kind::Correlator => "correlator",
            Kind::Obdm => "obdm",
            Kind::Bec => "bec",
            Kind::Stiffness => "stiffness",
            Kind::Bound => "bound",
            Kind::Dynamics => "dynamics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Ring lengths `L`; every length is run with the same realization indices.
    pub lengths: Vec<usize>,
    pub points_per_unit: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lengths: vec![32],
            points_per_unit: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    AlloyStep { v_max: f64 },
    AlloyBump { v_max: f64, profile: Vec<f64> },
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig::AlloyStep { v_max: 4.0 }
    }
}

impl PotentialConfig {
    pub fn model(&self) -> PotentialModel<f64> {
        match self {
            PotentialConfig::Zero => PotentialModel::zero(),
            PotentialConfig::AlloyStep { v_max } => PotentialModel::alloy_step(*v_max),
            PotentialConfig::AlloyBump { v_max, profile } => {
                PotentialModel::alloy_bump(profile.clone(), *v_max)
            }
        }
    }
}

/// How the particle number is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Particles {
    /// Chemical potential; `N_mu = min(N_+, N_-)` per realization.
    Mu { value: f64 },
    Count { value: usize },
    /// `N = round(value * L)` at each length.
    Density { value: f64 },
}

impl Default for Particles {
    fn default() -> Self {
        Particles::Mu { value: 3.0 }
    }
}

impl Particles {
    pub fn mu(&self) -> Option<f64> {
        match self {
            Particles::Mu { value } => Some(*value),
            _ => None,
        }
    }

    pub fn count_at(&self, length: usize) -> Option<usize> {
        match self {
            Particles::Mu { .. } => None,
            Particles::Count { value } => Some(*value),
            Particles::Density { value } => Some((value * length as f64).round() as usize),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowConfig {
    /// `(-inf, mu]` with `mu` taken from `[particles]`.
    #[default]
    Chemical,
    Below { upper: f64 },
    Interval { lower: f64, upper: f64 },
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub d_min: usize,
    /// 0 = auto (`L / 2 - 1`).
    pub d_max: usize,
    pub xi: f64,
    pub divergence_factor: f64,
    /// Localization length used by `bound`; 0 = fit it from the correlator ensemble.
    pub ell: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            d_min: 2,
            d_max: 0,
            xi: 1.0,
            divergence_factor: 10.0,
            ell: 0.0,
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions<f64> {
        FitOptions {
            xi: self.xi,
            d_min: self.d_min,
            d_max: (self.d_max > 0).then_some(self.d_max),
            divergence_factor: self.divergence_factor,
        }
    }
}

/// Trap release: Dirichlet orbitals of the trap projected onto the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Trap `K` as `[start, end)` in fractions of the ring.
    pub trap: [f64; 2],
    /// Observation region `I`, same convention; must not overlap the trap.
    pub far: [f64; 2],
    /// Orbitals per trap cell.
    pub filling: f64,
    pub t0: f64,
    pub t_max: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            trap: [0.0, 0.25],
            far: [0.5, 0.75],
            filling: 0.5,
            t0: 1.0,
            t_max: 1e4,
        }
    }
}

impl DynamicsConfig {
    fn cells(span: [f64; 2], length: usize) -> Vec<usize> {
        let a = (span[0] * length as f64).round() as usize;
        let b = (span[1] * length as f64).round() as usize;
        (a..b.min(length)).collect()
    }

    pub fn trap_cells(&self, length: usize) -> Vec<usize> {
        Self::cells(self.trap, length)
    }

    pub fn far_cells(&self, length: usize) -> Vec<usize> {
        Self::cells(self.far, length)
    }

    pub fn count(&self, length: usize) -> usize {
        (self.filling * self.trap_cells(length).len() as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_theta")]
    pub theta: Vec<f64>,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    /// Output directory; empty = `$TGLAB_OUT/<kind>-<hash>` or `tglab-out/<kind>-<hash>`.
    #[serde(default)]
    pub output: String,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub particles: Particles,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
}

fn default_realizations() -> usize {
    1
}

fn default_theta() -> Vec<f64> {
    vec![0.2]
}

fn default_eval_samples() -> usize {
    4
}

impl ExperimentConfig {
    pub fn new(kind: Kind) -> Self {
        ExperimentConfig {
            kind,
            realizations: 1,
            base_seed: 0,
            theta: default_theta(),
            eval_samples: default_eval_samples(),
            output: String::new(),
            grid: GridConfig::default(),
            potential: PotentialConfig::default(),
            particles: Particles::default(),
            window: WindowConfig::default(),
            fit: FitConfig::default(),
            dynamics: DynamicsConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Canonical serialization with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.grid.lengths.is_empty() {
            return bad("grid.lengths is empty".into());
        }
        for &l in &self.grid.lengths {
            let g = Grid::new(l, self.grid.points_per_unit)?;
            self.potential.model().validate(&g)?;
            if !self.grid.points_per_unit.is_multiple_of(self.eval_samples.max(1)) || self.eval_samples == 0 {
                return bad(format!(
                    "eval_samples = {} must divide points_per_unit = {}",
                    self.eval_samples, self.grid.points_per_unit
                ));
            }
            if let Some(n) = self.particles.count_at(l) {
                if n == 0 || n > g.num_points() {
                    return bad(format!("particle number {n} invalid at L = {l}"));
                }
            }
        }
        if let Particles::Mu { value } = self.particles {
            if !value.is_finite() {
                return bad("particles.value must be finite".into());
            }
        }
        match self.window {
            WindowConfig::Chemical if self.particles.mu().is_none() => {
                return bad("window.mode = \"chemical\" needs particles.mode = \"mu\"".into())
            }
            WindowConfig::Interval { lower, upper } if !(lower < upper) => {
                return bad(format!("window interval [{lower}, {upper}] is empty"))
            }
            _ => {}
        }
        let twisted = matches!(self.kind, Kind::Stiffness | Kind::Bound);
        if twisted {
            if self.particles.mu().is_none() {
                return bad(format!("{} runs need particles.mode = \"mu\"", self.kind.name()));
            }
            if self.theta.is_empty() {
                return bad("theta list is empty".into());
            }
            if let Some(t) = self.theta.iter().find(|t| !(**t > 0.0 && **t < std::f64::consts::PI)) {
                return bad(format!("theta = {t} outside (0, pi)"));
            }
        }
        if self.fit.d_max > 0 && self.fit.d_max < self.fit.d_min {
            return bad("fit.d_max < fit.d_min".into());
        }
        if !(self.fit.xi > 0.0) || self.fit.ell < 0.0 {
            return bad("fit.xi must be positive and fit.ell non-negative".into());
        }
        if self.kind == Kind::Dynamics {
            let d = &self.dynamics;
            for span in [d.trap, d.far] {
                if !(0.0 <= span[0] && span[0] < span[1] && span[1] <= 1.0) {
                    return bad(format!("dynamics region {span:?} is not a sub-interval of [0, 1]"));
                }
            }
            if d.trap[0] < d.far[1] && d.far[0] < d.trap[1] {
                return bad("dynamics.trap and dynamics.far overlap".into());
            }
            if !(d.filling > 0.0) || !(d.t0 > 0.0) || !(d.t_max >= d.t0) {
                return bad("dynamics needs filling > 0 and 0 < t0 <= t_max".into());
            }
            for &l in &self.grid.lengths {
                if d.trap_cells(l).is_empty() || d.count(l) == 0 {
                    return bad(format!("dynamics trap holds no orbitals at L = {l}"));
                }
            }
        }
        Ok(())
    }

    pub fn window(&self) -> EnergyWindow<f64> {
        match self.window {
            WindowConfig::Chemical => EnergyWindow::below(self.particles.mu().unwrap_or(f64::INFINITY)),
            WindowConfig::Below { upper } => EnergyWindow::below(upper),
            WindowConfig::Interval { lower, upper } => {
                EnergyWindow::interval(lower, upper).expect("validated interval")
            }
            WindowConfig::All => EnergyWindow::below(f64::INFINITY),
        }
    }

    /// Resolved output directory: explicit setting, then `TGLAB_OUT`, then `tglab-out`.
    pub fn output_dir(&self, hash: &str) -> PathBuf {
        if !self.output.is_empty() {
            return PathBuf::from(&self.output);
        }
        let root = std::env::var_os("TGLAB_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("tglab-out"));
        root.join(format!("{}-{}", self.kind.name(), &hash[..12]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_explicitly() {
        let cfg = ExperimentConfig::from_toml("kind = \"correlator\"").unwrap();
        let text = cfg.to_toml();
        for key in ["realizations", "base_seed", "lengths", "points_per_unit", "v_max", "d_min", "t_max"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml("kind = \"spectrum\"\nrealisations = 3").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = ExperimentConfig::from_toml("kind = \"spectrum\"\n[grid]\nlength = [8]").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        for text in [
            "kind = \"spectrum\"\n[grid]\nlengths = [4]\npoints_per_unit = 8",
            "kind = \"obdm\"\neval_samples = 3",
            "kind = \"stiffness\"\ntheta = [4.0]",
            "kind = \"stiffness\"\n[particles]\nmode = \"count\"\nvalue = 4\n[window]\nmode = \"all\"",
            "kind = \"correlator\"\n[particles]\nmode = \"count\"\nvalue = 4",
            "kind = \"dynamics\"\n[dynamics]\ntrap = [0.0, 0.5]\nfar = [0.25, 0.75]\nfilling = 0.5\nt0 = 1.0\nt_max = 10.0",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn dynamics_regions_scale_with_length() {
        let d = DynamicsConfig::default();
        assert_eq!(d.trap_cells(32), (0..8).collect::<Vec<_>>());
        assert_eq!(d.far_cells(32), (16..24).collect::<Vec<_>>());
        assert_eq!(d.count(32), 4);
    }

    #[test]
    fn density_sets_count_per_length() {
        let p = Particles::Density { value: 0.5 };
        assert_eq!(p.count_at(16), Some(8));
        assert_eq!(p.count_at(64), Some(32));
    }
}
