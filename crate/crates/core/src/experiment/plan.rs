use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::SchemeSpec;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::optimizers::AoSettings;
use crate::sim::Direction;
use crate::solver::SolverSettings;

/// Network parameters. Power is given as an SNR in dB with `σ² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub num_aps: usize,
    pub num_ues: usize,
    pub rf_chains: usize,
    /// Per-AP fronthaul capacity in bits per channel use.
    pub fronthaul: f64,
    /// Transmit SNR `P/σ²` in dB for UEs and APs alike.
    pub snr_db: f64,
    pub carrier_hz: f64,
    pub coverage_radius: f64,
    pub ref_distance: f64,
    /// Linear pathloss gain at the reference distance.
    pub ref_pathloss: f64,
    pub pathloss_exponent: f64,
    pub min_ap_distance: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let c = SystemConfig::default();
        SystemSection {
            num_aps: c.num_aps,
            num_ues: c.num_ues,
            rf_chains: c.rf_chains,
            fronthaul: c.fronthaul,
            snr_db: 15.0,
            carrier_hz: c.carrier_hz,
            coverage_radius: c.coverage_radius,
            ref_distance: c.ref_distance,
            ref_pathloss: c.ref_pathloss,
            pathloss_exponent: c.pathloss_exponent,
            min_ap_distance: c.min_ap_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    /// Meta-atoms per layer, laid out on a near-square grid.
    pub meta_atoms: usize,
    pub layers: usize,
    pub thickness_wavelengths: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let c = SystemConfig::default();
        GeometrySection {
            meta_atoms: c.atoms,
            layers: c.layers,
            thickness_wavelengths: c.thickness_wavelengths,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    MetaAtoms,
    Layers,
    RfChains,
    NumUes,
    Fronthaul,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::MetaAtoms => "meta_atoms",
            SweepAxis::Layers => "layers",
            SweepAxis::RfChains => "rf_chains",
            SweepAxis::NumUes => "num_ues",
            SweepAxis::Fronthaul => "fronthaul",
        }
    }

    fn integral(self) -> bool {
        matches!(
            self,
            SweepAxis::MetaAtoms | SweepAxis::Layers | SweepAxis::RfChains | SweepAxis::NumUes
        )
    }

    /// `config` with this axis set to `value`.
    pub fn apply(self, config: &SystemConfig, value: f64) -> Result<SystemConfig> {
        if self.integral() && !(value >= 1.0 && value.fract() == 0.0) {
            return Err(Error::Plan(format!(
                "{} takes positive integers, got {value}",
                self.as_str()
            )));
        }
        let n = value as usize;
        let c = config.clone();
        let c = match self {
            SweepAxis::SnrDb => c.with_snr_db(value),
            SweepAxis::MetaAtoms => SystemConfig { atoms: n, ..c },
            SweepAxis::Layers => SystemConfig { layers: n, ..c },
            SweepAxis::RfChains => SystemConfig { rf_chains: n, ..c },
            SweepAxis::NumUes => c.with_ues(n),
            SweepAxis::Fronthaul => SystemConfig {
                fronthaul: value,
                ..c
            },
        };
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionChoice {
    Uplink,
    Downlink,
    #[default]
    Both,
}

impl DirectionChoice {
    pub fn directions(self) -> &'static [Direction] {
        match self {
            DirectionChoice::Uplink => &[Direction::Uplink],
            DirectionChoice::Downlink => &[Direction::Downlink],
            DirectionChoice::Both => &[Direction::Uplink, Direction::Downlink],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub t0: f64,
    pub kappa: f64,
    pub grad_tol: f64,
    pub gap_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub shrink: f64,
    pub armijo: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverSection {
            t0: s.t0,
            kappa: s.kappa,
            grad_tol: s.grad_tol,
            gap_tol: s.gap_tol,
            max_inner: s.max_inner,
            max_outer: s.max_outer,
            shrink: s.shrink,
            armijo: s.armijo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoSection {
    pub max_outer: usize,
    pub max_digital: usize,
    pub max_wave: usize,
    pub tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub step_init: f64,
    pub step_decay: f64,
    pub strict_ascent: bool,
}

impl Default for AoSection {
    fn default() -> Self {
        let a = AoSettings::default();
        AoSection {
            max_outer: a.max_outer,
            max_digital: a.max_digital,
            max_wave: a.max_wave,
            tol: a.tol,
            penalty_init: a.penalty_init,
            penalty_growth: a.penalty_growth,
            step_init: a.step_init,
            step_decay: a.step_decay,
            strict_ascent: a.strict_ascent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write wall-clock columns; off keeps files byte-reproducible.
    pub timing: bool,
    /// Write one convergence trace per run.
    pub trace: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("results"),
            timing: false,
            trace: false,
        }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> usize {
    20
}

fn default_schemes() -> Vec<String> {
    ["hybrid", "fully_digital", "random_phase", "wave_only"]
        .map(String::from)
        .to_vec()
}

/// A Monte-Carlo sweep read from a TOML plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub direction: DirectionChoice,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub ao: AoSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Plan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Plan(e.to_string()))
    }

    pub fn base_config(&self) -> Result<SystemConfig> {
        let s = &self.system;
        let g = &self.geometry;
        let c = SystemConfig {
            num_aps: s.num_aps,
            rf_chains: s.rf_chains,
            atoms: g.meta_atoms,
            layers: g.layers,
            fronthaul: s.fronthaul,
            carrier_hz: s.carrier_hz,
            thickness_wavelengths: g.thickness_wavelengths,
            coverage_radius: s.coverage_radius,
            ref_distance: s.ref_distance,
            ref_pathloss: s.ref_pathloss,
            pathloss_exponent: s.pathloss_exponent,
            min_ap_distance: s.min_ap_distance,
            ..SystemConfig::default()
        }
        .with_ues(s.num_ues)
        .with_snr_db(s.snr_db);
        c.validate()?;
        Ok(c)
    }

    /// Configuration at the `index`-th sweep value.
    pub fn config_at(&self, index: usize) -> Result<SystemConfig> {
        let v = *self
            .sweep
            .values
            .get(index)
            .ok_or_else(|| Error::Plan(format!("no sweep value {index}")))?;
        self.sweep.axis.apply(&self.base_config()?, v)
    }

    pub fn scheme_specs(&self) -> Result<Vec<SchemeSpec>> {
        self.schemes
            .iter()
            .map(|s| s.parse().map_err(|e: Error| Error::Plan(e.to_string())))
            .collect()
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let s = &self.solver;
        SolverSettings {
            t0: s.t0,
            kappa: s.kappa,
            grad_tol: s.grad_tol,
            gap_tol: s.gap_tol,
            max_inner: s.max_inner,
            max_outer: s.max_outer,
            shrink: s.shrink,
            armijo: s.armijo,
            trace: false,
        }
    }

    pub fn ao_settings(&self) -> AoSettings {
        let a = &self.ao;
        AoSettings {
            max_outer: a.max_outer,
            max_digital: a.max_digital,
            max_wave: a.max_wave,
            tol: a.tol,
            penalty_init: a.penalty_init,
            penalty_growth: a.penalty_growth,
            step_init: a.step_init,
            step_decay: a.step_decay,
            strict_ascent: a.strict_ascent,
            solver: self.solver_settings(),
        }
    }

    /// Number of result rows the plan produces.
    pub fn cardinality(&self) -> usize {
        self.sweep.values.len()
            * self.schemes.len()
            * self.trials
            * self.direction.directions().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.values.is_empty() {
            return Err(Error::Plan("sweep.values is empty".into()));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Plan("sweep.values must be finite".into()));
        }
        if self.trials == 0 {
            return Err(Error::Plan("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Plan("schemes is empty".into()));
        }
        let specs = self.scheme_specs()?;
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].contains(s) {
                return Err(Error::Plan(format!("scheme {s} listed twice")));
            }
        }
        for i in 0..self.sweep.values.len() {
            self.config_at(i)
                .map_err(|e| Error::Plan(format!("sweep value {}: {e}", self.sweep.values[i])))?;
        }
        self.ao_settings()
            .validate()
            .map_err(|e| Error::Plan(e.to_string()))
    }
}

pub fn parse_plan(path: &Path) -> Result<ExperimentPlan> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Plan(format!("cannot read {}: {e}", path.display())))?;
    ExperimentPlan::from_toml(&text)
}
