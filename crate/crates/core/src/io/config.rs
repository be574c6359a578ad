//! Run configuration, stored as TOML.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{EnergyGrid, VerifySettings};
use crate::error::{Error, Result};
use crate::evolve::{Controls, EvolverKind, PicardSettings};
use crate::kernel::Alpha;
use crate::measure::mollify;
use crate::state::{
    init_from_profile, Atom, GaussianCore, GaussianRings, MeasureData, MeridionalBox,
    MeridionalGrid, ParticleCloud, VortexRing,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub schema_version: u32,
    pub alpha: Alpha,
    /// Seeds probe-point generation only; the solver is deterministic.
    #[serde(default)]
    pub seed: u64,
    pub initial: InitialCondition,
    pub grid: MeridionalGrid,
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Truncated Gaussian cores sampled on the grid.
    GaussianRings { cores: Vec<GaussianCore> },
    /// Explicit thin rings `[r, z, weight]`, one per entry.
    Rings { rings: Vec<[f64; 3]> },
    /// Dirac rings `[r, z, mass]` mollified at width `eps`.
    Measure {
        atoms: Vec<Atom>,
        eps: f64,
        /// Declared support of the measure; defaults to the grid box.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<MeridionalBox>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    #[serde(default)]
    pub evolver: EvolverKind,
    pub dt: f64,
    /// Total simulated time.
    pub t_end: f64,
    #[serde(default = "one")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub picard: PicardSettings,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "yes")]
    pub energy: bool,
    /// Defaults to the cloud's bounding box padded by 10 alpha, 64 x 64 cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_grid: Option<EnergyGrid>,
    #[serde(default = "yes")]
    pub verify: bool,
    #[serde(default)]
    pub verify_settings: VerifySettings,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            energy: true,
            energy_grid: None,
            verify: true,
            verify_settings: VerifySettings::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default)]
    pub format: SnapshotFormat,
}

fn default_dir() -> String {
    "run".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_dir(),
            format: SnapshotFormat::Csv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps_list: Vec<f64>,
    /// Alpha values to sweep; defaults to the top-level alpha.
    #[serde(default)]
    pub alphas: Vec<Alpha>,
    /// Meridional probe points `[r, z]`.
    pub probes: Vec<[f64; 2]>,
    /// Duration of each member run.
    #[serde(default)]
    pub t_span: f64,
}

fn require(ok: bool, msg: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        require(
            self.schema_version == SCHEMA_VERSION,
            format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ),
        )?;
        require(
            self.grid.nr > 0 && self.grid.nz > 0,
            "grid.nr > 0 and grid.nz > 0 required",
        )?;
        crate::state::check_n_theta(self.grid.n_theta).map_err(|e| Error::Config(e.to_string()))?;
        let ev = &self.evolve;
        require(ev.dt > 0.0 && ev.dt.is_finite(), "evolve.dt > 0 required")?;
        require(
            ev.t_end >= 0.0 && ev.t_end.is_finite(),
            "evolve.t_end >= 0 required",
        )?;
        require(
            ev.snapshot_every >= 1,
            "evolve.snapshot_every >= 1 required",
        )?;
        require(ev.picard.tol > 0.0, "evolve.picard.tol > 0 required")?;
        require(
            ev.picard.max_iter >= 1,
            "evolve.picard.max_iter >= 1 required",
        )?;
        require(
            ev.picard.nodes_per_window >= 1,
            "evolve.picard.nodes_per_window >= 1 required",
        )?;
        match &self.initial {
            InitialCondition::GaussianRings { cores } => {
                for c in cores {
                    require(c.core > 0.0, "initial.cores[].core > 0 required")?;
                    require(c.radius >= 0.0, "initial.cores[].radius >= 0 required")?;
                }
            }
            InitialCondition::Rings { rings } => {
                for r in rings {
                    require(
                        r[0] >= 0.0 && r.iter().all(|v| v.is_finite()),
                        "initial.rings[] needs r >= 0",
                    )?;
                }
            }
            InitialCondition::Measure { eps, .. } => {
                require(*eps > 0.0 && eps.is_finite(), "initial.eps > 0 required")?;
            }
        }
        if let Some(s) = &self.sweep {
            require(!s.eps_list.is_empty(), "sweep.eps_list must not be empty")?;
            require(
                s.eps_list.iter().all(|e| *e > 0.0),
                "sweep.eps_list entries must be > 0",
            )?;
            require(
                s.eps_list.windows(2).all(|w| w[1] < w[0]),
                "sweep.eps_list must be strictly decreasing",
            )?;
            require(s.t_span >= 0.0, "sweep.t_span >= 0 required")?;
        }
        Ok(())
    }

    pub fn controls(&self) -> Controls {
        Controls {
            evolver: self.evolve.evolver,
            dt: self.evolve.dt,
            snapshot_every: self.evolve.snapshot_every,
            picard: self.evolve.picard,
        }
    }

    /// Measure datum of a `measure` initial condition.
    pub fn measure_data(&self) -> Result<Option<MeasureData>> {
        match &self.initial {
            InitialCondition::Measure { atoms, support, .. } => Ok(Some(MeasureData::new(
                atoms.clone(),
                support.unwrap_or(self.grid.bounds),
            )?)),
            _ => Ok(None),
        }
    }

    pub fn initial_cloud(&self) -> Result<ParticleCloud> {
        match &self.initial {
            InitialCondition::GaussianRings { cores } => init_from_profile(
                &GaussianRings {
                    cores: cores.clone(),
                },
                &self.grid,
                self.alpha,
            ),
            InitialCondition::Rings { rings } => {
                let rings = rings
                    .iter()
                    .map(|r| VortexRing::with_weight(r[0], r[1], r[2], self.grid.n_theta))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ParticleCloud::new(rings, self.alpha))
            }
            InitialCondition::Measure { eps, .. } => {
                let data = self.measure_data()?.expect("measure variant");
                mollify(&data, *eps, &self.grid, self.alpha)
            }
        }
    }
}

/// Parses and validates a TOML config.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let cfg: SimulationConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn serialize_config(cfg: &SimulationConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}
