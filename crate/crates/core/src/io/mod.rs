//! Configuration, persistence and run directories.
//!
//! A run directory holds `config.toml` (the exact configuration used),
//! `manifest.json`, the snapshot file, `diagnostics.jsonl`, `picard.jsonl`
//! for Picard runs, and `verify.json`. Nothing written depends on wall-clock
//! time or thread count.

pub mod config;
pub mod snapshot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    parse_config, serialize_config, InitialCondition, SimulationConfig, SnapshotFormat,
    SweepConfig, SCHEMA_VERSION,
};
pub use snapshot::{read_snapshots, snapshot_file_name, DiagnosticsRecord, SnapshotSink};

use crate::diagnostics::{energy_monitor, verify_snapshots, EnergyGrid, VerifyReport};
use crate::error::{Error, Result};
use crate::evolve::advance;
use crate::kernel::{bound_scan, KernelConstants};
use crate::state::{lp_norm, Exponent, MeridionalBox, ParticleCloud};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VERIFY_FILE: &str = "verify.json";
pub const PICARD_FILE: &str = "picard.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub program: String,
    pub version: String,
    pub rings: usize,
    pub snapshots: usize,
    pub t_end: f64,
    pub axis_clamps: usize,
    pub picard_windows: usize,
    pub files: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub directory: PathBuf,
    pub manifest: Manifest,
    pub verify: Option<VerifyReport>,
}

pub fn read_config(path: &Path) -> Result<SimulationConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(message) => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Config(e.to_string()))
}

/// Energy grid used when the config does not give one.
pub fn default_energy_grid(cloud: &ParticleCloud) -> Option<EnergyGrid> {
    let bb = cloud.bounding_box()?;
    let pad = 10.0 * cloud.alpha.get();
    let bounds = MeridionalBox::new(
        (bb[0] - pad).max(0.0),
        bb[1] + pad,
        bb[2] - pad,
        bb[3] + pad,
    )
    .ok()?;
    Some(EnergyGrid {
        bounds,
        nr: 64,
        nz: 64,
    })
}

pub fn diagnostics_record(
    cloud: &ParticleCloud,
    energy_grid: Option<&EnergyGrid>,
) -> Result<DiagnosticsRecord> {
    let (l2, linf) = if cloud.is_empty() {
        (0.0, 0.0)
    } else {
        (
            lp_norm(cloud, Exponent::Finite(2.0))?,
            lp_norm(cloud, Exponent::Infinity)?,
        )
    };
    let energy = match energy_grid {
        Some(g) => match energy_monitor(cloud, g) {
            Ok(e) => Some(e),
            Err(Error::GridTooSmall { .. }) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(DiagnosticsRecord {
        t: cloud.t,
        rings: cloud.len(),
        total_weight: cloud.total_weight(),
        abs_weight: cloud.abs_weight(),
        l2_norm: l2,
        linf_norm: linf,
        energy,
    })
}

/// Runs the configured simulation into `dir`, then verifies the stored snapshots.
pub fn run_simulation(cfg: &SimulationConfig, dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(CONFIG_FILE), &serialize_config(cfg)?)?;
    let cloud0 = cfg.initial_cloud()?;
    let energy_grid = if cfg.diagnostics.energy {
        cfg.diagnostics
            .energy_grid
            .or_else(|| default_energy_grid(&cloud0))
    } else {
        None
    };
    let mut sink = SnapshotSink::create(dir, cfg.output.format)?;
    let mut snapshots = 0;
    let out = advance(&cloud0, cfg.evolve.t_end, &cfg.controls(), |c| {
        snapshots += 1;
        sink.write_snapshot(c, &diagnostics_record(c, energy_grid.as_ref())?)
    })?;
    sink.finish()?;
    let mut files = vec![
        CONFIG_FILE.to_string(),
        MANIFEST_FILE.to_string(),
        snapshot_file_name(cfg.output.format).to_string(),
        snapshot::DIAGNOSTICS_FILE.to_string(),
    ];
    if !out.picard_reports.is_empty() {
        let path = dir.join(PICARD_FILE);
        let mut text = Vec::new();
        for r in &out.picard_reports {
            let line = serde_json::to_string(r).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(text, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        files.push(PICARD_FILE.to_string());
    }
    let verify = if cfg.diagnostics.verify {
        files.push(VERIFY_FILE.to_string());
        Some(verify_run_dir(dir, &bound_scan()?)?)
    } else {
        None
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        program: "vortalpha".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        rings: cloud0.len(),
        snapshots,
        t_end: out.cloud.t,
        axis_clamps: out.history.clamp_count,
        picard_windows: out.picard_reports.len(),
        files,
    };
    write_file(&dir.join(MANIFEST_FILE), &json(&manifest)?)?;
    Ok(RunSummary {
        directory: dir.to_path_buf(),
        manifest,
        verify,
    })
}

/// Snapshot file present in a run directory.
pub fn find_snapshot_file(dir: &Path) -> Result<PathBuf> {
    [SnapshotFormat::Csv, SnapshotFormat::Jsonl]
        .iter()
        .map(|f| dir.join(snapshot_file_name(*f)))
        .find(|p| p.exists())
        .ok_or_else(|| Error::Parse {
            path: dir.to_path_buf(),
            message: "no snapshot file in run directory".into(),
        })
}

/// Loads the snapshots of a run directory with the alpha and `n_theta` of its config.
pub fn load_run(dir: &Path) -> Result<(SimulationConfig, Vec<ParticleCloud>)> {
    let cfg = read_config(&dir.join(CONFIG_FILE))?;
    let snaps = read_snapshots(&find_snapshot_file(dir)?, cfg.alpha, cfg.grid.n_theta)?;
    Ok((cfg, snaps))
}

/// Verifies a run directory and writes `verify.json` into it.
pub fn verify_run_dir(dir: &Path, k: &KernelConstants) -> Result<VerifyReport> {
    let (cfg, snaps) = load_run(dir)?;
    let report = verify_snapshots(&snaps, k, &cfg.diagnostics.verify_settings)?;
    write_file(&dir.join(VERIFY_FILE), &json(&report)?)?;
    Ok(report)
}
