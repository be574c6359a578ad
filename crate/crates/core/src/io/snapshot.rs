//! Snapshot and per-snapshot diagnostics records.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every finite `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::SnapshotFormat;
use crate::error::{Error, Result};
use crate::kernel::Alpha;
use crate::state::{ParticleCloud, VortexRing};

pub const CSV_HEADER: &str = "t,j,r,z,g,vol";

pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one record per ring.
pub fn write_rings(
    cloud: &ParticleCloud,
    format: SnapshotFormat,
    w: &mut impl Write,
) -> std::io::Result<()> {
    let t = fmt17(cloud.t);
    for (j, ring) in cloud.rings.iter().enumerate() {
        let (r, z, g, vol) = (fmt17(ring.r), fmt17(ring.z), fmt17(ring.g), fmt17(ring.vol));
        match format {
            SnapshotFormat::Csv => writeln!(w, "{t},{j},{r},{z},{g},{vol}")?,
            SnapshotFormat::Jsonl => writeln!(
                w,
                r#"{{"t":{t},"j":{j},"r":{r},"z":{z},"g":{g},"vol":{vol}}}"#
            )?,
        }
    }
    Ok(())
}

/// Conserved quantities and monitors at one snapshot time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub rings: usize,
    pub total_weight: f64,
    pub abs_weight: f64,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub energy: Option<f64>,
}

impl DiagnosticsRecord {
    fn to_json_line(&self) -> String {
        let energy = self.energy.map_or_else(|| "null".to_string(), fmt17);
        format!(
            r#"{{"t":{},"rings":{},"total_weight":{},"abs_weight":{},"l2_norm":{},"linf_norm":{},"energy":{}}}"#,
            fmt17(self.t),
            self.rings,
            fmt17(self.total_weight),
            fmt17(self.abs_weight),
            fmt17(self.l2_norm),
            fmt17(self.linf_norm),
            energy
        )
    }
}

/// Open snapshot and diagnostics files of a run directory.
pub struct SnapshotSink {
    format: SnapshotFormat,
    snap_path: PathBuf,
    diag_path: PathBuf,
    snap: BufWriter<File>,
    diag: BufWriter<File>,
}

pub fn snapshot_file_name(format: SnapshotFormat) -> &'static str {
    match format {
        SnapshotFormat::Csv => "snapshots.csv",
        SnapshotFormat::Jsonl => "snapshots.jsonl",
    }
}

pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

impl SnapshotSink {
    pub fn create(dir: &Path, format: SnapshotFormat) -> Result<Self> {
        let snap_path = dir.join(snapshot_file_name(format));
        let diag_path = dir.join(DIAGNOSTICS_FILE);
        let mut snap = create(&snap_path)?;
        if format == SnapshotFormat::Csv {
            writeln!(snap, "{CSV_HEADER}").map_err(|e| Error::io(&snap_path, e))?;
        }
        Ok(SnapshotSink {
            format,
            diag: create(&diag_path)?,
            snap,
            snap_path,
            diag_path,
        })
    }

    pub fn write_snapshot(
        &mut self,
        cloud: &ParticleCloud,
        diagnostics: &DiagnosticsRecord,
    ) -> Result<()> {
        write_rings(cloud, self.format, &mut self.snap)
            .map_err(|e| Error::io(&self.snap_path, e))?;
        writeln!(self.diag, "{}", diagnostics.to_json_line())
            .map_err(|e| Error::io(&self.diag_path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.snap
            .flush()
            .map_err(|e| Error::io(&self.snap_path, e))?;
        self.diag.flush().map_err(|e| Error::io(&self.diag_path, e))
    }
}

#[derive(Deserialize)]
struct Row {
    t: f64,
    j: usize,
    r: f64,
    z: f64,
    g: f64,
    vol: f64,
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    }
}

fn read_rows(path: &Path) -> Result<Vec<(usize, Row)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let jsonl = path.extension().is_some_and(|e| e == "jsonl");
    if jsonl {
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e))?;
            rows.push((i + 1, row));
        }
        return Ok(rows);
    }
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{CSV_HEADER}`"),
        ));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map(|r| (i + 2, r))
                .map_err(|e| parse_err(path, i + 2, e))
        })
        .collect()
}

/// Reads every snapshot in a snapshot file. Values are taken as stored, without
/// validation, so that a verify pass can report what is wrong with them.
pub fn read_snapshots(path: &Path, alpha: Alpha, n_theta: usize) -> Result<Vec<ParticleCloud>> {
    let mut out: Vec<ParticleCloud> = Vec::new();
    for (line, row) in read_rows(path)? {
        if row.j == 0 {
            let mut c = ParticleCloud::new(Vec::new(), alpha);
            c.t = row.t;
            out.push(c);
        }
        let Some(cloud) = out.last_mut() else {
            return Err(parse_err(path, line, "snapshot does not start at ring 0"));
        };
        if row.j != cloud.rings.len() || row.t.to_bits() != cloud.t.to_bits() {
            return Err(parse_err(
                path,
                line,
                format!("ring {} out of sequence", row.j),
            ));
        }
        cloud.rings.push(VortexRing {
            r: row.r,
            z: row.z,
            g: row.g,
            vol: row.vol,
            n_theta,
        });
    }
    Ok(out)
}
