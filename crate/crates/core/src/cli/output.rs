//! Run directory layout: manifest, telemetry and result files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::costs::{write_telemetry, TelemetryRow, TELEMETRY_HEADER};
use crate::error::{Result, SgmError};

/// Version of the manifest and result layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    /// Effective settings after defaults, config file and flags were merged.
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
}

pub(crate) fn hash_file(path: &Path) -> Result<InputHash> {
    let bytes = fs::read(path).map_err(|e| missing(path, e))?;
    Ok(InputHash { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

pub(crate) fn missing(path: &Path, e: std::io::Error) -> SgmError {
    SgmError::Usage(format!("cannot read {}: {e}", path.display()))
}

/// An output directory being filled by one run.
pub(crate) struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub(crate) fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub(crate) fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub(crate) fn json<S: Serialize>(&self, name: &str, value: &S) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub(crate) fn manifest(&self, m: &Manifest) -> Result<()> {
        self.json("manifest.json", m)
    }

    pub(crate) fn telemetry(&self, name: &str, rows: &[TelemetryRow]) -> Result<()> {
        write_telemetry(BufWriter::new(File::create(self.path(name))?), rows)
    }

    /// Header-only telemetry for runs without a training loop.
    pub(crate) fn empty_telemetry(&self) -> Result<()> {
        fs::write(self.path("telemetry.csv"), format!("{TELEMETRY_HEADER}\n"))?;
        Ok(())
    }

    /// Plain CSV with a header and `{:.16e}` numbers.
    pub(crate) fn table(&self, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        writeln!(w, "{header}")?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}
