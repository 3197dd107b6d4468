//! Run manifests and deterministic output writers.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "affectlens";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Written next to every command's outputs. Holds nothing that varies
/// between identical reruns: no timestamps, no output directory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<InputFile>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Collects inputs and outputs of one command run.
#[derive(Debug)]
pub struct RunRecorder {
    out_dir: PathBuf,
    command: String,
    seed: u64,
    inputs: Vec<InputFile>,
    outputs: Vec<String>,
}

impl RunRecorder {
    pub fn new(command: &str, seed: u64, out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(RunRecorder {
            out_dir: out_dir.to_path_buf(),
            command: command.to_string(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Hash an input file; a missing file is an input error.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputFile {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Path for an output file inside the run directory, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.out_dir.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.output(name);
        write_json(&path, value)?;
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.output(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Write a CSV file from a header and rows of string fields.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.output(name);
        let io = |e: csv::Error| Error::io(&path, e.into());
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn finish<C: Serialize>(self, config: &C) -> Result<Manifest> {
        let manifest = Manifest {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            command: self.command,
            seed: self.seed,
            inputs: self.inputs,
            config: serde_json::to_value(config)?,
            outputs: self.outputs,
        };
        write_json(&self.out_dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shortest round-trip representation of a float for CSV cells.
pub fn fmt_f64(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}
