//! Artifact files: CSV tables, level-set grids and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Diagnostic};

/// Writes files into one directory and remembers their hashes.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Shortest round-trip exponent form, identical across runs.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// `(name, sha256)` of every file written so far, in write order.
    pub fn files(&self) -> &[(String, String)] {
        &self.files
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        let hash = sha256_hex(bytes);
        match self.files.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 = hash,
            None => self.files.push((name.to_string(), hash)),
        }
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| CliError::io(&self.dir.join(name), std::io::Error::other(e));
        w.write_record(header).map_err(wrap)?;
        for r in rows {
            w.write_record(r).map_err(wrap)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(&self.dir.join(name), std::io::Error::other(e.to_string())))?;
        self.write(name, &bytes)
    }
}

/// Row-major nodal grid: one line per node row `j`, `nx + 1` values each.
pub fn format_phi(phi: &[f64], nx: usize) -> String {
    let mut s = String::with_capacity(phi.len() * 14);
    for row in phi.chunks(nx + 1) {
        let line: Vec<String> = row.iter().map(|v| num(*v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_phi(text: &str, nx: usize, ny: usize, path: &Path) -> Result<Vec<f64>, Vec<Diagnostic>> {
    let mut phi = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut rows = 0;
    let mut diags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        rows += 1;
        let vals: Vec<&str> = s.split_whitespace().collect();
        if vals.len() != nx + 1 {
            diags.push(Diagnostic::error(format!("row has {} values, grid needs {}", vals.len(), nx + 1)).at(path, Some(i + 1)));
            continue;
        }
        for v in vals {
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => phi.push(x),
                _ => diags.push(Diagnostic::error(format!("'{v}' is not a finite number")).at(path, Some(i + 1))),
            }
        }
    }
    if diags.is_empty() && rows != ny + 1 {
        diags.push(Diagnostic::error(format!("{rows} rows, grid needs {}", ny + 1)).at(path, None));
    }
    if diags.is_empty() {
        Ok(phi)
    } else {
        Err(diags)
    }
}

pub fn load_phi(path: &Path, nx: usize, ny: usize) -> Result<Vec<f64>, Vec<Diagnostic>> {
    let text = fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::error(format!("cannot read level set: {e}")).at(path, None)])?;
    parse_phi(&text, nx, ny, path)
}

/// Body of `manifest.txt`, in the same `key = value` format as the config.
pub struct Manifest<'a> {
    pub status: &'a str,
    pub failure: Option<(&'a str, String)>,
    pub wall_time_s: f64,
    pub config_echo: &'a str,
    pub warnings: &'a [String],
    pub files: &'a [(String, String)],
}

impl Manifest<'_> {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]\nstatus = {}", self.status);
        if let Some((stage, err)) = &self.failure {
            let _ = writeln!(s, "failed_stage = {stage}\nerror = {}", err.replace('\n', " "));
        }
        let _ = writeln!(s, "lram_version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "wall_time_s = {:.3}", self.wall_time_s);
        let _ = writeln!(s, "\n[warnings]");
        for (i, w) in self.warnings.iter().enumerate() {
            let _ = writeln!(s, "w{i} = {}", w.replace('\n', " "));
        }
        let _ = writeln!(s, "\n[config]");
        for line in self.config_echo.lines().filter(|l| !l.trim().is_empty()) {
            let _ = writeln!(s, "{line}");
        }
        let _ = writeln!(s, "\n[files]");
        for (name, hash) in self.files {
            let _ = writeln!(s, "{name} = sha256:{hash}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn phi_round_trip_and_shape_errors() {
        let phi: Vec<f64> = (0..12).map(|k| k as f64 * 0.1 - 0.55).collect();
        let text = format_phi(&phi, 3);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_phi(&text, 3, 2, Path::new("p")).unwrap(), phi);
        let d = parse_phi(&text, 2, 2, Path::new("p")).unwrap_err();
        assert_eq!(d[0].line, Some(1));
        assert!(parse_phi(&text, 3, 3, Path::new("p")).is_err());
    }
}
