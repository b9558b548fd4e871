//! Pipeline configuration: flat `key = value` lines grouped under `[section]`
//! headers. `#` starts a comment. Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Optimize,
    Homogenize,
    Dispersion,
    Transmission,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Optimize, Stage::Homogenize, Stage::Dispersion, Stage::Transmission];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Optimize => "optimize",
            Stage::Homogenize => "homogenize",
            Stage::Dispersion => "dispersion",
            Stage::Transmission => "transmission",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name().eq_ignore_ascii_case(s.trim()))
    }
}

/// Parses a comma-separated stage list, sorted into pipeline order.
pub fn parse_stages(s: &str) -> Result<Vec<Stage>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let st = Stage::parse(part).ok_or_else(|| {
            format!("unknown stage '{part}' (expected optimize, homogenize, dispersion or transmission)")
        })?;
        if !out.contains(&st) {
            out.push(st);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
    /// Material card; the built-in phases are used when absent.
    pub card: Option<PathBuf>,
    pub inclusion: String,
    pub coating: String,
    pub frame: String,

    pub nx: usize,
    pub ny: usize,
    /// Cell edge ℓ, m.
    pub cell_size: f64,

    pub target_hz: f64,
    pub alpha: f64,
    pub dt: f64,
    /// `None` lets the optimizer pick `C₁`.
    pub c1: Option<f64>,
    pub max_iters: usize,
    pub delta_tol: f64,
    pub stop_tol: f64,
    pub frame_fraction: f64,
    pub snapshot_every: usize,
    /// Level set to homogenize when the optimize stage is skipped.
    pub phi_file: Option<PathBuf>,

    pub cutoff_hz: f64,

    /// Coating viscosities for dispersion and transmission, Pa·s.
    pub viscosity: Vec<f64>,
    pub f_max_hz: f64,
    pub samples: usize,
    /// Bloch wavenumbers between 0 and π/ℓ; 0 disables the oracle.
    pub bloch_points: usize,
    pub bloch_modes: usize,

    pub panel_cells: usize,
    pub threshold_db: f64,

    pub out_dir: PathBuf,
    pub stages: Vec<Stage>,
    /// Informational: the pipeline has no stochastic inputs.
    pub deterministic: bool,

    /// Line of every key read from the file, as `section.key`.
    pub lines: BTreeMap<String, usize>,
    pub source: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            base_dir: PathBuf::from("."),
            card: None,
            inclusion: "steel".into(),
            coating: "silicone_rubber".into(),
            frame: "epoxy".into(),
            nx: 100,
            ny: 100,
            cell_size: 0.01,
            target_hz: 1000.0,
            alpha: 0.5,
            dt: 1e-3,
            c1: None,
            max_iters: 1000,
            delta_tol: 1e-3,
            stop_tol: 2.5e-7,
            frame_fraction: 0.05,
            snapshot_every: 10,
            phi_file: None,
            cutoff_hz: 6000.0,
            viscosity: vec![0.0, 10.0],
            f_max_hz: 3000.0,
            samples: 600,
            bloch_points: 31,
            bloch_modes: 10,
            panel_cells: 1,
            threshold_db: 40.0,
            out_dir: PathBuf::from("lram-out"),
            stages: Stage::ALL.to_vec(),
            deterministic: true,
            lines: BTreeMap::new(),
            source: None,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

#[derive(Clone, Copy)]
enum Check {
    Positive,
    NonNegative,
    Unit,
}

struct Reader<'a> {
    path: &'a Path,
    entries: Vec<Entry>,
    used: Vec<bool>,
    diags: Vec<Diagnostic>,
    lines: BTreeMap<String, usize>,
}

impl<'a> Reader<'a> {
    fn err(&mut self, line: usize, msg: String) {
        self.diags.push(Diagnostic::error(msg).at(self.path, Some(line)));
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let i = self.entries.iter().position(|e| e.section == section && e.key == key)?;
        self.used[i] = true;
        let e = &self.entries[i];
        self.lines.insert(format!("{section}.{key}"), e.line);
        Some((e.value.clone(), e.line))
    }

    fn string(&mut self, section: &str, key: &str, default: &str) -> String {
        self.raw(section, key).map(|(v, _)| v).unwrap_or_else(|| default.into())
    }

    fn path(&mut self, section: &str, key: &str) -> Option<PathBuf> {
        self.raw(section, key).filter(|(v, _)| !v.is_empty()).map(|(v, _)| PathBuf::from(v))
    }

    fn number(&mut self, section: &str, key: &str, default: f64, check: Check) -> f64 {
        let Some((v, line)) = self.raw(section, key) else { return default };
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => {
                let (ok, what) = match check {
                    Check::Positive => (x > 0.0, "must be positive"),
                    Check::NonNegative => (x >= 0.0, "must be non-negative"),
                    Check::Unit => ((0.0..=1.0).contains(&x), "must lie in [0, 1]"),
                };
                if !ok {
                    self.err(line, format!("{section}.{key} = {x} {what}"));
                }
                x
            }
            _ => {
                self.err(line, format!("{section}.{key}: '{v}' is not a finite number"));
                default
            }
        }
    }

    fn count(&mut self, section: &str, key: &str, default: usize, min: usize) -> usize {
        let Some((v, line)) = self.raw(section, key) else { return default };
        match v.parse::<usize>() {
            Ok(n) if n >= min => n,
            Ok(n) => {
                self.err(line, format!("{section}.{key} = {n} must be at least {min}"));
                default
            }
            Err(_) => {
                self.err(line, format!("{section}.{key}: '{v}' is not a non-negative integer"));
                default
            }
        }
    }

    fn flag(&mut self, section: &str, key: &str, default: bool) -> bool {
        let Some((v, line)) = self.raw(section, key) else { return default };
        match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            _ => {
                self.err(line, format!("{section}.{key}: '{v}' is not a boolean"));
                default
            }
        }
    }

    fn list(&mut self, section: &str, key: &str, default: &[f64]) -> Vec<f64> {
        let Some((v, line)) = self.raw(section, key) else { return default.to_vec() };
        let mut out = Vec::new();
        for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.parse::<f64>() {
                Ok(x) if x.is_finite() && x >= 0.0 => out.push(x),
                _ => self.err(line, format!("{section}.{key}: '{part}' is not a non-negative number")),
            }
        }
        out
    }
}

fn split_entries(text: &str, path: &Path, diags: &mut Vec<Diagnostic>) -> Vec<Entry> {
    let mut section = String::new();
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => section = name.trim().to_ascii_lowercase(),
                _ => diags.push(Diagnostic::error(format!("malformed section header '{s}'")).at(path, Some(line))),
            }
            continue;
        }
        let Some((k, v)) = s.split_once('=') else {
            diags.push(Diagnostic::error(format!("expected 'key = value', found '{s}'")).at(path, Some(line)));
            continue;
        };
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            diags.push(Diagnostic::error("missing key before '='").at(path, Some(line)));
            continue;
        }
        if let Some(prev) = entries.iter().find(|e| e.section == section && e.key == key) {
            diags.push(
                Diagnostic::error(format!("duplicate key {section}.{key} (first set on line {})", prev.line))
                    .at(path, Some(line)),
            );
            continue;
        }
        entries.push(Entry { section: section.clone(), key, value: v.trim().to_string(), line });
    }
    entries
}

impl PipelineConfig {
    /// Parses configuration text. `path` labels diagnostics and anchors
    /// relative paths.
    pub fn parse(text: &str, path: &Path) -> Result<Self, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let entries = split_entries(text, path, &mut diags);
        let used = vec![false; entries.len()];
        let mut r = Reader { path, entries, used, diags, lines: BTreeMap::new() };
        let d = PipelineConfig::default();

        let card = r.path("materials", "card");
        let inclusion = r.string("materials", "inclusion", &d.inclusion);
        let coating = r.string("materials", "coating", &d.coating);
        let frame = r.string("materials", "frame", &d.frame);

        let nx = r.count("grid", "nx", d.nx, 2);
        let ny = r.count("grid", "ny", d.ny, 2);
        let cell_size = r.number("grid", "cell_size", d.cell_size, Check::Positive);

        let target_hz = r.number("optimize", "target_hz", d.target_hz, Check::Positive);
        let alpha = r.number("optimize", "alpha", d.alpha, Check::Unit);
        let dt = r.number("optimize", "dt", d.dt, Check::Positive);
        let c1 = match r.raw("optimize", "c1") {
            None => None,
            Some((v, _)) if v.eq_ignore_ascii_case("auto") => None,
            Some((v, line)) => match v.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Some(x),
                _ => {
                    r.err(line, format!("optimize.c1: '{v}' must be 'auto' or a positive number"));
                    None
                }
            },
        };
        let max_iters = r.count("optimize", "max_iters", d.max_iters, 0);
        let delta_tol = r.number("optimize", "delta_tol", d.delta_tol, Check::NonNegative);
        let stop_tol = r.number("optimize", "stop_tol", d.stop_tol, Check::NonNegative);
        let frame_fraction = r.number("optimize", "frame_fraction", d.frame_fraction, Check::Positive);
        if frame_fraction >= 0.5 {
            let line = r.lines.get("optimize.frame_fraction").copied().unwrap_or(0);
            r.err(line, format!("optimize.frame_fraction = {frame_fraction} must be below 0.5"));
        }
        let snapshot_every = r.count("optimize", "snapshot_every", d.snapshot_every, 1);
        let phi_file = r.path("optimize", "phi_file");

        let cutoff_hz = r.number("homogenize", "cutoff_hz", d.cutoff_hz, Check::Positive);

        let viscosity = r.list("sweep", "viscosity", &d.viscosity);
        let f_max_hz = r.number("sweep", "f_max_hz", d.f_max_hz, Check::Positive);
        let samples = r.count("sweep", "samples", d.samples, 0);

        let bloch_points = r.count("dispersion", "bloch_points", d.bloch_points, 0);
        let bloch_modes = r.count("dispersion", "bloch_modes", d.bloch_modes, 2);

        let panel_cells = r.count("transmission", "cells", d.panel_cells, 1);
        let threshold_db = r.number("transmission", "threshold_db", d.threshold_db, Check::NonNegative);

        let out_dir = r.path("run", "out").unwrap_or(d.out_dir.clone());
        let stages = match r.raw("run", "stages") {
            None => d.stages.clone(),
            Some((v, line)) => parse_stages(&v).unwrap_or_else(|m| {
                r.err(line, m);
                Vec::new()
            }),
        };
        let deterministic = r.flag("run", "deterministic", true);

        for (i, e) in r.entries.iter().enumerate() {
            if !r.used[i] {
                let name = if e.section.is_empty() { e.key.clone() } else { format!("{}.{}", e.section, e.key) };
                r.diags.push(Diagnostic::error(format!("unknown key {name}")).at(path, Some(e.line)));
            }
        }

        let cfg = PipelineConfig {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
            card,
            inclusion,
            coating,
            frame,
            nx,
            ny,
            cell_size,
            target_hz,
            alpha,
            dt,
            c1,
            max_iters,
            delta_tol,
            stop_tol,
            frame_fraction,
            snapshot_every,
            phi_file,
            cutoff_hz,
            viscosity,
            f_max_hz,
            samples,
            bloch_points,
            bloch_modes,
            panel_cells,
            threshold_db,
            out_dir,
            stages,
            deterministic,
            lines: r.lines,
            source: Some(path.to_path_buf()),
        };
        let mut diags = r.diags;
        diags.extend(cfg.check());
        if diags.iter().any(Diagnostic::is_error) {
            Err(diags)
        } else {
            Ok(cfg)
        }
    }

    pub fn load(path: &Path) -> Result<Self, Vec<Diagnostic>> {
        let text = fs::read_to_string(path)
            .map_err(|e| vec![Diagnostic::error(format!("cannot read config: {e}")).at(path, None)])?;
        Self::parse(&text, path)
    }

    fn diag_at(&self, key: &str, d: Diagnostic) -> Diagnostic {
        match &self.source {
            Some(p) => d.at(p, self.lines.get(key).copied()),
            None => d,
        }
    }

    /// Cross-field checks that need no files.
    pub fn check(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.samples == 0 {
            out.push(self.diag_at("sweep.samples", Diagnostic::error("frequency list is empty (sweep.samples = 0)")));
        }
        if self.viscosity.is_empty() {
            out.push(self.diag_at("sweep.viscosity", Diagnostic::error("viscosity list is empty")));
        }
        if self.stages.is_empty() {
            out.push(self.diag_at("run.stages", Diagnostic::error("no stage selected")));
        }
        let has = |s| self.stages.contains(&s);
        if (has(Stage::Dispersion) || has(Stage::Transmission)) && !has(Stage::Homogenize) {
            out.push(self.diag_at(
                "run.stages",
                Diagnostic::error("dispersion and transmission need the homogenize stage"),
            ));
        }
        if has(Stage::Homogenize) && !has(Stage::Optimize) && self.phi_file.is_none() {
            out.push(self.diag_at(
                "run.stages",
                Diagnostic::error("homogenize without optimize needs optimize.phi_file"),
            ));
        }
        out
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn card_path(&self) -> Option<PathBuf> {
        self.card.as_deref().map(|p| self.resolve(p))
    }

    pub fn phi_path(&self) -> Option<PathBuf> {
        self.phi_file.as_deref().map(|p| self.resolve(p))
    }

    pub fn out_path(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    /// Canonical text form; parsing it gives back the same settings.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let list = self.viscosity.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(", ");
        let stages = self.stages.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[materials]\ncard = {}\ninclusion = {}\ncoating = {}\nframe = {}", opt(&self.card), self.inclusion, self.coating, self.frame);
        let _ = writeln!(s, "\n[grid]\nnx = {}\nny = {}\ncell_size = {:e}", self.nx, self.ny, self.cell_size);
        let _ = writeln!(
            s,
            "\n[optimize]\ntarget_hz = {:e}\nalpha = {:e}\ndt = {:e}\nc1 = {}\nmax_iters = {}\ndelta_tol = {:e}\nstop_tol = {:e}\nframe_fraction = {:e}\nsnapshot_every = {}\nphi_file = {}",
            self.target_hz,
            self.alpha,
            self.dt,
            self.c1.map(|c| format!("{c:e}")).unwrap_or_else(|| "auto".into()),
            self.max_iters,
            self.delta_tol,
            self.stop_tol,
            self.frame_fraction,
            self.snapshot_every,
            opt(&self.phi_file)
        );
        let _ = writeln!(s, "\n[homogenize]\ncutoff_hz = {:e}", self.cutoff_hz);
        let _ = writeln!(s, "\n[sweep]\nviscosity = {list}\nf_max_hz = {:e}\nsamples = {}", self.f_max_hz, self.samples);
        let _ = writeln!(s, "\n[dispersion]\nbloch_points = {}\nbloch_modes = {}", self.bloch_points, self.bloch_modes);
        let _ = writeln!(s, "\n[transmission]\ncells = {}\nthreshold_db = {:e}", self.panel_cells, self.threshold_db);
        let _ = writeln!(s, "\n[run]\nout = {}\nstages = {stages}\ndeterministic = {}", self.out_dir.display(), self.deterministic);
        s
    }
}
