//! Stage orchestration: optimize → homogenize → dispersion → transmission.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use lram_core::dispersion::{bloch_frequencies, bloch_gap_even, effective_dispersion, frequency_samples, BlochSample};
use lram_core::fem::{MaterialField, StructuredGrid};
use lram_core::homogenize::{design_field, homogenize, DesignMaterials, EffectiveMaterial, HomogenizationSettings};
use lram_core::materials::{builtin_phases, find_phase, MaterialPhase};
use lram_core::math;
use lram_core::modal::EigenSettings;
use lram_core::panel::{PanelModel, TLResult};
use lram_core::topopt::{
    characteristic, feasibility_lower_limit, optimize, FrameLayout, IterationRecord, OptimizationPhases,
    OptimizerConfig, TopologyProblem,
};
use rayon::prelude::*;

use crate::card::load_card;
use crate::config::{PipelineConfig, Stage};
use crate::error::{has_errors, CliError, Diagnostic};
use crate::output::{format_phi, load_phi, num, Artifacts, Manifest};

/// Phases and inputs resolved from the files a config points to.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub inclusion: MaterialPhase,
    pub coating: MaterialPhase,
    pub frame: MaterialPhase,
    /// Level set read from `optimize.phi_file`.
    pub phi: Option<Vec<f64>>,
}

fn resolve(cfg: &PipelineConfig) -> (Vec<Diagnostic>, Option<Inputs>) {
    let mut diags = cfg.check();
    let at = |key: &str, d: Diagnostic| match &cfg.source {
        Some(p) => d.at(p, cfg.lines.get(key).copied()),
        None => d,
    };
    let phases = match cfg.card_path() {
        None => builtin_phases(),
        Some(path) => match load_card(&path) {
            Ok(p) => p,
            Err(d) => {
                diags.extend(d);
                return (diags, None);
            }
        },
    };
    let mut pick = |key: &str, name: &str| match find_phase(&phases, name) {
        Some(p) => Some(p.clone()),
        None => {
            let known: Vec<&str> = phases.iter().map(|p| p.name.as_str()).collect();
            diags.push(at(key, Diagnostic::error(format!("phase '{name}' not in material card ({})", known.join(", ")))));
            None
        }
    };
    let inclusion = pick("materials.inclusion", &cfg.inclusion);
    let coating = pick("materials.coating", &cfg.coating);
    let frame = pick("materials.frame", &cfg.frame);
    let (Some(inclusion), Some(coating), Some(frame)) = (inclusion, coating, frame) else {
        return (diags, None);
    };

    for p in [&inclusion, &frame] {
        if p.mu_visc != 0.0 {
            diags.push(Diagnostic::warning(format!(
                "viscosity of '{}' ignored: the sweep viscosity list applies to the coating only",
                p.name
            )));
        }
    }

    if let Ok(w) = feasibility_lower_limit(&[inclusion.clone(), coating.clone(), frame.clone()], cfg.cell_size) {
        let limit = math::rad_to_hz(w);
        if cfg.target_hz <= limit {
            diags.push(at(
                "optimize.target_hz",
                Diagnostic::warning(format!(
                    "target {} Hz is below the {limit:.1} Hz lower limit for these phases in a {} m cell",
                    cfg.target_hz, cfg.cell_size
                )),
            ));
        }
        diags.push(Diagnostic::note(format!(
            "targets between {limit:.1} Hz and the full-inclusion resonance can converge to unstable thin-ligament \
             designs; the optimizer warns when the first resonance oscillates by more than a decade"
        )));
    }

    let needs_phi = cfg.stages.contains(&Stage::Homogenize) && !cfg.stages.contains(&Stage::Optimize);
    let phi = match cfg.phi_path() {
        Some(path) if needs_phi => match load_phi(&path, cfg.nx, cfg.ny) {
            Ok(p) => Some(p),
            Err(d) => {
                diags.extend(d);
                None
            }
        },
        _ => None,
    };
    let inputs = (!has_errors(&diags)).then_some(Inputs { inclusion, coating, frame, phi });
    (diags, inputs)
}

/// All diagnostics for a config: syntax was checked on load; this adds
/// file, phase, stage and feasibility checks.
pub fn validate(cfg: &PipelineConfig) -> Vec<Diagnostic> {
    resolve(cfg).0
}

/// What a successful run produced.
#[derive(Debug)]
pub struct RunReport {
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub effective: Option<EffectiveMaterial>,
}

/// Runs the selected stages. Configuration errors abort before anything is
/// written; a failing stage leaves its partial artifacts and a manifest with
/// `status = failed`.
pub fn run(cfg: &PipelineConfig, progress: &mut dyn FnMut(&str)) -> Result<RunReport, CliError> {
    let (diags, inputs) = resolve(cfg);
    let Some(inputs) = inputs else { return Err(CliError::Config(diags)) };
    for d in diags.iter().filter(|d| !d.is_error()) {
        progress(&d.to_string());
    }
    let start = Instant::now();
    let art = Artifacts::create(&cfg.out_path())?;
    let mut runner = Runner {
        cfg,
        grid: StructuredGrid::new(cfg.nx, cfg.ny, cfg.cell_size).map_err(|e| CliError::Config(vec![Diagnostic::error(e.to_string())]))?,
        phi: inputs.phi.clone(),
        inputs,
        art,
        warnings: diags.iter().filter(|d| !d.is_error()).map(|d| d.to_string()).collect(),
        effective: None,
        field: None,
    };
    for &stage in &cfg.stages {
        progress(&format!("stage {}", stage.name()));
        let res = match stage {
            Stage::Optimize => runner.optimize(progress),
            Stage::Homogenize => runner.homogenize(),
            Stage::Dispersion => runner.dispersion(),
            Stage::Transmission => runner.transmission(),
        };
        if let Err(e) = res {
            let e = match e {
                StageError::Core(source) => CliError::Stage { stage, source },
                StageError::Cli(c) => c,
            };
            // Best effort: the original error matters more than a failed manifest write.
            let _ = runner.manifest(start, Some((stage.name(), e.to_string())));
            return Err(e);
        }
    }
    runner.manifest(start, None)?;
    Ok(RunReport { files: runner.art.files().to_vec(), warnings: runner.warnings, effective: runner.effective })
}

enum StageError {
    Core(lram_core::Error),
    Cli(CliError),
}

impl From<lram_core::Error> for StageError {
    fn from(e: lram_core::Error) -> Self {
        StageError::Core(e)
    }
}

impl From<CliError> for StageError {
    fn from(e: CliError) -> Self {
        StageError::Cli(e)
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    grid: StructuredGrid,
    inputs: Inputs,
    phi: Option<Vec<f64>>,
    art: Artifacts,
    warnings: Vec<String>,
    effective: Option<EffectiveMaterial>,
    field: Option<MaterialField>,
}

fn mu_tag(mu: f64) -> String {
    format!("mu{mu}")
}

fn iteration_row(r: &IterationRecord) -> Vec<String> {
    vec![
        r.iter.to_string(),
        num(r.cost.pi),
        num(r.cost.f),
        num(r.cost.g),
        num(r.lambda_star),
        num(r.lambda),
        num(r.vol_frac_dense),
        num(r.vol_frac_soft),
    ]
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// Maximal runs above `threshold`, as `(first, last)` sample frequencies.
fn bands_above(tl: &TLResult, threshold: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, v) in tl.tl_db.iter().enumerate() {
        match (*v > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((tl.frequency_hz[s], tl.frequency_hz[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((tl.frequency_hz[s], tl.frequency_hz[tl.tl_db.len() - 1]));
    }
    out
}

impl Runner<'_> {
    fn optimize(&mut self, progress: &mut dyn FnMut(&str)) -> Result<(), StageError> {
        let cfg = self.cfg;
        let phases = OptimizationPhases {
            dense: self.inputs.inclusion.clone(),
            soft: self.inputs.coating.clone(),
            frame: self.inputs.frame.clone(),
        };
        let oc = OptimizerConfig {
            target_hz: cfg.target_hz,
            alpha: cfg.alpha,
            dt: cfg.dt,
            c1: cfg.c1,
            max_iters: cfg.max_iters,
            stop_tol: cfg.stop_tol,
            delta_tol: cfg.delta_tol,
            frame_fraction: cfg.frame_fraction,
            ..OptimizerConfig::default()
        };
        let problem = TopologyProblem::new(self.grid.clone(), phases, oc)?;
        let every = cfg.snapshot_every.max(1);
        let mut rows = Vec::new();
        let mut snaps: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut last: Option<(usize, Vec<f64>)> = None;
        let result = optimize(&problem, |rec, state| {
            rows.push(iteration_row(rec));
            if rec.iter % every == 0 {
                snaps.push((rec.iter, state.phi.clone()));
                progress(&format!(
                    "  iter {:4}  Pi {:.3e}  f* {:.1} Hz  f {:.1} Hz",
                    rec.iter,
                    rec.cost.pi,
                    math::rad_to_hz(rec.lambda_star.max(0.0).sqrt()),
                    math::rad_to_hz(rec.lambda.max(0.0).sqrt())
                ));
                last = None;
            } else {
                last = Some((rec.iter, state.phi.clone()));
            }
        });
        snaps.extend(last);
        // Partial logs are written even when the optimizer fails.
        let cols = ["iter", "Pi", "f", "g", "lambda_star1", "lambda1", "vol_frac_dense", "vol_frac_soft"];
        self.art.write_csv("iterations.csv", &header(&cols), &rows)?;
        for (it, phi) in &snaps {
            self.art.write(&format!("phi_iter_{it:04}.txt"), format_phi(phi, cfg.nx).as_bytes())?;
        }
        let res = result?;
        self.art.write("phi_final.txt", format_phi(&res.state.phi, cfg.nx).as_bytes())?;
        let a = &res.analysis;
        let mut s = String::from("# optimizer-stage analysis (scaled properties)\n");
        let _ = writeln!(s, "stop = {:?}", res.stop);
        let _ = writeln!(s, "best_iteration = {}", res.best_iteration);
        let _ = writeln!(s, "iterations = {}", rows.len().saturating_sub(1));
        let _ = writeln!(s, "c1 = {}", num(res.c1));
        let _ = writeln!(s, "pi = {}", num(a.cost.pi));
        let _ = writeln!(s, "restricted_hz = {}", num(a.restricted_hz()));
        let _ = writeln!(s, "unrestricted_hz = {}", num(a.unrestricted_hz()));
        let _ = writeln!(s, "bandgap_hz = {}", num(a.bandgap_hz()));
        self.art.write("optimize_summary.txt", s.as_bytes())?;
        self.warnings.extend(res.warnings.iter().cloned());
        self.phi = Some(res.state.phi);
        Ok(())
    }

    fn homogenize(&mut self) -> Result<(), StageError> {
        let cfg = self.cfg;
        let phi = self.phi.as_ref().ok_or_else(|| lram_core::Error::State("no level set to homogenize".into()))?;
        let layout = FrameLayout::new(&self.grid, cfg.frame_fraction)?;
        let chi = characteristic(&self.grid, &layout, phi);
        // Unit coating viscosity: dispersion and transmission scale it by each μ.
        let mats = DesignMaterials {
            frame: self.inputs.frame.clone().with_viscosity(0.0),
            inclusion: self.inputs.inclusion.clone().with_viscosity(0.0),
            coating: self.inputs.coating.clone().with_viscosity(1.0),
        };
        let field = design_field(&self.grid, &layout.frame_elements, &chi, &mats)?;
        let settings = HomogenizationSettings { cutoff_hz: cfg.cutoff_hz, delta_tol: cfg.delta_tol, ..HomogenizationSettings::default() };
        let em = homogenize(&self.grid, &field, &settings)?;
        let mut report = String::from("# true phase properties; viscous terms at coating viscosity 1 Pa s, linear in mu\n");
        report.push_str(&em.report());
        for (lo, hi) in em.bandgaps_x() {
            let _ = writeln!(report, "bandgap_x_Hz = {} {}", num(math::rad_to_hz(lo)), num(math::rad_to_hz(hi)));
        }
        self.art.write("effective_material.txt", report.as_bytes())?;
        self.effective = Some(em);
        self.field = Some(field);
        Ok(())
    }

    fn effective(&self) -> Result<&EffectiveMaterial, StageError> {
        self.effective.as_ref().ok_or_else(|| lram_core::Error::State("homogenization has not run".into()).into())
    }

    fn dispersion(&mut self) -> Result<(), StageError> {
        let cfg = self.cfg;
        let em = self.effective()?.clone();
        let poles: Vec<f64> = em.omega2.iter().map(|w2| math::rad_to_hz(w2.sqrt())).collect();
        let freqs = frequency_samples(cfg.f_max_hz, cfg.samples, &poles)?;
        for &mu in &cfg.viscosity {
            let curve = effective_dispersion(&em.with_viscosity_factor(mu), &freqs, cfg.cell_size)?;
            let rows: Vec<Vec<String>> = curve
                .frequency_hz
                .iter()
                .zip(&curve.k_norm)
                .map(|(f, k)| vec![num(*f), num(k.re), num(k.im)])
                .collect();
            self.art.write_csv(&format!("dispersion_{}.csv", mu_tag(mu)), &header(&["f_Hz", "Re_k_norm", "Im_k_norm"]), &rows)?;
        }
        let mut bands = String::from("# band_start_Hz band_end_Hz\n# effective medium, undamped\n");
        for (lo, hi) in em.bandgaps_x() {
            let _ = writeln!(bands, "{} {}", num(math::rad_to_hz(lo)), num(math::rad_to_hz(hi)));
        }
        if cfg.bloch_points >= 2 {
            let field = self.field.as_ref().ok_or_else(|| lram_core::Error::State("no material field".into()))?;
            let samples = bloch_sweep(&self.grid, field, cfg.bloch_points, cfg.bloch_modes, cfg.cell_size)?;
            let n = cfg.bloch_modes;
            let mut cols = vec!["k_norm".to_string()];
            cols.extend((1..=n).map(|i| format!("f{i}_Hz")));
            let table = |pick: &dyn Fn(&BlochSample) -> &[f64]| -> Vec<Vec<String>> {
                samples
                    .iter()
                    .map(|s| {
                        let mut row = vec![num(s.kappa * cfg.cell_size / PI)];
                        row.extend((0..n).map(|i| pick(s).get(i).map(|v| num(*v)).unwrap_or_default()));
                        row
                    })
                    .collect()
            };
            self.art.write_csv("bloch.csv", &cols, &table(&|s| &s.frequency_hz))?;
            let mut pcols = vec!["k_norm".to_string()];
            pcols.extend((1..=n).map(|i| format!("parity{i}")));
            self.art.write_csv("bloch_parity.csv", &pcols, &table(&|s| &s.parity))?;
            bands.push_str("# Bloch oracle, longitudinal (mirror-even) branches\n");
            if let Some((lo, hi)) = bloch_gap_even(&samples) {
                let _ = writeln!(bands, "{} {}", num(lo), num(hi));
            }
        }
        self.art.write("dispersion_bands.txt", bands.as_bytes())?;
        Ok(())
    }

    fn transmission(&mut self) -> Result<(), StageError> {
        let cfg = self.cfg;
        let em = self.effective()?.clone();
        for &mu in &cfg.viscosity {
            let tl = tl_parallel(&em, mu, cfg)?;
            for (f, e) in &tl.failures {
                self.warnings.push(format!("transmission mu = {mu}: sample {f} Hz skipped: {e}"));
            }
            let rows: Vec<Vec<String>> = (0..tl.frequency_hz.len())
                .map(|i| {
                    vec![num(tl.frequency_hz[i]), num(tl.r[i].re), num(tl.r[i].im), num(tl.t[i].re), num(tl.t[i].im), num(tl.tl_db[i])]
                })
                .collect();
            let tag = mu_tag(mu);
            self.art.write_csv(&format!("tl_{tag}.csv"), &header(&["f_Hz", "Re_R", "Im_R", "Re_T", "Im_T", "TL_dB"]), &rows)?;
            let mut bands = String::from("# band_start_Hz band_end_Hz threshold_dB\n");
            for (lo, hi) in bands_above(&tl, cfg.threshold_db) {
                let _ = writeln!(bands, "{} {} {}", num(lo), num(hi), num(cfg.threshold_db));
            }
            self.art.write(&format!("tl_bands_{tag}.txt"), bands.as_bytes())?;
        }
        Ok(())
    }

    fn manifest(&mut self, start: Instant, failure: Option<(&str, String)>) -> Result<(), CliError> {
        let echo = self.cfg.to_text();
        let body = Manifest {
            status: if failure.is_some() { "failed" } else { "ok" },
            failure,
            wall_time_s: start.elapsed().as_secs_f64(),
            config_echo: &echo,
            warnings: &self.warnings,
            files: self.art.files(),
        }
        .render();
        let path = self.art.dir().join("manifest.txt");
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))
    }
}

/// Bloch frequencies at `points` wavenumbers spanning `[0, π/ℓ]`, solved in
/// parallel and returned in wavenumber order.
pub fn bloch_sweep(
    grid: &StructuredGrid,
    field: &MaterialField,
    points: usize,
    modes: usize,
    cell_size: f64,
) -> lram_core::Result<Vec<BlochSample>> {
    let kmax = PI / cell_size;
    let settings = EigenSettings::default();
    (0..points)
        .into_par_iter()
        .map(|i| bloch_frequencies(grid, field, kmax * i as f64 / (points - 1).max(1) as f64, modes, &settings))
        .collect()
}

/// TL sweep of a one-layer panel at coating viscosity `mu`, samples solved in
/// parallel.
pub fn tl_parallel(em: &EffectiveMaterial, mu: f64, cfg: &PipelineConfig) -> lram_core::Result<TLResult> {
    let mut model = PanelModel::new(em.clone(), cfg.panel_cells, cfg.cell_size)?.with_viscosity(mu);
    model.f_max_hz = cfg.f_max_hz;
    model.samples = cfg.samples;
    let sys = model.prepare()?;
    let freqs = model.frequencies()?;
    let solved: Vec<_> = freqs.par_iter().map(|f| (*f, sys.solve_rt(math::hz_to_rad(*f)))).collect();
    Ok(TLResult::from_samples(solved))
}
