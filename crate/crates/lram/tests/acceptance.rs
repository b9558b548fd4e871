//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. The two 60×60 optimizations dominate the runtime.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use lram::pipeline::{bloch_sweep, tl_parallel};
use lram::PipelineConfig;
use lram_core::dispersion::bloch_gap_even;
use lram_core::fem::{MaterialField, StructuredGrid};
use lram_core::homogenize::{design_field, homogenize, laminate_c11, DesignMaterials, EffectiveMaterial, HomogenizationSettings};
use lram_core::materials::{elastic_tensor, isotropic_tensors, viscous_tensor, MaterialPhase, AIR_DENSITY, AIR_SOUND_SPEED};
use lram_core::math;
use lram_core::panel::{layer_rt, tl_sweep, transmission_loss_db, PanelModel, TLResult};
use lram_core::topopt::{characteristic, optimize, IterationRecord, OptimizationPhases, OptimizationResult, OptimizerConfig, TopologyProblem};

const GRID: usize = 60;
const CELL: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reference_phases() -> OptimizationPhases {
    OptimizationPhases { dense: MaterialPhase::steel(), soft: MaterialPhase::rubber(), frame: MaterialPhase::epoxy() }
}

struct Run {
    problem: TopologyProblem,
    result: OptimizationResult,
    records: Vec<IterationRecord>,
    seconds: f64,
}

fn optimize_at(alpha: f64) -> Result<Run, String> {
    let t = Instant::now();
    let cfg = OptimizerConfig { alpha, target_hz: 1000.0, ..OptimizerConfig::default() };
    let problem = TopologyProblem::new(StructuredGrid::new(GRID, GRID, CELL).map_err(|e| e.to_string())?, reference_phases(), cfg)
        .map_err(|e| e.to_string())?;
    let mut records = Vec::new();
    let result = optimize(&problem, |r, _| records.push(*r)).map_err(|e| e.to_string())?;
    Ok(Run { problem, result, records, seconds: t.elapsed().as_secs_f64() })
}

/// Design re-evaluated with the unscaled phases.
struct TrueDesign {
    grid: StructuredGrid,
    field: MaterialField,
    em: EffectiveMaterial,
}

impl TrueDesign {
    fn first_pole_hz(&self) -> f64 {
        self.em.bandgaps_x().first().map(|g| math::rad_to_hz(g.0)).unwrap_or(f64::NAN)
    }

    fn gap_hz(&self) -> Option<(f64, f64)> {
        self.em.bandgaps_x().first().map(|g| (math::rad_to_hz(g.0), math::rad_to_hz(g.1)))
    }
}

fn true_design(run: &Run) -> Result<TrueDesign, String> {
    let p = &run.problem;
    let chi = characteristic(&p.grid, &p.layout, &run.result.state.phi);
    // Unit coating viscosity so that `with_viscosity_factor(μ)` gives μ Pa·s.
    let mats = DesignMaterials {
        frame: MaterialPhase::epoxy(),
        inclusion: MaterialPhase::steel(),
        coating: MaterialPhase::rubber().with_viscosity(1.0),
    };
    let field = design_field(&p.grid, &p.layout.frame_elements, &chi, &mats).map_err(|e| e.to_string())?;
    let em = homogenize(&p.grid, &field, &HomogenizationSettings::default()).map_err(|e| e.to_string())?;
    Ok(TrueDesign { grid: p.grid.clone(), field, em })
}

fn sweep_config() -> PipelineConfig {
    PipelineConfig { samples: 600, f_max_hz: 3000.0, cell_size: CELL, panel_cells: 1, ..PipelineConfig::default() }
}

fn criterion1(a1: &Run) -> Outcome {
    let f = a1.result.analysis.restricted_hz();
    let err = (f - 1000.0).abs() / 1000.0;
    check(
        err <= 0.02,
        format!("alpha=1 {GRID}x{GRID}: f* = {f:.1} Hz, |error| {:.2}% (tol 2%), stop {:?}, {:.0} s", 100.0 * err, a1.result.stop, a1.seconds),
    )
}

fn criterion2(a1: &Run, a05: &Run) -> Outcome {
    let (g1, g05) = (a1.result.analysis.bandgap_hz(), a05.result.analysis.bandgap_hz());
    check(g05 >= 2.0 * g1, format!("scaled bandgap alpha=0.5 {g05:.0} Hz vs alpha=1 {g1:.0} Hz, ratio {:.2} (need >= 2)", g05 / g1))
}

fn criterion3(a1: &Run, a05: &Run, t1: &TrueDesign, t05: &TrueDesign) -> Outcome {
    let width = |t: &TrueDesign| t.gap_hz().map(|(lo, hi)| hi - lo).unwrap_or(0.0);
    let (w1, w05) = (width(t1), width(t05));
    let (f1, f05) = (t1.first_pole_hz(), t05.first_pole_hz());
    let (o1, o05) = (a1.result.analysis.restricted_hz(), a05.result.analysis.restricted_hz());
    check(
        w05 >= 2.0 * w1 && f1 < o1 && f05 < o05,
        format!(
            "true-property gaps alpha=0.5 {w05:.0} Hz vs alpha=1 {w1:.0} Hz (ratio {:.2}); first resonance {f1:.0} < {o1:.0} Hz and {f05:.0} < {o05:.0} Hz",
            w05 / w1
        ),
    )
}

fn criterion4() -> Outcome {
    let epoxy = MaterialPhase::epoxy();
    let g = StructuredGrid::new(8, 8, CELL).unwrap();
    let (c, eta) = isotropic_tensors(&epoxy);
    let field = MaterialField::uniform(&g, epoxy.rho, c, eta);
    let em = match homogenize(&g, &field, &HomogenizationSettings::default()) {
        Ok(em) => em,
        Err(e) => return check(false, e.to_string()),
    };
    let exact = elastic_tensor(epoxy.bulk, epoxy.shear);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((em.c_eff[i][j] - exact[i][j]).abs() / exact[0][0]);
        }
    }
    let rho_ok = (em.rho_bar - 1180.0).abs() <= 1e-12 * 1180.0;

    // Stripes along x: 40% steel, 60% epoxy.
    let lg = StructuredGrid::new(10, 4, CELL).unwrap();
    let (cs, _) = isotropic_tensors(&MaterialPhase::steel());
    let lf = MaterialField::from_fn(&lg, |p| if p[0] < 0.4 * CELL { (7780.0, cs, viscous_tensor(0.0)) } else { (1180.0, c, viscous_tensor(0.0)) });
    let lam = laminate_c11(&[0.4, 0.6], &[cs, c]);
    let layered = homogenize(&lg, &lf, &HomogenizationSettings::default()).map(|e| e.c_eff[0][0]);
    let lerr = layered.map(|v| (v - lam).abs() / lam).unwrap_or(f64::INFINITY);
    check(
        worst <= 1e-8 && rho_ok && lerr <= 0.01,
        format!("homogeneous epoxy: max C error {worst:.1e} (tol 1e-8), rho_bar {} kg/m3; laminate C11 error {:.2e} (tol 1%)", em.rho_bar, lerr),
    )
}

fn criterion5(t1: &TrueDesign, t05: &TrueDesign) -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, t) in [("alpha=1", t1), ("alpha=0.5", t05)] {
        let Some((lo, hi)) = t.gap_hz() else {
            return check(false, format!("{name}: no effective bandgap"));
        };
        let bloch = bloch_sweep(&t.grid, &t.field, 21, 12, CELL).map_err(|e| e.to_string()).and_then(|s| bloch_gap_even(&s).ok_or("no even-branch Bloch gap".into()));
        match bloch {
            Ok((blo, bhi)) => {
                let (elo, ehi) = ((blo - lo).abs() / lo, (bhi - hi).abs() / hi);
                pass &= elo <= 0.05 && ehi <= 0.05;
                detail.push(format!("{name}: effective {lo:.0}-{hi:.0} Hz, Bloch {blo:.0}-{bhi:.0} Hz ({:.1}%, {:.1}%)", 100.0 * elo, 100.0 * ehi));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{name}: {e}"));
            }
        }
    }
    // Acoustic branch of a homogeneous epoxy cell.
    let epoxy = MaterialPhase::epoxy();
    let g = StructuredGrid::new(10, 10, CELL).unwrap();
    let (c, eta) = isotropic_tensors(&epoxy);
    let field = MaterialField::uniform(&g, epoxy.rho, c, eta);
    let speed = (c[0][0] / epoxy.rho).sqrt();
    match bloch_sweep(&g, &field, 21, 4, CELL) {
        Ok(s) => {
            // Second sample: κ = π/(20ℓ), lowest even mode.
            let k = &s[1];
            let f = k.frequency_hz.iter().zip(&k.parity).find(|(_, p)| **p > 0.0).map(|(f, _)| *f).unwrap_or(f64::NAN);
            let slope = 2.0 * PI * f / k.kappa;
            let err = (slope - speed).abs() / speed;
            pass &= err <= 0.02;
            detail.push(format!("acoustic slope {slope:.1} vs {speed:.1} m/s ({:.2}%)", 100.0 * err));
        }
        Err(e) => {
            pass = false;
            detail.push(e.to_string());
        }
    }
    check(pass, detail.join("; "))
}

fn criterion6() -> Outcome {
    let mut worst_db: f64 = 0.0;
    let mut worst_energy: f64 = 0.0;
    let mut n = 0;
    for (phase, per_wavelength) in [(MaterialPhase::steel(), 0.0), (MaterialPhase::epoxy(), 0.0), (MaterialPhase::rubber(), 120.0)] {
        let panel = PanelModel::new(EffectiveMaterial::from_phase(&phase), 1, CELL).unwrap().with_viscosity(0.0).with_wavelength_resolution(per_wavelength);
        let res = match tl_sweep(&panel) {
            Ok(r) if r.failures.is_empty() => r,
            Ok(r) => return check(false, format!("{}: {} failed samples", phase.name, r.failures.len())),
            Err(e) => return check(false, e.to_string()),
        };
        for (i, f) in res.frequency_hz.iter().enumerate() {
            let (_, t) = layer_rt(phase.rho, phase.p_modulus(), CELL, math::hz_to_rad(*f), AIR_DENSITY, AIR_SOUND_SPEED);
            worst_db = worst_db.max((res.tl_db[i] - transmission_loss_db(t)).abs());
            worst_energy = worst_energy.max((res.r[i].norm_sqr() + res.t[i].norm_sqr() - 1.0).abs());
            n += 1;
        }
    }
    check(
        worst_db <= 0.1 && worst_energy <= 1e-8,
        format!("steel, epoxy, rubber panels, {n} samples 5-3000 Hz: max |dTL| {worst_db:.3} dB (tol 0.1), max energy defect {worst_energy:.1e} (tol 1e-8)"),
    )
}

fn tl_at(t: &TrueDesign, mu: f64) -> Result<TLResult, String> {
    tl_parallel(&t.em, mu, &sweep_config()).map_err(|e| e.to_string())
}

fn criterion7(t1: &TrueDesign, t05: &TrueDesign) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    let mut ends = Vec::new();
    for (name, t) in [("alpha=1", t1), ("alpha=0.5", t05)] {
        let tl = match tl_at(t, 0.0) {
            Ok(tl) => tl,
            Err(e) => return check(false, e),
        };
        let Some((start, end)) = tl.first_band_above(40.0) else {
            return check(false, format!("{name}: TL never exceeds 40 dB"));
        };
        let (ipk, _) = tl.tl_db.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
        let fpk = tl.frequency_hz[ipk];
        let f0 = t.first_pole_hz();
        let perr = (fpk - f0).abs() / f0;
        pass &= start < 400.0 && perr <= 0.05;
        ends.push(end);
        detail.push(format!("{name}: >40 dB band {start:.0}-{end:.0} Hz, peak {fpk:.0} Hz vs resonance {f0:.0} Hz ({:.1}%)", 100.0 * perr));
    }
    pass &= ends[1] >= ends[0] + 300.0;
    detail.push(format!("band end shift {:.0} Hz (need >= 300)", ends[1] - ends[0]));
    check(pass, detail.join("; "))
}

fn criterion8(t1: &TrueDesign, t05: &TrueDesign) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, t) in [("alpha=1", t1), ("alpha=0.5", t05)] {
        let undamped = match tl_at(t, 0.0) {
            Ok(tl) => tl,
            Err(e) => return check(false, e),
        };
        let tl = &undamped.tl_db;
        let ipk = (0..tl.len()).fold(0, |b, i| if tl[i] > tl[b] { i } else { b });
        // Inverted resonance: lowest TL above the peak.
        let idip = (ipk..tl.len()).fold(ipk, |b, i| if tl[i] < tl[b] { i } else { b });
        let (fpk, fdip) = (undamped.frequency_hz[ipk], undamped.frequency_hz[idip]);
        let mut at_pk = Vec::new();
        let mut at_dip = Vec::new();
        for mu in [0.0, 1.0, 10.0] {
            let sys = match PanelModel::new(t.em.clone(), 1, CELL).map(|p| p.with_viscosity(mu)).and_then(|p| p.prepare()) {
                Ok(s) => s,
                Err(e) => return check(false, e.to_string()),
            };
            let tl = |f: f64| sys.solve_rt(math::hz_to_rad(f)).map(|(_, t)| transmission_loss_db(t)).unwrap_or(f64::NAN);
            at_pk.push(tl(fpk));
            at_dip.push(tl(fdip));
        }
        let dip_ok = at_dip.windows(2).all(|w| w[1] >= w[0]);
        let pk_ok = at_pk.windows(2).all(|w| w[1] <= w[0]);
        pass &= dip_ok && pk_ok;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join("/");
        detail.push(format!("{name}: peak {fpk:.0} Hz TL {} dB, dip {fdip:.0} Hz TL {} dB (mu 0/1/10)", fmt(&at_pk), fmt(&at_dip)));
    }
    check(pass, detail.join("; "))
}

fn criterion9(a1: &Run) -> Outcome {
    let pi: Vec<f64> = a1.records.iter().map(|r| r.cost.pi).collect();
    let (first, last) = (pi[0], a1.result.analysis.cost.pi);
    let worst = pi.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(f64::NEG_INFINITY, f64::max);
    check(
        last < 0.1 * first && worst <= 0.01,
        format!("Pi {first:.3e} -> {last:.3e} over {} accepted steps; largest relative step increase {:.2e} (tol 1e-2)", pi.len() - 1, worst.max(0.0)),
    )
}

fn criterion10() -> Outcome {
    let t = Instant::now();
    let base = MaterialPhase::epoxy();
    let mut dense = base.clone();
    dense.name = "dense".into();
    dense.rho *= 10.0;
    dense.bulk *= 10.0;
    dense.shear *= 10.0;
    let phases = OptimizationPhases { dense, soft: base.clone(), frame: base };
    let cfg = OptimizerConfig { frame_fraction: 0.1, coating_density_scale: 1.0, ..OptimizerConfig::default() };
    let p = TopologyProblem::new(StructuredGrid::new(10, 10, CELL).unwrap(), phases, cfg).unwrap();
    let n = 4 * p.grid.num_elements();
    let chi: Vec<f64> = (0..n).map(|k| if (k / 4) % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let w = p.grid.volume() / n as f64;
    let lambda = |c: Vec<f64>| p.analyze_chi(c, None).map(|a| a.lambda_star);
    // Every design Gauss point: flip 0 -> 1, predicted by the sensitivity at
    // the midpoint (secant of the quadratic interpolation).
    let (mut diff2, mut ref2, mut worst) = (0.0, 0.0, 0.0f64);
    let mut count = 0;
    for k in (0..n).filter(|k| !p.layout.frame_elements[k / 4]) {
        let set = |v: f64| {
            let mut c = chi.clone();
            c[k] = v;
            c
        };
        let res = (|| -> lram_core::Result<(f64, f64)> {
            let fd = lambda(set(1.0))? - lambda(set(0.0))?;
            let mid = set(0.5);
            let am = p.analyze_chi(mid.clone(), None)?;
            let mode = p.restricted_operators().projection.expand(&am.restricted.modes[am.first_restricted]);
            Ok((fd, p.eigenvalue_sensitivity(&mid, &mode, am.lambda_star)[k] * w))
        })();
        match res {
            Ok((fd, pred)) => {
                diff2 += (fd - pred) * (fd - pred);
                ref2 += fd * fd;
                worst = worst.max((fd - pred).abs() / fd.abs());
            }
            Err(e) => return check(false, e.to_string()),
        }
        count += 1;
    }
    let rel = (diff2 / ref2).sqrt();
    let secs = t.elapsed().as_secs_f64();
    check(
        rel <= 0.1 && secs < 60.0,
        format!(
            "{count} Gauss-point flips on 10x10, 10:1 contrast: field relative L2 error {:.2}% (tol 10%), worst single point {:.0}%, {secs:.1} s",
            100.0 * rel,
            100.0 * worst
        ),
    )
}

fn main() -> ExitCode {
    // Fast, independent criteria first so their lines appear early.
    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();
    lines.push((4, "homogenization oracle", criterion4()));
    lines.push((6, "transmission-loss oracle", criterion6()));
    lines.push((10, "sensitivity flip test", criterion10()));
    for (n, name, o) in &lines {
        println!("criterion {n:2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }

    let (a1, a05) = std::thread::scope(|s| {
        let h = s.spawn(|| optimize_at(1.0));
        let b = optimize_at(0.5);
        (h.join().expect("optimizer thread"), b)
    });
    let mut later: Vec<(usize, &str, Outcome)> = Vec::new();
    match (&a1, &a05) {
        (Ok(a1), Ok(a05)) => {
            later.push((1, "frequency fitting", criterion1(a1)));
            later.push((2, "bandgap maximization", criterion2(a1, a05)));
            later.push((9, "optimizer descent", criterion9(a1)));
            match (true_design(a1), true_design(a05)) {
                (Ok(t1), Ok(t05)) => {
                    later.push((3, "true-property re-evaluation", criterion3(a1, a05, &t1, &t05)));
                    later.push((5, "dispersion cross-validation", criterion5(&t1, &t05)));
                    later.push((7, "metamaterial TL bands", criterion7(&t1, &t05)));
                    later.push((8, "viscosity trends", criterion8(&t1, &t05)));
                }
                (r1, r05) => {
                    let msg = format!("homogenization failed: {:?} / {:?}", r1.err(), r05.err());
                    for (n, name) in [(3, "true-property re-evaluation"), (5, "dispersion cross-validation"), (7, "metamaterial TL bands"), (8, "viscosity trends")] {
                        later.push((n, name, check(false, msg.clone())));
                    }
                }
            }
        }
        _ => {
            let msg = format!("optimization failed: {:?} / {:?}", a1.as_ref().err(), a05.as_ref().err());
            for (n, name) in [(1, "frequency fitting"), (2, "bandgap maximization"), (3, "true-property re-evaluation"), (5, "dispersion cross-validation"), (7, "metamaterial TL bands"), (8, "viscosity trends"), (9, "optimizer descent")] {
                later.push((n, name, check(false, msg.clone())));
            }
        }
    }
    later.sort_by_key(|l| l.0);
    for (n, name, o) in &later {
        println!("criterion {n:2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    lines.extend(later);
    let passed = lines.iter().filter(|l| l.2.pass).count();
    println!("acceptance: {passed}/{} criteria passed", lines.len());
    if passed == lines.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
