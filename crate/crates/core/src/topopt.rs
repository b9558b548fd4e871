//! Level-set topology optimization of the RVE interior.
//!
//! The design domain is the cell minus a fixed frame of matrix material.
//! A nodal level set `φ` defines the inclusion (`φ ≥ 0`, dense phase) and
//! the coating (`φ < 0`, soft phase) at every Gauss point. The cost
//!
//! ```text
//! Π = α f² + (1 − α) g²,
//! f = (ln λ* − ln λ̄*) / (ln λ* + ln λ̄*),   g = ln λ* / ln λ,
//! ```
//!
//! fits the first relevant restricted eigenvalue `λ*` to the target `λ̄*`
//! and pushes the first relevant unrestricted eigenvalue `λ` away from it.
//! `φ` is marched by `φ ← φ − Δt C₁ δΠ/δχ`.
//!
//! During optimization the frame is rigid, the coating is (nearly) massless
//! and vertical DOFs are prescribed. By default the rigid frame is imposed
//! exactly, as a kinematic tie; alternatively its stiffness is scaled.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::element::{self, Voigt, GAUSS};
use crate::fem::{assemble, build_constraints, BoundaryCondition, ConstraintOperators, ConstraintSpec, MaterialField, StructuredGrid};
use crate::materials::{isotropic_tensors, MaterialPhase, PhaseMixture};
use crate::math;
use crate::modal::{
    filter_relevant_restricted, filter_relevant_unrestricted, mean_operator, momentum_operator, solve_until_relevant,
    EigenSettings, ModalSolution,
};

/// Lower bound on the first resonance achievable in a cell of edge `cell`:
/// `(1/ℓ) √(min_i (K + 4G/3) / max_i ρ)`, rad/s.
pub fn feasibility_lower_limit(phases: &[MaterialPhase], cell: f64) -> Result<f64> {
    if phases.is_empty() {
        return Err(Error::InvalidArgument("feasibility bound needs at least one phase".into()));
    }
    if !(cell > 0.0) {
        return Err(Error::InvalidArgument(format!("cell size {cell} must be positive")));
    }
    let m = phases.iter().map(MaterialPhase::p_modulus).fold(f64::INFINITY, f64::min);
    let rho = phases.iter().map(|p| p.rho).fold(0.0, f64::max);
    Ok(math::sqrt(m / rho) / cell)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub pi: f64,
    pub f: f64,
    pub g: f64,
    pub alpha: f64,
    /// Target `λ̄*`, rad²/s².
    pub target: f64,
}

/// Evaluates `Π`, `f` and `g` from the two first relevant eigenvalues.
pub fn evaluate_cost(lambda_star: f64, lambda: f64, target: f64, alpha: f64) -> Result<CostBreakdown> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside [0, 1]")));
    }
    if !(lambda_star > 1.0 && lambda > 1.0 && target > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cost needs eigenvalues above 1 rad²/s² (λ* = {lambda_star}, λ = {lambda}, target = {target})"
        )));
    }
    let (a, b, c) = (math::ln(lambda_star), math::ln(target), math::ln(lambda));
    let f = (a - b) / (a + b);
    let g = a / c;
    Ok(CostBreakdown { pi: alpha * f * f + (1.0 - alpha) * g * g, f, g, alpha, target })
}

/// `dΠ/dλ*` and `dΠ/dλ`.
pub fn cost_gradient(cost: &CostBreakdown, lambda_star: f64, lambda: f64) -> (f64, f64) {
    let (a, b, c) = (math::ln(lambda_star), math::ln(cost.target), math::ln(lambda));
    let alpha = cost.alpha;
    let d_star = 4.0 * alpha * cost.f * b / (lambda_star * (a + b) * (a + b)) + 2.0 * (1.0 - alpha) * cost.g / (lambda_star * c);
    let d_unres = -2.0 * (1.0 - alpha) * cost.g * cost.g / (lambda * c);
    (d_star, d_unres)
}

/// Phases of the optimization cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationPhases {
    /// `χ = 1` (inclusion).
    pub dense: MaterialPhase,
    /// `χ = 0` (coating).
    pub soft: MaterialPhase,
    /// Fixed frame.
    pub frame: MaterialPhase,
}

impl Default for OptimizationPhases {
    fn default() -> Self {
        Self { dense: MaterialPhase::steel(), soft: MaterialPhase::rubber(), frame: MaterialPhase::epoxy() }
    }
}

impl OptimizationPhases {
    pub fn all(&self) -> [MaterialPhase; 3] {
        [self.dense.clone(), self.soft.clone(), self.frame.clone()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub target_hz: f64,
    pub alpha: f64,
    /// Pseudo-time step.
    pub dt: f64,
    /// `C₁`; `None` picks it so the first step moves `φ` by at most `first_step`.
    pub c1: Option<f64>,
    pub first_step: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub delta_tol: f64,
    pub mode_count: usize,
    pub exponent: f64,
    /// Frame thickness as a fraction of the cell edge.
    pub frame_fraction: f64,
    /// Tie the frame kinematically instead of scaling its stiffness.
    pub rigid_frame: bool,
    pub frame_stiffness_scale: f64,
    pub coating_density_scale: f64,
    pub phi_clamp: f64,
    pub initial_phi: f64,
    /// Reject steps raising `Π` by more than `max_increase · Π`, halving the step.
    pub backtracking: bool,
    pub max_increase: f64,
    pub max_backtracks: usize,
    /// Stop after this many accepted steps without a new best `Π`.
    pub stagnation_iters: usize,
    pub eigen: EigenSettings,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            target_hz: 1000.0,
            alpha: 1.0,
            dt: 1e-3,
            c1: None,
            first_step: 0.1,
            max_iters: 1000,
            stop_tol: 2.5e-7,
            delta_tol: 1e-3,
            mode_count: 12,
            exponent: 2.0,
            frame_fraction: 0.05,
            rigid_frame: true,
            frame_stiffness_scale: 1e10,
            coating_density_scale: 1e-10,
            phi_clamp: 10.0,
            initial_phi: 1.0,
            backtracking: true,
            max_increase: 0.01,
            max_backtracks: 8,
            stagnation_iters: 40,
            eigen: EigenSettings::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn target_lambda(&self) -> f64 {
        let w = math::hz_to_rad(self.target_hz);
        w * w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.target_hz > 0.0) {
            return bad(format!("target frequency {} Hz must be positive", self.target_hz));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha = {} outside [0, 1]", self.alpha));
        }
        if !(self.dt > 0.0) || self.c1.is_some_and(|c| !(c > 0.0)) || !(self.first_step > 0.0) {
            return bad("time step, C1 and first step must be positive".into());
        }
        if !(self.frame_fraction > 0.0 && self.frame_fraction < 0.5) {
            return bad(format!("frame fraction {} outside (0, 0.5)", self.frame_fraction));
        }
        if !(self.exponent > 0.0) || !(self.delta_tol >= 0.0) || self.mode_count == 0 {
            return bad("exponent, delta_tol and mode count must be positive".into());
        }
        if !(self.initial_phi > 0.0) || !(self.phi_clamp >= self.initial_phi) {
            return bad("initial phi must be positive and inside the clamp range".into());
        }
        Ok(())
    }
}

/// Frame and design-domain masks of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayout {
    /// Frame thickness in elements.
    pub thickness: usize,
    pub frame_elements: Vec<bool>,
    /// Nodes touching a frame element.
    pub frame_nodes: Vec<bool>,
    /// Nodes touching a design element (they carry the level set).
    pub design_nodes: Vec<bool>,
}

impl FrameLayout {
    pub fn new(grid: &StructuredGrid, fraction: f64) -> Result<Self> {
        let n = grid.nx().min(grid.ny());
        let t = (math::round(fraction * n as f64) as usize).max(1);
        if 2 * t >= n {
            return Err(Error::InvalidArgument(format!("frame of {t} elements leaves no design domain on a {n}-element grid")));
        }
        Ok(Self::with_thickness(grid, t))
    }

    pub fn with_thickness(grid: &StructuredGrid, t: usize) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let frame_elements: Vec<bool> = (0..grid.num_elements())
            .map(|e| {
                let (i, j) = grid.element_ij(e);
                i < t || j < t || i >= nx - t || j >= ny - t
            })
            .collect();
        let mut frame_nodes = vec![false; grid.num_nodes()];
        let mut design_nodes = vec![false; grid.num_nodes()];
        for e in 0..grid.num_elements() {
            let target = if frame_elements[e] { &mut frame_nodes } else { &mut design_nodes };
            for n in grid.element_nodes(e) {
                target[n] = true;
            }
        }
        Self { thickness: t, frame_elements, frame_nodes, design_nodes }
    }

    pub fn frame_volume_fraction(&self) -> f64 {
        self.frame_elements.iter().filter(|f| **f).count() as f64 / self.frame_elements.len() as f64
    }
}

/// Gauss-point values of `χ = H(φ)`, indexed `4·e + g`; frame points are 1.
pub fn characteristic(grid: &StructuredGrid, layout: &FrameLayout, phi: &[f64]) -> Vec<f64> {
    let shapes: [[f64; 4]; 4] = core::array::from_fn(|g| element::shape(GAUSS[g][0], GAUSS[g][1]));
    let mut chi = Vec::with_capacity(4 * grid.num_elements());
    for e in 0..grid.num_elements() {
        let nodes = grid.element_nodes(e);
        for n in &shapes {
            if layout.frame_elements[e] {
                chi.push(1.0);
            } else {
                let v: f64 = (0..4).map(|a| n[a] * phi[nodes[a]]).sum();
                chi.push(if v >= 0.0 { 1.0 } else { 0.0 });
            }
        }
    }
    chi
}

/// Nodal level set plus its optimization history.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetState {
    pub phi: Vec<f64>,
    pub design_nodes: Vec<bool>,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
}

impl LevelSetState {
    pub fn uniform(layout: &FrameLayout, value: f64) -> Self {
        let phi = layout.design_nodes.iter().map(|_| value).collect();
        Self { phi, design_nodes: layout.design_nodes.clone(), iteration: 0, history: Vec::new() }
    }

    /// `φ ← clamp(φ − Δt C₁ s)` on design nodes.
    pub fn hj_step(&self, sensitivity: &[f64], dt: f64, c1: f64, clamp: f64) -> Self {
        let mut next = self.clone();
        for ((p, s), d) in next.phi.iter_mut().zip(sensitivity).zip(&self.design_nodes) {
            if *d {
                *p = (*p - dt * c1 * s).clamp(-clamp, clamp);
            }
        }
        next.iteration += 1;
        next
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: CostBreakdown,
    pub lambda_star: f64,
    pub lambda: f64,
    /// Dense and soft fractions of the whole cell.
    pub vol_frac_dense: f64,
    pub vol_frac_soft: f64,
    /// Dense design material still touches the frame.
    pub attached: bool,
    /// Multiplier applied to the nominal step (backtracking).
    pub step_scale: f64,
}

/// Modal state of one design.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub chi: Vec<f64>,
    pub restricted: ModalSolution<f64>,
    pub unrestricted: ModalSolution<f64>,
    pub first_restricted: usize,
    pub first_unrestricted: usize,
    pub lambda_star: f64,
    pub lambda: f64,
    pub cost: CostBreakdown,
}

impl Analysis {
    pub fn restricted_hz(&self) -> f64 {
        math::rad_to_hz(math::sqrt(self.lambda_star))
    }

    pub fn unrestricted_hz(&self) -> f64 {
        math::rad_to_hz(math::sqrt(self.lambda))
    }

    /// Bandgap width in Hz between the two first relevant resonances.
    pub fn bandgap_hz(&self) -> f64 {
        self.unrestricted_hz() - self.restricted_hz()
    }
}

/// Fixed data of an optimization problem.
#[derive(Debug, Clone)]
pub struct TopologyProblem {
    pub grid: StructuredGrid,
    pub phases: OptimizationPhases,
    pub config: OptimizerConfig,
    pub layout: FrameLayout,
    mixture: PhaseMixture,
    frame_tensor: Voigt,
    restricted_ops: ConstraintOperators,
    unrestricted_ops: ConstraintOperators,
    mean: [Vec<f64>; 2],
}

impl TopologyProblem {
    pub fn new(grid: StructuredGrid, phases: OptimizationPhases, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        let layout = FrameLayout::new(&grid, config.frame_fraction)?;
        Self::with_layout(grid, phases, config, layout)
    }

    pub fn with_layout(
        grid: StructuredGrid,
        phases: OptimizationPhases,
        config: OptimizerConfig,
        layout: FrameLayout,
    ) -> Result<Self> {
        config.validate()?;
        let mut soft = phases.soft.clone();
        soft.rho *= config.coating_density_scale;
        let mixture = PhaseMixture::new(phases.dense.clone(), soft, config.exponent)?;
        phases.frame.validate()?;
        let (mut frame_tensor, _) = isotropic_tensors(&phases.frame);
        if !config.rigid_frame {
            for v in frame_tensor.iter_mut().flatten() {
                *v *= config.frame_stiffness_scale;
            }
        }
        let (restricted, unrestricted) = if config.rigid_frame {
            (
                ConstraintSpec::new(BoundaryCondition::FullyPrescribedBoundary)
                    .horizontal_only()
                    .with_rigid_region(layout.frame_nodes.clone()),
                ConstraintSpec::new(BoundaryCondition::Free).horizontal_only().with_rigid_region(layout.frame_nodes.clone()),
            )
        } else {
            (
                ConstraintSpec::new(BoundaryCondition::FullyPrescribedBoundary).horizontal_only(),
                ConstraintSpec::new(BoundaryCondition::Free).horizontal_only(),
            )
        };
        let restricted_ops = build_constraints(&grid, &restricted)?;
        let unrestricted_ops = build_constraints(&grid, &unrestricted)?;
        let mean = mean_operator(&unrestricted_ops);
        Ok(Self { grid, phases, config, layout, mixture, frame_tensor, restricted_ops, unrestricted_ops, mean })
    }

    pub fn initial_state(&self) -> LevelSetState {
        LevelSetState::uniform(&self.layout, self.config.initial_phi)
    }

    pub fn restricted_operators(&self) -> &ConstraintOperators {
        &self.restricted_ops
    }

    pub fn unrestricted_operators(&self) -> &ConstraintOperators {
        &self.unrestricted_ops
    }

    /// Gauss-point material field used during optimization.
    pub fn material_field(&self, chi: &[f64]) -> MaterialField {
        let n = chi.len();
        let mut field = MaterialField { density: Vec::with_capacity(n), stiffness: Vec::with_capacity(n), viscosity: vec![[[0.0; 3]; 3]; n] };
        for (k, c) in chi.iter().enumerate() {
            if self.layout.frame_elements[k / 4] {
                field.density.push(self.phases.frame.rho);
                field.stiffness.push(self.frame_tensor);
            } else {
                let p = self.mixture.eval(*c);
                field.density.push(p.rho);
                field.stiffness.push(p.stiffness);
            }
        }
        field
    }

    /// Assembles and solves both modal problems for a Gauss-point `χ`.
    pub fn analyze_chi(&self, chi: Vec<f64>, warm: Option<&Analysis>) -> Result<Analysis> {
        let field = self.material_field(&chi);
        let sys = assemble(&self.grid, &field)?;
        let cfg = &self.config;

        let pr = &self.restricted_ops.projection;
        let (kr, mr) = (pr.reduce(&sys.stiffness), pr.reduce(&sys.mass));
        let momentum = momentum_operator(&sys.mass, &self.restricted_ops, self.grid.volume());
        let start_r = warm.map_or(&[][..], |w| &w.restricted.modes[..]);
        let (restricted, idx_r) = solve_until_relevant(&kr, &mr, cfg.mode_count, &cfg.eigen, start_r, |s| {
            filter_relevant_restricted(s, &momentum, cfg.delta_tol)
        })?;

        let pu = &self.unrestricted_ops.projection;
        let (ku, mu) = (pu.reduce(&sys.stiffness), pu.reduce(&sys.mass));
        let start_u = warm.map_or(&[][..], |w| &w.unrestricted.modes[..]);
        let (unrestricted, idx_u) = solve_until_relevant(&ku, &mu, cfg.mode_count, &cfg.eigen, start_u, |s| {
            filter_relevant_unrestricted(s, &self.mean, cfg.delta_tol)
        })?;

        let lambda_star = restricted.eigenvalues[idx_r[0]];
        let lambda = unrestricted.eigenvalues[idx_u[0]];
        let cost = evaluate_cost(lambda_star, lambda, cfg.target_lambda(), cfg.alpha)?;
        Ok(Analysis {
            chi,
            restricted,
            unrestricted,
            first_restricted: idx_r[0],
            first_unrestricted: idx_u[0],
            lambda_star,
            lambda,
            cost,
        })
    }

    pub fn analyze(&self, state: &LevelSetState, warm: Option<&Analysis>) -> Result<Analysis> {
        self.analyze_chi(characteristic(&self.grid, &self.layout, &state.phi), warm)
    }

    /// Pointwise eigenvalue sensitivity `ε:∂C/∂χ:ε − λ ∂ρ/∂χ |φ|²` at every
    /// design Gauss point (zero on the frame), for a full-space mode.
    pub fn eigenvalue_sensitivity(&self, chi: &[f64], mode: &[f64], lambda: f64) -> Vec<f64> {
        let h = self.grid.element_size();
        let shapes: [[f64; 4]; 4] = core::array::from_fn(|g| element::shape(GAUSS[g][0], GAUSS[g][1]));
        let mut out = vec![0.0; chi.len()];
        for e in 0..self.grid.num_elements() {
            if self.layout.frame_elements[e] {
                continue;
            }
            let dofs = self.grid.element_dofs(e);
            let u: [f64; 8] = core::array::from_fn(|k| mode[dofs[k]]);
            for g in 0..4 {
                let p = self.mixture.eval(chi[4 * e + g]);
                let eps = element::strain_at(GAUSS[g][0], GAUSS[g][1], h, &u);
                let mut energy = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        energy += eps[i] * p.d_stiffness[i][j] * eps[j];
                    }
                }
                let ux: f64 = (0..4).map(|a| shapes[g][a] * u[2 * a]).sum();
                let uy: f64 = (0..4).map(|a| shapes[g][a] * u[2 * a + 1]).sum();
                out[4 * e + g] = energy - lambda * p.d_rho * (ux * ux + uy * uy);
            }
        }
        out
    }

    /// `δΠ/δχ` at the Gauss points.
    pub fn cost_sensitivity_points(&self, a: &Analysis) -> Vec<f64> {
        let mode_r = self.restricted_ops.projection.expand(&a.restricted.modes[a.first_restricted]);
        let mode_u = self.unrestricted_ops.projection.expand(&a.unrestricted.modes[a.first_unrestricted]);
        let dr = self.eigenvalue_sensitivity(&a.chi, &mode_r, a.lambda_star);
        let (gs, gu) = cost_gradient(&a.cost, a.lambda_star, a.lambda);
        if a.cost.alpha == 1.0 {
            return dr.iter().map(|x| gs * x).collect();
        }
        let du = self.eigenvalue_sensitivity(&a.chi, &mode_u, a.lambda);
        dr.iter().zip(&du).map(|(x, y)| gs * x + gu * y).collect()
    }

    /// Nodal `δΠ/δχ`: shape-weighted average of adjacent design Gauss points.
    pub fn sensitivity_field(&self, a: &Analysis) -> Vec<f64> {
        let pts = self.cost_sensitivity_points(a);
        self.nodal_average(&pts)
    }

    pub fn nodal_average(&self, pts: &[f64]) -> Vec<f64> {
        let shapes: [[f64; 4]; 4] = core::array::from_fn(|g| element::shape(GAUSS[g][0], GAUSS[g][1]));
        let nn = self.grid.num_nodes();
        let (mut acc, mut wsum) = (vec![0.0; nn], vec![0.0; nn]);
        for e in 0..self.grid.num_elements() {
            if self.layout.frame_elements[e] {
                continue;
            }
            let nodes = self.grid.element_nodes(e);
            for g in 0..4 {
                for a in 0..4 {
                    acc[nodes[a]] += shapes[g][a] * pts[4 * e + g];
                    wsum[nodes[a]] += shapes[g][a];
                }
            }
        }
        acc.iter().zip(&wsum).map(|(a, w)| if *w > 0.0 { a / w } else { 0.0 }).collect()
    }

    fn record(&self, iter: usize, a: &Analysis, step_scale: f64) -> IterationRecord {
        let total = a.chi.len() as f64;
        let mut dense = 0usize;
        let mut soft = 0usize;
        for (k, c) in a.chi.iter().enumerate() {
            if self.layout.frame_elements[k / 4] {
                continue;
            }
            if *c >= 0.5 {
                dense += 1;
            } else {
                soft += 1;
            }
        }
        IterationRecord {
            iter,
            cost: a.cost,
            lambda_star: a.lambda_star,
            lambda: a.lambda,
            vol_frac_dense: dense as f64 / total,
            vol_frac_soft: soft as f64 / total,
            attached: attached_to_frame(&self.grid, &self.layout, &a.chi),
            step_scale,
        }
    }
}

/// Whether dense design Gauss points connect to the frame through dense
/// neighbours (4-connectivity on the Gauss-point lattice).
pub fn attached_to_frame(grid: &StructuredGrid, layout: &FrameLayout, chi: &[f64]) -> bool {
    let (w, h) = (2 * grid.nx(), 2 * grid.ny());
    // Gauss point (e, g) on the doubled lattice.
    let index = |e: usize, g: usize| {
        let (i, j) = grid.element_ij(e);
        let (di, dj) = match g {
            0 => (0, 0),
            1 => (1, 0),
            2 => (1, 1),
            _ => (0, 1),
        };
        (2 * j + dj) * w + 2 * i + di
    };
    let mut cell = vec![0u8; w * h]; // 0 soft, 1 dense design, 2 frame
    for e in 0..grid.num_elements() {
        for g in 0..4 {
            cell[index(e, g)] = if layout.frame_elements[e] {
                2
            } else if chi[4 * e + g] >= 0.5 {
                1
            } else {
                0
            };
        }
    }
    let mut seen = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&k| cell[k] == 2).collect();
    for &k in &stack {
        seen[k] = true;
    }
    while let Some(k) = stack.pop() {
        let (x, y) = (k % w, k / w);
        let mut visit = |nx: usize, ny: usize| {
            let q = ny * w + nx;
            if !seen[q] && cell[q] == 1 {
                seen[q] = true;
                stack.push(q);
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    (0..w * h).any(|k| cell[k] == 1 && seen[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stagnated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    /// Best state found; its history covers every accepted iteration.
    pub state: LevelSetState,
    pub analysis: Analysis,
    pub best_iteration: usize,
    pub c1: f64,
    pub stop: StopReason,
    pub warnings: Vec<String>,
}

/// Marches the level set until `Π ≤ stop_tol`, stagnation, or `max_iters`.
///
/// `observer` sees every accepted iterate.
pub fn optimize(
    problem: &TopologyProblem,
    mut observer: impl FnMut(&IterationRecord, &LevelSetState),
) -> Result<OptimizationResult> {
    let cfg = &problem.config;
    let omega_min = feasibility_lower_limit(&problem.phases.all(), problem.grid.extent()[0])?;
    let target_w = math::hz_to_rad(cfg.target_hz);
    if target_w <= omega_min {
        return Err(Error::Infeasible { target: cfg.target_hz, limit: math::rad_to_hz(omega_min) });
    }
    let mut warnings = Vec::new();
    let mut state = problem.initial_state();
    let mut analysis = problem.analyze(&state, None)?;
    let first = problem.record(0, &analysis, 1.0);
    state.history.push(first);
    observer(&first, &state);

    let mut c1 = cfg.c1.unwrap_or(0.0);
    let mut best = (analysis.cost.pi, state.clone(), analysis.clone());
    let mut since_best = 0usize;
    let mut stop = StopReason::MaxIterations;
    let mut last_jump: f64 = 0.0;
    let mut instability_noted = false;

    for it in 1..=cfg.max_iters {
        if analysis.cost.pi <= cfg.stop_tol {
            stop = StopReason::Converged;
            break;
        }
        let sens = problem.sensitivity_field(&analysis);
        if cfg.c1.is_none() && it == 1 {
            let smax = sens.iter().zip(&state.design_nodes).filter(|(_, d)| **d).map(|(s, _)| s.abs()).fold(0.0, f64::max);
            if smax == 0.0 {
                stop = StopReason::Stagnated;
                warnings.push("sensitivity vanishes on the initial design".into());
                break;
            }
            c1 = cfg.first_step / (cfg.dt * smax);
        }
        let mut accepted = None;
        let mut scale: f64 = 1.0;
        for _ in 0..=cfg.max_backtracks {
            let trial = state.hj_step(&sens, cfg.dt * scale, c1, cfg.phi_clamp);
            let chi = characteristic(&problem.grid, &problem.layout, &trial.phi);
            if chi == analysis.chi {
                // Same material layout: only the level set moved.
                accepted = Some((trial, analysis.clone()));
                break;
            }
            match problem.analyze_chi(chi, Some(&analysis)) {
                Ok(a) => {
                    let limit = analysis.cost.pi * (1.0 + cfg.max_increase);
                    if !cfg.backtracking || a.cost.pi <= limit {
                        accepted = Some((trial, a));
                        break;
                    }
                }
                Err(Error::NoRelevantMode) if cfg.backtracking => {}
                Err(e) => return Err(e),
            }
            scale *= 0.5;
        }
        let Some((mut next, a)) = accepted else {
            stop = StopReason::Stagnated;
            warnings.push(format!("iteration {it}: no admissible step after {} halvings", cfg.max_backtracks));
            break;
        };
        next.iteration = it;
        let jump = math::log10(a.lambda_star / analysis.lambda_star);
        if jump.abs() > 1.0 {
            if last_jump != 0.0 && jump.signum() != last_jump.signum() && !instability_noted {
                warnings.push(format!(
                    "iteration {it}: restricted resonance oscillates by more than a decade; the target may lie in the unstable range"
                ));
                instability_noted = true;
            }
            last_jump = jump;
        }
        let rec = problem.record(it, &a, scale);
        next.history.push(rec);
        observer(&rec, &next);
        state = next;
        analysis = a;
        if analysis.cost.pi < best.0 {
            best = (analysis.cost.pi, state.clone(), analysis.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.stagnation_iters {
                stop = StopReason::Stagnated;
                warnings.push(format!("no improvement over {} iterations", cfg.stagnation_iters));
                break;
            }
        }
    }
    if stop == StopReason::MaxIterations && analysis.cost.pi <= cfg.stop_tol {
        stop = StopReason::Converged;
    }
    let (_, mut best_state, best_analysis) = best;
    let best_iteration = best_state.iteration;
    // Keep the full history on the returned state.
    best_state.history = state.history;
    Ok(OptimizationResult { state: best_state, analysis: best_analysis, best_iteration, c1, stop, warnings })
}
