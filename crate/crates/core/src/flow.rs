//! Explicit time integration of the non-parametric mean curvature flow
//! ∂u/∂t = gⁱʲ(Du) ∂²u/∂xⁱ∂xʲ with Dirichlet or periodic boundary, plus the
//! monitor pipeline that tracks area, *ω, gradients, dissipation and the
//! quantitative estimates along a trajectory.
//!
//! The ellipticity window caps the eigenvalues of gⁱʲ at 1 independently of
//! u, so the forward-Euler step bound dt = safety·h²/(2n) is rigorous and
//! constant along the run.

use std::io::Write;

use crate::exec;
use crate::geometry::{area_with, induced_metric, singular_spectrum};
use crate::grid::{BoundaryMode, GraphField, NodeClass};
use crate::operators::{
    jet, mean_curvature, ms_residual_nondiv, second_fundamental_norm, FrameField, JetField,
};
use crate::{CoreError, Result};

/// Hard blow-up thresholds: far outside the admissible gradient regime,
/// abort and flag rather than integrate garbage.
const BLOWUP_MAX_GRAD: f64 = 10.0;
const BLOWUP_MIN_OMEGA: f64 = 1e-6;

/// One flow trajectory's state.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub field: GraphField,
    pub step_index: usize,
    pub dt: f64,
}

/// Stability bound dt = safety · h_min² / (2 n Λ) with Λ = 1 (the uniform
/// cap on the eigenvalues of gⁱʲ); independent of u.
pub fn cfl_dt(grid: &crate::grid::DomainGrid, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "CFL safety factor {safety} outside (0, 1]"
        )));
    }
    let h = grid.min_spacing();
    Ok(safety * h * h / (2.0 * grid.dim() as f64))
}

/// Result of one explicit Euler step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    /// Max Euclidean residual over interior nodes before the step; the
    /// update magnitude is dt times this.
    pub update_inf: f64,
}

/// One forward-Euler step. Boundary nodes stay pinned to ψ in Dirichlet
/// mode; periodic grids have no boundary. Errors on a non-finite update.
pub fn step(state: &mut FlowState, dt: f64) -> Result<StepInfo> {
    let grid = state.field.grid().clone();
    if dt > cfl_dt(&grid, 1.0)? * (1.0 + 1e-12) {
        return Err(CoreError::InvalidParameter(format!(
            "dt = {dt} exceeds the stability bound"
        )));
    }
    let m = state.field.codim();
    let jet = jet(&state.field)?;
    let metric = induced_metric(&jet)?;
    let residual = ms_residual_nondiv(&jet, &metric);

    {
        let values = state.field.values_mut();
        exec::fill_slice(values, m, |a, slot| {
            if grid.class(a) == NodeClass::Interior {
                for c in 0..m {
                    slot[c] += dt * residual.r[a * m + c];
                }
            }
        });
    }
    if !state.field.is_finite() {
        return Err(CoreError::BlowUp {
            t: state.t,
            step: state.step_index,
            reason: "non-finite update".into(),
        });
    }
    state.t += dt;
    state.step_index += 1;
    state.dt = dt;
    Ok(StepInfo {
        update_inf: residual.interior_inf,
    })
}

/// Per-record scalars tracked along a run.
#[derive(Debug, Clone, Copy)]
pub struct FlowMonitorRecord {
    pub t: f64,
    pub area: f64,
    /// Interior minimum of *ω.
    pub min_star_omega: f64,
    /// sup |Du| (Frobenius) over all nodes.
    pub max_grad: f64,
    /// sup |Du| over boundary nodes and interior nodes touching one.
    pub boundary_max_grad: f64,
    /// ∫ |H|² √g over interior nodes.
    pub dissipation: f64,
    pub residual_l2: f64,
    pub residual_inf: f64,
    /// sup |A|² over interior nodes.
    pub max_a2: f64,
    /// 4n·diamΩ·(1+η)·sup|D²ψ| + √2·sup_∂Ω|Dψ| at the running η.
    pub boundary_bound_rhs: f64,
    pub small_data_ok: bool,
    /// Boundary minimum of *ω (∞ on tori); not serialized.
    pub boundary_min_omega: f64,
}

/// Writes the monitor CSV with the interchange header.
pub fn write_monitor_csv<W: Write>(records: &[FlowMonitorRecord], w: &mut W) -> Result<()> {
    writeln!(
        w,
        "t,area,min_star_omega,max_grad,boundary_max_grad,dissipation,residual_l2,residual_inf,max_A2,boundary_bound_rhs,small_data_ok"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            crate::fmt_f64(r.t),
            crate::fmt_f64(r.area),
            crate::fmt_f64(r.min_star_omega),
            crate::fmt_f64(r.max_grad),
            crate::fmt_f64(r.boundary_max_grad),
            crate::fmt_f64(r.dissipation),
            crate::fmt_f64(r.residual_l2),
            crate::fmt_f64(r.residual_inf),
            crate::fmt_f64(r.max_a2),
            crate::fmt_f64(r.boundary_bound_rhs),
            r.small_data_ok,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ViolationCounts {
    pub area_monotone: usize,
    pub omega_minprinciple: usize,
    pub boundary_bound: usize,
    pub interior_grad: usize,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.area_monotone + self.omega_minprinciple + self.boundary_bound + self.interior_grad
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowOutcome {
    /// Interior residual dropped below the tolerance.
    Converged,
    /// t reached t_max first.
    Timeout,
    BlowUp(String),
}

#[derive(Debug, Clone)]
pub struct FlowSummary {
    pub outcome: FlowOutcome,
    pub t_final: f64,
    pub steps: usize,
    pub final_residual_inf: f64,
    pub delta_certified: f64,
    pub small_data_ok: bool,
    pub small_data_lhs: f64,
    pub small_data_rhs: f64,
    pub violations: ViolationCounts,
}

impl FlowSummary {
    pub fn converged(&self) -> bool {
        self.outcome == FlowOutcome::Converged
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub safety: f64,
    pub t_max: f64,
    pub residual_tol: f64,
    pub record_every: usize,
    /// Slack constant c for the discrete maximum-principle checks.
    pub slack_constant: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            safety: 0.9,
            t_max: 1.0,
            residual_tol: 1e-10,
            record_every: 10,
            slack_constant: 10.0,
        }
    }
}

#[derive(Debug)]
pub struct FlowRun {
    pub state: FlowState,
    pub records: Vec<FlowMonitorRecord>,
    pub summary: FlowSummary,
}

/// Derivative bounds of the initial/boundary data entering the estimates.
#[derive(Debug, Clone, Copy)]
pub struct PsiBounds {
    /// sup over Ω̄ of |D²ψ| (Frobenius).
    pub sup_d2: f64,
    /// sup over ∂Ω of |Dψ| (Frobenius).
    pub sup_d1_boundary: f64,
    pub diam: f64,
    pub n: usize,
}

impl PsiBounds {
    pub fn of(psi: &GraphField) -> Result<PsiBounds> {
        let grid = psi.grid();
        let j = jet(psi)?;
        let n_active = grid.active_count();
        let sup_d2 = exec::par_max(n_active, |a| j.hess_sq(a)).max(0.0).sqrt();
        let sup_d1_boundary = if grid.boundary_nodes().is_empty() {
            0.0
        } else {
            exec::par_max(grid.boundary_nodes().len(), |s| {
                j.grad_sq(grid.boundary_nodes()[s] as usize)
            })
            .max(0.0)
            .sqrt()
        };
        Ok(PsiBounds {
            sup_d2,
            sup_d1_boundary,
            diam: grid.diameter(),
            n: grid.dim(),
        })
    }

    /// Boundary gradient bound at a given η = sup|Du|².
    pub fn boundary_rhs(&self, eta: f64) -> f64 {
        4.0 * self.n as f64 * self.diam * (1.0 + eta) * self.sup_d2
            + 2.0f64.sqrt() * self.sup_d1_boundary
    }

    /// Left side of the small-data condition.
    pub fn small_data_lhs(&self) -> f64 {
        8.0 * self.n as f64 * self.diam * self.sup_d2 + 2.0f64.sqrt() * self.sup_d1_boundary
    }

    /// Right side √(2^{1/n} − 1) of the small-data condition.
    pub fn small_data_rhs(&self) -> f64 {
        (2.0f64.powf(1.0 / self.n as f64) - 1.0).sqrt()
    }
}

/// 4n·diamΩ·(1+η)·sup_Ω|D²ψ| + √2·sup_∂Ω|Dψ| with caller-supplied η.
pub fn boundary_bound_rhs(psi: &GraphField, eta: f64) -> Result<f64> {
    Ok(PsiBounds::of(psi)?.boundary_rhs(eta))
}

/// Small-data condition: 8n·diamΩ·sup|D²ψ| + √2·sup_∂Ω|Dψ| < √(2^{1/n}−1).
/// Returns (ok, lhs, rhs).
pub fn small_data_check(psi: &GraphField) -> Result<(bool, f64, f64)> {
    let b = PsiBounds::of(psi)?;
    let lhs = b.small_data_lhs();
    let rhs = b.small_data_rhs();
    Ok((lhs < rhs, lhs, rhs))
}

/// Constructive δ certification: the largest δ = k/4096 ∈ (0,1) such that
/// at t = 0 both min *ω > 1/√(2−δ) and the strengthened boundary
/// inequality 4n·diam·(2−δ)·sup|D²ψ| + √2·sup_∂Ω|Dψ| < √((2−δ)^{1/n}−1)
/// hold. Returns 0 when the small-data condition fails.
pub fn certify_delta(psi: &GraphField) -> Result<f64> {
    let bounds = PsiBounds::of(psi)?;
    if bounds.small_data_lhs() >= bounds.small_data_rhs() {
        return Ok(0.0);
    }
    let j = jet(psi)?;
    let spec = singular_spectrum(&j)?;
    let n_active = psi.grid().active_count();
    let min_omega = exec::par_min(n_active, |a| spec.star_omega(a));
    let n = bounds.n as f64;

    const DEPTH: usize = 4096;
    for k in (1..DEPTH).rev() {
        let delta = k as f64 / DEPTH as f64;
        let omega_ok = min_omega > 1.0 / (2.0 - delta).sqrt();
        // η stays below 1-δ along the run, so 1+η ≤ 2-δ in the barrier rhs
        let lhs = 4.0 * n * bounds.diam * (2.0 - delta) * bounds.sup_d2
            + 2.0f64.sqrt() * bounds.sup_d1_boundary;
        let rhs = ((2.0 - delta).powf(1.0 / n) - 1.0).sqrt();
        if omega_ok && lhs < rhs {
            return Ok(delta);
        }
    }
    Ok(0.0)
}

struct MonitorCtx {
    psi_bounds: PsiBounds,
    small_data_ok: bool,
    boundary_adjacent: Vec<u32>,
    /// running sup of |Du|² over recorded times
    eta_run: f64,
}

fn monitor(
    state: &FlowState,
    jet: &JetField,
    residual_l2: f64,
    residual_inf: f64,
    ctx: &mut MonitorCtx,
) -> Result<FlowMonitorRecord> {
    let grid = state.field.grid();
    let n_active = grid.active_count();
    let metric = induced_metric(jet)?;
    let spec = singular_spectrum(jet)?;
    let area = area_with(&metric, &spec)?;

    let max_grad = exec::par_max(n_active, |a| jet.grad_sq(a)).max(0.0).sqrt();
    ctx.eta_run = ctx.eta_run.max(max_grad * max_grad);

    let interior = grid.interior_nodes();
    let min_star_omega = if interior.is_empty() {
        f64::INFINITY
    } else {
        exec::par_min(interior.len(), |k| spec.star_omega(interior[k] as usize))
    };
    let boundary = grid.boundary_nodes();
    let boundary_min_omega = if boundary.is_empty() {
        f64::INFINITY
    } else {
        exec::par_min(boundary.len(), |k| spec.star_omega(boundary[k] as usize))
    };
    let boundary_max_grad = if ctx.boundary_adjacent.is_empty() {
        0.0
    } else {
        exec::par_max(ctx.boundary_adjacent.len(), |k| {
            jet.grad_sq(ctx.boundary_adjacent[k] as usize)
        })
        .max(0.0)
        .sqrt()
    };

    let frame = FrameField::new(jet, &metric);
    let hvec = mean_curvature(jet, &metric, &frame);
    let a2 = second_fundamental_norm(jet, &metric, &frame);
    let d = grid.dim() + state.field.codim();
    let dissipation = exec::par_sum(interior.len(), |k| {
        let a = interior[k] as usize;
        let h_sq: f64 = hvec[a * d..(a + 1) * d].iter().map(|v| v * v).sum();
        grid.quad_weight(a) * h_sq * metric.sqrt_g(a)
    }) * grid.cell_volume();
    let max_a2 = if interior.is_empty() {
        0.0
    } else {
        exec::par_max(interior.len(), |k| a2[interior[k] as usize])
    };

    Ok(FlowMonitorRecord {
        t: state.t,
        area,
        min_star_omega,
        max_grad,
        boundary_max_grad,
        dissipation,
        residual_l2,
        residual_inf,
        max_a2,
        boundary_bound_rhs: ctx.psi_bounds.boundary_rhs(ctx.eta_run),
        small_data_ok: ctx.small_data_ok,
        boundary_min_omega,
    })
}

/// Integrates the flow from `initial` until the interior residual drops
/// below `residual_tol`, t reaches `t_max`, or the solution blows up.
/// Monitors are recorded every `record_every` steps and at the final state.
pub fn run_flow(initial: GraphField, config: &FlowConfig) -> Result<FlowRun> {
    if config.record_every == 0 {
        return Err(CoreError::InvalidParameter("record_every must be >= 1".into()));
    }
    let grid = initial.grid().clone();
    let dt = cfl_dt(&grid, config.safety)?;

    let psi_bounds = PsiBounds::of(&initial)?;
    let (small_data_ok, lhs, rhs) = small_data_check(&initial)?;
    let delta = certify_delta(&initial)?;

    // boundary nodes plus interior nodes touching one
    let mut boundary_adjacent: Vec<u32> = grid.boundary_nodes().to_vec();
    for &a in grid.interior_nodes() {
        let a = a as usize;
        let mut touches = false;
        for axis in 0..grid.dim() {
            for dir in [-1isize, 1] {
                if let Some(b) = grid.neighbor(a, axis, dir) {
                    if grid.class(b) == NodeClass::Boundary {
                        touches = true;
                    }
                }
            }
        }
        if touches {
            boundary_adjacent.push(a as u32);
        }
    }

    let mut ctx = MonitorCtx {
        psi_bounds,
        small_data_ok,
        boundary_adjacent,
        eta_run: 0.0,
    };
    let mut state = FlowState {
        t: 0.0,
        field: initial,
        step_index: 0,
        dt,
    };
    let mut records: Vec<FlowMonitorRecord> = Vec::new();
    let mut violations = ViolationCounts::default();
    let mut area0 = f64::NAN;
    let mut prev_area = f64::NAN;
    let mut initial_interior_min_omega = f64::NAN;
    let mut boundary_min_run = f64::INFINITY;
    let h_min = grid.min_spacing();
    let c = config.slack_constant;
    let convex_domain =
        grid.mask().is_none() && grid.boundary_mode() == BoundaryMode::Dirichlet;

    let outcome;
    #[allow(unused_assignments)]
    let mut final_residual = f64::NAN;
    loop {
        let jet_now = jet(&state.field)?;
        let metric = induced_metric(&jet_now)?;
        let residual = ms_residual_nondiv(&jet_now, &metric);
        final_residual = residual.interior_inf;

        // blow-up screen on the current state
        let max_grad_sq = exec::par_max(grid.active_count(), |a| jet_now.grad_sq(a));
        let min_omega = exec::par_min(grid.active_count(), |a| 1.0 / metric.sqrt_g(a));
        if !max_grad_sq.is_finite()
            || max_grad_sq.sqrt() > BLOWUP_MAX_GRAD
            || min_omega < BLOWUP_MIN_OMEGA
        {
            outcome = FlowOutcome::BlowUp(format!(
                "max |Du| = {:.3e}, min *ω = {:.3e} at t = {:.6e}",
                max_grad_sq.sqrt(),
                min_omega,
                state.t
            ));
            break;
        }

        let converged = residual.interior_inf < config.residual_tol;
        let timeout = state.t >= config.t_max * (1.0 - 1e-12);
        let should_record =
            state.step_index.is_multiple_of(config.record_every) || converged || timeout;

        if should_record {
            let rec = monitor(&state, &jet_now, residual.l2, residual.linf, &mut ctx)?;
            if records.is_empty() {
                area0 = rec.area;
                initial_interior_min_omega = rec.min_star_omega;
            } else if rec.area > prev_area + 1e-9 * area0 {
                violations.area_monotone += 1;
            }
            prev_area = rec.area;
            boundary_min_run = boundary_min_run.min(rec.boundary_min_omega);
            if delta > 0.0 {
                let floor =
                    initial_interior_min_omega.min(boundary_min_run) - c * h_min * h_min;
                if rec.min_star_omega < floor {
                    violations.omega_minprinciple += 1;
                }
                if rec.max_grad * rec.max_grad >= 1.0 - delta {
                    violations.interior_grad += 1;
                }
            }
            if convex_domain && rec.boundary_max_grad >= rec.boundary_bound_rhs + c * h_min {
                violations.boundary_bound += 1;
            }
            records.push(rec);
        }

        if converged {
            outcome = FlowOutcome::Converged;
            break;
        }
        if timeout {
            outcome = FlowOutcome::Timeout;
            break;
        }

        // Euler step, reusing the residual already computed
        let m = state.field.codim();
        {
            let values = state.field.values_mut();
            exec::fill_slice(values, m, |a, slot| {
                if grid.class(a) == NodeClass::Interior {
                    for cc in 0..m {
                        slot[cc] += dt * residual.r[a * m + cc];
                    }
                }
            });
        }
        if !state.field.is_finite() {
            outcome = FlowOutcome::BlowUp(format!(
                "non-finite values after step {} (t = {:.6e})",
                state.step_index, state.t
            ));
            break;
        }
        state.t += dt;
        state.step_index += 1;
    }

    Ok(FlowRun {
        summary: FlowSummary {
            outcome,
            t_final: state.t,
            steps: state.step_index,
            final_residual_inf: final_residual,
            delta_certified: delta,
            small_data_ok,
            small_data_lhs: lhs,
            small_data_rhs: rhs,
            violations,
        },
        state,
        records,
    })
}

/// Pointwise check of the discrete evolution inequality
/// (∂_t − Δ_Σ)*ω ≥ δ|A|²(1 − rel_slack) − c·h at full-stencil interior
/// nodes, using one Euler step to estimate ∂_t.
#[derive(Debug, Clone, Copy)]
pub struct EvolutionCheck {
    pub checked: usize,
    pub violations: usize,
    /// Most negative slack-adjusted gap (≥ 0 when no violations).
    pub worst_gap: f64,
}

pub fn evolution_inequality_check(
    field: &GraphField,
    delta: f64,
    c: f64,
    rel_slack: f64,
) -> Result<EvolutionCheck> {
    let grid = field.grid().clone();
    let dt = cfl_dt(&grid, 0.9)?;
    let j0 = jet(field)?;
    let met0 = induced_metric(&j0)?;
    let spec0 = singular_spectrum(&j0)?;
    let omega0: Vec<f64> = (0..grid.active_count())
        .map(|a| spec0.star_omega(a))
        .collect();
    let lap = crate::operators::surface_laplacian(&omega0, &met0);
    let frame = FrameField::new(&j0, &met0);
    let a2 = second_fundamental_norm(&j0, &met0, &frame);

    let mut probe = FlowState {
        t: 0.0,
        field: field.clone(),
        step_index: 0,
        dt,
    };
    step(&mut probe, dt)?;
    let j1 = jet(&probe.field)?;
    let spec1 = singular_spectrum(&j1)?;

    let h_min = grid.min_spacing();
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut worst: f64 = f64::INFINITY;
    for &a in grid.interior_nodes() {
        let a = a as usize;
        if !grid.has_full_stencil(a) {
            continue;
        }
        checked += 1;
        let ddt = (spec1.star_omega(a) - omega0[a]) / dt;
        let lhs = ddt - lap[a];
        let rhs = delta * a2[a] * (1.0 - rel_slack) - c * h_min;
        worst = worst.min(lhs - rhs);
        if lhs < rhs {
            violations += 1;
        }
    }
    Ok(EvolutionCheck {
        checked,
        violations,
        worst_gap: worst,
    })
}
