//! Post-hoc geometric diagnostics: blow-up/blow-down rescaling with
//! multilinear interpolation, density ratios σ(r) against ball volumes,
//! grid-refinement studies of the residual operators, and the discrete
//! subharmonicity check for −ln *ω on stationary area-decreasing graphs.

use std::io::Write;
use std::sync::Arc;

use crate::exec;
use crate::geometry::{induced_metric, singular_spectrum};
use crate::grid::{BoundaryMode, DomainGrid, GraphField};
use crate::operators::{
    jet, ms_residual_div_with_jet, ms_residual_nondiv, second_fundamental_norm, surface_laplacian,
    FrameField,
};
use crate::scenarios::Scenario;
use crate::{CoreError, Result, MAX_DIM};

/// Volume of the unit n-ball, n ≤ 4: πⁿᐟ²/Γ(n/2+1) frozen to 15 digits.
#[allow(clippy::approx_constant)]
pub fn omega_n(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 3.14159265358979,
        3 => 4.18879020478639,
        4 => 4.93480220054468,
        _ => panic!("omega_n defined for 1 <= n <= 4"),
    }
}

/// Multilinear interpolation of a field at an arbitrary point. All 2ⁿ cell
/// corners must be active.
pub fn interpolate(field: &GraphField, x: &[f64]) -> Result<Vec<f64>> {
    let grid = field.grid();
    let n = grid.dim();
    let m = field.codim();
    let lo = grid.box_lo();
    let res = grid.resolution();
    let h = grid.spacing();
    let periodic = grid.boundary_mode() == BoundaryMode::Periodic;

    let mut base = [0usize; MAX_DIM];
    let mut frac = [0.0f64; MAX_DIM];
    for i in 0..n {
        let t = (x[i] - lo[i]) / h[i];
        if periodic {
            let r = res[i] as f64;
            let wrapped = t.rem_euclid(r);
            base[i] = (wrapped.floor() as usize).min(res[i] - 1);
            frac[i] = wrapped - base[i] as f64;
        } else {
            if t < -1e-9 || t > (res[i] - 1) as f64 + 1e-9 {
                return Err(CoreError::TargetOutsideSource(x.to_vec()));
            }
            let c = t.floor().clamp(0.0, (res[i] - 2) as f64);
            base[i] = c as usize;
            frac[i] = (t - c).clamp(0.0, 1.0);
        }
    }

    let mut out = vec![0.0; m];
    for corner in 0..(1usize << n) {
        let mut idx = [0usize; MAX_DIM];
        let mut w = 1.0;
        for i in 0..n {
            let up = (corner >> i) & 1;
            idx[i] = if periodic {
                (base[i] + up) % res[i]
            } else {
                base[i] + up
            };
            w *= if up == 1 { frac[i] } else { 1.0 - frac[i] };
        }
        if w == 0.0 {
            continue;
        }
        let node = grid
            .node_at(&idx[..n])
            .ok_or_else(|| CoreError::TargetOutsideSource(x.to_vec()))?;
        for c in 0..m {
            out[c] += w * field.value(node)[c];
        }
    }
    Ok(out)
}

/// Blow-up/blow-down rescaling u_λ(x) = (u(x0 + λx) − u(x0))/λ sampled on
/// `target` by multilinear interpolation; u(x0) itself is interpolated.
pub fn rescale(
    field: &GraphField,
    lambda: f64,
    x0: &[f64],
    target: &Arc<DomainGrid>,
) -> Result<GraphField> {
    let u0 = interpolate(field, x0)?;
    rescale_with_offset(field, lambda, x0, &u0, target)
}

/// Rescaling with a caller-supplied u(x0); needed when x0 is not inside the
/// source domain (the cone vertex of a masked annulus, for instance).
pub fn rescale_with_offset(
    field: &GraphField,
    lambda: f64,
    x0: &[f64],
    u_at_x0: &[f64],
    target: &Arc<DomainGrid>,
) -> Result<GraphField> {
    if !(lambda > 0.0) {
        return Err(CoreError::InvalidParameter("lambda must be > 0".into()));
    }
    let n = field.grid().dim();
    if target.dim() != n {
        return Err(CoreError::InvalidParameter(
            "target grid dimension mismatch".into(),
        ));
    }
    let m = field.codim();
    let mut values = vec![0.0f64; target.active_count() * m];
    for a in 0..target.active_count() {
        let y = target.coords(a);
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = x0[i] + lambda * y[i];
        }
        let u = interpolate(field, &x)?;
        for c in 0..m {
            values[a * m + c] = (u[c] - u_at_x0[c]) / lambda;
        }
    }
    let mut out = GraphField::zeros(target, m);
    out.values_mut().copy_from_slice(&values);
    out.refresh_boundary_data();
    Ok(out)
}

/// Density profile σ(r) = area(graph ∩ B_r(p)) / (ω_n rⁿ).
#[derive(Debug, Clone)]
pub struct DensityProfile {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Quadrature-error surrogate: graph mass within one (graph) cell
    /// diagonal of the sphere, normalized by ω_n rⁿ.
    pub errors: Vec<f64>,
    pub omega_n: f64,
}

impl DensityProfile {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "r,sigma,err")?;
        for k in 0..self.radii.len() {
            writeln!(
                w,
                "{},{},{}",
                crate::fmt_f64(self.radii[k]),
                crate::fmt_f64(self.ratios[k]),
                crate::fmt_f64(self.errors[k]),
            )?;
        }
        Ok(())
    }
}

/// Node-quadrature density ratios about `p ∈ ℝ^{n+m}` at the given radii.
///
/// Errors when a ball cut reaches a lattice face of the box (the cut would
/// leave the represented domain); interior mask holes are allowed and show
/// up inside the reported quadrature error instead.
pub fn density_ratio(field: &GraphField, p: &[f64], radii: &[f64]) -> Result<DensityProfile> {
    let grid = field.grid();
    let n = grid.dim();
    let m = field.codim();
    if p.len() != n + m {
        return Err(CoreError::InvalidParameter(format!(
            "center has {} coordinates, expected n+m = {}",
            p.len(),
            n + m
        )));
    }
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "radii must be positive and strictly increasing".into(),
        ));
    }
    let j = jet(field)?;
    let metric = induced_metric(&j)?;
    let n_active = grid.active_count();

    // graph-space distance of each node to p
    let dist: Vec<f64> = (0..n_active)
        .map(|a| {
            let x = grid.coords(a);
            let u = field.value(a);
            let mut s = 0.0;
            for i in 0..n {
                s += (x[i] - p[i]) * (x[i] - p[i]);
            }
            for c in 0..m {
                s += (u[c] - p[n + c]) * (u[c] - p[n + c]);
            }
            s.sqrt()
        })
        .collect();

    let eta = exec::par_max(n_active, |a| j.grad_sq(a)).max(0.0);
    let h_graph = {
        let hh: f64 = grid.spacing().iter().map(|h| h * h).sum();
        (hh * (1.0 + eta)).sqrt()
    };

    let on_face = |a: usize| -> bool {
        let idx = grid.index_tuple(a);
        (0..n).any(|i| idx[i] == 0 || idx[i] == grid.resolution()[i] - 1)
    };

    let vol = grid.cell_volume();
    let wn = omega_n(n);
    let mut ratios = Vec::with_capacity(radii.len());
    let mut errors = Vec::with_capacity(radii.len());
    for &r in radii {
        for a in 0..n_active {
            if dist[a] < r && on_face(a) {
                return Err(CoreError::RadiusLeavesDomain(r));
            }
        }
        let mass = exec::par_sum(n_active, |a| {
            if dist[a] < r {
                grid.quad_weight(a) * metric.sqrt_g(a)
            } else {
                0.0
            }
        }) * vol;
        let shell = exec::par_sum(n_active, |a| {
            if (dist[a] - r).abs() <= h_graph {
                grid.quad_weight(a) * metric.sqrt_g(a)
            } else {
                0.0
            }
        }) * vol;
        let denom = wn * r.powi(n as i32);
        ratios.push(mass / denom);
        // h · (surface measure of the cut) / (ω_n rⁿ): the shell holds the
        // mass of a 2h_graph-thick collar around the sphere
        errors.push(shell / (2.0 * denom));
    }

    Ok(DensityProfile {
        center: p.to_vec(),
        radii: radii.to_vec(),
        ratios,
        errors,
        omega_n: wn,
    })
}

/// Residual choice for refinement studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMetric {
    /// L∞ of the non-divergence residual over full-stencil interior nodes.
    NondivInf,
    /// Volume-weighted L² of the non-divergence residual.
    NondivL2,
    /// L∞ of the divergence-form residual over interior nodes.
    DivInf,
    /// Volume-weighted L² of the divergence-form residual.
    DivL2,
}

#[derive(Debug, Clone, Copy)]
pub struct RefinementRow {
    pub resolution: usize,
    pub h: f64,
    pub norm: f64,
    /// Empirical order vs the previous row; None on the first row.
    pub order: Option<f64>,
    /// Norm at the round-off floor; order is meaningless.
    pub exact: bool,
}

/// Threshold below which residuals count as exactly zero (round-off).
pub const EXACT_FLOOR: f64 = 1e-12;

/// Aggregate empirical order between the first and last non-exact rows.
pub fn aggregate_order(rows: &[RefinementRow]) -> Option<f64> {
    let valid: Vec<&RefinementRow> = rows.iter().filter(|r| !r.exact).collect();
    if valid.len() < 2 {
        return None;
    }
    let first = valid[0];
    let last = valid[valid.len() - 1];
    Some((first.norm / last.norm).ln() / (first.h / last.h).ln())
}

/// Samples the scenario on each resolution and reports the chosen residual
/// norm with empirical convergence orders.
pub fn refinement_study(
    scenario: &Scenario,
    resolutions: &[usize],
    metric_kind: ResidualMetric,
) -> Result<Vec<RefinementRow>> {
    if resolutions.len() < 2 {
        return Err(CoreError::InvalidParameter(
            "refinement study needs at least 2 resolutions".into(),
        ));
    }
    let mut rows: Vec<RefinementRow> = Vec::new();
    for &res in resolutions {
        let grid = scenario.make_grid(res)?;
        let field = scenario.sample(&grid)?;
        let j = jet(&field)?;
        let met = induced_metric(&j)?;
        let norm = match metric_kind {
            ResidualMetric::NondivInf => ms_residual_nondiv(&j, &met).linf,
            ResidualMetric::NondivL2 => ms_residual_nondiv(&j, &met).l2,
            ResidualMetric::DivInf => ms_residual_div_with_jet(&field, &j, &met).linf,
            ResidualMetric::DivL2 => ms_residual_div_with_jet(&field, &j, &met).l2,
        };
        let h = grid.min_spacing();
        let order = rows.last().and_then(|prev: &RefinementRow| {
            if prev.exact || norm < EXACT_FLOOR {
                None
            } else {
                Some((prev.norm / norm).ln() / (prev.h / h).ln())
            }
        });
        rows.push(RefinementRow {
            resolution: res,
            h,
            norm,
            order,
            exact: norm < EXACT_FLOOR,
        });
    }
    Ok(rows)
}

/// Discrete subharmonicity of −ln *ω on a (numerically) stationary
/// area-decreasing graph: Δ_Σ(−ln *ω) ≥ δ·|A|²·*ω − c·h at full-stencil
/// interior nodes, with δ the area-decreasing margin.
#[derive(Debug, Clone, Copy)]
pub struct SubharmonicityReport {
    pub checked: usize,
    pub violations: usize,
    pub delta: f64,
    /// Smallest value of lhs − rhs (≥ 0 when no violations).
    pub worst_gap: f64,
}

pub fn subharmonicity_check(field: &GraphField, c: f64) -> Result<SubharmonicityReport> {
    let grid = field.grid();
    let j = jet(field)?;
    let met = induced_metric(&j)?;
    let spec = singular_spectrum(&j)?;
    let delta = spec.ad_margin.max(0.0);
    let n_active = grid.active_count();
    let neg_ln_omega: Vec<f64> = (0..n_active).map(|a| -spec.star_omega(a).ln()).collect();
    let lap = surface_laplacian(&neg_ln_omega, &met);
    let frame = FrameField::new(&j, &met);
    let a2 = second_fundamental_norm(&j, &met, &frame);
    let h = grid.min_spacing();

    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    for &a in grid.interior_nodes() {
        let a = a as usize;
        if !grid.has_full_stencil(a) {
            continue;
        }
        checked += 1;
        let lhs = lap[a];
        let rhs = delta * a2[a] * spec.star_omega(a) - c * h;
        worst = worst.min(lhs - rhs);
        if lhs < rhs {
            violations += 1;
        }
    }
    Ok(SubharmonicityReport {
        checked,
        violations,
        delta,
        worst_gap: worst,
    })
}
