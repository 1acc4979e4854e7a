//! Direct solution of the Dirichlet problem for the minimal surface system
//! by frozen-coefficient (Picard) iteration: each outer step solves the
//! decoupled linear systems Σ gⁱʲ(Du_k) ∂²ᵢⱼ v = 0, v = ψ on ∂Ω.
//!
//! The frozen operator is assembled once per outer step into a sparse row
//! form that reproduces the finite-difference jet stencils exactly, so the
//! Picard fixed point coincides with the steady state of the explicit flow.
//! The inner solver is a damped Richardson iteration with the same
//! ellipticity-backed step bound as the flow; it is stationary,
//! deterministic, and convergent for every admissible metric.

use std::io::Write;

use crate::exec;
use crate::geometry::{induced_metric, MetricField};
use crate::grid::{BoundaryMode, DomainGrid, GraphField};
use crate::operators::{jet, ms_residual_nondiv};
use crate::{CoreError, Result};

pub const DEFAULT_INNER_TOL: f64 = 1e-11;
pub const DEFAULT_MAX_INNER: usize = 100_000;

/// Sparse rows of the frozen operator Σ gⁱʲ ∂²ᵢⱼ over interior nodes.
pub struct AssembledOperator {
    /// Interior nodes, in grid order; row k acts at `rows[k]`.
    pub rows: Vec<u32>,
    pub offsets: Vec<usize>,
    /// Active-node column indices.
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

fn d1_stencil(grid: &DomainGrid, node: usize, axis: usize) -> Vec<(usize, f64)> {
    let h = grid.spacing()[axis];
    let minus = grid.neighbor(node, axis, -1);
    let plus = grid.neighbor(node, axis, 1);
    match (minus, plus) {
        (Some(m), Some(p)) => vec![(p, 0.5 / h), (m, -0.5 / h)],
        (None, Some(p)) => match grid.neighbor(p, axis, 1) {
            Some(pp) => vec![(node, -1.5 / h), (p, 2.0 / h), (pp, -0.5 / h)],
            None => vec![(p, 1.0 / h), (node, -1.0 / h)],
        },
        (Some(m), None) => match grid.neighbor(m, axis, -1) {
            Some(mm) => vec![(node, 1.5 / h), (m, -2.0 / h), (mm, 0.5 / h)],
            None => vec![(node, 1.0 / h), (m, -1.0 / h)],
        },
        (None, None) => vec![],
    }
}

fn d2_stencil(grid: &DomainGrid, node: usize, axis: usize) -> Vec<(usize, f64)> {
    let h = grid.spacing()[axis];
    let h2 = h * h;
    let minus = grid.neighbor(node, axis, -1);
    let plus = grid.neighbor(node, axis, 1);
    match (minus, plus) {
        (Some(m), Some(p)) => vec![(p, 1.0 / h2), (node, -2.0 / h2), (m, 1.0 / h2)],
        (None, Some(p)) => match grid.neighbor(p, axis, 1) {
            Some(pp) => match grid.neighbor(pp, axis, 1) {
                Some(ppp) => vec![
                    (node, 2.0 / h2),
                    (p, -5.0 / h2),
                    (pp, 4.0 / h2),
                    (ppp, -1.0 / h2),
                ],
                None => vec![(node, 1.0 / h2), (p, -2.0 / h2), (pp, 1.0 / h2)],
            },
            None => vec![],
        },
        (Some(m), None) => match grid.neighbor(m, axis, -1) {
            Some(mm) => match grid.neighbor(mm, axis, -1) {
                Some(mmm) => vec![
                    (node, 2.0 / h2),
                    (m, -5.0 / h2),
                    (mm, 4.0 / h2),
                    (mmm, -1.0 / h2),
                ],
                None => vec![(node, 1.0 / h2), (m, -2.0 / h2), (mm, 1.0 / h2)],
            },
            None => vec![],
        },
        (None, None) => vec![],
    }
}

/// Assembles Σ gⁱʲ ∂²ᵢⱼ at every interior node by composing the same
/// first/second difference stencils the jet uses.
pub fn assemble_operator(metric: &MetricField) -> AssembledOperator {
    let grid = metric.grid();
    let n = grid.dim();
    let interior = grid.interior_nodes();

    let mut offsets = Vec::with_capacity(interior.len() + 1);
    let mut cols: Vec<u32> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    offsets.push(0);

    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(32);
    for &a in interior {
        let a = a as usize;
        let ginv = metric.g_inv(a);
        entries.clear();
        for i in 0..n {
            let gii = ginv[i * n + i];
            if gii != 0.0 {
                for (node, w) in d2_stencil(grid, a, i) {
                    entries.push((node, gii * w));
                }
            }
            for j in i + 1..n {
                let gij = ginv[i * n + j];
                if gij == 0.0 {
                    continue;
                }
                // symmetrized composition 0.5 (D_i D_j + D_j D_i), weighted
                // by 2 g^{ij} for the (i,j) and (j,i) terms together
                for (b, w1) in d1_stencil(grid, a, i) {
                    for (c, w2) in d1_stencil(grid, b, j) {
                        entries.push((c, gij * w1 * w2));
                    }
                }
                for (b, w1) in d1_stencil(grid, a, j) {
                    for (c, w2) in d1_stencil(grid, b, i) {
                        entries.push((c, gij * w1 * w2));
                    }
                }
            }
        }
        entries.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < entries.len() {
            let node = entries[k].0;
            let mut w = 0.0;
            while k < entries.len() && entries[k].0 == node {
                w += entries[k].1;
                k += 1;
            }
            if w != 0.0 {
                cols.push(node as u32);
                vals.push(w);
            }
        }
        offsets.push(cols.len());
    }

    AssembledOperator {
        rows: interior.to_vec(),
        offsets,
        cols,
        vals,
    }
}

impl AssembledOperator {
    /// Applies the operator to one component (stride `m`, offset `comp`) of
    /// a nodal vector, writing one value per interior row.
    pub fn apply(&self, values: &[f64], m: usize, comp: usize, out: &mut [f64]) {
        exec::fill_slice(out, 1, |k, slot| {
            let lo = self.offsets[k];
            let hi = self.offsets[k + 1];
            let mut acc = 0.0;
            for idx in lo..hi {
                acc += self.vals[idx] * values[self.cols[idx] as usize * m + comp];
            }
            slot[0] = acc;
        });
    }
}

/// Solves the frozen linear Dirichlet problems Σ gⁱʲ ∂²ᵢⱼ v^α = 0,
/// v^α = ψ^α on ∂Ω, warm-started from `guess` when given.
pub fn linear_solve_with_guess(
    metric: &MetricField,
    psi: &GraphField,
    guess: Option<&GraphField>,
    inner_tol: f64,
    max_inner: usize,
) -> Result<GraphField> {
    let grid = metric.grid().clone();
    if grid.boundary_mode() != BoundaryMode::Dirichlet {
        return Err(CoreError::InvalidParameter(
            "linear_solve requires dirichlet mode".into(),
        ));
    }
    let m = psi.codim();
    let op = assemble_operator(metric);

    let mut v = match guess {
        Some(g) => {
            let mut g = g.clone();
            g.pin_boundary();
            g
        }
        None => {
            // neutral start: per-component mean of the boundary data, which
            // keeps every Richardson iterate inside the data range
            let nb = grid.boundary_nodes().len().max(1);
            let mut mean = vec![0.0; m];
            for s in 0..grid.boundary_nodes().len() {
                for c in 0..m {
                    mean[c] += psi.boundary_value(s)[c] / nb as f64;
                }
            }
            let mut v = psi.clone();
            for slot in v.values_mut().chunks_mut(m) {
                slot.copy_from_slice(&mean);
            }
            v.pin_boundary();
            v
        }
    };

    let h = grid.min_spacing();
    let tau = 0.9 * h * h / (2.0 * grid.dim() as f64);
    let n_rows = op.rows.len();
    let mut r = vec![0.0f64; n_rows];

    for comp in 0..m {
        let mut iter = 0usize;
        loop {
            op.apply(v.values(), m, comp, &mut r);
            let res = exec::par_max(n_rows, |k| r[k].abs());
            if res < inner_tol {
                break;
            }
            if iter >= max_inner {
                return Err(CoreError::InnerSolveDiverged {
                    max_inner,
                    residual: res,
                });
            }
            let values = v.values_mut();
            for (k, &a) in op.rows.iter().enumerate() {
                values[a as usize * m + comp] += tau * r[k];
            }
            iter += 1;
        }
    }
    if !v.is_finite() {
        return Err(CoreError::NonFinite {
            context: "linear solve iterate",
        });
    }
    Ok(v)
}

/// Cold-started frozen-coefficient solve (see [`linear_solve_with_guess`]).
pub fn linear_solve(
    metric: &MetricField,
    psi: &GraphField,
    inner_tol: f64,
    max_inner: usize,
) -> Result<GraphField> {
    linear_solve_with_guess(metric, psi, None, inner_tol, max_inner)
}

/// Discrete harmonic extension of ψ (flat-Laplacian Dirichlet solve).
pub fn harmonic_extension(
    psi: &GraphField,
    inner_tol: f64,
    max_inner: usize,
) -> Result<GraphField> {
    let flat = MetricField::flat(psi.grid());
    linear_solve(&flat, psi, inner_tol, max_inner)
}

/// Outcome of a Picard iteration.
#[derive(Debug)]
pub struct PicardReport {
    /// Number of frozen-coefficient linear solves performed (the harmonic
    /// extension counts as the first).
    pub iterations: usize,
    pub converged: bool,
    /// (solve count, interior residual L∞ of the iterate after it).
    pub residual_history: Vec<(usize, f64)>,
    pub final_field: GraphField,
}

impl PicardReport {
    /// JSON artifact: {"iterations", "converged", "residual_history"}.
    pub fn to_json(&self) -> String {
        let mut hist = String::from("[");
        for (i, (k, r)) in self.residual_history.iter().enumerate() {
            if i > 0 {
                hist.push(',');
            }
            hist.push_str(&format!("[{},{}]", k, crate::fmt_f64(*r)));
        }
        hist.push(']');
        format!(
            "{{\"iterations\":{},\"converged\":{},\"residual_history\":{}}}",
            self.iterations, self.converged, hist
        )
    }

    pub fn write_json<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", self.to_json())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PicardParams {
    pub outer_tol: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for PicardParams {
    fn default() -> Self {
        PicardParams {
            outer_tol: 1e-10,
            max_outer: 60,
            inner_tol: DEFAULT_INNER_TOL,
            max_inner: DEFAULT_MAX_INNER,
        }
    }
}

fn interior_residual_inf(u: &GraphField) -> Result<f64> {
    let j = jet(u)?;
    let met = induced_metric(&j)?;
    Ok(ms_residual_nondiv(&j, &met).interior_inf)
}

fn picard_loop(
    mut u: GraphField,
    mut solves_done: usize,
    params: &PicardParams,
) -> Result<PicardReport> {
    let mut history: Vec<(usize, f64)> = Vec::new();
    let mut min_res = f64::INFINITY;
    loop {
        let res = interior_residual_inf(&u)?;
        history.push((solves_done, res));
        if res < params.outer_tol {
            return Ok(PicardReport {
                iterations: solves_done,
                converged: true,
                residual_history: history,
                final_field: u,
            });
        }
        // divergence guard: residual grew an order of magnitude past its best
        if res > 10.0 * min_res {
            return Ok(PicardReport {
                iterations: solves_done,
                converged: false,
                residual_history: history,
                final_field: u,
            });
        }
        min_res = min_res.min(res);
        if solves_done >= params.max_outer {
            return Ok(PicardReport {
                iterations: solves_done,
                converged: false,
                residual_history: history,
                final_field: u,
            });
        }
        let met = induced_metric(&jet(&u)?)?;
        u = linear_solve_with_guess(&met, &u, Some(&u), params.inner_tol, params.max_inner)?;
        solves_done += 1;
    }
}

/// Picard iteration u_{k+1} = solve(metric(u_k), ψ) starting from the
/// discrete harmonic extension of ψ.
pub fn picard_solve(psi: &GraphField, params: &PicardParams) -> Result<PicardReport> {
    if psi.grid().boundary_mode() != BoundaryMode::Dirichlet {
        return Err(CoreError::InvalidParameter(
            "picard_solve requires dirichlet mode".into(),
        ));
    }
    let u0 = harmonic_extension(psi, params.inner_tol, params.max_inner)?;
    picard_loop(u0, 1, params)
}

/// Picard iteration from a caller-supplied first iterate; if it already
/// meets the outer tolerance it is returned unchanged after 0 iterations.
pub fn picard_solve_from(initial: GraphField, params: &PicardParams) -> Result<PicardReport> {
    if initial.grid().boundary_mode() != BoundaryMode::Dirichlet {
        return Err(CoreError::InvalidParameter(
            "picard_solve requires dirichlet mode".into(),
        ));
    }
    picard_loop(initial, 0, params)
}
