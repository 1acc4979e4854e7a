//! Finite-difference jets and the geometric differential operators on graph
//! immersions F(x) = (x, u(x)): minimal-surface residuals in divergence and
//! non-divergence form, the mean curvature vector, the squared norm of the
//! second fundamental form, and the surface Laplacian.
//!
//! Stencils are second-order central wherever the full stencil lies in the
//! active set, with one-sided second-order (then first-order) fallbacks where
//! a leg exits it. Residual norms are reported over full-stencil interior
//! nodes only; one-sided zones near masked boundaries are excluded.

use std::sync::Arc;

use crate::exec;
use crate::geometry::MetricField;
use crate::grid::{DomainGrid, GraphField};
use crate::{CoreError, Result};

/// First derivative of a scalar nodal quantity along `axis` at `node`.
///
/// Central where both neighbors exist, else one-sided second order, else
/// one-sided first order, else zero (isolated direction).
pub(crate) fn d1<F: Fn(usize) -> f64>(
    grid: &DomainGrid,
    get: &F,
    node: usize,
    axis: usize,
) -> f64 {
    let h = grid.spacing()[axis];
    let minus = grid.neighbor(node, axis, -1);
    let plus = grid.neighbor(node, axis, 1);
    match (minus, plus) {
        (Some(m), Some(p)) => (get(p) - get(m)) / (2.0 * h),
        (None, Some(p)) => match grid.neighbor(p, axis, 1) {
            Some(pp) => (-3.0 * get(node) + 4.0 * get(p) - get(pp)) / (2.0 * h),
            None => (get(p) - get(node)) / h,
        },
        (Some(m), None) => match grid.neighbor(m, axis, -1) {
            Some(mm) => (3.0 * get(node) - 4.0 * get(m) + get(mm)) / (2.0 * h),
            None => (get(node) - get(m)) / h,
        },
        (None, None) => 0.0,
    }
}

/// Pure second derivative along `axis`; same fallback ladder as [`d1`].
fn d2_axis<F: Fn(usize) -> f64>(grid: &DomainGrid, get: &F, node: usize, axis: usize) -> f64 {
    let h = grid.spacing()[axis];
    let h2 = h * h;
    let minus = grid.neighbor(node, axis, -1);
    let plus = grid.neighbor(node, axis, 1);
    match (minus, plus) {
        (Some(m), Some(p)) => (get(p) - 2.0 * get(node) + get(m)) / h2,
        (None, Some(p)) => {
            let pp = grid.neighbor(p, axis, 1);
            match pp {
                Some(pp) => match grid.neighbor(pp, axis, 1) {
                    Some(ppp) => {
                        (2.0 * get(node) - 5.0 * get(p) + 4.0 * get(pp) - get(ppp)) / h2
                    }
                    None => (get(node) - 2.0 * get(p) + get(pp)) / h2,
                },
                None => 0.0,
            }
        }
        (Some(m), None) => {
            let mm = grid.neighbor(m, axis, -1);
            match mm {
                Some(mm) => match grid.neighbor(mm, axis, -1) {
                    Some(mmm) => {
                        (2.0 * get(node) - 5.0 * get(m) + 4.0 * get(mm) - get(mmm)) / h2
                    }
                    None => (get(node) - 2.0 * get(m) + get(mm)) / h2,
                },
                None => 0.0,
            }
        }
        (None, None) => 0.0,
    }
}

/// First and second derivatives of u at every active node.
///
/// `du` holds m×n entries per node (component-major), `d2u` m×n×n entries,
/// symmetric in the two lower indices by construction.
#[derive(Debug)]
pub struct JetField {
    grid: Arc<DomainGrid>,
    m: usize,
    du: Vec<f64>,
    d2u: Vec<f64>,
}

impl JetField {
    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn codim(&self) -> usize {
        self.m
    }

    /// m×n first derivatives at `node`, laid out `[comp * n + axis]`.
    pub fn du(&self, node: usize) -> &[f64] {
        let n = self.grid.dim();
        &self.du[node * self.m * n..(node + 1) * self.m * n]
    }

    /// m×n×n second derivatives at `node`, laid out
    /// `[comp * n * n + i * n + j]`.
    pub fn d2u(&self, node: usize) -> &[f64] {
        let nn = self.grid.dim() * self.grid.dim();
        &self.d2u[node * self.m * nn..(node + 1) * self.m * nn]
    }

    /// Squared Frobenius norm of Du at `node`.
    pub fn grad_sq(&self, node: usize) -> f64 {
        self.du(node).iter().map(|v| v * v).sum()
    }

    /// Squared Frobenius norm of D2u at `node`.
    pub fn hess_sq(&self, node: usize) -> f64 {
        self.d2u(node).iter().map(|v| v * v).sum()
    }
}

/// Central/one-sided finite-difference jet of a graph field.
///
/// Cross derivatives are built by differencing the first-derivative field,
/// then symmetrizing; at full-stencil nodes this reproduces the standard
/// 4-point cross stencil exactly.
pub fn jet(field: &GraphField) -> Result<JetField> {
    if !field.is_finite() {
        return Err(CoreError::NonFinite { context: "jet input field" });
    }
    let grid = field.grid().clone();
    let n = grid.dim();
    let m = field.codim();
    let n_active = grid.active_count();
    let values = field.values();

    let du = exec::par_fill(n_active, m * n, 0.0, |a, slot| {
        for comp in 0..m {
            let get = |b: usize| values[b * m + comp];
            for axis in 0..n {
                slot[comp * n + axis] = d1(&grid, &get, a, axis);
            }
        }
    });

    let d2u = exec::par_fill(n_active, m * n * n, 0.0, |a, slot| {
        for comp in 0..m {
            let get = |b: usize| values[b * m + comp];
            for i in 0..n {
                slot[comp * n * n + i * n + i] = d2_axis(&grid, &get, a, i);
                for j in i + 1..n {
                    let dj = |b: usize| du[(b * m + comp) * n + j];
                    let di = |b: usize| du[(b * m + comp) * n + i];
                    let v = 0.5 * (d1(&grid, &dj, a, i) + d1(&grid, &di, a, j));
                    slot[comp * n * n + i * n + j] = v;
                    slot[comp * n * n + j * n + i] = v;
                }
            }
        }
    });

    Ok(JetField { grid, m, du, d2u })
}

/// Ambient jacobian of the immersion and the tangent/normal projectors.
#[derive(Debug)]
pub struct FrameField {
    grid: Arc<DomainGrid>,
    m: usize,
    /// (n+m)×n columns ∂F/∂xⁱ per node, laid out `[row * n + col]`.
    jacobian: Vec<f64>,
    /// (n+m)×(n+m) tangent projector T = J g⁻¹ Jᵀ per node.
    tangent: Vec<f64>,
    /// (n+m)×(n+m) normal projector P = I − T per node.
    normal: Vec<f64>,
}

impl FrameField {
    pub fn new(jet: &JetField, metric: &MetricField) -> FrameField {
        let grid = jet.grid().clone();
        let n = grid.dim();
        let m = jet.codim();
        let d = n + m;
        let n_active = grid.active_count();

        let jacobian = exec::par_fill(n_active, d * n, 0.0, |a, slot| {
            let du = jet.du(a);
            for i in 0..n {
                slot[i * n + i] = 1.0;
            }
            for comp in 0..m {
                for i in 0..n {
                    slot[(n + comp) * n + i] = du[comp * n + i];
                }
            }
        });

        let mut tangent = vec![0.0; n_active * d * d];
        let mut normal = vec![0.0; n_active * d * d];
        exec::fill_slice(&mut tangent, d * d, |a, slot| {
            let j = &jacobian[a * d * n..(a + 1) * d * n];
            let ginv = metric.g_inv(a);
            // T = J g⁻¹ Jᵀ
            for r in 0..d {
                for s in 0..d {
                    let mut acc = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            acc += j[r * n + p] * ginv[p * n + q] * j[s * n + q];
                        }
                    }
                    slot[r * d + s] = acc;
                }
            }
        });
        exec::fill_slice(&mut normal, d * d, |a, slot| {
            let t = &tangent[a * d * d..(a + 1) * d * d];
            for r in 0..d {
                for s in 0..d {
                    slot[r * d + s] = if r == s { 1.0 - t[r * d + s] } else { -t[r * d + s] };
                }
            }
        });

        FrameField {
            grid,
            m,
            jacobian,
            tangent,
            normal,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.grid.dim() + self.m
    }

    pub fn jacobian(&self, node: usize) -> &[f64] {
        let n = self.grid.dim();
        let d = self.ambient_dim();
        &self.jacobian[node * d * n..(node + 1) * d * n]
    }

    pub fn tangent_projector(&self, node: usize) -> &[f64] {
        let d = self.ambient_dim();
        &self.tangent[node * d * d..(node + 1) * d * d]
    }

    pub fn normal_projector(&self, node: usize) -> &[f64] {
        let d = self.ambient_dim();
        &self.normal[node * d * d..(node + 1) * d * d]
    }
}

/// Residual of the non-divergence minimal surface system
/// rᵅ = Σᵢⱼ gⁱʲ ∂²u^α/∂xⁱ∂xʲ.
#[derive(Debug)]
pub struct NondivResidual {
    /// m components per node; zero at boundary nodes.
    pub r: Vec<f64>,
    /// Volume-weighted L² norm over full-stencil interior nodes.
    pub l2: f64,
    /// Max nodal Euclidean norm over full-stencil interior nodes.
    pub linf: f64,
    /// Max nodal Euclidean norm over all interior nodes (drives the flow).
    pub interior_inf: f64,
}

pub fn ms_residual_nondiv(jet: &JetField, metric: &MetricField) -> NondivResidual {
    let grid = jet.grid();
    let n = grid.dim();
    let m = jet.codim();
    let n_active = grid.active_count();

    let r = exec::par_fill(n_active, m, 0.0, |a, slot| {
        if !grid.is_interior(a) {
            return;
        }
        let ginv = metric.g_inv(a);
        let d2 = jet.d2u(a);
        for comp in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += ginv[i * n + j] * d2[comp * n * n + i * n + j];
                }
            }
            slot[comp] = acc;
        }
    });

    let node_sq = |a: usize| -> f64 { r[a * m..(a + 1) * m].iter().map(|v| v * v).sum() };
    let vol = grid.cell_volume();
    let (l2_sq, linf_sq) = exec::par_reduce(
        n_active,
        (0.0f64, 0.0f64),
        |(s, mx), a| {
            if grid.is_interior(a) && grid.has_full_stencil(a) {
                let q = node_sq(a);
                (s + q * vol, mx.max(q))
            } else {
                (s, mx)
            }
        },
        |(s1, m1), (s2, m2)| (s1 + s2, m1.max(m2)),
    );
    let interior_inf_sq = exec::par_reduce(
        n_active,
        0.0f64,
        |mx: f64, a| if grid.is_interior(a) { mx.max(node_sq(a)) } else { mx },
        f64::max,
    );

    NondivResidual {
        r,
        l2: l2_sq.sqrt(),
        linf: linf_sq.sqrt(),
        interior_inf: interior_inf_sq.sqrt(),
    }
}

/// Residual of the divergence-form minimal surface system: n components
/// Σᵢ D⁻ᵢ(avgᵢ(√g gⁱʲ)) and m components Σᵢ D⁻ᵢ(flux of √g gⁱʲ ∂ⱼu^α),
/// with midpoint-averaged staggered fluxes.
#[derive(Debug)]
pub struct DivResidual {
    /// n+m components per node; zero at boundary nodes.
    pub r: Vec<f64>,
    pub l2: f64,
    pub linf: f64,
}

pub fn ms_residual_div(field: &GraphField, metric: &MetricField) -> Result<DivResidual> {
    let jet = jet(field)?;
    Ok(ms_residual_div_with_jet(field, &jet, metric))
}

pub fn ms_residual_div_with_jet(
    field: &GraphField,
    jet: &JetField,
    metric: &MetricField,
) -> DivResidual {
    let grid = field.grid();
    let n = grid.dim();
    let m = field.codim();
    let d = n + m;
    let n_active = grid.active_count();
    let values = field.values();
    let h = grid.spacing().to_vec();

    // coefficient √g gⁱʲ at a node
    let coef = |a: usize, i: usize, j: usize| metric.sqrt_g(a) * metric.g_inv(a)[i * n + j];

    let r = exec::par_fill(n_active, d, 0.0, |a, slot| {
        if !grid.is_interior(a) {
            return;
        }
        for axis in 0..n {
            let plus = grid.neighbor(a, axis, 1).expect("interior node");
            let minus = grid.neighbor(a, axis, -1).expect("interior node");
            // n-block: flux of the coefficient itself.
            for j in 0..n {
                let f_plus = 0.5 * (coef(a, axis, j) + coef(plus, axis, j));
                let f_minus = 0.5 * (coef(minus, axis, j) + coef(a, axis, j));
                slot[j] += (f_plus - f_minus) / h[axis];
            }
            // m-block: flux of √g gⁱʲ ∂ⱼu^α. The face gradient is the
            // forward difference along the face axis and the midpoint
            // average of the centered derivative transversally.
            for comp in 0..m {
                let mut f_plus = 0.0;
                let mut f_minus = 0.0;
                for j in 0..n {
                    let (g_plus, g_minus) = if j == axis {
                        (
                            (values[plus * m + comp] - values[a * m + comp]) / h[axis],
                            (values[a * m + comp] - values[minus * m + comp]) / h[axis],
                        )
                    } else {
                        (
                            0.5 * (jet.du(a)[comp * n + j] + jet.du(plus)[comp * n + j]),
                            0.5 * (jet.du(minus)[comp * n + j] + jet.du(a)[comp * n + j]),
                        )
                    };
                    f_plus += 0.5 * (coef(a, axis, j) + coef(plus, axis, j)) * g_plus;
                    f_minus += 0.5 * (coef(minus, axis, j) + coef(a, axis, j)) * g_minus;
                }
                slot[n + comp] += (f_plus - f_minus) / h[axis];
            }
        }
    });

    let node_sq = |a: usize| -> f64 { r[a * d..(a + 1) * d].iter().map(|v| v * v).sum() };
    let vol = grid.cell_volume();
    let (l2_sq, linf_sq) = exec::par_reduce(
        n_active,
        (0.0f64, 0.0f64),
        |(s, mx), a| {
            if grid.is_interior(a) {
                let q = node_sq(a);
                (s + q * vol, mx.max(q))
            } else {
                (s, mx)
            }
        },
        |(s1, m1), (s2, m2)| (s1 + s2, m1.max(m2)),
    );

    DivResidual {
        r,
        l2: l2_sq.sqrt(),
        linf: linf_sq.sqrt(),
    }
}

/// Mean curvature vector H = P (Σᵢⱼ gⁱʲ ∂²F/∂xⁱ∂xʲ), n+m components per
/// node. Normal to the graph by construction.
pub fn mean_curvature(jet: &JetField, metric: &MetricField, frame: &FrameField) -> Vec<f64> {
    let grid = jet.grid();
    let n = grid.dim();
    let m = jet.codim();
    let d = n + m;
    let n_active = grid.active_count();

    exec::par_fill(n_active, d, 0.0, |a, slot| {
        let ginv = metric.g_inv(a);
        let d2 = jet.d2u(a);
        // V = gⁱʲ ∂ᵢⱼF has zero horizontal part: ∂ᵢⱼF = (0, ∂ᵢⱼu).
        let mut v = [0.0f64; crate::MAX_DIM];
        for comp in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += ginv[i * n + j] * d2[comp * n * n + i * n + j];
                }
            }
            v[comp] = acc;
        }
        let p = frame.normal_projector(a);
        for r in 0..d {
            let mut acc = 0.0;
            for comp in 0..m {
                acc += p[r * d + (n + comp)] * v[comp];
            }
            slot[r] = acc;
        }
    })
}

/// Squared norm of the second fundamental form,
/// |A|² = Σ gⁱᵏ gʲˡ ⟨(∂ᵢⱼF)ᴺ, (∂ₖₗF)ᴺ⟩, one value per node.
pub fn second_fundamental_norm(
    jet: &JetField,
    metric: &MetricField,
    frame: &FrameField,
) -> Vec<f64> {
    let grid = jet.grid();
    let n = grid.dim();
    let m = jet.codim();
    let d = n + m;
    let n_active = grid.active_count();

    exec::par_fill(n_active, 1, 0.0, |a, slot| {
        let ginv = metric.g_inv(a);
        let d2 = jet.d2u(a);
        let p = frame.normal_projector(a);
        // N_ij = P (0, ∂ᵢⱼu) ∈ ℝ^{n+m}, for each of the n(n+1)/2 pairs.
        let mut nvec = [0.0f64; crate::MAX_DIM * crate::MAX_DIM * 2 * crate::MAX_DIM];
        for i in 0..n {
            for j in 0..n {
                for r in 0..d {
                    let mut acc = 0.0;
                    for comp in 0..m {
                        acc += p[r * d + (n + comp)] * d2[comp * n * n + i * n + j];
                    }
                    nvec[(i * n + j) * d + r] = acc;
                }
            }
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let gik = ginv[i * n + k];
                        let gjl = ginv[j * n + l];
                        if gik == 0.0 || gjl == 0.0 {
                            continue;
                        }
                        let mut dot = 0.0;
                        for r in 0..d {
                            dot += nvec[(i * n + j) * d + r] * nvec[(k * n + l) * d + r];
                        }
                        total += gik * gjl * dot;
                    }
                }
            }
        }
        slot[0] = total;
    })
}

/// Surface (Laplace–Beltrami) operator on a nodal scalar:
/// Δ_Σ f = (1/√g) Σᵢ D⁻ᵢ(avgᵢ(√g gⁱʲ) ∂ⱼf at the face), with the same
/// staggered fluxes as the divergence-form residual. Zero at boundary nodes.
pub fn surface_laplacian(f: &[f64], metric: &MetricField) -> Vec<f64> {
    let grid = metric.grid();
    let n = grid.dim();
    let n_active = grid.active_count();
    assert_eq!(f.len(), n_active);
    let h = grid.spacing().to_vec();

    // centered first derivatives of f everywhere (one-sided fallbacks)
    let df = exec::par_fill(n_active, n, 0.0, |a, slot| {
        let get = |b: usize| f[b];
        for axis in 0..n {
            slot[axis] = d1(grid, &get, a, axis);
        }
    });

    let coef = |a: usize, i: usize, j: usize| metric.sqrt_g(a) * metric.g_inv(a)[i * n + j];

    exec::par_fill(n_active, 1, 0.0, |a, slot| {
        if !grid.is_interior(a) {
            return;
        }
        let mut acc = 0.0;
        for axis in 0..n {
            let plus = grid.neighbor(a, axis, 1).expect("interior node");
            let minus = grid.neighbor(a, axis, -1).expect("interior node");
            let mut f_plus = 0.0;
            let mut f_minus = 0.0;
            for j in 0..n {
                let (g_plus, g_minus) = if j == axis {
                    (
                        (f[plus] - f[a]) / h[axis],
                        (f[a] - f[minus]) / h[axis],
                    )
                } else {
                    (
                        0.5 * (df[a * n + j] + df[plus * n + j]),
                        0.5 * (df[minus * n + j] + df[a * n + j]),
                    )
                };
                f_plus += 0.5 * (coef(a, axis, j) + coef(plus, axis, j)) * g_plus;
                f_minus += 0.5 * (coef(minus, axis, j) + coef(a, axis, j)) * g_minus;
            }
            acc += (f_plus - f_minus) / h[axis];
        }
        slot[0] = acc / metric.sqrt_g(a);
    })
}
