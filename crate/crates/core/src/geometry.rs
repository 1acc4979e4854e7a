//! Pointwise algebra of the induced metric g = I + DuᵀDu: inverses and
//! determinants, singular values of Du, the projection Jacobian *ω, graph
//! area in both the determinant and singular-value-product forms, the
//! ellipticity window of gⁱʲ and the gradient/*ω implications used by the
//! flow estimates.

use std::sync::Arc;

use crate::exec;
use crate::grid::DomainGrid;
use crate::linalg;
use crate::operators::JetField;
use crate::{CoreError, GraphField, Result, MAX_DIM};

/// Relative agreement required between det-form and product-form area
/// elements at every node.
pub const AREA_FORM_TOL: f64 = 1e-10;

/// Induced metric data at every active node.
#[derive(Debug)]
pub struct MetricField {
    grid: Arc<DomainGrid>,
    g: Vec<f64>,
    g_inv: Vec<f64>,
    det_g: Vec<f64>,
    sqrt_g: Vec<f64>,
}

impl MetricField {
    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn g(&self, node: usize) -> &[f64] {
        let nn = self.grid.dim() * self.grid.dim();
        &self.g[node * nn..(node + 1) * nn]
    }

    pub fn g_inv(&self, node: usize) -> &[f64] {
        let nn = self.grid.dim() * self.grid.dim();
        &self.g_inv[node * nn..(node + 1) * nn]
    }

    pub fn det_g(&self, node: usize) -> f64 {
        self.det_g[node]
    }

    pub fn sqrt_g(&self, node: usize) -> f64 {
        self.sqrt_g[node]
    }

    /// Flat metric (g = I), the Du = 0 case.
    pub fn flat(grid: &Arc<DomainGrid>) -> MetricField {
        let n = grid.dim();
        let n_active = grid.active_count();
        let mut g = vec![0.0; n_active * n * n];
        exec::fill_slice(&mut g, n * n, |_, slot| linalg::identity(n, slot));
        MetricField {
            grid: grid.clone(),
            g_inv: g.clone(),
            g,
            det_g: vec![1.0; n_active],
            sqrt_g: vec![1.0; n_active],
        }
    }
}

/// g_ij = δ_ij + Σ_α ∂ᵢu^α ∂ⱼu^α with inverse, determinant and √g.
pub fn induced_metric(jet: &JetField) -> Result<MetricField> {
    let grid = jet.grid().clone();
    let n = grid.dim();
    let m = jet.codim();
    let n_active = grid.active_count();

    let g = exec::par_fill(n_active, n * n, 0.0, |a, slot| {
        let du = jet.du(a);
        for i in 0..n {
            for j in 0..n {
                let mut acc = if i == j { 1.0 } else { 0.0 };
                for comp in 0..m {
                    acc += du[comp * n + i] * du[comp * n + j];
                }
                slot[i * n + j] = acc;
            }
        }
    });

    let mut g_inv = vec![0.0; n_active * n * n];
    let mut det_g = vec![0.0; n_active];
    exec::fill_slice(&mut det_g, 1, |a, slot| {
        let mut inv = [0.0f64; MAX_DIM * MAX_DIM];
        match linalg::invert(n, &g[a * n * n..(a + 1) * n * n], &mut inv) {
            Ok(det) => slot[0] = det,
            Err(_) => slot[0] = f64::NAN,
        }
    });
    // second pass for the inverse (fill_slice owns disjoint slots)
    exec::fill_slice(&mut g_inv, n * n, |a, slot| {
        let mut inv = [0.0f64; MAX_DIM * MAX_DIM];
        if linalg::invert(n, &g[a * n * n..(a + 1) * n * n], &mut inv).is_ok() {
            slot.copy_from_slice(&inv[..n * n]);
        } else {
            slot.iter_mut().for_each(|v| *v = f64::NAN);
        }
    });

    if det_g.iter().any(|d| !d.is_finite() || *d < 1.0 - 1e-12) {
        return Err(CoreError::InternalInvariant(
            "induced metric determinant must be finite and >= 1".into(),
        ));
    }
    let sqrt_g: Vec<f64> = det_g.iter().map(|d| d.sqrt()).collect();

    Ok(MetricField {
        grid,
        g,
        g_inv,
        det_g,
        sqrt_g,
    })
}

/// Singular values of Du and the derived scalars.
#[derive(Debug)]
pub struct SingularSpectrum {
    grid: Arc<DomainGrid>,
    /// n singular values per node, descending.
    lambda: Vec<f64>,
    /// *ω = (∏(1+λᵢ²))^(-1/2) per node.
    star_omega: Vec<f64>,
    /// |Du|² = Σλᵢ² per node.
    grad_sq: Vec<f64>,
    /// η = max over nodes of |Du|².
    pub eta: f64,
    /// ε* = 1 − max over nodes and i<j of λᵢλⱼ.
    pub ad_margin: f64,
}

impl SingularSpectrum {
    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn lambda(&self, node: usize) -> &[f64] {
        let n = self.grid.dim();
        &self.lambda[node * n..(node + 1) * n]
    }

    pub fn star_omega(&self, node: usize) -> f64 {
        self.star_omega[node]
    }

    pub fn star_omega_all(&self) -> &[f64] {
        &self.star_omega
    }

    pub fn grad_sq(&self, node: usize) -> f64 {
        self.grad_sq[node]
    }

    /// True when the field is area-decreasing with margin at least `eps`.
    pub fn is_area_decreasing(&self, eps: f64) -> bool {
        self.ad_margin >= eps
    }
}

/// λᵢ = sqrt of the eigenvalues of DuᵀDu (cyclic Jacobi), with *ω, η and
/// the area-decreasing margin.
pub fn singular_spectrum(jet: &JetField) -> Result<SingularSpectrum> {
    let grid = jet.grid().clone();
    let n = grid.dim();
    let m = jet.codim();
    let n_active = grid.active_count();

    // eigenvalues of DuᵀDu per node, descending
    let eig = exec::par_fill(n_active, n, 0.0, |a, slot| {
        let du = jet.du(a);
        let mut b = [0.0f64; MAX_DIM * MAX_DIM];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for comp in 0..m {
                    acc += du[comp * n + i] * du[comp * n + j];
                }
                b[i * n + j] = acc;
            }
        }
        match linalg::jacobi_eigenvalues(n, &b[..n * n]) {
            Ok(e) => slot.copy_from_slice(&e[..n]),
            Err(_) => slot.iter_mut().for_each(|v| *v = f64::NAN),
        }
    });
    if eig.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::JacobiNoConvergence(linalg::JACOBI_MAX_SWEEPS));
    }

    let mut lambda = vec![0.0; n_active * n];
    let mut star_omega = vec![0.0; n_active];
    let mut grad_sq = vec![0.0; n_active];
    exec::fill_slice(&mut star_omega, 1, |a, slot| {
        let mut prod = 1.0;
        for i in 0..n {
            prod *= 1.0 + eig[a * n + i].max(0.0);
        }
        slot[0] = 1.0 / prod.sqrt();
    });
    exec::fill_slice(&mut lambda, n, |a, slot| {
        for i in 0..n {
            slot[i] = eig[a * n + i].max(0.0).sqrt();
        }
    });
    exec::fill_slice(&mut grad_sq, 1, |a, slot| {
        slot[0] = (0..n).map(|i| eig[a * n + i].max(0.0)).sum();
    });

    let eta = exec::par_max(n_active, |a| grad_sq[a]);
    // λ₁λ₂ realizes max over i<j of λᵢλⱼ (descending order).
    let max_prod = if n >= 2 {
        exec::par_max(n_active, |a| lambda[a * n] * lambda[a * n + 1])
    } else {
        0.0
    };

    Ok(SingularSpectrum {
        grid,
        lambda,
        star_omega,
        grad_sq,
        eta,
        ad_margin: 1.0 - max_prod,
    })
}

/// Trapezoidal-quadrature area of the graph, computed from √det g and
/// cross-checked per node against the singular-value product form.
pub fn area(field: &GraphField) -> Result<f64> {
    let jet = crate::operators::jet(field)?;
    let metric = induced_metric(&jet)?;
    let spectrum = singular_spectrum(&jet)?;
    area_with(&metric, &spectrum)
}

/// Area from precomputed metric and spectrum (same dual-route check).
pub fn area_with(metric: &MetricField, spectrum: &SingularSpectrum) -> Result<f64> {
    let grid = metric.grid();
    let n_active = grid.active_count();

    let worst = exec::par_max(n_active, |a| {
        let mut prod = 1.0;
        for &l in spectrum.lambda(a) {
            prod *= 1.0 + l * l;
        }
        (metric.det_g(a) - prod).abs() / metric.det_g(a)
    });
    if !(worst <= AREA_FORM_TOL) {
        return Err(CoreError::InternalInvariant(format!(
            "area elements disagree: det-form vs product-form relative gap {worst:e}"
        )));
    }
    let sum = exec::par_sum(n_active, |a| grid.quad_weight(a) * metric.sqrt_g(a));
    Ok(sum * grid.cell_volume())
}

/// Extremes over all nodes of the eigenvalues of gⁱʲ, with the ellipticity
/// window check 1/(1+η) ≤ λ ≤ 1.
pub fn ellipticity_bounds(
    metric: &MetricField,
    spectrum: &SingularSpectrum,
) -> Result<(f64, f64)> {
    let grid = metric.grid();
    let n = grid.dim();
    let n_active = grid.active_count();

    let (min_eig, max_eig) = exec::par_reduce(
        n_active,
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), a| {
            let eig = linalg::jacobi_eigenvalues(n, metric.g_inv(a))
                .unwrap_or([f64::NAN; MAX_DIM]);
            (lo.min(eig[n - 1]), hi.max(eig[0]))
        },
        |(l1, h1), (l2, h2)| (l1.min(l2), h1.max(h2)),
    );
    if !min_eig.is_finite() || !max_eig.is_finite() {
        return Err(CoreError::JacobiNoConvergence(linalg::JACOBI_MAX_SWEEPS));
    }
    let lower = 1.0 / (1.0 + spectrum.eta);
    if min_eig < lower - 1e-12 || max_eig > 1.0 + 1e-12 {
        return Err(CoreError::InternalInvariant(format!(
            "ellipticity window violated: eigenvalues in [{min_eig}, {max_eig}], \
             expected [{lower}, 1]"
        )));
    }
    Ok((min_eig, max_eig))
}

/// Outcome of the pointwise *ω / gradient implication checks.
#[derive(Debug, Clone, Copy)]
pub struct GradImplicationReport {
    pub checked: usize,
    /// Nodes where *ω > 1/√(2−δ) but |Du|² ≥ 1−δ.
    pub forward_violations: usize,
    /// Nodes where |Du| < √((2−δ)^{1/n}−1) but *ω ≤ 1/√(2−δ).
    pub backward_violations: usize,
    pub omega_threshold: f64,
    pub grad_threshold: f64,
}

impl GradImplicationReport {
    pub fn violations(&self) -> usize {
        self.forward_violations + self.backward_violations
    }
}

/// Verifies at every node: *ω > 1/√(2−δ) ⟹ |Du|² < 1−δ, and
/// |Du| < √((2−δ)^{1/n}−1) ⟹ *ω > 1/√(2−δ).
pub fn grad_implications(spectrum: &SingularSpectrum, delta: f64) -> Result<GradImplicationReport> {
    if !(0.0..1.0).contains(&delta) {
        return Err(CoreError::InvalidParameter(format!(
            "delta = {delta} outside [0, 1)"
        )));
    }
    let n = spectrum.grid().dim();
    let n_active = spectrum.grid().active_count();
    let omega_threshold = 1.0 / (2.0 - delta).sqrt();
    let grad_threshold = ((2.0 - delta).powf(1.0 / n as f64) - 1.0).sqrt();
    const SLACK: f64 = 1e-12;

    let (fwd, bwd) = exec::par_reduce(
        n_active,
        (0usize, 0usize),
        |(f, b), a| {
            let omega = spectrum.star_omega(a);
            let gsq = spectrum.grad_sq(a);
            let f2 = if omega > omega_threshold && gsq >= 1.0 - delta + SLACK {
                f + 1
            } else {
                f
            };
            let b2 = if gsq.sqrt() < grad_threshold && omega <= omega_threshold - SLACK {
                b + 1
            } else {
                b
            };
            (f2, b2)
        },
        |(f1, b1), (f2, b2)| (f1 + f2, b1 + b2),
    );

    Ok(GradImplicationReport {
        checked: n_active,
        forward_violations: fwd,
        backward_violations: bwd,
        omega_threshold,
        grad_threshold,
    })
}
