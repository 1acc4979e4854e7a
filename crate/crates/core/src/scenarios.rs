//! Built-in analytic fixtures: exact solutions, curvature oracles, and
//! seeded random area-decreasing fields.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{make_grid, BoundaryMode, DomainGrid, GraphField, MaskShape};
use crate::linalg;
use crate::{CoreError, Result, MAX_DIM};

/// Hopf map S³ → S², here as a map of two complex numbers given as
/// (re, im) pairs: η(z₁,z₂) = (|z₁|²−|z₂|², 2 z₁ conj(z₂)).
pub fn hopf_map(z1: (f64, f64), z2: (f64, f64)) -> [f64; 3] {
    let (a, b) = z1;
    let (c, d) = z2;
    // 2 z₁ conj(z₂) = 2 (a+ib)(c-id) = 2[(ac+bd) + i(bc-ad)]
    [
        a * a + b * b - c * c - d * d,
        2.0 * (a * c + b * d),
        2.0 * (b * c - a * d),
    ]
}

/// Lawson–Osserman cone u(x) = (√5/2) |x| η(x/|x|), with u(0) = 0.
///
/// Since η is quadratic this equals (√5/2) η(x)/|x|, positively
/// 1-homogeneous, Lipschitz but not C¹ at the origin.
pub fn lawson_osserman_cone(x: &[f64; 4]) -> [f64; 3] {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
    if r == 0.0 {
        return [0.0; 3];
    }
    let eta = hopf_map((x[0], x[1]), (x[2], x[3]));
    let c = 5.0f64.sqrt() / 2.0 / r;
    [c * eta[0], c * eta[1], c * eta[2]]
}

/// Qualitative flags of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioFlags {
    pub exact_minimal: bool,
    pub area_decreasing: bool,
    pub codim1: bool,
}

/// Tunable parameters accepted by [`make_scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioParams {
    /// Multiplies the map (data-scale knob); defaults per scenario.
    pub amplitude: Option<f64>,
    /// Shrinks/expands the domain box for scenarios where that is safe.
    pub scale: Option<f64>,
    /// Requested area-decreasing margin for the random scenario.
    pub eps: f64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            amplitude: None,
            scale: None,
            eps: 0.1,
            seed: 7,
        }
    }
}

type MapFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Analytic fixture: a named map with its natural domain and flags.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub boxes: Vec<(f64, f64)>,
    pub mask: Option<MaskShape>,
    pub boundary_mode: BoundaryMode,
    pub flags: ScenarioFlags,
    map: MapFn,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("flags", &self.flags)
            .finish()
    }
}

impl Scenario {
    /// Evaluates the exact map at a point.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.map)(x, out)
    }

    /// Builds the scenario's domain at `res` nodes per axis.
    pub fn make_grid(&self, res: usize) -> Result<Arc<DomainGrid>> {
        make_grid(
            self.n,
            &self.boxes,
            &vec![res; self.n],
            self.mask.clone(),
            self.boundary_mode,
        )
    }

    /// Samples the exact map on a grid.
    pub fn sample(&self, grid: &Arc<DomainGrid>) -> Result<GraphField> {
        let map = self.map.clone();
        GraphField::sample(grid, self.m, move |x, u| map(x, u))
    }
}

/// Catalogue entries as (name, summary) pairs.
pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    vec![
        ("zero", "u ≡ 0 on [0,1]², m=1; exact minimal"),
        ("affine", "fixed affine map [0,1]² → ℝ², exact minimal"),
        (
            "scherk",
            "Scherk graph log(cos y / cos x) on [-s,s]², m=1; exact minimal",
        ),
        ("sphere_cap", "hemisphere patch sqrt(1-|x|²) on [-0.5,0.5]²"),
        (
            "lo_cone",
            "Lawson–Osserman cone on the annulus 0.25<|x|<1 in ℝ⁴, m=3; exact minimal",
        ),
        ("small_bump", "a·sin(πx)sin(πy) on [0,1]², m=1 (small data)"),
        (
            "random_area_decreasing",
            "seeded band-limited field on [0,1]², m=2, rescaled to margin ε",
        ),
        (
            "torus_bump",
            "periodic area-decreasing field on the unit 2-torus, m=2",
        ),
    ]
}

/// Builds a scenario by name. Names follow the catalogue in
/// [`list_scenarios`].
pub fn make_scenario(name: &str, params: &ScenarioParams) -> Result<Scenario> {
    let amp = params.amplitude;
    match name {
        "zero" => Ok(Scenario {
            name: name.into(),
            n: 2,
            m: 1,
            boxes: vec![(0.0, 1.0), (0.0, 1.0)],
            mask: None,
            boundary_mode: BoundaryMode::Dirichlet,
            flags: ScenarioFlags {
                exact_minimal: true,
                area_decreasing: true,
                codim1: true,
            },
            map: Arc::new(|_, u| u.iter_mut().for_each(|v| *v = 0.0)),
        }),
        "affine" => {
            let a = amp.unwrap_or(1.0);
            Ok(Scenario {
                name: name.into(),
                n: 2,
                m: 2,
                boxes: vec![(0.0, 1.0), (0.0, 1.0)],
                mask: None,
                boundary_mode: BoundaryMode::Dirichlet,
                flags: ScenarioFlags {
                    exact_minimal: true,
                    area_decreasing: true,
                    codim1: false,
                },
                map: Arc::new(move |x, u| {
                    u[0] = a * (0.3 * x[0] - 0.2 * x[1] + 0.05);
                    u[1] = a * (0.1 * x[0] + 0.25 * x[1] - 0.1);
                }),
            })
        }
        "scherk" => {
            let s = params.scale.unwrap_or(1.0);
            if !(s > 0.0 && s < std::f64::consts::FRAC_PI_2) {
                return Err(CoreError::InvalidParameter(
                    "scherk scale must lie in (0, π/2)".into(),
                ));
            }
            Ok(Scenario {
                name: name.into(),
                n: 2,
                m: 1,
                boxes: vec![(-s, s), (-s, s)],
                mask: None,
                boundary_mode: BoundaryMode::Dirichlet,
                flags: ScenarioFlags {
                    exact_minimal: true,
                    area_decreasing: true,
                    codim1: true,
                },
                map: Arc::new(|x, u| u[0] = (x[1].cos() / x[0].cos()).ln()),
            })
        }
        "sphere_cap" => {
            let s = params.scale.unwrap_or(0.5);
            if !(s > 0.0 && s < std::f64::consts::FRAC_1_SQRT_2) {
                return Err(CoreError::InvalidParameter(
                    "sphere_cap scale must lie in (0, 1/√2)".into(),
                ));
            }
            Ok(Scenario {
                name: name.into(),
                n: 2,
                m: 1,
                boxes: vec![(-s, s), (-s, s)],
                mask: None,
                boundary_mode: BoundaryMode::Dirichlet,
                flags: ScenarioFlags {
                    exact_minimal: false,
                    area_decreasing: true,
                    codim1: true,
                },
                map: Arc::new(|x, u| u[0] = (1.0 - x[0] * x[0] - x[1] * x[1]).sqrt()),
            })
        }
        "lo_cone" => Ok(Scenario {
            name: name.into(),
            n: 4,
            m: 3,
            boxes: vec![(-1.0, 1.0); 4],
            mask: Some(MaskShape::Annulus {
                center: vec![0.0; 4],
                r_inner: 0.25,
                r_outer: 1.0,
            }),
            boundary_mode: BoundaryMode::Dirichlet,
            flags: ScenarioFlags {
                exact_minimal: true,
                // the LO cone is precisely the classical non-area-decreasing
                // counterexample
                area_decreasing: false,
                codim1: false,
            },
            map: Arc::new(|x, u| {
                let p = [x[0], x[1], x[2], x[3]];
                let v = lawson_osserman_cone(&p);
                u.copy_from_slice(&v);
            }),
        }),
        "small_bump" => {
            let a = amp.unwrap_or(1e-3);
            Ok(Scenario {
                name: name.into(),
                n: 2,
                m: 1,
                boxes: vec![(0.0, 1.0), (0.0, 1.0)],
                mask: None,
                boundary_mode: BoundaryMode::Dirichlet,
                flags: ScenarioFlags {
                    exact_minimal: false,
                    area_decreasing: true,
                    codim1: true,
                },
                map: Arc::new(move |x, u| {
                    u[0] = a
                        * (std::f64::consts::PI * x[0]).sin()
                        * (std::f64::consts::PI * x[1]).sin()
                }),
            })
        }
        "torus_bump" => {
            let a = amp.unwrap_or(0.02);
            let tau = std::f64::consts::TAU;
            Ok(Scenario {
                name: name.into(),
                n: 2,
                m: 2,
                boxes: vec![(0.0, 1.0), (0.0, 1.0)],
                mask: None,
                boundary_mode: BoundaryMode::Periodic,
                flags: ScenarioFlags {
                    exact_minimal: false,
                    area_decreasing: true,
                    codim1: false,
                },
                map: Arc::new(move |x, u| {
                    u[0] = a * (tau * x[0]).sin() * (tau * x[1]).sin();
                    u[1] = a * (tau * x[0]).cos() * (tau * x[1]).sin();
                }),
            })
        }
        "random_area_decreasing" => random_area_decreasing(params),
        other => Err(CoreError::UnknownScenario(other.into())),
    }
}

/// Band-limited random field on [0,1]², m = 2, rescaled so the
/// area-decreasing margin is at least `params.eps` with a small buffer for
/// discretization. Monotone in the amplitude, seeded, reproducible.
fn random_area_decreasing(params: &ScenarioParams) -> Result<Scenario> {
    let eps = params.eps;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CoreError::UnsatisfiableMargin(eps));
    }
    // keep a buffer between the analytic margin and the requested one so
    // that finite-difference spectra on reasonable grids also satisfy it
    let buffer = (0.5 * (1.0 - eps)).min(0.02);
    let target = 1.0 - eps - buffer;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    const K: usize = 3;
    let mut amps = [[0.0f64; K * K]; 2];
    let mut ph_x = [[0.0f64; K * K]; 2];
    let mut ph_y = [[0.0f64; K * K]; 2];
    for comp in 0..2 {
        for k in 0..K {
            for l in 0..K {
                let damp = 1.0 / ((k + 1) * (k + 1) + (l + 1) * (l + 1)) as f64;
                amps[comp][k * K + l] = rng.gen_range(-1.0..1.0) * damp;
                ph_x[comp][k * K + l] = rng.gen_range(0.0..std::f64::consts::TAU);
                ph_y[comp][k * K + l] = rng.gen_range(0.0..std::f64::consts::TAU);
            }
        }
    }

    let raw = move |x: &[f64], u: &mut [f64]| {
        for (comp, uc) in u.iter_mut().enumerate().take(2) {
            let mut acc = 0.0;
            for k in 0..K {
                for l in 0..K {
                    let kk = (k + 1) as f64 * std::f64::consts::PI;
                    let ll = (l + 1) as f64 * std::f64::consts::PI;
                    acc += amps[comp][k * K + l]
                        * (kk * x[0] + ph_x[comp][k * K + l]).sin()
                        * (ll * x[1] + ph_y[comp][k * K + l]).sin();
                }
            }
            *uc = acc;
        }
    };
    let raw_du = move |x: &[f64], du: &mut [f64; 4]| {
        for comp in 0..2 {
            let mut dx = 0.0;
            let mut dy = 0.0;
            for k in 0..K {
                for l in 0..K {
                    let kk = (k + 1) as f64 * std::f64::consts::PI;
                    let ll = (l + 1) as f64 * std::f64::consts::PI;
                    let a = amps[comp][k * K + l];
                    let sx = (kk * x[0] + ph_x[comp][k * K + l]).sin();
                    let cx = (kk * x[0] + ph_x[comp][k * K + l]).cos();
                    let sy = (ll * x[1] + ph_y[comp][k * K + l]).sin();
                    let cy = (ll * x[1] + ph_y[comp][k * K + l]).cos();
                    dx += a * kk * cx * sy;
                    dy += a * ll * sx * cy;
                }
            }
            du[comp * 2] = dx;
            du[comp * 2 + 1] = dy;
        }
    };

    // probe the analytic λ₁λ₂ on a fine lattice and rescale
    let probe = 129usize;
    let mut max_prod: f64 = 0.0;
    for i in 0..probe {
        for j in 0..probe {
            let x = [
                i as f64 / (probe - 1) as f64,
                j as f64 / (probe - 1) as f64,
            ];
            let mut du = [0.0f64; 4];
            raw_du(&x, &mut du);
            let mut b = [0.0f64; MAX_DIM * MAX_DIM];
            for p in 0..2 {
                for q in 0..2 {
                    b[p * 2 + q] = du[p] * du[q] + du[2 + p] * du[2 + q];
                }
            }
            let eig = linalg::jacobi_eigenvalues(2, &b[..4])?;
            max_prod = max_prod.max((eig[0].max(0.0) * eig[1].max(0.0)).sqrt());
        }
    }
    if max_prod <= 0.0 {
        return Err(CoreError::UnsatisfiableMargin(eps));
    }
    let scale = (target / max_prod).sqrt() * params.amplitude.unwrap_or(1.0);

    Ok(Scenario {
        name: "random_area_decreasing".into(),
        n: 2,
        m: 2,
        boxes: vec![(0.0, 1.0), (0.0, 1.0)],
        mask: None,
        boundary_mode: BoundaryMode::Dirichlet,
        flags: ScenarioFlags {
            exact_minimal: false,
            area_decreasing: true,
            codim1: false,
        },
        map: Arc::new(move |x, u| {
            raw(x, u);
            u[0] *= scale;
            u[1] *= scale;
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::singular_spectrum;
    use crate::operators::jet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hopf_map_axis_values() {
        assert_eq!(hopf_map((1.0, 0.0), (0.0, 0.0)), [1.0, 0.0, 0.0]);
        assert_eq!(hopf_map((0.0, 0.0), (1.0, 0.0)), [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn hopf_map_norm_identity() {
        // |η(z)| = |z|²: (|z1|²-|z2|²)² + 4|z1 z2|² = (|z1|²+|z2|²)²
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let z1 = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let z2 = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let eta = hopf_map(z1, z2);
            let eta_norm = (eta[0] * eta[0] + eta[1] * eta[1] + eta[2] * eta[2]).sqrt();
            let z_sq = z1.0 * z1.0 + z1.1 * z1.1 + z2.0 * z2.0 + z2.1 * z2.1;
            assert!((eta_norm - z_sq).abs() < 1e-12 * (1.0 + z_sq));
        }
    }

    #[test]
    fn cone_axis_value_and_homogeneity() {
        let u = lawson_osserman_cone(&[1.0, 0.0, 0.0, 0.0]);
        assert!((u[0] - 5.0f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(u[1], 0.0);
        assert_eq!(u[2], 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: [f64; 4] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let x2 = [2.0 * x[0], 2.0 * x[1], 2.0 * x[2], 2.0 * x[3]];
            let u1 = lawson_osserman_cone(&x);
            let u2 = lawson_osserman_cone(&x2);
            for c in 0..3 {
                assert!((u2[c] - 2.0 * u1[c]).abs() < 1e-12);
            }
            // |u(x)| = (√5/2)|x|
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let un = u1.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((un - 5.0f64.sqrt() / 2.0 * r).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_scenario_flags() {
        let s = make_scenario("zero", &ScenarioParams::default()).unwrap();
        assert!(s.flags.exact_minimal && s.flags.area_decreasing && s.flags.codim1);
        let g = s.make_grid(9).unwrap();
        let f = s.sample(&g).unwrap();
        assert!(f.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lo_cone_scenario_shape() {
        let s = make_scenario("lo_cone", &ScenarioParams::default()).unwrap();
        assert_eq!((s.n, s.m), (4, 3));
        assert!(s.flags.exact_minimal);
        assert!(matches!(s.mask, Some(MaskShape::Annulus { .. })));
        let g = s.make_grid(9).unwrap();
        assert!(g.node_at(&[4, 4, 4, 4]).is_none());
        let f = s.sample(&g).unwrap();
        // values match (√5/2)|x| η(x/|x|) at nodes
        for a in (0..g.active_count()).step_by(97) {
            let x = g.coords(a);
            let expect = lawson_osserman_cone(&[x[0], x[1], x[2], x[3]]);
            for c in 0..3 {
                assert_eq!(f.value(a)[c], expect[c]);
            }
        }
    }

    #[test]
    fn random_scenario_margin_is_respected() {
        let params = ScenarioParams {
            eps: 0.1,
            seed: 7,
            ..Default::default()
        };
        let s = make_scenario("random_area_decreasing", &params).unwrap();
        let g = s.make_grid(33).unwrap();
        let f = s.sample(&g).unwrap();
        let spec = singular_spectrum(&jet(&f).unwrap()).unwrap();
        assert!(
            spec.ad_margin >= 0.1,
            "margin {} below requested 0.1",
            spec.ad_margin
        );
        // reproducibility
        let s2 = make_scenario("random_area_decreasing", &params).unwrap();
        let f2 = s2.sample(&g).unwrap();
        assert_eq!(f.max_diff(&f2), 0.0);
    }

    #[test]
    fn codim1_scenarios_are_area_decreasing() {
        for name in ["zero", "scherk", "sphere_cap", "small_bump"] {
            let s = make_scenario(name, &ScenarioParams::default()).unwrap();
            assert_eq!(s.m, 1);
            assert!(s.flags.codim1 && s.flags.area_decreasing);
            let g = s.make_grid(17).unwrap();
            let f = s.sample(&g).unwrap();
            let spec = singular_spectrum(&jet(&f).unwrap()).unwrap();
            // λ₂ of the rank-one DuᵀDu is √(rounding): allow ~1e-7 slack
            assert!(
                spec.ad_margin > 1.0 - 1e-6,
                "{name}: codim-1 margin {}",
                spec.ad_margin
            );
        }
    }

    #[test]
    fn unknown_scenario_rejected() {
        assert!(matches!(
            make_scenario("nope", &ScenarioParams::default()),
            Err(CoreError::UnknownScenario(_))
        ));
    }

    #[test]
    fn unsatisfiable_margin_rejected() {
        let params = ScenarioParams {
            eps: 1.0,
            ..Default::default()
        };
        assert!(make_scenario("random_area_decreasing", &params).is_err());
    }
}
