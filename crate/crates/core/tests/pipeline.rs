//! Cross-module integration: flow limits feeding the elliptic solver,
//! density monotonicity on exact fixtures, homogeneity detection, and
//! snapshot-driven restarts.

use graphflow_core::analysis::{density_ratio, rescale, rescale_with_offset};
use graphflow_core::elliptic::{picard_solve_from, PicardParams};
use graphflow_core::flow::{run_flow, FlowConfig};
use graphflow_core::grid::{make_grid, BoundaryMode, GraphField, MaskShape};
use graphflow_core::scenarios::{make_scenario, ScenarioParams};

/// σ(r) is non-decreasing in r (up to the reported quadrature error) for
/// exact minimal fixtures with on-graph centers.
#[test]
fn density_monotone_on_exact_minimal_fixtures() {
    // flat plane
    let g = make_grid(
        2,
        &[(0.0, 1.0), (0.0, 1.0)],
        &[65, 65],
        None,
        BoundaryMode::Dirichlet,
    )
    .unwrap();
    let flat = GraphField::zeros(&g, 1);
    let prof = density_ratio(&flat, &[0.5, 0.5, 0.0], &[0.15, 0.25, 0.35, 0.45]).unwrap();
    for k in 1..prof.radii.len() {
        assert!(
            prof.ratios[k] >= prof.ratios[k - 1] - (prof.errors[k] + prof.errors[k - 1]),
            "plane: σ({}) = {} < σ({}) = {}",
            prof.radii[k],
            prof.ratios[k],
            prof.radii[k - 1],
            prof.ratios[k - 1]
        );
    }

    // Scherk graph about the on-graph center (0, 0, 0)
    let s = make_scenario("scherk", &ScenarioParams::default()).unwrap();
    let gs = s.make_grid(65).unwrap();
    let scherk = s.sample(&gs).unwrap();
    let prof = density_ratio(&scherk, &[0.0, 0.0, 0.0], &[0.3, 0.5, 0.7]).unwrap();
    for k in 1..prof.radii.len() {
        assert!(
            prof.ratios[k] >= prof.ratios[k - 1] - (prof.errors[k] + prof.errors[k - 1]),
            "scherk: ratios {:?} errors {:?}",
            prof.ratios,
            prof.errors
        );
    }

    // LO cone about the vertex
    let lo = make_scenario("lo_cone", &ScenarioParams::default()).unwrap();
    let gl = lo.make_grid(17).unwrap();
    let cone = lo.sample(&gl).unwrap();
    let prof = density_ratio(&cone, &[0.0; 7], &[0.9, 1.1, 1.3]).unwrap();
    for k in 1..prof.radii.len() {
        assert!(
            prof.ratios[k] >= prof.ratios[k - 1] - (prof.errors[k] + prof.errors[k - 1]),
            "cone: ratios {:?} errors {:?}",
            prof.ratios,
            prof.errors
        );
    }
}

/// A field is 1-homogeneous about x0 iff rescaling with λ ∈ {1/2, 2} is the
/// identity; the paraboloid fails the test, the cone passes it.
#[test]
fn homogeneity_detection_classifies_cones() {
    // non-cone: u = |x|² on [-1,1]², x0 = 0
    let g = make_grid(
        2,
        &[(-1.0, 1.0), (-1.0, 1.0)],
        &[65, 65],
        None,
        BoundaryMode::Dirichlet,
    )
    .unwrap();
    let parab = GraphField::sample(&g, 1, |x, u| u[0] = x[0] * x[0] + x[1] * x[1]).unwrap();
    let target = make_grid(
        2,
        &[(-0.4, 0.4), (-0.4, 0.4)],
        &[17, 17],
        None,
        BoundaryMode::Dirichlet,
    )
    .unwrap();
    let mut max_dev: f64 = 0.0;
    for lambda in [0.5, 2.0] {
        let r = rescale(&parab, lambda, &[0.0, 0.0], &target).unwrap();
        for a in 0..target.active_count() {
            let x = target.coords(a);
            let original = x[0] * x[0] + x[1] * x[1];
            max_dev = max_dev.max((r.value(a)[0] - original).abs());
        }
    }
    assert!(max_dev > 0.05, "paraboloid wrongly classified as a cone");

    // cone: 1-homogeneous codim-1 graph u = |x| on an annulus
    let mask = MaskShape::Annulus {
        center: vec![0.0, 0.0],
        r_inner: 0.2,
        r_outer: 1.0,
    };
    let gc = make_grid(
        2,
        &[(-1.0, 1.0), (-1.0, 1.0)],
        &[129, 129],
        Some(mask.clone()),
        BoundaryMode::Dirichlet,
    )
    .unwrap();
    let cone =
        GraphField::sample(&gc, 1, |x, u| u[0] = (x[0] * x[0] + x[1] * x[1]).sqrt()).unwrap();
    let target = make_grid(
        2,
        &[(-1.0, 1.0), (-1.0, 1.0)],
        &[65, 65],
        Some(MaskShape::Annulus {
            center: vec![0.0, 0.0],
            r_inner: 0.45,
            r_outer: 0.9,
        }),
        BoundaryMode::Dirichlet,
    )
    .unwrap();
    for lambda in [0.5, 2.0] {
        // keep λ·x inside the source annulus
        let tgt = if lambda > 1.0 {
            make_grid(
                2,
                &[(-1.0, 1.0), (-1.0, 1.0)],
                &[65, 65],
                Some(MaskShape::Annulus {
                    center: vec![0.0, 0.0],
                    r_inner: 0.25,
                    r_outer: 0.45,
                }),
                BoundaryMode::Dirichlet,
            )
            .unwrap()
        } else {
            target.clone()
        };
        let r = rescale_with_offset(&cone, lambda, &[0.0, 0.0], &[0.0], &tgt).unwrap();
        let mut worst: f64 = 0.0;
        for a in 0..tgt.active_count() {
            let x = tgt.coords(a);
            let original = (x[0] * x[0] + x[1] * x[1]).sqrt();
            worst = worst.max((r.value(a)[0] - original).abs());
        }
        assert!(worst < 5e-3, "cone not scale-invariant: λ={lambda}, dev {worst}");
    }
}

/// The converged flow limit is a Picard fixed point: feeding it back into
/// the elliptic solver returns it unchanged after zero iterations.
#[test]
fn flow_limit_is_picard_fixed_point() {
    let s = make_scenario("small_bump", &ScenarioParams::default()).unwrap();
    let g = s.make_grid(17).unwrap();
    let run = run_flow(
        s.sample(&g).unwrap(),
        &FlowConfig {
            t_max: 3.0,
            residual_tol: 1e-11,
            record_every: 500,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(run.summary.converged());
    let params = PicardParams {
        outer_tol: 1e-9,
        ..Default::default()
    };
    let rep = picard_solve_from(run.state.field.clone(), &params).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.iterations, 0);
    assert_eq!(rep.final_field.max_diff(&run.state.field), 0.0);
}

/// Restarting a run from a written/re-read snapshot reproduces the direct
/// run bit-for-bit.
#[test]
fn snapshot_restart_is_bit_identical() {
    let s = make_scenario(
        "random_area_decreasing",
        &ScenarioParams {
            eps: 0.2,
            seed: 5,
            amplitude: Some(0.1),
            ..Default::default()
        },
    )
    .unwrap();
    let g = s.make_grid(17).unwrap();
    let psi = s.sample(&g).unwrap();

    let mut buf = Vec::new();
    psi.write_snapshot(&mut buf).unwrap();
    let mut rd = std::io::BufReader::new(&buf[..]);
    let psi2 = GraphField::read_snapshot(&g, &mut rd).unwrap();

    let cfg = FlowConfig {
        t_max: 0.02,
        residual_tol: 1e-13,
        record_every: 5,
        ..Default::default()
    };
    let run1 = run_flow(psi, &cfg).unwrap();
    let run2 = run_flow(psi2, &cfg).unwrap();
    assert_eq!(run1.records.len(), run2.records.len());
    assert_eq!(run1.state.field.max_diff(&run2.state.field), 0.0);
    let mut csv1 = Vec::new();
    let mut csv2 = Vec::new();
    graphflow_core::flow::write_monitor_csv(&run1.records, &mut csv1).unwrap();
    graphflow_core::flow::write_monitor_csv(&run2.records, &mut csv2).unwrap();
    assert_eq!(csv1, csv2);
}
