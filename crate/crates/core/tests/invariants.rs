//! Property tests for the pointwise geometric invariants.

use proptest::prelude::*;

use graphflow_core::geometry::{
    ellipticity_bounds, grad_implications, induced_metric, singular_spectrum,
};
use graphflow_core::grid::{make_grid, BoundaryMode, GraphField};
use graphflow_core::operators::jet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trig_field(n: usize, m: usize, res: usize, amp: f64, seed: u64) -> GraphField {
    let grid = make_grid(
        n,
        &vec![(0.0, 1.0); n],
        &vec![res; n],
        None,
        BoundaryMode::Dirichlet,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefs: Vec<f64> = (0..m * n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GraphField::sample(&grid, m, |x, u| {
        for (c, uc) in u.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..2 {
                let mut term = 1.0;
                for (i, xi) in x.iter().enumerate() {
                    term *= ((k + 1) as f64 * xi + coefs[(c * n + i) * 2 + k]).sin();
                }
                acc += term;
            }
            *uc = amp * acc;
        }
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// det g = ∏(1+λᵢ²) to 1e-10 relative, det g ≥ 1, and the gⁱʲ
    /// eigenvalue window all hold on arbitrary sampled fields.
    #[test]
    fn metric_spectrum_invariants(
        n in 1usize..=3,
        m in 1usize..=3,
        amp in 0.01f64..1.0,
        seed in 0u64..10_000,
    ) {
        let res = if n == 3 { 7 } else { 11 };
        let f = trig_field(n, m, res, amp, seed);
        let j = jet(&f).unwrap();
        let met = induced_metric(&j).unwrap();
        let spec = singular_spectrum(&j).unwrap();
        for a in 0..f.grid().active_count() {
            prop_assert!(met.det_g(a) >= 1.0 - 1e-12);
            let mut prod = 1.0;
            for l in spec.lambda(a) {
                prod *= 1.0 + l * l;
            }
            prop_assert!((met.det_g(a) - prod).abs() <= 1e-10 * met.det_g(a));
            // *ω ∈ (0, 1] and equals 1 iff Du = 0 (within rounding)
            let w = spec.star_omega(a);
            prop_assert!(w > 0.0 && w <= 1.0 + 1e-15);
        }
        let (lo, hi) = ellipticity_bounds(&met, &spec).unwrap();
        prop_assert!(lo >= 1.0 / (1.0 + spec.eta) - 1e-12);
        prop_assert!(hi <= 1.0 + 1e-12);
    }

    /// Both *ω/gradient implications hold pointwise for any δ.
    #[test]
    fn omega_gradient_implications(
        m in 1usize..=2,
        amp in 0.05f64..0.9,
        seed in 0u64..10_000,
        delta in 0.0f64..0.95,
    ) {
        let f = trig_field(2, m, 11, amp, seed);
        let spec = singular_spectrum(&jet(&f).unwrap()).unwrap();
        let rep = grad_implications(&spec, delta).unwrap();
        prop_assert_eq!(rep.violations(), 0);
    }

    /// Snapshot CSV round-trips bit-exactly (17-significant-digit floats).
    #[test]
    fn snapshot_roundtrip(
        m in 1usize..=3,
        amp in 0.01f64..2.0,
        seed in 0u64..10_000,
    ) {
        let f = trig_field(2, m, 9, amp, seed);
        let mut buf = Vec::new();
        f.write_snapshot(&mut buf).unwrap();
        let mut rd = std::io::BufReader::new(&buf[..]);
        let f2 = GraphField::read_snapshot(f.grid(), &mut rd).unwrap();
        prop_assert_eq!(f.max_diff(&f2), 0.0);
    }

    /// Periodic index arithmetic wraps consistently in both directions.
    #[test]
    fn periodic_wrap_is_involutive(res in 4usize..16, axis in 0usize..2) {
        let g = make_grid(
            2,
            &[(0.0, 1.0), (0.0, 1.0)],
            &[res, res],
            None,
            BoundaryMode::Periodic,
        )
        .unwrap();
        for a in 0..g.active_count() {
            let p = g.neighbor(a, axis, 1).unwrap();
            prop_assert_eq!(g.neighbor(p, axis, -1), Some(a));
        }
    }
}
