use approx::assert_relative_eq;
use opdist::fat_graph::{fit_slope, PlusBlock};
use opdist::linalg::wnorm;
use opdist::{
    ab_operators, assemble_manifold_laplacian, defect_norm, minmax_check, que_2_defect, run_sweep,
    trace_constant_check, Error, FatPair, MetricGraph, PowerOptions, SweepOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graphs() -> Vec<MetricGraph> {
    vec![
        MetricGraph::interval(1.0).unwrap(),
        MetricGraph::star(2, 1.0).unwrap(),
        MetricGraph::star(3, 1.0).unwrap(),
        MetricGraph::star_with_lengths(&[1.0, 0.8, 1.2, 1.5]).unwrap(),
        MetricGraph::circle(2.0).unwrap(),
    ]
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn identification_is_an_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for g in graphs() {
        let fp = FatPair::new(&g, 0.1, 5).unwrap();
        let samples: Vec<_> = (0..5).map(|_| random_vec(fp.gm.dim(), &mut rng)).collect();
        assert!(fp.jstar_j_error(&samples) < 1e-10);
        for f in &samples {
            let ratio = wnorm(fp.fm.weights(), &fp.apply_j(f)) / wnorm(fp.gm.weights(), f);
            assert!((1.0 - 1e-9..=1.0 + 1e-9).contains(&ratio), "{ratio}");
        }
    }
}

#[test]
fn volume_matches_tubes_plus_blocks() {
    for g in graphs() {
        for eps in [0.2, 0.05] {
            let fm = assemble_manifold_laplacian(&g, eps, 6).unwrap();
            let blocks: f64 = (0..g.num_vertices()).map(|v| fm.block_area(v)).sum();
            let expected = g.total_length() * eps + blocks;
            assert_relative_eq!(fm.volume(), expected, max_relative = 1e-9);
        }
    }
}

#[test]
fn block_eigenvalue_is_positive_for_every_degree() {
    for d in 1..=4 {
        let (l2, _) = PlusBlock::new(d, 6).unwrap().lambda2().unwrap();
        assert!(l2 > 0.1, "degree {d}: {l2}");
    }
    assert!(matches!(PlusBlock::new(5, 6), Err(Error::Feasibility(_))));
    let g = MetricGraph::star(5, 1.0).unwrap();
    let err = assemble_manifold_laplacian(&g, 0.1, 6).unwrap_err();
    assert!(matches!(err.root(), Error::Feasibility(_)));
}

#[test]
fn strip_preconditions() {
    let g = MetricGraph::star(3, 1.0).unwrap();
    assert!(matches!(assemble_manifold_laplacian(&g, 0.3, 6), Err(Error::Contract(_))));
    assert!(matches!(assemble_manifold_laplacian(&g, 0.1, 3), Err(Error::Contract(_))));
}

#[test]
fn lifted_graph_functions_on_the_interval_have_no_defect() {
    // A single edge with its two end blocks is a rectangle; the lifted
    // constant is an exact eigenfunction, so defect terms stay small.
    let g = MetricGraph::interval(1.0).unwrap();
    let fp = FatPair::new(&g, 0.05, 5).unwrap();
    let d = defect_norm(&fp, &PowerOptions::default()).unwrap();
    assert!(d < 0.5, "{d}");
}

#[test]
fn defect_is_stable_under_refinement() {
    let g = MetricGraph::star(3, 1.0).unwrap();
    let opts = PowerOptions::default();
    let d4 = defect_norm(&FatPair::new(&g, 0.1, 4).unwrap(), &opts).unwrap();
    let d7 = defect_norm(&FatPair::new(&g, 0.1, 7).unwrap(), &opts).unwrap();
    assert!((d4 - d7).abs() < 0.05 * d7, "{d4} vs {d7}");
}

#[test]
fn factorisation_residual_shrinks_under_refinement() {
    let g = MetricGraph::star(3, 1.0).unwrap();
    let opts = PowerOptions::default();
    let (mut h, mut res) = (vec![], vec![]);
    for n_t in [4, 7, 13] {
        let fp = FatPair::new(&g, 0.1, n_t).unwrap();
        let ab = ab_operators(&fp, &opts).unwrap();
        // The factors reproduce the defect up to a grid error.
        assert!(ab.residual < 0.2, "{ab:?}");
        // The flux-consistent B_eps is 1/eps times the literal one.
        assert_relative_eq!(ab.b_eps_flux, ab.b_eps / 0.1, max_relative = 1e-6);
        h.push(fp.fm.hb());
        res.push(ab.residual);
    }
    let slope = fit_slope(&h, &res).unwrap();
    assert!(slope > 0.4, "residual slope in h: {slope}");
}

#[test]
fn quasi_unitarity_defect_dominates_nothing_on_range() {
    let g = MetricGraph::star(3, 1.0).unwrap();
    let fp = FatPair::new(&g, 0.1, 5).unwrap();
    let d = que_2_defect(&fp, &PowerOptions::default()).unwrap();
    assert!(d > 0.0 && d < 1.0);
}

#[test]
fn small_sweep_is_monotone_and_deterministic() {
    let g = MetricGraph::star(3, 1.0).unwrap();
    let opts = SweepOptions {
        n_t: 5,
        k: 3,
        seed: 42,
    };
    let a = run_sweep(&g, &[0.05, 0.2, 0.1], &opts).unwrap();
    assert!(a.all_ok());
    assert_eq!(a.rows.iter().map(|r| r.eps).collect::<Vec<_>>(), vec![0.2, 0.1, 0.05]);
    for w in a.rows.windows(2) {
        assert!(w[1].defect_norm <= 1.05 * w[0].defect_norm);
        assert!(w[1].a_eps <= 1.05 * w[0].a_eps);
        assert!(w[1].delta_eps <= 1.05 * w[0].delta_eps);
    }
    for r in &a.rows {
        assert!(r.delta >= r.defect_norm - 1e-9);
        assert!(r.jstar_j_error < 1e-10);
    }
    let b = run_sweep(&g, &[0.2, 0.1, 0.05], &opts).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.csv_header().starts_with("eps,defect_norm,a_eps,b_eps,a0,b0,delta,eig_gap_1"));
}

#[test]
fn single_edge_sweep_has_no_spread() {
    let g = MetricGraph::interval(1.0).unwrap();
    let r = run_sweep(&g, &[0.2, 0.1], &SweepOptions { n_t: 4, k: 2, seed: 1 }).unwrap();
    assert!(r.all_ok());
    assert_relative_eq!(r.rows[1].eig_eps[1], (std::f64::consts::PI / 1.4).powi(2), max_relative = 1e-2);
}

#[test]
fn trace_inequality_and_extremal() {
    let r = trace_constant_check(1.0, 200, 2001, 3).unwrap();
    assert_eq!(r.passed, 200);
    assert!(r.max_ratio <= 1.0);
    assert_relative_eq!(r.constant_function_ratio, 0.5f64.tanh(), max_relative = 1e-12);
    let expected = 1.0f64.cosh() / (1.0 + 1.0f64.cosh());
    assert_relative_eq!(r.extremal_ratio, expected, max_relative = 1e-5);
}

#[test]
fn minmax_equality_on_eigenfunction() {
    let g = MetricGraph::star_with_lengths(&[1.0, 1.0, 1.0, 1.0]).unwrap();
    let fm = assemble_manifold_laplacian(&g, 0.1, 6).unwrap();
    let r = minmax_check(&fm, 20, 9).unwrap();
    assert_eq!(r.lambda2.keys().copied().collect::<Vec<_>>(), vec![1, 4]);
    assert_eq!(r.poincare_passed, r.trials * r.lambda2.len());
    assert!((r.eigen_ratio - 1.0).abs() < 1e-9);
    assert_eq!(r.chain_passed, r.chain_trials);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn jstar_j_is_identity_on_random_stars(
        lengths in prop::collection::vec(0.6f64..1.5, 1..5),
        n_t in 4usize..7,
        seed in any::<u64>(),
    ) {
        let g = MetricGraph::star_with_lengths(&lengths).unwrap();
        let fp = FatPair::new(&g, 0.1, n_t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_vec(fp.gm.dim(), &mut rng);
        prop_assert!(fp.jstar_j_error(&[f]) < 1e-10);
        let vol: f64 = fp.fm.weights().iter().sum();
        prop_assert!((vol - fp.fm.expected_volume()).abs() < 1e-9 * vol);
    }
}

#[cfg(feature = "parallel")]
#[test]
fn results_do_not_depend_on_thread_count() {
    let pool = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let g = MetricGraph::star(3, 1.0).unwrap();
    let opts = SweepOptions {
        n_t: 4,
        k: 2,
        seed: 5,
    };
    let a = pool(1).install(|| run_sweep(&g, &[0.2, 0.1], &opts).unwrap().to_csv());
    let b = pool(4).install(|| run_sweep(&g, &[0.2, 0.1], &opts).unwrap().to_csv());
    assert_eq!(a, b);

    let fm = assemble_manifold_laplacian(&MetricGraph::star(4, 1.0).unwrap(), 0.02, 9).unwrap();
    assert!(fm.dim() >= 8192);
    let x: Vec<f64> = (0..fm.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
    let ya = pool(1).install(|| fm.stiffness().matvec(&x));
    let yb = pool(4).install(|| fm.stiffness().matvec(&x));
    assert_eq!(ya, yb);
}
