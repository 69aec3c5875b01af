use proptest::prelude::*;
use zaremba_core::capacity::compute_capacity;
use zaremba_core::geometry::{build_grid, cantor_intervals, interior_set, mark_dirichlet, InteriorShape};
use zaremba_core::solver::{energy_ratio, solve_zaremba};
use zaremba_core::{
    BoundarySpec, CapacityOptions, CapacityProblem, Cube, Edge, FieldSource, MatrixWeight, ScalarWeight, SolveOptions,
    WeightForm, ZarembaSetup,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cantor_intervals_partition_the_prefigure(lambda in 0.05f64..0.49, k in 0usize..8) {
        let iv = cantor_intervals(lambda, k).unwrap();
        prop_assert_eq!(iv.len(), 1 << k);
        let total: f64 = iv.iter().map(|(a, b)| b - a).sum();
        prop_assert!((total - (2.0 * lambda).powi(k as i32)).abs() < 1e-12);
        for w in iv.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
        prop_assert!(iv[0].0 == -0.5 && iv[iv.len() - 1].1 == 0.5);
    }

    #[test]
    fn capacity_is_monotone_in_the_set(a in 0.1f64..0.5, grow in 0.05f64..0.4, s in -0.5f64..1.0, q in 1.4f64..2.6) {
        let grid = build_grid(Cube::new([0.0, 0.0], 1.0).unwrap(), 16).unwrap();
        let w = ScalarWeight::power([0.05, 0.05], s);
        let cap = |r: f64| {
            let k = interior_set(&grid, &InteriorShape::SubCube(Cube::new([0.0, 0.0], r).unwrap())).unwrap();
            compute_capacity(&CapacityProblem { grid, q, weight: w.clone(), k }, &CapacityOptions::default()).unwrap().value
        };
        let (small, large) = (cap(a), cap((a + grow).min(0.875)));
        prop_assert!(small <= large * (1.0 + 1e-8), "{small} > {large}");
    }

    #[test]
    fn dirichlet_split_covers_only_boundary_nodes(period in 0.1f64..1.0, m in 4usize..24) {
        let grid = build_grid(Cube::unit_square(), m).unwrap();
        let b = mark_dirichlet(&grid, &BoundarySpec::Checkerboard { period, edges: Edge::ALL.to_vec() }).unwrap();
        prop_assert!(b.dirichlet().indices().iter().all(|&i| grid.is_boundary(i)));
        prop_assert_eq!(b.dirichlet().len() + b.neumann().len(), 4 * m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn minimizer_energy_ratio_is_at_most_one(p in 1.5f64..3.5, seed in 0u64..1000) {
        let setup = ZarembaSetup {
            cube: Cube::unit_square(),
            p,
            weight: MatrixWeight::isotropic(ScalarWeight::power([0.0, 0.0], 0.5), WeightForm::Measure),
            boundary: BoundarySpec::Edges(vec![Edge::Left, Edge::Bottom]),
            data: FieldSource::RandomSmooth { modes: 2, seed, amplitude: 1.0 },
        };
        let prob = setup.discretize(12).unwrap();
        let res = solve_zaremba(&prob, &SolveOptions::default()).unwrap();
        let ratio = energy_ratio(&prob, &res).unwrap();
        prop_assert!(ratio > 0.0 && ratio <= 1.0 + 1e-8, "ratio {ratio}");
    }
}
