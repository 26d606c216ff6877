use proptest::prelude::*;

use rspbe::kernel::split_reference;
use rspbe::rs::Part;
use rspbe::validation::compare;
use rspbe::*;

fn cp(n: usize, rank: usize) -> impl Strategy<Value = CanonicalTensor3<f64>> {
    (
        prop::collection::vec(0.1f64..2.0, rank),
        prop::collection::vec(-1.0f64..1.0, 3 * n * rank),
    )
        .prop_map(move |(w, v)| {
            let f = [0, 1, 2].map(|l| v[l * n * rank..(l + 1) * n * rank].to_vec());
            CanonicalTensor3::new([n; 3], w, f).unwrap()
        })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let s = max_abs(b).max(1e-300);
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * s)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn canonical_entries_match_dense(t in (1usize..4).prop_flat_map(|r| cp(5, r))) {
        let d = t.to_dense();
        let g = Grid3::new(1.0f64, 5).unwrap();
        for (f, v) in d.iter().enumerate() {
            prop_assert!((t.eval_entry(g.unflat(f)).unwrap() - v).abs() <= 1e-14);
        }
    }

    #[test]
    fn canonical_sum_is_additive(x in cp(7, 3), y in cp(7, 2), a in -2.0f64..2.0) {
        let s = CanonicalTensor3::axpy(a, &x, &y).unwrap();
        let want: Vec<f64> = x.to_dense().iter().zip(y.to_dense()).map(|(p, q)| a * p + q).collect();
        prop_assert!(close(&s.to_dense(), &want, 1e-13));
    }

    #[test]
    fn norm_is_homogeneous_and_matches_dense(x in cp(8, 4)) {
        let nx = x.frobenius_norm();
        let two = CanonicalTensor3::axpy(1.0, &x, &x).unwrap().frobenius_norm();
        prop_assert!((two - 2.0 * nx).abs() <= 1e-12 * nx);
        let dense = x.to_dense().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((nx - dense).abs() <= 1e-12 * dense);
    }

    #[test]
    fn low_rank_round_trip_is_exact(x in cp(9, 3)) {
        let tk = c2t_rhosvd(&x, 1e-13).unwrap();
        for l in 0..3 {
            prop_assert!(tk.orthogonality_defect(l) <= 1e-12);
            prop_assert!(tk.ranks()[l] <= 3);
        }
        let back = t2c(&tk, 1e-13).unwrap();
        prop_assert!(close(&back.to_dense(), &x.to_dense(), 1e-10));
    }

    #[test]
    fn kronecker_laplacian_matches_dense_stencil(x in cp(7, 2), kappa in 0.0f64..1.0) {
        let g = Grid3::new(1.5f64, 7).unwrap();
        let lap = DiscreteLaplacian::new(g, kappa).unwrap();
        let got = apply_kron_laplacian(&x, &lap).unwrap().to_dense();
        let want = lap.apply_dense(&x.to_dense());
        prop_assert!(close(&got, &want, 1e-12));
    }

    #[test]
    fn error_metric_obeys_the_triangle_inequality(
        a in prop::collection::vec(-1.0f64..1.0, 125),
        b in prop::collection::vec(-1.0f64..1.0, 125),
        c in prop::collection::vec(-1.0f64..1.0, 125),
    ) {
        let g = Grid3::new(1.0f64, 5).unwrap();
        let [fa, fb, fc] = [a, b, c].map(|v| GridFunction3::new(g, v).unwrap());
        let ab = compare(&fa, &fb, None).unwrap();
        let bc = compare(&fb, &fc, None).unwrap();
        let ac = compare(&fa, &fc, None).unwrap();
        prop_assert!(ac.discrete_l2 <= ab.discrete_l2 + bc.discrete_l2 + 1e-14);
        prop_assert!(ac.max_abs <= ab.max_abs + bc.max_abs + 1e-14);
        prop_assert!(ab.is_well_formed());
        prop_assert!(compare(&fa, &fa, None).unwrap().discrete_l2 == 0.0);
    }

    #[test]
    fn grid_coordinates_increase_and_hit_the_faces(b in 0.5f64..50.0, n in 3usize..200) {
        let g = Grid3::new(b, n).unwrap();
        prop_assert_eq!(g.coord(0), -b);
        prop_assert_eq!(g.coord(n - 1), b);
        let c = g.coords();
        prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn rs_entries_follow_the_entry_formula(
        atoms in prop::collection::vec(((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), -1.0f64..1.0), 1..5),
    ) {
        let g = Grid3::new(6.0f64, 17).unwrap();
        let k = split_reference(&ReferenceKernel::build(&g, 12).unwrap(), 4, 1e-8).unwrap();
        let m = Molecule::new(
            "p",
            atoms.iter().map(|&((x, y, z), q)| Atom { position: [x, y, z], charge: q, radius: 1.0 }).collect(),
        )
        .unwrap();
        let rs = assemble_uncompressed(&m, &k).unwrap();
        let long = rs.long().to_dense();
        let short = rs.short_dense();
        let snapped = snap_to_grid(&m, &g).unwrap();
        for (f, (l, s)) in long.iter().zip(&short).enumerate() {
            let idx = g.unflat(f);
            prop_assert!((rs.eval_entry(idx).unwrap() - (l + s)).abs() <= 1e-10);
            // Long plus short equals the full windowed sum.
            let full: f64 = m.atoms().iter().zip(&snapped)
                .map(|(a, sn)| a.charge * shift_and_window(&k, sn.index, Part::Both).unwrap().entry(idx))
                .sum();
            prop_assert!((l + s - full).abs() <= 1e-10);
        }
    }

    #[test]
    fn split_columns_partition_exactly(gamma in 1usize..12, rank in 6usize..20) {
        let g = Grid3::new(4.0f64, 17).unwrap();
        let k = ReferenceKernel::build(&g, rank).unwrap();
        let s = split_reference(&k, gamma, 1e-8).unwrap();
        let full = k.wide();
        let (l, sh) = (s.long_part().unwrap(), s.short_part().unwrap());
        prop_assert_eq!(l.rank() + sh.rank(), full.rank());
        for idx in [[0, 0, 0], [17, 17, 17], [3, 20, 33], [16, 17, 18]] {
            // Same terms, summed in two groups: equal up to reassociation.
            let want = full.entry(idx);
            prop_assert!((l.entry(idx) + sh.entry(idx) - want).abs() <= 4.0 * f64::EPSILON * want.abs());
        }
        // Larger gamma never gives more long-range columns.
        let wider = split_reference(&k, gamma + 1, 1e-8).unwrap();
        prop_assert!(wider.require_split().unwrap().long_rank <= s.require_split().unwrap().long_rank);
    }
}
