use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use proptest::prelude::*;

use discrepancy_core::constants;
use discrepancy_core::dyadic::{product_reduce, DyadicBox, DyadicInterval, Sign, SignedHaarAtom};
use discrepancy_core::graphs::{self, TwoColoredGraph};
use discrepancy_core::gridfn::{self, HaarExpansion, Layering, Lp};
use discrepancy_core::pointset::{self, PointSet};
use discrepancy_core::riesz::{self, SignRule};
use discrepancy_oracles as oracle;

fn point_set(d: usize, max_n: usize) -> impl Strategy<Value = PointSet> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, d), 1..=max_n)
        .prop_map(|pts| PointSet::new(&pts, "prop").unwrap())
}

fn dyadic_box(d: usize, max_level: u32) -> impl Strategy<Value = DyadicBox> {
    prop::collection::vec((0..=max_level, any::<u64>()), d).prop_map(|v| {
        let ivs: Vec<DyadicInterval> = v
            .into_iter()
            .map(|(k, a)| DyadicInterval::new(k, (a % (1u64 << k)) as i64).unwrap())
            .collect();
        DyadicBox::new(&ivs).unwrap()
    })
}

/// Strongly distinct atoms through a common point: per coordinate, `m` distinct levels.
fn sd_tuple() -> impl Strategy<Value = Vec<SignedHaarAtom>> {
    (2usize..=3)
        .prop_flat_map(|m| {
            let levels = Just((0u32..=5).collect::<Vec<_>>()).prop_shuffle();
            (
                prop::collection::vec(levels, 2),
                prop::collection::vec(0.0f64..1.0, 2),
                prop::collection::vec(any::<bool>(), m),
            )
        })
        .prop_map(|(levels, x, signs)| {
            signs
                .iter()
                .enumerate()
                .map(|(a, &s)| {
                    let ivs: Vec<DyadicInterval> = (0..2)
                        .map(|t| {
                            let k = levels[t][a];
                            DyadicInterval::new(k, discrepancy_core::dyadic::cell_of(x[t], k) as i64).unwrap()
                        })
                        .collect();
                    SignedHaarAtom::new(DyadicBox::new(&ivs).unwrap(), if s { Sign::Plus } else { Sign::Minus })
                })
                .collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_rule_is_pointwise(atoms in sd_tuple()) {
        let reduced = product_reduce(&atoms).unwrap();
        let res = [7u32, 7];
        for c0 in 0..1u64 << res[0] {
            for c1 in 0..1u64 << res[1] {
                let cell = [c0, c1];
                let direct: i8 = atoms.iter().map(|a| a.eval_cell(&res, &cell)).product();
                prop_assert_eq!(direct, reduced.eval_cell(&res, &cell));
            }
        }
    }

    #[test]
    fn r_functions_square_to_one_with_mean_zero(shape in prop::collection::vec(0u32..=4, 1..=3), seed in any::<u64>()) {
        let f = riesz::make_r_function(&shape, &SignRule::SeededRandom(seed)).unwrap();
        let g = f.materialize(&f.natural_grid().unwrap()).unwrap();
        prop_assert!(g.values().iter().all(|&v| v * v == 1));
        prop_assert!(g.integral().is_zero());
    }

    #[test]
    fn parseval_by_shape(terms in prop::collection::vec((dyadic_box(2, 4), -4i64..=4), 1..12)) {
        let f = HaarExpansion::new(2, terms.clone()).unwrap();
        let norm2 = f.materialize().unwrap().power_integral(2);
        let sf = gridfn::square_function(&f, Layering::ByShape).unwrap();
        prop_assert_eq!(Some(norm2.clone()), sf.lp_norm(Lp::Finite(2.0)).unwrap().exact_power);
        // Orthogonality of distinct boxes gives Σ_R (Σ coefficients)^2 |R|.
        let mut by_box = std::collections::HashMap::new();
        for (b, c) in &terms {
            *by_box.entry(*b).or_insert(0i64) += c;
        }
        let direct: BigRational = by_box.iter().map(|(b, c)| b.volume() * BigRational::from_integer(BigInt::from(c * c))).sum();
        prop_assert_eq!(norm2, direct);
    }

    #[test]
    fn haar_coefficient_matches_quadrature(p in point_set(2, 8), bx in dyadic_box(2, 4)) {
        let exact = pointset::haar_coefficient(&p, &bx).unwrap().to_f64().unwrap();
        let pts: Vec<Vec<f64>> = p.points().map(<[f64]>::to_vec).collect();
        let bounds: Vec<(f64, f64)> = bx.intervals().iter().map(|j| (j.left().to_f64().unwrap(), j.right().to_f64().unwrap())).collect();
        prop_assert!((exact - oracle::haar_coefficient_quadrature(&pts, &bounds)).abs() < 1e-10);
    }

    #[test]
    fn star_dominates_pointwise_and_l2(p in point_set(2, 10), x in prop::collection::vec(0.0f64..1.0, 2)) {
        let star = pointset::star_discrepancy_exact(&p).unwrap();
        let at_x = pointset::discrepancy_value(&p, &x).unwrap();
        prop_assert!(at_x.abs() <= star.exact);
        prop_assert_eq!(star.evaluate_witness(&p).abs(), star.exact.clone());
        prop_assert!(pointset::l2_discrepancy_exact(&p).squared <= &star.exact * &star.exact);
    }

    #[test]
    fn atom_certificates_are_sound(p in point_set(2, 12), bx in dyadic_box(2, 5), neg in any::<bool>()) {
        let atom = SignedHaarAtom::new(bx, if neg { Sign::Minus } else { Sign::Plus });
        let c = riesz::certify_atom(&p, &atom).unwrap();
        prop_assert!(c.lower_bound <= pointset::star_discrepancy_exact(&p).unwrap().value + 1e-9);
    }

    #[test]
    fn hyperbolic_coincidences_force_equality(n in 2u32..=9, i in any::<usize>(), j in any::<usize>()) {
        let all = riesz::hyperbolic_vectors(n, true);
        let (r, s) = (all[i % all.len()], all[j % all.len()]);
        let same = (0..3).filter(|&t| r.get(t) == s.get(t)).count();
        prop_assert!(same != 2);
        prop_assert_eq!(riesz::strongly_distinct(&r, &s), same == 0);
    }

    #[test]
    fn lambert_round_trip(z in (constants::BRANCH_POINT + 1e-9)..50.0) {
        let w = constants::lambert_w0(z).unwrap();
        prop_assert!((w * w.exp() - z).abs() <= 1e-10 * z.abs().max(1.0));
        prop_assert!((w - oracle::lambert_w_bisection(z)).abs() <= 1e-9);
    }

    #[test]
    fn stirling_matches_partition_count(v in 1u32..=9, l in 1u32..=9) {
        prop_assume!(l <= v);
        prop_assert_eq!(constants::stirling2(v, l).unwrap(), oracle::partitions_bruteforce(v, l) as u128);
    }
}

#[test]
fn coincidence_sets_match_filtered_product() {
    let graphs_: [(&[u32], &[(u32, u32, u8)]); 4] = [
        (&[1, 2], &[(1, 2, 2)]),
        (&[1, 2, 3], &[(1, 2, 2), (2, 3, 3)]),
        (&[1, 2, 3], &[(1, 2, 3), (2, 3, 3), (1, 3, 3)]),
        (&[1, 2, 3, 4], &[(1, 2, 2), (2, 3, 3), (3, 4, 2), (1, 4, 3)]),
    ];
    for (n, q) in [(6, 2), (8, 4), (7, 4)] {
        for (vs, es) in graphs_ {
            if vs.iter().any(|&v| v > q) {
                continue;
            }
            let g = TwoColoredGraph::new(vs, es).unwrap();
            let x = graphs::coincidence_set(&g, n, q).unwrap();
            let cols: Vec<Vec<[u32; 3]>> = vs
                .iter()
                .map(|&v| {
                    let (lo, hi) = riesz::index_block(n, q, v);
                    oracle::block_vectors(n, lo, hi)
                })
                .collect();
            let pos = |v: u32| vs.iter().position(|&w| w == v).unwrap();
            let cons: Vec<(usize, usize, usize)> = es.iter().map(|&(a, b, c)| (pos(a), pos(b), c as usize - 1)).collect();
            let want: BTreeSet<Vec<[u32; 3]>> = oracle::coincidences_bruteforce(&cols, &cons).into_iter().collect();
            let got: BTreeSet<Vec<[u32; 3]>> = x.tuples().map(|t| t.iter().map(|r| r.entries()).collect()).collect();
            assert_eq!(got, want, "graph {} at n = {n}, q = {q}", g.id());
        }
    }
}

#[test]
fn coincidence_product_factorizes_over_components() {
    let rule = SignRule::SeededRandom(11);
    let g1 = TwoColoredGraph::new(&[1, 2], &[(1, 2, 2)]).unwrap();
    let g2 = TwoColoredGraph::new(&[3, 4], &[(3, 4, 3)]).unwrap();
    let g = g1.disjoint_union(&g2).unwrap();
    let (n, q) = (4, 4);
    let cells = 1 << 20;
    let f = graphs::prod_x(&graphs::coincidence_set(&g, n, q).unwrap(), &rule, cells).unwrap();
    let f1 = graphs::prod_x(&graphs::coincidence_set(&g1, n, q).unwrap(), &rule, cells).unwrap();
    let f2 = graphs::prod_x(&graphs::coincidence_set(&g2, n, q).unwrap(), &rule, cells).unwrap();
    assert_eq!(f, f1.mul(&f2).unwrap());
}

#[test]
fn halasz_product_rule_matches_layers() {
    let p = pointset::generate(pointset::PointKind::Hammersley, 8, 2, None).unwrap();
    let phi = riesz::build_halasz(&p, &BigRational::new(1.into(), 2.into())).unwrap();
    let by_rule = phi.pairing_by_product_rule(&p, 1 << 12).unwrap();
    let layers = phi.layers().unwrap();
    for (k, c) in by_rule.iter().enumerate() {
        assert_eq!(*c, pointset::grid_pairing(&p, &layers.layers[k + 1]).unwrap(), "degree {}", k + 1);
    }
}
