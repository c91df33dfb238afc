use num_bigint::BigInt;
use num_rational::BigRational;

use discrepancy_oracles::*;

#[test]
fn small_counts() {
    assert_eq!(labeled_trees_bruteforce(4), 16);
    assert_eq!(labeled_trees_bruteforce(5), 125);
    assert_eq!(partitions_bruteforce(4, 2), 7);
    assert_eq!(partitions_bruteforce(5, 3), 25);
    assert_eq!(stirling2_inclusion_exclusion(6, 3), BigInt::from(90));
}

#[test]
fn lambert_fixed_points() {
    assert!((lambert_w_bisection(std::f64::consts::E) - 1.0).abs() < 1e-12);
    assert!((lambert_w_bisection(1.0) - 0.567_143_290_409_783_8).abs() < 1e-12);
    assert!(lambert_w_bisection(0.0).abs() < 1e-12);
}

#[test]
fn single_point_discrepancies() {
    // One point at the origin: the closed box [0, 0] already holds it.
    assert_eq!(star_on_grid(&[vec![0, 0]], 3), 1.0);
    // One point at (1/2, 1/2): the closed box [0, 1/2]^2 gives 1 - 1/4.
    assert_eq!(star_on_grid(&[vec![4, 4]], 3), 0.75);
    assert_eq!(count_below(&[vec![0.2, 0.7]], &[0.5, 0.8]), 1);
    assert_eq!(haar_1d(1, 1, 0.9), 1);
    assert_eq!(haar_1d(1, 1, 0.6), -1);
    assert_eq!(haar_1d(1, 1, 0.4), 0);
}

#[test]
fn composition_ratio_of_the_balanced_pair() {
    assert_eq!(lemma5_bruteforce(4, 2, 1), BigRational::from_integer(BigInt::from(1)));
}

#[test]
fn empty_box_bound_for_one_corner_point() {
    // n = 1 with N = 1: one of the two boxes of each shape is empty.
    let b = empty_box_bound(&[[0.0, 0.0]], 1);
    assert_eq!(b, BigRational::new(BigInt::from(2), BigInt::from(64)));
}
