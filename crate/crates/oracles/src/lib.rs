//! Slow, direct reference computations for cross-checking the main crate.
//!
//! Nothing here shares code with `discrepancy-core`; every routine follows the
//! textbook definition as literally as practical.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Star discrepancy restricted to corners on the grid `{k / 2^bits}` (plus the
/// closed boxes at those corners), for points given as integers `a / 2^bits`.
///
/// For points on the grid this is the exact star discrepancy.
pub fn star_on_grid(points: &[Vec<u32>], bits: u32) -> f64 {
    let d = points[0].len();
    let m = 1usize << bits;
    let n = points.len() as f64;
    let scale = 1.0 / m as f64;
    let mut best = 0.0f64;
    match d {
        1 => {
            let mut hist = vec![0u32; m + 1];
            for p in points {
                hist[p[0] as usize] += 1;
            }
            let mut below = 0u32;
            for i in 0..=m {
                let x = i as f64 * scale;
                let closed = below + hist[i];
                best = best.max(n * x - below as f64).max(closed as f64 - n * x);
                below = closed;
            }
        }
        2 => {
            // cum[i][j] = #{p : p_0 < i, p_1 < j}
            let w = m + 2;
            let mut cum = vec![0u32; w * w];
            for p in points {
                cum[(p[0] as usize + 1) * w + p[1] as usize + 1] += 1;
            }
            for i in 1..w {
                for j in 1..w {
                    cum[i * w + j] += cum[(i - 1) * w + j] + cum[i * w + j - 1] - cum[(i - 1) * w + j - 1];
                }
            }
            for i in 0..=m {
                for j in 0..=m {
                    let vol = (i as f64 * scale) * (j as f64 * scale);
                    let open = cum[i * w + j] as f64;
                    let closed = cum[(i + 1) * w + j + 1] as f64;
                    best = best.max(n * vol - open).max(closed - n * vol);
                }
            }
        }
        _ => panic!("star_on_grid supports d <= 2"),
    }
    best
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (three points; exact for
/// polynomials of degree five).
const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// `∫_R D_N(x) h_R(x) dx` by piecewise Gauss quadrature. The box `R` is given by
/// per-axis `(lo, hi)`; each axis is cut at the midpoint and at every point
/// coordinate, so the integrand is a polynomial on each piece.
pub fn haar_coefficient_quadrature(points: &[Vec<f64>], bounds: &[(f64, f64)]) -> f64 {
    let d = bounds.len();
    let n = points.len() as f64;
    let cuts: Vec<Vec<f64>> = (0..d)
        .map(|t| {
            let (lo, hi) = bounds[t];
            let mut c = vec![lo, 0.5 * (lo + hi), hi];
            c.extend(points.iter().map(|p| p[t]).filter(|&v| v > lo && v < hi));
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            c.dedup();
            c
        })
        .collect();
    let haar = |t: usize, x: f64| if x < 0.5 * (bounds[t].0 + bounds[t].1) { -1.0 } else { 1.0 };
    // Integrate recursively over the axes, carrying the current coordinates.
    fn rec(
        t: usize,
        x: &mut Vec<f64>,
        cuts: &[Vec<f64>],
        f: &dyn Fn(&[f64]) -> f64,
    ) -> f64 {
        if t == cuts.len() {
            return f(x);
        }
        let mut total = 0.0;
        for w in cuts[t].windows(2) {
            let (a, b) = (w[0], w[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for &(node, weight) in &GAUSS3 {
                x.push(mid + half * node);
                total += weight * half * rec(t + 1, x, cuts, f);
                x.pop();
            }
        }
        total
    }
    let integrand = |x: &[f64]| {
        let vol: f64 = x.iter().product();
        let count = points.iter().filter(|p| p.iter().zip(x).all(|(a, b)| a < b)).count() as f64;
        let h: f64 = (0..d).map(|t| haar(t, x[t])).product();
        (n * vol - count) * h
    };
    rec(0, &mut Vec::new(), &cuts, &integrand)
}

/// Monochromatic maximal cliques of size at least two, by subset search.
fn maximal_cliques(m: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<u32> {
    let adjacent = |a: usize, b: usize| edges.contains(&(a.min(b), a.max(b)));
    let cliques: Vec<u32> = (1u32..1 << m)
        .filter(|s| s.count_ones() >= 2)
        .filter(|&s| {
            (0..m).all(|a| (0..m).all(|b| a == b || s >> a & 1 == 0 || s >> b & 1 == 0 || adjacent(a, b)))
        })
        .collect();
    cliques
        .iter()
        .copied()
        .filter(|&s| !cliques.iter().any(|&t| t != s && t & s == s))
        .collect()
}

/// All admissible two-colored graphs on `m` vertices `1..=m`, by filtering every
/// pair of edge sets through the four conditions. Each graph is returned as its
/// sorted `(u, v, color)` edge list.
pub fn admissible_by_filter(m: usize) -> BTreeSet<Vec<(u32, u32, u8)>> {
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
    let subsets = |mask: u32| -> BTreeSet<(usize, usize)> {
        pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &p)| p).collect()
    };
    let mut out = BTreeSet::new();
    let total = 1u32 << pairs.len();
    for m2 in 0..total {
        let e2 = subsets(m2);
        let q2 = maximal_cliques(m, &e2);
        // (i): the edge set is exactly the union of the maximal cliques' edges,
        // (iv): those cliques are disjoint.
        let union_ok = |cl: &[u32], es: &BTreeSet<(usize, usize)>| {
            let disjoint = cl.iter().enumerate().all(|(i, a)| cl[i + 1..].iter().all(|b| a & b == 0));
            let covered: BTreeSet<(usize, usize)> = cl
                .iter()
                .flat_map(|&s| pairs.iter().copied().filter(move |&(a, b)| s >> a & 1 == 1 && s >> b & 1 == 1))
                .collect();
            disjoint && covered == *es
        };
        if !union_ok(&q2, &e2) {
            continue;
        }
        for m3 in 0..total {
            let e3 = subsets(m3);
            let q3 = maximal_cliques(m, &e3);
            if !union_ok(&q3, &e3) {
                continue;
            }
            if !q2.iter().all(|a| q3.iter().all(|b| (a & b).count_ones() <= 1)) {
                continue;
            }
            let cover = q2.iter().chain(&q3).fold(0u32, |acc, s| acc | s);
            if cover != (1 << m) - 1 {
                continue;
            }
            let mut edges: Vec<(u32, u32, u8)> = e2
                .iter()
                .map(|&(a, b)| (a as u32 + 1, b as u32 + 1, 2))
                .chain(e3.iter().map(|&(a, b)| (a as u32 + 1, b as u32 + 1, 3)))
                .collect();
            edges.sort_unstable();
            out.insert(edges);
        }
    }
    out
}

/// Number of spanning trees of the complete graph on `v` vertices, by checking
/// every `(v-1)`-subset of edges for acyclicity.
pub fn labeled_trees_bruteforce(v: usize) -> u64 {
    if v <= 1 {
        return v as u64;
    }
    let pairs: Vec<(usize, usize)> = (0..v).flat_map(|a| (a + 1..v).map(move |b| (a, b))).collect();
    let mut count = 0;
    let mut chosen = Vec::with_capacity(v - 1);
    fn rec(start: usize, need: usize, pairs: &[(usize, usize)], chosen: &mut Vec<usize>, v: usize, count: &mut u64) {
        if need == 0 {
            let mut parent: Vec<usize> = (0..v).collect();
            fn find(p: &mut Vec<usize>, x: usize) -> usize {
                let mut r = x;
                while p[r] != r {
                    r = p[r];
                }
                p[x] = r;
                r
            }
            for &i in chosen.iter() {
                let (a, b) = pairs[i];
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra == rb {
                    return;
                }
                parent[ra] = rb;
            }
            *count += 1;
            return;
        }
        for i in start..pairs.len() {
            if pairs.len() - i < need {
                break;
            }
            chosen.push(i);
            rec(i + 1, need - 1, pairs, chosen, v, count);
            chosen.pop();
        }
    }
    rec(0, v - 1, &pairs, &mut chosen, v, &mut count);
    count
}

/// Set partitions of `[v]` into `l` blocks, counted as surjections `[v] → [l]`
/// whose first occurrences appear in increasing order.
pub fn partitions_bruteforce(v: u32, l: u32) -> u64 {
    if l == 0 {
        return (v == 0) as u64;
    }
    let total = (l as u64).pow(v);
    let mut count = 0;
    for code in 0..total {
        let mut c = code;
        let mut next = 0u32;
        let mut ok = true;
        for _ in 0..v {
            let block = (c % l as u64) as u32;
            c /= l as u64;
            if block > next {
                ok = false;
                break;
            }
            if block == next {
                next += 1;
            }
        }
        if ok && next == l {
            count += 1;
        }
    }
    count
}

/// `S(v, l) = (1/l!) Σ_i (-1)^i C(l, i) (l - i)^v`.
pub fn stirling2_inclusion_exclusion(v: u32, l: u32) -> BigInt {
    let mut acc = BigInt::zero();
    let mut binom = BigInt::one();
    for i in 0..=l {
        let term = &binom * BigInt::from(l - i).pow(v);
        if i % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
        binom = binom * (l - i) / (i + 1);
    }
    let fact: BigInt = (1..=l).map(BigInt::from).product();
    acc / fact
}

/// `W_0(z)` by bisection on `w e^w = z`.
pub fn lambert_w_bisection(z: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0f64, z.max(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() < z {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest `Π_{j<=k} v_j^{v_j-2} Π_{j>k} v_j^{2v_j} / rhs` over all tuples in
/// `{2..v}^l` summing to `v`, with `rhs = (v/k)^{v-2k}` or `(v/l)^{2v}`.
pub fn lemma5_bruteforce(v: u32, l: u32, k: u32) -> BigRational {
    let rhs = if k == 0 {
        BigRational::new(BigInt::from(v).pow(2 * v), BigInt::from(l).pow(2 * v))
    } else {
        BigRational::new(BigInt::from(v).pow(v - 2 * k), BigInt::from(k).pow(v - 2 * k))
    };
    let mut best = BigRational::zero();
    let span = v - 1;
    let total = (span as u64).pow(l);
    for code in 0..total {
        let mut c = code;
        let parts: Vec<u32> = (0..l)
            .map(|_| {
                let x = (c % span as u64) as u32 + 2;
                c /= span as u64;
                x
            })
            .collect();
        if parts.iter().sum::<u32>() != v {
            continue;
        }
        let mut lhs = BigInt::one();
        for (j, &x) in parts.iter().enumerate() {
            let e = if (j as u32) < k { x - 2 } else { 2 * x };
            lhs *= BigInt::from(x).pow(e);
        }
        let r = BigRational::from_integer(lhs) / &rhs;
        if r > best {
            best = r;
        }
    }
    best
}

/// Hyperbolic vectors `(r_1, r_2, n - r_1 - r_2)` with `r_1` in `[lo, hi]`.
pub fn block_vectors(n: u32, lo: u32, hi: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for r1 in lo..=hi.min(n) {
        for r2 in 0..=n - r1 {
            out.push([r1, r2, n - r1 - r2]);
        }
    }
    out
}

/// All tuples `(r_v)` with `r_v` drawn from `collections[v]` such that every
/// constraint `(a, b, coordinate)` holds, by filtering the full product.
pub fn coincidences_bruteforce(collections: &[Vec<[u32; 3]>], constraints: &[(usize, usize, usize)]) -> Vec<Vec<[u32; 3]>> {
    let mut out = Vec::new();
    let sizes: Vec<usize> = collections.iter().map(Vec::len).collect();
    if sizes.contains(&0) {
        return out;
    }
    let mut idx = vec![0usize; collections.len()];
    loop {
        let tuple: Vec<[u32; 3]> = idx.iter().zip(collections).map(|(&i, c)| c[i]).collect();
        if constraints.iter().all(|&(a, b, t)| tuple[a][t] == tuple[b][t]) {
            out.push(tuple);
        }
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < sizes[pos] {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact `Σ_{empty R} N |R|^2 / 16` over the planar dyadic boxes of the shapes
/// `(k, n-k)`, `k = 0..=n`: a lower bound for the linear pairing with
/// sign-matched r-functions, since each empty box contributes its full
/// coefficient `N Π |J_t|^2 / 4` and occupied boxes contribute `|·| >= 0`.
pub fn empty_box_bound(points: &[[f64; 2]], n: u32) -> BigRational {
    let npts = points.len();
    let mut total = BigRational::zero();
    for k in 0..=n {
        let (k1, k2) = (k, n - k);
        let mut occupied = BTreeSet::new();
        for p in points {
            let a = (p[0] * (1u64 << k1) as f64).floor() as u64;
            let b = (p[1] * (1u64 << k2) as f64).floor() as u64;
            occupied.insert((a, b));
        }
        let empty = (1u64 << n) - occupied.len() as u64;
        let per_box = BigRational::new(BigInt::from(npts), BigInt::from(16) * (BigInt::one() << (2 * n) as usize));
        total += per_box * BigRational::from_integer(BigInt::from(empty));
    }
    total
}

/// Haar function of the dyadic interval `[a 2^{-k}, (a+1) 2^{-k})` at `x`:
/// `-1` on the left half, `+1` on the right half, `0` outside.
pub fn haar_1d(k: u32, a: u64, x: f64) -> i32 {
    let len = 1.0 / (1u64 << k) as f64;
    let lo = a as f64 * len;
    if x < lo || x >= lo + len {
        0
    } else if x < lo + len / 2.0 {
        -1
    } else {
        1
    }
}

/// Number of points strictly below `x` in every coordinate.
pub fn count_below(points: &[Vec<f64>], x: &[f64]) -> usize {
    points.iter().filter(|p| p.iter().zip(x).all(|(a, b)| a < b)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_counts() {
        assert_eq!(labeled_trees_bruteforce(4), 16);
        assert_eq!(partitions_bruteforce(4, 2), 7);
        assert_eq!(stirling2_inclusion_exclusion(4, 2), BigInt::from(7));
        assert_eq!(admissible_by_filter(2).len(), 2);
        assert!((lambert_w_bisection(std::f64::consts::E) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_single_midpoint() {
        // D(x) = x - 1_{x > 1/2}; ∫ D h = 1/4 - 1/2 for h the unit Haar function.
        let v = haar_coefficient_quadrature(&[vec![0.5]], &[(0.0, 1.0)]);
        assert!((v + 0.25).abs() < 1e-15);
        assert_eq!(star_on_grid(&[vec![2]], 2), 0.5);
    }
}
