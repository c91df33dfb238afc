//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use discrepancy_core::constants;
use discrepancy_core::dyadic::{product_reduce, DyadicBox, DyadicInterval, Sign, SignedHaarAtom};
use discrepancy_core::graphs::{self, TwoColoredGraph};
use discrepancy_core::gridfn::{self, HaarExpansion, Layering, Lp};
use discrepancy_core::pointset::{self, PointKind, PointSet};
use discrepancy_core::riesz::{self, PsiConfig, SignRule};
use discrepancy_oracles as oracle;

const GOLDEN: &str = include_str!("golden/constants.json");

type Outcome = Result<String, String>;

fn golden() -> Value {
    serde_json::from_str(GOLDEN).expect("golden file parses")
}

fn golden_rational(key: &str) -> BigRational {
    golden()[key].as_str().expect("rational string").parse().expect("rational")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, label: &str) -> PointSet {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    PointSet::new(&pts, label).unwrap()
}

fn random_box(rng: &mut ChaCha8Rng, d: usize, max_total: u32) -> DyadicBox {
    let mut ivs = Vec::new();
    let mut left = max_total;
    for _ in 0..d {
        let k = rng.gen_range(0..=left.min(5));
        left -= k;
        ivs.push(DyadicInterval::new(k, rng.gen_range(0..1i64 << k)).unwrap());
    }
    DyadicBox::new(&ivs).unwrap()
}

fn criterion1() -> Outcome {
    let eta_ref = 1.0 / (32.0 + 4.0 * 41f64.sqrt());
    let eps_ref = (8.0 - 41f64.sqrt()) / 23.0;
    let alpha_ref = (41f64.sqrt() - 5.0) / 4.0;
    let e = constants::eta_bound();
    ensure((e.eta_closed - eta_ref).abs() <= 1e-12, || format!("eta {}", e.eta_closed))?;
    ensure((0.0..1e-6).contains(&(e.eta_closed - 0.017357)), || format!("eta {} is not 0.017357...", e.eta_closed))?;
    ensure(e.residual <= 1e-15 && e.equal, || format!("eta identity residual {}", e.residual))?;
    let opt = constants::optimize();
    ensure((opt.epsilon_max - eps_ref).abs() <= 1e-12, || format!("epsilon_max {}", opt.epsilon_max))?;
    ensure((constants::epsilon_max() - eps_ref).abs() <= 1e-12, || "closed form epsilon_max".into())?;
    let (alpha, eps) = constants::epsilon_tau_grid_max(1e-6).map_err(|e| e.to_string())?;
    ensure((alpha - alpha_ref).abs() <= 1e-5, || format!("grid argmax {alpha}"))?;
    ensure((eps - eps_ref).abs() <= 1e-7, || format!("grid max {eps}"))?;
    let g = golden();
    ensure((g["eta"].as_f64().unwrap() - e.eta_closed).abs() <= 1e-15, || "golden eta".into())?;
    ensure((g["epsilon_max"].as_f64().unwrap() - eps_ref).abs() <= 1e-15, || "golden epsilon_max".into())?;
    ensure((g["alpha_opt"].as_f64().unwrap() - alpha_ref).abs() <= 1e-15, || "golden alpha_opt".into())?;
    // The CLI reports the same numbers.
    let mut out = Vec::new();
    let code = discrepancy_lab::run(["discrepancy-lab", "constants"], &mut out);
    ensure(code == 0, || format!("constants exit code {code}"))?;
    let doc: Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    ensure(doc["eta"].as_f64() == Some(e.eta_closed), || "CLI eta".into())?;
    ensure(doc["epsilon_max"].as_f64() == Some(opt.epsilon_max), || "CLI epsilon_max".into())?;
    Ok(format!(
        "eta = {:.15}, epsilon_max = {:.15}, grid alpha = {alpha:.6} (|Δ| = {:.1e})",
        e.eta_closed,
        opt.epsilon_max,
        (alpha - alpha_ref).abs()
    ))
}

fn criterion2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut certificates = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..200 {
        let d = if i < 100 { 2 } else { 3 };
        let n = rng.gen_range(2..=32);
        let p = random_points(&mut rng, n, d, &format!("set{i}"));
        let star = pointset::star_discrepancy_exact(&p).map_err(|e| e.to_string())?.value;
        let mut bounds = Vec::new();
        for _ in 0..5 {
            let bx = random_box(&mut rng, d, 8);
            let sign = if rng.gen() { Sign::Plus } else { Sign::Minus };
            bounds.push(riesz::certify_atom(&p, &SignedHaarAtom::new(bx, sign)).map_err(|e| e.to_string())?.lower_bound);
        }
        if d == 2 {
            let phi = riesz::build_halasz(&p, &half).map_err(|e| e.to_string())?;
            bounds.push(riesz::certify_halasz(&p, &phi).map_err(|e| e.to_string())?.lower_bound);
        } else {
            for level in [4, 6] {
                let cfg = PsiConfig::with_q(level, 2, 1.0, 0.2).map_err(|e| e.to_string())?;
                let psi = riesz::build_psi(&SignRule::SignOfHaarCoefficient(&p), cfg).map_err(|e| e.to_string())?;
                let scan = psi.grid_scan_default().map_err(|e| e.to_string())?;
                bounds.push(riesz::certify_psi_sd(&p, &psi, &scan).map_err(|e| e.to_string())?.lower_bound);
            }
        }
        for b in bounds {
            certificates += 1;
            worst = worst.max(b - star);
            ensure(b <= star + 1e-9, || format!("{}: certificate {b} exceeds D* = {star}", p.label()))?;
        }
    }
    Ok(format!("{certificates} certificates on 200 sets, max(certificate - D*) = {worst:.4}"))
}

fn criterion3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    const BITS: u32 = 12;
    let mut worst = 0.0f64;
    for i in 0..50 {
        let d = 1 + i % 2;
        let n = rng.gen_range(1..=16);
        let ints: Vec<Vec<u32>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..1u32 << BITS)).collect()).collect();
        let pts: Vec<Vec<f64>> = ints
            .iter()
            .map(|q| q.iter().map(|&a| a as f64 / (1u32 << BITS) as f64).collect())
            .collect();
        let p = PointSet::new(&pts, format!("grid{i}")).unwrap();
        let exact = pointset::star_discrepancy_exact(&p).map_err(|e| e.to_string())?.value;
        let brute = oracle::star_on_grid(&ints, BITS);
        worst = worst.max((exact - brute).abs());
        ensure((exact - brute).abs() <= 1e-9, || format!("instance {i}: exact {exact} vs grid {brute}"))?;
    }
    let mut worst_q = 0.0f64;
    for i in 0..100 {
        let d = 1 + i % 3;
        let n = rng.gen_range(1..=16);
        let p = random_points(&mut rng, n, d, "q");
        let bx = random_box(&mut rng, d, 9);
        let exact = pointset::haar_coefficient(&p, &bx).map_err(|e| e.to_string())?.to_f64().unwrap();
        let pts: Vec<Vec<f64>> = p.points().map(<[f64]>::to_vec).collect();
        let bounds: Vec<(f64, f64)> = bx
            .intervals()
            .iter()
            .map(|j| (j.left().to_f64().unwrap(), j.right().to_f64().unwrap()))
            .collect();
        let quad = oracle::haar_coefficient_quadrature(&pts, &bounds);
        worst_q = worst_q.max((exact - quad).abs());
        ensure((exact - quad).abs() <= 1e-10, || format!("pair {i}: exact {exact} vs quadrature {quad}"))?;
    }
    Ok(format!("star max |Δ| = {worst:.1e} on 50 sets, Haar max |Δ| = {worst_q:.1e} on 100 pairs"))
}

fn criterion4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Product rule on strongly distinct tuples through a common point.
    for i in 0..500 {
        let m = rng.gen_range(2..=4);
        let x: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
        let mut levels = vec![Vec::new(); 3];
        for lv in levels.iter_mut() {
            let mut all: Vec<u32> = (0..=6).collect();
            all.shuffle(&mut rng);
            *lv = all[..m].to_vec();
        }
        let atoms: Vec<SignedHaarAtom> = (0..m)
            .map(|a| {
                let ivs: Vec<DyadicInterval> = (0..3)
                    .map(|t| {
                        let k = levels[t][a];
                        DyadicInterval::new(k, discrepancy_core::dyadic::cell_of(x[t], k) as i64).unwrap()
                    })
                    .collect();
                let sign = if rng.gen() { Sign::Plus } else { Sign::Minus };
                SignedHaarAtom::new(DyadicBox::new(&ivs).unwrap(), sign)
            })
            .collect();
        let reduced = product_reduce(&atoms).map_err(|e| format!("tuple {i}: {e}"))?;
        let res: Vec<u32> = (0..3).map(|t| levels[t].iter().max().unwrap() + 1).collect();
        for c0 in 0..1u64 << res[0] {
            for c1 in 0..1u64 << res[1] {
                for c2 in 0..1u64 << res[2] {
                    let cell = [c0, c1, c2];
                    let direct: i8 = atoms.iter().map(|a| a.eval_cell(&res, &cell)).product();
                    ensure(direct == reduced.eval_cell(&res, &cell), || format!("tuple {i}: cell {cell:?}"))?;
                }
            }
        }
    }
    // r-functions: f^2 = 1 and mean zero.
    for i in 0..100 {
        let d = rng.gen_range(1..=3);
        let mut shape = vec![0u32; d];
        let total = rng.gen_range(1..=12u32);
        for _ in 0..total {
            shape[rng.gen_range(0..d)] += 1;
        }
        let f = riesz::make_r_function(&shape, &SignRule::SeededRandom(rng.gen())).map_err(|e| e.to_string())?;
        let g = f.materialize(&f.natural_grid().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(g.values().iter().all(|&v| v * v == 1), || format!("r-function {i} shape {shape:?}: f^2 != 1"))?;
        ensure(g.integral().is_zero(), || format!("r-function {i} shape {shape:?}: nonzero mean"))?;
    }
    // Parseval for one-dimensional Haar sums.
    for i in 0..100 {
        let terms: Vec<(DyadicBox, i64)> = (0..rng.gen_range(1..=20))
            .map(|_| {
                let k = rng.gen_range(0..=6);
                let iv = DyadicInterval::new(k, rng.gen_range(0..1i64 << k)).unwrap();
                (DyadicBox::new(&[iv]).unwrap(), rng.gen_range(-5..=5))
            })
            .collect();
        let f = HaarExpansion::new(1, terms).map_err(|e| e.to_string())?;
        let lhs = f.materialize().map_err(|e| e.to_string())?.power_integral(2);
        let sf = gridfn::square_function(&f, Layering::ByLevel).map_err(|e| e.to_string())?;
        let rhs = sf.lp_norm(Lp::Finite(2.0)).map_err(|e| e.to_string())?.exact_power.ok_or("no exact power")?;
        ensure(lhs == rhs, || format!("sum {i}: ‖f‖² = {lhs} but ‖Sf‖² = {rhs}"))?;
    }
    Ok("500 product tuples, 100 r-functions, 100 Parseval sums exact".into())
}

fn criterion5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_points(&mut rng, 32, 3, "random(N=32,d=3)");
    let mut parts = Vec::new();
    for (n, q) in [(6, 2), (8, 2), (8, 4)] {
        let cfg = PsiConfig::with_q(n, q, 1.0, 0.2).map_err(|e| e.to_string())?;
        let psi = riesz::build_psi(&SignRule::SeededRandom(3), cfg).map_err(|e| e.to_string())?;
        let scan = psi.grid_scan_default().map_err(|e| e.to_string())?;
        ensure(scan.identity_mismatches == 0, || {
            format!("(n,q)=({n},{q}): {} cells violate the expansion identity", scan.identity_mismatches)
        })?;
        let by_rule = psi.sd_inner_product(&p).map_err(|e| e.to_string())?;
        let by_grid = scan.sd_pairing(&p, cfg.rho_tilde()).map_err(|e| e.to_string())?;
        ensure(by_rule.per_degree == by_grid.per_degree, || format!("(n,q)=({n},{q}): per-degree pairings differ"))?;
        ensure((by_rule.value - by_grid.value).abs() <= 1e-10, || {
            format!("(n,q)=({n},{q}): {} vs {}", by_rule.value, by_grid.value)
        })?;
        parts.push(format!("({n},{q}) <D,Ψsd> = {:.6}", by_rule.value));
    }
    Ok(parts.join(", "))
}

fn criterion6() -> Outcome {
    let c = golden_rational("halasz_linear_constant");
    let mut prev = BigRational::from_integer(BigInt::from(-1));
    let mut parts = Vec::new();
    for n in 4u32..=10 {
        // The planar van der Corput set {(i/N, radical inverse of i)}.
        let p = pointset::generate(PointKind::Hammersley, 1 << (n - 2), 2, None).map_err(|e| e.to_string())?;
        let rule = SignRule::SignOfHaarCoefficient(&p);
        let phi = riesz::build_halasz_with(n, &BigRational::new(BigInt::one(), BigInt::from(2)), &rule).map_err(|e| e.to_string())?;
        ensure(phi.n() == riesz::halasz_level(p.len()), || format!("level mismatch at n = {n}"))?;
        let lin = phi.linear_pairing(&p).map_err(|e| e.to_string())?;
        let pts: Vec<[f64; 2]> = p.points().map(|q| [q[0], q[1]]).collect();
        let empty = oracle::empty_box_bound(&pts, n);
        let cn = &c * BigRational::from_integer(BigInt::from(n));
        ensure(empty >= cn, || format!("n = {n}: golden constant exceeds the empty-box bound {empty}"))?;
        ensure(lin >= empty, || format!("n = {n}: pairing {lin} below the empty-box bound {empty}"))?;
        ensure(lin >= cn, || format!("n = {n}: pairing {lin} < c n"))?;
        ensure(lin > prev, || format!("n = {n}: pairing {lin} not above {prev}"))?;
        parts.push(format!("{:.4}", lin.to_f64().unwrap()));
        prev = lin;
    }
    Ok(format!("c = {c}; pairings n=4..10: {}", parts.join(" ")))
}

fn criterion7() -> Outcome {
    for m in 1..=4usize {
        let vs: Vec<u32> = (1..=m as u32).collect();
        let ours: std::collections::BTreeSet<Vec<(u32, u32, u8)>> = graphs::enumerate_admissible(&vs)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|a| {
                let mut e = a.graph.edge_list();
                e.sort_unstable();
                e
            })
            .collect();
        let filtered = oracle::admissible_by_filter(m);
        ensure(ours == filtered, || format!("|V| = {m}: {} graphs vs {} from the filter", ours.len(), filtered.len()))?;
    }
    for v in 1..=7u32 {
        let cayley = (v as u64).pow(v.saturating_sub(2));
        let cayley = if v == 1 { 1 } else { cayley };
        let brute = oracle::labeled_trees_bruteforce(v as usize);
        ensure(brute == cayley, || format!("v = {v}: {brute} spanning trees"))?;
        ensure(graphs::labeled_tree_count(v) == cayley, || format!("v = {v}: labeled_tree_count"))?;
    }
    let g = golden();
    ensure(g["admissible_count_constant"].as_f64() == Some(graphs::ADMISSIBLE_COUNT_CONSTANT), || "golden c".into())?;
    ensure(g["stirling_constant"].as_f64() == Some(constants::STIRLING_CONSTANT), || "golden Stirling C".into())?;
    for v in 2..=6 {
        let c = graphs::count_generalized_trees(v).map_err(|e| e.to_string())?;
        ensure(c.tree_bound_holds(), || format!("v = {v}: {} trees > {}", c.generalized_trees, c.tree_bound))?;
        ensure(c.admissible_bound_holds(), || format!("v = {v}: {} admissible > {}", c.admissible, c.admissible_bound))?;
    }
    ensure(constants::stirling2(4, 2).map_err(|e| e.to_string())? == 7, || "S(4,2) != 7".into())?;
    let table = constants::stirling2_table(25).map_err(|e| e.to_string())?;
    for v in 1..=25usize {
        for l in 1..=v {
            ensure(table[v][l] == l as u128 * table[v - 1][l] + table[v - 1][l - 1], || format!("recurrence at ({v},{l})"))?;
            ensure(BigInt::from(table[v][l]) == oracle::stirling2_inclusion_exclusion(v as u32, l as u32), || {
                format!("inclusion-exclusion at ({v},{l})")
            })?;
            let ratio = constants::stirling_bound_ratio(v as u32, l as u32).map_err(|e| e.to_string())?;
            ensure(ratio <= constants::STIRLING_CONSTANT, || format!("Stirling bound ratio {ratio} at ({v},{l})"))?;
        }
    }
    for v in 1..=8u32 {
        for l in 1..=v {
            ensure(oracle::partitions_bruteforce(v, l) as u128 == table[v as usize][l as usize], || format!("partitions ({v},{l})"))?;
        }
    }
    Ok("filter equality |V| <= 4, Cayley v <= 7, tree/admissible bounds v <= 6, Stirling v <= 25".into())
}

fn criterion8() -> Outcome {
    let c = golden_rational("composition_constant");
    ensure(c == constants::lemma5_constant(), || "golden constant differs from the library".into())?;
    let rows = constants::lemma5_sweep(16).map_err(|e| e.to_string())?;
    let mut best = BigRational::zero();
    for r in &rows {
        ensure(r.max_ratio_exact <= c, || format!("(v,l,k)=({},{},{}): ratio {}", r.v, r.l, r.k, r.max_ratio_exact))?;
        if r.v <= 10 {
            let brute = oracle::lemma5_bruteforce(r.v, r.l, r.k);
            ensure(brute == r.max_ratio_exact, || format!("(v,l,k)=({},{},{}): brute force {brute}", r.v, r.l, r.k))?;
        }
        best = best.max(r.max_ratio_exact.clone());
    }
    ensure(best == c, || format!("sweep maximum {best} is not the recorded constant"))?;
    let unit = constants::lemma5_verify(4, 2, 1).map_err(|e| e.to_string())?;
    ensure(unit.max_ratio_exact.is_one() && unit.argmax == [2, 2], || "(2,2), k = 1 does not give ratio 1".into())?;
    Ok(format!("{} cases, max ratio = C = (7/2)^28 ≈ {:.4e}", rows.len(), c.to_f64().unwrap()))
}

fn criterion9() -> Outcome {
    let catalog: [(&[u32], &[(u32, u32, u8)]); 6] = [
        (&[1, 2], &[(1, 2, 2)]),
        (&[1, 2], &[(1, 2, 3)]),
        (&[1, 2, 3], &[(1, 2, 2), (2, 3, 3)]),
        (&[1, 2, 3], &[(1, 2, 2), (2, 3, 2), (1, 3, 2)]),
        (&[1, 2, 3, 4], &[(1, 2, 2), (2, 4, 3), (3, 4, 2), (1, 3, 3)]),
        (&[1, 2, 3, 4], &[(1, 2, 2), (2, 3, 3), (3, 4, 2), (1, 4, 3)]),
    ];
    let rule = SignRule::SeededRandom(7);
    let (q, l, a, b) = (4, 1, 1.0, 0.2);
    let mut saw_cycle = false;
    let mut saw_empty = false;
    let mut parts = Vec::new();
    for (vs, es) in catalog {
        let g = TwoColoredGraph::new(vs, es).map_err(|e| e.to_string())?;
        ensure(graphs::check_admissible(&g).is_admissible(), || format!("{} is not admissible", g.id()))?;
        let r6 = graphs::verify_beckgain_default(&g, 6, q, l, a, b, &rule).map_err(|e| e.to_string())?;
        let r8 = graphs::verify_beckgain_default(&g, 8, q, l, a, b, &rule).map_err(|e| e.to_string())?;
        saw_cycle |= r6.class == graphs::ClassTag::BicoloredCycle && r6.t == 1;
        if r6.tuples == 0 || r8.tuples == 0 {
            saw_empty = true;
            ensure(r6.measured == 0.0 && r8.measured == 0.0, || format!("{}: empty set measures nonzero", g.id()))?;
            parts.push(format!("{}: empty", g.id()));
            continue;
        }
        let f = r8.ratio / r6.ratio;
        ensure((0.5..=2.0).contains(&f), || format!("{}: ratio {} at n=8 vs {} at n=6", g.id(), r8.ratio, r6.ratio))?;
        parts.push(format!("{} x{f:.3}", r6.class.as_str()));
    }
    ensure(saw_cycle, || "catalog lacks a cycle-class graph with t = 1".into())?;
    ensure(saw_empty, || "catalog lacks an empty coincidence set".into())?;
    Ok(parts.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 9] = [
        ("constants reproduction", criterion1, 5),
        ("certificate soundness", criterion2, 600),
        ("exact-oracle equivalence", criterion3, 300),
        ("algebraic identities", criterion4, 120),
        ("Riesz decomposition", criterion5, 900),
        ("Halasz growth", criterion6, 120),
        ("graph combinatorics", criterion7, 300),
        ("composition brute force", criterion8, 600),
        ("norm-ratio stability", criterion9, 1200),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(*limit) => Err(format!("{msg}; exceeded {limit} s")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {} ({name}): PASS [{:.1} s] {msg}", i + 1, elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{:.1} s] {msg}", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
