//! Closed-form constants, Lambert W and the numeric side of the counting
//! inequalities behind the final exponent.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstantsError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("{what} = {value} exceeds the budget {budget}")]
    BudgetExceeded { what: &'static str, value: u64, budget: u64 },
}

/// `-1/e`, the branch point of `W`.
pub const BRANCH_POINT: f64 = -0.36787944117144233;

/// Largest `v` accepted by the composition search.
pub const MAX_COMPOSITION_V: u32 = 20;

/// Largest `v` for [`stirling2`].
pub const MAX_STIRLING_V: u32 = 25;

/// Largest ratio `LHS / RHS` over all compositions with `v <= 16`, from an
/// exhaustive run of [`lemma5_sweep`]: `(7/2)^{28}`, attained at `v = 16`,
/// `l = 2`, `k = 1` by the composition `(2, 14)`.
pub fn lemma5_constant() -> BigRational {
    BigRational::new(BigInt::from(7), BigInt::from(2)).pow(28)
}

/// `S(v,l) <= C · C(v,l) · l^{v-l}` holds with this `C` (choose the block minima,
/// then place every other element).
pub const STIRLING_CONSTANT: f64 = 1.0;

/// Principal branch `W_0(z)` for `z >= -1/e` by Halley iteration.
pub fn lambert_w0(z: f64) -> Result<f64, ConstantsError> {
    if z.is_nan() || z < BRANCH_POINT {
        return Err(ConstantsError::Domain(format!("W_0 is undefined at z = {z}")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if z < -0.25 {
        let p = (2.0 * (std::f64::consts::E * z + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z < 3.0 {
        (1.0 + z).ln() * 0.8
    } else {
        let l = z.ln();
        l - l.ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1.0);
        w = next;
        if done {
            break;
        }
    }
    Ok(w.max(-1.0))
}

/// `(√41 - 5) / 4`.
pub fn alpha_opt() -> f64 {
    (41f64.sqrt() - 5.0) / 4.0
}

/// `(8 - √41) / 23`.
pub fn epsilon_max() -> f64 {
    (8.0 - 41f64.sqrt()) / 23.0
}

/// The four terms whose minimum is `ε^τ(α)`.
pub fn epsilon_tau_terms(alpha: f64) -> [f64; 4] {
    let a = alpha;
    [
        (4.0 - 8.0 * a) / (11.0 - 8.0 * a),
        (1.0 - 2.0 * a) / (5.0 - 2.0 * a),
        (1.0 + 4.0 * a) / (11.0 + 12.0 * a),
        a / (4.0 + 3.0 * a),
    ]
}

pub fn epsilon_tau(alpha: f64) -> Result<f64, ConstantsError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(ConstantsError::Domain(format!("alpha = {alpha} is outside (0, 1/2)")));
    }
    Ok(epsilon_tau_terms(alpha).into_iter().fold(f64::INFINITY, f64::min))
}

/// Maximum of `ε^τ` over the grid `α = k·step` inside `(0, 1/2)`.
pub fn epsilon_tau_grid_max(step: f64) -> Result<(f64, f64), ConstantsError> {
    if !(step > 0.0 && step < 0.5) {
        return Err(ConstantsError::Domain(format!("step = {step}")));
    }
    let count = (0.5 / step).ceil() as u64;
    let best = (1..count)
        .into_par_iter()
        .map(|k| {
            let a = k as f64 * step;
            (a, epsilon_tau(a).unwrap_or(f64::NEG_INFINITY))
        })
        .reduce(
            || (0.0, f64::NEG_INFINITY),
            |x, y| if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) { y } else { x },
        );
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub alpha_opt: f64,
    pub epsilon_max: f64,
    pub eta_max: f64,
    /// Indices (0-based) of the terms attaining the minimum at `α_opt`.
    pub active_terms: Vec<usize>,
}

pub fn optimize() -> OptimizationResult {
    let a = alpha_opt();
    let terms = epsilon_tau_terms(a);
    let min = terms.iter().copied().fold(f64::INFINITY, f64::min);
    let active_terms = (0..4).filter(|&i| (terms[i] - min).abs() <= 1e-12).collect();
    let e = epsilon_tau(a).expect("alpha_opt lies in (0, 1/2)");
    OptimizationResult {
        alpha_opt: a,
        epsilon_max: e,
        eta_max: e / 4.0,
        active_terms,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EtaReport {
    /// `1 / (32 + 4√41)`.
    pub eta_closed: f64,
    /// `(8 - √41) / 92`.
    pub eta_from_epsilon: f64,
    pub residual: f64,
    pub equal: bool,
}

pub fn eta_bound() -> EtaReport {
    let s = 41f64.sqrt();
    let eta_closed = 1.0 / (32.0 + 4.0 * s);
    let eta_from_epsilon = (8.0 - s) / 92.0;
    let residual = (eta_closed - eta_from_epsilon).abs() / eta_closed;
    EtaReport {
        eta_closed,
        eta_from_epsilon,
        residual,
        equal: residual <= 1e-15,
    }
}

/// Stirling numbers of the second kind `S(v, l)` for `0 <= l <= v <= vmax`.
pub fn stirling2_table(vmax: u32) -> Result<Vec<Vec<u128>>, ConstantsError> {
    if vmax > MAX_STIRLING_V {
        return Err(ConstantsError::BudgetExceeded {
            what: "v",
            value: vmax as u64,
            budget: MAX_STIRLING_V as u64,
        });
    }
    let m = vmax as usize;
    let mut s = vec![vec![0u128; m + 1]; m + 1];
    s[0][0] = 1;
    for v in 1..=m {
        for l in 1..=v {
            s[v][l] = l as u128 * s[v - 1][l] + s[v - 1][l - 1];
        }
    }
    Ok(s)
}

pub fn stirling2(v: u32, l: u32) -> Result<u128, ConstantsError> {
    if l > v {
        return Ok(0);
    }
    Ok(stirling2_table(v)?[v as usize][l as usize])
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// `S(v,l) / (C(v,l) · l^{v-l})`.
pub fn stirling_bound_ratio(v: u32, l: u32) -> Result<f64, ConstantsError> {
    let s = BigInt::from(stirling2(v, l)?);
    let denom = binomial(v as u64, l as u64) * BigInt::from(l).pow(v - l);
    if denom.is_zero() {
        return Ok(if s.is_zero() { 0.0 } else { f64::INFINITY });
    }
    Ok(BigRational::new(s, denom).to_f64().unwrap_or(f64::NAN))
}

/// Ordered compositions of `v` into `l` parts, each at least 2.
pub fn compositions(v: u32, l: u32) -> Vec<Vec<u32>> {
    fn rec(rest: u32, parts: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 0 {
            if rest == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let max = rest.saturating_sub(2 * (parts - 1));
        for x in 2..=max {
            cur.push(x);
            rec(rest - x, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if l > 0 {
        rec(v, l, &mut Vec::new(), &mut out);
    }
    out
}

/// `Π_{j<=k} v_j^{v_j-2} · Π_{j>k} v_j^{2 v_j}`.
pub fn composition_lhs(parts: &[u32], k: usize) -> BigInt {
    parts.iter().enumerate().fold(BigInt::one(), |acc, (j, &x)| {
        let e = if j < k { x - 2 } else { 2 * x };
        acc * BigInt::from(x).pow(e)
    })
}

/// `(v/k)^{v-2k}` for `k >= 1`, `(v/l)^{2v}` for `k = 0`.
pub fn composition_rhs(v: u32, l: u32, k: u32) -> BigRational {
    let (base, e) = if k == 0 { (l, 2 * v) } else { (k, v - 2 * k) };
    BigRational::new(BigInt::from(v).pow(e), BigInt::from(base).pow(e))
}

/// Relaxed stationary point of `Σ_{j<=k}(x_j-2) ln x_j + 2 Σ_{j>k} x_j ln x_j`
/// subject to `Σ x_j = v`.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPoint {
    pub lambda: f64,
    pub w: f64,
    /// `2/w`, shared by the first `k` parts.
    pub tree_part: f64,
    /// `e^{λ/2-1}`, shared by the remaining parts.
    pub cycle_part: f64,
    /// Objective value (log of the left side) at the point.
    pub objective: f64,
}

fn objective(k: u32, l: u32, tree: f64, cycle: f64) -> f64 {
    k as f64 * (tree - 2.0) * tree.ln() + (l - k) as f64 * 2.0 * cycle * cycle.ln()
}

pub fn stationary_point(v: u32, l: u32, k: u32) -> Result<StationaryPoint, ConstantsError> {
    if l == 0 || k > l || 2 * l > v {
        return Err(ConstantsError::Domain(format!("need 0 <= k <= l <= v/2, got v={v}, l={l}, k={k}")));
    }
    let at = |lambda: f64| -> (f64, f64, f64) {
        let w = lambert_w0(2.0 * (1.0 - lambda).exp()).unwrap_or(0.0);
        let tree = 2.0 / w;
        let cycle = (lambda / 2.0 - 1.0).exp();
        (w, tree, cycle)
    };
    let total = |lambda: f64| {
        let (_, tree, cycle) = at(lambda);
        k as f64 * tree + (l - k) as f64 * cycle - v as f64
    };
    // The total part size increases with λ; bracket and bisect.
    let (mut lo, mut hi) = (-50.0f64, 50.0f64);
    if total(lo) > 0.0 || total(hi) < 0.0 {
        return Err(ConstantsError::Domain("no stationary point in range".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let (w, tree, cycle) = at(lambda);
    Ok(StationaryPoint {
        lambda,
        w,
        tree_part: tree,
        cycle_part: cycle,
        objective: objective(k, l, tree, cycle),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma5Result {
    pub v: u32,
    pub l: u32,
    pub k: u32,
    pub compositions: u64,
    pub max_ratio: f64,
    /// The maximum ratio as an exact rational.
    pub max_ratio_exact: BigRational,
    pub argmax: Vec<u32>,
    /// Smallest objective over all compositions, for comparison with the
    /// stationary point.
    pub min_objective: f64,
    pub stationary: Option<StationaryPoint>,
}

/// Exhaustive `max LHS/RHS` over all compositions of `v` into `l` parts `>= 2`.
pub fn lemma5_verify(v: u32, l: u32, k: u32) -> Result<Lemma5Result, ConstantsError> {
    if v > MAX_COMPOSITION_V {
        return Err(ConstantsError::BudgetExceeded {
            what: "v",
            value: v as u64,
            budget: MAX_COMPOSITION_V as u64,
        });
    }
    if l == 0 || k > l || 2 * l > v {
        return Err(ConstantsError::Domain(format!("need 0 <= k <= l <= v/2, got v={v}, l={l}, k={k}")));
    }
    let rhs = composition_rhs(v, l, k);
    let comps = compositions(v, l);
    let mut best: Option<(BigRational, Vec<u32>)> = None;
    let mut min_objective = f64::INFINITY;
    for c in &comps {
        let ratio = BigRational::from_integer(composition_lhs(c, k as usize)) / &rhs;
        let obj: f64 = c
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let x = x as f64;
                if j < k as usize {
                    (x - 2.0) * x.ln()
                } else {
                    2.0 * x * x.ln()
                }
            })
            .sum();
        min_objective = min_objective.min(obj);
        if best.as_ref().is_none_or(|(b, _)| ratio > *b) {
            best = Some((ratio, c.clone()));
        }
    }
    let (max_ratio_exact, argmax) = best.expect("l <= v/2 admits a composition");
    Ok(Lemma5Result {
        v,
        l,
        k,
        compositions: comps.len() as u64,
        max_ratio: max_ratio_exact.to_f64().unwrap_or(f64::NAN),
        max_ratio_exact,
        argmax,
        min_objective,
        stationary: stationary_point(v, l, k).ok(),
    })
}

/// Largest ratio over all `v <= vmax`, `1 <= l <= v/2`, `0 <= k <= l`.
pub fn lemma5_sweep(vmax: u32) -> Result<Vec<Lemma5Result>, ConstantsError> {
    let mut cases = Vec::new();
    for v in 2..=vmax {
        for l in 1..=v / 2 {
            for k in 0..=l {
                cases.push((v, l, k));
            }
        }
    }
    cases.into_par_iter().map(|(v, l, k)| lemma5_verify(v, l, k)).collect()
}

/// Validated parameters `(n, ε, a, b)` with the derived `q`, `ρ`, `ρ̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub n: u32,
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    /// `n^ε` before rounding.
    pub q_real: f64,
    /// `max(1, round(n^ε))`.
    pub q: u32,
    pub rho: f64,
    pub rho_tilde: f64,
    /// `ε < min{1/3, 1/(1+12b)}`.
    pub norm_regime: bool,
    /// `ε < (8-√41)/23`.
    pub tree_regime: bool,
}

pub fn validate_parameters(n: u32, epsilon: f64, a: f64, b: f64) -> Result<ParameterSet, ConstantsError> {
    if !(b < 0.25) {
        return Err(ConstantsError::ParameterDomain(format!("b = {b} must be < 1/4")));
    }
    if n < 2 || !(epsilon > 0.0) || !(a > 0.0) {
        return Err(ConstantsError::ParameterDomain(format!(
            "need n >= 2, epsilon > 0, a > 0; got n={n}, epsilon={epsilon}, a={a}"
        )));
    }
    let nf = n as f64;
    let q_real = nf.powf(epsilon);
    let rho = q_real.sqrt() / nf;
    let rho_tilde = a * q_real.powf(b) / nf;
    Ok(ParameterSet {
        n,
        epsilon,
        a,
        b,
        q_real,
        q: (q_real.round() as u32).max(1),
        rho,
        rho_tilde,
        norm_regime: epsilon < (1.0f64 / 3.0).min(1.0 / (1.0 + 12.0 * b)),
        tree_regime: epsilon < epsilon_max(),
    })
}

fn ln_binomial(n: u32, k: u32) -> f64 {
    let b = binomial(n as u64, k as u64);
    // Exact integer, then its logarithm.
    let bits = b.bits();
    if bits < 1000 {
        b.to_f64().unwrap_or(f64::NAN).ln()
    } else {
        let shift = bits - 900;
        (&b >> shift as usize).to_f64().unwrap_or(f64::NAN).ln() + shift as f64 * std::f64::consts::LN_2
    }
}

fn ln_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `ln` of the `l`-th summand of `Σ_1`: `C(v,l) l^{v/2+l} v^{v-2l} n^{-v/2+l}`.
pub fn ln_sigma1_term(v: u32, l: u32, n: f64) -> f64 {
    let (vf, lf) = (v as f64, l as f64);
    ln_binomial(v, l) + (vf / 2.0 + lf) * lf.ln() + (vf - 2.0 * lf) * vf.ln() + (lf - vf / 2.0) * n.ln()
}

/// `ln` of the `l`-th summand of `Σ_2`: `C(v,l) l^{5l/2} v^{v-2l} q^l n^{-l/2}`.
pub fn ln_sigma2_term(v: u32, l: u32, n: f64, q: f64) -> f64 {
    let (vf, lf) = (v as f64, l as f64);
    ln_binomial(v, l) + 2.5 * lf * lf.ln() + (vf - 2.0 * lf) * vf.ln() + lf * q.ln() - lf / 2.0 * n.ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SumChainRow {
    pub v: u32,
    /// Split index `⌊αv⌋`.
    pub split: u32,
    pub ln_sigma1: f64,
    pub ln_sigma1_bound: f64,
    /// `Σ_1 / bound`; zero for an empty sum.
    pub ratio1: f64,
    pub ln_sigma2: f64,
    pub ln_sigma2_bound: f64,
    pub ratio2: f64,
}

/// Both sums and their closed-form bounds for each `v`, in log space.
pub fn sum_chain_report(v_range: std::ops::RangeInclusive<u32>, n: f64, q: f64, alpha: f64) -> Result<Vec<SumChainRow>, ConstantsError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(ConstantsError::Domain(format!("alpha = {alpha} is outside (0, 1/2)")));
    }
    if *v_range.end() > MAX_COMPOSITION_V {
        return Err(ConstantsError::BudgetExceeded {
            what: "v",
            value: *v_range.end() as u64,
            budget: MAX_COMPOSITION_V as u64,
        });
    }
    if !(n > 1.0 && q >= 1.0) {
        return Err(ConstantsError::ParameterDomain(format!("need n > 1 and q >= 1, got n={n}, q={q}")));
    }
    let mut rows = Vec::new();
    for v in v_range {
        let vf = v as f64;
        let split = (alpha * vf).floor() as u32;
        let s1: Vec<f64> = (1..=split).map(|l| ln_sigma1_term(v, l, n)).collect();
        let s2: Vec<f64> = (split + 1..=v / 2).map(|l| ln_sigma2_term(v, l, n, q)).collect();
        let ln_sigma1 = ln_sum_exp(&s1);
        let ln_sigma2 = ln_sum_exp(&s2);
        let ln_sigma1_bound = (vf * (1.5 - alpha) - 0.5) * vf.ln() - vf * (0.5 - alpha) * n.ln();
        let ln_sigma2_bound =
            (vf * (1.0 + alpha / 2.0) + 0.5) * vf.ln() + (alpha * vf + 1.0) * q.ln() - (alpha * vf / 2.0 + 0.5) * n.ln();
        rows.push(SumChainRow {
            v,
            split,
            ln_sigma1,
            ln_sigma1_bound,
            ratio1: (ln_sigma1 - ln_sigma1_bound).exp(),
            ln_sigma2,
            ln_sigma2_bound,
            ratio2: (ln_sigma2 - ln_sigma2_bound).exp(),
        });
    }
    Ok(rows)
}

/// `Σ_{l=1}^{m} x^l <= 2 x^m` for `x = n/v`, `m = ⌊αv⌋`; holds whenever `x >= 2`.
pub fn geometric_step_holds(v: u32, n: f64, alpha: f64) -> bool {
    let x = n / v as f64;
    let m = (alpha * v as f64).floor() as i32;
    let sum: f64 = (1..=m).map(|l| x.powi(l)).sum();
    sum <= 2.0 * x.powi(m) * (1.0 + 1e-12)
}

/// Outcome of the binomial shift comparison for one `(v, m, l)` with `m = αv`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinomialShift {
    pub v: u32,
    pub m: u32,
    pub l: u32,
    /// `C(v, l+m+1) / C(v-m-1, l)`.
    pub ratio: BigRational,
    /// `v^{m+1} (l+m+1)^{-m-1}`.
    pub stated_factor: BigRational,
    /// `v^{m+1} l! / (l+m+1)!`, which always dominates the ratio.
    pub falling_factor: BigRational,
}

impl BinomialShift {
    pub fn stated_holds(&self) -> bool {
        self.ratio <= self.stated_factor
    }

    pub fn falling_holds(&self) -> bool {
        self.ratio <= self.falling_factor
    }
}

/// All `(v, m, l)` with `v <= vmax`, `1 <= m`, `l + m + 1 <= v`.
pub fn binomial_shift_table(vmax: u32) -> Vec<BinomialShift> {
    let mut out = Vec::new();
    for v in 2..=vmax {
        for m in 1..v {
            for l in 0..v - m {
                let lhs = binomial(v as u64, (l + m + 1) as u64);
                let base = binomial((v - m - 1) as u64, l as u64);
                if base.is_zero() {
                    continue;
                }
                let vp = BigInt::from(v).pow(m + 1);
                let stated = BigRational::new(vp.clone(), BigInt::from(l + m + 1).pow(m + 1));
                let rising: BigInt = (l + 1..=l + m + 1).map(BigInt::from).product();
                out.push(BinomialShift {
                    v,
                    m,
                    l,
                    ratio: BigRational::new(lhs, base),
                    stated_factor: stated,
                    falling_factor: BigRational::new(vp, rising),
                });
            }
        }
    }
    out
}

/// `ln H(t) = (-v + 2(l-t)) ln(l-t) + t ln(l^{-1/2} v^{-21/4})` for `t < l`.
pub fn ln_h(t: f64, l: f64, v: f64) -> f64 {
    let s = l - t;
    (-v + 2.0 * s) * s.ln() + t * (-0.5 * l.ln() - 5.25 * v.ln())
}

/// Step size `κ` reported alongside `z_0^κ`.
pub const KAPPA: f64 = 1.0 / 1711.0;

/// The bound `W(z_0) > 79/20` used for the critical point.
pub const W_Z0_THRESHOLD: f64 = 79.0 / 20.0;

#[derive(Clone, Debug, PartialEq)]
pub struct HRow {
    pub l: u32,
    pub v: u32,
    /// `(e/2) l^{1/4} v^{29/8}`.
    pub z0: f64,
    pub w_z0: f64,
    /// `W(z_0) <= 79/20`.
    pub flagged: bool,
    /// `t_0 = l - v / (2 W(z_0))`.
    pub t0: f64,
    pub ln_h1: f64,
    pub ln_h_last: f64,
    /// `ln H(t_0)` when `1 <= t_0 <= l-1`.
    pub ln_h_t0: Option<f64>,
    pub z0_pow_kappa: f64,
}

pub fn h_report(l_range: std::ops::RangeInclusive<u32>, v_range: std::ops::RangeInclusive<u32>) -> Result<Vec<HRow>, ConstantsError> {
    let mut rows = Vec::new();
    for v in v_range {
        for l in l_range.clone() {
            if l < 2 || 2 * l > v {
                continue;
            }
            let (lf, vf) = (l as f64, v as f64);
            let z0 = std::f64::consts::E / 2.0 * lf.powf(0.25) * vf.powf(29.0 / 8.0);
            let w = lambert_w0(z0)?;
            let t0 = lf - vf / (2.0 * w);
            rows.push(HRow {
                l,
                v,
                z0,
                w_z0: w,
                flagged: w <= W_Z0_THRESHOLD,
                t0,
                ln_h1: ln_h(1.0, lf, vf),
                ln_h_last: ln_h(lf - 1.0, lf, vf),
                ln_h_t0: (t0 >= 1.0 && t0 <= lf - 1.0).then(|| ln_h(t0, lf, vf)),
                z0_pow_kappa: z0.powf(KAPPA),
            });
        }
    }
    Ok(rows)
}
