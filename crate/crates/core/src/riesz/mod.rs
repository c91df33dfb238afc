//! Hyperbolic vectors, r-functions, Riesz products and duality certificates.
//!
//! An r-function of shape `r` is `Σ_R α(R) h_R` over all dyadic boxes of that
//! shape, with `α(R) ∈ {-1, +1}`. Products of r-functions whose shapes differ in
//! every coordinate reduce, box by box, to a signed Haar sum on the coordinatewise
//! finest shape; [`pair_product`] uses this to pair such products with `D_N`
//! without a grid.

mod scan;

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dyadic::{product_reduce, DyadicBox, DyadicError, Sign, SignedHaarAtom, MAX_DIM};
use crate::gridfn::{GradedGrid, Grid, GridError, GridFunction, HaarExpansion, Lp, NormEstimate, DEFAULT_MAX_CELLS};
use crate::pointset::{grid_pairing, haar_coefficient, shape_coefficients, PointSet, PointSetError};

pub use scan::{scan_blocks, scan_to_layers, TupleGroup, BLOCK};

/// Largest number of boxes an r-function may carry.
pub const MAX_RFUNCTION_BOXES: u64 = 1 << 24;

/// Default cap on the number of boxes visited by [`pair_product`] calls.
pub const DEFAULT_PRODUCT_BUDGET: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RieszError {
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    PointSet(#[from] PointSetError),
    #[error("gamma must lie in (0,1), got {0}")]
    GammaOutOfRange(String),
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("{what} = {value} exceeds the budget {budget}")]
    BudgetExceeded { what: &'static str, value: u64, budget: u64 },
    #[error("test function has zero L1 norm")]
    ZeroTestFunction,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// `(r_1, r_2, r_3)` with `r_1 + r_2 + r_3 = n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HyperbolicVector {
    entries: [u32; 3],
}

impl HyperbolicVector {
    pub fn new(entries: [u32; 3]) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> [u32; 3] {
        self.entries
    }

    pub fn n(&self) -> u32 {
        self.entries.iter().sum()
    }

    pub fn get(&self, t: usize) -> u32 {
        self.entries[t]
    }
}

impl fmt::Display for HyperbolicVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.entries[0], self.entries[1], self.entries[2])
    }
}

/// All hyperbolic vectors of level `n`, lexicographically ordered.
pub fn hyperbolic_vectors(n: u32, allow_zero: bool) -> Vec<HyperbolicVector> {
    let lo = if allow_zero { 0 } else { 1 };
    let mut out = Vec::new();
    for r1 in lo..=n {
        for r2 in lo..=n - r1 {
            let r3 = n - r1 - r2;
            if r3 >= lo {
                out.push(HyperbolicVector::new([r1, r2, r3]));
            }
        }
    }
    out
}

/// True when the two vectors differ in every coordinate.
pub fn strongly_distinct(r: &HyperbolicVector, s: &HyperbolicVector) -> bool {
    (0..3).all(|t| r.entries[t] != s.entries[t])
}

/// How the signs `α(R)` of an r-function are chosen.
#[derive(Clone, Copy, Debug)]
pub enum SignRule<'a> {
    AllPlus,
    /// `α(R) = +1` if `⟨D_N, h_R⟩ >= 0`, else `-1`.
    SignOfHaarCoefficient(&'a PointSet),
    SeededRandom(u64),
}

/// The sign rule an r-function was built with, without borrowed data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SignRuleTag {
    AllPlus,
    SignOfHaarCoefficient(String),
    SeededRandom(u64),
}

impl fmt::Display for SignRuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignRuleTag::AllPlus => write!(f, "allPlus"),
            SignRuleTag::SignOfHaarCoefficient(l) => write!(f, "signOfHaarCoefficient({l})"),
            SignRuleTag::SeededRandom(s) => write!(f, "seededRandom({s})"),
        }
    }
}

impl SignRule<'_> {
    pub fn tag(&self) -> SignRuleTag {
        match self {
            SignRule::AllPlus => SignRuleTag::AllPlus,
            SignRule::SignOfHaarCoefficient(p) => SignRuleTag::SignOfHaarCoefficient(p.label().to_string()),
            SignRule::SeededRandom(s) => SignRuleTag::SeededRandom(*s),
        }
    }
}

/// `f_r = Σ_{R of shape r} α(R) h_R`.
#[derive(Clone, Debug, PartialEq)]
pub struct RFunction {
    shape: Vec<u32>,
    negative: Vec<bool>,
    rule: SignRuleTag,
}

fn shape_seed(seed: u64, shape: &[u32]) -> u64 {
    shape
        .iter()
        .fold(seed ^ 0x9E37_79B9_7F4A_7C15, |acc, &k| {
            (acc ^ k as u64).wrapping_mul(0x1000_0000_01B3).rotate_left(29)
        })
}

pub fn make_r_function(shape: &[u32], rule: &SignRule) -> Result<RFunction, RieszError> {
    let d = shape.len();
    if d == 0 || d > MAX_DIM {
        return Err(DyadicError::UnsupportedDimension(d).into());
    }
    let total: u32 = shape.iter().sum();
    if total >= 63 || 1u64 << total > MAX_RFUNCTION_BOXES {
        return Err(RieszError::BudgetExceeded {
            what: "boxes per r-function",
            value: 1u64.checked_shl(total).unwrap_or(u64::MAX),
            budget: MAX_RFUNCTION_BOXES,
        });
    }
    let count = 1usize << total;
    let negative = match rule {
        SignRule::AllPlus => vec![false; count],
        SignRule::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(shape_seed(*seed, shape));
            (0..count).map(|_| rng.gen::<bool>()).collect()
        }
        SignRule::SignOfHaarCoefficient(p) => {
            if p.dim() != d {
                return Err(RieszError::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
            let sc = shape_coefficients(p, shape)?;
            (0..count as u64).map(|i| sc.sign(i) < 0).collect()
        }
    };
    Ok(RFunction {
        shape: shape.to_vec(),
        negative,
        rule: rule.tag(),
    })
}

impl RFunction {
    pub fn from_vector(r: &HyperbolicVector, rule: &SignRule) -> Result<Self, RieszError> {
        make_r_function(&r.entries(), rule)
    }

    pub fn shape(&self) -> &[u32] {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn rule(&self) -> &SignRuleTag {
        &self.rule
    }

    pub fn box_count(&self) -> u64 {
        self.negative.len() as u64
    }

    #[inline]
    pub fn sign(&self, index: u64) -> i8 {
        if self.negative[index as usize] {
            -1
        } else {
            1
        }
    }

    pub fn atom(&self, index: u64) -> SignedHaarAtom {
        let bx = DyadicBox::from_index(&self.shape, index).expect("index within shape");
        let sign = if self.negative[index as usize] { Sign::Minus } else { Sign::Plus };
        SignedHaarAtom::new(bx, sign)
    }

    pub fn atoms(&self) -> impl Iterator<Item = SignedHaarAtom> + '_ {
        (0..self.box_count()).map(move |i| self.atom(i))
    }

    /// Coarsest grid on which the function is constant per cell.
    pub fn natural_grid(&self) -> Result<Grid, GridError> {
        Grid::new(&self.shape.iter().map(|k| k + 1).collect::<Vec<_>>())
    }

    pub fn eval(&self, x: &[f64]) -> i8 {
        let offsets: Vec<u64> = self
            .shape
            .iter()
            .zip(x)
            .map(|(&k, &v)| crate::dyadic::cell_of(v, k))
            .collect();
        let idx = self.shape.iter().zip(&offsets).fold(0u64, |acc, (&k, &a)| (acc << k) | a);
        self.sign(idx) as i8 * self.atom(idx).bx.haar_at(x)
    }

    pub fn to_expansion(&self) -> HaarExpansion {
        let terms = self.atoms().map(|a| (a.bx, a.sign.to_i64())).collect();
        HaarExpansion::new(self.dim(), terms).expect("shape dimension is valid")
    }

    pub fn materialize(&self, grid: &Grid) -> Result<GridFunction<i64>, RieszError> {
        let layers = scan_to_layers(grid, &[self], &[TupleGroup::from_iter([vec![0usize]])])?;
        Ok(layers[0].map(|&v| v as i64))
    }

    /// Exact `⟨D_N, f_r⟩ = Σ_R α(R) ⟨D_N, h_R⟩`.
    pub fn pairing(&self, p: &PointSet) -> Result<BigRational, RieszError> {
        let sc = shape_coefficients(p, &self.shape)?;
        let mut neg_empty: i64 = 0;
        let mut acc = BigRational::zero();
        for i in 0..self.box_count() {
            match sc.occupied.get(&i) {
                Some(c) => {
                    if self.negative[i as usize] {
                        acc -= c;
                    } else {
                        acc += c;
                    }
                }
                None => neg_empty += if self.negative[i as usize] { -1 } else { 1 },
            }
        }
        Ok(acc + sc.linear * BigRational::from_integer(neg_empty.into()))
    }
}

/// `⟨D_N, f_1 ⋯ f_m⟩` for r-functions with pairwise different levels in every
/// coordinate, computed box by box through [`product_reduce`].
///
/// The product is `Σ_S σ(S) h_S` over the boxes `S` of the coordinatewise finest
/// shape; each `S` determines the factor boxes as its ancestors.
pub fn pair_product(p: &PointSet, fns: &[&RFunction]) -> Result<BigRational, RieszError> {
    pair_product_with_budget(p, fns, DEFAULT_PRODUCT_BUDGET)
}

pub fn pair_product_with_budget(p: &PointSet, fns: &[&RFunction], budget: u64) -> Result<BigRational, RieszError> {
    let first = fns.first().ok_or(DyadicError::EmptyProduct)?;
    let d = first.dim();
    if p.dim() != d {
        return Err(RieszError::DimensionMismatch {
            expected: d,
            got: p.dim(),
        });
    }
    let mut finest = vec![0u32; d];
    for f in fns {
        if f.dim() != d {
            return Err(DyadicError::DimensionMismatch {
                expected: d,
                got: f.dim(),
            }
            .into());
        }
        for t in 0..d {
            finest[t] = finest[t].max(f.shape[t]);
        }
    }
    let total: u32 = finest.iter().sum();
    if total >= 63 || 1u64 << total > budget {
        return Err(RieszError::BudgetExceeded {
            what: "boxes in product",
            value: 1u64.checked_shl(total).unwrap_or(u64::MAX),
            budget,
        });
    }
    let sc = shape_coefficients(p, &finest)?;
    let mut atoms: Vec<SignedHaarAtom> = Vec::with_capacity(fns.len());
    let mut sign_sum_empty: i64 = 0;
    let mut occupied = BigRational::zero();
    for idx in 0..1u64 << total {
        let s = DyadicBox::from_index(&finest, idx)?;
        atoms.clear();
        for f in fns {
            let anc = s.ancestor(&f.shape);
            let ai = anc.index();
            let sign = if f.negative[ai as usize] { Sign::Minus } else { Sign::Plus };
            atoms.push(SignedHaarAtom::new(anc, sign));
        }
        let reduced = product_reduce(&atoms)?;
        debug_assert_eq!(reduced.bx, s);
        let sg = reduced.sign.to_i64();
        match sc.occupied.get(&idx) {
            Some(c) => {
                if sg > 0 {
                    occupied += c;
                } else {
                    occupied -= c;
                }
            }
            None => sign_sum_empty += sg,
        }
    }
    Ok(occupied + sc.linear * BigRational::from_integer(sign_sum_empty.into()))
}

/// `n` with `2^{n-2} <= N < 2^{n-1}`.
pub fn halasz_level(n_points: usize) -> u32 {
    assert!(n_points > 0, "point count must be positive");
    (usize::BITS - 1 - n_points.leading_zeros()) + 2
}

/// `Φ = Π_{k=0}^{n} (1 + γ f_k) - 1` with `f_k` the r-function of shape `(k, n-k)`.
#[derive(Clone, Debug)]
pub struct HalaszProduct {
    n: u32,
    gamma: BigRational,
    factors: Vec<RFunction>,
}

fn check_gamma(gamma: &BigRational) -> Result<(), RieszError> {
    if gamma.is_positive() && *gamma < BigRational::one() {
        Ok(())
    } else {
        Err(RieszError::GammaOutOfRange(gamma.to_string()))
    }
}

/// Build `Φ` for a planar point set with `ε_R = sign ⟨D_N, h_R⟩`.
pub fn build_halasz(p: &PointSet, gamma: &BigRational) -> Result<HalaszProduct, RieszError> {
    if p.dim() != 2 {
        return Err(RieszError::DimensionMismatch {
            expected: 2,
            got: p.dim(),
        });
    }
    build_halasz_with(halasz_level(p.len()), gamma, &SignRule::SignOfHaarCoefficient(p))
}

pub fn build_halasz_with(n: u32, gamma: &BigRational, rule: &SignRule) -> Result<HalaszProduct, RieszError> {
    check_gamma(gamma)?;
    if n > 20 {
        return Err(RieszError::BudgetExceeded {
            what: "n",
            value: n as u64,
            budget: 20,
        });
    }
    let factors = (0..=n)
        .map(|k| make_r_function(&[k, n - k], rule))
        .collect::<Result<_, _>>()?;
    Ok(HalaszProduct {
        n,
        gamma: gamma.clone(),
        factors,
    })
}

impl HalaszProduct {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn gamma(&self) -> &BigRational {
        &self.gamma
    }

    pub fn factors(&self) -> &[RFunction] {
        &self.factors
    }

    /// Number of non-empty subsets of the factors, i.e. terms of `Φ`.
    pub fn term_count(&self) -> u64 {
        (1u64 << (self.n + 1)) - 1
    }

    pub fn grid(&self) -> Result<Grid, GridError> {
        Grid::new(&[self.n + 1, self.n + 1])
    }

    /// Two factors never share a level in either coordinate, so every term of
    /// the expansion reduces to a signed Haar sum.
    pub fn all_terms_strongly_distinct(&self) -> bool {
        self.factors.iter().enumerate().all(|(i, f)| {
            self.factors[..i]
                .iter()
                .all(|g| (0..2).all(|t| f.shape[t] != g.shape[t]))
        })
    }

    /// Exact `⟨D_N, Σ_k f_k⟩`.
    pub fn linear_pairing(&self, p: &PointSet) -> Result<BigRational, RieszError> {
        let mut acc = BigRational::zero();
        for f in &self.factors {
            acc += f.pairing(p)?;
        }
        Ok(acc)
    }

    /// Layers `e_k(f_0, ..., f_n)`, `k = 0..=n+1`, so that `1 + Φ = Σ_k γ^k e_k`.
    pub fn layers(&self) -> Result<GradedGrid<i32>, RieszError> {
        let grid = self.grid()?;
        let fns: Vec<&RFunction> = self.factors.iter().collect();
        let groups: Vec<TupleGroup> = (0..fns.len()).map(|i| TupleGroup::from_iter([vec![i]])).collect();
        let m = fns.len();
        let mut layers: Vec<Vec<i32>> = (0..=m).map(|_| vec![0i32; grid.cells()]).collect();
        let mut e = vec![0i32; m + 1];
        scan_blocks(&grid, &fns, &groups, |base, len, rows| {
            for j in 0..len {
                e.iter_mut().for_each(|x| *x = 0);
                e[0] = 1;
                for (i, row) in rows.iter().enumerate() {
                    let f = row[j];
                    for k in (1..=i + 1).rev() {
                        e[k] += f * e[k - 1];
                    }
                }
                for (k, layer) in layers.iter_mut().enumerate() {
                    layer[base + j] = e[k];
                }
            }
        })?;
        let layers = layers
            .into_iter()
            .map(|v| GridFunction::new(grid.clone(), v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GradedGrid::new(layers)?)
    }

    /// `Φ` itself: the layers with the constant term removed.
    pub fn phi_layers(&self) -> Result<GradedGrid<i32>, RieszError> {
        let mut g = self.layers()?;
        let zero = g.layers[0].map(|_| 0i32);
        g.layers[0] = zero;
        Ok(g)
    }

    /// Exact `⟨D_N, e_k⟩` for `k = 1..=n+1` by the product rule on every subset.
    pub fn pairing_by_product_rule(&self, p: &PointSet, max_subsets: u64) -> Result<Vec<BigRational>, RieszError> {
        let m = self.factors.len();
        if self.term_count() > max_subsets {
            return Err(RieszError::BudgetExceeded {
                what: "subset terms",
                value: self.term_count(),
                budget: max_subsets,
            });
        }
        let mut per_degree = vec![BigRational::zero(); m];
        for mask in 1u64..1 << m {
            let fns: Vec<&RFunction> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| &self.factors[i]).collect();
            per_degree[fns.len() - 1] += pair_product(p, &fns)?;
        }
        Ok(per_degree)
    }
}

/// A lower bound `D*_N >= |⟨D_N, Φ⟩| / ‖Φ‖_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub lower_bound: f64,
    pub inner_product: f64,
    pub inner_product_exact: Option<BigRational>,
    pub l1_norm: NormEstimate,
    pub descriptor: String,
    pub point_set: String,
}

impl Certificate {
    pub fn new(
        inner_exact: Option<BigRational>,
        inner: f64,
        l1_norm: NormEstimate,
        descriptor: impl Into<String>,
        point_set: impl Into<String>,
    ) -> Result<Self, RieszError> {
        if !(l1_norm.value > 0.0) {
            return Err(RieszError::ZeroTestFunction);
        }
        let lower_bound = match (&inner_exact, &l1_norm.exact_power) {
            (Some(i), Some(n)) if n.is_positive() => (i.abs() / n).to_f64().unwrap_or(f64::NAN),
            _ => inner.abs() / l1_norm.value,
        };
        Ok(Self {
            lower_bound,
            inner_product: inner,
            inner_product_exact: inner_exact,
            l1_norm,
            descriptor: descriptor.into(),
            point_set: point_set.into(),
        })
    }

    pub fn is_exact(&self) -> bool {
        self.l1_norm.is_exact() && self.inner_product_exact.is_some()
    }
}

/// Certificate from an integer grid function, exactly.
pub fn certify<T: crate::gridfn::Scalar>(
    p: &PointSet,
    phi: &GridFunction<T>,
    descriptor: &str,
) -> Result<Certificate, RieszError> {
    let inner = grid_pairing(p, phi)?;
    let norm = phi.lp_norm(Lp::Finite(1.0))?;
    Certificate::new(
        Some(inner.clone()),
        inner.to_f64().unwrap_or(f64::NAN),
        norm,
        descriptor,
        p.label(),
    )
}

/// Certificate from a single signed atom: `|⟨D_N,h_R⟩| / |R|`.
pub fn certify_atom(p: &PointSet, atom: &SignedHaarAtom) -> Result<Certificate, RieszError> {
    let c = haar_coefficient(p, &atom.bx)? * BigRational::from_integer(atom.sign.to_i64().into());
    let vol = atom.bx.volume();
    let norm = NormEstimate {
        p: Lp::Finite(1.0),
        value: vol.to_f64().unwrap_or(f64::NAN),
        mode: crate::gridfn::NormMode::Exact,
        ci_halfwidth: 0.0,
        sample_count: 0,
        seed: None,
        exact_power: Some(vol),
    };
    Certificate::new(
        Some(c.clone()),
        c.to_f64().unwrap_or(f64::NAN),
        norm,
        format!("atom {}{}", if atom.sign == Sign::Minus { "-" } else { "+" }, atom.bx),
        p.label(),
    )
}

/// Certificate from the two-dimensional product `Φ`, exactly.
pub fn certify_halasz(p: &PointSet, phi: &HalaszProduct) -> Result<Certificate, RieszError> {
    let layers = phi.phi_layers()?;
    let mut inner = BigRational::zero();
    let mut power = BigRational::one();
    for layer in &layers.layers {
        let c = grid_pairing(p, layer)?;
        inner += &power * c;
        power *= phi.gamma();
    }
    let norm = layers.l1_norm_exact(phi.gamma());
    Certificate::new(
        Some(inner.clone()),
        inner.to_f64().unwrap_or(f64::NAN),
        norm,
        format!("halasz(n={},gamma={})", phi.n(), phi.gamma()),
        p.label(),
    )
}

/// Parameters of the three-dimensional product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiConfig {
    pub n: u32,
    pub q: u32,
    pub a: f64,
    pub b: f64,
    /// `ln q / ln n` when `q` is given directly.
    pub epsilon: f64,
}

impl PsiConfig {
    /// `q = round(n^ε)` with `ε ∈ (0, 1/3)`.
    pub fn from_epsilon(n: u32, epsilon: f64, a: f64, b: f64) -> Result<Self, RieszError> {
        if !(epsilon > 0.0 && epsilon < 1.0 / 3.0) {
            return Err(RieszError::ParameterDomain(format!("epsilon = {epsilon} is outside (0, 1/3)")));
        }
        let q = ((n as f64).powf(epsilon).round() as u32).max(1);
        Self::build(n, q, a, b, epsilon)
    }

    /// Explicit integer `q`; `ε` is recorded as `ln q / ln n`.
    pub fn with_q(n: u32, q: u32, a: f64, b: f64) -> Result<Self, RieszError> {
        let epsilon = if n >= 2 { (q as f64).ln() / (n as f64).ln() } else { 0.0 };
        Self::build(n, q, a, b, epsilon)
    }

    fn build(n: u32, q: u32, a: f64, b: f64, epsilon: f64) -> Result<Self, RieszError> {
        if b >= 0.25 || !b.is_finite() {
            return Err(RieszError::ParameterDomain(format!("b = {b} must be < 1/4")));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(RieszError::ParameterDomain(format!("a = {a} must be positive")));
        }
        if n == 0 || q == 0 || q > n || n % q != 0 {
            return Err(RieszError::ParameterDomain(format!("q = {q} must divide n = {n}")));
        }
        Ok(Self { n, q, a, b, epsilon })
    }

    pub fn rho(&self) -> f64 {
        (self.q as f64).sqrt() / self.n as f64
    }

    pub fn rho_tilde(&self) -> f64 {
        self.a * (self.q as f64).powf(self.b) / self.n as f64
    }
}

/// `I_v = {⌊(v-1)n/q⌋+1, ..., ⌊vn/q⌋}` for `v = 1..=q` (equal blocks when `q | n`).
pub fn index_block(n: u32, q: u32, v: u32) -> (u32, u32) {
    ((v - 1) * n / q + 1, v * n / q)
}

/// `A_v`: hyperbolic vectors of level `n` whose first entry lies in `I_v`.
pub fn collections(n: u32, q: u32) -> Vec<Vec<HyperbolicVector>> {
    let all = hyperbolic_vectors(n, true);
    (1..=q)
        .map(|v| {
            let (lo, hi) = index_block(n, q, v);
            all.iter().copied().filter(|r| (lo..=hi).contains(&r.get(0))).collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermClass {
    StronglyDistinct,
    Coincident,
}

/// One vector choice for one non-empty subset of `[q]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsiTerm {
    pub subset: u32,
    /// Indices into the flattened vector list, in increasing `v`.
    pub vectors: Vec<usize>,
    pub class: TermClass,
}

/// `Ψ = Π_{v=1}^q (1 + ρ̃ F_v)` with `F_v = Σ_{r ∈ A_v} f_r`.
#[derive(Clone, Debug)]
pub struct RieszProduct3D {
    config: PsiConfig,
    collections: Vec<Vec<HyperbolicVector>>,
    vectors: Vec<HyperbolicVector>,
    owner: Vec<u32>,
    fns: Vec<RFunction>,
    terms: Vec<PsiTerm>,
}

/// Largest number of expansion terms [`build_psi`] accepts.
pub const MAX_PSI_TERMS: u64 = 1 << 20;

pub fn build_psi(rule: &SignRule, config: PsiConfig) -> Result<RieszProduct3D, RieszError> {
    if let SignRule::SignOfHaarCoefficient(p) = rule {
        if p.dim() != 3 {
            return Err(RieszError::DimensionMismatch {
                expected: 3,
                got: p.dim(),
            });
        }
    }
    let cols = collections(config.n, config.q);
    let mut count: u64 = 0;
    for mask in 1u32..1 << config.q {
        let c: u64 = (0..config.q)
            .filter(|v| mask >> v & 1 == 1)
            .map(|v| cols[v as usize].len() as u64)
            .product();
        count = count.saturating_add(c);
    }
    if count > MAX_PSI_TERMS {
        return Err(RieszError::BudgetExceeded {
            what: "expansion terms",
            value: count,
            budget: MAX_PSI_TERMS,
        });
    }
    let mut vectors = Vec::new();
    let mut owner = Vec::new();
    let mut starts = Vec::new();
    for (v, col) in cols.iter().enumerate() {
        starts.push(vectors.len());
        vectors.extend(col.iter().copied());
        owner.extend(std::iter::repeat(v as u32).take(col.len()));
    }
    let fns = vectors
        .iter()
        .map(|r| RFunction::from_vector(r, rule))
        .collect::<Result<Vec<_>, _>>()?;
    let mut terms = Vec::new();
    for mask in 1u32..1 << config.q {
        let members: Vec<usize> = (0..config.q as usize).filter(|v| mask >> v & 1 == 1).collect();
        let mut choice = vec![0usize; members.len()];
        if members.iter().any(|&v| cols[v].is_empty()) {
            continue;
        }
        loop {
            let idx: Vec<usize> = members.iter().zip(&choice).map(|(&v, &c)| starts[v] + c).collect();
            let sd = idx.iter().enumerate().all(|(i, &a)| {
                idx[..i]
                    .iter()
                    .all(|&b| strongly_distinct(&vectors[a], &vectors[b]))
            });
            terms.push(PsiTerm {
                subset: mask,
                vectors: idx,
                class: if sd { TermClass::StronglyDistinct } else { TermClass::Coincident },
            });
            // Odometer over the vector choices.
            let mut pos = members.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                choice[pos] += 1;
                if choice[pos] < cols[members[pos]].len() {
                    break;
                }
                choice[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
    }
    Ok(RieszProduct3D {
        config,
        collections: cols,
        vectors,
        owner,
        fns,
        terms,
    })
}

/// Exact pairings per degree and their combination `Σ_k ρ̃^k c_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreePairing {
    /// Entry `k-1` holds the degree-`k` pairing.
    pub per_degree: Vec<BigRational>,
    pub value: f64,
}

impl DegreePairing {
    fn new(per_degree: Vec<BigRational>, rho_tilde: f64) -> Self {
        let value = per_degree
            .iter()
            .enumerate()
            .map(|(k, c)| rho_tilde.powi(k as i32 + 1) * c.to_f64().unwrap_or(f64::NAN))
            .sum();
        Self { per_degree, value }
    }
}

/// Grid-side data of `Ψ`.
#[derive(Clone, Debug)]
pub struct PsiGrid {
    /// `Ψ^{sd}` by degree `k = 1..=q` (entry `k-1`).
    pub sd_layers: Vec<GridFunction<i32>>,
    /// Cells where `e_k(F_1..F_q) != [k=0] + sd_k + not_k` for some `k`.
    pub identity_mismatches: u64,
    pub l1_psi: f64,
    pub l1_psi_sd: f64,
    pub l1_psi_not: f64,
    /// Exact `∫` of each degree of `Ψ^{sd}` and `Ψ^¬`, in units of the cell volume.
    pub sd_sums: Vec<i128>,
    pub not_sums: Vec<i128>,
}

impl PsiGrid {
    pub fn sd_pairing(&self, p: &PointSet, rho_tilde: f64) -> Result<DegreePairing, RieszError> {
        let per = self
            .sd_layers
            .iter()
            .map(|l| grid_pairing(p, l).map_err(RieszError::from))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DegreePairing::new(per, rho_tilde))
    }
}

impl RieszProduct3D {
    pub fn config(&self) -> &PsiConfig {
        &self.config
    }

    pub fn collections(&self) -> &[Vec<HyperbolicVector>] {
        &self.collections
    }

    pub fn vectors(&self) -> &[HyperbolicVector] {
        &self.vectors
    }

    /// Index `v - 1` of the collection each flattened vector belongs to.
    pub fn owner(&self, i: usize) -> u32 {
        self.owner[i]
    }

    pub fn factors(&self) -> &[RFunction] {
        &self.fns
    }

    pub fn terms(&self) -> &[PsiTerm] {
        &self.terms
    }

    /// `2^q`, counting the empty subset (the constant term).
    pub fn subset_count(&self) -> u64 {
        1u64 << self.config.q
    }

    pub fn grid(&self) -> Result<Grid, GridError> {
        Grid::new(&[self.config.n + 1, self.config.n, self.config.n])
    }

    fn degree_groups(&self, class: TermClass) -> Vec<TupleGroup> {
        let q = self.config.q as usize;
        let mut groups = vec![TupleGroup::new(); q];
        for t in self.terms.iter().filter(|t| t.class == class) {
            groups[t.vectors.len() - 1].push(&t.vectors);
        }
        groups
    }

    /// `⟨D_N, Ψ^{sd}⟩` by degree, each term reduced with the product rule.
    pub fn sd_inner_product(&self, p: &PointSet) -> Result<DegreePairing, RieszError> {
        let mut per = vec![BigRational::zero(); self.config.q as usize];
        for t in self.terms.iter().filter(|t| t.class == TermClass::StronglyDistinct) {
            let fns: Vec<&RFunction> = t.vectors.iter().map(|&i| &self.fns[i]).collect();
            per[fns.len() - 1] += pair_product(p, &fns)?;
        }
        Ok(DegreePairing::new(per, self.config.rho_tilde()))
    }

    /// Evaluate `F_v`, `Ψ^{sd}` and `Ψ^¬` on the grid, check the decomposition
    /// identity cell by cell and collect norms.
    pub fn grid_scan(&self, max_cells: u64) -> Result<PsiGrid, RieszError> {
        let base = self.grid()?;
        let grid = Grid::with_budget(base.res(), max_cells)?;
        let q = self.config.q as usize;
        let fns: Vec<&RFunction> = self.fns.iter().collect();
        let mut groups: Vec<TupleGroup> = (0..q)
            .map(|v| {
                (0..self.vectors.len())
                    .filter(|&i| self.owner[i] as usize == v)
                    .map(|i| vec![i])
                    .collect()
            })
            .collect();
        groups.extend(self.degree_groups(TermClass::StronglyDistinct));
        groups.extend(self.degree_groups(TermClass::Coincident));
        let rt = self.config.rho_tilde();
        let mut sd_layers: Vec<Vec<i32>> = (0..q).map(|_| vec![0i32; grid.cells()]).collect();
        let mut mismatches = 0u64;
        let (mut l1_psi, mut l1_sd, mut l1_not) = (0.0f64, 0.0f64, 0.0f64);
        let mut sd_sums = vec![0i128; q];
        let mut not_sums = vec![0i128; q];
        let mut e = vec![0i64; q + 1];
        scan_blocks(&grid, &fns, &groups, |base, len, rows| {
            let (f_rows, rest) = rows.split_at(q);
            let (sd_rows, not_rows) = rest.split_at(q);
            for j in 0..len {
                e.iter_mut().for_each(|x| *x = 0);
                e[0] = 1;
                for (v, row) in f_rows.iter().enumerate() {
                    let f = row[j] as i64;
                    for k in (1..=v + 1).rev() {
                        e[k] += f * e[k - 1];
                    }
                }
                let (mut psi, mut sd, mut not) = (1.0f64, 0.0f64, 0.0f64);
                let mut pw = 1.0f64;
                let mut ok = true;
                for k in 1..=q {
                    let s = sd_rows[k - 1][j] as i64;
                    let c = not_rows[k - 1][j] as i64;
                    ok &= e[k] == s + c;
                    pw *= rt;
                    psi += pw * e[k] as f64;
                    sd += pw * s as f64;
                    not += pw * c as f64;
                    sd_layers[k - 1][base + j] = s as i32;
                    sd_sums[k - 1] += s as i128;
                    not_sums[k - 1] += c as i128;
                }
                mismatches += (!ok) as u64;
                l1_psi += psi.abs();
                l1_sd += sd.abs();
                l1_not += not.abs();
            }
        })?;
        let vol = 0.5f64.powi(grid.log2_cells() as i32);
        let sd_layers = sd_layers
            .into_iter()
            .map(|v| GridFunction::new(grid.clone(), v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PsiGrid {
            sd_layers,
            identity_mismatches: mismatches,
            l1_psi: l1_psi * vol,
            l1_psi_sd: l1_sd * vol,
            l1_psi_not: l1_not * vol,
            sd_sums,
            not_sums,
        })
    }

    /// Default-budget variant of [`RieszProduct3D::grid_scan`].
    pub fn grid_scan_default(&self) -> Result<PsiGrid, RieszError> {
        self.grid_scan(DEFAULT_MAX_CELLS)
    }
}

/// Certificate `|⟨D_N, Ψ^{sd}⟩| / ‖Ψ^{sd}‖_1` with the norm taken on the grid.
pub fn certify_psi_sd(p: &PointSet, psi: &RieszProduct3D, grid: &PsiGrid) -> Result<Certificate, RieszError> {
    let pairing = psi.sd_inner_product(p)?;
    let norm = NormEstimate {
        p: Lp::Finite(1.0),
        value: grid.l1_psi_sd,
        mode: crate::gridfn::NormMode::Exact,
        ci_halfwidth: 0.0,
        sample_count: 0,
        seed: None,
        exact_power: None,
    };
    let c = psi.config();
    Certificate::new(
        None,
        pairing.value,
        norm,
        format!("psi_sd(n={},q={},a={},b={})", c.n, c.q, c.a, c.b),
        p.label(),
    )
}

/// `Σ_R ⟨D_N, h_R⟩` weights for the linear term; exposed for reports.
pub fn abs_coefficient_sum(p: &PointSet, shape: &[u32]) -> Result<BigRational, RieszError> {
    Ok(shape_coefficients(p, shape)?.abs_sum())
}

/// `BigInt` helper for callers working with integer layer sums.
pub fn i128_to_rational(v: i128) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}
