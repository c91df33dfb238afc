//! Piecewise-constant functions on dyadic grids.
//!
//! A [`Grid`] has a per-axis depth `n_t`; its cells are the dyadic boxes of shape
//! `(n_1, ..., n_d)`. Cells are stored row-major with axis 0 most significant.
//! Integrals of integer and rational grid functions are exact. Only `p`-th roots
//! (and non-integer exponents) go through `f64`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dyadic::{pow2_rational, DyadicBox, SignedHaarAtom, MAX_DIM};

/// Default dense-storage budget, in cells.
pub const DEFAULT_MAX_CELLS: u64 = 1 << 27;

/// Two-sided 95% normal quantile used for Monte-Carlo half-widths.
pub const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported dimension {0} (supported: 1..=3)")]
    UnsupportedDimension(usize),
    #[error("resolution {have} on axis {axis} is too coarse; need at least {need}")]
    ResolutionTooCoarse { axis: usize, need: u32, have: u32 },
    #[error("grid of 2^{log2_cells} cells exceeds the budget of {budget} cells")]
    BudgetExceeded { log2_cells: u32, budget: u64 },
    #[error("value vector has {got} entries, grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("exponent must satisfy p >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("at least two samples are required, got {0}")]
    TooFewSamples(u64),
}

/// A dyadic grid with per-axis depths.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    res: Vec<u32>,
}

impl Grid {
    pub fn new(res: &[u32]) -> Result<Self, GridError> {
        Self::with_budget(res, DEFAULT_MAX_CELLS)
    }

    pub fn with_budget(res: &[u32], max_cells: u64) -> Result<Self, GridError> {
        if res.is_empty() || res.len() > MAX_DIM {
            return Err(GridError::UnsupportedDimension(res.len()));
        }
        let bits: u32 = res.iter().sum();
        if bits >= 63 || (1u64 << bits) > max_cells {
            return Err(GridError::BudgetExceeded {
                log2_cells: bits,
                budget: max_cells,
            });
        }
        Ok(Self { res: res.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.res.len()
    }

    pub fn res(&self) -> &[u32] {
        &self.res
    }

    pub fn log2_cells(&self) -> u32 {
        self.res.iter().sum()
    }

    pub fn cells(&self) -> usize {
        1usize << self.log2_cells()
    }

    pub fn cell_volume(&self) -> BigRational {
        pow2_rational(-(self.log2_cells() as i64))
    }

    /// Bit offset of axis `t` inside a linear cell index.
    #[inline]
    pub fn shift(&self, t: usize) -> u32 {
        self.res[t + 1..].iter().sum()
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [u64; MAX_DIM] {
        let mut c = [0u64; MAX_DIM];
        let mut rest = index as u64;
        for t in (0..self.dim()).rev() {
            c[t] = rest & ((1u64 << self.res[t]) - 1);
            rest >>= self.res[t];
        }
        c
    }

    #[inline]
    pub fn index(&self, coords: &[u64]) -> usize {
        let mut idx = 0u64;
        for t in 0..self.dim() {
            idx = (idx << self.res[t]) | coords[t];
        }
        idx as usize
    }

    /// Cell containing the point `x` in `[0,1)^d`.
    pub fn cell_of_point(&self, x: &[f64]) -> usize {
        let c: Vec<u64> = (0..self.dim())
            .map(|t| crate::dyadic::cell_of(x[t], self.res[t]))
            .collect();
        self.index(&c)
    }

    /// Coordinatewise maximum of two grids of equal dimension.
    pub fn common_refinement(&self, other: &Grid) -> Result<Grid, GridError> {
        if self.dim() != other.dim() {
            return Err(GridError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let res: Vec<u32> = self.res.iter().zip(&other.res).map(|(a, b)| *a.max(b)).collect();
        Grid::with_budget(&res, u64::MAX >> 1)
    }

    /// Linear index of the coarse cell containing fine cell `fine` of `finer`.
    #[inline]
    fn coarsen_index(&self, finer: &Grid, fine: usize) -> usize {
        let c = finer.coords(fine);
        let mut idx = 0u64;
        for t in 0..self.dim() {
            idx = (idx << self.res[t]) | (c[t] >> (finer.res[t] - self.res[t]));
        }
        idx as usize
    }

    /// Check that every atom can be represented: depth must exceed the atom level.
    pub fn check_atom(&self, bx: &DyadicBox) -> Result<(), GridError> {
        if bx.dim() != self.dim() {
            return Err(GridError::DimensionMismatch {
                expected: self.dim(),
                got: bx.dim(),
            });
        }
        for (t, j) in bx.intervals().iter().enumerate() {
            if self.res[t] <= j.level() {
                return Err(GridError::ResolutionTooCoarse {
                    axis: t,
                    need: j.level() + 1,
                    have: self.res[t],
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grid{:?}", self.res)
    }
}

/// Cell value types with exact conversion to rationals.
pub trait Scalar: Clone + PartialEq + fmt::Debug + Send + Sync {
    fn cell_zero() -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_rational(&self) -> BigRational;
    fn approx_f64(&self) -> f64;
    /// Integer value, when the scalar is an integer type.
    fn as_i64(&self) -> Option<i64>;
    fn cell_add(&self, other: &Self) -> Self;
    fn cell_mul(&self, other: &Self) -> Self;
}

macro_rules! int_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn cell_zero() -> Self {
                0
            }
            fn from_i64(v: i64) -> Self {
                <$t>::try_from(v).expect("value fits the grid scalar type")
            }
            fn to_rational(&self) -> BigRational {
                BigRational::from_integer(BigInt::from(*self))
            }
            fn approx_f64(&self) -> f64 {
                *self as f64
            }
            fn as_i64(&self) -> Option<i64> {
                Some(*self as i64)
            }
            fn cell_add(&self, other: &Self) -> Self {
                self.checked_add(*other).expect("grid value overflow")
            }
            fn cell_mul(&self, other: &Self) -> Self {
                self.checked_mul(*other).expect("grid value overflow")
            }
        }
    };
}

int_scalar!(i32);
int_scalar!(i64);

impl Scalar for BigRational {
    fn cell_zero() -> Self {
        Zero::zero()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(v.into())
    }
    fn to_rational(&self) -> BigRational {
        self.clone()
    }
    fn approx_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn as_i64(&self) -> Option<i64> {
        None
    }
    fn cell_add(&self, other: &Self) -> Self {
        self + other
    }
    fn cell_mul(&self, other: &Self) -> Self {
        self * other
    }
}

/// Exponent of an `L^p` norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lp {
    Finite(f64),
    Infinity,
}

impl Lp {
    pub fn integer(&self) -> Option<u32> {
        match *self {
            Lp::Finite(p) if p.fract() == 0.0 && (1.0..=64.0).contains(&p) => Some(p as u32),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        match *self {
            Lp::Finite(p) if !(p >= 1.0) => Err(GridError::InvalidExponent(p)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Lp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lp::Finite(p) => write!(f, "{p}"),
            Lp::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Exact,
    MonteCarlo,
}

impl NormMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormMode::Exact => "exact",
            NormMode::MonteCarlo => "monte-carlo",
        }
    }
}

/// An `L^p` norm value together with how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct NormEstimate {
    pub p: Lp,
    pub value: f64,
    pub mode: NormMode,
    /// Half-width of the 95% confidence interval; zero in exact mode.
    pub ci_halfwidth: f64,
    pub sample_count: u64,
    pub seed: Option<u64>,
    /// `∫|f|^p` (or `max |f|` for `p = ∞`) when it is available exactly.
    pub exact_power: Option<BigRational>,
}

impl NormEstimate {
    fn exact(p: Lp, value: f64, exact_power: Option<BigRational>) -> Self {
        Self {
            p,
            value,
            mode: NormMode::Exact,
            ci_halfwidth: 0.0,
            sample_count: 0,
            seed: None,
            exact_power,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.mode == NormMode::Exact
    }
}

/// A function that is constant on the cells of a dyadic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.cells() {
            return Err(GridError::LengthMismatch {
                expected: grid.cells(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: T) -> Self {
        let values = vec![value; grid.cells()];
        Self { grid, values }
    }

    pub fn from_cells(grid: Grid, f: impl Fn(&[u64]) -> T) -> Self {
        let d = grid.dim();
        let values = (0..grid.cells())
            .map(|i| f(&grid.coords(i)[..d]))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn value_at(&self, x: &[f64]) -> &T {
        &self.values[self.grid.cell_of_point(x)]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> GridFunction<U> {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    /// The same function on a finer grid.
    pub fn refine(&self, res: &[u32]) -> Result<Self, GridError> {
        if res.len() != self.dim() {
            return Err(GridError::DimensionMismatch {
                expected: self.dim(),
                got: res.len(),
            });
        }
        for (t, (&want, &have)) in res.iter().zip(self.grid.res()).enumerate() {
            if want < have {
                return Err(GridError::ResolutionTooCoarse {
                    axis: t,
                    need: have,
                    have: want,
                });
            }
        }
        let fine = Grid::with_budget(res, u64::MAX >> 1)?;
        let values = (0..fine.cells())
            .map(|i| self.values[self.grid.coarsen_index(&fine, i)].clone())
            .collect();
        Ok(Self { grid: fine, values })
    }

    /// Pointwise combination on the common refinement.
    pub fn zip_with(&self, other: &Self, f: impl Fn(&T, &T) -> T) -> Result<Self, GridError> {
        let fine = self.grid.common_refinement(&other.grid)?;
        let values = (0..fine.cells())
            .map(|i| {
                f(
                    &self.values[self.grid.coarsen_index(&fine, i)],
                    &other.values[other.grid.coarsen_index(&fine, i)],
                )
            })
            .collect();
        Ok(Self { grid: fine, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_with(other, |a, b| a.cell_add(b))
    }

    pub fn mul(&self, other: &Self) -> Result<Self, GridError> {
        self.zip_with(other, |a, b| a.cell_mul(b))
    }

    /// Exact `∫ f`.
    pub fn integral(&self) -> BigRational {
        sum_exact(self.values.iter().map(|v| (v, None::<&T>))) * self.grid.cell_volume()
    }

    /// Exact `∫ |f|^p` for integer `p >= 1`.
    pub fn power_integral(&self, p: u32) -> BigRational {
        let mut acc_int = BigInt::zero();
        let mut acc_rat = BigRational::zero();
        let mut small: i128 = 0;
        for v in &self.values {
            match v.as_i64() {
                Some(x) => {
                    let a = (x as i128).unsigned_abs();
                    match a.checked_pow(p).and_then(|w| i128::try_from(w).ok()) {
                        Some(w) => match small.checked_add(w) {
                            Some(s) => small = s,
                            None => {
                                acc_int += BigInt::from(small);
                                small = w;
                            }
                        },
                        None => acc_int += num_traits::pow(BigInt::from(a), p as usize),
                    }
                }
                None => acc_rat += num_traits::pow(v.to_rational().abs(), p as usize),
            }
        }
        acc_int += BigInt::from(small);
        (BigRational::from_integer(acc_int) + acc_rat) * self.grid.cell_volume()
    }

    /// `‖f‖_p`; exact for integer `p` and `p = ∞` (up to the final root).
    pub fn lp_norm(&self, p: Lp) -> Result<NormEstimate, GridError> {
        p.validate()?;
        Ok(match p {
            Lp::Infinity => {
                let max = self
                    .values
                    .iter()
                    .map(|v| v.to_rational().abs())
                    .max()
                    .unwrap_or_else(BigRational::zero);
                NormEstimate::exact(p, Scalar::approx_f64(&max), Some(max))
            }
            Lp::Finite(pf) => match p.integer() {
                Some(pi) => {
                    let power = self.power_integral(pi);
                    let value = Scalar::approx_f64(&power).powf(1.0 / pf);
                    NormEstimate::exact(p, value, Some(power))
                }
                None => {
                    let vol = 0.5f64.powi(self.grid.log2_cells() as i32);
                    let s: f64 = self.values.iter().map(|v| v.approx_f64().abs().powf(pf)).sum();
                    NormEstimate::exact(p, (s * vol).powf(1.0 / pf), None)
                }
            },
        })
    }

    /// Exact `∫ f(x) x_1 ... x_d dx`.
    pub fn moment(&self) -> BigRational {
        let g = &self.grid;
        let d = g.dim();
        // Cell c contributes v_c * prod (2c_t + 1) / 2^(2 n_t + 1).
        let weights: Vec<Vec<i128>> = (0..d)
            .map(|t| (0..1u64 << g.res()[t]).map(|c| 2 * c as i128 + 1).collect())
            .collect();
        let mut acc = BigRational::zero();
        let mut small: i128 = 0;
        for (i, v) in self.values.iter().enumerate() {
            let c = g.coords(i);
            let w: i128 = (0..d).map(|t| weights[t][c[t] as usize]).product();
            match v.as_i64().and_then(|x| (x as i128).checked_mul(w)) {
                Some(term) => match small.checked_add(term) {
                    Some(s) => small = s,
                    None => {
                        acc += BigRational::from_integer(small.into());
                        small = term;
                    }
                },
                None => acc += v.to_rational() * BigRational::from_integer(w.into()),
            }
        }
        acc += BigRational::from_integer(small.into());
        let denom: i64 = g.res().iter().map(|&n| 2 * n as i64 + 1).sum();
        acc * pow2_rational(-denom)
    }
}

/// Exact `Σ a_i` (or `Σ a_i b_i` when pairs are supplied).
fn sum_exact<'a, T: Scalar + 'a>(items: impl Iterator<Item = (&'a T, Option<&'a T>)>) -> BigRational {
    let mut small: i128 = 0;
    let mut big = BigRational::zero();
    for (a, b) in items {
        let term = match (a.as_i64(), b.map(|b| b.as_i64())) {
            (Some(x), None) => Some(x as i128),
            (Some(x), Some(Some(y))) => Some(x as i128 * y as i128),
            _ => None,
        };
        match term {
            Some(t) => match small.checked_add(t) {
                Some(s) => small = s,
                None => {
                    big += BigRational::from_integer(small.into());
                    small = t;
                }
            },
            None => {
                let r = match b {
                    Some(b) => a.to_rational() * b.to_rational(),
                    None => a.to_rational(),
                };
                big += r;
            }
        }
    }
    big + BigRational::from_integer(small.into())
}

/// Exact `∫ f g` on the common refinement.
pub fn inner_product<T: Scalar>(f: &GridFunction<T>, g: &GridFunction<T>) -> Result<BigRational, GridError> {
    let fine = f.grid.common_refinement(&g.grid)?;
    let sum = if fine == f.grid && fine == g.grid {
        sum_exact(f.values.iter().zip(&g.values).map(|(a, b)| (a, Some(b))))
    } else {
        sum_exact((0..fine.cells()).map(|i| {
            (
                &f.values[f.grid.coarsen_index(&fine, i)],
                Some(&g.values[g.grid.coarsen_index(&fine, i)]),
            )
        }))
    };
    Ok(sum * fine.cell_volume())
}

/// A symbolic integer combination of signed Haar atoms.
#[derive(Clone, Debug, PartialEq)]
pub enum HaarExpr {
    Const(i64),
    Atom(SignedHaarAtom),
    Sum(Vec<HaarExpr>),
    Product(Vec<HaarExpr>),
    Scaled(i64, Box<HaarExpr>),
}

impl HaarExpr {
    fn visit_atoms(&self, f: &mut impl FnMut(&SignedHaarAtom)) {
        match self {
            HaarExpr::Const(_) => {}
            HaarExpr::Atom(a) => f(a),
            HaarExpr::Sum(xs) | HaarExpr::Product(xs) => xs.iter().for_each(|x| x.visit_atoms(f)),
            HaarExpr::Scaled(_, x) => x.visit_atoms(f),
        }
    }

    fn eval_cell(&self, res: &[u32], cell: &[u64]) -> i64 {
        match self {
            HaarExpr::Const(c) => *c,
            HaarExpr::Atom(a) => a.eval_cell(res, cell) as i64,
            HaarExpr::Sum(xs) => xs.iter().map(|x| x.eval_cell(res, cell)).sum(),
            HaarExpr::Product(xs) => xs.iter().map(|x| x.eval_cell(res, cell)).product(),
            HaarExpr::Scaled(s, x) => s * x.eval_cell(res, cell),
        }
    }
}

/// Evaluate an expression on every cell of `grid`.
pub fn materialize(expr: &HaarExpr, grid: &Grid) -> Result<GridFunction<i64>, GridError> {
    let mut err = None;
    expr.visit_atoms(&mut |a| {
        if err.is_none() {
            err = grid.check_atom(&a.bx).err();
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let res = grid.res().to_vec();
    let d = grid.dim();
    Ok(GridFunction::from_cells(grid.clone(), |c| expr.eval_cell(&res, &c[..d])))
}

/// A finite Haar series `Σ α_R h_R` with integer coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarExpansion {
    dim: usize,
    terms: Vec<(DyadicBox, i64)>,
}

impl HaarExpansion {
    pub fn new(dim: usize, terms: Vec<(DyadicBox, i64)>) -> Result<Self, GridError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(GridError::UnsupportedDimension(dim));
        }
        if let Some((b, _)) = terms.iter().find(|(b, _)| b.dim() != dim) {
            return Err(GridError::DimensionMismatch {
                expected: dim,
                got: b.dim(),
            });
        }
        Ok(Self { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(DyadicBox, i64)] {
        &self.terms
    }

    /// Coarsest grid on which every term is representable.
    pub fn natural_grid(&self) -> Result<Grid, GridError> {
        let mut res = vec![1u32; self.dim];
        for (b, _) in &self.terms {
            for (t, j) in b.intervals().iter().enumerate() {
                res[t] = res[t].max(j.level() + 1);
            }
        }
        Grid::new(&res)
    }

    pub fn to_expr(&self) -> HaarExpr {
        HaarExpr::Sum(
            self.terms
                .iter()
                .map(|(b, c)| HaarExpr::Scaled(*c, Box::new(HaarExpr::Atom(SignedHaarAtom::plus(*b)))))
                .collect(),
        )
    }

    pub fn materialize(&self) -> Result<GridFunction<i64>, GridError> {
        let grid = self.natural_grid()?;
        materialize_terms(&self.terms, &grid)
    }
}

fn materialize_terms(terms: &[(DyadicBox, i64)], grid: &Grid) -> Result<GridFunction<i64>, GridError> {
    let mut values = vec![0i64; grid.cells()];
    let d = grid.dim();
    for (b, c) in terms {
        grid.check_atom(b)?;
        // Visit only the cells inside the box.
        let atom = SignedHaarAtom::plus(*b);
        let sub: Vec<u32> = (0..d).map(|t| grid.res()[t] - b.interval(t).level()).collect();
        let sub_grid = Grid::with_budget(&sub, u64::MAX >> 1)?;
        for i in 0..sub_grid.cells() {
            let local = sub_grid.coords(i);
            let mut cell = [0u64; MAX_DIM];
            for t in 0..d {
                cell[t] = (b.interval(t).offset() << sub[t]) | local[t];
            }
            let v = atom.eval_cell(grid.res(), &cell[..d]) as i64;
            values[grid.index(&cell[..d])] += c * v;
        }
    }
    GridFunction::new(grid.clone(), values)
}

/// How the Haar terms of an expansion are grouped into square-function layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layering {
    /// Group by total level `k_1 + ... + k_d` (the level in one dimension).
    ByLevel,
    /// Group by the full shape vector.
    ByShape,
}

/// `S f` stored through its square `Σ_layers (layer)^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareFunction {
    pub squared: GridFunction<i64>,
}

impl SquareFunction {
    /// `‖S f‖_p`; exact power integral for even `p`.
    pub fn lp_norm(&self, p: Lp) -> Result<NormEstimate, GridError> {
        p.validate()?;
        match p {
            Lp::Infinity => {
                let m = self.squared.values().iter().copied().max().unwrap_or(0);
                Ok(NormEstimate::exact(p, (m as f64).sqrt(), None))
            }
            Lp::Finite(pf) => {
                if let Some(pi) = p.integer().filter(|k| k % 2 == 0) {
                    let power = self.squared.power_integral(pi / 2);
                    let value = Scalar::approx_f64(&power).powf(1.0 / pf);
                    Ok(NormEstimate::exact(p, value, Some(power)))
                } else {
                    let vol = 0.5f64.powi(self.squared.grid().log2_cells() as i32);
                    let s: f64 = self
                        .squared
                        .values()
                        .iter()
                        .map(|&v| (v as f64).powf(pf / 2.0))
                        .sum();
                    Ok(NormEstimate::exact(p, (s * vol).powf(1.0 / pf), None))
                }
            }
        }
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        (*self.squared.value_at(x) as f64).sqrt()
    }
}

pub fn square_function(f: &HaarExpansion, layering: Layering) -> Result<SquareFunction, GridError> {
    let grid = f.natural_grid()?;
    let mut groups: std::collections::BTreeMap<Vec<u32>, Vec<(DyadicBox, i64)>> = Default::default();
    for (b, c) in f.terms() {
        let key = match layering {
            Layering::ByLevel => vec![b.volume_log2()],
            Layering::ByShape => b.shape(),
        };
        groups.entry(key).or_default().push((*b, *c));
    }
    let mut squared = vec![0i64; grid.cells()];
    for terms in groups.values() {
        let layer = materialize_terms(terms, &grid)?;
        for (s, v) in squared.iter_mut().zip(layer.values()) {
            *s += v * v;
        }
    }
    Ok(SquareFunction {
        squared: GridFunction::new(grid, squared)?,
    })
}

/// `‖f‖_p`, `‖S f‖_p` and their ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct LpRatio {
    pub norm_f: NormEstimate,
    pub norm_sf: NormEstimate,
    pub ratio: f64,
}

pub fn lp_ratio_report(f: &HaarExpansion, p: f64) -> Result<LpRatio, GridError> {
    if !(p > 1.0) {
        return Err(GridError::InvalidExponent(p));
    }
    let g = f.materialize()?;
    let norm_f = g.lp_norm(Lp::Finite(p))?;
    let norm_sf = square_function(f, Layering::ByShape)?.lp_norm(Lp::Finite(p))?;
    let ratio = match (&norm_f.exact_power, &norm_sf.exact_power) {
        (Some(a), Some(b)) if !b.is_zero() => Scalar::approx_f64(&(a / b)).powf(1.0 / p),
        _ => norm_f.value / norm_sf.value,
    };
    Ok(LpRatio {
        norm_f,
        norm_sf,
        ratio,
    })
}

/// Seeded Monte-Carlo estimate of `‖f‖_p` over `[0,1)^dim`.
///
/// The half-width is the delta-method transform of the normal interval for the
/// mean of `|f|^p`.
pub fn mc_lp_norm<F>(f: F, dim: usize, p: f64, samples: u64, seed: u64) -> Result<NormEstimate, GridError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(p >= 1.0) {
        return Err(GridError::InvalidExponent(p));
    }
    if samples < 2 {
        return Err(GridError::TooFewSamples(samples));
    }
    if dim == 0 || dim > MAX_DIM {
        return Err(GridError::UnsupportedDimension(dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = [0.0f64; MAX_DIM];
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for i in 0..samples {
        for xi in x.iter_mut().take(dim) {
            *xi = rng.gen::<f64>();
        }
        let y = f(&x[..dim]).abs().powf(p);
        let delta = y - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (y - mean);
    }
    let var = m2 / (samples - 1) as f64;
    let se = (var / samples as f64).sqrt();
    let value = mean.powf(1.0 / p);
    let ci_halfwidth = if mean > 0.0 {
        Z_95 * se * value / (p * mean)
    } else {
        0.0
    };
    Ok(NormEstimate {
        p: Lp::Finite(p),
        value,
        mode: NormMode::MonteCarlo,
        ci_halfwidth,
        sample_count: samples,
        seed: Some(seed),
        exact_power: None,
    })
}

/// A grid function that is a polynomial in one parameter: `Σ_k t^k L_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedGrid<T> {
    pub layers: Vec<GridFunction<T>>,
}

impl<T: Scalar> GradedGrid<T> {
    pub fn new(layers: Vec<GridFunction<T>>) -> Result<Self, GridError> {
        if let Some(first) = layers.first() {
            if layers.iter().any(|l| l.grid() != first.grid()) {
                return Err(GridError::DimensionMismatch {
                    expected: first.dim(),
                    got: first.dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.layers.first().map(|l| l.grid())
    }

    fn cell_value_f64(&self, i: usize, t: f64) -> f64 {
        self.layers
            .iter()
            .rev()
            .fold(0.0, |acc, l| acc * t + l.values()[i].approx_f64())
    }

    fn cell_value_exact(&self, i: usize, t: &BigRational) -> BigRational {
        self.layers
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, l| acc * t + l.values()[i].to_rational())
    }

    /// `‖Σ t^k L_k‖_p` evaluated in `f64`.
    pub fn lp_norm_f64(&self, t: f64, p: f64) -> Result<NormEstimate, GridError> {
        if !(p >= 1.0) {
            return Err(GridError::InvalidExponent(p));
        }
        let Some(g) = self.grid() else {
            return Ok(NormEstimate::exact(Lp::Finite(p), 0.0, None));
        };
        let s: f64 = (0..g.cells()).map(|i| self.cell_value_f64(i, t).abs().powf(p)).sum();
        let vol = 0.5f64.powi(g.log2_cells() as i32);
        Ok(NormEstimate::exact(Lp::Finite(p), (s * vol).powf(1.0 / p), None))
    }

    /// Exact `‖Σ t^k L_k‖_1` for rational `t`.
    pub fn l1_norm_exact(&self, t: &BigRational) -> NormEstimate {
        let Some(g) = self.grid() else {
            return NormEstimate::exact(Lp::Finite(1.0), 0.0, Some(BigRational::zero()));
        };
        let mut acc = BigRational::zero();
        for i in 0..g.cells() {
            acc += self.cell_value_exact(i, t).abs();
        }
        let power = acc * g.cell_volume();
        NormEstimate::exact(Lp::Finite(1.0), Scalar::approx_f64(&power), Some(power))
    }

    pub fn evaluate_exact(&self, t: &BigRational) -> Option<GridFunction<BigRational>> {
        let g = self.grid()?.clone();
        let values = (0..g.cells()).map(|i| self.cell_value_exact(i, t)).collect();
        GridFunction::new(g, values).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{make_interval, DyadicBox};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn atom1(k: u32, a: i64) -> SignedHaarAtom {
        SignedHaarAtom::plus(DyadicBox::new(&[make_interval(k, a).unwrap()]).unwrap())
    }

    #[test]
    fn materialize_examples() {
        let g = Grid::new(&[1]).unwrap();
        let f = materialize(&HaarExpr::Atom(atom1(0, 0)), &g).unwrap();
        assert_eq!(f.values(), &[-1, 1]);
        let one = materialize(&HaarExpr::Const(1), &Grid::new(&[3]).unwrap()).unwrap();
        assert!(one.values().iter().all(|&v| v == 1));
        let cancel = HaarExpr::Sum(vec![
            HaarExpr::Const(1),
            HaarExpr::Atom(atom1(0, 0)),
            HaarExpr::Scaled(-1, Box::new(HaarExpr::Atom(atom1(0, 0)))),
        ]);
        let c = materialize(&cancel, &Grid::new(&[2]).unwrap()).unwrap();
        assert!(c.values().iter().all(|&v| v == 1));
        assert_eq!(
            materialize(&HaarExpr::Atom(atom1(2, 1)), &Grid::new(&[2]).unwrap()),
            Err(GridError::ResolutionTooCoarse { axis: 0, need: 3, have: 2 })
        );
    }

    #[test]
    fn lp_norm_examples() {
        let g = Grid::new(&[2]).unwrap();
        let one = GridFunction::constant(g.clone(), 1i64);
        for p in [1.0, 2.0, 3.5] {
            assert!((one.lp_norm(Lp::Finite(p)).unwrap().value - 1.0).abs() < 1e-15);
        }
        let h = materialize(&HaarExpr::Atom(atom1(1, 0)), &g).unwrap();
        let n2 = h.lp_norm(Lp::Finite(2.0)).unwrap();
        assert_eq!(n2.exact_power, Some(rat(1, 2)));
        assert!((n2.value - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(h.lp_norm(Lp::Infinity).unwrap().value, 1.0);
        assert!(h.lp_norm(Lp::Finite(0.5)).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = Grid::new(&[2]).unwrap();
        let h = materialize(&HaarExpr::Atom(atom1(1, 0)), &g).unwrap();
        assert_eq!(inner_product(&h, &h).unwrap(), rat(1, 2));
        let h2 = materialize(&HaarExpr::Atom(atom1(1, 1)), &Grid::new(&[3]).unwrap()).unwrap();
        assert_eq!(inner_product(&h, &h2).unwrap(), rat(0, 1));
        let whole = materialize(&HaarExpr::Atom(atom1(0, 0)), &Grid::new(&[1]).unwrap()).unwrap();
        assert_eq!(whole.moment(), rat(1, 4));
    }

    #[test]
    fn refinement_keeps_integrals() {
        let expr = HaarExpr::Sum(vec![
            HaarExpr::Atom(atom1(0, 0)),
            HaarExpr::Scaled(3, Box::new(HaarExpr::Atom(atom1(1, 1)))),
            HaarExpr::Const(2),
        ]);
        let f = materialize(&expr, &Grid::new(&[2]).unwrap()).unwrap();
        let r = f.refine(&[5]).unwrap();
        assert_eq!(f.power_integral(3), r.power_integral(3));
        assert_eq!(f.moment(), r.moment());
        assert_eq!(inner_product(&f, &f).unwrap(), inner_product(&r, &f).unwrap());
    }

    #[test]
    fn square_function_examples() {
        let b = |k, a| DyadicBox::new(&[make_interval(k, a).unwrap()]).unwrap();
        let s = square_function(&HaarExpansion::new(1, vec![(b(1, 0), 1)]).unwrap(), Layering::ByLevel).unwrap();
        assert_eq!(s.squared.values(), &[1, 1, 0, 0]);
        let pair = HaarExpansion::new(1, vec![(b(1, 0), 1), (b(1, 1), 1)]).unwrap();
        let s = square_function(&pair, Layering::ByLevel).unwrap();
        assert!(s.squared.values().iter().all(|&v| v == 1));
        let r = lp_ratio_report(&HaarExpansion::new(1, vec![(b(2, 1), 1)]).unwrap(), 4.0).unwrap();
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn mc_examples() {
        let c = mc_lp_norm(|_| 1.0, 2, 3.0, 1000, 7).unwrap();
        assert_eq!((c.value, c.ci_halfwidth), (1.0, 0.0));
        let h = atom1(0, 0);
        let e = mc_lp_norm(|x| h.eval(x).unwrap() as f64, 1, 1.0, 100_000, 1).unwrap();
        assert!((e.value - 1.0).abs() <= e.ci_halfwidth + 1e-12);
        assert!(mc_lp_norm(|_| 1.0, 1, 1.0, 1, 0).is_err());
        let a = mc_lp_norm(|x| x[0], 1, 2.0, 5000, 11).unwrap();
        let b = mc_lp_norm(|x| x[0], 1, 2.0, 5000, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn graded_grid_matches_exact_evaluation() {
        let g = Grid::new(&[1]).unwrap();
        let l0 = GridFunction::constant(g.clone(), 1i64);
        let l1 = materialize(&HaarExpr::Atom(atom1(0, 0)), &g).unwrap();
        let gg = GradedGrid::new(vec![l0, l1]).unwrap();
        // 1 + h/2 takes values 1/2 and 3/2.
        let n = gg.l1_norm_exact(&rat(1, 2));
        assert_eq!(n.exact_power, Some(rat(1, 1)));
        assert!((gg.lp_norm_f64(0.5, 1.0).unwrap().value - 1.0).abs() < 1e-15);
    }
}
