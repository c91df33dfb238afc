//! Point sets in `[0,1)^d` and exact evaluation of their discrepancy function
//! `D_N(x) = N λ([0,x)) - #(P ∩ [0,x))`.
//!
//! Coordinates are `f64`, and every `f64` in `[0,1)` is a dyadic rational, so all
//! exact quantities below are exact for the stored coordinates.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dyadic::{cell_of, pow2_rational, DyadicBox, DyadicInterval, MAX_DIM};
use crate::gridfn::{GridFunction, Scalar};

/// Default work budget for the exact star discrepancy: `#corners * N`.
pub const DEFAULT_STAR_BUDGET: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointSetError {
    #[error("a point set needs at least one point")]
    Empty,
    #[error("unsupported dimension {0} (supported: 1..=3)")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {point}, coordinate {coord}: {value} is outside [0,1)")]
    OutOfRange { point: usize, coord: usize, value: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("grid point sets need N = m^d; {n} is not a perfect power of degree {d}")]
    GridSizeNotPower { n: usize, d: usize },
    #[error("random point sets need a seed")]
    SeedRequired,
    #[error("work estimate {work} exceeds the budget {budget}")]
    BudgetExceeded { work: u64, budget: u64 },
    #[error("grid pairing needs integer cell values")]
    NonIntegerGrid,
    #[error("{0}")]
    Io(String),
}

/// `N` points in `[0,1)^d`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    label: String,
}

impl PointSet {
    pub fn from_flat(dim: usize, coords: Vec<f64>, label: impl Into<String>) -> Result<Self, PointSetError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(PointSetError::UnsupportedDimension(dim));
        }
        if coords.is_empty() {
            return Err(PointSetError::Empty);
        }
        if coords.len() % dim != 0 {
            return Err(PointSetError::DimensionMismatch {
                expected: dim,
                got: coords.len() % dim,
            });
        }
        for (i, &v) in coords.iter().enumerate() {
            if !(0.0..1.0).contains(&v) {
                return Err(PointSetError::OutOfRange {
                    point: i / dim,
                    coord: i % dim,
                    value: v,
                });
            }
        }
        Ok(Self {
            dim,
            coords,
            label: label.into(),
        })
    }

    pub fn new(points: &[Vec<f64>], label: impl Into<String>) -> Result<Self, PointSetError> {
        let dim = points.first().ok_or(PointSetError::Empty)?.len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(PointSetError::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        Self::from_flat(dim, points.concat(), label)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointKind {
    VanDerCorput,
    Hammersley,
    Random,
    Grid,
}

impl FromStr for PointKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vandercorput" | "van-der-corput" | "vdc" | "halton" => Ok(PointKind::VanDerCorput),
            "hammersley" => Ok(PointKind::Hammersley),
            "random" => Ok(PointKind::Random),
            "grid" => Ok(PointKind::Grid),
            other => Err(format!("unknown point-set kind '{other}'")),
        }
    }
}

impl PointKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointKind::VanDerCorput => "vanDerCorput",
            PointKind::Hammersley => "hammersley",
            PointKind::Random => "random",
            PointKind::Grid => "grid",
        }
    }
}

const PRIMES: [u64; 3] = [2, 3, 5];

/// Radical inverse of `i` in base `b`, rounded once to `f64` (exact for base 2).
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut num: u128 = 0;
    let mut den: u128 = 1;
    while i > 0 {
        num = num * base as u128 + (i % base) as u128;
        den *= base as u128;
        i /= base;
    }
    (num as f64) / (den as f64)
}

/// Deterministic point-set generator.
///
/// `VanDerCorput` uses the radical inverse in bases 2, 3, 5 for axes 1..3 (the
/// one-dimensional case is the base-2 van der Corput sequence); `Hammersley`
/// prepends `i/N` to the first `d-1` of those axes; `Random` draws from ChaCha8
/// with the given seed; `Grid` is the `m^d` lattice `{i/m}`.
pub fn generate(kind: PointKind, n: usize, d: usize, seed: Option<u64>) -> Result<PointSet, PointSetError> {
    if d == 0 || d > MAX_DIM {
        return Err(PointSetError::UnsupportedDimension(d));
    }
    if n == 0 {
        return Err(PointSetError::Empty);
    }
    let mut coords = Vec::with_capacity(n * d);
    let label;
    match kind {
        PointKind::VanDerCorput => {
            for i in 0..n as u64 {
                coords.extend(PRIMES[..d].iter().map(|&b| radical_inverse(i, b)));
            }
            label = format!("vanDerCorput(N={n},d={d})");
        }
        PointKind::Hammersley => {
            for i in 0..n as u64 {
                coords.push(i as f64 / n as f64);
                coords.extend(PRIMES[..d - 1].iter().map(|&b| radical_inverse(i, b)));
            }
            label = format!("hammersley(N={n},d={d})");
        }
        PointKind::Random => {
            let seed = seed.ok_or(PointSetError::SeedRequired)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..n * d {
                coords.push(rng.gen::<f64>());
            }
            label = format!("random(N={n},d={d},seed={seed})");
        }
        PointKind::Grid => {
            let m = (n as f64).powf(1.0 / d as f64).round() as usize;
            if m.pow(d as u32) != n {
                return Err(PointSetError::GridSizeNotPower { n, d });
            }
            for i in 0..n {
                let mut rest = i;
                let mut p = [0usize; MAX_DIM];
                for t in (0..d).rev() {
                    p[t] = rest % m;
                    rest /= m;
                }
                coords.extend(p[..d].iter().map(|&c| c as f64 / m as f64));
            }
            label = format!("grid(N={n},d={d})");
        }
    }
    PointSet::from_flat(d, coords, label)
}

/// Parse the text point format: one point per line, whitespace separated,
/// `#` starts a comment.
pub fn parse_points(text: &str, label: &str) -> Result<PointSet, PointSetError> {
    let mut dim = None;
    let mut coords = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| PointSetError::Parse {
            line: ln + 1,
            message: e.to_string(),
        })?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(PointSetError::Parse {
                    line: ln + 1,
                    message: format!("expected {d} coordinates, found {}", row.len()),
                })
            }
            _ => {}
        }
        coords.extend(row);
    }
    let dim = dim.ok_or(PointSetError::Empty)?;
    PointSet::from_flat(dim, coords, label)
}

pub fn read_points(path: &Path) -> Result<PointSet, PointSetError> {
    let text = std::fs::read_to_string(path).map_err(|e| PointSetError::Io(format!("{}: {e}", path.display())))?;
    parse_points(&text, &path.display().to_string())
}

/// Inverse of [`parse_points`]; `f64` formatting round-trips exactly.
pub fn format_points(p: &PointSet) -> String {
    let mut out = format!("# {}\n", p.label());
    for x in p.points() {
        let row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coordinate")
}

fn nat(n: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact `D_N(x)` for `x` in `[0,1]^d`.
pub fn discrepancy_value(p: &PointSet, x: &[f64]) -> Result<BigRational, PointSetError> {
    if x.len() != p.dim() {
        return Err(PointSetError::DimensionMismatch {
            expected: p.dim(),
            got: x.len(),
        });
    }
    let vol: BigRational = x.iter().map(|&v| exact(v)).product();
    let count = p.points().filter(|q| q.iter().zip(x).all(|(a, b)| a < b)).count();
    Ok(nat(p.len()) * vol - nat(count))
}

/// How the counting term is evaluated at a witness corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxSemantics {
    /// `N vol([0,x)) - #{p < x}`: attained at `x`.
    HalfOpen,
    /// `#{p <= x} - N vol([0,x])`: approached by boxes shrinking onto `[0,x]`.
    Closed,
}

impl BoxSemantics {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoxSemantics::HalfOpen => "half-open",
            BoxSemantics::Closed => "closed",
        }
    }
}

/// Result of an exact star-discrepancy computation.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscrepancyReport {
    pub value: f64,
    pub exact: BigRational,
    pub witness: Vec<f64>,
    pub semantics: BoxSemantics,
}

impl DiscrepancyReport {
    /// Re-evaluate the witness under its semantics.
    pub fn evaluate_witness(&self, p: &PointSet) -> BigRational {
        let x = &self.witness;
        let vol: BigRational = x.iter().map(|&v| exact(v)).product();
        let n = nat(p.len());
        match self.semantics {
            BoxSemantics::HalfOpen => {
                let c = p.points().filter(|q| q.iter().zip(x).all(|(a, b)| a < b)).count();
                n * vol - nat(c)
            }
            BoxSemantics::Closed => {
                let c = p.points().filter(|q| q.iter().zip(x).all(|(a, b)| a <= b)).count();
                nat(c) - n * vol
            }
        }
    }
}

/// Candidate corner coordinates per axis: the point coordinates and `1`.
fn critical_values(p: &PointSet) -> Vec<Vec<f64>> {
    (0..p.dim())
        .map(|t| {
            let mut v: Vec<f64> = p.points().map(|q| q[t]).collect();
            v.push(1.0);
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            v.dedup();
            v
        })
        .collect()
}

/// Exact star discrepancy `sup_x |D_N(x)|`.
///
/// The supremum over anchored boxes is attained or approached at corners whose
/// coordinates are point coordinates or 1. At each corner both `N vol - #{p < x}`
/// and `#{p <= x} - N vol` are evaluated; the larger is the local supremum.
/// A floating-point pass finds the near-maximal corners, which are then
/// re-evaluated exactly.
pub fn star_discrepancy_exact(p: &PointSet) -> Result<DiscrepancyReport, PointSetError> {
    star_discrepancy_with_budget(p, DEFAULT_STAR_BUDGET)
}

pub fn star_discrepancy_with_budget(p: &PointSet, budget: u64) -> Result<DiscrepancyReport, PointSetError> {
    let gamma = critical_values(p);
    let d = p.dim();
    let corners: u64 = gamma.iter().map(|g| g.len() as u64).product();
    let work = corners.saturating_mul(p.len() as u64);
    if work > budget {
        return Err(PointSetError::BudgetExceeded { work, budget });
    }
    let n = p.len() as f64;
    let sizes: Vec<usize> = gamma.iter().map(Vec::len).collect();
    let corner_at = |mut idx: u64, x: &mut [f64; MAX_DIM]| {
        for t in (0..d).rev() {
            x[t] = gamma[t][(idx % sizes[t] as u64) as usize];
            idx /= sizes[t] as u64;
        }
    };
    let eval = |idx: u64| -> (f64, f64) {
        let mut x = [0.0; MAX_DIM];
        corner_at(idx, &mut x);
        let (mut open, mut closed) = (0usize, 0usize);
        for q in p.points() {
            let mut lt = true;
            let mut le = true;
            for t in 0..d {
                lt &= q[t] < x[t];
                le &= q[t] <= x[t];
            }
            open += lt as usize;
            closed += le as usize;
        }
        let vol: f64 = x[..d].iter().product();
        (n * vol - open as f64, closed as f64 - n * vol)
    };
    let best = (0..corners)
        .into_par_iter()
        .map(|i| {
            let (a, b) = eval(i);
            a.max(b)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    // Rounding in the f64 pass is far below this margin for N <= 2^20.
    let tol = 1e-9 * n.max(1.0);
    let candidates: Vec<u64> = (0..corners)
        .into_par_iter()
        .filter(|&i| {
            let (a, b) = eval(i);
            a.max(b) >= best - tol
        })
        .collect();
    let mut report: Option<DiscrepancyReport> = None;
    for idx in candidates {
        let mut x = [0.0; MAX_DIM];
        corner_at(idx, &mut x);
        for semantics in [BoxSemantics::HalfOpen, BoxSemantics::Closed] {
            let cand = DiscrepancyReport {
                value: 0.0,
                exact: BigRational::zero(),
                witness: x[..d].to_vec(),
                semantics,
            };
            let v = cand.evaluate_witness(p);
            if report.as_ref().map_or(true, |r| v > r.exact) {
                report = Some(DiscrepancyReport {
                    value: v.to_f64().unwrap_or(f64::NAN),
                    exact: v,
                    ..cand
                });
            }
        }
    }
    Ok(report.expect("at least one corner"))
}

/// Exact `‖D_N‖_2^2` and its square root.
#[derive(Clone, Debug, PartialEq)]
pub struct L2Report {
    pub squared: BigRational,
    pub value: f64,
}

/// `∫ D_N^2 = N^2/3^d - 2N Σ_p Π (1-p_t^2)/2 + Σ_{p,p'} Π (1 - max(p_t,p'_t))`.
pub fn l2_discrepancy_exact(p: &PointSet) -> L2Report {
    let d = p.dim();
    let n = nat(p.len());
    let one = BigRational::one();
    let two = BigRational::from_integer(2.into());
    let pts: Vec<Vec<BigRational>> = p.points().map(|q| q.iter().map(|&v| exact(v)).collect()).collect();
    let mut first = n.clone() * n.clone();
    for _ in 0..d {
        first /= BigRational::from_integer(3.into());
    }
    let mut second = BigRational::zero();
    for q in &pts {
        second += q
            .iter()
            .map(|v| (&one - v * v) / &two)
            .product::<BigRational>();
    }
    let mut third = BigRational::zero();
    for (i, a) in pts.iter().enumerate() {
        for (j, b) in pts.iter().enumerate().skip(i) {
            let term: BigRational = a.iter().zip(b).map(|(x, y)| &one - x.max(y)).product();
            third += if i == j { term } else { term * &two };
        }
    }
    let squared = first - two * n * second + third;
    let value = squared.to_f64().unwrap_or(f64::NAN).sqrt();
    L2Report { squared, value }
}

/// `∫ 1_{x > p} h_J(x) dx`: the tent `min(p - l, l + |J| - p)` on `J`, zero outside.
pub fn tent(p: &BigRational, j: &DyadicInterval) -> BigRational {
    let l = j.left();
    let r = j.right();
    if *p <= l || *p >= r {
        return BigRational::zero();
    }
    (p - &l).min(&r - p)
}

/// Exact `⟨D_N, h_R⟩ = N Π |J_t|^2/4 - Σ_p Π tent(p_t, J_t)`.
pub fn haar_coefficient(p: &PointSet, r: &DyadicBox) -> Result<BigRational, PointSetError> {
    if r.dim() != p.dim() {
        return Err(PointSetError::DimensionMismatch {
            expected: p.dim(),
            got: r.dim(),
        });
    }
    let mut counting = BigRational::zero();
    for q in p.points().filter(|q| r.contains_point(q)) {
        counting += r
            .intervals()
            .iter()
            .zip(q)
            .map(|(j, &v)| tent(&exact(v), j))
            .product::<BigRational>();
    }
    Ok(linear_part(p.len(), &r.shape()) - counting)
}

/// `N Π_t 2^{-2 k_t} / 4`, the contribution of `N x_1...x_d` to every box of a shape.
pub fn linear_part(n: usize, shape: &[u32]) -> BigRational {
    let e: i64 = shape.iter().map(|&k| 2 * k as i64 + 2).sum();
    nat(n) * pow2_rational(-e)
}

/// Linear index of a box of the given shape (axis 0 most significant).
pub fn box_index(shape: &[u32], offsets: &[u64]) -> u64 {
    shape.iter().zip(offsets).fold(0u64, |acc, (&k, &a)| (acc << k) | a)
}

pub fn box_from_index(shape: &[u32], index: u64) -> DyadicBox {
    DyadicBox::from_index(shape, index).expect("index is in range for the shape")
}

/// All Haar coefficients of `D_N` for one shape. Boxes without points share the
/// linear part; occupied boxes are stored individually.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeCoefficients {
    pub shape: Vec<u32>,
    pub linear: BigRational,
    pub occupied: HashMap<u64, BigRational>,
}

impl ShapeCoefficients {
    pub fn box_count(&self) -> u64 {
        1u64 << self.shape.iter().sum::<u32>()
    }

    pub fn coefficient(&self, index: u64) -> BigRational {
        self.occupied.get(&index).cloned().unwrap_or_else(|| self.linear.clone())
    }

    /// `+1` when the coefficient is non-negative, `-1` otherwise.
    pub fn sign(&self, index: u64) -> i8 {
        match self.occupied.get(&index) {
            Some(c) if c.is_negative() => -1,
            _ => 1,
        }
    }

    /// `Σ_R |⟨D_N, h_R⟩|` over the shape.
    pub fn abs_sum(&self) -> BigRational {
        let empty = self.box_count() - self.occupied.len() as u64;
        let mut s = &self.linear * BigRational::from_integer(empty.into());
        for c in self.occupied.values() {
            s += c.abs();
        }
        s
    }

    /// `Σ_R ⟨D_N, h_R⟩^2 / |R|` over the shape.
    pub fn energy(&self) -> BigRational {
        let empty = self.box_count() - self.occupied.len() as u64;
        let mut s = &self.linear * &self.linear * BigRational::from_integer(empty.into());
        for c in self.occupied.values() {
            s += c * c;
        }
        s * BigRational::from_integer(self.box_count().into())
    }
}

pub fn shape_coefficients(p: &PointSet, shape: &[u32]) -> Result<ShapeCoefficients, PointSetError> {
    if shape.len() != p.dim() {
        return Err(PointSetError::DimensionMismatch {
            expected: p.dim(),
            got: shape.len(),
        });
    }
    let linear = linear_part(p.len(), shape);
    let mut counting: HashMap<u64, BigRational> = HashMap::new();
    for q in p.points() {
        let offsets: Vec<u64> = shape.iter().zip(q).map(|(&k, &v)| cell_of(v, k)).collect();
        let idx = box_index(shape, &offsets);
        let bx = box_from_index(shape, idx);
        let c: BigRational = bx
            .intervals()
            .iter()
            .zip(q)
            .map(|(j, &v)| tent(&exact(v), j))
            .product();
        *counting.entry(idx).or_insert_with(BigRational::zero) += c;
    }
    let occupied = counting.into_iter().map(|(k, c)| (k, &linear - c)).collect();
    Ok(ShapeCoefficients {
        shape: shape.to_vec(),
        linear,
        occupied,
    })
}

/// One row of the cumulative Bessel sum.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumRow {
    pub max_level: u32,
    pub bessel_sum: BigRational,
}

/// `Σ_R ⟨D_N,h_R⟩^2/|R|` over all boxes with every `k_t <= L`, for `L = 0..=max_level`.
pub fn haar_spectrum(p: &PointSet, max_level: u32) -> Result<Vec<SpectrumRow>, PointSetError> {
    let d = p.dim();
    let mut rows = Vec::new();
    let mut acc = BigRational::zero();
    for level in 0..=max_level {
        // Shapes whose maximum entry is exactly `level`.
        let side = level as u64 + 1;
        for code in 0..side.pow(d as u32) {
            let mut shape = vec![0u32; d];
            let mut rest = code;
            for s in shape.iter_mut() {
                *s = (rest % side) as u32;
                rest /= side;
            }
            if shape.iter().copied().max() != Some(level) {
                continue;
            }
            let work = 1u64 << shape.iter().sum::<u32>();
            if work > 1 << 40 {
                return Err(PointSetError::BudgetExceeded { work, budget: 1 << 40 });
            }
            acc += shape_coefficients(p, &shape)?.energy();
        }
        rows.push(SpectrumRow {
            max_level: level,
            bessel_sum: acc.clone(),
        });
    }
    Ok(rows)
}

/// Exact `⟨D_N, g⟩` for an integer-valued grid function.
///
/// `⟨D_N, g⟩ = N ∫ g x_1...x_d - Σ_p ∫_{x > p} g`. The tail integrals use
/// suffix sums over the grid; the cell containing `p` on an axis contributes the
/// fraction of its length lying above `p_t`.
pub fn grid_pairing<T: Scalar>(p: &PointSet, g: &GridFunction<T>) -> Result<BigRational, PointSetError> {
    let grid = g.grid();
    let d = grid.dim();
    if d != p.dim() {
        return Err(PointSetError::DimensionMismatch {
            expected: p.dim(),
            got: d,
        });
    }
    let mut u: Vec<i64> = Vec::with_capacity(grid.cells());
    let mut abs_total: i128 = 0;
    for v in g.values() {
        let x = v.as_i64().ok_or(PointSetError::NonIntegerGrid)?;
        abs_total += (x as i128).abs();
        u.push(x);
    }
    if abs_total >= 1i128 << 62 {
        return Err(PointSetError::BudgetExceeded {
            work: u64::try_from(abs_total).unwrap_or(u64::MAX),
            budget: 1 << 62,
        });
    }
    let res = grid.res();
    let strides: Vec<usize> = (0..d).map(|t| 1usize << grid.shift(t)).collect();
    for t in 0..d {
        let size = 1u64 << res[t];
        let stride = strides[t];
        for idx in (0..u.len()).rev() {
            let c = (idx >> grid.shift(t)) as u64 & (size - 1);
            if c + 1 < size {
                u[idx] += u[idx + stride];
            }
        }
    }
    let lookup = |lo: &[u64]| -> i64 {
        if lo.iter().zip(res).any(|(&c, &r)| c >= 1u64 << r) {
            0
        } else {
            u[grid.index(lo)]
        }
    };
    let one = BigRational::one();
    let mut tail = BigRational::zero();
    for q in p.points() {
        let c: Vec<u64> = (0..d).map(|t| cell_of(q[t], res[t])).collect();
        let phi: Vec<BigRational> = (0..d)
            .map(|t| {
                let scaled = q[t] * (1u64 << res[t]) as f64;
                &one - exact(scaled.fract())
            })
            .collect();
        for s in 0u32..(1 << d) {
            // Sum over cells with index c_t on axes in s and > c_t elsewhere.
            let mut sum: i64 = 0;
            let mut tsub = s;
            loop {
                let lo: Vec<u64> = (0..d)
                    .map(|t| {
                        let exact_axis = s >> t & 1 == 1;
                        let shifted = tsub >> t & 1 == 1;
                        if exact_axis && !shifted {
                            c[t]
                        } else {
                            c[t] + 1
                        }
                    })
                    .collect();
                let sign = if tsub.count_ones() % 2 == 0 { 1 } else { -1 };
                sum += sign * lookup(&lo);
                if tsub == 0 {
                    break;
                }
                tsub = (tsub - 1) & s;
            }
            if sum != 0 {
                let w: BigRational = (0..d).filter(|t| s >> t & 1 == 1).map(|t| phi[t].clone()).product();
                tail += w * BigRational::from_integer(sum.into());
            }
        }
    }
    Ok(nat(p.len()) * g.moment() - tail * grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::SignedHaarAtom;
    use crate::gridfn::{materialize, Grid, HaarExpr};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn pts(v: &[&[f64]]) -> PointSet {
        PointSet::new(&v.iter().map(|p| p.to_vec()).collect::<Vec<_>>(), "test").unwrap()
    }

    #[test]
    fn generator_examples() {
        let v = generate(PointKind::VanDerCorput, 4, 1, None).unwrap();
        assert_eq!(v.coords(), &[0.0, 0.5, 0.25, 0.75]);
        let h = generate(PointKind::Hammersley, 2, 2, None).unwrap();
        assert_eq!(h.coords(), &[0.0, 0.0, 0.5, 0.5]);
        let g = generate(PointKind::Grid, 4, 1, None).unwrap();
        assert_eq!(g.coords(), &[0.0, 0.25, 0.5, 0.75]);
        assert_eq!(
            generate(PointKind::Grid, 5, 2, None),
            Err(PointSetError::GridSizeNotPower { n: 5, d: 2 })
        );
        assert_eq!(generate(PointKind::Random, 3, 2, None), Err(PointSetError::SeedRequired));
        assert_eq!(generate(PointKind::Random, 3, 4, Some(1)), Err(PointSetError::UnsupportedDimension(4)));
        assert_eq!(
            generate(PointKind::Random, 5, 3, Some(9)),
            generate(PointKind::Random, 5, 3, Some(9))
        );
    }

    #[test]
    fn discrepancy_value_examples() {
        let p = pts(&[&[0.5]]);
        assert_eq!(discrepancy_value(&p, &[0.75]).unwrap(), rat(-1, 4));
        assert_eq!(discrepancy_value(&p, &[0.5]).unwrap(), rat(1, 2));
        let q = pts(&[&[0.5, 0.5]]);
        assert_eq!(discrepancy_value(&q, &[0.75, 0.75]).unwrap(), rat(-7, 16));
    }

    #[test]
    fn star_examples() {
        assert_eq!(star_discrepancy_exact(&pts(&[&[0.5]])).unwrap().exact, rat(1, 2));
        let r = star_discrepancy_exact(&pts(&[&[0.0]])).unwrap();
        assert_eq!(r.exact, rat(1, 1));
        assert_eq!(r.semantics, BoxSemantics::Closed);
        assert_eq!(star_discrepancy_exact(&pts(&[&[0.25], &[0.75]])).unwrap().exact, rat(1, 2));
    }

    #[test]
    fn l2_of_single_midpoint() {
        assert_eq!(l2_discrepancy_exact(&pts(&[&[0.5]])).squared, rat(1, 12));
    }

    #[test]
    fn haar_coefficient_examples() {
        let p = pts(&[&[0.5]]);
        let whole = DyadicBox::unit(1).unwrap();
        assert_eq!(haar_coefficient(&p, &whole).unwrap(), rat(-1, 4));
        let q = pts(&[&[0.5, 0.5]]);
        let b = DyadicBox::from_shape(&[1, 1], &[0, 0]).unwrap();
        assert_eq!(haar_coefficient(&q, &b).unwrap(), rat(1, 256));
        // A point below the box in one coordinate contributes nothing.
        let r = pts(&[&[0.1, 0.6]]);
        let b = DyadicBox::from_shape(&[1, 1], &[1, 1]).unwrap();
        assert_eq!(haar_coefficient(&r, &b).unwrap(), linear_part(1, &[1, 1]));
    }

    #[test]
    fn grid_pairing_matches_closed_form() {
        let p = generate(PointKind::Random, 7, 2, Some(3)).unwrap();
        for (shape, off) in [([0u32, 0u32], [0u64, 0u64]), ([1, 2], [1, 3]), ([3, 0], [5, 0])] {
            let bx = DyadicBox::from_shape(&shape, &off).unwrap();
            let g = materialize(
                &HaarExpr::Atom(SignedHaarAtom::plus(bx)),
                &Grid::new(&[shape[0] + 2, shape[1] + 1]).unwrap(),
            )
            .unwrap();
            assert_eq!(grid_pairing(&p, &g).unwrap(), haar_coefficient(&p, &bx).unwrap());
        }
        let one = GridFunction::constant(Grid::new(&[1, 1]).unwrap(), 1i64);
        let mean = grid_pairing(&p, &one).unwrap();
        let direct = nat(7) / BigRational::from_integer(4.into())
            - p.points().map(|q| (nat(1) - exact(q[0])) * (nat(1) - exact(q[1]))).sum::<BigRational>();
        assert_eq!(mean, direct);
    }

    #[test]
    fn shape_coefficients_agree_with_single_boxes() {
        let p = generate(PointKind::VanDerCorput, 9, 2, None).unwrap();
        let sc = shape_coefficients(&p, &[2, 1]).unwrap();
        for idx in 0..sc.box_count() {
            let bx = box_from_index(&[2, 1], idx);
            assert_eq!(sc.coefficient(idx), haar_coefficient(&p, &bx).unwrap());
        }
    }

    #[test]
    fn parse_format_round_trip() {
        let p = generate(PointKind::Random, 6, 3, Some(5)).unwrap();
        let q = parse_points(&format_points(&p), "x").unwrap();
        assert_eq!(p.coords(), q.coords());
        assert!(parse_points("0.1 0.2\n0.3\n", "x").is_err());
        assert!(parse_points("# only comments\n", "x").is_err());
        assert!(parse_points("1.0\n", "x").is_err());
    }
}
