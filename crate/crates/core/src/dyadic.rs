//! Dyadic intervals, dyadic boxes and signed Haar atoms.
//!
//! Everything in this module is exact. Intervals are stored as `(level, offset)`
//! pairs, endpoints and measures are returned as [`BigRational`] and point
//! evaluation uses the exact identity `floor(x * 2^k)` on `f64` inputs (scaling
//! by a power of two never rounds).

use std::fmt;
use std::ops::{Mul, Neg};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

/// Largest supported dimension of a dyadic box.
pub const MAX_DIM: usize = 3;

/// Largest supported level; offsets must fit in a `u64`.
pub const MAX_LEVEL: u32 = 62;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DyadicError {
    #[error("offset {offset} is out of range for level {level} (need 0 <= a < 2^{level})")]
    OffsetOutOfRange { level: u32, offset: i64 },
    #[error("level {0} exceeds the supported maximum of {MAX_LEVEL}")]
    LevelTooLarge(u32),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported dimension {0} (supported: 1..=3)")]
    UnsupportedDimension(usize),
    #[error("coordinate {coord} carries two atoms of level {level}; product rule does not apply")]
    NotStronglyDistinct { coord: usize, level: u32 },
    #[error("boxes have empty intersection")]
    EmptyIntersection,
    #[error("product of an empty atom list")]
    EmptyProduct,
}

/// A sign in `{-1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn to_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn to_i64(self) -> i64 {
        self.to_i8() as i64
    }

    /// `+1` for non-negative values, `-1` otherwise (ties go to `+1`).
    pub fn of_nonneg<T: PartialOrd + Zero>(value: &T) -> Sign {
        if *value >= T::zero() {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn from_i8(v: i8) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl Mul for Sign {
    type Output = Sign;
    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl Neg for Sign {
    type Output = Sign;
    fn neg(self) -> Sign {
        self * Sign::Minus
    }
}

/// How two dyadic intervals sit relative to each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalRelation {
    Disjoint,
    Equal,
    /// The first interval strictly contains the second.
    Contains,
    /// The first interval is strictly contained in the second.
    ContainedIn,
}

/// The interval `[a 2^-k, (a+1) 2^-k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    level: u32,
    offset: u64,
}

/// Power of two as an exact rational.
pub(crate) fn pow2_rational(exp: i64) -> BigRational {
    let one = BigInt::one();
    if exp >= 0 {
        BigRational::from_integer(one << exp as usize)
    } else {
        BigRational::new(one.clone(), one << (-exp) as usize)
    }
}

/// `floor(x * 2^level)` for `x` in `[0, 1)`; exact because scaling by a power of
/// two does not round.
#[inline]
pub fn cell_of(x: f64, level: u32) -> u64 {
    (x * (1u64 << level) as f64).floor() as u64
}

impl DyadicInterval {
    pub const UNIT: DyadicInterval = DyadicInterval { level: 0, offset: 0 };

    pub fn new(level: u32, offset: i64) -> Result<Self, DyadicError> {
        if level > MAX_LEVEL {
            return Err(DyadicError::LevelTooLarge(level));
        }
        if offset < 0 || (offset as u64) >= (1u64 << level) {
            return Err(DyadicError::OffsetOutOfRange { level, offset });
        }
        Ok(Self {
            level,
            offset: offset as u64,
        })
    }

    /// Constructor for callers that already hold a valid `(level, offset)`.
    pub(crate) fn from_parts(level: u32, offset: u64) -> Self {
        debug_assert!(level <= MAX_LEVEL && offset < (1u64 << level));
        Self { level, offset }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn left(&self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.offset)) * pow2_rational(-(self.level as i64))
    }

    pub fn right(&self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.offset + 1)) * pow2_rational(-(self.level as i64))
    }

    pub fn length(&self) -> BigRational {
        pow2_rational(-(self.level as i64))
    }

    pub fn contains(&self, x: f64) -> bool {
        (0.0..1.0).contains(&x) && cell_of(x, self.level) == self.offset
    }

    /// The ancestor of this interval at a coarser (or equal) level.
    pub fn ancestor(&self, level: u32) -> DyadicInterval {
        assert!(level <= self.level, "ancestor level must not exceed own level");
        DyadicInterval {
            level,
            offset: self.offset >> (self.level - level),
        }
    }

    pub fn left_half(&self) -> DyadicInterval {
        DyadicInterval {
            level: self.level + 1,
            offset: 2 * self.offset,
        }
    }

    pub fn right_half(&self) -> DyadicInterval {
        DyadicInterval {
            level: self.level + 1,
            offset: 2 * self.offset + 1,
        }
    }

    pub fn relation(&self, other: &DyadicInterval) -> IntervalRelation {
        use std::cmp::Ordering::*;
        match self.level.cmp(&other.level) {
            Equal if self.offset == other.offset => IntervalRelation::Equal,
            Equal => IntervalRelation::Disjoint,
            Less if other.ancestor(self.level) == *self => IntervalRelation::Contains,
            Greater if self.ancestor(other.level) == *other => IntervalRelation::ContainedIn,
            _ => IntervalRelation::Disjoint,
        }
    }

    /// Intersection of two dyadic intervals, which is again dyadic or empty.
    pub fn intersect(&self, other: &DyadicInterval) -> Option<DyadicInterval> {
        match self.relation(other) {
            IntervalRelation::Disjoint => None,
            IntervalRelation::Equal | IntervalRelation::ContainedIn => Some(*self),
            IntervalRelation::Contains => Some(*other),
        }
    }

    /// `h_J(x)`: `-1` on the left half, `+1` on the right half, `0` outside.
    pub fn haar_at(&self, x: f64) -> i8 {
        if !(0.0..1.0).contains(&x) || self.level >= MAX_LEVEL {
            return 0;
        }
        let c = cell_of(x, self.level + 1);
        if c >> 1 != self.offset {
            0
        } else if c & 1 == 0 {
            -1
        } else {
            1
        }
    }

    /// Constant value of `h_J` on a strictly finer interval contained in `J`.
    pub fn haar_on(&self, finer: &DyadicInterval) -> Option<i8> {
        if finer.level <= self.level || finer.ancestor(self.level) != *self {
            return None;
        }
        let half = finer.ancestor(self.level + 1).offset & 1;
        Some(if half == 0 { -1 } else { 1 })
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}/2^{}, {}/2^{})", self.offset, self.level, self.offset + 1, self.level)
    }
}

/// `make_interval(k, a)`.
pub fn make_interval(level: u32, offset: i64) -> Result<DyadicInterval, DyadicError> {
    DyadicInterval::new(level, offset)
}

/// A product `J_1 x ... x J_d` of dyadic intervals, `d <= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicBox {
    dim: u8,
    intervals: [DyadicInterval; MAX_DIM],
}

impl DyadicBox {
    pub fn new(intervals: &[DyadicInterval]) -> Result<Self, DyadicError> {
        let d = intervals.len();
        if d == 0 || d > MAX_DIM {
            return Err(DyadicError::UnsupportedDimension(d));
        }
        let mut iv = [DyadicInterval::UNIT; MAX_DIM];
        iv[..d].copy_from_slice(intervals);
        Ok(Self {
            dim: d as u8,
            intervals: iv,
        })
    }

    /// The box of the given shape whose offsets are `offsets`.
    pub fn from_shape(shape: &[u32], offsets: &[u64]) -> Result<Self, DyadicError> {
        if shape.len() != offsets.len() {
            return Err(DyadicError::DimensionMismatch {
                expected: shape.len(),
                got: offsets.len(),
            });
        }
        let ivs: Result<Vec<_>, _> = shape
            .iter()
            .zip(offsets)
            .map(|(&k, &a)| DyadicInterval::new(k, a as i64))
            .collect();
        Self::new(&ivs?)
    }

    /// The box of the given shape with linear index `index`, axis 0 most significant.
    pub fn from_index(shape: &[u32], mut index: u64) -> Result<Self, DyadicError> {
        let d = shape.len();
        if d == 0 || d > MAX_DIM {
            return Err(DyadicError::UnsupportedDimension(d));
        }
        let total: u32 = shape.iter().sum();
        if let Some(&k) = shape.iter().find(|&&k| k > MAX_LEVEL) {
            return Err(DyadicError::LevelTooLarge(k));
        }
        if total > MAX_LEVEL || index >> total != 0 {
            return Err(DyadicError::OffsetOutOfRange {
                level: total.min(MAX_LEVEL),
                offset: index as i64,
            });
        }
        let mut intervals = [DyadicInterval::UNIT; MAX_DIM];
        for t in (0..d).rev() {
            intervals[t] = DyadicInterval::from_parts(shape[t], index & ((1u64 << shape[t]) - 1));
            index >>= shape[t];
        }
        Ok(Self {
            dim: d as u8,
            intervals,
        })
    }

    /// Linear index of this box among the boxes of its shape.
    pub fn index(&self) -> u64 {
        self.intervals()
            .iter()
            .fold(0u64, |acc, j| (acc << j.level) | j.offset)
    }

    pub fn unit(dim: usize) -> Result<Self, DyadicError> {
        Self::new(&vec![DyadicInterval::UNIT; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn intervals(&self) -> &[DyadicInterval] {
        &self.intervals[..self.dim as usize]
    }

    pub fn interval(&self, t: usize) -> DyadicInterval {
        self.intervals()[t]
    }

    /// Shape vector `(k_1, ..., k_d)`.
    pub fn shape(&self) -> Vec<u32> {
        self.intervals().iter().map(|j| j.level).collect()
    }

    /// `-log2 |R|`.
    pub fn volume_log2(&self) -> u32 {
        self.intervals().iter().map(|j| j.level).sum()
    }

    pub fn volume(&self) -> BigRational {
        pow2_rational(-(self.volume_log2() as i64))
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.intervals().iter().zip(x).all(|(j, &xi)| j.contains(xi))
    }

    pub fn intersect(&self, other: &DyadicBox) -> Result<Option<DyadicBox>, DyadicError> {
        if self.dim != other.dim {
            return Err(DyadicError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let mut out = *self;
        for t in 0..self.dim() {
            match self.intervals[t].intersect(&other.intervals[t]) {
                Some(j) => out.intervals[t] = j,
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// The ancestor box of the given (coordinatewise coarser) shape.
    pub fn ancestor(&self, shape: &[u32]) -> DyadicBox {
        let mut out = *self;
        for (t, &k) in shape.iter().enumerate().take(self.dim()) {
            out.intervals[t] = self.intervals[t].ancestor(k);
        }
        out
    }

    /// `h_R(x)`.
    pub fn haar_at(&self, x: &[f64]) -> i8 {
        self.intervals()
            .iter()
            .zip(x)
            .map(|(j, &xi)| j.haar_at(xi))
            .product()
    }
}

impl fmt::Display for DyadicBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, j) in self.intervals().iter().enumerate() {
            if t > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

/// The function `sign * h_R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignedHaarAtom {
    pub bx: DyadicBox,
    pub sign: Sign,
}

impl SignedHaarAtom {
    pub fn new(bx: DyadicBox, sign: Sign) -> Self {
        Self { bx, sign }
    }

    pub fn plus(bx: DyadicBox) -> Self {
        Self::new(bx, Sign::Plus)
    }

    pub fn dim(&self) -> usize {
        self.bx.dim()
    }

    /// `haar_eval`: the value `sign * h_R(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<i8, DyadicError> {
        if x.len() != self.dim() {
            return Err(DyadicError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.sign.to_i8() * self.bx.haar_at(x))
    }

    /// Value on a grid cell given per-axis cell indices at per-axis depths `res`.
    /// Requires `res[t] > level_t` on every axis.
    #[inline]
    pub fn eval_cell(&self, res: &[u32], cell: &[u64]) -> i8 {
        let mut v = self.sign.to_i8();
        for (t, j) in self.bx.intervals().iter().enumerate() {
            let shift = res[t] - j.level;
            if cell[t] >> shift != j.offset {
                return 0;
            }
            if (cell[t] >> (shift - 1)) & 1 == 0 {
                v = -v;
            }
        }
        v
    }

    /// Exact integral of `sign * h_R` against `x_1 x_2 ... x_d`, i.e. `sign * prod |J_t|^2 / 4`.
    pub fn moment(&self) -> BigRational {
        let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
        let mut acc = BigRational::from_integer(BigInt::from(self.sign.to_i64()));
        for j in self.bx.intervals() {
            let len = j.length();
            acc = acc * &len * &len * &quarter;
        }
        acc
    }
}

/// Product rule: reduce `prod_i sign_i h_{R_i}` to a single signed atom on the
/// intersection box.
///
/// Requires pairwise intersecting boxes whose levels are mutually different in
/// every coordinate. On each coordinate the coarser one-dimensional factors are
/// constant on the finest interval; their values fold into the sign.
pub fn product_reduce(atoms: &[SignedHaarAtom]) -> Result<SignedHaarAtom, DyadicError> {
    let first = atoms.first().ok_or(DyadicError::EmptyProduct)?;
    let d = first.dim();
    let mut sign = Sign::Plus;
    for a in atoms {
        if a.dim() != d {
            return Err(DyadicError::DimensionMismatch {
                expected: d,
                got: a.dim(),
            });
        }
        sign = sign * a.sign;
    }
    let mut finest = [DyadicInterval::UNIT; MAX_DIM];
    for t in 0..d {
        // Intersection first: two equal-level intervals either coincide or are disjoint.
        let mut fin = first.bx.interval(t);
        for a in &atoms[1..] {
            fin = fin
                .intersect(&a.bx.interval(t))
                .ok_or(DyadicError::EmptyIntersection)?;
        }
        finest[t] = fin;
    }
    for t in 0..d {
        for (i, a) in atoms.iter().enumerate() {
            let lvl = a.bx.interval(t).level;
            if atoms[..i].iter().any(|b| b.bx.interval(t).level == lvl) {
                return Err(DyadicError::NotStronglyDistinct { coord: t, level: lvl });
            }
        }
        for a in atoms {
            let j = a.bx.interval(t);
            if j.level < finest[t].level {
                let v = j
                    .haar_on(&finest[t])
                    .expect("intersection is contained in every factor");
                if v < 0 {
                    sign = -sign;
                }
            }
        }
    }
    let bx = DyadicBox {
        dim: d as u8,
        intervals: finest,
    };
    Ok(SignedHaarAtom { bx, sign })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(k: u32, a: i64) -> DyadicInterval {
        make_interval(k, a).unwrap()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn make_interval_examples() {
        let j = iv(0, 0);
        assert_eq!((j.left(), j.right()), (rat(0, 1), rat(1, 1)));
        let j = iv(2, 3);
        assert_eq!((j.left(), j.right()), (rat(3, 4), rat(1, 1)));
        assert_eq!(
            make_interval(1, 2),
            Err(DyadicError::OffsetOutOfRange { level: 1, offset: 2 })
        );
        assert!(make_interval(3, -1).is_err());
    }

    #[test]
    fn haar_eval_examples() {
        let whole = SignedHaarAtom::plus(DyadicBox::new(&[iv(0, 0)]).unwrap());
        assert_eq!(whole.eval(&[0.25]).unwrap(), -1);
        assert_eq!(whole.eval(&[0.75]).unwrap(), 1);
        let left = SignedHaarAtom::plus(DyadicBox::new(&[iv(1, 0)]).unwrap());
        assert_eq!(left.eval(&[0.75]).unwrap(), 0);
        assert_eq!(
            left.eval(&[0.1, 0.2]),
            Err(DyadicError::DimensionMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn relation_dichotomy() {
        assert_eq!(iv(1, 0).relation(&iv(1, 0)), IntervalRelation::Equal);
        assert_eq!(iv(1, 0).relation(&iv(1, 1)), IntervalRelation::Disjoint);
        assert_eq!(iv(1, 1).relation(&iv(3, 5)), IntervalRelation::Contains);
        assert_eq!(iv(3, 5).relation(&iv(1, 1)), IntervalRelation::ContainedIn);
        assert_eq!(iv(3, 5).relation(&iv(1, 0)), IntervalRelation::Disjoint);
    }

    #[test]
    fn product_of_whole_and_left_half() {
        let a = SignedHaarAtom::plus(DyadicBox::new(&[iv(0, 0)]).unwrap());
        let b = SignedHaarAtom::plus(DyadicBox::new(&[iv(1, 0)]).unwrap());
        let p = product_reduce(&[a, b]).unwrap();
        assert_eq!(p.bx, b.bx);
        assert_eq!(p.sign, Sign::Minus);
        // pointwise on the 2^-2 grid
        for c in 0..4u64 {
            let x = (c as f64 + 0.5) / 4.0;
            assert_eq!(p.eval(&[x]).unwrap(), a.eval(&[x]).unwrap() * b.eval(&[x]).unwrap());
        }
    }

    #[test]
    fn product_rejects_equal_levels_and_disjoint_boxes() {
        let a = SignedHaarAtom::plus(DyadicBox::new(&[iv(1, 0)]).unwrap());
        assert_eq!(
            product_reduce(&[a, a]),
            Err(DyadicError::NotStronglyDistinct { coord: 0, level: 1 })
        );
        let b = SignedHaarAtom::plus(DyadicBox::new(&[iv(1, 1)]).unwrap());
        assert_eq!(product_reduce(&[a, b]), Err(DyadicError::EmptyIntersection));
        assert_eq!(product_reduce(&[]), Err(DyadicError::EmptyProduct));
    }

    #[test]
    fn product_three_dimensional_example() {
        let a = SignedHaarAtom::plus(DyadicBox::from_shape(&[1, 2, 0], &[0, 0, 0]).unwrap());
        let b = SignedHaarAtom::plus(DyadicBox::from_shape(&[2, 0, 1], &[0, 0, 0]).unwrap());
        let p = product_reduce(&[a, b]).unwrap();
        assert_eq!(p.bx.shape(), vec![2, 2, 1]);
        let res = [3u32, 3, 3];
        for i in 0..8u64 {
            for j in 0..8u64 {
                for k in 0..8u64 {
                    let cell = [i, j, k];
                    assert_eq!(
                        p.eval_cell(&res, &cell),
                        a.eval_cell(&res, &cell) * b.eval_cell(&res, &cell)
                    );
                }
            }
        }
    }

    #[test]
    fn moment_of_unit_haar() {
        let a = SignedHaarAtom::plus(DyadicBox::unit(1).unwrap());
        assert_eq!(a.moment(), rat(1, 4));
    }
}
