//! Bit-sliced evaluation of sums of products of r-functions on a grid.
//!
//! An r-function takes values in `{-1, +1}`, so on a block of 64 cells it is a
//! 64-bit word (bit set = value `-1`), and a product of r-functions is the XOR of
//! their words. A sum of `T` such products equals `T - 2 * (number of set bits)`
//! per cell; the counts are accumulated with bit-sliced ripple-carry counters.

use crate::gridfn::{Grid, GridError, GridFunction};

use super::{RFunction, RieszError};

/// Cells per block.
pub const BLOCK: usize = 64;

const MAX_PLANES: usize = 24;

/// A list of index tuples into the r-function list, flattened.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TupleGroup {
    flat: Vec<u32>,
    spans: Vec<(u32, u32)>,
}

impl TupleGroup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tuple: &[usize]) {
        let start = self.flat.len() as u32;
        self.flat.extend(tuple.iter().map(|&i| i as u32));
        self.spans.push((start, tuple.len() as u32));
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.spans
            .iter()
            .map(|&(s, l)| &self.flat[s as usize..(s + l) as usize])
    }
}

impl FromIterator<Vec<usize>> for TupleGroup {
    fn from_iter<I: IntoIterator<Item = Vec<usize>>>(iter: I) -> Self {
        let mut g = TupleGroup::new();
        for t in iter {
            g.push(&t);
        }
        g
    }
}

/// Per-axis lookup tables turning a cell into (box index, Haar sign flip).
struct FnTables {
    parts: Vec<Vec<u64>>,
    flips: Vec<Vec<u64>>,
    negative: Vec<u64>,
}

impl FnTables {
    fn new(f: &RFunction, grid: &Grid) -> Result<Self, RieszError> {
        let shape = f.shape();
        if shape.len() != grid.dim() {
            return Err(GridError::DimensionMismatch {
                expected: grid.dim(),
                got: shape.len(),
            }
            .into());
        }
        let d = shape.len();
        let mut parts = Vec::with_capacity(d);
        let mut flips = Vec::with_capacity(d);
        for t in 0..d {
            let (k, n) = (shape[t], grid.res()[t]);
            if n <= k {
                return Err(GridError::ResolutionTooCoarse {
                    axis: t,
                    need: k + 1,
                    have: n,
                }
                .into());
            }
            let shift: u32 = shape[t + 1..].iter().sum();
            let size = 1u64 << n;
            parts.push((0..size).map(|c| (c >> (n - k)) << shift).collect());
            // Left half of the interval carries the value -1.
            flips.push((0..size).map(|c| ((c >> (n - k - 1)) & 1) ^ 1).collect());
        }
        let negative = (0..f.box_count()).map(|i| (f.sign(i) < 0) as u64).collect();
        Ok(Self {
            parts,
            flips,
            negative,
        })
    }
}

/// Evaluate every tuple group block by block.
///
/// `visit(base, len, values)` receives, for the cells `base..base+len`, one row
/// of 64 values per group (entries past `len` are zero).
pub fn scan_blocks<V>(grid: &Grid, fns: &[&RFunction], groups: &[TupleGroup], mut visit: V) -> Result<(), RieszError>
where
    V: FnMut(usize, usize, &[[i32; BLOCK]]),
{
    let tables: Vec<FnTables> = fns.iter().map(|f| FnTables::new(f, grid)).collect::<Result<_, _>>()?;
    for g in groups {
        if let Some(bad) = g.flat.iter().find(|&&i| i as usize >= fns.len()) {
            return Err(RieszError::ParameterDomain(format!("tuple index {bad} out of range")));
        }
        if g.len() >= 1 << MAX_PLANES {
            return Err(RieszError::BudgetExceeded {
                what: "tuples per group",
                value: g.len() as u64,
                budget: 1 << MAX_PLANES,
            });
        }
    }
    let planes_needed: Vec<usize> = groups
        .iter()
        .map(|g| (usize::BITS - g.len().leading_zeros()) as usize)
        .collect();
    let d = grid.dim();
    let shifts: Vec<u32> = (0..d).map(|t| grid.shift(t)).collect();
    let masks: Vec<usize> = (0..d).map(|t| (1usize << grid.res()[t]) - 1).collect();
    let cells = grid.cells();
    let mut words = vec![0u64; fns.len()];
    let mut out = vec![[0i32; BLOCK]; groups.len()];
    let mut coords = vec![[0usize; BLOCK]; d];
    let mut base = 0usize;
    while base < cells {
        let len = BLOCK.min(cells - base);
        for j in 0..len {
            for t in 0..d {
                coords[t][j] = ((base + j) >> shifts[t]) & masks[t];
            }
        }
        for (w, tb) in words.iter_mut().zip(&tables) {
            let mut word = 0u64;
            for j in 0..len {
                let mut idx = 0u64;
                let mut bit = 0u64;
                for t in 0..d {
                    let c = coords[t][j];
                    idx |= tb.parts[t][c];
                    bit ^= tb.flips[t][c];
                }
                bit ^= tb.negative[idx as usize];
                word |= bit << j;
            }
            *w = word;
        }
        for ((g, row), &np) in groups.iter().zip(out.iter_mut()).zip(&planes_needed) {
            let mut planes = [0u64; MAX_PLANES];
            for tuple in g.iter() {
                let mut x = 0u64;
                for &i in tuple {
                    x ^= words[i as usize];
                }
                let mut b = 0;
                while x != 0 {
                    let carry = planes[b] & x;
                    planes[b] ^= x;
                    x = carry;
                    b += 1;
                }
            }
            let total = g.len() as i32;
            for (j, slot) in row.iter_mut().enumerate() {
                if j >= len {
                    *slot = 0;
                    continue;
                }
                let mut count = 0i32;
                for (b, plane) in planes.iter().enumerate().take(np) {
                    count |= (((plane >> j) & 1) as i32) << b;
                }
                *slot = total - 2 * count;
            }
        }
        visit(base, len, &out);
        base += len;
    }
    Ok(())
}

/// Materialize each group as a grid function.
pub fn scan_to_layers(grid: &Grid, fns: &[&RFunction], groups: &[TupleGroup]) -> Result<Vec<GridFunction<i32>>, RieszError> {
    let mut layers: Vec<Vec<i32>> = groups.iter().map(|_| vec![0i32; grid.cells()]).collect();
    scan_blocks(grid, fns, groups, |base, len, rows| {
        for (layer, row) in layers.iter_mut().zip(rows) {
            layer[base..base + len].copy_from_slice(&row[..len]);
        }
    })?;
    layers
        .into_iter()
        .map(|v| GridFunction::new(grid.clone(), v).map_err(RieszError::from))
        .collect()
}
