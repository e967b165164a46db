//! Sign-pattern enumeration for `E |Σ a_{i_1..i_m} ε^{(1)}_{i_1} ⋯ ε^{(m)}_{i_m}|^p`.
//!
//! The walk keeps `c_k = Σ_{outer} a_{outer,k} ∏ ε` (the coefficients of
//! the innermost variable) and `S = Σ_k ε^{(m)}_k c_k`. Patterns are visited
//! in Gray-code order, so each step flips one sign:
//!
//! * an innermost sign updates `S` in `O(lanes)`;
//! * an outer sign updates `c` by the contraction of one hyperplane and
//!   recomputes `S`.
//!
//! Flipping every sign of one variable negates `S`, so the first coordinate
//! of each variable is pinned to `+1` and `m` bits are never enumerated.
//! All-zero hyperplanes are dropped before enumeration; they only duplicate
//! patterns. The axis with the most coordinates becomes the innermost one.
//!
//! The pattern space is cut into a number of chunks that depends only on the
//! bit count. Chunks are reduced independently and merged in chunk order, so
//! results do not depend on the worker count.

use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use num_bigint::BigUint;
use rayon::prelude::*;

use super::signs::SignMatrix;
use crate::sum::CompensatedSum;
use crate::tensor::{for_each_index, strides};

pub(crate) trait Scalar:
    Copy
    + Send
    + Sync
    + PartialEq
    + Default
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + PartialOrd
    + 'static
{
    fn twice(self) -> Self;
    fn magnitude(self) -> Self;
}

impl Scalar for i64 {
    #[inline]
    fn twice(self) -> Self {
        self << 1
    }

    #[inline]
    fn magnitude(self) -> Self {
        self.abs()
    }
}

impl Scalar for f64 {
    #[inline]
    fn twice(self) -> Self {
        2.0 * self
    }

    #[inline]
    fn magnitude(self) -> Self {
        self.abs()
    }
}

/// Compacted, reordered data ready for enumeration.
#[derive(Clone, Debug)]
pub(crate) struct Layout<T> {
    dims: Vec<usize>,
    lanes: usize,
    data: Vec<T>,
    /// `Σ n_j` of the tensor before compaction.
    logical_bits: u32,
    /// Bit `b` of a pattern controls `(axis, coordinate)`; coordinate 0 of
    /// every axis is pinned.
    bit_map: Vec<(usize, usize)>,
    zero: bool,
}

impl<T: Scalar> Layout<T> {
    pub(crate) fn new(dims: &[usize], lanes: usize, data: &[T]) -> Self {
        let m = dims.len();
        let logical_bits = dims.iter().sum::<usize>() as u32;
        let zero_t = T::default();
        let old_strides = strides(dims);

        // Coordinates whose hyperplane carries a nonzero entry.
        let mut used: Vec<Vec<bool>> = dims.iter().map(|&d| vec![false; d]).collect();
        let mut pos = 0;
        for_each_index(dims, |idx| {
            if data[pos * lanes..(pos + 1) * lanes]
                .iter()
                .any(|&x| x != zero_t)
            {
                for (axis, &i) in idx.iter().enumerate() {
                    used[axis][i] = true;
                }
            }
            pos += 1;
        });
        let keep: Vec<Vec<usize>> = used
            .iter()
            .map(|u| {
                u.iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        if keep.iter().any(Vec::is_empty) {
            return Self {
                dims: vec![],
                lanes,
                data: vec![],
                logical_bits,
                bit_map: vec![],
                zero: true,
            };
        }

        let inner = (0..m)
            .rev()
            .max_by_key(|&j| (keep[j].len(), j))
            .expect("order >= 1");
        let perm: Vec<usize> = (0..m).filter(|&j| j != inner).chain([inner]).collect();
        let new_dims: Vec<usize> = perm.iter().map(|&j| keep[j].len()).collect();

        let mut new_data = Vec::with_capacity(new_dims.iter().product::<usize>() * lanes);
        for_each_index(&new_dims, |idx| {
            let old: usize = idx
                .iter()
                .zip(&perm)
                .map(|(&i, &j)| keep[j][i] * old_strides[j])
                .sum();
            new_data.extend_from_slice(&data[old * lanes..(old + 1) * lanes]);
        });

        let mut bit_map = Vec::new();
        for axis in (0..m).rev() {
            for coord in 1..new_dims[axis] {
                bit_map.push((axis, coord));
            }
        }
        Self {
            dims: new_dims,
            lanes,
            data: new_data,
            logical_bits,
            bit_map,
            zero: false,
        }
    }

    /// Sign bits the enumeration would need before pinning: `Σ d_j` over the
    /// compacted dims.
    pub(crate) fn needed_bits(&self) -> u32 {
        self.dims.iter().sum::<usize>() as u32
    }

    /// Bits actually walked.
    pub(crate) fn walk_bits(&self) -> u32 {
        self.bit_map.len() as u32
    }

    pub(crate) fn logical_bits(&self) -> u32 {
        self.logical_bits
    }

    /// Number of sign bits that are implied rather than walked: pinned
    /// coordinates plus dropped hyperplanes.
    pub(crate) fn implied_bits(&self) -> u32 {
        self.logical_bits - self.walk_bits()
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.zero
    }
}

pub(crate) trait Accumulator<T>: Send + Sized {
    fn push(&mut self, s: &[T]);
    fn merge(&mut self, other: Self);
}

/// Exact `Σ |S|^p` for integer data and integer `p`.
#[derive(Clone, Debug)]
pub(crate) struct IntPowerSum {
    p: u32,
    small: u128,
    big: BigUint,
}

impl IntPowerSum {
    pub(crate) fn new(p: u32) -> Self {
        Self {
            p,
            small: 0,
            big: BigUint::default(),
        }
    }

    pub(crate) fn total(&self) -> BigUint {
        &self.big + self.small
    }

    #[inline]
    fn add_term(&mut self, v: u64) {
        let term = if self.p == 1 {
            Some(v as u128)
        } else {
            (v as u128).checked_pow(self.p)
        };
        match term.and_then(|t| self.small.checked_add(t)) {
            Some(s) => self.small = s,
            None => self.big += BigUint::from(v).pow(self.p),
        }
    }
}

impl Accumulator<i64> for IntPowerSum {
    #[inline]
    fn push(&mut self, s: &[i64]) {
        self.add_term(s[0].unsigned_abs());
    }

    fn merge(&mut self, other: Self) {
        match self.small.checked_add(other.small) {
            Some(s) => self.small = s,
            None => self.big += other.small,
        }
        self.big += other.big;
    }
}

/// Compensated `Σ ‖S‖^p` in floating point.
#[derive(Clone, Debug)]
pub(crate) struct FloatPowerSum {
    p: f64,
    sum: CompensatedSum,
}

impl FloatPowerSum {
    pub(crate) fn new(p: f64) -> Self {
        Self {
            p,
            sum: CompensatedSum::new(),
        }
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum.value()
    }
}

#[inline]
pub(crate) fn norm_power(s: &[f64], p: f64) -> f64 {
    if let [x] = s {
        let x = x.abs();
        return if p == 1.0 {
            x
        } else if p == 2.0 {
            x * x
        } else {
            x.powf(p)
        };
    }
    let sq: f64 = s.iter().map(|x| x * x).sum();
    if p == 2.0 {
        sq
    } else {
        sq.sqrt().powf(p)
    }
}

impl Accumulator<f64> for FloatPowerSum {
    #[inline]
    fn push(&mut self, s: &[f64]) {
        self.sum.add(norm_power(s, self.p));
    }

    fn merge(&mut self, other: Self) {
        self.sum.merge(&other.sum);
    }
}

/// Inner-bit index at or above which the floating-point walk recomputes `S`
/// from `c` instead of updating it, bounding round-off drift.
const FLOAT_REFRESH_BIT: usize = 10;

pub(crate) struct Walker<'a, T> {
    lay: &'a Layout<T>,
    signs: SignMatrix,
    c: Vec<T>,
    s: Vec<T>,
    tmp: Vec<T>,
    exact: bool,
}

impl<'a, T: Scalar> Walker<'a, T> {
    /// `exact` selects incremental hyperplane updates (integer data);
    /// otherwise outer flips recompute `c` from scratch.
    pub(crate) fn new(lay: &'a Layout<T>, exact: bool) -> Self {
        let inner = *lay.dims.last().unwrap_or(&0);
        Self {
            lay,
            signs: SignMatrix::new(&lay.dims),
            c: vec![T::default(); inner * lay.lanes],
            s: vec![T::default(); lay.lanes],
            tmp: vec![T::default(); inner * lay.lanes],
            exact,
        }
    }

    pub(crate) fn value(&self) -> &[T] {
        &self.s
    }

    /// Sets every walked bit from `bit`, pins coordinate 0, rebuilds state.
    pub(crate) fn reset_with(&mut self, mut bit: impl FnMut(usize) -> bool) {
        self.signs = SignMatrix::new(&self.lay.dims);
        for (b, &(axis, coord)) in self.lay.bit_map.iter().enumerate() {
            if bit(b) {
                self.signs.set_negative(axis, coord, true);
            }
        }
        let mut c = std::mem::take(&mut self.c);
        self.contract(None, &mut c);
        self.c = c;
        self.recompute_s();
    }

    pub(crate) fn reset(&mut self, pattern: u64) {
        self.reset_with(|b| (pattern >> b) & 1 == 1);
    }

    #[inline]
    pub(crate) fn flip(&mut self, bit: usize) {
        let (axis, coord) = self.lay.bit_map[bit];
        let lanes = self.lay.lanes;
        let m = self.lay.dims.len();
        if axis + 1 == m {
            if !self.exact && bit >= FLOAT_REFRESH_BIT {
                self.signs.flip(axis, coord);
                self.recompute_s();
                return;
            }
            let row = &self.c[coord * lanes..(coord + 1) * lanes];
            if self.signs.is_negative(axis, coord) {
                for (s, &c) in self.s.iter_mut().zip(row) {
                    *s += c.twice();
                }
            } else {
                for (s, &c) in self.s.iter_mut().zip(row) {
                    *s -= c.twice();
                }
            }
            self.signs.flip(axis, coord);
        } else if self.exact {
            let mut tmp = std::mem::take(&mut self.tmp);
            self.contract(Some((axis, coord)), &mut tmp);
            for (c, &t) in self.c.iter_mut().zip(&tmp) {
                *c -= t.twice();
            }
            self.tmp = tmp;
            self.signs.flip(axis, coord);
            self.recompute_s();
        } else {
            self.signs.flip(axis, coord);
            let mut c = std::mem::take(&mut self.c);
            self.contract(None, &mut c);
            self.c = c;
            self.recompute_s();
        }
    }

    fn recompute_s(&mut self) {
        let lanes = self.lay.lanes;
        let inner_axis = self.lay.dims.len() - 1;
        self.s.iter_mut().for_each(|x| *x = T::default());
        for (k, row) in self.c.chunks(lanes).enumerate() {
            if self.signs.is_negative(inner_axis, k) {
                for (s, &c) in self.s.iter_mut().zip(row) {
                    *s -= c;
                }
            } else {
                for (s, &c) in self.s.iter_mut().zip(row) {
                    *s += c;
                }
            }
        }
    }

    /// `out_k = Σ_{outer} a_{outer,k} ∏_{j<m-1} ε^{(j)}`, optionally restricted
    /// to outer indices with `index[axis] == coord`.
    fn contract(&self, restrict: Option<(usize, usize)>, out: &mut [T]) {
        let dims = &self.lay.dims;
        let m = dims.len();
        let row_len = dims[m - 1] * self.lay.lanes;
        out.iter_mut().for_each(|x| *x = T::default());
        let outer_dims = &dims[..m - 1];
        let outer_count: usize = outer_dims.iter().product();
        let mut idx = vec![0usize; m - 1];
        for o in 0..outer_count {
            let selected = restrict.is_none_or(|(axis, coord)| idx[axis] == coord);
            if selected {
                let negative = idx
                    .iter()
                    .enumerate()
                    .fold(false, |p, (j, &i)| p ^ self.signs.is_negative(j, i));
                let row = &self.lay.data[o * row_len..(o + 1) * row_len];
                if negative {
                    for (x, &y) in out.iter_mut().zip(row) {
                        *x -= y;
                    }
                } else {
                    for (x, &y) in out.iter_mut().zip(row) {
                        *x += y;
                    }
                }
            }
            for axis in (0..m - 1).rev() {
                idx[axis] += 1;
                if idx[axis] < outer_dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

/// Chunk count exponent as a function of the walked bit count only.
pub(crate) fn chunk_bits(total: u32) -> u32 {
    if total > 16 {
        (total - 12).min(8)
    } else {
        0
    }
}

/// Sums the accumulator over all `2^walk_bits` patterns.
pub(crate) fn enumerate<T, A>(lay: &Layout<T>, exact: bool, make: impl Fn() -> A + Sync) -> A
where
    T: Scalar,
    A: Accumulator<T>,
{
    let total = lay.walk_bits();
    let cb = chunk_bits(total);
    let low = total - cb;
    let parts: Vec<A> = (0..1usize << cb)
        .into_par_iter()
        .map(|h| {
            let mut acc = make();
            let mut w = Walker::new(lay, exact);
            w.reset((h as u64) << low);
            acc.push(w.value());
            for t in 1..1u64 << low {
                w.flip(t.trailing_zeros() as usize);
                acc.push(w.value());
            }
            acc
        })
        .collect();
    let mut parts = parts.into_iter();
    let mut acc = parts.next().expect("at least one chunk");
    for part in parts {
        acc.merge(part);
    }
    acc
}
