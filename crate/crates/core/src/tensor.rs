//! Dense coefficient arrays indexed by `(i_1, ..., i_m)`, their norms, and
//! slicing.
//!
//! Storage is row-major: the last index varies fastest. Indices are
//! zero-based throughout the library; the text formats are the only place
//! where one-based coordinates appear.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::{compensated_sum, CompensatedSum};

pub const MAX_ORDER: usize = 8;
pub const MAX_ENTRIES: usize = 1 << 24;

/// Largest magnitude at which an `f64` still represents every integer.
const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0;

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::Shape("order must be at least 1".into()));
    }
    if dims.len() > MAX_ORDER {
        return Err(Error::SizeLimit(format!(
            "order {} exceeds {MAX_ORDER}",
            dims.len()
        )));
    }
    let mut count: usize = 1;
    for &d in dims {
        if d == 0 {
            return Err(Error::Shape("every dimension must be positive".into()));
        }
        count = count
            .checked_mul(d)
            .filter(|&c| c <= MAX_ENTRIES)
            .ok_or_else(|| Error::SizeLimit(format!("more than {MAX_ENTRIES} entries")))?;
    }
    Ok(count)
}

fn is_integral(x: f64) -> bool {
    x.fract() == 0.0 && x.abs() <= EXACT_INT_LIMIT
}

/// Order-m array of real coefficients with per-axis dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTensor {
    dims: Vec<usize>,
    entries: Vec<f64>,
    integer: bool,
}

impl CoefficientTensor {
    pub fn new(dims: Vec<usize>, entries: Vec<f64>) -> Result<Self> {
        let count = check_dims(&dims)?;
        if entries.len() != count {
            return Err(Error::Shape(format!(
                "{} entries given, dims {:?} need {count}",
                entries.len(),
                dims
            )));
        }
        if let Some(pos) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let integer = entries.iter().all(|&x| is_integral(x));
        Ok(Self {
            dims,
            entries,
            integer,
        })
    }

    pub fn from_integers(dims: Vec<usize>, entries: Vec<i64>) -> Result<Self> {
        Self::new(dims, entries.into_iter().map(|x| x as f64).collect())
    }

    /// Tensor with every entry equal to one.
    pub fn ones(dims: Vec<usize>) -> Result<Self> {
        let count = check_dims(&dims)?;
        Self::new(dims, vec![1.0; count])
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when every entry is an integer representable exactly.
    pub fn is_integer(&self) -> bool {
        self.integer
    }

    /// Entries as integers, if the tensor is integral.
    pub fn integer_entries(&self) -> Option<Vec<i64>> {
        self.integer
            .then(|| self.entries.iter().map(|&x| x as i64).collect())
    }

    /// Common dimension when all axes have the same length.
    pub fn uniform_dim(&self) -> Option<usize> {
        let n = self.dims[0];
        self.dims.iter().all(|&d| d == n).then_some(n)
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        flat_index(&self.dims, index)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.entries[self.flat_index(index)?])
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.dims.clone(),
            self.entries.iter().map(|x| c * x).collect(),
        )
    }

    /// `(Σ |a|^r)^{1/r}`.
    pub fn ell_r_norm(&self, r: f64) -> Result<f64> {
        check_exponent(r)?;
        Ok(ell_r(self.entries.iter().map(|x| x.abs()), r))
    }

    /// `Σ |a|^r` computed exactly for integer tensors and integer `r`.
    pub fn ell_r_power_exact(&self, r: u32) -> Option<num_bigint::BigUint> {
        let ints = self.integer_entries()?;
        Some(
            ints.iter()
                .map(|&x| num_bigint::BigUint::from(x.unsigned_abs()).pow(r))
                .sum(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Nested norm with exponent `r_j` on axis `j`, innermost axis first.
    pub fn mixed_norm(&self, spec: &MixedNormSpec) -> Result<f64> {
        if spec.len() != self.order() {
            return Err(Error::Parameter(format!(
                "mixed norm spec has {} exponents for an order-{} tensor",
                spec.len(),
                self.order()
            )));
        }
        let mut level: Vec<f64> = self.entries.iter().map(|x| x.abs()).collect();
        for (axis, &r) in spec.exponents().iter().enumerate().rev() {
            level = level
                .chunks(self.dims[axis])
                .map(|row| ell_r(row.iter().copied(), r))
                .collect();
        }
        debug_assert_eq!(level.len(), 1);
        Ok(level[0])
    }

    /// Fixes the last index at `k`, returning an order `m - 1` tensor.
    pub fn slice_last(&self, k: usize) -> Result<Self> {
        if self.order() < 2 {
            return Err(Error::Shape("slice_last needs order at least 2".into()));
        }
        let last = *self.dims.last().unwrap();
        if k >= last {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: last,
            });
        }
        let entries = self.entries.iter().skip(k).step_by(last).copied().collect();
        Self::new(self.dims[..self.order() - 1].to_vec(), entries)
    }

    /// Inverse of [`slice_last`](Self::slice_last): stacks equally shaped
    /// tensors along a new last axis.
    pub fn stack_last(slices: &[Self]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Shape("nothing to stack".into()))?;
        if slices.iter().any(|s| s.dims != first.dims) {
            return Err(Error::Shape("slices differ in shape".into()));
        }
        let mut dims = first.dims.clone();
        dims.push(slices.len());
        let mut entries = Vec::with_capacity(first.len() * slices.len());
        for pos in 0..first.len() {
            entries.extend(slices.iter().map(|s| s.entries[pos]));
        }
        Self::new(dims, entries)
    }

    /// Reorders axes so that new axis `j` is old axis `perm[j]`.
    pub fn permute_axes(&self, perm: &[usize]) -> Result<Self> {
        let m = self.order();
        let mut seen = vec![false; m];
        if perm.len() != m
            || perm
                .iter()
                .any(|&p| p >= m || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Parameter(format!(
                "{perm:?} is not a permutation of 0..{m}"
            )));
        }
        let dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let old_strides = strides(&self.dims);
        let mut entries = Vec::with_capacity(self.len());
        for_each_index(&dims, |idx| {
            let pos: usize = idx
                .iter()
                .zip(perm)
                .map(|(&i, &p)| i * old_strides[p])
                .sum();
            entries.push(self.entries[pos]);
        });
        Self::new(dims, entries)
    }

    /// Permutes the coordinate labels of one axis: new coordinate `i` is old
    /// coordinate `perm[i]`.
    pub fn permute_coordinates(&self, axis: usize, perm: &[usize]) -> Result<Self> {
        let n = *self
            .dims
            .get(axis)
            .ok_or_else(|| Error::Parameter(format!("axis {axis} out of range")))?;
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Parameter(format!(
                "{perm:?} is not a permutation of 0..{n}"
            )));
        }
        let mut entries = Vec::with_capacity(self.len());
        for_each_index(&self.dims, |idx| {
            let mut src = idx.to_vec();
            src[axis] = perm[idx[axis]];
            entries.push(self.entries[flat_index(&self.dims, &src).unwrap()]);
        });
        Self::new(self.dims.clone(), entries)
    }

    /// Multiplies every entry with `index[axis] == coord` by `-1`.
    pub fn negate_hyperplane(&self, axis: usize, coord: usize) -> Result<Self> {
        let n = *self
            .dims
            .get(axis)
            .ok_or_else(|| Error::Parameter(format!("axis {axis} out of range")))?;
        if coord >= n {
            return Err(Error::IndexOutOfRange {
                index: coord,
                len: n,
            });
        }
        let mut entries = self.entries.clone();
        let mut pos = 0;
        for_each_index(&self.dims, |idx| {
            if idx[axis] == coord {
                entries[pos] = -entries[pos];
            }
            pos += 1;
        });
        Self::new(self.dims.clone(), entries)
    }

    /// Parses the whitespace-separated text format: `order dims...` followed
    /// by the entries in row-major order. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = tokens_with_lines(text);
        let (line, tok) = tokens.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty tensor file".into(),
        })?;
        let order: usize = parse_token(line, tok, "order")?;
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Parse {
                line,
                msg: format!("order {order} outside 1..={MAX_ORDER}"),
            });
        }
        let mut dims = Vec::with_capacity(order);
        for _ in 0..order {
            let (line, tok) = tokens.next().ok_or(Error::Parse {
                line,
                msg: "header ends before all dims".into(),
            })?;
            dims.push(parse_token::<usize>(line, tok, "dimension")?);
        }
        let count = check_dims(&dims).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let mut entries = Vec::with_capacity(count);
        let mut last_line = line;
        for (line, tok) in tokens {
            last_line = line;
            entries.push(parse_token::<f64>(line, tok, "entry")?);
        }
        if entries.len() != count {
            return Err(Error::Parse {
                line: last_line,
                msg: format!("expected {count} entries, found {}", entries.len()),
            });
        }
        Self::new(dims, entries).map_err(|e| Error::Parse {
            line: last_line,
            msg: e.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{}", self.order());
        for d in &self.dims {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        let row = *self.dims.last().unwrap();
        for chunk in self.entries.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|&x| format_number(x)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Order-m array of vectors in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorTensor {
    dims: Vec<usize>,
    ambient_dim: usize,
    /// Entry `e`, component `c` lives at `e * ambient_dim + c`.
    components: Vec<f64>,
}

impl VectorTensor {
    pub fn new(dims: Vec<usize>, ambient_dim: usize, components: Vec<f64>) -> Result<Self> {
        let count = check_dims(&dims)?;
        if ambient_dim == 0 {
            return Err(Error::Shape("ambient dimension must be positive".into()));
        }
        if components.len() != count * ambient_dim {
            return Err(Error::Shape(format!(
                "{} components given, need {count} entries of dimension {ambient_dim}",
                components.len()
            )));
        }
        if let Some(pos) = components.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos / ambient_dim));
        }
        Ok(Self {
            dims,
            ambient_dim,
            components,
        })
    }

    pub fn from_vectors(dims: Vec<usize>, vectors: &[Vec<f64>]) -> Result<Self> {
        let d = vectors
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Shape("no vectors given".into()))?;
        if vectors.iter().any(|v| v.len() != d) {
            return Err(Error::Shape("vectors differ in dimension".into()));
        }
        Self::new(dims, d, vectors.concat())
    }

    /// Embeds a scalar tensor as `a · u` for a unit vector `u`.
    pub fn from_scalar_along(a: &CoefficientTensor, unit: &[f64]) -> Result<Self> {
        let components = a
            .entries()
            .iter()
            .flat_map(|&x| unit.iter().map(move |&u| x * u))
            .collect();
        Self::new(a.dims().to_vec(), unit.len(), components)
    }

    pub fn from_scalar(a: &CoefficientTensor) -> Self {
        Self::from_scalar_along(a, &[1.0]).expect("shape already validated")
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len() / self.ambient_dim
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn entry(&self, flat: usize) -> &[f64] {
        &self.components[flat * self.ambient_dim..(flat + 1) * self.ambient_dim]
    }

    /// Euclidean norms of the entries, in row-major order.
    pub fn entry_norms(&self) -> Vec<f64> {
        self.components
            .chunks(self.ambient_dim)
            .map(euclidean)
            .collect()
    }

    /// Largest Euclidean norm of an entry.
    pub fn max_abs(&self) -> f64 {
        self.entry_norms().into_iter().fold(0.0, f64::max)
    }

    /// `(Σ ‖y‖^r)^{1/r}` over the entry norms.
    pub fn ell_r_norm(&self, r: f64) -> Result<f64> {
        check_exponent(r)?;
        Ok(ell_r(self.entry_norms(), r))
    }

    /// `Σ ‖y‖²` when every component is an integer.
    pub fn squared_norm_exact(&self) -> Option<num_bigint::BigUint> {
        if !self.components.iter().all(|&x| is_integral(x)) {
            return None;
        }
        Some(
            self.components
                .iter()
                .map(|&x| num_bigint::BigUint::from((x as i64).unsigned_abs()).pow(2))
                .sum(),
        )
    }
}

/// Exponents `(r_1, ..., r_m)` of a nested mixed norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec(Vec<f64>);

impl MixedNormSpec {
    pub fn new(exponents: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::Parameter(
                "mixed norm needs at least one exponent".into(),
            ));
        }
        for &r in &exponents {
            check_exponent(r)?;
        }
        Ok(Self(exponents))
    }

    pub fn uniform(r: f64, m: usize) -> Result<Self> {
        Self::new(vec![r; m])
    }

    pub fn exponents(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ 1/r_j`.
    pub fn reciprocal_sum(&self) -> f64 {
        self.0.iter().map(|r| 1.0 / r).sum()
    }
}

/// Maximum absolute entry; accepts either tensor kind.
pub fn max_abs<'a>(t: impl Into<TensorRef<'a>>) -> f64 {
    match t.into() {
        TensorRef::Scalar(a) => a.max_abs(),
        TensorRef::Vector(y) => y.max_abs(),
    }
}

/// Borrowed view over either tensor kind.
#[derive(Clone, Copy, Debug)]
pub enum TensorRef<'a> {
    Scalar(&'a CoefficientTensor),
    Vector(&'a VectorTensor),
}

impl<'a> From<&'a CoefficientTensor> for TensorRef<'a> {
    fn from(a: &'a CoefficientTensor) -> Self {
        TensorRef::Scalar(a)
    }
}

impl<'a> From<&'a VectorTensor> for TensorRef<'a> {
    fn from(y: &'a VectorTensor) -> Self {
        TensorRef::Vector(y)
    }
}

impl TensorRef<'_> {
    pub fn dims(&self) -> &[usize] {
        match self {
            TensorRef::Scalar(a) => a.dims(),
            TensorRef::Vector(y) => y.dims(),
        }
    }

    pub fn order(&self) -> usize {
        self.dims().len()
    }
}

pub(crate) fn check_exponent(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "exponent must be positive and finite, got {r}"
        )))
    }
}

pub(crate) fn euclidean(v: &[f64]) -> f64 {
    match v {
        [x] => x.abs(),
        _ => compensated_sum(v.iter().map(|x| x * x)).sqrt(),
    }
}

fn ell_r(abs_values: impl IntoIterator<Item = f64>, r: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    if r == 1.0 {
        abs_values.into_iter().for_each(|x| acc.add(x));
        acc.value()
    } else if r == 2.0 {
        abs_values.into_iter().for_each(|x| acc.add(x * x));
        acc.value().sqrt()
    } else {
        abs_values.into_iter().for_each(|x| acc.add(x.powf(r)));
        acc.value().powf(1.0 / r)
    }
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for j in (0..dims.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

pub(crate) fn flat_index(dims: &[usize], index: &[usize]) -> Result<usize> {
    if index.len() != dims.len() {
        return Err(Error::Shape(format!(
            "index of length {} for order {}",
            index.len(),
            dims.len()
        )));
    }
    let mut pos = 0;
    for (&i, &d) in index.iter().zip(dims) {
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, len: d });
        }
        pos = pos * d + i;
    }
    Ok(pos)
}

/// Visits every multi-index of `dims` in row-major order.
pub(crate) fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        let mut axis = dims.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

pub(crate) fn format_number(x: f64) -> String {
    if is_integral(x) {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub(crate) fn tokens_with_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().flat_map(|(i, line)| {
        let content = line.split('#').next().unwrap_or("");
        content.split_whitespace().map(move |t| (i + 1, t))
    })
}

pub(crate) fn parse_token<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what} `{tok}`"),
    })
}
