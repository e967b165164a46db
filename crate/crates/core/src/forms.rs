//! Sparse m-linear forms `T(x^{(1)}, ..., x^{(m)}) = Σ c · x^{(1)}_{i_1} ⋯ x^{(m)}_{i_m}`
//! on sequence spaces with the sup norm, and their exact operator norm
//! `‖T‖ = sup { |T(x)| : ‖x^{(j)}‖_∞ ≤ 1 }`.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::engine::{chunk_bits, Scalar};
use crate::chaos::SignMatrix;
use crate::error::{Error, Result};
use crate::sum::compensated_sum;
use crate::tensor::{format_number, parse_token, CoefficientTensor, MAX_ORDER};

/// Default cap on `Σ n_j` over the enumerated (non-linear) variables.
pub const DEFAULT_NORM_BITS: u32 = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    /// Zero-based coordinate per variable.
    pub index: Vec<usize>,
    pub coeff: f64,
}

impl Monomial {
    pub fn new(index: Vec<usize>, coeff: f64) -> Self {
        Self { index, coeff }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormRepr", into = "FormRepr")]
pub struct SparseMultilinearForm {
    order: usize,
    monomials: Vec<Monomial>,
    dims: Vec<usize>,
    integer: bool,
}

#[derive(Serialize, Deserialize)]
struct FormRepr {
    order: usize,
    monomials: Vec<Monomial>,
}

impl TryFrom<FormRepr> for SparseMultilinearForm {
    type Error = Error;

    fn try_from(r: FormRepr) -> Result<Self> {
        Self::new(r.order, r.monomials)
    }
}

impl From<SparseMultilinearForm> for FormRepr {
    fn from(f: SparseMultilinearForm) -> Self {
        FormRepr {
            order: f.order,
            monomials: f.monomials,
        }
    }
}

impl SparseMultilinearForm {
    pub fn new(order: usize, monomials: Vec<Monomial>) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Shape(format!(
                "order {order} outside 1..={MAX_ORDER}"
            )));
        }
        if monomials.is_empty() {
            return Err(Error::Shape("a form needs at least one monomial".into()));
        }
        let mut dims = vec![0usize; order];
        let mut seen = HashSet::with_capacity(monomials.len());
        for mono in &monomials {
            if mono.index.len() != order {
                return Err(Error::Shape(format!(
                    "monomial {:?} has {} indices, order is {order}",
                    mono.index,
                    mono.index.len()
                )));
            }
            if mono.coeff == 0.0 || !mono.coeff.is_finite() {
                return Err(Error::Parameter(format!(
                    "monomial {:?} has coefficient {}",
                    mono.index, mono.coeff
                )));
            }
            if !seen.insert(mono.index.as_slice()) {
                return Err(Error::Parameter(format!(
                    "duplicate monomial {:?}",
                    mono.index
                )));
            }
            for (d, &i) in dims.iter_mut().zip(&mono.index) {
                *d = (*d).max(i + 1);
            }
        }
        let integer = monomials
            .iter()
            .all(|m| m.coeff.fract() == 0.0 && m.coeff.abs() < (1u64 << 53) as f64);
        Ok(Self {
            order,
            monomials,
            dims,
            integer,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    /// Coordinate count per variable: one past the largest index used.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn is_integer(&self) -> bool {
        self.integer
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// `Σ c · ∏_j x^{(j)}_{i_j}`.
    pub fn evaluate(&self, x: &[Vec<f64>]) -> Result<f64> {
        if x.len() != self.order {
            return Err(Error::Shape(format!(
                "{} vectors for an order-{} form",
                x.len(),
                self.order
            )));
        }
        for (j, (v, &n)) in x.iter().zip(&self.dims).enumerate() {
            if v.len() < n {
                return Err(Error::Shape(format!(
                    "vector {j} has length {}, form uses {n} coordinates",
                    v.len()
                )));
            }
        }
        Ok(compensated_sum(self.monomials.iter().map(|mono| {
            mono.index
                .iter()
                .zip(x)
                .fold(mono.coeff, |acc, (&i, v)| acc * v[i])
        })))
    }

    /// Evaluates at a sign vertex.
    pub fn evaluate_signs(&self, signs: &SignMatrix) -> Result<f64> {
        let x: Vec<Vec<f64>> = (0..signs.rows()).map(|j| signs.row_as_f64(j)).collect();
        self.evaluate(&x)
    }

    /// Coordinates of the last variable that occur in some monomial.
    pub fn last_variable_coordinates(&self) -> BTreeSet<usize> {
        self.monomials
            .iter()
            .map(|m| *m.index.last().unwrap())
            .collect()
    }

    /// Dense coefficient tensor of shape [`dims`](Self::dims).
    pub fn to_tensor(&self) -> Result<CoefficientTensor> {
        let zeros = CoefficientTensor::new(self.dims.clone(), vec![0.0; checked_len(&self.dims)?])?;
        let mut entries = zeros.entries().to_vec();
        for mono in &self.monomials {
            entries[zeros.flat_index(&mono.index)?] = mono.coeff;
        }
        CoefficientTensor::new(self.dims.clone(), entries)
    }

    /// Form whose monomials are the nonzero entries of `a`.
    pub fn from_tensor(a: &CoefficientTensor) -> Result<Self> {
        let mut monomials = Vec::new();
        crate::tensor::for_each_index(a.dims(), |idx| {
            let c = a.get(idx).expect("index in range");
            if c != 0.0 {
                monomials.push(Monomial::new(idx.to_vec(), c));
            }
        });
        Self::new(a.order(), monomials)
    }

    /// Sup norm with the default enumeration budget.
    pub fn sup_norm(&self) -> Result<NormCertificate> {
        self.sup_norm_with_budget(DEFAULT_NORM_BITS)
    }

    /// Exact `‖T‖` over the product of unit sup-norm balls.
    ///
    /// `T` is affine in each variable, so the supremum sits at a sign vertex.
    /// The variable with the most coordinates is kept linear: for fixed
    /// signs of the others, its best choice contributes `Σ_k |c_k|`. The
    /// remaining signs are walked in Gray-code order with one coordinate per
    /// variable pinned to `+1`.
    ///
    /// Among maximizing vertices the witness is the lexicographically
    /// smallest walked pattern (variables in order, `+1 < -1`); the linear
    /// variable takes `sign(c_k)`, with `+1` for `c_k = 0`.
    pub fn sup_norm_with_budget(&self, budget: u32) -> Result<NormCertificate> {
        if self.integer {
            let coeffs: Vec<i64> = self.monomials.iter().map(|m| m.coeff as i64).collect();
            let total: u128 = coeffs.iter().map(|c| c.unsigned_abs() as u128).sum();
            if total <= (i64::MAX / 4) as u128 {
                return VertexWalk::new(self, coeffs, budget)?.run(self);
            }
        }
        let coeffs: Vec<f64> = self.monomials.iter().map(|m| m.coeff).collect();
        VertexWalk::new(self, coeffs, budget)?.run(self)
    }

    /// Parses lines `i_1 ... i_m coeff` with one-based indices; `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut order = None;
        let mut monomials = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("");
            let toks: Vec<&str> = content.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            if toks.len() < 2 {
                return Err(Error::Parse {
                    line,
                    msg: "expected indices followed by a coefficient".into(),
                });
            }
            let m = toks.len() - 1;
            if *order.get_or_insert(m) != m {
                return Err(Error::Parse {
                    line,
                    msg: format!("{m} indices, earlier lines have {}", order.unwrap()),
                });
            }
            let mut index = Vec::with_capacity(m);
            for tok in &toks[..m] {
                let i: usize = parse_token(line, tok, "index")?;
                if i == 0 {
                    return Err(Error::Parse {
                        line,
                        msg: "indices are one-based".into(),
                    });
                }
                index.push(i - 1);
            }
            let coeff: f64 = parse_token(line, toks[m], "coefficient")?;
            monomials.push((line, Monomial::new(index, coeff)));
        }
        let order = order.ok_or(Error::Parse {
            line: 1,
            msg: "no monomials".into(),
        })?;
        let last_line = monomials.last().map_or(1, |(l, _)| *l);
        Self::new(order, monomials.into_iter().map(|(_, m)| m).collect()).map_err(|e| {
            Error::Parse {
                line: last_line,
                msg: e.to_string(),
            }
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# order {}, {} monomials\n", self.order, self.len());
        for mono in &self.monomials {
            for i in &mono.index {
                let _ = write!(out, "{} ", i + 1);
            }
            out.push_str(&format_number(mono.coeff));
            out.push('\n');
        }
        out
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= crate::tensor::MAX_ENTRIES)
        .ok_or_else(|| Error::SizeLimit(format!("dense tensor of shape {dims:?} too large")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    VertexEnumeration,
}

/// Exact sup norm together with a vertex attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormCertificate {
    pub value: f64,
    /// One sign vector per variable; `T(witness) = value`.
    pub witness: SignMatrix,
    pub method: NormMethod,
    /// Vertex patterns walked.
    pub vertices_walked: u64,
}

struct VertexWalk<T> {
    coeffs: Vec<T>,
    /// Linear-variable coordinate of each monomial.
    target: Vec<usize>,
    linear: usize,
    linear_len: usize,
    /// Walked bit → (variable, coordinate); bit `B-1` is lexicographically
    /// first.
    bit_map: Vec<(usize, usize)>,
    /// Monomials touched by each bit.
    touched: Vec<Vec<usize>>,
    /// For each monomial, the walked bits among its coordinates.
    mono_bits: Vec<Vec<usize>>,
    dims: Vec<usize>,
}

impl<T: Scalar> VertexWalk<T> {
    fn new(form: &SparseMultilinearForm, coeffs: Vec<T>, budget: u32) -> Result<Self> {
        let m = form.order;
        let dims = form.dims.clone();
        let linear = (0..m)
            .rev()
            .max_by_key(|&j| (dims[j], j))
            .expect("order >= 1");
        let mut used: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
        for mono in &form.monomials {
            for (j, &i) in mono.index.iter().enumerate() {
                used[j].insert(i);
            }
        }
        let needed: usize = (0..m).filter(|&j| j != linear).map(|j| used[j].len()).sum();
        if needed as u32 > budget {
            return Err(Error::BudgetExceeded {
                needed: needed as u32,
                budget,
            });
        }
        // Lexicographic order of free coordinates: variables in order, the
        // first used coordinate of each variable pinned.
        let lex: Vec<(usize, usize)> = (0..m)
            .filter(|&j| j != linear)
            .flat_map(|j| used[j].iter().skip(1).map(move |&i| (j, i)))
            .collect();
        let bits = lex.len();
        let bit_map: Vec<(usize, usize)> = lex.into_iter().rev().collect();
        let mut bit_of = std::collections::HashMap::with_capacity(bits);
        for (b, &vc) in bit_map.iter().enumerate() {
            bit_of.insert(vc, b);
        }
        let mut touched = vec![Vec::new(); bits];
        let mut mono_bits = Vec::with_capacity(form.len());
        for (t, mono) in form.monomials.iter().enumerate() {
            let mut mine = Vec::new();
            for (j, &i) in mono.index.iter().enumerate() {
                if let Some(&b) = bit_of.get(&(j, i)) {
                    touched[b].push(t);
                    mine.push(b);
                }
            }
            mono_bits.push(mine);
        }
        Ok(Self {
            coeffs,
            target: form
                .monomials
                .iter()
                .map(|mono| mono.index[linear])
                .collect(),
            linear,
            linear_len: dims[linear],
            bit_map,
            touched,
            mono_bits,
            dims,
        })
    }

    fn bits(&self) -> u32 {
        self.bit_map.len() as u32
    }

    /// Linear coefficients and `Σ|c_k|` at a walked pattern.
    fn state_at(&self, pattern: u64, negative: &mut [bool], c: &mut [T]) -> T {
        c.iter_mut().for_each(|x| *x = T::default());
        for (t, bits) in self.mono_bits.iter().enumerate() {
            let neg = bits
                .iter()
                .fold(false, |acc, &b| acc ^ ((pattern >> b) & 1 == 1));
            negative[t] = neg;
            if neg {
                c[self.target[t]] -= self.coeffs[t];
            } else {
                c[self.target[t]] += self.coeffs[t];
            }
        }
        c.iter().fold(T::default(), |acc, &x| acc + x.magnitude())
    }

    /// Best `(value, pattern)` over patterns `base ^ gray(t)`, `t < 2^low`.
    fn walk_chunk(&self, base: u64, low: u32) -> (T, u64) {
        let mut negative = vec![false; self.coeffs.len()];
        let mut c = vec![T::default(); self.linear_len];
        let mut total = self.state_at(base, &mut negative, &mut c);
        let mut pattern = base;
        let mut best = (total, pattern);
        for t in 1..1u64 << low {
            let b = t.trailing_zeros() as usize;
            pattern ^= 1 << b;
            for &mono in &self.touched[b] {
                let k = self.target[mono];
                let old = c[k];
                let delta = self.coeffs[mono].twice();
                // The monomial's contribution changes sign.
                if negative[mono] {
                    c[k] += delta;
                } else {
                    c[k] -= delta;
                }
                negative[mono] = !negative[mono];
                total += c[k].magnitude();
                total -= old.magnitude();
            }
            if total > best.0 || (total == best.0 && pattern < best.1) {
                best = (total, pattern);
            }
        }
        best
    }

    fn run(&self, form: &SparseMultilinearForm) -> Result<NormCertificate> {
        let total = self.bits();
        let cb = chunk_bits(total);
        let low = total - cb;
        let parts: Vec<(T, u64)> = (0..1u64 << cb)
            .into_par_iter()
            .map(|h| {
                let (v, pat) = self.walk_chunk(h << low, low);
                // Fresh recomputation removes drift in floating point.
                let mut negative = vec![false; self.coeffs.len()];
                let mut c = vec![T::default(); self.linear_len];
                let exact = self.state_at(pat, &mut negative, &mut c);
                debug_assert!(v == exact || !form.integer);
                (exact, pat)
            })
            .collect();
        let (_, pattern) = parts
            .into_iter()
            .reduce(|a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            })
            .expect("at least one chunk");

        let mut witness = SignMatrix::new(&self.dims);
        for (b, &(j, i)) in self.bit_map.iter().enumerate() {
            if (pattern >> b) & 1 == 1 {
                witness.set_negative(j, i, true);
            }
        }
        let mut negative = vec![false; self.coeffs.len()];
        let mut c = vec![T::default(); self.linear_len];
        self.state_at(pattern, &mut negative, &mut c);
        for (k, &ck) in c.iter().enumerate() {
            if ck < T::default() {
                witness.set_negative(self.linear, k, true);
            }
        }
        let value = form.evaluate_signs(&witness)?;
        Ok(NormCertificate {
            value,
            witness,
            method: NormMethod::VertexEnumeration,
            vertices_walked: 1u64 << total,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(order: usize, monos: &[(&[usize], f64)]) -> SparseMultilinearForm {
        SparseMultilinearForm::new(
            order,
            monos
                .iter()
                .map(|(i, c)| Monomial::new(i.to_vec(), *c))
                .collect(),
        )
        .unwrap()
    }

    fn r2() -> SparseMultilinearForm {
        form(
            2,
            &[
                (&[0, 0], 1.0),
                (&[0, 1], 1.0),
                (&[1, 0], 1.0),
                (&[1, 1], -1.0),
            ],
        )
    }

    /// Maximum of |T| over every sign vertex, no tricks.
    fn brute_norm(f: &SparseMultilinearForm) -> f64 {
        let dims = f.dims().to_vec();
        let bits: usize = dims.iter().sum();
        let mut best: f64 = 0.0;
        for pattern in 0u64..1 << bits {
            let mut x = Vec::new();
            let mut off = 0;
            for &n in &dims {
                x.push(
                    (0..n)
                        .map(|i| {
                            if (pattern >> (off + i)) & 1 == 1 {
                                -1.0
                            } else {
                                1.0
                            }
                        })
                        .collect(),
                );
                off += n;
            }
            best = best.max(f.evaluate(&x).unwrap().abs());
        }
        best
    }

    #[test]
    fn evaluate_examples() {
        let f = r2();
        assert_eq!(f.evaluate(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(), 2.0);
        assert_eq!(
            f.evaluate(&[vec![1.0, -1.0], vec![1.0, -1.0]]).unwrap(),
            -2.0
        );
        assert_eq!(f.evaluate(&[vec![0.0, 0.0], vec![0.3, 0.9]]).unwrap(), 0.0);
        assert!(f.evaluate(&[vec![1.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn sup_norm_examples() {
        let cert = r2().sup_norm().unwrap();
        assert_eq!(cert.value, 2.0);
        assert_eq!(r2().evaluate_signs(&cert.witness).unwrap(), 2.0);

        let single = form(3, &[(&[1, 0, 2], -7.0)]);
        assert_eq!(single.sup_norm().unwrap().value, 7.0);

        let ones: Vec<(Vec<usize>, f64)> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (vec![i, j], 1.0)))
            .collect();
        let ones = SparseMultilinearForm::new(
            2,
            ones.into_iter().map(|(i, c)| Monomial::new(i, c)).collect(),
        )
        .unwrap();
        assert_eq!(ones.sup_norm().unwrap().value, 9.0);
    }

    #[test]
    fn witness_is_lexicographically_smallest() {
        // All-ones 2x2: every vertex with equal x^{(1)} signs is optimal; the
        // smallest walked pattern is all plus.
        let f = form(
            2,
            &[
                (&[0, 0], 1.0),
                (&[0, 1], 1.0),
                (&[1, 0], 1.0),
                (&[1, 1], 1.0),
            ],
        );
        let cert = f.sup_norm().unwrap();
        assert_eq!(cert.witness.to_rows(), vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn matches_brute_force() {
        let cases = vec![
            form(
                2,
                &[
                    (&[0, 0], 3.0),
                    (&[0, 2], -1.0),
                    (&[1, 1], 2.0),
                    (&[2, 0], 1.0),
                    (&[2, 2], 5.0),
                ],
            ),
            form(
                3,
                &[
                    (&[0, 0, 0], 1.0),
                    (&[1, 0, 1], -1.0),
                    (&[0, 1, 1], 1.0),
                    (&[1, 1, 0], 1.0),
                    (&[1, 1, 1], -2.0),
                ],
            ),
            form(
                3,
                &[
                    (&[0, 1, 0], 0.5),
                    (&[1, 0, 1], -1.25),
                    (&[2, 1, 1], 0.75),
                    (&[0, 0, 3], 2.0),
                ],
            ),
            form(1, &[(&[0], 2.0), (&[3], -1.0)]),
        ];
        for f in cases {
            let cert = f.sup_norm().unwrap();
            assert!((cert.value - brute_norm(&f)).abs() < 1e-12, "{f:?}");
            assert!((f.evaluate_signs(&cert.witness).unwrap() - cert.value).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let monos: Vec<Monomial> = (0..30).map(|i| Monomial::new(vec![i, i], 1.0)).collect();
        let f = SparseMultilinearForm::new(2, monos).unwrap();
        assert_eq!(
            f.sup_norm().unwrap_err(),
            Error::BudgetExceeded {
                needed: 30,
                budget: 24
            }
        );
    }

    #[test]
    fn construction_invariants() {
        assert!(SparseMultilinearForm::new(2, vec![]).is_err());
        assert!(SparseMultilinearForm::new(2, vec![Monomial::new(vec![0], 1.0)]).is_err());
        assert!(SparseMultilinearForm::new(1, vec![Monomial::new(vec![0], 0.0)]).is_err());
        assert!(SparseMultilinearForm::new(
            1,
            vec![Monomial::new(vec![0], 1.0), Monomial::new(vec![0], 2.0)]
        )
        .is_err());
    }

    #[test]
    fn tensor_bridge() {
        let t = r2().to_tensor().unwrap();
        assert_eq!(t.dims(), &[2, 2]);
        assert_eq!(t.entries(), &[1.0, 1.0, 1.0, -1.0]);
        let sparse = form(2, &[(&[0, 2], 4.0)]);
        assert_eq!(sparse.to_tensor().unwrap().entries(), &[0.0, 0.0, 4.0]);
        assert_eq!(SparseMultilinearForm::from_tensor(&t).unwrap(), r2());
    }

    #[test]
    fn last_variable_coordinates_examples() {
        assert_eq!(r2().last_variable_coordinates(), BTreeSet::from([0, 1]));
        let single = form(3, &[(&[0, 0, 0], 1.0)]);
        assert_eq!(single.last_variable_coordinates(), BTreeSet::from([0]));
    }

    #[test]
    fn text_round_trip_and_errors() {
        let text = r2().to_text();
        assert!(text.contains("2 2 -1"));
        assert_eq!(SparseMultilinearForm::parse(&text).unwrap(), r2());
        assert!(matches!(
            SparseMultilinearForm::parse("1 1 1\n1 2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            SparseMultilinearForm::parse("0 1 1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(SparseMultilinearForm::parse("# nothing\n").is_err());
        assert!(SparseMultilinearForm::parse("1 1 1\n1 1 2\n").is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let json = serde_json::to_string(&r2()).unwrap();
        assert_eq!(
            serde_json::from_str::<SparseMultilinearForm>(&json).unwrap(),
            r2()
        );
        let bad = r#"{"order":1,"monomials":[{"index":[0],"coeff":0.0}]}"#;
        assert!(serde_json::from_str::<SparseMultilinearForm>(bad).is_err());
    }
}
