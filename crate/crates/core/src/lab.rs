//! Desk-scale checks of Khinchin-type inequalities for multiple Rademacher
//! sums, lower bounds for their optimal constants, and exponent fits.
//!
//! Every `verify_*` call returns a [`BoundReport`] comparing a coefficient
//! norm (`lhs`) with `constant · n^exponent · moment` (`rhs`). When both
//! sides reduce to exact rationals after raising to a common integer power
//! `q`, the verdict comes from that comparison; otherwise `lhs` may exceed
//! `rhs` by a relative [`REL_SLACK`].

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{
    moment_p_exact_vec_with_budget, moment_p_exact_with_budget, moment_p_mc, DyadicRational,
    MomentMode, MomentResult, DEFAULT_MOMENT_BITS,
};
use crate::constructions::KszCertificate;
use crate::error::{Error, Result};
use crate::forms::SparseMultilinearForm;
use crate::sum::compensated_sum;
use crate::tensor::{CoefficientTensor, MixedNormSpec, TensorRef, VectorTensor};

pub const REL_SLACK: f64 = 1e-12;

/// Largest integer power used for exact comparisons.
const MAX_EXACT_POWER: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    /// `ℓ₂(a) ≤ 2^{m/2} ‖S‖₁`.
    MultipleKhinchin,
    /// `ℓ_r(a) ≤ 2^{m/2} n^{m(1/r-1/2)} ‖S‖₁` for `r < 2`.
    PolynomialGrowth,
    /// Mixed `(r_1..r_m)` norm `≤ 2^{m/2} n^{Σ1/r_j - m/2} ‖S‖₁`.
    MixedGrowth,
    /// `ℓ_r(a) ≤ 2^{m/r} ‖S‖₁` for `r ≥ 2`.
    PowerConstant,
    /// `Σ_k ℓ_r(T_k) / Σ_k ‖S_{T_k}‖₁` over last-index slices.
    SliceLowerBound,
    /// `n^{1+m/r} / ‖T‖` from a certified small-norm form.
    SupNormLowerBound,
    /// `max ‖y‖ ≤ ‖S‖₁`.
    Contraction,
    /// `‖S‖₂ ≤ (√2)^m ‖S‖₁` for vector coefficients.
    MultipleKahane,
    /// `(Σ ‖y‖^r)^{1/r} ≤ 2^{m/r} ‖S‖₁` in Hilbert space, `r ≥ 2`.
    HilbertPower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundContext {
    pub theorem: Theorem,
    pub m: usize,
    pub dims: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<f64>,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mixed: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<usize>,
}

/// `lhs^power` against `rhs^power`, both as exact rationals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactComparison {
    pub power: u32,
    pub lhs_power: DyadicRational,
    pub rhs_power: DyadicRational,
    pub holds: bool,
}

/// `bound^root = numerator / denominator` in lowest terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactRoot {
    pub root: u32,
    pub numerator: String,
    pub denominator: String,
}

impl ExactRoot {
    pub fn equals_integer(&self, n: &BigUint) -> bool {
        self.denominator == "1" && self.numerator == n.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceCertificate {
    pub slices: usize,
    pub nonzero_slices: usize,
    /// `L = Σ_k ℓ_r(T_k)`.
    pub ell_sum: f64,
    /// `M = Σ_k ‖S_{T_k}‖₁`; also reported as the report's moment.
    pub moment_sum: f64,
    /// Present when the bound is an exact root of a rational: integer data,
    /// integer `r`, and every nonzero slice sharing the same `ℓ_r` and moment.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact_root: Option<ExactRoot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub constant_used: f64,
    pub exponent_used: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub moment: Option<MomentResult>,
    /// `lhs / rhs`, with `0` when `lhs = 0`.
    pub ratio: f64,
    pub holds: bool,
    pub context: BoundContext,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<ExactComparison>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slices: Option<SliceCertificate>,
}

/// Least-squares fit of `log value = intercept + slope · log n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Constant {
    pub value: f64,
    pub exact: &'static str,
    pub citation: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstantsTable {
    /// Optimal lower Khinchin constant at `p = 1`.
    pub a1: Constant,
    /// Upper Khinchin constant for `p ≤ 2`.
    pub b_p_le_2: Constant,
    /// Optimal Kahane constant between `L_1` and `L_2`.
    pub k_1_2: Constant,
    /// Cotype 2 constant of a Hilbert space.
    pub c2_hilbert: Constant,
}

pub const CONSTANTS: ConstantsTable = ConstantsTable {
    a1: Constant {
        value: FRAC_1_SQRT_2,
        exact: "1/sqrt(2)",
        citation: "S. J. Szarek, On the best constants in the Khinchin inequality, Studia Math. 58 (1976)",
    },
    b_p_le_2: Constant {
        value: 1.0,
        exact: "1",
        citation: "Hölder's inequality with E|S|^2 = Σ a_i^2",
    },
    k_1_2: Constant {
        value: SQRT_2,
        exact: "sqrt(2)",
        citation: "R. Latała and K. Oleszkiewicz, On the best constant in the Khinchin-Kahane inequality, Studia Math. 109 (1994)",
    },
    c2_hilbert: Constant {
        value: 1.0,
        exact: "1",
        citation: "parallelogram identity E‖Σ ε_i y_i‖^2 = Σ ‖y_i‖^2",
    },
};

/// Moment evaluation policy shared by every check.
///
/// Exact enumeration is used up to `moment_bits` sign bits. Checks whose
/// inputs may be large fall back to Monte Carlo with `mc_samples` samples on
/// `seed`; the others fail with [`Error::BudgetExceeded`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lab {
    pub moment_bits: u32,
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for Lab {
    fn default() -> Self {
        Self {
            moment_bits: DEFAULT_MOMENT_BITS,
            mc_samples: 200_000,
            seed: 0,
        }
    }
}

fn exact_power_of(r: f64) -> Option<u32> {
    (r.fract() == 0.0 && (1.0..=MAX_EXACT_POWER).contains(&r)).then_some(r as u32)
}

fn pow2(e: usize) -> BigUint {
    BigUint::one() << e
}

fn check_exponent(name: &str, r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{name} must be positive and finite, got {r}"
        )))
    }
}

/// `lhs_power ≤ multiplier · moment^q`.
fn compare_exact(
    lhs_power: BigUint,
    multiplier: BigUint,
    moment: &DyadicRational,
    q: u32,
) -> ExactComparison {
    let lhs_power = DyadicRational::integer(lhs_power);
    let rhs_power = moment.pow(q).mul_integer(&multiplier);
    ExactComparison {
        power: q,
        holds: lhs_power.value_le(&rhs_power),
        lhs_power,
        rhs_power,
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

fn float_holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + REL_SLACK)
}

struct Draft {
    context: BoundContext,
    lhs: f64,
    constant: f64,
    exponent: f64,
    /// `n^exponent`, evaluated by the caller.
    growth: f64,
    moment: MomentResult,
    exact: Option<ExactComparison>,
}

impl Draft {
    fn finish(self) -> BoundReport {
        let rhs = self.constant * self.growth * self.moment.value;
        BoundReport {
            lhs: self.lhs,
            rhs,
            constant_used: self.constant,
            exponent_used: self.exponent,
            ratio: ratio(self.lhs, rhs),
            holds: self
                .exact
                .as_ref()
                .map_or_else(|| float_holds(self.lhs, rhs), |e| e.holds),
            moment: Some(self.moment),
            context: self.context,
            exact: self.exact,
            slices: None,
        }
    }
}

fn context(theorem: Theorem, dims: &[usize], r: Option<f64>) -> BoundContext {
    BoundContext {
        theorem,
        m: dims.len(),
        dims: dims.to_vec(),
        r,
        p: 1.0,
        q: None,
        mixed: None,
        n: None,
    }
}

fn uniform(a: &CoefficientTensor) -> Result<usize> {
    a.uniform_dim()
        .ok_or_else(|| Error::Shape(format!("expected equal dimensions, got {:?}", a.dims())))
}

fn scalar_of(y: &VectorTensor) -> Option<CoefficientTensor> {
    (y.ambient_dim() == 1).then(|| {
        CoefficientTensor::new(y.dims().to_vec(), y.components().to_vec())
            .expect("vector components are finite with matching shape")
    })
}

/// Upper bound on `C_r` at uniform size `n` for order `m` tensors:
/// `2^{m/2} n^{m(1/r-1/2)}` for `r < 2` and `2^{m/r}` for `r ≥ 2`.
pub fn constant_ceiling(m: usize, n: f64, r: f64) -> f64 {
    let m = m as f64;
    if r < 2.0 {
        2f64.powf(m / 2.0) * n.powf(m * (1.0 / r - 0.5))
    } else {
        2f64.powf(m / r)
    }
}

/// `E|ε_1 + ... + ε_n| = n · 2^{1-n} · C(n-1, ⌊(n-1)/2⌋)` as an exact
/// dyadic rational with denominator `2^n`.
pub fn ones_first_moment(n: usize) -> Result<DyadicRational> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let k = (n - 1) / 2;
    let mut binom = BigUint::one();
    for i in 0..k {
        binom = binom * BigUint::from(n - 1 - i) / BigUint::from(i + 1);
    }
    Ok(DyadicRational::new(
        binom * BigUint::from(n) * 2u8,
        n.try_into()
            .map_err(|_| Error::SizeLimit(format!("n = {n}")))?,
    ))
}

impl Lab {
    fn moment(&self, a: &CoefficientTensor, p: f64, allow_mc: bool) -> Result<MomentResult> {
        match moment_p_exact_with_budget(a, p, self.moment_bits) {
            Err(Error::BudgetExceeded { .. }) if allow_mc => {
                moment_p_mc(a, p, self.mc_samples, self.seed)
            }
            other => other,
        }
    }

    fn moment_vec(&self, y: &VectorTensor, p: f64, allow_mc: bool) -> Result<MomentResult> {
        match moment_p_exact_vec_with_budget(y, p, self.moment_bits) {
            Err(Error::BudgetExceeded { .. }) if allow_mc => {
                moment_p_mc(y, p, self.mc_samples, self.seed)
            }
            other => other,
        }
    }

    /// `‖S‖_p / ℓ₂(a)` for an order-1 tensor.
    pub fn khinchin_ratio(&self, a: &CoefficientTensor, p: f64) -> Result<f64> {
        if a.order() != 1 {
            return Err(Error::Shape(format!(
                "expected order 1, got order {}",
                a.order()
            )));
        }
        let l2 = a.ell_r_norm(2.0)?;
        if l2 == 0.0 {
            return Err(Error::Degenerate("zero coefficient vector".into()));
        }
        Ok(self.moment(a, p, true)?.value / l2)
    }

    pub fn verify_multik(&self, a: &CoefficientTensor) -> Result<BoundReport> {
        let m = a.order();
        let moment = self.moment(a, 1.0, false)?;
        let exact = match (&moment.exact_power, a.ell_r_power_exact(2)) {
            (Some(mu), Some(sq)) => Some(compare_exact(sq, pow2(m), mu, 2)),
            _ => None,
        };
        let mut ctx = context(Theorem::MultipleKhinchin, a.dims(), Some(2.0));
        ctx.q = Some(2.0);
        Ok(Draft {
            context: ctx,
            lhs: a.ell_r_norm(2.0)?,
            constant: 2f64.powf(m as f64 / 2.0),
            exponent: 0.0,
            growth: 1.0,
            moment,
            exact,
        }
        .finish())
    }

    pub fn verify_theorem1(&self, a: &CoefficientTensor, r: f64) -> Result<BoundReport> {
        check_exponent("r", r)?;
        if r >= 2.0 {
            return Err(Error::Parameter(format!("r = {r} ≥ 2; use verify_prop")));
        }
        let n = uniform(a)?;
        let m = a.order();
        let moment = self.moment(a, 1.0, true)?;
        let exponent = m as f64 * (1.0 / r - 0.5);
        let exact = if r == 1.0 {
            l1_exact(a, &moment, n)
        } else {
            None
        };
        let mut ctx = context(Theorem::PolynomialGrowth, a.dims(), Some(r));
        ctx.n = Some(n);
        Ok(Draft {
            context: ctx,
            lhs: a.ell_r_norm(r)?,
            constant: 2f64.powf(m as f64 / 2.0),
            exponent,
            growth: (n as f64).powf(exponent),
            moment,
            exact,
        }
        .finish())
    }

    pub fn verify_mixed(&self, a: &CoefficientTensor, spec: &MixedNormSpec) -> Result<BoundReport> {
        if let Some(r) = spec.exponents().iter().find(|&&r| r >= 2.0) {
            return Err(Error::Parameter(format!("mixed exponent {r} ≥ 2")));
        }
        let lhs = a.mixed_norm(spec)?;
        let n = uniform(a)?;
        let m = a.order();
        let moment = self.moment(a, 1.0, true)?;
        let exponent = spec.reciprocal_sum() - m as f64 / 2.0;
        let exact = if spec.exponents().iter().all(|&r| r == 1.0) {
            l1_exact(a, &moment, n)
        } else {
            None
        };
        let mut ctx = context(Theorem::MixedGrowth, a.dims(), None);
        ctx.mixed = Some(spec.exponents().to_vec());
        ctx.n = Some(n);
        Ok(Draft {
            context: ctx,
            lhs,
            constant: 2f64.powf(m as f64 / 2.0),
            exponent,
            growth: (n as f64).powf(exponent),
            moment,
            exact,
        }
        .finish())
    }

    pub fn verify_prop(&self, a: &CoefficientTensor, r: f64) -> Result<BoundReport> {
        check_exponent("r", r)?;
        if r < 2.0 {
            return Err(Error::Parameter(format!(
                "r = {r} < 2; use verify_theorem1"
            )));
        }
        let m = a.order();
        let moment = self.moment(a, 1.0, false)?;
        let exact = match (exact_power_of(r), &moment.exact_power) {
            (Some(q), Some(mu)) => a
                .ell_r_power_exact(q)
                .map(|x| compare_exact(x, pow2(m), mu, q)),
            _ => None,
        };
        Ok(Draft {
            context: context(Theorem::PowerConstant, a.dims(), Some(r)),
            lhs: a.ell_r_norm(r)?,
            constant: 2f64.powf(m as f64 / r),
            exponent: 0.0,
            growth: 1.0,
            moment,
            exact,
        }
        .finish())
    }

    /// `L / M` with `L = Σ_k ℓ_r(T_k)` and `M = Σ_k ‖S_{T_k}‖₁` over the
    /// slices `T_k` of `f` in its last index.
    ///
    /// Any `C` with `ℓ_r(a) ≤ C ‖S_a‖₁` for all order-`m` tensors of these
    /// dimensions satisfies `C ≥ L / M`. The report compares the bound with
    /// [`constant_ceiling`] evaluated at `n = N^{1/m}`, `N` the slice size.
    pub fn lower_bound_from_slices(
        &self,
        f: &SparseMultilinearForm,
        r: f64,
    ) -> Result<BoundReport> {
        check_exponent("r", r)?;
        if f.order() < 2 {
            return Err(Error::Shape(
                "slice bound needs a form of order at least 2".into(),
            ));
        }
        let t = f.to_tensor()?;
        let count = *t.dims().last().expect("order ≥ 2");
        let slices = (0..count)
            .map(|k| t.slice_last(k))
            .collect::<Result<Vec<_>>>()?;
        let moments = slices
            .par_iter()
            .map(|s| moment_p_exact_with_budget(s, 1.0, self.moment_bits))
            .collect::<Result<Vec<_>>>()?;
        let ells = slices
            .iter()
            .map(|s| s.ell_r_norm(r))
            .collect::<Result<Vec<_>>>()?;
        let ell_sum = compensated_sum(ells.iter().copied());
        let moment_sum = compensated_sum(moments.iter().map(|mu| mu.value));
        if moment_sum == 0.0 {
            return Err(Error::Degenerate("every slice is zero".into()));
        }
        let slice_dims = slices[0].dims().to_vec();
        let m = slice_dims.len();
        let nonzero: Vec<usize> = (0..count).filter(|&k| moments[k].value > 0.0).collect();
        let exact_moments: Option<Vec<&DyadicRational>> =
            moments.iter().map(|mu| mu.exact_power.as_ref()).collect();
        let exact_sum = exact_moments.as_ref().map(|all| {
            all.iter()
                .skip(1)
                .fold(all[0].clone(), |acc, mu| acc.add(mu))
        });

        let q = exact_power_of(r);
        let ell_powers: Option<Vec<BigUint>> = q.and_then(|q| {
            nonzero
                .iter()
                .map(|&k| slices[k].ell_r_power_exact(q))
                .collect()
        });
        let mut exact_root = None;
        let mut exact = None;
        if let (Some(q), Some(powers), Some(mus)) = (q, &ell_powers, &exact_moments) {
            let first = nonzero[0];
            let uniform_slices = nonzero
                .iter()
                .zip(powers)
                .all(|(&k, x)| *x == powers[0] && mus[k].value_eq(mus[first]));
            if uniform_slices {
                let mu = mus[first];
                // bound^q = X / μ^q = X · 2^{qk} / num^q
                let num = &powers[0] << (q as u64 * mu.log2_denominator as u64);
                let den = mu.numerator.pow(q);
                let g = num.gcd(&den);
                exact_root = Some(ExactRoot {
                    root: q,
                    numerator: (&num / &g).to_string(),
                    denominator: (&den / &g).to_string(),
                });
                if r >= 2.0 {
                    exact = Some(compare_exact(powers[0].clone(), pow2(m), mu, q));
                }
            }
        }

        let slice_len: usize = slice_dims.iter().product();
        let (constant, exponent) = if r < 2.0 {
            (2f64.powf(m as f64 / 2.0), m as f64 * (1.0 / r - 0.5))
        } else {
            (2f64.powf(m as f64 / r), 0.0)
        };
        let ceiling = constant * (slice_len as f64).powf(exponent / m as f64);
        let lhs = ell_sum / moment_sum;
        let mut ctx = context(Theorem::SliceLowerBound, &slice_dims, Some(r));
        ctx.n = t.uniform_dim().or_else(|| slices[0].uniform_dim());
        Ok(BoundReport {
            lhs,
            rhs: ceiling,
            constant_used: constant,
            exponent_used: exponent,
            moment: Some(MomentResult {
                p: 1.0,
                value: moment_sum,
                exact_power: exact_sum,
                mode: if moments
                    .iter()
                    .all(|mu| mu.mode == MomentMode::ExactEnumeration)
                {
                    MomentMode::ExactEnumeration
                } else {
                    MomentMode::MonteCarlo
                },
                pattern_bits: moments[0].pattern_bits,
                patterns_walked: moments.iter().map(|mu| mu.patterns_walked).sum(),
                sample_count: None,
                stderr: None,
            }),
            ratio: ratio(lhs, ceiling),
            holds: exact
                .as_ref()
                .map_or_else(|| float_holds(lhs, ceiling), |e| e.holds),
            context: ctx,
            exact,
            slices: Some(SliceCertificate {
                slices: count,
                nonzero_slices: nonzero.len(),
                ell_sum,
                moment_sum,
                exact_root,
            }),
        })
    }

    /// Lower bound `C(n) ≥ n^{1+m/r} / ‖T‖` for an order `m+1` certificate.
    ///
    /// `Σ_k ‖S_{T_k}‖₁ = E sup_η T(ε, η) ≤ ‖T‖`, so the slice bound of `T`
    /// dominates `L / ‖T‖`, and `L = n · n^{m/r}` for a full ±1 grid.
    pub fn ksz_exponent_bound(&self, cert: &KszCertificate, r: f64) -> Result<BoundReport> {
        check_exponent("r", r)?;
        if cert.m < 2 || cert.form.order() != cert.m {
            return Err(Error::Shape(format!(
                "certificate of order {} carries a form of order {}; need order ≥ 2",
                cert.m,
                cert.form.order()
            )));
        }
        let full = cert.n.checked_pow(cert.m as u32);
        if full != Some(cert.form.len()) || cert.form.dims().iter().any(|&d| d != cert.n) {
            return Err(Error::Shape(
                "certificate form does not cover the full index grid".into(),
            ));
        }
        if cert.certified_norm <= 0.0 {
            return Err(Error::Degenerate("zero certified norm".into()));
        }
        let t = cert.form.to_tensor()?;
        let ell_sum = compensated_sum(
            (0..cert.n)
                .map(|k| t.slice_last(k)?.ell_r_norm(r))
                .collect::<Result<Vec<_>>>()?,
        );
        let m = cert.m - 1;
        let n = cert.n as f64;
        let lhs = ell_sum / cert.certified_norm;
        let rhs = constant_ceiling(m, n, r);
        let mut ctx = context(Theorem::SupNormLowerBound, &vec![cert.n; m], Some(r));
        ctx.n = Some(cert.n);
        let (constant, exponent) = if r < 2.0 {
            (2f64.powf(m as f64 / 2.0), m as f64 * (1.0 / r - 0.5))
        } else {
            (2f64.powf(m as f64 / r), 0.0)
        };
        Ok(BoundReport {
            lhs,
            rhs,
            constant_used: constant,
            exponent_used: exponent,
            moment: None,
            ratio: ratio(lhs, rhs),
            holds: float_holds(lhs, rhs),
            context: ctx,
            exact: None,
            slices: None,
        })
    }

    pub fn verify_contraction<'a>(&self, t: impl Into<TensorRef<'a>>) -> Result<BoundReport> {
        match t.into() {
            TensorRef::Scalar(a) => self.contraction_scalar(a),
            TensorRef::Vector(y) => match scalar_of(y) {
                Some(a) => self.contraction_scalar(&a),
                None => {
                    let moment = self.moment_vec(y, 1.0, true)?;
                    Ok(Draft {
                        context: context(Theorem::Contraction, y.dims(), None),
                        lhs: y.max_abs(),
                        constant: 1.0,
                        exponent: 0.0,
                        growth: 1.0,
                        moment,
                        exact: None,
                    }
                    .finish())
                }
            },
        }
    }

    fn contraction_scalar(&self, a: &CoefficientTensor) -> Result<BoundReport> {
        let moment = self.moment(a, 1.0, true)?;
        let exact = match (&moment.exact_power, a.integer_entries()) {
            (Some(mu), Some(ints)) => {
                let top = ints.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
                Some(compare_exact(BigUint::from(top), BigUint::one(), mu, 1))
            }
            _ => None,
        };
        Ok(Draft {
            context: context(Theorem::Contraction, a.dims(), None),
            lhs: a.max_abs(),
            constant: 1.0,
            exponent: 0.0,
            growth: 1.0,
            moment,
            exact,
        }
        .finish())
    }

    /// `‖S‖_q ≤ K_{p,q}^m ‖S‖_p`; only `(p, q) = (1, 2)` with `K = √2`.
    pub fn verify_multiple_kahane(&self, y: &VectorTensor, p: f64, q: f64) -> Result<BoundReport> {
        if (p, q) != (1.0, 2.0) {
            return Err(Error::Parameter(format!(
                "no certified Kahane constant for (p, q) = ({p}, {q}); only (1, 2) is supported"
            )));
        }
        let m = y.order();
        let mut ctx = context(Theorem::MultipleKahane, y.dims(), None);
        ctx.q = Some(2.0);
        let constant = SQRT_2.powi(m as i32);
        if let Some(a) = scalar_of(y) {
            let moment = self.moment(&a, 1.0, false)?;
            let exact = match (&moment.exact_power, a.ell_r_power_exact(2)) {
                (Some(mu), Some(sq)) => Some(compare_exact(sq, pow2(m), mu, 2)),
                _ => None,
            };
            return Ok(Draft {
                context: ctx,
                lhs: a.ell_r_norm(2.0)?,
                constant,
                exponent: 0.0,
                growth: 1.0,
                moment,
                exact,
            }
            .finish());
        }
        let lhs = moment_p_exact_vec_with_budget(y, 2.0, self.moment_bits)?.value;
        let moment = self.moment_vec(y, 1.0, false)?;
        Ok(Draft {
            context: ctx,
            lhs,
            constant,
            exponent: 0.0,
            growth: 1.0,
            moment,
            exact: None,
        }
        .finish())
    }

    pub fn verify_hilbert_prop(&self, y: &VectorTensor, r: f64) -> Result<BoundReport> {
        check_exponent("r", r)?;
        if r < 2.0 {
            return Err(Error::Parameter(format!("r = {r} < 2")));
        }
        if let Some(a) = scalar_of(y) {
            let mut report = self.verify_prop(&a, r)?;
            report.context.theorem = Theorem::HilbertPower;
            return Ok(report);
        }
        let m = y.order();
        let moment = self.moment_vec(y, 1.0, false)?;
        Ok(Draft {
            context: context(Theorem::HilbertPower, y.dims(), Some(r)),
            lhs: y.ell_r_norm(r)?,
            constant: 2f64.powf(m as f64 / r),
            exponent: 0.0,
            growth: 1.0,
            moment,
            exact: None,
        }
        .finish())
    }
}

/// `ℓ₁(a)² ≤ 2^m n^m μ²`, i.e. the `r = 1` growth bound squared.
fn l1_exact(a: &CoefficientTensor, moment: &MomentResult, n: usize) -> Option<ExactComparison> {
    let mu = moment.exact_power.as_ref()?;
    let l1 = a.ell_r_power_exact(1)?;
    let m = a.order() as u32;
    Some(compare_exact(
        l1.pow(2),
        pow2(m as usize) * BigUint::from(n).pow(m),
        mu,
        2,
    ))
}

/// Least squares on `(log n, log value)`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, v)) = points
        .iter()
        .find(|&&(n, v)| !(n.is_finite() && v.is_finite() && n > 0.0 && v > 0.0))
    {
        return Err(Error::Degenerate(format!(
            "point ({n}, {v}) is not positive and finite"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = points.len() as f64;
    let mx = compensated_sum(xs.iter().copied()) / k;
    let my = compensated_sum(ys.iter().copied()) / k;
    let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(Error::Degenerate("all points share the same n".into()));
    }
    let sxy = compensated_sum(xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(FitResult {
        points: points.to_vec(),
        slope,
        intercept,
        max_residual,
    })
}

pub fn khinchin_ratio(a: &CoefficientTensor, p: f64) -> Result<f64> {
    Lab::default().khinchin_ratio(a, p)
}

pub fn verify_multik(a: &CoefficientTensor) -> Result<BoundReport> {
    Lab::default().verify_multik(a)
}

pub fn verify_theorem1(a: &CoefficientTensor, r: f64) -> Result<BoundReport> {
    Lab::default().verify_theorem1(a, r)
}

pub fn verify_mixed(a: &CoefficientTensor, spec: &MixedNormSpec) -> Result<BoundReport> {
    Lab::default().verify_mixed(a, spec)
}

pub fn verify_prop(a: &CoefficientTensor, r: f64) -> Result<BoundReport> {
    Lab::default().verify_prop(a, r)
}

pub fn lower_bound_from_slices(f: &SparseMultilinearForm, r: f64) -> Result<BoundReport> {
    Lab::default().lower_bound_from_slices(f, r)
}

pub fn ksz_exponent_bound(cert: &KszCertificate, r: f64) -> Result<BoundReport> {
    Lab::default().ksz_exponent_bound(cert, r)
}

pub fn verify_contraction<'a>(t: impl Into<TensorRef<'a>>) -> Result<BoundReport> {
    Lab::default().verify_contraction(t)
}

pub fn verify_multiple_kahane(y: &VectorTensor, p: f64, q: f64) -> Result<BoundReport> {
    Lab::default().verify_multiple_kahane(y, p, q)
}

pub fn verify_hilbert_prop(y: &VectorTensor, r: f64) -> Result<BoundReport> {
    Lab::default().verify_hilbert_prop(y, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{build_rm, ksz_search};

    fn ints(dims: Vec<usize>, v: Vec<i64>) -> CoefficientTensor {
        CoefficientTensor::from_integers(dims, v).unwrap()
    }

    fn r2() -> CoefficientTensor {
        ints(vec![2, 2], vec![1, 1, 1, -1])
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn khinchin_examples() {
        assert!(close(
            khinchin_ratio(&ints(vec![2], vec![1, 1]), 1.0).unwrap(),
            FRAC_1_SQRT_2
        ));
        assert_eq!(khinchin_ratio(&ints(vec![1], vec![3]), 3.5).unwrap(), 1.0);
        assert!(close(
            khinchin_ratio(&ints(vec![4], vec![1; 4]), 1.0).unwrap(),
            0.75
        ));
        assert!(khinchin_ratio(&ints(vec![3], vec![0; 3]), 1.0).is_err());
        assert!(khinchin_ratio(&r2(), 1.0).is_err());
    }

    #[test]
    fn multik_examples() {
        let rep = verify_multik(&r2()).unwrap();
        assert!(close(rep.lhs, 2.0) && close(rep.rhs, 4.0) && rep.holds);
        assert!(close(rep.ratio, 0.5));
        let rep = verify_multik(&ints(vec![2], vec![1, 1])).unwrap();
        assert!(close(rep.lhs, SQRT_2) && close(rep.rhs, SQRT_2) && rep.holds);
        let ex = rep.exact.unwrap();
        assert!(ex.lhs_power.value_eq(&ex.rhs_power));
        let rep = verify_multik(&ints(vec![1, 1, 1], vec![-7])).unwrap();
        assert!(close(rep.lhs, 7.0) && close(rep.rhs, 7.0 * 2f64.powf(1.5)) && rep.holds);
    }

    #[test]
    fn theorem1_examples() {
        let rep = verify_theorem1(&ints(vec![2], vec![1, 1]), 1.0).unwrap();
        assert!(close(rep.lhs, 2.0) && close(rep.rhs, 2.0) && rep.holds);
        let ex = rep.exact.unwrap();
        assert!(ex.lhs_power.value_eq(&ex.rhs_power));
        let rep = verify_theorem1(&r2(), 1.0).unwrap();
        assert!(close(rep.lhs, 4.0) && close(rep.rhs, 8.0) && rep.holds);
        assert!(close(rep.exponent_used, 1.0));
        let rep = verify_theorem1(&ints(vec![1, 1], vec![5]), 1.5).unwrap();
        assert!(close(rep.lhs, 5.0) && close(rep.rhs, 10.0) && rep.holds);
        assert!(verify_theorem1(&r2(), 2.0).is_err());
        assert!(verify_theorem1(&ints(vec![2, 3], vec![1; 6]), 1.0).is_err());
    }

    #[test]
    fn mixed_examples() {
        let spec = MixedNormSpec::new(vec![1.0, 1.0]).unwrap();
        let rep = verify_mixed(&r2(), &spec).unwrap();
        assert!(close(rep.lhs, 4.0) && close(rep.rhs, 8.0) && rep.holds);
        let a = ints(vec![3, 3], vec![1, -2, 0, 4, 1, 1, -3, 0, 2]);
        let u = verify_mixed(&a, &MixedNormSpec::uniform(1.5, 2).unwrap()).unwrap();
        let t = verify_theorem1(&a, 1.5).unwrap();
        assert_eq!(u.holds, t.holds);
        assert!(close(u.lhs, t.lhs) && close(u.rhs, t.rhs));
        let rep = verify_mixed(
            &ints(vec![2], vec![1, 1]),
            &MixedNormSpec::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        assert!(close(rep.lhs, rep.rhs) && rep.holds);
        assert!(verify_mixed(&r2(), &MixedNormSpec::new(vec![1.0, 2.0]).unwrap()).is_err());
    }

    #[test]
    fn prop_examples() {
        let rep = verify_prop(&ints(vec![2], vec![1, 1]), 2.0).unwrap();
        assert!(close(rep.lhs, SQRT_2) && close(rep.rhs, SQRT_2) && rep.holds);
        let rep = verify_prop(&r2(), 2.0).unwrap();
        assert!(close(rep.lhs, 2.0) && close(rep.rhs, 4.0) && rep.holds);
        let rep = verify_prop(&ints(vec![1, 1], vec![3]), 7.0).unwrap();
        assert!(rep.holds && rep.exact.is_some());
        assert!(verify_prop(&r2(), 1.5).is_err());
    }

    #[test]
    fn slice_examples() {
        let rep = lower_bound_from_slices(&build_rm(2).unwrap(), 2.0).unwrap();
        assert!(close(rep.lhs, SQRT_2));
        let s = rep.slices.as_ref().unwrap();
        assert!(close(s.ell_sum, 2.0 * SQRT_2) && close(s.moment_sum, 2.0));
        assert!(s
            .exact_root
            .as_ref()
            .unwrap()
            .equals_integer(&BigUint::from(2u8)));
        assert!(rep.holds);

        let rep = lower_bound_from_slices(&build_rm(3).unwrap(), 2.0).unwrap();
        assert!(close(rep.lhs, 2.0));
        let s = rep.slices.as_ref().unwrap();
        assert!(close(s.ell_sum, 8.0) && close(s.moment_sum, 4.0));
        assert!(s
            .exact_root
            .as_ref()
            .unwrap()
            .equals_integer(&BigUint::from(4u8)));

        let rep = lower_bound_from_slices(&build_rm(2).unwrap(), 4.0).unwrap();
        assert!(close(rep.lhs, 2f64.powf(0.25)));
        assert!(rep
            .slices
            .unwrap()
            .exact_root
            .unwrap()
            .equals_integer(&BigUint::from(2u8)));
    }

    #[test]
    fn slices_below_one_use_ceiling_with_growth() {
        let rep = lower_bound_from_slices(&build_rm(2).unwrap(), 1.0).unwrap();
        assert!(close(rep.lhs, 2.0));
        assert!(close(rep.rhs, 2.0));
        assert!(rep.holds);
    }

    #[test]
    fn ksz_bound_examples() {
        let cert = ksz_search(2, 2, 16, 0).unwrap();
        assert_eq!(cert.certified_norm, 2.0);
        let rep = ksz_exponent_bound(&cert, 1.0).unwrap();
        assert!(close(rep.lhs, 2.0));
        assert!(rep.holds);
        let cert1 = ksz_search(1, 3, 1, 0).unwrap();
        assert!(ksz_exponent_bound(&cert1, 1.0).is_err());
    }

    #[test]
    fn unit_k_hat_gives_power_law() {
        let cert = ksz_search(2, 2, 16, 0).unwrap();
        let r = 1.0;
        let n = 2f64;
        let expected = n.powf(1.0 + 1.0 / r) / (cert.k_hat * n.powf(1.5));
        let rep = ksz_exponent_bound(&cert, r).unwrap();
        assert!(close(rep.lhs, expected));
    }

    #[test]
    fn fit_examples() {
        let pts: Vec<(f64, f64)> = [2.0f64, 4.0, 8.0, 16.0]
            .iter()
            .map(|&n| (n, n.sqrt()))
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12 && fit.intercept.abs() < 1e-12);
        let fit = fit_exponent(&[(2.0, 3.0), (5.0, 3.0), (9.0, 3.0)]).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert!(fit_exponent(&pts[..2]).is_err());
        assert!(fit_exponent(&[(2.0, 1.0), (2.0, 2.0), (2.0, 3.0)]).is_err());
        assert!(fit_exponent(&[(2.0, 1.0), (3.0, 0.0), (4.0, 3.0)]).is_err());
    }

    #[test]
    fn ones_moment_matches_enumeration() {
        for n in 1..=14 {
            let closed = ones_first_moment(n).unwrap();
            let enumerated =
                moment_p_exact_with_budget(&CoefficientTensor::ones(vec![n]).unwrap(), 1.0, 30)
                    .unwrap()
                    .exact_power
                    .unwrap();
            assert!(closed.value_eq(&enumerated), "n = {n}");
        }
    }

    #[test]
    fn contraction_examples() {
        let rep = verify_contraction(&r2()).unwrap();
        assert!(close(rep.lhs, 1.0) && close(rep.rhs, 2.0) && rep.holds);
        let rep = verify_contraction(&ints(vec![1, 1], vec![-3])).unwrap();
        assert!(close(rep.lhs, rep.rhs) && rep.holds);
        let y = VectorTensor::from_vectors(vec![2], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let rep = verify_contraction(&y).unwrap();
        assert!(close(rep.lhs, 1.0) && close(rep.rhs, SQRT_2) && rep.holds);
    }

    #[test]
    fn kahane_examples() {
        let rep = verify_multiple_kahane(&VectorTensor::from_scalar(&r2()), 1.0, 2.0).unwrap();
        assert!(close(rep.lhs, 2.0) && close(rep.rhs, 4.0) && rep.holds);
        let rep = verify_multiple_kahane(
            &VectorTensor::from_scalar(&ints(vec![2], vec![1, 1])),
            1.0,
            2.0,
        )
        .unwrap();
        assert!(close(rep.lhs, rep.rhs) && rep.holds);
        let y = VectorTensor::from_vectors(vec![1, 1, 1], &[vec![0.6, 0.8]]).unwrap();
        let rep = verify_multiple_kahane(&y, 1.0, 2.0).unwrap();
        assert!(close(rep.lhs, 1.0) && close(rep.rhs, 2f64.powf(1.5)) && rep.holds);
        assert!(verify_multiple_kahane(&y, 1.0, 4.0).is_err());
    }

    #[test]
    fn hilbert_examples() {
        let a = ints(vec![2, 3], vec![1, -2, 0, 3, 1, 1]);
        let scalar = verify_prop(&a, 3.0).unwrap();
        let vector = verify_hilbert_prop(&VectorTensor::from_scalar(&a), 3.0).unwrap();
        assert_eq!(scalar.holds, vector.holds);
        assert_eq!(scalar.lhs, vector.lhs);

        let along = VectorTensor::from_scalar_along(&r2(), &[0.6, 0.8]).unwrap();
        let v = verify_hilbert_prop(&along, 2.0).unwrap();
        let s = verify_prop(&r2(), 2.0).unwrap();
        assert!(close(v.lhs, s.lhs) && close(v.rhs, s.rhs) && v.holds == s.holds);

        let y = VectorTensor::from_vectors(vec![2], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let rep = verify_hilbert_prop(&y, 2.0).unwrap();
        assert!(close(rep.lhs, SQRT_2) && close(rep.rhs, 2.0) && rep.holds);
        assert!(verify_hilbert_prop(&y, 1.0).is_err());
    }

    #[test]
    fn mc_fallback_when_over_budget() {
        let lab = Lab {
            moment_bits: 4,
            mc_samples: 2000,
            seed: 3,
        };
        let a = ints(vec![3, 3], vec![1; 9]);
        let rep = lab.verify_theorem1(&a, 1.0).unwrap();
        assert_eq!(rep.moment.as_ref().unwrap().mode, MomentMode::MonteCarlo);
        assert!(rep.exact.is_none());
        assert!(lab.verify_multik(&a).is_err());
    }

    #[test]
    fn report_serializes_exact_powers_as_strings() {
        let rep = verify_multik(&r2()).unwrap();
        let json = serde_json::to_value(&rep).unwrap();
        assert_eq!(json["exact"]["lhs_power"], "4/1");
        assert_eq!(json["context"]["theorem"], "multiple-khinchin");
        assert_eq!(json["moment"]["exact_power"], "32/16");
    }

    #[test]
    fn constants_table() {
        assert_eq!(CONSTANTS.a1.value, FRAC_1_SQRT_2);
        assert!(close(CONSTANTS.k_1_2.value.powi(2), 2.0));
        assert!(!CONSTANTS.b_p_le_2.citation.is_empty());
    }
}
