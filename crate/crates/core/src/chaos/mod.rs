//! L_p moments of multiple Rademacher sums
//! `S = Σ a_{i_1..i_m} r_{i_1}(t_1) ⋯ r_{i_m}(t_m)`.
//!
//! The Rademacher functions of distinct indices are independent uniform
//! signs, so the integral over `[0,1]^m` equals the average of `|S|^p` over
//! every assignment of signs `ε^{(j)}_i`, one sign vector per variable.
//! Exact mode enumerates those assignments; Monte Carlo mode samples them.

mod dyadic;
pub(crate) mod engine;
mod mc;
mod signs;

use serde::{Deserialize, Serialize};

pub use dyadic::DyadicRational;
pub use mc::moment_p_mc;
pub use signs::SignMatrix;

use crate::error::{Error, Result};
use crate::tensor::{CoefficientTensor, VectorTensor};
use engine::{enumerate, FloatPowerSum, IntPowerSum, Layout};

/// Default cap on `Σ n_j` for exact enumeration.
pub const DEFAULT_MOMENT_BITS: u32 = 26;

/// Largest integer exponent handled in exact arithmetic.
const MAX_EXACT_P: f64 = 64.0;

/// `r_n(t) = sign(sin 2^n π t)`, taking `(-1)^{⌊2^n t⌋}` at the dyadic points
/// where the sine vanishes (so `r_n(0) = +1`).
pub fn rademacher_eval(n: u32, t: f64) -> Result<i8> {
    if n == 0 {
        return Err(Error::Parameter("Rademacher index starts at 1".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("t = {t} outside [0, 1]")));
    }
    let n = n.min(1100) as i32;
    let scaled = (t * 2f64.powi(n)).floor();
    Ok(if scaled % 2.0 == 0.0 { 1 } else { -1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMode {
    ExactEnumeration,
    /// `p = 2` for vector data via orthonormality: `E‖S‖² = Σ ‖y‖²`.
    Parseval,
    MonteCarlo,
    /// Evaluated from a closed-form expression (product tensors).
    ClosedForm,
}

/// An L_p moment `(E|S|^p)^{1/p}` with provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub p: f64,
    /// The p-th root, i.e. the L_p norm of the chaos.
    pub value: f64,
    /// `E|S|^p` as an exact dyadic rational whose denominator is the full
    /// pattern count `2^{Σ n_j}`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact_power: Option<DyadicRational>,
    pub mode: MomentMode,
    /// `log2` of the number of sign patterns averaged (exact modes).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pattern_bits: Option<u32>,
    /// Patterns actually visited after symmetry and compaction.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub patterns_walked: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample_count: Option<u64>,
    /// Standard error of the sample mean of `|S|^p` (Monte Carlo only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stderr: Option<f64>,
}

impl MomentResult {
    /// `E|S|^p` as a float.
    pub fn power_value(&self) -> f64 {
        match &self.exact_power {
            Some(q) => q.to_f64(),
            None => self.value.powf(self.p),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.exact_power.is_some()
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "p must be positive and finite, got {p}"
        )))
    }
}

fn exact_integer_p(p: f64) -> Option<u32> {
    (p.fract() == 0.0 && p <= MAX_EXACT_P).then_some(p as u32)
}

fn check_budget(needed: u32, budget: u32) -> Result<()> {
    if needed > budget {
        Err(Error::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

fn zero_result(p: f64, logical_bits: u32, exact: bool) -> MomentResult {
    MomentResult {
        p,
        value: 0.0,
        exact_power: exact.then(|| DyadicRational::new(Default::default(), logical_bits)),
        mode: MomentMode::ExactEnumeration,
        pattern_bits: Some(logical_bits),
        patterns_walked: Some(0),
        sample_count: None,
        stderr: None,
    }
}

/// Exact moment with the default enumeration budget.
pub fn moment_p_exact(a: &CoefficientTensor, p: f64) -> Result<MomentResult> {
    moment_p_exact_with_budget(a, p, DEFAULT_MOMENT_BITS)
}

/// `(2^{-Σn_j} Σ_{signs} |S|^p)^{1/p}` by enumeration of every sign pattern.
///
/// For integer tensors and integer `p` the sum is accumulated in exact
/// integers and `exact_power` is populated. `budget` caps `Σ n_j`, counted
/// after dropping all-zero hyperplanes.
pub fn moment_p_exact_with_budget(
    a: &CoefficientTensor,
    p: f64,
    budget: u32,
) -> Result<MomentResult> {
    check_p(p)?;
    let int_p = exact_integer_p(p);
    match (a.integer_entries(), int_p) {
        (Some(ints), Some(ip)) if fits_i64_walk(&ints) => {
            let lay = Layout::new(a.dims(), 1, &ints);
            if lay.is_zero() {
                return Ok(zero_result(p, lay.logical_bits(), true));
            }
            check_budget(lay.needed_bits(), budget)?;
            let reduced = enumerate(&lay, true, || IntPowerSum::new(ip)).total();
            let exact = DyadicRational::new(reduced << lay.implied_bits(), lay.logical_bits());
            Ok(MomentResult {
                p,
                value: exact.to_f64().powf(1.0 / p),
                exact_power: Some(exact),
                mode: MomentMode::ExactEnumeration,
                pattern_bits: Some(lay.logical_bits()),
                patterns_walked: Some(1u64 << lay.walk_bits()),
                sample_count: None,
                stderr: None,
            })
        }
        _ => float_enumeration(a.dims(), 1, a.entries(), p, budget),
    }
}

fn fits_i64_walk(ints: &[i64]) -> bool {
    ints.iter()
        .try_fold(0u64, |acc, &x| acc.checked_add(x.unsigned_abs()))
        .is_some_and(|s| s <= (i64::MAX as u64) / 4)
}

fn float_enumeration(
    dims: &[usize],
    lanes: usize,
    data: &[f64],
    p: f64,
    budget: u32,
) -> Result<MomentResult> {
    let lay = Layout::new(dims, lanes, data);
    if lay.is_zero() {
        return Ok(zero_result(p, lay.logical_bits(), false));
    }
    check_budget(lay.needed_bits(), budget)?;
    let total = enumerate(&lay, false, || FloatPowerSum::new(p)).total();
    let mean = total * 2f64.powi(-(lay.walk_bits() as i32));
    Ok(MomentResult {
        p,
        value: mean.powf(1.0 / p),
        exact_power: None,
        mode: MomentMode::ExactEnumeration,
        pattern_bits: Some(lay.logical_bits()),
        patterns_walked: Some(1u64 << lay.walk_bits()),
        sample_count: None,
        stderr: None,
    })
}

/// Exact moment of a vector-valued chaos with the default budget.
pub fn moment_p_exact_vec(y: &VectorTensor, p: f64) -> Result<MomentResult> {
    moment_p_exact_vec_with_budget(y, p, DEFAULT_MOMENT_BITS)
}

/// Vector-valued analogue of [`moment_p_exact_with_budget`] with the
/// Euclidean norm. `p = 2` uses `E‖S‖² = Σ ‖y‖²` and needs no enumeration.
pub fn moment_p_exact_vec_with_budget(
    y: &VectorTensor,
    p: f64,
    budget: u32,
) -> Result<MomentResult> {
    check_p(p)?;
    if p == 2.0 {
        let logical_bits = y.dims().iter().sum::<usize>() as u32;
        let exact = y
            .squared_norm_exact()
            .map(|n| DyadicRational::new(n << logical_bits, logical_bits));
        let power = match &exact {
            Some(q) => q.to_f64(),
            None => crate::sum::compensated_sum(y.components().iter().map(|x| x * x)),
        };
        return Ok(MomentResult {
            p,
            value: power.sqrt(),
            exact_power: exact,
            mode: MomentMode::Parseval,
            pattern_bits: Some(logical_bits),
            patterns_walked: Some(0),
            sample_count: None,
            stderr: None,
        });
    }
    enumerate_vec(y, p, budget)
}

/// Vector enumeration without the `p = 2` shortcut.
pub(crate) fn enumerate_vec(y: &VectorTensor, p: f64, budget: u32) -> Result<MomentResult> {
    check_p(p)?;
    float_enumeration(y.dims(), y.ambient_dim(), y.components(), p, budget)
}
