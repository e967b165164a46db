//! The recursive ±1 forms `R_m` and random ±1 forms on the full index grid.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{Monomial, NormCertificate, SparseMultilinearForm, DEFAULT_NORM_BITS};
use crate::tensor::{MAX_ENTRIES, MAX_ORDER};

pub const MAX_RM_ORDER: usize = 6;

/// `R_m` for `2 <= m <= 6`.
///
/// `R_2 = x_1y_1 + x_1y_2 + x_2y_1 - x_2y_2` and
/// `R_m(x^{(1)}, ...) = (x^{(1)}_1 + x^{(1)}_2) R_{m-1}(x^{(2)}, ...) + (x^{(1)}_1 - x^{(1)}_2) R̃_{m-1}(x^{(2)}, ...)`,
/// where `R̃_{m-1}` is `R_{m-1}` with every coordinate of variable `j`
/// shifted past the coordinates `R_{m-1}` already uses in that variable.
/// Variable `j` of `R_m` therefore has `2^j` coordinates (one-based `j`),
/// except the last, which has `2^{m-1}`.
///
/// The result is checked against its counting and norm properties before it
/// is returned; see [`check_rm`].
pub fn build_rm(m: usize) -> Result<SparseMultilinearForm> {
    if !(2..=MAX_RM_ORDER).contains(&m) {
        return Err(Error::Parameter(format!(
            "R_m needs 2 <= m <= {MAX_RM_ORDER}, got {m}"
        )));
    }
    let mut monomials = vec![
        Monomial::new(vec![0, 0], 1.0),
        Monomial::new(vec![0, 1], 1.0),
        Monomial::new(vec![1, 0], 1.0),
        Monomial::new(vec![1, 1], -1.0),
    ];
    let mut dims = vec![2usize, 2];
    for _ in 3..=m {
        let mut next = Vec::with_capacity(monomials.len() * 4);
        for mono in &monomials {
            let shifted: Vec<usize> = mono.index.iter().zip(&dims).map(|(i, d)| i + d).collect();
            for (first, tail, sign) in [
                (0, &mono.index, 1.0),
                (1, &mono.index, 1.0),
                (0, &shifted, 1.0),
                (1, &shifted, -1.0),
            ] {
                let mut index = Vec::with_capacity(tail.len() + 1);
                index.push(first);
                index.extend_from_slice(tail);
                next.push(Monomial::new(index, sign * mono.coeff));
            }
        }
        dims = std::iter::once(2)
            .chain(dims.iter().map(|d| 2 * d))
            .collect();
        monomials = next;
    }
    monomials.sort_by(|a, b| a.index.cmp(&b.index));
    let f = SparseMultilinearForm::new(m, monomials)?;
    check_rm(&f, m)?;
    Ok(f)
}

/// Verifies the properties `R_m` must have:
///
/// * `4^{m-1}` monomials, all with coefficient ±1;
/// * `2^{m-1}` distinct last-variable coordinates, each in `2^{m-1}`
///   monomials;
/// * `‖R_m‖ = 2^{m-1}`, by exact vertex enumeration when it fits the
///   default norm budget (`m <= 4`); otherwise only the all-ones vertex,
///   which attains `2^{m-1}`, is checked.
pub fn check_rm(f: &SparseMultilinearForm, m: usize) -> Result<()> {
    let fail = |msg: String| Err(Error::Invariant(format!("R_{m}: {msg}")));
    let half = 1usize << (m - 1);
    if f.order() != m {
        return fail(format!("order {}", f.order()));
    }
    if f.len() != half * half {
        return fail(format!("{} monomials, expected {}", f.len(), half * half));
    }
    if f.monomials().iter().any(|mono| mono.coeff.abs() != 1.0) {
        return fail("coefficient other than ±1".into());
    }
    let last = f.last_variable_coordinates();
    if last.len() != half {
        return fail(format!(
            "{} last-variable coordinates, expected {half}",
            last.len()
        ));
    }
    let mut per_coord = vec![0usize; f.dims()[m - 1]];
    for mono in f.monomials() {
        per_coord[mono.index[m - 1]] += 1;
    }
    if let Some(k) = last.iter().find(|&&k| per_coord[k] != half) {
        return fail(format!(
            "last coordinate {k} in {} monomials, expected {half}",
            per_coord[*k]
        ));
    }
    let target = half as f64;
    let ones: Vec<Vec<f64>> = f.dims().iter().map(|&n| vec![1.0; n]).collect();
    if f.evaluate(&ones)? != target {
        return fail("all-ones vertex does not attain 2^{m-1}".into());
    }
    match f.sup_norm_with_budget(DEFAULT_NORM_BITS) {
        Ok(cert) if cert.value != target => fail(format!("sup norm {} != {target}", cert.value)),
        Ok(_) | Err(Error::BudgetExceeded { .. }) => Ok(()),
        Err(e) => Err(e),
    }
}

fn check_grid(m: usize, n: usize) -> Result<usize> {
    if m == 0 || m > MAX_ORDER || n == 0 {
        return Err(Error::Parameter(format!(
            "need 1 <= m <= {MAX_ORDER} and n >= 1"
        )));
    }
    (0..m)
        .try_fold(1usize, |acc, _| acc.checked_mul(n))
        .filter(|&c| c <= MAX_ENTRIES)
        .ok_or_else(|| Error::SizeLimit(format!("n^m = {n}^{m} monomials")))
}

/// The full grid `{0..n}^m` with i.i.d. uniform ±1 coefficients, drawn in
/// row-major order from ChaCha8 seeded with `seed`.
pub fn ksz_random(m: usize, n: usize, seed: u64) -> Result<SparseMultilinearForm> {
    let count = check_grid(m, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut monomials = Vec::with_capacity(count);
    let mut word = 0u64;
    let mut index = vec![0usize; m];
    for pos in 0..count {
        if pos % 64 == 0 {
            word = rng.next_u64();
        }
        let sign = if (word >> (pos % 64)) & 1 == 1 {
            -1.0
        } else {
            1.0
        };
        monomials.push(Monomial::new(index.clone(), sign));
        for axis in (0..m).rev() {
            index[axis] += 1;
            if index[axis] < n {
                break;
            }
            index[axis] = 0;
        }
    }
    SparseMultilinearForm::new(m, monomials)
}

/// Smallest certified sup norm found among random ±1 forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KszCertificate {
    pub m: usize,
    pub n: usize,
    pub form: SparseMultilinearForm,
    pub certified_norm: f64,
    /// `certified_norm / n^{(m+1)/2}`.
    pub k_hat: f64,
    pub norm: NormCertificate,
    pub budget: u64,
    pub seed: u64,
    pub trials_run: u64,
    /// Trial `t` used seed `seed + t`.
    pub best_trial: u64,
}

/// Draws `budget` forms with [`ksz_random`] on seeds `seed, seed + 1, ...`,
/// certifies each exactly and keeps the smallest norm (ties to the lowest
/// trial).
pub fn ksz_search(m: usize, n: usize, budget: u64, seed: u64) -> Result<KszCertificate> {
    check_grid(m, n)?;
    if budget == 0 {
        return Err(Error::Parameter("budget must be at least 1".into()));
    }
    let needed = ((m - 1) * n) as u32;
    if needed > DEFAULT_NORM_BITS {
        return Err(Error::BudgetExceeded {
            needed,
            budget: DEFAULT_NORM_BITS,
        });
    }
    let norms: Vec<f64> = (0..budget)
        .into_par_iter()
        .map(|t| {
            let f = ksz_random(m, n, seed.wrapping_add(t))?;
            Ok(f.sup_norm()?.value)
        })
        .collect::<Result<_>>()?;
    let (best_trial, _) =
        norms
            .iter()
            .enumerate()
            .fold((0usize, f64::INFINITY), |best, (t, &v)| {
                if v < best.1 {
                    (t, v)
                } else {
                    best
                }
            });
    let form = ksz_random(m, n, seed.wrapping_add(best_trial as u64))?;
    let norm = form.sup_norm()?;
    Ok(KszCertificate {
        m,
        n,
        certified_norm: norm.value,
        k_hat: norm.value / (n as f64).powf((m as f64 + 1.0) / 2.0),
        form,
        norm,
        budget,
        seed,
        trials_run: budget,
        best_trial: best_trial as u64,
    })
}
