//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::f64::consts::FRAC_1_SQRT_2;
use std::time::{Duration, Instant};

use chaoslab::lab::ones_first_moment;
use chaoslab::search::Strategy;
use chaoslab::{
    build_rm, estimate_a1, exponent_sweep, khinchin_ratio, ksz_search, lower_bound_from_slices,
    maximize_ratio, moment_p_exact, moment_p_mc, verify_contraction, verify_hilbert_prop,
    verify_mixed, verify_multiple_kahane, verify_prop, verify_theorem1, CoefficientTensor,
    KszCertificate, MixedNormSpec, SearchConfig,
};
use num_bigint::BigUint;
use rand::Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: chaoslab::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took <= limit, || {
        format!("{what} took {took:.1?}, limit {limit:?}")
    })
}

/// ‖R_m‖ = 2^{m-1} for m = 2..4; counts for m = 2..6.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    for m in 2..=6usize {
        let f = lib(build_rm(m))?;
        ensure(f.len() == 1 << (2 * m - 2), || {
            format!("R_{m} has {} monomials", f.len())
        })?;
        let last = f.last_variable_coordinates().len();
        ensure(last == 1 << (m - 1), || {
            format!("R_{m} uses {last} last coordinates")
        })?;
        ensure(f.is_integer(), || format!("R_{m} is not integer"))?;
    }
    for m in 2..=4usize {
        let f = lib(build_rm(m))?;
        let cert = lib(f.sup_norm())?;
        let want = (1u64 << (m - 1)) as f64;
        ensure(cert.value == want, || {
            format!("‖R_{m}‖ = {}, expected {want}", cert.value)
        })?;
        let at = lib(f.evaluate_signs(&cert.witness))?;
        ensure(at == want, || format!("R_{m} witness evaluates to {at}"))?;
    }
    within(start, Duration::from_secs(60), "R_m certification")?;
    Ok("‖R_2‖ = 2, ‖R_3‖ = 4, ‖R_4‖ = 8 exactly; counts 2^{2m-2} and 2^{m-1} for m = 2..6".into())
}

/// Exact slice bound 2^{m/r} and `verify_prop` on random integer tensors.
fn criterion_2() -> Outcome {
    let start = Instant::now();
    for m in 1..=3usize {
        let f = lib(build_rm(m + 1))?;
        let t = lib(f.to_tensor())?;
        let last = *t.dims().last().unwrap();
        for k in 0..last {
            let mu = lib(moment_p_exact(&lib(t.slice_last(k))?, 1.0))?;
            ensure(
                mu.exact_power
                    .as_ref()
                    .unwrap()
                    .equals_integer(&BigUint::from(1u8)),
                || {
                    format!(
                        "slice {k} of R_{} has moment {}",
                        m + 1,
                        mu.exact_power.as_ref().unwrap()
                    )
                },
            )?;
        }
        for r in 2..=4u32 {
            let rep = lib(lower_bound_from_slices(&f, r as f64))?;
            let s = rep.slices.as_ref().unwrap();
            let root = s.exact_root.as_ref().ok_or("no exact root")?;
            ensure(
                root.root == r && root.equals_integer(&(BigUint::from(1u8) << m)),
                || {
                    format!(
                        "m={m} r={r}: bound^{} = {}/{}",
                        root.root, root.numerator, root.denominator
                    )
                },
            )?;
            let m_exact = rep.moment.as_ref().unwrap().exact_power.as_ref().unwrap();
            ensure(m_exact.equals_integer(&(BigUint::from(1u8) << m)), || {
                format!("M = {m_exact}")
            })?;
            let l_want = 2f64.powi(m as i32) * 2f64.powf(m as f64 / r as f64);
            ensure((s.ell_sum - l_want).abs() <= 1e-12 * l_want, || {
                format!("L = {}", s.ell_sum)
            })?;
            let want = 2f64.powf(m as f64 / r as f64);
            ensure((rep.lhs - want).abs() <= 1e-12 * want, || {
                format!("bound {} vs {want}", rep.lhs)
            })?;
        }
    }
    let mut rng = common::rng(2);
    for i in 0..1000 {
        let dims = common::random_dims(&mut rng, 3, 4);
        let a = common::random_integer_tensor(&mut rng, dims);
        let r = [2.0, 2.5, 3.0, 4.0, 7.0][rng.random_range(0..5)];
        let rep = lib(verify_prop(&a, r))?;
        ensure(rep.holds, || {
            format!("verify_prop violated on case {i}: {a:?}, r = {r}")
        })?;
    }
    within(start, Duration::from_secs(300), "slice bounds")?;
    Ok("bound^r = 2^m exactly for m in {1,2,3}, r in {2,3,4}; verify_prop 1000/1000".into())
}

/// Khinchin ratio of (1,1) and the A_1 estimates for n ≤ 12.
fn criterion_3() -> Outcome {
    let pair = CoefficientTensor::from_integers(vec![2], vec![1, 1]).unwrap();
    let k = lib(khinchin_ratio(&pair, 1.0))?;
    ensure((k - FRAC_1_SQRT_2).abs() <= 1e-12, || {
        format!("khinchin_ratio((1,1)) = {k}")
    })?;
    let mut prev = f64::INFINITY;
    let mut values = Vec::new();
    for n in 1..=12 {
        let res = lib(estimate_a1(n, 10_000, 12))?;
        let v = res.best_ratio;
        ensure(v >= FRAC_1_SQRT_2 - 1e-9, || {
            format!("A_1 estimate {v} at n = {n}")
        })?;
        ensure(v <= prev, || {
            format!("estimate increased at n = {n}: {v} > {prev}")
        })?;
        prev = v;
        values.push(v);
    }
    Ok(format!(
        "ratio(1,1) = {k:.15}; estimates n=1..12 nonincreasing, min {:.15}",
        values.last().unwrap()
    ))
}

fn random_r(rng: &mut impl Rng) -> f64 {
    [0.5, 1.0, 1.5][rng.random_range(0..3)]
}

/// Growth bound and its mixed variant on random tensors.
fn criterion_4() -> Outcome {
    let mut rng = common::rng(4);
    let mut worst = 0f64;
    for i in 0..1000 {
        let dims = common::random_uniform_dims(&mut rng, 3, 4);
        let a = if i % 2 == 0 {
            common::random_integer_tensor(&mut rng, dims)
        } else {
            common::random_real_tensor(&mut rng, dims)
        };
        let r = random_r(&mut rng);
        let rep = lib(verify_theorem1(&a, r))?;
        ensure(rep.holds, || {
            format!("verify_theorem1 violated on case {i}, r = {r}: {rep:?}")
        })?;
        worst = worst.max(rep.ratio);
    }
    for i in 0..1000 {
        let dims = common::random_uniform_dims(&mut rng, 3, 4);
        let spec = MixedNormSpec::new(dims.iter().map(|_| random_r(&mut rng)).collect()).unwrap();
        let a = if i % 2 == 0 {
            common::random_integer_tensor(&mut rng, dims)
        } else {
            common::random_real_tensor(&mut rng, dims)
        };
        let rep = lib(verify_mixed(&a, &spec))?;
        ensure(rep.holds, || {
            format!("verify_mixed violated on case {i}: {rep:?}")
        })?;
        worst = worst.max(rep.ratio);
    }
    Ok(format!(
        "verify_theorem1 1000/1000, verify_mixed 1000/1000; largest lhs/rhs {worst:.6}"
    ))
}

/// Product-ones sweeps recover the growth exponents.
fn criterion_5() -> Outcome {
    let start = Instant::now();
    for n in 1..=20 {
        let closed = lib(ones_first_moment(n))?;
        let ones = CoefficientTensor::ones(vec![n]).unwrap();
        let enumerated = lib(moment_p_exact(&ones, 1.0))?;
        ensure(
            closed.value_eq(enumerated.exact_power.as_ref().unwrap()),
            || format!("closed form {closed} differs from enumeration at n = {n}"),
        )?;
    }
    let ns1: Vec<usize> = (2..=64).collect();
    let fit1 = lib(exponent_sweep(
        1,
        1.0,
        1.0,
        &ns1,
        Strategy::ProductOnes,
        0,
        0,
    ))?;
    ensure((fit1.slope - 0.5).abs() <= 0.1, || {
        format!("m=1 slope {}", fit1.slope)
    })?;
    let ns2: Vec<usize> = (2..=10).collect();
    let fit2 = lib(exponent_sweep(
        2,
        1.0,
        1.0,
        &ns2,
        Strategy::ProductOnes,
        0,
        0,
    ))?;
    ensure((fit2.slope - 1.0).abs() <= 0.15, || {
        format!("m=2 slope {}", fit2.slope)
    })?;
    within(start, Duration::from_secs(300), "exponent sweeps")?;
    Ok(format!(
        "slope m=1: {:.4} (target 0.5), m=2: {:.4} (target 1.0)",
        fit1.slope, fit2.slope
    ))
}

/// `max_x Σ_k |Σ_i x_i a_{ik}|` by enumerating every sign vector `x`.
fn matrix_norm_oracle(cert: &KszCertificate) -> f64 {
    let n = cert.n;
    let t = cert.form.to_tensor().unwrap();
    let mut best: f64 = 0.0;
    for mask in 0u64..(1 << n) {
        let total: f64 = (0..n)
            .map(|k| {
                (0..n)
                    .map(|i| {
                        let s = if (mask >> i) & 1 == 1 { -1.0 } else { 1.0 };
                        s * t.get(&[i, k]).unwrap()
                    })
                    .sum::<f64>()
                    .abs()
            })
            .sum();
        best = best.max(total);
    }
    best
}

/// Random ±1 witnesses with small norm, independently recertified.
fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    for n in [4usize, 8, 12] {
        let cert = lib(ksz_search(2, n, 2000, 6))?;
        ensure(cert.k_hat <= 2.0, || {
            format!("n = {n}: k_hat = {}", cert.k_hat)
        })?;
        let oracle = matrix_norm_oracle(&cert);
        ensure(oracle == cert.certified_norm, || {
            format!(
                "n = {n}: certified {} but oracle {oracle}",
                cert.certified_norm
            )
        })?;
        let again = lib(cert.form.sup_norm())?.value;
        ensure(again == cert.certified_norm, || {
            format!("n = {n}: recomputed {again}")
        })?;
        details.push(format!("n={n}: k_hat {:.4}", cert.k_hat));
    }
    for n in 1..=16 {
        let cert = lib(ksz_search(1, n, 3, 1))?;
        ensure(cert.k_hat == 1.0, || {
            format!("m = 1, n = {n}: k_hat = {}", cert.k_hat)
        })?;
    }
    within(start, Duration::from_secs(600), "KSZ search")?;
    Ok(format!(
        "{}; m=1 k_hat = 1 for n = 1..16",
        details.join(", ")
    ))
}

/// `E|S|² = ℓ₂(a)²` as exact rationals on random integer tensors.
fn criterion_7() -> Outcome {
    let mut rng = common::rng(7);
    for i in 0..1000 {
        let dims = common::random_dims(&mut rng, 3, 4);
        let a = common::random_integer_tensor(&mut rng, dims);
        let res = lib(moment_p_exact(&a, 2.0))?;
        let l2sq = a.ell_r_power_exact(2).unwrap();
        let exact = res.exact_power.as_ref().ok_or("no exact power")?;
        ensure(exact.equals_integer(&l2sq), || {
            format!("case {i}: E|S|^2 = {exact}, ℓ₂² = {l2sq}")
        })?;
    }
    Ok("1000/1000 exact matches".into())
}

/// Contraction, multiple Kahane and the Hilbert-space power bound.
fn criterion_8() -> Outcome {
    let mut rng = common::rng(8);
    for i in 0..1000 {
        let dims = common::random_dims(&mut rng, 2, 3);
        let d = rng.random_range(1..=3);
        let y = common::random_vector_tensor(&mut rng, dims, d);
        let c = lib(verify_contraction(&y))?;
        ensure(c.holds, || {
            format!("contraction violated on case {i}: {c:?}")
        })?;
        let k = lib(verify_multiple_kahane(&y, 1.0, 2.0))?;
        ensure(k.holds, || {
            format!("multiple Kahane violated on case {i}: {k:?}")
        })?;
        let r = [2.0, 3.0, 4.0, 6.5][rng.random_range(0..4)];
        let h = lib(verify_hilbert_prop(&y, r))?;
        ensure(h.holds, || {
            format!("Hilbert bound violated on case {i}: {h:?}")
        })?;
    }
    Ok("3 x 1000/1000".into())
}

fn deterministic_outputs() -> Result<Vec<String>, String> {
    let json = |v: &dyn erased::Json| v.to_json();
    let mut out = Vec::new();
    let real = CoefficientTensor::new(
        vec![6, 6, 6],
        (0..216)
            .map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0)
            .collect(),
    )
    .unwrap();
    out.push(json(&lib(moment_p_exact(&real, 1.5))?));
    out.push(json(&lib(moment_p_mc(&real, 1.0, 5000, 3))?));
    out.push(json(&lib(ksz_search(2, 8, 200, 7))?));
    let mut cfg = SearchConfig::new(2, 3, 1.0, 1.0, Strategy::Annealing);
    cfg.budget = 300;
    cfg.seed = 11;
    out.push(json(&lib(maximize_ratio(&cfg))?));
    cfg.strategy = Strategy::ContinuousPerturbation;
    out.push(json(&lib(maximize_ratio(&cfg))?));
    out.push(json(&lib(lower_bound_from_slices(
        &lib(build_rm(4))?,
        3.0,
    ))?));
    out.push(json(&lib(estimate_a1(6, 500, 1))?));
    out.push(json(&lib(exponent_sweep(
        1,
        1.0,
        1.0,
        &[2, 4, 8, 16],
        Strategy::SignCoordinateAscent,
        50,
        5,
    ))?));
    Ok(out)
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string(self).expect("serializable")
        }
    }
}

/// Byte-identical results across thread counts.
fn criterion_9() -> Outcome {
    let mut reference: Option<Vec<String>> = None;
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let outputs = pool.install(deterministic_outputs)?;
        match &reference {
            None => reference = Some(outputs),
            Some(r) => {
                for (k, (a, b)) in r.iter().zip(&outputs).enumerate() {
                    ensure(a == b, || {
                        format!("output {k} differs with {threads} threads")
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "{} outputs identical with 1, 2 and 4 threads",
        reference.map_or(0, |r| r.len())
    ))
}

fn main() {
    let criteria: [Check; 9] = [
        ("R_m certification", criterion_1),
        ("exact slice bound 2^{m/r}", criterion_2),
        ("Khinchin baseline A_1", criterion_3),
        ("growth bound on random tensors", criterion_4),
        ("blow-up exponent fit", criterion_5),
        ("KSZ witnesses", criterion_6),
        ("exact L_2 identity", criterion_7),
        ("vector-valued suite", criterion_8),
        ("determinism across thread counts", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
