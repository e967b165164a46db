//! Brute-force references: every sign assignment, no symmetry or
//! incremental updates.

#![allow(dead_code)]

use chaoslab::{CoefficientTensor, SparseMultilinearForm, VectorTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Calls `f` with one ±1 vector per axis for every assignment.
pub fn for_each_assignment(dims: &[usize], mut f: impl FnMut(&[Vec<f64>])) {
    let total: usize = dims.iter().sum();
    assert!(total <= 22, "oracle limited to 22 sign bits");
    for mask in 0u64..(1 << total) {
        let mut bit = 0;
        let signs: Vec<Vec<f64>> = dims
            .iter()
            .map(|&d| {
                (0..d)
                    .map(|_| {
                        let s = if (mask >> bit) & 1 == 1 { -1.0 } else { 1.0 };
                        bit += 1;
                        s
                    })
                    .collect()
            })
            .collect();
        f(&signs);
    }
}

fn chaos_value(dims: &[usize], lanes: usize, data: &[f64], signs: &[Vec<f64>], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let len: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    for flat in 0..len {
        let prod: f64 = idx.iter().enumerate().map(|(j, &i)| signs[j][i]).product();
        for (k, o) in out.iter_mut().enumerate() {
            *o += prod * data[flat * lanes + k];
        }
        for axis in (0..dims.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// `E|S|^p` over all sign patterns.
pub fn moment_power(a: &CoefficientTensor, p: f64) -> f64 {
    vector_moment_power(&VectorTensor::from_scalar(a), p)
}

pub fn moment(a: &CoefficientTensor, p: f64) -> f64 {
    moment_power(a, p).powf(1.0 / p)
}

pub fn vector_moment_power(y: &VectorTensor, p: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0u64;
    let mut buf = vec![0.0; y.ambient_dim()];
    for_each_assignment(y.dims(), |signs| {
        chaos_value(y.dims(), y.ambient_dim(), y.components(), signs, &mut buf);
        sum += buf.iter().map(|x| x * x).sum::<f64>().sqrt().powf(p);
        count += 1;
    });
    sum / count as f64
}

pub fn vector_moment(y: &VectorTensor, p: f64) -> f64 {
    vector_moment_power(y, p).powf(1.0 / p)
}

/// Exact `Σ |S|^p` over all sign patterns for integer data, integer `p`.
pub fn integer_moment_sum(a: &CoefficientTensor, p: u32) -> num_bigint::BigUint {
    let mut sum = num_bigint::BigUint::default();
    let mut buf = [0.0];
    for_each_assignment(a.dims(), |signs| {
        chaos_value(a.dims(), 1, a.entries(), signs, &mut buf);
        sum += num_bigint::BigUint::from(buf[0].abs() as u64).pow(p);
    });
    sum
}

/// `max |T(x)|` over all sign vertices.
pub fn sup_norm(f: &SparseMultilinearForm) -> f64 {
    let mut best: f64 = 0.0;
    for_each_assignment(f.dims(), |signs| {
        best = best.max(f.evaluate(signs).unwrap().abs());
    });
    best
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dims(rng: &mut ChaCha8Rng, max_order: usize, max_dim: usize) -> Vec<usize> {
    let m = rng.random_range(1..=max_order);
    (0..m).map(|_| rng.random_range(1..=max_dim)).collect()
}

pub fn random_uniform_dims(rng: &mut ChaCha8Rng, max_order: usize, max_dim: usize) -> Vec<usize> {
    let m = rng.random_range(1..=max_order);
    vec![rng.random_range(1..=max_dim); m]
}

/// Integer entries in `[-5, 5]`, not all zero.
pub fn random_integer_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>) -> CoefficientTensor {
    let len: usize = dims.iter().product();
    let mut entries: Vec<i64> = (0..len).map(|_| rng.random_range(-5..=5)).collect();
    if entries.iter().all(|&x| x == 0) {
        entries[rng.random_range(0..len)] = rng.random_range(1..=5);
    }
    CoefficientTensor::from_integers(dims, entries).unwrap()
}

pub fn random_real_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>) -> CoefficientTensor {
    let len: usize = dims.iter().product();
    let entries = (0..len).map(|_| rng.random_range(-5.0..=5.0)).collect();
    CoefficientTensor::new(dims, entries).unwrap()
}

pub fn random_vector_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>, d: usize) -> VectorTensor {
    let len: usize = dims.iter().product();
    let components = (0..len * d).map(|_| rng.random_range(-5.0..=5.0)).collect();
    VectorTensor::new(dims, d, components).unwrap()
}
