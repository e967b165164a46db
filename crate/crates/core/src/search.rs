//! Search for coefficient tensors with a large ratio `ℓ_r(a) / ‖S_a‖_p`.
//!
//! Every candidate is scored by the same objective: exact enumeration when
//! the tensor fits the moment budget, otherwise Monte Carlo on one fixed
//! seed for the whole run, so that all candidates see the same sign samples.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{
    moment_p_exact_with_budget, moment_p_mc, DyadicRational, MomentMode, MomentResult,
    DEFAULT_MOMENT_BITS,
};
use crate::error::{Error, Result};
use crate::lab::{fit_exponent, FitResult};
use crate::tensor::{CoefficientTensor, MAX_ORDER};

/// Largest number of entries for exhaustive sign enumeration.
pub const MAX_EXHAUSTIVE_ENTRIES: usize = 24;

/// Relative margin a candidate must gain before it replaces the incumbent.
const IMPROVEMENT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ExhaustiveSigns,
    SignCoordinateAscent,
    Annealing,
    ContinuousPerturbation,
    ProductOnes,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::ExhaustiveSigns,
        Strategy::SignCoordinateAscent,
        Strategy::Annealing,
        Strategy::ContinuousPerturbation,
        Strategy::ProductOnes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::ExhaustiveSigns => "exhaustive-signs",
            Strategy::SignCoordinateAscent => "sign-coordinate-ascent",
            Strategy::Annealing => "annealing",
            Strategy::ContinuousPerturbation => "continuous-perturbation",
            Strategy::ProductOnes => "product-ones",
        }
    }

    /// Whether the strategy runs random restarts and consumes `budget`.
    fn is_iterative(self) -> bool {
        matches!(
            self,
            Strategy::SignCoordinateAscent | Strategy::Annealing | Strategy::ContinuousPerturbation
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown strategy `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub m: usize,
    pub n: usize,
    pub r: f64,
    pub p: f64,
    pub strategy: Strategy,
    /// Objective evaluations per restart (iterative strategies only).
    pub budget: u64,
    pub seed: u64,
    pub restarts: u32,
    /// Exact enumeration cap on `Σ n_j`; larger tensors use Monte Carlo.
    pub moment_bits: u32,
    pub mc_samples: u64,
    /// Starting tensor for restart 0 of the iterative strategies.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub start: Option<CoefficientTensor>,
}

impl SearchConfig {
    pub fn new(m: usize, n: usize, r: f64, p: f64, strategy: Strategy) -> Self {
        Self {
            m,
            n,
            r,
            p,
            strategy,
            budget: 1000,
            seed: 0,
            restarts: 4,
            moment_bits: DEFAULT_MOMENT_BITS,
            mc_samples: 20_000,
            start: None,
        }
    }

    fn entries(&self) -> Result<usize> {
        self.n
            .checked_pow(self.m as u32)
            .filter(|&len| len <= crate::tensor::MAX_ENTRIES)
            .ok_or_else(|| Error::SizeLimit(format!("n^m = {}^{} entries", self.n, self.m)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > MAX_ORDER {
            return Err(Error::Parameter(format!(
                "m = {} outside 1..={MAX_ORDER}",
                self.m
            )));
        }
        if self.n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        for (name, v) in [("r", self.r), ("p", self.p)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let len = self.entries()?;
        if self.strategy == Strategy::ExhaustiveSigns && len > MAX_EXHAUSTIVE_ENTRIES {
            return Err(Error::SizeLimit(format!(
                "exhaustive sign search over {len} entries exceeds {MAX_EXHAUSTIVE_ENTRIES}"
            )));
        }
        if self.strategy.is_iterative() {
            if self.restarts == 0 {
                return Err(Error::Parameter("restarts must be at least 1".into()));
            }
            if self.budget == 0 {
                return Err(Error::Parameter(format!(
                    "{} needs a positive budget",
                    self.strategy
                )));
            }
        }
        if let Some(start) = &self.start {
            if start.dims() != vec![self.n; self.m].as_slice() {
                return Err(Error::Shape(format!(
                    "start tensor has dims {:?}, expected {:?}",
                    start.dims(),
                    vec![self.n; self.m]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_tensor: CoefficientTensor,
    pub best_ratio: f64,
    pub best_moment: MomentResult,
    /// `(step, ratio)`: the incumbent after each improvement.
    pub trace: Vec<(u64, f64)>,
    pub evaluations: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub best_restart: Option<u32>,
    pub config: SearchConfig,
}

/// `ℓ_r(a) / ‖S_a‖_p` with the run's fixed moment policy.
#[derive(Clone, Copy, Debug)]
pub struct Objective {
    pub r: f64,
    pub p: f64,
    pub moment_bits: u32,
    pub mc_samples: u64,
    pub seed: u64,
}

impl Objective {
    pub fn of(cfg: &SearchConfig) -> Self {
        Self {
            r: cfg.r,
            p: cfg.p,
            moment_bits: cfg.moment_bits,
            mc_samples: cfg.mc_samples,
            seed: cfg.seed,
        }
    }

    pub fn moment(&self, a: &CoefficientTensor) -> Result<MomentResult> {
        match moment_p_exact_with_budget(a, self.p, self.moment_bits) {
            Err(Error::BudgetExceeded { .. }) => moment_p_mc(a, self.p, self.mc_samples, self.seed),
            other => other,
        }
    }

    /// The ratio, `0` for the zero tensor.
    pub fn eval(&self, a: &CoefficientTensor) -> Result<(f64, MomentResult)> {
        let moment = self.moment(a)?;
        let ratio = if moment.value == 0.0 {
            0.0
        } else {
            a.ell_r_norm(self.r)? / moment.value
        };
        Ok((ratio, moment))
    }
}

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent * (1.0 + IMPROVEMENT)
}

fn signs_tensor(dims: &[usize], negative: impl Fn(usize) -> bool) -> CoefficientTensor {
    let len: usize = dims.iter().product();
    CoefficientTensor::from_integers(
        dims.to_vec(),
        (0..len).map(|i| if negative(i) { -1 } else { 1 }).collect(),
    )
    .expect("dims validated")
}

fn flip(a: &CoefficientTensor, i: usize) -> CoefficientTensor {
    let mut e = a.entries().to_vec();
    e[i] = -e[i];
    CoefficientTensor::new(a.dims().to_vec(), e).expect("same shape")
}

fn normalized(dims: &[usize], mut e: Vec<f64>) -> CoefficientTensor {
    let norm = crate::sum::compensated_sum(e.iter().map(|x| x * x)).sqrt();
    if norm > 0.0 {
        e.iter_mut().for_each(|x| *x /= norm);
    }
    CoefficientTensor::new(dims.to_vec(), e).expect("finite entries")
}

fn restart_rng(seed: u64, restart: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

struct Run {
    tensor: CoefficientTensor,
    ratio: f64,
    moment: MomentResult,
    trace: Vec<(u64, f64)>,
    evaluations: u64,
}

/// Maximizes `ℓ_r(a) / ‖S_a‖_p` over the strategy's search space.
///
/// * `exhaustive-signs`: every ±1 tensor with first entry `+1` (the
///   objective is even); ties go to the lexicographically smallest tensor,
///   ordering `+1` before `-1`.
/// * `sign-coordinate-ascent`: from a random ±1 start, flip single entries in
///   index order, keeping strict improvements, until a full pass changes
///   nothing or `budget` evaluations are spent.
/// * `annealing`: random single flips accepted with probability
///   `exp(Δ / T)`, `T` cooling geometrically over `budget` steps from 5% to
///   0.01% of the starting ratio.
/// * `continuous-perturbation`: real tensors on the unit `ℓ₂` sphere; a
///   uniform random direction scaled by an adaptive step is added and the
///   result renormalized, accepted on improvement.
/// * `product-ones`: the all-ones tensor, whose moment factorizes as the
///   `m`-th power of the one-dimensional moment.
///
/// Restarts run in parallel; restart `k` draws from ChaCha8 on `seed`,
/// stream `k`, and restart 0 begins at `cfg.start` when one is given. The
/// best restart wins, ties to the lowest index.
pub fn maximize_ratio(cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let obj = Objective::of(cfg);
    let dims = vec![cfg.n; cfg.m];
    let (run, best_restart) = match cfg.strategy {
        Strategy::ExhaustiveSigns => (exhaustive(&obj, &dims)?, None),
        Strategy::ProductOnes => (product_ones(cfg)?, None),
        _ => {
            let runs = (0..cfg.restarts)
                .into_par_iter()
                .map(|k| {
                    let mut rng = restart_rng(cfg.seed, k);
                    let start = match (&cfg.start, k) {
                        (Some(s), 0) => s.clone(),
                        _ => initial(cfg.strategy, &dims, &mut rng),
                    };
                    match cfg.strategy {
                        Strategy::SignCoordinateAscent => ascent(&obj, start, cfg.budget),
                        Strategy::Annealing => anneal(&obj, start, cfg.budget, &mut rng),
                        _ => perturb(&obj, start, cfg.budget, &mut rng, true),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let total: u64 = runs.iter().map(|r| r.evaluations).sum();
            let (k, mut best) = runs
                .into_iter()
                .enumerate()
                .reduce(|a, b| if b.1.ratio > a.1.ratio { b } else { a })
                .expect("at least one restart");
            best.evaluations = total;
            (best, Some(k as u32))
        }
    };
    Ok(SearchResult {
        best_tensor: run.tensor,
        best_ratio: run.ratio,
        best_moment: run.moment,
        trace: run.trace,
        evaluations: run.evaluations,
        best_restart,
        config: cfg.clone(),
    })
}

fn initial(strategy: Strategy, dims: &[usize], rng: &mut ChaCha8Rng) -> CoefficientTensor {
    let len: usize = dims.iter().product();
    if strategy == Strategy::ContinuousPerturbation {
        normalized(
            dims,
            (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        )
    } else {
        let bits: Vec<bool> = (0..len).map(|_| rng.next_u32() & 1 == 1).collect();
        signs_tensor(dims, |i| bits[i])
    }
}

fn exhaustive(obj: &Objective, dims: &[usize]) -> Result<Run> {
    let len: usize = dims.iter().product();
    let count = 1u64 << (len - 1);
    // Candidate c negates entry i ≥ 1 when bit (len - 1 - i) of c is set, so
    // increasing c is increasing lexicographic order.
    let candidate = |c: u64| signs_tensor(dims, |i| i > 0 && (c >> (len - 1 - i)) & 1 == 1);
    let chunks = count.min(256);
    let per = count.div_ceil(chunks);
    let bests = (0..chunks)
        .into_par_iter()
        .map(|b| {
            let mut best: Option<(f64, u64)> = None;
            for c in b * per..((b + 1) * per).min(count) {
                let (ratio, _) = obj.eval(&candidate(c))?;
                if best.is_none_or(|(r, _)| ratio > r) {
                    best = Some((ratio, c));
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trace = Vec::new();
    let mut best: Option<(f64, u64)> = None;
    for (b, chunk_best) in bests.into_iter().enumerate() {
        if let Some((ratio, c)) = chunk_best {
            if best.is_none_or(|(r, _)| ratio > r) {
                best = Some((ratio, c));
                trace.push(((((b as u64) + 1) * per).min(count), ratio));
            }
        }
    }
    let (ratio, c) = best.expect("at least one candidate");
    let tensor = candidate(c);
    let (_, moment) = obj.eval(&tensor)?;
    Ok(Run {
        tensor,
        ratio,
        moment,
        trace,
        evaluations: count,
    })
}

fn ascent(obj: &Objective, start: CoefficientTensor, budget: u64) -> Result<Run> {
    let (mut ratio, mut moment) = obj.eval(&start)?;
    let mut tensor = start;
    let mut evaluations = 1u64;
    let mut trace = vec![(0, ratio)];
    'passes: loop {
        let mut changed = false;
        for i in 0..tensor.len() {
            if evaluations >= budget {
                break 'passes;
            }
            let cand = flip(&tensor, i);
            let (r, mu) = obj.eval(&cand)?;
            evaluations += 1;
            if improves(r, ratio) {
                tensor = cand;
                ratio = r;
                moment = mu;
                changed = true;
                trace.push((evaluations - 1, ratio));
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Run {
        tensor,
        ratio,
        moment,
        trace,
        evaluations,
    })
}

fn anneal(
    obj: &Objective,
    start: CoefficientTensor,
    budget: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Run> {
    let (mut cur_ratio, mut cur_moment) = obj.eval(&start)?;
    let mut cur = start;
    let mut best = (cur.clone(), cur_ratio, cur_moment.clone());
    let mut trace = vec![(0, cur_ratio)];
    let t0 = 0.05 * cur_ratio.max(f64::MIN_POSITIVE);
    let t_end = 1e-4 * cur_ratio.max(f64::MIN_POSITIVE);
    let steps = budget.saturating_sub(1);
    for step in 0..steps {
        let temp = t0 * (t_end / t0).powf(step as f64 / steps.max(1) as f64);
        let i = rng.random_range(0..cur.len());
        let cand = flip(&cur, i);
        let (r, mu) = obj.eval(&cand)?;
        let accept = r >= cur_ratio || rng.random::<f64>() < ((r - cur_ratio) / temp).exp();
        if accept {
            cur = cand;
            cur_ratio = r;
            cur_moment = mu;
            if improves(cur_ratio, best.1) {
                best = (cur.clone(), cur_ratio, cur_moment.clone());
                trace.push((step + 1, cur_ratio));
            }
        }
    }
    Ok(Run {
        tensor: best.0,
        ratio: best.1,
        moment: best.2,
        trace,
        evaluations: steps + 1,
    })
}

/// `E|ε_1 + ... + ε_n|^p`: exact for integer `p ≤ 64`, otherwise `None` in
/// the first slot.
fn ones_power(n: usize, p: f64) -> (Option<DyadicRational>, f64) {
    let mut binom = BigUint::one();
    let mut exact = BigUint::ZERO;
    let mut float = 0.0;
    let int_p = (p.fract() == 0.0 && p <= 64.0).then_some(p as u32);
    let log_norm = -(n as f64) * std::f64::consts::LN_2;
    for k in 0..=n {
        let dist = n.abs_diff(2 * k);
        if let Some(q) = int_p {
            exact += &binom * BigUint::from(dist).pow(q);
        }
        if dist > 0 {
            let b = binom.to_f64().unwrap_or(f64::INFINITY);
            float += (b.ln() + p * (dist as f64).ln() + log_norm).exp();
        }
        binom = binom * BigUint::from(n - k) / BigUint::from(k + 1);
    }
    let exact = int_p.map(|_| DyadicRational::new(exact, n as u32));
    let value = exact.as_ref().map_or(float, |q| q.to_f64());
    (exact, value)
}

fn product_ones(cfg: &SearchConfig) -> Result<Run> {
    let dims = vec![cfg.n; cfg.m];
    let tensor = CoefficientTensor::ones(dims)?;
    let (exact1, power1) = if cfg.p == 1.0 {
        let q = crate::lab::ones_first_moment(cfg.n)?;
        let v = q.to_f64();
        (Some(q), v)
    } else {
        ones_power(cfg.n, cfg.p)
    };
    let exact = exact1.map(|q| q.pow(cfg.m as u32));
    let power = exact
        .as_ref()
        .map_or(power1.powi(cfg.m as i32), |q| q.to_f64());
    let value = power.powf(1.0 / cfg.p);
    let moment = MomentResult {
        p: cfg.p,
        value,
        exact_power: exact,
        mode: MomentMode::ClosedForm,
        pattern_bits: Some((cfg.n * cfg.m) as u32),
        patterns_walked: Some(0),
        sample_count: None,
        stderr: None,
    };
    let ratio = tensor.ell_r_norm(cfg.r)? / value;
    Ok(Run {
        tensor,
        ratio,
        moment,
        trace: vec![(0, ratio)],
        evaluations: 0,
    })
}

/// Smallest `‖S_a‖₁ / ℓ₂(a)` found over real vectors of length `n`.
///
/// Starts from every `1_k / √k` (`k = 1..n`, zero-padded), keeps the best
/// (ties to the smallest `k`), then refines it by continuous perturbation
/// for `budget` steps. The result is an upper bound on the best constant at
/// length `n`.
pub fn estimate_a1(n: usize, budget: u64, seed: u64) -> Result<SearchResult> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let mut cfg = SearchConfig::new(1, n, 2.0, 1.0, Strategy::ContinuousPerturbation);
    cfg.budget = budget.max(1);
    cfg.seed = seed;
    cfg.restarts = 1;
    cfg.validate()?;
    let khinchin = Khinchin(Objective::of(&cfg));
    let starts = (1..=n)
        .map(|k| {
            let a = normalized(
                &[n],
                (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect(),
            );
            Ok((khinchin.score(&a)?.0, a))
        })
        .collect::<Result<Vec<_>>>()?;
    let (_, start) = starts
        .into_iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .expect("n ≥ 1");
    cfg.start = Some(start.clone());
    let run = perturb(
        &khinchin,
        start,
        cfg.budget,
        &mut restart_rng(seed, 0),
        false,
    )?;
    Ok(SearchResult {
        best_tensor: run.tensor,
        best_ratio: run.ratio,
        best_moment: run.moment,
        trace: run.trace,
        evaluations: run.evaluations,
        best_restart: Some(0),
        config: cfg,
    })
}

trait Score: Sync {
    fn score(&self, a: &CoefficientTensor) -> Result<(f64, MomentResult)>;
}

impl Score for Objective {
    fn score(&self, a: &CoefficientTensor) -> Result<(f64, MomentResult)> {
        self.eval(a)
    }
}

/// `‖S_a‖_p / ℓ₂(a)`.
struct Khinchin(Objective);

impl Score for Khinchin {
    fn score(&self, a: &CoefficientTensor) -> Result<(f64, MomentResult)> {
        let mu = self.0.moment(a)?;
        Ok((mu.value / a.ell_r_norm(2.0)?, mu))
    }
}

/// Random-direction hill climbing on the unit sphere; maximizes the score
/// when `maximize`, minimizes it otherwise.
fn perturb(
    obj: &impl Score,
    start: CoefficientTensor,
    budget: u64,
    rng: &mut ChaCha8Rng,
    maximize: bool,
) -> Result<Run> {
    let dims = start.dims().to_vec();
    let better = |a: f64, b: f64| {
        if maximize {
            improves(a, b)
        } else {
            a < b * (1.0 - IMPROVEMENT)
        }
    };
    let mut tensor = normalized(&dims, start.entries().to_vec());
    let (mut ratio, mut moment) = obj.score(&tensor)?;
    let mut trace = vec![(0, ratio)];
    let mut step_size = 0.3;
    for step in 1..budget {
        let cand = normalized(
            &dims,
            tensor
                .entries()
                .iter()
                .map(|x| x + step_size * rng.random_range(-1.0..=1.0))
                .collect(),
        );
        let (r, mu) = obj.score(&cand)?;
        if better(r, ratio) {
            tensor = cand;
            ratio = r;
            moment = mu;
            step_size = (step_size * 1.2).min(1.0);
            trace.push((step, ratio));
        } else {
            step_size = (step_size * 0.95).max(1e-4);
        }
    }
    Ok(Run {
        tensor,
        ratio,
        moment,
        trace,
        evaluations: budget,
    })
}

/// Runs [`maximize_ratio`] for each `n` and fits `log ratio` against
/// `log n`. Sizes whose search exceeds a size or enumeration limit are
/// skipped; at least three must remain.
pub fn exponent_sweep(
    m: usize,
    r: f64,
    p: f64,
    n_list: &[usize],
    strategy: Strategy,
    budget: u64,
    seed: u64,
) -> Result<FitResult> {
    let points = n_list
        .par_iter()
        .map(|&n| {
            let mut cfg = SearchConfig::new(m, n, r, p, strategy);
            cfg.budget = budget;
            cfg.seed = seed;
            match maximize_ratio(&cfg) {
                Ok(res) => Ok(Some((n as f64, res.best_ratio))),
                Err(Error::SizeLimit(_) | Error::BudgetExceeded { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = points.into_iter().flatten().collect();
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "only {} feasible sizes; need at least 3",
            points.len()
        )));
    }
    fit_exponent(&points)
}
