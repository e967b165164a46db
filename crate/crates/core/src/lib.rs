//! Moments of multiple Rademacher sums, extremal multilinear forms on
//! `c_0 × ⋯ × c_0`, and desk-scale checks of Khinchin-type inequalities.
//!
//! The modules build on each other in this order:
//!
//! * [`tensor`]: coefficient arrays, `ℓ_r` and mixed norms, slicing;
//! * [`chaos`]: exact and Monte Carlo L_p moments of the chaos;
//! * [`forms`]: sparse multilinear forms and their exact sup-norm;
//! * [`constructions`]: the recursive `R_m` forms and random ±1 witnesses;
//! * [`lab`]: inequality checks, exact lower bounds and exponent fits;
//! * [`search`]: numerical search for extremal coefficient tensors.

pub mod chaos;
pub mod constructions;
pub mod error;
pub mod forms;
pub mod lab;
pub mod search;
pub mod sum;
pub mod tensor;

pub use chaos::{
    moment_p_exact, moment_p_exact_vec, moment_p_mc, rademacher_eval, DyadicRational, MomentMode,
    MomentResult, SignMatrix,
};
pub use constructions::{build_rm, ksz_random, ksz_search, KszCertificate};
pub use error::{Error, Result};
pub use forms::{Monomial, NormCertificate, NormMethod, SparseMultilinearForm};
pub use lab::{
    fit_exponent, khinchin_ratio, ksz_exponent_bound, lower_bound_from_slices, verify_contraction,
    verify_hilbert_prop, verify_mixed, verify_multik, verify_multiple_kahane, verify_prop,
    verify_theorem1, BoundReport, ConstantsTable, FitResult, Lab, CONSTANTS,
};
pub use search::{
    estimate_a1, exponent_sweep, maximize_ratio, SearchConfig, SearchResult, Strategy,
};
pub use tensor::{max_abs, CoefficientTensor, MixedNormSpec, TensorRef, VectorTensor};
