//! # mec
//!
//! Minimum entropy coupling: given `m` discrete marginals on `n` states each,
//! find a joint distribution respecting all of them whose Shannon entropy is
//! as small as possible. The exact problem is NP-hard already for two
//! variables; this crate provides
//!
//! | Module | What it does |
//! |--------|--------------|
//! | [`dist`] | marginals, residual vectors, sparse couplings, entropy in bits |
//! | [`greedy`] | the plain greedy solver and its two-phase variant |
//! | [`certify`] | builds the `Gu = a` system from a greedy trace and certifies a KKT point |
//! | [`bounds`] | additive approximation bounds, outer-product identities, a tight test family |
//! | [`oracle`] | exact two-marginal optimum by transportation-polytope vertex enumeration |
//! | [`causality`] | entropic causal direction test between two discrete variables |
//! | [`cli`] | the `mec` command line front end and its file formats |
//!
//! ```rust
//! use mec::{greedy_coupling, Marginal};
//!
//! let p = Marginal::new(vec![0.6, 0.4]).unwrap();
//! let q = Marginal::new(vec![0.5, 0.5]).unwrap();
//! let (coupling, trace) = greedy_coupling(&[p, q]).unwrap();
//! assert_eq!(coupling.len(), 3);
//! assert_eq!(trace.steps.len(), 3);
//! assert!((coupling.entropy() - 1.360964047443681).abs() < 1e-12);
//! ```
//!
//! States are 0-based in the library API. The command line and its JSON
//! formats use 1-based state indices.

pub mod bounds;
pub mod causality;
pub mod certify;
pub mod cli;
pub mod dist;
mod error;
pub mod greedy;
pub mod oracle;

pub use bounds::{
    bound_report, outer_product_coupling, outer_product_entropy_identity, special_family,
    BoundReport, OuterProductTensor, SpecialFamily,
};
pub use causality::{
    conditionals_from_joint, exogenous_entropy_estimate, infer_direction, Axis, DirectionReport,
    JointObservation, Verdict,
};
pub use certify::{
    build_system, certify_local_optimum, check_last_one_property, Certificate, CertificateSystem,
};
pub use dist::{
    extended_entropy, marginalize, sort_decreasing, total_variation_sorted, Marginal,
    ResidualVector, SparseCoupling,
};
pub use error::{Error, Result};
pub use greedy::{greedy_coupling, greedy_coupling_two_phase, GreedyTrace, Solver, TraceStep};
pub use oracle::{entropy_lower_bound, enumerate_vertices, exact_min_entropy_2var, VertexSet};

/// Numerical tolerances shared by every module.
pub mod tol {
    /// Sum-to-one and equal-total checks.
    pub const EPS_SUM: f64 = 1e-9;
    /// Reproduction of input marginals by a coupling.
    pub const EPS_MARG: f64 = 1e-9;
    /// Residual masses at or below this are exactly zero.
    pub const EPS_ZERO: f64 = 1e-12;
    /// Certificate residual (relative to `max(1, |a|)`) and mass reconstruction.
    pub const EPS_CERT: f64 = 1e-8;
}
