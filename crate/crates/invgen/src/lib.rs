//! Invariant generation for small imperative integer programs.
//!
//! The engine alternates dynamic inference with counterexample search: run
//! the program on concrete inputs, fit candidate invariants to the observed
//! states at each marked location (polynomial equalities via exact nullspace
//! solving, octagonal bounds via binary search), then ask a box-bounded
//! verifier to refute them. Counterexamples feed back as new traces until
//! the candidates stabilize; on small boxes the verifier is exhaustive and
//! survivors are proved on the box, not just plausible.

pub mod cli;
pub mod complexity;
pub mod eqinfer;
pub mod exec;
pub mod ineqinfer;
pub mod lang;
pub mod linalg;
pub mod poly;
pub mod simplify;
pub mod verify;
