//! Test-only support: brute-force reference implementations (oracles) and
//! finite-difference gradient checks.
//!
//! Everything here recomputes results from first principles — naive nested
//! loops in f64, direct formula evaluation, explicit index maps — and never
//! calls the production kernels it is used to verify. Production crates must
//! only depend on this from `dev-dependencies`.

pub mod gen;
pub mod gradcheck;
pub mod oracles;
