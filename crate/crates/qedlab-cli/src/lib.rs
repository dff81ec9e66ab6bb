//! Batch CLI: validate models, assemble generators, run semigroup /
//! non-Markov / Rabi / oracle computations and emit comparison tables.
//!
//! Exit codes: 0 success, 1 I/O, 2 validation, 3 numerical failure,
//! 4 dimension cap.

pub mod commands;

pub use commands::run;
