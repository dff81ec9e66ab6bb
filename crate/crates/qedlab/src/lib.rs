//! Numerical laboratory for a few-level emitter coupled to the quantized
//! photon field (simplified Pauli-Fierz model, dipole coupling).
//!
//! The crate builds, for a finite-level matter model with momentum matrix
//! elements and a smooth infrared/ultraviolet cutoff:
//!
//! * the photon-matter form factor `E(k)` ([`matter`]),
//! * the dissipative generator on block-diagonal observables, with
//!   per-level decay matrices (Fermi) and level shifts (Bethe) plus
//!   downward jump kernels ([`generator`]),
//! * the Markov semigroup `G(t) = exp(-t L)` with a dual computational
//!   path through the block triangular recursion ([`semigroup`]),
//! * finite-time and limiting versions of the slow-dynamics generator,
//!   the non-Markovian transition probability, and Rabi-cycle amplitudes
//!   ([`approx`]),
//! * a brute-force truncated-Fock propagator used as ground truth
//!   ([`fock`]).
//!
//! Quadrature primitives (sphere surface rules, radial rules with smooth
//! cutoff, radial principal values, finite-time oscillatory integrals)
//! live in [`quad`]; they are deterministic and reproducible for a fixed
//! configuration.

pub mod approx;
pub mod fock;
pub mod generator;
pub mod linalg;
pub mod matter;
pub mod quad;
pub mod semigroup;

pub use approx::{
    block_to_dense, compress_to_blocks, l_infinity, l_omega_finite_t, non_markov_probability,
    rabi_amplitude, rabi_signal, t_operator, ApproxError, OmegaGenerator, RabiSignal,
};
pub use fock::{
    build_system, marginal_probability_exact, oracle_manifest, propagate, propagate_basis,
    s_mat_exact, BasisTrajectories, FockError, Mode, ModeGrid, ModeGridConfig, OracleManifest,
    TruncatedFockSystem,
};
pub use generator::{
    apply_generator, assemble_generator, bethe_matrix, check_hypotheses, gamma_matrix,
    generator_report, BlockOperator, DissipativeGenerator, GeneratorError, GeneratorReport,
    HypothesesReport, JumpKernel,
};
pub use matter::{
    build_model, default_model, form_factor, form_factor_general, load_model, save_model,
    transverse_project, two_level_model, CutoffProfile, FormFactorSample, Level, MatterModel,
    ModelError, PhaseTable,
};
pub use quad::{
    finite_time_oscillatory, principal_value_radial, radial_integral, sphere_integral,
    QuadConfig, QuadError, RadialRule, SphereRule,
};
pub use semigroup::{DecayFit, MarkovAudit, SemigroupEngine, SemigroupError};
