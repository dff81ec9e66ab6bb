//! Finite-time and limiting slow-dynamics operators, the non-Markovian
//! transition probability, and Rabi-cycle amplitudes.
//!
//! The workhorse is the four-term momentum/time integral
//!
//! ```text
//! L^ω(T) X = ∫_{R³×(0,T)} e^{iωs} ( e^{is|k|} E^free(k,-s)† [E(k), X]
//!                                  - e^{-is|k|} [E(k)†, X] E^free(k,-s) ) dk ds.
//! ```
//!
//! With the dipole form factor the integrand separates: the direction
//! dependence sits in constant angular matrices (one sphere integral per
//! intermediate level) while the radius carries the profile r φ(r)² times
//! an oscillatory phase whose time integral is analytic. The T → ∞ limit
//! replaces each phase factor by its Sokhotski-Plemelj split: a sphere
//! contribution at the resonant radius plus a radial principal value.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::generator::{BlockOperator, GeneratorError};
use crate::linalg::{c, dagger};
use crate::matter::{transverse_project, MatterModel, ModelError};
use crate::quad::{
    finite_time_oscillatory, principal_value_radial, radial_integral, QuadConfig, QuadError,
    RadialRule, SphereRule,
};

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("quadrature failure: {0}")]
    QuadratureFailure(#[from] QuadError),
    #[error("model evaluation failed: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("levels must differ (ω = 0 is the Markov regime, use the semigroup)")]
    EqualLevels,
    #[error("initial and final states must differ")]
    EqualStates,
    #[error("coupling constant must be positive, got {0}")]
    NonPositiveCoupling(f64),
}

/// L_∞^ω applied to one fixed X, kept together with its frequency.
///
/// At ω = 0 the block compression of `matrix` is the dissipative
/// generator's action on X (shared-quadrature tolerance).
#[derive(Debug, Clone)]
pub struct OmegaGenerator {
    pub omega: f64,
    pub matrix: Array2<C64>,
}

impl OmegaGenerator {
    pub fn assemble(
        model: &MatterModel,
        omega: f64,
        x: &Array2<C64>,
        config: &QuadConfig,
    ) -> Result<Self, ApproxError> {
        Ok(OmegaGenerator {
            omega,
            matrix: l_infinity(model, omega, x, config)?,
        })
    }
}

/// Angular (direction-only) component matrices of the form factor:
/// entry [(m,b),(j,a)] = π_{ω⊥}(d_{jm}[a,b])_c, no radial scalar.
fn angular_matrices(model: &MatterModel, direction: &[f64; 3]) -> [Array2<C64>; 3] {
    let n = model.total_dim();
    let mut out = [
        Array2::zeros((n, n)),
        Array2::zeros((n, n)),
        Array2::zeros((n, n)),
    ];
    for (j, m) in model.coupled_pairs() {
        let d = model.coupling(j, m).unwrap();
        let oj = model.offset(j);
        let om = model.offset(m);
        for a in 0..model.dim(j) {
            for b in 0..model.dim(m) {
                let proj = transverse_project(direction, &d[[a, b]]).unwrap();
                for (cc, mat) in out.iter_mut().enumerate() {
                    mat[[om + b, oj + a]] = proj[cc];
                }
            }
        }
    }
    out
}

fn level_projector_dense(model: &MatterModel, level: usize) -> Array2<C64> {
    let n = model.total_dim();
    let mut p = Array2::zeros((n, n));
    let off = model.offset(level);
    for i in 0..model.dim(level) {
        p[[off + i, off + i]] = c(1.0);
    }
    p
}

/// Sphere-averaged four-term angular matrices per intermediate level:
/// A1_ρ = ∫ Σ_c E_c† Π(ρ) (E_c X - X E_c) dσ,
/// A2_ρ = ∫ Σ_c (E_c† X - X E_c†) Π(ρ) E_c dσ.
fn sphere_averaged_terms(
    model: &MatterModel,
    x: &Array2<C64>,
    sphere: &SphereRule,
) -> (Vec<Array2<C64>>, Vec<Array2<C64>>) {
    let n = model.total_dim();
    let n_levels = model.n_levels();
    let projectors: Vec<Array2<C64>> = (0..n_levels)
        .map(|l| level_projector_dense(model, l))
        .collect();
    let mut a1: Vec<Array2<C64>> = vec![Array2::zeros((n, n)); n_levels];
    let mut a2: Vec<Array2<C64>> = vec![Array2::zeros((n, n)); n_levels];
    for (node, w) in sphere.nodes.iter().zip(&sphere.weights) {
        let e = angular_matrices(model, node);
        for comp in &e {
            let ed = dagger(comp);
            let commut = comp.dot(x) - x.dot(comp);
            let commut_dag = ed.dot(x) - x.dot(&ed);
            for rho in 0..n_levels {
                let p = &projectors[rho];
                a1[rho] = &a1[rho] + &ed.dot(p).dot(&commut).mapv(|z| z * *w);
                a2[rho] = &a2[rho] + &commut_dag.dot(p).dot(comp).mapv(|z| z * *w);
            }
        }
    }
    (a1, a2)
}

fn radial_profile(model: &MatterModel) -> impl Fn(f64) -> f64 + '_ {
    // both E factors carry φ(r)/√r; the k-measure carries r²
    move |r: f64| {
        let phi = model.cutoff.evaluate(r);
        r * phi * phi
    }
}

fn default_radial_rule(model: &MatterModel, config: &QuadConfig) -> RadialRule {
    RadialRule::new(
        config.radial_nodes,
        model.cutoff.decay_radius(1e-16),
        model.cutoff.scale,
    )
}

/// Scale rows (by the level of the row index) and columns of the two
/// term families and accumulate the L-matrix.
fn assemble_from_scalars(
    model: &MatterModel,
    a1: &[Array2<C64>],
    a2: &[Array2<C64>],
    f1: &Array2<C64>,
    f2: &Array2<C64>,
) -> Array2<C64> {
    let n = model.total_dim();
    let n_levels = model.n_levels();
    let mut out: Array2<C64> = Array2::zeros((n, n));
    let level_of: Vec<usize> = (0..n).map(|i| model.state_of_global(i).0).collect();
    for rho in 0..n_levels {
        for row in 0..n {
            for col in 0..n {
                let term1 = f1[[rho, level_of[row]]] * a1[rho][[row, col]];
                let term2 = a2[rho][[row, col]] * f2[[rho, level_of[col]]];
                out[[row, col]] += term1 - term2;
            }
        }
    }
    out
}

/// L^ω(T) X as a dense matter-space matrix: exact time integral,
/// radial quadrature, sphere integrals exact for dipole couplings.
pub fn l_omega_finite_t(
    model: &MatterModel,
    omega: f64,
    x: &Array2<C64>,
    t_final: f64,
    config: &QuadConfig,
) -> Result<Array2<C64>, ApproxError> {
    assert!(t_final > 0.0, "l_omega_finite_t requires T > 0");
    let sphere = SphereRule::product(config.sphere_degree);
    let rule = default_radial_rule(model, config);
    let (a1, a2) = sphere_averaged_terms(model, x, &sphere);
    let prof = radial_profile(model);
    let n_levels = model.n_levels();
    // f1[ρ, β] = ∫ prof(r) sfac(ω + r + ρ - β, T) dr   (rows by β)
    // f2[ρ, α] = ∫ prof(r) sfac(ω - r - ρ + α, T) dr   (columns by α)
    let mut f1: Array2<C64> = Array2::zeros((n_levels, n_levels));
    let mut f2: Array2<C64> = Array2::zeros((n_levels, n_levels));
    for rho in 0..n_levels {
        let e_rho = model.energy(rho);
        for lev in 0..n_levels {
            let e_lev = model.energy(lev);
            f1[[rho, lev]] = finite_time_oscillatory(
                |r| C64::new(prof(r), 0.0),
                omega + e_rho - e_lev,
                t_final,
                &rule,
                config.tol,
            )?;
            // the term-2 phase runs backwards: sfac(ω - r - ρ + α, T) is
            // the conjugate of sfac(r - (ω + α - ρ), T) for the real profile
            f2[[rho, lev]] = finite_time_oscillatory(
                |r| C64::new(prof(r), 0.0),
                e_rho - omega - e_lev,
                t_final,
                &rule,
                config.tol,
            )?
            .conj();
        }
    }
    Ok(assemble_from_scalars(model, &a1, &a2, &f1, &f2))
}

/// Closed-form T → ∞ limit of [`l_omega_finite_t`]: Sokhotski-Plemelj
/// split into resonant sphere terms and radial principal values. Never
/// obtained by extrapolating the finite-T operator.
pub fn l_infinity(
    model: &MatterModel,
    omega: f64,
    x: &Array2<C64>,
    config: &QuadConfig,
) -> Result<Array2<C64>, ApproxError> {
    let sphere = SphereRule::product(config.sphere_degree);
    let rule = default_radial_rule(model, config);
    let (a1, a2) = sphere_averaged_terms(model, x, &sphere);
    let prof = radial_profile(model);
    let n_levels = model.n_levels();
    let mut f1: Array2<C64> = Array2::zeros((n_levels, n_levels));
    let mut f2: Array2<C64> = Array2::zeros((n_levels, n_levels));
    for rho in 0..n_levels {
        let e_rho = model.energy(rho);
        for lev in 0..n_levels {
            let e_lev = model.energy(lev);
            // term 1: phase ω + r + ρ - β vanishes at r1 = β - ρ - ω
            let r1 = e_lev - e_rho - omega;
            f1[[rho, lev]] = plemelj_scalar(&prof, r1, &rule, config)?;
            // term 2: phase ω - r - ρ + α vanishes at r2 = α + ω - ρ,
            // PV sign flips with the phase orientation
            let r2 = e_lev + omega - e_rho;
            let v = plemelj_scalar(&prof, r2, &rule, config)?;
            f2[[rho, lev]] = C64::new(v.re, -v.im);
        }
    }
    Ok(assemble_from_scalars(model, &a1, &a2, &f1, &f2))
}

/// π prof(pole) [pole inside domain] + i PV ∫ prof(r)/(r - pole) dr.
fn plemelj_scalar(
    prof: &impl Fn(f64) -> f64,
    pole: f64,
    rule: &RadialRule,
    config: &QuadConfig,
) -> Result<C64, ApproxError> {
    let f = |r: f64| C64::new(prof(r), 0.0);
    // resonance radii below this threshold are treated as absent
    if pole > 1e-12 && pole < rule.domain_cut {
        let delta = std::f64::consts::PI * prof(pole);
        let pv = principal_value_radial(f, pole, rule, config.pv_window_frac, config.tol)?;
        Ok(C64::new(delta, 0.0) + C64::new(0.0, 1.0) * pv)
    } else {
        let pv = radial_integral(|r| f(r) / C64::new(r - pole, 0.0), rule, config.tol)?;
        Ok(C64::new(0.0, 1.0) * pv)
    }
}

/// Standalone resonance operator T_λ = ½ γ_λ + i B_λ.
pub fn t_operator(
    model: &MatterModel,
    level: usize,
    config: &QuadConfig,
) -> Result<Array2<C64>, ApproxError> {
    let gamma = crate::generator::gamma_matrix(model, level, config)?;
    let bethe = crate::generator::bethe_matrix(model, level, config)?;
    Ok(gamma.mapv(|z| z * 0.5) + bethe.mapv(|z| z * C64::new(0.0, 1.0)))
}

/// Non-Markovian transition probability
/// P = 2 g² ∫ (1 - cos(t(|k| - Δ)))/(|k| - Δ)² |<E(k) u_j, u_m>|² dk,
/// Δ = λ_j - λ_m (resonant for downward transitions, bounded upward).
/// The sign makes P nonnegative, consistent with the Fermi rate and the
/// Fock oracle.
pub fn non_markov_probability(
    model: &MatterModel,
    from: (usize, usize),
    to: (usize, usize),
    t: f64,
    g: f64,
    config: &QuadConfig,
) -> Result<f64, ApproxError> {
    if from == to {
        return Err(ApproxError::EqualStates);
    }
    if g <= 0.0 {
        return Err(ApproxError::NonPositiveCoupling(g));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let (jl, js) = from;
    let (ml, ms) = to;
    let gap = model.energy(jl) - model.energy(ml);
    let Some(d) = model.coupling(jl, ml) else {
        return Ok(0.0);
    };
    let dvec = d[[js, ms]];
    let sphere = SphereRule::product(config.sphere_degree);
    // ∫ ‖π_{ω⊥} d‖² dσ(ω)
    let mut angular = 0.0;
    for (node, w) in sphere.nodes.iter().zip(&sphere.weights) {
        let proj = transverse_project(node, &dvec).unwrap();
        angular += w * proj.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let rule = default_radial_rule(model, config);
    let prof = radial_profile(model);
    // (1 - cos(tα))/α² = (t²/2) sinc²(tα/2), entire in α
    let kernel = |alpha: f64| {
        let xh = 0.5 * t * alpha;
        let s = if xh.abs() < 1e-8 {
            1.0 - xh * xh / 6.0
        } else {
            xh.sin() / xh
        };
        0.5 * t * t * s * s
    };
    let panels = ((0.8 * t * rule.domain_cut / (2.0 * std::f64::consts::PI)).ceil() as usize
        + config.radial_nodes / 16)
        .max(8);
    let eval = |m: usize| -> f64 {
        let mut acc = 0.0;
        let width = rule.domain_cut / m as f64;
        let (xs, ws) = crate::quad::gauss_legendre(16);
        for p in 0..m {
            let a = p as f64 * width;
            for (xi, wi) in xs.iter().zip(&ws) {
                let r = a + 0.5 * width * (xi + 1.0);
                let w = 0.5 * width * wi;
                acc += w * prof(r) * kernel(r - gap);
            }
        }
        acc
    };
    let fine = eval(2 * panels);
    let coarse = eval(panels);
    if (fine - coarse).abs() > config.tol * (1.0 + fine.abs()) {
        return Err(ApproxError::QuadratureFailure(
            QuadError::ConvergenceFailure {
                certificate: (fine - coarse).abs(),
                tolerance: config.tol * (1.0 + fine.abs()),
            },
        ));
    }
    Ok(2.0 * g * g * angular * fine)
}

/// Leading-order Rabi signal between the first basis vectors of two
/// distinct levels: A e^{iωt} + B with
/// A = (ig)²/(iω) <(L_∞^0 X) u, v>, B = -(ig)²/(iω) <(L_∞^ω X) u, v>.
#[derive(Debug, Clone)]
pub struct RabiSignal {
    pub omega: f64,
    pub oscillating: C64,
    pub offset: C64,
}

impl RabiSignal {
    pub fn eval(&self, t: f64) -> C64 {
        self.oscillating * C64::new(0.0, self.omega * t).exp() + self.offset
    }

    /// 2π/|ω|, the exact period of the leading term.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega.abs()
    }
}

/// Assemble the leading-order Rabi signal for X between levels λ and μ
/// (u the first basis vector of λ, v the first of μ), ω = μ - λ.
pub fn rabi_signal(
    model: &MatterModel,
    x: &BlockOperator,
    lambda: usize,
    mu: usize,
    g: f64,
    config: &QuadConfig,
) -> Result<RabiSignal, ApproxError> {
    if lambda == mu {
        return Err(ApproxError::EqualLevels);
    }
    if g <= 0.0 {
        return Err(ApproxError::NonPositiveCoupling(g));
    }
    let omega = model.energy(mu) - model.energy(lambda);
    let dense = block_to_dense(model, x);
    let l0 = l_infinity(model, 0.0, &dense, config)?;
    let lw = l_infinity(model, omega, &dense, config)?;
    let row = model.global_index(mu, 0);
    let col = model.global_index(lambda, 0);
    // (ig)²/(iω) = i g²/ω
    let pref = C64::new(0.0, g * g / omega);
    Ok(RabiSignal {
        omega,
        oscillating: pref * l0[[row, col]],
        offset: -pref * lw[[row, col]],
    })
}

/// The Rabi amplitude at a single time.
pub fn rabi_amplitude(
    model: &MatterModel,
    x: &BlockOperator,
    lambda: usize,
    mu: usize,
    t: f64,
    g: f64,
    config: &QuadConfig,
) -> Result<C64, ApproxError> {
    Ok(rabi_signal(model, x, lambda, mu, g, config)?.eval(t))
}

/// Embed a block operator as a dense matter-space matrix.
pub fn block_to_dense(model: &MatterModel, x: &BlockOperator) -> Array2<C64> {
    let n = model.total_dim();
    let mut out = Array2::zeros((n, n));
    for (level, block) in x.blocks.iter().enumerate() {
        let off = model.offset(level);
        for i in 0..block.nrows() {
            for j in 0..block.ncols() {
                out[[off + i, off + j]] = block[[i, j]];
            }
        }
    }
    out
}

/// Block compression P_K: keep the level-diagonal blocks of a dense
/// matter operator.
pub fn compress_to_blocks(model: &MatterModel, dense: &Array2<C64>) -> BlockOperator {
    let dims: Vec<usize> = (0..model.n_levels()).map(|l| model.dim(l)).collect();
    let mut x = BlockOperator::zeros(&dims);
    for (level, block) in x.blocks.iter_mut().enumerate() {
        let off = model.offset(level);
        for i in 0..block.nrows() {
            for j in 0..block.ncols() {
                block[[i, j]] = dense[[off + i, off + j]];
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{apply_generator, assemble_generator};
    use crate::linalg::{frobenius_norm, spectral_norm};
    use crate::matter::{default_model, two_level_model};
    use rand::SeedableRng;

    fn config() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn l_operators_annihilate_identity() {
        let m = default_model();
        let id = Array2::from_diag_elem(m.total_dim(), c(1.0));
        let lt = l_omega_finite_t(&m, 0.4, &id, 5.0, &config()).unwrap();
        assert!(frobenius_norm(&lt) < 1e-14);
        let li = l_infinity(&m, 0.4, &id, &config()).unwrap();
        assert!(frobenius_norm(&li) < 1e-14);
    }

    #[test]
    fn omega_zero_compression_matches_generator() {
        let m = default_model();
        let gen = assemble_generator(&m, &config()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let x = BlockOperator::random_general(&gen.level_dims, &mut rng);
            let dense = block_to_dense(&m, &x);
            let li = l_infinity(&m, 0.0, &dense, &config()).unwrap();
            let compressed = compress_to_blocks(&m, &li);
            let direct = apply_generator(&gen, &x).unwrap();
            let rel = compressed.sub(&direct).frobenius_norm()
                / direct.frobenius_norm().max(1e-300);
            assert!(rel < 1e-8, "relative deviation {rel}");
        }
    }

    #[test]
    fn l_infinity_two_level_excited_diagonal_is_gamma() {
        let m = two_level_model();
        let gen = assemble_generator(&m, &config()).unwrap();
        let gamma = gen.gammas[1][[0, 0]].re;
        let dims = gen.level_dims.clone();
        let p1 = BlockOperator::basis_projector(&dims, 1, 0);
        let li = l_infinity(&m, 0.0, &block_to_dense(&m, &p1), &config()).unwrap();
        let idx = m.global_index(1, 0);
        assert!(
            (li[[idx, idx]].re - gamma).abs() < 1e-8 * gamma,
            "{} vs {}",
            li[[idx, idx]].re,
            gamma
        );
        assert!(li[[idx, idx]].im.abs() < 1e-8 * gamma);
    }

    #[test]
    fn finite_t_converges_to_l_infinity() {
        // convergence with a tail no slower than the guaranteed K/T^{2p}
        let m = two_level_model();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let dims = vec![1usize, 1];
        let x = BlockOperator::random_hermitian(&dims, &mut rng);
        let dense = block_to_dense(&m, &x);
        let li = l_infinity(&m, 0.0, &dense, &config()).unwrap();
        let mut prev = f64::INFINITY;
        for t in [10.0, 40.0, 160.0] {
            let lt = l_omega_finite_t(&m, 0.0, &dense, t, &config()).unwrap();
            let err = spectral_norm(&(&lt - &li));
            assert!(err < prev, "tail must decrease: {err} vs {prev}");
            prev = err;
        }
        // K/T^{2p} bound with p = 1: err(160) ≤ err(10)·(10/160)² · margin
        let l10 = spectral_norm(
            &(&l_omega_finite_t(&m, 0.0, &dense, 10.0, &config()).unwrap() - &li),
        );
        assert!(prev <= l10 * (10.0f64 / 160.0).powi(2) * 2.0);
    }

    #[test]
    fn t_operator_ground_is_anti_hermitian() {
        let m = default_model();
        let t0 = t_operator(&m, 0, &config()).unwrap();
        let sum = &t0 + &dagger(&t0);
        assert!(frobenius_norm(&sum) < 1e-14);
    }

    #[test]
    fn t_operator_decomposition_identity() {
        let m = default_model();
        for level in 0..m.n_levels() {
            let t = t_operator(&m, level, &config()).unwrap();
            let gamma = crate::generator::gamma_matrix(&m, level, &config()).unwrap();
            let bethe = crate::generator::bethe_matrix(&m, level, &config()).unwrap();
            let herm = &t + &dagger(&t);
            assert!(frobenius_norm(&(&herm - &gamma)) < 1e-10);
            let anti = (&t - &dagger(&t)).mapv(|z| z * C64::new(0.0, -0.5));
            assert!(frobenius_norm(&(&anti - &bethe)) < 1e-10);
        }
    }

    /// iε-regularized resolvent oracle:
    /// T_λ ≈ i Σ_ρ Gram_ρ ∫ r φ(r)² / (r + ρ - λ + iε) dr,
    /// Richardson-extrapolated over ε ∈ {0.1, 0.05, 0.025}.
    fn t_operator_resolvent_oracle(model: &MatterModel, level: usize) -> Array2<C64> {
        let sphere = SphereRule::product(12);
        let r_max = model.cutoff.decay_radius(1e-18);
        let dim = model.dim(level);
        let eval = |eps: f64| -> Array2<C64> {
            let mut t: Array2<C64> = Array2::zeros((dim, dim));
            for rho in 0..model.n_levels() {
                if rho == level || model.coupling(level, rho).is_none() {
                    continue;
                }
                // angular Gram through ρ
                let mut gram: Array2<C64> = Array2::zeros((dim, dim));
                let d = model.coupling(level, rho).unwrap();
                for (node, w) in sphere.nodes.iter().zip(&sphere.weights) {
                    for s in 0..model.dim(rho) {
                        let proj: Vec<[C64; 3]> = (0..dim)
                            .map(|a| transverse_project(node, &d[[a, s]]).unwrap())
                            .collect();
                        for a in 0..dim {
                            for b in 0..dim {
                                let dot: C64 =
                                    (0..3).map(|cc| proj[a][cc] * proj[b][cc].conj()).sum();
                                gram[[b, a]] += dot * *w;
                            }
                        }
                    }
                }
                // radial resolvent integral with Lorentzian-resolving panels
                let pole = model.energy(level) - model.energy(rho);
                let mut edges = vec![0.0, r_max];
                if pole > 0.0 && pole < r_max {
                    for m in [-20.0, -8.0, -3.0, -1.0, 1.0, 3.0, 8.0, 20.0] {
                        let e = pole + m * eps;
                        if e > 0.0 && e < r_max {
                            edges.push(e);
                        }
                    }
                    edges.push(pole);
                }
                edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
                edges.dedup();
                let mut radial = C64::new(0.0, 0.0);
                let (xs, ws) = crate::quad::gauss_legendre(64);
                for pair in edges.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    for (xi, wi) in xs.iter().zip(&ws) {
                        let r = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                        let w = 0.5 * (b - a) * wi;
                        let phi = model.cutoff.evaluate(r);
                        radial +=
                            C64::new(w * r * phi * phi, 0.0) / C64::new(r - pole, eps);
                    }
                }
                t = t + gram.mapv(|z| z * radial * C64::new(0.0, 1.0));
            }
            t
        };
        let t1 = eval(0.1);
        let t2 = eval(0.05);
        let t3 = eval(0.025);
        // two Richardson stages for an O(ε) + O(ε²) error model
        let r1 = t2.mapv(|z| z * 2.0) - &t1;
        let r2 = t3.mapv(|z| z * 2.0) - &t2;
        (r2.mapv(|z| z * 4.0) - &r1).mapv(|z| z / 3.0)
    }

    #[test]
    fn t_operator_matches_resolvent_oracle() {
        let m = default_model();
        for level in 0..m.n_levels() {
            let t = t_operator(&m, level, &config()).unwrap();
            let oracle = t_operator_resolvent_oracle(&m, level);
            let dev = frobenius_norm(&(&t - &oracle));
            let scale = frobenius_norm(&t).max(1e-12);
            assert!(dev <= 0.01 * scale, "level {level}: {dev} vs scale {scale}");
        }
    }

    #[test]
    fn non_markov_zero_at_time_zero_and_nonnegative() {
        let m = two_level_model();
        assert_eq!(
            non_markov_probability(&m, (1, 0), (0, 0), 0.0, 0.01, &config()).unwrap(),
            0.0
        );
        for t in [0.5, 2.0, 5.0, 20.0, 80.0] {
            for g in [0.02, 0.01, 0.005] {
                let p = non_markov_probability(&m, (1, 0), (0, 0), t, g, &config()).unwrap();
                assert!(p >= 0.0, "negative probability at t={t}, g={g}");
            }
        }
    }

    #[test]
    fn non_markov_fgr_slope_matches_gamma() {
        let m = two_level_model();
        let gamma = crate::generator::gamma_matrix(&m, 1, &config()).unwrap()[[0, 0]].re;
        let g = 0.01;
        let gap = 1.0;
        let t1 = 200.0 / gap;
        let t2 = 400.0 / gap;
        let p1 = non_markov_probability(&m, (1, 0), (0, 0), t1, g, &config()).unwrap();
        let p2 = non_markov_probability(&m, (1, 0), (0, 0), t2, g, &config()).unwrap();
        let slope = (p2 - p1) / (t2 - t1);
        let expect = g * g * gamma;
        assert!(
            (slope - expect).abs() <= 0.01 * expect,
            "slope {slope} vs {expect}"
        );
    }

    #[test]
    fn non_markov_upward_transition_is_bounded() {
        let m = two_level_model();
        let g = 0.01;
        let mut sup: f64 = 0.0;
        for i in 1..=40 {
            let t = 10.0 * i as f64;
            let p = non_markov_probability(&m, (0, 0), (1, 0), t, g, &config()).unwrap();
            sup = sup.max(p);
        }
        // no resonant sphere: stays at the virtual-dressing scale
        assert!(sup < 10.0 * g * g, "sup {sup}");
    }

    #[test]
    fn rabi_identity_gives_zero_signal() {
        let m = default_model();
        let dims: Vec<usize> = (0..m.n_levels()).map(|l| m.dim(l)).collect();
        let x = BlockOperator::identity(&dims);
        let sig = rabi_signal(&m, &x, 0, 1, 0.01, &config()).unwrap();
        for t in [0.0, 1.0, 7.7] {
            assert!(sig.eval(t).norm() < 1e-14);
        }
    }

    #[test]
    fn rabi_periodicity_and_constant_modulus() {
        let m = default_model();
        let dims: Vec<usize> = (0..m.n_levels()).map(|l| m.dim(l)).collect();
        let x = BlockOperator::basis_projector(&dims, 1, 0);
        let sig = rabi_signal(&m, &x, 0, 1, 0.01, &config()).unwrap();
        let h = sig.period();
        let scale = sig.oscillating.norm().max(sig.offset.norm());
        assert!(scale > 0.0, "signal should not vanish for X = π₁");
        for t in [0.3, 2.0, 9.0] {
            let d = (sig.eval(t + h) - sig.eval(t)).norm();
            assert!(d <= 1e-12 * scale, "period defect {d}");
            // amplitude modulus is t-independent around the offset
            let a = (sig.eval(t) - sig.offset).norm();
            assert!((a - sig.oscillating.norm()).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn rabi_equal_levels_rejected() {
        let m = default_model();
        let dims: Vec<usize> = (0..m.n_levels()).map(|l| m.dim(l)).collect();
        let x = BlockOperator::identity(&dims);
        assert!(matches!(
            rabi_signal(&m, &x, 1, 1, 0.01, &config()),
            Err(ApproxError::EqualLevels)
        ));
    }
}
