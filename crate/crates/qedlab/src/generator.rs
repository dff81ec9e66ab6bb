//! The dissipative generator on block-diagonal observables.
//!
//! For each level λ the resonance operator T_λ = ½ γ_λ + i B_λ collects
//! the total emission rate (Fermi part, a sphere integral over every
//! resonant shell |k| = λ - ρ below λ) and the level shift (Bethe part,
//! radial principal values). Downward jump kernels
//!
//! ```text
//! K_{λμ}(Y) = 2π ∫_{|k| = λ-μ} A(k)† Y A(k) dσ(k),   A(k) = Π(μ) E(k)|_{E(λ)}
//! ```
//!
//! complete the generator
//!
//! ```text
//! (L X)_λ = T_λ X_λ + X_λ T_λ† - Σ_{μ<λ} K_{λμ}(X_μ).
//! ```
//!
//! Jump kernels keep their quadrature samples; the stored Fermi matrices
//! are contractions of exactly those samples, which makes L(I) cancel to
//! roundoff instead of to quadrature error.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, c, dagger};
use crate::matter::{form_factor, transverse_project, MatterModel, ModelError};
use crate::quad::{
    principal_value_radial, radial_integral, sphere_integral_matrix, QuadConfig, QuadError,
    RadialRule, SphereRule,
};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("quadrature failure while assembling the generator: {0}")]
    QuadratureFailure(#[from] QuadError),
    #[error("form factor evaluation failed: {0}")]
    FormFactor(#[from] ModelError),
    #[error("block operator shaped {got:?} does not match level dimensions {expected:?}")]
    ShapeMismatch {
        got: Vec<usize>,
        expected: Vec<usize>,
    },
}

// ---------------------------------------------------------------------------
// Block operators
// ---------------------------------------------------------------------------

/// An element of the observable algebra: one complex square matrix per
/// level subspace. Off-level blocks are structurally absent.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    pub blocks: Vec<Array2<C64>>,
}

impl BlockOperator {
    pub fn zeros(dims: &[usize]) -> Self {
        BlockOperator {
            blocks: dims.iter().map(|&d| Array2::zeros((d, d))).collect(),
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        BlockOperator {
            blocks: dims.iter().map(|&d| linalg::eye(d)).collect(),
        }
    }

    /// Rank-one projector π onto basis state `sub` of `level`.
    pub fn basis_projector(dims: &[usize], level: usize, sub: usize) -> Self {
        let mut x = Self::zeros(dims);
        x.blocks[level][[sub, sub]] = c(1.0);
        x
    }

    /// Projector onto a whole level subspace.
    pub fn level_projector(dims: &[usize], level: usize) -> Self {
        let mut x = Self::zeros(dims);
        x.blocks[level] = linalg::eye(dims[level]);
        x
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        BlockOperator {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        BlockOperator {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        BlockOperator {
            blocks: self.blocks.iter().map(|b| b.mapv(|z| z * s)).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        BlockOperator {
            blocks: self.blocks.iter().map(dagger).collect(),
        }
    }

    /// Operator norm: block-diagonal, so the max over blocks.
    pub fn operator_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(linalg::spectral_norm)
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| linalg::frobenius_norm(b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest eigenvalue across blocks (Hermitian input).
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .filter(|b| b.nrows() > 0)
            .map(linalg::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| linalg::frobenius_norm(&(b - &dagger(b))))
            .fold(0.0, f64::max)
    }

    /// <X u, u> for the basis state (level, sub).
    pub fn diagonal_entry(&self, level: usize, sub: usize) -> C64 {
        self.blocks[level][[sub, sub]]
    }

    /// Fixed vectorization: levels ascending, column-major inside blocks.
    pub fn vectorize(&self) -> Array1<C64> {
        let len: usize = self.blocks.iter().map(|b| b.len()).sum();
        let mut v = Array1::zeros(len);
        let mut at = 0;
        for b in &self.blocks {
            let (n, _) = b.dim();
            for col in 0..n {
                for row in 0..n {
                    v[at] = b[[row, col]];
                    at += 1;
                }
            }
        }
        v
    }

    pub fn from_vector(dims: &[usize], v: &Array1<C64>) -> Self {
        let mut x = Self::zeros(dims);
        let mut at = 0;
        for b in &mut x.blocks {
            let (n, _) = b.dim();
            for col in 0..n {
                for row in 0..n {
                    b[[row, col]] = v[at];
                    at += 1;
                }
            }
        }
        debug_assert_eq!(at, v.len());
        x
    }

    pub fn vector_len(dims: &[usize]) -> usize {
        dims.iter().map(|d| d * d).sum()
    }

    pub fn random_hermitian<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        let mut x = Self::zeros(dims);
        for b in &mut x.blocks {
            let n = b.nrows();
            for i in 0..n {
                b[[i, i]] = c(rng.gen_range(-1.0..1.0));
                for j in (i + 1)..n {
                    let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    b[[i, j]] = z;
                    b[[j, i]] = z.conj();
                }
            }
        }
        x
    }

    pub fn random_psd<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        let mut x = Self::zeros(dims);
        for b in &mut x.blocks {
            let n = b.nrows();
            let mut g: Array2<C64> = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    g[[i, j]] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            *b = dagger(&g).dot(&g);
        }
        x
    }

    pub fn random_general<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        let mut x = Self::zeros(dims);
        for b in &mut x.blocks {
            let n = b.nrows();
            for i in 0..n {
                for j in 0..n {
                    b[[i, j]] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
        }
        x
    }
}

// ---------------------------------------------------------------------------
// Jump kernels
// ---------------------------------------------------------------------------

/// Sphere-quadrature samples of Π(μ) E(k)|_{E(λ)} on the shell
/// |k| = λ - μ, flattened over (node, Cartesian component).
#[derive(Debug, Clone)]
pub struct JumpKernel {
    pub upper: usize,
    pub lower: usize,
    /// weights carry the shell radius² and the sphere weight
    weights: Vec<f64>,
    samples: Vec<Array2<C64>>,
}

impl JumpKernel {
    /// K(Y) = 2π Σ_i w_i A_i† Y A_i, mapping E(μ)-matrices to E(λ)-matrices.
    pub fn apply(&self, y: &Array2<C64>) -> Array2<C64> {
        let dim_upper = self.samples.first().map(|a| a.ncols()).unwrap_or(0);
        let mut out: Array2<C64> = Array2::zeros((dim_upper, dim_upper));
        for (w, a) in self.weights.iter().zip(&self.samples) {
            let term = dagger(a).dot(y).dot(a);
            out = out + term.mapv(|z| z * (2.0 * std::f64::consts::PI * w));
        }
        out
    }

    /// K applied to the identity on E(μ): the Fermi contribution of this
    /// channel, built from exactly the stored samples.
    pub fn apply_identity(&self) -> Array2<C64> {
        let dim_lower = self.samples.first().map(|a| a.nrows()).unwrap_or(0);
        self.apply(&linalg::eye(dim_lower))
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Per-level resonance matrices T_λ plus downward jump kernels.
#[derive(Debug, Clone)]
pub struct DissipativeGenerator {
    pub level_dims: Vec<usize>,
    pub level_energies: Vec<f64>,
    pub t_matrices: Vec<Array2<C64>>,
    pub gammas: Vec<Array2<C64>>,
    pub bethes: Vec<Array2<C64>>,
    jumps: Vec<JumpKernel>,
    pub gamma_margin: f64,
}

impl DissipativeGenerator {
    pub fn jump(&self, upper: usize, lower: usize) -> Option<&JumpKernel> {
        self.jumps
            .iter()
            .find(|k| k.upper == upper && k.lower == lower)
    }

    pub fn jumps(&self) -> &[JumpKernel] {
        &self.jumps
    }

    /// max_λ ‖T_λ‖, the scale against which L(I) is measured.
    pub fn t_norm(&self) -> f64 {
        self.t_matrices
            .iter()
            .map(linalg::spectral_norm)
            .fold(0.0, f64::max)
    }

    pub fn check_shape(&self, x: &BlockOperator) -> Result<(), GeneratorError> {
        let got = x.dims();
        if got != self.level_dims {
            return Err(GeneratorError::ShapeMismatch {
                got,
                expected: self.level_dims.clone(),
            });
        }
        Ok(())
    }
}

/// Angular Gram matrix on E(λ) through the intermediate level ρ:
/// G[b,a] = Σ_s ∫ <π_{ω⊥} d_{λρ}[a,s], π_{ω⊥} d_{λρ}[b,s]> dσ(ω).
/// For the dipole form factor the k-dependence of E separates into
/// φ(r)²/r times this direction-only object.
fn angular_gram(
    model: &MatterModel,
    upper: usize,
    inter: usize,
    sphere: &SphereRule,
) -> Result<Array2<C64>, GeneratorError> {
    let du = model.dim(upper);
    let ds = model.dim(inter);
    let Some(d) = model.coupling(upper, inter) else {
        return Ok(Array2::zeros((du, du)));
    };
    let gram = sphere_integral_matrix(
        |w| {
            let mut g: Array2<C64> = Array2::zeros((du, du));
            for s in 0..ds {
                let mut proj: Vec<[C64; 3]> = Vec::with_capacity(du);
                for a in 0..du {
                    proj.push(transverse_project(&[w[0], w[1], w[2]], &d[[a, s]]).unwrap());
                }
                for a in 0..du {
                    for b in 0..du {
                        let dot: C64 = (0..3).map(|cc| proj[a][cc] * proj[b][cc].conj()).sum();
                        g[[b, a]] += dot;
                    }
                }
            }
            g
        },
        1.0,
        sphere,
        (du, du),
    )?;
    Ok(gram)
}

/// Fermi matrix γ_λ = 2π Σ_{ρ<λ} ∫_{|k|=λ-ρ} ‖Π(ρ)E(k)·‖² dσ(k),
/// Hermitian and positive semidefinite, zero on the ground level.
pub fn gamma_matrix(
    model: &MatterModel,
    level: usize,
    config: &QuadConfig,
) -> Result<Array2<C64>, GeneratorError> {
    let sphere = SphereRule::product(config.sphere_degree);
    let dim = model.dim(level);
    let mut gamma: Array2<C64> = Array2::zeros((dim, dim));
    for rho in 0..level {
        let radius = model.energy(level) - model.energy(rho);
        if radius <= 0.0 {
            continue;
        }
        let phi = model.cutoff.evaluate(radius);
        let gram = angular_gram(model, level, rho, &sphere)?;
        // E carries φ(r)/√r per factor; shell measure carries r²
        let scalar = 2.0 * std::f64::consts::PI * radius * radius * phi * phi / radius;
        gamma = gamma + gram.mapv(|z| z * scalar);
    }
    Ok(gamma)
}

/// Bethe (level-shift) matrix: the principal-value companion of γ_λ,
/// summed over every other level. Poles below λ need the principal
/// value; levels above λ contribute ordinary integrals.
pub fn bethe_matrix(
    model: &MatterModel,
    level: usize,
    config: &QuadConfig,
) -> Result<Array2<C64>, GeneratorError> {
    let sphere = SphereRule::product(config.sphere_degree);
    let r_max = model.cutoff.decay_radius(1e-16);
    let rule = RadialRule::new(config.radial_nodes, r_max, model.cutoff.scale);
    let dim = model.dim(level);
    let mut bethe: Array2<C64> = Array2::zeros((dim, dim));
    for rho in 0..model.n_levels() {
        if rho == level || model.coupling(level, rho).is_none() {
            continue;
        }
        let gram = angular_gram(model, level, rho, &sphere)?;
        let pole = model.energy(level) - model.energy(rho);
        let profile = |r: f64| {
            let phi = model.cutoff.evaluate(r);
            C64::new(r * phi * phi, 0.0)
        };
        let radial = if pole > 0.0 {
            principal_value_radial(profile, pole, &rule, config.pv_window_frac, config.tol)?
        } else {
            radial_integral(|r| profile(r) / C64::new(r - pole, 0.0), &rule, config.tol)?
        };
        bethe = bethe + gram.mapv(|z| z * radial);
    }
    Ok(bethe)
}

fn jump_kernel(
    model: &MatterModel,
    upper: usize,
    lower: usize,
    sphere: &SphereRule,
) -> Result<Option<JumpKernel>, GeneratorError> {
    let radius = model.energy(upper) - model.energy(lower);
    if radius <= 0.0 || model.coupling(upper, lower).is_none() {
        return Ok(None);
    }
    let du = model.dim(upper);
    let dl = model.dim(lower);
    let mut weights = Vec::with_capacity(3 * sphere.len());
    let mut samples = Vec::with_capacity(3 * sphere.len());
    for (node, w) in sphere.nodes.iter().zip(&sphere.weights) {
        let k = [node[0] * radius, node[1] * radius, node[2] * radius];
        let samp = form_factor(model, &k)?;
        let block = samp
            .block(upper, lower)
            .expect("coupling present implies form-factor block");
        for comp in 0..3 {
            // A[s, a] = <E_c u_a^{(upper)}, u_s^{(lower)}>
            let mut a_mat: Array2<C64> = Array2::zeros((dl, du));
            for a in 0..du {
                for s in 0..dl {
                    a_mat[[s, a]] = block[[a, s]][comp];
                }
            }
            weights.push(w * radius * radius);
            samples.push(a_mat);
        }
    }
    Ok(Some(JumpKernel {
        upper,
        lower,
        weights,
        samples,
    }))
}

/// Assemble T_λ = ½ γ_λ + i B_λ for every level together with the
/// downward jump kernels; γ_λ is contracted from the stored kernel
/// samples so that L(I) cancels exactly.
pub fn assemble_generator(
    model: &MatterModel,
    config: &QuadConfig,
) -> Result<DissipativeGenerator, GeneratorError> {
    let sphere = SphereRule::product(config.sphere_degree);
    let n = model.n_levels();
    let mut jumps = Vec::new();
    for upper in 0..n {
        for lower in 0..upper {
            if let Some(kernel) = jump_kernel(model, upper, lower, &sphere)? {
                jumps.push(kernel);
            }
        }
    }
    let mut gammas = Vec::with_capacity(n);
    let mut bethes = Vec::with_capacity(n);
    let mut t_matrices = Vec::with_capacity(n);
    for level in 0..n {
        let dim = model.dim(level);
        let mut gamma: Array2<C64> = Array2::zeros((dim, dim));
        for kernel in jumps.iter().filter(|k| k.upper == level) {
            gamma = gamma + kernel.apply_identity();
        }
        let bethe = bethe_matrix(model, level, config)?;
        let t = gamma.mapv(|z| z * 0.5) + bethe.mapv(|z| z * C64::new(0.0, 1.0));
        gammas.push(gamma);
        bethes.push(bethe);
        t_matrices.push(t);
    }
    let gamma_margin = if n > 1 {
        (1..n)
            .map(|level| linalg::min_eigenvalue(&gammas[level]))
            .fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    Ok(DissipativeGenerator {
        level_dims: (0..n).map(|l| model.dim(l)).collect(),
        level_energies: (0..n).map(|l| model.energy(l)).collect(),
        t_matrices,
        gammas,
        bethes,
        jumps,
        gamma_margin,
    })
}

/// (L X)_λ = T_λ X_λ + X_λ T_λ† - Σ_{μ<λ} K_{λμ}(X_μ).
pub fn apply_generator(
    gen: &DissipativeGenerator,
    x: &BlockOperator,
) -> Result<BlockOperator, GeneratorError> {
    gen.check_shape(x)?;
    let mut out = BlockOperator::zeros(&gen.level_dims);
    for (level, xb) in x.blocks.iter().enumerate() {
        let t = &gen.t_matrices[level];
        out.blocks[level] = t.dot(xb) + xb.dot(&dagger(t));
    }
    for kernel in &gen.jumps {
        let contribution = kernel.apply(&x.blocks[kernel.lower]);
        out.blocks[kernel.upper] = &out.blocks[kernel.upper] - &contribution;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Hypothesis checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct HypothesesReport {
    /// strict block triangularity: Π_j L(X Π_m) = 0 for j < m
    pub h1_structural: bool,
    pub h1_max_leak: f64,
    /// nonpositivity of Π_j L(X Π_m) for PSD X, j > m
    pub h2_pass: bool,
    pub h2_worst_eigenvalue: f64,
    /// existence of the diagonal representation T_λ
    pub h3_structural: bool,
    pub h3_decomposition_error: f64,
    /// ‖L(I)‖ relative to ‖T‖
    pub h4_pass: bool,
    pub h4_identity_residual: f64,
    pub fgr_gamma: f64,
    pub fgr_holds: bool,
}

/// Run the semigroup hypothesis audit: (H1) strict triangularity, (H2)
/// complete-positivity of the jump terms on random PSD inputs, (H3) the
/// T-decomposition of the diagonal, (H4) L(I) = 0, and the Fermi
/// golden-rule margin.
pub fn check_hypotheses(gen: &DissipativeGenerator, seed: u64) -> HypothesesReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dims = gen.level_dims.clone();
    let n = dims.len();

    // H1: feed block-supported X through the generator, look below the block
    let mut h1_max_leak = 0.0f64;
    for m in 0..n {
        let mut x = BlockOperator::zeros(&dims);
        let mut filler = BlockOperator::random_hermitian(&dims, &mut rng);
        std::mem::swap(&mut x.blocks[m], &mut filler.blocks[m]);
        let lx = apply_generator(gen, &x).expect("shape");
        for (j, b) in lx.blocks.iter().enumerate() {
            if j < m {
                h1_max_leak = h1_max_leak.max(linalg::frobenius_norm(b));
            }
        }
    }
    let h1_structural = h1_max_leak == 0.0;

    // H2: -Π_j L(Y Π_m) = K_{jm}(Y) must stay PSD for PSD Y
    let mut h2_worst = f64::INFINITY;
    for kernel in &gen.jumps {
        for _ in 0..50 {
            let y = BlockOperator::random_psd(&dims, &mut rng);
            let yb = &y.blocks[kernel.lower];
            let image = kernel.apply(yb);
            if image.nrows() == 0 {
                continue;
            }
            let scale = linalg::spectral_norm(yb).max(1e-300);
            h2_worst = h2_worst.min(linalg::min_eigenvalue(&image) / scale);
        }
    }
    if !h2_worst.is_finite() {
        h2_worst = 0.0;
    }
    let h2_pass = h2_worst >= -1e-10;

    // H3: the diagonal action equals T_λ X + X T_λ† by construction;
    // re-derive it numerically from L on level-supported identities
    let mut h3_err = 0.0f64;
    for level in 0..n {
        let x = BlockOperator::level_projector(&dims, level);
        let lx = apply_generator(gen, &x).expect("shape");
        let t = &gen.t_matrices[level];
        let expect = t + &dagger(t);
        h3_err = h3_err.max(linalg::frobenius_norm(&(&lx.blocks[level] - &expect)));
    }
    let h3_structural = h3_err < 1e-12 * (1.0 + gen.t_norm());

    // H4
    let identity = BlockOperator::identity(&dims);
    let li = apply_generator(gen, &identity).expect("shape");
    let h4_identity_residual = li.operator_norm();
    let h4_pass = h4_identity_residual <= 1e-8 * gen.t_norm().max(1e-300);

    let fgr_gamma = gen.gamma_margin;
    HypothesesReport {
        h1_structural,
        h1_max_leak,
        h2_pass,
        h2_worst_eigenvalue: h2_worst,
        h3_structural,
        h3_decomposition_error: h3_err,
        h4_pass,
        h4_identity_residual,
        fgr_gamma,
        fgr_holds: fgr_gamma > 0.0,
    }
}

/// Serializable summary of an assembled generator.
#[derive(Debug, Serialize)]
pub struct GeneratorReport {
    pub levels: Vec<usize>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<Vec<[f64; 2]>>>,
    pub gamma: Vec<Vec<Vec<[f64; 2]>>>,
    pub bethe: Vec<Vec<Vec<[f64; 2]>>>,
    pub fgr_gamma: f64,
    pub hypotheses: HypothesesReport,
}

fn matrix_to_json(m: &Array2<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[[i, j]].re, m[[i, j]].im]).collect())
        .collect()
}

pub fn generator_report(gen: &DissipativeGenerator, seed: u64) -> GeneratorReport {
    GeneratorReport {
        levels: gen.level_dims.clone(),
        t: gen.t_matrices.iter().map(matrix_to_json).collect(),
        gamma: gen.gammas.iter().map(matrix_to_json).collect(),
        bethe: gen.bethes.iter().map(matrix_to_json).collect(),
        fgr_gamma: gen.gamma_margin,
        hypotheses: check_hypotheses(gen, seed),
    }
}
