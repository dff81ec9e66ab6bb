//! Finite-level emitter and the photon-matter form factor E(k).
//!
//! The matter Hamiltonian is represented by its restriction to the
//! low-energy subspace: an ordered list of levels (energy, degeneracy)
//! and, for each ordered level pair (j, m), the momentum matrix elements
//! d_{jm}[a,b] = <D u_a^{(j)}, u_b^{(m)}> as complex 3-vectors. Together
//! with the infrared/ultraviolet cutoff φ this pins the dipole form
//! factor
//!
//! ```text
//! E_{jm}(k)[a,b] = φ(|k|) |k|^{-1/2} π_{k⊥}( d_{jm}[a,b] )
//! ```
//!
//! where π_{k⊥} projects transverse to k. A momentum-dependent coupling
//! table supports the non-dipole variant in which the constant d_{jm} is
//! replaced by a tabulated g_{jm}(k).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3c = [C64; 3];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("level energies must be strictly increasing")]
    UnsortedEnergies,
    #[error("ground level must be simple (dimension 1), got dimension {0}")]
    DegenerateGround(usize),
    #[error("total matter dimension must be at least 2")]
    TooSmall,
    #[error("level energies must be finite")]
    NonFiniteEnergy,
    #[error("coupling block ({from},{to}) has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        from: usize,
        to: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("coupling pair ({from},{to}) violates Hermiticity, max deviation {max_deviation:.3e}")]
    NonHermitianCouplings {
        from: usize,
        to: usize,
        max_deviation: f64,
    },
    #[error("coupling block references level {0} outside the model")]
    UnknownLevel(usize),
    #[error("diagonal coupling block ({0},{0}) is not representable")]
    DiagonalCoupling(usize),
    #[error("cutoff parameters must be positive (order >= 1, scale > 0, amplitude > 0)")]
    BadCutoff,
    #[error("momentum k = 0 is outside the form-factor domain")]
    ZeroMomentum,
    #[error("momentum with |k| = {radius} outside tabulated range [{lo}, {hi}]")]
    TableDomain { radius: f64, lo: f64, hi: f64 },
    #[error("phase table violates Hermitian symmetry under (j,m,k) -> (m,j,-k): pair ({from},{to}), max deviation {max_deviation:.3e}")]
    TableNotHermitian {
        from: usize,
        to: usize,
        max_deviation: f64,
    },
    #[error("phase table grid is invalid: {0}")]
    BadTable(String),
    #[error("model file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file parse: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Cutoff
// ---------------------------------------------------------------------------

/// Smooth cutoff φ(r) = amplitude · (r/Λ)^p · exp(-(r/Λ)²).
///
/// Vanishes at the origin to order `vanishing_order` = p and decays
/// faster than any polynomial; both properties are required by every
/// quantitative statement downstream.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CutoffProfile {
    pub vanishing_order: u32,
    pub scale: f64,
    pub amplitude: f64,
}

impl CutoffProfile {
    pub fn new(vanishing_order: u32, scale: f64, amplitude: f64) -> Result<Self, ModelError> {
        if vanishing_order < 1
            || scale <= 0.0
            || scale.is_nan()
            || amplitude <= 0.0
            || amplitude.is_nan()
        {
            return Err(ModelError::BadCutoff);
        }
        Ok(CutoffProfile {
            vanishing_order,
            scale,
            amplitude,
        })
    }

    pub fn evaluate(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let x = r / self.scale;
        self.amplitude * x.powi(self.vanishing_order as i32) * (-x * x).exp()
    }

    /// Smallest radius beyond the cutoff peak where φ(r)² < eps.
    pub fn decay_radius(&self, eps: f64) -> f64 {
        let peak = self.scale * (self.vanishing_order as f64 / 2.0).sqrt().max(0.5);
        let mut r = peak;
        while self.evaluate(r).powi(2) >= eps {
            r += 0.25 * self.scale;
        }
        r
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Level {
    pub energy: f64,
    pub dim: usize,
}

/// Immutable finite-level emitter. Couplings are stored for every
/// ordered pair (j, m), j ≠ m, with the Hermitian pairing
/// d_{mj}[b,a] = conj(d_{jm}[a,b]) enforced at construction.
#[derive(Debug, Clone)]
pub struct MatterModel {
    pub levels: Vec<Level>,
    couplings: BTreeMap<(usize, usize), Array2<Vec3c>>,
    pub cutoff: CutoffProfile,
    offsets: Vec<usize>,
    total: usize,
}

impl MatterModel {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self, level: usize) -> usize {
        self.levels[level].dim
    }

    pub fn energy(&self, level: usize) -> f64 {
        self.levels[level].energy
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    /// Offset of a level block in the flattened matter basis.
    pub fn offset(&self, level: usize) -> usize {
        self.offsets[level]
    }

    /// (level, sublevel) of a flattened basis index.
    pub fn state_of_global(&self, index: usize) -> (usize, usize) {
        assert!(index < self.total, "basis index {index} out of range");
        let level = self
            .offsets
            .iter()
            .rposition(|&o| o <= index)
            .expect("offsets nonempty");
        (level, index - self.offsets[level])
    }

    pub fn global_index(&self, level: usize, sub: usize) -> usize {
        assert!(sub < self.dim(level));
        self.offsets[level] + sub
    }

    /// Momentum matrix elements for the ordered pair (j, m), j ≠ m.
    pub fn coupling(&self, from: usize, to: usize) -> Option<&Array2<Vec3c>> {
        self.couplings.get(&(from, to))
    }

    /// Ordered level pairs (j, m), j ≠ m, with a stored coupling block.
    pub fn coupled_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.couplings.keys().copied()
    }

    /// Largest |d| entry over all coupling blocks.
    pub fn max_coupling_norm(&self) -> f64 {
        self.couplings
            .values()
            .flat_map(|b| b.iter())
            .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// The three Cartesian component matrices of E(k) on the full matter
    /// space; entry [(m,b),(j,a)] = <E_c u_a^{(j)}, u_b^{(m)}>.
    pub fn form_factor_matrices(&self, k: &[f64; 3]) -> Result<[Array2<C64>; 3], ModelError> {
        let sample = form_factor(self, k)?;
        Ok(sample.component_matrices(self))
    }
}

// ---------------------------------------------------------------------------
// Form factor samples
// ---------------------------------------------------------------------------

/// E(k) evaluated at one momentum: one complex-3-vector matrix per
/// ordered level pair.
#[derive(Debug, Clone)]
pub struct FormFactorSample {
    pub momentum: [f64; 3],
    pub blocks: BTreeMap<(usize, usize), Array2<Vec3c>>,
}

impl FormFactorSample {
    pub fn block(&self, from: usize, to: usize) -> Option<&Array2<Vec3c>> {
        self.blocks.get(&(from, to))
    }

    /// Assemble the Cartesian component matrices on the full space.
    pub fn component_matrices(&self, model: &MatterModel) -> [Array2<C64>; 3] {
        let n = model.total_dim();
        let mut out = [
            Array2::zeros((n, n)),
            Array2::zeros((n, n)),
            Array2::zeros((n, n)),
        ];
        for (&(j, m), block) in &self.blocks {
            let oj = model.offset(j);
            let om = model.offset(m);
            for a in 0..model.dim(j) {
                for b in 0..model.dim(m) {
                    let v = block[[a, b]];
                    for (c, mat) in out.iter_mut().enumerate() {
                        mat[[om + b, oj + a]] = v[c];
                    }
                }
            }
        }
        out
    }

    pub fn max_entry_norm(&self) -> f64 {
        self.blocks
            .values()
            .flat_map(|b| b.iter())
            .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

fn norm3(k: &[f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

/// π_{k⊥} v = v - (k·v / |k|²) k.
pub fn transverse_project(k: &[f64; 3], v: &Vec3c) -> Result<Vec3c, ModelError> {
    let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if k2 == 0.0 {
        return Err(ModelError::ZeroMomentum);
    }
    let dot = v[0] * k[0] + v[1] * k[1] + v[2] * k[2];
    let f = dot / k2;
    Ok([v[0] - f * k[0], v[1] - f * k[1], v[2] - f * k[2]])
}

/// Dipole form factor: E_{jm}(k)[a,b] = φ(|k|)|k|^{-1/2} π_{k⊥}(d_{jm}[a,b]).
pub fn form_factor(model: &MatterModel, k: &[f64; 3]) -> Result<FormFactorSample, ModelError> {
    let r = norm3(k);
    if r == 0.0 {
        return Err(ModelError::ZeroMomentum);
    }
    let scalar = model.cutoff.evaluate(r) / r.sqrt();
    let mut blocks = BTreeMap::new();
    for (&(j, m), d) in &model.couplings {
        let mut block = Array2::from_elem(d.raw_dim(), [C64::new(0.0, 0.0); 3]);
        for (idx, v) in d.indexed_iter() {
            let proj = transverse_project(k, v)?;
            block[idx] = [
                proj[0] * scalar,
                proj[1] * scalar,
                proj[2] * scalar,
            ];
        }
        blocks.insert((j, m), block);
    }
    Ok(FormFactorSample {
        momentum: *k,
        blocks,
    })
}

/// Form factor with tabulated momentum-dependent couplings in place of
/// the constant d_{jm} (the non-dipole variant, e.g. carrying the
/// e^{-ik·x} phase integrated against bound-state wavefunctions).
pub fn form_factor_general(
    model: &MatterModel,
    k: &[f64; 3],
    table: &PhaseTable,
) -> Result<FormFactorSample, ModelError> {
    let r = norm3(k);
    if r == 0.0 {
        return Err(ModelError::ZeroMomentum);
    }
    let scalar = model.cutoff.evaluate(r) / r.sqrt();
    let mut blocks = BTreeMap::new();
    for &(j, m) in table.pairs().iter() {
        let g = table.interpolate(j, m, k)?;
        let mut block = Array2::from_elem(g.raw_dim(), [C64::new(0.0, 0.0); 3]);
        for (idx, v) in g.indexed_iter() {
            let proj = transverse_project(k, v)?;
            block[idx] = [proj[0] * scalar, proj[1] * scalar, proj[2] * scalar];
        }
        blocks.insert((j, m), block);
    }
    Ok(FormFactorSample {
        momentum: *k,
        blocks,
    })
}

/// Validates energies, ground simplicity, shapes and Hermiticity, then
/// freezes the model. Pairs given in one direction only are completed by
/// Hermitian transposition.
pub fn build_model(
    levels: Vec<Level>,
    couplings: Vec<((usize, usize), Array2<Vec3c>)>,
    cutoff: CutoffProfile,
) -> Result<MatterModel, ModelError> {
    if levels.iter().any(|l| !l.energy.is_finite()) {
        return Err(ModelError::NonFiniteEnergy);
    }
    if levels.windows(2).any(|w| w[0].energy >= w[1].energy) {
        return Err(ModelError::UnsortedEnergies);
    }
    if levels.is_empty() {
        return Err(ModelError::TooSmall);
    }
    if levels[0].dim != 1 {
        return Err(ModelError::DegenerateGround(levels[0].dim));
    }
    let total: usize = levels.iter().map(|l| l.dim).sum();
    if total < 2 {
        return Err(ModelError::TooSmall);
    }
    CutoffProfile::new(cutoff.vanishing_order, cutoff.scale, cutoff.amplitude)?;

    let mut map: BTreeMap<(usize, usize), Array2<Vec3c>> = BTreeMap::new();
    for ((j, m), block) in couplings {
        if j >= levels.len() || m >= levels.len() {
            return Err(ModelError::UnknownLevel(j.max(m)));
        }
        if j == m {
            return Err(ModelError::DiagonalCoupling(j));
        }
        let expected = (levels[j].dim, levels[m].dim);
        if block.dim() != expected {
            return Err(ModelError::ShapeMismatch {
                from: j,
                to: m,
                got: block.dim(),
                expected,
            });
        }
        map.insert((j, m), block);
    }
    // complete and check Hermiticity
    let keys: Vec<(usize, usize)> = map.keys().copied().collect();
    for (j, m) in keys {
        let adjoint = {
            let block = &map[&(j, m)];
            let mut adj = Array2::from_elem(
                (levels[m].dim, levels[j].dim),
                [C64::new(0.0, 0.0); 3],
            );
            for ((a, b), v) in block.indexed_iter() {
                adj[[b, a]] = [v[0].conj(), v[1].conj(), v[2].conj()];
            }
            adj
        };
        match map.get(&(m, j)) {
            None => {
                map.insert((m, j), adjoint);
            }
            Some(existing) => {
                let max_dev = existing
                    .iter()
                    .zip(adjoint.iter())
                    .map(|(x, y)| {
                        (0..3)
                            .map(|c| (x[c] - y[c]).norm())
                            .fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max);
                if max_dev > 1e-12 {
                    return Err(ModelError::NonHermitianCouplings {
                        from: j,
                        to: m,
                        max_deviation: max_dev,
                    });
                }
            }
        }
    }
    let mut offsets = Vec::with_capacity(levels.len());
    let mut acc = 0;
    for l in &levels {
        offsets.push(acc);
        acc += l.dim;
    }
    Ok(MatterModel {
        levels,
        couplings: map,
        cutoff,
        offsets,
        total,
    })
}

/// The demonstration model used across examples and acceptance runs:
/// three simple levels at {0, 1, 1.5} with dipoles along different axes.
pub fn default_model() -> MatterModel {
    let levels = vec![
        Level {
            energy: 0.0,
            dim: 1,
        },
        Level {
            energy: 1.0,
            dim: 1,
        },
        Level {
            energy: 1.5,
            dim: 1,
        },
    ];
    let z = C64::new(0.0, 0.0);
    let block = |v: [f64; 3]| {
        Array2::from_elem((1, 1), [C64::new(v[0], 0.0), C64::new(v[1], 0.0), C64::new(v[2], 0.0)])
    };
    let _ = z;
    let couplings = vec![
        ((0usize, 1usize), block([0.0, 0.0, 0.8])),
        ((0, 2), block([0.5, 0.0, 0.0])),
        ((1, 2), block([0.0, 0.3, 0.0])),
    ];
    build_model(
        levels,
        couplings,
        CutoffProfile {
            vanishing_order: 1,
            scale: 2.0,
            amplitude: 1.0,
        },
    )
    .expect("default model is valid")
}

/// Two-level reduction of the demonstration model (ground + first
/// excited, d_{01} = (0,0,0.8)).
pub fn two_level_model() -> MatterModel {
    let levels = vec![
        Level {
            energy: 0.0,
            dim: 1,
        },
        Level {
            energy: 1.0,
            dim: 1,
        },
    ];
    let block = Array2::from_elem(
        (1, 1),
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.8, 0.0)],
    );
    build_model(
        levels,
        vec![((0, 1), block)],
        CutoffProfile {
            vanishing_order: 1,
            scale: 2.0,
            amplitude: 1.0,
        },
    )
    .expect("two-level model is valid")
}

// ---------------------------------------------------------------------------
// Phase tables (non-dipole couplings)
// ---------------------------------------------------------------------------

/// Momentum-dependent coupling table on a radial × angular grid with
/// trilinear interpolation in (|k|, cos θ, φ). Radii outside the
/// tabulated range are an error, never an extrapolation.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    radial: Vec<f64>,
    cos_theta: Vec<f64>,
    n_phi: usize,
    // per ordered pair, row-major [ir][it][ip] grid of coupling blocks
    blocks: BTreeMap<(usize, usize), Vec<Array2<Vec3c>>>,
    pairs: Vec<(usize, usize)>,
}

impl PhaseTable {
    /// Tabulate `g(j, m, k)` on the product grid and verify the Hermitian
    /// pairing g_{mj}(-k) = g_{jm}(k)† wherever -k is itself a grid
    /// point (symmetric cos θ grid and even φ count make that exact).
    pub fn tabulate<F>(
        model: &MatterModel,
        radial: Vec<f64>,
        cos_theta: Vec<f64>,
        n_phi: usize,
        g: F,
    ) -> Result<Self, ModelError>
    where
        F: Fn(usize, usize, &[f64; 3]) -> Array2<Vec3c>,
    {
        if radial.len() < 2 || radial.windows(2).any(|w| w[0] >= w[1]) || radial[0] < 0.0 {
            return Err(ModelError::BadTable("radial grid must be increasing".into()));
        }
        if cos_theta.len() < 2
            || cos_theta.windows(2).any(|w| w[0] >= w[1])
            || cos_theta[0] < -1.0
            || *cos_theta.last().unwrap() > 1.0
        {
            return Err(ModelError::BadTable(
                "cos θ grid must be increasing within [-1, 1]".into(),
            ));
        }
        if n_phi < 3 {
            return Err(ModelError::BadTable("need at least 3 azimuth nodes".into()));
        }
        let pairs: Vec<(usize, usize)> = model.coupled_pairs().collect();
        let mut blocks = BTreeMap::new();
        for &(j, m) in &pairs {
            let mut grid = Vec::with_capacity(radial.len() * cos_theta.len() * n_phi);
            for &r in &radial {
                for &ct in &cos_theta {
                    let st = (1.0 - ct * ct).max(0.0).sqrt();
                    for ip in 0..n_phi {
                        let phi = 2.0 * PI * ip as f64 / n_phi as f64;
                        let k = [r * st * phi.cos(), r * st * phi.sin(), r * ct];
                        let b = g(j, m, &k);
                        let expected = (model.dim(j), model.dim(m));
                        if b.dim() != expected {
                            return Err(ModelError::ShapeMismatch {
                                from: j,
                                to: m,
                                got: b.dim(),
                                expected,
                            });
                        }
                        grid.push(b);
                    }
                }
            }
            blocks.insert((j, m), grid);
        }
        let table = PhaseTable {
            radial,
            cos_theta,
            n_phi,
            blocks,
            pairs,
        };
        table.check_hermitian()?;
        Ok(table)
    }

    fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn grid_index(&self, ir: usize, it: usize, ip: usize) -> usize {
        (ir * self.cos_theta.len() + it) * self.n_phi + ip
    }

    /// Check g_{mj}(-k) = g_{jm}(k)† where -k lies on the grid.
    fn check_hermitian(&self) -> Result<(), ModelError> {
        let nt = self.cos_theta.len();
        if !self.n_phi.is_multiple_of(2) {
            return Ok(()); // -k not representable, condition is the caller's duty
        }
        // -k maps (ct, φ) to (-ct, φ+π); require the ct grid be symmetric
        let symmetric = (0..nt).all(|i| (self.cos_theta[i] + self.cos_theta[nt - 1 - i]).abs() < 1e-12);
        if !symmetric {
            return Ok(());
        }
        for &(j, m) in &self.pairs {
            let fwd = &self.blocks[&(j, m)];
            let Some(rev) = self.blocks.get(&(m, j)) else {
                continue;
            };
            let mut max_dev = 0.0f64;
            for ir in 0..self.radial.len() {
                for it in 0..nt {
                    for ip in 0..self.n_phi {
                        let a = &fwd[self.grid_index(ir, it, ip)];
                        let b = &rev[self.grid_index(ir, nt - 1 - it, (ip + self.n_phi / 2) % self.n_phi)];
                        for ((x, y), v) in a.indexed_iter() {
                            let w = b[[y, x]];
                            for c in 0..3 {
                                max_dev = max_dev.max((v[c] - w[c].conj()).norm());
                            }
                        }
                    }
                }
            }
            if max_dev > 1e-10 {
                return Err(ModelError::TableNotHermitian {
                    from: j,
                    to: m,
                    max_deviation: max_dev,
                });
            }
        }
        Ok(())
    }

    fn interpolate(&self, j: usize, m: usize, k: &[f64; 3]) -> Result<Array2<Vec3c>, ModelError> {
        let r = norm3(k);
        let lo = self.radial[0];
        let hi = *self.radial.last().unwrap();
        if r < lo || r > hi {
            return Err(ModelError::TableDomain { radius: r, lo, hi });
        }
        let ct = (k[2] / r).clamp(-1.0, 1.0);
        let phi = k[1].atan2(k[0]).rem_euclid(2.0 * PI);

        let (ir, fr) = bracket(&self.radial, r);
        let (it, ft) = bracket(&self.cos_theta, ct.clamp(self.cos_theta[0], *self.cos_theta.last().unwrap()));
        let dphi = 2.0 * PI / self.n_phi as f64;
        let ip = (phi / dphi).floor() as usize % self.n_phi;
        let fp = (phi - ip as f64 * dphi) / dphi;
        let ip1 = (ip + 1) % self.n_phi;

        let grid = self
            .blocks
            .get(&(j, m))
            .expect("interpolate: pair not tabulated");
        let shape = grid[0].raw_dim();
        let mut out = Array2::from_elem(shape, [C64::new(0.0, 0.0); 3]);
        let corners = [
            (ir, it, ip, (1.0 - fr) * (1.0 - ft) * (1.0 - fp)),
            (ir, it, ip1, (1.0 - fr) * (1.0 - ft) * fp),
            (ir, it + 1, ip, (1.0 - fr) * ft * (1.0 - fp)),
            (ir, it + 1, ip1, (1.0 - fr) * ft * fp),
            (ir + 1, it, ip, fr * (1.0 - ft) * (1.0 - fp)),
            (ir + 1, it, ip1, fr * (1.0 - ft) * fp),
            (ir + 1, it + 1, ip, fr * ft * (1.0 - fp)),
            (ir + 1, it + 1, ip1, fr * ft * fp),
        ];
        for (cr, ctn, cp, weight) in corners {
            if weight == 0.0 {
                continue;
            }
            let b = &grid[self.grid_index(cr, ctn, cp)];
            for (idx, v) in b.indexed_iter() {
                for c in 0..3 {
                    out[idx][c] += v[c] * weight;
                }
            }
        }
        Ok(out)
    }
}

/// Index i with grid[i] <= x <= grid[i+1] and the interpolation fraction.
fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    let mut i = match grid.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    };
    if i >= n - 1 {
        i = n - 2;
    }
    let f = (x - grid[i]) / (grid[i + 1] - grid[i]);
    (i, f.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CouplingFile {
    from: usize,
    to: usize,
    /// dim_from × dim_to entries, each a 3-vector of [re, im]
    matrix: Vec<Vec<[[f64; 2]; 3]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LevelFile {
    energy: f64,
    dim: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CutoffFile {
    order: u32,
    scale: f64,
    amplitude: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    levels: Vec<LevelFile>,
    couplings: Vec<CouplingFile>,
    cutoff: CutoffFile,
}

/// Load a model from the single-document JSON format. Only pairs with
/// j < m need to be stored; j > m blocks, when present, must agree with
/// the Hermitian completion of their mirror.
pub fn load_model(path: &Path) -> Result<MatterModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    model_from_file(file)
}

fn model_from_file(file: ModelFile) -> Result<MatterModel, ModelError> {
    let levels: Vec<Level> = file
        .levels
        .iter()
        .map(|l| Level {
            energy: l.energy,
            dim: l.dim as usize,
        })
        .collect();
    let mut couplings = Vec::new();
    for cb in file.couplings {
        let rows = cb.matrix.len();
        let cols = cb.matrix.first().map(|r| r.len()).unwrap_or(0);
        if rows == 0 || cols == 0 || cb.matrix.iter().any(|r| r.len() != cols) {
            return Err(ModelError::ShapeMismatch {
                from: cb.from,
                to: cb.to,
                got: (rows, cols),
                expected: (rows.max(1), cols.max(1)),
            });
        }
        let mut block = Array2::from_elem((rows, cols), [C64::new(0.0, 0.0); 3]);
        for (a, row) in cb.matrix.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                block[[a, b]] = [
                    C64::new(v[0][0], v[0][1]),
                    C64::new(v[1][0], v[1][1]),
                    C64::new(v[2][0], v[2][1]),
                ];
            }
        }
        couplings.push(((cb.from, cb.to), block));
    }
    build_model(
        levels,
        couplings,
        CutoffProfile {
            vanishing_order: file.cutoff.order,
            scale: file.cutoff.scale,
            amplitude: file.cutoff.amplitude,
        },
    )
}

/// Serialize a model to the JSON document format (j < m pairs only).
pub fn save_model(model: &MatterModel, path: &Path) -> Result<(), ModelError> {
    let mut couplings = Vec::new();
    for (j, m) in model.coupled_pairs() {
        if j < m {
            let block = model.coupling(j, m).unwrap();
            let matrix: Vec<Vec<[[f64; 2]; 3]>> = (0..model.dim(j))
                .map(|a| {
                    (0..model.dim(m))
                        .map(|b| {
                            let v = block[[a, b]];
                            [
                                [v[0].re, v[0].im],
                                [v[1].re, v[1].im],
                                [v[2].re, v[2].im],
                            ]
                        })
                        .collect()
                })
                .collect();
            couplings.push(CouplingFile {
                from: j,
                to: m,
                matrix,
            });
        }
    }
    let file = ModelFile {
        levels: model
            .levels
            .iter()
            .map(|l| LevelFile {
                energy: l.energy,
                dim: l.dim as u32,
            })
            .collect(),
        couplings,
        cutoff: CutoffFile {
            order: model.cutoff.vanishing_order,
            scale: model.cutoff.scale,
            amplitude: model.cutoff.amplitude,
        },
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}
