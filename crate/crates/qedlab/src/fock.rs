//! Brute-force ground truth: a truncated photon Fock space over
//! discretized momentum modes.
//!
//! The mode grid clusters radial nodes around every resonant shell
//! |k| = λ - μ (emission there dominates) and covers the rest of the
//! cutoff support with background nodes; each momentum node carries two
//! deterministic transverse polarizations. The Hamiltonian
//!
//! ```text
//! H(g) = H_ph ⊗ I + I ⊗ H_mat + g Σ_{iσ} √w_i (a_{iσ} ⊗ C_{iσ}† + a_{iσ}† ⊗ C_{iσ})
//! ```
//!
//! with C_{iσ} = ε^σ(k_i)·E(k_i) acts matrix-free on the occupation
//! basis (Σ n ≤ n_max, n_max ∈ {1,2}); propagation is a Krylov
//! (Lanczos) action of e^{-itH} with adaptive substeps, never a dense
//! exponential.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::c;
use crate::matter::{form_factor, MatterModel, ModelError};
use crate::quad::gauss_legendre;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("basis dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("invalid mode grid: {0}")]
    InvalidGrid(String),
    #[error("photon-number cap must be 1 or 2, got {0}")]
    BadPhotonCap(usize),
    #[error("model evaluation failed: {0}")]
    Model(#[from] ModelError),
    #[error("propagation tolerance exceeded: {0}")]
    PropagationToleranceExceeded(String),
}

// ---------------------------------------------------------------------------
// Mode grid
// ---------------------------------------------------------------------------

/// One discretized photon momentum with its quadrature weight and its
/// two transverse polarization vectors.
#[derive(Debug, Clone)]
pub struct Mode {
    pub k: [f64; 3],
    pub weight: f64,
    pub polarization: [[f64; 3]; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeGridConfig {
    /// radial nodes per resonant shell window
    pub shell_nodes: usize,
    /// half-width of each shell window in momentum units
    pub shell_halfwidth: f64,
    /// radial nodes spread over the off-resonant remainder
    pub background_nodes: usize,
    /// polar (Gauss-Legendre in cos θ) and azimuthal node counts
    pub n_theta: usize,
    pub n_phi: usize,
    /// radial truncation; default: where φ(r)² < 1e-13
    pub r_max: Option<f64>,
    /// refuse basis sizes beyond this cap
    pub dimension_cap: usize,
}

impl Default for ModeGridConfig {
    fn default() -> Self {
        ModeGridConfig {
            shell_nodes: 16,
            shell_halfwidth: 0.4,
            background_nodes: 8,
            n_theta: 2,
            n_phi: 3,
            r_max: None,
            dimension_cap: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeGrid {
    pub modes: Vec<Mode>,
}

/// ε¹ along ∂θ, ε² along ∂φ, right-handed with k̂; continuous away from
/// the poles and fixed to (±1,0,0), (0,1,0) on them.
fn polarization_pair(direction: &[f64; 3]) -> [[f64; 3]; 2] {
    let (x, y, z) = (direction[0], direction[1], direction[2]);
    let st = (x * x + y * y).sqrt();
    let (cphi, sphi) = if st < 1e-14 {
        (1.0, 0.0)
    } else {
        (x / st, y / st)
    };
    let ct = z;
    [
        [ct * cphi, ct * sphi, -st],
        [-sphi, cphi, 0.0],
    ]
}

impl ModeGrid {
    /// Radial Gauss-Legendre panels clustered on the resonant shells of
    /// the model × a small product sphere rule.
    pub fn build(model: &MatterModel, config: &ModeGridConfig) -> Result<Self, FockError> {
        if config.shell_nodes == 0 || config.n_theta == 0 || config.n_phi < 3 {
            return Err(FockError::InvalidGrid(
                "need at least one shell node, one polar node and three azimuth nodes".into(),
            ));
        }
        let r_max = config
            .r_max
            .unwrap_or_else(|| model.cutoff.decay_radius(1e-13));
        // resonant shells: every positive level gap
        let mut shells: Vec<f64> = Vec::new();
        for j in 0..model.n_levels() {
            for m in 0..j {
                let gap = model.energy(j) - model.energy(m);
                if gap > 0.0 && gap < r_max {
                    shells.push(gap);
                }
            }
        }
        shells.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // merge overlapping shell windows
        let mut windows: Vec<(f64, f64, usize)> = Vec::new();
        for &s in &shells {
            let lo = (s - config.shell_halfwidth).max(1e-3 * r_max);
            let hi = (s + config.shell_halfwidth).min(r_max);
            match windows.last_mut() {
                Some(last) if lo <= last.1 => {
                    last.1 = hi;
                    last.2 += config.shell_nodes;
                }
                _ => windows.push((lo, hi, config.shell_nodes)),
            }
        }
        // background segments fill the complement; their node budget is
        // split by the mass of r φ(r)² they carry, not by length
        let mass = |a: f64, b: f64| -> f64 {
            let (xs, ws) = gauss_legendre(32);
            xs.iter()
                .zip(&ws)
                .map(|(x, w)| {
                    let r = 0.5 * (a + b) + 0.5 * (b - a) * x;
                    0.5 * (b - a) * w * r * model.cutoff.evaluate(r).powi(2)
                })
                .sum()
        };
        let mut gaps: Vec<(f64, f64)> = Vec::new();
        let mut cursor = 0.0;
        for w in &windows {
            if w.0 > cursor + 1e-12 {
                gaps.push((cursor, w.0));
            }
            cursor = w.1;
        }
        if cursor < r_max - 1e-12 {
            gaps.push((cursor, r_max));
        }
        let gap_masses: Vec<f64> = gaps.iter().map(|(a, b)| mass(*a, *b)).collect();
        let total_mass: f64 = gap_masses.iter().sum::<f64>().max(1e-300);
        let mut segments: Vec<(f64, f64, usize)> = Vec::new();
        for (gap, gm) in gaps.iter().zip(&gap_masses) {
            let n = ((config.background_nodes as f64 * gm / total_mass).round() as usize).max(2);
            segments.push((gap.0, gap.1, n));
        }
        // shell windows are split into near-uniform two-node panels: the
        // node spacing sets the Poincaré recurrence horizon of the
        // discretized continuum, and plain Gauss-Legendre leaves the
        // window center too sparse
        for (lo, hi, n) in windows {
            let panels = n.div_ceil(2).max(1);
            let width = (hi - lo) / panels as f64;
            for p in 0..panels {
                segments.push((lo + p as f64 * width, lo + (p + 1) as f64 * width, 2));
            }
        }
        segments.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if segments.is_empty() {
            segments.push((0.0, r_max, config.shell_nodes + config.background_nodes));
        }
        // sphere rule: product Gauss-Legendre × uniform azimuth
        let (ct, wt) = gauss_legendre(config.n_theta);
        let dphi = 2.0 * std::f64::consts::PI / config.n_phi as f64;
        let mut modes = Vec::new();
        for (a, b, n) in segments {
            let (rs, ws) = gauss_legendre(n);
            for (xi, wi) in rs.iter().zip(&ws) {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                let wr = 0.5 * (b - a) * wi;
                for (cth, wth) in ct.iter().zip(&wt) {
                    let sth = (1.0 - cth * cth).max(0.0).sqrt();
                    for ip in 0..config.n_phi {
                        let phi = dphi * ip as f64;
                        let dir = [sth * phi.cos(), sth * phi.sin(), *cth];
                        modes.push(Mode {
                            k: [dir[0] * r, dir[1] * r, dir[2] * r],
                            weight: wr * r * r * wth * dphi,
                            polarization: polarization_pair(&dir),
                        });
                    }
                }
            }
        }
        let grid = ModeGrid { modes };
        grid.validate(model)?;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Orthonormality of polarizations and quality of the weights as a
    /// quadrature for ∫ φ(|k|)²/|k| dk.
    pub fn validate(&self, model: &MatterModel) -> Result<(), FockError> {
        if self.modes.is_empty() {
            return Err(FockError::InvalidGrid("no modes".into()));
        }
        for (i, mode) in self.modes.iter().enumerate() {
            if mode.weight <= 0.0 || mode.weight.is_nan() {
                return Err(FockError::InvalidGrid(format!(
                    "mode {i} has nonpositive weight"
                )));
            }
            let r = (mode.k[0] * mode.k[0] + mode.k[1] * mode.k[1] + mode.k[2] * mode.k[2]).sqrt();
            if r <= 0.0 {
                return Err(FockError::InvalidGrid(format!("mode {i} at k = 0")));
            }
            let dir = [mode.k[0] / r, mode.k[1] / r, mode.k[2] / r];
            for s in 0..2 {
                let e = mode.polarization[s];
                let n2: f64 = e.iter().map(|v| v * v).sum();
                let kdot: f64 = (0..3).map(|cc| e[cc] * dir[cc]).sum();
                if (n2 - 1.0).abs() > 1e-14 || kdot.abs() > 1e-14 {
                    return Err(FockError::InvalidGrid(format!(
                        "mode {i} polarization {s} not unit-transverse"
                    )));
                }
            }
            let cross: f64 = (0..3)
                .map(|cc| mode.polarization[0][cc] * mode.polarization[1][cc])
                .sum();
            if cross.abs() > 1e-14 {
                return Err(FockError::InvalidGrid(format!(
                    "mode {i} polarizations not orthogonal"
                )));
            }
        }
        // quadrature sanity on the infrared-regular reference integrand
        let discrete: f64 = self
            .modes
            .iter()
            .map(|m| {
                let r =
                    (m.k[0] * m.k[0] + m.k[1] * m.k[1] + m.k[2] * m.k[2]).sqrt();
                m.weight * model.cutoff.evaluate(r).powi(2) / r
            })
            .sum();
        let reference = reference_weight_integral(model);
        if (discrete - reference).abs() > 0.05 * reference {
            return Err(FockError::InvalidGrid(format!(
                "weights integrate φ²/|k| to {discrete:.6e}, reference {reference:.6e}"
            )));
        }
        Ok(())
    }
}

/// ∫_{R³} φ(|k|)²/|k| dk = 4π ∫ r φ(r)² dr by fine quadrature.
pub fn reference_weight_integral(model: &MatterModel) -> f64 {
    let r_max = model.cutoff.decay_radius(1e-18);
    let (xs, ws) = gauss_legendre(2000);
    let acc: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(x, w)| {
            let r = 0.5 * r_max * (x + 1.0);
            0.5 * r_max * w * r * model.cutoff.evaluate(r).powi(2)
        })
        .sum();
    4.0 * std::f64::consts::PI * acc
}

// ---------------------------------------------------------------------------
// Truncated Fock system
// ---------------------------------------------------------------------------

/// Sparse (matrix-free) H(g) on occupation states (n₁..n_M, matter)
/// with Σ n_i ≤ n_max.
#[derive(Debug)]
pub struct TruncatedFockSystem {
    pub grid: ModeGrid,
    pub n_max: usize,
    pub matter_dim: usize,
    pub g: f64,
    /// photon energy |k_q| per oscillator (grid mode × polarization)
    osc_energy: Vec<f64>,
    /// √w_q ε^σ·E(k_q), the matter coupling matrix per oscillator
    couplings: Vec<Array2<C64>>,
    matter_energies: Vec<f64>,
    dim: usize,
    n_osc: usize,
}

impl TruncatedFockSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_oscillators(&self) -> usize {
        self.n_osc
    }

    fn vac_index(&self, j: usize) -> usize {
        j
    }

    fn one_index(&self, q: usize, j: usize) -> usize {
        self.matter_dim * (1 + q) + j
    }

    fn pair_offset(&self, q: usize, r: usize) -> usize {
        debug_assert!(q <= r);
        q * self.n_osc - q * (q + 1) / 2 + q + (r - q)
    }

    fn two_index(&self, q: usize, r: usize, j: usize) -> usize {
        let base = self.matter_dim * (1 + self.n_osc);
        base + self.pair_offset(q, r) * self.matter_dim + j
    }

    /// y = H(g) x, matrix-free.
    pub fn apply(&self, x: &Array1<C64>, y: &mut Array1<C64>) {
        let n = self.matter_dim;
        let n_osc = self.n_osc;
        y.fill(C64::new(0.0, 0.0));
        // diagonal: photon + matter energies
        for j in 0..n {
            y[j] += C64::new(self.matter_energies[j], 0.0) * x[j];
        }
        for q in 0..n_osc {
            for j in 0..n {
                let idx = self.one_index(q, j);
                y[idx] += C64::new(self.osc_energy[q] + self.matter_energies[j], 0.0) * x[idx];
            }
        }
        if self.n_max >= 2 {
            for q in 0..n_osc {
                for r in q..n_osc {
                    let e = self.osc_energy[q] + self.osc_energy[r];
                    for j in 0..n {
                        let idx = self.two_index(q, r, j);
                        y[idx] += C64::new(e + self.matter_energies[j], 0.0) * x[idx];
                    }
                }
            }
        }
        if self.g == 0.0 {
            return;
        }
        let g = C64::new(self.g, 0.0);
        // vacuum <-> one photon
        for q in 0..n_osc {
            let b = &self.couplings[q];
            for i in 0..n {
                for j in 0..n {
                    let amp = g * b[[i, j]];
                    if amp.norm_sqr() == 0.0 {
                        continue;
                    }
                    let up = self.one_index(q, i);
                    y[up] += amp * x[self.vac_index(j)];
                    y[self.vac_index(j)] += amp.conj() * x[up];
                }
            }
        }
        // one <-> two photons
        if self.n_max >= 2 {
            let sqrt2 = std::f64::consts::SQRT_2;
            for q in 0..n_osc {
                for r in 0..n_osc {
                    let b = &self.couplings[r];
                    let boost = if r == q { sqrt2 } else { 1.0 };
                    let (lo, hi) = (q.min(r), q.max(r));
                    for i in 0..n {
                        for j in 0..n {
                            let amp = g * b[[i, j]] * boost;
                            if amp.norm_sqr() == 0.0 {
                                continue;
                            }
                            let up = self.two_index(lo, hi, i);
                            let down = self.one_index(q, j);
                            y[up] += amp * x[down];
                            y[down] += amp.conj() * x[up];
                        }
                    }
                }
            }
        }
    }

    /// <H ψ, ψ> (real for Hermitian H).
    pub fn energy_expectation(&self, psi: &Array1<C64>) -> f64 {
        let mut h = Array1::zeros(self.dim);
        self.apply(psi, &mut h);
        h.iter().zip(psi.iter()).map(|(a, b)| (a * b.conj()).re).sum()
    }

    /// Initial state Ψ₀ ⊗ u for a matter vector u.
    pub fn vacuum_state(&self, u: &Array1<C64>) -> Array1<C64> {
        assert_eq!(u.len(), self.matter_dim);
        let mut psi = Array1::zeros(self.dim);
        for j in 0..self.matter_dim {
            psi[j] = u[j];
        }
        psi
    }

    /// Photon-sector populations (n = 0, 1, 2) of a state.
    pub fn sector_populations(&self, psi: &Array1<C64>) -> [f64; 3] {
        let n = self.matter_dim;
        let one_end = n * (1 + self.n_osc);
        let mut pops = [0.0; 3];
        for (idx, z) in psi.iter().enumerate() {
            let sector = if idx < n {
                0
            } else if idx < one_end {
                1
            } else {
                2
            };
            pops[sector] += z.norm_sqr();
        }
        pops
    }

    /// ‖(I ⊗ π_{matter state m}) ψ‖²: total probability of finding the
    /// matter in basis state m, any photon configuration.
    pub fn matter_population(&self, psi: &Array1<C64>, matter_index: usize) -> f64 {
        let n = self.matter_dim;
        psi.iter()
            .enumerate()
            .filter(|(idx, _)| idx % n == matter_index)
            .map(|(_, z)| z.norm_sqr())
            .sum()
    }

    /// (I ⊗ X) ψ for a matter operator X.
    pub fn apply_matter_operator(&self, x: &Array2<C64>, psi: &Array1<C64>) -> Array1<C64> {
        let n = self.matter_dim;
        let blocks = self.dim / n;
        let mut out = Array1::zeros(self.dim);
        for bidx in 0..blocks {
            let base = bidx * n;
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..n {
                    acc += x[[i, j]] * psi[base + j];
                }
                out[base + i] = acc;
            }
        }
        out
    }

    #[cfg(test)]
    fn annihilate(&self, q: usize, psi: &Array1<C64>) -> Array1<C64> {
        let n = self.matter_dim;
        let mut out = Array1::zeros(self.dim);
        for j in 0..n {
            for qq in 0..self.n_osc {
                let src = self.one_index(qq, j);
                if qq == q {
                    out[self.vac_index(j)] += psi[src];
                }
            }
            if self.n_max >= 2 {
                for a in 0..self.n_osc {
                    for b in a..self.n_osc {
                        let src = self.two_index(a, b, j);
                        if a == q && b == q {
                            out[self.one_index(q, j)] +=
                                psi[src] * std::f64::consts::SQRT_2;
                        } else if a == q {
                            out[self.one_index(b, j)] += psi[src];
                        } else if b == q {
                            out[self.one_index(a, j)] += psi[src];
                        }
                    }
                }
            }
        }
        out
    }

    #[cfg(test)]
    fn create(&self, q: usize, psi: &Array1<C64>) -> Array1<C64> {
        let n = self.matter_dim;
        let mut out = Array1::zeros(self.dim);
        for j in 0..n {
            out[self.one_index(q, j)] += psi[self.vac_index(j)];
            if self.n_max >= 2 {
                for qq in 0..self.n_osc {
                    let (lo, hi) = (q.min(qq), q.max(qq));
                    let boost = if q == qq {
                        std::f64::consts::SQRT_2
                    } else {
                        1.0
                    };
                    out[self.two_index(lo, hi, j)] += psi[self.one_index(qq, j)] * boost;
                }
            }
        }
        out
    }
}

/// Assemble the truncated system; refuses bases above the dimension cap.
pub fn build_system(
    model: &MatterModel,
    grid_config: &ModeGridConfig,
    n_max: usize,
    g: f64,
) -> Result<TruncatedFockSystem, FockError> {
    if !(n_max == 1 || n_max == 2) {
        return Err(FockError::BadPhotonCap(n_max));
    }
    let grid = ModeGrid::build(model, grid_config)?;
    let n = model.total_dim();
    let n_osc = 2 * grid.len();
    let dim = if n_max == 1 {
        n * (1 + n_osc)
    } else {
        n * (1 + n_osc + n_osc * (n_osc + 1) / 2)
    };
    if dim > grid_config.dimension_cap {
        return Err(FockError::DimensionCap {
            dim,
            cap: grid_config.dimension_cap,
        });
    }
    let mut osc_energy = Vec::with_capacity(n_osc);
    let mut couplings = Vec::with_capacity(n_osc);
    for mode in &grid.modes {
        let r = (mode.k[0] * mode.k[0] + mode.k[1] * mode.k[1] + mode.k[2] * mode.k[2]).sqrt();
        let sample = form_factor(model, &mode.k)?;
        let comps = sample.component_matrices(model);
        for pol in 0..2 {
            let eps = mode.polarization[pol];
            let mut cmat: Array2<C64> = Array2::zeros((n, n));
            for (cc, comp) in comps.iter().enumerate() {
                cmat = cmat + comp.mapv(|z| z * eps[cc]);
            }
            osc_energy.push(r);
            couplings.push(cmat.mapv(|z| z * mode.weight.sqrt()));
        }
    }
    let matter_energies: Vec<f64> = (0..n)
        .map(|i| {
            let (level, _) = model.state_of_global(i);
            model.energy(level)
        })
        .collect();
    Ok(TruncatedFockSystem {
        grid,
        n_max,
        matter_dim: n,
        g,
        osc_energy,
        couplings,
        matter_energies,
        dim,
        n_osc,
    })
}

// ---------------------------------------------------------------------------
// Krylov propagation
// ---------------------------------------------------------------------------

const KRYLOV_DIM: usize = 30;
const KRYLOV_TOL: f64 = 1e-12;

/// e^{-itH} ψ by restarted Lanczos with adaptive substeps. The Lanczos
/// recurrence itself is sequential; callers parallelize across initial
/// states or output times.
pub fn propagate_state(
    system: &TruncatedFockSystem,
    psi0: &Array1<C64>,
    t: f64,
) -> Result<Array1<C64>, FockError> {
    let mut psi = psi0.clone();
    let mut remaining = t;
    if remaining == 0.0 {
        return Ok(psi);
    }
    let norm0 = norm(&psi);
    let mut dt = remaining;
    let mut guard = 0;
    while remaining > 1e-14 {
        guard += 1;
        if guard > 100_000 {
            return Err(FockError::PropagationToleranceExceeded(
                "substep limit reached".into(),
            ));
        }
        dt = dt.min(remaining);
        let (step_psi, used) = lanczos_step(system, &psi, dt)?;
        psi = step_psi;
        remaining -= used;
        dt = if used == dt { dt * 1.5 } else { used };
    }
    let drift = (norm(&psi) - norm0).abs();
    if drift > 1e-9 * norm0.max(1.0) {
        return Err(FockError::PropagationToleranceExceeded(format!(
            "norm drift {drift:.3e}"
        )));
    }
    Ok(psi)
}

fn norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// One Lanczos step: builds a KRYLOV_DIM basis once, then shrinks the
/// substep until the residual estimate meets tolerance (the basis is
/// reused across shrinks). Returns the advanced state and the time
/// actually covered.
fn lanczos_step(
    system: &TruncatedFockSystem,
    psi: &Array1<C64>,
    dt_try: f64,
) -> Result<(Array1<C64>, f64), FockError> {
    let dim = system.dim();
    let beta0 = norm(psi);
    if beta0 == 0.0 {
        return Ok((psi.clone(), dt_try));
    }
    let m = KRYLOV_DIM.min(dim);
    let mut basis: Vec<Array1<C64>> = Vec::with_capacity(m + 1);
    basis.push(psi.mapv(|z| z / c(beta0)));
    let mut alphas: Vec<f64> = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);
    let mut w: Array1<C64> = Array1::zeros(dim);
    let mut breakdown = false;
    for j in 0..m {
        system.apply(&basis[j], &mut w);
        if j > 0 {
            let b = c(betas[j - 1]);
            w = &w - &basis[j - 1].mapv(|z| z * b);
        }
        let alpha = basis[j]
            .iter()
            .zip(w.iter())
            .map(|(v, x)| (x * v.conj()).re)
            .sum::<f64>();
        w = &w - &basis[j].mapv(|z| z * c(alpha));
        // one local re-orthogonalization pass against the active pair;
        // restarts every substep keep global drift in check and the
        // norm-drift guard fails loudly if the recurrence degrades
        for v in basis.iter().skip(j.saturating_sub(1)) {
            let overlap: C64 = v.iter().zip(w.iter()).map(|(a, b)| b * a.conj()).sum();
            w = &w - &v.mapv(|z| z * overlap);
        }
        alphas.push(alpha);
        let beta = norm(&w);
        betas.push(beta);
        if beta < 1e-13 {
            breakdown = true;
            break;
        }
        if basis.len() < m {
            basis.push(w.mapv(|z| z / c(beta)));
        }
    }
    let mm = alphas.len();
    // tridiagonal T in a small dense complex matrix
    let mut tmat: Array2<C64> = Array2::zeros((mm, mm));
    for i in 0..mm {
        tmat[[i, i]] = c(alphas[i]);
        if i + 1 < mm {
            tmat[[i, i + 1]] = c(betas[i]);
            tmat[[i + 1, i]] = c(betas[i]);
        }
    }
    let beta_last = betas[mm - 1];
    let mut dt = dt_try;
    loop {
        let e = crate::linalg::expm(&tmat.mapv(|z| z * C64::new(0.0, -dt)));
        // residual estimate from the last basis component
        let err = if breakdown {
            0.0
        } else {
            beta_last * e[[mm - 1, 0]].norm() * dt.abs()
        };
        if err <= KRYLOV_TOL || dt < 1e-12 {
            let mut out: Array1<C64> = Array1::zeros(dim);
            for (i, v) in basis.iter().enumerate().take(mm) {
                let coeff = e[[i, 0]] * c(beta0);
                out = out + v.mapv(|z| z * coeff);
            }
            return Ok((out, dt));
        }
        dt *= 0.5;
    }
}

/// Propagate Ψ₀ ⊗ u (u a matter vector) to time t.
pub fn propagate(
    system: &TruncatedFockSystem,
    u: &Array1<C64>,
    t: f64,
) -> Result<Array1<C64>, FockError> {
    let nu = norm_matter(u);
    if (nu - 1.0).abs() > 1e-12 {
        return Err(FockError::PropagationToleranceExceeded(format!(
            "initial matter state must be normalized, got ‖u‖ = {nu}"
        )));
    }
    propagate_state(system, &system.vacuum_state(u), t)
}

fn norm_matter(u: &Array1<C64>) -> f64 {
    u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// All matter basis states propagated over a shared time grid
/// (sequential continuation per state, states independent).
pub struct BasisTrajectories {
    pub times: Vec<f64>,
    /// states[a][it] = e^{-i t_it H} (Ψ₀ ⊗ u_a)
    pub states: Vec<Vec<Array1<C64>>>,
}

pub fn propagate_basis(
    system: &TruncatedFockSystem,
    times: &[f64],
) -> Result<BasisTrajectories, FockError> {
    let n = system.matter_dim;
    let mut states = Vec::with_capacity(n);
    for a in 0..n {
        let mut u = Array1::zeros(n);
        u[a] = c(1.0);
        let mut per_time = Vec::with_capacity(times.len());
        let mut psi = system.vacuum_state(&u);
        let mut at = 0.0;
        for &t in times {
            assert!(t >= at, "time grid must be nondecreasing");
            if t > at {
                psi = propagate_state(system, &psi, t - at)?;
                at = t;
            }
            per_time.push(psi.clone());
        }
        states.push(per_time);
    }
    Ok(BasisTrajectories {
        times: times.to_vec(),
        states,
    })
}

impl BasisTrajectories {
    /// S^mat(t, g) X in the matter basis:
    /// S[b,a] = <(I⊗X) e^{-itH}(Ψ₀⊗u_a), e^{-itH}(Ψ₀⊗u_b)>.
    pub fn s_mat(&self, system: &TruncatedFockSystem, x: &Array2<C64>, time_index: usize) -> Array2<C64> {
        let n = system.matter_dim;
        let mut s: Array2<C64> = Array2::zeros((n, n));
        let psis = &self.states;
        for a in 0..n {
            let xa = system.apply_matter_operator(x, &psis[a][time_index]);
            for b in 0..n {
                let dot: C64 = xa
                    .iter()
                    .zip(psis[b][time_index].iter())
                    .map(|(p, q)| p * q.conj())
                    .sum();
                s[[b, a]] = dot;
            }
        }
        s
    }

    /// P(j → m) at a grid time: ‖(I ⊗ π_m) ψ_j‖².
    pub fn marginal_probability(
        &self,
        system: &TruncatedFockSystem,
        from: usize,
        to: usize,
        time_index: usize,
    ) -> f64 {
        system.matter_population(&self.states[from][time_index], to)
    }
}

/// Single-shot S^mat(t, g) X (propagates the whole matter basis).
pub fn s_mat_exact(
    system: &TruncatedFockSystem,
    x: &Array2<C64>,
    t: f64,
) -> Result<Array2<C64>, FockError> {
    let traj = propagate_basis(system, &[t])?;
    Ok(traj.s_mat(system, x, 0))
}

/// Single-shot marginal transition probability between matter basis
/// states (flattened indices).
pub fn marginal_probability_exact(
    system: &TruncatedFockSystem,
    from: usize,
    to: usize,
    t: f64,
) -> Result<f64, FockError> {
    let n = system.matter_dim;
    let mut u = Array1::zeros(n);
    u[from] = c(1.0);
    let psi = propagate(system, &u, t)?;
    Ok(system.matter_population(&psi, to))
}

/// Run manifest for reproducibility of oracle comparisons.
#[derive(Debug, Serialize)]
pub struct OracleManifest {
    pub modes: usize,
    pub oscillators: usize,
    pub basis_dim: usize,
    pub n_max: usize,
    pub g: f64,
    pub dimension_cap: usize,
    pub grid: ModeGridConfig,
    pub seed: u64,
}

pub fn oracle_manifest(
    system: &TruncatedFockSystem,
    grid_config: &ModeGridConfig,
    seed: u64,
) -> OracleManifest {
    OracleManifest {
        modes: system.grid.len(),
        oscillators: system.n_oscillators(),
        basis_dim: system.dim(),
        n_max: system.n_max,
        g: system.g,
        dimension_cap: grid_config.dimension_cap,
        grid: grid_config.clone(),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matter::two_level_model;

    fn small_grid() -> ModeGridConfig {
        ModeGridConfig {
            shell_nodes: 4,
            shell_halfwidth: 0.4,
            background_nodes: 6,
            n_theta: 2,
            n_phi: 3,
            r_max: None,
            dimension_cap: 200_000,
        }
    }

    #[test]
    fn grid_polarizations_and_weights() {
        let m = two_level_model();
        let grid = ModeGrid::build(&m, &small_grid()).unwrap();
        assert!(!grid.is_empty());
        grid.validate(&m).unwrap(); // orthonormality, transversality, weights
    }

    #[test]
    fn counting_matches_formula() {
        let m = two_level_model();
        let sys1 = build_system(&m, &small_grid(), 1, 0.01).unwrap();
        let modes = sys1.grid.len();
        assert_eq!(sys1.dim(), 2 * (1 + 2 * modes));
        let sys2 = build_system(&m, &small_grid(), 2, 0.01).unwrap();
        let n_osc = 2 * modes;
        assert_eq!(sys2.dim(), 2 * (1 + n_osc + n_osc * (n_osc + 1) / 2));
    }

    #[test]
    fn dimension_cap_enforced() {
        let m = two_level_model();
        let mut cfg = small_grid();
        cfg.dimension_cap = 10;
        assert!(matches!(
            build_system(&m, &cfg, 2, 0.01),
            Err(FockError::DimensionCap { .. })
        ));
    }

    #[test]
    fn bad_photon_cap_rejected() {
        let m = two_level_model();
        assert!(matches!(
            build_system(&m, &small_grid(), 3, 0.01),
            Err(FockError::BadPhotonCap(3))
        ));
    }

    #[test]
    fn hermiticity_via_pairing() {
        use rand::{Rng, SeedableRng};
        let m = two_level_model();
        let sys = build_system(&m, &small_grid(), 2, 0.05).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let dim = sys.dim();
        let mut x: Array1<C64> = Array1::zeros(dim);
        let mut y: Array1<C64> = Array1::zeros(dim);
        for i in 0..dim {
            x[i] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            y[i] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let mut hx = Array1::zeros(dim);
        let mut hy = Array1::zeros(dim);
        sys.apply(&x, &mut hx);
        sys.apply(&y, &mut hy);
        let lhs: C64 = hx.iter().zip(y.iter()).map(|(a, b)| a * b.conj()).sum();
        let rhs: C64 = x.iter().zip(hy.iter()).map(|(a, b)| a * b.conj()).sum();
        let scale = norm(&hx) * norm(&y) + 1e-300;
        assert!((lhs - rhs).norm() / scale < 1e-12);
    }

    #[test]
    fn commutation_relations_below_cap() {
        let m = two_level_model();
        let sys = build_system(&m, &small_grid(), 2, 0.0).unwrap();
        // on the vacuum + one-photon sectors, [a_q, a_r†] = δ_qr exactly
        let n = sys.matter_dim;
        let mut psi: Array1<C64> = Array1::zeros(sys.dim());
        psi[0] = c(0.8);
        psi[n + 1] = c(0.6); // some one-photon component
        for q in [0usize, 1, 3] {
            for r in [0usize, 2, 3] {
                // restrict to the part of ψ with at most n_max - 1 photons
                // (creation out of the top sector is truncated)
                let mut low = psi.clone();
                for idx in n * (1 + sys.n_osc)..sys.dim() {
                    low[idx] = c(0.0);
                }
                let ad_a = sys.annihilate(q, &sys.create(r, &low.clone()));
                let a_ad = sys.create(r, &sys.annihilate(q, &low.clone()));
                let comm = &ad_a - &a_ad;
                let expect = if q == r { low.clone() } else { low.mapv(|_| c(0.0)) };
                let dev: f64 = comm
                    .iter()
                    .zip(expect.iter())
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                // the two-photon part of a_ad is truncated-consistent: both
                // orderings act within the cap for the vacuum+one test state
                assert!(dev < 1e-13, "q={q}, r={r}, dev={dev}");
            }
        }
    }

    #[test]
    fn free_hamiltonian_is_diagonal_phase() {
        let m = two_level_model();
        let sys = build_system(&m, &small_grid(), 1, 0.0).unwrap();
        let mut u = Array1::zeros(2);
        u[1] = c(1.0);
        let t = 0.9;
        let psi = propagate(&sys, &u, t).unwrap();
        // e^{-itλ₁} (Ψ₀ ⊗ u₁): phase only
        let expect = C64::new(0.0, -t * m.energy(1)).exp();
        assert!((psi[1] - expect).norm() < 1e-10);
        let stray: f64 = psi
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 1)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        assert!(stray < 1e-20);
    }

    #[test]
    fn propagation_preserves_norm_and_energy() {
        let m = two_level_model();
        let sys = build_system(&m, &small_grid(), 2, 0.05).unwrap();
        let mut u = Array1::zeros(2);
        u[1] = c(1.0);
        let psi0 = sys.vacuum_state(&u);
        let e0 = sys.energy_expectation(&psi0);
        let mut psi = psi0;
        for _ in 0..8 {
            psi = propagate_state(&sys, &psi, 2.5).unwrap();
        }
        assert!((norm(&psi) - 1.0).abs() < 1e-9);
        let e1 = sys.energy_expectation(&psi);
        assert!((e1 - e0).abs() <= 1e-9 * e0.abs().max(1.0), "{e0} vs {e1}");
    }

    #[test]
    fn one_photon_sector_grows_quadratically_in_g() {
        let m = two_level_model();
        let t = 3.0;
        let mut u = Array1::zeros(2);
        u[1] = c(1.0);
        let mut pops = Vec::new();
        for g in [0.02, 0.01] {
            let sys = build_system(&m, &small_grid(), 1, g).unwrap();
            let psi = propagate(&sys, &u, t).unwrap();
            pops.push(sys.sector_populations(&psi)[1]);
        }
        let ratio = pops[0] / pops[1];
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn s_mat_at_time_zero_and_identity() {
        use rand::{Rng, SeedableRng};
        let m = two_level_model();
        let sys = build_system(&m, &small_grid(), 2, 0.04).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut x: Array2<C64> = Array2::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                x[[i, j]] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let s0 = s_mat_exact(&sys, &x, 0.0).unwrap();
        let dev: f64 = (&s0 - &x).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(dev < 1e-12);
        // X = I stays I for all times (unitarity)
        let id = Array2::from_diag_elem(2, c(1.0));
        let st = s_mat_exact(&sys, &id, 4.0).unwrap();
        let dev: f64 = (&st - &id).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(dev < 1e-9);
    }

    #[test]
    fn marginal_probabilities_normalize() {
        let m = two_level_model();
        let sys = build_system(&m, &small_grid(), 2, 0.05).unwrap();
        for t in [0.0, 2.0, 7.0] {
            let p0 = marginal_probability_exact(&sys, 1, 0, t).unwrap();
            let p1 = marginal_probability_exact(&sys, 1, 1, t).unwrap();
            assert!((p0 + p1 - 1.0).abs() < 1e-9, "t={t}: {}", p0 + p1);
            assert!((0.0..=1.0 + 1e-12).contains(&p0));
        }
        // t = 0, j ≠ m and g = 0 give Kronecker deltas
        assert_eq!(marginal_probability_exact(&sys, 1, 0, 0.0).unwrap(), 0.0);
        let free = build_system(&m, &small_grid(), 2, 0.0).unwrap();
        let p = marginal_probability_exact(&free, 1, 1, 5.0).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_audit_is_second_order() {
        // n_max = 1 vs n_max = 2 marginals differ at O(g²)
        let m = two_level_model();
        let t = 4.0;
        let mut deltas = Vec::new();
        for g in [0.04, 0.02] {
            let s1 = build_system(&m, &small_grid(), 1, g).unwrap();
            let s2 = build_system(&m, &small_grid(), 2, g).unwrap();
            let p1 = marginal_probability_exact(&s1, 1, 0, t).unwrap();
            let p2 = marginal_probability_exact(&s2, 1, 0, t).unwrap();
            deltas.push((p1 - p2).abs());
        }
        assert!(deltas[0] > deltas[1]);
        let order = (deltas[0] / deltas[1]).log2();
        assert!(order > 1.0, "truncation order exponent {order}");
    }
}
