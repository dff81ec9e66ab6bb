//! Numerical integration primitives.
//!
//! * sphere-surface rules (product Gauss-Legendre in cos θ, uniform in
//!   azimuth), exact on spherical harmonics up to a declared degree,
//! * radial rules on (0, R_max) adapted to Schwartz-decaying integrands
//!   through the substitution r = Λ u / (1 - u),
//! * radial Cauchy principal values by symmetric-window subtraction,
//! * finite-time oscillatory integrals ∫ f(r) ∫_0^T e^{is(r+shift)} ds dr
//!   with the time integral done analytically.
//!
//! Every routine reports a convergence certificate (difference between a
//! rule and its doubled refinement) and fails loudly when the certificate
//! exceeds the requested tolerance. Summation order is fixed, so results
//! are bit-reproducible for a given configuration.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("sphere radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("quadrature did not converge: certificate {certificate:.3e} > tolerance {tolerance:.3e}")]
    ConvergenceFailure { certificate: f64, tolerance: f64 },
    #[error("principal-value pole {pole} closer to the origin than the window half-width {window}")]
    PoleTooCloseToOrigin { pole: f64, window: f64 },
    #[error("principal-value pole {pole} outside the radial domain (0, {domain_cut})")]
    PoleOutsideDomain { pole: f64, domain_cut: f64 },
}

/// Tolerances and node counts shared by every module that integrates.
///
/// Keys map one-to-one onto the CLI's `--quad.KEY=VAL` flags.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct QuadConfig {
    /// Sphere rule exact on spherical harmonics up to this degree.
    pub sphere_degree: usize,
    /// Base node count for radial rules.
    pub radial_nodes: usize,
    /// Principal-value window half-width as a fraction of the pole radius.
    pub pv_window_frac: f64,
    /// Convergence tolerance for certificates.
    pub tol: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            sphere_degree: 20,
            radial_nodes: 200,
            pv_window_frac: 0.25,
            tol: 1e-10,
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x)
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|t| half * t).collect(),
    )
}

// ---------------------------------------------------------------------------
// Sphere rule
// ---------------------------------------------------------------------------

/// Quadrature rule on the unit sphere. Weights are positive and sum to 4π.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl SphereRule {
    /// Product rule: Gauss-Legendre in cos θ × uniform azimuth, exact on
    /// spherical harmonics up to `degree`.
    pub fn product(degree: usize) -> Self {
        let n_theta = degree / 2 + 1;
        let n_phi = degree + 2;
        let (ct, wt) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        for (i, &cth) in ct.iter().enumerate() {
            let sth = (1.0 - cth * cth).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = dphi * j as f64;
                nodes.push([sth * phi.cos(), sth * phi.sin(), cth]);
                weights.push(wt[i] * dphi);
            }
        }
        SphereRule {
            nodes,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// ∫_{|k| = radius} f(k/|k|) dσ(k) = radius² Σ w_i f(ω_i).
pub fn sphere_integral<F>(f: F, radius: f64, rule: &SphereRule) -> Result<C64, QuadError>
where
    F: Fn(&[f64; 3]) -> C64,
{
    if radius <= 0.0 {
        return Err(QuadError::NonPositiveRadius(radius));
    }
    let mut acc = C64::new(0.0, 0.0);
    for (node, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += f(node) * C64::new(*w, 0.0);
    }
    Ok(acc * C64::new(radius * radius, 0.0))
}

/// Matrix-valued variant of [`sphere_integral`], same weights and ordering.
pub fn sphere_integral_matrix<F>(
    f: F,
    radius: f64,
    rule: &SphereRule,
    shape: (usize, usize),
) -> Result<Array2<C64>, QuadError>
where
    F: Fn(&[f64; 3]) -> Array2<C64>,
{
    if radius <= 0.0 {
        return Err(QuadError::NonPositiveRadius(radius));
    }
    let mut acc: Array2<C64> = Array2::zeros(shape);
    for (node, w) in rule.nodes.iter().zip(&rule.weights) {
        acc = acc + f(node).mapv(|z| z * *w);
    }
    Ok(acc.mapv(|z| z * (radius * radius)))
}

// ---------------------------------------------------------------------------
// Radial rules
// ---------------------------------------------------------------------------

/// Nodes on (0, R_max) for smooth rapidly-decaying integrands, with a
/// half-resolution companion used for convergence certificates.
#[derive(Debug, Clone)]
pub struct RadialRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub domain_cut: f64,
    coarse_nodes: Vec<f64>,
    coarse_weights: Vec<f64>,
}

impl RadialRule {
    /// Gauss-Legendre after the substitution r = scale·u/(1-u), truncated
    /// at `domain_cut`. Nodes cluster where the cutoff lives.
    pub fn new(n: usize, domain_cut: f64, scale: f64) -> Self {
        assert!(domain_cut > 0.0 && scale > 0.0 && n >= 4);
        let build = |m: usize| -> (Vec<f64>, Vec<f64>) {
            let umax = domain_cut / (scale + domain_cut);
            let (u, wu) = gl_on(0.0, umax, m);
            let mut r = Vec::with_capacity(m);
            let mut w = Vec::with_capacity(m);
            for (ui, wi) in u.iter().zip(&wu) {
                r.push(scale * ui / (1.0 - ui));
                w.push(wi * scale / ((1.0 - ui) * (1.0 - ui)));
            }
            (r, w)
        };
        let (nodes, weights) = build(n);
        let (coarse_nodes, coarse_weights) = build(n / 2);
        RadialRule {
            nodes,
            weights,
            domain_cut,
            coarse_nodes,
            coarse_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// ∫_0^{R_max} f(r) dr with a two-resolution convergence certificate.
pub fn radial_integral<F>(f: F, rule: &RadialRule, tol: f64) -> Result<C64, QuadError>
where
    F: Fn(f64) -> C64,
{
    let fine: C64 = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(r, w)| f(*r) * C64::new(*w, 0.0))
        .sum();
    let coarse: C64 = rule
        .coarse_nodes
        .iter()
        .zip(&rule.coarse_weights)
        .map(|(r, w)| f(*r) * C64::new(*w, 0.0))
        .sum();
    let certificate = (fine - coarse).norm();
    if certificate > tol * (1.0 + fine.norm()) {
        return Err(QuadError::ConvergenceFailure {
            certificate,
            tolerance: tol * (1.0 + fine.norm()),
        });
    }
    Ok(fine)
}

fn pv_window(pole: f64, domain_cut: f64, frac: f64) -> Result<f64, QuadError> {
    if pole <= 0.0 || pole >= domain_cut {
        return Err(QuadError::PoleOutsideDomain { pole, domain_cut });
    }
    let mut h = pole * frac;
    h = h.min(0.9 * (domain_cut - pole));
    if h >= pole {
        return Err(QuadError::PoleTooCloseToOrigin { pole, window: h });
    }
    Ok(h)
}

fn pv_panels_value<F>(f: &F, pole: f64, h: f64, domain_cut: f64, n: usize) -> C64
where
    F: Fn(f64) -> C64,
{
    // window: ∫ (f(r) - f(pole))/(r - pole); the f(pole) log term cancels
    // by symmetry. Outside: plain quadrature of f(r)/(r - pole).
    let n_even = n + (n % 2); // keep nodes off the pole
    let fp = f(pole);
    let mut acc = C64::new(0.0, 0.0);
    let (rw, ww) = gl_on(pole - h, pole + h, n_even);
    for (r, w) in rw.iter().zip(&ww) {
        acc += (f(*r) - fp) / C64::new(r - pole, 0.0) * C64::new(*w, 0.0);
    }
    for (a, b) in [(0.0, pole - h), (pole + h, domain_cut)] {
        if b - a > 1e-14 {
            let (rs, ws) = gl_on(a, b, n_even);
            for (r, w) in rs.iter().zip(&ws) {
                acc += f(*r) / C64::new(r - pole, 0.0) * C64::new(*w, 0.0);
            }
        }
    }
    acc
}

/// PV ∫_0^{R_max} f(r)/(r - pole) dr by symmetric-window subtraction.
pub fn principal_value_radial<F>(
    f: F,
    pole: f64,
    rule: &RadialRule,
    frac: f64,
    tol: f64,
) -> Result<C64, QuadError>
where
    F: Fn(f64) -> C64,
{
    let h = pv_window(pole, rule.domain_cut, frac)?;
    let n = rule.len().max(16);
    let fine = pv_panels_value(&f, pole, h, rule.domain_cut, n);
    let coarse = pv_panels_value(&f, pole, h, rule.domain_cut, n / 2);
    let certificate = (fine - coarse).norm();
    if certificate > tol * (1.0 + fine.norm()) {
        return Err(QuadError::ConvergenceFailure {
            certificate,
            tolerance: tol * (1.0 + fine.norm()),
        });
    }
    Ok(fine)
}

/// Matrix-valued principal value with the same window scheme.
pub fn principal_value_radial_matrix<F>(
    f: F,
    pole: f64,
    rule: &RadialRule,
    frac: f64,
    tol: f64,
    shape: (usize, usize),
) -> Result<Array2<C64>, QuadError>
where
    F: Fn(f64) -> Array2<C64>,
{
    let h = pv_window(pole, rule.domain_cut, frac)?;
    let n = rule.len().max(16);
    let eval = |m: usize| -> Array2<C64> {
        let m_even = m + (m % 2);
        let fp = f(pole);
        let mut acc: Array2<C64> = Array2::zeros(shape);
        let (rw, ww) = gl_on(pole - h, pole + h, m_even);
        for (r, w) in rw.iter().zip(&ww) {
            let d = C64::new(*w / (r - pole), 0.0);
            acc = acc + (f(*r) - &fp).mapv(|z| z * d);
        }
        for (a, b) in [(0.0, pole - h), (pole + h, rule.domain_cut)] {
            if b - a > 1e-14 {
                let (rs, ws) = gl_on(a, b, m_even);
                for (r, w) in rs.iter().zip(&ws) {
                    let d = C64::new(*w / (r - pole), 0.0);
                    acc = acc + f(*r).mapv(|z| z * d);
                }
            }
        }
        acc
    };
    let fine = eval(n);
    let coarse = eval(n / 2);
    let certificate = crate::linalg::frobenius_norm(&(&fine - &coarse));
    if certificate > tol * (1.0 + crate::linalg::frobenius_norm(&fine)) {
        return Err(QuadError::ConvergenceFailure {
            certificate,
            tolerance: tol,
        });
    }
    Ok(fine)
}

/// Ordinary ∫_0^{R_max} f(r)/(r - pole) dr for a pole at or below zero
/// (no singularity inside the domain).
pub fn regular_pole_radial<F>(
    f: F,
    pole: f64,
    rule: &RadialRule,
    tol: f64,
) -> Result<C64, QuadError>
where
    F: Fn(f64) -> C64,
{
    assert!(
        pole <= 0.0,
        "regular_pole_radial requires a nonpositive pole, got {pole}"
    );
    radial_integral(|r| f(r) / C64::new(r - pole, 0.0), rule, tol)
}

// ---------------------------------------------------------------------------
// Finite-time oscillatory integrals
// ---------------------------------------------------------------------------

/// (e^{iTθ} - 1)/(iθ), stable near θ = 0 where the value is T.
pub fn time_phase_factor(theta: f64, t_final: f64) -> C64 {
    let x = 0.5 * t_final * theta;
    let sinc = if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    C64::new(0.0, x).exp() * C64::new(t_final * sinc, 0.0)
}

fn oscillatory_panels(t_final: f64, domain_cut: f64, base: usize) -> usize {
    let oscillations = t_final * domain_cut / (2.0 * std::f64::consts::PI);
    (base / 16 + (0.8 * oscillations).ceil() as usize).max(8)
}

/// ∫_0^{R_max} f(r) · ∫_0^T e^{is(r + shift)} ds dr with the inner time
/// integral in closed form. As T → ∞ this tends to
/// π f(-shift) [if -shift ∈ (0, R_max)] + i PV ∫ f(r)/(r + shift) dr.
pub fn finite_time_oscillatory<F>(
    f: F,
    frequency_shift: f64,
    t_final: f64,
    rule: &RadialRule,
    tol: f64,
) -> Result<C64, QuadError>
where
    F: Fn(f64) -> C64,
{
    assert!(t_final > 0.0, "finite_time_oscillatory requires T > 0");
    let eval = |panels: usize| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let width = rule.domain_cut / panels as f64;
        for p in 0..panels {
            let (rs, ws) = gl_on(p as f64 * width, (p + 1) as f64 * width, 16);
            for (r, w) in rs.iter().zip(&ws) {
                acc += f(*r) * time_phase_factor(r + frequency_shift, t_final) * C64::new(*w, 0.0);
            }
        }
        acc
    };
    let panels = oscillatory_panels(t_final, rule.domain_cut, rule.len());
    let fine = eval(2 * panels);
    let coarse = eval(panels);
    let certificate = (fine - coarse).norm();
    if certificate > tol * (1.0 + fine.norm()) {
        return Err(QuadError::ConvergenceFailure {
            certificate,
            tolerance: tol * (1.0 + fine.norm()),
        });
    }
    Ok(fine)
}

/// T → ∞ limit of [`finite_time_oscillatory`]: the Sokhotski-Plemelj
/// split π f(-shift) + i PV ∫ f(r)/(r + shift) dr.
pub fn oscillatory_limit<F>(
    f: F,
    frequency_shift: f64,
    rule: &RadialRule,
    frac: f64,
    tol: f64,
) -> Result<C64, QuadError>
where
    F: Fn(f64) -> C64,
{
    let pole = -frequency_shift;
    if pole > 1e-12 && pole < rule.domain_cut {
        let delta = C64::new(std::f64::consts::PI, 0.0) * f(pole);
        let pv = principal_value_radial(&f, pole, rule, frac, tol)?;
        Ok(delta + C64::new(0.0, 1.0) * pv)
    } else {
        let pv = radial_integral(|r| f(r) / C64::new(r - pole, 0.0), rule, tol)?;
        Ok(C64::new(0.0, 1.0) * pv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_rule_weights_sum_to_full_area() {
        let rule = SphereRule::product(20);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_integral_constant_is_area() {
        let rule = SphereRule::product(20);
        let v = sphere_integral(|_| C64::new(1.0, 0.0), 1.0, &rule).unwrap();
        assert!((v.re - 4.0 * PI).abs() < 1e-12);
        // radius scaling
        let v2 = sphere_integral(|_| C64::new(1.0, 0.0), 3.0, &rule).unwrap();
        assert!((v2.re - 36.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn sphere_integral_transverse_dipole_weight() {
        // ∫ (1 - ω_z²) dσ = 8π/3
        let rule = SphereRule::product(20);
        let v = sphere_integral(|w| C64::new(1.0 - w[2] * w[2], 0.0), 1.0, &rule).unwrap();
        assert!((v.re - 8.0 * PI / 3.0).abs() < 1e-12);
        // ∫ ω_z² dσ = 4π/3
        let v = sphere_integral(|w| C64::new(w[2] * w[2], 0.0), 1.0, &rule).unwrap();
        assert!((v.re - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_integral_odd_vanishes() {
        let rule = SphereRule::product(20);
        for f in [
            |w: &[f64; 3]| C64::new(w[0], 0.0),
            |w: &[f64; 3]| C64::new(w[1] * w[2] * w[2], 0.0),
            |w: &[f64; 3]| C64::new(w[0] * w[1] * w[2], 0.0),
        ] {
            let v = sphere_integral(f, 1.0, &rule).unwrap();
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn sphere_rejects_nonpositive_radius() {
        let rule = SphereRule::product(6);
        assert!(matches!(
            sphere_integral(|_| C64::new(1.0, 0.0), 0.0, &rule),
            Err(QuadError::NonPositiveRadius(_))
        ));
    }

    #[test]
    fn radial_known_integrals() {
        let rule = RadialRule::new(200, 60.0, 2.0);
        let v = radial_integral(|r| C64::new((-r).exp(), 0.0), &rule, 1e-10).unwrap();
        assert!((v.re - 1.0).abs() < 1e-10);
        let v = radial_integral(|r| C64::new(r * (-r * r).exp(), 0.0), &rule, 1e-10).unwrap();
        assert!((v.re - 0.5).abs() < 1e-10);
    }

    #[test]
    fn radial_nonintegrable_fails() {
        let rule = RadialRule::new(200, 1.0, 1.0);
        let r = radial_integral(|r| C64::new(1.0 / r, 0.0), &rule, 1e-10);
        assert!(matches!(r, Err(QuadError::ConvergenceFailure { .. })));
    }

    #[test]
    fn pv_constant_symmetric_domain_cancels() {
        // PV ∫_0^{2λ} c/(r-λ) dr = 0
        let lambda = 0.8;
        let rule = RadialRule::new(128, 2.0 * lambda, 1.0);
        let v =
            principal_value_radial(|_| C64::new(3.25, 0.0), lambda, &rule, 0.25, 1e-10).unwrap();
        assert!(v.norm() < 1e-10);
    }

    #[test]
    fn pv_linear_exact() {
        // PV ∫_0^2 r/(r-1) dr = ∫_0^2 (1 + 1/(r-1)) dr = 2
        let rule = RadialRule::new(128, 2.0, 1.0);
        let v = principal_value_radial(|r| C64::new(r, 0.0), 1.0, &rule, 0.25, 1e-10).unwrap();
        assert!((v.re - 2.0).abs() < 1e-10, "{v}");
    }

    /// Brute-force PV oracle: symmetric exclusion windows of shrinking
    /// width δ with plain fine quadrature, Richardson-extrapolated in δ.
    fn pv_oracle<F: Fn(f64) -> f64>(f: F, pole: f64, r_max: f64) -> f64 {
        let value_at = |delta: f64| -> f64 {
            let mut acc = 0.0;
            for (a, b) in [(0.0, pole - delta), (pole + delta, r_max)] {
                let (rs, ws) = gl_on(a, b, 4000);
                for (r, w) in rs.iter().zip(&ws) {
                    acc += w * f(*r) / (r - pole);
                }
            }
            acc
        };
        // symmetric exclusion misses ∫_{-δ}^{δ}(f(p+x)-f(p))/x dx ≈ 2δ f'(p)
        let v1 = value_at(1e-3);
        let v2 = value_at(5e-4);
        2.0 * v2 - v1
    }

    #[test]
    fn pv_exponential_matches_brute_force() {
        let rule = RadialRule::new(256, 10.0, 1.0);
        let v = principal_value_radial(|r| C64::new((-r).exp(), 0.0), 1.0, &rule, 0.25, 1e-9)
            .unwrap();
        let oracle = pv_oracle(|r| (-r).exp(), 1.0, 10.0);
        assert!(
            (v.re - oracle).abs() < 1e-8,
            "pv {} vs oracle {}",
            v.re,
            oracle
        );
    }

    #[test]
    fn pv_window_independence() {
        let rule = RadialRule::new(256, 10.0, 1.0);
        let f = |r: f64| C64::new((-0.7 * r).exp() * (1.0 + r), 0.0);
        let v1 = principal_value_radial(f, 1.3, &rule, 0.25, 1e-9).unwrap();
        let v2 = principal_value_radial(f, 1.3, &rule, 0.125, 1e-9).unwrap();
        assert!((v1 - v2).norm() < 1e-9, "{}", (v1 - v2).norm());
    }

    #[test]
    fn pv_pole_outside_domain_rejected() {
        let rule = RadialRule::new(64, 2.0, 1.0);
        assert!(matches!(
            principal_value_radial(|_| C64::new(1.0, 0.0), 2.5, &rule, 0.25, 1e-9),
            Err(QuadError::PoleOutsideDomain { .. })
        ));
    }

    #[test]
    fn oscillatory_zero_integrand() {
        let rule = RadialRule::new(64, 8.0, 1.0);
        for t in [0.5, 10.0, 100.0] {
            let v =
                finite_time_oscillatory(|_| C64::new(0.0, 0.0), 0.7, t, &rule, 1e-12).unwrap();
            assert_eq!(v, C64::new(0.0, 0.0));
        }
    }

    /// Direct double quadrature of ∫_0^R f(r) ∫_0^T e^{is(r+shift)} ds dr,
    /// independent of the analytic time integral.
    fn double_quad_oracle<F: Fn(f64) -> C64>(f: F, shift: f64, t_final: f64, r_max: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let (rs, ws) = gl_on(0.0, r_max, 400);
        // time integral resolved against the fastest phase
        let s_panels = (t_final * (r_max + shift.abs()) / (2.0 * PI) * 1.2).ceil() as usize + 4;
        for (r, w) in rs.iter().zip(&ws) {
            let mut time = C64::new(0.0, 0.0);
            let width = t_final / s_panels as f64;
            for p in 0..s_panels {
                let (ss, vs) = gl_on(p as f64 * width, (p + 1) as f64 * width, 8);
                for (s, v) in ss.iter().zip(&vs) {
                    time += C64::new(0.0, s * (r + shift)).exp() * C64::new(*v, 0.0);
                }
            }
            acc += f(*r) * time * C64::new(*w, 0.0);
        }
        acc
    }

    #[test]
    fn oscillatory_matches_double_quadrature() {
        let rule = RadialRule::new(128, 6.0, 1.0);
        let f = |r: f64| C64::new(r * (-r * r).exp(), 0.0);
        for (shift, t) in [(0.9, 35.0), (-1.1, 35.0)] {
            let fast = finite_time_oscillatory(f, shift, t, &rule, 1e-11).unwrap();
            let slow = double_quad_oracle(f, shift, t, 6.0);
            assert!(
                (fast - slow).norm() < 1e-9,
                "shift {shift}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn oscillatory_nonresonant_tends_to_pv_limit() {
        // shift > 0: no resonance sphere; limit is i·PV with pole at -shift < 0
        let rule = RadialRule::new(128, 8.0, 1.0);
        let f = |r: f64| C64::new(r * (-2.0 * r * r).exp(), 0.0);
        let shift = 0.8;
        let limit = oscillatory_limit(f, shift, &rule, 0.25, 1e-10).unwrap();
        let v = finite_time_oscillatory(f, shift, 1000.0, &rule, 1e-10).unwrap();
        assert!((v - limit).norm() < 1e-5, "{}", (v - limit).norm());
    }

    #[test]
    fn oscillatory_resonant_real_part_is_pi_f() {
        let rule = RadialRule::new(128, 8.0, 1.0);
        let f = |r: f64| C64::new(r * (-2.0 * (r - 0.3) * (r - 0.3)).exp(), 0.0);
        let shift = -1.2; // resonance radius 1.2
        let v = finite_time_oscillatory(f, shift, 800.0, &rule, 1e-10).unwrap();
        let expect = PI * f(1.2).re;
        assert!(
            (v.re - expect).abs() < 0.01 * expect.abs(),
            "{} vs {}",
            v.re,
            expect
        );
    }

    #[test]
    fn oscillatory_tail_rate_matches_cutoff_order() {
        // integrand aligned with the cutoff: f = φ_p(r)²/r ~ r^{2p-1};
        // the tail |F(T) - F(∞)| then decays like T^{-2p}
        for (p, lambda) in [(1u32, 1.0f64), (2, 1.0)] {
            let rule = RadialRule::new(160, 8.0, 1.0);
            let f = move |r: f64| {
                let phi = (r / lambda).powi(p as i32) * (-(r / lambda).powi(2)).exp();
                C64::new(phi * phi / r, 0.0)
            };
            let shift = -1.3;
            let limit = oscillatory_limit(f, shift, &rule, 0.25, 1e-10).unwrap();
            let ts: Vec<f64> = vec![10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0];
            let errs: Vec<f64> = ts
                .iter()
                .map(|t| {
                    (finite_time_oscillatory(f, shift, *t, &rule, 1e-10).unwrap() - limit).norm()
                })
                .collect();
            let slope = log_log_slope(&ts, &errs);
            let want = -2.0 * p as f64;
            assert!(
                (slope - want).abs() <= 0.2 * want.abs(),
                "p={p}: slope {slope} vs {want}, errs {errs:?}"
            );
        }
    }

    fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
        num / den
    }
}
