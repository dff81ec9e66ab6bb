//! Small dense complex linear algebra: conjugate transpose, LU solves,
//! the scaling-and-squaring Padé(13) matrix exponential, and a cyclic
//! Jacobi eigensolver for Hermitian matrices.
//!
//! Everything here operates on `ndarray::Array2<Complex64>` and is sized
//! for the matrices this crate actually produces (level blocks and the
//! vectorized superoperator, a few hundred rows at most).

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn frobenius_norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximum absolute column sum.
pub fn one_norm(a: &Array2<C64>) -> f64 {
    let mut best = 0.0f64;
    for col in a.columns() {
        let s: f64 = col.iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

/// Solve `A X = B` by LU with partial pivoting. Panics on zero pivot
/// (callers only pass well-conditioned Padé denominators and small
/// resolvent-type systems).
pub fn lu_solve(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "lu_solve: square matrix required");
    assert_eq!(n, b.nrows(), "lu_solve: shape mismatch");
    let mut lu = a.clone();
    let mut x = b.clone();
    let m = x.ncols();
    for k in 0..n {
        // pivot
        let mut p = k;
        let mut best = lu[[k, k]].norm();
        for i in (k + 1)..n {
            let v = lu[[i, k]].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        assert!(best > 0.0, "lu_solve: singular matrix");
        if p != k {
            for j in 0..n {
                let t = lu[[k, j]];
                lu[[k, j]] = lu[[p, j]];
                lu[[p, j]] = t;
            }
            for j in 0..m {
                let t = x[[k, j]];
                x[[k, j]] = x[[p, j]];
                x[[p, j]] = t;
            }
        }
        let piv = lu[[k, k]];
        for i in (k + 1)..n {
            let f = lu[[i, k]] / piv;
            lu[[i, k]] = f;
            for j in (k + 1)..n {
                let lkj = lu[[k, j]];
                lu[[i, j]] -= f * lkj;
            }
            for j in 0..m {
                let xkj = x[[k, j]];
                x[[i, j]] -= f * xkj;
            }
        }
    }
    // back substitution
    for j in 0..m {
        for i in (0..n).rev() {
            let mut s = x[[i, j]];
            for k2 in (i + 1)..n {
                s -= lu[[i, k2]] * x[[k2, j]];
            }
            x[[i, j]] = s / lu[[i, i]];
        }
    }
    x
}

/// Padé(13) coefficients, Higham (2005), eq. (10.33).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling-and-squaring with a Padé(13) kernel.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm: square matrix required");
    if n == 0 {
        return Array2::zeros((0, 0));
    }
    if n == 1 {
        let mut r = Array2::zeros((1, 1));
        r[[0, 0]] = a[[0, 0]].exp();
        return r;
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a1 = a.mapv(|z| z / c((1u64 << s) as f64));
    let a2 = a1.dot(&a1);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let id = eye(n);

    let w1 = &a6 * c(PADE13[13]) + &a4 * c(PADE13[11]) + &a2 * c(PADE13[9]);
    let w2 = a6.dot(&w1)
        + &a6 * c(PADE13[7])
        + &a4 * c(PADE13[5])
        + &a2 * c(PADE13[3])
        + &id * c(PADE13[1]);
    let u = a1.dot(&w2);
    let z1 = &a6 * c(PADE13[12]) + &a4 * c(PADE13[10]) + &a2 * c(PADE13[8]);
    let v = a6.dot(&z1)
        + &a6 * c(PADE13[6])
        + &a4 * c(PADE13[4])
        + &a2 * c(PADE13[2])
        + &id * c(PADE13[0]);

    let mut r = lu_solve(&(&v - &u), &(&v + &u));
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations,
/// ascending order. Input is symmetrized first; the anti-Hermitian
/// residue of `a` must be roundoff-level.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return Vec::new();
    }
    let mut m = (a + &dagger(a)).mapv(|z| z * c(0.5));
    let scale = frobenius_norm(&m).max(1.0);
    let tol = 1e-15 * scale;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                let b = apq.norm();
                if b <= 1e-300 {
                    continue;
                }
                let phase = apq / c(b);
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let tau = (aqq - app) / (2.0 * b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = t * cth;
                // columns: [p q] -> [p q] * [[c, s*phase], [-s*conj(phase}?, c]]
                // unitary U with U[p,p]=c, U[p,q]=s*phase, U[q,p]=-s*conj(phase), U[q,q]=c
                let (cc, ss) = (c(cth), c(sth));
                for i in 0..n {
                    let aip = m[[i, p]];
                    let aiq = m[[i, q]];
                    m[[i, p]] = aip * cc - aiq * ss * phase.conj();
                    m[[i, q]] = aip * ss * phase + aiq * cc;
                }
                for j in 0..n {
                    let apj = m[[p, j]];
                    let aqj = m[[q, j]];
                    m[[p, j]] = apj * cc - aqj * ss * phase;
                    m[[q, j]] = apj * ss * phase.conj() + aqj * cc;
                }
                m[[p, q]] = C64::new(0.0, 0.0);
                m[[q, p]] = C64::new(0.0, 0.0);
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[[i, i]].re).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

pub fn min_eigenvalue(a: &Array2<C64>) -> f64 {
    *hermitian_eigenvalues(a)
        .first()
        .expect("min_eigenvalue: empty matrix")
}

/// Operator (spectral) norm: sqrt of the largest eigenvalue of A†A.
pub fn spectral_norm(a: &Array2<C64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let g = dagger(a).dot(a);
    let eigs = hermitian_eigenvalues(&g);
    eigs.last().unwrap().max(0.0).sqrt()
}

pub fn matvec(a: &Array2<C64>, x: &Array1<C64>) -> Array1<C64> {
    a.dot(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn expm_matches_scalar_exponential() {
        let mut a = Array2::zeros((2, 2));
        a[[0, 0]] = C64::new(0.3, -0.2);
        a[[1, 1]] = C64::new(-1.0, 0.7);
        let e = expm(&a);
        assert!((e[[0, 0]] - a[[0, 0]].exp()).norm() < 1e-14);
        assert!((e[[1, 1]] - a[[1, 1]].exp()).norm() < 1e-14);
        assert!(e[[0, 1]].norm() < 1e-15);
    }

    #[test]
    fn expm_rotation_block() {
        // exp([[0, t],[-t, 0]]) = [[cos t, sin t], [-sin t, cos t]]
        let t = 1.3;
        let mut a = Array2::zeros((2, 2));
        a[[0, 1]] = c(t);
        a[[1, 0]] = c(-t);
        let e = expm(&a);
        approx(e[[0, 0]].re, t.cos(), 1e-14);
        approx(e[[0, 1]].re, t.sin(), 1e-14);
        approx(e[[1, 0]].re, -t.sin(), 1e-14);
    }

    #[test]
    fn expm_large_norm_scales() {
        // norm >> theta_13 exercises the squaring phase
        let mut a = Array2::zeros((2, 2));
        a[[0, 0]] = c(-40.0);
        a[[0, 1]] = c(35.0);
        a[[1, 1]] = c(-20.0);
        let e = expm(&a);
        // closed form for upper triangular
        let e00 = (-40.0f64).exp();
        let e11 = (-20.0f64).exp();
        let e01 = 35.0 * (e11 - e00) / 20.0;
        approx(e[[0, 0]].re, e00, 1e-18);
        approx(e[[1, 1]].re, e11, 1e-14);
        approx(e[[0, 1]].re, e01, 1e-12 * e01.abs());
    }

    #[test]
    fn hermitian_eigs_known() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let mut a = Array2::zeros((2, 2));
        a[[0, 0]] = c(2.0);
        a[[0, 1]] = C64::new(0.0, 1.0);
        a[[1, 0]] = C64::new(0.0, -1.0);
        a[[1, 1]] = c(2.0);
        let e = hermitian_eigenvalues(&a);
        approx(e[0], 1.0, 1e-12);
        approx(e[1], 3.0, 1e-12);
    }

    #[test]
    fn hermitian_eigs_trace_and_frobenius() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 6;
        let mut a: Array2<C64> = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        let h = (&a + &dagger(&a)).mapv(|z| z * c(0.5));
        let eigs = hermitian_eigenvalues(&h);
        let tr: f64 = (0..n).map(|i| h[[i, i]].re).sum();
        approx(eigs.iter().sum::<f64>(), tr, 1e-10);
        let f2: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        approx(eigs.iter().map(|x| x * x).sum::<f64>(), f2, 1e-10);
    }

    #[test]
    fn lu_solve_roundtrip() {
        let mut a = Array2::zeros((3, 3));
        let vals = [
            [2.0, 1.0, 0.5],
            [-1.0, 3.0, 1.0],
            [0.0, 0.5, -2.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                a[[i, j]] = C64::new(vals[i][j], 0.1 * (i as f64 - j as f64));
            }
        }
        let b = eye(3);
        let x = lu_solve(&a, &b);
        let r = a.dot(&x) - b;
        assert!(frobenius_norm(&r) < 1e-13);
    }

    #[test]
    fn spectral_norm_diag() {
        let mut a = Array2::zeros((2, 2));
        a[[0, 0]] = c(3.0);
        a[[1, 1]] = C64::new(0.0, -4.0);
        approx(spectral_norm(&a), 4.0, 1e-12);
    }
}
