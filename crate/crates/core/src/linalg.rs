//! Dense helpers for the tiny matrices this crate needs: symmetric n×n with
//! n <= 4 (induced metrics) and their eigenvalues via cyclic Jacobi sweeps.
//! Nothing here is meant for general-purpose linear algebra.

use crate::{CoreError, Result, MAX_DIM};

/// Off-diagonal convergence threshold for the Jacobi iteration.
pub const JACOBI_TOL: f64 = 1e-13;
/// Sweep cap; exceeding it signals pathological input.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Writes the n×n identity into `out` (row-major).
pub fn identity(n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
}

/// Inverts the n×n matrix `a` (row-major, n <= 4) by Gauss-Jordan with
/// partial pivoting; returns the determinant. `inv` must hold n*n slots.
pub fn invert(n: usize, a: &[f64], inv: &mut [f64]) -> Result<f64> {
    debug_assert!(n >= 1 && n <= MAX_DIM);
    let mut work = [0.0f64; MAX_DIM * MAX_DIM];
    work[..n * n].copy_from_slice(&a[..n * n]);
    identity(n, inv);
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        let mut best = work[col * n + col].abs();
        for r in col + 1..n {
            let v = work[r * n + col].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best == 0.0 {
            return Err(CoreError::InternalInvariant(
                "singular matrix in invert()".into(),
            ));
        }
        if pivot != col {
            for j in 0..n {
                work.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        let d = work[col * n + col];
        det *= d;
        let inv_d = 1.0 / d;
        for j in 0..n {
            work[col * n + j] *= inv_d;
            inv[col * n + j] *= inv_d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[r * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                work[r * n + j] -= factor * work[col * n + j];
                inv[r * n + j] -= factor * inv[col * n + j];
            }
        }
    }
    Ok(det)
}

fn offdiag_sq(n: usize, a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += a[i * n + j] * a[i * n + j];
        }
    }
    2.0 * s
}

/// Eigenvalues of the symmetric n×n matrix `a` (n <= 4) by cyclic Jacobi
/// rotations, iterated until the off-diagonal Frobenius norm drops below
/// [`JACOBI_TOL`]. Returned in descending order.
pub fn jacobi_eigenvalues(n: usize, a: &[f64]) -> Result<[f64; MAX_DIM]> {
    debug_assert!(n >= 1 && n <= MAX_DIM);
    let mut m = [0.0f64; MAX_DIM * MAX_DIM];
    m[..n * n].copy_from_slice(&a[..n * n]);
    // Scale-aware threshold: tiny matrices are already diagonal enough.
    let scale: f64 = (0..n * n).map(|k| m[k] * m[k]).sum::<f64>().sqrt().max(1.0);
    let tol_sq = (JACOBI_TOL * scale) * (JACOBI_TOL * scale);

    let mut sweeps = 0;
    while offdiag_sq(n, &m[..n * n]) > tol_sq {
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(CoreError::JacobiNoConvergence(JACOBI_MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig = [0.0f64; MAX_DIM];
    for i in 0..n {
        eig[i] = m[i * n + i];
    }
    eig[..n].sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert_2x2() {
        let a = [2.0, 0.0, 0.0, 4.0];
        let mut inv = [0.0; 4];
        let det = invert(2, &a, &mut inv).unwrap();
        assert!((det - 8.0).abs() < 1e-14);
        assert!((inv[0] - 0.5).abs() < 1e-14);
        assert!((inv[3] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn invert_times_matrix_is_identity() {
        let a = [
            3.0, 1.0, 0.5, 0.2, //
            1.0, 4.0, 0.7, 0.1, //
            0.5, 0.7, 5.0, 0.3, //
            0.2, 0.1, 0.3, 2.0,
        ];
        let mut inv = [0.0; 16];
        invert(4, &a, &mut inv).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a[i * 4 + k] * inv[k * 4 + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12, "entry ({i},{j}) = {s}");
            }
        }
    }

    // Brute-force oracle: roots of the characteristic polynomial found by
    // bisection on the leading principal minors' sign changes would be
    // overkill; for 4x4 symmetric matrices we instead check that the Jacobi
    // eigenvalues reproduce trace, trace of squares, and determinant.
    #[test]
    fn jacobi_matches_invariants() {
        let mats: [[f64; 16]; 3] = [
            [
                2.0, 1.0, 0.0, 0.0, //
                1.0, 2.0, 0.0, 0.0, //
                0.0, 0.0, 3.0, 0.5, //
                0.0, 0.0, 0.5, 1.0,
            ],
            [
                4.0, -1.0, 0.3, 0.2, //
                -1.0, 3.0, 0.1, -0.4, //
                0.3, 0.1, 2.0, 0.6, //
                0.2, -0.4, 0.6, 1.5,
            ],
            [
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        ];
        for a in &mats {
            let eig = jacobi_eigenvalues(4, a).unwrap();
            let trace: f64 = (0..4).map(|i| a[i * 4 + i]).sum();
            let tr_sq: f64 = (0..4)
                .map(|i| (0..4).map(|j| a[i * 4 + j] * a[j * 4 + i]).sum::<f64>())
                .sum();
            let mut inv = [0.0; 16];
            let det = invert(4, a, &mut inv).unwrap();
            let e_tr: f64 = eig[..4].iter().sum();
            let e_tr_sq: f64 = eig[..4].iter().map(|l| l * l).sum();
            let e_det: f64 = eig[..4].iter().product();
            assert!((trace - e_tr).abs() < 1e-11);
            assert!((tr_sq - e_tr_sq).abs() < 1e-10);
            assert!((det - e_det).abs() < 1e-10);
            for w in eig[..4].windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn jacobi_known_eigenvalues() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let a = [2.0, 1.0, 1.0, 2.0];
        let eig = jacobi_eigenvalues(2, &a).unwrap();
        assert!((eig[0] - 3.0).abs() < 1e-12);
        assert!((eig[1] - 1.0).abs() < 1e-12);
    }
}
