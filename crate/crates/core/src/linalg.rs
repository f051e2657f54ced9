//! Dense linear algebra on the small per-node matrices (dimension ≤ 4).

/// Largest matrix dimension handled by the nodewise kernels.
pub const MAX_DIM: usize = 4;

pub type Mat = [f64; MAX_DIM * MAX_DIM];

/// Inverse and determinant of the row-major `n×n` matrix `a`, by Gaussian
/// elimination with partial pivoting. Returns `None` when a pivot vanishes.
pub fn invert(a: &[f64], n: usize) -> Option<(Mat, f64)> {
    assert!(n <= MAX_DIM && a.len() >= n * n);
    let mut m = [0.0; MAX_DIM * MAX_DIM];
    m[..n * n].copy_from_slice(&a[..n * n]);
    let mut inv = [0.0; MAX_DIM * MAX_DIM];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))
            .unwrap();
        let p = m[piv * n + col];
        if p == 0.0 || !p.is_finite() {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
                inv.swap(piv * n + j, col * n + j);
            }
            det = -det;
        }
        det *= p;
        let rp = 1.0 / p;
        for j in 0..n {
            m[col * n + j] *= rp;
            inv[col * n + j] *= rp;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f != 0.0 {
                for j in 0..n {
                    m[r * n + j] -= f * m[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
    }
    Some((inv, det))
}

/// Cholesky test for positive definiteness; pivots must exceed `tol`.
pub fn is_positive_definite(a: &[f64], n: usize, tol: f64) -> bool {
    let mut l = [0.0; MAX_DIM * MAX_DIM];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= tol || !s.is_finite() {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = [0.0; MAX_DIM * MAX_DIM];
    m[..n * n].copy_from_slice(&a[..n * n]);
    for _ in 0..50 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
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
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0];
        let (inv, det) = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let expected = 4.0 * (6.0 - 0.04) - 1.0 * (2.0 + 0.1) + 0.5 * (-0.2 - 1.5);
        assert!((det - expected).abs() < 1e-12);
    }

    #[test]
    fn indefinite_inverse() {
        let a = [-2.0, 0.0, 0.0, 3.0];
        let (inv, det) = invert(&a, 2).unwrap();
        assert_eq!(det, -6.0);
        assert!((inv[0] + 0.5).abs() < 1e-15);
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn definiteness_and_spectrum() {
        assert!(is_positive_definite(&[2.0, 1.0, 1.0, 2.0], 2, 1e-12));
        assert!(!is_positive_definite(&[1.0, 2.0, 2.0, 1.0], 2, 1e-12));
        let ev = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        let ev = symmetric_eigenvalues(&[1.0, 2.0, 2.0, 1.0], 2);
        assert!((ev[0] + 1.0).abs() < 1e-12);
    }
}
