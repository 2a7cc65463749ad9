//! Small dense kernels for element-level matrices.

/// Inverts the row-major `n x n` matrix in place by Gauss-Jordan elimination
/// with partial pivoting. Returns `false` when a pivot vanishes.
pub(crate) fn invert_in_place(n: usize, a: &mut [f64]) -> bool {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs())).unwrap_or(col);
        if a[piv * n + col] == 0.0 {
            return false;
        }
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
                inv.swap(piv * n + j, col * n + j);
            }
        }
        let d = 1.0 / a[col * n + col];
        for j in 0..n {
            a[col * n + j] *= d;
            inv[col * n + j] *= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        a[i * n + j] -= f * a[col * n + j];
                        inv[i * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    a.copy_from_slice(&inv);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_permuted_matrix() {
        let mut a = vec![0.0, 2.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 3.0];
        let orig = a.clone();
        assert!(invert_in_place(3, &mut a));
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| orig[i * 3 + k] * a[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let mut singular = vec![1.0, 2.0, 2.0, 4.0];
        assert!(!invert_in_place(2, &mut singular));
    }
}
