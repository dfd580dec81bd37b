//! Dense complex helpers for the small Gram systems that appear in ZF
//! precoding. Matrices are row-major `Vec<Complex64>` of side `n`.

use num_complex::Complex64;

/// `sum_m conj(x[m]) * y[m]`
pub fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Gram matrix `G[j][k] = rows[j]^H rows[k]` of a set of column vectors.
pub fn gram(vectors: &[Vec<Complex64>]) -> Vec<Complex64> {
    let n = vectors.len();
    let mut g = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for k in j..n {
            let v = inner(&vectors[j], &vectors[k]);
            g[j * n + k] = v;
            g[k * n + j] = v.conj();
        }
    }
    g
}

/// Lower Cholesky factor of a Hermitian positive definite matrix, or `None`
/// if a pivot is not strictly positive.
pub fn cholesky(a: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for m in 0..j {
            d -= l[j * n + m].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for m in 0..j {
                s -= l[i * n + m] * l[j * n + m].conj();
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

/// Inverse of a Hermitian positive definite matrix from its Cholesky factor,
/// obtained by solving `A X = I` column by column.
pub fn cholesky_inverse(l: &[Complex64], n: usize) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut inv = vec![zero; n * n];
    let mut y = vec![zero; n];
    for col in 0..n {
        // L y = e_col
        for i in 0..n {
            let mut s = if i == col { Complex64::new(1.0, 0.0) } else { zero };
            for m in 0..i {
                s -= l[i * n + m] * y[m];
            }
            y[i] = s / l[i * n + i];
        }
        // L^H x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for m in (i + 1)..n {
                s -= l[m * n + i].conj() * inv[m * n + col];
            }
            inv[i * n + col] = s / l[i * n + i].re;
        }
    }
    inv
}

pub fn frobenius(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn inverse_of_hermitian_matrix() {
        let a = vec![c(4.0, 0.0), c(1.0, 2.0), c(1.0, -2.0), c(6.0, 0.0)];
        let l = cholesky(&a, 2).unwrap();
        let inv = cholesky_inverse(&l, 2);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = c(0.0, 0.0);
                for m in 0..2 {
                    s += a[i * 2 + m] * inv[m * 2 + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - c(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        assert!(cholesky(&a, 2).is_none());
    }
}
