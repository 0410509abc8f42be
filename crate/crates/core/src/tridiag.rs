//! Symmetric tridiagonal eigensolver: implicit QL with Wilkinson-type shifts,
//! accumulating the Givens rotations into the eigenvector matrix.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 60;

/// Eigenvalues (ascending) and matching orthonormal eigenvectors, one `Vec`
/// per eigenvector.
pub struct TridiagEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Diagonalizes the symmetric tridiagonal matrix with main diagonal `diag`
/// and off-diagonal `off` (`off[i]` couples `i` and `i + 1`).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 {
        return Ok(TridiagEigen { values: vec![], vectors: vec![] });
    }
    assert_eq!(off.len() + 1, n, "off-diagonal must have length n - 1");
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut col = vec![0.0; n];
            col[i] = 1.0;
            col
        })
        .collect();

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m] == 0.0 {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(Error::NoConvergence(l));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (left, right) = z.split_at_mut(i + 1);
                let (zi, zi1) = (&mut left[i], &mut right[0]);
                for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f = *b;
                    *b = s * *a + c * f;
                    *a = c * *a - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut v = std::mem::take(&mut z[k]);
            fix_sign(&mut v);
            v
        })
        .collect();
    Ok(TridiagEigen { values, vectors })
}

/// Makes the largest-magnitude entry (leftmost on ties) positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
        let n = diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn two_by_two_quadratic_formula() {
        let eig = tridiagonal_eigen(&[0.0, 1.0], &[0.1]).unwrap();
        let root = 1.04f64.sqrt();
        assert!((eig.values[0] - (1.0 - root) / 2.0).abs() < 1e-15);
        assert!((eig.values[1] - (1.0 + root) / 2.0).abs() < 1e-15);
        assert!((eig.values[0] + 0.0099019513592785).abs() < 1e-12);
    }

    #[test]
    fn diagonal_input_gives_coordinate_vectors() {
        let eig = tridiagonal_eigen(&[3.0, -1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(eig.values, vec![-1.0, 2.0, 3.0]);
        assert_eq!(eig.vectors[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(eig.vectors[2], vec![1.0, 0.0, 0.0]);
    }

    /// Eigenvalues agree with nalgebra's dense symmetric solver.
    #[test]
    fn matches_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 5, 40, 130] {
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let off: Vec<f64> = (1..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ours = tridiagonal_eigen(&diag, &off).unwrap();
            let mut theirs: Vec<f64> = SymmetricEigen::new(dense(&diag, &off)).eigenvalues.iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (a, b) in ours.values.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-12, "n={n}: {a} vs {b}");
            }
            let h = dense(&diag, &off);
            for (lam, v) in ours.values.iter().zip(&ours.vectors) {
                let v = nalgebra::DVector::from_vec(v.clone());
                let res = &h * &v - &v * *lam;
                assert!(res.amax() < 1e-13);
            }
        }
    }

    #[test]
    fn degenerate_spectrum_stays_orthonormal() {
        let n = 30;
        let eig = tridiagonal_eigen(&vec![1.0; n], &vec![0.0; n - 1]).unwrap();
        for (i, a) in eig.vectors.iter().enumerate() {
            for (j, b) in eig.vectors.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
