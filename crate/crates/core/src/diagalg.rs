//! Finite matrices stored as families of diagonals.
//!
//! Diagonal `k` of an `N × N` matrix is the sequence `A_k(i) = a_{i, i+k}`
//! over the rows `i` where both indices are in range. Products follow the
//! shifted pointwise rule `Z_k = Σ_l A_l · T^l(B_{k-l})`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DiagMatrix {
    n: usize,
    diagonals: BTreeMap<i64, Vec<f64>>,
}

/// First row on which diagonal `k` is defined.
fn first_row(k: i64) -> usize {
    (-k).max(0) as usize
}

impl DiagMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, diagonals: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        m.diagonals.insert(0, vec![1.0; n]);
        m
    }

    pub fn from_diagonal(values: Vec<f64>) -> Self {
        let mut m = Self::zeros(values.len());
        m.diagonals.insert(0, values);
        m
    }

    /// Symmetric tridiagonal with constant hopping.
    pub fn tridiagonal(diag: &[f64], hopping: f64) -> Self {
        let n = diag.len();
        let mut m = Self::from_diagonal(diag.to_vec());
        if n > 1 && hopping != 0.0 {
            m.diagonals.insert(1, vec![hopping; n - 1]);
            m.diagonals.insert(-1, vec![hopping; n - 1]);
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let n = cols.len();
        let dense: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        Self::from_dense(&dense)
    }

    /// Row-major dense input; all-zero diagonals are not stored.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for k in -(n as i64 - 1)..n as i64 {
            let start = first_row(k);
            let len = n - k.unsigned_abs() as usize;
            let diag: Vec<f64> = (start..start + len).map(|i| rows[i][(i as i64 + k) as usize]).collect();
            if diag.iter().any(|x| *x != 0.0) {
                m.diagonals.insert(k, diag);
            }
        }
        m
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.n]; self.n];
        for (&k, diag) in &self.diagonals {
            let start = first_row(k);
            for (p, x) in diag.iter().enumerate() {
                let i = start + p;
                rows[i][(i as i64 + k) as usize] = *x;
            }
        }
        rows
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn set_diagonal(&mut self, k: i64, values: Vec<f64>) -> Result<()> {
        if k.unsigned_abs() as usize >= self.n.max(1) || values.len() != self.n - k.unsigned_abs() as usize {
            return Err(Error::InvalidInput(format!(
                "diagonal {k} of a {}x{} matrix needs {} entries, got {}",
                self.n,
                self.n,
                self.n.saturating_sub(k.unsigned_abs() as usize),
                values.len()
            )));
        }
        self.diagonals.insert(k, values);
        Ok(())
    }

    pub fn diagonal(&self, k: i64) -> Option<&[f64]> {
        self.diagonals.get(&k).map(Vec::as_slice)
    }

    pub fn offsets(&self) -> impl Iterator<Item = i64> + '_ {
        self.diagonals.keys().copied()
    }

    /// Entry `a_{i,j}`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let k = j as i64 - i as i64;
        self.diagonals.get(&k).map_or(0.0, |d| d[i - first_row(k)])
    }

    /// `A_k(i)`, zero outside the stored range.
    fn at(&self, k: i64, i: i64) -> f64 {
        let start = first_row(k) as i64;
        match self.diagonals.get(&k) {
            Some(d) if i >= start && ((i - start) as usize) < d.len() => d[(i - start) as usize],
            _ => 0.0,
        }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.diagonals.values().flatten().fold(0.0, |a, x| a.max(x.abs()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_sizes(self, other)?;
        let mut out = self.clone();
        for (&k, d) in &other.diagonals {
            let slot = out.diagonals.entry(k).or_insert_with(|| vec![0.0; d.len()]);
            slot.iter_mut().zip(d).for_each(|(a, b)| *a -= b);
        }
        Ok(out)
    }

    /// Index translation `B(i, j) = A(i + t, j + t)`, zero where out of range.
    pub fn translated(&self, t: i64) -> Self {
        let n = self.n as i64;
        let mut out = Self::zeros(self.n);
        for &k in self.diagonals.keys() {
            let start = first_row(k) as i64;
            let len = n - k.abs();
            let diag: Vec<f64> = (start..start + len).map(|i| self.at(k, i + t)).collect();
            out.diagonals.insert(k, diag);
        }
        out
    }
}

fn check_sizes(a: &DiagMatrix, b: &DiagMatrix) -> Result<()> {
    if a.n != b.n {
        return Err(Error::InvalidInput(format!("dimension mismatch: {} vs {}", a.n, b.n)));
    }
    Ok(())
}

/// `‖A‖_s = max_k ‖A_k‖_∞ e^{|k| s}`.
pub fn norm_s(a: &DiagMatrix, s: f64) -> f64 {
    a.diagonals
        .iter()
        .map(|(k, d)| d.iter().fold(0.0f64, |m, x| m.max(x.abs())) * (k.abs() as f64 * s).exp())
        .fold(0.0, f64::max)
}

/// Product via `Z_k(i) = Σ_l A_l(i) B_{k-l}(i + l)`.
pub fn diag_product(a: &DiagMatrix, b: &DiagMatrix) -> Result<DiagMatrix> {
    check_sizes(a, b)?;
    let n = a.n as i64;
    let mut targets: Vec<i64> = a
        .offsets()
        .flat_map(|l| b.offsets().map(move |j| l + j))
        .filter(|k| k.abs() < n)
        .collect();
    targets.sort_unstable();
    targets.dedup();
    let diagonals: BTreeMap<i64, Vec<f64>> = targets
        .into_par_iter()
        .map(|k| {
            let start = first_row(k) as i64;
            let len = (n - k.abs()) as usize;
            let mut z = vec![0.0; len];
            for (&l, al) in &a.diagonals {
                if !b.diagonals.contains_key(&(k - l)) {
                    continue;
                }
                let a_start = first_row(l) as i64;
                for (p, slot) in z.iter_mut().enumerate() {
                    let i = start + p as i64;
                    let ai = i - a_start;
                    if ai < 0 || ai as usize >= al.len() {
                        continue;
                    }
                    *slot += al[ai as usize] * b.at(k - l, i + l);
                }
            }
            (k, z)
        })
        .collect();
    Ok(DiagMatrix { n: a.n, diagonals })
}

/// `max |HV - VD|`.
pub fn conjugation_residual(h: &DiagMatrix, v: &DiagMatrix, d: &DiagMatrix) -> Result<f64> {
    Ok(diag_product(h, v)?.sub(&diag_product(v, d)?)?.max_abs())
}

/// Exponential fit `C e^{-r|k|}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpFit {
    pub c: f64,
    pub r: f64,
}

/// Least-squares line through `(x, ln y)`; returns `(e^{intercept}, -slope)`.
pub fn log_linear_fit(points: &[(f64, f64)]) -> Result<ExpFit> {
    weighted_log_linear_fit(points, |_| 1.0)
}

/// As [`log_linear_fit`] with per-point weights `weight(y)`.
pub fn weighted_log_linear_fit(points: &[(f64, f64)], weight: impl Fn(f64) -> f64) -> Result<ExpFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints(points.len()));
    }
    let ws: Vec<f64> = points.iter().map(|p| weight(p.1)).collect();
    let sw: f64 = ws.iter().sum();
    let mx = points.iter().zip(&ws).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = points.iter().zip(&ws).map(|(p, w)| w * p.1.ln()).sum::<f64>() / sw;
    let sxx: f64 = points.iter().zip(&ws).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientPoints(1));
    }
    let sxy: f64 = points.iter().zip(&ws).map(|(p, w)| w * (p.0 - mx) * (p.1.ln() - my)).sum();
    let slope = sxy / sxx;
    Ok(ExpFit { c: (my - slope * mx).exp(), r: -slope })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayProfile {
    pub profile: Vec<(i64, f64)>,
    pub fit: Option<ExpFit>,
}

/// Sup-norm of every stored diagonal, and a fit of `ln ‖V_k‖_∞` against
/// `|k|` over the diagonals above `floor` (refused with fewer than 3).
pub fn diagonal_decay_profile(v: &DiagMatrix, floor: f64) -> DecayProfile {
    let profile: Vec<(i64, f64)> = v
        .diagonals
        .iter()
        .map(|(&k, d)| (k, d.iter().fold(0.0f64, |m, x| m.max(x.abs()))))
        .collect();
    let points: Vec<(f64, f64)> =
        profile.iter().filter(|(_, s)| *s > floor).map(|(k, s)| (k.abs() as f64, *s)).collect();
    DecayProfile { fit: log_linear_fit(&points).ok(), profile }
}

/// Residual of `T^{-1} Ṽ_{k+1} + H̃_0 Ṽ_k + T Ṽ_{k-1} = Ṽ_k T^k(D̃_0)` with
/// `Ṽ_k(i) = V_k(i + t)` and `D̃_0(i) = D_0(i + t)`, i.e. of `H̃ Ṽ = Ṽ D̃`,
/// over rows at least `margin` away from both window edges.
pub fn shift_covariance_residual(
    h_shifted: &DiagMatrix,
    v: &DiagMatrix,
    d: &DiagMatrix,
    t: i64,
    margin: usize,
) -> Result<f64> {
    check_sizes(h_shifted, v)?;
    check_sizes(v, d)?;
    if t.unsigned_abs() as usize > margin {
        return Err(Error::InvalidInput(format!("shift {t} exceeds the interior margin {margin}")));
    }
    if 2 * margin >= v.n {
        return Err(Error::InvalidInput(format!("margin {margin} leaves no interior in a window of {}", v.n)));
    }
    let vt = v.translated(t);
    let dt = d.translated(t);
    let diff = diag_product(h_shifted, &vt)?.sub(&diag_product(&vt, &dt)?)?;
    let n = v.n;
    let mut worst = 0.0f64;
    for (&k, z) in &diff.diagonals {
        let start = first_row(k);
        for (p, x) in z.iter().enumerate() {
            let i = start + p;
            if i >= margin && i + margin < n {
                worst = worst.max(x.abs());
            }
        }
    }
    Ok(worst)
}

/// CSV `k,supnorm`.
pub fn write_profile_csv<W: Write>(mut w: W, profile: &DecayProfile) -> std::io::Result<()> {
    writeln!(w, "k,supnorm")?;
    for (k, s) in &profile.profile {
        writeln!(w, "{k},{s}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
    }

    fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    fn banded(rng: &mut ChaCha8Rng, n: usize, lo: i64, hi: i64) -> DiagMatrix {
        let mut m = DiagMatrix::zeros(n);
        for k in lo..=hi {
            let len = n - k.unsigned_abs() as usize;
            m.set_diagonal(k, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        }
        m
    }

    #[test]
    fn norm_examples() {
        let id = DiagMatrix::identity(5);
        for s in [0.0, 0.5, 3.0] {
            assert_eq!(norm_s(&id, s), 1.0);
        }
        let mut a = DiagMatrix::zeros(6);
        a.set_diagonal(3, vec![0.5, -2.0, 1.0]).unwrap();
        assert!((norm_s(&a, 1.0) - 2.0 * 3f64.exp()).abs() < 1e-12);
        assert!(a.set_diagonal(6, vec![]).is_err());
        assert!(a.set_diagonal(2, vec![1.0]).is_err());
    }

    #[test]
    fn unit_shift_times_diagonal() {
        let mut shift = DiagMatrix::zeros(3);
        shift.set_diagonal(1, vec![1.0, 1.0]).unwrap();
        let b = DiagMatrix::from_diagonal(vec![2.0, 3.0, 5.0]);
        let z = diag_product(&shift, &b).unwrap();
        assert_eq!(z.diagonal(1), Some(&[3.0, 5.0][..]));
        assert_eq!(z.to_dense(), dense_mul(&shift.to_dense(), &b.to_dense()));
        assert_eq!(z.offsets().collect::<Vec<_>>(), vec![1]);
        let id = DiagMatrix::identity(3);
        assert_eq!(diag_product(&shift, &id).unwrap().to_dense(), shift.to_dense());
        assert!(diag_product(&shift, &DiagMatrix::identity(4)).is_err());
    }

    #[test]
    fn product_matches_dense_on_random_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = banded(&mut rng, 64, -3, 2);
            let b = banded(&mut rng, 64, -1, 4);
            let z = diag_product(&a, &b).unwrap();
            assert!(max_diff(&z.to_dense(), &dense_mul(&a.to_dense(), &b.to_dense())) < 1e-12);
        }
    }

    #[test]
    fn conjugation_of_diagonal_is_exact() {
        let h = DiagMatrix::from_diagonal(vec![1.0, -2.0, 0.5]);
        assert_eq!(conjugation_residual(&h, &DiagMatrix::identity(3), &h).unwrap(), 0.0);
    }

    #[test]
    fn decay_profile_fit() {
        assert_eq!(diagonal_decay_profile(&DiagMatrix::identity(4), 1e-12).profile, vec![(0, 1.0)]);
        assert!(diagonal_decay_profile(&DiagMatrix::identity(4), 1e-12).fit.is_none());
        let n = 12;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| (-2.0 * (i as f64 - j as f64).abs()).exp()).collect()).collect();
        let p = diagonal_decay_profile(&DiagMatrix::from_dense(&rows), 1e-12);
        let fit = p.fit.unwrap();
        assert!((fit.r - 2.0).abs() < 1e-9 && (fit.c - 1.0).abs() < 1e-9);
        let mut out = Vec::new();
        write_profile_csv(&mut out, &p).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("k,supnorm\n-11,"));
    }

    #[test]
    fn translation_is_index_shift() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| (10 * i + j) as f64).collect()).collect();
        let m = DiagMatrix::from_dense(&rows).translated(2);
        assert_eq!(m.get(0, 1), 23.0);
        assert_eq!(m.get(3, 1), 0.0);
    }

    #[test]
    fn shift_covariance_rejects_large_shift() {
        let h = DiagMatrix::identity(10);
        assert!(shift_covariance_residual(&h, &h, &h, 4, 3).is_err());
        assert!(shift_covariance_residual(&h, &h, &h, 0, 5).is_err());
        assert_eq!(shift_covariance_residual(&h, &h, &h, 2, 3).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn dense_round_trip(seed in 0u64..1000, n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| if rng.gen_bool(0.4) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect()).collect();
            prop_assert_eq!(DiagMatrix::from_dense(&rows).to_dense(), rows);
        }

        #[test]
        fn norm_monotone_in_s(seed in 0u64..500, s in 0.0f64..3.0, ds in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = banded(&mut rng, 16, -4, 4);
            prop_assert!(norm_s(&a, s) <= norm_s(&a, s + ds));
        }

        #[test]
        fn sup_diagonal_norm_submultiplicative(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = banded(&mut rng, 24, -2, 3);
            let b = banded(&mut rng, 24, -3, 1);
            let bands = a.offsets().count() as f64;
            let ab = diag_product(&a, &b).unwrap();
            prop_assert!(norm_s(&ab, 0.0) <= bands * norm_s(&a, 0.0) * norm_s(&b, 0.0) + 1e-12);
        }
    }
}
