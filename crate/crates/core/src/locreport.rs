//! Localization diagnostics: per-eigenvector exponential envelopes, the
//! uniform pair `(c, r)`, and the dominating dynamical kernel
//! `A(n, m) = Σ_k |u_k(n)| |u_k(m)|`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagalg::log_linear_fit;
use crate::error::{Error, Result};
use crate::specops::EigenSystem;

/// Sentinel rate for vectors with too little off-center mass above the floor.
pub const RATE_CAP: f64 = 50.0;
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Index of the largest `|u(n)|`, leftmost on ties.
pub fn localization_center(u: &[f64]) -> Result<usize> {
    let mut best = 0;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u.get(best).map_or(true, |x| *x == 0.0) {
        return Err(Error::InvalidInput("zero vector has no localization center".into()));
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub c: f64,
    pub r: f64,
    pub capped: bool,
    pub points: usize,
}

/// Smallest `c` with `|u(n)| ≤ c e^{-r|n - center|}` at every site above `floor`.
fn envelope_constant(u: &[f64], center: usize, r: f64, floor: f64) -> f64 {
    u.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > floor)
        .map(|(n, x)| x.abs() * (r * n.abs_diff(center) as f64).exp())
        .fold(0.0, f64::max)
}

/// Least-squares line through `(|n - center|, ln|u(n)|)` over entries above
/// `floor`; `c` is the certified envelope constant for the fitted rate.
pub fn fit_decay(u: &[f64], center: usize, floor: f64) -> DecayFit {
    let points: Vec<(f64, f64)> = u
        .iter()
        .enumerate()
        .filter(|(n, x)| *n != center && x.abs() > floor)
        .map(|(n, x)| (n.abs_diff(center) as f64, x.abs()))
        .collect();
    let (r, capped) = match log_linear_fit(&points) {
        Ok(fit) if fit.r.is_finite() => (fit.r.min(RATE_CAP), fit.r >= RATE_CAP),
        _ => (RATE_CAP, true),
    };
    DecayFit { c: envelope_constant(u, center, r, floor), r, capped, points: points.len() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorRecord {
    pub index: usize,
    pub center: usize,
    pub c: f64,
    pub r: f64,
    pub capped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UleReport {
    pub uniform_c: f64,
    pub uniform_r: f64,
    pub floor: f64,
    pub per_vector: Vec<VectorRecord>,
    pub capped_count: usize,
    pub offset: i64,
    pub size: usize,
}

/// Fits every eigenvector and forms the uniform pair: `r` is the minimum
/// over uncapped vectors, `c` the envelope constant for that `r` over all
/// vectors and all sites above the floor.
pub fn ule_report(e: &EigenSystem, floor: f64) -> UleReport {
    let per_vector: Vec<VectorRecord> = e
        .vectors
        .par_iter()
        .zip(e.centers.par_iter())
        .enumerate()
        .map(|(index, (u, &center))| {
            let fit = fit_decay(u, center, floor);
            VectorRecord { index, center, c: fit.c, r: fit.r, capped: fit.capped }
        })
        .collect();
    let capped_count = per_vector.iter().filter(|v| v.capped).count();
    let uniform_r = per_vector.iter().filter(|v| !v.capped).map(|v| v.r).fold(RATE_CAP, f64::min);
    let uniform_c = e
        .vectors
        .par_iter()
        .zip(e.centers.par_iter())
        .map(|(u, &m)| envelope_constant(u, m, uniform_r, floor))
        .reduce(|| 0.0, f64::max);
    UleReport { uniform_c, uniform_r, floor, per_vector, capped_count, offset: e.offset, size: e.size() }
}

/// Largest ratio `|u_k(n)| / (c e^{-r|n - m_k|})` over sites above the floor.
pub fn envelope_ratio(e: &EigenSystem, report: &UleReport) -> f64 {
    let (c, r) = (report.uniform_c, report.uniform_r);
    e.vectors
        .iter()
        .zip(&e.centers)
        .flat_map(|(u, &m)| {
            u.iter()
                .enumerate()
                .filter(|(_, x)| x.abs() > report.floor)
                .map(move |(n, x)| x.abs() / (c * (-r * n.abs_diff(m) as f64).exp()))
        })
        .fold(0.0, f64::max)
}

/// Dense symmetric kernel `A(n, m) = Σ_k |u_k(n)| |u_k(m)|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub offset: i64,
    pub n: usize,
    pub values: Vec<f64>,
}

impl Kernel {
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values[n * self.n + m]
    }
}

pub fn dynloc_kernel(e: &EigenSystem) -> Kernel {
    let n = e.size();
    let abs: Vec<Vec<f64>> = e.vectors.iter().map(|u| u.iter().map(|x| x.abs()).collect()).collect();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|row| {
            let abs = &abs;
            (0..n).map(move |col| abs.iter().map(|u| u[row] * u[col]).sum::<f64>())
        })
        .collect();
    Kernel { offset: e.offset, n, values }
}

/// `|⟨δ_n, e^{-itH} δ_m⟩|` from the spectral decomposition.
pub fn evolution_amplitude(e: &EigenSystem, t: f64, n: usize, m: usize) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (lam, u) in e.eigenvalues.iter().zip(&e.vectors) {
        let w = u[n] * u[m];
        let (s, c) = (t * lam).sin_cos();
        re += c * w;
        im -= s * w;
    }
    re.hypot(im)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynLocReport {
    pub kernel_c: f64,
    pub kernel_r: f64,
    pub max_dominance_violation: f64,
    pub max_diagonal_defect: f64,
    pub times: Vec<f64>,
    pub floor: f64,
}

/// Fits `ln max_{|n-m|=δ} A(n, m)` against `δ` over distances above the
/// floor, then certifies `C` as the envelope constant over every entry above
/// the floor. Dominance is spot-checked at `times` on the sites `sample`.
pub fn dynloc_report(
    e: &EigenSystem,
    kernel: &Kernel,
    floor: f64,
    times: &[f64],
    sample: std::ops::Range<usize>,
) -> DynLocReport {
    let n = kernel.n;
    let mut profile = vec![0.0f64; n];
    for row in 0..n {
        for col in 0..n {
            let d = row.abs_diff(col);
            profile[d] = profile[d].max(kernel.get(row, col));
        }
    }
    let points: Vec<(f64, f64)> =
        profile.iter().enumerate().filter(|(_, v)| **v > floor).map(|(d, v)| (d as f64, *v)).collect();
    let kernel_r = match log_linear_fit(&points) {
        Ok(fit) if fit.r.is_finite() => fit.r.min(RATE_CAP),
        _ => RATE_CAP,
    };
    let kernel_c = kernel
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > floor)
        .map(|(idx, v)| v * (kernel_r * (idx / n).abs_diff(idx % n) as f64).exp())
        .fold(0.0, f64::max);
    let sample = sample.start.min(n)..sample.end.min(n);
    let max_dominance_violation = times
        .par_iter()
        .map(|&t| {
            let mut worst = 0.0f64;
            for row in sample.clone() {
                for col in sample.clone() {
                    worst = worst.max(evolution_amplitude(e, t, row, col) - kernel.get(row, col));
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
        .max(0.0);
    let max_diagonal_defect = (0..n).map(|i| (kernel.get(i, i) - 1.0).abs()).fold(0.0, f64::max);
    DynLocReport { kernel_c, kernel_r, max_dominance_violation, max_diagonal_defect, times: times.to_vec(), floor }
}

/// Largest ratio `A(n, m) / (C e^{-r|n - m|})` over entries above the floor.
pub fn kernel_envelope_ratio(kernel: &Kernel, report: &DynLocReport) -> f64 {
    let n = kernel.n;
    kernel
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > report.floor)
        .map(|(idx, v)| v / (report.kernel_c * (-report.kernel_r * (idx / n).abs_diff(idx % n) as f64).exp()))
        .fold(0.0, f64::max)
}

/// CSV `n,m,value` with lattice-site indices.
pub fn write_kernel_csv<W: Write>(mut w: W, kernel: &Kernel) -> std::io::Result<()> {
    writeln!(w, "n,m,value")?;
    for row in 0..kernel.n {
        for col in 0..kernel.n {
            let (a, b) = (kernel.offset + row as i64, kernel.offset + col as i64);
            writeln!(w, "{a},{b},{}", kernel.get(row, col))?;
        }
    }
    Ok(())
}
