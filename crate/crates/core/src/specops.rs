//! Finite windows of the Schrödinger operator `εΔ + d`, their
//! eigendecomposition, center-based eigenvalue matching, and the numerical
//! dressing of the diagonal.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagalg::DiagMatrix;
use crate::error::{Error, Result};
use crate::hull::GroupElement;
use crate::locreport::localization_center;
use crate::sampling::{evaluate_at, LimitPeriodicSeries};
use crate::tridiag::tridiagonal_eigen;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Form {
    /// Hopping `ε`, diagonal `d`.
    Poeschel,
    /// Hopping 1, diagonal `d / ε`.
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatorWindow {
    pub offset: i64,
    pub diagonal: Vec<f64>,
    pub hopping: f64,
    pub form: Form,
    pub epsilon: f64,
}

impl OperatorWindow {
    /// Window with an explicit diagonal and hopping, in POESCHEL form.
    pub fn from_diagonal(offset: i64, diagonal: Vec<f64>, hopping: f64) -> Self {
        Self { offset, diagonal, hopping, form: Form::Poeschel, epsilon: hopping }
    }

    /// Builds the window for potential values `d` at coupling `ε`.
    pub fn from_values(offset: i64, d: &[f64], epsilon: f64, form: Form) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("coupling must be finite and nonnegative, got {epsilon}")));
        }
        match form {
            Form::Poeschel => Ok(Self { offset, diagonal: d.to_vec(), hopping: epsilon, form, epsilon }),
            Form::Standard if epsilon == 0.0 => {
                Err(Error::InvalidInput("STANDARD form needs a positive coupling".into()))
            }
            Form::Standard => Ok(Self {
                offset,
                diagonal: d.iter().map(|x| x / epsilon).collect(),
                hopping: 1.0,
                form,
                epsilon,
            }),
        }
    }

    pub fn size(&self) -> usize {
        self.diagonal.len()
    }

    pub fn to_diag_matrix(&self) -> DiagMatrix {
        DiagMatrix::tridiagonal(&self.diagonal, self.hopping)
    }

    /// Scale entering the residual tolerance: `‖diag‖_∞ + 2·hopping`.
    pub fn scale(&self) -> f64 {
        self.diagonal.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 2.0 * self.hopping.abs()
    }
}

/// Samples `series` along the orbit of `g` at sites `a, ..., a + N - 1`.
pub fn build_window(
    series: &LimitPeriodicSeries,
    g: &GroupElement,
    a: i64,
    n: usize,
    epsilon: f64,
    form: Form,
    k_layers: usize,
) -> Result<OperatorWindow> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("window size must be at least 2, got {n}")));
    }
    let values = (0..n as i64)
        .map(|j| evaluate_at(series, g, (a + j) as i128, k_layers))
        .collect::<Result<Vec<f64>>>()?;
    OperatorWindow::from_values(a, &values, epsilon, form)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenSystem {
    pub offset: i64,
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub centers: Vec<usize>,
    pub residual_bound: f64,
}

impl EigenSystem {
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `max |⟨v_i, v_j⟩ - δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        (0..self.size())
            .into_par_iter()
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        let dot: f64 = self.vectors[i].iter().zip(&self.vectors[j]).map(|(a, b)| a * b).sum();
                        (dot - if i == j { 1.0 } else { 0.0 }).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Matrix `V` with the eigenvectors as columns.
    pub fn vector_matrix(&self) -> DiagMatrix {
        DiagMatrix::from_columns(&self.vectors)
    }

    pub fn value_matrix(&self) -> DiagMatrix {
        DiagMatrix::from_diagonal(self.eigenvalues.clone())
    }
}

fn residual(w: &OperatorWindow, lambda: f64, v: &[f64]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut hv = w.diagonal[i] * v[i];
            if i > 0 {
                hv += w.hopping * v[i - 1];
            }
            if i + 1 < n {
                hv += w.hopping * v[i + 1];
            }
            (hv - lambda * v[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Full eigendecomposition, eigenvalues ascending, each vector's
/// largest-magnitude entry positive.
pub fn eigensystem(w: &OperatorWindow) -> Result<EigenSystem> {
    let n = w.size();
    let off = vec![w.hopping; n.saturating_sub(1)];
    let eig = tridiagonal_eigen(&w.diagonal, &off)?;
    let centers = eig.vectors.iter().map(|v| localization_center(v)).collect::<Result<Vec<_>>>()?;
    let residual_bound = eig
        .values
        .iter()
        .zip(&eig.vectors)
        .map(|(lam, v)| residual(w, *lam, v))
        .fold(0.0, f64::max);
    Ok(EigenSystem { offset: w.offset, eigenvalues: eig.values, vectors: eig.vectors, centers, residual_bound })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SiteMatch {
    pub vector: usize,
    pub eigenvalue: f64,
    pub mismatch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Collision {
    pub site: usize,
    pub vectors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchReport {
    pub per_site: Vec<Option<SiteMatch>>,
    pub interior_margin: usize,
    pub max_mismatch: f64,
    pub max_interior_mismatch: f64,
    pub unmatched_interior: usize,
    pub collisions: Vec<Collision>,
}

impl MatchReport {
    pub fn is_interior(&self, site: usize) -> bool {
        site >= self.interior_margin && site + self.interior_margin < self.per_site.len()
    }
}

/// Pairs each eigenvector with the target at its localization center. When
/// several vectors share a center the one with the largest weight there wins
/// and the collision is recorded.
pub fn match_eigenvalues(e: &EigenSystem, targets: &[f64], interior_margin: usize) -> Result<MatchReport> {
    let n = e.size();
    if targets.len() != n {
        return Err(Error::InvalidInput(format!("{} targets for a window of {n}", targets.len())));
    }
    let mut by_site: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &c) in e.centers.iter().enumerate() {
        by_site.entry(c).or_default().push(k);
    }
    let mut per_site = vec![None; n];
    let mut collisions = Vec::new();
    for (site, vectors) in by_site {
        let mut best = vectors[0];
        for &k in &vectors[1..] {
            if e.vectors[k][site].abs() > e.vectors[best][site].abs() {
                best = k;
            }
        }
        let lambda = e.eigenvalues[best];
        per_site[site] = Some(SiteMatch { vector: best, eigenvalue: lambda, mismatch: (lambda - targets[site]).abs() });
        if vectors.len() > 1 {
            collisions.push(Collision { site, vectors });
        }
    }
    let mut report = MatchReport {
        per_site,
        interior_margin,
        max_mismatch: 0.0,
        max_interior_mismatch: 0.0,
        unmatched_interior: 0,
        collisions,
    };
    for site in 0..n {
        let interior = report.is_interior(site);
        match report.per_site[site] {
            Some(m) => {
                report.max_mismatch = report.max_mismatch.max(m.mismatch);
                if interior {
                    report.max_interior_mismatch = report.max_interior_mismatch.max(m.mismatch);
                }
            }
            None if interior => report.unmatched_interior += 1,
            None => {}
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DressingConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub interior_margin: usize,
    pub damping: f64,
    /// Starting diagonal in STANDARD scaling; defaults to `d / ε`.
    pub initial: Option<Vec<f64>>,
}

impl DressingConfig {
    pub fn new(tol: f64, max_iter: usize, interior_margin: usize) -> Self {
        Self { tol, max_iter, interior_margin, damping: 1.0, initial: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub interior_mismatch: f64,
    pub unmatched_interior: usize,
    pub collisions: usize,
    pub damping: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dressing {
    pub offset: i64,
    pub epsilon: f64,
    /// Dressed diagonal in POESCHEL scaling (`ε p`).
    pub dressed: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_mismatch: f64,
    pub trace: Vec<TraceStep>,
}

impl Dressing {
    /// The STANDARD-scaled diagonal `p`.
    pub fn standard(&self) -> Vec<f64> {
        self.dressed.iter().map(|x| x / self.epsilon).collect()
    }

    pub fn window(&self) -> OperatorWindow {
        if self.epsilon == 0.0 {
            OperatorWindow::from_diagonal(self.offset, self.dressed.clone(), 0.0)
        } else {
            OperatorWindow { offset: self.offset, diagonal: self.standard(), hopping: 1.0, form: Form::Standard, epsilon: self.epsilon }
        }
    }
}

/// Runs the damped fixed point `p ← p + θ (d/ε - λ∘match)` in STANDARD form
/// and returns the final state whether or not it met `tol`.
pub fn run_dressing(offset: i64, d: &[f64], epsilon: f64, cfg: &DressingConfig) -> Result<Dressing> {
    if d.len() < 2 {
        return Err(Error::InvalidInput(format!("window size must be at least 2, got {}", d.len())));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) || !(cfg.tol > 0.0) || !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::InvalidInput("coupling, tolerance or damping out of range".into()));
    }
    if epsilon == 0.0 {
        return Ok(Dressing {
            offset,
            epsilon,
            dressed: d.to_vec(),
            iterations: 0,
            converged: true,
            final_mismatch: 0.0,
            trace: vec![],
        });
    }
    let targets: Vec<f64> = d.iter().map(|x| x / epsilon).collect();
    let mut p = match &cfg.initial {
        Some(init) if init.len() == d.len() => init.clone(),
        Some(init) => {
            return Err(Error::InvalidInput(format!("initial guess has {} entries, expected {}", init.len(), d.len())))
        }
        None => targets.clone(),
    };
    let mut damping = cfg.damping;
    let mut previous = f64::INFINITY;
    let mut trace = Vec::new();
    let mut step = 0;
    loop {
        let w = OperatorWindow { offset, diagonal: p.clone(), hopping: 1.0, form: Form::Standard, epsilon };
        let e = eigensystem(&w)?;
        let m = match_eigenvalues(&e, &targets, cfg.interior_margin)?;
        let mismatch = m.max_interior_mismatch;
        if mismatch > previous {
            damping = (damping * 0.5).max(1.0 / 1024.0);
        }
        trace.push(TraceStep {
            step,
            interior_mismatch: mismatch,
            unmatched_interior: m.unmatched_interior,
            collisions: m.collisions.len(),
            damping,
        });
        let converged = m.unmatched_interior == 0 && mismatch <= cfg.tol;
        if converged || step == cfg.max_iter {
            return Ok(Dressing {
                offset,
                epsilon,
                dressed: p.iter().map(|x| x * epsilon).collect(),
                iterations: step,
                converged,
                final_mismatch: mismatch,
                trace,
            });
        }
        previous = mismatch;
        for (site, slot) in m.per_site.iter().enumerate() {
            if let Some(sm) = slot {
                p[site] += damping * (targets[site] - sm.eigenvalue);
            }
        }
        step += 1;
    }
}

/// Like [`run_dressing`] but fails when `tol` is not met within `max_iter`.
pub fn construct_dressed_potential(offset: i64, d: &[f64], epsilon: f64, cfg: &DressingConfig) -> Result<Dressing> {
    let out = run_dressing(offset, d, epsilon, cfg)?;
    if out.converged {
        return Ok(out);
    }
    match out.trace.last() {
        Some(last) if last.unmatched_interior > 0 => Err(Error::CenterCollision(last.unmatched_interior)),
        _ => Err(Error::DressingNotConverged { iterations: out.iterations, mismatch: out.final_mismatch }),
    }
}

/// `max |ε p_i - d_i|` over sites at distance `≥ margin` from both edges.
pub fn dressed_deviation(p: &[f64], d: &[f64], epsilon: f64, margin: usize) -> f64 {
    let n = p.len().min(d.len());
    (margin..n.saturating_sub(margin)).map(|i| (epsilon * p[i] - d[i]).abs()).fold(0.0, f64::max)
}

/// CSV `index,eigenvalue,center,fitted_rate`; centers are lattice sites.
pub fn write_eigensystem_csv<W: Write>(mut w: W, e: &EigenSystem, rates: &[f64]) -> std::io::Result<()> {
    writeln!(w, "index,eigenvalue,center,fitted_rate")?;
    for (k, lam) in e.eigenvalues.iter().enumerate() {
        let rate = rates.get(k).copied().unwrap_or(f64::NAN);
        writeln!(w, "{k},{lam},{},{rate}", e.offset + e.centers[k] as i64)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VectorsDoc<'a> {
    offset: i64,
    eigenvalues: &'a [f64],
    vectors: &'a [Vec<f64>],
}

/// Full eigenvectors as JSON.
pub fn eigenvectors_json(e: &EigenSystem) -> String {
    serde_json::to_string(&VectorsDoc { offset: e.offset, eigenvalues: &e.eigenvalues, vectors: &e.vectors })
        .expect("plain floats serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hull::{FrequencyChain, GroupElement};
    use crate::sampling::{DistalGenerator, PoeschelExample};

    fn generator() -> DistalGenerator {
        let chain = FrequencyChain::from_parts(vec![2, 8, 512], Some("cube")).unwrap();
        DistalGenerator::new(&chain, 2).unwrap()
    }

    fn window(gen: &DistalGenerator, t: i128, a: i64, n: usize, eps: f64, form: Form) -> OperatorWindow {
        let series = gen.to_series(3).unwrap();
        let g = GroupElement::orbit_point(series.chain().clone(), t);
        build_window(&series, &g, a, n, eps, form, 3).unwrap()
    }

    #[test]
    fn two_site_window() {
        let w = OperatorWindow::from_values(0, &[0.0, 1.0], 0.1, Form::Poeschel).unwrap();
        assert_eq!(w.to_diag_matrix().to_dense(), vec![vec![0.0, 0.1], vec![0.1, 1.0]]);
        let e = eigensystem(&w).unwrap();
        let root = 1.04f64.sqrt();
        assert!((e.eigenvalues[0] - (1.0 - root) / 2.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - (1.0 + root) / 2.0).abs() < 1e-14);
        assert!(OperatorWindow::from_values(0, &[0.0, 1.0], 0.0, Form::Standard).is_err());
    }

    #[test]
    fn shift_covariance_of_windows() {
        let gen = generator();
        for t in [1i128, 5, 77] {
            let shifted = window(&gen, t, 3, 64, 0.05, Form::Standard);
            let moved = window(&gen, 0, 3 + t as i64, 64, 0.05, Form::Standard);
            assert_eq!(shifted.diagonal, moved.diagonal);
        }
        let diag = window(&gen, 0, 0, 16, 0.0, Form::Poeschel);
        assert_eq!(diag.to_diag_matrix().offsets().collect::<Vec<_>>(), vec![0]);
        let series = gen.to_series(3).unwrap();
        let g = GroupElement::identity(series.chain().clone());
        assert!(build_window(&series, &g, 0, 1, 0.1, Form::Poeschel, 3).is_err());
        assert!(build_window(&series, &g, 0, 8, 0.0, Form::Standard, 3).is_err());
    }

    #[test]
    fn zero_coupling_spectrum() {
        let d = [0.4, -0.2, 0.9, 0.1];
        let e = eigensystem(&OperatorWindow::from_values(0, &d, 0.0, Form::Poeschel).unwrap()).unwrap();
        assert_eq!(e.eigenvalues, vec![-0.2, 0.1, 0.4, 0.9]);
        assert_eq!(e.centers, vec![1, 3, 0, 2]);
        let m = match_eigenvalues(&e, &d, 0).unwrap();
        assert!(m.per_site.iter().all(|s| s.unwrap().mismatch == 0.0));
        assert!(match_eigenvalues(&e, &d[..3], 0).is_err());
    }

    #[test]
    fn invariants_trace_and_frobenius() {
        let gen = generator();
        for eps in [0.0, 0.05, 0.2, 1.0] {
            let w = window(&gen, 0, 0, 128, eps, Form::Poeschel);
            let e = eigensystem(&w).unwrap();
            assert!(e.orthonormality_defect() <= 1e-10);
            assert!(e.residual_bound <= 1e-10 * w.scale());
            let trace: f64 = w.diagonal.iter().sum();
            let sum: f64 = e.eigenvalues.iter().sum();
            assert!((sum - trace).abs() <= 1e-9 * trace.abs().max(1.0));
            let frob: f64 = w.diagonal.iter().map(|x| x * x).sum::<f64>() + 2.0 * 127.0 * eps * eps;
            let sq: f64 = e.eigenvalues.iter().map(|x| x * x).sum();
            assert!((sq - frob).abs() <= 1e-9 * frob);
            assert!(e.eigenvalues.windows(2).all(|p| p[0] <= p[1]));
        }
    }

    #[test]
    fn interior_margin_excludes_edges() {
        let d: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let e = EigenSystem {
            offset: 0,
            eigenvalues: d.iter().map(|x| x + if *x == 0.0 { 5.0 } else { 0.0 }).collect(),
            vectors: (0..20)
                .map(|i| {
                    let mut v = vec![0.0; 20];
                    v[i] = 1.0;
                    v
                })
                .collect(),
            centers: (0..20).collect(),
            residual_bound: 0.0,
        };
        let m = match_eigenvalues(&e, &d, 2).unwrap();
        assert_eq!(m.max_mismatch, 5.0);
        assert_eq!(m.max_interior_mismatch, 0.0);
    }

    #[test]
    fn collisions_are_reported() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let e = EigenSystem {
            offset: 0,
            eigenvalues: vec![-1.0, 1.0, 2.0],
            vectors: vec![vec![s, -s, 0.0], vec![s, s, 0.0], vec![0.0, 0.0, 1.0]],
            centers: vec![0, 0, 2],
            residual_bound: 0.0,
        };
        let m = match_eigenvalues(&e, &[0.0, 0.0, 2.0], 0).unwrap();
        assert_eq!(m.collisions, vec![Collision { site: 0, vectors: vec![0, 1] }]);
        assert!(m.per_site[1].is_none());
    }

    #[test]
    fn zero_coupling_dressing_is_identity() {
        let d = vec![0.1, 0.5, 0.3];
        let out = construct_dressed_potential(0, &d, 0.0, &DressingConfig::new(1e-8, 10, 0)).unwrap();
        assert_eq!(out.dressed, d);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn dressing_converges_and_is_idempotent() {
        let gen = generator();
        let d = window(&gen, 0, 0, 128, 0.05, Form::Poeschel).diagonal;
        let cfg = DressingConfig::new(1e-8, 100, 16);
        let out = construct_dressed_potential(0, &d, 0.05, &cfg).unwrap();
        let p = out.standard();
        let e = eigensystem(&out.window()).unwrap();
        let targets: Vec<f64> = d.iter().map(|x| x / 0.05).collect();
        let m = match_eigenvalues(&e, &targets, 16).unwrap();
        assert!(m.max_interior_mismatch <= 1e-8 && m.unmatched_interior == 0);
        let dev = dressed_deviation(&p, &d, 0.05, 16);
        assert!(dev > 0.0 && dev <= dressed_deviation(&p, &d, 0.05, 0));
        assert_eq!(dressed_deviation(&targets, &d, 0.05, 0), 0.0);

        let again = DressingConfig { initial: Some(p), ..cfg };
        assert!(run_dressing(0, &d, 0.05, &again).unwrap().iterations <= 1);
    }

    #[test]
    fn poeschel_spectrum_fills_unit_interval() {
        let ex = PoeschelExample::new(40).unwrap();
        let series = ex.to_series();
        let g = GroupElement::identity(series.chain().clone());
        let eps = 0.05;
        let mut gaps = Vec::new();
        for n in [128usize, 256, 512] {
            let w = build_window(&series, &g, 0, n, eps, Form::Standard, 40).unwrap();
            let d: Vec<f64> = w.diagonal.iter().map(|x| x * eps).collect();
            let e = eigensystem(&w).unwrap();
            let targets = w.diagonal.clone();
            let m = match_eigenvalues(&e, &targets, n / 8).unwrap();
            let mut pts: Vec<f64> = (0..n)
                .filter(|&s| m.is_interior(s))
                .filter_map(|s| m.per_site[s])
                .map(|sm| sm.eigenvalue * eps)
                .collect();
            assert!(d.iter().all(|x| (0.0..=1.0).contains(x)));
            pts.retain(|x| (0.0..=1.0).contains(x));
            pts.extend([0.0, 1.0]);
            pts.sort_by(f64::total_cmp);
            gaps.push(pts.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max));
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn csv_and_json_exports() {
        let e = eigensystem(&OperatorWindow::from_values(10, &[0.0, 1.0], 0.0, Form::Poeschel).unwrap()).unwrap();
        let mut out = Vec::new();
        write_eigensystem_csv(&mut out, &e, &[50.0, 50.0]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "index,eigenvalue,center,fitted_rate\n0,0,10,50\n1,1,11,50\n");
        assert!(eigenvectors_json(&e).contains("\"vectors\":[[1.0,0.0],[0.0,1.0]]"));
    }
}
