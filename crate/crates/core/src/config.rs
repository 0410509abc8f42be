//! Run configuration shared by the command-line tools, and the per-point
//! computations behind `sweep`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hull::{condition_a, FrequencyChain, GroupElement};
use crate::locreport::{dynloc_kernel, dynloc_report, ule_report};
use crate::sampling::{DistalGenerator, LimitPeriodicSeries, PoeschelExample};
use crate::specops::{build_window, eigensystem, run_dressing, DressingConfig, Form, OperatorWindow};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GeneratorKind {
    Lemma44,
    Poeschel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub elements: Vec<u128>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub chain: ChainSpec,
    pub m: u32,
    pub generator: GeneratorKind,
    pub eps: Vec<f64>,
    pub sizes: Vec<usize>,
    pub shifts: Vec<i64>,
    pub offset: i64,
    pub k_layers: usize,
    pub poeschel_depth: u32,
    pub tol: f64,
    pub floor: f64,
    /// Defaults to `N / 8`.
    pub interior_margin: Option<usize>,
    pub max_iter: usize,
    pub output_dir: String,
    pub exact: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            chain: ChainSpec { elements: vec![2, 8, 512], pattern: Some("cube".into()) },
            m: 2,
            generator: GeneratorKind::Lemma44,
            eps: vec![0.2, 0.1, 0.05],
            sizes: vec![128],
            shifts: vec![0],
            offset: 0,
            k_layers: 3,
            poeschel_depth: 40,
            tol: 1e-8,
            floor: 1e-12,
            interior_margin: None,
            max_iter: 100,
            output_dir: "out".into(),
            exact: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() || self.sizes.is_empty() || self.shifts.is_empty() {
            return Err(Error::InvalidInput("eps, sizes and shifts must be nonempty".into()));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::InvalidInput(format!("coupling {e} is not a finite nonnegative number")));
        }
        if let Some(n) = self.sizes.iter().find(|n| **n < 2) {
            return Err(Error::InvalidInput(format!("window size {n} is below 2")));
        }
        if !(self.tol > 0.0 && self.floor > 0.0) {
            return Err(Error::InvalidInput("tol and floor must be positive".into()));
        }
        if self.k_layers == 0 || self.max_iter == 0 {
            return Err(Error::InvalidInput("k_layers and max_iter must be positive".into()));
        }
        if self.generator == GeneratorKind::Lemma44 {
            let ca = condition_a(&self.chain()?)?;
            if !ca.holds {
                return Err(Error::InvalidChain("chain fails condition A".into()));
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form, with
    /// the output directory left out.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { output_dir: String::new(), ..self.clone() };
        let digest = Sha256::digest(canonical.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// One-line provenance header for CSV outputs.
    pub fn csv_header(&self) -> String {
        format!("# ule-lab {VERSION} config {}", self.hash())
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({ "version": VERSION, "config_hash": self.hash() })
    }

    pub fn chain(&self) -> Result<FrequencyChain> {
        FrequencyChain::from_parts(self.chain.elements.clone(), self.chain.pattern.as_deref())
    }

    pub fn margin(&self, n: usize) -> usize {
        self.interior_margin.unwrap_or(n / 8)
    }

    /// Layer count used when sampling the potential.
    pub fn layers(&self) -> usize {
        match self.generator {
            GeneratorKind::Lemma44 => self.k_layers,
            GeneratorKind::Poeschel => self.poeschel_depth as usize,
        }
    }

    pub fn generator(&self) -> Result<DistalGenerator> {
        let g = DistalGenerator::new(&self.chain()?, self.m)?;
        Ok(if self.exact { g } else { g.floating() })
    }

    pub fn series(&self) -> Result<LimitPeriodicSeries> {
        match self.generator {
            GeneratorKind::Lemma44 => self.generator()?.to_series(self.k_layers),
            GeneratorKind::Poeschel => Ok(PoeschelExample::new(self.poeschel_depth)?.to_series()),
        }
    }

    /// Window of `n` sites at the configured offset for the phase `T^t(e)`.
    pub fn window(&self, series: &LimitPeriodicSeries, eps: f64, n: usize, t: i64, form: Form) -> Result<OperatorWindow> {
        let g = GroupElement::orbit_point(series.chain().clone(), t as i128);
        build_window(series, &g, self.offset, n, eps, form, self.layers())
    }

    pub fn dressing(&self, n: usize) -> DressingConfig {
        DressingConfig::new(self.tol, self.max_iter, self.margin(n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub n: usize,
    pub t: i64,
    pub uniform_c: f64,
    pub uniform_r: f64,
    pub kernel_c: f64,
    pub kernel_r: f64,
    pub max_mismatch: f64,
    pub iters: usize,
}

/// Localization constants of the undressed window and the outcome of the
/// dressing iteration at one grid point.
pub fn sweep_point(cfg: &RunConfig, series: &LimitPeriodicSeries, eps: f64, n: usize, t: i64) -> Result<SweepRow> {
    let w = cfg.window(series, eps, n, t, Form::Poeschel)?;
    let e = eigensystem(&w)?;
    let ule = ule_report(&e, cfg.floor);
    let kernel = dynloc_kernel(&e);
    let dl = dynloc_report(&e, &kernel, cfg.floor, &[], 0..0);
    let dressing = run_dressing(w.offset, &w.diagonal, eps, &cfg.dressing(n))?;
    Ok(SweepRow {
        eps,
        n,
        t,
        uniform_c: ule.uniform_c,
        uniform_r: ule.uniform_r,
        kernel_c: dl.kernel_c,
        kernel_r: dl.kernel_r,
        max_mismatch: dressing.final_mismatch,
        iters: dressing.iterations,
    })
}

/// All grid points in `(ε, N, t)` order.
pub fn sweep_grid(cfg: &RunConfig) -> Vec<(f64, usize, i64)> {
    let mut eps = cfg.eps.clone();
    eps.sort_by(f64::total_cmp);
    let mut sizes = cfg.sizes.clone();
    sizes.sort_unstable();
    let mut shifts = cfg.shifts.clone();
    shifts.sort_unstable();
    let mut grid = Vec::new();
    for &e in &eps {
        for &n in &sizes {
            for &t in &shifts {
                grid.push((e, n, t));
            }
        }
    }
    grid.dedup();
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(RunConfig::from_json("{}").unwrap(), cfg);
        assert_eq!(cfg.hash().len(), 16);
        assert_eq!(cfg.margin(128), 16);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(RunConfig::from_json("{\"bogus\": 1}"), Err(Error::Parse(_))));
        assert!(RunConfig::from_json("{\"eps\": []}").is_err());
        assert!(RunConfig::from_json("{\"tol\": 0}").is_err());
        assert!(RunConfig::from_json("{\"sizes\": [1]}").is_err());
        assert!(RunConfig::from_json("{\"chain\": {\"elements\": [2, 5]}}").is_err());
        assert!(RunConfig::from_json("{\"generator\": \"POESCHEL\", \"chain\": {\"elements\": [3]}}").is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { tol: 1e-9, ..RunConfig::default() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), RunConfig { output_dir: "elsewhere".into(), ..RunConfig::default() }.hash());
        assert!(a.csv_header().starts_with("# ule-lab "));
    }

    #[test]
    fn grid_is_sorted() {
        let cfg = RunConfig { eps: vec![0.2, 0.05, 0.1], shifts: vec![3, 0], ..RunConfig::default() };
        let grid = sweep_grid(&cfg);
        assert_eq!(grid.first(), Some(&(0.05, 128, 0)));
        assert_eq!(grid.len(), 6);
    }

    #[test]
    fn sweep_rates_increase_as_coupling_drops() {
        let cfg = RunConfig { sizes: vec![64], ..RunConfig::default() };
        let series = cfg.series().unwrap();
        let rows: Vec<SweepRow> =
            sweep_grid(&cfg).into_iter().map(|(e, n, t)| sweep_point(&cfg, &series, e, n, t).unwrap()).collect();
        assert!(rows[0].uniform_r > rows[1].uniform_r && rows[1].uniform_r > rows[2].uniform_r);
    }
}
