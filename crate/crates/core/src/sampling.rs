//! Limit-periodic sequences as sums of periodic layers.
//!
//! Two generators are provided: the sub-chain construction
//! `d_i = Σ_v a_v(i) / (n_{v-1}^2 n_v)` over a chain with
//! `n_k^3 <= n_{k+1} <= n_k^{3m}`, and the dyadic indicator sequence
//! `d_i = Σ_v α_v(i) 2^{-v}`. Both are evaluated in exact rational arithmetic;
//! distality floors near 1e-20 are far below what `f64` can resolve.

use std::io::Write;
use std::ops::Range;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith;
use crate::error::{Error, Result};
use crate::hull::{FrequencyChain, GroupElement};

fn ratio(num: impl Into<BigInt>, den: impl Into<BigInt>) -> BigRational {
    BigRational::new(num.into(), den.into())
}

pub fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Shape of one period of a layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerProfile {
    /// Explicit values at residues `0..period`.
    Table(Vec<BigRational>),
    /// `scale · residue`.
    Ramp { scale: BigRational },
    /// `weight` on residues in `[lo, hi)`, zero elsewhere.
    Indicator { lo: u128, hi: u128, weight: BigRational },
}

/// An `n`-periodic sequence, `p(i) = profile((i + phase) mod n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicLayer {
    period: u128,
    phase: u128,
    profile: LayerProfile,
    scale_f64: f64,
}

impl PeriodicLayer {
    pub fn table(values: Vec<BigRational>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty layer table".into()));
        }
        Ok(Self::build(values.len() as u128, LayerProfile::Table(values)))
    }

    pub fn ramp(period: u128, scale: BigRational) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidInput("period must be positive".into()));
        }
        Ok(Self::build(period, LayerProfile::Ramp { scale }))
    }

    pub fn indicator(period: u128, lo: u128, hi: u128, weight: BigRational) -> Result<Self> {
        if period == 0 || lo > hi || hi > period {
            return Err(Error::InvalidInput(format!("bad indicator [{lo}, {hi}) of period {period}")));
        }
        Ok(Self::build(period, LayerProfile::Indicator { lo, hi, weight }))
    }

    fn build(period: u128, profile: LayerProfile) -> Self {
        let scale_f64 = match &profile {
            LayerProfile::Table(_) => 0.0,
            LayerProfile::Ramp { scale } => to_f64(scale),
            LayerProfile::Indicator { weight, .. } => to_f64(weight),
        };
        Self { period, phase: 0, profile, scale_f64 }
    }

    pub fn period(&self) -> u128 {
        self.period
    }

    pub fn profile(&self) -> &LayerProfile {
        &self.profile
    }

    /// Same layer translated by `t`: `q(i) = p(i + t)`.
    pub fn shifted(&self, t: i128) -> Self {
        let mut out = self.clone();
        out.phase = arith::add_mod(self.phase, arith::residue(t, self.period), self.period);
        out
    }

    fn profile_at(&self, r: u128) -> BigRational {
        match &self.profile {
            LayerProfile::Table(v) => v[r as usize].clone(),
            LayerProfile::Ramp { scale } => scale * BigRational::from_integer(r.into()),
            LayerProfile::Indicator { lo, hi, weight } => {
                if (*lo..*hi).contains(&r) {
                    weight.clone()
                } else {
                    BigRational::zero()
                }
            }
        }
    }

    fn reduce(&self, i: i128) -> u128 {
        arith::add_mod(arith::residue(i, self.period), self.phase, self.period)
    }

    pub fn value_exact(&self, i: i128) -> BigRational {
        self.profile_at(self.reduce(i))
    }

    pub fn value_f64(&self, i: i128) -> f64 {
        let r = self.reduce(i);
        match &self.profile {
            LayerProfile::Table(v) => to_f64(&v[r as usize]),
            LayerProfile::Ramp { .. } => self.scale_f64 * r as f64,
            LayerProfile::Indicator { lo, hi, .. } => {
                if (*lo..*hi).contains(&r) {
                    self.scale_f64
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup_norm(&self) -> BigRational {
        match &self.profile {
            LayerProfile::Table(v) => v.iter().map(|x| x.abs()).max().unwrap_or_else(BigRational::zero),
            LayerProfile::Ramp { scale } => scale.abs() * BigRational::from_integer((self.period - 1).into()),
            LayerProfile::Indicator { lo, hi, weight } => {
                if lo < hi {
                    weight.abs()
                } else {
                    BigRational::zero()
                }
            }
        }
    }

    /// Mean of the layer over `{x ∈ [0, period) : x ≡ i (mod modulus)}`.
    fn class_average(&self, modulus: u128, i: u128) -> BigRational {
        let classes = self.period / modulus;
        let y0 = arith::add_mod(i % modulus, self.phase % modulus, modulus);
        match &self.profile {
            LayerProfile::Ramp { scale } => {
                // arithmetic progression y0, y0 + modulus, ..., mean y0 + (period - modulus)/2
                let mean = ratio(BigInt::from(2 * y0) + BigInt::from(self.period - modulus), 2);
                scale * mean
            }
            LayerProfile::Indicator { lo, hi, weight } => {
                let below = |x: u128| if x > y0 { (x - y0 - 1) / modulus + 1 } else { 0 };
                let count = below(*hi) - below(*lo);
                weight * ratio(count, classes)
            }
            LayerProfile::Table(v) => {
                let sum = (0..classes)
                    .map(|l| v[(y0 + l * modulus) as usize].clone())
                    .fold(BigRational::zero(), |a, b| a + b);
                sum / BigRational::from_integer(classes.into())
            }
        }
    }
}

/// Closed-form bound on the sup-norm of the layers omitted after truncation.
#[derive(Clone, Debug, PartialEq)]
pub enum TailEnvelope {
    /// Finite series: the tail is the sum of the stored layers' sup-norms.
    Finite,
    /// Sub-chain generator: `Σ_{v>k} n_{v-1}^{-2} <= n_k^2 / (n_k^4 - 1)`.
    SubChain,
    /// Dyadic indicator sequence: `Σ_{v>k} 2^{-v} = 2^{-k}`.
    Dyadic,
}

/// `d = Σ_j p_j` with periods forming a divisibility chain.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitPeriodicSeries {
    layers: Vec<PeriodicLayer>,
    chain: FrequencyChain,
    envelope: TailEnvelope,
}

impl LimitPeriodicSeries {
    pub fn new(layers: Vec<PeriodicLayer>) -> Result<Self> {
        let chain = FrequencyChain::new(layers.iter().map(|l| l.period).collect())?;
        Ok(Self { layers, chain, envelope: TailEnvelope::Finite })
    }

    fn with_envelope(mut self, envelope: TailEnvelope) -> Self {
        self.envelope = envelope;
        self
    }

    pub fn layers(&self) -> &[PeriodicLayer] {
        &self.layers
    }

    pub fn chain(&self) -> &FrequencyChain {
        &self.chain
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Bound on `‖d - d^{(k)}‖_∞`.
    pub fn tail_bound(&self, k: usize) -> BigRational {
        match self.envelope {
            TailEnvelope::Finite => self.layers[k.min(self.depth())..]
                .iter()
                .map(|l| l.sup_norm())
                .fold(BigRational::zero(), |a, b| a + b),
            TailEnvelope::SubChain if k == 0 => {
                // n_0 = 1 contributes the leading term
                BigRational::one() + self.tail_bound(1)
            }
            TailEnvelope::SubChain => {
                let n = BigInt::from(self.layers[k - 1].period);
                let n2 = &n * &n;
                BigRational::new(n2.clone(), &n2 * &n2 - 1)
            }
            TailEnvelope::Dyadic => ratio(1, BigInt::one() << k),
        }
    }

    /// Per-layer envelope; `Ok` when every layer respects it.
    pub fn check_envelope(&self) -> Result<()> {
        for (v, layer) in self.layers.iter().enumerate() {
            let bound = match self.envelope {
                TailEnvelope::Finite => continue,
                TailEnvelope::SubChain => {
                    let prev = if v == 0 { 1 } else { self.layers[v - 1].period };
                    ratio(1, BigInt::from(prev) * BigInt::from(prev))
                }
                TailEnvelope::Dyadic => ratio(1, BigInt::one() << (v + 1)),
            };
            if layer.sup_norm() > bound {
                return Err(Error::InvalidInput(format!("layer {} exceeds its envelope", v + 1)));
            }
        }
        Ok(())
    }

    /// Same series translated by `t`.
    pub fn shifted(&self, t: i128) -> Self {
        Self {
            layers: self.layers.iter().map(|l| l.shifted(t)).collect(),
            ..self.clone()
        }
    }

    fn check_layers(&self, k_layers: usize) -> Result<()> {
        if k_layers > self.depth() {
            return Err(Error::InvalidInput(format!(
                "{k_layers} layers requested from a series of depth {}",
                self.depth()
            )));
        }
        Ok(())
    }

    /// `d^{(k)}_i` at the identity.
    pub fn partial_sum_exact(&self, i: i128, k_layers: usize) -> Result<BigRational> {
        self.check_layers(k_layers)?;
        Ok(self.layers[..k_layers].iter().map(|l| l.value_exact(i)).fold(BigRational::zero(), |a, b| a + b))
    }

    pub fn partial_sum_f64(&self, i: i128, k_layers: usize) -> Result<f64> {
        self.check_layers(k_layers)?;
        Ok(self.layers[..k_layers].iter().map(|l| l.value_f64(i)).sum())
    }
}

fn check_compatible(series: &LimitPeriodicSeries, g: &GroupElement, k_layers: usize) -> Result<()> {
    series.check_layers(k_layers)?;
    let periods = &series.chain.elements()[..k_layers];
    match g.chain().elements().get(..k_layers) {
        Some(els) if els == periods => Ok(()),
        _ => Err(Error::ChainMismatch(format!(
            "group element chain {:?} does not match series periods {:?}",
            g.chain().elements(),
            periods
        ))),
    }
}

/// `V_ω(n) = Σ_{j<=k} p_j((n + r_j) mod n_j)` for `ω` with residues `r_j`.
pub fn evaluate_at(series: &LimitPeriodicSeries, g: &GroupElement, n: i128, k_layers: usize) -> Result<f64> {
    check_compatible(series, g, k_layers)?;
    Ok(series.layers[..k_layers]
        .iter()
        .zip(g.residues())
        .map(|(l, &r)| {
            let shift = arith::residue(n, l.period);
            l.value_f64(arith::add_mod(shift, r, l.period) as i128)
        })
        .sum())
}

pub fn evaluate_at_exact(
    series: &LimitPeriodicSeries,
    g: &GroupElement,
    n: i128,
    k_layers: usize,
) -> Result<BigRational> {
    check_compatible(series, g, k_layers)?;
    Ok(series.layers[..k_layers]
        .iter()
        .zip(g.residues())
        .map(|(l, &r)| {
            let shift = arith::residue(n, l.period);
            l.value_exact(arith::add_mod(shift, r, l.period) as i128)
        })
        .fold(BigRational::zero(), |a, b| a + b))
}

/// Largest table produced by a Haar projection.
pub const MAX_TABLE: u128 = 1 << 24;

/// Finite-level Haar projection onto `n_k`-periodic functions: layers above
/// `k` are replaced by their averages over residue classes mod `n_k`.
pub fn haar_average(series: &LimitPeriodicSeries, k: usize) -> Result<PeriodicLayer> {
    if k == 0 || k > series.depth() {
        return Err(Error::InvalidInput(format!("level {k} outside 1..={}", series.depth())));
    }
    let nk = series.layers[k - 1].period;
    if nk > MAX_TABLE {
        return Err(Error::InvalidInput(format!("period {nk} too large to tabulate")));
    }
    let values = (0..nk)
        .into_par_iter()
        .map(|i| {
            let low: BigRational =
                series.layers[..k].iter().map(|l| l.value_exact(i as i128)).fold(BigRational::zero(), |a, b| a + b);
            series.layers[k..].iter().map(|l| l.class_average(nk, i)).fold(low, |a, b| a + b)
        })
        .collect();
    PeriodicLayer::table(values)
}

/// The projection as a one-layer series (period `n_k`).
pub fn haar_project(series: &LimitPeriodicSeries, k: usize) -> Result<LimitPeriodicSeries> {
    LimitPeriodicSeries::new(vec![haar_average(series, k)?])
}

/// `a_v(i)`: representative of `i mod n_v` in `[0, n_v)`.
pub fn a_v(i: i128, n_v: u128) -> u128 {
    arith::residue(i, n_v)
}

/// Value of a sub-chain generator at one index.
#[derive(Clone, Debug, PartialEq)]
pub struct DistalValue {
    pub approx: f64,
    pub exact: Option<BigRational>,
    /// False in floating mode: separations below `f64` resolution are lost.
    pub distality_guaranteed: bool,
}

/// Sub-chain generator `I_0 = {n_k}` with `n_k^3 <= n_{k+1} <= n_k^{3m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistalGenerator {
    /// `n_0 = 1, n_1, n_2, ...`
    nodes: Vec<u128>,
    m: u32,
    exact: bool,
}

/// Upper bound on the number of stored generator levels.
pub const MAX_GENERATOR_DEPTH: usize = 8;

impl DistalGenerator {
    /// Uses `chain` directly as `I_0`, extended by its pattern as far as `u128` allows.
    pub fn new(chain: &FrequencyChain, m: u32) -> Result<Self> {
        let mut els = chain.elements().to_vec();
        let mut c = chain.clone();
        while els.len() < MAX_GENERATOR_DEPTH {
            match c.extended(els.len() + 1) {
                Ok(next) if next.depth() > els.len() => {
                    els = next.elements().to_vec();
                    c = next;
                }
                _ => break,
            }
        }
        Self::from_nodes(&els, m)
    }

    fn from_nodes(els: &[u128], m: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!("m must be at least 2, got {m}")));
        }
        if els.first().map_or(true, |&n| n <= 1) {
            return Err(Error::InvalidChain("generator needs n_1 > 1".into()));
        }
        for w in els.windows(2) {
            let (lo, hi) = (BigUint::from(w[0]), BigUint::from(w[1]));
            if lo.pow(3) > hi || lo.pow(3 * m) < hi {
                return Err(Error::InvalidChain(format!(
                    "{} is outside [{}^3, {}^{}]",
                    w[1],
                    w[0],
                    w[0],
                    3 * m
                )));
            }
            if w[1] % w[0] != 0 {
                return Err(Error::InvalidChain(format!("{} does not divide {}", w[0], w[1])));
            }
        }
        let mut nodes = vec![1u128];
        nodes.extend_from_slice(els);
        Ok(Self { nodes, m, exact: true })
    }

    /// Greedy sub-chain extraction: starting from the first element above 1,
    /// always take the smallest chain element in `[n^3, n^{3m}]`.
    pub fn extract(chain: &FrequencyChain, m: u32, depth: usize) -> Result<Self> {
        if m < 2 || depth == 0 {
            return Err(Error::InvalidInput("extraction needs m >= 2 and depth >= 1".into()));
        }
        let mut source = chain.clone();
        let mut pos = source
            .elements()
            .iter()
            .position(|&n| n > 1)
            .ok_or_else(|| Error::InvalidChain("chain has no element above 1".into()))?;
        let mut picked = vec![source.elements()[pos]];
        while picked.len() < depth.min(MAX_GENERATOR_DEPTH) {
            let n = BigUint::from(*picked.last().unwrap());
            let (lo, hi) = (n.pow(3), n.pow(3 * m));
            let mut found = None;
            let mut j = pos + 1;
            loop {
                if j >= source.depth() {
                    match source.extended(j + 1) {
                        Ok(next) if next.depth() > j => source = next,
                        _ => break,
                    }
                }
                let x = BigUint::from(source.elements()[j]);
                if x > hi {
                    break;
                }
                if x >= lo {
                    found = Some(j);
                    break;
                }
                j += 1;
            }
            match found {
                Some(j) => {
                    picked.push(source.elements()[j]);
                    pos = j;
                }
                None if source.depth() <= j => break,
                None => {
                    return Err(Error::InvalidChain(format!(
                        "no chain element in [{n}^3, {n}^{}]; the chain violates condition A with m = {m}",
                        3 * m
                    )))
                }
            }
        }
        Self::from_nodes(&picked, m)
    }

    /// Switch to floating evaluation.
    pub fn floating(mut self) -> Self {
        self.exact = false;
        self
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Stored levels `n_1, n_2, ...`.
    pub fn levels(&self) -> &[u128] {
        &self.nodes[1..]
    }

    pub fn depth(&self) -> usize {
        self.nodes.len() - 1
    }

    fn check_depth(&self, k: usize) -> Result<()> {
        if k > self.depth() {
            return Err(Error::InvalidInput(format!("{k} layers requested, {} stored", self.depth())));
        }
        Ok(())
    }

    /// Common denominator `n_{k-1}^2 n_k` of the first `k` layers.
    fn denominator(&self, k: usize) -> BigInt {
        if k == 0 {
            return BigInt::one();
        }
        let prev = BigInt::from(self.nodes[k - 1]);
        &prev * &prev * BigInt::from(self.nodes[k])
    }

    /// Numerator of `d^{(k)}_i` over [`Self::denominator`].
    fn numerator(&self, i: i128, k: usize, den: &BigInt) -> BigInt {
        (1..=k)
            .map(|v| {
                let prev = BigInt::from(self.nodes[v - 1]);
                let layer_den = &prev * &prev * BigInt::from(self.nodes[v]);
                BigInt::from(a_v(i, self.nodes[v])) * (den / layer_den)
            })
            .sum()
    }

    /// Exact partial sum `d^{(k)}_i = Σ_{v<=k} a_v(i) / (n_{v-1}^2 n_v)`.
    pub fn value_exact(&self, i: i128, k: usize) -> Result<BigRational> {
        self.check_depth(k)?;
        let den = self.denominator(k);
        Ok(BigRational::new(self.numerator(i, k, &den), den))
    }

    pub fn value(&self, i: i128, k: usize) -> Result<DistalValue> {
        self.check_depth(k)?;
        if self.exact {
            let q = self.value_exact(i, k)?;
            Ok(DistalValue { approx: to_f64(&q), exact: Some(q), distality_guaranteed: true })
        } else {
            let approx = (1..=k)
                .map(|v| {
                    let prev = self.nodes[v - 1] as f64;
                    a_v(i, self.nodes[v]) as f64 / (prev * prev * self.nodes[v] as f64)
                })
                .sum();
            Ok(DistalValue { approx, exact: None, distality_guaranteed: false })
        }
    }

    /// `Σ_{v>k} n_{v-1}^{-2} <= n_k^{-2} / (1 - n_k^{-4})`, using `n_{v+1} >= n_v^3`.
    pub fn tail_bound(&self, k: usize) -> Result<BigRational> {
        if k == 0 {
            return Err(Error::InvalidInput("tail bound needs k >= 1".into()));
        }
        self.check_depth(k)?;
        let n = BigInt::from(self.nodes[k]);
        let n2 = &n * &n;
        Ok(BigRational::new(n2.clone(), &n2 * &n2 - 1))
    }

    /// Lower bound `Q(k)^{-1}` on `|d_i - d_{i+k}|`: `2 / (3 x^{3m+1})` with
    /// `x = max(k, n_1)`.
    pub fn distality_floor(&self, k_dist: u128) -> Result<BigRational> {
        if k_dist == 0 {
            return Err(Error::InvalidInput("separation must be nonzero".into()));
        }
        let x = BigInt::from(k_dist.max(self.nodes[1]));
        Ok(ratio(2, 3 * num_traits::pow(x, (3 * self.m + 1) as usize)))
    }

    pub fn to_series(&self, k_layers: usize) -> Result<LimitPeriodicSeries> {
        self.check_depth(k_layers)?;
        if k_layers == 0 {
            return Err(Error::InvalidInput("series needs at least one layer".into()));
        }
        let layers = (1..=k_layers)
            .map(|v| {
                let prev = BigInt::from(self.nodes[v - 1]);
                PeriodicLayer::ramp(self.nodes[v], ratio(1, &prev * &prev * BigInt::from(self.nodes[v])))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LimitPeriodicSeries::new(layers)?.with_envelope(TailEnvelope::SubChain))
    }

    /// Exact scan of `min_i |d_i - d_{i+k}|` for `0 < |k| <= max_sep`, with the
    /// truncation depth chosen so that `2·tail < floor/10`.
    pub fn distality_scan(&self, window: Range<i64>, max_sep: u32) -> Result<DistalityReport> {
        if !self.exact {
            return Err(Error::InvalidInput("distality verification requires exact mode".into()));
        }
        if max_sep == 0 || window.is_empty() {
            return Err(Error::InvalidInput("need a nonempty window and max separation >= 1".into()));
        }
        let worst_floor = self.distality_floor(max_sep as u128)?;
        let layers = (1..=self.depth())
            .find(|&l| {
                self.tail_bound(l)
                    .map(|t| t * BigRational::from_integer(20.into()) < worst_floor)
                    .unwrap_or(false)
            })
            .ok_or_else(|| Error::Inconclusive {
                depth: self.depth(),
                reason: "stored levels cannot push the tail below the distality floor".into(),
            })?;
        let tail = self.tail_bound(layers)?;
        let den = self.denominator(layers);
        let lo = window.start - max_sep as i64;
        let numerators: Vec<BigInt> = (lo..window.end + max_sep as i64)
            .into_par_iter()
            .map(|i| self.numerator(i as i128, layers, &den))
            .collect();
        let floors = (1..=max_sep)
            .map(|k| self.distality_floor(k as u128))
            .collect::<Result<Vec<_>>>()?;
        let records = separation_records(&numerators, &den, lo, &window, max_sep, |k| {
            floors[k.unsigned_abs() as usize - 1].clone()
        }, &tail);
        Ok(DistalityReport { layers, tail_bound: tail, records })
    }

    /// Like [`Self::distality_scan`] but fails on the first violating pair.
    pub fn verify_distality(&self, window: Range<i64>, max_sep: u32) -> Result<DistalityReport> {
        let report = self.distality_scan(window, max_sep)?;
        match report.records.iter().find(|r| !r.ok) {
            Some(r) => Err(Error::DistalityViolation { index: r.worst_index, separation: r.separation }),
            None => Ok(report),
        }
    }
}

/// Worst separation for one shift `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationRecord {
    pub separation: i64,
    pub worst_index: i64,
    #[serde(serialize_with = "ser_rational")]
    pub min_gap: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub floor: BigRational,
    /// `min_gap - 2·tail - floor`.
    #[serde(serialize_with = "ser_rational")]
    pub margin: BigRational,
    pub ok: bool,
}

fn ser_rational<S: serde::Serializer>(q: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(to_f64(q))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistalityReport {
    pub layers: usize,
    #[serde(serialize_with = "ser_rational")]
    pub tail_bound: BigRational,
    pub records: Vec<SeparationRecord>,
}

impl DistalityReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.ok)
    }

    pub fn violations(&self) -> usize {
        self.records.iter().filter(|r| !r.ok).count()
    }
}

/// Shared scan over values `numerators[j] / den` at indices `lo + j`.
fn separation_records(
    numerators: &[BigInt],
    den: &BigInt,
    lo: i64,
    window: &Range<i64>,
    max_sep: u32,
    floor: impl Fn(i64) -> BigRational + Sync,
    tail: &BigRational,
) -> Vec<SeparationRecord> {
    let seps: Vec<i64> = (1..=max_sep as i64).flat_map(|k| [-k, k]).collect();
    let two_tail = tail * BigRational::from_integer(2.into());
    seps.into_par_iter()
        .map(|k| {
            let (gap, worst_index) = window
                .clone()
                .map(|i| {
                    let a = &numerators[(i - lo) as usize];
                    let b = &numerators[(i + k - lo) as usize];
                    ((a - b).abs(), i)
                })
                .min_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)))
                .expect("window is nonempty");
            let min_gap = BigRational::new(gap, den.clone());
            let floor = floor(k);
            let margin = &min_gap - &two_tail - &floor;
            SeparationRecord { separation: k, worst_index, ok: !margin.is_negative(), min_gap, floor, margin }
        })
        .collect()
}

/// Indicator `α_v(i)` of the set `A_v`: lower half of each `2^v` block for
/// even `v`, upper half for odd `v`.
pub fn poeschel_alpha(v: u32, i: i128) -> u8 {
    assert!((1..127).contains(&v), "layer index out of range");
    let r = arith::residue(i, 1u128 << v);
    let half = 1u128 << (v - 1);
    let upper = r >= half;
    u8::from(if v % 2 == 0 { !upper } else { upper })
}

/// Truncation `Σ_{v<=depth} α_v(i) 2^{-v}` as an exact dyadic.
pub fn poeschel_value(i: i128, depth: u32) -> BigRational {
    let num: BigInt = (1..=depth)
        .filter(|&v| poeschel_alpha(v, i) == 1)
        .map(|v| BigInt::one() << (depth - v))
        .sum();
    BigRational::new(num, BigInt::one() << depth)
}

/// Depth beyond which `α_v(i)` no longer depends on `i` within a sign class.
fn poeschel_stable_depth(i: i128) -> u32 {
    let a = i.unsigned_abs();
    (128 - a.leading_zeros()).max(1) + 1
}

/// Exact value of the full infinite series: past the stable depth every
/// nonnegative index sees `α_v = [v even]` and every negative one
/// `α_v = [v odd]`, so the tail is a geometric series.
pub fn poeschel_limit(i: i128) -> BigRational {
    let depth = poeschel_stable_depth(i);
    poeschel_value(i, depth) + poeschel_tail(i >= 0, depth)
}

fn poeschel_tail(nonnegative: bool, depth: u32) -> BigRational {
    let parity = if nonnegative { 0 } else { 1 };
    let first = if (depth + 1) % 2 == parity { depth + 1 } else { depth + 2 };
    // Σ_{j>=0} 2^{-(first + 2j)} = 2^{-first} · 4/3
    ratio(4, BigInt::from(3) << first)
}

/// Dyadic indicator sequence truncated at `depth` layers.
#[derive(Clone, Debug, PartialEq)]
pub struct PoeschelExample {
    depth: u32,
}

impl PoeschelExample {
    pub fn new(depth: u32) -> Result<Self> {
        if !(1..=100).contains(&depth) {
            return Err(Error::InvalidInput(format!("depth {depth} outside 1..=100")));
        }
        Ok(Self { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn chain(&self) -> FrequencyChain {
        FrequencyChain::from_parts((1..=self.depth).map(|v| 1u128 << v).collect(), Some("times:2"))
            .expect("dyadic chain is valid")
    }

    pub fn to_series(&self) -> LimitPeriodicSeries {
        let layers = (1..=self.depth)
            .map(|v| {
                let period = 1u128 << v;
                let half = period / 2;
                let (lo, hi) = if v % 2 == 0 { (0, half) } else { (half, period) };
                PeriodicLayer::indicator(period, lo, hi, ratio(1, BigInt::one() << v)).expect("valid indicator")
            })
            .collect();
        LimitPeriodicSeries::new(layers).expect("dyadic periods form a chain").with_envelope(TailEnvelope::Dyadic)
    }

    /// Exact scan of `|d_i - d_{i+k}| >= 1/(16|k|)` on the full (untruncated)
    /// sequence.
    pub fn distality_scan(window: Range<i64>, max_sep: u32) -> Result<DistalityReport> {
        if max_sep == 0 || window.is_empty() {
            return Err(Error::InvalidInput("need a nonempty window and max separation >= 1".into()));
        }
        let lo = window.start - max_sep as i64;
        let hi = window.end + max_sep as i64;
        let depth = poeschel_stable_depth(lo as i128).max(poeschel_stable_depth(hi as i128));
        // every limit is a multiple of 1 / (3·2^(depth+2))
        let den = BigInt::from(3) << (depth + 2);
        let numerators: Vec<BigInt> = (lo..hi)
            .into_par_iter()
            .map(|i| {
                let q = poeschel_limit(i as i128) * BigRational::from_integer(den.clone());
                debug_assert!(q.is_integer());
                q.to_integer()
            })
            .collect();
        let records = separation_records(
            &numerators,
            &den,
            lo,
            &window,
            max_sep,
            |k| ratio(1, 16 * k.abs()),
            &BigRational::zero(),
        );
        Ok(DistalityReport { layers: depth as usize, tail_bound: BigRational::zero(), records })
    }
}

/// Writes `n,value_num,value_den,value_float`; numerator and denominator are
/// left empty for floating-point rows.
pub fn write_potential_csv<W: Write>(
    mut w: W,
    rows: &[(i64, Option<BigRational>, f64)],
) -> std::io::Result<()> {
    writeln!(w, "n,value_num,value_den,value_float")?;
    for (n, exact, x) in rows {
        match exact {
            Some(q) => writeln!(w, "{n},{},{},{x}", q.numer(), q.denom())?,
            None => writeln!(w, "{n},,,{x}")?,
        }
    }
    Ok(())
}

/// Reduced fraction helper for tests and callers.
pub fn rational(num: i64, den: i64) -> BigRational {
    ratio(num, den)
}

/// True when the (reduced) denominator is a power of two.
pub fn is_dyadic(q: &BigRational) -> bool {
    let d = q.denom();
    d.is_positive() && (d & (d - BigInt::one())).is_zero()
}
