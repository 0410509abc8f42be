//! Approximation functions `Q`, the derived `q(t) = t^{-4} sup_x Q(x) e^{-tx}`,
//! and certified upper bounds on `h(t) = inf_κ Π_i q(t_i)^{2^{-i-1}}`.
//!
//! `h` is an infimum over all admissible schedules `t_0 >= t_1 >= ... >= 0`
//! with `Σ t_i <= t`; any single schedule gives an upper bound. The infinite
//! product is summed in log space, and the truncated tail is added in closed
//! form, so the returned value is a true bound rather than a partial product.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_WEIGHT_CUT: f64 = 1e-12;

/// Growth-controlled function `Q : [0, ∞) → [1, ∞)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ApproximationFunction {
    Constant(f64),
    /// `floor_value` on `[0, x0)`, `beta · x^exponent` on `[x0, ∞)`.
    PowerLaw { beta: f64, exponent: f64, x0: f64, floor_value: f64 },
    /// Knots `(x_j, Q_j)` with log-linear interpolation; constant `Q_0` left of
    /// the first knot and exponential extrapolation at the last segment's
    /// rate (never decaying) to the right.
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

impl ApproximationFunction {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 1.0) {
            return Err(Error::InvalidInput(format!("constant Q must be >= 1, got {c}")));
        }
        Ok(Self::Constant(c))
    }

    pub fn power_law(beta: f64, exponent: f64, x0: f64, floor_value: f64) -> Result<Self> {
        if !(beta > 0.0 && exponent >= 0.0 && x0 >= 0.0 && floor_value >= 0.0)
            || ![beta, exponent, x0, floor_value].iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidInput("power-law parameters must be finite and nonnegative".into()));
        }
        Ok(Self::PowerLaw { beta, exponent, x0, floor_value })
    }

    /// Plain `x^r`.
    pub fn monomial(r: f64) -> Result<Self> {
        Self::power_law(1.0, r, 0.0, 0.0)
    }

    /// `1` on `[0, 1)`, `x^r` beyond.
    pub fn unit_floor_power(r: f64) -> Result<Self> {
        Self::power_law(1.0, r, 1.0, 1.0)
    }

    /// `3 n_1^{3m+1} / 2` below `n_1`, `3 x^{3m+1} / 2` from `n_1` on: the
    /// function certifying distality of the sub-chain generator.
    pub fn sub_chain(n1: f64, m: u32) -> Result<Self> {
        let r = f64::from(3 * m + 1);
        Self::power_law(1.5, r, n1, 1.5 * n1.powf(r))
    }

    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != values.len() {
            return Err(Error::InvalidInput("table needs matching nonempty knots and values".into()));
        }
        if xs[0] < 0.0 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("knots must be nonnegative and strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput("tabulated values must be finite and positive".into()));
        }
        Ok(Self::Tabulated { xs, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::PowerLaw { beta, exponent, x0, floor_value } => {
                if x < *x0 {
                    *floor_value
                } else {
                    beta * x.powf(*exponent)
                }
            }
            Self::Tabulated { xs, values } => {
                if x <= xs[0] {
                    return values[0];
                }
                let j = xs.partition_point(|k| *k <= x);
                if j >= xs.len() {
                    let last = xs.len() - 1;
                    return (values[last].ln() + self.tail_rate() * (x - xs[last])).exp();
                }
                let (xa, xb) = (xs[j - 1], xs[j]);
                let (la, lb) = (values[j - 1].ln(), values[j].ln());
                (la + (lb - la) * (x - xa) / (xb - xa)).exp()
            }
        }
    }

    /// Exponential growth rate of a table past its last knot.
    fn tail_rate(&self) -> f64 {
        match self {
            Self::Tabulated { xs, values } if xs.len() >= 2 => {
                let n = xs.len();
                ((values[n - 1].ln() - values[n - 2].ln()) / (xs[n - 1] - xs[n - 2])).max(0.0)
            }
            _ => 0.0,
        }
    }

    /// `ln sup_{x>=0} Q(x) e^{-tx}`; `+∞` when the supremum diverges.
    pub fn log_sup(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => c.ln(),
            Self::PowerLaw { beta, exponent, x0, floor_value } => {
                let below = if *x0 > 0.0 { floor_value.ln() } else { f64::NEG_INFINITY };
                let x_star = x0.max(exponent / t);
                let power = if x_star == 0.0 {
                    if *exponent == 0.0 {
                        beta.ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    beta.ln() + exponent * x_star.ln() - t * x_star
                };
                below.max(power)
            }
            Self::Tabulated { xs, values } => {
                if self.tail_rate() > t {
                    return f64::INFINITY;
                }
                // log-linear pieces times e^{-tx} peak at knots; the left
                // constant piece peaks at x = 0
                let knots = xs.iter().zip(values).map(|(x, v)| v.ln() - t * x);
                knots.fold(values[0].ln(), f64::max)
            }
        }
    }

    /// Constants `(A, r)` with `ln sup_x Q(x)e^{-sx} <= A - r ln s` for every
    /// `s <= s_max`; `None` if no such tail law exists.
    fn tail_law(&self) -> Option<TailLaw> {
        match self {
            Self::Constant(c) => Some(TailLaw { intercept: c.ln(), exponent: 0.0, s_max: f64::INFINITY }),
            Self::PowerLaw { beta, exponent, x0, floor_value } => {
                if *exponent == 0.0 {
                    return Some(TailLaw {
                        intercept: beta.max(*floor_value).ln(),
                        exponent: 0.0,
                        s_max: f64::INFINITY,
                    });
                }
                let r = *exponent;
                let a = beta.ln() + r * r.ln() - r;
                // exact once r/s >= x0 and the interior peak clears the floor
                let mut s_max = if *x0 > 0.0 { r / x0 } else { f64::INFINITY };
                if *floor_value > 0.0 {
                    s_max = s_max.min(((a - floor_value.ln()) / r).exp());
                }
                Some(TailLaw { intercept: a, exponent: r, s_max })
            }
            Self::Tabulated { values, .. } => {
                if self.tail_rate() > 0.0 {
                    return None;
                }
                let top = values.iter().copied().fold(f64::MIN, f64::max);
                Some(TailLaw { intercept: top.ln(), exponent: 0.0, s_max: f64::INFINITY })
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct TailLaw {
    intercept: f64,
    exponent: f64,
    s_max: f64,
}

/// `ln q(t)`.
pub fn log_q(q: &ApproximationFunction, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    Ok(q.log_sup(t) - 4.0 * t.ln())
}

pub fn q_of(q: &ApproximationFunction, t: f64) -> Result<f64> {
    Ok(log_q(q, t)?.exp())
}

/// Geometric schedule `t_i = t · first · ratio^i`, `i >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KappaSchedule {
    pub first: f64,
    pub ratio: f64,
}

impl Default for KappaSchedule {
    /// `t_i = t 2^{-i-1}`.
    fn default() -> Self {
        Self { first: 0.5, ratio: 0.5 }
    }
}

impl KappaSchedule {
    /// Schedule with `Σ t_i = t` exactly.
    pub fn summing_to_one(ratio: f64) -> Self {
        Self { first: 1.0 - ratio, ratio }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.first > 0.0
            && self.first <= 1.0
            && self.ratio > 0.0
            && self.ratio < 1.0
            && self.first / (1.0 - self.ratio) <= 1.0 + 1e-15;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("schedule {self:?} is not admissible (need t >= t_0 and Σ t_i <= t)")))
        }
    }

    pub fn term(&self, t: f64, i: usize) -> f64 {
        t * self.first * self.ratio.powi(i as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HBound {
    /// Upper bound on `h(t)`.
    pub value: f64,
    pub log_value: f64,
    /// Number of explicit factors before the analytic tail.
    pub terms: usize,
    /// Log-contribution of the analytic tail.
    pub tail_log: f64,
    pub schedule: KappaSchedule,
}

const MAX_TERMS: usize = 4000;

/// Product `Π_i q(t_i)^{2^{-i-1}}` along `schedule`, truncated once the
/// remaining weight is below `weight_cut` and the closed-form tail law of
/// `Q` applies; the tail is included in the result.
pub fn h_upper(q: &ApproximationFunction, t: f64, schedule: KappaSchedule, weight_cut: f64) -> Result<HBound> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    if !(weight_cut > 0.0) {
        return Err(Error::InvalidInput("weight cut must be positive".into()));
    }
    schedule.validate()?;
    let infinite = |terms| HBound {
        value: f64::INFINITY,
        log_value: f64::INFINITY,
        terms,
        tail_log: f64::INFINITY,
        schedule,
    };
    let law = q.tail_law();
    let mut acc = 0.0;
    for i in 0..MAX_TERMS {
        // remaining weight Σ_{j>=i} 2^{-j-1} = 2^{-i}
        let remaining = 0.5f64.powi(i as i32);
        let t_i = schedule.term(t, i);
        if let Some(law) = law {
            if remaining < weight_cut && t_i <= law.s_max {
                let tail_log = tail_sum(law, t, schedule, i);
                let log_value = acc + tail_log;
                return Ok(HBound { value: log_value.exp(), log_value, terms: i, tail_log, schedule });
            }
        }
        let lq = log_q(q, t_i)?;
        if !lq.is_finite() {
            return Ok(infinite(i));
        }
        acc += lq * 0.5f64.powi(i as i32 + 1);
    }
    match law {
        Some(_) => Err(Error::InvalidInput("tail law never became applicable".into())),
        None => Ok(infinite(MAX_TERMS)),
    }
}

/// `Σ_{i>=start} 2^{-i-1} (A - (4 + r) ln t_i)` with
/// `ln t_i = ln(t·first) + i ln ratio`.
fn tail_sum(law: TailLaw, t: f64, schedule: KappaSchedule, start: usize) -> f64 {
    let k = start as f64;
    let mass = 0.5f64.powi(start as i32);
    let first_moment = (k + 1.0) * mass;
    let slope = 4.0 + law.exponent;
    (law.intercept - slope * (t * schedule.first).ln()) * mass - slope * schedule.ratio.ln() * first_moment
}

/// Minimum of [`h_upper`] over the default schedule and a golden-section
/// search on the ratio of schedules summing to `t`.
pub fn h_upper_refined(q: &ApproximationFunction, t: f64, weight_cut: f64) -> Result<HBound> {
    let eval = |rho: f64| h_upper(q, t, KappaSchedule::summing_to_one(rho), weight_cut);
    let mut best = h_upper(q, t, KappaSchedule::default(), weight_cut)?;
    if !best.value.is_finite() {
        return Ok(best);
    }
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.02, 0.98);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..60 {
        if fc.log_value < fd.log_value {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d)?;
        }
    }
    for cand in [fc, fd] {
        if cand.log_value < best.log_value {
            best = cand;
        }
    }
    Ok(best)
}

/// True iff `q(t)` and the default-schedule bound on `h(t)` are finite on the grid.
pub fn is_approximation_function(q: &ApproximationFunction, t_grid: &[f64]) -> Result<bool> {
    if t_grid.is_empty() {
        return Err(Error::InvalidInput("empty t grid".into()));
    }
    for &t in t_grid {
        if !q_of(q, t)?.is_finite() {
            return Ok(false);
        }
        if !h_upper(q, t, KappaSchedule::default(), DEFAULT_WEIGHT_CUT)?.value.is_finite() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// CSV `t,q,h_upper` over a grid.
pub fn write_approx_csv<W: Write>(mut w: W, q: &ApproximationFunction, t_grid: &[f64]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidInput(e.to_string());
    writeln!(w, "t,q,h_upper").map_err(io)?;
    for &t in t_grid {
        let h = h_upper(q, t, KappaSchedule::default(), DEFAULT_WEIGHT_CUT)?;
        writeln!(w, "{t},{},{}", q_of(q, t)?, h.value).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn q_of_examples() {
        let c = ApproximationFunction::constant(3.0).unwrap();
        assert!(rel(q_of(&c, 2.0).unwrap(), 3.0 / 16.0) < 1e-15);
        assert!(rel(q_of(&c, 1.0).unwrap() / q_of(&c, 2.0).unwrap(), 16.0) < 1e-14);
        let cube = ApproximationFunction::monomial(3.0).unwrap();
        let expect = 27.0 * (-3.0f64).exp();
        assert!(rel(q_of(&cube, 1.0).unwrap(), expect) < 1e-14);
        assert!(q_of(&c, 0.0).is_err());
        assert!(q_of(&c, -1.0).is_err());
    }

    /// Dense-grid oracle for the supremum.
    #[test]
    fn closed_form_supremum_matches_grid_search() {
        let fs = [
            ApproximationFunction::monomial(3.0).unwrap(),
            ApproximationFunction::sub_chain(2.0, 2).unwrap(),
            ApproximationFunction::unit_floor_power(2.0).unwrap(),
            ApproximationFunction::tabulated(vec![0.0, 1.0, 3.0], vec![1.0, 4.0, 5.0]).unwrap(),
        ];
        for f in &fs {
            for t in [0.3, 1.0, 2.5, 7.0] {
                let grid = (0..400_000)
                    .map(|j| j as f64 * 1e-4)
                    .map(|x| f.eval(x).ln() - t * x)
                    .fold(f64::NEG_INFINITY, f64::max);
                let closed = f.log_sup(t);
                assert!(closed >= grid - 1e-12, "{f:?} t={t}");
                assert!(closed - grid < 1e-6, "{f:?} t={t}: {closed} vs {grid}");
            }
        }
    }

    #[test]
    fn constant_h_closed_form() {
        // Σ (i+1) 2^{-i-1} = 2, so the product is C t^{-4} 2^8
        let partial: f64 = (0..60).map(|i| (i + 1) as f64 * 0.5f64.powi(i + 1)).sum();
        assert!((partial - 2.0).abs() < 1e-15);
        for c in [1.0, 2.0, 17.5] {
            let q = ApproximationFunction::constant(c).unwrap();
            for t in [0.1, 1.0, 3.0, 10.0] {
                let h = h_upper(&q, t, KappaSchedule::default(), DEFAULT_WEIGHT_CUT).unwrap();
                assert!(rel(h.value * t.powi(4) / c, 256.0) < 1e-12);
            }
        }
    }

    #[test]
    fn tail_is_consistent_with_weight_cut() {
        let q = ApproximationFunction::sub_chain(2.0, 2).unwrap();
        let vals: Vec<f64> = [1e-3, 1e-6, 1e-9, 1e-12, 1e-15]
            .iter()
            .map(|&w| h_upper(&q, 0.7, KappaSchedule::default(), w).unwrap().log_value)
            .collect();
        for w in vals.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn monomial_scaling_law() {
        for r in [1.0, 3.0] {
            let q = ApproximationFunction::monomial(r).unwrap();
            let h1 = h_upper(&q, 1.0, KappaSchedule::default(), DEFAULT_WEIGHT_CUT).unwrap().value;
            let h2 = h_upper(&q, 2.0, KappaSchedule::default(), DEFAULT_WEIGHT_CUT).unwrap().value;
            assert!(rel(h1 / h2, 2f64.powf(4.0 + r)) < 1e-6);
        }
    }

    #[test]
    fn refinement_never_worse_than_default() {
        for q in [
            ApproximationFunction::constant(2.0).unwrap(),
            ApproximationFunction::monomial(3.0).unwrap(),
            ApproximationFunction::sub_chain(2.0, 2).unwrap(),
        ] {
            let d = h_upper(&q, 1.0, KappaSchedule::default(), DEFAULT_WEIGHT_CUT).unwrap();
            let r = h_upper_refined(&q, 1.0, DEFAULT_WEIGHT_CUT).unwrap();
            assert!(r.log_value <= d.log_value + 1e-12);
        }
    }

    #[test]
    fn schedule_admissibility() {
        let q = ApproximationFunction::constant(1.0).unwrap();
        assert!(h_upper(&q, 1.0, KappaSchedule { first: 0.6, ratio: 0.5 }, 1e-12).is_err());
        assert!(h_upper(&q, 1.0, KappaSchedule { first: 0.5, ratio: 1.0 }, 1e-12).is_err());
        assert!(h_upper(&q, 1.0, KappaSchedule::summing_to_one(0.3), 1e-12).is_ok());
    }

    #[test]
    fn approximation_function_predicate() {
        let grid = [0.1, 1.0, 10.0];
        assert!(is_approximation_function(&ApproximationFunction::constant(1.0).unwrap(), &grid).unwrap());
        assert!(is_approximation_function(&ApproximationFunction::sub_chain(2.0, 2).unwrap(), &grid).unwrap());
        let xs: Vec<f64> = (0..=20).map(|j| j as f64 * 0.5).collect();
        let vals: Vec<f64> = xs.iter().map(|x| (x * x).exp()).collect();
        let gauss = ApproximationFunction::tabulated(xs, vals).unwrap();
        assert!(!is_approximation_function(&gauss, &grid).unwrap());
        assert!(is_approximation_function(&gauss, &[]).is_err());
    }

    #[test]
    fn csv_dump() {
        let mut out = Vec::new();
        write_approx_csv(&mut out, &ApproximationFunction::constant(1.0).unwrap(), &[1.0, 2.0]).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().next(), Some("t,q,h_upper"));
        assert_eq!(s.lines().count(), 3);
    }
}
