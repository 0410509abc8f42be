//! Frequency chains, supernatural numbers and the odometer model of a
//! procyclic hull.
//!
//! An infinite divisibility chain `n_1 | n_2 | ...` is stored as a finite
//! prefix plus an optional [`GrowthPattern`] that generates further elements.
//! Every predicate reports the depth its verdict was reached at.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arith;
use crate::error::{Error, Result};

/// How a stored chain prefix continues.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GrowthPattern {
    /// `n_{k+1} = n_k^m`.
    Power(u32),
    /// `n_{k+1} = n_k * q`.
    Multiply(u128),
    /// Multiply by the listed primes round-robin, continuing after the last
    /// prime step present in the chain.
    PrimeCycle(Vec<u128>),
}

impl fmt::Display for GrowthPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthPattern::Power(2) => write!(f, "square"),
            GrowthPattern::Power(3) => write!(f, "cube"),
            GrowthPattern::Power(m) => write!(f, "power:{m}"),
            GrowthPattern::Multiply(q) => write!(f, "times:{q}"),
            GrowthPattern::PrimeCycle(ps) => {
                let s: Vec<String> = ps.iter().map(|p| p.to_string()).collect();
                write!(f, "cycle:{}", s.join("/"))
            }
        }
    }
}

impl GrowthPattern {
    /// Parses a pattern name. `"powers"` means "constant ratio" and is
    /// resolved against the chain it is attached to.
    pub fn parse_for(name: &str, elements: &[u128]) -> Result<GrowthPattern> {
        let name = name.trim();
        let bad = || Error::Parse(format!("unknown growth pattern {name:?}"));
        let pattern = match name {
            "cube" => GrowthPattern::Power(3),
            "square" => GrowthPattern::Power(2),
            "powers" | "geometric" => {
                let ratio = match elements {
                    [.., a, b] if *a > 0 => b / a,
                    [a] => *a,
                    _ => return Err(Error::InvalidChain("\"powers\" needs a nonempty chain".into())),
                };
                if elements.windows(2).any(|w| w[0] * ratio != w[1]) {
                    return Err(Error::InvalidChain(
                        "\"powers\" requires a constant ratio between stored elements".into(),
                    ));
                }
                GrowthPattern::Multiply(ratio)
            }
            _ => {
                let (kind, arg) = name.split_once(':').ok_or_else(bad)?;
                match kind {
                    "power" | "pow" => GrowthPattern::Power(arg.parse().map_err(|_| bad())?),
                    "times" => GrowthPattern::Multiply(arg.parse().map_err(|_| bad())?),
                    "cycle" => GrowthPattern::PrimeCycle(
                        arg.split(['/', ','])
                            .map(|p| p.trim().parse::<u128>().map_err(|_| bad()))
                            .collect::<Result<_>>()?,
                    ),
                    _ => return Err(bad()),
                }
            }
        };
        pattern.validate()?;
        Ok(pattern)
    }

    fn validate(&self) -> Result<()> {
        match self {
            GrowthPattern::Power(m) if *m < 2 => {
                Err(Error::InvalidChain(format!("power pattern needs m >= 2, got {m}")))
            }
            GrowthPattern::Multiply(q) if *q < 2 => {
                Err(Error::InvalidChain(format!("ratio pattern needs q >= 2, got {q}")))
            }
            GrowthPattern::PrimeCycle(ps) if ps.is_empty() || ps.iter().any(|p| !arith::is_prime(*p)) => {
                Err(Error::InvalidChain("prime cycle must list primes".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Exponent of a prime in a supernatural number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exponent {
    Finite(u32),
    Infinite,
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(e) => s.serialize_u32(*e),
            Exponent::Infinite => s.serialize_str("INFINITE"),
        }
    }
}

/// Formal product of primes with exponents in ℕ ∪ {∞}.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SupernaturalNumber {
    exponents: BTreeMap<u128, Exponent>,
}

impl SupernaturalNumber {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the exponent of `p`; exponent 0 removes the key.
    pub fn set(&mut self, p: u128, e: Exponent) -> Result<()> {
        if !arith::is_prime(p) {
            return Err(Error::InvalidInput(format!("{p} is not prime")));
        }
        if e == Exponent::Finite(0) {
            self.exponents.remove(&p);
        } else {
            self.exponents.insert(p, e);
        }
        Ok(())
    }

    pub fn get(&self, p: u128) -> Exponent {
        self.exponents.get(&p).copied().unwrap_or(Exponent::Finite(0))
    }

    pub fn primes(&self) -> impl Iterator<Item = u128> + '_ {
        self.exponents.keys().copied()
    }

    pub fn infinite_primes(&self) -> Vec<u128> {
        self.exponents
            .iter()
            .filter(|(_, e)| **e == Exponent::Infinite)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u128, Exponent)> + '_ {
        self.exponents.iter().map(|(p, e)| (*p, *e))
    }
}

/// Divisibility chain `n_1 | n_2 | ...` with strictly increasing elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyChain {
    elements: Vec<u128>,
    pattern: Option<GrowthPattern>,
}

impl FrequencyChain {
    pub fn new(elements: Vec<u128>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidChain("empty chain".into()));
        }
        if elements[0] == 0 {
            return Err(Error::InvalidChain("elements must be positive".into()));
        }
        for w in elements.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidChain(format!("{} does not exceed {}", w[1], w[0])));
            }
            if w[1] % w[0] != 0 {
                return Err(Error::InvalidChain(format!("{} does not divide {}", w[0], w[1])));
            }
        }
        Ok(Self { elements, pattern: None })
    }

    pub fn with_pattern(mut self, pattern: GrowthPattern) -> Result<Self> {
        pattern.validate()?;
        if let GrowthPattern::Power(_) = pattern {
            if self.elements[0] < 2 {
                return Err(Error::InvalidChain("power pattern on a chain ending at 1".into()));
            }
        }
        self.pattern = Some(pattern);
        Ok(self)
    }

    /// Builds a chain from elements and an optional pattern name.
    pub fn from_parts(elements: Vec<u128>, pattern: Option<&str>) -> Result<Self> {
        let chain = Self::new(elements)?;
        match pattern {
            Some(name) => {
                let p = GrowthPattern::parse_for(name, &chain.elements)?;
                chain.with_pattern(p)
            }
            None => Ok(chain),
        }
    }

    pub fn elements(&self) -> &[u128] {
        &self.elements
    }

    pub fn pattern(&self) -> Option<&GrowthPattern> {
        self.pattern.as_ref()
    }

    pub fn depth(&self) -> usize {
        self.elements.len()
    }

    pub fn last(&self) -> u128 {
        *self.elements.last().expect("chain is nonempty")
    }

    fn next_element(&self) -> Option<Result<u128>> {
        let last = self.last();
        let depth = self.depth();
        let pattern = self.pattern.as_ref()?;
        let next = match pattern {
            GrowthPattern::Power(m) => last.checked_pow(*m),
            GrowthPattern::Multiply(q) => last.checked_mul(*q),
            GrowthPattern::PrimeCycle(ps) => {
                let prev = if depth >= 2 { self.elements[depth - 2] } else { 1 };
                let step = last / prev;
                let pos = ps.iter().position(|p| *p == step).map_or(0, |j| (j + 1) % ps.len());
                last.checked_mul(ps[pos])
            }
        };
        Some(next.ok_or(Error::Overflow(depth)))
    }

    /// Copy of the chain extended by its pattern to at least `depth` elements.
    /// Without a pattern the chain is returned unchanged.
    pub fn extended(&self, depth: usize) -> Result<Self> {
        let mut out = self.clone();
        while out.depth() < depth {
            match out.next_element() {
                Some(next) => out.elements.push(next?),
                None => break,
            }
        }
        Ok(out)
    }

    /// Truncation to the first `depth` elements (pattern kept).
    pub fn truncated(&self, depth: usize) -> Result<Self> {
        if depth == 0 || depth > self.depth() {
            return Err(Error::InvalidInput(format!(
                "cannot truncate a chain of depth {} to {depth}",
                self.depth()
            )));
        }
        Ok(Self { elements: self.elements[..depth].to_vec(), pattern: self.pattern.clone() })
    }

    /// Primes whose exponent grows without bound under the declared pattern.
    pub fn infinite_primes(&self) -> Vec<u128> {
        let mut ps = match &self.pattern {
            None => Vec::new(),
            Some(GrowthPattern::Power(_)) => arith::factorize(self.last()),
            Some(GrowthPattern::Multiply(q)) => arith::factorize(*q),
            Some(GrowthPattern::PrimeCycle(ps)) => ps.clone(),
        };
        ps.sort_unstable();
        ps.dedup();
        ps
    }
}

/// Parses a comma-separated list such as `"2,8,512"`.
pub fn parse_chain_list(s: &str) -> Result<Vec<u128>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<u128>().map_err(|e| Error::Parse(format!("{t:?}: {e}")))
        })
        .collect()
}

impl FromStr for FrequencyChain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(parse_chain_list(s)?)
    }
}

/// Refines a chain so every consecutive ratio is prime, then extends it to
/// `depth` elements when a growth pattern is declared.
pub fn maximalize(chain: &FrequencyChain, depth: usize) -> Result<FrequencyChain> {
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be positive".into()));
    }
    let mut out = Vec::new();
    let mut prev = 1u128;
    for &n in chain.elements() {
        for p in arith::factorize(n / prev) {
            prev *= p;
            out.push(prev);
        }
    }
    if out.is_empty() {
        // chain {1}
        out.push(1);
    }
    let mut refined = FrequencyChain::new(out)?;
    let cycle = chain.infinite_primes();
    if !cycle.is_empty() {
        refined = refined.with_pattern(GrowthPattern::PrimeCycle(cycle))?;
    }
    refined.extended(depth)
}

/// Supremum of p-adic valuations over the stored chain, with the primes driven
/// by the growth pattern marked infinite.
pub fn supernatural_of(chain: &FrequencyChain) -> SupernaturalNumber {
    let mut s = SupernaturalNumber::new();
    let last = chain.last();
    for p in arith::factorize(last) {
        s.exponents.insert(p, Exponent::Finite(arith::valuation(last, p)));
    }
    for p in chain.infinite_primes() {
        s.exponents.insert(p, Exponent::Infinite);
    }
    s
}

/// One entry of an isomorphism certificate: `element` (from side `side`)
/// divides `witness` on the other side, or fails to when `witness` is `None`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DivisorWitness {
    pub side: char,
    pub element: u128,
    pub witness: Option<u128>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum IsomorphismMethod {
    Supernatural,
    Divisibility,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IsomorphismVerdict {
    pub isomorphic: bool,
    pub depth: usize,
    pub method: IsomorphismMethod,
    pub certificate: Vec<DivisorWitness>,
    pub first_failure: Option<DivisorWitness>,
}

fn witnesses(side: char, from: &[u128], into: &[u128]) -> Vec<DivisorWitness> {
    from.iter()
        .map(|&n| DivisorWitness {
            side,
            element: n,
            witness: into.iter().copied().find(|m| m % n == 0),
        })
        .collect()
}

/// Decides whether two chains generate isomorphic hulls.
///
/// With growth patterns on both sides the answer comes from comparing
/// supernatural numbers. Otherwise mutual divisibility of the stored
/// prefixes (after extension to `depth`) confirms; any gap is inconclusive.
pub fn hulls_isomorphic(
    a: &FrequencyChain,
    b: &FrequencyChain,
    depth: usize,
) -> Result<IsomorphismVerdict> {
    let a = a.extended(depth)?;
    let b = b.extended(depth)?;
    let mut certificate = witnesses('a', a.elements(), b.elements());
    certificate.extend(witnesses('b', b.elements(), a.elements()));
    let first_failure = certificate.iter().find(|w| w.witness.is_none()).cloned();
    let reached = a.depth().min(b.depth());

    if a.pattern().is_some() && b.pattern().is_some() {
        let isomorphic = supernatural_of(&a) == supernatural_of(&b);
        return Ok(IsomorphismVerdict {
            isomorphic,
            depth: reached,
            method: IsomorphismMethod::Supernatural,
            certificate,
            first_failure,
        });
    }
    match first_failure {
        None => Ok(IsomorphismVerdict {
            isomorphic: true,
            depth: reached,
            method: IsomorphismMethod::Divisibility,
            certificate,
            first_failure: None,
        }),
        Some(w) => Err(Error::Inconclusive {
            depth: reached,
            reason: format!(
                "{} (side {}) divides no stored element of the other chain and no growth pattern settles it",
                w.element, w.side
            ),
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionA {
    pub holds: bool,
    pub m_min: Option<u32>,
    pub depth: usize,
}

/// Smallest `m >= 2` with `n_{k+1} <= n_k^m` along the stored prefix.
pub fn condition_a(chain: &FrequencyChain) -> Result<ConditionA> {
    let els = chain.elements();
    if els.len() < 2 {
        return Err(Error::InvalidChain("condition A needs at least two elements".into()));
    }
    if els[0] < 2 {
        return Err(Error::InvalidChain("n_1 = 1 makes log n_{k+1}/log n_k undefined".into()));
    }
    let m = els
        .windows(2)
        .map(|w| arith::min_exponent_covering(w[0], w[1]))
        .max()
        .unwrap_or(2)
        .max(2);
    Ok(ConditionA { holds: true, m_min: Some(m), depth: els.len() })
}

/// Element of the procyclic group in compatible-residue form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupElement {
    chain: FrequencyChain,
    residues: Vec<u128>,
}

impl GroupElement {
    pub fn new(chain: FrequencyChain, residues: Vec<u128>) -> Result<Self> {
        if residues.len() != chain.depth() {
            return Err(Error::InvalidElement(format!(
                "{} residues for a chain of depth {}",
                residues.len(),
                chain.depth()
            )));
        }
        for (k, (&r, &n)) in residues.iter().zip(chain.elements()).enumerate() {
            if r >= n {
                return Err(Error::InvalidElement(format!("residue {r} out of range at level {k}")));
            }
            if k > 0 {
                let prev = chain.elements()[k - 1];
                if r % prev != residues[k - 1] {
                    return Err(Error::InvalidElement(format!(
                        "residue {r} at level {k} incompatible with {}",
                        residues[k - 1]
                    )));
                }
            }
        }
        Ok(Self { chain, residues })
    }

    /// The neutral element `e`.
    pub fn identity(chain: FrequencyChain) -> Self {
        let residues = vec![0; chain.depth()];
        Self { chain, residues }
    }

    /// `T^t(e)`.
    pub fn orbit_point(chain: FrequencyChain, t: i128) -> Self {
        odometer_add(&Self::identity(chain), t)
    }

    pub fn chain(&self) -> &FrequencyChain {
        &self.chain
    }

    pub fn residues(&self) -> &[u128] {
        &self.residues
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ChainDoc::from(self)).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ChainDoc = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_element()
    }
}

/// `T^k(g)`: adds `k` to every residue.
pub fn odometer_add(g: &GroupElement, k: i128) -> GroupElement {
    let residues = g
        .residues
        .iter()
        .zip(g.chain.elements())
        .map(|(&r, &n)| arith::add_mod(r, arith::residue(k, n), n))
        .collect();
    GroupElement { chain: g.chain.clone(), residues }
}

/// JSON document for chains and group elements:
/// `{"chain": [2,8,512], "pattern": "cube", "residues": [1,5,133]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChainDoc {
    pub chain: Vec<u128>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residues: Option<Vec<u128>>,
}

impl ChainDoc {
    pub fn into_chain(&self) -> Result<FrequencyChain> {
        FrequencyChain::from_parts(self.chain.clone(), self.pattern.as_deref())
    }

    pub fn into_element(self) -> Result<GroupElement> {
        let chain = self.into_chain()?;
        match self.residues {
            Some(r) => GroupElement::new(chain, r),
            None => Ok(GroupElement::identity(chain)),
        }
    }
}

impl From<&FrequencyChain> for ChainDoc {
    fn from(c: &FrequencyChain) -> Self {
        ChainDoc {
            chain: c.elements.clone(),
            pattern: c.pattern.as_ref().map(|p| p.to_string()),
            residues: None,
        }
    }
}

impl From<&GroupElement> for ChainDoc {
    fn from(g: &GroupElement) -> Self {
        ChainDoc { residues: Some(g.residues.clone()), ..ChainDoc::from(&g.chain) }
    }
}
