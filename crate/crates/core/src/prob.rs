//! Finite discrete probability: bipartite tables, labelled multi-variable
//! tables, entropies in nats, and the conditional expectation / variance
//! operators used by the correlation measures.
//!
//! Everything here is an immutable value; operations return new values.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Probabilities at or below this value are treated as outside the support.
pub const SUPPORT_EPSILON: f64 = 1e-12;

/// Largest accepted deviation of a table's total mass from one before it is
/// rejected. Accepted tables are renormalized exactly.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Hard cap on the number of entries of any dense table.
pub const MAX_TABLE_ENTRIES: usize = 10_000_000;

/// `-sum p ln p` over a probability vector, with `0 ln 0 = 0`.
pub fn entropy_nats(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

fn check_and_normalize(probs: &mut [f64], tol: f64) -> Result<()> {
    let mut total = 0.0;
    for (i, p) in probs.iter_mut().enumerate() {
        if !p.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is not finite"
            )));
        }
        if *p < 0.0 {
            if *p < -SUPPORT_EPSILON {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is negative ({p:e})"
                )));
            }
            *p = 0.0;
        }
        total += *p;
    }
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution(format!(
            "total mass {total} differs from 1"
        )));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(())
}

/// One side of a bipartite distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

/// A probability table `p(a, b)` over `a_card x b_card` symbols, stored
/// row-major (`b` fastest), with cached marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    a_card: usize,
    b_card: usize,
    probs: Vec<f64>,
    p_a: Vec<f64>,
    p_b: Vec<f64>,
}

impl JointDistribution {
    pub fn new(a_card: usize, b_card: usize, mut probs: Vec<f64>) -> Result<Self> {
        if a_card == 0 || b_card == 0 {
            return Err(Error::InvalidDistribution(
                "alphabets must be non-empty".into(),
            ));
        }
        let entries = a_card.saturating_mul(b_card);
        if entries > MAX_TABLE_ENTRIES {
            return Err(Error::TableTooLarge {
                entries,
                cap: MAX_TABLE_ENTRIES,
            });
        }
        if probs.len() != entries {
            return Err(Error::ShapeMismatch(format!(
                "expected {entries} probabilities for a {a_card}x{b_card} table, got {}",
                probs.len()
            )));
        }
        check_and_normalize(&mut probs, NORMALIZATION_TOLERANCE)?;
        let mut p_a = vec![0.0; a_card];
        let mut p_b = vec![0.0; b_card];
        for a in 0..a_card {
            for b in 0..b_card {
                let p = probs[a * b_card + b];
                p_a[a] += p;
                p_b[b] += p;
            }
        }
        Ok(JointDistribution {
            a_card,
            b_card,
            probs,
            p_a,
            p_b,
        })
    }

    pub fn from_fn(a_card: usize, b_card: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let probs = (0..a_card)
            .flat_map(|a| (0..b_card).map(move |b| (a, b)))
            .map(|(a, b)| f(a, b))
            .collect();
        Self::new(a_card, b_card, probs)
    }

    /// The product of two marginals.
    pub fn product(p_a: &[f64], p_b: &[f64]) -> Result<Self> {
        Self::from_fn(p_a.len(), p_b.len(), |a, b| p_a[a] * p_b[b])
    }

    pub fn a_card(&self) -> usize {
        self.a_card
    }

    pub fn b_card(&self) -> usize {
        self.b_card
    }

    pub fn card(&self, side: Side) -> usize {
        match side {
            Side::A => self.a_card,
            Side::B => self.b_card,
        }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.b_card + b]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn marginal_a(&self) -> &[f64] {
        &self.p_a
    }

    pub fn marginal_b(&self) -> &[f64] {
        &self.p_b
    }

    pub fn marginal(&self, side: Side) -> &[f64] {
        match side {
            Side::A => &self.p_a,
            Side::B => &self.p_b,
        }
    }

    #[inline]
    pub fn in_support(&self, a: usize, b: usize) -> bool {
        self.get(a, b) > SUPPORT_EPSILON
    }

    /// Support cells in row-major order.
    pub fn support(&self) -> Vec<(usize, usize)> {
        (0..self.a_card)
            .flat_map(|a| (0..self.b_card).map(move |b| (a, b)))
            .filter(|&(a, b)| self.in_support(a, b))
            .collect()
    }

    /// Symbols of one side with marginal mass above the support threshold.
    pub fn marginal_support(&self, side: Side) -> Vec<usize> {
        self.marginal(side)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > SUPPORT_EPSILON)
            .map(|(i, _)| i)
            .collect()
    }

    /// Largest entrywise deviation from the product of the marginals.
    pub fn product_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.a_card {
            for b in 0..self.b_card {
                worst = worst.max((self.get(a, b) - self.p_a[a] * self.p_b[b]).abs());
            }
        }
        worst
    }

    pub fn is_product(&self, tol: f64) -> bool {
        self.product_deviation() <= tol
    }

    /// Independent pair `(A1 A2, B1 B2)`; the composite symbol of `(s1, s2)`
    /// is `s1 * card2 + s2` on each side.
    pub fn tensor(&self, other: &JointDistribution) -> Result<Self> {
        let (a2, b2) = (other.a_card, other.b_card);
        Self::from_fn(self.a_card * a2, self.b_card * b2, |a, b| {
            self.get(a / a2, b / b2) * other.get(a % a2, b % b2)
        })
    }

    /// Pushes each side through a local stochastic map; `map_a[a][a2]` is
    /// the probability of `a2` given `a`.
    pub fn apply_local_maps(&self, map_a: &[Vec<f64>], map_b: &[Vec<f64>]) -> Result<Self> {
        if map_a.len() != self.a_card || map_b.len() != self.b_card {
            return Err(Error::ShapeMismatch(
                "local map rows must match alphabets".into(),
            ));
        }
        let a_out = map_a.first().map_or(0, Vec::len);
        let b_out = map_b.first().map_or(0, Vec::len);
        if map_a.iter().any(|r| r.len() != a_out) || map_b.iter().any(|r| r.len() != b_out) {
            return Err(Error::ShapeMismatch("ragged local map".into()));
        }
        let mut out = vec![0.0; a_out * b_out];
        for a in 0..self.a_card {
            for b in 0..self.b_card {
                let p = self.get(a, b);
                if p == 0.0 {
                    continue;
                }
                for (a2, &ka) in map_a[a].iter().enumerate() {
                    for (b2, &kb) in map_b[b].iter().enumerate() {
                        out[a2 * b_out + b2] += p * ka * kb;
                    }
                }
            }
        }
        Self::new(a_out, b_out, out)
    }

    /// Labelled view with variables `(a_name, b_name)`.
    pub fn to_table(&self, a_name: &str, b_name: &str) -> TableDistribution {
        TableDistribution {
            vars: vec![
                Variable {
                    name: a_name.to_string(),
                    card: self.a_card,
                },
                Variable {
                    name: b_name.to_string(),
                    card: self.b_card,
                },
            ],
            probs: self.probs.clone(),
        }
    }

    pub fn entropy_a(&self) -> f64 {
        entropy_nats(&self.p_a)
    }

    pub fn entropy_b(&self) -> f64 {
        entropy_nats(&self.p_b)
    }

    pub fn entropy_joint(&self) -> f64 {
        entropy_nats(&self.probs)
    }

    pub fn mutual_information(&self) -> f64 {
        (self.entropy_a() + self.entropy_b() - self.entropy_joint()).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub card: usize,
}

/// A dense joint law over an ordered list of named finite variables, stored
/// row-major with the last variable varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct TableDistribution {
    vars: Vec<Variable>,
    probs: Vec<f64>,
}

impl TableDistribution {
    pub fn new<S: Into<String>>(vars: Vec<(S, usize)>, mut probs: Vec<f64>) -> Result<Self> {
        let vars: Vec<Variable> = vars
            .into_iter()
            .map(|(name, card)| Variable {
                name: name.into(),
                card,
            })
            .collect();
        let mut seen = HashSet::new();
        for v in &vars {
            if v.card == 0 {
                return Err(Error::InvalidDistribution(format!(
                    "variable `{}` has no symbols",
                    v.name
                )));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidDistribution(format!(
                    "duplicate variable `{}`",
                    v.name
                )));
            }
        }
        let entries = table_size(vars.iter().map(|v| v.card))?;
        if probs.len() != entries {
            return Err(Error::ShapeMismatch(format!(
                "expected {entries} probabilities, got {}",
                probs.len()
            )));
        }
        check_and_normalize(&mut probs, NORMALIZATION_TOLERANCE)?;
        Ok(TableDistribution { vars, probs })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Probability of a full assignment, in variable order.
    pub fn get(&self, assignment: &[usize]) -> f64 {
        let mut idx = 0;
        for (v, &s) in self.vars.iter().zip(assignment) {
            idx = idx * v.card + s;
        }
        self.probs[idx]
    }

    /// Marginal on `names`, with variables in the order given.
    pub fn marginal(&self, names: &[&str]) -> Result<TableDistribution> {
        let positions = names
            .iter()
            .map(|n| self.position(n))
            .collect::<Result<Vec<_>>>()?;
        let mut seen = HashSet::new();
        for n in names {
            if !seen.insert(*n) {
                return Err(Error::OverlappingVariables(n.to_string()));
            }
        }
        let out_vars: Vec<Variable> = positions.iter().map(|&p| self.vars[p].clone()).collect();
        // stride of each source variable inside the output table (0 if summed out)
        let mut out_stride = vec![0usize; self.vars.len()];
        let mut stride = 1;
        for &p in positions.iter().rev() {
            out_stride[p] = stride;
            stride *= self.vars[p].card;
        }
        let mut out = vec![0.0; stride];
        let mut digits = vec![0usize; self.vars.len()];
        let mut target = 0usize;
        for &p in &self.probs {
            out[target] += p;
            // odometer increment, last variable fastest
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                target += out_stride[k];
                if digits[k] < self.vars[k].card {
                    break;
                }
                target -= out_stride[k] * digits[k];
                digits[k] = 0;
            }
        }
        Ok(TableDistribution {
            vars: out_vars,
            probs: out,
        })
    }

    /// Entropy (nats) of the marginal on `names`. An empty set has entropy 0.
    pub fn entropy(&self, names: &[&str]) -> Result<f64> {
        if names.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy_nats(&self.marginal(names)?.probs))
    }

    /// `I(A; B | C)` in nats. The three sets must be disjoint.
    pub fn mutual_information(&self, a: &[&str], b: &[&str], given: &[&str]) -> Result<f64> {
        let mut seen = HashSet::new();
        for n in a.iter().chain(b).chain(given) {
            self.position(n)?;
            if !seen.insert(*n) {
                return Err(Error::OverlappingVariables(n.to_string()));
            }
        }
        let ac: Vec<&str> = a.iter().chain(given).copied().collect();
        let bc: Vec<&str> = b.iter().chain(given).copied().collect();
        let abc: Vec<&str> = a.iter().chain(b).chain(given).copied().collect();
        let value =
            self.entropy(&ac)? + self.entropy(&bc)? - self.entropy(&abc)? - self.entropy(given)?;
        Ok(if (-1e-12..0.0).contains(&value) {
            0.0
        } else {
            value
        })
    }

    /// Three-way information `I(A; B; C | D) = I(A; B | D) - I(A; B | C D)`.
    pub fn interaction_information(
        &self,
        a: &[&str],
        b: &[&str],
        c: &[&str],
        given: &[&str],
    ) -> Result<f64> {
        let cd: Vec<&str> = c.iter().chain(given).copied().collect();
        Ok(self.mutual_information(a, b, given)? - self.mutual_information(a, b, &cd)?)
    }
}

pub(crate) fn table_size(cards: impl IntoIterator<Item = usize>) -> Result<usize> {
    let mut entries: usize = 1;
    for c in cards {
        entries = entries.saturating_mul(c);
        if entries > MAX_TABLE_ENTRIES {
            return Err(Error::TableTooLarge {
                entries,
                cap: MAX_TABLE_ENTRIES,
            });
        }
    }
    Ok(entries)
}

/// A real function `f(a, b)` attached to a bipartite alphabet. Entries off
/// the support of whatever distribution it is paired with are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportFunction {
    a_card: usize,
    b_card: usize,
    values: Vec<f64>,
}

impl SupportFunction {
    pub fn new(a_card: usize, b_card: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != a_card * b_card {
            return Err(Error::ShapeMismatch(format!(
                "function needs {} values, got {}",
                a_card * b_card,
                values.len()
            )));
        }
        Ok(SupportFunction {
            a_card,
            b_card,
            values,
        })
    }

    pub fn from_fn(a_card: usize, b_card: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..a_card)
            .flat_map(|a| (0..b_card).map(move |b| (a, b)))
            .map(|(a, b)| f(a, b))
            .collect();
        SupportFunction {
            a_card,
            b_card,
            values,
        }
    }

    pub fn constant(a_card: usize, b_card: usize, c: f64) -> Self {
        Self::from_fn(a_card, b_card, |_, _| c)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.b_card + b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn a_card(&self) -> usize {
        self.a_card
    }

    pub fn b_card(&self) -> usize {
        self.b_card
    }

    fn check(&self, dist: &JointDistribution) -> Result<()> {
        if self.a_card != dist.a_card || self.b_card != dist.b_card {
            return Err(Error::ShapeMismatch(format!(
                "function is {}x{} but distribution is {}x{}",
                self.a_card, self.b_card, dist.a_card, dist.b_card
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SupportFunction {
            a_card: self.a_card,
            b_card: self.b_card,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// A function of one side, defined only on symbols with positive marginal
/// mass (`None` elsewhere).
#[derive(Clone, Debug, PartialEq)]
pub struct SideFunction(pub Vec<Option<f64>>);

impl SideFunction {
    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Values with undefined symbols read as zero.
    pub fn values_or_zero(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.unwrap_or(0.0)).collect()
    }

    /// `E[h]` against a marginal.
    pub fn expectation(&self, marginal: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(marginal)
            .filter_map(|(v, &p)| v.map(|v| p * v))
            .sum()
    }

    pub fn variance(&self, marginal: &[f64]) -> f64 {
        let mean = self.expectation(marginal);
        self.0
            .iter()
            .zip(marginal)
            .filter_map(|(v, &p)| v.map(|v| p * (v - mean).powi(2)))
            .sum()
    }
}

impl fmt::Display for SideFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|v| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}")))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// `E[f]` over the support of `dist`.
pub fn expectation(dist: &JointDistribution, f: &SupportFunction) -> Result<f64> {
    f.check(dist)?;
    Ok(dist
        .support()
        .into_iter()
        .map(|(a, b)| dist.get(a, b) * f.get(a, b))
        .sum())
}

/// Conditional expectation of `f` given one side: `E_{B|A}[f]` as a
/// function of `a` when `given == Side::A`, `E_{A|B}[f]` as a function of
/// `b` otherwise.
pub fn conditional_expectation(
    dist: &JointDistribution,
    f: &SupportFunction,
    given: Side,
) -> Result<SideFunction> {
    f.check(dist)?;
    let marginal = dist.marginal(given);
    let mut sums = vec![0.0; marginal.len()];
    for (a, b) in dist.support() {
        let key = if given == Side::A { a } else { b };
        sums[key] += dist.get(a, b) * f.get(a, b);
    }
    Ok(SideFunction(
        sums.into_iter()
            .zip(marginal)
            .map(|(s, &m)| (m > SUPPORT_EPSILON).then(|| s / m))
            .collect(),
    ))
}

/// The two laws of total variance of a function on a bipartite support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceDecomposition {
    pub total: f64,
    /// `Var_A E_{B|A}[f]`
    pub var_of_cond_mean_a: f64,
    /// `E_A Var_{B|A}[f]`
    pub mean_of_cond_var_a: f64,
    /// `Var_B E_{A|B}[f]`
    pub var_of_cond_mean_b: f64,
    /// `E_B Var_{A|B}[f]`
    pub mean_of_cond_var_b: f64,
}

pub fn variance_decomposition(
    dist: &JointDistribution,
    f: &SupportFunction,
) -> Result<VarianceDecomposition> {
    let mean = expectation(dist, f)?;
    let support = dist.support();
    let total = support
        .iter()
        .map(|&(a, b)| dist.get(a, b) * (f.get(a, b) - mean).powi(2))
        .sum();

    let one_side = |given: Side| -> Result<(f64, f64)> {
        let cond = conditional_expectation(dist, f, given)?;
        let marginal = dist.marginal(given);
        let var_of_mean = cond.variance(marginal);
        let mut mean_of_var = 0.0;
        for &(a, b) in &support {
            let key = if given == Side::A { a } else { b };
            let c = cond.get(key).expect("support symbol has positive marginal");
            mean_of_var += dist.get(a, b) * (f.get(a, b) - c).powi(2);
        }
        Ok((var_of_mean, mean_of_var))
    };
    let (var_of_cond_mean_a, mean_of_cond_var_a) = one_side(Side::A)?;
    let (var_of_cond_mean_b, mean_of_cond_var_b) = one_side(Side::B)?;
    Ok(VarianceDecomposition {
        total,
        var_of_cond_mean_a,
        mean_of_cond_var_a,
        var_of_cond_mean_b,
        mean_of_cond_var_b,
    })
}
