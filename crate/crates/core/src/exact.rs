//! Exact posterior marginals by variable elimination.
//!
//! Each query variable gets its own elimination run over the factors of its
//! ancestral set (query plus evidence ancestors); barren descendants sum to
//! one and are dropped. Evidence is applied by slicing CPT factors before
//! elimination.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::network::{Evidence, Network, PosteriorSet};
use crate::rng::RngSeed;

/// `P(O)` below this is treated as impossible evidence.
pub const IMPOSSIBLE_EVIDENCE_THRESHOLD: f64 = 1e-12;

/// A non-negative table over a set of discrete variables, stored row-major
/// (last scope variable fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    pub fn new(scope: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if scope.len() != cards.len() {
            return Err(Error::DimensionMismatch {
                expected: scope.len(),
                found: cards.len(),
            });
        }
        let size: usize = cards.iter().product();
        if values.len() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: values.len(),
            });
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("factor entries must be non-negative".into()));
        }
        for (k, v) in scope.iter().enumerate() {
            if scope[..k].contains(v) {
                return Err(Error::InvalidArgument("factor scope repeats a variable".into()));
            }
        }
        Ok(Factor { scope, cards, values })
    }

    /// The empty-scope factor holding `value`.
    pub fn constant(value: f64) -> Self {
        Factor {
            scope: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    /// `P(X_i | parents)` as a factor over `parents ++ [i]`.
    pub fn from_cpt(net: &Network, i: usize) -> Self {
        let mut scope = net.parents(i).to_vec();
        scope.push(i);
        let cards = scope.iter().map(|&v| net.cardinality(v)).collect();
        Factor {
            scope,
            cards,
            values: net.cpt(i).to_vec(),
        }
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, var: usize) -> bool {
        self.scope.contains(&var)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Pointwise product over the union of scopes. The result's scope is
    /// `self`'s scope followed by `other`'s variables not already present.
    pub fn product(&self, other: &Factor) -> Factor {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (&v, &c) in other.scope.iter().zip(&other.cards) {
            if !scope.contains(&v) {
                scope.push(v);
                cards.push(c);
            }
        }
        let a_strides = strides_in(&scope, &self.scope, &self.cards);
        let b_strides = strides_in(&scope, &other.scope, &other.cards);
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut counter = vec![0usize; scope.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ia] * other.values[ib]);
            // Odometer increment, last axis fastest.
            for axis in (0..scope.len()).rev() {
                counter[axis] += 1;
                ia += a_strides[axis];
                ib += b_strides[axis];
                if counter[axis] < cards[axis] {
                    break;
                }
                ia -= a_strides[axis] * cards[axis];
                ib -= b_strides[axis] * cards[axis];
                counter[axis] = 0;
            }
        }
        Factor { scope, cards, values }
    }

    /// Sums `var` out.
    pub fn marginalize(&self, var: usize) -> Result<Factor> {
        let (k, outer, card, inner) = self.split_axis(var)?;
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..card {
                let src = &self.values[(o * card + j) * inner..(o * card + j + 1) * inner];
                for (dst, &s) in values[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += s;
                }
            }
        }
        Ok(self.without_axis(k, values))
    }

    /// Keeps only the slice where `var == value` and drops `var`.
    pub fn reduce(&self, var: usize, value: usize) -> Result<Factor> {
        let (k, outer, card, inner) = self.split_axis(var)?;
        if value >= card {
            return Err(Error::ValueOutOfRange {
                variable: var,
                value,
                cardinality: card,
            });
        }
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * card + value) * inner;
            values.extend_from_slice(&self.values[start..start + inner]);
        }
        Ok(self.without_axis(k, values))
    }

    /// Entry at the given per-scope-position values.
    pub fn value_at(&self, index: &[usize]) -> f64 {
        let flat = index.iter().zip(&self.cards).fold(0, |acc, (&i, &c)| acc * c + i);
        self.values[flat]
    }

    fn split_axis(&self, var: usize) -> Result<(usize, usize, usize, usize)> {
        let k = self
            .scope
            .iter()
            .position(|&v| v == var)
            .ok_or(Error::NotInScope { variable: var })?;
        let outer: usize = self.cards[..k].iter().product();
        let inner: usize = self.cards[k + 1..].iter().product();
        Ok((k, outer, self.cards[k], inner))
    }

    fn without_axis(&self, k: usize, values: Vec<f64>) -> Factor {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(k);
        cards.remove(k);
        Factor { scope, cards, values }
    }
}

/// For each variable of `target`, its stride within a factor over `scope`
/// (zero when absent).
fn strides_in(target: &[usize], scope: &[usize], cards: &[usize]) -> Vec<usize> {
    let mut own = vec![0usize; scope.len()];
    let mut s = 1;
    for k in (0..scope.len()).rev() {
        own[k] = s;
        s *= cards[k];
    }
    target
        .iter()
        .map(|v| scope.iter().position(|x| x == v).map_or(0, |k| own[k]))
        .collect()
}

/// How to order the variables summed out in each elimination run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum EliminationOrder {
    /// Greedy minimum-degree on the interaction graph, ties by lowest index.
    #[default]
    MinDegree,
    /// A fixed priority: variables are eliminated in the order they appear
    /// here. Variables not listed go last, by index.
    Fixed(Vec<usize>),
    /// A seeded random permutation.
    Random(RngSeed),
}

/// Posterior of every variable given `ev`, and `P(O)`.
pub fn exact_posteriors(net: &Network, ev: &Evidence) -> Result<(PosteriorSet, f64)> {
    exact_posteriors_with(net, ev, &EliminationOrder::MinDegree)
}

pub fn exact_posteriors_with(net: &Network, ev: &Evidence, order: &EliminationOrder) -> Result<(PosteriorSet, f64)> {
    ev.validate(net)?;
    let priority = priority_list(net, order);

    let p_evidence = if ev.is_empty() {
        1.0
    } else {
        eliminate_all_but(net, ev, None, priority.as_deref())?.total()
    };
    if !(p_evidence >= IMPOSSIBLE_EVIDENCE_THRESHOLD) {
        return Err(Error::ImpossibleEvidence {
            probability: p_evidence,
        });
    }

    let mut dists = Vec::with_capacity(net.num_variables());
    for q in 0..net.num_variables() {
        if let Some(value) = ev.get(q) {
            dists.push(PosteriorSet::degenerate(net.cardinality(q), value));
            continue;
        }
        let f = eliminate_all_but(net, ev, Some(q), priority.as_deref())?;
        let total = f.total();
        if !(total > 0.0) {
            return Err(Error::ImpossibleEvidence { probability: total });
        }
        dists.push(f.values.iter().map(|v| v / total).collect());
    }
    Ok((PosteriorSet::new(dists), p_evidence))
}

/// `P(O)` alone.
pub fn evidence_probability(net: &Network, ev: &Evidence) -> Result<f64> {
    ev.validate(net)?;
    if ev.is_empty() {
        return Ok(1.0);
    }
    Ok(eliminate_all_but(net, ev, None, None)?.total())
}

fn priority_list(net: &Network, order: &EliminationOrder) -> Option<Vec<usize>> {
    match order {
        EliminationOrder::MinDegree => None,
        EliminationOrder::Fixed(list) => Some(list.clone()),
        EliminationOrder::Random(seed) => {
            let mut list: Vec<usize> = (0..net.num_variables()).collect();
            list.shuffle(&mut seed.rng());
            Some(list)
        }
    }
}

/// Ancestral closure of the observed variables and `query`.
fn relevant_variables(net: &Network, ev: &Evidence, query: Option<usize>) -> Vec<bool> {
    let mut keep = vec![false; net.num_variables()];
    let mut stack: Vec<usize> = ev.iter().map(|(v, _)| v).chain(query).collect();
    while let Some(v) = stack.pop() {
        if !keep[v] {
            keep[v] = true;
            stack.extend_from_slice(net.parents(v));
        }
    }
    keep
}

/// Runs elimination over the relevant subnetwork, leaving a factor over
/// `query` (or a scalar factor holding `P(O)` when `query` is `None`).
/// The result is unnormalized: it sums to `P(O)`.
fn eliminate_all_but(net: &Network, ev: &Evidence, query: Option<usize>, priority: Option<&[usize]>) -> Result<Factor> {
    let keep = relevant_variables(net, ev, query);
    let mut factors = Vec::new();
    for i in (0..net.num_variables()).filter(|&i| keep[i]) {
        let mut f = Factor::from_cpt(net, i);
        for &v in net.parents(i).iter().chain(core::iter::once(&i)) {
            if let Some(value) = ev.get(v) {
                f = f.reduce(v, value)?;
            }
        }
        factors.push(f);
    }
    let to_eliminate: Vec<usize> = (0..net.num_variables())
        .filter(|&v| keep[v] && !ev.is_observed(v) && Some(v) != query)
        .collect();
    let order = match priority {
        None => min_degree_order(&factors, &to_eliminate, net.num_variables()),
        Some(list) => {
            let mut order: Vec<usize> = list.iter().copied().filter(|v| to_eliminate.contains(v)).collect();
            order.extend(to_eliminate.iter().copied().filter(|v| !list.contains(v)));
            order
        }
    };

    for var in order {
        let (with, without): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.contains(var));
        factors = without;
        if let Some(joined) = with.into_iter().reduce(|a, b| a.product(&b)) {
            factors.push(joined.marginalize(var)?);
        }
    }
    // The query's own CPT factor is always kept, so the result is over
    // exactly `[query]` (or empty when `query` is None).
    Ok(factors
        .into_iter()
        .reduce(|a, b| a.product(&b))
        .unwrap_or_else(|| Factor::constant(1.0)))
}

fn min_degree_order(factors: &[Factor], to_eliminate: &[usize], n: usize) -> Vec<usize> {
    use alloc::collections::BTreeSet;
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for f in factors {
        for &a in &f.scope {
            for &b in &f.scope {
                if a != b {
                    adjacency[a].insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<usize> = to_eliminate.iter().copied().collect();
    let mut order = Vec::with_capacity(remaining.len());
    while let Some(&next) = remaining.iter().min_by_key(|&&v| (adjacency[v].len(), v)) {
        remaining.remove(&next);
        order.push(next);
        let neighbours: Vec<usize> = adjacency[next].iter().copied().collect();
        for &a in &neighbours {
            adjacency[a].remove(&next);
            for &b in &neighbours {
                if a != b {
                    adjacency[a].insert(b);
                }
            }
        }
        adjacency[next].clear();
    }
    order
}
