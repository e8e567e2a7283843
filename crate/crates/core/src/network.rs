//! The immutable discrete Bayesian network and the values that flow through
//! inference: evidence and per-variable posteriors.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Tolerance on CPT row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub values: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, values: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Variable {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }
}

/// A discrete Bayesian network.
///
/// Variables are indexed densely in declaration order. The CPT of variable
/// `i` is a flat array of `|V_i| * prod(|parents|)` entries: rows are
/// enumerated row-major over the parents in declared order (first parent
/// slowest) and each row holds the child's distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    variables: Vec<Variable>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    cpts: Vec<Vec<f64>>,
    topo_order: Vec<usize>,
}

impl Network {
    pub fn new(
        name: impl Into<String>,
        variables: Vec<Variable>,
        parents: Vec<Vec<usize>>,
        cpts: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = variables.len();
        if parents.len() != n || cpts.len() != n {
            return Err(Error::InvalidNetwork(format!(
                "{} variables but {} parent lists and {} tables",
                n,
                parents.len(),
                cpts.len()
            )));
        }
        for (i, var) in variables.iter().enumerate() {
            if var.cardinality() == 0 {
                return Err(Error::InvalidNetwork(format!("variable `{}` has no values", var.name)));
            }
            if variables[..i].iter().any(|v| v.name == var.name) {
                return Err(Error::DuplicateVariable(var.name.clone()));
            }
        }
        let mut children = vec![Vec::new(); n];
        for (child, ps) in parents.iter().enumerate() {
            for (k, &p) in ps.iter().enumerate() {
                if p >= n {
                    return Err(Error::InvalidNetwork(format!("parent index {p} out of range")));
                }
                if p == child || ps[..k].contains(&p) {
                    return Err(Error::InvalidNetwork(format!(
                        "variable `{}` lists parent `{}` twice or as itself",
                        variables[child].name, variables[p].name
                    )));
                }
                children[p].push(child);
            }
        }
        for (i, table) in cpts.iter().enumerate() {
            let card = variables[i].cardinality();
            let rows: usize = parents[i].iter().map(|&p| variables[p].cardinality()).product();
            if table.len() != rows * card {
                return Err(Error::VectorLengthMismatch {
                    variable: variables[i].name.clone(),
                    expected: rows * card,
                    found: table.len(),
                });
            }
            for row in table.chunks(card) {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidDistribution {
                        variable: variables[i].name.clone(),
                        sum,
                    });
                }
            }
        }
        let topo_order = topological_order(&parents, &children).map_err(|v| Error::Cycle(variables[v].name.clone()))?;
        Ok(Network {
            name: name.into(),
            variables,
            parents,
            children,
            cpts,
            topo_order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, i: usize) -> &Variable {
        &self.variables[i]
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.variables[i].cardinality()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::cardinality).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn cpt(&self, i: usize) -> &[f64] {
        &self.cpts[i]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// `sum_i (|V_i| - 1) * prod_{p in parents(i)} |V_p|`.
    pub fn free_parameters(&self) -> usize {
        (0..self.num_variables())
            .map(|i| {
                let rows: usize = self.parents[i].iter().map(|&p| self.cardinality(p)).product();
                (self.cardinality(i) - 1) * rows
            })
            .sum()
    }

    /// Width of the one-hot observation encoding, `sum_i |V_i|`.
    pub fn evidence_dim(&self) -> usize {
        self.variables.iter().map(Variable::cardinality).sum()
    }

    /// Row of variable `i`'s CPT selected by the parent values in `assignment`.
    /// Only the parent entries of `assignment` are read.
    pub fn cpt_row(&self, i: usize, assignment: &[usize]) -> &[f64] {
        let card = self.cardinality(i);
        let row = self.row_index(i, assignment);
        &self.cpts[i][row * card..(row + 1) * card]
    }

    fn row_index(&self, i: usize, assignment: &[usize]) -> usize {
        self.parents[i]
            .iter()
            .fold(0, |acc, &p| acc * self.cardinality(p) + assignment[p])
    }

    /// `prod_i P(x_i | parents(x_i))`, accumulated in log space.
    ///
    /// # Panics
    /// If `assignment` does not cover every variable or holds an
    /// out-of-range value.
    pub fn joint_probability(&self, assignment: &[usize]) -> f64 {
        assert_eq!(
            assignment.len(),
            self.num_variables(),
            "assignment must cover every variable"
        );
        let mut log_p = 0.0;
        for i in 0..self.num_variables() {
            assert!(assignment[i] < self.cardinality(i), "value out of range");
            let p = self.cpt_row(i, assignment)[assignment[i]];
            if p == 0.0 {
                return 0.0;
            }
            log_p += libm::log(p);
        }
        libm::exp(log_p)
    }

    /// Number of joint states, saturating at `usize::MAX`.
    pub fn joint_state_count(&self) -> usize {
        self.variables
            .iter()
            .fold(1usize, |acc, v| acc.saturating_mul(v.cardinality()))
    }
}

/// Kahn's algorithm with smallest-index tie breaking. On a cycle returns one
/// variable on it.
fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> core::result::Result<Vec<usize>, usize> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: alloc::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&i| indegree[i] > 0).unwrap_or(0))
    }
}

/// A partial assignment: variable index to observed value index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Evidence {
    observed: BTreeMap<usize, usize>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evidence from `(variable name, value label)` pairs.
    pub fn from_labels<'a, I>(net: &Network, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut ev = Evidence::new();
        for (name, label) in pairs {
            let var = net
                .index_of(name)
                .ok_or_else(|| Error::UndeclaredVariable(name.into()))?;
            let value = net
                .variable(var)
                .value_index(label)
                .ok_or_else(|| Error::UnknownValue {
                    variable: name.into(),
                    value: label.into(),
                })?;
            ev.observe(var, value);
        }
        Ok(ev)
    }

    /// A full assignment as evidence.
    pub fn from_assignment(assignment: &[usize]) -> Self {
        Evidence {
            observed: assignment.iter().copied().enumerate().collect(),
        }
    }

    pub fn observe(&mut self, variable: usize, value: usize) -> &mut Self {
        self.observed.insert(variable, value);
        self
    }

    pub fn with(mut self, variable: usize, value: usize) -> Self {
        self.observe(variable, value);
        self
    }

    pub fn get(&self, variable: usize) -> Option<usize> {
        self.observed.get(&variable).copied()
    }

    pub fn is_observed(&self, variable: usize) -> bool {
        self.observed.contains_key(&variable)
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// `(variable, value)` pairs in variable order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.observed.iter().map(|(&k, &v)| (k, v))
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        for (var, value) in self.iter() {
            if var >= net.num_variables() {
                return Err(Error::InvalidArgument(format!("variable index {var} out of range")));
            }
            if value >= net.cardinality(var) {
                return Err(Error::ValueOutOfRange {
                    variable: var,
                    value,
                    cardinality: net.cardinality(var),
                });
            }
        }
        Ok(())
    }

    /// True when `assignment` agrees with every observation.
    pub fn consistent_with(&self, assignment: &[usize]) -> bool {
        self.iter().all(|(var, value)| assignment[var] == value)
    }
}

/// One categorical distribution per network variable, stored back to back.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PosteriorSet {
    values: Vec<f64>,
    /// Block `i` is `values[offsets[i]..offsets[i + 1]]`.
    offsets: Vec<usize>,
}

impl PosteriorSet {
    pub fn new(distributions: Vec<Vec<f64>>) -> Self {
        let mut offsets = Vec::with_capacity(distributions.len() + 1);
        offsets.push(0);
        let mut values = Vec::new();
        for d in distributions {
            values.extend(d);
            offsets.push(values.len());
        }
        PosteriorSet { values, offsets }
    }

    /// Splits a flat vector into blocks of the given sizes.
    pub fn from_flat(flat: &[f64], cardinalities: &[usize]) -> Result<Self> {
        Self::from_flat_vec(flat.to_vec(), cardinalities)
    }

    /// [`PosteriorSet::from_flat`] taking ownership of the values.
    pub fn from_flat_vec(values: Vec<f64>, cardinalities: &[usize]) -> Result<Self> {
        let total: usize = cardinalities.iter().sum();
        if values.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                found: values.len(),
            });
        }
        let mut offsets = Vec::with_capacity(cardinalities.len() + 1);
        offsets.push(0);
        let mut end = 0;
        for &c in cardinalities {
            end += c;
            offsets.push(end);
        }
        Ok(PosteriorSet { values, offsets })
    }

    pub fn degenerate(cardinality: usize, value: usize) -> Vec<f64> {
        let mut v = vec![0.0; cardinality];
        v[value] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, variable: usize) -> &[f64] {
        &self.values[self.offsets[variable]..self.offsets[variable + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.offsets.windows(2).map(|w| &self.values[w[0]..w[1]])
    }

    /// All blocks concatenated.
    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Largest `|sum - 1|` over all blocks.
    pub fn max_normalization_error(&self) -> f64 {
        self.iter()
            .map(|d| (d.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest entry-wise absolute difference; `None` if shapes differ.
    pub fn max_abs_diff(&self, other: &PosteriorSet) -> Option<f64> {
        if self.offsets != other.offsets {
            return None;
        }
        Some(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        )
    }
}
