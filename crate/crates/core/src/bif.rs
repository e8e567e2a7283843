//! Reader and canonical writer for the BIF 0.15 text format.
//!
//! Supported subset: `network NAME { ... }`, `variable NAME { type discrete
//! [ N ] { v1, v2, ... }; }`, `probability ( child | p1, p2 ) { (a, b) p, q;
//! ... }` and the root form `probability ( child ) { table p, q; }`.
//! `property ...;` statements are accepted anywhere inside a block and
//! ignored. `//` and `/* */` comments are skipped.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::network::{Network, Variable, ROW_SUM_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub struct BifDocument {
    pub network_name: String,
    pub variables: Vec<BifVariable>,
    pub probability_blocks: Vec<BifProbability>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifVariable {
    pub name: String,
    pub values: Vec<String>,
}

/// A conditional probability table with rows in canonical order: row-major
/// over the parents as listed, each parent's values in declared order.
#[derive(Debug, Clone, PartialEq)]
pub struct BifProbability {
    pub child: String,
    pub parents: Vec<String>,
    pub rows: Vec<BifRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifRow {
    /// Empty for a root table.
    pub parent_values: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl BifDocument {
    pub fn variable(&self, name: &str) -> Option<&BifVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn edge_count(&self) -> usize {
        self.probability_blocks.iter().map(|b| b.parents.len()).sum()
    }
}

/// Parses and validates a BIF document.
pub fn parse_bif(source: &str) -> Result<BifDocument> {
    let tokens = lex(source)?;
    let raw = Parser { tokens, pos: 0 }.document()?;
    validate(raw)
}

/// Parses a BIF document straight into a [`Network`].
pub fn parse_network(source: &str) -> Result<Network> {
    to_network(&parse_bif(source)?)
}

/// Builds the network: variables in declared order, edges from the
/// probability blocks, CPT rows in canonical order.
pub fn to_network(doc: &BifDocument) -> Result<Network> {
    let index: BTreeMap<&str, usize> = doc
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let variables: Vec<Variable> = doc
        .variables
        .iter()
        .map(|v| Variable::new(v.name.clone(), v.values.iter().cloned()))
        .collect();
    let mut parents = Vec::with_capacity(variables.len());
    let mut cpts = Vec::with_capacity(variables.len());
    for var in &doc.variables {
        let block = doc
            .probability_blocks
            .iter()
            .find(|b| b.child == var.name)
            .ok_or_else(|| Error::MissingProbability(var.name.clone()))?;
        let ps = block
            .parents
            .iter()
            .map(|p| {
                index
                    .get(p.as_str())
                    .copied()
                    .ok_or_else(|| Error::UndeclaredVariable(p.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        parents.push(ps);
        cpts.push(
            block
                .rows
                .iter()
                .flat_map(|r| r.probabilities.iter().copied())
                .collect(),
        );
    }
    Network::new(doc.network_name.clone(), variables, parents, cpts)
}

/// Writes the canonical text form: variables in declared order, then one
/// probability block per declared variable, rows in canonical order.
/// Probabilities are printed as the shortest decimal that reads back to the
/// same `f64`, so parsing the output reproduces the document exactly.
pub fn serialize(doc: &BifDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "network {} {{\n}}", doc.network_name);
    for var in &doc.variables {
        let _ = writeln!(
            out,
            "variable {} {{\n  type discrete [ {} ] {{ {} }};\n}}",
            var.name,
            var.values.len(),
            var.values.join(", ")
        );
    }
    for var in &doc.variables {
        let Some(block) = doc.probability_blocks.iter().find(|b| b.child == var.name) else {
            continue;
        };
        if block.parents.is_empty() {
            let _ = writeln!(out, "probability ( {} ) {{", block.child);
        } else {
            let _ = writeln!(out, "probability ( {} | {} ) {{", block.child, block.parents.join(", "));
        }
        for row in &block.rows {
            let probs = row
                .probabilities
                .iter()
                .map(|p| format_probability(*p))
                .collect::<Vec<_>>()
                .join(", ");
            if block.parents.is_empty() {
                let _ = writeln!(out, "  table {probs};");
            } else {
                let _ = writeln!(out, "  ({}) {probs};", row.parent_values.join(", "));
            }
        }
        out.push_str("}\n");
    }
    out
}

fn format_probability(p: f64) -> String {
    let s = p.to_string();
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const PUNCT: &str = "{}()[],;|";

fn lex(source: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = source.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let (start_line, start_col) = (line, column);
        if c.is_whitespace() {
            bump!();
        } else if c == '/' {
            bump!();
            match chars.peek() {
                Some('/') => {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        bump!();
                    }
                }
                Some('*') => {
                    bump!();
                    let mut prev = '\0';
                    loop {
                        match bump!() {
                            Some('/') if prev == '*' => break,
                            Some(c) => prev = c,
                            None => {
                                return Err(Error::Syntax {
                                    line: start_line,
                                    column: start_col,
                                    message: "unterminated block comment".into(),
                                })
                            }
                        }
                    }
                }
                _ => {
                    let mut word = String::from("/");
                    while let Some(&c) = chars.peek() {
                        if c.is_whitespace() || PUNCT.contains(c) || c == '"' {
                            break;
                        }
                        word.push(c);
                        bump!();
                    }
                    tokens.push(Token {
                        tok: Tok::Word(word),
                        line: start_line,
                        column: start_col,
                    });
                }
            }
        } else if c == '"' {
            bump!();
            let mut word = String::new();
            loop {
                match bump!() {
                    Some('"') => break,
                    Some(c) => word.push(c),
                    None => {
                        return Err(Error::Syntax {
                            line: start_line,
                            column: start_col,
                            message: "unterminated string".into(),
                        })
                    }
                }
            }
            tokens.push(Token {
                tok: Tok::Word(word),
                line: start_line,
                column: start_col,
            });
        } else if PUNCT.contains(c) {
            bump!();
            tokens.push(Token {
                tok: Tok::Punct(c),
                line: start_line,
                column: start_col,
            });
        } else {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() || PUNCT.contains(c) || c == '"' {
                    break;
                }
                if c == '/' && word.ends_with('/') {
                    break;
                }
                word.push(c);
                bump!();
            }
            tokens.push(Token {
                tok: Tok::Word(word),
                line: start_line,
                column: start_col,
            });
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parsing

struct RawProbability {
    child: String,
    parents: Vec<String>,
    table: Option<Vec<f64>>,
    rows: Vec<(Vec<String>, Vec<f64>)>,
}

struct RawDocument {
    name: String,
    variables: Vec<BifVariable>,
    blocks: Vec<RawProbability>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn error_here(&self, message: impl Into<String>) -> Error {
        let (line, column) = match self.tokens.get(self.pos).or(self.tokens.last()) {
            Some(t) => (t.line, t.column),
            None => (1, 1),
        };
        Error::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn at_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(s)) if s == w)
    }

    fn punct(&mut self, c: char) -> Result<()> {
        if self.at_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{c}`, found {}", self.describe())))
        }
    }

    fn word(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error_here(format!("expected a name, found {}", self.describe()))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        if self.at_word(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{kw}`, found {}", self.describe())))
        }
    }

    fn number(&mut self) -> Result<f64> {
        let here = self.pos;
        let w = self.word()?;
        match w.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => {
                self.pos = here;
                Err(self.error_here(format!("expected a probability, found `{w}`")))
            }
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            Some(Tok::Word(w)) => format!("`{w}`"),
            Some(Tok::Punct(c)) => format!("`{c}`"),
            None => "end of input".into(),
        }
    }

    /// `property` up to and including the next `;`.
    fn skip_property(&mut self) -> Result<()> {
        self.keyword("property")?;
        while !self.at_punct(';') {
            if self.peek().is_none() {
                return Err(self.error_here("unterminated property"));
            }
            self.pos += 1;
        }
        self.pos += 1;
        Ok(())
    }

    fn comma_list<T>(&mut self, close: char, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        let mut items = Vec::new();
        if self.at_punct(close) {
            return Ok(items);
        }
        loop {
            items.push(item(self)?);
            if self.at_punct(',') {
                self.pos += 1;
            } else {
                return Ok(items);
            }
        }
    }

    fn document(mut self) -> Result<RawDocument> {
        let mut doc = RawDocument {
            name: String::new(),
            variables: Vec::new(),
            blocks: Vec::new(),
        };
        let mut saw_network = false;
        while let Some(tok) = self.peek() {
            match tok {
                Tok::Word(w) if w == "network" => {
                    if saw_network {
                        return Err(self.error_here("second `network` declaration"));
                    }
                    saw_network = true;
                    self.pos += 1;
                    doc.name = self.word()?;
                    self.punct('{')?;
                    while !self.at_punct('}') {
                        self.skip_property()?;
                    }
                    self.punct('}')?;
                }
                Tok::Word(w) if w == "variable" => {
                    self.pos += 1;
                    doc.variables.push(self.variable()?);
                }
                Tok::Word(w) if w == "probability" => {
                    self.pos += 1;
                    doc.blocks.push(self.probability()?);
                }
                _ => {
                    return Err(self.error_here(format!(
                        "expected `network`, `variable` or `probability`, found {}",
                        self.describe()
                    )))
                }
            }
        }
        if !saw_network {
            return Err(Error::Syntax {
                line: 1,
                column: 1,
                message: "missing `network` declaration".into(),
            });
        }
        Ok(doc)
    }

    fn variable(&mut self) -> Result<BifVariable> {
        let name = self.word()?;
        self.punct('{')?;
        let mut values = None;
        while !self.at_punct('}') {
            if self.at_word("property") {
                self.skip_property()?;
                continue;
            }
            if values.is_some() {
                return Err(self.error_here("variable declares its type twice"));
            }
            self.keyword("type")?;
            self.keyword("discrete")?;
            self.punct('[')?;
            let count_pos = self.pos;
            let count = self.word()?;
            let count: usize = count.parse().map_err(|_| {
                self.pos = count_pos;
                self.error_here(format!("expected a value count, found `{count}`"))
            })?;
            self.punct(']')?;
            self.punct('{')?;
            let labels_pos = self.pos;
            let labels = self.comma_list('}', Self::word)?;
            self.punct('}')?;
            self.punct(';')?;
            if labels.len() != count || count == 0 {
                self.pos = labels_pos;
                return Err(self.error_here(format!(
                    "variable `{name}` declares {count} values but lists {}",
                    labels.len()
                )));
            }
            values = Some(labels);
        }
        self.punct('}')?;
        let values = values.ok_or_else(|| self.error_here(format!("variable `{name}` has no type")))?;
        Ok(BifVariable { name, values })
    }

    fn probability(&mut self) -> Result<RawProbability> {
        self.punct('(')?;
        let child = self.word()?;
        let mut parents = Vec::new();
        if self.at_punct('|') {
            self.pos += 1;
            parents = self.comma_list(')', Self::word)?;
        }
        self.punct(')')?;
        self.punct('{')?;
        let mut block = RawProbability {
            child,
            parents,
            table: None,
            rows: Vec::new(),
        };
        while !self.at_punct('}') {
            match self.peek() {
                Some(Tok::Word(w)) if w == "property" => self.skip_property()?,
                Some(Tok::Word(w)) if w == "table" => {
                    if !block.parents.is_empty() {
                        return Err(self.error_here("`table` form is only supported for root variables"));
                    }
                    if block.table.is_some() {
                        return Err(self.error_here("second `table` entry"));
                    }
                    self.pos += 1;
                    let probs = self.comma_list(';', Self::number)?;
                    self.punct(';')?;
                    block.table = Some(probs);
                }
                Some(Tok::Punct('(')) => {
                    self.pos += 1;
                    let labels = self.comma_list(')', Self::word)?;
                    self.punct(')')?;
                    let probs = self.comma_list(';', Self::number)?;
                    self.punct(';')?;
                    block.rows.push((labels, probs));
                }
                _ => {
                    return Err(self.error_here(format!(
                        "expected `table`, `(` or `property`, found {}",
                        self.describe()
                    )))
                }
            }
        }
        self.punct('}')?;
        Ok(block)
    }
}

// ---------------------------------------------------------------------------
// Validation

fn validate(raw: RawDocument) -> Result<BifDocument> {
    let mut seen = BTreeSet::new();
    for var in &raw.variables {
        if !seen.insert(var.name.as_str()) {
            return Err(Error::DuplicateVariable(var.name.clone()));
        }
        let mut labels = BTreeSet::new();
        for value in &var.values {
            if !labels.insert(value.as_str()) {
                return Err(Error::DuplicateValue {
                    variable: var.name.clone(),
                    value: value.clone(),
                });
            }
        }
    }
    let lookup = |name: &str| -> Result<&BifVariable> {
        raw.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UndeclaredVariable(name.into()))
    };

    let mut children = BTreeSet::new();
    let mut blocks = Vec::with_capacity(raw.blocks.len());
    for block in &raw.blocks {
        let child = lookup(&block.child)?;
        if !children.insert(block.child.as_str()) {
            return Err(Error::DuplicateProbability(block.child.clone()));
        }
        let parents = block.parents.iter().map(|p| lookup(p)).collect::<Result<Vec<_>>>()?;
        for (k, p) in block.parents.iter().enumerate() {
            if *p == block.child || block.parents[..k].contains(p) {
                return Err(Error::InvalidNetwork(format!(
                    "probability block for `{}` repeats parent `{p}`",
                    block.child
                )));
            }
        }
        let card = child.values.len();
        let expected_rows: usize = parents.iter().map(|p| p.values.len()).product();

        let check_row = |probs: &[f64]| -> Result<()> {
            if probs.len() != card {
                return Err(Error::VectorLengthMismatch {
                    variable: block.child.clone(),
                    expected: card,
                    found: probs.len(),
                });
            }
            let sum: f64 = probs.iter().sum();
            if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidDistribution {
                    variable: block.child.clone(),
                    sum,
                });
            }
            Ok(())
        };

        let rows = if let Some(table) = &block.table {
            if !block.rows.is_empty() {
                return Err(Error::RowCountMismatch {
                    variable: block.child.clone(),
                    expected: 1,
                    found: block.rows.len() + 1,
                });
            }
            check_row(table)?;
            alloc::vec![BifRow {
                parent_values: Vec::new(),
                probabilities: table.clone(),
            }]
        } else {
            // Key each row by its parent value indices; BTreeMap order on the
            // index tuple is exactly the canonical row-major order.
            let mut keyed: BTreeMap<Vec<usize>, BifRow> = BTreeMap::new();
            for (labels, probs) in &block.rows {
                if labels.len() != parents.len() {
                    return Err(Error::VectorLengthMismatch {
                        variable: block.child.clone(),
                        expected: parents.len(),
                        found: labels.len(),
                    });
                }
                let key = labels
                    .iter()
                    .zip(&parents)
                    .map(|(label, p)| {
                        p.values
                            .iter()
                            .position(|v| v == label)
                            .ok_or_else(|| Error::UnknownValue {
                                variable: p.name.clone(),
                                value: label.clone(),
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                check_row(probs)?;
                let duplicate = keyed
                    .insert(
                        key,
                        BifRow {
                            parent_values: labels.clone(),
                            probabilities: probs.clone(),
                        },
                    )
                    .is_some();
                if duplicate {
                    return Err(Error::RowCountMismatch {
                        variable: block.child.clone(),
                        expected: expected_rows,
                        found: block.rows.len(),
                    });
                }
            }
            if keyed.len() != expected_rows {
                return Err(Error::RowCountMismatch {
                    variable: block.child.clone(),
                    expected: expected_rows,
                    found: keyed.len(),
                });
            }
            keyed.into_values().collect()
        };
        blocks.push(BifProbability {
            child: block.child.clone(),
            parents: block.parents.clone(),
            rows,
        });
    }
    Ok(BifDocument {
        network_name: raw.name,
        variables: raw.variables,
        probability_blocks: blocks,
    })
}
