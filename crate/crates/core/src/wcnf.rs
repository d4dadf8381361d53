//! Weighted partial MaxSAT instances in WCNF.
//!
//! Two dialects are accepted:
//!
//! - the post-2022 format, where hard clauses are written `h <lits> 0` and
//!   soft clauses `<weight> <lits> 0`, with no header;
//! - the classic format with a `p wcnf <vars> <clauses> [<top>]` header where
//!   every clause carries a weight and weights `>= top` mark hard clauses.
//!
//! Lines starting with `c` are comments. Each clause must sit on one line.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

/// A literal over a 1-based variable index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    var: u32,
    negated: bool,
}

impl Literal {
    /// # Panics
    ///
    /// If `var` is zero.
    pub fn new(var: u32, negated: bool) -> Self {
        assert!(var >= 1, "variables are 1-based");
        Literal { var, negated }
    }

    pub fn positive(var: u32) -> Self {
        Literal::new(var, false)
    }

    pub fn negative(var: u32) -> Self {
        Literal::new(var, true)
    }

    /// Builds a literal from its DIMACS integer form.
    pub fn from_dimacs(lit: i64) -> Option<Self> {
        if lit == 0 || lit.unsigned_abs() > u64::from(u32::MAX) {
            return None;
        }
        Some(Literal::new(lit.unsigned_abs() as u32, lit < 0))
    }

    pub fn var(self) -> u32 {
        self.var
    }

    pub fn is_negated(self) -> bool {
        self.negated
    }

    /// Zero-based variable index.
    pub fn index(self) -> usize {
        self.var as usize - 1
    }

    pub fn to_dimacs(self) -> i64 {
        if self.negated {
            -i64::from(self.var)
        } else {
            i64::from(self.var)
        }
    }

    /// Truth value under a full assignment.
    pub fn eval(self, values: &[bool]) -> bool {
        values[self.index()] != self.negated
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// A non-empty disjunction of literals. Soft clauses carry a weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    literals: Vec<Literal>,
    weight: Option<u64>,
}

/// Outcome of normalizing a raw literal list.
enum Normalized {
    Clause(Vec<Literal>),
    Tautology,
    Empty,
}

fn normalize(raw: Vec<Literal>) -> Normalized {
    if raw.is_empty() {
        return Normalized::Empty;
    }
    let mut out: Vec<Literal> = Vec::with_capacity(raw.len());
    for lit in raw {
        if let Some(prev) = out.iter().find(|l| l.var == lit.var) {
            if prev.negated != lit.negated {
                return Normalized::Tautology;
            }
            continue;
        }
        out.push(lit);
    }
    Normalized::Clause(out)
}

impl Clause {
    /// Hard clause; duplicates are removed. Returns `None` for tautologies.
    ///
    /// # Panics
    ///
    /// If `literals` is empty.
    pub fn hard(literals: Vec<Literal>) -> Option<Self> {
        Self::build(literals, None)
    }

    /// Soft clause with a weight `>= 1`; duplicates are removed. Returns
    /// `None` for tautologies.
    ///
    /// # Panics
    ///
    /// If `literals` is empty or `weight` is zero.
    pub fn soft(literals: Vec<Literal>, weight: u64) -> Option<Self> {
        assert!(weight >= 1, "soft weights are positive");
        Self::build(literals, Some(weight))
    }

    fn build(literals: Vec<Literal>, weight: Option<u64>) -> Option<Self> {
        match normalize(literals) {
            Normalized::Clause(literals) => Some(Clause { literals, weight }),
            Normalized::Tautology => None,
            Normalized::Empty => panic!("clauses are non-empty"),
        }
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn weight(&self) -> Option<u64> {
        self.weight
    }

    pub fn is_hard(&self) -> bool {
        self.weight.is_none()
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn is_satisfied(&self, values: &[bool]) -> bool {
        self.literals.iter().any(|l| l.eval(values))
    }

    fn max_var(&self) -> u32 {
        self.literals.iter().map(|l| l.var).max().unwrap_or(0)
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed header '{text}'")]
    MalformedHeader { line: usize, text: String },
    #[error("line {line}: duplicate header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: invalid token '{token}'")]
    InvalidToken { line: usize, token: String },
    #[error("line {line}: clause weight must be positive, got '{token}'")]
    NonPositiveWeight { line: usize, token: String },
    #[error("line {line}: literal 0 inside a clause body")]
    ZeroInsideClause { line: usize },
    #[error("line {line}: missing terminating 0")]
    MissingTerminator { line: usize },
    #[error("line {line}: variable {var} exceeds declared count {declared}")]
    VariableOutOfRange {
        line: usize,
        var: u64,
        declared: u32,
    },
    #[error("line {line}: hard clause marker 'h' in a file with a 'p' header")]
    MixedDialect { line: usize },
    #[error("sum of soft weights overflows 64 bits")]
    WeightOverflow,
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Error, Debug)]
#[error("{path}: {error}")]
pub struct LoadError {
    pub path: String,
    pub error: ParseError,
}

/// Whether a hard empty clause was seen, and how much constant soft weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Degenerate {
    empty_hard: usize,
    empty_soft_weight: u64,
}

/// An immutable (weighted) partial MaxSAT instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WcnfInstance {
    name: String,
    num_vars: u32,
    hard: Vec<Clause>,
    soft: Vec<Clause>,
    degenerate: Degenerate,
    soft_weight_sum: u64,
    tautologies_dropped: usize,
}

/// Evaluation of an assignment against an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub hard_violations: usize,
    pub soft_cost: u64,
    pub feasible: bool,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("assignment has {got} values, instance has {expected} variables")]
pub struct LengthMismatch {
    pub expected: usize,
    pub got: usize,
}

/// A total truth assignment, index 0 holding variable 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Assignment(values)
    }

    pub fn all_false(n: usize) -> Self {
        Assignment(vec![false; n])
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flip(&mut self, index: usize) {
        self.0[index] = !self.0[index];
    }

    pub fn into_inner(self) -> Vec<bool> {
        self.0
    }
}

impl From<Vec<bool>> for Assignment {
    fn from(values: Vec<bool>) -> Self {
        Assignment(values)
    }
}

/// Incremental instance construction. Tautologies are dropped and counted.
#[derive(Debug, Default)]
pub struct InstanceBuilder {
    name: String,
    num_vars: u32,
    hard: Vec<Clause>,
    soft: Vec<Clause>,
    degenerate: Degenerate,
    soft_weight_sum: u64,
    overflow: bool,
    tautologies_dropped: usize,
}

impl InstanceBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        InstanceBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Raises the variable count; it never shrinks below the largest index used.
    pub fn num_vars(mut self, n: u32) -> Self {
        self.num_vars = self.num_vars.max(n);
        self
    }

    pub fn add_hard(&mut self, literals: impl IntoIterator<Item = Literal>) {
        self.add(literals.into_iter().collect(), None);
    }

    pub fn add_soft(&mut self, literals: impl IntoIterator<Item = Literal>, weight: u64) {
        assert!(weight >= 1, "soft weights are positive");
        self.add(literals.into_iter().collect(), Some(weight));
    }

    fn add(&mut self, literals: Vec<Literal>, weight: Option<u64>) {
        let normalized = normalize(literals);
        if let (Some(w), false) = (weight, matches!(normalized, Normalized::Tautology)) {
            match self.soft_weight_sum.checked_add(w) {
                Some(s) => self.soft_weight_sum = s,
                None => self.overflow = true,
            }
        }
        match normalized {
            Normalized::Empty => match weight {
                None => self.degenerate.empty_hard += 1,
                Some(w) => {
                    self.degenerate.empty_soft_weight =
                        self.degenerate.empty_soft_weight.saturating_add(w)
                }
            },
            Normalized::Tautology => self.tautologies_dropped += 1,
            Normalized::Clause(literals) => {
                let clause = Clause { literals, weight };
                self.num_vars = self.num_vars.max(clause.max_var());
                if clause.is_hard() {
                    self.hard.push(clause);
                } else {
                    self.soft.push(clause);
                }
            }
        }
    }

    pub fn build(self) -> Result<WcnfInstance, ParseError> {
        if self.overflow {
            return Err(ParseError::WeightOverflow);
        }
        Ok(WcnfInstance {
            name: self.name,
            num_vars: self.num_vars,
            hard: self.hard,
            soft: self.soft,
            degenerate: self.degenerate,
            soft_weight_sum: self.soft_weight_sum,
            tautologies_dropped: self.tautologies_dropped,
        })
    }
}

impl WcnfInstance {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars as usize
    }

    pub fn hard_clauses(&self) -> &[Clause] {
        &self.hard
    }

    pub fn soft_clauses(&self) -> &[Clause] {
        &self.soft
    }

    /// Number of stored (non-empty, non-tautological) clauses.
    pub fn num_clauses(&self) -> usize {
        self.hard.len() + self.soft.len()
    }

    /// Sum of all soft weights, including those of empty soft clauses.
    pub fn soft_weight_sum(&self) -> u64 {
        self.soft_weight_sum
    }

    /// Constant cost contributed by empty soft clauses.
    pub fn cost_offset(&self) -> u64 {
        self.degenerate.empty_soft_weight
    }

    /// True when the input contained an empty hard clause.
    pub fn is_trivially_infeasible(&self) -> bool {
        self.degenerate.empty_hard > 0
    }

    pub fn tautologies_dropped(&self) -> usize {
        self.tautologies_dropped
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Full evaluation of `assignment`.
    pub fn cost(&self, assignment: &Assignment) -> Result<CostReport, LengthMismatch> {
        let values = assignment.values();
        if values.len() != self.num_vars() {
            return Err(LengthMismatch {
                expected: self.num_vars(),
                got: values.len(),
            });
        }
        let hard_violations = self.degenerate.empty_hard
            + self.hard.iter().filter(|c| !c.is_satisfied(values)).count();
        let soft_cost = self
            .soft
            .iter()
            .filter(|c| !c.is_satisfied(values))
            .map(|c| c.weight.unwrap_or(0))
            .sum::<u64>()
            + self.degenerate.empty_soft_weight;
        Ok(CostReport {
            hard_violations,
            soft_cost,
            feasible: hard_violations == 0,
        })
    }

    /// Writes the instance in the post-2022 format: hard clauses first.
    pub fn dump<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for _ in 0..self.degenerate.empty_hard {
            writeln!(out, "h 0")?;
        }
        for clause in &self.hard {
            write!(out, "h")?;
            for lit in &clause.literals {
                write!(out, " {lit}")?;
            }
            writeln!(out, " 0")?;
        }
        if self.degenerate.empty_soft_weight > 0 {
            writeln!(out, "{} 0", self.degenerate.empty_soft_weight)?;
        }
        for clause in &self.soft {
            write!(out, "{}", clause.weight.unwrap_or(1))?;
            for lit in &clause.literals {
                write!(out, " {lit}")?;
            }
            writeln!(out, " 0")?;
        }
        Ok(())
    }

    pub fn dump_to_string(&self) -> String {
        let mut buf = Vec::new();
        self.dump(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump emits ASCII")
    }
}

struct Header {
    num_vars: u32,
    top: Option<u64>,
}

fn parse_header(line_no: usize, line: &str) -> Result<Header, ParseError> {
    let malformed = || ParseError::MalformedHeader {
        line: line_no,
        text: line.to_string(),
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 4 || fields.len() > 5 || fields[0] != "p" || fields[1] != "wcnf" {
        return Err(malformed());
    }
    let num_vars: u32 = fields[2].parse().map_err(|_| malformed())?;
    let _num_clauses: u64 = fields[3].parse().map_err(|_| malformed())?;
    let top = match fields.get(4) {
        Some(t) => {
            let top: u64 = t.parse().map_err(|_| malformed())?;
            if top == 0 {
                return Err(malformed());
            }
            Some(top)
        }
        None => None,
    };
    Ok(Header { num_vars, top })
}

fn parse_weight(line_no: usize, token: &str) -> Result<u64, ParseError> {
    match token.parse::<i128>() {
        Ok(w) if w <= 0 => Err(ParseError::NonPositiveWeight {
            line: line_no,
            token: token.to_string(),
        }),
        Ok(w) => u64::try_from(w).map_err(|_| ParseError::WeightOverflow),
        Err(_) => Err(ParseError::InvalidToken {
            line: line_no,
            token: token.to_string(),
        }),
    }
}

/// Parses the literal list of a clause line, including the terminating 0.
fn parse_literals<'a>(
    line_no: usize,
    tokens: impl Iterator<Item = &'a str>,
    declared: Option<u32>,
) -> Result<Vec<Literal>, ParseError> {
    let mut lits = Vec::new();
    let mut terminated = false;
    for token in tokens {
        if terminated {
            return Err(ParseError::ZeroInsideClause { line: line_no });
        }
        let value: i64 = token.parse().map_err(|_| ParseError::InvalidToken {
            line: line_no,
            token: token.to_string(),
        })?;
        if value == 0 {
            terminated = true;
            continue;
        }
        let lit = Literal::from_dimacs(value).ok_or_else(|| ParseError::InvalidToken {
            line: line_no,
            token: token.to_string(),
        })?;
        if let Some(n) = declared {
            if lit.var() > n {
                return Err(ParseError::VariableOutOfRange {
                    line: line_no,
                    var: u64::from(lit.var()),
                    declared: n,
                });
            }
        }
        lits.push(lit);
    }
    if !terminated {
        return Err(ParseError::MissingTerminator { line: line_no });
    }
    Ok(lits)
}

/// Parses a WCNF body from a reader.
pub fn parse_wcnf<R: BufRead>(reader: R, name: &str) -> Result<WcnfInstance, ParseError> {
    let mut builder = InstanceBuilder::new(name);
    let mut header: Option<Header> = None;
    let mut seen_clause = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ParseError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') || trimmed.starts_with('%') {
            continue;
        }
        if trimmed.starts_with('p') {
            if header.is_some() {
                return Err(ParseError::DuplicateHeader { line: line_no });
            }
            if seen_clause {
                return Err(ParseError::MalformedHeader {
                    line: line_no,
                    text: trimmed.to_string(),
                });
            }
            let h = parse_header(line_no, trimmed)?;
            builder = builder.num_vars(h.num_vars);
            header = Some(h);
            continue;
        }
        seen_clause = true;
        let mut tokens = trimmed.split_whitespace();
        let first = tokens.next().expect("line is non-empty");
        match &header {
            Some(h) => {
                if first == "h" {
                    return Err(ParseError::MixedDialect { line: line_no });
                }
                let weight = parse_weight(line_no, first)?;
                let lits = parse_literals(line_no, tokens, Some(h.num_vars))?;
                match h.top {
                    Some(top) if weight >= top => builder.add_hard(lits),
                    _ => builder.add_soft(lits, weight),
                }
            }
            None => {
                if first == "h" {
                    let lits = parse_literals(line_no, tokens, None)?;
                    builder.add_hard(lits);
                } else {
                    let weight = parse_weight(line_no, first)?;
                    let lits = parse_literals(line_no, tokens, None)?;
                    builder.add_soft(lits, weight);
                }
            }
        }
    }
    let instance = builder.build()?;
    if instance.tautologies_dropped > 0 {
        log::warn!(
            "{}: dropped {} tautological clause(s)",
            name,
            instance.tautologies_dropped
        );
    }
    Ok(instance)
}

pub fn parse_wcnf_str(text: &str, name: &str) -> Result<WcnfInstance, ParseError> {
    parse_wcnf(text.as_bytes(), name)
}

/// Instance identifier derived from a path: the file name without `.wcnf`.
pub fn instance_id(path: &Path) -> String {
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.strip_suffix(".wcnf").unwrap_or(&file).to_string()
}

/// Reads and parses a WCNF file; the instance is named after the file.
pub fn load(path: &Path) -> Result<WcnfInstance, LoadError> {
    let wrap = |error| LoadError {
        path: path.display().to_string(),
        error,
    };
    let file = std::fs::File::open(path).map_err(|e| wrap(ParseError::Io(e.to_string())))?;
    parse_wcnf(io::BufReader::new(file), &instance_id(path)).map_err(wrap)
}
