//! Seeded instance generators.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::wcnf::{InstanceBuilder, Literal, ParseError, WcnfInstance};

#[derive(Error, Debug, PartialEq)]
pub enum GenerateError {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error(transparent)]
    Build(#[from] ParseError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    RandomWpms,
    Staircase,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::RandomWpms => "random-wpms",
            GeneratorKind::Staircase => "staircase",
        })
    }
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random-wpms" => Ok(GeneratorKind::RandomWpms),
            "staircase" => Ok(GeneratorKind::Staircase),
            _ => Err(format!(
                "unknown generator '{s}' (expected random-wpms|staircase)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomWpmsParams {
    pub num_vars: usize,
    pub num_hard: usize,
    pub num_soft: usize,
    pub clause_len: usize,
    pub max_weight: u64,
}

impl RandomWpmsParams {
    /// `m` clauses over `n` variables, a quarter of them hard.
    pub fn new(num_vars: usize, num_clauses: usize) -> Self {
        let num_hard = num_clauses / 4;
        RandomWpmsParams {
            num_vars,
            num_hard,
            num_soft: num_clauses - num_hard,
            clause_len: 3,
            max_weight: 10,
        }
    }
}

/// Random clauses of `clause_len` distinct variables.
///
/// Hard clauses are satisfied by a hidden planted assignment, so the instance
/// is always feasible. Variables are drawn from concatenated random
/// permutations, so every variable occurs once `clause_len * m >= n`.
pub fn random_wpms(
    params: &RandomWpmsParams,
    seed: u64,
    name: &str,
) -> Result<WcnfInstance, GenerateError> {
    let RandomWpmsParams {
        num_vars: n,
        num_hard,
        num_soft,
        clause_len: k,
        max_weight,
    } = *params;
    let m = num_hard + num_soft;
    if n == 0 || k == 0 || m == 0 {
        return Err(GenerateError::InvalidSize(
            "variables, clause length and clause count must be positive".into(),
        ));
    }
    if k > n {
        return Err(GenerateError::InvalidSize(format!(
            "clause length {k} exceeds {n} variables"
        )));
    }
    if k * m < n {
        return Err(GenerateError::InvalidSize(format!(
            "{m} clauses of length {k} cannot use all {n} variables"
        )));
    }
    if max_weight == 0 {
        return Err(GenerateError::InvalidSize(
            "max weight must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let mut stream: Vec<u32> = Vec::new();
    let mut next_var = |rng: &mut ChaCha8Rng| {
        if stream.is_empty() {
            stream = (1..=n as u32).collect();
            stream.shuffle(rng);
            stream.reverse();
        }
        stream.pop().expect("refilled above")
    };

    let mut builder = InstanceBuilder::new(name).num_vars(n as u32);
    for c in 0..m {
        let mut vars: Vec<u32> = Vec::with_capacity(k);
        while vars.len() < k {
            let v = next_var(&mut rng);
            if vars.contains(&v) {
                let mut w = rng.random_range(1..=n as u32);
                while vars.contains(&w) {
                    w = rng.random_range(1..=n as u32);
                }
                vars.push(w);
            } else {
                vars.push(v);
            }
        }
        let mut lits: Vec<Literal> = vars
            .iter()
            .map(|&v| Literal::new(v, rng.random()))
            .collect();
        let hard = c < num_hard;
        if hard && !lits.iter().any(|l| l.eval(&planted)) {
            let j = rng.random_range(0..k);
            lits[j] = Literal::new(lits[j].var(), !lits[j].is_negated());
        }
        if hard {
            builder.add_hard(lits);
        } else {
            builder.add_soft(lits, rng.random_range(1..=max_weight));
        }
    }
    Ok(builder.build()?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StaircaseParams {
    pub num_vars: usize,
    /// Largest reward of a single step.
    pub max_gain: u64,
    /// Variables per independent stair; the last one may be shorter.
    pub block_len: usize,
}

impl StaircaseParams {
    pub fn new(num_vars: usize) -> Self {
        StaircaseParams {
            num_vars,
            max_gain: 4,
            block_len: 50,
        }
    }
}

/// Step gains `g_i`, last to first: rewards in `[2, max_gain]` alternate
/// with penalties smaller than the reward just above them, so every suffix
/// sum is positive.
fn staircase_gains(n: usize, max_gain: u64, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut gains = vec![0i64; n];
    let mut reward_above = 0i64;
    for (steps_from_end, i) in (0..n).rev().enumerate() {
        gains[i] = if steps_from_end % 2 == 0 {
            reward_above = rng.random_range(2..=max_gain as i64);
            reward_above
        } else {
            -rng.random_range(1..reward_above)
        };
    }
    gains
}

/// Independent stairs of `block_len` variables. Within a stair a chain
/// `x_{i+1} -> x_i` of hard clauses leaves only prefixes feasible.
///
/// Step `i` rewards or penalizes setting `x_i`: a gain `g > 0` becomes `g`
/// unit clauses `(x_i)`, a loss becomes `|g|` unit clauses `(-x_i)`, all of
/// weight 1. Encoding gains as clause counts rather than weights makes them
/// visible to a search whose clause weights all start at 1. Rewards and
/// penalties alternate and every suffix sum is positive, so the full stair
/// is the unique optimum, while every penalty step is a local optimum that
/// greedy descent cannot leave. Several short stairs rather than one long
/// one keep a lucky start from settling the whole instance at once.
pub fn staircase(
    params: &StaircaseParams,
    seed: u64,
    name: &str,
) -> Result<WcnfInstance, GenerateError> {
    let n = params.num_vars;
    if n == 0 {
        return Err(GenerateError::InvalidSize(
            "staircase needs at least one variable".into(),
        ));
    }
    if params.max_gain < 2 {
        return Err(GenerateError::InvalidSize(
            "max gain must be at least 2".into(),
        ));
    }
    if params.block_len == 0 {
        return Err(GenerateError::InvalidSize(
            "block length must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = InstanceBuilder::new(name).num_vars(n as u32);
    for start in (0..n).step_by(params.block_len) {
        let len = params.block_len.min(n - start);
        let first = start as u32 + 1;
        for i in first..first + len as u32 - 1 {
            builder.add_hard([Literal::negative(i + 1), Literal::positive(i)]);
        }
        for (k, g) in staircase_gains(len, params.max_gain, &mut rng)
            .into_iter()
            .enumerate()
        {
            let lit = Literal::new(first + k as u32, g < 0);
            for _ in 0..g.unsigned_abs() {
                builder.add_soft([lit], 1);
            }
        }
    }
    Ok(builder.build()?)
}

/// Dispatches on `kind`; `size` is the variable count and `clauses` only
/// applies to random-wpms (defaults to `4 * size`).
pub fn generate(
    kind: GeneratorKind,
    size: usize,
    clauses: Option<usize>,
    seed: u64,
    name: &str,
) -> Result<WcnfInstance, GenerateError> {
    match kind {
        GeneratorKind::RandomWpms => random_wpms(
            &RandomWpmsParams::new(size, clauses.unwrap_or(4 * size)),
            seed,
            name,
        ),
        GeneratorKind::Staircase => {
            if clauses.is_some() {
                return Err(GenerateError::InvalidSize(
                    "staircase derives its clause count from the size".into(),
                ));
            }
            staircase(&StaircaseParams::new(size), seed, name)
        }
    }
}
