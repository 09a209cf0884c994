//! Arithmetic expressions over `0`, `s`, `+`, `*` labeled with the four
//! binary digits of their value modulo 16.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{format_label, read_records};
use crate::error::{Error, Result};
use crate::term::Term;
use crate::tnn::Example;

pub const ZERO: &str = "0";
pub const SUCC: &str = "s";
pub const PLUS: &str = "+";
pub const TIMES: &str = "*";

/// Probability that a non-root position below the depth cap becomes a numeral.
const LEAF_PROBABILITY: f64 = 0.3;

/// The unary numeral `s^k(0)`.
pub fn numeral(k: usize) -> Term {
    Term::tower(SUCC, k, Term::leaf(ZERO))
}

/// Exact value of an arithmetic term.
pub fn eval_arith(t: &Term) -> Result<BigUint> {
    match (t.op(), t.args()) {
        (ZERO, []) => Ok(BigUint::zero()),
        (SUCC, [a]) => Ok(eval_arith(a)? + 1u32),
        (PLUS, [a, b]) => Ok(eval_arith(a)? + eval_arith(b)?),
        (TIMES, [a, b]) => Ok(eval_arith(a)? * eval_arith(b)?),
        _ => Err(Error::UnknownSymbol(format!("{}/{}", t.op(), t.arity()))),
    }
}

pub fn value_mod16(n: &BigUint) -> u64 {
    (n % 16u32).to_u64().expect("residue fits in u64")
}

/// Binary digits of `n mod 16`, most significant first.
pub fn bits4(n: u64) -> Vec<f64> {
    let r = n % 16;
    (0..4).rev().map(|i| ((r >> i) & 1) as f64).collect()
}

/// Integer whose bits are the rounded components (round half up).
pub fn decode_bits4(v: &[f64]) -> u64 {
    v.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b >= 0.5))
}

pub fn label_of(t: &Term) -> Result<Vec<f64>> {
    Ok(bits4(value_mod16(&eval_arith(t)?)))
}

/// Operator depth: numerals have depth 0, other applications one more than
/// their deepest argument.
pub fn operator_depth(t: &Term) -> usize {
    if is_numeral(t) {
        0
    } else {
        1 + t.args().iter().map(operator_depth).max().unwrap_or(0)
    }
}

pub fn is_numeral(t: &Term) -> bool {
    let mut cur = t;
    while cur.op() == SUCC && cur.arity() == 1 {
        cur = &cur.args()[0];
    }
    cur.op() == ZERO && cur.is_leaf()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArithGenParams {
    pub n_train: usize,
    pub n_test: usize,
    /// Largest numeral at the leaves.
    pub max_leaf: usize,
    /// Largest operator depth; at least 1.
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ArithGenParams {
    fn default() -> Self {
        ArithGenParams { n_train: 11990, n_test: 10180, max_leaf: 10, max_depth: 4, seed: 1 }
    }
}

/// Number of distinct terms the generator can produce (saturating).
///
/// Roots are always non-numerals; `s` is only applied to non-numerals.
pub fn count_arith_terms(max_leaf: usize, max_depth: usize) -> u128 {
    let numerals = max_leaf as u128 + 1;
    let mut all = numerals; // depth <= 0
    for _ in 0..max_depth {
        let compound = all - numerals;
        let pairs = all.saturating_mul(all).saturating_mul(2);
        all = numerals.saturating_add(pairs).saturating_add(compound);
    }
    all - numerals
}

fn gen_term<R: Rng>(rng: &mut R, max_leaf: usize, depth_left: usize, force_compound: bool) -> Term {
    if depth_left == 0 || (!force_compound && rng.gen_bool(LEAF_PROBABILITY)) {
        return numeral(rng.gen_range(0..=max_leaf));
    }
    // `s` needs a compound argument, which needs at least one more level.
    let choices = if depth_left >= 2 { 3 } else { 2 };
    match rng.gen_range(0..choices) {
        0 => Term::new(
            PLUS,
            vec![gen_term(rng, max_leaf, depth_left - 1, false), gen_term(rng, max_leaf, depth_left - 1, false)],
        ),
        1 => Term::new(
            TIMES,
            vec![gen_term(rng, max_leaf, depth_left - 1, false), gen_term(rng, max_leaf, depth_left - 1, false)],
        ),
        _ => Term::new(SUCC, vec![gen_term(rng, max_leaf, depth_left - 1, true)]),
    }
}

/// Draws one random non-numeral term.
pub fn gen_arith_term<R: Rng>(rng: &mut R, max_leaf: usize, max_depth: usize) -> Term {
    gen_term(rng, max_leaf, max_depth.max(1), true)
}

/// Random disjoint train/test sets of distinct terms, labeled by [`bits4`] of the value.
pub fn gen_arith_dataset(p: &ArithGenParams) -> Result<(Vec<Example>, Vec<Example>)> {
    if p.max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
    }
    let wanted = p.n_train + p.n_test;
    let available = count_arith_terms(p.max_leaf, p.max_depth);
    if wanted as u128 > available {
        return Err(Error::Exhausted(format!(
            "{wanted} distinct terms requested, only {available} exist with max_leaf {} and max_depth {}",
            p.max_leaf, p.max_depth
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut seen = HashSet::with_capacity(wanted);
    let mut terms = Vec::with_capacity(wanted);
    let max_attempts = 1000 + 200 * wanted;
    let mut attempts = 0;
    while terms.len() < wanted {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Exhausted(format!(
                "found only {} distinct terms after {max_attempts} draws",
                terms.len()
            )));
        }
        let t = gen_arith_term(&mut rng, p.max_leaf, p.max_depth);
        if seen.insert(t.clone()) {
            terms.push(t);
        }
    }
    let examples = terms.into_iter().map(|t| Ok(Example::new(t.clone(), label_of(&t)?))).collect::<Result<Vec<_>>>()?;
    let mut train = examples;
    let test = train.split_off(p.n_train);
    Ok((train, test))
}

/// Reads `<term> | b3 b2 b1 b0` lines and checks each label against the evaluator.
pub fn load_arith_dataset(path: &Path) -> Result<Vec<Example>> {
    read_records(path)?
        .into_iter()
        .map(|r| {
            if r.label.len() != 4 {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: r.line,
                    msg: format!("expected 4 label values, found {}", r.label.len()),
                });
            }
            let computed = label_of(&r.term).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: r.line,
                msg: e.to_string(),
            })?;
            if computed != r.label {
                return Err(Error::LabelMismatch {
                    path: path.to_path_buf(),
                    line: r.line,
                    file: format_label(&r.label),
                    computed: format_label(&computed),
                });
            }
            Ok(Example::new(r.term, r.label))
        })
        .collect()
}

/// Class (value mod 16) and operator-depth histograms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArithStats {
    pub classes: [usize; 16],
    pub depths: BTreeMap<usize, usize>,
    pub count: usize,
}

impl ArithStats {
    pub fn from_examples(examples: &[Example]) -> Self {
        let mut s = ArithStats::default();
        for ex in examples {
            if let Some(t) = ex.target() {
                s.classes[decode_bits4(t) as usize] += 1;
            }
            *s.depths.entry(operator_depth(&ex.term)).or_default() += 1;
            s.count += 1;
        }
        s
    }

    pub fn to_text(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[{name}] examples {}", self.count);
        for (c, n) in self.classes.iter().enumerate() {
            let _ = writeln!(out, "[{name}] class {c:2} {n}");
        }
        for (d, n) in &self.depths {
            let _ = writeln!(out, "[{name}] depth {d} {n}");
        }
        out
    }
}
