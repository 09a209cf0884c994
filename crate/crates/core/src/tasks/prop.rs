//! Propositional entailment `A ⊨ B`, posed as universal truth of `A ⇒ B`.
//!
//! Variables are renamed by order of first appearance to `prime^i(x)` so a
//! network only needs the operators `x`, `prime`, `=>`, `not`, `or`, `and`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::read_records;
use crate::error::{Error, Result};
use crate::term::{index_variables, prime_index, Term, AND, IMPLIES, NOT, OR};
use crate::tnn::Example;

/// Largest variable count the oracle accepts by default.
pub const DEFAULT_VARIABLE_LIMIT: usize = 25;
/// Labels are cross-checked on load up to this many variables.
pub const DEFAULT_CHECK_LIMIT: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PropProblem {
    pub hypothesis: Term,
    pub conclusion: Term,
    /// Whether the hypothesis entails the conclusion.
    pub label: bool,
}

impl PropProblem {
    pub fn implication(&self) -> Term {
        Term::new(IMPLIES, vec![self.hypothesis.clone(), self.conclusion.clone()])
    }
}

fn leaf_names(t: &Term) -> BTreeSet<String> {
    t.subterms().filter(|s| s.is_leaf()).map(|s| s.op().to_string()).collect()
}

/// `index_variables(A ⇒ B)` with target `[1]` for entailment, `[0]` otherwise.
pub fn encode_prop(p: &PropProblem) -> Result<Example> {
    let imp = p.implication();
    let term = index_variables(&imp, &leaf_names(&imp))?;
    Ok(Example::new(term, vec![if p.label { 1.0 } else { 0.0 }]))
}

#[derive(Clone, Copy, Debug)]
enum Instr {
    Var(usize),
    Not,
    And,
    Or,
    Implies,
}

/// Postfix program over numbered atoms.
struct Compiled {
    code: Vec<Instr>,
    atoms: usize,
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Atom<'a> {
    Indexed(usize),
    Named(&'a str),
}

fn compile(t: &Term) -> Result<Compiled> {
    fn go<'a>(t: &'a Term, atoms: &mut HashMap<Atom<'a>, usize>, code: &mut Vec<Instr>) -> Result<()> {
        let atom = match prime_index(t) {
            Some(i) => Some(Atom::Indexed(i)),
            None if t.is_leaf() => Some(Atom::Named(t.op())),
            None => None,
        };
        if let Some(a) = atom {
            let next = atoms.len();
            code.push(Instr::Var(*atoms.entry(a).or_insert(next)));
            return Ok(());
        }
        let instr = match (t.op(), t.arity()) {
            (NOT, 1) => Instr::Not,
            (AND, 2) => Instr::And,
            (OR, 2) => Instr::Or,
            (IMPLIES, 2) => Instr::Implies,
            _ => return Err(Error::UnknownSymbol(format!("{}/{}", t.op(), t.arity()))),
        };
        for a in t.args() {
            go(a, atoms, code)?;
        }
        code.push(instr);
        Ok(())
    }
    let mut atoms = HashMap::new();
    let mut code = Vec::new();
    go(t, &mut atoms, &mut code)?;
    Ok(Compiled { code, atoms: atoms.len() })
}

impl Compiled {
    fn eval(&self, assignment: u64, stack: &mut Vec<bool>) -> bool {
        stack.clear();
        for ins in &self.code {
            let v = match *ins {
                Instr::Var(i) => (assignment >> i) & 1 == 1,
                Instr::Not => !stack.pop().expect("operand"),
                Instr::And | Instr::Or | Instr::Implies => {
                    let b = stack.pop().expect("operand");
                    let a = stack.pop().expect("operand");
                    match ins {
                        Instr::And => a && b,
                        Instr::Or => a || b,
                        _ => !a || b,
                    }
                }
            };
            stack.push(v);
        }
        stack.pop().expect("result")
    }
}

/// Number of distinct variables (named leaves or `prime^i(x)` towers).
pub fn count_variables(t: &Term) -> Result<usize> {
    Ok(compile(t)?.atoms)
}

/// True iff `t` holds under every assignment of its variables.
pub fn eval_prop_universal(t: &Term) -> Result<bool> {
    eval_prop_universal_with_limit(t, DEFAULT_VARIABLE_LIMIT)
}

pub fn eval_prop_universal_with_limit(t: &Term, limit: usize) -> Result<bool> {
    let prog = compile(t)?;
    if prog.atoms > limit || prog.atoms >= 64 {
        return Err(Error::TooManyVariables { n: prog.atoms, limit });
    }
    let mut stack = Vec::with_capacity(prog.code.len());
    Ok((0..1u64 << prog.atoms).all(|a| prog.eval(a, &mut stack)))
}

/// Parses infix formulas: `~` (not), `&` (and), `|` (or), `>` (implies,
/// right associative), parentheses and alphanumeric variable names.
pub fn parse_infix_formula(text: &str) -> Result<Term> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut p = Infix { chars: &chars, pos: 0, len: text.len() };
    let t = p.implication()?;
    if p.peek().is_some() {
        return Err(Error::Syntax { pos: p.offset(), msg: "trailing input in formula".into() });
    }
    Ok(t)
}

struct Infix<'a> {
    chars: &'a [(usize, char)],
    pos: usize,
    len: usize,
}

impl Infix<'_> {
    fn raw(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn peek(&mut self) -> Option<char> {
        while self.raw().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
        self.raw()
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.len, |&(o, _)| o)
    }

    fn err(&mut self, msg: &str) -> Error {
        self.peek();
        Error::Syntax { pos: self.offset(), msg: msg.to_string() }
    }

    fn implication(&mut self) -> Result<Term> {
        let lhs = self.disjunction()?;
        if self.peek() == Some('>') {
            self.pos += 1;
            let rhs = self.implication()?;
            return Ok(Term::new(IMPLIES, vec![lhs, rhs]));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Term> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some('|') {
            self.pos += 1;
            let rhs = self.conjunction()?;
            lhs = Term::new(OR, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Term> {
        let mut lhs = self.unary()?;
        while self.peek() == Some('&') {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Term::new(AND, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Term> {
        match self.peek() {
            Some('~') => {
                self.pos += 1;
                Ok(Term::new(NOT, vec![self.unary()?]))
            }
            Some('(') => {
                self.pos += 1;
                let t = self.implication()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(t)
            }
            Some(c) if c.is_ascii_alphanumeric() || c == '_' => {
                let mut name = String::new();
                while let Some(c) = self.raw().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    name.push(c);
                    self.pos += 1;
                }
                Ok(Term::leaf(name))
            }
            Some(_) => Err(self.err("unexpected character in formula")),
            None => Err(self.err("unexpected end of formula")),
        }
    }
}

/// Upstream line layout: `A,B,label[,extra fields...]` with infix formulas.
pub fn parse_entailment_line(line: &str) -> std::result::Result<PropProblem, String> {
    let mut fields = line.split(',').map(str::trim);
    let (Some(a), Some(b), Some(label)) = (fields.next(), fields.next(), fields.next()) else {
        return Err("expected at least 3 comma-separated fields".into());
    };
    let hypothesis = parse_infix_formula(a).map_err(|e| format!("hypothesis: {e}"))?;
    let conclusion = parse_infix_formula(b).map_err(|e| format!("conclusion: {e}"))?;
    let label = match label {
        "1" => true,
        "0" => false,
        other => return Err(format!("label must be 0 or 1, got {other:?}")),
    };
    Ok(PropProblem { hypothesis, conclusion, label })
}

/// One loaded split with the outcome of the label cross-check.
#[derive(Clone, Debug, PartialEq)]
pub struct EntailmentSplit {
    pub name: String,
    pub problems: Vec<PropProblem>,
    pub examples: Vec<Example>,
    /// Lines whose label was confirmed by the oracle.
    pub checked: usize,
    /// Lines above the check limit, kept without confirmation.
    pub unchecked: usize,
    /// Line numbers whose label contradicted the oracle; these were skipped.
    pub mismatches: Vec<usize>,
}

pub fn load_entailment_dataset(path: &Path, split_name: &str) -> Result<EntailmentSplit> {
    load_entailment_dataset_with(path, split_name, DEFAULT_CHECK_LIMIT)
}

/// Loads an upstream split, checking labels of problems with at most
/// `check_limit` variables.
pub fn load_entailment_dataset_with(path: &Path, split_name: &str, check_limit: usize) -> Result<EntailmentSplit> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut split = EntailmentSplit {
        name: split_name.to_string(),
        problems: Vec::new(),
        examples: Vec::new(),
        checked: 0,
        unchecked: 0,
        mismatches: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |msg: String| Error::Malformed { path: path.to_path_buf(), line: i + 1, msg };
        let problem = parse_entailment_line(line).map_err(malformed)?;
        let example = encode_prop(&problem).map_err(|e| malformed(e.to_string()))?;
        match eval_prop_universal_with_limit(&example.term, check_limit) {
            Ok(truth) if truth == problem.label => split.checked += 1,
            Ok(_) => {
                split.mismatches.push(i + 1);
                continue;
            }
            Err(Error::TooManyVariables { .. }) => split.unchecked += 1,
            Err(e) => return Err(malformed(e.to_string())),
        }
        split.problems.push(problem);
        split.examples.push(example);
    }
    if !split.mismatches.is_empty() {
        log::warn!(
            "{}: skipped {} lines whose label contradicts the truth-table oracle",
            split.name,
            split.mismatches.len()
        );
    }
    log::info!(
        "{}: {} problems ({} checked, {} above the check limit)",
        split.name,
        split.examples.len(),
        split.checked,
        split.unchecked
    );
    Ok(split)
}

/// Reads encoded problems in the dataset format (`<term> | 0|1`), checking
/// labels of formulas with at most [`DEFAULT_CHECK_LIMIT`] variables.
pub fn load_prop_dataset(path: &Path) -> Result<Vec<Example>> {
    read_records(path)?
        .into_iter()
        .map(|r| {
            let bad = |msg: String| Error::Malformed { path: path.to_path_buf(), line: r.line, msg };
            if r.label.len() != 1 || !(r.label[0] == 0.0 || r.label[0] == 1.0) {
                return Err(bad(format!("expected one 0/1 label, found {:?}", r.label)));
            }
            match eval_prop_universal_with_limit(&r.term, DEFAULT_CHECK_LIMIT) {
                Ok(truth) if truth != (r.label[0] == 1.0) => {
                    return Err(Error::LabelMismatch {
                        path: path.to_path_buf(),
                        line: r.line,
                        file: r.label[0].to_string(),
                        computed: u8::from(truth).to_string(),
                    })
                }
                Ok(_) | Err(Error::TooManyVariables { .. }) => {}
                Err(e) => return Err(bad(e.to_string())),
            }
            Ok(Example::new(r.term, r.label))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PropGenParams {
    pub n_train: usize,
    pub n_test: usize,
    /// Variables are drawn from the first `max_vars` names `p, q, r, ...`.
    pub max_vars: usize,
    /// Largest connective depth of each side.
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for PropGenParams {
    fn default() -> Self {
        PropGenParams { n_train: 20000, n_test: 2000, max_vars: 6, max_depth: 3, seed: 1 }
    }
}

const VAR_NAMES: [&str; 12] = ["p", "q", "r", "s", "t", "u", "v", "w", "y", "z", "a", "b"];

fn gen_formula<R: Rng>(rng: &mut R, vars: usize, depth_left: usize) -> Term {
    if depth_left == 0 || rng.gen_bool(0.3) {
        return Term::leaf(VAR_NAMES[rng.gen_range(0..vars)]);
    }
    match rng.gen_range(0..4) {
        0 => Term::new(NOT, vec![gen_formula(rng, vars, depth_left - 1)]),
        k => {
            let op = [AND, OR, IMPLIES][k - 1];
            Term::new(op, vec![gen_formula(rng, vars, depth_left - 1), gen_formula(rng, vars, depth_left - 1)])
        }
    }
}

/// Random entailment problems labeled by the truth-table oracle, half of
/// them entailments, with distinct encodings and disjoint train/test sets.
pub fn gen_prop_problems(p: &PropGenParams) -> Result<(Vec<PropProblem>, Vec<PropProblem>)> {
    if p.max_vars == 0 || p.max_vars > VAR_NAMES.len() {
        return Err(Error::InvalidArgument(format!("max_vars must be in 1..={}", VAR_NAMES.len())));
    }
    let wanted = p.n_train + p.n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut seen = HashSet::new();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    let per_class = |i: usize| if i.is_multiple_of(2) { wanted.div_ceil(2) } else { wanted / 2 };
    let max_attempts = 10_000 + 2000 * wanted;
    let mut attempts = 0;
    while pos.len() < per_class(0) || neg.len() < per_class(1) {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Exhausted(format!(
                "{} entailments and {} non-entailments after {max_attempts} draws",
                pos.len(),
                neg.len()
            )));
        }
        let hypothesis = gen_formula(&mut rng, p.max_vars, p.max_depth);
        let conclusion = gen_formula(&mut rng, p.max_vars, p.max_depth);
        let imp = Term::new(IMPLIES, vec![hypothesis.clone(), conclusion.clone()]);
        let label = eval_prop_universal(&imp)?;
        let bucket = if label { &mut pos } else { &mut neg };
        if bucket.len() >= per_class(if label { 0 } else { 1 }) {
            continue;
        }
        let encoded = index_variables(&imp, &leaf_names(&imp))?;
        if seen.insert(encoded) {
            bucket.push(PropProblem { hypothesis, conclusion, label });
        }
    }
    // Interleave so both splits stay balanced.
    let mut all = Vec::with_capacity(wanted);
    let (mut pi, mut ni) = (pos.into_iter(), neg.into_iter());
    loop {
        match (pi.next(), ni.next()) {
            (None, None) => break,
            (a, b) => all.extend(a.into_iter().chain(b)),
        }
    }
    let test = all.split_off(p.n_train);
    Ok((all, test))
}
