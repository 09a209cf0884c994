//! First-order terms: S-expression syntax, signatures and propositional
//! variable indexing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

/// Connectives of the propositional encoding.
pub const IMPLIES: &str = "=>";
pub const NOT: &str = "not";
pub const OR: &str = "or";
pub const AND: &str = "and";
/// Base variable and successor used to encode the i-th variable as `prime^i(x)`.
pub const VAR_BASE: &str = "x";
pub const VAR_PRIME: &str = "prime";

/// A rooted, ordered tree of operator applications.
///
/// Leaves are arity-0 operators. Terms are immutable once built.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    op: String,
    args: Vec<Term>,
}

impl Term {
    pub fn new(op: impl Into<String>, args: Vec<Term>) -> Self {
        let op = op.into();
        debug_assert!(is_valid_token(&op), "invalid operator token {op:?}");
        Term { op, args }
    }

    pub fn leaf(op: impl Into<String>) -> Self {
        Term::new(op, Vec::new())
    }

    pub fn op(&self) -> &str {
        &self.op
    }

    pub fn args(&self) -> &[Term] {
        &self.args
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_leaf(&self) -> bool {
        self.args.is_empty()
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.args.iter().map(Term::size).sum::<usize>()
    }

    /// Height of the tree; a leaf has depth 0.
    pub fn depth(&self) -> usize {
        self.args.iter().map(|a| a.depth() + 1).max().unwrap_or(0)
    }

    /// Pre-order iterator over all subterms, root first.
    pub fn subterms(&self) -> Subterms<'_> {
        Subterms { stack: vec![self] }
    }

    /// `op` applied `n` times to `base`.
    pub fn tower(op: &str, n: usize, base: Term) -> Term {
        (0..n).fold(base, |t, _| Term::new(op, vec![t]))
    }
}

pub struct Subterms<'a> {
    stack: Vec<&'a Term>,
}

impl<'a> Iterator for Subterms<'a> {
    type Item = &'a Term;

    fn next(&mut self) -> Option<&'a Term> {
        let t = self.stack.pop()?;
        self.stack.extend(t.args.iter().rev());
        Some(t)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            return f.write_str(&self.op);
        }
        write!(f, "({}", self.op)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

impl std::str::FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Term> {
        parse_term(s)
    }
}

fn is_token_char(c: char) -> bool {
    !c.is_whitespace() && c != '(' && c != ')'
}

fn is_valid_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_token_char)
}

/// Canonical S-expression for `t`.
pub fn print_term(t: &Term) -> String {
    t.to_string()
}

/// Parses `(op arg1 ... argn)` or a bare token.
///
/// Arities must be consistent across the whole input.
pub fn parse_term(text: &str) -> Result<Term> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if p.pos == text.len() {
        return Err(Error::Syntax { pos: 0, msg: "empty input".into() });
    }
    let t = p.term()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(Error::Syntax { pos: p.pos, msg: "trailing input after term".into() });
    }
    check_arities(std::slice::from_ref(&t))?;
    Ok(t)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn token(&mut self) -> Result<String> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if !is_token_char(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        if start == self.pos {
            let msg = match self.peek() {
                None => "unexpected end of input".to_string(),
                Some(c) => format!("expected operator token, found {c:?}"),
            };
            return Err(Error::Syntax { pos: self.pos, msg });
        }
        Ok(self.src[start..self.pos].to_string())
    }

    // Iterative over nesting so deep numerals cannot overflow the stack.
    fn term(&mut self) -> Result<Term> {
        let mut stack: Vec<(String, Vec<Term>)> = Vec::new();
        loop {
            self.skip_ws();
            let finished = match self.peek() {
                None => return Err(Error::Syntax { pos: self.pos, msg: "unexpected end of input".into() }),
                Some('(') => {
                    self.pos += 1;
                    self.skip_ws();
                    let op = self.token()?;
                    stack.push((op, Vec::new()));
                    continue;
                }
                Some(')') => {
                    let Some((op, args)) = stack.pop() else {
                        return Err(Error::Syntax { pos: self.pos, msg: "unbalanced ')'".into() });
                    };
                    self.pos += 1;
                    if args.is_empty() {
                        // `(op)` would print back as `op`; reject to keep printing canonical.
                        return Err(Error::Syntax {
                            pos: self.pos - 1,
                            msg: format!("parenthesized operator {op:?} without arguments"),
                        });
                    }
                    Term { op, args }
                }
                Some(_) => Term::leaf(self.token()?),
            };
            match stack.last_mut() {
                Some((_, args)) => args.push(finished),
                None => return Ok(finished),
            }
        }
    }
}

/// Operator name to arity over all `terms`, failing on the first conflict.
pub fn collect_signatures<'a, I>(terms: I) -> Result<BTreeMap<String, usize>>
where
    I: IntoIterator<Item = &'a Term>,
{
    let mut sigs = BTreeMap::new();
    for t in terms {
        for sub in t.subterms() {
            match sigs.get(sub.op()) {
                Some(&a) if a != sub.arity() => {
                    return Err(Error::ArityConflict { op: sub.op().to_string(), first: a, second: sub.arity() })
                }
                Some(_) => {}
                None => {
                    sigs.insert(sub.op().to_string(), sub.arity());
                }
            }
        }
    }
    Ok(sigs)
}

fn check_arities(ts: &[Term]) -> Result<()> {
    collect_signatures(ts).map(|_| ())
}

fn is_connective(op: &str, arity: usize) -> bool {
    matches!((op, arity), (IMPLIES, 2) | (OR, 2) | (AND, 2) | (NOT, 1))
}

/// If `t` is `prime^i(x)`, returns `i`.
pub fn prime_index(t: &Term) -> Option<usize> {
    let mut cur = t;
    let mut i = 0;
    while cur.op() == VAR_PRIME && cur.arity() == 1 {
        cur = &cur.args[0];
        i += 1;
    }
    (cur.op() == VAR_BASE && cur.is_leaf()).then_some(i)
}

/// Replaces the i-th distinct variable (by depth-first, left-to-right first
/// appearance, counted from 0) with `prime^i(x)`.
///
/// Existing `prime^i(x)` towers count as variables too, which makes the
/// operation idempotent.
pub fn index_variables(t: &Term, variable_names: &BTreeSet<String>) -> Result<Term> {
    let mut seen: HashMap<Term, usize> = HashMap::new();
    index_rec(t, variable_names, &mut seen)
}

fn index_rec(t: &Term, vars: &BTreeSet<String>, seen: &mut HashMap<Term, usize>) -> Result<Term> {
    let is_var = (t.is_leaf() && vars.contains(t.op())) || prime_index(t).is_some();
    if is_var {
        let next = seen.len();
        let i = *seen.entry(t.clone()).or_insert(next);
        return Ok(Term::tower(VAR_PRIME, i, Term::leaf(VAR_BASE)));
    }
    if !is_connective(t.op(), t.arity()) {
        return Err(Error::UnknownSymbol(t.op().to_string()));
    }
    let args = t.args.iter().map(|a| index_rec(a, vars, seen)).collect::<Result<Vec<_>>>()?;
    Ok(Term::new(t.op(), args))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn names(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_figure_term() {
        let fig = t("(+ ( * 0 0) (s 0))");
        let expected = Term::new(
            "+",
            vec![Term::new("*", vec![Term::leaf("0"), Term::leaf("0")]), Term::new("s", vec![Term::leaf("0")])],
        );
        assert_eq!(fig, expected);
        assert_eq!(print_term(&fig), "(+ (* 0 0) (s 0))");
    }

    #[test]
    fn prints_small_terms() {
        assert_eq!(print_term(&Term::leaf("0")), "0");
        assert_eq!(print_term(&t("(s 0)")), "(s 0)");
        assert_eq!(t("0"), Term::leaf("0"));
    }

    #[test]
    fn syntax_errors() {
        match parse_term("(s (s 0)") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 8),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_term(""), Err(Error::Syntax { .. })));
        assert!(matches!(parse_term("   "), Err(Error::Syntax { .. })));
        assert!(matches!(parse_term("(s 0))"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_term(")"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_term("0 0"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_term("(s)"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_term("(() 0)"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn arity_conflict_in_one_parse() {
        match parse_term("(+ (s 0) (s 0 0))") {
            Err(Error::ArityConflict { op, first, second }) => {
                assert_eq!((op.as_str(), first, second), ("s", 1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn long_numeral_round_trip() {
        let n = Term::tower("s", 1000, Term::leaf("0"));
        assert_eq!(parse_term(&print_term(&n)).unwrap(), n);
        assert_eq!(n.depth(), 1000);
    }

    #[test]
    fn signatures() {
        let fig = t("(+ (* 0 0) (s 0))");
        let sigs = collect_signatures([&fig]).unwrap();
        let expected: BTreeMap<String, usize> =
            [("0", 0), ("s", 1), ("*", 2), ("+", 2)].map(|(k, v)| (k.to_string(), v)).into();
        assert_eq!(sigs, expected);

        assert!(collect_signatures(std::iter::empty::<&Term>()).unwrap().is_empty());

        let a = t("(and a a)");
        let b = t("(or a b)");
        let sigs = collect_signatures([&a, &b]).unwrap();
        let expected: BTreeMap<String, usize> =
            [("and", 2), ("or", 2), ("a", 0), ("b", 0)].map(|(k, v)| (k.to_string(), v)).into();
        assert_eq!(sigs, expected);

        let c = t("(and a)");
        let err = collect_signatures([&a, &c]).unwrap_err();
        assert!(matches!(err, Error::ArityConflict { ref op, first: 2, second: 1 } if op == "and"));
    }

    #[test]
    fn indexing_examples() {
        let vars = names(&["p", "q", "r"]);
        let cases = [
            ("(=> (and q p) q)", "(=> (and x (prime x)) x)"),
            ("(not p)", "(not x)"),
            ("(or p (or q r))", "(or x (or (prime x) (prime (prime x))))"),
        ];
        for (input, out) in cases {
            assert_eq!(print_term(&index_variables(&t(input), &vars).unwrap()), out);
        }
    }

    #[test]
    fn indexing_rejects_unknown_symbols() {
        let vars = names(&["p"]);
        assert!(matches!(
            index_variables(&t("(or p z)"), &vars),
            Err(Error::UnknownSymbol(s)) if s == "z"
        ));
        assert!(matches!(
            index_variables(&t("(xor p p)"), &vars),
            Err(Error::UnknownSymbol(s)) if s == "xor"
        ));
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop::sample::select(vec!["0", "x", "a", "=>", "é"]).prop_map(Term::leaf);
        leaf.prop_recursive(5, 40, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Term::new("s", vec![a])),
                (prop::sample::select(vec!["+", "*"]), inner.clone(), inner.clone())
                    .prop_map(|(op, a, b)| Term::new(op, vec![a, b])),
                prop::collection::vec(inner, 3).prop_map(|args| Term::new("f", args)),
            ]
        })
    }

    fn arb_formula() -> impl Strategy<Value = Term> {
        let leaf = prop::sample::select(vec!["p", "q", "r", "s", "t"]).prop_map(Term::leaf);
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Term::new(NOT, vec![a])),
                (prop::sample::select(vec![IMPLIES, OR, AND]), inner.clone(), inner)
                    .prop_map(|(op, a, b)| Term::new(op, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(term in arb_term()) {
            prop_assert_eq!(parse_term(&print_term(&term)).unwrap(), term);
        }

        #[test]
        fn indexing_is_idempotent_and_counts_variables(f in arb_formula()) {
            let vars = names(&["p", "q", "r", "s", "t"]);
            let once = index_variables(&f, &vars).unwrap();
            let twice = index_variables(&once, &names(&["x"])).unwrap();
            prop_assert_eq!(&once, &twice);

            let distinct_in: BTreeSet<&str> =
                f.subterms().filter(|s| s.is_leaf()).map(|s| s.op()).collect();
            let towers: BTreeSet<usize> = once.subterms().filter_map(prime_index).collect();
            prop_assert_eq!(towers.len(), distinct_in.len());
            prop_assert!(towers.iter().all(|&i| i < distinct_in.len()));
            for sub in once.subterms() {
                prop_assert!([VAR_BASE, VAR_PRIME, IMPLIES, NOT, OR, AND].contains(&sub.op()));
            }
        }
    }
}
