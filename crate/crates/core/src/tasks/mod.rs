//! The two benchmark tasks: arithmetic evaluation modulo 16 and
//! propositional truth estimation.

pub mod arith;
pub mod prop;

pub use arith::{
    bits4, count_arith_terms, decode_bits4, eval_arith, gen_arith_dataset, label_of, load_arith_dataset, numeral,
    operator_depth, value_mod16, ArithGenParams, ArithStats,
};
pub use prop::{
    encode_prop, eval_prop_universal, eval_prop_universal_with_limit, gen_prop_problems, load_entailment_dataset,
    load_prop_dataset, parse_entailment_line, parse_infix_formula, EntailmentSplit, PropGenParams, PropProblem,
};
