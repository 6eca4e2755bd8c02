//! The rule dialect shared by every stage: non-recursive Datalog with
//! stratified negation and integer comparisons.

mod ast;
mod error;
mod eval;
mod parse;
mod relation;
mod stratify;
mod unfold;

pub use ast::{
    Atom, CmpOp, Comparison, Declaration, Flavor, Literal, PredicateRef, Program, Role, Rule, Term,
    Value,
};
pub use error::DatalogError;
pub use eval::{evaluate, Prepared};
pub use parse::{parse_program, parse_rule};
pub use relation::{Instance, Relation, Tuple};
pub use stratify::{stratify, Stratum};
pub use unfold::{simplify, unfold};
