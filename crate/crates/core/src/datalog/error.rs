use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatalogError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsafe rule `{rule}`: variable {variable} does not occur in a positive body atom")]
    Unsafe { rule: String, variable: String },
    #[error("arity clash for `{predicate}`: declared {expected}, used with {found}")]
    ArityClash {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("predicate `{predicate}` declared twice")]
    DuplicateDeclaration { predicate: String },
    #[error("rule for `{rule}` has an empty body")]
    EmptyBody { rule: String },
    #[error("recursion through {}", cycle.join(" -> "))]
    Cycle { cycle: Vec<String> },
    #[error("missing input relation `{predicate}`")]
    MissingRelation { predicate: String },
    #[error("type error: comparison `{comparison}` over non-integer value {value}")]
    Type { comparison: String, value: String },
    #[error("cannot unfold `{predicate}`: {reason}")]
    Unfold { predicate: String, reason: String },
    #[error("relation arity mismatch: expected {expected}, found {found}")]
    RelationArity { expected: usize, found: usize },
}
