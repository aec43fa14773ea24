use thiserror::Error;

use crate::grammar::{Functor, NtId};

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("production arity mismatch for {functor}: got {got} arguments")]
    ArityMismatch { functor: Functor, got: usize },
    #[error("non-terminal {0} not present in the production table")]
    MissingNonTerminal(NtId),
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("variable sets differ: {0}")]
    VariableMismatch(String),
    #[error("no type entry for variable {0}")]
    MissingVariable(String),
    #[error("term {term} has no production for its principal functor in the given type")]
    UnsolvableTerm { term: String },
    #[error("descriptor names differ: {0} vs {1}")]
    NameMismatch(String, String),
    #[error("type name already registered for site {0}")]
    DuplicateSite(String),
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{file}:{line}:{col}: {msg}")]
    Syntax {
        file: String,
        line: usize,
        col: usize,
        msg: String,
    },
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("call to unknown predicate {pred} in clause {clause} of {owner}")]
    UnknownPredicate {
        pred: String,
        owner: String,
        clause: usize,
    },
    #[error("unknown builtin {0} (strict mode)")]
    UnknownBuiltin(String),
    #[error("entry predicate {0} not defined")]
    MissingEntry(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}
