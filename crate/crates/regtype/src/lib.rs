//! Regular type inference for pure logic programs.
//!
//! The library abstractly interprets a program over deterministic regular
//! term grammars and infers call and success types per predicate, with
//! seven interchangeable widening operators.

pub mod analyzer;
pub mod bench;
pub mod domain;
pub mod error;
pub mod grammar;
pub mod lattice;
pub mod notation;
pub mod oracle;
pub mod parser;
pub mod printer;
pub mod structural;
pub mod widen;

pub use grammar::{Functor, GrammarBuilder, NtRef, RawRef, RawRhs, Selector, Term, TypeGrammar};
pub use lattice::{equiv, includes, intersect, is_empty, simplify_types, type_of_term, union};
pub use notation::{parse_grammar, print_grammar};
pub use structural::{NameRegistry, Site, TypeDescriptor, TypeName};
pub use widen::{widen, WideningKind, WideningRequest};
