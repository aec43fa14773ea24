//! Deterministic rendering of analysis results as text or JSON.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::analyzer::AnalysisResult;
use crate::grammar::TypeGrammar;
use crate::lattice::equiv;
use crate::notation::print_grammar_offset;

/// Interns displayed type grammars, assigning globally unique names
/// `T1`, `T2`, ... With `simplify`, equivalent grammars share one name.
struct TypeTable {
    simplify: bool,
    entries: Vec<(TypeGrammar, String, String)>, // grammar, root name, productions
    next: usize,
}

impl TypeTable {
    fn new(simplify: bool) -> Self {
        TypeTable { simplify, entries: Vec::new(), next: 1 }
    }

    fn name_of(&mut self, g: &TypeGrammar) -> String {
        if g.root().is_none() {
            return "$bot".to_string();
        }
        if *g == TypeGrammar::any() {
            return "any".to_string();
        }
        if *g == TypeGrammar::num() {
            return "num".to_string();
        }
        for (other, name, _) in &self.entries {
            let same = if self.simplify { equiv(other, g) } else { other == g };
            if same {
                return name.clone();
            }
        }
        let (prods, used) = print_grammar_offset(g, "T", self.next);
        let name = format!("T{}", self.next);
        self.next += used;
        self.entries.push((g.clone(), name.clone(), prods));
        name
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JsonPred {
    pub name: String,
    pub arity: usize,
    pub call_types: Vec<String>,
    pub success_types: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JsonType {
    pub name: String,
    pub productions: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JsonStats {
    pub iterations: usize,
    pub table_size: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JsonReport {
    pub program: String,
    pub widening: String,
    pub entry: String,
    pub predicates: Vec<JsonPred>,
    pub types: Vec<JsonType>,
    pub stats: JsonStats,
}

/// Build the machine-readable report for an analysis result.
pub fn json_report(result: &AnalysisResult, program: &str, simplify: bool) -> JsonReport {
    let mut table = TypeTable::new(simplify);
    let mut predicates = Vec::new();
    for r in &result.results {
        let call_types: Vec<String> = r.call.iter().map(|d| table.name_of(&d.ty)).collect();
        let success_types: Vec<String> = match &r.success {
            None => vec!["$bot".to_string(); r.pred.1],
            Some(s) => s.iter().map(|d| table.name_of(&d.ty)).collect(),
        };
        predicates.push(JsonPred {
            name: r.pred.0.clone(),
            arity: r.pred.1,
            call_types,
            success_types,
        });
    }
    let types = table
        .entries
        .iter()
        .map(|(_, name, prods)| JsonType { name: name.clone(), productions: prods.clone() })
        .collect();
    JsonReport {
        program: program.to_string(),
        widening: result.kind.name().to_string(),
        entry: if result.entry == ("all".to_string(), 0) {
            "all".to_string()
        } else {
            format!("{}/{}", result.entry.0, result.entry.1)
        },
        predicates,
        types,
        stats: JsonStats {
            iterations: result.iterations,
            table_size: result.table_size,
            warnings: result.warnings.clone(),
        },
    }
}

/// Render a result as human-readable text. Output is deterministic:
/// predicates follow table order, nonterminals are numbered by first use.
pub fn format_result(result: &AnalysisResult, program: &str, simplify: bool) -> String {
    let report = json_report(result, program, simplify);
    let mut out = String::new();
    writeln!(out, "program: {}", report.program).unwrap();
    writeln!(out, "widening: {}", report.widening).unwrap();
    writeln!(out, "entry: {}", report.entry).unwrap();
    for p in &report.predicates {
        writeln!(out).unwrap();
        writeln!(out, "{}/{}:", p.name, p.arity).unwrap();
        writeln!(out, "  call: ({})", p.call_types.join(", ")).unwrap();
        writeln!(out, "  success: ({})", p.success_types.join(", ")).unwrap();
    }
    if !report.types.is_empty() {
        writeln!(out).unwrap();
        writeln!(out, "types:").unwrap();
        for t in &report.types {
            writeln!(out, "  {}", t.productions).unwrap();
        }
    }
    for w in &report.stats.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    writeln!(
        out,
        "iterations: {}, table entries: {}",
        report.stats.iterations, report.stats.table_size
    )
    .unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{analyze, AnalysisOptions};
    use crate::parser::parse_program;
    use crate::widen::WideningKind;

    const LOL: &str = "\
list_of_lists([]).
list_of_lists([L|Ls]) :- num_list(L), list_of_lists(Ls).
num_list([]).
num_list([N|Ns]) :- number(N), num_list(Ns).
";

    fn run(kind: WideningKind) -> AnalysisResult {
        let (prog, _) = parse_program(LOL, "lol.pl").unwrap();
        let opts = AnalysisOptions { kind, ..AnalysisOptions::default() };
        analyze(&prog, &("list_of_lists".to_string(), 1), vec![], opts).unwrap()
    }

    #[test]
    fn text_output_is_deterministic_and_named() {
        let r = run(WideningKind::Structural);
        let a = format_result(&r, "lol.pl", false);
        let b = format_result(&r, "lol.pl", false);
        assert_eq!(a, b);
        assert!(a.contains("program: lol.pl"));
        assert!(a.contains("widening: struct"));
        assert!(a.contains("list_of_lists/1:"));
        assert!(a.contains("num_list/1:"));
        assert!(a.contains("call: (any)"));
        assert!(a.contains("types:"));
    }

    #[test]
    fn json_schema_and_roundtrip() {
        let r = run(WideningKind::Functor);
        let rep = json_report(&r, "lol.pl", false);
        assert_eq!(rep.entry, "list_of_lists/1");
        assert_eq!(rep.widening, "functor");
        let s = serde_json::to_string(&rep).unwrap();
        let back: JsonReport = serde_json::from_str(&s).unwrap();
        assert_eq!(rep, back);
        // Every non-leaf referenced type name is defined in the types list.
        let defined: Vec<&str> = rep.types.iter().map(|t| t.name.as_str()).collect();
        for p in &rep.predicates {
            for n in p.call_types.iter().chain(&p.success_types) {
                if n != "any" && n != "num" && n != "$bot" {
                    assert!(defined.contains(&n.as_str()), "undefined type {n}");
                }
            }
        }
    }

    #[test]
    fn simplify_merges_equivalent_types() {
        let r = run(WideningKind::Functor);
        let plain = json_report(&r, "lol.pl", false);
        let simp = json_report(&r, "lol.pl", true);
        assert!(simp.types.len() <= plain.types.len());
        // With functor widening both predicates succeed with the same type.
        let lol = simp.predicates.iter().find(|p| p.name == "list_of_lists").unwrap();
        let nl = simp.predicates.iter().find(|p| p.name == "num_list").unwrap();
        assert!(!lol.success_types.is_empty() && !nl.success_types.is_empty());
    }

    #[test]
    fn bottom_success_prints_bot() {
        let (prog, _) = parse_program("p(X) :- number(X), q(X).\nq(f).\n", "b.pl").unwrap();
        let r = analyze(
            &prog,
            &("p".to_string(), 1),
            vec![],
            AnalysisOptions::default(),
        )
        .unwrap();
        let rep = json_report(&r, "b.pl", false);
        let p = rep.predicates.iter().find(|x| x.name == "p").unwrap();
        assert_eq!(p.success_types, vec!["$bot".to_string()]);
    }

    #[test]
    fn offset_printing_produces_unique_names() {
        let r = run(WideningKind::Structural);
        let rep = json_report(&r, "lol.pl", false);
        let mut seen = std::collections::BTreeSet::new();
        for t in &rep.types {
            assert!(seen.insert(t.name.clone()), "duplicate name {}", t.name);
            assert!(t.productions.starts_with(&format!("{} ->", t.name)));
        }
    }
}
