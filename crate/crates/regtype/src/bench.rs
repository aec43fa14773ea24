//! Benchmark and precision-comparison harness over a corpus directory.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::analyzer::{analyze_all, AnalysisOptions, AnalysisResult, PredResult};
use crate::lattice::includes;
use crate::parser::parse_program;
use crate::widen::WideningKind;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub program: String,
    pub widening: String,
    pub millis: f64,
    pub iterations: usize,
    pub table_size: usize,
    pub ok: bool,
    pub error: Option<String>,
}

/// Order relation between two success substitutions; `a_vs_b` is one of
/// `eq`, `leq` (a more precise), `geq`, or `incomparable`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecisionEntry {
    pub program: String,
    pub predicate: String,
    pub a: String,
    pub b: String,
    pub a_vs_b: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub precision: Vec<PrecisionEntry>,
}

fn success_leq(a: &PredResult, b: &PredResult) -> bool {
    match (&a.success, &b.success) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(x), Some(y)) => x.iter().zip(y).all(|(da, db)| includes(&da.ty, &db.ty)),
    }
}

fn relation(a: &PredResult, b: &PredResult) -> &'static str {
    match (success_leq(a, b), success_leq(b, a)) {
        (true, true) => "eq",
        (true, false) => "leq",
        (false, true) => "geq",
        (false, false) => "incomparable",
    }
}

/// The seeded all-`any` entry result for each predicate, in program order.
fn main_results(r: &AnalysisResult) -> Vec<&PredResult> {
    let mut seen = std::collections::BTreeSet::new();
    r.results
        .iter()
        .filter(|p| seen.insert(p.pred.clone()))
        .collect()
}

/// Run every (program, kind) pair over the `.pl` files in `dir`. Parse or
/// analysis failures are recorded as failed rows and the run continues.
pub fn bench(dir: &Path, kinds: &[WideningKind], base: AnalysisOptions) -> std::io::Result<BenchReport> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "pl").unwrap_or(false))
        .collect();
    files.sort();

    let mut report = BenchReport::default();
    for path in files {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let src = match std::fs::read_to_string(&path) {
            Ok(s) => s,
            Err(e) => {
                report.rows.push(BenchRow {
                    program: name,
                    widening: "-".into(),
                    millis: 0.0,
                    iterations: 0,
                    table_size: 0,
                    ok: false,
                    error: Some(e.to_string()),
                });
                continue;
            }
        };
        let prog = match parse_program(&src, &name) {
            Ok((p, _)) => p,
            Err(e) => {
                report.rows.push(BenchRow {
                    program: name,
                    widening: "-".into(),
                    millis: 0.0,
                    iterations: 0,
                    table_size: 0,
                    ok: false,
                    error: Some(e.to_string()),
                });
                continue;
            }
        };

        let mut per_kind: Vec<(String, AnalysisResult)> = Vec::new();
        for &kind in kinds {
            let opts = AnalysisOptions { kind, ..base };
            let start = Instant::now();
            match analyze_all(&prog, opts) {
                Ok(r) => {
                    report.rows.push(BenchRow {
                        program: name.clone(),
                        widening: kind.name().into(),
                        millis: start.elapsed().as_secs_f64() * 1000.0,
                        iterations: r.iterations,
                        table_size: r.table_size,
                        ok: true,
                        error: None,
                    });
                    per_kind.push((kind.name().into(), r));
                }
                Err(e) => report.rows.push(BenchRow {
                    program: name.clone(),
                    widening: kind.name().into(),
                    millis: start.elapsed().as_secs_f64() * 1000.0,
                    iterations: 0,
                    table_size: 0,
                    ok: false,
                    error: Some(e.to_string()),
                }),
            }
        }

        for i in 0..per_kind.len() {
            for j in i + 1..per_kind.len() {
                let (ka, ra) = &per_kind[i];
                let (kb, rb) = &per_kind[j];
                let ma = main_results(ra);
                for pa in ma {
                    if let Some(pb) =
                        main_results(rb).into_iter().find(|p| p.pred == pa.pred)
                    {
                        report.precision.push(PrecisionEntry {
                            program: name.clone(),
                            predicate: format!("{}/{}", pa.pred.0, pa.pred.1),
                            a: ka.clone(),
                            b: kb.clone(),
                            a_vs_b: relation(pa, pb).to_string(),
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

impl BenchReport {
    /// Text tables: one for timings, one for the precision matrix.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<22} {:<10} {:>10} {:>6} {:>6}  status", "program", "widening", "ms", "iters", "entries").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<22} {:<10} {:>10.2} {:>6} {:>6}  {}",
                r.program,
                r.widening,
                r.millis,
                r.iterations,
                r.table_size,
                match &r.error {
                    None => "ok".to_string(),
                    Some(e) => format!("failed: {e}"),
                }
            )
            .unwrap();
        }
        if !self.precision.is_empty() {
            writeln!(out).unwrap();
            writeln!(out, "{:<22} {:<18} {:<10} {:<10} relation", "program", "predicate", "a", "b").unwrap();
            for p in &self.precision {
                writeln!(
                    out,
                    "{:<22} {:<18} {:<10} {:<10} {}",
                    p.program, p.predicate, p.a, p.b, p.a_vs_b
                )
                .unwrap();
            }
        }
        out
    }

    /// Precision relation of `a` vs `b` for a given program predicate.
    pub fn relation_of(&self, program: &str, predicate: &str, a: &str, b: &str) -> Option<&str> {
        for p in &self.precision {
            if p.program == program && p.predicate == predicate {
                if p.a == a && p.b == b {
                    return Some(&p.a_vs_b);
                }
                if p.a == b && p.b == a {
                    return Some(match p.a_vs_b.as_str() {
                        "leq" => "geq",
                        "geq" => "leq",
                        other => other,
                    });
                }
            }
        }
        None
    }
}
