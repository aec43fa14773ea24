use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use regtype::analyzer::{analyze, analyze_all, AnalysisOptions};
use regtype::parser::parse_program;
use regtype::printer::json_report;
use regtype::widen::WideningKind;
use regtype::{
    equiv, includes, intersect, is_empty, parse_grammar, print_grammar, union, Term, TypeGrammar,
};

/// A deterministic regular type. Wraps the grammar in canonical form.
#[pyclass(frozen, name = "Type")]
struct PyType {
    inner: TypeGrammar,
}

fn parse_term(src: &str) -> PyResult<Term> {
    // Reuse the program parser by wrapping the term in a fact.
    let wrapped = format!("term_wrapper({src}).");
    let (program, _) = parse_program(&wrapped, "<term>")
        .map_err(|e| PyValueError::new_err(format!("bad term: {e}")))?;
    let clause = program
        .preds
        .values()
        .flatten()
        .next()
        .ok_or_else(|| PyValueError::new_err("bad term"))?;
    match &clause.head {
        Term::Comp(_, args) if args.len() == 1 => Ok(args[0].clone()),
        _ => Err(PyValueError::new_err("bad term")),
    }
}

#[pymethods]
impl PyType {
    /// Parse a type from grammar notation, e.g. "T -> [] | .(num,T)".
    #[staticmethod]
    fn parse(src: &str) -> PyResult<Self> {
        let inner = parse_grammar(src).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyType { inner })
    }

    #[staticmethod]
    fn any() -> Self {
        PyType { inner: TypeGrammar::any() }
    }

    #[staticmethod]
    fn num() -> Self {
        PyType { inner: TypeGrammar::num() }
    }

    #[staticmethod]
    fn bottom() -> Self {
        PyType { inner: TypeGrammar::bottom() }
    }

    fn __str__(&self) -> String {
        print_grammar(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Type({:?})", print_grammar(&self.inner))
    }

    fn __eq__(&self, other: &PyType) -> bool {
        equiv(&self.inner, &other.inner)
    }

    fn __le__(&self, other: &PyType) -> bool {
        includes(&self.inner, &other.inner)
    }

    fn __ge__(&self, other: &PyType) -> bool {
        includes(&other.inner, &self.inner)
    }

    fn __or__(&self, other: &PyType) -> Self {
        PyType { inner: union(&self.inner, &other.inner) }
    }

    fn __and__(&self, other: &PyType) -> Self {
        PyType { inner: intersect(&self.inner, &other.inner) }
    }

    /// True when every term of `other` belongs to this type.
    fn includes(&self, other: &PyType) -> bool {
        includes(&other.inner, &self.inner)
    }

    fn union(&self, other: &PyType) -> Self {
        PyType { inner: union(&self.inner, &other.inner) }
    }

    fn intersect(&self, other: &PyType) -> Self {
        PyType { inner: intersect(&self.inner, &other.inner) }
    }

    fn is_empty(&self) -> bool {
        is_empty(&self.inner)
    }

    /// Membership test for a ground term written in program syntax,
    /// e.g. "[1,2|[]]" or "f(a,g(b))".
    fn member(&self, term: &str) -> PyResult<bool> {
        Ok(self.inner.member(&parse_term(term)?))
    }
}

/// Analyze a logic program and return the JSON report as a string.
///
/// `entry` is "name/arity"; when omitted every predicate is analyzed
/// with an all-any call.
#[pyfunction]
#[pyo3(signature = (source, widening = "struct", entry = None, program = "<python>",
                    depth_k = 2, widen_bound = 4, simplify = false, permissive = false))]
#[allow(clippy::too_many_arguments)]
fn analyze_program(
    source: &str,
    widening: &str,
    entry: Option<&str>,
    program: &str,
    depth_k: u32,
    widen_bound: u32,
    simplify: bool,
    permissive: bool,
) -> PyResult<String> {
    let kind = match widening.parse::<WideningKind>() {
        Ok(WideningKind::DepthK(_)) => WideningKind::DepthK(depth_k),
        Ok(k) => k,
        Err(e) => return Err(PyValueError::new_err(e)),
    };
    let opts = AnalysisOptions { kind, widen_bound, permissive };
    let (parsed, _warnings) =
        parse_program(source, program).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = match entry {
        Some(spec) => {
            let (name, arity) = spec
                .rsplit_once('/')
                .and_then(|(n, a)| a.parse::<usize>().ok().map(|a| (n.to_string(), a)))
                .ok_or_else(|| PyValueError::new_err(format!("entry '{spec}' is not name/arity")))?;
            analyze(&parsed, &(name, arity), vec![], opts)
                .map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => analyze_all(&parsed, opts).map_err(|e| PyValueError::new_err(e.to_string()))?,
    };
    let report = json_report(&result, program, simplify);
    serde_json::to_string_pretty(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn regtype_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyType>()?;
    m.add_function(wrap_pyfunction!(analyze_program, m)?)?;
    Ok(())
}
