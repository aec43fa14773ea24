//! Goal-dependent top-down fixpoint engine computing call and success
//! abstract substitutions per predicate.
//!
//! Round-based chaotic iteration over a table of (predicate, call
//! pattern) entries. Widening is applied at three points: when a new
//! call pattern is admitted (against the most recent prior pattern of
//! the same predicate), per variable after propagating a callee success
//! into a clause body, and when a success pattern in the table is
//! updated.

use std::collections::BTreeMap;

use crate::domain::{amgu, term_to_desc, AbstractSub};
use crate::error::AnalysisError;
use crate::grammar::{Term, TypeGrammar};
use crate::lattice::{equiv, includes, intersect};
use crate::structural::{
    desc_union, guard_widen, NameRegistry, Site, TypeDescriptor,
};
use crate::widen::WideningKind;

pub type PredKey = (String, usize);

#[derive(Clone, Debug)]
pub struct Clause {
    pub head: Term,
    pub body: Vec<Literal>,
}

impl Clause {
    /// Distinct variables of the clause, head first.
    pub fn vars(&self) -> Vec<String> {
        let mut out = self.head.vars();
        for lit in &self.body {
            for v in lit.term().vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Every variable occurrence in textual order (with repeats).
    pub fn var_occurrences(&self) -> Vec<String> {
        let mut out: Vec<String> =
            self.head.var_positions().into_iter().map(|(_, v)| v).collect();
        for lit in &self.body {
            out.extend(lit.term().var_positions().into_iter().map(|(_, v)| v));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum Literal {
    Call(Term),
    Builtin(Term),
}

impl Literal {
    pub fn term(&self) -> &Term {
        match self {
            Literal::Call(t) | Literal::Builtin(t) => t,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Program {
    pub preds: BTreeMap<PredKey, Vec<Clause>>,
    pub order: Vec<PredKey>,
}

#[derive(Clone, Copy, Debug)]
pub struct AnalysisOptions {
    pub kind: WideningKind,
    pub widen_bound: u32,
    pub permissive: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            kind: WideningKind::Structural,
            widen_bound: 4,
            permissive: false,
        }
    }
}

/// Call/success pair for one predicate; `success` is `None` while (or
/// forever if) the predicate cannot succeed.
#[derive(Clone, Debug)]
pub struct PredResult {
    pub pred: PredKey,
    pub call: Vec<TypeDescriptor>,
    pub success: Option<Vec<TypeDescriptor>>,
}

#[derive(Clone, Debug)]
pub struct AnalysisResult {
    pub entry: PredKey,
    pub kind: WideningKind,
    pub results: Vec<PredResult>,
    pub iterations: usize,
    pub table_size: usize,
    pub warnings: Vec<String>,
}

impl AnalysisResult {
    pub fn result_for(&self, name: &str, arity: usize) -> Option<&PredResult> {
        self.results
            .iter()
            .find(|r| r.pred.0 == name && r.pred.1 == arity)
    }
}

struct TableEntry {
    call: Vec<TypeDescriptor>,
    success: Option<Vec<TypeDescriptor>>,
}

struct Analyzer<'a> {
    program: &'a Program,
    opts: AnalysisOptions,
    registry: NameRegistry,
    table: BTreeMap<PredKey, Vec<TableEntry>>,
    warnings: Vec<String>,
}

const MAX_ROUNDS: usize = 1000;

/// Analyze `program` from `entry` with the given call argument types
/// (defaults to all-`any` when empty).
pub fn analyze(
    program: &Program,
    entry: &PredKey,
    entry_call: Vec<TypeGrammar>,
    opts: AnalysisOptions,
) -> Result<AnalysisResult, AnalysisError> {
    if !program.preds.contains_key(entry) {
        return Err(AnalysisError::MissingEntry(format!("{}/{}", entry.0, entry.1)));
    }
    let mut az = Analyzer {
        program,
        opts,
        registry: NameRegistry::new(),
        table: BTreeMap::new(),
        warnings: Vec::new(),
    };

    let call: Vec<TypeDescriptor> = (0..entry.1)
        .map(|i| {
            let name = az.registry.ensure_name(Site::CallPattern {
                pred: entry.0.clone(),
                arity: entry.1,
                arg: i,
            });
            let ty = entry_call.get(i).cloned().unwrap_or_else(TypeGrammar::any);
            TypeDescriptor::new(name, ty)
        })
        .collect();
    az.table
        .entry(entry.clone())
        .or_default()
        .push(TableEntry { call, success: None });

    let mut rounds = 0usize;
    loop {
        rounds += 1;
        if rounds > MAX_ROUNDS {
            az.warnings
                .push("iteration budget exhausted; result may be unstable".into());
            break;
        }
        let before: usize = az.table.values().map(|v| v.len()).sum();
        let mut changed = false;
        let keys: Vec<PredKey> = az.table.keys().cloned().collect();
        for key in keys {
            let n_entries = az.table[&key].len();
            for idx in 0..n_entries {
                changed |= az.process_entry(&key, idx)?;
            }
        }
        let after: usize = az.table.values().map(|v| v.len()).sum();
        // Entries admitted mid-round still need a pass of their own.
        if !changed && after == before {
            break;
        }
    }

    let mut results = Vec::new();
    for (key, entries) in &az.table {
        for e in entries {
            results.push(PredResult {
                pred: key.clone(),
                call: e.call.clone(),
                success: e.success.clone(),
            });
        }
    }
    let table_size = results.len();
    Ok(AnalysisResult {
        entry: entry.clone(),
        kind: az.opts.kind,
        results,
        iterations: rounds,
        table_size,
        warnings: az.warnings,
    })
}

/// Analyze every predicate of `program` as an entry with an all-`any`
/// call, keeping each predicate's results from its own run. This is the
/// default mode when no entry point is given.
pub fn analyze_all(
    program: &Program,
    opts: AnalysisOptions,
) -> Result<AnalysisResult, AnalysisError> {
    let mut results = Vec::new();
    let mut iterations = 0;
    let mut warnings = Vec::new();
    for key in &program.order {
        let r = analyze(program, key, vec![], opts)?;
        iterations += r.iterations;
        warnings.extend(r.warnings);
        results.extend(r.results.into_iter().filter(|p| p.pred == *key));
    }
    let table_size = results.len();
    Ok(AnalysisResult {
        entry: ("all".to_string(), 0),
        kind: opts.kind,
        results,
        iterations,
        table_size,
        warnings,
    })
}

impl<'a> Analyzer<'a> {
    fn process_entry(&mut self, key: &PredKey, idx: usize) -> Result<bool, AnalysisError> {
        let clauses = match self.program.preds.get(key) {
            Some(c) => c,
            None => return Ok(false),
        };
        let call = self.table[key][idx].call.clone();
        let mut acc: Option<Vec<TypeDescriptor>> = None;
        for (ci, clause) in clauses.iter().enumerate() {
            let contrib = self.run_clause(key, ci, clause, &call)?;
            if let Some(contrib) = contrib {
                acc = Some(match acc {
                    None => contrib,
                    Some(prev) => prev
                        .iter()
                        .zip(&contrib)
                        .map(|(a, b)| desc_union(a, b))
                        .collect(),
                });
            }
        }
        let cand = match acc {
            None => return Ok(false), // stays bottom
            Some(c) => c,
        };
        let old = self.table[key][idx].success.clone();
        let widened: Vec<TypeDescriptor> = cand
            .into_iter()
            .enumerate()
            .map(|(i, mut c)| {
                let name = self.registry.ensure_name(Site::SuccessPattern {
                    pred: key.0.clone(),
                    arity: key.1,
                    arg: i,
                });
                c.name = Some(name);
                let prev = old.as_ref().map(|o| &o[i]);
                let kind = self.opts.kind;
                let bound = self.opts.widen_bound;
                let mut count = *self.registry.count_mut(name);
                let out = guard_widen(kind, bound, &mut count, prev, c);
                *self.registry.count_mut(name) = count;
                self.registry.set_latest(name, out.clone());
                out
            })
            .collect();
        let grew = match &old {
            None => true,
            Some(o) => !o
                .iter()
                .zip(&widened)
                .all(|(a, b)| includes(&b.ty, &a.ty)),
        };
        if grew {
            self.table.get_mut(key).unwrap()[idx].success = Some(widened);
        }
        Ok(grew)
    }

    fn run_clause(
        &mut self,
        key: &PredKey,
        clause_idx: usize,
        clause: &Clause,
        call: &[TypeDescriptor],
    ) -> Result<Option<Vec<TypeDescriptor>>, AnalysisError> {
        let head_args: Vec<Term> = match &clause.head {
            Term::Comp(_, args) => args.clone(),
            _ => Vec::new(),
        };
        // Formal parameters carry the call descriptors; clause
        // variables start at any.
        let mut entries: BTreeMap<String, TypeDescriptor> = BTreeMap::new();
        for (i, d) in call.iter().enumerate() {
            entries.insert(formal(i), d.clone());
        }
        for v in clause.vars() {
            entries.insert(v, TypeDescriptor::anonymous(TypeGrammar::any()));
        }
        let mut a = AbstractSub::Env(entries);
        for (i, arg) in head_args.iter().enumerate() {
            a = amgu(&a, &formal(i), arg)?;
            if a.is_bottom() {
                return Ok(None);
            }
        }
        for (li, lit) in clause.body.iter().enumerate() {
            a = match lit {
                Literal::Builtin(t) => self.builtin_transfer(t, a)?,
                Literal::Call(t) => self.call_transfer(key, clause_idx, li, t, a)?,
            };
            if a.is_bottom() {
                return Ok(None);
            }
        }
        // Exit: success per argument = call ⊓ type of the head argument.
        let mut out = Vec::with_capacity(head_args.len());
        for (i, arg) in head_args.iter().enumerate() {
            let exit = term_to_desc(arg, &a)?;
            let ty = intersect(&call[i].ty, &exit.ty);
            if ty.is_bottom() {
                return Ok(None);
            }
            let mut d = TypeDescriptor {
                name: None,
                labels: exit.labels.union(&call[i].labels).cloned().collect(),
                ty,
            };
            d.retain_valid_labels();
            out.push(d);
        }
        Ok(Some(out))
    }

    fn builtin_transfer(
        &mut self,
        t: &Term,
        a: AbstractSub,
    ) -> Result<AbstractSub, AnalysisError> {
        let (f, args) = match t {
            Term::Comp(f, args) => (f, args),
            _ => return Ok(a),
        };
        match (f.name.as_str(), f.arity) {
            ("true", 0) => Ok(a),
            ("number", 1) => Ok(constrain_num(&a, &args[0])),
            ("=<", 2) => {
                let a = constrain_num(&a, &args[0]);
                if a.is_bottom() {
                    return Ok(a);
                }
                Ok(constrain_num(&a, &args[1]))
            }
            ("=", 2) => {
                let (lhs, rhs) = (&args[0], &args[1]);
                match (lhs, rhs) {
                    (Term::Var(x), _) => Ok(amgu(&a, x, rhs)?),
                    (_, Term::Var(y)) => Ok(amgu(&a, y, lhs)?),
                    _ => {
                        // Neither side a variable: unify both against a
                        // scratch variable.
                        let tmp = "$eq".to_string();
                        let ext = a.extend_with([tmp.clone()]);
                        let ext = amgu(&ext, &tmp, lhs)?;
                        if ext.is_bottom() {
                            return Ok(AbstractSub::Bottom);
                        }
                        let ext = amgu(&ext, &tmp, rhs)?;
                        Ok(ext.project(&a.vars()))
                    }
                }
            }
            _ => {
                if self.opts.permissive {
                    self.warnings
                        .push(format!("unknown builtin {}/{} treated as true", f.name, f.arity));
                    Ok(a)
                } else {
                    Err(AnalysisError::UnknownBuiltin(format!("{}/{}", f.name, f.arity)))
                }
            }
        }
    }

    fn call_transfer(
        &mut self,
        caller: &PredKey,
        clause_idx: usize,
        lit_idx: usize,
        t: &Term,
        mut a: AbstractSub,
    ) -> Result<AbstractSub, AnalysisError> {
        let (f, args) = match t {
            Term::Comp(f, args) => (f.clone(), args.clone()),
            _ => return Ok(a),
        };
        let callee: PredKey = (f.name.clone(), f.arity);
        if !self.program.preds.contains_key(&callee) {
            if self.opts.permissive {
                self.warnings.push(format!(
                    "call to unknown predicate {}/{} treated as true",
                    callee.0, callee.1
                ));
                return Ok(a);
            }
            return Err(AnalysisError::UnknownPredicate {
                pred: format!("{}/{}", callee.0, callee.1),
                owner: format!("{}/{}", caller.0, caller.1),
                clause: clause_idx + 1,
            });
        }

        // Bind the atom's variables to their per-site type names so the
        // labels built below identify program points.
        if let AbstractSub::Env(env) = &mut a {
            for (i, arg) in args.iter().enumerate() {
                for v in arg.vars() {
                    let name = self.registry.ensure_name(Site::AtomVar {
                        pred: caller.0.clone(),
                        arity: caller.1,
                        clause: clause_idx,
                        atom: lit_idx,
                        arg: i,
                        var: v.clone(),
                    });
                    if let Some(d) = env.get_mut(&v) {
                        if d.name.is_none() {
                            d.name = Some(name);
                        }
                    }
                }
            }
        }

        // Call pattern for the callee.
        let mut pattern = Vec::with_capacity(args.len());
        for (i, arg) in args.iter().enumerate() {
            let mut d = term_to_desc(arg, &a)?;
            d.name = Some(self.registry.ensure_name(Site::CallPattern {
                pred: callee.0.clone(),
                arity: callee.1,
                arg: i,
            }));
            pattern.push(d);
        }
        let entry_idx = self.admit_call(&callee, pattern)?;
        let success = self.table[&callee][entry_idx].success.clone();
        let success = match success {
            None => return Ok(AbstractSub::Bottom), // bootstrap
            Some(s) => s,
        };

        // Propagate the success into the clause environment.
        for (i, arg) in args.iter().enumerate() {
            let tmp = format!("$s{i}");
            let ext = match &a {
                AbstractSub::Bottom => return Ok(AbstractSub::Bottom),
                AbstractSub::Env(env) => {
                    let mut env = env.clone();
                    env.insert(tmp.clone(), success[i].clone());
                    AbstractSub::Env(env)
                }
            };
            let vars = a.vars();
            a = amgu(&ext, &tmp, arg)?.project(&vars);
            if a.is_bottom() {
                return Ok(AbstractSub::Bottom);
            }
        }

        // Per-variable widening against the previous approximation at
        // this program point.
        if let AbstractSub::Env(env) = &mut a {
            for (i, arg) in args.iter().enumerate() {
                for v in arg.vars() {
                    let name = self.registry.ensure_name(Site::AtomVar {
                        pred: caller.0.clone(),
                        arity: caller.1,
                        clause: clause_idx,
                        atom: lit_idx,
                        arg: i,
                        var: v.clone(),
                    });
                    let Some(d) = env.get(&v) else { continue };
                    let mut cand = d.clone();
                    cand.name = Some(name);
                    let prev = self.registry.latest(name).cloned();
                    let kind = self.opts.kind;
                    let bound = self.opts.widen_bound;
                    let mut count = *self.registry.count_mut(name);
                    let widened = guard_widen(kind, bound, &mut count, prev.as_ref(), cand);
                    *self.registry.count_mut(name) = count;
                    self.registry.set_latest(name, widened.clone());
                    env.insert(v, widened);
                }
            }
            if env.values().any(|d| d.ty.is_bottom()) {
                a = AbstractSub::Bottom;
            }
        }
        Ok(a)
    }

    /// Find an equivalent existing call pattern or admit a new one,
    /// widening against the most recent prior pattern.
    fn admit_call(
        &mut self,
        callee: &PredKey,
        pattern: Vec<TypeDescriptor>,
    ) -> Result<usize, AnalysisError> {
        let entries = self.table.entry(callee.clone()).or_default();
        for (i, e) in entries.iter().enumerate() {
            if e.call
                .iter()
                .zip(&pattern)
                .all(|(x, y)| equiv(&x.ty, &y.ty))
            {
                return Ok(i);
            }
        }
        let widened: Vec<TypeDescriptor> = match entries.last() {
            None => pattern,
            Some(prev) => {
                let kind = self.opts.kind;
                let bound = self.opts.widen_bound;
                pattern
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let name = c.name.expect("call patterns are named");
                        let mut count = *self.registry.count_mut(name);
                        let out =
                            guard_widen(kind, bound, &mut count, Some(&prev.call[i]), c);
                        *self.registry.count_mut(name) = count;
                        out
                    })
                    .collect()
            }
        };
        // The widened pattern may coincide with an existing one.
        for (i, e) in entries.iter().enumerate() {
            if e.call
                .iter()
                .zip(&widened)
                .all(|(x, y)| equiv(&x.ty, &y.ty))
            {
                return Ok(i);
            }
        }
        entries.push(TableEntry { call: widened, success: None });
        Ok(entries.len() - 1)
    }
}

fn formal(i: usize) -> String {
    format!("$a{i}")
}

fn constrain_num(a: &AbstractSub, t: &Term) -> AbstractSub {
    match t {
        Term::Num(_) => a.clone(),
        Term::Var(v) => match a.get(v) {
            None => AbstractSub::Bottom,
            Some(d) => {
                let ty = intersect(&d.ty, &TypeGrammar::num());
                let mut a2 = a.clone();
                let mut d2 = d.clone();
                d2.ty = ty;
                d2.retain_valid_labels();
                a2.set(v.to_string(), d2);
                a2
            }
        },
        _ => AbstractSub::Bottom,
    }
}
