//! Brute-force oracles used by the test suites.
//!
//! Everything here is independent of the simulation- and
//! product-construction-based lattice operations it is used to check:
//! concretizations are enumerated directly from the productions, and
//! unification is plain syntactic mgu computation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::grammar::{Functor, NtRef, Num, Term, TypeGrammar};

/// A finite term universe: the functor alphabet plus sample numbers used
/// to ground out `num`.
#[derive(Clone, Debug)]
pub struct Universe {
    pub functors: Vec<Functor>,
    pub numbers: Vec<i64>,
}

impl Universe {
    pub fn new(functors: Vec<Functor>, numbers: Vec<i64>) -> Self {
        Universe { functors, numbers }
    }

    /// Every ground term over the universe with depth at most `depth`.
    pub fn all_terms(&self, depth: usize) -> Vec<Term> {
        let mut by_depth: Vec<Vec<Term>> = vec![Vec::new()];
        for d in 1..=depth {
            let mut level: Vec<Term> = Vec::new();
            if d == 1 {
                for n in &self.numbers {
                    level.push(Term::int(*n));
                }
            }
            for f in &self.functors {
                if f.arity == 0 {
                    if d == 1 {
                        level.push(Term::Comp(f.clone(), vec![]));
                    }
                    continue;
                }
                // Terms of exact depth d: argument tuples with max depth d-1.
                let pool: Vec<Term> = by_depth[..d].iter().flatten().cloned().collect();
                let mut tuples: Vec<Vec<Term>> = vec![vec![]];
                for _ in 0..f.arity {
                    let mut next = Vec::new();
                    for t in &tuples {
                        for a in &pool {
                            let mut t = t.clone();
                            t.push(a.clone());
                            next.push(t);
                        }
                    }
                    tuples = next;
                }
                for args in tuples {
                    let t = Term::Comp(f.clone(), args);
                    if t.depth() == d {
                        level.push(t);
                    }
                }
            }
            by_depth.push(level);
        }
        by_depth.into_iter().flatten().collect()
    }

    /// The ground terms of the concretization of `g` with depth at most
    /// `depth`, numbers drawn from the universe's sample set. `any`
    /// enumerates the whole universe.
    pub fn enumerate(&self, g: &TypeGrammar, depth: usize) -> BTreeSet<Term> {
        let root = match g.root() {
            None => return BTreeSet::new(),
            Some(r) => r,
        };
        let mut memo: HashMap<(NtRef, usize), BTreeSet<Term>> = HashMap::new();
        self.enum_ref(g, root, depth, &mut memo)
    }

    fn enum_ref(
        &self,
        g: &TypeGrammar,
        r: NtRef,
        depth: usize,
        memo: &mut HashMap<(NtRef, usize), BTreeSet<Term>>,
    ) -> BTreeSet<Term> {
        if depth == 0 {
            return BTreeSet::new();
        }
        if let Some(s) = memo.get(&(r, depth)) {
            return s.clone();
        }
        let mut out: BTreeSet<Term> = BTreeSet::new();
        match r {
            NtRef::Any => {
                out.extend(self.all_terms(depth));
            }
            NtRef::Num => {
                out.extend(self.numbers.iter().map(|n| Term::int(*n)));
            }
            NtRef::Plain(id) => {
                let p = g.node(id).clone();
                if p.has_num {
                    out.extend(self.numbers.iter().map(|n| Term::int(*n)));
                }
                for (f, args) in &p.alts {
                    let mut tuples: Vec<Vec<Term>> = vec![vec![]];
                    for a in args {
                        let pool = self.enum_ref(g, *a, depth - 1, memo);
                        let mut next = Vec::new();
                        for t in &tuples {
                            for x in &pool {
                                let mut t = t.clone();
                                t.push(x.clone());
                                next.push(t);
                            }
                        }
                        tuples = next;
                        if tuples.is_empty() {
                            break;
                        }
                    }
                    for t in tuples {
                        out.insert(Term::Comp(f.clone(), t));
                    }
                }
            }
        }
        memo.insert((r, depth), out.clone());
        out
    }
}

/// A minimal inhabitant of each non-terminal, if one exists (it always
/// does under the no-empty-non-terminal invariant).
fn inhabitants(g: &TypeGrammar) -> BTreeMap<u32, Term> {
    let mut known: BTreeMap<u32, Term> = BTreeMap::new();
    loop {
        let mut changed = false;
        for (id, p) in g.prods() {
            if known.contains_key(id) {
                continue;
            }
            if p.has_num {
                known.insert(*id, Term::int(0));
                changed = true;
                continue;
            }
            'alts: for (f, args) in &p.alts {
                let mut built = Vec::new();
                for a in args {
                    match a {
                        NtRef::Any => built.push(Term::var("_")),
                        NtRef::Num => built.push(Term::int(0)),
                        NtRef::Plain(m) => match known.get(m) {
                            Some(t) => built.push(t.clone()),
                            None => continue 'alts,
                        },
                    }
                }
                known.insert(*id, Term::Comp(f.clone(), built));
                changed = true;
                break;
            }
        }
        if !changed {
            return known;
        }
    }
}

fn inhabit_ref(r: NtRef, inh: &BTreeMap<u32, Term>) -> Option<Term> {
    match r {
        NtRef::Any => Some(Term::var("_")),
        NtRef::Num => Some(Term::int(0)),
        NtRef::Plain(id) => inh.get(&id).cloned(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum RightRef {
    Missing,
    Any,
    Num,
    Plain(u32),
}

/// A term in the concretization of `t1` but not of `t2`, if any.
///
/// Complements [`crate::lattice::includes`]: when inclusion fails this
/// produces a concrete witness, searched directly over the production
/// tables with a to-fixpoint pass over the pair table.
pub fn separating_term(t1: &TypeGrammar, t2: &TypeGrammar) -> Option<Term> {
    let a = t1.root()?;
    let b = match t2.root() {
        None => RightRef::Missing,
        Some(NtRef::Any) => return None,
        Some(NtRef::Num) => RightRef::Num,
        Some(NtRef::Plain(id)) => RightRef::Plain(id),
    };
    let inh = inhabitants(t1);
    let mut memo: HashMap<(NtRef, RightRef), Option<Term>> = HashMap::new();
    // Witnesses only flip from absent to present; iterate to fixpoint so
    // a cycle resolved late still propagates.
    loop {
        let before: usize = memo.values().filter(|v| v.is_some()).count();
        let mut visiting = BTreeSet::new();
        let result = sep(t1, t2, a, b, &inh, &mut memo, &mut visiting);
        let after: usize = memo.values().filter(|v| v.is_some()).count();
        if after == before {
            return result;
        }
    }
}

fn sep(
    g1: &TypeGrammar,
    g2: &TypeGrammar,
    a: NtRef,
    b: RightRef,
    inh: &BTreeMap<u32, Term>,
    memo: &mut HashMap<(NtRef, RightRef), Option<Term>>,
    visiting: &mut BTreeSet<(NtRef, u8, u32)>,
) -> Option<Term> {
    if b == RightRef::Any {
        return None;
    }
    match a {
        NtRef::Any => {
            // Variables belong only to `any`.
            return Some(Term::var("_W"));
        }
        NtRef::Num => {
            return match b {
                RightRef::Num => None,
                RightRef::Plain(j) if g2.node(j).has_num => None,
                _ => Some(Term::int(0)),
            };
        }
        NtRef::Plain(i) => {
            let key = (a, b);
            if let Some(v) = memo.get(&key) {
                if v.is_some() {
                    return v.clone();
                }
            }
            let vkey = (
                a,
                match b {
                    RightRef::Missing => 0,
                    RightRef::Num => 1,
                    RightRef::Plain(_) => 2,
                    RightRef::Any => 3,
                },
                match b {
                    RightRef::Plain(j) => j,
                    _ => 0,
                },
            );
            if !visiting.insert(vkey) {
                // On a cycle: use the memoized value (absent by default).
                return memo.get(&key).cloned().flatten();
            }
            let p1 = g1.node(i).clone();
            let result = (|| {
                if p1.has_num {
                    let covered = match b {
                        RightRef::Num => true,
                        RightRef::Plain(j) => g2.node(j).has_num,
                        _ => false,
                    };
                    if !covered {
                        return Some(Term::int(0));
                    }
                }
                for (f, args1) in &p1.alts {
                    let args2 = match b {
                        RightRef::Plain(j) => g2.node(j).alts.get(f).cloned(),
                        _ => None,
                    };
                    match args2 {
                        None => {
                            // Functor missing on the right: any inhabitant
                            // through it separates.
                            let built: Option<Vec<Term>> =
                                args1.iter().map(|r| inhabit_ref(*r, inh)).collect();
                            if let Some(built) = built {
                                return Some(Term::Comp(f.clone(), built));
                            }
                        }
                        Some(args2) => {
                            for (k, (x, y)) in args1.iter().zip(&args2).enumerate() {
                                let yr = match y {
                                    NtRef::Any => RightRef::Any,
                                    NtRef::Num => RightRef::Num,
                                    NtRef::Plain(m) => RightRef::Plain(*m),
                                };
                                if let Some(w) = sep(g1, g2, *x, yr, inh, memo, visiting) {
                                    let built: Option<Vec<Term>> = args1
                                        .iter()
                                        .enumerate()
                                        .map(|(idx, r)| {
                                            if idx == k {
                                                Some(w.clone())
                                            } else {
                                                inhabit_ref(*r, inh)
                                            }
                                        })
                                        .collect();
                                    if let Some(built) = built {
                                        return Some(Term::Comp(f.clone(), built));
                                    }
                                }
                            }
                        }
                    }
                }
                None
            })();
            visiting.remove(&vkey);
            memo.insert(key, result.clone());
            result
        }
    }
}

/// A substitution mapping variable names to terms.
pub type Subst = BTreeMap<String, Term>;

pub fn apply_subst(t: &Term, s: &Subst) -> Term {
    match t {
        Term::Var(v) => match s.get(v) {
            Some(bound) => apply_subst(bound, s),
            None => t.clone(),
        },
        Term::Num(_) => t.clone(),
        Term::Comp(f, args) => {
            Term::Comp(f.clone(), args.iter().map(|a| apply_subst(a, s)).collect())
        }
    }
}

fn occurs(v: &str, t: &Term, s: &Subst) -> bool {
    match t {
        Term::Var(w) => {
            if w == v {
                return true;
            }
            match s.get(w) {
                Some(bound) => occurs(v, bound, s),
                None => false,
            }
        }
        Term::Num(_) => false,
        Term::Comp(_, args) => args.iter().any(|a| occurs(v, a, s)),
    }
}

fn walk(t: &Term, s: &Subst) -> Term {
    match t {
        Term::Var(v) => match s.get(v) {
            Some(bound) => walk(bound, s),
            None => t.clone(),
        },
        _ => t.clone(),
    }
}

/// Most general unifier of two terms, threaded through `s`.
pub fn unify(t1: &Term, t2: &Term, s: &mut Subst) -> bool {
    let a = walk(t1, s);
    let b = walk(t2, s);
    match (&a, &b) {
        (Term::Var(v), Term::Var(w)) if v == w => true,
        (Term::Var(v), other) | (other, Term::Var(v)) => {
            if occurs(v, other, s) {
                false
            } else {
                s.insert(v.clone(), other.clone());
                true
            }
        }
        (Term::Num(x), Term::Num(y)) => x == y,
        (Term::Comp(f, xs), Term::Comp(g, ys)) => {
            f == g && xs.iter().zip(ys).all(|(x, y)| unify(x, y, s))
        }
        _ => false,
    }
}

/// All ground instances of `t` in the universe up to `depth` (the `t*`
/// set), for the unification-soundness property.
pub fn ground_instances(t: &Term, universe: &Universe, depth: usize) -> Vec<Term> {
    let vars = t.vars();
    let pool = universe.all_terms(depth);
    let mut out = Vec::new();
    let mut assignment: Vec<usize> = vec![0; vars.len()];
    loop {
        let s: Subst = vars
            .iter()
            .zip(&assignment)
            .map(|(v, i)| (v.clone(), pool[*i].clone()))
            .collect();
        let inst = apply_subst(t, &s);
        if inst.is_ground() {
            out.push(inst);
        }
        // Advance the odometer.
        let mut k = 0;
        loop {
            if k == vars.len() {
                return out;
            }
            assignment[k] += 1;
            if assignment[k] < pool.len() {
                break;
            }
            assignment[k] = 0;
            k += 1;
        }
        if vars.is_empty() {
            return out;
        }
    }
}

use crate::analyzer::{Literal, PredKey, Program};

/// Depth-bounded SLD resolution: every success of `entry` called with
/// fresh variables, where each branch uses at most `depth` clause
/// resolutions. Builtins ground unbound variables over `numbers`;
/// leftover free variables in an answer are instantiated from `samples`.
/// Unknown predicates fail.
pub fn sld_successes(
    program: &Program,
    entry: &PredKey,
    depth: usize,
    numbers: &[i64],
    samples: &[Term],
) -> BTreeSet<Vec<Term>> {
    let args: Vec<Term> = (0..entry.1).map(|i| Term::var(format!("$q{i}"))).collect();
    let goal = Term::Comp(Functor::new(entry.0.clone(), entry.1), args.clone());

    struct Ctx<'a> {
        program: &'a Program,
        numbers: &'a [i64],
        fresh: u64,
        budget: u64,
        answers: Vec<Subst>,
    }

    fn solve(ctx: &mut Ctx, goals: &[Literal], s: &Subst, depth: usize) {
        if ctx.budget == 0 {
            return;
        }
        ctx.budget -= 1;
        let Some((lit, rest)) = goals.split_first() else {
            ctx.answers.push(s.clone());
            return;
        };
        match lit {
            Literal::Builtin(t) => solve_builtin(ctx, t.clone(), rest, s, depth),
            Literal::Call(t) => {
                if depth == 0 {
                    return;
                }
                let t = apply_subst(t, s);
                let key: PredKey = match &t {
                    Term::Comp(f, _) => (f.name.clone(), f.arity),
                    _ => return,
                };
                let Some(clauses) = ctx.program.preds.get(&key) else { return };
                for clause in clauses.clone() {
                    // Rename clause variables apart.
                    let n = ctx.fresh;
                    ctx.fresh += 1;
                    let head = rename(&clause.head, n);
                    let mut s2 = s.clone();
                    if unify(&t, &head, &mut s2) {
                        let mut body: Vec<Literal> = clause
                            .body
                            .iter()
                            .map(|l| match l {
                                Literal::Call(t) => Literal::Call(rename(t, n)),
                                Literal::Builtin(t) => Literal::Builtin(rename(t, n)),
                            })
                            .collect();
                        body.extend(rest.iter().cloned());
                        solve(ctx, &body, &s2, depth - 1);
                    }
                }
            }
        }
    }

    fn rename(t: &Term, n: u64) -> Term {
        match t {
            Term::Var(v) => Term::var(format!("$r{n}_{v}")),
            Term::Num(_) => t.clone(),
            Term::Comp(f, args) => {
                Term::Comp(f.clone(), args.iter().map(|a| rename(a, n)).collect())
            }
        }
    }

    fn as_num(t: &Term) -> Option<f64> {
        match t {
            Term::Num(Num::Int(i)) => Some(*i as f64),
            Term::Num(Num::Float(x)) => Some(*x),
            _ => None,
        }
    }

    // Ground an argument that must be numeric, branching over the sample
    // numbers when it is still a variable.
    fn num_choices(t: &Term, s: &Subst, numbers: &[i64]) -> Vec<(f64, Option<(String, Term)>)> {
        let t = apply_subst(t, s);
        match &t {
            Term::Var(v) => numbers
                .iter()
                .map(|n| (*n as f64, Some((v.clone(), Term::int(*n)))))
                .collect(),
            _ => as_num(&t).map(|x| (x, None)).into_iter().collect(),
        }
    }

    fn solve_builtin(ctx: &mut Ctx, t: Term, rest: &[Literal], s: &Subst, depth: usize) {
        match &t {
            Term::Comp(f, args) => match (f.name.as_str(), f.arity) {
                ("true", 0) => solve(ctx, rest, s, depth),
                ("number", 1) => {
                    let numbers: Vec<i64> = ctx.numbers.to_vec();
                    for (_, binding) in num_choices(&args[0], s, &numbers) {
                        let mut s2 = s.clone();
                        if let Some((v, n)) = binding {
                            s2.insert(v, n);
                        }
                        solve(ctx, rest, &s2, depth);
                    }
                }
                ("=<", 2) => {
                    let numbers: Vec<i64> = ctx.numbers.to_vec();
                    for (x, bx) in num_choices(&args[0], s, &numbers) {
                        for (y, by) in num_choices(&args[1], s, &numbers) {
                            if x > y {
                                continue;
                            }
                            let mut s2 = s.clone();
                            if let Some((v, n)) = &bx {
                                s2.insert(v.clone(), n.clone());
                            }
                            if let Some((v, n)) = &by {
                                // A shared variable must take one value.
                                match s2.get(v) {
                                    Some(old) if old != n => continue,
                                    _ => {
                                        s2.insert(v.clone(), n.clone());
                                    }
                                }
                            }
                            solve(ctx, rest, &s2, depth);
                        }
                    }
                }
                ("=", 2) => {
                    let mut s2 = s.clone();
                    if unify(&args[0], &args[1], &mut s2) {
                        solve(ctx, rest, &s2, depth);
                    }
                }
                _ => {}
            },
            _ => {}
        }
    }

    let mut ctx = Ctx {
        program,
        numbers,
        fresh: 0,
        budget: 2_000_000,
        answers: Vec::new(),
    };
    solve(&mut ctx, &[Literal::Call(goal)], &Subst::new(), depth);

    // Ground out leftover variables from the sample terms.
    let mut out: BTreeSet<Vec<Term>> = BTreeSet::new();
    for s in &ctx.answers {
        let tuple: Vec<Term> = args.iter().map(|a| apply_subst(a, s)).collect();
        let mut vars: Vec<String> = Vec::new();
        for t in &tuple {
            for v in t.vars() {
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
        }
        if vars.is_empty() {
            out.insert(tuple);
            continue;
        }
        let mut idx = vec![0usize; vars.len()];
        'odometer: loop {
            let inst: Subst = vars
                .iter()
                .zip(&idx)
                .map(|(v, i)| (v.clone(), samples[*i].clone()))
                .collect();
            out.insert(tuple.iter().map(|t| apply_subst(t, &inst)).collect());
            let mut k = 0;
            loop {
                if k == vars.len() {
                    break 'odometer;
                }
                idx[k] += 1;
                if idx[k] < samples.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
    out
}

#[allow(unused_imports)]
pub use num_helpers::*;

mod num_helpers {
    use super::*;

    /// Convenience for tests: is this term a number literal?
    pub fn is_number(t: &Term) -> bool {
        matches!(t, Term::Num(Num::Int(_)) | Term::Num(Num::Float(_)))
    }
}
