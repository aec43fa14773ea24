//! Abstract substitutions and abstract unification.
//!
//! An abstract substitution maps the variables of interest to type
//! descriptors, or is the distinguished bottom. Abstract unification of
//! `x = t` intersects the type of `x` with the type of `t`, then solves
//! `t` against the result to refine the variables of `t`, all equations
//! committed simultaneously.

use std::collections::BTreeMap;

use crate::error::DomainError;
use crate::grammar::{GrammarBuilder, NtRef, RawRef, RawRhs, Selector, Term, TypeGrammar};
use crate::lattice::{includes, intersect, union};
use crate::structural::{Label, TypeDescriptor, LABEL_DEPTH_CAP};

/// One refinement produced by solving a term against a type.
#[derive(Clone, Debug)]
pub struct TypeEquation {
    pub var: String,
    pub ty: TypeGrammar,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AbstractSub {
    Bottom,
    Env(BTreeMap<String, TypeDescriptor>),
}

impl AbstractSub {
    pub fn bottom() -> Self {
        AbstractSub::Bottom
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, AbstractSub::Bottom)
    }

    /// All-`any` substitution over the given variables.
    pub fn top(vars: impl IntoIterator<Item = String>) -> Self {
        AbstractSub::Env(
            vars.into_iter()
                .map(|v| (v, TypeDescriptor::anonymous(TypeGrammar::any())))
                .collect(),
        )
    }

    /// An entry whose grammar is bottom collapses the whole tuple.
    pub fn from_entries(entries: BTreeMap<String, TypeDescriptor>) -> Self {
        if entries.values().any(|d| d.ty.is_bottom()) {
            AbstractSub::Bottom
        } else {
            AbstractSub::Env(entries)
        }
    }

    pub fn entries(&self) -> Option<&BTreeMap<String, TypeDescriptor>> {
        match self {
            AbstractSub::Bottom => None,
            AbstractSub::Env(m) => Some(m),
        }
    }

    pub fn get(&self, var: &str) -> Option<&TypeDescriptor> {
        self.entries().and_then(|m| m.get(var))
    }

    pub fn vars(&self) -> Vec<String> {
        self.entries()
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Add fresh `any` entries for variables not yet present.
    pub fn extend_with(&self, vars: impl IntoIterator<Item = String>) -> AbstractSub {
        match self {
            AbstractSub::Bottom => AbstractSub::Bottom,
            AbstractSub::Env(m) => {
                let mut m = m.clone();
                for v in vars {
                    m.entry(v)
                        .or_insert_with(|| TypeDescriptor::anonymous(TypeGrammar::any()));
                }
                AbstractSub::Env(m)
            }
        }
    }

    /// Keep only the given variables.
    pub fn project(&self, vars: &[String]) -> AbstractSub {
        match self {
            AbstractSub::Bottom => AbstractSub::Bottom,
            AbstractSub::Env(m) => AbstractSub::Env(
                m.iter()
                    .filter(|(k, _)| vars.contains(k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            ),
        }
    }

    pub fn set(&mut self, var: String, d: TypeDescriptor) {
        if d.ty.is_bottom() {
            *self = AbstractSub::Bottom;
            return;
        }
        if let AbstractSub::Env(m) = self {
            m.insert(var, d);
        }
    }
}

fn check_vars(a: &BTreeMap<String, TypeDescriptor>, b: &BTreeMap<String, TypeDescriptor>)
    -> Result<(), DomainError>
{
    if !a.keys().eq(b.keys()) {
        let ka: Vec<_> = a.keys().cloned().collect();
        let kb: Vec<_> = b.keys().cloned().collect();
        return Err(DomainError::VariableMismatch(format!(
            "{{{}}} vs {{{}}}",
            ka.join(","),
            kb.join(",")
        )));
    }
    Ok(())
}

pub fn asub_leq(a1: &AbstractSub, a2: &AbstractSub) -> Result<bool, DomainError> {
    match (a1, a2) {
        (AbstractSub::Bottom, _) => Ok(true),
        (_, AbstractSub::Bottom) => Ok(false),
        (AbstractSub::Env(m1), AbstractSub::Env(m2)) => {
            check_vars(m1, m2)?;
            Ok(m1.iter().all(|(v, d1)| includes(&d1.ty, &m2[v].ty)))
        }
    }
}

pub fn asub_lub(a1: &AbstractSub, a2: &AbstractSub) -> Result<AbstractSub, DomainError> {
    match (a1, a2) {
        (AbstractSub::Bottom, x) | (x, AbstractSub::Bottom) => Ok(x.clone()),
        (AbstractSub::Env(m1), AbstractSub::Env(m2)) => {
            check_vars(m1, m2)?;
            Ok(AbstractSub::Env(
                m1.iter()
                    .map(|(v, d1)| (v.clone(), crate::structural::desc_union(d1, &m2[v])))
                    .collect(),
            ))
        }
    }
}

pub fn asub_glb(a1: &AbstractSub, a2: &AbstractSub) -> Result<AbstractSub, DomainError> {
    match (a1, a2) {
        (AbstractSub::Bottom, _) | (_, AbstractSub::Bottom) => Ok(AbstractSub::Bottom),
        (AbstractSub::Env(m1), AbstractSub::Env(m2)) => {
            check_vars(m1, m2)?;
            let entries: BTreeMap<String, TypeDescriptor> = m1
                .iter()
                .map(|(v, d1)| (v.clone(), crate::structural::desc_intersect(d1, &m2[v])))
                .collect();
            Ok(AbstractSub::from_entries(entries))
        }
    }
}

/// The grammar of `t` with every variable position replaced by that
/// variable's type.
pub fn term_to_type(t: &Term, a: &AbstractSub) -> Result<TypeGrammar, DomainError> {
    let env = a
        .entries()
        .ok_or_else(|| DomainError::VariableMismatch("bottom substitution".into()))?;
    fn rec(
        t: &Term,
        env: &BTreeMap<String, TypeDescriptor>,
        b: &mut GrammarBuilder,
    ) -> Result<RawRef, DomainError> {
        match t {
            Term::Var(v) => {
                let d = env
                    .get(v)
                    .ok_or_else(|| DomainError::MissingVariable(v.clone()))?;
                Ok(b.import(&d.ty))
            }
            Term::Num(_) => Ok(RawRef::Num),
            Term::Comp(f, args) => {
                let mut raw = Vec::with_capacity(args.len());
                for arg in args {
                    raw.push(rec(arg, env, b)?);
                }
                let n = b.fresh();
                b.add(n, RawRhs::Comp(f.clone(), raw)).unwrap();
                Ok(RawRef::Node(n))
            }
        }
    }
    let mut b = GrammarBuilder::new();
    let root = rec(t, env, &mut b)?;
    Ok(b.build(root))
}

/// Like [`term_to_type`], also producing the labels of the result: one
/// label per variable occurrence, plus that variable's own labels
/// shifted under the occurrence, capped at [`LABEL_DEPTH_CAP`].
pub fn term_to_desc(t: &Term, a: &AbstractSub) -> Result<TypeDescriptor, DomainError> {
    let ty = term_to_type(t, a)?;
    let mut d = TypeDescriptor::anonymous(ty);
    if let Some(env) = a.entries() {
        for (sel, v) in t.var_positions() {
            if sel.len() > LABEL_DEPTH_CAP {
                continue;
            }
            if let Some(vd) = env.get(&v) {
                if let Some(n) = vd.name {
                    d.labels.insert(Label { selector: sel.clone(), name: n });
                }
                for l in &vd.labels {
                    let shifted = sel.concat(&l.selector);
                    if shifted.len() <= LABEL_DEPTH_CAP {
                        d.labels.insert(Label { selector: shifted, name: l.name });
                    }
                }
            }
        }
    }
    Ok(d)
}

/// Equations defining the variables of `t` when `t` inhabits `ty`.
/// Repeated variables intersect. Errors when a compound has no matching
/// production (the caller maps this to bottom).
pub fn solve(t: &Term, ty: &TypeGrammar) -> Result<Vec<TypeEquation>, DomainError> {
    let mut acc: BTreeMap<String, TypeGrammar> = BTreeMap::new();
    fn rec(
        t: &Term,
        g: &TypeGrammar,
        r: NtRef,
        acc: &mut BTreeMap<String, TypeGrammar>,
    ) -> Result<(), DomainError> {
        match t {
            Term::Var(v) => {
                let sub = g.at_ref(r);
                match acc.remove(v) {
                    Some(old) => {
                        acc.insert(v.clone(), intersect(&old, &sub));
                    }
                    None => {
                        acc.insert(v.clone(), sub);
                    }
                }
                Ok(())
            }
            Term::Num(_) => match r {
                NtRef::Any | NtRef::Num => Ok(()),
                NtRef::Plain(id) if g.node(id).has_num => Ok(()),
                _ => Err(DomainError::UnsolvableTerm { term: t.to_string() }),
            },
            Term::Comp(f, args) => match r {
                NtRef::Any => {
                    for arg in args {
                        rec(arg, g, NtRef::Any, acc)?;
                    }
                    Ok(())
                }
                NtRef::Num => Err(DomainError::UnsolvableTerm { term: t.to_string() }),
                NtRef::Plain(id) => match g.node(id).alts.get(f) {
                    Some(prod_args) => {
                        for (arg, pr) in args.iter().zip(prod_args.clone()) {
                            rec(arg, g, pr, acc)?;
                        }
                        Ok(())
                    }
                    None => Err(DomainError::UnsolvableTerm { term: t.to_string() }),
                },
            },
        }
    }
    match ty.root() {
        None => Err(DomainError::UnsolvableTerm { term: t.to_string() }),
        Some(r) => {
            rec(t, ty, r, &mut acc)?;
            Ok(acc
                .into_iter()
                .map(|(var, ty)| TypeEquation { var, ty })
                .collect())
        }
    }
}

/// Abstract unification of `x = t` (Eq. 2): refine `x` by the type of
/// `t`, then push the refined type back into the variables of `t`.
/// Failure is bottom, never an error; type names of the input are
/// preserved on every variable.
pub fn amgu(a: &AbstractSub, x: &str, t: &Term) -> Result<AbstractSub, DomainError> {
    let env = match a.entries() {
        None => return Ok(AbstractSub::Bottom),
        Some(e) => e,
    };
    let xd = env
        .get(x)
        .ok_or_else(|| DomainError::MissingVariable(x.to_string()))?;
    let td = term_to_desc(t, a)?;
    let new_x_ty = intersect(&xd.ty, &td.ty);
    if new_x_ty.is_bottom() {
        return Ok(AbstractSub::Bottom);
    }
    let mut new_x = TypeDescriptor {
        name: xd.name,
        labels: xd.labels.union(&td.labels).cloned().collect(),
        ty: new_x_ty,
    };
    new_x.retain_valid_labels();

    let eqs = match solve(t, &new_x.ty) {
        Ok(eqs) => eqs,
        Err(DomainError::UnsolvableTerm { .. }) => return Ok(AbstractSub::Bottom),
        Err(e) => return Err(e),
    };

    // First occurrence selector of each variable of t, for pushing x's
    // labels down to the solved variables.
    let mut first_sel: BTreeMap<String, Selector> = BTreeMap::new();
    for (sel, v) in t.var_positions() {
        first_sel.entry(v).or_insert(sel);
    }

    let mut out = env.clone();
    for eq in &eqs {
        if eq.ty.is_bottom() {
            return Ok(AbstractSub::Bottom);
        }
        let old = out
            .get(&eq.var)
            .ok_or_else(|| DomainError::MissingVariable(eq.var.clone()))?;
        let refined_ty = intersect(&old.ty, &eq.ty);
        if refined_ty.is_bottom() {
            return Ok(AbstractSub::Bottom);
        }
        let mut labels = old.labels.clone();
        if let Some(sel) = first_sel.get(&eq.var) {
            let down = crate::structural::restrict_descriptor(&new_x, sel);
            labels.extend(down.labels);
        }
        let mut d = TypeDescriptor { name: old.name, labels, ty: refined_ty };
        d.retain_valid_labels();
        out.insert(eq.var.clone(), d);
    }
    out.insert(x.to_string(), new_x);
    Ok(AbstractSub::from_entries(out))
}

/// Element-wise union helper used by tests and the analyzer.
pub fn entry_union(a: &TypeGrammar, b: &TypeGrammar) -> TypeGrammar {
    union(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::equiv;
    use crate::notation::parse_grammar;
    use crate::structural::NameRegistry;

    fn g(src: &str) -> TypeGrammar {
        parse_grammar(src).unwrap()
    }

    fn env(pairs: &[(&str, TypeGrammar)]) -> AbstractSub {
        AbstractSub::Env(
            pairs
                .iter()
                .map(|(v, t)| (v.to_string(), TypeDescriptor::anonymous(t.clone())))
                .collect(),
        )
    }

    #[test]
    fn asub_lattice_basics() {
        let bot = AbstractSub::Bottom;
        let a = env(&[("X", TypeGrammar::num())]);
        let top = env(&[("X", TypeGrammar::any())]);
        assert!(asub_leq(&bot, &a).unwrap());
        assert!(asub_leq(&a, &top).unwrap());
        assert!(!asub_leq(&top, &bot).unwrap());
        assert_eq!(asub_lub(&bot, &a).unwrap(), a);
        assert!(asub_glb(&a, &bot).unwrap().is_bottom());
        let mism = env(&[("Y", TypeGrammar::any())]);
        assert!(asub_leq(&a, &mism).is_err());
    }

    #[test]
    fn asub_lub_sorted_approximations() {
        let a1 = env(&[("L", g("T -> []"))]);
        let a2 = env(&[("L", g("T -> .(num,Nil); Nil -> []"))]);
        let u = asub_lub(&a1, &a2).unwrap();
        assert!(equiv(&u.get("L").unwrap().ty, &g("T1 -> [] | .(num,Nil); Nil -> []")));
    }

    #[test]
    fn term_to_type_examples() {
        let a = env(&[("Y", TypeGrammar::num()), ("L", g("T -> [] | .(num,T)"))]);
        let t = Term::cons(Term::var("Y"), Term::var("L"));
        let ty = term_to_type(&t, &a).unwrap();
        assert!(equiv(&ty, &g("T -> .(num,L); L -> [] | .(num,L)")));
        assert!(ty.member(&Term::cons(Term::int(3), Term::nil())));

        let ground = Term::comp("f", vec![Term::atom("a"), Term::atom("b")]);
        assert!(equiv(&term_to_type(&ground, &a).unwrap(), &g("T -> f(a,b)")));

        let bare = env(&[("X", TypeGrammar::num())]);
        assert!(term_to_type(&Term::var("X"), &bare).unwrap().is_num());
        assert!(term_to_type(&Term::var("Z"), &bare).is_err());
    }

    #[test]
    fn solve_examples() {
        let ty = g("T -> .(num,Tl); Tl -> [] | .(num,Tl)");
        let eqs = solve(&Term::cons(Term::var("Y"), Term::var("L")), &ty).unwrap();
        assert_eq!(eqs.len(), 2);
        let m: BTreeMap<_, _> = eqs.iter().map(|e| (e.var.as_str(), &e.ty)).collect();
        assert!(m["Y"].is_num());
        assert!(equiv(m["L"], &g("T -> [] | .(num,T)")));

        let eqs = solve(&Term::var("X"), &ty).unwrap();
        assert!(equiv(&eqs[0].ty, &ty));

        // Repeated variable intersects.
        let ty = g("T -> f(a,Ab); Ab -> a | b");
        let t = Term::comp("f", vec![Term::var("X"), Term::var("X")]);
        let eqs = solve(&t, &ty).unwrap();
        assert_eq!(eqs.len(), 1);
        assert!(equiv(&eqs[0].ty, &g("T -> a")));

        // Unmatched functor errors.
        assert!(solve(&Term::atom("zzz"), &ty).is_err());
        // Any admits everything below.
        let eqs = solve(&t, &TypeGrammar::any()).unwrap();
        assert!(eqs[0].ty.is_any());
    }

    #[test]
    fn amgu_example2_first_iteration() {
        let a = env(&[
            ("X", TypeGrammar::any()),
            ("N", TypeGrammar::num()),
            ("Xs", g("T -> []")),
        ]);
        let t = Term::cons(Term::var("N"), Term::var("Xs"));
        let r = amgu(&a, "X", &t).unwrap();
        assert!(equiv(&r.get("X").unwrap().ty, &g("T -> .(num,Nil); Nil -> []")));
        assert!(r.get("N").unwrap().ty.is_num());
        assert!(equiv(&r.get("Xs").unwrap().ty, &g("T -> []")));
    }

    #[test]
    fn amgu_failure_is_bottom() {
        let a = env(&[("X", g("T -> a")), ("Y", TypeGrammar::any())]);
        let r = amgu(&a, "X", &Term::comp("f", vec![Term::var("Y")])).unwrap();
        assert!(r.is_bottom());
        let r = amgu(&a, "X", &Term::int(1)).unwrap();
        assert!(r.is_bottom());
    }

    #[test]
    fn amgu_pushes_argument_types() {
        let a = env(&[
            ("X", g("T -> f(a,b)")),
            ("Y", TypeGrammar::any()),
            ("Z", TypeGrammar::any()),
        ]);
        let t = Term::comp("f", vec![Term::var("Y"), Term::var("Z")]);
        let r = amgu(&a, "X", &t).unwrap();
        assert!(equiv(&r.get("X").unwrap().ty, &g("T -> f(a,b)")));
        assert!(equiv(&r.get("Y").unwrap().ty, &g("T -> a")));
        assert!(equiv(&r.get("Z").unwrap().ty, &g("T -> b")));
    }

    #[test]
    fn amgu_entry_never_grows() {
        let a = env(&[("X", g("T -> [] | .(num,T)")), ("Y", TypeGrammar::any())]);
        let r = amgu(&a, "X", &Term::cons(Term::int(1), Term::var("Y"))).unwrap();
        assert!(includes(&r.get("X").unwrap().ty, &a.get("X").unwrap().ty));
        assert!(equiv(&r.get("Y").unwrap().ty, &g("T -> [] | .(num,T)")));
    }

    #[test]
    fn amgu_label_bookkeeping() {
        // Reconstruction of the label set E14 from the sorted analysis:
        // X = .(Y,L) with named Y and L gives X labels at the head and
        // tail positions, and solved variables keep their names.
        let mut reg = NameRegistry::new();
        let n13 = reg.anon_name();
        let n14 = reg.anon_name();
        let mut m = BTreeMap::new();
        m.insert("X".to_string(), TypeDescriptor::anonymous(TypeGrammar::any()));
        m.insert("Y".to_string(), TypeDescriptor::new(n13, TypeGrammar::num()));
        m.insert("L".to_string(), TypeDescriptor::new(n14, g("T -> []")));
        let a = AbstractSub::Env(m);
        let r = amgu(&a, "X", &Term::cons(Term::var("Y"), Term::var("L"))).unwrap();
        let x = r.get("X").unwrap();
        let sels: Vec<(String, u32)> = x
            .labels
            .iter()
            .map(|l| (format!("{:?}", l.selector), l.name.0))
            .collect();
        assert_eq!(x.labels.len(), 2, "labels {sels:?}");
        assert!(x.labels.iter().any(|l| l.name == n13));
        assert!(x.labels.iter().any(|l| l.name == n14));
        assert_eq!(r.get("Y").unwrap().name, Some(n13));
        assert_eq!(r.get("L").unwrap().name, Some(n14));
    }

    #[test]
    fn project_and_extend() {
        let a = env(&[("X", TypeGrammar::num())]);
        let b = a.extend_with(["Y".to_string()]);
        assert!(b.get("Y").unwrap().ty.is_any());
        let p = b.project(&["X".to_string()]);
        assert_eq!(p.vars(), vec!["X".to_string()]);
    }
}
