//! Type names, labels, type descriptors, and the structural widening.
//!
//! A type name identifies a program point (a variable occurrence in a
//! clause body, or an argument of a call or success pattern). A label
//! `(s, N')` on a descriptor records that the type bound to name `N'`
//! occurs at selector `s` inside this one. The structural widening uses
//! self-labels to close recursive occurrences instead of guessing them
//! from the grammar shape.

use std::collections::BTreeMap;

use crate::error::DomainError;
use crate::grammar::{GrammarBuilder, NtRef, RawRef, RawRhs, Selector, TypeGrammar};
use crate::lattice::{includes, intersect, union};
use crate::widen::{widen, widen_shorten, WideningKind, WideningRequest};

/// Maximum selector length kept in label sets.
pub const LABEL_DEPTH_CAP: usize = 8;

/// Opaque type name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeName(pub u32);

impl std::fmt::Display for TypeName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "N{}", self.0)
    }
}

/// The program point a type name stands for.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    /// A variable occurrence at a body atom of a clause.
    AtomVar {
        pred: String,
        arity: usize,
        clause: usize,
        atom: usize,
        arg: usize,
        var: String,
    },
    /// Argument of a call pattern of a predicate.
    CallPattern { pred: String, arity: usize, arg: usize },
    /// Argument of a success pattern of a predicate.
    SuccessPattern { pred: String, arity: usize, arg: usize },
    /// Internal name with no program point.
    Anon(u64),
}

/// A label `(s, N)`: the type named `N` occurs at selector `s`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub selector: Selector,
    pub name: TypeName,
}

pub type LabelSet = std::collections::BTreeSet<Label>;

/// A named type with its labels. `name` is `None` for intermediate
/// values that are not bound to a program point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDescriptor {
    pub name: Option<TypeName>,
    pub labels: LabelSet,
    pub ty: TypeGrammar,
}

impl TypeDescriptor {
    pub fn new(name: TypeName, ty: TypeGrammar) -> Self {
        TypeDescriptor { name: Some(name), labels: LabelSet::new(), ty }
    }

    pub fn anonymous(ty: TypeGrammar) -> Self {
        TypeDescriptor { name: None, labels: LabelSet::new(), ty }
    }

    pub fn with_labels(mut self, labels: LabelSet) -> Self {
        self.labels = labels;
        self
    }

    /// Keep own name, union labels, take the given grammar.
    pub fn merged_with(self, other: TypeDescriptor, ty: TypeGrammar) -> TypeDescriptor {
        let mut labels = self.labels;
        labels.extend(other.labels);
        TypeDescriptor { name: self.name.or(other.name), labels, ty }
    }

    /// Rebind to a different name, keeping labels and grammar.
    pub fn renamed(mut self, name: TypeName) -> TypeDescriptor {
        self.name = Some(name);
        self
    }

    /// Drop labels whose selector does not resolve in the grammar or is
    /// too deep to be useful.
    pub fn retain_valid_labels(&mut self) {
        let ty = self.ty.clone();
        self.labels.retain(|l| {
            l.selector.len() <= LABEL_DEPTH_CAP && ty.subtype_at(&l.selector).is_some()
        });
    }
}

/// Descriptor ordering: grammar inclusion plus label containment.
pub fn desc_leq(a: &TypeDescriptor, b: &TypeDescriptor) -> bool {
    includes(&a.ty, &b.ty) && a.labels.is_subset(&b.labels)
}

pub fn desc_union(a: &TypeDescriptor, b: &TypeDescriptor) -> TypeDescriptor {
    let mut labels = a.labels.clone();
    labels.extend(b.labels.iter().cloned());
    let name = if a.name == b.name { a.name } else { None };
    TypeDescriptor { name, labels, ty: union(&a.ty, &b.ty) }
}

pub fn desc_intersect(a: &TypeDescriptor, b: &TypeDescriptor) -> TypeDescriptor {
    let mut labels = a.labels.clone();
    labels.extend(b.labels.iter().cloned());
    let name = if a.name == b.name { a.name } else { None };
    let mut d = TypeDescriptor { name, labels, ty: intersect(&a.ty, &b.ty) };
    d.retain_valid_labels();
    d
}

/// Descriptor of the subterm at `sel`: the subgrammar there, with the
/// labels below `sel` shifted up. Unresolvable selectors give bottom.
pub fn restrict_descriptor(d: &TypeDescriptor, sel: &Selector) -> TypeDescriptor {
    let ty = match d.ty.subtype_at(sel) {
        Some(t) => t,
        None => return TypeDescriptor::anonymous(TypeGrammar::bottom()),
    };
    let labels = d
        .labels
        .iter()
        .filter_map(|l| {
            l.selector
                .strip_prefix(sel)
                .map(|p| Label { selector: p, name: l.name })
        })
        .collect();
    TypeDescriptor { name: None, labels, ty }
}

/// Allocates type names for program points and tracks, per name, the
/// most recent descriptor and the widening counter.
#[derive(Debug, Default)]
pub struct NameRegistry {
    next: u32,
    next_anon: u64,
    sites: BTreeMap<Site, TypeName>,
    latest: BTreeMap<TypeName, TypeDescriptor>,
    counts: BTreeMap<TypeName, u32>,
}

impl NameRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocate a name for a site that must not have one yet.
    pub fn fresh_name(&mut self, site: Site) -> Result<TypeName, DomainError> {
        if self.sites.contains_key(&site) {
            return Err(DomainError::DuplicateSite(format!("{site:?}")));
        }
        let n = TypeName(self.next);
        self.next += 1;
        self.sites.insert(site, n);
        Ok(n)
    }

    /// The name of a site, allocating it on first use.
    pub fn ensure_name(&mut self, site: Site) -> TypeName {
        if let Some(n) = self.sites.get(&site) {
            return *n;
        }
        let n = TypeName(self.next);
        self.next += 1;
        self.sites.insert(site, n);
        n
    }

    pub fn anon_name(&mut self) -> TypeName {
        let site = Site::Anon(self.next_anon);
        self.next_anon += 1;
        self.ensure_name(site)
    }

    pub fn latest(&self, n: TypeName) -> Option<&TypeDescriptor> {
        self.latest.get(&n)
    }

    pub fn set_latest(&mut self, n: TypeName, d: TypeDescriptor) {
        self.latest.insert(n, d);
    }

    pub fn count_mut(&mut self, n: TypeName) -> &mut u32 {
        self.counts.entry(n).or_insert(0)
    }

    pub fn reset_count(&mut self, n: TypeName) {
        self.counts.insert(n, 0);
    }
}

/// Structural widening of a previous and a new approximation to the same
/// type name. Starts from their least upper bound and redirects every
/// position carrying a self-label back to the root.
pub fn widen_structural(prev: &TypeDescriptor, cand: &TypeDescriptor) -> TypeDescriptor {
    let mut labels = prev.labels.clone();
    labels.extend(cand.labels.iter().cloned());
    let name = prev.name.or(cand.name);
    let base = union(&prev.ty, &cand.ty);

    let root_id = match base.root() {
        Some(NtRef::Plain(r)) => r,
        _ => {
            let mut d = TypeDescriptor { name, labels, ty: base };
            d.retain_valid_labels();
            return d;
        }
    };
    // Selectors where the widened name occurs in itself.
    let self_sels: std::collections::BTreeSet<&Selector> = match name {
        Some(n) => labels
            .iter()
            .filter(|l| l.name == n && !l.selector.is_empty())
            .map(|l| &l.selector)
            .collect(),
        None => Default::default(),
    };
    if self_sels.is_empty() {
        let mut d = TypeDescriptor { name, labels, ty: base };
        d.retain_valid_labels();
        return d;
    }

    let mut b = GrammarBuilder::new();
    let out_root = b.fresh();
    let mut seen: BTreeMap<u32, u32> = BTreeMap::new();

    fn rec(
        base: &TypeGrammar,
        r: NtRef,
        sel: &Selector,
        out_root: u32,
        self_sels: &std::collections::BTreeSet<&Selector>,
        seen: &mut BTreeMap<u32, u32>,
        b: &mut GrammarBuilder,
    ) -> RawRef {
        match r {
            NtRef::Any => RawRef::Any,
            NtRef::Num => RawRef::Num,
            NtRef::Plain(id) => {
                if let Some(m) = seen.get(&id) {
                    return RawRef::Node(*m);
                }
                let m = b.fresh();
                seen.insert(id, m);
                let p = base.node(id).clone();
                if p.has_num {
                    b.add(m, RawRhs::Ref(RawRef::Num)).unwrap();
                }
                for (f, args) in &p.alts {
                    let raw: Vec<RawRef> = args
                        .iter()
                        .enumerate()
                        .map(|(i, a)| {
                            let child = sel.child(f.clone(), i + 1);
                            rec(base, *a, &child, out_root, self_sels, seen, b)
                        })
                        .collect();
                    b.add(m, RawRhs::Comp(f.clone(), raw)).unwrap();
                }
                if self_sels.contains(sel) {
                    b.add(m, RawRhs::Ref(RawRef::Node(out_root))).unwrap();
                }
                RawRef::Node(m)
            }
        }
    }

    let root_prods = base.node(root_id).clone();
    if root_prods.has_num {
        b.add(out_root, RawRhs::Ref(RawRef::Num)).unwrap();
    }
    for (f, args) in &root_prods.alts {
        let raw: Vec<RawRef> = args
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let child = Selector::empty().child(f.clone(), i + 1);
                rec(&base, *a, &child, out_root, &self_sels, &mut seen, &mut b)
            })
            .collect();
        b.add(out_root, RawRhs::Comp(f.clone(), raw)).unwrap();
    }
    let ty = b.build(RawRef::Node(out_root));
    let mut d = TypeDescriptor { name, labels, ty };
    d.retain_valid_labels();
    d
}

/// Widening with the termination guard: kinds without a finite-chain
/// guarantee get a per-name counter, and past `bound` growing steps the
/// result additionally goes through shortening.
pub fn guard_widen(
    kind: WideningKind,
    bound: u32,
    count: &mut u32,
    prev: Option<&TypeDescriptor>,
    cand: TypeDescriptor,
) -> TypeDescriptor {
    if kind.needs_guard() && *count >= bound {
        if let Some(p) = prev {
            let mut labels = p.labels.clone();
            labels.extend(cand.labels.iter().cloned());
            let ty = widen_shorten(&union(&p.ty, &cand.ty));
            let mut d = TypeDescriptor { name: p.name.or(cand.name), labels, ty };
            d.retain_valid_labels();
            return d;
        }
    }
    let out = widen(
        kind,
        WideningRequest { previous: prev.cloned(), candidate: cand },
    );
    if kind.needs_guard() {
        if let Some(p) = prev {
            // Count only the applications where the type actually grew.
            if !includes(&out.ty, &p.ty) {
                *count += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Functor;
    use crate::lattice::equiv;
    use crate::notation::parse_grammar;

    fn g(src: &str) -> TypeGrammar {
        parse_grammar(src).unwrap()
    }

    fn sel(parts: &[(&str, usize, usize)]) -> Selector {
        let mut s = Selector::empty();
        for (name, arity, i) in parts {
            s = s.child(Functor::new(*name, *arity), *i);
        }
        s
    }

    #[test]
    fn registry_sites_and_duplicates() {
        let mut reg = NameRegistry::new();
        let site = Site::CallPattern { pred: "p".into(), arity: 1, arg: 0 };
        let n = reg.fresh_name(site.clone()).unwrap();
        assert!(reg.fresh_name(site.clone()).is_err());
        assert_eq!(reg.ensure_name(site), n);
        assert_ne!(reg.anon_name(), n);
    }

    #[test]
    fn restrict_shifts_labels() {
        let mut reg = NameRegistry::new();
        let n = reg.anon_name();
        let mut d = TypeDescriptor::new(reg.anon_name(), g("T -> [] | .(num,T)"));
        d.labels.insert(Label { selector: sel(&[(".", 2, 2), (".", 2, 1)]), name: n });
        let r = restrict_descriptor(&d, &sel(&[(".", 2, 2)]));
        assert!(equiv(&r.ty, &g("T -> [] | .(num,T)")));
        assert_eq!(r.labels.len(), 1);
        assert_eq!(r.labels.iter().next().unwrap().selector, sel(&[(".", 2, 1)]));
        // Unresolvable selector restricts to bottom.
        let bad = restrict_descriptor(&d, &sel(&[("f", 1, 1)]));
        assert!(bad.ty.is_bottom());
    }

    #[test]
    fn structural_widening_closes_self_label() {
        // The list tail approximation: previous [] under name N14, new
        // .(num,[]) with a self-label at the tail position.
        let mut reg = NameRegistry::new();
        let n13 = reg.anon_name();
        let n14 = reg.anon_name();
        let prev = TypeDescriptor::new(n14, g("T -> []"));
        let mut cand = TypeDescriptor::new(n14, g("T -> .(num,Nil); Nil -> []"));
        cand.labels.insert(Label { selector: sel(&[(".", 2, 1)]), name: n13 });
        cand.labels.insert(Label { selector: sel(&[(".", 2, 2)]), name: n14 });
        let w = widen_structural(&prev, &cand);
        assert!(equiv(&w.ty, &g("T1 -> [] | .(num,T1)")));
        assert_eq!(w.labels.len(), 2);
    }

    #[test]
    fn structural_widening_without_self_label_is_union() {
        // Success type of a sorted/1 style predicate: no self-reference,
        // so the precise tail type survives.
        let mut reg = NameRegistry::new();
        let n3 = reg.anon_name();
        let prev = TypeDescriptor::new(n3, g("T4 -> [] | .(any,Nil); Nil -> []"));
        let cand = TypeDescriptor::new(
            n3,
            g("T -> .(num,C); C -> .(num,L); L -> [] | .(num,L)"),
        );
        let w = widen_structural(&prev, &cand);
        assert!(equiv(&w.ty, &g("T5 -> [] | .(any,L); L -> [] | .(num,L)")));
    }

    #[test]
    fn structural_chain_at_nested_selector() {
        let mut reg = NameRegistry::new();
        let n = reg.anon_name();
        let prev = TypeDescriptor::new(n, g("T -> a"));
        let mut cand = TypeDescriptor::new(n, g("T -> f(g(a))"));
        cand.labels.insert(Label {
            selector: sel(&[("f", 1, 1), ("g", 1, 1)]),
            name: n,
        });
        let w = widen_structural(&prev, &cand);
        // The position f.1.g.1 folds back to the whole type.
        assert!(equiv(&w.ty, &g("T -> a | f(G); G -> g(T)")));
        assert!(w.ty.member(&crate::grammar::Term::comp(
            "f",
            vec![crate::grammar::Term::comp(
                "g",
                vec![crate::grammar::Term::comp(
                    "f",
                    vec![crate::grammar::Term::comp(
                        "g",
                        vec![crate::grammar::Term::atom("a")]
                    )]
                )]
            )]
        )));
    }

    #[test]
    fn desc_ops_union_labels() {
        let mut reg = NameRegistry::new();
        let n = reg.anon_name();
        let m = reg.anon_name();
        let mut a = TypeDescriptor::new(n, g("T -> a"));
        a.labels.insert(Label { selector: Selector::empty(), name: m });
        let b = TypeDescriptor::new(n, g("T -> b"));
        let u = desc_union(&a, &b);
        assert_eq!(u.name, Some(n));
        assert!(equiv(&u.ty, &g("T -> a | b")));
        assert_eq!(u.labels.len(), 1);
        let i = desc_intersect(&a, &b);
        assert!(i.ty.is_bottom());
        assert!(desc_leq(&b, &u));
        assert!(!desc_leq(&u, &b));
    }

    #[test]
    fn guard_falls_back_to_shorten() {
        // Successive approximations f^i(a) with no self-labels: the
        // structural widening is just union, the guard must force
        // convergence.
        let mut reg = NameRegistry::new();
        let n = reg.anon_name();
        let mut count = 0u32;
        let mut acc: Option<TypeDescriptor> = None;
        let mut t = crate::grammar::Term::atom("a");
        let mut stable = false;
        for _ in 0..12 {
            let ty = crate::lattice::type_of_term(&t);
            let next = guard_widen(
                WideningKind::Structural,
                3,
                &mut count,
                acc.as_ref(),
                TypeDescriptor::new(n, ty),
            );
            if let Some(prev) = &acc {
                if equiv(&prev.ty, &next.ty) {
                    stable = true;
                    break;
                }
            }
            acc = Some(next);
            t = crate::grammar::Term::comp("f", vec![t]);
        }
        assert!(stable, "guarded structural widening did not converge");
        let result = acc.unwrap();
        // The fallback contains every f^i(a).
        let mut probe = crate::grammar::Term::atom("a");
        for _ in 0..6 {
            assert!(result.ty.member(&probe));
            probe = crate::grammar::Term::comp("f", vec![probe]);
        }
    }
}
