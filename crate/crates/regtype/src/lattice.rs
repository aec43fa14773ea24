//! The lattice of deterministic regular types up to equivalence:
//! inclusion, equivalence, union, intersection, emptiness, and
//! equivalence-based simplification of type environments.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::grammar::{GrammarBuilder, NtRef, RawRef, RawRhs, Term, TypeGrammar};

/// The most precise type of a single term; variables map to `any`.
pub fn type_of_term(t: &Term) -> TypeGrammar {
    fn rec(t: &Term, b: &mut GrammarBuilder) -> RawRef {
        match t {
            Term::Var(_) => RawRef::Any,
            Term::Num(_) => RawRef::Num,
            Term::Comp(f, args) => {
                let raw: Vec<RawRef> = args.iter().map(|a| rec(a, b)).collect();
                let n = b.fresh();
                b.add(n, RawRhs::Comp(f.clone(), raw)).unwrap();
                RawRef::Node(n)
            }
        }
    }
    let mut b = GrammarBuilder::new();
    let r = rec(t, &mut b);
    b.build(r)
}

/// Type inclusion: true iff the concretization of `t1` is contained in
/// that of `t2`.
///
/// Coinductive pairwise simulation with memoized assumed-true pairs.
/// Sound and complete on deterministic grammars: each non-terminal has at
/// most one right hand side per functor, so the check is purely
/// conjunctive and cycles may be assumed to hold.
pub fn includes(t1: &TypeGrammar, t2: &TypeGrammar) -> bool {
    match (t1.root(), t2.root()) {
        (None, _) => true,
        (_, Some(NtRef::Any)) => true,
        (Some(_), None) => false,
        (Some(a), Some(b)) => {
            let mut assumed = HashSet::new();
            incl(t1, t2, a, b, &mut assumed)
        }
    }
}

fn incl(
    g1: &TypeGrammar,
    g2: &TypeGrammar,
    a: NtRef,
    b: NtRef,
    assumed: &mut HashSet<(NtRef, NtRef)>,
) -> bool {
    match (a, b) {
        (_, NtRef::Any) => true,
        (NtRef::Any, _) => false,
        (NtRef::Num, NtRef::Num) => true,
        (NtRef::Num, NtRef::Plain(j)) => g2.node(j).has_num,
        // A plain node always carries at least one compound alternative.
        (NtRef::Plain(_), NtRef::Num) => false,
        (NtRef::Plain(i), NtRef::Plain(j)) => {
            if !assumed.insert((a, b)) {
                return true;
            }
            let p1 = g1.node(i);
            let p2 = g2.node(j);
            if p1.has_num && !p2.has_num {
                return false;
            }
            for (f, args1) in &p1.alts {
                match p2.alts.get(f) {
                    None => return false,
                    Some(args2) => {
                        for (x, y) in args1.iter().zip(args2) {
                            if !incl(g1, g2, *x, *y, assumed) {
                                return false;
                            }
                        }
                    }
                }
            }
            true
        }
    }
}

/// Equivalence: inclusion both ways. Canonical renumbering makes renamed
/// copies structurally identical, which serves as a fast path.
pub fn equiv(t1: &TypeGrammar, t2: &TypeGrammar) -> bool {
    t1 == t2 || (includes(t1, t2) && includes(t2, t1))
}

/// Least upper bound within deterministic (tuple-distributive) grammars:
/// the result's concretization contains the set union and is the least
/// such under tuple-distributive closure.
pub fn union(t1: &TypeGrammar, t2: &TypeGrammar) -> TypeGrammar {
    if t1.is_bottom() {
        return t2.clone();
    }
    if t2.is_bottom() {
        return t1.clone();
    }
    if t1.is_any() || t2.is_any() {
        return TypeGrammar::any();
    }
    let mut b = GrammarBuilder::new();
    let r1 = b.import(t1);
    let r2 = b.import(t2);
    let root = b.fresh();
    b.add(root, RawRhs::Ref(r1)).unwrap();
    b.add(root, RawRhs::Ref(r2)).unwrap();
    b.build(RawRef::Node(root))
}

/// Greatest lower bound: exact intersection of concretizations (product
/// construction on non-terminal pairs followed by empty elimination).
pub fn intersect(t1: &TypeGrammar, t2: &TypeGrammar) -> TypeGrammar {
    if t1.is_bottom() || t2.is_bottom() {
        return TypeGrammar::bottom();
    }
    if t1.is_any() {
        return t2.clone();
    }
    if t2.is_any() {
        return t1.clone();
    }
    let mut b = GrammarBuilder::new();
    let mut memo: HashMap<(NtRef, NtRef), u32> = HashMap::new();
    let (a, bb) = (t1.root().unwrap(), t2.root().unwrap());
    let root = inter(t1, t2, a, bb, &mut b, &mut memo);
    b.build(root)
}

fn inter(
    g1: &TypeGrammar,
    g2: &TypeGrammar,
    a: NtRef,
    b: NtRef,
    builder: &mut GrammarBuilder,
    memo: &mut HashMap<(NtRef, NtRef), u32>,
) -> RawRef {
    match (a, b) {
        (NtRef::Any, other) => import_ref(g2, other, builder),
        (other, NtRef::Any) => import_ref(g1, other, builder),
        (NtRef::Num, NtRef::Num) => RawRef::Num,
        (NtRef::Num, NtRef::Plain(j)) => {
            if g2.node(j).has_num {
                RawRef::Num
            } else {
                RawRef::Bottom
            }
        }
        (NtRef::Plain(i), NtRef::Num) => {
            if g1.node(i).has_num {
                RawRef::Num
            } else {
                RawRef::Bottom
            }
        }
        (NtRef::Plain(i), NtRef::Plain(j)) => {
            if let Some(n) = memo.get(&(a, b)) {
                return RawRef::Node(*n);
            }
            let n = builder.fresh();
            memo.insert((a, b), n);
            let p1 = g1.node(i).clone();
            let p2 = g2.node(j).clone();
            if p1.has_num && p2.has_num {
                builder.add(n, RawRhs::Ref(RawRef::Num)).unwrap();
            }
            for (f, args1) in &p1.alts {
                if let Some(args2) = p2.alts.get(f) {
                    let args: Vec<RawRef> = args1
                        .iter()
                        .zip(args2)
                        .map(|(x, y)| inter(g1, g2, *x, *y, builder, memo))
                        .collect();
                    // Productions with a dead argument are dropped by
                    // normalization, keeping the intersection exact.
                    builder.add(n, RawRhs::Comp(f.clone(), args)).unwrap();
                }
            }
            RawRef::Node(n)
        }
    }
}

fn import_ref(g: &TypeGrammar, r: NtRef, builder: &mut GrammarBuilder) -> RawRef {
    match r {
        NtRef::Any => RawRef::Any,
        NtRef::Num => RawRef::Num,
        NtRef::Plain(_) => builder.import(&g.at_ref(r)),
    }
}

/// True iff the concretization is empty, by the standard
/// productive-non-terminal fixpoint (robust even on values that bypass
/// the normalizing constructors).
pub fn is_empty(t: &TypeGrammar) -> bool {
    let root = match t.root() {
        None => return true,
        Some(NtRef::Any) | Some(NtRef::Num) => return false,
        Some(NtRef::Plain(id)) => id,
    };
    let mut productive: BTreeSet<u32> = BTreeSet::new();
    loop {
        let mut changed = false;
        for (id, p) in t.prods() {
            if productive.contains(id) {
                continue;
            }
            let ok = p.has_num
                || p.alts.values().any(|args| {
                    args.iter().all(|a| match a {
                        NtRef::Any | NtRef::Num => true,
                        NtRef::Plain(m) => productive.contains(m),
                    })
                });
            if ok {
                productive.insert(*id);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    !productive.contains(&root)
}

/// Partition a named type environment by equivalence. Returns one
/// representative per class (lexicographically smallest original name)
/// and the renaming map from each original name to its representative.
pub fn simplify_types(
    env: &BTreeMap<String, TypeGrammar>,
) -> (BTreeMap<String, TypeGrammar>, BTreeMap<String, String>) {
    let mut reps: Vec<(String, TypeGrammar)> = Vec::new();
    let mut renaming = BTreeMap::new();
    // BTreeMap iteration is name-sorted, so the first member of each
    // class is the lexicographically smallest.
    for (name, ty) in env {
        match reps.iter().find(|(_, rep)| equiv(rep, ty)) {
            Some((rep_name, _)) => {
                renaming.insert(name.clone(), rep_name.clone());
            }
            None => {
                reps.push((name.clone(), ty.clone()));
                renaming.insert(name.clone(), name.clone());
            }
        }
    }
    (reps.into_iter().collect(), renaming)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::parse_grammar;
    use crate::grammar::Term;

    fn g(src: &str) -> TypeGrammar {
        parse_grammar(src).unwrap()
    }

    fn num_list() -> TypeGrammar {
        g("T -> [] | .(num,T)")
    }

    fn list_of_lists() -> TypeGrammar {
        g("T -> [] | .(Tl,T); Tl -> [] | .(num,Tl)")
    }

    #[test]
    fn includes_examples() {
        assert!(includes(&TypeGrammar::num(), &TypeGrammar::any()));
        let t = num_list();
        assert!(includes(&t, &t));
        // T_l (num list) is not included in T_ll (list of num lists) and
        // vice versa.
        assert!(!includes(&num_list(), &list_of_lists()));
        assert!(!includes(&list_of_lists(), &num_list()));
        assert!(includes(&TypeGrammar::bottom(), &t));
        assert!(!includes(&TypeGrammar::any(), &t));
    }

    #[test]
    fn num_included_in_plain_with_num_alternative() {
        let t = g("T -> [] | num | .(T,T)");
        assert!(includes(&TypeGrammar::num(), &t));
        assert!(!includes(&TypeGrammar::num(), &num_list()));
    }

    #[test]
    fn equiv_renaming_invariance() {
        let a = g("T -> [] | .(num,T)");
        let b = g("List -> [] | .(num,List)");
        assert!(equiv(&a, &b));
        assert!(!equiv(&TypeGrammar::any(), &a));
    }

    #[test]
    fn union_determinizes_pairwise() {
        let a = g("T -> f(a,b)");
        let b = g("T -> f(c,d)");
        let u = union(&a, &b);
        let expected = g("T -> f(AC,BD); AC -> a | c; BD -> b | d");
        assert!(equiv(&u, &expected));
    }

    #[test]
    fn union_bottom_identity_any_absorbs() {
        let t = num_list();
        assert!(equiv(&union(&TypeGrammar::bottom(), &t), &t));
        assert!(union(&TypeGrammar::any(), &t).is_any());
    }

    #[test]
    fn union_sorted_approximations() {
        // T0 -> [] | .(any,[]) joined with T1 -> .(num,.(num,Tl)) is
        // Tu -> [] | .(any,Tl') with Tl' the num list.
        let t0 = g("T0 -> [] | .(any,[])");
        let t1 = g("T1 -> .(num,.(num,Tl)); Tl -> [] | .(num,Tl)");
        let u = union(&t0, &t1);
        let expected = g("Tu -> [] | .(any,Tl); Tl -> [] | .(num,Tl)");
        assert!(equiv(&u, &expected));
    }

    #[test]
    fn intersect_examples() {
        let t = num_list();
        assert!(equiv(&intersect(&TypeGrammar::any(), &t), &t));
        assert!(intersect(&TypeGrammar::num(), &t).is_bottom());
        let any_list = g("S -> [] | .(any,S)");
        assert!(equiv(&intersect(&t, &any_list), &t));
    }

    #[test]
    fn is_empty_examples() {
        assert!(is_empty(&TypeGrammar::bottom()));
        assert!(!is_empty(&TypeGrammar::num()));
        assert!(!is_empty(&num_list()));
    }

    #[test]
    fn intersect_repeated_structure() {
        // f(a, a|b) meet instances of f(X,X): checked through membership.
        let t = g("T -> f(A,Ab); A -> a; Ab -> a | b");
        let fx = intersect(&t, &g("S -> f(A,A); A -> a | b"));
        assert!(fx.member(&Term::comp("f", vec![Term::atom("a"), Term::atom("a")])));
        assert!(!fx.member(&Term::comp("f", vec![Term::atom("b"), Term::atom("b")])));
    }

    #[test]
    fn simplify_types_merges_copies() {
        let mut env = BTreeMap::new();
        env.insert("A".to_string(), g("A -> [] | .(num,A)"));
        env.insert("B".to_string(), g("B -> [] | .(num,B)"));
        let (reps, map) = simplify_types(&env);
        assert_eq!(reps.len(), 1);
        assert_eq!(map["A"], "A");
        assert_eq!(map["B"], "A");

        let mut single = BTreeMap::new();
        single.insert("X".to_string(), TypeGrammar::num());
        let (reps, _) = simplify_types(&single);
        assert_eq!(reps.len(), 1);
    }
}
