//! Terms, functor alphabets, selectors, and deterministic regular term
//! grammars in normal form.
//!
//! A [`TypeGrammar`] is an immutable value: a root non-terminal plus a
//! production table. Every constructor goes through [`GrammarBuilder::build`],
//! which normalizes (inlines chain productions, determinizes by merging
//! duplicate-functor right hand sides argument-wise), eliminates empty
//! non-terminals, prunes unreachable ones and renumbers canonically. The
//! distinguished types `any`, `num` and bottom are represented directly.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::error::GrammarError;

/// A ranked function symbol. `f/2` and `f/3` are distinct functors.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Functor {
    pub name: String,
    pub arity: usize,
}

impl Functor {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        Functor { name: name.into(), arity }
    }

    /// The list constructor `'.'/2`.
    pub fn cons() -> Self {
        Functor::new(".", 2)
    }

    /// The empty list constant `'[]'/0`.
    pub fn nil() -> Self {
        Functor::new("[]", 0)
    }

    pub fn atom(name: impl Into<String>) -> Self {
        Functor::new(name, 0)
    }
}

impl fmt::Display for Functor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// Numeric literal. All numbers abstract to `num`; the value is kept only
/// for concrete terms.
#[derive(Clone, Copy, Debug)]
pub enum Num {
    Int(i64),
    Float(f64),
}

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Num::Int(a), Num::Int(b)) => a == b,
            (Num::Float(a), Num::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}
impl Eq for Num {}

impl std::hash::Hash for Num {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Num::Int(i) => (0u8, *i).hash(state),
            Num::Float(f) => (1u8, f.to_bits()).hash(state),
        }
    }
}

impl PartialOrd for Num {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Num {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        fn key(n: &Num) -> (u8, i64, u64) {
            match n {
                Num::Int(i) => (0, *i, 0),
                Num::Float(f) => (1, 0, f.to_bits()),
            }
        }
        key(self).cmp(&key(other))
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Int(i) => write!(f, "{i}"),
            Num::Float(x) => write!(f, "{x}"),
        }
    }
}

/// A finite term: variable, number, or compound (constants are 0-ary
/// compounds).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Num(Num),
    Comp(Functor, Vec<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn int(v: i64) -> Self {
        Term::Num(Num::Int(v))
    }

    pub fn atom(name: impl Into<String>) -> Self {
        Term::Comp(Functor::atom(name), vec![])
    }

    pub fn comp(name: impl Into<String>, args: Vec<Term>) -> Self {
        let f = Functor::new(name, args.len());
        Term::Comp(f, args)
    }

    pub fn nil() -> Self {
        Term::Comp(Functor::nil(), vec![])
    }

    pub fn cons(head: Term, tail: Term) -> Self {
        Term::Comp(Functor::cons(), vec![head, tail])
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Num(_) => true,
            Term::Comp(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Depth of a term: constants and numbers have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) | Term::Num(_) => 1,
            Term::Comp(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    /// Variables of the term, left-to-right, deduplicated.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Term::Var(v) => {
                if !out.iter().any(|x| x == v) {
                    out.push(v.clone());
                }
            }
            Term::Num(_) => {}
            Term::Comp(_, args) => {
                for a in args {
                    a.collect_vars(out);
                }
            }
        }
    }

    /// Positions of every variable occurrence as `(selector, var)` pairs.
    pub fn var_positions(&self) -> Vec<(Selector, String)> {
        let mut out = Vec::new();
        self.var_positions_at(&Selector::empty(), &mut out);
        out
    }

    fn var_positions_at(&self, here: &Selector, out: &mut Vec<(Selector, String)>) {
        match self {
            Term::Var(v) => out.push((here.clone(), v.clone())),
            Term::Num(_) => {}
            Term::Comp(f, args) => {
                for (i, a) in args.iter().enumerate() {
                    a.var_positions_at(&here.child(f.clone(), i + 1), out);
                }
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Num(n) => write!(f, "{n}"),
            Term::Comp(fun, args) => {
                if args.is_empty() {
                    write!(f, "{}", fun.name)
                } else {
                    write!(f, "{}(", fun.name)?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")
                }
            }
        }
    }
}

/// A path of `(functor, argument index)` steps addressing a subterm or
/// subtype position. Indices are 1-based; the empty selector is identity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Selector(pub Vec<(Functor, usize)>);

impl Selector {
    pub fn empty() -> Self {
        Selector(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, f: Functor, index: usize) -> Self {
        let mut steps = self.0.clone();
        steps.push((f, index));
        Selector(steps)
    }

    pub fn concat(&self, other: &Selector) -> Self {
        let mut steps = self.0.clone();
        steps.extend(other.0.iter().cloned());
        Selector(steps)
    }

    /// If `self` starts with `prefix`, the remaining suffix.
    pub fn strip_prefix(&self, prefix: &Selector) -> Option<Selector> {
        if self.0.len() < prefix.0.len() {
            return None;
        }
        if self.0[..prefix.0.len()] == prefix.0[..] {
            Some(Selector(self.0[prefix.0.len()..].to_vec()))
        } else {
            None
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "epsilon");
        }
        for (i, (fun, ix)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "({}.{})", fun.name, ix)?;
        }
        Ok(())
    }
}

/// Subterm of `t` referenced by selector `s`, if the path exists.
pub fn subterm_at<'a>(t: &'a Term, s: &Selector) -> Option<&'a Term> {
    let mut cur = t;
    for (f, i) in &s.0 {
        match cur {
            Term::Comp(g, args) if g == f && *i >= 1 && *i <= args.len() => {
                cur = &args[*i - 1];
            }
            _ => return None,
        }
    }
    Some(cur)
}

/// Identifier of a plain non-terminal, local to one grammar.
pub type NtId = u32;

/// Reference to a non-terminal on a right hand side. `any` and `num` are
/// treated as terminals for the determinism check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NtRef {
    Any,
    Num,
    Plain(NtId),
}

/// Productions of one plain non-terminal: an optional bare `num`
/// alternative plus compound alternatives keyed by functor (determinism by
/// construction).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct NtProds {
    pub has_num: bool,
    pub alts: BTreeMap<Functor, Vec<NtRef>>,
}

/// Principal functor set of an or-node, with `num` and `any` as
/// pseudo-functors.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctorSet {
    pub functors: BTreeSet<Functor>,
    pub has_num: bool,
    pub is_any: bool,
}

/// A deterministic regular term grammar in normal form.
///
/// `root == None` is the bottom type (empty concretization); `Any`/`Num`
/// roots are the distinguished leaves. Invariants: every plain
/// non-terminal is reachable from the root, none has an empty
/// concretization, and ids are canonical (DFS preorder).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TypeGrammar {
    root: Option<NtRef>,
    prods: BTreeMap<NtId, NtProds>,
}

impl TypeGrammar {
    pub fn bottom() -> Self {
        TypeGrammar { root: None, prods: BTreeMap::new() }
    }

    pub fn any() -> Self {
        TypeGrammar { root: Some(NtRef::Any), prods: BTreeMap::new() }
    }

    pub fn num() -> Self {
        TypeGrammar { root: Some(NtRef::Num), prods: BTreeMap::new() }
    }

    /// Type of a single ground constant, e.g. `[]`.
    pub fn constant(f: Functor) -> Self {
        assert_eq!(f.arity, 0, "constant requires a 0-ary functor");
        let mut b = GrammarBuilder::new();
        let n = b.fresh();
        b.add(n, RawRhs::Comp(f, vec![])).unwrap();
        b.build(RawRef::Node(n))
    }

    pub fn is_bottom(&self) -> bool {
        self.root.is_none()
    }

    pub fn is_any(&self) -> bool {
        self.root == Some(NtRef::Any)
    }

    pub fn is_num(&self) -> bool {
        self.root == Some(NtRef::Num)
    }

    pub fn root(&self) -> Option<NtRef> {
        self.root
    }

    pub fn prods(&self) -> &BTreeMap<NtId, NtProds> {
        &self.prods
    }

    pub fn node(&self, id: NtId) -> &NtProds {
        &self.prods[&id]
    }

    pub fn node_count(&self) -> usize {
        self.prods.len()
    }

    /// Principal functor set of a reference within this grammar.
    pub fn functor_set(&self, r: NtRef) -> FunctorSet {
        match r {
            NtRef::Any => FunctorSet { functors: BTreeSet::new(), has_num: false, is_any: true },
            NtRef::Num => FunctorSet { functors: BTreeSet::new(), has_num: true, is_any: false },
            NtRef::Plain(id) => {
                let p = &self.prods[&id];
                FunctorSet {
                    functors: p.alts.keys().cloned().collect(),
                    has_num: p.has_num,
                    is_any: false,
                }
            }
        }
    }

    /// All functors occurring anywhere in the production table, plus
    /// whether `num` occurs (as alternative or argument).
    pub fn alphabet(&self) -> (BTreeSet<Functor>, bool) {
        let mut fs = BTreeSet::new();
        let mut num = self.root == Some(NtRef::Num);
        for p in self.prods.values() {
            num |= p.has_num;
            for (f, args) in &p.alts {
                fs.insert(f.clone());
                num |= args.iter().any(|a| *a == NtRef::Num);
            }
        }
        (fs, num)
    }

    /// Membership: `t` in the concretization of the grammar. Variables are
    /// members only of `any`; numbers of `num` and `any`.
    pub fn member(&self, t: &Term) -> bool {
        match self.root {
            None => false,
            Some(r) => self.member_at(t, r),
        }
    }

    fn member_at(&self, t: &Term, r: NtRef) -> bool {
        match r {
            NtRef::Any => true,
            NtRef::Num => matches!(t, Term::Num(_)),
            NtRef::Plain(id) => {
                let p = &self.prods[&id];
                match t {
                    Term::Var(_) => false,
                    Term::Num(_) => p.has_num,
                    Term::Comp(f, args) => match p.alts.get(f) {
                        Some(rs) => args.iter().zip(rs).all(|(a, r)| self.member_at(a, *r)),
                        None => false,
                    },
                }
            }
        }
    }

    /// Grammar rooted at the non-terminal reached by following, at each
    /// step `(f.i)`, the unique right hand side for `f`. `any` is closed
    /// under selection; a dead path is `None`.
    pub fn subtype_at(&self, s: &Selector) -> Option<TypeGrammar> {
        let mut cur = self.root?;
        for (f, i) in &s.0 {
            match cur {
                NtRef::Any => return Some(TypeGrammar::any()),
                NtRef::Num => return None,
                NtRef::Plain(id) => {
                    let p = &self.prods[&id];
                    let args = p.alts.get(f)?;
                    if *i < 1 || *i > args.len() {
                        return None;
                    }
                    cur = args[*i - 1];
                }
            }
        }
        Some(self.at_ref(cur))
    }

    /// Restriction: the grammar rooted at reference `r`, renamed apart.
    pub fn at_ref(&self, r: NtRef) -> TypeGrammar {
        match r {
            NtRef::Any => TypeGrammar::any(),
            NtRef::Num => TypeGrammar::num(),
            NtRef::Plain(id) => self
                .restrict(id)
                .expect("reference must be present in the production table"),
        }
    }

    /// Restriction per the reach relation: new grammar containing exactly
    /// the reach-closure of `id`, with fresh ids.
    pub fn restrict(&self, id: NtId) -> Result<TypeGrammar, GrammarError> {
        if !self.prods.contains_key(&id) {
            return Err(GrammarError::MissingNonTerminal(id));
        }
        let mut b = GrammarBuilder::new();
        let map = b.import_table(self);
        Ok(b.build(RawRef::Node(map[&id])))
    }

    /// Re-normalize this grammar (identity up to renaming on well-formed
    /// grammars; used by tests and by the raw-production entry point).
    pub fn renormalize(&self) -> TypeGrammar {
        let mut b = GrammarBuilder::new();
        let r = b.import(self);
        b.build(r)
    }
}

/// Reference in raw (pre-normalization) productions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RawRef {
    Any,
    Num,
    Bottom,
    Node(u32),
}

/// Raw right hand side: a bare reference (chain production) or a compound.
#[derive(Clone, Debug)]
pub enum RawRhs {
    Ref(RawRef),
    Comp(Functor, Vec<RawRef>),
}

/// Accumulates raw productions (possibly with chain productions and
/// duplicate functors) and normalizes them into a [`TypeGrammar`].
#[derive(Default)]
pub struct GrammarBuilder {
    next: u32,
    prods: BTreeMap<u32, Vec<RawRhs>>,
}

#[derive(Clone, Debug, Default)]
struct Closed {
    any: bool,
    num: bool,
    comps: Vec<(Functor, Vec<RawRef>)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum OutRef {
    Any,
    Num,
    Node(u32),
}

impl GrammarBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self) -> u32 {
        let id = self.next;
        self.next += 1;
        self.prods.entry(id).or_default();
        id
    }

    pub fn add(&mut self, node: u32, rhs: RawRhs) -> Result<(), GrammarError> {
        if let RawRhs::Comp(f, args) = &rhs {
            if f.arity != args.len() {
                return Err(GrammarError::ArityMismatch {
                    functor: f.clone(),
                    got: args.len(),
                });
            }
        }
        self.prods.entry(node).or_default().push(rhs);
        Ok(())
    }

    /// Copy an entire grammar into the builder; returns the reference
    /// corresponding to its root.
    pub fn import(&mut self, g: &TypeGrammar) -> RawRef {
        match g.root {
            None => RawRef::Bottom,
            Some(NtRef::Any) => RawRef::Any,
            Some(NtRef::Num) => RawRef::Num,
            Some(NtRef::Plain(root)) => {
                let map = self.import_table(g);
                RawRef::Node(map[&root])
            }
        }
    }

    /// Copy the full production table of `g`; returns the id mapping.
    fn import_table(&mut self, g: &TypeGrammar) -> HashMap<NtId, u32> {
        let map: HashMap<NtId, u32> = g.prods.keys().map(|id| (*id, self.fresh())).collect();
        for (id, p) in &g.prods {
            let node = map[id];
            if p.has_num {
                self.prods.get_mut(&node).unwrap().push(RawRhs::Ref(RawRef::Num));
            }
            for (f, args) in &p.alts {
                let raw_args = args
                    .iter()
                    .map(|a| match a {
                        NtRef::Any => RawRef::Any,
                        NtRef::Num => RawRef::Num,
                        NtRef::Plain(i) => RawRef::Node(map[i]),
                    })
                    .collect();
                self.prods
                    .get_mut(&node)
                    .unwrap()
                    .push(RawRhs::Comp(f.clone(), raw_args));
            }
        }
        map
    }

    /// Normalize: chain-production closure, argument-wise determinization
    /// (tuple-distributive closure), empty elimination, reachability
    /// pruning and canonical renumbering.
    pub fn build(self, root: RawRef) -> TypeGrammar {
        // 1. Chain closure: per node, the flags and compound alternatives
        // reachable through bare-reference productions.
        let mut closed: BTreeMap<u32, Closed> = BTreeMap::new();
        for &id in self.prods.keys() {
            let mut c = Closed::default();
            let mut seen: BTreeSet<u32> = BTreeSet::new();
            let mut stack = vec![id];
            while let Some(n) = stack.pop() {
                if !seen.insert(n) {
                    continue;
                }
                for rhs in self.prods.get(&n).into_iter().flatten() {
                    match rhs {
                        RawRhs::Ref(RawRef::Any) => c.any = true,
                        RawRhs::Ref(RawRef::Num) => c.num = true,
                        RawRhs::Ref(RawRef::Bottom) => {}
                        RawRhs::Ref(RawRef::Node(m)) => stack.push(*m),
                        RawRhs::Comp(f, args) => c.comps.push((f.clone(), args.clone())),
                    }
                }
            }
            closed.insert(id, c);
        }

        // 2. Subset-construction determinization. A state is a set of
        // closed nodes plus an extra num flag from argument merging.
        type DState = (BTreeSet<u32>, bool);
        let mut state_ids: HashMap<DState, u32> = HashMap::new();
        let mut out: BTreeMap<u32, (bool, BTreeMap<Functor, Vec<OutRef>>)> = BTreeMap::new();
        let mut next_out: u32 = 0;
        let mut work: VecDeque<DState> = VecDeque::new();

        let resolve = |refs: &BTreeSet<RawRef>,
                       state_ids: &mut HashMap<DState, u32>,
                       next_out: &mut u32,
                       work: &mut VecDeque<DState>,
                       closed: &BTreeMap<u32, Closed>|
         -> Option<OutRef> {
            let mut nodes: BTreeSet<u32> = BTreeSet::new();
            let mut num = false;
            for r in refs {
                match r {
                    RawRef::Any => return Some(OutRef::Any),
                    RawRef::Num => num = true,
                    RawRef::Bottom => {}
                    RawRef::Node(n) => {
                        if closed[n].any {
                            return Some(OutRef::Any);
                        }
                        nodes.insert(*n);
                    }
                }
            }
            if nodes.is_empty() {
                return if num { Some(OutRef::Num) } else { None };
            }
            let key = (nodes, num);
            let id = *state_ids.entry(key.clone()).or_insert_with(|| {
                let id = *next_out;
                *next_out += 1;
                work.push_back(key);
                id
            });
            Some(OutRef::Node(id))
        };

        let root_out = {
            let mut init: BTreeSet<RawRef> = BTreeSet::new();
            init.insert(root);
            resolve(&init, &mut state_ids, &mut next_out, &mut work, &closed)
        };

        while let Some(state) = work.pop_front() {
            let id = state_ids[&state];
            if out.contains_key(&id) {
                continue;
            }
            let (nodes, extra_num) = &state;
            let mut has_num = *extra_num;
            // Gather per-functor occurrence lists, dropping occurrences
            // with a syntactically-bottom argument.
            let mut by_f: BTreeMap<Functor, Vec<Vec<RawRef>>> = BTreeMap::new();
            for n in nodes {
                let c = &closed[n];
                has_num |= c.num;
                for (f, args) in &c.comps {
                    if args.iter().any(|a| *a == RawRef::Bottom) {
                        continue;
                    }
                    by_f.entry(f.clone()).or_default().push(args.clone());
                }
            }
            let mut alts: BTreeMap<Functor, Vec<OutRef>> = BTreeMap::new();
            for (f, occs) in by_f {
                let mut args_out = Vec::with_capacity(f.arity);
                let mut dead = false;
                for i in 0..f.arity {
                    let refs: BTreeSet<RawRef> = occs.iter().map(|o| o[i]).collect();
                    match resolve(&refs, &mut state_ids, &mut next_out, &mut work, &closed) {
                        Some(r) => args_out.push(r),
                        None => {
                            dead = true;
                            break;
                        }
                    }
                }
                if !dead {
                    alts.insert(f, args_out);
                }
            }
            out.insert(id, (has_num, alts));
        }

        // 3. Empty elimination: productive-non-terminal fixpoint.
        let mut productive: BTreeSet<u32> = BTreeSet::new();
        loop {
            let mut changed = false;
            for (id, (has_num, alts)) in &out {
                if productive.contains(id) {
                    continue;
                }
                let ok = *has_num
                    || alts.values().any(|args| {
                        args.iter().all(|a| match a {
                            OutRef::Any | OutRef::Num => true,
                            OutRef::Node(n) => productive.contains(n),
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

        let live = |r: &OutRef, productive: &BTreeSet<u32>| match r {
            OutRef::Any | OutRef::Num => true,
            OutRef::Node(n) => productive.contains(n),
        };

        // Drop dead productions; collapse nodes that are exactly num.
        let mut collapsed_num: BTreeSet<u32> = BTreeSet::new();
        let mut final_prods: BTreeMap<u32, (bool, BTreeMap<Functor, Vec<OutRef>>)> =
            BTreeMap::new();
        for (id, (has_num, alts)) in &out {
            if !productive.contains(id) {
                continue;
            }
            let alts: BTreeMap<Functor, Vec<OutRef>> = alts
                .iter()
                .filter(|(_, args)| args.iter().all(|a| live(a, &productive)))
                .map(|(f, args)| (f.clone(), args.clone()))
                .collect();
            if alts.is_empty() && *has_num {
                collapsed_num.insert(*id);
            } else {
                final_prods.insert(*id, (*has_num, alts));
            }
        }

        let fix = |r: OutRef, collapsed: &BTreeSet<u32>| match r {
            OutRef::Node(n) if collapsed.contains(&n) => OutRef::Num,
            other => other,
        };

        let root_out = match root_out {
            None => return TypeGrammar::bottom(),
            Some(OutRef::Node(n)) if !productive.contains(&n) => return TypeGrammar::bottom(),
            Some(r) => fix(r, &collapsed_num),
        };
        match root_out {
            OutRef::Any => return TypeGrammar::any(),
            OutRef::Num => return TypeGrammar::num(),
            OutRef::Node(_) => {}
        }

        // 3.5 Minimization: partition refinement on node behavior. The
        // grammar is deterministic, so nodes with equal productions up to
        // class are language-equal and can be merged.
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        enum RefClass {
            Any,
            Num,
            Class(usize),
        }
        let node_ids: Vec<u32> = final_prods.keys().copied().collect();
        let mut class: HashMap<u32, usize> = {
            let mut sig_ids: BTreeMap<(bool, Vec<Functor>), usize> = BTreeMap::new();
            let mut m = HashMap::new();
            for &id in &node_ids {
                let (has_num, alts) = &final_prods[&id];
                let sig = (*has_num, alts.keys().cloned().collect::<Vec<_>>());
                let next = sig_ids.len();
                let c = *sig_ids.entry(sig).or_insert(next);
                m.insert(id, c);
            }
            m
        };
        let mut n_classes = class.values().copied().collect::<BTreeSet<_>>().len();
        loop {
            let mut sig_ids: BTreeMap<(usize, Vec<(Functor, Vec<RefClass>)>), usize> =
                BTreeMap::new();
            let mut next_class: HashMap<u32, usize> = HashMap::new();
            for &id in &node_ids {
                let (_, alts) = &final_prods[&id];
                let body: Vec<(Functor, Vec<RefClass>)> = alts
                    .iter()
                    .map(|(f, args)| {
                        let cs = args
                            .iter()
                            .map(|a| match fix(*a, &collapsed_num) {
                                OutRef::Any => RefClass::Any,
                                OutRef::Num => RefClass::Num,
                                OutRef::Node(m) => RefClass::Class(class[&m]),
                            })
                            .collect();
                        (f.clone(), cs)
                    })
                    .collect();
                let sig = (class[&id], body);
                let next = sig_ids.len();
                let c = *sig_ids.entry(sig).or_insert(next);
                next_class.insert(id, c);
            }
            let new_count = sig_ids.len();
            class = next_class;
            if new_count == n_classes {
                break;
            }
            n_classes = new_count;
        }
        // Representative per class; rewrite every reference.
        let mut rep: HashMap<usize, u32> = HashMap::new();
        for &id in &node_ids {
            rep.entry(class[&id]).or_insert(id);
        }
        let to_rep = |id: u32, class: &HashMap<u32, usize>, rep: &HashMap<usize, u32>| -> u32 {
            rep[&class[&id]]
        };
        let final_prods: BTreeMap<u32, (bool, BTreeMap<Functor, Vec<OutRef>>)> = final_prods
            .iter()
            .filter(|(id, _)| to_rep(**id, &class, &rep) == **id)
            .map(|(id, (has_num, alts))| {
                let alts = alts
                    .iter()
                    .map(|(f, args)| {
                        let args = args
                            .iter()
                            .map(|a| match fix(*a, &collapsed_num) {
                                OutRef::Node(m) => OutRef::Node(to_rep(m, &class, &rep)),
                                other => other,
                            })
                            .collect();
                        (f.clone(), args)
                    })
                    .collect();
                (*id, (*has_num, alts))
            })
            .collect();
        let root_out = match root_out {
            OutRef::Node(n) => OutRef::Node(to_rep(n, &class, &rep)),
            other => other,
        };
        // References below are already representatives, and collapsed num
        // nodes were resolved above.
        let collapsed_num: BTreeSet<u32> = BTreeSet::new();

        // 4. Canonical renumbering: DFS preorder from the root, functor
        // order within each node.
        let mut order: HashMap<u32, NtId> = HashMap::new();
        let mut stack = vec![match root_out {
            OutRef::Node(n) => n,
            _ => unreachable!(),
        }];
        let mut final_ids: Vec<u32> = Vec::new();
        while let Some(n) = stack.pop() {
            if order.contains_key(&n) {
                continue;
            }
            order.insert(n, final_ids.len() as NtId);
            final_ids.push(n);
            let (_, alts) = &final_prods[&n];
            // Preserve DFS order: push children in reverse.
            let children: Vec<u32> = alts
                .values()
                .flatten()
                .filter_map(|r| match fix(*r, &collapsed_num) {
                    OutRef::Node(m) => Some(m),
                    _ => None,
                })
                .collect();
            for c in children.into_iter().rev() {
                stack.push(c);
            }
        }

        let mut prods: BTreeMap<NtId, NtProds> = BTreeMap::new();
        for old in &final_ids {
            let (has_num, alts) = &final_prods[old];
            let alts = alts
                .iter()
                .map(|(f, args)| {
                    let args = args
                        .iter()
                        .map(|a| match fix(*a, &collapsed_num) {
                            OutRef::Any => NtRef::Any,
                            OutRef::Num => NtRef::Num,
                            OutRef::Node(m) => NtRef::Plain(order[&m]),
                        })
                        .collect();
                    (f.clone(), args)
                })
                .collect();
            prods.insert(order[old], NtProds { has_num: *has_num, alts });
        }

        let g = TypeGrammar {
            root: Some(NtRef::Plain(order[&match root_out {
                OutRef::Node(n) => n,
                _ => unreachable!(),
            }])),
            prods,
        };
        debug_assert!(g.check_invariants().is_ok(), "normalization broke invariants");
        g
    }
}

impl TypeGrammar {
    /// Asserts the structural invariants: normal form and determinism hold
    /// by representation; checks reachability and non-emptiness.
    pub fn check_invariants(&self) -> Result<(), String> {
        let root = match self.root {
            None => {
                if !self.prods.is_empty() {
                    return Err("bottom grammar with productions".into());
                }
                return Ok(());
            }
            Some(NtRef::Any) | Some(NtRef::Num) => {
                if !self.prods.is_empty() {
                    return Err("leaf grammar with productions".into());
                }
                return Ok(());
            }
            Some(NtRef::Plain(id)) => id,
        };
        let mut reach: BTreeSet<NtId> = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if !reach.insert(n) {
                continue;
            }
            let p = self.prods.get(&n).ok_or("dangling non-terminal")?;
            if !p.has_num && p.alts.is_empty() {
                return Err(format!("non-terminal {n} has no productions"));
            }
            if p.has_num && p.alts.is_empty() {
                return Err(format!("non-terminal {n} should be collapsed to num"));
            }
            for (f, args) in &p.alts {
                if f.arity != args.len() {
                    return Err(format!("arity mismatch on {f}"));
                }
                for a in args {
                    if let NtRef::Plain(m) = a {
                        stack.push(*m);
                    }
                }
            }
        }
        if reach.len() != self.prods.len() {
            return Err("unreachable non-terminals present".into());
        }
        // Emptiness: every reachable node must be productive.
        let mut productive: BTreeSet<NtId> = BTreeSet::new();
        loop {
            let mut changed = false;
            for (id, p) in &self.prods {
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
        if productive.len() != self.prods.len() {
            return Err("empty non-terminal survived".into());
        }
        Ok(())
    }
}
