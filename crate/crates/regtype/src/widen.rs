//! The widening operators: functor, type jungle, shortening, restricted
//! shortening, depth-k, topological clash, and the dispatch shell. The
//! structural widening itself lives in [`crate::structural`].

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::str::FromStr;

use crate::grammar::{
    Functor, FunctorSet, GrammarBuilder, NtId, NtRef, RawRef, RawRhs, TypeGrammar,
};
use crate::lattice::{includes, union};
use crate::structural::{self, TypeDescriptor};

/// The operator taxonomy selectable by the analyzer and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WideningKind {
    Functor,
    Jungle,
    Shorten,
    RShorten,
    DepthK(u32),
    Clash,
    Structural,
}

impl WideningKind {
    pub const ALL_NAMES: [&'static str; 7] =
        ["functor", "jungle", "shorten", "rshorten", "depthk", "clash", "struct"];

    pub fn name(&self) -> &'static str {
        match self {
            WideningKind::Functor => "functor",
            WideningKind::Jungle => "jungle",
            WideningKind::Shorten => "shorten",
            WideningKind::RShorten => "rshorten",
            WideningKind::DepthK(_) => "depthk",
            WideningKind::Clash => "clash",
            WideningKind::Structural => "struct",
        }
    }

    /// The kinds that need the counter guard to terminate.
    pub fn needs_guard(&self) -> bool {
        matches!(self, WideningKind::RShorten | WideningKind::Structural)
    }
}

impl FromStr for WideningKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "functor" => Ok(WideningKind::Functor),
            "jungle" => Ok(WideningKind::Jungle),
            "shorten" => Ok(WideningKind::Shorten),
            "rshorten" => Ok(WideningKind::RShorten),
            "depthk" => Ok(WideningKind::DepthK(2)),
            "clash" => Ok(WideningKind::Clash),
            "struct" => Ok(WideningKind::Structural),
            other => Err(format!(
                "unknown widening '{other}' (expected one of {})",
                Self::ALL_NAMES.join("|")
            )),
        }
    }
}

/// Two consecutive approximations to the same abstract value; `previous`
/// is absent on the first one.
#[derive(Clone, Debug)]
pub struct WideningRequest {
    pub previous: Option<TypeDescriptor>,
    pub candidate: TypeDescriptor,
}

/// Dispatch over all widening kinds on type descriptors. Unary kinds act
/// on the union of the two approximations; clash and structural receive
/// both. Labels are always unioned. The counter guard is a separate
/// policy, see [`structural::guard_widen`].
pub fn widen(kind: WideningKind, req: WideningRequest) -> TypeDescriptor {
    let WideningRequest { previous, candidate } = req;
    match kind {
        WideningKind::Structural => match previous {
            Some(prev) => structural::widen_structural(&prev, &candidate),
            None => candidate,
        },
        WideningKind::Clash => match previous {
            Some(prev) => {
                let ty = widen_clash(&prev.ty, &candidate.ty);
                prev.merged_with(candidate, ty)
            }
            None => candidate,
        },
        unary => {
            let (base, labels, name) = match previous {
                Some(prev) => (
                    union(&prev.ty, &candidate.ty),
                    prev.labels.union(&candidate.labels).cloned().collect(),
                    candidate.name,
                ),
                None => (candidate.ty.clone(), candidate.labels.clone(), candidate.name),
            };
            let ty = match unary {
                WideningKind::Functor => widen_functor(&base),
                WideningKind::Jungle => widen_jungle(&base),
                WideningKind::Shorten => widen_shorten(&base),
                WideningKind::RShorten => widen_rshorten(&base),
                WideningKind::DepthK(k) => widen_depthk(&base, k),
                _ => unreachable!(),
            };
            TypeDescriptor { name, labels, ty }
        }
    }
}

/// One non-terminal with a production for every functor occurring in the
/// input, all argument positions folded into that non-terminal.
pub fn widen_functor(t: &TypeGrammar) -> TypeGrammar {
    if t.is_bottom() || t.is_any() || t.is_num() {
        return t.clone();
    }
    let (functors, has_num) = t.alphabet();
    // A single folded non-terminal cannot contain `any`; if the input
    // mentions it anywhere the argument positions stay `any`.
    let has_any = t
        .prods()
        .values()
        .any(|p| p.alts.values().flatten().any(|a| *a == NtRef::Any));
    let mut b = GrammarBuilder::new();
    let n = b.fresh();
    let arg = if has_any { RawRef::Any } else { RawRef::Node(n) };
    if has_num {
        b.add(n, RawRhs::Ref(RawRef::Num)).unwrap();
    }
    for f in functors {
        let args = vec![arg; f.arity];
        b.add(n, RawRhs::Comp(f, args)).unwrap();
    }
    b.build(RawRef::Node(n))
}

/// Type-jungle widening: each functor gets one fixed argument tuple, the
/// union over every occurrence of that argument position in the input.
pub fn widen_jungle(t: &TypeGrammar) -> TypeGrammar {
    let root = match t.root() {
        None | Some(NtRef::Any) | Some(NtRef::Num) => return t.clone(),
        Some(r) => r,
    };
    // Occupants of each (functor, position) slot across the grammar.
    let mut slots: BTreeMap<(Functor, usize), BTreeSet<NtRef>> = BTreeMap::new();
    for p in t.prods().values() {
        for (f, args) in &p.alts {
            for (i, a) in args.iter().enumerate() {
                slots.entry((f.clone(), i)).or_default().insert(*a);
            }
        }
    }
    let mut b = GrammarBuilder::new();
    let slot_node: BTreeMap<(Functor, usize), u32> =
        slots.keys().map(|k| (k.clone(), b.fresh())).collect();
    let root_node = b.fresh();

    let slot_ref = |f: &Functor, i: usize,
                    slots: &BTreeMap<(Functor, usize), BTreeSet<NtRef>>,
                    slot_node: &BTreeMap<(Functor, usize), u32>|
     -> RawRef {
        let occ = &slots[&(f.clone(), i)];
        if occ.contains(&NtRef::Any) {
            RawRef::Any
        } else {
            RawRef::Node(slot_node[&(f.clone(), i)])
        }
    };

    let fill = |node: u32, members: &BTreeSet<NtRef>, b: &mut GrammarBuilder| {
        for m in members {
            match m {
                NtRef::Any => {}
                NtRef::Num => b.add(node, RawRhs::Ref(RawRef::Num)).unwrap(),
                NtRef::Plain(id) => {
                    let p = t.node(*id);
                    if p.has_num {
                        b.add(node, RawRhs::Ref(RawRef::Num)).unwrap();
                    }
                    for (f, args) in &p.alts {
                        let raw: Vec<RawRef> = (0..args.len())
                            .map(|i| slot_ref(f, i, &slots, &slot_node))
                            .collect();
                        b.add(node, RawRhs::Comp(f.clone(), raw)).unwrap();
                    }
                }
            }
        }
    };

    for (key, node) in &slot_node {
        fill(*node, &slots[key], &mut b);
    }
    let mut root_members = BTreeSet::new();
    root_members.insert(root);
    fill(root_node, &root_members, &mut b);
    b.build(RawRef::Node(root_node))
}

fn reachable_from(t: &TypeGrammar, from: NtId) -> BTreeSet<NtId> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<NtId> = t
        .node(from)
        .alts
        .values()
        .flatten()
        .filter_map(|r| match r {
            NtRef::Plain(m) => Some(*m),
            _ => None,
        })
        .collect();
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        for r in t.node(n).alts.values().flatten() {
            if let NtRef::Plain(m) = r {
                stack.push(*m);
            }
        }
    }
    seen
}

fn same_functor_pair(t: &TypeGrammar) -> Option<(NtId, NtId)> {
    let ids: Vec<NtId> = t.prods().keys().copied().collect();
    for &n in &ids {
        let reach = reachable_from(t, n);
        let set_n = t.functor_set(NtRef::Plain(n));
        for &m in &ids {
            if m != n && reach.contains(&m) && t.functor_set(NtRef::Plain(m)) == set_n {
                return Some((n, m));
            }
        }
    }
    None
}

/// Graph merge of two or-nodes by their least upper bound: shared
/// functors merge argument-wise into fresh pair nodes, one-sided
/// alternatives keep their original references, and every edge to either
/// node is redirected to the merged node.
fn merge_nodes(t: &TypeGrammar, n: NtId, m: NtId) -> TypeGrammar {
    let mut b = GrammarBuilder::new();
    let orig: HashMap<NtId, u32> = t.prods().keys().map(|id| (*id, b.fresh())).collect();
    let merged_root = b.fresh();

    struct Ctx<'a> {
        t: &'a TypeGrammar,
        orig: HashMap<NtId, u32>,
        n: NtId,
        m: NtId,
        merged_root: u32,
        pair_memo: HashMap<(NtRef, NtRef), u32>,
    }

    fn conv(ctx: &Ctx, r: NtRef) -> RawRef {
        match r {
            NtRef::Any => RawRef::Any,
            NtRef::Num => RawRef::Num,
            NtRef::Plain(id) if id == ctx.n || id == ctx.m => RawRef::Node(ctx.merged_root),
            NtRef::Plain(id) => RawRef::Node(ctx.orig[&id]),
        }
    }

    fn pair(ctx: &mut Ctx, b: &mut GrammarBuilder, x: NtRef, y: NtRef) -> RawRef {
        if x == y {
            return conv(ctx, x);
        }
        let (x, y) = if x <= y { (x, y) } else { (y, x) };
        // The pair being merged is the merged node itself.
        let (pn, pm) = (NtRef::Plain(ctx.n), NtRef::Plain(ctx.m));
        if (x, y) == (pn, pm) || (x, y) == (pm, pn) {
            return RawRef::Node(ctx.merged_root);
        }
        match (x, y) {
            (NtRef::Any, _) | (_, NtRef::Any) => RawRef::Any,
            (NtRef::Num, NtRef::Plain(id)) | (NtRef::Plain(id), NtRef::Num) => {
                // Copy of the plain node with an extra num alternative.
                if let Some(node) = ctx.pair_memo.get(&(x, y)) {
                    return RawRef::Node(*node);
                }
                let node = b.fresh();
                ctx.pair_memo.insert((x, y), node);
                let target = ctx.orig[&id];
                b.add(node, RawRhs::Ref(RawRef::Num)).unwrap();
                b.add(node, RawRhs::Ref(RawRef::Node(target))).unwrap();
                RawRef::Node(node)
            }
            (NtRef::Plain(px), NtRef::Plain(py)) => {
                if let Some(node) = ctx.pair_memo.get(&(x, y)) {
                    return RawRef::Node(*node);
                }
                let node = b.fresh();
                ctx.pair_memo.insert((x, y), node);
                let p1 = ctx.t.node(px).clone();
                let p2 = ctx.t.node(py).clone();
                if p1.has_num || p2.has_num {
                    b.add(node, RawRhs::Ref(RawRef::Num)).unwrap();
                }
                let functors: BTreeSet<&Functor> =
                    p1.alts.keys().chain(p2.alts.keys()).collect();
                for f in functors {
                    let args = match (p1.alts.get(f), p2.alts.get(f)) {
                        (Some(a1), Some(a2)) => a1
                            .iter()
                            .zip(a2)
                            .map(|(u, v)| pair(ctx, b, *u, *v))
                            .collect(),
                        (Some(a1), None) => a1.iter().map(|u| conv(ctx, *u)).collect(),
                        (None, Some(a2)) => a2.iter().map(|u| conv(ctx, *u)).collect(),
                        (None, None) => unreachable!(),
                    };
                    b.add(node, RawRhs::Comp(f.clone(), args)).unwrap();
                }
                RawRef::Node(node)
            }
            _ => unreachable!("x == y cases handled above"),
        }
    }

    let mut ctx = Ctx { t, orig: orig.clone(), n, m, merged_root, pair_memo: HashMap::new() };
    // The merged node: union of n and m with substitution applied.
    {
        let p1 = t.node(n).clone();
        let p2 = t.node(m).clone();
        if p1.has_num || p2.has_num {
            b.add(merged_root, RawRhs::Ref(RawRef::Num)).unwrap();
        }
        let functors: BTreeSet<&Functor> = p1.alts.keys().chain(p2.alts.keys()).collect();
        for f in functors {
            let args = match (p1.alts.get(f), p2.alts.get(f)) {
                (Some(a1), Some(a2)) => a1
                    .iter()
                    .zip(a2)
                    .map(|(u, v)| pair(&mut ctx, &mut b, *u, *v))
                    .collect(),
                (Some(a1), None) => a1.iter().map(|u| conv(&ctx, *u)).collect(),
                (None, Some(a2)) => a2.iter().map(|u| conv(&ctx, *u)).collect(),
                (None, None) => unreachable!(),
            };
            b.add(merged_root, RawRhs::Comp(f.clone(), args)).unwrap();
        }
    }
    // Copy the original table with the substitution n,m -> merged.
    for (id, p) in t.prods() {
        let node = orig[id];
        if p.has_num {
            b.add(node, RawRhs::Ref(RawRef::Num)).unwrap();
        }
        for (f, args) in &p.alts {
            let raw: Vec<RawRef> = args.iter().map(|r| conv(&ctx, *r)).collect();
            b.add(node, RawRhs::Comp(f.clone(), raw)).unwrap();
        }
    }
    let root = match t.root() {
        Some(NtRef::Plain(r)) if r == n || r == m => RawRef::Node(merged_root),
        Some(r) => conv(&ctx, r),
        None => RawRef::Bottom,
    };
    b.build(root)
}

/// Shortening: while two or-nodes with the same principal functors are
/// connected by a path, replace both by their least upper bound.
pub fn widen_shorten(t: &TypeGrammar) -> TypeGrammar {
    let mut cur = t.clone();
    let mut seen: std::collections::HashSet<TypeGrammar> = std::collections::HashSet::new();
    let mut steps = 0usize;
    while let Some((n, m)) = same_functor_pair(&cur) {
        steps += 1;
        let next = if steps > 100 {
            congruence_merge(&cur, n, m)
        } else {
            merge_nodes(&cur, n, m)
        };
        // The graph merge can rewrite some grammars into isomorphic
        // copies forever (growing bounded lists do this); escalate to
        // the coarser congruence merge, which strictly shrinks.
        if seen.insert(next.clone()) {
            cur = next;
        } else {
            cur = congruence_merge(&cur, n, m);
            seen.insert(cur.clone());
        }
    }
    cur
}

/// Restricted shortening: an ancestor/descendant pair with equal
/// principal functors merges only when the descendant is included in the
/// ancestor, and then only the descendant is replaced.
pub fn widen_rshorten(t: &TypeGrammar) -> TypeGrammar {
    let mut cur = t.clone();
    'outer: loop {
        let ids: Vec<NtId> = cur.prods().keys().copied().collect();
        for &n in &ids {
            let reach = reachable_from(&cur, n);
            let set_n = cur.functor_set(NtRef::Plain(n));
            for &m in &ids {
                if m == n
                    || !reach.contains(&m)
                    || cur.functor_set(NtRef::Plain(m)) != set_n
                {
                    continue;
                }
                let sub_m = cur.at_ref(NtRef::Plain(m));
                let sub_n = cur.at_ref(NtRef::Plain(n));
                if includes(&sub_m, &sub_n) {
                    cur = substitute(&cur, m, n);
                    continue 'outer;
                }
            }
        }
        return cur;
    }
}

/// Replace every reference to `from` by `to` and rebuild.
fn substitute(t: &TypeGrammar, from: NtId, to: NtId) -> TypeGrammar {
    let mut redirects = BTreeMap::new();
    redirects.insert(from, to);
    substitute_many(t, &redirects)
}

/// Apply several node redirections at once. Chains (a→b, b→c) are
/// resolved before rebuilding, so ids never go stale mid-application.
fn substitute_many(t: &TypeGrammar, redirects: &BTreeMap<NtId, NtId>) -> TypeGrammar {
    let resolve = |mut id: NtId| -> NtId {
        let mut steps = 0;
        while let Some(&next) = redirects.get(&id) {
            if next == id || steps > redirects.len() {
                break;
            }
            id = next;
            steps += 1;
        }
        id
    };
    let mut b = GrammarBuilder::new();
    let map: HashMap<NtId, u32> = t.prods().keys().map(|id| (*id, b.fresh())).collect();
    let conv = |r: NtRef| match r {
        NtRef::Any => RawRef::Any,
        NtRef::Num => RawRef::Num,
        NtRef::Plain(id) => RawRef::Node(map[&resolve(id)]),
    };
    for (id, p) in t.prods() {
        let node = map[id];
        if p.has_num {
            b.add(node, RawRhs::Ref(RawRef::Num)).unwrap();
        }
        for (f, args) in &p.alts {
            b.add(node, RawRhs::Comp(f.clone(), args.iter().map(|r| conv(*r)).collect()))
                .unwrap();
        }
    }
    let root = match t.root() {
        Some(NtRef::Plain(r)) => RawRef::Node(map[&resolve(r)]),
        Some(NtRef::Any) => RawRef::Any,
        Some(NtRef::Num) => RawRef::Num,
        None => RawRef::Bottom,
    };
    b.build(root)
}

/// Congruence-style merge of two or-nodes: argument positions of shared
/// functors merge recursively (union-find), so the result is a quotient
/// of the input graph.
fn congruence_merge(t: &TypeGrammar, a: NtId, b0: NtId) -> TypeGrammar {
    let ids: Vec<NtId> = t.prods().keys().copied().collect();
    let mut parent: BTreeMap<NtId, NtId> = ids.iter().map(|i| (*i, *i)).collect();
    fn find(parent: &mut BTreeMap<NtId, NtId>, x: NtId) -> NtId {
        let p = parent[&x];
        if p == x {
            return x;
        }
        let r = find(parent, p);
        parent.insert(x, r);
        r
    }
    let mut extra_num: BTreeSet<NtId> = BTreeSet::new();
    let mut is_any: BTreeSet<NtId> = BTreeSet::new();
    let mut queue: VecDeque<(NtId, NtId)> = VecDeque::new();
    queue.push_back((a, b0));
    while let Some((x, y)) = queue.pop_front() {
        let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
        if rx == ry {
            continue;
        }
        parent.insert(ry, rx);
        if extra_num.remove(&ry) {
            extra_num.insert(rx);
        }
        if is_any.remove(&ry) {
            is_any.insert(rx);
        }
        // Congruence closure over the whole quotient: recompute merged
        // argument positions until stable.
        let mut changed = true;
        while changed {
            changed = false;
            let mut slot: BTreeMap<(NtId, Functor, usize), (BTreeSet<NtId>, bool, bool)> =
                BTreeMap::new();
            for id in &ids {
                let class = find(&mut parent, *id);
                for (f, args) in &t.node(*id).alts {
                    for (i, r) in args.iter().enumerate() {
                        let e = slot
                            .entry((class, f.clone(), i))
                            .or_insert((BTreeSet::new(), false, false));
                        match r {
                            NtRef::Any => e.2 = true,
                            NtRef::Num => e.1 = true,
                            NtRef::Plain(z) => {
                                e.0.insert(find(&mut parent, *z));
                            }
                        }
                    }
                }
            }
            for ((_, _, _), (classes, num, any)) in slot {
                let mut it = classes.iter();
                if let Some(first) = it.next() {
                    for z in it {
                        let (rf, rz) = (find(&mut parent, *first), find(&mut parent, *z));
                        if rf != rz {
                            parent.insert(rz, rf);
                            if extra_num.remove(&rz) {
                                extra_num.insert(rf);
                            }
                            if is_any.remove(&rz) {
                                is_any.insert(rf);
                            }
                            changed = true;
                        }
                    }
                    let rf = find(&mut parent, *first);
                    if num && extra_num.insert(rf) {
                        changed = true;
                    }
                    if any && is_any.insert(rf) {
                        changed = true;
                    }
                }
            }
        }
    }
    // Emit the quotient.
    let mut builder = GrammarBuilder::new();
    let mut class_node: BTreeMap<NtId, u32> = BTreeMap::new();
    for id in &ids {
        let c = find(&mut parent, *id);
        class_node.entry(c).or_insert_with(|| builder.fresh());
    }
    let conv = |r: NtRef, parent: &mut BTreeMap<NtId, NtId>,
                class_node: &BTreeMap<NtId, u32>,
                is_any: &BTreeSet<NtId>|
     -> RawRef {
        match r {
            NtRef::Any => RawRef::Any,
            NtRef::Num => RawRef::Num,
            NtRef::Plain(z) => {
                let c = find(parent, z);
                if is_any.contains(&c) {
                    RawRef::Any
                } else {
                    RawRef::Node(class_node[&c])
                }
            }
        }
    };
    for id in &ids {
        let c = find(&mut parent, *id);
        if is_any.contains(&c) {
            continue;
        }
        let node = class_node[&c];
        let p = t.node(*id);
        if p.has_num {
            builder.add(node, RawRhs::Ref(RawRef::Num)).unwrap();
        }
        for (f, args) in &p.alts {
            let raw: Vec<RawRef> = args
                .iter()
                .map(|r| conv(*r, &mut parent, &class_node, &is_any))
                .collect();
            builder.add(node, RawRhs::Comp(f.clone(), raw)).unwrap();
        }
    }
    for c in &extra_num {
        let c = find(&mut parent, *c);
        if !is_any.contains(&c) {
            builder.add(class_node[&c], RawRhs::Ref(RawRef::Num)).unwrap();
        }
    }
    let root = match t.root() {
        Some(NtRef::Plain(r)) => conv(NtRef::Plain(r), &mut parent, &class_node, &is_any),
        Some(NtRef::Any) => RawRef::Any,
        Some(NtRef::Num) => RawRef::Num,
        None => RawRef::Bottom,
    };
    builder.build(root)
}

/// Depth-k widening: bound in-depth repetitions of a principal-functor
/// set along any path by `k`; deeper repetitions merge into the nearest
/// matching ancestor.
pub fn widen_depthk(t: &TypeGrammar, k: u32) -> TypeGrammar {
    assert!(k >= 1, "depth-k requires k >= 1");
    let mut cur = t.clone();
    'outer: loop {
        let root = match cur.root() {
            Some(NtRef::Plain(r)) => r,
            _ => return cur,
        };
        // DFS over simple paths tracking the or-node stack.
        let mut path: Vec<NtId> = Vec::new();
        let mut stack: Vec<(NtId, bool)> = vec![(root, false)];
        let mut done: BTreeSet<Vec<NtId>> = BTreeSet::new();
        while let Some((n, leaving)) = stack.pop() {
            if leaving {
                path.pop();
                continue;
            }
            if path.contains(&n) {
                continue;
            }
            let set_n = cur.functor_set(NtRef::Plain(n));
            let matches: Vec<NtId> = path
                .iter()
                .filter(|p| cur.functor_set(NtRef::Plain(**p)) == set_n)
                .copied()
                .collect();
            if matches.len() >= k as usize {
                let target = *matches.last().unwrap();
                cur = congruence_merge(&cur, target, n);
                continue 'outer;
            }
            path.push(n);
            stack.push((n, true));
            let mut key = path.clone();
            key.sort_unstable();
            if done.insert(key) {
                for r in cur.node(n).alts.values().flatten() {
                    if let NtRef::Plain(m) = r {
                        stack.push((*m, false));
                    }
                }
            }
        }
        return cur;
    }
}

/// Topological clash widening: compare the union of the two
/// approximations against the previous one; positions whose principal
/// functor sets clash are replaced by a back-reference to the nearest
/// enclosing node whose functor set covers them.
pub fn widen_clash(prev: &TypeGrammar, cand: &TypeGrammar) -> TypeGrammar {
    if prev.is_bottom() {
        return cand.clone();
    }
    fn covers(a: &FunctorSet, b: &FunctorSet) -> bool {
        a.is_any || (b.functors.is_subset(&a.functors) && (a.has_num || !b.has_num))
    }

    // First clash found on a synchronous traversal: a node of `u` whose
    // functor set departs from the matching node of `prev`, paired with
    // its nearest covering ancestor.
    fn find_clash(
        u: &TypeGrammar,
        prev: &TypeGrammar,
        ur: NtRef,
        pr: NtRef,
        ancestors: &mut Vec<NtId>,
        visited: &mut BTreeSet<(NtRef, NtRef)>,
    ) -> Option<(NtId, NtId)> {
        if !visited.insert((ur, pr)) {
            return None;
        }
        let us = u.functor_set(ur);
        let ps = prev.functor_set(pr);
        if us != ps {
            if let NtRef::Plain(un) = ur {
                if let Some(target) = ancestors
                    .iter()
                    .rev()
                    .find(|anc| **anc != un && covers(&u.functor_set(NtRef::Plain(**anc)), &us))
                {
                    return Some((un, *target));
                }
            }
            return None;
        }
        if let (NtRef::Plain(un), NtRef::Plain(pn)) = (ur, pr) {
            ancestors.push(un);
            let up = u.node(un).clone();
            let pp = prev.node(pn).clone();
            for (f, uargs) in &up.alts {
                if let Some(pargs) = pp.alts.get(f) {
                    for (x, y) in uargs.iter().zip(pargs) {
                        if let Some(hit) = find_clash(u, prev, *x, *y, ancestors, visited) {
                            ancestors.pop();
                            return Some(hit);
                        }
                    }
                }
            }
            ancestors.pop();
        }
        None
    }

    // Each clash folds the offending node into its covering ancestor via
    // a congruence quotient, which keeps the result an upper bound of the
    // union; every merge removes a node, so this terminates.
    let mut cur = union(prev, cand);
    loop {
        let cur_root = match cur.root() {
            Some(NtRef::Plain(r)) => r,
            _ => return cur,
        };
        let p_root = match prev.root() {
            Some(r) => r,
            None => unreachable!("bottom handled above"),
        };
        let mut ancestors = Vec::new();
        let mut visited = BTreeSet::new();
        match find_clash(&cur, prev, NtRef::Plain(cur_root), p_root, &mut ancestors, &mut visited)
        {
            None => return cur,
            Some((from, to)) => cur = congruence_merge(&cur, from, to),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::equiv;
    use crate::notation::parse_grammar;
    use crate::structural::TypeDescriptor;

    fn g(src: &str) -> TypeGrammar {
        parse_grammar(src).unwrap()
    }

    fn list_of_lists() -> TypeGrammar {
        g("T -> [] | .(Tl,T); Tl -> [] | .(num,Tl)")
    }

    #[test]
    fn functor_widening_on_list_of_lists() {
        let w = widen_functor(&list_of_lists());
        assert!(equiv(&w, &g("T -> [] | num | .(T,T)")));
        assert!(widen_functor(&TypeGrammar::num()).is_num());
        let fa = widen_functor(&g("T -> f(a)"));
        assert!(equiv(&fa, &g("N -> a | f(N)")));
    }

    #[test]
    fn jungle_widening_on_list_of_lists() {
        let w = widen_jungle(&list_of_lists());
        assert!(equiv(&w, &g("T -> [] | .(T1,T); T1 -> [] | num | .(T1,T)")));
    }

    #[test]
    fn jungle_unchanged_when_functors_unique() {
        let t = g("T -> f(A); A -> a | b");
        assert!(equiv(&widen_jungle(&t), &t));
        // Determinization already merged duplicate slots.
        let t = g("T -> f(AC,BD); AC -> a | c; BD -> b | d");
        assert!(equiv(&widen_jungle(&t), &t));
    }

    #[test]
    fn shortening_on_list_of_lists() {
        let w = widen_shorten(&list_of_lists());
        assert!(equiv(&w, &g("T -> [] | .(T1,T); T1 -> [] | num | .(num,T)")));
    }

    #[test]
    fn shortening_no_pair_unchanged() {
        let t = g("T -> f(A); A -> a | b");
        assert!(equiv(&widen_shorten(&t), &t));
    }

    #[test]
    fn shortening_on_sorted_success() {
        let t5 = g("T5 -> [] | .(any,T3); T3 -> [] | .(num,T3)");
        let w = widen_shorten(&t5);
        assert!(equiv(&w, &g("T6 -> [] | .(any,T6)")));
    }

    #[test]
    fn rshorten_leaves_list_of_lists_unchanged() {
        let t = list_of_lists();
        assert!(equiv(&widen_rshorten(&t), &t));
    }

    #[test]
    fn rshorten_merges_included_descendant() {
        let t2 = g("T2 -> [] | .(num,T1); T1 -> [] | .(num,Nil); Nil -> []");
        // The inner list is included in the outer, so it is replaced.
        let w = widen_rshorten(&t2);
        assert!(equiv(&w, &g("T3 -> [] | .(num,T3)")));
    }

    #[test]
    fn depthk_matches_functor_and_rshorten_ends() {
        let t = list_of_lists();
        let k1 = widen_depthk(&t, 1);
        assert!(equiv(&k1, &widen_functor(&t)), "k=1 equals functor widening");
        let k2 = widen_depthk(&t, 2);
        assert!(equiv(&k2, &t), "k=2 equals restricted shortening (no change)");
        let k9 = widen_depthk(&t, 9);
        assert!(equiv(&k9, &t), "large k leaves the grammar unchanged");
    }

    #[test]
    fn clash_on_sorted_approximations() {
        let t0 = g("T0 -> [] | .(any,[])");
        let t1 = g("T1 -> .(num,.(num,Tl)); Tl -> [] | .(num,Tl)");
        let w = widen_clash(&t0, &t1);
        assert!(equiv(&w, &g("Ts -> [] | .(any,Ts)")));
    }

    #[test]
    fn clash_identity_and_first_approximation() {
        let t = g("T -> [] | .(num,T)");
        assert!(equiv(&widen_clash(&t, &t), &t));
        assert!(equiv(&widen_clash(&TypeGrammar::bottom(), &t), &t));
    }

    #[test]
    fn widen_dispatch_edge_cases() {
        for kind in [
            WideningKind::Functor,
            WideningKind::Jungle,
            WideningKind::Shorten,
            WideningKind::RShorten,
            WideningKind::DepthK(2),
            WideningKind::Clash,
            WideningKind::Structural,
        ] {
            let bot = widen(kind, WideningRequest {
                previous: None,
                candidate: TypeDescriptor::anonymous(TypeGrammar::bottom()),
            });
            assert!(bot.ty.is_bottom(), "{kind:?} on bottom");
            let top = widen(kind, WideningRequest {
                previous: None,
                candidate: TypeDescriptor::anonymous(TypeGrammar::any()),
            });
            assert!(top.ty.is_any(), "{kind:?} on any");
        }
    }

    #[test]
    fn extensiveness_on_paper_examples() {
        let samples = [
            list_of_lists(),
            g("T -> [] | .(num,T)"),
            g("T5 -> [] | .(any,T3); T3 -> [] | .(num,T3)"),
            g("T -> f(a) | g(T,num)"),
        ];
        for t in &samples {
            for w in [
                widen_functor(t),
                widen_jungle(t),
                widen_shorten(t),
                widen_rshorten(t),
                widen_depthk(t, 1),
                widen_depthk(t, 2),
            ] {
                assert!(includes(t, &w), "widening not extensive on {t}");
            }
        }
    }

    #[test]
    fn precision_order_on_list_of_lists() {
        let t = list_of_lists();
        let rsh = widen_rshorten(&t);
        let sh = widen_shorten(&t);
        let ju = widen_jungle(&t);
        let fu = widen_functor(&t);
        assert!(includes(&rsh, &sh));
        assert!(includes(&sh, &ju));
        assert!(includes(&ju, &fu));
    }

    #[test]
    fn chain_stabilization_on_growing_lists() {
        // The num_list approximations: T_i is a list of exactly i numbers.
        for kind in ["functor", "jungle", "shorten", "depthk"] {
            let kind: WideningKind = kind.parse().unwrap();
            let mut acc = TypeGrammar::bottom();
            let mut grow = g("T -> []");
            let mut stable = 0;
            for _ in 0..10 {
                let next = widen(kind, WideningRequest {
                    previous: Some(TypeDescriptor::anonymous(acc.clone())),
                    candidate: TypeDescriptor::anonymous(grow.clone()),
                })
                .ty;
                if equiv(&next, &acc) {
                    stable += 1;
                    if stable >= 2 {
                        break;
                    }
                } else {
                    stable = 0;
                }
                acc = next;
                // Prepend one more number to the grown list.
                let mut b = GrammarBuilder::new();
                let inner = b.import(&grow);
                let cell = b.fresh();
                b.add(cell, RawRhs::Comp(Functor::cons(), vec![RawRef::Num, inner]))
                    .unwrap();
                grow = b.build(RawRef::Node(cell));
            }
            assert!(stable >= 2, "{kind:?} did not stabilize within 10 steps");
        }
    }
}
