//! Acceptance suite: one pass/fail line per criterion.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regtype::analyzer::{analyze, analyze_all, AnalysisOptions, AnalysisResult, Program};
use regtype::bench::bench;
use regtype::lattice::{equiv, includes, intersect, union};
use regtype::notation::parse_grammar;
use regtype::oracle::{apply_subst, sld_successes, unify, Subst, Universe};
use regtype::parser::parse_program;
use regtype::widen::{
    widen_clash, widen_depthk, widen_functor, widen_jungle, widen_rshorten, widen_shorten,
};
use regtype::widen::WideningKind;
use regtype::{Functor, GrammarBuilder, RawRef, RawRhs, Term, TypeGrammar};

fn report(n: u32, desc: &str, ok: bool, detail: &str) {
    println!(
        "{}: criterion {} - {}{}",
        if ok { "PASS" } else { "FAIL" },
        n,
        desc,
        if ok || detail.is_empty() { String::new() } else { format!(" ({detail})") }
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

fn g(src: &str) -> TypeGrammar {
    parse_grammar(src).unwrap()
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn load(name: &str) -> Program {
    let path = corpus_dir().join(name);
    let src = std::fs::read_to_string(&path).unwrap();
    parse_program(&src, name).unwrap().0
}

fn success_ty(r: &AnalysisResult, pred: &str, arity: usize, arg: usize) -> TypeGrammar {
    r.results
        .iter()
        .filter(|p| p.pred.0 == pred && p.pred.1 == arity)
        .find_map(|p| p.success.as_ref())
        .map(|s| s[arg].ty.clone())
        .unwrap_or_else(TypeGrammar::bottom)
}

const ALL_KINDS: [WideningKind; 7] = [
    WideningKind::Functor,
    WideningKind::Jungle,
    WideningKind::Shorten,
    WideningKind::RShorten,
    WideningKind::DepthK(2),
    WideningKind::Clash,
    WideningKind::Structural,
];

#[test]
fn criterion_1_golden_widenings() {
    let start = Instant::now();
    let t_ll = g("Tll -> [] | .(Tl,Tll); Tl -> [] | .(num,Tl)");
    let mut fails: Vec<&str> = Vec::new();

    if !equiv(&widen_functor(&t_ll), &g("T -> [] | num | .(T,T)")) {
        fails.push("functor");
    }
    let functor_in_time = start.elapsed() < Duration::from_secs(1);
    if !functor_in_time {
        fails.push("functor runtime");
    }
    if !equiv(
        &widen_jungle(&t_ll),
        &g("T -> [] | .(T1,T); T1 -> [] | num | .(T1,T)"),
    ) {
        fails.push("jungle");
    }
    if !equiv(
        &widen_shorten(&t_ll),
        &g("T -> [] | .(T1,T); T1 -> [] | num | .(num,T)"),
    ) {
        fails.push("shorten");
    }
    if !equiv(&widen_rshorten(&t_ll), &t_ll) {
        fails.push("rshorten");
    }
    if !equiv(&widen_depthk(&t_ll, 1), &widen_functor(&t_ll)) {
        fails.push("depth-1");
    }
    if !equiv(&widen_depthk(&t_ll, 2), &widen_rshorten(&t_ll)) {
        fails.push("depth-2");
    }
    let s0 = g("T0 -> [] | .(any,[])");
    let s1 = g("T1 -> .(num,.(num,Tl)); Tl -> [] | .(num,Tl)");
    if !equiv(&widen_clash(&s0, &s1), &g("Ts -> [] | .(any,Ts)")) {
        fails.push("clash");
    }

    let sorted = load("sorted.pl");
    let entry = ("sorted".to_string(), 1);
    let struct_r = analyze(
        &sorted,
        &entry,
        vec![],
        AnalysisOptions { kind: WideningKind::Structural, ..Default::default() },
    )
    .unwrap();
    let struct_ty = success_ty(&struct_r, "sorted", 1, 0);
    if !equiv(&struct_ty, &g("T3 -> [] | .(any,T1); T1 -> [] | .(num,T1)")) {
        fails.push("structural sorted");
    }
    let shorten_r = analyze(
        &sorted,
        &entry,
        vec![],
        AnalysisOptions { kind: WideningKind::Shorten, ..Default::default() },
    )
    .unwrap();
    let shorten_ty = success_ty(&shorten_r, "sorted", 1, 0);
    if !equiv(&shorten_ty, &g("T6 -> [] | .(any,T6)")) {
        fails.push("shorten sorted");
    }
    if !(includes(&struct_ty, &shorten_ty) && !includes(&shorten_ty, &struct_ty)) {
        fails.push("struct strictly below shorten on sorted");
    }

    report(
        1,
        "golden widening outputs match up to renaming",
        fails.is_empty(),
        &fails.join(", "),
    );
}

#[test]
fn criterion_2_termination_guard() {
    let start = Instant::now();
    let pq = load("pq.pl");
    let r = analyze(
        &pq,
        &("main".to_string(), 0),
        vec![],
        AnalysisOptions { kind: WideningKind::Structural, widen_bound: 4, permissive: false },
    )
    .unwrap();
    let elapsed = start.elapsed();
    let witnesses = [
        Term::comp("f", vec![Term::atom("a")]),
        Term::comp("f", vec![Term::comp("f", vec![Term::atom("a")])]),
        Term::comp(
            "f",
            vec![Term::comp("f", vec![Term::comp("f", vec![Term::atom("a")])])],
        ),
    ];
    let covered = r
        .results
        .iter()
        .filter(|p| p.pred.0 == "p" && p.pred.1 == 1)
        .any(|p| witnesses.iter().all(|w| p.call[0].ty.member(w)));
    let ok = elapsed < Duration::from_secs(5) && covered;
    report(
        2,
        "p/q analysis terminates under the guard and covers f^i(a)",
        ok,
        &format!("elapsed {elapsed:?}, covered={covered}"),
    );
}

// Random deterministic grammar over <= 5 functors of arity <= 2. The
// builder normalizes arbitrary productions into the deterministic form.
fn random_grammar(rng: &mut ChaCha8Rng, pool: &[Functor]) -> TypeGrammar {
    let n_nodes = rng.gen_range(1..=4u32);
    let mut b = GrammarBuilder::new();
    let nodes: Vec<u32> = (0..n_nodes).map(|_| b.fresh()).collect();
    let any_ref = |rng: &mut ChaCha8Rng| -> RawRef {
        match rng.gen_range(0..10) {
            0 => RawRef::Any,
            1 | 2 => RawRef::Num,
            _ => RawRef::Node(nodes[rng.gen_range(0..nodes.len())]),
        }
    };
    for &n in &nodes {
        let n_prods = rng.gen_range(1..=3);
        for _ in 0..n_prods {
            if rng.gen_range(0..8) == 0 {
                b.add(n, RawRhs::Ref(RawRef::Num)).unwrap();
                continue;
            }
            let f = pool[rng.gen_range(0..pool.len())].clone();
            let args = (0..f.arity).map(|_| any_ref(rng)).collect();
            b.add(n, RawRhs::Comp(f, args)).unwrap();
        }
    }
    b.build(RawRef::Node(nodes[0]))
}

#[test]
fn criterion_3_lattice_oracle_suite() {
    let pool = vec![
        Functor::atom("a"),
        Functor::atom("b"),
        Functor::new("f", 1),
        Functor::new("g", 2),
        Functor::cons(),
    ];
    let universe = Universe::new(pool.clone(), vec![0, 1]);
    let terms = universe.all_terms(3);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let grammars: Vec<TypeGrammar> =
        (0..200).map(|_| random_grammar(&mut rng, &pool)).collect();

    let mut counterexamples = 0usize;
    let mut detail = String::new();
    for i in 0..grammars.len() {
        let t1 = &grammars[i];
        let t2 = &grammars[(i + 1) % grammars.len()];
        let both = intersect(t1, t2);
        let either = union(t1, t2);
        for t in &terms {
            let in1 = t1.member(t);
            let in2 = t2.member(t);
            if both.member(t) != (in1 && in2) {
                counterexamples += 1;
                if detail.is_empty() {
                    detail = format!("intersect wrong on {t} (pair {i})");
                }
            }
            if (in1 || in2) && !either.member(t) {
                counterexamples += 1;
                if detail.is_empty() {
                    detail = format!("union not an upper bound on {t} (pair {i})");
                }
            }
        }
        // includes agrees with enumerated subset checking: inclusion
        // means every enumerated member transfers; exclusion comes with
        // a verified witness.
        let inc = includes(t1, t2);
        if inc {
            for t in universe.enumerate(t1, 3) {
                if !t2.member(&t) {
                    counterexamples += 1;
                    if detail.is_empty() {
                        detail = format!("includes accepted but {t} escapes (pair {i})");
                    }
                }
            }
        } else {
            match regtype::oracle::separating_term(t1, t2) {
                Some(w) => {
                    if !(t1.member(&w) && !t2.member(&w)) {
                        counterexamples += 1;
                        if detail.is_empty() {
                            detail = format!("bad separating witness {w} (pair {i})");
                        }
                    }
                }
                None => {
                    counterexamples += 1;
                    if detail.is_empty() {
                        detail = format!("includes rejected without witness (pair {i})");
                    }
                }
            }
        }
    }
    report(
        3,
        "lattice ops agree with the enumeration oracle on 200 random grammars",
        counterexamples == 0,
        &format!("{counterexamples} counterexamples; first: {detail}"),
    );
}

#[test]
fn criterion_4_amgu_soundness() {
    use regtype::domain::{amgu, AbstractSub};
    use regtype::structural::TypeDescriptor;

    let pool = vec![
        Functor::atom("a"),
        Functor::new("f", 1),
        Functor::new("g", 2),
        Functor::cons(),
        Functor::nil(),
    ];
    let universe = Universe::new(pool.clone(), vec![0, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);

    let patterns: Vec<Term> = vec![
        Term::var("Y"),
        Term::comp("f", vec![Term::var("Y")]),
        Term::comp("g", vec![Term::var("Y"), Term::var("Z")]),
        Term::comp(".", vec![Term::var("Y"), Term::comp("[]", vec![])]),
        Term::comp("g", vec![Term::var("Y"), Term::var("Y")]),
        Term::comp("f", vec![Term::comp("f", vec![Term::var("Z")])]),
        Term::atom("a"),
        Term::int(0),
    ];

    let mut samples = 0usize;
    let mut counterexamples = 0usize;
    let mut detail = String::new();
    while samples < 1000 {
        let t1 = random_grammar(&mut rng, &pool);
        let t2 = random_grammar(&mut rng, &pool);
        let e1: Vec<Term> = universe.enumerate(&t1, 3).into_iter().collect();
        let e2: Vec<Term> = universe.enumerate(&t2, 3).into_iter().collect();
        if e1.is_empty() || e2.is_empty() {
            continue;
        }
        let pat = &patterns[rng.gen_range(0..patterns.len())];
        let a = AbstractSub::from_entries(
            [
                ("X".to_string(), TypeDescriptor::anonymous(t1.clone())),
                ("Y".to_string(), TypeDescriptor::anonymous(t2.clone())),
                ("Z".to_string(), TypeDescriptor::anonymous(TypeGrammar::any())),
            ]
            .into_iter()
            .collect(),
        );
        let abs = amgu(&a, "X", pat).unwrap();

        for _ in 0..4 {
            // A concrete substitution drawn from the concretization.
            let tx = &e1[rng.gen_range(0..e1.len())];
            let ty = &e2[rng.gen_range(0..e2.len())];
            let mut s = Subst::new();
            s.insert("Y".to_string(), ty.clone());
            let rhs = apply_subst(pat, &s);
            let mut mgu = s.clone();
            if !unify(tx, &rhs, &mut mgu) {
                samples += 1;
                continue;
            }
            samples += 1;
            // The concrete unified result must be abstracted by amgu.
            match &abs {
                AbstractSub::Bottom => {
                    counterexamples += 1;
                    if detail.is_empty() {
                        detail = format!("abstract bottom but {tx} unifies with {rhs}");
                    }
                }
                AbstractSub::Env(env) => {
                    for (v, val) in [
                        ("X", apply_subst(&Term::var("X"), &{
                            let mut m = mgu.clone();
                            m.insert("X".to_string(), tx.clone());
                            m
                        })),
                        ("Y", apply_subst(&Term::var("Y"), &mgu)),
                        ("Z", apply_subst(&Term::var("Z"), &mgu)),
                    ] {
                        if !val.is_ground() {
                            continue; // unconstrained: covered by any
                        }
                        if !env[v].ty.member(&val) {
                            counterexamples += 1;
                            if detail.is_empty() {
                                detail =
                                    format!("{v}={val} escapes its abstract type, eq X = {pat}");
                            }
                        }
                    }
                }
            }
        }
    }
    report(
        4,
        "amgu abstracts 1000 sampled concrete unifications",
        counterexamples == 0,
        &format!("{counterexamples} counterexamples over {samples} samples; first: {detail}"),
    );
}

#[test]
fn criterion_5_analyzer_soundness() {
    let mut programs: Vec<String> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pl"))
        .collect();
    programs.sort();

    let samples = [Term::int(0), Term::atom("zz")];
    let mut failures = 0usize;
    let mut detail = String::new();
    for name in &programs {
        let prog = load(name);
        let concrete: Vec<(&(String, usize), BTreeSet<Vec<Term>>)> = prog
            .order
            .iter()
            .map(|key| (key, sld_successes(&prog, key, 6, &[0, 1], &samples)))
            .collect();
        for kind in ALL_KINDS {
            let r = analyze_all(&prog, AnalysisOptions { kind, ..Default::default() }).unwrap();
            for (key, tuples) in &concrete {
                let pr = r
                    .results
                    .iter()
                    .find(|p| p.pred == **key)
                    .expect("predicate missing from analysis");
                for tuple in tuples.iter() {
                    match &pr.success {
                        None => {
                            failures += 1;
                            if detail.is_empty() {
                                detail = format!(
                                    "{name} {}/{} {}: bottom success but concrete success exists",
                                    key.0,
                                    key.1,
                                    kind.name()
                                );
                            }
                        }
                        Some(s) => {
                            for (i, t) in tuple.iter().enumerate() {
                                if !s[i].ty.member(t) {
                                    failures += 1;
                                    if detail.is_empty() {
                                        detail = format!(
                                            "{name} {}/{} {} arg {i}: {t} escapes",
                                            key.0,
                                            key.1,
                                            kind.name()
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    report(
        5,
        "depth-6 concrete successes lie in every widening's inferred success",
        failures == 0,
        &format!("{failures} escapes; first: {detail}"),
    );
}

#[test]
fn criterion_6_bench_cost_and_precision() {
    let start = Instant::now();
    let report_data = bench(&corpus_dir(), &ALL_KINDS, AnalysisOptions::default()).unwrap();
    let elapsed = start.elapsed();

    let mut ok = elapsed < Duration::from_secs(60);
    let mut detail = if ok { String::new() } else { format!("bench took {elapsed:?}") };
    if report_data.rows.iter().any(|r| !r.ok) {
        ok = false;
        if detail.is_empty() {
            detail = "bench rows with failures".to_string();
        }
    }
    let preds: BTreeSet<(String, String)> = report_data
        .precision
        .iter()
        .map(|p| (p.program.clone(), p.predicate.clone()))
        .collect();
    for (prog, pred) in preds {
        match report_data.relation_of(&prog, &pred, "struct", "shorten") {
            Some("eq") | Some("leq") => {}
            rel => {
                ok = false;
                if detail.is_empty() {
                    detail = format!("{prog} {pred}: struct vs shorten is {rel:?}");
                }
            }
        }
    }
    report(
        6,
        "full bench under 60s and struct never less precise than shorten",
        ok,
        &detail,
    );
}
