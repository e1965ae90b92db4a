//! Brute-force reference implementation and random instance generators.
//!
//! The oracle works on its own description of subscriptions and
//! expressions, rendered to text for the engine, so it shares no parsing,
//! normalization or indexing code with the library.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use ftps::forest::{ClauseKey, TrieForest};
use ftps::rdf::{Document, Iri, Literal, Term, TokenStream, Triple};
use ftps::reorg::InsertionLog;
use ftps::subscription::{Atom, ConjunctiveClause, FullTextExpr, TokenIndex, Var};
use ftps::reorg::ReorgPolicy;
use ftps::{Engine, EngineConfig, EngineError, IndexMode, Notification, SubId};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const NS: &str = "http://example.org/t/";

pub fn lower_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Clone, Debug)]
pub enum Ft {
    Kw(String),
    Phrase(Vec<String>),
    Near(u32, Vec<String>),
    Not(Box<Ft>),
    And(Vec<Ft>),
    Or(Vec<Ft>),
}

fn positions(toks: &[String], w: &str) -> Vec<usize> {
    toks.iter()
        .enumerate()
        .filter(|(_, t)| *t == w)
        .map(|(i, _)| i)
        .collect()
}

fn near_brute(toks: &[String], k: u32, words: &[String]) -> bool {
    let occ: Vec<Vec<usize>> = words.iter().map(|w| positions(toks, w)).collect();
    if occ.iter().any(Vec::is_empty) {
        return false;
    }
    let mut pick = vec![0usize; words.len()];
    loop {
        let mut ps: Vec<usize> = pick.iter().zip(&occ).map(|(&i, o)| o[i]).collect();
        ps.sort_unstable();
        let distinct = ps.windows(2).all(|w| w[0] != w[1]);
        if distinct && ps.windows(2).all(|w| w[1] - w[0] <= k as usize) {
            return true;
        }
        let mut d = 0;
        loop {
            if d == pick.len() {
                return false;
            }
            pick[d] += 1;
            if pick[d] < occ[d].len() {
                break;
            }
            pick[d] = 0;
            d += 1;
        }
    }
}

impl Ft {
    pub fn eval(&self, toks: &[String]) -> bool {
        match self {
            Ft::Kw(w) => toks.iter().any(|t| t == w),
            Ft::Phrase(ws) => toks.windows(ws.len()).any(|win| win == ws.as_slice()),
            Ft::Near(k, ws) => near_brute(toks, *k, ws),
            Ft::Not(a) => !a.eval(toks),
            Ft::And(cs) => cs.iter().all(|c| c.eval(toks)),
            Ft::Or(cs) => cs.iter().any(|c| c.eval(toks)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Ft::Kw(_) | Ft::Phrase(_) | Ft::Near(..) | Ft::Not(_) => 1,
            Ft::And(cs) | Ft::Or(cs) => 1 + cs.iter().map(Ft::depth).max().unwrap_or(0),
        }
    }

    /// Text form with randomly capitalized words; compound children are
    /// parenthesized.
    pub fn render(&self, rng: &mut impl Rng) -> String {
        match self {
            Ft::Kw(w) => format!("\"{}\"", shout(rng, w)),
            Ft::Phrase(ws) => {
                let ws: Vec<String> = ws.iter().map(|w| shout(rng, w)).collect();
                format!("\"{}\"", ws.join(" "))
            }
            Ft::Near(k, ws) => {
                let ws: Vec<String> = ws.iter().map(|w| format!("\"{}\"", shout(rng, w))).collect();
                format!("ftnear/{k}({})", ws.join(", "))
            }
            Ft::Not(a) => format!("ftnot {}", a.render(rng)),
            Ft::And(cs) | Ft::Or(cs) => {
                let op = if matches!(self, Ft::And(_)) { " ftand " } else { " ftor " };
                let parts: Vec<String> = cs
                    .iter()
                    .map(|c| match c {
                        Ft::And(_) | Ft::Or(_) => format!("({})", c.render(rng)),
                        _ => c.render(rng),
                    })
                    .collect();
                parts.join(op)
            }
        }
    }
}

fn shout(rng: &mut impl Rng, w: &str) -> String {
    if rng.random_bool(0.2) {
        w.to_uppercase()
    } else {
        w.to_string()
    }
}

pub fn word_pool(n: usize) -> Vec<String> {
    const SYL: [&str; 12] = ["ka", "lo", "mi", "ne", "ru", "so", "ta", "vi", "be", "do", "zu", "fa"];
    (0..n)
        .map(|i| format!("{}{}", SYL[i % SYL.len()], SYL[(i / SYL.len() + i) % SYL.len()]) + &(i / 144).to_string())
        .collect()
}

fn distinct_words(rng: &mut impl Rng, vocab: &[String], k: usize) -> Vec<String> {
    let k = k.min(vocab.len());
    vocab.choose_multiple(rng, k).cloned().collect()
}

pub fn random_atom(rng: &mut impl Rng, vocab: &[String]) -> Ft {
    match rng.random_range(0..10) {
        0..=5 => Ft::Kw(vocab.choose(rng).unwrap().clone()),
        6..=7 => {
            let n = rng.random_range(2..=3);
            Ft::Phrase((0..n).map(|_| vocab.choose(rng).unwrap().clone()).collect())
        }
        _ => {
            let n = rng.random_range(2..=3).min(vocab.len());
            Ft::Near(rng.random_range(1..=4), distinct_words(rng, vocab, n.max(2)))
        }
    }
}

/// Random expression of depth at most `depth`.
pub fn random_ft(rng: &mut impl Rng, vocab: &[String], depth: usize) -> Ft {
    if depth <= 1 || rng.random_bool(0.35) {
        let a = random_atom(rng, vocab);
        return if rng.random_bool(0.15) { Ft::Not(Box::new(a)) } else { a };
    }
    let n = rng.random_range(2..=3);
    let cs = (0..n).map(|_| random_ft(rng, vocab, depth - 1)).collect();
    if rng.random_bool(0.5) {
        Ft::And(cs)
    } else {
        Ft::Or(cs)
    }
}

pub fn random_tokens(rng: &mut impl Rng, vocab: &[String], len: usize) -> Vec<String> {
    (0..len).map(|_| vocab.choose(rng).unwrap().clone()).collect()
}

/// Joins words with assorted separators and capitalization.
pub fn render_text(rng: &mut impl Rng, words: &[String]) -> String {
    const SEP: [&str; 5] = [" ", " ", ", ", ". ", " - "];
    let mut s = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            s.push_str(SEP.choose(rng).unwrap());
        }
        s.push_str(&shout(rng, w));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GTerm {
    Var(String),
    Iri(String),
    Lit(String),
}

impl GTerm {
    fn render(&self) -> String {
        match self {
            GTerm::Var(v) => format!("?{v}"),
            GTerm::Iri(i) => format!("<{NS}{i}>"),
            GTerm::Lit(l) => format!("\"{l}\""),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenSub {
    pub select: Vec<String>,
    pub patterns: Vec<[GTerm; 3]>,
    pub filters: Vec<(String, Ft)>,
}

impl GenSub {
    pub fn render(&self, rng: &mut impl Rng) -> String {
        let mut s = String::from("SELECT");
        for v in &self.select {
            s.push_str(&format!(" ?{v}"));
        }
        s.push_str(" WHERE {\n");
        for p in &self.patterns {
            s.push_str(&format!("  {} {} {} .\n", p[0].render(), p[1].render(), p[2].render()));
        }
        for (v, f) in &self.filters {
            s.push_str(&format!("  FILTER ftcontains(?{v}, {})\n", f.render(rng)));
        }
        s.push('}');
        s
    }
}

/// Shape parameters shared by the generated documents and subscriptions.
#[derive(Clone, Debug)]
pub struct Universe {
    pub entities: usize,
    pub predicates: usize,
    pub vocab: Vec<String>,
    pub max_tokens: usize,
}

impl Universe {
    pub fn random(rng: &mut impl Rng, max_tokens: usize) -> Self {
        Universe {
            entities: rng.random_range(2..=8),
            predicates: rng.random_range(1..=4),
            vocab: word_pool(rng.random_range(3..=30)),
            max_tokens,
        }
    }

    fn entity(&self, rng: &mut impl Rng) -> String {
        format!("e{}", rng.random_range(0..self.entities))
    }

    fn predicate(&self, rng: &mut impl Rng) -> String {
        format!("p{}", rng.random_range(0..self.predicates))
    }

    fn text_len(&self, rng: &mut impl Rng) -> usize {
        if rng.random_bool(0.1) {
            rng.random_range(0..=self.max_tokens)
        } else {
            rng.random_range(0..=self.max_tokens.min(30))
        }
    }

    pub fn document(&self, rng: &mut impl Rng, id: String) -> Document {
        let n = rng.random_range(0..=12);
        let mut texts: Vec<String> = Vec::new();
        let mut triples = Vec::new();
        for _ in 0..n {
            let s = iri(&self.entity(rng));
            let p = iri(&self.predicate(rng));
            let o: Term = match rng.random_range(0..10) {
                0..=3 => Term::Iri(iri(&self.entity(rng))),
                4 if !texts.is_empty() => Term::Literal(Literal::untyped(texts.choose(rng).unwrap().as_str())),
                5 => Term::Literal(Literal::typed(
                    self.vocab.choose(rng).unwrap().as_str(),
                    iri("kind"),
                )),
                6 => {
                    let len = rng.random_range(1..=2);
                    let words = random_tokens(rng, &self.vocab, len);
                    Term::Literal(Literal::untyped(words.join(" ")))
                }
                _ => {
                    let len = self.text_len(rng);
                    let words = random_tokens(rng, &self.vocab, len);
                    let t = render_text(rng, &words);
                    texts.push(t.clone());
                    Term::Literal(Literal::untyped(t))
                }
            };
            triples.push(Triple::new(s, p, o));
        }
        Document::new(id, triples)
    }

    pub fn subscription(&self, rng: &mut impl Rng, max_patterns: usize, max_depth: usize) -> GenSub {
        let n = rng.random_range(1..=max_patterns);
        let mut vars: Vec<String> = Vec::new();
        let mut patterns: Vec<[GTerm; 3]> = Vec::new();
        let fresh = |vars: &mut Vec<String>| {
            let v = format!("v{}", vars.len());
            vars.push(v.clone());
            v
        };
        for i in 0..n {
            // the first pattern, and every later one through a shared variable
            let link = if i == 0 { None } else { Some(vars.choose(rng).unwrap().clone()) };
            let link_slot = rng.random_range(0..3);
            let mut slots: Vec<GTerm> = Vec::with_capacity(3);
            for k in 0..3 {
                if link.is_some() && k == link_slot {
                    slots.push(GTerm::Var(link.clone().unwrap()));
                    continue;
                }
                let var_p = match k {
                    1 => 0.15,
                    _ => 0.6,
                };
                let t = if rng.random_bool(var_p) {
                    if !vars.is_empty() && rng.random_bool(0.3) {
                        GTerm::Var(vars.choose(rng).unwrap().clone())
                    } else {
                        GTerm::Var(fresh(&mut vars))
                    }
                } else {
                    match k {
                        0 => GTerm::Iri(self.entity(rng)),
                        1 => GTerm::Iri(self.predicate(rng)),
                        _ if rng.random_bool(0.15) => {
                            let len = rng.random_range(1..=2);
                    let words = random_tokens(rng, &self.vocab, len);
                            GTerm::Lit(words.join(" "))
                        }
                        _ => GTerm::Iri(self.entity(rng)),
                    }
                };
                slots.push(t);
            }
            // keep every pattern connected to the previous ones
            if i == 0 && !slots.iter().any(|t| matches!(t, GTerm::Var(_))) {
                slots[2] = GTerm::Var(fresh(&mut vars));
            }
            patterns.push([slots[0].clone(), slots[1].clone(), slots[2].clone()]);
        }
        let object_vars: BTreeSet<String> = patterns
            .iter()
            .filter_map(|p| match &p[2] {
                GTerm::Var(v) => Some(v.clone()),
                _ => None,
            })
            .collect();
        let object_vars: Vec<String> = object_vars.into_iter().collect();
        let mut filters = Vec::new();
        if !object_vars.is_empty() {
            let nf = match rng.random_range(0..10) {
                0..=1 => 0,
                2..=8 => 1,
                _ => 2,
            };
            for _ in 0..nf {
                let v = object_vars.choose(rng).unwrap().clone();
                let depth = rng.random_range(1..=max_depth);
                let f = match random_ft(rng, &self.vocab, depth) {
                    neg @ Ft::Not(_) => Ft::And(vec![random_atom(rng, &self.vocab), neg]),
                    f => f,
                };
                filters.push((v, f));
            }
        }
        let used: BTreeSet<String> = patterns
            .iter()
            .flatten()
            .filter_map(|t| match t {
                GTerm::Var(v) => Some(v.clone()),
                _ => None,
            })
            .collect();
        let used: Vec<String> = used.into_iter().collect();
        let k = rng.random_range(1..=used.len().min(3));
        let select = distinct_words(rng, &used, k);
        GenSub {
            select,
            patterns,
            filters,
        }
    }
}

pub fn iri(local: &str) -> Iri {
    Iri::new(format!("{NS}{local}")).unwrap()
}

fn gterm_value(t: &GTerm) -> Option<Term> {
    match t {
        GTerm::Var(_) => None,
        GTerm::Iri(i) => Some(Term::Iri(iri(i))),
        GTerm::Lit(l) => Some(Term::Literal(Literal::untyped(l.as_str()))),
    }
}

fn unify(slot: &GTerm, value: &Term, binding: &mut BTreeMap<String, Term>, fresh: &mut Vec<String>) -> bool {
    match slot {
        GTerm::Var(v) => match binding.get(v) {
            Some(b) => b == value,
            None => {
                binding.insert(v.clone(), value.clone());
                fresh.push(v.clone());
                true
            }
        },
        _ => gterm_value(slot).as_ref() == Some(value),
    }
}

fn nested_loop(
    sub: &GenSub,
    triples: &[Triple],
    depth: usize,
    binding: &mut BTreeMap<String, Term>,
    out: &mut Vec<BTreeMap<String, Term>>,
) {
    if depth == sub.patterns.len() {
        out.push(binding.clone());
        return;
    }
    let p = &sub.patterns[depth];
    for t in triples {
        let values = [Term::Iri(t.subject.clone()), Term::Iri(t.predicate.clone()), t.object.clone()];
        let mut fresh = Vec::new();
        let ok = p.iter().zip(&values).all(|(slot, v)| unify(slot, v, binding, &mut fresh));
        if ok {
            nested_loop(sub, triples, depth + 1, binding, out);
        }
        for v in fresh {
            binding.remove(&v);
        }
    }
}

/// All projected rows of `sub` over `doc`, as a set.
pub fn oracle_rows(sub: &GenSub, doc: &Document) -> BTreeSet<Vec<Term>> {
    let mut full = Vec::new();
    nested_loop(sub, doc.triples(), 0, &mut BTreeMap::new(), &mut full);
    full.into_iter()
        .filter(|b| {
            sub.filters.iter().all(|(v, f)| match b.get(v) {
                Some(Term::Literal(l)) => f.eval(&lower_tokens(l.lexical())),
                _ => false,
            })
        })
        .map(|b| sub.select.iter().map(|v| b[v].clone()).collect())
        .collect()
}

pub fn oracle_notifications(subs: &[(SubId, GenSub)], docs: &[Document]) -> Vec<Notification> {
    let mut out = Vec::new();
    for d in docs {
        for (id, s) in subs {
            for row in oracle_rows(s, d) {
                out.push(Notification {
                    sub: *id,
                    doc: d.id.clone(),
                    bindings: s
                        .select
                        .iter()
                        .map(|v| Var::new(v.as_str()).unwrap())
                        .zip(row)
                        .collect(),
                });
            }
        }
    }
    out.sort();
    out
}

pub fn sorted(mut v: Vec<Notification>) -> Vec<Notification> {
    v.sort();
    v
}

/// A random workload: subscriptions accepted by the engine and a document
/// stream over the same universe.
pub struct Instance {
    pub universe: Universe,
    pub subs: Vec<(String, GenSub)>,
    pub docs: Vec<Document>,
}

pub fn random_instance(rng: &mut impl Rng, n_subs: usize, n_docs: usize, max_tokens: usize) -> Instance {
    let universe = Universe::random(rng, max_tokens);
    let subs = (0..n_subs)
        .map(|_| {
            let g = universe.subscription(rng, 4, 4);
            (g.render(rng), g)
        })
        .collect();
    let docs = (0..n_docs).map(|i| universe.document(rng, format!("doc{i}"))).collect();
    Instance { universe, subs, docs }
}

pub struct EngineRun {
    pub accepted: Vec<(SubId, GenSub)>,
    pub rejected: Vec<EngineError>,
    pub notifications: Vec<Notification>,
    pub audit_violations: usize,
}

/// Subscribes everything, publishes the stream and, when `reorg_at` is set,
/// reorganizes (in reorg mode) after that many documents.
pub fn run_engine(inst: &Instance, mode: IndexMode, policy: ReorgPolicy, reorg_at: Option<usize>) -> EngineRun {
    let mut engine = Engine::new(EngineConfig {
        reorg_policy: policy,
        ..EngineConfig::with_mode(mode)
    });
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (text, g) in &inst.subs {
        match engine.subscribe(text) {
            Ok(id) => accepted.push((id, g.clone())),
            Err(e) => rejected.push(e),
        }
    }
    let mut notifications = Vec::new();
    for (i, d) in inst.docs.iter().enumerate() {
        if reorg_at == Some(i) && mode == IndexMode::MetricsReorg {
            engine.reorg_now().expect("reorg mode");
        }
        notifications.extend(engine.publish(d));
    }
    EngineRun {
        accepted,
        rejected,
        notifications: sorted(notifications),
        audit_violations: engine.audit().violations.len(),
    }
}

/// A conjunctive clause described by its atoms.
#[derive(Clone, Debug)]
pub struct GenClause {
    pub positive: Vec<Ft>,
    pub negative: Vec<Ft>,
}

fn to_atom(f: &Ft) -> Atom {
    let ws = |v: &[String]| v.iter().map(|w| Arc::<str>::from(w.as_str())).collect::<Vec<_>>();
    match f {
        Ft::Kw(w) => Atom::Keyword(Arc::from(w.as_str())),
        Ft::Phrase(v) => Atom::Phrase(ws(v)),
        Ft::Near(k, v) => Atom::Near { k: *k, words: ws(v) },
        _ => panic!("not an atom: {f:?}"),
    }
}

impl GenClause {
    pub fn keywords(words: &[String]) -> Self {
        GenClause {
            positive: words.iter().cloned().map(Ft::Kw).collect(),
            negative: Vec::new(),
        }
    }

    pub fn random(rng: &mut impl Rng, vocab: &[String], max_words: usize, extras: bool) -> Self {
        let k = rng.random_range(1..=max_words);
        let mut c = GenClause::keywords(&distinct_words(rng, vocab, k));
        if extras && rng.random_bool(0.2) {
            c.positive.push(random_atom(rng, vocab));
        }
        if extras && rng.random_bool(0.15) {
            c.negative.push(random_atom(rng, vocab));
        }
        c
    }

    pub fn eval(&self, toks: &[String]) -> bool {
        self.positive.iter().all(|a| a.eval(toks)) && !self.negative.iter().any(|a| a.eval(toks))
    }

    pub fn build(&self, id: u32) -> Arc<ConjunctiveClause> {
        Arc::new(
            ConjunctiveClause::from_atoms(
                id,
                self.positive.iter().map(to_atom),
                self.negative.iter().map(to_atom),
            )
            .expect("clause has a positive word"),
        )
    }

    pub fn word_count(&self) -> usize {
        self.positive
            .iter()
            .flat_map(|a| match a {
                Ft::Kw(w) => vec![w.clone()],
                Ft::Phrase(v) | Ft::Near(_, v) => v.clone(),
                _ => vec![],
            })
            .collect::<BTreeSet<_>>()
            .len()
    }
}

pub fn key(n: u64) -> ClauseKey {
    ClauseKey {
        sub: SubId(n),
        filter: 0,
        clause: 0,
    }
}

pub fn match_sorted(f: &TrieForest, toks: &[String]) -> Vec<ClauseKey> {
    let ts = TokenStream::from_words(toks.iter().cloned());
    let mut v = f.match_tokens(&TokenIndex::new(&ts));
    v.sort();
    v
}

impl Ft {
    pub fn to_expr(&self) -> FullTextExpr {
        match self {
            Ft::Not(a) => FullTextExpr::Not(to_atom(a)),
            Ft::And(cs) => FullTextExpr::And(cs.iter().map(Ft::to_expr).collect()),
            Ft::Or(cs) => FullTextExpr::Or(cs.iter().map(Ft::to_expr).collect()),
            atom => FullTextExpr::Atom(to_atom(atom)),
        }
    }
}

/// A forest of best-fit clauses of which the later ones sit in the
/// insertion log.
pub struct LoggedForest {
    pub forest: TrieForest,
    pub log: InsertionLog,
    pub clauses: Vec<(u64, GenClause)>,
    pub logged_words: usize,
}

pub fn random_logged_forest(rng: &mut impl Rng, vocab: &[String], n: usize) -> LoggedForest {
    let mut forest = TrieForest::new();
    let mut log = InsertionLog::new();
    let mut clauses = Vec::new();
    let split = rng.random_range(0..=n);
    let mut logged_words = 0;
    for i in 0..n as u64 {
        let c = GenClause::random(rng, vocab, 5, true);
        let built = c.build(0);
        forest.insert_bestfit(key(i), built.clone()).unwrap();
        if i as usize >= split {
            log.record(key(i), built);
            logged_words += c.word_count();
        }
        clauses.push((i, c));
    }
    LoggedForest {
        forest,
        log,
        clauses,
        logged_words,
    }
}
