//! The filtering engine: subscription management, document publication and
//! notification output.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use rustc_hash::FxHashMap;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::forest::{AuditReport, ClauseKey, InsertStrategy, TrieForest};
use crate::rdf::{tokenize, Document, Iri, Literal, Term, Triple};
use crate::reorg::{
    maybe_trigger, reorganize_forest, InsertionLog, ReorgCounters, ReorgPolicy, ScoreVariant,
};
use crate::semantic::{
    full_mask, join_chain, DocTripleIndex, SemanticError, SemanticIndex, SubId,
};
use crate::subscription::{
    ParseOptions, Subscription, SubscriptionError, SubscriptionParser, TokenIndex, Var,
    DEFAULT_DNF_CAP, DEFAULT_NAMESPACE,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum IndexMode {
    Deterministic,
    #[default]
    Metrics,
    MetricsReorg,
}

impl IndexMode {
    pub const ALL: [IndexMode; 3] = [
        IndexMode::Deterministic,
        IndexMode::Metrics,
        IndexMode::MetricsReorg,
    ];

    pub fn strategy(self) -> InsertStrategy {
        match self {
            IndexMode::Deterministic => InsertStrategy::Deterministic,
            IndexMode::Metrics | IndexMode::MetricsReorg => InsertStrategy::BestFit,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IndexMode::Deterministic => "det",
            IndexMode::Metrics => "metrics",
            IndexMode::MetricsReorg => "reorg",
        }
    }
}

impl fmt::Display for IndexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndexMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" | "deterministic" => Ok(IndexMode::Deterministic),
            "metrics" => Ok(IndexMode::Metrics),
            "reorg" | "metrics+reorg" => Ok(IndexMode::MetricsReorg),
            other => Err(format!("unknown index mode {other:?} (det, metrics, reorg)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub mode: IndexMode,
    pub reorg_policy: ReorgPolicy,
    pub score: ScoreVariant,
    pub default_namespace: String,
    pub dnf_cap: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: IndexMode::default(),
            reorg_policy: ReorgPolicy::default(),
            score: ScoreVariant::default(),
            default_namespace: DEFAULT_NAMESPACE.to_string(),
            dnf_cap: DEFAULT_DNF_CAP,
        }
    }
}

impl EngineConfig {
    pub fn with_mode(mode: IndexMode) -> Self {
        EngineConfig {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Subscription(#[from] SubscriptionError),
    #[error("ftcontains variable ?{0} only occurs under variable predicates")]
    IndexingConflict(String),
    #[error("unknown subscription {0}")]
    UnknownSubscription(SubId),
    #[error("reorganisation is only available in reorg mode")]
    ReorgDisabled,
}

/// One projected binding row for one subscription and document.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Notification {
    pub sub: SubId,
    pub doc: String,
    pub bindings: Vec<(Var, Term)>,
}

struct Bindings<'a>(&'a [(Var, Term)]);

impl Serialize for Bindings<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (v, t) in self.0 {
            m.serialize_entry(v.name(), &t.to_string())?;
        }
        m.end()
    }
}

impl Serialize for Notification {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Notification", 3)?;
        st.serialize_field("sub", &self.sub)?;
        st.serialize_field("doc", &self.doc)?;
        st.serialize_field("bindings", &Bindings(&self.bindings))?;
        st.end()
    }
}

impl Notification {
    /// One JSON Lines record; terms are written in N-Triples syntax.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("notification serializes")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EngineStats {
    pub subscriptions: usize,
    pub clauses: usize,
    pub predicates: usize,
    pub trie_nodes: usize,
    pub nodes_per_predicate: BTreeMap<String, usize>,
    pub publishes: u64,
    pub total_filter_ms: f64,
    pub last_filter_ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReorgSummary {
    pub forests: usize,
    pub replayed: usize,
    pub nodes_before: usize,
    pub nodes_after: usize,
}

#[derive(Debug, Default)]
struct PredicateIndex {
    forest: TrieForest,
    log: InsertionLog,
}

#[derive(Debug)]
struct SubRecord {
    sub: Arc<Subscription>,
    /// Constant host predicates of each filter's variable.
    hosts: Vec<Vec<Iri>>,
}

#[derive(Debug)]
pub struct Engine {
    config: EngineConfig,
    parser: SubscriptionParser,
    semantic: SemanticIndex,
    properties: FxHashMap<Iri, PredicateIndex>,
    subs: FxHashMap<SubId, SubRecord>,
    next_id: u64,
    clauses: usize,
    counters: ReorgCounters,
    publishes: AtomicU64,
    total_filter_ns: AtomicU64,
    last_filter_ns: AtomicU64,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(EngineConfig::default())
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        let parser = SubscriptionParser::new(ParseOptions {
            default_namespace: config.default_namespace.clone(),
            dnf_cap: config.dnf_cap,
        });
        Engine {
            config,
            parser,
            semantic: SemanticIndex::new(),
            properties: FxHashMap::default(),
            subs: FxHashMap::default(),
            next_id: 1,
            clauses: 0,
            counters: ReorgCounters::default(),
            publishes: AtomicU64::new(0),
            total_filter_ns: AtomicU64::new(0),
            last_filter_ns: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn mode(&self) -> IndexMode {
        self.config.mode
    }

    pub fn semantic(&self) -> &SemanticIndex {
        &self.semantic
    }

    pub fn forest(&self, predicate: &Iri) -> Option<&TrieForest> {
        self.properties.get(predicate).map(|p| &p.forest)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &Iri> {
        self.properties.keys()
    }

    pub fn subscription(&self, id: SubId) -> Option<&Arc<Subscription>> {
        self.subs.get(&id).map(|r| &r.sub)
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn subscribe(&mut self, text: &str) -> Result<SubId, EngineError> {
        let sub = self.parser.parse(text)?;
        self.subscribe_parsed(sub)
    }

    /// Indexes an already validated subscription. Nothing is modified when
    /// an error is returned.
    pub fn subscribe_parsed(&mut self, sub: Subscription) -> Result<SubId, EngineError> {
        let mut hosts = Vec::with_capacity(sub.filters().len());
        for f in sub.filters() {
            let mut preds: Vec<Iri> = Vec::new();
            for p in sub.patterns() {
                if p.object.var() == Some(&f.var) {
                    if let Some(pred) = p.predicate.constant_iri() {
                        if !preds.contains(pred) {
                            preds.push(pred.clone());
                        }
                    }
                }
            }
            if preds.is_empty() {
                return Err(EngineError::IndexingConflict(f.var.name().to_string()));
            }
            hosts.push(preds);
        }

        let id = SubId(self.next_id);
        self.next_id += 1;
        let sub = Arc::new(sub);
        self.semantic
            .index_subscription(id, &sub)
            .expect("fresh id indexes");

        let strategy = self.config.mode.strategy();
        let logging = self.config.mode == IndexMode::MetricsReorg;
        let mut inserted = 0u64;
        for (fi, (f, preds)) in sub.filters().iter().zip(&hosts).enumerate() {
            for pred in preds {
                let pi = self.properties.entry(pred.clone()).or_default();
                for c in &f.clauses {
                    let key = ClauseKey {
                        sub: id,
                        filter: fi as u16,
                        clause: c.id,
                    };
                    pi.forest
                        .insert(strategy, key, c.clone())
                        .expect("fresh clause key");
                    if logging {
                        pi.log.record(key, c.clone());
                    }
                    inserted += 1;
                }
            }
        }
        self.clauses += sub.clause_count();
        self.subs.insert(id, SubRecord { sub, hosts });

        if logging {
            self.counters.insertions += inserted;
            if maybe_trigger(self.config.reorg_policy, &self.counters) {
                self.reorganize_all();
            }
        }
        Ok(id)
    }

    pub fn unsubscribe(&mut self, id: SubId) -> Result<(), EngineError> {
        let rec = self
            .subs
            .remove(&id)
            .ok_or(EngineError::UnknownSubscription(id))?;
        match self.semantic.remove_subscription(id) {
            Ok(()) | Err(SemanticError::UnknownSubscription(_)) => {}
            Err(e) => unreachable!("{e}"),
        }
        for (fi, (f, preds)) in rec.sub.filters().iter().zip(&rec.hosts).enumerate() {
            for pred in preds {
                let Some(pi) = self.properties.get_mut(pred) else {
                    continue;
                };
                for c in &f.clauses {
                    let key = ClauseKey {
                        sub: id,
                        filter: fi as u16,
                        clause: c.id,
                    };
                    pi.forest.remove(&key).expect("indexed clause");
                    pi.log.forget(&key);
                }
                if pi.forest.clause_count() == 0 {
                    self.properties.remove(pred);
                }
            }
        }
        self.clauses -= rec.sub.clause_count();
        Ok(())
    }

    fn reorganize_all(&mut self) -> ReorgSummary {
        let mut summary = ReorgSummary::default();
        let mut preds: Vec<&Iri> = self
            .properties
            .iter()
            .filter(|(_, p)| !p.log.is_empty())
            .map(|(k, _)| k)
            .collect();
        preds.sort();
        let preds: Vec<Iri> = preds.into_iter().cloned().collect();
        for pred in preds {
            let pi = self.properties.get_mut(&pred).expect("listed predicate");
            let out = reorganize_forest(&mut pi.forest, &mut pi.log, self.config.score);
            summary.forests += 1;
            summary.replayed += out.replayed;
            summary.nodes_before += out.nodes_before;
            summary.nodes_after += out.nodes_after;
        }
        self.counters = ReorgCounters::default();
        summary
    }

    /// Reorganises every forest with clauses inserted since its last
    /// reorganisation.
    pub fn reorg_now(&mut self) -> Result<ReorgSummary, EngineError> {
        if self.config.mode != IndexMode::MetricsReorg {
            return Err(EngineError::ReorgDisabled);
        }
        Ok(self.reorganize_all())
    }

    /// Matches a document against every subscription. Notifications come
    /// out sorted by subscription id and then binding row.
    pub fn publish(&self, doc: &Document) -> Vec<Notification> {
        let start = Instant::now();
        let out = self.filter(doc);
        let ns = start.elapsed().as_nanos() as u64;
        self.publishes.fetch_add(1, Ordering::Relaxed);
        self.total_filter_ns.fetch_add(ns, Ordering::Relaxed);
        self.last_filter_ns.store(ns, Ordering::Relaxed);
        out
    }

    fn filter(&self, doc: &Document) -> Vec<Notification> {
        let triples = doc.triples();
        if triples.is_empty() || self.subs.is_empty() {
            return Vec::new();
        }

        // Full-text matching, once per distinct literal and host predicate.
        let mut literals: FxHashMap<&Literal, usize> = FxHashMap::default();
        let mut lit_preds: Vec<(&Literal, Vec<&PredicateIndex>)> = Vec::new();
        for t in triples {
            let (Term::Literal(l), Some(pi)) = (&t.object, self.properties.get(&t.predicate))
            else {
                continue;
            };
            let li = *literals.entry(l).or_insert_with(|| {
                lit_preds.push((l, Vec::new()));
                lit_preds.len() - 1
            });
            let preds = &mut lit_preds[li].1;
            if !preds.iter().any(|p| std::ptr::eq(*p, pi)) {
                preds.push(pi);
            }
        }
        // (subscription, literal) -> satisfied filter mask
        let mut satisfied: FxHashMap<(SubId, usize), u64> = FxHashMap::default();
        let mut per_sub: FxHashMap<SubId, u64> = FxHashMap::default();
        let mut keys = Vec::new();
        for (li, (lit, preds)) in lit_preds.iter().enumerate() {
            let ts = tokenize(lit);
            if ts.is_empty() {
                continue;
            }
            let ix = TokenIndex::new(&ts);
            for pi in preds {
                keys.clear();
                pi.forest.match_into(&ix, &mut keys);
                for k in &keys {
                    let bit = 1u64 << k.filter;
                    *satisfied.entry((k.sub, li)).or_default() |= bit;
                    *per_sub.entry(k.sub).or_default() |= bit;
                }
            }
        }

        let mut candidates: Vec<SubId> = per_sub
            .into_iter()
            .filter(|(id, mask)| {
                let n = self.subs[id].sub.filters().len();
                *mask == full_mask(n)
            })
            .map(|(id, _)| id)
            .collect();

        let mut plain: FxHashMap<SubId, u64> = FxHashMap::default();
        for t in triples {
            self.semantic.for_each_plain_candidate(t, |e| {
                *plain.entry(e.sub).or_default() |= 1u64 << e.pattern;
            });
        }
        candidates.extend(plain.into_iter().filter_map(|(id, mask)| {
            let n = self.subs[&id].sub.patterns().len();
            (mask == full_mask(n)).then_some(id)
        }));
        candidates.sort_unstable();

        let doc_index = DocTripleIndex::new(triples);
        let mask_of = |id: SubId, t: &Triple| match &t.object {
            Term::Literal(l) => literals
                .get(l)
                .and_then(|li| satisfied.get(&(id, *li)))
                .copied()
                .unwrap_or(0),
            Term::Iri(_) => 0,
        };
        let mut out = Vec::new();
        let mut lists: Vec<&[&Triple]> = Vec::new();
        for id in candidates {
            let sub = &self.subs[&id].sub;
            lists.clear();
            for p in sub.patterns() {
                let m = doc_index.matching(p);
                if m.is_empty() {
                    break;
                }
                lists.push(m);
            }
            if lists.len() < sub.patterns().len() {
                continue;
            }
            for row in join_chain(sub, &lists, |t: &&Triple| (*t, mask_of(id, t))) {
                out.push(Notification {
                    sub: id,
                    doc: doc.id.clone(),
                    bindings: sub.select_vars().iter().cloned().zip(row).collect(),
                });
            }
        }
        out
    }

    pub fn stats(&self) -> EngineStats {
        let nodes_per_predicate: BTreeMap<String, usize> = self
            .properties
            .iter()
            .map(|(k, p)| (k.as_str().to_string(), p.forest.node_count()))
            .collect();
        EngineStats {
            subscriptions: self.subs.len(),
            clauses: self.clauses,
            predicates: self.properties.len(),
            trie_nodes: nodes_per_predicate.values().sum(),
            nodes_per_predicate,
            publishes: self.publishes.load(Ordering::Relaxed),
            total_filter_ms: self.total_filter_ns.load(Ordering::Relaxed) as f64 / 1e6,
            last_filter_ms: self.last_filter_ns.load(Ordering::Relaxed) as f64 / 1e6,
        }
    }

    /// Audits every forest and the clause bookkeeping across indexes.
    pub fn audit(&self) -> AuditReport {
        let mut report = AuditReport::default();
        let mut expected: FxHashMap<&Iri, usize> = FxHashMap::default();
        for rec in self.subs.values() {
            for (f, preds) in rec.sub.filters().iter().zip(&rec.hosts) {
                for p in preds {
                    *expected.entry(p).or_default() += f.clauses.len();
                }
            }
        }
        for (pred, pi) in &self.properties {
            for v in pi.forest.audit().violations {
                report.violations.push(format!("{pred}: {v}"));
            }
            let want = expected.get(pred).copied().unwrap_or(0);
            if pi.forest.clause_count() != want {
                report.violations.push(format!(
                    "{pred}: {} clauses indexed, {want} expected",
                    pi.forest.clause_count()
                ));
            }
            if pi.forest.clause_count() == 0 {
                report.violations.push(format!("{pred}: empty forest kept"));
            }
        }
        if expected.len() != self.properties.len() {
            report
                .violations
                .push("property table and subscriptions disagree on predicates".into());
        }
        for (id, rec) in &self.subs {
            if !self.semantic.contains(*id) && !rec.sub.patterns().is_empty() {
                report.violations.push(format!("subscription {id} missing from semantic index"));
            }
        }
        report
    }
}

/// An engine shared between one mutator and concurrent publishers.
#[derive(Clone, Default)]
pub struct SharedEngine(Arc<RwLock<Engine>>);

impl SharedEngine {
    pub fn new(engine: Engine) -> Self {
        SharedEngine(Arc::new(RwLock::new(engine)))
    }

    pub fn subscribe(&self, text: &str) -> Result<SubId, EngineError> {
        self.0.write().expect("engine lock").subscribe(text)
    }

    pub fn unsubscribe(&self, id: SubId) -> Result<(), EngineError> {
        self.0.write().expect("engine lock").unsubscribe(id)
    }

    pub fn reorg_now(&self) -> Result<ReorgSummary, EngineError> {
        self.0.write().expect("engine lock").reorg_now()
    }

    pub fn publish(&self, doc: &Document) -> Vec<Notification> {
        self.0.read().expect("engine lock").publish(doc)
    }

    pub fn stats(&self) -> EngineStats {
        self.0.read().expect("engine lock").stats()
    }
}
