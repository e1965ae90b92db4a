//! The Semantic Match Table: every triple pattern of every subscription,
//! keyed first by predicate (or a wildcard when the predicate is a variable)
//! and then by the (subject, object) constants, with wildcards for variables.
//!
//! A triple can only unify with patterns stored under one of eight keys, so
//! candidate discovery is at most eight hash probes. Join evaluation then
//! walks each subscription's patterns in written order as a left-deep chain.

use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use rustc_hash::{FxBuildHasher, FxHashMap};
use thiserror::Error;

use crate::rdf::{Iri, Literal, Term, Triple};
use crate::subscription::{Subscription, TriplePattern, Var, CONST_SLOT};

/// Engine-assigned subscription identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(transparent)]
pub struct SubId(pub u64);

impl fmt::Display for SubId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticError {
    #[error("subscription {0} is already indexed")]
    DuplicateSubscription(SubId),
    #[error("unknown subscription {0}")]
    UnknownSubscription(SubId),
    #[error("pattern {index} out of range for subscription {sub}")]
    PatternOutOfRange { sub: SubId, index: usize },
}

/// Hash key of a triple pattern. `None` is the wildcard for a variable slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PatternKey {
    pub predicate: Option<Iri>,
    pub subject: Option<Iri>,
    pub object: Option<Term>,
}

impl PatternKey {
    pub fn of(p: &TriplePattern) -> Self {
        PatternKey {
            predicate: p.predicate.constant_iri().cloned(),
            subject: p.subject.constant_iri().cloned(),
            object: p.object.constant().cloned(),
        }
    }

    /// The eight keys under which a pattern unifying with `t` can be stored.
    pub fn probes(t: &Triple) -> [PatternKey; 8] {
        let s = || Some(t.subject.clone());
        let o = || Some(t.object.clone());
        let mut keys: [PatternKey; 8] = Default::default();
        let mut i = 0;
        for predicate in [Some(t.predicate.clone()), None] {
            for (subject, object) in [(s(), o()), (s(), None), (None, o()), (None, None)] {
                keys[i] = PatternKey {
                    predicate: predicate.clone(),
                    subject,
                    object,
                };
                i += 1;
            }
        }
        keys
    }

    fn level2(&self) -> SlotKey {
        (self.subject.clone(), self.object.clone())
    }
}

impl Default for PatternKey {
    fn default() -> Self {
        PatternKey {
            predicate: None,
            subject: None,
            object: None,
        }
    }
}

type SlotKey = (Option<Iri>, Option<Term>);

const SUBJECT_VAR: u8 = 1;
const PREDICATE_VAR: u8 = 2;
const OBJECT_VAR: u8 = 4;

/// One indexed triple pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PatternEntry {
    pub sub: SubId,
    pub pattern: u16,
    var_mask: u8,
    /// The owning subscription has at least one full-text filter.
    pub filtered: bool,
}

impl PatternEntry {
    pub fn subject_is_var(&self) -> bool {
        self.var_mask & SUBJECT_VAR != 0
    }

    pub fn predicate_is_var(&self) -> bool {
        self.var_mask & PREDICATE_VAR != 0
    }

    pub fn object_is_var(&self) -> bool {
        self.var_mask & OBJECT_VAR != 0
    }

    /// Variable names per slot (subject, predicate, object).
    pub fn var_slots<'a>(&self, sub: &'a Subscription) -> [Option<&'a Var>; 3] {
        let p = &sub.patterns()[self.pattern as usize];
        [p.subject.var(), p.predicate.var(), p.object.var()]
    }

    /// Ids `(filter, clause)` of the filters on this pattern's object variable.
    pub fn ft_clause_ids(&self, sub: &Subscription) -> Vec<(usize, u32)> {
        let Some(v) = sub.patterns()[self.pattern as usize].object.var() else {
            return Vec::new();
        };
        sub.filters_on(v)
            .flat_map(|fi| sub.filters()[fi].clauses.iter().map(move |c| (fi, c.id)))
            .collect()
    }
}

type EntryMap = IndexMap<(SubId, u16), PatternEntry, FxBuildHasher>;

#[derive(Default, Debug)]
struct Bucket {
    plain: EntryMap,
    filtered: EntryMap,
}

impl Bucket {
    fn is_empty(&self) -> bool {
        self.plain.is_empty() && self.filtered.is_empty()
    }
}

#[derive(Debug)]
struct Registered {
    sub: Arc<Subscription>,
    indexed: u64,
}

impl Registered {
    fn full_mask(&self) -> u64 {
        full_mask(self.sub.patterns().len())
    }
}

pub(crate) fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Two-level hash table over triple patterns.
#[derive(Default, Debug)]
pub struct SemanticIndex {
    table: FxHashMap<Option<Iri>, FxHashMap<SlotKey, Bucket>>,
    subs: FxHashMap<SubId, Registered>,
    entries: usize,
}

impl SemanticIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes pattern `i` of `sub`. Repeating a pattern that is already
    /// present is a no-op; indexing a subscription whose patterns are all
    /// present fails.
    pub fn index_pattern(
        &mut self,
        id: SubId,
        sub: &Arc<Subscription>,
        i: usize,
    ) -> Result<(), SemanticError> {
        let pattern = sub
            .patterns()
            .get(i)
            .ok_or(SemanticError::PatternOutOfRange { sub: id, index: i })?;
        let reg = self.subs.entry(id).or_insert_with(|| Registered {
            sub: sub.clone(),
            indexed: 0,
        });
        if reg.indexed == reg.full_mask() {
            return Err(SemanticError::DuplicateSubscription(id));
        }
        let bit = 1u64 << i;
        if reg.indexed & bit != 0 {
            return Ok(());
        }
        reg.indexed |= bit;

        let key = PatternKey::of(pattern);
        let mut var_mask = 0;
        if pattern.subject.var().is_some() {
            var_mask |= SUBJECT_VAR;
        }
        if pattern.predicate.var().is_some() {
            var_mask |= PREDICATE_VAR;
        }
        if pattern.object.var().is_some() {
            var_mask |= OBJECT_VAR;
        }
        let entry = PatternEntry {
            sub: id,
            pattern: i as u16,
            var_mask,
            filtered: !sub.filters().is_empty(),
        };
        let bucket = self
            .table
            .entry(key.predicate.clone())
            .or_default()
            .entry(key.level2())
            .or_default();
        let map = if entry.filtered {
            &mut bucket.filtered
        } else {
            &mut bucket.plain
        };
        map.insert((id, i as u16), entry);
        self.entries += 1;
        Ok(())
    }

    /// Indexes every pattern of a subscription.
    pub fn index_subscription(
        &mut self,
        id: SubId,
        sub: &Arc<Subscription>,
    ) -> Result<(), SemanticError> {
        if self.subs.get(&id).is_some_and(|r| r.indexed == r.full_mask()) {
            return Err(SemanticError::DuplicateSubscription(id));
        }
        for i in 0..sub.patterns().len() {
            self.index_pattern(id, sub, i)?;
        }
        Ok(())
    }

    pub fn remove_subscription(&mut self, id: SubId) -> Result<(), SemanticError> {
        let reg = self
            .subs
            .remove(&id)
            .ok_or(SemanticError::UnknownSubscription(id))?;
        for (i, pattern) in reg.sub.patterns().iter().enumerate() {
            if reg.indexed & (1u64 << i) == 0 {
                continue;
            }
            let key = PatternKey::of(pattern);
            let Some(level2) = self.table.get_mut(&key.predicate) else {
                continue;
            };
            let slot = key.level2();
            if let Some(bucket) = level2.get_mut(&slot) {
                let removed = bucket.plain.swap_remove(&(id, i as u16)).is_some()
                    || bucket.filtered.swap_remove(&(id, i as u16)).is_some();
                if removed {
                    self.entries -= 1;
                }
                if bucket.is_empty() {
                    level2.remove(&slot);
                }
            }
            if level2.is_empty() {
                self.table.remove(&key.predicate);
            }
        }
        Ok(())
    }

    pub fn contains(&self, id: SubId) -> bool {
        self.subs.contains_key(&id)
    }

    pub fn subscription(&self, id: SubId) -> Option<&Arc<Subscription>> {
        self.subs.get(&id).map(|r| &r.sub)
    }

    /// Number of stored pattern entries.
    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    fn for_each_bucket(&self, t: &Triple, mut f: impl FnMut(&Bucket)) {
        for key in PatternKey::probes(t) {
            if let Some(bucket) = self
                .table
                .get(&key.predicate)
                .and_then(|l2| l2.get(&(key.subject, key.object)))
            {
                f(bucket);
            }
        }
    }

    /// Every entry whose pattern's constants equal the corresponding parts of `t`.
    pub fn lookup_candidates(&self, t: &Triple) -> Vec<PatternEntry> {
        let mut out = Vec::new();
        self.for_each_bucket(t, |b| {
            out.extend(b.plain.values().copied());
            out.extend(b.filtered.values().copied());
        });
        out
    }

    /// Like [`lookup_candidates`](Self::lookup_candidates), restricted to
    /// subscriptions without full-text filters.
    pub fn for_each_plain_candidate(&self, t: &Triple, mut f: impl FnMut(&PatternEntry)) {
        self.for_each_bucket(t, |b| b.plain.values().for_each(&mut f));
    }
}

/// A document triple matched to one pattern, with the filters of the
/// owning subscription (bit `i` = filter `i`) that its object satisfies.
#[derive(Clone, Copy, Debug)]
pub struct PatternMatch<'a> {
    pub triple: &'a Triple,
    pub satisfied_filters: u64,
}

/// Projected values of a notification row, in `SELECT` order.
pub type BindingRow = Vec<Term>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Value<'a> {
    Iri(&'a Iri),
    Literal(&'a Literal),
}

impl<'a> Value<'a> {
    fn of(t: &'a Term) -> Self {
        match t {
            Term::Iri(i) => Value::Iri(i),
            Term::Literal(l) => Value::Literal(l),
        }
    }

    fn to_term(self) -> Term {
        match self {
            Value::Iri(i) => Term::Iri(i.clone()),
            Value::Literal(l) => Term::Literal(l.clone()),
        }
    }
}

/// Joins per-pattern matches along the subscription's pattern chain.
///
/// `matches[i]` lists the document triples that fit pattern `i`. A match of a
/// pattern whose object variable carries filters is kept only when all of
/// those filters are satisfied by it. Returns distinct projected rows, sorted.
pub fn evaluate_joins(sub: &Subscription, matches: &[Vec<PatternMatch<'_>>]) -> Vec<BindingRow> {
    let lists: Vec<&[PatternMatch<'_>]> = matches.iter().map(Vec::as_slice).collect();
    join_chain(sub, &lists, |m| (m.triple, m.satisfied_filters))
}

/// [`evaluate_joins`] over any per-pattern candidate lists; `get` yields the
/// triple and satisfied-filter mask of a candidate.
pub fn join_chain<'t, T>(
    sub: &Subscription,
    lists: &[&[T]],
    get: impl Fn(&T) -> (&'t Triple, u64),
) -> Vec<BindingRow> {
    let patterns = sub.patterns();
    debug_assert_eq!(patterns.len(), lists.len());
    if lists.iter().any(|l| l.is_empty()) {
        return Vec::new();
    }
    let required: Vec<u64> = patterns
        .iter()
        .map(|p| match p.object.var() {
            Some(v) => sub.filters_on(v).fold(0u64, |m, fi| m | (1 << fi)),
            None => 0,
        })
        .collect();
    let mut state = JoinState {
        sub,
        lists,
        get: &get,
        required: &required,
        bound: vec![None; sub.variables().len()],
        rows: Vec::new(),
    };
    state.search(0);
    let mut rows = state.rows;
    rows.sort_unstable();
    rows.dedup();
    rows
}

struct JoinState<'s, 't, T, G> {
    sub: &'s Subscription,
    lists: &'s [&'s [T]],
    get: &'s G,
    required: &'s [u64],
    bound: Vec<Option<Value<'t>>>,
    rows: Vec<BindingRow>,
}

impl<'s, 't, T, G: Fn(&T) -> (&'t Triple, u64)> JoinState<'s, 't, T, G> {
    fn search(&mut self, depth: usize) {
        if depth == self.lists.len() {
            let row = self
                .sub
                .select_slots()
                .iter()
                .map(|&s| self.bound[s as usize].expect("selected variable bound").to_term())
                .collect();
            self.rows.push(row);
            return;
        }
        let pattern = &self.sub.patterns()[depth];
        let slots = self.sub.var_slots()[depth];
        let required = self.required[depth];
        for cand in self.lists[depth] {
            let (t, mask) = (self.get)(cand);
            if mask & required != required {
                continue;
            }
            let values = [
                Value::Iri(&t.subject),
                Value::Iri(&t.predicate),
                Value::of(&t.object),
            ];
            let mut fresh = [false; 3];
            let mut ok = true;
            for (k, (&slot, value)) in slots.iter().zip(values).enumerate() {
                if slot == CONST_SLOT {
                    let c = pattern.slots()[k].constant().expect("constant slot");
                    if Value::of(c) != value {
                        ok = false;
                        break;
                    }
                    continue;
                }
                match self.bound[slot as usize] {
                    Some(b) if b != value => {
                        ok = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        self.bound[slot as usize] = Some(value);
                        fresh[k] = true;
                    }
                }
            }
            if ok {
                self.search(depth + 1);
            }
            for (k, &f) in fresh.iter().enumerate() {
                if f {
                    self.bound[slots[k] as usize] = None;
                }
            }
        }
    }
}

/// Per-document index of triples under the same eight-key scheme, used to
/// collect the matches of a candidate subscription's patterns.
pub struct DocTripleIndex<'a> {
    by_key: FxHashMap<PatternKey, Vec<&'a Triple>>,
}

impl<'a> DocTripleIndex<'a> {
    pub fn new(triples: &'a [Triple]) -> Self {
        let mut by_key: FxHashMap<PatternKey, Vec<&'a Triple>> = FxHashMap::default();
        for t in triples {
            for key in PatternKey::probes(t) {
                by_key.entry(key).or_default().push(t);
            }
        }
        DocTripleIndex { by_key }
    }

    /// Triples whose parts equal the pattern's constants.
    pub fn matching(&self, p: &TriplePattern) -> &[&'a Triple] {
        self.by_key
            .get(&PatternKey::of(p))
            .map_or(&[], Vec::as_slice)
    }
}
