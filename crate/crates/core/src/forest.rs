//! Keyword trie forest for the conjunctive clauses indexed under one
//! predicate.
//!
//! A root-to-node path spells a set of distinct words; a clause is registered
//! at the node whose path words equal its positive keyword set. The keyword
//! table maps each word to the nodes carrying it, roots first, and is how
//! both matching and best-fit placement find their starting points. Words
//! are interned per forest so that child lookups compare integers.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::rdf::TokenStream;
use crate::semantic::SubId;
use crate::subscription::{ConjunctiveClause, TokenIndex, Word};

pub type NodeId = u32;
type WordId = u32;

const NO_PARENT: NodeId = NodeId::MAX;

/// Identity of an indexed clause: subscription, filter ordinal, clause id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClauseKey {
    pub sub: SubId,
    pub filter: u16,
    pub clause: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForestError {
    #[error("clause {0:?} is not indexed")]
    UnknownClause(ClauseKey),
    #[error("clause {0:?} is already indexed")]
    DuplicateClause(ClauseKey),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InsertStrategy {
    /// Sorted-word chains; placement depends only on the clause.
    Deterministic,
    /// Attach under the existing node that shares the most words.
    BestFit,
}

#[derive(Debug)]
struct Node {
    word: WordId,
    parent: NodeId,
    depth: u32,
    /// Sorted by word id.
    children: Vec<(WordId, NodeId)>,
    /// Clauses ending here; the flag marks clauses that need positional or
    /// negative verification.
    clauses: Vec<(ClauseKey, bool)>,
    /// Clauses registered in this node's subtree, itself included.
    population: u32,
    hits: AtomicU64,
}

impl Node {
    fn child(&self, word: WordId) -> Option<NodeId> {
        self.children
            .binary_search_by_key(&word, |&(w, _)| w)
            .ok()
            .map(|i| self.children[i].1)
    }
}

#[derive(Debug, Default)]
struct KeywordEntry {
    roots: Vec<NodeId>,
    inner: FxHashSet<NodeId>,
    clause_freq: u32,
}

impl KeywordEntry {
    fn node_count(&self) -> usize {
        self.roots.len() + self.inner.len()
    }
}

#[derive(Debug)]
struct ClauseSlot {
    terminal: NodeId,
    clause: Arc<ConjunctiveClause>,
}

/// Where a clause ended up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub terminal: NodeId,
    pub path: Vec<Word>,
    pub created_nodes: usize,
}

/// Per-word counters used by the reorganizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WordStat {
    pub node_count: u64,
    pub clause_freq: u64,
    pub probe_hits: u64,
}

/// Structural violations found by [`TrieForest::audit`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Document words known to a forest, as a bitset over word ids.
struct DocWords {
    ids: Vec<WordId>,
    bits: Vec<u64>,
}

impl DocWords {
    fn contains(&self, w: WordId) -> bool {
        self.bits[(w / 64) as usize] & (1 << (w % 64)) != 0
    }
}

#[derive(Debug, Default)]
pub struct TrieForest {
    nodes: Vec<Option<Node>>,
    free: Vec<NodeId>,
    live_nodes: usize,
    word_ids: FxHashMap<Word, WordId>,
    /// Indexed by word id.
    words: Vec<Word>,
    keywords: Vec<KeywordEntry>,
    clauses: FxHashMap<ClauseKey, ClauseSlot>,
}

impl TrieForest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.live_nodes
    }

    pub fn clause_count(&self) -> usize {
        self.clauses.len()
    }

    pub fn root_count(&self) -> usize {
        self.keywords.iter().map(|e| e.roots.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty() && self.live_nodes == 0
    }

    pub fn clause(&self, key: &ClauseKey) -> Option<&Arc<ConjunctiveClause>> {
        self.clauses.get(key).map(|s| &s.clause)
    }

    pub fn contains(&self, key: &ClauseKey) -> bool {
        self.clauses.contains_key(key)
    }

    pub fn clause_keys(&self) -> impl Iterator<Item = &ClauseKey> {
        self.clauses.keys()
    }

    fn node(&self, id: NodeId) -> &Node {
        self.nodes[id as usize].as_ref().expect("live node")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id as usize].as_mut().expect("live node")
    }

    fn word(&self, id: WordId) -> &Word {
        &self.words[id as usize]
    }

    fn word_id(&mut self, w: &Word) -> WordId {
        if let Some(&id) = self.word_ids.get(w) {
            return id;
        }
        let id = self.words.len() as WordId;
        self.words.push(w.clone());
        self.keywords.push(KeywordEntry::default());
        self.word_ids.insert(w.clone(), id);
        id
    }

    /// Words on the root-to-node path, root first.
    pub fn path_words(&self, mut id: NodeId) -> Vec<Word> {
        let mut path = Vec::with_capacity(self.node(id).depth as usize);
        while id != NO_PARENT {
            let n = self.node(id);
            path.push(self.word(n.word).clone());
            id = n.parent;
        }
        path.reverse();
        path
    }

    pub fn word_stat(&self, word: &str) -> WordStat {
        let Some(&wid) = self.word_ids.get(word) else {
            return WordStat::default();
        };
        let e = &self.keywords[wid as usize];
        let probe_hits = e
            .roots
            .iter()
            .chain(e.inner.iter())
            .map(|&id| self.node(id).hits.load(Ordering::Relaxed))
            .sum();
        WordStat {
            node_count: e.node_count() as u64,
            clause_freq: u64::from(e.clause_freq),
            probe_hits,
        }
    }

    fn alloc(&mut self, word: WordId, parent: NodeId) -> NodeId {
        let depth = if parent == NO_PARENT {
            1
        } else {
            self.node(parent).depth + 1
        };
        let node = Node {
            word,
            parent,
            depth,
            children: Vec::new(),
            clauses: Vec::new(),
            population: 0,
            hits: AtomicU64::new(0),
        };
        let id = match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                (self.nodes.len() - 1) as NodeId
            }
        };
        self.live_nodes += 1;
        let entry = &mut self.keywords[word as usize];
        if parent == NO_PARENT {
            entry.roots.push(id);
        } else {
            entry.inner.insert(id);
            let p = self.node_mut(parent);
            let at = p
                .children
                .binary_search_by_key(&word, |&(w, _)| w)
                .expect_err("new child word must be absent");
            p.children.insert(at, (word, id));
        }
        id
    }

    fn root_for(&self, word: WordId) -> Option<NodeId> {
        self.keywords[word as usize].roots.first().copied()
    }

    /// Follows or creates `words` as a chain below `from` (or as a new root
    /// chain when `from` is `None`).
    fn extend_chain(&mut self, from: Option<NodeId>, words: &[WordId]) -> (NodeId, usize) {
        let mut created = 0;
        let mut cur = from;
        for &w in words {
            let existing = match cur {
                Some(id) => self.node(id).child(w),
                None => self.root_for(w),
            };
            cur = Some(match existing {
                Some(id) => id,
                None => {
                    created += 1;
                    self.alloc(w, cur.unwrap_or(NO_PARENT))
                }
            });
        }
        (cur.expect("clause has at least one word"), created)
    }

    fn register(&mut self, key: ClauseKey, clause: Arc<ConjunctiveClause>, terminal: NodeId, ids: &[WordId]) {
        let verify = !clause.is_keyword_only();
        self.node_mut(terminal).clauses.push((key, verify));
        let mut id = terminal;
        while id != NO_PARENT {
            let n = self.node_mut(id);
            n.population += 1;
            id = n.parent;
        }
        for &w in ids {
            self.keywords[w as usize].clause_freq += 1;
        }
        self.clauses.insert(key, ClauseSlot { terminal, clause });
    }

    pub fn insert(
        &mut self,
        strategy: InsertStrategy,
        key: ClauseKey,
        clause: Arc<ConjunctiveClause>,
    ) -> Result<Placement, ForestError> {
        match strategy {
            InsertStrategy::Deterministic => self.insert_deterministic(key, clause),
            InsertStrategy::BestFit => self.insert_bestfit(key, clause),
        }
    }

    /// Ids of the clause's positive words, in lexicographic word order.
    fn clause_ids(&mut self, key: ClauseKey, clause: &ConjunctiveClause) -> Result<Vec<WordId>, ForestError> {
        if self.clauses.contains_key(&key) {
            return Err(ForestError::DuplicateClause(key));
        }
        Ok(clause.positive_words().iter().map(|w| self.word_id(w)).collect())
    }

    /// Descends the sorted words of the clause from the root labelled with
    /// the smallest one, creating nodes as needed.
    pub fn insert_deterministic(
        &mut self,
        key: ClauseKey,
        clause: Arc<ConjunctiveClause>,
    ) -> Result<Placement, ForestError> {
        let ids = self.clause_ids(key, &clause)?;
        let (terminal, created_nodes) = self.extend_chain(None, &ids);
        self.register(key, clause.clone(), terminal, &ids);
        Ok(Placement {
            terminal,
            path: clause.positive_words().to_vec(),
            created_nodes,
        })
    }

    /// Places the clause under the node maximizing
    /// (shared words, subtree population), preferring the smallest next
    /// residual word and then the smallest path, and appends the residual
    /// words in sorted order. A clause sharing no word starts a new root.
    pub fn insert_bestfit(
        &mut self,
        key: ClauseKey,
        clause: Arc<ConjunctiveClause>,
    ) -> Result<Placement, ForestError> {
        let ids = self.clause_ids(key, &clause)?;
        let words = clause.positive_words();
        let (terminal, path, created_nodes) = match self.best_position(&ids) {
            None => {
                let (t, c) = self.extend_chain(None, &ids);
                (t, words.to_vec(), c)
            }
            Some((node, in_path)) => {
                let mut path = self.path_words(node);
                let residual: Vec<WordId> = ids
                    .iter()
                    .zip(&in_path)
                    .filter(|(_, &on)| !on)
                    .map(|(&w, _)| w)
                    .collect();
                let (t, c) = self.extend_chain(Some(node), &residual);
                path.extend(residual.iter().map(|&w| self.word(w).clone()));
                (t, path, c)
            }
        };
        self.register(key, clause, terminal, &ids);
        Ok(Placement {
            terminal,
            path,
            created_nodes,
        })
    }

    /// Enumerates every node whose path words are a subset of `ids` (in
    /// lexicographic word order) and returns the best-scoring one with the
    /// clause words its path covers.
    fn best_position(&self, ids: &[WordId]) -> Option<(NodeId, Vec<bool>)> {
        struct Best {
            node: NodeId,
            depth: u32,
            population: u32,
            /// Index into `ids` of the first uncovered word; `ids.len()` when
            /// the path covers the clause.
            next_word: usize,
            in_path: Vec<bool>,
        }
        let mut best: Option<Best> = None;
        let mut in_path = vec![false; ids.len()];
        // (node, index of its word in `ids`, entering?)
        let mut stack: Vec<(NodeId, usize, bool)> = Vec::new();
        for (i, &w) in ids.iter().enumerate() {
            for &r in self.keywords[w as usize].roots.iter().rev() {
                stack.push((r, i, true));
            }
        }
        while let Some((id, wi, entering)) = stack.pop() {
            if !entering {
                in_path[wi] = false;
                continue;
            }
            in_path[wi] = true;
            stack.push((id, wi, false));
            let n = self.node(id);
            let next_word = in_path.iter().position(|&on| !on).unwrap_or(ids.len());
            let better = match &best {
                None => true,
                Some(b) => {
                    // An exact cover has no next word and sorts before any word.
                    let next_rank = |i: usize| if i == ids.len() { 0 } else { i + 1 };
                    let ord = n
                        .depth
                        .cmp(&b.depth)
                        .then(n.population.cmp(&b.population))
                        .then_with(|| next_rank(b.next_word).cmp(&next_rank(next_word)));
                    match ord {
                        std::cmp::Ordering::Greater => true,
                        std::cmp::Ordering::Less => false,
                        std::cmp::Ordering::Equal => {
                            self.path_words(id) < self.path_words(b.node)
                        }
                    }
                }
            };
            if better {
                best = Some(Best {
                    node: id,
                    depth: n.depth,
                    population: n.population,
                    next_word,
                    in_path: in_path.clone(),
                });
            }
            for (ci, &w) in ids.iter().enumerate() {
                if in_path[ci] {
                    continue;
                }
                if let Some(c) = n.child(w) {
                    stack.push((c, ci, true));
                }
            }
        }
        best.map(|b| (b.node, b.in_path))
    }

    /// Unregisters a clause and prunes nodes left without clauses below them.
    pub fn remove(&mut self, key: &ClauseKey) -> Result<Arc<ConjunctiveClause>, ForestError> {
        let slot = self
            .clauses
            .remove(key)
            .ok_or(ForestError::UnknownClause(*key))?;
        let term = self.node_mut(slot.terminal);
        let at = term
            .clauses
            .iter()
            .position(|(k, _)| k == key)
            .expect("terminal lists its clause");
        term.clauses.swap_remove(at);
        let mut id = slot.terminal;
        while id != NO_PARENT {
            let n = self.node_mut(id);
            n.population -= 1;
            let w = n.word;
            id = n.parent;
            self.keywords[w as usize].clause_freq -= 1;
        }

        let mut id = slot.terminal;
        while id != NO_PARENT && self.node(id).population == 0 {
            let node = self.nodes[id as usize].take().expect("live node");
            debug_assert!(node.children.is_empty());
            self.free.push(id);
            self.live_nodes -= 1;
            if node.parent != NO_PARENT {
                let p = self.node_mut(node.parent);
                let at = p
                    .children
                    .binary_search_by_key(&node.word, |&(w, _)| w)
                    .expect("child listed in parent");
                p.children.remove(at);
            }
            let entry = &mut self.keywords[node.word as usize];
            if node.parent == NO_PARENT {
                entry.roots.retain(|&r| r != id);
            } else {
                entry.inner.remove(&id);
            }
            id = node.parent;
        }
        Ok(slot.clause)
    }

    fn doc_words(&self, ix: &TokenIndex<'_>) -> DocWords {
        let mut ids = Vec::with_capacity(ix.distinct_len());
        let mut bits = vec![0u64; self.words.len().div_ceil(64)];
        for w in ix.distinct_words() {
            if let Some(&id) = self.word_ids.get(w) {
                ids.push(id);
                bits[(id / 64) as usize] |= 1 << (id % 64);
            }
        }
        DocWords { ids, bits }
    }

    /// Clauses satisfied by the tokens: walks from the roots of the tokens'
    /// words, entering only children whose word occurs in the tokens, then
    /// verifies phrase, proximity and negated atoms.
    pub fn match_tokens(&self, ix: &TokenIndex<'_>) -> Vec<ClauseKey> {
        let mut out = Vec::new();
        self.match_into(ix, &mut out);
        out
    }

    pub fn match_stream(&self, ts: &TokenStream) -> Vec<ClauseKey> {
        self.match_tokens(&TokenIndex::new(ts))
    }

    pub fn match_into(&self, ix: &TokenIndex<'_>, out: &mut Vec<ClauseKey>) {
        if self.clauses.is_empty() {
            return;
        }
        let doc = self.doc_words(ix);
        let mut stack: Vec<NodeId> = Vec::new();
        for &w in &doc.ids {
            stack.extend_from_slice(&self.keywords[w as usize].roots);
        }
        while let Some(id) = stack.pop() {
            let n = self.node(id);
            n.hits.fetch_add(1, Ordering::Relaxed);
            for &(key, verify) in &n.clauses {
                if !verify || self.clauses[&key].clause.verify_atoms(ix) {
                    out.push(key);
                }
            }
            if n.children.len() <= doc.ids.len() {
                for &(w, c) in &n.children {
                    if doc.contains(w) {
                        stack.push(c);
                    }
                }
            } else {
                for &w in &doc.ids {
                    if let Some(c) = n.child(w) {
                        stack.push(c);
                    }
                }
            }
        }
    }

    fn sorted_roots(&self) -> Vec<NodeId> {
        let mut roots: Vec<(&Word, NodeId)> = self
            .keywords
            .iter()
            .enumerate()
            .flat_map(|(w, e)| e.roots.iter().map(move |&r| (&self.words[w], r)))
            .collect();
        roots.sort();
        roots.into_iter().map(|(_, r)| r).collect()
    }

    fn sorted_children(&self, n: &Node) -> Vec<NodeId> {
        let mut c: Vec<(&Word, NodeId)> = n.children.iter().map(|&(w, c)| (self.word(w), c)).collect();
        c.sort();
        c.into_iter().map(|(_, c)| c).collect()
    }

    /// One line per node in depth-first order: `depth \t word \t clauseCount`.
    /// Roots and siblings are visited in lexicographic word order.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut stack: Vec<NodeId> = self.sorted_roots().into_iter().rev().collect();
        while let Some(id) = stack.pop() {
            let n = self.node(id);
            let _ = writeln!(out, "{}\t{}\t{}", n.depth, self.word(n.word), n.clauses.len());
            stack.extend(self.sorted_children(n).into_iter().rev());
        }
        out
    }

    /// Checks every structural invariant of the forest.
    pub fn audit(&self) -> AuditReport {
        let mut v = Vec::new();
        let mut reached = 0usize;
        let mut subtree_clauses: FxHashMap<NodeId, u32> = FxHashMap::default();
        let mut seen = FxHashSet::default();

        for root in self.sorted_roots() {
            if self.node(root).parent != NO_PARENT {
                v.push(format!("root {root} has a parent"));
            }
            // Post-order walk carrying the path words.
            let mut stack: Vec<(NodeId, bool)> = vec![(root, true)];
            let mut path: Vec<Word> = Vec::new();
            while let Some((id, entering)) = stack.pop() {
                let n = self.node(id);
                if !entering {
                    let below: u32 = n
                        .children
                        .iter()
                        .map(|(_, c)| subtree_clauses.get(c).copied().unwrap_or(0))
                        .sum();
                    let total = below + n.clauses.len() as u32;
                    if total != n.population {
                        v.push(format!("node {id}: population {} != {total}", n.population));
                    }
                    subtree_clauses.insert(id, total);
                    path.pop();
                    continue;
                }
                if !seen.insert(id) {
                    v.push(format!("node {id} reachable more than once"));
                    continue;
                }
                reached += 1;
                let word = self.word(n.word);
                if path.contains(word) {
                    v.push(format!("node {id}: word {word:?} repeats on its path"));
                }
                path.push(word.clone());
                if n.depth as usize != path.len() {
                    v.push(format!("node {id}: depth {} != {}", n.depth, path.len()));
                }
                for (key, verify) in &n.clauses {
                    match self.clauses.get(key) {
                        None => v.push(format!("node {id}: unregistered clause {key:?}")),
                        Some(slot) => {
                            if slot.terminal != id {
                                v.push(format!("clause {key:?}: listed at {id}, terminal {}", slot.terminal));
                            }
                            let mut sorted = path.clone();
                            sorted.sort();
                            if sorted != slot.clause.positive_words() {
                                v.push(format!("clause {key:?}: path words differ from clause words"));
                            }
                            if *verify == slot.clause.is_keyword_only() {
                                v.push(format!("clause {key:?}: wrong verification flag"));
                            }
                        }
                    }
                }
                stack.push((id, false));
                for pair in n.children.windows(2) {
                    if pair[0].0 >= pair[1].0 {
                        v.push(format!("node {id}: children not strictly sorted"));
                    }
                }
                for &(w, c) in n.children.iter().rev() {
                    let child = self.node(c);
                    if child.parent != id || child.word != w {
                        v.push(format!("node {c}: inconsistent parent link"));
                    }
                    stack.push((c, true));
                }
            }
        }

        if reached != self.live_nodes {
            v.push(format!("{reached} nodes reachable, {} live", self.live_nodes));
        }
        let allocated = self.nodes.iter().filter(|n| n.is_some()).count();
        if allocated != self.live_nodes {
            v.push(format!("{allocated} allocated nodes, {} counted", self.live_nodes));
        }

        // The keyword table must be exactly the inverse of the node labels.
        let mut from_nodes: FxHashMap<WordId, (FxHashSet<NodeId>, FxHashSet<NodeId>)> =
            FxHashMap::default();
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(n) = n {
                let e = from_nodes.entry(n.word).or_default();
                if n.parent == NO_PARENT {
                    e.0.insert(i as NodeId);
                } else {
                    e.1.insert(i as NodeId);
                }
                if n.population == 0 {
                    v.push(format!("node {i}: no clauses in subtree"));
                }
            }
        }
        let mut freq: FxHashMap<&str, u32> = FxHashMap::default();
        for slot in self.clauses.values() {
            for w in slot.clause.positive_words() {
                *freq.entry(w).or_default() += 1;
            }
        }
        for (wid, e) in self.keywords.iter().enumerate() {
            let w = &self.words[wid];
            if self.word_ids.get(w) != Some(&(wid as WordId)) {
                v.push(format!("word {w:?}: id table out of sync"));
            }
            let roots: FxHashSet<NodeId> = e.roots.iter().copied().collect();
            let empty = (FxHashSet::default(), FxHashSet::default());
            let (r, i) = from_nodes.get(&(wid as WordId)).unwrap_or(&empty);
            if *r != roots || *i != e.inner || roots.len() != e.roots.len() {
                v.push(format!("keyword table entry {w:?} does not match node labels"));
            }
            if e.roots.len() > 1 {
                v.push(format!("word {w:?} labels {} roots", e.roots.len()));
            }
            if freq.get(&**w).copied().unwrap_or(0) != e.clause_freq {
                v.push(format!("word {w:?}: clause frequency out of date"));
            }
        }
        if self.word_ids.len() != self.words.len() {
            v.push("word id table out of sync".into());
        }
        AuditReport { violations: v }
    }
}
