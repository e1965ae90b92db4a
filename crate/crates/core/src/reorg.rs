//! Score-ordered re-insertion of the clauses added to a forest since its last
//! reorganisation.

use std::cmp::Ordering;
use std::sync::Arc;

use indexmap::IndexMap;
use rustc_hash::{FxBuildHasher, FxHashMap};

use crate::forest::{ClauseKey, TrieForest, WordStat};
use crate::subscription::{ConjunctiveClause, Word};

#[derive(Clone, Debug)]
pub struct LogEntry {
    pub clause: Arc<ConjunctiveClause>,
    pub seq: u64,
}

/// Live clauses inserted since the last reorganisation, in insertion order.
#[derive(Clone, Debug, Default)]
pub struct InsertionLog {
    entries: IndexMap<ClauseKey, LogEntry, FxBuildHasher>,
    next_seq: u64,
}

impl InsertionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: ClauseKey, clause: Arc<ConjunctiveClause>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.insert(key, LogEntry { clause, seq });
    }

    /// Drops a clause that left the forest.
    pub fn forget(&mut self, key: &ClauseKey) -> bool {
        self.entries.shift_remove(key).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClauseKey, &LogEntry)> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ScoreVariant {
    /// Sum of the live-clause frequency of each word.
    #[default]
    ClauseFreq,
    /// Sum of the trie probes recorded for each word while matching.
    ProbeHits,
}

#[derive(Clone, Debug, Default)]
pub struct WordStats {
    words: FxHashMap<Word, WordStat>,
}

impl WordStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Snapshot of the forest's counters for every word in the log.
    pub fn collect(forest: &TrieForest, log: &InsertionLog) -> Self {
        let mut words = FxHashMap::default();
        for (_, e) in log.iter() {
            for w in e.clause.positive_words() {
                words
                    .entry(w.clone())
                    .or_insert_with(|| forest.word_stat(w));
            }
        }
        WordStats { words }
    }

    pub fn set(&mut self, word: &str, stat: WordStat) {
        self.words.insert(Arc::from(word), stat);
    }

    pub fn get(&self, word: &str) -> WordStat {
        self.words.get(word).copied().unwrap_or_default()
    }
}

pub fn score_clause(clause: &ConjunctiveClause, stats: &WordStats, variant: ScoreVariant) -> f64 {
    clause
        .positive_words()
        .iter()
        .map(|w| {
            let s = stats.get(w);
            match variant {
                ScoreVariant::ClauseFreq => s.clause_freq as f64,
                ScoreVariant::ProbeHits => s.probe_hits as f64,
            }
        })
        .sum()
}

/// Replay order: descending score, then more words, then the smallest word
/// sequence, then insertion order.
pub fn replay_order(
    log: &InsertionLog,
    stats: &WordStats,
    variant: ScoreVariant,
) -> Vec<(ClauseKey, Arc<ConjunctiveClause>)> {
    let mut scored: Vec<(f64, &ClauseKey, &LogEntry)> = log
        .iter()
        .map(|(k, e)| (score_clause(&e.clause, stats, variant), k, e))
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                let (wa, wb) = (a.2.clause.positive_words(), b.2.clause.positive_words());
                wb.len().cmp(&wa.len()).then_with(|| wa.cmp(wb))
            })
            .then(a.2.seq.cmp(&b.2.seq))
    });
    scored
        .into_iter()
        .map(|(_, k, e)| (*k, e.clause.clone()))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReorgOutcome {
    pub replayed: usize,
    pub nodes_before: usize,
    pub nodes_after: usize,
}

/// Removes every logged clause and re-inserts them best-fit in replay order,
/// then clears the log.
pub fn reorganize(
    forest: &mut TrieForest,
    log: &mut InsertionLog,
    stats: &WordStats,
    variant: ScoreVariant,
) -> ReorgOutcome {
    let nodes_before = forest.node_count();
    let order = replay_order(log, stats, variant);
    for (key, _) in &order {
        forest.remove(key).expect("logged clause is live");
    }
    for (key, clause) in &order {
        forest
            .insert_bestfit(*key, clause.clone())
            .expect("removed clause re-inserts");
    }
    log.clear();
    ReorgOutcome {
        replayed: order.len(),
        nodes_before,
        nodes_after: forest.node_count(),
    }
}

/// [`reorganize`] with statistics taken from the forest itself.
pub fn reorganize_forest(
    forest: &mut TrieForest,
    log: &mut InsertionLog,
    variant: ScoreVariant,
) -> ReorgOutcome {
    let stats = WordStats::collect(forest, log);
    reorganize(forest, log, &stats, variant)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReorgPolicy {
    EveryK(u64),
    ExplicitOnly,
}

impl Default for ReorgPolicy {
    fn default() -> Self {
        ReorgPolicy::EveryK(10_000)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReorgCounters {
    /// Clause insertions since the last reorganisation.
    pub insertions: u64,
}

pub fn maybe_trigger(policy: ReorgPolicy, counters: &ReorgCounters) -> bool {
    match policy {
        ReorgPolicy::EveryK(k) => k > 0 && counters.insertions >= k,
        ReorgPolicy::ExplicitOnly => false,
    }
}
