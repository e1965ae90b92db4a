//! Full-text expressions (`ftand`, `ftor`, `ftnot`, phrases, `ftnear/k`),
//! their normalization into conjunctive clauses, and evaluation over token
//! streams.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::rdf::TokenStream;

/// A normalized keyword: lowercase, alphanumeric, non-empty.
pub type Word = Arc<str>;

/// Longest word list accepted by `ftnear`.
pub const MAX_NEAR_WORDS: usize = 8;

/// Default bound on the number of clauses one filter may expand into.
pub const DEFAULT_DNF_CAP: usize = 64;

/// A leaf of a full-text expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Keyword(Word),
    /// Words at consecutive positions, in order. At least two words.
    Phrase(Vec<Word>),
    /// One occurrence of each listed word such that, sorted by position,
    /// neighbouring occurrences are at most `k` positions apart.
    Near { k: u32, words: Vec<Word> },
}

impl Atom {
    pub fn words(&self) -> &[Word] {
        match self {
            Atom::Keyword(w) => std::slice::from_ref(w),
            Atom::Phrase(ws) | Atom::Near { words: ws, .. } => ws,
        }
    }

    pub fn is_positional(&self) -> bool {
        !matches!(self, Atom::Keyword(_))
    }

    pub fn holds(&self, ix: &TokenIndex<'_>) -> bool {
        match self {
            Atom::Keyword(w) => ix.contains(w),
            Atom::Phrase(words) => phrase_holds(words, ix),
            Atom::Near { k, words } => near_holds(*k, words, ix),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Keyword(w) => write!(f, "\"{w}\""),
            Atom::Phrase(ws) => write!(f, "\"{}\"", ws.join(" ")),
            Atom::Near { k, words } => {
                write!(f, "ftnear/{k}(")?;
                for (i, w) in words.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "\"{w}\"")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Boolean full-text expression. Negation applies to atoms only.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FullTextExpr {
    Atom(Atom),
    And(Vec<FullTextExpr>),
    Or(Vec<FullTextExpr>),
    Not(Atom),
}

impl FullTextExpr {
    pub fn keyword(w: &str) -> Self {
        FullTextExpr::Atom(Atom::Keyword(Arc::from(w)))
    }

    /// Direct recursive evaluation.
    pub fn matches(&self, ix: &TokenIndex<'_>) -> bool {
        match self {
            FullTextExpr::Atom(a) => a.holds(ix),
            FullTextExpr::And(cs) => cs.iter().all(|c| c.matches(ix)),
            FullTextExpr::Or(cs) => cs.iter().any(|c| c.matches(ix)),
            FullTextExpr::Not(a) => !a.holds(ix),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            FullTextExpr::Atom(_) | FullTextExpr::Not(_) => 1,
            FullTextExpr::And(cs) | FullTextExpr::Or(cs) => {
                1 + cs.iter().map(FullTextExpr::depth).max().unwrap_or(0)
            }
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FullTextExpr::And(_) | FullTextExpr::Or(_) => write!(f, "({self})"),
            _ => write!(f, "{self}"),
        }
    }
}

impl fmt::Display for FullTextExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FullTextExpr::Atom(a) => write!(f, "{a}"),
            FullTextExpr::Not(a) => write!(f, "ftnot {a}"),
            FullTextExpr::And(cs) | FullTextExpr::Or(cs) => {
                let op = if matches!(self, FullTextExpr::And(_)) {
                    " ftand "
                } else {
                    " ftor "
                };
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    c.fmt_child(f)?;
                }
                Ok(())
            }
        }
    }
}

/// One conjunct of a filter's disjunctive normal form.
///
/// `positive_words` is the sorted union of the words of every positive atom;
/// it is what the trie forest indexes. Phrase and proximity atoms are kept in
/// `positional` for verification after the trie walk.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConjunctiveClause {
    pub id: u32,
    positive_words: Vec<Word>,
    positional: Vec<Atom>,
    negative: Vec<Atom>,
}

impl ConjunctiveClause {
    /// Builds a clause from its positive and negated atoms.
    pub fn from_atoms(
        id: u32,
        positive: impl IntoIterator<Item = Atom>,
        negative: impl IntoIterator<Item = Atom>,
    ) -> Result<Self, DnfError> {
        let mut words = BTreeSet::new();
        let mut positional = BTreeSet::new();
        for atom in positive {
            words.extend(atom.words().iter().cloned());
            if atom.is_positional() {
                positional.insert(atom);
            }
        }
        if words.is_empty() {
            return Err(DnfError::PurelyNegativeClause);
        }
        let clause = ConjunctiveClause {
            id,
            positive_words: words.into_iter().collect(),
            positional: positional.into_iter().collect(),
            negative: negative.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
        };
        debug_assert!(clause
            .positional
            .iter()
            .flat_map(|a| a.words())
            .all(|w| clause.positive_words.binary_search(w).is_ok()));
        Ok(clause)
    }

    pub fn positive_words(&self) -> &[Word] {
        &self.positive_words
    }

    pub fn positional_atoms(&self) -> &[Atom] {
        &self.positional
    }

    pub fn negative_atoms(&self) -> &[Atom] {
        &self.negative
    }

    /// True when the clause is decided by its keyword set alone.
    pub fn is_keyword_only(&self) -> bool {
        self.positional.is_empty() && self.negative.is_empty()
    }

    fn content_key(&self) -> (&[Word], &[Atom], &[Atom]) {
        (&self.positive_words, &self.positional, &self.negative)
    }

    /// Checks everything except the positive keyword set: positional atoms
    /// must hold and negated atoms must not.
    pub fn verify_atoms(&self, ix: &TokenIndex<'_>) -> bool {
        self.positional.iter().all(|a| a.holds(ix)) && !self.negative.iter().any(|a| a.holds(ix))
    }

    pub fn eval_indexed(&self, ix: &TokenIndex<'_>) -> bool {
        self.positive_words.iter().all(|w| ix.contains(w)) && self.verify_atoms(ix)
    }
}

/// Evaluates a clause against a token stream.
pub fn eval_clause(clause: &ConjunctiveClause, ts: &TokenStream) -> bool {
    clause.eval_indexed(&TokenIndex::new(ts))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DnfError {
    #[error("a clause of the full-text expression has no positive keyword")]
    PurelyNegativeClause,
    #[error("full-text expression expands to more than {cap} clauses")]
    ClauseExplosion { cap: usize },
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Conjunct {
    positive: BTreeSet<Atom>,
    negative: BTreeSet<Atom>,
}

/// Distributes `ftand` over `ftor`. Clauses with identical content are
/// merged; the result is sorted by content and ids are assigned in order.
pub fn to_dnf(expr: &FullTextExpr, cap: usize) -> Result<Vec<ConjunctiveClause>, DnfError> {
    let conjuncts = expand(expr, cap)?;
    let mut clauses = Vec::with_capacity(conjuncts.len());
    for c in conjuncts {
        clauses.push(ConjunctiveClause::from_atoms(0, c.positive, c.negative)?);
    }
    clauses.sort_by(|a, b| a.content_key().cmp(&b.content_key()));
    clauses.dedup_by(|a, b| a.content_key() == b.content_key());
    for (i, c) in clauses.iter_mut().enumerate() {
        c.id = i as u32;
    }
    Ok(clauses)
}

fn expand(expr: &FullTextExpr, cap: usize) -> Result<BTreeSet<Conjunct>, DnfError> {
    let out = match expr {
        FullTextExpr::Atom(a) => BTreeSet::from([Conjunct {
            positive: BTreeSet::from([a.clone()]),
            negative: BTreeSet::new(),
        }]),
        FullTextExpr::Not(a) => BTreeSet::from([Conjunct {
            positive: BTreeSet::new(),
            negative: BTreeSet::from([a.clone()]),
        }]),
        FullTextExpr::Or(children) => {
            let mut acc = BTreeSet::new();
            for c in children {
                acc.extend(expand(c, cap)?);
                if acc.len() > cap {
                    return Err(DnfError::ClauseExplosion { cap });
                }
            }
            acc
        }
        FullTextExpr::And(children) => {
            let mut acc = BTreeSet::from([Conjunct {
                positive: BTreeSet::new(),
                negative: BTreeSet::new(),
            }]);
            for c in children {
                let rhs = expand(c, cap)?;
                let mut next = BTreeSet::new();
                for l in &acc {
                    for r in &rhs {
                        let mut merged = l.clone();
                        merged.positive.extend(r.positive.iter().cloned());
                        merged.negative.extend(r.negative.iter().cloned());
                        next.insert(merged);
                        if next.len() > cap {
                            return Err(DnfError::ClauseExplosion { cap });
                        }
                    }
                }
                acc = next;
            }
            acc
        }
    };
    if out.len() > cap {
        return Err(DnfError::ClauseExplosion { cap });
    }
    Ok(out)
}

/// Word → positions view of a token stream, built once per literal.
#[derive(Debug)]
pub struct TokenIndex<'a> {
    stream: &'a TokenStream,
    positions: FxHashMap<&'a str, Vec<u32>>,
}

impl<'a> TokenIndex<'a> {
    pub fn new(stream: &'a TokenStream) -> Self {
        let mut positions: FxHashMap<&str, Vec<u32>> = FxHashMap::default();
        for t in stream.tokens() {
            positions.entry(t.word.as_str()).or_default().push(t.position);
        }
        TokenIndex { stream, positions }
    }

    pub fn stream(&self) -> &'a TokenStream {
        self.stream
    }

    pub fn contains(&self, word: &str) -> bool {
        self.positions.contains_key(word)
    }

    pub fn positions(&self, word: &str) -> &[u32] {
        self.positions.get(word).map_or(&[], Vec::as_slice)
    }

    /// Distinct words, in no particular order.
    pub fn distinct_words(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.positions.keys().copied()
    }

    pub fn distinct_len(&self) -> usize {
        self.positions.len()
    }

    fn word_at(&self, pos: u32) -> Option<&'a str> {
        self.stream.tokens().get(pos as usize).map(|t| t.word.as_str())
    }
}

fn phrase_holds(words: &[Word], ix: &TokenIndex<'_>) -> bool {
    let Some((first, rest)) = words.split_first() else {
        return true;
    };
    ix.positions(first).iter().any(|&start| {
        rest.iter()
            .enumerate()
            .all(|(j, w)| ix.word_at(start + 1 + j as u32) == Some(&**w))
    })
}

/// Tracks, for every subset of list slots already filled, the latest
/// position at which that subset can end. A later end dominates an earlier
/// one because every future occurrence is further right.
fn near_holds(k: u32, words: &[Word], ix: &TokenIndex<'_>) -> bool {
    let m = words.len();
    if m == 0 {
        return true;
    }
    debug_assert!(m <= 16);
    let mut occurrences: Vec<(u32, &str)> = Vec::new();
    let mut distinct: Vec<&str> = words.iter().map(|w| &**w).collect();
    distinct.sort_unstable();
    distinct.dedup();
    for w in &distinct {
        let ps = ix.positions(w);
        if ps.is_empty() {
            return false;
        }
        occurrences.extend(ps.iter().map(|&p| (p, *w)));
    }
    occurrences.sort_unstable();

    let full = (1usize << m) - 1;
    let mut best_end: Vec<Option<u32>> = vec![None; 1 << m];
    for &(pos, word) in &occurrences {
        for mask in (0..full).rev() {
            let reachable = if mask == 0 {
                true
            } else {
                matches!(best_end[mask], Some(end) if pos - end <= k)
            };
            if !reachable {
                continue;
            }
            for (slot, w) in words.iter().enumerate() {
                let bit = 1 << slot;
                if mask & bit == 0 && &**w == word {
                    best_end[mask | bit] = Some(pos);
                }
            }
        }
        if best_end[full].is_some() {
            return true;
        }
    }
    false
}
