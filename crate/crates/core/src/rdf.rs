//! RDF value types shared by every other module: IRIs, literals, triples,
//! documents, plus the literal tokenizer used by full-text matching.

use std::fmt;
use std::sync::Arc;

use rustc_hash::FxHashSet;

pub mod ntriples;

/// An absolute IRI. Compared by exact string equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Iri(Arc<str>);

impl Iri {
    /// Builds an IRI, rejecting empty values and values containing whitespace.
    pub fn new(value: impl Into<Arc<str>>) -> Option<Self> {
        let value = value.into();
        if value.is_empty() || value.chars().any(char::is_whitespace) {
            return None;
        }
        Some(Iri(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

/// A typed or untyped string literal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    lexical: Arc<str>,
    datatype: Option<Iri>,
}

impl Literal {
    pub fn untyped(lexical: impl Into<Arc<str>>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: None,
        }
    }

    pub fn typed(lexical: impl Into<Arc<str>>, datatype: Iri) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: Some(datatype),
        }
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> Option<&Iri> {
        self.datatype.as_ref()
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("\"")?;
        for c in self.lexical.chars() {
            match c {
                '"' => f.write_str("\\\"")?,
                '\\' => f.write_str("\\\\")?,
                '\n' => f.write_str("\\n")?,
                '\r' => f.write_str("\\r")?,
                '\t' => f.write_str("\\t")?,
                c => write!(f, "{c}")?,
            }
        }
        f.write_str("\"")?;
        if let Some(dt) = &self.datatype {
            write!(f, "^^{dt}")?;
        }
        Ok(())
    }
}

/// Object-position value: an IRI or a literal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(lit) => Some(lit),
            Term::Iri(_) => None,
        }
    }

    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            Term::Literal(_) => None,
        }
    }
}

impl From<Iri> for Term {
    fn from(iri: Iri) -> Self {
        Term::Iri(iri)
    }
}

impl From<Literal> for Term {
    fn from(lit: Literal) -> Self {
        Term::Literal(lit)
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => fmt::Display::fmt(iri, f),
            Term::Literal(lit) => fmt::Display::fmt(lit, f),
        }
    }
}

/// An RDF statement. Subject and predicate are always IRIs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Term>) -> Self {
        Triple {
            subject,
            predicate,
            object: object.into(),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// A published unit: an id plus its set of triples, in first-seen order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    triples: Vec<Triple>,
}

impl Document {
    /// Builds a document, dropping repeated triples (first occurrence kept).
    pub fn new(id: impl Into<String>, triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut seen = FxHashSet::default();
        let mut kept = Vec::new();
        for t in triples {
            if seen.insert(t.clone()) {
                kept.push(t);
            }
        }
        Document {
            id: id.into(),
            triples: kept,
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// One token of a literal: a lowercase alphanumeric word and its ordinal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub word: String,
    pub position: u32,
}

/// The tokenized form of a literal.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenStream {
    tokens: Vec<Token>,
}

impl TokenStream {
    /// Builds a stream from already-normalized words, assigning positions 0, 1, 2, ...
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens = words
            .into_iter()
            .enumerate()
            .map(|(i, w)| Token {
                word: w.into(),
                position: i as u32,
            })
            .collect();
        TokenStream { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.word.as_str())
    }

    /// Distinct words of the stream.
    pub fn word_set(&self) -> FxHashSet<&str> {
        self.words().collect()
    }
}

/// Splits text on every maximal run of non-alphanumeric characters and
/// lowercases each character with its single-character lowercase mapping.
pub fn tokenize_str(text: &str) -> TokenStream {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<Token>| {
        if !current.is_empty() {
            let position = tokens.len() as u32;
            tokens.push(Token {
                word: std::mem::take(current),
                position,
            });
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            // Only U+0130 has a multi-character lowercase form; its simple
            // mapping is the first character of the full one.
            current.push(c.to_lowercase().next().unwrap_or(c));
        } else {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    TokenStream { tokens }
}

/// Tokenizes the lexical form of a literal. The datatype is ignored.
pub fn tokenize(lit: &Literal) -> TokenStream {
    tokenize_str(lit.lexical())
}

/// Deduplicates shared strings so that large subscription sets keep one
/// allocation per distinct IRI, variable name and keyword.
#[derive(Default, Debug)]
pub struct Interner {
    strings: FxHashSet<Arc<str>>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, s: &str) -> Arc<str> {
        if let Some(existing) = self.strings.get(s) {
            return existing.clone();
        }
        let shared: Arc<str> = Arc::from(s);
        self.strings.insert(shared.clone());
        shared
    }

    pub fn intern_iri(&mut self, iri: &Iri) -> Iri {
        Iri(self.intern(iri.as_str()))
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(ts: &TokenStream) -> Vec<(&str, u32)> {
        ts.tokens()
            .iter()
            .map(|t| (t.word.as_str(), t.position))
            .collect()
    }

    #[test]
    fn tokenize_splits_and_lowercases() {
        let ts = tokenize(&Literal::untyped("Economic CRISIS, 2008!"));
        assert_eq!(words(&ts), vec![("economic", 0), ("crisis", 1), ("2008", 2)]);
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize(&Literal::untyped("")).is_empty());
        assert!(tokenize(&Literal::untyped(" ,;! ")).is_empty());
    }

    #[test]
    fn tokenize_example_filter_words() {
        let ts = tokenize(&Literal::untyped("economic crisis"));
        assert_eq!(words(&ts), vec![("economic", 0), ("crisis", 1)]);
    }

    #[test]
    fn tokenize_unicode() {
        let ts = tokenize_str("Ärger_über  İstanbul");
        assert_eq!(
            ts.words().collect::<Vec<_>>(),
            vec!["ärger", "über", "istanbul"]
        );
        assert!(ts.words().all(|w| w.chars().all(char::is_alphanumeric)));
    }

    #[test]
    fn typed_literal_tokenizes_lexical_form() {
        let dt = Iri::new("http://www.w3.org/2001/XMLSchema#string").unwrap();
        let ts = tokenize(&Literal::typed("Deep water", dt));
        assert_eq!(ts.words().collect::<Vec<_>>(), vec!["deep", "water"]);
    }

    #[test]
    fn iri_rejects_bad_values() {
        assert!(Iri::new("").is_none());
        assert!(Iri::new("http://ex/a b").is_none());
        assert!(Iri::new("http://ex/a").is_some());
    }

    #[test]
    fn document_dedups_triples() {
        let a = Iri::new("http://ex/a").unwrap();
        let p = Iri::new("http://ex/p").unwrap();
        let t = Triple::new(a.clone(), p.clone(), Literal::untyped("x"));
        let doc = Document::new("d", vec![t.clone(), t.clone()]);
        assert_eq!(doc.triples().len(), 1);
    }

    #[test]
    fn interner_shares_allocations() {
        let mut interner = Interner::new();
        let a = interner.intern("rdf");
        let b = interner.intern("rdf");
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(interner.len(), 1);
    }

    proptest::proptest! {
        #[test]
        fn tokenize_is_idempotent_on_joined_output(text in "\\PC{0,60}") {
            let ts = tokenize_str(&text);
            let joined = ts.words().collect::<Vec<_>>().join(" ");
            let again = tokenize_str(&joined);
            proptest::prop_assert_eq!(
                ts.words().collect::<Vec<_>>(),
                again.words().collect::<Vec<_>>()
            );
            for (i, t) in ts.tokens().iter().enumerate() {
                proptest::prop_assert_eq!(t.position as usize, i);
                proptest::prop_assert!(!t.word.is_empty());
                proptest::prop_assert!(t.word.chars().all(char::is_alphanumeric));
            }
        }
    }
}
