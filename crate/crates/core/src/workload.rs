//! Synthetic subscription and document generators.
//!
//! Subscriptions follow the publisher/article shape: a typed publisher, a
//! link to an article and a full-text filter on the article text. Keywords
//! and document tokens are drawn from one Zipf-distributed pseudo-word
//! vocabulary, so the same vocabulary size gives matching corpora whatever
//! the seeds.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::rdf::ntriples::write_documents;
use crate::rdf::{Document, Iri, Literal, Triple};
use crate::subscription::{DEFAULT_NAMESPACE, RDF_NS};

pub const PUBLISHER_CLASSES: usize = 4;
pub const LINK_PREDICATES: [&str; 2] = ["publishes", "hosts"];
pub const TEXT_PREDICATE: &str = "articleText";
pub const TITLE_PREDICATE: &str = "title";
pub const ARTICLE_CLASS: &str = "Article";

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub num_subscriptions: usize,
    pub vocabulary_size: usize,
    pub zipf_skew: f64,
    pub words_per_clause: RangeInclusive<usize>,
    pub clauses_per_filter: RangeInclusive<usize>,
    pub patterns_per_subscription: RangeInclusive<usize>,
    pub tokens_per_document: RangeInclusive<usize>,
    /// Probability that a document types its article.
    pub article_type_rate: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            num_subscriptions: 10_000,
            vocabulary_size: 20_000,
            zipf_skew: 0.8,
            words_per_clause: 2..=4,
            clauses_per_filter: 1..=2,
            patterns_per_subscription: 3..=4,
            tokens_per_document: 50..=300,
            article_type_rate: 0.8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("{0} range is empty")]
    EmptyRange(&'static str),
    #[error("vocabulary must hold at least as many words as a clause")]
    VocabularyTooSmall,
    #[error("zipf skew must be finite and non-negative")]
    BadSkew,
    #[error("subscriptions have 3 or 4 patterns")]
    BadPatternCount,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let ranges = [
            ("words per clause", &self.words_per_clause),
            ("clauses per filter", &self.clauses_per_filter),
            ("patterns per subscription", &self.patterns_per_subscription),
            ("tokens per document", &self.tokens_per_document),
        ];
        for (name, r) in ranges {
            if r.is_empty() || (*r.start() == 0 && name != "tokens per document") {
                return Err(SpecError::EmptyRange(name));
            }
        }
        if self.vocabulary_size < *self.words_per_clause.end() {
            return Err(SpecError::VocabularyTooSmall);
        }
        if !self.zipf_skew.is_finite() || self.zipf_skew < 0.0 {
            return Err(SpecError::BadSkew);
        }
        if *self.patterns_per_subscription.start() < 3 || *self.patterns_per_subscription.end() > 4 {
            return Err(SpecError::BadPatternCount);
        }
        Ok(())
    }
}

/// The pseudo-word for vocabulary index `i`: consonant-vowel syllables,
/// at least two.
fn syllable_word(mut i: usize) -> String {
    const C: &[u8] = b"bcdfghjklmnprstvz";
    const V: &[u8] = b"aeiou";
    let base = C.len() * V.len();
    let mut syl = Vec::new();
    loop {
        syl.push(i % base);
        i /= base;
        if i == 0 {
            break;
        }
    }
    while syl.len() < 2 {
        syl.push(0);
    }
    syl.iter()
        .rev()
        .flat_map(|&s| [C[s / V.len()] as char, V[s % V.len()] as char])
        .collect()
}

/// Words ordered by popularity rank; a fixed shuffle decouples rank from
/// lexicographic order.
pub fn vocabulary(size: usize) -> Vec<String> {
    let mut words: Vec<String> = (0..size).map(syllable_word).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x766f_6361_6200 ^ size as u64);
    words.shuffle(&mut rng);
    words
}

struct Sampler {
    words: Vec<String>,
    zipf: Zipf<f64>,
}

impl Sampler {
    fn new(spec: &WorkloadSpec) -> Self {
        Sampler {
            words: vocabulary(spec.vocabulary_size),
            zipf: Zipf::new(spec.vocabulary_size as f64, spec.zipf_skew).expect("valid zipf"),
        }
    }

    fn rank(&self, rng: &mut impl Rng) -> usize {
        (self.zipf.sample(rng) as usize).clamp(1, self.words.len()) - 1
    }

    fn word(&self, rng: &mut impl Rng) -> &str {
        &self.words[self.rank(rng)]
    }

    /// `k` distinct words.
    fn clause(&self, rng: &mut impl Rng, k: usize) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::with_capacity(k);
        while out.len() < k {
            let w = self.word(rng);
            if !out.contains(&w) {
                out.push(w);
            }
        }
        out
    }
}

fn ns(local: &str) -> String {
    format!("{DEFAULT_NAMESPACE}{local}")
}

fn subscription_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5355_4253)
}

fn document_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x444f_4353)
}

/// Lazily generates the subscription texts of a workload.
pub struct SubscriptionGenerator {
    spec: WorkloadSpec,
    sampler: Sampler,
    rng: ChaCha8Rng,
    remaining: usize,
}

impl SubscriptionGenerator {
    pub fn new(spec: &WorkloadSpec) -> Self {
        spec.validate().expect("valid workload spec");
        SubscriptionGenerator {
            spec: spec.clone(),
            sampler: Sampler::new(spec),
            rng: subscription_rng(spec.seed),
            remaining: spec.num_subscriptions,
        }
    }

    fn generate(&mut self) -> String {
        let (spec, sampler, rng) = (&self.spec, &self.sampler, &mut self.rng);
        let class = rng.random_range(0..PUBLISHER_CLASSES);
        let link = LINK_PREDICATES[rng.random_range(0..LINK_PREDICATES.len())];
        let patterns = rng.random_range(spec.patterns_per_subscription.clone());
        let clauses = rng.random_range(spec.clauses_per_filter.clone());
        let mut expr = String::new();
        for c in 0..clauses {
            if c > 0 {
                expr.push_str(" ftor ");
            }
            let k = rng.random_range(spec.words_per_clause.clone());
            let words = sampler.clause(rng, k);
            let conj = words
                .iter()
                .map(|w| format!("\"{w}\""))
                .collect::<Vec<_>>()
                .join(" ftand ");
            if clauses > 1 && k > 1 {
                let _ = write!(expr, "({conj})");
            } else {
                expr.push_str(&conj);
            }
        }
        let mut s = String::from("SELECT ?article WHERE {\n");
        let _ = writeln!(s, "  ?publisher rdf:type <{}> .", ns(&format!("Publisher{class}")));
        let _ = writeln!(s, "  ?publisher <{}> ?article .", ns(link));
        let _ = writeln!(s, "  ?article <{}> ?text .", ns(TEXT_PREDICATE));
        if patterns == 4 {
            let _ = writeln!(s, "  ?article rdf:type <{}> .", ns(ARTICLE_CLASS));
        }
        let _ = writeln!(s, "  FILTER ftcontains(?text, {expr})");
        s.push('}');
        s
    }
}

impl Iterator for SubscriptionGenerator {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.generate())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// One subscription text per generated subscription.
pub fn subscription_texts(spec: &WorkloadSpec) -> Vec<String> {
    SubscriptionGenerator::new(spec).collect()
}

/// The subscription file: blocks separated by blank lines.
pub fn generate_subscriptions(spec: &WorkloadSpec) -> String {
    let mut out = String::new();
    for s in subscription_texts(spec) {
        out.push_str(&s);
        out.push_str("\n\n");
    }
    out
}

fn iri(local: &str) -> Iri {
    Iri::new(ns(local)).expect("generated IRI")
}

/// `count` documents, each a typed publisher linking to one article with an
/// abstract-like text literal.
pub fn documents(count: usize, spec: &WorkloadSpec) -> Vec<Document> {
    spec.validate().expect("valid workload spec");
    let sampler = Sampler::new(spec);
    let mut rng = document_rng(spec.seed);
    let rdf_type = Iri::new(format!("{RDF_NS}type")).expect("rdf:type");
    (0..count)
        .map(|i| {
            let publisher = iri(&format!("pub{i}"));
            let article = iri(&format!("art{i}"));
            let class = rng.random_range(0..PUBLISHER_CLASSES);
            let link = LINK_PREDICATES[rng.random_range(0..LINK_PREDICATES.len())];
            let mut triples = vec![
                Triple::new(publisher.clone(), rdf_type.clone(), iri(&format!("Publisher{class}"))),
                Triple::new(publisher, iri(link), article.clone()),
            ];
            if rng.random_bool(spec.article_type_rate) {
                triples.push(Triple::new(article.clone(), rdf_type.clone(), iri(ARTICLE_CLASS)));
            }
            let n = rng.random_range(spec.tokens_per_document.clone());
            let text: Vec<&str> = (0..n).map(|_| sampler.word(&mut rng)).collect();
            triples.push(Triple::new(
                article.clone(),
                iri(TEXT_PREDICATE),
                Literal::untyped(text.join(" ")),
            ));
            if rng.random_bool(0.5) {
                let title: Vec<&str> = (0..rng.random_range(2..=6)).map(|_| sampler.word(&mut rng)).collect();
                triples.push(Triple::new(article, iri(TITLE_PREDICATE), Literal::untyped(title.join(" "))));
            }
            Document::new(format!("d{i}"), triples)
        })
        .collect()
}

/// The document file in N-Triples with `# doc` headers.
pub fn generate_documents(count: usize, spec: &WorkloadSpec) -> String {
    write_documents(&documents(count, spec))
}
