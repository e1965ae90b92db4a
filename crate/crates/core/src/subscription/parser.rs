//! Recursive-descent parser for
//! `SELECT ?v+ WHERE { (tp .)+ (FILTER ftcontains(?v, ftexpr))* }`.

use std::sync::Arc;

use crate::rdf::{tokenize_str, Interner, Iri, Literal, Term};

use super::fulltext::{Atom, FullTextExpr, MAX_NEAR_WORDS};
use super::{PatternTerm, Subscription, SubscriptionError, TriplePattern, Var, DEFAULT_DNF_CAP};

pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";

/// Namespace for bare names such as `publishes` when none is configured.
pub const DEFAULT_NAMESPACE: &str = "http://example.org/";

#[derive(Clone, Debug)]
pub struct ParseOptions {
    pub default_namespace: String,
    pub dnf_cap: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            default_namespace: DEFAULT_NAMESPACE.to_string(),
            dnf_cap: DEFAULT_DNF_CAP,
        }
    }
}

/// Parses one subscription with a throwaway interner.
pub fn parse_subscription(text: &str, opts: &ParseOptions) -> Result<Subscription, SubscriptionError> {
    parse_subscription_with(text, opts, &mut Interner::new())
}

pub fn parse_subscription_with(
    text: &str,
    opts: &ParseOptions,
    interner: &mut Interner,
) -> Result<Subscription, SubscriptionError> {
    let tokens = lex(text)?;
    Parser {
        tokens,
        pos: 0,
        end: text.len(),
        opts,
        interner,
    }
    .subscription()
}

/// A parser that keeps one interner across many subscriptions.
#[derive(Debug, Default)]
pub struct SubscriptionParser {
    pub options: ParseOptions,
    interner: Interner,
}

impl SubscriptionParser {
    pub fn new(options: ParseOptions) -> Self {
        SubscriptionParser {
            options,
            interner: Interner::new(),
        }
    }

    pub fn parse(&mut self, text: &str) -> Result<Subscription, SubscriptionError> {
        parse_subscription_with(text, &self.options, &mut self.interner)
    }

    pub fn interner_mut(&mut self) -> &mut Interner {
        &mut self.interner
    }
}

/// Splits a subscription file into blocks separated by blank lines. Lines
/// starting with `#` are dropped. Returns the 1-based first line of each block.
pub fn split_subscription_blocks(text: &str) -> Vec<(usize, String)> {
    let mut blocks = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            if !current.is_empty() {
                blocks.push((start, std::mem::take(&mut current)));
            }
            continue;
        }
        if current.is_empty() {
            start = i + 1;
        }
        current.push_str(line);
        current.push('\n');
    }
    if !current.is_empty() {
        blocks.push((start, current));
    }
    blocks
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Var(String),
    IriRef(String),
    Prefixed(String, String),
    Ident(String),
    Str(String),
    LangTag,
    Caret2,
    Int(u32),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Dot,
    Comma,
    Slash,
}

fn syntax(offset: usize, message: impl Into<String>) -> SubscriptionError {
    SubscriptionError::Syntax {
        offset,
        message: message.into(),
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, SubscriptionError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = text[i..].chars().next().unwrap();
        let start = i;
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '.' => Some(Tok::Dot),
            ',' => Some(Tok::Comma),
            '/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(t) = single {
            out.push((start, t));
            i += 1;
            continue;
        }
        match c {
            '?' => {
                i += 1;
                let len = text[i..].find(|c: char| !is_name_char(c)).unwrap_or(text.len() - i);
                out.push((start, Tok::Var(text[i..i + len].to_string())));
                i += len;
            }
            '<' => {
                let end = text[i..]
                    .find('>')
                    .ok_or_else(|| syntax(start, "unterminated IRI"))?;
                out.push((start, Tok::IriRef(text[i + 1..i + end].to_string())));
                i += end + 1;
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(c) = text[i..].chars().next() else {
                        return Err(syntax(start, "unterminated string"));
                    };
                    i += c.len_utf8();
                    match c {
                        '"' => break,
                        '\\' => {
                            let e = text[i..]
                                .chars()
                                .next()
                                .ok_or_else(|| syntax(start, "unterminated string"))?;
                            i += e.len_utf8();
                            s.push(match e {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                '"' => '"',
                                '\\' => '\\',
                                _ => return Err(syntax(i - 2, "unknown escape")),
                            });
                        }
                        c => s.push(c),
                    }
                }
                out.push((start, Tok::Str(s)));
            }
            '^' => {
                if text[i..].starts_with("^^") {
                    out.push((start, Tok::Caret2));
                    i += 2;
                } else {
                    return Err(syntax(start, "unexpected '^'"));
                }
            }
            '@' => {
                i += 1;
                let len = text[i..]
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                    .unwrap_or(text.len() - i);
                if len == 0 {
                    return Err(syntax(start, "empty language tag"));
                }
                out.push((start, Tok::LangTag));
                i += len;
            }
            c if c.is_ascii_digit() => {
                let len = text[i..]
                    .find(|c: char| !c.is_ascii_digit())
                    .unwrap_or(text.len() - i);
                let n = text[i..i + len]
                    .parse()
                    .map_err(|_| syntax(start, "number out of range"))?;
                out.push((start, Tok::Int(n)));
                i += len;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let len = text[i..].find(|c: char| !is_name_char(c)).unwrap_or(text.len() - i);
                let name = &text[i..i + len];
                i += len;
                if text[i..].starts_with(':') {
                    i += 1;
                    let llen = text[i..].find(|c: char| !is_name_char(c)).unwrap_or(text.len() - i);
                    out.push((start, Tok::Prefixed(name.to_string(), text[i..i + llen].to_string())));
                    i += llen;
                } else {
                    out.push((start, Tok::Ident(name.to_string())));
                }
            }
            _ => return Err(syntax(start, format!("unexpected character {c:?}"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    opts: &'a ParseOptions,
    interner: &'a mut Interner,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn err(&self, message: impl Into<String>) -> SubscriptionError {
        syntax(self.offset(), message)
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SubscriptionError> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {kw}")))
        }
    }

    fn punct(&mut self, tok: Tok, what: &str) -> Result<(), SubscriptionError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn var(&mut self) -> Result<Var, SubscriptionError> {
        let offset = self.offset();
        match self.next() {
            Some(Tok::Var(name)) => {
                let name = self.interner.intern(&name);
                Var::new(name).ok_or_else(|| syntax(offset, "invalid variable name"))
            }
            _ => Err(syntax(offset, "expected variable")),
        }
    }

    fn iri(&mut self, value: &str, offset: usize) -> Result<Iri, SubscriptionError> {
        Iri::new(self.interner.intern(value)).ok_or_else(|| syntax(offset, "invalid IRI"))
    }

    fn subscription(mut self) -> Result<Subscription, SubscriptionError> {
        self.keyword("SELECT")?;
        let mut select = Vec::new();
        while matches!(self.peek(), Some(Tok::Var(_))) {
            select.push(self.var()?);
        }
        if select.is_empty() {
            return Err(self.err("expected at least one selected variable"));
        }
        self.keyword("WHERE")?;
        self.punct(Tok::LBrace, "'{'")?;

        let mut patterns = Vec::new();
        let mut filters = Vec::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated group, expected '}'")),
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    break;
                }
                _ if self.at_keyword("FILTER") => {
                    self.pos += 1;
                    filters.push(self.filter()?);
                    if self.peek() == Some(&Tok::Dot) {
                        self.pos += 1;
                    }
                }
                _ => {
                    if !filters.is_empty() {
                        return Err(self.err("triple patterns must precede FILTER clauses"));
                    }
                    patterns.push(self.pattern()?);
                    match self.peek() {
                        Some(Tok::Dot) => self.pos += 1,
                        Some(Tok::RBrace) => {}
                        _ if self.at_keyword("FILTER") => {}
                        _ => return Err(self.err("expected '.' after triple pattern")),
                    }
                }
            }
        }
        if self.pos < self.tokens.len() {
            return Err(self.err("unexpected input after '}'"));
        }
        if patterns.is_empty() {
            return Err(syntax(self.end, "at least one triple pattern is required"));
        }
        Subscription::new(select, patterns, filters, self.opts.dnf_cap)
    }

    fn pattern(&mut self) -> Result<TriplePattern, SubscriptionError> {
        let s_off = self.offset();
        let subject = self.pattern_term()?;
        if matches!(subject, PatternTerm::Const(Term::Literal(_))) {
            return Err(syntax(s_off, "a literal cannot be a subject"));
        }
        let p_off = self.offset();
        let predicate = self.pattern_term()?;
        if matches!(predicate, PatternTerm::Const(Term::Literal(_))) {
            return Err(syntax(p_off, "a literal cannot be a predicate"));
        }
        let object = self.pattern_term()?;
        Ok(TriplePattern {
            subject,
            predicate,
            object,
        })
    }

    fn pattern_term(&mut self) -> Result<PatternTerm, SubscriptionError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Var(_)) => Ok(PatternTerm::Var(self.var()?)),
            Some(Tok::Str(s)) => {
                self.pos += 1;
                let lit = match self.peek() {
                    Some(Tok::Caret2) => {
                        self.pos += 1;
                        let dt = self.named_iri()?;
                        if dt.as_str() == XSD_STRING {
                            Literal::untyped(self.interner.intern(&s))
                        } else {
                            Literal::typed(self.interner.intern(&s), dt)
                        }
                    }
                    Some(Tok::LangTag) => {
                        self.pos += 1;
                        Literal::untyped(self.interner.intern(&s))
                    }
                    _ => Literal::untyped(self.interner.intern(&s)),
                };
                Ok(PatternTerm::Const(Term::Literal(lit)))
            }
            Some(Tok::Ident(name)) if is_reserved(&name) => {
                Err(syntax(offset, format!("unexpected keyword {name}")))
            }
            Some(_) => Ok(PatternTerm::Const(Term::Iri(self.named_iri()?))),
            None => Err(syntax(offset, "expected term")),
        }
    }

    fn named_iri(&mut self) -> Result<Iri, SubscriptionError> {
        let offset = self.offset();
        match self.next() {
            Some(Tok::IriRef(v)) => self.iri(&v, offset),
            Some(Tok::Prefixed(prefix, local)) => {
                let ns = match prefix.as_str() {
                    "rdf" => RDF_NS,
                    "rdfs" => RDFS_NS,
                    "xsd" => XSD_NS,
                    _ => return Err(syntax(offset, format!("unknown prefix {prefix}:"))),
                };
                self.iri(&format!("{ns}{local}"), offset)
            }
            Some(Tok::Ident(name)) => {
                let full = format!("{}{}", self.opts.default_namespace, name);
                self.iri(&full, offset)
            }
            _ => Err(syntax(offset, "expected IRI")),
        }
    }

    fn filter(&mut self) -> Result<(Var, FullTextExpr), SubscriptionError> {
        self.keyword("ftcontains")?;
        self.punct(Tok::LParen, "'('")?;
        let var = self.var()?;
        self.punct(Tok::Comma, "','")?;
        let expr = self.or_expr()?;
        self.punct(Tok::RParen, "')'")?;
        Ok((var, expr))
    }

    fn or_expr(&mut self) -> Result<FullTextExpr, SubscriptionError> {
        let mut terms = vec![self.and_expr()?];
        while self.at_keyword("ftor") {
            self.pos += 1;
            terms.push(self.and_expr()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            terms.shrink_to_fit();
            FullTextExpr::Or(terms)
        })
    }

    fn and_expr(&mut self) -> Result<FullTextExpr, SubscriptionError> {
        let mut terms = vec![self.unary()?];
        while self.at_keyword("ftand") {
            self.pos += 1;
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            terms.shrink_to_fit();
            FullTextExpr::And(terms)
        })
    }

    fn unary(&mut self) -> Result<FullTextExpr, SubscriptionError> {
        if self.at_keyword("ftnot") {
            self.pos += 1;
            if self.peek() == Some(&Tok::LParen) || self.at_keyword("ftnot") {
                return Err(self.err("ftnot applies to a keyword, phrase or ftnear only"));
            }
            return Ok(FullTextExpr::Not(self.atom()?));
        }
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let inner = self.or_expr()?;
            self.punct(Tok::RParen, "')'")?;
            return Ok(inner);
        }
        Ok(FullTextExpr::Atom(self.atom()?))
    }

    fn words(&mut self, s: &str) -> Vec<Arc<str>> {
        tokenize_str(s)
            .words()
            .map(|w| self.interner.intern(w))
            .collect()
    }

    fn atom(&mut self) -> Result<Atom, SubscriptionError> {
        let offset = self.offset();
        match self.next() {
            Some(Tok::Str(s)) => {
                if matches!(self.peek(), Some(Tok::Caret2 | Tok::LangTag)) {
                    return Err(self.err("full-text keywords cannot be typed"));
                }
                let mut words = self.words(&s);
                match words.len() {
                    0 => Err(syntax(offset, "keyword contains no word characters")),
                    1 => Ok(Atom::Keyword(words.pop().unwrap())),
                    _ => Ok(Atom::Phrase(words)),
                }
            }
            Some(Tok::Ident(kw)) if kw.eq_ignore_ascii_case("ftnear") => {
                self.punct(Tok::Slash, "'/' after ftnear")?;
                let k_off = self.offset();
                let k = match self.next() {
                    Some(Tok::Int(k)) if k >= 1 => k,
                    _ => return Err(syntax(k_off, "ftnear distance must be an integer >= 1")),
                };
                self.punct(Tok::LParen, "'('")?;
                let mut words = Vec::new();
                loop {
                    let w_off = self.offset();
                    let Some(Tok::Str(s)) = self.next() else {
                        return Err(syntax(w_off, "expected quoted word"));
                    };
                    let mut ws = self.words(&s);
                    if ws.len() != 1 {
                        return Err(syntax(w_off, "ftnear arguments must be single words"));
                    }
                    words.push(ws.pop().unwrap());
                    match self.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RParen) => break,
                        _ => return Err(syntax(self.offset(), "expected ',' or ')'")),
                    }
                }
                if words.len() < 2 || words.len() > MAX_NEAR_WORDS {
                    return Err(syntax(
                        offset,
                        format!("ftnear takes 2 to {MAX_NEAR_WORDS} words"),
                    ));
                }
                Ok(Atom::Near { k, words })
            }
            _ => Err(syntax(offset, "expected full-text keyword, phrase or ftnear")),
        }
    }
}

fn is_reserved(name: &str) -> bool {
    ["select", "where", "filter", "ftcontains", "ftand", "ftor", "ftnot", "ftnear"]
        .iter()
        .any(|k| name.eq_ignore_ascii_case(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subscription::DnfError;

    const EXAMPLE: &str = r#"SELECT ?article
WHERE { ?publisher rdf:type Publisher.
        ?publisher publishes ?article.
        ?article articleText ?articleText.
FILTER ftcontains(?articleText, "economic" ftand "crisis")}"#;

    fn parse(text: &str) -> Result<Subscription, SubscriptionError> {
        parse_subscription(text, &ParseOptions::default())
    }

    #[test]
    fn example_subscription() {
        let sub = parse(EXAMPLE).unwrap();
        assert_eq!(sub.patterns().len(), 3);
        assert_eq!(sub.select_vars().len(), 1);
        assert_eq!(sub.select_vars()[0].name(), "article");
        assert_eq!(sub.filters().len(), 1);
        let f = &sub.filters()[0];
        assert_eq!(f.var.name(), "articleText");
        assert_eq!(f.clauses.len(), 1);
        let words: Vec<&str> = f.clauses[0].positive_words().iter().map(|w| &**w).collect();
        assert_eq!(words, vec!["crisis", "economic"]);
        assert_eq!(
            sub.patterns()[0].predicate.constant_iri().unwrap().as_str(),
            "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
        );
        assert_eq!(
            sub.patterns()[0].object.constant_iri().unwrap().as_str(),
            "http://example.org/Publisher"
        );
    }

    #[test]
    fn default_namespace_is_configurable() {
        let opts = ParseOptions {
            default_namespace: "http://dbpedia.org/ontology/".into(),
            ..ParseOptions::default()
        };
        let sub = parse_subscription(EXAMPLE, &opts).unwrap();
        assert_eq!(
            sub.patterns()[1].predicate.constant_iri().unwrap().as_str(),
            "http://dbpedia.org/ontology/publishes"
        );
    }

    #[test]
    fn filter_on_subject_rejected() {
        let r = parse(r#"SELECT ?x WHERE { ?x <http://ex/p> "c" . FILTER ftcontains(?x, "w") }"#);
        assert_eq!(r, Err(SubscriptionError::FilterVarNotObject("x".into())));
    }

    #[test]
    fn purely_negative_filter_rejected() {
        let r = parse(r#"SELECT ?t WHERE { ?a <http://ex/title> ?t . FILTER ftcontains(?t, ftnot "war") }"#);
        assert_eq!(r, Err(SubscriptionError::Dnf(DnfError::PurelyNegativeClause)));
    }

    #[test]
    fn unbound_and_disconnected() {
        assert_eq!(
            parse("SELECT ?z WHERE { ?a <http://ex/p> ?b . }"),
            Err(SubscriptionError::UnboundSelectVar("z".into()))
        );
        assert_eq!(
            parse("SELECT ?a WHERE { ?a <http://ex/p> ?b . ?c <http://ex/p> ?d }"),
            Err(SubscriptionError::DisconnectedPattern)
        );
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let cases = [
            ("SELECT WHERE { ?a <http://ex/p> ?b }", 7),
            ("SELECT ?a WHERE { ?a <http://ex/p> }", 35),
            ("SELECT ?a WHERE { ?a <http://ex/p> ?b ?c }", 38),
            ("SELECT ?a WHERE { ?a foo:p ?b }", 21),
            ("SELECT ?a WHERE { ?a <http://ex/p> ?b } x", 40),
            (r#"SELECT ?a WHERE { ?a <http://ex/p> ?b FILTER ftcontains(?b, ftnot ("x" ftand "y")) }"#, 66),
            (r#"SELECT ?a WHERE { ?a <http://ex/p> ?b FILTER ftcontains(?b, "!!") }"#, 60),
            (r#"SELECT ?a WHERE { "s" <http://ex/p> ?a }"#, 18),
        ];
        for (text, expected) in cases {
            match parse(text) {
                Err(SubscriptionError::Syntax { offset, .. }) => {
                    assert_eq!(offset, expected, "{text}")
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn fulltext_operators() {
        let sub = parse(
            r#"SELECT ?a WHERE { ?a <http://ex/p> ?t .
               FILTER ftcontains(?t, "Oil Price" ftor ftnear/3("debt", "Default") ftand ftnot "war") }"#,
        )
        .unwrap();
        let expr = &sub.filters()[0].expr;
        assert_eq!(
            expr.to_string(),
            r#""oil price" ftor (ftnear/3("debt", "default") ftand ftnot "war")"#
        );
        assert_eq!(sub.filters()[0].clauses.len(), 2);
    }

    #[test]
    fn literal_objects_and_keywords_case_insensitive() {
        let sub = parse(
            r#"select ?a where { ?a <http://ex/p> "5"^^xsd:int . ?a <http://ex/q> "plain"@en . ?a rdfs:label "x"^^<http://www.w3.org/2001/XMLSchema#string> }"#,
        )
        .unwrap();
        let lit = sub.patterns()[0].object.constant().unwrap().as_literal().unwrap();
        assert_eq!(lit.datatype().unwrap().as_str(), "http://www.w3.org/2001/XMLSchema#int");
        let lit = sub.patterns()[2].object.constant().unwrap().as_literal().unwrap();
        assert!(lit.datatype().is_none());
    }

    #[test]
    fn printed_form_reparses() {
        let sub = parse(EXAMPLE).unwrap();
        let again = parse(&sub.to_string()).unwrap();
        assert_eq!(sub, again);
    }

    #[test]
    fn blocks_split_on_blank_lines() {
        let text = "# header\nSELECT ?a WHERE {\n ?a <http://ex/p> ?b }\n\n\n# two\nSELECT ?b WHERE { ?a <http://ex/p> ?b }\n";
        let blocks = split_subscription_blocks(text);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].0, 2);
        assert_eq!(blocks[1].0, 7);
        for (_, b) in blocks {
            parse(&b).unwrap();
        }
    }
}
