//! A line-oriented N-Triples subset reader and writer.
//!
//! Each non-blank, non-comment line is `<s> <p> <o> .` or `<s> <p> "lit"[^^<dt>|@lang] .`.
//! Document files group triples under `# doc <id>` header lines.

use std::fmt::Write as _;

use rustc_hash::FxHashSet;
use thiserror::Error;

use super::{Document, Iri, Literal, Term, Triple};

/// Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NtError {
    #[error("line {0}: malformed N-Triples statement")]
    MalformedLine(usize),
    #[error("line {0}: empty or invalid IRI")]
    BadIri(usize),
    #[error("line {line}: duplicate document id {id:?}")]
    DuplicateDocument { id: String, line: usize },
}

const DOC_HEADER: &str = "# doc ";
const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";

/// Parses a single document. Duplicate triples keep their first occurrence.
pub fn parse_ntriples(doc_id: &str, text: &str) -> Result<Document, NtError> {
    let mut triples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(t) = parse_line(line, i + 1)? {
            triples.push(t);
        }
    }
    Ok(Document::new(doc_id, triples))
}

/// Parses a multi-document file. Triples before the first `# doc <id>`
/// header belong to a document named `doc0`.
pub fn parse_documents(text: &str) -> Result<Vec<Document>, NtError> {
    let mut docs = Vec::new();
    let mut seen_ids = FxHashSet::default();
    let mut current_id: Option<String> = None;
    let mut current: Vec<Triple> = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(id) = line.trim_start().strip_prefix(DOC_HEADER) {
            let id = id.trim().to_string();
            if id.is_empty() {
                return Err(NtError::MalformedLine(lineno));
            }
            if current_id.is_some() || !current.is_empty() {
                let prev = current_id.take().unwrap_or_else(|| "doc0".to_string());
                docs.push(Document::new(prev, std::mem::take(&mut current)));
            }
            if !seen_ids.insert(id.clone()) {
                return Err(NtError::DuplicateDocument { id, line: lineno });
            }
            current_id = Some(id);
            continue;
        }
        if let Some(t) = parse_line(line, lineno)? {
            current.push(t);
        }
    }
    if current_id.is_some() || !current.is_empty() {
        let last = current_id.unwrap_or_else(|| "doc0".to_string());
        docs.push(Document::new(last, current));
    }
    Ok(docs)
}

/// Reads an abstracts dump (one `<resource> <abstract-property> "text"@lang .`
/// statement per resource) into one document per run of identical subjects.
/// The subject IRI becomes the document id.
pub fn parse_documents_by_subject(text: &str) -> Result<Vec<Document>, NtError> {
    let mut docs = Vec::new();
    let mut seen_ids = FxHashSet::default();
    let mut run: Vec<Triple> = Vec::new();
    let mut flush = |run: &mut Vec<Triple>, docs: &mut Vec<Document>, line: usize| {
        if let Some(first) = run.first() {
            let id = first.subject.as_str().to_string();
            if !seen_ids.insert(id.clone()) {
                return Err(NtError::DuplicateDocument { id, line });
            }
            docs.push(Document::new(id, std::mem::take(run)));
        }
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        let Some(t) = parse_line(line, i + 1)? else {
            continue;
        };
        if run.first().is_some_and(|f| f.subject != t.subject) {
            flush(&mut run, &mut docs, i + 1)?;
        }
        run.push(t);
    }
    let end = text.lines().count();
    flush(&mut run, &mut docs, end)?;
    Ok(docs)
}

/// Writes a document as a `# doc` header followed by its triples.
pub fn write_document(out: &mut String, doc: &Document) {
    let _ = writeln!(out, "{}{}", DOC_HEADER, doc.id);
    for t in doc.triples() {
        let _ = writeln!(out, "{t}");
    }
}

/// Serializes documents in the format read by [`parse_documents`].
pub fn write_documents<'a>(docs: impl IntoIterator<Item = &'a Document>) -> String {
    let mut out = String::new();
    for doc in docs {
        write_document(&mut out, doc);
    }
    out
}

/// Parses one line; `Ok(None)` for blank and comment lines.
pub fn parse_line(line: &str, lineno: usize) -> Result<Option<Triple>, NtError> {
    let mut cur = Cursor {
        rest: line,
        lineno,
    };
    cur.skip_ws();
    if cur.rest.is_empty() || cur.rest.starts_with('#') {
        return Ok(None);
    }
    let subject = cur.iri()?;
    cur.require_ws()?;
    let predicate = cur.iri()?;
    cur.require_ws()?;
    let object = if cur.rest.starts_with('"') {
        Term::Literal(cur.literal()?)
    } else {
        Term::Iri(cur.iri()?)
    };
    cur.skip_ws();
    cur.expect('.')?;
    cur.skip_ws();
    if !(cur.rest.is_empty() || cur.rest.starts_with('#')) {
        return Err(cur.malformed());
    }
    Ok(Some(Triple {
        subject,
        predicate,
        object,
    }))
}

struct Cursor<'a> {
    rest: &'a str,
    lineno: usize,
}

impl<'a> Cursor<'a> {
    fn malformed(&self) -> NtError {
        NtError::MalformedLine(self.lineno)
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t', '\r']);
    }

    fn require_ws(&mut self) -> Result<(), NtError> {
        let before = self.rest.len();
        self.skip_ws();
        if self.rest.len() == before {
            return Err(self.malformed());
        }
        Ok(())
    }

    fn expect(&mut self, c: char) -> Result<(), NtError> {
        match self.rest.strip_prefix(c) {
            Some(r) => {
                self.rest = r;
                Ok(())
            }
            None => Err(self.malformed()),
        }
    }

    fn iri(&mut self) -> Result<Iri, NtError> {
        if self.rest.starts_with("_:") {
            return Err(NtError::BadIri(self.lineno));
        }
        self.expect('<')?;
        let end = self.rest.find('>').ok_or_else(|| self.malformed())?;
        let value = &self.rest[..end];
        self.rest = &self.rest[end + 1..];
        Iri::new(value).ok_or(NtError::BadIri(self.lineno))
    }

    fn literal(&mut self) -> Result<Literal, NtError> {
        self.expect('"')?;
        let mut lexical = String::new();
        let mut chars = self.rest.char_indices();
        let end = loop {
            let Some((i, c)) = chars.next() else {
                return Err(self.malformed());
            };
            match c {
                '"' => break i,
                '\\' => {
                    let (_, e) = chars.next().ok_or_else(|| self.malformed())?;
                    match e {
                        '"' => lexical.push('"'),
                        '\\' => lexical.push('\\'),
                        'n' => lexical.push('\n'),
                        't' => lexical.push('\t'),
                        'r' => lexical.push('\r'),
                        '\'' => lexical.push('\''),
                        'u' | 'U' => {
                            let len = if e == 'u' { 4 } else { 8 };
                            let mut hex = String::with_capacity(len);
                            for _ in 0..len {
                                let (_, h) = chars.next().ok_or_else(|| self.malformed())?;
                                hex.push(h);
                            }
                            let code =
                                u32::from_str_radix(&hex, 16).map_err(|_| self.malformed())?;
                            lexical.push(char::from_u32(code).ok_or_else(|| self.malformed())?);
                        }
                        _ => return Err(self.malformed()),
                    }
                }
                c => lexical.push(c),
            }
        };
        self.rest = &self.rest[end + 1..];

        if let Some(r) = self.rest.strip_prefix("^^") {
            self.rest = r;
            let dt = self.iri()?;
            // xsd:string is the implicit type of a plain literal.
            if dt.as_str() == XSD_STRING {
                return Ok(Literal::untyped(lexical));
            }
            return Ok(Literal::typed(lexical, dt));
        }
        if let Some(r) = self.rest.strip_prefix('@') {
            let len = r
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                .unwrap_or(r.len());
            if len == 0 {
                return Err(self.malformed());
            }
            self.rest = &r[len..];
        }
        Ok(Literal::untyped(lexical))
    }
}
