//! Continuous subscriptions: a SPARQL basic graph pattern with optional
//! `ftcontains` full-text filters on object variables.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::rdf::{Iri, Term};

pub mod fulltext;
mod parser;

pub use fulltext::{
    eval_clause, to_dnf, Atom, ConjunctiveClause, DnfError, FullTextExpr, TokenIndex, Word,
    DEFAULT_DNF_CAP,
};
pub use parser::{
    parse_subscription, parse_subscription_with, split_subscription_blocks, ParseOptions,
    SubscriptionParser, DEFAULT_NAMESPACE, RDF_NS,
};

/// Most patterns (and filters) one subscription may have; chain state is a
/// 64-bit mask.
pub const MAX_PATTERNS: usize = 64;

/// A query variable, stored without the leading `?`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: impl Into<Arc<str>>) -> Option<Self> {
        let name = name.into();
        let mut chars = name.chars();
        let valid = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        valid.then_some(Var(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PatternTerm {
    Var(Var),
    Const(Term),
}

impl PatternTerm {
    pub fn var(&self) -> Option<&Var> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Const(_) => None,
        }
    }

    pub fn constant(&self) -> Option<&Term> {
        match self {
            PatternTerm::Const(t) => Some(t),
            PatternTerm::Var(_) => None,
        }
    }

    pub fn constant_iri(&self) -> Option<&Iri> {
        self.constant().and_then(Term::as_iri)
    }
}

impl From<Var> for PatternTerm {
    fn from(v: Var) -> Self {
        PatternTerm::Var(v)
    }
}

impl From<Iri> for PatternTerm {
    fn from(i: Iri) -> Self {
        PatternTerm::Const(Term::Iri(i))
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => write!(f, "{v}"),
            PatternTerm::Const(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(
        subject: impl Into<PatternTerm>,
        predicate: impl Into<PatternTerm>,
        object: impl Into<PatternTerm>,
    ) -> Self {
        TriplePattern {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }

    pub fn slots(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.slots().into_iter().filter_map(PatternTerm::var)
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// `ftcontains(?var, expr)` together with the clauses `expr` normalizes to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FtFilter {
    pub var: Var,
    pub expr: FullTextExpr,
    pub clauses: Vec<Arc<ConjunctiveClause>>,
}

/// A validated continuous query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subscription {
    select: Vec<Var>,
    patterns: Vec<TriplePattern>,
    filters: Vec<FtFilter>,
    vars: Vec<Var>,
    /// Per pattern, the index into `vars` of each slot ([`CONST_SLOT`] for
    /// constants).
    var_slots: Vec<[u8; 3]>,
    select_slots: Vec<u8>,
}

/// Marks a constant position in [`Subscription::var_slots`].
pub const CONST_SLOT: u8 = u8::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubscriptionError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("ftcontains variable ?{0} is not the object of any triple pattern")]
    FilterVarNotObject(String),
    #[error("selected variable ?{0} does not occur in any triple pattern")]
    UnboundSelectVar(String),
    #[error("triple patterns do not form a connected graph")]
    DisconnectedPattern,
    #[error("subscription has more than {MAX_PATTERNS} patterns or filters")]
    TooLarge,
    #[error(transparent)]
    Dnf(#[from] DnfError),
}

impl Subscription {
    /// Validates the parts of a subscription and normalizes every filter.
    pub fn new(
        mut select: Vec<Var>,
        mut patterns: Vec<TriplePattern>,
        filters: Vec<(Var, FullTextExpr)>,
        dnf_cap: usize,
    ) -> Result<Self, SubscriptionError> {
        if patterns.is_empty() {
            return Err(SubscriptionError::Syntax {
                offset: 0,
                message: "at least one triple pattern is required".into(),
            });
        }
        if patterns.len() > MAX_PATTERNS || filters.len() > MAX_PATTERNS {
            return Err(SubscriptionError::TooLarge);
        }
        if select.is_empty() {
            return Err(SubscriptionError::Syntax {
                offset: 0,
                message: "at least one selected variable is required".into(),
            });
        }
        for v in &select {
            if !patterns.iter().any(|p| p.vars().any(|pv| pv == v)) {
                return Err(SubscriptionError::UnboundSelectVar(v.name().to_string()));
            }
        }
        for (v, _) in &filters {
            if !patterns.iter().any(|p| p.object.var() == Some(v)) {
                return Err(SubscriptionError::FilterVarNotObject(v.name().to_string()));
            }
        }
        if !is_connected(&patterns) {
            return Err(SubscriptionError::DisconnectedPattern);
        }
        select.shrink_to_fit();
        patterns.shrink_to_fit();
        let filters = filters
            .into_iter()
            .map(|(var, expr)| {
                let clauses = to_dnf(&expr, dnf_cap)?.into_iter().map(Arc::new).collect();
                Ok(FtFilter { var, expr, clauses })
            })
            .collect::<Result<Vec<_>, DnfError>>()?;
        let mut vars: Vec<Var> = Vec::new();
        for v in patterns.iter().flat_map(TriplePattern::vars) {
            if !vars.contains(v) {
                vars.push(v.clone());
            }
        }
        let slot = |t: &PatternTerm| match t.var() {
            Some(v) => vars.iter().position(|x| x == v).expect("collected variable") as u8,
            None => CONST_SLOT,
        };
        let var_slots = patterns
            .iter()
            .map(|p| [slot(&p.subject), slot(&p.predicate), slot(&p.object)])
            .collect();
        let select_slots = select
            .iter()
            .map(|v| vars.iter().position(|x| x == v).expect("bound select variable") as u8)
            .collect();
        Ok(Subscription {
            select,
            patterns,
            filters,
            vars,
            var_slots,
            select_slots,
        })
    }

    pub fn select_vars(&self) -> &[Var] {
        &self.select
    }

    pub fn patterns(&self) -> &[TriplePattern] {
        &self.patterns
    }

    pub fn filters(&self) -> &[FtFilter] {
        &self.filters
    }

    pub fn clause_count(&self) -> usize {
        self.filters.iter().map(|f| f.clauses.len()).sum()
    }

    /// Every variable of the subscription, in first-occurrence order.
    pub fn variables(&self) -> &[Var] {
        &self.vars
    }

    pub fn var_slots(&self) -> &[[u8; 3]] {
        &self.var_slots
    }

    /// Indexes into [`variables`](Self::variables) of the selected variables.
    pub fn select_slots(&self) -> &[u8] {
        &self.select_slots
    }

    /// Indexes of the filters on `var`.
    pub fn filters_on<'a>(&'a self, var: &'a Var) -> impl Iterator<Item = usize> + 'a {
        self.filters
            .iter()
            .enumerate()
            .filter(move |(_, f)| &f.var == var)
            .map(|(i, _)| i)
    }
}

impl fmt::Display for Subscription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT")?;
        for v in &self.select {
            write!(f, " {v}")?;
        }
        f.write_str(" WHERE {\n")?;
        for p in &self.patterns {
            writeln!(f, "  {p} .")?;
        }
        for flt in &self.filters {
            writeln!(f, "  FILTER ftcontains({}, {})", flt.var, flt.expr)?;
        }
        f.write_str("}")
    }
}

fn is_connected(patterns: &[TriplePattern]) -> bool {
    let n = patterns.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if patterns[i].vars().any(|v| patterns[j].vars().any(|w| w == v)) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let root = find(&mut parent, 0);
    (0..n).all(|i| find(&mut parent, i) == root)
}
