//! Filtering-time benchmark across index modes and subscription database
//! sizes.

use std::hash::{Hash, Hasher};
use std::time::Instant;

use rustc_hash::FxHasher;
use thiserror::Error;

use crate::engine::{Engine, EngineConfig, EngineError, IndexMode, Notification};
use crate::rdf::Document;

pub const CSV_HEADER: &str = "mode,db_size,avg_ms,p50_ms,p95_ms,build_ms,trie_nodes";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub mode: IndexMode,
    pub db_size: usize,
    pub avg_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub build_ms: f64,
    pub trie_nodes: usize,
}

impl BenchResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.3},{}",
            self.mode, self.db_size, self.avg_ms, self.p50_ms, self.p95_ms, self.build_ms, self.trie_nodes
        )
    }
}

pub fn to_csv(results: &[BenchResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Order-independent summary of a notification multiset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NotificationDigest {
    pub count: u64,
    sum: u64,
    square_sum: u64,
}

impl NotificationDigest {
    pub fn add(&mut self, n: &Notification) {
        let mut h = FxHasher::default();
        n.hash(&mut h);
        let x = h.finish();
        self.count += 1;
        self.sum = self.sum.wrapping_add(x);
        self.square_sum = self.square_sum.wrapping_add(x.wrapping_mul(x));
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("size {size} exceeds the {available} available subscriptions")]
    TooFewSubscriptions { size: usize, available: usize },
    #[error("subscription {index}: {error}")]
    Subscribe { index: usize, error: EngineError },
    #[error("{mode} disagrees with {reference} at size {size}: {got} vs {expected} notifications")]
    OracleMismatch {
        size: usize,
        mode: IndexMode,
        reference: IndexMode,
        got: u64,
        expected: u64,
    },
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub modes: Vec<IndexMode>,
    pub sizes: Vec<usize>,
    /// Settings shared by every mode; the mode field is overridden.
    pub engine: EngineConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            modes: IndexMode::ALL.to_vec(),
            sizes: vec![10_000, 50_000, 100_000, 500_000],
            engine: EngineConfig::default(),
        }
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// One measurement: build an engine over the first `size` subscriptions,
/// publish every document and time each publish separately.
pub fn measure(
    subs: &[String],
    docs: &[Document],
    size: usize,
    config: &EngineConfig,
) -> Result<(BenchResult, NotificationDigest), BenchError> {
    if size > subs.len() {
        return Err(BenchError::TooFewSubscriptions {
            size,
            available: subs.len(),
        });
    }
    let mut engine = Engine::new(config.clone());
    let start = Instant::now();
    for (index, text) in subs[..size].iter().enumerate() {
        engine
            .subscribe(text)
            .map_err(|error| BenchError::Subscribe { index, error })?;
    }
    let build_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut digest = NotificationDigest::default();
    let mut times = Vec::with_capacity(docs.len());
    for d in docs {
        let t = Instant::now();
        let out = engine.publish(d);
        times.push(t.elapsed().as_secs_f64() * 1e3);
        out.iter().for_each(|n| digest.add(n));
    }
    let avg_ms = if times.is_empty() {
        0.0
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    };
    times.sort_by(f64::total_cmp);
    Ok((
        BenchResult {
            mode: config.mode,
            db_size: size,
            avg_ms,
            p50_ms: percentile(&times, 50.0),
            p95_ms: percentile(&times, 95.0),
            build_ms,
            trie_nodes: engine.stats().trie_nodes,
        },
        digest,
    ))
}

/// Runs every (mode, size) pair; fails without results when two modes
/// produce different notifications for the same size.
pub fn run_benchmark(
    subs: &[String],
    docs: &[Document],
    config: &BenchConfig,
) -> Result<Vec<BenchResult>, BenchError> {
    let mut results = Vec::new();
    for &size in &config.sizes {
        let mut reference: Option<(IndexMode, NotificationDigest)> = None;
        for &mode in &config.modes {
            let cfg = EngineConfig {
                mode,
                ..config.engine.clone()
            };
            let (r, digest) = measure(subs, docs, size, &cfg)?;
            match reference {
                None => reference = Some((mode, digest)),
                Some((ref_mode, ref_digest)) if ref_digest != digest => {
                    return Err(BenchError::OracleMismatch {
                        size,
                        mode,
                        reference: ref_mode,
                        got: digest.count,
                        expected: ref_digest.count,
                    });
                }
                Some(_) => {}
            }
            results.push(r);
        }
    }
    Ok(results)
}
