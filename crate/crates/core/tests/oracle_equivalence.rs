mod common;

use common::*;
use ftps::reorg::ReorgPolicy;
use ftps::{EngineError, IndexMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(seed: u64, n_subs: usize, n_docs: usize, max_tokens: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng, n_subs, n_docs, max_tokens);
    let mut reference = None;
    for mode in IndexMode::ALL {
        let run = run_engine(&inst, mode, ReorgPolicy::EveryK(7), Some(n_docs / 2));
        assert_eq!(run.audit_violations, 0, "seed {seed} {mode}");
        for e in &run.rejected {
            assert!(
                matches!(e, EngineError::IndexingConflict(_) | EngineError::Subscription(_)),
                "seed {seed}: {e}"
            );
        }
        let expected = oracle_notifications(&run.accepted, &inst.docs);
        if run.notifications != expected {
            let missing: Vec<_> = expected.iter().filter(|n| !run.notifications.contains(n)).take(3).collect();
            let extra: Vec<_> = run.notifications.iter().filter(|n| !expected.contains(n)).take(3).collect();
            let sub = missing.first().or(extra.first()).map(|n| n.sub);
            let text = sub.and_then(|s| {
                let i = run.accepted.iter().position(|(id, _)| *id == s)?;
                let g = &run.accepted[i].1;
                inst.subs.iter().find(|(_, h)| std::ptr::eq(h, g) || format!("{h:?}") == format!("{g:?}")).map(|(t, _)| t.clone())
            });
            panic!(
                "seed {seed} {mode}: {} vs {} notifications\nmissing {missing:#?}\nextra {extra:#?}\n{}",
                run.notifications.len(),
                expected.len(),
                text.unwrap_or_default()
            );
        }
        match &reference {
            None => reference = Some(run.notifications),
            Some(r) => assert_eq!(r, &run.notifications, "seed {seed} {mode}"),
        }
    }
}

#[test]
fn small_instances_match_oracle() {
    for seed in 0..60 {
        check(seed, 40, 30, 40);
    }
}

#[test]
fn medium_instances_match_oracle() {
    for seed in 100..106 {
        check(seed, 300, 120, 300);
    }
}

#[test]
fn generated_instances_produce_matches() {
    let mut total = 0;
    let mut accepted = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 40, 30, 40);
        let run = run_engine(&inst, IndexMode::Metrics, ReorgPolicy::ExplicitOnly, None);
        total += run.notifications.len();
        accepted += run.accepted.len();
    }
    assert!(total > 100, "{total}");
    assert!(accepted > 20 * 40 / 2, "{accepted}");
}
