#![allow(dead_code)]

#[path = "../../../core/tests/support/mod.rs"]
pub mod support;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use chrono::{TimeZone, Utc};
use demfeed::feed::{build_all, FeedParams};
use demfeed::Condition;
use demfeed_service::{AssignmentPolicy, EventInput, EventKind, Experiment, FeedSet, Session, Store};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOKEN: &str = "admin-secret";

pub fn feeds() -> FeedSet {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let inputs = support::random_inputs(&mut rng, 200, FeedParams::default());
    FeedSet::new(build_all(&inputs).unwrap(), inputs.posts)
}

pub fn experiment(dir: &Path, policy: AssignmentPolicy) -> Experiment {
    Experiment::new(feeds(), Store::open(dir, 0).unwrap(), policy, Some(TOKEN.into())).unwrap()
}

/// Create sessions until one lands in `condition` (block mode needs at most 7).
pub fn session_in(exp: &Experiment, condition: Condition, tag: &str) -> Session {
    for i in 0..70 {
        let s = exp.create_session(&format!("{tag}-{i}")).unwrap();
        if s.condition == condition {
            return s;
        }
    }
    panic!("no {condition} session after 70 tries");
}

pub fn event(seq: u64, kind: EventKind, post_id: Option<&str>, value: Option<i64>, ms: i64) -> EventInput {
    EventInput {
        post_id: post_id.map(str::to_string),
        kind,
        value,
        client_ts: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap() + chrono::Duration::milliseconds(ms),
        seq,
    }
}

/// Readers hammer a content_warning feed while reveals land in random order;
/// warned text must only appear once its reveal was sent, and never vanish.
pub fn withholding_under_concurrency(iterations: u64) {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment(dir.path(), AssignmentPolicy::default());
    for it in 0..iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(it);
        let s = session_in(&exp, Condition::ContentWarning, &format!("c{it}"));
        let warned: Vec<String> = exp
            .get_feed(&s.session_id)
            .unwrap()
            .slots
            .iter()
            .filter(|x| x.warned)
            .map(|x| x.post_id.clone())
            .collect();
        let mut to_reveal = warned.clone();
        to_reveal.shuffle(&mut rng);
        to_reveal.truncate(rng.random_range(0..=warned.len()));
        let sent: Mutex<BTreeSet<String>> = Mutex::new(BTreeSet::new());
        let done = AtomicBool::new(false);
        let readers = rng.random_range(2..6);
        let delays: Vec<u64> = (0..to_reveal.len()).map(|_| rng.random_range(0..200)).collect();
        std::thread::scope(|scope| {
            for _ in 0..readers {
                scope.spawn(|| {
                    let mut shown = BTreeSet::new();
                    while !done.load(Ordering::SeqCst) {
                        let view = exp.get_feed(&s.session_id).unwrap();
                        for slot in view.slots.iter().filter(|x| x.warned) {
                            if !slot.text.is_empty() {
                                assert!(sent.lock().unwrap().contains(&slot.post_id), "text served before reveal");
                                shown.insert(slot.post_id.clone());
                            } else {
                                assert!(!shown.contains(&slot.post_id), "revealed text withdrawn");
                            }
                        }
                    }
                });
            }
            for (i, (post, delay)) in to_reveal.iter().zip(&delays).enumerate() {
                std::thread::sleep(std::time::Duration::from_micros(*delay));
                sent.lock().unwrap().insert(post.clone());
                let ack = exp
                    .record_events(&s.session_id, vec![event(i as u64 + 1, EventKind::WarningReveal, Some(post), None, 0)])
                    .unwrap();
                assert_eq!(ack.accepted, 1);
            }
            done.store(true, Ordering::SeqCst);
        });
        let view = exp.get_feed(&s.session_id).unwrap();
        for slot in view.slots.iter().filter(|x| x.warned) {
            assert_eq!(slot.text.is_empty(), !to_reveal.contains(&slot.post_id));
        }
    }
}
