mod common;

use demfeed::Condition;
use demfeed_service::{AssignmentPolicy, EventKind, Store};
use proptest::prelude::*;

const KINDS: [EventKind; 8] = [
    EventKind::Impression,
    EventKind::DwellMs,
    EventKind::Like,
    EventKind::Reaction,
    EventKind::ShareClick,
    EventKind::WarningReveal,
    EventKind::FeedOpened,
    EventKind::FeedClosed,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reopening_reconstructs_reveals_and_time_on_feed(
        batches in prop::collection::vec(
            prop::collection::vec((0u64..40, 0usize..8, 0usize..60, 0i64..5000), 0..8),
            1..6,
        ),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let exp = common::experiment(dir.path(), AssignmentPolicy::default());
        let s = common::session_in(&exp, Condition::ContentWarning, "p");
        let posts: Vec<String> = exp.get_feed(&s.session_id).unwrap().slots.iter().map(|x| x.post_id.clone()).collect();
        for batch in batches {
            let events = batch
                .into_iter()
                .map(|(seq, k, p, v)| {
                    let kind = KINDS[k];
                    let post = (kind != EventKind::FeedOpened && kind != EventKind::FeedClosed).then(|| posts[p].as_str());
                    common::event(seq, kind, post, Some(v), v)
                })
                .collect();
            exp.record_events(&s.session_id, events).unwrap();
        }
        let before_state = exp.store().state();
        let before_feed = exp.get_feed(&s.session_id).unwrap();
        drop(exp);

        let reopened = Store::open(dir.path(), 0).unwrap();
        let after = reopened.state();
        prop_assert_eq!(&after, &before_state);
        for (a, b) in after.iter().zip(&before_state) {
            prop_assert_eq!(a.revealed(), b.revealed());
            prop_assert_eq!(a.time_on_feed(), b.time_on_feed());
            let seqs: Vec<u64> = a.events.iter().map(|e| e.seq).collect();
            prop_assert!(seqs.windows(2).all(|w| w[0] < w[1]));
        }
        drop(reopened);
        let exp = common::experiment(dir.path(), AssignmentPolicy::default());
        prop_assert_eq!(exp.get_feed(&s.session_id).unwrap(), before_feed);
    }
}
