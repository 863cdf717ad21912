//! Random scored corpora and feed invariant checks shared by test targets.
#![allow(dead_code)]

use std::collections::HashSet;

use chrono::{DateTime, TimeZone, Utc};
use demfeed::corpus::engagement_score;
use demfeed::feed::{build_feed, FeedParams};
use demfeed::{AnnotationColumn, AttitudeScore, BuildInputs, Condition, EngagementCounts, Ideology, Post, Score};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixed_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap()
}

pub fn post(id: &str, text: &str, engagement: u64, posted_at: DateTime<Utc>, ideology: Option<Ideology>) -> Post {
    Post {
        post_id: id.to_string(),
        page_name: "page".into(),
        page_category: "politician".into(),
        text: text.to_string(),
        posted_at,
        engagement: EngagementCounts {
            like: engagement,
            ..Default::default()
        },
        ideology,
    }
}

/// Half the posts are mostly clean (so a replacement pool exists), half are
/// uniformly random on every variable.
pub fn random_inputs(rng: &mut ChaCha8Rng, n: usize, params: FeedParams) -> BuildInputs {
    let mut posts = Vec::with_capacity(n);
    let mut scores = AnnotationColumn::new("coder");
    for i in 0..n {
        let id = format!("p{i:04}");
        let clean = rng.random_bool(0.5);
        let raw: [Score; 8] = std::array::from_fn(|_| {
            let v = if clean {
                if rng.random_bool(0.05) { 2 } else { 1 }
            } else {
                rng.random_range(1..=3)
            };
            Score::new(v).unwrap()
        });
        scores.insert(AttitudeScore::from_scores(&id, raw, "coder"));
        let ideology = match rng.random_range(0..20) {
            0 => Ideology::Unknown,
            k if k % 2 == 0 => Ideology::Liberal,
            _ => Ideology::Conservative,
        };
        // small engagement range so ties are common
        let engagement = rng.random_range(0..400);
        let posted_at = fixed_time() - chrono::Duration::minutes(rng.random_range(0..5000));
        posts.push(post(&id, &format!("text {i}"), engagement, posted_at, Some(ideology)));
    }
    BuildInputs {
        posts,
        scores,
        params,
        generated_at: fixed_time(),
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Check every ordering property of all seven conditions on one input.
pub fn check_feed_invariants(inputs: &BuildInputs) -> Result<(), String> {
    let p = inputs.params;
    let post = |id: &str| inputs.posts.iter().find(|x| x.post_id == id).unwrap();
    let total = |id: &str| inputs.total_of(id).unwrap();
    let feed = |c: Condition| build_feed(inputs, c).map_err(|e| format!("{c}: {e}"));
    let distinct = |ids: &[&str]| ids.iter().collect::<HashSet<_>>().len() == ids.len();

    let down = feed(Condition::Downranking)?;
    let ids: Vec<&str> = down.post_ids().collect();
    ensure(ids.len() == p.feed_size && distinct(&ids), || "downranking size".into())?;
    ensure(ids.windows(2).all(|w| total(w[0]) <= total(w[1])), || "downranking totals decrease".into())?;

    let eng = feed(Condition::Engagement)?;
    let eng_ids: Vec<&str> = eng.post_ids().collect();
    ensure(eng_ids.len() == p.feed_size && distinct(&eng_ids), || "engagement size".into())?;
    ensure(
        eng_ids.windows(2).all(|w| engagement_score(post(w[0])) >= engagement_score(post(w[1]))),
        || "engagement scores increase".into(),
    )?;

    let chrono_feed = feed(Condition::Chronological)?;
    let ids: Vec<&str> = chrono_feed.post_ids().collect();
    ensure(ids.len() == p.feed_size, || "chronological size".into())?;
    ensure(ids.windows(2).all(|w| post(w[0]).posted_at >= post(w[1]).posted_at), || {
        "chronological timestamps increase".into()
    })?;

    let warn = feed(Condition::ContentWarning)?;
    ensure(warn.post_ids().eq(eng_ids.iter().copied()), || "content_warning order differs".into())?;
    ensure(warn.slots.iter().all(|s| s.warned == (total(&s.post_id) >= p.threshold)), || {
        "content_warning flags".into()
    })?;

    let rr = feed(Condition::RemoveAndReplace)?;
    let ids: Vec<&str> = rr.post_ids().collect();
    ensure(ids.len() == p.feed_size && distinct(&ids), || "remove_and_replace size".into())?;
    ensure(ids.iter().all(|id| total(id) < p.threshold), || "remove_and_replace kept a flagged post".into())?;
    for (slot, original) in rr.slots.iter().zip(&eng_ids) {
        match &slot.replaced_from {
            Some(from) => {
                ensure(from == original && total(from) >= p.threshold, || "wrong slot replaced".into())?;
                ensure(total(&slot.post_id) <= p.replacement_ceiling, || "replacement above ceiling".into())?;
                ensure(!eng_ids.contains(&slot.post_id.as_str()), || "replacement came from the feed".into())?;
            }
            None => ensure(slot.post_id == *original, || "unflagged slot moved".into())?,
        }
    }

    let bal = feed(Condition::IdeologicallyBalanced)?;
    let sides: Vec<Ideology> = bal.post_ids().map(|id| post(id).ideology.unwrap()).collect();
    ensure(sides.len() == p.feed_size, || "balanced size".into())?;
    ensure(sides.iter().all(|s| *s != Ideology::Unknown), || "balanced used an unknown label".into())?;
    ensure(sides.windows(2).all(|w| w[0] != w[1]), || "balanced does not alternate".into())?;
    let lib = sides.iter().filter(|s| **s == Ideology::Liberal).count();
    ensure(lib.abs_diff(sides.len() - lib) <= 1, || "balanced imbalance above 1".into())?;

    let null = feed(Condition::NullControl)?;
    ensure(null.slots.is_empty(), || "null_control not empty".into())?;
    Ok(())
}
