//! The seven feed conditions built from a scored corpus.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{engagement_score, AnnotationColumn, Ideology, Post};

pub const DEFAULT_FEED_SIZE: usize = 60;
pub const DEFAULT_THRESHOLD: u8 = 12;
pub const DEFAULT_REPLACEMENT_CEILING: u8 = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeedError {
    #[error("invalid feed parameters: {0}")]
    InvalidParams(String),
    #[error("{condition}: need {needed} scorable posts, have {available} (short by {})", needed - available)]
    Insufficient {
        condition: Condition,
        needed: usize,
        available: usize,
    },
    #[error("ideologically_balanced: {} posts lack an ideology label: {}", .0.len(), .0.join(", "))]
    UnlabeledPosts(Vec<String>),
    #[error("ideologically_balanced: need {needed} {side:?} posts, have {available}")]
    SideExhausted {
        side: Ideology,
        needed: usize,
        available: usize,
    },
    #[error("remove_and_replace: {needed} replacements needed, pool has {available} (short by {})", needed - available)]
    ReplacementPoolExhausted { needed: usize, available: usize },
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Downranking,
    ContentWarning,
    RemoveAndReplace,
    Engagement,
    IdeologicallyBalanced,
    Chronological,
    NullControl,
}

impl Condition {
    pub const ALL: [Condition; 7] = [
        Condition::Downranking,
        Condition::ContentWarning,
        Condition::RemoveAndReplace,
        Condition::Engagement,
        Condition::IdeologicallyBalanced,
        Condition::Chronological,
        Condition::NullControl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Downranking => "downranking",
            Condition::ContentWarning => "content_warning",
            Condition::RemoveAndReplace => "remove_and_replace",
            Condition::Engagement => "engagement",
            Condition::IdeologicallyBalanced => "ideologically_balanced",
            Condition::Chronological => "chronological",
            Condition::NullControl => "null_control",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = FeedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace('-', "_");
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| FeedError::UnknownCondition(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedSlot {
    pub position: usize,
    pub post_id: String,
    pub warned: bool,
    pub replaced_from: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedFeed {
    pub condition: Condition,
    pub feed_size: usize,
    pub threshold: u8,
    pub slots: Vec<FeedSlot>,
    pub generated_at: DateTime<Utc>,
}

impl RankedFeed {
    pub fn post_ids(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.post_id.as_str())
    }

    pub fn slot_for(&self, post_id: &str) -> Option<&FeedSlot> {
        self.slots.iter().find(|s| s.post_id == post_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedParams {
    pub feed_size: usize,
    /// Totals at or above this are treated as anti-democratic.
    pub threshold: u8,
    /// Replacements must have a total at or below this.
    pub replacement_ceiling: u8,
    pub seed: u64,
}

impl Default for FeedParams {
    fn default() -> Self {
        Self {
            feed_size: DEFAULT_FEED_SIZE,
            threshold: DEFAULT_THRESHOLD,
            replacement_ceiling: DEFAULT_REPLACEMENT_CEILING,
            seed: 0,
        }
    }
}

impl FeedParams {
    pub fn validate(&self) -> Result<(), FeedError> {
        if !(9..=24).contains(&self.threshold) {
            return Err(FeedError::InvalidParams(format!(
                "threshold {} must be in (8, 24]",
                self.threshold
            )));
        }
        if self.replacement_ceiling >= self.threshold {
            return Err(FeedError::InvalidParams(format!(
                "replacement ceiling {} must be below threshold {}",
                self.replacement_ceiling, self.threshold
            )));
        }
        if self.feed_size == 0 {
            return Err(FeedError::InvalidParams("feed size must be positive".into()));
        }
        Ok(())
    }
}

/// Posts plus one rater's scores. Only posts with a score are candidates.
#[derive(Debug, Clone)]
pub struct BuildInputs {
    pub posts: Vec<Post>,
    pub scores: AnnotationColumn,
    pub params: FeedParams,
    pub generated_at: DateTime<Utc>,
}

struct Candidate<'a> {
    post: &'a Post,
    total: u8,
    engagement: u64,
}

impl BuildInputs {
    fn candidates(&self) -> Vec<Candidate<'_>> {
        let mut seen = std::collections::HashSet::new();
        self.posts
            .iter()
            .filter(|p| seen.insert(p.post_id.as_str()))
            .filter_map(|post| {
                self.scores.get(&post.post_id).map(|s| Candidate {
                    post,
                    total: s.total(),
                    engagement: engagement_score(post),
                })
            })
            .collect()
    }

    pub fn total_of(&self, post_id: &str) -> Option<u8> {
        self.scores.get(post_id).map(|s| s.total())
    }
}

fn by_engagement(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.engagement
        .cmp(&a.engagement)
        .then_with(|| a.post.post_id.cmp(&b.post.post_id))
}

fn plain_slots<'a>(ordered: impl Iterator<Item = &'a Candidate<'a>>) -> Vec<FeedSlot> {
    ordered
        .enumerate()
        .map(|(position, c)| FeedSlot {
            position,
            post_id: c.post.post_id.clone(),
            warned: false,
            replaced_from: None,
        })
        .collect()
}

pub fn build_feed(inputs: &BuildInputs, condition: Condition) -> Result<RankedFeed, FeedError> {
    let params = inputs.params;
    params.validate()?;
    let size = params.feed_size;
    let mut candidates = inputs.candidates();
    let need = |available: usize| {
        if available < size {
            Err(FeedError::Insufficient {
                condition,
                needed: size,
                available,
            })
        } else {
            Ok(())
        }
    };

    let slots = match condition {
        Condition::NullControl => Vec::new(),
        Condition::Downranking => {
            need(candidates.len())?;
            candidates.sort_by(|a, b| a.total.cmp(&b.total).then_with(|| by_engagement(a, b)));
            plain_slots(candidates.iter().take(size))
        }
        Condition::Engagement => {
            need(candidates.len())?;
            candidates.sort_by(by_engagement);
            plain_slots(candidates.iter().take(size))
        }
        Condition::Chronological => {
            need(candidates.len())?;
            candidates.sort_by(|a, b| {
                b.post
                    .posted_at
                    .cmp(&a.post.posted_at)
                    .then_with(|| a.post.post_id.cmp(&b.post.post_id))
            });
            plain_slots(candidates.iter().take(size))
        }
        Condition::ContentWarning => {
            need(candidates.len())?;
            candidates.sort_by(by_engagement);
            let mut slots = plain_slots(candidates.iter().take(size));
            for (slot, c) in slots.iter_mut().zip(&candidates) {
                slot.warned = c.total >= params.threshold;
            }
            slots
        }
        Condition::RemoveAndReplace => {
            need(candidates.len())?;
            candidates.sort_by(by_engagement);
            let (feed, rest) = candidates.split_at(size);
            let mut pool = rest.iter().filter(|c| c.total <= params.replacement_ceiling);
            let flagged = feed.iter().filter(|c| c.total >= params.threshold).count();
            let available = rest.iter().filter(|c| c.total <= params.replacement_ceiling).count();
            if available < flagged {
                return Err(FeedError::ReplacementPoolExhausted {
                    needed: flagged,
                    available,
                });
            }
            let mut slots = plain_slots(feed.iter());
            for (slot, c) in slots.iter_mut().zip(feed) {
                if c.total >= params.threshold {
                    let replacement = pool.next().expect("pool size checked");
                    slot.replaced_from = Some(std::mem::replace(&mut slot.post_id, replacement.post.post_id.clone()));
                }
            }
            slots
        }
        Condition::IdeologicallyBalanced => {
            let unlabeled: Vec<String> = candidates
                .iter()
                .filter(|c| c.post.ideology.is_none())
                .map(|c| c.post.post_id.clone())
                .collect();
            if !unlabeled.is_empty() {
                return Err(FeedError::UnlabeledPosts(unlabeled));
            }
            candidates.sort_by(by_engagement);
            let side = |label: Ideology| -> Vec<&Candidate> {
                candidates.iter().filter(|c| c.post.ideology == Some(label)).collect()
            };
            let (liberal, conservative) = (side(Ideology::Liberal), side(Ideology::Conservative));
            let liberal_first = ChaCha8Rng::seed_from_u64(params.seed).random_bool(0.5);
            let (first, second, first_label, second_label) = if liberal_first {
                (liberal, conservative, Ideology::Liberal, Ideology::Conservative)
            } else {
                (conservative, liberal, Ideology::Conservative, Ideology::Liberal)
            };
            let (n_first, n_second) = (size.div_ceil(2), size / 2);
            for (list, n, label) in [(&first, n_first, first_label), (&second, n_second, second_label)] {
                if list.len() < n {
                    return Err(FeedError::SideExhausted {
                        side: label,
                        needed: n,
                        available: list.len(),
                    });
                }
            }
            let interleaved = (0..size).map(|i| if i % 2 == 0 { first[i / 2] } else { second[i / 2] });
            plain_slots(interleaved)
        }
    };

    Ok(RankedFeed {
        condition,
        feed_size: if condition == Condition::NullControl { 0 } else { size },
        threshold: params.threshold,
        slots,
        generated_at: inputs.generated_at,
    })
}

/// Latest post timestamp, or the unix epoch for an empty inventory. Used as
/// a reproducible default for `generated_at`.
pub fn inventory_time(posts: &[Post]) -> DateTime<Utc> {
    posts.iter().map(|p| p.posted_at).max().unwrap_or(DateTime::UNIX_EPOCH)
}

/// Build every condition from the same inputs.
pub fn build_all(inputs: &BuildInputs) -> Result<Vec<RankedFeed>, FeedError> {
    Condition::ALL.iter().map(|c| build_feed(inputs, *c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub min: u8,
    pub max: u8,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotAudit {
    pub position: usize,
    pub post_id: String,
    pub total: Option<u8>,
    pub engagement: Option<u64>,
    pub posted_at: Option<DateTime<Utc>>,
    pub ideology: Option<Ideology>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionManifest {
    pub condition: Condition,
    pub feed_size: usize,
    pub threshold: u8,
    pub replacement_ceiling: u8,
    pub warned: usize,
    pub replaced: usize,
    pub scores: Option<ScoreSummary>,
    pub slots: Vec<SlotAudit>,
}

fn ordering_rule(condition: Condition) -> &'static str {
    match condition {
        Condition::Downranking => "ascending total, then engagement desc, then post_id",
        Condition::Engagement | Condition::ContentWarning | Condition::RemoveAndReplace => {
            "engagement desc, then post_id"
        }
        Condition::Chronological => "posted_at desc, then post_id",
        Condition::IdeologicallyBalanced => "alternating ideology, engagement desc within side",
        Condition::NullControl => "empty feed",
    }
}

/// Audit record for a built feed.
pub fn condition_manifest(feed: &RankedFeed, inputs: &BuildInputs) -> ConditionManifest {
    let posts: HashMap<&str, &Post> = inputs.posts.iter().map(|p| (p.post_id.as_str(), p)).collect();
    let rule = ordering_rule(feed.condition);
    let slots: Vec<SlotAudit> = feed
        .slots
        .iter()
        .map(|slot| {
            let post = posts.get(slot.post_id.as_str());
            let total = inputs.total_of(&slot.post_id);
            let mut rationale = format!(
                "{rule}; total={} engagement={}",
                total.map_or("?".into(), |t| t.to_string()),
                post.map_or("?".into(), |p| engagement_score(p).to_string())
            );
            if slot.warned {
                rationale.push_str(&format!("; warned: total >= {}", feed.threshold));
            }
            if let Some(old) = &slot.replaced_from {
                rationale.push_str(&format!(
                    "; replaces {old} (total {}) with best unused total <= {}",
                    inputs.total_of(old).map_or("?".into(), |t| t.to_string()),
                    inputs.params.replacement_ceiling
                ));
            }
            SlotAudit {
                position: slot.position,
                post_id: slot.post_id.clone(),
                total,
                engagement: post.map(|p| engagement_score(p)),
                posted_at: post.map(|p| p.posted_at),
                ideology: post.and_then(|p| p.ideology),
                rationale,
            }
        })
        .collect();
    let mut totals: Vec<u8> = slots.iter().filter_map(|s| s.total).collect();
    totals.sort_unstable();
    let scores = (!totals.is_empty()).then(|| {
        let n = totals.len();
        let median = if n % 2 == 1 {
            f64::from(totals[n / 2])
        } else {
            (f64::from(totals[n / 2 - 1]) + f64::from(totals[n / 2])) / 2.0
        };
        ScoreSummary {
            min: totals[0],
            max: totals[n - 1],
            mean: totals.iter().map(|&t| f64::from(t)).sum::<f64>() / n as f64,
            median,
        }
    });
    ConditionManifest {
        condition: feed.condition,
        feed_size: feed.feed_size,
        threshold: feed.threshold,
        replacement_ceiling: inputs.params.replacement_ceiling,
        warned: feed.slots.iter().filter(|s| s.warned).count(),
        replaced: feed.slots.iter().filter(|s| s.replaced_from.is_some()).count(),
        scores,
        slots,
    }
}
