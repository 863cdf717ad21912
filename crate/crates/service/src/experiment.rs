use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use demfeed::feed::{build_feed, inventory_time, BuildInputs};
use demfeed::{AnnotationColumn, Condition, Corpus, Post, RankedFeed};
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPolicy;
use crate::config::ServiceConfig;
use crate::model::{Ack, EventInput, ExportFilter, Session};
use crate::store::{to_ndjson, Store};
use crate::ServiceError;

/// The ranked feed of every condition plus the posts they reference.
#[derive(Debug, Clone)]
pub struct FeedSet {
    feeds: BTreeMap<Condition, RankedFeed>,
    posts: HashMap<String, Post>,
}

impl FeedSet {
    pub fn new(feeds: impl IntoIterator<Item = RankedFeed>, posts: impl IntoIterator<Item = Post>) -> Self {
        Self {
            feeds: feeds.into_iter().map(|f| (f.condition, f)).collect(),
            posts: posts.into_iter().map(|p| (p.post_id.clone(), p)).collect(),
        }
    }

    /// Build all seven conditions from an inventory and a score column.
    pub fn build(
        posts: Vec<Post>,
        scores: AnnotationColumn,
        params_for: impl Fn(Condition) -> demfeed::feed::FeedParams,
        generated_at: Option<DateTime<Utc>>,
    ) -> Result<Self, ServiceError> {
        let mut inputs = BuildInputs {
            generated_at: generated_at.unwrap_or_else(|| inventory_time(&posts)),
            posts,
            scores,
            params: Default::default(),
        };
        let mut feeds = Vec::new();
        for c in Condition::ALL {
            inputs.params = params_for(c);
            feeds.push(build_feed(&inputs, c).map_err(|e| ServiceError::BadRequest(e.to_string()))?);
        }
        Ok(Self::new(feeds, inputs.posts))
    }

    pub fn load(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let corpus = Corpus::load(&config.inventory)
            .map_err(|e| ServiceError::BadRequest(format!("inventory {}: {e}", config.inventory.display())))?;
        let (scores, report) = AnnotationColumn::load(&config.scores, "", Some(&corpus))
            .map_err(|e| ServiceError::BadRequest(format!("scores {}: {e}", config.scores.display())))?;
        if let Some(bad) = report.rejected.first() {
            return Err(ServiceError::BadRequest(format!(
                "scores {}: {} rows rejected, first at line {}: {}",
                config.scores.display(),
                report.rejected.len(),
                bad.line,
                bad.reason
            )));
        }
        Self::build(corpus.into_posts(), scores, |c| config.params_for(c), config.generated_at)
    }

    pub fn feed(&self, condition: Condition) -> Option<&RankedFeed> {
        self.feeds.get(&condition)
    }
}

/// One slot as served to a participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotView {
    pub position: usize,
    pub post_id: String,
    pub page_name: String,
    /// Empty while `withheld`.
    pub text: String,
    pub posted_at: DateTime<Utc>,
    pub warned: bool,
    pub withheld: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedView {
    pub session_id: String,
    pub condition: Condition,
    pub feed_ref: String,
    pub feed_size: usize,
    pub generated_at: DateTime<Utc>,
    pub show_reactions: bool,
    pub slots: Vec<SlotView>,
}

pub struct Experiment {
    feeds: FeedSet,
    store: Store,
    policy: AssignmentPolicy,
    admin_token: Option<String>,
    show_reactions: bool,
}

impl Experiment {
    pub fn new(feeds: FeedSet, store: Store, policy: AssignmentPolicy, admin_token: Option<String>) -> Result<Self, ServiceError> {
        policy.validate()?;
        if let Some(c) = policy.active().into_iter().find(|c| feeds.feed(*c).is_none()) {
            return Err(ServiceError::BadRequest(format!("no feed built for condition {c}")));
        }
        Ok(Self {
            feeds,
            store,
            policy,
            admin_token,
            show_reactions: true,
        })
    }

    pub fn with_reactions(mut self, show: bool) -> Self {
        self.show_reactions = show;
        self
    }

    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let feeds = FeedSet::load(config)?;
        let store = Store::open(&config.data_dir, config.snapshot_every)?;
        Ok(Self::new(feeds, store, config.assignment.clone(), config.admin_token())?.with_reactions(config.show_reactions))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn feeds(&self) -> &FeedSet {
        &self.feeds
    }

    pub fn create_session(&self, participant_id: &str) -> Result<Session, ServiceError> {
        self.store.create_session(participant_id, &self.policy, Utc::now())
    }

    fn session_feed(&self, condition: Condition) -> Result<&RankedFeed, ServiceError> {
        self.feeds
            .feed(condition)
            .ok_or_else(|| ServiceError::Internal(format!("no feed for condition {condition}")))
    }

    /// The session's feed with warned, unrevealed slots withheld.
    pub fn get_feed(&self, session_id: &str) -> Result<FeedView, ServiceError> {
        let view = self
            .store
            .view(session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{session_id}`")))?;
        let feed = self.session_feed(view.session.condition)?;
        let slots = feed
            .slots
            .iter()
            .map(|slot| {
                let post = &self.feeds.posts[&slot.post_id];
                let withheld = slot.warned && !view.revealed.contains(&slot.post_id);
                SlotView {
                    position: slot.position,
                    post_id: slot.post_id.clone(),
                    page_name: post.page_name.clone(),
                    text: if withheld { String::new() } else { post.text.clone() },
                    posted_at: post.posted_at,
                    warned: slot.warned,
                    withheld,
                }
            })
            .collect();
        Ok(FeedView {
            session_id: view.session.session_id.clone(),
            condition: view.session.condition,
            feed_ref: view.session.feed_ref.clone(),
            feed_size: feed.feed_size,
            generated_at: feed.generated_at,
            show_reactions: self.show_reactions,
            slots,
        })
    }

    pub fn record_events(&self, session_id: &str, batch: Vec<EventInput>) -> Result<Ack, ServiceError> {
        let condition = self
            .store
            .view(session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{session_id}`")))?
            .session
            .condition;
        let feed = self.session_feed(condition)?;
        self.store
            .record_events(session_id, batch, |p| feed.slot_for(p).is_some(), Utc::now())
    }

    pub fn check_admin(&self, token: Option<&str>) -> Result<(), ServiceError> {
        match (&self.admin_token, token) {
            (None, _) => Err(ServiceError::Unauthorized("export is disabled: no admin token configured".into())),
            (Some(want), Some(got)) if constant_time_eq(want.as_bytes(), got.as_bytes()) => Ok(()),
            _ => Err(ServiceError::Unauthorized("bad or missing admin token".into())),
        }
    }

    pub fn export(&self, token: Option<&str>, filter: &ExportFilter) -> Result<String, ServiceError> {
        self.check_admin(token)?;
        Ok(to_ndjson(&self.store.export(filter)))
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Export straight from a data directory without running the service.
pub fn export_dir(dir: &Path, filter: &ExportFilter) -> Result<String, ServiceError> {
    if !dir.join(crate::store::LOG_FILE).exists() {
        return Err(ServiceError::NotFound(format!("no event log in {}", dir.display())));
    }
    Ok(to_ndjson(&crate::store::export_from_dir(dir, filter)?))
}
