use chrono::{DateTime, Utc};
use demfeed::Condition;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub participant_id: String,
    pub condition: Condition,
    pub assigned_at: DateTime<Utc>,
    /// Id of the ranked feed served to this session (the condition name).
    pub feed_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Impression,
    DwellMs,
    Like,
    Reaction,
    ShareClick,
    WarningReveal,
    FeedOpened,
    FeedClosed,
}

impl EventKind {
    /// Kinds that refer to one post rather than the whole feed.
    pub fn needs_post(self) -> bool {
        matches!(
            self,
            EventKind::Impression | EventKind::Like | EventKind::Reaction | EventKind::ShareClick | EventKind::WarningReveal
        )
    }
}

/// An event as sent by the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventInput {
    #[serde(default)]
    pub post_id: Option<String>,
    pub kind: EventKind,
    #[serde(default)]
    pub value: Option<i64>,
    pub client_ts: DateTime<Utc>,
    pub seq: u64,
}

/// A stored event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub session_id: String,
    pub post_id: Option<String>,
    pub kind: EventKind,
    pub value: Option<i64>,
    pub client_ts: DateTime<Utc>,
    pub server_ts: DateTime<Utc>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRejection {
    pub seq: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: usize,
    pub rejected: usize,
    pub rejections: Vec<EventRejection>,
}

/// Time on feed for one session, by both measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeOnFeed {
    pub session_id: String,
    /// Sum of client-reported `dwell_ms` values.
    pub dwell_ms_total: i64,
    /// Last `feed_closed` minus first `feed_opened`, client clock.
    pub open_close_ms: Option<i64>,
    /// The same span on the server clock.
    pub open_close_server_ms: Option<i64>,
}

impl TimeOnFeed {
    pub fn from_events(session_id: &str, events: &[EngagementEvent]) -> Self {
        let dwell_ms_total = events
            .iter()
            .filter(|e| e.kind == EventKind::DwellMs)
            .filter_map(|e| e.value)
            .sum();
        let span = |ts: fn(&EngagementEvent) -> DateTime<Utc>| {
            let opened = events.iter().filter(|e| e.kind == EventKind::FeedOpened).map(ts).min()?;
            let closed = events.iter().filter(|e| e.kind == EventKind::FeedClosed).map(ts).max()?;
            Some((closed - opened).num_milliseconds())
        };
        Self {
            session_id: session_id.to_string(),
            dwell_ms_total,
            open_close_ms: span(|e| e.client_ts),
            open_close_server_ms: span(|e| e.server_ts),
        }
    }
}

/// One line of the event log or of an export dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header(ExportHeader),
    Session(Session),
    Event(EngagementEvent),
    TimeOnFeed(TimeOnFeed),
}

pub const EXPORT_FORMAT: &str = "demfeed-events";
pub const EXPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportHeader {
    pub format: String,
    pub version: u32,
    pub sessions: usize,
    pub events: usize,
    pub filter: ExportFilter,
}

/// Sessions to include: optionally one condition, optionally an
/// `assigned_at` window (inclusive).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    #[serde(default)]
    pub condition: Option<Condition>,
    #[serde(default)]
    pub from: Option<DateTime<Utc>>,
    #[serde(default)]
    pub to: Option<DateTime<Utc>>,
}

impl ExportFilter {
    pub fn admits(&self, session: &Session) -> bool {
        self.condition.is_none_or(|c| c == session.condition)
            && self.from.is_none_or(|t| session.assigned_at >= t)
            && self.to.is_none_or(|t| session.assigned_at <= t)
    }
}
