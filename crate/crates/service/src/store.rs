//! Durable session and event storage.
//!
//! Every change is appended to `events.jsonl` and fsynced before the caller
//! gets an answer. Opening a store replays the log (from the latest snapshot
//! when one exists). A torn final line left by a crash was never
//! acknowledged and is cut off.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPolicy;
use crate::model::{
    Ack, EngagementEvent, EventInput, EventKind, EventRejection, ExportFilter, ExportHeader, Record, Session,
    TimeOnFeed, EXPORT_FORMAT, EXPORT_VERSION,
};
use crate::ServiceError;

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// A session with its accepted events in seq order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session: Session,
    pub events: Vec<EngagementEvent>,
}

impl SessionState {
    fn last_seq(&self) -> Option<u64> {
        self.events.last().map(|e| e.seq)
    }

    fn has_seq(&self, seq: u64) -> bool {
        self.events.binary_search_by_key(&seq, |e| e.seq).is_ok()
    }

    pub fn revealed(&self) -> BTreeSet<String> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::WarningReveal)
            .filter_map(|e| e.post_id.clone())
            .collect()
    }

    pub fn time_on_feed(&self) -> TimeOnFeed {
        TimeOnFeed::from_events(&self.session.session_id, &self.events)
    }
}

/// Read-side copy of what a feed request needs. Replaced wholesale after
/// each durable change, never mutated in place.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionView {
    pub session: Session,
    pub revealed: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    log_len: u64,
    sessions: Vec<SessionState>,
}

struct Inner {
    log: File,
    log_len: u64,
    sessions: BTreeMap<String, SessionState>,
    participants: HashMap<String, String>,
    since_snapshot: usize,
}

pub struct Store {
    dir: PathBuf,
    snapshot_every: usize,
    inner: Mutex<Inner>,
    views: RwLock<HashMap<String, Arc<SessionView>>>,
}

fn io_err(context: &str, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(format!("{context}: {e}"))
}

fn apply(sessions: &mut BTreeMap<String, SessionState>, record: Record, offset: u64) -> Result<(), ServiceError> {
    match record {
        Record::Session(session) => {
            sessions.insert(
                session.session_id.clone(),
                SessionState {
                    session,
                    events: Vec::new(),
                },
            );
        }
        Record::Event(event) => {
            let state = sessions
                .get_mut(&event.session_id)
                .ok_or_else(|| io_err("event log", format!("event for unknown session at byte {offset}")))?;
            if state.last_seq().is_some_and(|l| event.seq <= l) {
                return Err(io_err("event log", format!("seq out of order at byte {offset}")));
            }
            state.events.push(event);
        }
        Record::Header(_) | Record::TimeOnFeed(_) => {}
    }
    Ok(())
}

fn load_snapshot(dir: &Path, log_size: u64) -> Option<(BTreeMap<String, SessionState>, u64)> {
    let text = fs::read_to_string(dir.join(SNAPSHOT_FILE)).ok()?;
    let snap: Snapshot = serde_json::from_str(&text).ok()?;
    if snap.log_len > log_size {
        return None;
    }
    let sessions = snap
        .sessions
        .into_iter()
        .map(|s| (s.session.session_id.clone(), s))
        .collect();
    Some((sessions, snap.log_len))
}

/// Rebuild state from the snapshot (if usable) and the log. Returns the
/// state and the length of the readable log prefix.
fn replay(dir: &Path, log: &mut File, log_size: u64) -> Result<(BTreeMap<String, SessionState>, u64), ServiceError> {
    let (mut sessions, start) = load_snapshot(dir, log_size).unwrap_or_default();
    log.seek(SeekFrom::Start(start)).map_err(|e| io_err("event log", e))?;
    let mut reader = BufReader::new(&*log);
    let mut offset = start;
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line).map_err(|e| io_err("reading event log", e))?;
        if n == 0 {
            break;
        }
        let complete = line.ends_with(b"\n");
        match serde_json::from_slice::<Record>(&line) {
            Ok(record) if complete => apply(&mut sessions, record, offset)?,
            _ if offset + n as u64 == log_size => break,
            Ok(_) | Err(_) => {
                return Err(io_err("event log", format!("unreadable record at byte {offset}")));
            }
        }
        offset += n as u64;
    }
    Ok((sessions, offset))
}

fn export_records<'a>(sessions: impl Iterator<Item = &'a SessionState>, filter: &ExportFilter) -> Vec<Record> {
    let chosen: Vec<&SessionState> = sessions.filter(|s| filter.admits(&s.session)).collect();
    let mut out = vec![Record::Header(ExportHeader {
        format: EXPORT_FORMAT.to_string(),
        version: EXPORT_VERSION,
        sessions: chosen.len(),
        events: chosen.iter().map(|s| s.events.len()).sum(),
        filter: filter.clone(),
    })];
    for s in chosen {
        out.push(Record::Session(s.session.clone()));
        out.extend(s.events.iter().cloned().map(Record::Event));
        out.push(Record::TimeOnFeed(s.time_on_feed()));
    }
    out
}

/// Read a data directory without modifying it. A torn final line is ignored.
pub fn read_dir(dir: &Path) -> Result<Vec<SessionState>, ServiceError> {
    let mut log = File::open(dir.join(LOG_FILE)).map_err(|e| io_err("opening event log", e))?;
    let size = log.metadata().map_err(|e| io_err("event log", e))?.len();
    Ok(replay(dir, &mut log, size)?.0.into_values().collect())
}

impl Store {
    /// Open (or create) the store in `dir`. `snapshot_every` is the number of
    /// appended records between snapshots; 0 disables them.
    pub fn open(dir: &Path, snapshot_every: usize) -> Result<Store, ServiceError> {
        fs::create_dir_all(dir).map_err(|e| io_err("creating data dir", e))?;
        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| io_err("opening event log", e))?;
        let log_size = log.metadata().map_err(|e| io_err("event log", e))?.len();

        let (sessions, offset) = replay(dir, &mut log, log_size)?;
        if offset < log_size {
            log.set_len(offset).map_err(|e| io_err("truncating torn log tail", e))?;
            log.sync_all().map_err(|e| io_err("event log", e))?;
        }

        let participants = sessions
            .values()
            .map(|s| (s.session.participant_id.clone(), s.session.session_id.clone()))
            .collect();
        let views = sessions
            .values()
            .map(|s| {
                (
                    s.session.session_id.clone(),
                    Arc::new(SessionView {
                        session: s.session.clone(),
                        revealed: s.revealed(),
                    }),
                )
            })
            .collect();
        Ok(Store {
            dir: dir.to_path_buf(),
            snapshot_every,
            inner: Mutex::new(Inner {
                log,
                log_len: offset,
                sessions,
                participants,
                since_snapshot: 0,
            }),
            views: RwLock::new(views),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn append(&self, inner: &mut Inner, records: &[Record]) -> Result<(), ServiceError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r).map_err(|e| io_err("encoding record", e))?;
            buf.push(b'\n');
        }
        let written = inner.log.write_all(&buf).and_then(|_| inner.log.sync_data());
        if let Err(e) = written {
            // leave no partial line behind for later appends to follow
            let _ = inner.log.set_len(inner.log_len);
            return Err(io_err("appending to event log", e));
        }
        inner.log_len += buf.len() as u64;
        inner.since_snapshot += records.len();
        Ok(())
    }

    fn publish(&self, state: &SessionState) {
        let view = Arc::new(SessionView {
            session: state.session.clone(),
            revealed: state.revealed(),
        });
        self.views
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(state.session.session_id.clone(), view);
    }

    fn maybe_snapshot(&self, inner: &mut Inner) -> Result<(), ServiceError> {
        if self.snapshot_every > 0 && inner.since_snapshot >= self.snapshot_every {
            self.write_snapshot(inner)?;
        }
        Ok(())
    }

    fn write_snapshot(&self, inner: &mut Inner) -> Result<(), ServiceError> {
        let snap = Snapshot {
            log_len: inner.log_len,
            sessions: inner.sessions.values().cloned().collect(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut f = File::create(&tmp).map_err(|e| io_err("writing snapshot", e))?;
        serde_json::to_writer(&mut f, &snap).map_err(|e| io_err("writing snapshot", e))?;
        f.sync_all().map_err(|e| io_err("writing snapshot", e))?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE)).map_err(|e| io_err("writing snapshot", e))?;
        inner.since_snapshot = 0;
        Ok(())
    }

    /// Write a snapshot now.
    pub fn snapshot(&self) -> Result<(), ServiceError> {
        let mut inner = self.lock();
        self.write_snapshot(&mut inner)
    }

    /// Assign and persist a new session. A participant gets at most one.
    pub fn create_session(
        &self,
        participant_id: &str,
        policy: &AssignmentPolicy,
        now: DateTime<Utc>,
    ) -> Result<Session, ServiceError> {
        let participant_id = participant_id.trim();
        if participant_id.is_empty() {
            return Err(ServiceError::BadRequest("participant_id must not be empty".into()));
        }
        let mut inner = self.lock();
        if let Some(existing) = inner.participants.get(participant_id) {
            return Err(ServiceError::Conflict(format!(
                "participant `{participant_id}` already has session {existing}"
            )));
        }
        let condition = policy.assign(inner.sessions.len() as u64);
        let session = Session {
            session_id: uuid::Uuid::new_v4().to_string(),
            participant_id: participant_id.to_string(),
            condition,
            assigned_at: now,
            feed_ref: condition.as_str().to_string(),
        };
        self.append(&mut inner, &[Record::Session(session.clone())])?;
        let state = SessionState {
            session: session.clone(),
            events: Vec::new(),
        };
        self.publish(&state);
        inner.participants.insert(session.participant_id.clone(), session.session_id.clone());
        inner.sessions.insert(session.session_id.clone(), state);
        self.maybe_snapshot(&mut inner)?;
        Ok(session)
    }

    /// Validate, persist and apply a batch of events in order.
    ///
    /// `in_feed` says whether a post id belongs to the session's feed.
    pub fn record_events(
        &self,
        session_id: &str,
        batch: Vec<EventInput>,
        in_feed: impl Fn(&str) -> bool,
        now: DateTime<Utc>,
    ) -> Result<Ack, ServiceError> {
        let mut inner = self.lock();
        let state = inner
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{session_id}`")))?;
        let mut ack = Ack::default();
        let mut last = state.last_seq();
        let mut fresh: Vec<EngagementEvent> = Vec::new();
        for ev in batch {
            let reason = if state.has_seq(ev.seq) || fresh.iter().any(|e| e.seq == ev.seq) {
                Some(format!("duplicate seq {}", ev.seq))
            } else if let Some(l) = last.filter(|l| ev.seq < *l) {
                Some(format!("seq {} regresses (last accepted {l})", ev.seq))
            } else if ev.kind.needs_post() && ev.post_id.is_none() {
                Some(format!("{:?} event needs a post_id", ev.kind))
            } else if let Some(p) = ev.post_id.as_deref().filter(|p| !in_feed(p)) {
                Some(format!("post_id `{p}` is not in this session's feed"))
            } else if ev.kind == EventKind::DwellMs && !ev.value.is_some_and(|v| v >= 0) {
                Some("dwell_ms needs a non-negative value".to_string())
            } else {
                None
            };
            match reason {
                Some(reason) => ack.rejections.push(EventRejection { seq: ev.seq, reason }),
                None => {
                    last = Some(ev.seq);
                    fresh.push(EngagementEvent {
                        session_id: session_id.to_string(),
                        post_id: ev.post_id,
                        kind: ev.kind,
                        value: ev.value,
                        client_ts: ev.client_ts,
                        server_ts: now,
                        seq: ev.seq,
                    });
                }
            }
        }
        ack.accepted = fresh.len();
        ack.rejected = ack.rejections.len();
        if fresh.is_empty() {
            return Ok(ack);
        }
        let records: Vec<Record> = fresh.iter().cloned().map(Record::Event).collect();
        self.append(&mut inner, &records)?;
        let state = inner.sessions.get_mut(session_id).expect("checked above");
        state.events.extend(fresh);
        let state = state.clone();
        self.publish(&state);
        self.maybe_snapshot(&mut inner)?;
        Ok(ack)
    }

    pub fn view(&self, session_id: &str) -> Option<Arc<SessionView>> {
        self.views.read().unwrap_or_else(|p| p.into_inner()).get(session_id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.lock().sessions.len()
    }

    /// Every session with its events, ordered by session id.
    pub fn state(&self) -> Vec<SessionState> {
        self.lock().sessions.values().cloned().collect()
    }

    /// Dump records: header, then per session (by id) the session, its
    /// events by seq, and its time on feed.
    pub fn export(&self, filter: &ExportFilter) -> Vec<Record> {
        export_records(self.lock().sessions.values(), filter)
    }

    /// Build a new store in `dir` from an export dump. `dir` must not
    /// already hold an event log.
    pub fn import<R: BufRead>(dir: &Path, dump: R, snapshot_every: usize) -> Result<Store, ServiceError> {
        if dir.join(LOG_FILE).metadata().is_ok_and(|m| m.len() > 0) {
            return Err(ServiceError::Conflict(format!("{} already holds an event log", dir.display())));
        }
        let mut sessions = BTreeMap::new();
        let mut header_seen = false;
        for (i, line) in dump.lines().enumerate() {
            let line = line.map_err(|e| io_err("reading dump", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|e| ServiceError::BadRequest(format!("dump line {}: {e}", i + 1)))?;
            match &record {
                Record::Header(h) => {
                    if h.format != EXPORT_FORMAT || h.version != EXPORT_VERSION {
                        return Err(ServiceError::BadRequest(format!(
                            "unsupported dump format {} v{}",
                            h.format, h.version
                        )));
                    }
                    header_seen = true;
                    continue;
                }
                _ if !header_seen => {
                    return Err(ServiceError::BadRequest("dump does not start with a header record".into()));
                }
                Record::Session(s) if sessions.contains_key(&s.session_id) => {
                    return Err(ServiceError::BadRequest(format!("dump line {}: duplicate session", i + 1)));
                }
                _ => {}
            }
            apply(&mut sessions, record, i as u64 + 1)
                .map_err(|e| ServiceError::BadRequest(format!("dump line {}: {e}", i + 1)))?;
        }
        if !header_seen {
            return Err(ServiceError::BadRequest("dump has no header record".into()));
        }
        fs::create_dir_all(dir).map_err(|e| io_err("creating data dir", e))?;
        let mut buf = Vec::new();
        for s in sessions.values() {
            for r in std::iter::once(Record::Session(s.session.clone())).chain(s.events.iter().cloned().map(Record::Event)) {
                serde_json::to_writer(&mut buf, &r).map_err(|e| io_err("encoding record", e))?;
                buf.push(b'\n');
            }
        }
        let mut f = File::create(dir.join(LOG_FILE)).map_err(|e| io_err("writing event log", e))?;
        f.write_all(&buf).and_then(|_| f.sync_all()).map_err(|e| io_err("writing event log", e))?;
        let _ = fs::remove_file(dir.join(SNAPSHOT_FILE));
        Store::open(dir, snapshot_every)
    }
}

/// Export records for a data directory, read-only.
pub fn export_from_dir(dir: &Path, filter: &ExportFilter) -> Result<Vec<Record>, ServiceError> {
    Ok(export_records(read_dir(dir)?.iter(), filter))
}

/// Line-delimited JSON for a list of records, one per line.
pub fn to_ndjson(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}
