use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use thiserror::Error;

use super::cache::{read_records, write_records, CacheKey, CacheRecord, Clock};
use super::parse::{format_response, parse_response, ParsedRating};
use super::prompt::ChatRequest;
use super::RaterError;
use crate::codebook::{rubric_score, FactorProfile, RubricForm, VariableId};

/// Everything a backend may need to answer one rating request.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingCall {
    pub key: CacheKey,
    pub variable: VariableId,
    pub prompt_version: String,
    pub request: ChatRequest,
}

impl RatingCall {
    /// The user message, i.e. the post text.
    pub fn post_text(&self) -> &str {
        self.request
            .messages
            .last()
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Network or server trouble worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    #[error("replay miss for key {0}")]
    ReplayMiss(CacheKey),
    /// Not worth retrying (bad request, auth, unreadable body).
    #[error("backend: {0}")]
    Fatal(String),
}

/// A chat-completions provider. Returns the assistant message text.
pub trait RaterBackend: Send + Sync {
    fn complete(&self, call: &RatingCall) -> Result<String, BackendError>;
}

impl<B: RaterBackend + ?Sized> RaterBackend for &B {
    fn complete(&self, call: &RatingCall) -> Result<String, BackendError> {
        (**self).complete(call)
    }
}

impl<B: RaterBackend + ?Sized> RaterBackend for Box<B> {
    fn complete(&self, call: &RatingCall) -> Result<String, BackendError> {
        (**self).complete(call)
    }
}

const NAME_CALLING: &[&str] = &[
    "rino", "rinos", "libtard", "libtards", "commie", "commies", "snowflake", "snowflakes", "fascist",
    "fascists", "traitor", "traitors", "demonrat", "demonrats", "rethuglican", "rethuglicans",
    "maga extremists", "radical left", "lunatic", "lunatics", "clown", "clowns", "idiot", "idiots",
    "moron", "morons", "groomer", "groomers",
];
const EMOTION: &[&str] = &[
    "disgusting", "outrageous", "disaster", "insane", "shameful", "horrific", "destroy", "destroying",
    "unbelievable", "worst", "evil", "terrifying", "furious", "sick of", "catastrophic",
];
const UNDEMOCRATIC: &[&str] = &[
    "stolen election", "election was stolen", "rigged", "overturn the election", "ignore the courts",
    "close polling", "shut down the press", "decertify", "refuse to concede", "purge the voter rolls",
];
const VIOLENCE: &[&str] = &[
    "take up arms", "civil war", "lock and load", "hang them", "beat them", "by any means necessary",
    "string them up", "fight in the streets", "eliminate them",
];
const UNDEMOCRATIC_CANDIDATE: &[&str] = &[
    "vote for him anyway", "whatever it takes to win", "no matter what he did", "even if he broke the law",
    "only candidate who will overturn",
];
const TRUST: &[&str] = &[
    "corrupt", "liars", "lying", "can't trust", "cannot trust", "crooks", "crooked", "scam", "fraud",
    "betrayed",
];
const DISTANCE: &[&str] = &[
    "hate", "enemy", "enemies", "invaders", "vermin", "subhuman", "don't belong", "infesting",
];
const DAMAGING_EVENTS: &[&str] = &[
    "mass shooting", "shooting", "riot", "riots", "bombing", "terror attack", "massacre",
];
const POLITICIZED: &[&str] = &[
    "hoax", "so-called", "fake news", "cover-up", "cover up", "the truth is", "propaganda",
    "they won't tell you",
];

/// Deterministic offline rater: detects rubric factors with keyword lists and
/// scores them with the codebook rubric.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockRater;

struct Normalized {
    words: String,
    raw: String,
}

impl Normalized {
    fn new(text: &str) -> Self {
        let words: Vec<String> = text
            .to_lowercase()
            .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect();
        Self {
            words: format!(" {} ", words.join(" ")),
            raw: text.to_string(),
        }
    }

    fn any(&self, phrases: &[&str]) -> bool {
        phrases.iter().any(|p| self.words.contains(&format!(" {p} ")))
    }

    fn emotional(&self) -> bool {
        self.any(EMOTION) || self.raw.contains("!!")
    }
}

impl MockRater {
    /// Factor detections for `variable` on `text`.
    pub fn factors(variable: VariableId, text: &str) -> FactorProfile {
        let t = Normalized::new(text);
        let name_calling = t.any(NAME_CALLING);
        let emotion = t.emotional();
        let three = |a: bool, b1: bool, b2: bool| FactorProfile::Three { variable, a, b1, b2 };
        let two = |a: bool, b: bool| FactorProfile::Two { variable, a, b };
        let profile = match variable {
            VariableId::PartisanAnimosity => two(name_calling, emotion),
            VariableId::UndemocraticPractices => three(t.any(UNDEMOCRATIC), name_calling, emotion),
            VariableId::PartisanViolence => three(t.any(VIOLENCE), name_calling, emotion),
            VariableId::UndemocraticCandidates => three(t.any(UNDEMOCRATIC_CANDIDATE), name_calling, emotion),
            VariableId::OppositionBipartisanship | VariableId::SocialDistrust => {
                two(name_calling || t.any(TRUST), emotion)
            }
            VariableId::SocialDistance => three(t.any(DISTANCE), emotion, t.any(DAMAGING_EVENTS)),
            VariableId::BiasedEvaluation => two(t.any(POLITICIZED), emotion),
        };
        debug_assert_eq!(
            matches!(profile, FactorProfile::Two { .. }),
            variable.form() == RubricForm::TwoFactor
        );
        profile
    }

    pub fn reply(variable: VariableId, text: &str) -> String {
        let profile = Self::factors(variable, text);
        let score = rubric_score(&profile).expect("mock profiles match the rubric form");
        let present: Vec<&str> = match profile {
            FactorProfile::Two { a, b, .. } => [(a, "A"), (b, "B")].iter().filter(|x| x.0).map(|x| x.1).collect(),
            FactorProfile::Three { a, b1, b2, .. } => [(a, "A"), (b1, "B1"), (b2, "B2")]
                .iter()
                .filter(|x| x.0)
                .map(|x| x.1)
                .collect(),
        };
        let reason = if present.is_empty() {
            "no factors detected".to_string()
        } else {
            format!("factors present: {}", present.join(", "))
        };
        format_response(&ParsedRating { score, reason })
    }
}

impl RaterBackend for MockRater {
    fn complete(&self, call: &RatingCall) -> Result<String, BackendError> {
        Ok(Self::reply(call.variable, call.post_text()))
    }
}

/// Answers only keys present in a recorded archive.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    answers: HashMap<CacheKey, String>,
}

impl ReplayBackend {
    pub fn from_records(records: impl IntoIterator<Item = CacheRecord>) -> Self {
        Self {
            answers: records.into_iter().map(|r| (r.key, r.value.raw_text)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, RaterError> {
        Ok(Self::from_records(read_records(path)?))
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn answers(&self, key: &CacheKey) -> bool {
        self.answers.contains_key(key)
    }
}

impl RaterBackend for ReplayBackend {
    fn complete(&self, call: &RatingCall) -> Result<String, BackendError> {
        self.answers
            .get(&call.key)
            .cloned()
            .ok_or_else(|| BackendError::ReplayMiss(call.key.clone()))
    }
}

/// Wraps a backend and keeps the reply to every request it sees, for
/// writing a replay archive. A parseable reply is never displaced by a later
/// unparseable one for the same key.
pub struct Recorder<B> {
    inner: B,
    clock: Clock,
    records: Mutex<BTreeMap<CacheKey, CacheRecord>>,
}

impl<B: RaterBackend> Recorder<B> {
    pub fn new(inner: B, clock: Clock) -> Self {
        Self {
            inner,
            clock,
            records: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn records(&self) -> Vec<CacheRecord> {
        self.records.lock().expect("recorder lock").values().cloned().collect()
    }

    pub fn write_archive(&self, path: &Path) -> Result<(), RaterError> {
        write_records(path, &self.records())
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: RaterBackend> RaterBackend for Recorder<B> {
    fn complete(&self, call: &RatingCall) -> Result<String, BackendError> {
        let raw = self.inner.complete(call)?;
        let value = parse_response(&raw);
        let mut records = self.records.lock().expect("recorder lock");
        let keep_old = records.get(&call.key).is_some_and(|old| old.value.is_ok() && !value.is_ok());
        if !keep_old {
            records.insert(
                call.key.clone(),
                CacheRecord {
                    key: call.key.clone(),
                    value,
                    created_at: self.clock.now(),
                },
            );
        }
        Ok(raw)
    }
}
