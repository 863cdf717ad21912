use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

use super::backend::{BackendError, RaterBackend, RatingCall};
use super::cache::{cache_key, CacheRecord, Clock, RatingCache};
use super::parse::{parse_response, parse_response_strict, ParseStatus, RaterResponse};
use super::prompt::{build_prompt, template, ModelSettings, DEFAULT_PROMPT_VERSION};
use super::RaterError;
use crate::codebook::{total_score, VariableId, VariableRating};
use crate::corpus::{AnnotationColumn, Post};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Same attempt budget, no sleeping. For offline backends and tests.
    pub fn immediate() -> Self {
        Self {
            initial_backoff: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Delay after the `attempt`-th (1-based) transport failure.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        self.initial_backoff.mul_f64(factor).min(self.max_backoff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaterSettings {
    pub prompt_version: String,
    pub model: ModelSettings,
    pub rater_id: String,
    /// Require the exact `Rating: N ### Reason: text` shape.
    pub strict: bool,
}

impl Default for RaterSettings {
    fn default() -> Self {
        let model = ModelSettings::default();
        Self {
            prompt_version: DEFAULT_PROMPT_VERSION.to_string(),
            rater_id: model.model_id.clone(),
            model,
            strict: false,
        }
    }
}

/// Why a single (post, variable) rating could not be produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RatingFailure {
    Unparseable {
        status: ParseStatus,
        last_raw: String,
        attempts: u32,
    },
    TransportExhausted {
        attempts: u32,
        last_error: String,
    },
    ReplayMiss {
        key: String,
    },
    Backend {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PostFailure {
    pub post_id: String,
    pub failures: Vec<(VariableId, RatingFailure)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FailureReport {
    pub posts: Vec<PostFailure>,
}

impl FailureReport {
    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRating {
    pub column: AnnotationColumn,
    pub failures: FailureReport,
}

type PostOutcomes = (Vec<VariableRating>, Vec<(VariableId, RatingFailure)>);

/// Rates posts through a backend with caching and retries.
pub struct Rater<'a> {
    backend: &'a dyn RaterBackend,
    settings: RaterSettings,
    policy: RetryPolicy,
    cache: Option<&'a RatingCache>,
    clock: Clock,
}

impl<'a> Rater<'a> {
    pub fn new(backend: &'a dyn RaterBackend, settings: RaterSettings) -> Result<Self, RaterError> {
        settings.model.validate()?;
        template(VariableId::PartisanAnimosity, &settings.prompt_version)?;
        Ok(Self {
            backend,
            settings,
            policy: RetryPolicy::default(),
            cache: None,
            clock: Clock::System,
        })
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_cache(mut self, cache: &'a RatingCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn settings(&self) -> &RaterSettings {
        &self.settings
    }

    pub fn call_for(&self, post: &Post, variable: VariableId) -> RatingCall {
        let s = &self.settings;
        RatingCall {
            key: cache_key(&s.prompt_version, &s.model.model_id, s.model.temperature, variable, &post.text),
            variable,
            prompt_version: s.prompt_version.clone(),
            request: build_prompt(variable, post, &s.prompt_version, &s.model)
                .expect("settings validated at construction"),
        }
    }

    fn parse(&self, raw: &str) -> RaterResponse {
        if self.settings.strict {
            parse_response_strict(raw)
        } else {
            parse_response(raw)
        }
    }

    fn to_rating(&self, variable: VariableId, response: &RaterResponse) -> Option<VariableRating> {
        response.parsed.as_ref().map(|p| VariableRating {
            variable,
            score: p.score,
            reason: p.reason.clone(),
            rater_id: self.settings.rater_id.clone(),
        })
    }

    /// Rate one post on one variable.
    ///
    /// Cached successes are returned without a backend call. Unparseable
    /// replies are retried immediately and transport errors after an
    /// exponential backoff, up to `max_attempts` calls in total.
    pub fn rate_post(&self, post: &Post, variable: VariableId) -> Result<VariableRating, RatingFailure> {
        let call = self.call_for(post, variable);
        if let Some(hit) = self.cache.and_then(|c| c.get(&call.key)) {
            let response = self.parse(&hit.value.raw_text);
            if let Some(rating) = self.to_rating(variable, &response) {
                return Ok(rating);
            }
        }

        let attempts = self.policy.max_attempts.max(1);
        let mut last_parse: Option<RaterResponse> = None;
        let mut last_transport: Option<String> = None;
        for attempt in 1..=attempts {
            match self.backend.complete(&call) {
                Ok(raw) => {
                    let response = self.parse(&raw);
                    if let Some(rating) = self.to_rating(variable, &response) {
                        if let Some(cache) = self.cache {
                            cache.insert(CacheRecord {
                                key: call.key.clone(),
                                value: response,
                                created_at: self.clock.now(),
                            });
                        }
                        return Ok(rating);
                    }
                    last_parse = Some(response);
                }
                Err(BackendError::Transport(msg)) => {
                    last_transport = Some(msg);
                    if attempt < attempts {
                        std::thread::sleep(self.policy.backoff(attempt));
                    }
                }
                Err(BackendError::ReplayMiss(key)) => return Err(RatingFailure::ReplayMiss { key: key.0 }),
                Err(BackendError::Fatal(message)) => return Err(RatingFailure::Backend { message }),
            }
        }
        Err(match (last_parse, last_transport) {
            (Some(r), _) => RatingFailure::Unparseable {
                status: r.parse_status,
                last_raw: r.raw_text,
                attempts,
            },
            (None, Some(e)) => RatingFailure::TransportExhausted {
                attempts,
                last_error: e,
            },
            (None, None) => unreachable!("at least one attempt is made"),
        })
    }

    /// Rate every post on all eight variables with at most
    /// `concurrency_limit` requests in flight. Posts with any failed variable
    /// are left out of the column and listed in the failure report.
    pub fn rate_corpus(&self, posts: &[Post], concurrency_limit: usize) -> Result<CorpusRating, RaterError> {
        if concurrency_limit == 0 {
            return Err(RaterError::Concurrency);
        }
        let mut seen = std::collections::HashSet::new();
        let tasks: Vec<(usize, VariableId)> = (0..posts.len())
            .filter(|&p| seen.insert(posts[p].post_id.as_str()))
            .flat_map(|p| VariableId::ALL.into_iter().map(move |v| (p, v)))
            .collect();
        let results: Mutex<Vec<Option<Result<VariableRating, RatingFailure>>>> = Mutex::new(vec![None; tasks.len()]);
        let next = AtomicUsize::new(0);
        let workers = concurrency_limit.min(tasks.len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(p, v)) = tasks.get(i) else { break };
                    let outcome = self.rate_post(&posts[p], v);
                    results.lock().expect("results lock")[i] = Some(outcome);
                });
            }
        });

        let mut per_post: BTreeMap<&str, PostOutcomes> = BTreeMap::new();
        for ((p, v), outcome) in tasks.iter().zip(results.into_inner().expect("results lock")) {
            let entry = per_post.entry(posts[*p].post_id.as_str()).or_default();
            match outcome.expect("every task ran") {
                Ok(r) => entry.0.push(r),
                Err(f) => entry.1.push((*v, f)),
            }
        }
        let mut column = AnnotationColumn::new(self.settings.rater_id.clone());
        let mut failures = FailureReport::default();
        for (post_id, (ratings, failed)) in per_post {
            if failed.is_empty() {
                let score = total_score(post_id, ratings).expect("one rating per variable");
                column.insert(score);
            } else {
                failures.posts.push(PostFailure {
                    post_id: post_id.to_string(),
                    failures: failed,
                });
            }
        }
        Ok(CorpusRating { column, failures })
    }
}
