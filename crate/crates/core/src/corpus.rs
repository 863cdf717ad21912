//! Post corpora: ingestion, engagement scoring, stratified sampling and
//! annotation columns.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{AttitudeScore, Score, VariableId};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),
    #[error("sample plan needs {needed} posts but the corpus has {available}")]
    PlanExceedsCorpus { needed: usize, available: usize },
    #[error("cannot take {wanted} posts for the first split from {available}")]
    SplitTooLarge { wanted: usize, available: usize },
    #[error("unsupported file extension for {0}")]
    UnknownFormat(String),
}

/// Page categories counted as political at ingest.
pub const POLITICAL_PAGE_CATEGORIES: [&str; 9] = [
    "political organization",
    "political candidate",
    "political ideology",
    "political party",
    "politics",
    "politician",
    "government organization",
    "government official",
    "public services government",
];

pub const OTHER_CATEGORY: &str = "other";

/// Map a free-form page category onto the political list, or `"other"`.
pub fn normalize_category(raw: &str) -> String {
    let cleaned = raw.trim().to_lowercase().replace(['_', '-'], " ");
    let cleaned = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
    POLITICAL_PAGE_CATEGORIES
        .iter()
        .find(|c| **c == cleaned)
        .map(|c| c.to_string())
        .unwrap_or_else(|| OTHER_CATEGORY.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ideology {
    Liberal,
    Conservative,
    Unknown,
}

impl Ideology {
    fn parse(raw: &str) -> Option<Ideology> {
        match raw.trim().to_lowercase().as_str() {
            "" => None,
            "liberal" | "left" | "lib" | "democrat" | "democratic" => Some(Ideology::Liberal),
            "conservative" | "right" | "con" | "republican" => Some(Ideology::Conservative),
            _ => Some(Ideology::Unknown),
        }
    }
}

/// The nine interaction counters of a post.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EngagementCounts {
    pub share: u64,
    pub comment: u64,
    pub like: u64,
    pub love: u64,
    pub wow: u64,
    pub haha: u64,
    pub sad: u64,
    pub angry: u64,
    pub care: u64,
}

impl EngagementCounts {
    pub fn as_array(&self) -> [u64; 9] {
        [
            self.share,
            self.comment,
            self.like,
            self.love,
            self.wow,
            self.haha,
            self.sad,
            self.angry,
            self.care,
        ]
    }

    pub fn from_array(c: [u64; 9]) -> Self {
        let [share, comment, like, love, wow, haha, sad, angry, care] = c;
        Self {
            share,
            comment,
            like,
            love,
            wow,
            haha,
            sad,
            angry,
            care,
        }
    }

    /// Equal-weight sum of all counters.
    pub fn total_interactions(&self) -> u64 {
        self.as_array().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub page_name: String,
    pub page_category: String,
    pub text: String,
    pub posted_at: DateTime<Utc>,
    pub engagement: EngagementCounts,
    pub ideology: Option<Ideology>,
}

pub fn engagement_score(post: &Post) -> u64 {
    post.engagement.total_interactions()
}

/// Ingest input formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    CrowdtangleCsv,
    GenericJson,
}

impl IngestFormat {
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_lowercase()) {
            Some(e) if e == "csv" => Ok(IngestFormat::CrowdtangleCsv),
            Some(e) if e == "json" || e == "jsonl" || e == "ndjson" => Ok(IngestFormat::GenericJson),
            _ => Err(CorpusError::UnknownFormat(path.display().to_string())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub kept: usize,
    /// Rows dropped for any reason other than duplication.
    pub dropped: usize,
    pub dropped_empty_text: usize,
    pub dropped_bad_timestamp: usize,
    pub dropped_bad_count: usize,
    pub duplicates: usize,
}

/// An ordered, id-unique collection of posts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    posts: Vec<Post>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Build from posts, keeping the first occurrence of each id. Returns the
    /// number of duplicates skipped alongside the corpus.
    pub fn from_posts(posts: impl IntoIterator<Item = Post>) -> (Corpus, usize) {
        let mut corpus = Corpus::default();
        let mut duplicates = 0;
        for post in posts {
            if !corpus.push(post) {
                duplicates += 1;
            }
        }
        (corpus, duplicates)
    }

    fn push(&mut self, post: Post) -> bool {
        if self.index.contains_key(&post.post_id) {
            return false;
        }
        self.index.insert(post.post_id.clone(), self.posts.len());
        self.posts.push(post);
        true
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn get(&self, post_id: &str) -> Option<&Post> {
        self.index.get(post_id).map(|&i| &self.posts[i])
    }

    pub fn contains(&self, post_id: &str) -> bool {
        self.index.contains_key(post_id)
    }

    /// Posts whose page category is on the political list.
    pub fn political_only(&self) -> Corpus {
        Corpus::from_posts(
            self.posts
                .iter()
                .filter(|p| p.page_category != OTHER_CATEGORY)
                .cloned(),
        )
        .0
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for post in &self.posts {
            serde_json::to_writer(&mut w, post).map_err(|e| CorpusError::Json {
                line: 0,
                message: e.to_string(),
            })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        self.write_jsonl(BufWriter::new(File::create(path)?))
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Corpus, CorpusError> {
        let mut posts = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let post: Post = serde_json::from_str(&line).map_err(|e| CorpusError::Json {
                line: i + 1,
                message: e.to_string(),
            })?;
            posts.push(post);
        }
        Ok(Corpus::from_posts(posts).0)
    }

    pub fn load(path: &Path) -> Result<Corpus, CorpusError> {
        Corpus::read_jsonl(BufReader::new(File::open(path)?))
    }
}

/// Parse a timestamp into UTC. Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS` with
/// an optional numeric offset or US zone abbreviation (naive values are taken as UTC), and unix
/// seconds.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S %z", "%Y-%m-%d %H:%M:%S%z"] {
        if let Ok(t) = DateTime::parse_from_str(raw, fmt) {
            return Some(t.with_timezone(&Utc));
        }
    }
    let (naive, offset_hours) = match raw.rsplit_once(' ') {
        Some((head, zone)) => match zone_offset(zone) {
            Some(h) => (head, h),
            None => (raw, 0),
        },
        None => (raw, 0),
    };
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(naive, fmt) {
            return Some(Utc.from_utc_datetime(&t) - chrono::Duration::hours(offset_hours));
        }
    }
    raw.parse::<i64>()
        .ok()
        .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
}

/// UTC offset in hours for zone abbreviations seen in platform exports.
fn zone_offset(zone: &str) -> Option<i64> {
    Some(match zone {
        "UTC" | "GMT" | "Z" => 0,
        "EST" => -5,
        "EDT" | "AST" => -4,
        "CST" => -6,
        "CDT" => -5,
        "MST" => -7,
        "MDT" => -6,
        "PST" => -8,
        "PDT" => -7,
        _ => return None,
    })
}

const COUNT_COLUMNS: [&str; 9] = [
    "shares", "comments", "likes", "loves", "wows", "hahas", "sads", "angrys", "cares",
];

fn canonical_column(raw: &str) -> String {
    let key = raw
        .trim()
        .trim_start_matches('\u{feff}')
        .to_lowercase()
        .replace([' ', '-'], "_");
    match key.as_str() {
        "post_id" | "facebook_id" => "id".into(),
        "text" | "body" => "message".into(),
        "post_created" | "created" | "created_at" | "posted_at" => "created_utc".into(),
        "page" => "page_name".into(),
        "category" | "page_admin_top_country_category" => "page_category".into(),
        "angry" => "angrys".into(),
        "share" | "comment" | "like" | "love" | "wow" | "haha" | "sad" | "care" => format!("{key}s"),
        _ => key,
    }
}

/// One ingest row before validation, keyed by canonical column names.
struct RawRow {
    fields: HashMap<String, String>,
}

impl RawRow {
    fn get(&self, key: &str) -> &str {
        self.fields.get(key).map(String::as_str).unwrap_or("")
    }
}

enum RowOutcome {
    Post(Post),
    EmptyText,
    BadTimestamp,
    BadCount,
}

fn parse_count(raw: &str) -> Option<u64> {
    let raw = raw.trim().replace(',', "");
    if raw.is_empty() {
        return Some(0);
    }
    raw.parse::<u64>().ok()
}

fn row_to_post(row: &RawRow) -> RowOutcome {
    let text = row.get("message");
    if text.trim().is_empty() {
        return RowOutcome::EmptyText;
    }
    let Some(posted_at) = parse_timestamp(row.get("created_utc")) else {
        return RowOutcome::BadTimestamp;
    };
    let mut counts = [0u64; 9];
    for (slot, col) in counts.iter_mut().zip(COUNT_COLUMNS) {
        match parse_count(row.get(col)) {
            Some(c) => *slot = c,
            None => return RowOutcome::BadCount,
        }
    }
    RowOutcome::Post(Post {
        post_id: row.get("id").trim().to_string(),
        page_name: row.get("page_name").trim().to_string(),
        page_category: normalize_category(row.get("page_category")),
        text: text.to_string(),
        posted_at,
        engagement: EngagementCounts::from_array(counts),
        ideology: Ideology::parse(row.get("ideology")),
    })
}

fn required_columns() -> impl Iterator<Item = &'static str> {
    ["id", "message", "created_utc"].into_iter().chain(COUNT_COLUMNS)
}

fn check_columns(present: impl Fn(&str) -> bool) -> Result<(), CorpusError> {
    match required_columns().find(|c| !present(c)) {
        Some(missing) => Err(CorpusError::MissingColumn(missing.to_string())),
        None => Ok(()),
    }
}

fn json_value_to_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Read a post table, dropping unusable rows and counting them in the report.
pub fn ingest<R: Read>(source: R, format: IngestFormat) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut rows = Vec::new();
    match format {
        IngestFormat::CrowdtangleCsv => {
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
            let headers: Vec<String> = reader.headers()?.iter().map(canonical_column).collect();
            check_columns(|c| headers.iter().any(|h| h == c))?;
            for record in reader.records() {
                let record = record?;
                let fields = headers
                    .iter()
                    .cloned()
                    .zip(record.iter().map(str::to_string))
                    .collect();
                rows.push(RawRow { fields });
            }
        }
        IngestFormat::GenericJson => {
            for (i, line) in BufReader::new(source).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line)
                    .map_err(|e| CorpusError::Json {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                let fields: HashMap<String, String> = obj
                    .iter()
                    .map(|(k, v)| (canonical_column(k), json_value_to_string(v)))
                    .collect();
                check_columns(|c| fields.contains_key(c))?;
                rows.push(RawRow { fields });
            }
        }
    }

    let mut report = IngestReport {
        rows_read: rows.len(),
        ..IngestReport::default()
    };
    let mut corpus = Corpus::default();
    for row in &rows {
        match row_to_post(row) {
            RowOutcome::Post(post) => {
                if !corpus.push(post) {
                    report.duplicates += 1;
                }
            }
            RowOutcome::EmptyText => report.dropped_empty_text += 1,
            RowOutcome::BadTimestamp => report.dropped_bad_timestamp += 1,
            RowOutcome::BadCount => report.dropped_bad_count += 1,
        }
    }
    report.dropped = report.dropped_empty_text + report.dropped_bad_timestamp + report.dropped_bad_count;
    report.kept = corpus.len();
    Ok((corpus, report))
}

pub fn ingest_path(path: &Path, format: Option<IngestFormat>) -> Result<(Corpus, IngestReport), CorpusError> {
    let format = match format {
        Some(f) => f,
        None => IngestFormat::from_path(path)?,
    };
    ingest(File::open(path)?, format)
}

/// How to draw an engagement-stratified sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub bucket_count: usize,
    pub per_bucket: usize,
    pub seed: u64,
}

impl SamplePlan {
    pub fn validate(&self, corpus_size: usize) -> Result<(), CorpusError> {
        if self.bucket_count == 0 || self.per_bucket == 0 {
            return Err(CorpusError::InvalidPlan(
                "bucket_count and per_bucket must be positive".into(),
            ));
        }
        let needed = self
            .bucket_count
            .checked_mul(self.per_bucket)
            .ok_or_else(|| CorpusError::InvalidPlan("bucket_count * per_bucket overflows".into()))?;
        if needed > corpus_size {
            return Err(CorpusError::PlanExceedsCorpus {
                needed,
                available: corpus_size,
            });
        }
        Ok(())
    }
}

/// A stratified sample: posts in bucket-major order with their bucket index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub posts: Vec<Post>,
    /// `buckets[i]` is the engagement bucket of `posts[i]`; 0 is the
    /// highest-engagement bucket.
    pub buckets: Vec<usize>,
}

/// Posts sorted by engagement descending, ties by post id ascending.
pub fn engagement_order(posts: &[Post]) -> Vec<&Post> {
    let mut sorted: Vec<&Post> = posts.iter().collect();
    sorted.sort_by(|a, b| {
        engagement_score(b)
            .cmp(&engagement_score(a))
            .then_with(|| a.post_id.cmp(&b.post_id))
    });
    sorted
}

/// Bucket boundaries `[start, end)` over the engagement-descending order.
/// The last bucket absorbs the remainder.
pub fn bucket_bounds(corpus_size: usize, bucket_count: usize) -> Vec<(usize, usize)> {
    let size = corpus_size / bucket_count;
    (0..bucket_count)
        .map(|b| {
            let start = b * size;
            let end = if b + 1 == bucket_count { corpus_size } else { start + size };
            (start, end)
        })
        .collect()
}

/// Systematic sample of `per_bucket` posts from each equal-count engagement
/// bucket, with a seeded starting offset per bucket.
pub fn stratified_sample(corpus: &Corpus, plan: &SamplePlan) -> Result<Sample, CorpusError> {
    plan.validate(corpus.len())?;
    let ordered = engagement_order(corpus.posts());
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut sample = Sample {
        posts: Vec::with_capacity(plan.bucket_count * plan.per_bucket),
        buckets: Vec::with_capacity(plan.bucket_count * plan.per_bucket),
    };
    for (bucket, (start, end)) in bucket_bounds(ordered.len(), plan.bucket_count).into_iter().enumerate() {
        let stride = (end - start) / plan.per_bucket;
        let offset = rng.random_range(0..stride);
        for k in 0..plan.per_bucket {
            sample.posts.push(ordered[start + offset + k * stride].clone());
            sample.buckets.push(bucket);
        }
    }
    Ok(sample)
}

/// Deterministic two-way split (e.g. development / test). Posts are ordered
/// by id, shuffled with `seed`, and the first `first_size` go to the first set.
/// Each side is returned in post id order.
pub fn split(posts: &[Post], first_size: usize, seed: u64) -> Result<(Vec<Post>, Vec<Post>), CorpusError> {
    if first_size > posts.len() {
        return Err(CorpusError::SplitTooLarge {
            wanted: first_size,
            available: posts.len(),
        });
    }
    let mut ordered: Vec<&Post> = posts.iter().collect();
    ordered.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    ordered.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = ordered.split_at(first_size);
    let collect = |part: &[&Post]| {
        let mut v: Vec<Post> = part.iter().map(|p| (*p).clone()).collect();
        v.sort_by(|x, y| x.post_id.cmp(&y.post_id));
        v
    };
    Ok((collect(a), collect(b)))
}

/// One rater's attitude scores, keyed by post id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationColumn {
    pub rater_id: String,
    pub ratings: BTreeMap<String, AttitudeScore>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowRejection {
    pub line: usize,
    pub post_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub accepted: usize,
    pub rejected: Vec<RowRejection>,
}

impl AnnotationColumn {
    pub fn new(rater_id: impl Into<String>) -> Self {
        Self {
            rater_id: rater_id.into(),
            ratings: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn get(&self, post_id: &str) -> Option<&AttitudeScore> {
        self.ratings.get(post_id)
    }

    pub fn insert(&mut self, score: AttitudeScore) {
        self.ratings.insert(score.post_id().to_string(), score);
    }

    /// Write the CSV form: `post_id,v1..v8,rater_id`, rows in post id order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CorpusError> {
        let mut writer = csv::Writer::from_writer(w);
        let mut header = vec!["post_id".to_string()];
        header.extend(VariableId::ALL.iter().map(|v| v.column()));
        header.push("rater_id".into());
        writer.write_record(&header)?;
        for score in self.ratings.values() {
            let mut row = vec![score.post_id().to_string()];
            row.extend(score.scores().iter().map(|s| s.to_string()));
            row.push(self.rater_id.clone());
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Write one AttitudeScore JSON object per line, in post id order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for score in self.ratings.values() {
            serde_json::to_writer(&mut w, score).map_err(|e| CorpusError::Json {
                line: 0,
                message: e.to_string(),
            })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let w = BufWriter::new(File::create(path)?);
        match column_format(path)? {
            ColumnFormat::Csv => self.write_csv(w),
            ColumnFormat::Jsonl => self.write_jsonl(w),
        }
    }

    /// Load a CSV or JSONL column, picking the format from the extension.
    pub fn load(
        path: &Path,
        rater_id: &str,
        corpus: Option<&Corpus>,
    ) -> Result<(AnnotationColumn, ImportReport), CorpusError> {
        let file = File::open(path)?;
        match column_format(path)? {
            ColumnFormat::Csv => import_annotations(file, rater_id, corpus),
            ColumnFormat::Jsonl => import_annotations_jsonl(BufReader::new(file), rater_id, corpus),
        }
    }
}

enum ColumnFormat {
    Csv,
    Jsonl,
}

fn column_format(path: &Path) -> Result<ColumnFormat, CorpusError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(ColumnFormat::Csv),
        Some("jsonl") | Some("json") | Some("ndjson") => Ok(ColumnFormat::Jsonl),
        _ => Err(CorpusError::UnknownFormat(path.display().to_string())),
    }
}

fn admit(
    column: &mut AnnotationColumn,
    report: &mut ImportReport,
    corpus: Option<&Corpus>,
    line: usize,
    score: AttitudeScore,
) {
    let post_id = score.post_id().to_string();
    let reason = if corpus.is_some_and(|c| !c.contains(&post_id)) {
        Some(format!("unknown post_id `{post_id}`"))
    } else if column.ratings.contains_key(&post_id) {
        Some(format!("duplicate post_id `{post_id}`"))
    } else {
        None
    };
    match reason {
        Some(reason) => report.rejected.push(RowRejection { line, post_id, reason }),
        None => {
            column.insert(score);
            report.accepted += 1;
        }
    }
}

/// Import a manual annotation CSV (`post_id, v1..v8[, rater_id]`).
///
/// Scores must be in 1..=3; totals are always recomputed. Rejected rows are
/// reported with their 1-based file line (the header is line 1).
pub fn import_annotations<R: Read>(
    source: R,
    rater_id: &str,
    corpus: Option<&Corpus>,
) -> Result<(AnnotationColumn, ImportReport), CorpusError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_lowercase())
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let id_col = find("post_id")?;
    let var_cols: Vec<usize> = VariableId::ALL
        .iter()
        .map(|v| find(&v.column()))
        .collect::<Result<_, _>>()?;

    let mut column = AnnotationColumn::new(rater_id);
    let mut report = ImportReport::default();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let post_id = record.get(id_col).unwrap_or("").trim().to_string();
        let mut scores = Vec::with_capacity(8);
        let mut problem = None;
        for (v, &col) in VariableId::ALL.iter().zip(&var_cols) {
            let raw = record.get(col).unwrap_or("").trim();
            match raw.parse::<i64>().ok().map(Score::new) {
                Some(Ok(s)) => scores.push(s),
                _ => {
                    problem = Some(format!("{}: score `{raw}` is not in 1..=3", v.column()));
                    break;
                }
            }
        }
        if post_id.is_empty() {
            problem.get_or_insert_with(|| "empty post_id".to_string());
        }
        match problem {
            Some(reason) => report.rejected.push(RowRejection { line, post_id, reason }),
            None => {
                let scores: [Score; 8] = scores.try_into().expect("eight scores");
                let score = AttitudeScore::from_scores(post_id, scores, rater_id);
                admit(&mut column, &mut report, corpus, line, score);
            }
        }
    }
    Ok((column, report))
}

/// Import a JSONL column of AttitudeScore records. The rater id on each
/// record is replaced by `rater_id` when non-empty.
pub fn import_annotations_jsonl<R: BufRead>(
    source: R,
    rater_id: &str,
    corpus: Option<&Corpus>,
) -> Result<(AnnotationColumn, ImportReport), CorpusError> {
    let mut column = AnnotationColumn::new(rater_id);
    let mut report = ImportReport::default();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AttitudeScore>(&line) {
            Ok(score) => {
                if column.rater_id.is_empty() {
                    column.rater_id = score.rater_id().to_string();
                }
                let score = if rater_id.is_empty() {
                    score
                } else {
                    AttitudeScore::from_scores(score.post_id(), score.scores(), rater_id)
                };
                admit(&mut column, &mut report, corpus, line_no, score);
            }
            Err(e) => {
                let post_id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("post_id").and_then(|p| p.as_str()).map(str::to_string))
                    .unwrap_or_default();
                report.rejected.push(RowRejection {
                    line: line_no,
                    post_id,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((column, report))
}

/// Ids present in both columns, ascending.
pub fn shared_post_ids<'a>(a: &'a AnnotationColumn, b: &AnnotationColumn) -> Vec<&'a str> {
    let other: HashSet<&str> = b.ratings.keys().map(String::as_str).collect();
    a.ratings
        .keys()
        .map(String::as_str)
        .filter(|id| other.contains(id))
        .collect()
}
