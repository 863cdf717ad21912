use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::codebook::Score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Malformed,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRating {
    pub score: Score,
    pub reason: String,
}

/// A raw model reply and what could be read from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterResponse {
    pub raw_text: String,
    pub parsed: Option<ParsedRating>,
    pub parse_status: ParseStatus,
}

impl RaterResponse {
    fn new(raw: &str, status: ParseStatus, parsed: Option<ParsedRating>) -> Self {
        debug_assert_eq!(status == ParseStatus::Ok, parsed.is_some());
        Self {
            raw_text: raw.to_string(),
            parsed,
            parse_status: status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.parse_status == ParseStatus::Ok
    }
}

fn rating_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "Rating" token, optional punctuation/markdown, then an integer.
    RE.get_or_init(|| Regex::new(r"(?i)\brating\b[\s:=*_\[\(\-]*?([+-]?\d+)(\.\d+)?").unwrap())
}

fn reason_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)^[\s*_]*reason\b[\s*_:]*(.*)$").unwrap())
}

fn strict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)^\s*Rating:\s*(\d+)\s*###\s*Reason:\s*(.*?)\s*$").unwrap())
}

fn classify(raw: &str, digits: &str, reason: String) -> RaterResponse {
    match digits.parse::<i64>().map(Score::new) {
        Ok(Ok(score)) => RaterResponse::new(raw, ParseStatus::Ok, Some(ParsedRating { score, reason })),
        Ok(Err(_)) => RaterResponse::new(raw, ParseStatus::OutOfRange, None),
        Err(_) => RaterResponse::new(raw, ParseStatus::OutOfRange, None),
    }
}

/// Tolerant parse of a `Rating: N ### Reason: text` reply.
///
/// The score is the first integer after a case-insensitive `Rating` token.
/// The reason is everything after the first `### Reason` (or, failing that,
/// after a bare `Reason` token), trimmed.
pub fn parse_response(raw: &str) -> RaterResponse {
    let Some(caps) = rating_re().captures(raw) else {
        return RaterResponse::new(raw, ParseStatus::Malformed, None);
    };
    if caps.get(2).is_some() {
        return RaterResponse::new(raw, ParseStatus::Malformed, None);
    }
    let digits = caps.get(1).expect("group 1").as_str();
    let rest = &raw[caps.get(0).expect("match").end()..];
    let reason = rest
        .match_indices("###")
        .find_map(|(i, _)| reason_re().captures(&rest[i + 3..]).map(|c| c[1].trim().to_string()))
        .or_else(|| {
            let lower = rest.to_lowercase();
            lower.find("reason").map(|i| {
                let tail = &rest[i + "reason".len()..];
                tail.trim_start_matches(|c: char| c == ':' || c.is_whitespace()).trim().to_string()
            })
        })
        .unwrap_or_default();
    classify(raw, digits, reason)
}

/// Exact-format parse for auditing: `Rating: N ### Reason: text` only.
pub fn parse_response_strict(raw: &str) -> RaterResponse {
    match strict_re().captures(raw) {
        Some(c) => classify(raw, &c[1], c[2].to_string()),
        None => RaterResponse::new(raw, ParseStatus::Malformed, None),
    }
}

/// Canonical reply text for a parsed rating.
pub fn format_response(parsed: &ParsedRating) -> String {
    format!("Rating: {} ### Reason: {}", parsed.score, parsed.reason)
}
