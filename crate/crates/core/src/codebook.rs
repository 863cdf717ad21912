//! The eight anti-democratic attitude variables, their factor rubrics and the
//! 8-24 total score.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodebookError {
    #[error("variable {variable} takes a {expected} rubric, got a {got} profile")]
    ArityMismatch {
        variable: VariableId,
        expected: &'static str,
        got: &'static str,
    },
    #[error("score {0} is outside 1..=3")]
    ScoreOutOfRange(i64),
    #[error("unknown variable ordinal {0}")]
    UnknownVariable(i64),
    #[error("post {post_id}: missing rating for {variable}")]
    MissingVariable { post_id: String, variable: VariableId },
    #[error("post {post_id}: duplicate rating for {variable}")]
    DuplicateVariable { post_id: String, variable: VariableId },
    #[error("post {post_id}: stored total {stored} does not match sum {sum}")]
    TotalMismatch { post_id: String, stored: u8, sum: u8 },
}

/// One of the eight attitude variables, in fixed table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableId {
    PartisanAnimosity,
    UndemocraticPractices,
    PartisanViolence,
    UndemocraticCandidates,
    OppositionBipartisanship,
    SocialDistrust,
    SocialDistance,
    BiasedEvaluation,
}

impl VariableId {
    pub const ALL: [VariableId; 8] = [
        VariableId::PartisanAnimosity,
        VariableId::UndemocraticPractices,
        VariableId::PartisanViolence,
        VariableId::UndemocraticCandidates,
        VariableId::OppositionBipartisanship,
        VariableId::SocialDistrust,
        VariableId::SocialDistance,
        VariableId::BiasedEvaluation,
    ];

    /// 1-based ordinal (`v1`..`v8`).
    pub fn ordinal(self) -> u8 {
        self as u8 + 1
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: i64) -> Result<Self, CodebookError> {
        usize::try_from(ordinal)
            .ok()
            .and_then(|o| o.checked_sub(1))
            .and_then(|i| Self::ALL.get(i).copied())
            .ok_or(CodebookError::UnknownVariable(ordinal))
    }

    /// Column key used by file formats: `v1`..`v8`.
    pub fn column(self) -> String {
        format!("v{}", self.ordinal())
    }

    pub fn slug(self) -> &'static str {
        match self {
            VariableId::PartisanAnimosity => "partisan_animosity",
            VariableId::UndemocraticPractices => "undemocratic_practices",
            VariableId::PartisanViolence => "partisan_violence",
            VariableId::UndemocraticCandidates => "undemocratic_candidates",
            VariableId::OppositionBipartisanship => "opposition_bipartisanship",
            VariableId::SocialDistrust => "social_distrust",
            VariableId::SocialDistance => "social_distance",
            VariableId::BiasedEvaluation => "biased_evaluation",
        }
    }

    pub fn form(self) -> RubricForm {
        match self {
            VariableId::PartisanAnimosity
            | VariableId::OppositionBipartisanship
            | VariableId::SocialDistrust
            | VariableId::BiasedEvaluation => RubricForm::TwoFactor,
            VariableId::UndemocraticPractices | VariableId::PartisanViolence => {
                RubricForm::ThreeFactorBOnly
            }
            VariableId::UndemocraticCandidates | VariableId::SocialDistance => {
                RubricForm::ThreeFactorAOnly
            }
        }
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for VariableId {
    type Err = CodebookError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(v) = Self::ALL.iter().find(|v| v.slug() == s) {
            return Ok(*v);
        }
        let digits = s.strip_prefix('v').or_else(|| s.strip_prefix('V')).unwrap_or(s);
        digits
            .parse::<i64>()
            .map_err(|_| CodebookError::UnknownVariable(-1))
            .and_then(Self::from_ordinal)
    }
}

/// Shape of a variable's rubric.
///
/// `ThreeFactorBOnly` rubrics state the mid score for "B without A"
/// (V2, V3); `ThreeFactorAOnly` rubrics state it for "A without B" (V4, V7).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RubricForm {
    TwoFactor,
    ThreeFactorBOnly,
    ThreeFactorAOnly,
}

impl RubricForm {
    fn label(self) -> &'static str {
        match self {
            RubricForm::TwoFactor => "two-factor",
            _ => "three-factor",
        }
    }
}

/// A rating on the 1-3 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Score(u8);

impl Score {
    pub const MIN: Score = Score(1);
    pub const MID: Score = Score(2);
    pub const MAX: Score = Score(3);

    pub fn new(value: i64) -> Result<Self, CodebookError> {
        match value {
            1..=3 => Ok(Score(value as u8)),
            other => Err(CodebookError::ScoreOutOfRange(other)),
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = i64::deserialize(deserializer)?;
        Score::new(raw).map_err(D::Error::custom)
    }
}

/// Which rubric factors were judged present for one variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorProfile {
    Two {
        variable: VariableId,
        a: bool,
        b: bool,
    },
    Three {
        variable: VariableId,
        a: bool,
        b1: bool,
        b2: bool,
    },
}

impl FactorProfile {
    pub fn variable(&self) -> VariableId {
        match *self {
            FactorProfile::Two { variable, .. } | FactorProfile::Three { variable, .. } => variable,
        }
    }

    /// Every factor combination for `variable`, in binary counting order.
    pub fn enumerate(variable: VariableId) -> Vec<FactorProfile> {
        match variable.form() {
            RubricForm::TwoFactor => (0..4u8)
                .map(|m| FactorProfile::Two {
                    variable,
                    a: m & 2 != 0,
                    b: m & 1 != 0,
                })
                .collect(),
            _ => (0..8u8)
                .map(|m| FactorProfile::Three {
                    variable,
                    a: m & 4 != 0,
                    b1: m & 2 != 0,
                    b2: m & 1 != 0,
                })
                .collect(),
        }
    }
}

/// Where a rubric cell's score comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellSource {
    /// The cell is spelled out by the variable's rubric text.
    Stated,
    /// The rubric text is silent; the partial-profile completion rule applies.
    Completed,
}

/// Score a factor profile, also reporting whether the cell was stated by the
/// rubric or filled by the completion rule (any partial profile scores 2).
pub fn rubric_cell(profile: &FactorProfile) -> Result<(Score, CellSource), CodebookError> {
    let variable = profile.variable();
    let form = variable.form();
    match (*profile, form) {
        (FactorProfile::Two { a, b, .. }, RubricForm::TwoFactor) => {
            let score = match (a, b) {
                (false, false) => Score::MIN,
                (true, true) => Score::MAX,
                _ => Score::MID,
            };
            Ok((score, CellSource::Stated))
        }
        (FactorProfile::Three { a, b1, b2, .. }, RubricForm::ThreeFactorBOnly) => Ok(match (a, b1, b2) {
            (false, false, false) => (Score::MIN, CellSource::Stated),
            (true, true, true) => (Score::MAX, CellSource::Stated),
            (false, _, _) => (Score::MID, CellSource::Stated),
            (true, _, _) => (Score::MID, CellSource::Completed),
        }),
        (FactorProfile::Three { a, b1, b2, .. }, RubricForm::ThreeFactorAOnly) => Ok(match (a, b1, b2) {
            (false, false, false) => (Score::MIN, CellSource::Stated),
            (true, true, true) => (Score::MAX, CellSource::Stated),
            (true, false, false) => (Score::MID, CellSource::Stated),
            _ => (Score::MID, CellSource::Completed),
        }),
        (got, form) => Err(CodebookError::ArityMismatch {
            variable,
            expected: form.label(),
            got: match got {
                FactorProfile::Two { .. } => "two-factor",
                FactorProfile::Three { .. } => "three-factor",
            },
        }),
    }
}

pub fn rubric_score(profile: &FactorProfile) -> Result<Score, CodebookError> {
    rubric_cell(profile).map(|(score, _)| score)
}

/// One rater's score on one variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableRating {
    pub variable: VariableId,
    pub score: Score,
    #[serde(default)]
    pub reason: String,
    pub rater_id: String,
}

impl VariableRating {
    pub fn new(variable: VariableId, score: Score, rater_id: impl Into<String>) -> Self {
        Self {
            variable,
            score,
            reason: String::new(),
            rater_id: rater_id.into(),
        }
    }
}

/// The eight per-variable ratings of one post and their total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttitudeScore {
    post_id: String,
    ratings: [VariableRating; 8],
    total: u8,
}

/// Validate and sum eight ratings (one per variable, any order).
pub fn total_score(
    post_id: impl Into<String>,
    ratings: impl IntoIterator<Item = VariableRating>,
) -> Result<AttitudeScore, CodebookError> {
    let post_id = post_id.into();
    let mut slots: [Option<VariableRating>; 8] = Default::default();
    for rating in ratings {
        let slot = &mut slots[rating.variable.index()];
        if slot.is_some() {
            return Err(CodebookError::DuplicateVariable {
                post_id,
                variable: rating.variable,
            });
        }
        *slot = Some(rating);
    }
    let mut out = Vec::with_capacity(8);
    for (slot, variable) in slots.into_iter().zip(VariableId::ALL) {
        match slot {
            Some(r) => out.push(r),
            None => return Err(CodebookError::MissingVariable { post_id, variable }),
        }
    }
    let ratings: [VariableRating; 8] = out.try_into().expect("eight slots");
    let total = ratings.iter().map(|r| r.score.get()).sum();
    Ok(AttitudeScore {
        post_id,
        ratings,
        total,
    })
}

impl AttitudeScore {
    /// Build from eight scores in table order, all attributed to one rater.
    pub fn from_scores(
        post_id: impl Into<String>,
        scores: [Score; 8],
        rater_id: &str,
    ) -> AttitudeScore {
        total_score(
            post_id,
            VariableId::ALL
                .iter()
                .zip(scores)
                .map(|(v, s)| VariableRating::new(*v, s, rater_id)),
        )
        .expect("one score per variable")
    }

    pub fn post_id(&self) -> &str {
        &self.post_id
    }

    pub fn ratings(&self) -> &[VariableRating; 8] {
        &self.ratings
    }

    pub fn score(&self, variable: VariableId) -> Score {
        self.ratings[variable.index()].score
    }

    pub fn scores(&self) -> [Score; 8] {
        std::array::from_fn(|i| self.ratings[i].score)
    }

    pub fn total(&self) -> u8 {
        self.total
    }

    /// Rater of the first rating; all ratings share it for imported columns.
    pub fn rater_id(&self) -> &str {
        &self.ratings[0].rater_id
    }
}

#[derive(Serialize, Deserialize)]
struct AttitudeScoreWire {
    post_id: String,
    v1: Score,
    v2: Score,
    v3: Score,
    v4: Score,
    v5: Score,
    v6: Score,
    v7: Score,
    v8: Score,
    total: u8,
    rater_id: String,
}

impl Serialize for AttitudeScore {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let [v1, v2, v3, v4, v5, v6, v7, v8] = self.scores();
        AttitudeScoreWire {
            post_id: self.post_id.clone(),
            v1,
            v2,
            v3,
            v4,
            v5,
            v6,
            v7,
            v8,
            total: self.total,
            rater_id: self.rater_id().to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AttitudeScore {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let w = AttitudeScoreWire::deserialize(deserializer)?;
        let score = AttitudeScore::from_scores(
            w.post_id,
            [w.v1, w.v2, w.v3, w.v4, w.v5, w.v6, w.v7, w.v8],
            &w.rater_id,
        );
        if score.total != w.total {
            return Err(D::Error::custom(CodebookError::TotalMismatch {
                post_id: score.post_id,
                stored: w.total,
                sum: score.total,
            }));
        }
        Ok(score)
    }
}

/// Rubric description used to build prompts and documentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RubricText {
    pub name: &'static str,
    pub definition: &'static str,
    pub factor_list: Vec<(&'static str, &'static str)>,
    pub scale_mapping: Vec<&'static str>,
}

const TWO_FACTOR_SCALE: [&str; 3] = [
    "Rate 1 if neither factor exists",
    "Rate 2 if one of the factors exists",
    "Rate 3 if both factors exist",
];
const B_ONLY_SCALE: [&str; 3] = [
    "Rate 1 if doesn't satisfy any of the factors",
    "Rate 2 if doesn't satisfy A, but satisfies B1 or B2",
    "Rate 3 if satisfies A, B1 and B2",
];
const A_ONLY_SCALE: [&str; 3] = [
    "Rate 1 if doesn't satisfy any of the factors",
    "Rate 2 if satisfies A, but not B1 or B2",
    "Rate 3 if satisfies A, B1 and B2",
];

pub fn codebook_text(variable: VariableId) -> RubricText {
    const NAME_CALLING: &str = "Partisan name-calling";
    const EMOTION: &str = "Emotion or exaggeration";
    const TRUST_TERMS: &str = "Any name-calling or terms that reduce trust";
    let (name, definition, factor_list): (_, _, Vec<(&str, &str)>) = match variable {
        VariableId::PartisanAnimosity => (
            "partisan animosity",
            "dislike for opposing partisans",
            vec![("A", NAME_CALLING), ("B", EMOTION)],
        ),
        VariableId::UndemocraticPractices => (
            "support for undemocratic practices",
            "willingness to forgo democratic principles for partisan gain",
            vec![
                ("A", "Show support for undemocratic practices"),
                ("B1", NAME_CALLING),
                ("B2", EMOTION),
            ],
        ),
        VariableId::PartisanViolence => (
            "support for partisan violence",
            "willingness to use violent tactics against outpartisans",
            vec![
                ("A", "Show support for partisan violence"),
                ("B1", NAME_CALLING),
                ("B2", EMOTION),
            ],
        ),
        VariableId::UndemocraticCandidates => (
            "support for undemocratic candidates",
            "willingness to ignore undemocratic practices to elect inparty candidates",
            vec![
                ("A", "Show support for undemocratic candidates"),
                ("B1", NAME_CALLING),
                ("B2", EMOTION),
            ],
        ),
        VariableId::OppositionBipartisanship => (
            "opposition to bipartisanship",
            "resistance to cross-partisan collaboration",
            vec![("A", TRUST_TERMS), ("B", EMOTION)],
        ),
        VariableId::SocialDistrust => (
            "social distrust",
            "distrust of people in general",
            vec![("A", TRUST_TERMS), ("B", EMOTION)],
        ),
        VariableId::SocialDistance => (
            "social distance",
            "resistance to interpersonal contact with outpartisans",
            vec![
                (
                    "A",
                    "Any terms that increase distrust, distance, insecurity, hate, prejudice, or discrimination",
                ),
                ("B1", EMOTION),
                (
                    "B2",
                    "Any events that damages communities or decrease societal trust such as mass shooting",
                ),
            ],
        ),
        VariableId::BiasedEvaluation => (
            "biased evaluation of politicized facts",
            "skepticism of facts that favor the worldview of the other party",
            vec![
                (
                    "A",
                    "partially present political facts or discuss a controversial issue with a certain political stance",
                ),
                ("B", "emotion/exaggeration"),
            ],
        ),
    };
    let scale_mapping = match variable.form() {
        RubricForm::TwoFactor => TWO_FACTOR_SCALE,
        RubricForm::ThreeFactorBOnly => B_ONLY_SCALE,
        RubricForm::ThreeFactorAOnly => A_ONLY_SCALE,
    }
    .to_vec();
    RubricText {
        name,
        definition,
        factor_list,
        scale_mapping,
    }
}
