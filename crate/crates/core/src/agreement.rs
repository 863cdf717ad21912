//! Agreement statistics between rater columns.
//!
//! Everything here is generic over [`Real`] so the same code runs in `f32`
//! and `f64`. Metrics that are undefined for the given data (no variation,
//! nothing pairable) come back as [`StatsError::Undefined`] and are carried
//! into reports as [`Metric::Undefined`], never as 0 or NaN.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::codebook::VariableId;
use crate::corpus::{shared_post_ids, AnnotationColumn};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UndefinedReason {
    NoVariation,
    NoPairableUnits,
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UndefinedReason::NoVariation => "no variation in the data",
            UndefinedReason::NoPairableUnits => "no unit has two or more ratings",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("metric undefined: {0}")]
    Undefined(UndefinedReason),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("rating matrix needs at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("columns share {shared} post ids ({left} vs {right} rated); at least {needed} required")]
    InsufficientOverlap {
        shared: usize,
        left: usize,
        right: usize,
        needed: usize,
    },
}

/// A metric value, or an explicit marker that it is undefined for the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric<T> {
    Value(T),
    Undefined,
}

impl<T: Real> Metric<T> {
    fn from_result(r: Result<T, StatsError>) -> Result<Self, StatsError> {
        match r {
            Ok(v) => Ok(Metric::Value(v)),
            Err(StatsError::Undefined(_)) => Ok(Metric::Undefined),
            Err(e) => Err(e),
        }
    }

    pub fn value(self) -> Option<T> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }
}

impl<T: Serialize> Serialize for Metric<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => v.serialize(s),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<T: Real> fmt::Display for Metric<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{:.4}", v.to_f64().unwrap_or(f64::NAN)),
            Metric::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    ThreePoint,
    Total,
}

/// Distance function for Krippendorff's alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMetric {
    #[default]
    Ordinal,
    Interval,
}

/// Items x raters table of optional integer ratings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    pub items: Vec<String>,
    pub raters: Vec<String>,
    /// `cells[item][rater]`
    pub cells: Vec<Vec<Option<i64>>>,
    pub scale: Scale,
}

impl RatingMatrix {
    pub fn new(
        items: Vec<String>,
        raters: Vec<String>,
        cells: Vec<Vec<Option<i64>>>,
        scale: Scale,
    ) -> Result<Self, StatsError> {
        if raters.len() < 2 {
            return Err(StatsError::TooFewRaters(raters.len()));
        }
        if items.len() != cells.len() {
            return Err(StatsError::LengthMismatch {
                left: items.len(),
                right: cells.len(),
            });
        }
        if let Some((row, r)) = cells.iter().enumerate().find(|(_, r)| r.len() != raters.len()) {
            return Err(StatsError::RaggedRow {
                row,
                got: r.len(),
                expected: raters.len(),
            });
        }
        Ok(Self {
            items,
            raters,
            cells,
            scale,
        })
    }

    /// Two complete rater columns over anonymous items.
    pub fn from_pair(a: &[i64], b: &[i64], scale: Scale) -> Result<Self, StatsError> {
        if a.len() != b.len() {
            return Err(StatsError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        RatingMatrix::new(
            (0..a.len()).map(|i| i.to_string()).collect(),
            vec!["a".into(), "b".into()],
            a.iter().zip(b).map(|(x, y)| vec![Some(*x), Some(*y)]).collect(),
            scale,
        )
    }

    pub fn pairable_items(&self) -> usize {
        self.cells
            .iter()
            .filter(|r| r.iter().flatten().count() >= 2)
            .count()
    }
}

/// Krippendorff's alpha from the coincidence matrix.
///
/// Units with fewer than two ratings are not pairable and are ignored.
pub fn krippendorff_alpha<T: Real>(matrix: &RatingMatrix, metric: AlphaMetric) -> Result<T, StatsError> {
    let units: Vec<Vec<i64>> = matrix
        .cells
        .iter()
        .map(|row| row.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|vals| vals.len() >= 2)
        .collect();
    if units.is_empty() {
        return Err(StatsError::Undefined(UndefinedReason::NoPairableUnits));
    }
    let values: Vec<i64> = units.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if values.len() < 2 {
        return Err(StatsError::Undefined(UndefinedReason::NoVariation));
    }
    let k = values.len();
    let pos = |v: i64| values.binary_search(&v).expect("value collected above");

    let mut coincidence = vec![T::zero(); k * k];
    let mut counts = vec![0usize; k];
    for unit in &units {
        counts.iter_mut().for_each(|c| *c = 0);
        for &v in unit {
            counts[pos(v)] += 1;
        }
        let weight = T::one() / <T as Real>::from_usize(unit.len() - 1);
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for d in 0..k {
                let pairs = if c == d { counts[c] * (counts[c] - 1) } else { counts[c] * counts[d] };
                if pairs > 0 {
                    coincidence[c * k + d] = coincidence[c * k + d] + <T as Real>::from_usize(pairs) * weight;
                }
            }
        }
    }

    let marginals: Vec<T> = (0..k)
        .map(|c| (0..k).fold(T::zero(), |acc, d| acc + coincidence[c * k + d]))
        .collect();
    let n = marginals.iter().fold(T::zero(), |acc, &m| acc + m);
    let half = T::lit(0.5);
    let distance = |c: usize, d: usize| -> T {
        match metric {
            AlphaMetric::Interval => {
                let diff = <T as Real>::from_i64(values[c] - values[d]);
                diff * diff
            }
            AlphaMetric::Ordinal => {
                let (lo, hi) = if c <= d { (c, d) } else { (d, c) };
                let span = marginals[lo..=hi].iter().fold(T::zero(), |acc, &m| acc + m);
                let x = span - (marginals[c] + marginals[d]) * half;
                x * x
            }
        }
    };

    let mut observed = T::zero();
    let mut expected = T::zero();
    for c in 0..k {
        for d in 0..k {
            if c == d {
                continue;
            }
            let delta = distance(c, d);
            observed = observed + coincidence[c * k + d] * delta;
            expected = expected + marginals[c] * marginals[d] * delta;
        }
    }
    if expected == T::zero() {
        return Err(StatsError::Undefined(UndefinedReason::NoVariation));
    }
    Ok(T::one() - (n - T::one()) * observed / expected)
}

/// Ranks starting at 1, with tied values sharing their average rank.
pub fn average_ranks<T: Real>(x: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j share rank mean((i+1)..=(j+1))
        let rank = <T as Real>::from_usize(i + j + 2) * T::lit(0.5);
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: x.len() });
    }
    let n = <T as Real>::from_usize(x.len());
    let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a + b) / n;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::Undefined(UndefinedReason::NoVariation));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Spearman's rank correlation: Pearson correlation of tie-averaged ranks.
pub fn spearman_rho<T: Real>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { needed: 3, got: x.len() });
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationMetrics<T> {
    pub accuracy: T,
    pub f1_macro: T,
}

/// Exact-match accuracy and macro-averaged F1 over the classes that appear
/// in either list. A class with no true positives has F1 = 0.
pub fn classification_metrics<T: Real, L: Ord + Copy>(
    truth: &[L],
    pred: &[L],
) -> Result<ClassificationMetrics<T>, StatsError> {
    if truth.len() != pred.len() {
        return Err(StatsError::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let classes: Vec<L> = truth.iter().chain(pred).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let idx = |l: &L| classes.binary_search(l).expect("class collected above");
    let mut tp = vec![0usize; classes.len()];
    let mut fp = vec![0usize; classes.len()];
    let mut fn_ = vec![0usize; classes.len()];
    let mut correct = 0usize;
    for (t, p) in truth.iter().zip(pred) {
        if t == p {
            correct += 1;
            tp[idx(t)] += 1;
        } else {
            fp[idx(p)] += 1;
            fn_[idx(t)] += 1;
        }
    }
    let f1_sum = (0..classes.len()).fold(T::zero(), |acc, c| {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom == 0 || tp[c] == 0 {
            acc
        } else {
            acc + <T as Real>::from_usize(2 * tp[c]) / <T as Real>::from_usize(denom)
        }
    });
    Ok(ClassificationMetrics {
        accuracy: <T as Real>::from_usize(correct) / <T as Real>::from_usize(truth.len()),
        f1_macro: f1_sum / <T as Real>::from_usize(classes.len()),
    })
}

/// Mean absolute error.
pub fn mae<T: Real>(a: &[T], b: &[T]) -> Result<T, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let sum = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs());
    Ok(sum / <T as Real>::from_usize(a.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableAgreement<T> {
    pub variable: VariableId,
    pub alpha: Metric<T>,
    pub accuracy: T,
    pub f1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallAgreement<T> {
    pub alpha: Metric<T>,
    pub spearman_rho: Metric<T>,
    pub mae: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub truth_rater: String,
    pub other_rater: String,
    pub alpha_metric: AlphaMetric,
    pub f1_average: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport<T> {
    pub n_items: usize,
    pub per_variable: Vec<VariableAgreement<T>>,
    pub overall: OverallAgreement<T>,
    pub meta: ReportMeta,
}

pub const MIN_SHARED_ITEMS: usize = 3;

/// Compare a reference column (`manual`, treated as truth) with another
/// column on their shared posts.
///
/// Per-variable alpha uses `alpha_metric` on the 1-3 scale; the overall block
/// uses it on the 8-24 totals.
pub fn build_report<T: Real>(
    manual: &AnnotationColumn,
    other: &AnnotationColumn,
    alpha_metric: AlphaMetric,
) -> Result<AgreementReport<T>, StatsError> {
    let shared = shared_post_ids(manual, other);
    if shared.len() < MIN_SHARED_ITEMS {
        return Err(StatsError::InsufficientOverlap {
            shared: shared.len(),
            left: manual.len(),
            right: other.len(),
            needed: MIN_SHARED_ITEMS,
        });
    }
    let pairs: Vec<_> = shared
        .iter()
        .map(|id| (&manual.ratings[*id], &other.ratings[*id]))
        .collect();
    let items: Vec<String> = shared.iter().map(|s| s.to_string()).collect();
    let raters = vec![manual.rater_id.clone(), other.rater_id.clone()];

    let mut per_variable = Vec::with_capacity(8);
    for variable in VariableId::ALL {
        let truth: Vec<u8> = pairs.iter().map(|(m, _)| m.score(variable).get()).collect();
        let pred: Vec<u8> = pairs.iter().map(|(_, o)| o.score(variable).get()).collect();
        let matrix = RatingMatrix::new(
            items.clone(),
            raters.clone(),
            truth.iter().zip(&pred).map(|(&t, &p)| vec![Some(t as i64), Some(p as i64)]).collect(),
            Scale::ThreePoint,
        )?;
        let cls = classification_metrics::<T, u8>(&truth, &pred)?;
        per_variable.push(VariableAgreement {
            variable,
            alpha: Metric::from_result(krippendorff_alpha(&matrix, alpha_metric))?,
            accuracy: cls.accuracy,
            f1: cls.f1_macro,
        });
    }

    let totals_a: Vec<i64> = pairs.iter().map(|(m, _)| m.total() as i64).collect();
    let totals_b: Vec<i64> = pairs.iter().map(|(_, o)| o.total() as i64).collect();
    let matrix = RatingMatrix::new(
        items,
        raters,
        totals_a.iter().zip(&totals_b).map(|(&a, &b)| vec![Some(a), Some(b)]).collect(),
        Scale::Total,
    )?;
    let fa: Vec<T> = totals_a.iter().map(|&v| <T as Real>::from_i64(v)).collect();
    let fb: Vec<T> = totals_b.iter().map(|&v| <T as Real>::from_i64(v)).collect();
    let overall = OverallAgreement {
        alpha: Metric::from_result(krippendorff_alpha(&matrix, alpha_metric))?,
        spearman_rho: Metric::from_result(spearman_rho(&fa, &fb))?,
        mae: mae(&fa, &fb)?,
    };

    Ok(AgreementReport {
        n_items: shared.len(),
        per_variable,
        overall,
        meta: ReportMeta {
            truth_rater: manual.rater_id.clone(),
            other_rater: other.rater_id.clone(),
            alpha_metric,
            f1_average: "macro",
        },
    })
}

impl<T: Real> AgreementReport<T> {
    /// Fixed-width text table: one row per variable, then the overall row.
    pub fn render_table(&self) -> String {
        let f = |v: T| format!("{:.4}", v.to_f64().unwrap_or(f64::NAN));
        let mut out = String::new();
        let _ = writeln!(out, "n_items: {}", self.n_items);
        let _ = writeln!(out, "{:<28} {:>10} {:>10} {:>10}", "variable", "alpha", "accuracy", "f1");
        for row in &self.per_variable {
            let _ = writeln!(
                out,
                "{:<28} {:>10} {:>10} {:>10}",
                row.variable.slug(),
                row.alpha.to_string(),
                f(row.accuracy),
                f(row.f1)
            );
        }
        let _ = writeln!(out, "{:<28} {:>10} {:>10} {:>10}", "overall", "alpha", "rho", "mae");
        let _ = writeln!(
            out,
            "{:<28} {:>10} {:>10} {:>10}",
            "total_8_24",
            self.overall.alpha.to_string(),
            self.overall.spearman_rho.to_string(),
            f(self.overall.mae)
        );
        out
    }
}
