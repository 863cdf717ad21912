//! Brute-force reference implementations used to check the library.
//!
//! These deliberately take a different route from the library code: alpha is
//! computed from pairwise disagreements over every pairable value instance
//! rather than a coincidence matrix, ranks are counted directly, and F1 goes
//! through precision and recall of an explicit confusion matrix.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Krippendorff's alpha. `None` when undefined (no pairable values or no
/// expected disagreement).
pub fn alpha(cells: &[Vec<Option<i64>>], ordinal: bool) -> Option<f64> {
    let units: Vec<Vec<i64>> = cells
        .iter()
        .map(|r| r.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let all: Vec<i64> = units.iter().flatten().copied().collect();
    if all.len() < 2 {
        return None;
    }
    let count = |v: i64| all.iter().filter(|&&x| x == v).count() as f64;
    let distance = |c: i64, k: i64| -> f64 {
        if ordinal {
            let (lo, hi) = (c.min(k), c.max(k));
            let between = all.iter().filter(|&&x| x >= lo && x <= hi).count() as f64;
            let d = between - (count(c) + count(k)) / 2.0;
            d * d
        } else {
            ((c - k) * (c - k)) as f64
        }
    };
    let mut memo = std::collections::HashMap::new();
    let mut delta = |c: i64, k: i64| *memo.entry((c, k)).or_insert_with(|| distance(c, k));
    let n = all.len() as f64;
    let mut observed = 0.0;
    for u in &units {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    observed += delta(u[i], u[j]) / (m - 1.0);
                }
            }
        }
    }
    let d_o = observed / n;
    let mut expected = 0.0;
    for p in 0..all.len() {
        for q in 0..all.len() {
            if p != q {
                expected += delta(all[p], all[q]);
            }
        }
    }
    let d_e = expected / (n * (n - 1.0));
    if d_e == 0.0 {
        return None;
    }
    Some(1.0 - d_o / d_e)
}

pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

pub fn accuracy(truth: &[i64], pred: &[i64]) -> f64 {
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Macro F1 over the classes seen in either list, via precision and recall.
#[allow(clippy::needless_range_loop)]
pub fn f1_macro(truth: &[i64], pred: &[i64]) -> f64 {
    let mut classes: Vec<i64> = truth.iter().chain(pred).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    let at = |v: i64| classes.iter().position(|&c| c == v).unwrap();
    let mut confusion = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(pred) {
        confusion[at(*t)][at(*p)] += 1;
    }
    let mut total = 0.0;
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..k).map(|r| confusion[r][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        total += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    total / k as f64
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Random items x raters matrix with values in `lo..=hi` and some gaps.
pub fn random_matrix(rng: &mut ChaCha8Rng, items: usize, raters: usize, lo: i64, hi: i64) -> Vec<Vec<Option<i64>>> {
    let gap = rng.random_range(0.0..0.3);
    (0..items)
        .map(|_| {
            (0..raters)
                .map(|_| (!rng.random_bool(gap)).then(|| rng.random_range(lo..=hi)))
                .collect()
        })
        .collect()
}

/// A column and a noisy copy of it, so agreement is neither trivial nor nil.
pub fn random_pair(rng: &mut ChaCha8Rng, n: usize, lo: i64, hi: i64) -> (Vec<i64>, Vec<i64>) {
    let a: Vec<i64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    let noise = rng.random_range(0.0..1.0);
    let b = a
        .iter()
        .map(|&v| if rng.random_bool(noise) { rng.random_range(lo..=hi) } else { v })
        .collect();
    (a, b)
}
