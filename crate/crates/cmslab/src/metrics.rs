//! Error and saturation measurements over a finished run.
//!
//! All sums over occurrence counts are exact integer arithmetic; the single
//! final division produces the reported value. Elements that never appeared
//! (`occ == 0`) are excluded everywhere, since their relative error is
//! undefined.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::sketch::Sketch;

/// Counter coefficient-of-variation below which, with no counter left at
/// zero, the array is considered saturated (all counters concentrated around
/// one level).
pub const SATURATION_CV: f64 = 0.05;

/// Relative overestimate `(estimate - occ) / occ`.
///
/// # Panics
///
/// Panics when `occ == 0`; callers must exclude unseen elements.
pub fn relative_error(estimate: u64, occ: u64) -> f64 {
    assert!(occ >= 1, "relative error undefined for occ = 0");
    (estimate as f64 - occ as f64) / occ as f64
}

/// Occurrence-weighted average relative error over all seen elements,
/// computed by the closed form `(1/N) * sum(estimate - occ)` with
/// `N = sum(occ)`.
///
/// # Panics
///
/// Panics when the slices differ in length or no element was seen.
pub fn combined_error(estimates: &[u64], occs: &[u64]) -> f64 {
    assert_eq!(estimates.len(), occs.len());
    weighted_error(estimates.iter().copied().zip(occs.iter().copied()))
}

/// [`combined_error`] restricted to the members of one class.
///
/// # Panics
///
/// Panics when no member was seen.
pub fn class_error(
    estimates: &[u64],
    occs: &[u64],
    members: impl IntoIterator<Item = usize>,
) -> f64 {
    assert_eq!(estimates.len(), occs.len());
    weighted_error(members.into_iter().map(|id| (estimates[id], occs[id])))
}

fn weighted_error(pairs: impl Iterator<Item = (u64, u64)>) -> f64 {
    let mut total_occ: u128 = 0;
    let mut overshoot: i128 = 0;
    for (estimate, occ) in pairs {
        if occ == 0 {
            continue;
        }
        total_occ += occ as u128;
        overshoot += estimate as i128 - occ as i128;
    }
    assert!(total_occ > 0, "error undefined without occurrences");
    overshoot as f64 / total_occ as f64
}

/// One element in a frequency-ranked profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankEntry {
    /// 1-based; rank 1 is the most frequent element.
    pub rank: usize,
    pub id: usize,
    pub occ: u64,
    pub estimate: u64,
}

/// Elements sorted by descending occurrence count, ties broken by ascending
/// id.
pub fn rank_profile(estimates: &[u64], occs: &[u64]) -> Vec<RankEntry> {
    assert_eq!(estimates.len(), occs.len());
    let mut ids: Vec<usize> = (0..occs.len()).collect();
    ids.sort_by(|&a, &b| occs[b].cmp(&occs[a]).then(a.cmp(&b)));
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| RankEntry {
            rank: i + 1,
            id,
            occ: occs[id],
            estimate: estimates[id],
        })
        .collect()
}

/// Summary statistics over the whole counter array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CounterStats {
    pub mean: f64,
    /// Population standard deviation over the mean; 0 when the mean is 0.
    pub coefficient_of_variation: f64,
    /// Fraction of counters still at zero.
    pub zero_fraction: f64,
}

impl CounterStats {
    /// Saturation: counters concentrated around one common level.
    pub fn is_saturated(&self) -> bool {
        self.coefficient_of_variation < SATURATION_CV && self.zero_fraction == 0.0
    }
}

pub fn counter_stats(sketch: &Sketch) -> CounterStats {
    let counters = sketch.counters();
    let n = counters.len();
    let mut sum: u128 = 0;
    let mut sum_sq: u128 = 0;
    let mut zeros: usize = 0;
    for &c in counters {
        sum += c as u128;
        sum_sq += (c as u128) * (c as u128);
        zeros += usize::from(c == 0);
    }
    let mean = sum as f64 / n as f64;
    let variance = (sum_sq as f64 / n as f64 - mean * mean).max(0.0);
    CounterStats {
        mean,
        coefficient_of_variation: if mean == 0.0 {
            0.0
        } else {
            variance.sqrt() / mean
        },
        zero_fraction: zeros as f64 / n as f64,
    }
}

/// Per-element error record for detailed output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementError {
    pub id: usize,
    pub occ: u64,
    pub estimate: u64,
    pub relative_error: f64,
}

/// Combined error plus per-class errors (and optionally the per-element
/// table) for one finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSummary {
    pub combined_error: f64,
    pub class_errors: BTreeMap<String, f64>,
    pub per_element: Option<Vec<ElementError>>,
}

/// Builds an [`ErrorSummary`]; classes are id ranges (how the experiment
/// harness lays out hot/cold elements).
pub fn summarize(
    estimates: &[u64],
    occs: &[u64],
    classes: &[(&str, Range<usize>)],
    with_per_element: bool,
) -> ErrorSummary {
    let class_errors = classes
        .iter()
        .map(|(label, range)| {
            (
                label.to_string(),
                class_error(estimates, occs, range.clone()),
            )
        })
        .collect();
    let per_element = with_per_element.then(|| {
        estimates
            .iter()
            .zip(occs)
            .enumerate()
            .filter(|(_, (_, &occ))| occ >= 1)
            .map(|(id, (&estimate, &occ))| ElementError {
                id,
                occ,
                estimate,
                relative_error: relative_error(estimate, occ),
            })
            .collect()
    });
    ErrorSummary {
        combined_error: combined_error(estimates, occs),
        class_errors,
        per_element,
    }
}
