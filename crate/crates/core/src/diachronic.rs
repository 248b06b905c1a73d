//! Diachronic quantities over time slices.
//!
//! Every quantity is computed on an explicit conditioning set: a slice of
//! record references, usually either all records of a corpus or the salient
//! set of a concept in that corpus. A year with no conditioning units is
//! *absent*: it is kept in exported series but skipped by drift, peak, turn and
//! change-rate computations, and its present neighbours count as consecutive.
//!
//! Means accumulate in the order records are given; callers pass records in
//! canonical `(year, unit_id)` order, so sequential and parallel runs agree
//! bit for bit.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::concepts::{component_activation, concept_magnitude, split_by_anchor, ConceptDef};
use crate::store::ActivationRecord;
use crate::{Error, Exec, Result};

pub const DEFAULT_Q: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-9;
/// Denominator guard in relative change rates.
pub const RATE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scope {
    Feature { feature: u32 },
    Component { concept: String, label: String },
    ConceptMagnitude { concept: String },
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Feature { feature } => write!(f, "feature:{feature}"),
            Scope::Component { concept, label } => write!(f, "{concept}/{label}"),
            Scope::ConceptMagnitude { concept } => write!(f, "{concept}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeriesKey {
    pub scope: Scope,
    pub corpus: Option<String>,
    /// Identifier of the conditioning set, e.g. `all` or `salient(q=0.95)`.
    pub conditioning: String,
}

impl SeriesKey {
    pub fn new(scope: Scope, corpus: Option<&str>, conditioning: impl Into<String>) -> Self {
        Self {
            scope,
            corpus: corpus.map(str::to_string),
            conditioning: conditioning.into(),
        }
    }

    pub fn label(&self) -> String {
        match &self.corpus {
            Some(c) => format!("{} [{}, {}]", self.scope, c, self.conditioning),
            None => format!("{} [{}]", self.scope, self.conditioning),
        }
    }
}

/// Per-slice means of one scalar over a conditioning set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSeries {
    pub key: SeriesKey,
    pub years: Vec<i32>,
    /// `None` marks an absent slice (no conditioning units that year).
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl SliceSeries {
    /// `(year, mean)` for present slices, in year order.
    pub fn present(&self) -> Vec<(i32, f64)> {
        self.years
            .iter()
            .zip(&self.values)
            .filter_map(|(&y, v)| v.map(|v| (y, v)))
            .collect()
    }

    pub fn value_at(&self, year: i32) -> Option<f64> {
        self.years
            .binary_search(&year)
            .ok()
            .and_then(|i| self.values[i])
    }

    /// Builds a series directly from `(year, value)` pairs; every listed year is
    /// present with a count of 1.
    pub fn from_points(key: SeriesKey, points: &[(i32, f64)]) -> Self {
        let mut points = points.to_vec();
        points.sort_by_key(|p| p.0);
        Self {
            key,
            years: points.iter().map(|p| p.0).collect(),
            values: points.iter().map(|p| Some(p.1)).collect(),
            counts: vec![1; points.len()],
        }
    }
}

/// Every integer year between the earliest and latest record.
pub fn year_grid(records: &[&ActivationRecord]) -> Vec<i32> {
    let min = records.iter().map(|r| r.meta.year).min();
    let max = records.iter().map(|r| r.meta.year).max();
    match (min, max) {
        (Some(a), Some(b)) => (a..=b).collect(),
        _ => Vec::new(),
    }
}

pub fn view(records: &[ActivationRecord]) -> Vec<&ActivationRecord> {
    records.iter().collect()
}

pub fn corpus_view<'a>(records: &[&'a ActivationRecord], corpus: &str) -> Vec<&'a ActivationRecord> {
    records
        .iter()
        .copied()
        .filter(|r| r.meta.corpus == corpus)
        .collect()
}

/// Mean of `scalar` per year slice. Records whose year is not in `years` are
/// ignored.
pub fn slice_mean<F>(records: &[&ActivationRecord], mut scalar: F, years: &[i32], key: SeriesKey) -> SliceSeries
where
    F: FnMut(&ActivationRecord) -> f64,
{
    let mut sums = vec![0.0; years.len()];
    let mut counts = vec![0usize; years.len()];
    for r in records {
        if let Ok(slot) = years.binary_search(&r.meta.year) {
            sums[slot] += scalar(r);
            counts[slot] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
        .collect();
    SliceSeries {
        key,
        years: years.to_vec(),
        values,
        counts,
    }
}

pub fn feature_series(
    records: &[&ActivationRecord],
    feature: u32,
    years: &[i32],
    corpus: Option<&str>,
    conditioning: &str,
) -> SliceSeries {
    slice_mean(
        records,
        |r| r.z.get(feature),
        years,
        SeriesKey::new(Scope::Feature { feature }, corpus, conditioning),
    )
}

/// `A_t`: mean concept magnitude per slice.
pub fn concept_series(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    years: &[i32],
    corpus: Option<&str>,
    conditioning: &str,
) -> SliceSeries {
    slice_mean(
        records,
        |r| concept_magnitude(r, concept),
        years,
        SeriesKey::new(
            Scope::ConceptMagnitude {
                concept: concept.concept_id.clone(),
            },
            corpus,
            conditioning,
        ),
    )
}

/// One series per component of the concept, in component order.
pub fn component_series(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    years: &[i32],
    corpus: Option<&str>,
    conditioning: &str,
) -> Vec<SliceSeries> {
    concept
        .components
        .iter()
        .map(|c| {
            slice_mean(
                records,
                |r| component_activation(r, c),
                years,
                SeriesKey::new(
                    Scope::Component {
                        concept: concept.concept_id.clone(),
                        label: c.label.clone(),
                    },
                    corpus,
                    conditioning,
                ),
            )
        })
        .collect()
}

fn drift_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    for v in values {
        if let Some(p) = prev {
            total += (v - p).abs();
        }
        prev = Some(v);
    }
    total
}

/// Cumulative drift: sum of absolute differences between consecutive present slices.
pub fn cumulative_drift(series: &SliceSeries) -> f64 {
    drift_of(series.values.iter().flatten().copied())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureDrift {
    pub feature: u32,
    pub drift: f64,
}

/// Drift of every feature with nonzero support in the conditioning set,
/// ascending by feature id.
pub fn feature_drifts(records: &[&ActivationRecord], years: &[i32]) -> Vec<FeatureDrift> {
    feature_drifts_with(records, years, Exec::default())
}

pub fn feature_drifts_with(records: &[&ActivationRecord], years: &[i32], exec: Exec) -> Vec<FeatureDrift> {
    let Some(dim) = records.first().map(|r| r.z.dim() as usize) else {
        return Vec::new();
    };
    let mut buckets: Vec<Vec<&ActivationRecord>> = vec![Vec::new(); years.len()];
    for &r in records {
        if let Ok(slot) = years.binary_search(&r.meta.year) {
            buckets[slot].push(r);
        }
    }
    let present: Vec<&Vec<&ActivationRecord>> = buckets.iter().filter(|b| !b.is_empty()).collect();

    // Per-slice dense means; each slice sums its records in the given order.
    let means: Vec<Vec<f64>> = exec.map(&present, |bucket| {
        let mut sums = vec![0.0; dim];
        for r in bucket.iter() {
            for (i, v) in r.z.iter() {
                sums[i as usize] += v;
            }
        }
        let n = bucket.len() as f64;
        sums.iter_mut().for_each(|s| *s /= n);
        sums
    });

    let mut support = vec![false; dim];
    for r in records {
        if years.binary_search(&r.meta.year).is_ok() {
            for &i in r.z.indices() {
                support[i as usize] = true;
            }
        }
    }
    let features: Vec<u32> = (0..dim as u32).filter(|&f| support[f as usize]).collect();
    exec.map(&features, |&f| FeatureDrift {
        feature: f,
        drift: drift_of(means.iter().map(|m| m[f as usize])),
    })
}

/// Orders by drift descending, ties by ascending feature id.
pub fn rank_drifts(drifts: &mut [FeatureDrift]) {
    drifts.sort_by(|a, b| b.drift.total_cmp(&a.drift).then(a.feature.cmp(&b.feature)));
}

/// The `n` features with the largest cumulative drift.
///
/// With a salient set, the conditioning set is that set's members; otherwise
/// it is all given records.
pub fn select_top_drifting(
    records: &[&ActivationRecord],
    years: &[i32],
    n: usize,
    conditioning: Option<&SalientSet>,
) -> Vec<FeatureDrift> {
    select_top_drifting_with(records, years, n, conditioning, Exec::default())
}

pub fn select_top_drifting_with(
    records: &[&ActivationRecord],
    years: &[i32],
    n: usize,
    conditioning: Option<&SalientSet>,
    exec: Exec,
) -> Vec<FeatureDrift> {
    let set: Vec<&ActivationRecord> = match conditioning {
        Some(s) => s.select(records),
        None => records.to_vec(),
    };
    let mut drifts = feature_drifts_with(&set, years, exec);
    rank_drifts(&mut drifts);
    drifts.truncate(n);
    drifts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeRate {
    pub from_year: i32,
    pub to_year: i32,
    pub rate: f64,
}

/// `(μ_t − μ_{t−1}) / (μ_{t−1} + 1e-9)` for consecutive present slices.
pub fn relative_change_rate(series: &SliceSeries) -> Result<Vec<ChangeRate>> {
    let pts = series.present();
    if pts.len() < 2 {
        return Err(Error::RateUndefined);
    }
    Ok(pts
        .windows(2)
        .map(|w| ChangeRate {
            from_year: w[0].0,
            to_year: w[1].0,
            rate: (w[1].1 - w[0].1) / (w[0].1 + RATE_EPSILON),
        })
        .collect())
}

/// High-quantile subset of one corpus by concept magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientSet {
    pub concept_id: String,
    pub corpus: String,
    pub q: f64,
    pub threshold: f64,
    pub unit_ids: BTreeSet<String>,
}

impl SalientSet {
    pub fn contains(&self, record: &ActivationRecord) -> bool {
        record.meta.corpus == self.corpus && self.unit_ids.contains(&record.meta.unit_id)
    }

    /// Members among `records`, keeping their order.
    pub fn select<'a>(&self, records: &[&'a ActivationRecord]) -> Vec<&'a ActivationRecord> {
        records.iter().copied().filter(|r| self.contains(r)).collect()
    }

    pub fn len(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit_ids.is_empty()
    }

    /// Identifier used in series keys.
    pub fn conditioning_label(&self) -> String {
        format!("salient(q={})", self.q)
    }
}

/// 1-based nearest rank `⌈q·n⌉`, clamped to `[1, n]`. Products within 1e-9 of
/// an integer are snapped so that e.g. `0.95 · 20` ranks 19.
pub fn nearest_rank(n: usize, q: f64) -> usize {
    let x = q * n as f64;
    let snapped = x.round();
    let rank = if (x - snapped).abs() <= 1e-9 * x.max(1.0) {
        snapped
    } else {
        x.ceil()
    };
    (rank as usize).clamp(1, n.max(1))
}

/// Nearest-rank empirical quantile: the smallest sample `v` such that at least
/// `⌈q·n⌉` samples are `≤ v`.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::BadQuantile(q));
    }
    if values.is_empty() {
        return Err(Error::NoSlices);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(sorted.len(), q) - 1])
}

pub fn build_salient_set(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    q: f64,
) -> Result<SalientSet> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::BadQuantile(q));
    }
    let scored: Vec<(&ActivationRecord, f64)> = records
        .iter()
        .filter(|r| r.meta.corpus == corpus)
        .map(|&r| (r, concept_magnitude(r, concept)))
        .collect();
    if scored.is_empty() {
        return Err(Error::EmptyCorpus(corpus.to_string()));
    }
    let magnitudes: Vec<f64> = scored.iter().map(|p| p.1).collect();
    let threshold = nearest_rank_quantile(&magnitudes, q)?;
    let unit_ids = scored
        .iter()
        .filter(|p| p.1 >= threshold)
        .map(|p| p.0.meta.unit_id.clone())
        .collect();
    Ok(SalientSet {
        concept_id: concept.concept_id.clone(),
        corpus: corpus.to_string(),
        q,
        threshold,
        unit_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentShare {
    pub label: String,
    pub mean: f64,
    pub share: f64,
}

/// Orientation shares of a concept's components in one slice (or pooled over
/// a window when `year` is `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionRow {
    pub concept_id: String,
    pub corpus: String,
    pub year: Option<i32>,
    pub epsilon: f64,
    pub unit_count: usize,
    pub components: Vec<ComponentShare>,
}

impl CompositionRow {
    pub fn shares(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.share).collect()
    }

    pub fn mean_total(&self) -> f64 {
        self.components.iter().map(|c| c.mean).sum()
    }

    pub fn share_of(&self, label: &str) -> Option<f64> {
        self.components.iter().find(|c| c.label == label).map(|c| c.share)
    }
}

fn composition<'a>(
    records: impl Iterator<Item = &'a ActivationRecord>,
    concept: &ConceptDef,
    corpus: &str,
    year: Option<i32>,
    epsilon: f64,
) -> Option<CompositionRow> {
    let mut sums = vec![0.0; concept.components.len()];
    let mut n = 0usize;
    for r in records {
        for (s, c) in sums.iter_mut().zip(&concept.components) {
            *s += component_activation(r, c);
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let total: f64 = means.iter().sum();
    let components = concept
        .components
        .iter()
        .zip(&means)
        .map(|(c, &mean)| ComponentShare {
            label: c.label.clone(),
            mean,
            share: mean / (total + epsilon),
        })
        .collect();
    Some(CompositionRow {
        concept_id: concept.concept_id.clone(),
        corpus: corpus.to_string(),
        year,
        epsilon,
        unit_count: n,
        components,
    })
}

/// Shares `μ_s / (Σ μ_s' + ε)` over the records of `year`. `None` when the
/// slice has no units.
pub fn orientation_shares(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    year: i32,
    epsilon: f64,
) -> Option<CompositionRow> {
    composition(
        records.iter().copied().filter(|r| r.meta.year == year),
        concept,
        corpus,
        Some(year),
        epsilon,
    )
}

/// Shares over all given records treated as one pseudo-slice.
pub fn pooled_shares(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    epsilon: f64,
) -> Option<CompositionRow> {
    composition(records.iter().copied(), concept, corpus, None, epsilon)
}

/// One composition row per present year.
pub fn composition_series(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    years: &[i32],
    epsilon: f64,
) -> Vec<CompositionRow> {
    years
        .iter()
        .filter_map(|&y| orientation_shares(records, concept, corpus, y, epsilon))
        .collect()
}

/// Normalized entropy of the shares, in `[0, 1]`; 0 for a single component.
pub fn diversity_entropy(row: &CompositionRow) -> f64 {
    let n = row.components.len();
    if n <= 1 {
        return 0.0;
    }
    let h: f64 = row
        .components
        .iter()
        .filter(|c| c.share > 0.0)
        .map(|c| -c.share * c.share.ln())
        .sum();
    (h / (n as f64).ln()).clamp(0.0, 1.0)
}

/// L1 distance between two compositions with identical labels.
pub fn reorganization_delta(previous: &CompositionRow, current: &CompositionRow) -> Result<f64> {
    if previous.concept_id != current.concept_id {
        return Err(Error::ConceptMismatch(
            previous.concept_id.clone(),
            current.concept_id.clone(),
        ));
    }
    if previous.components.len() != current.components.len()
        || previous
            .components
            .iter()
            .zip(&current.components)
            .any(|(a, b)| a.label != b.label)
    {
        return Err(Error::LabelMismatch);
    }
    Ok(previous
        .components
        .iter()
        .zip(&current.components)
        .map(|(a, b)| (b.share - a.share).abs())
        .sum())
}

/// Year with the largest value; ties go to the earliest year.
pub fn peak_year(series: &SliceSeries) -> Result<i32> {
    let mut best: Option<(i32, f64)> = None;
    for (y, v) in series.present() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((y, v));
        }
    }
    best.map(|b| b.0).ok_or(Error::NoSlices)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    pub year: i32,
    pub previous_year: i32,
    /// Signed change `A_t − A_{t−1}` at the turning year.
    pub intensity: f64,
}

/// Strongest change between consecutive present slices; ties go to the
/// earliest pair.
pub fn turning_point(series: &SliceSeries) -> Result<TurningPoint> {
    let pts = series.present();
    let mut best: Option<TurningPoint> = None;
    for w in pts.windows(2) {
        let delta = w[1].1 - w[0].1;
        if best.is_none_or(|b| delta.abs() > b.intensity.abs()) {
            best = Some(TurningPoint {
                year: w[1].0,
                previous_year: w[0].0,
                intensity: delta,
            });
        }
    }
    best.ok_or(Error::TurnUndefined)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitBreakdown {
    pub concept_id: String,
    pub corpus: String,
    pub salient_count: usize,
    pub anchored_count: usize,
    pub implicit_count: usize,
    pub anchored_mass: f64,
    pub implicit_mass: f64,
    /// Implicit share of salient concept mass; `None` when that mass is zero.
    pub implicit_ratio: Option<f64>,
}

pub fn implicit_breakdown(
    salient: &SalientSet,
    records: &[&ActivationRecord],
    concept: &ConceptDef,
) -> ImplicitBreakdown {
    let members = salient.select(records);
    let split = split_by_anchor(members.iter().copied(), concept);
    let (mut anchored_mass, mut implicit_mass) = (0.0, 0.0);
    for r in &members {
        let m = concept_magnitude(r, concept);
        if split.implicit.contains(&r.meta.unit_id) {
            implicit_mass += m;
        } else {
            anchored_mass += m;
        }
    }
    let total = anchored_mass + implicit_mass;
    ImplicitBreakdown {
        concept_id: concept.concept_id.clone(),
        corpus: salient.corpus.clone(),
        salient_count: members.len(),
        anchored_count: split.anchored.len(),
        implicit_count: split.implicit.len(),
        anchored_mass,
        implicit_mass,
        implicit_ratio: (total > 0.0).then(|| implicit_mass / total),
    }
}

/// Share of salient concept mass carried by units without any lexeme.
pub fn implicit_ratio(salient: &SalientSet, records: &[&ActivationRecord], concept: &ConceptDef) -> Result<f64> {
    implicit_breakdown(salient, records, concept)
        .implicit_ratio
        .ok_or(Error::EmptySalientMass)
}

/// Inclusive year range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub start: i32,
    pub end: i32,
}

impl YearWindow {
    pub fn new(start: i32, end: i32) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, year: i32) -> bool {
        self.start <= year && year <= self.end
    }

    /// Parses `1917`, `1917-1919`, `pre1917` (from `year_min` to 1916) or
    /// `post1924` (from 1925 to `year_max`).
    pub fn parse(spec: &str, year_min: i32, year_max: i32) -> Result<Self> {
        let bad = || Error::BadWindow(spec.to_string());
        let s = spec.trim();
        let num = |t: &str| t.trim().parse::<i32>().map_err(|_| bad());
        let w = if let Some(rest) = s.strip_prefix("pre") {
            YearWindow::new(year_min, num(rest)? - 1)
        } else if let Some(rest) = s.strip_prefix("post") {
            YearWindow::new(num(rest)? + 1, year_max)
        } else if let Some((a, b)) = s.split_once('-') {
            YearWindow::new(num(a)?, num(b)?)
        } else {
            let y = num(s)?;
            YearWindow::new(y, y)
        };
        if w.start > w.end {
            return Err(Error::EmptyWindow(spec.to_string()));
        }
        Ok(w)
    }
}

impl fmt::Display for YearWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start == self.end {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}-{}", self.start, self.end)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowShareDelta {
    pub label: String,
    pub share_a: f64,
    pub share_b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDelta {
    pub concept_id: String,
    pub corpus: String,
    pub conditioning: String,
    pub window_a: YearWindow,
    pub window_b: YearWindow,
    pub components: Vec<WindowShareDelta>,
}

impl WindowDelta {
    pub fn contrast_label(&self) -> String {
        format!("{} vs {}", self.window_b, self.window_a)
    }
}

/// Change in pooled window shares, `share_b − share_a`, per component.
pub fn window_share_delta(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    conditioning: &str,
    window_a: YearWindow,
    window_b: YearWindow,
    epsilon: f64,
) -> Result<WindowDelta> {
    let pooled = |w: YearWindow| {
        composition(
            records.iter().copied().filter(|r| w.contains(r.meta.year)),
            concept,
            corpus,
            None,
            epsilon,
        )
        .ok_or_else(|| Error::EmptyWindow(w.to_string()))
    };
    let a = pooled(window_a)?;
    let b = pooled(window_b)?;
    let components = a
        .components
        .iter()
        .zip(&b.components)
        .map(|(ca, cb)| WindowShareDelta {
            label: ca.label.clone(),
            share_a: ca.share,
            share_b: cb.share,
            delta: cb.share - ca.share,
        })
        .collect();
    Ok(WindowDelta {
        concept_id: concept.concept_id.clone(),
        corpus: corpus.to_string(),
        conditioning: conditioning.to_string(),
        window_a,
        window_b,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::ConceptComponent;
    use crate::store::UnitMeta;
    use crate::SparseVector;

    fn rec(id: &str, year: i32, pairs: &[(u32, f64)]) -> ActivationRecord {
        rec_text(id, year, pairs, "")
    }

    fn rec_text(id: &str, year: i32, pairs: &[(u32, f64)], text: &str) -> ActivationRecord {
        ActivationRecord {
            meta: UnitMeta {
                unit_id: id.into(),
                corpus: "newyouth".into(),
                year,
                text: text.into(),
            },
            z: SparseVector::from_pairs(16, pairs.iter().copied()).unwrap(),
        }
    }

    fn key() -> SeriesKey {
        SeriesKey::new(Scope::Feature { feature: 0 }, None, "all")
    }

    fn series(points: &[(i32, f64)]) -> SliceSeries {
        SliceSeries::from_points(key(), points)
    }

    fn concept3() -> ConceptDef {
        ConceptDef {
            concept_id: "c".into(),
            name: "c".into(),
            lexemes: vec!["个人".into()],
            components: vec![
                ConceptComponent { label: "A".into(), bases: vec![0] },
                ConceptComponent { label: "B".into(), bases: vec![1] },
                ConceptComponent { label: "C".into(), bases: vec![2, 3] },
            ],
        }
    }

    fn row(shares: &[f64]) -> CompositionRow {
        CompositionRow {
            concept_id: "c".into(),
            corpus: "x".into(),
            year: Some(1918),
            epsilon: DEFAULT_EPSILON,
            unit_count: 1,
            components: shares
                .iter()
                .enumerate()
                .map(|(i, &s)| ComponentShare {
                    label: format!("s{i}"),
                    mean: s,
                    share: s,
                })
                .collect(),
        }
    }

    #[test]
    fn slice_mean_example() {
        let rs = [rec("a", 1915, &[(3, 1.0)]), rec("b", 1915, &[(3, 3.0)]), rec("c", 1916, &[])];
        let s = feature_series(&view(&rs), 3, &[1915, 1916], None, "all");
        assert_eq!(s.values, vec![Some(2.0), Some(0.0)]);
        assert_eq!(s.counts, vec![2, 1]);

        let empty = feature_series(&[], 3, &[1915, 1916], None, "all");
        assert_eq!(empty.values, vec![None, None]);
    }

    #[test]
    fn drift_examples() {
        assert_eq!(cumulative_drift(&series(&[(1, 1.0), (2, 3.0), (3, 2.0)])), 3.0);
        assert_eq!(cumulative_drift(&series(&[(1, 2.0), (2, 2.0)])), 0.0);
        assert_eq!(cumulative_drift(&series(&[(1, 2.0)])), 0.0);
    }

    #[test]
    fn drift_skips_absent_years() {
        let mut s = series(&[(1915, 1.0), (1916, 9.0), (1917, 2.0)]);
        s.values[1] = None;
        s.counts[1] = 0;
        assert_eq!(cumulative_drift(&s), 1.0);
    }

    #[test]
    fn planted_step_ranks_first() {
        let mut rs = Vec::new();
        for (i, y) in (1915..=1921).enumerate() {
            let v7 = if y >= 1918 { 5.0 } else { 0.0 };
            let mut pairs = vec![(1, 1.0), (2, 0.5)];
            if v7 > 0.0 {
                pairs.push((7, v7));
            }
            rs.push(rec(&format!("u{i}"), y, &pairs));
        }
        let years: Vec<i32> = (1915..=1921).collect();
        let top = select_top_drifting(&view(&rs), &years, 3, None);
        assert_eq!(top[0], FeatureDrift { feature: 7, drift: 5.0 });
        assert_eq!(top.len(), 3);
    }

    #[test]
    fn drift_ties_rank_lower_id_first() {
        let rs = [rec("a", 1915, &[(4, 1.0)]), rec("b", 1916, &[(2, 1.0)])];
        let top = select_top_drifting(&view(&rs), &[1915, 1916], 5, None);
        assert_eq!(top.iter().map(|d| d.feature).collect::<Vec<_>>(), vec![2, 4]);
    }

    #[test]
    fn change_rates() {
        let r = relative_change_rate(&series(&[(1, 2.0), (2, 3.0)])).unwrap();
        assert!((r[0].rate - 0.5).abs() < 1e-8);
        let r = relative_change_rate(&series(&[(1, 0.0), (2, 1.0)])).unwrap();
        assert!((r[0].rate - 1e9).abs() < 1e-3 && r[0].rate.is_finite());
        assert!(relative_change_rate(&series(&[(1, 0.0)])).is_err());
    }

    #[test]
    fn salient_nearest_rank() {
        let c = concept3();
        let rs: Vec<_> = (1..=10)
            .map(|i| rec(&format!("u{i:02}"), 1918, &[(0, i as f64)]))
            .collect();
        let s = build_salient_set(&view(&rs), &c, "newyouth", 0.95).unwrap();
        assert_eq!(s.threshold, 10.0);
        assert_eq!(s.unit_ids.iter().collect::<Vec<_>>(), vec!["u10"]);

        let same: Vec<_> = (0..5).map(|i| rec(&format!("u{i}"), 1918, &[(1, 2.0)])).collect();
        let s = build_salient_set(&view(&same), &c, "newyouth", 0.95).unwrap();
        assert_eq!(s.len(), 5);

        assert!(matches!(
            build_salient_set(&view(&rs), &c, "guide", 0.95),
            Err(Error::EmptyCorpus(_))
        ));
        assert!(build_salient_set(&view(&rs), &c, "newyouth", 1.0).is_err());
        assert_eq!(nearest_rank(20, 0.95), 19);
        assert_eq!(nearest_rank(3, 0.95), 3);
        assert_eq!(nearest_rank(1, 0.01), 1);
    }

    #[test]
    fn shares_example() {
        let c = concept3();
        let rs = [rec("a", 1918, &[(0, 2.0), (1, 1.0), (2, 0.5), (3, 0.5)])];
        let row = orientation_shares(&view(&rs), &c, "newyouth", 1918, DEFAULT_EPSILON).unwrap();
        let shares = row.shares();
        for (got, want) in shares.iter().zip([0.5, 0.25, 0.25]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(orientation_shares(&view(&rs), &c, "newyouth", 1919, DEFAULT_EPSILON).is_none());

        let zero = [rec("z", 1918, &[(9, 1.0)])];
        let row = orientation_shares(&view(&zero), &c, "newyouth", 1918, DEFAULT_EPSILON).unwrap();
        assert_eq!(row.shares(), vec![0.0, 0.0, 0.0]);
        assert_eq!(diversity_entropy(&row), 0.0);
    }

    #[test]
    fn entropy_examples() {
        assert!((diversity_entropy(&row(&[0.25; 4])) - 1.0).abs() < 1e-12);
        assert_eq!(diversity_entropy(&row(&[1.0, 0.0, 0.0])), 0.0);
        assert_eq!(diversity_entropy(&row(&[1.0])), 0.0);
    }

    #[test]
    fn peak_and_turn() {
        assert_eq!(peak_year(&series(&[(1915, 1.0), (1918, 5.0), (1920, 3.0)])).unwrap(), 1918);
        assert_eq!(peak_year(&series(&[(1915, 1.0), (1918, 5.0), (1920, 5.0)])).unwrap(), 1918);
        assert!(peak_year(&series(&[])).is_err());

        let t = turning_point(&series(&[(1915, 1.0), (1916, 1.5), (1917, 0.2)])).unwrap();
        assert_eq!(t.year, 1917);
        assert!((t.intensity + 1.3).abs() < 1e-12);

        let steps: Vec<(i32, f64)> = (0..5).map(|i| (1915 + i, 0.25 * i as f64)).collect();
        assert_eq!(turning_point(&series(&steps)).unwrap().year, 1916);
        assert!(matches!(
            turning_point(&series(&[(1915, 1.0)])),
            Err(Error::TurnUndefined)
        ));
    }

    #[test]
    fn reorganization() {
        assert_eq!(reorganization_delta(&row(&[0.5, 0.5]), &row(&[0.5, 0.5])).unwrap(), 0.0);
        assert_eq!(reorganization_delta(&row(&[1.0, 0.0]), &row(&[0.0, 1.0])).unwrap(), 2.0);
        assert!(matches!(
            reorganization_delta(&row(&[1.0, 0.0]), &row(&[1.0])),
            Err(Error::LabelMismatch)
        ));
    }

    #[test]
    fn implicit_ratio_extremes() {
        let c = concept3();
        let implicit = [rec_text("a", 1918, &[(0, 1.0)], "社会"), rec_text("b", 1918, &[(0, 1.0)], "")];
        let s = build_salient_set(&view(&implicit), &c, "newyouth", 0.5).unwrap();
        assert_eq!(implicit_ratio(&s, &view(&implicit), &c).unwrap(), 1.0);

        let anchored = [rec_text("a", 1918, &[(0, 1.0)], "个人"), rec_text("b", 1918, &[(1, 1.0)], "个人主义")];
        let s = build_salient_set(&view(&anchored), &c, "newyouth", 0.5).unwrap();
        assert_eq!(implicit_ratio(&s, &view(&anchored), &c).unwrap(), 0.0);

        let empty = [rec("a", 1918, &[(9, 1.0)])];
        let s = build_salient_set(&view(&empty), &c, "newyouth", 0.5).unwrap();
        assert!(matches!(implicit_ratio(&s, &view(&empty), &c), Err(Error::EmptySalientMass)));
    }

    #[test]
    fn windows() {
        assert_eq!(YearWindow::parse("pre1917", 1915, 1926).unwrap(), YearWindow::new(1915, 1916));
        assert_eq!(YearWindow::parse("1917-1919", 1915, 1926).unwrap(), YearWindow::new(1917, 1919));
        assert_eq!(YearWindow::parse("post1924", 1915, 1926).unwrap(), YearWindow::new(1925, 1926));
        assert_eq!(YearWindow::parse("1920", 1915, 1926).unwrap(), YearWindow::new(1920, 1920));
        assert!(YearWindow::parse("pre1915", 1915, 1926).is_err());
        assert!(YearWindow::parse("abc", 1915, 1926).is_err());
        assert_eq!(YearWindow::new(1917, 1919).to_string(), "1917-1919");
    }

    #[test]
    fn window_delta() {
        let c = concept3();
        let rs = [
            rec("a", 1915, &[(0, 1.0), (1, 1.0)]),
            rec("b", 1918, &[(0, 2.0), (1, 1.0)]),
        ];
        let v = view(&rs);
        let same = window_share_delta(&v, &c, "newyouth", "all", YearWindow::new(1915, 1916), YearWindow::new(1915, 1916), DEFAULT_EPSILON).unwrap();
        assert!(same.components.iter().all(|d| d.delta == 0.0));

        let d = window_share_delta(&v, &c, "newyouth", "all", YearWindow::new(1915, 1916), YearWindow::new(1917, 1919), DEFAULT_EPSILON).unwrap();
        assert!(d.components[0].delta > 0.0);
        assert!(d.components[1].delta < 0.0);
        let total: f64 = d.components.iter().map(|x| x.delta).sum();
        assert!(total.abs() < 1e-9);

        assert!(matches!(
            window_share_delta(&v, &c, "newyouth", "all", YearWindow::new(1920, 1921), YearWindow::new(1915, 1916), DEFAULT_EPSILON),
            Err(Error::EmptyWindow(_))
        ));
    }
}
