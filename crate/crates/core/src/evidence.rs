//! Evidence bundles: the highest-activating units for a feature or component.
//!
//! Ranking is by activation descending, then unit id ascending, then corpus.
//! Only units whose support touches the target are eligible.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::concepts::ConceptComponent;
use crate::diachronic::{turning_point, SliceSeries};
use crate::store::{ActivationRecord, RecordFilter};
use crate::Result;

pub const DEFAULT_PER_YEAR: usize = 5;
pub const DEFAULT_POOL: usize = 30;
pub const DEFAULT_DISPLAY: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EvidenceTarget {
    Feature {
        feature: u32,
    },
    Component {
        concept: String,
        label: String,
        bases: Vec<u32>,
    },
}

impl EvidenceTarget {
    pub fn component(concept: &str, component: &ConceptComponent) -> Self {
        EvidenceTarget::Component {
            concept: concept.to_string(),
            label: component.label.clone(),
            bases: component.bases.clone(),
        }
    }

    /// Activation used for ranking, or `None` when the unit's support misses
    /// the target entirely.
    pub fn score(&self, record: &ActivationRecord) -> Option<f64> {
        match self {
            EvidenceTarget::Feature { feature } => {
                record.z.contains(*feature).then(|| record.z.get(*feature))
            }
            EvidenceTarget::Component { bases, .. } => {
                let mut any = false;
                let mut total = 0.0;
                for &b in bases {
                    if record.z.contains(b) {
                        any = true;
                        total += record.z.get(b);
                    }
                }
                any.then_some(total)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EvidenceTarget::Feature { feature } => format!("feature {feature}"),
            EvidenceTarget::Component { concept, label, .. } => format!("{concept} / {label}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceRule {
    DiachronicPeakPair,
    CrossCorpusTop30,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub unit_id: String,
    pub corpus: String,
    pub year: i32,
    pub activation: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub target: EvidenceTarget,
    pub rule: EvidenceRule,
    pub year_pair: Option<(i32, i32)>,
    pub items: Vec<EvidenceItem>,
    /// Number of leading items meant for display.
    pub display: usize,
}

impl EvidenceBundle {
    pub fn displayed(&self) -> &[EvidenceItem] {
        &self.items[..self.display.min(self.items.len())]
    }

    pub fn texts(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.text.as_str()).collect()
    }

    /// Quote-list rendering for close reading.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "### {}", self.target.describe());
        let _ = writeln!(out);
        match (self.rule, self.year_pair) {
            (EvidenceRule::DiachronicPeakPair, Some((a, b))) => {
                let _ = writeln!(out, "Strongest change between {a} and {b}.");
            }
            _ => {
                let _ = writeln!(
                    out,
                    "Showing {} of {} pooled contexts.",
                    self.displayed().len(),
                    self.items.len()
                );
            }
        }
        let _ = writeln!(out);
        for item in self.displayed() {
            let text = item.text.replace('\n', " ");
            let _ = writeln!(
                out,
                "> [{} {}] {} (`{}`, {:.6})",
                item.corpus, item.year, text, item.unit_id, item.activation
            );
            let _ = writeln!(out, ">");
        }
        if out.ends_with(">\n") {
            out.truncate(out.len() - 2);
        }
        out
    }
}

fn rank(a: &(f64, &ActivationRecord), b: &(f64, &ActivationRecord)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.meta.unit_id.cmp(&b.1.meta.unit_id))
        .then_with(|| a.1.meta.corpus.cmp(&b.1.meta.corpus))
}

/// Top `n` records by target activation among those passing `filter`.
pub fn top_activating(
    records: &[&ActivationRecord],
    target: &EvidenceTarget,
    n: usize,
    filter: &RecordFilter,
) -> Vec<EvidenceItem> {
    let mut scored: Vec<(f64, &ActivationRecord)> = records
        .iter()
        .filter(|r| filter.matches(&r.meta))
        .filter_map(|&r| target.score(r).map(|s| (s, r)))
        .collect();
    scored.sort_by(rank);
    scored
        .into_iter()
        .take(n)
        .map(|(activation, r)| EvidenceItem {
            unit_id: r.meta.unit_id.clone(),
            corpus: r.meta.corpus.clone(),
            year: r.meta.year,
            activation,
            text: r.meta.text.clone(),
        })
        .collect()
}

/// Adjacent present years with the largest absolute change; ties go to the
/// earliest pair.
pub fn peak_adjacent_pair(series: &SliceSeries) -> Result<(i32, i32)> {
    let t = turning_point(series)?;
    Ok((t.previous_year, t.year))
}

/// Up to `per_year` items from each year of the peak pair, earlier year first.
pub fn diachronic_evidence(
    records: &[&ActivationRecord],
    target: &EvidenceTarget,
    series: &SliceSeries,
    per_year: usize,
) -> Result<EvidenceBundle> {
    let (y1, y2) = peak_adjacent_pair(series)?;
    let year = |y: i32| RecordFilter {
        years: Some(y..=y),
        corpus: series.key.corpus.clone(),
    };
    let mut items = top_activating(records, target, per_year, &year(y1));
    items.extend(top_activating(records, target, per_year, &year(y2)));
    Ok(EvidenceBundle {
        target: target.clone(),
        rule: EvidenceRule::DiachronicPeakPair,
        year_pair: Some((y1, y2)),
        display: items.len(),
        items,
    })
}

/// Full-range pool of the `pool` strongest contexts; the first `display` are
/// the displayed ones.
pub fn cross_corpus_evidence(
    records: &[&ActivationRecord],
    target: &EvidenceTarget,
    corpus: Option<&str>,
    pool: usize,
    display: usize,
) -> EvidenceBundle {
    let filter = RecordFilter {
        years: None,
        corpus: corpus.map(str::to_string),
    };
    let items = top_activating(records, target, pool, &filter);
    EvidenceBundle {
        target: target.clone(),
        rule: EvidenceRule::CrossCorpusTop30,
        year_pair: None,
        display: display.min(items.len()),
        items,
    }
}
