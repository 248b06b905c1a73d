//! Multi-step pipelines built from the diachronic, comparative and evidence
//! primitives: the concept atlas, drift rankings, cross-corpus overlap and
//! cross-layer robustness.

use serde::{Deserialize, Serialize};

use crate::comparative::{avg_jaccard, char_2gram_fingerprint, overlap_report, DriftTopSet, OverlapReport, DEFAULT_TOP_K};
use crate::concepts::ConceptDef;
use crate::diachronic::{
    build_salient_set, component_series, composition_series, concept_series, corpus_view, diversity_entropy,
    feature_series, implicit_breakdown, peak_year, pooled_shares, reorganization_delta, select_top_drifting_with,
    relative_change_rate, turning_point, window_share_delta, ChangeRate, CompositionRow, FeatureDrift,
    ImplicitBreakdown, SalientSet, SeriesKey, SliceSeries, WindowDelta, YearWindow, DEFAULT_EPSILON, DEFAULT_Q,
};
use crate::evidence::{
    diachronic_evidence, EvidenceTarget, DEFAULT_DISPLAY, DEFAULT_PER_YEAR, DEFAULT_POOL,
};
use crate::store::ActivationRecord;
use crate::{Error, Exec, Result};

/// Tunable constants shared by every pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub q: f64,
    pub epsilon: f64,
    pub top_k: usize,
    pub evidence_per_year: usize,
    pub pool: usize,
    pub display: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            q: DEFAULT_Q,
            epsilon: DEFAULT_EPSILON,
            top_k: DEFAULT_TOP_K,
            evidence_per_year: DEFAULT_PER_YEAR,
            pool: DEFAULT_POOL,
            display: DEFAULT_DISPLAY,
        }
    }
}

/// Which units a per-slice quantity is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Every unit of the corpus.
    All,
    /// The concept's salient set at the configured quantile.
    #[default]
    Salient,
}

/// The units a quantity is conditioned on, with a label for exports.
pub struct ConditioningSet<'a> {
    pub records: Vec<&'a ActivationRecord>,
    pub label: String,
    pub salient: Option<SalientSet>,
}

pub fn conditioning_set<'a>(
    records: &[&'a ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    conditioning: Conditioning,
    params: &Params,
) -> Result<ConditioningSet<'a>> {
    let in_corpus = corpus_view(records, corpus);
    match conditioning {
        Conditioning::All => {
            if in_corpus.is_empty() {
                return Err(Error::EmptyCorpus(corpus.to_string()));
            }
            Ok(ConditioningSet {
                records: in_corpus,
                label: "all".into(),
                salient: None,
            })
        }
        Conditioning::Salient => {
            let salient = build_salient_set(&in_corpus, concept, corpus, params.q)?;
            Ok(ConditioningSet {
                records: salient.select(&in_corpus),
                label: salient.conditioning_label(),
                salient: Some(salient),
            })
        }
    }
}

/// One atlas cell: navigational statistics of a concept in a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasRow {
    pub concept_id: String,
    pub corpus: String,
    /// `None` when the salient set carries no concept mass.
    pub implicit_ratio: Option<f64>,
    /// Normalized entropy of the shares pooled over the full range.
    pub diversity: f64,
    pub peak_year: i32,
    pub turn_year: Option<i32>,
    pub turn_intensity: Option<f64>,
    pub salient_count: usize,
    pub threshold: f64,
}

fn atlas_row(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    years: &[i32],
    params: &Params,
) -> Result<AtlasRow> {
    let set = conditioning_set(records, concept, corpus, Conditioning::Salient, params)?;
    let salient = set.salient.as_ref().expect("salient conditioning");
    let series = concept_series(&set.records, concept, years, Some(corpus), &set.label);
    let peak = peak_year(&series)?;
    let turn = turning_point(&series).ok();
    let pooled = pooled_shares(&set.records, concept, corpus, params.epsilon).ok_or(Error::NoSlices)?;
    let implicit = implicit_breakdown(salient, &set.records, concept);
    Ok(AtlasRow {
        concept_id: concept.concept_id.clone(),
        corpus: corpus.to_string(),
        implicit_ratio: implicit.implicit_ratio,
        diversity: diversity_entropy(&pooled),
        peak_year: peak,
        turn_year: turn.map(|t| t.year),
        turn_intensity: turn.map(|t| t.intensity),
        salient_count: salient.len(),
        threshold: salient.threshold,
    })
}

/// One row per (concept, corpus), concepts in the given order and corpora sorted.
pub fn build_atlas(
    records: &[&ActivationRecord],
    concepts: &[ConceptDef],
    corpora: &[String],
    years: &[i32],
    params: &Params,
    exec: Exec,
) -> Result<Vec<AtlasRow>> {
    let cells: Vec<(&ConceptDef, &String)> = concepts
        .iter()
        .flat_map(|c| corpora.iter().map(move |r| (c, r)))
        .collect();
    exec.map(&cells, |&(c, r)| atlas_row(records, c, r, years, params))
        .into_iter()
        .collect()
}

/// Top drifting bases of a concept in a corpus, conditioned as requested.
pub fn drift_top_set(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    years: &[i32],
    conditioning: Conditioning,
    params: &Params,
    exec: Exec,
) -> Result<DriftTopSet> {
    let set = conditioning_set(records, concept, corpus, conditioning, params)?;
    let ranked = select_top_drifting_with(&set.records, years, params.top_k, None, exec);
    Ok(DriftTopSet::new(&concept.concept_id, corpus, params.top_k, ranked))
}

pub fn cross_corpus(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus_a: &str,
    corpus_b: &str,
    years: &[i32],
    params: &Params,
    exec: Exec,
) -> Result<OverlapReport> {
    let a = drift_top_set(records, concept, corpus_a, years, Conditioning::Salient, params, exec)?;
    let b = drift_top_set(records, concept, corpus_b, years, Conditioning::Salient, params, exec)?;
    overlap_report(&a, &b)
}

/// Concept magnitude series followed by one series per component.
pub fn trajectory(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    years: &[i32],
    conditioning: Conditioning,
    params: &Params,
) -> Result<Vec<SliceSeries>> {
    let set = conditioning_set(records, concept, corpus, conditioning, params)?;
    let mut out = vec![concept_series(&set.records, concept, years, Some(corpus), &set.label)];
    out.extend(component_series(&set.records, concept, years, Some(corpus), &set.label));
    Ok(out)
}

/// Relative change rates of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRates {
    pub key: SeriesKey,
    pub rates: Vec<ChangeRate>,
}

/// Rates for every trajectory series with at least two present slices.
pub fn rates(series: &[SliceSeries]) -> Vec<SeriesRates> {
    series
        .iter()
        .filter_map(|s| {
            relative_change_rate(s).ok().map(|rates| SeriesRates {
                key: s.key.clone(),
                rates,
            })
        })
        .collect()
}

/// Window contrasts of pooled shares, one per `(window_a, window_b)` pair.
pub fn window_deltas(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    pairs: &[(YearWindow, YearWindow)],
    conditioning: Conditioning,
    params: &Params,
) -> Result<Vec<WindowDelta>> {
    let set = conditioning_set(records, concept, corpus, conditioning, params)?;
    pairs
        .iter()
        .map(|&(a, b)| window_share_delta(&set.records, concept, corpus, &set.label, a, b, params.epsilon))
        .collect()
}

/// One composition per present slice with its entropy and the reorganization
/// from the previous present slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareSlice {
    pub composition: CompositionRow,
    pub entropy: f64,
    pub reorganization: Option<f64>,
}

pub fn share_slices(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    years: &[i32],
    conditioning: Conditioning,
    params: &Params,
) -> Result<Vec<ShareSlice>> {
    let set = conditioning_set(records, concept, corpus, conditioning, params)?;
    let rows = composition_series(&set.records, concept, corpus, years, params.epsilon);
    let mut out: Vec<ShareSlice> = Vec::with_capacity(rows.len());
    for row in rows {
        let reorganization = match out.last() {
            Some(prev) => Some(reorganization_delta(&prev.composition, &row)?),
            None => None,
        };
        out.push(ShareSlice {
            entropy: diversity_entropy(&row),
            composition: row,
            reorganization,
        });
    }
    Ok(out)
}

pub fn implicit_report(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    params: &Params,
) -> Result<ImplicitBreakdown> {
    let set = conditioning_set(records, concept, corpus, Conditioning::Salient, params)?;
    let salient = set.salient.as_ref().expect("salient conditioning");
    Ok(implicit_breakdown(salient, &set.records, concept))
}

/// Per-layer row of the robustness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: String,
    pub peak_year: i32,
    pub turn_year: Option<i32>,
    pub turn_intensity: Option<f64>,
    pub avg_jaccard: f64,
    pub fingerprint_size: usize,
}

/// Layer label paired with that layer's records.
pub struct LayerInput<'a> {
    pub layer: String,
    pub records: Vec<&'a ActivationRecord>,
}

/// Evidence texts for a layer: diachronic evidence of the top drifting bases
/// within the salient set. Bases whose series has fewer than two present
/// slices contribute nothing.
fn layer_profile(
    records: &[&ActivationRecord],
    concept: &ConceptDef,
    corpus: &str,
    years: &[i32],
    params: &Params,
    exec: Exec,
) -> Result<(SliceSeries, Vec<FeatureDrift>, Vec<String>)> {
    let set = conditioning_set(records, concept, corpus, Conditioning::Salient, params)?;
    let series = concept_series(&set.records, concept, years, Some(corpus), &set.label);
    let top = select_top_drifting_with(&set.records, years, params.top_k, None, exec);
    let mut texts = Vec::new();
    for d in &top {
        let fs = feature_series(&set.records, d.feature, years, Some(corpus), &set.label);
        let target = EvidenceTarget::Feature { feature: d.feature };
        match diachronic_evidence(&set.records, &target, &fs, params.evidence_per_year) {
            Ok(bundle) => texts.extend(bundle.items.into_iter().map(|i| i.text)),
            Err(Error::TurnUndefined) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((series, top, texts))
}

pub fn cross_layer(
    layers: &[LayerInput<'_>],
    concept: &ConceptDef,
    corpus: &str,
    years: &[i32],
    params: &Params,
    exec: Exec,
) -> Result<Vec<LayerRow>> {
    if layers.len() < 2 {
        return Err(Error::TooFewLayers(layers.len()));
    }
    let mut fingerprints = Vec::with_capacity(layers.len());
    let mut stats = Vec::with_capacity(layers.len());
    for layer in layers {
        let (series, _, texts) = layer_profile(&layer.records, concept, corpus, years, params, exec)?;
        fingerprints.push(char_2gram_fingerprint(&layer.layer, &concept.concept_id, corpus, &texts));
        stats.push((peak_year(&series)?, turning_point(&series).ok()));
    }
    layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let (peak, turn) = stats[i];
            Ok(LayerRow {
                layer: layer.layer.clone(),
                peak_year: peak,
                turn_year: turn.map(|t| t.year),
                turn_intensity: turn.map(|t| t.intensity),
                avg_jaccard: avg_jaccard(i, &fingerprints)?,
                fingerprint_size: fingerprints[i].grams.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::ConceptComponent;
    use crate::diachronic::view;
    use crate::store::UnitMeta;
    use crate::SparseVector;

    fn concept() -> ConceptDef {
        ConceptDef {
            concept_id: "individual".into(),
            name: "individual".into(),
            lexemes: vec!["个人".into()],
            components: vec![
                ConceptComponent { label: "A".into(), bases: vec![1] },
                ConceptComponent { label: "B".into(), bases: vec![2] },
            ],
        }
    }

    fn rec(id: &str, year: i32, pairs: &[(u32, f64)], text: &str) -> ActivationRecord {
        ActivationRecord {
            meta: UnitMeta {
                unit_id: id.into(),
                corpus: "newyouth".into(),
                year,
                text: text.into(),
            },
            z: SparseVector::from_pairs(8, pairs.iter().copied()).unwrap(),
        }
    }

    #[test]
    fn single_year_atlas_has_no_turn() {
        let rs = [rec("a", 1918, &[(1, 1.0)], "个人"), rec("b", 1918, &[(2, 3.0)], "社会")];
        let rows = build_atlas(
            &view(&rs),
            &[concept()],
            &["newyouth".into()],
            &[1918],
            &Params::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].peak_year, 1918);
        assert_eq!(rows[0].turn_year, None);
        assert_eq!(rows[0].turn_intensity, None);
        assert_eq!(rows[0].salient_count, 1);
        assert_eq!(rows[0].implicit_ratio, Some(1.0));
    }

    #[test]
    fn cross_layer_identical_layers_agree() {
        let rs: Vec<_> = (0..6)
            .map(|i| rec(&format!("u{i}"), 1915 + i / 2, &[(1, 1.0 + i as f64)], &format!("个人之{i}觉悟")))
            .collect();
        let params = Params { q: 0.01, ..Params::default() };
        let layers: Vec<LayerInput> = ["06", "14", "22", "29"]
            .iter()
            .map(|t| LayerInput { layer: t.to_string(), records: view(&rs) })
            .collect();
        let years = [1915, 1916, 1917];
        let rows = cross_layer(&layers, &concept(), "newyouth", &years, &params, Exec::Sequential).unwrap();
        assert!(rows.iter().all(|r| r.avg_jaccard == 1.0));
        assert!(rows.windows(2).all(|w| w[0].peak_year == w[1].peak_year && w[0].turn_year == w[1].turn_year));
        assert!(cross_layer(&layers[..1], &concept(), "newyouth", &years, &params, Exec::Sequential).is_err());
    }
}
