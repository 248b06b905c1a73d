//! Cross-corpus overlap of drifting bases and cross-layer evidence agreement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::diachronic::FeatureDrift;
use crate::{Error, Result};

pub const DEFAULT_TOP_K: usize = 30;

/// The `k` most drifting features of a concept in one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTopSet {
    pub concept_id: String,
    pub corpus: String,
    pub k: usize,
    /// Ranked by drift descending.
    pub features: Vec<FeatureDrift>,
}

impl DriftTopSet {
    pub fn new(concept_id: &str, corpus: &str, k: usize, mut ranked: Vec<FeatureDrift>) -> Self {
        ranked.truncate(k);
        Self {
            concept_id: concept_id.to_string(),
            corpus: corpus.to_string(),
            k,
            features: ranked,
        }
    }

    pub fn ids(&self) -> BTreeSet<u32> {
        self.features.iter().map(|f| f.feature).collect()
    }
}

fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Option<f64> {
    let union = a.union(b).count();
    if union == 0 {
        return None;
    }
    Some(a.intersection(b).count() as f64 / union as f64)
}

fn same_concept(a: &DriftTopSet, b: &DriftTopSet) -> Result<()> {
    if a.concept_id != b.concept_id {
        return Err(Error::ConceptMismatch(a.concept_id.clone(), b.concept_id.clone()));
    }
    Ok(())
}

pub fn jaccard_at_k(a: &DriftTopSet, b: &DriftTopSet) -> Result<f64> {
    same_concept(a, b)?;
    jaccard(&a.ids(), &b.ids()).ok_or(Error::NoDriftingBases)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapParts {
    pub shared: BTreeSet<u32>,
    pub only_a: BTreeSet<u32>,
    pub only_b: BTreeSet<u32>,
}

pub fn decompose_overlap(a: &DriftTopSet, b: &DriftTopSet) -> Result<OverlapParts> {
    same_concept(a, b)?;
    let (ia, ib) = (a.ids(), b.ids());
    Ok(OverlapParts {
        shared: ia.intersection(&ib).copied().collect(),
        only_a: ia.difference(&ib).copied().collect(),
        only_b: ib.difference(&ia).copied().collect(),
    })
}

/// Overlap report for one concept across two corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub concept_id: String,
    pub corpus_a: String,
    pub corpus_b: String,
    pub k: usize,
    pub shared: Vec<u32>,
    pub only_a: Vec<u32>,
    pub only_b: Vec<u32>,
    pub jaccard: f64,
}

pub fn overlap_report(a: &DriftTopSet, b: &DriftTopSet) -> Result<OverlapReport> {
    let jaccard = jaccard_at_k(a, b)?;
    let parts = decompose_overlap(a, b)?;
    Ok(OverlapReport {
        concept_id: a.concept_id.clone(),
        corpus_a: a.corpus.clone(),
        corpus_b: b.corpus.clone(),
        k: a.k.max(b.k),
        shared: parts.shared.into_iter().collect(),
        only_a: parts.only_a.into_iter().collect(),
        only_b: parts.only_b.into_iter().collect(),
        jaccard,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub layer_tag: String,
    pub concept_id: String,
    pub corpus: String,
    pub grams: BTreeSet<String>,
}

/// Character 2-grams of each text with whitespace removed. Grams never span
/// two texts.
pub fn char_2grams<S: AsRef<str>>(texts: &[S]) -> BTreeSet<String> {
    let mut grams = BTreeSet::new();
    for text in texts {
        let chars: Vec<char> = text.as_ref().chars().filter(|c| !c.is_whitespace()).collect();
        for pair in chars.windows(2) {
            grams.insert(pair.iter().collect());
        }
    }
    grams
}

pub fn char_2gram_fingerprint<S: AsRef<str>>(
    layer_tag: &str,
    concept_id: &str,
    corpus: &str,
    texts: &[S],
) -> Fingerprint {
    Fingerprint {
        layer_tag: layer_tag.to_string(),
        concept_id: concept_id.to_string(),
        corpus: corpus.to_string(),
        grams: char_2grams(texts),
    }
}

/// Jaccard similarity of two gram sets; both empty is an error.
pub fn jaccard_2gram(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    jaccard(&a.grams, &b.grams).ok_or(Error::EmptyFingerprints)
}

/// Mean 2-gram Jaccard between `layers[target]` and every other layer.
pub fn avg_jaccard(target: usize, layers: &[Fingerprint]) -> Result<f64> {
    if layers.len() < 2 {
        return Err(Error::TooFewLayers(layers.len()));
    }
    let me = &layers[target];
    let mut total = 0.0;
    for (i, other) in layers.iter().enumerate() {
        if i != target {
            total += jaccard_2gram(me, other)?;
        }
    }
    Ok(total / (layers.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn top(ids: &[u32]) -> DriftTopSet {
        let ranked = ids
            .iter()
            .enumerate()
            .map(|(i, &f)| FeatureDrift {
                feature: f,
                drift: 100.0 - i as f64,
            })
            .collect();
        DriftTopSet::new("c", "x", 30, ranked)
    }

    fn fp(texts: &[&str]) -> Fingerprint {
        char_2gram_fingerprint("L", "c", "x", texts)
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard_at_k(&top(&[1, 2, 3]), &top(&[2, 3, 4])).unwrap(), 0.5);
        assert_eq!(jaccard_at_k(&top(&[1, 2]), &top(&[2, 1])).unwrap(), 1.0);
        assert_eq!(jaccard_at_k(&top(&[1]), &top(&[2])).unwrap(), 0.0);
        let err = jaccard_at_k(&top(&[]), &top(&[])).unwrap_err();
        assert_eq!(err.to_string(), "no drifting bases");
    }

    #[test]
    fn decomposition() {
        let p = decompose_overlap(&top(&[1, 2]), &top(&[2, 3])).unwrap();
        assert_eq!(p.shared, BTreeSet::from([2]));
        assert_eq!(p.only_a, BTreeSet::from([1]));
        assert_eq!(p.only_b, BTreeSet::from([3]));
        let p = decompose_overlap(&top(&[1, 2]), &top(&[1, 2])).unwrap();
        assert!(p.only_a.is_empty() && p.only_b.is_empty());
    }

    #[test]
    fn concept_must_match() {
        let mut b = top(&[1]);
        b.concept_id = "d".into();
        assert!(jaccard_at_k(&top(&[1]), &b).is_err());
    }

    #[test]
    fn grams() {
        assert_eq!(fp(&["abc"]).grams, BTreeSet::from(["ab".into(), "bc".into()]));
        assert_eq!(fp(&["a b"]).grams, BTreeSet::from(["ab".into()]));
        assert_eq!(fp(&["ab", "bc"]).grams, BTreeSet::from(["ab".into(), "bc".into()]));
        assert!(fp(&[]).grams.is_empty());
        assert_eq!(fp(&["个人主义"]).grams.len(), 3);
    }

    #[test]
    fn avg_jaccard_examples() {
        let same = vec![fp(&["社会之进化"]); 4];
        for i in 0..4 {
            assert_eq!(avg_jaccard(i, &same).unwrap(), 1.0);
        }
        let apart = [fp(&["ab"]), fp(&["cd"]), fp(&["ef"])];
        assert_eq!(avg_jaccard(0, &apart).unwrap(), 0.0);
        assert!(matches!(avg_jaccard(0, &same[..1]), Err(Error::TooFewLayers(1))));
    }
}
