//! Operational concept definitions.
//!
//! A concept is a set of labeled components, each a cluster of SAE bases, plus
//! the canonical lexemes used to split salient units into anchored and
//! implicit contexts. Components of one concept must not share bases; a base
//! may appear in several concepts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::store::ActivationRecord;
use crate::{Error, Result, SparseVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptComponent {
    pub label: String,
    /// Sorted, distinct base ids.
    pub bases: Vec<u32>,
}

impl ConceptComponent {
    /// Aggregated activation of the component: the sum over its bases.
    #[inline]
    pub fn activation(&self, z: &SparseVector) -> f64 {
        self.bases.iter().map(|&b| z.get(b)).sum()
    }

    pub fn in_support(&self, z: &SparseVector) -> bool {
        self.bases.iter().any(|&b| z.contains(b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptDef {
    #[serde(rename = "id")]
    pub concept_id: String,
    #[serde(default)]
    pub name: String,
    pub lexemes: Vec<String>,
    pub components: Vec<ConceptComponent>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConceptFile {
    concepts: Vec<ConceptDef>,
}

impl ConceptDef {
    fn normalize_and_check(mut self) -> Result<Self> {
        let id = self.concept_id.clone();
        if id.is_empty() {
            return Err(Error::Concept("concept id must be non-empty".into()));
        }
        if self.name.is_empty() {
            self.name = id.clone();
        }
        if self.lexemes.is_empty() {
            return Err(Error::Concept(format!("concept '{id}' has no lexemes")));
        }
        if self.lexemes.iter().any(String::is_empty) {
            return Err(Error::Concept(format!("concept '{id}' has an empty lexeme")));
        }
        if self.components.is_empty() {
            return Err(Error::Concept(format!("concept '{id}' has no components")));
        }
        let mut labels = HashSet::new();
        let mut owner: BTreeMap<u32, String> = BTreeMap::new();
        for comp in &mut self.components {
            if !labels.insert(comp.label.clone()) {
                return Err(Error::Concept(format!(
                    "concept '{id}' repeats component label '{}'",
                    comp.label
                )));
            }
            if comp.bases.is_empty() {
                return Err(Error::Concept(format!(
                    "component '{}' of concept '{id}' has no bases",
                    comp.label
                )));
            }
            comp.bases.sort_unstable();
            comp.bases.dedup();
            for &b in &comp.bases {
                if let Some(first) = owner.insert(b, comp.label.clone()) {
                    return Err(Error::OverlappingComponents {
                        concept: id.clone(),
                        base: b,
                        first,
                        second: comp.label.clone(),
                    });
                }
            }
        }
        Ok(self)
    }

    /// Fails when a base id does not fit the store dimension.
    pub fn check_dim(&self, dim: u32) -> Result<()> {
        match self.all_bases().into_iter().find(|&b| b >= dim) {
            Some(b) => Err(Error::Concept(format!(
                "concept '{}' references base {b} outside dim {dim}",
                self.concept_id
            ))),
            None => Ok(()),
        }
    }

    pub fn all_bases(&self) -> BTreeSet<u32> {
        self.components
            .iter()
            .flat_map(|c| c.bases.iter().copied())
            .collect()
    }

    pub fn component(&self, label: &str) -> Option<&ConceptComponent> {
        self.components.iter().find(|c| c.label == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.components.iter().map(|c| c.label.clone()).collect()
    }

    /// True when any lexeme occurs verbatim in `text`.
    pub fn is_anchored(&self, text: &str) -> bool {
        self.lexemes.iter().any(|lx| text.contains(lx.as_str()))
    }
}

/// Parses and validates a concept configuration document.
pub fn parse_concepts(json: &str) -> Result<Vec<ConceptDef>> {
    let file: ConceptFile = serde_json::from_str(json)?;
    let mut ids = HashSet::new();
    file.concepts
        .into_iter()
        .map(|c| {
            let c = c.normalize_and_check()?;
            if !ids.insert(c.concept_id.clone()) {
                return Err(Error::Concept(format!("duplicate concept id '{}'", c.concept_id)));
            }
            Ok(c)
        })
        .collect()
}

pub fn load_concepts(path: impl AsRef<Path>) -> Result<Vec<ConceptDef>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_concepts(&text)
}

pub fn concepts_to_json(concepts: &[ConceptDef]) -> Result<String> {
    let file = ConceptFile {
        concepts: concepts.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn find_concept<'a>(concepts: &'a [ConceptDef], id: &str) -> Result<&'a ConceptDef> {
    concepts
        .iter()
        .find(|c| c.concept_id == id)
        .ok_or_else(|| Error::UnknownConcept(id.to_string()))
}

pub fn component_activation(record: &ActivationRecord, component: &ConceptComponent) -> f64 {
    component.activation(&record.z)
}

/// Concept magnitude: the sum of the concept's component activations.
pub fn concept_magnitude(record: &ActivationRecord, concept: &ConceptDef) -> f64 {
    concept
        .components
        .iter()
        .map(|c| component_activation(record, c))
        .sum()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSplit {
    pub anchored: BTreeSet<String>,
    pub implicit: BTreeSet<String>,
}

/// Partitions units by whether any canonical lexeme occurs in their text.
pub fn split_by_anchor<'a>(
    records: impl IntoIterator<Item = &'a ActivationRecord>,
    concept: &ConceptDef,
) -> AnchorSplit {
    let mut split = AnchorSplit::default();
    for r in records {
        let id = r.meta.unit_id.clone();
        if concept.is_anchored(&r.meta.text) {
            split.anchored.insert(id);
        } else {
            split.implicit.insert(id);
        }
    }
    split
}

/// The label index used for the published case study (New Youth / The Guide).
///
/// Bases come from the published semantic label table; lexemes are the
/// canonical Chinese forms.
pub fn reference_concepts() -> Vec<ConceptDef> {
    let comp = |label: &str, bases: &[u32]| ConceptComponent {
        label: label.into(),
        bases: bases.to_vec(),
    };
    let concept = |id: &str, lexeme: &str, components: Vec<ConceptComponent>| ConceptDef {
        concept_id: id.into(),
        name: id.into(),
        lexemes: vec![lexeme.into()],
        components,
    };
    vec![
        concept(
            "individual",
            "个人",
            vec![
                comp("Actorhood", &[90370]),
                comp("Individualism as Discourse", &[173164]),
                comp("Property and Economic Individuality", &[206475]),
            ],
        ),
        concept(
            "society",
            "社会",
            vec![
                comp("Societal Transition and Institutional Design", &[3810]),
                comp("Organized Praxis and Labor-Movement Alignment", &[25413, 224715]),
                comp("Party Linkage and Organizational Alignment", &[63228, 96661, 104017]),
            ],
        ),
        concept(
            "nation",
            "国家",
            vec![comp("Nation-State as Strategic Instrument", &[202680])],
        ),
        concept(
            "world",
            "世界",
            vec![comp("Revolutionary International Field", &[81379])],
        ),
    ]
}
