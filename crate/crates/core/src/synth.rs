//! Seeded synthetic stores for tests, benchmarks and demos.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptComponent, ConceptDef};
use crate::store::{ActivationRecord, Level, StoreManifest, UnitMeta};
use crate::SparseVector;

const FILLER: &str = "的之民新青年文化思想运动革命政治经济道德自由平等科学教育家庭妇女劳动阶级时代问题精神生活中西古今农工商学";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub dim: u32,
    /// Maximum number of active features per unit.
    pub kappa: usize,
    pub units: usize,
    pub year_min: i32,
    pub year_max: i32,
    pub corpora: Vec<String>,
    pub concepts: Vec<ConceptDef>,
    /// Probability that a unit carries one concept's bases.
    pub concept_rate: f64,
    /// Probability that a concept-bearing unit contains a lexeme of it.
    pub lexeme_rate: f64,
    /// From this year on, planted concept activations are doubled.
    pub pivot_year: Option<i32>,
    pub layer_tag: String,
    /// Give every unit exactly `kappa` active features instead of up to `kappa`.
    #[serde(default)]
    pub full_support: bool,
}

impl SynthSpec {
    pub fn new(seed: u64, dim: u32, kappa: usize, units: usize, concepts: Vec<ConceptDef>) -> Self {
        Self {
            seed,
            dim,
            kappa,
            units,
            year_min: 1915,
            year_max: 1926,
            corpora: vec!["newyouth".into()],
            concepts,
            concept_rate: 0.3,
            lexeme_rate: 0.5,
            pivot_year: Some(1918),
            layer_tag: "L29".into(),
            full_support: false,
        }
    }

    pub fn manifest(&self, store_id: &str) -> StoreManifest {
        StoreManifest {
            store_id: store_id.to_string(),
            corpus: self.corpora.join("+"),
            layer_tag: self.layer_tag.clone(),
            dim: self.dim,
            kappa: Some(self.kappa as u32),
            year_min: self.year_min,
            year_max: self.year_max,
            unit_count: self.units,
            level: Level::Sentence,
        }
    }
}

/// Rounds through `f32` so that values survive a store round trip unchanged.
fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

fn filler_chars(concepts: &[ConceptDef]) -> Vec<char> {
    let banned: BTreeSet<char> = concepts
        .iter()
        .flat_map(|c| c.lexemes.iter().flat_map(|l| l.chars()))
        .collect();
    FILLER.chars().filter(|c| !banned.contains(c)).collect()
}

fn filler_text<R: Rng>(rng: &mut R, pool: &[char], len: usize) -> String {
    (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Generates records in canonical order. Values are positive and exactly
/// representable as `f32`.
pub fn generate(spec: &SynthSpec) -> Vec<ActivationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool = filler_chars(&spec.concepts);
    let kappa = spec.kappa.clamp(1, spec.dim as usize);
    let mut records = Vec::with_capacity(spec.units);
    for i in 0..spec.units {
        let corpus = &spec.corpora[rng.random_range(0..spec.corpora.len())];
        let year = rng.random_range(spec.year_min..=spec.year_max);
        let mut pairs: Vec<(u32, f64)> = Vec::with_capacity(kappa);
        let len = rng.random_range(6..18);
        let mut text = filler_text(&mut rng, &pool, len);

        if !spec.concepts.is_empty() && rng.random_bool(spec.concept_rate) {
            let concept = &spec.concepts[rng.random_range(0..spec.concepts.len())];
            let boost = match spec.pivot_year {
                Some(p) if year >= p => 2.0,
                _ => 1.0,
            };
            let bases: Vec<u32> = concept.all_bases().into_iter().collect();
            let take = rng.random_range(1..=bases.len().min(kappa));
            for j in sample(&mut rng, bases.len(), take) {
                pairs.push((bases[j], f32_exact(boost * rng.random_range(0.5..3.0))));
            }
            if rng.random_bool(spec.lexeme_rate) {
                let lexeme = &concept.lexemes[rng.random_range(0..concept.lexemes.len())];
                let at = rng.random_range(0..=text.chars().count());
                let mut chars: Vec<char> = text.chars().collect();
                chars.splice(at..at, lexeme.chars());
                text = chars.into_iter().collect();
            }
        }
        let room = kappa - pairs.len();
        let extra = if spec.full_support { room } else { rng.random_range(0..=room) };
        let target = pairs.len() + extra;
        loop {
            let want = target - pairs.len();
            for f in sample(&mut rng, spec.dim as usize, want) {
                let f = f as u32;
                if !pairs.iter().any(|p| p.0 == f) {
                    pairs.push((f, f32_exact(rng.random_range(0.01..1.0))));
                }
            }
            if !spec.full_support || pairs.len() >= target {
                break;
            }
        }
        records.push(ActivationRecord {
            meta: UnitMeta {
                unit_id: format!("{corpus}-{year}-{i:07}"),
                corpus: corpus.clone(),
                year,
                text,
            },
            z: SparseVector::from_pairs(spec.dim, pairs).expect("generated vector is valid"),
        });
    }
    records.sort_by(|a, b| a.canonical_cmp(b));
    records
}

/// `n` concepts with 1 to 3 components each over distinct random bases.
pub fn random_concepts<R: Rng>(rng: &mut R, dim: u32, n: usize) -> Vec<ConceptDef> {
    const LEXEMES: [&str; 6] = ["个人", "社会", "国家", "世界", "主义", "阶级"];
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        let components = rng.random_range(1..=3usize);
        let sizes: Vec<usize> = (0..components).map(|_| rng.random_range(1..=2usize)).collect();
        let total: usize = sizes.iter().sum();
        let picked = sample(rng, dim as usize, total.min(dim as usize)).into_vec();
        let mut offset = 0;
        let mut comps = Vec::new();
        for (k, size) in sizes.into_iter().enumerate() {
            let end = (offset + size).min(picked.len());
            if offset == end {
                break;
            }
            let mut bases: Vec<u32> = picked[offset..end].iter().map(|&b| b as u32).collect();
            bases.sort_unstable();
            comps.push(ConceptComponent {
                label: format!("component-{k}"),
                bases,
            });
            offset = end;
        }
        out.push(ConceptDef {
            concept_id: format!("concept-{c}"),
            name: format!("concept {c}"),
            lexemes: vec![LEXEMES[c % LEXEMES.len()].to_string()],
            components: comps,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded_and_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let concepts = random_concepts(&mut rng, 64, 3);
        let spec = SynthSpec::new(9, 64, 8, 200, concepts);
        let a = generate(&spec);
        assert_eq!(a, generate(&spec));
        assert_eq!(a.len(), 200);
        assert!(a.iter().all(|r| r.z.nnz() <= 8));
        assert!(a.windows(2).all(|w| w[0].canonical_cmp(&w[1]).is_lt()));
    }
}
