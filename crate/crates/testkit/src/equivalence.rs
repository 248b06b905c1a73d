//! Engine-versus-oracle comparison on random synthetic stores.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use diachron_core::analysis::{cross_layer, LayerInput, Params};
use diachron_core::comparative::{char_2gram_fingerprint, jaccard_at_k, DriftTopSet};
use diachron_core::concepts::{concept_magnitude, ConceptDef};
use diachron_core::diachronic::{
    build_salient_set, concept_series, corpus_view, diversity_entropy, feature_series,
    orientation_shares, peak_year, pooled_shares, reorganization_delta, select_top_drifting, turning_point, view,
};
use diachron_core::evidence::{diachronic_evidence, EvidenceTarget};
use diachron_core::store::{corpora, load_store, write_store, ActivationRecord, RecordFilter};
use diachron_core::synth::{generate, random_concepts, SynthSpec};
use diachron_core::{Exec, SparseVector};

use crate::*;

pub const TOL: f64 = 1e-9;

/// Tally of comparisons; the first mismatch aborts with a description.
#[derive(Debug, Default)]
pub struct Tally {
    pub checks: usize,
}

impl Tally {
    fn close(&mut self, engine: f64, oracle: f64, what: impl FnOnce() -> String) -> Result<(), String> {
        self.checks += 1;
        if (engine - oracle).abs() <= TOL {
            Ok(())
        } else {
            Err(format!("{}: engine {engine} vs oracle {oracle}", what()))
        }
    }

    fn same<T: PartialEq + std::fmt::Debug>(&mut self, engine: T, oracle: T, what: impl FnOnce() -> String) -> Result<(), String> {
        self.checks += 1;
        if engine == oracle {
            Ok(())
        } else {
            Err(format!("{}: engine {engine:?} vs oracle {oracle:?}", what()))
        }
    }
}

/// Shape of one random fixture.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: SynthSpec,
    pub records: Vec<ActivationRecord>,
    pub years: Vec<i32>,
}

pub fn random_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(8..=64u32);
    let kappa = rng.random_range(1..=8usize);
    let units = rng.random_range(20..=500usize);
    let n_years = rng.random_range(1..=10i32);
    let n_corpora = rng.random_range(1..=3usize);
    let n_concepts = rng.random_range(1..=4usize);
    let concepts = random_concepts(&mut rng, dim, n_concepts);
    let mut spec = SynthSpec::new(seed ^ 0x5eed, dim, kappa, units, concepts);
    spec.year_min = 1915;
    spec.year_max = 1915 + n_years - 1;
    spec.corpora = ["newyouth", "guide", "eastern"][..n_corpora].iter().map(|s| s.to_string()).collect();
    spec.concept_rate = rng.random_range(0.2..0.9);
    spec.lexeme_rate = rng.random_range(0.0..1.0);
    spec.pivot_year = Some(rng.random_range(spec.year_min..=spec.year_max));
    let records = generate(&spec);
    let years = (spec.year_min..=spec.year_max).collect();
    Fixture { spec, records, years }
}

/// Writes the fixture to disk and loads it back through the store reader.
pub fn round_trip(fixture: &Fixture) -> Vec<ActivationRecord> {
    let dir = tempfile::tempdir().expect("tempdir");
    write_store(dir.path(), &fixture.spec.manifest("fixture"), &fixture.records).expect("write store");
    load_store(dir.path(), &RecordFilter::all()).expect("load store").records
}

/// Each layer rescales every feature by its own deterministic factor so that
/// drift rankings, and hence evidence, differ between layers.
fn layer_variant(records: &[ActivationRecord], layer: u64) -> Vec<ActivationRecord> {
    if layer == 0 {
        return records.to_vec();
    }
    records
        .iter()
        .map(|r| {
            let pairs = r.z.indices().iter().zip(r.z.values()).map(|(&i, &v)| {
                let h = (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15 ^ layer) >> 40;
                (i, v * (0.5 + (h % 1000) as f64 / 1000.0))
            });
            ActivationRecord {
                meta: r.meta.clone(),
                z: SparseVector::from_pairs(r.z.dim(), pairs).expect("scaled vector"),
            }
        })
        .collect()
}

/// Oracle evidence texts of the diachronic rule for the top drifting features.
fn oracle_evidence_texts(units: &[&DenseUnit], years: &[i32], top: &[(u32, f64)], per_year: usize) -> Vec<String> {
    let mut texts = Vec::new();
    for &(f, _) in top {
        let series = yearly_mean(units, years, |u| u.row[f as usize]);
        let pts: Vec<(i32, f64)> = years.iter().zip(&series).filter_map(|(y, v)| v.map(|v| (*y, v))).collect();
        if pts.len() < 2 {
            continue;
        }
        let mut best = 1;
        for i in 2..pts.len() {
            if (pts[i].1 - pts[i - 1].1).abs() > (pts[best].1 - pts[best - 1].1).abs() {
                best = i;
            }
        }
        for y in [pts[best - 1].0, pts[best].0] {
            let in_year: Vec<&DenseUnit> = units.iter().copied().filter(|u| u.year == y).collect();
            for (id, _) in ranked_units(&in_year, &[f]).into_iter().take(per_year) {
                let u = in_year.iter().find(|u| u.unit_id == id).unwrap();
                texts.push(u.text.clone());
            }
        }
    }
    texts
}

fn check_cell(
    t: &mut Tally,
    records: &[ActivationRecord],
    dense: &[DenseUnit],
    concept: &ConceptDef,
    corpus: &str,
    years: &[i32],
    params: &Params,
) -> Result<Option<DriftTopSet>, String> {
    let cid = &concept.concept_id;
    let all = view(records);
    let in_corpus = corpus_view(&all, corpus);
    if in_corpus.is_empty() {
        return Ok(None);
    }
    for (r, u) in records.iter().zip(dense) {
        t.close(concept_magnitude(r, concept), magnitude(&u.row, concept), || {
            format!("m_i {cid} {}", r.meta.unit_id)
        })?;
    }

    let engine_set = build_salient_set(&all, concept, corpus, params.q).map_err(|e| e.to_string())?;
    let oracle_set = salient(dense, concept, corpus, params.q);
    t.close(engine_set.threshold, oracle_set.threshold, || format!("tau {cid}/{corpus}"))?;
    t.same(&engine_set.unit_ids, &oracle_set.ids, || format!("salient ids {cid}/{corpus}"))?;

    let members = engine_set.select(&all);
    let oracle_members: Vec<&DenseUnit> = dense
        .iter()
        .filter(|u| u.corpus == corpus && oracle_set.ids.contains(&u.unit_id))
        .collect();

    let a = concept_series(&members, concept, years, Some(corpus), "salient");
    let oa = yearly_mean(&oracle_members, years, |u| magnitude(&u.row, concept));
    for (i, (e, o)) in a.values.iter().zip(&oa).enumerate() {
        t.same(e.is_some(), o.is_some(), || format!("A presence {cid}/{corpus} {}", years[i]))?;
        if let (Some(e), Some(o)) = (e, o) {
            t.close(*e, *o, || format!("A {cid}/{corpus} {}", years[i]))?;
        }
    }
    t.same(peak_year(&a).ok(), peak(years, &oa), || format!("peak {cid}/{corpus}"))?;
    let et = turning_point(&a).ok();
    let ot = turn(years, &oa);
    t.same(et.map(|x| x.year), ot.map(|x| x.0), || format!("turn {cid}/{corpus}"))?;
    if let (Some(e), Some(o)) = (et, ot) {
        t.close(e.intensity, o.1, || format!("I {cid}/{corpus}"))?;
    }

    let mut prev: Option<(diachron_core::diachronic::CompositionRow, Vec<f64>)> = None;
    for &y in years {
        let engine_row = orientation_shares(&members, concept, corpus, y, params.epsilon);
        let in_year: Vec<&DenseUnit> = oracle_members.iter().copied().filter(|u| u.year == y).collect();
        t.same(engine_row.is_some(), !in_year.is_empty(), || format!("share presence {cid} {y}"))?;
        let Some(row) = engine_row else { continue };
        let means: Vec<f64> = concept
            .components
            .iter()
            .map(|c| in_year.iter().map(|u| component_value(&u.row, &c.bases)).sum::<f64>() / in_year.len() as f64)
            .collect();
        let os = shares(&means, params.epsilon);
        for (k, (e, o)) in row.components.iter().zip(&os).enumerate() {
            t.close(e.mean, means[k], || format!("mu_s {cid} {y} #{k}"))?;
            t.close(e.share, *o, || format!("share {cid} {y} #{k}"))?;
        }
        t.close(diversity_entropy(&row), entropy(&os), || format!("H {cid} {y}"))?;
        if let Some((prev_row, prev_shares)) = &prev {
            let d = reorganization_delta(prev_row, &row).map_err(|e| e.to_string())?;
            t.close(d, l1_distance(prev_shares, &os), || format!("Delta {cid} {y}"))?;
        }
        prev = Some((row, os));
    }

    let pooled = pooled_shares(&members, concept, corpus, params.epsilon).ok_or("no pooled shares")?;
    let pooled_means: Vec<f64> = concept
        .components
        .iter()
        .map(|c| {
            oracle_members.iter().map(|u| component_value(&u.row, &c.bases)).sum::<f64>() / oracle_members.len() as f64
        })
        .collect();
    t.close(
        diversity_entropy(&pooled),
        entropy(&shares(&pooled_means, params.epsilon)),
        || format!("pooled H {cid}/{corpus}"),
    )?;

    let er = diachron_core::diachronic::implicit_ratio(&engine_set, &all, concept).ok();
    let or = crate::implicit_ratio(&oracle_members, concept);
    t.same(er.is_some(), or.is_some(), || format!("r presence {cid}/{corpus}"))?;
    if let (Some(e), Some(o)) = (er, or) {
        t.close(e, o, || format!("r {cid}/{corpus}"))?;
    }

    // Feature means and drift over the salient set.
    let dim = records[0].z.dim();
    for f in 0..dim {
        let es = feature_series(&members, f, years, Some(corpus), "salient");
        let os = yearly_mean(&oracle_members, years, |u| u.row[f as usize]);
        for (e, o) in es.values.iter().zip(&os) {
            if let (Some(e), Some(o)) = (e, o) {
                t.close(*e, *o, || format!("mu feature {f} {cid}/{corpus}"))?;
            }
        }
    }
    let engine_top = select_top_drifting(&members, years, params.top_k, None);
    let oracle_rank = ranked_drifts(&oracle_members, years);
    t.same(engine_top.len(), oracle_rank.len().min(params.top_k), || format!("top len {cid}/{corpus}"))?;
    for (i, e) in engine_top.iter().enumerate() {
        t.close(e.drift, oracle_rank[i].1, || format!("D rank {i} {cid}/{corpus}"))?;
        let own = oracle_rank.iter().find(|o| o.0 == e.feature).map(|o| o.1).unwrap_or(f64::NAN);
        t.close(e.drift, own, || format!("D feature {} {cid}/{corpus}", e.feature))?;
    }

    // Evidence fingerprint under the diachronic rule.
    let mut engine_texts = Vec::new();
    for d in &engine_top {
        let fs = feature_series(&members, d.feature, years, Some(corpus), "salient");
        if let Ok(b) = diachronic_evidence(&members, &EvidenceTarget::Feature { feature: d.feature }, &fs, params.evidence_per_year) {
            engine_texts.extend(b.items.into_iter().map(|i| i.text));
        }
    }
    let oracle_top: Vec<(u32, f64)> = oracle_rank.iter().take(params.top_k).copied().collect();
    let oracle_texts = oracle_evidence_texts(&oracle_members, years, &oracle_top, params.evidence_per_year);
    let fp = char_2gram_fingerprint("L", cid, corpus, &engine_texts);
    t.same(&fp.grams, &two_grams(&oracle_texts), || format!("fingerprint {cid}/{corpus}"))?;

    Ok(Some(DriftTopSet::new(cid, corpus, params.top_k, engine_top)))
}

/// Compares every quantity on the store generated from `seed`; returns the
/// number of comparisons or the first mismatch.
pub fn check_seed(seed: u64) -> Result<usize, String> {
    let fixture = random_fixture(seed);
    let records = round_trip(&fixture);
    if records != fixture.records {
        return Err("store round trip changed records".into());
    }
    let dense = densify(&records);
    let params = Params::default();
    let years = &fixture.years;
    let mut t = Tally::default();

    for concept in &fixture.spec.concepts {
        let mut tops = Vec::new();
        for corpus in corpora(&records) {
            if let Some(top) = check_cell(&mut t, &records, &dense, concept, &corpus, years, &params)? {
                tops.push(top);
            }
        }
        for i in 0..tops.len() {
            for j in i + 1..tops.len() {
                let a: BTreeSet<u32> = tops[i].ids();
                let b: BTreeSet<u32> = tops[j].ids();
                match (jaccard_at_k(&tops[i], &tops[j]), jaccard(&a, &b)) {
                    (Ok(e), Some(o)) => t.close(e, o, || format!("Jaccard@K {}", concept.concept_id))?,
                    (Err(_), None) => {}
                    (e, o) => return Err(format!("Jaccard@K presence: {e:?} vs {o:?}")),
                }
            }
        }

        // Cross-layer agreement over rescaled copies of the first corpus.
        let corpus = corpora(&records)[0].clone();
        let layers: Vec<Vec<ActivationRecord>> = (0..3).map(|l| layer_variant(&records, l)).collect();
        let inputs: Vec<LayerInput> = layers
            .iter()
            .enumerate()
            .map(|(l, rs)| LayerInput { layer: format!("L{l}"), records: view(rs) })
            .collect();
        let mut grams = Vec::new();
        for rs in &layers {
            let d = densify(rs);
            let s = salient(&d, concept, &corpus, params.q);
            let members: Vec<&DenseUnit> = d.iter().filter(|u| u.corpus == corpus && s.ids.contains(&u.unit_id)).collect();
            let top: Vec<(u32, f64)> = ranked_drifts(&members, years).into_iter().take(params.top_k).collect();
            grams.push(two_grams(&oracle_evidence_texts(&members, years, &top, params.evidence_per_year)));
        }
        let engine_rows = cross_layer(&inputs, concept, &corpus, years, &params, Exec::default());
        match engine_rows {
            Ok(rows) => {
                for (l, row) in rows.iter().enumerate() {
                    let o = avg_jaccard(l, &grams).ok_or("oracle AvgJaccard undefined")?;
                    t.close(row.avg_jaccard, o, || format!("AvgJaccard {} L{l}", concept.concept_id))?;
                    t.same(row.fingerprint_size, grams[l].len(), || format!("fingerprint size L{l}"))?;
                }
            }
            Err(e) => {
                if (0..grams.len()).all(|l| avg_jaccard(l, &grams).is_some()) {
                    return Err(format!("cross_layer failed where oracle is defined: {e}"));
                }
            }
        }
    }
    Ok(t.checks)
}
