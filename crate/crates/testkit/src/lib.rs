//! Dense brute-force reference implementations used to check the engine.
//!
//! The oracle functions never call engine analytics. Records are expanded to
//! dense rows and every quantity is recomputed with the most direct loop
//! available, so an agreement between the two is meaningful. The
//! [`equivalence`] module runs both sides on random stores and compares them.

use std::collections::{BTreeMap, BTreeSet};

use diachron_core::concepts::ConceptDef;
use diachron_core::store::ActivationRecord;

pub mod equivalence;

/// A record expanded to a dense activation row.
#[derive(Debug, Clone)]
pub struct DenseUnit {
    pub unit_id: String,
    pub corpus: String,
    pub year: i32,
    pub text: String,
    pub row: Vec<f64>,
}

pub fn densify(records: &[ActivationRecord]) -> Vec<DenseUnit> {
    records
        .iter()
        .map(|r| {
            let mut row = vec![0.0; r.z.dim() as usize];
            for (&i, &v) in r.z.indices().iter().zip(r.z.values()) {
                row[i as usize] = v;
            }
            DenseUnit {
                unit_id: r.meta.unit_id.clone(),
                corpus: r.meta.corpus.clone(),
                year: r.meta.year,
                text: r.meta.text.clone(),
                row,
            }
        })
        .collect()
}

pub fn component_value(row: &[f64], bases: &[u32]) -> f64 {
    let mut s = 0.0;
    for &b in bases {
        s += row[b as usize];
    }
    s
}

pub fn magnitude(row: &[f64], concept: &ConceptDef) -> f64 {
    let mut s = 0.0;
    for c in &concept.components {
        s += component_value(row, &c.bases);
    }
    s
}

/// Mean of `f` per year; `None` for years with no units.
pub fn yearly_mean<F: Fn(&DenseUnit) -> f64>(units: &[&DenseUnit], years: &[i32], f: F) -> Vec<Option<f64>> {
    years
        .iter()
        .map(|&y| {
            let vals: Vec<f64> = units.iter().filter(|u| u.year == y).map(|u| f(u)).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        })
        .collect()
}

/// Sum of absolute differences between consecutive defined entries.
pub fn drift(series: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = series.iter().flatten().copied().collect();
    let mut d = 0.0;
    for i in 1..present.len() {
        d += (present[i] - present[i - 1]).abs();
    }
    d
}

/// `(feature, drift)` for every feature active somewhere in `units`, ranked
/// by drift descending then id ascending.
pub fn ranked_drifts(units: &[&DenseUnit], years: &[i32]) -> Vec<(u32, f64)> {
    let Some(dim) = units.first().map(|u| u.row.len()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for f in 0..dim {
        let active = units.iter().any(|u| years.contains(&u.year) && u.row[f] > 0.0);
        if !active {
            continue;
        }
        let series = yearly_mean(units, years, |u| u.row[f]);
        out.push((f as u32, drift(&series)));
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

/// Smallest sample `v` such that the fraction of samples `<= v` reaches `q`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    for &v in &sorted {
        let below = sorted.iter().filter(|&&x| x <= v).count() as f64;
        if below / n >= q - 1e-12 {
            return v;
        }
    }
    *sorted.last().unwrap()
}

pub struct Salient {
    pub threshold: f64,
    pub ids: BTreeSet<String>,
}

pub fn salient(units: &[DenseUnit], concept: &ConceptDef, corpus: &str, q: f64) -> Salient {
    let mine: Vec<&DenseUnit> = units.iter().filter(|u| u.corpus == corpus).collect();
    let mags: Vec<f64> = mine.iter().map(|u| magnitude(&u.row, concept)).collect();
    let threshold = quantile(&mags, q);
    let ids = mine
        .iter()
        .zip(&mags)
        .filter(|(_, &m)| m >= threshold)
        .map(|(u, _)| u.unit_id.clone())
        .collect();
    Salient { threshold, ids }
}

pub fn shares(means: &[f64], epsilon: f64) -> Vec<f64> {
    let total: f64 = means.iter().sum();
    means.iter().map(|m| m / (total + epsilon)).collect()
}

pub fn entropy(shares: &[f64]) -> f64 {
    if shares.len() < 2 {
        return 0.0;
    }
    let mut h = 0.0;
    for &p in shares {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    (h / (shares.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Earliest year holding the maximum.
pub fn peak(years: &[i32], series: &[Option<f64>]) -> Option<i32> {
    let max = series.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    years
        .iter()
        .zip(series)
        .find(|(_, v)| **v == Some(max))
        .map(|(y, _)| *y)
}

/// `(year, signed change)` of the largest absolute step between consecutive
/// defined entries; earliest on ties.
pub fn turn(years: &[i32], series: &[Option<f64>]) -> Option<(i32, f64)> {
    let pts: Vec<(i32, f64)> = years
        .iter()
        .zip(series)
        .filter_map(|(y, v)| v.map(|v| (*y, v)))
        .collect();
    let mut best: Option<(i32, f64)> = None;
    for i in 1..pts.len() {
        let d = pts[i].1 - pts[i - 1].1;
        match best {
            Some((_, b)) if d.abs() <= b.abs() => {}
            _ => best = Some((pts[i].0, d)),
        }
    }
    best
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Implicit share of salient concept mass, `None` when the mass is zero.
pub fn implicit_ratio(units: &[&DenseUnit], concept: &ConceptDef) -> Option<f64> {
    let mut total = 0.0;
    let mut implicit = 0.0;
    for u in units {
        let m = magnitude(&u.row, concept);
        total += m;
        if !concept.lexemes.iter().any(|lx| u.text.contains(lx.as_str())) {
            implicit += m;
        }
    }
    (total > 0.0).then(|| implicit / total)
}

pub fn jaccard<T: Ord + Clone>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Option<f64> {
    let mut union = a.clone();
    union.extend(b.iter().cloned());
    if union.is_empty() {
        return None;
    }
    let inter = a.iter().filter(|x| b.contains(x)).count();
    Some(inter as f64 / union.len() as f64)
}

pub fn two_grams(texts: &[String]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for t in texts {
        let mut prev: Option<char> = None;
        for c in t.chars() {
            if c.is_whitespace() {
                continue;
            }
            if let Some(p) = prev {
                out.insert(format!("{p}{c}"));
            }
            prev = Some(c);
        }
    }
    out
}

pub fn avg_jaccard(target: usize, sets: &[BTreeSet<String>]) -> Option<f64> {
    let mut total = 0.0;
    for (i, s) in sets.iter().enumerate() {
        if i != target {
            total += jaccard(&sets[target], s)?;
        }
    }
    Some(total / (sets.len() - 1) as f64)
}

/// `(unit_id, score)` of units with positive score on `bases`, sorted by score
/// descending then id.
pub fn ranked_units(units: &[&DenseUnit], bases: &[u32]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = units
        .iter()
        .filter(|u| bases.iter().any(|&b| u.row[b as usize] > 0.0))
        .map(|u| (u.unit_id.clone(), component_value(&u.row, bases)))
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

/// Row-major dense matrix–vector product.
pub fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| (0..cols).map(|c| m[r * cols + c] * x[c]).sum())
        .collect()
}

/// TopK by value (lower index on ties), then non-positive entries dropped.
pub fn topk_dense(a: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].partial_cmp(&a[i]).unwrap().then(i.cmp(&j)));
    let mut out = vec![0.0; a.len()];
    for &i in order.iter().take(k) {
        if a[i] > 0.0 {
            out[i] = a[i];
        }
    }
    out
}

/// Year histogram of the units, for fixture sanity checks.
pub fn year_counts(units: &[DenseUnit]) -> BTreeMap<i32, usize> {
    let mut m = BTreeMap::new();
    for u in units {
        *m.entry(u.year).or_insert(0) += 1;
    }
    m
}

/// Asserts `|a - b| <= tol`, with a readable message.
#[track_caller]
pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: engine {a} vs oracle {b} (tol {tol})");
}
