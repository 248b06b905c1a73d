//! Activation stores: on-disk layout, validation, loading and token pooling.
//!
//! A store is a directory holding `manifest.json` and `units.jsonl` (one unit
//! per line: `unit_id`, `corpus`, `year`, `text`, `indices`, `values`).
//! Token-level stores additionally carry `tokens.jsonl` (`unit_id`,
//! `token_index`, `indices`, `values`) and are only an input to pooling.
//!
//! Values are written as `f32` and widened to `f64` on load.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sparse::max_pool_tokens;
use crate::{Error, Exec, Result, SparseVector};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const UNITS_FILE: &str = "units.jsonl";
pub const TOKENS_FILE: &str = "tokens.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Token,
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreManifest {
    pub store_id: String,
    pub corpus: String,
    pub layer_tag: String,
    pub dim: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u32>,
    pub year_min: i32,
    pub year_max: i32,
    pub unit_count: usize,
    pub level: Level,
}

impl StoreManifest {
    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dim == 0 {
            out.push("manifest dim must be positive".to_string());
        }
        if self.kappa == Some(0) {
            out.push("manifest kappa must be positive when present".to_string());
        }
        if self.year_min > self.year_max {
            out.push(format!(
                "manifest year_min {} exceeds year_max {}",
                self.year_min, self.year_max
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitMeta {
    pub unit_id: String,
    pub corpus: String,
    pub year: i32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    pub meta: UnitMeta,
    pub z: SparseVector,
}

impl ActivationRecord {
    /// Canonical ordering key: `(year, unit_id)`, with corpus as a final
    /// tiebreak for records merged from several stores.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.meta.year, &self.meta.unit_id, &self.meta.corpus).cmp(&(
            other.meta.year,
            &other.meta.unit_id,
            &other.meta.corpus,
        ))
    }
}

/// Line format of `units.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
struct UnitLine {
    unit_id: String,
    corpus: String,
    year: i32,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    indices: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f32>>,
}

/// Line format of `tokens.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
struct TokenLine {
    unit_id: String,
    token_index: u32,
    indices: Vec<u32>,
    values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub file: String,
    /// 1-based line number, absent for store-level problems.
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.file, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub path: String,
    pub errors: Vec<ValidationIssue>,
    pub unit_count: usize,
    pub year_histogram: BTreeMap<i32, usize>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Year-range and corpus predicate applied by [`load_store`].
#[derive(Debug, Clone, Default)]
pub struct RecordFilter {
    pub years: Option<RangeInclusive<i32>>,
    pub corpus: Option<String>,
}

impl RecordFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn matches(&self, meta: &UnitMeta) -> bool {
        self.years.as_ref().is_none_or(|r| r.contains(&meta.year))
            && self.corpus.as_ref().is_none_or(|c| *c == meta.corpus)
    }
}

/// An immutable loaded store, records in canonical `(year, unit_id)` order.
#[derive(Debug, Clone)]
pub struct Store {
    pub path: PathBuf,
    pub manifest: StoreManifest,
    pub records: Vec<ActivationRecord>,
}

pub fn read_manifest(dir: &Path) -> Result<StoreManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingManifest(path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
        return Err(Error::BadManifest {
            path,
            message: "byte order mark not allowed".into(),
        });
    }
    serde_json::from_slice(&bytes).map_err(|e| Error::BadManifest {
        path,
        message: e.to_string(),
    })
}

fn widen(values: &[f32]) -> Vec<f64> {
    values.iter().map(|&v| f64::from(v)).collect()
}

fn check_vector_line(
    dim: u32,
    indices: &[u32],
    values: &[f32],
    line: usize,
) -> std::result::Result<SparseVector, String> {
    if indices.len() != values.len() {
        return Err(format!(
            "indices/values length mismatch ({} vs {}) at line {line}",
            indices.len(),
            values.len()
        ));
    }
    for (pos, &i) in indices.iter().enumerate() {
        if i >= dim {
            return Err(format!(
                "index out of range at line {line}: {i} >= dim {dim}"
            ));
        }
        if pos > 0 && indices[pos - 1] >= i {
            return Err(format!("non-ascending indices at line {line}"));
        }
    }
    for &v in values {
        if !v.is_finite() {
            return Err(format!("non-finite value at line {line}"));
        }
        if v <= 0.0 {
            return Err(format!(
                "non-positive value {v} at line {line} (zeros must not be stored)"
            ));
        }
    }
    let values = widen(values);
    SparseVector::new(dim, indices.to_vec(), values).map_err(|e| format!("{e} at line {line}"))
}

fn parse_unit_line(
    manifest: &StoreManifest,
    raw: &str,
    line: usize,
) -> std::result::Result<ActivationRecord, String> {
    let parsed: UnitLine = serde_json::from_str(raw)
        .map_err(|e| format!("malformed JSON at line {line}: {e}"))?;
    if parsed.year < manifest.year_min || parsed.year > manifest.year_max {
        return Err(format!(
            "year {} outside [{}, {}] at line {line}",
            parsed.year, manifest.year_min, manifest.year_max
        ));
    }
    let z = match (manifest.level, parsed.indices, parsed.values) {
        (_, Some(indices), Some(values)) => {
            check_vector_line(manifest.dim, &indices, &values, line)?
        }
        (Level::Token, None, None) => SparseVector::empty(manifest.dim),
        _ => return Err(format!("missing indices or values at line {line}")),
    };
    Ok(ActivationRecord {
        meta: UnitMeta {
            unit_id: parsed.unit_id,
            corpus: parsed.corpus,
            year: parsed.year,
            text: parsed.text,
        },
        z,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn nonblank_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect()
}

struct Scan {
    manifest: StoreManifest,
    report: ValidationReport,
    records: Vec<ActivationRecord>,
}

fn scan_store(dir: &Path, exec: Exec) -> Result<Scan> {
    let manifest = read_manifest(dir)?;
    let mut errors: Vec<ValidationIssue> = manifest
        .problems()
        .into_iter()
        .map(|message| ValidationIssue {
            file: MANIFEST_FILE.into(),
            line: None,
            message,
        })
        .collect();

    let units_path = dir.join(UNITS_FILE);
    if !units_path.is_file() {
        errors.push(ValidationIssue {
            file: UNITS_FILE.into(),
            line: None,
            message: "missing records file".into(),
        });
        return Ok(Scan {
            report: ValidationReport {
                path: dir.display().to_string(),
                errors,
                unit_count: 0,
                year_histogram: BTreeMap::new(),
            },
            manifest,
            records: Vec::new(),
        });
    }

    let text = read_text(&units_path)?;
    let lines = nonblank_lines(&text);
    let parsed = exec.map(&lines, |&(line, raw)| parse_unit_line(&manifest, raw, line));

    let mut records = Vec::with_capacity(parsed.len());
    let mut seen: HashSet<String> = HashSet::with_capacity(parsed.len());
    let mut histogram = BTreeMap::new();
    for ((line, _), outcome) in lines.iter().zip(parsed) {
        match outcome {
            Ok(record) => {
                if !seen.insert(record.meta.unit_id.clone()) {
                    errors.push(ValidationIssue {
                        file: UNITS_FILE.into(),
                        line: Some(*line),
                        message: format!(
                            "duplicate unit_id '{}' at line {line}",
                            record.meta.unit_id
                        ),
                    });
                    continue;
                }
                *histogram.entry(record.meta.year).or_insert(0) += 1;
                records.push(record);
            }
            Err(message) => errors.push(ValidationIssue {
                file: UNITS_FILE.into(),
                line: Some(*line),
                message,
            }),
        }
    }

    if lines.len() != manifest.unit_count {
        errors.push(ValidationIssue {
            file: MANIFEST_FILE.into(),
            line: None,
            message: format!(
                "unit_count {} does not match {} record lines",
                manifest.unit_count,
                lines.len()
            ),
        });
    }

    if manifest.level == Level::Token {
        errors.extend(scan_tokens(dir, &manifest, &seen, exec)?.0);
    }

    Ok(Scan {
        report: ValidationReport {
            path: dir.display().to_string(),
            errors,
            unit_count: lines.len(),
            year_histogram: histogram,
        },
        manifest,
        records,
    })
}

type TokenMap = BTreeMap<String, Vec<(u32, SparseVector)>>;

fn scan_tokens(
    dir: &Path,
    manifest: &StoreManifest,
    units: &HashSet<String>,
    exec: Exec,
) -> Result<(Vec<ValidationIssue>, TokenMap)> {
    let path = dir.join(TOKENS_FILE);
    let mut errors = Vec::new();
    let mut tokens: TokenMap = BTreeMap::new();
    if !path.is_file() {
        errors.push(ValidationIssue {
            file: TOKENS_FILE.into(),
            line: None,
            message: "token-level store without tokens file".into(),
        });
        return Ok((errors, tokens));
    }
    let text = read_text(&path)?;
    let lines = nonblank_lines(&text);
    let parsed = exec.map(&lines, |&(line, raw)| {
        let tl: TokenLine = serde_json::from_str(raw)
            .map_err(|e| format!("malformed JSON at line {line}: {e}"))?;
        let z = check_vector_line(manifest.dim, &tl.indices, &tl.values, line)?;
        Ok::<_, String>((tl.unit_id, tl.token_index, z))
    });
    let mut seen = HashSet::new();
    for ((line, _), outcome) in lines.iter().zip(parsed) {
        let issue = |message: String| ValidationIssue {
            file: TOKENS_FILE.into(),
            line: Some(*line),
            message,
        };
        match outcome {
            Ok((unit_id, token_index, z)) => {
                if !units.contains(&unit_id) {
                    errors.push(issue(format!("unknown unit_id '{unit_id}' at line {line}")));
                } else if !seen.insert((unit_id.clone(), token_index)) {
                    errors.push(issue(format!(
                        "duplicate token {token_index} of '{unit_id}' at line {line}"
                    )));
                } else {
                    tokens.entry(unit_id).or_default().push((token_index, z));
                }
            }
            Err(message) => errors.push(issue(message)),
        }
    }
    for list in tokens.values_mut() {
        list.sort_by_key(|(i, _)| *i);
    }
    Ok((errors, tokens))
}

/// Checks every store invariant and reports each violation with its line.
///
/// Only a missing or unparsable manifest (or an unreadable file) is fatal;
/// record-level problems are collected and scanning continues.
pub fn validate_store(dir: impl AsRef<Path>) -> Result<ValidationReport> {
    Ok(scan_store(dir.as_ref(), Exec::default())?.report)
}

/// Loads a validated store. Refuses stores with any validation error.
pub fn load_store(dir: impl AsRef<Path>, filter: &RecordFilter) -> Result<Store> {
    load_store_with(dir, filter, Exec::default())
}

pub fn load_store_with(dir: impl AsRef<Path>, filter: &RecordFilter, exec: Exec) -> Result<Store> {
    let dir = dir.as_ref();
    let Scan {
        manifest,
        report,
        records,
    } = scan_store(dir, exec)?;
    if let Some(first) = report.errors.first() {
        return Err(Error::InvalidStore {
            path: dir.to_path_buf(),
            count: report.errors.len(),
            first: first.to_string(),
        });
    }
    let mut records: Vec<ActivationRecord> =
        records.into_iter().filter(|r| filter.matches(&r.meta)).collect();
    exec.sort_by(&mut records, ActivationRecord::canonical_cmp);
    Ok(Store {
        path: dir.to_path_buf(),
        manifest,
        records,
    })
}

/// Concatenates several stores into one canonical sequence. All stores must
/// share the feature dimension.
pub fn merge_stores(stores: &[Store]) -> Result<Vec<ActivationRecord>> {
    let Some(first) = stores.first() else {
        return Ok(Vec::new());
    };
    let dim = first.manifest.dim;
    let mut out = Vec::with_capacity(stores.iter().map(|s| s.records.len()).sum());
    for store in stores {
        if store.manifest.dim != dim {
            return Err(Error::DimMismatch {
                expected: dim as usize,
                got: store.manifest.dim as usize,
            });
        }
        out.extend(store.records.iter().cloned());
    }
    out.sort_by(ActivationRecord::canonical_cmp);
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_manifest(dir: &Path, manifest: &StoreManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut body = serde_json::to_string_pretty(manifest)?;
    body.push('\n');
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

fn narrow(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}

/// Writes a sentence-level store. `unit_count` in the manifest is set from the
/// records; records are written in canonical order.
pub fn write_store(
    dir: impl AsRef<Path>,
    manifest: &StoreManifest,
    records: &[ActivationRecord],
) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut manifest = manifest.clone();
    manifest.unit_count = records.len();
    write_manifest(dir, &manifest)?;

    let mut order: Vec<&ActivationRecord> = records.iter().collect();
    order.sort_by(|a, b| a.canonical_cmp(b));
    let path = dir.join(UNITS_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    for r in order {
        let line = UnitLine {
            unit_id: r.meta.unit_id.clone(),
            corpus: r.meta.corpus.clone(),
            year: r.meta.year,
            text: r.meta.text.clone(),
            indices: Some(r.z.indices().to_vec()),
            values: Some(narrow(r.z.values())),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))
}

/// One token-level activation of a unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenActivation {
    pub unit_id: String,
    pub token_index: u32,
    pub z: SparseVector,
}

/// Writes a token-level store: unit metadata without vectors plus `tokens.jsonl`.
pub fn write_token_store(
    dir: impl AsRef<Path>,
    manifest: &StoreManifest,
    units: &[UnitMeta],
    tokens: &[TokenActivation],
) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut manifest = manifest.clone();
    manifest.unit_count = units.len();
    manifest.level = Level::Token;
    write_manifest(dir, &manifest)?;

    let path = dir.join(UNITS_FILE);
    let mut out = BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    for u in units {
        let line = UnitLine {
            unit_id: u.unit_id.clone(),
            corpus: u.corpus.clone(),
            year: u.year,
            text: u.text.clone(),
            indices: None,
            values: None,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(TOKENS_FILE);
    let mut out = BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    for t in tokens {
        let line = TokenLine {
            unit_id: t.unit_id.clone(),
            token_index: t.token_index,
            indices: t.z.indices().to_vec(),
            values: narrow(t.z.values()),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))
}

/// Max-pools a validated token-level store into a sentence-level store at
/// `out`. Token activations are not carried over.
pub fn pool_token_store(src: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<StoreManifest> {
    let src = src.as_ref();
    let exec = Exec::default();
    let scan = scan_store(src, exec)?;
    if let Some(first) = scan.report.errors.first() {
        return Err(Error::InvalidStore {
            path: src.to_path_buf(),
            count: scan.report.errors.len(),
            first: first.to_string(),
        });
    }
    if scan.manifest.level != Level::Token {
        return Err(Error::BadManifest {
            path: src.join(MANIFEST_FILE),
            message: "pooling needs a token-level store".into(),
        });
    }
    let ids: HashSet<String> = scan.records.iter().map(|r| r.meta.unit_id.clone()).collect();
    let (_, tokens) = scan_tokens(src, &scan.manifest, &ids, exec)?;

    let pooled = exec.map(&scan.records, |r| {
        let vectors: Vec<SparseVector> = tokens
            .get(&r.meta.unit_id)
            .map(|list| list.iter().map(|(_, z)| z.clone()).collect())
            .unwrap_or_default();
        if vectors.is_empty() {
            return Err(Error::NoTokensForUnit(r.meta.unit_id.clone()));
        }
        Ok(ActivationRecord {
            meta: r.meta.clone(),
            z: max_pool_tokens(&vectors)?,
        })
    });
    let records = pooled.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = StoreManifest {
        level: Level::Sentence,
        unit_count: records.len(),
        ..scan.manifest
    };
    write_store(out, &manifest, &records)?;
    Ok(manifest)
}

/// Distinct corpora present in a record sequence, sorted.
pub fn corpora(records: &[ActivationRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.meta.corpus.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
