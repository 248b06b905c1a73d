//! `diachron`: command-line front end for diachronic concept analytics.

mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use diachron_core::analysis::{
    self, build_atlas, conditioning_set, cross_corpus, cross_layer, drift_top_set, implicit_report, share_slices,
    trajectory, window_deltas, Conditioning, LayerInput, Params,
};
use diachron_core::comparative::DriftTopSet;
use diachron_core::concepts::{find_concept, load_concepts, reference_concepts, ConceptDef};
use diachron_core::diachronic::{feature_series, select_top_drifting_with, slice_mean, view, Scope, SeriesKey, YearWindow};
use diachron_core::evidence::{cross_corpus_evidence, diachronic_evidence, EvidenceTarget};
use diachron_core::report::{render, Format, Report};
use diachron_core::store::{corpora, load_store_with, merge_stores, pool_token_store, validate_store, write_store, ActivationRecord, RecordFilter, Store};
use diachron_core::synth::{generate, SynthSpec};
use diachron_core::Exec;

#[derive(Parser)]
#[command(name = "diachron", version, about = "Diachronic concept analytics over sparse autoencoder activations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check stores for format errors.
    Validate(Common),
    /// Max-pool a token-level store into a sentence-level store.
    Pool(Common),
    /// Per-(concept, corpus) atlas: implicit ratio, diversity, peak and turn.
    Atlas(Common),
    /// Top drifting features, per corpus.
    Drift(DriftArgs),
    /// Slice means of a concept and its components.
    Trajectory(TrajectoryArgs),
    /// Per-slice orientation shares, entropy and reorganization.
    Shares(ConditionedArgs),
    /// Change of pooled shares between year windows.
    WindowDelta(WindowArgs),
    /// Jaccard@K overlap of drifting bases between corpora.
    CrossCorpus(Common),
    /// Peak, turn and evidence agreement across layer stores.
    CrossLayer(LayerArgs),
    /// Anchored versus implicit salient mass.
    Implicit(Common),
    /// Highest-activating contexts for a feature or concept components.
    Evidence(EvidenceArgs),
    /// Re-render a saved JSON report in another format.
    Report(ReportArgs),
    /// Write a seeded synthetic store.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Store directory; repeat to merge several stores.
    #[arg(long = "store")]
    stores: Vec<PathBuf>,
    /// Concept configuration (JSON). Defaults to the built-in label index.
    #[arg(long)]
    concepts: Option<PathBuf>,
    /// Restrict to one concept id.
    #[arg(long)]
    concept: Option<String>,
    /// Restrict to one corpus.
    #[arg(long)]
    corpus: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, json, svg or md.
    #[arg(long)]
    format: Option<String>,
    /// JSON file whose keys set any flag not given on the command line.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    q: f64,
    #[arg(long = "top-k", default_value_t = 30)]
    top_k: usize,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long = "evidence-per-year", default_value_t = 5)]
    evidence_per_year: usize,
    #[arg(long, default_value_t = 30)]
    pool: usize,
    #[arg(long, default_value_t = 8)]
    display: usize,
    /// Disable data-parallel execution.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CondArg {
    All,
    Salient,
}

impl From<CondArg> for Conditioning {
    fn from(c: CondArg) -> Self {
        match c {
            CondArg::All => Conditioning::All,
            CondArg::Salient => Conditioning::Salient,
        }
    }
}

#[derive(Args)]
struct ConditionedArgs {
    #[command(flatten)]
    common: Common,
    /// Units a slice mean is taken over.
    #[arg(long, value_enum, default_value = "salient")]
    conditioning: CondArg,
}

#[derive(Args)]
struct DriftArgs {
    #[command(flatten)]
    common: Common,
    /// Units drift is measured over. Without --concept, every unit is used.
    #[arg(long, value_enum, default_value = "salient")]
    conditioning: CondArg,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "salient")]
    conditioning: CondArg,
    /// Track one feature instead of a concept.
    #[arg(long)]
    feature: Option<u32>,
    /// Emit relative change rates instead of slice means.
    #[arg(long)]
    rates: bool,
}

#[derive(Args)]
struct WindowArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "salient")]
    conditioning: CondArg,
    /// Contrast `A:B`, e.g. `pre1917:1917-1919`; repeatable.
    #[arg(long = "window")]
    windows: Vec<String>,
}

#[derive(Args)]
struct LayerArgs {
    #[command(flatten)]
    common: Common,
    /// Label for the matching --store; defaults to the manifest layer tag.
    #[arg(long = "layer")]
    layers: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Diachronic,
    CrossCorpus,
}

#[derive(Args)]
struct EvidenceArgs {
    #[command(flatten)]
    common: Common,
    /// Retrieve for one feature instead of concept components.
    #[arg(long)]
    feature: Option<u32>,
    /// Restrict to one component label of --concept.
    #[arg(long)]
    component: Option<String>,
    #[arg(long, value_enum, default_value = "cross-corpus")]
    rule: RuleArg,
    #[arg(long, value_enum, default_value = "all")]
    conditioning: CondArg,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by another command.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Destination store directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    units: usize,
    #[arg(long, default_value_t = 262_144)]
    dim: u32,
    #[arg(long, default_value_t = 64)]
    kappa: usize,
    #[arg(long = "year-min", default_value_t = 1915)]
    year_min: i32,
    #[arg(long = "year-max", default_value_t = 1926)]
    year_max: i32,
    /// Corpus name; repeatable.
    #[arg(long = "corpus")]
    corpora: Vec<String>,
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long = "concept-rate", default_value_t = 0.3)]
    concept_rate: f64,
    #[arg(long = "lexeme-rate", default_value_t = 0.5)]
    lexeme_rate: f64,
    /// Year from which planted concept activations double.
    #[arg(long)]
    pivot: Option<i32>,
    #[arg(long = "layer-tag", default_value = "L29")]
    layer_tag: String,
    /// Give every unit exactly --kappa active features.
    #[arg(long = "full-support")]
    full_support: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn params(&self) -> Params {
        Params {
            q: self.q,
            epsilon: self.epsilon,
            top_k: self.top_k,
            evidence_per_year: self.evidence_per_year,
            pool: self.pool,
            display: self.display,
        }
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }

    fn format(&self, default: Format) -> Result<Format> {
        Ok(match &self.format {
            Some(f) => f.parse()?,
            None => default,
        })
    }

    fn load_stores(&self) -> Result<Vec<Store>> {
        if self.stores.is_empty() {
            bail!("at least one --store is required");
        }
        let filter = RecordFilter {
            years: None,
            corpus: self.corpus.clone(),
        };
        self.stores
            .iter()
            .map(|p| Ok(load_store_with(p, &filter, self.exec())?))
            .collect()
    }

    fn concepts(&self, dim: u32) -> Result<Vec<ConceptDef>> {
        let all = match &self.concepts {
            Some(p) => load_concepts(p)?,
            None => reference_concepts(),
        };
        let chosen = match &self.concept {
            Some(id) => vec![find_concept(&all, id)?.clone()],
            None => all,
        };
        for c in &chosen {
            c.check_dim(dim)?;
        }
        Ok(chosen)
    }

    fn one_concept(&self, dim: u32) -> Result<ConceptDef> {
        if self.concept.is_none() {
            bail!("--concept is required");
        }
        Ok(self.concepts(dim)?.remove(0))
    }
}

/// Records of all stores merged, with the shared year grid and dimension.
struct Loaded {
    records: Vec<ActivationRecord>,
    years: Vec<i32>,
    dim: u32,
}

impl Loaded {
    fn corpora(&self, wanted: &Option<String>) -> Result<Vec<String>> {
        let all = corpora(&self.records);
        match wanted {
            Some(c) if all.contains(c) => Ok(vec![c.clone()]),
            Some(c) => Err(diachron_core::Error::EmptyCorpus(c.clone()).into()),
            None => Ok(all),
        }
    }
}

fn year_grid(stores: &[Store]) -> Vec<i32> {
    let lo = stores.iter().map(|s| s.manifest.year_min).min().unwrap_or(0);
    let hi = stores.iter().map(|s| s.manifest.year_max).max().unwrap_or(-1);
    (lo..=hi).collect()
}

fn load(common: &Common) -> Result<Loaded> {
    let stores = common.load_stores()?;
    let years = year_grid(&stores);
    let dim = stores[0].manifest.dim;
    let records = merge_stores(&stores)?;
    Ok(Loaded { records, years, dim })
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit(common: &Common, report: &Report, default: Format) -> Result<()> {
    let text = render(report, common.format(default)?)?;
    write_output(common.out.as_deref(), &text)
}

/// Parses `A:B`, with each side a window spec.
fn window_pair(spec: &str, years: &[i32]) -> Result<(YearWindow, YearWindow)> {
    let (lo, hi) = (*years.first().unwrap_or(&0), *years.last().unwrap_or(&0));
    let (a, b) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!(diachron_core::Error::BadWindow(spec.to_string())))?;
    Ok((YearWindow::parse(a, lo, hi)?, YearWindow::parse(b, lo, hi)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(c) => {
            if c.stores.is_empty() {
                bail!("at least one --store is required");
            }
            let reports = c.stores.iter().map(validate_store).collect::<diachron_core::Result<Vec<_>>>()?;
            let failures: usize = reports.iter().map(|r| r.errors.len()).sum();
            emit(&c, &Report::Validation(reports), Format::Json)?;
            if failures > 0 {
                bail!(diachron_core::Error::InvalidStore {
                    path: c.stores[0].clone(),
                    count: failures,
                    first: "see validation report".into(),
                });
            }
            Ok(())
        }
        Command::Pool(c) => {
            let src = c.stores.first().ok_or_else(|| anyhow!("--store is required"))?;
            let out = c.out.as_ref().ok_or_else(|| anyhow!("--out is required"))?;
            let manifest = pool_token_store(src, out)?;
            write_output(None, &(serde_json::to_string_pretty(&manifest)? + "\n"))
        }
        Command::Atlas(c) => {
            let l = load(&c)?;
            let concepts = c.concepts(l.dim)?;
            let rows = build_atlas(&view(&l.records), &concepts, &l.corpora(&c.corpus)?, &l.years, &c.params(), c.exec())?;
            emit(&c, &Report::Atlas(rows), Format::Csv)
        }
        Command::Drift(a) => {
            let c = &a.common;
            let l = load(c)?;
            let v = view(&l.records);
            let mut sets = Vec::new();
            for corpus in l.corpora(&c.corpus)? {
                let set = match &c.concept {
                    Some(_) => {
                        let concept = c.one_concept(l.dim)?;
                        drift_top_set(&v, &concept, &corpus, &l.years, a.conditioning.into(), &c.params(), c.exec())?
                    }
                    None => {
                        let in_corpus = diachron_core::diachronic::corpus_view(&v, &corpus);
                        let ranked = select_top_drifting_with(&in_corpus, &l.years, c.top_k, None, c.exec());
                        DriftTopSet::new("*", &corpus, c.top_k, ranked)
                    }
                };
                sets.push(set);
            }
            emit(c, &Report::Drift(sets), Format::Csv)
        }
        Command::Trajectory(a) => {
            let c = &a.common;
            let l = load(c)?;
            let v = view(&l.records);
            let mut series = Vec::new();
            for corpus in l.corpora(&c.corpus)? {
                match a.feature {
                    Some(f) => {
                        if f >= l.dim {
                            bail!(diachron_core::Error::InvalidVector(format!("feature {f} outside dim {}", l.dim)));
                        }
                        let (set, label) = match &c.concept {
                            Some(_) => {
                                let concept = c.one_concept(l.dim)?;
                                let s = conditioning_set(&v, &concept, &corpus, a.conditioning.into(), &c.params())?;
                                (s.records, s.label)
                            }
                            None => (diachron_core::diachronic::corpus_view(&v, &corpus), "all".to_string()),
                        };
                        series.push(feature_series(&set, f, &l.years, Some(&corpus), &label));
                    }
                    None => {
                        let concept = c.one_concept(l.dim)?;
                        series.extend(trajectory(&v, &concept, &corpus, &l.years, a.conditioning.into(), &c.params())?);
                    }
                }
            }
            if a.rates {
                emit(c, &Report::Rates(analysis::rates(&series)), Format::Csv)
            } else {
                emit(c, &Report::Trajectory(series), Format::Csv)
            }
        }
        Command::Shares(a) => {
            let c = &a.common;
            let l = load(c)?;
            let v = view(&l.records);
            let mut slices = Vec::new();
            for concept in c.concepts(l.dim)? {
                for corpus in l.corpora(&c.corpus)? {
                    slices.extend(share_slices(&v, &concept, &corpus, &l.years, a.conditioning.into(), &c.params())?);
                }
            }
            emit(c, &Report::Shares(slices), Format::Csv)
        }
        Command::WindowDelta(a) => {
            let c = &a.common;
            let l = load(c)?;
            let v = view(&l.records);
            let specs: Vec<String> = if a.windows.is_empty() {
                vec!["pre1917:1917-1919".into(), "1917-1919:1922-1924".into()]
            } else {
                a.windows.clone()
            };
            let pairs = specs.iter().map(|s| window_pair(s, &l.years)).collect::<Result<Vec<_>>>()?;
            let mut deltas = Vec::new();
            for concept in c.concepts(l.dim)? {
                for corpus in l.corpora(&c.corpus)? {
                    deltas.extend(window_deltas(&v, &concept, &corpus, &pairs, a.conditioning.into(), &c.params())?);
                }
            }
            emit(c, &Report::WindowDelta(deltas), Format::Csv)
        }
        Command::CrossCorpus(c) => {
            let l = load(&c)?;
            let v = view(&l.records);
            let all = corpora(&l.records);
            if all.len() < 2 {
                bail!("cross-corpus comparison needs at least two corpora, found {}", all.len());
            }
            let mut reports = Vec::new();
            for concept in c.concepts(l.dim)? {
                for i in 0..all.len() {
                    for j in i + 1..all.len() {
                        if c.corpus.as_ref().is_some_and(|x| *x != all[i] && *x != all[j]) {
                            continue;
                        }
                        reports.push(cross_corpus(&v, &concept, &all[i], &all[j], &l.years, &c.params(), c.exec())?);
                    }
                }
            }
            emit(&c, &Report::Overlap(reports), Format::Json)
        }
        Command::CrossLayer(a) => {
            let c = &a.common;
            let stores = c.load_stores()?;
            if !a.layers.is_empty() && a.layers.len() != stores.len() {
                bail!("--layer must be given once per --store");
            }
            let years = year_grid(&stores);
            let dim = stores[0].manifest.dim;
            let concept = c.one_concept(dim)?;
            let mut seen: BTreeMap<String, usize> = BTreeMap::new();
            let labels: Vec<String> = stores
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let base = a.layers.get(i).cloned().unwrap_or_else(|| s.manifest.layer_tag.clone());
                    let n = seen.entry(base.clone()).or_insert(0);
                    *n += 1;
                    if *n > 1 { format!("{base}#{n}") } else { base }
                })
                .collect();
            let corpus = match &c.corpus {
                Some(x) => x.clone(),
                None => {
                    let cs = corpora(&stores[0].records);
                    if cs.len() != 1 {
                        bail!("--corpus is required when layer stores hold several corpora");
                    }
                    cs[0].clone()
                }
            };
            let inputs: Vec<LayerInput> = stores
                .iter()
                .zip(labels)
                .map(|(s, layer)| LayerInput { layer, records: view(&s.records) })
                .collect();
            let rows = cross_layer(&inputs, &concept, &corpus, &years, &c.params(), c.exec())?;
            emit(c, &Report::CrossLayer(rows), Format::Csv)
        }
        Command::Implicit(c) => {
            let l = load(&c)?;
            let v = view(&l.records);
            let mut rows = Vec::new();
            for concept in c.concepts(l.dim)? {
                for corpus in l.corpora(&c.corpus)? {
                    rows.push(implicit_report(&v, &concept, &corpus, &c.params())?);
                }
            }
            emit(&c, &Report::Implicit(rows), Format::Json)
        }
        Command::Evidence(a) => evidence(a),
        Command::Report(a) => {
            let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let report: Report = serde_json::from_str(&text).map_err(diachron_core::Error::from)?;
            let format = match &a.format {
                Some(f) => f.parse()?,
                None => Format::Md,
            };
            write_output(a.out.as_deref(), &render(&report, format)?)
        }
        Command::Synth(a) => {
            let concepts = match &a.concepts {
                Some(p) => load_concepts(p)?,
                None => reference_concepts(),
            };
            for cpt in &concepts {
                cpt.check_dim(a.dim)?;
            }
            let mut spec = SynthSpec::new(a.seed, a.dim, a.kappa, a.units, concepts);
            spec.year_min = a.year_min;
            spec.year_max = a.year_max;
            if !a.corpora.is_empty() {
                spec.corpora = a.corpora.clone();
            }
            spec.concept_rate = a.concept_rate;
            spec.lexeme_rate = a.lexeme_rate;
            spec.pivot_year = a.pivot;
            spec.layer_tag = a.layer_tag.clone();
            spec.full_support = a.full_support;
            if spec.year_min > spec.year_max || a.kappa == 0 || a.dim == 0 {
                bail!("synthetic store needs year-min <= year-max and positive dim and kappa");
            }
            let records = generate(&spec);
            write_store(&a.out, &spec.manifest(&format!("synth-{}", a.seed)), &records)?;
            Ok(())
        }
    }
}

fn evidence(a: EvidenceArgs) -> Result<()> {
    let c = &a.common;
    let l = load(c)?;
    let v = view(&l.records);
    let params = c.params();
    let mut bundles = Vec::new();
    for corpus in l.corpora(&c.corpus)? {
        let (targets, set, label) = match a.feature {
            Some(f) => {
                let target = EvidenceTarget::Feature { feature: f };
                match &c.concept {
                    Some(_) => {
                        let concept = c.one_concept(l.dim)?;
                        let s = conditioning_set(&v, &concept, &corpus, a.conditioning.into(), &params)?;
                        (vec![target], s.records, s.label)
                    }
                    None => (vec![target], diachron_core::diachronic::corpus_view(&v, &corpus), "all".into()),
                }
            }
            None => {
                let concept = c.one_concept(l.dim)?;
                let comps: Vec<_> = match &a.component {
                    Some(label) => vec![concept
                        .component(label)
                        .ok_or_else(|| anyhow!(diachron_core::Error::Concept(format!("unknown component '{label}'"))))?
                        .clone()],
                    None => concept.components.clone(),
                };
                let s = conditioning_set(&v, &concept, &corpus, a.conditioning.into(), &params)?;
                let targets = comps.iter().map(|k| EvidenceTarget::component(&concept.concept_id, k)).collect();
                (targets, s.records, s.label)
            }
        };
        for target in targets {
            let bundle = match a.rule {
                RuleArg::CrossCorpus => cross_corpus_evidence(&set, &target, Some(&corpus), params.pool, params.display),
                RuleArg::Diachronic => {
                    let scorer = target.clone();
                    let scope = match &target {
                        EvidenceTarget::Feature { feature } => Scope::Feature { feature: *feature },
                        EvidenceTarget::Component { concept, label, .. } => Scope::Component {
                            concept: concept.clone(),
                            label: label.clone(),
                        },
                    };
                    let series = slice_mean(
                        &set,
                        |r| scorer.score(r).unwrap_or(0.0),
                        &l.years,
                        SeriesKey::new(scope, Some(&corpus), label.clone()),
                    );
                    diachronic_evidence(&set, &target, &series, params.evidence_per_year)?
                }
            };
            bundles.push(bundle);
        }
    }
    emit(c, &Report::Evidence(bundles), Format::Md)
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<diachron_core::Error>())
        .map(diachron_core::Error::kind)
        .unwrap_or("cli")
}

fn fail(message: String, kind: &str, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": message, "kind": kind });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(format!("{e:#}"), "config", 2),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(e.render().to_string().trim().to_string(), "usage", 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(format!("{e:#}"), error_kind(&e), 1),
    }
}
