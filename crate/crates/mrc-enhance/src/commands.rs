//! Command implementations. Each command that writes files also writes a run
//! manifest beside its outputs: `run.json` in an output directory, or
//! `<output>.run.json` next to a single output file.

use std::collections::{BTreeMap, HashMap};
use std::net::ToSocketAddrs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use mrc_enhance_core::analysis::{
    length_report, method_similarity_matrix, render_cost_table, render_results_table, render_similarity_index_table,
    MethodQuestionSets, TableFormat,
};
use mrc_enhance_core::augment::{
    back_translate_set, build_ranked_sets, build_substitution_sets_from_plans, unique_paraphrases,
    LongestTokenExtractor, SubstitutionPlan, DEFAULT_MAX_ATTEMPTS, SETS_PER_METHOD, VARIANTS_PER_QUESTION,
};
use mrc_enhance_core::corpus::{
    chunk_document, clean_text, corpus_stats, split_dataset, validate_labels, DatasetSplit, RawDocument, Rejected,
    RuleSegmenter,
};
use mrc_enhance_core::harness::{
    concat_augmented, evaluate, plan_continual, run_continual as run_chain, run_individual_suite, Checkpoint, EvalMode,
    Family, HarnessError, LedgerRow, Outcome, ScoreLedger, Trainer,
};
use mrc_enhance_core::negatives::build_negative_suites;
use mrc_enhance_core::text::normalize;
use mrc_enhance_core::{CleaningRules, Method, Passage, PivotLanguage, QALabel, TrainingSetVariant, VariantParams};

use crate::annosvc::{serve, AnnotationService, ServiceOptions};
use crate::backends::{self, now_iso, SystemClock, TranslatorFactory};
use crate::cli::*;
use crate::config::BackendSpec;
use crate::formats::{
    digest_inputs, read_documents, read_dpr, read_labels, read_ledger, read_passages, read_variant, variant_files,
    write_json, write_jsonl, write_labels, write_ledger, write_passages, write_variant, DprContext, DprLabel,
    InputDigest, RunManifest,
};

type CmdResult = Result<(), CliError>;

/// Fail with exit code 2 when an input path does not exist.
pub fn require(path: &Path) -> CmdResult {
    if path.exists() {
        Ok(())
    } else {
        Err(invalid(format!("input not found: {}", path.display())))
    }
}

fn bad(e: anyhow::Error) -> CliError {
    invalid(format!("{e:#}"))
}

fn bad_input(e: impl std::fmt::Display) -> CliError {
    invalid(e)
}

struct Run {
    command: String,
    inputs: Vec<InputDigest>,
    seed: u64,
    config_hash: String,
    started_at: String,
    start: Instant,
}

impl Run {
    fn start(ctx: &Context, command: &str, inputs: &[&Path], seed: u64) -> Result<Self, CliError> {
        for p in inputs {
            require(p)?;
        }
        Ok(Self {
            command: command.into(),
            inputs: digest_inputs(inputs).map_err(bad)?,
            seed,
            config_hash: ctx.config.hash(),
            started_at: now_iso(),
            start: Instant::now(),
        })
    }

    fn finish(self, manifest: &Path, outputs: &[PathBuf]) -> CmdResult {
        let m = RunManifest {
            command: self.command,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            seed: self.seed,
            config_hash: self.config_hash,
            started_at: self.started_at,
            wall_seconds: self.start.elapsed().as_secs_f64(),
        };
        write_json(manifest, &m)?;
        Ok(())
    }
}

fn run_file_for(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
    output.with_file_name(format!("{stem}.run.json"))
}

fn pool(ctx: &Context) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("thread pool: {e}")))
}

fn cleaning_rules(ctx: &Context) -> CleaningRules {
    match &ctx.config.strip_keywords {
        Some(k) => CleaningRules { strip_keywords: k.clone(), ..CleaningRules::default() },
        None => CleaningRules::default(),
    }
}

fn load_labels(path: &Path) -> Result<Vec<QALabel>, CliError> {
    require(path)?;
    read_labels(path).map_err(bad)
}

fn load_variants(dirs: &[PathBuf]) -> Result<Vec<TrainingSetVariant>, CliError> {
    let mut out = Vec::new();
    for dir in dirs {
        require(dir)?;
        let files = if dir.is_dir() { variant_files(dir).map_err(bad)? } else { vec![dir.clone()] };
        for f in files {
            out.push(read_variant(&f).map_err(bad)?);
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = out.iter().find(|v| !seen.insert(v.id.clone())) {
        return Err(invalid(format!("variant id {} appears more than once", dup.id)));
    }
    Ok(out)
}

fn parse_named(spec: &str) -> Result<(String, PathBuf), CliError> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(invalid(format!("expected NAME=FILE, got {spec:?}"))),
    }
}

fn check_sets(sets: &[u32]) -> CmdResult {
    match sets.iter().find(|s| **s == 0 || **s as usize > SETS_PER_METHOD) {
        Some(s) => Err(invalid(format!("set {s} out of range 1..={SETS_PER_METHOD}"))),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Corpus

fn answer_in(text: &str, answers: &[String]) -> bool {
    let t = normalize(text);
    answers.iter().map(|a| normalize(a)).any(|a| !a.is_empty() && t.contains(&a))
}

enum Resolved {
    Passage(String),
    Fragmented,
    Missing,
}

struct ChunkedCorpus {
    passages: BTreeMap<String, Passage>,
    by_doc: HashMap<String, Vec<String>>,
    by_text: HashMap<String, String>,
    doc_by_text: HashMap<String, String>,
}

impl ChunkedCorpus {
    fn joined(&self, doc: &str) -> String {
        self.by_doc[doc].iter().map(|id| self.passages[id].text.as_str()).collect::<Vec<_>>().join(" ")
    }

    /// Chunk id first, then document id (the chunk holding the answer), then
    /// the cleaned context text.
    fn resolve(
        &self,
        ctx: Option<&DprContext>,
        answers: &[String],
        max_words: usize,
        rules: &CleaningRules,
    ) -> Resolved {
        let Some(ctx) = ctx else { return Resolved::Missing };
        if let Some(pid) = &ctx.passage_id {
            if self.passages.contains_key(pid) {
                return Resolved::Passage(pid.clone());
            }
            if self.by_doc.contains_key(pid) {
                return self.resolve_doc(pid, answers);
            }
        }
        let raw = RawDocument { id: String::new(), title: ctx.title.clone(), text: ctx.text.clone() };
        let Ok(chunks) = chunk_document(&raw, max_words, rules, &RuleSegmenter) else { return Resolved::Missing };
        if let [only] = chunks.as_slice() {
            if let Some(id) = self.by_text.get(&only.text) {
                return Resolved::Passage(id.clone());
            }
        }
        let joined = chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" ");
        match self.doc_by_text.get(&joined) {
            Some(doc) => self.resolve_doc(doc, answers),
            None => Resolved::Missing,
        }
    }

    fn resolve_doc(&self, doc: &str, answers: &[String]) -> Resolved {
        let ids = &self.by_doc[doc];
        if let Some(id) = ids.iter().find(|id| answer_in(&self.passages[*id].text, answers)) {
            return Resolved::Passage(id.clone());
        }
        if answer_in(&self.joined(doc), answers) {
            Resolved::Fragmented
        } else {
            Resolved::Passage(ids[0].clone())
        }
    }
}

fn chunk_corpus(
    docs: &[RawDocument],
    max_words: usize,
    rules: &CleaningRules,
) -> Result<(Vec<Passage>, ChunkedCorpus), CliError> {
    let mut list = Vec::new();
    let mut corpus = ChunkedCorpus {
        passages: BTreeMap::new(),
        by_doc: HashMap::new(),
        by_text: HashMap::new(),
        doc_by_text: HashMap::new(),
    };
    for doc in docs {
        if corpus.by_doc.contains_key(&doc.id) {
            return Err(invalid(format!("duplicate document id {}", doc.id)));
        }
        let chunks = chunk_document(doc, max_words, rules, &RuleSegmenter).map_err(bad_input)?;
        let ids: Vec<String> = chunks.iter().map(|c| c.id.clone()).collect();
        for c in &chunks {
            if corpus.passages.insert(c.id.clone(), c.clone()).is_some() {
                return Err(invalid(format!("passage id {} produced twice; rename the colliding document", c.id)));
            }
            corpus.by_text.entry(c.text.clone()).or_insert_with(|| c.id.clone());
        }
        corpus.by_doc.insert(doc.id.clone(), ids);
        if !chunks.is_empty() {
            corpus.doc_by_text.entry(corpus.joined(&doc.id)).or_insert_with(|| doc.id.clone());
        }
        list.extend(chunks);
    }
    Ok((list, corpus))
}

#[derive(Serialize)]
struct RejectedRecord {
    reason: &'static str,
    label: DprLabel,
}

fn rejected_records(rejected: &[Rejected]) -> Vec<RejectedRecord> {
    rejected.iter().map(|r| RejectedRecord { reason: r.reason.as_str(), label: DprLabel::of(&r.label) }).collect()
}

fn reason_counts(rejected: &[Rejected]) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for r in rejected {
        *m.entry(r.reason.as_str()).or_insert(0) += 1;
    }
    m
}

pub fn ingest(ctx: &Context, a: IngestArgs) -> CmdResult {
    let run = Run::start(ctx, "ingest", &[&a.corpus, &a.labels], 0)?;
    let max_words = a.max_words.unwrap_or(ctx.config.max_words);
    let rules = cleaning_rules(ctx);
    let docs = read_documents(&a.corpus).map_err(bad)?;
    let raw = read_dpr(&a.labels).map_err(bad)?;
    let (passages, corpus) = chunk_corpus(&docs, max_words, &rules)?;

    let mut labels = Vec::new();
    let mut fragmented = Vec::new();
    for (i, dpr) in raw.into_iter().enumerate() {
        let resolved = corpus.resolve(dpr.positive_ctxs.first(), &dpr.answers, max_words, &rules);
        let mut label = dpr.clone().into_label(i);
        match resolved {
            Resolved::Passage(id) => label.positive_ctx = corpus.passages[&id].clone(),
            Resolved::Missing => label.positive_ctx = Passage::new("", "", ""),
            Resolved::Fragmented => {
                fragmented.push(DprLabel { id: Some(label.id.clone()), ..dpr });
                continue;
            }
        }
        labels.push(label);
    }
    let n_labels = labels.len() + fragmented.len();
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(l.id.clone())) {
        return Err(invalid(format!("{}: duplicate label id {}", a.labels.display(), dup.id)));
    }
    let v = validate_labels(labels, &corpus.passages);

    let out = |name: &str| a.out.join(name);
    write_passages(&out("passages.jsonl"), &passages)?;
    write_labels(&out("labels.json"), &v.valid)?;
    write_json(&out("rejected.json"), &rejected_records(&v.rejected))?;
    write_json(&out("fragmented.json"), &fragmented)?;
    let report = json!({
        "documents": docs.len(),
        "passages": passages.len(),
        "max_words": max_words,
        "labels": n_labels,
        "valid": v.valid.len(),
        "rejected": reason_counts(&v.rejected),
        "fragmented": fragmented.len(),
    });
    write_json(&out("ingest-report.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
    let outputs: Vec<PathBuf> =
        ["passages.jsonl", "labels.json", "rejected.json", "fragmented.json", "ingest-report.json"].map(out).to_vec();
    run.finish(&out("run.json"), &outputs)
}

pub fn clean(ctx: &Context, a: CleanArgs) -> CmdResult {
    let run = Run::start(ctx, "clean", &[&a.input], 0)?;
    let rules = cleaning_rules(ctx);
    let docs = read_documents(&a.input).map_err(bad)?;
    let cleaned: Vec<RawDocument> =
        docs.into_iter().map(|d| RawDocument { text: clean_text(&d.text, &rules), ..d }).collect();
    write_jsonl(&a.output, &cleaned)?;
    run.finish(&run_file_for(&a.output), std::slice::from_ref(&a.output))
}

pub fn chunk(ctx: &Context, a: ChunkArgs) -> CmdResult {
    let run = Run::start(ctx, "chunk", &[&a.input], 0)?;
    let max_words = a.max_words.unwrap_or(ctx.config.max_words);
    let docs = read_documents(&a.input).map_err(bad)?;
    let (passages, _) = chunk_corpus(&docs, max_words, &cleaning_rules(ctx))?;
    write_passages(&a.output, &passages)?;
    eprintln!("{} documents -> {} passages (max {max_words} words)", docs.len(), passages.len());
    run.finish(&run_file_for(&a.output), std::slice::from_ref(&a.output))
}

pub fn validate(ctx: &Context, a: ValidateArgs) -> CmdResult {
    let run = Run::start(ctx, "validate", &[&a.labels, &a.passages], 0)?;
    let labels = read_labels(&a.labels).map_err(bad)?;
    let passages: BTreeMap<String, Passage> =
        read_passages(&a.passages).map_err(bad)?.into_iter().map(|p| (p.id.clone(), p)).collect();
    let v = validate_labels(labels, &passages);
    let labels_out = a.out.join("labels.json");
    let rejected_out = a.out.join("rejected.json");
    write_labels(&labels_out, &v.valid)?;
    write_json(&rejected_out, &rejected_records(&v.rejected))?;
    println!("{}", json!({"valid": v.valid.len(), "rejected": reason_counts(&v.rejected)}));
    run.finish(&a.out.join("run.json"), &[labels_out, rejected_out])
}

pub fn make_splits(ctx: &Context, a: MakeSplitsArgs) -> CmdResult {
    let seed = ctx.config.seeds.split;
    let run = Run::start(ctx, "make-splits", &[&a.labels], seed)?;
    let labels = read_labels(&a.labels).map_err(bad)?;
    let split = split_dataset(labels, seed).map_err(bad_input)?;
    let mut outputs = Vec::new();
    for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        let p = a.out.join(format!("{name}.json"));
        write_labels(&p, part)?;
        outputs.push(p);
    }
    println!("{}", json!({"train": split.train.len(), "dev": split.dev.len(), "test": split.test.len(), "seed": seed}));
    run.finish(&a.out.join("run.json"), &outputs)
}

fn read_split(dir: &Path) -> Result<DatasetSplit, CliError> {
    Ok(DatasetSplit {
        train: load_labels(&dir.join("train.json"))?,
        dev: load_labels(&dir.join("dev.json"))?,
        test: load_labels(&dir.join("test.json"))?,
        seed: 0,
    })
}

pub fn stats(ctx: &Context, a: StatsArgs) -> CmdResult {
    let mut inputs: Vec<&Path> = vec![&a.split];
    if let Some(r) = &a.revised {
        inputs.push(r);
    }
    let run = Run::start(ctx, "stats", &inputs, 0)?;
    let split = read_split(&a.split)?;
    let mut report = serde_json::to_value(corpus_stats(&split)).map_err(anyhow::Error::from)?;
    let mut outputs = Vec::new();
    if let Some(revised) = &a.revised {
        let after = load_labels(revised)?;
        let lr = length_report(&split.train, &after).map_err(bad_input)?;
        report["revised"] = json!({"mean_before": lr.mean_before(), "mean_after": lr.mean_after(), "histogram": &lr});
        if let Some(dir) = &a.report_dir {
            let md = dir.join("tables").join(format!("{}-answer-lengths.md", a.dataset));
            let csv = dir.join("tables").join(format!("{}-answer-lengths.csv", a.dataset));
            write_text(&md, &lr.to_markdown())?;
            write_text(&csv, &lr.to_csv())?;
            outputs.extend([md, csv]);
        }
    }
    let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    match &a.output {
        Some(p) => {
            write_text(p, &(text + "\n"))?;
            outputs.push(p.clone());
        }
        None => println!("{text}"),
    }
    if outputs.is_empty() {
        return Ok(());
    }
    let manifest = match (&a.output, &a.report_dir) {
        (_, Some(dir)) => dir.join("run.json"),
        (Some(p), None) => run_file_for(p),
        (None, None) => unreachable!("outputs are empty without a file or report dir"),
    };
    run.finish(&manifest, &outputs)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(anyhow::Error::from)?;
    }
    std::fs::write(path, text).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Generation

fn write_sets(dir: &Path, sets: &[TrainingSetVariant], seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for v in sets {
        out.push(write_variant(dir, v, seed)?);
        tracing::info!(id = %v.id, labels = v.labels.len(), "wrote variant");
    }
    Ok(out)
}

pub fn gen_negatives(ctx: &Context, a: NegativesArgs) -> CmdResult {
    let run = Run::start(ctx, "gen negatives", &[&a.train, &a.passages], 0)?;
    let threshold = if a.no_threshold { None } else { a.threshold.or(ctx.config.neg_threshold) };
    let train = read_labels(&a.train).map_err(bad)?;
    let corpus = read_passages(&a.passages).map_err(bad)?;
    let scorer = backends::scorer(&ctx.config).map_err(bad)?;
    let clock = SystemClock::default();
    let suites = build_negative_suites(&train, &corpus, scorer.as_ref(), &a.k, threshold, &clock).map_err(bad_input)?;
    let variants: Vec<TrainingSetVariant> = suites
        .into_iter()
        .map(|s| {
            let params = VariantParams { k: Some(s.k), threshold: s.threshold, ..VariantParams::default() };
            let mut v = TrainingSetVariant::new(format!("negatives-k{}", s.k), Method::Negatives, params, s.labels);
            v.generation_seconds = s.generation_seconds;
            v
        })
        .collect();
    let outputs = write_sets(&a.out, &variants, 0)?;
    run.finish(&a.out.join("run.json"), &outputs)
}

fn similarity_table(dir: &Path, name: &str, sets: &[TrainingSetVariant]) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{name}-similarity.md"));
    write_text(&path, &render_similarity_index_table(&[("train", sets)], TableFormat::Markdown))?;
    Ok(path)
}

pub fn gen_paraphrase(ctx: &Context, a: ParaphraseArgs) -> CmdResult {
    check_sets(&a.sets)?;
    let seeds = &ctx.config.seeds;
    let run = Run::start(ctx, "gen paraphrase", &[&a.train], seeds.generation)?;
    let train = read_labels(&a.train).map_err(bad)?;
    let paraphraser = backends::paraphraser_named(&ctx.config, &a.backend, seeds.generation).map_err(bad)?;
    let embedder = backends::embedder(&ctx.config.backends.embedder).map_err(bad)?;
    let start = Instant::now();
    let variants: Vec<Vec<String>> = pool(ctx)?.install(|| {
        train
            .par_iter()
            .map(|l| unique_paraphrases(&l.question, paraphraser.as_ref(), VARIANTS_PER_QUESTION, DEFAULT_MAX_ATTEMPTS))
            .collect()
    });
    let mut sets =
        build_ranked_sets(&train, &variants, embedder.as_ref(), seeds.random_set, Method::Paraphrase, &a.backend)
            .map_err(bad_input)?;
    let secs = start.elapsed().as_secs_f64();
    for s in &mut sets {
        s.generation_seconds = secs;
    }
    sets.retain(|s| s.params.set.is_some_and(|n| a.sets.contains(&n)));
    let mut outputs = write_sets(&a.out, &sets, seeds.generation)?;
    outputs.push(similarity_table(&a.out, &format!("paraphrase-{}", a.backend), &sets)?);
    run.finish(&a.out.join("run.json"), &outputs)
}

pub fn gen_substitute(ctx: &Context, a: SubstituteArgs) -> CmdResult {
    check_sets(&a.sets)?;
    let seeds = &ctx.config.seeds;
    let mut inputs: Vec<&Path> = vec![&a.train];
    if let Some(s) = a.synonyms.as_deref().or(ctx.config.backends.synonyms.as_deref()) {
        inputs.push(s);
    }
    let run = Run::start(ctx, "gen substitute", &inputs, seeds.random_set)?;
    let train = read_labels(&a.train).map_err(bad)?;
    let synonyms = backends::synonyms(&ctx.config, a.synonyms.as_deref()).map_err(bad)?;
    let embedder = backends::embedder(&ctx.config.backends.embedder).map_err(bad)?;
    let start = Instant::now();
    let plans: Vec<SubstitutionPlan> = pool(ctx)?.install(|| {
        train
            .par_iter()
            .map(|l| SubstitutionPlan::new(&l.question, &LongestTokenExtractor, &synonyms, embedder.as_ref()))
            .collect()
    });
    let mut sets = build_substitution_sets_from_plans(&train, &plans, embedder.as_ref(), seeds.random_set);
    let secs = start.elapsed().as_secs_f64();
    for s in &mut sets {
        s.generation_seconds = secs;
        s.params.backend = Some("synonyms".into());
    }
    sets.retain(|s| s.params.set.is_some_and(|n| a.sets.contains(&n)));
    let mut outputs = write_sets(&a.out, &sets, seeds.random_set)?;
    outputs.push(similarity_table(&a.out, "substitution", &sets)?);
    run.finish(&a.out.join("run.json"), &outputs)
}

fn parse_pivots(codes: &[String]) -> Result<Vec<PivotLanguage>, CliError> {
    if codes.iter().any(|c| c == "all") {
        return Ok(PivotLanguage::ALL.to_vec());
    }
    codes.iter().map(|c| PivotLanguage::parse(c).map_err(bad_input)).collect()
}

pub fn gen_backtranslate(ctx: &Context, a: BacktranslateArgs) -> CmdResult {
    let pivots = parse_pivots(&a.pivots)?;
    let run = Run::start(ctx, "gen backtranslate", &[&a.train], ctx.config.seeds.generation)?;
    let train = read_labels(&a.train).map_err(bad)?;
    let spec =
        a.translator.as_deref().map(BackendSpec::named).unwrap_or_else(|| ctx.config.backends.translator.clone());
    let factory = TranslatorFactory::new(&spec).map_err(bad)?;
    let clock = SystemClock::default();
    let sets: Vec<TrainingSetVariant> = pool(ctx)?
        .install(|| pivots.par_iter().map(|&p| back_translate_set(&train, factory.make(p).as_ref(), &clock)).collect());
    for s in sets.iter().filter(|s| s.warnings > 0) {
        tracing::warn!(id = %s.id, warnings = s.warnings, "questions kept unchanged after backend failures");
    }
    let outputs = write_sets(&a.out, &sets, ctx.config.seeds.generation)?;
    run.finish(&a.out.join("run.json"), &outputs)
}

// ---------------------------------------------------------------------------
// Analysis

pub fn simmatrix(ctx: &Context, a: SimmatrixArgs) -> CmdResult {
    let named: Vec<(String, PathBuf)> = a.sets.iter().map(|s| parse_named(s)).collect::<Result<_, _>>()?;
    if named.len() < 2 {
        return Err(invalid("at least two --set NAME=FILE entries are required"));
    }
    let paths: Vec<&Path> = named.iter().map(|(_, p)| p.as_path()).collect();
    let run = Run::start(ctx, "simmatrix", &paths, 0)?;
    let mut columns: Vec<(String, Vec<String>)> = Vec::new();
    let mut order: Vec<String> = Vec::new();
    for (name, path) in &named {
        let labels = read_labels(path).map_err(bad)?;
        if order.is_empty() {
            order = labels.iter().map(|l| l.id.clone()).collect();
        }
        let by_id: HashMap<&str, &str> = labels.iter().map(|l| (l.id.as_str(), l.question.as_str())).collect();
        if by_id.len() != order.len() {
            return Err(invalid(format!("{name}: {} labels, expected {}", by_id.len(), order.len())));
        }
        let qs = order
            .iter()
            .map(|id| by_id.get(id.as_str()).map(|q| q.to_string()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid(format!("{name}: label ids differ from the first set")))?;
        columns.push((name.clone(), qs));
    }
    let sets = MethodQuestionSets::new(columns).map_err(bad_input)?;
    let matrix = method_similarity_matrix(&sets).map_err(bad_input)?;
    let stem = format!("{}-{}-rouge1", a.dataset, EvalMode::from(a.mode).as_str());
    let csv = a.out.join("matrices").join(format!("{stem}.csv"));
    let md = a.out.join("tables").join(format!("{stem}.md"));
    write_text(&csv, &matrix.to_csv())?;
    let table = matrix.to_markdown();
    write_text(&md, &table)?;
    print!("{table}");
    run.finish(&a.out.join("run.json"), &[csv, md])
}

// ---------------------------------------------------------------------------
// Training harness

fn trainer(ctx: &Context) -> mrc_enhance_core::harness::StubTrainer {
    ctx.config.stub_trainer.build()
}

fn print_ledger(ledger: &ScoreLedger) {
    print!("{}", render_results_table(&[("metric", ledger)], ledger.mode, TableFormat::Markdown));
}

pub fn train(ctx: &Context, a: TrainArgs) -> CmdResult {
    let mode = EvalMode::from(a.mode);
    let mut inputs: Vec<&Path> = vec![&a.baseline, &a.test];
    inputs.extend(a.variants.iter().map(PathBuf::as_path));
    let run = Run::start(ctx, "train", &inputs, 0)?;
    let hp = ctx.config.hyperparams_for(mode, a.dataset.as_deref()).map_err(bad)?;
    let original = TrainingSetVariant::new(
        "baseline",
        Method::Original,
        VariantParams::default(),
        read_labels(&a.baseline).map_err(bad)?,
    );
    let variants = load_variants(&a.variants)?;
    if variants.iter().any(|v| v.id == original.id) {
        return Err(invalid("a variant set may not be named baseline"));
    }
    let test = read_labels(&a.test).map_err(bad)?;
    let mut t = trainer(ctx);
    let start = t.base.clone();
    let ledger = run_individual_suite(&start, &original, &variants, &mut t, &test, mode, &hp)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{e}")))?;
    write_ledger(&a.ledger, &ledger)?;
    print_ledger(&ledger);
    run.finish(&run_file_for(&a.ledger), std::slice::from_ref(&a.ledger))
}

pub fn eval(ctx: &Context, a: EvalArgs) -> CmdResult {
    let mode = EvalMode::from(a.mode);
    let test = load_labels(&a.test)?;
    let mut t = trainer(ctx);
    let ckpt = Checkpoint(a.checkpoint.clone());
    let metric = evaluate(&mut t, &ckpt, &test, mode).map_err(|e| CliError::Runtime(anyhow::anyhow!("{e}")))?;
    println!(
        "{}",
        json!({"checkpoint": a.checkpoint, "trainer": t.name(), "mode": mode.as_str(), "metric_name": mode.metric_name(), "metric": metric})
    );
    Ok(())
}

fn load_ledger(path: &Path, mode: EvalMode) -> Result<ScoreLedger, CliError> {
    require(path)?;
    read_ledger(path, mode).map_err(bad)
}

/// Ledger with every row of `family` removed, so reruns replace them.
fn without_family(ledger: &ScoreLedger, family: Family) -> Result<ScoreLedger, CliError> {
    let rows: Vec<LedgerRow> = ledger.rows().iter().filter(|r| r.family != family).cloned().collect();
    ScoreLedger::from_rows(ledger.mode, rows).map_err(bad_input)
}

pub fn plan_continual_cmd(ctx: &Context, a: PlanArgs) -> CmdResult {
    let run = Run::start(ctx, "plan-continual", &[&a.ledger], 0)?;
    let ledger = load_ledger(&a.ledger, a.mode.into())?;
    let plan = plan_continual(&ledger, !a.per_set);
    write_json(&a.output, &plan)?;
    if plan.is_empty() {
        println!("no improving sets; continual fine-tuning is not applicable");
    } else {
        println!("{}", plan.join(" -> "));
    }
    run.finish(&run_file_for(&a.output), std::slice::from_ref(&a.output))
}

pub fn run_continual(ctx: &Context, a: RunContinualArgs) -> CmdResult {
    let mode = EvalMode::from(a.mode);
    let mut inputs: Vec<&Path> = vec![&a.ledger, &a.plan, &a.test];
    inputs.extend(a.variants.iter().map(PathBuf::as_path));
    let run = Run::start(ctx, "run-continual", &inputs, 0)?;
    let mut ledger = without_family(&load_ledger(&a.ledger, mode)?, Family::Continual)?;
    let plan: Vec<String> = crate::formats::read_json(&a.plan).map_err(bad)?;
    let variants = load_variants(&a.variants)?;
    if let Some(missing) = plan.iter().find(|id| !variants.iter().any(|v| &v.id == *id)) {
        return Err(invalid(format!("planned set {missing} not found among --variants")));
    }
    let test = read_labels(&a.test).map_err(bad)?;
    let hp = ctx.config.continual_hyperparams(mode, a.dataset.as_deref()).map_err(bad)?;
    let mut t = trainer(ctx);
    let start = t.base.clone();
    let result = run_chain(&plan, &variants, &start, &mut t, &hp, &test, mode);
    ledger.record_continual(&result);
    write_ledger(&a.ledger, &ledger)?;
    run.finish(&run_file_for(&a.ledger), std::slice::from_ref(&a.ledger))?;
    match result {
        Ok(c) => {
            println!("continual {}: {:.1} ({})", mode.metric_name(), c.metric, c.stages.join(" -> "));
            Ok(())
        }
        Err(HarnessError::NoImprovingSets) => {
            println!("no improving sets; recorded n/a");
            Ok(())
        }
        Err(e) => Err(CliError::Runtime(anyhow::anyhow!("continual run failed: {e}"))),
    }
}

pub fn concat_augment(ctx: &Context, a: ConcatArgs) -> CmdResult {
    let mode = EvalMode::from(a.mode);
    let mut inputs: Vec<&Path> = vec![&a.ledger];
    inputs.extend(a.variants.iter().map(PathBuf::as_path));
    if let Some(t) = &a.test {
        inputs.push(t);
    }
    let run = Run::start(ctx, "concat-augment", &inputs, 0)?;
    let mut ledger = without_family(&load_ledger(&a.ledger, mode)?, Family::Augmentation)?;
    let variants = load_variants(&a.variants)?;
    let plan = plan_continual(&ledger, true);
    let mut chosen = Vec::new();
    for id in &plan {
        chosen.push(
            variants
                .iter()
                .find(|v| &v.id == id)
                .ok_or_else(|| invalid(format!("improving set {id} not found among --variants")))?,
        );
    }
    let mut outputs = Vec::new();
    let concat = match concat_augmented(&chosen) {
        Ok(v) => {
            outputs.push(write_variant(&a.out, &v, 0)?);
            println!("augmentation: {} labels from {}", v.labels.len(), plan.join(" + "));
            Some(v)
        }
        Err(_) => {
            println!("no improving sets; augmentation is not applicable");
            None
        }
    };
    let mut failure = None;
    if let Some(test_path) = &a.test {
        let test = read_labels(test_path).map_err(bad)?;
        match &concat {
            None => ledger.record_unscored("augmentation", Family::Augmentation, Outcome::NotApplicable, 0.0),
            Some(v) => {
                let hp = ctx.config.hyperparams_for(mode, a.dataset.as_deref()).map_err(bad)?;
                let mut t = trainer(ctx);
                let start = t.base.clone();
                let scored = t
                    .fine_tune(&start, v, &hp)
                    .map_err(HarnessError::from)
                    .and_then(|(ckpt, secs)| evaluate(&mut t, &ckpt, &test, mode).map(|m| (m, ckpt, secs)));
                match scored {
                    Ok((metric, ckpt, secs)) => {
                        ledger.record("augmentation", Family::Augmentation, metric, secs, 0.0, Some(ckpt.0));
                        println!("augmentation {}: {metric:.1}", mode.metric_name());
                    }
                    Err(e) => {
                        ledger.record_unscored("augmentation", Family::Augmentation, Outcome::Failed, 0.0);
                        failure = Some(e);
                    }
                }
            }
        }
        write_ledger(&a.ledger, &ledger)?;
        outputs.push(a.ledger.clone());
    }
    run.finish(&a.out.join("run.json"), &outputs)?;
    match failure {
        Some(e) => Err(CliError::Runtime(anyhow::anyhow!("augmentation run failed: {e}"))),
        None => Ok(()),
    }
}

pub fn costbench(ctx: &Context, a: CostbenchArgs) -> CmdResult {
    let mode = EvalMode::from(a.mode);
    let named: Vec<(String, PathBuf)> = a.ledgers.iter().map(|s| parse_named(s)).collect::<Result<_, _>>()?;
    let paths: Vec<&Path> = named.iter().map(|(_, p)| p.as_path()).collect();
    let run = Run::start(ctx, "costbench", &paths, 0)?;
    let ledgers: Vec<(String, ScoreLedger)> = named
        .iter()
        .map(|(n, p)| read_ledger(p, mode).map(|l| (n.clone(), l)).map_err(bad))
        .collect::<Result<_, _>>()?;
    let refs: Vec<(&str, &ScoreLedger)> = ledgers.iter().map(|(n, l)| (n.as_str(), l)).collect();
    let tables = a.out.join("tables");
    let m = mode.as_str();
    let files = [
        (tables.join(format!("results-{m}.md")), render_results_table(&refs, mode, TableFormat::Markdown)),
        (tables.join(format!("results-{m}.csv")), render_results_table(&refs, mode, TableFormat::Csv)),
        (tables.join(format!("cost-{m}.md")), render_cost_table(&refs, mode, TableFormat::Markdown)),
        (tables.join(format!("cost-{m}.csv")), render_cost_table(&refs, mode, TableFormat::Csv)),
    ];
    let mut outputs = Vec::new();
    for (path, text) in &files {
        write_text(path, text)?;
        outputs.push(path.clone());
    }
    println!("{}\n{}", files[0].1, files[2].1);
    run.finish(&a.out.join("run.json"), &outputs)
}

// ---------------------------------------------------------------------------
// Annotation service

pub fn annotate_serve(ctx: &Context, a: ServeArgs) -> CmdResult {
    let labels = load_labels(&a.labels)?;
    let threshold_words = a.threshold.unwrap_or_else(|| ctx.config.review_threshold(a.dataset.as_deref()));
    if threshold_words == 0 {
        return Err(invalid("--threshold must be at least 1"));
    }
    let export_dir = a.export_dir.clone().unwrap_or_else(|| {
        a.log
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    let addr = (a.host.as_str(), a.port)
        .to_socket_addrs()
        .ok()
        .and_then(|mut it| it.next())
        .ok_or_else(|| invalid(format!("cannot resolve {}:{}", a.host, a.port)))?;
    let options = ServiceOptions { log_path: a.log.clone(), threshold_words, token: a.token.clone(), export_dir };
    let service = AnnotationService::open(labels, options).map_err(bad)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(anyhow::Error::from)?;
    rt.block_on(serve(Arc::new(service), addr))?;
    Ok(())
}
