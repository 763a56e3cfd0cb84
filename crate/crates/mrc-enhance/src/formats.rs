//! On-disk formats: JSON Lines corpora, DPR-style label files, variant and
//! run manifests, and the score-ledger CSV.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mrc_enhance_core::corpus::RawDocument;
use mrc_enhance_core::harness::{EvalMode, Family, LedgerRow, Outcome, ScoreLedger};
use mrc_enhance_core::{Method, Passage, QALabel, TrainingSetVariant, VariantParams};

pub fn read_documents(path: &Path) -> Result<Vec<RawDocument>> {
    read_jsonl(path)
}

pub fn read_passages(path: &Path) -> Result<Vec<Passage>> {
    let records: Vec<PassageRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(|r| Passage::new(r.id, r.title, r.text)).collect())
}

pub fn write_passages(path: &Path, passages: &[Passage]) -> Result<()> {
    let records =
        passages.iter().map(|p| PassageRecord { id: p.id.clone(), title: p.title.clone(), text: p.text.clone() });
    write_jsonl(path, records)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PassageRecord {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}: invalid record", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

// ---------------------------------------------------------------------------
// DPR-style labels

/// One context entry. `passage_id` is an extension that ties the context to
/// a corpus passage; files without it are matched by text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DprContext {
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage_id: Option<String>,
}

/// One label. `id` is an extension; labels without it get `q<index>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DprLabel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub answers: Vec<String>,
    pub positive_ctxs: Vec<DprContext>,
    #[serde(default)]
    pub negative_ctxs: Vec<DprContext>,
    #[serde(default)]
    pub hard_negative_ctxs: Vec<DprContext>,
}

impl DprContext {
    pub fn of(p: &Passage) -> Self {
        Self { title: p.title.clone(), text: p.text.clone(), passage_id: Some(p.id.clone()) }
    }

    fn passage(&self) -> Passage {
        Passage::new(self.passage_id.clone().unwrap_or_default(), self.title.clone(), self.text.clone())
    }
}

impl DprLabel {
    pub fn of(label: &QALabel) -> Self {
        Self {
            id: Some(label.id.clone()),
            question: label.question.clone(),
            answers: label.answers.clone(),
            positive_ctxs: vec![DprContext::of(&label.positive_ctx)],
            negative_ctxs: label.negative_ctxs.iter().map(DprContext::of).collect(),
            hard_negative_ctxs: Vec::new(),
        }
    }

    /// Core label; a missing positive context becomes an empty passage that
    /// validation rejects as `missing_context`.
    pub fn into_label(self, index: usize) -> QALabel {
        let positive_ctx =
            self.positive_ctxs.first().map(DprContext::passage).unwrap_or_else(|| Passage::new("", "", ""));
        QALabel {
            id: self.id.unwrap_or_else(|| format!("q{index}")),
            question: self.question,
            answers: self.answers,
            positive_ctx,
            negative_ctxs: self.negative_ctxs.iter().map(DprContext::passage).collect(),
        }
    }
}

pub fn read_dpr(path: &Path) -> Result<Vec<DprLabel>> {
    read_json(path)
}

pub fn read_labels(path: &Path) -> Result<Vec<QALabel>> {
    let raw = read_dpr(path)?;
    let labels: Vec<QALabel> = raw.into_iter().enumerate().map(|(i, l)| l.into_label(i)).collect();
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(l.id.as_str())) {
        bail!("{}: duplicate label id {}", path.display(), dup.id);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[QALabel]) -> Result<()> {
    let dpr: Vec<DprLabel> = labels.iter().map(DprLabel::of).collect();
    write_json(path, &dpr)
}

// ---------------------------------------------------------------------------
// Variant manifests

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativesManifest {
    pub method: String,
    pub k: usize,
    /// `null` when the occurrence cap is disabled.
    pub threshold: Option<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantManifest {
    pub method: String,
    pub backend: String,
    pub set: Option<u32>,
    pub pivot: Option<String>,
    pub seed: u64,
    pub seconds: f64,
    pub avg_similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub warnings: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Manifest path stored beside a variant label file: `x.json` ->
/// `x.manifest.json`.
pub fn manifest_path(labels_path: &Path) -> PathBuf {
    let stem = labels_path.file_stem().and_then(|s| s.to_str()).unwrap_or("variant");
    labels_path.with_file_name(format!("{stem}.manifest.json"))
}

/// Write a variant's labels as `<dir>/<id>.json` plus its manifest.
pub fn write_variant(dir: &Path, variant: &TrainingSetVariant, seed: u64) -> Result<PathBuf> {
    let path = dir.join(format!("{}.json", variant.id));
    write_labels(&path, &variant.labels)?;
    let mpath = manifest_path(&path);
    if variant.method == Method::Negatives {
        let m = NegativesManifest {
            method: variant.method.as_str().into(),
            k: variant.params.k.unwrap_or(0),
            threshold: variant.params.threshold,
            seconds: variant.generation_seconds,
        };
        write_json(&mpath, &m)?;
    } else {
        let m = VariantManifest {
            method: variant.method.as_str().into(),
            backend: variant.params.backend.clone().unwrap_or_default(),
            set: variant.params.set,
            pivot: variant.params.pivot.clone(),
            seed: variant.params.seed.unwrap_or(seed),
            seconds: variant.generation_seconds,
            avg_similarity: variant.avg_similarity,
            warnings: variant.warnings,
        };
        write_json(&mpath, &m)?;
    }
    Ok(path)
}

/// Load a variant label file; its id is the file stem and its method and
/// parameters come from the manifest beside it.
pub fn read_variant(path: &Path) -> Result<TrainingSetVariant> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .with_context(|| format!("{}: not a valid variant file name", path.display()))?
        .to_string();
    let labels = read_labels(path)?;
    let mpath = manifest_path(path);
    let value: serde_json::Value = read_json(&mpath)?;
    let method_name = value.get("method").and_then(|m| m.as_str()).unwrap_or_default();
    let method =
        Method::parse(method_name).with_context(|| format!("{}: unknown method {method_name:?}", mpath.display()))?;
    let mut variant = TrainingSetVariant::new(id, method, VariantParams::default(), labels);
    if method == Method::Negatives {
        let m: NegativesManifest = serde_json::from_value(value)?;
        variant.params.k = Some(m.k);
        variant.params.threshold = m.threshold;
        variant.generation_seconds = m.seconds;
    } else {
        let m: VariantManifest = serde_json::from_value(value)?;
        variant.params.backend = (!m.backend.is_empty()).then_some(m.backend);
        variant.params.set = m.set;
        variant.params.pivot = m.pivot;
        variant.params.seed = Some(m.seed);
        variant.generation_seconds = m.seconds;
        variant.avg_similarity = m.avg_similarity;
        variant.warnings = m.warnings;
    }
    Ok(variant)
}

/// Variant label files in a directory (those with a manifest beside them),
/// sorted by file name.
pub fn variant_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".json")
            && !name.ends_with(".manifest.json")
            && !name.ends_with(".run.json")
            && manifest_path(&path).exists()
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Run manifests

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
    pub started_at: String,
    pub wall_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_inputs(paths: &[&Path]) -> Result<Vec<InputDigest>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> =
                fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|f| f.is_file()).collect();
            files.sort();
            for f in files {
                out.push(InputDigest { path: f.display().to_string(), sha256: sha256_file(&f)? });
            }
        } else {
            out.push(InputDigest { path: p.display().to_string(), sha256: sha256_file(p)? });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Score ledger CSV

#[derive(Debug, Serialize, Deserialize)]
struct LedgerRecord {
    variant_id: String,
    method: String,
    metric: Option<f64>,
    delta: Option<f64>,
    class: String,
    ft_seconds: f64,
    gen_seconds: f64,
    checkpoint: Option<String>,
}

pub fn write_ledger(path: &Path, ledger: &ScoreLedger) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in ledger.rows() {
        w.serialize(LedgerRecord {
            variant_id: r.variant_id.clone(),
            method: r.family.as_str().into(),
            metric: r.metric,
            delta: r.delta,
            class: r.outcome.as_str().into(),
            ft_seconds: r.ft_seconds,
            gen_seconds: r.gen_seconds,
            checkpoint: r.checkpoint.clone(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger(path: &Path, mode: EvalMode) -> Result<ScoreLedger> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<LedgerRecord>().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        let family = Family::parse(&rec.method)
            .with_context(|| format!("{}: unknown method {:?}", path.display(), rec.method))?;
        let outcome =
            Outcome::parse(&rec.class).with_context(|| format!("{}: unknown class {:?}", path.display(), rec.class))?;
        rows.push(LedgerRow {
            variant_id: rec.variant_id,
            family,
            metric: rec.metric,
            delta: rec.delta,
            outcome,
            ft_seconds: rec.ft_seconds,
            gen_seconds: rec.gen_seconds,
            checkpoint: rec.checkpoint.filter(|c| !c.is_empty()),
        });
    }
    ScoreLedger::from_rows(mode, rows).with_context(|| format!("{}: invalid ledger", path.display()))
}
