//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Oracles here are written independently
//! of the library code they check.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use mrc_enhance::annosvc::{router, AnnotationService, ServiceOptions};
use mrc_enhance::formats::{read_labels, write_labels};
use mrc_enhance_core::analysis::{method_similarity_matrix, MethodQuestionSets};
use mrc_enhance_core::augment::{
    back_translate_sweep, build_ranked_sets, build_substitution_sets_from_plans, replace_first, unique_paraphrases,
    CyclingParaphraser, IdentityTranslator, KeywordExtractor, SubstitutionPlan, SynonymProvider, TranslatorPair,
    VARIANTS_PER_QUESTION,
};
use mrc_enhance_core::corpus::{split_dataset, Passage, QALabel};
use mrc_enhance_core::harness::{
    cost_benefit, exact_match, recall_at_1, relative_change, summarize_scores, EvalMode, Family, Outcome, ScoreLedger,
};
use mrc_enhance_core::negatives::{mine_negatives, NegativesError, OccurrenceLedger};
use mrc_enhance_core::simscore::{HashingEmbedder, JaccardScorer};
use mrc_enhance_core::{FixedClock, Method, PivotLanguage};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const VOCAB: &[&str] = &[
    "sleep",
    "rem",
    "apnea",
    "dream",
    "night",
    "melatonin",
    "cortisol",
    "nap",
    "insomnia",
    "circadian",
    "rhythm",
    "patient",
    "dose",
    "therapy",
    "brain",
    "wave",
    "stage",
    "deep",
    "light",
    "cycle",
    "hormone",
    "onset",
    "latency",
    "the",
    "of",
    "and",
    "in",
    "a",
];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn label_with(id: String, question: String, answer: String, pos: &Passage) -> QALabel {
    QALabel { id, question, answers: vec![answer], positive_ctx: pos.clone(), negative_ctxs: vec![] }
}

// ---------------------------------------------------------------------------
// Negative mining

fn oracle_jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<&str> = a.split_whitespace().collect();
    let sb: BTreeSet<&str> = b.split_whitespace().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// k lowest-Jaccard passages other than the positive, ties by id.
fn oracle_k_smallest(pos: &Passage, corpus: &[Passage], k: usize) -> Vec<String> {
    let mut all: Vec<(f64, &str)> =
        corpus.iter().filter(|p| p.id != pos.id).map(|p| (oracle_jaccard(&pos.text, &p.text), p.id.as_str())).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    all.into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

fn random_instance(rng: &mut ChaCha8Rng, max_passages: usize, max_labels: usize) -> (Vec<Passage>, Vec<QALabel>) {
    let n_p = rng.random_range(6..=max_passages);
    let corpus: Vec<Passage> = (0..n_p).map(|i| Passage::new(format!("p{i:03}"), "", words(rng, 1, 14))).collect();
    let n_l = rng.random_range(1..=max_labels);
    let labels = (0..n_l)
        .map(|i| {
            let pos = &corpus[rng.random_range(0..n_p)];
            label_with(format!("l{i}"), "q".into(), "a".into(), pos)
        })
        .collect();
    (corpus, labels)
}

fn negative_mining() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0usize;
    let mut mining = Duration::ZERO;
    for inst in 0..200 {
        let (corpus, labels) = random_instance(&mut rng, 200, 50);
        let k = rng.random_range(1..=5);
        let mut ledger = OccurrenceLedger::unbounded();
        let t = Instant::now();
        let mined = mine_negatives(&labels, &corpus, k, &JaccardScorer, &mut ledger)
            .map_err(|e| format!("instance {inst}: {e}"))?;
        mining += t.elapsed();
        for (l, m) in labels.iter().zip(&mined) {
            let got: Vec<String> = m.negative_ctxs.iter().map(|p| p.id.clone()).collect();
            let want = oracle_k_smallest(&l.positive_ctx, &corpus, k);
            ensure(got == want, || format!("instance {inst} label {}: got {got:?}, oracle {want:?}", l.id))?;
            checked += 1;
        }
    }

    let mut violations = 0usize;
    let mut completed = 0usize;
    for run in 0..1000 {
        let (corpus, labels) = random_instance(&mut rng, 60, 50);
        let k = rng.random_range(1..=3);
        let threshold = rng.random_range(1..=10);
        let mut ledger = OccurrenceLedger::new(threshold).unwrap();
        let t = Instant::now();
        let result = mine_negatives(&labels, &corpus, k, &JaccardScorer, &mut ledger);
        mining += t.elapsed();
        match result {
            Ok(mined) => {
                completed += 1;
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for m in &mined {
                    let ids: BTreeSet<&str> = m.negative_ctxs.iter().map(|p| p.id.as_str()).collect();
                    ensure(ids.len() == k && !ids.contains(m.positive_ctx.id.as_str()), || {
                        format!("run {run}: label {} has a bad negative list", m.id)
                    })?;
                    for id in ids {
                        *counts.entry(id).or_default() += 1;
                    }
                }
                violations += counts.values().filter(|&&c| c > threshold).count();
            }
            Err(NegativesError::InsufficientNegatives { .. }) => {}
            Err(e) => return Err(format!("run {run}: unexpected error {e}")),
        }
        violations += ledger.counts().values().filter(|&&c| c > threshold).count();
    }
    let elapsed = start.elapsed();
    ensure(violations == 0, || format!("{violations} cap violations"))?;
    ensure(completed >= 500, || format!("only {completed}/1000 capped runs completed"))?;
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {:.1}s ({:.1}s mining)", elapsed.as_secs_f64(), mining.as_secs_f64())
    })?;
    Ok(format!(
        "{checked} labels over 200 instances equal the brute-force oracle; 0 cap violations in 1000 runs ({completed} fully mined); {:.1}s total, {:.1}s mining",
        elapsed.as_secs_f64(),
        mining.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// Splits, metrics, cost-benefit, mean and deviation

fn split_arithmetic() -> Verdict {
    let table = [(957, (765, 96, 96)), (5000, (4000, 500, 500)), (1097, (877, 110, 110)), (1121, (896, 112, 113))];
    let pos = Passage::new("p", "", "x");
    for (n, want) in table {
        let labels: Vec<QALabel> = (0..n).map(|i| label_with(format!("l{i}"), "q".into(), "x".into(), &pos)).collect();
        let s = split_dataset(labels, 7).map_err(|e| e.to_string())?;
        let got = (s.train.len(), s.dev.len(), s.test.len());
        ensure(got == want, || format!("N={n}: got {got:?}, want {want:?}"))?;
    }
    Ok("765/96/96, 4000/500/500, 877/110/110, 896/112/113".into())
}

fn oracle_norm(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn oracle_percent(hits: usize, n: usize) -> f64 {
    (1000.0 * hits as f64 / n as f64).round() / 10.0
}

fn jitter(rng: &mut ChaCha8Rng, s: &str) -> String {
    let mut out = String::new();
    if rng.random_bool(0.3) {
        out.push_str("  ");
    }
    for (i, w) in s.split(' ').enumerate() {
        if i > 0 {
            out.push_str(if rng.random_bool(0.2) { " \t " } else { " " });
        }
        if rng.random_bool(0.3) {
            out.push_str(&w.to_uppercase());
        } else {
            out.push_str(w);
        }
    }
    if rng.random_bool(0.3) {
        out.push('\n');
    }
    out
}

fn metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for inst in 0..1000 {
        let n = rng.random_range(1..=60);
        let gold: Vec<String> = (0..n).map(|_| format!("p{}", rng.random_range(0..8))).collect();
        let top1: Vec<String> = (0..n).map(|_| format!("p{}", rng.random_range(0..8))).collect();
        let hits = top1.iter().zip(&gold).filter(|(a, b)| a == b).count();
        let got = recall_at_1(&top1, &gold).map_err(|e| e.to_string())?;
        ensure(got == oracle_percent(hits, n), || {
            format!("recall instance {inst}: {got} vs {}", oracle_percent(hits, n))
        })?;

        let golds: Vec<Vec<String>> =
            (0..n).map(|_| (0..rng.random_range(1..=3)).map(|_| words(&mut rng, 1, 3)).collect()).collect();
        let preds: Vec<String> = golds
            .iter()
            .map(|g| {
                if rng.random_bool(0.5) {
                    let pick = g.choose(&mut rng).unwrap().clone();
                    jitter(&mut rng, &pick)
                } else {
                    words(&mut rng, 1, 3)
                }
            })
            .collect();
        let hits = preds.iter().zip(&golds).filter(|(p, g)| g.iter().any(|x| oracle_norm(x) == oracle_norm(p))).count();
        let got = exact_match(&preds, &golds).map_err(|e| e.to_string())?;
        ensure(got == oracle_percent(hits, n), || format!("EM instance {inst}: {got} vs {}", oracle_percent(hits, n)))?;
    }
    Ok("recall@1 and EM equal brute-force recounts on 1000 instances each".into())
}

fn cost_benefit_cells() -> Verdict {
    let cases = [(25.0, 33.3, 33u32), (42.5, 62.8, 48), (46.8, 48.4, 3)];
    let mut cells = Vec::new();
    for (base, best, want) in cases {
        let oracle = ((best - base) / base * 100.0_f64).abs().round() as u32;
        ensure(oracle == want, || format!("oracle disagrees with the table for {base}->{best}"))?;
        let got = relative_change(base, best);
        ensure(got == Some((want, Outcome::Improved)), || format!("{base}->{best}: got {got:?}"))?;
        let mut ledger = ScoreLedger::new(EvalMode::Retrieval, "baseline", base, 0.0, None);
        ledger.record("bt-ca", Family::Backtranslation, best, 3600.0 * 4.9, 0.0, None);
        ledger.record("bt-es", Family::Backtranslation, base - 1.0, 0.0, 0.0, None);
        let row = cost_benefit(&ledger).into_iter().find(|r| r.family == Family::Backtranslation).unwrap();
        ensure(row.relative_pct == Some(want) && row.hours == 4.9, || format!("{base}->{best}: ledger row {row:?}"))?;
        cells.push(format!("{base}->{best}={want}%"));
    }
    Ok(cells.join(", "))
}

fn mean_std() -> Verdict {
    let column = [47.2, 45.8, 47.4, 46.6, 48.4];
    let (m, s) = summarize_scores(&column).map_err(|e| e.to_string())?;
    let n = column.len() as f64;
    let om = column.iter().sum::<f64>() / n;
    let os = (column.iter().map(|x| (x - om).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let (om, os) = ((om * 10.0).round() / 10.0, (os * 10.0).round() / 10.0);
    ensure((m, s) == (47.1, 1.0) && (om, os) == (47.1, 1.0), || format!("got {m} ± {s}, oracle {om} ± {os}"))?;
    Ok(format!("{m:.1} ± {s:.1}"))
}

// ---------------------------------------------------------------------------
// Set construction

struct FixedKeyword(String);

impl KeywordExtractor for FixedKeyword {
    fn keyword(&self, _: &str) -> Option<String> {
        Some(self.0.clone())
    }
}

struct FixedSynonyms(Vec<String>);

impl SynonymProvider for FixedSynonyms {
    fn synonyms(&self, _: &str) -> Vec<String> {
        self.0.clone()
    }
}

fn set_laws() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let emb = HashingEmbedder::default();
    let pos = Passage::new("p", "", "x");
    for inst in 0..500 {
        let n = rng.random_range(1..=20);
        let source: Vec<QALabel> =
            (0..n).map(|i| label_with(format!("l{i}"), words(&mut rng, 2, 10), "x".into(), &pos)).collect();
        let variants: Vec<Vec<String>> =
            (0..n).map(|_| (0..VARIANTS_PER_QUESTION).map(|_| words(&mut rng, 1, 10)).collect()).collect();
        let sets =
            build_ranked_sets(&source, &variants, &emb, inst, Method::Paraphrase, "stub").map_err(|e| e.to_string())?;
        let avg: Vec<f64> = sets.iter().take(5).map(|s| s.avg_similarity.unwrap()).collect();
        ensure(avg.windows(2).all(|w| w[0] >= w[1]), || format!("instance {inst}: not monotone {avg:?}"))?;
    }

    let synonyms_pool = ["slumber", "doze", "rest", "repose", "snooze"];
    for n in 0..=5 {
        let q = "how long is deep sleep in adults?";
        let syns: Vec<String> = synonyms_pool[..n].iter().map(|s| s.to_string()).collect();
        let plan = SubstitutionPlan::new(q, &FixedKeyword("sleep".into()), &FixedSynonyms(syns.clone()), &emb);
        ensure(plan.n() == n, || format!("n={n}: plan has {}", plan.n()))?;
        let vs: Vec<String> = (1..=5).map(|i| plan.variant(q, i)).collect();
        for (i, v) in vs.iter().enumerate() {
            if i < 5 - n {
                ensure(v == q, || format!("n={n}: variant {} should be the original, got {v:?}", i + 1))?;
            } else {
                let want = replace_first(q, "sleep", &plan.synonyms[i - (5 - n)]);
                ensure(v == &want && v != q, || format!("n={n}: variant {} is {v:?}, want {want:?}", i + 1))?;
            }
        }
        let used: BTreeSet<&str> = plan.synonyms.iter().map(String::as_str).collect();
        ensure(used == syns.iter().map(String::as_str).collect(), || format!("n={n}: synonyms {used:?}"))?;
        let source = vec![label_with("l0".into(), q.into(), "x".into(), &pos)];
        let sets = build_substitution_sets_from_plans(&source, std::slice::from_ref(&plan), &emb, 5);
        for (i, s) in sets.iter().take(5).enumerate() {
            ensure(s.labels[0].question == vs[i], || format!("n={n}: set {} question differs", i + 1))?;
        }
    }

    for unique in 0..=5 {
        let q = "what is rem sleep?";
        let mut cands: Vec<String> = (0..unique).map(|i| format!("paraphrase number {i}?")).collect();
        cands.extend(cands.clone());
        cands.push(q.to_uppercase());
        let got = unique_paraphrases(q, &CyclingParaphraser { candidates: cands }, 5, 50);
        ensure(got.len() == 5, || format!("{unique} unique: {} entries", got.len()))?;
        let distinct: BTreeSet<&String> = got[..unique].iter().collect();
        ensure(distinct.len() == unique && got[..unique].iter().all(|g| g != q), || {
            format!("{unique} unique: {got:?}")
        })?;
        ensure(got[unique..].iter().all(|g| g == q), || format!("{unique} unique: fallback wrong in {got:?}"))?;
    }
    Ok("500 ranked instances monotone; padding rule holds for n=0..5; always 5 paraphrases for 0..5 unique".into())
}

fn rouge_matrix() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for inst in 0..200 {
        let m = rng.random_range(2..=5);
        let n = rng.random_range(1..=15);
        let mut methods: Vec<(String, Vec<String>)> =
            (0..m).map(|i| (format!("m{i}"), (0..n).map(|_| words(&mut rng, 0, 12)).collect())).collect();
        let copy = methods[0].1.clone();
        methods.push(("copy".into(), copy));
        let matrix = method_similarity_matrix(&MethodQuestionSets::new(methods).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let k = m + 1;
        for i in 0..k {
            ensure(matrix.get(i, i) == 100.0, || format!("instance {inst}: diagonal {i} = {}", matrix.get(i, i)))?;
            for j in 0..k {
                ensure(matrix.get(i, j) == matrix.get(j, i), || format!("instance {inst}: asymmetric at {i},{j}"))?;
            }
        }
        ensure(matrix.get(0, m) == 100.0, || format!("instance {inst}: identical sets scored {}", matrix.get(0, m)))?;
    }
    Ok("diagonal and identical-set cells are 100.0; symmetric over 200 random matrices".into())
}

fn pivot_sweep() -> Verdict {
    let codes = [
        "es", "fr", "de", "ru", "zh", "ar", "nl", "fi", "hu", "mul", "uk", "hi", "da", "cs", "roa", "bg", "ca", "af",
        "et", "trk", "sla", "id", "sk", "tl", "rw",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let pos = Passage::new("p", "", "x");
    let source: Vec<QALabel> =
        (0..40).map(|i| label_with(format!("l{i}"), words(&mut rng, 2, 10), "x".into(), &pos)).collect();
    let sets = back_translate_sweep(
        &source,
        &PivotLanguage::ALL,
        |p| Box::new(IdentityTranslator(p)) as Box<dyn TranslatorPair>,
        &FixedClock::new(0.0),
    );
    ensure(sets.len() == 25, || format!("{} variants", sets.len()))?;
    let got: Vec<&str> = sets.iter().map(|s| s.params.pivot.as_deref().unwrap_or("")).collect();
    ensure(got == codes, || format!("pivot codes {got:?}"))?;
    for s in &sets {
        ensure(s.labels == source, || format!("{} differs from the input", s.id))?;
    }
    Ok("25 variants with the expected codes; identity sweep returns input-equal sets".into())
}

// ---------------------------------------------------------------------------
// End to end

struct Synthetic {
    corpus: Vec<Value>,
    labels: Vec<Value>,
    synonyms: BTreeMap<String, Vec<String>>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
}

fn synthetic_dataset(n_labels: usize) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let lexicon: Vec<String> = (0..400).map(|i| format!("{}{}", VOCAB[i % VOCAB.len()], i / VOCAB.len())).collect();
    let sentence = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> Vec<String> {
        (0..rng.random_range(lo..=hi)).map(|_| lexicon.choose(rng).unwrap().clone()).collect()
    };
    let mut docs: Vec<(String, Vec<Vec<String>>)> = Vec::new();
    for d in 0..400 {
        let n = rng.random_range(4..=9);
        let mut sents: Vec<Vec<String>> = (0..n).map(|_| sentence(&mut rng, 8, 30)).collect();
        if d % 3 == 0 {
            sents.push(sentence(&mut rng, 40, 50));
        }
        docs.push((format!("doc{d:03}"), sents));
    }
    let render = |sents: &[Vec<String>]| -> String {
        let body: Vec<String> = sents.iter().map(|s| format!("{}.", capitalize(&s.join(" ")))).collect();
        format!("Background: {}", body.join(" "))
    };
    let corpus: Vec<Value> =
        docs.iter().map(|(id, s)| json!({"id": id, "title": format!("Title {id}"), "text": render(s)})).collect();

    let mut labels = Vec::new();
    for i in 0..n_labels {
        let (doc_id, sents) = docs.choose(&mut rng).unwrap();
        let long = i % 10 == 0;
        let candidates: Vec<&Vec<String>> = sents.iter().filter(|s| s.len() >= if long { 40 } else { 8 }).collect();
        let (s, long) = match candidates.choose(&mut rng) {
            Some(s) => (*s, long),
            None => (&sents[0], false),
        };
        let len = if long { rng.random_range(32..=38) } else { rng.random_range(1..=6) };
        let start = rng.random_range(0..=s.len() - len);
        let answer = s[start..start + len].join(" ");
        let q_words: Vec<&str> = s.iter().take(6).map(String::as_str).collect();
        let question = format!("what does {} mean for the patient?", q_words.join(" "));
        let ctx = if i % 5 == 0 {
            json!({"title": format!("Title {doc_id}"), "text": render(sents)})
        } else {
            json!({"title": format!("Title {doc_id}"), "text": "", "passage_id": doc_id})
        };
        labels
            .push(json!({"id": format!("q{i:04}"), "question": question, "answers": [answer], "positive_ctxs": [ctx]}));
    }
    for i in 0..8 {
        let ctx = json!({"title": "", "text": "", "passage_id": format!("doc{:03}", i)});
        labels.push(json!({"id": format!("bad{i}"), "question": "unanswerable?", "answers": ["zzz not present"], "positive_ctxs": [ctx]}));
    }
    let mut synonyms = BTreeMap::new();
    for (i, w) in lexicon.iter().enumerate() {
        let n = i % 6;
        synonyms.insert(w.clone(), (0..n).map(|j| format!("{w}syn{j}")).collect());
    }
    Synthetic { corpus, labels, synonyms }
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mrc-enhance"))
        .args(args)
        .env("MRC_ENHANCE_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`{}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn table_rows(md: &str) -> Vec<Vec<String>> {
    md.lines()
        .filter(|l| l.starts_with('|') && !l.starts_with("|---"))
        .skip(1)
        .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
        .collect()
}

/// Score cell: optional bold one-decimal number, optional ` +`/` -` marker.
fn parse_score(cell: &str) -> Option<f64> {
    let core = cell.strip_suffix(" +").or_else(|| cell.strip_suffix(" -")).unwrap_or(cell);
    let core = core.strip_prefix("**").and_then(|c| c.strip_suffix("**")).unwrap_or(core);
    let (int, frac) = core.split_once('.')?;
    (frac.len() == 1 && !int.is_empty()).then(|| core.parse().ok()).flatten()
}

/// Cost cell: hours with one decimal, then ` (N%)` and an optional marker.
fn parse_cost(cell: &str) -> Option<(f64, Option<u32>)> {
    let core = cell.strip_suffix(" +").or_else(|| cell.strip_suffix(" -")).unwrap_or(cell);
    match core.split_once(" (") {
        Some((h, rest)) => Some((parse_score(h)?, Some(rest.strip_suffix("%)")?.parse().ok()?))),
        None => Some((parse_score(core)?, None)),
    }
}

fn check_tables(reports: &Path, mode: &str, want_titles: &[&str]) -> Result<(), String> {
    let read =
        |name: &str| std::fs::read_to_string(reports.join("tables").join(name)).map_err(|e| format!("{name}: {e}"));
    let results = read(&format!("results-{mode}.md"))?;
    let cost = read(&format!("cost-{mode}.md"))?;
    ensure(results.contains("| Methods | synth |"), || format!("results-{mode}: header missing"))?;
    let rows = table_rows(&results);
    let titles: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    ensure(titles == want_titles, || format!("results-{mode} rows {titles:?}"))?;
    let mut scores = BTreeMap::new();
    for r in &rows {
        ensure(r.len() == 2, || format!("results-{mode}: row {r:?}"))?;
        match parse_score(&r[1]) {
            Some(v) => {
                scores.insert(r[0].clone(), v);
            }
            None => ensure(r[1] == "N/A", || format!("results-{mode}: bad cell {:?}", r[1]))?,
        }
    }
    let base = scores["baseline"];
    let crow = table_rows(&cost);
    let ctitles: Vec<&str> = crow.iter().map(|r| r[0].as_str()).collect();
    ensure(ctitles == want_titles, || format!("cost-{mode} rows {ctitles:?}"))?;
    for r in &crow {
        if r[1] == "N/A" {
            ensure(!scores.contains_key(&r[0]), || format!("cost-{mode}: {} is N/A but scored", r[0]))?;
            continue;
        }
        let (_, pct) = parse_cost(&r[1]).ok_or_else(|| format!("cost-{mode}: bad cell {:?}", r[1]))?;
        if r[0] == "baseline" {
            ensure(pct.is_none(), || format!("cost-{mode}: baseline shows a percentage"))?;
        } else {
            let best = scores[&r[0]];
            let want = ((best - base) / base * 100.0).abs().round() as u32;
            ensure(pct == Some(want), || format!("cost-{mode}: {} shows {pct:?}, expected {want}", r[0]))?;
        }
    }
    let csv = read(&format!("results-{mode}.csv"))?;
    ensure(csv.starts_with("method,synth,synth_class,synth_best\n"), || format!("results-{mode}.csv header"))?;
    Ok(())
}

async fn shorten_answers(train: &Path, dir: &Path) -> Result<PathBuf, String> {
    let labels = read_labels(train).map_err(|e| format!("{e:#}"))?;
    let opts = ServiceOptions {
        log_path: dir.join("events.jsonl"),
        threshold_words: 30,
        token: None,
        export_dir: dir.to_path_buf(),
    };
    let svc = Arc::new(AnnotationService::open(labels, opts).map_err(|e| format!("{e:#}"))?);
    let (_, tasks) = call(&svc, "GET", "/api/tasks?status=pending", None).await;
    let tasks = tasks.as_array().cloned().unwrap_or_default();
    ensure(!tasks.is_empty(), || "no long answers were flagged".into())?;
    for t in &tasks {
        let short: Vec<&str> = t["original_answer"].as_str().unwrap().split_whitespace().take(8).collect();
        let (s, _) = call(
            &svc,
            "POST",
            &format!("/api/tasks/{}/revision", t["id"].as_str().unwrap()),
            Some(json!({"answer": short.join(" ")})),
        )
        .await;
        ensure(s == StatusCode::OK, || format!("revision refused with {s}"))?;
    }
    let (s, _) = call(&svc, "POST", "/api/export", Some(json!({"output_path": "answer_shortening.json"}))).await;
    ensure(s == StatusCode::OK, || format!("export failed with {s}"))?;
    Ok(dir.join("answer_shortening.json"))
}

fn end_to_end() -> Verdict {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let data = synthetic_dataset(500);
    let corpus = root.join("corpus.jsonl");
    let raw = root.join("raw.json");
    let syn = root.join("synonyms.json");
    std::fs::write(&corpus, data.corpus.iter().map(|v| v.to_string() + "\n").collect::<String>()).unwrap();
    std::fs::write(&raw, serde_json::to_string(&data.labels).unwrap()).unwrap();
    std::fs::write(&syn, serde_json::to_string(&data.synonyms).unwrap()).unwrap();
    let d = |s: &str| root.join(s);

    cli(&["clean", "--input", p(&corpus), "--output", p(&d("cleaned.jsonl"))])?;
    cli(&["chunk", "--input", p(&corpus), "--output", p(&d("chunks.jsonl"))])?;
    cli(&["ingest", "--corpus", p(&corpus), "--labels", p(&raw), "--out", p(&d("data"))])?;
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d("data/ingest-report.json")).unwrap()).unwrap();
    ensure(report["valid"] == 500 && report["rejected"]["answer_not_found"] == 8, || {
        format!("ingest report {report}")
    })?;
    cli(&["make-splits", "--labels", p(&d("data/labels.json")), "--out", p(&d("split"))])?;
    let stats: Value = serde_json::from_str(&cli(&["stats", "--split", p(&d("split"))])?).map_err(|e| e.to_string())?;
    ensure(stats["train"]["labels"] == 400 && stats["dev"]["labels"] == 50 && stats["test"]["labels"] == 50, || {
        format!("split stats {stats}")
    })?;

    let train = d("split/train.json");
    let test = d("split/test.json");
    cli(&[
        "gen",
        "negatives",
        "--train",
        p(&train),
        "--passages",
        p(&d("data/passages.jsonl")),
        "--k",
        "1,2,3,4,5",
        "--out",
        p(&d("var/negatives")),
    ])?;
    cli(&["gen", "paraphrase", "--train", p(&train), "--backend", "shuffle", "--out", p(&d("var/paraphrase"))])?;
    cli(&["gen", "substitute", "--train", p(&train), "--synonyms", p(&syn), "--out", p(&d("var/substitution"))])?;
    cli(&["gen", "backtranslate", "--train", p(&train), "--pivots", "all", "--out", p(&d("var/backtranslation"))])?;
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let shortened = rt.block_on(shorten_answers(&train, &d("var/shortening")))?;
    cli(&[
        "stats",
        "--split",
        p(&d("split")),
        "--revised",
        p(&shortened),
        "--report-dir",
        p(&d("reports")),
        "--dataset",
        "synth",
    ])?;

    let n_sets = ["negatives", "paraphrase", "substitution", "backtranslation", "shortening"]
        .iter()
        .map(|m| {
            std::fs::read_dir(d(&format!("var/{m}")))
                .unwrap()
                .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".manifest.json"))
                .count()
        })
        .collect::<Vec<_>>();
    ensure(n_sets == [5, 6, 6, 25, 1], || format!("variant counts {n_sets:?}"))?;

    for (mode, dirs) in [
        ("retrieval", vec!["negatives", "paraphrase", "substitution", "backtranslation", "shortening"]),
        ("reader", vec!["paraphrase", "substitution", "backtranslation", "shortening"]),
    ] {
        let ledger = d(&format!("ledgers/{mode}.csv"));
        let plan = d(&format!("plans/{mode}.json"));
        let var_dirs: Vec<PathBuf> = dirs.iter().map(|m| d(&format!("var/{m}"))).collect();
        let var_args: Vec<&str> = var_dirs.iter().map(|v| p(v)).collect();
        let mut args = vec![
            "train",
            "--mode",
            mode,
            "--baseline",
            p(&train),
            "--test",
            p(&test),
            "--ledger",
            p(&ledger),
            "--variants",
        ];
        args.extend(&var_args);
        cli(&args)?;
        cli(&["plan-continual", "--ledger", p(&ledger), "--mode", mode, "--output", p(&plan)])?;
        let mut args = vec![
            "run-continual",
            "--mode",
            mode,
            "--ledger",
            p(&ledger),
            "--plan",
            p(&plan),
            "--test",
            p(&test),
            "--variants",
        ];
        args.extend(&var_args);
        cli(&args)?;
        let aug = d(&format!("var/augmentation-{mode}"));
        let mut args = vec![
            "concat-augment",
            "--mode",
            mode,
            "--ledger",
            p(&ledger),
            "--out",
            p(&aug),
            "--test",
            p(&test),
            "--variants",
        ];
        args.extend(&var_args);
        cli(&args)?;
        let named = format!("synth={}", p(&ledger));
        cli(&["costbench", "--mode", mode, "--ledger", &named, "--out", p(&d("reports"))])?;
    }
    cli(&[
        "simmatrix",
        "--set",
        &format!("original={}", p(&train)),
        "--set",
        &format!("paraphrasing={}", p(&d("var/paraphrase/paraphrase-shuffle-set1.json"))),
        "--set",
        &format!("substitution={}", p(&d("var/substitution/substitution-set1.json"))),
        "--set",
        &format!("back-translation={}", p(&d("var/backtranslation/backtranslation-ca.json"))),
        "--dataset",
        "synth",
        "--out",
        p(&d("reports")),
    ])?;
    let elapsed = start.elapsed();

    let all = [
        "baseline",
        "negatives",
        "paraphrasing",
        "word substitution",
        "back translation",
        "answer shortening",
        "continual",
        "augmentation",
    ];
    check_tables(&d("reports"), "retrieval", &all)?;
    let reader: Vec<&str> = all.iter().copied().filter(|t| *t != "negatives").collect();
    check_tables(&d("reports"), "reader", &reader)?;
    for f in [
        "matrices/synth-retrieval-rouge1.csv",
        "tables/synth-retrieval-rouge1.md",
        "tables/synth-answer-lengths.md",
        "run.json",
    ] {
        ensure(d("reports").join(f).exists(), || format!("missing report {f}"))?;
    }
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "500 labels through every stage in {:.1}s; result and cost tables have the expected rows and cells",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// Annotation service

async fn call(svc: &Arc<AnnotationService>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            Body::from(b.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(svc.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

fn review_labels(rng: &mut ChaCha8Rng) -> Vec<QALabel> {
    (0..60)
        .map(|i| {
            let before = words(rng, 2, 6);
            let answer_len = if i % 3 == 0 { rng.random_range(2..=10) } else { rng.random_range(31..=45) };
            let answer: Vec<String> = (0..answer_len).map(|j| format!("a{i}x{j}")).collect();
            let after = words(rng, 2, 6);
            let ctx = format!("{before} {} {after}", answer.join(" "));
            QALabel {
                id: format!("r{i:02}"),
                question: format!("question {i}?"),
                answers: vec![answer.join(" "), "alt".into()],
                positive_ctx: Passage::new(format!("p{i}"), "T", ctx),
                negative_ctxs: vec![Passage::new("n", "", "other")],
            }
        })
        .collect()
}

fn open_service(labels: &[QALabel], dir: &Path) -> Arc<AnnotationService> {
    let opts = ServiceOptions {
        log_path: dir.join("events.jsonl"),
        threshold_words: 30,
        token: None,
        export_dir: dir.join("exports"),
    };
    Arc::new(AnnotationService::open(labels.to_vec(), opts).unwrap())
}

async fn annotation_replay() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let labels = review_labels(&mut rng);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let svc = open_service(&labels, tmp.path());
    let (_, tasks) = call(&svc, "GET", "/api/tasks", None).await;
    let tasks: Vec<Value> = tasks.as_array().cloned().unwrap_or_default();
    ensure(tasks.len() == 40, || format!("{} tasks flagged, expected 40", tasks.len()))?;

    let mut statuses: BTreeMap<u16, usize> = BTreeMap::new();
    let mut reasons: BTreeSet<String> = BTreeSet::new();
    for _ in 0..1000 {
        let t = tasks.choose(&mut rng).unwrap();
        let id = t["id"].as_str().unwrap();
        let original: Vec<&str> = t["original_answer"].as_str().unwrap().split(' ').collect();
        let context = t["context"].as_str().unwrap();
        let (method, uri, body) = match rng.random_range(0..10) {
            0..=3 => {
                let a = rng.random_range(0..original.len());
                let b = rng.random_range(a + 1..=original.len());
                ("POST", format!("/api/tasks/{id}/revision"), Some(json!({"answer": original[a..b].join(" ")})))
            }
            4 => ("POST", format!("/api/tasks/{id}/revision"), Some(json!({"answer": "  "}))),
            5 => ("POST", format!("/api/tasks/{id}/revision"), Some(json!({"answer": "not in the passage at all"}))),
            6 => {
                let longer = context.split(' ').collect::<Vec<_>>().join(" ");
                ("POST", format!("/api/tasks/{id}/revision"), Some(json!({"answer": longer})))
            }
            7 => ("POST", format!("/api/tasks/{id}/skip"), None),
            8 => ("POST", format!("/api/tasks/{id}/reopen"), None),
            _ => ("POST", "/api/tasks/t-missing/skip".to_string(), None),
        };
        let (s, v) = call(&svc, method, &uri, body).await;
        *statuses.entry(s.as_u16()).or_default() += 1;
        if s == StatusCode::UNPROCESSABLE_ENTITY {
            reasons.insert(v["reason"].as_str().unwrap_or("?").to_string());
        }
    }

    let live = svc.snapshot();
    let replayed = open_service(&labels, tmp.path()).snapshot();
    ensure(live == replayed, || "replayed state differs from the live state".into())?;
    let want: BTreeSet<String> = ["empty", "not_substring", "longer_than_original"].map(String::from).into();
    ensure(reasons == want, || format!("422 reasons seen: {reasons:?}"))?;

    let fresh_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fresh = open_service(&labels, fresh_dir.path());
    let (s, _) = call(&fresh, "POST", "/api/export", Some(json!({"output_path": "unchanged.json"}))).await;
    ensure(s == StatusCode::OK, || format!("export returned {s}"))?;
    let exported = read_labels(&fresh_dir.path().join("exports/unchanged.json")).map_err(|e| format!("{e:#}"))?;
    let reference_path = fresh_dir.path().join("reference.json");
    write_labels(&reference_path, &labels).map_err(|e| format!("{e:#}"))?;
    let reference = read_labels(&reference_path).map_err(|e| format!("{e:#}"))?;
    ensure(exported == reference, || "zero-revision export differs from the input".into())?;
    ensure(exported.iter().zip(&labels).all(|(e, l)| e.answers == l.answers && e.question == l.question), || {
        "zero-revision export changed questions or answers".into()
    })?;
    Ok(format!("1000 requests (status counts {statuses:?}) replay exactly; 422 reasons {reasons:?}; zero-revision export equals input"))
}

fn annotation_service() -> Verdict {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| e.to_string())?;
    rt.block_on(annotation_replay())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 10] = [
        ("negative mining oracle", negative_mining),
        ("split arithmetic", split_arithmetic),
        ("metric oracles", metric_oracles),
        ("cost-benefit arithmetic", cost_benefit_cells),
        ("mean and sample deviation", mean_std),
        ("set-construction laws", set_laws),
        ("ROUGE matrix", rouge_matrix),
        ("pivot sweep", pivot_sweep),
        ("end-to-end pipeline", end_to_end),
        ("annotation service", annotation_service),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
