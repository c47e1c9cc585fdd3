//! One check per acceptance criterion, run sequentially so that the
//! wall-clock comparison in the end-to-end run is not disturbed by sibling
//! tests. Prints a PASS/FAIL line per criterion and fails if any failed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seltune::autodiff::Tape;
use seltune::data::{make_batches, random_split, split_sizes, weighted_sample, Batch, Example, Label, SamplerWeights};
use seltune::gradcheck::{gradcheck, random_problem, GradCheckOptions};
use seltune::labeler::{label_report, read_jsonl, read_reports, Label3, LabelerConfig, ReportIds};
use seltune::model::{classify, forward, loss};
use seltune::train::{auroc, roc_points, train_step, trapezoid};
use seltune::tuning::{apply_policy, AdamW, FreezePolicy, OptimizerHp};
use seltune::{GptConfig, HeadKind, ModelParams, TokenBatch};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn seltune(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seltune"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn csv_rows(text: &str) -> BTreeMap<String, BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    lines
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            let row = header.iter().zip(&cells).map(|(h, c)| (h.to_string(), c.to_string())).collect();
            (cells[0].to_string(), row)
        })
        .collect()
}

fn parameter_ledger(dir: &Path) -> Result<Outcome, String> {
    let table = csv_rows(&seltune(dir, &["count-params", "--model-cfg", "gpt2-small", "--convention", "paper", "--csv"])?);
    let want = [
        ("attention (per block)", 2_359_296u64),
        ("ffn (per block)", 4_718_592),
        ("layer norms (per block)", 3_072),
        ("block total (per block)", 7_080_960),
        ("embeddings", 38_597_376),
        ("final layer norm", 1_536),
        ("head", 1_538),
    ];
    let mut wrong = Vec::new();
    for (row, n) in want {
        let got = table.get(row).and_then(|r| r.get("selective")).cloned().unwrap_or_default();
        if got != n.to_string() {
            wrong.push(format!("{row} = {got}, expected {n}"));
        }
    }
    let cell = |row: &str| table[row]["selective"].parse::<f64>().map_err(|e| e.to_string());
    let fraction = cell("trainable")? / cell("total")?;
    if fraction >= 0.06 {
        wrong.push(format!("selective trainable fraction {fraction:.4}"));
    }
    Ok(if wrong.is_empty() {
        outcome(true, format!("all components exact, selective trainable {:.2}%", 100.0 * fraction))
    } else {
        outcome(false, wrong.join("; "))
    })
}

fn total_parameters(dir: &Path) -> Result<Outcome, String> {
    let table = csv_rows(&seltune(dir, &["count-params", "--model-cfg", "gpt2-small", "--convention", "full", "--csv"])?);
    let total: u64 = table["total"]["full"].parse().map_err(|e: std::num::ParseIntError| e.to_string())?;
    Ok(outcome((123_000_000..=125_000_000).contains(&total), format!("full-convention total {total}")))
}

fn gradient_check() -> Result<Outcome, String> {
    let cfg = GptConfig::tiny();
    let base = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    let opts = GradCheckOptions::default();
    let mut worst = Vec::new();
    let mut passed = true;
    for policy in FreezePolicy::STANDARD {
        let mut params = base.clone();
        apply_policy(&mut params, &policy).map_err(|e| e.to_string())?;
        let (batch, targets) = random_problem(&params, 2, 8, 0).map_err(|e| e.to_string())?;
        let report = gradcheck(&params, &batch, &targets, &opts, 0).map_err(|e| e.to_string())?;
        passed &= report.passed && report.max_rel_err < 1e-3;
        worst.push(format!("{} {:.2e} over {} tensors", policy.name(), report.max_rel_err, report.tensors.len()));
    }
    Ok(outcome(passed, worst.join(", ")))
}

fn random_examples(rng: &mut ChaCha8Rng, n: usize, vocab: u32, max_len: usize) -> Vec<Example> {
    (0..n)
        .map(|i| Example {
            note_id: i.to_string(),
            ids: (0..rng.random_range(1..=max_len)).map(|_| rng.random_range(0..vocab)).collect(),
            label: Label::Class(rng.random_range(0..2)),
        })
        .collect()
}

fn gradients(params: &ModelParams, batch: &Batch) -> Result<BTreeMap<String, Vec<f32>>, String> {
    let mut tape = Tape::new();
    let cache = forward(&mut tape, params, &batch.tokens, None).map_err(|e| e.to_string())?;
    let z = classify(&mut tape, params, cache.last_hidden).map_err(|e| e.to_string())?;
    let l = loss(&mut tape, params, z, &batch.targets).map_err(|e| e.to_string())?;
    let g = tape.backward(l).map_err(|e| e.to_string())?;
    Ok(g.params().map(|(k, v)| (params.specs()[k].name.clone(), v.to_vec())).collect())
}

fn freeze_semantics() -> Result<Outcome, String> {
    let cfg = GptConfig::tiny();
    let head = cfg.head;
    let mut params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).map_err(|e| e.to_string())?;
    apply_policy(&mut params, &FreezePolicy::Selective).map_err(|e| e.to_string())?;
    let initial = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let examples = random_examples(&mut rng, 64, 254, 32);
    let order: Vec<usize> = (0..examples.len()).collect();
    let batches = make_batches(&examples, &order, 32, 8, 255, head).map_err(|e| e.to_string())?;
    let mut opt = AdamW::new(&params, OptimizerHp { lr: 1e-3, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut dropout = ChaCha8Rng::seed_from_u64(3);
    for step in 0..100 {
        train_step(&mut params, &mut opt, &batches[step % batches.len()], &mut dropout).map_err(|e| e.to_string())?;
    }
    let mut changed_frozen = Vec::new();
    let mut moved_trainable = 0;
    for ((spec, now), (_, before)) in params.iter().zip(initial.iter()) {
        let same = now.data().iter().zip(before.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !now.requires_grad() && !same {
            changed_frozen.push(spec.name.clone());
        }
        moved_trainable += usize::from(now.requires_grad() && !same);
    }
    let batch = &batches[0];
    let selective = gradients(&params, batch)?;
    apply_policy(&mut params, &FreezePolicy::Full).map_err(|e| e.to_string())?;
    let full = gradients(&params, batch)?;
    let mut max_diff = 0.0f32;
    for (name, g) in &selective {
        let f = full.get(name).ok_or_else(|| format!("{name} missing from full gradients"))?;
        for (a, b) in g.iter().zip(f) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    let passed = changed_frozen.is_empty() && moved_trainable > 0 && max_diff <= 1e-6;
    Ok(outcome(
        passed,
        format!(
            "{} frozen tensors changed, {moved_trainable} trainable tensors moved, max |g_sel - g_full| = {max_diff:.1e} over {} tensors",
            changed_frozen.len(),
            selective.len()
        ),
    ))
}

const FUZZ_WORDS: &[&str] = &[
    "no", "not", "possible", "possibly", "likely", "cannot exclude", "without", "may represent", "free of", "clear",
    "effusion", "effusions", "pleural", "pneumonia", "opacity", "opacities", "consolidation", "atelectasis", "mass",
    "nodule", "edema", "cardiomegaly", "pneumothorax", "fracture", "lesion", "tube", "pacemaker", "support devices",
    "acute", "cardiopulmonary", "process", "abnormality", "no acute", "normal", "the", "and", "is", "are", "seen",
    "there", "but", ".", ";", ",", ":", "?", "3.5", "\n", "IMPRESSION:", "FINDINGS:",
];

fn fuzz_text(rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.05) {
        let n = rng.random_range(0..80);
        return (0..n).map(|_| char::from_u32(rng.random_range(0..0x800)).unwrap_or('?')).collect();
    }
    let n = rng.random_range(0..60);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(FUZZ_WORDS[rng.random_range(0..FUZZ_WORDS.len())]);
        s.push(if rng.random_bool(0.1) { '\n' } else { ' ' });
    }
    s
}

fn labeler_oracle() -> Result<Outcome, String> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let cfg = LabelerConfig::default_rules();
    let reports = read_reports(&fixtures.join("labeler_corpus.jsonl")).map_err(|e| e.to_string())?;
    let golden = read_jsonl(&fixtures.join("labeler_golden.jsonl")).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for (r, g) in reports.iter().zip(&golden) {
        let got = label_report(r.ids.clone(), &r.text, &cfg);
        let labels = g["labels"].as_object().ok_or("golden row without labels")?;
        for (name, label) in &got.conditions {
            let want = labels.get(name).map_or(Ok(Label3::Null), Label3::from_json).map_err(|e| e.to_string())?;
            mismatches += usize::from(*label != want);
        }
        for (k, v) in [
            ("y_no_finding_phrase", got.y_no_finding_phrase),
            ("label_any_disease_posonly", got.any_disease_posonly()),
            ("label_any_disease_pos_or_unc", got.any_disease_pos_or_unc()),
            ("label_no_finding_strict", got.no_finding_strict()),
        ] {
            mismatches += usize::from(g[k].as_u64() != Some(u64::from(v)));
        }
    }
    let golden_ok = reports.len() >= 30 && reports.len() == golden.len() && mismatches == 0;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let n = 100_000;
    for _ in 0..n {
        let text = fuzz_text(&mut rng);
        let r = label_report(ReportIds::default(), &text, &cfg);
        violations += r.conditions.iter().filter(|(_, l)| l.bin_posonly() > l.bin_pos_or_unc()).count();
        violations += usize::from(r.any_disease_posonly() > r.any_disease_pos_or_unc());
    }
    Ok(outcome(
        golden_ok && violations == 0,
        format!("{} fixture reports, {mismatches} mismatches; {violations} monotonicity violations over {n} fuzzed texts", reports.len()),
    ))
}

fn encoding_round_trip() -> Result<Outcome, String> {
    let expected = [(Label3::Pos, 1u8), (Label3::Neg, 0), (Label3::Unc, 2), (Label3::Null, 3)];
    let mut ok = expected.iter().all(|&(l, c)| l.encode() == c && Label3::decode(c).ok() == Some(l));
    ok &= Label3::ALL.iter().all(|&l| Label3::decode(l.encode()).ok() == Some(l));
    let decodable = (0..=u8::MAX).filter(|&c| Label3::decode(c).is_ok()).count();
    ok &= decodable == 4;
    Ok(outcome(ok, format!("4 states, {decodable} of 256 codes decode")))
}

fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            n += 1;
            continue;
        }
        p += 1;
        for (j, &lj) in labels.iter().enumerate() {
            if !lj {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2.0 * p as f64 * n as f64)
}

fn auroc_oracle() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut unequal, mut max_trap, mut instances) = (0, 0.0f64, 0);
    while instances < 1000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 3.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
            continue;
        }
        instances += 1;
        let a = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        unequal += usize::from(a != mann_whitney(&scores, &labels));
        let t = trapezoid(&roc_points(&scores, &labels).map_err(|e| e.to_string())?);
        max_trap = max_trap.max((t - a).abs());
    }
    Ok(outcome(
        unequal == 0 && max_trap <= 1e-12,
        format!("{instances} instances, {unequal} differ from Mann-Whitney, max |trapezoid - auroc| = {max_trap:.1e}"),
    ))
}

fn sampler_balance() -> Result<Outcome, String> {
    let classes: Vec<usize> = (0..1000).map(|i| usize::from(i % 10 == 0)).collect();
    let weights = SamplerWeights::from_classes(&classes).map_err(|e| e.to_string())?;
    let draws = weighted_sample(&weights, 10_000, &mut ChaCha8Rng::seed_from_u64(11)).map_err(|e| e.to_string())?;
    let minority = draws.iter().filter(|&&i| classes[i] == 1).count() as f64 / draws.len() as f64;
    let mut bad_sizes = Vec::new();
    for n in 3..=1000 {
        let want = (n * 7 / 10, n / 10, n - n * 7 / 10 - n / 10);
        let split = random_split(n, n as u64).map_err(|e| e.to_string())?;
        let got = (split.train.len(), split.val.len(), split.test.len());
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        all.sort_unstable();
        if got != want || split_sizes(n) != want || all != (0..n).collect::<Vec<_>>() {
            bad_sizes.push(n);
        }
    }
    Ok(outcome(
        (minority - 0.5).abs() <= 0.02 && bad_sizes.is_empty(),
        format!("minority fraction {minority:.4}; {} of 998 split sizes wrong", bad_sizes.len()),
    ))
}

const E2E_FILES: &[&str] = &[
    "reports.jsonl",
    "labels.jsonl",
    "out/table1.csv",
    "out/timing.csv",
    "out/tokenizer.json",
    "out/curves_head-only.csv",
    "out/curves_selective.csv",
    "out/curves_full.csv",
    "out/roc_head-only.csv",
    "out/roc_selective.csv",
    "out/roc_full.csv",
    "out/confusion_head-only.csv",
    "out/confusion_selective.csv",
    "out/confusion_full.csv",
];

/// Synthesize, weak-label and compare the three strategies on the tiny preset.
fn end_to_end(dir: &Path) -> Result<BTreeMap<String, BTreeMap<String, String>>, String> {
    seltune(dir, &["synth", "--reports", "2000", "--seed", "0", "--output", "reports.jsonl"])?;
    seltune(dir, &["label", "--input", "reports.jsonl", "--output", "labels.jsonl", "--with-text", "--strict"])?;
    #[rustfmt::skip]
    seltune(dir, &[
        "compare", "--data", "labels.jsonl", "--target", "label_any_disease_pos_or_unc",
        "--model-cfg", "tiny", "--seq-len", "64", "--batch", "8", "--epochs", "10", "--seed", "0",
        "--strategies", "head-only,selective,full", "--out", "out",
    ])?;
    let table = std::fs::read_to_string(dir.join("out/table1.csv")).map_err(|e| e.to_string())?;
    Ok(csv_rows(&table))
}

fn synthetic_end_to_end(dir: &Path) -> Result<Outcome, String> {
    let table = end_to_end(dir)?;
    let get = |s: &str, c: &str| -> Result<f64, String> {
        table.get(s).and_then(|r| r.get(c)).ok_or(format!("{s}/{c} missing"))?.parse().map_err(|e| format!("{e}"))
    };
    let (sel_acc, sel_auc) = (get("selective", "test_acc")?, get("selective", "auroc")?);
    let (head_acc, head_auc) = (get("head-only", "test_acc")?, get("head-only", "auroc")?);
    let minutes: Vec<f64> = ["head-only", "selective", "full"].iter().map(|s| get(s, "minutes_per_epoch")).collect::<Result<_, _>>()?;
    let checks = [
        ("selective acc >= 0.90", sel_acc >= 0.90),
        ("selective auroc >= 0.95", sel_auc >= 0.95),
        ("head-only acc < selective", head_acc < sel_acc),
        ("head-only auroc < selective", head_auc < sel_auc),
        ("time head-only < selective < full", minutes[0] < minutes[1] && minutes[1] < minutes[2]),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let mut detail = format!(
        "selective acc {sel_acc:.4} auroc {sel_auc:.4}; head-only acc {head_acc:.4} auroc {head_auc:.4}; s/epoch {:.2} < {:.2} < {:.2}",
        minutes[0] * 60.0,
        minutes[1] * 60.0,
        minutes[2] * 60.0
    );
    if !failed.is_empty() {
        detail.push_str(&format!("; failed: {}", failed.join(", ")));
    }
    Ok(outcome(failed.is_empty(), detail))
}

/// Drops wall-clock columns, which cannot repeat across runs.
fn without_timing(name: &str, text: &str) -> String {
    let drop = match name {
        "out/table1.csv" => Some("minutes_per_epoch"),
        "out/timing.csv" => Some("seconds"),
        n if n.starts_with("out/curves_") => Some("seconds"),
        _ => None,
    };
    let Some(column) = drop else { return text.to_string() };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let mut skip: Vec<usize> = header.iter().position(|h| *h == column).into_iter().collect();
    if name == "out/timing.csv" {
        skip.extend(header.iter().position(|h| *h == "total_minutes"));
    }
    std::iter::once(header.join(","))
        .chain(lines.map(|l| {
            l.split(',').enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, c)| c).collect::<Vec<_>>().join(",")
        }))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism(first: &Path, second: &Path) -> Result<Outcome, String> {
    end_to_end(second)?;
    let mut differing = Vec::new();
    let mut timing_only = Vec::new();
    for name in E2E_FILES {
        let a = std::fs::read_to_string(first.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read_to_string(second.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if a != b {
            if without_timing(name, &a) == without_timing(name, &b) {
                timing_only.push(*name);
            } else {
                differing.push(*name);
            }
        }
    }
    let mut detail = format!("{} files compared, {} differ", E2E_FILES.len(), differing.len());
    if !differing.is_empty() {
        detail.push_str(&format!(" ({})", differing.join(", ")));
    }
    if !timing_only.is_empty() {
        detail.push_str(&format!("; {} differ only in wall-clock columns", timing_only.len()));
    }
    Ok(outcome(differing.is_empty(), detail))
}

fn random_config(rng: &mut ChaCha8Rng) -> GptConfig {
    let n_head = rng.random_range(1..=4);
    let head = match rng.random_range(0..3) {
        0 => HeadKind::BinarySigmoid,
        1 => HeadKind::MultiClassSoftmax { classes: rng.random_range(2..=5) },
        _ => HeadKind::MultiLabelSigmoid { labels: rng.random_range(1..=4) },
    };
    GptConfig {
        n_vocab: rng.random_range(4..=64),
        n_ctx: rng.random_range(4..=24),
        n_embd: n_head * rng.random_range(2..=8),
        n_head,
        n_layer: rng.random_range(1..=3),
        d_ff: rng.random_range(4..=48),
        ..GptConfig::tiny()
    }
    .with_head(head)
}

fn hidden(params: &ModelParams, batch: &TokenBatch) -> Result<(Vec<f32>, Vec<f32>), String> {
    let mut tape = Tape::inference();
    let cache = forward(&mut tape, params, batch, None).map_err(|e| e.to_string())?;
    Ok((tape.value(cache.hidden).to_vec(), tape.value(cache.last_hidden).to_vec()))
}

fn causality_and_padding() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut causal_failures, mut padding_failures, mut max_pad_diff) = (0, 0, 0.0f32);
    for _ in 0..100 {
        let cfg = random_config(&mut rng);
        let mut params = ModelParams::zeros(&cfg).map_err(|e| e.to_string())?;
        for i in 0..params.len() {
            params.tensor_mut(i).data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        let v = cfg.n_vocab as u32;
        let t = cfg.n_ctx;
        let ids: Vec<u32> = (0..t).map(|_| rng.random_range(0..v)).collect();
        let a = TokenBatch::new(1, t, ids.clone(), vec![1; t]).map_err(|e| e.to_string())?;
        let cut = rng.random_range(0..t - 1);
        let mut changed = ids.clone();
        for id in &mut changed[cut + 1..] {
            *id = (*id + rng.random_range(1..v)) % v;
        }
        let b = TokenBatch::new(1, t, changed, vec![1; t]).map_err(|e| e.to_string())?;
        let prefix = (cut + 1) * cfg.n_embd;
        let (ha, _) = hidden(&params, &a)?;
        let (hb, _) = hidden(&params, &b)?;
        causal_failures += usize::from(ha[..prefix] != hb[..prefix]);

        let len = rng.random_range(1..t);
        let pad = rng.random_range(0..v);
        let short = TokenBatch::new(1, len, ids[..len].to_vec(), vec![1; len]).map_err(|e| e.to_string())?;
        let mut padded = ids[..len].to_vec();
        padded.resize(t, pad);
        let mask: Vec<u8> = (0..t).map(|i| u8::from(i < len)).collect();
        let long = TokenBatch::new(1, t, padded, mask).map_err(|e| e.to_string())?;
        let (_, la) = hidden(&params, &short)?;
        let (_, lb) = hidden(&params, &long)?;
        let diff = la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        max_pad_diff = max_pad_diff.max(diff);
        padding_failures += usize::from(diff > 1e-5);
    }
    Ok(outcome(
        causal_failures == 0 && padding_failures == 0,
        format!("100 configs: {causal_failures} causal failures, {padding_failures} padding failures (max diff {max_pad_diff:.1e})"),
    ))
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    std::fs::create_dir_all(&run1).unwrap();
    std::fs::create_dir_all(&run2).unwrap();

    type Check<'a> = Box<dyn FnOnce() -> Result<Outcome, String> + 'a>;
    let criteria: Vec<(u32, &str, Duration, Check)> = vec![
        (1, "parameter ledger", Duration::from_secs(1), Box::new(|| parameter_ledger(dir.path()))),
        (2, "total parameters", Duration::from_secs(1), Box::new(|| total_parameters(dir.path()))),
        (3, "gradient check", Duration::from_secs(120), Box::new(gradient_check)),
        (4, "freeze semantics", Duration::from_secs(120), Box::new(freeze_semantics)),
        (5, "labeler oracle", Duration::from_secs(60), Box::new(labeler_oracle)),
        (6, "label encoding", Duration::from_secs(1), Box::new(encoding_round_trip)),
        (7, "auroc oracle", Duration::from_secs(60), Box::new(auroc_oracle)),
        (8, "sampler and splits", Duration::from_secs(60), Box::new(sampler_balance)),
        (9, "synthetic end-to-end", Duration::from_secs(15 * 60), Box::new(|| synthetic_end_to_end(&run1))),
        (10, "determinism", Duration::from_secs(15 * 60), Box::new(|| determinism(&run1, &run2))),
        (11, "causality and padding", Duration::from_secs(120), Box::new(causality_and_padding)),
    ];

    let mut failed = Vec::new();
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let over = if elapsed > budget { format!(", over the {budget:?} budget") } else { String::new() };
        // Written to the handle directly so the line shows without --nocapture.
        let _ = writeln!(
            std::io::stdout(),
            "criterion {n:>2} {name}: {} ({detail}) [{:.2}s{over}]",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        if !passed {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
