//! Verification suite: one test per release criterion, each printing a
//! PASS line once its assertions hold. Run with
//! `cargo test -p shufflebreak --test acceptance -- --nocapture`.

use shufflebreak::archive::TraceArchive;
use shufflebreak::campaign::{
    aggregate, compute_asr, render_report, run_campaign, Instruction,
    ReportFormat,
};
use shufflebreak::engine::{
    attack, run_attack, AttackConfig, AttackContext, AttackMode, PplGateConfig,
};
use shufflebreak::gateway::{
    ChatBackend, EndpointConfig, MockModelScript, ModelClient, RuleMatch,
    ScriptedBackend, ScriptedScorer,
};
use shufflebreak::img::{
    decode_image, fit_to_grid, shuffle_image, ImageBuffer, ProtectedRegion, CHANNELS,
};
use shufflebreak::judge::{Judge, JudgePromptTemplate, ToxicScore};
use shufflebreak::perm::seeded_rng;
use shufflebreak::synthetic::{
    self, keyword_judge_script, synthetic_image, synthetic_manifest, write_fixture,
    ShuffleProbeTarget, COMPLY_MARKER,
};
use shufflebreak::text::{
    shuffle_text, tokenize_words, TextShuffleKind, TextTools,
};
use rand::Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

fn wide_endpoint() -> EndpointConfig {
    EndpointConfig {
        max_concurrency: 16,
        ..Default::default()
    }
}

fn context_with(target: Arc<dyn ChatBackend>, judge_script: MockModelScript) -> AttackContext {
    let judge_client = ModelClient::new(
        Arc::new(ScriptedBackend::new("judge", judge_script)),
        &wide_endpoint(),
    );
    AttackContext {
        target: Arc::new(ModelClient::new(target, &wide_endpoint())),
        judge: Arc::new(Judge::new(judge_client, JudgePromptTemplate::builtin())),
        scorer: None,
        tools: TextTools::builtin(),
        archive: None,
    }
}

fn toy_world_context() -> AttackContext {
    context_with(Arc::new(ShuffleProbeTarget), keyword_judge_script())
}

fn word_multiset(text: &str) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for w in text.split_whitespace() {
        *counts.entry(w.to_string()).or_insert(0) += 1;
    }
    counts
}

fn toy_config(max_iter: u32, mode: AttackMode) -> AttackConfig {
    AttackConfig {
        max_iter,
        mode,
        seed: 0,
        ..Default::default()
    }
}

fn campaign_asr(traces: &[shufflebreak::engine::AttackTrace], config: &AttackConfig) -> f64 {
    aggregate("acceptance", traces, config).all.asr
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_mutation_invariants() {
    let started = Instant::now();
    let tools = TextTools::builtin();
    let words = synthetic::demo_words();
    let mut gen = seeded_rng(0xACC1);

    // 1,000 random texts under every shuffle kind preserve the multiset.
    for case in 0..1000u64 {
        let n = gen.gen_range(1..=24);
        let text: String = (0..n)
            .map(|_| words[gen.gen_range(0..words.len())])
            .collect::<Vec<_>>()
            .join(" ");
        let prompt = text.as_str().into();
        let seed = case ^ 0x5EED;
        for kind in [
            TextShuffleKind::WordWise,
            TextShuffleKind::Trigram,
            TextShuffleKind::WithinTrigram,
            TextShuffleKind::PosNounsAdj,
        ] {
            let (shuffled, perm) =
                shuffle_text(kind, &prompt, &tools, &mut seeded_rng(seed)).unwrap();
            assert_eq!(
                word_multiset(shuffled.as_str()),
                word_multiset(&text),
                "{kind} broke the word multiset"
            );
            let perm = perm.expect("word-level kinds return a permutation");
            let seq = tokenize_words(&prompt).unwrap();
            let applied = perm.apply(seq.words()).join(" ");
            assert_eq!(applied, shuffled.as_str(), "{kind} permutation mismatch");
        }
        // Token-wise: the decoded output re-encodes to the same piece multiset.
        let before = tools.tokenizer.encode(&text).unwrap();
        let (shuffled, _) =
            shuffle_text(TextShuffleKind::TokenWise, &prompt, &tools, &mut seeded_rng(seed))
                .unwrap();
        let after = tools.tokenizer.encode(shuffled.as_str()).unwrap();
        let count = |pieces: &[String]| {
            let mut m = BTreeMap::new();
            for p in pieces {
                *m.entry(p.clone()).or_insert(0usize) += 1;
            }
            m
        };
        assert_eq!(count(&before), count(&after), "token multiset broke");
    }

    // Single-word texts are identities under every kind.
    for kind in TextShuffleKind::ALL {
        let (out, _) = shuffle_text(kind, &"bomb".into(), &tools, &mut seeded_rng(3)).unwrap();
        assert_eq!(out.as_str(), "bomb", "{kind} mutated a single word");
    }

    // 100 random images per patch count preserve the pixel histogram;
    // a single patch is the identity.
    for (m, g) in [(1u32, 1u32), (4, 2), (9, 3), (16, 4), (25, 5), (64, 8)] {
        let side = g * 8;
        for i in 0..100u64 {
            let img = synthetic_image(side, side, i * 31 + m as u64);
            let (out, _) = shuffle_image(&img, m, &mut seeded_rng(i)).unwrap();
            assert_eq!(out.histogram(), img.histogram(), "m={m} histogram broke");
            if m == 1 {
                assert_eq!(out, img, "m=1 must be the identity");
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 30,
        "mutation invariants took {elapsed:?}, budget is 30s"
    );
    println!("ACCEPTANCE 01 (mutation invariants, {elapsed:?}): PASS");
}

// ---------------------------------------------------------------------------

/// Runs the bundled mock campaign into `out`, writing traces, images and
/// all three report renderings, exactly like `shufflebreak campaign --mock`.
async fn run_fixture_campaign(
    fixture: &Path,
    out: &Path,
    parallelism: usize,
    config: &AttackConfig,
) -> shufflebreak::campaign::CampaignReport {
    let manifest = shufflebreak::campaign::load_dataset(fixture).unwrap();
    let archive = Arc::new(TraceArchive::create(out.join("traces")).unwrap());
    let mut ctx = toy_world_context();
    ctx.archive = Some(archive);
    let traces = run_campaign(&manifest, &ctx, config, parallelism).await.unwrap();
    let report = aggregate(&manifest.name, &traces, config);
    for format in ReportFormat::ALL {
        std::fs::write(
            out.join(format!("report.{}", format.extension())),
            render_report(&report, format),
        )
        .unwrap();
    }
    report
}

fn snapshot_dir(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, into: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, into);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                into.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut map = BTreeMap::new();
    walk(root, root, &mut map);
    map
}

#[tokio::test]
async fn acceptance_02_fixed_seed_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = write_fixture(tmp.path().join("fixture"), 8, 3, 7).unwrap();
    let config = AttackConfig {
        seed: 7,
        ..Default::default()
    };

    let mut snapshots = Vec::new();
    for (label, parallelism) in [("run1-p1", 1usize), ("run2-p1", 1), ("run3-p8", 8)] {
        let out = tmp.path().join(label);
        std::fs::create_dir_all(&out).unwrap();
        run_fixture_campaign(&fixture, &out, parallelism, &config).await;
        snapshots.push(snapshot_dir(&out));
    }
    assert!(!snapshots[0].is_empty());
    assert!(
        snapshots[0].keys().any(|k| k.ends_with(".png")),
        "expected mutated PNGs in the archive"
    );
    assert_eq!(snapshots[0], snapshots[1], "re-run changed bytes");
    assert_eq!(snapshots[0], snapshots[2], "parallelism changed bytes");
    println!("ACCEPTANCE 02 (fixed-seed byte determinism across runs and parallelism): PASS");
}

// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_03_optimization_loop_contract() {
    let instr = Instruction {
        id: "contract".to_string(),
        category: "01-IA".to_string(),
        text: "about access acid against agent".into(),
        image_path: None,
        protected_region: None,
    };

    // Scripted verdicts 2, 3, 5 with threshold 4: exactly three queries.
    let ctx = context_with(
        Arc::new(ScriptedBackend::new("t", MockModelScript::constant("reply"))),
        MockModelScript::sequence(&["2", "3", "5"]),
    );
    let trace = run_attack(&instr, &ctx, &AttackConfig::default()).await;
    assert_eq!(trace.target_queries, 3);
    assert!(trace.success);
    assert_eq!(trace.best_index, Some(3));
    assert_eq!(trace.best_score.value(), 5);

    // A constant-3 judge runs the full budget and ties break first.
    let ctx = context_with(
        Arc::new(ScriptedBackend::new("t", MockModelScript::constant("reply"))),
        MockModelScript::constant("3"),
    );
    let trace = run_attack(&instr, &ctx, &AttackConfig::default()).await;
    assert_eq!(trace.target_queries, 10);
    assert!(!trace.success);
    assert_eq!(trace.best_score.value(), 3);
    assert_eq!(trace.best_index, Some(1));
    println!("ACCEPTANCE 03 (optimization loop early-stop and tie-break contract): PASS");
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_asr_oracle_equivalence() {
    let mut gen = seeded_rng(0xA5A5);
    for _ in 0..10_000 {
        let len = gen.gen_range(1..=50);
        let raw: Vec<u8> = (0..len).map(|_| gen.gen_range(1..=5)).collect();
        let scores: Vec<ToxicScore> = raw.iter().map(|&v| ToxicScore::new(v).unwrap()).collect();
        let tau_raw = gen.gen_range(1..=5);
        let tau = ToxicScore::new(tau_raw).unwrap();
        let brute = raw.iter().filter(|&&v| v >= tau_raw).count() as f64 / len as f64;
        assert_eq!(compute_asr(&scores, tau).unwrap(), brute);
    }

    let fixed: Vec<ToxicScore> = [5u8, 4, 3, 1]
        .iter()
        .map(|&v| ToxicScore::new(v).unwrap())
        .collect();
    assert_eq!(
        compute_asr(&fixed, ToxicScore::new(4).unwrap()).unwrap(),
        0.5
    );

    let mut gen = seeded_rng(0x5A5A);
    for _ in 0..200 {
        let len = gen.gen_range(1..=50);
        let scores: Vec<ToxicScore> = (0..len)
            .map(|_| ToxicScore::new(gen.gen_range(1..=5)).unwrap())
            .collect();
        let rates: Vec<f64> = (1..=5u8)
            .map(|t| compute_asr(&scores, ToxicScore::new(t).unwrap()).unwrap())
            .collect();
        assert!(rates.windows(2).all(|w| w[0] >= w[1]), "ASR not monotone");
    }
    println!("ACCEPTANCE 04 (ASR brute-force equivalence and monotonicity): PASS");
}

// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_05_shuffle_inconsistency_world_ordering() {
    let started = Instant::now();
    let manifest = synthetic_manifest(100, 3, 11);

    let mut asr = BTreeMap::new();
    for (label, config) in [
        ("original", toy_config(10, AttackMode::Original)),
        ("single-shuffle", toy_config(1, AttackMode::Both)),
        ("optimized", toy_config(10, AttackMode::Both)),
    ] {
        let ctx = toy_world_context();
        let traces = run_campaign(&manifest, &ctx, &config, 8).await.unwrap();
        assert!(traces.iter().all(|t| t.error.is_none()));
        asr.insert(label, campaign_asr(&traces, &config));
    }

    let (original, single, optimized) = (asr["original"], asr["single-shuffle"], asr["optimized"]);
    assert_eq!(original, 0.0, "canonical inputs must all be refused");
    assert!(
        original < single && single < optimized,
        "expected ordering broke: {original} vs {single} vs {optimized}"
    );
    assert!(optimized >= 0.95, "optimized ASR {optimized} below 0.95");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget is 60s");
    println!(
        "ACCEPTANCE 05 (toy-world ASR ordering {original:.2} < {single:.2} < {optimized:.2}, {elapsed:?}): PASS"
    );
}

// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_06_query_budget_monotonicity() {
    let manifest = synthetic_manifest(60, 3, 13);
    let mut means = Vec::new();
    for max_iter in [1u32, 3, 5, 10, 20] {
        let config = toy_config(max_iter, AttackMode::Both);
        let ctx = toy_world_context();
        let traces = run_campaign(&manifest, &ctx, &config, 8).await.unwrap();
        let mean = traces
            .iter()
            .map(|t| t.best_score.value() as f64)
            .sum::<f64>()
            / traces.len() as f64;
        means.push((max_iter, mean));
    }
    for pair in means.windows(2) {
        assert!(
            pair[0].1 <= pair[1].1,
            "mean best score decreased: {:?} -> {:?}",
            pair[0],
            pair[1]
        );
    }
    assert!(means[0].1 < means.last().unwrap().1, "budget made no difference");
    println!("ACCEPTANCE 06 (mean best score non-decreasing in max_iter {means:?}): PASS");
}

// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_07_ablation_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = write_fixture(tmp.path(), 40, 3, 17).unwrap();
    let manifest = shufflebreak::campaign::load_dataset(&fixture).unwrap();

    // TextOnly sends the original image bytes untouched.
    let logger = Arc::new(ScriptedBackend::new("t", MockModelScript::constant("no")));
    let ctx = context_with(logger.clone(), keyword_judge_script());
    let one = &manifest.entries[0];
    let original_bytes = std::fs::read(one.image_path.as_ref().unwrap()).unwrap();
    run_attack(one, &ctx, &toy_config(3, AttackMode::TextOnly)).await;
    let seen = logger.instrumentation().requests();
    assert!(!seen.is_empty());
    for req in &seen {
        assert_eq!(
            req.image_bytes.as_deref(),
            Some(original_bytes.as_slice()),
            "TextOnly altered the image"
        );
    }

    // ImageOnly sends the original text verbatim.
    let logger = Arc::new(ScriptedBackend::new("t", MockModelScript::constant("no")));
    let ctx = context_with(logger.clone(), keyword_judge_script());
    run_attack(one, &ctx, &toy_config(3, AttackMode::ImageOnly)).await;
    for req in &logger.instrumentation().requests() {
        assert_eq!(req.text, one.text.as_str(), "ImageOnly altered the text");
    }

    // On the text-sensitive toy target, shuffling text beats shuffling images.
    let mut asr = Vec::new();
    for mode in [AttackMode::TextOnly, AttackMode::ImageOnly] {
        let config = toy_config(10, mode);
        let ctx = toy_world_context();
        let traces = run_campaign(&manifest, &ctx, &config, 8).await.unwrap();
        assert!(traces.iter().all(|t| t.error.is_none()));
        asr.push(campaign_asr(&traces, &config));
    }
    assert!(
        asr[0] > asr[1],
        "TextOnly ASR {} must beat ImageOnly ASR {}",
        asr[0],
        asr[1]
    );
    println!(
        "ACCEPTANCE 07 (ablation modes bit-exact passthrough; TextOnly {:.2} > ImageOnly {:.2}): PASS",
        asr[0], asr[1]
    );
}

// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_08_adaptive_perplexity_gate() {
    // Texts of six ascending words form two trigram blocks. The scorer gives
    // 50 to candidates whose first block stayed contiguous (any trigram
    // shuffle) and 900 otherwise, modelling a detector that flags the
    // heavier word-wise scramble.
    let manifest = synthetic_manifest(10, 6, 19);
    let gate = PplGateConfig {
        ppl_threshold: 100.0,
        ..Default::default()
    };

    for instr in &manifest.entries {
        let words: Vec<&str> = instr.text.as_str().split_whitespace().collect();
        let block_a = words[0..3].join(" ");
        let block_b = words[3..6].join(" ");
        let scorer = ScriptedScorer::with_rules(
            vec![(RuleMatch::Contains(block_a.clone()), 50.0)],
            900.0,
        );
        let target = Arc::new(ScriptedBackend::new("t", MockModelScript::constant("no")));
        let mut ctx = context_with(target.clone(), keyword_judge_script());
        ctx.scorer = Some(Arc::new(scorer));
        let config = AttackConfig {
            max_iter: 5,
            ppl_gate: Some(gate.clone()),
            ..toy_config(5, AttackMode::Both)
        };
        let trace = attack(instr, &ctx, &config).await;
        assert!(trace.error.is_none(), "{:?}", trace.error);
        assert_eq!(trace.target_queries, 5);
        let orders = [
            format!("{block_a} {block_b}"),
            format!("{block_b} {block_a}"),
        ];
        for req in &target.instrumentation().requests() {
            assert!(
                orders.contains(&req.text),
                "target-bound text `{}` is not a trigram shuffle",
                req.text
            );
        }
    }

    // An always-failing scorer blocks the gate before any target query.
    let instr = &manifest.entries[0];
    let target = Arc::new(ScriptedBackend::new("t", MockModelScript::constant("no")));
    let mut ctx = context_with(target.clone(), keyword_judge_script());
    ctx.scorer = Some(Arc::new(ScriptedScorer::constant(900.0)));
    let config = AttackConfig {
        ppl_gate: Some(PplGateConfig {
            ppl_threshold: 100.0,
            max_gate_attempts: 5,
            ..Default::default()
        }),
        ..AttackConfig::default()
    };
    let trace = attack(instr, &ctx, &config).await;
    let gate_summary = trace.gate.as_ref().unwrap();
    assert!(gate_summary.blocked);
    assert_eq!(gate_summary.scorer_queries, 5);
    assert_eq!(trace.target_queries, 0);
    assert_eq!(target.instrumentation().request_count(), 0);
    println!("ACCEPTANCE 08 (adaptive gate: trigram-only traffic; blocked gate sends nothing): PASS");
}

// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_09_typography_strip_preservation() {
    let tmp = tempfile::tempdir().unwrap();
    let image = synthetic_image(60, 60, 99);
    let image_path = tmp.path().join("typo.png");
    shufflebreak::img::save_png(&image, &image_path).unwrap();
    let fitted = fit_to_grid(&image, 2).unwrap();
    let strip_from = |img: &ImageBuffer| -> Vec<u8> {
        let y0 = (0.7 * img.height() as f64).round() as u32;
        let mut strip = Vec::new();
        for y in y0..img.height() {
            for x in 0..img.width() {
                strip.extend(img.pixel(x, y));
            }
        }
        strip
    };
    let expected = strip_from(&fitted);

    for seed in 0..100u64 {
        let instr = Instruction {
            id: format!("typo-{seed}"),
            category: "typo".to_string(),
            text: "about access acid".into(),
            image_path: Some(image_path.clone()),
            protected_region: Some(ProtectedRegion::bottom_strip()),
        };
        let logger = Arc::new(ScriptedBackend::new("t", MockModelScript::constant("no")));
        let ctx = context_with(logger.clone(), keyword_judge_script());
        let config = AttackConfig {
            max_iter: 1,
            seed,
            ..toy_config(1, AttackMode::Both)
        };
        let trace = run_attack(&instr, &ctx, &config).await;
        assert!(trace.error.is_none());
        let sent = logger.instrumentation().requests();
        let png = sent[0].image_bytes.as_ref().expect("image attached");
        let decoded = decode_image(png).unwrap();
        assert_eq!(
            strip_from(&decoded),
            expected,
            "typography strip broke at seed {seed}"
        );
        assert_eq!(decoded.data().len(), 60 * 60 * CHANNELS);
    }
    println!("ACCEPTANCE 09 (bottom-strip typography bit-identical across 100 seeds): PASS");
}

// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_10_report_goldens() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = synthetic::write_demo_fixture(tmp.path().join("fixture"), 0).unwrap();
    let out = tmp.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    let config = AttackConfig::default();
    let report = run_fixture_campaign(&fixture, &out, 4, &config).await;
    assert!(report.all.n > 0);

    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for format in ReportFormat::ALL {
        let name = format!("report.{}", format.extension());
        let produced = std::fs::read(out.join(&name)).unwrap();
        let golden = std::fs::read(golden_dir.join(&name))
            .unwrap_or_else(|e| panic!("missing golden {name}: {e}"));
        assert_eq!(
            produced, golden,
            "{name} drifted from the frozen golden rendering"
        );
    }

    // The renderings carry 2-decimal percentages and a union ALL row.
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let all_line = csv
        .lines()
        .find(|l| l.starts_with("ALL,"))
        .expect("ALL row present");
    let asr_field = all_line.split(',').nth(3).unwrap();
    assert!(
        asr_field.split('.').nth(1).map(str::len) == Some(2),
        "ASR `{asr_field}` is not a 2-decimal percentage"
    );
    let n_all: usize = all_line.split(',').nth(1).unwrap().parse().unwrap();
    let n_sum: usize = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("ALL,") && !l.is_empty())
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(n_all, n_sum, "ALL row is not the union of the categories");
    println!("ACCEPTANCE 10 (frozen report goldens reproduced byte-for-byte): PASS");
}

// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_09b_judged_question_is_always_the_original() {
    // Companion check: the judge must see the original question even while
    // the target sees only shuffled text.
    let judge_backend = Arc::new(ScriptedBackend::new("judge", MockModelScript::constant("1")));
    let judge_client = ModelClient::new(judge_backend.clone(), &wide_endpoint());
    let ctx = AttackContext {
        target: Arc::new(ModelClient::new(Arc::new(ShuffleProbeTarget), &wide_endpoint())),
        judge: Arc::new(Judge::new(judge_client, JudgePromptTemplate::builtin())),
        scorer: None,
        tools: TextTools::builtin(),
        archive: None,
    };
    let instr = Instruction {
        id: "orig".to_string(),
        category: "c".to_string(),
        text: "about access acid against agent alarm".into(),
        image_path: None,
        protected_region: None,
    };
    let trace = run_attack(&instr, &ctx, &toy_config(4, AttackMode::Both)).await;
    assert!(trace.error.is_none());
    for req in &judge_backend.instrumentation().requests() {
        assert!(
            req.text.contains(instr.text.as_str()),
            "judge prompt lost the original question"
        );
    }
    assert!(!COMPLY_MARKER.is_empty());
    println!("ACCEPTANCE 09b (judge always sees the original question): PASS");
}
