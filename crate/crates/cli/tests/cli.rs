mod support;

use std::fs;
use std::net::TcpListener;
use std::path::Path;

use rapt_cli::commands::{
    cmd_eval, cmd_generate, cmd_index, cmd_label, cmd_params, generations_path, EMBEDDINGS_FILE, SNAPSHOT_FILE,
};
use rapt_cli::{run, GenerateMode, PipelineConfig};
use rapt_core::backend::{Backend, MOCK_EMBEDDING_DIM};
use rapt_core::novelty::NoveltyClass;
use rapt_core::promptkit::{Payload, SegmentKind};
use rapt_core::retrieval::{ids_sidecar_path, read_embeddings_bin};

fn toy(dir: &Path) -> PipelineConfig {
    let train = dir.join("train.jsonl");
    fs::write(
        &train,
        concat!(
            "{\"id\":\"a\",\"source\":\"how do i learn python\",\"target\":\"how do i learn python\"}\n",
            "{\"id\":\"b\",\"source\":\"what is the best phone\",\"target\":\"which phone should i buy\"}\n",
            "{\"id\":\"c\",\"source\":\"why is the sky blue\",\"target\":\"why is the sky so blue\"}\n",
        ),
    )
    .unwrap();
    let test = dir.join("test.jsonl");
    fs::write(
        &test,
        concat!(
            "{\"id\":\"q1\",\"source\":\"how do i learn java\",\"target\":\"how can i learn java\"}\n",
            "{\"id\":\"q2\",\"source\":\"why is the sea blue\",\"target\":\"what makes the sea blue\"}\n",
        ),
    )
    .unwrap();
    support::config(dir, train, test, "out")
}

fn mock(cfg: &PipelineConfig) -> Backend {
    Backend::connect(&cfg.backend).unwrap()
}

#[test]
fn label_toy_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let s = cmd_label(&cfg, None, None).unwrap();
    assert_eq!(s.labeled.len(), 3);
    assert_eq!(s.histogram.values().sum::<usize>(), 3);
    assert!(s.histogram[&NoveltyClass::Low] >= 1);
    let first = fs::read(&s.output).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 3);
    assert!(s.output.with_extension("meta.json").exists());

    let again = dir.path().join("relabeled.jsonl");
    cmd_label(&cfg, Some(&s.output), Some(&again)).unwrap();
    assert_eq!(fs::read(&again).unwrap(), first);
}

#[test]
fn index_with_mock_embedder() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = support::synthetic_corpus(dir.path(), 5, 2, 1);
    let cfg = support::config(dir.path(), train, test, "out");
    let s = cmd_index(&cfg, &mock(&cfg), None, None).unwrap();
    assert_eq!((s.count, s.dim), (5, MOCK_EMBEDDING_DIM));
    let bytes = fs::read(&s.output).unwrap();
    assert_eq!(&bytes[..8], b"RAPTEMB1");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
    let table = read_embeddings_bin(&s.output, &ids_sidecar_path(&s.output)).unwrap();
    assert_eq!(table.len(), 5);
    cmd_index(&cfg, &mock(&cfg), None, None).unwrap();
    assert_eq!(fs::read(&s.output).unwrap(), bytes);
}

#[test]
fn rapt_prompts_carry_two_examples_before_the_query() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let g = cmd_generate(&cfg, &mock(&cfg), GenerateMode::Rapt, None, None).unwrap();
    assert_eq!(g.records.len(), 2);
    for (layout, prompt) in g.layouts.iter().zip(&g.prompts) {
        assert_eq!(layout.examples(), 2);
        assert!(layout.retrieved[0].similarity <= layout.retrieved[1].similarity);
        let query = prompt.rfind("Input:").unwrap();
        assert_eq!(prompt[..query].matches("Input:").count(), 2);
    }
    // mock echo returns the query line
    assert_eq!(g.records[0].output, "how do i learn java");
}

#[test]
fn ncrapt_queries_use_requested_class_slots() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy(dir.path());
    cfg.query_class = NoveltyClass::High;
    let g = cmd_generate(&cfg, &mock(&cfg), GenerateMode::Ncrapt, None, None).unwrap();
    let high = cfg.slot_spec(true).prefix_slots(Some(NoveltyClass::High)).unwrap();
    for l in &g.layouts {
        let q = &l.segments[l.segments.len() - 3];
        assert_eq!((q.kind, q.class), (SegmentKind::ClassPrefix, Some(NoveltyClass::High)));
        assert_eq!(q.payload, Payload::Slots(high));
    }
    assert!(g.prompts[0].ends_with("Paraphrase: (high)"));
    assert_eq!(g.unparsed, 0);
}

#[test]
fn empty_index_degenerates_to_zero_examples() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy(dir.path());
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    cfg.data.train = Some(empty);
    let g = cmd_generate(&cfg, &mock(&cfg), GenerateMode::Rapt, None, None).unwrap();
    assert!(g.layouts.iter().all(|l| l.examples() == 0));
    assert_eq!(g.records.len(), 2);
}

#[test]
fn budget_cap_drops_examples() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy(dir.path());
    cfg.max_prompt_tokens = Some(248 + 16 * 2 + 12);
    let g = cmd_generate(&cfg, &mock(&cfg), GenerateMode::Rapt, None, None).unwrap();
    assert!(g.requests.iter().all(|r| r.dropped_examples >= 1));
    assert!(g.requests.iter().all(|r| r.prompt_n <= 248 + 16 * 2 + 12));
}

#[test]
fn eval_copy_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let b = mock(&cfg);
    let copy = cmd_generate(&cfg, &b, GenerateMode::Copy, None, None).unwrap();
    let e = cmd_eval(&cfg, Some(&b), &copy.output, None, "Copy").unwrap();
    assert_eq!(e.report.self_bleu, 100.0);
    assert_eq!(e.report.self_ter, 0.0);
    assert!(e.table.starts_with("Method"));
    let csv = fs::read_to_string(&e.output).unwrap();
    assert!(csv.starts_with("Method,BERT,Self-TER,Self-BLEU,BLEU,iBLEU,SARI\nCopy,"));
    let again = cmd_eval(&cfg, Some(&b), &copy.output, None, "Copy").unwrap();
    assert_eq!(again.report, e.report);

    let gt = cmd_generate(&cfg, &b, GenerateMode::GroundTruth, None, None).unwrap();
    assert_eq!(gt.output, generations_path(&cfg, GenerateMode::GroundTruth));
    let e = cmd_eval(&cfg, None, &gt.output, None, "Ground Truth").unwrap();
    assert_eq!(e.report.bleu, 100.0);
    assert_eq!(e.report.bert, None);
}

#[test]
fn eval_requires_every_test_id() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let gens = dir.path().join("g.jsonl");
    fs::write(&gens, "{\"id\":\"q1\",\"prompt_n\":0,\"output\":\"x\"}\n").unwrap();
    assert!(cmd_eval(&cfg, None, &gens, None, "m").is_err());
}

#[test]
fn params_custom_shape_matches_closed_forms() {
    let (l, d, v, p) = (6u64, 512u64, 50_257u64, 1_024u64);
    let t = cmd_params(Some((l, d, v, p))).unwrap();
    let per_layer = (3 * d * d + 3 * d) + (d * d + d) + (4 * d * d + 4 * d) + (4 * d * d + d) + 4 * d;
    let lora = l * 2 * 8 * 2 * d;
    assert_eq!(t.get("Fine Tuning", "custom"), Some(v * d + p * d + l * per_layer + 2 * d));
    assert_eq!(t.get("LoRA Tuning", "custom"), Some(lora));
    assert_eq!(t.get("Prompt Tuning", "custom"), Some(264 * d));
    assert_eq!(t.get("RAPT", "custom"), Some(264 * d + lora));
    assert_eq!(t.get("NC-RAPT", "custom"), Some((248 + 3 * 16) * d + lora));
    assert_eq!(t.get("Adapter Tuning", "custom"), Some(l * (2 * d * 512 + 512 + d) + (2 * l + 1) * 2 * d));
}

fn write_config(dir: &Path, extra: &str) -> String {
    let cfg = toy(dir);
    let path = dir.join("c.toml");
    fs::write(
        &path,
        format!(
            "{extra}\n[data]\ntrain = {:?}\ntest = {:?}\n",
            cfg.data.train.unwrap(),
            cfg.data.test.unwrap()
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(run(["rapt", "params"]), 0);
    assert_eq!(run(["rapt", "frobnicate"]), 1);
    assert_eq!(run(["rapt", "--config", "/nonexistent.toml", "label"]), 1);
    assert_eq!(run(["rapt", "--config", &cfg, "--out", out, "eval", "--generations", "/nonexistent.jsonl"]), 2);
    assert_eq!(run(["rapt", "--config", &cfg, "--out", out, "pipeline", "--mode", "ncrapt", "--class", "low"]), 0);
    assert!(dir.path().join("out").join(SNAPSHOT_FILE).exists());
    assert!(dir.path().join("out").join(EMBEDDINGS_FILE).exists());

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let down = write_config(
        dir.path(),
        &format!("[backend]\ngeneration_url = \"http://127.0.0.1:{port}/\"\nretry_limit = 0\ntimeout_ms = 2000"),
    );
    let out2 = dir.path().join("out2");
    assert_eq!(run(["rapt", "--config", &down, "--out", out2.to_str().unwrap(), "generate", "--mode", "manual"]), 3);
}

#[test]
fn snapshot_reflects_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("o");
    let code = run([
        "rapt",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
        "--normalization-lowercase",
        "false",
        "label",
    ]);
    assert_eq!(code, 0);
    let snap: PipelineConfig = toml::from_str(&fs::read_to_string(out.join(SNAPSHOT_FILE)).unwrap()).unwrap();
    assert_eq!(snap.seed, 9);
    assert!(!snap.normalization.lowercase);
    assert_eq!(snap.retrieval.k, 2);
}
