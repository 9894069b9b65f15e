#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rapt_cli::PipelineConfig;

const WORDS: &[&str] = &[
    "how", "do", "i", "learn", "python", "quickly", "what", "is", "the", "best", "way", "to", "cook",
    "rice", "why", "sky", "blue", "can", "lose", "weight", "fast", "phone", "buy", "should", "which",
    "good", "book", "read", "start", "a", "business", "online", "money", "make", "improve", "english",
];

fn sentence(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let len = rng.gen_range(5..=12);
    (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect()
}

/// Rewrites roughly `rate` of the words, sometimes swapping two of them.
fn perturb(rng: &mut ChaCha8Rng, src: &[&'static str], rate: f64) -> Vec<&'static str> {
    let mut out: Vec<&str> = src
        .iter()
        .map(|w| if rng.gen_bool(rate) { *WORDS.choose(rng).unwrap() } else { *w })
        .collect();
    if out.len() > 2 && rng.gen_bool(0.5) {
        let i = rng.gen_range(0..out.len() - 1);
        out.swap(i, i + 1);
    }
    out
}

fn write_split(path: &Path, rows: &[(String, String, String)]) {
    let body: String = rows
        .iter()
        .map(|(id, s, t)| serde_json::json!({"id": id, "source": s, "target": t}).to_string() + "\n")
        .collect();
    fs::write(path, body).unwrap();
}

/// Writes `train.jsonl` and `test.jsonl` under `dir` with pairs spanning all
/// three novelty classes.
pub fn synthetic_corpus(dir: &Path, n_train: usize, n_test: usize, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |prefix: &str, n: usize| -> Vec<(String, String, String)> {
        (0..n)
            .map(|i| {
                let src = sentence(&mut rng);
                let rate = [0.0, 0.15, 0.3, 0.6][i % 4];
                let tgt = perturb(&mut rng, &src, rate);
                (format!("{prefix}{i}"), src.join(" ") + "?", tgt.join(" ") + "?")
            })
            .collect()
    };
    let train = make("tr", n_train);
    let test = make("te", n_test);
    let (tp, qp) = (dir.join("train.jsonl"), dir.join("test.jsonl"));
    write_split(&tp, &train);
    write_split(&qp, &test);
    (tp, qp)
}

pub fn config(dir: &Path, train: PathBuf, test: PathBuf, out: &str) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.data.train = Some(train);
    cfg.data.test = Some(test);
    cfg.out_dir = dir.join(out);
    cfg
}
