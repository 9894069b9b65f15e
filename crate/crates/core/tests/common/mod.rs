#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use rand::Rng;

/// Levenshtein by the textbook full-matrix recurrence. Kept separate from
/// the library's rolling-row version.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Every arrangement reachable by moving one contiguous block elsewhere.
fn block_moves(words: &[String]) -> Vec<Vec<String>> {
    let n = words.len();
    let mut out = Vec::new();
    for start in 0..n {
        for end in start + 1..=n {
            let block = &words[start..end];
            let mut rest: Vec<String> = words[..start].to_vec();
            rest.extend_from_slice(&words[end..]);
            for pos in 0..=rest.len() {
                if pos == start {
                    continue;
                }
                let mut moved = rest[..pos].to_vec();
                moved.extend_from_slice(block);
                moved.extend_from_slice(&rest[pos..]);
                out.push(moved);
            }
        }
    }
    out
}

/// Minimum over all block-move sequences of (#moves + edit distance).
pub fn exhaustive_ter_edits<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> usize {
    let hyp: Vec<String> = hyp.iter().map(|s| s.as_ref().to_owned()).collect();
    let reference: Vec<String> = reference.iter().map(|s| s.as_ref().to_owned()).collect();
    let mut dist: HashMap<Vec<String>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(hyp.clone(), 0);
    queue.push_back(hyp);
    let mut best = usize::MAX;
    while let Some(words) = queue.pop_front() {
        let d = dist[&words];
        if d >= best {
            continue;
        }
        best = best.min(d + edit_distance(&words, &reference));
        for next in block_moves(&words) {
            if !dist.contains_key(&next) {
                dist.insert(next.clone(), d + 1);
                queue.push_back(next);
            }
        }
    }
    best
}

/// Random (hypothesis, reference) with lengths in `0..=max_len` and
/// `1..=max_len` over a small alphabet.
pub fn random_pair<R: Rng>(rng: &mut R, max_len: usize, alphabet: u8) -> (Vec<String>, Vec<String>) {
    let mut draw = |min: usize| -> Vec<String> {
        let len = rng.gen_range(min..=max_len);
        (0..len)
            .map(|_| ((b'a' + rng.gen_range(0..alphabet)) as char).to_string())
            .collect()
    };
    let hyp = draw(0);
    let reference = draw(1);
    (hyp, reference)
}
