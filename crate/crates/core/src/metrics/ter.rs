//! Translation Edit Rate with greedy block shifts.
//!
//! Insertions, deletions, substitutions and block shifts each cost one edit.
//! Shifts are searched greedily: at every round the shift that lowers the
//! edit distance the most is applied, until no shift helps. A block is only
//! a shift candidate when it matches a reference span word for word, both
//! the block and the target span contain at least one alignment error, and
//! the destination is next to an aligned reference word. Ties prefer longer
//! blocks, then the leftmost block, then the leftmost destination.

use crate::error::{Error, Result};
use crate::textcore::TokenSeq;

const MAX_SHIFT_SIZE: usize = 10;
const MAX_SHIFT_DIST: usize = 50;
const MAX_SHIFT_CANDIDATES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Match,
    Sub,
    /// Hypothesis word with no reference counterpart.
    HypExtra,
    /// Reference word missing from the hypothesis.
    RefMissing,
}

/// Edit counts behind a TER value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TerEdits {
    pub shifts: usize,
    /// Insertions + deletions + substitutions after all shifts.
    pub edits: usize,
    pub ref_len: usize,
}

impl TerEdits {
    pub fn total(&self) -> usize {
        self.shifts + self.edits
    }

    pub fn rate(&self) -> f64 {
        self.total() as f64 / self.ref_len as f64
    }
}

/// Plain word-level Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

type ShiftKey = (isize, usize, isize, isize);

/// Edit distance plus one optimal alignment trace, in hypothesis order.
fn edit_trace<T: PartialEq>(hyp: &[T], reference: &[T]) -> (usize, Vec<Op>) {
    let (n, m) = (hyp.len(), reference.len());
    let width = m + 1;
    let mut dp = vec![0usize; (n + 1) * width];
    for (j, cell) in dp[..width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        dp[i * width] = i;
        for j in 1..=m {
            let diag = dp[(i - 1) * width + j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            let up = dp[(i - 1) * width + j] + 1;
            let left = dp[i * width + j - 1] + 1;
            dp[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let same = hyp[i - 1] == reference[j - 1];
            if dp[(i - 1) * width + j - 1] + usize::from(!same) == here {
                ops.push(if same { Op::Match } else { Op::Sub });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + 1 == here {
            ops.push(Op::HypExtra);
            i -= 1;
        } else {
            ops.push(Op::RefMissing);
            j -= 1;
        }
    }
    ops.reverse();
    (dp[n * width + m], ops)
}

struct Alignment {
    /// For each reference position, the hypothesis position it is aligned
    /// to, or the last hypothesis position before it (-1 at the start).
    ref_to_hyp: Vec<isize>,
    ref_err: Vec<bool>,
    hyp_err: Vec<bool>,
}

fn alignment(ops: &[Op]) -> Alignment {
    let mut hyp_pos: isize = -1;
    let mut out = Alignment {
        ref_to_hyp: Vec::new(),
        ref_err: Vec::new(),
        hyp_err: Vec::new(),
    };
    for op in ops {
        match op {
            Op::Match | Op::Sub => {
                hyp_pos += 1;
                out.ref_to_hyp.push(hyp_pos);
                let err = *op == Op::Sub;
                out.hyp_err.push(err);
                out.ref_err.push(err);
            }
            Op::HypExtra => {
                hyp_pos += 1;
                out.hyp_err.push(true);
            }
            Op::RefMissing => {
                out.ref_to_hyp.push(hyp_pos);
                out.ref_err.push(true);
            }
        }
    }
    out
}

/// Moves `words[start..start+len]` so that it lands before original
/// position `target`.
fn perform_shift<T: Clone>(words: &[T], start: usize, len: usize, target: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(words.len());
    let block = &words[start..start + len];
    if target < start {
        out.extend_from_slice(&words[..target]);
        out.extend_from_slice(block);
        out.extend_from_slice(&words[target..start]);
        out.extend_from_slice(&words[start + len..]);
    } else if target > start + len {
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + len..target]);
        out.extend_from_slice(block);
        out.extend_from_slice(&words[target..]);
    } else {
        // target inside the block: counted as a position after removal
        let cut = (len + target).min(words.len());
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + len..cut]);
        out.extend_from_slice(block);
        out.extend_from_slice(&words[cut..]);
    }
    out
}

/// `(hyp_start, ref_start, len)` for every hypothesis block that equals a
/// reference span, up to the size and distance limits.
fn matching_blocks<T: PartialEq>(hyp: &[T], reference: &[T]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for start_h in 0..hyp.len() {
        for start_r in 0..reference.len() {
            if start_h.abs_diff(start_r) > MAX_SHIFT_DIST {
                continue;
            }
            let mut len = 0;
            while start_h + len < hyp.len()
                && start_r + len < reference.len()
                && len < MAX_SHIFT_SIZE
                && hyp[start_h + len] == reference[start_r + len]
            {
                len += 1;
                out.push((start_h, start_r, len));
            }
        }
    }
    out
}

/// The best single shift, as `(gain in edit distance, shifted words)`.
fn best_shift<T: PartialEq + Clone>(
    hyp: &[T],
    reference: &[T],
    checked: &mut usize,
) -> Option<(isize, Vec<T>)> {
    let (base, ops) = edit_trace(hyp, reference);
    let align = alignment(&ops);

    // (gain, len, -start_h, -target) compared lexicographically.
    let mut best: Option<(ShiftKey, Vec<T>)> = None;
    for (start_h, start_r, len) in matching_blocks(hyp, reference) {
        if !align.hyp_err[start_h..start_h + len].iter().any(|&e| e) {
            continue;
        }
        if !align.ref_err[start_r..start_r + len].iter().any(|&e| e) {
            continue;
        }
        if start_h <= start_r && start_r < start_h + len {
            continue;
        }
        let mut prev_target = None;
        for offset in -1..len as isize {
            let r = start_r as isize + offset;
            let target = if r < 0 {
                0
            } else {
                (align.ref_to_hyp[r as usize] + 1) as usize
            };
            if prev_target == Some(target) {
                continue;
            }
            prev_target = Some(target);

            let shifted = perform_shift(hyp, start_h, len, target);
            let gain = base as isize - levenshtein(&shifted, reference) as isize;
            *checked += 1;
            let key = (gain, len, -(start_h as isize), -(target as isize));
            if best.as_ref().is_none_or(|(k, _)| key > *k) {
                best = Some((key, shifted));
            }
        }
        if *checked >= MAX_SHIFT_CANDIDATES {
            break;
        }
    }
    best.map(|((gain, ..), words)| (gain, words))
}

/// Greedy-shift edit counts for turning `hyp` into `reference`.
pub fn ter_edits<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> Result<TerEdits> {
    if reference.is_empty() {
        return Err(Error::argument("TER reference is empty"));
    }
    let mut words = hyp.to_vec();
    let mut shifts = 0;
    let mut checked = 0;
    loop {
        let Some((gain, shifted)) = best_shift(&words, reference, &mut checked) else {
            break;
        };
        if checked >= MAX_SHIFT_CANDIDATES || gain <= 0 {
            break;
        }
        shifts += 1;
        words = shifted;
    }
    Ok(TerEdits {
        shifts,
        edits: levenshtein(&words, reference),
        ref_len: reference.len(),
    })
}

/// Translation edit rate of `hypothesis` against `reference`, as a ratio.
pub fn ter(hypothesis: &TokenSeq, reference: &TokenSeq) -> Result<f64> {
    ter_edits(hypothesis.tokens(), reference.tokens()).map(|e| e.rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_whitespace(s)
    }

    #[test]
    fn identical_is_zero() {
        assert_eq!(ter(&seq("a b c"), &seq("a b c")).unwrap(), 0.0);
    }

    #[test]
    fn one_insertion() {
        assert_eq!(ter(&seq("a b d"), &seq("a b c d")).unwrap(), 0.25);
    }

    #[test]
    fn block_shift_beats_edits() {
        let e = ter_edits(&["c", "d", "a", "b"], &["a", "b", "c", "d"]).unwrap();
        assert_eq!(e.shifts, 1);
        assert_eq!(e.edits, 0);
        assert_eq!(e.rate(), 0.25);
        assert_eq!(levenshtein(&["c", "d", "a", "b"], &["a", "b", "c", "d"]), 4);
    }

    #[test]
    fn disjoint_and_empty_hypothesis() {
        assert_eq!(ter(&seq("x"), &seq("a b")).unwrap(), 1.0);
        assert_eq!(ter(&TokenSeq::empty(), &seq("a b")).unwrap(), 1.0);
        assert!(ter(&seq("a"), &TokenSeq::empty()).is_err());
    }

    #[test]
    fn shift_helpers() {
        let w = ["a", "b", "c", "d", "e"];
        assert_eq!(perform_shift(&w, 3, 2, 0), ["d", "e", "a", "b", "c"]);
        assert_eq!(perform_shift(&w, 0, 2, 5), ["c", "d", "e", "a", "b"]);
        assert_eq!(perform_shift(&w, 1, 1, 2), ["a", "c", "b", "d", "e"]);
    }

    #[test]
    fn trace_is_consistent_with_distance() {
        let (d, ops) = edit_trace(&["a", "x", "c"], &["a", "b", "c", "d"]);
        assert_eq!(d, 2);
        let cost = ops.iter().filter(|o| **o != Op::Match).count();
        assert_eq!(cost, d);
    }
}
