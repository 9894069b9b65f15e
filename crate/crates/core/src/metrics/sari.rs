//! SARI: n-gram scores for the keep, add and delete operations a prediction
//! applies to its source, judged against references.
//!
//! KEEP and ADD are F1 scores, DELETE is precision only. Counts of source and
//! prediction n-grams are replicated once per reference, as in the released
//! scorer. Undefined ratios (0/0) count as 0, except that KEEP is 1 when the
//! source, the prediction and every reference are identical.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::textcore::{ngrams, TokenSeq, MAX_NGRAM_ORDER};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SariScore {
    pub keep: [f64; MAX_NGRAM_ORDER],
    pub delete: [f64; MAX_NGRAM_ORDER],
    pub add: [f64; MAX_NGRAM_ORDER],
    /// Percent in `[0, 100]`.
    pub score: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

type Counts<'a> = HashMap<&'a [String], usize>;

fn counts<'a>(seq: &'a TokenSeq, n: usize, scale: usize) -> Result<Counts<'a>> {
    Ok(ngrams(seq, n)?
        .counts()
        .iter()
        .map(|(g, c)| (*g, c * scale))
        .collect())
}

fn get(c: &Counts<'_>, g: &[String]) -> usize {
    c.get(g).copied().unwrap_or(0)
}

/// `(keep, delete, add)` for one n-gram order.
fn order_scores(
    source: &TokenSeq,
    prediction: &TokenSeq,
    references: &[TokenSeq],
    n: usize,
) -> Result<(f64, f64, f64)> {
    let numref = references.len();
    let src = counts(source, n, numref)?;
    let pred = counts(prediction, n, numref)?;
    let mut refs: Counts<'_> = HashMap::new();
    for r in references {
        for (g, c) in counts(r, n, 1)? {
            *refs.entry(g).or_insert(0) += c;
        }
    }

    // KEEP
    let mut keep_prec_sum = 0.0;
    let mut keep_good_total = 0usize;
    let mut keep_distinct = 0usize;
    for (g, &s) in &src {
        let kept = s.min(get(&pred, g));
        if kept == 0 {
            continue;
        }
        keep_distinct += 1;
        let good = kept.min(get(&refs, g));
        keep_prec_sum += good as f64 / kept as f64;
        keep_good_total += good;
    }
    let keep_all_total: usize = src.iter().map(|(g, &s)| s.min(get(&refs, g))).sum();
    let keep = f1(
        ratio(keep_prec_sum, keep_distinct as f64),
        ratio(keep_good_total as f64, keep_all_total as f64),
    );

    // DELETE
    let mut del_prec_sum = 0.0;
    let mut del_distinct = 0usize;
    for (g, &s) in &src {
        let deleted = s.saturating_sub(get(&pred, g));
        if deleted == 0 {
            continue;
        }
        del_distinct += 1;
        let good = deleted.saturating_sub(get(&refs, g));
        del_prec_sum += good as f64 / deleted as f64;
    }
    let delete = ratio(del_prec_sum, del_distinct as f64);

    // ADD (sets)
    let added: HashSet<&[String]> = pred.keys().filter(|g| !src.contains_key(*g)).copied().collect();
    let add_all = refs.keys().filter(|g| !src.contains_key(*g)).count();
    let add_good = added.iter().filter(|g| refs.contains_key(*g)).count();
    let add = f1(
        ratio(add_good as f64, added.len() as f64),
        ratio(add_good as f64, add_all as f64),
    );

    Ok((keep, delete, add))
}

/// Sentence-level SARI.
pub fn sari_sentence(
    source: &TokenSeq,
    prediction: &TokenSeq,
    references: &[TokenSeq],
) -> Result<SariScore> {
    if references.is_empty() {
        return Err(Error::argument("SARI needs at least one reference"));
    }
    let identity = source == prediction && references.iter().all(|r| r == source);
    let mut out = SariScore {
        keep: [0.0; MAX_NGRAM_ORDER],
        delete: [0.0; MAX_NGRAM_ORDER],
        add: [0.0; MAX_NGRAM_ORDER],
        score: 0.0,
    };
    for n in 1..=MAX_NGRAM_ORDER {
        let (keep, delete, add) = order_scores(source, prediction, references, n)?;
        out.keep[n - 1] = if identity { 1.0 } else { keep };
        out.delete[n - 1] = delete;
        out.add[n - 1] = add;
    }
    let mean = |xs: &[f64; MAX_NGRAM_ORDER]| xs.iter().sum::<f64>() / MAX_NGRAM_ORDER as f64;
    out.score = 100.0 * (mean(&out.keep) + mean(&out.delete) + mean(&out.add)) / 3.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_whitespace(s)
    }

    #[test]
    fn two_token_case() {
        // n=1: keep {a} 1, delete {b} 1, add {c} 1
        // n=2: keep 0 (nothing kept), delete {a b} 1, add {a c} 1
        // n=3,4: all empty -> 0
        let s = sari_sentence(&seq("a b"), &seq("a c"), &[seq("a c")]).unwrap();
        assert_eq!(s.keep, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.delete, [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.add, [1.0, 1.0, 0.0, 0.0]);
        assert!((s.score - 100.0 * (0.25 + 0.5 + 0.5) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn copy_gets_no_delete_or_add_credit() {
        let s = sari_sentence(&seq("a b c"), &seq("a b c"), &[seq("a b d")]).unwrap();
        assert_eq!(s.delete, [0.0; 4]);
        assert_eq!(s.add, [0.0; 4]);
        assert!(s.keep[0] > 0.0);
    }

    #[test]
    fn identity_keeps_everything() {
        let s = sari_sentence(&seq("a b"), &seq("a b"), &[seq("a b")]).unwrap();
        assert_eq!(s.keep, [1.0; 4]);
        assert!((s.score - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_grams_use_clipped_counts() {
        // source "a a", prediction "a", reference "a a": kept a x1 of which
        // 1 is good; deleted a x1 which the reference still wants -> 0.
        let s = sari_sentence(&seq("a a"), &seq("a"), &[seq("a a")]).unwrap();
        assert_eq!(s.delete[0], 0.0);
        // keep precision 1, recall 1/2
        assert!((s.keep[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn needs_reference() {
        assert!(sari_sentence(&seq("a"), &seq("a"), &[]).is_err());
    }
}
