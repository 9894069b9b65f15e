//! Corpus-level BLEU4 with multi-reference clipping.

use std::collections::HashMap;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::textcore::{ngrams, TokenSeq, MAX_NGRAM_ORDER};

/// Sufficient statistics for corpus BLEU. Accumulation is a commutative
/// monoid, so per-record statistics may be reduced in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_NGRAM_ORDER],
    pub totals: [u64; MAX_NGRAM_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuScore {
    /// Percent in `[0, 100]`.
    pub score: f64,
    pub precisions: [f64; MAX_NGRAM_ORDER],
    pub brevity_penalty: f64,
    /// Lowest n-gram order whose aggregate match count is zero, if any.
    /// When set, `score` is 0 (no smoothing).
    pub zero_order: Option<usize>,
}

impl BleuStats {
    /// Statistics of one prediction against its references.
    ///
    /// The effective reference length is that of the reference closest in
    /// length to the prediction, preferring the shorter one on ties.
    pub fn sentence(prediction: &TokenSeq, references: &[TokenSeq]) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::argument("BLEU needs at least one reference"));
        }
        let hyp_len = prediction.len();
        let ref_len = references
            .iter()
            .map(TokenSeq::len)
            .min_by_key(|&r| (r.abs_diff(hyp_len), r))
            .unwrap_or(0);

        let mut stats = BleuStats {
            hyp_len: hyp_len as u64,
            ref_len: ref_len as u64,
            ..Default::default()
        };
        for n in 1..=MAX_NGRAM_ORDER {
            let hyp = ngrams(prediction, n)?;
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for reference in references {
                for (gram, &count) in ngrams(reference, n)?.counts() {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(count);
                }
            }
            let clipped: usize = hyp
                .counts()
                .iter()
                .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
                .sum();
            stats.matches[n - 1] = clipped as u64;
            stats.totals[n - 1] = hyp.total() as u64;
        }
        Ok(stats)
    }

    pub fn score(&self) -> BleuScore {
        let mut precisions = [0.0; MAX_NGRAM_ORDER];
        for (p, (&m, &t)) in precisions
            .iter_mut()
            .zip(self.matches.iter().zip(self.totals.iter()))
        {
            *p = if t == 0 { 0.0 } else { m as f64 / t as f64 };
        }
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        let zero_order = self.matches.iter().position(|&m| m == 0).map(|i| i + 1);
        let score = if zero_order.is_some() {
            0.0
        } else {
            let log_mean =
                precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_NGRAM_ORDER as f64;
            (100.0 * brevity_penalty * log_mean.exp()).clamp(0.0, 100.0)
        };
        BleuScore {
            score,
            precisions,
            brevity_penalty,
            zero_order,
        }
    }
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..MAX_NGRAM_ORDER {
            self.matches[i] += rhs.matches[i];
            self.totals[i] += rhs.totals[i];
        }
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
    }
}

impl Add for BleuStats {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

/// Corpus BLEU with details (precisions, brevity penalty, zero-match flag).
pub fn bleu_corpus_detailed<'a, I>(pairs: I) -> Result<BleuScore>
where
    I: IntoIterator<Item = (&'a TokenSeq, &'a [TokenSeq])>,
{
    let mut total = BleuStats::default();
    let mut seen = 0usize;
    for (i, (prediction, references)) in pairs.into_iter().enumerate() {
        total += BleuStats::sentence(prediction, references)
            .map_err(|e| Error::argument(format!("record {i}: {e}")))?;
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::argument("BLEU over an empty corpus"));
    }
    Ok(total.score())
}

/// Corpus BLEU4 as a percent.
pub fn bleu_corpus<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a TokenSeq, &'a [TokenSeq])>,
{
    bleu_corpus_detailed(pairs).map(|s| s.score)
}
