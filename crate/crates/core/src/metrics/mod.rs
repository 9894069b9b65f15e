//! Paraphrase evaluation: BLEU4, self-BLEU, TER/self-TER, iBLEU, SARI and
//! embedding cosine similarity, at sentence and corpus level.

mod bleu;
mod report;
mod sari;
mod ter;

pub use bleu::{bleu_corpus, bleu_corpus_detailed, BleuScore, BleuStats};
pub use report::{format_percent, MetricReport, REPORT_COLUMNS};
pub use sari::{sari_sentence, SariScore};
pub use ter::{levenshtein, ter, ter_edits, TerEdits};

use crate::error::{Error, Result};
use crate::textcore::{NormalizationConfig, TokenSeq};

/// Default iBLEU weight on BLEU.
pub const IBLEU_ALPHA: f64 = 0.7;

/// One evaluated prediction with its input and ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub source: TokenSeq,
    pub prediction: TokenSeq,
    references: Vec<TokenSeq>,
}

impl EvalRecord {
    pub fn new(source: TokenSeq, prediction: TokenSeq, references: Vec<TokenSeq>) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::argument("evaluation record without references"));
        }
        Ok(Self {
            source,
            prediction,
            references,
        })
    }

    pub fn references(&self) -> &[TokenSeq] {
        &self.references
    }
}

fn non_empty(records: &[EvalRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::argument("empty evaluation corpus"))
    } else {
        Ok(())
    }
}

/// Corpus BLEU of predictions against the ground truths.
pub fn bleu(records: &[EvalRecord]) -> Result<BleuScore> {
    non_empty(records)?;
    bleu_corpus_detailed(
        records
            .iter()
            .map(|r| (&r.prediction, r.references.as_slice())),
    )
}

/// Corpus BLEU of predictions against their own inputs.
pub fn self_bleu(records: &[EvalRecord]) -> Result<BleuScore> {
    non_empty(records)?;
    bleu_corpus_detailed(
        records
            .iter()
            .map(|r| (&r.prediction, std::slice::from_ref(&r.source))),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfTer {
    /// Mean per-record TER(prediction, source), in percent.
    pub percent: f64,
    /// Records skipped because their source was empty.
    pub skipped: usize,
}

pub fn self_ter(records: &[EvalRecord]) -> Result<SelfTer> {
    non_empty(records)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for r in records {
        if r.source.is_empty() {
            continue;
        }
        sum += ter(&r.prediction, &r.source)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::argument("every record has an empty source"));
    }
    Ok(SelfTer {
        percent: 100.0 * sum / used as f64,
        skipped: records.len() - used,
    })
}

/// `alpha * bleu - (1 - alpha) * self_bleu`.
pub fn ibleu(bleu: f64, self_bleu: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::argument(format!("iBLEU alpha {alpha} outside [0, 1]")));
    }
    Ok(alpha * bleu - (1.0 - alpha) * self_bleu)
}

/// Mean sentence-level SARI, in percent.
pub fn sari_corpus(records: &[EvalRecord]) -> Result<f64> {
    non_empty(records)?;
    let mut sum = 0.0;
    for r in records {
        sum += sari_sentence(&r.source, &r.prediction, &r.references)?.score;
    }
    Ok(sum / records.len() as f64)
}

pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSimilarity {
    /// Mean cosine x 100 over the usable pairs.
    pub percent: f64,
    /// Indices of pairs excluded for a zero-norm vector or mismatched dims.
    pub excluded: Vec<usize>,
}

/// Mean cosine similarity between source and prediction embeddings.
pub fn semantic_similarity<S, P>(pairs: &[(S, P)]) -> Result<SemanticSimilarity>
where
    S: AsRef<[f32]>,
    P: AsRef<[f32]>,
{
    if pairs.is_empty() {
        return Err(Error::argument("no embedding pairs"));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = Vec::new();
    for (i, (s, p)) in pairs.iter().enumerate() {
        match cosine(s.as_ref(), p.as_ref()) {
            Some(c) => {
                sum += c;
                used += 1;
            }
            None => excluded.push(i),
        }
    }
    if used == 0 {
        return Err(Error::argument(format!(
            "all {} embedding pairs unusable (zero norm or dimension mismatch)",
            pairs.len()
        )));
    }
    Ok(SemanticSimilarity {
        percent: 100.0 * sum / used as f64,
        excluded,
    })
}

/// Computes the full metric report. `vectors`, when given, must be aligned
/// with `records` as `(source_vec, prediction_vec)`.
pub fn evaluate_all(
    records: &[EvalRecord],
    vectors: Option<&[(Vec<f32>, Vec<f32>)]>,
    normalization: NormalizationConfig,
) -> Result<MetricReport> {
    non_empty(records)?;
    let semantic = match vectors {
        Some(v) if v.len() != records.len() => {
            return Err(Error::argument(format!(
                "{} embedding pairs for {} records",
                v.len(),
                records.len()
            )))
        }
        Some(v) => Some(semantic_similarity(v)?),
        None => None,
    };
    let bleu = bleu(records)?;
    let self_bleu = self_bleu(records)?;
    let self_ter = self_ter(records)?;
    let sari = sari_corpus(records)?;
    let ibleu = ibleu(bleu.score, self_bleu.score, IBLEU_ALPHA)?;
    Ok(MetricReport {
        bert: semantic.as_ref().map(|s| s.percent),
        self_ter: self_ter.percent,
        self_bleu: self_bleu.score,
        bleu: bleu.score,
        ibleu,
        sari,
        normalization,
        corpus_size: records.len(),
        self_ter_skipped: self_ter.skipped,
        bert_excluded: semantic.map(|s| s.excluded).unwrap_or_default(),
        bleu_zero_order: bleu.zero_order,
        self_bleu_zero_order: self_bleu.zero_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_whitespace(s)
    }

    fn rec(src: &str, pred: &str, reference: &str) -> EvalRecord {
        EvalRecord::new(seq(src), seq(pred), vec![seq(reference)]).unwrap()
    }

    #[test]
    fn ibleu_table_rows() {
        let cases = [
            (32.78, 100.0, -7.05),
            (100.0, 30.98, 60.71),
            (30.36, 100.0, -8.75),
            (100.0, 30.34, 60.90),
        ];
        for (b, sb, want) in cases {
            let got = ibleu(b, sb, IBLEU_ALPHA).unwrap();
            assert!((got - want).abs() <= 0.005, "{b},{sb}: {got}");
        }
        assert!(ibleu(1.0, 1.0, 1.5).is_err());
        assert!(ibleu(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn self_ter_values() {
        let copy = [rec("a b c", "a b c", "x")];
        assert_eq!(self_ter(&copy).unwrap().percent, 0.0);
        let one = [rec("a b", "x", "y")];
        assert_eq!(self_ter(&one).unwrap().percent, 100.0);
        // 1/5 and 2/5
        let two = [
            rec("a b c d e", "a b c d x", "y"),
            rec("a b c d e", "a b c x y", "y"),
        ];
        assert!((self_ter(&two).unwrap().percent - 30.0).abs() < 1e-9);
    }

    #[test]
    fn self_ter_skips_empty_sources() {
        let recs = [rec("", "a", "a"), rec("a b", "a b", "a")];
        let st = self_ter(&recs).unwrap();
        assert_eq!(st.skipped, 1);
        assert_eq!(st.percent, 0.0);
        assert!(self_ter(&[rec("", "a", "a")]).is_err());
    }

    #[test]
    fn self_bleu_extremes() {
        let copy = [rec("what is this thing", "what is this thing", "x")];
        assert!((self_bleu(&copy).unwrap().score - 100.0).abs() < 1e-9);
        let disjoint = [rec("a b c d", "w x y z", "x")];
        assert_eq!(self_bleu(&disjoint).unwrap().score, 0.0);
    }

    #[test]
    fn semantic_similarity_cases() {
        let same = [(vec![1.0f32, 2.0], vec![1.0f32, 2.0])];
        assert!((semantic_similarity(&same).unwrap().percent - 100.0).abs() < 1e-9);
        let ortho = [(vec![1.0f32, 0.0], vec![0.0f32, 1.0])];
        assert_eq!(semantic_similarity(&ortho).unwrap().percent, 0.0);
        let anti = [(vec![1.0f32, 0.0], vec![-1.0f32, 0.0])];
        assert_eq!(semantic_similarity(&anti).unwrap().percent, -100.0);
        let zero = [
            (vec![0.0f32, 0.0], vec![1.0f32, 0.0]),
            (vec![1.0f32, 0.0], vec![1.0f32, 0.0]),
        ];
        let s = semantic_similarity(&zero).unwrap();
        assert_eq!(s.excluded, vec![0]);
        assert!((s.percent - 100.0).abs() < 1e-9);
    }

    #[test]
    fn evaluate_all_composes_members() {
        let recs = [
            rec("how do i learn rust", "how can i learn rust", "how can i learn rust fast"),
            rec("what is love", "what does love mean", "what is the meaning of love"),
        ];
        let vecs = vec![
            (vec![1.0f32, 0.0], vec![1.0f32, 1.0]),
            (vec![0.0f32, 1.0], vec![0.0f32, 1.0]),
        ];
        let r = evaluate_all(&recs, Some(&vecs), NormalizationConfig::default()).unwrap();
        assert_eq!(r.bleu, bleu(&recs).unwrap().score);
        assert_eq!(r.self_bleu, self_bleu(&recs).unwrap().score);
        assert_eq!(r.self_ter, self_ter(&recs).unwrap().percent);
        assert_eq!(r.sari, sari_corpus(&recs).unwrap());
        assert!((r.ibleu - (0.7 * r.bleu - 0.3 * r.self_bleu)).abs() < 1e-12);
        let want_bert = 100.0 * (std::f64::consts::FRAC_1_SQRT_2 + 1.0) / 2.0;
        assert!((r.bert.unwrap() - want_bert).abs() < 1e-6);
        assert_eq!(r.corpus_size, 2);
    }

    #[test]
    fn evaluate_all_rejects_misaligned_vectors() {
        let recs = [rec("a", "a", "a")];
        let vecs: Vec<(Vec<f32>, Vec<f32>)> = vec![];
        assert!(evaluate_all(&recs, Some(&vecs), NormalizationConfig::default()).is_err());
        assert!(evaluate_all(&[], None, NormalizationConfig::default()).is_err());
    }

    #[test]
    fn references_required() {
        assert!(EvalRecord::new(seq("a"), seq("a"), vec![]).is_err());
    }
}
