use serde::{Deserialize, Serialize};

use crate::textcore::NormalizationConfig;

/// Metric columns in report order.
pub const REPORT_COLUMNS: [&str; 6] = ["BERT", "Self-TER", "Self-BLEU", "BLEU", "iBLEU", "SARI"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean embedding cosine x 100; absent when no embeddings were supplied.
    pub bert: Option<f64>,
    pub self_ter: f64,
    pub self_bleu: f64,
    pub bleu: f64,
    pub ibleu: f64,
    pub sari: f64,
    pub normalization: NormalizationConfig,
    pub corpus_size: usize,
    pub self_ter_skipped: usize,
    pub bert_excluded: Vec<usize>,
    /// Set when corpus BLEU collapsed to 0 because an n-gram order had no
    /// matches at all.
    pub bleu_zero_order: Option<usize>,
    pub self_bleu_zero_order: Option<usize>,
}

/// Two decimals, ties rounded to even.
pub fn format_percent(value: f64) -> String {
    let rounded = (value * 100.0).round_ties_even() / 100.0;
    // avoid "-0.00"
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded:.2}")
}

impl MetricReport {
    /// Metric values in [`REPORT_COLUMNS`] order.
    pub fn values(&self) -> [Option<f64>; 6] {
        [
            self.bert,
            Some(self.self_ter),
            Some(self.self_bleu),
            Some(self.bleu),
            Some(self.ibleu),
            Some(self.sari),
        ]
    }

    fn cells(&self) -> Vec<String> {
        self.values()
            .iter()
            .map(|v| v.map(format_percent).unwrap_or_else(|| "-".to_owned()))
            .collect()
    }

    pub fn csv_header() -> String {
        let mut cols = vec!["Method"];
        cols.extend(REPORT_COLUMNS);
        cols.join(",")
    }

    pub fn csv_row(&self, label: &str) -> String {
        let mut cells = vec![csv_escape(label)];
        cells.extend(
            self.values()
                .iter()
                .map(|v| v.map(format_percent).unwrap_or_default()),
        );
        cells.join(",")
    }

    /// Header plus one row per labeled report.
    pub fn render_csv(rows: &[(String, MetricReport)]) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        for (label, report) in rows {
            out.push_str(&report.csv_row(label));
            out.push('\n');
        }
        out
    }

    /// Right-aligned text table with a normalization footer.
    pub fn render_table(rows: &[(String, MetricReport)]) -> String {
        let label_width = rows
            .iter()
            .map(|(l, _)| l.chars().count())
            .chain(std::iter::once("Method".len()))
            .max()
            .unwrap_or(6);
        let mut out = format!("{:<label_width$}", "Method");
        for col in REPORT_COLUMNS {
            out.push_str(&format!(" {col:>9}"));
        }
        out.push('\n');
        for (label, report) in rows {
            out.push_str(&format!("{label:<label_width$}"));
            for cell in report.cells() {
                out.push_str(&format!(" {cell:>9}"));
            }
            out.push('\n');
        }
        for (label, report) in rows {
            out.push_str(&format!(
                "# {label}: n={} normalization: {}",
                report.corpus_size, report.normalization
            ));
            if report.self_ter_skipped > 0 {
                out.push_str(&format!(" self_ter_skipped={}", report.self_ter_skipped));
            }
            if !report.bert_excluded.is_empty() {
                out.push_str(&format!(" bert_excluded={}", report.bert_excluded.len()));
            }
            if let Some(n) = report.bleu_zero_order {
                out.push_str(&format!(" bleu_zero_matches_at_order={n}"));
            }
            if let Some(n) = report.self_bleu_zero_order {
                out.push_str(&format!(" self_bleu_zero_matches_at_order={n}"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}
