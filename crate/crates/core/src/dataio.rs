//! Dataset loading, split-size checks and atomic output files.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::novelty::LabeledPair;

/// One input/ground-truth paraphrase pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParaphrasePair {
    pub id: String,
    pub source: String,
    pub target: String,
}

impl ParaphrasePair {
    pub fn new(id: impl Into<String>, source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            target: target.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Tsv,
}

impl DataFormat {
    /// Guesses from the file extension; anything but `.tsv`/`.txt` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => DataFormat::Tsv,
            _ => DataFormat::Jsonl,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "tsv" => Ok(DataFormat::Tsv),
            other => Err(Error::argument(format!("unknown data format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub pairs: Vec<ParaphrasePair>,
    pub expected_size: Option<usize>,
}

impl DatasetSplit {
    /// Builds a split, warning when `expected_size` disagrees.
    pub fn new(name: SplitName, pairs: Vec<ParaphrasePair>, expected_size: Option<usize>) -> Self {
        if let Some(expected) = expected_size {
            if expected != pairs.len() {
                warn!("{name} split has {} pairs, expected {expected}", pairs.len());
            }
        }
        Self {
            name,
            pairs,
            expected_size,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Accept pairs with an empty target (inference inputs).
    pub allow_empty_target: bool,
}

#[derive(Deserialize)]
struct RawPair {
    id: Option<String>,
    source: String,
    #[serde(default)]
    target: Option<String>,
}

fn read_text(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(match text.strip_prefix('\u{feff}') {
        Some(rest) => rest.to_owned(),
        None => text,
    })
}

/// Loads pairs from JSONL (`{"id"?, "source", "target"}`) or TSV
/// (`source<TAB>target` or `id<TAB>source<TAB>target`). Missing ids are the
/// 0-based record position. Blank lines are skipped.
pub fn load_pairs(path: &Path, format: DataFormat, opts: LoadOptions) -> Result<Vec<ParaphrasePair>> {
    let text = read_text(path)?;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let auto_id = pairs.len().to_string();
        let pair = match format {
            DataFormat::Jsonl => {
                let raw: RawPair = serde_json::from_str(line)
                    .map_err(|e| Error::data(path, lineno, format!("malformed JSON: {e}")))?;
                ParaphrasePair {
                    id: raw.id.unwrap_or(auto_id),
                    source: raw.source,
                    target: raw.target.unwrap_or_default(),
                }
            }
            DataFormat::Tsv => {
                let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
                match cols.as_slice() {
                    [source, target] => ParaphrasePair::new(auto_id, *source, *target),
                    [id, source, target] => ParaphrasePair::new(*id, *source, *target),
                    _ => {
                        return Err(Error::data(
                            path,
                            lineno,
                            format!("expected 2 or 3 tab-separated columns, found {}", cols.len()),
                        ))
                    }
                }
            }
        };
        if pair.source.is_empty() {
            return Err(Error::data(path, lineno, "empty source"));
        }
        if pair.target.is_empty() && !opts.allow_empty_target {
            return Err(Error::data(path, lineno, "empty target"));
        }
        if !seen.insert(pair.id.clone()) {
            return Err(Error::data(path, lineno, format!("duplicate id {:?}", pair.id)));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Loads any JSONL file of serde records, one per non-blank line.
pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::data(path, i + 1, format!("malformed JSON: {e}")))
        })
        .collect()
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledPair>> {
    load_jsonl(path)
}

pub fn load_generations(path: &Path) -> Result<Vec<GenerationRecord>> {
    load_jsonl(path)
}

/// Reference split sizes `(train, validation, test)` for known datasets.
pub fn known_split_sizes(dataset: &str) -> Option<[usize; 3]> {
    match dataset.to_ascii_lowercase().as_str() {
        "qqp-50k" | "qqp50k" => Some([46_000, 4_000, 4_000]),
        "qqp-140k" | "qqp140k" => Some([134_206, 5_255, 5_255]),
        "msrpc" => Some([2_203, 550, 1_147]),
        "parasci-acl" | "parasci_acl" => Some([28_883, 2_753, 2_345]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitCheck {
    pub split: SplitName,
    pub actual: usize,
    pub expected: Option<usize>,
}

impl SplitCheck {
    pub fn matches(&self) -> bool {
        self.expected.is_none_or(|e| e == self.actual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub dataset: String,
    /// False for "custom" and unknown names.
    pub known: bool,
    pub checks: Vec<SplitCheck>,
}

impl SplitReport {
    pub fn all_match(&self) -> bool {
        self.checks.iter().all(SplitCheck::matches)
    }

    pub fn mismatches(&self) -> Vec<&SplitCheck> {
        self.checks.iter().filter(|c| !c.matches()).collect()
    }
}

impl fmt::Display for SplitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset {}{}", self.dataset, if self.known { "" } else { " (no reference sizes)" })?;
        for c in &self.checks {
            match c.expected {
                Some(e) => writeln!(
                    f,
                    "  {:<10} {:>8} expected {:>8} {}",
                    c.split.to_string(),
                    c.actual,
                    e,
                    if c.matches() { "ok" } else { "MISMATCH" }
                )?,
                None => writeln!(f, "  {:<10} {:>8}", c.split.to_string(), c.actual)?,
            }
        }
        Ok(())
    }
}

/// Compares split sizes against the reference table. Never fails.
pub fn validate_split_sizes(splits: &[DatasetSplit], dataset: &str) -> SplitReport {
    let reference = known_split_sizes(dataset);
    let checks = splits
        .iter()
        .map(|s| SplitCheck {
            split: s.name,
            actual: s.pairs.len(),
            expected: reference.map(|r| match s.name {
                SplitName::Train => r[0],
                SplitName::Validation => r[1],
                SplitName::Test => r[2],
            }),
        })
        .collect();
    SplitReport {
        dataset: dataset.to_owned(),
        known: reference.is_some(),
        checks,
    }
}

/// One generated paraphrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    /// Prompt size in backend tokens (soft slots included).
    pub prompt_n: usize,
    pub output: String,
}

pub enum OutputRecords<'a> {
    Labeled(&'a [LabeledPair]),
    Generations(&'a [GenerationRecord]),
    ReportCsv(&'a [(String, MetricReport)]),
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        // serde_json cannot fail on these plain data types
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn write_outputs(records: OutputRecords<'_>, path: &Path) -> Result<()> {
    let body = match records {
        OutputRecords::Labeled(r) => to_jsonl(r),
        OutputRecords::Generations(r) => to_jsonl(r),
        OutputRecords::ReportCsv(rows) => MetricReport::render_csv(rows),
    };
    write_atomic(path, body.as_bytes())
}
