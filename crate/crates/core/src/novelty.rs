//! Lexical novelty classes from TER between a pair's target and its source.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::ParaphrasePair;
use crate::error::{Error, Result};
use crate::metrics::ter;
use crate::textcore::{normalize, NormalizationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoveltyClass {
    Low,
    Medium,
    High,
}

impl NoveltyClass {
    pub const ALL: [NoveltyClass; 3] = [NoveltyClass::Low, NoveltyClass::Medium, NoveltyClass::High];

    pub fn as_str(self) -> &'static str {
        match self {
            NoveltyClass::Low => "low",
            NoveltyClass::Medium => "medium",
            NoveltyClass::High => "high",
        }
    }
}

impl fmt::Display for NoveltyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoveltyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(NoveltyClass::Low),
            "medium" | "med" => Ok(NoveltyClass::Medium),
            "high" => Ok(NoveltyClass::High),
            other => Err(Error::argument(format!("unknown novelty class {other:?}"))),
        }
    }
}

/// `ter <= low_max` is Low, `ter >= high_min` is High, Medium in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoveltyThresholds {
    pub low_max: f64,
    pub high_min: f64,
}

impl Default for NoveltyThresholds {
    fn default() -> Self {
        Self {
            low_max: 0.2,
            high_min: 0.4,
        }
    }
}

impl NoveltyThresholds {
    pub fn new(low_max: f64, high_min: f64) -> Result<Self> {
        let t = Self { low_max, high_min };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low_max && self.low_max < self.high_min) {
            return Err(Error::argument(format!(
                "thresholds need 0 < low_max < high_min, got {} / {}",
                self.low_max, self.high_min
            )));
        }
        Ok(())
    }
}

pub fn classify(ter_value: f64, thresholds: &NoveltyThresholds) -> Result<NoveltyClass> {
    if ter_value.is_nan() || ter_value < 0.0 {
        return Err(Error::argument(format!("TER must be non-negative, got {ter_value}")));
    }
    Ok(if ter_value >= thresholds.high_min {
        NoveltyClass::High
    } else if ter_value <= thresholds.low_max {
        NoveltyClass::Low
    } else {
        NoveltyClass::Medium
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    #[serde(flatten)]
    pub pair: ParaphrasePair,
    pub ter: f64,
    #[serde(rename = "class")]
    pub novelty: NoveltyClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedPair {
    pub index: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labeling {
    pub labeled: Vec<LabeledPair>,
    pub rejected: Vec<RejectedPair>,
}

impl Labeling {
    pub fn histogram(&self) -> BTreeMap<NoveltyClass, usize> {
        let mut h: BTreeMap<NoveltyClass, usize> =
            NoveltyClass::ALL.iter().map(|&c| (c, 0)).collect();
        for l in &self.labeled {
            *h.entry(l.novelty).or_default() += 1;
        }
        h
    }
}

/// TER of the normalized target (hypothesis) against the normalized source
/// (reference).
pub fn pair_ter(pair: &ParaphrasePair, cfg: &NormalizationConfig) -> Result<f64> {
    let source = normalize(&pair.source, cfg);
    if source.is_empty() {
        return Err(Error::argument("source is empty after normalization"));
    }
    ter(&normalize(&pair.target, cfg), &source)
}

/// Labels every pair; pairs with an empty source are collected in
/// `rejected` and the run continues. Output order follows input order.
pub fn label_dataset(
    pairs: &[ParaphrasePair],
    cfg: &NormalizationConfig,
    thresholds: &NoveltyThresholds,
) -> Result<Labeling> {
    thresholds.validate()?;
    let mut out = Labeling::default();
    for (index, pair) in pairs.iter().enumerate() {
        match pair_ter(pair, cfg) {
            Ok(t) => out.labeled.push(LabeledPair {
                pair: pair.clone(),
                ter: t,
                novelty: classify(t, thresholds)?,
            }),
            Err(e) => out.rejected.push(RejectedPair {
                index,
                id: pair.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}
