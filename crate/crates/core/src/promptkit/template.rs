use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{assemble_manual, Payload, PromptLayout, SegmentKind};
use crate::error::{Error, Result};
use crate::novelty::NoveltyClass;
use crate::textcore::{normalize, NormalizationConfig, TokenSeq};

/// Literal strings standing in for soft slots in discrete mode.
///
/// Template files are `key=value` lines; `#` starts a comment line and the
/// escapes `\n`, `\t` and `\\` are recognized in values. Keys: `global_prefix`,
/// `prefix`, `infix`, `separator`, `tag.low`, `tag.medium`, `tag.high`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextTemplate {
    pub global_prefix: String,
    pub prefix: String,
    pub infix: String,
    /// Follows every example output.
    pub separator: String,
    /// Appended to the infix of class-conditioned segments.
    pub class_tags: BTreeMap<NoveltyClass, String>,
}

impl Default for TextTemplate {
    fn default() -> Self {
        Self {
            global_prefix: String::new(),
            prefix: "Input:".into(),
            infix: "\nParaphrase:".into(),
            separator: "\n\n".into(),
            class_tags: NoveltyClass::ALL
                .iter()
                .map(|&c| (c, format!(" ({c})")))
                .collect(),
        }
    }
}

fn unescape(v: &str, line: usize, path: &Path) -> Result<String> {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            other => {
                return Err(Error::data(path, line, format!("bad escape \\{}", other.map_or(String::new(), String::from))))
            }
        }
    }
    Ok(out)
}

fn escape(v: &str) -> String {
    v.replace('\\', "\\\\").replace('\n', "\\n").replace('\t', "\\t")
}

impl TextTemplate {
    /// The parse-back marker: the infix without surrounding whitespace.
    pub fn marker(&self) -> &str {
        self.infix.trim()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut t = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_start_matches('\u{feff}');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::data(path, i + 1, "expected key=value"))?;
            let value = unescape(value, i + 1, path)?;
            match key.trim() {
                "global_prefix" => t.global_prefix = value,
                "prefix" => t.prefix = value,
                "infix" => t.infix = value,
                "separator" => t.separator = value,
                k => match k.strip_prefix("tag.") {
                    Some(c) => {
                        let class = c.parse().map_err(|e: Error| Error::data(path, i + 1, e.to_string()))?;
                        t.class_tags.insert(class, value);
                    }
                    None => return Err(Error::data(path, i + 1, format!("unknown key {k:?}"))),
                },
            }
        }
        if t.marker().is_empty() {
            return Err(Error::data(path, 0, "infix must contain a non-blank marker"));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "global_prefix={}\nprefix={}\ninfix={}\nseparator={}\n",
            escape(&self.global_prefix),
            escape(&self.prefix),
            escape(&self.infix),
            escape(&self.separator)
        );
        for (c, tag) in &self.class_tags {
            out.push_str(&format!("tag.{c}={}\n", escape(tag)));
        }
        out
    }

    fn tag(&self, class: Option<NoveltyClass>) -> Result<&str> {
        match class {
            None => Ok(""),
            Some(c) => self
                .class_tags
                .get(&c)
                .map(String::as_str)
                .ok_or_else(|| Error::argument(format!("template has no realization for class {c}"))),
        }
    }

    pub(super) fn render(&self, layout: &PromptLayout) -> Result<String> {
        let mut out = String::new();
        for seg in &layout.segments {
            match (&seg.payload, seg.kind) {
                (Payload::Literal(s), _) => out.push_str(s),
                (Payload::Text(t), kind) => {
                    out.push(' ');
                    out.push_str(&t.render());
                    if kind == SegmentKind::ExampleOutput {
                        out.push_str(&self.separator);
                    }
                }
                (Payload::Slots(_), SegmentKind::GlobalPrefix) => {
                    if !self.global_prefix.is_empty() {
                        out.push_str(&self.global_prefix);
                        out.push_str(&self.separator);
                    }
                }
                (Payload::Slots(_), SegmentKind::ClassPrefix) => out.push_str(&self.prefix),
                (Payload::Slots(_), SegmentKind::Infix) => {
                    out.push_str(&self.infix);
                    out.push_str(self.tag(seg.class)?);
                }
                (Payload::Slots(_), kind) => {
                    return Err(Error::argument(format!("{kind:?} segment carries slots")))
                }
            }
        }
        Ok(out)
    }
}

/// Extracts the paraphrase from `raw` (prompt followed by completion): the
/// text after the final marker, minus a leading class tag, up to the first
/// newline, normalized.
pub fn parse_completion(raw: &str, template: &TextTemplate, cfg: &NormalizationConfig) -> Result<TokenSeq> {
    let fail = |reason: &str| Error::Completion {
        reason: reason.into(),
        raw: raw.into(),
    };
    let marker = template.marker();
    let at = raw.rfind(marker).ok_or_else(|| fail("marker not found"))?;
    let mut rest = raw[at + marker.len()..].trim_start_matches([' ', '\t']);
    for tag in template.class_tags.values() {
        let tag = tag.trim();
        if tag.is_empty() {
            continue;
        }
        if let Some(after) = rest.strip_prefix(tag) {
            if after.is_empty() || after.starts_with(char::is_whitespace) {
                rest = after.trim_start_matches([' ', '\t']);
                break;
            }
        }
    }
    let line = rest.split('\n').next().unwrap_or("");
    let tokens = normalize(line, cfg);
    if tokens.is_empty() {
        return Err(fail("empty paraphrase"));
    }
    Ok(tokens)
}

/// Inverse of rendering a manual layout with `template`.
pub fn parse_manual(text: &str, template: &TextTemplate) -> Result<PromptLayout> {
    let fail = |reason: &str| Error::Completion {
        reason: reason.into(),
        raw: text.into(),
    };
    let body = text
        .strip_prefix(template.prefix.as_str())
        .ok_or_else(|| fail("prefix not found"))?;
    let body = body
        .strip_suffix(template.infix.as_str())
        .ok_or_else(|| fail("infix not found"))?;
    let body = body.strip_prefix(' ').ok_or_else(|| fail("missing input"))?;
    assemble_manual(&TokenSeq::from_whitespace(body))
}
