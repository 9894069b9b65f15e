//! Prompt layouts for paraphrasing as auto-completion.
//!
//! A layout is an ordered list of segments. Text segments carry tokens;
//! prefix and infix segments carry *soft slot* id ranges, symbolic
//! placeholders that a soft-prompt-capable backend binds to tuned embedding
//! vectors. [`render_text`] realizes a layout as plain text for backends
//! that only accept strings.
//!
//! Slot ids are allocated per [`SlotSpec`]: the global prefix takes
//! `0..m`; each class (or the single unconditioned class) then takes a
//! prefix range of length `s` followed by an infix range of length `t`.
//!
//! Every layout matches
//! `GlobalPrefix? (ClassPrefix ExampleInput Infix ExampleOutput)* ClassPrefix? QueryInput Infix`.

mod template;

pub use template::{parse_completion, parse_manual, TextTemplate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::novelty::NoveltyClass;
use crate::textcore::TokenSeq;

/// Tokens the backend may generate beyond a prompt of `n` tokens.
pub const DECODE_EXTRA_TOKENS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    /// `m`, length of the shared global prefix.
    pub global_prefix_len: u32,
    /// `s`, length of each per-example prefix.
    pub class_prefix_len: u32,
    /// `t`, length of each infix.
    pub infix_len: u32,
    /// Novelty classes with their own prefix/infix slots; empty when the
    /// layout is not novelty-conditioned.
    pub classes: Vec<NoveltyClass>,
}

impl Default for SlotSpec {
    fn default() -> Self {
        Self {
            global_prefix_len: 256 - 8,
            class_prefix_len: 8,
            infix_len: 8,
            classes: Vec::new(),
        }
    }
}

impl SlotSpec {
    /// Defaults with all three novelty classes.
    pub fn conditioned() -> Self {
        Self {
            classes: NoveltyClass::ALL.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_prefix_len == 0 || self.infix_len == 0 {
            return Err(Error::argument("prefix and infix lengths must be at least 1"));
        }
        let mut seen = self.classes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.classes.len() {
            return Err(Error::argument("duplicate class in slot spec"));
        }
        Ok(())
    }

    fn block(&self) -> u32 {
        self.class_prefix_len + self.infix_len
    }

    fn class_base(&self, class: Option<NoveltyClass>) -> Result<u32> {
        let idx = match class {
            None => 0,
            Some(c) => self
                .classes
                .iter()
                .position(|&k| k == c)
                .ok_or_else(|| Error::argument(format!("class {c} has no slots in this spec")))?
                as u32,
        };
        Ok(self.global_prefix_len + idx * self.block())
    }

    pub fn global_slots(&self) -> SlotRange {
        SlotRange::new(0, self.global_prefix_len)
    }

    pub fn prefix_slots(&self, class: Option<NoveltyClass>) -> Result<SlotRange> {
        let base = self.class_base(class)?;
        Ok(SlotRange::new(base, base + self.class_prefix_len))
    }

    pub fn infix_slots(&self, class: Option<NoveltyClass>) -> Result<SlotRange> {
        let base = self.class_base(class)? + self.class_prefix_len;
        Ok(SlotRange::new(base, base + self.infix_len))
    }
}

/// Half-open range of soft slot ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotRange {
    pub start: u32,
    pub end: u32,
}

impl SlotRange {
    pub fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> u32 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    GlobalPrefix,
    ClassPrefix,
    Infix,
    ExampleInput,
    ExampleOutput,
    QueryInput,
}

impl SegmentKind {
    fn is_prompt(self) -> bool {
        matches!(self, SegmentKind::GlobalPrefix | SegmentKind::ClassPrefix | SegmentKind::Infix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Soft prompt slots.
    Slots(SlotRange),
    /// Input or output text.
    Text(TokenSeq),
    /// Fixed template text of a hand-written prompt.
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSegment {
    pub kind: SegmentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<NoveltyClass>,
    #[serde(flatten)]
    pub payload: Payload,
}

impl PromptSegment {
    fn slots(kind: SegmentKind, class: Option<NoveltyClass>, range: SlotRange) -> Self {
        Self {
            kind,
            class,
            payload: Payload::Slots(range),
        }
    }

    fn text(kind: SegmentKind, tokens: TokenSeq) -> Self {
        Self {
            kind,
            class: None,
            payload: Payload::Text(tokens),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutMode {
    Manual,
    Exemplar,
    Rapt,
    NcRapt,
}

/// A retrieved example pair as placed in a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub input: TokenSeq,
    pub output: TokenSeq,
    pub similarity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub novelty: Option<NoveltyClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRef {
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLayout {
    pub mode: LayoutMode,
    pub segments: Vec<PromptSegment>,
    pub spec: SlotSpec,
    /// Examples in prompt order (ascending similarity).
    pub retrieved: Vec<RetrievedRef>,
    /// Least-similar examples dropped to respect a prompt budget.
    #[serde(default)]
    pub dropped_examples: usize,
}

fn check_query(x: &TokenSeq) -> Result<()> {
    if x.is_empty() {
        Err(Error::argument("input to paraphrase is empty"))
    } else {
        Ok(())
    }
}

fn check_ascending(examples: &[Example]) -> Result<()> {
    if let Some(w) = examples.windows(2).find(|w| w[0].similarity > w[1].similarity) {
        return Err(Error::argument(format!(
            "examples must be in ascending similarity order ({} {} before {} {})",
            w[0].id, w[0].similarity, w[1].id, w[1].similarity
        )));
    }
    Ok(())
}

/// The hand-written template: `Input: <x>` newline `Paraphrase:`.
pub fn assemble_manual(x: &TokenSeq) -> Result<PromptLayout> {
    check_query(x)?;
    let t = TextTemplate::default();
    Ok(PromptLayout {
        mode: LayoutMode::Manual,
        segments: vec![
            PromptSegment {
                kind: SegmentKind::ClassPrefix,
                class: None,
                payload: Payload::Literal(t.prefix.clone()),
            },
            PromptSegment::text(SegmentKind::QueryInput, x.clone()),
            PromptSegment {
                kind: SegmentKind::Infix,
                class: None,
                payload: Payload::Literal(t.infix),
            },
        ],
        spec: SlotSpec::default(),
        retrieved: Vec::new(),
        dropped_examples: 0,
    })
}

/// Shared body: each example wrapped in prefix/infix slots of its class,
/// then the query wrapped in slots of `query_class`.
fn body(
    x: &TokenSeq,
    examples: &[Example],
    spec: &SlotSpec,
    class_of: impl Fn(&Example) -> Result<Option<NoveltyClass>>,
    query_class: Option<NoveltyClass>,
) -> Result<Vec<PromptSegment>> {
    let mut segs = Vec::with_capacity(4 * examples.len() + 3);
    for ex in examples {
        let c = class_of(ex)?;
        segs.push(PromptSegment::slots(SegmentKind::ClassPrefix, c, spec.prefix_slots(c)?));
        segs.push(PromptSegment::text(SegmentKind::ExampleInput, ex.input.clone()));
        segs.push(PromptSegment::slots(SegmentKind::Infix, c, spec.infix_slots(c)?));
        segs.push(PromptSegment::text(SegmentKind::ExampleOutput, ex.output.clone()));
    }
    segs.push(PromptSegment::slots(
        SegmentKind::ClassPrefix,
        query_class,
        spec.prefix_slots(query_class)?,
    ));
    segs.push(PromptSegment::text(SegmentKind::QueryInput, x.clone()));
    segs.push(PromptSegment::slots(
        SegmentKind::Infix,
        query_class,
        spec.infix_slots(query_class)?,
    ));
    Ok(segs)
}

fn retrieved_refs(examples: &[Example]) -> Vec<RetrievedRef> {
    examples
        .iter()
        .map(|e| RetrievedRef {
            id: e.id.clone(),
            similarity: e.similarity,
        })
        .collect()
}

fn unconditioned(
    mode: LayoutMode,
    x: &TokenSeq,
    examples: &[Example],
    spec: &SlotSpec,
) -> Result<PromptLayout> {
    check_query(x)?;
    spec.validate()?;
    check_ascending(examples)?;
    let spec = SlotSpec {
        classes: Vec::new(),
        ..spec.clone()
    };
    let mut segments = Vec::new();
    if mode == LayoutMode::Rapt {
        segments.push(PromptSegment::slots(SegmentKind::GlobalPrefix, None, spec.global_slots()));
    }
    segments.extend(body(x, examples, &spec, |_| Ok(None), None)?);
    Ok(PromptLayout {
        mode,
        segments,
        spec,
        retrieved: retrieved_refs(examples),
        dropped_examples: 0,
    })
}

/// Examples and query, each with its own prefix and infix slots; no global
/// prefix. `examples` must be in ascending similarity order.
pub fn assemble_exemplar(x: &TokenSeq, examples: &[Example], spec: &SlotSpec) -> Result<PromptLayout> {
    unconditioned(LayoutMode::Exemplar, x, examples, spec)
}

/// Global prefix followed by the exemplar body.
pub fn assemble_rapt(x: &TokenSeq, examples: &[Example], spec: &SlotSpec) -> Result<PromptLayout> {
    unconditioned(LayoutMode::Rapt, x, examples, spec)
}

/// Novelty-conditioned layout: every example uses the prefix/infix slots of
/// its own novelty class and the query uses those of `query_class`.
pub fn assemble_ncrapt(
    x: &TokenSeq,
    examples: &[Example],
    query_class: NoveltyClass,
    spec: &SlotSpec,
) -> Result<PromptLayout> {
    check_query(x)?;
    spec.validate()?;
    check_ascending(examples)?;
    let mut segments = vec![PromptSegment::slots(
        SegmentKind::GlobalPrefix,
        None,
        spec.global_slots(),
    )];
    let class_of = |ex: &Example| {
        ex.novelty
            .map(Some)
            .ok_or_else(|| Error::argument(format!("example {} has no novelty class", ex.id)))
    };
    segments.extend(body(x, examples, spec, class_of, Some(query_class))?);
    Ok(PromptLayout {
        mode: LayoutMode::NcRapt,
        segments,
        spec: spec.clone(),
        retrieved: retrieved_refs(examples),
        dropped_examples: 0,
    })
}

/// Assembles the layout for `mode`. `query_class` is required for
/// [`LayoutMode::NcRapt`] and ignored otherwise.
pub fn assemble(
    mode: LayoutMode,
    x: &TokenSeq,
    examples: &[Example],
    query_class: Option<NoveltyClass>,
    spec: &SlotSpec,
) -> Result<PromptLayout> {
    match mode {
        LayoutMode::Manual => assemble_manual(x),
        LayoutMode::Exemplar => assemble_exemplar(x, examples, spec),
        LayoutMode::Rapt => assemble_rapt(x, examples, spec),
        LayoutMode::NcRapt => {
            let c = query_class
                .ok_or_else(|| Error::argument("novelty-conditioned layout needs a query class"))?;
            assemble_ncrapt(x, examples, c, spec)
        }
    }
}

impl PromptLayout {
    /// Soft slot occurrences, counting repeats.
    pub fn soft_slot_count(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match &s.payload {
                Payload::Slots(r) => r.len() as usize,
                _ => 0,
            })
            .sum()
    }

    /// Distinct slot ids referenced by this layout.
    pub fn used_slot_ids(&self) -> usize {
        let mut ranges: Vec<SlotRange> = self
            .segments
            .iter()
            .filter_map(|s| match &s.payload {
                Payload::Slots(r) => Some(*r),
                _ => None,
            })
            .collect();
        ranges.sort_by_key(|r| (r.start, r.end));
        ranges.dedup();
        // allocated ranges never partially overlap
        ranges.iter().map(|r| r.len() as usize).sum()
    }

    /// Size of the slot vocabulary the layout's mode draws from: the
    /// number of distinct trainable prompt positions.
    pub fn slot_vocabulary(&self) -> usize {
        let s = &self.spec;
        let block = (s.class_prefix_len + s.infix_len) as usize;
        match self.mode {
            LayoutMode::Manual => 0,
            LayoutMode::Exemplar => block,
            LayoutMode::Rapt => s.global_prefix_len as usize + block,
            LayoutMode::NcRapt => s.global_prefix_len as usize + s.classes.len() * block,
        }
    }

    pub fn examples(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::ExampleInput)
            .count()
    }

    pub fn query(&self) -> Option<&TokenSeq> {
        self.segments.iter().find_map(|s| match (&s.kind, &s.payload) {
            (SegmentKind::QueryInput, Payload::Text(t)) => Some(t),
            _ => None,
        })
    }

    /// Checks the segment grammar, payload kinds, class consistency and
    /// example ordering.
    pub fn validate(&self) -> Result<()> {
        use SegmentKind::*;
        let bad = |i: usize, why: &str| Err(Error::argument(format!("segment {i}: {why}")));
        for (i, seg) in self.segments.iter().enumerate() {
            match (&seg.payload, seg.kind.is_prompt()) {
                (Payload::Text(_), true) => return bad(i, "prompt segment carries text"),
                (Payload::Slots(_), false) => return bad(i, "text segment carries slots"),
                (Payload::Literal(_), false) => return bad(i, "text segment carries a literal"),
                _ => {}
            }
            if seg.class.is_some() && !matches!(seg.kind, ClassPrefix | Infix) {
                return bad(i, "only prefix and infix segments carry a class");
            }
        }
        let kinds: Vec<SegmentKind> = self.segments.iter().map(|s| s.kind).collect();
        let mut pos = 0;
        if kinds.first() == Some(&GlobalPrefix) {
            pos = 1;
        }
        while kinds.len() >= pos + 4 && kinds[pos..pos + 4] == [ClassPrefix, ExampleInput, Infix, ExampleOutput] {
            let (p, i) = (&self.segments[pos], &self.segments[pos + 2]);
            if p.class != i.class {
                return bad(pos, "example prefix and infix classes differ");
            }
            pos += 4;
        }
        if kinds.get(pos) == Some(&ClassPrefix) {
            pos += 1;
        }
        if kinds[pos..] != [QueryInput, Infix] {
            return bad(pos, "layout does not end with the query and its infix");
        }
        if pos >= 1 && self.segments[pos - 1].kind == ClassPrefix
            && self.segments[pos - 1].class != self.segments[pos + 1].class
        {
            return bad(pos, "query prefix and infix classes differ");
        }
        if self.retrieved.windows(2).any(|w| w[0].similarity > w[1].similarity) {
            return Err(Error::argument("retrieved examples are not in ascending similarity order"));
        }
        Ok(())
    }
}

/// Counts backend tokens in a piece of text.
pub trait TokenCounter {
    fn count_tokens(&self, text: &str) -> Result<usize>;
}

/// Counts whitespace-separated words.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(text.split_whitespace().count())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLength {
    /// Soft slots plus tokens of every text segment.
    pub n: usize,
    /// Maximum total length: `n` plus [`DECODE_EXTRA_TOKENS`].
    pub budget: usize,
}

pub fn layout_length(layout: &PromptLayout, counter: &dyn TokenCounter) -> Result<PromptLength> {
    let mut n = 0;
    for (i, seg) in layout.segments.iter().enumerate() {
        n += match &seg.payload {
            Payload::Slots(r) => r.len() as usize,
            Payload::Text(t) => counter
                .count_tokens(&t.render())
                .map_err(|e| Error::argument(format!("counting segment {i}: {e}")))?,
            Payload::Literal(s) => counter
                .count_tokens(s)
                .map_err(|e| Error::argument(format!("counting segment {i}: {e}")))?,
        };
    }
    Ok(PromptLength {
        n,
        budget: n + DECODE_EXTRA_TOKENS,
    })
}

/// Assembles with all `examples`, dropping the least similar ones (the
/// front of the ascending list) until the prompt fits in `max_n` tokens.
pub fn fit_to_budget<F>(
    examples: &[Example],
    max_n: usize,
    counter: &dyn TokenCounter,
    assemble: F,
) -> Result<(PromptLayout, PromptLength)>
where
    F: Fn(&[Example]) -> Result<PromptLayout>,
{
    for dropped in 0..=examples.len() {
        let mut layout = assemble(&examples[dropped..])?;
        let len = layout_length(&layout, counter)?;
        if len.n <= max_n || dropped == examples.len() {
            layout.dropped_examples = dropped;
            return Ok((layout, len));
        }
    }
    unreachable!("loop returns on the last iteration")
}

/// Plain-text realization of a layout.
pub fn render_text(layout: &PromptLayout, template: &TextTemplate) -> Result<String> {
    template.render(layout)
}

#[cfg(test)]
mod tests;
