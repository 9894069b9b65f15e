use super::*;
use std::collections::HashSet;
use std::path::Path;

use crate::textcore::NormalizationConfig;
use NoveltyClass::*;

fn seq(s: &str) -> TokenSeq {
    TokenSeq::from_whitespace(s)
}

fn ex(id: &str, sim: f64, novelty: Option<NoveltyClass>) -> Example {
    Example {
        id: id.into(),
        input: seq(&format!("in {id}")),
        output: seq(&format!("out {id}")),
        similarity: sim,
        novelty,
    }
}

fn kinds(l: &PromptLayout) -> Vec<SegmentKind> {
    l.segments.iter().map(|s| s.kind).collect()
}

#[test]
fn manual_layout() {
    let l = assemble_manual(&seq("hello")).unwrap();
    assert_eq!(l.segments.len(), 3);
    let t = TextTemplate::default();
    let text = render_text(&l, &t).unwrap();
    assert_eq!(text, "Input: hello\nParaphrase:");
    let back = parse_manual(&text, &t).unwrap();
    assert_eq!(kinds(&back), kinds(&l));
    assert_eq!(back, l);
    l.validate().unwrap();
    assert!(assemble_manual(&TokenSeq::empty()).is_err());
}

#[test]
fn exemplar_follows_generating_order() {
    use SegmentKind::*;
    let spec = SlotSpec::default();
    let l = assemble_exemplar(&seq("q"), &[ex("2", 0.1, None), ex("1", 0.9, None)], &spec).unwrap();
    assert_eq!(
        kinds(&l),
        [
            ClassPrefix, ExampleInput, Infix, ExampleOutput, ClassPrefix, ExampleInput, Infix,
            ExampleOutput, ClassPrefix, QueryInput, Infix
        ]
    );
    assert_eq!(l.soft_slot_count(), 3 * 16);
    assert_eq!(l.used_slot_ids(), 16);
    l.validate().unwrap();
    let bare = assemble_exemplar(&seq("q"), &[], &spec).unwrap();
    assert_eq!(kinds(&bare), [ClassPrefix, QueryInput, Infix]);
}

#[test]
fn rapt_slot_counts_and_order() {
    let spec = SlotSpec::default();
    let l = assemble_rapt(&seq("q"), &[ex("a", 0.2, None), ex("b", 0.7, None)], &spec).unwrap();
    assert_eq!(l.segments[0].kind, SegmentKind::GlobalPrefix);
    assert_eq!(l.soft_slot_count(), 296);
    assert_eq!(l.slot_vocabulary(), 248 + 16);
    let desc = assemble_rapt(&seq("q"), &[ex("b", 0.7, None), ex("a", 0.2, None)], &spec);
    assert!(desc.is_err());
    let k0 = assemble_rapt(&seq("q"), &[], &spec).unwrap();
    assert_eq!(k0.segments.len(), 4);
    assert_eq!(k0.soft_slot_count(), 248 + 16);

    let text = render_text(&l, &TextTemplate::default()).unwrap();
    let (pa, pb, pq) = (text.find("in a").unwrap(), text.find("in b").unwrap(), text.find("Input: q").unwrap());
    assert!(pa < pb && pb < pq);
    assert_eq!(text, render_text(&l, &TextTemplate::default()).unwrap());
}

#[test]
fn ncrapt_class_ranges() {
    let spec = SlotSpec::conditioned();
    let l = assemble_ncrapt(&seq("q"), &[ex("a", 0.1, Some(Low)), ex("b", 0.2, Some(High))], Medium, &spec)
        .unwrap();
    l.validate().unwrap();
    let prefix_ranges: HashSet<SlotRange> = l
        .segments
        .iter()
        .filter(|s| s.kind == SegmentKind::ClassPrefix)
        .map(|s| match s.payload {
            Payload::Slots(r) => r,
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(prefix_ranges.len(), 3);
    assert_eq!(l.soft_slot_count(), 296);
    assert_eq!(l.slot_vocabulary(), 296);
    assert_eq!(l.used_slot_ids(), 296);

    let high = assemble_ncrapt(&seq("q"), &[ex("a", 0.1, Some(High)), ex("b", 0.2, Some(High))], High, &spec)
        .unwrap();
    let want = spec.prefix_slots(Some(High)).unwrap();
    assert!(high
        .segments
        .iter()
        .filter(|s| s.kind == SegmentKind::ClassPrefix)
        .all(|s| s.payload == Payload::Slots(want)));

    let narrow = SlotSpec {
        classes: vec![Low, High],
        ..SlotSpec::default()
    };
    assert!(assemble_ncrapt(&seq("q"), &[], Medium, &narrow).is_err());
    assert!(assemble_ncrapt(&seq("q"), &[ex("a", 0.1, None)], Low, &spec).is_err());
}

#[test]
fn class_tags_in_discrete_mode() {
    let spec = SlotSpec::conditioned();
    let l = assemble_ncrapt(&seq("q"), &[], High, &spec).unwrap();
    let mut t = TextTemplate::default();
    assert_eq!(render_text(&l, &t).unwrap(), "Input: q\nParaphrase: (high)");
    t.class_tags.remove(&High);
    assert!(render_text(&l, &t).is_err());
}

#[test]
fn layout_length_and_budget() {
    let l = assemble_manual(&seq("a b c")).unwrap();
    let len = layout_length(&l, &WhitespaceCounter).unwrap();
    assert_eq!(len, PromptLength { n: 1 + 3 + 1, budget: 105 });

    struct Fixed;
    impl TokenCounter for Fixed {
        fn count_tokens(&self, _: &str) -> Result<usize> {
            Ok(10)
        }
    }
    let r = assemble_rapt(&seq("q"), &[ex("a", 0.2, None), ex("b", 0.7, None)], &SlotSpec::default()).unwrap();
    // five text segments at 10 tokens each
    assert_eq!(layout_length(&r, &Fixed).unwrap(), PromptLength { n: 346, budget: 446 });

    struct Failing;
    impl TokenCounter for Failing {
        fn count_tokens(&self, _: &str) -> Result<usize> {
            Err(Error::argument("nope"))
        }
    }
    let e = layout_length(&r, &Failing).unwrap_err().to_string();
    assert!(e.contains("segment 2"), "{e}");
}

#[test]
fn budget_drops_least_similar_first() {
    let spec = SlotSpec::default();
    let exs = [ex("far", 0.1, None), ex("near", 0.9, None)];
    let x = seq("q");
    let full = layout_length(&assemble_rapt(&x, &exs, &spec).unwrap(), &WhitespaceCounter).unwrap();
    let (l, len) = fit_to_budget(&exs, full.n - 1, &WhitespaceCounter, |e| assemble_rapt(&x, e, &spec)).unwrap();
    assert_eq!(l.dropped_examples, 1);
    assert_eq!(l.retrieved[0].id, "near");
    assert!(len.n < full.n);
    let (l, _) = fit_to_budget(&exs, full.n, &WhitespaceCounter, |e| assemble_rapt(&x, e, &spec)).unwrap();
    assert_eq!(l.dropped_examples, 0);
}

#[test]
fn validator_rejects_bad_layouts() {
    let mut l = assemble_rapt(&seq("q"), &[ex("a", 0.2, None)], &SlotSpec::default()).unwrap();
    l.segments.swap(1, 2);
    assert!(l.validate().is_err());
    let mut l = assemble_manual(&seq("q")).unwrap();
    l.segments[1].payload = Payload::Slots(SlotRange::new(0, 1));
    assert!(l.validate().is_err());
    let mut l = assemble_manual(&seq("q")).unwrap();
    l.segments.pop();
    assert!(l.validate().is_err());
}

#[test]
fn json_round_trip() {
    let l = assemble_ncrapt(&seq("q r"), &[ex("a", 0.1, Some(Low))], High, &SlotSpec::conditioned()).unwrap();
    let json = serde_json::to_string(&l).unwrap();
    assert!(json.contains(r#""kind":"class_prefix","class":"low","slots":{"start":248,"end":256}"#), "{json}");
    assert!(json.contains(r#""kind":"query_input","text":["q","r"]"#), "{json}");
    let back: PromptLayout = serde_json::from_str(&json).unwrap();
    assert_eq!(back, l);
}

#[test]
fn completion_parsing() {
    let t = TextTemplate::default();
    let cfg = NormalizationConfig::default();
    let got = parse_completion("…\nParaphrase: how do i learn\nInput:", &t, &cfg).unwrap();
    assert_eq!(got, seq("how do i learn"));
    let tagged = parse_completion("Input: x\nParaphrase: (low) Same thing", &t, &cfg).unwrap();
    assert_eq!(tagged, seq("same thing"));
    assert!(matches!(
        parse_completion("Input: x\nParaphrase:   \nmore", &t, &cfg),
        Err(Error::Completion { .. })
    ));
    assert!(matches!(parse_completion("no marker", &t, &cfg), Err(Error::Completion { .. })));
}

#[test]
fn template_files() {
    let p = Path::new("t.txt");
    let t = TextTemplate::parse("# custom\nprefix=Q:\ninfix=\\nA:\ntag.high= [H]\n", p).unwrap();
    assert_eq!(t.prefix, "Q:");
    assert_eq!(t.infix, "\nA:");
    assert_eq!(t.marker(), "A:");
    assert_eq!(t.class_tags[&High], " [H]");
    assert_eq!(TextTemplate::parse(&t.to_file_string(), p).unwrap(), t);
    assert!(TextTemplate::parse("bogus=1\n", p).is_err());
    assert!(TextTemplate::parse("prefix\n", p).is_err());
    assert!(TextTemplate::parse("infix=  \n", p).is_err());
}
