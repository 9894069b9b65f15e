use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rapt_core::backend::{embed_all, generate_batch, Backend, GenerationRequest, GeneratorCounter};
use rapt_core::dataio::{
    load_pairs, validate_split_sizes, write_atomic, write_outputs, DataFormat, DatasetSplit,
    GenerationRecord, LoadOptions, OutputRecords, ParaphrasePair, SplitName, SplitReport,
};
use rapt_core::metrics::{evaluate_all, EvalRecord, MetricReport};
use rapt_core::novelty::{label_dataset, LabeledPair, NoveltyClass};
use rapt_core::paramcount::{report_table, MethodSpec, ModelShape, ParamTable};
use rapt_core::promptkit::{
    assemble, fit_to_budget, layout_length, parse_completion, render_text, Example, LayoutMode,
    PromptLayout, TextTemplate, DECODE_EXTRA_TOKENS,
};
use rapt_core::retrieval::{
    ids_sidecar_path, read_embeddings_bin, write_embeddings_bin, EmbeddingTable, RetrievalIndex,
};
use rapt_core::textcore::{normalize, NormalizationConfig, TokenSeq};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::CliError;

pub const LABELED_FILE: &str = "labeled.jsonl";
pub const LABELED_META_FILE: &str = "labeled.meta.json";
pub const EMBEDDINGS_FILE: &str = "train.emb.bin";
pub const SNAPSHOT_FILE: &str = "config.resolved.toml";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GenerateMode {
    Manual,
    Rapt,
    Ncrapt,
    /// Prediction := input.
    Copy,
    /// Prediction := ground-truth target.
    GroundTruth,
}

impl GenerateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerateMode::Manual => "manual",
            GenerateMode::Rapt => "rapt",
            GenerateMode::Ncrapt => "ncrapt",
            GenerateMode::Copy => "copy",
            GenerateMode::GroundTruth => "ground-truth",
        }
    }

    fn layout(self) -> Option<LayoutMode> {
        match self {
            GenerateMode::Manual => Some(LayoutMode::Manual),
            GenerateMode::Rapt => Some(LayoutMode::Rapt),
            GenerateMode::Ncrapt => Some(LayoutMode::NcRapt),
            GenerateMode::Copy | GenerateMode::GroundTruth => None,
        }
    }
}

fn load_split(path: Option<&Path>, which: &str, allow_empty_target: bool) -> Result<Vec<ParaphrasePair>, CliError> {
    let path = path.ok_or_else(|| CliError::Usage(format!("no {which} data path configured")))?;
    Ok(load_pairs(
        path,
        DataFormat::from_path(path),
        LoadOptions { allow_empty_target },
    )?)
}

fn template(cfg: &PipelineConfig) -> Result<TextTemplate, CliError> {
    Ok(match &cfg.template {
        Some(p) => TextTemplate::load(p)?,
        None => TextTemplate::default(),
    })
}

/// Checks configured splits against the published sizes.
pub fn check_splits(cfg: &PipelineConfig) -> Result<SplitReport, CliError> {
    let mut splits = Vec::new();
    for (name, path) in [
        (SplitName::Train, &cfg.data.train),
        (SplitName::Validation, &cfg.data.validation),
        (SplitName::Test, &cfg.data.test),
    ] {
        if let Some(p) = path {
            splits.push(DatasetSplit::new(name, load_split(Some(p), &name.to_string(), true)?, None));
        }
    }
    Ok(validate_split_sizes(&splits, &cfg.data.dataset))
}

#[derive(Debug, Serialize)]
struct LabelMeta<'a> {
    ter_direction: &'a str,
    thresholds: rapt_core::novelty::NoveltyThresholds,
    normalization: NormalizationConfig,
    histogram: &'a BTreeMap<NoveltyClass, usize>,
    rejected: Vec<(usize, &'a str, &'a str)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSummary {
    pub output: PathBuf,
    pub labeled: Vec<LabeledPair>,
    pub histogram: BTreeMap<NoveltyClass, usize>,
    pub rejected: usize,
}

pub fn cmd_label(cfg: &PipelineConfig, input: Option<&Path>, output: Option<&Path>) -> Result<LabelSummary, CliError> {
    let pairs = load_split(input.or(cfg.data.train.as_deref()), "train", false)?;
    let labeling = label_dataset(&pairs, &cfg.normalization, &cfg.thresholds)?;
    let histogram = labeling.histogram();
    let out = output.map_or_else(|| cfg.out_dir.join(LABELED_FILE), Path::to_path_buf);
    write_outputs(OutputRecords::Labeled(&labeling.labeled), &out)?;
    let meta = LabelMeta {
        ter_direction: "hypothesis=target reference=source",
        thresholds: cfg.thresholds,
        normalization: cfg.normalization,
        histogram: &histogram,
        rejected: labeling
            .rejected
            .iter()
            .map(|r| (r.index, r.id.as_str(), r.reason.as_str()))
            .collect(),
    };
    let meta_json = serde_json::to_string_pretty(&meta).expect("serializable metadata");
    write_atomic(&out.with_extension("meta.json"), meta_json.as_bytes())?;
    for r in &labeling.rejected {
        warn!("pair {} rejected: {}", r.id, r.reason);
    }
    Ok(LabelSummary {
        output: out,
        histogram,
        rejected: labeling.rejected.len(),
        labeled: labeling.labeled,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSummary {
    pub output: PathBuf,
    pub count: usize,
    pub dim: usize,
}

pub fn cmd_index(
    cfg: &PipelineConfig,
    backend: &Backend,
    input: Option<&Path>,
    output: Option<&Path>,
) -> Result<IndexSummary, CliError> {
    let pairs = load_split(input.or(cfg.data.train.as_deref()), "train", false)?;
    let table = embed_pairs(backend, &pairs)?;
    let out = output.map_or_else(|| cfg.out_dir.join(EMBEDDINGS_FILE), Path::to_path_buf);
    write_embeddings_bin(&out, &ids_sidecar_path(&out), &table)?;
    Ok(IndexSummary {
        output: out,
        count: table.len(),
        dim: table.dim()?,
    })
}

const EMBED_BATCH: usize = 64;

fn embed_pairs(backend: &Backend, pairs: &[ParaphrasePair]) -> Result<EmbeddingTable, CliError> {
    if pairs.is_empty() {
        return Ok(EmbeddingTable::default());
    }
    let texts: Vec<String> = pairs.iter().map(|p| p.source.clone()).collect();
    let vectors = embed_all(backend.embedder.as_ref(), &texts, EMBED_BATCH)?;
    Ok(EmbeddingTable::new(pairs.iter().map(|p| p.id.clone()).collect(), vectors)?)
}

/// Training embeddings from the output directory, or computed when absent.
fn training_index(cfg: &PipelineConfig, backend: &Backend, train: &[ParaphrasePair]) -> Result<RetrievalIndex, CliError> {
    let path = cfg.out_dir.join(EMBEDDINGS_FILE);
    let table = if path.exists() {
        info!("using embeddings from {}", path.display());
        read_embeddings_bin(&path, &ids_sidecar_path(&path))?
    } else {
        embed_pairs(backend, train)?
    };
    let by_id: HashMap<&str, &ParaphrasePair> = train.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut records = Vec::with_capacity(table.len());
    for (id, v) in table.ids.iter().zip(table.vectors) {
        let pair = by_id.get(id.as_str()).ok_or_else(|| {
            CliError::Data(rapt_core::Error::IndexBuild {
                id: id.clone(),
                reason: "embedding has no training pair".into(),
            })
        })?;
        records.push(((*pair).clone(), v));
    }
    Ok(RetrievalIndex::build(records)?)
}

/// Novelty classes from the labeled file, or computed when absent.
fn training_classes(cfg: &PipelineConfig, train: &[ParaphrasePair]) -> Result<HashMap<String, NoveltyClass>, CliError> {
    let path = cfg.out_dir.join(LABELED_FILE);
    let labeled = if path.exists() {
        rapt_core::dataio::load_labeled(&path)?
    } else {
        label_dataset(train, &cfg.normalization, &cfg.thresholds)?.labeled
    };
    Ok(labeled.into_iter().map(|l| (l.pair.id, l.novelty)).collect())
}

/// One issued generation request, for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestLog {
    pub id: String,
    pub prompt_n: usize,
    pub max_new_tokens: usize,
    pub budget: usize,
    pub examples: Vec<String>,
    pub dropped_examples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_class: Option<NoveltyClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub output: PathBuf,
    pub records: Vec<GenerationRecord>,
    pub requests: Vec<RequestLog>,
    pub layouts: Vec<PromptLayout>,
    pub prompts: Vec<String>,
    pub unparsed: usize,
}

pub fn generations_path(cfg: &PipelineConfig, mode: GenerateMode) -> PathBuf {
    cfg.out_dir.join(format!("generations.{}.jsonl", mode.as_str()))
}

pub fn cmd_generate(
    cfg: &PipelineConfig,
    backend: &Backend,
    mode: GenerateMode,
    input: Option<&Path>,
    output: Option<&Path>,
) -> Result<GenerateSummary, CliError> {
    let test = load_split(input.or(cfg.data.test.as_deref()), "test", true)?;
    let out = output.map_or_else(|| generations_path(cfg, mode), Path::to_path_buf);
    let Some(layout_mode) = mode.layout() else {
        let records: Vec<GenerationRecord> = test
            .iter()
            .map(|p| GenerationRecord {
                id: p.id.clone(),
                prompt_n: 0,
                output: if mode == GenerateMode::Copy { p.source.clone() } else { p.target.clone() },
            })
            .collect();
        write_outputs(OutputRecords::Generations(&records), &out)?;
        return Ok(GenerateSummary {
            output: out,
            records,
            requests: Vec::new(),
            layouts: Vec::new(),
            prompts: Vec::new(),
            unparsed: 0,
        });
    };

    let tpl = template(cfg)?;
    let conditioned = layout_mode == LayoutMode::NcRapt;
    let spec = cfg.slot_spec(conditioned);
    let query_class = conditioned.then_some(cfg.query_class);
    let retrieving = layout_mode != LayoutMode::Manual;

    let (index, classes) = if retrieving {
        let train = load_split(cfg.data.train.as_deref(), "train", false)?;
        let index = training_index(cfg, backend, &train)?;
        if index.is_empty() {
            warn!("retrieval index is empty; prompts will carry no examples");
        }
        let classes = if conditioned { training_classes(cfg, &train)? } else { HashMap::new() };
        (Some(index), classes)
    } else {
        (None, HashMap::new())
    };
    let query_vectors = match &index {
        Some(idx) if !idx.is_empty() && !test.is_empty() => {
            let texts: Vec<String> = test.iter().map(|p| p.source.clone()).collect();
            embed_all(backend.embedder.as_ref(), &texts, EMBED_BATCH)?
        }
        _ => Vec::new(),
    };

    let counter = GeneratorCounter(backend.generator.as_ref());
    let mut layouts = Vec::with_capacity(test.len());
    let mut requests = Vec::with_capacity(test.len());
    let mut logs = Vec::with_capacity(test.len());
    for (i, pair) in test.iter().enumerate() {
        let x = TokenSeq::from_whitespace(&pair.source);
        let mut examples = Vec::new();
        if let (Some(idx), Some(q)) = (&index, query_vectors.get(i)) {
            let exclude: HashSet<String> = [pair.id.clone()].into();
            let seed = cfg.retrieval.seed ^ (i as u64);
            let hits = idx.query(cfg.retrieval.strategy, q, cfg.retrieval.k, &exclude, seed)?;
            // most similar last, next to the query
            for n in hits.iter().rev() {
                let p = &n.record.pair;
                examples.push(Example {
                    id: p.id.clone(),
                    input: TokenSeq::from_whitespace(&p.source),
                    output: TokenSeq::from_whitespace(&p.target),
                    similarity: n.similarity,
                    novelty: if conditioned {
                        Some(*classes.get(&p.id).ok_or_else(|| {
                            CliError::Data(rapt_core::Error::Argument(format!("training pair {} has no novelty label", p.id)))
                        })?)
                    } else {
                        None
                    },
                });
            }
        }
        let build = |e: &[Example]| assemble(layout_mode, &x, e, query_class, &spec);
        let (layout, len) = match cfg.max_prompt_tokens {
            Some(max) => fit_to_budget(&examples, max, &counter, build)?,
            None => {
                let l = build(&examples)?;
                let len = layout_length(&l, &counter)?;
                (l, len)
            }
        };
        if layout.dropped_examples > 0 {
            warn!("{}: dropped {} example(s) to fit the prompt budget", pair.id, layout.dropped_examples);
        }
        let prompt = render_text(&layout, &tpl)?;
        let mut req = GenerationRequest::new(pair.id.clone(), prompt);
        req.max_new_tokens = len.budget - len.n;
        req.prompt_n = len.n;
        if retrieving {
            req.layout = Some(layout.clone());
        }
        logs.push(RequestLog {
            id: pair.id.clone(),
            prompt_n: len.n,
            max_new_tokens: req.max_new_tokens,
            budget: len.budget,
            examples: layout.retrieved.iter().map(|r| r.id.clone()).collect(),
            dropped_examples: layout.dropped_examples,
            query_class,
        });
        debug_assert_eq!(len.budget, len.n + DECODE_EXTRA_TOKENS);
        layouts.push(layout);
        requests.push(req);
    }

    let responses = generate_batch(backend.generator.as_ref(), &requests, cfg.backend.max_in_flight);
    let mut records = Vec::with_capacity(test.len());
    let mut unparsed = 0;
    for (req, resp) in requests.iter().zip(responses) {
        let resp = resp?;
        let raw = format!("{}{}", req.prompt, resp.text);
        let output = match parse_completion(&raw, &tpl, &NormalizationConfig::raw()) {
            Ok(tokens) => tokens.render(),
            Err(e) => {
                warn!("{}: {e}", req.id);
                unparsed += 1;
                String::new()
            }
        };
        records.push(GenerationRecord {
            id: req.id.clone(),
            prompt_n: req.prompt_n,
            output,
        });
    }
    write_outputs(OutputRecords::Generations(&records), &out)?;
    let log_path = cfg.out_dir.join(format!("requests.{}.jsonl", mode.as_str()));
    write_atomic(&log_path, rapt_core::dataio::to_jsonl(&logs).as_bytes())?;
    Ok(GenerateSummary {
        output: out,
        records,
        requests: logs,
        layouts,
        prompts: requests.into_iter().map(|r| r.prompt).collect(),
        unparsed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub label: String,
    pub report: MetricReport,
    pub table: String,
    pub output: PathBuf,
}

pub fn cmd_eval(
    cfg: &PipelineConfig,
    backend: Option<&Backend>,
    generations: &Path,
    input: Option<&Path>,
    label: &str,
) -> Result<EvalSummary, CliError> {
    let test = load_split(input.or(cfg.data.test.as_deref()), "test", false)?;
    let gens = rapt_core::dataio::load_generations(generations)?;
    let by_id: HashMap<&str, &GenerationRecord> = gens.iter().map(|g| (g.id.as_str(), g)).collect();
    let norm = &cfg.normalization;
    let mut records = Vec::with_capacity(test.len());
    let mut outputs = Vec::with_capacity(test.len());
    for p in &test {
        let g = by_id.get(p.id.as_str()).ok_or_else(|| {
            CliError::Data(rapt_core::Error::Data {
                path: generations.to_path_buf(),
                line: 0,
                reason: format!("no generation for test id {:?}", p.id),
            })
        })?;
        records.push(EvalRecord::new(
            normalize(&p.source, norm),
            normalize(&g.output, norm),
            vec![normalize(&p.target, norm)],
        )?);
        outputs.push(g.output.clone());
    }
    let vectors = match backend {
        Some(b) if cfg.semantic && !test.is_empty() => {
            let sources: Vec<String> = test.iter().map(|p| p.source.clone()).collect();
            let s = embed_all(b.embedder.as_ref(), &sources, EMBED_BATCH)?;
            let o = embed_all(b.embedder.as_ref(), &outputs, EMBED_BATCH)?;
            Some(s.into_iter().zip(o).map(|(a, b)| (a.0, b.0)).collect::<Vec<_>>())
        }
        _ => None,
    };
    let report = evaluate_all(&records, vectors.as_deref(), *norm)?;
    let rows = vec![(label.to_string(), report.clone())];
    let out = cfg.out_dir.join(REPORT_FILE);
    write_outputs(OutputRecords::ReportCsv(&rows), &out)?;
    Ok(EvalSummary {
        label: label.into(),
        table: MetricReport::render_table(&rows),
        report,
        output: out,
    })
}

pub fn cmd_params(custom: Option<(u64, u64, u64, u64)>) -> Result<ParamTable, CliError> {
    let shapes = match custom {
        Some((layers, width, vocab, positions)) => {
            vec![ModelShape::custom(layers, width, vocab, positions).map_err(|e| CliError::Usage(e.to_string()))?]
        }
        None => vec![ModelShape::GPT2_MEDIUM, ModelShape::GPT2_LARGE],
    };
    Ok(report_table(&shapes, &MethodSpec::defaults())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub label: LabelSummary,
    pub index: IndexSummary,
    pub generate: GenerateSummary,
    pub eval: EvalSummary,
}

/// label, index, generate and eval in sequence.
pub fn cmd_pipeline(cfg: &PipelineConfig, backend: &Backend, mode: GenerateMode) -> Result<PipelineSummary, CliError> {
    let splits = check_splits(cfg)?;
    if splits.known && !splits.all_match() {
        warn!("{splits}");
    }
    let label = cmd_label(cfg, None, None)?;
    let index = cmd_index(cfg, backend, None, None)?;
    let generate = cmd_generate(cfg, backend, mode, None, None)?;
    let eval = cmd_eval(cfg, Some(backend), &generate.output, None, mode.as_str())?;
    Ok(PipelineSummary {
        label,
        index,
        generate,
        eval,
    })
}

/// Writes the effective configuration beside the outputs.
pub fn write_snapshot(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let path = cfg.out_dir.join(SNAPSHOT_FILE);
    write_atomic(&path, cfg.to_toml().as_bytes())?;
    Ok(path)
}
