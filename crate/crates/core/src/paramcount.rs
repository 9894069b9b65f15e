//! Trainable-parameter counts for full fine-tuning and the parameter-efficient
//! adaptation methods, in exact integer arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of a GPT-2 style decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelShape {
    pub name: &'static str,
    pub layers: u64,
    pub width: u64,
    pub ffn_width: u64,
    pub vocab: u64,
    pub positions: u64,
    /// Output projection shares the token embedding matrix.
    pub lm_head_tied: bool,
}

impl ModelShape {
    pub const GPT2_MEDIUM: ModelShape = ModelShape::gpt2("GPT2 Medium", 24, 1024);
    pub const GPT2_LARGE: ModelShape = ModelShape::gpt2("GPT2 Large", 36, 1280);

    const fn gpt2(name: &'static str, layers: u64, width: u64) -> Self {
        Self {
            name,
            layers,
            width,
            ffn_width: 4 * width,
            vocab: 50_257,
            positions: 1_024,
            lm_head_tied: true,
        }
    }

    pub fn custom(layers: u64, width: u64, vocab: u64, positions: u64) -> Result<Self> {
        let s = Self {
            name: "custom",
            layers,
            width,
            ffn_width: 4 * width,
            vocab,
            positions,
            lm_head_tied: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.layers, self.width, self.ffn_width, self.vocab, self.positions].contains(&0) {
            return Err(Error::argument(format!("model shape {self:?} has a zero dimension")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoraSpec {
    pub rank: u64,
    pub query: bool,
    pub value: bool,
}

impl Default for LoraSpec {
    fn default() -> Self {
        Self {
            rank: 8,
            query: true,
            value: true,
        }
    }
}

impl LoraSpec {
    fn targets(&self) -> u64 {
        u64::from(self.query) + u64::from(self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prefix: u64,
    pub infix: u64,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self { prefix: 256, infix: 8 }
    }
}

/// Retrieval-augmented prompt lengths: global prefix `m`, per-example
/// prefix `s`, infix `t`, and number of novelty classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaptSpec {
    pub global_prefix: u64,
    pub class_prefix: u64,
    pub infix: u64,
    pub classes: u64,
}

impl Default for RaptSpec {
    fn default() -> Self {
        Self {
            global_prefix: 256 - 8,
            class_prefix: 8,
            infix: 8,
            classes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodSpec {
    FineTune,
    Adapter {
        bottleneck: u64,
        per_layer: u64,
        tune_layernorm: bool,
    },
    Lora(LoraSpec),
    PromptTune(PromptSpec),
    Lpt(LoraSpec, PromptSpec),
    Rapt(LoraSpec, RaptSpec),
    NcRapt(LoraSpec, RaptSpec),
}

impl MethodSpec {
    /// The seven methods with default hyperparameters, in table order.
    pub fn defaults() -> [MethodSpec; 7] {
        [
            MethodSpec::FineTune,
            MethodSpec::Adapter {
                bottleneck: 512,
                per_layer: 1,
                tune_layernorm: true,
            },
            MethodSpec::Lora(LoraSpec::default()),
            MethodSpec::PromptTune(PromptSpec::default()),
            MethodSpec::Lpt(LoraSpec::default(), PromptSpec::default()),
            MethodSpec::Rapt(LoraSpec::default(), RaptSpec::default()),
            MethodSpec::NcRapt(LoraSpec::default(), RaptSpec::default()),
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::FineTune => "Fine Tuning",
            MethodSpec::Adapter { .. } => "Adapter Tuning",
            MethodSpec::Lora(_) => "LoRA Tuning",
            MethodSpec::PromptTune(_) => "Prompt Tuning",
            MethodSpec::Lpt(..) => "LPT",
            MethodSpec::Rapt(..) => "RAPT",
            MethodSpec::NcRapt(..) => "NC-RAPT",
        }
    }

    /// Parses a method name with default hyperparameters.
    pub fn from_name(name: &str) -> Result<Self> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let defaults = Self::defaults();
        let idx = match key.as_str() {
            "finetune" | "finetuning" | "ft" => 0,
            "adapter" | "adaptertuning" => 1,
            "lora" | "loratuning" => 2,
            "prompt" | "prompttune" | "prompttuning" => 3,
            "lpt" => 4,
            "rapt" => 5,
            "ncrapt" => 6,
            _ => return Err(Error::argument(format!("unknown adaptation method {name:?}"))),
        };
        Ok(defaults[idx])
    }
}

fn linear(inp: u64, out: u64) -> u64 {
    inp * out + out
}

/// Every parameter of the model: embeddings, blocks, final layer norm.
pub fn full_params(shape: &ModelShape) -> u64 {
    let d = shape.width;
    let block = linear(d, 3 * d) // fused qkv
        + linear(d, d) // attention output
        + linear(d, shape.ffn_width)
        + linear(shape.ffn_width, d)
        + 2 * (2 * d); // two layer norms
    let head = if shape.lm_head_tied { 0 } else { shape.vocab * d };
    shape.vocab * d + shape.positions * d + shape.layers * block + 2 * d + head
}

fn lora_params(shape: &ModelShape, lora: &LoraSpec) -> u64 {
    // B (d x r) and A (r x k) per adapted square matrix
    shape.layers * lora.targets() * lora.rank * (shape.width + shape.width)
}

fn check_lora(lora: &LoraSpec) -> Result<()> {
    if lora.rank == 0 {
        return Err(Error::argument("LoRA rank must be at least 1"));
    }
    if lora.targets() == 0 {
        return Err(Error::argument("LoRA needs at least one target matrix"));
    }
    Ok(())
}

fn check_rapt(r: &RaptSpec) -> Result<()> {
    if r.class_prefix == 0 || r.infix == 0 || r.classes == 0 {
        return Err(Error::argument(format!("invalid prompt slot lengths {r:?}")));
    }
    Ok(())
}

pub fn trainable_params(shape: &ModelShape, method: &MethodSpec) -> Result<u64> {
    shape.validate()?;
    let d = shape.width;
    let l = shape.layers;
    Ok(match method {
        MethodSpec::FineTune => full_params(shape),
        MethodSpec::Adapter {
            bottleneck,
            per_layer,
            tune_layernorm,
        } => {
            if *bottleneck == 0 || *per_layer == 0 {
                return Err(Error::argument("adapter bottleneck and count must be positive"));
            }
            let adapter = linear(d, *bottleneck) + linear(*bottleneck, d);
            let layernorm = if *tune_layernorm { (2 * l + 1) * 2 * d } else { 0 };
            l * adapter * per_layer + layernorm
        }
        MethodSpec::Lora(lora) => {
            check_lora(lora)?;
            lora_params(shape, lora)
        }
        MethodSpec::PromptTune(p) => (p.prefix + p.infix) * d,
        MethodSpec::Lpt(lora, p) => {
            check_lora(lora)?;
            lora_params(shape, lora) + (p.prefix + p.infix) * d
        }
        MethodSpec::Rapt(lora, r) => {
            check_lora(lora)?;
            check_rapt(r)?;
            (r.global_prefix + r.class_prefix + r.infix) * d + lora_params(shape, lora)
        }
        MethodSpec::NcRapt(lora, r) => {
            check_lora(lora)?;
            check_rapt(r)?;
            (r.global_prefix + r.classes * (r.class_prefix + r.infix)) * d + lora_params(shape, lora)
        }
    })
}

/// Methods x shapes count table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamTable {
    pub shapes: Vec<ModelShape>,
    pub rows: Vec<(MethodSpec, Vec<u64>)>,
}

pub fn report_table(shapes: &[ModelShape], methods: &[MethodSpec]) -> Result<ParamTable> {
    if shapes.is_empty() || methods.is_empty() {
        return Err(Error::argument("parameter table needs at least one shape and one method"));
    }
    let rows = methods
        .iter()
        .map(|m| {
            let counts = shapes
                .iter()
                .map(|s| trainable_params(s, m))
                .collect::<Result<Vec<_>>>()?;
            Ok((*m, counts))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamTable {
        shapes: shapes.to_vec(),
        rows,
    })
}

/// `354823168` -> `354,823,168`.
pub fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl ParamTable {
    pub fn get(&self, method_label: &str, shape_name: &str) -> Option<u64> {
        let col = self.shapes.iter().position(|s| s.name == shape_name)?;
        self.rows
            .iter()
            .find(|(m, _)| m.label() == method_label)
            .map(|(_, counts)| counts[col])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("Model");
        for s in &self.shapes {
            out.push(',');
            out.push_str(s.name);
        }
        out.push('\n');
        for (m, counts) in &self.rows {
            out.push_str(m.label());
            for c in counts {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for ParamTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label_w = self.rows.iter().map(|(m, _)| m.label().len()).max().unwrap_or(5).max(5);
        let col_w: Vec<usize> = self
            .shapes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                self.rows
                    .iter()
                    .map(|(_, c)| group_thousands(c[i]).len())
                    .chain(std::iter::once(s.name.len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        write!(f, "{:<label_w$}", "Model")?;
        for (s, w) in self.shapes.iter().zip(&col_w) {
            write!(f, "  {:>w$}", s.name)?;
        }
        writeln!(f)?;
        for (m, counts) in &self.rows {
            write!(f, "{:<label_w$}", m.label())?;
            for (c, w) in counts.iter().zip(&col_w) {
                write!(f, "  {:>w$}", group_thousands(*c))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
