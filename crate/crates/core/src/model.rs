//! Domain types and the line-delimited dataset formats.
//!
//! Contrastive datasets hold one JSON object per line with the fields
//! `source_id, context, question, golden_answer, positive, neg_type1,
//! neg_type2, neg_type3`, in that order. Conflict datasets hold
//! `id, context, question, contextual_answer, parametric_answer`.
//! Writers always emit that canonical field order, compact, one `\n` per record.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorTriplet {
    pub source_id: String,
    pub context: String,
    pub question: String,
    pub golden_answer: String,
}

impl AnchorTriplet {
    pub fn new(
        source_id: impl Into<String>,
        context: impl Into<String>,
        question: impl Into<String>,
        golden_answer: impl Into<String>,
    ) -> Result<Self> {
        let anchor = AnchorTriplet {
            source_id: source_id.into(),
            context: context.into(),
            question: question.into(),
            golden_answer: golden_answer.into(),
        };
        anchor.check().map_err(|r| Error::Validation(format!("{}: {r}", anchor.source_id)))?;
        Ok(anchor)
    }

    pub fn check(&self) -> std::result::Result<(), Invalid> {
        if self.source_id.trim().is_empty() {
            return Err(Invalid::EmptyField("source_id"));
        }
        for (name, value) in [
            ("context", &self.context),
            ("question", &self.question),
            ("golden_answer", &self.golden_answer),
        ] {
            if value.trim().is_empty() {
                return Err(Invalid::EmptyField(name));
            }
        }
        Ok(())
    }
}

/// The three kinds of unfaithful answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NegativeType {
    /// Adds information the context never states.
    #[serde(rename = "type1")]
    InjectedExternal,
    /// Alters or denies a fact stated in the context.
    #[serde(rename = "type2")]
    ContextConflicting,
    /// Drawn from the context but does not answer the question.
    #[serde(rename = "type3")]
    Irrelevant,
}

impl NegativeType {
    pub const ALL: [NegativeType; 3] = [
        NegativeType::InjectedExternal,
        NegativeType::ContextConflicting,
        NegativeType::Irrelevant,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            NegativeType::InjectedExternal => "type1",
            NegativeType::ContextConflicting => "type2",
            NegativeType::Irrelevant => "type3",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.tag() == tag)
    }

    pub fn index(self) -> usize {
        match self {
            NegativeType::InjectedExternal => 0,
            NegativeType::ContextConflicting => 1,
            NegativeType::Irrelevant => 2,
        }
    }
}

impl fmt::Display for NegativeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Why a record failed an invariant. `as_str` gives the stable reason tag
/// used in load reports and generation reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invalid {
    EmptyField(&'static str),
    PositiveEqualsGold,
    NegativeEqualsGold(NegativeType),
    NegativeEqualsPositive(NegativeType),
    NegativeSet,
    DuplicateId(String),
    AnswersIndistinct,
}

impl Invalid {
    pub fn as_str(&self) -> &'static str {
        match self {
            Invalid::EmptyField(_) => "empty_field",
            Invalid::PositiveEqualsGold => "positive_equals_gold",
            Invalid::NegativeEqualsGold(_) => "negative_equals_gold",
            Invalid::NegativeEqualsPositive(_) => "negative_equals_positive",
            Invalid::NegativeSet => "negative_set",
            Invalid::DuplicateId(_) => "duplicate_id",
            Invalid::AnswersIndistinct => "answers_indistinct",
        }
    }
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Invalid::EmptyField(name) => write!(f, "field `{name}` is empty"),
            Invalid::PositiveEqualsGold => f.write_str("positive equals the golden answer"),
            Invalid::NegativeEqualsGold(t) => write!(f, "{t} negative equals the golden answer"),
            Invalid::NegativeEqualsPositive(t) => write!(f, "{t} negative equals the positive"),
            Invalid::NegativeSet => f.write_str("negatives must contain each type exactly once"),
            Invalid::DuplicateId(id) => write!(f, "duplicate id `{id}`"),
            Invalid::AnswersIndistinct => {
                f.write_str("contextual and parametric answers are equal after normalization")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveSample {
    pub anchor: AnchorTriplet,
    pub positive: String,
    /// Always ordered type1, type2, type3.
    pub negatives: Vec<(NegativeType, String)>,
}

impl ContrastiveSample {
    pub fn new(anchor: AnchorTriplet, positive: impl Into<String>, negatives: [String; 3]) -> Result<Self> {
        let [n1, n2, n3] = negatives;
        let sample = ContrastiveSample {
            anchor,
            positive: positive.into(),
            negatives: vec![
                (NegativeType::InjectedExternal, n1),
                (NegativeType::ContextConflicting, n2),
                (NegativeType::Irrelevant, n3),
            ],
        };
        sample
            .check()
            .map_err(|r| Error::Validation(format!("{}: {r}", sample.anchor.source_id)))?;
        Ok(sample)
    }

    pub fn id(&self) -> &str {
        &self.anchor.source_id
    }

    pub fn negative(&self, ty: NegativeType) -> &str {
        self.negatives
            .iter()
            .find(|(t, _)| *t == ty)
            .map(|(_, s)| s.as_str())
            .expect("validated sample carries every negative type")
    }

    pub fn check(&self) -> std::result::Result<(), Invalid> {
        self.anchor.check()?;
        if self.positive.trim().is_empty() {
            return Err(Invalid::EmptyField("positive"));
        }
        let types: Vec<NegativeType> = self.negatives.iter().map(|(t, _)| *t).collect();
        if types != NegativeType::ALL {
            return Err(Invalid::NegativeSet);
        }
        let gold = normalize(&self.anchor.golden_answer);
        let pos = normalize(&self.positive);
        if pos == gold {
            return Err(Invalid::PositiveEqualsGold);
        }
        for (ty, text) in &self.negatives {
            if text.trim().is_empty() {
                return Err(Invalid::EmptyField(match ty {
                    NegativeType::InjectedExternal => "neg_type1",
                    NegativeType::ContextConflicting => "neg_type2",
                    NegativeType::Irrelevant => "neg_type3",
                }));
            }
            let neg = normalize(text);
            if neg == gold {
                return Err(Invalid::NegativeEqualsGold(*ty));
            }
            if neg == pos {
                return Err(Invalid::NegativeEqualsPositive(*ty));
            }
        }
        Ok(())
    }
}

/// Flat on-disk layout of a contrastive sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveRecord {
    pub source_id: String,
    pub context: String,
    pub question: String,
    pub golden_answer: String,
    pub positive: String,
    pub neg_type1: String,
    pub neg_type2: String,
    pub neg_type3: String,
}

impl From<&ContrastiveSample> for ContrastiveRecord {
    fn from(s: &ContrastiveSample) -> Self {
        ContrastiveRecord {
            source_id: s.anchor.source_id.clone(),
            context: s.anchor.context.clone(),
            question: s.anchor.question.clone(),
            golden_answer: s.anchor.golden_answer.clone(),
            positive: s.positive.clone(),
            neg_type1: s.negative(NegativeType::InjectedExternal).to_string(),
            neg_type2: s.negative(NegativeType::ContextConflicting).to_string(),
            neg_type3: s.negative(NegativeType::Irrelevant).to_string(),
        }
    }
}

impl ContrastiveRecord {
    fn into_sample(self) -> ContrastiveSample {
        ContrastiveSample {
            anchor: AnchorTriplet {
                source_id: self.source_id,
                context: self.context,
                question: self.question,
                golden_answer: self.golden_answer,
            },
            positive: self.positive,
            negatives: vec![
                (NegativeType::InjectedExternal, self.neg_type1),
                (NegativeType::ContextConflicting, self.neg_type2),
                (NegativeType::Irrelevant, self.neg_type3),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictItem {
    pub id: String,
    pub context: String,
    pub question: String,
    pub contextual_answer: String,
    pub parametric_answer: String,
}

impl ConflictItem {
    pub fn check(&self) -> std::result::Result<(), Invalid> {
        for (name, value) in [
            ("id", &self.id),
            ("context", &self.context),
            ("question", &self.question),
            ("contextual_answer", &self.contextual_answer),
            ("parametric_answer", &self.parametric_answer),
        ] {
            if value.trim().is_empty() {
                return Err(Invalid::EmptyField(name));
            }
        }
        if normalize(&self.contextual_answer) == normalize(&self.parametric_answer) {
            return Err(Invalid::AnswersIndistinct);
        }
        Ok(())
    }
}

/// Fixed-dimension real vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("embedding dimension must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite embedding entry at index {i}")));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &EmbeddingVector) -> EmbeddingVector {
        EmbeddingVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &EmbeddingVector) -> EmbeddingVector {
        EmbeddingVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, c: f64) -> EmbeddingVector {
        EmbeddingVector(self.0.iter().map(|v| v * c).collect())
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// A record that parsed but failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub reason: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub rejected: Vec<Rejection>,
    /// Conflict items dropped because their two answers normalize equal.
    pub dropped_degenerate: usize,
}

impl<T> Loaded<T> {
    /// Turn the first rejection, if any, into an error.
    pub fn strict(self) -> Result<Vec<T>> {
        match self.rejected.first() {
            Some(r) => Err(Error::Validation(format!("line {}: {} ({})", r.line, r.detail, r.id))),
            None => Ok(self.items),
        }
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

pub fn load_contrastive_dataset(path: impl AsRef<Path>) -> Result<Loaded<ContrastiveSample>> {
    let path = path.as_ref();
    let mut items = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ContrastiveRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            line: line_no,
            reason: e.to_string(),
        })?;
        let sample = record.into_sample();
        let verdict = if !seen.insert(sample.anchor.source_id.clone()) {
            Err(Invalid::DuplicateId(sample.anchor.source_id.clone()))
        } else {
            sample.check()
        };
        match verdict {
            Ok(()) => items.push(sample),
            Err(invalid) => {
                log::warn!("{}:{line_no}: rejected {}: {invalid}", path.display(), sample.id());
                rejected.push(Rejection {
                    line: line_no,
                    id: sample.anchor.source_id,
                    reason: invalid.as_str().to_string(),
                    detail: invalid.to_string(),
                });
            }
        }
    }
    Ok(Loaded {
        items,
        rejected,
        dropped_degenerate: 0,
    })
}

pub fn load_conflict_dataset(path: impl AsRef<Path>) -> Result<Loaded<ConflictItem>> {
    let path = path.as_ref();
    let mut items = Vec::new();
    let mut rejected = Vec::new();
    let mut dropped = 0;
    let mut seen = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: ConflictItem = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            line: line_no,
            reason: e.to_string(),
        })?;
        let verdict = if !seen.insert(item.id.clone()) {
            Err(Invalid::DuplicateId(item.id.clone()))
        } else {
            item.check()
        };
        match verdict {
            Ok(()) => items.push(item),
            Err(Invalid::AnswersIndistinct) => dropped += 1,
            Err(invalid) => rejected.push(Rejection {
                line: line_no,
                id: item.id,
                reason: invalid.as_str().to_string(),
                detail: invalid.to_string(),
            }),
        }
    }
    if dropped > 0 {
        log::info!("{}: dropped {dropped} degenerate conflict item(s)", path.display());
    }
    Ok(Loaded {
        items,
        rejected,
        dropped_degenerate: dropped,
    })
}

pub fn contrastive_line(sample: &ContrastiveSample) -> String {
    serde_json::to_string(&ContrastiveRecord::from(sample)).expect("record serializes")
}

pub fn write_contrastive_dataset(path: impl AsRef<Path>, samples: &[ContrastiveSample]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in samples {
        out.push_str(&contrastive_line(s));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_conflict_dataset(path: impl AsRef<Path>, items: &[ConflictItem]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    for item in items {
        let line = serde_json::to_string(item)?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

// SQuAD v1.1 nested layout. Only the fields the adapter needs are declared.
#[derive(Debug, Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Debug, Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Debug, Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Debug, Deserialize)]
struct SquadAnswer {
    text: String,
}

/// Flatten a SQuAD v1.1 document into anchors in document order, taking the
/// first gold answer per question. Questions with no answers or blank fields
/// are skipped.
pub fn load_squad_anchors(path: impl AsRef<Path>) -> Result<Vec<AnchorTriplet>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: SquadFile = serde_json::from_str(&raw).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    let mut anchors = Vec::new();
    let mut seen = HashSet::new();
    for article in doc.data {
        for para in article.paragraphs {
            for qa in para.qas {
                let Some(answer) = qa.answers.into_iter().next() else {
                    continue;
                };
                let anchor = AnchorTriplet {
                    source_id: qa.id,
                    context: para.context.clone(),
                    question: qa.question,
                    golden_answer: answer.text,
                };
                if anchor.check().is_ok() && seen.insert(anchor.source_id.clone()) {
                    anchors.push(anchor);
                }
            }
        }
    }
    Ok(anchors)
}
