//! Knowledge-conflict evaluation: judge answers against conflict items,
//! aggregate CRR / PRR / MR, and export the MR-CRR frontier.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{par_map, EncoderParams};
use crate::error::{Error, Result};
use crate::model::ConflictItem;
use crate::simgrad::{infonce_loss, LossConfig};
use crate::teacher::{Prompt, Teacher};
use crate::text::{contains_normalized, normalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgment {
    Contextual,
    Parametric,
    Other,
    Ambiguous,
}

impl Judgment {
    /// The judgment with the two knowledge sources swapped.
    pub fn swapped(self) -> Self {
        match self {
            Judgment::Contextual => Judgment::Parametric,
            Judgment::Parametric => Judgment::Contextual,
            j => j,
        }
    }
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Judgment::Contextual => "contextual",
            Judgment::Parametric => "parametric",
            Judgment::Other => "other",
            Judgment::Ambiguous => "ambiguous",
        })
    }
}

/// Normalized containment; an exact match with one candidate outranks mere
/// containment of the other.
pub fn judge(item: &ConflictItem, answer: &str) -> Judgment {
    let a = normalize(answer);
    if a == normalize(&item.contextual_answer) {
        return Judgment::Contextual;
    }
    if a == normalize(&item.parametric_answer) {
        return Judgment::Parametric;
    }
    match (
        contains_normalized(answer, &item.contextual_answer),
        contains_normalized(answer, &item.parametric_answer),
    ) {
        (true, true) => Judgment::Ambiguous,
        (true, false) => Judgment::Contextual,
        (false, true) => Judgment::Parametric,
        (false, false) => Judgment::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method_label: String,
    pub total: usize,
    pub contextual: usize,
    pub parametric: usize,
    pub other: usize,
    pub ambiguous: usize,
    /// Items with no answer, already included in `other`.
    #[serde(default)]
    pub missing: usize,
    /// Percent, unrounded.
    pub crr: f64,
    pub prr: f64,
    /// `None` when neither contextual nor parametric answers occurred.
    pub mr: Option<f64>,
}

impl MetricsReport {
    pub fn from_counts(
        method_label: impl Into<String>,
        contextual: usize,
        parametric: usize,
        other: usize,
        ambiguous: usize,
    ) -> Result<Self> {
        let total = contextual + parametric + other + ambiguous;
        if total == 0 {
            return Err(Error::Contract("metrics need at least one judgment".into()));
        }
        let crr = 100.0 * contextual as f64 / total as f64;
        let prr = 100.0 * parametric as f64 / total as f64;
        Ok(MetricsReport {
            method_label: method_label.into(),
            total,
            contextual,
            parametric,
            other,
            ambiguous,
            missing: 0,
            crr,
            prr,
            mr: memorization_ratio(crr, prr),
        })
    }

    pub fn crr_display(&self) -> String {
        format!("{:.2}", self.crr)
    }

    pub fn prr_display(&self) -> String {
        format!("{:.2}", self.prr)
    }

    pub fn mr_display(&self) -> String {
        self.mr.map(|m| format!("{m:.3}")).unwrap_or_default()
    }
}

/// PRR / (CRR + PRR). Scale-free, so percents and fractions agree.
pub fn memorization_ratio(crr: f64, prr: f64) -> Option<f64> {
    let denom = crr + prr;
    (denom > 0.0).then(|| prr / denom)
}

pub fn compute_metrics(judgments: &[Judgment], method_label: &str) -> Result<MetricsReport> {
    let mut counts: BTreeMap<Judgment, usize> = BTreeMap::new();
    for j in judgments {
        *counts.entry(*j).or_default() += 1;
    }
    let get = |j| counts.get(&j).copied().unwrap_or(0);
    MetricsReport::from_counts(
        method_label,
        get(Judgment::Contextual),
        get(Judgment::Parametric),
        get(Judgment::Other),
        get(Judgment::Ambiguous),
    )
}

/// Where answers to the conflict items come from.
pub enum AnswerSource {
    /// Line records `{"id": .., "answer": ..}`.
    File(PathBuf),
    EchoContextual,
    EchoParametric,
    /// Pick the candidate the encoder scores as more faithful.
    Encoder { params: Box<EncoderParams>, loss: LossConfig },
    Remote(Box<Teacher>),
}

impl AnswerSource {
    /// Parse `mock:contextual`, `mock:parametric`, `encoder:<checkpoint>`,
    /// `remote:<url>` or a plain answers file path.
    pub fn parse(arg: &str, loss: LossConfig) -> Result<Self> {
        if let Some(mode) = arg.strip_prefix("mock:") {
            return match mode {
                "contextual" => Ok(AnswerSource::EchoContextual),
                "parametric" => Ok(AnswerSource::EchoParametric),
                other => Err(Error::Config(format!("unknown mock answer source `{other}`"))),
            };
        }
        if let Some(path) = arg.strip_prefix("encoder:") {
            return Ok(AnswerSource::Encoder {
                params: Box::new(EncoderParams::load(path)?),
                loss,
            });
        }
        if let Some(url) = arg.strip_prefix("remote:") {
            let teacher = Teacher::new(crate::teacher::TeacherConfig::remote(url))?;
            return Ok(AnswerSource::Remote(Box::new(teacher)));
        }
        Ok(AnswerSource::File(PathBuf::from(arg)))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerRecord {
    id: String,
    answer: String,
}

pub fn load_answers(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnswerRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if out.insert(rec.id.clone(), rec.answer).is_some() {
            return Err(Error::Validation(format!("{}:{}: duplicate answer id `{}`", path.display(), i + 1, rec.id)));
        }
    }
    Ok(out)
}

/// The candidate with the lower InfoNCE loss when scored as the positive
/// against the other candidate, with `h(C, Q, "")` as the anchor. Ties go
/// to the parametric answer.
pub fn encoder_choice<'a>(params: &EncoderParams, loss: &LossConfig, item: &'a ConflictItem) -> Result<&'a str> {
    let anchor = params.encode(&item.context, &item.question, "")?;
    let hc = params.encode(&item.context, &item.question, &item.contextual_answer)?;
    let hp = params.encode(&item.context, &item.question, &item.parametric_answer)?;
    let lc = infonce_loss(&anchor, &hc, std::slice::from_ref(&hp), loss)?.loss;
    let lp = infonce_loss(&anchor, &hp, std::slice::from_ref(&hc), loss)?.loss;
    Ok(if lc < lp {
        &item.contextual_answer
    } else {
        &item.parametric_answer
    })
}

fn remote_answer(teacher: &Teacher, item: &ConflictItem) -> Result<String> {
    let prompt = Prompt {
        system: "Answer the question in a few words.".into(),
        user: format!("Context: {}\nQuestion: {}", item.context, item.question),
    };
    Ok(teacher.complete(&prompt)?.text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedItem {
    pub id: String,
    pub answer: Option<String>,
    pub judgment: Judgment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub judged: Vec<JudgedItem>,
}

/// Collect one answer per item, judge, and aggregate.
pub fn evaluate(items: &[ConflictItem], source: &AnswerSource, label: &str) -> Result<EvalOutcome> {
    if items.is_empty() {
        return Err(Error::Contract("no conflict items to evaluate".into()));
    }
    let answers: Vec<Option<String>> = match source {
        AnswerSource::File(path) => {
            let mut map = load_answers(path)?;
            let known: std::collections::HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
            let mut unknown: Vec<&String> = map.keys().filter(|k| !known.contains(k.as_str())).collect();
            if !unknown.is_empty() {
                unknown.sort();
                return Err(Error::Validation(format!(
                    "{}: answers for unknown item id(s): {}",
                    path.display(),
                    unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                )));
            }
            items.iter().map(|i| map.remove(&i.id)).collect()
        }
        AnswerSource::EchoContextual => items.iter().map(|i| Some(i.contextual_answer.clone())).collect(),
        AnswerSource::EchoParametric => items.iter().map(|i| Some(i.parametric_answer.clone())).collect(),
        AnswerSource::Encoder { params, loss } => par_map(items, |i| encoder_choice(params, loss, i).map(str::to_string))
            .into_iter()
            .map(|r| r.map(Some))
            .collect::<Result<_>>()?,
        AnswerSource::Remote(teacher) => items
            .iter()
            .map(|i| {
                remote_answer(teacher, i).map(Some).map_err(|e| Error::Anchor {
                    anchor_id: i.id.clone(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?,
    };
    let judged: Vec<JudgedItem> = items
        .iter()
        .zip(answers)
        .map(|(item, answer)| JudgedItem {
            id: item.id.clone(),
            judgment: answer.as_deref().map_or(Judgment::Other, |a| judge(item, a)),
            answer,
        })
        .collect();
    let missing = judged.iter().filter(|j| j.answer.is_none()).count();
    if missing > 0 {
        log::warn!("{missing} item(s) had no answer and were judged other");
    }
    let judgments: Vec<Judgment> = judged.iter().map(|j| j.judgment).collect();
    let mut report = compute_metrics(&judgments, label)?;
    report.missing = missing;
    Ok(EvalOutcome { report, judged })
}

pub fn metrics_path(out_dir: &Path, label: &str) -> PathBuf {
    out_dir.join(format!("{label}.metrics.json"))
}

/// `evaluate`, then write `<label>.metrics.json` and `<label>.judgments.jsonl`
/// into `out_dir`.
pub fn run_eval(items: &[ConflictItem], source: &AnswerSource, label: &str, out_dir: &Path) -> Result<MetricsReport> {
    if label.is_empty() || label.contains(['/', '\\']) {
        return Err(Error::Config(format!("method label `{label}` cannot be used as a file name")));
    }
    let outcome = evaluate(items, source, label)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut lines = String::new();
    for j in &outcome.judged {
        lines.push_str(&serde_json::to_string(j)?);
        lines.push('\n');
    }
    let jpath = out_dir.join(format!("{label}.judgments.jsonl"));
    std::fs::write(&jpath, lines).map_err(|e| Error::io(&jpath, e))?;
    let mpath = metrics_path(out_dir, label);
    std::fs::write(&mpath, serde_json::to_string_pretty(&outcome.report)? + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(outcome.report)
}

/// Every `*.metrics.json` in `dir`, in file-name order.
pub fn load_reports(dir: &Path) -> Result<Vec<MetricsReport>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".metrics.json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&raw).map_err(|e| Error::Schema {
                path: p.display().to_string(),
                line: e.line(),
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierRow {
    pub method_label: String,
    pub crr: f64,
    pub mr: Option<f64>,
}

/// Rows sorted by CRR descending, ties by label.
pub fn frontier_rows(reports: &[MetricsReport]) -> Vec<FrontierRow> {
    let mut rows: Vec<FrontierRow> = reports
        .iter()
        .map(|r| FrontierRow {
            method_label: r.method_label.clone(),
            crr: r.crr,
            mr: r.mr,
        })
        .collect();
    rows.sort_by(|a, b| b.crr.total_cmp(&a.crr).then_with(|| a.method_label.cmp(&b.method_label)));
    rows
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn frontier_csv(rows: &[FrontierRow]) -> String {
    let mut out = String::from("method_label,CRR,MR\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.2},{}\n",
            csv_field(&r.method_label),
            r.crr,
            r.mr.map(|m| format!("{m:.3}")).unwrap_or_default()
        ));
    }
    out
}

pub fn frontier_export(reports: &[MetricsReport], out_path: &Path) -> Result<Vec<FrontierRow>> {
    if reports.is_empty() {
        return Err(Error::Contract("frontier needs at least one report".into()));
    }
    let rows = frontier_rows(reports);
    std::fs::write(out_path, frontier_csv(&rows)).map_err(|e| Error::io(out_path, e))?;
    Ok(rows)
}
