//! Self-instruct data generation: anchors in, validated contrastive samples
//! out, with regeneration of failing roles and a balanced generation report.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    contrastive_line, load_contrastive_dataset, load_squad_anchors, AnchorTriplet, ContrastiveSample, NegativeType,
};
use crate::teacher::{Generation, RequestKind, Teacher};
use crate::text::{normalize, substream_seed, token_jaccard, word_tokens};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityPolicy {
    /// Extra requests per role after the first one fails a check.
    #[serde(default = "QualityPolicy::default_regen")]
    pub max_regen_attempts: u32,
    #[serde(default = "QualityPolicy::default_min_tokens")]
    pub min_answer_tokens: usize,
    #[serde(default = "QualityPolicy::default_max_tokens")]
    pub max_answer_tokens: usize,
    /// Token Jaccard at or above which two answers count as near-duplicates.
    #[serde(default = "QualityPolicy::default_threshold")]
    pub near_duplicate_threshold: f64,
}

impl QualityPolicy {
    fn default_regen() -> u32 {
        2
    }
    fn default_min_tokens() -> usize {
        1
    }
    fn default_max_tokens() -> usize {
        64
    }
    fn default_threshold() -> f64 {
        0.9
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_regen_attempts > 10 {
            return Err(Error::Config(format!(
                "QualityPolicy.max_regen_attempts must be <= 10, got {}",
                self.max_regen_attempts
            )));
        }
        if self.min_answer_tokens == 0 || self.min_answer_tokens > self.max_answer_tokens {
            return Err(Error::Config(format!(
                "QualityPolicy answer token bounds must satisfy 1 <= min <= max, got {}..{}",
                self.min_answer_tokens, self.max_answer_tokens
            )));
        }
        if !(self.near_duplicate_threshold > 0.0 && self.near_duplicate_threshold < 1.0) {
            return Err(Error::Config(format!(
                "QualityPolicy.near_duplicate_threshold must be in (0, 1), got {}",
                self.near_duplicate_threshold
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let policy: QualityPolicy =
            toml::from_str(&raw).map_err(|e| Error::Config(format!("policy {}: {e}", path.display())))?;
        policy.validate()?;
        Ok(policy)
    }
}

impl Default for QualityPolicy {
    fn default() -> Self {
        QualityPolicy {
            max_regen_attempts: Self::default_regen(),
            min_answer_tokens: Self::default_min_tokens(),
            max_answer_tokens: Self::default_max_tokens(),
            near_duplicate_threshold: Self::default_threshold(),
        }
    }
}

/// Anything that can answer a teacher request. `Teacher` is the real one;
/// tests substitute scripted sources.
pub trait CandidateSource: Sync {
    fn candidate(&self, anchor: &AnchorTriplet, kind: RequestKind) -> Result<Generation>;
}

impl CandidateSource for Teacher {
    fn candidate(&self, anchor: &AnchorTriplet, kind: RequestKind) -> Result<Generation> {
        self.generate(&self.request(anchor, kind))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildOutcome {
    Accepted(ContrastiveSample),
    Rejected { reason: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Built {
    pub outcome: BuildOutcome,
    pub teacher_calls: usize,
}

#[derive(Debug)]
struct Refusal {
    reason: &'static str,
    detail: String,
}

fn refuse(reason: &'static str, detail: impl Into<String>) -> Refusal {
    Refusal {
        reason,
        detail: detail.into(),
    }
}

fn length_check(text: &str, policy: &QualityPolicy) -> std::result::Result<(), Refusal> {
    let n = word_tokens(text).len();
    if n < policy.min_answer_tokens {
        return Err(refuse("too_short", format!("{n} token(s)")));
    }
    if n > policy.max_answer_tokens {
        return Err(refuse("too_long", format!("{n} token(s)")));
    }
    Ok(())
}

fn check_positive(anchor: &AnchorTriplet, text: &str, policy: &QualityPolicy) -> std::result::Result<(), Refusal> {
    length_check(text, policy)?;
    if normalize(text) == normalize(&anchor.golden_answer) {
        return Err(refuse("positive_equals_gold", "positive repeats the golden answer"));
    }
    Ok(())
}

fn check_negative(
    anchor: &AnchorTriplet,
    positive: &str,
    ty: NegativeType,
    text: &str,
    policy: &QualityPolicy,
) -> std::result::Result<(), Refusal> {
    length_check(text, policy)?;
    let norm = normalize(text);
    if norm == normalize(&anchor.golden_answer) {
        return Err(refuse("negative_equals_gold", format!("{ty} negative repeats the golden answer")));
    }
    if norm == normalize(positive) {
        return Err(refuse("negative_equals_positive", format!("{ty} negative repeats the positive")));
    }
    let overlap = token_jaccard(positive, text);
    if overlap >= policy.near_duplicate_threshold {
        return Err(refuse(
            "near_duplicate",
            format!("{ty} negative overlaps the positive at {overlap:.3}"),
        ));
    }
    if ty == NegativeType::ContextConflicting && token_jaccard(&anchor.golden_answer, text) >= 1.0 {
        return Err(refuse("type2_no_change", "type2 negative has the golden answer's exact token set"));
    }
    Ok(())
}

/// Request one role until `accept` passes or the attempt budget runs out.
fn obtain(
    source: &dyn CandidateSource,
    anchor: &AnchorTriplet,
    kind: RequestKind,
    policy: &QualityPolicy,
    calls: &mut usize,
    accept: impl Fn(&str) -> std::result::Result<(), Refusal>,
) -> Result<std::result::Result<String, Refusal>> {
    let mut last = refuse("no_attempt", "");
    for attempt in 0..=policy.max_regen_attempts {
        *calls += 1;
        let text = match source.candidate(anchor, kind) {
            Ok(g) => g.text,
            Err(Error::Generation(msg)) => {
                last = refuse("empty_completion", msg);
                continue;
            }
            Err(e) => {
                return Err(Error::Anchor {
                    anchor_id: anchor.source_id.clone(),
                    source: Box::new(e),
                })
            }
        };
        match accept(&text) {
            Ok(()) => return Ok(Ok(text)),
            Err(r) => {
                log::debug!("{} {} attempt {}: {}", anchor.source_id, kind.tag(), attempt + 1, r.detail);
                last = r;
            }
        }
    }
    Ok(Err(last))
}

/// One positive and three typed negatives for `anchor`, or the reason the
/// anchor was given up on.
pub fn build_sample(anchor: &AnchorTriplet, source: &dyn CandidateSource, policy: &QualityPolicy) -> Result<Built> {
    anchor
        .check()
        .map_err(|r| Error::Validation(format!("{}: {r}", anchor.source_id)))?;
    let mut calls = 0;
    let rejected = |r: Refusal, calls| Built {
        outcome: BuildOutcome::Rejected {
            reason: r.reason.to_string(),
            detail: r.detail,
        },
        teacher_calls: calls,
    };
    let positive = match obtain(source, anchor, RequestKind::Positive, policy, &mut calls, |t| {
        check_positive(anchor, t, policy)
    })? {
        Ok(p) => p,
        Err(r) => return Ok(rejected(r, calls)),
    };
    let mut negatives = Vec::with_capacity(3);
    for ty in NegativeType::ALL {
        match obtain(source, anchor, RequestKind::negative(ty), policy, &mut calls, |t| {
            check_negative(anchor, &positive, ty, t, policy)
        })? {
            Ok(n) => negatives.push(n),
            Err(r) => return Ok(rejected(r, calls)),
        }
    }
    let negatives: [String; 3] = negatives.try_into().expect("three negative types");
    let sample = ContrastiveSample::new(anchor.clone(), positive, negatives)?;
    Ok(Built {
        outcome: BuildOutcome::Accepted(sample),
        teacher_calls: calls,
    })
}

fn shuffled_anchors(squad_path: &Path, seed: u64) -> Result<Vec<AnchorTriplet>> {
    let mut anchors = load_squad_anchors(squad_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "datagen"));
    anchors.shuffle(&mut rng);
    Ok(anchors)
}

/// A seeded sample of `limit` anchors from a SQuAD v1.1 file.
pub fn extract_anchors(squad_path: impl AsRef<Path>, limit: usize, seed: u64) -> Result<Vec<AnchorTriplet>> {
    let path = squad_path.as_ref();
    let mut anchors = shuffled_anchors(path, seed)?;
    if limit > anchors.len() {
        log::warn!(
            "{}: asked for {limit} anchors, corpus has {}; using all of them",
            path.display(),
            anchors.len()
        );
    }
    anchors.truncate(limit);
    Ok(anchors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    /// Anchors sent to the teacher in this run.
    pub anchors_in: usize,
    pub samples_out: usize,
    pub rejects: BTreeMap<String, usize>,
    pub teacher_calls: usize,
    pub elapsed_ms: u64,
    /// Records already present in the output and skipped.
    pub resumed_existing: usize,
}

impl GenReport {
    pub fn rejected(&self) -> usize {
        self.rejects.values().sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.samples_out + self.rejected() == self.anchors_in
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRequest {
    pub squad_path: PathBuf,
    pub n_samples: usize,
    pub out_path: PathBuf,
    pub seed: u64,
    pub max_in_flight: usize,
}

pub fn report_path(out_path: &Path) -> PathBuf {
    let mut name = out_path.as_os_str().to_owned();
    name.push(".report");
    PathBuf::from(name)
}

/// Fill `out_path` up to `n_samples` records. Existing records are kept and
/// their source ids skipped, so an interrupted run can simply be restarted.
pub fn run_pipeline(req: &PipelineRequest, source: &dyn CandidateSource, policy: &QualityPolicy) -> Result<GenReport> {
    policy.validate()?;
    if req.max_in_flight == 0 {
        return Err(Error::Config("max_in_flight must be >= 1".into()));
    }
    let started = Instant::now();
    let out = req.out_path.as_path();
    let existing: HashSet<String> = if out.exists() {
        load_contrastive_dataset(out)?
            .items
            .into_iter()
            .map(|s| s.anchor.source_id)
            .collect()
    } else {
        HashSet::new()
    };
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| Error::io(out, e))?;
    let anchors = shuffled_anchors(&req.squad_path, req.seed)?;

    let mut report = GenReport {
        anchors_in: 0,
        samples_out: 0,
        rejects: BTreeMap::new(),
        teacher_calls: 0,
        elapsed_ms: 0,
        resumed_existing: existing.len(),
    };
    let mut pending = anchors.iter().filter(|a| !existing.contains(&a.source_id));
    let mut have = existing.len();
    while have < req.n_samples {
        let batch: Vec<&AnchorTriplet> = pending.by_ref().take(req.max_in_flight.min(req.n_samples - have)).collect();
        if batch.is_empty() {
            log::warn!("anchor pool exhausted at {have} of {} samples", req.n_samples);
            break;
        }
        let results: Vec<Result<Built>> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|a| scope.spawn(move || build_sample(a, source, policy)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for built in results {
            let built = built?;
            report.anchors_in += 1;
            report.teacher_calls += built.teacher_calls;
            match built.outcome {
                BuildOutcome::Accepted(sample) => {
                    let mut line = contrastive_line(&sample);
                    line.push('\n');
                    file.write_all(line.as_bytes()).map_err(|e| Error::io(out, e))?;
                    report.samples_out += 1;
                    have += 1;
                }
                BuildOutcome::Rejected { reason, detail } => {
                    log::info!("rejected anchor: {reason} ({detail})");
                    *report.rejects.entry(reason).or_default() += 1;
                }
            }
        }
        file.flush().map_err(|e| Error::io(out, e))?;
    }
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    let sidecar = report_path(out);
    let body = serde_json::to_string_pretty(&report)?;
    std::fs::write(&sidecar, body + "\n").map_err(|e| Error::io(&sidecar, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::write_synthetic_squad;
    use crate::teacher::{mock, TeacherConfig};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn humvee() -> AnchorTriplet {
        AnchorTriplet::new(
            "humvee-1992",
            "Schwarzenegger lobbied AM General to produce a civilian Humvee, which they did in 1992. He purchased the first two.",
            "In what year did AM General grant Schwarzenegger's wish for a street-legal Humvee?",
            "In 1992.",
        )
        .unwrap()
    }

    /// Mock teacher, except one kind always echoes the golden answer.
    struct Echo {
        kind: RequestKind,
        calls: AtomicUsize,
    }

    impl CandidateSource for Echo {
        fn candidate(&self, anchor: &AnchorTriplet, kind: RequestKind) -> Result<Generation> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let text = if kind == self.kind {
                anchor.golden_answer.clone()
            } else {
                mock::generate(anchor, kind)
            };
            Ok(Generation {
                text,
                attempts: vec![],
            })
        }
    }

    #[test]
    fn mock_sample_for_worked_example() {
        let t = Teacher::new(TeacherConfig::mock()).unwrap();
        let built = build_sample(&humvee(), &t, &QualityPolicy::default()).unwrap();
        assert_eq!(built.teacher_calls, 4);
        let BuildOutcome::Accepted(s) = built.outcome else {
            panic!("rejected: {:?}", built.outcome)
        };
        assert!(s.negative(NegativeType::ContextConflicting).contains("1989"));
    }

    #[test]
    fn persistent_gold_echo_is_rejected() {
        let echo = Echo {
            kind: RequestKind::Type2,
            calls: AtomicUsize::new(0),
        };
        let built = build_sample(&humvee(), &echo, &QualityPolicy::default()).unwrap();
        assert_eq!(
            built.outcome,
            BuildOutcome::Rejected {
                reason: "negative_equals_gold".into(),
                detail: "type2 negative repeats the golden answer".into()
            }
        );
        // positive + type1 + three tries at type2
        assert_eq!(built.teacher_calls, 5);
    }

    #[test]
    fn positive_echo_rejected() {
        let echo = Echo {
            kind: RequestKind::Positive,
            calls: AtomicUsize::new(0),
        };
        let built = build_sample(&humvee(), &echo, &QualityPolicy::default()).unwrap();
        assert!(matches!(built.outcome, BuildOutcome::Rejected { ref reason, .. } if reason == "positive_equals_gold"));
    }

    struct NearDup;

    impl CandidateSource for NearDup {
        fn candidate(&self, _anchor: &AnchorTriplet, kind: RequestKind) -> Result<Generation> {
            let text = match kind {
                RequestKind::Positive => "the firm opened a plant in bergen in 1962",
                _ => "The firm opened a plant in Bergen in 1962!",
            };
            Ok(Generation {
                text: text.into(),
                attempts: vec![],
            })
        }
    }

    #[test]
    fn negative_equal_to_positive_after_normalization_rejected() {
        let built = build_sample(&humvee(), &NearDup, &QualityPolicy::default()).unwrap();
        assert!(
            matches!(built.outcome, BuildOutcome::Rejected { ref reason, .. } if reason == "negative_equals_positive"),
            "{:?}",
            built.outcome
        );
    }

    #[test]
    fn extract_is_seeded_and_clamped() {
        let dir = tempfile::tempdir().unwrap();
        let squad = dir.path().join("s.json");
        write_synthetic_squad(&squad, 3, 0).unwrap();
        assert!(extract_anchors(&squad, 0, 1).unwrap().is_empty());
        assert_eq!(extract_anchors(&squad, 5, 1).unwrap(), extract_anchors(&squad, 5, 1).unwrap());
        assert_eq!(extract_anchors(&squad, 100, 1).unwrap().len(), 18);
    }

    #[test]
    fn pipeline_fills_resumes_and_balances() {
        let dir = tempfile::tempdir().unwrap();
        let squad = dir.path().join("s.json");
        write_synthetic_squad(&squad, 10, 0).unwrap();
        let t = Teacher::new(TeacherConfig::mock()).unwrap();
        let mut req = PipelineRequest {
            squad_path: squad,
            n_samples: 10,
            out_path: dir.path().join("out.jsonl"),
            seed: 4,
            max_in_flight: 4,
        };
        let r = run_pipeline(&req, &t, &QualityPolicy::default()).unwrap();
        assert_eq!(r.samples_out, 10);
        assert!(r.rejects.is_empty(), "{:?}", r.rejects);
        assert!(r.is_balanced());
        let loaded = load_contrastive_dataset(&req.out_path).unwrap();
        assert_eq!(loaded.items.len(), 10);
        assert!(loaded.rejected.is_empty());
        assert!(report_path(&req.out_path).exists());

        let again = run_pipeline(&req, &t, &QualityPolicy::default()).unwrap();
        assert_eq!(again.teacher_calls, 0);
        assert_eq!(again.resumed_existing, 10);

        req.n_samples = 15;
        let more = run_pipeline(&req, &t, &QualityPolicy::default()).unwrap();
        assert_eq!(more.samples_out, 5);
        assert_eq!(load_contrastive_dataset(&req.out_path).unwrap().items.len(), 15);
    }

    #[test]
    fn unwritable_output_fails_before_teacher_calls() {
        let dir = tempfile::tempdir().unwrap();
        let squad = dir.path().join("s.json");
        write_synthetic_squad(&squad, 2, 0).unwrap();
        let echo = Echo {
            kind: RequestKind::Type1,
            calls: AtomicUsize::new(0),
        };
        let req = PipelineRequest {
            squad_path: squad,
            n_samples: 3,
            out_path: dir.path().join("missing-dir").join("out.jsonl"),
            seed: 0,
            max_in_flight: 2,
        };
        assert!(matches!(run_pipeline(&req, &echo, &QualityPolicy::default()), Err(Error::Io { .. })));
        assert_eq!(echo.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn policy_bounds() {
        assert!(QualityPolicy::default().validate().is_ok());
        let bad = QualityPolicy {
            near_duplicate_threshold: 1.0,
            ..QualityPolicy::default()
        };
        assert!(bad.validate().is_err());
        let bad = QualityPolicy {
            min_answer_tokens: 5,
            max_answer_tokens: 2,
            ..QualityPolicy::default()
        };
        assert!(bad.validate().is_err());
    }
}
