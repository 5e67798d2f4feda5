//! The teacher: turns an anchor into a positive paraphrase or a typed
//! unfaithful answer, either through a chat-completions endpoint or through
//! deterministic offline rules.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnchorTriplet, NegativeType};
use crate::text::{contains_normalized, fnv1a, normalize};

pub const MOCK_ENDPOINT: &str = "mock";
pub const API_KEY_ENV: &str = "FAITHTUNE_API_KEY";
const DEFAULT_PACK: &str = include_str!("../templates/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Positive,
    #[serde(rename = "type1")]
    Type1,
    #[serde(rename = "type2")]
    Type2,
    #[serde(rename = "type3")]
    Type3,
}

impl RequestKind {
    pub fn negative(ty: NegativeType) -> Self {
        match ty {
            NegativeType::InjectedExternal => RequestKind::Type1,
            NegativeType::ContextConflicting => RequestKind::Type2,
            NegativeType::Irrelevant => RequestKind::Type3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            RequestKind::Positive => "positive",
            RequestKind::Type1 => "type1",
            RequestKind::Type2 => "type2",
            RequestKind::Type3 => "type3",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherRequest {
    pub anchor: AnchorTriplet,
    pub kind: RequestKind,
    pub template_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub kind: RequestKind,
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePack {
    pub templates: BTreeMap<String, Template>,
}

impl TemplatePack {
    pub fn builtin() -> Self {
        toml::from_str(DEFAULT_PACK).expect("bundled template pack parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("template pack {}: {e}", path.display())))?;
        toml::from_str(&raw).map_err(|e| Error::Config(format!("template pack {}: {e}", path.display())))
    }

    pub fn get(&self, id: &str) -> Result<&Template> {
        self.templates
            .get(id)
            .ok_or_else(|| Error::Config(format!("unknown template_id `{id}`")))
    }
}

/// Which template id serves each request kind. Unset kinds keep their default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateIds {
    pub positive: String,
    pub type1: String,
    pub type2: String,
    pub type3: String,
}

impl TemplateIds {
    pub fn for_kind(&self, kind: RequestKind) -> &str {
        match kind {
            RequestKind::Positive => &self.positive,
            RequestKind::Type1 => &self.type1,
            RequestKind::Type2 => &self.type2,
            RequestKind::Type3 => &self.type3,
        }
    }
}

impl Default for TemplateIds {
    fn default() -> Self {
        TemplateIds {
            positive: "positive.v1".into(),
            type1: "type1.v1".into(),
            type2: "type2.v1".into(),
            type3: "type3.v1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    /// Chat-completions URL, or `mock` for the offline rules.
    #[serde(default = "TeacherConfig::default_endpoint")]
    pub endpoint: String,
    #[serde(default = "TeacherConfig::default_model")]
    pub model: String,
    #[serde(default = "TeacherConfig::default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "TeacherConfig::default_retries")]
    pub max_retries: u32,
    #[serde(default = "TeacherConfig::default_temperature")]
    pub temperature: f64,
    #[serde(default = "TeacherConfig::default_in_flight")]
    pub max_in_flight: usize,
    /// Overridden by the `FAITHTUNE_API_KEY` environment variable.
    #[serde(default)]
    pub api_key: Option<String>,
    /// Template pack file; the bundled pack is used when absent.
    #[serde(default)]
    pub template_pack: Option<PathBuf>,
    #[serde(default)]
    pub templates: TemplateIds,
}

impl TeacherConfig {
    fn default_endpoint() -> String {
        MOCK_ENDPOINT.into()
    }
    fn default_model() -> String {
        "gpt-4o-mini".into()
    }
    fn default_timeout() -> f64 {
        30.0
    }
    fn default_retries() -> u32 {
        3
    }
    fn default_temperature() -> f64 {
        0.7
    }
    fn default_in_flight() -> usize {
        4
    }

    pub fn mock() -> Self {
        Self::default()
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        TeacherConfig {
            endpoint: endpoint.into(),
            ..Self::default()
        }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint.eq_ignore_ascii_case(MOCK_ENDPOINT)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config(format!("TeacherConfig.timeout_secs must be > 0, got {}", self.timeout_secs)));
        }
        if self.max_retries > 5 {
            return Err(Error::Config(format!("TeacherConfig.max_retries must be <= 5, got {}", self.max_retries)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("TeacherConfig.temperature must be >= 0, got {}", self.temperature)));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("TeacherConfig.max_in_flight must be >= 1".into()));
        }
        if !self.is_mock() && !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(Error::Config(format!("TeacherConfig.endpoint `{}` is neither `mock` nor an http(s) URL", self.endpoint)));
        }
        let pack = self.load_pack().map_err(|e| {
            Error::Config(format!(
                "template_id `{}` (and the other configured ids) cannot be resolved: {e}",
                self.templates.positive
            ))
        })?;
        for kind in [RequestKind::Positive, RequestKind::Type1, RequestKind::Type2, RequestKind::Type3] {
            let id = self.templates.for_kind(kind);
            let t = pack.get(id)?;
            if t.kind != kind {
                return Err(Error::Config(format!(
                    "template_id `{id}` is a {} template, configured for {}",
                    t.kind.tag(),
                    kind.tag()
                )));
            }
        }
        Ok(())
    }

    pub fn load_pack(&self) -> Result<TemplatePack> {
        match &self.template_pack {
            Some(p) => TemplatePack::load(p),
            None => Ok(TemplatePack::builtin()),
        }
    }

    fn resolved_api_key(&self) -> Option<String> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .or_else(|| self.api_key.clone())
    }
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            endpoint: Self::default_endpoint(),
            model: Self::default_model(),
            timeout_secs: Self::default_timeout(),
            max_retries: Self::default_retries(),
            temperature: Self::default_temperature(),
            max_in_flight: Self::default_in_flight(),
            api_key: None,
            template_pack: None,
            templates: TemplateIds::default(),
        }
    }
}

/// The two rendered chat messages of a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

fn substitute(template: &str, anchor: &AnchorTriplet) -> String {
    template
        .replace("{context}", &anchor.context)
        .replace("{question}", &anchor.question)
        .replace("{golden_answer}", &anchor.golden_answer)
}

pub fn render_prompt(pack: &TemplatePack, req: &TeacherRequest) -> Result<Prompt> {
    let t = pack.get(&req.template_id)?;
    if t.kind != req.kind {
        return Err(Error::Config(format!(
            "template_id `{}` is a {} template, requested {}",
            req.template_id,
            t.kind.tag(),
            req.kind.tag()
        )));
    }
    req.anchor
        .check()
        .map_err(|r| Error::Validation(format!("{}: {r}", req.anchor.source_id)))?;
    Ok(Prompt {
        system: substitute(&t.system, &req.anchor),
        user: substitute(&t.user, &req.anchor),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Generation {
    pub text: String,
    /// One line per attempt, e.g. `attempt 1: HTTP 429`.
    pub attempts: Vec<String>,
}

/// Trim whitespace and any matching pair of surrounding quotes.
pub fn strip_quotes(s: &str) -> String {
    let mut t = s.trim();
    loop {
        let stripped = [('"', '"'), ('\'', '\''), ('`', '`'), ('\u{201c}', '\u{201d}'), ('\u{2018}', '\u{2019}')]
            .iter()
            .find_map(|(l, r)| t.strip_prefix(*l).and_then(|x| x.strip_suffix(*r)));
        match stripped {
            Some(inner) if !inner.is_empty() => t = inner.trim(),
            _ => break,
        }
    }
    t.to_string()
}

pub struct Teacher {
    cfg: TeacherConfig,
    pack: TemplatePack,
    client: OnceLock<reqwest::blocking::Client>,
}

impl Teacher {
    pub fn new(cfg: TeacherConfig) -> Result<Self> {
        cfg.validate()?;
        let pack = cfg.load_pack()?;
        Ok(Teacher {
            cfg,
            pack,
            client: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.cfg
    }

    pub fn request(&self, anchor: &AnchorTriplet, kind: RequestKind) -> TeacherRequest {
        TeacherRequest {
            anchor: anchor.clone(),
            kind,
            template_id: self.cfg.templates.for_kind(kind).to_string(),
        }
    }

    pub fn render(&self, req: &TeacherRequest) -> Result<Prompt> {
        render_prompt(&self.pack, req)
    }

    pub fn generate(&self, req: &TeacherRequest) -> Result<Generation> {
        let prompt = self.render(req)?;
        let gen = if self.cfg.is_mock() {
            Generation {
                text: mock::generate(&req.anchor, req.kind),
                attempts: vec!["attempt 1: mock".into()],
            }
        } else {
            self.remote(&prompt)?
        };
        let text = strip_quotes(&gen.text);
        if text.is_empty() {
            return Err(Error::Generation(format!(
                "empty {} completion for {}",
                req.kind.tag(),
                req.anchor.source_id
            )));
        }
        Ok(Generation { text, ..gen })
    }

    /// Send an arbitrary prompt to the remote endpoint. Not available in
    /// mock mode.
    pub fn complete(&self, prompt: &Prompt) -> Result<Generation> {
        if self.cfg.is_mock() {
            return Err(Error::Config("the mock teacher only serves template requests".into()));
        }
        let gen = self.remote(prompt)?;
        Ok(Generation {
            text: strip_quotes(&gen.text),
            ..gen
        })
    }

    fn client(&self) -> Result<&reqwest::blocking::Client> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Transport {
                message: format!("building HTTP client: {e}"),
                attempts: Vec::new(),
            })?;
        Ok(self.client.get_or_init(|| c))
    }

    /// POST the chat-completions body, retrying on connection errors, 429
    /// and 5xx. Total wall time is bounded by `timeout * (retries + 1)`.
    fn remote(&self, prompt: &Prompt) -> Result<Generation> {
        let client = self.client()?;
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &prompt.system,
                },
                ChatMessage {
                    role: "user",
                    content: &prompt.user,
                },
            ],
            temperature: self.cfg.temperature,
        };
        let per_attempt = self.cfg.timeout();
        let deadline = Instant::now() + per_attempt * (self.cfg.max_retries + 1);
        let key = self.cfg.resolved_api_key();
        let mut attempts = Vec::new();
        for attempt in 0..=self.cfg.max_retries {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                break;
            }
            let mut rb = client
                .post(&self.cfg.endpoint)
                .timeout(per_attempt.min(remaining))
                .json(&body);
            if let Some(k) = &key {
                rb = rb.bearer_auth(k);
            }
            let n = attempt + 1;
            let retryable = match rb.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: ChatResponse = resp.json().map_err(|e| Error::Transport {
                            message: format!("decoding completion: {e}"),
                            attempts: attempts.clone(),
                        })?;
                        attempts.push(format!("attempt {n}: HTTP {}", status.as_u16()));
                        let text = parsed
                            .choices
                            .into_iter()
                            .next()
                            .and_then(|c| c.message.content)
                            .unwrap_or_default();
                        return Ok(Generation { text, attempts });
                    }
                    attempts.push(format!("attempt {n}: HTTP {}", status.as_u16()));
                    if !(status.as_u16() == 429 || status.is_server_error()) {
                        return Err(Error::Transport {
                            message: format!("endpoint answered HTTP {}", status.as_u16()),
                            attempts,
                        });
                    }
                    true
                }
                Err(e) => {
                    attempts.push(format!("attempt {n}: {e}"));
                    true
                }
            };
            if retryable && attempt < self.cfg.max_retries {
                let backoff = Duration::from_millis(100 * (1u64 << attempt.min(6)));
                let remaining = deadline.saturating_duration_since(Instant::now());
                std::thread::sleep(backoff.min(remaining));
            }
        }
        Err(Error::Transport {
            message: "retries exhausted".into(),
            attempts,
        })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// Deterministic offline teacher rules.
pub mod mock {
    use super::*;

    /// Lowercase word -> replacement. Applied to lowercase words, and to the
    /// first word of the answer.
    const SYNONYMS: &[(&str, &str)] = &[
        ("in", "during"),
        ("during", "in"),
        ("founded", "established"),
        ("established", "founded"),
        ("built", "constructed"),
        ("company", "firm"),
        ("firm", "company"),
        ("city", "town"),
        ("began", "started"),
        ("started", "began"),
        ("first", "initial"),
        ("bought", "purchased"),
        ("purchased", "bought"),
        ("produced", "manufactured"),
        ("launched", "introduced"),
        ("moved", "relocated"),
        ("opened", "inaugurated"),
        ("large", "big"),
        ("small", "little"),
        ("famous", "renowned"),
        ("near", "close to"),
        ("after", "following"),
        ("before", "prior to"),
        ("about", "around"),
        ("only", "just"),
    ];

    const FUNCTION_WORDS: &[&str] = &[
        "a", "an", "the", "in", "on", "at", "by", "for", "of", "to", "from", "with", "during", "after", "before",
        "it", "he", "she", "they", "we", "his", "her", "their", "its", "this", "that", "these", "those", "some",
        "about", "around", "near", "only", "just", "when", "while", "since", "until", "not", "no", "yes", "and",
        "or", "but", "as", "is", "was", "were", "are", "be", "been", "over", "under", "between", "following",
    ];

    const FABRICATED_CLAUSES: &[&str] = &[
        "according to a later biography",
        "after a secret agreement with the government",
        "shortly before a major scandal broke",
        "following a disputed court ruling",
        "as reported by an anonymous insider",
        "despite strong opposition from foreign investors",
        "after a famous bet with a rival",
        "thanks to an undisclosed royal grant",
    ];

    pub const DISTRACTOR_NAMES: &[&str] = &[
        "Harold Whitcombe",
        "Elena Marchetti",
        "Tobias Lindqvist",
        "Margaret Osei",
        "Victor Castellanos",
        "Ingrid Halvorsen",
        "Rupert Adeyemi",
        "Celeste Moreau",
    ];

    const IRRELEVANT_FALLBACK: &str = "The surrounding region is known for its mild climate.";

    fn pick<'a>(list: &[&'a str], anchor: &AnchorTriplet, salt: &str) -> &'a str {
        let key = format!("{}\u{1f}{}\u{1f}{salt}", anchor.source_id, anchor.golden_answer);
        list[(fnv1a(key.as_bytes()) % list.len() as u64) as usize]
    }

    fn core_word(w: &str) -> (&str, &str, &str) {
        let start = w.find(|c: char| c.is_alphanumeric()).unwrap_or(w.len());
        let end = w.rfind(|c: char| c.is_alphanumeric()).map(|i| i + w[i..].chars().next().unwrap().len_utf8()).unwrap_or(start);
        if start >= end {
            return (w, "", "");
        }
        (&w[..start], &w[start..end], &w[end..])
    }

    fn is_capitalized(w: &str) -> bool {
        w.chars().next().is_some_and(char::is_uppercase)
    }

    fn is_common(lower: &str) -> bool {
        FUNCTION_WORDS.contains(&lower) || SYNONYMS.iter().any(|(k, _)| *k == lower)
    }

    /// Capitalized word tokens that are not sentence-initial common words.
    pub fn proper_noun_tokens(s: &str) -> Vec<String> {
        s.split_whitespace()
            .enumerate()
            .filter_map(|(i, w)| {
                let (_, core, _) = core_word(w);
                if core.is_empty() || !is_capitalized(core) {
                    return None;
                }
                let lower = core.to_lowercase();
                if i == 0 && is_common(&lower) {
                    return None;
                }
                Some(lower)
            })
            .collect()
    }

    pub fn digit_tokens(s: &str) -> Vec<String> {
        crate::text::word_tokens(s)
            .into_iter()
            .filter(|t| t.chars().any(|c| c.is_ascii_digit()))
            .collect()
    }

    fn match_case(replacement: &str, like: &str) -> String {
        if is_capitalized(like) {
            let mut c = replacement.chars();
            match c.next() {
                Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
                None => String::new(),
            }
        } else {
            replacement.to_string()
        }
    }

    fn lower_first_if_common(s: &str) -> String {
        let first = s.split_whitespace().next().unwrap_or("");
        let (_, core, _) = core_word(first);
        if is_common(&core.to_lowercase()) {
            let mut c = s.chars();
            match c.next() {
                Some(f) => f.to_lowercase().collect::<String>() + c.as_str(),
                None => String::new(),
            }
        } else {
            s.to_string()
        }
    }

    fn upper_first(s: &str) -> String {
        let mut c = s.chars();
        match c.next() {
            Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
            None => String::new(),
        }
    }

    /// Synonym substitution, then a swap of the two clauses around the first
    /// comma. Falls back to an "It was ..." frame if nothing changed.
    pub fn positive(anchor: &AnchorTriplet) -> String {
        let golden = anchor.golden_answer.trim();
        let words: Vec<String> = golden
            .split_whitespace()
            .enumerate()
            .map(|(i, w)| {
                let (pre, core, post) = core_word(w);
                let lower = core.to_lowercase();
                let eligible = !core.is_empty() && (!is_capitalized(core) || i == 0);
                match SYNONYMS.iter().find(|(k, _)| *k == lower) {
                    Some((_, rep)) if eligible => format!("{pre}{}{post}", match_case(rep, core)),
                    _ => w.to_string(),
                }
            })
            .collect();
        let mut out = words.join(" ");
        if let Some((a, b)) = out.split_once(", ") {
            if !a.is_empty() && !b.is_empty() && !b.contains(", ") {
                let tail_punct: String = b.chars().rev().take_while(|c| matches!(c, '.' | '!' | '?')).collect();
                let b_core = b.trim_end_matches(['.', '!', '?']);
                let swapped = format!("{}, {}{}", upper_first(b_core), lower_first_if_common(a), tail_punct);
                // Moving a capitalized word to the front can hide it as a name.
                if keeps_names_and_digits(&swapped, golden) {
                    out = swapped;
                }
            }
        }
        if normalize(&out) == normalize(golden) {
            let body = lower_first_if_common(golden.trim_end_matches(['.', '!', '?']));
            out = format!("It was {body}.");
        }
        out
    }

    fn keeps_names_and_digits(candidate: &str, golden: &str) -> bool {
        let mut names = proper_noun_tokens(candidate);
        let mut digits = digit_tokens(candidate);
        let take = |pool: &mut Vec<String>, t: &String| match pool.iter().position(|p| p == t) {
            Some(i) => {
                pool.swap_remove(i);
                true
            }
            None => false,
        };
        proper_noun_tokens(golden).iter().all(|t| take(&mut names, t))
            && digit_tokens(golden).iter().all(|t| take(&mut digits, t))
    }

    /// Golden answer with a fabricated clause appended.
    pub fn injected(anchor: &AnchorTriplet) -> String {
        let body = anchor.golden_answer.trim().trim_end_matches(['.', '!', '?']);
        format!("{body}, {}.", pick(FABRICATED_CLAUSES, anchor, "type1"))
    }

    fn find_year(s: &str) -> Option<(usize, u32)> {
        let bytes = s.as_bytes();
        let mut i = 0;
        while i + 4 <= bytes.len() {
            let window = &bytes[i..i + 4];
            let bounded_left = i == 0 || !bytes[i - 1].is_ascii_digit();
            let bounded_right = i + 4 == bytes.len() || !bytes[i + 4].is_ascii_digit();
            if bounded_left && bounded_right && window.iter().all(u8::is_ascii_digit) {
                let year: u32 = s[i..i + 4].parse().expect("four ascii digits");
                if (1003..=2999).contains(&year) {
                    return Some((i, year));
                }
            }
            i += 1;
        }
        None
    }

    /// Year shifted back by three, else a name swapped for a distractor,
    /// else a negation.
    pub fn conflicting(anchor: &AnchorTriplet) -> String {
        let golden = anchor.golden_answer.trim();
        if let Some((at, year)) = find_year(golden) {
            return format!("{}{}{}", &golden[..at], year - 3, &golden[at + 4..]);
        }
        let words: Vec<&str> = golden.split_whitespace().collect();
        let is_proper = |i: usize, w: &str| {
            let (_, core, _) = core_word(w);
            !core.is_empty() && is_capitalized(core) && !(i == 0 && is_common(&core.to_lowercase()))
        };
        if let Some(start) = words.iter().enumerate().position(|(i, w)| is_proper(i, w)) {
            let mut end = start + 1;
            while end < words.len() && is_proper(end, words[end]) && !core_word(words[end - 1]).2.contains(',') {
                end += 1;
            }
            let span = words[start..end].join(" ");
            let candidates: Vec<&str> = DISTRACTOR_NAMES
                .iter()
                .copied()
                .filter(|d| normalize(d) != normalize(core_word(&span).1))
                .collect();
            let distractor = pick(&candidates, anchor, "type2");
            let (pre, _, _) = core_word(words[start]);
            let (_, _, post) = core_word(words[end - 1]);
            let mut out: Vec<String> = words[..start].iter().map(|w| w.to_string()).collect();
            out.push(format!("{pre}{distractor}{post}"));
            out.extend(words[end..].iter().map(|w| w.to_string()));
            return out.join(" ");
        }
        format!("Not {}", lower_first_if_common(golden))
    }

    pub fn split_sentences(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        let chars: Vec<char> = text.chars().collect();
        for (i, &c) in chars.iter().enumerate() {
            cur.push(c);
            let at_end = i + 1 == chars.len();
            if matches!(c, '.' | '!' | '?') && (at_end || chars[i + 1].is_whitespace()) {
                let s = cur.trim().to_string();
                if !s.is_empty() {
                    out.push(s);
                }
                cur.clear();
            }
        }
        let s = cur.trim().to_string();
        if !s.is_empty() {
            out.push(s);
        }
        out
    }

    /// A context sentence that does not contain the answer span.
    pub fn irrelevant(anchor: &AnchorTriplet) -> String {
        let gold = normalize(&anchor.golden_answer);
        let candidates: Vec<String> = split_sentences(&anchor.context)
            .into_iter()
            .filter(|s| !contains_normalized(s, &anchor.golden_answer) && normalize(s) != gold)
            .collect();
        if candidates.is_empty() {
            return IRRELEVANT_FALLBACK.to_string();
        }
        let refs: Vec<&str> = candidates.iter().map(String::as_str).collect();
        pick(&refs, anchor, "type3").to_string()
    }

    pub fn generate(anchor: &AnchorTriplet, kind: RequestKind) -> String {
        match kind {
            RequestKind::Positive => positive(anchor),
            RequestKind::Type1 => injected(anchor),
            RequestKind::Type2 => conflicting(anchor),
            RequestKind::Type3 => irrelevant(anchor),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    pub(crate) fn table1_anchor() -> AnchorTriplet {
        AnchorTriplet::new(
            "humvee-1992",
            "Schwarzenegger was so enamored by the Humvee that he lobbied AM General to produce a civilian Humvee, which they did in 1992. He purchased the first two.",
            "In what year did AM General grant Schwarzenegger\u{2019}s wish for a street-legal Humvee?",
            "In 1992.",
        )
        .unwrap()
    }

    #[test]
    fn positive_prompt_carries_golden_answer_and_intent() {
        let t = Teacher::new(TeacherConfig::mock()).unwrap();
        let req = t.request(&table1_anchor(), RequestKind::Positive);
        let p = t.render(&req).unwrap();
        assert!(p.user.contains("In 1992."));
        assert!(p.user.contains("while keeping the factual information completely unchanged"));
        assert!(p.user.contains("Schwarzenegger was so enamored"));
        assert!(p.user.contains("street-legal Humvee?"));
    }

    #[test]
    fn type2_prompt_asks_for_contradiction() {
        let t = Teacher::new(TeacherConfig::mock()).unwrap();
        let p = t.render(&t.request(&table1_anchor(), RequestKind::Type2)).unwrap();
        assert!(p.user.contains("deliberately alter or deny key information in the context"));
    }

    #[test]
    fn unknown_template_is_config_error() {
        let pack = TemplatePack::builtin();
        let req = TeacherRequest {
            anchor: table1_anchor(),
            kind: RequestKind::Positive,
            template_id: "nope".into(),
        };
        assert!(matches!(render_prompt(&pack, &req), Err(Error::Config(_))));
    }

    #[test]
    fn mock_rules_on_worked_example() {
        let a = table1_anchor();
        assert_eq!(mock::conflicting(&a), "In 1989.");
        assert_eq!(mock::positive(&a), "During 1992.");
        assert!(mock::injected(&a).starts_with("In 1992, "));
        assert_eq!(mock::irrelevant(&a), "He purchased the first two.");
    }

    #[test]
    fn mock_conflicting_swaps_names_then_negates() {
        let a = AnchorTriplet::new("n", "Arvid Lund founded Norcom.", "Who founded Norcom?", "Arvid Lund").unwrap();
        let out = mock::conflicting(&a);
        assert!(mock::DISTRACTOR_NAMES.contains(&out.as_str()), "{out}");
        let b = AnchorTriplet::new("m", "the river is wide", "how is the river?", "wide").unwrap();
        assert_eq!(mock::conflicting(&b), "Not wide");
    }

    #[test]
    fn mock_positive_reorders_clauses() {
        let a = AnchorTriplet::new("r", "ctx", "q", "In 1962, Arvid Lund founded Norcom.").unwrap();
        let out = mock::positive(&a);
        assert_eq!(out, "Arvid Lund established Norcom, during 1962.");
    }

    #[test]
    fn mock_is_referentially_transparent() {
        let t = Teacher::new(TeacherConfig::mock()).unwrap();
        let a = table1_anchor();
        for kind in [RequestKind::Positive, RequestKind::Type1, RequestKind::Type2, RequestKind::Type3] {
            let req = t.request(&a, kind);
            let first = t.generate(&req).unwrap();
            for _ in 0..1000 {
                assert_eq!(t.generate(&req).unwrap(), first);
            }
        }
    }

    #[test]
    fn strips_quotes() {
        assert_eq!(strip_quotes("  \"During 1992.\" \n"), "During 1992.");
        assert_eq!(strip_quotes("\u{201c}x\u{201d}"), "x");
        assert_eq!(strip_quotes("\"\""), "\"\"");
    }

    #[test]
    fn config_validation() {
        let mut c = TeacherConfig::mock();
        c.max_retries = 6;
        assert!(c.validate().is_err());
        let mut c = TeacherConfig::mock();
        c.timeout_secs = 0.0;
        assert!(c.validate().is_err());
        let mut c = TeacherConfig::mock();
        c.templates.type2 = "missing.v9".into();
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("missing.v9"), "{err}");
    }

    /// Serves the canned `responses` in order, one per connection.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(head_end) = text.find("\r\n\r\n") {
                        let len = text[..head_end]
                            .lines()
                            .find_map(|l| {
                                let lower = l.to_ascii_lowercase();
                                lower.strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= head_end + 4 + len {
                            bodies.push(String::from_utf8_lossy(&buf[head_end + 4..]).to_string());
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            bodies
        });
        (format!("http://{addr}/v1/chat/completions"), handle)
    }

    fn completion(text: &str) -> String {
        serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string()
    }

    #[test]
    fn remote_retries_on_429_then_succeeds() {
        let (url, server) = serve(vec![
            (429, "{}".into()),
            (429, "{}".into()),
            (200, completion("\"AM General launched the road-legal Humvee in 1992.\"")),
        ]);
        let mut cfg = TeacherConfig::remote(url);
        cfg.timeout_secs = 5.0;
        cfg.api_key = Some("test-key".into());
        let t = Teacher::new(cfg).unwrap();
        let gen = t.generate(&t.request(&table1_anchor(), RequestKind::Positive)).unwrap();
        assert_eq!(gen.text, "AM General launched the road-legal Humvee in 1992.");
        assert_eq!(gen.attempts.len(), 3);
        assert!(gen.attempts[0].contains("429"));
        let bodies = server.join().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[2]).unwrap();
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["messages"][1]["role"], "user");
        assert_eq!(sent["temperature"], 0.7);
        assert_eq!(sent["model"], "gpt-4o-mini");
    }

    #[test]
    fn remote_gives_up_with_attempt_log() {
        let (url, server) = serve(vec![(503, "{}".into()), (503, "{}".into())]);
        let mut cfg = TeacherConfig::remote(url);
        cfg.max_retries = 1;
        cfg.timeout_secs = 5.0;
        let t = Teacher::new(cfg).unwrap();
        match t.generate(&t.request(&table1_anchor(), RequestKind::Type1)) {
            Err(Error::Transport { attempts, .. }) => assert_eq!(attempts.len(), 2),
            other => panic!("expected transport error, got {other:?}"),
        }
        server.join().unwrap();
    }

    #[test]
    fn remote_empty_completion_is_generation_error() {
        let (url, server) = serve(vec![(200, completion("  "))]);
        let t = Teacher::new(TeacherConfig::remote(url)).unwrap();
        assert!(matches!(
            t.generate(&t.request(&table1_anchor(), RequestKind::Type3)),
            Err(Error::Generation(_))
        ));
        server.join().unwrap();
    }

    #[test]
    fn remote_respects_wall_clock_bound() {
        // Nothing listens on this port once the listener is dropped.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut cfg = TeacherConfig::remote(format!("http://127.0.0.1:{port}/"));
        cfg.timeout_secs = 0.3;
        cfg.max_retries = 2;
        let t = Teacher::new(cfg).unwrap();
        let start = Instant::now();
        let res = t.generate(&t.request(&table1_anchor(), RequestKind::Positive));
        assert!(matches!(res, Err(Error::Transport { .. })));
        assert!(start.elapsed() <= Duration::from_secs_f64(0.3 * 3.0 + 0.2));
    }
}
