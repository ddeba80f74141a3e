//! Candidate program generation: prompting a model, extracting and
//! checking its code, resampling failures, and an offline mock.

pub mod gateway;
pub mod prompt;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::dataset::derive_seed;
use crate::dsl::library::NamedProgram;
use crate::dsl::BehaviorProgram;
use crate::trajectory::History;
use gateway::{CallKind, CompletionRequest, Exchange, InFlight, LlmGateway, Message};
pub use prompt::Condition;
use prompt::{build_prompt, extract_program, summary_prompt};

/// Why programs are being requested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    #[default]
    Initial,
    Rejuvenation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStrategy {
    /// Discard a failing program and sample again from the same prompt.
    #[default]
    Resample,
    /// Show the model its program and the error and ask for a fix.
    Revise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisRequest {
    /// Observed pairs; its `current` observation, if any, is shown too.
    pub history: History,
    pub condition: Condition,
    pub two_stage: bool,
    pub n_programs: usize,
    pub max_tokens: u32,
    /// Repairs allowed per program.
    pub max_retries: u32,
    pub purpose: Purpose,
    /// Distinguishes repeated requests on the same history.
    pub salt: u64,
}

impl SynthesisRequest {
    pub fn new(history: History) -> Self {
        SynthesisRequest {
            history,
            condition: Condition::Light,
            two_stage: false,
            n_programs: 30,
            max_tokens: 2000,
            max_retries: 2,
            purpose: Purpose::Initial,
            salt: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedHypothesis {
    pub name: Option<String>,
    pub program: BehaviorProgram,
    /// Sum of token log-probabilities of the program reply, when known.
    pub prior_logprob: Option<f64>,
    pub condition: Condition,
    /// Repairs spent before this program parsed.
    pub repairs: u32,
    pub transcript: Vec<Exchange>,
}

impl SynthesizedHypothesis {
    pub fn from_program(name: Option<String>, program: BehaviorProgram, condition: Condition) -> Self {
        SynthesizedHypothesis { name, program, prior_logprob: None, condition, repairs: 0, transcript: Vec::new() }
    }

    /// Program text preceded by `#` metadata lines, so the file is itself a
    /// valid program.
    pub fn to_file_text(&self) -> String {
        let mut s = String::new();
        if let Some(n) = &self.name {
            s.push_str(&format!("# name: {n}\n"));
        }
        let lp = self.prior_logprob.map_or("none".to_string(), |v| format!("{v:?}"));
        s.push_str(&format!("# prior_logprob: {lp}\n# condition: {}\n", self.condition.name()));
        s.push_str(self.program.source());
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s
    }

    pub fn from_file_text(text: &str) -> Result<Self, String> {
        let mut name = None;
        let mut prior_logprob = None;
        let mut condition = Condition::Light;
        let mut body = Vec::new();
        let mut in_header = true;
        for line in text.lines() {
            let meta = line.strip_prefix("# ").and_then(|l| l.split_once(": "));
            match meta {
                Some((key, value)) if in_header => match key {
                    "name" => name = Some(value.to_string()),
                    "prior_logprob" if value == "none" => prior_logprob = None,
                    "prior_logprob" => prior_logprob = Some(value.parse().map_err(|e| format!("prior_logprob: {e}"))?),
                    "condition" => condition = value.parse()?,
                    _ => body.push(line),
                },
                _ => {
                    in_header = false;
                    body.push(line);
                }
            }
        }
        let mut source = body.join("\n");
        source.push('\n');
        let program = BehaviorProgram::parse(&source).map_err(|e| e.to_string())?;
        Ok(SynthesizedHypothesis { name, program, prior_logprob, condition, repairs: 0, transcript: Vec::new() })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthesisOutcome {
    /// In request order; failed samples are simply absent.
    pub hypotheses: Vec<SynthesizedHypothesis>,
    /// Backend calls made for this request.
    pub calls: u64,
    pub repairs: u32,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("cannot synthesize from an empty history")]
    EmptyHistory,
}

pub trait Synthesizer: Send + Sync {
    fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisOutcome, SynthError>;

    /// Backend calls made so far.
    fn calls(&self) -> u64;
}

/// Synthesizer driving an [`LlmGateway`].
pub struct GatewaySynthesizer {
    gateway: Arc<dyn LlmGateway>,
    repair: RepairStrategy,
    in_flight: usize,
}

impl GatewaySynthesizer {
    pub fn new(gateway: Arc<dyn LlmGateway>) -> Self {
        GatewaySynthesizer { gateway, repair: RepairStrategy::Resample, in_flight: 32 }
    }

    pub fn with_repair(mut self, repair: RepairStrategy) -> Self {
        self.repair = repair;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.in_flight = n.max(1);
        self
    }

    pub fn gateway(&self) -> &Arc<dyn LlmGateway> {
        &self.gateway
    }

    fn call(
        &self,
        req: &SynthesisRequest,
        kind: CallKind,
        messages: Vec<Message>,
        sample: usize,
        attempt: u32,
        log: &mut Vec<Exchange>,
    ) -> Result<gateway::Completion, gateway::GatewayError> {
        let mut c = CompletionRequest::new(kind, messages);
        c.max_tokens = req.max_tokens;
        c.sample_index = sample;
        c.attempt = attempt;
        c.salt = req.salt;
        let r = self.gateway.complete(&c);
        log.push(Exchange { request: c, response: r.clone().map_err(|e| e.to_string()) });
        r
    }

    /// Two-stage parsing, stage one. Falls back to `None` on failure.
    pub fn summarize(&self, req: &SynthesisRequest, log: &mut Vec<Exchange>) -> Option<String> {
        let messages = summary_prompt(&req.history)?;
        match self.call(req, CallKind::Summary, messages, 0, 0, log) {
            Ok(c) => Some(c.text),
            Err(e) => {
                log::warn!("trajectory summary failed ({e}); using the raw history");
                None
            }
        }
    }

    fn generate_one(
        &self,
        req: &SynthesisRequest,
        plan: &prompt::PromptPlan,
        sample: usize,
    ) -> (Option<SynthesizedHypothesis>, u32, Vec<Exchange>) {
        let mut log = Vec::new();
        let mut last: Option<(String, String)> = None;
        for attempt in 0..=req.max_retries {
            let mut messages = if req.condition == Condition::Severe {
                match self.call(req, CallKind::FsmDescription, plan.stages[0].messages.clone(), sample, attempt, &mut log)
                {
                    Ok(c) => plan.second_stage(&c.text),
                    Err(_) => continue,
                }
            } else {
                plan.stages[0].messages.clone()
            };
            let mut kind = CallKind::Program;
            if let (RepairStrategy::Revise, Some((code, err))) = (self.repair, &last) {
                messages.push(Message::assistant(format!("```rote\n{code}```")));
                messages.push(Message::user(format!(
                    "That program is invalid: {err}\nReply with a corrected program only, inside a ```rote code block."
                )));
                kind = CallKind::Revision;
            }
            let reply = match self.call(req, kind, messages, sample, attempt, &mut log) {
                Ok(r) => r,
                Err(_) => continue,
            };
            let code = extract_program(&reply.text);
            match BehaviorProgram::parse(code) {
                Ok(program) => {
                    let h = SynthesizedHypothesis {
                        name: None,
                        program,
                        prior_logprob: reply.logprob_sum(),
                        condition: req.condition,
                        repairs: attempt,
                        transcript: log.clone(),
                    };
                    return (Some(h), attempt, log);
                }
                Err(e) => {
                    log::debug!("sample {sample} attempt {attempt}: {e}");
                    last = Some((code.to_string(), e.to_string()));
                }
            }
        }
        (None, req.max_retries, log)
    }
}

impl Synthesizer for GatewaySynthesizer {
    fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisOutcome, SynthError> {
        if req.history.is_empty() {
            return Err(SynthError::EmptyHistory);
        }
        let before = self.gateway.calls();
        let mut summary_log = Vec::new();
        let summary = if req.two_stage { self.summarize(req, &mut summary_log) } else { None };
        let plan = build_prompt(&req.history, req.condition, summary.as_deref()).ok_or(SynthError::EmptyHistory)?;
        let gate = InFlight::new(self.in_flight);
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..req.n_programs)
                .map(|i| {
                    let (gate, plan) = (&gate, &plan);
                    s.spawn(move || gate.run(|| self.generate_one(req, plan, i)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("generation thread panicked")).collect()
        });
        let mut out = SynthesisOutcome::default();
        for (h, repairs, _) in results {
            out.repairs += repairs;
            match h {
                Some(mut h) => {
                    let mut t = summary_log.clone();
                    t.append(&mut h.transcript);
                    h.transcript = t;
                    out.hypotheses.push(h);
                }
                None => out.dropped += 1,
            }
        }
        out.calls = self.gateway.calls() - before;
        Ok(out)
    }

    fn calls(&self) -> u64 {
        self.gateway.calls()
    }
}

/// Offline synthesizer sampling whole programs from a library.
///
/// Each call draws `min(n, |library|)` distinct programs in a seeded order
/// with uniform priors. Rejuvenation requests draw from a separate library
/// when one is set.
pub struct MockSynthesizer {
    library: Vec<NamedProgram>,
    rejuvenation: Option<Vec<NamedProgram>>,
    seed: u64,
    calls: AtomicU64,
}

impl MockSynthesizer {
    pub fn new(library: Vec<NamedProgram>, seed: u64) -> Self {
        MockSynthesizer { library, rejuvenation: None, seed, calls: AtomicU64::new(0) }
    }

    pub fn with_rejuvenation_library(mut self, library: Vec<NamedProgram>) -> Self {
        self.rejuvenation = Some(library);
        self
    }
}

/// Deterministic draw of up to `n` distinct programs from `library`.
pub fn mock_synthesize(
    library: &[NamedProgram],
    n: usize,
    seed: u64,
    condition: Condition,
) -> Vec<SynthesizedHypothesis> {
    let mut order: Vec<usize> = (0..library.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .into_iter()
        .take(n)
        .map(|i| {
            let p = &library[i];
            SynthesizedHypothesis::from_program(Some(p.name.clone()), p.program.clone(), condition)
        })
        .collect()
}

impl Synthesizer for MockSynthesizer {
    fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisOutcome, SynthError> {
        if req.history.is_empty() {
            return Err(SynthError::EmptyHistory);
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let lib = match (req.purpose, &self.rejuvenation) {
            (Purpose::Rejuvenation, Some(r)) => r,
            _ => &self.library,
        };
        let seed = derive_seed(self.seed, &[req.purpose as u64, req.salt]);
        let hypotheses = mock_synthesize(lib, req.n_programs, seed, req.condition);
        Ok(SynthesisOutcome { hypotheses, calls: 1, repairs: 0, dropped: 0 })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
