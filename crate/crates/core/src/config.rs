//! Run configuration: which backend proposes programs, and the inference
//! and prompt settings. Read from TOML; every field has a default.
//!
//! ```toml
//! [backend]
//! kind = "mock"            # mock | mock_gateway | live | replay
//! library = "standard"     # standard | golden | decoys
//! seed = 0
//!
//! [inference]
//! epsilon = 0.05
//! n_hypotheses = 30
//! top_k = 30
//!
//! [synthesis]
//! condition = "light"
//! two_stage = false
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::ScriptId;
use crate::dsl::library::{self, NamedProgram};
use crate::eval::{FrequencyPredictor, NllmPredictor, Predictor, PredictorKind, RotePredictor};
use crate::infer::{InferenceConfig, Rote, SynthesisSettings};
use crate::synth::gateway::{
    ChatCompletionsGateway, GatewayError, LiveConfig, LlmGateway, MockGateway, RecordingGateway, ReplayGateway,
};
use crate::synth::{GatewaySynthesizer, MockSynthesizer, RepairStrategy, Synthesizer};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Whole programs drawn from a library; no prompts are built.
    #[default]
    Mock,
    /// The full prompt and parse path against a scripted local backend.
    MockGateway,
    /// A chat-completions endpoint configured through the environment.
    Live,
    /// Answers from a saved transcript.
    Replay,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibraryChoice {
    #[default]
    Standard,
    Golden,
    Decoys,
}

impl LibraryChoice {
    pub fn programs(self, exclude: &[ScriptId]) -> Vec<NamedProgram> {
        let all = match self {
            LibraryChoice::Standard => library::standard(),
            LibraryChoice::Golden => library::golden_all(),
            LibraryChoice::Decoys => library::decoys(),
        };
        all.into_iter().filter(|p| !exclude.iter().any(|s| s.name() == p.name)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub library: LibraryChoice,
    /// Library used for rejuvenation draws; the main library when absent.
    pub rejuvenation_library: Option<LibraryChoice>,
    /// Scripts whose golden programs are left out of the libraries.
    pub exclude: Vec<ScriptId>,
    pub seed: u64,
    /// Injected delay per backend call (mock kinds only).
    pub latency_ms: u64,
    /// Transcript to answer from (replay).
    pub transcript: Option<PathBuf>,
    /// Where to save every exchange with a gateway backend.
    pub record: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    #[serde(flatten)]
    pub settings: SynthesisSettings,
    pub repair: RepairStrategy,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoteConfig {
    pub backend: BackendConfig,
    pub inference: InferenceConfig,
    pub synthesis: SynthesisConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("replay backend needs `backend.transcript`")]
    NoTranscript,
    #[error(transparent)]
    Inference(#[from] crate::infer::InferError),
}

type Recorder = Arc<RecordingGateway<Arc<dyn LlmGateway>>>;

/// Backend objects built from a config.
pub struct Backend {
    pub synthesizer: Arc<dyn Synthesizer>,
    /// The gateway used for program synthesis and the NLLM baseline.
    pub gateway: Arc<dyn LlmGateway>,
    recorder: Option<(Recorder, PathBuf)>,
}

impl Backend {
    /// Saves the recorded transcript, if recording was requested.
    pub fn save_transcript(&self) -> std::io::Result<()> {
        match &self.recorder {
            Some((r, path)) => r.save(path),
            None => Ok(()),
        }
    }
}

impl RoteConfig {
    pub fn from_toml(text: &str) -> Result<RoteConfig, ConfigError> {
        let cfg: RoteConfig = toml::from_str(text)?;
        cfg.inference.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RoteConfig, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn build_backend(&self) -> Result<Backend, ConfigError> {
        let b = &self.backend;
        let lib = b.library.programs(&b.exclude);
        let latency = Duration::from_millis(b.latency_ms);
        let mock_gateway = || -> Arc<dyn LlmGateway> {
            Arc::new(MockGateway::new(lib.clone(), b.seed).with_latency(latency))
        };
        let raw: Arc<dyn LlmGateway> = match b.kind {
            BackendKind::Mock | BackendKind::MockGateway => mock_gateway(),
            BackendKind::Live => Arc::new(ChatCompletionsGateway::new(LiveConfig::from_env()?)),
            BackendKind::Replay => Arc::new(ReplayGateway::load(b.transcript.as_ref().ok_or(ConfigError::NoTranscript)?)?),
        };
        let (gateway, recorder): (Arc<dyn LlmGateway>, _) = match &b.record {
            Some(path) => {
                let r = Arc::new(RecordingGateway::new(raw));
                (r.clone(), Some((r, path.clone())))
            }
            None => (raw, None),
        };
        let synthesizer: Arc<dyn Synthesizer> = match b.kind {
            BackendKind::Mock => {
                let mut m = MockSynthesizer::new(lib, b.seed);
                if let Some(r) = b.rejuvenation_library {
                    m = m.with_rejuvenation_library(r.programs(&b.exclude));
                }
                Arc::new(m)
            }
            _ => {
                let mut g = GatewaySynthesizer::new(gateway.clone()).with_repair(self.synthesis.repair);
                if let Some(n) = b.max_in_flight {
                    g = g.with_max_in_flight(n);
                }
                Arc::new(g)
            }
        };
        Ok(Backend { synthesizer, gateway, recorder })
    }

    pub fn engine(&self, backend: &Backend) -> Rote {
        Rote::new(backend.synthesizer.clone(), self.inference.clone()).with_settings(self.synthesis.settings)
    }

    pub fn predictor(&self, kind: PredictorKind, backend: &Backend) -> Box<dyn Predictor> {
        match kind {
            PredictorKind::Rote => Box::new(RotePredictor::new(self.engine(backend))),
            PredictorKind::Nllm => Box::new(NllmPredictor::new(backend.gateway.clone())),
            PredictorKind::Frequency => Box::new(FrequencyPredictor),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::InferenceMode;
    use crate::synth::Condition;

    #[test]
    fn defaults_match_the_hyperparameter_table() {
        let c = RoteConfig::from_toml("").unwrap();
        assert_eq!(c.inference.n_hypotheses, 30);
        assert_eq!(c.inference.top_k, 30);
        assert_eq!(c.inference.epsilon, 0.05);
        assert_eq!(c.inference.mode, InferenceMode::SmcRejuvenation);
        assert_eq!(c.inference.retry_budget(), 2);
        assert_eq!(c.synthesis.settings.condition, Condition::Light);
        assert_eq!(c.synthesis.repair, RepairStrategy::Resample);
    }

    #[test]
    fn parses_sections_and_round_trips() {
        let text = r#"
            [backend]
            kind = "mock_gateway"
            library = "decoys"
            rejuvenation_library = "standard"
            exclude = ["snake_patrol"]
            latency_ms = 5

            [inference]
            mode = "importance_sampling"
            epsilon = 0.1
            top_k = 10

            [synthesis]
            condition = "severe"
            two_stage = true
            repair = "revise"
        "#;
        let c = RoteConfig::from_toml(text).unwrap();
        assert_eq!(c.backend.kind, BackendKind::MockGateway);
        assert_eq!(c.inference.top_k, 10);
        assert_eq!(c.synthesis.settings.condition, Condition::Severe);
        assert!(c.synthesis.settings.two_stage);
        assert_eq!(RoteConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(c.build_backend().is_ok());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RoteConfig::from_toml("[inference]\ntop_k = 40").is_err());
        assert!(RoteConfig::from_toml("[inference]\nepsilon = 1.5").is_err());
        assert!(RoteConfig::from_toml("[backend]\nkind = \"replay\"").unwrap().build_backend().is_err());
    }

    #[test]
    fn exclusion_drops_the_golden_program() {
        let lib = LibraryChoice::Standard.programs(&[ScriptId::SnakePatrol]);
        assert_eq!(lib.len(), 29);
        assert!(lib.iter().all(|p| p.name != "snake_patrol"));
    }
}
