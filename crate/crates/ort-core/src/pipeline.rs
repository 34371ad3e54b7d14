//! The composed question-answering pipeline: recognition → label path
//! search → semantic filtering → guided mining → answer generation, plus
//! the three ablation modes and the stage call log that proves mode
//! isolation.
//!
//! Every answer is captured as an [`AnswerRecord`] laid out like the
//! worked-case tables (Aims / Conditions / Rule_Paths / Selected_Rule_Paths
//! / Reasoning_Paths / Final_Answer) so runs can be diffed directly. Under
//! the mock backend and a fixed seed, records are byte-stable.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{BackendKind, Mode, RunConfig};
use crate::error::{ConfigError, PipelineError, ReasonError};
use crate::gateway::{
    ChatBackend, FixtureMockBackend, Gateway, GatewayOptions, HttpBackend, TemplateSet,
};
use crate::kg::{KgBuilder, KgStore};
use crate::miner::{collect_entity_paths, format_paths, mine_entity_tree};
use crate::ontology::{build_neighbor_dictionary, build_ontology_from_store, NeighborLabelDictionary};
use crate::reasoner::{reverse_reason, trace_forward, LabelPath, QueryIntent};

/// Stage names as they appear in the call log.
pub mod stage {
    pub const LABEL_LIST: &str = "label_list";
    pub const RECOGNIZE: &str = "recognize";
    pub const REVERSE_REASON: &str = "reverse_reason";
    pub const TRACE_FORWARD: &str = "trace_forward";
    pub const SEMANTIC_FILTER: &str = "semantic_filter";
    pub const MINE: &str = "mine";
    pub const GENERATE: &str = "generate";
}

/// One answered question, laid out like the worked-case tables. Sections
/// that a mode never produces are absent rather than empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    #[serde(rename = "Question")]
    pub question: String,
    #[serde(rename = "Aims", default, skip_serializing_if = "Option::is_none")]
    pub aims: Option<Vec<(String, String)>>,
    #[serde(rename = "Conditions", default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Vec<(String, String)>>,
    #[serde(rename = "Rule_Paths", default, skip_serializing_if = "Option::is_none")]
    pub rule_paths: Option<Vec<String>>,
    #[serde(
        rename = "Selected_Rule_Paths",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub selected_rule_paths: Option<Vec<String>>,
    #[serde(rename = "Reasoning_Paths", default, skip_serializing_if = "Option::is_none")]
    pub reasoning_paths: Option<Vec<String>>,
    #[serde(rename = "Final_Answer")]
    pub final_answer: Vec<String>,
    pub mode: String,
    /// Per-stage wall-clock milliseconds; recorded only when enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<BTreeMap<String, u64>>,
}

impl AnswerRecord {
    /// Machine-readable form (stable field order, trailing newline).
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("record serializes");
        out.push('\n');
        out
    }

    /// Human-readable case text in the worked-table layout.
    pub fn render_case(&self) -> String {
        let mut out = format!("Question:\n{}\n", self.question);
        let pairs = |p: &Vec<(String, String)>| {
            serde_json::to_string(p).expect("pair list serializes")
        };
        if let Some(aims) = &self.aims {
            out.push_str(&format!("\nAims:\n{}\n", pairs(aims)));
        }
        if let Some(conditions) = &self.conditions {
            out.push_str(&format!("\nConditions:\n{}\n", pairs(conditions)));
        }
        for (title, section) in [
            ("Rule_Paths", &self.rule_paths),
            ("Selected_Rule_Paths", &self.selected_rule_paths),
            ("Reasoning_Paths", &self.reasoning_paths),
        ] {
            if let Some(lines) = section {
                out.push_str(&format!("\n{title}:\n"));
                for line in lines {
                    out.push_str(line);
                    out.push('\n');
                }
            }
        }
        out.push_str("\nFinal_Answer:\n");
        for answer in &self.final_answer {
            out.push_str(answer);
            out.push('\n');
        }
        out
    }
}

/// Candidate vs. selected label paths for one question (debug view of the
/// reasoning stage).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathInspection {
    pub question: String,
    pub candidates: Vec<String>,
    pub selected: Vec<String>,
}

/// Mix the run seed with the question text so every question gets its own
/// reproducible sampling stream, independent of evaluation order.
pub fn question_seed(base: u64, question: &str) -> u64 {
    let digest = Sha256::digest(question.as_bytes());
    let mut eight = [0u8; 8];
    eight.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(eight)
}

/// The assembled pipeline. Shared immutably across worker threads; the
/// stage log and gateway call log use interior mutability.
pub struct Pipeline {
    config: RunConfig,
    store: Option<Arc<KgStore>>,
    dictionary: Option<NeighborLabelDictionary>,
    gateway: Gateway,
    stage_log: Mutex<Vec<&'static str>>,
}

impl Pipeline {
    /// Assemble a pipeline from parts. Modes other than `no_rules` need the
    /// graph and its dictionary; `no_rules` must not be given them at all —
    /// it never touches the store, and the log proves it.
    pub fn new(
        config: RunConfig,
        store: Option<Arc<KgStore>>,
        dictionary: Option<NeighborLabelDictionary>,
        gateway: Gateway,
    ) -> Result<Pipeline, ConfigError> {
        config.validate()?;
        if config.mode != Mode::NoRules && (store.is_none() || dictionary.is_none()) {
            return Err(ConfigError::BadValue {
                field: "kg_path".to_owned(),
                reason: format!("mode {} needs a knowledge graph and index", config.mode),
            });
        }
        Ok(Pipeline {
            config,
            store,
            dictionary,
            gateway,
            stage_log: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn model_id(&self) -> &str {
        self.gateway.model_id()
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Stages invoked so far, in order.
    pub fn stage_log(&self) -> Vec<&'static str> {
        self.stage_log.lock().expect("stage log poisoned").clone()
    }

    fn log(&self, stage: &'static str) {
        self.stage_log.lock().expect("stage log poisoned").push(stage);
    }

    fn graph(&self) -> (&KgStore, &NeighborLabelDictionary) {
        (
            self.store.as_deref().expect("graph checked at construction"),
            self.dictionary.as_ref().expect("dictionary checked at construction"),
        )
    }

    /// Answer one question according to the configured mode.
    pub fn ask(&self, question: &str) -> Result<AnswerRecord, PipelineError> {
        let mut timings: Option<BTreeMap<String, u64>> =
            self.config.record_timing.then(BTreeMap::new);
        let record = self.ask_inner(question, &mut timings)?;
        Ok(AnswerRecord {
            timing_ms: timings,
            ..record
        })
    }

    fn timed<T>(
        &self,
        timings: &mut Option<BTreeMap<String, u64>>,
        stage: &'static str,
        f: impl FnOnce(&Self) -> T,
    ) -> T {
        self.log(stage);
        let start = timings.is_some().then(Instant::now);
        let out = f(self);
        if let (Some(map), Some(start)) = (timings.as_mut(), start) {
            let ms = Duration::as_millis(&start.elapsed()) as u64;
            *map.entry(stage.to_owned()).or_insert(0) += ms;
        }
        out
    }

    fn ask_inner(
        &self,
        question: &str,
        timings: &mut Option<BTreeMap<String, u64>>,
    ) -> Result<AnswerRecord, PipelineError> {
        if self.config.mode == Mode::NoRules {
            let answers =
                self.timed(timings, stage::GENERATE, |p| p.gateway.generate(question, ""))?;
            return Ok(AnswerRecord {
                question: question.to_owned(),
                aims: None,
                conditions: None,
                rule_paths: None,
                selected_rule_paths: None,
                reasoning_paths: None,
                final_answer: answers,
                mode: self.config.mode.to_string(),
                timing_ms: None,
            });
        }

        let (store, dictionary) = self.graph();
        let labels: Vec<&str> =
            self.timed(timings, stage::LABEL_LIST, |_| store.label_names().collect());
        let extraction = self.timed(timings, stage::RECOGNIZE, |p| {
            p.gateway.recognize(question, &labels)
        })?;
        let intent = QueryIntent::new(extraction.conditions.clone(), extraction.aims.clone());

        let candidates = match self.config.mode {
            Mode::TraceForward => self.timed(timings, stage::TRACE_FORWARD, |p| {
                trace_forward(&intent, dictionary, p.config.max_pop)
            }),
            _ => self.timed(timings, stage::REVERSE_REASON, |p| {
                reverse_reason(&intent, dictionary, p.config.max_pop, p.config.cycle_policy)
            }),
        };
        let candidates = match candidates {
            Ok(paths) => paths,
            Err(e @ ReasonError::EmptyPathSet { .. }) if self.config.fallback_on_empty_paths => {
                log::warn!("{e}; falling back to direct answering");
                let answers =
                    self.timed(timings, stage::GENERATE, |p| p.gateway.generate(question, ""))?;
                return Ok(AnswerRecord {
                    question: question.to_owned(),
                    aims: Some(extraction.aims),
                    conditions: Some(extraction.conditions),
                    rule_paths: Some(Vec::new()),
                    selected_rule_paths: Some(Vec::new()),
                    reasoning_paths: Some(Vec::new()),
                    final_answer: answers,
                    mode: self.config.mode.to_string(),
                    timing_ms: None,
                });
            }
            Err(e) => return Err(e.into()),
        };

        let selected = match self.config.mode {
            Mode::NoLlmFilter => candidates.clone(),
            _ => self.timed(timings, stage::SEMANTIC_FILTER, |p| {
                p.gateway.filter_paths(question, &candidates)
            })?,
        };

        let seed = question_seed(self.config.seed, question);
        let entity_paths = self.timed(timings, stage::MINE, |p| {
            let mut out = Vec::new();
            for path in &selected {
                let tree = mine_entity_tree(
                    store,
                    dictionary,
                    path,
                    &extraction.conditions,
                    p.config.top_k,
                    seed,
                );
                out.extend(collect_entity_paths(store, &tree));
            }
            out
        });
        let formatted = format_paths(&entity_paths);
        let answers = self.timed(timings, stage::GENERATE, |p| {
            p.gateway.generate(question, &formatted)
        })?;

        Ok(AnswerRecord {
            question: question.to_owned(),
            aims: Some(extraction.aims),
            conditions: Some(extraction.conditions),
            rule_paths: Some(candidates.iter().map(LabelPath::render).collect()),
            selected_rule_paths: Some(selected.iter().map(LabelPath::render).collect()),
            reasoning_paths: Some(formatted.lines().map(str::to_owned).collect()),
            final_answer: answers,
            mode: self.config.mode.to_string(),
            timing_ms: None,
        })
    }

    /// Run recognition and path search only; report candidates vs. what the
    /// semantic filter keeps.
    pub fn inspect(&self, question: &str) -> Result<PathInspection, PipelineError> {
        if self.config.mode == Mode::NoRules {
            return Ok(PathInspection {
                question: question.to_owned(),
                candidates: Vec::new(),
                selected: Vec::new(),
            });
        }
        let (store, dictionary) = self.graph();
        self.log(stage::LABEL_LIST);
        let labels: Vec<&str> = store.label_names().collect();
        self.log(stage::RECOGNIZE);
        let extraction = self.gateway.recognize(question, &labels)?;
        let intent = QueryIntent::new(extraction.conditions, extraction.aims);
        let candidates = match self.config.mode {
            Mode::TraceForward => {
                self.log(stage::TRACE_FORWARD);
                trace_forward(&intent, dictionary, self.config.max_pop)?
            }
            _ => {
                self.log(stage::REVERSE_REASON);
                reverse_reason(&intent, dictionary, self.config.max_pop, self.config.cycle_policy)?
            }
        };
        let selected = match self.config.mode {
            Mode::NoLlmFilter => candidates.clone(),
            _ => {
                self.log(stage::SEMANTIC_FILTER);
                self.gateway.filter_paths(question, &candidates)?
            }
        };
        Ok(PathInspection {
            question: question.to_owned(),
            candidates: candidates.iter().map(LabelPath::render).collect(),
            selected: selected.iter().map(LabelPath::render).collect(),
        })
    }
}

/// Load the store a config points at: a prebuilt index cache when
/// `index_path` is set, otherwise a triple dump parsed per the strictness
/// flag.
pub fn load_store(config: &RunConfig) -> Result<KgStore, PipelineError> {
    if let Some(index) = &config.index_path {
        return Ok(KgStore::load_index(index)?);
    }
    let Some(kg) = &config.kg_path else {
        return Err(ConfigError::BadValue {
            field: "kg_path".to_owned(),
            reason: "no kg_path or index_path configured".to_owned(),
        }
        .into());
    };
    let file = std::fs::File::open(kg).map_err(crate::error::KgError::from)?;
    let mut builder = KgBuilder::new(config.strict_parse);
    builder.read_from(std::io::BufReader::new(file))?;
    Ok(builder.finish())
}

/// Construct the configured chat backend. The HTTP bearer token comes from
/// the ORT_LLM_API_KEY environment variable — it is never configured in a
/// file, logged, or echoed.
pub fn backend_from_config(config: &RunConfig) -> Result<Box<dyn ChatBackend>, PipelineError> {
    match config.backend {
        BackendKind::Mock => {
            let Some(dir) = &config.fixtures_dir else {
                return Err(ConfigError::BadValue {
                    field: "fixtures_dir".to_owned(),
                    reason: "the mock backend needs a fixture directory".to_owned(),
                }
                .into());
            };
            Ok(Box::new(FixtureMockBackend::new(dir.clone())))
        }
        BackendKind::Http => {
            if config.http.base_url.is_empty() {
                return Err(ConfigError::BadValue {
                    field: "http.base_url".to_owned(),
                    reason: "the http backend needs an endpoint URL".to_owned(),
                }
                .into());
            }
            let api_key = std::env::var("ORT_LLM_API_KEY").ok();
            Ok(Box::new(HttpBackend::new(
                config.http.base_url.clone(),
                config.http.model.clone(),
                Duration::from_secs(config.http.timeout_secs),
                api_key,
            )?))
        }
    }
}

/// Build the gateway for a config: prompt templates (directory overrides or
/// built-ins), retry/fallback options, and the chosen backend.
pub fn gateway_from_config(config: &RunConfig) -> Result<Gateway, PipelineError> {
    let templates = match &config.prompt_dir {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin(),
    };
    let options = GatewayOptions {
        max_attempts: config.max_attempts,
        fallback_on_empty_filter: config.fallback_on_empty_filter,
        inflight_cap: config.inflight_cap,
    };
    Ok(Gateway::new(backend_from_config(config)?, templates, options)?)
}

/// Assemble the full pipeline a config describes. Loads the graph and
/// derives the dictionary for every mode except `no_rules`, which gets
/// neither.
pub fn build_pipeline(config: RunConfig) -> Result<Pipeline, PipelineError> {
    config.validate()?;
    let gateway = gateway_from_config(&config)?;
    let (store, dictionary) = if config.mode == Mode::NoRules {
        (None, None)
    } else {
        let store = Arc::new(load_store(&config)?);
        let ontology = build_ontology_from_store(&store);
        let dictionary = build_neighbor_dictionary(&ontology);
        (Some(store), Some(dictionary))
    };
    Ok(Pipeline::new(config, store, dictionary, gateway)?)
}
