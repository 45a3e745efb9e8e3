//! Synthesis backends: the deterministic mock used by tests and metrics
//! plumbing, and an HTTP client for a real generation endpoint.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{render_prompt, PromptKind};
use super::text::{Document, Tokenizer};
use super::{CorpusError, EntityPlan};

/// Failure reported by a synthesis backend.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("http request failed: {0}")]
    Http(String),
    #[error("backend response malformed: {0}")]
    MalformedResponse(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
}

/// One generation request: the source document plus the entities whose
/// relation should be described.
#[derive(Debug, Clone, Copy)]
pub enum SynthesisRequest<'a> {
    EntityExtraction { doc: &'a Document },
    RelationPair { doc: &'a Document, first: &'a str, second: &'a str },
    RelationTriplet { doc: &'a Document, first: &'a str, second: &'a str, third: &'a str },
}

impl SynthesisRequest<'_> {
    /// The rendered prompt for this request.
    pub fn prompt(&self) -> String {
        match self {
            SynthesisRequest::EntityExtraction { doc } => {
                render_prompt(PromptKind::EntityExtraction, doc, &[])
            }
            SynthesisRequest::RelationPair { doc, first, second } => {
                render_prompt(PromptKind::RelationPair, doc, &[first, second])
            }
            SynthesisRequest::RelationTriplet { doc, first, second, third } => {
                render_prompt(PromptKind::RelationTriplet, doc, &[first, second, third])
            }
        }
        .expect("request arity matches its kind")
    }
}

/// A text generator. Implementations must be safe to call from multiple
/// threads; generations carry no ordering dependence.
pub trait SynthesisBackend: Send + Sync {
    /// Produces the raw model output for one request.
    fn synthesize(&self, request: &SynthesisRequest) -> Result<String, BackendError>;
}

/// Deterministic stand-in for a language model.
///
/// Entity extraction returns the document's distinct capitalized tokens
/// in first-occurrence order, wrapped in the JSON shape the extraction
/// prompt asks for. Relation requests return a fixed template naming the
/// document and the entities, so every downstream metric is reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockBackend;

#[derive(Serialize)]
struct MockExtraction<'a> {
    summary: String,
    entities: Vec<&'a str>,
}

fn capitalized_tokens(text: &str) -> Vec<&str> {
    let mut seen = Vec::new();
    for token in text.split(|c: char| !c.is_alphanumeric()) {
        if token.chars().next().is_some_and(char::is_uppercase) && !seen.contains(&token) {
            seen.push(token);
        }
    }
    seen
}

impl SynthesisBackend for MockBackend {
    fn synthesize(&self, request: &SynthesisRequest) -> Result<String, BackendError> {
        Ok(match request {
            SynthesisRequest::EntityExtraction { doc } => {
                let body = MockExtraction {
                    summary: format!("Deterministic summary of {}.", doc.id()),
                    entities: capitalized_tokens(doc.text()),
                };
                serde_json::to_string(&body).expect("mock extraction serializes")
            }
            SynthesisRequest::RelationPair { doc, first, second } => format!(
                "### Discussion of {id} in relation to {first}\n\
                 {first} anchors this retelling of {id}, with {second} alongside.\n\n\
                 ### Discussion of {id} in relation to {second}\n\
                 {second} anchors this retelling of {id}, with {first} alongside.\n\n\
                 ### Discussion of Interaction between {first} and {second} in context of {id}\n\
                 Within {id}, {first} and {second} are directly related.\n",
                id = doc.id(),
            ),
            SynthesisRequest::RelationTriplet { doc, first, second, third } => format!(
                "### Discussion of {id} in relation to {first}\n\
                 {first} anchors this retelling of {id}, joined by {second} and {third}.\n\n\
                 ### Discussion of {id} in relation to {second}\n\
                 {second} anchors this retelling of {id}, joined by {first} and {third}.\n\n\
                 ### Discussion of {id} in relation to {third}\n\
                 {third} anchors this retelling of {id}, joined by {first} and {second}.\n\n\
                 ### Discussion of Interaction between {first}, {second} and {third} \
                 in context of {id}\n\
                 Within {id}, {first}, {second} and {third} are jointly related.\n",
                id = doc.id(),
            ),
        })
    }
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_tokens() -> u32 {
    2048
}

/// Connection settings for [`HttpBackend`]. Credentials never live here:
/// `api_key_env` names an environment variable that is read at request
/// time and sent as a bearer token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub url: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Synthesis backend that POSTs rendered prompts to an HTTP JSON
/// endpoint.
///
/// Request body: `{"model", "prompt", "temperature", "max_tokens"}`.
/// Expected response body: `{"text": "..."}`.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| BackendError::Http(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }
}

impl SynthesisBackend for HttpBackend {
    fn synthesize(&self, request: &SynthesisRequest) -> Result<String, BackendError> {
        let prompt = request.prompt();
        let body = CompletionRequest {
            model: &self.config.model,
            prompt: &prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let mut builder = self.client.post(&self.config.url).json(&body);
        if let Some(var) = &self.config.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| BackendError::MissingCredential(var.clone()))?;
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| BackendError::Http(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(BackendError::Http(format!("status {status}: {text}")));
        }
        let parsed: CompletionResponse =
            response.json().map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        Ok(parsed.text)
    }
}

/// A relation whose generation failed, with the backend's diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationFailure {
    pub relation: String,
    pub message: String,
}

/// Outcome of [`synthesize_corpus`]: generated documents in plan order,
/// failed relations, and relations skipped because the budget ran out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisReport {
    documents: Vec<Document>,
    failures: Vec<RelationFailure>,
    skipped: Vec<String>,
}

impl SynthesisReport {
    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn failures(&self) -> &[RelationFailure] {
        &self.failures
    }

    /// Relation ids beyond the generation budget, in plan order.
    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }

    /// Token count of the generated corpus, summed over documents.
    pub fn total_token_count(&self) -> usize {
        self.documents.iter().map(Document::token_count).sum()
    }
}

enum Relation {
    Pair(usize, usize),
    Triplet(usize, usize, usize),
}

impl Relation {
    fn id(&self, doc_id: &str) -> String {
        match *self {
            Relation::Pair(i, j) => format!("{doc_id}/pair/{i}-{j}"),
            Relation::Triplet(i, j, k) => format!("{doc_id}/triplet/{i}-{j}-{k}"),
        }
    }
}

/// Generates one document per planned relation, pairs before triplets,
/// stopping after `budget` attempts.
///
/// Backend failures do not abort the run: the failing relation is
/// recorded and the remaining documents are still returned. Generations
/// run concurrently; outputs are ordered by plan position regardless of
/// scheduling.
pub fn synthesize_corpus(
    plan: &EntityPlan,
    doc: &Document,
    backend: &dyn SynthesisBackend,
    budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<SynthesisReport, CorpusError> {
    if budget == 0 {
        return Err(CorpusError::ZeroBudget);
    }
    let entities = plan.entities();
    let relations: Vec<Relation> = plan
        .pairs()
        .iter()
        .map(|&(i, j)| Relation::Pair(i, j))
        .chain(plan.triplets().iter().map(|&(i, j, k)| Relation::Triplet(i, j, k)))
        .collect();
    let attempted = budget.min(relations.len());

    let results: Vec<Result<Document, RelationFailure>> = relations[..attempted]
        .par_iter()
        .map(|relation| {
            let request = match *relation {
                Relation::Pair(i, j) => SynthesisRequest::RelationPair {
                    doc,
                    first: &entities[i],
                    second: &entities[j],
                },
                Relation::Triplet(i, j, k) => SynthesisRequest::RelationTriplet {
                    doc,
                    first: &entities[i],
                    second: &entities[j],
                    third: &entities[k],
                },
            };
            let id = relation.id(plan.doc_id());
            match backend.synthesize(&request) {
                Ok(text) => Ok(Document::new(id, text, tokenizer)),
                Err(e) => Err(RelationFailure { relation: id, message: e.to_string() }),
            }
        })
        .collect();

    let mut documents = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(doc) => documents.push(doc),
            Err(failure) => failures.push(failure),
        }
    }
    let skipped =
        relations[attempted..].iter().map(|r| r.id(plan.doc_id())).collect();
    Ok(SynthesisReport { documents, failures, skipped })
}
