//! Entity extraction and relation enumeration for one source document.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backend::{SynthesisBackend, SynthesisRequest};
use super::text::Document;
use super::CorpusError;

/// Largest number of triplets enumerated for one document unless a cap is
/// given explicitly.
pub const DEFAULT_TRIPLET_CAP: usize = 1000;

/// Knobs for building an [`EntityPlan`]: how many triplets to keep and
/// the seed for sampling them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub triplet_cap: usize,
    pub seed: u64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { triplet_cap: DEFAULT_TRIPLET_CAP, seed: 0 }
    }
}

/// The relations to synthesize for one document: its entity list, every
/// unordered entity pair, and a capped selection of entity triplets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityPlan {
    doc_id: String,
    entities: Vec<String>,
    pairs: Vec<(usize, usize)>,
    triplets: Vec<(usize, usize, usize)>,
}

impl EntityPlan {
    /// Builds the plan for `entities`, which must be distinct and
    /// nonempty. Pairs are exhaustive in lexicographic order. Triplets
    /// are exhaustive when their total count is within `triplet_cap`,
    /// and otherwise a uniform without-replacement sample of `triplet_cap`
    /// of them, deterministic per `seed` and in lexicographic order.
    pub fn new(
        doc_id: impl Into<String>,
        entities: Vec<String>,
        triplet_cap: usize,
        seed: u64,
    ) -> Result<Self, CorpusError> {
        if entities.is_empty() {
            return Err(CorpusError::NoEntities);
        }
        let distinct: BTreeSet<&str> = entities.iter().map(String::as_str).collect();
        if distinct.len() != entities.len() {
            return Err(CorpusError::DuplicateEntities);
        }

        let n = entities.len();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
            }
        }

        let total = triplet_total(n as u128);
        let triplets = if total <= triplet_cap as u128 {
            let mut all = Vec::with_capacity(total as usize);
            for i in 0..n {
                for j in i + 1..n {
                    for k in j + 1..n {
                        all.push((i, j, k));
                    }
                }
            }
            all
        } else {
            sample_ranks(total, triplet_cap, seed)
                .into_iter()
                .map(|rank| unrank_triplet(rank, n as u128))
                .collect()
        };

        Ok(EntityPlan { doc_id: doc_id.into(), entities, pairs, triplets })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn triplets(&self) -> &[(usize, usize, usize)] {
        &self.triplets
    }

    /// Total relations the plan will synthesize: pairs then triplets.
    pub fn relation_count(&self) -> usize {
        self.pairs.len() + self.triplets.len()
    }
}

fn triplet_total(n: u128) -> u128 {
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

/// Floyd's without-replacement sampling of `m` ranks from `0..total`,
/// returned in ascending order.
fn sample_ranks(total: u128, m: usize, seed: u64) -> Vec<u128> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    for j in total - m as u128..total {
        let candidate = rng.random_range(0..=j);
        if !chosen.insert(candidate) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

/// Maps a lexicographic rank to the triplet `(i, j, k)` with
/// `i < j < k < n`.
fn unrank_triplet(rank: u128, n: u128) -> (usize, usize, usize) {
    let mut r = rank;
    let mut i = 0u128;
    loop {
        let rest = n - i - 1;
        let with_this_i = rest * (rest - 1) / 2;
        if r < with_this_i {
            break;
        }
        r -= with_this_i;
        i += 1;
    }
    let mut j = i + 1;
    loop {
        let with_this_j = n - j - 1;
        if r < with_this_j {
            break;
        }
        r -= with_this_j;
        j += 1;
    }
    let k = j + 1 + r;
    (i as usize, j as usize, k as usize)
}

/// Asks the backend for the document's salient entities and builds the
/// relation plan over them.
///
/// The backend response must contain a JSON object with an `entities`
/// array; duplicates are dropped preserving first occurrence. An empty
/// entity list is an error, as is empty document text.
pub fn extract_entities(
    doc: &Document,
    backend: &dyn SynthesisBackend,
    options: &PlanOptions,
) -> Result<EntityPlan, CorpusError> {
    if doc.text().trim().is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    let raw = backend.synthesize(&SynthesisRequest::EntityExtraction { doc })?;
    let mut entities = parse_entity_response(&raw)?;
    let mut seen = BTreeSet::new();
    entities.retain(|e| !e.is_empty() && seen.insert(e.clone()));
    if entities.is_empty() {
        return Err(CorpusError::NoEntities);
    }
    EntityPlan::new(doc.id(), entities, options.triplet_cap, options.seed)
}

#[derive(Deserialize)]
struct EntityResponse {
    entities: Vec<String>,
}

/// Pulls the `entities` array out of a backend response, tolerating text
/// around the JSON object.
fn parse_entity_response(raw: &str) -> Result<Vec<String>, CorpusError> {
    let parsed: Result<EntityResponse, _> = serde_json::from_str(raw);
    let parsed = match parsed {
        Ok(p) => p,
        Err(first_err) => {
            let start = raw.find('{');
            let end = raw.rfind('}');
            match (start, end) {
                (Some(s), Some(e)) if s < e => serde_json::from_str(&raw[s..=e])
                    .map_err(|_| CorpusError::MalformedExtraction(first_err.to_string()))?,
                _ => return Err(CorpusError::MalformedExtraction(first_err.to_string())),
            }
        }
    };
    Ok(parsed.entities.into_iter().map(|e| e.trim().to_string()).collect())
}
