//! Synthetic-text quality metrics: n-gram overlap with the source
//! document, shingle fingerprint profiles, Jaccard similarity, verbatim
//! copy detection, and near-duplicate rates.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::text::{normalize, Document, Tokenizer};
use super::CorpusError;

/// Tokens per shingle window unless configured otherwise.
pub const DEFAULT_SHINGLE_WINDOW: usize = 13;
/// Jaccard similarity above which two documents count as duplicates.
pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.6;

/// FNV-1a 64-bit hash.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Percentage of synthetic n-grams that also occur in the source
/// document, counted with multiplicity over all synthetic documents.
///
/// Returns 0 (with a logged warning) when no synthetic document has `n`
/// tokens. The value is nonincreasing in `n` for a single synthetic
/// document; mixtures of long and too-short documents can break that
/// monotonicity because short documents drop out of the denominator.
pub fn ngram_overlap(
    source: &Document,
    synthetic: &[Document],
    n: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<f64, CorpusError> {
    if n == 0 {
        return Err(CorpusError::BadNgramSize);
    }
    let source_tokens = tokenizer.tokenize(source.text());
    let source_grams: HashSet<&[String]> = source_tokens.windows(n).collect();

    let mut matched = 0u64;
    let mut total = 0u64;
    for doc in synthetic {
        let tokens = tokenizer.tokenize(doc.text());
        for gram in tokens.windows(n) {
            total += 1;
            if source_grams.contains(gram) {
                matched += 1;
            }
        }
    }
    if total == 0 {
        log::warn!("no synthetic document has {n} tokens; overlap reported as 0");
        return Ok(0.0);
    }
    Ok(100.0 * matched as f64 / total as f64)
}

/// Fingerprints of every `window`-token run of a document's normalized
/// text. Repeated windows collapse to one fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShingleProfile {
    doc_id: String,
    window: usize,
    shingles: BTreeSet<u64>,
}

impl ShingleProfile {
    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn shingles(&self) -> &BTreeSet<u64> {
        &self.shingles
    }

    pub fn len(&self) -> usize {
        self.shingles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shingles.is_empty()
    }
}

/// Builds the shingle profile of `doc`: normalize
/// ([`normalize`](super::normalize)), slide a `window`-token window, and
/// fingerprint each window.
pub fn shingle_profile(doc: &Document, window: usize) -> Result<ShingleProfile, CorpusError> {
    if window == 0 {
        return Err(CorpusError::BadWindow);
    }
    let normalized = normalize(doc.text());
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    let shingles = tokens
        .windows(window)
        .map(|w| {
            let mut bytes = Vec::with_capacity(window * 8);
            for token in w {
                bytes.extend_from_slice(token.as_bytes());
                bytes.push(0x1f);
            }
            fnv1a64(&bytes)
        })
        .collect();
    Ok(ShingleProfile { doc_id: doc.id().to_string(), window, shingles })
}

/// Jaccard similarity of two shingle profiles: intersection over union,
/// with two empty profiles counting as identical (similarity 1).
pub fn jaccard(a: &ShingleProfile, b: &ShingleProfile) -> Result<f64, CorpusError> {
    if a.window != b.window {
        return Err(CorpusError::WindowMismatch { left: a.window, right: b.window });
    }
    Ok(jaccard_sets(&a.shingles, &b.shingles))
}

fn jaccard_sets(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

/// True when any shingle of the seed document also appears in the
/// synthetic one, flagging a verbatim copy of at least one window.
pub fn pair_copy_check(
    seed_profile: &ShingleProfile,
    synth_profile: &ShingleProfile,
) -> Result<bool, CorpusError> {
    if seed_profile.window != synth_profile.window {
        return Err(CorpusError::WindowMismatch {
            left: seed_profile.window,
            right: synth_profile.window,
        });
    }
    Ok(seed_profile.shingles.intersection(&synth_profile.shingles).next().is_some())
}

fn validate_dedup_inputs(corpus: &[Document], threshold: f64) -> Result<(), CorpusError> {
    if corpus.len() < 2 {
        return Err(CorpusError::TinyCorpus);
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CorpusError::BadThreshold(threshold));
    }
    Ok(())
}

/// Fraction of documents whose shingle-set Jaccard similarity with some
/// earlier document exceeds `threshold`, by exact pairwise comparison.
pub fn duplicate_rate(
    corpus: &[Document],
    threshold: f64,
    window: usize,
) -> Result<f64, CorpusError> {
    validate_dedup_inputs(corpus, threshold)?;
    let profiles: Vec<ShingleProfile> = corpus
        .iter()
        .map(|doc| shingle_profile(doc, window))
        .collect::<Result<_, _>>()?;
    let mut duplicates = 0usize;
    for i in 1..profiles.len() {
        let is_duplicate = profiles[..i]
            .iter()
            .any(|earlier| jaccard_sets(&earlier.shingles, &profiles[i].shingles) > threshold);
        if is_duplicate {
            duplicates += 1;
        }
    }
    Ok(duplicates as f64 / corpus.len() as f64)
}

/// [`duplicate_rate`] with an inverted-index accelerator: each document
/// is compared only against earlier documents sharing at least one
/// shingle (plus earlier empty profiles when the profile is empty, since
/// two empty profiles have similarity 1). Exceeding the threshold needs a
/// nonempty intersection or two empty sets, so the result is identical to
/// the exact pairwise computation.
pub fn duplicate_rate_indexed(
    corpus: &[Document],
    threshold: f64,
    window: usize,
) -> Result<f64, CorpusError> {
    validate_dedup_inputs(corpus, threshold)?;
    let profiles: Vec<ShingleProfile> = corpus
        .iter()
        .map(|doc| shingle_profile(doc, window))
        .collect::<Result<_, _>>()?;

    let mut postings: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut seen_empty = false;
    let mut duplicates = 0usize;
    for (i, profile) in profiles.iter().enumerate() {
        let is_duplicate = if profile.is_empty() {
            i > 0 && seen_empty && threshold < 1.0
        } else {
            let mut candidates: BTreeSet<usize> = BTreeSet::new();
            for shingle in &profile.shingles {
                if let Some(docs) = postings.get(shingle) {
                    candidates.extend(docs);
                }
            }
            candidates
                .into_iter()
                .any(|j| jaccard_sets(&profiles[j].shingles, &profile.shingles) > threshold)
        };
        if i > 0 && is_duplicate {
            duplicates += 1;
        }
        if profile.is_empty() {
            seen_empty = true;
        }
        for &shingle in &profile.shingles {
            postings.entry(shingle).or_default().push(i);
        }
    }
    Ok(duplicates as f64 / corpus.len() as f64)
}
