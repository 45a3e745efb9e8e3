//! Verbatim prompt templates and slot substitution.
//!
//! The templates ship as data files with `{document}` and `{entityN}`
//! slots; the `<title>` markers inside the response-format scaffolding are
//! part of the prompt text and stay literal.

use serde::{Deserialize, Serialize};

use super::text::Document;
use super::CorpusError;

/// Template for the entity-extraction step.
pub const ENTITY_EXTRACTION_TEMPLATE: &str =
    include_str!("../../templates/entity_extraction.txt");
/// Template for describing the relation between two entities.
pub const RELATION_PAIR_TEMPLATE: &str = include_str!("../../templates/relation_pair.txt");
/// Template for describing the relation among three entities.
pub const RELATION_TRIPLET_TEMPLATE: &str =
    include_str!("../../templates/relation_triplet.txt");

/// The three prompt shapes of the synthesis pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    EntityExtraction,
    RelationPair,
    RelationTriplet,
}

impl PromptKind {
    /// Entities the kind's template expects.
    pub fn arity(self) -> usize {
        match self {
            PromptKind::EntityExtraction => 0,
            PromptKind::RelationPair => 2,
            PromptKind::RelationTriplet => 3,
        }
    }

    fn template(self) -> &'static str {
        match self {
            PromptKind::EntityExtraction => ENTITY_EXTRACTION_TEMPLATE,
            PromptKind::RelationPair => RELATION_PAIR_TEMPLATE,
            PromptKind::RelationTriplet => RELATION_TRIPLET_TEMPLATE,
        }
    }
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PromptKind::EntityExtraction => "entity_extraction",
            PromptKind::RelationPair => "relation_pair",
            PromptKind::RelationTriplet => "relation_triplet",
        };
        f.write_str(name)
    }
}

/// Renders the template for `kind`, substituting the document text and
/// the entity names. `entity_names` must match the kind's arity.
pub fn render_prompt(
    kind: PromptKind,
    doc: &Document,
    entity_names: &[&str],
) -> Result<String, CorpusError> {
    if entity_names.len() != kind.arity() {
        return Err(CorpusError::WrongArity {
            kind,
            needed: kind.arity(),
            got: entity_names.len(),
        });
    }
    let mut rendered = kind.template().replace("{document}", doc.text());
    for (index, name) in entity_names.iter().enumerate() {
        rendered = rendered.replace(&format!("{{entity{}}}", index + 1), name);
    }
    Ok(rendered)
}

#[cfg(test)]
mod tests {
    use super::super::metrics::fnv1a64;
    use super::super::text::DefaultTokenizer;
    use super::*;

    fn doc() -> Document {
        Document::new("d1", "Alice met Bob near the Seine.", &DefaultTokenizer)
    }

    #[test]
    fn template_files_are_unchanged() {
        // Fingerprints pin the shipped prompt bytes, trailing spaces and
        // all, against accidental edits.
        assert_eq!(fnv1a64(ENTITY_EXTRACTION_TEMPLATE.as_bytes()), 0xf113eaf4392199f2);
        assert_eq!(fnv1a64(RELATION_PAIR_TEMPLATE.as_bytes()), 0xfc54ea35a813cb54);
        assert_eq!(fnv1a64(RELATION_TRIPLET_TEMPLATE.as_bytes()), 0xd77e8709d27918a2);
    }

    #[test]
    fn extraction_prompt_begins_with_the_analyzer_preamble() {
        let rendered = render_prompt(PromptKind::EntityExtraction, &doc(), &[]).unwrap();
        assert!(rendered
            .starts_with("As a knowledge analyzer, your task is to dissect and understand"));
        assert!(rendered.contains("\"entities\": [\"entity1\", \"entity2\", ...]"));
        assert!(rendered.ends_with("Alice met Bob near the Seine.\n"));
        assert!(!rendered.contains("{document}"));
    }

    #[test]
    fn pair_prompt_substitutes_entity_names_into_the_scaffolding() {
        let rendered =
            render_prompt(PromptKind::RelationPair, &doc(), &["Alice", "Bob"]).unwrap();
        assert!(rendered.contains("### Discussion of <title> in relation to Alice"));
        assert!(rendered.contains("### Discussion of <title> in relation to Bob"));
        assert!(rendered.contains("### Discussion of Interaction between Alice and Bob"));
        assert!(rendered.contains("Alice met Bob near the Seine."));
        assert!(!rendered.contains("{entity"));
    }

    #[test]
    fn triplet_prompt_substitutes_three_names() {
        let rendered =
            render_prompt(PromptKind::RelationTriplet, &doc(), &["A", "B", "C"]).unwrap();
        assert!(rendered.contains("### Discussion of <title> in relation to C"));
        assert!(rendered.contains("between A, B and\n    C in context of <title>"));
        assert!(!rendered.contains("{entity"));
    }

    #[test]
    fn wrong_entity_arity_is_an_error() {
        let err = render_prompt(PromptKind::RelationTriplet, &doc(), &["A", "B"]).unwrap_err();
        assert_eq!(
            err,
            CorpusError::WrongArity { kind: PromptKind::RelationTriplet, needed: 3, got: 2 }
        );
        assert!(render_prompt(PromptKind::EntityExtraction, &doc(), &["A"]).is_err());
        assert!(render_prompt(PromptKind::RelationPair, &doc(), &["A"]).is_err());
    }
}
