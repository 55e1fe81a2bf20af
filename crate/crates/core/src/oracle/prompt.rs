use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

pub const TRIPLET_POSTFIX: &str = "Please respond with 'Choice 1' or 'Choice 2' without explanation.";
pub const PAIR_POSTFIX: &str = "Please respond with 'Yes' or 'No' without explanation.";

/// Triplet instructions per benchmark corpus. Domain and intent variants of a
/// corpus are interchangeable.
pub const PERSPECTIVE_PRESETS: &[(&str, &str)] = &[
    ("bank77", "Select the banking customer utterance that better corresponds with the Query in terms of intent."),
    ("clinc_i", "Select the customer utterance that better corresponds with the Query in terms of intent."),
    ("fewrel", "Select the example that better corresponds with the Query in terms of relation type."),
    ("fewnerd", "Select the example that better corresponds with the Query in terms of entity type."),
    ("fewevent", "Select the example that better corresponds with the Query in terms of event type."),
    ("stackex", "Select the StackExchange question that better corresponds with the Query in terms of topic."),
    ("arxiv_s2s", "Select the Arxiv paper title that better corresponds with the Query in terms of domain."),
    ("goemo", "Select the sentence that better corresponds with the Query in terms of emotion expressed."),
    ("massive_i", "Select the user utterance that better corresponds with the Query in terms of intent."),
    ("mtop_i", "Select the user utterance that better corresponds with the Query in terms of intent"),
    ("reddit", "Select the Reddit question that better corresponds with the Query in terms of topic."),
    ("massive_d", "Select the user utterance that better corresponds with the Query in terms of scenario."),
    ("mtop_d", "Select the user utterance that better corresponds with the Query in terms of domain."),
    ("clinc_d", "Select the customer utterance that better corresponds with the Query in terms of domain."),
];

pub const BANK77_PAIR_INSTRUCTION: &str = "Determine whether the intents of two banking customer utterances\nbelow belong to the same intent category using above examples.";

pub fn perspective_preset(name: &str) -> Option<&'static str> {
    PERSPECTIVE_PRESETS
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| *v)
}

/// A labeled demonstration pair for the pairwise prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub sentence1: String,
    pub sentence2: String,
    pub same: bool,
    /// Text after "Yes." / "No.", e.g. "Because both intents are ...". May be empty.
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSpec {
    pub perspective_instruction: String,
    pub pair_instruction: String,
    pub demos: Vec<Demo>,
    pub postfix_triplet: String,
    pub postfix_pair: String,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec {
            perspective_instruction: perspective_preset("bank77").unwrap().to_string(),
            pair_instruction: BANK77_PAIR_INSTRUCTION.to_string(),
            demos: Vec::new(),
            postfix_triplet: TRIPLET_POSTFIX.to_string(),
            postfix_pair: PAIR_POSTFIX.to_string(),
        }
    }
}

pub(crate) fn text_of(set: &EmbeddingSet, i: usize) -> Result<&str> {
    set.texts()
        .map(|t| t[i].as_str())
        .ok_or_else(|| Error::Judge(format!("no text available for instance {:?}", set.id(i))))
}

pub fn format_triplet_prompt(spec: &PromptSpec, anchor: &str, choice1: &str, choice2: &str) -> String {
    format!(
        "{}\n\nQuery: {anchor}\nChoice 1: {choice1}\nChoice 2: {choice2}\n\n{}",
        spec.perspective_instruction, spec.postfix_triplet
    )
}

pub fn format_pair_prompt(spec: &PromptSpec, sentence1: &str, sentence2: &str) -> String {
    let mut out = String::new();
    for (i, demo) in spec.demos.iter().enumerate() {
        let answer = if demo.same { "Yes." } else { "No." };
        out.push_str(&format!(
            "[Example{}]\nSentence 1: {}\nSentence 2: {}\n{answer}",
            i + 1,
            demo.sentence1,
            demo.sentence2
        ));
        if !demo.rationale.is_empty() {
            out.push(' ');
            out.push_str(&demo.rationale);
        }
        out.push_str("\n\n");
    }
    out.push_str(&format!(
        "{}\n\nSentence 1: {sentence1}\nSentence 2: {sentence2}\n\n{}",
        spec.pair_instruction, spec.postfix_pair
    ));
    out
}

/// Renders the triplet question for instances of `set`. Texts are inserted verbatim.
pub fn render_triplet_prompt(spec: &PromptSpec, triplet: &crate::sampler::Triplet, set: &EmbeddingSet) -> Result<String> {
    Ok(format_triplet_prompt(
        spec,
        text_of(set, triplet.anchor)?,
        text_of(set, triplet.choice1)?,
        text_of(set, triplet.choice2)?,
    ))
}

pub fn render_pair_prompt(spec: &PromptSpec, pair: (usize, usize), set: &EmbeddingSet) -> Result<String> {
    Ok(format_pair_prompt(spec, text_of(set, pair.0)?, text_of(set, pair.1)?))
}
