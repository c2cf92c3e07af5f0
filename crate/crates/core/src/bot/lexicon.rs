use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::{ActionClassification, ActionLabel, BotError};

/// Template id of the canned follow-up question.
pub const ACTION_QUESTION: &str = "action_question";

const SPANISH_LEXICON: &str = include_str!("../../assets/lexicon.es.json");
const SPANISH_TEMPLATES: &str = include_str!("../../assets/templates.es.json");

/// Lowercase, strip accents, and collapse everything that is not a letter or
/// digit into single spaces.
pub fn fold_text(text: &str) -> String {
    let stripped: String = text
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Versioned cue phrases per response stance, plus opt-out words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueLexicon {
    pub version: u32,
    #[serde(default)]
    pub language: String,
    pub evangelist: Vec<String>,
    pub defender: Vec<String>,
    pub opt_out: Vec<String>,
}

impl CueLexicon {
    pub fn spanish_default() -> Self {
        serde_json::from_str(SPANISH_LEXICON).expect("shipped lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self, BotError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| BotError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| BotError::Config(format!("{}: {e}", path.display())))
    }

    /// Opt-out words match on whole words of the folded text.
    pub fn is_opt_out(&self, text: &str) -> bool {
        let padded = format!(" {} ", fold_text(text));
        self.opt_out
            .iter()
            .map(|w| fold_text(w))
            .filter(|w| !w.is_empty())
            .any(|w| padded.contains(&format!(" {w} ")))
    }
}

fn matches(folded: &str, cues: &[String]) -> Vec<String> {
    cues.iter()
        .filter(|c| {
            let fc = fold_text(c);
            !fc.is_empty() && folded.contains(&fc)
        })
        .cloned()
        .collect()
}

/// Case- and accent-insensitive substring match; evangelist cues win over
/// defender cues.
pub fn classify_response(text: &str, lexicon: &CueLexicon) -> ActionClassification {
    let folded = fold_text(text);
    let evangelist = matches(&folded, &lexicon.evangelist);
    if !evangelist.is_empty() {
        return ActionClassification {
            label: ActionLabel::Evangelist,
            matched_cues: evangelist,
        };
    }
    let defender = matches(&folded, &lexicon.defender);
    if !defender.is_empty() {
        return ActionClassification {
            label: ActionLabel::Defender,
            matched_cues: defender,
        };
    }
    ActionClassification {
        label: ActionLabel::Other,
        matched_cues: Vec::new(),
    }
}

/// Per-language message templates with `{placeholder}` substitution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub version: u32,
    pub language: String,
    pub templates: BTreeMap<String, String>,
}

impl TemplateSet {
    pub fn spanish_default() -> Self {
        serde_json::from_str(SPANISH_TEMPLATES).expect("shipped templates parse")
    }

    pub fn load(path: &Path) -> Result<Self, BotError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| BotError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| BotError::Config(format!("{}: {e}", path.display())))
    }

    pub fn render(&self, template_id: &str, vars: &[(&str, &str)]) -> Result<String, BotError> {
        let mut text = self
            .templates
            .get(template_id)
            .ok_or_else(|| BotError::Template(format!("unknown template {template_id:?}")))?
            .clone();
        for (k, v) in vars {
            text = text.replace(&format!("{{{k}}}"), v);
        }
        Ok(text)
    }
}
