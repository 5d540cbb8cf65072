//! Per-dimension instruction templates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

const ANGER: &str = include_str!("../templates/anger.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkedExample {
    pub terms: Vec<String>,
    pub most_answer: String,
    pub least_answer: String,
}

/// Everything an annotator reads before the first tuple, plus the two
/// question prompts shown with every tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub dimension: String,
    pub title: String,
    pub introduction: String,
    pub asks: Vec<String>,
    pub rule_of_thumb: String,
    pub content_warning: String,
    pub notes_heading: String,
    pub notes: Vec<String>,
    pub most_prompt: String,
    pub least_prompt: String,
    pub example: WorkedExample,
}

impl InstructionTemplate {
    pub fn from_json(name: &str, text: &str) -> Result<Self, ServiceError> {
        serde_json::from_str(text).map_err(|e| ServiceError::Template {
            name: name.to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct TemplateStore {
    templates: BTreeMap<String, InstructionTemplate>,
}

impl TemplateStore {
    /// Store holding only the built-in templates.
    pub fn builtin() -> Self {
        let mut store = Self::default();
        store.insert(InstructionTemplate::from_json("anger.json", ANGER).expect("built-in template parses"));
        store
    }

    pub fn insert(&mut self, template: InstructionTemplate) {
        self.templates.insert(template.dimension.clone(), template);
    }

    /// Adds every `*.json` file in `dir`, replacing built-ins with the same
    /// dimension.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, ServiceError> {
        let mut loaded = 0;
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.sort();
        for path in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
            let text = std::fs::read_to_string(&path)?;
            self.insert(InstructionTemplate::from_json(&path.display().to_string(), &text)?);
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn get(&self, dimension: &str) -> Option<&InstructionTemplate> {
        self.templates.get(dimension)
    }

    pub fn dimensions(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}
