//! Feedback questionnaire and validation of submitted answers.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuestionKind {
    Choice { choices: Vec<String> },
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    #[serde(flatten)]
    pub kind: QuestionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub session_id: String,
    pub profession: String,
    pub education: String,
    pub answers: BTreeMap<String, String>,
    #[serde(default)]
    pub free_text: Option<String>,
}

const MAX_OPEN_ANSWER: usize = 4000;

fn choice(id: &str, text: &str, choices: &[&str]) -> Question {
    Question {
        id: id.into(),
        text: text.into(),
        kind: QuestionKind::Choice { choices: choices.iter().map(|c| c.to_string()).collect() },
    }
}

fn open(id: &str, text: &str) -> Question {
    Question { id: id.into(), text: text.into(), kind: QuestionKind::Open }
}

impl Default for Questionnaire {
    /// Ten multiple-choice items on usability, trust, explanations and
    /// visuals, and two open questions.
    fn default() -> Self {
        const EASE: [&str; 5] = ["Very easy", "Easy", "Neutral", "Difficult", "Very difficult"];
        const HELP: [&str; 4] = ["Very helpful", "Helpful", "Somewhat helpful", "Not helpful"];
        const USEFUL: [&str; 4] = ["Very useful", "Somewhat useful", "Not useful", "Did not use"];
        Self {
            questions: vec![
                choice("q1", "How easy was it to interact with the analysis interface?", &EASE),
                choice(
                    "q2",
                    "How was uploading and analyzing a log file?",
                    &["Smooth and intuitive", "Minor issues", "Confusing", "Could not complete"],
                ),
                choice("q3", "How much do you trust the anomaly predictions?", &["Fully", "Somewhat", "Slightly", "Not at all"]),
                choice("q4", "How helpful were the explanations of each verdict?", &HELP),
                choice("q5", "How helpful were the possible causes and recommended actions?", &HELP),
                choice("q6", "How useful was the attention head view?", &USEFUL),
                choice("q7", "How useful was the attention model view?", &USEFUL),
                choice("q8", "How useful was the token attribution chart?", &USEFUL),
                choice("q9", "How understandable was the attention report for a non-specialist?", &EASE),
                choice(
                    "q10",
                    "How responsive was the system during your session?",
                    &["Always responsive", "Occasional delays", "Frequent delays", "Stopped responding"],
                ),
                open("q11", "What was the most useful part of the system?"),
                open("q12", "What should be improved?"),
            ],
        }
    }
}

impl Questionnaire {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let q: Self = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut ids: Vec<&str> = q.questions.iter().map(|q| q.id.as_str()).collect();
        ids.sort_unstable();
        if ids.is_empty() || ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(format!("{}: question ids must be present and unique", path.display()));
        }
        Ok(q)
    }

    /// Rejects unknown question ids, choices outside the offered set and
    /// blank demographics.
    pub fn validate(&self, fb: &Feedback) -> Result<(), String> {
        if fb.profession.trim().is_empty() || fb.education.trim().is_empty() {
            return Err("profession and education are required".into());
        }
        if fb.answers.is_empty() {
            return Err("no answers given".into());
        }
        for (id, answer) in &fb.answers {
            let q = self
                .questions
                .iter()
                .find(|q| &q.id == id)
                .ok_or_else(|| format!("unknown question id {id:?}"))?;
            match &q.kind {
                QuestionKind::Choice { choices } if !choices.contains(answer) => {
                    return Err(format!("{answer:?} is not a choice for {id}"));
                }
                QuestionKind::Open if answer.len() > MAX_OPEN_ANSWER => {
                    return Err(format!("answer to {id} exceeds {MAX_OPEN_ANSWER} bytes"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
