//! Prompt templates for candidate sampling and response generation.

use serde::{Deserialize, Serialize};

use crate::corpus::{render_pairs, serialize_history, DialogueTurn, Passage};

pub const SAMPLING_INSTRUCTION: &str = "Please rewrite the last statement of the following dialogue to make it more complete. Just provide the rewritten sentence without any additional content.";

pub const RESPONSE_INSTRUCTION: &str =
    "Given a question, please answer the question in a sentence. The answer should be as informative as possible.";

pub const GROUNDED_INSTRUCTION: &str = "Given the following conversation history, the current query, and three passages related to the current query, please generate a response for the current query. You only need to output the response, please do not output any extra content.";

/// Marks the start of the sample the model should complete.
pub const ANNOTATED_MARKER: &str = "Annotated Sample:";

pub const DEMOS_PER_PROMPT: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteDemo {
    /// A dialogue rendered with `Q:`/`A:` lines.
    pub dialogue: String,
    pub rewrite: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseDemo {
    pub question: String,
    pub answer: String,
}

pub fn rewrite_prompt(demos: &[&RewriteDemo], turn: &DialogueTurn) -> String {
    let mut out = format!("{SAMPLING_INSTRUCTION}\nDemonstrations:\n");
    for d in demos {
        out.push_str(&format!("Dialogue:\n{}\nRewritten Sentence: {}\n\n", d.dialogue, d.rewrite));
    }
    out.push_str(&format!(
        "{ANNOTATED_MARKER}\nDialogue:\n{}\nRewritten Sentence:",
        serialize_history(turn)
    ));
    out
}

pub fn response_prompt(demos: &[ResponseDemo], rewrite: &str) -> String {
    let mut out = format!("{RESPONSE_INSTRUCTION}\nDemonstrations:\n");
    for d in demos {
        out.push_str(&format!("Question: {}\nAnswer: {}\n\n", d.question, d.answer));
    }
    out.push_str(&format!("{ANNOTATED_MARKER}\nQuestion: {rewrite}\nAnswer:"));
    out
}

pub fn grounded_response_prompt(turn: &DialogueTurn, rewrite: &str, passages: &[Passage]) -> String {
    let mut out = format!(
        "{GROUNDED_INSTRUCTION}\n\nConversation History: {}\n\nCurrent Query: {rewrite}\n\nRelevant Passages:\n",
        render_pairs(&turn.history)
    );
    for (i, p) in passages.iter().enumerate() {
        out.push_str(&format!("\nPassage {}:\n{}\n", i + 1, p.text));
    }
    out.push_str("\nResponse:");
    out
}
