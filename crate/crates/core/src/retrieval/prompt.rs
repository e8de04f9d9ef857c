use super::{Query, RetrievedContext};
use crate::error::{Error, Result};
use crate::text::count_tokens;

/// Placeholder written when retrieval found nothing.
pub const NO_CONTEXT: &str = "NO CONTEXT";

const TEMPLATES: [(&str, &str); 2] = [
    (
        "default",
        "Answer the question using only the context below. Each context item starts with its \
         [source] tag; cite the tags you rely on. If the context does not contain the answer, \
         reply \"Insufficient Information\".",
    ),
    (
        "concise",
        "Answer the question in one or two sentences using only the context below. If the \
         context does not contain the answer, reply \"Insufficient Information\".",
    ),
];

pub fn template_names() -> Vec<&'static str> {
    TEMPLATES.iter().map(|(name, _)| *name).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub tokens: usize,
}

/// Preamble, then the context items in rank order with their source tags,
/// then any history, then the question on the final line.
pub fn assemble_prompt(context: &RetrievedContext, query: &Query, template_id: &str) -> Result<Prompt> {
    let preamble = TEMPLATES
        .iter()
        .find(|(name, _)| *name == template_id)
        .map(|(_, text)| *text)
        .ok_or_else(|| Error::Config(format!("unknown prompt template '{template_id}'")))?;
    let mut text = format!("{preamble}\n\nCONTEXT:\n");
    if context.items.is_empty() {
        text.push_str(NO_CONTEXT);
        text.push('\n');
    }
    for item in &context.items {
        text.push_str(&format!("[{}] {}\n", item.source_id, item.text));
    }
    if !query.history.is_empty() {
        text.push_str("\nHISTORY:\n");
        for h in &query.history {
            text.push_str(h);
            text.push('\n');
        }
    }
    text.push_str(&format!("\nQUESTION: {}", query.text));
    let tokens = count_tokens(&text);
    Ok(Prompt { text, tokens })
}
