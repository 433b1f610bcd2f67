use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, Review};
use crate::error::{Error, Result};
use crate::text::{lower_tokens, tokenize, CharIndex};

/// Placeholder for an entity fragment inside its context.
pub const SENTINEL: &str = "<ENT>";

/// Context window in tokens on each side of the entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub enum Window {
    #[default]
    Whole,
    Tokens(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WindowRepr {
    Word(String),
    Count(usize),
}

impl TryFrom<WindowRepr> for Window {
    type Error = String;

    fn try_from(r: WindowRepr) -> Result<Self, String> {
        match r {
            WindowRepr::Count(n) => Ok(Window::Tokens(n)),
            WindowRepr::Word(w) if w == "whole" => Ok(Window::Whole),
            WindowRepr::Word(w) => Err(format!(
                "window must be \"whole\" or a token count, got {w:?}"
            )),
        }
    }
}

impl From<Window> for WindowRepr {
    fn from(w: Window) -> Self {
        match w {
            Window::Whole => WindowRepr::Word("whole".into()),
            Window::Tokens(n) => WindowRepr::Count(n),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Whole => f.write_str("whole"),
            Window::Tokens(n) => write!(f, "{n}"),
        }
    }
}

/// An entity split from its surrounding review text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityInContext {
    pub entity_tokens: Vec<String>,
    pub context_tokens: Vec<String>,
    pub review_id: String,
    pub span: EntitySpan,
}

pub fn make_context(review: &Review, span: &EntitySpan, window: Window) -> Result<EntityInContext> {
    span.verify(review)?;
    let index = CharIndex::new(&review.text);
    let mut entity_tokens = Vec::new();
    for f in &span.fragments {
        let piece = index.slice(f.start, f.end).expect("verified span");
        entity_tokens.extend(lower_tokens(piece));
    }
    if entity_tokens.is_empty() {
        return Err(Error::Integrity(format!(
            "{}: entity {:?} has no tokens",
            review.id, span.surface
        )));
    }

    let tokens = tokenize(&review.text);
    let mut context: Vec<String> = Vec::with_capacity(tokens.len());
    let mut next = 0;
    for f in &span.fragments {
        let covered: Vec<usize> = (0..tokens.len())
            .filter(|&t| tokens[t].start < f.end && tokens[t].end > f.start)
            .collect();
        let insert_at = match covered.first() {
            Some(&first) => first,
            None => tokens
                .iter()
                .position(|t| t.start >= f.end)
                .unwrap_or(tokens.len()),
        };
        while next < insert_at {
            context.push(tokens[next].text.to_lowercase());
            next += 1;
        }
        context.push(SENTINEL.to_string());
        if let Some(&last) = covered.last() {
            next = next.max(last + 1);
        }
    }
    context.extend(tokens[next..].iter().map(|t| t.text.to_lowercase()));

    if let Window::Tokens(n) = window {
        let anchors: Vec<usize> = context
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_str() == SENTINEL)
            .map(|(i, _)| i)
            .collect();
        context = context
            .into_iter()
            .enumerate()
            .filter(|(i, _)| anchors.iter().any(|&a| a.abs_diff(*i) <= n))
            .map(|(_, t)| t)
            .collect();
    }

    Ok(EntityInContext {
        entity_tokens,
        context_tokens: context,
        review_id: review.id.clone(),
        span: span.clone(),
    })
}
