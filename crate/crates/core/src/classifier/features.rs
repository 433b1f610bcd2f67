//! Indicator features for the built-in log-linear classifier.

use std::collections::BTreeSet;

use super::context::{EntityInContext, SENTINEL};

const LEFT_EDGE: &str = "<s>";
const RIGHT_EDGE: &str = "</s>";

/// Distinct feature names for one example, sorted.
///
/// Entity unigrams and bigrams, context unigrams, and each entity token
/// crossed with the nearest context token on either side of every
/// sentinel.
pub fn extract(example: &EntityInContext) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let ent = &example.entity_tokens;
    for tok in ent {
        out.insert(format!("e:{tok}"));
    }
    for pair in ent.windows(2) {
        out.insert(format!("eb:{} {}", pair[0], pair[1]));
    }

    let ctx = &example.context_tokens;
    for tok in ctx.iter().filter(|t| *t != SENTINEL) {
        out.insert(format!("c:{tok}"));
    }
    for (i, _) in ctx.iter().enumerate().filter(|(_, t)| *t == SENTINEL) {
        let left = ctx[..i]
            .iter()
            .rev()
            .find(|t| *t != SENTINEL)
            .map_or(LEFT_EDGE, String::as_str);
        let right = ctx[i + 1..]
            .iter()
            .find(|t| *t != SENTINEL)
            .map_or(RIGHT_EDGE, String::as_str);
        for tok in ent {
            out.insert(format!("xl:{tok}|{left}"));
            out.insert(format!("xr:{tok}|{right}"));
        }
    }
    out
}
