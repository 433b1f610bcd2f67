//! Entity span detection.
//!
//! [`Gazetteer`] is the built-in tagger: whole-token, case-insensitive
//! dictionary matching with leftmost-longest overlap resolution. External
//! taggers plug in through [`Tagger`]; [`CommandTagger`] wraps a process.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntitySpan, Fragment, Review};
use crate::error::{Error, Result};
use crate::text::{normalize_phrase, tokenize};

pub trait Tagger: Send + Sync {
    fn tag(&self, review: &Review) -> Result<Vec<EntitySpan>>;

    /// Tags many reviews; external taggers override this to batch calls.
    fn tag_all(&self, reviews: &[Review]) -> Result<Vec<Vec<EntitySpan>>> {
        reviews.iter().map(|r| self.tag(r)).collect()
    }
}

/// Runs `tagger` on one review and enforces the output contract.
pub fn extract_entities(tagger: &dyn Tagger, review: &Review) -> Result<Vec<EntitySpan>> {
    let spans = tagger.tag(review)?;
    check_spans(review, &spans)?;
    Ok(spans)
}

/// Spans must belong to `review`, match its text, be sorted and never overlap.
pub fn check_spans(review: &Review, spans: &[EntitySpan]) -> Result<()> {
    let mut prev_end = 0;
    for (i, span) in spans.iter().enumerate() {
        span.verify(review)?;
        if i > 0 && span.start() < prev_end {
            return Err(Error::Plugin(format!(
                "tagger returned overlapping or unsorted spans in {} at {}",
                review.id,
                span.start()
            )));
        }
        prev_end = span.end();
    }
    Ok(())
}

#[derive(Debug, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    terminal: bool,
}

/// Dictionary of normalized entity surfaces.
#[derive(Debug)]
pub struct Gazetteer {
    phrases: BTreeSet<String>,
    max_phrase_tokens: usize,
    trie: Vec<TrieNode>,
}

impl Gazetteer {
    /// Builds from arbitrary surfaces; phrases with no tokens are ignored.
    pub fn from_phrases<I, S>(surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let phrases: BTreeSet<String> = surfaces
            .into_iter()
            .map(|s| normalize_phrase(s.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        if phrases.is_empty() {
            return Err(Error::Config("gazetteer needs at least one phrase".into()));
        }
        let mut trie = vec![TrieNode::default()];
        let mut max_phrase_tokens = 0;
        for phrase in &phrases {
            let mut node = 0;
            let mut n = 0;
            for tok in phrase.split(' ') {
                n += 1;
                node = match trie[node].children.get(tok) {
                    Some(&next) => next,
                    None => {
                        trie.push(TrieNode::default());
                        let next = trie.len() - 1;
                        trie[node].children.insert(tok.to_string(), next);
                        next
                    }
                };
            }
            trie[node].terminal = true;
            max_phrase_tokens = max_phrase_tokens.max(n);
        }
        Ok(Gazetteer {
            phrases,
            max_phrase_tokens,
            trie,
        })
    }

    pub fn phrases(&self) -> &BTreeSet<String> {
        &self.phrases
    }

    pub fn max_phrase_tokens(&self) -> usize {
        self.max_phrase_tokens
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.phrases.contains(&normalize_phrase(surface))
    }

    /// Length in tokens of the longest phrase starting at `tokens[0]`.
    fn longest_match(&self, tokens: &[String]) -> Option<usize> {
        let mut node = 0;
        let mut best = None;
        for (i, tok) in tokens.iter().enumerate() {
            match self.trie[node].children.get(tok) {
                Some(&next) => node = next,
                None => break,
            }
            if self.trie[node].terminal {
                best = Some(i + 1);
            }
        }
        best
    }
}

/// Gazetteer over every gold entity surface in `corpus`, both classes.
pub fn build_gazetteer(corpus: &Corpus) -> Result<Gazetteer> {
    if corpus.entities().is_empty() {
        return Err(Error::Config(format!(
            "cannot build a gazetteer from {}: no entities",
            corpus.name()
        )));
    }
    Gazetteer::from_phrases(corpus.entities().iter().map(|e| e.span.surface.as_str()))
}

impl Tagger for Gazetteer {
    fn tag(&self, review: &Review) -> Result<Vec<EntitySpan>> {
        let tokens = tokenize(&review.text);
        let lowered: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
        let mut spans = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match self.longest_match(&lowered[i..]) {
                Some(len) => {
                    let fragment = Fragment::new(tokens[i].start, tokens[i + len - 1].end);
                    spans.push(EntitySpan::from_review(review, vec![fragment])?);
                    i += len;
                }
                None => i += 1,
            }
        }
        Ok(spans)
    }
}

#[derive(Serialize)]
struct TagRequest<'a> {
    id: &'a str,
    drug: &'a str,
    rating: Option<u8>,
    text: &'a str,
}

#[derive(Deserialize)]
struct TagResponse {
    review_id: String,
    spans: Vec<EntitySpan>,
}

/// External tagger process.
///
/// The process reads one JSON review per line on stdin
/// (`{"id","drug","rating","text"}`) and writes one line per review,
/// in order, of the form `{"review_id": ..., "spans": [EntitySpan, ...]}`.
#[derive(Debug, Clone)]
pub struct CommandTagger {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandTagger {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandTagger {
            program: program.into(),
            args,
        }
    }
}

impl Tagger for CommandTagger {
    fn tag(&self, review: &Review) -> Result<Vec<EntitySpan>> {
        let mut out = self.tag_all(std::slice::from_ref(review))?;
        Ok(out.pop().unwrap_or_default())
    }

    fn tag_all(&self, reviews: &[Review]) -> Result<Vec<Vec<EntitySpan>>> {
        let mut input = Vec::new();
        for r in reviews {
            let req = TagRequest {
                id: &r.id,
                drug: &r.drug,
                rating: r.rating,
                text: &r.text,
            };
            serde_json::to_writer(&mut input, &req)?;
            input.push(b'\n');
        }
        let stdout = run_plugin(&self.program, &self.args, &input)?;
        let mut out = Vec::with_capacity(reviews.len());
        let mut lines = stdout.lines().filter(|l| !l.trim().is_empty());
        for review in reviews {
            let line = lines.next().ok_or_else(|| {
                Error::Plugin(format!("tagger produced no output for {}", review.id))
            })?;
            let resp: TagResponse = serde_json::from_str(line)?;
            if resp.review_id != review.id {
                return Err(Error::Plugin(format!(
                    "tagger answered {} for request {}",
                    resp.review_id, review.id
                )));
            }
            check_spans(review, &resp.spans)?;
            out.push(resp.spans);
        }
        Ok(out)
    }
}

/// Runs a plugin process with `input` on stdin and returns its stdout.
pub(crate) fn run_plugin(program: &str, args: &[String], input: &[u8]) -> Result<String> {
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Plugin(format!("cannot start {program}: {e}")))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let payload = input.to_vec();
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(&payload);
    });
    let output = child
        .wait_with_output()
        .map_err(|e| Error::Plugin(format!("{program}: {e}")))?;
    let _ = writer.join();
    if !output.status.success() {
        return Err(Error::Plugin(format!(
            "{program} exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    String::from_utf8(output.stdout).map_err(|e| Error::Plugin(format!("{program}: {e}")))
}
