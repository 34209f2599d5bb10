//! Joint boundary × POS label space.
//!
//! Every character carries one [`JointTag`]: a BMES boundary marker paired with
//! the POS of the word it belongs to. Joint indices are boundary-major: all
//! `B-*` tags first, then `M-*`, `E-*`, `S-*`, each block in POS declaration
//! order.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Boundary {
    B,
    M,
    E,
    S,
}

impl Boundary {
    pub const ALL: [Boundary; 4] = [Boundary::B, Boundary::M, Boundary::E, Boundary::S];

    fn ordinal(self) -> usize {
        self as usize
    }

    /// True for markers that may start a word.
    pub fn opens(self) -> bool {
        matches!(self, Boundary::B | Boundary::S)
    }

    /// True for markers that may end a word.
    pub fn closes(self) -> bool {
        matches!(self, Boundary::E | Boundary::S)
    }

    fn as_char(self) -> char {
        match self {
            Boundary::B => 'B',
            Boundary::M => 'M',
            Boundary::E => 'E',
            Boundary::S => 'S',
        }
    }
}

/// Index of a POS tag inside its [`TagSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PosId(pub u16);

impl PosId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointTag {
    pub boundary: Boundary,
    pub pos: PosId,
}

impl JointTag {
    pub fn new(boundary: Boundary, pos: PosId) -> Self {
        JointTag { boundary, pos }
    }
}

/// One label per character. Storage does not enforce legality.
pub type LabelSequence = Vec<JointTag>;

/// A decoded word covering characters `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordSpan {
    pub start: usize,
    pub end: usize,
    pub pos: PosId,
}

impl WordSpan {
    pub fn new(start: usize, end: usize, pos: PosId) -> Self {
        WordSpan { start, end, pos }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TagSet {
    pos_tags: Vec<String>,
    lookup: HashMap<String, PosId>,
}

impl TryFrom<Vec<String>> for TagSet {
    type Error = Error;

    fn try_from(pos_tags: Vec<String>) -> Result<Self> {
        TagSet::new(pos_tags)
    }
}

impl From<TagSet> for Vec<String> {
    fn from(tags: TagSet) -> Self {
        tags.pos_tags
    }
}

impl TagSet {
    pub fn new<S: Into<String>>(pos_tags: impl IntoIterator<Item = S>) -> Result<Self> {
        let pos_tags: Vec<String> = pos_tags.into_iter().map(Into::into).collect();
        if pos_tags.is_empty() {
            return Err(Error::EmptyTagSet);
        }
        if pos_tags.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument("too many POS tags".into()));
        }
        let mut lookup = HashMap::with_capacity(pos_tags.len());
        for (i, tag) in pos_tags.iter().enumerate() {
            if tag.is_empty() || tag.chars().any(char::is_whitespace) || tag.contains('/') {
                return Err(Error::InvalidArgument(format!("malformed POS tag `{tag}`")));
            }
            if lookup.insert(tag.clone(), PosId(i as u16)).is_some() {
                return Err(Error::DuplicatePos(tag.clone()));
            }
        }
        Ok(TagSet { pos_tags, lookup })
    }

    /// Parses the tagset file format: one POS per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let tags = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim())
            .filter(|line| !line.is_empty())
            .map(str::to_owned);
        TagSet::new(tags)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TagSet::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for tag in &self.pos_tags {
            out.push_str(tag);
            out.push('\n');
        }
        out
    }

    pub fn pos_tags(&self) -> &[String] {
        &self.pos_tags
    }

    pub fn num_pos(&self) -> usize {
        self.pos_tags.len()
    }

    /// Number of joint tags, `4 × num_pos`.
    pub fn len(&self) -> usize {
        4 * self.pos_tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos_tags.is_empty()
    }

    pub fn pos_id(&self, tag: &str) -> Result<PosId> {
        self.lookup
            .get(tag)
            .copied()
            .ok_or_else(|| Error::UnknownPos(tag.to_owned()))
    }

    pub fn pos_name(&self, pos: PosId) -> &str {
        &self.pos_tags[pos.index()]
    }

    pub fn index(&self, tag: JointTag) -> usize {
        tag.boundary.ordinal() * self.num_pos() + tag.pos.index()
    }

    pub fn tag(&self, index: usize) -> JointTag {
        let n = self.num_pos();
        assert!(index < 4 * n, "joint tag index {index} out of range");
        JointTag::new(Boundary::ALL[index / n], PosId((index % n) as u16))
    }

    pub fn joint_tags(&self) -> impl Iterator<Item = JointTag> + '_ {
        (0..self.len()).map(|i| self.tag(i))
    }

    pub fn format_tag(&self, tag: JointTag) -> String {
        format!("{}-{}", tag.boundary.as_char(), self.pos_name(tag.pos))
    }

    /// Parses `B-n` style joint tags.
    pub fn parse_tag(&self, text: &str) -> Result<JointTag> {
        let (b, pos) = text
            .split_once('-')
            .ok_or_else(|| Error::InvalidArgument(format!("malformed joint tag `{text}`")))?;
        let boundary = match b {
            "B" => Boundary::B,
            "M" => Boundary::M,
            "E" => Boundary::E,
            "S" => Boundary::S,
            _ => return Err(Error::InvalidArgument(format!("malformed joint tag `{text}`"))),
        };
        Ok(JointTag::new(boundary, self.pos_id(pos)?))
    }

    /// BMES-encodes `(surface, pos)` words into one label per character.
    pub fn encode_words<S: AsRef<str>, P: AsRef<str>>(&self, words: &[(S, P)]) -> Result<LabelSequence> {
        let mut labels = Vec::new();
        for (i, (surface, pos)) in words.iter().enumerate() {
            let len = surface.as_ref().chars().count();
            if len == 0 {
                return Err(Error::EmptyWord(i));
            }
            push_word(&mut labels, len, self.pos_id(pos.as_ref())?);
        }
        Ok(labels)
    }

    pub fn format_labels(&self, labels: &[JointTag]) -> Vec<String> {
        labels.iter().map(|&t| self.format_tag(t)).collect()
    }
}

impl fmt::Display for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pos_tags.join(" "))
    }
}

fn push_word(labels: &mut LabelSequence, len: usize, pos: PosId) {
    if len == 1 {
        labels.push(JointTag::new(Boundary::S, pos));
        return;
    }
    labels.push(JointTag::new(Boundary::B, pos));
    for _ in 1..len - 1 {
        labels.push(JointTag::new(Boundary::M, pos));
    }
    labels.push(JointTag::new(Boundary::E, pos));
}

/// Labels for a span list. The spans must tile `[0, n)`.
pub fn spans_to_labels(spans: &[WordSpan], n: usize) -> Result<LabelSequence> {
    check_tiling(spans, n)?;
    let mut labels = Vec::with_capacity(n);
    for span in spans {
        push_word(&mut labels, span.len(), span.pos);
    }
    Ok(labels)
}

/// Whether `next` may follow `prev`; `None` is the sentence start/end sentinel.
pub fn is_legal(prev: Option<JointTag>, next: Option<JointTag>) -> bool {
    match (prev, next) {
        (None, None) => true,
        (None, Some(next)) => next.boundary.opens(),
        (Some(prev), None) => prev.boundary.closes(),
        (Some(prev), Some(next)) => match prev.boundary {
            Boundary::B | Boundary::M => {
                matches!(next.boundary, Boundary::M | Boundary::E) && next.pos == prev.pos
            }
            Boundary::E | Boundary::S => next.boundary.opens(),
        },
    }
}

/// Whether every adjacent pair, including both sentinels, is legal.
pub fn sequence_is_legal(labels: &[JointTag]) -> bool {
    let mut prev = None;
    for &tag in labels {
        if !is_legal(prev, Some(tag)) {
            return false;
        }
        prev = Some(tag);
    }
    is_legal(prev, None)
}

/// Recovers words from labels, repairing illegal transitions.
///
/// A word is closed before any transition that cannot continue it, and takes
/// the POS of its first character.
pub fn decode_labels(labels: &[JointTag]) -> Vec<WordSpan> {
    let mut words = Vec::new();
    let mut open: Option<WordSpan> = None;
    for (i, &tag) in labels.iter().enumerate() {
        let continues = match open {
            Some(word) => {
                matches!(tag.boundary, Boundary::M | Boundary::E)
                    && tag.pos == word.pos
                    && is_legal(Some(labels[i - 1]), Some(tag))
            }
            None => false,
        };
        if continues {
            if let Some(word) = open.as_mut() {
                word.end = i + 1;
            }
        } else {
            if let Some(word) = open.take() {
                words.push(word);
            }
            open = Some(WordSpan::new(i, i + 1, tag.pos));
        }
        if tag.boundary.closes() {
            if let Some(word) = open.take() {
                words.push(word);
            }
        }
    }
    if let Some(word) = open {
        words.push(word);
    }
    words
}

/// Checks that sorted spans cover `[0, n)` with no gap or overlap.
pub fn check_tiling(spans: &[WordSpan], n: usize) -> Result<()> {
    let mut cursor = 0;
    for span in spans {
        if span.start != cursor {
            return Err(Error::NonTiling {
                len: n,
                reason: format!("expected a word starting at {cursor}, found {}", span.start),
            });
        }
        if span.end <= span.start {
            return Err(Error::NonTiling {
                len: n,
                reason: format!("empty word at {}", span.start),
            });
        }
        cursor = span.end;
    }
    if cursor != n {
        return Err(Error::NonTiling {
            len: n,
            reason: format!("coverage ends at {cursor}"),
        });
    }
    Ok(())
}
