//! Annotated corpus I/O in the slash and character-column formats, and
//! splitting of over-long sentences.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tagset::{decode_labels, sequence_is_legal, spans_to_labels, Boundary, JointTag, TagSet, WordSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// `word/pos` tokens separated by single spaces, one sentence per line.
    #[default]
    Slash,
    /// `char<TAB>joint-tag` lines, sentences separated by blank lines.
    CharColumn,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slash" => Ok(CorpusFormat::Slash),
            "char-column" | "column" => Ok(CorpusFormat::CharColumn),
            _ => Err(Error::InvalidArgument(format!(
                "unknown corpus format `{s}` (expected slash or char-column)"
            ))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Slash => "slash",
            CorpusFormat::CharColumn => "char-column",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub words: Vec<WordSpan>,
    /// 1-based line where the sentence starts in its source.
    pub line: usize,
}

impl Sentence {
    pub fn new(text: impl Into<String>, words: Vec<WordSpan>) -> Result<Self> {
        let text = text.into();
        crate::tagset::check_tiling(&words, text.chars().count())?;
        Ok(Sentence { text, words, line: 0 })
    }

    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }

    pub fn len(&self) -> usize {
        self.words.last().map_or(0, |w| w.end)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn labels(&self) -> Vec<JointTag> {
        spans_to_labels(&self.words, self.len()).expect("sentence spans tile")
    }

    pub fn label_indices(&self, tagset: &TagSet) -> Vec<usize> {
        self.labels().into_iter().map(|t| tagset.index(t)).collect()
    }

    pub fn to_slash(&self, tagset: &TagSet) -> String {
        format_slash(&self.chars(), &self.words, tagset)
    }
}

/// `word/pos word/pos ...` for spans over `chars`.
pub fn format_slash(chars: &[char], words: &[WordSpan], tagset: &TagSet) -> String {
    let mut line = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.extend(&chars[w.start..w.end]);
        line.push('/');
        line.push_str(tagset.pos_name(w.pos));
    }
    line
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotatedCorpus {
    pub sentences: Vec<Sentence>,
    pub source: Option<PathBuf>,
}

impl AnnotatedCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.text.as_str())
    }

    /// Parses `text`. With `max_len`, longer sentences are split (see
    /// [`split_points`]); pieces keep the line number of their sentence.
    pub fn parse(text: &str, format: CorpusFormat, tagset: &TagSet, max_len: Option<usize>) -> Result<Self> {
        Self::parse_named(text, format, tagset, max_len, Path::new("<input>"))
    }

    fn parse_named(
        text: &str,
        format: CorpusFormat,
        tagset: &TagSet,
        max_len: Option<usize>,
        path: &Path,
    ) -> Result<Self> {
        let raw = match format {
            CorpusFormat::Slash => parse_slash(text, tagset, path)?,
            CorpusFormat::CharColumn => parse_columns(text, tagset, path)?,
        };
        let sentences = match max_len {
            Some(limit) => raw.into_iter().flat_map(|s| split_sentence(s, limit)).collect(),
            None => raw,
        };
        Ok(AnnotatedCorpus {
            sentences,
            source: None,
        })
    }

    pub fn load(path: impl AsRef<Path>, format: CorpusFormat, tagset: &TagSet, max_len: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut corpus = Self::parse_named(&text, format, tagset, max_len, path)?;
        corpus.source = Some(path.to_owned());
        Ok(corpus)
    }

    pub fn to_text(&self, format: CorpusFormat, tagset: &TagSet) -> String {
        let mut out = String::new();
        for (i, s) in self.sentences.iter().enumerate() {
            match format {
                CorpusFormat::Slash => {
                    out.push_str(&s.to_slash(tagset));
                    out.push('\n');
                }
                CorpusFormat::CharColumn => {
                    if i > 0 {
                        out.push('\n');
                    }
                    for (c, tag) in s.text.chars().zip(s.labels()) {
                        let _ = writeln!(out, "{c}\t{}", tagset.format_tag(tag));
                    }
                }
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>, format: CorpusFormat, tagset: &TagSet) -> Result<()> {
        std::fs::write(path, self.to_text(format, tagset))?;
        Ok(())
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat, tagset: &TagSet) -> Result<AnnotatedCorpus> {
    AnnotatedCorpus::load(path, format, tagset, None)
}

fn parse_slash(text: &str, tagset: &TagSet, path: &Path) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut sentence = String::new();
        let mut words = Vec::new();
        let mut start = 0;
        for token in line.split(' ') {
            let (word, pos) = token
                .rsplit_once('/')
                .ok_or_else(|| Error::parse(path, line_no, format!("token `{token}` has no `/pos`")))?;
            if word.is_empty() {
                return Err(Error::parse(path, line_no, format!("empty word in token `{token}`")));
            }
            let pos = tagset
                .pos_id(pos)
                .map_err(|_| Error::parse(path, line_no, format!("unknown POS tag `{pos}`")))?;
            let len = word.chars().count();
            words.push(WordSpan::new(start, start + len, pos));
            sentence.push_str(word);
            start += len;
        }
        sentences.push(Sentence {
            text: sentence,
            words,
            line: line_no,
        });
    }
    Ok(sentences)
}

fn parse_columns(text: &str, tagset: &TagSet, path: &Path) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut chars = String::new();
    let mut labels = Vec::new();
    let mut first_line = 0;
    let mut flush = |chars: &mut String, labels: &mut Vec<JointTag>, first_line: usize| -> Result<()> {
        if labels.is_empty() {
            return Ok(());
        }
        if !sequence_is_legal(labels) {
            return Err(Error::parse(path, first_line, "illegal BMES sequence"));
        }
        sentences.push(Sentence {
            text: std::mem::take(chars),
            words: decode_labels(labels),
            line: first_line,
        });
        labels.clear();
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            flush(&mut chars, &mut labels, first_line)?;
            continue;
        }
        let (c, tag) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line_no, "expected `char<TAB>tag`"))?;
        let mut it = c.chars();
        let ch = match (it.next(), it.next()) {
            (Some(ch), None) => ch,
            _ => return Err(Error::parse(path, line_no, format!("`{c}` is not a single character"))),
        };
        let tag = tagset
            .parse_tag(tag)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if labels.is_empty() {
            first_line = line_no;
        }
        chars.push(ch);
        labels.push(tag);
    }
    flush(&mut chars, &mut labels, first_line)?;
    Ok(sentences)
}

/// POS tags used in `texts`, in order of first appearance. Malformed tokens
/// are skipped here and reported by the parser.
pub fn infer_tagset<'a>(texts: impl IntoIterator<Item = &'a str>, format: CorpusFormat) -> Result<TagSet> {
    let mut tags: Vec<String> = Vec::new();
    for text in texts {
        for line in text.lines() {
            let found: Vec<&str> = match format {
                CorpusFormat::Slash => line
                    .split(' ')
                    .filter_map(|t| t.rsplit_once('/').map(|(_, p)| p))
                    .collect(),
                CorpusFormat::CharColumn => line
                    .split_once('\t')
                    .and_then(|(_, tag)| tag.split_once('-'))
                    .map(|(_, p)| p)
                    .into_iter()
                    .collect(),
            };
            for pos in found {
                if !pos.is_empty() && !tags.iter().any(|t| t == pos) {
                    tags.push(pos.to_owned());
                }
            }
        }
    }
    TagSet::new(tags)
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '，' | '。' | '、' | '；' | '：' | '？' | '！' | '「' | '」' | '『' | '』' | '（' | '）' | '《' | '》' | '“'
                | '”' | '‘' | '’' | '…' | '—' | '·'
        )
}

/// Cut points that split `chars` into pieces of at most `limit` characters.
///
/// Each piece ends after the last punctuation mark that keeps it within the
/// limit, or exactly at the limit if there is none. `allowed(i)` restricts
/// cuts to positions where a piece may end (word boundaries); a word longer
/// than the limit is cut inside.
pub fn split_points(chars: &[char], limit: usize, allowed: impl Fn(usize) -> bool) -> Vec<usize> {
    assert!(limit > 0, "split limit must be positive");
    let mut cuts = Vec::new();
    let mut start = 0;
    while chars.len() - start > limit {
        let window = start + 1..=start + limit;
        let cut = window
            .clone()
            .rev()
            .find(|&i| allowed(i) && is_punctuation(chars[i - 1]))
            .or_else(|| window.clone().rev().find(|&i| allowed(i)))
            .unwrap_or(start + limit);
        cuts.push(cut);
        start = cut;
    }
    cuts
}

/// Splits raw text into pieces of at most `limit` characters; returns the
/// character offset of each piece alongside it.
pub fn split_text(chars: &[char], limit: usize) -> Vec<(usize, &[char])> {
    let mut out = Vec::new();
    let mut start = 0;
    for cut in split_points(chars, limit, |_| true).into_iter().chain([chars.len()]) {
        out.push((start, &chars[start..cut]));
        start = cut;
    }
    out
}

fn split_sentence(sentence: Sentence, limit: usize) -> Vec<Sentence> {
    let chars = sentence.chars();
    if chars.len() <= limit {
        return vec![sentence];
    }
    let ends: std::collections::HashSet<usize> = sentence.words.iter().map(|w| w.end).collect();
    let cuts = split_points(&chars, limit, |i| ends.contains(&i));
    let labels = sentence.labels();
    let mut out = Vec::new();
    let mut start = 0;
    for cut in cuts.into_iter().chain([chars.len()]) {
        let mut piece: Vec<JointTag> = labels[start..cut].to_vec();
        // A cut inside a word closes the left half and opens the right one.
        if let Some(first) = piece.first_mut() {
            first.boundary = match first.boundary {
                Boundary::M => Boundary::B,
                Boundary::E => Boundary::S,
                b => b,
            };
        }
        if let Some(last) = piece.last_mut() {
            last.boundary = match last.boundary {
                Boundary::B => Boundary::S,
                Boundary::M => Boundary::E,
                b => b,
            };
        }
        out.push(Sentence {
            text: chars[start..cut].iter().collect(),
            words: decode_labels(&piece),
            line: sentence.line,
        });
        start = cut;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagset::PosId;

    fn tags() -> TagSet {
        TagSet::new(["n", "v", "w"]).unwrap()
    }

    #[test]
    fn slash_line() {
        let c = AnnotatedCorpus::parse("天下/n 定/v\n", CorpusFormat::Slash, &tags(), None).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences[0].text, "天下定");
        assert_eq!(
            c.sentences[0].words,
            [WordSpan::new(0, 2, PosId(0)), WordSpan::new(2, 3, PosId(1))]
        );
    }

    #[test]
    fn column_blank_line_separates() {
        let text = "天\tB-n\n下\tE-n\n\n定\tS-v\n";
        let c = AnnotatedCorpus::parse(text, CorpusFormat::CharColumn, &tags(), None).unwrap();
        assert_eq!(c.texts().collect::<Vec<_>>(), ["天下", "定"]);
        assert_eq!(c.sentences[1].line, 4);
    }

    #[test]
    fn errors_name_the_line() {
        let err = AnnotatedCorpus::parse("天/n\n天下 定/v\n", CorpusFormat::Slash, &tags(), None).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
        let err = AnnotatedCorpus::parse("天/x\n", CorpusFormat::Slash, &tags(), None).unwrap_err();
        assert!(err.to_string().contains("unknown POS"), "{err}");
        let err = AnnotatedCorpus::parse("/n\n", CorpusFormat::Slash, &tags(), None).unwrap_err();
        assert!(err.to_string().contains("empty word"), "{err}");
        let err = AnnotatedCorpus::parse("天\tB-n\n\n", CorpusFormat::CharColumn, &tags(), None).unwrap_err();
        assert!(err.to_string().contains("illegal"), "{err}");
    }

    #[test]
    fn long_sentence_splits_after_punctuation() {
        let text = "天下/n ，/w 定/v 天下/n\n";
        let c = AnnotatedCorpus::parse(text, CorpusFormat::Slash, &tags(), Some(4)).unwrap();
        assert_eq!(c.texts().collect::<Vec<_>>(), ["天下，", "定天下"]);
        assert_eq!(c.sentences[1].words[0], WordSpan::new(0, 1, PosId(1)));
    }

    #[test]
    fn long_word_is_hard_split() {
        let c = AnnotatedCorpus::parse("天下定天/n\n", CorpusFormat::Slash, &tags(), Some(3)).unwrap();
        assert_eq!(c.texts().collect::<Vec<_>>(), ["天下定", "天"]);
        assert_eq!(c.sentences[1].words, [WordSpan::new(0, 1, PosId(0))]);
    }

    #[test]
    fn inferred_tagset_keeps_first_appearance_order() {
        let t = infer_tagset(["天下/v 定/n", "人/v 。/w"], CorpusFormat::Slash).unwrap();
        assert_eq!(t.pos_tags(), ["v", "n", "w"]);
        let t = infer_tagset(["天\tB-n\n下\tE-n\n\n定\tS-v\n"], CorpusFormat::CharColumn).unwrap();
        assert_eq!(t.pos_tags(), ["n", "v"]);
    }

    #[test]
    fn raw_split_offsets() {
        let chars: Vec<char> = "abc,defgh".chars().collect();
        let pieces = split_text(&chars, 5);
        let shape: Vec<(usize, String)> = pieces.iter().map(|(o, p)| (*o, p.iter().collect())).collect();
        assert_eq!(shape, [(0, "abc,".into()), (4, "defgh".into())]);
    }
}
