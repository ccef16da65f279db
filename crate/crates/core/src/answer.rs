//! Extraction of the predicted option from free-form generator output.
//!
//! Three tiers are tried in priority order:
//!
//! 1. **Marker** (`###Answer:`, `**Answer**:`, `Answer:`): the first marker
//!    followed within [`MARKER_WINDOW`] characters by a standalone option
//!    letter.
//! 2. **Prose** (`the correct answer is`, ...): the last prose cue followed
//!    by an option text or a standalone letter.
//! 3. **Option text**: the raw text mentions exactly one option's text.
//!
//! Matching is case-insensitive and ignores markdown symbols (`*`, `#`,
//! backtick). A letter past the last option (e.g. `F` with five options)
//! makes the whole extraction unparseable instead of wrapping.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{ExtractionMethod, MAX_OPTIONS};
use crate::text::{answer_words, is_article, is_markdown_symbol, normalize_for_match, normalize_token, word_sequence};

/// Maximum distance, in characters, between a marker and its letter.
pub const MARKER_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{0:?} is not an option letter (A-H)")]
pub struct OutOfRange(pub char);

/// `'A'`/`'a'` → 0 … `'H'`/`'h'` → 7.
pub fn letter_to_index(letter: char) -> Result<usize, OutOfRange> {
    let upper = letter.to_ascii_uppercase();
    if ('A'..='H').contains(&upper) {
        Ok((upper as u8 - b'A') as usize)
    } else {
        Err(OutOfRange(letter))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    MarkerPattern,
    ProsePattern,
    OptionTextMatch,
}

impl RuleKind {
    pub fn method(self) -> ExtractionMethod {
        match self {
            RuleKind::MarkerPattern => ExtractionMethod::MarkerPattern,
            RuleKind::ProsePattern => ExtractionMethod::ProsePattern,
            RuleKind::OptionTextMatch => ExtractionMethod::OptionTextMatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub rule_id: String,
    pub kind: RuleKind,
    /// Literal cue; unused for option-text rules.
    #[serde(default)]
    pub pattern: String,
}

impl ExtractionRule {
    fn new(rule_id: &str, kind: RuleKind, pattern: &str) -> Self {
        Self { rule_id: rule_id.into(), kind, pattern: pattern.into() }
    }
}

#[derive(Debug, Error)]
pub enum RuleTableError {
    #[error("reading rule table {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing rule table: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rule {0}: empty pattern")]
    EmptyPattern(String),
}

/// Ordered extraction rules. Rules are applied by kind priority; the order
/// within a kind does not affect the result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTable {
    #[serde(rename = "rule")]
    rules: Vec<ExtractionRule>,
}

impl Default for RuleTable {
    fn default() -> Self {
        use RuleKind::*;
        Self {
            rules: vec![
                ExtractionRule::new("marker-hash", MarkerPattern, "###Answer:"),
                ExtractionRule::new("marker-bold", MarkerPattern, "**Answer**:"),
                ExtractionRule::new("marker-plain", MarkerPattern, "Answer:"),
                ExtractionRule::new("prose-correct", ProsePattern, "the correct answer is"),
                ExtractionRule::new("prose-thus", ProsePattern, "thus, the correct answer"),
                ExtractionRule::new("prose-therefore", ProsePattern, "therefore, the correct answer"),
                ExtractionRule::new("option-text", OptionTextMatch, ""),
            ],
        }
    }
}

/// Result of answer extraction. `predicted_index` is `None` exactly when
/// `method` is [`ExtractionMethod::Unparseable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extraction {
    pub predicted_index: Option<usize>,
    pub method: ExtractionMethod,
}

impl Extraction {
    pub const UNPARSEABLE: Extraction = Extraction { predicted_index: None, method: ExtractionMethod::Unparseable };

    fn found(index: usize, kind: RuleKind) -> Self {
        Self { predicted_index: Some(index), method: kind.method() }
    }
}

/// Outcome of one tier: nothing fired, an in-range answer, or a letter that
/// does not name one of the options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Firing {
    None,
    Index(usize),
    BeyondOptions,
}

impl RuleTable {
    /// Parses the TOML rule format:
    ///
    /// ```toml
    /// [[rule]]
    /// rule_id = "marker-hash"
    /// kind = "marker_pattern"   # or prose_pattern, option_text_match
    /// pattern = "###Answer:"
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self, RuleTableError> {
        let table: RuleTable = toml::from_str(text)?;
        for r in &table.rules {
            if r.kind != RuleKind::OptionTextMatch && normalize_for_match(&r.pattern).is_empty() {
                return Err(RuleTableError::EmptyPattern(r.rule_id.clone()));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, RuleTableError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RuleTableError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("rule table serializes")
    }

    pub fn rules(&self) -> &[ExtractionRule] {
        &self.rules
    }

    fn patterns(&self, kind: RuleKind) -> Vec<Vec<char>> {
        let mut pats: Vec<Vec<char>> = self
            .rules
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| normalize_for_match(&r.pattern).chars().collect())
            .collect();
        pats.sort();
        pats.dedup();
        pats
    }

    fn has_kind(&self, kind: RuleKind) -> bool {
        self.rules.iter().any(|r| r.kind == kind)
    }

    /// Runs the tiers in priority order.
    pub fn extract(&self, raw_text: &str, options: &[String]) -> Extraction {
        assert!(!options.is_empty(), "extraction needs at least one option");
        let text = MatchText::new(raw_text);
        for kind in [RuleKind::MarkerPattern, RuleKind::ProsePattern, RuleKind::OptionTextMatch] {
            match self.fire(kind, &text, raw_text, options) {
                Firing::None => continue,
                Firing::Index(i) => return Extraction::found(i, kind),
                Firing::BeyondOptions => return Extraction::UNPARSEABLE,
            }
        }
        Extraction::UNPARSEABLE
    }

    /// Evaluates a single tier in isolation.
    pub fn fire_kind(&self, kind: RuleKind, raw_text: &str, options: &[String]) -> Firing {
        self.fire(kind, &MatchText::new(raw_text), raw_text, options)
    }

    fn fire(&self, kind: RuleKind, text: &MatchText, raw_text: &str, options: &[String]) -> Firing {
        if !self.has_kind(kind) {
            return Firing::None;
        }
        match kind {
            RuleKind::MarkerPattern => {
                let pats = self.patterns(kind);
                for pos in text.occurrences(&pats) {
                    if let Some(letter) = text.letter_after(pos, MARKER_WINDOW) {
                        return resolve_letter(letter, options.len());
                    }
                }
                Firing::None
            }
            RuleKind::ProsePattern => {
                let pats = self.patterns(kind);
                for pos in text.occurrences(&pats).into_iter().rev() {
                    if let Some(i) = text.option_after(pos, options) {
                        return Firing::Index(i);
                    }
                    if let Some(letter) = text.letter_after(pos, MARKER_WINDOW) {
                        return resolve_letter(letter, options.len());
                    }
                }
                Firing::None
            }
            RuleKind::OptionTextMatch => {
                let words = word_sequence(&crate::text::strip_markdown(raw_text));
                let hits: Vec<usize> = options
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| crate::text::contains_run(&words, &answer_words(o)))
                    .map(|(i, _)| i)
                    .collect();
                match hits.as_slice() {
                    [only] => Firing::Index(*only),
                    _ => Firing::None,
                }
            }
        }
    }
}

fn resolve_letter(letter: char, k: usize) -> Firing {
    match letter_to_index(letter) {
        Ok(i) if i < k.min(MAX_OPTIONS) => Firing::Index(i),
        _ => Firing::BeyondOptions,
    }
}

/// Extracts with the built-in rule table.
pub fn extract_predicted_answer(raw_text: &str, options: &[String]) -> Extraction {
    RuleTable::default().extract(raw_text, options)
}

/// Markdown-stripped, whitespace-collapsed text kept in two aligned forms:
/// original case and lowercase. Positions index both.
struct MatchText {
    orig: Vec<char>,
    lower: Vec<char>,
}

impl MatchText {
    fn new(raw: &str) -> Self {
        let mut orig = Vec::with_capacity(raw.len());
        let mut last_space = true;
        for c in raw.chars().filter(|c| !is_markdown_symbol(*c)) {
            if c.is_whitespace() {
                if !last_space {
                    orig.push(' ');
                }
                last_space = true;
            } else {
                orig.push(c);
                last_space = false;
            }
        }
        let lower = orig.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
        Self { orig, lower }
    }

    /// End positions of every occurrence of any pattern, in text order. A
    /// match must start at a word boundary.
    fn occurrences(&self, patterns: &[Vec<char>]) -> Vec<usize> {
        let mut ends = Vec::new();
        for start in 0..self.lower.len() {
            if start > 0 && self.lower[start - 1].is_alphanumeric() {
                continue;
            }
            // Longest pattern wins at a given start.
            let best =
                patterns.iter().filter(|p| !p.is_empty() && self.lower[start..].starts_with(p)).map(|p| p.len()).max();
            if let Some(len) = best {
                ends.push(start + len);
            }
        }
        ends
    }

    /// A standalone option letter whose position is within `window`
    /// characters of `pos`, optionally preceded by the word "option".
    fn letter_after(&self, pos: usize, window: usize) -> Option<char> {
        let mut i = pos;
        let limit = pos + window;
        loop {
            while i < self.lower.len() && !self.lower[i].is_alphanumeric() {
                i += 1;
            }
            if i >= self.lower.len() || i > limit {
                return None;
            }
            let word_end =
                (i..self.lower.len()).find(|&j| !self.lower[j].is_alphanumeric()).unwrap_or(self.lower.len());
            let word: String = self.lower[i..word_end].iter().collect();
            if word == "option" || word == "is" {
                i = word_end;
                continue;
            }
            if word_end - i != 1 || !self.orig[i].is_ascii_alphabetic() {
                return None;
            }
            let c = self.orig[i];
            // A lowercase "a" followed by another word reads as an article.
            if c == 'a' {
                let next = self.lower.get(word_end + 1);
                if self.lower.get(word_end) == Some(&' ') && next.is_some_and(|n| n.is_alphabetic()) {
                    return None;
                }
            }
            return letter_to_index(c).is_ok().then_some(c);
        }
    }

    /// Option whose text (leading articles ignored) begins right after `pos`,
    /// skipping filler such as "is", ":" or an article. Longest match wins.
    fn option_after(&self, pos: usize, options: &[String]) -> Option<usize> {
        let rest: String = self.orig[pos.min(self.orig.len())..].iter().collect();
        let mut words: Vec<String> =
            rest.split_whitespace().take(32).map(normalize_token).filter(|w| !w.is_empty()).collect();
        let skip = words.iter().take_while(|w| w.as_str() == "is" || is_article(w)).count();
        words.drain(..skip);
        // A single leading letter may label the option, e.g. "C: the closet".
        if words.first().is_some_and(|w| w.len() == 1 && letter_to_index(w.chars().next().unwrap()).is_ok()) {
            return None;
        }
        options
            .iter()
            .enumerate()
            .map(|(i, o)| (i, answer_words(o)))
            .filter(|(_, ow)| !ow.is_empty() && words.starts_with(ow))
            .max_by_key(|(i, ow)| (ow.len(), std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
    }
}
