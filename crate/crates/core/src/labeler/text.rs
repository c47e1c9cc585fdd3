use serde::Serialize;

use crate::error::Result;
use crate::labeler::{ConditionRules, CueScope};

/// Lowercases, collapses every whitespace run to one space and trims.
/// Punctuation is kept.
pub fn normalize_text(raw: &str) -> String {
    raw.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// [`normalize_text`] for raw bytes, rejecting invalid UTF-8.
pub fn normalize_bytes(raw: &[u8]) -> Result<String> {
    Ok(normalize_text(&String::from_utf8(raw.to_vec())?))
}

/// Half-open byte range in normalized text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mention {
    pub condition: String,
    pub span: Span,
    pub keyword: String,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric()
}

fn boundary_before(text: &[u8], i: usize) -> bool {
    i == 0 || !is_word_byte(text[i - 1])
}

fn boundary_at(text: &[u8], i: usize) -> bool {
    i >= text.len() || !is_word_byte(text[i])
}

/// Word-boundary matches of `phrase` in `text` at or after `from`, optionally
/// accepting a trailing `s`. Returns the end of the match at `i`, if any.
fn match_at(text: &str, i: usize, phrase: &str, plural: bool) -> Option<usize> {
    let bytes = text.as_bytes();
    if !boundary_before(bytes, i) || !text[i..].starts_with(phrase) {
        return None;
    }
    let end = i + phrase.len();
    if boundary_at(bytes, end) {
        return Some(end);
    }
    if plural && bytes.get(end) == Some(&b's') && boundary_at(bytes, end + 1) {
        return Some(end + 1);
    }
    None
}

/// All word-boundary occurrences of `phrase` inside `within`.
pub fn find_phrase(text: &str, phrase: &str, within: Span) -> Vec<Span> {
    let mut out = Vec::new();
    let slice = &text[within.start..within.end];
    let mut from = 0;
    while let Some(pos) = slice[from..].find(phrase) {
        let i = within.start + from + pos;
        let end = i + phrase.len();
        // Boundaries are judged against the full text, but the match must
        // lie inside the window.
        if end <= within.end && boundary_before(text.as_bytes(), i) && boundary_at(text.as_bytes(), end) {
            out.push(Span { start: i, end });
        }
        from += pos + slice[from + pos..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

/// Non-overlapping keyword matches scanned left to right, trying the longest
/// keyword first at each position.
pub fn find_mentions(text: &str, rules: &ConditionRules) -> Vec<Mention> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let hit = rules
            .keywords
            .iter()
            .find_map(|k| match_at(text, i, &k.phrase, k.plural).map(|end| (k, end)));
        match hit {
            Some((k, end)) => {
                out.push(Mention { condition: rules.name.clone(), span: Span { start: i, end }, keyword: k.phrase.clone() });
                i = end;
            }
            None => i += text[i..].chars().next().map_or(1, char::len_utf8),
        }
    }
    out
}

/// Sentence delimiters: `. ! ? ;`. A period between two digits ("3.5") is
/// a decimal point, not a delimiter.
fn is_delimiter(text: &[u8], i: usize) -> bool {
    match text[i] {
        b'!' | b'?' | b';' => true,
        b'.' => !(i > 0 && text[i - 1].is_ascii_digit() && text.get(i + 1).is_some_and(u8::is_ascii_digit)),
        _ => false,
    }
}

/// The sentence containing `mention` (through its closing delimiter), or a
/// `2w + 1` character span around the mention's center when the sentence is
/// longer than `2w`. The window always covers the mention.
pub fn context_window(text: &str, mention: &Span, w: usize) -> Span {
    let bytes = text.as_bytes();
    let mut start = (0..mention.start).rev().find(|&i| is_delimiter(bytes, i)).map_or(0, |i| i + 1);
    while start < mention.start && bytes[start] == b' ' {
        start += 1;
    }
    let end = (mention.end..bytes.len()).find(|&i| is_delimiter(bytes, i)).map_or(bytes.len(), |i| i + 1);
    if end - start <= 2 * w {
        return Span { start, end };
    }
    let width = 2 * w + 1;
    let center = (mention.start + mention.end) / 2;
    let mut lo = center.saturating_sub(w).max(start);
    let hi = (lo + width).min(end);
    lo = hi.saturating_sub(width).max(start);
    let mut lo = lo.min(mention.start);
    let mut hi = hi.max(mention.end);
    while !text.is_char_boundary(lo) {
        lo -= 1;
    }
    while !text.is_char_boundary(hi) {
        hi += 1;
    }
    Span { start: lo, end: hi }
}

/// Whether any cue occurs in `window` under `scope`. Cue matches that overlap
/// the mention itself are ignored.
pub fn has_cue(text: &str, window: Span, mention: &Span, cues: &[String], scope: CueScope) -> bool {
    cues.iter().any(|cue| {
        find_phrase(text, cue, window).iter().any(|hit| {
            !hit.overlaps(mention)
                && match scope {
                    CueScope::Window => true,
                    CueScope::PreMention => hit.end <= mention.start,
                }
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CueHits {
    pub negated: bool,
    pub uncertain: bool,
}

/// Negation and uncertainty cues for one mention.
pub fn detect_cues(text: &str, window: Span, mention: &Span, negation: &[String], uncertainty: &[String], scope: CueScope) -> CueHits {
    CueHits {
        negated: has_cue(text, window, mention, negation, scope),
        uncertain: has_cue(text, window, mention, uncertainty, scope),
    }
}

pub fn matches_any_pattern(text: &str, patterns: &[String]) -> bool {
    let all = Span { start: 0, end: text.len() };
    patterns.iter().any(|p| !find_phrase(text, p, all).is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::{Keyword, LabelerConfig};

    fn rules(words: &[(&str, bool)]) -> ConditionRules {
        let mut keywords: Vec<Keyword> = words.iter().map(|&(p, plural)| Keyword { phrase: p.into(), plural }).collect();
        keywords.sort_by_key(|k| std::cmp::Reverse(k.phrase.len()));
        ConditionRules { name: "c".into(), keywords }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("  Chest\n\nX-Ray.  "), "chest x-ray.");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("A\tB\r\nC"), "a b c");
        let once = normalize_text(" Mixed  CASE\ttext; ok ");
        assert_eq!(normalize_text(&once), once);
        assert!(normalize_bytes(&[0x66, 0xff]).is_err());
    }

    #[test]
    fn mentions_respect_word_boundaries() {
        let r = rules(&[("cardiomegaly", true)]);
        let m = find_mentions("mild cardiomegaly noted", &r);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].span, Span { start: 5, end: 17 });
        assert!(find_mentions("no change", &r).is_empty());
        assert!(find_mentions("precardiomegaly", &r).is_empty());
    }

    #[test]
    fn plural_tolerance_is_per_keyword() {
        let plural = rules(&[("effusion", true)]);
        let m = find_mentions("small effusions bilaterally", &plural);
        assert_eq!(m[0].span, Span { start: 6, end: 15 });
        let strict = rules(&[("effusion", false)]);
        assert!(find_mentions("small effusions bilaterally", &strict).is_empty());
        assert!(find_mentions("effusionss", &plural).is_empty());
    }

    #[test]
    fn longest_keyword_wins_and_matches_do_not_overlap() {
        let r = rules(&[("effusion", true), ("pleural effusion", true)]);
        let m = find_mentions("left pleural effusion and right effusion", &r);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].keyword, "pleural effusion");
        assert_eq!(m[1].keyword, "effusion");
    }

    #[test]
    fn sentence_window() {
        let text = "no pneumothorax. stable effusion.";
        let m = Span { start: 3, end: 15 };
        let w = context_window(text, &m, 120);
        assert_eq!(&text[w.start..w.end], "no pneumothorax.");
        let m2 = Span { start: 24, end: 32 };
        let w2 = context_window(text, &m2, 120);
        assert_eq!(&text[w2.start..w2.end], "stable effusion.");
        let single = "heart size normal";
        assert_eq!(context_window(single, &Span { start: 0, end: 5 }, 120), Span { start: 0, end: 17 });
    }

    #[test]
    fn decimal_points_do_not_split_sentences() {
        let text = "a 3.5 cm nodule is seen.";
        let m = Span { start: 9, end: 15 };
        assert_eq!(context_window(text, &m, 120), Span { start: 0, end: text.len() });
    }

    #[test]
    fn long_sentence_is_clamped() {
        let filler = "x".repeat(240);
        let text = format!("{filler} effusion {filler}");
        assert_eq!(text.len(), 490);
        let m = Span { start: 241, end: 249 };
        let w = context_window(&text, &m, 120);
        assert_eq!(w.len(), 241);
        assert!(w.start <= m.start && w.end >= m.end);
        assert_eq!(w.start, 245 - 120);

        let near_start = Span { start: 0, end: 3 };
        let w = context_window(&text, &near_start, 120);
        assert_eq!(w, Span { start: 0, end: 241 });
    }

    #[test]
    fn cue_detection() {
        let cfg = LabelerConfig::default_rules();
        let check = |text: &str, kw: &str| {
            let start = text.find(kw).unwrap();
            let m = Span { start, end: start + kw.len() };
            let w = context_window(text, &m, 120);
            detect_cues(text, w, &m, &cfg.negation_cues, &cfg.uncertainty_cues, CueScope::Window)
        };
        assert_eq!(check("no evidence of pneumothorax", "pneumothorax"), CueHits { negated: true, uncertain: false });
        assert_eq!(check("possible mediastinal widening", "mediastinal widening"), CueHits { negated: false, uncertain: true });
        assert_eq!(check("large pleural effusion", "pleural effusion"), CueHits { negated: false, uncertain: false });
        assert_eq!(check("pneumonia cannot be excluded.", "pneumonia"), CueHits { negated: false, uncertain: true });
        assert_eq!(check("normal heart. possible pneumonia.", "heart"), CueHits { negated: false, uncertain: false });
    }

    #[test]
    fn pre_mention_scope() {
        let text = "effusion, likely.";
        let m = Span { start: 0, end: 8 };
        let w = context_window(text, &m, 120);
        let cues = vec!["likely".to_string()];
        assert!(has_cue(text, w, &m, &cues, CueScope::Window));
        assert!(!has_cue(text, w, &m, &cues, CueScope::PreMention));
    }

    #[test]
    fn cues_need_word_boundaries() {
        let text = "cannot exclude nodule; nothing else.";
        let all = Span { start: 0, end: text.len() };
        assert!(find_phrase(text, "not", all).is_empty());
        assert!(find_phrase(text, "no", all).is_empty());
    }
}
