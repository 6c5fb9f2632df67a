//! Parsers for model replies. They never guess: anything that does not yield
//! a value is a [`ParseFailure`], which callers record as missing.

use std::sync::OnceLock;

use calibkit_core::Candidate;
use regex::Regex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("could not parse {what} from {text:?}")]
pub struct ParseFailure {
    pub what: &'static str,
    pub text: String,
}

impl ParseFailure {
    fn new(what: &'static str, text: &str) -> Self {
        let mut text = text.to_string();
        if text.len() > 200 {
            let cut = (0..=200)
                .rev()
                .find(|&i| text.is_char_boundary(i))
                .unwrap_or(0);
            text.truncate(cut);
        }
        ParseFailure { what, text }
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)(\d+(?:\.\d+)?|\.\d+)(?:\s*(?:/|out\s+of)\s*(\d+(?:\.\d+)?))?(\s*(?:%|percent\b|per\s+cent\b))?",
        )
        .expect("valid regex")
    })
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:confidence|confident|conf|certainty|probability|likelihood)(?:[ \t_]*\d+[ \t]*[:=]|\b)")
            .expect("valid regex")
    })
}

fn answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:answer|candidate)(?:[ \t_]*\d+[ \t]*[:=\-–]?|\b[ \t]*[:=\-–]?)")
            .expect("valid regex")
    })
}

/// Scale descriptions such as "(0-1)" or "between 0 and 1", which are not values.
fn scale_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:\bbetween\s+)?\b0\s*(?:-|–|to|and)\s*(?:1|10|100)\b(?:\s*%)?")
            .expect("valid regex")
    })
}

/// A number found in text, with its byte span.
#[derive(Debug, Clone, Copy)]
struct Num {
    start: usize,
    end: usize,
    /// Mapped to `[0, 1]`, or `None` when out of range.
    value: Option<f64>,
}

fn map_value(v: f64, denominator: Option<f64>, percent: bool) -> Option<f64> {
    let v = match denominator {
        Some(d) if [1.0, 10.0, 100.0].contains(&d) && v <= d => v / d,
        Some(_) => return None,
        None if percent => {
            if v > 100.0 {
                return None;
            }
            v / 100.0
        }
        None if v <= 1.0 => v,
        None if v <= 100.0 => v / 100.0,
        None => return None,
    };
    (0.0..=1.0).contains(&v).then_some(v)
}

/// Numbers not glued to words: "top-3", "F1" and "v2.0b" do not count.
fn numbers(text: &str) -> Vec<Num> {
    let masked = scale_re().replace_all(text, |c: &regex::Captures| " ".repeat(c[0].len()));
    let text = masked.as_ref();
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    for caps in number_re().captures_iter(text) {
        let m = caps.get(0).expect("match");
        let (start, end) = (m.start(), m.end());
        let before = text[..start].chars().next_back();
        let glued_before = match before {
            Some(c) if c.is_alphanumeric() || c == '.' || c == '_' => true,
            Some('-') => text[..start - 1]
                .chars()
                .next_back()
                .is_some_and(char::is_alphanumeric),
            Some(',') => text[..start - 1]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_ascii_digit()),
            _ => false,
        };
        let mut after = text[end..].chars();
        let next = after.next();
        let glued_after = (next.is_some_and(|c| c.is_alphanumeric() || c == '_')
            && !bytes[end - 1].is_ascii_alphabetic())
            || (next == Some(',') && after.next().is_some_and(|c| c.is_ascii_digit()));
        if glued_before || glued_after {
            continue;
        }
        // A minus sign right before the digits makes the value negative.
        let negative = before == Some('-')
            && !text[..start - 1]
                .chars()
                .next_back()
                .is_some_and(char::is_alphanumeric);
        let v: f64 = caps[1].parse().expect("digits");
        let denominator = caps
            .get(2)
            .map(|d| d.as_str().parse::<f64>().expect("digits"));
        let percent = caps.get(3).is_some();
        out.push(Num {
            start,
            end,
            value: if negative {
                None
            } else {
                map_value(v, denominator, percent)
            },
        });
    }
    out
}

fn line_bounds(text: &str, pos: usize) -> (usize, usize) {
    let start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let end = text[pos..].find('\n').map_or(text.len(), |i| pos + i);
    (start, end)
}

/// Confidence in `[0, 1]` from a free-text reply.
///
/// Each confidence marker ("Confidence:", "confident", ...) claims the first
/// number after it on the same line; the last claimed number wins. Without
/// markers, the last standalone number outside "Answer:" lines is used.
/// Values in `(1, 100]`, and numbers with a percent sign, are percentages;
/// "7/10" and "7 out of 10" are fractions.
pub fn parse_verbalized(text: &str) -> Result<f64, ParseFailure> {
    let nums = numbers(text);
    let markers: Vec<(usize, usize)> = marker_re()
        .find_iter(text)
        .map(|m| (m.start(), m.end()))
        .collect();
    let mut claimed = None;
    for (i, &(_, mend)) in markers.iter().enumerate() {
        let (_, line_end) = line_bounds(text, mend);
        let limit = markers
            .get(i + 1)
            .map_or(line_end, |&(s, _)| s.min(line_end));
        if let Some(n) = nums.iter().find(|n| n.start >= mend && n.start < limit) {
            claimed = Some(*n);
        }
    }
    if let Some(n) = claimed {
        return n.value.ok_or_else(|| ParseFailure::new("confidence", text));
    }
    let answer_lines: Vec<(usize, usize)> = answer_re()
        .find_iter(text)
        .map(|m| line_bounds(text, m.start()))
        .filter(|&(s, _)| text[s..].trim_start().to_lowercase().starts_with("answer"))
        .collect();
    nums.iter()
        .rev()
        .filter(|n| {
            !answer_lines
                .iter()
                .any(|&(s, e)| n.start >= s && n.start < e)
        })
        .find_map(|n| n.value)
        .ok_or_else(|| ParseFailure::new("confidence", text))
}

/// A verdict word: true/false, yes/no, correct/incorrect.
pub fn parse_verdict(text: &str) -> Result<bool, ParseFailure> {
    const LABELS: [&str; 5] = ["answer", "output", "verdict", "final", "response"];
    let lowered = text
        .to_lowercase()
        .replace("true/false", " ")
        .replace("true or false", " ");
    let mut words: Vec<String> = Vec::new();
    let mut negate = false;
    for w in lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if w == "not" {
            negate = true;
            continue;
        }
        let w = match (negate, w) {
            (true, "true") => "false",
            (true, "false") => "true",
            _ => w,
        };
        negate = false;
        words.push(w.to_string());
    }
    let classify = |w: &str| match w {
        "true" | "yes" | "correct" => Some(true),
        "false" | "no" | "incorrect" => Some(false),
        _ => None,
    };
    if let Some(first) = words.iter().find(|w| !LABELS.contains(&w.as_str())) {
        if let Some(v) = classify(first) {
            return Ok(v);
        }
    }
    let has_true = words.iter().any(|w| w == "true");
    let has_false = words.iter().any(|w| w == "false");
    match (has_true, has_false) {
        (true, false) => Ok(true),
        (false, true) => Ok(false),
        _ => Err(ParseFailure::new("verdict", text)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopkParse {
    pub pairs: Vec<Candidate>,
    /// Non-empty lines that did not yield a pair.
    pub skipped: usize,
}

fn clean_answer(s: &str) -> String {
    s.trim_matches(|c: char| c.is_whitespace() || ",;|:=-–—()[]\"'*`".contains(c))
        .to_string()
}

fn list_prefix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:[-*•]\s+|\(?\d{1,2}[.)]\s*|#\d+\s*[:.]?\s*)").expect("valid regex")
    })
}

fn parse_topk_line(line: &str) -> Option<Candidate> {
    let line = list_prefix_re().replace(line, "");
    let line = line.trim();
    if line.is_empty() {
        return None;
    }
    let nums = numbers(line);
    let conf_marker = marker_re().find(line);
    let answer_marker = answer_re().find(line);
    let (answer, conf) = match (answer_marker, conf_marker) {
        (Some(a), Some(c)) if a.start() < c.start() => {
            let conf = nums.iter().find(|n| n.start >= c.end())?;
            (clean_answer(&line[a.end()..c.start()]), conf.value?)
        }
        (Some(a), Some(c)) => {
            let conf = nums
                .iter()
                .find(|n| n.start >= c.end() && n.start < a.start())?;
            (clean_answer(&line[a.end()..]), conf.value?)
        }
        (None, Some(c)) => {
            let conf = nums.iter().find(|n| n.start >= c.end())?;
            (clean_answer(&line[..c.start()]), conf.value?)
        }
        (Some(a), None) => {
            // "Answer: X (0.6)" or "Answer: X - 60%": trailing number.
            let last = nums.last().filter(|n| n.start > a.end())?;
            let tail =
                line[last.end..].trim_matches(|c: char| c.is_whitespace() || ").".contains(c));
            if !tail.is_empty() {
                return None;
            }
            (clean_answer(&line[a.end()..last.start]), last.value?)
        }
        (None, None) => {
            let last = nums.last()?;
            let tail =
                line[last.end..].trim_matches(|c: char| c.is_whitespace() || ").".contains(c));
            let head = &line[..last.start];
            let separated = head.trim_end().ends_with(|c: char| ":-–(,|=".contains(c));
            if !tail.is_empty() || !separated {
                return None;
            }
            (clean_answer(head), last.value?)
        }
    };
    (!answer.is_empty()).then_some(Candidate {
        candidate: answer,
        conf,
    })
}

/// Up to `k` (answer, confidence) pairs in listed order.
pub fn parse_topk(text: &str, k: usize) -> Result<TopkParse, ParseFailure> {
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if pairs.len() == k.max(1) {
            break;
        }
        match parse_topk_line(line) {
            Some(c) => pairs.push(c),
            None => skipped += 1,
        }
    }
    if pairs.is_empty() {
        return Err(ParseFailure::new("top-k list", text));
    }
    Ok(TopkParse { pairs, skipped })
}
