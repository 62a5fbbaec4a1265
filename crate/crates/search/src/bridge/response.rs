use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub ideas: String,
    pub program_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Malformed {
    #[error("no fenced code block")]
    NoCode,
    #[error("more than one fenced code block")]
    MultipleBlocks,
    #[error("code block is never closed")]
    Unterminated,
    #[error("code block is empty")]
    EmptyCode,
}

/// Splits a reply into its design ideas (text before the first fence) and
/// the single fenced program. A language tag after the opening fence is
/// ignored.
pub fn parse_response(text: &str) -> Result<ParsedResponse, Malformed> {
    let lines: Vec<&str> = text.lines().collect();
    let fences: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("```"))
        .map(|(i, _)| i)
        .collect();
    match fences.len() {
        0 => return Err(Malformed::NoCode),
        1 => return Err(Malformed::Unterminated),
        2 => {}
        3 => return Err(Malformed::Unterminated),
        _ => return Err(Malformed::MultipleBlocks),
    }
    let (open, close) = (fences[0], fences[1]);
    let program_text = lines[open + 1..close].join("\n").trim().to_string();
    if program_text.is_empty() {
        return Err(Malformed::EmptyCode);
    }
    Ok(ParsedResponse {
        ideas: lines[..open].join("\n").trim().to_string(),
        program_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_ideas_and_code() {
        let r = parse_response("Residual low-pass design.\n```\nmechanism m { ... }\n```").unwrap();
        assert_eq!(r.ideas, "Residual low-pass design.");
        assert_eq!(r.program_text, "mechanism m { ... }");
    }

    #[test]
    fn language_tag_and_trailing_text() {
        let r = parse_response("  idea \n\n```dsl\n\n  body\n```\nthanks").unwrap();
        assert_eq!(r.ideas, "idea");
        assert_eq!(r.program_text, "body");
    }

    #[test]
    fn malformed_cases() {
        assert_eq!(parse_response("prose only"), Err(Malformed::NoCode));
        assert_eq!(
            parse_response("a\n```\nx\n```\nb\n```\ny\n```"),
            Err(Malformed::MultipleBlocks)
        );
        assert_eq!(parse_response("```\nx"), Err(Malformed::Unterminated));
        assert_eq!(parse_response("i\n```\n  \n```"), Err(Malformed::EmptyCode));
    }
}
