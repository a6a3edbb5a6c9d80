use std::collections::HashSet;
use std::io::BufRead;

use serde::Deserialize;

use super::{CorpusError, Utterance};

/// Reserved tag substituted for user mentions.
pub const USER_TAG: &str = "<USER>";

#[derive(Deserialize)]
struct RawLine {
    time: f64,
    user: String,
    text: String,
}

/// Parsed log plus a count of out-of-order lines that had to be re-sorted.
#[derive(Debug)]
pub struct ChatLog {
    pub utterances: Vec<Utterance>,
    pub nonmonotonic_warnings: usize,
}

/// Lowercase and split on whitespace and punctuation. A leading `@`
/// sticks to the following word so mentions survive as single tokens;
/// emote words pass through unchanged. Apostrophes and underscores count
/// as word characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() || ch == '_' || ch == '\'' {
            cur.push(ch);
        } else if ch == '@' {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            cur.push('@');
        } else {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    // a bare "@" with no word attached is punctuation, keep it as-is
    tokens
}

fn has_url(text: &str) -> bool {
    let lower = text.to_lowercase();
    lower.contains("http://") || lower.contains("https://") || lower.contains("www.")
}

/// Parse a JSON-Lines chat log (`{"time": .., "user": .., "text": ..}` per
/// line). Utterances with hyperlinks are dropped, tokens are lowercased,
/// and the result is sorted by time; out-of-order input is counted, not
/// rejected.
pub fn parse_chat_log<R: BufRead>(reader: R) -> Result<ChatLog, CorpusError> {
    let mut utterances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if !raw.time.is_finite() || raw.time < 0.0 {
            return Err(CorpusError::Parse {
                line: i + 1,
                msg: format!("bad timestamp {}", raw.time),
            });
        }
        if has_url(&raw.text) {
            continue;
        }
        let tokens = tokenize(&raw.text);
        if tokens.is_empty() {
            continue;
        }
        utterances.push(Utterance {
            speaker: raw.user.to_lowercase(),
            time: raw.time,
            tokens,
        });
    }
    let nonmonotonic_warnings = utterances
        .windows(2)
        .filter(|w| w[1].time < w[0].time)
        .count();
    utterances.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));
    Ok(ChatLog {
        utterances,
        nonmonotonic_warnings,
    })
}

/// Replace any token equal to a known speaker id (bare or @-prefixed)
/// with the reserved user tag.
pub fn anonymize(utt: &Utterance, known_speakers: &HashSet<String>) -> Utterance {
    let tokens = utt
        .tokens
        .iter()
        .map(|t| {
            let bare = t.strip_prefix('@').unwrap_or(t);
            if known_speakers.contains(bare) {
                USER_TAG.to_string()
            } else {
                t.clone()
            }
        })
        .collect();
    Utterance {
        speaker: utt.speaker.clone(),
        time: utt.time,
        tokens,
    }
}
