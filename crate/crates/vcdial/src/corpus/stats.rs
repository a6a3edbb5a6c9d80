use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DialogueTriple;

/// English stopword list pinned with the repo so frequency reports are
/// stable across environments.
const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

fn stopwords() -> HashSet<&'static str> {
    STOPWORDS.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatsReport {
    pub instances: usize,
    /// Mean words per chat context (all utterances of a context combined).
    pub avg_context_words: f64,
    pub avg_response_words: f64,
    /// #utterances per context -> #instances with that many.
    pub context_utterance_histogram: BTreeMap<usize, usize>,
    /// Top 20 non-stopword tokens with counts, most frequent first.
    pub top_words: Vec<(String, usize)>,
}

/// Dataset-level statistics over built triples.
pub fn corpus_stats(triples: &[DialogueTriple]) -> StatsReport {
    let stop = stopwords();
    let mut context_words = 0usize;
    let mut response_words = 0usize;
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut word_counts: HashMap<String, usize> = HashMap::new();

    let countable = |t: &str| {
        t.chars().any(char::is_alphanumeric) && !t.starts_with('<') && !stop.contains(t)
    };

    for triple in triples {
        let ctx_len: usize = triple.chat.iter().map(|u| u.tokens.len()).sum();
        context_words += ctx_len;
        response_words += triple.response.len();
        *histogram.entry(triple.chat.len()).or_insert(0) += 1;
        for token in triple
            .chat
            .iter()
            .flat_map(|u| u.tokens.iter())
            .chain(triple.response.iter())
        {
            if countable(token) {
                *word_counts.entry(token.clone()).or_insert(0) += 1;
            }
        }
    }

    let mut top: Vec<(String, usize)> = word_counts.into_iter().collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top.truncate(20);

    let n = triples.len();
    StatsReport {
        instances: n,
        avg_context_words: if n == 0 { 0.0 } else { context_words as f64 / n as f64 },
        avg_response_words: if n == 0 { 0.0 } else { response_words as f64 / n as f64 },
        context_utterance_histogram: histogram,
        top_words: top,
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "instances: {}", self.instances)?;
        writeln!(f, "avg context words: {:.2}", self.avg_context_words)?;
        writeln!(f, "avg response words: {:.2}", self.avg_response_words)?;
        writeln!(f, "context size histogram:")?;
        for (utts, count) in &self.context_utterance_histogram {
            writeln!(f, "  {utts} utterances: {count}")?;
        }
        writeln!(f, "top words:")?;
        for (word, count) in &self.top_words {
            writeln!(f, "  {word}: {count}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SelectionReason, Utterance, VideoSegment};
    use crate::numerics::Tensor;

    fn triple(ctx: &[&str], resp: &str) -> DialogueTriple {
        let chat = ctx
            .iter()
            .enumerate()
            .map(|(i, text)| Utterance {
                speaker: format!("s{i}"),
                time: i as f64,
                tokens: text.split_whitespace().map(str::to_string).collect(),
            })
            .collect();
        DialogueTriple {
            video: VideoSegment {
                frames: Tensor::zeros(&[2, 4]),
                start: 0.0,
                end: 20.0,
            },
            chat,
            response: resp.split_whitespace().map(str::to_string).collect(),
            selection_reason: SelectionReason::BleuMatch,
            window_index: 0,
        }
    }

    #[test]
    fn single_triple_averages() {
        // context 10 words, response 5
        let t = triple(&["one two three four five", "six seven eight nine ten"], "r1 r2 r3 r4 r5");
        let report = corpus_stats(&[t]);
        assert_eq!(report.instances, 1);
        assert_eq!(report.avg_context_words, 10.0);
        assert_eq!(report.avg_response_words, 5.0);
    }

    #[test]
    fn empty_set_is_zeroed() {
        let report = corpus_stats(&[]);
        assert_eq!(report.instances, 0);
        assert_eq!(report.avg_context_words, 0.0);
        assert_eq!(report.avg_response_words, 0.0);
        assert!(report.context_utterance_histogram.is_empty());
        assert!(report.top_words.is_empty());
    }

    #[test]
    fn hand_counted_histogram_and_words() {
        let triples = vec![
            triple(&["goal goal", "wow"], "goal"),
            triple(&["kappa", "the goal"], "nice"),
            triple(&["one", "two", "three"], "goal"),
        ];
        let report = corpus_stats(&triples);
        assert_eq!(report.instances, 3);
        let hist: Vec<(usize, usize)> = report
            .context_utterance_histogram
            .iter()
            .map(|(k, v)| (*k, *v))
            .collect();
        assert_eq!(hist, vec![(2, 2), (3, 1)]);
        // "goal" appears 3 in contexts + 2 as responses = 5; "the" is a stopword
        assert_eq!(report.top_words[0], ("goal".to_string(), 5));
        assert!(!report.top_words.iter().any(|(w, _)| w == "the"));
    }
}
