use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Smoothing applied to the four modified n-gram precisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuSmoothing {
    /// Raw precisions; any zero n-gram precision zeroes the score.
    None,
    /// Laplace add-one on every precision's numerator and denominator.
    AddOne,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU-4 of `hyp` against a single reference, with a
/// brevity penalty for short hypotheses.
pub fn compute_bleu4(
    hyp: &[String],
    reference: &[String],
    smoothing: BleuSmoothing,
) -> Result<f64, CorpusError> {
    if hyp.is_empty() || reference.is_empty() {
        return Err(CorpusError::EmptyInput("compute_bleu4"));
    }
    let mut log_sum = 0.0;
    for n in 1..=4usize {
        let hyp_counts = ngram_counts(hyp, n);
        let ref_counts = ngram_counts(reference, n);
        let matches: usize = hyp_counts
            .iter()
            .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let total = hyp.len().saturating_sub(n - 1);
        let precision = match smoothing {
            BleuSmoothing::AddOne => (matches + 1) as f64 / (total + 1) as f64,
            BleuSmoothing::None => {
                if total == 0 || matches == 0 {
                    return Ok(0.0);
                }
                matches as f64 / total as f64
            }
        };
        log_sum += precision.ln();
    }
    let brevity = if hyp.len() < reference.len() {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    } else {
        1.0
    };
    Ok(brevity * (log_sum / 4.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_sentences_score_one() {
        let s = toks("what a great goal there");
        assert_eq!(compute_bleu4(&s, &s, BleuSmoothing::None).unwrap(), 1.0);
        // add-one keeps matches == totals, so smoothing leaves it at 1
        assert_eq!(compute_bleu4(&s, &s, BleuSmoothing::AddOne).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_long_sentences_stay_under_smoothing_floor() {
        // 30 disjoint tokens: the add-one floor is
        // ((1/31)(1/30)(1/29)(1/28))^(1/4) ≈ 0.034
        let hyp: Vec<String> = (0..30).map(|i| format!("a{i}")).collect();
        let reference: Vec<String> = (0..30).map(|i| format!("b{i}")).collect();
        let v = compute_bleu4(&hyp, &reference, BleuSmoothing::AddOne).unwrap();
        let floor = (1.0f64 / 31.0 * (1.0 / 30.0) * (1.0 / 29.0) * (1.0 / 28.0)).powf(0.25);
        assert!((v - floor).abs() < 1e-12, "v = {v}");
        assert!(v < 0.05);
        assert_eq!(
            compute_bleu4(&hyp, &reference, BleuSmoothing::None).unwrap(),
            0.0
        );
    }

    #[test]
    fn short_hypothesis_with_full_overlap_pays_brevity_penalty() {
        let hyp = toks("the quick brown fox");
        let reference = toks("the quick brown fox jumps");
        let v = compute_bleu4(&hyp, &reference, BleuSmoothing::None).unwrap();
        let bp = (1.0f64 - 5.0 / 4.0).exp();
        assert!(v < 1.0);
        assert!((v - bp).abs() < 1e-12, "v = {v}");
    }

    #[test]
    fn empty_inputs_are_contract_errors() {
        let s = toks("hi");
        assert!(compute_bleu4(&[], &s, BleuSmoothing::AddOne).is_err());
        assert!(compute_bleu4(&s, &[], BleuSmoothing::AddOne).is_err());
    }

    #[test]
    fn matches_independent_hand_count() {
        // hyp: "a b a b c", ref: "a b c a"
        // 1-grams: a:min(2,2)+b:min(2,1)+c:min(1,1)=4 of 5
        // 2-grams: hyp {ab:2, ba:1, bc:1}, ref {ab:1, bc:1, ca:1} → 2 of 4
        // 3-grams: hyp {aba, bab, abc}, ref {abc, bca, cab} → 1 of 3
        // 4-grams: no overlap → 0 of 2
        let hyp = toks("a b a b c");
        let reference = toks("a b c a");
        let p: [f64; 4] = [
            (4.0 + 1.0) / 6.0,
            (2.0 + 1.0) / 5.0,
            (1.0 + 1.0) / 4.0,
            (0.0 + 1.0) / 3.0,
        ];
        let expected: f64 = p.iter().map(|x| x.ln()).sum::<f64>() / 4.0;
        let expected = expected.exp(); // |hyp| > |ref| → BP = 1
        let v = compute_bleu4(&hyp, &reference, BleuSmoothing::AddOne).unwrap();
        assert!((v - expected).abs() < 1e-12, "v = {v}, expected {expected}");
    }
}
